//! Baselines: conventional NOMA without a surface, and half-/full-duplex
//! decode-and-forward relays.

use crate::channel::{NetworkConfig, PowerLaw};
use crate::error::{Error, Result};
use crate::montecarlo::{run_trials, simulate_grid, EstimateWithCI, MonteCarloConfig};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelayConfig {
    /// Loop-back self-interference coefficient of the full-duplex relay.
    pub eps_h: f64,
    /// Relay transmit power below the BS power, in dB.
    pub relay_power_offset_db: f64,
    /// Nakagami shape of every relay hop.
    pub m_relay: f64,
}

impl Default for RelayConfig {
    fn default() -> Self {
        Self {
            eps_h: 0.1,
            relay_power_offset_db: 10.0,
            m_relay: 3.0,
        }
    }
}

impl RelayConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps_h >= 0.0) {
            return Err(Error::InvalidConfig(format!("eps_h must be >= 0, got {}", self.eps_h)));
        }
        if !self.relay_power_offset_db.is_finite() {
            return Err(Error::InvalidConfig("relay_power_offset_db must be finite".into()));
        }
        if !(self.m_relay >= 0.5) {
            return Err(Error::InvalidConfig(format!("m_relay must be >= 0.5, got {}", self.m_relay)));
        }
        Ok(())
    }

    pub fn relay_power(&self, p: f64) -> f64 {
        p * 10f64.powf(-self.relay_power_offset_db / 10.0)
    }
}

/// Expected per-hop rates of both relay types and the resulting throughputs.
///
/// Each user's rate is the smaller of the expected relay-decoding rate and
/// the expected user-decoding rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelayEstimates {
    pub fd_relay_v: EstimateWithCI,
    pub fd_relay_w: EstimateWithCI,
    pub fd_user_v: EstimateWithCI,
    pub fd_user_w: EstimateWithCI,
    pub hd_relay_v: EstimateWithCI,
    pub hd_relay_w: EstimateWithCI,
    pub hd_user_v: EstimateWithCI,
    pub hd_user_w: EstimateWithCI,
}

impl RelayEstimates {
    pub fn fd_rate_v(&self) -> f64 {
        self.fd_relay_v.mean.min(self.fd_user_v.mean)
    }

    pub fn fd_rate_w(&self) -> f64 {
        self.fd_relay_w.mean.min(self.fd_user_w.mean)
    }

    pub fn hd_rate_v(&self) -> f64 {
        self.hd_relay_v.mean.min(self.hd_user_v.mean)
    }

    pub fn hd_rate_w(&self) -> f64 {
        self.hd_relay_w.mean.min(self.hd_user_w.mean)
    }

    pub fn fd_throughput(&self) -> f64 {
        self.fd_rate_v() + self.fd_rate_w()
    }

    pub fn hd_throughput(&self) -> f64 {
        self.hd_rate_v() + self.hd_rate_w()
    }
}

const RELAY_METRICS: usize = 8;

/// Simulates both relay networks at every folded BS power in `powers`.
///
/// The relay sits at the surface position: BS→relay spans `d1`, relay→user
/// spans `d2_v`/`d2_w`, all with exponent `alpha_l`; there are no BS-user
/// links. User W's hop is the strongest of `n_users` draws.
pub fn simulate_relays(
    config: &NetworkConfig,
    relay: &RelayConfig,
    mc: &MonteCarloConfig,
    powers: &[f64],
    sigma2: f64,
) -> Result<Vec<RelayEstimates>> {
    config.validate()?;
    relay.validate()?;
    if !(sigma2 > 0.0) {
        return Err(Error::Domain(format!("noise power must be > 0, got {sigma2}")));
    }
    let law = PowerLaw::nakagami(relay.m_relay)?;
    let l1 = config.d1.powf(-config.alpha_l);
    let lv = config.d2_v.powf(-config.alpha_l);
    let lw = config.d2_w.powf(-config.alpha_l);
    let (av, aw) = (config.a_v_sq, config.a_w_sq);
    let w = config.n_users;
    let log2_1p = |x: f64| x.ln_1p() / std::f64::consts::LN_2;
    let est = run_trials(mc, RELAY_METRICS * powers.len(), || (), |rng, _, out| {
        let g1 = law.sample(rng);
        let gv = law.sample(rng);
        let gw = (0..w).map(|_| law.sample(rng)).fold(f64::NEG_INFINITY, f64::max);
        for (slot, &p) in out.chunks_exact_mut(RELAY_METRICS).zip(powers) {
            let pd = relay.relay_power(p);
            let s1 = p * g1 * l1;
            let sv = pd * gv * lv;
            let sw = pd * gw * lw;
            let si = pd * relay.eps_h;
            // full duplex: relay decodes v then W under self-interference
            slot[0] = log2_1p(s1 * av / (s1 * aw + si + sigma2));
            slot[1] = log2_1p(s1 * aw / (si + sigma2));
            slot[2] = log2_1p(sv * av / (sv * aw + sigma2));
            slot[3] = log2_1p(sw * aw / sigma2);
            // half duplex: two slots, no self-interference
            slot[4] = 0.5 * log2_1p(s1 * av / (s1 * aw + sigma2));
            slot[5] = 0.5 * log2_1p(s1 * aw / sigma2);
            slot[6] = 0.5 * slot[2];
            slot[7] = 0.5 * slot[3];
        }
    })?;
    Ok(est
        .chunks_exact(RELAY_METRICS)
        .map(|c| RelayEstimates {
            fd_relay_v: c[0],
            fd_relay_w: c[1],
            fd_user_v: c[2],
            fd_user_w: c[3],
            hd_relay_v: c[4],
            hd_relay_w: c[5],
            hd_user_v: c[6],
            hd_user_w: c[7],
        })
        .collect())
}

/// Sum throughput of the full-duplex relay network.
pub fn fd_relay_throughput(
    config: &NetworkConfig,
    relay: &RelayConfig,
    mc: &MonteCarloConfig,
    p: f64,
    sigma2: f64,
) -> Result<f64> {
    Ok(simulate_relays(config, relay, mc, &[p], sigma2)?[0].fd_throughput())
}

/// Sum throughput of the half-duplex relay network.
pub fn hd_relay_throughput(
    config: &NetworkConfig,
    relay: &RelayConfig,
    mc: &MonteCarloConfig,
    p: f64,
    sigma2: f64,
) -> Result<f64> {
    Ok(simulate_relays(config, relay, mc, &[p], sigma2)?[0].hd_throughput())
}

/// The same network with the surface removed.
pub fn without_ris(config: &NetworkConfig) -> NetworkConfig {
    NetworkConfig {
        n_ris: 0,
        direct_link: true,
        ..config.clone()
    }
}

/// Direct-link-only NOMA rates `(rate_W, rate_v)`.
pub fn conventional_noma(
    config: &NetworkConfig,
    mc: &MonteCarloConfig,
    p: f64,
    sigma2: f64,
) -> Result<(EstimateWithCI, EstimateWithCI)> {
    let e = simulate_grid(&without_ris(config), mc, &[p], sigma2)?[0];
    Ok((e.rate_w, e.rate_v))
}
