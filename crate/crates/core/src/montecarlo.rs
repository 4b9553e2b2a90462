//! Monte Carlo verification engine.
//!
//! Trial `i` draws from its own ChaCha stream (`set_stream(i)` on a generator
//! seeded with the master seed), and statistics are accumulated over fixed
//! blocks of trials that are merged in a fixed pairwise order. Estimates are
//! therefore bit-identical for any thread count or batch size.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::channel::{
    effective_gain_w, self_aligned_gain_v, weak_gain_under_strong_design, ChannelDraw, ChannelSampler, NetworkConfig,
    User,
};
use crate::error::{Error, Result};

/// Trials per accumulation block; part of the reproducibility contract.
pub const REDUCTION_BLOCK: u64 = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MonteCarloConfig {
    pub trials: u64,
    pub master_seed: u64,
    /// Minimum number of trials handed to one worker at a time.
    pub batch_size: u64,
}

impl Default for MonteCarloConfig {
    fn default() -> Self {
        Self::new(1_000_000, 0x5EED)
    }
}

impl MonteCarloConfig {
    pub fn new(trials: u64, master_seed: u64) -> Self {
        Self {
            trials,
            master_seed,
            batch_size: trials.clamp(1, 16 * REDUCTION_BLOCK),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials < 1 {
            return Err(Error::InvalidConfig("trials must be >= 1".into()));
        }
        if self.batch_size < 1 || self.batch_size > self.trials {
            return Err(Error::InvalidConfig(format!(
                "batch_size must lie in [1, trials], got {} with trials = {}",
                self.batch_size, self.trials
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimateWithCI {
    pub mean: f64,
    /// Sample standard deviation over `sqrt(trials)`.
    pub std_error: f64,
    pub trials: u64,
}

#[derive(Debug, Clone, Copy, Default)]
struct Welford {
    n: u64,
    mean: f64,
    m2: f64,
}

impl Welford {
    fn push(&mut self, x: f64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
    }

    fn merge(&self, other: &Welford) -> Welford {
        if self.n == 0 {
            return *other;
        }
        if other.n == 0 {
            return *self;
        }
        let n = self.n + other.n;
        let delta = other.mean - self.mean;
        let nf = n as f64;
        Welford {
            n,
            mean: self.mean + delta * other.n as f64 / nf,
            m2: self.m2 + other.m2 + delta * delta * self.n as f64 * other.n as f64 / nf,
        }
    }

    fn estimate(&self) -> EstimateWithCI {
        let std_error = if self.n > 1 {
            (self.m2.max(0.0) / (self.n - 1) as f64 / self.n as f64).sqrt()
        } else {
            0.0
        };
        EstimateWithCI {
            mean: self.mean,
            std_error,
            trials: self.n,
        }
    }
}

fn merge_tree(blocks: &[Vec<Welford>]) -> Vec<Welford> {
    match blocks.len() {
        0 => Vec::new(),
        1 => blocks[0].clone(),
        len => {
            let (l, r) = blocks.split_at(len / 2);
            let (l, r) = (merge_tree(l), merge_tree(r));
            l.iter().zip(&r).map(|(a, b)| a.merge(b)).collect()
        }
    }
}

/// Runs `mc.trials` independent trials and returns one estimate per metric.
///
/// `trial` receives the trial's own random stream, per-worker scratch state
/// and a slice of `n_metrics` outputs to fill.
pub fn run_trials<S, Init, Trial>(mc: &MonteCarloConfig, n_metrics: usize, init: Init, trial: Trial) -> Result<Vec<EstimateWithCI>>
where
    Init: Fn() -> S + Sync,
    Trial: Fn(&mut ChaCha8Rng, &mut S, &mut [f64]) + Sync,
{
    mc.validate()?;
    let base = ChaCha8Rng::seed_from_u64(mc.master_seed);
    let n_blocks = mc.trials.div_ceil(REDUCTION_BLOCK) as usize;
    let min_len = (mc.batch_size / REDUCTION_BLOCK).max(1) as usize;
    let blocks: Vec<Vec<Welford>> = (0..n_blocks)
        .into_par_iter()
        .with_min_len(min_len)
        .map_init(
            || (init(), vec![0.0; n_metrics]),
            |(scratch, out), b| {
                let mut acc = vec![Welford::default(); n_metrics];
                let start = b as u64 * REDUCTION_BLOCK;
                let end = (start + REDUCTION_BLOCK).min(mc.trials);
                for i in start..end {
                    let mut rng = base.clone();
                    rng.set_stream(i);
                    trial(&mut rng, scratch, out);
                    for (a, &x) in acc.iter_mut().zip(out.iter()) {
                        a.push(x);
                    }
                }
                acc
            },
        )
        .collect();
    Ok(merge_tree(&blocks).iter().map(Welford::estimate).collect())
}

/// Simulated link metrics at one transmit power.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkEstimates {
    pub outage_w: EstimateWithCI,
    pub rate_w: EstimateWithCI,
    pub rate_v: EstimateWithCI,
    pub oma_w: EstimateWithCI,
    pub oma_v: EstimateWithCI,
    pub sum_rate: EstimateWithCI,
    pub oma_sum_rate: EstimateWithCI,
}

const LINK_METRICS: usize = 7;

struct LinkScratch {
    candidates: Vec<ChannelDraw>,
}

/// Gains of one trial: the strongest of `W` candidates becomes user W.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialGains {
    pub strong: f64,
    pub weak: f64,
    pub weak_self_aligned: f64,
}

fn draw_trial_gains(
    config: &NetworkConfig,
    sampler: &ChannelSampler,
    rng: &mut ChaCha8Rng,
    scratch: &mut LinkScratch,
) -> TrialGains {
    let mut best = 0;
    let mut best_gain = f64::NEG_INFINITY;
    for (i, d) in scratch.candidates.iter_mut().enumerate() {
        sampler.sample_strong_into(rng, d);
        let g = effective_gain_w(d, config);
        if g > best_gain {
            best_gain = g;
            best = i;
        }
    }
    // user v only matters for the winning candidate
    let winner = &mut scratch.candidates[best];
    sampler.sample_weak_into(rng, winner);
    TrialGains {
        strong: best_gain,
        weak: weak_gain_under_strong_design(winner, config),
        weak_self_aligned: self_aligned_gain_v(winner, config),
    }
}

/// Simulates every link metric at each power of `powers` (folded, Watts) from
/// one shared set of draws.
pub fn simulate_grid(
    config: &NetworkConfig,
    mc: &MonteCarloConfig,
    powers: &[f64],
    sigma2: f64,
) -> Result<Vec<LinkEstimates>> {
    config.validate()?;
    if !(sigma2 > 0.0) {
        return Err(Error::Domain(format!("noise power must be > 0, got {sigma2}")));
    }
    if powers.iter().any(|p| !(*p >= 0.0)) {
        return Err(Error::Domain("transmit powers must be >= 0".into()));
    }
    let sampler = ChannelSampler::new(config)?;
    let (av, aw) = (config.a_v_sq, config.a_w_sq);
    let (target_w, target_v) = (config.rate_w, config.rate_v);
    let n = config.n_ris;
    let est = run_trials(
        mc,
        LINK_METRICS * powers.len(),
        || LinkScratch {
            candidates: vec![ChannelDraw::zeros(n); config.n_users],
        },
        |rng, scratch, out| {
            let g = draw_trial_gains(config, &sampler, rng, scratch);
            for (slot, &p) in out.chunks_exact_mut(LINK_METRICS).zip(powers) {
                let sw = g.strong * p;
                let sv = g.weak * p;
                let decode_v_at_w = (sw * av / (sw * aw + sigma2)).ln_1p() / std::f64::consts::LN_2;
                let rate_w = (sw * aw / sigma2).ln_1p() / std::f64::consts::LN_2;
                let rate_v = (sv * av / (sv * aw + sigma2)).ln_1p() / std::f64::consts::LN_2;
                let oma_w = 0.5 * (sw / sigma2).ln_1p() / std::f64::consts::LN_2;
                let oma_v = 0.5 * (g.weak_self_aligned * p / sigma2).ln_1p() / std::f64::consts::LN_2;
                slot[0] = if decode_v_at_w < target_v || rate_w < target_w { 1.0 } else { 0.0 };
                slot[1] = rate_w;
                slot[2] = rate_v;
                slot[3] = oma_w;
                slot[4] = oma_v;
                slot[5] = rate_w + rate_v;
                slot[6] = oma_w + oma_v;
            }
        },
    )?;
    Ok(est
        .chunks_exact(LINK_METRICS)
        .map(|c| LinkEstimates {
            outage_w: c[0],
            rate_w: c[1],
            rate_v: c[2],
            oma_w: c[3],
            oma_v: c[4],
            sum_rate: c[5],
            oma_sum_rate: c[6],
        })
        .collect())
}

fn single(config: &NetworkConfig, mc: &MonteCarloConfig, p: f64, sigma2: f64) -> Result<LinkEstimates> {
    Ok(simulate_grid(config, mc, &[p], sigma2)?[0])
}

/// Empirical outage probability of user W (either SIC stage below target).
pub fn simulate_outage_w(config: &NetworkConfig, mc: &MonteCarloConfig, p: f64, sigma2: f64) -> Result<EstimateWithCI> {
    Ok(single(config, mc, p, sigma2)?.outage_w)
}

pub fn simulate_rate_w(config: &NetworkConfig, mc: &MonteCarloConfig, p: f64, sigma2: f64) -> Result<EstimateWithCI> {
    Ok(single(config, mc, p, sigma2)?.rate_w)
}

/// User v rate with the exact phase mismatch of a design made for user W.
pub fn simulate_rate_v(config: &NetworkConfig, mc: &MonteCarloConfig, p: f64, sigma2: f64) -> Result<EstimateWithCI> {
    Ok(single(config, mc, p, sigma2)?.rate_v)
}

/// Half-slot, full-power rate of one user, with phases aligned to that user.
pub fn simulate_oma(
    config: &NetworkConfig,
    mc: &MonteCarloConfig,
    p: f64,
    sigma2: f64,
    user: User,
) -> Result<EstimateWithCI> {
    let e = single(config, mc, p, sigma2)?;
    Ok(match user {
        User::Strong => e.oma_w,
        User::Weak => e.oma_v,
    })
}

/// Mean of [`simulate_oma`].
pub fn oma_rate(config: &NetworkConfig, user: User, p: f64, sigma2: f64, trials: u64, seed: u64) -> Result<f64> {
    Ok(simulate_oma(config, &MonteCarloConfig::new(trials, seed), p, sigma2, user)?.mean)
}

/// Effective gains of single draws, for distribution checks.
pub fn sample_trial_gains(config: &NetworkConfig, mc: &MonteCarloConfig) -> Result<Vec<TrialGains>> {
    config.validate()?;
    mc.validate()?;
    let sampler = ChannelSampler::new(config)?;
    let base = ChaCha8Rng::seed_from_u64(mc.master_seed);
    let n = config.n_ris;
    (0..mc.trials as usize)
        .into_par_iter()
        .map_init(
            || LinkScratch {
                candidates: vec![ChannelDraw::zeros(n); config.n_users],
            },
            |scratch, i| {
                let mut rng = base.clone();
                rng.set_stream(i as u64);
                Ok(draw_trial_gains(config, &sampler, &mut rng, scratch))
            },
        )
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(trials: u64) -> MonteCarloConfig {
        MonteCarloConfig::new(trials, 42)
    }

    #[test]
    fn welford_merge_matches_direct() {
        let xs: Vec<f64> = (0..1000).map(|i| ((i * 37) % 101) as f64 / 7.0).collect();
        let mut all = Welford::default();
        xs.iter().for_each(|&x| all.push(x));
        let mut a = Welford::default();
        let mut b = Welford::default();
        xs[..313].iter().for_each(|&x| a.push(x));
        xs[313..].iter().for_each(|&x| b.push(x));
        let m = a.merge(&b);
        assert!((m.mean - all.mean).abs() < 1e-12);
        assert!((m.m2 / all.m2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn invalid_mc_config() {
        assert!(MonteCarloConfig { trials: 0, master_seed: 1, batch_size: 1 }.validate().is_err());
        assert!(MonteCarloConfig { trials: 10, master_seed: 1, batch_size: 11 }.validate().is_err());
    }

    #[test]
    fn batch_size_does_not_change_results() {
        let cfg = NetworkConfig::default();
        let sigma2 = cfg.noise_watts();
        let p = cfg.received_power_dbm(10.0);
        let mut mc = small(5000);
        let a = simulate_grid(&cfg, &mc, &[p], sigma2).unwrap();
        mc.batch_size = 1;
        let b = simulate_grid(&cfg, &mc, &[p], sigma2).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn tiny_power_is_always_in_outage() {
        let cfg = NetworkConfig::default();
        let e = simulate_outage_w(&cfg, &small(2000), 1e-30, cfg.noise_watts()).unwrap();
        assert_eq!(e.mean, 1.0);
        assert_eq!(e.std_error, 0.0);
        let r = simulate_rate_w(&cfg, &small(2000), 0.0, cfg.noise_watts()).unwrap();
        assert_eq!(r.mean, 0.0);
    }

    #[test]
    fn deterministic_channel_oma_is_exact() {
        let cfg = NetworkConfig {
            n_ris: 1,
            m1: f64::INFINITY,
            m_w: f64::INFINITY,
            m_v: f64::INFINITY,
            d1: 1.0,
            d2_w: 1.0,
            d2_v: 1.0,
            direct_link: false,
            ..NetworkConfig::default()
        };
        let e = simulate_oma(&cfg, &small(100), 3.0, 1.0, User::Strong).unwrap();
        assert!((e.mean - 0.5 * 4f64.log2()).abs() < 1e-15);
        assert!(e.std_error < 1e-12);
    }

    #[test]
    fn unit_mean_fading_powers() {
        // |h|² has unit mean and variance 1/m
        for m in [1.0, 3.0] {
            let cfg = NetworkConfig {
                n_ris: 1,
                m1: m,
                ..NetworkConfig::default()
            };
            let sampler = ChannelSampler::new(&cfg).unwrap();
            let est = run_trials(&small(200_000), 3, || (), |rng, _, out| {
                let d = sampler.sample(rng);
                let x = d.h[0].norm_sqr();
                out[0] = x;
                out[1] = x * x;
                out[2] = d.r_w.norm_sqr();
            })
            .unwrap();
            assert!((est[0].mean - 1.0).abs() < 0.01);
            assert!((est[1].mean - (1.0 + 1.0 / m)).abs() < 0.03);
            assert!((est[2].mean - 1.0).abs() < 0.01);
        }
    }

    #[test]
    fn single_element_outage_matches_exact_integral() {
        use crate::specfun::{adaptive_quad, adaptive_quad_semi_infinite, QuadratureSpec};
        // with N = 1 the gain is A·UV + B·E for unit exponentials U, V, E, and
        // P(UV < y) = ∫ e^{-u} (1 - e^{-y/u}) du
        let cfg = NetworkConfig { n_ris: 1, ..NetworkConfig::default() };
        let a = cfg.reflected_loss(User::Strong);
        let b = cfg.direct_loss(User::Strong);
        let spec = QuadratureSpec::new(1e-14, 1e-11, 4000).unwrap();
        let product_cdf = |y: f64| {
            if y <= 0.0 {
                return 0.0;
            }
            adaptive_quad_semi_infinite(|u| (-u).exp() * -(-y / u).exp_m1(), 0.0, &spec).unwrap()
        };
        let p = cfg.received_power_dbm(0.0);
        let sigma2 = cfg.noise_watts();
        let thr = crate::closedform::outage_thresholds(&cfg, p, sigma2).unwrap().i_w_star;
        let single = adaptive_quad(|e| (-e).exp() * product_cdf((thr - e * b) / a), 0.0, thr / b, &spec).unwrap();
        let exact = single * single;
        assert!((exact - 0.016_397_365_632_456).abs() < 1e-9, "{exact}");
        let sim = simulate_outage_w(&cfg, &MonteCarloConfig::new(200_000, 17), p, sigma2).unwrap();
        assert!((sim.mean - exact).abs() < 4.0 * sim.std_error, "{} ± {} vs {exact}", sim.mean, sim.std_error);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(24))]

            #[test]
            fn estimates_ignore_batch_size(trials in 1u64..5000, batch in 1u64..3000, seed in any::<u64>()) {
                let cfg = NetworkConfig::default();
                let a = MonteCarloConfig::new(trials, seed);
                let b = MonteCarloConfig { batch_size: batch.min(trials), ..a };
                let p = [cfg.received_power_dbm(10.0)];
                let ea = simulate_grid(&cfg, &a, &p, cfg.noise_watts()).unwrap();
                let eb = simulate_grid(&cfg, &b, &p, cfg.noise_watts()).unwrap();
                prop_assert_eq!(ea, eb);
            }

            #[test]
            fn outage_estimate_is_a_probability(trials in 1u64..2000, seed in any::<u64>(), dbm in -20.0f64..40.0) {
                let cfg = NetworkConfig::default();
                let e = simulate_outage_w(&cfg, &MonteCarloConfig::new(trials, seed), cfg.received_power_dbm(dbm), cfg.noise_watts()).unwrap();
                prop_assert!((0.0..=1.0).contains(&e.mean));
                prop_assert!(e.std_error >= 0.0);
            }
        }
    }
}
