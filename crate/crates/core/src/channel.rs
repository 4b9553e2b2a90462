//! Scenario description, fading draws, RIS phase alignment and effective gains.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Exp1, Gamma};

use crate::error::{Error, Result};

/// How the reflected and direct paths combine at a user.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Combining {
    /// Reflected amplitude sum squared plus direct power (the analysed model).
    #[default]
    PowerSum,
    /// Magnitude squared of the full complex sum.
    Coherent,
}

/// Which of the paired users an operation refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum User {
    /// The prioritized user with the largest effective gain (index W).
    Strong,
    /// The paired cell-edge user (index v).
    Weak,
}

/// Full scenario description.
///
/// `m1`, `m_w`, `m_v` may be `f64::INFINITY` to model a deterministic
/// (non-fading) hop.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkConfig {
    pub n_ris: usize,
    pub n_users: usize,
    pub v_index: usize,
    pub m1: f64,
    pub m_w: f64,
    pub m_v: f64,
    pub d1: f64,
    pub d2_w: f64,
    pub d2_v: f64,
    pub d3_w: f64,
    pub d3_v: f64,
    pub alpha_l: f64,
    pub alpha_n: f64,
    pub a_v_sq: f64,
    pub a_w_sq: f64,
    pub rate_w: f64,
    pub rate_v: f64,
    pub ref_loss_db: f64,
    pub bandwidth_hz: f64,
    pub noise_dbm: f64,
    /// When false the BS-user links are blocked.
    pub direct_link: bool,
    pub combining: Combining,
    /// User v sees the same reflected and direct coefficients as user W,
    /// so the phase design is also perfect for v.
    pub v_aligned: bool,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            n_ris: 3,
            n_users: 2,
            v_index: 1,
            m1: 1.0,
            m_w: 1.0,
            m_v: 1.0,
            d1: 60.0,
            d2_w: 80.0,
            d2_v: 100.0,
            d3_w: 100.0,
            d3_v: 100.0,
            alpha_l: 2.2,
            alpha_n: 3.5,
            a_v_sq: 0.6,
            a_w_sq: 0.4,
            rate_w: 1.5,
            rate_v: 1.0,
            ref_loss_db: -30.0,
            bandwidth_hz: 1e6,
            noise_dbm: thermal_noise_dbm(1e6),
            direct_link: true,
            combining: Combining::PowerSum,
            v_aligned: false,
        }
    }
}

/// Thermal noise floor at 290 K over `bandwidth_hz`.
pub fn thermal_noise_dbm(bandwidth_hz: f64) -> f64 {
    -174.0 + 10.0 * bandwidth_hz.log10()
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn watts_to_dbm(watts: f64) -> f64 {
    10.0 * watts.log10() + 30.0
}

fn check_shape(name: &str, m: f64) -> Result<()> {
    if m >= 0.5 {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!("{name} must be >= 0.5, got {m}")))
    }
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!(
            "{name} must be finite and > 0, got {v}"
        )))
    }
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_users < 2 {
            return Err(Error::InvalidConfig(format!(
                "n_users must be >= 2 to pair users, got {}",
                self.n_users
            )));
        }
        if self.v_index < 1 || self.v_index >= self.n_users {
            return Err(Error::InvalidConfig(format!(
                "v_index must satisfy 1 <= v_index < n_users, got v_index = {}, n_users = {}",
                self.v_index, self.n_users
            )));
        }
        if self.n_ris == 0 && !self.direct_link {
            return Err(Error::InvalidConfig(
                "no link to the users: n_ris = 0 and direct_link = false".into(),
            ));
        }
        check_shape("m1", self.m1)?;
        check_shape("m_w", self.m_w)?;
        check_shape("m_v", self.m_v)?;
        for (name, v) in [
            ("d1", self.d1),
            ("d2_w", self.d2_w),
            ("d2_v", self.d2_v),
            ("d3_w", self.d3_w),
            ("d3_v", self.d3_v),
            ("alpha_l", self.alpha_l),
            ("alpha_n", self.alpha_n),
            ("bandwidth_hz", self.bandwidth_hz),
        ] {
            check_positive(name, v)?;
        }
        if !(self.a_v_sq > 0.0 && self.a_v_sq < 1.0 && self.a_w_sq > 0.0 && self.a_w_sq < 1.0) {
            return Err(Error::InvalidConfig(
                "power allocation factors a_v_sq, a_w_sq must lie in (0, 1)".into(),
            ));
        }
        if (self.a_v_sq + self.a_w_sq - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidConfig(format!(
                "a_v_sq + a_w_sq must equal 1, got {}",
                self.a_v_sq + self.a_w_sq
            )));
        }
        if !(self.rate_w >= 0.0 && self.rate_v >= 0.0) {
            return Err(Error::InvalidConfig("target rates must be >= 0".into()));
        }
        if !self.ref_loss_db.is_finite() || !self.noise_dbm.is_finite() {
            return Err(Error::InvalidConfig(
                "ref_loss_db and noise_dbm must be finite".into(),
            ));
        }
        let margin = self.sic_margin();
        if !(margin > 0.0) {
            return Err(Error::SicInfeasible { margin });
        }
        Ok(())
    }

    /// `a_v² − a_W²·(2^R_v − 1)`; SIC works only when positive.
    pub fn sic_margin(&self) -> f64 {
        self.a_v_sq - self.a_w_sq * self.eps_v()
    }

    pub fn eps_v(&self) -> f64 {
        self.rate_v.exp2() - 1.0
    }

    pub fn eps_w(&self) -> f64 {
        self.rate_w.exp2() - 1.0
    }

    /// Noise power in Watts.
    pub fn noise_watts(&self) -> f64 {
        dbm_to_watts(self.noise_dbm)
    }

    /// Transmit power in Watts after the reference-distance attenuation.
    /// All link-level metrics take this folded power.
    pub fn received_power(&self, p_tx_watts: f64) -> f64 {
        p_tx_watts * 10f64.powf(self.ref_loss_db / 10.0)
    }

    pub fn received_power_dbm(&self, p_tx_dbm: f64) -> f64 {
        self.received_power(dbm_to_watts(p_tx_dbm))
    }

    /// Reflected-path power factor `(d1·d2)^−αl` of a user.
    pub fn reflected_loss(&self, user: User) -> f64 {
        let d2 = match user {
            User::Strong => self.d2_w,
            User::Weak => self.d2_v,
        };
        (self.d1 * d2).powf(-self.alpha_l)
    }

    /// Direct-path power factor `d3^−αn`, zero when the direct link is blocked.
    pub fn direct_loss(&self, user: User) -> f64 {
        if !self.direct_link {
            return 0.0;
        }
        let d3 = match user {
            User::Strong => self.d3_w,
            User::Weak => self.d3_v,
        };
        d3.powf(-self.alpha_n)
    }

    pub fn user_shape(&self, user: User) -> f64 {
        match user {
            User::Strong => self.m_w,
            User::Weak => self.m_v,
        }
    }
}

/// One realization of every fading coefficient.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelDraw {
    pub g_w: Vec<Complex64>,
    pub g_v: Vec<Complex64>,
    pub h: Vec<Complex64>,
    pub r_w: Complex64,
    pub r_v: Complex64,
}

impl ChannelDraw {
    pub fn zeros(n_ris: usize) -> Self {
        let zero = Complex64::new(0.0, 0.0);
        Self {
            g_w: vec![zero; n_ris],
            g_v: vec![zero; n_ris],
            h: vec![zero; n_ris],
            r_w: zero,
            r_v: zero,
        }
    }

    pub fn n_ris(&self) -> usize {
        self.h.len()
    }
}

/// Phase shifts and reflection amplitudes applied at the RIS.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseDesign {
    pub theta: Vec<f64>,
    pub beta: Vec<f64>,
}

/// Unit-mean fading power law of one hop.
#[derive(Debug, Clone, Copy)]
pub(crate) enum PowerLaw {
    Deterministic,
    Gamma(Gamma<f64>),
}

impl PowerLaw {
    pub(crate) fn nakagami(m: f64) -> Result<Self> {
        if m.is_infinite() {
            return Ok(Self::Deterministic);
        }
        Gamma::new(m, 1.0 / m)
            .map(Self::Gamma)
            .map_err(|e| Error::InvalidConfig(format!("Nakagami shape {m}: {e}")))
    }

    pub(crate) fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Self::Deterministic => 1.0,
            Self::Gamma(g) => g.sample(rng),
        }
    }
}

fn polar<R: Rng + ?Sized>(power: f64, rng: &mut R) -> Complex64 {
    let phase: f64 = rng.random::<f64>() * TAU;
    Complex64::from_polar(power.sqrt(), phase)
}

/// Reusable sampler holding the fading distributions of one configuration.
#[derive(Debug, Clone)]
pub struct ChannelSampler {
    n_ris: usize,
    h: PowerLaw,
    g_w: PowerLaw,
    g_v: PowerLaw,
    direct_link: bool,
    v_aligned: bool,
}

impl ChannelSampler {
    pub fn new(config: &NetworkConfig) -> Result<Self> {
        Ok(Self {
            n_ris: config.n_ris,
            h: PowerLaw::nakagami(config.m1)?,
            g_w: PowerLaw::nakagami(config.m_w)?,
            g_v: PowerLaw::nakagami(config.m_v)?,
            direct_link: config.direct_link,
            v_aligned: config.v_aligned,
        })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> ChannelDraw {
        let mut draw = ChannelDraw::zeros(self.n_ris);
        self.sample_into(rng, &mut draw);
        draw
    }

    /// Overwrites `draw` in place. The random stream is consumed in a fixed
    /// order: user W's coefficients first, then user v's.
    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, draw: &mut ChannelDraw) {
        self.sample_strong_into(rng, draw);
        self.sample_weak_into(rng, draw);
    }

    /// Draws `h`, `g_w` and `r_w` only.
    pub fn sample_strong_into<R: Rng + ?Sized>(&self, rng: &mut R, draw: &mut ChannelDraw) {
        debug_assert_eq!(draw.n_ris(), self.n_ris);
        for n in 0..self.n_ris {
            draw.h[n] = polar(self.h.sample(rng), rng);
            draw.g_w[n] = polar(self.g_w.sample(rng), rng);
        }
        draw.r_w = if self.direct_link {
            let e: f64 = Exp1.sample(rng);
            polar(e, rng)
        } else {
            Complex64::new(0.0, 0.0)
        };
    }

    /// Draws `g_v` and `r_v`, or copies user W's links when aligned.
    pub fn sample_weak_into<R: Rng + ?Sized>(&self, rng: &mut R, draw: &mut ChannelDraw) {
        if self.v_aligned {
            draw.g_v.copy_from_slice(&draw.g_w);
            draw.r_v = draw.r_w;
            return;
        }
        for g in draw.g_v.iter_mut() {
            *g = polar(self.g_v.sample(rng), rng);
        }
        draw.r_v = if self.direct_link {
            let e: f64 = Exp1.sample(rng);
            polar(e, rng)
        } else {
            Complex64::new(0.0, 0.0)
        };
    }
}

/// Draws all fading coefficients of one trial.
pub fn sample_draw<R: Rng + ?Sized>(config: &NetworkConfig, rng: &mut R) -> Result<ChannelDraw> {
    Ok(ChannelSampler::new(config)?.sample(rng))
}

fn wrap_phase(x: f64) -> f64 {
    let t = x.rem_euclid(TAU);
    // rem_euclid can round up to exactly TAU
    if t >= TAU {
        0.0
    } else {
        t
    }
}

/// Co-phases every cascaded reflected term with user W's direct link.
pub fn design_phases(draw: &ChannelDraw) -> PhaseDesign {
    let mut design = PhaseDesign {
        theta: vec![0.0; draw.n_ris()],
        beta: vec![1.0; draw.n_ris()],
    };
    design_phases_into(draw, &mut design);
    design
}

pub fn design_phases_into(draw: &ChannelDraw, design: &mut PhaseDesign) {
    let target = draw.r_w.arg();
    design.theta.resize(draw.n_ris(), 0.0);
    design.beta.clear();
    design.beta.resize(draw.n_ris(), 1.0);
    for (n, theta) in design.theta.iter_mut().enumerate() {
        *theta = wrap_phase(target - (draw.g_w[n] * draw.h[n]).arg());
    }
}

/// Post-alignment effective gain of user W.
pub fn effective_gain_w(draw: &ChannelDraw, config: &NetworkConfig) -> f64 {
    let amp: f64 = draw.g_w.iter().zip(&draw.h).map(|(g, h)| (g * h).norm()).sum();
    let a = config.reflected_loss(User::Strong);
    let b = config.direct_loss(User::Strong);
    match config.combining {
        Combining::PowerSum => amp * amp * a + draw.r_w.norm_sqr() * b,
        Combining::Coherent => {
            let s = amp * a.sqrt() + draw.r_w.norm() * b.sqrt();
            s * s
        }
    }
}

/// Effective gain of user v under phases designed for user W.
pub fn effective_gain_v(draw: &ChannelDraw, phases: &PhaseDesign, config: &NetworkConfig) -> f64 {
    let reflected: Complex64 = draw
        .g_v
        .iter()
        .zip(&draw.h)
        .zip(phases.theta.iter().zip(&phases.beta))
        .map(|((g, h), (&theta, &beta))| g * h * Complex64::from_polar(beta, theta))
        .sum();
    let a = config.reflected_loss(User::Weak);
    let b = config.direct_loss(User::Weak);
    match config.combining {
        Combining::PowerSum => reflected.norm_sqr() * a + draw.r_v.norm_sqr() * b,
        Combining::Coherent => (reflected * a.sqrt() + draw.r_v * b.sqrt()).norm_sqr(),
    }
}

/// Same value as [`effective_gain_v`] under [`design_phases`], without
/// forming the angles: each element is rotated by the unit phasor of
/// `r_w · conj(g_w h)`.
pub fn weak_gain_under_strong_design(draw: &ChannelDraw, config: &NetworkConfig) -> f64 {
    let unit = |z: Complex64| {
        let r = z.norm();
        if r > 0.0 {
            z / r
        } else {
            Complex64::new(1.0, 0.0)
        }
    };
    let target = unit(draw.r_w);
    let reflected: Complex64 = draw
        .g_v
        .iter()
        .zip(&draw.g_w)
        .zip(&draw.h)
        .map(|((gv, gw), h)| gv * h * unit(gw * h).conj())
        .sum::<Complex64>()
        * target;
    let a = config.reflected_loss(User::Weak);
    let b = config.direct_loss(User::Weak);
    match config.combining {
        Combining::PowerSum => reflected.norm_sqr() * a + draw.r_v.norm_sqr() * b,
        Combining::Coherent => (reflected * a.sqrt() + draw.r_v * b.sqrt()).norm_sqr(),
    }
}

/// Gain user v would see with phases aligned to itself.
pub fn self_aligned_gain_v(draw: &ChannelDraw, config: &NetworkConfig) -> f64 {
    let amp: f64 = draw.g_v.iter().zip(&draw.h).map(|(g, h)| (g * h).norm()).sum();
    let a = config.reflected_loss(User::Weak);
    let b = config.direct_loss(User::Weak);
    match config.combining {
        Combining::PowerSum => amp * amp * a + draw.r_v.norm_sqr() * b,
        Combining::Coherent => {
            let s = amp * a.sqrt() + draw.r_v.norm() * b.sqrt();
            s * s
        }
    }
}

/// Normalized Fejér kernel `sin²(Nπθ/2) / (N² sin²(πθ/2))`, with value 1 at
/// `θ = 0` and for `N ≤ 1`.
pub fn fejer_kernel(n_ris: usize, theta_bar: f64) -> f64 {
    if n_ris <= 1 {
        return 1.0;
    }
    let n = n_ris as f64;
    let half = 0.5 * PI * theta_bar;
    let den = half.sin();
    if den.abs() < 1e-8 {
        // Taylor expansion around the removable singularity (θ̄ ≡ 0 mod 2)
        let t = theta_bar - 2.0 * (theta_bar / 2.0).round();
        let x = 0.5 * PI * t;
        return (1.0 - (n * n - 1.0) * x * x / 3.0).clamp(0.0, 1.0);
    }
    let num = (n * half).sin();
    ((num * num) / (n * n * den * den)).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn unit_config(n: usize) -> NetworkConfig {
        NetworkConfig {
            n_ris: n,
            d1: 1.0,
            d2_w: 1.0,
            d2_v: 1.0,
            d3_w: 1.0,
            d3_v: 1.0,
            ..NetworkConfig::default()
        }
    }

    fn real_draw(g: &[f64], h: &[f64], r: f64) -> ChannelDraw {
        let c = |x: &f64| Complex64::new(*x, 0.0);
        ChannelDraw {
            g_w: g.iter().map(c).collect(),
            g_v: g.iter().map(c).collect(),
            h: h.iter().map(c).collect(),
            r_w: Complex64::new(r, 0.0),
            r_v: Complex64::new(r, 0.0),
        }
    }

    #[test]
    fn default_config_is_valid() {
        NetworkConfig::default().validate().unwrap();
        assert!((NetworkConfig::default().noise_dbm + 114.0).abs() < 1e-12);
    }

    #[test]
    fn validation_names_the_violation() {
        let cfg = NetworkConfig {
            a_v_sq: 0.5,
            a_w_sq: 0.6,
            ..NetworkConfig::default()
        };
        assert!(matches!(cfg.validate(), Err(Error::InvalidConfig(m)) if m.contains("a_v_sq + a_w_sq")));
        let cfg = NetworkConfig {
            a_v_sq: 0.45,
            a_w_sq: 0.55,
            ..NetworkConfig::default()
        };
        assert!(matches!(cfg.validate(), Err(Error::SicInfeasible { .. })));
        let cfg = NetworkConfig {
            v_index: 2,
            ..NetworkConfig::default()
        };
        assert!(cfg.validate().is_err());
        let cfg = NetworkConfig {
            m1: 0.3,
            ..NetworkConfig::default()
        };
        assert!(cfg.validate().is_err());
        let cfg = NetworkConfig {
            n_ris: 0,
            direct_link: false,
            ..NetworkConfig::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn gain_w_examples() {
        let cfg = NetworkConfig {
            direct_link: false,
            ..unit_config(1)
        };
        assert_eq!(effective_gain_w(&real_draw(&[1.0], &[1.0], 0.0), &cfg), 1.0);
        let cfg = NetworkConfig {
            direct_link: false,
            ..unit_config(2)
        };
        assert_eq!(effective_gain_w(&real_draw(&[1.0, 1.0], &[1.0, 1.0], 0.0), &cfg), 4.0);
        let loss = NetworkConfig::default().reflected_loss(User::Strong);
        assert!((loss / 7.97e-9 - 1.0).abs() < 1e-3, "{loss}");
    }

    #[test]
    fn phase_design_examples() {
        let d = real_draw(&[1.0, 2.0], &[0.5, 1.0], 1.0);
        assert!(design_phases(&d).theta.iter().all(|&t| t == 0.0));

        let mut d = real_draw(&[1.0], &[1.0], 1.0);
        d.g_w[0] = Complex64::new(0.0, 1.0);
        let t = design_phases(&d).theta[0];
        assert!((t - 1.5 * PI).abs() < 1e-12);
    }

    #[test]
    fn designed_phases_align_with_direct_link() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let cfg = NetworkConfig {
            n_ris: 6,
            ..NetworkConfig::default()
        };
        let sampler = ChannelSampler::new(&cfg).unwrap();
        for _ in 0..50 {
            let d = sampler.sample(&mut rng);
            let p = design_phases(&d);
            for n in 0..6 {
                assert!((0.0..TAU).contains(&p.theta[n]));
                let term = d.g_w[n] * Complex64::from_polar(1.0, p.theta[n]) * d.h[n];
                let diff = wrap_phase(term.arg() - d.r_w.arg());
                assert!(diff.min(TAU - diff) < 1e-12);
            }
        }
    }

    #[test]
    fn aligned_user_v_matches_user_w() {
        let cfg = NetworkConfig {
            d2_v: 80.0,
            v_aligned: true,
            ..NetworkConfig::default()
        };
        let sampler = ChannelSampler::new(&cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let d = sampler.sample(&mut rng);
            let p = design_phases(&d);
            let gw = effective_gain_w(&d, &cfg);
            let gv = effective_gain_v(&d, &p, &cfg);
            assert!((gw - gv).abs() <= 1e-12 * gw);
        }
    }

    #[test]
    fn phasor_path_matches_angle_path() {
        for (combining, direct_link) in [
            (Combining::PowerSum, true),
            (Combining::Coherent, true),
            (Combining::PowerSum, false),
        ] {
            let cfg = NetworkConfig {
                n_ris: 5,
                combining,
                direct_link,
                ..NetworkConfig::default()
            };
            let sampler = ChannelSampler::new(&cfg).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(21);
            for _ in 0..50 {
                let d = sampler.sample(&mut rng);
                let slow = effective_gain_v(&d, &design_phases(&d), &cfg);
                let fast = weak_gain_under_strong_design(&d, &cfg);
                assert!((slow - fast).abs() <= 1e-12 * slow.max(1e-300), "{slow} vs {fast}");
            }
        }
    }

    #[test]
    fn coherent_destructive_interference() {
        let cfg = NetworkConfig {
            combining: Combining::Coherent,
            ..unit_config(1)
        };
        let d = real_draw(&[1.0], &[1.0], 1.0);
        let mut p = design_phases(&d);
        p.theta[0] = PI;
        assert!(effective_gain_v(&d, &p, &cfg) < 1e-24);
    }

    #[test]
    fn sampler_is_deterministic() {
        let cfg = NetworkConfig::default();
        let a = sample_draw(&cfg, &mut ChaCha8Rng::seed_from_u64(11)).unwrap();
        let b = sample_draw(&cfg, &mut ChaCha8Rng::seed_from_u64(11)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn deterministic_hops_have_unit_power() {
        let cfg = NetworkConfig {
            m1: f64::INFINITY,
            m_w: f64::INFINITY,
            m_v: f64::INFINITY,
            ..NetworkConfig::default()
        };
        let d = sample_draw(&cfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        for c in d.h.iter().chain(&d.g_w).chain(&d.g_v) {
            assert!((c.norm() - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn fejer_examples() {
        assert_eq!(fejer_kernel(7, 0.0), 1.0);
        assert_eq!(fejer_kernel(1, 0.37), 1.0);
        assert!((fejer_kernel(2, 0.5) - 0.5).abs() < 1e-15);
        assert!((fejer_kernel(4, 2.0) - 1.0).abs() < 1e-12);
        assert!(fejer_kernel(4, 0.5).abs() < 1e-15);
        // continuity across the Taylor switch
        let a = fejer_kernel(16, 1e-8 * 0.999);
        let b = fejer_kernel(16, 1e-8 * 1.001 * 2.0 / PI);
        assert!((a - b).abs() < 1e-10);
    }

    #[test]
    fn noise_and_power_helpers() {
        assert!((dbm_to_watts(30.0) - 1.0).abs() < 1e-15);
        assert!((watts_to_dbm(0.01) - 10.0).abs() < 1e-12);
        let cfg = NetworkConfig::default();
        assert!((cfg.received_power(1.0) - 1e-3).abs() < 1e-18);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn fejer_stays_in_unit_interval(n in 0usize..200, theta in -4.0f64..4.0) {
                let g = fejer_kernel(n, theta);
                prop_assert!((0.0..=1.0).contains(&g));
            }

            #[test]
            fn fejer_is_even(n in 1usize..64, theta in 0.0f64..2.0) {
                prop_assert!((fejer_kernel(n, theta) - fejer_kernel(n, -theta)).abs() < 1e-12);
            }

            #[test]
            fn designed_phases_beat_random_phases(seed in any::<u64>(), n in 1usize..16) {
                // with aligned users the weak-user gain under arbitrary phases
                // is the strong-user gain under a different design
                let cfg = NetworkConfig {
                    n_ris: n,
                    d2_v: 80.0,
                    v_aligned: true,
                    combining: Combining::Coherent,
                    ..NetworkConfig::default()
                };
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let d = ChannelSampler::new(&cfg).unwrap().sample(&mut rng);
                let designed = effective_gain_v(&d, &design_phases(&d), &cfg);
                let random = PhaseDesign {
                    theta: (0..n).map(|_| rng.random::<f64>() * TAU).collect(),
                    beta: vec![1.0; n],
                };
                prop_assert!(effective_gain_v(&d, &random, &cfg) <= designed * (1.0 + 1e-12));
                prop_assert!((designed - effective_gain_w(&d, &cfg)).abs() <= 1e-12 * designed);
            }

            #[test]
            fn phasor_and_angle_paths_agree(seed in any::<u64>(), n in 0usize..12, direct in any::<bool>()) {
                let cfg = NetworkConfig {
                    n_ris: n.max(usize::from(!direct)),
                    direct_link: direct,
                    ..NetworkConfig::default()
                };
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let d = ChannelSampler::new(&cfg).unwrap().sample(&mut rng);
                let slow = effective_gain_v(&d, &design_phases(&d), &cfg);
                let fast = weak_gain_under_strong_design(&d, &cfg);
                prop_assert!((slow - fast).abs() <= 1e-12 * slow.max(1e-300));
            }
        }
    }
}
