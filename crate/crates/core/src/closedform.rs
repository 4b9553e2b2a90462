//! Gamma moment matching, outage probability, ergodic rates, diversity orders,
//! spectral and energy efficiency.

use std::f64::consts::LN_2;

use crate::channel::{fejer_kernel, NetworkConfig, User};
use crate::error::{Error, Result};
use crate::specfun::{adaptive_quad, adaptive_quad_semi_infinite, inc_gamma_pq, lgamma, scaled_e1, QuadratureSpec};

pub use crate::montecarlo::oma_rate;

/// Which side of the moment-matching envelope an approximation describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BoundCase {
    Worst,
    Best,
}

impl BoundCase {
    pub fn label(self) -> &'static str {
        match self {
            BoundCase::Worst => "worst",
            BoundCase::Best => "best",
        }
    }
}

/// Gamma(k, λ) stand-in for an effective channel-gain distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaApprox {
    pub k: f64,
    pub lambda: f64,
    pub case: BoundCase,
}

impl GammaApprox {
    pub fn mean(&self) -> f64 {
        self.k * self.lambda
    }

    pub fn variance(&self) -> f64 {
        self.k * self.lambda * self.lambda
    }

    /// CDF of the largest of `w` i.i.d. gains, `P(k, x/λ)^w`.
    pub fn max_cdf(&self, x: f64, w: usize) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        inc_gamma_pq(self.k, x / self.lambda).0.powi(w as i32)
    }
}

/// Fading-severity factor of the worst case, `(1 + m1 + m)/(m1·m)`.
pub fn m_lower(m1: f64, m: f64) -> f64 {
    // written term-wise so an infinite shape (no fading) is handled
    1.0 / m1 + 1.0 / m + 1.0 / (m1 * m)
}

/// Fading-severity factor of the best case, `(1 + N·m1 + N·m)/(m1·m)`.
pub fn m_upper(n_ris: usize, m1: f64, m: f64) -> f64 {
    let n = n_ris as f64;
    1.0 / (m1 * m) + n / m + n / m1
}

/// Moment-matched Gamma law of user W's effective gain.
pub fn moment_match(config: &NetworkConfig, case: BoundCase) -> GammaApprox {
    moment_match_user(config, User::Strong, case)
}

/// Moment-matched Gamma law of either user's effective gain, using that
/// user's shape and distances.
pub fn moment_match_user(config: &NetworkConfig, user: User, case: BoundCase) -> GammaApprox {
    let n = config.n_ris as f64;
    let m = config.user_shape(user);
    let a = config.reflected_loss(user);
    let b = config.direct_loss(user);
    let (mean, var) = match case {
        BoundCase::Worst => (n * a + b, n * m_lower(config.m1, m) * a * a + b * b),
        BoundCase::Best => (
            n * n * a + b,
            n * n * m_upper(config.n_ris, config.m1, m) * a * a + b * b,
        ),
    };
    GammaApprox {
        k: mean * mean / var,
        lambda: var / mean,
        case,
    }
}

/// Gain thresholds below which user W is in outage.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OutageThresholds {
    pub i_v: f64,
    pub i_w: f64,
    pub i_w_star: f64,
    pub eps_v: f64,
    pub eps_w: f64,
}

/// `p` is the (folded) transmit power and `sigma2` the noise power, both in Watts.
pub fn outage_thresholds(config: &NetworkConfig, p: f64, sigma2: f64) -> Result<OutageThresholds> {
    let margin = config.sic_margin();
    if !(margin > 0.0) {
        return Err(Error::SicInfeasible { margin });
    }
    if !(p > 0.0) || !(sigma2 > 0.0) {
        return Err(Error::Domain(format!(
            "power and noise must be > 0, got p = {p}, sigma2 = {sigma2}"
        )));
    }
    let eps_v = config.eps_v();
    let eps_w = config.eps_w();
    let i_v = eps_v * sigma2 / (p * margin);
    let i_w = eps_w * sigma2 / (p * config.a_w_sq);
    Ok(OutageThresholds {
        i_v,
        i_w,
        i_w_star: i_v.max(i_w),
        eps_v,
        eps_w,
    })
}

/// Outage probability of user W, `P(k, I*/λ)^W`.
pub fn outage_prob(approx: &GammaApprox, thresholds: &OutageThresholds, w: usize) -> f64 {
    approx.max_cdf(thresholds.i_w_star, w)
}

/// A truncated series together with its truncation bookkeeping.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesResult {
    pub value: f64,
    pub terms: usize,
    pub converged: bool,
}

fn binomial(n: usize, k: usize) -> f64 {
    let mut c = 1.0;
    for i in 0..k {
        c = c * (n - i) as f64 / (i + 1) as f64;
    }
    c
}

/// High-SNR expansion of the outage probability: the incomplete-gamma power
/// series raised to `W`, times the binomial expansion of the exponential
/// factor. Truncates when a term falls below 1e-12 of the partial sum or at
/// `s_max`.
pub fn outage_prob_asymptotic(
    approx: &GammaApprox,
    thresholds: &OutageThresholds,
    w: usize,
    s_max: usize,
) -> SeriesResult {
    let x = thresholds.i_w_star / approx.lambda;
    if x <= 0.0 {
        return SeriesResult {
            value: 0.0,
            terms: 0,
            converged: true,
        };
    }
    let lnx = x.ln();
    let mut sum = 0.0;
    let mut terms = 0;
    let mut converged = false;
    for s in 0..=s_max {
        let t = (s as f64 * lnx - lgamma(approx.k + s as f64 + 1.0)).exp();
        sum += t;
        terms = s + 1;
        if t <= 1e-12 * sum {
            converged = true;
            break;
        }
    }
    let w_f = w as f64;
    let tail: f64 = (0..=w)
        .map(|j| {
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            sign * binomial(w, j) * ((approx.k * w_f + j as f64) * lnx).exp()
        })
        .sum();
    SeriesResult {
        value: sum.powi(w as i32) * tail,
        terms,
        converged,
    }
}

/// Leading-order outage of user W when the BS-user links are blocked.
///
/// Uses the shape `φ = N/m_l` (worst) or `N²/m_u` (best) and scale `m·A`.
pub fn outage_prob_no_direct(config: &NetworkConfig, thresholds: &OutageThresholds, case: BoundCase) -> f64 {
    let n = config.n_ris as f64;
    let a = config.reflected_loss(User::Strong);
    let (phi, m) = match case {
        BoundCase::Worst => {
            let ml = m_lower(config.m1, config.m_w);
            (n / ml, ml)
        }
        BoundCase::Best => {
            let mu = m_upper(config.n_ris, config.m1, config.m_w);
            (n * n / mu, mu)
        }
    };
    let w = config.n_users;
    let y = thresholds.i_w_star / (m * a);
    if y <= 0.0 {
        return 0.0;
    }
    let lny = y.ln();
    let w_f = w as f64;
    let sum: f64 = (0..=w)
        .map(|j| {
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            sign * binomial(w, j) * ((phi * w_f + j as f64) * lny).exp()
        })
        .sum();
    sum * (-w_f * lgamma(phi + 1.0)).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiversityMode {
    RisNoma,
    /// Many-element limit `N·m1·m_W·W/(m1 + m_W)`.
    RisNomaLargeN,
    ConventionalNoma,
    Oma,
}

pub fn diversity_order(config: &NetworkConfig, case: BoundCase, mode: DiversityMode) -> f64 {
    let w = config.n_users as f64;
    match mode {
        DiversityMode::RisNoma => moment_match(config, case).k * w,
        DiversityMode::RisNomaLargeN => {
            let (m1, mw) = (config.m1, config.m_w);
            let ratio = if m1.is_infinite() {
                mw
            } else if mw.is_infinite() {
                m1
            } else {
                m1 * mw / (m1 + mw)
            };
            config.n_ris as f64 * ratio * w
        }
        DiversityMode::ConventionalNoma | DiversityMode::Oma => w,
    }
}

/// `C = σ²/(λ·p·a_W²)`, the scale linking SNR to the normalized gain.
pub fn rate_scale(approx: &GammaApprox, config: &NetworkConfig, p: f64, sigma2: f64) -> f64 {
    sigma2 / (approx.lambda * p * config.a_w_sq)
}

// 1 - P^w without losing digits when P is close to 1
fn one_minus_pow(p: f64, q: f64, w: usize) -> f64 {
    if p < 0.5 {
        1.0 - p.powi(w as i32)
    } else {
        -(w as f64 * (-q).ln_1p()).exp_m1()
    }
}

/// Ergodic rate of user W by adaptive quadrature.
pub fn ergodic_rate_w_quad(
    approx: &GammaApprox,
    config: &NetworkConfig,
    p: f64,
    sigma2: f64,
    spec: &QuadratureSpec,
) -> Result<f64> {
    if p <= 0.0 {
        return Ok(0.0);
    }
    ergodic_rate_w_quad_at(approx.k, config.n_users, rate_scale(approx, config, p, sigma2), spec)
}

/// `(1/ln2)∫₀^∞ (1 − P(k, Cx)^W)/(1 + x) dx`, integrated in `u = ln(1 + x)`.
pub fn ergodic_rate_w_quad_at(k: f64, w: usize, c: f64, spec: &QuadratureSpec) -> Result<f64> {
    if !(k > 0.0) || w == 0 {
        return Err(Error::Domain(format!("need k > 0 and W >= 1, got k = {k}, W = {w}")));
    }
    if c.is_infinite() {
        return Ok(0.0);
    }
    if !(c > 0.0) {
        return Err(Error::Domain(format!("rate scale must be > 0, got {c}")));
    }
    let integrand = |u: f64| {
        let (pp, qq) = inc_gamma_pq(k, c * u.exp_m1());
        one_minus_pow(pp, qq, w)
    };
    // the integrand drops from 1 to 0 around u = ln(1/C); split there so the
    // semi-infinite map does not have to find the edge on its own
    let knee = (k / c).ln_1p().max(1.0);
    let head = adaptive_quad(integrand, 0.0, knee, spec)?;
    let tail = adaptive_quad_semi_infinite(integrand, knee, spec)?;
    Ok((head + tail) / LN_2)
}

/// How [`ergodic_rate_w_closed`] produced its value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RateMethod {
    ClosedForm,
    /// Guard exceeded; the quadrature value with the unrounded shape is returned.
    QuadratureFallback,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClosedFormRate {
    pub value: f64,
    pub method: RateMethod,
    pub k_bar: i64,
    pub notice: Option<String>,
}

pub const CLOSED_FORM_MAX_SHAPE: i64 = 12;
pub const CLOSED_FORM_MAX_USERS: usize = 8;

/// Ergodic rate of user W with the shape rounded to the nearest integer
/// (ties to even), by multinomial expansion of the integer-shape CDF.
pub fn ergodic_rate_w_closed(
    approx: &GammaApprox,
    config: &NetworkConfig,
    p: f64,
    sigma2: f64,
) -> Result<ClosedFormRate> {
    let k_bar = approx.k.round_ties_even() as i64;
    let w = config.n_users;
    if p <= 0.0 {
        return Ok(ClosedFormRate {
            value: 0.0,
            method: RateMethod::ClosedForm,
            k_bar,
            notice: None,
        });
    }
    let c = rate_scale(approx, config, p, sigma2);
    if !(1..=CLOSED_FORM_MAX_SHAPE).contains(&k_bar) || w > CLOSED_FORM_MAX_USERS {
        let value = ergodic_rate_w_quad_at(approx.k, w, c, &QuadratureSpec::default())?;
        return Ok(ClosedFormRate {
            value,
            method: RateMethod::QuadratureFallback,
            k_bar,
            notice: Some(format!(
                "closed form needs 1 <= round(k) <= {CLOSED_FORM_MAX_SHAPE} and W <= {CLOSED_FORM_MAX_USERS} \
                 (round(k) = {k_bar}, W = {w}); used quadrature"
            )),
        });
    }
    Ok(ClosedFormRate {
        value: closed_form_rate_at(k_bar as usize, w, c)?,
        method: RateMethod::ClosedForm,
        k_bar,
        notice: None,
    })
}

/// Closed-form ergodic rate for an integer shape `k_bar` and scale `C`.
pub fn closed_form_rate_at(k_bar: usize, w: usize, c: f64) -> Result<f64> {
    if k_bar == 0 || w == 0 || !(c > 0.0) || !c.is_finite() {
        return Err(Error::Domain(format!(
            "closed form needs k_bar >= 1, W >= 1, finite C > 0 (k_bar = {k_bar}, W = {w}, C = {c})"
        )));
    }
    let inv_fact: Vec<f64> = (0..k_bar).map(|t| (-lgamma(t as f64 + 1.0)).exp()).collect();
    let mut total = 0.0;
    let mut parts = vec![0usize; k_bar];
    for s in 1..=w {
        let mut inner = 0.0;
        for_each_composition(s, &mut parts, 0, &mut |a| {
            let mut log_coef = lgamma(s as f64 + 1.0);
            let mut weight = 1.0;
            let mut n = 0;
            for (t, &at) in a.iter().enumerate() {
                log_coef -= lgamma(at as f64 + 1.0);
                weight *= inv_fact[t].powi(at as i32);
                n += t * at;
            }
            inner += log_coef.exp() * weight * scaled_exp_moment(n, s as f64, c);
        });
        let sign = if s % 2 == 1 { 1.0 } else { -1.0 };
        total += sign * binomial(w, s) * inner;
    }
    Ok(total / LN_2)
}

// visits every a with a.len() slots, nonnegative entries, sum = remaining
fn for_each_composition(remaining: usize, a: &mut [usize], pos: usize, f: &mut impl FnMut(&[usize])) {
    if pos == a.len() - 1 {
        a[pos] = remaining;
        f(a);
        return;
    }
    for v in 0..=remaining {
        a[pos] = v;
        for_each_composition(remaining - v, a, pos + 1, f);
    }
}

/// `C^n ∫₀^∞ xⁿ e^{−sCx}/(1 + x) dx`.
///
/// Small `μ = sC` uses the finite sum plus `eᵘE1(μ)`; larger `μ` uses the
/// continued fraction of the upper incomplete gamma `Γ(−n, μ)`, which avoids
/// the cancellation of the finite sum.
pub(crate) fn scaled_exp_moment(n: usize, s: f64, c: f64) -> f64 {
    let mu = s * c;
    if n == 0 {
        return scaled_e1(mu);
    }
    if mu < 1.0 {
        let sign_n = if n % 2 == 0 { 1.0 } else { -1.0 };
        let mut sum = sign_n * c.powi(n as i32) * scaled_e1(mu);
        for k in 1..=n {
            let sign = if (n - k) % 2 == 0 { 1.0 } else { -1.0 };
            let log_mag = lgamma(k as f64) + (n - k) as f64 * c.ln() - k as f64 * s.ln();
            sum += sign * log_mag.exp();
        }
        sum
    } else {
        // n!·s^{-n}·h where Γ(−n, μ) = e^{−μ} μ^{−n} h
        let a = -(n as f64);
        let mut b = mu + 1.0 - a;
        let tiny = 1e-300;
        let mut cc = 1.0 / tiny;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..100_000 {
            let an = -(i as f64) * (i as f64 - a);
            b += 2.0;
            d = an * d + b;
            if d.abs() < tiny {
                d = tiny;
            }
            cc = b + an / cc;
            if cc.abs() < tiny {
                cc = tiny;
            }
            d = 1.0 / d;
            let del = d * cc;
            h *= del;
            if (del - 1.0).abs() < f64::EPSILON {
                break;
            }
        }
        (lgamma(n as f64 + 1.0) - n as f64 * s.ln()).exp() * h
    }
}

/// How the residual beamforming gain of user v is treated.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum ThetaPolicy {
    /// Fixed normalized phase offset θ̄.
    Fixed(f64),
    /// θ̄ uniform on [−1, 1].
    #[default]
    Average,
}

/// Ergodic rate of user v with the Fejér-kernel beamforming gain.
pub fn ergodic_rate_v(
    approx: &GammaApprox,
    config: &NetworkConfig,
    p: f64,
    sigma2: f64,
    policy: ThetaPolicy,
    spec: &QuadratureSpec,
) -> Result<f64> {
    let margin = config.sic_margin();
    if !(margin > 0.0) {
        return Err(Error::SicInfeasible { margin });
    }
    if p <= 0.0 {
        return Ok(0.0);
    }
    match policy {
        ThetaPolicy::Fixed(theta) => {
            rate_v_at_gain(approx, config, p, sigma2, fejer_kernel(config.n_ris, theta), spec)
        }
        ThetaPolicy::Average => {
            // kernel is even in θ̄ and vanishes at 2j/N; split there
            let n = config.n_ris;
            let mut cuts = vec![0.0];
            if n >= 2 {
                let mut j = 1;
                while 2.0 * j as f64 / (n as f64) < 1.0 {
                    cuts.push(2.0 * j as f64 / n as f64);
                    j += 1;
                }
            }
            cuts.push(1.0);
            // the rate collapses in narrow dips around each zero; the
            // smoothstep map θ = a + (b-a)(3t² - 2t³) widens them
            let mut total = 0.0;
            for pair in cuts.windows(2) {
                let (a, w) = (pair[0], pair[1] - pair[0]);
                total += adaptive_quad(
                    |t| {
                        let theta = a + w * t * t * (3.0 - 2.0 * t);
                        let jac = 6.0 * w * t * (1.0 - t);
                        rate_v_at_gain(approx, config, p, sigma2, fejer_kernel(n, theta), spec)
                            .map_or(f64::NAN, |r| r * jac)
                    },
                    0.0,
                    1.0,
                    spec,
                )?;
            }
            Ok(total)
        }
    }
}

fn rate_v_at_gain(
    approx: &GammaApprox,
    config: &NetworkConfig,
    p: f64,
    sigma2: f64,
    g: f64,
    spec: &QuadratureSpec,
) -> Result<f64> {
    if g <= 0.0 {
        return Ok(0.0);
    }
    let (av, aw) = (config.a_v_sq, config.a_w_sq);
    let v = config.v_index;
    let k = approx.k;
    // Integrate over the Gamma argument y instead of the SINR x, where
    // x = β·av·y / (1 + β·aw·y). The CDF step then sits at y ≈ k whatever
    // the gain, and the weight β·av / ((1 + βy)(1 + β·aw·y)) has scale 1/β.
    let beta = approx.lambda * g * p / sigma2;
    let integrand = |y: f64| {
        let (pp, qq) = inc_gamma_pq(k, y);
        one_minus_pow(pp, qq, v) * beta * av / ((1.0 + beta * y) * (1.0 + beta * aw * y))
    };
    let mut cuts = vec![0.0];
    let mut c = 1.0 / beta;
    while c < k {
        cuts.push(c);
        c *= 10.0;
    }
    cuts.push(k);
    let mut total = 0.0;
    for pair in cuts.windows(2) {
        total += adaptive_quad(integrand, pair[0], pair[1], spec)?;
    }
    total += adaptive_quad_semi_infinite(integrand, k, spec)?;
    Ok(total / LN_2)
}

/// Sum rate of the pair.
pub fn spectral_efficiency(r_v: f64, r_w: f64) -> f64 {
    r_v + r_w
}

/// Consumed-power model: static BS power, per-user terminals, amplifier
/// inefficiency and per-element RIS control.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyModel {
    pub p_bs_static: f64,
    pub eps_b: f64,
    pub p_user: f64,
    pub p_ris_ctrl: f64,
}

impl Default for EnergyModel {
    fn default() -> Self {
        Self {
            p_bs_static: 10f64.powf(0.9),
            eps_b: 1.2,
            p_user: 0.01,
            p_ris_ctrl: 0.01,
        }
    }
}

impl EnergyModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.p_bs_static >= 0.0 && self.p_user >= 0.0 && self.p_ris_ctrl >= 0.0) {
            return Err(Error::InvalidConfig("energy model powers must be >= 0".into()));
        }
        if !(self.eps_b >= 1.0) {
            return Err(Error::InvalidConfig(format!("eps_b must be >= 1, got {}", self.eps_b)));
        }
        Ok(())
    }
}

/// Total consumed power in Watts for transmit power `p` (Watts, unattenuated).
pub fn energy_total(model: &EnergyModel, p: f64, n_ris: usize) -> f64 {
    model.p_bs_static + 2.0 * model.p_user + p * model.eps_b + n_ris as f64 * model.p_ris_ctrl
}

/// `S / P_e`; with a bandwidth the result is in bits per Joule.
pub fn energy_efficiency(se: f64, pe: f64, bandwidth_hz: Option<f64>) -> Result<f64> {
    if !(pe > 0.0) {
        return Err(Error::Domain(format!("consumed power must be > 0, got {pe}")));
    }
    Ok(se * bandwidth_hz.unwrap_or(1.0) / pe)
}
