//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::collections::BTreeMap;
use std::process::{Command, ExitCode};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ris_noma::closedform::{
    closed_form_rate_at, energy_total, ergodic_rate_w_quad_at, outage_prob, BoundCase, EnergyModel, GammaApprox,
    OutageThresholds,
};
use ris_noma::experiment::{fit_slope, run, ExperimentSpec, Preset, SweepAxis, SweepResult};
use ris_noma::specfun::{
    adaptive_quad, adaptive_quad_semi_infinite, exp_integral_ei, reg_lower_gamma, reg_upper_gamma, QuadratureSpec,
};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn custom(config: &str) -> SweepResult {
    let mut spec = ExperimentSpec::from_preset(Preset::Custom);
    spec.apply_config_text(config).unwrap();
    run(&spec).unwrap()
}

fn series_map(table: &SweepResult, metric: &str, label: &str) -> BTreeMap<i64, (f64, Option<f64>)> {
    table
        .rows
        .iter()
        .filter(|r| r.metric == metric && r.case_label == label)
        .map(|r| ((r.axis_value * 1000.0).round() as i64, (r.value, r.std_error)))
        .collect()
}

// 1. simulated outage between the best- and worst-case curves
fn bracketing() -> Verdict {
    let spec = ExperimentSpec::from_preset(Preset::Fig2);
    let table = run(&spec).unwrap();
    let mut checked = 0;
    let mut misses = Vec::new();
    for n in 1..=3 {
        let label = format!("N={n}");
        let sim = series_map(&table, "op_sim", &label);
        let worst = series_map(&table, "op_worst", &label);
        let best = series_map(&table, "op_best", &label);
        for (x, (v, se)) in &sim {
            if !(1e-4..=1.0).contains(v) {
                continue;
            }
            checked += 1;
            let band = 3.0 * se.unwrap_or(0.0);
            let (lo, hi) = (best[x].0, worst[x].0);
            if *v < lo - band || *v > hi + band {
                misses.push(format!("{label}@{}dBm sim={v:.3e} in [{lo:.3e}, {hi:.3e}]±{band:.1e}", *x as f64 / 1e3));
            }
        }
    }
    verdict(
        misses.is_empty(),
        format!("{checked} points checked, {} outside: {}", misses.len(), misses.join("; ")),
    )
}

/// Outage of the strongest of `w` Gamma(k, λ) gains by nested quadrature of
/// the density, in the variable u = (x/λ)^k which removes the endpoint
/// singularity for k < 1.
fn outage_by_integration(k: f64, lambda: f64, threshold: f64, w: usize) -> f64 {
    let spec = QuadratureSpec::new(1e-14, 1e-12, 5000).unwrap();
    // Γ(k + 1) by quadrature as well, so no special function is shared
    let gamma_k1 = adaptive_quad(|s| s.powf(k) * (-s).exp(), 0.0, k, &spec).unwrap()
        + adaptive_quad_semi_infinite(|s| s.powf(k) * (-s).exp(), k, &spec).unwrap();
    let cdf = |s: f64| {
        adaptive_quad(|u| (-u.powf(1.0 / k)).exp(), 0.0, s.powf(k), &spec).unwrap() / gamma_k1
    };
    let upper = (threshold / lambda).powf(k);
    adaptive_quad(
        |u| {
            let s = u.powf(1.0 / k);
            w as f64 * cdf(s).powi(w as i32 - 1) * (-s).exp() / gamma_k1
        },
        0.0,
        upper,
        &spec,
    )
    .unwrap()
}

// 2. closed-form outage against direct integration
fn outage_identity() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let k = rng.random_range(0.5..10.0);
        let lambda = 10f64.powf(rng.random_range(-9.0..0.0));
        let w = rng.random_range(1..=4usize);
        let threshold = lambda * k * rng.random_range(0.05..3.0);
        let approx = GammaApprox { k, lambda, case: BoundCase::Worst };
        let thr = OutageThresholds {
            i_v: threshold,
            i_w: threshold,
            i_w_star: threshold,
            eps_v: 0.0,
            eps_w: 0.0,
        };
        let err = (outage_prob(&approx, &thr, w) - outage_by_integration(k, lambda, threshold, w)).abs();
        worst = worst.max(err);
    }
    verdict(worst <= 1e-9, format!("max abs error {worst:.2e} over 20 tuples (tol 1e-9)"))
}

// 3. no-direct-link diversity order
fn diversity_order() -> Verdict {
    let table = custom(
        "grid = 0:40:2.5\noutputs = op_worst\ndirect_link = false\nm = 1\nn_ris = 3\nn_users = 2\n",
    );
    let slope = fit_slope(&table, "op_worst", Some("custom"), SweepAxis::SnrDbm).unwrap();
    verdict(
        (slope - 2.0).abs() <= 0.2,
        format!("fitted worst-case diversity {slope:.4} (target 2.0 ±10%)"),
    )
}

// 4. high-SNR slopes of the NOMA and OMA rates
fn high_snr_slope() -> Verdict {
    let table = custom("grid = 0:40:2.5\noutputs = rate_W_worst, rate_W_best, oma\ntrials = 100000\n");
    let mut pass = true;
    let mut parts = Vec::new();
    for (metric, target) in [("rate_W_worst", 1.0), ("rate_W_best", 1.0), ("oma_W_sim", 0.5), ("oma_v_sim", 0.5)] {
        let s = fit_slope(&table, metric, Some("custom"), SweepAxis::SnrDbm).unwrap();
        pass &= (s - target).abs() <= 0.05 * target;
        parts.push(format!("{metric} {s:.4}"));
    }
    verdict(pass, format!("{} over 30-40 dBm (±5%)", parts.join(", ")))
}

// 5. user-v rate ceiling with a perfectly shared beam
fn rate_ceiling() -> Verdict {
    let table = custom("grid = 0:40:2.5\noutputs = rate_v_sim\ntrials = 100000\nv_aligned = true\n");
    let ceiling = 2.5f64.log2();
    let sim = series_map(&table, "rate_v_sim", "custom");
    let (top, se) = sim[&40_000];
    let exceed = sim
        .values()
        .filter(|(v, se)| *v > ceiling + 3.0 * se.unwrap_or(0.0))
        .count();
    verdict(
        (top - ceiling).abs() <= 0.05 && exceed == 0,
        format!(
            "rate at 40 dBm {top:.5} (se {:.1e}) vs ceiling {ceiling:.5}; {exceed} points above ceiling",
            se.unwrap_or(0.0)
        ),
    )
}

// 6. closed-form ergodic rate against quadrature
fn closed_form_rate() -> Verdict {
    let spec = QuadratureSpec::new(1e-13, 1e-11, 5000).unwrap();
    let cs: Vec<f64> = (0..=16).map(|i| 10f64.powf(-3.0 + 0.25 * i as f64)).collect();
    let mut rel_unit: f64 = 0.0;
    let mut rel_small: f64 = 0.0;
    for &c in &cs {
        let q = ergodic_rate_w_quad_at(1.0, 1, c, &spec).unwrap();
        rel_unit = rel_unit.max(((closed_form_rate_at(1, 1, c).unwrap() - q) / q).abs());
        for k in 1..=4 {
            for w in 1..=3 {
                let q = ergodic_rate_w_quad_at(k as f64, w, c, &spec).unwrap();
                let cf = closed_form_rate_at(k, w, c).unwrap();
                rel_small = rel_small.max(((cf - q) / q).abs());
            }
        }
    }
    verdict(
        rel_unit <= 1e-6 && rel_small <= 1e-2,
        format!("k=1,W=1 rel {rel_unit:.2e} (tol 1e-6); k<=4,W<=3 rel {rel_small:.2e} (tol 1e-2); C in [1e-3, 10]"),
    )
}

// 7. special-function identities
fn special_functions() -> Verdict {
    let mut e1: f64 = 0.0;
    for i in 0..=5000 {
        let x = 50.0 * i as f64 / 5000.0;
        e1 = e1.max((reg_lower_gamma(1.0, x).unwrap() - (1.0 - (-x).exp())).abs());
    }
    let mut e2: f64 = 0.0;
    for k in 1..=10usize {
        for i in 0..=400 {
            let x = 40.0 * i as f64 / 400.0;
            // Q(k, x) = e^{-x} Σ_{j<k} x^j / j!
            let mut term = 1.0;
            let mut sum = 0.0;
            for j in 0..k {
                if j > 0 {
                    term *= x / j as f64;
                }
                sum += term;
            }
            e2 = e2.max((reg_upper_gamma(k as f64, x).unwrap() - (-x).exp() * sum).abs());
        }
    }
    // series oracle: Ei(x) = γ + ln|x| + Σ x^n / (n·n!)
    let x: f64 = -1.0;
    let mut series = 0.577_215_664_901_532_9 + x.abs().ln();
    let mut term = 1.0;
    for n in 1..60 {
        term *= x / n as f64;
        series += term / n as f64;
    }
    let ei = exp_integral_ei(-1.0).unwrap();
    let e3 = (ei - series).abs().max((ei + 0.219_383_9).abs());
    verdict(
        e1 <= 1e-12 && e2 <= 1e-12 && e3 <= 1e-7,
        format!("P(1,x) err {e1:.1e}; integer-k sum err {e2:.1e}; Ei(-1)={ei:.9} err {e3:.1e}"),
    )
}

// 8. NOMA against OMA spectral efficiency
fn noma_vs_oma() -> Verdict {
    let table = run(&ExperimentSpec::from_preset(Preset::Fig6)).unwrap();
    let gap = |label: &str| -> BTreeMap<i64, f64> {
        let se = series_map(&table, "se_sim", label);
        let oma = series_map(&table, "oma_sim", label);
        se.iter()
            .filter(|(x, _)| **x >= 20_000)
            .map(|(x, v)| (*x, v.0 - oma[x].0))
            .collect()
    };
    let (g4, g8) = (gap("N=4"), gap("N=8"));
    let noma_wins = g4.values().chain(g8.values()).all(|g| *g >= 0.0);
    let widening = g4.iter().all(|(x, g)| g8[x] > *g);
    let (lo, hi) = (g4.keys().next().unwrap(), g4.keys().last().unwrap());
    verdict(
        noma_wins && widening,
        format!(
            "NOMA>=OMA at all points >=20 dBm: {noma_wins}; gap N=4 {:.4}..{:.4}, N=8 {:.4}..{:.4}; gap grows with N: {widening}",
            g4[lo], g4[hi], g8[lo], g8[hi]
        ),
    )
}

// 9. surface against relays
fn relay_crossover() -> Verdict {
    let spec = ExperimentSpec::from_preset(Preset::Fig7);
    let table = run(&spec).unwrap();
    let label = "p=0dBm";
    let se = series_map(&table, "se_sim", label);
    let fd = series_map(&table, "fd_relay", label);
    let hd = series_map(&table, "hd_relay", label);
    let crossing = se
        .iter()
        .find(|(x, v)| v.0 > fd[x].0.max(hd[x].0))
        .map(|(x, _)| *x as f64 / 1e3);
    let ordered = fd.iter().all(|(x, v)| v.0 < hd[x].0);

    // without self-interference the full-duplex relay must win instead
    let mut clean = spec.clone();
    clean.overrides.push(("eps_h".into(), "0".into()));
    clean.mc = ris_noma::montecarlo::MonteCarloConfig::new(20_000, spec.mc.master_seed);
    clean.grid = vec![2.0];
    let t0 = run(&clean).unwrap();
    let (fd0, hd0) = (series_map(&t0, "fd_relay", label)[&2000].0, series_map(&t0, "hd_relay", label)[&2000].0);

    let pass = crossing.is_some_and(|n| n <= 26.0) && ordered && fd0 > hd0;
    let any = fd.values().next().unwrap().0;
    let hdv = hd.values().next().unwrap().0;
    verdict(
        pass,
        format!(
            "surface beats both relays from N={crossing:?}; eps_H=0.1: FD {any:.4} < HD {hdv:.4}: {ordered}; eps_H=0: FD {fd0:.4} > HD {hd0:.4}"
        ),
    )
}

// 10. energy-efficiency shape and power budget
fn energy_efficiency() -> Verdict {
    let mut spec = ExperimentSpec::from_preset(Preset::Fig9);
    spec.families.retain(|f| f.label == "p=30dBm");
    spec.mc = ris_noma::montecarlo::MonteCarloConfig::new(1000, spec.mc.master_seed);
    let table = run(&spec).unwrap();
    let ee: Vec<f64> = series_map(&table, "ee_worst", "p=30dBm").values().map(|v| v.0).collect();
    let increasing = ee.windows(2).all(|w| w[1] > w[0]);
    let max_d2 = ee.windows(3).map(|w| w[2] - 2.0 * w[1] + w[0]).fold(f64::NEG_INFINITY, f64::max);
    let total = energy_total(&EnergyModel::default(), 1.0, 10);
    verdict(
        increasing && max_d2 <= 0.0 && (total - 9.263).abs() <= 1e-3,
        format!(
            "{} points, strictly increasing: {increasing}, max second difference {max_d2:.2e}; P_e(1 W, N=10) = {total:.4} W",
            ee.len()
        ),
    )
}

// 11. byte-identical tables across thread counts
fn determinism() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let mut mismatched = Vec::new();
    for preset in Preset::ALL.iter().filter(|p| **p != Preset::Custom) {
        let mut outputs = Vec::new();
        for threads in [1, 4, 16] {
            let path = dir.path().join(format!("{}-{threads}.csv", preset.name()));
            let status = Command::new(env!("CARGO_BIN_EXE_ris-noma"))
                .args(["run", "--preset", preset.name(), "--trials", "2000", "--seed", "7", "--out"])
                .arg(&path)
                .env("RIS_NOMA_THREADS", threads.to_string())
                .output()
                .unwrap();
            assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
            outputs.push(std::fs::read(&path).unwrap());
        }
        if outputs.iter().any(|o| *o != outputs[0]) {
            mismatched.push(preset.name());
        }
    }
    verdict(
        mismatched.is_empty(),
        format!("all presets at 1/4/16 threads; mismatches: {mismatched:?}"),
    )
}

type Check = fn() -> Verdict;

fn main() -> ExitCode {
    let criteria: [(&str, Check); 11] = [
        ("bracketing", bracketing),
        ("outage identity", outage_identity),
        ("diversity order", diversity_order),
        ("high-SNR slope", high_snr_slope),
        ("rate ceiling", rate_ceiling),
        ("closed-form rate", closed_form_rate),
        ("special functions", special_functions),
        ("NOMA vs OMA", noma_vs_oma),
        ("relay crossover", relay_crossover),
        ("EE shape", energy_efficiency),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let v = check();
        let tag = if v.pass { "PASS" } else { "FAIL" };
        println!(
            "criterion {:>2} {tag} {name} ({:.1}s): {}",
            i + 1,
            start.elapsed().as_secs_f64(),
            v.detail
        );
        if !v.pass {
            failed += 1;
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
