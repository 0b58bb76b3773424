//! Validation suites: closed forms against independent oracles, Monte Carlo and
//! goodness-of-fit checks. Every suite uses fixed seeds and returns one
//! [`TestRecord`] per check (measured value, tolerance, pass flag).

use crate::analytic::{
    effective_catastrophe_moments, extinction_lbdpc, mean_lbdpc, sojourn_survival,
    catastrophe_time_survival, state_prob_lbdpc, tempered_first_visit_moments, tempered_lbdpc,
    var_lbdpc, LinearParams, LinearQuantity,
};
use crate::error::{invalid, Result};
use crate::laplace::{invert, LtEvaluator, Method, C64};
use crate::markov::{
    fde_residual_caputo, fde_residual_laplace, subordinated_probs, transient_probs, ModelSpec,
    TimeChange, Truncation,
};
use crate::mcstats::{ks_one_sample, ks_two_sample, map_paths, Estimate, Model, TestRecord};
use crate::mlfunc::{ml, ml3, MlArgs, SeriesControl};
use crate::randgen::{sample_stable, sample_tempered_stable_split, RngStream, StableParams};
use crate::simulate::SamplePath;
use gauss_quad::{FiniteAboveNegOneF64, GaussLaguerre};
use statrs::function::gamma::gamma;
use std::fmt;
use std::num::NonZeroUsize;
use std::str::FromStr;

/// Rows (λ, μ, ν, mean, variance) of the reference moment table at α = 0.5, t = 1.
pub const TABLE1: [(f64, f64, f64, f64, f64); 10] = [
    (0.5, 0.3, 0.2, 1.0000, 1.3630),
    (1.0, 0.1, 0.3, 2.2989, 33.3586),
    (1.5, 1.1, 1.2, 0.4891, 1.6125),
    (2.0, 1.6, 1.7, 0.3576, 1.2186),
    (2.5, 2.1, 2.2, 0.2786, 0.9533),
    (3.0, 2.0, 1.5, 0.6157, 8.2566),
    (3.5, 2.5, 1.3, 0.7346, 14.2237),
    (4.0, 2.7, 2.6, 0.3576, 4.1827),
    (4.5, 2.8, 2.9, 0.3785, 8.5673),
    (5.0, 2.6, 3.5, 0.4017, 42.2386),
];
pub const TABLE1_ALPHA: f64 = 0.5;
pub const TABLE1_T: f64 = 1.0;
/// Half a unit in the fourth decimal.
pub const TABLE1_TOL: f64 = 5e-5;

pub const ROUNDTRIP_TOL: f64 = 1e-6;
pub const LAPLACE_RESIDUAL_TOL: f64 = 1e-8;
pub const CAPUTO_RESIDUAL_TOL: f64 = 1e-3;
pub const ORACLE_DRAWS: usize = 1_000_000;
pub const ORACLE_FLOOR: f64 = 2e-3;
pub const MC_PATHS: usize = 100_000;
pub const KS_SAMPLES: usize = 10_000;
pub const REDUCTION_TOL: f64 = 1e-8;
pub const TEMPERING_LIMIT_TOL: f64 = 1e-5;
/// θ^α used for the θ → 0 limit; the tempering correction is of this order.
pub const WEAK_TEMPERING: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Table1,
    LtRoundtrip,
    Fde,
    Oracle,
    MomentsMc,
    Distributions,
    MinDecomposition,
    Tempered,
    Figures,
    Reductions,
}

impl Suite {
    pub const ALL: [Suite; 10] = [
        Suite::Table1,
        Suite::LtRoundtrip,
        Suite::Fde,
        Suite::Oracle,
        Suite::MomentsMc,
        Suite::Distributions,
        Suite::MinDecomposition,
        Suite::Tempered,
        Suite::Figures,
        Suite::Reductions,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Suite::Table1 => "table1",
            Suite::LtRoundtrip => "lt-roundtrip",
            Suite::Fde => "fde",
            Suite::Oracle => "oracle",
            Suite::MomentsMc => "moments-mc",
            Suite::Distributions => "distributions",
            Suite::MinDecomposition => "min-decomposition",
            Suite::Tempered => "tempered",
            Suite::Figures => "figures",
            Suite::Reductions => "reductions",
        }
    }

    pub fn run(&self) -> Result<Vec<TestRecord>> {
        match self {
            Suite::Table1 => table1(),
            Suite::LtRoundtrip => lt_roundtrip(),
            Suite::Fde => fde(),
            Suite::Oracle => oracle(),
            Suite::MomentsMc => moments_mc(),
            Suite::Distributions => distributions(),
            Suite::MinDecomposition => min_decomposition(),
            Suite::Tempered => tempered(),
            Suite::Figures => figures(),
            Suite::Reductions => reductions(),
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Suite {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|x| x.as_str() == s)
            .ok_or_else(|| invalid(format!("unknown suite {s:?}")))
    }
}

fn check(id: impl Into<String>, measured: f64, tol: f64, n: usize) -> TestRecord {
    TestRecord {
        test_id: id.into(),
        statistic: measured,
        threshold: tol,
        pass: measured <= tol,
        seed: 0,
        n,
    }
}

fn ctl() -> SeriesControl {
    SeriesControl::default()
}

fn lin(alpha: f64, lambda: f64, mu: f64, nu: f64) -> Result<LinearParams> {
    LinearParams::untempered(alpha, lambda, mu, nu)
}

/// The grid shared by the oracle and Monte Carlo moment suites.
pub fn model_grid() -> Vec<(f64, f64, f64, f64, f64)> {
    let mut out = Vec::new();
    for alpha in [0.5, 0.8] {
        for (l, m) in [(1.0, 2.0), (2.0, 1.0), (1.0, 1.0)] {
            for nu in [0.0, 0.5] {
                for t in [0.5, 1.0, 2.0] {
                    out.push((alpha, l, m, nu, t));
                }
            }
        }
    }
    out
}

fn table1() -> Result<Vec<TestRecord>> {
    TABLE1
        .iter()
        .enumerate()
        .map(|(i, &(l, m, nu, mean, var))| {
            let p = lin(TABLE1_ALPHA, l, m, nu)?;
            let em = mean_lbdpc(&p, TABLE1_T, &ctl())?;
            let ev = var_lbdpc(&p, TABLE1_T, &ctl())?;
            let err = (em - mean).abs().max((ev - var).abs());
            Ok(check(format!("table1/row{}", i + 1), err, TABLE1_TOL, 2))
        })
        .collect()
}

fn lt_roundtrip() -> Result<Vec<TestRecord>> {
    let mut out = Vec::new();
    for alpha in [0.3, 0.5, 0.8] {
        let mut worst: f64 = 0.0;
        let mut n = 0;
        for beta in [1.0, alpha + 1.0] {
            for gamma in [1.0, 2.0] {
                for omega in [-1.0, -0.5, 0.5, 1.0] {
                    let f = LtEvaluator::new("auxiliary", move |z: C64| {
                        Ok(z.powf(alpha * gamma - beta) / (z.powf(alpha) - omega).powf(gamma))
                    });
                    let f = if omega > 0.0 {
                        f.with_abscissa(omega.powf(1.0 / alpha))
                    } else {
                        f
                    };
                    for t in [0.1, 0.5, 1.0, 2.0, 5.0] {
                        let v = invert(&f, t, Method::Talbot)?;
                        let e = t.powf(beta - 1.0)
                            * ml3(MlArgs::new(alpha, beta, gamma, omega * t.powf(alpha)), &ctl())?;
                        worst = worst.max((v - e).abs());
                        n += 1;
                    }
                }
            }
        }
        out.push(check(format!("lt-roundtrip/alpha={alpha}"), worst, ROUNDTRIP_TOL, n));
    }
    Ok(out)
}

fn fde() -> Result<Vec<TestRecord>> {
    let seed = 7;
    let spec = ModelSpec::linear(1.0, 2.0, 0.5)?;
    let trunc = Truncation::default();
    let mut rng = RngStream::new(seed, 0);
    let z: Vec<f64> = (0..20).map(|_| 0.1 + 9.9 * rng.uniform()).collect();
    let mut out = Vec::new();
    for tc in [
        TimeChange::InverseStable { alpha: 0.6 },
        TimeChange::InverseTempered {
            alpha: 0.6,
            theta: 0.8,
        },
    ] {
        let r = fde_residual_laplace(&spec, 1, tc, &z, &trunc)?;
        let name = match tc {
            TimeChange::InverseTempered { .. } => "fde/laplace-tempered",
            _ => "fde/laplace-stable",
        };
        let mut rec = check(name, r, LAPLACE_RESIDUAL_TOL, z.len());
        rec.seed = seed;
        out.push(rec);
    }
    let r = fde_residual_caputo(&spec, 1, 0.6, 0.01, 200, 5, &trunc)?;
    out.push(check("fde/caputo", r, CAPUTO_RESIDUAL_TOL, 200));
    Ok(out)
}

fn oracle() -> Result<Vec<TestRecord>> {
    let trunc = Truncation {
        n_max: 1600,
        tail_tol: 1e-10,
    };
    let mut out = Vec::new();
    for (i, (alpha, l, m, nu, t)) in model_grid().into_iter().enumerate() {
        let seed = 100 + i as u64;
        let p = lin(alpha, l, m, nu)?;
        let spec = ModelSpec::linear(l, m, nu)?;
        let tc = TimeChange::InverseStable { alpha };
        let mc = subordinated_probs(&spec, 1, t, tc, &trunc, ORACLE_DRAWS, seed)?;
        let tag = format!("alpha={alpha},lambda={l},mu={m},nu={nu},t={t}");
        for n in 0..=3 {
            let v = if n == 0 {
                extinction_lbdpc(&p, t, &ctl())?
            } else {
                state_prob_lbdpc(&p, n, t, &ctl())?
            };
            let tol = (3.0 * mc.stderr[n]).max(ORACLE_FLOOR);
            out.push(TestRecord {
                test_id: format!("oracle/p{n}/{tag}"),
                statistic: (v - mc.mean[n]).abs(),
                threshold: tol,
                pass: (v - mc.mean[n]).abs() <= tol,
                seed,
                n: mc.n_mc,
            });
        }
    }
    Ok(out)
}

fn states_at(p: &LinearParams, t: f64, seed: u64) -> Result<Vec<f64>> {
    map_paths(&Model::Linear(*p), 1, t, MC_PATHS, seed, |path| {
        path.state_at(t).unwrap_or(path.initial) as f64
    })
}

fn moments_mc() -> Result<Vec<TestRecord>> {
    let mut out = Vec::new();
    for (i, (alpha, l, m, nu, t)) in model_grid().into_iter().enumerate() {
        let seed = 200 + i as u64;
        let p = lin(alpha, l, m, nu)?;
        let x = states_at(&p, t, seed)?;
        let tag = format!("alpha={alpha},lambda={l},mu={m},nu={nu},t={t}");
        let mean = Estimate::from_samples(&x)?;
        let var = Estimate::variance_from_samples(&x)?;
        out.push(TestRecord::from_z(
            format!("moments-mc/mean/{tag}"),
            &mean,
            mean_lbdpc(&p, t, &ctl())?,
            3.0,
            seed,
        ));
        out.push(TestRecord::from_z(
            format!("moments-mc/var/{tag}"),
            &var,
            var_lbdpc(&p, t, &ctl())?,
            3.0,
            seed,
        ));
    }
    Ok(out)
}

fn first_times<F>(model: &Model, m0: u64, n: usize, seed: u64, f: F) -> Result<Vec<f64>>
where
    F: Fn(&SamplePath) -> Option<f64> + Sync,
{
    map_paths(model, m0, f64::INFINITY, n, seed, f)?
        .into_iter()
        .map(|v| v.ok_or_else(|| invalid("path ended before the event")))
        .collect()
}

fn first_event(path: &SamplePath) -> Option<f64> {
    path.events.first().map(|e| e.time)
}

fn distributions() -> Result<Vec<TestRecord>> {
    let mut out = Vec::new();
    let spec = ModelSpec::linear(1.0, 2.0, 0.5)?;
    let m0 = 2;
    for (name, p, seed) in [
        ("distributions/sojourn-stable", LinearParams::new(0.6, 0.0, 1.0, 2.0, 0.5)?, 301),
        ("distributions/sojourn-tempered", LinearParams::new(0.6, 0.8, 1.0, 2.0, 0.5)?, 303),
    ] {
        let tc = if p.theta > 0.0 {
            TimeChange::InverseTempered {
                alpha: p.alpha,
                theta: p.theta,
            }
        } else {
            TimeChange::InverseStable { alpha: p.alpha }
        };
        let x = first_times(&Model::Linear(p), m0, KS_SAMPLES, seed, first_event)?;
        let ks = ks_one_sample(&x, |s| {
            1.0 - sojourn_survival(&spec, tc, m0, s, &ctl()).unwrap_or(f64::NAN)
        })?;
        out.push(TestRecord::from_outcome(name, ks, seed, x.len()));
    }
    let seed = 302;
    let nu = 1.0;
    let tc = TimeChange::InverseStable { alpha: 0.7 };
    let model = Model::General {
        spec: ModelSpec::catastrophe_only(nu)?,
        tc,
        modified: true,
    };
    let x = first_times(&model, 3, KS_SAMPLES, seed, SamplePath::first_catastrophe)?;
    let ks = ks_one_sample(&x, |s| {
        1.0 - catastrophe_time_survival(tc, nu, s, &ctl()).unwrap_or(f64::NAN)
    })?;
    out.push(TestRecord::from_outcome("distributions/catastrophe-time", ks, seed, x.len()));
    Ok(out)
}

/// First visits to zero against D(min(T, E)): T the first passage of the chain without
/// catastrophes in operational time, E ~ Exp(ν), D the (tempered) stable subordinator
/// driving both.
fn min_decomposition() -> Result<Vec<TestRecord>> {
    let mut out = Vec::new();
    for (name, theta, seed) in [
        ("min-decomposition/stable", 0.0, 401),
        ("min-decomposition/tempered", 0.8, 403),
    ] {
        let alpha = 0.7;
        let nu = 0.5;
        let with = LinearParams::new(alpha, theta, 1.0, 2.0, nu)?;
        let operational = lin(1.0, 1.0, 2.0, 0.0)?;
        let a = first_times(&Model::Linear(with), 1, KS_SAMPLES, seed, SamplePath::first_visit_zero)?;
        let b: Vec<f64> = (0..KS_SAMPLES as u64)
            .map(|i| {
                let mut rng = RngStream::new(seed + 1, i);
                let t0 = Model::Linear(operational)
                    .simulate(1, f64::INFINITY, &mut rng)?
                    .first_visit_zero()
                    .ok_or_else(|| invalid("subcritical path did not reach zero"))?;
                let s = t0.min(rng.exp1() / nu);
                if theta > 0.0 {
                    sample_tempered_stable_split(StableParams { alpha, theta, t: s }, &mut rng)
                } else {
                    Ok(s.powf(1.0 / alpha) * sample_stable(alpha, &mut rng)?)
                }
            })
            .collect::<Result<_>>()?;
        let ks = ks_two_sample(&a, &b)?;
        out.push(TestRecord::from_outcome(name, ks, seed, a.len()));
    }
    Ok(out)
}

fn tempered() -> Result<Vec<TestRecord>> {
    let trunc = Truncation::default();
    let (alpha, theta) = (0.6, 0.8);
    let tc = TimeChange::InverseTempered { alpha, theta };
    let mut out = Vec::new();

    let seed = 501;
    let nu = 0.5;
    let exact = tempered_first_visit_moments(&ModelSpec::linear(1.0, 2.0, nu)?, theta, alpha, nu, 1, &trunc)?;
    let p = LinearParams::new(alpha, theta, 1.0, 2.0, nu)?;
    let x = first_times(&Model::Linear(p), 1, MC_PATHS, seed, SamplePath::first_visit_zero)?;
    out.push(TestRecord::from_z("tempered/first-visit-mean", &Estimate::from_samples(&x)?, exact.mean, 3.0, seed));
    out.push(TestRecord::from_z(
        "tempered/first-visit-var",
        &Estimate::variance_from_samples(&x)?,
        exact.variance,
        5.0,
        seed,
    ));

    // The modified chain is absorbed at the first catastrophe that strikes a non-zero state.
    let seed = 502;
    let nu = 0.4;
    let spec = ModelSpec::new(|n| 0.5 + n as f64, |n| 2.0 * n as f64, nu)?;
    let exact = effective_catastrophe_moments(&spec, theta, alpha, nu, 1, &trunc)?;
    let model = Model::General {
        spec,
        tc,
        modified: true,
    };
    let x = first_times(&model, 1, MC_PATHS, seed, SamplePath::first_catastrophe)?;
    out.push(TestRecord::from_z("tempered/effective-mean", &Estimate::from_samples(&x)?, exact.mean, 3.0, seed));
    out.push(TestRecord::from_z(
        "tempered/effective-var",
        &Estimate::variance_from_samples(&x)?,
        exact.variance,
        5.0,
        seed,
    ));
    Ok(out)
}

/// Largest consecutive increment; negative means strictly decreasing.
fn largest_step(v: &[f64]) -> f64 {
    v.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max)
}

fn decreasing(id: &str, v: &[f64]) -> TestRecord {
    let step = largest_step(v);
    TestRecord {
        test_id: id.into(),
        statistic: step,
        threshold: 0.0,
        pass: step < 0.0,
        seed: 0,
        n: v.len(),
    }
}

fn figures() -> Result<Vec<TestRecord>> {
    let t = 3.0;
    let by_alpha: Vec<f64> = [0.3, 0.5, 0.7, 0.9, 1.0]
        .iter()
        .map(|&a| mean_lbdpc(&lin(a, 3.0, 1.0, 1.0)?, t, &ctl()))
        .collect::<Result<_>>()?;
    let by_nu: Vec<f64> = [0.5, 1.0, 2.0, 4.0]
        .iter()
        .map(|&nu| mean_lbdpc(&lin(0.5, 4.0, 1.0, nu)?, t, &ctl()))
        .collect::<Result<_>>()?;
    Ok(vec![
        decreasing("figures/mean-decreasing-in-alpha", &by_alpha),
        decreasing("figures/mean-decreasing-in-nu", &by_nu),
    ])
}

/// Extinction, mean and variance of the time-changed linear process without catastrophes,
/// from the classical generating-function solution averaged over Y(t).
fn lbdp_forms(alpha: f64, lambda: f64, mu: f64, t: f64) -> Result<[f64; 3]> {
    let c = ctl();
    let e = |x: f64| ml(alpha, x * t.powf(alpha), &c);
    let d = lambda - mu;
    let ext = if d.abs() < 1e-12 {
        let rule = GaussLaguerre::new(
            NonZeroUsize::new(128).expect("nonzero"),
            FiniteAboveNegOneF64::new(0.0).expect("valid"),
        );
        let mut acc = 0.0;
        for (x, w) in rule.iter() {
            acc += w * e(-lambda * x)?;
        }
        1.0 - acc
    } else if d < 0.0 {
        // p0(y) = 1 − ((μ−λ)/μ) Σ_k (λ/μ)^k e^{−(k+1)(μ−λ)y}
        let r = lambda / mu;
        let mut acc = 0.0;
        let mut k = 0;
        while r.powi(k) > 1e-17 {
            acc += r.powi(k) * e(d * (k + 1) as f64)?;
            k += 1;
        }
        1.0 + d / mu * acc
    } else {
        // p0(y) = Σ_k (μ/λ)^{k+1} (e^{−k(λ−μ)y} − e^{−(k+1)(λ−μ)y})
        let r = mu / lambda;
        let mut acc = 0.0;
        let mut k = 0;
        while r.powi(k) > 1e-17 {
            acc += r.powi(k + 1) * (e(-d * k as f64)? - e(-d * (k + 1) as f64)?);
            k += 1;
        }
        acc
    };
    let mean = e(d)?;
    let second = if d.abs() < 1e-12 {
        1.0 + 2.0 * lambda * t.powf(alpha) / gamma(1.0 + alpha)
    } else {
        let e2 = e(2.0 * d)?;
        (lambda + mu) / d * (e2 - mean) + e2
    };
    Ok([ext, mean, second - mean * mean])
}

fn reductions() -> Result<Vec<TestRecord>> {
    let mut out = Vec::new();
    let trunc = Truncation {
        n_max: 400,
        tail_tol: 1e-12,
    };

    let mut worst: f64 = 0.0;
    let mut n = 0;
    for (l, m, nu) in [(1.0, 2.0, 0.5), (2.0, 1.0, 0.5), (1.0, 1.0, 0.5), (1.3, 0.7, 0.0)] {
        let p = lin(1.0, l, m, nu)?;
        for t in [0.5, 2.0] {
            let chain = transient_probs(&ModelSpec::linear(l, m, nu)?, 1, t, &trunc)?;
            let mean: f64 = chain.iter().enumerate().map(|(k, v)| k as f64 * v).sum();
            let second: f64 = chain.iter().enumerate().map(|(k, v)| (k * k) as f64 * v).sum();
            let pairs = [
                (extinction_lbdpc(&p, t, &ctl())?, chain[0]),
                (state_prob_lbdpc(&p, 1, t, &ctl())?, chain[1]),
                (state_prob_lbdpc(&p, 2, t, &ctl())?, chain[2]),
                (state_prob_lbdpc(&p, 3, t, &ctl())?, chain[3]),
                (mean_lbdpc(&p, t, &ctl())?, mean),
                (var_lbdpc(&p, t, &ctl())?, second - mean * mean),
            ];
            for (a, b) in pairs {
                worst = worst.max((a - b).abs());
                n += 1;
            }
        }
    }
    out.push(check("reductions/unit-order-vs-chain", worst, REDUCTION_TOL, n));

    let mut worst: f64 = 0.0;
    let mut n = 0;
    for alpha in [0.5, 0.8] {
        for (l, m) in [(1.0, 2.0), (2.0, 1.0), (1.0, 1.0)] {
            let p = lin(alpha, l, m, 0.0)?;
            for t in [0.5, 1.0, 2.0] {
                let reference = lbdp_forms(alpha, l, m, t)?;
                let ours = [
                    extinction_lbdpc(&p, t, &ctl())?,
                    mean_lbdpc(&p, t, &ctl())?,
                    var_lbdpc(&p, t, &ctl())?,
                ];
                for (a, b) in ours.iter().zip(reference) {
                    worst = worst.max((a - b).abs() / b.abs().max(1.0));
                    n += 1;
                }
            }
        }
    }
    out.push(check("reductions/no-catastrophes-vs-lbdp", worst, REDUCTION_TOL, n));

    let mut worst: f64 = 0.0;
    let mut n = 0;
    for alpha in [0.3, 0.5, 0.8] {
        let theta = WEAK_TEMPERING.powf(1.0 / alpha);
        for (l, m, nu) in [(1.0, 2.0, 0.5), (2.0, 1.0, 0.5), (1.0, 1.0, 0.3)] {
            let plain = lin(alpha, l, m, nu)?;
            let temp = LinearParams { theta, ..plain };
            for t in [0.5, 1.0, 2.0] {
                let pairs = [
                    (tempered_lbdpc(&temp, LinearQuantity::Extinction, t, &ctl())?, extinction_lbdpc(&plain, t, &ctl())?),
                    (tempered_lbdpc(&temp, LinearQuantity::StateProb(1), t, &ctl())?, state_prob_lbdpc(&plain, 1, t, &ctl())?),
                    (tempered_lbdpc(&temp, LinearQuantity::Mean, t, &ctl())?, mean_lbdpc(&plain, t, &ctl())?),
                    (tempered_lbdpc(&temp, LinearQuantity::Variance, t, &ctl())?, var_lbdpc(&plain, t, &ctl())?),
                ];
                for (a, b) in pairs {
                    worst = worst.max((a - b).abs() / b.abs().max(1.0));
                    n += 1;
                }
            }
        }
    }
    out.push(check("reductions/weak-tempering", worst, TEMPERING_LIMIT_TOL, n));
    Ok(out)
}
