//! Monte Carlo estimates and goodness-of-fit tests.

use crate::analytic::LinearParams;
use crate::error::{invalid, Result};
use crate::markov::{ModelSpec, TimeChange};
use crate::randgen::RngStream;
use crate::simulate::{simulate_general, simulate_linear, SamplePath};
use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Significance level of every test in this module.
pub const SIGNIFICANCE: f64 = 0.01;
/// Kolmogorov critical value c(0.01).
pub const KS_CRITICAL: f64 = 1.63;
pub const MIN_PATHS: usize = 100;
/// Expected count below which χ² cells are pooled with their neighbour.
pub const MIN_EXPECTED: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
    pub n: usize,
    pub ci95: (f64, f64),
}

impl Estimate {
    pub fn new(value: f64, stderr: f64, n: usize) -> Self {
        Self {
            value,
            stderr,
            n,
            ci95: (value - 1.96 * stderr, value + 1.96 * stderr),
        }
    }

    /// Sample mean with standard error s/√n.
    pub fn from_samples(x: &[f64]) -> Result<Self> {
        let acc = Accumulator::from_slice(x);
        if acc.n < 2 {
            return Err(invalid("need at least two samples"));
        }
        Ok(Self::new(acc.mean, (acc.variance() / acc.n as f64).sqrt(), acc.n))
    }

    /// Unbiased sample variance with the delta-method standard error
    /// √((m₄ − s⁴(n−3)/(n−1))/n).
    pub fn variance_from_samples(x: &[f64]) -> Result<Self> {
        let acc = Accumulator::from_slice(x);
        if acc.n < 4 {
            return Err(invalid("need at least four samples"));
        }
        let n = acc.n as f64;
        let s2 = acc.variance();
        let m4 = acc.m4 / n;
        let v = ((m4 - s2 * s2 * (n - 3.0) / (n - 1.0)) / n).max(0.0);
        Ok(Self::new(s2, v.sqrt(), acc.n))
    }

    /// |value − reference| / stderr; infinite when stderr is 0 and the values differ.
    pub fn z_score(&self, reference: f64) -> f64 {
        let d = (self.value - reference).abs();
        if d == 0.0 {
            0.0
        } else {
            d / self.stderr
        }
    }
}

/// Count, mean and central moment sums; merging is exact up to rounding.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Accumulator {
    pub n: usize,
    pub mean: f64,
    pub m2: f64,
    pub m3: f64,
    pub m4: f64,
}

impl Accumulator {
    pub fn push(&mut self, x: f64) {
        self.merge(&Accumulator {
            n: 1,
            mean: x,
            ..Default::default()
        });
    }

    pub fn from_slice(x: &[f64]) -> Self {
        let mut a = Self::default();
        for &v in x {
            a.push(v);
        }
        a
    }

    /// Pairwise combination of central moments up to order four.
    pub fn merge(&mut self, o: &Accumulator) {
        if o.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *o;
            return;
        }
        let (na, nb) = (self.n as f64, o.n as f64);
        let n = na + nb;
        let d = o.mean - self.mean;
        let d2 = d * d;
        let m2 = self.m2 + o.m2 + d2 * na * nb / n;
        let m3 = self.m3 + o.m3 + d * d2 * na * nb * (na - nb) / (n * n)
            + 3.0 * d * (na * o.m2 - nb * self.m2) / n;
        let m4 = self.m4
            + o.m4
            + d2 * d2 * na * nb * (na * na - na * nb + nb * nb) / (n * n * n)
            + 6.0 * d2 * (na * na * o.m2 + nb * nb * self.m2) / (n * n)
            + 4.0 * d * (na * o.m3 - nb * self.m3) / n;
        *self = Accumulator {
            n: self.n + o.n,
            mean: self.mean + d * nb / n,
            m2,
            m3,
            m4,
        };
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            f64::NAN
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }
}

/// Empirical distribution function.
#[derive(Debug, Clone)]
pub struct Ecdf {
    sorted: Vec<f64>,
}

impl Ecdf {
    pub fn new(samples: &[f64]) -> Result<Self> {
        if samples.is_empty() {
            return Err(invalid("empty sample"));
        }
        if samples.iter().any(|x| x.is_nan()) {
            return Err(invalid("sample contains NaN"));
        }
        let mut sorted = samples.to_vec();
        sorted.sort_by(f64::total_cmp);
        Ok(Self { sorted })
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.sorted.partition_point(|&v| v <= x) as f64 / self.sorted.len() as f64
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    pub fn samples(&self) -> &[f64] {
        &self.sorted
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TestOutcome {
    pub statistic: f64,
    pub threshold: f64,
    pub pass: bool,
}

impl TestOutcome {
    fn new(statistic: f64, threshold: f64) -> Self {
        Self {
            statistic,
            threshold,
            pass: statistic < threshold,
        }
    }
}

/// sup |F_n − F| against a continuous `cdf`; passes below 1.63/√n.
pub fn ks_one_sample<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> Result<TestOutcome> {
    let e = Ecdf::new(samples)?;
    let n = e.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in e.samples().iter().enumerate() {
        let f = cdf(x);
        d = d.max((i + 1) as f64 / n - f).max(f - i as f64 / n);
    }
    Ok(TestOutcome::new(d, KS_CRITICAL / n.sqrt()))
}

/// sup |F_m − G_n|; passes below c(0.01)·√((m+n)/(mn)).
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<TestOutcome> {
    let (ea, eb) = (Ecdf::new(a)?, Ecdf::new(b)?);
    let (xa, xb) = (ea.samples(), eb.samples());
    let (m, n) = (xa.len() as f64, xb.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < xa.len() && j < xb.len() {
        let x = xa[i].min(xb[j]);
        while i < xa.len() && xa[i] <= x {
            i += 1;
        }
        while j < xb.len() && xb[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / m - j as f64 / n).abs());
    }
    Ok(TestOutcome::new(d, KS_CRITICAL * ((m + n) / (m * n)).sqrt()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChiSquare {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
    pub pass: bool,
}

/// Pearson χ² of observed counts against cell probabilities (pooling cells whose expected
/// count is below 5 into the next cell).
pub fn chi_square(counts: &[u64], probs: &[f64]) -> Result<ChiSquare> {
    if counts.len() != probs.len() || counts.len() < 2 {
        return Err(invalid("counts and probabilities must have equal length ≥ 2"));
    }
    if probs.iter().any(|&p| !(p >= 0.0)) {
        return Err(invalid("negative cell probability"));
    }
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return Err(invalid("no observations"));
    }
    let n = total as f64;
    let mut cells: Vec<(f64, f64)> = Vec::new();
    let (mut o, mut e) = (0.0, 0.0);
    for (&c, &p) in counts.iter().zip(probs) {
        o += c as f64;
        e += p * n;
        if e >= MIN_EXPECTED {
            cells.push((o, e));
            o = 0.0;
            e = 0.0;
        }
    }
    if e > 0.0 || o > 0.0 {
        match cells.last_mut() {
            Some(last) => {
                last.0 += o;
                last.1 += e;
            }
            None => cells.push((o, e)),
        }
    }
    if cells.len() < 2 {
        return Err(invalid("fewer than two cells after pooling"));
    }
    let statistic: f64 = cells.iter().map(|(o, e)| (o - e) * (o - e) / e).sum();
    let dof = cells.len() - 1;
    let dist = ChiSquared::new(dof as f64).map_err(|e| invalid(e.to_string()))?;
    let p_value = 1.0 - dist.cdf(statistic);
    Ok(ChiSquare {
        statistic,
        dof,
        p_value,
        pass: p_value > SIGNIFICANCE,
    })
}

/// Drops censored observations.
pub fn uncensored(values: &[Option<f64>]) -> Vec<f64> {
    values.iter().flatten().copied().collect()
}

/// Which simulator generates the paths.
#[derive(Debug, Clone)]
pub enum Model {
    /// Linear rates; θ selects the stable or tempered time change.
    Linear(LinearParams),
    General {
        spec: ModelSpec,
        tc: TimeChange,
        modified: bool,
    },
}

impl Model {
    pub fn simulate(&self, m0: u64, t_max: f64, rng: &mut RngStream) -> Result<SamplePath> {
        match self {
            Model::Linear(p) => simulate_linear(p, m0, t_max, rng),
            Model::General { spec, tc, modified } => {
                simulate_general(spec, *tc, m0, t_max, rng, *modified)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Quantity {
    MeanAt(f64),
    VarAt(f64),
    ExtinctionAt(f64),
    /// Occupation frequencies of states 0..=n_max at t; the last entry pools everything above.
    StateDistAt { t: f64, n_max: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Estimated {
    Scalar(Estimate),
    Distribution(Vec<Estimate>),
}

impl Estimated {
    pub fn scalar(&self) -> Option<&Estimate> {
        match self {
            Estimated::Scalar(e) => Some(e),
            Estimated::Distribution(_) => None,
        }
    }

    pub fn distribution(&self) -> Option<&[Estimate]> {
        match self {
            Estimated::Scalar(_) => None,
            Estimated::Distribution(v) => Some(v),
        }
    }
}

/// Applies `f` to `n_paths` paths; path `i` uses stream `(seed, i)`. The output order, and
/// hence every aggregate, is independent of the number of worker threads.
pub fn map_paths<T, F>(model: &Model, m0: u64, t_max: f64, n_paths: usize, seed: u64, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&SamplePath) -> T + Sync,
{
    (0..n_paths as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = RngStream::new(seed, i);
            model.simulate(m0, t_max, &mut rng).map(|p| f(&p))
        })
        .collect()
}

/// Monte Carlo estimate of a state functional at time t.
pub fn estimate(q: Quantity, model: &Model, m0: u64, n_paths: usize, seed: u64) -> Result<Estimated> {
    if n_paths < MIN_PATHS {
        return Err(invalid(format!("n_paths = {n_paths} < {MIN_PATHS}")));
    }
    let t = match q {
        Quantity::MeanAt(t) | Quantity::VarAt(t) | Quantity::ExtinctionAt(t) => t,
        Quantity::StateDistAt { t, .. } => t,
    };
    if !(t >= 0.0) || !t.is_finite() {
        return Err(invalid(format!("t = {t}")));
    }
    let states: Vec<i64> = if t == 0.0 {
        vec![m0 as i64; n_paths]
    } else {
        map_paths(model, m0, t, n_paths, seed, |p| p.state_at(t).unwrap_or(p.initial))?
    };
    let as_f64 = |g: &dyn Fn(i64) -> f64| states.iter().map(|&s| g(s)).collect::<Vec<f64>>();
    Ok(match q {
        Quantity::MeanAt(_) => Estimated::Scalar(Estimate::from_samples(&as_f64(&|s| s as f64))?),
        Quantity::VarAt(_) => {
            Estimated::Scalar(Estimate::variance_from_samples(&as_f64(&|s| s as f64))?)
        }
        Quantity::ExtinctionAt(_) => {
            Estimated::Scalar(proportion(states.iter().filter(|&&s| s == 0).count(), n_paths))
        }
        Quantity::StateDistAt { n_max, .. } => {
            let mut counts = vec![0usize; n_max + 1];
            for &s in &states {
                if s >= 0 {
                    counts[(s as usize).min(n_max)] += 1;
                }
            }
            Estimated::Distribution(counts.into_iter().map(|c| proportion(c, n_paths)).collect())
        }
    })
}

fn proportion(count: usize, n: usize) -> Estimate {
    let p = count as f64 / n as f64;
    Estimate::new(p, (p * (1.0 - p) / n as f64).sqrt(), n)
}

/// One line of machine-readable test output.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TestRecord {
    pub test_id: String,
    pub statistic: f64,
    pub threshold: f64,
    pub pass: bool,
    pub seed: u64,
    pub n: usize,
}

impl TestRecord {
    pub fn from_outcome(test_id: impl Into<String>, o: TestOutcome, seed: u64, n: usize) -> Self {
        Self {
            test_id: test_id.into(),
            statistic: o.statistic,
            threshold: o.threshold,
            pass: o.pass,
            seed,
            n,
        }
    }

    /// A Monte Carlo comparison: statistic is the z-score, threshold the allowed multiple.
    pub fn from_z(test_id: impl Into<String>, e: &Estimate, reference: f64, k: f64, seed: u64) -> Self {
        let z = e.z_score(reference);
        Self {
            test_id: test_id.into(),
            statistic: z,
            threshold: k,
            pass: z <= k,
            seed,
            n: e.n,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("record serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn exp_samples(n: usize, rate: f64, seed: u64) -> Vec<f64> {
        let mut rng = RngStream::new(seed, 0);
        (0..n).map(|_| rng.exp1() / rate).collect()
    }

    #[test]
    fn one_sample_calibration() {
        let passes = (0..100)
            .filter(|&r| {
                let x = exp_samples(1000, 2.0, r);
                ks_one_sample(&x, |v| 1.0 - (-2.0 * v).exp()).unwrap().pass
            })
            .count();
        assert!(passes >= 95, "{passes}");
        let x = exp_samples(10_000, 1.0, 999);
        let r = ks_one_sample(&x, |v| 1.0 - (-v).exp()).unwrap();
        assert!((r.threshold - 0.0163).abs() < 1e-12);
        assert!(r.pass);
    }

    #[test]
    fn one_sample_rejects() {
        let r = ks_one_sample(&[0.5; 200], |v| v.clamp(0.0, 1.0)).unwrap();
        assert!(!r.pass);
        assert!((r.statistic - 0.5).abs() < 1e-12);
        let x = exp_samples(2000, 1.0, 1);
        assert!(!ks_one_sample(&x, |v| 1.0 - (-1.3 * v).exp()).unwrap().pass);
        assert!(ks_one_sample(&[], |v| v).is_err());
    }

    #[test]
    fn two_sample_calibration() {
        let passes = (0..100)
            .filter(|&r| {
                let x = exp_samples(2000, 1.0, 1000 + r);
                ks_two_sample(&x[..1000], &x[1000..]).unwrap().pass
            })
            .count();
        assert!(passes >= 95, "{passes}");
        let x = exp_samples(1000, 1.0, 5);
        assert_eq!(ks_two_sample(&x, &x).unwrap().statistic, 0.0);
        let y: Vec<f64> = exp_samples(1000, 1.0, 6).iter().map(|v| v + 0.3).collect();
        assert!(!ks_two_sample(&x, &y).unwrap().pass);
        assert!(ks_two_sample(&x, &[]).is_err());
    }

    #[test]
    fn two_sample_matches_brute_force() {
        let a = exp_samples(37, 1.0, 7);
        let b = exp_samples(53, 1.5, 8);
        let (ea, eb) = (Ecdf::new(&a).unwrap(), Ecdf::new(&b).unwrap());
        let brute = a
            .iter()
            .chain(&b)
            .map(|&x| (ea.eval(x) - eb.eval(x)).abs())
            .fold(0.0, f64::max);
        assert_eq!(ks_two_sample(&a, &b).unwrap().statistic, brute);
    }

    #[test]
    fn chi_square_behaviour() {
        let probs = [0.2, 0.3, 0.5];
        let good = chi_square(&[2000, 3010, 4990], &probs).unwrap();
        assert!(good.pass && good.dof == 2, "{good:?}");
        let bad = chi_square(&[2300, 3000, 4700], &probs).unwrap();
        assert!(!bad.pass);
        // Sparse tail cells are pooled.
        let pooled = chi_square(&[500, 497, 2, 1], &[0.5, 0.497, 0.002, 0.001]).unwrap();
        assert_eq!(pooled.dof, 1);
        assert!(chi_square(&[1], &[1.0]).is_err());
    }

    proptest! {
        #[test]
        fn merge_matches_single_pass(x in prop::collection::vec(-10.0f64..10.0, 2..60), cut in 0usize..60) {
            let cut = cut.min(x.len());
            let whole = Accumulator::from_slice(&x);
            let mut left = Accumulator::from_slice(&x[..cut]);
            left.merge(&Accumulator::from_slice(&x[cut..]));
            let scale = 1.0 + whole.m4.abs();
            prop_assert!((left.mean - whole.mean).abs() < 1e-12);
            prop_assert!((left.m2 - whole.m2).abs() < 1e-9 * (1.0 + whole.m2));
            prop_assert!((left.m3 - whole.m3).abs() < 1e-9 * scale);
            prop_assert!((left.m4 - whole.m4).abs() < 1e-9 * scale);
        }

        #[test]
        fn ci_is_symmetric(v in -5.0f64..5.0, se in 0.0f64..2.0) {
            let e = Estimate::new(v, se, 10);
            prop_assert!((e.ci95.0 + e.ci95.1 - 2.0 * v).abs() < 1e-12);
            prop_assert!((e.ci95.1 - e.ci95.0 - 3.92 * se).abs() < 1e-12);
        }
    }

    #[test]
    fn central_moments_of_known_data() {
        let a = Accumulator::from_slice(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(a.mean, 2.5);
        assert!((a.m2 - 5.0).abs() < 1e-14);
        assert!(a.m3.abs() < 1e-14);
        assert!((a.m4 - 10.25).abs() < 1e-14);
        assert!((a.variance() - 5.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn variance_stderr_for_normal_data() {
        // For normal data Var(s²) ≈ 2σ⁴/(n−1).
        let mut rng = RngStream::new(3, 0);
        let x: Vec<f64> = (0..40_000)
            .map(|_| {
                let (u, v) = (rng.uniform(), rng.uniform());
                (-2.0 * u.ln()).sqrt() * (2.0 * std::f64::consts::PI * v).cos() * 2.0
            })
            .collect();
        let e = Estimate::variance_from_samples(&x).unwrap();
        let expected = (2.0 * 16.0 / 39_999.0f64).sqrt();
        assert!((e.stderr / expected - 1.0).abs() < 0.05, "{e:?}");
        assert!((e.value - 4.0).abs() < 4.0 * e.stderr);
    }

    fn table_row_four() -> Model {
        Model::Linear(LinearParams::untempered(0.5, 2.0, 1.6, 1.7).unwrap())
    }

    #[test]
    fn trivial_estimates() {
        let m = table_row_four();
        let e = estimate(Quantity::ExtinctionAt(0.0), &m, 1, 1000, 1).unwrap();
        assert_eq!(e.scalar().unwrap().value, 0.0);
        let d = estimate(Quantity::StateDistAt { t: 1.0, n_max: 30 }, &m, 1, 1000, 1).unwrap();
        let total: usize = d
            .distribution()
            .unwrap()
            .iter()
            .map(|e| (e.value * e.n as f64).round() as usize)
            .sum();
        assert_eq!(total, 1000);
        assert!(estimate(Quantity::MeanAt(1.0), &m, 1, 10, 1).is_err());
    }

    #[test]
    fn mean_of_table_row() {
        let e = estimate(Quantity::MeanAt(1.0), &table_row_four(), 1, 100_000, 42).unwrap();
        let e = e.scalar().unwrap();
        assert!(e.z_score(0.3576) < 3.0, "{e:?}");
    }

    #[test]
    fn stderr_halves_when_paths_quadruple() {
        let m = table_row_four();
        let small = estimate(Quantity::MeanAt(1.0), &m, 1, 5_000, 7).unwrap();
        let large = estimate(Quantity::MeanAt(1.0), &m, 1, 20_000, 8).unwrap();
        let ratio = small.scalar().unwrap().stderr / large.scalar().unwrap().stderr;
        assert!((ratio / 2.0 - 1.0).abs() < 0.2, "{ratio}");
    }

    #[test]
    fn independent_of_thread_count() {
        let m = table_row_four();
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| estimate(Quantity::VarAt(1.0), &m, 1, 2_000, 9).unwrap())
        };
        assert_eq!(run(1), run(3));
    }

    #[test]
    fn json_record() {
        let o = TestOutcome::new(0.01, 0.0163);
        let r = TestRecord::from_outcome("ks-sojourn", o, 4, 10_000);
        let v: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(v["test_id"], "ks-sojourn");
        assert_eq!(v["pass"], true);
        assert_eq!(v["n"], 10_000);
        let e = Estimate::new(1.0, 0.1, 100);
        assert!(TestRecord::from_z("mean", &e, 1.25, 3.0, 1).pass);
        assert!(!TestRecord::from_z("mean", &e, 1.35, 3.0, 1).pass);
    }
}
