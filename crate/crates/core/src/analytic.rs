//! Closed-form results for the linear model with catastrophes under a stable or tempered
//! stable time change, plus sojourn, catastrophe-time and first-passage moments.
//!
//! Every time-domain formula is expressed through the kernel
//! K(c) = E[e^{c·Y(t)}] = e^{−θt} Σ_m Σ_k (c t^α)^m (θt)^k E^m_{α,mα+k+1}(θ^α t^α)
//! and its c-derivatives (see [`crate::mlfunc::tempered_kernel`]); θ = 0 gives E_α(c t^α).

use crate::error::{invalid, Error, Result};
use crate::laplace::{talbot_sum, C64, TALBOT_NODES};
use crate::markov::{resolvent_column, resolvent_derivative, ModelSpec, TimeChange, Truncation};
use crate::mlfunc::{
    ml, ml3, tempered_kernel, tempered_ml_survival, MlArgs, SeriesControl, THETA_T_LIMIT,
};
use gauss_quad::{FiniteAboveNegOneF64, GaussLaguerre, GaussLegendre};
use statrs::function::gamma::ln_gamma;
use std::num::NonZeroUsize;
use std::sync::OnceLock;

/// Relative gap |λ − μ| / max(λ, μ) treated as λ = μ.
pub const REGIME_TOL: f64 = 1e-12;
pub const LAGUERRE_NODES: usize = 64;
/// Slack allowed outside [0, 1] (probabilities) or below 0 (variances) before an error.
pub const PROB_SLACK: f64 = 1e-9;
/// Geometric sums needing more terms than this switch to Euler–Maclaurin summation.
const DIRECT_SUM_LIMIT: f64 = 2000.0;
const QUAD_AGREEMENT: f64 = 1e-10;
const CONSECUTIVE_SMALL: usize = 5;
/// Relative accuracy assumed for a single kernel value when bounding series round-off.
const KERNEL_REL_ERR: f64 = 1e-14;
/// Round-off bound above which the state-probability double series is replaced by its
/// resummed transform.
const SERIES_ROUNDING: f64 = 1e-11;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearParams {
    pub alpha: f64,
    pub theta: f64,
    pub lambda: f64,
    pub mu: f64,
    pub nu: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    BirthBelowDeath,
    Balanced,
    BirthAboveDeath,
}

impl LinearParams {
    pub fn new(alpha: f64, theta: f64, lambda: f64, mu: f64, nu: f64) -> Result<Self> {
        let p = Self {
            alpha,
            theta,
            lambda,
            mu,
            nu,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn untempered(alpha: f64, lambda: f64, mu: f64, nu: f64) -> Result<Self> {
        Self::new(alpha, 0.0, lambda, mu, nu)
    }

    pub fn validate(&self) -> Result<()> {
        let order_ok = if self.theta > 0.0 {
            self.alpha > 0.0 && self.alpha < 1.0
        } else {
            self.alpha > 0.0 && self.alpha <= 1.0
        };
        let ok = order_ok
            && self.theta >= 0.0
            && self.theta.is_finite()
            && self.lambda > 0.0
            && self.lambda.is_finite()
            && self.mu > 0.0
            && self.mu.is_finite()
            && self.nu >= 0.0
            && self.nu.is_finite();
        if ok {
            Ok(())
        } else {
            Err(invalid(format!("linear model parameters {self:?}")))
        }
    }

    pub fn regime(&self) -> Regime {
        if (self.lambda - self.mu).abs() <= REGIME_TOL * self.lambda.max(self.mu) {
            Regime::Balanced
        } else if self.lambda < self.mu {
            Regime::BirthBelowDeath
        } else {
            Regime::BirthAboveDeath
        }
    }
}

/// Quantities of the linear model started from one individual.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinearQuantity {
    Extinction,
    StateProb(usize),
    Mean,
    Variance,
}

#[derive(Debug, Clone, Copy)]
struct Kernel<'a> {
    alpha: f64,
    theta: f64,
    t: f64,
    ctl: &'a SeriesControl,
}

impl Kernel<'_> {
    fn at(&self, c: f64, deriv: u32) -> Result<f64> {
        tempered_kernel(self.alpha, self.theta, c, self.t, deriv, self.ctl)
    }
}

fn laguerre_rule(nodes: usize) -> &'static GaussLaguerre {
    static R64: OnceLock<GaussLaguerre> = OnceLock::new();
    static R128: OnceLock<GaussLaguerre> = OnceLock::new();
    let make = move || {
        GaussLaguerre::new(
            NonZeroUsize::new(nodes).unwrap(),
            FiniteAboveNegOneF64::new(0.0).unwrap(),
        )
    };
    if nodes == LAGUERRE_NODES {
        R64.get_or_init(make)
    } else {
        R128.get_or_init(make)
    }
}

fn legendre_rule() -> &'static GaussLegendre {
    static R: OnceLock<GaussLegendre> = OnceLock::new();
    R.get_or_init(|| GaussLegendre::new(NonZeroUsize::new(20).unwrap()))
}

fn fold_nodes(pairs: impl Iterator<Item = (f64, f64)>, f: &dyn Fn(f64) -> Result<f64>) -> Result<f64> {
    let mut s = 0.0;
    for (x, w) in pairs {
        s += w * f(x)?;
    }
    Ok(s)
}

/// ∫_0^∞ e^{−x} f(x) dx: Gauss–Laguerre at 64 and 128 nodes, composite Gauss–Legendre if
/// they disagree.
fn laguerre(f: &dyn Fn(f64) -> Result<f64>) -> Result<f64> {
    let r64 = laguerre_rule(LAGUERRE_NODES);
    let r128 = laguerre_rule(2 * LAGUERRE_NODES);
    let a = fold_nodes(r64.nodes().copied().zip(r64.weights().copied()), f)?;
    let b = fold_nodes(r128.nodes().copied().zip(r128.weights().copied()), f)?;
    if (a - b).abs() <= QUAD_AGREEMENT * b.abs().max(1.0) {
        return Ok(b);
    }
    let coarse = composite_exp(f, 48)?;
    let fine = composite_exp(f, 96)?;
    if (coarse - fine).abs() > 1e-8 * fine.abs().max(1.0) {
        return Err(Error::NonConvergence {
            what: "exponential-weight quadrature".into(),
            terms: 96 * 20,
        });
    }
    Ok(fine)
}

fn composite_exp(f: &dyn Fn(f64) -> Result<f64>, panels: usize) -> Result<f64> {
    let gl = legendre_rule();
    // Panels grow linearly so the early, fast-varying part gets most of the nodes.
    let end = 60.0;
    let n = panels as f64;
    let edge = |i: f64| end * (i / n) * (i / n);
    let mut s = 0.0;
    for i in 0..panels {
        let (a, b) = (edge(i as f64), edge(i as f64 + 1.0));
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        for (x, w) in gl.nodes().zip(gl.weights()) {
            let u = mid + half * x;
            s += half * w * (-u).exp() * f(u)?;
        }
    }
    Ok(s)
}

/// Σ_{k≥1} ρ^k K(−ν − δk), ρ < 1.
fn geometric_kernel_sum(k: &Kernel, nu: f64, rho: f64, delta: f64) -> Result<f64> {
    let eps = -rho.ln();
    let needed = (k.ctl.rel_tol * (1.0 - rho)).ln() / rho.ln();
    if needed <= DIRECT_SUM_LIMIT {
        let mut sum = 0.0;
        let mut w = 1.0;
        for j in 1..=k.ctl.max_terms {
            w *= rho;
            sum += w * k.at(-nu - delta * j as f64, 0)?;
            // |K| ≤ 1 for non-positive arguments, so the tail is at most geometric.
            if w * rho / (1.0 - rho) <= k.ctl.rel_tol {
                return Ok(sum);
            }
        }
        return Err(Error::NonConvergence {
            what: "geometric Mittag-Leffler sum".into(),
            terms: k.ctl.max_terms,
        });
    }
    // Euler–Maclaurin from k = 1 with g(k) = e^{−εk} K(−ν − δk).
    let c0 = -nu - delta;
    let integral = rho / eps * laguerre(&|u| k.at(c0 - delta / eps * u, 0))?;
    let derivs: Vec<f64> = (0..=5).map(|i| k.at(c0, i)).collect::<Result<_>>()?;
    let g = |order: u32| -> f64 {
        (0..=order)
            .map(|i| {
                crate::special::binom(order as u64, i as u64)
                    * (-eps).powi((order - i) as i32)
                    * (-delta).powi(i as i32)
                    * derivs[i as usize]
            })
            .sum::<f64>()
            * rho
    };
    Ok(integral + g(0) / 2.0 - g(1) / 12.0 + g(3) / 720.0 - g(5) / 30240.0)
}

/// ν e^{−θt} Σ_n (θt)^n t^α E_{α,α+n+1}((θ^α − ν) t^α), which equals 1 − K(−ν).
fn catastrophe_term(k: &Kernel, nu: f64) -> Result<f64> {
    if nu == 0.0 {
        return Ok(0.0);
    }
    let ta = k.t.powf(k.alpha);
    let tt = k.theta * k.t;
    if tt > THETA_T_LIMIT {
        return Err(Error::Numerical(format!(
            "theta*t = {tt} exceeds {THETA_T_LIMIT}; the tempered series loses all precision"
        )));
    }
    let y = (k.theta.powf(k.alpha) - nu) * ta;
    let mut sum = 0.0;
    let mut w = 1.0;
    let mut small = 0;
    for n in 0..k.ctl.max_terms {
        if n > 0 {
            w *= tt;
        }
        let term = w * ml3(MlArgs::new(k.alpha, k.alpha + n as f64 + 1.0, 1.0, y), k.ctl)?;
        sum += term;
        if k.theta == 0.0 {
            break;
        }
        if n as f64 > tt && k.ctl.is_small(term, sum) {
            small += 1;
            if small >= CONSECUTIVE_SMALL {
                break;
            }
        } else {
            small = 0;
        }
    }
    Ok(nu * (-tt).exp() * ta * sum)
}

fn check_probability(p: f64, what: &str) -> Result<f64> {
    if !(p >= -PROB_SLACK && p <= 1.0 + PROB_SLACK) {
        return Err(Error::Numerical(format!("{what} = {p} outside [0, 1]")));
    }
    Ok(p.clamp(0.0, 1.0))
}

fn check_variance(v: f64, what: &str) -> Result<f64> {
    if !(v >= -PROB_SLACK) {
        return Err(Error::Numerical(format!("{what} = {v} is negative")));
    }
    Ok(v.max(0.0))
}

fn extinction(p: &LinearParams, k: &Kernel) -> Result<f64> {
    let (l, m, nu) = (p.lambda, p.mu, p.nu);
    let cat = catastrophe_term(k, nu)?;
    let v = match p.regime() {
        Regime::Balanced if p.theta == 0.0 => {
            k.at(-nu, 0)? - laguerre(&|x| k.at(-nu - l * x, 0))? + cat
        }
        Regime::Balanced => l * laguerre(&|x| k.at(-nu - l * x, 1))? + cat,
        Regime::BirthAboveDeath => {
            m / l * k.at(-nu, 0)? - (l - m) / l * geometric_kernel_sum(k, nu, m / l, l - m)? + cat
        }
        Regime::BirthBelowDeath => {
            k.at(-nu, 0)? - (m - l) / l * geometric_kernel_sum(k, nu, l / m, m - l)? + cat
        }
    };
    check_probability(v, "extinction probability")
}

/// B_i = ∫ e^{−x} (λx)^i / i! · K^{(i)}(−ν − λx) dx.
fn balanced_moment(k: &Kernel, lambda: f64, nu: f64, i: u32) -> Result<f64> {
    let lf = ln_gamma(i as f64 + 1.0);
    laguerre(&|x| {
        let w = if i == 0 {
            1.0
        } else {
            (i as f64 * (lambda * x).ln() - lf).exp()
        };
        Ok(w * k.at(-nu - lambda * x, i)?)
    })
}

fn state_prob(p: &LinearParams, k: &Kernel, n: usize) -> Result<f64> {
    if n == 0 {
        return extinction(p, k);
    }
    let (l, m, nu) = (p.lambda, p.mu, p.nu);
    let v = match p.regime() {
        // (−λ)^{n−1}/n! dⁿ/dλⁿ [λ ∫ e^{−x} K(−ν − λx) dx], differentiated under the integral.
        Regime::Balanced => {
            let n = n as u32;
            balanced_moment(k, l, nu, n - 1)? - balanced_moment(k, l, nu, n)?
        }
        Regime::BirthAboveDeath => {
            let pref = ((l - m) / l).powi(2);
            pref * geometric_state_sum(k, nu, m / l, l - m, n, pref)?
        }
        Regime::BirthBelowDeath => {
            let pref = (l / m).powi(n as i32 - 1) * ((m - l) / m).powi(2);
            pref * geometric_state_sum(k, nu, l / m, m - l, n, pref)?
        }
    };
    check_probability(v, "state probability")
}

/// Σ_k Σ_{r<n} (−1)^r C(k+n,k) C(n−1,r) ρ^k K(−ν − δ(k+r+1)).
///
/// The alternating double series is summed directly while its round-off bound (scaled by
/// `pref`) stays below [`SERIES_ROUNDING`]; otherwise the same sum is taken from
/// [`resummed_state_sum`].
fn geometric_state_sum(
    k: &Kernel,
    nu: f64,
    rho: f64,
    delta: f64,
    n: usize,
    pref: f64,
) -> Result<f64> {
    match double_series(k, nu, rho, delta, n, SERIES_ROUNDING / (pref * KERNEL_REL_ERR))? {
        Some(sum) => Ok(sum),
        None => resummed_state_sum(k, nu, rho, delta, n),
    }
}

/// Laplace transform in y of e^{−νy} x(1−x)^{n−1}/(1−ρx)^{n+1}, x = e^{−δy}, at s:
/// Σ_k C(k+n,k) ρ^k (n−1)! / (δ Π_{r<n} (x_k + r)), x_k = (s + ν + δ(k+1))/δ.
fn state_sum_transform(s: C64, nu: f64, rho: f64, delta: f64, n: usize, ctl: &SeriesControl) -> Result<C64> {
    let mut x = (s + nu + delta) / delta;
    let mut term = 1.0 / (x * delta);
    for r in 1..n {
        term *= r as f64 / (x + r as f64);
    }
    let mut sum = term;
    let mut small = 0;
    for kk in 0..ctl.max_terms {
        let ratio = rho * (kk + n + 1) as f64 / (kk + 1) as f64 * x / (x + n as f64);
        term *= ratio;
        x += 1.0;
        sum += term;
        let r = ratio.norm().max(rho);
        if r < 1.0 && ctl.is_small(term.norm() / (1.0 - r), sum.norm()) {
            small += 1;
            if small >= CONSECUTIVE_SMALL {
                return Ok(sum);
            }
        } else {
            small = 0;
        }
    }
    Err(Error::NonConvergence {
        what: "resummed state-probability transform".into(),
        terms: ctl.max_terms,
    })
}

/// The double series as E[e^{−νY} x(1−x)^{n−1}/(1−ρx)^{n+1}], obtained by Talbot inversion of
/// (φ(z)/z)·L(φ(z)) with L from [`state_sum_transform`] and φ the Laplace exponent of the
/// time change.
fn resummed_state_sum(k: &Kernel, nu: f64, rho: f64, delta: f64, n: usize) -> Result<f64> {
    let (alpha, theta) = (k.alpha, k.theta);
    let phi = move |z: C64| {
        if theta > 0.0 {
            (z + theta).powf(alpha) - theta.powf(alpha)
        } else {
            z.powf(alpha)
        }
    };
    talbot_sum(
        |z| {
            let f = phi(z);
            Ok(f / z * state_sum_transform(f, nu, rho, delta, n, k.ctl)?)
        },
        k.t,
        TALBOT_NODES,
        0.0,
    )
}

/// Direct summation, grouped by j = k+r+1. Gives up (`None`) once Σ_j Σ_r |term| exceeds
/// `max_magnitude`.
fn double_series(
    k: &Kernel,
    nu: f64,
    rho: f64,
    delta: f64,
    n: usize,
    max_magnitude: f64,
) -> Result<Option<f64>> {
    use crate::special::binom;
    let n64 = n as u64;
    let ln_rho = rho.ln();
    let past_peak = (n as f64 / (1.0 - rho)).ceil() as usize;
    let mut sum = 0.0;
    let mut magnitude = 0.0;
    let mut small = 0;
    for j in 1..=k.ctl.max_terms {
        let mut coef = 0.0;
        let mut bound = 0.0;
        for r in 0..n.min(j) {
            let kk = (j - 1 - r) as u64;
            let c = binom(kk + n64, kk) * binom(n64 - 1, r as u64) * (kk as f64 * ln_rho).exp();
            coef += if r % 2 == 0 { c } else { -c };
            bound += c;
        }
        if coef != 0.0 {
            let kv = k.at(-nu - delta * j as f64, 0)?;
            sum += coef * kv;
            magnitude += bound * kv.abs();
            if !(magnitude <= max_magnitude) {
                return Ok(None);
            }
        }
        if j > past_peak && k.ctl.is_small(bound, sum) {
            small += 1;
            if small >= CONSECUTIVE_SMALL {
                return Ok(Some(sum));
            }
        } else {
            small = 0;
        }
    }
    Err(Error::NonConvergence {
        what: "state probability series".into(),
        terms: k.ctl.max_terms,
    })
}

fn mean(p: &LinearParams, k: &Kernel) -> Result<f64> {
    k.at(p.lambda - p.mu - p.nu, 0)
}

fn variance(p: &LinearParams, k: &Kernel) -> Result<f64> {
    let (l, m, nu) = (p.lambda, p.mu, p.nu);
    let v = match p.regime() {
        Regime::Balanced => {
            let e = k.at(-nu, 0)?;
            2.0 * l * k.at(-nu, 1)? + e - e * e
        }
        _ => {
            let e = k.at(l - m - nu, 0)?;
            2.0 * l / (l - m) * k.at(2.0 * l - 2.0 * m - nu, 0)? - (l + m) / (l - m) * e - e * e
        }
    };
    check_variance(v, "variance")
}

fn evaluate(p: &LinearParams, q: LinearQuantity, t: f64, ctl: &SeriesControl) -> Result<f64> {
    p.validate()?;
    ctl.validate()?;
    if !(t >= 0.0) || !t.is_finite() {
        return Err(invalid(format!("time t = {t}")));
    }
    if t == 0.0 {
        return Ok(match q {
            LinearQuantity::Extinction | LinearQuantity::Variance => 0.0,
            LinearQuantity::StateProb(n) => (n == 1) as u8 as f64,
            LinearQuantity::Mean => 1.0,
        });
    }
    let k = Kernel {
        alpha: p.alpha,
        theta: p.theta,
        t,
        ctl,
    };
    match q {
        LinearQuantity::Extinction => extinction(p, &k),
        LinearQuantity::StateProb(n) => state_prob(p, &k, n),
        LinearQuantity::Mean => mean(p, &k),
        LinearQuantity::Variance => variance(p, &k),
    }
}

fn untempered(p: &LinearParams) -> Result<()> {
    if p.theta != 0.0 {
        return Err(invalid("expected θ = 0; use tempered_lbdpc for θ > 0"));
    }
    Ok(())
}

/// E N(t) = E_α((λ−μ−ν) t^α) from one initial individual.
pub fn mean_lbdpc(p: &LinearParams, t: f64, ctl: &SeriesControl) -> Result<f64> {
    untempered(p)?;
    evaluate(p, LinearQuantity::Mean, t, ctl)
}

pub fn var_lbdpc(p: &LinearParams, t: f64, ctl: &SeriesControl) -> Result<f64> {
    untempered(p)?;
    evaluate(p, LinearQuantity::Variance, t, ctl)
}

pub fn extinction_lbdpc(p: &LinearParams, t: f64, ctl: &SeriesControl) -> Result<f64> {
    untempered(p)?;
    evaluate(p, LinearQuantity::Extinction, t, ctl)
}

pub fn state_prob_lbdpc(p: &LinearParams, n: usize, t: f64, ctl: &SeriesControl) -> Result<f64> {
    untempered(p)?;
    if n == 0 {
        return Err(invalid("state_prob_lbdpc takes n ≥ 1; use extinction_lbdpc for n = 0"));
    }
    evaluate(p, LinearQuantity::StateProb(n), t, ctl)
}

/// Tempered counterparts of the four quantities above; requires θ > 0.
pub fn tempered_lbdpc(
    p: &LinearParams,
    q: LinearQuantity,
    t: f64,
    ctl: &SeriesControl,
) -> Result<f64> {
    if !(p.theta > 0.0) {
        return Err(invalid("tempered_lbdpc needs θ > 0"));
    }
    evaluate(p, q, t, ctl)
}

fn survival(tc: TimeChange, rate: f64, t: f64, ctl: &SeriesControl) -> Result<f64> {
    tc.validate()?;
    if !(t >= 0.0) || !(rate >= 0.0) {
        return Err(invalid(format!("rate = {rate}, t = {t}")));
    }
    if t == 0.0 || rate == 0.0 {
        return Ok(1.0);
    }
    match tc {
        TimeChange::None => Ok((-rate * t).exp()),
        TimeChange::InverseStable { alpha } if alpha == 1.0 => Ok((-rate * t).exp()),
        TimeChange::InverseStable { alpha } => {
            check_probability(ml(alpha, -rate * t.powf(alpha), ctl)?, "survival")
        }
        TimeChange::InverseTempered { alpha, theta } => {
            tempered_ml_survival(alpha, theta, rate, t, ctl)
        }
    }
}

/// Pr{sojourn in state n > t}: Mittag-Leffler (or tempered) with rate λ_n + μ_n + ν.
pub fn sojourn_survival(
    spec: &ModelSpec,
    tc: TimeChange,
    n: u64,
    t: f64,
    ctl: &SeriesControl,
) -> Result<f64> {
    if n == 0 {
        return Err(invalid("sojourn survival is defined for states n ≥ 1"));
    }
    survival(tc, spec.birth(n) + spec.death(n) + spec.nu, t, ctl)
}

/// Pr{time between catastrophes > t}.
pub fn catastrophe_time_survival(tc: TimeChange, nu: f64, t: f64, ctl: &SeriesControl) -> Result<f64> {
    survival(tc, nu, t, ctl)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moments {
    pub mean: f64,
    pub variance: f64,
}

fn check_tempering(theta: f64, alpha: f64, nu: f64) -> Result<()> {
    if !(theta > 0.0) || !(alpha > 0.0 && alpha <= 1.0) || !(nu > 0.0) {
        return Err(invalid(format!("θ = {theta}, α = {alpha}, ν = {nu}")));
    }
    Ok(())
}

/// (p̃_{m,0}(ν), p̃_{0,0}(ν), d/dν p̃_{m,0}, d/dν p̃_{0,0}) of the chain without catastrophes.
fn base_at_nu(spec: &ModelSpec, m: usize, nu: f64, trunc: &Truncation) -> Result<[f64; 4]> {
    let base = spec.with_nu(0.0);
    let z = C64::new(nu, 0.0);
    let pm = resolvent_column(&base, m, z, trunc)?[0].re;
    let p0 = resolvent_column(&base, 0, z, trunc)?[0].re;
    let dm = resolvent_derivative(&base, m, z, trunc)?[0].re;
    let d0 = resolvent_derivative(&base, 0, z, trunc)?[0].re;
    Ok([pm, p0, dm, d0])
}

/// Mean and variance of the first visit to zero for the tempered model (zero absorbing).
pub fn tempered_first_visit_moments(
    spec: &ModelSpec,
    theta: f64,
    alpha: f64,
    nu: f64,
    m: usize,
    trunc: &Truncation,
) -> Result<Moments> {
    check_tempering(theta, alpha, nu)?;
    if spec.lambda0() != 0.0 {
        return Err(invalid("first-visit moments need zero to be absorbing (λ_0 = 0)"));
    }
    if m == 0 {
        return Ok(Moments {
            mean: 0.0,
            variance: 0.0,
        });
    }
    let [pm, p0, dm, d0] = base_at_nu(spec, m, nu, trunc)?;
    let f = pm / p0;
    let df = (dm * p0 - pm * d0) / (p0 * p0);
    let a1 = alpha * theta.powf(alpha - 1.0);
    let a2 = alpha * (1.0 - alpha) * theta.powf(alpha - 2.0);
    let mean = a1 / nu * (1.0 - f);
    let variance = a2 / nu * (1.0 - f) + 2.0 * a1 * a1 / nu * df + a1 * a1 / (nu * nu) * (1.0 - f * f);
    Ok(Moments {
        mean,
        variance: check_variance(variance, "first-visit variance")?,
    })
}

/// Mean and variance of the first catastrophe striking a non-zero state, tempered model.
pub fn effective_catastrophe_moments(
    spec: &ModelSpec,
    theta: f64,
    alpha: f64,
    nu: f64,
    m: usize,
    trunc: &Truncation,
) -> Result<Moments> {
    check_tempering(theta, alpha, nu)?;
    if spec.lambda0() == 0.0 {
        return Err(Error::Degenerate(
            "λ_0 = 0 gives p̃_00(ν) = 1/ν, so 1 − ν p̃_00(ν) = 0".into(),
        ));
    }
    let [pm, p0, dm, d0] = base_at_nu(spec, m, nu, trunc)?;
    let d = 1.0 - nu * p0;
    if d.abs() <= 1e-12 {
        return Err(Error::Degenerate(format!("1 − ν p̃_00(ν) = {d:e}")));
    }
    let a1 = alpha * theta.powf(alpha - 1.0);
    let a2 = alpha * (1.0 - alpha) * theta.powf(alpha - 2.0);
    let base_mean = 1.0 / nu + pm / d;
    let h = nu * pm / d;
    let spread = 1.0 - h * h - 2.0 * nu * nu / d * dm - 2.0 * nu.powi(3) * pm / (d * d) * d0;
    let variance = a2 * base_mean + a1 * a1 / (nu * nu) * spread;
    Ok(Moments {
        mean: a1 * base_mean,
        variance: check_variance(variance, "effective-catastrophe variance")?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::laplace::{
        base_first_visit, lt_first_visit_pdf, lt_tempered_family, BaseResolvent, LtEvaluator,
        TemperedQuantity,
    };
    use crate::markov::{subordinated_probs, time_changed_probs, transient_probs};
    use std::f64::consts::PI;

    fn ctl() -> SeriesControl {
        SeriesControl::default()
    }

    fn lin(alpha: f64, l: f64, m: f64, nu: f64) -> LinearParams {
        LinearParams::untempered(alpha, l, m, nu).unwrap()
    }

    fn chain(p: &LinearParams) -> ModelSpec {
        ModelSpec::linear(p.lambda, p.mu, p.nu).unwrap()
    }

    fn tc(p: &LinearParams) -> TimeChange {
        if p.theta > 0.0 {
            TimeChange::InverseTempered {
                alpha: p.alpha,
                theta: p.theta,
            }
        } else {
            TimeChange::InverseStable { alpha: p.alpha }
        }
    }

    fn big() -> Truncation {
        Truncation {
            n_max: 1600,
            tail_tol: 1e-10,
        }
    }

    #[test]
    fn table_of_moments_at_unit_time() {
        let rows = [
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
        for (l, m, nu, e, v) in rows {
            let p = lin(0.5, l, m, nu);
            let em = mean_lbdpc(&p, 1.0, &ctl()).unwrap();
            let ev = var_lbdpc(&p, 1.0, &ctl()).unwrap();
            assert!((em - e).abs() <= 5e-5, "({l},{m},{nu}) mean {em}");
            assert!((ev - v).abs() <= 5e-5, "({l},{m},{nu}) var {ev}");
        }
    }

    #[test]
    fn initial_conditions() {
        for p in [lin(0.5, 1.0, 2.0, 0.3), lin(0.7, 1.0, 1.0, 0.3), lin(0.9, 2.0, 1.0, 0.0)] {
            assert_eq!(mean_lbdpc(&p, 0.0, &ctl()).unwrap(), 1.0);
            assert_eq!(var_lbdpc(&p, 0.0, &ctl()).unwrap(), 0.0);
            assert_eq!(extinction_lbdpc(&p, 0.0, &ctl()).unwrap(), 0.0);
            assert_eq!(state_prob_lbdpc(&p, 1, 0.0, &ctl()).unwrap(), 1.0);
            assert_eq!(state_prob_lbdpc(&p, 3, 0.0, &ctl()).unwrap(), 0.0);
        }
        let p = LinearParams::new(0.6, 0.8, 1.0, 2.0, 0.3).unwrap();
        for (q, v) in [
            (LinearQuantity::Mean, 1.0),
            (LinearQuantity::Extinction, 0.0),
            (LinearQuantity::Variance, 0.0),
        ] {
            assert_eq!(tempered_lbdpc(&p, q, 0.0, &ctl()).unwrap(), v);
        }
    }

    /// Extinction and state probabilities against Talbot inversion of the truncated chain.
    fn check_distribution(p: &LinearParams, t: f64, n_top: usize, tol: f64) {
        let direct = time_changed_probs(&chain(p), 1, t, tc(p), &big())
            .unwrap_or_else(|e| panic!("{p:?}: {e}"));
        let ext = if p.theta > 0.0 {
            tempered_lbdpc(p, LinearQuantity::Extinction, t, &ctl()).unwrap()
        } else {
            extinction_lbdpc(p, t, &ctl()).unwrap()
        };
        assert!((ext - direct[0]).abs() < tol, "{p:?} extinction {ext} vs {}", direct[0]);
        for n in 1..=n_top {
            let v = if p.theta > 0.0 {
                tempered_lbdpc(p, LinearQuantity::StateProb(n), t, &ctl()).unwrap()
            } else {
                state_prob_lbdpc(p, n, t, &ctl()).unwrap()
            };
            assert!((v - direct[n]).abs() < tol, "{p:?} n={n}: {v} vs {}", direct[n]);
        }
    }

    #[test]
    fn distribution_matches_inverted_chain() {
        for p in [
            lin(0.5, 1.0, 2.0, 0.5),
            lin(0.5, 1.5, 1.0, 0.5),
            lin(0.7, 1.0, 1.0, 0.5),
            lin(0.3, 1.5, 1.5, 0.0),
            lin(0.9, 0.4, 1.0, 1.0),
            lin(0.8, 1.2, 0.3, 0.2),
        ] {
            check_distribution(&p, 1.0, 6, 1e-7);
        }
        check_distribution(&lin(0.6, 1.0, 1.0, 0.5), 3.0, 4, 1e-7);
        check_distribution(&lin(0.6, 1.0, 2.0, 0.5), 0.2, 4, 1e-7);
    }

    #[test]
    fn tempered_distribution_matches_inverted_chain() {
        for p in [
            LinearParams::new(0.6, 0.8, 1.0, 2.0, 0.3).unwrap(),
            LinearParams::new(0.6, 0.8, 1.5, 1.0, 0.3).unwrap(),
            LinearParams::new(0.6, 0.8, 1.0, 1.0, 0.3).unwrap(),
            LinearParams::new(0.4, 2.0, 1.0, 1.0, 0.0).unwrap(),
        ] {
            check_distribution(&p, 1.0, 4, 1e-7);
        }
    }

    #[test]
    fn subordination_oracle() {
        for p in [lin(0.5, 1.0, 2.0, 0.0), lin(0.5, 1.0, 1.0, 0.5)] {
            let mc = subordinated_probs(&chain(&p), 1, 1.0, tc(&p), &big(), 20_000, 3).unwrap();
            let e = extinction_lbdpc(&p, 1.0, &ctl()).unwrap();
            let tol = (3.0 * mc.stderr[0]).max(2e-3);
            assert!((e - mc.mean[0]).abs() < tol, "{p:?}: {e} vs {}", mc.mean[0]);
        }
        let p = lin(0.5, 1.0, 2.0, 0.5);
        let mc = subordinated_probs(&chain(&p), 1, 1.0, tc(&p), &big(), 20_000, 4).unwrap();
        let v = state_prob_lbdpc(&p, 2, 1.0, &ctl()).unwrap();
        assert!((v - mc.mean[2]).abs() < 2e-3, "{v} vs {}", mc.mean[2]);
    }

    #[test]
    fn probabilities_sum_to_one() {
        for p in [lin(0.5, 2.0, 1.0, 0.5), lin(0.5, 1.0, 2.0, 0.5), lin(0.8, 1.0, 1.0, 0.5)] {
            for t in [0.5, 1.0] {
                let mut total = extinction_lbdpc(&p, t, &ctl()).unwrap();
                let mut n = 1;
                loop {
                    let v = state_prob_lbdpc(&p, n, t, &ctl()).unwrap();
                    total += v;
                    if v < 1e-12 || n > 20_000 {
                        break;
                    }
                    n += 1;
                }
                assert!((total - 1.0).abs() < 1e-6, "{p:?} t={t}: {total} after {n} states");
            }
        }
    }

    #[test]
    fn classical_chain_at_unit_order() {
        for (l, m) in [(1.0, 2.0), (2.0, 1.0), (1.3, 1.3)] {
            let p = lin(1.0, l, m, 0.0);
            let exact = transient_probs(&chain(&p), 1, 0.8, &Truncation::default()).unwrap();
            assert!((extinction_lbdpc(&p, 0.8, &ctl()).unwrap() - exact[0]).abs() < 1e-8);
            for n in 1..6 {
                let v = state_prob_lbdpc(&p, n, 0.8, &ctl()).unwrap();
                assert!((v - exact[n]).abs() < 1e-8, "({l},{m}) n={n}: {v} vs {}", exact[n]);
            }
        }
    }

    #[test]
    fn extinction_is_continuous_across_regimes() {
        for (alpha, nu, t) in [(0.5, 0.5, 1.0), (0.8, 0.2, 2.0), (0.3, 0.0, 0.7)] {
            let mid = extinction_lbdpc(&lin(alpha, 1.0, 1.0, nu), t, &ctl()).unwrap();
            for f in [1.0 - 1e-6, 1.0 + 1e-6] {
                let v = extinction_lbdpc(&lin(alpha, f, 1.0, nu), t, &ctl()).unwrap();
                assert!((v - mid).abs() < 1e-4, "α={alpha} λ={f}: {v} vs {mid}");
            }
        }
    }

    #[test]
    fn near_balanced_sums_use_euler_maclaurin() {
        // ρ = 0.999 needs ~3·10^4 direct terms; compare with the brute-force sum.
        let p = lin(0.6, 1.0, 0.999, 0.3);
        let c = ctl();
        let k = Kernel {
            alpha: 0.6,
            theta: 0.0,
            t: 1.0,
            ctl: &c,
        };
        let fast = geometric_kernel_sum(&k, p.nu, p.mu / p.lambda, p.lambda - p.mu).unwrap();
        let mut slow = 0.0;
        let mut w = 1.0;
        for j in 1..40_000 {
            w *= p.mu / p.lambda;
            slow += w * k.at(-p.nu - (p.lambda - p.mu) * j as f64, 0).unwrap();
        }
        assert!((fast - slow).abs() < 1e-9 * slow, "{fast} vs {slow}");
    }

    #[test]
    fn balanced_forms_agree() {
        // K(−ν) − ∫ e^{−x} K(−ν−λx) dx = λ ∫ e^{−x} K'(−ν−λx) dx, and the catastrophe term is 1 − K(−ν).
        let c = ctl();
        for theta in [0.0, 0.7] {
            let k = Kernel {
                alpha: 0.6,
                theta,
                t: 1.3,
                ctl: &c,
            };
            let (l, nu) = (1.2, 0.4);
            let a = k.at(-nu, 0).unwrap() - laguerre(&|x| k.at(-nu - l * x, 0)).unwrap();
            let b = l * laguerre(&|x| k.at(-nu - l * x, 1)).unwrap();
            assert!((a - b).abs() < 1e-10, "θ={theta}: {a} vs {b}");
            let cat = catastrophe_term(&k, nu).unwrap();
            assert!((cat - (1.0 - k.at(-nu, 0).unwrap())).abs() < 1e-11);
        }
    }

    fn moments_from_chain(p: &LinearParams, t: f64) -> (f64, f64) {
        let d = time_changed_probs(&chain(p), 1, t, tc(p), &big()).unwrap();
        let m1: f64 = d.iter().enumerate().map(|(n, v)| n as f64 * v).sum();
        let m2: f64 = d.iter().enumerate().map(|(n, v)| (n * n) as f64 * v).sum();
        (m1, m2 - m1 * m1)
    }

    #[test]
    fn moments_match_chain() {
        for p in [
            lin(0.5, 1.0, 2.0, 0.5),
            lin(0.7, 1.0, 1.0, 0.3),
            LinearParams::new(0.6, 0.8, 1.0, 2.0, 0.3).unwrap(),
            LinearParams::new(0.6, 0.8, 1.0, 1.0, 0.3).unwrap(),
        ] {
            let (m1, var) = moments_from_chain(&p, 1.0);
            let (e, v) = if p.theta > 0.0 {
                (
                    tempered_lbdpc(&p, LinearQuantity::Mean, 1.0, &ctl()).unwrap(),
                    tempered_lbdpc(&p, LinearQuantity::Variance, 1.0, &ctl()).unwrap(),
                )
            } else {
                (mean_lbdpc(&p, 1.0, &ctl()).unwrap(), var_lbdpc(&p, 1.0, &ctl()).unwrap())
            };
            assert!((e - m1).abs() < 1e-7, "{p:?}: mean {e} vs {m1}");
            assert!((v - var).abs() < 1e-6, "{p:?}: var {v} vs {var}");
        }
    }

    #[test]
    fn weak_tempering_collapses() {
        let p = lin(0.5, 1.0, 2.0, 0.3);
        // The tempering correction is O(θ^α), so θ^α = 1e-8.
        let q = LinearParams { theta: 1e-16, ..p };
        let a = mean_lbdpc(&p, 1.0, &ctl()).unwrap();
        let b = tempered_lbdpc(&q, LinearQuantity::Mean, 1.0, &ctl()).unwrap();
        assert!((a - b).abs() < 1e-5, "{a} vs {b}");
    }

    #[test]
    fn tempered_subordination_oracle() {
        let p = LinearParams::new(0.6, 0.8, 1.0, 2.0, 0.3).unwrap();
        let mc = subordinated_probs(&chain(&p), 1, 1.0, tc(&p), &big(), 20_000, 9).unwrap();
        for (q, i) in [(LinearQuantity::Extinction, 0), (LinearQuantity::StateProb(1), 1)] {
            let v = tempered_lbdpc(&p, q, 1.0, &ctl()).unwrap();
            let tol = (3.0 * mc.stderr[i]).max(3e-3);
            assert!((v - mc.mean[i]).abs() < tol, "{q:?}: {v} vs {}", mc.mean[i]);
        }
    }

    #[test]
    fn large_theta_t_is_flagged() {
        let p = LinearParams::new(0.6, 10.0, 1.0, 2.0, 0.3).unwrap();
        assert!(tempered_lbdpc(&p, LinearQuantity::Mean, 5.0, &ctl()).is_err());
    }

    #[test]
    fn sojourn_and_catastrophe_survival() {
        let spec = ModelSpec::linear(1.0, 2.0, 0.5).unwrap();
        let c = ctl();
        let st = TimeChange::InverseStable { alpha: 1.0 };
        assert_eq!(sojourn_survival(&spec, st, 2, 0.0, &c).unwrap(), 1.0);
        let v = sojourn_survival(&spec, st, 2, 0.7, &c).unwrap();
        assert!((v - (-6.5f64 * 0.7).exp()).abs() < 1e-15);
        let v = sojourn_survival(&spec, TimeChange::InverseStable { alpha: 0.5 }, 2, 0.7, &c).unwrap();
        assert!((v - ml(0.5, -6.5 * 0.7f64.sqrt(), &c).unwrap()).abs() < 1e-15);
        assert_eq!(catastrophe_time_survival(st, 0.5, 0.0, &c).unwrap(), 1.0);
        let v = catastrophe_time_survival(TimeChange::None, 0.5, 2.0, &c).unwrap();
        assert!((v - (-1.0f64).exp()).abs() < 1e-15);
        let tt = TimeChange::InverseTempered { alpha: 0.6, theta: 0.8 };
        let v = catastrophe_time_survival(tt, 0.5, 1.0, &c).unwrap();
        assert!((v - tempered_ml_survival(0.6, 0.8, 0.5, 1.0, &c).unwrap()).abs() < 1e-15);
        assert!(sojourn_survival(&spec, st, 0, 1.0, &c).is_err());
    }

    /// Mean and variance of a density from its transform, by Cauchy integrals about z = 0.
    fn moments_from_transform(f: &LtEvaluator, radius: f64) -> (f64, f64) {
        let n = 64;
        let (mut d1, mut d2) = (C64::new(0.0, 0.0), C64::new(0.0, 0.0));
        for j in 0..n {
            let w = C64::from_polar(1.0, 2.0 * PI * j as f64 / n as f64);
            let v = f.eval(w * radius).unwrap();
            d1 += v / w;
            d2 += v / (w * w);
        }
        let f1 = (d1 / (n as f64 * radius)).re;
        let f2 = 2.0 * (d2 / (n as f64 * radius * radius)).re;
        (-f1, f2 - f1 * f1)
    }

    #[test]
    fn first_visit_moments_match_transform() {
        let spec = ModelSpec::linear(1.0, 2.0, 0.0).unwrap();
        let tr = Truncation::default();
        let (theta, alpha, nu) = (0.8, 0.6, 0.5);
        let base = BaseResolvent::new(&spec, tr);
        for m in [1, 3] {
            let mo = tempered_first_visit_moments(&spec, theta, alpha, nu, m, &tr).unwrap();
            let f = lt_tempered_family(&base, alpha, theta, nu, TemperedQuantity::FirstVisit { m }).unwrap();
            let (e, v) = moments_from_transform(&f, 0.02 * theta);
            assert!((mo.mean - e).abs() < 1e-8 * e, "m={m} mean {} vs {e}", mo.mean);
            assert!((mo.variance - v).abs() < 1e-7 * v, "m={m} var {} vs {v}", mo.variance);
        }
    }

    #[test]
    fn first_visit_mean_under_frequent_catastrophes() {
        let spec = ModelSpec::linear(1.0, 2.0, 0.0).unwrap();
        let (theta, alpha, nu) = (0.8, 0.6, 1e4);
        let mo = tempered_first_visit_moments(&spec, theta, alpha, nu, 1, &Truncation::default()).unwrap();
        let limit = alpha * theta.powf(alpha - 1.0) / nu;
        assert!((mo.mean - limit).abs() < 1e-2 * limit);
    }

    #[test]
    fn effective_catastrophe_moments_match_transform() {
        let spec = ModelSpec::new(|n| 0.5 + n as f64, |n| 2.0 * n as f64, 0.0).unwrap();
        let tr = Truncation::default();
        let (theta, alpha, nu) = (0.8, 0.6, 0.4);
        let base = BaseResolvent::new(&spec, tr);
        let mo = effective_catastrophe_moments(&spec, theta, alpha, nu, 1, &tr).unwrap();
        let g = lt_tempered_family(&base, alpha, theta, nu, TemperedQuantity::Effective { m: 1 }).unwrap();
        let (e, v) = moments_from_transform(&g, 0.02 * theta);
        assert!((mo.mean - e).abs() < 1e-8 * e, "mean {} vs {e}", mo.mean);
        assert!((mo.variance - v).abs() < 1e-7 * v, "var {} vs {v}", mo.variance);
    }

    #[test]
    fn effective_mean_scales_with_theta() {
        let spec = ModelSpec::new(|n| 0.5 + n as f64, |n| 2.0 * n as f64, 0.0).unwrap();
        let tr = Truncation::default();
        let a = effective_catastrophe_moments(&spec, 0.8, 0.6, 0.4, 1, &tr).unwrap();
        let b = effective_catastrophe_moments(&spec, 2.0, 0.6, 0.4, 1, &tr).unwrap();
        let ratio = (0.8f64 / 2.0).powf(0.6 - 1.0);
        assert!((a.mean / b.mean - ratio).abs() < 1e-12 * ratio);
    }

    #[test]
    fn degenerate_effective_catastrophe() {
        let spec = ModelSpec::linear(1.0, 2.0, 0.0).unwrap();
        let r = effective_catastrophe_moments(&spec, 0.8, 0.6, 0.4, 1, &Truncation::default());
        assert!(matches!(r, Err(Error::Degenerate(_))));
    }

    #[test]
    fn untempered_transform_has_no_finite_mean() {
        // Sanity check of the Cauchy helper: the untempered first-visit transform is not
        // differentiable at 0, the tempered one is.
        let spec = ModelSpec::linear(1.0, 2.0, 0.0).unwrap();
        let base = BaseResolvent::new(&spec, Truncation::default());
        let f = lt_first_visit_pdf(&base_first_visit(&base, 1), 0.6, 0.5).unwrap();
        let small = (1.0 - f.eval_real(1e-8).unwrap()) / 1e-8;
        assert!(small > 1e2);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(LinearParams::untempered(0.0, 1.0, 1.0, 0.0).is_err());
        assert!(LinearParams::new(1.0, 0.5, 1.0, 1.0, 0.0).is_err());
        assert!(LinearParams::untempered(0.5, -1.0, 1.0, 0.0).is_err());
        let p = lin(0.5, 1.0, 2.0, 0.3);
        assert!(tempered_lbdpc(&p, LinearQuantity::Mean, 1.0, &ctl()).is_err());
        assert!(state_prob_lbdpc(&p, 0, 1.0, &ctl()).is_err());
        let q = LinearParams { theta: 0.5, ..p };
        assert!(mean_lbdpc(&q, 1.0, &ctl()).is_err());
    }
}
