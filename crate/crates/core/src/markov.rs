//! Finite-truncation oracle for birth–death chains with catastrophes.
//!
//! The chain lives on `{0, ..., n_max}` with the birth out of `n_max` removed, so
//! the generator stays conservative. The modified chain adds the absorbing
//! sentinel −1 that catastrophes from positive states lead to.

use crate::error::{invalid, Error, Result};
use crate::laplace::{talbot_vec, C64};
use crate::randgen::{sample_inverse_stable, sample_inverse_tempered, RngStream};
use rayon::prelude::*;
use statrs::function::gamma::{gamma, ln_gamma};
use std::fmt;
use std::sync::Arc;

pub type RateFn = Arc<dyn Fn(u64) -> f64 + Send + Sync>;

/// Poisson tail allowed in a uniformization sum.
pub const UNIFORMIZATION_TOL: f64 = 1e-12;
pub const UNIFORMIZATION_MAX_TERMS: usize = 1_000_000;
/// Absolute error tolerated when interpolating p(y) between grid nodes.
pub const INTERPOLATION_TOL: f64 = 1e-7;
/// Absolute round-off of a Talbot-inverted probability; boundary mass below it is not resolvable.
pub const INVERSION_NOISE: f64 = 1e-9;
/// Draws are split into this many independent streams regardless of thread count.
pub const MC_CHUNKS: u64 = 64;

#[derive(Clone)]
pub struct ModelSpec {
    birth: RateFn,
    death: RateFn,
    pub nu: f64,
    pub linear: Option<(f64, f64)>,
}

impl fmt::Debug for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ModelSpec")
            .field("lambda_0", &self.birth(0))
            .field("lambda_1", &self.birth(1))
            .field("mu_1", &self.death(1))
            .field("nu", &self.nu)
            .field("linear", &self.linear)
            .finish()
    }
}

impl ModelSpec {
    /// General rates. `death(0)` is ignored.
    pub fn new<B, D>(birth: B, death: D, nu: f64) -> Result<Self>
    where
        B: Fn(u64) -> f64 + Send + Sync + 'static,
        D: Fn(u64) -> f64 + Send + Sync + 'static,
    {
        if !(nu >= 0.0 && nu.is_finite()) {
            return Err(invalid(format!("catastrophe rate {nu}")));
        }
        Ok(Self {
            birth: Arc::new(birth),
            death: Arc::new(death),
            nu,
            linear: None,
        })
    }

    /// λ_n = nλ, μ_n = nμ; zero is absorbing apart from catastrophes.
    pub fn linear(lambda: f64, mu: f64, nu: f64) -> Result<Self> {
        if !(lambda >= 0.0) || !(mu > 0.0) {
            return Err(invalid(format!("linear rates lambda = {lambda}, mu = {mu}")));
        }
        let mut s = Self::new(move |n| n as f64 * lambda, move |n| n as f64 * mu, nu)?;
        s.linear = Some((lambda, mu));
        Ok(s)
    }

    /// λ_n = nλ + λ_0, μ_n = nμ.
    pub fn linear_with_immigration(lambda0: f64, lambda: f64, mu: f64, nu: f64) -> Result<Self> {
        if !(lambda0 >= 0.0) || !(lambda >= 0.0) || !(mu > 0.0) {
            return Err(invalid(format!(
                "rates lambda0 = {lambda0}, lambda = {lambda}, mu = {mu}"
            )));
        }
        Self::new(move |n| n as f64 * lambda + lambda0, move |n| n as f64 * mu, nu)
    }

    /// No births or deaths, catastrophes only.
    pub fn catastrophe_only(nu: f64) -> Result<Self> {
        Self::new(|_| 0.0, |_| 0.0, nu)
    }

    pub fn birth(&self, n: u64) -> f64 {
        (self.birth)(n)
    }

    pub fn death(&self, n: u64) -> f64 {
        if n == 0 {
            0.0
        } else {
            (self.death)(n)
        }
    }

    pub fn with_nu(&self, nu: f64) -> Self {
        Self {
            nu,
            ..self.clone()
        }
    }

    pub fn lambda0(&self) -> f64 {
        self.birth(0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Truncation {
    pub n_max: usize,
    pub tail_tol: f64,
}

impl Default for Truncation {
    fn default() -> Self {
        Self {
            n_max: 200,
            tail_tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TimeChange {
    None,
    InverseStable { alpha: f64 },
    InverseTempered { alpha: f64, theta: f64 },
}

impl TimeChange {
    pub fn validate(&self) -> Result<()> {
        match *self {
            TimeChange::None => Ok(()),
            TimeChange::InverseStable { alpha } if alpha > 0.0 && alpha <= 1.0 => Ok(()),
            TimeChange::InverseTempered { alpha, theta }
                if alpha > 0.0 && alpha < 1.0 && theta > 0.0 =>
            {
                Ok(())
            }
            tc => Err(invalid(format!("time change {tc:?}"))),
        }
    }

    /// Laplace exponent of the underlying subordinator: z, z^α, or (z+θ)^α − θ^α.
    pub fn exponent(&self, z: C64) -> C64 {
        match *self {
            TimeChange::None => z,
            TimeChange::InverseStable { alpha } => z.powf(alpha),
            TimeChange::InverseTempered { alpha, theta } => {
                (z + theta).powf(alpha) - theta.powf(alpha)
            }
        }
    }

    /// One draw of the inverse subordinator at time `t`.
    pub fn sample(&self, t: f64, rng: &mut RngStream) -> Result<f64> {
        match *self {
            TimeChange::None => Ok(t),
            TimeChange::InverseStable { alpha } if alpha == 1.0 => Ok(t),
            TimeChange::InverseStable { alpha } => sample_inverse_stable(alpha, t, rng),
            TimeChange::InverseTempered { alpha, theta } => {
                sample_inverse_tempered(alpha, theta, t, rng)
            }
        }
    }
}

/// Nearest-neighbour chain plus catastrophe jumps into one target index.
#[derive(Debug, Clone)]
struct Chain {
    up: Vec<f64>,
    down: Vec<f64>,
    cat: Vec<f64>,
    cat_to: usize,
}

impl Chain {
    /// Index n is state n.
    fn standard(spec: &ModelSpec, n_max: usize) -> Self {
        let len = n_max + 1;
        let mut c = Chain {
            up: vec![0.0; len],
            down: vec![0.0; len],
            cat: vec![0.0; len],
            cat_to: 0,
        };
        for n in 0..len {
            if n < n_max {
                c.up[n] = spec.birth(n as u64);
            }
            c.down[n] = spec.death(n as u64);
            if n > 0 {
                c.cat[n] = spec.nu;
            }
        }
        c
    }

    /// Index 0 is the sentinel −1, index k is state k − 1.
    fn modified(spec: &ModelSpec, n_max: usize) -> Self {
        let len = n_max + 2;
        let mut c = Chain {
            up: vec![0.0; len],
            down: vec![0.0; len],
            cat: vec![0.0; len],
            cat_to: 0,
        };
        for k in 1..len {
            let n = (k - 1) as u64;
            if k < len - 1 {
                c.up[k] = spec.birth(n);
            }
            if n > 0 {
                c.down[k] = spec.death(n);
                c.cat[k] = spec.nu;
            }
        }
        c
    }

    fn len(&self) -> usize {
        self.up.len()
    }

    fn exit(&self, j: usize) -> f64 {
        self.up[j] + self.down[j] + if j == self.cat_to { 0.0 } else { self.cat[j] }
    }

    fn max_exit(&self) -> f64 {
        (0..self.len()).map(|j| self.exit(j)).fold(0.0, f64::max)
    }

    /// out = v Q
    fn apply(&self, v: &[f64], out: &mut [f64]) {
        let len = self.len();
        let mut inflow = 0.0;
        for j in 0..len {
            let mut x = -v[j] * self.exit(j);
            if j > 0 {
                x += v[j - 1] * self.up[j - 1];
            }
            if j + 1 < len {
                x += v[j + 1] * self.down[j + 1];
            }
            if j != self.cat_to {
                inflow += v[j] * self.cat[j];
            }
            out[j] = x;
        }
        out[self.cat_to] += inflow;
    }

    /// v e^{Qt} by uniformization.
    fn propagate(&self, v: &[f64], t: f64) -> Result<Vec<f64>> {
        let rate = self.max_exit() * 1.02;
        if t == 0.0 || rate == 0.0 {
            return Ok(v.to_vec());
        }
        let big_l = rate * t;
        let ln_l = big_l.ln();
        let mut cur = v.to_vec();
        let mut next = vec![0.0; v.len()];
        let mut out = vec![0.0; v.len()];
        for k in 0..UNIFORMIZATION_MAX_TERMS {
            let w = (-big_l + k as f64 * ln_l - ln_gamma(k as f64 + 1.0)).exp();
            for (o, c) in out.iter_mut().zip(&cur) {
                *o += w * c;
            }
            let r = big_l / (k as f64 + 2.0);
            if k as f64 > big_l && w * r / (1.0 - r) < UNIFORMIZATION_TOL {
                for o in out.iter_mut() {
                    if *o < 0.0 {
                        *o = 0.0;
                    }
                }
                return Ok(out);
            }
            self.apply(&cur, &mut next);
            for (c, q) in cur.iter_mut().zip(&next) {
                *c += q / rate;
            }
        }
        Err(Error::NonConvergence {
            what: format!("uniformization with rate·t = {big_l}"),
            terms: UNIFORMIZATION_MAX_TERMS,
        })
    }
}

fn check_state(m: usize, trunc: &Truncation) -> Result<()> {
    if m > trunc.n_max {
        return Err(invalid(format!(
            "initial state {m} exceeds n_max = {}",
            trunc.n_max
        )));
    }
    if trunc.n_max < 2 || !(trunc.tail_tol > 0.0) {
        return Err(invalid(format!("truncation {trunc:?}")));
    }
    Ok(())
}

fn check_tail(top: f64, trunc: &Truncation) -> Result<()> {
    if top > trunc.tail_tol {
        return Err(Error::Truncation(format!(
            "mass {top:.3e} at n_max = {} exceeds {:.1e}",
            trunc.n_max, trunc.tail_tol
        )));
    }
    Ok(())
}

fn unit(len: usize, i: usize) -> Vec<f64> {
    let mut v = vec![0.0; len];
    v[i] = 1.0;
    v
}

/// p_{m,n}(t) for n = 0..=n_max.
pub fn transient_probs(spec: &ModelSpec, m: usize, t: f64, trunc: &Truncation) -> Result<Vec<f64>> {
    check_state(m, trunc)?;
    if !(t >= 0.0) {
        return Err(invalid(format!("time {t}")));
    }
    let chain = Chain::standard(spec, trunc.n_max);
    let p = chain.propagate(&unit(chain.len(), m), t)?;
    check_tail(p[trunc.n_max], trunc)?;
    Ok(p)
}

/// Distribution of the modified chain: the sentinel −1 plus states 0..=n_max.
#[derive(Debug, Clone, PartialEq)]
pub struct ModifiedDist {
    pub sentinel: f64,
    pub states: Vec<f64>,
}

impl ModifiedDist {
    fn from_chain(v: Vec<f64>) -> Self {
        Self {
            sentinel: v[0],
            states: v[1..].to_vec(),
        }
    }

    pub fn total(&self) -> f64 {
        self.sentinel + self.states.iter().sum::<f64>()
    }
}

/// q_{m,n}(t) of the modified chain.
pub fn modified_transient(
    spec: &ModelSpec,
    m: usize,
    t: f64,
    trunc: &Truncation,
) -> Result<ModifiedDist> {
    check_state(m, trunc)?;
    if !(t >= 0.0) {
        return Err(invalid(format!("time {t}")));
    }
    let chain = Chain::modified(spec, trunc.n_max);
    let q = chain.propagate(&unit(chain.len(), m + 1), t)?;
    check_tail(q[trunc.n_max + 1], trunc)?;
    Ok(ModifiedDist::from_chain(q))
}

/// Solves the tridiagonal system with sub-diagonal `a`, diagonal `b`, super-diagonal `c`.
fn thomas(a: &[C64], b: &[C64], c: &[C64], rhs: &[C64]) -> Result<Vec<C64>> {
    let n = b.len();
    let mut cp = vec![C64::new(0.0, 0.0); n];
    let mut dp = vec![C64::new(0.0, 0.0); n];
    let mut piv = b[0];
    for i in 0..n {
        if i > 0 {
            piv = b[i] - a[i] * cp[i - 1];
        }
        if piv.norm() == 0.0 || !piv.is_finite() {
            return Err(Error::Numerical(format!("singular resolvent pivot at row {i}")));
        }
        cp[i] = c[i] / piv;
        dp[i] = (rhs[i] - if i > 0 { a[i] * dp[i - 1] } else { C64::new(0.0, 0.0) }) / piv;
    }
    let mut x = dp;
    for i in (0..n - 1).rev() {
        let next = x[i + 1];
        x[i] -= cp[i] * next;
    }
    Ok(x)
}

/// Tridiagonal part of (zI − Q)ᵀ over states 0..=n_max, with catastrophe outflow on the diagonal.
fn transposed_band(spec: &ModelSpec, z: C64, n_max: usize) -> (Vec<C64>, Vec<C64>, Vec<C64>) {
    let len = n_max + 1;
    let birth = |n: usize| if n < n_max { spec.birth(n as u64) } else { 0.0 };
    let mut a = vec![C64::new(0.0, 0.0); len];
    let mut b = vec![C64::new(0.0, 0.0); len];
    let mut c = vec![C64::new(0.0, 0.0); len];
    for n in 0..len {
        let nu = if n > 0 { spec.nu } else { 0.0 };
        b[n] = z + birth(n) + spec.death(n as u64) + nu;
        if n > 0 {
            a[n] = C64::new(-birth(n - 1), 0.0);
        }
        if n < n_max {
            c[n] = C64::new(-spec.death(n as u64 + 1), 0.0);
        }
    }
    (a, b, c)
}

/// Solves x (zI − Q) = rhs for the standard chain.
fn solve_standard(spec: &ModelSpec, z: C64, rhs: &[C64], n_max: usize) -> Result<Vec<C64>> {
    let (a, b, c) = transposed_band(spec, z, n_max);
    let y = thomas(&a, &b, &c, rhs)?;
    if spec.nu == 0.0 {
        return Ok(y);
    }
    // (zI − Q)ᵀ = Bᵀ − ν e₀ uᵀ with u the indicator of states ≥ 1.
    let w = thomas(&a, &b, &c, &unit_c(n_max + 1, 0))?;
    let uy: C64 = y[1..].iter().sum();
    let uw: C64 = w[1..].iter().sum();
    let denom = C64::new(1.0, 0.0) - spec.nu * uw;
    if denom.norm() < 1e-300 {
        return Err(Error::Numerical("singular rank-one update".into()));
    }
    let k = spec.nu * uy / denom;
    Ok(y.iter().zip(&w).map(|(y, w)| y + k * w).collect())
}

/// Solves x (zI − Q) = rhs for the modified chain; index 0 is the sentinel.
fn solve_modified(spec: &ModelSpec, z: C64, rhs: &[C64], n_max: usize) -> Result<Vec<C64>> {
    let (a, b, c) = transposed_band(spec, z, n_max);
    let y = thomas(&a, &b, &c, &rhs[1..])?;
    let mut out = Vec::with_capacity(n_max + 2);
    let into_sentinel: C64 = y[1..].iter().sum::<C64>() * spec.nu;
    out.push((rhs[0] + into_sentinel) / z);
    out.extend(y);
    Ok(out)
}

fn unit_c(len: usize, i: usize) -> Vec<C64> {
    let mut v = vec![C64::new(0.0, 0.0); len];
    v[i] = C64::new(1.0, 0.0);
    v
}

fn check_resolvent_tail(x: &[C64], z: C64, trunc: &Truncation) -> Result<()> {
    // z·p̃_n(z) is a discounted occupation probability of state n.
    let top = (z * x[x.len() - 1]).norm();
    if top > trunc.tail_tol {
        return Err(Error::Truncation(format!(
            "discounted mass {top:.3e} at n_max = {} for z = {z}",
            trunc.n_max
        )));
    }
    Ok(())
}

fn check_z(z: C64) -> Result<()> {
    if !z.is_finite() || z.norm() == 0.0 {
        return Err(invalid(format!("resolvent argument {z}")));
    }
    Ok(())
}

/// Row m of (zI − Q)^{-1}, i.e. the transforms p̃_{m,n}(z).
pub fn resolvent_column(spec: &ModelSpec, m: usize, z: C64, trunc: &Truncation) -> Result<Vec<C64>> {
    let x = resolvent_raw(spec, m, z, trunc)?;
    check_resolvent_tail(&x, z, trunc)?;
    Ok(x)
}

/// Resolvent row without the boundary check, for transforms that are inverted and checked
/// in the time domain.
pub(crate) fn resolvent_raw(spec: &ModelSpec, m: usize, z: C64, trunc: &Truncation) -> Result<Vec<C64>> {
    check_state(m, trunc)?;
    check_z(z)?;
    solve_standard(spec, z, &unit_c(trunc.n_max + 1, m), trunc.n_max)
}

/// d/dz of [`resolvent_column`], using d/dz R = −R².
pub fn resolvent_derivative(
    spec: &ModelSpec,
    m: usize,
    z: C64,
    trunc: &Truncation,
) -> Result<Vec<C64>> {
    let r = resolvent_column(spec, m, z, trunc)?;
    let neg: Vec<C64> = r.iter().map(|v| -v).collect();
    solve_standard(spec, z, &neg, trunc.n_max)
}

/// Transforms q̃_{m,n}(z) of the modified chain; index 0 is the sentinel −1.
pub fn modified_resolvent(
    spec: &ModelSpec,
    m: usize,
    z: C64,
    trunc: &Truncation,
) -> Result<Vec<C64>> {
    check_state(m, trunc)?;
    check_z(z)?;
    let x = solve_modified(spec, z, &unit_c(trunc.n_max + 2, m + 1), trunc.n_max)?;
    check_resolvent_tail(&x, z, trunc)?;
    Ok(x)
}

/// Monte Carlo subordination result: per-state mean and standard error.
#[derive(Debug, Clone, PartialEq)]
pub struct Subordinated {
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
    pub n_mc: usize,
    /// Mean mass at the truncation boundary; large values mean n_max is too small.
    pub boundary_mass: f64,
}

/// E[p_{m,·}(Y(t))] over `n_mc` draws of the inverse subordinator.
pub fn subordinated_probs(
    spec: &ModelSpec,
    m: usize,
    t: f64,
    tc: TimeChange,
    trunc: &Truncation,
    n_mc: usize,
    seed: u64,
) -> Result<Subordinated> {
    check_state(m, trunc)?;
    let chain = Chain::standard(spec, trunc.n_max);
    subordinate(&chain, m, t, tc, n_mc, seed)
}

/// Same as [`subordinated_probs`] for the modified chain; index 0 is the sentinel −1.
pub fn subordinated_modified_probs(
    spec: &ModelSpec,
    m: usize,
    t: f64,
    tc: TimeChange,
    trunc: &Truncation,
    n_mc: usize,
    seed: u64,
) -> Result<Subordinated> {
    check_state(m, trunc)?;
    let chain = Chain::modified(spec, trunc.n_max);
    subordinate(&chain, m + 1, t, tc, n_mc, seed)
}

/// Draws of Y(t), split over fixed streams so the result does not depend on the thread count.
pub fn inverse_subordinator_draws(tc: TimeChange, t: f64, n: usize, seed: u64) -> Result<Vec<f64>> {
    tc.validate()?;
    let chunk = n.div_ceil(MC_CHUNKS as usize).max(1);
    let parts: Result<Vec<Vec<f64>>> = (0..MC_CHUNKS)
        .into_par_iter()
        .map(|c| {
            let start = c as usize * chunk;
            let end = (start + chunk).min(n);
            let mut rng = RngStream::new(seed, c);
            (start..end).map(|_| tc.sample(t, &mut rng)).collect()
        })
        .collect();
    Ok(parts?.into_iter().flatten().collect())
}

fn subordinate(chain: &Chain, start: usize, t: f64, tc: TimeChange, n_mc: usize, seed: u64) -> Result<Subordinated> {
    if !(t >= 0.0) {
        return Err(invalid(format!("time {t}")));
    }
    let len = chain.len();
    let v0 = unit(len, start);
    let deterministic = matches!(tc, TimeChange::None | TimeChange::InverseStable { alpha: 1.0 });
    if deterministic || t == 0.0 {
        let p = chain.propagate(&v0, t)?;
        return Ok(Subordinated {
            boundary_mass: p[len - 1],
            stderr: vec![0.0; len],
            mean: p,
            n_mc,
        });
    }
    if n_mc < 2 {
        return Err(invalid("at least two draws are needed"));
    }
    let ys = inverse_subordinator_draws(tc, t, n_mc, seed)?;
    let y_max = ys.iter().cloned().fold(0.0, f64::max);
    let grid = HermiteGrid::build(chain, &v0, y_max)?;
    let (mean, stderr) = grid.moments(&ys);
    Ok(Subordinated {
        boundary_mass: mean[len - 1],
        mean,
        stderr,
        n_mc,
    })
}

/// p(y) and p'(y) = p(y)Q on a uniform grid, interpolated by cubic Hermite polynomials.
struct HermiteGrid {
    h: f64,
    p: Vec<Vec<f64>>,
    dp: Vec<Vec<f64>>,
}

impl HermiteGrid {
    fn build(chain: &Chain, v0: &[f64], y_max: f64) -> Result<Self> {
        let mut cells = 256usize;
        loop {
            let h = (y_max / cells as f64).max(f64::MIN_POSITIVE);
            let mut p = Vec::with_capacity(cells + 1);
            let mut dp = Vec::with_capacity(cells + 1);
            let mut cur = v0.to_vec();
            for k in 0..=cells {
                if k > 0 {
                    cur = chain.propagate(&cur, h)?;
                }
                let mut d = vec![0.0; cur.len()];
                chain.apply(&cur, &mut d);
                p.push(cur.clone());
                dp.push(d);
            }
            let grid = Self { h, p, dp };
            if grid.midpoint_error(chain)? <= INTERPOLATION_TOL || cells >= 1 << 16 {
                return Ok(grid);
            }
            cells *= 4;
        }
    }

    fn cells(&self) -> usize {
        self.p.len() - 1
    }

    fn basis(s: f64, h: f64) -> [f64; 4] {
        let s2 = s * s;
        let s3 = s2 * s;
        [
            2.0 * s3 - 3.0 * s2 + 1.0,
            (s3 - 2.0 * s2 + s) * h,
            -2.0 * s3 + 3.0 * s2,
            (s3 - s2) * h,
        ]
    }

    fn locate(&self, y: f64) -> (usize, f64) {
        let x = y / self.h;
        let k = (x.floor() as usize).min(self.cells() - 1);
        (k, (x - k as f64).clamp(0.0, 1.0))
    }

    fn coeffs(&self, k: usize, n: usize) -> [f64; 4] {
        [self.p[k][n], self.dp[k][n], self.p[k + 1][n], self.dp[k + 1][n]]
    }

    /// Largest interpolation error at the cell midpoints, sampled on up to 64 cells.
    fn midpoint_error(&self, chain: &Chain) -> Result<f64> {
        let stride = (self.cells() / 64).max(1);
        let b = Self::basis(0.5, self.h);
        let mut worst: f64 = 0.0;
        for k in (0..self.cells()).step_by(stride) {
            let exact = chain.propagate(&self.p[k], 0.5 * self.h)?;
            for (n, e) in exact.iter().enumerate() {
                let c = self.coeffs(k, n);
                let approx: f64 = (0..4).map(|i| b[i] * c[i]).sum();
                worst = worst.max((approx - e).abs());
            }
        }
        Ok(worst)
    }

    /// Per-state mean and standard error of p_n(Y) over the draws.
    fn moments(&self, ys: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let cells = self.cells();
        let mut s1 = vec![[0.0; 4]; cells];
        let mut s2 = vec![[0.0; 16]; cells];
        for &y in ys {
            let (k, s) = self.locate(y);
            let b = Self::basis(s, self.h);
            for i in 0..4 {
                s1[k][i] += b[i];
                for j in 0..4 {
                    s2[k][4 * i + j] += b[i] * b[j];
                }
            }
        }
        let nf = ys.len() as f64;
        let len = self.p[0].len();
        let mut mean = vec![0.0; len];
        let mut stderr = vec![0.0; len];
        for n in 0..len {
            let mut m1 = 0.0;
            let mut m2 = 0.0;
            for k in 0..cells {
                if s1[k].iter().all(|v| *v == 0.0) {
                    continue;
                }
                let c = self.coeffs(k, n);
                for i in 0..4 {
                    m1 += s1[k][i] * c[i];
                    for j in 0..4 {
                        m2 += s2[k][4 * i + j] * c[i] * c[j];
                    }
                }
            }
            let mu = m1 / nf;
            let var = ((m2 / nf - mu * mu) * nf / (nf - 1.0)).max(0.0);
            mean[n] = mu;
            stderr[n] = (var / nf).sqrt();
        }
        (mean, stderr)
    }
}

/// Right-hand side of the transformed forward system, row n, at transform values `p`.
fn forward_rhs(spec: &ModelSpec, p: &[C64], n: usize, z: C64) -> C64 {
    let birth = |k: usize| spec.birth(k as u64);
    let death = |k: usize| spec.death(k as u64);
    if n == 0 {
        -(birth(0) + spec.nu) * p[0] + death(1) * p[1] + spec.nu / z
    } else {
        -(birth(n) + death(n) + spec.nu) * p[n] + birth(n - 1) * p[n - 1] + death(n + 1) * p[n + 1]
    }
}

/// Largest residual of the Laplace-transformed fractional forward system at the given
/// real points, with p̃^{tc}(z) = (g(z)/z) p̃(g(z)) and g the subordinator exponent.
pub fn fde_residual_laplace(
    spec: &ModelSpec,
    m: usize,
    tc: TimeChange,
    z_samples: &[f64],
    trunc: &Truncation,
) -> Result<f64> {
    tc.validate()?;
    let n_check = 20.min(trunc.n_max - 1);
    let mut worst: f64 = 0.0;
    for &zr in z_samples {
        if !(zr > 0.0) {
            return Err(invalid(format!("sample point {zr} must be positive")));
        }
        let z = C64::new(zr, 0.0);
        let g = tc.exponent(z);
        let p: Vec<C64> = resolvent_column(spec, m, g, trunc)?
            .into_iter()
            .map(|v| v * g / z)
            .collect();
        for n in 0..=n_check {
            let init = if n == m { g / z } else { C64::new(0.0, 0.0) };
            let lhs = g * p[n] - init;
            worst = worst.max((lhs - forward_rhs(spec, &p, n, z)).norm());
        }
    }
    Ok(worst)
}

/// p^{α}_{m,n}(t) for all n by Talbot inversion of z^{α−1} p̃(z^α), or its tempered analogue.
pub fn time_changed_probs(
    spec: &ModelSpec,
    m: usize,
    t: f64,
    tc: TimeChange,
    trunc: &Truncation,
) -> Result<Vec<f64>> {
    tc.validate()?;
    check_state(m, trunc)?;
    if t == 0.0 {
        return Ok(unit(trunc.n_max + 1, m));
    }
    let p = talbot_vec(
        |z| {
            let g = tc.exponent(z);
            Ok(resolvent_raw(spec, m, g, trunc)?
                .into_iter()
                .map(|v| v * g / z)
                .collect())
        },
        t,
        32,
        0.0,
    )?;
    check_tail((p[trunc.n_max].abs() - INVERSION_NOISE).max(0.0), trunc)?;
    Ok(p)
}

/// Largest residual of the time-domain fractional forward system (non-tempered) on the grid
/// t_k = kΔ, k = 1..=steps, rows 0..=n_check.
pub fn fde_residual_caputo(
    spec: &ModelSpec,
    m: usize,
    alpha: f64,
    delta: f64,
    steps: usize,
    n_check: usize,
    trunc: &Truncation,
) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) || !(delta > 0.0) || steps < 3 {
        return Err(invalid(format!("alpha = {alpha}, delta = {delta}, steps = {steps}")));
    }
    check_state(m, trunc)?;
    let n_check = n_check.min(trunc.n_max - 1);
    let tc = TimeChange::InverseStable { alpha };
    let probs: Vec<Vec<f64>> = (0..=steps)
        .map(|k| time_changed_probs(spec, m, k as f64 * delta, tc, trunc))
        .collect::<Result<_>>()?;
    let caputo = CaputoGrid::new(alpha, delta, steps);
    let mut worst: f64 = 0.0;
    for n in 0..=n_check {
        let series: Vec<f64> = probs.iter().map(|p| p[n]).collect();
        for k in 1..=steps {
            let lhs = caputo.derivative(&series, k);
            let pc: Vec<C64> = probs[k].iter().map(|v| C64::new(*v, 0.0)).collect();
            // At z = 1 the ν/z term of row 0 is the constant ν of the time-domain row.
            let rhs = forward_rhs(spec, &pc, n, C64::new(1.0, 0.0)).re;
            worst = worst.max((lhs - rhs).abs());
        }
    }
    Ok(worst)
}

/// Caputo differentiator on a uniform grid by piecewise-cubic product integration.
///
/// On each cell the derivative of the cubic through four neighbouring grid values is
/// integrated exactly against (t_k − s)^{−α}. Starting weights on the first grid values
/// make the rule exact for t^{iα}, iα < 4 (at most six terms), the singular terms of a
/// time-changed probability near zero.
struct CaputoGrid {
    alpha: f64,
    scale: f64,
    start: Vec<Vec<f64>>,
}

impl CaputoGrid {
    fn new(alpha: f64, delta: f64, steps: usize) -> Self {
        let mut me = Self {
            alpha,
            scale: delta.powf(-alpha) / gamma(1.0 - alpha),
            start: vec![Vec::new(); steps + 1],
        };
        let corr = ((4.0 / alpha).ceil() as usize - 1).min(6).min(steps);
        let phi = |i: usize, t: f64| t.powf(i as f64 * alpha);
        let grid: Vec<Vec<f64>> = (1..=corr)
            .map(|i| (0..=steps).map(|k| phi(i, k as f64 * delta)).collect())
            .collect();
        for k in 1..=steps {
            let t = k as f64 * delta;
            // Σ_j w_j φ_i(t_j) = D^α φ_i(t_k) − rule[φ_i](t_k), i = 1..=corr
            let mut mat = vec![vec![0.0; corr]; corr];
            let mut rhs = vec![0.0; corr];
            for i in 1..=corr {
                let e = i as f64 * alpha;
                let exact = gamma(1.0 + e) / gamma(1.0 + e - alpha) * t.powf(e - alpha);
                rhs[i - 1] = exact - me.plain(&grid[i - 1], k);
                for j in 1..=corr {
                    mat[i - 1][j - 1] = phi(i, j as f64 * delta);
                }
            }
            me.start[k] = solve_dense(mat, rhs);
        }
        me
    }

    /// ∫₀¹ x^p (d − x)^{−α} dx for p = 0, 1, 2.
    fn moments(&self, d: f64) -> [f64; 3] {
        let a = self.alpha;
        let i = |q: f64| (d.powf(q + 1.0 - a) - (d - 1.0).powf(q + 1.0 - a)) / (q + 1.0 - a);
        let (i0, i1, i2) = (i(0.0), i(1.0), i(2.0));
        [i0, d * i0 - i1, d * d * i0 - 2.0 * d * i1 + i2]
    }

    fn plain(&self, f: &[f64], k: usize) -> f64 {
        let last = f.len() - 1;
        let mut acc = 0.0;
        for j in 0..k {
            // Cubic through f[s..=s+3] in u = (t − t_s)/Δ, differentiated at u = o + x.
            let s = j.saturating_sub(1).min(last - 3);
            let o = (j - s) as f64;
            let d1 = f[s + 1] - f[s];
            let d2 = f[s + 2] - 2.0 * f[s + 1] + f[s];
            let d3 = f[s + 3] - 3.0 * f[s + 2] + 3.0 * f[s + 1] - f[s];
            let c0 = d1 + d2 * (o - 0.5) + d3 * (3.0 * o * o - 6.0 * o + 2.0) / 6.0;
            let c1 = d2 + d3 * (o - 1.0);
            let c2 = 0.5 * d3;
            let [m0, m1, m2] = self.moments((k - j) as f64);
            acc += c0 * m0 + c1 * m1 + c2 * m2;
        }
        acc * self.scale
    }

    fn derivative(&self, f: &[f64], k: usize) -> f64 {
        let corr: f64 = self.start[k]
            .iter()
            .enumerate()
            .map(|(j, w)| w * (f[j + 1] - f[0]))
            .sum();
        self.plain(f, k) + corr
    }
}

/// Gaussian elimination with partial pivoting for the small starting-weight systems.
fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap_or(col);
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for c in col..n {
                a[row][c] -= f * a[col][c];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|c| a[row][c] * x[c]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    x
}
