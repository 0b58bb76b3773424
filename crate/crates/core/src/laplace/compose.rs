use super::{LtEvaluator, C64};
use crate::error::{invalid, Error, Result};
use crate::markov::{resolvent_raw, ModelSpec, Truncation};
use std::f64::consts::PI;

/// Relative size of 1 − ν p̃_{0,0} below which the modified-chain transforms are refused.
pub const RENEWAL_GUARD: f64 = 1e-12;

/// Transforms p̃_{m,n}(s) of the chain without catastrophes.
#[derive(Debug, Clone)]
pub struct BaseResolvent {
    spec: ModelSpec,
    trunc: Truncation,
}

impl BaseResolvent {
    /// Drops the catastrophe rate of `spec`.
    pub fn new(spec: &ModelSpec, trunc: Truncation) -> Self {
        Self {
            spec: spec.with_nu(0.0),
            trunc,
        }
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn truncation(&self) -> &Truncation {
        &self.trunc
    }

    /// p̃_{m,·}(s) for all states.
    pub fn row(&self, m: usize, s: C64) -> Result<Vec<C64>> {
        resolvent_raw(&self.spec, m, s, &self.trunc)
    }

    pub fn entry(&self, m: usize, n: usize, s: C64) -> Result<C64> {
        if n > self.trunc.n_max {
            return Err(invalid(format!("state {n} beyond n_max = {}", self.trunc.n_max)));
        }
        Ok(self.row(m, s)?[n])
    }

    /// f̃_{m,0}(s) = p̃_{m,0}(s) / p̃_{0,0}(s).
    pub fn first_visit(&self, m: usize, s: C64) -> Result<C64> {
        if m == 0 {
            return Ok(C64::new(1.0, 0.0));
        }
        Ok(self.entry(m, 0, s)? / self.entry(0, 0, s)?)
    }
}

/// φ_{θ,α}(z) = (z+θ)^α − θ^α and the factor ψ^ν_{θ,α}(z).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TemperingSymbols {
    pub alpha: f64,
    pub theta: f64,
    pub nu: f64,
}

impl TemperingSymbols {
    pub fn new(alpha: f64, theta: f64, nu: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 1.0) || !(theta >= 0.0) || !(nu >= 0.0) {
            return Err(invalid(format!("tempering symbols α = {alpha}, θ = {theta}, ν = {nu}")));
        }
        Ok(Self { alpha, theta, nu })
    }

    pub fn phi(&self, z: C64) -> C64 {
        pow(z + self.theta, self.alpha) - self.theta.powf(self.alpha)
    }

    /// w = ((z+θ)^α + ν)^{1/α} − θ, so that φ(w) = φ(z) + ν.
    pub fn shifted(&self, z: C64) -> Result<C64> {
        let inner = pow(z + self.theta, self.alpha) + self.nu;
        if inner.arg().abs() >= self.alpha * PI {
            return Err(Error::Numerical(format!(
                "({z}+θ)^α + ν leaves the principal sector"
            )));
        }
        Ok(pow(inner, 1.0 / self.alpha) - self.theta)
    }

    pub fn psi(&self, z: C64) -> Result<C64> {
        let w = self.shifted(z)?;
        Ok(w / (pow(z + self.theta, self.alpha) + self.nu - self.theta.powf(self.alpha)))
    }
}

fn pow(z: C64, a: f64) -> C64 {
    if a == 1.0 {
        z
    } else {
        z.powf(a)
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha <= 1.0 {
        Ok(())
    } else {
        Err(invalid(format!("α = {alpha} outside (0, 1]")))
    }
}

fn check_nu(nu: f64) -> Result<()> {
    if nu >= 0.0 && nu.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("catastrophe rate {nu}")))
    }
}

/// Laplace exponent g(z) of the time change: z^α or φ_{θ,α}(z).
#[derive(Debug, Clone, Copy)]
struct Exponent {
    alpha: f64,
    theta: f64,
}

impl Exponent {
    fn at(&self, z: C64) -> C64 {
        if self.theta == 0.0 {
            pow(z, self.alpha)
        } else {
            pow(z + self.theta, self.alpha) - self.theta.powf(self.alpha)
        }
    }
}

fn state_lt(base: &BaseResolvent, g: C64, z: C64, nu: f64, m: usize, n: usize) -> Result<C64> {
    let s = g + nu;
    let mut v = g / z * base.entry(m, n, s)?;
    if nu > 0.0 {
        v += nu / z * base.entry(0, n, s)?;
    }
    Ok(v)
}

fn renewal_denominator(base: &BaseResolvent, nu: f64, s: C64) -> Result<(C64, C64)> {
    let p00 = base.entry(0, 0, s)?;
    let d = C64::new(1.0, 0.0) - nu * p00;
    if d.norm() <= RENEWAL_GUARD * (1.0 + (nu * p00).norm()) {
        return Err(Error::Degenerate(format!(
            "1 − ν p̃_00 vanishes at s = {s}; effective catastrophes are not defined here"
        )));
    }
    Ok((p00, d))
}

/// Index of the modified chain: the sentinel −1 or an ordinary state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModState {
    Sentinel,
    State(usize),
}

fn modified_lt(
    base: &BaseResolvent,
    g: C64,
    z: C64,
    nu: f64,
    m: usize,
    n: ModState,
) -> Result<C64> {
    let s = g + nu;
    let (_, d) = renewal_denominator(base, nu, s)?;
    let pm0 = base.entry(m, 0, s)?;
    match n {
        ModState::Sentinel => Ok(nu * g / (z * s) * (1.0 / g - pm0 / d)),
        ModState::State(n) => {
            let pmn = base.entry(m, n, s)?;
            let p0n = base.entry(0, n, s)?;
            Ok(g / z * (pmn + nu * pm0 * p0n / d))
        }
    }
}

fn effective_lt(base: &BaseResolvent, g: C64, nu: f64, m: usize) -> Result<C64> {
    let s = g + nu;
    let (p00, d) = renewal_denominator(base, nu, s)?;
    let f = base.first_visit(m, s)?;
    Ok(nu * g / s * (1.0 / g - f * p00 / d))
}

fn first_visit_lt(base_f: &LtEvaluator, g: C64, nu: f64) -> Result<C64> {
    let s = g + nu;
    Ok(nu / s + g / s * base_f.eval(s)?)
}

/// Transform of p^{α,ν}_{m,n}(t): z^{α−1} p̃_{m,n}(ν+z^α) + (ν/z) p̃_{0,n}(ν+z^α).
pub fn lt_tc_bdpc(base: &BaseResolvent, alpha: f64, nu: f64, m: usize, n: usize) -> Result<LtEvaluator> {
    check_alpha(alpha)?;
    check_nu(nu)?;
    let base = base.clone();
    let e = Exponent { alpha, theta: 0.0 };
    Ok(LtEvaluator::new(
        format!("p~_{{{m},{n}}} with alpha = {alpha}, nu = {nu}"),
        move |z| state_lt(&base, e.at(z), z, nu, m, n),
    ))
}

/// f̃_{m,0} of the chain without catastrophes, as p̃_{m,0}/p̃_{0,0}.
pub fn base_first_visit(base: &BaseResolvent, m: usize) -> LtEvaluator {
    let base = base.clone();
    LtEvaluator::new(format!("f~_{{{m},0}}"), move |s| base.first_visit(m, s))
}

/// Transform of the first-visit density to zero: ν/(ν+z^α) + z^α/(ν+z^α) f̃_{m,0}(ν+z^α).
pub fn lt_first_visit_pdf(base_f: &LtEvaluator, alpha: f64, nu: f64) -> Result<LtEvaluator> {
    check_alpha(alpha)?;
    check_nu(nu)?;
    let f = base_f.clone();
    let e = Exponent { alpha, theta: 0.0 };
    Ok(LtEvaluator::new(
        format!("first visit pdf from {}, alpha = {alpha}, nu = {nu}", f.note()),
        move |z| first_visit_lt(&f, e.at(z), nu),
    ))
}

/// Transform of q^{α,ν}_{m,n}(t) for the chain whose catastrophes outside zero jump to −1.
pub fn lt_modified_q(
    base: &BaseResolvent,
    alpha: f64,
    nu: f64,
    m: usize,
    n: ModState,
) -> Result<LtEvaluator> {
    check_alpha(alpha)?;
    check_nu(nu)?;
    let base = base.clone();
    let e = Exponent { alpha, theta: 0.0 };
    Ok(LtEvaluator::new(
        format!("q~_{{{m},{n:?}}} with alpha = {alpha}, nu = {nu}"),
        move |z| modified_lt(&base, e.at(z), z, nu, m, n),
    ))
}

/// Transform of the density of the first effective catastrophe, z q̃_{m,−1}(z) − q_{m,−1}(0).
pub fn lt_effective_catastrophe_pdf(
    base: &BaseResolvent,
    alpha: f64,
    nu: f64,
    m: usize,
) -> Result<LtEvaluator> {
    check_alpha(alpha)?;
    check_nu(nu)?;
    let base = base.clone();
    let e = Exponent { alpha, theta: 0.0 };
    Ok(LtEvaluator::new(
        format!("effective catastrophe pdf from {m}, alpha = {alpha}, nu = {nu}"),
        move |z| effective_lt(&base, e.at(z), nu, m),
    ))
}

/// Quantity selected from the tempered family.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TemperedQuantity {
    State { m: usize, n: usize },
    FirstVisit { m: usize },
    Modified { m: usize, n: ModState },
    Effective { m: usize },
}

/// p̃^{θ,α}_{m,n}(w) = (φ(w)/w) p̃_{m,n}(φ(w)) of the tempered chain without catastrophes.
fn tempered_bdp(base: &BaseResolvent, sym: &TemperingSymbols, w: C64, m: usize, n: usize) -> Result<C64> {
    let pw = sym.phi(w);
    Ok(pw / w * base.entry(m, n, pw)?)
}

fn tempered_eval(
    base: &BaseResolvent,
    sym: &TemperingSymbols,
    q: TemperedQuantity,
    z: C64,
) -> Result<C64> {
    let nu = sym.nu;
    let phi = sym.phi(z);
    match q {
        TemperedQuantity::State { m, n } => {
            let w = sym.shifted(z)?;
            let psi = sym.psi(z)?;
            let mut v = phi / z * tempered_bdp(base, sym, w, m, n)?;
            if nu > 0.0 {
                v += nu / z * tempered_bdp(base, sym, w, 0, n)?;
            }
            Ok(psi * v)
        }
        TemperedQuantity::FirstVisit { m } => {
            let s = phi + nu;
            Ok(nu / s + phi / s * base.first_visit(m, s)?)
        }
        TemperedQuantity::Modified { m, n } => {
            let w = sym.shifted(z)?;
            let psi = sym.psi(z)?;
            let p00 = tempered_bdp(base, sym, w, 0, 0)?;
            let d = C64::new(1.0, 0.0) - nu * psi * p00;
            guard(d, nu * psi * p00, z)?;
            let pm0 = tempered_bdp(base, sym, w, m, 0)?;
            match n {
                ModState::Sentinel => Ok(nu * phi / (z * (nu + phi)) * (1.0 / phi - psi * pm0 / d)),
                ModState::State(n) => {
                    let pmn = tempered_bdp(base, sym, w, m, n)?;
                    let p0n = tempered_bdp(base, sym, w, 0, n)?;
                    Ok(phi * psi / z * (pmn + nu * psi * pm0 * p0n / d))
                }
            }
        }
        TemperedQuantity::Effective { m } => {
            let w = sym.shifted(z)?;
            let psi = sym.psi(z)?;
            let p00 = tempered_bdp(base, sym, w, 0, 0)?;
            let d = C64::new(1.0, 0.0) - nu * psi * p00;
            guard(d, nu * psi * p00, z)?;
            let f = base.first_visit(m, nu + phi)?;
            Ok(nu * phi / (nu + phi) * (1.0 / phi - psi * f * p00 / d))
        }
    }
}

fn guard(d: C64, part: C64, z: C64) -> Result<()> {
    if d.norm() <= RENEWAL_GUARD * (1.0 + part.norm()) {
        return Err(Error::Degenerate(format!("1 − νψ p̃_00 vanishes at z = {z}")));
    }
    Ok(())
}

/// Tempered counterparts of the four transforms above, written through ψ^ν_{θ,α} and the
/// tempered chain without catastrophes.
pub fn lt_tempered_family(
    base: &BaseResolvent,
    alpha: f64,
    theta: f64,
    nu: f64,
    which: TemperedQuantity,
) -> Result<LtEvaluator> {
    if !(alpha > 0.0 && alpha < 1.0) || !(theta > 0.0) {
        return Err(invalid(format!("tempered family needs α ∈ (0,1), θ > 0; got {alpha}, {theta}")));
    }
    check_nu(nu)?;
    let sym = TemperingSymbols::new(alpha, theta, nu)?;
    let base = base.clone();
    Ok(LtEvaluator::new(
        format!("{which:?} with alpha = {alpha}, theta = {theta}, nu = {nu}"),
        move |z| tempered_eval(&base, &sym, which, z),
    ))
}

/// The same four transforms with φ_{θ,α}(z) substituted for z^α in the untempered formulas.
pub fn lt_tempered_direct(
    base: &BaseResolvent,
    alpha: f64,
    theta: f64,
    nu: f64,
    which: TemperedQuantity,
) -> Result<LtEvaluator> {
    check_alpha(alpha)?;
    check_nu(nu)?;
    if !(theta >= 0.0) {
        return Err(invalid(format!("θ = {theta}")));
    }
    let base = base.clone();
    let e = Exponent { alpha, theta };
    Ok(LtEvaluator::new(
        format!("{which:?} (direct) with alpha = {alpha}, theta = {theta}, nu = {nu}"),
        move |z| {
            let g = e.at(z);
            match which {
                TemperedQuantity::State { m, n } => state_lt(&base, g, z, nu, m, n),
                TemperedQuantity::FirstVisit { m } => {
                    let s = g + nu;
                    Ok(nu / s + g / s * base.first_visit(m, s)?)
                }
                TemperedQuantity::Modified { m, n } => modified_lt(&base, g, z, nu, m, n),
                TemperedQuantity::Effective { m } => effective_lt(&base, g, nu, m),
            }
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::laplace::{invert, Method};
    use crate::markov::{
        modified_transient, subordinated_modified_probs, subordinated_probs, time_changed_probs,
        transient_probs, TimeChange,
    };
    use gauss_quad::GaussLegendre;
    use proptest::prelude::*;
    use std::num::NonZeroUsize;

    fn c(x: f64) -> C64 {
        C64::new(x, 0.0)
    }

    fn talbot(f: &LtEvaluator, t: f64) -> f64 {
        invert(f, t, Method::Talbot).unwrap()
    }

    fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
        let gl = GaussLegendre::new(NonZeroUsize::new(20).unwrap());
        let h = (b - a) / panels as f64;
        (0..panels)
            .map(|k| gl.integrate(a + k as f64 * h, a + (k + 1) as f64 * h, &f))
            .sum()
    }

    /// ∫_0^T f with t = T u^{1/α} on the first stretch to absorb the t^{α−1} behaviour at 0.
    fn integrate_from_zero(f: impl Fn(f64) -> f64, alpha: f64, t0: f64, t1: f64, panels: usize) -> f64 {
        let head = integrate(
            |u: f64| {
                let t = t0 * u.powf(1.0 / alpha);
                f(t) * t0 / alpha * u.powf(1.0 / alpha - 1.0)
            },
            0.0,
            1.0,
            8,
        );
        head + integrate(f, t0, t1, panels)
    }

    fn lbdpc() -> ModelSpec {
        ModelSpec::linear(1.0, 2.0, 0.5).unwrap()
    }

    fn immigration() -> ModelSpec {
        ModelSpec::linear_with_immigration(0.5, 1.0, 2.0, 0.4).unwrap()
    }

    #[test]
    fn classical_relation_at_alpha_one() {
        let spec = lbdpc();
        let trunc = Truncation::default();
        let base = BaseResolvent::new(&spec, trunc);
        let exact = transient_probs(&spec, 1, 1.0, &trunc).unwrap();
        for n in 0..6 {
            let v = talbot(&lt_tc_bdpc(&base, 1.0, 0.5, 1, n).unwrap(), 1.0);
            assert!((v - exact[n]).abs() < 1e-6, "n={n}: {v} vs {}", exact[n]);
        }
    }

    #[test]
    fn fractional_state_probabilities_match_markov() {
        let spec = lbdpc();
        let trunc = Truncation::default();
        let base = BaseResolvent::new(&spec, trunc);
        let tc = TimeChange::InverseStable { alpha: 0.5 };
        let f = lt_tc_bdpc(&base, 0.5, 0.5, 1, 0).unwrap();
        let v = talbot(&f, 1.0);
        let direct = time_changed_probs(&spec, 1, 1.0, tc, &trunc).unwrap();
        assert!((v - direct[0]).abs() < 1e-8, "{v} vs {}", direct[0]);
        let mc = subordinated_probs(&spec, 1, 1.0, tc, &trunc, 20_000, 11).unwrap();
        let tol = (3.0 * mc.stderr[0]).max(2e-3);
        assert!((v - mc.mean[0]).abs() < tol, "{v} vs {} ± {}", mc.mean[0], mc.stderr[0]);
    }

    #[test]
    fn no_catastrophe_drops_second_term() {
        let base = BaseResolvent::new(&lbdpc(), Truncation::default());
        let f = lt_tc_bdpc(&base, 0.7, 0.0, 2, 1).unwrap();
        for z in [c(0.5), c(2.0), C64::new(1.0, 3.0)] {
            let g = z.powf(0.7);
            let expect = g / z * base.entry(2, 1, g).unwrap();
            assert!((f.eval(z).unwrap() - expect).norm() < 1e-14);
        }
    }

    #[test]
    fn first_visit_transform_tends_to_one_at_origin() {
        let base = BaseResolvent::new(&lbdpc(), Truncation::default());
        let f = lt_first_visit_pdf(&base_first_visit(&base, 1), 0.6, 0.5).unwrap();
        assert!((f.eval_real(1e-10).unwrap() - 1.0).abs() < 1e-5);
        let f = lt_first_visit_pdf(&base_first_visit(&base, 3), 0.6, 0.5).unwrap();
        assert!((f.eval_real(1e-10).unwrap() - 1.0).abs() < 1e-5);
    }

    #[test]
    fn first_visit_pdf_has_unit_mass() {
        let (alpha, nu) = (0.6, 0.5);
        let base = BaseResolvent::new(&lbdpc(), Truncation::default());
        let pdf = lt_first_visit_pdf(&base_first_visit(&base, 1), alpha, nu).unwrap();
        let p = pdf.clone();
        let surv = LtEvaluator::new("survival", move |z| Ok((1.0 - p.eval(z)?) / z));
        let horizon = 20.0;
        let body = integrate_from_zero(|t| talbot(&pdf, t), alpha, 1.0, horizon, 19);
        let tail = talbot(&surv, horizon);
        assert!((body + tail - 1.0).abs() < 1e-4, "{body} + {tail}");
    }

    #[test]
    fn modified_transforms_carry_total_probability() {
        let spec = immigration();
        let trunc = Truncation::default();
        let base = BaseResolvent::new(&spec, trunc);
        let z = c(1.0);
        let mut total = lt_modified_q(&base, 0.7, spec.nu, 1, ModState::Sentinel)
            .unwrap()
            .eval(z)
            .unwrap();
        for n in 0..=trunc.n_max {
            total += lt_modified_q(&base, 0.7, spec.nu, 1, ModState::State(n))
                .unwrap()
                .eval(z)
                .unwrap();
        }
        assert!((z * total - 1.0).norm() < 1e-8, "{total}");
    }

    #[test]
    fn modified_transforms_at_alpha_one() {
        let spec = immigration();
        let trunc = Truncation::default();
        let base = BaseResolvent::new(&spec, trunc);
        let exact = modified_transient(&spec, 1, 1.0, &trunc).unwrap();
        let s = talbot(&lt_modified_q(&base, 1.0, spec.nu, 1, ModState::Sentinel).unwrap(), 1.0);
        assert!((s - exact.sentinel).abs() < 1e-6, "{s} vs {}", exact.sentinel);
        for n in 0..5 {
            let v = talbot(&lt_modified_q(&base, 1.0, spec.nu, 1, ModState::State(n)).unwrap(), 1.0);
            assert!((v - exact.states[n]).abs() < 1e-6, "n={n}: {v} vs {}", exact.states[n]);
        }
    }

    #[test]
    fn sentinel_matches_subordinated_modified_chain() {
        let spec = immigration();
        let trunc = Truncation::default();
        let base = BaseResolvent::new(&spec, trunc);
        let tc = TimeChange::InverseStable { alpha: 0.7 };
        let v = talbot(&lt_modified_q(&base, 0.7, spec.nu, 1, ModState::Sentinel).unwrap(), 1.5);
        let mc = subordinated_modified_probs(&spec, 1, 1.5, tc, &trunc, 20_000, 5).unwrap();
        assert!((v - mc.mean[0]).abs() < 2e-3, "{v} vs {}", mc.mean[0]);
    }

    #[test]
    fn effective_catastrophe_pdf_is_a_subprobability_density() {
        let spec = immigration();
        let base = BaseResolvent::new(&spec, Truncation::default());
        let g = lt_effective_catastrophe_pdf(&base, 0.7, spec.nu, 1).unwrap();
        assert!(g.eval_real(1e-10).unwrap() <= 1.0 + 1e-9);
        for k in 1..=50 {
            let t = 0.1 * k as f64;
            let v = talbot(&g, t);
            assert!(v >= -1e-6, "t={t}: {v}");
        }
    }

    #[test]
    fn effective_pdf_is_derivative_of_sentinel() {
        let spec = immigration();
        let base = BaseResolvent::new(&spec, Truncation::default());
        let g = lt_effective_catastrophe_pdf(&base, 0.7, spec.nu, 2).unwrap();
        let q = lt_modified_q(&base, 0.7, spec.nu, 2, ModState::Sentinel).unwrap();
        for z in [c(0.3), c(4.0), C64::new(2.0, -1.0)] {
            let lhs = g.eval(z).unwrap();
            let rhs = z * q.eval(z).unwrap();
            assert!((lhs - rhs).norm() < 1e-12 * rhs.norm().max(1.0), "{lhs} vs {rhs}");
        }
    }

    fn quantities() -> [TemperedQuantity; 6] {
        [
            TemperedQuantity::State { m: 1, n: 0 },
            TemperedQuantity::State { m: 2, n: 3 },
            TemperedQuantity::FirstVisit { m: 2 },
            TemperedQuantity::Modified { m: 1, n: ModState::Sentinel },
            TemperedQuantity::Modified { m: 1, n: ModState::State(2) },
            TemperedQuantity::Effective { m: 1 },
        ]
    }

    #[test]
    fn tempered_psi_form_equals_direct_substitution() {
        let base = BaseResolvent::new(&immigration(), Truncation::default());
        for q in quantities() {
            let a = lt_tempered_family(&base, 0.6, 1.0, 0.4, q).unwrap();
            let b = lt_tempered_direct(&base, 0.6, 1.0, 0.4, q).unwrap();
            for z in [c(0.5), c(1.0), c(2.0), C64::new(1.0, 2.0)] {
                let (x, y) = (a.eval(z).unwrap(), b.eval(z).unwrap());
                assert!((x - y).norm() < 1e-10 * y.norm().max(1.0), "{q:?} z={z}: {x} vs {y}");
            }
        }
    }

    #[test]
    fn tempered_family_reduces_to_fractional_family() {
        let spec = immigration();
        let base = BaseResolvent::new(&spec, Truncation::default());
        let alpha = 0.6;
        // The tempering correction is of order θ^α.
        let theta = 1e-8_f64.powf(1.0 / alpha);
        let fv = base_first_visit(&base, 2);
        let untempered = |q: TemperedQuantity| match q {
            TemperedQuantity::State { m, n } => lt_tc_bdpc(&base, alpha, spec.nu, m, n),
            TemperedQuantity::FirstVisit { .. } => lt_first_visit_pdf(&fv, alpha, spec.nu),
            TemperedQuantity::Modified { m, n } => lt_modified_q(&base, alpha, spec.nu, m, n),
            TemperedQuantity::Effective { m } => lt_effective_catastrophe_pdf(&base, alpha, spec.nu, m),
        };
        for q in quantities() {
            let a = lt_tempered_family(&base, alpha, theta, spec.nu, q).unwrap();
            let b = untempered(q).unwrap();
            for z in [0.5, 1.0, 2.0] {
                let (x, y) = (a.eval_real(z).unwrap(), b.eval_real(z).unwrap());
                assert!((x - y).abs() < 1e-6, "{q:?} z={z}: {x} vs {y}");
            }
        }
    }

    #[test]
    fn densities_vanish_at_large_argument() {
        let spec = immigration();
        let base = BaseResolvent::new(&spec, Truncation::default());
        let absorbing = BaseResolvent::new(&lbdpc(), Truncation::default());
        let z = 1e3;
        let pdfs = [
            lt_first_visit_pdf(&base_first_visit(&absorbing, 1), 0.6, 0.5).unwrap(),
            lt_effective_catastrophe_pdf(&base, 0.7, spec.nu, 1).unwrap(),
            lt_tempered_family(&absorbing, 0.6, 1.0, 0.5, TemperedQuantity::FirstVisit { m: 1 }).unwrap(),
            lt_tempered_family(&base, 0.6, 1.0, 0.4, TemperedQuantity::Effective { m: 1 }).unwrap(),
        ];
        for f in &pdfs {
            let v = f.eval_real(z).unwrap();
            assert!(v.abs() < 0.1, "{}: {v}", f.note());
        }
    }

    #[test]
    fn tempered_first_visit_mean() {
        let (alpha, theta, nu) = (0.6, 1.0, 0.5);
        let base = BaseResolvent::new(&lbdpc(), Truncation::default());
        let pdf = lt_tempered_family(&base, alpha, theta, nu, TemperedQuantity::FirstVisit { m: 1 }).unwrap();
        let surv = LtEvaluator::new("survival", move |z| Ok((1.0 - pdf.eval(z)?) / z));
        let mean = integrate_from_zero(|t| talbot(&surv, t), alpha, 1.0, 80.0, 79);
        let f_nu = base.first_visit(1, c(nu)).unwrap().re;
        let closed = alpha * theta.powf(alpha - 1.0) / nu * (1.0 - f_nu);
        assert!((mean - closed).abs() < 1e-3 * closed, "{mean} vs {closed}");
    }

    #[test]
    fn degenerate_renewal_is_reported() {
        let spec = ModelSpec::catastrophe_only(1.0).unwrap();
        let base = BaseResolvent::new(&spec, Truncation { n_max: 5, tail_tol: 1e-10 });
        // Without births or deaths p̃_00(s) = 1/s, so 1 − ν p̃_00(ν + z^α) vanishes as z → 0.
        let q = lt_modified_q(&base, 1.0, 1.0, 0, ModState::Sentinel).unwrap();
        assert!(matches!(q.eval(c(1e-14)), Err(Error::Degenerate(_))));
    }

    #[test]
    fn bad_parameters_rejected() {
        let base = BaseResolvent::new(&lbdpc(), Truncation::default());
        assert!(lt_tc_bdpc(&base, 1.5, 0.5, 1, 0).is_err());
        assert!(lt_tc_bdpc(&base, 0.5, -1.0, 1, 0).is_err());
        assert!(lt_tempered_family(&base, 0.5, 0.0, 0.5, TemperedQuantity::FirstVisit { m: 1 }).is_err());
        assert!(TemperingSymbols::new(0.0, 1.0, 0.0).is_err());
    }

    proptest! {
        #[test]
        fn phi_vanishes_at_zero_and_increases(alpha in 0.05f64..0.99, theta in 0.0f64..5.0, x in 0.0f64..50.0, dx in 1e-3f64..10.0) {
            let s = TemperingSymbols::new(alpha, theta, 0.0).unwrap();
            prop_assert!(s.phi(c(0.0)).norm() < 1e-14);
            prop_assert!(s.phi(c(x + dx)).re > s.phi(c(x)).re);
        }

        #[test]
        fn psi_is_one_without_tempering_at_alpha_one(re in 0.01f64..50.0, im in -50.0f64..50.0, nu in 0.0f64..10.0) {
            let s = TemperingSymbols::new(1.0, 0.0, nu).unwrap();
            let psi = s.psi(C64::new(re, im)).unwrap();
            prop_assert!((psi - 1.0).norm() < 1e-13);
        }
    }
}
