//! Mittag-Leffler functions and the (tempered) Mittag-Leffler laws.
//!
//! `ml3` evaluates E^γ_{α,β}(z) = Σ_r Γ(γ+r) z^r / (r! Γ(γ) Γ(αr+β)) for real z.
//! The power series is used whenever it is well conditioned. For negative
//! arguments where it is not, the algebraic asymptotic expansion is tried
//! first (|z| ≥ [`Z_SWITCH`]) and a Hankel-contour quadrature of the Laplace
//! pair s^{αγ−β}/(s^α − z)^γ covers the rest.

use crate::error::{invalid, Error, Result};
use crate::laplace::{talbot_sum, C64};
use crate::special::{ln_gamma_signed, rgamma};
use statrs::function::gamma::ln_gamma;

/// Below −Z_SWITCH the asymptotic expansion is preferred to the power series.
pub const Z_SWITCH: f64 = 10.0;
/// Largest θt for which the tempered series are summed.
pub const THETA_T_LIMIT: f64 = 30.0;

const CONSECUTIVE_SMALL: usize = 5;
const EPS: f64 = f64::EPSILON;

/// Truncation policy shared by every infinite sum and quadrature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesControl {
    pub rel_tol: f64,
    pub abs_floor: f64,
    pub max_terms: usize,
}

impl Default for SeriesControl {
    fn default() -> Self {
        Self {
            rel_tol: 1e-12,
            abs_floor: 1e-300,
            max_terms: 100_000,
        }
    }
}

impl SeriesControl {
    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0) || self.max_terms == 0 || !(self.abs_floor >= 0.0) {
            return Err(invalid(format!("bad series control {self:?}")));
        }
        Ok(())
    }

    pub(crate) fn is_small(&self, term: f64, sum: f64) -> bool {
        term.abs() <= self.rel_tol * sum.abs() || term.abs() <= self.abs_floor
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MlArgs {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub z: f64,
}

impl MlArgs {
    pub fn new(alpha: f64, beta: f64, gamma: f64, z: f64) -> Self {
        Self {
            alpha,
            beta,
            gamma,
            z,
        }
    }

    /// γ = 0 is accepted and means the constant 1/Γ(β).
    fn validate(&self) -> Result<()> {
        let ok = self.alpha > 0.0
            && self.beta > 0.0
            && self.gamma >= 0.0
            && self.alpha.is_finite()
            && self.beta.is_finite()
            && self.gamma.is_finite()
            && self.z.is_finite();
        if ok {
            Ok(())
        } else {
            Err(invalid(format!("Mittag-Leffler arguments {self:?}")))
        }
    }
}

/// Three-parameter Mittag-Leffler function E^γ_{α,β}(z).
pub fn ml3(a: MlArgs, ctl: &SeriesControl) -> Result<f64> {
    a.validate()?;
    ctl.validate()?;
    if a.gamma == 0.0 || a.z == 0.0 {
        return Ok(rgamma(a.beta));
    }
    if a.alpha == 1.0 && a.beta == 1.0 && a.gamma == 1.0 {
        return Ok(a.z.exp());
    }
    if a.z > 0.0 {
        return taylor(&a, ctl).map(|(s, _)| s);
    }
    if a.alpha == 1.0 {
        return unit_order_negative(&a, ctl);
    }

    let x = -a.z;
    if x.ln() / a.alpha < 40f64.ln() {
        if let Ok((sum, max_term)) = taylor(&a, ctl) {
            if max_term * EPS * 10.0 <= ctl.rel_tol * sum.abs().max(ctl.abs_floor) {
                return Ok(sum);
            }
        }
    }
    if a.alpha >= 2.0 {
        return Err(Error::NonConvergence {
            what: format!("power series for {a:?}"),
            terms: ctl.max_terms,
        });
    }
    if x >= Z_SWITCH {
        if let Some(v) = asymptotic(&a, ctl) {
            return Ok(v);
        }
    }
    if a.alpha > 1.0 {
        return Err(Error::NonConvergence {
            what: format!("expansions for {a:?}"),
            terms: ctl.max_terms,
        });
    }
    contour(&a)
}

/// Two-parameter function E_{α,β}(z).
pub fn ml2(alpha: f64, beta: f64, z: f64, ctl: &SeriesControl) -> Result<f64> {
    ml3(MlArgs::new(alpha, beta, 1.0, z), ctl)
}

/// One-parameter function E_α(z).
pub fn ml(alpha: f64, z: f64, ctl: &SeriesControl) -> Result<f64> {
    ml3(MlArgs::new(alpha, 1.0, 1.0, z), ctl)
}

fn taylor(a: &MlArgs, ctl: &SeriesControl) -> Result<(f64, f64)> {
    let lz = a.z.abs().ln();
    let neg = a.z < 0.0;
    let lg0 = ln_gamma(a.gamma);
    let mut sum = 0.0;
    let mut comp = 0.0;
    let mut max_term = 0.0f64;
    let mut small = 0;
    for r in 0..ctl.max_terms {
        let rf = r as f64;
        let lt = ln_gamma(a.gamma + rf) - lg0 - ln_gamma(rf + 1.0) + rf * lz
            - ln_gamma(a.alpha * rf + a.beta);
        let mag = lt.exp();
        if !mag.is_finite() {
            return Err(Error::Numerical(format!("power series overflow for {a:?}")));
        }
        let term = if neg && r % 2 == 1 { -mag } else { mag };
        let y = term - comp;
        let s = sum + y;
        comp = (s - sum) - y;
        sum = s;
        max_term = max_term.max(mag);
        if max_term > 1e20 && neg {
            return Err(Error::Numerical(format!("power series cancels for {a:?}")));
        }
        if ctl.is_small(mag, sum) {
            small += 1;
            if small >= CONSECUTIVE_SMALL {
                return Ok((sum, max_term));
            }
        } else {
            small = 0;
        }
    }
    Err(Error::NonConvergence {
        what: format!("power series for {a:?}"),
        terms: ctl.max_terms,
    })
}

/// Σ_k (−1)^k (γ)_k/k! (−z)^{−γ−k} / Γ(β − α(γ+k)), summed to its smallest term.
fn asymptotic(a: &MlArgs, ctl: &SeriesControl) -> Option<f64> {
    let lx = (-a.z).ln();
    let tol = ctl.rel_tol.max(EPS);
    // Exponentially small remainder from the singularity of the spectral density at angle π(1−α)/α.
    let psi = std::f64::consts::PI * (1.0 - a.alpha) / a.alpha;
    let hidden = if psi < std::f64::consts::FRAC_PI_2 {
        -(lx / a.alpha).exp() * psi.cos()
    } else {
        f64::NEG_INFINITY
    };
    let lg0 = ln_gamma(a.gamma);
    let mut sum = 0.0;
    let mut prev = f64::INFINITY;
    for k in 0..ctl.max_terms.min(10_000) {
        let kf = k as f64;
        let w = a.beta - a.alpha * (a.gamma + kf);
        let base = ln_gamma(a.gamma + kf) - lg0 - ln_gamma(kf + 1.0) - (a.gamma + kf) * lx;
        // Envelope of |1/Γ(w)|, immune to accidental near-zeros at the poles.
        let env = if w > 0.0 {
            (base - ln_gamma(w)).exp()
        } else {
            (base + ln_gamma(1.0 - w) - std::f64::consts::PI.ln()).exp()
        };
        if env > prev {
            return None;
        }
        prev = env;
        let (lg, sg) = ln_gamma_signed(w);
        if sg != 0.0 {
            let sign = if k % 2 == 1 { -sg } else { sg };
            sum += sign * (base - lg).exp();
        }
        if k > 0 && env <= tol * sum.abs() {
            return (hidden <= (tol * sum.abs()).ln()).then_some(sum);
        }
    }
    None
}

/// E^γ_{α,β}(z) = (1/2πi) ∫_Ha e^s s^{αγ−β} (s^α − z)^{−γ} ds, valid for z < 0, α < 1.
fn contour(a: &MlArgs) -> Result<f64> {
    let p = a.alpha * a.gamma - a.beta;
    let g_int = a.gamma.fract() == 0.0 && a.gamma <= 64.0;
    let f = |s: C64| -> Result<C64> {
        let d = s.powf(a.alpha) - a.z;
        let den = if g_int { d.powi(a.gamma as i32) } else { d.powf(a.gamma) };
        Ok(s.powf(p) / den)
    };
    let mut last = Err(Error::NonConvergence {
        what: format!("contour quadrature for {a:?}"),
        terms: 0,
    });
    for (fine_n, coarse_n) in [(32, 24), (64, 48)] {
        let fine = talbot_sum(f, 1.0, fine_n, 0.0)?;
        let coarse = talbot_sum(f, 1.0, coarse_n, 0.0)?;
        if (fine - coarse).abs() <= 1e-9 * fine.abs().max(1.0) {
            return Ok(fine);
        }
        last = Err(Error::NonConvergence {
            what: format!("contour quadrature for {a:?}"),
            terms: fine_n,
        });
    }
    last
}

/// α = 1: E^γ_{1,β}(z) = e^z ₁F₁(β−γ; β; −z)/Γ(β) (Kummer), a positive series for z < 0.
fn unit_order_negative(a: &MlArgs, ctl: &SeriesControl) -> Result<f64> {
    let x = -a.z;
    let a1 = a.beta - a.gamma;
    let terminating = a1 <= 0.0 && a1.fract() == 0.0;
    if x > 600.0 && !terminating {
        return asymptotic(a, ctl).ok_or_else(|| Error::NonConvergence {
            what: format!("asymptotic expansion for {a:?}"),
            terms: ctl.max_terms,
        });
    }
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut small = 0;
    for r in 0..ctl.max_terms {
        let rf = r as f64;
        term *= (a1 + rf) / ((a.beta + rf) * (rf + 1.0)) * x;
        sum += term;
        if term == 0.0 {
            return Ok(a.z.exp() * sum * rgamma(a.beta));
        }
        if ctl.is_small(term, sum) {
            small += 1;
            if small >= CONSECUTIVE_SMALL {
                return Ok(a.z.exp() * sum * rgamma(a.beta));
            }
        } else {
            small = 0;
        }
    }
    Err(Error::NonConvergence {
        what: format!("Kummer series for {a:?}"),
        terms: ctl.max_terms,
    })
}

fn check_order(alpha: f64, open_at_one: bool) -> Result<()> {
    let ok = alpha > 0.0 && if open_at_one { alpha < 1.0 } else { alpha <= 1.0 };
    if ok {
        Ok(())
    } else {
        Err(invalid(format!("order alpha = {alpha} out of range")))
    }
}

fn clamp_probability(p: f64, what: &str) -> Result<f64> {
    if !(-1e-9..=1.0 + 1e-9).contains(&p) {
        return Err(Error::Numerical(format!("{what} = {p} outside [0, 1]")));
    }
    Ok(p.clamp(0.0, 1.0))
}

/// Distribution function 1 − E_α(−rate·t^α) of the Mittag-Leffler law.
pub fn ml_cdf(alpha: f64, rate: f64, t: f64, ctl: &SeriesControl) -> Result<f64> {
    check_order(alpha, false)?;
    if !(rate > 0.0) || !(t >= 0.0) {
        return Err(invalid(format!("rate = {rate}, t = {t}")));
    }
    if t == 0.0 {
        return Ok(0.0);
    }
    clamp_probability(1.0 - ml(alpha, -rate * t.powf(alpha), ctl)?, "Mittag-Leffler cdf")
}

/// j-th derivative in c of E[e^{c·Y(t)}], Y the inverse θ-tempered α-stable subordinator.
///
/// Evaluated as
/// e^{−θt} Σ_k (θt)^k j! t^{αj} [E^{j+1}_{α,αj+k+1}(y) − θ^α t^α E^{j+1}_{α,α(j+1)+k+1}(y)],
/// y = (θ^α + c) t^α, which is the double series
/// e^{−θt} Σ_m Σ_k (c t^α)^m (θt)^k E^m_{α,mα+k+1}(θ^α t^α) (and its c-derivatives)
/// with the inner m-sum carried out in closed form. θ = 0 gives j! t^{αj} E^{j+1}_{α,αj+1}(c t^α).
pub fn tempered_kernel(
    alpha: f64,
    theta: f64,
    c: f64,
    t: f64,
    deriv: u32,
    ctl: &SeriesControl,
) -> Result<f64> {
    check_order(alpha, theta > 0.0)?;
    if !(theta >= 0.0) || !(t >= 0.0) || !c.is_finite() {
        return Err(invalid(format!("theta = {theta}, t = {t}, c = {c}")));
    }
    let j = deriv as f64;
    if t == 0.0 {
        return Ok(if deriv == 0 { 1.0 } else { 0.0 });
    }
    let ta = t.powf(alpha);
    let fact: f64 = (1..=deriv).map(|i| i as f64).product();
    if theta == 0.0 {
        let e = ml3(MlArgs::new(alpha, alpha * j + 1.0, j + 1.0, c * ta), ctl)?;
        return Ok(fact * ta.powf(j) * e);
    }
    let tt = theta * t;
    if tt > THETA_T_LIMIT {
        return Err(Error::Numerical(format!(
            "theta*t = {tt} exceeds {THETA_T_LIMIT}; the tempered series loses all precision"
        )));
    }
    let tha = theta.powf(alpha);
    let y = (tha + c) * ta;
    let mut sum = 0.0;
    let mut small = 0;
    let mut w = 1.0;
    for k in 0..ctl.max_terms {
        let kf = k as f64;
        if k > 0 {
            w *= tt;
        }
        let e1 = ml3(MlArgs::new(alpha, alpha * j + kf + 1.0, j + 1.0, y), ctl)?;
        let e2 = ml3(MlArgs::new(alpha, alpha * (j + 1.0) + kf + 1.0, j + 1.0, y), ctl)?;
        let term = w * (e1 - tha * ta * e2);
        sum += term;
        if kf > tt && ctl.is_small(term, sum) {
            small += 1;
            if small >= CONSECUTIVE_SMALL {
                return Ok((-tt).exp() * fact * ta.powf(j) * sum);
            }
        } else {
            small = 0;
        }
    }
    Err(Error::NonConvergence {
        what: "tempered series".into(),
        terms: ctl.max_terms,
    })
}

/// Survival function of the tempered Mittag-Leffler law with the given rate.
pub fn tempered_ml_survival(
    alpha: f64,
    theta: f64,
    rate: f64,
    t: f64,
    ctl: &SeriesControl,
) -> Result<f64> {
    check_order(alpha, true)?;
    if !(theta > 0.0) || !(rate > 0.0) || !(t >= 0.0) {
        return Err(invalid(format!("theta = {theta}, rate = {rate}, t = {t}")));
    }
    clamp_probability(
        tempered_kernel(alpha, theta, -rate, t, 0, ctl)?,
        "tempered Mittag-Leffler survival",
    )
}
