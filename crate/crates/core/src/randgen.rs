//! Random variates: positive stable, tempered stable, their inverses, and the
//! (tempered) Mittag-Leffler laws.
//!
//! Every sampler draws from an explicit [`RngStream`]; there is no global
//! generator. A stream is a ChaCha20 keystream selected by `(seed, stream_id)`,
//! so distinct ids give independent, individually reproducible sequences.

use crate::error::{invalid, Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Exp1};
use std::f64::consts::PI;

/// Attempts allowed in the exponential-rejection tempered sampler.
pub const REJECTION_CAP: u64 = 1_000_000;
/// Relative width of the cell that brackets an inverse tempered subordinator draw.
pub const INVERSE_TEMPERED_REL_TOL: f64 = 1e-3;

const ENDPOINT_GUARD: f64 = 1e-12;
const MAX_GRID_STEPS: u64 = 50_000_000;

#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    rng: ChaCha20Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        Self {
            seed,
            stream_id,
            rng,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Uniform on the open interval (0, 1).
    pub fn uniform(&mut self) -> f64 {
        loop {
            let u: f64 = self.rng.random();
            if u > 0.0 {
                return u;
            }
        }
    }

    pub fn exp1(&mut self) -> f64 {
        Exp1.sample(&mut self.rng)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StableParams {
    pub alpha: f64,
    pub theta: f64,
    pub t: f64,
}

fn check_alpha_open(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(invalid(format!("stability index {alpha} must lie in (0, 1)")))
    }
}

/// One-sided α-stable variate with E[e^{−zS}] = e^{−z^α} (Kanter's representation).
pub fn sample_stable(alpha: f64, rng: &mut RngStream) -> Result<f64> {
    check_alpha_open(alpha)?;
    let k = (1.0 - alpha) / alpha;
    loop {
        let u = PI * rng.uniform();
        if u < ENDPOINT_GUARD || u > PI - ENDPOINT_GUARD {
            continue;
        }
        let e = rng.exp1();
        let a = (alpha * u).sin() * ((1.0 - alpha) * u).sin().powf(k) / u.sin().powf(1.0 / alpha);
        let s = a * e.powf(-k);
        if s > 0.0 && s.is_finite() {
            return Ok(s);
        }
    }
}

/// Tempered stable variate D_{θ,α}(t) by exponential rejection from t^{1/α}·S.
pub fn sample_tempered_stable(p: StableParams, rng: &mut RngStream) -> Result<f64> {
    check_alpha_open(p.alpha)?;
    if !(p.theta >= 0.0) || !(p.t > 0.0) {
        return Err(invalid(format!("tempered stable parameters {p:?}")));
    }
    let scale = p.t.powf(1.0 / p.alpha);
    if p.theta == 0.0 {
        return Ok(scale * sample_stable(p.alpha, rng)?);
    }
    for _ in 0..REJECTION_CAP {
        let x = scale * sample_stable(p.alpha, rng)?;
        if rng.uniform() < (-p.theta * x).exp() {
            return Ok(x);
        }
    }
    Err(Error::RejectionCap {
        attempts: REJECTION_CAP,
        rate: (-p.t * p.theta.powf(p.alpha)).exp(),
    })
}

/// D_{θ,α}(t) as a sum of independent increments, each with acceptance rate at least e^{−1}.
pub fn sample_tempered_stable_split(p: StableParams, rng: &mut RngStream) -> Result<f64> {
    check_alpha_open(p.alpha)?;
    if !(p.theta >= 0.0) || !(p.t > 0.0) {
        return Err(invalid(format!("tempered stable parameters {p:?}")));
    }
    let load = p.t * p.theta.powf(p.alpha);
    let pieces = load.ceil().max(1.0);
    if pieces > 1e9 {
        return Err(invalid(format!("t θ^α = {load} is too large to sample")));
    }
    let piece = StableParams {
        t: p.t / pieces,
        ..p
    };
    let mut total = 0.0;
    for _ in 0..pieces as u64 {
        total += sample_tempered_stable(piece, rng)?;
    }
    Ok(total)
}

/// Mittag-Leffler variate with survival E_α(−rate·t^α): X^{1/α}·S, X ~ Exp(rate).
pub fn sample_ml(alpha: f64, rate: f64, rng: &mut RngStream) -> Result<f64> {
    if !(alpha > 0.0 && alpha <= 1.0) || !(rate > 0.0) {
        return Err(invalid(format!("alpha = {alpha}, rate = {rate}")));
    }
    let x = rng.exp1() / rate;
    if alpha == 1.0 {
        return Ok(x);
    }
    Ok(x.powf(1.0 / alpha) * sample_stable(alpha, rng)?)
}

/// Tempered Mittag-Leffler variate D_{θ,α}(X), X ~ Exp(rate).
pub fn sample_tempered_ml(alpha: f64, theta: f64, rate: f64, rng: &mut RngStream) -> Result<f64> {
    check_alpha_open(alpha)?;
    if !(theta > 0.0) || !(rate > 0.0) {
        return Err(invalid(format!("theta = {theta}, rate = {rate}")));
    }
    let x = rng.exp1() / rate;
    sample_tempered_stable_split(StableParams { alpha, theta, t: x }, rng)
}

/// Inverse stable subordinator Y_α(t) = (t/S)^α.
pub fn sample_inverse_stable(alpha: f64, t: f64, rng: &mut RngStream) -> Result<f64> {
    check_alpha_open(alpha)?;
    if !(t > 0.0) {
        return Err(invalid(format!("t = {t}")));
    }
    Ok((t / sample_stable(alpha, rng)?).powf(alpha))
}

/// Inverse tempered stable subordinator Y_{θ,α}(t) with the default cell width.
pub fn sample_inverse_tempered(alpha: f64, theta: f64, t: f64, rng: &mut RngStream) -> Result<f64> {
    sample_inverse_tempered_with(alpha, theta, t, INVERSE_TEMPERED_REL_TOL, rng)
}

/// First passage of D_{θ,α} above `t`, found by stepping the subordinator forward
/// with exact increments on cells of width `rel_tol·max(s, t^α)`. The returned
/// value is uniform in the crossing cell.
pub fn sample_inverse_tempered_with(
    alpha: f64,
    theta: f64,
    t: f64,
    rel_tol: f64,
    rng: &mut RngStream,
) -> Result<f64> {
    check_alpha_open(alpha)?;
    if !(theta > 0.0) || !(t > 0.0) || !(rel_tol > 0.0 && rel_tol < 1.0) {
        return Err(invalid(format!("theta = {theta}, t = {t}, rel_tol = {rel_tol}")));
    }
    let s_ref = t.powf(alpha);
    let mut s: f64 = 0.0;
    let mut d = 0.0;
    for _ in 0..MAX_GRID_STEPS {
        let h = rel_tol * s.max(s_ref);
        d += sample_tempered_stable_split(StableParams { alpha, theta, t: h }, rng)?;
        if d > t {
            return Ok(s + h * rng.uniform());
        }
        s += h;
    }
    Err(Error::NonConvergence {
        what: "inverse tempered subordinator grid".into(),
        terms: MAX_GRID_STEPS as usize,
    })
}
