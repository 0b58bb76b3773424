use super::{LtEvaluator, C64};
use crate::error::{invalid, Error, Result};
use std::f64::consts::{LN_2, PI};

/// Default node count for the Talbot contour.
pub const TALBOT_NODES: usize = 64;
/// Stehfest order; larger values are swamped by rounding in double precision.
pub const STEHFEST_TERMS: usize = 10;
/// Disagreement between the two inversion methods that raises a warning.
pub const METHOD_DISAGREEMENT: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Talbot,
    GaverStehfest,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Inversion {
    pub value: f64,
    pub cross_check: f64,
    pub warning: bool,
}

/// Nodes `(s, ds/dθ)` of the midpoint rule on the cotangent contour
/// s(θ) = (n/t)(−0.6122 + 0.5017 θ cot(0.6407 θ) + 0.2645 i θ), shifted right by `shift`.
fn talbot_nodes(t: f64, n: usize, shift: f64) -> impl Iterator<Item = (C64, C64)> {
    let n = n.max(2) & !1;
    let h = 2.0 * PI / n as f64;
    let scale = n as f64 / t;
    (0..n / 2).map(move |k| {
        let th = (k as f64 + 0.5) * h;
        let a = 0.6407 * th;
        let cot = a.cos() / a.sin();
        let s = C64::new(
            scale * (-0.6122 + 0.5017 * th * cot) + shift,
            scale * 0.2645 * th,
        );
        let ds = C64::new(
            scale * 0.5017 * (cot - a / (a.sin() * a.sin())),
            scale * 0.2645,
        );
        (s, ds)
    })
}

fn talbot_weight(n: usize) -> f64 {
    2.0 / (n.max(2) & !1) as f64
}

pub fn talbot_sum<F>(mut f: F, t: f64, n: usize, shift: f64) -> Result<f64>
where
    F: FnMut(C64) -> Result<C64>,
{
    if !(t > 0.0) {
        return Err(invalid(format!("inversion time must be positive, got {t}")));
    }
    let mut acc = C64::new(0.0, 0.0);
    let mut comp = C64::new(0.0, 0.0);
    for (s, ds) in talbot_nodes(t, n, shift) {
        let fs = f(s)?;
        let term = (s * t).exp() * fs * ds;
        if !term.re.is_finite() || !term.im.is_finite() {
            return Err(Error::Numerical(format!("transform not finite at s = {s}")));
        }
        // Kahan summation keeps the result independent of evaluation order.
        let y = term - comp;
        let tmp = acc + y;
        comp = (tmp - acc) - y;
        acc = tmp;
    }
    Ok(acc.im * talbot_weight(n))
}

/// Talbot inversion of a vector-valued transform, one contour pass for all components.
pub fn talbot_vec<F>(mut f: F, t: f64, n: usize, shift: f64) -> Result<Vec<f64>>
where
    F: FnMut(C64) -> Result<Vec<C64>>,
{
    if !(t > 0.0) {
        return Err(invalid(format!("inversion time must be positive, got {t}")));
    }
    let mut acc: Vec<f64> = Vec::new();
    for (s, ds) in talbot_nodes(t, n, shift) {
        let w = (s * t).exp() * ds;
        let fs = f(s)?;
        if acc.is_empty() {
            acc = vec![0.0; fs.len()];
        }
        for (a, v) in acc.iter_mut().zip(&fs) {
            let term = (w * v).im;
            if !term.is_finite() {
                return Err(Error::Numerical(format!("transform not finite at s = {s}")));
            }
            *a += term;
        }
    }
    let scale = talbot_weight(n);
    Ok(acc.into_iter().map(|a| a * scale).collect())
}

fn stehfest_weights(n: usize) -> Vec<f64> {
    let half = n / 2;
    let fact = |k: usize| (1..=k).fold(1.0_f64, |a, i| a * i as f64);
    (1..=n)
        .map(|k| {
            let mut v = 0.0;
            for j in (k + 1) / 2..=k.min(half) {
                v += (j as f64).powi(half as i32) * fact(2 * j)
                    / (fact(half - j) * fact(j) * fact(j - 1) * fact(k - j) * fact(2 * j - k));
            }
            if (k + half) % 2 == 1 {
                -v
            } else {
                v
            }
        })
        .collect()
}

pub fn stehfest_sum<F>(mut f: F, t: f64, n: usize, shift: f64) -> Result<f64>
where
    F: FnMut(C64) -> Result<C64>,
{
    if !(t > 0.0) {
        return Err(invalid(format!("inversion time must be positive, got {t}")));
    }
    let a = LN_2 / t;
    let mut acc = 0.0;
    for (k, w) in stehfest_weights(n).into_iter().enumerate() {
        acc += w * f(C64::new(a * (k + 1) as f64 + shift, 0.0))?.re;
    }
    Ok(acc * a * (shift * t).exp())
}

/// Inverts `f` at time `t`.
pub fn invert(f: &LtEvaluator, t: f64, method: Method) -> Result<f64> {
    let shift = f.abscissa();
    let g = |s: C64| f.eval(s);
    match method {
        Method::Talbot => talbot_sum(g, t, TALBOT_NODES, shift),
        Method::GaverStehfest => stehfest_sum(g, t, STEHFEST_TERMS, shift),
    }
}

/// Talbot inversion with a Gaver–Stehfest cross-check.
pub fn invert_checked(f: &LtEvaluator, t: f64) -> Result<Inversion> {
    let value = invert(f, t, Method::Talbot)?;
    let cross_check = invert(f, t, Method::GaverStehfest)?;
    Ok(Inversion {
        value,
        cross_check,
        warning: (value - cross_check).abs() > METHOD_DISAGREEMENT * value.abs().max(1.0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mlfunc::{ml3, MlArgs, SeriesControl};

    fn lt(f: impl Fn(C64) -> C64 + Send + Sync + 'static) -> LtEvaluator {
        LtEvaluator::new("test", move |z| Ok(f(z)))
    }

    #[test]
    fn unit_step() {
        let f = lt(|z| 1.0 / z);
        for t in [0.1, 1.0, 7.0] {
            assert!((invert(&f, t, Method::Talbot).unwrap() - 1.0).abs() < 1e-10);
            assert!((invert(&f, t, Method::GaverStehfest).unwrap() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn exponential_decay() {
        let f = lt(|z| 1.0 / (z + 2.0));
        let v = invert(&f, 0.5, Method::Talbot).unwrap();
        assert!((v - (-1.0_f64).exp()).abs() < 1e-8);
    }

    #[test]
    fn growth_needs_shift() {
        let f = lt(|z| 1.0 / (z - 1.5)).with_abscissa(1.5);
        let v = invert(&f, 2.0, Method::Talbot).unwrap();
        assert!((v - 3.0_f64.exp()).abs() < 1e-8 * 3.0_f64.exp(), "{v}");
    }

    #[test]
    fn oscillatory() {
        let f = lt(|z| 1.0 / (z * z + 1.0));
        for t in [0.5, 1.0, 3.0] {
            let v = invert(&f, t, Method::Talbot).unwrap();
            assert!((v - t.sin()).abs() < 1e-9, "t={t}: {v}");
        }
    }

    #[test]
    fn methods_agree_on_smooth_transforms() {
        let f = lt(|z| 1.0 / ((z + 1.0) * (z + 3.0)));
        let r = invert_checked(&f, 1.2).unwrap();
        let exact = ((-1.2f64).exp() - (-3.6f64).exp()) / 2.0;
        assert!((r.value - exact).abs() < 1e-10, "{r:?} {exact}");
        assert!((r.cross_check - exact).abs() < 1e-3, "{r:?}");
    }

    #[test]
    fn mittag_leffler_example() {
        let f = lt(|z| z.powf(-0.5) / (z.powf(0.5) + 1.0));
        let v = invert(&f, 1.0, Method::Talbot).unwrap();
        let e = ml3(MlArgs::new(0.5, 1.0, 1.0, -1.0), &SeriesControl::default()).unwrap();
        assert!((v - e).abs() < 1e-6, "{v} vs {e}");
    }

    #[test]
    fn three_parameter_round_trip() {
        let ctl = SeriesControl::default();
        for alpha in [0.3, 0.6, 0.9] {
            for beta in [1.0, 1.5] {
                for gamma in [1.0, 2.0] {
                    for omega in [-2.0, -0.5, 0.3, 1.0] {
                        let f = lt(move |z| {
                            z.powf(alpha * gamma - beta) / (z.powf(alpha) - omega).powf(gamma)
                        });
                        let f = if omega > 0.0 {
                            f.with_abscissa(omega.powf(1.0 / alpha))
                        } else {
                            f
                        };
                        for t in [0.1, 0.5, 1.0, 2.0, 5.0] {
                            let v = invert(&f, t, Method::Talbot).unwrap();
                            let e = t.powf(beta - 1.0)
                                * ml3(MlArgs::new(alpha, beta, gamma, omega * t.powf(alpha)), &ctl)
                                    .unwrap();
                            assert!(
                                (v - e).abs() < 1e-6 * e.abs().max(1.0),
                                "α={alpha} β={beta} γ={gamma} ω={omega} t={t}: {v} vs {e}"
                            );
                        }
                    }
                }
            }
        }
    }
}
