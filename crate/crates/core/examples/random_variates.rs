//! Draws stable, Mittag-Leffler and inverse-subordinator variates and checks them
//! against known transforms and distribution functions.

use statrs::function::gamma::gamma;
use tcbd::mcstats::{ks_one_sample, Estimate};
use tcbd::mlfunc::{ml_cdf, SeriesControl};
use tcbd::randgen::{sample_inverse_stable, sample_ml, sample_stable, sample_tempered_ml, RngStream};

const N: usize = 100_000;

fn main() -> tcbd::Result<()> {
    let ctl = SeriesControl::default();
    let mut rng = RngStream::new(2024, 0);

    let alpha = 0.7;
    let lt: Vec<f64> = (0..N)
        .map(|_| sample_stable(alpha, &mut rng).map(|s| (-s).exp()))
        .collect::<tcbd::Result<_>>()?;
    let e = Estimate::from_samples(&lt)?;
    println!("stable:  E[exp(-S)] = {:.5} +- {:.5}, exact {:.5}", e.value, e.stderr, (-1f64).exp());

    let ml_draws: Vec<f64> = (0..N / 10).map(|_| sample_ml(alpha, 1.5, &mut rng)).collect::<tcbd::Result<_>>()?;
    let ks = ks_one_sample(&ml_draws, |x| ml_cdf(alpha, 1.5, x, &ctl).unwrap_or(f64::NAN))?;
    println!("ML:      KS D = {:.5}, threshold {:.5}, pass {}", ks.statistic, ks.threshold, ks.pass);

    let t = 2.0;
    let y: Vec<f64> = (0..N).map(|_| sample_inverse_stable(alpha, t, &mut rng)).collect::<tcbd::Result<_>>()?;
    let e = Estimate::from_samples(&y)?;
    let exact = t.powf(alpha) / gamma(1.0 + alpha);
    println!("inverse: E[Y(2)] = {:.5} +- {:.5}, exact {:.5}", e.value, e.stderr, exact);

    let tm: Vec<f64> = (0..N / 10)
        .map(|_| sample_tempered_ml(alpha, 0.5, 1.5, &mut rng))
        .collect::<tcbd::Result<_>>()?;
    let e = Estimate::from_samples(&tm)?;
    println!("tempered ML (theta 0.5): mean {:.5} +- {:.5}", e.value, e.stderr);
    Ok(())
}
