//! Evaluates Mittag-Leffler functions and the ML distribution.

use tcbd::mlfunc::{ml, ml2, ml3, ml_cdf, tempered_ml_survival, MlArgs, SeriesControl};

fn main() -> tcbd::Result<()> {
    let ctl = SeriesControl::default();
    for z in [-10.0, -1.0, 0.6, 2.0] {
        println!("E_0.5({z}) = {:.12}", ml(0.5, z, &ctl)?);
    }
    println!("E_1,2(1) = {:.12} (e - 1 = {:.12})", ml2(1.0, 2.0, 1.0, &ctl)?, std::f64::consts::E - 1.0);
    let a = MlArgs { alpha: 0.7, beta: 1.3, gamma: 2.0, z: -3.0 };
    println!("E^2_0.7,1.3(-3) = {:.12}", ml3(a, &ctl)?);

    println!("\n t     ML cdf (a=0.6, rate 2)   tempered survival (theta 0.5)");
    for t in [0.1, 0.5, 1.0, 2.0, 5.0] {
        let f = ml_cdf(0.6, 2.0, t, &ctl)?;
        let s = tempered_ml_survival(0.6, 0.5, 2.0, t, &ctl)?;
        println!("{t:4.1}   {f:.10}             {s:.10}");
    }
    Ok(())
}
