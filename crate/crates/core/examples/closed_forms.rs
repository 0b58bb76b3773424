//! Closed-form moments, extinction and state probabilities of the linear model, plus
//! sojourn and first-passage results.

use tcbd::analytic::{
    catastrophe_time_survival, effective_catastrophe_moments, extinction_lbdpc, mean_lbdpc, sojourn_survival,
    state_prob_lbdpc, tempered_first_visit_moments, tempered_lbdpc, var_lbdpc, LinearParams, LinearQuantity,
};
use tcbd::markov::{ModelSpec, TimeChange, Truncation};
use tcbd::mlfunc::SeriesControl;

fn main() -> tcbd::Result<()> {
    let ctl = SeriesControl::default();
    let alpha = 0.5;

    println!("lambda  mu   nu    mean        variance    extinction  p_1(1)");
    for (lambda, mu, nu) in [(1.0, 2.0, 0.5), (1.0, 1.0, 0.5), (2.0, 1.0, 0.5), (2.0, 1.0, 0.0)] {
        let p = LinearParams::untempered(alpha, lambda, mu, nu)?;
        println!(
            "{lambda:4.1}  {mu:4.1}  {nu:4.1}  {:.8}  {:.8}  {:.8}  {:.8}",
            mean_lbdpc(&p, 1.0, &ctl)?,
            var_lbdpc(&p, 1.0, &ctl)?,
            extinction_lbdpc(&p, 1.0, &ctl)?,
            state_prob_lbdpc(&p, 1, 1.0, &ctl)?
        );
    }

    let p = LinearParams::new(alpha, 0.8, 1.0, 2.0, 0.5)?;
    println!("\ntempered (theta 0.8) at t = 1:");
    for q in [LinearQuantity::Mean, LinearQuantity::Variance, LinearQuantity::Extinction] {
        println!("  {q:?}: {:.8}", tempered_lbdpc(&p, q, 1.0, &ctl)?);
    }

    let spec = ModelSpec::linear(1.0, 2.0, 0.5)?;
    let tc = TimeChange::InverseStable { alpha: 0.6 };
    println!("\nPr(sojourn in 3 > 0.5) = {:.8}", sojourn_survival(&spec, tc, 3, 0.5, &ctl)?);
    println!("Pr(catastrophe gap > 2) = {:.8}", catastrophe_time_survival(tc, 0.5, 2.0, &ctl)?);

    let trunc = Truncation::default();
    let fv = tempered_first_visit_moments(&spec, 0.8, 0.6, 0.5, 1, &trunc)?;
    println!("first visit to 0 from 1 (theta 0.8): mean {:.8}, variance {:.8}", fv.mean, fv.variance);

    let general = ModelSpec::new(|n| 0.5 + n as f64, |n| 2.0 * n as f64, 0.4)?;
    let k = effective_catastrophe_moments(&general, 0.8, 0.6, 0.4, 1, &trunc)?;
    println!("effective catastrophe from 1 (theta 0.8): mean {:.8}, variance {:.8}", k.mean, k.variance);
    Ok(())
}
