//! Builds Laplace transforms of time-changed quantities and inverts them numerically.

use tcbd::analytic::{state_prob_lbdpc, LinearParams};
use tcbd::laplace::{
    base_first_visit, invert_checked, lt_first_visit_pdf, lt_tc_bdpc, lt_tempered_family, talbot_sum,
    BaseResolvent, TemperedQuantity, C64,
};
use tcbd::markov::{ModelSpec, Truncation};
use tcbd::mlfunc::{ml, SeriesControl};

fn main() -> tcbd::Result<()> {
    let ctl = SeriesControl::default();

    // E_α(−t^α) from its transform z^{α−1}/(z^α + 1).
    let alpha = 0.6;
    for t in [0.5, 2.0] {
        let f = talbot_sum(|z: C64| Ok(z.powf(alpha - 1.0) / (z.powf(alpha) + 1.0)), t, 64, 0.0)?;
        println!("t = {t}: Talbot {f:.12}, series {:.12}", ml(alpha, -t.powf(alpha), &ctl)?);
    }

    let (lambda, mu, nu) = (1.0, 2.0, 0.5);
    let spec = ModelSpec::linear(lambda, mu, nu)?;
    let base = BaseResolvent::new(&spec, Truncation::default());
    let p = LinearParams::untempered(alpha, lambda, mu, nu)?;
    println!("\n n   inverted p_1n(1)   closed form");
    for n in 1..5 {
        let inv = invert_checked(&lt_tc_bdpc(&base, alpha, nu, 1, n)?, 1.0)?;
        println!(
            "{n:2}   {:.10}       {:.10}   (Stehfest {:.6}, warning {})",
            inv.value,
            state_prob_lbdpc(&p, n, 1.0, &ctl)?,
            inv.cross_check,
            inv.warning
        );
    }

    let fv = lt_first_visit_pdf(&base_first_visit(&base, 2), alpha, nu)?;
    println!("\nfirst-visit density from 2 at t = 1: {:.8}", invert_checked(&fv, 1.0)?.value);

    let tempered = lt_tempered_family(&base, alpha, 0.8, nu, TemperedQuantity::State { m: 1, n: 0 })?;
    println!("tempered (theta 0.8) p_10(1):       {:.8}", invert_checked(&tempered, 1.0)?.value);
    Ok(())
}
