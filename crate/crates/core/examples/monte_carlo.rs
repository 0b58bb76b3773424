//! Monte Carlo estimates with standard errors, compared with closed forms and
//! goodness-of-fit tests.

use tcbd::analytic::{mean_lbdpc, sojourn_survival, LinearParams};
use tcbd::markov::{ModelSpec, TimeChange};
use tcbd::mcstats::{estimate, ks_one_sample, map_paths, uncensored, Model, Quantity, TestRecord};
use tcbd::mlfunc::SeriesControl;

const PATHS: usize = 20_000;

fn main() -> tcbd::Result<()> {
    let ctl = SeriesControl::default();
    let p = LinearParams::untempered(0.6, 1.0, 2.0, 0.5)?;
    let model = Model::Linear(p);

    let est = estimate(Quantity::MeanAt(1.0), &model, 1, PATHS, 5)?;
    let mean = est.scalar().expect("scalar estimate");
    let exact = mean_lbdpc(&p, 1.0, &ctl)?;
    println!("{}", TestRecord::from_z("mean at t = 1", mean, exact, 3.0, 5).to_json());
    println!("  estimate {:.5} +- {:.5}, closed form {exact:.5}", mean.value, mean.stderr);

    let dist = estimate(Quantity::StateDistAt { t: 1.0, n_max: 4 }, &model, 1, PATHS, 6)?;
    for (n, e) in dist.distribution().expect("distribution").iter().enumerate() {
        println!("  Pr(N(1) = {n}{}) = {:.4} +- {:.4}", if n == 4 { "+" } else { "" }, e.value, e.stderr);
    }

    // First sojourn of paths started in 2; the modified chain has the same sojourn law there
    // and always ends.
    let spec = ModelSpec::linear(1.0, 2.0, 0.5)?;
    let tc = TimeChange::InverseStable { alpha: 0.6 };
    let general = Model::General { spec: spec.clone(), tc, modified: true };
    let first = map_paths(&general, 2, f64::INFINITY, 5_000, 7, |path| {
        path.events.first().map(|e| e.time)
    })?;
    let ks = ks_one_sample(&uncensored(&first), |t| {
        1.0 - sojourn_survival(&spec, tc, 2, t, &ctl).unwrap_or(f64::NAN)
    })?;
    println!("{}", TestRecord::from_outcome("first sojourn in 2 (KS)", ks, 7, first.len()).to_json());
    Ok(())
}
