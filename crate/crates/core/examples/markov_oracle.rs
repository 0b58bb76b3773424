//! Transient probabilities of a truncated chain, with and without a time change.

use tcbd::markov::{subordinated_probs, time_changed_probs, transient_probs, ModelSpec, TimeChange, Truncation};

fn main() -> tcbd::Result<()> {
    let spec = ModelSpec::linear(1.0, 2.0, 0.5)?;
    let trunc = Truncation::default();
    let t = 1.0;

    let plain = transient_probs(&spec, 1, t, &trunc)?;
    let tc = TimeChange::InverseStable { alpha: 0.6 };
    let inverted = time_changed_probs(&spec, 1, t, tc, &trunc)?;
    let mc = subordinated_probs(&spec, 1, t, tc, &trunc, 100_000, 7)?;

    println!(" n   alpha=1      alpha=0.6 (Talbot)  alpha=0.6 (subordination)");
    for n in 0..6 {
        println!(
            "{n:2}   {:.8}   {:.8}          {:.6} +- {:.6}",
            plain[n], inverted[n], mc.mean[n], mc.stderr[n]
        );
    }
    println!("boundary mass {:.2e}", mc.boundary_mass);

    let immigration = ModelSpec::linear_with_immigration(0.5, 1.0, 2.0, 0.5)?;
    let p = time_changed_probs(&immigration, 0, 3.0, tc, &trunc)?;
    let mean: f64 = p.iter().enumerate().map(|(n, q)| n as f64 * q).sum();
    println!("with immigration 0.5, started empty: E[N(3)] = {mean:.8}");
    Ok(())
}
