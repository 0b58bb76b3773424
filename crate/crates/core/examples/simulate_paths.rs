//! Simulates sample paths and prints them in the CSV event format.

use tcbd::analytic::LinearParams;
use tcbd::markov::{ModelSpec, TimeChange};
use tcbd::randgen::RngStream;
use tcbd::simulate::{simulate_general, simulate_linear, write_csv};

fn main() -> tcbd::Result<()> {
    let p = LinearParams::untempered(0.7, 1.0, 2.0, 0.5)?;
    let paths = (0..3)
        .map(|i| simulate_linear(&p, 3, 2.0, &mut RngStream::new(11, i)))
        .collect::<tcbd::Result<Vec<_>>>()?;
    write_csv(&paths, std::io::stdout().lock())?;

    for (i, path) in paths.iter().enumerate() {
        println!(
            "path {i}: N(1) = {:?}, first visit to 0 = {:?}, sojourns in 3 = {:?}",
            path.state_at(1.0),
            path.first_visit_zero(),
            path.sojourns_in(3)
        );
    }

    let spec = ModelSpec::new(|n| 0.5 + n as f64, |n| 2.0 * n as f64, 0.4)?;
    let tc = TimeChange::InverseTempered { alpha: 0.6, theta: 0.8 };
    let mut rng = RngStream::new(11, 100);
    let modified = simulate_general(&spec, tc, 1, f64::INFINITY, &mut rng, true)?;
    println!(
        "\nmodified general path: {} events, absorbed at {:?}",
        modified.events.len(),
        modified.first_effective_catastrophe()
    );
    Ok(())
}
