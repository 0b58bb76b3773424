//! Runs one or more validation suites by name and prints their records as JSON lines.
//!
//! `cargo run --release --example validation -- table1 reductions`

use tcbd::validation::Suite;

fn main() -> tcbd::Result<()> {
    let names: Vec<String> = std::env::args().skip(1).collect();
    let suites: Vec<Suite> = if names.is_empty() {
        vec![Suite::Table1, Suite::Figures]
    } else {
        names.iter().map(|n| n.parse()).collect::<tcbd::Result<_>>()?
    };
    for suite in suites {
        let records = suite.run()?;
        let failed = records.iter().filter(|r| !r.pass).count();
        for r in &records {
            println!("{}", r.to_json());
        }
        println!("# {suite}: {} checks, {failed} failed", records.len());
    }
    Ok(())
}
