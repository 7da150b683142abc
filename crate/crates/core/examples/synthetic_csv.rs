//! Writes the synthetic benchmark dataset as CSV.
//!
//! `cargo run -p mixforge-core --example synthetic_csv -- out.csv [rows] [seed]`

use std::path::PathBuf;

use mixforge_core::synthetic::{generate, SyntheticSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let path = PathBuf::from(
        args.next()
            .ok_or("usage: synthetic_csv OUT.csv [ROWS] [SEED]")?,
    );
    let mut spec = SyntheticSpec::default();
    if let Some(n) = args.next() {
        spec.n_rows = n.parse()?;
    }
    if let Some(s) = args.next() {
        spec.seed = s.parse()?;
    }
    let s = generate(&spec)?;
    s.data.save_csv(&path)?;
    eprintln!(
        "wrote {} rows ({} with corrupted labels) to {}",
        s.data.n_rows(),
        s.corrupted.len(),
        path.display()
    );
    Ok(())
}
