//! Shared inputs for the criterion benches.

use mixforge_core::synthetic::{generate, SyntheticSpec};
use mixforge_core::Dataset;

/// Synthetic UHPC rows with the default generator settings.
pub fn dataset(n_rows: usize) -> Dataset {
    generate(&SyntheticSpec {
        n_rows,
        ..SyntheticSpec::default()
    })
    .expect("synthetic spec is valid")
    .data
}
