//! Benchmark fixtures.

use floodcast_core::synthetic::{reproduction_history, REPRODUCTION_SEED};
use floodcast_core::{DesignMatrix, Reading};

/// Design matrix and levels of the seeded history table.
pub fn history_fit_inputs() -> (DesignMatrix, Vec<f64>) {
    let history = reproduction_history(REPRODUCTION_SEED);
    let params: Vec<Vec<f64>> = history.iter().map(Reading::parameters).collect();
    let levels = history.iter().map(|r| r.level).collect();
    let x = DesignMatrix::from_parameters(&params).expect("history rows share one schema");
    (x, levels)
}

/// Seeded history readings for priming a predictor.
pub fn history() -> Vec<Reading> {
    reproduction_history(REPRODUCTION_SEED)
}
