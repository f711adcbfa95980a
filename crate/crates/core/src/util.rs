//! Small numeric helpers shared across the solver modules.

/// Sums a slice with a fixed pairwise reduction order, so results do not
/// depend on thread scheduling and carry less rounding error than a left
/// fold.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    match values.len() {
        0 => 0.0,
        1 => values[0],
        2 => values[0] + values[1],
        n => {
            let mid = n / 2;
            pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
        }
    }
}

/// Rounds a scaled capacity per the configured mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RoundingMode {
    HalfUp,
    Floor,
}

impl Default for RoundingMode {
    fn default() -> Self {
        RoundingMode::HalfUp
    }
}

pub fn scale_capacity(value: u32, fraction: f64, mode: RoundingMode) -> u32 {
    let scaled = value as f64 * fraction;
    match mode {
        RoundingMode::HalfUp => (scaled + 0.5).floor() as u32,
        RoundingMode::Floor => scaled.floor() as u32,
    }
}
