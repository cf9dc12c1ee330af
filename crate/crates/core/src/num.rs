//! Compact, round-trip exact formatting of floats for CSV output.

use std::fmt;

/// Plain decimal for moderate magnitudes, scientific notation otherwise.
/// Both forms are the shortest representation that parses back exactly.
#[derive(Debug, Clone, Copy)]
pub struct Num(pub f64);

impl fmt::Display for Num {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let a = self.0.abs();
        if a == 0.0 || !a.is_finite() || (1e-4..1e16).contains(&a) {
            write!(f, "{}", self.0)
        } else {
            write!(f, "{:e}", self.0)
        }
    }
}
