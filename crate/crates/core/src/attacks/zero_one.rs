use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

/// Joint frequencies of `(f0 correct, f1 correct)` on update points (`u`)
/// and on test points (`t`). Cells are ordered `[11, 10, 01, 00]`, the first
/// digit being `f0` and the second `f1`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZeroOneTable {
    pub u: [f64; 4],
    pub t: [f64; 4],
}

pub const P11: usize = 0;
pub const P10: usize = 1;
pub const P01: usize = 2;
pub const P00: usize = 3;

impl ZeroOneTable {
    pub fn validate(&self) -> Result<()> {
        for (name, fam) in [("update", &self.u), ("test", &self.t)] {
            if fam.iter().any(|p| !(*p >= 0.0) || !p.is_finite()) {
                return Err(Error::InvalidInput(format!("{name} probabilities must be finite and >= 0")));
            }
            let s: f64 = fam.iter().sum();
            if (s - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidInput(format!("{name} probabilities sum to {s}, not 1")));
            }
        }
        Ok(())
    }

    /// `f0` is equally accurate on update and test points.
    pub fn satisfies_assumption1(&self, tol: f64) -> bool {
        ((self.u[P11] + self.u[P10]) - (self.t[P11] + self.t[P10])).abs() <= tol
    }

    /// `f1` does better on update points in both `f0` rows.
    pub fn satisfies_assumption2(&self) -> bool {
        self.u[P11] > self.t[P11] && self.u[P01] > self.t[P01]
    }

    /// Rejection-sample a table satisfying both assumptions. A shared `f0`
    /// accuracy is drawn first and split into the two `f1` outcomes for each
    /// family, so Assumption 1 holds by construction; Assumption 2 is enforced
    /// by rejection.
    pub fn sample_under_assumptions(rng: &mut seed::Rng) -> Self {
        loop {
            let a: f64 = rng.random();
            let split = |rng: &mut seed::Rng| -> [f64; 4] {
                let r1: f64 = rng.random();
                let r2: f64 = rng.random();
                [a * r1, a * (1.0 - r1), (1.0 - a) * r2, (1.0 - a) * (1.0 - r2)]
            };
            let u = split(rng);
            let t = split(rng);
            let table = ZeroOneTable { u, t };
            if table.satisfies_assumption2() {
                return table;
            }
        }
    }
}

/// Decision per cell (`true` = IN) of the best attack found by enumeration.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ZeroOneStrategy {
    pub cells: [bool; 4],
}

/// Enumerate every decision map and keep the most accurate.
///
/// Without updates the attacker only sees `f1`, so cells are tied in the
/// groups `{11, 01}` (f1 correct) and `{10, 00}` (f1 wrong). Accuracy is
/// `1/2 * sum over cells of (p^u if IN else p^t)`, always summed in cell
/// order so equal strategies give bit-identical accuracies.
pub fn optimal_01_attack(table: &ZeroOneTable, with_updates: bool) -> Result<(ZeroOneStrategy, f64)> {
    table.validate()?;
    let maps: Vec<[bool; 4]> = if with_updates {
        (0u8..16)
            .map(|m| [m & 1 != 0, m & 2 != 0, m & 4 != 0, m & 8 != 0])
            .collect()
    } else {
        (0u8..4)
            .map(|m| {
                let correct = m & 1 != 0;
                let wrong = m & 2 != 0;
                [correct, wrong, correct, wrong]
            })
            .collect()
    };
    let mut best: Option<(ZeroOneStrategy, f64)> = None;
    for cells in maps {
        let mut acc = 0.0;
        for c in 0..4 {
            acc += if cells[c] { table.u[c] } else { table.t[c] };
        }
        acc *= 0.5;
        if best.is_none_or(|(_, b)| acc > b) {
            best = Some((ZeroOneStrategy { cells }, acc));
        }
    }
    Ok(best.expect("at least one decision map"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn indistinguishable_table() {
        let p = [0.4, 0.2, 0.1, 0.3];
        let t = ZeroOneTable { u: p, t: p };
        assert!((optimal_01_attack(&t, true).unwrap().1 - 0.5).abs() < 1e-15);
        assert!((optimal_01_attack(&t, false).unwrap().1 - 0.5).abs() < 1e-15);
    }

    #[test]
    fn invalid_table_rejected() {
        let t = ZeroOneTable { u: [0.5, 0.5, 0.5, 0.0], t: [0.25; 4] };
        assert!(optimal_01_attack(&t, true).is_err());
    }
}
