use serde::{Deserialize, Serialize};

use super::{Instance, Solution};
use crate::error::{Error, Result};

/// A pair of sequence positions.
///
/// 2-opt and node swap ignore the order of `i` and `j`. Relocation is
/// directional: the occupant of `i` is moved to just after position `j`.
/// Use [`Action::canonical`] to get the ascending form.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Action {
    pub i: usize,
    pub j: usize,
}

impl Action {
    pub fn new(i: usize, j: usize) -> Result<Self> {
        if i == j {
            return Err(Error::DegenerateAction(i));
        }
        Ok(Action { i, j })
    }

    /// Ascending `(min, max)` form.
    pub fn canonical(self) -> Self {
        Action {
            i: self.i.min(self.j),
            j: self.i.max(self.j),
        }
    }

    pub fn is_canonical(self) -> bool {
        self.i < self.j
    }

    /// Same unordered pair, ignoring direction.
    pub fn same_pair(self, other: Action) -> bool {
        self.canonical() == other.canonical()
    }

    fn validate(self, len: usize) -> Result<()> {
        if self.i == self.j {
            return Err(Error::DegenerateAction(self.i));
        }
        if self.i >= len || self.j >= len {
            return Err(Error::ActionOutOfRange {
                i: self.i,
                j: self.j,
                len,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Operator {
    #[default]
    TwoOpt,
    Swap,
    Relocate,
}

impl Operator {
    pub fn apply(self, sol: &Solution, a: Action) -> Result<Solution> {
        match self {
            Operator::TwoOpt => apply_two_opt(sol, a),
            Operator::Swap => apply_node_swap(sol, a),
            Operator::Relocate => apply_relocation(sol, a),
        }
    }

    /// In-place variant used by the search loops.
    pub(crate) fn apply_in_place(self, seq: &mut [usize], a: Action) {
        let Action { i, j } = a;
        match self {
            Operator::TwoOpt => {
                let (lo, hi) = (i.min(j), i.max(j));
                seq[lo..=hi].reverse();
            }
            Operator::Swap => seq.swap(i, j),
            Operator::Relocate => {
                if i < j {
                    seq[i..=j].rotate_left(1);
                } else {
                    seq[j + 1..=i].rotate_right(1);
                }
            }
        }
    }

    /// Whether `(i, j)` and `(j, i)` describe the same move.
    pub fn is_symmetric(self) -> bool {
        !matches!(self, Operator::Relocate)
    }
}

impl std::fmt::Display for Operator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Operator::TwoOpt => "2-opt",
            Operator::Swap => "swap",
            Operator::Relocate => "relocate",
        })
    }
}

impl std::str::FromStr for Operator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "2-opt" | "two-opt" | "2opt" => Ok(Operator::TwoOpt),
            "swap" | "node-swap" => Ok(Operator::Swap),
            "relocate" | "relocation" => Ok(Operator::Relocate),
            other => Err(Error::Config(format!("unknown operator `{other}`"))),
        }
    }
}

/// Reverses the slots between the two positions (inclusive).
pub fn apply_two_opt(sol: &Solution, a: Action) -> Result<Solution> {
    a.validate(sol.len())?;
    let mut seq = sol.seq().to_vec();
    Operator::TwoOpt.apply_in_place(&mut seq, a);
    Ok(Solution::new(seq))
}

/// Exchanges the occupants of the two positions.
pub fn apply_node_swap(sol: &Solution, a: Action) -> Result<Solution> {
    a.validate(sol.len())?;
    let mut seq = sol.seq().to_vec();
    seq.swap(a.i, a.j);
    Ok(Solution::new(seq))
}

/// Moves the occupant of position `a.i` to immediately after the original
/// position `a.j`.
pub fn apply_relocation(sol: &Solution, a: Action) -> Result<Solution> {
    a.validate(sol.len())?;
    let mut seq = sol.seq().to_vec();
    Operator::Relocate.apply_in_place(&mut seq, a);
    Ok(Solution::new(seq))
}

/// Cost change of reversing positions `i..=j` of the closed tour `seq`.
pub fn two_opt_delta(inst: &Instance, seq: &[usize], i: usize, j: usize) -> f64 {
    let len = seq.len();
    let (i, j) = (i.min(j), i.max(j));
    if i == j || (i == 0 && j == len - 1) {
        return 0.0;
    }
    let a = seq[(i + len - 1) % len];
    let b = seq[i];
    let c = seq[j];
    let d = seq[(j + 1) % len];
    inst.dist(a, c) + inst.dist(b, d) - inst.dist(a, b) - inst.dist(c, d)
}
