use ndarray::{s, Array2};

use crate::error::{Error, Result};
use crate::routing::{Instance, Point, ProblemKind, Solution};

/// Per-position input features using the instance's own coordinates.
///
/// TSP rows hold the visited node's coordinates. CVRP rows hold the
/// coordinates of the cyclic left neighbour, the node itself and the cyclic
/// right neighbour, followed by demand / capacity.
pub fn node_features(inst: &Instance, sol: &Solution) -> Array2<f64> {
    node_features_with(inst, sol, inst.coords())
}

/// Like [`node_features`] but reads coordinates from `coords`, typically a
/// rescaled copy of the instance coordinates.
pub fn node_features_with(inst: &Instance, sol: &Solution, coords: &[Point]) -> Array2<f64> {
    let seq = sol.seq();
    let len = seq.len();
    let f = inst.kind().feature_dim();
    let mut x = Array2::zeros((len, f));
    for (pos, &loc) in seq.iter().enumerate() {
        let mut row = x.row_mut(pos);
        match inst.kind() {
            ProblemKind::Tsp => {
                row[0] = coords[loc][0];
                row[1] = coords[loc][1];
            }
            ProblemKind::Cvrp => {
                let left = seq[(pos + len - 1) % len];
                let right = seq[(pos + 1) % len];
                for (k, &node) in [left, loc, right].iter().enumerate() {
                    row[2 * k] = coords[node][0];
                    row[2 * k + 1] = coords[node][1];
                }
                row[6] = inst.demand(loc) as f64 / inst.capacity() as f64;
            }
        }
    }
    x
}

/// Sinusoidal encoding of sequence position `i` in dimension `d`.
pub fn positional_encoding(i: usize, d: usize, d_model: usize) -> f64 {
    let arg = i as f64 / 10000f64.powf((d / 2) as f64 / d_model as f64);
    if d % 2 == 0 {
        arg.sin()
    } else {
        arg.cos()
    }
}

pub(crate) fn pe_table(len: usize, d_model: usize) -> Array2<f64> {
    Array2::from_shape_fn((len, d_model), |(i, d)| positional_encoding(i, d, d_model))
}

/// Feature matrices of several equally long sequences, stacked row-wise.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub(crate) x: Array2<f64>,
    pub(crate) size: usize,
    pub(crate) len: usize,
}

impl Batch {
    pub fn new(items: &[Array2<f64>]) -> Result<Self> {
        let first = items.first().ok_or_else(|| Error::Config("empty batch".into()))?;
        let (len, f) = first.dim();
        if len < 2 {
            return Err(Error::InvalidInstance("sequences need at least two positions".into()));
        }
        let mut x = Array2::zeros((items.len() * len, f));
        for (b, item) in items.iter().enumerate() {
            if item.dim() != (len, f) {
                return Err(Error::LengthMismatch {
                    what: "batch item shape",
                    left: item.nrows() * item.ncols(),
                    right: len * f,
                });
            }
            x.slice_mut(s![b * len..(b + 1) * len, ..]).assign(item);
        }
        Ok(Batch {
            x,
            size: items.len(),
            len,
        })
    }

    pub fn single(x: Array2<f64>) -> Result<Self> {
        Batch::new(std::slice::from_ref(&x))
    }

    /// Number of sequences.
    pub fn size(&self) -> usize {
        self.size
    }

    /// Positions per sequence.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.size == 0
    }

    pub fn feature_dim(&self) -> usize {
        self.x.ncols()
    }
}
