use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;

use crate::error::{Error, Result};
use crate::routing::{Action, PairMask};

/// Probability of every ordered position pair, softmax-normalized over the
/// whole flattened matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct PairDistribution {
    size: usize,
    probs: Vec<f64>,
    logits: Vec<f64>,
    mask: PairMask,
}

impl PairDistribution {
    /// Masked softmax of clipped logits. Masked cells get probability 0 and
    /// logit `-inf`.
    pub fn from_logits(mut logits: Vec<f64>, mask: PairMask) -> Result<Self> {
        let size = mask.size();
        if logits.len() != size * size {
            return Err(Error::LengthMismatch {
                what: "logits vs mask",
                left: logits.len(),
                right: size * size,
            });
        }
        if !mask.any() {
            return Err(Error::NoFeasibleAction);
        }
        for (l, &ok) in logits.iter_mut().zip(mask.cells()) {
            if !ok {
                *l = f64::NEG_INFINITY;
            }
        }
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut probs: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
        let z: f64 = probs.iter().sum();
        probs.iter_mut().for_each(|p| *p /= z);
        Ok(PairDistribution {
            size,
            probs,
            logits,
            mask,
        })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    /// Row-major `size x size` probabilities.
    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Row-major pre-softmax values; `-inf` where masked.
    pub fn logits(&self) -> &[f64] {
        &self.logits
    }

    pub fn mask(&self) -> &PairMask {
        &self.mask
    }

    pub fn prob(&self, i: usize, j: usize) -> f64 {
        self.probs[i * self.size + j]
    }

    /// Probability of the unordered pair `{i, j}`.
    pub fn pair_prob(&self, i: usize, j: usize) -> f64 {
        self.prob(i, j) + self.prob(j, i)
    }

    /// Log-probability of the ordered cell `(i, j)`.
    pub fn log_prob(&self, a: Action) -> Result<f64> {
        self.check(a)?;
        let max = self.logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max
            + self
                .logits
                .iter()
                .map(|&l| (l - max).exp())
                .sum::<f64>()
                .ln();
        Ok(self.logits[a.i * self.size + a.j] - lse)
    }

    pub(crate) fn check(&self, a: Action) -> Result<()> {
        if a.i >= self.size || a.j >= self.size {
            return Err(Error::ActionOutOfRange {
                i: a.i,
                j: a.j,
                len: self.size,
            });
        }
        if !self.mask.get(a.i, a.j) {
            return Err(Error::MaskedAction { i: a.i, j: a.j });
        }
        Ok(())
    }

    /// Draws one ordered cell from the full matrix.
    pub fn sample_cell<R: Rng + ?Sized>(&self, rng: &mut R) -> Action {
        let w = WeightedIndex::new(&self.probs).expect("normalized distribution");
        let k = w.sample(rng);
        Action {
            i: k / self.size,
            j: k % self.size,
        }
    }

    /// Draws a cell and returns it as a canonical pair, so `{i, j}` comes
    /// out with probability `P[i][j] + P[j][i]`.
    pub fn sample_action<R: Rng + ?Sized>(&self, rng: &mut R) -> Action {
        self.sample_cell(rng).canonical()
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    #[test]
    fn zero_logits_are_uniform() {
        let d = PairDistribution::from_logits(vec![0.0; 9], PairMask::off_diagonal(3)).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let expected = if i == j { 0.0 } else { 1.0 / 6.0 };
                assert!((d.prob(i, j) - expected).abs() < 1e-15);
            }
        }
        let lp = d.log_prob(Action { i: 0, j: 2 }).unwrap();
        assert!((lp + 6f64.ln()).abs() < 1e-12);
        assert!(d.log_prob(Action { i: 1, j: 1 }).is_err());
    }

    #[test]
    fn single_cell_is_certain() {
        let mut mask = PairMask::none(4);
        mask.set(3, 1, true);
        let d = PairDistribution::from_logits(vec![0.3; 16], mask).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..100 {
            assert_eq!(d.sample_cell(&mut rng), Action { i: 3, j: 1 });
            assert_eq!(d.sample_action(&mut rng), Action { i: 1, j: 3 });
        }
    }

    #[test]
    fn empty_mask_errors() {
        let r = PairDistribution::from_logits(vec![0.0; 4], PairMask::none(2));
        assert!(matches!(r, Err(Error::NoFeasibleAction)));
    }

    #[test]
    fn empirical_frequencies_within_three_sigma() {
        let n = 4;
        let logits: Vec<f64> = (0..n * n).map(|k| ((k * 7) % 5) as f64 - 2.0).collect();
        let mut mask = PairMask::off_diagonal(n);
        mask.forbid_pair(Action { i: 0, j: 1 });
        let d = PairDistribution::from_logits(logits, mask).unwrap();
        let draws = 100_000;
        let mut counts = vec![0usize; n * n];
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..draws {
            let a = d.sample_action(&mut rng);
            assert!(a.i < a.j);
            counts[a.i * n + a.j] += 1;
        }
        assert_eq!(counts[1], 0);
        for i in 0..n {
            for j in i + 1..n {
                let p = d.pair_prob(i, j);
                let mean = p * draws as f64;
                let sd = (draws as f64 * p * (1.0 - p)).sqrt();
                let got = counts[i * n + j] as f64;
                assert!((got - mean).abs() <= 3.0 * sd + 1e-9, "({i},{j}) {got} vs {mean}");
            }
        }
    }
}
