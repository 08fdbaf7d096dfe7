use crate::error::{Error, Result};

/// Advantages of one n-step segment: walking backwards from the bootstrap
/// value, `R <- r_i + gamma * R` and `delta_i = R - v_i`.
pub fn advantage_targets(rewards: &[f64], bootstrap: f64, values: &[f64], gamma: f64) -> Result<Vec<f64>> {
    if rewards.len() != values.len() {
        return Err(Error::LengthMismatch {
            what: "rewards and values",
            left: rewards.len(),
            right: values.len(),
        });
    }
    let mut out = vec![0.0; rewards.len()];
    let mut ret = bootstrap;
    for i in (0..rewards.len()).rev() {
        ret = rewards[i] + gamma * ret;
        out[i] = ret - values[i];
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn closed_form(rewards: &[f64], bootstrap: f64, values: &[f64], gamma: f64) -> Vec<f64> {
        let n = rewards.len();
        (0..n)
            .map(|i| {
                let mut ret = gamma.powi((n - i) as i32) * bootstrap;
                for k in 0..n - i {
                    ret += gamma.powi(k as i32) * rewards[i + k];
                }
                ret - values[i]
            })
            .collect()
    }

    #[test]
    fn hand_recursion() {
        let d = advantage_targets(&[1.0, 0.0], 5.0, &[0.0, 0.0], 0.9).unwrap();
        assert!((d[1] - 4.5).abs() < 1e-12);
        assert!((d[0] - 5.05).abs() < 1e-12);
    }

    #[test]
    fn zero_rewards_give_negative_values() {
        let v = [0.3, -1.2, 2.0];
        assert_eq!(advantage_targets(&[0.0; 3], 0.0, &v, 0.99).unwrap(), vec![-0.3, 1.2, -2.0]);
    }

    #[test]
    fn one_step_is_td_error() {
        let d = advantage_targets(&[0.7], 2.0, &[1.5], 0.95).unwrap();
        assert!((d[0] - (0.7 + 0.95 * 2.0 - 1.5)).abs() < 1e-15);
    }

    #[test]
    fn length_mismatch() {
        assert!(matches!(
            advantage_targets(&[1.0, 2.0], 0.0, &[0.0], 0.9),
            Err(Error::LengthMismatch { .. })
        ));
    }

    proptest! {
        #[test]
        fn matches_closed_form(
            data in prop::collection::vec((0.0f64..2.0, -3.0f64..3.0), 1..16),
            bootstrap in -5.0f64..5.0,
            gamma in 0.0f64..=1.0,
        ) {
            let (r, v): (Vec<f64>, Vec<f64>) = data.into_iter().unzip();
            let got = advantage_targets(&r, bootstrap, &v, gamma).unwrap();
            for (a, b) in got.iter().zip(closed_form(&r, bootstrap, &v, gamma)) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
        }
    }
}
