use ndarray::{Array2, Zip};

use crate::error::{Result, SagcnError};
use crate::propagation::EmbeddingTable;

use super::TrainConfig;

/// First and second moment estimates for every embedding entry.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub first_moment: Array2<f64>,
    pub second_moment: Array2<f64>,
    pub step_count: u64,
}

impl OptimizerState {
    pub fn new(params: &EmbeddingTable) -> Self {
        let shape = params.joint().raw_dim();
        Self {
            first_moment: Array2::zeros(shape),
            second_moment: Array2::zeros(shape),
            step_count: 0,
        }
    }
}

/// One bias-corrected Adam update, in place.
pub fn adam_step(
    params: &mut EmbeddingTable,
    state: &mut OptimizerState,
    grads: &Array2<f64>,
    cfg: &TrainConfig,
) -> Result<()> {
    if grads.dim() != params.joint().dim() || state.first_moment.dim() != grads.dim() {
        return Err(SagcnError::Shape("gradient, moments and parameters must be congruent".into()));
    }
    state.step_count += 1;
    let t = state.step_count as i32;
    let (b1, b2) = (cfg.adam_beta1, cfg.adam_beta2);
    let bias1 = 1.0 - b1.powi(t);
    let bias2 = 1.0 - b2.powi(t);
    let lr = cfg.learning_rate;
    let eps = cfg.adam_eps;
    Zip::from(params.joint_mut())
        .and(&mut state.first_moment)
        .and(&mut state.second_moment)
        .and(grads)
        .for_each(|p, m, v, &g| {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            let m_hat = *m / bias1;
            let v_hat = *v / bias2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        });
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn scalar(x: f64) -> EmbeddingTable {
        EmbeddingTable::from_parts(array![[x]], Array2::zeros((0, 1))).unwrap()
    }

    #[test]
    fn first_step_moves_by_lr() {
        let cfg = TrainConfig::default();
        let mut p = EmbeddingTable::from_parts(array![[1.0, -1.0]], array![[0.5, 0.0]]).unwrap();
        let mut st = OptimizerState::new(&p);
        let g = array![[3.0, -0.2], [1e-2, 1e3]];
        adam_step(&mut p, &mut st, &g, &cfg).unwrap();
        let lr = cfg.learning_rate;
        let expect = [1.0 - lr, -1.0 + lr, 0.5 - lr, -lr];
        for (a, b) in p.joint().iter().zip(expect) {
            assert!((a - b).abs() < 1e-8, "{a} vs {b}");
        }
        assert_eq!(st.step_count, 1);
    }

    #[test]
    fn zero_gradient_keeps_params() {
        let cfg = TrainConfig::default();
        let mut p = scalar(2.0);
        let mut st = OptimizerState::new(&p);
        adam_step(&mut p, &mut st, &array![[4.0]], &cfg).unwrap();
        let after_one = p.joint()[[0, 0]];
        let m1 = st.first_moment[[0, 0]];
        let v1 = st.second_moment[[0, 0]];
        // zero gradient: moments decay, but the bias-corrected first moment
        // is still nonzero, so only check the moments here
        let mut st2 = st.clone();
        let mut p2 = p.clone();
        adam_step(&mut p2, &mut st2, &array![[0.0]], &cfg).unwrap();
        assert_eq!(st2.first_moment[[0, 0]], 0.9 * m1);
        assert_eq!(st2.second_moment[[0, 0]], 0.999 * v1);

        let mut fresh = scalar(after_one);
        let mut fresh_state = OptimizerState::new(&fresh);
        adam_step(&mut fresh, &mut fresh_state, &array![[0.0]], &cfg).unwrap();
        assert_eq!(fresh.joint()[[0, 0]], after_one);
    }

    #[test]
    fn scripted_scalar_recurrence() {
        let cfg = TrainConfig {
            learning_rate: 0.1,
            ..TrainConfig::default()
        };
        let mut p = scalar(1.0);
        let mut st = OptimizerState::new(&p);
        for g in [0.5, -1.0, 2.0] {
            adam_step(&mut p, &mut st, &array![[g]], &cfg).unwrap();
        }
        // hand-unrolled recurrence, lr 0.1, b1 0.9, b2 0.999, eps 1e-8
        let mut x = 1.0f64;
        let (mut m, mut v) = (0.0f64, 0.0f64);
        for (t, g) in [0.5f64, -1.0, 2.0].into_iter().enumerate() {
            m = 0.9 * m + 0.1 * g;
            v = 0.999 * v + 0.001 * g * g;
            let mh = m / (1.0 - 0.9f64.powi(t as i32 + 1));
            let vh = v / (1.0 - 0.999f64.powi(t as i32 + 1));
            x -= 0.1 * mh / (vh.sqrt() + 1e-8);
        }
        assert!((p.joint()[[0, 0]] - x).abs() < 1e-12);
        // same recurrence at 30 digits
        assert!((x - 0.894_644_792_718_104_8).abs() < 1e-12, "{x}");
        assert_eq!(st.step_count, 3);
    }

    #[test]
    fn shape_mismatch() {
        let cfg = TrainConfig::default();
        let mut p = scalar(1.0);
        let mut st = OptimizerState::new(&p);
        assert!(adam_step(&mut p, &mut st, &array![[1.0, 2.0]], &cfg).is_err());
    }
}
