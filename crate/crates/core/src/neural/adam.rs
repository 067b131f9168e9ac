use super::{NeuralError, ParamStore, Tensor};

pub const DEFAULT_BETA1: f64 = 0.9;
pub const DEFAULT_BETA2: f64 = 0.999;
pub const DEFAULT_EPSILON: f64 = 1e-8;

/// Exponential per-epoch learning-rate annealing.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LearningRateSchedule {
    pub initial_rate: f64,
    pub anneal_factor: f64,
}

impl Default for LearningRateSchedule {
    fn default() -> Self {
        Self {
            initial_rate: 5e-4,
            anneal_factor: 0.836,
        }
    }
}

impl LearningRateSchedule {
    pub fn new(initial_rate: f64, anneal_factor: f64) -> Result<Self, NeuralError> {
        if !(initial_rate > 0.0 && initial_rate.is_finite()) {
            return Err(NeuralError::InvalidArgument(format!(
                "initial rate must be positive, got {initial_rate}"
            )));
        }
        if !(anneal_factor > 0.0 && anneal_factor <= 1.0) {
            return Err(NeuralError::InvalidArgument(format!(
                "anneal factor must be in (0, 1], got {anneal_factor}"
            )));
        }
        Ok(Self {
            initial_rate,
            anneal_factor,
        })
    }

    /// Rate used during epoch `epoch` (zero-based).
    pub fn rate(&self, epoch: u32) -> f64 {
        self.initial_rate * self.anneal_factor.powi(epoch as i32)
    }
}

/// Adam moments for every tensor of a [`ParamStore`], in store order.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub step_count: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub first_moment: Vec<Vec<f32>>,
    pub second_moment: Vec<Vec<f32>>,
}

impl AdamState {
    pub fn new(params: &ParamStore<f32>) -> Self {
        Self::with_hyper(params, DEFAULT_BETA1, DEFAULT_BETA2, DEFAULT_EPSILON)
    }

    pub fn with_hyper(params: &ParamStore<f32>, beta1: f64, beta2: f64, epsilon: f64) -> Self {
        let zeros: Vec<Vec<f32>> = params.iter().map(|(_, t)| vec![0.0; t.len()]).collect();
        Self {
            step_count: 0,
            beta1,
            beta2,
            epsilon,
            first_moment: zeros.clone(),
            second_moment: zeros,
        }
    }
}

/// One bias-corrected Adam update. Every gradient is checked for finiteness
/// before any parameter is touched; a non-finite gradient rejects the whole step.
pub fn adam_step(
    params: &mut ParamStore<f32>,
    grads: &[Tensor<f32>],
    state: &mut AdamState,
    rate: f64,
) -> Result<(), NeuralError> {
    if !(rate > 0.0) {
        return Err(NeuralError::InvalidArgument(format!(
            "learning rate must be positive, got {rate}"
        )));
    }
    if grads.len() != params.len() || state.first_moment.len() != params.len() {
        return Err(NeuralError::Shape(format!(
            "adam: {} params, {} gradients, {} moment slots",
            params.len(),
            grads.len(),
            state.first_moment.len()
        )));
    }
    for ((name, p), g) in params.iter().zip(grads) {
        if p.shape() != g.shape() {
            return Err(NeuralError::Shape(format!(
                "adam: gradient for {name} has shape {:?}, param {:?}",
                g.shape(),
                p.shape()
            )));
        }
        if !g.is_finite() {
            return Err(NeuralError::NonFinite(format!("gradient of {name}")));
        }
    }
    state.step_count += 1;
    let t = state.step_count as i32;
    let (b1, b2, eps) = (state.beta1, state.beta2, state.epsilon);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    for (i, g) in grads.iter().enumerate() {
        let p = params.tensor_mut(i);
        let m = &mut state.first_moment[i];
        let v = &mut state.second_moment[i];
        for (((pv, &gv), mv), vv) in p
            .data_mut()
            .iter_mut()
            .zip(g.data())
            .zip(m.iter_mut())
            .zip(v.iter_mut())
        {
            let gv = gv as f64;
            let m_new = b1 * (*mv as f64) + (1.0 - b1) * gv;
            let v_new = b2 * (*vv as f64) + (1.0 - b2) * gv * gv;
            *mv = m_new as f32;
            *vv = v_new as f32;
            let m_hat = m_new / c1;
            let v_hat = v_new / c2;
            *pv = (*pv as f64 - rate * m_hat / (v_hat.sqrt() + eps)) as f32;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store(values: &[f32]) -> ParamStore<f32> {
        let mut s = ParamStore::new();
        s.insert(
            "w",
            Tensor::new(vec![values.len()], values.to_vec()).unwrap(),
        )
        .unwrap();
        s
    }

    #[test]
    fn schedule_matches_closed_form() {
        let s = LearningRateSchedule::default();
        assert_eq!(s.rate(0), 5e-4);
        assert!((s.rate(1) - 4.18e-4).abs() < 1e-15);
        for e in 0..50 {
            assert_eq!(s.rate(e), 5e-4 * 0.836f64.powi(e as i32));
            assert!(s.rate(e + 1) < s.rate(e));
        }
    }

    #[test]
    fn first_step_moves_against_gradient_sign() {
        let mut p = store(&[0.0, 0.0, 0.0, 0.0]);
        let g = vec![Tensor::new(vec![4], vec![3.0, -0.02, 1e-3, -50.0]).unwrap()];
        let mut st = AdamState::with_hyper(&p, 0.9, 0.999, 1e-12);
        adam_step(&mut p, &g, &mut st, 1e-3).unwrap();
        for (&pv, &gv) in p.tensor(0).data().iter().zip(g[0].data()) {
            assert!((pv + 1e-3 * gv.signum()).abs() < 1e-7, "{pv} for grad {gv}");
        }
        assert_eq!(st.step_count, 1);
    }

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut p = store(&[0.5, -1.5]);
        let g = vec![Tensor::zeros(&[2])];
        let mut st = AdamState::new(&p);
        adam_step(&mut p, &g, &mut st, 5e-4).unwrap();
        assert_eq!(p.tensor(0).data(), &[0.5, -1.5]);
    }

    #[test]
    fn non_finite_gradient_rejects_step() {
        let mut p = store(&[0.5, -1.5]);
        let g = vec![Tensor::new(vec![2], vec![1.0, f32::NAN]).unwrap()];
        let mut st = AdamState::new(&p);
        assert!(matches!(
            adam_step(&mut p, &g, &mut st, 5e-4),
            Err(NeuralError::NonFinite(_))
        ));
        assert_eq!(p.tensor(0).data(), &[0.5, -1.5]);
        assert_eq!(st.step_count, 0);
    }

    #[test]
    fn scaling_gradients_keeps_first_step_direction() {
        let g0 = [0.7f32, -0.2, 0.05, -3.0];
        for scale in [1e-3f32, 1.0, 250.0] {
            let mut p = store(&[0.0; 4]);
            let g = vec![Tensor::new(vec![4], g0.iter().map(|v| v * scale).collect()).unwrap()];
            let mut st = AdamState::new(&p);
            adam_step(&mut p, &g, &mut st, 1e-2).unwrap();
            for (&pv, &gv) in p.tensor(0).data().iter().zip(&g0) {
                assert_eq!(pv.signum(), -gv.signum());
            }
        }
    }
}
