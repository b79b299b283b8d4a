use super::Tensor;
use crate::error::{Error, Result};

/// Bias-corrected Adam moments for an ordered list of parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub step_count: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    first_moment: Vec<Vec<f64>>,
    second_moment: Vec<Vec<f64>>,
}

impl AdamState {
    /// Zeroed moments shaped like `params`, with the usual defaults (0.9, 0.999, 1e-8).
    pub fn new(params: &[Tensor]) -> Self {
        Self::with_hyper(params, 0.9, 0.999, 1e-8)
    }

    pub fn with_hyper(params: &[Tensor], beta1: f64, beta2: f64, epsilon: f64) -> Self {
        let zeros: Vec<Vec<f64>> = params.iter().map(|p| vec![0.0; p.numel()]).collect();
        AdamState {
            step_count: 0,
            beta1,
            beta2,
            epsilon,
            first_moment: zeros.clone(),
            second_moment: zeros,
        }
    }

    pub fn first_moment(&self) -> &[Vec<f64>] {
        &self.first_moment
    }

    pub fn second_moment(&self) -> &[Vec<f64>] {
        &self.second_moment
    }
}

/// One Adam update of `params` in place.
pub fn adam_step(
    params: &mut [Tensor],
    grads: &[Tensor],
    state: &mut AdamState,
    learning_rate: f64,
) -> Result<()> {
    if !(learning_rate >= 0.0 && learning_rate.is_finite()) {
        return Err(Error::invalid("adam_step", format!("learning rate {learning_rate}")));
    }
    if params.len() != grads.len() || params.len() != state.first_moment.len() {
        return Err(Error::shape(
            "adam_step",
            format!(
                "{} params, {} grads, {} moment slots",
                params.len(),
                grads.len(),
                state.first_moment.len()
            ),
        ));
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.shape() != g.shape() || state.first_moment[i].len() != p.numel() {
            return Err(Error::shape(
                "adam_step",
                format!("param {i}: {:?} vs grad {:?}", p.shape(), g.shape()),
            ));
        }
    }
    state.step_count += 1;
    let t = state.step_count as i32;
    let (b1, b2, eps) = (state.beta1, state.beta2, state.epsilon);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        let m = &mut state.first_moment[i];
        let v = &mut state.second_moment[i];
        for (((x, &g), m), v) in p.data_mut().iter_mut().zip(g.data()).zip(m.iter_mut()).zip(v.iter_mut()) {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *x -= learning_rate * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params() {
        let mut params = vec![Tensor::from_fn([3], |i| i as f64)];
        let before = params.clone();
        let mut state = AdamState::new(&params);
        adam_step(&mut params, &[Tensor::zeros([3])], &mut state, 0.1).unwrap();
        assert_eq!(params, before);
        assert_eq!(state.step_count, 1);
    }

    #[test]
    fn first_step_closed_form() {
        let mut params = vec![Tensor::scalar(0.0)];
        let mut state = AdamState::new(&params);
        adam_step(&mut params, &[Tensor::scalar(1.0)], &mut state, 0.1).unwrap();
        let expected = -0.1 / (1.0 + 1e-8);
        assert!((params[0].data()[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn converges_on_quadratic() {
        let mut params = vec![Tensor::scalar(1.0)];
        let mut state = AdamState::new(&params);
        for _ in 0..100 {
            let x = params[0].data()[0];
            adam_step(&mut params, &[Tensor::scalar(2.0 * x)], &mut state, 0.05).unwrap();
        }
        assert!(params[0].data()[0].abs() < 0.1, "{:?}", params[0]);
    }

    #[test]
    fn moments_start_at_zero_and_shapes_are_checked() {
        let params = vec![Tensor::zeros([2, 2])];
        let mut state = AdamState::new(&params);
        assert!(state.first_moment()[0].iter().all(|&m| m == 0.0));
        assert!(state.second_moment()[0].iter().all(|&m| m == 0.0));
        let mut p = params.clone();
        assert!(matches!(
            adam_step(&mut p, &[Tensor::zeros([4])], &mut state, 0.1),
            Err(Error::Shape { .. })
        ));
    }
}
