//! Adam with bias correction, operating on the per-core gradient tensors.

use thiserror::Error;

use crate::mpo::MpoModel;
use crate::tensor::DenseTensor;

#[derive(Debug, Error)]
pub enum OptimError {
    #[error("gradient for core {site} has shape {got:?}, expected {expected:?}")]
    GradientShape {
        site: usize,
        got: Vec<usize>,
        expected: Vec<usize>,
    },
    #[error("{got} gradient tensors for {expected} cores")]
    GradientCount { got: usize, expected: usize },
}

/// Moment-decay and stabilization constants. Defaults are the standard
/// published values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamParams {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First and second moment accumulators, one pair per core.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    first_moment: Vec<DenseTensor>,
    second_moment: Vec<DenseTensor>,
    steps: u64,
}

impl OptimizerState {
    /// Fresh zeroed state shaped like the model's cores.
    pub fn new(model: &MpoModel) -> Self {
        let zeros: Vec<DenseTensor> = model
            .cores()
            .iter()
            .map(|c| DenseTensor::zeros(c.shape()))
            .collect();
        Self {
            first_moment: zeros.clone(),
            second_moment: zeros,
            steps: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }
}

/// One Adam update in place. Deterministic: entries are visited in core
/// order, row-major within each core.
pub fn adam_step(
    model: &mut MpoModel,
    grads: &[DenseTensor],
    state: &mut OptimizerState,
    lr: f64,
    params: &AdamParams,
) -> Result<(), OptimError> {
    if grads.len() != model.cores().len() {
        return Err(OptimError::GradientCount {
            got: grads.len(),
            expected: model.cores().len(),
        });
    }
    for (site, (core, grad)) in model.cores().iter().zip(grads).enumerate() {
        if core.shape() != grad.shape() {
            return Err(OptimError::GradientShape {
                site,
                got: grad.shape().to_vec(),
                expected: core.shape().to_vec(),
            });
        }
    }

    state.steps += 1;
    let t = state.steps;
    let bias1 = 1.0 - params.beta1.powi(t as i32);
    let bias2 = 1.0 - params.beta2.powi(t as i32);

    for (site, grad) in grads.iter().enumerate() {
        let m = state.first_moment[site].data_mut();
        let v = state.second_moment[site].data_mut();
        let theta = model.cores_mut()[site].data_mut();
        for ((m_i, v_i), (theta_i, &g)) in m
            .iter_mut()
            .zip(v.iter_mut())
            .zip(theta.iter_mut().zip(grad.data()))
        {
            *m_i = params.beta1 * *m_i + (1.0 - params.beta1) * g;
            *v_i = params.beta2 * *v_i + (1.0 - params.beta2) * g * g;
            let m_hat = *m_i / bias1;
            let v_hat = *v_i / bias2;
            *theta_i -= lr * m_hat / (v_hat.sqrt() + params.epsilon);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mpo::MpoShape;

    fn small_model() -> MpoModel {
        MpoModel::random(MpoShape::new(3, 2, 2, 1).unwrap(), 0.5, 11)
    }

    fn zero_grads(model: &MpoModel) -> Vec<DenseTensor> {
        model
            .cores()
            .iter()
            .map(|c| DenseTensor::zeros(c.shape()))
            .collect()
    }

    #[test]
    fn zero_gradient_leaves_model_unchanged() {
        let mut model = small_model();
        let reference = model.clone();
        let mut state = OptimizerState::new(&model);
        let grads = zero_grads(&model);
        adam_step(&mut model, &grads, &mut state, 1e-3, &AdamParams::default()).unwrap();
        assert_eq!(model, reference);
        assert_eq!(state.steps(), 1);
    }

    #[test]
    fn first_step_moves_each_coordinate_by_about_lr() {
        let mut model = small_model();
        let reference = model.clone();
        let mut state = OptimizerState::new(&model);
        let grads: Vec<DenseTensor> = model
            .cores()
            .iter()
            .map(|c| DenseTensor::from_fn(c.shape(), |idx| 0.3 + idx[0] as f64))
            .collect();
        let lr = 1e-2;
        adam_step(&mut model, &grads, &mut state, lr, &AdamParams::default()).unwrap();
        for (site, (new, old)) in model.cores().iter().zip(reference.cores()).enumerate() {
            for (i, (a, b)) in new.data().iter().zip(old.data()).enumerate() {
                let moved = (a - b).abs();
                assert!(
                    (moved - lr).abs() < 1e-6,
                    "core {site} entry {i} moved {moved}, expected about {lr}"
                );
            }
        }
    }

    #[test]
    fn constant_gradient_converges_to_sign_scaled_update() {
        let mut model = small_model();
        let mut state = OptimizerState::new(&model);
        let grads: Vec<DenseTensor> = model
            .cores()
            .iter()
            .map(|c| DenseTensor::from_fn(c.shape(), |idx| if idx[0] == 0 { 2.5 } else { -0.7 }))
            .collect();
        let lr = 1e-3;
        for _ in 0..300 {
            adam_step(&mut model, &grads, &mut state, lr, &AdamParams::default()).unwrap();
        }
        let prev = model.clone();
        adam_step(&mut model, &grads, &mut state, lr, &AdamParams::default()).unwrap();
        for ((new, old), grad) in model.cores().iter().zip(prev.cores()).zip(&grads) {
            for ((a, b), &g) in new.data().iter().zip(old.data()).zip(grad.data()) {
                let step = a - b;
                let expect = -lr * g.signum();
                assert!((step - expect).abs() < 1e-3 * lr, "step {step} vs {expect}");
            }
        }
    }

    #[test]
    fn mismatched_gradient_shapes_are_rejected() {
        let mut model = small_model();
        let mut state = OptimizerState::new(&model);
        let mut grads = zero_grads(&model);
        grads[1] = DenseTensor::zeros(&[2, 2]);
        assert!(matches!(
            adam_step(&mut model, &grads, &mut state, 1e-3, &AdamParams::default()),
            Err(OptimError::GradientShape { site: 1, .. })
        ));
    }
}
