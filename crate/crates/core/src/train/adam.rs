use crate::neuro::{ParamSet, Tensor};

use super::TrainConfig;

/// First and second moment estimates for every parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
    pub step: u64,
}

impl AdamState {
    pub fn new(params: &ParamSet) -> Self {
        let zeros: Vec<Tensor> = params.tensors().iter().map(|t| Tensor::zeros(t.shape())).collect();
        Self { m: zeros.clone(), v: zeros, step: 0 }
    }
}

/// Bias-corrected Adam update, applied in place.
pub fn adam_step(params: &mut ParamSet, grads: &[Tensor], state: &mut AdamState, cfg: &TrainConfig) {
    assert_eq!(grads.len(), params.len(), "one gradient per parameter tensor");
    state.step += 1;
    let (b1, b2) = (cfg.adam_beta1, cfg.adam_beta2);
    let c1 = 1.0 - b1.powi(state.step as i32);
    let c2 = 1.0 - b2.powi(state.step as i32);
    for (k, p) in params.tensors_mut().iter_mut().enumerate() {
        let g = grads[k].data();
        let m = state.m[k].data_mut();
        let v = state.v[k].data_mut();
        for (i, w) in p.data_mut().iter_mut().enumerate() {
            m[i] = b1 * m[i] + (1.0 - b1) * g[i];
            v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
            let mh = m[i] / c1;
            let vh = v[i] / c2;
            *w -= cfg.learning_rate * mh / (vh.sqrt() + cfg.adam_epsilon);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(theta: f64) -> ParamSet {
        let mut p = ParamSet::new();
        p.add("theta", Tensor::scalar(theta));
        p
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let cfg = TrainConfig::default();
        for g in [1e-3, 0.5, 250.0, -40.0] {
            let mut p = single(1.0);
            let mut s = AdamState::new(&p);
            adam_step(&mut p, &[Tensor::scalar(g)], &mut s, &cfg);
            let moved = p.tensors()[0].item() - 1.0;
            assert!((moved + cfg.learning_rate * g.signum()).abs() < 1e-6 * cfg.learning_rate + 1e-8);
        }
    }

    #[test]
    fn zero_gradient_only_advances_counter() {
        let cfg = TrainConfig::default();
        let mut p = single(0.3);
        let mut s = AdamState::new(&p);
        adam_step(&mut p, &[Tensor::scalar(0.0)], &mut s, &cfg);
        assert_eq!(p.tensors()[0].item(), 0.3);
        assert_eq!(s.step, 1);
    }

    #[test]
    fn quadratic_trajectory_matches_reference() {
        let cfg = TrainConfig { learning_rate: 0.1, ..Default::default() };
        let mut p = single(1.0);
        let mut s = AdamState::new(&p);
        // independent scalar Adam on f(θ) = θ²
        let (mut th, mut m, mut v) = (1.0f64, 0.0f64, 0.0f64);
        for t in 1..=10 {
            let g = 2.0 * p.tensors()[0].item();
            adam_step(&mut p, &[Tensor::scalar(g)], &mut s, &cfg);
            let gr = 2.0 * th;
            m = 0.9 * m + 0.1 * gr;
            v = 0.999 * v + 0.001 * gr * gr;
            let mh = m / (1.0 - 0.9f64.powi(t));
            let vh = v / (1.0 - 0.999f64.powi(t));
            th -= 0.1 * mh / (vh.sqrt() + 1e-8);
            assert!((p.tensors()[0].item() - th).abs() < 1e-12);
        }
    }

    #[test]
    fn converges_on_ten_dimensional_quadratic() {
        let cfg = TrainConfig { learning_rate: 0.01, ..Default::default() };
        let centre: Vec<f64> = (0..10).map(|i| i as f64 * 0.3 - 1.2).collect();
        let scales: Vec<f64> = (0..10).map(|i| 0.5 + i as f64 * 0.25).collect();
        let mut p = ParamSet::new();
        p.add("x", Tensor::zeros(&[10]));
        let mut s = AdamState::new(&p);
        let loss = |x: &[f64]| x.iter().enumerate().map(|(i, v)| scales[i] * (v - centre[i]).powi(2)).sum::<f64>();
        for _ in 0..2000 {
            let x = p.tensors()[0].data().to_vec();
            let g: Vec<f64> = x.iter().enumerate().map(|(i, v)| 2.0 * scales[i] * (v - centre[i])).collect();
            adam_step(&mut p, &[Tensor::from_vec(&[10], g).unwrap()], &mut s, &cfg);
        }
        assert!(loss(p.tensors()[0].data()) < 1e-4);
    }
}
