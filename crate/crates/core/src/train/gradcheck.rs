use serde::{Deserialize, Serialize};

use crate::neuro::{Batch, Model, NeuroError, Tensor};

/// Relative error above which a parameter tensor is flagged.
pub const GRAD_CHECK_TOLERANCE: f64 = 1e-4;
/// Lower bound on the relative-error denominator, so entries whose true
/// gradient is zero are judged on absolute error.
const SCALE_FLOOR: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckEntry {
    pub name: String,
    pub len: usize,
    pub max_rel_error: f64,
    pub max_abs_error: f64,
}

impl GradCheckEntry {
    pub fn passed(&self) -> bool {
        self.max_rel_error < GRAD_CHECK_TOLERANCE
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub epsilon: f64,
    pub entries: Vec<GradCheckEntry>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.entries.iter().all(GradCheckEntry::passed)
    }

    pub fn max_rel_error(&self) -> f64 {
        self.entries.iter().map(|e| e.max_rel_error).fold(0.0, f64::max)
    }

    pub fn failing(&self) -> Vec<&str> {
        self.entries.iter().filter(|e| !e.passed()).map(|e| e.name.as_str()).collect()
    }

    pub fn render(&self) -> String {
        let width = self.entries.iter().map(|e| e.name.len()).max().unwrap_or(4).max(9);
        let mut s = format!("{:<width$}  {:>6}  {:>12}  {:>12}  status\n", "parameter", "size", "max_rel", "max_abs");
        for e in &self.entries {
            s.push_str(&format!(
                "{:<width$}  {:>6}  {:>12.3e}  {:>12.3e}  {}\n",
                e.name,
                e.len,
                e.max_rel_error,
                e.max_abs_error,
                if e.passed() { "ok" } else { "FAIL" }
            ));
        }
        s
    }
}

/// Compares `analytic` gradients against central differences of the MSE loss.
pub fn compare_gradients(
    model: &Model,
    batch: &Batch,
    target: &Tensor,
    analytic: &[Tensor],
    epsilon: f64,
) -> Result<GradCheckReport, NeuroError> {
    let mut probe = model.clone();
    let loss = |m: &Model| -> Result<f64, NeuroError> {
        let pred = m.predict(batch)?;
        crate::train::mse_loss(&pred, target)
    };
    let mut entries = Vec::with_capacity(model.params.len());
    for id in model.params.ids() {
        let k = id.index();
        let mut max_rel: f64 = 0.0;
        let mut max_abs: f64 = 0.0;
        for i in 0..model.params.get(id).len() {
            let orig = model.params.get(id).data()[i];
            probe.params.get_mut(id).data_mut()[i] = orig + epsilon;
            let plus = loss(&probe)?;
            probe.params.get_mut(id).data_mut()[i] = orig - epsilon;
            let minus = loss(&probe)?;
            probe.params.get_mut(id).data_mut()[i] = orig;
            let numeric = (plus - minus) / (2.0 * epsilon);
            let a = analytic[k].data()[i];
            let diff = (a - numeric).abs();
            max_abs = max_abs.max(diff);
            max_rel = max_rel.max(diff / a.abs().max(numeric.abs()).max(SCALE_FLOOR));
        }
        entries.push(GradCheckEntry {
            name: model.params.name(id).to_string(),
            len: model.params.get(id).len(),
            max_rel_error: max_rel,
            max_abs_error: max_abs,
        });
    }
    Ok(GradCheckReport { epsilon, entries })
}

/// Backward-pass gradients of the MSE loss checked against central differences.
pub fn grad_check(model: &Model, batch: &Batch, target: &Tensor, epsilon: f64) -> Result<GradCheckReport, NeuroError> {
    let (_, grads) = model.loss_and_grads(batch, target)?;
    compare_gradients(model, batch, target, &grads, epsilon)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neuro::ModelSpec;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::rc::Rc;

    fn instance(n: usize, f: usize, seed: u64) -> (Batch, Tensor) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Tensor::matrix(n, f, (0..n * f).map(|_| rng.random_range(0.0..1.0)).collect()).unwrap();
        let ops = Tensor::from_vec(&[1, n, n], (0..n * n).map(|_| rng.random_range(0.0..0.5)).collect()).unwrap();
        let y = Tensor::matrix(n, 2, (0..n * 2).map(|_| rng.random_range(0.0..1.0)).collect()).unwrap();
        (Batch { x, ops: Some(Rc::new(ops)) }, y)
    }

    #[test]
    fn linear_model_is_exact() {
        let (b, y) = instance(5, 3, 1);
        let m = Model::new(ModelSpec::Mlp { input: 3, hidden: vec![], output: 2 }, 2).unwrap();
        let r = grad_check(&m, &b, &y, 1e-5).unwrap();
        // Quadratic loss: only rounding (~1e-16 / epsilon) separates the two.
        assert!(r.max_rel_error() < 1e-7, "{}", r.render());
    }

    #[test]
    fn corrupted_gradient_is_flagged() {
        let (b, y) = instance(4, 3, 2);
        let m = Model::new(ModelSpec::gcn(3), 4).unwrap();
        let (_, mut grads) = m.loss_and_grads(&b, &y).unwrap();
        let clean = compare_gradients(&m, &b, &y, &grads, 1e-5).unwrap();
        assert!(clean.passed(), "{}", clean.render());
        // +10% on the largest entry of the first weight
        let g = grads[0].data_mut();
        let i = (0..g.len()).max_by(|&a, &c| g[a].abs().total_cmp(&g[c].abs())).unwrap();
        g[i] *= 1.1;
        let r = compare_gradients(&m, &b, &y, &grads, 1e-5).unwrap();
        assert_eq!(r.failing(), [m.params.names()[0].as_str()]);
    }
}
