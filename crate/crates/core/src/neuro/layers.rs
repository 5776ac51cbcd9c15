use std::rc::Rc;

use crate::graph::PropagationOperator;

use super::tape::{Tape, Var};
use super::tensor::Tensor;
use super::NeuroError;

/// GRU weights stored as `in × H` / `H × H` and applied as `x · W`.
#[derive(Debug, Clone, PartialEq)]
pub struct GruParams {
    pub w_ir: Tensor,
    pub w_iz: Tensor,
    pub w_in: Tensor,
    pub w_hr: Tensor,
    pub w_hz: Tensor,
    pub w_hn: Tensor,
    pub b_ir: Tensor,
    pub b_iz: Tensor,
    pub b_in: Tensor,
    pub b_hr: Tensor,
    pub b_hz: Tensor,
    pub b_hn: Tensor,
}

impl GruParams {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        let wi = || Tensor::zeros(&[input, hidden]);
        let wh = || Tensor::zeros(&[hidden, hidden]);
        let b = || Tensor::zeros(&[1, hidden]);
        Self {
            w_ir: wi(),
            w_iz: wi(),
            w_in: wi(),
            w_hr: wh(),
            w_hz: wh(),
            w_hn: wh(),
            b_ir: b(),
            b_iz: b(),
            b_in: b(),
            b_hr: b(),
            b_hz: b(),
            b_hn: b(),
        }
    }

    fn record(&self, tape: &mut Tape) -> GruVars {
        let mut c = |t: &Tensor| tape.constant(t.clone());
        GruVars {
            w_ir: c(&self.w_ir),
            w_iz: c(&self.w_iz),
            w_in: c(&self.w_in),
            w_hr: c(&self.w_hr),
            w_hz: c(&self.w_hz),
            w_hn: c(&self.w_hn),
            b_ir: c(&self.b_ir),
            b_iz: c(&self.b_iz),
            b_in: c(&self.b_in),
            b_hr: c(&self.b_hr),
            b_hz: c(&self.b_hz),
            b_hn: c(&self.b_hn),
        }
    }
}

/// GRU parameters as recorded on a tape.
#[derive(Debug, Clone, Copy)]
pub struct GruVars {
    pub w_ir: Var,
    pub w_iz: Var,
    pub w_in: Var,
    pub w_hr: Var,
    pub w_hz: Var,
    pub w_hn: Var,
    pub b_ir: Var,
    pub b_iz: Var,
    pub b_in: Var,
    pub b_hr: Var,
    pub b_hz: Var,
    pub b_hn: Var,
}

fn affine(tape: &mut Tape, x: Var, w: Var, b: Var) -> Result<Var, NeuroError> {
    let xw = tape.matmul(x, w)?;
    tape.add_row(xw, b)
}

/// `x · w + b`.
pub fn dense(tape: &mut Tape, x: Var, w: Var, b: Var) -> Result<Var, NeuroError> {
    affine(tape, x, w, b)
}

/// Reset gate, update gate, candidate state and new state of one GRU update.
#[derive(Debug, Clone, Copy)]
pub struct GruStep {
    pub r: Var,
    pub z: Var,
    pub candidate: Var,
    pub h: Var,
}

/// One GRU update with its intermediates:
/// `r = σ(xW_ir + b_ir + hW_hr + b_hr)`, `z` likewise,
/// `ñ = tanh(xW_in + b_in + r ⊙ (hW_hn + b_hn))`, `h' = (1 − z) ⊙ ñ + z ⊙ h`.
pub fn gru_step(tape: &mut Tape, x: Var, h: Var, p: &GruVars) -> Result<GruStep, NeuroError> {
    let xr = affine(tape, x, p.w_ir, p.b_ir)?;
    let hr = affine(tape, h, p.w_hr, p.b_hr)?;
    let r_pre = tape.add(xr, hr)?;
    let r = tape.sigmoid(r_pre);

    let xz = affine(tape, x, p.w_iz, p.b_iz)?;
    let hz = affine(tape, h, p.w_hz, p.b_hz)?;
    let z_pre = tape.add(xz, hz)?;
    let z = tape.sigmoid(z_pre);

    let xn = affine(tape, x, p.w_in, p.b_in)?;
    let hn = affine(tape, h, p.w_hn, p.b_hn)?;
    let gated = tape.mul(r, hn)?;
    let n_pre = tape.add(xn, gated)?;
    let candidate = tape.tanh(n_pre);

    let keep = tape.one_minus(z);
    let fresh = tape.mul(keep, candidate)?;
    let carried = tape.mul(z, h)?;
    let h = tape.add(fresh, carried)?;
    Ok(GruStep { r, z, candidate, h })
}

pub fn gru_cell(tape: &mut Tape, x: Var, h: Var, p: &GruVars) -> Result<Var, NeuroError> {
    Ok(gru_step(tape, x, h, p)?.h)
}

/// Plain graph convolution `op · x · w` over a batch of stacked graphs.
pub fn gcn_layer(tape: &mut Tape, ops: &Rc<Tensor>, x: Var, w: Var) -> Result<Var, NeuroError> {
    let xw = tape.matmul(x, w)?;
    tape.block_matmul(Rc::clone(ops), xw)
}

/// Gated graph layer: `h⁰ = x ‖ 0`, then `steps` rounds of
/// `m = op · (h W)` and `h = GRU(m, h)`.
pub fn ggcnn_layer(
    tape: &mut Tape,
    ops: &Rc<Tensor>,
    x: Var,
    w: Var,
    gru: &GruVars,
    steps: usize,
) -> Result<Var, NeuroError> {
    if steps == 0 {
        return Err(NeuroError::InvalidSteps);
    }
    let hidden = tape.value(w).cols();
    let input = tape.value(x).cols();
    if input > hidden {
        return Err(NeuroError::HiddenTooSmall { input, hidden });
    }
    let mut h = if input == hidden { x } else { tape.pad_cols(x, hidden)? };
    for _ in 0..steps {
        let hw = tape.matmul(h, w)?;
        let m = tape.block_matmul(Rc::clone(ops), hw)?;
        h = gru_cell(tape, m, h, gru)?;
    }
    Ok(h)
}

fn single_op(op: &PropagationOperator) -> Rc<Tensor> {
    let n = op.n();
    Rc::new(Tensor::from_vec(&[1, n, n], op.values().to_vec()).expect("operator is square"))
}

/// `op · x · w` without recording gradients.
pub fn gcn_forward(op: &PropagationOperator, x: &Tensor, w: &Tensor) -> Result<Tensor, NeuroError> {
    let mut tape = Tape::new();
    let xv = tape.constant(x.clone());
    let wv = tape.constant(w.clone());
    let out = gcn_layer(&mut tape, &single_op(op), xv, wv)?;
    Ok(tape.value(out).clone())
}

pub fn gru_forward(x: &Tensor, h: &Tensor, p: &GruParams) -> Result<Tensor, NeuroError> {
    let mut tape = Tape::new();
    let xv = tape.constant(x.clone());
    let hv = tape.constant(h.clone());
    let vars = p.record(&mut tape);
    let out = gru_cell(&mut tape, xv, hv, &vars)?;
    Ok(tape.value(out).clone())
}

/// `(r, z, ñ, h')` of one GRU update, without recording gradients.
pub fn gru_forward_parts(x: &Tensor, h: &Tensor, p: &GruParams) -> Result<[Tensor; 4], NeuroError> {
    let mut tape = Tape::new();
    let xv = tape.constant(x.clone());
    let hv = tape.constant(h.clone());
    let vars = p.record(&mut tape);
    let s = gru_step(&mut tape, xv, hv, &vars)?;
    Ok([s.r, s.z, s.candidate, s.h].map(|v| tape.value(v).clone()))
}

pub fn ggcnn_forward(
    op: &PropagationOperator,
    x: &Tensor,
    w: &Tensor,
    p: &GruParams,
    steps: usize,
) -> Result<Tensor, NeuroError> {
    let mut tape = Tape::new();
    let xv = tape.constant(x.clone());
    let wv = tape.constant(w.clone());
    let vars = p.record(&mut tape);
    let out = ggcnn_layer(&mut tape, &single_op(op), xv, wv, &vars, steps)?;
    Ok(tape.value(out).clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{propagation_operator, AdjacencyMatrix};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Tensor {
        Tensor::matrix(r, c, (0..r * c).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    fn random_gru(rng: &mut ChaCha8Rng, f: usize, h: usize) -> GruParams {
        GruParams {
            w_ir: random(rng, f, h),
            w_iz: random(rng, f, h),
            w_in: random(rng, f, h),
            w_hr: random(rng, h, h),
            w_hz: random(rng, h, h),
            w_hn: random(rng, h, h),
            b_ir: random(rng, 1, h),
            b_iz: random(rng, 1, h),
            b_in: random(rng, 1, h),
            b_hr: random(rng, 1, h),
            b_hz: random(rng, 1, h),
            b_hn: random(rng, 1, h),
        }
    }

    fn naive_mm(a: &Tensor, b: &Tensor) -> Tensor {
        let (m, k, n) = (a.rows(), a.cols(), b.cols());
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                for p in 0..k {
                    out[i * n + j] += a.at(i, p) * b.at(p, j);
                }
            }
        }
        Tensor::matrix(m, n, out).unwrap()
    }

    /// Scalar, per-coordinate GRU written directly from the gate equations.
    fn gru_scalar(x: &Tensor, h: &Tensor, p: &GruParams) -> Tensor {
        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        let (rows, f, hd) = (x.rows(), x.cols(), h.cols());
        let mut out = vec![0.0; rows * hd];
        for i in 0..rows {
            for j in 0..hd {
                let lin = |wi: &Tensor, bi: &Tensor, wh: &Tensor, bh: &Tensor| {
                    let mut a = bi.at(0, j);
                    for k in 0..f {
                        a += x.at(i, k) * wi.at(k, j);
                    }
                    let mut b = bh.at(0, j);
                    for k in 0..hd {
                        b += h.at(i, k) * wh.at(k, j);
                    }
                    (a, b)
                };
                let (ra, rb) = lin(&p.w_ir, &p.b_ir, &p.w_hr, &p.b_hr);
                let (za, zb) = lin(&p.w_iz, &p.b_iz, &p.w_hz, &p.b_hz);
                let (na, nb) = lin(&p.w_in, &p.b_in, &p.w_hn, &p.b_hn);
                let r = sig(ra + rb);
                let z = sig(za + zb);
                let n = (na + r * nb).tanh();
                out[i * hd + j] = (1.0 - z) * n + z * h.at(i, j);
            }
        }
        Tensor::matrix(rows, hd, out).unwrap()
    }

    fn close(a: &Tensor, b: &Tensor, tol: f64) -> bool {
        a.shape() == b.shape() && a.data().iter().zip(b.data()).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn gcn_identity_and_zero_cases() {
        let x = Tensor::matrix(1, 3, vec![0.5, -2.0, 4.0]).unwrap();
        let w = Tensor::matrix(3, 3, vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]).unwrap();
        let op = PropagationOperator::identity(1);
        assert_eq!(gcn_forward(&op, &x, &w).unwrap(), x);
        let zeros = Tensor::zeros(&[1, 3]);
        assert_eq!(gcn_forward(&op, &zeros, &w).unwrap(), zeros);
    }

    #[test]
    fn gcn_matches_dense_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = random(&mut rng, 4, 3);
        let w = random(&mut rng, 3, 2);
        let opm = random(&mut rng, 4, 4);
        let op = PropagationOperator::from_raw(4, opm.data().to_vec()).unwrap();
        let want = naive_mm(&naive_mm(&opm, &x), &w);
        assert!(close(&gcn_forward(&op, &x, &w).unwrap(), &want, 1e-12));
    }

    #[test]
    fn zero_gru_halves_previous_state() {
        let p = GruParams::zeros(3, 4);
        let h = Tensor::matrix(2, 4, vec![1.0, -2.0, 0.25, 8.0, 0.0, 3.0, -1.5, 0.5]).unwrap();
        let out = gru_forward(&Tensor::zeros(&[2, 3]), &h, &p).unwrap();
        assert_eq!(out, h.map(|v| 0.5 * v));
        let zero = gru_forward(&Tensor::zeros(&[2, 3]), &Tensor::zeros(&[2, 4]), &p).unwrap();
        assert!(zero.data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn gru_matches_scalar_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let p = random_gru(&mut rng, 3, 5);
            let x = random(&mut rng, 4, 3);
            let h = random(&mut rng, 4, 5);
            assert!(close(&gru_forward(&x, &h, &p).unwrap(), &gru_scalar(&x, &h, &p), 1e-12));
        }
    }

    #[test]
    fn ggcnn_single_zero_step_is_half_padded_input() {
        let x = Tensor::matrix(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let op = PropagationOperator::identity(2);
        let out = ggcnn_forward(&op, &x, &Tensor::zeros(&[3, 3]), &GruParams::zeros(3, 3), 1).unwrap();
        assert_eq!(out.data(), [0.5, 1.0, 0.0, 1.5, 2.0, 0.0]);
    }

    #[test]
    fn ggcnn_preconditions() {
        let op = PropagationOperator::identity(2);
        let x = Tensor::zeros(&[2, 3]);
        let err = ggcnn_forward(&op, &x, &Tensor::zeros(&[3, 3]), &GruParams::zeros(3, 3), 0);
        assert!(matches!(err, Err(NeuroError::InvalidSteps)));
        let err = ggcnn_forward(&op, &x, &Tensor::zeros(&[2, 2]), &GruParams::zeros(2, 2), 1);
        assert!(matches!(err, Err(NeuroError::HiddenTooSmall { input: 3, hidden: 2 })));
    }

    #[test]
    fn ggcnn_matches_unrolled_recurrence_on_a_line() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let adj = AdjacencyMatrix::from_values(3, vec![1.0, 0.6, 0.0, 0.6, 1.0, 0.3, 0.0, 0.3, 1.0]).unwrap();
        let op = propagation_operator(&adj).unwrap();
        let opm = Tensor::matrix(3, 3, op.values().to_vec()).unwrap();
        let x = random(&mut rng, 3, 2);
        let w = random(&mut rng, 4, 4);
        let p = random_gru(&mut rng, 4, 4);
        let mut h = Tensor::zeros(&[3, 4]);
        for i in 0..3 {
            for j in 0..2 {
                h.data_mut()[i * 4 + j] = x.at(i, j);
            }
        }
        for _ in 0..3 {
            let m = naive_mm(&opm, &naive_mm(&h, &w));
            h = gru_scalar(&m, &h, &p);
        }
        assert!(close(&ggcnn_forward(&op, &x, &w, &p, 3).unwrap(), &h, 1e-12));
    }
}
