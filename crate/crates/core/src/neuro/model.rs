use std::rc::Rc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::container::Container;

use super::layers::{dense, gcn_layer, ggcnn_layer, GruVars};
use super::params::{glorot_uniform, ParamSet};
use super::tape::{Tape, Var};
use super::tensor::Tensor;
use super::NeuroError;

pub const CHECKPOINT_FORMAT: &str = "ggcnn-checkpoint/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GatedLayerSpec {
    pub hidden: usize,
    pub steps: usize,
}

/// Architecture descriptor. Every variant ends in a readout producing
/// `output` values per station.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelSpec {
    Ggcnn {
        input: usize,
        layers: Vec<GatedLayerSpec>,
        readout_hidden: Vec<usize>,
        output: usize,
        /// Messages use raw adjacency weights instead of the normalized operator.
        #[serde(default)]
        raw_messages: bool,
    },
    Gcn {
        input: usize,
        layers: Vec<usize>,
        readout_hidden: Vec<usize>,
        output: usize,
    },
    Mlp {
        input: usize,
        hidden: Vec<usize>,
        output: usize,
    },
}

impl ModelSpec {
    /// Two gated layers of width 32 with 4 and 3 propagation steps, readout 64 → 2.
    pub fn ggcnn(input: usize) -> Self {
        ModelSpec::Ggcnn {
            input,
            layers: vec![GatedLayerSpec { hidden: 32, steps: 4 }, GatedLayerSpec { hidden: 32, steps: 3 }],
            readout_hidden: vec![64],
            output: 2,
            raw_messages: false,
        }
    }

    pub fn gcn(input: usize) -> Self {
        ModelSpec::Gcn { input, layers: vec![32, 32], readout_hidden: vec![64], output: 2 }
    }

    pub fn mlp(input: usize) -> Self {
        ModelSpec::Mlp { input, hidden: vec![32, 32, 64], output: 2 }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ModelSpec::Ggcnn { .. } => "GGCNN",
            ModelSpec::Gcn { .. } => "GCN",
            ModelSpec::Mlp { .. } => "MLP",
        }
    }

    pub fn input(&self) -> usize {
        match self {
            ModelSpec::Ggcnn { input, .. } | ModelSpec::Gcn { input, .. } | ModelSpec::Mlp { input, .. } => *input,
        }
    }

    pub fn output(&self) -> usize {
        match self {
            ModelSpec::Ggcnn { output, .. } | ModelSpec::Gcn { output, .. } | ModelSpec::Mlp { output, .. } => *output,
        }
    }

    pub fn uses_graph(&self) -> bool {
        !matches!(self, ModelSpec::Mlp { .. })
    }

    pub fn raw_messages(&self) -> bool {
        matches!(self, ModelSpec::Ggcnn { raw_messages: true, .. })
    }

    /// Short human-readable summary of the architecture.
    pub fn describe(&self) -> String {
        let list = |v: &[usize]| v.iter().map(usize::to_string).collect::<Vec<_>>().join("-");
        match self {
            ModelSpec::Ggcnn { layers, readout_hidden, .. } => {
                let gated: Vec<String> = layers.iter().map(|l| format!("{}x{}", l.hidden, l.steps)).collect();
                format!("gated {} + readout {}", gated.join(", "), list(readout_hidden))
            }
            ModelSpec::Gcn { layers, readout_hidden, .. } => {
                format!("conv {} + readout {}", list(layers), list(readout_hidden))
            }
            ModelSpec::Mlp { hidden, .. } => format!("dense {}", list(hidden)),
        }
    }

    pub fn validate(&self) -> Result<(), NeuroError> {
        let bad = |m: &str| Err(NeuroError::InvalidSpec(m.to_string()));
        if self.input() == 0 || self.output() == 0 {
            return bad("input and output widths must be positive");
        }
        match self {
            ModelSpec::Ggcnn { input, layers, readout_hidden, .. } => {
                if layers.is_empty() {
                    return bad("at least one gated layer is required");
                }
                let mut width = *input;
                for l in layers {
                    if l.steps == 0 {
                        return Err(NeuroError::InvalidSteps);
                    }
                    if l.hidden < width {
                        return Err(NeuroError::HiddenTooSmall { input: width, hidden: l.hidden });
                    }
                    width = l.hidden;
                }
                if readout_hidden.contains(&0) {
                    return bad("readout widths must be positive");
                }
            }
            ModelSpec::Gcn { layers, readout_hidden, .. } => {
                if layers.is_empty() || layers.contains(&0) || readout_hidden.contains(&0) {
                    return bad("convolution and readout widths must be positive");
                }
            }
            ModelSpec::Mlp { hidden, .. } => {
                if hidden.contains(&0) {
                    return bad("hidden widths must be positive");
                }
            }
        }
        Ok(())
    }
}

/// One forward pass worth of inputs: `B` graphs of `N` nodes stacked row-wise.
#[derive(Debug, Clone)]
pub struct Batch {
    /// `(B·N) × F` node features.
    pub x: Tensor,
    /// `B × N × N` per-graph operators; unused by graph-free models.
    pub ops: Option<Rc<Tensor>>,
}

/// Parameters plus architecture.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub spec: ModelSpec,
    pub params: ParamSet,
    pub seed: u64,
    pub feature_order: Vec<String>,
}

/// The proposed model is one configuration of [`Model`].
pub type GgcnnModel = Model;

fn add_dense(p: &mut ParamSet, rng: &mut ChaCha8Rng, name: &str, fan_in: usize, fan_out: usize) {
    p.add(format!("{name}.w"), glorot_uniform(rng, fan_in, fan_out));
    p.add(format!("{name}.b"), Tensor::zeros(&[1, fan_out]));
}

fn add_readout(p: &mut ParamSet, rng: &mut ChaCha8Rng, mut width: usize, hidden: &[usize], output: usize) {
    for (i, &h) in hidden.iter().enumerate() {
        add_dense(p, rng, &format!("readout{i}"), width, h);
        width = h;
    }
    add_dense(p, rng, "readout_out", width, output);
}

impl Model {
    /// Glorot-uniform weights and zero biases from a seeded ChaCha8 stream.
    pub fn new(spec: ModelSpec, seed: u64) -> Result<Self, NeuroError> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = ParamSet::new();
        match &spec {
            ModelSpec::Ggcnn { input, layers, readout_hidden, output, .. } => {
                let mut width = *input;
                for (i, l) in layers.iter().enumerate() {
                    let h = l.hidden;
                    let pre = format!("gated{i}");
                    p.add(format!("{pre}.w"), glorot_uniform(&mut rng, h, h));
                    for g in ["ir", "iz", "in", "hr", "hz", "hn"] {
                        p.add(format!("{pre}.gru.w_{g}"), glorot_uniform(&mut rng, h, h));
                    }
                    for g in ["ir", "iz", "in", "hr", "hz", "hn"] {
                        p.add(format!("{pre}.gru.b_{g}"), Tensor::zeros(&[1, h]));
                    }
                    width = h;
                }
                add_readout(&mut p, &mut rng, width, readout_hidden, *output);
            }
            ModelSpec::Gcn { input, layers, readout_hidden, output } => {
                let mut width = *input;
                for (i, &h) in layers.iter().enumerate() {
                    p.add(format!("conv{i}.w"), glorot_uniform(&mut rng, width, h));
                    width = h;
                }
                add_readout(&mut p, &mut rng, width, readout_hidden, *output);
            }
            ModelSpec::Mlp { input, hidden, output } => add_readout(&mut p, &mut rng, *input, hidden, *output),
        }
        Ok(Self { spec, params: p, seed, feature_order: Vec::new() })
    }

    pub fn with_feature_order(mut self, names: Vec<String>) -> Self {
        self.feature_order = names;
        self
    }

    pub fn param_count(&self) -> usize {
        self.params.scalar_count()
    }

    /// Records the forward pass; `vars` come from [`ParamSet::bind`] (or any
    /// recording of the same tensors in the same order).
    pub fn forward(&self, tape: &mut Tape, vars: &[Var], batch: &Batch) -> Result<Var, NeuroError> {
        if vars.len() != self.params.len() {
            return Err(NeuroError::ShapeMismatch(format!("{} vars for {} parameters", vars.len(), self.params.len())));
        }
        if batch.x.shape().len() != 2 || batch.x.cols() != self.spec.input() {
            return Err(NeuroError::ShapeMismatch(format!(
                "features {:?} for a model expecting {} columns",
                batch.x.shape(),
                self.spec.input()
            )));
        }
        let ops = || {
            batch.ops.as_ref().ok_or_else(|| NeuroError::ShapeMismatch("graph model needs propagation operators".into()))
        };
        let mut next = vars.iter().copied();
        let mut take = || next.next().expect("parameter count checked above");
        let mut h = tape.constant(batch.x.clone());
        let readout_hidden: &[usize] = match &self.spec {
            ModelSpec::Ggcnn { layers, readout_hidden, .. } => {
                let ops = ops()?;
                for l in layers {
                    let w = take();
                    let gru = GruVars {
                        w_ir: take(),
                        w_iz: take(),
                        w_in: take(),
                        w_hr: take(),
                        w_hz: take(),
                        w_hn: take(),
                        b_ir: take(),
                        b_iz: take(),
                        b_in: take(),
                        b_hr: take(),
                        b_hz: take(),
                        b_hn: take(),
                    };
                    h = ggcnn_layer(tape, ops, h, w, &gru, l.steps)?;
                }
                readout_hidden
            }
            ModelSpec::Gcn { layers, readout_hidden, .. } => {
                let ops = ops()?;
                for _ in layers {
                    let w = take();
                    let c = gcn_layer(tape, ops, h, w)?;
                    h = tape.relu(c);
                }
                readout_hidden
            }
            ModelSpec::Mlp { hidden, .. } => hidden,
        };
        for _ in readout_hidden {
            let (w, b) = (take(), take());
            let a = dense(tape, h, w, b)?;
            h = tape.relu(a);
        }
        let (w, b) = (take(), take());
        dense(tape, h, w, b)
    }

    /// Forward pass without gradient bookkeeping for the caller.
    pub fn predict(&self, batch: &Batch) -> Result<Tensor, NeuroError> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = self.params.tensors().iter().map(|t| tape.constant(t.clone())).collect();
        let out = self.forward(&mut tape, &vars, batch)?;
        Ok(tape.value(out).clone())
    }

    /// Mean squared error against `target` and its gradient for every parameter.
    pub fn loss_and_grads(&self, batch: &Batch, target: &Tensor) -> Result<(f64, Vec<Tensor>), NeuroError> {
        let mut tape = Tape::new();
        let vars = self.params.bind(&mut tape);
        let pred = self.forward(&mut tape, &vars, batch)?;
        let t = tape.constant(target.clone());
        let loss = tape.mse(pred, t)?;
        let mut grads = tape.backward(loss)?;
        let g = vars
            .iter()
            .zip(self.params.tensors())
            .map(|(v, p)| grads.take(*v).unwrap_or_else(|| Tensor::zeros(p.shape())))
            .collect();
        Ok((tape.value(loss).item(), g))
    }

    pub fn to_container(&self) -> Container {
        let shapes: Vec<_> = self
            .params
            .names()
            .iter()
            .zip(self.params.tensors())
            .map(|(n, t)| json!({ "name": n, "shape": t.shape() }))
            .collect();
        let data: Vec<f64> = self.params.tensors().iter().flat_map(|t| t.data().iter().copied()).collect();
        Container::new(
            "checkpoint",
            vec![data.len()],
            json!({
                "format": CHECKPOINT_FORMAT,
                "spec": self.spec,
                "seed": self.seed,
                "feature_order": self.feature_order,
                "params": shapes,
            }),
            data,
        )
    }

    pub fn from_container(c: &Container) -> Result<Self, NeuroError> {
        let err = |e: crate::container::ContainerError| NeuroError::Checkpoint(e.to_string());
        c.expect_kind("checkpoint").map_err(err)?;
        let format: String = c.meta("format").map_err(err)?;
        if format != CHECKPOINT_FORMAT {
            return Err(NeuroError::Checkpoint(format!("unsupported format `{format}`")));
        }
        let spec: ModelSpec = c.meta("spec").map_err(err)?;
        let seed: u64 = c.meta("seed").map_err(err)?;
        let feature_order: Vec<String> = c.meta("feature_order").map_err(err)?;
        #[derive(Deserialize)]
        struct Entry {
            name: String,
            shape: Vec<usize>,
        }
        let entries: Vec<Entry> = c.meta("params").map_err(err)?;
        let template = Model::new(spec, seed)?;
        if entries.len() != template.params.len() {
            return Err(NeuroError::Checkpoint("parameter list does not match the architecture".into()));
        }
        let mut params = ParamSet::new();
        let mut offset = 0;
        for (e, t) in entries.iter().zip(template.params.tensors()) {
            if e.shape != t.shape() {
                return Err(NeuroError::Checkpoint(format!("parameter `{}` has shape {:?}", e.name, e.shape)));
            }
            let len = t.len();
            let chunk = c
                .data
                .get(offset..offset + len)
                .ok_or_else(|| NeuroError::Checkpoint("payload shorter than declared parameters".into()))?;
            params.add(e.name.clone(), Tensor::from_vec(&e.shape, chunk.to_vec())?);
            offset += len;
        }
        if offset != c.data.len() {
            return Err(NeuroError::Checkpoint("payload longer than declared parameters".into()));
        }
        Ok(Self { spec: template.spec, params, seed, feature_order })
    }
}
