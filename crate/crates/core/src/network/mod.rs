//! Bidirectional layers, deep stacks and the Bi-LSTM → GRU → softmax
//! classifier.
//!
//! A network is a stack of layers, each either unidirectional or
//! bidirectional, over one cell kind. Every window starts from zero state.
//! The classifier reads out the top layer's hidden vector at the final
//! timestep of the window.

mod model_io;

use serde::{Deserialize, Serialize};

pub use model_io::{load_model, save_model, MODEL_FORMAT_VERSION};

use crate::cells::{CellKind, CellParams, CellTape, ParamBlock};
use crate::error::{shape_err, Error, Result};
use crate::numeric::{init_weights, softmax_slice, InitScheme, Matrix, SeededRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub bidirectional: bool,
    pub cell: CellKind,
}

/// Named architectures the classifier entry points accept.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Architecture {
    /// Bidirectional LSTM under a unidirectional GRU.
    Bidirectional,
    /// The same stack with the backward LSTM removed.
    Unidirectional,
    Custom,
}

impl Architecture {
    pub fn layers(self) -> Vec<LayerSpec> {
        match self {
            Architecture::Bidirectional => vec![
                LayerSpec { bidirectional: true, cell: CellKind::Lstm },
                LayerSpec { bidirectional: false, cell: CellKind::Gru },
            ],
            Architecture::Unidirectional => vec![
                LayerSpec { bidirectional: false, cell: CellKind::Lstm },
                LayerSpec { bidirectional: false, cell: CellKind::Gru },
            ],
            Architecture::Custom => Vec::new(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Architecture::Bidirectional => "bi",
            Architecture::Unidirectional => "uni",
            Architecture::Custom => "custom",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub input_size: usize,
    pub hidden_size: usize,
    pub num_classes: usize,
    pub window_length: usize,
    pub layers: Vec<LayerSpec>,
    /// Identifier of the feature layout the model was trained on.
    #[serde(default)]
    pub feature_schema: Option<String>,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self::new(Architecture::Bidirectional, 50, 64, 2, 50)
    }
}

impl NetworkConfig {
    pub fn new(arch: Architecture, input_size: usize, hidden_size: usize, num_classes: usize, window_length: usize) -> Self {
        Self {
            input_size,
            hidden_size,
            num_classes,
            window_length,
            layers: arch.layers(),
            feature_schema: None,
        }
    }

    pub fn architecture(&self) -> Architecture {
        if self.layers == Architecture::Bidirectional.layers() {
            Architecture::Bidirectional
        } else if self.layers == Architecture::Unidirectional.layers() {
            Architecture::Unidirectional
        } else {
            Architecture::Custom
        }
    }

    pub fn layer_input_size(&self, layer: usize) -> usize {
        if layer == 0 {
            self.input_size
        } else {
            self.layer_output_size(layer - 1)
        }
    }

    pub fn layer_output_size(&self, layer: usize) -> usize {
        if self.layers[layer].bidirectional {
            2 * self.hidden_size
        } else {
            self.hidden_size
        }
    }

    pub fn top_size(&self) -> usize {
        self.layer_output_size(self.layers.len() - 1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::InvalidConfig(format!("num_classes must be >= 2, got {}", self.num_classes)));
        }
        if self.hidden_size == 0 || self.input_size == 0 || self.window_length == 0 {
            return Err(Error::InvalidConfig(
                "input_size, hidden_size and window_length must be >= 1".into(),
            ));
        }
        if self.layers.is_empty() {
            return Err(Error::InvalidConfig("at least one layer is required".into()));
        }
        Ok(())
    }
}

/// One layer: a forward-in-time cell and, for bidirectional layers, a
/// backward-in-time cell of the same kind.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub forward: CellParams,
    pub backward: Option<CellParams>,
}

impl LayerParams {
    pub fn output_size(&self) -> usize {
        self.forward.hidden_size() * if self.backward.is_some() { 2 } else { 1 }
    }

    pub fn input_size(&self) -> usize {
        self.forward.input_size()
    }

    fn zeros_like(&self) -> Self {
        Self {
            forward: self.forward.zeros_like(),
            backward: self.backward.as_ref().map(CellParams::zeros_like),
        }
    }
}

/// All trainable parameters of a classifier plus the configuration and seed
/// that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParameters {
    pub config: NetworkConfig,
    pub seed: u64,
    pub layers: Vec<LayerParams>,
    pub output_w: Matrix,
    pub output_b: Matrix,
}

impl ModelParameters {
    /// Weights uniform in ±sqrt(6 / (fan_in + fan_out)), biases zero.
    pub fn new(config: NetworkConfig, seed: u64) -> Result<Self> {
        Self::with_init(config, seed, InitScheme::UniformScaled)
    }

    pub fn zeros(config: NetworkConfig) -> Result<Self> {
        Self::with_init(config, 0, InitScheme::Zeros)
    }

    pub fn with_init(config: NetworkConfig, seed: u64, scheme: InitScheme) -> Result<Self> {
        config.validate()?;
        let mut rng = SeededRng::new(seed);
        let hidden = config.hidden_size;
        let layers = config
            .layers
            .iter()
            .enumerate()
            .map(|(l, spec)| {
                let input = config.layer_input_size(l);
                let forward = CellParams::new(spec.cell, input, hidden, scheme, &mut rng);
                let backward = spec
                    .bidirectional
                    .then(|| CellParams::new(spec.cell, input, hidden, scheme, &mut rng));
                LayerParams { forward, backward }
            })
            .collect();
        let output_w = init_weights(config.num_classes, config.top_size(), scheme, &mut rng);
        let output_b = Matrix::zeros(config.num_classes, 1);
        Ok(Self {
            config,
            seed,
            layers,
            output_w,
            output_b,
        })
    }

    /// Zero-valued parameters of identical shape, for gradient accumulation.
    pub fn zeros_like(&self) -> Self {
        Self {
            config: self.config.clone(),
            seed: self.seed,
            layers: self.layers.iter().map(LayerParams::zeros_like).collect(),
            output_w: Matrix::zeros(self.output_w.rows(), self.output_w.cols()),
            output_b: Matrix::zeros(self.output_b.rows(), 1),
        }
    }

    pub fn forward_lstm(&self) -> Option<&crate::cells::LstmParams> {
        match self.layers.first().map(|l| &l.forward) {
            Some(CellParams::Lstm(p)) => Some(p),
            _ => None,
        }
    }

    pub fn backward_lstm(&self) -> Option<&crate::cells::LstmParams> {
        match self.layers.first().and_then(|l| l.backward.as_ref()) {
            Some(CellParams::Lstm(p)) => Some(p),
            _ => None,
        }
    }

    pub fn gru(&self) -> Option<&crate::cells::GruParams> {
        match self.layers.get(1).map(|l| &l.forward) {
            Some(CellParams::Gru(p)) => Some(p),
            _ => None,
        }
    }

    /// Every parameter matrix with a stable, unique name, in storage order.
    pub fn named_matrices(&self) -> Vec<(String, &Matrix)> {
        let mut out = Vec::new();
        for (l, layer) in self.layers.iter().enumerate() {
            for (name, m) in layer.forward.named() {
                out.push((format!("layer{l}.fwd.{name}"), m));
            }
            if let Some(bwd) = &layer.backward {
                for (name, m) in bwd.named() {
                    out.push((format!("layer{l}.bwd.{name}"), m));
                }
            }
        }
        out.push(("output.w".to_string(), &self.output_w));
        out.push(("output.b".to_string(), &self.output_b));
        out
    }

    /// Same order as [`ModelParameters::named_matrices`].
    pub fn matrices_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out = Vec::new();
        for layer in &mut self.layers {
            out.extend(layer.forward.matrices_mut());
            if let Some(bwd) = &mut layer.backward {
                out.extend(bwd.matrices_mut());
            }
        }
        out.push(&mut self.output_w);
        out.push(&mut self.output_b);
        out
    }

    pub fn param_count(&self) -> usize {
        self.named_matrices().iter().map(|(_, m)| m.len()).sum()
    }

    /// Checks every block against the configuration.
    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        let c = &self.config;
        if self.layers.len() != c.layers.len() {
            return Err(Error::Validation(format!(
                "{} layers stored, configuration declares {}",
                self.layers.len(),
                c.layers.len()
            )));
        }
        let check = |what: String, p: &CellParams, kind: CellKind, input: usize| -> Result<()> {
            if p.kind() != kind || p.input_size() != input || p.hidden_size() != c.hidden_size {
                return Err(Error::Validation(format!(
                    "{what}: expected {} with input {input} and hidden {}, found {} with input {} and hidden {}",
                    kind.as_str(),
                    c.hidden_size,
                    p.kind().as_str(),
                    p.input_size(),
                    p.hidden_size()
                )));
            }
            let consistent = match p {
                CellParams::Simple(q) => q.validate(),
                CellParams::Lstm(q) => q.validate(),
                CellParams::Gru(q) => q.validate(),
            };
            consistent.map_err(|e| Error::Validation(format!("{what}: {e}")))
        };
        for (l, (layer, spec)) in self.layers.iter().zip(&c.layers).enumerate() {
            let input = c.layer_input_size(l);
            check(format!("layer {l} forward cell"), &layer.forward, spec.cell, input)?;
            match (&layer.backward, spec.bidirectional) {
                (Some(b), true) => check(format!("layer {l} backward cell"), b, spec.cell, input)?,
                (None, false) => {}
                _ => {
                    return Err(Error::Validation(format!(
                        "layer {l}: backward cell presence does not match bidirectional={}",
                        spec.bidirectional
                    )))
                }
            }
        }
        if self.output_w.shape() != (c.num_classes, c.top_size()) || self.output_b.shape() != (c.num_classes, 1) {
            return Err(Error::Validation(format!(
                "output layer must be {}x{} with {}x1 bias",
                c.num_classes,
                c.top_size(),
                c.num_classes
            )));
        }
        Ok(())
    }
}

/// Per-timestep tapes and hidden vectors of one direction, indexed by time
/// (not processing order).
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionTrace {
    pub tapes: Vec<CellTape>,
    pub hidden: Vec<Matrix>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerTrace {
    pub forward: DirectionTrace,
    pub backward: Option<DirectionTrace>,
    /// `[h_fwd_t ; h_bwd_t]` for bidirectional layers, `h_fwd_t` otherwise.
    pub outputs: Vec<Matrix>,
}

/// Everything the backward pass needs from one window.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    pub layers: Vec<LayerTrace>,
    pub logits: Matrix,
    pub probs: Matrix,
}

impl ForwardTrace {
    /// Window length.
    pub fn len(&self) -> usize {
        self.layers.first().map_or(0, |l| l.outputs.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Splits a `T x F` window into `T` column vectors.
pub fn window_to_sequence(window: &Matrix) -> Vec<Matrix> {
    (0..window.rows()).map(|t| window.row_as_column(t)).collect()
}

fn run_direction(cell: &CellParams, xs: &[Matrix], reverse: bool) -> Result<DirectionTrace> {
    let len = xs.len();
    let mut tapes: Vec<Option<CellTape>> = vec![None; len];
    let mut hidden: Vec<Option<Matrix>> = vec![None; len];
    let mut state = cell.zero_state();
    let order: Box<dyn Iterator<Item = usize>> = if reverse {
        Box::new((0..len).rev())
    } else {
        Box::new(0..len)
    };
    for t in order {
        let (next, tape) = cell.step(&xs[t], &state)?;
        hidden[t] = Some(next.h.clone());
        tapes[t] = Some(tape);
        state = next;
    }
    Ok(DirectionTrace {
        tapes: tapes.into_iter().map(Option::unwrap).collect(),
        hidden: hidden.into_iter().map(Option::unwrap).collect(),
    })
}

fn layer_forward_traced(layer: &LayerParams, xs: &[Matrix]) -> Result<LayerTrace> {
    if xs.is_empty() {
        return Err(Error::EmptySequence);
    }
    let forward = run_direction(&layer.forward, xs, false)?;
    let backward = layer
        .backward
        .as_ref()
        .map(|cell| run_direction(cell, xs, true))
        .transpose()?;
    let outputs = match &backward {
        Some(b) => forward
            .hidden
            .iter()
            .zip(&b.hidden)
            .map(|(f, b)| Matrix::vconcat(f, b))
            .collect::<Result<Vec<_>>>()?,
        None => forward.hidden.clone(),
    };
    Ok(LayerTrace {
        forward,
        backward,
        outputs,
    })
}

/// Forward pass first→last and backward pass last→first over `xs`, both
/// from zero state; output at `t` is `[h_fwd_t ; h_bwd_t]`.
pub fn brnn_layer_forward(fwd: &CellParams, bwd: &CellParams, xs: &[Matrix]) -> Result<Vec<Matrix>> {
    if fwd.kind() != bwd.kind() || fwd.input_size() != bwd.input_size() {
        return Err(shape_err(
            "brnn_layer_forward",
            "forward and backward cells of one kind and input size",
            format!("{} / {}", fwd.kind().as_str(), bwd.kind().as_str()),
        ));
    }
    let layer = LayerParams {
        forward: fwd.clone(),
        backward: Some(bwd.clone()),
    };
    Ok(layer_forward_traced(&layer, xs)?.outputs)
}

/// Runs `layers` bottom-up, each consuming the previous layer's output
/// sequence (`h^0 = x`).
pub fn deep_stack_forward(layers: &[LayerParams], xs: &[Matrix]) -> Result<Vec<Matrix>> {
    let mut seq = xs.to_vec();
    for (l, layer) in layers.iter().enumerate() {
        let expected = layer.input_size();
        if let Some(x) = seq.first() {
            if x.rows() != expected {
                return Err(shape_err(
                    "deep_stack_forward",
                    format!("layer {l} input of size {expected}"),
                    x.rows(),
                ));
            }
        }
        seq = layer_forward_traced(layer, &seq)?.outputs;
    }
    Ok(seq)
}

/// Full forward pass for any stored architecture.
pub fn network_forward(m: &ModelParameters, window: &Matrix) -> Result<(Matrix, ForwardTrace)> {
    let c = &m.config;
    if window.shape() != (c.window_length, c.input_size) {
        return Err(shape_err(
            "network_forward",
            format!("window {}x{}", c.window_length, c.input_size),
            format!("{}x{}", window.rows(), window.cols()),
        ));
    }
    if window.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("network_forward input"));
    }
    let mut seq = window_to_sequence(window);
    let mut traces = Vec::with_capacity(m.layers.len());
    for layer in &m.layers {
        let trace = layer_forward_traced(layer, &seq)?;
        seq = trace.outputs.clone();
        traces.push(trace);
    }
    let top = seq.last().ok_or(Error::EmptySequence)?;
    let mut logits = m.output_b.as_slice().to_vec();
    m.output_w.matvec_acc(top.as_slice(), &mut logits);
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("network_forward logits"));
    }
    let probs = crate::cells::column(softmax_slice(&logits));
    let trace = ForwardTrace {
        layers: traces,
        logits: crate::cells::column(logits),
        probs: probs.clone(),
    };
    Ok((probs, trace))
}

/// The Bi-LSTM → GRU → softmax classifier.
pub fn dbrnn_forward(m: &ModelParameters, window: &Matrix) -> Result<(Matrix, ForwardTrace)> {
    require_arch(m, Architecture::Bidirectional)?;
    network_forward(m, window)
}

/// The ablation without the backward LSTM.
pub fn dbrnn_forward_unidirectional(m: &ModelParameters, window: &Matrix) -> Result<(Matrix, ForwardTrace)> {
    require_arch(m, Architecture::Unidirectional)?;
    network_forward(m, window)
}

/// Class probabilities only.
pub fn predict(m: &ModelParameters, window: &Matrix) -> Result<Matrix> {
    network_forward(m, window).map(|(p, _)| p)
}

fn require_arch(m: &ModelParameters, arch: Architecture) -> Result<()> {
    let found = m.config.architecture();
    if found != arch {
        return Err(Error::InvalidConfig(format!(
            "expected the `{}` architecture, model is `{}`",
            arch.name(),
            found.name()
        )));
    }
    Ok(())
}

/// Backpropagates `dlogits` (gradient of the loss w.r.t. the logits) through
/// a traced window, accumulating into `grads`.
pub fn network_backward_acc(
    m: &ModelParameters,
    trace: &ForwardTrace,
    dlogits: &[f64],
    grads: &mut ModelParameters,
) -> Result<()> {
    let steps = trace.len();
    if steps == 0 || trace.layers.len() != m.layers.len() {
        return Err(Error::TapeMismatch("trace does not belong to this model".into()));
    }
    if dlogits.len() != m.config.num_classes {
        return Err(shape_err("network_backward", m.config.num_classes, dlogits.len()));
    }
    let top = trace.layers.last().unwrap().outputs[steps - 1].as_slice();
    grads.output_w.outer_acc(dlogits, top);
    grads.output_b.add_slice(dlogits);

    let mut d_out = vec![vec![0.0; top.len()]; steps];
    m.output_w.tmatvec_acc(dlogits, &mut d_out[steps - 1]);

    for l in (0..m.layers.len()).rev() {
        d_out = layer_backward(&m.layers[l], &trace.layers[l], &d_out, &mut grads.layers[l])?;
    }
    Ok(())
}

fn layer_backward(
    layer: &LayerParams,
    trace: &LayerTrace,
    d_out: &[Vec<f64>],
    grads: &mut LayerParams,
) -> Result<Vec<Vec<f64>>> {
    let steps = d_out.len();
    let hidden = layer.forward.hidden_size();
    let mut d_in = vec![vec![0.0; layer.input_size()]; steps];

    let mut run = |cell: &CellParams,
                   dir: &DirectionTrace,
                   grads: &mut CellParams,
                   offset: usize,
                   order: &mut dyn Iterator<Item = usize>|
     -> Result<()> {
        let mut dstate = cell.zero_state();
        for t in order {
            dstate.h.add_slice(&d_out[t][offset..offset + hidden]);
            let (dx, prev) = cell.backward_acc(&dir.tapes[t], &dstate, grads)?;
            for (a, b) in d_in[t].iter_mut().zip(&dx) {
                *a += b;
            }
            dstate = prev;
        }
        Ok(())
    };

    run(&layer.forward, &trace.forward, &mut grads.forward, 0, &mut (0..steps).rev())?;
    if let (Some(cell), Some(dir), Some(g)) = (&layer.backward, &trace.backward, &mut grads.backward) {
        run(cell, dir, g, hidden, &mut (0..steps))?;
    }
    Ok(d_in)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn window(rows: usize, cols: usize, seed: u64) -> Matrix {
        init_weights(rows, cols, InitScheme::Uniform(1.0), &mut SeededRng::new(seed))
    }

    #[test]
    fn default_config_matches_recipe() {
        let c = NetworkConfig::default();
        assert_eq!((c.input_size, c.hidden_size, c.window_length), (50, 64, 50));
        assert_eq!(c.architecture(), Architecture::Bidirectional);
        let m = ModelParameters::new(c, 1).unwrap();
        assert_eq!(m.gru().unwrap().input_size(), 128);
        m.validate().unwrap();
    }

    #[test]
    fn config_validation() {
        let mut c = NetworkConfig::new(Architecture::Bidirectional, 4, 3, 1, 5);
        assert!(c.validate().is_err());
        c.num_classes = 2;
        c.window_length = 0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn paper_scale_layer_shapes() {
        let m = ModelParameters::new(NetworkConfig::default(), 3).unwrap();
        let xs = window_to_sequence(&window(50, 50, 1));
        let out = brnn_layer_forward(&m.layers[0].forward, m.layers[0].backward.as_ref().unwrap(), &xs).unwrap();
        assert_eq!(out.len(), 50);
        assert!(out.iter().all(|h| h.shape() == (128, 1)));
    }

    #[test]
    fn zero_model_is_uniform() {
        for arch in [Architecture::Bidirectional, Architecture::Unidirectional] {
            let m = ModelParameters::zeros(NetworkConfig::new(arch, 3, 4, 3, 6)).unwrap();
            let (p, trace) = network_forward(&m, &window(6, 3, 2)).unwrap();
            assert_eq!(trace.len(), 6);
            for v in p.as_slice() {
                assert!((v - 1.0 / 3.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn entry_points_check_architecture() {
        let bi = ModelParameters::new(NetworkConfig::new(Architecture::Bidirectional, 2, 3, 2, 4), 1).unwrap();
        let uni = ModelParameters::new(NetworkConfig::new(Architecture::Unidirectional, 2, 3, 2, 4), 1).unwrap();
        let x = window(4, 2, 5);
        assert!(dbrnn_forward(&bi, &x).is_ok());
        assert!(dbrnn_forward_unidirectional(&bi, &x).is_err());
        assert!(dbrnn_forward_unidirectional(&uni, &x).is_ok());
        assert!(dbrnn_forward(&uni, &x).is_err());
        assert!(matches!(network_forward(&bi, &window(3, 2, 1)), Err(Error::Shape { .. })));
    }

    #[test]
    fn empty_sequence_rejected() {
        let m = ModelParameters::new(NetworkConfig::new(Architecture::Bidirectional, 2, 3, 2, 4), 1).unwrap();
        let l = &m.layers[0];
        assert!(matches!(
            brnn_layer_forward(&l.forward, l.backward.as_ref().unwrap(), &[]),
            Err(Error::EmptySequence)
        ));
    }

    #[test]
    fn validate_catches_gru_input_mismatch() {
        let mut m = ModelParameters::new(NetworkConfig::new(Architecture::Bidirectional, 2, 3, 2, 4), 1).unwrap();
        m.layers[1].forward = CellParams::zeros(CellKind::Gru, 3, 3);
        assert!(matches!(m.validate(), Err(Error::Validation(_))));
    }

    #[test]
    fn names_and_mut_order_agree() {
        let mut m = ModelParameters::new(NetworkConfig::new(Architecture::Bidirectional, 2, 3, 2, 4), 1).unwrap();
        let shapes: Vec<_> = m.named_matrices().iter().map(|(_, x)| x.shape()).collect();
        let shapes_mut: Vec<_> = m.matrices_mut().iter().map(|x| x.shape()).collect();
        assert_eq!(shapes, shapes_mut);
        assert_eq!(shapes.len(), 12 * 2 + 9 + 2);
        let names: std::collections::HashSet<_> = m.named_matrices().into_iter().map(|(n, _)| n).collect();
        assert_eq!(names.len(), shapes.len());
    }
}
