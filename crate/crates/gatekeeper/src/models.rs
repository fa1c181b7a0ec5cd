//! Small trainable predictors with hand-derived backpropagation: an MLP
//! classifier (plays both the small and the large model at different
//! widths) and a fixed-window next-token model for sequence experiments.

use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::numerics::{softmax_into, DenseMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative expressed via pre-activation `z` and activation `a`.
    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - a * a,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            other => Err(Error::Config(format!("unknown activation '{other}'"))),
        }
    }
}

/// Fully-connected network parameters. `weights[l]` maps layer `l`
/// (fan-in rows) to layer `l+1` (fan-out columns).
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    layer_dims: Vec<usize>,
    weights: Vec<DenseMatrix>,
    biases: Vec<Vec<f64>>,
    activation: Activation,
}

/// Cached intermediates from one forward pass, consumed by [`backward`].
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    input: DenseMatrix,
    pre_activations: Vec<DenseMatrix>,
    activations: Vec<DenseMatrix>,
    logits: DenseMatrix,
}

impl ForwardTrace {
    pub fn logits(&self) -> &DenseMatrix {
        &self.logits
    }
}

/// Gradients (and momentum buffers) share the parameter layout.
#[derive(Debug, Clone)]
pub struct MlpGradients {
    pub weights: Vec<DenseMatrix>,
    pub biases: Vec<Vec<f64>>,
}

impl MlpGradients {
    pub fn zeros_like(params: &MlpParams) -> Self {
        Self {
            weights: params
                .weights
                .iter()
                .map(|w| DenseMatrix::zeros(w.rows(), w.cols()))
                .collect(),
            biases: params.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
        }
    }

    fn is_finite(&self) -> bool {
        self.weights.iter().all(|w| w.values().iter().all(|v| v.is_finite()))
            && self.biases.iter().all(|b| b.iter().all(|v| v.is_finite()))
    }
}

/// Momentum state for [`sgd_step`].
pub type Velocity = MlpGradients;

impl MlpParams {
    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_dims.last().unwrap()
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn weights(&self) -> &[DenseMatrix] {
        &self.weights
    }

    pub fn biases(&self) -> &[Vec<f64>] {
        &self.biases
    }

    pub fn param_count(&self) -> usize {
        self.weights.iter().map(|w| w.values().len()).sum::<usize>()
            + self.biases.iter().map(|b| b.len()).sum::<usize>()
    }

    /// All parameters as one flat vector, weights before biases per layer.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend_from_slice(w.values());
            out.extend_from_slice(b);
        }
        out
    }

    /// Inverse of [`flatten`](Self::flatten).
    pub fn set_from_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::Shape(format!(
                "expected {} parameters, got {}",
                self.param_count(),
                flat.len()
            )));
        }
        let mut cursor = 0;
        for (w, b) in self.weights.iter_mut().zip(&mut self.biases) {
            let wlen = w.values().len();
            w.values_mut().copy_from_slice(&flat[cursor..cursor + wlen]);
            cursor += wlen;
            let blen = b.len();
            b.copy_from_slice(&flat[cursor..cursor + blen]);
            cursor += blen;
        }
        Ok(())
    }
}

/// Initialize an MLP with weights uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`
/// and zero biases, deterministically from the seed.
pub fn init_params(seed: u64, layer_dims: &[usize], activation: Activation) -> Result<MlpParams> {
    if layer_dims.len() < 2 {
        return Err(Error::Config(format!(
            "need at least input and output dims, got {:?}",
            layer_dims
        )));
    }
    if layer_dims.iter().any(|&d| d == 0) {
        return Err(Error::Config(format!("zero-width layer in {:?}", layer_dims)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut weights = Vec::with_capacity(layer_dims.len() - 1);
    let mut biases = Vec::with_capacity(layer_dims.len() - 1);
    for pair in layer_dims.windows(2) {
        let (fan_in, fan_out) = (pair[0], pair[1]);
        let bound = 1.0 / (fan_in as f64).sqrt();
        let values: Vec<f64> =
            (0..fan_in * fan_out).map(|_| rng.gen_range(-bound..=bound)).collect();
        weights.push(DenseMatrix::from_vec(fan_in, fan_out, values)?);
        biases.push(vec![0.0; fan_out]);
    }
    Ok(MlpParams { layer_dims: layer_dims.to_vec(), weights, biases, activation })
}

/// Forward pass over a batch (rows are examples). Returns the full trace;
/// the last layer is linear and its outputs are the logits.
pub fn forward(params: &MlpParams, batch: &DenseMatrix) -> Result<ForwardTrace> {
    if batch.cols() != params.input_dim() {
        return Err(Error::Shape(format!(
            "batch has {} features, model expects {}",
            batch.cols(),
            params.input_dim()
        )));
    }
    let layer_count = params.weights.len();
    let mut pre_activations = Vec::with_capacity(layer_count);
    let mut activations = Vec::with_capacity(layer_count.saturating_sub(1));
    let mut current = batch.clone();
    for (l, (w, b)) in params.weights.iter().zip(&params.biases).enumerate() {
        let mut z = current.matmul(w)?;
        for r in 0..z.rows() {
            let row = z.row_mut(r);
            for (v, bias) in row.iter_mut().zip(b) {
                *v += bias;
            }
        }
        pre_activations.push(z.clone());
        if l + 1 < layer_count {
            let mut a = z;
            for v in a.values_mut() {
                *v = params.activation.apply(*v);
            }
            activations.push(a.clone());
            current = a;
        } else {
            current = z;
        }
    }
    Ok(ForwardTrace {
        input: batch.clone(),
        logits: current,
        pre_activations,
        activations,
    })
}

/// Backpropagate a logit-space gradient through the trace, producing exact
/// parameter gradients of the scalar loss whose logit gradient was supplied.
pub fn backward(
    params: &MlpParams,
    trace: &ForwardTrace,
    dl_dlogits: &DenseMatrix,
) -> Result<MlpGradients> {
    let logits = &trace.logits;
    if dl_dlogits.rows() != logits.rows() || dl_dlogits.cols() != logits.cols() {
        return Err(Error::Shape(format!(
            "logit gradient is {}x{}, logits are {}x{}",
            dl_dlogits.rows(),
            dl_dlogits.cols(),
            logits.rows(),
            logits.cols()
        )));
    }
    let layer_count = params.weights.len();
    let mut grads = MlpGradients::zeros_like(params);
    let mut delta = dl_dlogits.clone();
    for l in (0..layer_count).rev() {
        let layer_input = if l == 0 { &trace.input } else { &trace.activations[l - 1] };
        grads.weights[l] = layer_input.transpose_matmul(&delta)?;
        let bias_grad = &mut grads.biases[l];
        for r in 0..delta.rows() {
            for (bg, &d) in bias_grad.iter_mut().zip(delta.row(r)) {
                *bg += d;
            }
        }
        if l > 0 {
            let mut prev = delta.matmul_transpose(&params.weights[l])?;
            let z = &trace.pre_activations[l - 1];
            let a = &trace.activations[l - 1];
            for r in 0..prev.rows() {
                let prow = prev.row_mut(r);
                let zrow = z.row(r);
                let arow = a.row(r);
                for (j, p) in prow.iter_mut().enumerate() {
                    *p *= params.activation.derivative(zrow[j], arow[j]);
                }
            }
            delta = prev;
        }
    }
    Ok(grads)
}

/// One SGD-with-momentum step: `v <- momentum*v + g; theta <- theta - lr*v`.
pub fn sgd_step(
    params: &mut MlpParams,
    grads: &MlpGradients,
    lr: f64,
    momentum: f64,
    velocity: &mut Velocity,
) -> Result<()> {
    if lr <= 0.0 || !lr.is_finite() {
        return Err(Error::Config(format!("learning rate must be positive, got {lr}")));
    }
    if !(0.0..1.0).contains(&momentum) {
        return Err(Error::Config(format!("momentum must lie in [0,1), got {momentum}")));
    }
    if !grads.is_finite() {
        return Err(Error::Numeric("non-finite gradients in sgd_step".into()));
    }
    for l in 0..params.weights.len() {
        let v = velocity.weights[l].values_mut();
        let g = grads.weights[l].values();
        let w = params.weights[l].values_mut();
        for ((vi, &gi), wi) in v.iter_mut().zip(g).zip(w) {
            *vi = momentum * *vi + gi;
            *wi -= lr * *vi;
        }
        let vb = &mut velocity.biases[l];
        let gb = &grads.biases[l];
        let b = &mut params.biases[l];
        for ((vi, &gi), bi) in vb.iter_mut().zip(gb).zip(b) {
            *vi = momentum * *vi + gi;
            *bi -= lr * *vi;
        }
    }
    Ok(())
}

/// Index of the largest logit; the lowest index wins ties.
pub fn predict_argmax(logits_row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in logits_row.iter().enumerate().skip(1) {
        if v > logits_row[best] {
            best = i;
        }
    }
    best
}

/// Fixed-window next-token model: the `context_window` previous tokens are
/// one-hot encoded and fed to an inner MLP producing vocabulary logits.
/// Context slots before the sequence start are encoded as all-zero rows,
/// so padding never aliases a real token; `bos_token` is the id the
/// deterministic sequence rules emit at the start.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenModelParams {
    vocab_size: usize,
    context_window: usize,
    bos_token: usize,
    mlp: MlpParams,
}

impl TokenModelParams {
    pub fn init(
        seed: u64,
        vocab_size: usize,
        context_window: usize,
        hidden_dims: &[usize],
        activation: Activation,
        bos_token: usize,
    ) -> Result<Self> {
        if vocab_size < 2 {
            return Err(Error::Config(format!("vocab size must be >= 2, got {vocab_size}")));
        }
        if context_window == 0 {
            return Err(Error::Config("context window must be >= 1".into()));
        }
        if bos_token >= vocab_size {
            return Err(Error::Config(format!(
                "bos token {bos_token} outside vocab of size {vocab_size}"
            )));
        }
        let mut dims = Vec::with_capacity(hidden_dims.len() + 2);
        dims.push(context_window * vocab_size);
        dims.extend_from_slice(hidden_dims);
        dims.push(vocab_size);
        Ok(Self { vocab_size, context_window, bos_token, mlp: init_params(seed, &dims, activation)? })
    }

    pub fn from_parts(
        vocab_size: usize,
        context_window: usize,
        bos_token: usize,
        mlp: MlpParams,
    ) -> Result<Self> {
        if mlp.input_dim() != context_window * vocab_size || mlp.output_dim() != vocab_size {
            return Err(Error::Shape(format!(
                "inner MLP must map {}x{} inputs to {} logits, got {:?}",
                context_window,
                vocab_size,
                vocab_size,
                mlp.layer_dims()
            )));
        }
        Ok(Self { vocab_size, context_window, bos_token, mlp })
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn context_window(&self) -> usize {
        self.context_window
    }

    pub fn bos_token(&self) -> usize {
        self.bos_token
    }

    pub fn mlp(&self) -> &MlpParams {
        &self.mlp
    }

    pub fn mlp_mut(&mut self) -> &mut MlpParams {
        &mut self.mlp
    }

    /// One-hot context rows for every position of `sequence`, teacher-forced:
    /// position `t` sees the ground-truth tokens `t-k..t`; slots before the
    /// start stay all-zero.
    pub fn context_matrix(&self, sequence: &[usize]) -> Result<DenseMatrix> {
        if sequence.is_empty() {
            return Err(Error::Shape("sequence must have at least one position".into()));
        }
        let k = self.context_window;
        let c = self.vocab_size;
        let mut mat = DenseMatrix::zeros(sequence.len(), k * c);
        for (t, &tok) in sequence.iter().enumerate() {
            if tok >= c {
                return Err(Error::Index { index: tok, len: c });
            }
            let row = mat.row_mut(t);
            for slot in 0..k {
                // slot 0 is the most recent token
                if t > slot {
                    row[slot * c + sequence[t - 1 - slot]] = 1.0;
                }
            }
        }
        Ok(mat)
    }
}

/// Teacher-forced per-position logits for one sequence (T×C).
pub fn token_forward(params: &TokenModelParams, sequence: &[usize]) -> Result<DenseMatrix> {
    let contexts = params.context_matrix(sequence)?;
    Ok(forward(&params.mlp, &contexts)?.logits().clone())
}

/// Row-wise softmax of a logits matrix.
pub fn softmax_rows(logits: &DenseMatrix) -> DenseMatrix {
    let mut out = DenseMatrix::zeros(logits.rows(), logits.cols());
    for r in 0..logits.rows() {
        softmax_into(logits.row(r), out.row_mut(r));
    }
    out
}

// --- checkpoint container ----------------------------------------------
//
// Versioned little-endian binary layout (documented in the README):
//   magic "GKCK" | u32 version | u8 kind (0 classifier, 1 token model)
//   [token model only] u32 vocab, u32 context_window, u32 bos_token
//   u8 activation (0 relu, 1 tanh) | u32 layer_count | u32 dims...
//   per weight layer: f64 row-major weights (fan_in*fan_out), f64 biases (fan_out)

const CHECKPOINT_MAGIC: &[u8; 4] = b"GKCK";
const CHECKPOINT_VERSION: u32 = 1;

/// A saved model: either a plain classifier or a token model.
#[derive(Debug, Clone, PartialEq)]
pub enum Checkpoint {
    Classifier(MlpParams),
    TokenModel(TokenModelParams),
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        buf.extend_from_slice(CHECKPOINT_MAGIC);
        buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        let mlp = match self {
            Checkpoint::Classifier(mlp) => {
                buf.push(0u8);
                mlp
            }
            Checkpoint::TokenModel(tm) => {
                buf.push(1u8);
                buf.extend_from_slice(&(tm.vocab_size as u32).to_le_bytes());
                buf.extend_from_slice(&(tm.context_window as u32).to_le_bytes());
                buf.extend_from_slice(&(tm.bos_token as u32).to_le_bytes());
                &tm.mlp
            }
        };
        buf.push(match mlp.activation {
            Activation::Relu => 0u8,
            Activation::Tanh => 1u8,
        });
        buf.extend_from_slice(&(mlp.layer_dims.len() as u32).to_le_bytes());
        for &d in &mlp.layer_dims {
            buf.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for (w, b) in mlp.weights.iter().zip(&mlp.biases) {
            for v in w.values() {
                buf.extend_from_slice(&v.to_le_bytes());
            }
            for v in b {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        let mut file = std::fs::File::create(path)?;
        file.write_all(&buf)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        let mut reader = ByteReader { bytes: &bytes, offset: 0 };
        let magic = reader.take(4)?;
        if magic != CHECKPOINT_MAGIC {
            return Err(Error::Parse(format!(
                "bad checkpoint magic {:02x?} at offset 0 in {}",
                magic,
                path.display()
            )));
        }
        let version = reader.read_u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Parse(format!(
                "unsupported checkpoint version {version} (expected {CHECKPOINT_VERSION})"
            )));
        }
        let kind = reader.read_u8()?;
        let token_header = if kind == 1 {
            Some((reader.read_u32()? as usize, reader.read_u32()? as usize, reader.read_u32()? as usize))
        } else if kind == 0 {
            None
        } else {
            return Err(Error::Parse(format!(
                "unknown checkpoint kind {kind} at offset {}",
                reader.offset - 1
            )));
        };
        let activation = match reader.read_u8()? {
            0 => Activation::Relu,
            1 => Activation::Tanh,
            other => {
                return Err(Error::Parse(format!(
                    "unknown activation tag {other} at offset {}",
                    reader.offset - 1
                )))
            }
        };
        let layer_count = reader.read_u32()? as usize;
        if layer_count < 2 {
            return Err(Error::Parse(format!("checkpoint declares {layer_count} layer dims")));
        }
        let mut layer_dims = Vec::with_capacity(layer_count);
        for _ in 0..layer_count {
            layer_dims.push(reader.read_u32()? as usize);
        }
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for pair in layer_dims.windows(2) {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let mut values = Vec::with_capacity(fan_in * fan_out);
            for _ in 0..fan_in * fan_out {
                values.push(reader.read_f64()?);
            }
            weights.push(DenseMatrix::from_vec(fan_in, fan_out, values)?);
            let mut b = Vec::with_capacity(fan_out);
            for _ in 0..fan_out {
                b.push(reader.read_f64()?);
            }
            biases.push(b);
        }
        if reader.offset != bytes.len() {
            return Err(Error::Parse(format!(
                "{} trailing bytes at offset {}",
                bytes.len() - reader.offset,
                reader.offset
            )));
        }
        let mlp = MlpParams { layer_dims, weights, biases, activation };
        match token_header {
            None => Ok(Checkpoint::Classifier(mlp)),
            Some((vocab, k, bos)) => {
                Ok(Checkpoint::TokenModel(TokenModelParams::from_parts(vocab, k, bos, mlp)?))
            }
        }
    }
}

struct ByteReader<'a> {
    bytes: &'a [u8],
    offset: usize,
}

impl<'a> ByteReader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.offset + n > self.bytes.len() {
            return Err(Error::Parse(format!(
                "truncated: needed {n} bytes at offset {}, file has {}",
                self.offset,
                self.bytes.len()
            )));
        }
        let s = &self.bytes[self.offset..self.offset + n];
        self.offset += n;
        Ok(s)
    }

    fn read_u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn read_u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn read_f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{cross_entropy, finite_diff_gradient, gradient_relative_error, softmax};

    fn ce_mean_loss(params: &MlpParams, batch: &DenseMatrix, labels: &[usize]) -> f64 {
        let trace = forward(params, batch).unwrap();
        let mut total = 0.0;
        for (r, &y) in labels.iter().enumerate() {
            let p = softmax(trace.logits().row(r)).unwrap();
            total += cross_entropy(&p, y).unwrap();
        }
        total / labels.len() as f64
    }

    fn ce_logit_gradient(trace: &ForwardTrace, labels: &[usize]) -> DenseMatrix {
        let n = labels.len() as f64;
        let mut grad = softmax_rows(trace.logits());
        for (r, &y) in labels.iter().enumerate() {
            let row = grad.row_mut(r);
            row[y] -= 1.0;
            for v in row.iter_mut() {
                *v /= n;
            }
        }
        grad
    }

    #[test]
    fn init_is_deterministic_and_shaped() {
        let a = init_params(7, &[2, 3, 2], Activation::Relu).unwrap();
        let b = init_params(7, &[2, 3, 2], Activation::Relu).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.weights()[0].rows(), 2);
        assert_eq!(a.weights()[0].cols(), 3);
        assert_eq!(a.weights()[1].rows(), 3);
        assert_eq!(a.weights()[1].cols(), 2);
        assert!(a.biases().iter().all(|b| b.iter().all(|&v| v == 0.0)));
        let c = init_params(8, &[2, 3, 2], Activation::Relu).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn init_rejects_bad_dims() {
        assert!(init_params(0, &[4], Activation::Relu).is_err());
        assert!(init_params(0, &[4, 0, 2], Activation::Relu).is_err());
    }

    #[test]
    fn forward_zero_params_gives_uniform() {
        let mut params = init_params(1, &[3, 4, 5], Activation::Relu).unwrap();
        let zeros = vec![0.0; params.param_count()];
        params.set_from_flat(&zeros).unwrap();
        let batch = DenseMatrix::from_vec(2, 3, vec![1.0, -2.0, 0.5, 0.0, 0.0, 3.0]).unwrap();
        let trace = forward(&params, &batch).unwrap();
        for r in 0..2 {
            assert!(trace.logits().row(r).iter().all(|&v| v == 0.0));
            let p = softmax(trace.logits().row(r)).unwrap();
            assert!(p.probs().iter().all(|&v| (v - 0.2).abs() < 1e-12));
        }
    }

    #[test]
    fn forward_empty_batch() {
        let params = init_params(1, &[3, 4, 2], Activation::Tanh).unwrap();
        let batch = DenseMatrix::zeros(0, 3);
        let trace = forward(&params, &batch).unwrap();
        assert_eq!(trace.logits().rows(), 0);
        assert_eq!(trace.logits().cols(), 2);
    }

    #[test]
    fn single_linear_layer_with_identity_weights() {
        let mut params = init_params(1, &[2, 2], Activation::Relu).unwrap();
        let mut flat = vec![0.0; params.param_count()];
        flat[0] = 1.0; // w[0][0]
        flat[3] = 1.0; // w[1][1]
        params.set_from_flat(&flat).unwrap();
        let batch = DenseMatrix::from_vec(1, 2, vec![0.3, -1.7]).unwrap();
        let trace = forward(&params, &batch).unwrap();
        assert_eq!(trace.logits().row(0), &[0.3, -1.7]);
    }

    #[test]
    fn forward_shape_mismatch() {
        let params = init_params(1, &[3, 2], Activation::Relu).unwrap();
        let batch = DenseMatrix::zeros(1, 4);
        assert!(matches!(forward(&params, &batch), Err(Error::Shape(_))));
    }

    #[test]
    fn backward_zero_logit_gradient() {
        let params = init_params(3, &[2, 4, 3], Activation::Tanh).unwrap();
        let batch = DenseMatrix::from_vec(2, 2, vec![0.1, 0.2, -0.3, 0.4]).unwrap();
        let trace = forward(&params, &batch).unwrap();
        let grads = backward(&params, &trace, &DenseMatrix::zeros(2, 3)).unwrap();
        assert!(grads.weights.iter().all(|w| w.values().iter().all(|&v| v == 0.0)));
        assert!(grads.biases.iter().all(|b| b.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn backward_matches_finite_differences() {
        for &activation in &[Activation::Relu, Activation::Tanh] {
            let params = init_params(11, &[3, 6, 5, 4], activation).unwrap();
            let batch = DenseMatrix::from_vec(
                3,
                3,
                vec![0.3, -1.2, 0.8, 1.5, 0.2, -0.7, -0.4, 0.9, 0.1],
            )
            .unwrap();
            let labels = [0usize, 2, 3];

            let trace = forward(&params, &batch).unwrap();
            let analytic =
                backward(&params, &trace, &ce_logit_gradient(&trace, &labels)).unwrap();

            let theta = params.flatten();
            let mut scratch = params.clone();
            let numeric = finite_diff_gradient(
                |t| {
                    scratch.set_from_flat(t).unwrap();
                    ce_mean_loss(&scratch, &batch, &labels)
                },
                &theta,
                1e-5,
            )
            .unwrap();

            let flat_analytic = {
                let holder = MlpParams {
                    layer_dims: params.layer_dims.clone(),
                    weights: analytic.weights.clone(),
                    biases: analytic.biases.clone(),
                    activation,
                };
                holder.flatten()
            };
            let max_rel = flat_analytic
                .iter()
                .zip(&numeric)
                .map(|(&a, &n)| gradient_relative_error(a, n))
                .fold(0.0, f64::max);
            assert!(max_rel < 1e-4, "max rel err {max_rel} for {activation:?}");
        }
    }

    #[test]
    fn batch_gradient_is_sum_of_singletons() {
        let params = init_params(5, &[2, 4, 3], Activation::Tanh).unwrap();
        let rows = [vec![0.4, -0.9], vec![1.1, 0.3]];
        let labels = [1usize, 2];

        // unnormalized CE so the batch loss is the literal sum
        let logit_grad = |trace: &ForwardTrace, labels: &[usize]| {
            let mut g = softmax_rows(trace.logits());
            for (r, &y) in labels.iter().enumerate() {
                *g.at_mut(r, y) -= 1.0;
            }
            g
        };

        let batch =
            DenseMatrix::from_vec(2, 2, rows.iter().flatten().cloned().collect()).unwrap();
        let trace = forward(&params, &batch).unwrap();
        let full = backward(&params, &trace, &logit_grad(&trace, &labels)).unwrap();

        let mut summed = MlpGradients::zeros_like(&params);
        for (row, &y) in rows.iter().zip(&labels) {
            let single = DenseMatrix::from_vec(1, 2, row.clone()).unwrap();
            let tr = forward(&params, &single).unwrap();
            let g = backward(&params, &tr, &logit_grad(&tr, &[y])).unwrap();
            for l in 0..summed.weights.len() {
                for (s, v) in summed.weights[l].values_mut().iter_mut().zip(g.weights[l].values())
                {
                    *s += v;
                }
                for (s, v) in summed.biases[l].iter_mut().zip(&g.biases[l]) {
                    *s += v;
                }
            }
        }
        for l in 0..full.weights.len() {
            for (a, b) in full.weights[l].values().iter().zip(summed.weights[l].values()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn sgd_plain_and_momentum() {
        // f(theta) = theta^2 with lr 0.1 from theta=1: two steps land on 0.64
        let mut params = init_params(1, &[1, 1], Activation::Relu).unwrap();
        params.set_from_flat(&[1.0, 0.0]).unwrap();
        let mut velocity = Velocity::zeros_like(&params);
        for _ in 0..2 {
            let theta = params.flatten()[0];
            let grads = MlpGradients {
                weights: vec![DenseMatrix::from_vec(1, 1, vec![2.0 * theta]).unwrap()],
                biases: vec![vec![0.0]],
            };
            sgd_step(&mut params, &grads, 0.1, 0.0, &mut velocity).unwrap();
        }
        assert!((params.flatten()[0] - 0.64).abs() < 1e-12);

        // zero gradient leaves parameters untouched
        let before = params.clone();
        let zero = MlpGradients::zeros_like(&params);
        let mut v = Velocity::zeros_like(&params);
        sgd_step(&mut params, &zero, 0.5, 0.9, &mut v).unwrap();
        assert_eq!(before, params);
    }

    #[test]
    fn sgd_rejects_bad_inputs() {
        let mut params = init_params(1, &[2, 2], Activation::Relu).unwrap();
        let grads = MlpGradients::zeros_like(&params);
        let mut v = Velocity::zeros_like(&params);
        assert!(sgd_step(&mut params, &grads, 0.0, 0.0, &mut v).is_err());
        assert!(sgd_step(&mut params, &grads, 0.1, 1.0, &mut v).is_err());
        let mut bad = MlpGradients::zeros_like(&params);
        *bad.weights[0].values_mut().first_mut().unwrap() = f64::NAN;
        assert!(matches!(sgd_step(&mut params, &bad, 0.1, 0.0, &mut v), Err(Error::Numeric(_))));
    }

    #[test]
    fn argmax_tie_breaks_low() {
        assert_eq!(predict_argmax(&[0.1, 0.9]), 1);
        assert_eq!(predict_argmax(&[0.5, 0.5]), 0);
        let shifted: Vec<f64> = [0.5, 0.5].iter().map(|v| v + 3.0).collect();
        assert_eq!(predict_argmax(&shifted), 0);
    }

    #[test]
    fn token_forward_bos_padding_and_causality() {
        let tm = TokenModelParams::init(9, 5, 3, &[8], Activation::Relu, 0).unwrap();
        // T=1 uses BOS padding only
        let single = token_forward(&tm, &[2]).unwrap();
        assert_eq!(single.rows(), 1);
        assert_eq!(single.cols(), 5);

        // editing tokens after position t leaves logits at <= t unchanged
        let a = token_forward(&tm, &[2, 4, 1, 3]).unwrap();
        let b = token_forward(&tm, &[2, 4, 0, 0]).unwrap();
        for t in 0..2 {
            assert_eq!(a.row(t), b.row(t));
        }
        assert_ne!(a.row(3), b.row(3));
    }

    #[test]
    fn token_forward_zero_weights_uniform() {
        let mut tm = TokenModelParams::init(9, 4, 2, &[6], Activation::Relu, 1).unwrap();
        let zeros = vec![0.0; tm.mlp().param_count()];
        tm.mlp_mut().set_from_flat(&zeros).unwrap();
        let logits = token_forward(&tm, &[0, 3, 2]).unwrap();
        for t in 0..3 {
            let p = softmax(logits.row(t)).unwrap();
            assert!(p.probs().iter().all(|&v| (v - 0.25).abs() < 1e-12));
        }
    }

    #[test]
    fn token_forward_rejects_out_of_vocab() {
        let tm = TokenModelParams::init(9, 4, 2, &[6], Activation::Relu, 0).unwrap();
        assert!(matches!(token_forward(&tm, &[0, 4]), Err(Error::Index { index: 4, len: 4 })));
    }

    #[test]
    fn checkpoint_round_trip_is_bit_identical() {
        let dir = tempfile::tempdir().unwrap();
        let mlp = init_params(21, &[4, 7, 3], Activation::Tanh).unwrap();
        let path = dir.path().join("clf.bin");
        Checkpoint::Classifier(mlp.clone()).save(&path).unwrap();
        match Checkpoint::load(&path).unwrap() {
            Checkpoint::Classifier(loaded) => assert_eq!(loaded, mlp),
            _ => panic!("wrong kind"),
        }

        let tm = TokenModelParams::init(5, 6, 3, &[10], Activation::Relu, 2).unwrap();
        let tpath = dir.path().join("tok.bin");
        Checkpoint::TokenModel(tm.clone()).save(&tpath).unwrap();
        match Checkpoint::load(&tpath).unwrap() {
            Checkpoint::TokenModel(loaded) => assert_eq!(loaded, tm),
            _ => panic!("wrong kind"),
        }
    }

    #[test]
    fn checkpoint_rejects_corruption() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.bin");
        let mlp = init_params(2, &[2, 3], Activation::Relu).unwrap();
        Checkpoint::Classifier(mlp).save(&path).unwrap();

        let mut bytes = std::fs::read(&path).unwrap();
        bytes[0] = b'X';
        let bad = dir.path().join("bad_magic.bin");
        std::fs::write(&bad, &bytes).unwrap();
        assert!(matches!(Checkpoint::load(&bad), Err(Error::Parse(_))));

        let good = std::fs::read(&path).unwrap();
        let truncated = dir.path().join("trunc.bin");
        std::fs::write(&truncated, &good[..good.len() - 5]).unwrap();
        let err = Checkpoint::load(&truncated).unwrap_err();
        assert!(err.to_string().contains("offset"), "{err}");
    }
}
