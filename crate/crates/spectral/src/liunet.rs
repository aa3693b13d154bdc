//! A small 1D CNN for spectral classification.
//!
//! Up to four stages of same-padded 1D convolution (kernel size 6, widths
//! 6/12/18/24), each followed by ReLU and max pooling of size 2, then a
//! flatten and a single dense softmax head. Short spectra drop trailing
//! stages so the pooled feature map never collapses to zero length. Forward
//! and backward passes are hand-written; gradients are exact.

use std::io::{Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, SpectralError};

pub const KERNEL_SIZE: usize = 6;
pub const POOL_SIZE: usize = 2;
pub const STAGE_WIDTHS: [usize; 4] = [6, 12, 18, 24];
/// Left pad of the centered "same" convolution; right pad is one larger
/// because the kernel size is even.
const PAD_LEFT: usize = (KERNEL_SIZE - 1) / 2;

/// One convolution layer: weights indexed `[out][in][tap]`, flat.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer {
    pub in_ch: usize,
    pub out_ch: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl ConvLayer {
    fn zeros(in_ch: usize, out_ch: usize) -> Self {
        ConvLayer {
            in_ch,
            out_ch,
            weights: vec![0.0; out_ch * in_ch * KERNEL_SIZE],
            biases: vec![0.0; out_ch],
        }
    }

    #[inline]
    fn w(&self, o: usize, i: usize, j: usize) -> f64 {
        self.weights[(o * self.in_ch + i) * KERNEL_SIZE + j]
    }
}

/// All parameters of the network plus its architecture metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct LiuNetParams {
    pub conv: Vec<ConvLayer>,
    /// Dense weights, `[flat_dim][class]` flat.
    pub dense_w: Vec<f64>,
    pub dense_b: Vec<f64>,
    pub input_len: usize,
    pub class_count: usize,
}

/// Largest depth in `1..=4` whose stage ladder (same-padded conv, pool /2
/// with floor) keeps the feature map length at least 1.
pub fn adapt_depth(input_len: usize) -> Result<usize> {
    if input_len < 2 {
        return Err(SpectralError::Config(format!(
            "input length {input_len} cannot support any conv+pool stage"
        )));
    }
    let mut len = input_len;
    let mut depth = 0;
    while depth < STAGE_WIDTHS.len() && len / POOL_SIZE >= 1 {
        len /= POOL_SIZE;
        depth += 1;
    }
    Ok(depth)
}

/// Channel count and length after each stage, for a given depth.
pub fn trace_shapes(input_len: usize, depth: usize) -> Vec<(usize, usize)> {
    let mut shapes = Vec::with_capacity(depth);
    let mut len = input_len;
    for &width in STAGE_WIDTHS.iter().take(depth) {
        len /= POOL_SIZE; // same-padded conv keeps the length, pooling halves it
        shapes.push((width, len));
    }
    shapes
}

impl LiuNetParams {
    /// Seeded initialization: uniform in `(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
    pub fn init(input_len: usize, class_count: usize, seed: u64) -> Result<Self> {
        let depth = adapt_depth(input_len)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut conv = Vec::with_capacity(depth);
        let mut in_ch = 1;
        for &out_ch in STAGE_WIDTHS.iter().take(depth) {
            let mut layer = ConvLayer::zeros(in_ch, out_ch);
            let bound = 1.0 / ((in_ch * KERNEL_SIZE) as f64).sqrt();
            for w in layer.weights.iter_mut() {
                *w = (rng.random::<f64>() * 2.0 - 1.0) * bound;
            }
            for b in layer.biases.iter_mut() {
                *b = (rng.random::<f64>() * 2.0 - 1.0) * bound;
            }
            conv.push(layer);
            in_ch = out_ch;
        }
        let shapes = trace_shapes(input_len, depth);
        let (last_ch, last_len) = *shapes.last().expect("depth >= 1");
        let flat_dim = last_ch * last_len;
        let bound = 1.0 / (flat_dim as f64).sqrt();
        let dense_w: Vec<f64> =
            (0..flat_dim * class_count).map(|_| (rng.random::<f64>() * 2.0 - 1.0) * bound).collect();
        let dense_b: Vec<f64> =
            (0..class_count).map(|_| (rng.random::<f64>() * 2.0 - 1.0) * bound).collect();
        Ok(LiuNetParams { conv, dense_w, dense_b, input_len, class_count })
    }

    pub fn depth(&self) -> usize {
        self.conv.len()
    }

    pub fn flat_dim(&self) -> usize {
        self.dense_w.len() / self.class_count
    }

    /// Exact count of all weights and biases.
    pub fn param_count(&self) -> usize {
        self.conv
            .iter()
            .map(|l| l.weights.len() + l.biases.len())
            .sum::<usize>()
            + self.dense_w.len()
            + self.dense_b.len()
    }

    /// Zero-valued parameter set with the same architecture; the gradient
    /// container for [`backward`].
    pub fn zeros_like(&self) -> LiuNetParams {
        LiuNetParams {
            conv: self.conv.iter().map(|l| ConvLayer::zeros(l.in_ch, l.out_ch)).collect(),
            dense_w: vec![0.0; self.dense_w.len()],
            dense_b: vec![0.0; self.dense_b.len()],
            input_len: self.input_len,
            class_count: self.class_count,
        }
    }

    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for layer in &self.conv {
            out.extend_from_slice(&layer.weights);
            out.extend_from_slice(&layer.biases);
        }
        out.extend_from_slice(&self.dense_w);
        out.extend_from_slice(&self.dense_b);
        out
    }

    pub fn set_flat(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.param_count());
        let mut at = 0;
        for layer in self.conv.iter_mut() {
            let nw = layer.weights.len();
            layer.weights.copy_from_slice(&flat[at..at + nw]);
            at += nw;
            let nb = layer.biases.len();
            layer.biases.copy_from_slice(&flat[at..at + nb]);
            at += nb;
        }
        let nd = self.dense_w.len();
        self.dense_w.copy_from_slice(&flat[at..at + nd]);
        at += nd;
        self.dense_b.copy_from_slice(&flat[at..]);
    }

    /// Checkpoint layout (little-endian):
    ///
    /// ```text
    /// magic b"SLNW", version u32 = 1,
    /// input_len u64, class_count u64, depth u64,
    /// parameters f64 in flat order (conv weights+biases per stage,
    /// dense weights, dense biases)
    /// ```
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        w.write_all(b"SLNW")?;
        w.write_u32::<LittleEndian>(1)?;
        w.write_u64::<LittleEndian>(self.input_len as u64)?;
        w.write_u64::<LittleEndian>(self.class_count as u64)?;
        w.write_u64::<LittleEndian>(self.depth() as u64)?;
        for v in self.flat() {
            w.write_f64::<LittleEndian>(v)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut r = std::io::BufReader::new(std::fs::File::open(path)?);
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != b"SLNW" {
            return Err(SpectralError::Format("bad checkpoint magic".into()));
        }
        let version = r.read_u32::<LittleEndian>()?;
        if version != 1 {
            return Err(SpectralError::Format(format!("unsupported checkpoint version {version}")));
        }
        let input_len = r.read_u64::<LittleEndian>()? as usize;
        let class_count = r.read_u64::<LittleEndian>()? as usize;
        let depth = r.read_u64::<LittleEndian>()? as usize;
        if depth == 0 || depth > STAGE_WIDTHS.len() || adapt_depth(input_len)? != depth {
            return Err(SpectralError::Format(format!(
                "checkpoint depth {depth} inconsistent with input length {input_len}"
            )));
        }
        let mut params = LiuNetParams::init(input_len, class_count, 0)?;
        let mut flat = vec![0f64; params.param_count()];
        r.read_f64_into::<LittleEndian>(&mut flat)
            .map_err(|e| SpectralError::Format(format!("checkpoint truncated: {e}")))?;
        params.set_flat(&flat);
        Ok(params)
    }
}

/// Intermediate activations kept for the backward pass.
pub struct ForwardCache {
    /// Stage inputs, `[ch][len]` flat; `inputs[0]` is the spectrum itself.
    inputs: Vec<Vec<f64>>,
    /// Pre-activation conv outputs per stage.
    preacts: Vec<Vec<f64>>,
    /// Argmax source index (into the post-ReLU map) per pooled element.
    pool_argmax: Vec<Vec<usize>>,
    /// Flattened final feature map.
    flat: Vec<f64>,
    lengths: Vec<usize>,
}

fn conv_same(layer: &ConvLayer, input: &[f64], len: usize) -> Vec<f64> {
    let mut out = vec![0f64; layer.out_ch * len];
    for o in 0..layer.out_ch {
        let row = &mut out[o * len..(o + 1) * len];
        for v in row.iter_mut() {
            *v = layer.biases[o];
        }
        for i in 0..layer.in_ch {
            let x = &input[i * len..(i + 1) * len];
            for j in 0..KERNEL_SIZE {
                let w = layer.w(o, i, j);
                // t + j - PAD_LEFT must fall inside the input
                let t_lo = PAD_LEFT.saturating_sub(j);
                let t_hi = (len + PAD_LEFT).saturating_sub(j).min(len);
                for (t, v) in row.iter_mut().enumerate().take(t_hi).skip(t_lo) {
                    *v += w * x[t + j - PAD_LEFT];
                }
            }
        }
    }
    out
}

/// Forward pass. Returns logits and the cache needed by [`backward`].
pub fn forward(params: &LiuNetParams, x: &[f64]) -> Result<(Vec<f64>, ForwardCache)> {
    if x.len() != params.input_len {
        return Err(SpectralError::Shape(format!(
            "input length {} does not match network input {}",
            x.len(),
            params.input_len
        )));
    }
    let mut cache = ForwardCache {
        inputs: vec![x.to_vec()],
        preacts: Vec::new(),
        pool_argmax: Vec::new(),
        flat: Vec::new(),
        lengths: vec![x.len()],
    };
    let mut current = x.to_vec();
    let mut len = x.len();
    for layer in &params.conv {
        let preact = conv_same(layer, &current, len);
        let pooled_len = len / POOL_SIZE;
        let mut pooled = vec![0f64; layer.out_ch * pooled_len];
        let mut argmax = vec![0usize; layer.out_ch * pooled_len];
        for o in 0..layer.out_ch {
            for t in 0..pooled_len {
                let mut best_idx = o * len + t * POOL_SIZE;
                let mut best = preact[best_idx].max(0.0);
                for k in 1..POOL_SIZE {
                    let idx = o * len + t * POOL_SIZE + k;
                    let v = preact[idx].max(0.0);
                    if v > best {
                        best = v;
                        best_idx = idx;
                    }
                }
                pooled[o * pooled_len + t] = best;
                argmax[o * pooled_len + t] = best_idx;
            }
        }
        cache.preacts.push(preact);
        cache.pool_argmax.push(argmax);
        cache.inputs.push(pooled.clone());
        cache.lengths.push(pooled_len);
        current = pooled;
        len = pooled_len;
    }
    cache.flat = current;
    let c = params.class_count;
    let mut logits = params.dense_b.clone();
    for (f, &v) in cache.flat.iter().enumerate() {
        for (j, logit) in logits.iter_mut().enumerate() {
            *logit += params.dense_w[f * c + j] * v;
        }
    }
    Ok((logits, cache))
}

/// Exact analytic gradients of the loss w.r.t. all parameters, given the
/// upstream gradient w.r.t. the logits.
pub fn backward(
    params: &LiuNetParams,
    cache: &ForwardCache,
    dlogits: &[f64],
) -> Result<LiuNetParams> {
    if dlogits.len() != params.class_count {
        return Err(SpectralError::Shape(format!(
            "dlogits length {} does not match class count {}",
            dlogits.len(),
            params.class_count
        )));
    }
    let mut grads = params.zeros_like();
    let c = params.class_count;

    // Dense layer: dW = outer(flat, dlogits), dflat = W . dlogits.
    let mut dflat = vec![0f64; cache.flat.len()];
    for (f, &v) in cache.flat.iter().enumerate() {
        for j in 0..c {
            grads.dense_w[f * c + j] += v * dlogits[j];
            dflat[f] += params.dense_w[f * c + j] * dlogits[j];
        }
    }
    grads.dense_b.copy_from_slice(dlogits);

    // Stages in reverse: unpool (route to argmax), ReLU mask, conv backward.
    let mut dout = dflat;
    for (stage, layer) in params.conv.iter().enumerate().rev() {
        let len = cache.lengths[stage];
        let preact = &cache.preacts[stage];
        let argmax = &cache.pool_argmax[stage];

        let mut dpre = vec![0f64; layer.out_ch * len];
        for (p, &src) in argmax.iter().enumerate() {
            if preact[src] > 0.0 {
                dpre[src] += dout[p];
            }
        }

        let input = &cache.inputs[stage];
        let mut dinput = vec![0f64; layer.in_ch * len];
        let glayer = &mut grads.conv[stage];
        for o in 0..layer.out_ch {
            let drow = &dpre[o * len..(o + 1) * len];
            glayer.biases[o] += drow.iter().sum::<f64>();
            for i in 0..layer.in_ch {
                let x = &input[i * len..(i + 1) * len];
                let dx = &mut dinput[i * len..(i + 1) * len];
                for j in 0..KERNEL_SIZE {
                    let t_lo = PAD_LEFT.saturating_sub(j);
                    let t_hi = (len + PAD_LEFT).saturating_sub(j).min(len);
                    let mut acc = 0f64;
                    let w = layer.w(o, i, j);
                    for t in t_lo..t_hi {
                        let src = t + j - PAD_LEFT;
                        acc += drow[t] * x[src];
                        dx[src] += w * drow[t];
                    }
                    glayer.weights[(o * layer.in_ch + i) * KERNEL_SIZE + j] += acc;
                }
            }
        }
        dout = dinput;
    }
    Ok(grads)
}
