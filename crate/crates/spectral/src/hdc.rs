//! The HDC extension of MiniROCKET.
//!
//! Convolution outputs are bipolarized against the fitted biases and bound
//! to a fractional-power positional encoding before bundling. The encoding
//! for feature `k` at input position `t` is `cos(phi_k * s * t/(L-1))` with
//! seeded uniform phases, so the expected similarity between positions `t`
//! and `t + dt` is `sinc(s * dt/(L-1))`: scale `s` sets how fast positional
//! similarity decays along the spectrum, with the first zero at
//! `dt = (L-1)/s`. At `s = 0` every encoding value is 1 and the transform
//! reduces exactly to MiniROCKET.

use std::f64::consts::PI;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, SpectralError};
use crate::rocket::{dilated_convolve, FittedTransform, KERNEL_LEN};

/// Per-feature encoding phases plus the scale and input length they apply to.
#[derive(Debug, Clone, PartialEq)]
pub struct PositionalEncoding {
    pub phases: Vec<f64>,
    pub scale: f64,
    pub length: usize,
}

/// Phases drawn seeded-uniform from `(-pi, pi]`. Uses a dedicated RNG stream
/// so phase generation never interleaves with bias-fit sampling.
pub fn sample_phases(dim: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    (0..dim).map(|_| PI - 2.0 * PI * rng.random::<f64>()).collect()
}

/// Build the encoding for `dim` features over positions `0..length`.
pub fn make_encoding(dim: usize, length: usize, scale: f64, seed: u64) -> Result<PositionalEncoding> {
    if scale > 0.0 && length < 2 {
        return Err(SpectralError::Config(
            "positional encoding needs length >= 2 when scale > 0".into(),
        ));
    }
    if scale < 0.0 {
        return Err(SpectralError::Config("scale must be nonnegative".into()));
    }
    Ok(PositionalEncoding { phases: sample_phases(dim, seed), scale, length })
}

impl PositionalEncoding {
    /// Encoding value for feature `k` at position `t`.
    pub fn value(&self, k: usize, t: f64) -> f64 {
        if self.scale == 0.0 {
            1.0
        } else {
            (self.phases[k] * self.scale * t / (self.length - 1) as f64).cos()
        }
    }

    /// Empirical similarity between positions `0` and `dt`, averaged over
    /// features: `(1/D) * sum_k p_k(0) * p_k(dt)`. Equals 1 exactly at
    /// `dt = 0` and concentrates around `sinc(s*dt/(L-1))`.
    pub fn similarity(&self, dt: f64) -> f64 {
        let d = self.phases.len() as f64;
        (0..self.phases.len()).map(|k| self.value(k, dt)).sum::<f64>() / d
    }
}

/// Graded PPV: bundle bipolarized convolution outputs bound to one encoding
/// row, rescaled into `[0, 1]`:
///
/// `( sum_t c(t) * p_row[t] + T ) / (2T)` with `c(t) = +1` if
/// `conv_out[t] > bias` else `-1`. With `p_row` identically 1 this equals
/// plain PPV.
pub fn graded_ppv(conv_out: &[f64], bias: f64, p_row: &[f64]) -> Result<f64> {
    if conv_out.is_empty() {
        return Err(SpectralError::EmptyInput("graded_ppv over empty output".into()));
    }
    if p_row.len() != conv_out.len() {
        return Err(SpectralError::Shape(format!(
            "encoding row length {} does not match convolution length {}",
            p_row.len(),
            conv_out.len()
        )));
    }
    let t = conv_out.len() as f64;
    let bundled: f64 = conv_out
        .iter()
        .zip(p_row)
        .map(|(&v, &p)| if v > bias { p } else { -p })
        .sum();
    Ok((bundled + t) / (2.0 * t))
}

impl FittedTransform {
    /// HDC-MiniROCKET transform.
    ///
    /// Per slot the convolution output is bipolarized against the slot bias
    /// and bound to the slot's encoding row before bundling. For valid
    /// (unpadded) convolutions the encoding is evaluated at the input
    /// position under the kernel's center tap (`t + 4d`), so positions keep
    /// their band semantics. With `scale == 0` the result equals
    /// [`FittedTransform::transform`].
    pub fn hdc_transform(&self, x: &[f32]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let l = self.schedule.input_length;
        let denom = if l > 1 { (l - 1) as f64 } else { 1.0 };
        let mut features = Vec::with_capacity(self.feature_dim());
        let mut p_row = vec![1f64; l];
        for kernel in &self.kernels {
            for (e_idx, entry) in self.schedule.entries.iter().enumerate() {
                let conv_padded = if entry.padded_count > 0 {
                    Some(dilated_convolve(x, kernel, entry.dilation, true)?)
                } else {
                    None
                };
                let conv_valid = if entry.padded_count < entry.feature_count {
                    Some(dilated_convolve(x, kernel, entry.dilation, false)?)
                } else {
                    None
                };
                let center_offset = (KERNEL_LEN / 2) * entry.dilation;
                for slot in 0..entry.feature_count {
                    let k = features.len();
                    let padded = self.schedule.slot_padded(e_idx, slot);
                    let conv = if padded {
                        conv_padded.as_ref().unwrap()
                    } else {
                        conv_valid.as_ref().unwrap()
                    };
                    let start = if padded { 0 } else { center_offset };
                    if self.scale == 0.0 {
                        p_row[..conv.len()].fill(1.0);
                    } else {
                        let phase = self.encoding_phases[k];
                        for (t, p) in p_row[..conv.len()].iter_mut().enumerate() {
                            *p = (phase * self.scale * (start + t) as f64 / denom).cos();
                        }
                    }
                    features.push(graded_ppv(conv, self.biases[k], &p_row[..conv.len()])?);
                }
            }
        }
        Ok(features)
    }
}
