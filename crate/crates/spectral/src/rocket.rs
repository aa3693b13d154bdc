//! The MiniROCKET feature transform.
//!
//! A fixed set of 84 length-9 kernels (all placements of three `+2` taps
//! among six `-1` taps) is convolved with the input at a geometric ladder of
//! dilations. Each kernel owns 119 feature slots spread over the dilations,
//! half padded ("same" output length) and half valid. Every slot has a bias
//! fitted from the convolution outputs of the first training batch; the
//! feature value is the proportion of convolution outputs above that bias
//! (PPV). The result is a 9996-dimensional vector per spectrum regardless of
//! input length.

use std::io::{Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, SpectralError};

pub const KERNEL_LEN: usize = 9;
pub const NUM_KERNELS: usize = 84;
pub const FEATURES_PER_KERNEL: usize = 119;
pub const FEATURE_DIM: usize = NUM_KERNELS * FEATURES_PER_KERNEL; // 9996

/// Fractional part of the golden ratio, spacing the bias quantiles.
const GOLDEN_FRAC: f64 = 0.618_033_988_749_894_9;

/// One engineered kernel: nine taps in `{-1, +2}` with exactly three `+2`s.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KernelSpec {
    pub weights: [i8; KERNEL_LEN],
}

/// All 84 kernels, ordered lexicographically by their `+2` position triple.
/// Deterministic; no randomness involved.
pub fn build_kernel_set() -> Vec<KernelSpec> {
    let mut kernels = Vec::with_capacity(NUM_KERNELS);
    for a in 0..KERNEL_LEN {
        for b in (a + 1)..KERNEL_LEN {
            for c in (b + 1)..KERNEL_LEN {
                let mut weights = [-1i8; KERNEL_LEN];
                weights[a] = 2;
                weights[b] = 2;
                weights[c] = 2;
                kernels.push(KernelSpec { weights });
            }
        }
    }
    debug_assert_eq!(kernels.len(), NUM_KERNELS);
    kernels
}

/// One dilation level: how many of a kernel's 119 slots it carries and how
/// many of those use padded convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScheduleEntry {
    pub dilation: usize,
    pub feature_count: usize,
    pub padded_count: usize,
}

/// Dilation ladder for one input length, shared by all kernels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DilationSchedule {
    pub input_length: usize,
    pub entries: Vec<ScheduleEntry>,
}

impl DilationSchedule {
    /// Build the ladder for input length `L`.
    ///
    /// 119 exponents are spaced evenly over `[0, log2(max(L-1, 8)/8)]`; the
    /// floored powers of two collapse into distinct dilations, each keeping
    /// its multiplicity as `feature_count`. This caps every dilation at
    /// `(L-1)/8`, so valid convolution stays feasible whenever `L >= 9`.
    pub fn new(input_length: usize) -> Self {
        assert!(input_length >= 1, "input length must be positive");
        let base = input_length.saturating_sub(1).max(8) as f64;
        let max_exp = (base / 8.0).log2();
        let mut entries: Vec<ScheduleEntry> = Vec::new();
        for j in 0..FEATURES_PER_KERNEL {
            let exp = max_exp * j as f64 / (FEATURES_PER_KERNEL - 1) as f64;
            let dilation = (2f64.powf(exp).floor() as usize).max(1);
            match entries.last_mut() {
                Some(last) if last.dilation == dilation => last.feature_count += 1,
                _ => entries.push(ScheduleEntry { dilation, feature_count: 1, padded_count: 0 }),
            }
        }
        for entry in entries.iter_mut() {
            entry.padded_count = if valid_feasible(input_length, entry.dilation) {
                // Alternate padded/valid, starting padded.
                entry.feature_count.div_ceil(2)
            } else {
                entry.feature_count
            };
        }
        DilationSchedule { input_length, entries }
    }

    /// Whether slot `slot` of `entry` uses padded convolution. Padded slots
    /// come at even positions unless the entry is entirely padded.
    pub fn slot_padded(&self, entry: usize, slot: usize) -> bool {
        let e = &self.entries[entry];
        if e.padded_count == e.feature_count {
            true
        } else {
            slot.is_multiple_of(2) && slot / 2 < e.padded_count
        }
    }

    pub fn total_features(&self) -> usize {
        self.entries.iter().map(|e| e.feature_count).sum()
    }

    pub fn max_dilation(&self) -> usize {
        self.entries.iter().map(|e| e.dilation).max().unwrap_or(1)
    }
}

fn valid_feasible(input_length: usize, dilation: usize) -> bool {
    input_length > (KERNEL_LEN - 1) * dilation
}

/// Dilated convolution of a spectrum with one kernel.
///
/// Valid mode: `out[t] = sum_j w_j * x[t + j*d]`, length `L - 8d`.
/// Padded mode: centered zero padding, `out[t] = sum_j w_j * x[t + (j-4)*d]`
/// with out-of-range taps contributing zero, length `L`.
pub fn dilated_convolve(
    x: &[f32],
    kernel: &KernelSpec,
    dilation: usize,
    padded: bool,
) -> Result<Vec<f64>> {
    let l = x.len();
    let span = (KERNEL_LEN - 1) * dilation;
    if !padded && l < span + 1 {
        return Err(SpectralError::Shape(format!(
            "valid convolution needs length >= {}, got {}",
            span + 1,
            l
        )));
    }
    let mut out;
    if padded {
        out = vec![0f64; l];
        let half = (KERNEL_LEN / 2) * dilation; // center tap offset
        for (t, o) in out.iter_mut().enumerate() {
            let mut acc = 0f64;
            for (j, &w) in kernel.weights.iter().enumerate() {
                let pos = t as isize + (j * dilation) as isize - half as isize;
                if pos >= 0 && (pos as usize) < l {
                    acc += w as f64 * x[pos as usize] as f64;
                }
            }
            *o = acc;
        }
    } else {
        out = vec![0f64; l - span];
        for (t, o) in out.iter_mut().enumerate() {
            let mut acc = 0f64;
            for (j, &w) in kernel.weights.iter().enumerate() {
                acc += w as f64 * x[t + j * dilation] as f64;
            }
            *o = acc;
        }
    }
    Ok(out)
}

/// Proportion of positive values: fraction of `conv_out` strictly above the
/// bias. Ties count as non-positive.
pub fn ppv(conv_out: &[f64], bias: f64) -> Result<f64> {
    if conv_out.is_empty() {
        return Err(SpectralError::EmptyInput("ppv over empty convolution output".into()));
    }
    let positives = conv_out.iter().filter(|&&v| v > bias).count();
    Ok(positives as f64 / conv_out.len() as f64)
}

/// Nearest-rank quantile of `values`: element at rank `ceil(q*n)` (1-based)
/// of the sorted sequence.
pub fn nearest_rank_quantile(values: &[f64], q: f64) -> f64 {
    debug_assert!(!values.is_empty());
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let rank = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[rank - 1]
}

/// Quantile assigned to slot `slot` of a kernel×dilation combination.
pub fn slot_quantile(slot: usize) -> f64 {
    ((slot + 1) as f64 * GOLDEN_FRAC).fract()
}

/// Fit one bias per feature slot from the first training batch.
///
/// For every kernel × dilation × slot, a batch sample is drawn (seeded
/// uniform), convolved in the slot's mode, and the bias is set to the slot's
/// golden-ratio quantile of that convolution output. Deterministic in
/// `(batch order, seed)`.
pub fn fit_biases(
    first_batch: &[Vec<f32>],
    kernels: &[KernelSpec],
    schedule: &DilationSchedule,
    seed: u64,
) -> Result<Vec<f64>> {
    if first_batch.is_empty() {
        return Err(SpectralError::EmptyInput("bias fitting needs a nonempty batch".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut biases = Vec::with_capacity(kernels.len() * FEATURES_PER_KERNEL);
    for kernel in kernels {
        for (e_idx, entry) in schedule.entries.iter().enumerate() {
            for slot in 0..entry.feature_count {
                let sample = &first_batch[rng.random_range(0..first_batch.len())];
                let padded = schedule.slot_padded(e_idx, slot);
                let conv = dilated_convolve(sample, kernel, entry.dilation, padded)?;
                biases.push(nearest_rank_quantile(&conv, slot_quantile(slot)));
            }
        }
    }
    Ok(biases)
}

/// Frozen transform state: kernels, dilation ladder, biases, positional
/// encoding phases and the HDC scale. `scale == 0` is plain MiniROCKET.
#[derive(Debug, Clone, PartialEq)]
pub struct FittedTransform {
    pub kernels: Vec<KernelSpec>,
    pub schedule: DilationSchedule,
    pub biases: Vec<f64>,
    pub scale: f64,
    pub encoding_phases: Vec<f64>,
    pub seed: u64,
}

impl FittedTransform {
    /// Fit on a batch of equal-length spectra.
    ///
    /// Bias sampling and phase generation draw from separate streams of the
    /// same seed, so the fitted state is a pure function of
    /// `(batch, length, scale, seed)`.
    pub fn fit(first_batch: &[Vec<f32>], scale: f64, seed: u64) -> Result<Self> {
        let first = first_batch
            .first()
            .ok_or_else(|| SpectralError::EmptyInput("transform fitting needs samples".into()))?;
        let input_length = first.len();
        if input_length == 0 {
            return Err(SpectralError::Shape("zero-length spectrum".into()));
        }
        if scale > 0.0 && input_length < 2 {
            return Err(SpectralError::Config(
                "positional encoding needs input length >= 2".into(),
            ));
        }
        for s in first_batch {
            if s.len() != input_length {
                return Err(SpectralError::Shape(format!(
                    "inconsistent spectrum lengths in batch: {} vs {}",
                    s.len(),
                    input_length
                )));
            }
        }
        let kernels = build_kernel_set();
        let schedule = DilationSchedule::new(input_length);
        let biases = fit_biases(first_batch, &kernels, &schedule, seed)?;
        let encoding_phases = crate::hdc::sample_phases(FEATURE_DIM, seed);
        Ok(FittedTransform { kernels, schedule, biases, scale, encoding_phases, seed })
    }

    pub fn feature_dim(&self) -> usize {
        self.kernels.len() * FEATURES_PER_KERNEL
    }

    /// MiniROCKET transform: PPV features, one per slot.
    pub fn transform(&self, x: &[f32]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let mut features = Vec::with_capacity(self.feature_dim());
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
                for slot in 0..entry.feature_count {
                    let conv = if self.schedule.slot_padded(e_idx, slot) {
                        conv_padded.as_ref().unwrap()
                    } else {
                        conv_valid.as_ref().unwrap()
                    };
                    let bias = self.biases[features.len()];
                    features.push(ppv(conv, bias)?);
                }
            }
        }
        Ok(features)
    }

    pub(crate) fn check_input(&self, x: &[f32]) -> Result<()> {
        if x.len() != self.schedule.input_length {
            return Err(SpectralError::Shape(format!(
                "spectrum length {} does not match fitted length {}",
                x.len(),
                self.schedule.input_length
            )));
        }
        Ok(())
    }

    /// Serialize to the documented little-endian layout:
    ///
    /// ```text
    /// magic   4 bytes  b"SFTR"
    /// version u32      1
    /// length  u64      fitted input length
    /// entries u64      number of schedule entries, then per entry:
    ///                  dilation u64, feature_count u64, padded_count u64
    /// scale   f64
    /// seed    u64
    /// biases  9996 f64
    /// phases  9996 f64
    /// ```
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        w.write_all(b"SFTR")?;
        w.write_u32::<LittleEndian>(1)?;
        w.write_u64::<LittleEndian>(self.schedule.input_length as u64)?;
        w.write_u64::<LittleEndian>(self.schedule.entries.len() as u64)?;
        for entry in &self.schedule.entries {
            w.write_u64::<LittleEndian>(entry.dilation as u64)?;
            w.write_u64::<LittleEndian>(entry.feature_count as u64)?;
            w.write_u64::<LittleEndian>(entry.padded_count as u64)?;
        }
        w.write_f64::<LittleEndian>(self.scale)?;
        w.write_u64::<LittleEndian>(self.seed)?;
        for &b in &self.biases {
            w.write_f64::<LittleEndian>(b)?;
        }
        for &p in &self.encoding_phases {
            w.write_f64::<LittleEndian>(p)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut r = std::io::BufReader::new(std::fs::File::open(path)?);
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != b"SFTR" {
            return Err(SpectralError::Format("bad transform file magic".into()));
        }
        let version = r.read_u32::<LittleEndian>()?;
        if version != 1 {
            return Err(SpectralError::Format(format!("unsupported transform version {version}")));
        }
        let input_length = r.read_u64::<LittleEndian>()? as usize;
        let n_entries = r.read_u64::<LittleEndian>()? as usize;
        let mut entries = Vec::with_capacity(n_entries);
        for _ in 0..n_entries {
            entries.push(ScheduleEntry {
                dilation: r.read_u64::<LittleEndian>()? as usize,
                feature_count: r.read_u64::<LittleEndian>()? as usize,
                padded_count: r.read_u64::<LittleEndian>()? as usize,
            });
        }
        let schedule = DilationSchedule { input_length, entries };
        if schedule.total_features() != FEATURES_PER_KERNEL {
            return Err(SpectralError::Format(format!(
                "schedule carries {} features per kernel, expected {}",
                schedule.total_features(),
                FEATURES_PER_KERNEL
            )));
        }
        let scale = r.read_f64::<LittleEndian>()?;
        let seed = r.read_u64::<LittleEndian>()?;
        let mut biases = vec![0f64; FEATURE_DIM];
        r.read_f64_into::<LittleEndian>(&mut biases)
            .map_err(|e| SpectralError::Format(format!("transform file truncated: {e}")))?;
        let mut encoding_phases = vec![0f64; FEATURE_DIM];
        r.read_f64_into::<LittleEndian>(&mut encoding_phases)
            .map_err(|e| SpectralError::Format(format!("transform file truncated: {e}")))?;
        Ok(FittedTransform {
            kernels: build_kernel_set(),
            schedule,
            biases,
            scale,
            encoding_phases,
            seed,
        })
    }
}
