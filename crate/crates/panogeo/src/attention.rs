//! Window attention with spherical-distance bias, and the decoder built
//! from it.
//!
//! Tokens are the pixels of an [`ErpTensor`], grouped into N x N windows.
//! Attention runs independently per window and per head; each head's
//! logits carry the additive bias `-alpha * dist` from the window row's
//! [`CleTable`], so geometrically close pixels attend to each other more
//! strongly than their index offset alone would suggest.
//!
//! A decoder block interleaves three such attention passes with the two
//! remap operations: a plain pass, a pass under half-window column
//! rotation (so information crosses vertical window borders), a bipolar
//! reprojection, another rotated pass (now mixing along what used to be
//! the vertical direction), and the inverse reprojection. Every attention
//! pass is wrapped in a residual connection. [`decoder_forward`] runs one
//! block per pyramid scale from coarse to fine, mixing in the query-based
//! embeddings, and finishes with a softplus head so depth stays positive.

use crate::mat::{softmax_rows, Mat};
use crate::priors::{cle_bias, cle_window_distances, CleTable, FeaturePyramid, WindowSpec};
use crate::remap::{brp, brp_inverse, circular_rotate, circular_rotate_inverse, upsample2x};
use crate::tensor::ErpTensor;
use crate::{Error, Result};

/// Multi-head window attention parameters.
///
/// Head `i` projects tokens through `wq[i]`, `wk[i]`, `wv[i]` (each
/// `d x d/h`) and maps its output back through `wo[i]` (`d/h x d`); the
/// per-head results are summed, which equals concatenating the heads and
/// applying the stacked `d x d` output map. `alpha[i]` scales the distance
/// bias of head `i`. Matrices are finite by construction of [`Mat`];
/// dimensional coherence is checked when the parameters are consumed.
#[derive(Debug, Clone)]
pub struct AttentionParams {
    /// Token width.
    pub d: usize,
    /// Head count; must divide `d`.
    pub heads: usize,
    /// Per-head query projections, d x d/h.
    pub wq: Vec<Mat>,
    /// Per-head key projections, d x d/h.
    pub wk: Vec<Mat>,
    /// Per-head value projections, d x d/h.
    pub wv: Vec<Mat>,
    /// Per-head output maps, d/h x d.
    pub wo: Vec<Mat>,
    /// Per-head distance-bias coefficients.
    pub alpha: Vec<f64>,
}

impl AttentionParams {
    /// Width of one head's subspace.
    pub fn head_dim(&self) -> usize {
        self.d / self.heads
    }

    fn validate(&self) -> Result<()> {
        if self.d == 0 || self.heads == 0 {
            return Err(Error::Config(
                "token width and head count must be at least 1".into(),
            ));
        }
        if self.d % self.heads != 0 {
            return Err(Error::Config(format!(
                "head count {} does not divide token width {}",
                self.heads, self.d
            )));
        }
        let dh = self.head_dim();
        let groups = [
            ("query", &self.wq, self.d, dh),
            ("key", &self.wk, self.d, dh),
            ("value", &self.wv, self.d, dh),
            ("output", &self.wo, dh, self.d),
        ];
        for (name, mats, rows, cols) in groups {
            if mats.len() != self.heads {
                return Err(Error::Config(format!(
                    "{} {name} projections for {} heads",
                    mats.len(),
                    self.heads
                )));
            }
            for (i, m) in mats.iter().enumerate() {
                if m.rows() != rows || m.cols() != cols {
                    return Err(Error::Shape(format!(
                        "{name} projection {i} is {}x{}, expected {rows}x{cols}",
                        m.rows(),
                        m.cols()
                    )));
                }
            }
        }
        if self.alpha.len() != self.heads {
            return Err(Error::Config(format!(
                "{} bias coefficients for {} heads",
                self.alpha.len(),
                self.heads
            )));
        }
        if let Some(bad) = self.alpha.iter().find(|a| !a.is_finite()) {
            return Err(Error::Domain(format!(
                "bias coefficient must be finite, got {bad}"
            )));
        }
        Ok(())
    }
}

/// A tensor reshaped into per-window token blocks.
///
/// Window (wr, wc) sits at index `wr * spec.cols() + wc`; within a window,
/// token (ir, ic) is row `ir * n + ic` of an N^2 x C matrix. Merging a
/// partition restores the original tensor bitwise.
#[derive(Debug, Clone)]
pub struct WindowPartition {
    spec: WindowSpec,
    dim: usize,
    windows: Vec<Mat>,
}

impl WindowPartition {
    /// Assembles a partition from raw blocks.
    ///
    /// # Errors
    /// Shape error unless there are `spec.rows() * spec.cols()` blocks of
    /// `spec.tokens()` rows and `dim` columns each.
    pub fn from_windows(spec: WindowSpec, dim: usize, windows: Vec<Mat>) -> Result<Self> {
        if windows.len() != spec.rows() * spec.cols() {
            return Err(Error::Shape(format!(
                "{} window blocks for a {}x{} window grid",
                windows.len(),
                spec.rows(),
                spec.cols()
            )));
        }
        for (i, w) in windows.iter().enumerate() {
            if w.rows() != spec.tokens() || w.cols() != dim {
                return Err(Error::Shape(format!(
                    "window block {i} is {}x{}, expected {}x{dim}",
                    w.rows(),
                    w.cols(),
                    spec.tokens()
                )));
            }
        }
        Ok(Self { spec, dim, windows })
    }

    pub fn spec(&self) -> WindowSpec {
        self.spec
    }

    /// Token width (the tensor's channel count).
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn windows(&self) -> &[Mat] {
        &self.windows
    }

    pub fn window(&self, i: usize) -> &Mat {
        &self.windows[i]
    }
}

/// Splits a tensor into window token blocks.
///
/// # Errors
/// Shape error if `spec` was built for a different grid shape.
pub fn window_partition(t: &ErpTensor, spec: WindowSpec) -> Result<WindowPartition> {
    if spec.shape() != t.shape() {
        return Err(Error::Shape(format!(
            "window spec is for grid {}, tensor has {}",
            spec.shape(),
            t.shape()
        )));
    }
    let n = spec.n();
    let c = t.channels();
    let mut windows = Vec::with_capacity(spec.rows() * spec.cols());
    for wr in 0..spec.rows() {
        for wc in 0..spec.cols() {
            let mut data = Vec::with_capacity(n * n * c);
            for ir in 0..n {
                for ic in 0..n {
                    for ch in 0..c {
                        data.push(t.at(ch, wr * n + ir, wc * n + ic));
                    }
                }
            }
            windows.push(Mat::new(n * n, c, data)?);
        }
    }
    Ok(WindowPartition {
        spec,
        dim: c,
        windows,
    })
}

/// Reassembles the tensor a partition was built from. Inverse of
/// [`window_partition`], bitwise.
pub fn window_merge(w: &WindowPartition) -> ErpTensor {
    let spec = w.spec;
    let n = spec.n();
    ErpTensor::from_fn(w.dim, spec.shape(), |ch, r, c| {
        let idx = (r / n) * spec.cols() + c / n;
        w.windows[idx].at((r % n) * n + c % n, ch)
    })
    .expect("partition entries are finite")
}

/// One head's softmaxed attention matrix for one window: logits are
/// Q K^T / sqrt(d/h) plus the precomputed bias.
fn biased_attention(window: &Mat, wq: &Mat, wk: &Mat, scale: f64, bias: &Mat) -> Result<Mat> {
    let q = window.matmul(wq)?;
    let k = window.matmul(wk)?;
    let qk = q.matmul(&k.transposed())?;
    let mut logits = Mat::from_fn(qk.rows(), qk.cols(), |i, j| {
        qk.at(i, j) * scale + bias.at(i, j)
    })?;
    softmax_rows(&mut logits);
    Ok(logits)
}

/// Finds the table covering `window_row`, regardless of slice order.
fn table_for_row<'a>(tables: &'a [CleTable], window_row: usize, n: usize) -> Result<&'a CleTable> {
    tables
        .iter()
        .find(|t| t.window_row() == window_row && t.n() == n)
        .ok_or_else(|| {
            Error::Config(format!(
                "no distance table for window row {window_row} at side {n}"
            ))
        })
}

/// Distance-biased multi-head attention over every window.
///
/// Per window and head: logits `Q K^T / sqrt(d/h) - alpha * dist`, softmax,
/// value mixing, and the head's output map; head outputs are summed. The
/// window layout is preserved.
///
/// # Errors
/// Shape error if the token width differs from `params.d`; configuration
/// error if `params` are incoherent or `tables` misses a window row.
pub fn sp_attention(
    w: &WindowPartition,
    params: &AttentionParams,
    tables: &[CleTable],
) -> Result<WindowPartition> {
    params.validate()?;
    if w.dim != params.d {
        return Err(Error::Shape(format!(
            "tokens have width {}, parameters expect {}",
            w.dim, params.d
        )));
    }
    let spec = w.spec;
    let m = spec.tokens();
    let scale = 1.0 / (params.head_dim() as f64).sqrt();
    // One bias matrix per (window row, head).
    let mut biases = Vec::with_capacity(spec.rows());
    for wr in 0..spec.rows() {
        let table = table_for_row(tables, wr, spec.n())?;
        let per_head: Vec<Mat> = params
            .alpha
            .iter()
            .map(|&a| cle_bias(table, a))
            .collect::<Result<_>>()?;
        biases.push(per_head);
    }
    let mut windows = Vec::with_capacity(w.windows.len());
    for (idx, window) in w.windows.iter().enumerate() {
        let wr = idx / spec.cols();
        let mut out = vec![0.0; m * params.d];
        for head in 0..params.heads {
            let attn = biased_attention(
                window,
                &params.wq[head],
                &params.wk[head],
                scale,
                &biases[wr][head],
            )?;
            let values = window.matmul(&params.wv[head])?;
            let mixed = attn.matmul(&values)?;
            let projected = mixed.matmul(&params.wo[head])?;
            for (o, &p) in out.iter_mut().zip(projected.data()) {
                *o += p;
            }
        }
        windows.push(Mat::new(m, params.d, out)?);
    }
    Ok(WindowPartition {
        spec,
        dim: params.d,
        windows,
    })
}

/// The remap-or-attend steps a decoder block runs, in order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    /// Residual window attention.
    Attention,
    /// Residual window attention under half-window column rotation.
    RotatedAttention,
    /// Bipolar reprojection.
    Reproject,
    /// Inverse bipolar reprojection.
    ReprojectInverse,
}

/// Shape-independent configuration of one decoder block.
#[derive(Debug, Clone)]
pub struct DecoderBlockConfig {
    n: usize,
    rotation: i64,
    stages: [Stage; 5],
}

impl DecoderBlockConfig {
    /// The fixed stage sequence every block runs: attend, attend rotated,
    /// reproject, attend rotated, reproject back.
    pub const CANONICAL_STAGES: [Stage; 5] = [
        Stage::Attention,
        Stage::RotatedAttention,
        Stage::Reproject,
        Stage::RotatedAttention,
        Stage::ReprojectInverse,
    ];

    /// # Errors
    /// Configuration error if `n < 2`.
    pub fn new(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::Config(format!(
                "window side must be at least 2, got {n}"
            )));
        }
        Ok(Self {
            n,
            rotation: (n / 2) as i64,
            stages: Self::CANONICAL_STAGES,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Column rotation used by the rotated stages: half the window side.
    pub fn rotation(&self) -> i64 {
        self.rotation
    }

    pub fn stages(&self) -> &[Stage; 5] {
        &self.stages
    }
}

/// Attention parameters for the three attention stages of one block, in
/// stage order.
#[derive(Debug, Clone)]
pub struct DecoderBlockParams {
    pub attn: [AttentionParams; 3],
}

/// Partition, attend, merge, and add back the input.
fn residual_attention(
    t: &ErpTensor,
    spec: WindowSpec,
    params: &AttentionParams,
    tables: &[CleTable],
) -> Result<ErpTensor> {
    let part = window_partition(t, spec)?;
    let out = sp_attention(&part, params, tables)?;
    t.add(&window_merge(&out))
}

/// Runs one decoder block over a full panorama tensor.
///
/// Stages follow [`DecoderBlockConfig::CANONICAL_STAGES`]; rotated stages
/// shift columns by half a window before attending and shift back after,
/// and every attention carries a residual connection. Output shape equals
/// input shape.
///
/// # Errors
/// Shape error unless `W = 2H`; configuration error if the window side
/// does not divide the grid or the parameters are incoherent.
pub fn spdecoder_block(
    t: &ErpTensor,
    params: &DecoderBlockParams,
    cfg: &DecoderBlockConfig,
) -> Result<ErpTensor> {
    if t.shape().width() != 2 * t.shape().height() {
        return Err(Error::Shape(format!(
            "decoder blocks need a full 2:1 panorama, got {}",
            t.shape()
        )));
    }
    let spec = WindowSpec::new(cfg.n(), t.shape())?;
    let tables: Vec<CleTable> = (0..spec.rows())
        .map(|r| cle_window_distances(&spec, r))
        .collect::<Result<_>>()?;
    let mut x = t.clone();
    let mut next_attn = 0;
    for stage in cfg.stages() {
        match stage {
            Stage::Attention => {
                x = residual_attention(&x, spec, &params.attn[next_attn], &tables)?;
                next_attn += 1;
            }
            Stage::RotatedAttention => {
                let rotated = circular_rotate(&x, cfg.rotation());
                let attended = residual_attention(&rotated, spec, &params.attn[next_attn], &tables)?;
                next_attn += 1;
                x = circular_rotate_inverse(&attended, cfg.rotation());
            }
            Stage::Reproject => {
                x = brp(&x)?;
            }
            Stage::ReprojectInverse => {
                x = brp_inverse(&x)?;
            }
        }
    }
    Ok(x)
}

/// Full decoder parameter set: one block per pyramid scale (indexed like
/// the pyramid, blocks[4] runs first), the preferred window side, and the
/// final 1-channel projection weights.
#[derive(Debug, Clone)]
pub struct DecoderParams {
    /// Window side; clamped per scale to the scale's height.
    pub window: usize,
    /// Per-scale block parameters.
    pub blocks: [DecoderBlockParams; 5],
    /// Projection from `d` channels to the scalar depth logit.
    pub head: Vec<f64>,
}

/// Numerically stable softplus, `ln(1 + e^x)`, floored at the smallest
/// positive normal so the result stays strictly positive even when the
/// exponential underflows.
fn softplus(x: f64) -> f64 {
    let y = if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    };
    y.max(f64::MIN_POSITIVE)
}

/// Coarse-to-fine decoding pass producing a positive 1-channel map at
/// twice the finest pyramid resolution.
///
/// At each scale, from coarsest to finest: add the scale's embedding
/// tensor, run a decoder block (window side clamped to the scale height),
/// upsample by two, and add the next finer pyramid level. The final
/// features go through the linear head and softplus.
///
/// # Errors
/// Shape error unless every pyramid level and embedding tensor carries
/// the head's channel count and matching spatial dims.
pub fn decoder_forward(
    pyramid: &FeaturePyramid,
    gcpes: &[ErpTensor; 5],
    params: &DecoderParams,
) -> Result<ErpTensor> {
    let d = params.head.len();
    if d == 0 {
        return Err(Error::Config("head projection is empty".into()));
    }
    if let Some(bad) = params.head.iter().find(|x| !x.is_finite()) {
        return Err(Error::Domain(format!(
            "head projection weights must be finite, got {bad}"
        )));
    }
    for k in 0..5 {
        let f = pyramid.level(k);
        if f.channels() != d {
            return Err(Error::Shape(format!(
                "pyramid level {k} has {} channels, head expects {d}",
                f.channels()
            )));
        }
        if gcpes[k].shape() != f.shape() || gcpes[k].channels() != d {
            return Err(Error::Shape(format!(
                "embedding {k} is {} channels at {}, level {k} is {d} at {}",
                gcpes[k].channels(),
                gcpes[k].shape(),
                f.shape()
            )));
        }
    }
    let mut x = pyramid.level(4).clone();
    for k in (0..5).rev() {
        x = x.add(&gcpes[k])?;
        let side = params.window.min(x.shape().height());
        let cfg = DecoderBlockConfig::new(side)?;
        x = spdecoder_block(&x, &params.blocks[k], &cfg)?;
        x = upsample2x(&x);
        if k > 0 {
            x = x.add(pyramid.level(k - 1))?;
        }
    }
    ErpTensor::from_fn(1, x.shape(), |_, r, c| {
        let mut acc = 0.0;
        for (ch, &w) in params.head.iter().enumerate() {
            acc += w * x.at(ch, r, c);
        }
        softplus(acc)
    })
}
