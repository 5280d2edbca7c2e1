//! Spherical-distance position embeddings.
//!
//! Equirectangular grids stretch horizontal neighbours apart near the
//! equator and squeeze them together near the poles, so index offsets are a
//! poor notion of "how far" two pixels are. This module builds embeddings
//! from true great-circle distances instead:
//!
//! * [`CleTable`]: pairwise distances between the pixel centers of one
//!   N x N window. Thanks to longitudinal invariance a single table per
//!   window row serves every window column.
//! * [`GspeMatrix`]: pairwise distances between all pixel centers of a
//!   coarse reference grid, used to bias global attention.
//! * [`gcpe_forward`]: a query-based embedding generator. A global
//!   attention block over the reference grid (biased by [`GspeMatrix`])
//!   produces a set of global keys; each pyramid scale then queries those
//!   keys to obtain its own embedding tensor.
//!
//! Distances enter attention as an additive logit bias `-alpha * dist`
//! with a scalar coefficient, so `alpha = 0` recovers plain attention.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use crate::mat::{softmax_rows, Mat};
use crate::sphere::{haversine, pix_to_sph, GridShape, PixelCoord};
use crate::tensor::ErpTensor;
use crate::{Error, Result};

/// Partition of a grid into square windows of side `n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowSpec {
    n: usize,
    shape: GridShape,
}

impl WindowSpec {
    /// # Errors
    /// Configuration error unless `n >= 2` and `n` divides both grid
    /// dimensions.
    pub fn new(n: usize, shape: GridShape) -> Result<Self> {
        if n < 2 {
            return Err(Error::Config(format!(
                "window side must be at least 2, got {n}"
            )));
        }
        if shape.height() % n != 0 || shape.width() % n != 0 {
            return Err(Error::Config(format!(
                "window side {n} does not divide grid {shape}"
            )));
        }
        Ok(Self { n, shape })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn shape(&self) -> GridShape {
        self.shape
    }

    /// Number of window rows (H / N).
    pub fn rows(&self) -> usize {
        self.shape.height() / self.n
    }

    /// Number of window columns (W / N).
    pub fn cols(&self) -> usize {
        self.shape.width() / self.n
    }

    /// Tokens per window (N squared).
    pub fn tokens(&self) -> usize {
        self.n * self.n
    }
}

/// Pairwise great-circle distances between the pixel centers of one
/// window, shared by every window column of the same window row.
///
/// Entries are radians in `[0, pi]`; the matrix is symmetric with a zero
/// diagonal. Token index is local row-major: `local_row * n + local_col`.
#[derive(Debug, Clone)]
pub struct CleTable {
    window_row: usize,
    n: usize,
    dist: Mat,
}

impl CleTable {
    /// Assembles a table from raw parts, for crate-internal tests that
    /// need distances in a nonstandard arrangement.
    #[cfg(test)]
    pub(crate) fn from_parts(window_row: usize, n: usize, dist: Mat) -> Result<Self> {
        if dist.rows() != n * n || dist.cols() != n * n {
            return Err(Error::Shape(format!(
                "table matrix is {}x{}, expected {m}x{m}",
                dist.rows(),
                dist.cols(),
                m = n * n
            )));
        }
        Ok(Self {
            window_row,
            n,
            dist,
        })
    }

    pub fn window_row(&self) -> usize {
        self.window_row
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// The N^2 x N^2 distance matrix.
    pub fn dist(&self) -> &Mat {
        &self.dist
    }
}

/// Distance table for the windows of one window row.
///
/// Pixel centers of the window at window column 0 are mapped to the sphere
/// and all pairwise haversine distances are taken. Because same-row pixels
/// at equal column separation keep equal longitude gaps anywhere on the
/// grid, the same table is valid for every window column of this row.
///
/// # Errors
/// Domain error if `window_row` is not below `spec.rows()`.
pub fn cle_window_distances(spec: &WindowSpec, window_row: usize) -> Result<CleTable> {
    if window_row >= spec.rows() {
        return Err(Error::Domain(format!(
            "window row {window_row} out of range, grid {} with side {} has {} window rows",
            spec.shape(),
            spec.n(),
            spec.rows()
        )));
    }
    let n = spec.n();
    let mut points = Vec::with_capacity(n * n);
    for ir in 0..n {
        for ic in 0..n {
            let center = PixelCoord {
                u: ic as f64 + 0.5,
                v: (window_row * n + ir) as f64 + 0.5,
            };
            points.push(pix_to_sph(center, spec.shape())?);
        }
    }
    let m = n * n;
    let dist = Mat::from_fn(m, m, |i, j| haversine(points[i], points[j]))?;
    Ok(CleTable {
        window_row,
        n,
        dist,
    })
}

/// Additive attention-logit bias `-alpha * dist` for one window table.
///
/// Zero `alpha` yields a zero bias, reducing biased attention to the plain
/// form; the bias inherits the table's symmetry.
///
/// # Errors
/// Domain error if `alpha` is not finite.
pub fn cle_bias(table: &CleTable, alpha: f64) -> Result<Mat> {
    if !alpha.is_finite() {
        return Err(Error::Domain(format!(
            "bias coefficient must be finite, got {alpha}"
        )));
    }
    let d = table.dist();
    Mat::from_fn(d.rows(), d.cols(), |i, j| -alpha * d.at(i, j))
}

/// Pairwise great-circle distances between all pixel centers of a grid,
/// flattened row-major (token index `r * W + c`).
///
/// Symmetric, zero diagonal, entries in `[0, pi]`. Intended for the coarse
/// reference grid of a feature pyramid; the matrix is dense in the squared
/// token count, so keep the grid small.
#[derive(Debug, Clone)]
pub struct GspeMatrix {
    shape: GridShape,
    dist: Mat,
}

impl GspeMatrix {
    pub fn shape(&self) -> GridShape {
        self.shape
    }

    /// Token count M = H * W.
    pub fn tokens(&self) -> usize {
        self.shape.len()
    }

    /// The M x M distance matrix.
    pub fn dist(&self) -> &Mat {
        &self.dist
    }
}

/// Builds the dense distance matrix for `shape`.
pub fn gspe_matrix(shape: GridShape) -> GspeMatrix {
    let (h, w) = (shape.height(), shape.width());
    let mut points = Vec::with_capacity(h * w);
    for r in 0..h {
        for c in 0..w {
            let center = PixelCoord {
                u: c as f64 + 0.5,
                v: r as f64 + 0.5,
            };
            // Pixel centers of a valid grid always lie inside the sphere's
            // coordinate ranges.
            points.push(pix_to_sph(center, shape).expect("pixel center in range"));
        }
    }
    let m = points.len();
    let dist = Mat::from_fn(m, m, |i, j| haversine(points[i], points[j]))
        .expect("distances are finite");
    GspeMatrix { shape, dist }
}

/// Shared cache for [`gspe_matrix`], keyed by grid shape.
///
/// The matrix costs O(M^2) trigonometry to build, so repeated consumers of
/// the same reference shape reuse one immutable copy.
pub fn cached_gspe_matrix(shape: GridShape) -> Arc<GspeMatrix> {
    static CACHE: OnceLock<Mutex<HashMap<GridShape, Arc<GspeMatrix>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().expect("gspe cache poisoned");
    guard
        .entry(shape)
        .or_insert_with(|| Arc::new(gspe_matrix(shape)))
        .clone()
}

/// Five feature tensors with successively halved spatial dimensions.
///
/// Level `k` of a pyramid for a full-resolution H x W panorama has shape
/// H/2^(k+1) x W/2^(k+1); channel counts may vary per level. Level
/// [`FeaturePyramid::REFERENCE_LEVEL`] (the H/16 x W/16 entry) is the
/// reference grid for the global distance matrix.
#[derive(Debug, Clone)]
pub struct FeaturePyramid {
    levels: [ErpTensor; 5],
}

impl FeaturePyramid {
    /// Index of the coarse reference level used for global attention.
    pub const REFERENCE_LEVEL: usize = 3;

    /// # Errors
    /// Shape error unless each level halves the previous one's spatial
    /// dimensions exactly.
    pub fn new(levels: [ErpTensor; 5]) -> Result<Self> {
        for k in 0..4 {
            let (a, b) = (levels[k].shape(), levels[k + 1].shape());
            if b.height() * 2 != a.height() || b.width() * 2 != a.width() {
                return Err(Error::Shape(format!(
                    "pyramid level {} has shape {b}, expected half of level {k}'s {a}",
                    k + 1
                )));
            }
        }
        Ok(Self { levels })
    }

    pub fn level(&self, k: usize) -> &ErpTensor {
        &self.levels[k]
    }

    pub fn levels(&self) -> &[ErpTensor; 5] {
        &self.levels
    }

    /// The reference-level tensor.
    pub fn reference(&self) -> &ErpTensor {
        &self.levels[Self::REFERENCE_LEVEL]
    }
}

/// Parameters of the query-based embedding generator.
///
/// The global block embeds the flattened reference level to `d` channels
/// and runs one distance-biased attention layer over it; each scale then
/// projects its own features to queries and the global keys through a
/// per-scale linear map. Matrices are finite by construction of [`Mat`];
/// dimensional coherence against `d` and the pyramid is checked when the
/// parameters are consumed.
#[derive(Debug, Clone)]
pub struct GcpeParams {
    /// Model width shared by all projections.
    pub d: usize,
    /// Bias coefficient on the global distance matrix.
    pub alpha_g: f64,
    /// Token embedding of the reference level, C_ref x d.
    pub embed: Mat,
    /// Global-block query projection, d x d.
    pub wq: Mat,
    /// Global-block key projection, d x d.
    pub wk: Mat,
    /// Global-block value projection, d x d.
    pub wv: Mat,
    /// Per-scale query projections, C_k x d each.
    pub query: [Mat; 5],
    /// Per-scale maps from global keys to scale keys, d x d each.
    pub key: [Mat; 5],
    /// Output projection applied to every scale's attention result, d x d.
    pub out: Mat,
}

impl GcpeParams {
    fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(Error::Config("model width must be at least 1".into()));
        }
        if !self.alpha_g.is_finite() {
            return Err(Error::Domain(format!(
                "global bias coefficient must be finite, got {}",
                self.alpha_g
            )));
        }
        let square = [("wq", &self.wq), ("wk", &self.wk), ("wv", &self.wv), ("out", &self.out)];
        for (name, m) in square {
            if m.rows() != self.d || m.cols() != self.d {
                return Err(Error::Shape(format!(
                    "{name} is {}x{}, expected {d}x{d}",
                    m.rows(),
                    m.cols(),
                    d = self.d
                )));
            }
        }
        for (k, m) in self.key.iter().enumerate() {
            if m.rows() != self.d || m.cols() != self.d {
                return Err(Error::Shape(format!(
                    "key projection {k} is {}x{}, expected {d}x{d}",
                    m.rows(),
                    m.cols(),
                    d = self.d
                )));
            }
        }
        if self.embed.cols() != self.d {
            return Err(Error::Shape(format!(
                "token embedding has {} columns, expected {}",
                self.embed.cols(),
                self.d
            )));
        }
        for (k, m) in self.query.iter().enumerate() {
            if m.cols() != self.d {
                return Err(Error::Shape(format!(
                    "query projection {k} has {} columns, expected {}",
                    m.cols(),
                    self.d
                )));
            }
        }
        Ok(())
    }
}

/// Flattens a tensor to a token matrix: row `r * W + c` holds the channel
/// vector of pixel (r, c).
fn flatten_tokens(t: &ErpTensor) -> Mat {
    let (h, w, c) = (t.shape().height(), t.shape().width(), t.channels());
    let mut data = vec![0.0; h * w * c];
    for r in 0..h {
        for k in 0..w {
            for ch in 0..c {
                data[(r * w + k) * c + ch] = t.at(ch, r, k);
            }
        }
    }
    Mat::new(h * w, c, data).expect("tensor entries are finite")
}

/// Inverse of [`flatten_tokens`]: token matrix rows back to a tensor with
/// `m.cols()` channels.
fn tokens_to_tensor(m: &Mat, shape: GridShape) -> Result<ErpTensor> {
    let w = shape.width();
    ErpTensor::from_fn(m.cols(), shape, |ch, r, c| m.at(r * w + c, ch))
}

/// Softmaxed global attention matrix over the embedded reference tokens:
/// logits Q K^T / sqrt(d) minus `alpha_g` times the distance matrix.
fn global_attention(emb: &Mat, params: &GcpeParams, gspe: &GspeMatrix) -> Result<Mat> {
    let q = emb.matmul(&params.wq)?;
    let k = emb.matmul(&params.wk)?;
    let scale = 1.0 / (params.d as f64).sqrt();
    let kt = k.transposed();
    let qk = q.matmul(&kt)?;
    let mut logits = Mat::from_fn(qk.rows(), qk.cols(), |i, j| {
        qk.at(i, j) * scale - params.alpha_g * gspe.dist().at(i, j)
    })?;
    softmax_rows(&mut logits);
    Ok(logits)
}

/// Softmaxed cross attention of scale queries against the global keys.
fn scale_attention(queries: &Mat, keys: &Mat, d: usize) -> Result<Mat> {
    let scale = 1.0 / (d as f64).sqrt();
    let kt = keys.transposed();
    let qk = queries.matmul(&kt)?;
    let mut logits = Mat::from_fn(qk.rows(), qk.cols(), |i, j| qk.at(i, j) * scale)?;
    softmax_rows(&mut logits);
    Ok(logits)
}

#[cfg(test)]
pub(crate) fn global_attention_for_tests(
    emb: &Mat,
    params: &GcpeParams,
    gspe: &GspeMatrix,
) -> Result<Mat> {
    global_attention(emb, params, gspe)
}

/// Produces one embedding tensor per pyramid scale.
///
/// The global block embeds the flattened reference level, attends over it
/// with the distance bias, and value-weights the result into a set of
/// global keys. Each scale projects its flattened features to queries,
/// maps the global keys through its own linear layer, attends queries
/// against those keys (the keys double as the value operand), applies the
/// shared output projection, and reshapes to the scale's spatial
/// dimensions with `d` channels. Pure function of its inputs.
///
/// # Errors
/// Shape error if the reference level and `gspe` disagree, or any
/// projection's dimensions are incoherent.
pub fn gcpe_forward(
    pyramid: &FeaturePyramid,
    params: &GcpeParams,
    gspe: &GspeMatrix,
) -> Result<[ErpTensor; 5]> {
    params.validate()?;
    let fref = pyramid.reference();
    if fref.shape() != gspe.shape() {
        return Err(Error::Shape(format!(
            "reference level shape {} does not match distance matrix shape {}",
            fref.shape(),
            gspe.shape()
        )));
    }
    if params.embed.rows() != fref.channels() {
        return Err(Error::Shape(format!(
            "token embedding has {} rows, reference level has {} channels",
            params.embed.rows(),
            fref.channels()
        )));
    }
    let emb = flatten_tokens(fref).matmul(&params.embed)?;
    let attn = global_attention(&emb, params, gspe)?;
    let v = emb.matmul(&params.wv)?;
    let global_key = attn.matmul(&v)?;

    let mut outputs = Vec::with_capacity(5);
    for k in 0..5 {
        let f = pyramid.level(k);
        if params.query[k].rows() != f.channels() {
            return Err(Error::Shape(format!(
                "query projection {k} has {} rows, level {k} has {} channels",
                params.query[k].rows(),
                f.channels()
            )));
        }
        let queries = flatten_tokens(f).matmul(&params.query[k])?;
        let keys = global_key.matmul(&params.key[k])?;
        let attn_k = scale_attention(&queries, &keys, params.d)?;
        let mixed = attn_k.matmul(&keys)?.matmul(&params.out)?;
        outputs.push(tokens_to_tensor(&mixed, f.shape())?);
    }
    Ok(outputs.try_into().expect("five scales"))
}
