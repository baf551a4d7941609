//! EMA vector quantization over flattened 8×8 pixel patches.
//!
//! Vector sets are [`Grid`]s with one vector per row: `width` is the
//! embedding dimension `D` and `height` the number of vectors.

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::KeyValues;
use crate::dataset::{read_raster, write_raster, Modality, Raster, TOKEN_SIZE};
use crate::error::{invalid, Error, Result};
use crate::grid::Grid;

pub const DEFAULT_DECAY: f64 = 0.99;
/// Laplace smoothing constant of the EMA cluster sizes.
pub const DEFAULT_EPSILON: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    vectors: Grid,
    ema_counts: Vec<f64>,
    ema_sums: Grid,
    decay: f64,
    epsilon: f64,
    modality: Option<Modality>,
}

fn check_decay_epsilon(decay: f64, epsilon: f64) -> Result<()> {
    if !(decay > 0.0 && decay < 1.0) {
        return invalid(format!("EMA decay {decay} outside (0, 1)"));
    }
    if !(epsilon >= 0.0 && epsilon.is_finite()) {
        return invalid(format!("smoothing epsilon {epsilon} must be finite and non-negative"));
    }
    Ok(())
}

impl Codebook {
    /// Codebook with the given codewords and empty EMA statistics.
    pub fn fresh(vectors: Grid, decay: f64, epsilon: f64) -> Result<Self> {
        Self::with_counts(vectors, 0.0, decay, epsilon)
    }

    /// Codebook whose EMA statistics start as if each codeword had been seen
    /// once: counts 1 and sums equal to the codewords. Untouched codewords
    /// then stay where they are instead of collapsing.
    pub fn from_vectors(vectors: Grid, decay: f64, epsilon: f64) -> Result<Self> {
        Self::with_counts(vectors, 1.0, decay, epsilon)
    }

    fn with_counts(vectors: Grid, count: f64, decay: f64, epsilon: f64) -> Result<Self> {
        check_decay_epsilon(decay, epsilon)?;
        if vectors.height() == 0 || vectors.width() == 0 {
            return invalid("codebook needs K ≥ 1 codewords of dimension D ≥ 1");
        }
        if !vectors.all_finite() {
            return invalid("codebook contains non-finite values");
        }
        let k = vectors.height();
        let ema_sums = vectors.map(|v| v * count);
        Ok(Self {
            vectors,
            ema_counts: vec![count; k],
            ema_sums,
            decay,
            epsilon,
            modality: None,
        })
    }

    pub fn with_modality(mut self, modality: Option<Modality>) -> Self {
        self.modality = modality;
        self
    }

    /// Number of codewords `K`.
    pub fn size(&self) -> usize {
        self.vectors.height()
    }

    /// Embedding dimension `D`.
    pub fn dim(&self) -> usize {
        self.vectors.width()
    }

    pub fn vectors(&self) -> &Grid {
        &self.vectors
    }

    pub fn codeword(&self, k: usize) -> &[f64] {
        self.vectors.row(k)
    }

    pub fn ema_counts(&self) -> &[f64] {
        &self.ema_counts
    }

    pub fn ema_sums(&self) -> &Grid {
        &self.ema_sums
    }

    pub fn decay(&self) -> f64 {
        self.decay
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn modality(&self) -> Option<Modality> {
        self.modality
    }

    fn check_dim(&self, vectors: &Grid) -> Result<()> {
        if vectors.width() != self.dim() && vectors.height() > 0 {
            return invalid(format!(
                "vectors have dimension {}, codebook expects {}",
                vectors.width(),
                self.dim()
            ));
        }
        Ok(())
    }
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(v: &[f64], cb: &Codebook) -> usize {
    let mut best = (0, f64::INFINITY);
    for k in 0..cb.size() {
        let d = squared_distance(v, cb.codeword(k));
        // strict comparison keeps the lowest index on ties
        if d < best.1 {
            best = (k, d);
        }
    }
    best.0
}

/// Nearest codeword per row by squared Euclidean distance, ties to the
/// lowest index, plus the quantized rows.
pub fn quantize(vectors: &Grid, cb: &Codebook) -> Result<(Vec<usize>, Grid)> {
    cb.check_dim(vectors)?;
    if !vectors.all_finite() {
        return invalid("cannot quantize non-finite vectors");
    }
    let indices: Vec<usize> = (0..vectors.height()).map(|i| nearest(vectors.row(i), cb)).collect();
    let quantized = dequantize(&indices, cb)?;
    Ok((indices, quantized))
}

pub fn dequantize(indices: &[usize], cb: &Codebook) -> Result<Grid> {
    let mut data = Vec::with_capacity(indices.len() * cb.dim());
    for &k in indices {
        if k >= cb.size() {
            return invalid(format!("token {k} out of range for a codebook of {}", cb.size()));
        }
        data.extend_from_slice(cb.codeword(k));
    }
    Grid::from_vec(cb.dim(), indices.len(), data)
}

/// Mean over all elements of `(x − codeword)²`.
pub fn quantization_error(vectors: &Grid, cb: &Codebook) -> Result<f64> {
    let (_, q) = quantize(vectors, cb)?;
    if vectors.is_empty() {
        return Ok(0.0);
    }
    Ok(squared_distance(vectors.as_slice(), q.as_slice()) / vectors.len() as f64)
}

/// One exponential-moving-average codebook step.
///
/// `counts_k ← γ·counts_k + (1−γ)·n_k` and `sums_k ← γ·sums_k + (1−γ)·Σ x_i`
/// over the rows assigned to `k`; each codeword with positive count becomes
/// `sums_k / ĉ_k` where `ĉ_k = (counts_k + ε)/(Σcounts + Kε)·Σcounts` is the
/// Laplace-smoothed count. Codewords that never received mass keep their
/// value. An empty batch leaves the codebook untouched.
pub fn ema_update(cb: &Codebook, batch: &Grid, assignments: &[usize]) -> Result<Codebook> {
    cb.check_dim(batch)?;
    if assignments.len() != batch.height() {
        return invalid(format!(
            "{} assignments for {} vectors",
            assignments.len(),
            batch.height()
        ));
    }
    if let Some(&k) = assignments.iter().find(|&&k| k >= cb.size()) {
        return invalid(format!("assignment {k} out of range for a codebook of {}", cb.size()));
    }
    if !batch.all_finite() {
        return invalid("batch contains non-finite values");
    }
    if batch.height() == 0 {
        return Ok(cb.clone());
    }

    let (k_total, d) = (cb.size(), cb.dim());
    let gamma = cb.decay;
    let mut hits = vec![0.0; k_total];
    let mut batch_sums = vec![0.0; k_total * d];
    for (i, &k) in assignments.iter().enumerate() {
        hits[k] += 1.0;
        for (acc, &v) in batch_sums[k * d..(k + 1) * d].iter_mut().zip(batch.row(i)) {
            *acc += v;
        }
    }

    let mut out = cb.clone();
    for k in 0..k_total {
        out.ema_counts[k] = gamma * cb.ema_counts[k] + (1.0 - gamma) * hits[k];
    }
    for (s, b) in out.ema_sums.as_mut_slice().iter_mut().zip(&batch_sums) {
        *s = gamma * *s + (1.0 - gamma) * b;
    }
    let n: f64 = out.ema_counts.iter().sum();
    let denom = n + k_total as f64 * cb.epsilon;
    for k in 0..k_total {
        let c = out.ema_counts[k];
        if c <= 0.0 {
            continue;
        }
        let smoothed = (c + cb.epsilon) / denom * n;
        for j in 0..d {
            out.vectors[(j, k)] = out.ema_sums[(j, k)] / smoothed;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitConfig {
    pub vocab_size: usize,
    pub epochs: usize,
    pub decay: f64,
    pub epsilon: f64,
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            vocab_size: Modality::Gray.vocab_size(),
            epochs: 20,
            decay: DEFAULT_DECAY,
            epsilon: DEFAULT_EPSILON,
            seed: 0,
        }
    }
}

impl FitConfig {
    pub fn for_modality(modality: Modality) -> Self {
        Self {
            vocab_size: modality.vocab_size(),
            ..Self::default()
        }
    }
}

/// A fitted codebook and its per-epoch mean quantization error.
#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub codebook: Codebook,
    /// Entry `e` is the error of the codebook after epoch `e + 1`.
    pub error_log: Vec<f64>,
}

/// Picks `k` rows with pairwise distinct values in a seeded random order.
/// Falls back to repeated values when the data has fewer than `k` of them.
fn initial_codewords(data: &Grid, k: usize, seed: u64) -> Grid {
    let mut order: Vec<usize> = (0..data.height()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut chosen: Vec<usize> = Vec::with_capacity(k);
    let mut repeats = Vec::new();
    for &i in &order {
        if chosen.len() == k {
            break;
        }
        let row = data.row(i);
        if chosen.iter().any(|&c| data.row(c) == row) {
            repeats.push(i);
        } else {
            chosen.push(i);
        }
    }
    chosen.extend(repeats.into_iter().take(k - chosen.len()));
    let mut vectors = Vec::with_capacity(k * data.width());
    for &i in &chosen {
        vectors.extend_from_slice(data.row(i));
    }
    Grid::from_vec(data.width(), k, vectors).expect("k rows of width D")
}

/// Full-batch EMA k-means: seeded initialization from distinct data rows,
/// then `epochs` rounds of quantize + [`ema_update`].
pub fn fit_codebook(data: &Grid, cfg: &FitConfig) -> Result<FitResult> {
    check_decay_epsilon(cfg.decay, cfg.epsilon)?;
    if cfg.vocab_size == 0 {
        return invalid("vocabulary size must be positive");
    }
    if data.height() < cfg.vocab_size {
        return invalid(format!(
            "{} training vectors for {} codewords; need at least as many vectors as codewords",
            data.height(),
            cfg.vocab_size
        ));
    }
    if data.width() == 0 || !data.all_finite() {
        return invalid("training vectors must be finite with D ≥ 1");
    }
    let init = initial_codewords(data, cfg.vocab_size, cfg.seed);
    let mut cb = Codebook::from_vectors(init, cfg.decay, cfg.epsilon)?;
    let mut error_log = Vec::with_capacity(cfg.epochs);
    let (mut assignments, _) = quantize(data, &cb)?;
    for _ in 0..cfg.epochs {
        cb = ema_update(&cb, data, &assignments)?;
        let (next, q) = quantize(data, &cb)?;
        error_log.push(squared_distance(data.as_slice(), q.as_slice()) / data.len() as f64);
        assignments = next;
    }
    Ok(FitResult {
        codebook: cb,
        error_log,
    })
}

/// Flattens every 8×8 cell of `raster` (channel-planar) into one row,
/// cells in row-major order.
pub fn patch_vectors(raster: &Raster) -> Result<Grid> {
    let (w, h, c) = (raster.width(), raster.height(), raster.channels());
    if w % TOKEN_SIZE != 0 || h % TOKEN_SIZE != 0 || w == 0 || h == 0 {
        return invalid(format!("{w}x{h} raster is not tiled by {TOKEN_SIZE}x{TOKEN_SIZE} cells"));
    }
    let (cx, cy) = (w / TOKEN_SIZE, h / TOKEN_SIZE);
    let d = TOKEN_SIZE * TOKEN_SIZE * c;
    let mut data = Vec::with_capacity(cx * cy * d);
    for ty in 0..cy {
        for tx in 0..cx {
            for ch in 0..c {
                let plane = raster.channel_slice(ch);
                for y in ty * TOKEN_SIZE..(ty + 1) * TOKEN_SIZE {
                    let start = y * w + tx * TOKEN_SIZE;
                    data.extend(plane[start..start + TOKEN_SIZE].iter().map(|&v| v as f64));
                }
            }
        }
    }
    Grid::from_vec(d, cx * cy, data)
}

/// Inverse of [`patch_vectors`] for a grid of `cells_x`×`cells_y` cells.
pub fn assemble_patches(vectors: &Grid, cells_x: usize, cells_y: usize) -> Result<Raster> {
    let cell = TOKEN_SIZE * TOKEN_SIZE;
    if vectors.height() != cells_x * cells_y {
        return invalid(format!(
            "{} vectors for a {cells_x}x{cells_y} cell grid",
            vectors.height()
        ));
    }
    if vectors.width() == 0 || vectors.width() % cell != 0 {
        return invalid(format!("vector dimension {} is not a multiple of {cell}", vectors.width()));
    }
    let c = vectors.width() / cell;
    let (w, h) = (cells_x * TOKEN_SIZE, cells_y * TOKEN_SIZE);
    let mut data = vec![0f32; w * h * c];
    for ty in 0..cells_y {
        for tx in 0..cells_x {
            let row = vectors.row(ty * cells_x + tx);
            for ch in 0..c {
                for dy in 0..TOKEN_SIZE {
                    for dx in 0..TOKEN_SIZE {
                        let (x, y) = (tx * TOKEN_SIZE + dx, ty * TOKEN_SIZE + dy);
                        data[ch * w * h + y * w + x] = row[ch * cell + dy * TOKEN_SIZE + dx] as f32;
                    }
                }
            }
        }
    }
    Raster::new(w, h, c, data)
}

/// Token indices of `raster`, one per 8×8 cell in row-major order.
pub fn tokenize_image(raster: &Raster, cb: &Codebook) -> Result<Vec<usize>> {
    let vectors = patch_vectors(raster)?;
    if vectors.width() != cb.dim() {
        return invalid(format!(
            "{}-channel raster gives {}-dimensional cells, codebook expects {}",
            raster.channels(),
            vectors.width(),
            cb.dim()
        ));
    }
    Ok(quantize(&vectors, cb)?.0)
}

/// Raster of `cells_x`×`cells_y` dequantized cells.
pub fn detokenize(indices: &[usize], cells_x: usize, cells_y: usize, cb: &Codebook) -> Result<Raster> {
    assemble_patches(&dequantize(indices, cb)?, cells_x, cells_y)
}

/// Token indices of a `cells_x`×`cells_y` cell grid, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenGrid {
    pub cells_x: usize,
    pub cells_y: usize,
    pub indices: Vec<usize>,
}

impl TokenGrid {
    pub fn new(cells_x: usize, cells_y: usize, indices: Vec<usize>) -> Result<Self> {
        if cells_x == 0 || cells_y == 0 || cells_x.checked_mul(cells_y) != Some(indices.len()) {
            return invalid(format!("{} tokens do not fill a {cells_x}x{cells_y} grid", indices.len()));
        }
        Ok(Self { cells_x, cells_y, indices })
    }

    /// `cells <x> <y>` followed by one line of indices per cell row.
    pub fn to_text(&self) -> String {
        let mut out = format!("cells {} {}\n", self.cells_x, self.cells_y);
        for row in self.indices.chunks(self.cells_x) {
            let line: Vec<String> = row.iter().map(usize::to_string).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        out
    }

    /// Inverse of [`TokenGrid::to_text`]; errors carry the 1-based line number.
    pub fn parse(text: &str) -> Result<Self> {
        let fail = |line: usize, message: String| Error::Format {
            offset: line as u64,
            message,
        };
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty());
        let (hl, header) = lines.next().ok_or_else(|| fail(1, "empty token list".into()))?;
        let dims: Vec<&str> = header.split_whitespace().collect();
        let (cx, cy) = match dims.as_slice() {
            ["cells", x, y] => match (x.parse::<usize>(), y.parse::<usize>()) {
                (Ok(x), Ok(y)) if x > 0 && y > 0 => (x, y),
                _ => return Err(fail(hl, format!("bad cell grid '{header}'"))),
            },
            _ => return Err(fail(hl, format!("expected 'cells <x> <y>', got '{header}'"))),
        };
        let mut indices = Vec::new();
        let mut rows = 0;
        for (ln, line) in lines {
            if rows == cy {
                return Err(fail(ln, format!("more than {cy} rows")));
            }
            let before = indices.len();
            for tok in line.split_whitespace() {
                let k = tok
                    .parse()
                    .map_err(|_| fail(ln, format!("bad token index '{tok}'")))?;
                indices.push(k);
                if indices.len() - before > cx {
                    return Err(fail(ln, format!("row longer than {cx} tokens")));
                }
            }
            if indices.len() - before != cx {
                return Err(fail(ln, format!("row has {} tokens, expected {cx}", indices.len() - before)));
            }
            rows += 1;
        }
        if rows != cy {
            return Err(fail(text.lines().count().max(1), format!("{rows} rows, expected {cy}")));
        }
        Ok(Self {
            cells_x: cx,
            cells_y: cy,
            indices,
        })
    }
}

/// Sidecar path holding the non-vector codebook fields.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta");
    PathBuf::from(s)
}

/// Renders the sidecar text: `decay`, `epsilon` and `modality` as
/// `key = value` lines.
pub fn codebook_meta_text(cb: &Codebook) -> String {
    format!(
        "decay = {}\nepsilon = {}\nmodality = {}\n",
        cb.decay,
        cb.epsilon,
        cb.modality.map_or("none", Modality::name)
    )
}

/// Parses sidecar text into `(decay, epsilon, modality)`.
pub fn parse_codebook_meta(text: &str) -> Result<(f64, f64, Option<Modality>)> {
    let mut kv = KeyValues::parse(text)?;
    let decay = kv
        .take::<f64>("decay")?
        .ok_or_else(|| Error::InvalidArgument("codebook metadata lacks 'decay'".into()))?;
    let epsilon = kv
        .take::<f64>("epsilon")?
        .ok_or_else(|| Error::InvalidArgument("codebook metadata lacks 'epsilon'".into()))?;
    let modality = match kv.take::<String>("modality")?.as_deref() {
        None | Some("none") => None,
        Some(m) => Some(m.parse()?),
    };
    kv.finish()?;
    check_decay_epsilon(decay, epsilon)?;
    Ok((decay, epsilon, modality))
}

/// Writes the codewords as a K-row, D-column single-channel SFSR raster plus
/// the sidecar. EMA statistics are not persisted; a loaded codebook restarts
/// them from its codewords.
pub fn save_codebook(path: &Path, cb: &Codebook) -> Result<()> {
    write_raster(path, &Raster::from_grid(&cb.vectors))?;
    fs::write(sidecar_path(path), codebook_meta_text(cb))?;
    Ok(())
}

pub fn load_codebook(path: &Path) -> Result<Codebook> {
    let vectors = read_raster(path)?.to_grid()?;
    let (decay, epsilon, modality) = parse_codebook_meta(&fs::read_to_string(sidecar_path(path))?)?;
    Ok(Codebook::from_vectors(vectors, decay, epsilon)?.with_modality(modality))
}
