//! Adapted linear layers `Z = W0 X + scale * L (Y (R X))` and the LoRA baseline
//! `Z = W0 X + scale * B (A X)`, with analytic gradients, the seed-only COSA1 file
//! format, and summary statistics for trained cores.

use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{CosaError, Result};
use crate::numerics::{frobenius_norm, matmul, singular_values, Matrix, RANK_DEFICIENT_RATIO};
use crate::projection::ProjectionPair;
use crate::randgen::{derive_seed, gaussian_matrix};

/// Trainable `a x b` core between frozen seeded projections.
#[derive(Debug, Clone, PartialEq)]
pub struct CosaAdapter {
    pair: ProjectionPair,
    alpha_scale: f64,
    core: Matrix,
}

impl CosaAdapter {
    /// Fresh adapter with `Y = 0` over a Gaussian pair drawn from `seed`.
    pub fn new(seed: u64, m: usize, n: usize, a: usize, b: usize, alpha_scale: f64) -> Result<Self> {
        Self::with_pair(ProjectionPair::new(seed, m, n, a, b, false)?, alpha_scale)
    }

    /// Fresh adapter over an existing pair (for instance an orthonormalized fixture).
    pub fn with_pair(pair: ProjectionPair, alpha_scale: f64) -> Result<Self> {
        if !alpha_scale.is_finite() {
            return Err(CosaError::arg("alpha_scale must be finite"));
        }
        let core = Matrix::zeros(pair.a(), pair.b());
        Ok(CosaAdapter {
            pair,
            alpha_scale,
            core,
        })
    }

    pub fn pair(&self) -> &ProjectionPair {
        &self.pair
    }
    pub fn left(&self) -> &Matrix {
        self.pair.left()
    }
    pub fn right(&self) -> &Matrix {
        self.pair.right()
    }
    pub fn seed(&self) -> u64 {
        self.pair.seed()
    }
    pub fn alpha_scale(&self) -> f64 {
        self.alpha_scale
    }
    pub fn core(&self) -> &Matrix {
        &self.core
    }
    pub fn dims(&self) -> (usize, usize, usize, usize) {
        (self.pair.m(), self.pair.n(), self.pair.a(), self.pair.b())
    }

    /// Replace the core; shape must stay `a x b`.
    pub fn set_core(&mut self, core: Matrix) -> Result<()> {
        if core.shape() != self.core.shape() {
            return Err(CosaError::shape("set_core", self.core.shape(), core.shape()));
        }
        if !core.all_finite() {
            return Err(CosaError::Numerical("core contains non-finite entries".into()));
        }
        self.core = core;
        Ok(())
    }

    pub fn core_mut(&mut self) -> &mut Matrix {
        &mut self.core
    }

    /// `scale * L Y R`, formed explicitly. Only for inspection and tests.
    pub fn delta_weight(&self) -> Result<Matrix> {
        Ok(self.pair.synthesize(&self.core)?.scale(self.alpha_scale))
    }
}

/// Low-rank baseline: `A` (r x n) Gaussian, `B` (m x r) zero at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct LoraAdapter {
    a: Matrix,
    b: Matrix,
    alpha_scale: f64,
}

impl LoraAdapter {
    pub fn new(seed: u64, m: usize, n: usize, rank: usize, alpha_scale: f64) -> Result<Self> {
        if rank == 0 || m == 0 || n == 0 {
            return Err(CosaError::arg("lora dims and rank must be positive"));
        }
        Ok(LoraAdapter {
            a: gaussian_matrix(derive_seed(seed, 0), rank, n),
            b: Matrix::zeros(m, rank),
            alpha_scale,
        })
    }

    pub fn down(&self) -> &Matrix {
        &self.a
    }
    pub fn up(&self) -> &Matrix {
        &self.b
    }
    pub fn rank(&self) -> usize {
        self.a.rows()
    }
    pub fn alpha_scale(&self) -> f64 {
        self.alpha_scale
    }

    pub fn set_factors(&mut self, a: Matrix, b: Matrix) -> Result<()> {
        if a.shape() != self.a.shape() {
            return Err(CosaError::shape("set_factors", self.a.shape(), a.shape()));
        }
        if b.shape() != self.b.shape() {
            return Err(CosaError::shape("set_factors", self.b.shape(), b.shape()));
        }
        self.a = a;
        self.b = b;
        Ok(())
    }

    pub fn factors_mut(&mut self) -> (&mut Matrix, &mut Matrix) {
        (&mut self.a, &mut self.b)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Adapter {
    Cosa(CosaAdapter),
    Lora(LoraAdapter),
}

impl Adapter {
    fn out_in(&self) -> (usize, usize) {
        match self {
            Adapter::Cosa(c) => (c.pair.m(), c.pair.n()),
            Adapter::Lora(l) => (l.b.rows(), l.a.cols()),
        }
    }
}

/// Gradients of the trainable adapter parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum AdapterGrad {
    Cosa { core: Matrix },
    Lora { down: Matrix, up: Matrix },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Backward {
    pub adapter: AdapterGrad,
    pub input: Matrix,
}

/// Frozen base weight plus one adapter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptedLinear {
    base: Matrix,
    adapter: Adapter,
}

impl AdaptedLinear {
    pub fn new(base: Matrix, adapter: Adapter) -> Result<Self> {
        let (m, n) = adapter.out_in();
        if base.shape() != (m, n) {
            return Err(CosaError::shape("adapted_linear", base.shape(), (m, n)));
        }
        Ok(AdaptedLinear { base, adapter })
    }

    pub fn base(&self) -> &Matrix {
        &self.base
    }
    pub fn adapter(&self) -> &Adapter {
        &self.adapter
    }
    pub fn adapter_mut(&mut self) -> &mut Adapter {
        &mut self.adapter
    }

    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        match &self.adapter {
            Adapter::Cosa(_) => cosa_forward(self, x),
            Adapter::Lora(_) => lora_forward(self, x),
        }
    }

    pub fn backward(&self, x: &Matrix, g: &Matrix) -> Result<Backward> {
        match &self.adapter {
            Adapter::Cosa(_) => cosa_backward(self, x, g),
            Adapter::Lora(_) => lora_backward(self, x, g),
        }
    }

    fn check_io(&self, x: &Matrix, g: Option<&Matrix>) -> Result<()> {
        let (m, n) = self.base.shape();
        if x.rows() != n {
            return Err(CosaError::shape("forward", (n, x.cols()), x.shape()));
        }
        if let Some(g) = g {
            if g.shape() != (m, x.cols()) {
                return Err(CosaError::shape("backward", (m, x.cols()), g.shape()));
            }
        }
        Ok(())
    }
}

fn expect_cosa(layer: &AdaptedLinear) -> Result<&CosaAdapter> {
    match &layer.adapter {
        Adapter::Cosa(c) => Ok(c),
        Adapter::Lora(_) => Err(CosaError::arg("layer carries a lora adapter, not cosa")),
    }
}

fn expect_lora(layer: &AdaptedLinear) -> Result<&LoraAdapter> {
    match &layer.adapter {
        Adapter::Lora(l) => Ok(l),
        Adapter::Cosa(_) => Err(CosaError::arg("layer carries a cosa adapter, not lora")),
    }
}

/// Compression `R X`, core `Y (R X)`, reconstruction `L (...)`; `Delta W` is never formed.
/// With an all-zero core the adapter branch is skipped, so the output is `W0 X` bit for bit.
pub fn cosa_forward(layer: &AdaptedLinear, x: &Matrix) -> Result<Matrix> {
    let adapter = expect_cosa(layer)?;
    layer.check_io(x, None)?;
    let base = matmul(&layer.base, x)?;
    if adapter.core.is_zero() {
        return Ok(base);
    }
    let compressed = matmul(adapter.right(), x)?;
    let mixed = matmul(&adapter.core, &compressed)?;
    let update = matmul(adapter.left(), &mixed)?;
    base.add(&update.scale(adapter.alpha_scale))
}

/// `dY = scale * (L^T g)(R X)^T`, summed over the batch columns, and
/// `dX = W0^T g + scale * R^T Y^T L^T g`. `W0`, `L`, `R` get no gradients.
pub fn cosa_backward(layer: &AdaptedLinear, x: &Matrix, g: &Matrix) -> Result<Backward> {
    let adapter = expect_cosa(layer)?;
    layer.check_io(x, Some(g))?;
    let compressed = matmul(adapter.right(), x)?;
    let lifted = matmul(&adapter.left().transpose(), g)?;
    let grad_core = matmul(&lifted, &compressed.transpose())?.scale(adapter.alpha_scale);
    let through_core = matmul(&adapter.core.transpose(), &lifted)?;
    let grad_input = matmul(&layer.base.transpose(), g)?
        .add(&matmul(&adapter.right().transpose(), &through_core)?.scale(adapter.alpha_scale))?;
    Ok(Backward {
        adapter: AdapterGrad::Cosa { core: grad_core },
        input: grad_input,
    })
}

pub fn lora_forward(layer: &AdaptedLinear, x: &Matrix) -> Result<Matrix> {
    let adapter = expect_lora(layer)?;
    layer.check_io(x, None)?;
    let base = matmul(&layer.base, x)?;
    if adapter.b.is_zero() {
        return Ok(base);
    }
    let down = matmul(&adapter.a, x)?;
    base.add(&matmul(&adapter.b, &down)?.scale(adapter.alpha_scale))
}

/// `dA = scale * B^T g X^T`, `dB = scale * g (A X)^T`, `dX = W0^T g + scale * A^T B^T g`.
pub fn lora_backward(layer: &AdaptedLinear, x: &Matrix, g: &Matrix) -> Result<Backward> {
    let adapter = expect_lora(layer)?;
    layer.check_io(x, Some(g))?;
    let s = adapter.alpha_scale;
    let down = matmul(&adapter.a, x)?;
    let back = matmul(&adapter.b.transpose(), g)?;
    let grad_up = matmul(g, &down.transpose())?.scale(s);
    let grad_down = matmul(&back, &x.transpose())?.scale(s);
    let grad_input = matmul(&layer.base.transpose(), g)?.add(&matmul(&adapter.a.transpose(), &back)?.scale(s))?;
    Ok(Backward {
        adapter: AdapterGrad::Lora {
            down: grad_down,
            up: grad_up,
        },
        input: grad_input,
    })
}

// COSA1 layout, little-endian:
//   0  magic "COSA"
//   4  u16 version = 1
//   6  u16 flags = 0
//   8  u32 m, n, a, b
//  24  f64 alpha_scale
//  32  u64 seed
//  40  a*b f64, row-major Y
//  ..  u32 CRC-32 (IEEE) of everything before it
pub const COSA_MAGIC: [u8; 4] = *b"COSA";
pub const COSA_VERSION: u16 = 1;
pub const COSA_HEADER_LEN: usize = 40;
const CRC_LEN: usize = 4;

/// Exact on-disk size of a COSA1 file for an `a x b` core.
pub fn adapter_file_len(a: usize, b: usize) -> usize {
    COSA_HEADER_LEN + 8 * a * b + CRC_LEN
}

pub fn encode_adapter(adapter: &CosaAdapter) -> Result<Vec<u8>> {
    if adapter.pair.orthonormalized() {
        return Err(CosaError::Format(
            "orthonormalized pairs are not regenerable from a seed and cannot be stored".into(),
        ));
    }
    let (m, n, a, b) = adapter.dims();
    let dim = |v: usize| {
        u32::try_from(v).map_err(|_| CosaError::Format(format!("dimension {v} does not fit in u32")))
    };
    let mut buf = Vec::with_capacity(adapter_file_len(a, b));
    buf.extend_from_slice(&COSA_MAGIC);
    buf.extend_from_slice(&COSA_VERSION.to_le_bytes());
    buf.extend_from_slice(&0u16.to_le_bytes());
    for v in [m, n, a, b] {
        buf.extend_from_slice(&dim(v)?.to_le_bytes());
    }
    buf.extend_from_slice(&adapter.alpha_scale.to_le_bytes());
    buf.extend_from_slice(&adapter.seed().to_le_bytes());
    for v in adapter.core.data() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    let crc = crc32fast::hash(&buf);
    buf.extend_from_slice(&crc.to_le_bytes());
    Ok(buf)
}

pub fn decode_adapter(bytes: &[u8]) -> Result<CosaAdapter> {
    let truncated = |what: &str| {
        CosaError::Io(io::Error::new(
            io::ErrorKind::UnexpectedEof,
            format!("adapter file truncated: {what}"),
        ))
    };
    if bytes.len() < COSA_HEADER_LEN + CRC_LEN {
        return Err(truncated("shorter than the header"));
    }
    if bytes[0..4] != COSA_MAGIC {
        return Err(CosaError::Format(format!("bad magic {:02x?}", &bytes[0..4])));
    }
    let u16_at = |o: usize| u16::from_le_bytes([bytes[o], bytes[o + 1]]);
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as usize;
    let u64_at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
    let version = u16_at(4);
    if version != COSA_VERSION {
        return Err(CosaError::Format(format!("unsupported version {version}")));
    }
    let flags = u16_at(6);
    if flags != 0 {
        return Err(CosaError::Format(format!("unsupported flags {flags:#06x}")));
    }
    let (m, n, a, b) = (u32_at(8), u32_at(12), u32_at(16), u32_at(20));
    let alpha_scale = f64::from_bits(u64_at(24));
    let seed = u64_at(32);
    let expected = a
        .checked_mul(b)
        .and_then(|ab| ab.checked_mul(8))
        .and_then(|p| p.checked_add(COSA_HEADER_LEN + CRC_LEN))
        .ok_or_else(|| CosaError::Format(format!("core {a}x{b} is too large")))?;
    if bytes.len() < expected {
        return Err(truncated("payload shorter than the header declares"));
    }
    if bytes.len() > expected {
        return Err(CosaError::Format(format!(
            "{} trailing bytes after the checksum",
            bytes.len() - expected
        )));
    }
    let body = &bytes[..expected - CRC_LEN];
    let stored = u32::from_le_bytes(bytes[expected - CRC_LEN..].try_into().unwrap());
    let actual = crc32fast::hash(body);
    if stored != actual {
        return Err(CosaError::Format(format!(
            "checksum mismatch: stored {stored:#010x}, computed {actual:#010x}"
        )));
    }
    let core_data: Vec<f64> = body[COSA_HEADER_LEN..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let mut adapter = CosaAdapter::new(seed, m, n, a, b, alpha_scale).map_err(|e| match e {
        CosaError::Argument(msg) => CosaError::Format(msg),
        other => other,
    })?;
    adapter.set_core(Matrix::from_vec(a, b, core_data)?)?;
    Ok(adapter)
}

pub fn save_adapter(adapter: &CosaAdapter, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_adapter(adapter)?)?;
    Ok(())
}

/// Reads a COSA1 file and regenerates `L`, `R` from the stored seed.
pub fn load_adapter(path: impl AsRef<Path>) -> Result<CosaAdapter> {
    decode_adapter(&fs::read(path)?)
}

/// Summary statistics of a core matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoreStats {
    /// Share of entries with `|Y_ij| < threshold`.
    pub sparsity_fraction: f64,
    pub sparsity_threshold: f64,
    /// Smallest `k` whose top-`k` squared singular values reach `energy` of the total.
    /// `None` for a zero core.
    pub effective_rank: Option<usize>,
    pub energy: f64,
    pub frobenius_norm: f64,
    /// `None` for a zero core or when the core is numerically rank deficient.
    pub condition_number: Option<f64>,
    pub rank_deficient: bool,
}

pub const DEFAULT_SPARSITY_THRESHOLD: f64 = 1e-4;
pub const DEFAULT_ENERGY: f64 = 0.95;

pub fn analyze_core(y: &Matrix, sparsity_threshold: f64, energy: f64) -> Result<CoreStats> {
    if !(energy > 0.0 && energy <= 1.0) {
        return Err(CosaError::arg(format!("energy fraction {energy} outside (0, 1]")));
    }
    if !(sparsity_threshold >= 0.0) {
        return Err(CosaError::arg("sparsity threshold must be non-negative"));
    }
    let total = y.data().len();
    let small = y.data().iter().filter(|v| v.abs() < sparsity_threshold).count();
    let sparsity_fraction = small as f64 / total as f64;
    let frob = frobenius_norm(y);
    if y.is_zero() {
        return Ok(CoreStats {
            sparsity_fraction,
            sparsity_threshold,
            effective_rank: None,
            energy,
            frobenius_norm: frob,
            condition_number: None,
            rank_deficient: true,
        });
    }
    let sv = singular_values(y)?;
    let energies: Vec<f64> = sv.iter().map(|s| s * s).collect();
    let spectrum: f64 = energies.iter().sum();
    let goal = energy * spectrum;
    let mut acc = 0.0;
    let mut effective_rank = sv.len();
    for (k, e) in energies.iter().enumerate() {
        acc += e;
        if acc >= goal {
            effective_rank = k + 1;
            break;
        }
    }
    let max = sv[0];
    let min = *sv.last().unwrap();
    let rank_deficient = min < RANK_DEFICIENT_RATIO * max;
    Ok(CoreStats {
        sparsity_fraction,
        sparsity_threshold,
        effective_rank: Some(effective_rank),
        energy,
        frobenius_norm: frob,
        condition_number: (!rank_deficient).then(|| max / min),
        rank_deficient,
    })
}
