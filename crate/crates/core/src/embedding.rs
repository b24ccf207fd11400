//! Fixed feature maps from raw features to unit vectors, and their product
//! over all features of a sample.
//!
//! A sample `x = (x_1, ..., x_N)` is embedded as the product state
//! `phi(x_1) ⊗ ... ⊗ phi(x_N)`, a vector in a `p^N`-dimensional space that
//! is never materialized: only the `N` per-feature factors are stored. Each
//! per-feature map sends all of `R` onto the unit sphere of `R^p`, so the
//! global embedding has unit norm by construction.
//!
//! Two maps are provided. The trigonometric map (p = 2k) stacks
//! `(cos(pi x / 2^j), sin(pi x / 2^j))` pairs for `j = 1..k`, scaled by
//! `1/sqrt(k)`; for `k = 1` it sends 0 and 1 to the two standard basis
//! vectors, so binary-valued inputs land on the standard basis of the
//! product space. The fourier map sends the `p` grid points
//! `{0, 1/(p-1), ..., 1}` to the `p` standard basis vectors and is periodic
//! with period `p/(p-1)`.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("trigonometric embedding requires an even physical dimension >= 2, got {0}")]
    OddTrigDimension(usize),
    #[error("physical dimension must be at least 2, got {0}")]
    DimensionTooSmall(usize),
    #[error("a sample must have at least one feature")]
    EmptySample,
    #[error("factor {index} has squared norm {norm_sq} (expected 1 within 1e-12)")]
    NotUnitNorm { index: usize, norm_sq: f64 },
    #[error("factor {index} has length {got}, expected {expected}")]
    FactorLength {
        index: usize,
        got: usize,
        expected: usize,
    },
}

/// `cos(pi * t)`, exact at half-integer `t`.
///
/// Reducing modulo 2 before multiplying by pi keeps precision for large
/// arguments and lets the quarter-period points come out exactly, which in
/// turn makes binary inputs map to exact standard basis vectors under the
/// k = 1 trigonometric embedding.
fn cospi(t: f64) -> f64 {
    let r = t.rem_euclid(2.0);
    if r == 0.0 {
        1.0
    } else if r == 0.5 || r == 1.5 {
        0.0
    } else if r == 1.0 {
        -1.0
    } else {
        (std::f64::consts::PI * r).cos()
    }
}

/// `sin(pi * t)`, exact at half-integer `t`.
fn sinpi(t: f64) -> f64 {
    let r = t.rem_euclid(2.0);
    if r == 0.0 || r == 1.0 {
        0.0
    } else if r == 0.5 {
        1.0
    } else if r == 1.5 {
        -1.0
    } else {
        (std::f64::consts::PI * r).sin()
    }
}

/// Trigonometric embedding of a scalar into `R^{2k}`:
/// `(cos(pi x / 2), sin(pi x / 2), ..., cos(pi x / 2^k), sin(pi x / 2^k)) / sqrt(k)`.
pub fn phi_trig(x: f64, k: usize) -> Vec<f64> {
    assert!(k >= 1, "trigonometric embedding needs k >= 1");
    let norm = 1.0 / (k as f64).sqrt();
    let mut out = Vec::with_capacity(2 * k);
    let mut half = 0.5f64;
    for _ in 0..k {
        let t = x * half; // x / 2^j, exact scaling by a power of two
        out.push(norm * cospi(t));
        out.push(norm * sinpi(t));
        half *= 0.5;
    }
    out
}

/// Fourier embedding of a scalar into `R^p`. Component `j` is the modulus of
/// the complex geometric sum `sum_k exp(2 pi i k ((p-1)x/p - j/p))`, divided
/// by `p`. Computed by direct accumulation; `p` is small in practice and the
/// direct form has no removable singularities to special-case.
pub fn phi_four(x: f64, p: usize) -> Vec<f64> {
    assert!(p >= 2, "fourier embedding needs p >= 2");
    let pf = p as f64;
    let mut out = Vec::with_capacity(p);
    for j in 0..p {
        let theta = (pf - 1.0) * x / pf - j as f64 / pf;
        let mut re = 0.0f64;
        let mut im = 0.0f64;
        for k in 0..p {
            let t = 2.0 * k as f64 * theta;
            re += cospi(t);
            im += sinpi(t);
        }
        out.push(re.hypot(im) / pf);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmbeddingKind {
    Trigonometric,
    Fourier,
}

/// A validated choice of per-feature map and physical dimension.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EmbeddingSpec {
    kind: EmbeddingKind,
    physical_dim: usize,
}

impl EmbeddingSpec {
    pub fn new(kind: EmbeddingKind, physical_dim: usize) -> Result<Self, EmbeddingError> {
        if physical_dim < 2 {
            return Err(EmbeddingError::DimensionTooSmall(physical_dim));
        }
        if kind == EmbeddingKind::Trigonometric && !physical_dim.is_multiple_of(2) {
            return Err(EmbeddingError::OddTrigDimension(physical_dim));
        }
        Ok(Self { kind, physical_dim })
    }

    pub fn trigonometric(physical_dim: usize) -> Result<Self, EmbeddingError> {
        Self::new(EmbeddingKind::Trigonometric, physical_dim)
    }

    pub fn fourier(physical_dim: usize) -> Result<Self, EmbeddingError> {
        Self::new(EmbeddingKind::Fourier, physical_dim)
    }

    pub fn kind(&self) -> EmbeddingKind {
        self.kind
    }

    pub fn physical_dim(&self) -> usize {
        self.physical_dim
    }

    /// Embed one scalar feature.
    pub fn embed_scalar(&self, x: f64) -> Vec<f64> {
        match self.kind {
            EmbeddingKind::Trigonometric => phi_trig(x, self.physical_dim / 2),
            EmbeddingKind::Fourier => phi_four(x, self.physical_dim),
        }
    }

    /// Embed a full sample as a product state, one factor per feature.
    pub fn embed_sample(&self, x: &[f64]) -> Result<ProductState, EmbeddingError> {
        if x.is_empty() {
            return Err(EmbeddingError::EmptySample);
        }
        let factors = x.iter().map(|&v| self.embed_scalar(v)).collect();
        Ok(ProductState { factors })
    }
}

/// The factored embedding of one sample: `N` unit vectors of length `p`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductState {
    factors: Vec<Vec<f64>>,
}

impl ProductState {
    /// Build from explicit factors, checking lengths and unit norms.
    pub fn new(factors: Vec<Vec<f64>>) -> Result<Self, EmbeddingError> {
        if factors.is_empty() {
            return Err(EmbeddingError::EmptySample);
        }
        let p = factors[0].len();
        for (index, f) in factors.iter().enumerate() {
            if f.len() != p {
                return Err(EmbeddingError::FactorLength {
                    index,
                    got: f.len(),
                    expected: p,
                });
            }
            let norm_sq: f64 = f.iter().map(|v| v * v).sum();
            if (norm_sq - 1.0).abs() > 1e-12 {
                return Err(EmbeddingError::NotUnitNorm { index, norm_sq });
            }
        }
        Ok(Self { factors })
    }

    pub fn num_sites(&self) -> usize {
        self.factors.len()
    }

    pub fn physical_dim(&self) -> usize {
        self.factors[0].len()
    }

    pub fn factors(&self) -> &[Vec<f64>] {
        &self.factors
    }

    pub fn factor(&self, site: usize) -> &[f64] {
        &self.factors[site]
    }

    /// Materialize the full `p^N` Kronecker product. Test oracle for small N.
    pub fn to_dense_vector(&self) -> Vec<f64> {
        let mut out = vec![1.0f64];
        for f in &self.factors {
            let mut next = Vec::with_capacity(out.len() * f.len());
            for &a in &out {
                for &b in f {
                    next.push(a * b);
                }
            }
            out = next;
        }
        out
    }
}
