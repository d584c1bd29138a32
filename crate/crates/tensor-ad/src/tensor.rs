use crate::error::{AdError, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Dense multi-dimensional array of 64-bit reals, row-major.
///
/// The sole numeric carrier of the whole workspace. Tensors are immutable
/// value types as far as the graph layer is concerned; the arithmetic
/// helpers below return new tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

/// Initialization schemes for `seeded_init`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitScheme {
    Zeros,
    Uniform { lo: f64, hi: f64 },
    Normal { mean: f64, std: f64 },
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let expect: usize = shape.iter().product();
        if expect != data.len() {
            return Err(AdError::shape(
                "Tensor::new",
                format!("shape {:?} needs {} values, got {}", shape, expect, data.len()),
            ));
        }
        Ok(Tensor { shape, data })
    }

    pub fn scalar(v: f64) -> Self {
        Tensor { shape: vec![], data: vec![v] }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n: usize = shape.iter().product();
        Tensor { shape: shape.to_vec(), data: vec![0.0; n] }
    }

    pub fn from_vec(data: Vec<f64>) -> Self {
        Tensor { shape: vec![data.len()], data }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let m = rows.first().map_or(0, |r| r.len());
        let mut data = Vec::with_capacity(n * m);
        for r in rows {
            if r.len() != m {
                return Err(AdError::shape("Tensor::from_rows", "ragged rows"));
            }
            data.extend_from_slice(r);
        }
        Tensor::new(vec![n, m], data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// numel == 1, any rank.
    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1
    }

    pub fn scalar_value(&self) -> Result<f64> {
        if self.is_scalar() {
            Ok(self.data[0])
        } else {
            Err(AdError::shape(
                "scalar_value",
                format!("expected 1 element, shape is {:?}", self.shape),
            ))
        }
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    /// Row count of a rank-2 tensor.
    pub fn rows(&self) -> usize {
        self.shape[0]
    }

    /// Column count of a rank-2 tensor.
    pub fn cols(&self) -> usize {
        self.shape[1]
    }

    pub fn at2(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.shape[1] + j]
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip(&self, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        if self.shape != other.shape {
            return Err(AdError::shape(
                "Tensor::zip",
                format!("{:?} vs {:?}", self.shape, other.shape),
            ));
        }
        Ok(Tensor {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        self.zip(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        self.zip(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &Tensor) -> Result<Tensor> {
        self.zip(other, |a, b| a * b)
    }

    pub fn scale(&self, c: f64) -> Tensor {
        self.map(|v| c * v)
    }

    /// self += c * other, in place.
    pub fn axpy(&mut self, c: f64, other: &Tensor) -> Result<()> {
        if self.shape != other.shape {
            return Err(AdError::shape(
                "Tensor::axpy",
                format!("{:?} vs {:?}", self.shape, other.shape),
            ));
        }
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += c * b;
        }
        Ok(())
    }

    pub fn dot(&self, other: &Tensor) -> Result<f64> {
        if self.shape != other.shape {
            return Err(AdError::shape(
                "Tensor::dot",
                format!("{:?} vs {:?}", self.shape, other.shape),
            ));
        }
        Ok(self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum())
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn norm2(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// [n,m] x [m,p] -> [n,p]
    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        if self.rank() != 2 || other.rank() != 2 || self.cols() != other.rows() {
            return Err(AdError::shape(
                "Tensor::matmul",
                format!("{:?} x {:?}", self.shape, other.shape),
            ));
        }
        let (n, m, p) = (self.rows(), self.cols(), other.cols());
        let mut out = vec![0.0; n * p];
        for i in 0..n {
            for k in 0..m {
                let a = self.data[i * m + k];
                if a == 0.0 {
                    continue;
                }
                let row = &other.data[k * p..(k + 1) * p];
                let dst = &mut out[i * p..(i + 1) * p];
                for (o, &b) in dst.iter_mut().zip(row) {
                    *o += a * b;
                }
            }
        }
        Tensor::new(vec![n, p], out)
    }

    pub fn transpose(&self) -> Result<Tensor> {
        if self.rank() != 2 {
            return Err(AdError::shape("Tensor::transpose", format!("{:?}", self.shape)));
        }
        let (n, m) = (self.rows(), self.cols());
        let mut out = vec![0.0; n * m];
        for i in 0..n {
            for j in 0..m {
                out[j * n + i] = self.data[i * m + j];
            }
        }
        Tensor::new(vec![m, n], out)
    }

    /// Select rows of a rank-2 tensor (or entries of a rank-1 tensor).
    pub fn select_rows(&self, idx: &[usize]) -> Result<Tensor> {
        match self.rank() {
            1 => {
                let data = idx.iter().map(|&i| self.data[i]).collect();
                Ok(Tensor { shape: vec![idx.len()], data })
            }
            2 => {
                let m = self.cols();
                let mut data = Vec::with_capacity(idx.len() * m);
                for &i in idx {
                    data.extend_from_slice(&self.data[i * m..(i + 1) * m]);
                }
                Tensor::new(vec![idx.len(), m], data)
            }
            _ => Err(AdError::shape("select_rows", format!("rank {}", self.rank()))),
        }
    }
}

/// Deterministic seeded initialization. Identical (shape, scheme, seed)
/// triples always produce identical tensors.
pub fn seeded_init(shape: &[usize], scheme: InitScheme, seed: u64) -> Tensor {
    let n: usize = shape.iter().product();
    let mut data = vec![0.0; n];
    match scheme {
        InitScheme::Zeros => {}
        InitScheme::Uniform { lo, hi } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for v in data.iter_mut() {
                *v = lo + (hi - lo) * rng.gen::<f64>();
            }
        }
        InitScheme::Normal { mean, std } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            // Box-Muller; hand-rolled so the stream never depends on a
            // distribution crate's internals.
            let mut i = 0;
            while i < n {
                let u1: f64 = rng.gen::<f64>().max(1e-300);
                let u2: f64 = rng.gen::<f64>();
                let r = (-2.0 * u1.ln()).sqrt();
                let theta = 2.0 * std::f64::consts::PI * u2;
                data[i] = mean + std * r * theta.cos();
                if i + 1 < n {
                    data[i + 1] = mean + std * r * theta.sin();
                }
                i += 2;
            }
        }
    }
    Tensor { shape: shape.to_vec(), data }
}

/// FNV-1a over bytes; used to derive stable per-name sub-seeds.
pub fn stable_hash(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Mix a base seed with a name and an index into a fresh sub-seed.
pub fn derive_seed(base: u64, name: &str, index: u64) -> u64 {
    let mut h = stable_hash(name.as_bytes());
    h ^= base.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    h = h.wrapping_add(index.wrapping_mul(0xbf58_476d_1ce4_e5b9));
    // splitmix64 finalizer
    h ^= h >> 30;
    h = h.wrapping_mul(0xbf58_476d_1ce4_e5b9);
    h ^= h >> 27;
    h = h.wrapping_mul(0x94d0_49bb_1331_11eb);
    h ^= h >> 31;
    h
}
