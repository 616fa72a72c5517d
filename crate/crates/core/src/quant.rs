//! Ternary gradient quantization and the separate-scalar aggregation used
//! by the encrypted pipeline.
//!
//! A tensor `g` becomes `s * dirs` with `s = max|g|` and
//! `dirs_k = sign(g_k) * Bernoulli(|g_k| / s)`, which is unbiased. Only the
//! per-tensor scalar is encrypted; directions travel in the clear, packed at
//! two bits per element.

use num_bigint::BigUint;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{CodecError, EncodingConfig};
use crate::group::Scalar;
use crate::tensor::{Tensor, TensorError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuantError {
    #[error("gradient contains non-finite values")]
    NonFinite,
    #[error("scalar must be nonnegative, got {0}")]
    NegativeScalar(f64),
    #[error("invalid data weight {local}/{total}")]
    InvalidWeight { local: usize, total: usize },
    #[error("ternary tensor shapes differ: {0:?} vs {1:?}")]
    ShapeMismatch(Vec<usize>, Vec<usize>),
    #[error("expected {expected} tensors, got {found}")]
    TensorCount { expected: usize, found: usize },
    #[error("packed buffer too short for {0} elements")]
    Packing(usize),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TernaryGradient {
    pub s: f64,
    pub shape: Vec<usize>,
    pub dirs: Vec<i8>,
}

impl TernaryGradient {
    pub fn len(&self) -> usize {
        self.dirs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dirs.is_empty()
    }

    /// `s * dirs` as a dense tensor.
    pub fn dequantize(&self) -> Tensor {
        Tensor::new(
            self.shape.clone(),
            self.dirs.iter().map(|&d| self.s * d as f64).collect(),
        )
        .expect("shape matches dirs")
    }

    /// Two bits per element: `00` zero, `01` plus one, `10` minus one.
    pub fn pack_dirs(&self) -> Vec<u8> {
        pack_ternary(&self.dirs)
    }

    pub fn packed_bytes(&self) -> usize {
        self.dirs.len().div_ceil(4)
    }
}

pub fn pack_ternary(dirs: &[i8]) -> Vec<u8> {
    let mut out = vec![0u8; dirs.len().div_ceil(4)];
    for (k, &d) in dirs.iter().enumerate() {
        let code = match d {
            1 => 0b01,
            -1 => 0b10,
            _ => 0b00,
        };
        out[k / 4] |= code << (2 * (k % 4));
    }
    out
}

pub fn unpack_ternary(bytes: &[u8], len: usize) -> Result<Vec<i8>, QuantError> {
    if bytes.len() < len.div_ceil(4) {
        return Err(QuantError::Packing(len));
    }
    Ok((0..len)
        .map(|k| match (bytes[k / 4] >> (2 * (k % 4))) & 0b11 {
            0b01 => 1,
            0b10 => -1,
            _ => 0,
        })
        .collect())
}

pub fn ternarize<R: Rng + ?Sized>(g: &Tensor, rng: &mut R) -> Result<TernaryGradient, QuantError> {
    if !g.is_finite() {
        return Err(QuantError::NonFinite);
    }
    let s = g.max_abs();
    let dirs = if s == 0.0 {
        vec![0; g.len()]
    } else {
        g.data()
            .iter()
            .map(|&v| {
                // one draw per element keeps the rng stream position independent of g
                let u: f64 = rng.gen();
                if u < v.abs() / s {
                    if v > 0.0 {
                        1
                    } else {
                        -1
                    }
                } else {
                    0
                }
            })
            .collect()
    };
    Ok(TernaryGradient {
        s,
        shape: g.shape().to_vec(),
        dirs,
    })
}

/// Encodes the client's data-weighted scalar `s * local / total`.
pub fn scale_and_encode(s: f64, local: usize, total: usize, cfg: &EncodingConfig) -> Result<Scalar, QuantError> {
    if s.is_nan() || s < 0.0 {
        return Err(QuantError::NegativeScalar(s));
    }
    if total == 0 || local > total {
        return Err(QuantError::InvalidWeight { local, total });
    }
    Ok(cfg.encode(s * local as f64 / total as f64)?)
}

/// One client's quantized model update: a ternary tensor and its encoded
/// weighted scalar per parameter tensor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuantizedUpdate {
    pub tensors: Vec<(TernaryGradient, Scalar)>,
}

pub fn quantize_update<R: Rng + ?Sized>(
    grads: &[Tensor],
    local: usize,
    total: usize,
    cfg: &EncodingConfig,
    rng: &mut R,
) -> Result<QuantizedUpdate, QuantError> {
    let tensors = grads
        .iter()
        .map(|g| {
            let tern = ternarize(g, rng)?;
            let m = scale_and_encode(tern.s, local, total, cfg)?;
            debug_assert!(m.value() <= cfg.int_max(), "scalar path must be nonnegative");
            Ok((tern, m))
        })
        .collect::<Result<Vec<_>, QuantError>>()?;
    Ok(QuantizedUpdate { tensors })
}

/// Element-wise integer sum of ternary direction tensors.
pub fn aggregate_ternary(list: &[&TernaryGradient]) -> Result<Vec<i32>, QuantError> {
    let Some(first) = list.first() else {
        return Ok(Vec::new());
    };
    let mut sum = vec![0i32; first.dirs.len()];
    for t in list {
        if t.shape != first.shape || t.dirs.len() != sum.len() {
            return Err(QuantError::ShapeMismatch(first.shape.clone(), t.shape.clone()));
        }
        for (acc, &d) in sum.iter_mut().zip(&t.dirs) {
            *acc += d as i32;
        }
    }
    Ok(sum)
}

/// Exact weighted aggregation `Σ_i (n_i/n) s_i dirs_i` of ternary updates.
pub fn aggregate_exact(list: &[(&TernaryGradient, f64)]) -> Result<Tensor, QuantError> {
    let first = list.first().expect("at least one update").0;
    let mut out = Tensor::zeros(&first.shape);
    for (t, weight) in list {
        if t.shape != first.shape {
            return Err(QuantError::ShapeMismatch(first.shape.clone(), t.shape.clone()));
        }
        out.axpy(*weight, &t.dequantize())?;
    }
    Ok(out)
}

/// Server step `θ -= s_global * Σ dirs` for one tensor.
pub fn apply_tensor_update(theta: &mut Tensor, summed_dirs: &[i32], s_global: f64) -> Result<(), QuantError> {
    if summed_dirs.len() != theta.len() {
        return Err(QuantError::ShapeMismatch(
            theta.shape().to_vec(),
            vec![summed_dirs.len()],
        ));
    }
    for (w, &d) in theta.data_mut().iter_mut().zip(summed_dirs) {
        *w -= s_global * d as f64;
    }
    Ok(())
}

/// Applies decrypted aggregates to every tensor: `s_global = decode(Tm) / T`
/// then `θ -= s_global * Σ dirs`, optionally scaled by a server learning rate.
pub fn apply_global_update(
    theta: &mut [Tensor],
    summed_dirs: &[Vec<i32>],
    recovered: &[u64],
    threshold: usize,
    server_lr: Option<f64>,
    cfg: &EncodingConfig,
) -> Result<Vec<f64>, QuantError> {
    if summed_dirs.len() != theta.len() {
        return Err(QuantError::TensorCount {
            expected: theta.len(),
            found: summed_dirs.len(),
        });
    }
    if recovered.len() != theta.len() {
        return Err(QuantError::TensorCount {
            expected: theta.len(),
            found: recovered.len(),
        });
    }
    let lr = server_lr.unwrap_or(1.0);
    let mut scalars = Vec::with_capacity(theta.len());
    for ((tensor, dirs), &tm) in theta.iter_mut().zip(summed_dirs).zip(recovered) {
        let s_global = cfg.decode(&BigUint::from(tm))? / threshold as f64;
        apply_tensor_update(tensor, dirs, lr * s_global)?;
        scalars.push(s_global);
    }
    Ok(scalars)
}
