//! Fixed-point encoding of reals into `Z_q`.
//!
//! `encode(x) = round(x * 2^b) mod q`, with negative values wrapping to
//! `q + m̂`. Values up to `int_max = floor(q / 3)` in magnitude decode
//! exactly; residues strictly between `int_max` and `q - int_max` are the
//! overflow dead zone, so both `±int_max` round-trip.

use num_bigint::{BigInt, BigUint, Sign};
use num_traits::{FromPrimitive, ToPrimitive};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::group::Scalar;

pub const MIN_BITS: u32 = 2;
pub const MAX_BITS: u32 = 15;
pub const DEFAULT_BITS: u32 = 10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CodecError {
    #[error("encoding bit length {0} outside {MIN_BITS}..={MAX_BITS}")]
    BitsOutOfRange(u32),
    #[error("cannot encode non-finite value {0}")]
    NonFinite(f64),
    #[error("encoded magnitude of {0} exceeds int_max")]
    EncodeOverflow(f64),
    #[error("residue lies in the overflow dead zone")]
    DecodeDeadZone,
    #[error("aggregation headroom exceeded: 2^b * {magnitude} * {clients} > int_max")]
    InsufficientHeadroom { magnitude: f64, clients: usize },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodingConfig {
    bits: u32,
    q: BigUint,
    int_max: BigUint,
}

impl EncodingConfig {
    pub fn new(bits: u32, q: &BigUint) -> Result<Self, CodecError> {
        if !(MIN_BITS..=MAX_BITS).contains(&bits) {
            return Err(CodecError::BitsOutOfRange(bits));
        }
        Ok(EncodingConfig {
            bits,
            q: q.clone(),
            int_max: q / 3u32,
        })
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn q(&self) -> &BigUint {
        &self.q
    }

    pub fn int_max(&self) -> &BigUint {
        &self.int_max
    }

    fn scale(&self) -> f64 {
        (1u64 << self.bits) as f64
    }

    /// Checks `2^b * max_magnitude * clients <= int_max`, the room needed to
    /// sum `clients` encodings without wrapping.
    pub fn check_headroom(&self, max_magnitude: f64, clients: usize) -> Result<(), CodecError> {
        let need = (self.scale() * max_magnitude.abs() * clients as f64).ceil();
        let fits = match BigUint::from_f64(need) {
            Some(need) => need <= self.int_max,
            None => false,
        };
        if fits {
            Ok(())
        } else {
            Err(CodecError::InsufficientHeadroom {
                magnitude: max_magnitude,
                clients,
            })
        }
    }

    /// Integer `m̂ = round(x * 2^b)`, half away from zero.
    pub fn quantize(&self, x: f64) -> Result<BigInt, CodecError> {
        if !x.is_finite() {
            return Err(CodecError::NonFinite(x));
        }
        let rounded = (x * self.scale()).round();
        let m_hat = BigInt::from_f64(rounded).ok_or(CodecError::NonFinite(x))?;
        if m_hat.magnitude() > &self.int_max {
            return Err(CodecError::EncodeOverflow(x));
        }
        Ok(m_hat)
    }

    pub fn encode(&self, x: f64) -> Result<Scalar, CodecError> {
        let m_hat = self.quantize(x)?;
        let (sign, mag) = m_hat.into_parts();
        let value = match sign {
            Sign::Minus => &self.q - mag,
            _ => mag,
        };
        Ok(Scalar::new(value, &self.q))
    }

    pub fn decode(&self, m: &BigUint) -> Result<f64, CodecError> {
        let scale = self.scale();
        if m <= &self.int_max {
            Ok(m.to_f64().expect("finite") / scale)
        } else if m >= &(&self.q - &self.int_max) && m < &self.q {
            Ok(-(&self.q - m).to_f64().expect("finite") / scale)
        } else {
            Err(CodecError::DecodeDeadZone)
        }
    }

    pub fn decode_scalar(&self, m: &Scalar) -> Result<f64, CodecError> {
        self.decode(m.value())
    }

    /// Worst-case absolute round-trip error, `2^-(b+1)`.
    pub fn resolution(&self) -> f64 {
        0.5 / self.scale()
    }
}
