//! Additive ElGamal under the Cramer transform: messages are carried as
//! `g0^m`, so multiplying ciphertexts adds plaintexts. Decryption is
//! threshold-shared and ends with a small discrete-log recovery.

use std::collections::{BTreeSet, HashMap};

use num_bigint::BigUint;
use num_traits::Zero;
use rand::{CryptoRng, RngCore};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::group::{GroupElement, GroupParams, Scalar};
use crate::sharing::{lagrange_coefficient, ClientIndex, SharingError};
use crate::wire::{self, WireError};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AheError {
    #[error("message {0} is not below q")]
    MessageOutOfRange(BigUint),
    #[error("cannot aggregate an empty ciphertext list")]
    EmptyAggregate,
    #[error("expected {expected} partial decryptions, got {found}")]
    WrongCount { expected: usize, found: usize },
    #[error("duplicate partial decryption from client {0}")]
    DuplicatePartial(ClientIndex),
    #[error("no exponent up to {max_m} matches the target")]
    NotFound { max_m: u64 },
    #[error("target is not an exact power of two")]
    NotPowerOfBase,
    #[error(transparent)]
    Sharing(#[from] SharingError),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ciphertext {
    pub c1: GroupElement,
    pub c2: GroupElement,
}

impl Ciphertext {
    pub fn to_bytes(&self, params: &GroupParams) -> Vec<u8> {
        wire::encode_ints(&[self.c1.value(), self.c2.value()], params.element_bytes())
    }

    pub fn from_bytes(bytes: &[u8], params: &GroupParams) -> Result<Self, WireError> {
        let ints = wire::decode_ints(bytes)?;
        if ints.len() != 2 {
            return Err(WireError::Count {
                expected: 2,
                found: ints.len(),
            });
        }
        let mut it = ints.into_iter();
        let mut next = || params.element(it.next().expect("len 2")).map_err(|_| WireError::Range);
        Ok(Ciphertext {
            c1: next()?,
            c2: next()?,
        })
    }

    /// Component bytes, excluding framing: two elements of `p`'s width.
    pub fn payload_bytes(params: &GroupParams) -> usize {
        2 * params.element_bytes()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartialDecryption {
    pub client: ClientIndex,
    pub pd: GroupElement,
}

/// Encrypts `m` as `(g^r, g0^m h^r)` with a fresh nonzero `r`.
pub fn encrypt<R: RngCore + CryptoRng>(
    m: &BigUint,
    h: &GroupElement,
    params: &GroupParams,
    rng: &mut R,
) -> Result<Ciphertext, AheError> {
    let r = params.random_nonzero_scalar(rng);
    encrypt_with_nonce(m, h, &r, params)
}

pub fn encrypt_with_nonce(
    m: &BigUint,
    h: &GroupElement,
    r: &Scalar,
    params: &GroupParams,
) -> Result<Ciphertext, AheError> {
    if m >= params.q() {
        return Err(AheError::MessageOutOfRange(m.clone()));
    }
    let c1 = params.g_pow(r);
    let c2 = params.mul(&params.pow_big(&params.g0(), m), &params.pow(h, r));
    Ok(Ciphertext { c1, c2 })
}

/// Component-wise product of ciphertexts.
pub fn aggregate<'a, I>(cts: I, params: &GroupParams) -> Result<Ciphertext, AheError>
where
    I: IntoIterator<Item = &'a Ciphertext>,
{
    let mut it = cts.into_iter();
    let first = it.next().ok_or(AheError::EmptyAggregate)?.clone();
    Ok(it.fold(first, |acc, ct| Ciphertext {
        c1: params.mul(&acc.c1, &ct.c1),
        c2: params.mul(&acc.c2, &ct.c2),
    }))
}

/// `pd = c2 / c1^{λ x T}` with the exponent reduced mod `q`.
pub fn partial_decrypt(
    ct: &Ciphertext,
    client: ClientIndex,
    x_i: &Scalar,
    lambda_i: &Scalar,
    threshold: usize,
    params: &GroupParams,
) -> PartialDecryption {
    let q = params.q();
    let exponent = lambda_i.mul(x_i, q).mul(&params.scalar_u64(threshold as u64), q);
    let mask = params.pow(&ct.c1, &exponent);
    PartialDecryption {
        client,
        pd: params.mul(&ct.c2, &params.inverse(&mask)),
    }
}

/// Partial decryption for a member of the decrypting subset `subset`.
pub fn partial_decrypt_in_subset(
    ct: &Ciphertext,
    client: ClientIndex,
    x_i: &Scalar,
    subset: &[ClientIndex],
    params: &GroupParams,
) -> Result<PartialDecryption, AheError> {
    let lambda = lagrange_coefficient(client, subset, params)?;
    Ok(partial_decrypt(ct, client, x_i, &lambda, subset.len(), params))
}

/// `Π pd_j = g0^{T m}` for exactly `T` partials from distinct clients.
pub fn combine(pds: &[PartialDecryption], threshold: usize, params: &GroupParams) -> Result<GroupElement, AheError> {
    if pds.len() != threshold {
        return Err(AheError::WrongCount {
            expected: threshold,
            found: pds.len(),
        });
    }
    let mut seen = BTreeSet::new();
    for pd in pds {
        if !seen.insert(pd.client) {
            return Err(AheError::DuplicatePartial(pd.client));
        }
    }
    Ok(params.product(pds.iter().map(|p| &p.pd)))
}

/// A recovered exponent and the number of candidate exponents tried.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Recovered {
    pub value: u64,
    pub steps: u64,
}

/// Linear search `j = 0, 1, 2, ...` keeping a running `g0^j`.
pub fn recover_bruteforce_counted(
    target: &GroupElement,
    max_m: u64,
    params: &GroupParams,
) -> Result<Recovered, AheError> {
    let g0 = params.g0();
    let mut acc = GroupElement::one();
    for j in 0..=max_m {
        if &acc == target {
            return Ok(Recovered { value: j, steps: j + 1 });
        }
        acc = params.mul(&acc, &g0);
    }
    Err(AheError::NotFound { max_m })
}

pub fn recover_bruteforce(target: &GroupElement, max_m: u64, params: &GroupParams) -> Result<u64, AheError> {
    recover_bruteforce_counted(target, max_m, params).map(|r| r.value)
}

/// Reads `m` off `2^m` directly; valid only while `2^m < p`.
pub fn recover_log(target: &GroupElement) -> Result<u64, AheError> {
    let v = target.value();
    if v.is_zero() || v.count_ones() != 1 {
        return Err(AheError::NotPowerOfBase);
    }
    Ok(v.trailing_zeros().expect("nonzero"))
}

/// Baby-step giant-step over `[0, max_m]`. Smallest matching exponent wins.
pub fn recover_bsgs(target: &GroupElement, max_m: u64, params: &GroupParams) -> Result<Recovered, AheError> {
    let width = ((max_m as f64 + 1.0).sqrt().ceil() as u64).max(1);
    let g0 = params.g0();
    let mut table: HashMap<BigUint, u64> = HashMap::with_capacity(width as usize);
    let mut acc = GroupElement::one();
    for j in 0..width {
        table.entry(acc.value().clone()).or_insert(j);
        acc = params.mul(&acc, &g0);
    }
    // acc == g0^width now
    let giant = params.inverse(&acc);
    let mut gamma = target.clone();
    for i in 0..=max_m / width {
        if let Some(&j) = table.get(gamma.value()) {
            let m = i * width + j;
            if m <= max_m {
                return Ok(Recovered {
                    value: m,
                    steps: width + i + 1,
                });
            }
        }
        gamma = params.mul(&gamma, &giant);
    }
    Err(AheError::NotFound { max_m })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RecoveryMode {
    Log,
    #[serde(alias = "brute_force")]
    Bruteforce,
    /// Log recovery, falling back to brute force on `NotPowerOfBase`.
    #[default]
    Auto,
}

impl std::str::FromStr for RecoveryMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "log" => Ok(RecoveryMode::Log),
            "bruteforce" | "brute_force" => Ok(RecoveryMode::Bruteforce),
            "auto" => Ok(RecoveryMode::Auto),
            other => Err(format!("unknown recovery mode {other:?}")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecoveryOptions {
    pub mode: RecoveryMode,
    /// Upper bound for the linear search.
    pub max_m: u64,
    /// Replace linear search by baby-step giant-step.
    pub bsgs: bool,
}

impl RecoveryOptions {
    pub fn new(mode: RecoveryMode, max_m: u64) -> Self {
        RecoveryOptions {
            mode,
            max_m,
            bsgs: false,
        }
    }
}

/// Recovers an exponent of `g0` with the configured strategy.
pub fn recover(target: &GroupElement, options: &RecoveryOptions, params: &GroupParams) -> Result<Recovered, AheError> {
    let search = |target: &GroupElement| {
        if options.bsgs {
            recover_bsgs(target, options.max_m, params)
        } else {
            recover_bruteforce_counted(target, options.max_m, params)
        }
    };
    match options.mode {
        RecoveryMode::Log => recover_log(target).map(|value| Recovered { value, steps: 0 }),
        RecoveryMode::Bruteforce => search(target),
        RecoveryMode::Auto => match recover_log(target) {
            Ok(value) => Ok(Recovered { value, steps: 0 }),
            Err(AheError::NotPowerOfBase) => search(target),
            Err(e) => Err(e),
        },
    }
}

/// Combines `T` partials and recovers `T·m`. Division by `T` is left to
/// the caller, after decoding.
pub fn decrypt_aggregate(
    pds: &[PartialDecryption],
    threshold: usize,
    options: &RecoveryOptions,
    params: &GroupParams,
) -> Result<Recovered, AheError> {
    let combined = combine(pds, threshold, params)?;
    recover(&combined, options, params)
}

/// Largest `m` for which log recovery's precondition `2^m < p` holds.
pub fn log_recovery_limit(params: &GroupParams) -> u64 {
    params.p().bits() - 1
}
