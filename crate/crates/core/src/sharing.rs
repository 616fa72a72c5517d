//! Polynomials over `Z_q`, Shamir shares, Pedersen and Feldman commitments,
//! and Lagrange reconstruction at zero.

use std::collections::BTreeSet;

use rand::{CryptoRng, RngCore};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::group::{GroupElement, GroupParams, Scalar};
use crate::wire::{self, WireError};

/// 1-based client index; doubles as the share evaluation point.
pub type ClientIndex = u32;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SharingError {
    #[error("threshold must be at least 1")]
    ZeroThreshold,
    #[error("coefficient vectors must both have length {expected}, got {f} and {f_prime}")]
    CoefficientLength { expected: usize, f: usize, f_prime: usize },
    #[error("evaluation point 0 would reveal the secret")]
    ZeroIndex,
    #[error("index {0} is not part of the interpolation set")]
    IndexNotInSet(ClientIndex),
    #[error("duplicate index {0}")]
    DuplicateIndex(ClientIndex),
    #[error("empty interpolation set")]
    EmptySet,
    #[error("{0} is not invertible modulo q")]
    NotInvertible(i64),
}

/// The dealer's pair of degree `T - 1` polynomials `f` and `f'`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SecretPolynomialPair {
    f: Vec<Scalar>,
    f_prime: Vec<Scalar>,
}

impl SecretPolynomialPair {
    pub fn sample<R: RngCore + CryptoRng>(
        threshold: usize,
        params: &GroupParams,
        rng: &mut R,
    ) -> Result<Self, SharingError> {
        if threshold == 0 {
            return Err(SharingError::ZeroThreshold);
        }
        let f = (0..threshold).map(|_| params.random_scalar(rng)).collect();
        let f_prime = (0..threshold).map(|_| params.random_scalar(rng)).collect();
        Ok(SecretPolynomialPair { f, f_prime })
    }

    pub fn from_coeffs(f: Vec<Scalar>, f_prime: Vec<Scalar>) -> Result<Self, SharingError> {
        if f.is_empty() {
            return Err(SharingError::ZeroThreshold);
        }
        if f.len() != f_prime.len() {
            return Err(SharingError::CoefficientLength {
                expected: f.len(),
                f: f.len(),
                f_prime: f_prime.len(),
            });
        }
        Ok(SecretPolynomialPair { f, f_prime })
    }

    pub fn threshold(&self) -> usize {
        self.f.len()
    }

    /// The contributed secret `z = f(0)`.
    pub fn secret(&self) -> &Scalar {
        &self.f[0]
    }

    pub fn f_coeffs(&self) -> &[Scalar] {
        &self.f
    }

    pub fn f_prime_coeffs(&self) -> &[Scalar] {
        &self.f_prime
    }

    /// Evaluates both polynomials at the recipient's index.
    pub fn evaluate(
        &self,
        dealer: ClientIndex,
        recipient: ClientIndex,
        params: &GroupParams,
    ) -> Result<ShareBundle, SharingError> {
        if recipient == 0 {
            return Err(SharingError::ZeroIndex);
        }
        let x = params.scalar_u64(recipient as u64);
        Ok(ShareBundle {
            dealer,
            recipient,
            s: horner(&self.f, &x, params),
            s_prime: horner(&self.f_prime, &x, params),
        })
    }
}

fn horner(coeffs: &[Scalar], x: &Scalar, params: &GroupParams) -> Scalar {
    let q = params.q();
    coeffs
        .iter()
        .rev()
        .fold(Scalar::zero(), |acc, c| acc.mul(x, q).add(c, q))
}

/// Evaluates `coeffs` (lowest degree first) at `x` modulo `q`.
pub fn evaluate_polynomial(coeffs: &[Scalar], x: u64, params: &GroupParams) -> Scalar {
    horner(coeffs, &params.scalar_u64(x), params)
}

/// Shares `(f(j), f'(j))` sent from `dealer` to `recipient = j`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShareBundle {
    pub dealer: ClientIndex,
    pub recipient: ClientIndex,
    pub s: Scalar,
    pub s_prime: Scalar,
}

impl ShareBundle {
    pub fn to_bytes(&self, params: &GroupParams) -> Vec<u8> {
        wire::encode_ints(&[self.s.value(), self.s_prime.value()], params.scalar_bytes())
    }

    pub fn from_bytes(
        dealer: ClientIndex,
        recipient: ClientIndex,
        bytes: &[u8],
        params: &GroupParams,
    ) -> Result<Self, WireError> {
        let mut ints = wire::decode_ints(bytes)?;
        if ints.len() != 2 {
            return Err(WireError::Count {
                expected: 2,
                found: ints.len(),
            });
        }
        let s_prime = params.scalar(ints.pop().expect("len 2"));
        let s = params.scalar(ints.pop().expect("len 2"));
        Ok(ShareBundle {
            dealer,
            recipient,
            s,
            s_prime,
        })
    }
}

/// `C_k = g^{a_k} y^{b_k}` for every coefficient pair.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PedersenCommitment(pub Vec<GroupElement>);

/// `A_k = g^{a_k}`; `A_0` is the dealer's public key share.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeldmanCommitment(pub Vec<GroupElement>);

macro_rules! commitment_wire {
    ($ty:ident) => {
        impl $ty {
            pub fn len(&self) -> usize {
                self.0.len()
            }

            pub fn is_empty(&self) -> bool {
                self.0.is_empty()
            }

            pub fn to_bytes(&self, params: &GroupParams) -> Vec<u8> {
                let ints: Vec<_> = self.0.iter().map(GroupElement::value).collect();
                wire::encode_ints(&ints, params.element_bytes())
            }

            pub fn from_bytes(bytes: &[u8], params: &GroupParams) -> Result<Self, WireError> {
                wire::decode_ints(bytes)?
                    .into_iter()
                    .map(|v| params.element(v).map_err(|_| WireError::Range))
                    .collect::<Result<Vec<_>, _>>()
                    .map($ty)
            }
        }
    };
}

commitment_wire!(PedersenCommitment);
commitment_wire!(FeldmanCommitment);

pub fn pedersen_commit(poly: &SecretPolynomialPair, params: &GroupParams) -> PedersenCommitment {
    let g = params.g();
    let y = params.y();
    PedersenCommitment(
        poly.f
            .iter()
            .zip(&poly.f_prime)
            .map(|(a, b)| params.mul(&params.pow(&g, a), &params.pow(&y, b)))
            .collect(),
    )
}

pub fn feldman_commit(poly: &SecretPolynomialPair, params: &GroupParams) -> FeldmanCommitment {
    FeldmanCommitment(poly.f.iter().map(|a| params.g_pow(a)).collect())
}

/// `Π_k C_k^{j^k}` with the powers of `j` reduced mod `q`.
fn commitment_at(commits: &[GroupElement], j: ClientIndex, params: &GroupParams) -> GroupElement {
    let q = params.q();
    let x = params.scalar_u64(j as u64);
    let mut power = Scalar::one();
    let mut acc = GroupElement::one();
    for c in commits {
        acc = params.mul(&acc, &params.pow(c, &power));
        power = power.mul(&x, q);
    }
    acc
}

/// Checks `g^s y^s' = Π_k C_k^{j^k} (mod p)`.
pub fn pedersen_verify(share: &ShareBundle, commit: &PedersenCommitment, params: &GroupParams) -> bool {
    if commit.is_empty() || share.recipient == 0 {
        return false;
    }
    let lhs = params.mul(&params.g_pow(&share.s), &params.pow(&params.y(), &share.s_prime));
    lhs == commitment_at(&commit.0, share.recipient, params)
}

/// Checks `g^s = Π_k A_k^{j^k} (mod p)`.
pub fn feldman_verify(share: &ShareBundle, commit: &FeldmanCommitment, params: &GroupParams) -> bool {
    if commit.is_empty() || share.recipient == 0 {
        return false;
    }
    params.g_pow(&share.s) == commitment_at(&commit.0, share.recipient, params)
}

/// Lagrange basis coefficient for `i` evaluated at zero over `set`:
/// `Π_{j ≠ i} j / (j - i) mod q`.
pub fn lagrange_coefficient(i: ClientIndex, set: &[ClientIndex], params: &GroupParams) -> Result<Scalar, SharingError> {
    if set.is_empty() {
        return Err(SharingError::EmptySet);
    }
    let mut seen = BTreeSet::new();
    for &j in set {
        if j == 0 {
            return Err(SharingError::ZeroIndex);
        }
        if !seen.insert(j) {
            return Err(SharingError::DuplicateIndex(j));
        }
    }
    if !seen.contains(&i) {
        return Err(SharingError::IndexNotInSet(i));
    }
    let q = params.q();
    let mut num = Scalar::one();
    let mut den = Scalar::one();
    for &j in set.iter().filter(|&&j| j != i) {
        let diff = params.scalar_u64(j as u64).sub(&params.scalar_u64(i as u64), q);
        num = num.mul(&params.scalar_u64(j as u64), q);
        den = den.mul(&diff, q);
    }
    let inv = den.inverse(q).ok_or(SharingError::NotInvertible(i as i64))?;
    Ok(num.mul(&inv, q))
}

/// Interpolates `f(0) = Σ λ_j f(j)` from `(index, value)` points.
pub fn reconstruct_at_zero(points: &[(ClientIndex, Scalar)], params: &GroupParams) -> Result<Scalar, SharingError> {
    let set: Vec<ClientIndex> = points.iter().map(|(i, _)| *i).collect();
    let q = params.q();
    points.iter().try_fold(Scalar::zero(), |acc, (i, v)| {
        let lambda = lagrange_coefficient(*i, &set, params)?;
        Ok(acc.add(&lambda.mul(v, q), q))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_bigint::BigUint;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn toy() -> GroupParams {
        GroupParams::toy()
    }

    fn s(v: u64) -> Scalar {
        toy().scalar_u64(v)
    }

    fn poly(f: &[u64], fp: &[u64]) -> SecretPolynomialPair {
        SecretPolynomialPair::from_coeffs(f.iter().map(|&v| s(v)).collect(), fp.iter().map(|&v| s(v)).collect())
            .unwrap()
    }

    fn elem(v: u64) -> GroupElement {
        toy().element(BigUint::from(v)).unwrap()
    }

    #[test]
    fn degree_zero_shares_are_constant() {
        let params = toy();
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let p = SecretPolynomialPair::sample(1, &params, &mut rng).unwrap();
        for j in 1..=5 {
            let share = p.evaluate(0, j, &params).unwrap();
            assert_eq!(&share.s, p.secret());
            assert_eq!(share.s_prime, p.f_prime_coeffs()[0]);
        }
        let p3 = SecretPolynomialPair::sample(3, &params, &mut rng).unwrap();
        assert_eq!(p3.f_coeffs().len(), 3);
        assert_eq!(p3.f_prime_coeffs().len(), 3);
        assert_eq!(evaluate_polynomial(p3.f_coeffs(), 0, &params), *p3.secret());
        assert_eq!(
            SecretPolynomialPair::sample(0, &params, &mut rng),
            Err(SharingError::ZeroThreshold)
        );
    }

    #[test]
    fn evaluate_examples() {
        let params = toy();
        let p = poly(&[3, 2], &[0, 0]);
        assert_eq!(p.evaluate(1, 4, &params).unwrap().s, s(0));
        assert_eq!(p.evaluate(1, 1, &params).unwrap().s, s(5));
        assert_eq!(p.evaluate(1, 0, &params), Err(SharingError::ZeroIndex));
    }

    #[test]
    fn commitment_examples() {
        let params = toy();
        assert_eq!(
            pedersen_commit(&poly(&[0], &[0]), &params),
            PedersenCommitment(vec![GroupElement::one()])
        );
        // 2^3 * 3^5 = 8 * 13 = 104 = 12 (mod 23)
        assert_eq!(
            pedersen_commit(&poly(&[3], &[5]), &params),
            PedersenCommitment(vec![elem(12)])
        );
        assert_eq!(
            feldman_commit(&poly(&[3, 5], &[0, 0]), &params),
            FeldmanCommitment(vec![elem(8), elem(9)])
        );
        assert_eq!(
            feldman_commit(&poly(&[0, 4], &[1, 1]), &params).0[0],
            GroupElement::one()
        );
    }

    #[test]
    fn distinct_polynomials_have_distinct_commitments() {
        let params = GroupParams::generate(32, 128, b"commit").unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        for _ in 0..20 {
            let a = SecretPolynomialPair::sample(3, &params, &mut rng).unwrap();
            let b = SecretPolynomialPair::sample(3, &params, &mut rng).unwrap();
            assert_ne!(pedersen_commit(&a, &params), pedersen_commit(&b, &params));
        }
    }

    #[test]
    fn honest_shares_verify() {
        let params = GroupParams::generate(32, 128, b"verify").unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        for t in 1..=4 {
            let p = SecretPolynomialPair::sample(t, &params, &mut rng).unwrap();
            let pc = pedersen_commit(&p, &params);
            let fc = feldman_commit(&p, &params);
            assert_eq!(fc.0[0], params.g_pow(p.secret()));
            for j in 1..=7 {
                let share = p.evaluate(1, j, &params).unwrap();
                assert!(pedersen_verify(&share, &pc, &params));
                assert!(feldman_verify(&share, &fc, &params));
                let mut bad = share.clone();
                bad.s = bad.s.add(&Scalar::one(), params.q());
                assert!(!pedersen_verify(&bad, &pc, &params));
                assert!(!feldman_verify(&bad, &fc, &params));
            }
        }
        let zero = poly(&[0, 0], &[0, 0]);
        let share = zero.evaluate(1, 3, &toy()).unwrap();
        assert!(pedersen_verify(&share, &pedersen_commit(&zero, &toy()), &toy()));
    }

    #[test]
    fn feldman_rejects_replaced_a0() {
        let params = toy();
        let p = poly(&[3, 5], &[1, 2]);
        let mut fc = feldman_commit(&p, &params);
        fc.0[0] = elem(4);
        for j in 1..=5 {
            assert!(!feldman_verify(&p.evaluate(1, j, &params).unwrap(), &fc, &params));
        }
    }

    #[test]
    fn lagrange_examples() {
        let params = toy();
        assert_eq!(lagrange_coefficient(1, &[1, 2], &params).unwrap(), s(2));
        assert_eq!(lagrange_coefficient(2, &[1, 2], &params).unwrap(), s(10));
        assert_eq!(lagrange_coefficient(4, &[4], &params).unwrap(), s(1));
        assert_eq!(lagrange_coefficient(1, &[1, 2, 3], &params).unwrap(), s(3));
        assert_eq!(lagrange_coefficient(2, &[1, 2, 3], &params).unwrap(), s(8));
        assert_eq!(lagrange_coefficient(3, &[1, 2, 3], &params).unwrap(), s(1));
        assert_eq!(
            lagrange_coefficient(4, &[1, 2, 3], &params),
            Err(SharingError::IndexNotInSet(4))
        );
        assert_eq!(
            lagrange_coefficient(1, &[1, 2, 2], &params),
            Err(SharingError::DuplicateIndex(2))
        );

        // 3 f(1) - 3 f(2) + f(3) = f(0) for every degree-2 f over Z_11
        for a in 0..11 {
            for b in 0..11 {
                for c in 0..11 {
                    let f = |x: u64| (a + b * x + c * x * x) % 11;
                    assert_eq!((3 * f(1) + 8 * f(2) + f(3)) % 11, f(0));
                }
            }
        }
    }

    #[test]
    fn reconstruct_from_any_subset() {
        let params = toy();
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        for _ in 0..50 {
            let p = SecretPolynomialPair::sample(3, &params, &mut rng).unwrap();
            let points: Vec<(ClientIndex, Scalar)> =
                (1..=5).map(|j| (j, p.evaluate(1, j, &params).unwrap().s)).collect();
            for a in 0..5 {
                for b in a + 1..5 {
                    for c in b + 1..5 {
                        let subset = [points[a].clone(), points[b].clone(), points[c].clone()];
                        assert_eq!(&reconstruct_at_zero(&subset, &params).unwrap(), p.secret());
                    }
                }
            }
        }
        let line = poly(&[7, 4], &[0, 0]);
        let pts = [
            (1, line.evaluate(1, 1, &params).unwrap().s),
            (2, line.evaluate(1, 2, &params).unwrap().s),
        ];
        assert_eq!(reconstruct_at_zero(&pts, &params).unwrap(), s(7));
        assert_eq!(
            reconstruct_at_zero(&[(1, s(1)), (1, s(2))], &params),
            Err(SharingError::DuplicateIndex(1))
        );
    }

    #[test]
    fn too_few_points_miss_the_secret() {
        let params = GroupParams::generate(32, 96, b"few").unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(8);
        let mut misses = 0;
        for _ in 0..100 {
            let p = SecretPolynomialPair::sample(3, &params, &mut rng).unwrap();
            let pts: Vec<_> = (1..=2).map(|j| (j, p.evaluate(1, j, &params).unwrap().s)).collect();
            if &reconstruct_at_zero(&pts, &params).unwrap() != p.secret() {
                misses += 1;
            }
        }
        assert!(misses >= 99);
    }

    #[test]
    fn toy_binding_matches_collision_oracle() {
        // y = 3 = 2^8 mod 23, so (s, s') collides iff s + 8 s' is unchanged mod 11.
        let params = toy();
        let log_y = (0u64..11).find(|&k| params.g_pow(&s(k)) == params.y()).unwrap();
        assert_eq!(log_y, 8);
        let p = poly(&[4, 9, 2], &[6, 1, 10]);
        let pc = pedersen_commit(&p, &params);
        let fc = feldman_commit(&p, &params);
        for j in 1..=6 {
            let honest = p.evaluate(1, j, &params).unwrap();
            let target = (honest.s.value() + BigUint::from(log_y) * honest.s_prime.value()) % BigUint::from(11u32);
            let mut accepted = 0;
            for a in 0..11u64 {
                for b in 0..11u64 {
                    let forged = ShareBundle {
                        s: s(a),
                        s_prime: s(b),
                        ..honest.clone()
                    };
                    let oracle = BigUint::from(a + log_y * b) % BigUint::from(11u32) == target;
                    assert_eq!(pedersen_verify(&forged, &pc, &params), oracle);
                    accepted += oracle as usize;
                }
                let forged = ShareBundle {
                    s: s(a),
                    ..honest.clone()
                };
                assert_eq!(feldman_verify(&forged, &fc, &params), s(a) == honest.s);
            }
            assert_eq!(accepted, 11);
        }
    }

    #[test]
    fn wire_round_trip() {
        let params = GroupParams::generate(32, 128, b"wire").unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let p = SecretPolynomialPair::sample(3, &params, &mut rng).unwrap();
        let share = p.evaluate(2, 5, &params).unwrap();
        let bytes = share.to_bytes(&params);
        assert_eq!(ShareBundle::from_bytes(2, 5, &bytes, &params).unwrap(), share);
        let pc = pedersen_commit(&p, &params);
        assert_eq!(
            PedersenCommitment::from_bytes(&pc.to_bytes(&params), &params).unwrap(),
            pc
        );
        let fc = feldman_commit(&p, &params);
        assert_eq!(
            FeldmanCommitment::from_bytes(&fc.to_bytes(&params), &params).unwrap(),
            fc
        );
    }
}
