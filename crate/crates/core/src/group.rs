//! Schnorr-style discrete-log group parameters and the modular arithmetic
//! kernel shared by every other module.
//!
//! A parameter set is the tuple `(p, q, g, y, g0)`: `p` is the modulus, `q`
//! a prime dividing `p - 1`, `g` and `y` independent generators of the
//! order-`q` subgroup, and `g0 = 2` the base messages are encoded under.

use std::fmt;
use std::str::FromStr;

use num_bigint::{BigUint, RandBigInt};
use num_integer::Integer;
use num_traits::{One, ToPrimitive, Zero};
use rand::{CryptoRng, Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Smallest accepted subgroup order size in bits.
pub const MIN_KEY_BITS: u64 = 16;

/// Miller-Rabin rounds; 4^-64 is far below the 2^-80 error budget.
pub const MILLER_RABIN_ROUNDS: usize = 64;

const MAX_Q_ATTEMPTS: usize = 16;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GroupError {
    #[error("invalid bit sizes: key_bits={key_bits}, group_bits={group_bits}")]
    InvalidBitSizes { key_bits: u64, group_bits: u64 },
    #[error("parameter seed must not be empty")]
    EmptySeed,
    #[error("no valid (p, q) pair found for key_bits={key_bits}, group_bits={group_bits}")]
    ParamsNotFound { key_bits: u64, group_bits: u64 },
    #[error("invalid group parameters: {0}")]
    Invalid(String),
    #[error("malformed parameter text: {0}")]
    Parse(String),
}

/// An exponent, always reduced modulo `q`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Scalar(#[serde(with = "hex_biguint")] BigUint);

impl Scalar {
    pub fn zero() -> Self {
        Scalar(BigUint::zero())
    }

    pub fn one() -> Self {
        Scalar(BigUint::one())
    }

    /// Reduces `value` modulo `q`.
    pub fn new(value: BigUint, q: &BigUint) -> Self {
        Scalar(value % q)
    }

    pub fn from_u64(value: u64, q: &BigUint) -> Self {
        Scalar(BigUint::from(value) % q)
    }

    pub fn value(&self) -> &BigUint {
        &self.0
    }

    pub fn into_inner(self) -> BigUint {
        self.0
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    pub fn add(&self, other: &Scalar, q: &BigUint) -> Scalar {
        Scalar((&self.0 + &other.0) % q)
    }

    pub fn sub(&self, other: &Scalar, q: &BigUint) -> Scalar {
        Scalar((&self.0 + q - &other.0) % q)
    }

    pub fn mul(&self, other: &Scalar, q: &BigUint) -> Scalar {
        Scalar((&self.0 * &other.0) % q)
    }

    pub fn neg(&self, q: &BigUint) -> Scalar {
        Scalar((q - &self.0) % q)
    }

    /// Multiplicative inverse modulo `q`, `None` for zero.
    pub fn inverse(&self, q: &BigUint) -> Option<Scalar> {
        mod_inverse(&self.0, q).map(Scalar)
    }
}

impl fmt::Display for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A residue in `[1, p - 1]`.
///
/// Most elements live in the order-`q` subgroup. Message-carrying ciphertext
/// components may not when `g0` lies outside it (see [`GroupParams::g0_in_subgroup`]).
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GroupElement(#[serde(with = "hex_biguint")] BigUint);

impl GroupElement {
    pub fn one() -> Self {
        GroupElement(BigUint::one())
    }

    pub fn value(&self) -> &BigUint {
        &self.0
    }

    pub fn into_inner(self) -> BigUint {
        self.0
    }

    pub fn is_one(&self) -> bool {
        self.0.is_one()
    }
}

impl fmt::Display for GroupElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Public group parameters `(p, q, g, y, g0)`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupParams {
    #[serde(with = "hex_biguint")]
    p: BigUint,
    #[serde(with = "hex_biguint")]
    q: BigUint,
    #[serde(with = "hex_biguint")]
    g: BigUint,
    #[serde(with = "hex_biguint")]
    y: BigUint,
    #[serde(with = "hex_biguint")]
    g0: BigUint,
}

impl GroupParams {
    /// Builds a parameter set from raw values, checking every invariant.
    pub fn from_parts(p: BigUint, q: BigUint, g: BigUint, y: BigUint, g0: BigUint) -> Result<Self, GroupError> {
        let params = GroupParams { p, q, g, y, g0 };
        params.validate()?;
        Ok(params)
    }

    /// The 23/11 group with `g = 2`, `y = 3`, small enough for exhaustive tests.
    pub fn toy() -> Self {
        GroupParams {
            p: BigUint::from(23u32),
            q: BigUint::from(11u32),
            g: BigUint::from(2u32),
            y: BigUint::from(3u32),
            g0: BigUint::from(2u32),
        }
    }

    /// Frozen 256/3072-bit parameter set, produced by
    /// `generate(256, 3072, PRESET_SEED_3072)`.
    pub fn preset_3072() -> Self {
        let parse = |s: &str| BigUint::parse_bytes(s.as_bytes(), 16).expect("preset constant");
        GroupParams {
            p: parse(presets::P_3072),
            q: parse(presets::Q_256),
            g: parse(presets::G_3072),
            y: parse(presets::Y_3072),
            g0: BigUint::from(2u32),
        }
    }

    /// Deterministically generates a parameter set from `seed`.
    ///
    /// `q` is drawn first as a `key_bits` prime, then `p = r*q + 1` is
    /// searched over even cofactors `r` until it is a `group_bits` prime.
    /// `g` and `y` are `h^r mod p` for hash-derived `h`, so nobody knows
    /// `log_g(y)`.
    pub fn generate(key_bits: u64, group_bits: u64, seed: &[u8]) -> Result<Self, GroupError> {
        if key_bits < MIN_KEY_BITS || group_bits <= key_bits {
            return Err(GroupError::InvalidBitSizes { key_bits, group_bits });
        }
        if seed.is_empty() {
            return Err(GroupError::EmptySeed);
        }
        let mut hasher = Sha256::new();
        hasher.update(b"daeq/params/v1");
        hasher.update(key_bits.to_be_bytes());
        hasher.update(group_bits.to_be_bytes());
        hasher.update(seed);
        let mut rng_seed = [0u8; 32];
        rng_seed.copy_from_slice(&hasher.finalize());
        let mut rng = ChaCha20Rng::from_seed(rng_seed);

        let p_attempts = (group_bits as usize).saturating_mul(8).max(256);
        for _ in 0..MAX_Q_ATTEMPTS {
            let q = random_prime(key_bits, &mut rng);
            let low = (BigUint::one() << (group_bits - 1)) - 1u32;
            let high = (BigUint::one() << group_bits) - 1u32;
            // r ranges so that r*q + 1 has exactly group_bits bits.
            let r_min = low.div_ceil(&q);
            let r_max = &high / &q;
            if r_min >= r_max {
                continue;
            }
            for _ in 0..p_attempts {
                let mut r = rng.gen_biguint_range(&r_min, &(&r_max + 1u32));
                if r.is_odd() {
                    r += 1u32;
                }
                if r > r_max {
                    continue;
                }
                let p = &r * &q + 1u32;
                if p.bits() != group_bits {
                    continue;
                }
                if is_probable_prime(&p, MILLER_RABIN_ROUNDS, &mut rng) {
                    let g = derive_generator(seed, b"g", &p, &r, None);
                    let y = derive_generator(seed, b"y", &p, &r, Some(&g));
                    return Ok(GroupParams {
                        p,
                        q,
                        g,
                        y,
                        g0: BigUint::from(2u32),
                    });
                }
            }
        }
        Err(GroupError::ParamsNotFound { key_bits, group_bits })
    }

    pub fn validate(&self) -> Result<(), GroupError> {
        let one = BigUint::one();
        if self.p < BigUint::from(5u32) || self.q < BigUint::from(2u32) {
            return Err(GroupError::Invalid("p or q too small".into()));
        }
        if !(&self.p - 1u32).is_multiple_of(&self.q) {
            return Err(GroupError::Invalid("q does not divide p - 1".into()));
        }
        for (name, v) in [("g", &self.g), ("y", &self.y)] {
            if *v < BigUint::from(2u32) || *v >= self.p {
                return Err(GroupError::Invalid(format!("{name} out of range")));
            }
            if v.modpow(&self.q, &self.p) != one {
                return Err(GroupError::Invalid(format!("{name} is not in the order-q subgroup")));
            }
        }
        if self.g == self.y {
            return Err(GroupError::Invalid("g and y must differ".into()));
        }
        if self.g0 != BigUint::from(2u32) {
            return Err(GroupError::Invalid("g0 must be 2".into()));
        }
        Ok(())
    }

    pub fn p(&self) -> &BigUint {
        &self.p
    }

    pub fn q(&self) -> &BigUint {
        &self.q
    }

    pub fn g(&self) -> GroupElement {
        GroupElement(self.g.clone())
    }

    pub fn y(&self) -> GroupElement {
        GroupElement(self.y.clone())
    }

    pub fn g0(&self) -> GroupElement {
        GroupElement(self.g0.clone())
    }

    /// Cofactor `r` in `p - 1 = r*q`.
    pub fn cofactor(&self) -> BigUint {
        (&self.p - 1u32) / &self.q
    }

    pub fn key_bits(&self) -> u64 {
        self.q.bits()
    }

    pub fn group_bits(&self) -> u64 {
        self.p.bits()
    }

    /// Fixed serialized width of a group element.
    pub fn element_bytes(&self) -> usize {
        self.p.bits().div_ceil(8) as usize
    }

    /// Fixed serialized width of a scalar.
    pub fn scalar_bytes(&self) -> usize {
        self.q.bits().div_ceil(8) as usize
    }

    /// Whether `g0` has order `q`. True for the toy group; false for any
    /// generated set with `p > 2^q`, where `c2` then carries a component
    /// outside the subgroup.
    pub fn g0_in_subgroup(&self) -> bool {
        self.g0.modpow(&self.q, &self.p).is_one()
    }

    pub fn is_subgroup_member(&self, v: &BigUint) -> bool {
        !v.is_zero() && *v < self.p && v.modpow(&self.q, &self.p).is_one()
    }

    /// Wraps a raw residue, rejecting zero and values `>= p`.
    pub fn element(&self, v: BigUint) -> Result<GroupElement, GroupError> {
        if v.is_zero() || v >= self.p {
            return Err(GroupError::Invalid("element out of range".into()));
        }
        Ok(GroupElement(v))
    }

    pub fn scalar(&self, v: BigUint) -> Scalar {
        Scalar::new(v, &self.q)
    }

    pub fn scalar_u64(&self, v: u64) -> Scalar {
        Scalar::from_u64(v, &self.q)
    }

    /// `base^exp mod p`.
    pub fn pow(&self, base: &GroupElement, exp: &Scalar) -> GroupElement {
        GroupElement(base.0.modpow(&exp.0, &self.p))
    }

    /// `base^exp mod p` with an unreduced integer exponent.
    pub fn pow_big(&self, base: &GroupElement, exp: &BigUint) -> GroupElement {
        GroupElement(base.0.modpow(exp, &self.p))
    }

    pub fn g_pow(&self, exp: &Scalar) -> GroupElement {
        GroupElement(self.g.modpow(&exp.0, &self.p))
    }

    pub fn mul(&self, a: &GroupElement, b: &GroupElement) -> GroupElement {
        GroupElement((&a.0 * &b.0) % &self.p)
    }

    pub fn inverse(&self, a: &GroupElement) -> GroupElement {
        GroupElement(mod_inverse(&a.0, &self.p).expect("nonzero residue mod prime"))
    }

    pub fn product<'a, I>(&self, items: I) -> GroupElement
    where
        I: IntoIterator<Item = &'a GroupElement>,
    {
        items.into_iter().fold(GroupElement::one(), |acc, x| self.mul(&acc, x))
    }

    /// Uniform over `[0, q - 1]`.
    pub fn random_scalar<R: RngCore + CryptoRng>(&self, rng: &mut R) -> Scalar {
        Scalar(rng.gen_biguint_below(&self.q))
    }

    /// Uniform over `[1, q - 1]`.
    pub fn random_nonzero_scalar<R: RngCore + CryptoRng>(&self, rng: &mut R) -> Scalar {
        Scalar(rng.gen_biguint_range(&BigUint::one(), &self.q))
    }

    /// Canonical text form: one `name=0x<hex>` line per field in the order
    /// p, q, g, y, g0.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (name, v) in self.fields() {
            out.push_str(&format!("{name}=0x{}\n", v.to_str_radix(16)));
        }
        out
    }

    /// Parses [`to_text`](Self::to_text) output. Decimal values are also
    /// accepted.
    pub fn from_text(text: &str) -> Result<Self, GroupError> {
        let names = ["p", "q", "g", "y", "g0"];
        let lines: Vec<&str> = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .collect();
        if lines.len() != names.len() {
            return Err(GroupError::Parse(format!(
                "expected {} fields, found {}",
                names.len(),
                lines.len()
            )));
        }
        let mut values = Vec::with_capacity(names.len());
        for (line, expected) in lines.iter().zip(names) {
            let (name, raw) = line
                .split_once('=')
                .ok_or_else(|| GroupError::Parse(format!("missing '=' in {line:?}")))?;
            if name.trim() != expected {
                return Err(GroupError::Parse(format!(
                    "expected field {expected}, found {}",
                    name.trim()
                )));
            }
            values.push(parse_biguint(raw.trim())?);
        }
        let mut it = values.into_iter();
        let mut next = || it.next().expect("length checked");
        GroupParams::from_parts(next(), next(), next(), next(), next())
    }

    fn fields(&self) -> [(&'static str, &BigUint); 5] {
        [
            ("p", &self.p),
            ("q", &self.q),
            ("g", &self.g),
            ("y", &self.y),
            ("g0", &self.g0),
        ]
    }
}

impl FromStr for GroupParams {
    type Err = GroupError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        GroupParams::from_text(s)
    }
}

fn parse_biguint(raw: &str) -> Result<BigUint, GroupError> {
    let parsed = match raw.strip_prefix("0x").or_else(|| raw.strip_prefix("0X")) {
        Some(hex) => BigUint::parse_bytes(hex.as_bytes(), 16),
        None => BigUint::parse_bytes(raw.as_bytes(), 10),
    };
    parsed.ok_or_else(|| GroupError::Parse(format!("not an integer: {raw:?}")))
}

/// Modular inverse by the extended Euclidean algorithm.
pub fn mod_inverse(a: &BigUint, m: &BigUint) -> Option<BigUint> {
    use num_bigint::BigInt;
    let a = BigInt::from(a % m);
    let m_int = BigInt::from(m.clone());
    let ext = a.extended_gcd(&m_int);
    if !ext.gcd.is_one() {
        return None;
    }
    let inv = ext.x.mod_floor(&m_int);
    inv.to_biguint()
}

fn derive_generator(seed: &[u8], tag: &[u8], p: &BigUint, cofactor: &BigUint, avoid: Option<&BigUint>) -> BigUint {
    let width = p.bits().div_ceil(8) as usize + 16;
    for counter in 0u64.. {
        let h = hash_to_int(seed, tag, counter, width) % p;
        if h < BigUint::from(2u32) {
            continue;
        }
        let candidate = h.modpow(cofactor, p);
        if candidate.is_one() || Some(&candidate) == avoid {
            continue;
        }
        return candidate;
    }
    unreachable!("counter space exhausted")
}

fn hash_to_int(seed: &[u8], tag: &[u8], counter: u64, width: usize) -> BigUint {
    let mut bytes = Vec::with_capacity(width + 32);
    let mut block = 0u32;
    while bytes.len() < width {
        let mut hasher = Sha256::new();
        hasher.update(b"daeq/generator/v1");
        hasher.update((tag.len() as u32).to_be_bytes());
        hasher.update(tag);
        hasher.update(counter.to_be_bytes());
        hasher.update(block.to_be_bytes());
        hasher.update(seed);
        bytes.extend_from_slice(&hasher.finalize());
        block += 1;
    }
    bytes.truncate(width);
    BigUint::from_bytes_be(&bytes)
}

fn random_prime<R: Rng>(bits: u64, rng: &mut R) -> BigUint {
    loop {
        let mut candidate = rng.gen_biguint(bits);
        candidate.set_bit(bits - 1, true);
        candidate.set_bit(0, true);
        if is_probable_prime(&candidate, MILLER_RABIN_ROUNDS, rng) {
            return candidate;
        }
    }
}

const SMALL_PRIMES: [u32; 54] = [
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89, 97, 101, 103, 107, 109,
    113, 127, 131, 137, 139, 149, 151, 157, 163, 167, 173, 179, 181, 191, 193, 197, 199, 211, 223, 227, 229, 233, 239,
    241, 251,
];

/// Miller-Rabin with `rounds` random bases, preceded by trial division.
pub fn is_probable_prime<R: Rng + ?Sized>(n: &BigUint, rounds: usize, rng: &mut R) -> bool {
    if let Some(small) = n.to_u32() {
        if small < 2 {
            return false;
        }
        if SMALL_PRIMES.contains(&small) {
            return true;
        }
    }
    for &sp in SMALL_PRIMES.iter() {
        if (n % sp).is_zero() {
            return false;
        }
    }
    let one = BigUint::one();
    let n_minus_one = n - 1u32;
    let s = n_minus_one.trailing_zeros().expect("n > 1");
    let d = &n_minus_one >> s;
    let two = BigUint::from(2u32);
    'witness: for _ in 0..rounds {
        let a = rng.gen_biguint_range(&two, &n_minus_one);
        let mut x = a.modpow(&d, n);
        if x == one || x == n_minus_one {
            continue;
        }
        for _ in 1..s {
            x = x.modpow(&two, n);
            if x == n_minus_one {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

/// Seed string for [`GroupParams::preset_3072`].
/// Serde adapter writing big integers as `0x`-prefixed hex strings.
pub mod hex_biguint {
    use num_bigint::BigUint;
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &BigUint, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format!("0x{v:x}"))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BigUint, D::Error> {
        let text = String::deserialize(d)?;
        let digits = text
            .strip_prefix("0x")
            .ok_or_else(|| D::Error::custom("expected 0x prefix"))?;
        BigUint::parse_bytes(digits.as_bytes(), 16).ok_or_else(|| D::Error::custom("invalid hex"))
    }
}

pub const PRESET_SEED_3072: &[u8] = b"daeq-fl/preset/256-3072";

mod presets {
    pub const Q_256: &str = "d196b8fdd69a3195e0854bdf1c01cdfc64040dd0f4b9348c0038a58fac0977fb";
    pub const P_3072: &str = concat!(
        "8bd7f506b2f59ad91b59d7128624c37967c965f8721bcfd06591fe2041f7dc78",
        "57b0b6a4afe6fd2bf9394802ec9462c8fc457d2d95d23d21fe790ba2c173305e",
        "2826ce3e2430fd456ea7d129cb776cc482e6d85deeab3abf9968898fb69406f0",
        "732dc2cc1bca0285db47e1af4c04fe346f44fc023bf1b5f3b5d1c3fe8a2e0498",
        "7c4c6b1726904a46a8157584652c768b4e5f08046fc5976f09447336a657c2f7",
        "98bf9af9dd9826c47e6e5690c9bcbf89bb25018a43840fdac4626d9039f42978",
        "4b963edc09b39a9db483bd25f0cfb9b79acf91ac7b18d9a1b6b7ad3753aeb725",
        "c9e647e7de8f831e124502e5066633fabbb4babc73db8656ca8753b78b800480",
        "af97d78dd652053c577ff43aa90330ba7620b552c59a4ced297d0016680cd481",
        "e742612cee5af20eebaf2422f9a360bd0fba4c95d3a270106a6b3c5ae54233cb",
        "b55baf735787201ea66f95717c9b95396af435909c1fcfa627a5ea9becfadc9b",
        "449ba8e64e0744525e2b28d5e46484ebfaff271e72d7b9198bfe7f125a3216ab",
    );
    pub const G_3072: &str = concat!(
        "6915fe296d63daeb20e7c09a117163c15d0151ac6ee46986e869cadbc9655071",
        "c386a3c0ed8d4767c1f8d09c85c15b9e60fe8ca56e736132b03d9ab1cf3cbc87",
        "92bd562d25461b093072b40ab667ad13437fc94065507a0050cbd728f4d488ed",
        "760009043d0b8438243404f683dde2c87176e5941137366b568d34f5f9796db1",
        "5558133d63c90135531cb7d1638149a704a618be2328654247166283214098ad",
        "ec86208d65e3ae6e19e15f964bedc0f25773c0b55bde861b7c36f006f8cbaa03",
        "498e11b778d4da0323a109ff8dbe61e05ffea66fea58b0aa7385e7abbf7ddea7",
        "bcfe124d6538b77f0133f18ce985cae05125ee94a2577fdf662a3524a91833e2",
        "e53d759487096147c1f0fed704e9a53338022a48a73ae97df5777ef2026abb8c",
        "d1035b898a3026c6f7060a01e3c7f4db421ac87588f424ec127a2213321e9740",
        "9e3f0cd2ae5a1f2f044732cf8ee3dd61a93086d6498ef3e69dab8d0702305a65",
        "62d4e1ee403e772092ea926652b97f8b3f460ec20107cabff2ef3021d0c1b443",
    );
    pub const Y_3072: &str = concat!(
        "3ac5c658b68b3c39c5bae7fbe38cc2e17f5b4187d218d9cc6144e0ebf0da010d",
        "ea9e921dedbcf0de6adc281f8ec8c4e8c2d4c7bd4256cf85ce5bf63a52359518",
        "72900088f82e1b61d89fc55b56e8178885781898f6b9d37b205884f3ecd5a217",
        "694089ea5685e89d90c3037cd93b611e45a22594487afa530fbcdc574fc3eea5",
        "27019cccea11a430ea28f92f55b0800d81968ad5ae656b9f1b6c77e1ae2cadd6",
        "23da24afa0bb41b5736d1b4b446b683ba5b5302bb386a8bef144e2dadcf1a35b",
        "395bd5930cde64ac261cd7a144d0756459a249209f7562db0c21be6fe2c2aa26",
        "b91bfd4c628f913e1355a82c23346579a64a46f945c940dd243237d308d93a98",
        "335b7b149aad2c6509479eaf5e7a7fe96ee4236abcbd87b79b197834b1a78345",
        "157476fef281bc2ce72395c6ae6dd3de89428cf68fcec05929a74176d1bf21a4",
        "0e956ca07181095f1f12e5a4cbec073052bd385e582bbf03d320d044c148d52a",
        "dd16323c6e10ce0737cee8b46a03f5b2631865b0510ab3460695bcd819490712",
    );
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_pow(base: u64, exp: u64, p: u64) -> u64 {
        let mut acc = 1u64;
        for _ in 0..exp {
            acc = acc * base % p;
        }
        acc
    }

    #[test]
    fn toy_group_is_valid() {
        let params = GroupParams::toy();
        params.validate().unwrap();
        // exhaustive: the powers of 2 mod 23 cycle with period exactly 11
        let powers: Vec<u64> = (0..=11).map(|e| naive_pow(2, e, 23)).collect();
        assert_eq!(powers[11], 1);
        assert!(powers[1..11].iter().all(|&v| v != 1));
        assert!(params.g0_in_subgroup());
        assert_eq!(params.cofactor(), BigUint::from(2u32));
    }

    #[test]
    fn pow_matches_naive_oracle_exhaustively() {
        let params = GroupParams::toy();
        for base in 1u64..23 {
            for exp in 0u64..11 {
                let got = params.pow(&GroupElement(BigUint::from(base)), &params.scalar_u64(exp));
                assert_eq!(got.value(), &BigUint::from(naive_pow(base, exp, 23)));
            }
        }
        assert_eq!(params.pow(&params.g(), &params.scalar_u64(11)), GroupElement::one());
        assert_eq!(params.g_pow(&Scalar::zero()), GroupElement::one());
    }

    #[test]
    fn exponent_law() {
        let params = GroupParams::generate(32, 128, b"exp-law").unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        for _ in 0..20 {
            let a = params.random_scalar(&mut rng);
            let b = params.random_scalar(&mut rng);
            let lhs = params.g_pow(&a.add(&b, params.q()));
            let rhs = params.mul(&params.g_pow(&a), &params.g_pow(&b));
            assert_eq!(lhs, rhs);
        }
    }

    #[test]
    fn generate_small_params() {
        let params = GroupParams::generate(16, 64, b"t").unwrap();
        assert_eq!(params.key_bits(), 16);
        assert_eq!(params.group_bits(), 64);
        assert!((params.p() - 1u32).is_multiple_of(params.q()));
        assert!(params.is_subgroup_member(params.g().value()));
        assert!(params.is_subgroup_member(params.y().value()));
        assert_ne!(params.g(), params.y());
        assert_eq!(params.g0().value(), &BigUint::from(2u32));
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        assert!(is_probable_prime(params.q(), 64, &mut rng));
        assert!(is_probable_prime(params.p(), 64, &mut rng));
    }

    #[test]
    fn generation_is_deterministic() {
        let a = GroupParams::generate(32, 160, b"seed").unwrap();
        let b = GroupParams::generate(32, 160, b"seed").unwrap();
        let c = GroupParams::generate(32, 160, b"other").unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn generation_rejects_bad_sizes() {
        assert!(matches!(
            GroupParams::generate(8, 64, b"t"),
            Err(GroupError::InvalidBitSizes { .. })
        ));
        assert!(matches!(
            GroupParams::generate(64, 64, b"t"),
            Err(GroupError::InvalidBitSizes { .. })
        ));
        assert_eq!(GroupParams::generate(16, 64, b""), Err(GroupError::EmptySeed));
    }

    #[test]
    fn preset_3072_is_valid() {
        let params = GroupParams::preset_3072();
        params.validate().unwrap();
        assert_eq!(params.key_bits(), 256);
        assert_eq!(params.group_bits(), 3072);
        assert_eq!(params.element_bytes(), 384);
        assert!(!params.g0_in_subgroup());
    }

    #[test]
    fn preset_3072_matches_generator() {
        let generated = GroupParams::generate(256, 3072, PRESET_SEED_3072).unwrap();
        assert_eq!(generated, GroupParams::preset_3072());
    }

    #[test]
    fn miller_rabin_small_numbers() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let primes: Vec<u32> = (2u32..2000)
            .filter(|n| (2..*n).take_while(|d| d * d <= *n).all(|d| n % d != 0))
            .collect();
        for n in 0u32..2000 {
            let expected = primes.contains(&n);
            assert_eq!(is_probable_prime(&BigUint::from(n), 16, &mut rng), expected, "n={n}");
        }
        // Carmichael number
        assert!(!is_probable_prime(&BigUint::from(561u32 * 1_000_003), 16, &mut rng));
    }

    #[test]
    fn random_scalar_is_uniform_on_toy_group() {
        let params = GroupParams::toy();
        let mut rng = ChaCha20Rng::seed_from_u64(42);
        let draws = 100_000usize;
        let mut counts = [0usize; 11];
        for _ in 0..draws {
            counts[params.random_scalar(&mut rng).value().to_usize().unwrap()] += 1;
        }
        let expected = draws as f64 / 11.0;
        let sigma = (draws as f64 * (1.0 / 11.0) * (10.0 / 11.0)).sqrt();
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        for &c in &counts {
            assert!((c as f64 - expected).abs() < 5.0 * sigma);
        }
        // chi-square, 10 degrees of freedom, p = 0.001 critical value
        assert!(chi2 < 29.59, "chi2={chi2}");

        for _ in 0..10_000 {
            assert!(!params.random_nonzero_scalar(&mut rng).is_zero());
        }
    }

    #[test]
    fn random_scalar_is_reproducible() {
        let params = GroupParams::toy();
        let mut a = ChaCha20Rng::seed_from_u64(9);
        let mut b = ChaCha20Rng::seed_from_u64(9);
        let xs: Vec<_> = (0..32).map(|_| params.random_scalar(&mut a)).collect();
        let ys: Vec<_> = (0..32).map(|_| params.random_scalar(&mut b)).collect();
        assert_eq!(xs, ys);
    }

    #[test]
    fn text_format_round_trips() {
        for params in [GroupParams::toy(), GroupParams::generate(32, 128, b"txt").unwrap()] {
            let text = params.to_text();
            assert_eq!(text.lines().count(), 5);
            assert_eq!(GroupParams::from_text(&text).unwrap(), params);
        }
        let decimal = "p=23\nq=11\ng=2\ny=3\ng0=2\n";
        assert_eq!(GroupParams::from_text(decimal).unwrap(), GroupParams::toy());
        assert!(GroupParams::from_text("q=11\np=23\ng=2\ny=3\ng0=2\n").is_err());
        assert!(GroupParams::from_text("p=23\nq=11\ng=2\ny=2\ng0=2\n").is_err());
    }

    #[test]
    fn scalar_inverse() {
        let q = BigUint::from(11u32);
        for v in 1u64..11 {
            let s = Scalar::from_u64(v, &q);
            let inv = s.inverse(&q).unwrap();
            assert!(s.mul(&inv, &q).value().is_one());
        }
        assert!(Scalar::zero().inverse(&q).is_none());
    }
}
