//! Additively homomorphic encryption of fixed-point gradient statistics.
//!
//! Paillier with generator `g = n + 1`. Reals enter the scheme through a
//! [`FixedPointCodec`] (scale 2^32); negative plaintexts use the usual
//! modular convention (values above `n / 2` decode as negative).
//!
//! [`HeContext`] is what parties hold: the active party has the secret key,
//! passive parties only the public key. In [`HeMode::Plaintext`] the same
//! fixed-point integers travel unencrypted, which makes the two modes
//! comparable value-for-value.

use std::fmt;
use std::str::FromStr;

use num_bigint::{BigUint, RandBigInt};
use num_integer::Integer;
use num_prime::RandPrime;
use num_traits::{One, ToPrimitive, Zero};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const MIN_KEY_BITS: usize = 256;
pub const DEFAULT_KEY_BITS: usize = 2048;
pub const TEST_KEY_BITS: usize = 512;

// ---------------------------------------------------------------------------
// Fixed-point codec

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixedPointCodec {
    pub scale_bits: u32,
    /// log2 of the number of terms a sum may hold without leaving i64.
    pub headroom_bits: u32,
}

impl Default for FixedPointCodec {
    fn default() -> Self {
        FixedPointCodec {
            scale_bits: 32,
            headroom_bits: 24,
        }
    }
}

impl FixedPointCodec {
    pub fn scale(&self) -> f64 {
        (1u64 << self.scale_bits) as f64
    }

    /// Largest admissible magnitude of a single encoded value (exclusive).
    pub fn bound(&self) -> i64 {
        1i64 << (63 - self.headroom_bits)
    }

    pub fn encode(&self, x: f64) -> Result<i64> {
        let v = (x * self.scale()).round();
        if !(v.abs() < self.bound() as f64) {
            return Err(Error::PlaintextOverflow(x.to_string()));
        }
        Ok(v as i64)
    }

    pub fn decode(&self, v: i64) -> f64 {
        v as f64 / self.scale()
    }
}

// ---------------------------------------------------------------------------
// Keys

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct KeyFingerprint(pub u64);

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PublicKey {
    pub bits: usize,
    pub n: BigUint,
    pub n_squared: BigUint,
    half_n: BigUint,
    pub fingerprint: KeyFingerprint,
}

impl PublicKey {
    pub fn from_modulus(n: BigUint) -> Self {
        let mut h = Sha256::new();
        h.update(n.to_bytes_be());
        let digest = h.finalize();
        let fingerprint = KeyFingerprint(u64::from_be_bytes(digest[..8].try_into().expect("8 bytes")));
        PublicKey {
            bits: n.bits() as usize,
            n_squared: &n * &n,
            half_n: &n >> 1u32,
            n,
            fingerprint,
        }
    }

    fn plaintext(&self, value: i64) -> BigUint {
        let mag = BigUint::from(value.unsigned_abs());
        if value < 0 {
            &self.n - mag
        } else {
            mag
        }
    }

    fn random_unit(&self, rng: &mut ChaCha20Rng) -> BigUint {
        loop {
            let r = rng.gen_biguint_below(&self.n);
            if !r.is_zero() && r.gcd(&self.n).is_one() {
                return r;
            }
        }
    }

    pub fn encrypt(&self, value: i64, rng: &mut ChaCha20Rng) -> Ciphertext {
        let m = self.plaintext(value);
        let r = self.random_unit(rng);
        let gm = (BigUint::one() + &m * &self.n) % &self.n_squared;
        let rn = r.modpow(&self.n, &self.n_squared);
        Ciphertext {
            value: (gm * rn) % &self.n_squared,
            key: self.fingerprint,
        }
    }

    /// Additive identity: the deterministic encryption of 0.
    pub fn zero(&self) -> Ciphertext {
        Ciphertext {
            value: BigUint::one(),
            key: self.fingerprint,
        }
    }

    pub fn add(&self, a: &Ciphertext, b: &Ciphertext) -> Result<Ciphertext> {
        if a.key != self.fingerprint || b.key != self.fingerprint {
            return Err(Error::KeyMismatch);
        }
        Ok(Ciphertext {
            value: (&a.value * &b.value) % &self.n_squared,
            key: self.fingerprint,
        })
    }

    pub fn to_text(&self) -> String {
        format!("vfboost-paillier-public v1\nbits {}\nn {}\n", self.bits, self.n)
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let fields = parse_key_text(text, "vfboost-paillier-public v1")?;
        let n = big_field(&fields, "n")?;
        Ok(PublicKey::from_modulus(n))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SecretKey {
    p: BigUint,
    q: BigUint,
    p_squared: BigUint,
    q_squared: BigUint,
    hp: BigUint,
    hq: BigUint,
    q_inv_p: BigUint,
    public: PublicKey,
}

impl SecretKey {
    fn from_primes(p: BigUint, q: BigUint) -> Result<Self> {
        let public = PublicKey::from_modulus(&p * &q);
        let p_squared = &p * &p;
        let q_squared = &q * &q;
        let h = |prime: &BigUint, sq: &BigUint| -> Result<BigUint> {
            // g = n + 1, so g^(prime-1) mod prime^2 and L_prime of it.
            let g = &public.n + 1u32;
            let gp = g.modpow(&(prime - 1u32), sq);
            let l = (gp - 1u32) / prime;
            l.modinv(prime).ok_or_else(|| Error::Malformed {
                what: "secret key",
                detail: "L(g^(p-1)) not invertible".into(),
            })
        };
        let hp = h(&p, &p_squared)?;
        let hq = h(&q, &q_squared)?;
        let q_inv_p = q.modinv(&p).ok_or_else(|| Error::Malformed {
            what: "secret key",
            detail: "q not invertible mod p".into(),
        })?;
        Ok(SecretKey {
            p,
            q,
            p_squared,
            q_squared,
            hp,
            hq,
            q_inv_p,
            public,
        })
    }

    pub fn public(&self) -> &PublicKey {
        &self.public
    }

    /// Encryption using the factorization: r^n is computed modulo p^2 and q^2
    /// with reduced exponents and recombined.
    pub fn encrypt(&self, value: i64, rng: &mut ChaCha20Rng) -> Ciphertext {
        let pk = &self.public;
        let m = pk.plaintext(value);
        let r = pk.random_unit(rng);
        let phi_p2 = &self.p_squared - &self.p;
        let phi_q2 = &self.q_squared - &self.q;
        let rp = (&r % &self.p_squared).modpow(&(&pk.n % &phi_p2), &self.p_squared);
        let rq = (&r % &self.q_squared).modpow(&(&pk.n % &phi_q2), &self.q_squared);
        let rn = crt(&rp, &rq, &self.p_squared, &self.q_squared);
        let gm = (BigUint::one() + &m * &pk.n) % &pk.n_squared;
        Ciphertext {
            value: (gm * rn) % &pk.n_squared,
            key: pk.fingerprint,
        }
    }

    pub fn decrypt(&self, ct: &Ciphertext) -> Result<i64> {
        if ct.key != self.public.fingerprint {
            return Err(Error::KeyMismatch);
        }
        let mp = {
            let c = &ct.value % &self.p_squared;
            let d = c.modpow(&(&self.p - 1u32), &self.p_squared);
            ((d - 1u32) / &self.p * &self.hp) % &self.p
        };
        let mq = {
            let c = &ct.value % &self.q_squared;
            let d = c.modpow(&(&self.q - 1u32), &self.q_squared);
            ((d - 1u32) / &self.q * &self.hq) % &self.q
        };
        // m = mq + q * ((mp - mq) * q^-1 mod p)
        let diff = (&mp + &self.p - (&mq % &self.p)) % &self.p;
        let m = mq + &self.q * ((diff * &self.q_inv_p) % &self.p);
        let pk = &self.public;
        let signed = if m > pk.half_n {
            (&pk.n - &m).to_i64().map(|v| -v)
        } else {
            m.to_i64()
        };
        signed.ok_or_else(|| Error::PlaintextOverflow(m.to_string()))
    }

    pub fn to_text(&self) -> String {
        format!(
            "vfboost-paillier-secret v1\nbits {}\np {}\nq {}\n",
            self.public.bits, self.p, self.q
        )
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let fields = parse_key_text(text, "vfboost-paillier-secret v1")?;
        SecretKey::from_primes(big_field(&fields, "p")?, big_field(&fields, "q")?)
    }
}

fn crt(a: &BigUint, b: &BigUint, m1: &BigUint, m2: &BigUint) -> BigUint {
    // x = a (mod m1), x = b (mod m2)
    let m1_inv = m1.modinv(m2).expect("coprime moduli");
    let diff = (b + m2 - (a % m2)) % m2;
    a + m1 * ((diff * m1_inv) % m2)
}

fn parse_key_text<'a>(text: &'a str, header: &str) -> Result<Vec<(&'a str, &'a str)>> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some(header) {
        return Err(Error::Malformed {
            what: "key file",
            detail: format!("expected header {header:?}"),
        });
    }
    Ok(lines
        .filter(|l| !l.trim().is_empty())
        .filter_map(|l| l.trim().split_once(' '))
        .collect())
}

fn big_field(fields: &[(&str, &str)], name: &str) -> Result<BigUint> {
    let raw = fields
        .iter()
        .find(|(k, _)| *k == name)
        .map(|(_, v)| *v)
        .ok_or_else(|| Error::Malformed {
            what: "key file",
            detail: format!("missing field {name}"),
        })?;
    BigUint::from_str(raw.trim()).map_err(|e| Error::Malformed {
        what: "key file",
        detail: format!("{name}: {e}"),
    })
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KeyPair {
    pub secret: SecretKey,
}

impl KeyPair {
    pub fn public(&self) -> &PublicKey {
        self.secret.public()
    }
}

/// Deterministic Paillier key generation: two primes of `bits / 2` bits from a
/// ChaCha20 stream seeded with `seed`.
pub fn keygen(bits: usize, seed: u64) -> Result<KeyPair> {
    if bits < MIN_KEY_BITS {
        return Err(Error::KeyTooSmall(bits));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    loop {
        let p: BigUint = rng.gen_prime_exact(bits / 2, None);
        let q: BigUint = rng.gen_prime_exact(bits - bits / 2, None);
        if p == q {
            continue;
        }
        let n = &p * &q;
        let phi = (&p - 1u32) * (&q - 1u32);
        if n.bits() as usize != bits || !n.gcd(&phi).is_one() {
            continue;
        }
        return Ok(KeyPair {
            secret: SecretKey::from_primes(p, q)?,
        });
    }
}

// ---------------------------------------------------------------------------
// Ciphertexts and protocol values

#[derive(Clone, PartialEq, Eq)]
pub struct Ciphertext {
    pub value: BigUint,
    pub key: KeyFingerprint,
}

impl fmt::Debug for Ciphertext {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let digits = self.value.to_string();
        write!(f, "Ciphertext({}..; key {:016x})", &digits[..digits.len().min(12)], self.key.0)
    }
}

impl Serialize for Ciphertext {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&format!("{:016x}:{}", self.key.0, self.value))
    }
}

impl<'de> Deserialize<'de> for Ciphertext {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let raw = String::deserialize(d)?;
        let (key, value) = raw.split_once(':').ok_or_else(|| D::Error::custom("ciphertext without key tag"))?;
        Ok(Ciphertext {
            key: KeyFingerprint(u64::from_str_radix(key, 16).map_err(D::Error::custom)?),
            value: BigUint::from_str(value).map_err(D::Error::custom)?,
        })
    }
}

/// A gradient statistic as it travels between parties.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeValue {
    /// Fixed-point integer in plaintext mode.
    Plain(i64),
    Cipher(Ciphertext),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum HeMode {
    #[default]
    Plaintext,
    Paillier,
}

impl FromStr for HeMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "plaintext" => Ok(HeMode::Plaintext),
            "paillier" => Ok(HeMode::Paillier),
            other => Err(Error::Config(format!("unknown he mode {other:?}"))),
        }
    }
}

impl fmt::Display for HeMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            HeMode::Plaintext => "plaintext",
            HeMode::Paillier => "paillier",
        })
    }
}

/// A party's view of the encryption scheme.
#[derive(Clone, Debug)]
pub enum HeContext {
    Plaintext,
    /// Public key only: may add ciphertexts, cannot decrypt.
    Public(PublicKey),
    /// Key holder (the active party).
    Owner(KeyPair),
}

impl HeContext {
    pub fn mode(&self) -> HeMode {
        match self {
            HeContext::Plaintext => HeMode::Plaintext,
            _ => HeMode::Paillier,
        }
    }

    pub fn public_view(&self) -> HeContext {
        match self {
            HeContext::Owner(kp) => HeContext::Public(kp.public().clone()),
            other => other.clone(),
        }
    }

    pub fn zero(&self) -> HeValue {
        match self {
            HeContext::Plaintext => HeValue::Plain(0),
            HeContext::Public(pk) => HeValue::Cipher(pk.zero()),
            HeContext::Owner(kp) => HeValue::Cipher(kp.public().zero()),
        }
    }

    fn public_key(&self) -> Option<&PublicKey> {
        match self {
            HeContext::Plaintext => None,
            HeContext::Public(pk) => Some(pk),
            HeContext::Owner(kp) => Some(kp.public()),
        }
    }

    pub fn encrypt(&self, value: i64, rng: &mut ChaCha20Rng) -> HeValue {
        match self {
            HeContext::Plaintext => HeValue::Plain(value),
            HeContext::Public(pk) => HeValue::Cipher(pk.encrypt(value, rng)),
            HeContext::Owner(kp) => HeValue::Cipher(kp.secret.encrypt(value, rng)),
        }
    }

    pub fn add(&self, a: &HeValue, b: &HeValue) -> Result<HeValue> {
        match (a, b, self.public_key()) {
            (HeValue::Plain(x), HeValue::Plain(y), None) => x
                .checked_add(*y)
                .map(HeValue::Plain)
                .ok_or_else(|| Error::PlaintextOverflow(format!("{x} + {y}"))),
            (HeValue::Cipher(x), HeValue::Cipher(y), Some(pk)) => pk.add(x, y).map(HeValue::Cipher),
            _ => Err(Error::Protocol("mixed plaintext and ciphertext values".into())),
        }
    }

    /// In-place accumulation; avoids cloning the accumulator.
    pub fn add_assign(&self, acc: &mut HeValue, v: &HeValue) -> Result<()> {
        if let (HeValue::Plain(x), HeValue::Plain(y), HeContext::Plaintext) = (&mut *acc, v, self) {
            *x = x
                .checked_add(*y)
                .ok_or_else(|| Error::PlaintextOverflow(format!("{x} + {y}")))?;
            return Ok(());
        }
        match (acc, v, self.public_key()) {
            (HeValue::Cipher(x), HeValue::Cipher(y), Some(pk)) => {
                if x.key != pk.fingerprint || y.key != pk.fingerprint {
                    return Err(Error::KeyMismatch);
                }
                x.value = (&x.value * &y.value) % &pk.n_squared;
                Ok(())
            }
            _ => Err(Error::Protocol("mixed plaintext and ciphertext values".into())),
        }
    }

    pub fn decrypt(&self, v: &HeValue) -> Result<i64> {
        match (self, v) {
            (HeContext::Plaintext, HeValue::Plain(x)) => Ok(*x),
            (HeContext::Owner(kp), HeValue::Cipher(c)) => kp.secret.decrypt(c),
            (HeContext::Public(_), HeValue::Cipher(_)) => Err(Error::MissingSecretKey),
            _ => Err(Error::Protocol("value does not match the session's encryption mode".into())),
        }
    }
}
