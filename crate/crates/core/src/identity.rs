//! Benchmark packing, hashing and recoverable secp256k1 signatures.
//!
//! Wire layout of a packed benchmark (17 bytes, big-endian):
//!
//! | offset | width | field                                        |
//! |--------|-------|----------------------------------------------|
//! | 0      | 8     | throughput in milli-samples per second (u64) |
//! | 8      | 4     | benchmark steps (u32)                        |
//! | 12     | 4     | batch size (u32)                             |
//! | 16     | 1     | declared capacity (0 weak, 1 medium, 2 strong) |
//!
//! The benchmark hash is `SHA-256(packed)`. Signatures are taken over
//! `SHA-256("\x19Ethereum Signed Message:\n32" || hash)`; SHA-256 replaces
//! keccak throughout. Addresses are the last 20 bytes of the SHA-256 of the
//! 64-byte uncompressed public key (without the `0x04` tag).

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use secp256k1::ecdsa::{RecoverableSignature, RecoveryId};
use secp256k1::{Message, PublicKey, SecretKey, SECP256K1};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::capacity::CapacityClass;

pub const PACKED_BENCHMARK_LEN: usize = 17;
pub const SIGNATURE_LEN: usize = 65;
pub const ADDRESS_LEN: usize = 20;
pub const PERSONAL_MESSAGE_PREFIX: &[u8] = b"\x19Ethereum Signed Message:\n32";

/// Throughput is packed with three decimal places.
pub const THROUGHPUT_SCALE: f64 = 1000.0;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IdentityError {
    #[error("throughput {0} cannot be packed into 8 bytes at milli-sample precision")]
    ThroughputOutOfRange(String),
    #[error("benchmark steps and batch size must be at least 1")]
    EmptyBenchmark,
    #[error("invalid signing key")]
    InvalidKey,
    #[error("malformed signature")]
    MalformedSignature,
    #[error("signature does not recover to a public key")]
    Unrecoverable,
    #[error("invalid hex: {0}")]
    Hex(String),
    #[error("expected {expected} bytes, got {got}")]
    Length { expected: usize, got: usize },
    #[error("io error reading key: {0}")]
    Io(String),
}

pub fn sha256(data: &[u8]) -> Hash32 {
    Hash32(Sha256::digest(data).into())
}

macro_rules! hex_bytes {
    ($name:ident, $len:expr) => {
        impl $name {
            pub fn as_bytes(&self) -> &[u8; $len] {
                &self.0
            }

            pub fn to_hex(&self) -> String {
                hex::encode(self.0)
            }

            pub fn from_hex(s: &str) -> Result<Self, IdentityError> {
                let s = s.strip_prefix("0x").unwrap_or(s);
                let raw = hex::decode(s).map_err(|e| IdentityError::Hex(e.to_string()))?;
                let bytes: [u8; $len] = raw.as_slice().try_into().map_err(|_| IdentityError::Length {
                    expected: $len,
                    got: raw.len(),
                })?;
                Ok(Self(bytes))
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.to_hex())
            }
        }

        impl fmt::Debug for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}({})", stringify!($name), self.to_hex())
            }
        }

        impl FromStr for $name {
            type Err = IdentityError;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                Self::from_hex(s)
            }
        }

        impl Serialize for $name {
            fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
                serializer.serialize_str(&self.to_hex())
            }
        }

        impl<'de> Deserialize<'de> for $name {
            fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
                let s = String::deserialize(deserializer)?;
                // canonical form only: lowercase, no prefix
                if s.bytes().any(|b| b.is_ascii_uppercase()) || s.starts_with("0x") {
                    return Err(serde::de::Error::custom("expected lowercase hex without 0x prefix"));
                }
                Self::from_hex(&s).map_err(serde::de::Error::custom)
            }
        }
    };
}

/// 32-byte SHA-256 digest.
#[derive(Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Hash32(pub [u8; 32]);
hex_bytes!(Hash32, 32);

/// 20-byte participant identity derived from a public key.
#[derive(Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ParticipantAddress(pub [u8; ADDRESS_LEN]);
hex_bytes!(ParticipantAddress, ADDRESS_LEN);

/// `r || s || v` with `v` in `{27, 28}`.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Signature65(pub [u8; SIGNATURE_LEN]);
hex_bytes!(Signature65, SIGNATURE_LEN);

impl ParticipantAddress {
    pub fn from_public_key(pk: &PublicKey) -> Self {
        let uncompressed = pk.serialize_uncompressed();
        let digest = sha256(&uncompressed[1..]);
        let mut addr = [0u8; ADDRESS_LEN];
        addr.copy_from_slice(&digest.0[32 - ADDRESS_LEN..]);
        ParticipantAddress(addr)
    }
}

/// secp256k1 secret key.
#[derive(Clone, PartialEq, Eq)]
pub struct SigningKey(SecretKey);

impl fmt::Debug for SigningKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SigningKey({})", self.address())
    }
}

impl SigningKey {
    pub fn from_bytes(bytes: &[u8; 32]) -> Result<Self, IdentityError> {
        SecretKey::from_byte_array(bytes)
            .map(SigningKey)
            .map_err(|_| IdentityError::InvalidKey)
    }

    pub fn from_hex(s: &str) -> Result<Self, IdentityError> {
        let h = Hash32::from_hex(s.trim())?;
        Self::from_bytes(&h.0)
    }

    /// Loads a key stored as 64 hex characters (optionally `0x`-prefixed).
    pub fn from_hex_file(path: impl AsRef<Path>) -> Result<Self, IdentityError> {
        let text = std::fs::read_to_string(path).map_err(|e| IdentityError::Io(e.to_string()))?;
        Self::from_hex(&text)
    }

    /// Deterministic key from a seed label. Rehashes until the scalar is in range.
    pub fn derive(seed: &[u8]) -> Self {
        let mut digest = sha256(seed);
        loop {
            if let Ok(k) = Self::from_bytes(&digest.0) {
                return k;
            }
            digest = sha256(&digest.0);
        }
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0.secret_bytes())
    }

    pub fn public_key(&self) -> PublicKey {
        PublicKey::from_secret_key_global(&self.0)
    }

    pub fn address(&self) -> ParticipantAddress {
        ParticipantAddress::from_public_key(&self.public_key())
    }
}

/// Throughput benchmark declaration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    /// Samples per second.
    pub throughput: f64,
    pub steps: u32,
    pub batch_size: u32,
    pub declared_capacity: CapacityClass,
}

/// Benchmark plus its hash and the participant's signature over it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignedBenchmark {
    pub report: BenchmarkReport,
    pub benchmark_hash: Hash32,
    pub signature: Signature65,
}

impl SignedBenchmark {
    pub fn create(report: BenchmarkReport, key: &SigningKey) -> Result<Self, IdentityError> {
        let benchmark_hash = hash_benchmark(&report)?;
        let signature = sign_benchmark(&benchmark_hash, key);
        Ok(Self {
            report,
            benchmark_hash,
            signature,
        })
    }
}

pub fn pack_benchmark(report: &BenchmarkReport) -> Result<[u8; PACKED_BENCHMARK_LEN], IdentityError> {
    if report.steps == 0 || report.batch_size == 0 {
        return Err(IdentityError::EmptyBenchmark);
    }
    let scaled = (report.throughput * THROUGHPUT_SCALE).round();
    // 2^64 is exactly representable; anything at or above it does not fit
    if !(0.0..18_446_744_073_709_551_616.0).contains(&scaled) {
        return Err(IdentityError::ThroughputOutOfRange(report.throughput.to_string()));
    }
    let mut out = [0u8; PACKED_BENCHMARK_LEN];
    out[0..8].copy_from_slice(&(scaled as u64).to_be_bytes());
    out[8..12].copy_from_slice(&report.steps.to_be_bytes());
    out[12..16].copy_from_slice(&report.batch_size.to_be_bytes());
    out[16] = report.declared_capacity.code();
    Ok(out)
}

pub fn hash_benchmark(report: &BenchmarkReport) -> Result<Hash32, IdentityError> {
    Ok(sha256(&pack_benchmark(report)?))
}

/// Digest actually signed: SHA-256 over the personal-message prefix and the hash.
pub fn personal_message_digest(hash: &Hash32) -> Hash32 {
    let mut buf = Vec::with_capacity(PERSONAL_MESSAGE_PREFIX.len() + 32);
    buf.extend_from_slice(PERSONAL_MESSAGE_PREFIX);
    buf.extend_from_slice(&hash.0);
    sha256(&buf)
}

/// Signs with RFC 6979 nonces, so repeated calls give the same bytes.
pub fn sign_benchmark(hash: &Hash32, key: &SigningKey) -> Signature65 {
    let msg = Message::from_digest(personal_message_digest(hash).0);
    let sig = SECP256K1.sign_ecdsa_recoverable(&msg, &key.0);
    let (recid, compact) = sig.serialize_compact();
    let mut out = [0u8; SIGNATURE_LEN];
    out[..64].copy_from_slice(&compact);
    out[64] = 27 + i32::from(recid) as u8;
    Signature65(out)
}

pub fn recover_signer(hash: &Hash32, signature: &Signature65) -> Result<ParticipantAddress, IdentityError> {
    let v = signature.0[64];
    let recid = match v {
        27 | 28 => i32::from(v - 27),
        0 | 1 => i32::from(v),
        _ => return Err(IdentityError::MalformedSignature),
    };
    let recid = RecoveryId::try_from(recid).map_err(|_| IdentityError::MalformedSignature)?;
    let sig = RecoverableSignature::from_compact(&signature.0[..64], recid)
        .map_err(|_| IdentityError::MalformedSignature)?;
    let msg = Message::from_digest(personal_message_digest(hash).0);
    let pk = SECP256K1
        .recover_ecdsa(&msg, &sig)
        .map_err(|_| IdentityError::Unrecoverable)?;
    Ok(ParticipantAddress::from_public_key(&pk))
}
