//! Symmetric and public-key primitives used by the actors.
//!
//! Signatures and public-key encryption sit behind small traits so the
//! actors never depend on a concrete scheme.

use chacha20poly1305::aead::{Aead, KeyInit, Payload as AeadPayload};
use chacha20poly1305::{ChaCha20Poly1305, Key, Nonce};
use ed25519_dalek::{Signature, Signer as _, SigningKey, Verifier as _, VerifyingKey};
use hmac::{Hmac, Mac};
use rand_core::{CryptoRng, RngCore};
use sha2::{Digest, Sha256};
use x25519_dalek::{PublicKey, StaticSecret};

pub type SymKey = [u8; 32];

const KDF_DOMAIN: &[u8] = b"urban-abe/kdf/v1";
const CHAIN_DOMAIN: &[u8] = b"urban-abe/dek-chain/v1";
const BOX_DOMAIN: &[u8] = b"urban-abe/pke-box/v1";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CryptoError {
    #[error("authenticated decryption failed")]
    Aead,
    #[error("MAC check failed")]
    Mac,
    #[error("malformed sealed box")]
    MalformedBox,
}

/// Domain-separated key derivation: `SHA-256(domain ‖ label ‖ input)`.
pub fn kdf(label: &str, input: &[u8]) -> SymKey {
    let mut h = Sha256::new();
    h.update(KDF_DOMAIN);
    h.update((label.len() as u32).to_be_bytes());
    h.update(label.as_bytes());
    h.update(input);
    h.finalize().into()
}

/// One step of the device key chain. Distinct from [`kdf`] by domain.
pub fn chain_step(dek: &SymKey) -> SymKey {
    let mut h = Sha256::new();
    h.update(CHAIN_DOMAIN);
    h.update(dek);
    h.finalize().into()
}

/// `H^n(dek)`.
pub fn chain_forward(dek: &SymKey, n: u32) -> SymKey {
    (0..n).fold(*dek, |k, _| chain_step(&k))
}

pub fn aead_seal(key: &SymKey, nonce: &[u8; 12], aad: &[u8], plaintext: &[u8]) -> Vec<u8> {
    ChaCha20Poly1305::new(Key::from_slice(key))
        .encrypt(
            Nonce::from_slice(nonce),
            AeadPayload {
                msg: plaintext,
                aad,
            },
        )
        .expect("ChaCha20-Poly1305 encryption is infallible for in-memory buffers")
}

pub fn aead_open(
    key: &SymKey,
    nonce: &[u8; 12],
    aad: &[u8],
    ciphertext: &[u8],
) -> Result<Vec<u8>, CryptoError> {
    ChaCha20Poly1305::new(Key::from_slice(key))
        .decrypt(
            Nonce::from_slice(nonce),
            AeadPayload {
                msg: ciphertext,
                aad,
            },
        )
        .map_err(|_| CryptoError::Aead)
}

pub fn mac(key: &SymKey, data: &[u8]) -> [u8; 32] {
    let mut m = <Hmac<Sha256> as Mac>::new_from_slice(key).expect("HMAC takes any key length");
    m.update(data);
    m.finalize().into_bytes().into()
}

pub fn mac_verify(key: &SymKey, data: &[u8], tag: &[u8]) -> Result<(), CryptoError> {
    let mut m = <Hmac<Sha256> as Mac>::new_from_slice(key).expect("HMAC takes any key length");
    m.update(data);
    m.verify_slice(tag).map_err(|_| CryptoError::Mac)
}

pub fn random_key(rng: &mut (impl RngCore + CryptoRng)) -> SymKey {
    let mut k = [0u8; 32];
    rng.fill_bytes(&mut k);
    k
}

pub trait Signer: Send + Sync {
    fn sign(&self, msg: &[u8]) -> Vec<u8>;
    fn verifier(&self) -> Box<dyn Verifier>;
}

pub trait Verifier: Send + Sync {
    fn verify(&self, msg: &[u8], signature: &[u8]) -> bool;
    fn box_clone(&self) -> Box<dyn Verifier>;
}

impl Clone for Box<dyn Verifier> {
    fn clone(&self) -> Self {
        self.box_clone()
    }
}

pub struct Ed25519Signer(SigningKey);

impl Ed25519Signer {
    pub fn generate(rng: &mut (impl RngCore + CryptoRng)) -> Self {
        Ed25519Signer(SigningKey::generate(rng))
    }
}

impl Signer for Ed25519Signer {
    fn sign(&self, msg: &[u8]) -> Vec<u8> {
        self.0.sign(msg).to_bytes().to_vec()
    }

    fn verifier(&self) -> Box<dyn Verifier> {
        Box::new(Ed25519Verifier(self.0.verifying_key()))
    }
}

#[derive(Clone)]
pub struct Ed25519Verifier(VerifyingKey);

impl Verifier for Ed25519Verifier {
    fn verify(&self, msg: &[u8], signature: &[u8]) -> bool {
        let Ok(bytes) = <[u8; 64]>::try_from(signature) else {
            return false;
        };
        self.0.verify(msg, &Signature::from_bytes(&bytes)).is_ok()
    }

    fn box_clone(&self) -> Box<dyn Verifier> {
        Box::new(self.clone())
    }
}

/// Receiving side of a public-key encryption scheme.
pub trait PkeRecipient: Send + Sync {
    fn public_key(&self) -> Vec<u8>;
    fn open(&self, sealed: &[u8]) -> Result<Vec<u8>, CryptoError>;
}

/// Sending side: encrypts to a recipient's public key.
pub trait PkeSender: Send + Sync {
    fn seal(
        &self,
        recipient: &[u8],
        msg: &[u8],
        rng: &mut dyn RngCoreCrypto,
    ) -> Result<Vec<u8>, CryptoError>;
}

/// Object-safe union of `RngCore + CryptoRng`.
pub trait RngCoreCrypto: RngCore + CryptoRng {}
impl<T: RngCore + CryptoRng> RngCoreCrypto for T {}

/// X25519 key agreement with an ephemeral sender key, SHA-256 key derivation
/// and ChaCha20-Poly1305. Each ephemeral key encrypts one message, so the
/// nonce is fixed.
pub struct X25519Box;

pub struct X25519Recipient(StaticSecret);

impl X25519Recipient {
    pub fn generate(rng: &mut (impl RngCore + CryptoRng)) -> Self {
        let mut seed = [0u8; 32];
        rng.fill_bytes(&mut seed);
        X25519Recipient(StaticSecret::from(seed))
    }
}

fn box_key(shared: &[u8; 32], ephemeral: &[u8; 32], recipient: &[u8; 32]) -> SymKey {
    let mut h = Sha256::new();
    h.update(BOX_DOMAIN);
    h.update(shared);
    h.update(ephemeral);
    h.update(recipient);
    h.finalize().into()
}

impl PkeRecipient for X25519Recipient {
    fn public_key(&self) -> Vec<u8> {
        PublicKey::from(&self.0).as_bytes().to_vec()
    }

    fn open(&self, sealed: &[u8]) -> Result<Vec<u8>, CryptoError> {
        if sealed.len() < 32 {
            return Err(CryptoError::MalformedBox);
        }
        let eph: [u8; 32] = sealed[..32].try_into().unwrap();
        let shared = self.0.diffie_hellman(&PublicKey::from(eph));
        let me = PublicKey::from(&self.0);
        let key = box_key(shared.as_bytes(), &eph, me.as_bytes());
        aead_open(&key, &[0u8; 12], &[], &sealed[32..])
    }
}

impl PkeSender for X25519Box {
    fn seal(
        &self,
        recipient: &[u8],
        msg: &[u8],
        rng: &mut dyn RngCoreCrypto,
    ) -> Result<Vec<u8>, CryptoError> {
        let to: [u8; 32] = recipient.try_into().map_err(|_| CryptoError::MalformedBox)?;
        let mut seed = [0u8; 32];
        rng.fill_bytes(&mut seed);
        let eph = StaticSecret::from(seed);
        let eph_pub = PublicKey::from(&eph);
        let shared = eph.diffie_hellman(&PublicKey::from(to));
        let key = box_key(shared.as_bytes(), eph_pub.as_bytes(), &to);
        let mut out = eph_pub.as_bytes().to_vec();
        out.extend(aead_seal(&key, &[0u8; 12], &[], msg));
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_chacha::ChaCha20Rng;
    use rand_core::SeedableRng;

    #[test]
    fn chain_and_kdf_are_distinct_and_deterministic() {
        let k = [7u8; 32];
        assert_eq!(chain_step(&k), chain_step(&k));
        assert_ne!(chain_step(&k), kdf("", &k));
        assert_eq!(chain_forward(&k, 3), chain_step(&chain_step(&chain_step(&k))));
        assert_eq!(chain_forward(&k, 0), k);
        assert_ne!(kdf("a", b"bc"), kdf("ab", b"c"));
    }

    #[test]
    fn aead_and_mac_detect_tampering() {
        let k = [1u8; 32];
        let mut ct = aead_seal(&k, &[0; 12], b"aad", b"hello");
        assert_eq!(aead_open(&k, &[0; 12], b"aad", &ct).unwrap(), b"hello");
        assert_eq!(aead_open(&k, &[0; 12], b"aaX", &ct), Err(CryptoError::Aead));
        ct[0] ^= 1;
        assert_eq!(aead_open(&k, &[0; 12], b"aad", &ct), Err(CryptoError::Aead));
        let tag = mac(&k, b"data");
        assert!(mac_verify(&k, b"data", &tag).is_ok());
        assert_eq!(mac_verify(&k, b"dat4", &tag), Err(CryptoError::Mac));
    }

    #[test]
    fn signatures_and_boxes() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let s = Ed25519Signer::generate(&mut rng);
        let v = s.verifier();
        let sig = s.sign(b"msg");
        assert!(v.verify(b"msg", &sig));
        assert!(!v.verify(b"msh", &sig));
        assert!(!v.verify(b"msg", &sig[1..]));

        let r = X25519Recipient::generate(&mut rng);
        let sealed = X25519Box.seal(&r.public_key(), b"secret", &mut rng).unwrap();
        assert_eq!(r.open(&sealed).unwrap(), b"secret");
        let other = X25519Recipient::generate(&mut rng);
        assert!(other.open(&sealed).is_err());
        assert!(r.open(&sealed[..20]).is_err());
    }
}
