//! Authenticated encryption of rule headers.

use chacha20poly1305::aead::{Aead, Payload};
use chacha20poly1305::{ChaCha20Poly1305, KeyInit, Nonce};

/// An AEAD used to seal rule headers. Implementations must reject any
/// ciphertext, nonce, or associated data that differs from what was sealed.
pub trait RuleCipher {
    const NONCE_LEN: usize;

    fn encrypt(&self, key: &[u8; 32], nonce: &[u8], aad: &[u8], plaintext: &[u8]) -> Vec<u8>;

    fn decrypt(&self, key: &[u8; 32], nonce: &[u8], aad: &[u8], ciphertext: &[u8])
        -> Option<Vec<u8>>;
}

/// ChaCha20-Poly1305 (RFC 8439).
#[derive(Debug, Clone, Copy, Default)]
pub struct ChaChaCipher;

impl RuleCipher for ChaChaCipher {
    const NONCE_LEN: usize = 12;

    fn encrypt(&self, key: &[u8; 32], nonce: &[u8], aad: &[u8], plaintext: &[u8]) -> Vec<u8> {
        ChaCha20Poly1305::new(key.into())
            .encrypt(Nonce::from_slice(nonce), Payload { msg: plaintext, aad })
            .expect("in-memory encryption does not fail")
    }

    fn decrypt(
        &self,
        key: &[u8; 32],
        nonce: &[u8],
        aad: &[u8],
        ciphertext: &[u8],
    ) -> Option<Vec<u8>> {
        if nonce.len() != Self::NONCE_LEN {
            return None;
        }
        ChaCha20Poly1305::new(key.into())
            .decrypt(Nonce::from_slice(nonce), Payload { msg: ciphertext, aad })
            .ok()
    }
}
