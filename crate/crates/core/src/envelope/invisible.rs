//! Base-4 encoding of bytes into zero-width code points.
//!
//! Each byte becomes four digits, most significant pair of bits first.
//! None of the digits render in ordinary text editors.

use thiserror::Error;

/// Digits 0..=3: ZERO WIDTH SPACE, ZERO WIDTH NON-JOINER, ZERO WIDTH JOINER,
/// WORD JOINER.
pub const ALPHABET: [char; 4] = ['\u{200B}', '\u{200C}', '\u{200D}', '\u{2060}'];

pub const DIGITS_PER_BYTE: usize = 4;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum InvisibleError {
    #[error("character {ch:?} at position {index} is not an invisible digit")]
    InvalidAlphabet { ch: char, index: usize },
    #[error("digit count {0} is not a multiple of four")]
    Truncated(usize),
}

pub fn is_invisible(c: char) -> bool {
    ALPHABET.contains(&c)
}

pub fn contains_invisible(text: &str) -> bool {
    text.chars().any(is_invisible)
}

fn digit_value(c: char) -> Option<u8> {
    ALPHABET.iter().position(|&d| d == c).map(|v| v as u8)
}

pub fn encode_invisible(bytes: &[u8]) -> String {
    let mut out = String::with_capacity(bytes.len() * DIGITS_PER_BYTE * 3);
    for &byte in bytes {
        for shift in [6u8, 4, 2, 0] {
            out.push(ALPHABET[((byte >> shift) & 0b11) as usize]);
        }
    }
    out
}

/// Digit value of one UTF-8 encoded alphabet character.
fn utf8_digit(c: &[u8]) -> Option<u8> {
    match c {
        [0xE2, 0x80, 0x8B] => Some(0),
        [0xE2, 0x80, 0x8C] => Some(1),
        [0xE2, 0x80, 0x8D] => Some(2),
        [0xE2, 0x81, 0xA0] => Some(3),
        _ => None,
    }
}

pub fn decode_invisible(text: &str) -> Result<Vec<u8>, InvisibleError> {
    // Every alphabet character is three bytes in UTF-8, so well-formed text
    // decodes a byte from each twelve; anything else takes the slow path,
    // which also locates the offending character.
    let raw = text.as_bytes();
    if raw.len() % (3 * DIGITS_PER_BYTE) == 0 {
        let fast: Option<Vec<u8>> = raw
            .chunks_exact(3 * DIGITS_PER_BYTE)
            .map(|group| {
                group
                    .chunks_exact(3)
                    .try_fold(0u8, |acc, c| utf8_digit(c).map(|d| (acc << 2) | d))
            })
            .collect();
        if let Some(bytes) = fast {
            return Ok(bytes);
        }
    }
    decode_slow(text)
}

fn decode_slow(text: &str) -> Result<Vec<u8>, InvisibleError> {
    let mut out = Vec::with_capacity(text.len() / (DIGITS_PER_BYTE * 3));
    let mut acc = 0u8;
    let mut count = 0usize;
    for (index, ch) in text.chars().enumerate() {
        let d = digit_value(ch).ok_or(InvisibleError::InvalidAlphabet { ch, index })?;
        acc = (acc << 2) | d;
        count += 1;
        if count % DIGITS_PER_BYTE == 0 {
            out.push(acc);
            acc = 0;
        }
    }
    if count % DIGITS_PER_BYTE != 0 {
        return Err(InvisibleError::Truncated(count));
    }
    Ok(out)
}
