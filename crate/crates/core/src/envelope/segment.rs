use rand::RngCore;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::cipher::{ChaChaCipher, RuleCipher};
use super::invisible::{contains_invisible, decode_invisible, encode_invisible};
use super::keys::{validate_owner_id, OwnerKey};
use super::EnvelopeError;
use crate::authz::{check_mode_set, AuthorizationMode, SegmentText};

const HEADER_VERSION: u8 = 1;
const CHECKSUM_LEN: usize = 8;
const DIGEST_LEN: usize = 32;

/// A mode granted to one specific actor on top of the segment's own modes.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Grant {
    pub grantee: String,
    pub mode: AuthorizationMode,
}

/// Authorization carried by a sealed segment.
///
/// `modes` are imposed by the segment's owners and bind every actor at once.
/// An optional `grant` lets one named actor edit under a different mode
/// instead (e.g. a read-only section the billing party may prepend to).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SectionPolicy {
    pub modes: Vec<AuthorizationMode>,
    pub grant: Option<Grant>,
}

impl SectionPolicy {
    pub fn single(mode: AuthorizationMode) -> Self {
        SectionPolicy {
            modes: vec![mode],
            grant: None,
        }
    }

    pub fn with_grant(mut self, grantee: impl Into<String>, mode: AuthorizationMode) -> Self {
        self.grant = Some(Grant {
            grantee: grantee.into(),
            mode,
        });
        self
    }

    /// The first owner mode.
    pub fn primary(&self) -> AuthorizationMode {
        self.modes[0]
    }

    /// Modes an edit by `actor` must satisfy.
    pub fn modes_for(&self, actor: &str) -> Vec<AuthorizationMode> {
        match &self.grant {
            Some(g) if g.grantee == actor => vec![g.mode],
            _ => self.modes.clone(),
        }
    }

    /// Owner modes and the granted mode must be pairwise compatible.
    pub fn validate(&self) -> Result<(), EnvelopeError> {
        let mut all = self.modes.clone();
        if let Some(g) = &self.grant {
            validate_owner_id(&g.grantee)?;
            if !all.contains(&g.mode) {
                all.push(g.mode);
            }
        }
        let mut dedup = self.modes.clone();
        dedup.sort();
        dedup.dedup();
        if dedup.len() != self.modes.len() {
            return Err(EnvelopeError::DuplicateMode);
        }
        check_mode_set(&all)?;
        Ok(())
    }
}

impl From<AuthorizationMode> for SectionPolicy {
    fn from(mode: AuthorizationMode) -> Self {
        SectionPolicy::single(mode)
    }
}

/// Segment text with its encrypted rule header. The header consists solely
/// of invisible characters; the body never contains any.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SealedSegment {
    header: String,
    body: String,
}

/// Result of a successful [`open_segment`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OpenedSegment {
    pub owner_id: String,
    pub text: SegmentText,
    pub policy: SectionPolicy,
    pub padding_len: u16,
}

impl OpenedSegment {
    pub fn mode(&self) -> AuthorizationMode {
        self.policy.primary()
    }
}

impl SealedSegment {
    /// Reassembles a segment from its two parts without checking them;
    /// [`open_segment`] does the checking.
    pub fn from_parts(header: impl Into<String>, body: impl Into<String>) -> Self {
        SealedSegment {
            header: header.into(),
            body: body.into(),
        }
    }

    pub fn header(&self) -> &str {
        &self.header
    }

    pub fn body(&self) -> &str {
        &self.body
    }

    /// Header followed by body, as it would appear in a document.
    pub fn to_text(&self) -> String {
        format!("{}{}", self.header, self.body)
    }

    /// Length-prefixed encoding: header length, header, body length, body
    /// (lengths are 4-byte big-endian byte counts).
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + self.header.len() + self.body.len());
        self.write_to(&mut out);
        out
    }

    pub(crate) fn write_to(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&(self.header.len() as u32).to_be_bytes());
        out.extend_from_slice(self.header.as_bytes());
        out.extend_from_slice(&(self.body.len() as u32).to_be_bytes());
        out.extend_from_slice(self.body.as_bytes());
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, EnvelopeError> {
        let mut cursor = bytes;
        let segment = Self::read_from(&mut cursor)?;
        if !cursor.is_empty() {
            return Err(EnvelopeError::MalformedFrame("trailing bytes after segment"));
        }
        Ok(segment)
    }

    pub(crate) fn read_from(cursor: &mut &[u8]) -> Result<Self, EnvelopeError> {
        let header = read_chunk(cursor, "header")?;
        let body = read_chunk(cursor, "body")?;
        Ok(SealedSegment { header, body })
    }

    /// Owner named in the clear part of the header.
    pub fn owner_id(&self) -> Result<String, EnvelopeError> {
        Ok(RawHeader::parse(&self.header)?.owner_id)
    }
}

fn read_chunk(cursor: &mut &[u8], what: &'static str) -> Result<String, EnvelopeError> {
    if cursor.len() < 4 {
        return Err(EnvelopeError::MalformedFrame(what));
    }
    let (len, rest) = cursor.split_at(4);
    let len = u32::from_be_bytes(len.try_into().unwrap()) as usize;
    if rest.len() < len {
        return Err(EnvelopeError::MalformedFrame(what));
    }
    let (chunk, rest) = rest.split_at(len);
    *cursor = rest;
    String::from_utf8(chunk.to_vec()).map_err(|_| EnvelopeError::MalformedFrame(what))
}

/// Clear-text framing of the decoded header:
/// `version | owner_len | owner | kcv[4] | nonce | ciphertext | checksum[8]`.
struct RawHeader {
    owner_id: String,
    check_value: [u8; 4],
    aad: Vec<u8>,
    nonce: Vec<u8>,
    ciphertext: Vec<u8>,
}

impl RawHeader {
    fn parse(header: &str) -> Result<Self, EnvelopeError> {
        Self::parse_with_nonce_len(header, ChaChaCipher::NONCE_LEN)
    }

    fn parse_with_nonce_len(header: &str, nonce_len: usize) -> Result<Self, EnvelopeError> {
        let raw = decode_invisible(header)
            .map_err(|_| EnvelopeError::TamperDetected("header contains visible characters"))?;
        if raw.len() < CHECKSUM_LEN {
            return Err(EnvelopeError::TamperDetected("header truncated"));
        }
        let (framed, checksum) = raw.split_at(raw.len() - CHECKSUM_LEN);
        if checksum != &Sha256::digest(framed)[..CHECKSUM_LEN] {
            return Err(EnvelopeError::TamperDetected("header checksum mismatch"));
        }
        let tampered = |_| EnvelopeError::TamperDetected("header layout");
        let (&version, rest) = framed.split_first().ok_or(()).map_err(tampered)?;
        if version != HEADER_VERSION {
            return Err(EnvelopeError::TamperDetected("unknown header version"));
        }
        let (&owner_len, rest) = rest.split_first().ok_or(()).map_err(tampered)?;
        let owner_len = owner_len as usize;
        if rest.len() < owner_len + 4 + nonce_len {
            return Err(EnvelopeError::TamperDetected("header layout"));
        }
        let (owner, rest) = rest.split_at(owner_len);
        let owner_id = String::from_utf8(owner.to_vec()).map_err(|_| tampered(()))?;
        let (kcv, rest) = rest.split_at(4);
        let (nonce, ciphertext) = rest.split_at(nonce_len);
        let aad_len = 2 + owner_len + 4;
        Ok(RawHeader {
            owner_id,
            check_value: kcv.try_into().unwrap(),
            aad: framed[..aad_len].to_vec(),
            nonce: nonce.to_vec(),
            ciphertext: ciphertext.to_vec(),
        })
    }
}

fn body_digest(body: &str) -> [u8; DIGEST_LEN] {
    Sha256::digest(body.as_bytes()).into()
}

fn encode_payload(policy: &SectionPolicy, digest: &[u8; DIGEST_LEN], padding: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + policy.modes.len() + DIGEST_LEN + padding.len());
    out.push(policy.modes.len() as u8);
    out.extend(policy.modes.iter().map(|m| m.code()));
    match &policy.grant {
        Some(g) => {
            out.push(1);
            out.push(g.grantee.len() as u8);
            out.extend_from_slice(g.grantee.as_bytes());
            out.push(g.mode.code());
        }
        None => out.push(0),
    }
    out.extend_from_slice(digest);
    out.extend_from_slice(&(padding.len() as u16).to_be_bytes());
    out.extend_from_slice(padding);
    out
}

fn decode_payload(payload: &[u8]) -> Option<(SectionPolicy, [u8; DIGEST_LEN], u16)> {
    let mut p = payload;
    let mut take = |n: usize| -> Option<&[u8]> {
        if p.len() < n {
            return None;
        }
        let (head, tail) = p.split_at(n);
        p = tail;
        Some(head)
    };
    let count = take(1)?[0] as usize;
    let modes = take(count)?
        .iter()
        .map(|&c| AuthorizationMode::from_code(c))
        .collect::<Option<Vec<_>>>()?;
    if modes.is_empty() {
        return None;
    }
    let grant = match take(1)?[0] {
        0 => None,
        1 => {
            let len = take(1)?[0] as usize;
            let grantee = String::from_utf8(take(len)?.to_vec()).ok()?;
            let mode = AuthorizationMode::from_code(take(1)?[0])?;
            Some(Grant { grantee, mode })
        }
        _ => return None,
    };
    let digest: [u8; DIGEST_LEN] = take(DIGEST_LEN)?.try_into().ok()?;
    let padding_len = u16::from_be_bytes(take(2)?.try_into().ok()?);
    take(padding_len as usize)?;
    if !p.is_empty() {
        return None;
    }
    Some((SectionPolicy { modes, grant }, digest, padding_len))
}

/// Seals `text` under `policy` with the default cipher.
///
/// Nonce and `padding_len` bytes of extraneous padding are drawn from `rng`,
/// so a seeded generator gives reproducible output.
pub fn seal_segment<R: RngCore + ?Sized>(
    text: &SegmentText,
    policy: impl Into<SectionPolicy>,
    key: &OwnerKey,
    padding_len: u16,
    rng: &mut R,
) -> Result<SealedSegment, EnvelopeError> {
    seal_segment_with(&ChaChaCipher, text, policy.into(), key, padding_len, rng)
}

pub fn seal_segment_with<C: RuleCipher, R: RngCore + ?Sized>(
    cipher: &C,
    text: &SegmentText,
    policy: SectionPolicy,
    key: &OwnerKey,
    padding_len: u16,
    rng: &mut R,
) -> Result<SealedSegment, EnvelopeError> {
    if contains_invisible(text.as_str()) {
        return Err(EnvelopeError::InvalidText);
    }
    policy.validate()?;

    let mut padding = vec![0u8; padding_len as usize];
    rng.fill_bytes(&mut padding);
    let mut nonce = vec![0u8; C::NONCE_LEN];
    rng.fill_bytes(&mut nonce);

    let owner = key.owner_id().as_bytes();
    let mut framed = Vec::with_capacity(64 + padding.len());
    framed.push(HEADER_VERSION);
    framed.push(owner.len() as u8);
    framed.extend_from_slice(owner);
    framed.extend_from_slice(&key.check_value());
    let aad = framed.clone();

    let payload = encode_payload(&policy, &body_digest(text.as_str()), &padding);
    let ciphertext = cipher.encrypt(key.material(), &nonce, &aad, &payload);
    framed.extend_from_slice(&nonce);
    framed.extend_from_slice(&ciphertext);
    let checksum = Sha256::digest(&framed);
    framed.extend_from_slice(&checksum[..CHECKSUM_LEN]);

    Ok(SealedSegment {
        header: encode_invisible(&framed),
        body: text.as_str().to_owned(),
    })
}

pub fn open_segment(sealed: &SealedSegment, key: &OwnerKey) -> Result<OpenedSegment, EnvelopeError> {
    open_segment_with(&ChaChaCipher, sealed, key)
}

/// Opens a sealed segment.
///
/// Fails with `TamperDetected` when the header or body has been modified and
/// with `WrongKey` when `key` does not belong to the segment's owner.
pub fn open_segment_with<C: RuleCipher>(
    cipher: &C,
    sealed: &SealedSegment,
    key: &OwnerKey,
) -> Result<OpenedSegment, EnvelopeError> {
    let raw = RawHeader::parse_with_nonce_len(&sealed.header, C::NONCE_LEN)?;
    if raw.owner_id != key.owner_id() || raw.check_value != key.check_value() {
        return Err(EnvelopeError::WrongKey {
            segment_owner: raw.owner_id,
            key_owner: key.owner_id().to_owned(),
        });
    }
    let payload = cipher
        .decrypt(key.material(), &raw.nonce, &raw.aad, &raw.ciphertext)
        .ok_or(EnvelopeError::TamperDetected("header authentication failed"))?;
    let (policy, digest, padding_len) =
        decode_payload(&payload).ok_or(EnvelopeError::TamperDetected("header rules unreadable"))?;
    if body_digest(&sealed.body) != digest {
        return Err(EnvelopeError::TamperDetected("body digest mismatch"));
    }
    if contains_invisible(&sealed.body) {
        return Err(EnvelopeError::TamperDetected("invisible characters in body"));
    }
    Ok(OpenedSegment {
        owner_id: raw.owner_id,
        text: SegmentText::new(sealed.body.clone()),
        policy,
        padding_len,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::authz::AuthorizationMode::*;
    use crate::envelope::invisible::is_invisible;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn key(owner: &str, fill: u8) -> OwnerKey {
        OwnerKey::new(owner, &[fill; 32]).unwrap()
    }

    #[test]
    fn round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let k = key("in", 3);
        let s = seal_segment(&"abc".into(), ReadOnly, &k, 8, &mut rng).unwrap();
        assert!(s.header().chars().all(is_invisible));
        assert_eq!(s.body(), "abc");
        let o = open_segment(&s, &k).unwrap();
        assert_eq!(o.text.as_str(), "abc");
        assert_eq!(o.mode(), ReadOnly);
        assert_eq!(o.padding_len, 8);
    }

    #[test]
    fn empty_body() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let k = key("handset", 1);
        let s = seal_segment(&SegmentText::empty(), AddEnd, &k, 0, &mut rng).unwrap();
        assert_eq!(s.body(), "");
        assert_eq!(open_segment(&s, &k).unwrap().mode(), AddEnd);
    }

    #[test]
    fn padding_changes_header_length_only() {
        let k = key("in", 9);
        let a = seal_segment(&"abc".into(), ReadOnly, &k, 0, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let b = seal_segment(&"abc".into(), ReadOnly, &k, 16, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_eq!(b.header().chars().count() - a.header().chars().count(), 16 * 4);
        let (oa, ob) = (open_segment(&a, &k).unwrap(), open_segment(&b, &k).unwrap());
        assert_eq!((oa.text, oa.policy), (ob.text, ob.policy));
    }

    #[test]
    fn sealing_is_deterministic_per_rng_state() {
        let k = key("in", 9);
        let a = seal_segment(&"x".into(), ReadOnly, &k, 4, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let b = seal_segment(&"x".into(), ReadOnly, &k, 4, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_invisible_text() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let err = seal_segment(&"a\u{200B}b".into(), ReadOnly, &key("in", 1), 0, &mut rng).unwrap_err();
        assert_eq!(err, EnvelopeError::InvalidText);
    }

    #[test]
    fn rejects_incompatible_policy() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let policy = SectionPolicy::single(ReadOnly).with_grant("billing", AddWithoutAlter);
        let err = seal_segment(&"a".into(), policy, &key("in", 1), 0, &mut rng).unwrap_err();
        assert!(matches!(err, EnvelopeError::Authz(_)));
    }

    #[test]
    fn body_append_is_detected() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let k = key("in", 1);
        let s = seal_segment(&"abc".into(), ReadOnly, &k, 4, &mut rng).unwrap();
        let forged = SealedSegment::from_parts(s.header(), "abcd");
        assert!(matches!(open_segment(&forged, &k), Err(EnvelopeError::TamperDetected(_))));
    }

    #[test]
    fn wrong_key_is_reported() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = seal_segment(&"abc".into(), ReadOnly, &key("in", 1), 4, &mut rng).unwrap();
        assert!(matches!(open_segment(&s, &key("in", 2)), Err(EnvelopeError::WrongKey { .. })));
        assert!(matches!(open_segment(&s, &key("switch", 1)), Err(EnvelopeError::WrongKey { .. })));
    }

    #[test]
    fn every_header_bit_flip_is_detected() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let k = key("in", 4);
        let s = seal_segment(&"dur=60".into(), ReadOnly, &k, 2, &mut rng).unwrap();
        let bytes = s.to_bytes();
        for i in 0..bytes.len() {
            for bit in 0..8 {
                let mut corrupt = bytes.clone();
                corrupt[i] ^= 1 << bit;
                let outcome = SealedSegment::from_bytes(&corrupt).and_then(|seg| open_segment(&seg, &k));
                assert!(outcome.is_err(), "flip of byte {i} bit {bit} went unnoticed");
            }
        }
    }

    #[test]
    fn grant_applies_to_grantee_only() {
        let p = SectionPolicy::single(ReadOnly).with_grant("billing", AddBeginning);
        assert_eq!(p.modes_for("billing"), vec![AddBeginning]);
        assert_eq!(p.modes_for("someone"), vec![ReadOnly]);
    }
}
