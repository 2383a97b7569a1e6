use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::keys::{owners, Keyring};
use super::segment::{open_segment, seal_segment, OpenedSegment, SealedSegment, SectionPolicy};
use super::EnvelopeError;
use crate::authz::{combined_validate, AuthorizationMode, SegmentText, ValidationResult};

pub const MAGIC: &[u8; 4] = b"MAMO";
pub const FRAME_VERSION: u8 = 0x01;

/// Network-side call data (IN or switch record).
pub const NETWORK_SECTION: usize = 0;
/// Handset measurements.
pub const HANDSET_SECTION: usize = 1;
/// Third-party annotations.
pub const HOUSEKEEPING_SECTION: usize = 2;
pub const SECTION_COUNT: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Source {
    Handset,
    BaseStationIN,
    Switch,
}

impl Source {
    pub fn code(self) -> u8 {
        match self {
            Source::Handset => 0x01,
            Source::BaseStationIN => 0x02,
            Source::Switch => 0x03,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0x01 => Some(Source::Handset),
            0x02 => Some(Source::BaseStationIN),
            0x03 => Some(Source::Switch),
            _ => None,
        }
    }
}

/// Read-only network data the billing party may prepend to.
pub fn network_policy() -> SectionPolicy {
    SectionPolicy::single(AuthorizationMode::ReadOnly)
        .with_grant(owners::BILLING, AuthorizationMode::AddBeginning)
}

/// Read-only handset data the billing party may append to.
pub fn handset_policy() -> SectionPolicy {
    SectionPolicy::single(AuthorizationMode::ReadOnly)
        .with_grant(owners::BILLING, AuthorizationMode::AddEnd)
}

pub fn housekeeping_policy() -> SectionPolicy {
    SectionPolicy::single(AuthorizationMode::AddWithoutAlter)
}

/// Policy every section at `index` must carry.
pub fn layout_policy(index: usize) -> Option<SectionPolicy> {
    match index {
        NETWORK_SECTION => Some(network_policy()),
        HANDSET_SECTION => Some(handset_policy()),
        HOUSEKEEPING_SECTION => Some(housekeeping_policy()),
        _ => None,
    }
}

/// One billing message: a correlation id shared by every message of the
/// same call, the emitting source, and three sealed sections.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MamoMessage {
    correlation_id: u64,
    source: Source,
    sections: Vec<SealedSegment>,
}

pub fn compose_message(
    correlation_id: u64,
    source: Source,
    sections: Vec<SealedSegment>,
) -> Result<MamoMessage, EnvelopeError> {
    if sections.len() != SECTION_COUNT {
        return Err(EnvelopeError::MalformedFrame("message needs exactly three sections"));
    }
    Ok(MamoMessage {
        correlation_id,
        source,
        sections,
    })
}

pub fn parse_message(frame: &[u8]) -> Result<MamoMessage, EnvelopeError> {
    const FIXED: usize = 4 + 1 + 8 + 1 + 1;
    if frame.len() < FIXED {
        return Err(EnvelopeError::MalformedFrame("frame shorter than fixed header"));
    }
    if &frame[..4] != MAGIC {
        return Err(EnvelopeError::MalformedFrame("bad magic"));
    }
    if frame[4] != FRAME_VERSION {
        return Err(EnvelopeError::MalformedFrame("unsupported version"));
    }
    let correlation_id = u64::from_be_bytes(frame[5..13].try_into().unwrap());
    let source = Source::from_code(frame[13]).ok_or(EnvelopeError::MalformedFrame("unknown source"))?;
    let count = frame[14] as usize;
    if count != SECTION_COUNT {
        return Err(EnvelopeError::MalformedFrame("message needs exactly three sections"));
    }
    let mut cursor = &frame[FIXED..];
    let sections = (0..count)
        .map(|_| SealedSegment::read_from(&mut cursor))
        .collect::<Result<Vec<_>, _>>()?;
    if !cursor.is_empty() {
        return Err(EnvelopeError::MalformedFrame("trailing bytes after last section"));
    }
    compose_message(correlation_id, source, sections)
}

impl MamoMessage {
    pub fn correlation_id(&self) -> u64 {
        self.correlation_id
    }

    pub fn source(&self) -> Source {
        self.source
    }

    pub fn sections(&self) -> &[SealedSegment] {
        &self.sections
    }

    pub fn section(&self, index: usize) -> Result<&SealedSegment, EnvelopeError> {
        self.sections.get(index).ok_or(EnvelopeError::NoSuchSection(index))
    }

    /// Bit-exact wire encoding.
    pub fn to_frame(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(
            15 + self
                .sections
                .iter()
                .map(|s| 8 + s.header().len() + s.body().len())
                .sum::<usize>(),
        );
        out.extend_from_slice(MAGIC);
        out.push(FRAME_VERSION);
        out.extend_from_slice(&self.correlation_id.to_be_bytes());
        out.push(self.source.code());
        out.push(self.sections.len() as u8);
        for s in &self.sections {
            s.write_to(&mut out);
        }
        out
    }

    /// Opens a section with whichever key of `keys` belongs to its owner.
    pub fn open_section(&self, index: usize, keys: &Keyring) -> Result<OpenedSegment, EnvelopeError> {
        let sealed = self.section(index)?;
        let key = keys.get(&sealed.owner_id()?)?;
        open_segment(sealed, key)
    }

    /// Opens every section and checks that each carries its layout policy.
    pub fn check_layout(&self, keys: &Keyring) -> Result<[OpenedSegment; SECTION_COUNT], EnvelopeError> {
        let opened: Vec<OpenedSegment> = (0..SECTION_COUNT)
            .map(|i| self.open_section(i, keys))
            .collect::<Result<_, _>>()?;
        for (i, o) in opened.iter().enumerate() {
            if Some(&o.policy) != layout_policy(i).as_ref() {
                return Err(EnvelopeError::LayoutViolation(i));
            }
        }
        Ok(opened.try_into().expect("three sections"))
    }
}

/// Replaces the text of one section, provided the actor holding `actor` may
/// derive `proposed` from the current text. The section is re-sealed by its
/// owner's key with fresh nonce and padding drawn from `rng`.
pub fn apply_edit<R: RngCore + ?Sized>(
    message: &MamoMessage,
    section_index: usize,
    proposed: &SegmentText,
    actor: &Keyring,
    rng: &mut R,
) -> Result<MamoMessage, EnvelopeError> {
    edit_section(message, section_index, actor, rng, |_| proposed.clone()).map(|(m, _)| m)
}

/// Like [`apply_edit`], with the proposal computed from the section's
/// current text. Returns the edited message and the section as it was.
pub fn edit_section<R, F>(
    message: &MamoMessage,
    section_index: usize,
    actor: &Keyring,
    rng: &mut R,
    propose: F,
) -> Result<(MamoMessage, OpenedSegment), EnvelopeError>
where
    R: RngCore + ?Sized,
    F: FnOnce(&SegmentText) -> SegmentText,
{
    let sealed = message.section(section_index)?;
    let key = actor.get(&sealed.owner_id()?)?;
    let opened = open_segment(sealed, key)?;
    let proposed = propose(&opened.text);
    let modes = opened.policy.modes_for(actor.holder());
    if let ValidationResult::Rejected { mode, reason } = combined_validate(&opened.text, &proposed, &modes)? {
        return Err(EnvelopeError::EditRejected { mode, reason });
    }
    let resealed = seal_segment(&proposed, opened.policy.clone(), key, opened.padding_len, rng)?;
    let mut edited = message.clone();
    edited.sections[section_index] = resealed;
    Ok((edited, opened))
}
