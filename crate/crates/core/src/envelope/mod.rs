//! Tamper-evident message container.
//!
//! Segments are stored as plain text preceded by a header of zero-width
//! characters. The header carries the segment's authorization rules and a
//! digest of its text, encrypted under the owner's key, so any edit that
//! bypasses [`apply_edit`] makes the segment unopenable.

mod cipher;
pub mod invisible;
mod keys;
mod message;
mod segment;

use thiserror::Error;

use crate::authz::{AuthorizationMode, AuthzError, RejectReason};

pub use cipher::{ChaChaCipher, RuleCipher};
pub use invisible::{decode_invisible, encode_invisible, InvisibleError};
pub use keys::{owners, Keyring, OwnerKey, KEY_LEN};
pub use message::{
    apply_edit, compose_message, edit_section, handset_policy, housekeeping_policy, layout_policy,
    network_policy, parse_message, MamoMessage, Source, FRAME_VERSION, HANDSET_SECTION,
    HOUSEKEEPING_SECTION, MAGIC, NETWORK_SECTION, SECTION_COUNT,
};
pub use segment::{
    open_segment, open_segment_with, seal_segment, seal_segment_with, Grant, OpenedSegment,
    SealedSegment, SectionPolicy,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EnvelopeError {
    #[error("segment text contains invisible header characters")]
    InvalidText,
    #[error("key material must be 32 bytes, got {0}")]
    InvalidKeyLength(usize),
    #[error("invalid owner id {0:?}")]
    InvalidOwnerId(String),
    #[error("a mode is listed twice in one section policy")]
    DuplicateMode,
    #[error(transparent)]
    Authz(#[from] AuthzError),
    #[error("segment cannot be opened, its rules or text were altered: {0}")]
    TamperDetected(&'static str),
    #[error("segment belongs to {segment_owner:?} but was opened with a key of {key_owner:?}")]
    WrongKey {
        segment_owner: String,
        key_owner: String,
    },
    #[error("no key for owner {0:?}")]
    MissingKey(String),
    #[error("edit rejected under {mode}: {reason}")]
    EditRejected {
        mode: AuthorizationMode,
        reason: RejectReason,
    },
    #[error("malformed frame: {0}")]
    MalformedFrame(&'static str),
    #[error("no section {0}")]
    NoSuchSection(usize),
    #[error("section {0} does not carry its layout policy")]
    LayoutViolation(usize),
}
