use std::collections::BTreeMap;
use std::fmt;

use rand::RngCore;
use sha2::{Digest, Sha256};

use super::EnvelopeError;

pub const KEY_LEN: usize = 32;
pub const MAX_OWNER_ID_LEN: usize = 64;

/// Well-known owner identities of the billing workflow.
pub mod owners {
    pub const HANDSET: &str = "handset";
    pub const IN: &str = "in";
    pub const SWITCH: &str = "switch";
    /// The trusted third party doing the billing.
    pub const BILLING: &str = "billing";
}

/// Symmetric key belonging to one segment owner.
#[derive(Clone, PartialEq, Eq)]
pub struct OwnerKey {
    owner_id: String,
    key_material: [u8; KEY_LEN],
}

impl OwnerKey {
    pub fn new(owner_id: impl Into<String>, key_material: &[u8]) -> Result<Self, EnvelopeError> {
        let owner_id = owner_id.into();
        validate_owner_id(&owner_id)?;
        let key_material: [u8; KEY_LEN] = key_material
            .try_into()
            .map_err(|_| EnvelopeError::InvalidKeyLength(key_material.len()))?;
        Ok(OwnerKey {
            owner_id,
            key_material,
        })
    }

    pub fn generate<R: RngCore + ?Sized>(
        owner_id: impl Into<String>,
        rng: &mut R,
    ) -> Result<Self, EnvelopeError> {
        let mut material = [0u8; KEY_LEN];
        rng.fill_bytes(&mut material);
        Self::new(owner_id, &material)
    }

    pub fn owner_id(&self) -> &str {
        &self.owner_id
    }

    pub(crate) fn material(&self) -> &[u8; KEY_LEN] {
        &self.key_material
    }

    /// Four-byte key check value, stored in the clear so that a header opened
    /// with the wrong key can be told apart from a forged one.
    pub(crate) fn check_value(&self) -> [u8; 4] {
        let mut h = Sha256::new();
        h.update(b"mamo-kcv");
        h.update(self.key_material);
        let digest = h.finalize();
        [digest[0], digest[1], digest[2], digest[3]]
    }
}

impl fmt::Debug for OwnerKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("OwnerKey")
            .field("owner_id", &self.owner_id)
            .finish_non_exhaustive()
    }
}

pub(crate) fn validate_owner_id(owner_id: &str) -> Result<(), EnvelopeError> {
    if owner_id.is_empty() || owner_id.len() > MAX_OWNER_ID_LEN {
        return Err(EnvelopeError::InvalidOwnerId(owner_id.to_owned()));
    }
    Ok(())
}

/// The keys one actor holds, plus the actor's own identity.
#[derive(Debug, Clone)]
pub struct Keyring {
    holder: String,
    keys: BTreeMap<String, OwnerKey>,
}

impl Keyring {
    pub fn new(holder: impl Into<String>) -> Self {
        Keyring {
            holder: holder.into(),
            keys: BTreeMap::new(),
        }
    }

    pub fn with_key(mut self, key: OwnerKey) -> Self {
        self.insert(key);
        self
    }

    pub fn insert(&mut self, key: OwnerKey) {
        self.keys.insert(key.owner_id.clone(), key);
    }

    pub fn holder(&self) -> &str {
        &self.holder
    }

    pub fn get(&self, owner_id: &str) -> Result<&OwnerKey, EnvelopeError> {
        self.keys
            .get(owner_id)
            .ok_or_else(|| EnvelopeError::MissingKey(owner_id.to_owned()))
    }

    /// Re-labels the ring as held by another actor.
    pub fn held_by(&self, holder: impl Into<String>) -> Keyring {
        Keyring {
            holder: holder.into(),
            keys: self.keys.clone(),
        }
    }

    /// Keys of every workflow participant, drawn from `rng`. The billing
    /// third party holds all of them.
    pub fn generate_workflow<R: RngCore + ?Sized>(rng: &mut R) -> Keyring {
        let mut ring = Keyring::new(owners::BILLING);
        for owner in [owners::HANDSET, owners::IN, owners::SWITCH, owners::BILLING] {
            ring.insert(OwnerKey::generate(owner, rng).expect("well-known owner ids are valid"));
        }
        ring
    }
}
