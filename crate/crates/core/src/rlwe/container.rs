//! Tagged binary container: magic, version, kind, parameter digest, length, payload.

use super::EncParams;
use crate::error::{Error, Result};
use crate::ring::ByteCursor;

pub const CONTAINER_MAGIC: [u8; 6] = *b"ENCCTL";
pub const CONTAINER_VERSION: u16 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u8)]
pub enum ContainerKind {
    SecretKey = 1,
    Ciphertext = 2,
    Gadget = 3,
    AutomorphismKey = 4,
}

pub(super) fn seal(kind: ContainerKind, params: &EncParams, payload: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(49 + payload.len());
    out.extend_from_slice(&CONTAINER_MAGIC);
    out.extend_from_slice(&CONTAINER_VERSION.to_le_bytes());
    out.push(kind as u8);
    out.extend_from_slice(params.digest());
    out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
    out.extend_from_slice(payload);
    out
}

/// Checks the header and returns the stored digest and the payload.
pub(super) fn open_any(bytes: &[u8], kind: ContainerKind) -> Result<([u8; 32], &[u8])> {
    let mut cur = ByteCursor::new(bytes);
    if cur.take(CONTAINER_MAGIC.len())? != CONTAINER_MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let version = cur.u16()?;
    if version != CONTAINER_VERSION {
        return Err(Error::Format(format!(
            "unsupported container version {version}"
        )));
    }
    let found = cur.u8()?;
    if found != kind as u8 {
        return Err(Error::Format(format!(
            "expected a {kind:?} container, found kind {found}"
        )));
    }
    let digest: [u8; 32] = cur.take(32)?.try_into().expect("32 bytes");
    let len = cur.u64()? as usize;
    let payload = cur.rest();
    if payload.len() != len {
        return Err(Error::Format(format!(
            "payload length {} does not match header {len}",
            payload.len()
        )));
    }
    Ok((digest, payload))
}

/// Like [`open_any`] but also requires the digest of `params`.
pub(super) fn open<'a>(
    bytes: &'a [u8],
    kind: ContainerKind,
    params: &EncParams,
) -> Result<&'a [u8]> {
    let (digest, payload) = open_any(bytes, kind)?;
    params.check_digest(&digest)?;
    Ok(payload)
}
