//! Full observation payload and its canonical byte codec.
//!
//! A payload captures everything any embedding needs: the knowledge matrix,
//! the per-action last-new flags, and the executable-command blocks. Traces
//! store payloads once, keyed by digest, so any embedding can be re-derived
//! later without replaying the world.

use crate::params::ACTION_COUNT;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};
use std::fmt;

use super::{ACTNET_CELLS, MAX_CEECS};

#[derive(Debug, thiserror::Error)]
pub enum PayloadError {
    #[error("payload bytes truncated")]
    Truncated,
    #[error("unsupported payload version {0}")]
    Version(u8),
    #[error("run lengths cover {0} cells, expected {ACTNET_CELLS}")]
    CellCount(usize),
    #[error("invalid hex payload")]
    Hex,
}

/// One executable command, compressed to the bits the trained eye needs:
/// which action, whether the destination is believed reachable, whether it
/// would open a new subnet, and which service conditions are believed met.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CeecBlock {
    pub action: u8,
    pub reachable: bool,
    pub new_subnet: bool,
    pub conditions: u8,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ObsPayload {
    /// Row-major knowledge matrix cells.
    pub matrix: Vec<u8>,
    /// Per action: did its most recent execution collect a new instance.
    pub last_new: [bool; ACTION_COUNT],
    /// First executable command per action, in action order.
    pub ceecs: Vec<CeecBlock>,
}

const VERSION: u8 = 1;

impl ObsPayload {
    /// Canonical byte encoding: version, zero-friendly run-length matrix,
    /// packed flags, command blocks.
    pub fn to_bytes(&self) -> Vec<u8> {
        debug_assert_eq!(self.matrix.len(), ACTNET_CELLS);
        let mut runs: Vec<(u16, u8)> = Vec::new();
        for &cell in &self.matrix {
            match runs.last_mut() {
                Some((len, v)) if *v == cell && *len < u16::MAX => *len += 1,
                _ => runs.push((1, cell)),
            }
        }
        let mut out = Vec::with_capacity(8 + runs.len() * 3 + 4 * self.ceecs.len());
        out.push(VERSION);
        out.extend_from_slice(&(runs.len() as u16).to_le_bytes());
        for (len, v) in runs {
            out.extend_from_slice(&len.to_le_bytes());
            out.push(v);
        }
        let mut flags = 0u16;
        for (i, &f) in self.last_new.iter().enumerate() {
            flags |= (f as u16) << i;
        }
        out.extend_from_slice(&flags.to_le_bytes());
        out.push(self.ceecs.len() as u8);
        for c in &self.ceecs {
            out.push(c.action);
            out.push(c.reachable as u8 | (c.new_subnet as u8) << 1);
            out.push(c.conditions);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, PayloadError> {
        let mut r = Reader { bytes, pos: 0 };
        let version = r.u8()?;
        if version != VERSION {
            return Err(PayloadError::Version(version));
        }
        let n_runs = r.u16()? as usize;
        let mut matrix = Vec::with_capacity(ACTNET_CELLS);
        for _ in 0..n_runs {
            let len = r.u16()? as usize;
            let v = r.u8()?;
            matrix.resize(matrix.len() + len, v);
        }
        if matrix.len() != ACTNET_CELLS {
            return Err(PayloadError::CellCount(matrix.len()));
        }
        let flags = r.u16()?;
        let mut last_new = [false; ACTION_COUNT];
        for (i, f) in last_new.iter_mut().enumerate() {
            *f = flags & (1 << i) != 0;
        }
        let n_ceecs = (r.u8()? as usize).min(MAX_CEECS);
        let mut ceecs = Vec::with_capacity(n_ceecs);
        for _ in 0..n_ceecs {
            let action = r.u8()?;
            let packed = r.u8()?;
            let conditions = r.u8()?;
            ceecs.push(CeecBlock {
                action,
                reachable: packed & 1 != 0,
                new_subnet: packed & 2 != 0,
                conditions,
            });
        }
        Ok(ObsPayload { matrix, last_new, ceecs })
    }

    pub fn key(&self) -> ObsKey {
        ObsKey(Sha256::digest(self.to_bytes()).into())
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn u8(&mut self) -> Result<u8, PayloadError> {
        let b = *self.bytes.get(self.pos).ok_or(PayloadError::Truncated)?;
        self.pos += 1;
        Ok(b)
    }

    fn u16(&mut self) -> Result<u16, PayloadError> {
        let lo = self.u8()?;
        let hi = self.u8()?;
        Ok(u16::from_le_bytes([lo, hi]))
    }
}

impl Serialize for ObsPayload {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&to_hex(&self.to_bytes()))
    }
}

impl<'de> Deserialize<'de> for ObsPayload {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let hex = String::deserialize(d)?;
        let bytes = from_hex(&hex).map_err(D::Error::custom)?;
        ObsPayload::from_bytes(&bytes).map_err(D::Error::custom)
    }
}

/// Content digest of an observation payload; observation identity everywhere
/// states are deduplicated or looked up.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ObsKey(pub [u8; 32]);

impl fmt::Display for ObsKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&to_hex(&self.0))
    }
}

impl std::str::FromStr for ObsKey {
    type Err = PayloadError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bytes = from_hex(s)?;
        let arr: [u8; 32] = bytes.try_into().map_err(|_| PayloadError::Hex)?;
        Ok(ObsKey(arr))
    }
}

impl Serialize for ObsKey {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for ObsKey {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(D::Error::custom)
    }
}

pub fn to_hex(bytes: &[u8]) -> String {
    let mut s = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        s.push_str(&format!("{b:02x}"));
    }
    s
}

pub fn from_hex(s: &str) -> Result<Vec<u8>, PayloadError> {
    if s.len() % 2 != 0 {
        return Err(PayloadError::Hex);
    }
    (0..s.len())
        .step_by(2)
        .map(|i| u8::from_str_radix(&s[i..i + 2], 16).map_err(|_| PayloadError::Hex))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ObsPayload {
        let mut matrix = vec![0u8; ACTNET_CELLS];
        matrix[0] = 1;
        matrix[30] = 9;
        matrix[ACTNET_CELLS - 1] = 3;
        let mut last_new = [false; ACTION_COUNT];
        last_new[13] = true;
        ObsPayload {
            matrix,
            last_new,
            ceecs: vec![
                CeecBlock { action: 13, reachable: false, new_subnet: false, conditions: 0 },
                CeecBlock { action: 2, reachable: true, new_subnet: true, conditions: 0b0001 },
            ],
        }
    }

    #[test]
    fn bytes_round_trip() {
        let p = sample();
        let q = ObsPayload::from_bytes(&p.to_bytes()).unwrap();
        assert_eq!(p, q);
    }

    #[test]
    fn json_round_trip() {
        let p = sample();
        let json = serde_json::to_string(&p).unwrap();
        let q: ObsPayload = serde_json::from_str(&json).unwrap();
        assert_eq!(p, q);
    }

    #[test]
    fn key_tracks_content() {
        let p = sample();
        let mut q = sample();
        assert_eq!(p.key(), q.key());
        q.matrix[77] = 5;
        assert_ne!(p.key(), q.key());
        let shown = p.key().to_string();
        assert_eq!(shown.parse::<ObsKey>().unwrap(), p.key());
    }

    #[test]
    fn truncated_bytes_are_rejected() {
        let bytes = sample().to_bytes();
        assert!(ObsPayload::from_bytes(&bytes[..bytes.len() - 2]).is_err());
        assert!(ObsPayload::from_bytes(&[9]).is_err());
    }

    #[test]
    fn run_length_keeps_payloads_small() {
        let p = sample();
        assert!(p.to_bytes().len() < 64, "sparse matrix compresses well");
    }
}
