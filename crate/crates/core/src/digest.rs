//! Stable 64-bit digests over canonical byte encodings.
//!
//! Blocks and stores are hashed with FNV-1a (64-bit). The encoding is
//! length-prefixed so that field boundaries are unambiguous.

use std::fmt;
use std::hash::Hasher;

use fnv::FnvHasher;

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Digest(pub u64);

impl Digest {
    pub const ZERO: Digest = Digest(0);
}

impl fmt::Debug for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest({:016x})", self.0)
    }
}

impl fmt::Display for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:016x}", self.0)
    }
}

/// Canonical byte writer feeding an FNV-1a hasher.
pub struct DigestWriter {
    hasher: FnvHasher,
}

impl Default for DigestWriter {
    fn default() -> Self {
        Self::new()
    }
}

impl DigestWriter {
    pub fn new() -> Self {
        Self {
            hasher: FnvHasher::default(),
        }
    }

    pub fn u64(&mut self, v: u64) -> &mut Self {
        self.hasher.write(&v.to_le_bytes());
        self
    }

    pub fn i64(&mut self, v: i64) -> &mut Self {
        self.hasher.write(&v.to_le_bytes());
        self
    }

    pub fn bytes(&mut self, b: &[u8]) -> &mut Self {
        self.u64(b.len() as u64);
        self.hasher.write(b);
        self
    }

    pub fn str(&mut self, s: &str) -> &mut Self {
        self.bytes(s.as_bytes())
    }

    pub fn digest(&mut self, d: Digest) -> &mut Self {
        self.u64(d.0)
    }

    pub fn finish(&self) -> Digest {
        Digest(self.hasher.finish())
    }
}
