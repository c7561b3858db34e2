//! Counter-based seed derivation.
//!
//! One root seed expands into independent sub-seeds addressed by
//! `(stream, index)`, so the order in which work is scheduled never changes
//! the seed any unit of work receives.

use serde::{Deserialize, Serialize};

#[inline]
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, &b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01B3)
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedSplitter {
    root: u64,
}

impl SeedSplitter {
    pub fn new(root: u64) -> Self {
        Self { root }
    }

    pub fn root(&self) -> u64 {
        self.root
    }

    /// Sub-seed for work item `index` of the named stream.
    pub fn derive(&self, stream: &str, index: u64) -> u64 {
        let s = splitmix64(self.root ^ fnv1a(stream.as_bytes()));
        splitmix64(s ^ splitmix64(index.wrapping_add(0x632B_E59B_D9B4_E019)))
    }

    /// A splitter rooted at a derived seed, for nested streams.
    pub fn child(&self, stream: &str, index: u64) -> SeedSplitter {
        SeedSplitter::new(self.derive(stream, index))
    }
}
