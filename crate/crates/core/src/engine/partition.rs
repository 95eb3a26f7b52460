use std::hash::{Hash, Hasher};

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// 64-bit FNV-1a over the byte stream a key feeds through [`Hash`].
///
/// std's default hasher is randomly keyed per process, which would make
/// partition assignment (and therefore per-reducer counters) vary between
/// runs. Integer keys hash their native-endian bytes, so assignments are
/// stable for a given target endianness.
#[derive(Debug, Clone, Copy)]
pub struct Fnv1a(u64);

impl Default for Fnv1a {
    fn default() -> Self {
        Self(FNV_OFFSET)
    }
}

impl Hasher for Fnv1a {
    fn finish(&self) -> u64 {
        self.0
    }

    fn write(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.0 ^= u64::from(b);
            self.0 = self.0.wrapping_mul(FNV_PRIME);
        }
    }
}

/// Reducer index for `key`: `fnv1a(key) mod num_reducers`.
pub fn partition<K: Hash + ?Sized>(key: &K, num_reducers: usize) -> usize {
    debug_assert!(num_reducers >= 1);
    let mut h = Fnv1a::default();
    key.hash(&mut h);
    (h.finish() % num_reducers as u64) as usize
}
