use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

/// Pre-hashed bloom filter key. Hash once, probe many filters.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BloomKey {
    h1: u64,
    h2: u64,
}

impl BloomKey {
    /// Key for `token` in dimension `dim`; equal tokens in different
    /// dimensions hash apart.
    pub fn new(dim: &str, token: &str) -> Self {
        let hash = |salt: u8| {
            let mut h = DefaultHasher::new();
            salt.hash(&mut h);
            dim.hash(&mut h);
            token.hash(&mut h);
            h.finish()
        };
        BloomKey {
            h1: hash(0x5a),
            h2: hash(0xc3) | 1,
        }
    }

    #[inline]
    fn probe(self, i: u64, m: u64) -> u64 {
        // enhanced double hashing
        let i3 = i.wrapping_mul(i).wrapping_mul(i);
        self.h1
            .wrapping_add(i.wrapping_mul(self.h2))
            .wrapping_add(i3.wrapping_sub(i) / 6)
            % m
    }
}

/// Fixed-size bloom filter sized for an expected item count and target
/// false-positive rate.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BloomFilter {
    bits: Vec<u64>,
    m: u64,
    k: u32,
}

impl BloomFilter {
    pub fn with_capacity(items: usize, fpr: f64) -> Self {
        let n = items.max(1) as f64;
        let ln2 = std::f64::consts::LN_2;
        let m = (-(n * fpr.ln()) / (ln2 * ln2)).ceil().max(8.0) as u64;
        let k = (-fpr.log2()).round().max(1.0) as u32;
        BloomFilter {
            bits: vec![0; m.div_ceil(64) as usize],
            m,
            k,
        }
    }

    pub fn insert(&mut self, key: BloomKey) {
        for i in 0..self.k as u64 {
            let b = key.probe(i, self.m);
            self.bits[(b / 64) as usize] |= 1 << (b % 64);
        }
    }

    pub fn contains(&self, key: BloomKey) -> bool {
        (0..self.k as u64).all(|i| {
            let b = key.probe(i, self.m);
            self.bits[(b / 64) as usize] & (1 << (b % 64)) != 0
        })
    }

    pub fn bit_len(&self) -> u64 {
        self.m
    }

    pub fn hashes(&self) -> u32 {
        self.k
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn no_false_negatives() {
        let mut f = BloomFilter::with_capacity(50, 0.01);
        let keys: Vec<BloomKey> = (0..50)
            .map(|i| BloomKey::new("d", &format!("t{i}")))
            .collect();
        for k in &keys {
            f.insert(*k);
        }
        assert!(keys.iter().all(|k| f.contains(*k)));
    }

    #[test]
    fn sizing() {
        let f = BloomFilter::with_capacity(100, 0.01);
        assert_eq!(f.hashes(), 7);
        assert_eq!(f.bit_len(), 959);
    }

    #[test]
    fn dimension_prefix_separates_keys() {
        assert_ne!(BloomKey::new("a", "x"), BloomKey::new("b", "x"));
        assert_ne!(BloomKey::new("ab", "c"), BloomKey::new("a", "bc"));
    }

    #[test]
    fn empirical_fpr_near_target() {
        let mut fp = 0usize;
        let mut trials = 0usize;
        for f_i in 0..200 {
            let mut f = BloomFilter::with_capacity(20, 0.01);
            for t in 0..20 {
                f.insert(BloomKey::new("d", &format!("in-{f_i}-{t}")));
            }
            for t in 0..500 {
                trials += 1;
                if f.contains(BloomKey::new("d", &format!("out-{f_i}-{t}"))) {
                    fp += 1;
                }
            }
        }
        let rate = fp as f64 / trials as f64;
        assert!(rate <= 0.02, "measured fpr {rate}");
    }
}
