//! Sorted client-id sets.

use serde::{Deserialize, Serialize};

/// A set of client ids, stored sorted and duplicate-free.
///
/// Serializes as a plain JSON array of ids.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClientSet(Vec<u32>);

impl ClientSet {
    pub fn new() -> Self {
        ClientSet(Vec::new())
    }

    pub fn singleton(c: u32) -> Self {
        ClientSet(vec![c])
    }

    /// Builds a set from arbitrary ids (sorts and deduplicates).
    pub fn from_vec(mut ids: Vec<u32>) -> Self {
        ids.sort_unstable();
        ids.dedup();
        ClientSet(ids)
    }

    /// Set of all ids in `0..n`.
    pub fn full(n: usize) -> Self {
        ClientSet((0..n as u32).collect())
    }

    /// Ids given by the low `width` bits of `mask`.
    pub fn from_mask(mask: u64, width: usize) -> Self {
        let mut v = Vec::new();
        for i in 0..width {
            if mask >> i & 1 == 1 {
                v.push(i as u32);
            }
        }
        ClientSet(v)
    }

    /// Bitmask of the members; every id must be below 64.
    pub fn to_mask(&self) -> u64 {
        let mut mask = 0u64;
        for &c in &self.0 {
            debug_assert!(c < 64);
            mask |= 1 << c;
        }
        mask
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, c: u32) -> bool {
        self.0.binary_search(&c).is_ok()
    }

    /// Inserts `c`, keeping the set sorted. No-op if already present.
    pub fn insert(&mut self, c: u32) {
        if let Err(pos) = self.0.binary_search(&c) {
            self.0.insert(pos, c);
        }
    }

    pub fn remove(&mut self, c: u32) {
        if let Ok(pos) = self.0.binary_search(&c) {
            self.0.remove(pos);
        }
    }

    pub fn iter(&self) -> std::slice::Iter<'_, u32> {
        self.0.iter()
    }

    pub fn as_slice(&self) -> &[u32] {
        &self.0
    }

    pub fn union(&self, other: &ClientSet) -> ClientSet {
        let mut v = Vec::with_capacity(self.0.len() + other.0.len());
        v.extend_from_slice(&self.0);
        v.extend_from_slice(&other.0);
        ClientSet::from_vec(v)
    }

    pub fn difference(&self, other: &ClientSet) -> ClientSet {
        ClientSet(self.0.iter().copied().filter(|&c| !other.contains(c)).collect())
    }

    pub fn intersection(&self, other: &ClientSet) -> ClientSet {
        ClientSet(self.0.iter().copied().filter(|&c| other.contains(c)).collect())
    }

    pub fn is_subset_of(&self, other: &ClientSet) -> bool {
        self.0.iter().all(|&c| other.contains(c))
    }

    pub fn is_disjoint_from(&self, other: &ClientSet) -> bool {
        self.0.iter().all(|&c| !other.contains(c))
    }

    /// Maps each member through `ids` (member `c` becomes `ids[c]`).
    /// `ids` must be strictly increasing for the result to stay sorted.
    pub fn map_through(&self, ids: &[u32]) -> ClientSet {
        let v: Vec<u32> = self.0.iter().map(|&c| ids[c as usize]).collect();
        debug_assert!(v.windows(2).all(|w| w[0] < w[1]));
        ClientSet(v)
    }

    /// Inverse of [`map_through`](Self::map_through): member `c` becomes its
    /// position in the sorted id list `ids`. `None` if some member is absent.
    pub fn reindex_into(&self, ids: &[u32]) -> Option<ClientSet> {
        let mut v = Vec::with_capacity(self.0.len());
        for &c in &self.0 {
            v.push(ids.binary_search(&c).ok()? as u32);
        }
        Some(ClientSet(v))
    }
}

impl FromIterator<u32> for ClientSet {
    fn from_iter<T: IntoIterator<Item = u32>>(iter: T) -> Self {
        ClientSet::from_vec(iter.into_iter().collect())
    }
}

impl<'a> IntoIterator for &'a ClientSet {
    type Item = &'a u32;
    type IntoIter = std::slice::Iter<'a, u32>;
    fn into_iter(self) -> Self::IntoIter {
        self.0.iter()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_vec_sorts_and_dedups() {
        let s = ClientSet::from_vec(vec![3, 1, 3, 2]);
        assert_eq!(s.as_slice(), &[1, 2, 3]);
    }

    #[test]
    fn mask_roundtrip() {
        let s = ClientSet::from_mask(0b1011, 4);
        assert_eq!(s.as_slice(), &[0, 1, 3]);
        assert_eq!(s.to_mask(), 0b1011);
    }

    #[test]
    fn set_algebra() {
        let a = ClientSet::from_vec(vec![0, 1, 2]);
        let b = ClientSet::from_vec(vec![2, 3]);
        assert_eq!(a.union(&b).as_slice(), &[0, 1, 2, 3]);
        assert_eq!(a.difference(&b).as_slice(), &[0, 1]);
        assert_eq!(a.intersection(&b).as_slice(), &[2]);
        assert!(!a.is_disjoint_from(&b));
        assert!(ClientSet::new().is_subset_of(&a));
    }

    #[test]
    fn insert_keeps_order() {
        let mut s = ClientSet::from_vec(vec![1, 5]);
        s.insert(3);
        s.insert(1);
        assert_eq!(s.as_slice(), &[1, 3, 5]);
        s.remove(5);
        assert_eq!(s.as_slice(), &[1, 3]);
    }
}
