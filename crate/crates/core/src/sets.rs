//! Helpers over sorted, duplicate-free slices used as small sets.

use std::cmp::Ordering;

/// Sorts and deduplicates in place, turning an arbitrary vector into a set.
pub fn normalize<T: Ord>(mut v: Vec<T>) -> Vec<T> {
    v.sort_unstable();
    v.dedup();
    v
}

pub fn intersection_len<T: Ord>(a: &[T], b: &[T]) -> usize {
    let (mut i, mut j, mut n) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            Ordering::Less => i += 1,
            Ordering::Greater => j += 1,
            Ordering::Equal => {
                n += 1;
                i += 1;
                j += 1;
            }
        }
    }
    n
}

/// Jaccard coefficient of two sorted sets. Two empty sets score 0.
pub fn jaccard<T: Ord>(a: &[T], b: &[T]) -> f64 {
    let inter = intersection_len(a, b);
    let union = a.len() + b.len() - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

pub fn is_subset<T: Ord>(a: &[T], b: &[T]) -> bool {
    intersection_len(a, b) == a.len()
}

/// Lectic comparison of two sorted sets: `a < b` iff the smallest element of
/// the symmetric difference belongs to `b`.
pub fn lectic_cmp<T: Ord>(a: &[T], b: &[T]) -> Ordering {
    let (mut i, mut j) = (0, 0);
    loop {
        match (a.get(i), b.get(j)) {
            (None, None) => return Ordering::Equal,
            (Some(_), None) => return Ordering::Greater,
            (None, Some(_)) => return Ordering::Less,
            (Some(x), Some(y)) => match x.cmp(y) {
                Ordering::Equal => {
                    i += 1;
                    j += 1;
                }
                // x is in a but not in b
                Ordering::Less => return Ordering::Greater,
                Ordering::Greater => return Ordering::Less,
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jaccard_basic() {
        assert_eq!(jaccard(&[1, 3], &[1, 2, 3]), 2.0 / 3.0);
        assert_eq!(jaccard::<u32>(&[], &[]), 0.0);
        assert_eq!(jaccard(&[1], &[2]), 0.0);
    }

    #[test]
    fn lectic_order() {
        // {} < {2} < {1} < {1,2} over attribute order 1,2
        let sets: [&[u32]; 4] = [&[], &[2], &[1], &[1, 2]];
        for w in sets.windows(2) {
            assert_eq!(
                lectic_cmp(w[0], w[1]),
                Ordering::Less,
                "{:?} {:?}",
                w[0],
                w[1]
            );
        }
        assert_eq!(lectic_cmp(&[1, 2], &[1, 2]), Ordering::Equal);
    }
}
