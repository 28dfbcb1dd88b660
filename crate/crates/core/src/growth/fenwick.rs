//! Prefix-summable array over degrees holding `count(d)·w(d)`.

use crate::Scalar;

#[derive(Clone, Debug)]
pub(crate) struct Fenwick<T> {
    /// 1-based; `tree.len() - 1` is a power of two.
    tree: Vec<T>,
    /// Array cells touched by `add` and `search`, for the cost check.
    pub(crate) probes: u64,
}

impl<T: Scalar> Fenwick<T> {
    pub(crate) fn from_values(values: &[T], min_capacity: usize) -> Self {
        let capacity = min_capacity.max(values.len()).max(1).next_power_of_two();
        let mut tree = vec![T::zero(); capacity + 1];
        tree[1..=values.len()].copy_from_slice(values);
        for i in 1..=capacity {
            let parent = i + (i & i.wrapping_neg());
            if parent <= capacity {
                let v = tree[i];
                tree[parent] = tree[parent] + v;
            }
        }
        Self { tree, probes: 0 }
    }

    pub(crate) fn capacity(&self) -> usize {
        self.tree.len() - 1
    }

    pub(crate) fn add(&mut self, index: usize, delta: T) {
        let mut i = index + 1;
        while i < self.tree.len() {
            self.tree[i] = self.tree[i] + delta;
            self.probes += 1;
            i += i & i.wrapping_neg();
        }
    }

    /// Sum of entries `0..=index`.
    #[cfg(test)]
    pub(crate) fn prefix(&self, index: usize) -> T {
        let mut sum = T::zero();
        let mut i = index + 1;
        while i > 0 {
            sum = sum + self.tree[i];
            i -= i & i.wrapping_neg();
        }
        sum
    }

    /// Smallest index whose inclusive prefix sum exceeds `target`;
    /// `capacity()` if none does.
    pub(crate) fn search(&mut self, target: T) -> usize {
        let mut pos = 0;
        let mut rem = target;
        let mut step = self.capacity();
        while step > 0 {
            let next = pos + step;
            self.probes += 1;
            if next < self.tree.len() && self.tree[next] <= rem {
                pos = next;
                rem = rem - self.tree[next];
            }
            step >>= 1;
        }
        pos
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn prefix_and_search() {
        let mut f = Fenwick::from_values(&[2.0, 0.0, 1.0, 3.0], 4);
        assert_eq!(f.prefix(3), 6.0);
        assert_eq!(f.search(0.0), 0);
        assert_eq!(f.search(1.99), 0);
        assert_eq!(f.search(2.0), 2);
        assert_eq!(f.search(2.5), 2);
        assert_eq!(f.search(3.0), 3);
        assert_eq!(f.search(6.0), 4);
        f.add(1, 5.0);
        assert_eq!(f.search(2.0), 1);
        assert_eq!(f.prefix(3), 11.0);
    }

    proptest! {
        #[test]
        fn search_matches_linear_scan(
            values in proptest::collection::vec(0u32..5, 1..40),
            u in 0.0f64..1.0,
        ) {
            let vals: Vec<f64> = values.iter().map(|&v| v as f64).collect();
            let total: f64 = vals.iter().sum();
            prop_assume!(total > 0.0);
            let target = u * total;
            let mut f = Fenwick::from_values(&vals, 1);
            let mut acc = 0.0;
            let expected = vals.iter().position(|v| { acc += v; acc > target }).unwrap();
            prop_assert_eq!(f.search(target), expected);
        }
    }
}
