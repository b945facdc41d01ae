use crate::Real;

/// Finite union of disjoint closed intervals along a line parameter,
/// kept sorted with `lo < hi` for every member.
#[derive(Clone, Debug, PartialEq)]
pub struct IntervalSet<T> {
    ivals: Vec<(T, T)>,
}

/// Set operation applied to interval sets by [`interval_boolean`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BoolOp {
    Union,
    Intersection,
    Difference,
}

impl<T: Real> Default for IntervalSet<T> {
    fn default() -> Self {
        Self::empty()
    }
}

impl<T: Real> IntervalSet<T> {
    pub fn empty() -> Self {
        IntervalSet { ivals: Vec::new() }
    }

    /// Single interval, or empty when `lo >= hi`.
    pub fn single(lo: T, hi: T) -> Self {
        if lo < hi {
            IntervalSet {
                ivals: vec![(lo, hi)],
            }
        } else {
            Self::empty()
        }
    }

    /// Builds from arbitrary spans, dropping degenerate ones and merging
    /// overlaps.
    pub fn from_spans(mut spans: Vec<(T, T)>) -> Self {
        spans.retain(|&(lo, hi)| lo < hi);
        spans.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite endpoints"));
        let mut out: Vec<(T, T)> = Vec::with_capacity(spans.len());
        for (lo, hi) in spans {
            match out.last_mut() {
                Some(last) if lo <= last.1 => last.1 = last.1.max(hi),
                _ => out.push((lo, hi)),
            }
        }
        IntervalSet { ivals: out }
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.ivals.is_empty()
    }

    #[inline]
    pub fn count(&self) -> usize {
        self.ivals.len()
    }

    #[inline]
    pub fn spans(&self) -> &[(T, T)] {
        &self.ivals
    }

    pub fn total_length(&self) -> T {
        self.ivals
            .iter()
            .fold(T::zero(), |acc, &(lo, hi)| acc + (hi - lo))
    }

    /// True when `t` lies inside a member interval (boundaries count).
    pub fn contains(&self, t: T) -> bool {
        self.ivals.iter().any(|&(lo, hi)| lo <= t && t <= hi)
    }

    pub fn union(&self, other: &Self) -> Self {
        let mut all = self.ivals.clone();
        all.extend_from_slice(&other.ivals);
        Self::from_spans(all)
    }

    pub fn intersection(&self, other: &Self) -> Self {
        let mut out = Vec::new();
        let (mut i, mut j) = (0, 0);
        while i < self.ivals.len() && j < other.ivals.len() {
            let (alo, ahi) = self.ivals[i];
            let (blo, bhi) = other.ivals[j];
            let lo = alo.max(blo);
            let hi = ahi.min(bhi);
            if lo < hi {
                out.push((lo, hi));
            }
            if ahi < bhi {
                i += 1;
            } else {
                j += 1;
            }
        }
        IntervalSet { ivals: out }
    }

    pub fn difference(&self, other: &Self) -> Self {
        let mut out = Vec::new();
        let mut j = 0;
        for &(alo, ahi) in &self.ivals {
            let mut lo = alo;
            // Skip subtrahend intervals entirely before the current span.
            while j < other.ivals.len() && other.ivals[j].1 <= lo {
                j += 1;
            }
            let mut k = j;
            while k < other.ivals.len() && other.ivals[k].0 < ahi {
                let (blo, bhi) = other.ivals[k];
                if lo < blo {
                    out.push((lo, blo));
                }
                lo = lo.max(bhi);
                if lo >= ahi {
                    break;
                }
                k += 1;
            }
            if lo < ahi {
                out.push((lo, ahi));
            }
        }
        IntervalSet { ivals: out }
    }

    /// Restricts to the window `[lo, hi]`.
    pub fn clip(&self, lo: T, hi: T) -> Self {
        self.intersection(&Self::single(lo, hi))
    }

    /// Restricts to the forward ray `t >= 0`. An interval straddling the
    /// origin is truncated to start exactly at zero.
    pub fn clip_forward_ray(&self) -> Self {
        let mut out = Vec::new();
        for &(lo, hi) in &self.ivals {
            if hi <= T::zero() {
                continue;
            }
            out.push((lo.max(T::zero()), hi));
        }
        IntervalSet { ivals: out }
    }

    /// Merges gaps shorter than `eps` and then drops member intervals
    /// shorter than `eps`, removing slivers left by grazing boundaries.
    pub fn cleanup(mut self, eps: T) -> Self {
        if self.ivals.is_empty() {
            return self;
        }
        let mut merged: Vec<(T, T)> = Vec::with_capacity(self.ivals.len());
        for (lo, hi) in self.ivals.drain(..) {
            match merged.last_mut() {
                Some(last) if lo - last.1 < eps => last.1 = last.1.max(hi),
                _ => merged.push((lo, hi)),
            }
        }
        merged.retain(|&(lo, hi)| hi - lo >= eps);
        IntervalSet { ivals: merged }
    }
}

/// Pure set arithmetic over already-clean interval sets. `Difference` folds
/// left to right: `a \ b \ c ...`; the other ops are symmetric folds.
pub fn interval_boolean<T: Real>(op: BoolOp, operands: &[IntervalSet<T>]) -> IntervalSet<T> {
    let mut iter = operands.iter();
    let first = match iter.next() {
        Some(s) => s.clone(),
        None => return IntervalSet::empty(),
    };
    iter.fold(first, |acc, s| match op {
        BoolOp::Union => acc.union(s),
        BoolOp::Intersection => acc.intersection(s),
        BoolOp::Difference => acc.difference(s),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(spans: &[(f64, f64)]) -> IntervalSet<f64> {
        IntervalSet::from_spans(spans.to_vec())
    }

    #[test]
    fn union_merges_overlaps() {
        let a = set(&[(0.0, 1.0), (2.0, 3.0)]);
        let b = set(&[(0.5, 2.5)]);
        assert_eq!(a.union(&b).spans(), &[(0.0, 3.0)]);
        let c = set(&[(4.0, 5.0)]);
        assert_eq!(a.union(&c).count(), 3);
    }

    #[test]
    fn intersection_two_pointer() {
        let a = set(&[(0.0, 2.0), (3.0, 5.0)]);
        let b = set(&[(1.0, 4.0)]);
        assert_eq!(a.intersection(&b).spans(), &[(1.0, 2.0), (3.0, 4.0)]);
        assert!(a.intersection(&set(&[(2.0, 3.0)])).is_empty());
    }

    #[test]
    fn difference_carves_holes() {
        let a = set(&[(0.0, 10.0)]);
        let b = set(&[(1.0, 2.0), (3.0, 4.0)]);
        assert_eq!(
            a.difference(&b).spans(),
            &[(0.0, 1.0), (2.0, 3.0), (4.0, 10.0)]
        );
        assert_eq!(b.difference(&a).count(), 0);
        let c = set(&[(-1.0, 0.5), (9.5, 11.0)]);
        assert_eq!(a.difference(&c).spans(), &[(0.5, 9.5)]);
    }

    #[test]
    fn forward_ray_clip_rebases_straddler() {
        let a = set(&[(-3.0, -1.0), (-0.5, 1.5), (2.0, 4.0)]);
        assert_eq!(a.clip_forward_ray().spans(), &[(0.0, 1.5), (2.0, 4.0)]);
    }

    #[test]
    fn cleanup_merges_and_drops() {
        let a = set(&[(0.0, 1.0), (1.0 + 1e-12, 2.0), (3.0, 3.0 + 1e-12)]);
        let cleaned = a.cleanup(1e-9);
        assert_eq!(cleaned.spans(), &[(0.0, 2.0)]);
    }

    #[test]
    fn lengths_are_additive() {
        let a = set(&[(0.0, 1.0), (2.0, 3.5)]);
        assert!((a.total_length() - 2.5).abs() < 1e-15);
        assert!(a.contains(2.0) && a.contains(3.5) && !a.contains(1.5));
    }
}
