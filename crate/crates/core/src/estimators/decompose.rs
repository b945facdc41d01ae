use thiserror::Error;

use crate::geometry::IntervalSet;
use crate::signedhist::SignedSample;
use crate::Real;

#[derive(Debug, Error)]
pub enum DecomposeError {
    #[error("line or ray does not meet the body")]
    EmptyIntersection,
    #[error("ray origin is not inside the body: first interval starts at {0}")]
    OriginOutside(f64),
}

/// Signed radius events of one interior ray.
///
/// For ray intervals `[(0, b0), (a1, b1), ..]` the boundary crossings
/// `b0, a1, b1, a2, ..` become events with alternating charge starting at
/// `+1`. Per ray: charge sums to exactly `+1` and the signed length sum
/// telescopes to the total in-body length.
#[derive(Clone, Debug)]
pub struct RadiiDecomposition<T> {
    pub events: Vec<SignedSample<T>>,
    pub first_radius: T,
    /// Total in-body length along the ray.
    pub osd_length: T,
}

pub fn radii_decompose<T: Real>(
    ray_intervals: &IntervalSet<T>,
    eps: T,
) -> Result<RadiiDecomposition<T>, DecomposeError> {
    let spans = ray_intervals.spans();
    let first = spans.first().ok_or(DecomposeError::EmptyIntersection)?;
    if first.0 > eps {
        return Err(DecomposeError::OriginOutside(first.0.as_f64()));
    }
    let mut events = Vec::with_capacity(2 * spans.len() - 1);
    events.push(SignedSample::plus(first.1));
    for &(a, b) in &spans[1..] {
        events.push(SignedSample::minus(a));
        events.push(SignedSample::plus(b));
    }
    let osd_length = ray_intervals.total_length();
    Ok(RadiiDecomposition {
        first_radius: first.1,
        events,
        osd_length,
    })
}

/// Signed chord events of one line, re-based so the first entry sits at 0.
///
/// With intervals `[(a0,b0), .., (a_{n-1},b_{n-1})]` the events are
///
/// * per interval: its length `b_k - a_k`, charge `+1` (`segments`);
/// * per ordered pair `j < k`: the gap span `a_k - b_j` and the outer span
///   `b_k - a_j`, charge `+1` (`pair_plus`); the entry-to-entry and
///   exit-to-exit spans `a_k - a_j` and `b_k - b_j`, charge `-1`
///   (`pair_minus`).
///
/// That is `2n^2 - n` events: `n^2` positive, `n^2 - n` negative. Per line
/// the charge sums to `n`, the signed length sum to the occupied length,
/// and the signed squared-length sum to the occupied length squared.
#[derive(Clone, Debug)]
pub struct ChordDecomposition<T> {
    pub segments: Vec<SignedSample<T>>,
    pub pair_plus: Vec<SignedSample<T>>,
    pub pair_minus: Vec<SignedSample<T>>,
    pub n_intervals: usize,
    /// Total occupied (in-body) length of the chord.
    pub ocd_length: T,
}

pub fn chord_decompose<T: Real>(
    line_intervals: &IntervalSet<T>,
) -> Result<ChordDecomposition<T>, DecomposeError> {
    let spans = line_intervals.spans();
    if spans.is_empty() {
        return Err(DecomposeError::EmptyIntersection);
    }
    let n = spans.len();
    let base = spans[0].0;
    let mut segments = Vec::with_capacity(n);
    let mut pair_plus = Vec::with_capacity(n * (n - 1));
    let mut pair_minus = Vec::with_capacity(n * (n - 1));
    let mut ocd = T::zero();
    for (k, &(ak, bk)) in spans.iter().enumerate() {
        let (ak, bk) = (ak - base, bk - base);
        segments.push(SignedSample::plus(bk - ak));
        ocd += bk - ak;
        for &(aj, bj) in &spans[..k] {
            let (aj, bj) = (aj - base, bj - base);
            pair_plus.push(SignedSample::plus(ak - bj));
            pair_plus.push(SignedSample::plus(bk - aj));
            pair_minus.push(SignedSample::minus(ak - aj));
            pair_minus.push(SignedSample::minus(bk - bj));
        }
    }
    Ok(ChordDecomposition {
        segments,
        pair_plus,
        pair_minus,
        n_intervals: n,
        ocd_length: ocd,
    })
}

impl<T: Real> ChordDecomposition<T> {
    pub fn all_events(&self) -> impl Iterator<Item = SignedSample<T>> + '_ {
        self.segments
            .iter()
            .chain(&self.pair_plus)
            .chain(&self.pair_minus)
            .copied()
    }

    pub fn total_charge(&self) -> i64 {
        self.all_events().map(|e| e.charge as i64).sum()
    }

    /// `sum q * l^k` over the events.
    pub fn signed_power_sum(&self, k: i32) -> T {
        self.all_events().fold(T::zero(), |acc, e| {
            acc + T::of(e.charge as f64) * e.length.powi(k)
        })
    }
}

impl<T: Real> RadiiDecomposition<T> {
    pub fn total_charge(&self) -> i64 {
        self.events.iter().map(|e| e.charge as i64).sum()
    }

    pub fn signed_power_sum(&self, k: i32) -> T {
        self.events.iter().fold(T::zero(), |acc, e| {
            acc + T::of(e.charge as f64) * e.length.powi(k)
        })
    }
}
