//! Histograms and moment accumulators over events that carry a sign.
//!
//! The signed decompositions emit events `(length, charge)` with charge
//! `+1` or `-1`; the estimated densities are signed sums per bin divided by
//! a caller-chosen total charge, so a single event stream serves several
//! normalization conventions (per line, per event, per unit charge).

use std::fmt::Write as _;

use thiserror::Error;

use crate::Real;

/// One decomposition event: a nonnegative length with charge `+1` or `-1`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SignedSample<T> {
    pub length: T,
    pub charge: i8,
}

impl<T: Real> SignedSample<T> {
    #[inline]
    pub fn plus(length: T) -> Self {
        SignedSample { length, charge: 1 }
    }

    #[inline]
    pub fn minus(length: T) -> Self {
        SignedSample { length, charge: -1 }
    }
}

/// Neumaier-compensated running sum; exact merge order makes totals
/// independent of how work was chunked.
#[derive(Clone, Copy, Debug, Default)]
pub struct CompensatedSum<T> {
    sum: T,
    comp: T,
}

impl<T: Real> CompensatedSum<T> {
    pub fn zero() -> Self {
        CompensatedSum {
            sum: T::zero(),
            comp: T::zero(),
        }
    }

    #[inline]
    pub fn add(&mut self, v: T) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn merge(&mut self, other: &Self) {
        self.add(other.sum);
        self.add(other.comp);
    }

    #[inline]
    pub fn value(&self) -> T {
        self.sum + self.comp
    }
}

#[derive(Debug, Error)]
pub enum HistError {
    #[error("histograms have different bin edges and cannot be merged")]
    EdgeMismatch,
    #[error("normalization charge is zero")]
    ZeroCharge,
}

/// Uniform binning over `[lo, hi)` with per-bin signed charge, squared
/// charge, and positive/negative event counts. Events at or beyond `hi`
/// accumulate into the overflow tallies instead of being dropped.
#[derive(Clone, Debug)]
pub struct SignedHistogram<T> {
    lo: T,
    hi: T,
    n_bins: usize,
    charge: Vec<T>,
    sq_charge: Vec<T>,
    n_plus: Vec<u64>,
    n_minus: Vec<u64>,
    overflow_charge: T,
    overflow_plus: u64,
    overflow_minus: u64,
}

/// Normalized view of a histogram: densities and standard errors per bin.
#[derive(Clone, Debug)]
pub struct DensityTable<T> {
    pub lo: T,
    pub hi: T,
    pub width: T,
    pub density: Vec<T>,
    pub stderr: Vec<T>,
    /// Signed overflow charge over the normalizing charge.
    pub overflow_fraction: T,
}

impl<T: Real> SignedHistogram<T> {
    /// `lo < hi`, `n_bins >= 1`.
    pub fn new(lo: T, hi: T, n_bins: usize) -> Self {
        assert!(n_bins >= 1 && lo < hi, "need lo < hi and at least one bin");
        SignedHistogram {
            lo,
            hi,
            n_bins,
            charge: vec![T::zero(); n_bins],
            sq_charge: vec![T::zero(); n_bins],
            n_plus: vec![0; n_bins],
            n_minus: vec![0; n_bins],
            overflow_charge: T::zero(),
            overflow_plus: 0,
            overflow_minus: 0,
        }
    }

    #[inline]
    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    #[inline]
    pub fn bin_width(&self) -> T {
        (self.hi - self.lo) / T::of_usize(self.n_bins)
    }

    #[inline]
    pub fn edges(&self) -> (T, T) {
        (self.lo, self.hi)
    }

    pub fn bin_lo(&self, i: usize) -> T {
        self.lo + self.bin_width() * T::of_usize(i)
    }

    pub fn bin_center(&self, i: usize) -> T {
        self.bin_lo(i) + self.bin_width().half()
    }

    #[inline]
    pub fn charge_in(&self, i: usize) -> T {
        self.charge[i]
    }

    /// Sum of squared event weights in bin `i` (equals the event count for
    /// unit charges).
    #[inline]
    pub fn sq_charge_in(&self, i: usize) -> T {
        self.sq_charge[i]
    }

    #[inline]
    pub fn counts_in(&self, i: usize) -> (u64, u64) {
        (self.n_plus[i], self.n_minus[i])
    }

    pub fn overflow_charge(&self) -> T {
        self.overflow_charge
    }

    pub fn total_charge(&self) -> T {
        self.charge
            .iter()
            .fold(self.overflow_charge, |acc, &c| acc + c)
    }

    pub fn total_counts(&self) -> (u64, u64) {
        let p: u64 = self.n_plus.iter().sum::<u64>() + self.overflow_plus;
        let m: u64 = self.n_minus.iter().sum::<u64>() + self.overflow_minus;
        (p, m)
    }

    pub fn n_events(&self) -> u64 {
        let (p, m) = self.total_counts();
        p + m
    }

    /// Adds one event. Lengths must be nonnegative and finite.
    pub fn accumulate(&mut self, s: SignedSample<T>) {
        debug_assert!(s.length >= T::zero() && s.length.is_finite());
        debug_assert!(s.charge == 1 || s.charge == -1);
        let q = T::of(s.charge as f64);
        let idx = ((s.length - self.lo) / self.bin_width()).floor();
        let i = idx.to_usize();
        match i {
            Some(i) if i < self.n_bins && s.length >= self.lo => {
                self.charge[i] += q;
                self.sq_charge[i] += T::one();
                if s.charge > 0 {
                    self.n_plus[i] += 1;
                } else {
                    self.n_minus[i] += 1;
                }
            }
            _ => {
                self.overflow_charge += q;
                if s.charge > 0 {
                    self.overflow_plus += 1;
                } else {
                    self.overflow_minus += 1;
                }
            }
        }
    }

    /// Adds one event with an arbitrary real weight (density-weighted
    /// histograms). Nonnegative weights count as plus events, negative as
    /// minus; `sq_charge` tracks the squared weight so `normalize` keeps
    /// reporting honest per-bin errors.
    pub fn accumulate_weighted(&mut self, length: T, weight: T) {
        debug_assert!(length >= T::zero() && length.is_finite());
        debug_assert!(weight.is_finite());
        let idx = ((length - self.lo) / self.bin_width()).floor();
        let i = idx.to_usize();
        match i {
            Some(i) if i < self.n_bins && length >= self.lo => {
                self.charge[i] += weight;
                self.sq_charge[i] += weight * weight;
                if weight >= T::zero() {
                    self.n_plus[i] += 1;
                } else {
                    self.n_minus[i] += 1;
                }
            }
            _ => {
                self.overflow_charge += weight;
                if weight >= T::zero() {
                    self.overflow_plus += 1;
                } else {
                    self.overflow_minus += 1;
                }
            }
        }
    }

    /// Exact bin-wise sum; edges must match.
    pub fn merge(&mut self, other: &Self) -> Result<(), HistError> {
        if self.lo != other.lo || self.hi != other.hi || self.n_bins != other.n_bins {
            return Err(HistError::EdgeMismatch);
        }
        for i in 0..self.n_bins {
            self.charge[i] += other.charge[i];
            self.sq_charge[i] += other.sq_charge[i];
            self.n_plus[i] += other.n_plus[i];
            self.n_minus[i] += other.n_minus[i];
        }
        self.overflow_charge += other.overflow_charge;
        self.overflow_plus += other.overflow_plus;
        self.overflow_minus += other.overflow_minus;
        Ok(())
    }

    /// Density per unit length: bin charge over `total_charge * width`.
    /// The per-bin standard error treats events as independent unit
    /// charges, `sqrt(sum q^2) / (|total_charge| * width)`; drivers that
    /// need correlation-safe errors use batch means over substreams.
    pub fn normalize(&self, total_charge: T) -> Result<DensityTable<T>, HistError> {
        if total_charge == T::zero() {
            return Err(HistError::ZeroCharge);
        }
        let w = self.bin_width();
        let scale = (total_charge * w).recip();
        let density: Vec<T> = self.charge.iter().map(|&c| c * scale).collect();
        let abs_scale = (total_charge.abs() * w).recip();
        let stderr: Vec<T> = self
            .sq_charge
            .iter()
            .map(|&s| s.sqrt() * abs_scale)
            .collect();
        Ok(DensityTable {
            lo: self.lo,
            hi: self.hi,
            width: w,
            density,
            stderr,
            overflow_fraction: self.overflow_charge / total_charge,
        })
    }

    /// CSV rendering: `bin_lo,bin_hi,density,stderr,charge,n_plus,n_minus`
    /// rows followed by `# total_charge=`, `# n_events=`, `# seed=`
    /// comment lines. Floats use 9 significant digits so output is
    /// byte-stable across platforms.
    pub fn to_csv(&self, total_charge: T, seed: u64) -> Result<String, HistError> {
        let table = self.normalize(total_charge)?;
        let mut out = String::new();
        out.push_str("bin_lo,bin_hi,density,stderr,charge,n_plus,n_minus\n");
        for i in 0..self.n_bins {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                fmt_sig9(self.bin_lo(i)),
                fmt_sig9(self.bin_lo(i + 1)),
                fmt_sig9(table.density[i]),
                fmt_sig9(table.stderr[i]),
                fmt_sig9(self.charge[i]),
                self.n_plus[i],
                self.n_minus[i],
            );
        }
        let _ = writeln!(out, "# total_charge={}", fmt_sig9(self.total_charge()));
        let _ = writeln!(out, "# n_events={}", self.n_events());
        let _ = writeln!(out, "# seed={seed}");
        Ok(out)
    }
}

impl<T: Real> DensityTable<T> {
    /// Integral of the density over the binned range (overflow excluded).
    pub fn integral(&self) -> T {
        self.density
            .iter()
            .fold(T::zero(), |acc, &d| acc + d * self.width)
    }
}

/// Nine significant digits in scientific notation.
pub fn fmt_sig9<T: LowerExpFloat>(x: T) -> String {
    format!("{:.8e}", x)
}

/// Seventeen significant digits; round-trips f64 exactly.
pub fn fmt_sig17<T: LowerExpFloat>(x: T) -> String {
    format!("{:.16e}", x)
}

/// Formatting bound alias so the CSV/JSON helpers stay generic.
pub trait LowerExpFloat: std::fmt::LowerExp {}
impl<T: std::fmt::LowerExp> LowerExpFloat for T {}

/// Running signed sums `sum q * l^k` for `k = 0..=4`, with the unsigned and
/// squared companions needed for a linearized (delta-method) standard error
/// of the ratio `sum q l^k / sum q`.
#[derive(Clone, Debug)]
pub struct MomentAccumulator<T> {
    signed: [CompensatedSum<T>; 5],
    unsigned: [CompensatedSum<T>; 5],
    sq: [CompensatedSum<T>; 5],
    n_plus: u64,
    n_minus: u64,
}

impl<T: Real> Default for MomentAccumulator<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> MomentAccumulator<T> {
    pub fn new() -> Self {
        MomentAccumulator {
            signed: [CompensatedSum::zero(); 5],
            unsigned: [CompensatedSum::zero(); 5],
            sq: [CompensatedSum::zero(); 5],
            n_plus: 0,
            n_minus: 0,
        }
    }

    pub fn accumulate(&mut self, s: SignedSample<T>) {
        debug_assert!(s.length >= T::zero() && s.length.is_finite());
        let q = T::of(s.charge as f64);
        let mut p = T::one();
        for k in 0..5 {
            self.signed[k].add(q * p);
            self.unsigned[k].add(p);
            self.sq[k].add(p * p);
            p = p * s.length;
        }
        if s.charge > 0 {
            self.n_plus += 1;
        } else {
            self.n_minus += 1;
        }
    }

    pub fn merge(&mut self, other: &Self) {
        for k in 0..5 {
            self.signed[k].merge(&other.signed[k]);
            self.unsigned[k].merge(&other.unsigned[k]);
            self.sq[k].merge(&other.sq[k]);
        }
        self.n_plus += other.n_plus;
        self.n_minus += other.n_minus;
    }

    pub fn n_events(&self) -> u64 {
        self.n_plus + self.n_minus
    }

    pub fn counts(&self) -> (u64, u64) {
        (self.n_plus, self.n_minus)
    }

    /// Total charge `sum q`.
    pub fn total_charge(&self) -> T {
        self.signed[0].value()
    }

    /// Signed sum `sum q * l^k`.
    pub fn weighted_sum(&self, k: usize) -> T {
        self.signed[k].value()
    }

    /// `sum q l^k / sum q` with a delta-method standard error that treats
    /// events as independent. `k = 0` is exactly one by construction.
    pub fn moment(&self, k: usize) -> Result<(T, T), HistError> {
        assert!(k <= 4, "moments tracked for k = 0..=4");
        let n = T::of(self.n_events() as f64);
        let s0 = self.signed[0].value();
        if s0 == T::zero() || self.n_events() == 0 {
            return Err(HistError::ZeroCharge);
        }
        let sk = self.signed[k].value();
        let r = sk / s0;
        if self.n_events() < 2 {
            return Ok((r, T::zero()));
        }
        // Var(sum q l^k) = sum l^2k - (sum q l^k)^2 / n, and similarly for
        // the charge; covariance uses q^2 = 1 so E[q l^k * q] = E[l^k].
        let var_k = (self.sq_sum(k) - sk * sk / n).max(T::zero());
        let var_0 = (n - s0 * s0 / n).max(T::zero());
        let cov = self.unsigned[k].value() - sk * s0 / n;
        let var_r = ((var_k - T::of(2.0) * r * cov + r * r * var_0) / (s0 * s0)).max(T::zero());
        Ok((r, var_r.sqrt()))
    }

    /// `sum (l^k)^2`.
    fn sq_sum(&self, k: usize) -> T {
        self.sq[k].value()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accumulate_and_edges() {
        let mut h = SignedHistogram::<f64>::new(0.0, 2.0, 4);
        h.accumulate(SignedSample::plus(0.25));
        h.accumulate(SignedSample::plus(0.75));
        h.accumulate(SignedSample::minus(0.75));
        h.accumulate(SignedSample::plus(1.999));
        h.accumulate(SignedSample::plus(2.0)); // at hi: overflow
        h.accumulate(SignedSample::plus(5.0)); // beyond: overflow
        assert_eq!(h.charge_in(0), 1.0);
        assert_eq!(h.charge_in(1), 0.0);
        assert_eq!(h.counts_in(1), (1, 1));
        assert_eq!(h.charge_in(3), 1.0);
        assert_eq!(h.overflow_charge(), 2.0);
        assert_eq!(h.n_events(), 6);
        assert_eq!(h.total_charge(), 4.0);
    }

    #[test]
    fn merge_is_exact_and_checks_edges() {
        let mut a = SignedHistogram::<f64>::new(0.0, 1.0, 8);
        let mut b = SignedHistogram::<f64>::new(0.0, 1.0, 8);
        for i in 0..100 {
            let x = (i as f64) / 100.0;
            a.accumulate(SignedSample::plus(x));
            b.accumulate(if i % 3 == 0 {
                SignedSample::minus(x)
            } else {
                SignedSample::plus(x)
            });
        }
        let mut merged = a.clone();
        merged.merge(&b).unwrap();
        let mut replay = SignedHistogram::<f64>::new(0.0, 1.0, 8);
        for i in 0..100 {
            let x = (i as f64) / 100.0;
            replay.accumulate(SignedSample::plus(x));
        }
        for i in 0..100 {
            let x = (i as f64) / 100.0;
            replay.accumulate(if i % 3 == 0 {
                SignedSample::minus(x)
            } else {
                SignedSample::plus(x)
            });
        }
        for i in 0..8 {
            assert_eq!(merged.charge_in(i), replay.charge_in(i));
            assert_eq!(merged.counts_in(i), replay.counts_in(i));
        }
        let mut c = SignedHistogram::<f64>::new(0.0, 2.0, 8);
        assert!(matches!(a.merge(&mut c), Err(HistError::EdgeMismatch)));
    }

    #[test]
    fn normalize_conserves_charge() {
        let mut h = SignedHistogram::<f64>::new(0.0, 1.0, 16);
        let mut total = 0.0;
        for i in 0..1000 {
            let x = (i as f64) * 0.001;
            let s = if i % 4 == 0 {
                SignedSample::minus(x)
            } else {
                SignedSample::plus(x)
            };
            total += s.charge as f64;
            h.accumulate(s);
        }
        let t = h.normalize(total).unwrap();
        assert!((t.integral() + t.overflow_fraction - 1.0).abs() < 1e-12);
        assert!(matches!(h.normalize(0.0), Err(HistError::ZeroCharge)));
    }

    #[test]
    fn csv_shape() {
        let mut h = SignedHistogram::<f64>::new(0.0, 1.0, 2);
        h.accumulate(SignedSample::plus(0.1));
        h.accumulate(SignedSample::minus(0.6));
        let csv = h.to_csv(2.0, 42).unwrap();
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "bin_lo,bin_hi,density,stderr,charge,n_plus,n_minus"
        );
        let row: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(row.len(), 7);
        assert_eq!(row[0], "0.00000000e0");
        assert!(csv.contains("# total_charge=0.00000000e0"));
        assert!(csv.contains("# n_events=2"));
        assert!(csv.contains("# seed=42"));
    }

    #[test]
    fn moments_match_direct_sums() {
        let mut acc = MomentAccumulator::<f64>::new();
        let xs = [0.5, 1.0, 1.5, 2.0, 0.25];
        let qs = [1i8, 1, -1, 1, 1];
        for (&x, &q) in xs.iter().zip(&qs) {
            acc.accumulate(SignedSample { length: x, charge: q });
        }
        let total: f64 = qs.iter().map(|&q| q as f64).sum();
        assert_eq!(acc.total_charge(), total);
        for k in 0..5 {
            let direct: f64 = xs
                .iter()
                .zip(&qs)
                .map(|(&x, &q)| (q as f64) * x.powi(k as i32))
                .sum();
            let (v, _) = acc.moment(k).unwrap();
            assert!((v - direct / total).abs() < 1e-14);
        }
        let (v0, _) = acc.moment(0).unwrap();
        assert_eq!(v0, 1.0);
    }

    #[test]
    fn compensated_sum_beats_naive() {
        let mut c = CompensatedSum::<f64>::zero();
        c.add(1e16);
        for _ in 0..10 {
            c.add(1.0);
        }
        c.add(-1e16);
        assert_eq!(c.value(), 10.0);
    }
}
