//! Polygonal-trajectory experiments: scattering walks whose mean in-body
//! path length must reproduce `4V/S` regardless of the scattering mean
//! free path, and the exact central-symmetry identity for single-kink
//! paths.

use crate::estimators::EstimateError;
use crate::geometry::{Body, Line, Vec3};
use crate::report::IdentityRecord;
use crate::sampling::{roles, sample_isotropic_direction, sample_mu_line, RandomSource, SamplePlan};
use crate::signedhist::{CompensatedSum, SignedHistogram, SignedSample};
use crate::stats::batch_mean;
use crate::Real;

/// Lines drawn before entry sampling gives up on hitting the body.
const ENTRY_STALL_WINDOW: u64 = 1_000_000;

/// Scattering-walk parameters.
#[derive(Clone, Copy, Debug)]
pub struct WalkConfig<T> {
    /// Scattering mean free path: flight lengths are exponential with this
    /// mean, measured against in-body length only.
    pub mean_free_path: T,
    /// Scatter events allowed before the walk is cut off.
    pub max_steps: usize,
}

impl<T: Real> WalkConfig<T> {
    pub fn new(mean_free_path: T) -> Self {
        assert!(
            mean_free_path > T::zero(),
            "mean free path must be positive"
        );
        WalkConfig {
            mean_free_path,
            max_steps: 1_000_000,
        }
    }
}

/// One simulated trajectory.
#[derive(Clone, Debug)]
pub struct PathRecord<T> {
    /// Entry point, every scatter point, and the final exit point (absent
    /// if the walk was truncated).
    pub vertices: Vec<Vec3<T>>,
    /// Accumulated path length inside the body; exterior gap crossings of
    /// nonconvex bodies contribute nothing.
    pub in_body_length: T,
    pub n_scatters: u32,
    pub truncated: bool,
}

/// Per-mean-free-path aggregate over a batch of walks.
#[derive(Clone, Copy, Debug)]
pub struct WalkSummary {
    pub mean_free_path: f64,
    pub mean_in_body: f64,
    pub stderr: f64,
    pub n_walks: u64,
    pub n_truncated: u64,
    pub mean_scatters: f64,
}

/// Simulates one particle entering through the boundary along an
/// invariant-measure line and scattering isotropically until it escapes.
///
/// Flights are exponential with mean `config.mean_free_path`, consumed
/// against in-body length only: a flight that out-lives the in-body length
/// remaining along the current direction escapes (crossing any exterior
/// gaps of a nonconvex body in a straight line).
pub fn simulate_entering_walk<T: Real>(
    body: &Body<T>,
    config: &WalkConfig<T>,
    rng: &mut RandomSource,
) -> Result<PathRecord<T>, EstimateError> {
    let center = body.metrics.bounding_center;
    let radius = body.metrics.bounding_radius;

    // Entering flux: the first in-body point of a hitting invariant line.
    let mut entry = None;
    for _ in 0..ENTRY_STALL_WINDOW {
        let line = sample_mu_line::<T>(&mut *rng, center, radius);
        let ivs = body.intersect_line(&line);
        if let Some(&(lo, _)) = ivs.spans().first() {
            entry = Some((line.point_at(lo), line.direction));
            break;
        }
    }
    let (mut pos, mut dir) =
        entry.ok_or(EstimateError::HitStall(ENTRY_STALL_WINDOW))?;

    let mut record = PathRecord {
        vertices: vec![pos],
        in_body_length: T::zero(),
        n_scatters: 0,
        truncated: false,
    };
    loop {
        let forward = body
            .intersect_line(&Line::from_unit(pos, dir))
            .clip_forward_ray();
        let remaining = forward.total_length();
        let flight = -config.mean_free_path * (T::one() - rng.uniform::<T>()).ln();
        if flight >= remaining {
            // Escape: accumulate everything ahead and leave at the last
            // boundary crossing.
            record.in_body_length += remaining;
            if let Some(&(_, hi)) = forward.spans().last() {
                record.vertices.push(pos + dir * hi);
            } else {
                record.vertices.push(pos);
            }
            return Ok(record);
        }
        // Walk the spans to the point where `flight` of in-body length is
        // used up, skipping exterior gaps for free.
        let mut budget = flight;
        let mut scatter_at = None;
        for &(lo, hi) in forward.spans() {
            let seg = hi - lo;
            if budget < seg {
                scatter_at = Some(lo + budget);
                break;
            }
            budget -= seg;
        }
        let Some(t_scatter) = scatter_at else {
            // Rounding in the span subtraction consumed the remainder:
            // treat as the escape it numerically is.
            record.in_body_length += remaining;
            if let Some(&(_, hi)) = forward.spans().last() {
                record.vertices.push(pos + dir * hi);
            } else {
                record.vertices.push(pos);
            }
            return Ok(record);
        };
        record.in_body_length += flight;
        pos = pos + dir * t_scatter;
        record.vertices.push(pos);
        record.n_scatters += 1;
        if record.n_scatters as usize >= config.max_steps {
            record.truncated = true;
            return Ok(record);
        }
        dir = sample_isotropic_direction::<T>(rng);
    }
}

/// Runs `samples` walks for every mean free path and summarizes the mean
/// in-body path length, which the Cauchy invariance pins at `4V/S`.
pub fn mean_path_report<T: Real>(
    body: &Body<T>,
    mean_free_paths: &[f64],
    samples: u64,
    plan: SamplePlan,
) -> Result<Vec<WalkSummary>, EstimateError> {
    let mut out = Vec::with_capacity(mean_free_paths.len());
    for (i, &mfp) in mean_free_paths.iter().enumerate() {
        let config = WalkConfig::new(T::of(mfp));
        let walk_plan = plan.with_role(roles::WALKS ^ ((i as u64) << 32));
        let chunks: Vec<Result<(CompensatedSum<T>, u64, u64, u64), EstimateError>> =
            walk_plan.run(|chunk, mut rng| {
                let quota = walk_plan.quota(samples, chunk);
                let mut sum = CompensatedSum::zero();
                let mut scatters = 0u64;
                let mut truncated = 0u64;
                for _ in 0..quota {
                    let rec = simulate_entering_walk(body, &config, &mut rng)?;
                    sum.add(rec.in_body_length);
                    scatters += u64::from(rec.n_scatters);
                    truncated += u64::from(rec.truncated);
                }
                Ok((sum, quota, scatters, truncated))
            });
        let mut per_chunk = Vec::new();
        let mut n_walks = 0u64;
        let mut n_truncated = 0u64;
        let mut n_scatters = 0u64;
        for c in chunks {
            let (sum, n, scatters, truncated) = c?;
            if n > 0 {
                per_chunk.push(sum.value().as_f64() / n as f64);
            }
            n_walks += n;
            n_scatters += scatters;
            n_truncated += truncated;
        }
        let (mean, stderr) = batch_mean(&per_chunk);
        out.push(WalkSummary {
            mean_free_path: mfp,
            mean_in_body: mean,
            stderr,
            n_walks,
            n_truncated,
            mean_scatters: n_scatters as f64 / n_walks as f64,
        });
    }
    Ok(out)
}

/// Identity records comparing each summary against the Cauchy mean `4V/S`.
pub fn walk_identity_records<T: Real>(
    body: &Body<T>,
    summaries: &[WalkSummary],
    mult: f64,
) -> Vec<IdentityRecord> {
    let reference = body.metrics.mean_chord_cauchy().as_f64();
    summaries
        .iter()
        .map(|s| {
            IdentityRecord::sigma(
                format!("walk_mean_in_body_mfp_{}", s.mean_free_path),
                s.mean_in_body,
                s.stderr,
                reference,
                mult,
            )
        })
        .collect()
}

/// Result of the exact single-kink central-symmetry check.
#[derive(Clone, Copy, Debug)]
pub struct KinkReport {
    pub n_checked: u64,
    /// Largest relative violation of the length identity observed.
    pub max_relative_residual: f64,
    pub pass: bool,
}

/// Relative tolerance for the kink identity, which is algebraic and must
/// hold to rounding error.
pub const KINK_TOLERANCE: f64 = 1e-9;

/// Verifies, on `n` sampled single-kink paths, the central-symmetry length
/// identity: a path `A -> B -> C` and its point reflection through `B`
/// together are exactly as long as the two straight chords through `(A,B)`
/// and `(B,C)` extended to the reflected endpoints.
///
/// All six lengths are computed as 3D point distances, independently of
/// the line parameters that produced the points.
pub fn kink_pair_check<T: Real>(
    body: &Body<T>,
    n: u64,
    plan: SamplePlan,
) -> Result<KinkReport, EstimateError> {
    let center = body.metrics.bounding_center;
    let radius = body.metrics.bounding_radius;
    let kink_plan = plan.with_role(roles::WALKS ^ 0x4B49_4E4B);
    let chunks: Vec<Result<(u64, f64), EstimateError>> = kink_plan.run(|chunk, mut rng| {
        let quota = kink_plan.quota(n, chunk);
        let mut checked = 0u64;
        let mut worst = 0.0f64;
        let mut misses = 0u64;
        while checked < quota {
            let line = sample_mu_line::<T>(&mut rng, center, radius);
            let ivs = body.intersect_line(&line);
            let Some(&(lo, hi)) = ivs.spans().first() else {
                misses += 1;
                if misses >= ENTRY_STALL_WINDOW {
                    return Err(EstimateError::HitStall(ENTRY_STALL_WINDOW));
                }
                continue;
            };
            misses = 0;
            // Kink point uniform on the first in-body segment.
            let t_b = rng.uniform_in(lo, hi);
            let a = line.point_at(lo);
            let b = line.point_at(t_b);
            // Fresh second leg: exit of the segment containing B.
            let d2 = sample_isotropic_direction::<T>(&mut rng);
            let forward = body
                .intersect_line(&Line::from_unit(b, d2))
                .clip_forward_ray();
            let Some(&(_, exit_t)) = forward.spans().first() else {
                continue; // B epsilon-close to the boundary
            };
            let c = b + d2 * exit_t;
            // Point reflections through B.
            let a_star = b + (b - a);
            let c_star = b + (b - c);
            let leg = |p: Vec3<T>, q: Vec3<T>| (p - q).norm().as_f64();
            let kinked = leg(a, b) + leg(b, c) + leg(a_star, b) + leg(b, c_star);
            let chords = leg(a, a_star) + leg(c, c_star);
            let residual = (kinked - chords).abs() / chords;
            worst = worst.max(residual);
            checked += 1;
        }
        Ok((checked, worst))
    });
    let mut n_checked = 0u64;
    let mut max_relative_residual = 0.0f64;
    for c in chunks {
        let (checked, worst) = c?;
        n_checked += checked;
        max_relative_residual = max_relative_residual.max(worst);
    }
    Ok(KinkReport {
        n_checked,
        max_relative_residual,
        pass: max_relative_residual <= KINK_TOLERANCE,
    })
}

/// Histogram of in-body walk lengths, for comparing the no-scattering
/// limit against the chord-length distribution.
pub fn walk_length_histogram<T: Real>(
    body: &Body<T>,
    config: &WalkConfig<T>,
    samples: u64,
    n_bins: usize,
    plan: SamplePlan,
) -> Result<SignedHistogram<T>, EstimateError> {
    let diameter = T::of(2.0) * body.metrics.bounding_radius;
    let walk_plan = plan.with_role(roles::WALKS ^ 0x4849_5354);
    let chunks: Vec<Result<SignedHistogram<T>, EstimateError>> =
        walk_plan.run(|chunk, mut rng| {
            let quota = walk_plan.quota(samples, chunk);
            let mut hist = SignedHistogram::new(T::zero(), diameter, n_bins);
            for _ in 0..quota {
                let rec = simulate_entering_walk(body, config, &mut rng)?;
                hist.accumulate(SignedSample::plus(rec.in_body_length));
            }
            Ok(hist)
        });
    let mut merged: Option<SignedHistogram<T>> = None;
    for c in chunks {
        let h = c?;
        match merged.as_mut() {
            None => merged = Some(h),
            Some(m) => m.merge(&h)?,
        }
    }
    Ok(merged.expect("at least one stream"))
}

#[cfg(test)]
mod tests {
    use crate::estimators::{estimate_chords, EstimatorConfig};
    use crate::geometry::SolidSpec;
    use crate::stats::chi2_two_sample;

    use super::*;

    fn unit_ball() -> Body<f64> {
        Body::new(SolidSpec::sphere(Vec3::zero(), 1.0)).unwrap()
    }

    #[test]
    fn no_scattering_limit_returns_full_chords() {
        let body = unit_ball();
        let config = WalkConfig::new(1e12);
        let mut rng = RandomSource::new(61, 0);
        for _ in 0..200 {
            let rec = simulate_entering_walk(&body, &config, &mut rng).unwrap();
            assert_eq!(rec.n_scatters, 0);
            assert!(!rec.truncated);
            assert_eq!(rec.vertices.len(), 2);
            // Entry and exit on the unit sphere; length = |exit - entry|.
            let chord = (rec.vertices[1] - rec.vertices[0]).norm();
            assert!((rec.in_body_length - chord).abs() < 1e-9);
            assert!((rec.vertices[0].norm() - 1.0).abs() < 1e-9);
            assert!((rec.vertices[1].norm() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn mean_path_is_cauchy_for_any_mfp() {
        let body = unit_ball();
        let summaries =
            mean_path_report(&body, &[0.5, 2.0], 40_000, SamplePlan::new(62, 8)).unwrap();
        for rec in walk_identity_records(&body, &summaries, 4.0) {
            assert!(rec.pass, "{}", rec.summary_line());
        }
        // Shorter mean free path means more scattering.
        assert!(summaries[0].mean_scatters > summaries[1].mean_scatters);
        assert_eq!(summaries[0].n_truncated, 0);
    }

    #[test]
    fn nonconvex_walks_accumulate_only_in_body_length() {
        let body = Body::new(SolidSpec::shell(Vec3::zero(), 1.0, 0.5)).unwrap();
        let config = WalkConfig::new(1e12);
        let mut rng = RandomSource::new(63, 0);
        let mut seen_gap_crossing = false;
        for _ in 0..500 {
            let rec = simulate_entering_walk(&body, &config, &mut rng).unwrap();
            let straight = (rec.vertices[1] - rec.vertices[0]).norm();
            if rec.in_body_length < straight - 1e-9 {
                seen_gap_crossing = true;
            }
            assert!(rec.in_body_length <= straight + 1e-9);
        }
        assert!(seen_gap_crossing, "diametral shell chords must cross the hole");
    }

    #[test]
    fn kink_identity_is_exact() {
        for solid in [
            SolidSpec::sphere(Vec3::zero(), 1.0),
            SolidSpec::shell(Vec3::zero(), 1.0, 0.5),
        ] {
            let body = Body::new(solid).unwrap();
            let report = kink_pair_check(&body, 10_000, SamplePlan::new(64, 8)).unwrap();
            assert_eq!(report.n_checked, 10_000);
            assert!(
                report.pass,
                "max residual {}",
                report.max_relative_residual
            );
        }
    }

    #[test]
    fn no_scattering_walks_reproduce_the_chord_distribution() {
        let body = unit_ball();
        let walk_hist = walk_length_histogram(
            &body,
            &WalkConfig::new(1e12),
            60_000,
            32,
            SamplePlan::new(65, 8),
        )
        .unwrap();
        let chords = estimate_chords(
            &body,
            &EstimatorConfig {
                samples: 60_000,
                n_bins: 32,
                range: None,
                plan: SamplePlan::new(66, 8),
            },
        )
        .unwrap();
        let walk_counts: Vec<u64> = (0..32).map(|i| walk_hist.counts_in(i).0).collect();
        let chord_counts: Vec<u64> = (0..32).map(|i| chords.mu_pm.counts_in(i).0).collect();
        let result = chi2_two_sample(&walk_counts, &chord_counts);
        assert!(
            result.p_value > 1e-3,
            "chi2={} dof={} p={}",
            result.chi2,
            result.dof,
            result.p_value
        );
    }
}
