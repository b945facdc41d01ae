use crate::geometry::{Body, Line};
use crate::sampling::{roles, sample_nu_ray};
use crate::signedhist::{MomentAccumulator, SignedHistogram, SignedSample};
use crate::Real;

use super::{chunk_stderr, radii_decompose, EstimateError, EstimatorConfig};

/// Consecutive degenerate rays (origin seen as outside after epsilon
/// cleanup) tolerated before giving up; such rays live on the boundary's
/// measure-zero neighborhood and are resampled.
const DEGENERATE_WINDOW: u64 = 10_000;

/// Per-substream scalar statistics kept for batch-means standard errors.
#[derive(Clone, Debug)]
pub struct RadiiChunkStats<T> {
    pub moments_pm: MomentAccumulator<T>,
    pub moments_1: MomentAccumulator<T>,
    pub moments_o: MomentAccumulator<T>,
    pub n_rays: u64,
}

/// Signed radius ("crossing distance") statistics for rays from uniform
/// interior origins in isotropic directions.
///
/// Per ray with forward crossings `b_0 < a_1 < b_1 < ...` the signed events
/// alternate `+b_0, -a_1, +b_1, ...`, so every ray carries total charge
/// `+1` exactly and the signed lengths telescope to the occupied length.
///
/// * `iota_pm`: all signed events; density normalized per ray.
/// * `iota_1`: the first crossing distance only (`+1` per ray).
/// * `iota_plus` / `iota_minus`: positive / negative event populations,
///   both recorded with `+1` charges; per ray they hold `n` and `n - 1`
///   events respectively.
/// * `iota_o`: total in-body length along the ray (`+1` per ray).
#[derive(Clone, Debug)]
pub struct RadiiEstimate<T> {
    pub iota_pm: SignedHistogram<T>,
    pub iota_1: SignedHistogram<T>,
    pub iota_plus: SignedHistogram<T>,
    pub iota_minus: SignedHistogram<T>,
    pub iota_o: SignedHistogram<T>,
    pub moments_pm: MomentAccumulator<T>,
    pub moments_1: MomentAccumulator<T>,
    pub moments_o: MomentAccumulator<T>,
    pub chunks: Vec<RadiiChunkStats<T>>,
    pub n_rays: u64,
    /// Rays resampled because floating-point cleanup left the origin
    /// outside every interval.
    pub n_degenerate: u64,
}

struct ChunkOut<T> {
    iota_pm: SignedHistogram<T>,
    iota_1: SignedHistogram<T>,
    iota_plus: SignedHistogram<T>,
    iota_minus: SignedHistogram<T>,
    iota_o: SignedHistogram<T>,
    moments_pm: MomentAccumulator<T>,
    moments_1: MomentAccumulator<T>,
    moments_o: MomentAccumulator<T>,
    n_rays: u64,
    n_degenerate: u64,
}

/// Shoots `config.samples` rays from uniform interior points in isotropic
/// directions and decomposes each into signed crossing events.
pub fn estimate_radii<T: Real>(
    body: &Body<T>,
    config: &EstimatorConfig,
) -> Result<RadiiEstimate<T>, EstimateError> {
    let diameter = T::of(2.0) * body.metrics.bounding_radius;
    let n_bins = config.n_bins;
    let (lo, hi) = config.hist_edges(diameter);
    let eps = body.eps();
    let plan = config.plan.with_role(roles::RADII);

    let chunks: Vec<Result<ChunkOut<T>, EstimateError>> =
        plan.run(|chunk, mut rng| {
            let quota = plan.quota(config.samples, chunk);
            let mut out = ChunkOut {
                iota_pm: SignedHistogram::new(lo, hi, n_bins),
                iota_1: SignedHistogram::new(lo, hi, n_bins),
                iota_plus: SignedHistogram::new(lo, hi, n_bins),
                iota_minus: SignedHistogram::new(lo, hi, n_bins),
                iota_o: SignedHistogram::new(lo, hi, n_bins),
                moments_pm: MomentAccumulator::new(),
                moments_1: MomentAccumulator::new(),
                moments_o: MomentAccumulator::new(),
                n_rays: 0,
                n_degenerate: 0,
            };
            let mut degenerate_in_a_row = 0u64;
            while out.n_rays < quota {
                let ray = sample_nu_ray(&mut rng, body)?;
                let line = Line::from_unit(ray.origin, ray.direction);
                let forward = body.intersect_line(&line).clip_forward_ray();
                let d = match radii_decompose(&forward, eps) {
                    Ok(d) => d,
                    Err(_) => {
                        out.n_degenerate += 1;
                        degenerate_in_a_row += 1;
                        if degenerate_in_a_row >= DEGENERATE_WINDOW {
                            return Err(EstimateError::HitStall(DEGENERATE_WINDOW));
                        }
                        continue;
                    }
                };
                degenerate_in_a_row = 0;
                out.n_rays += 1;
                for &ev in &d.events {
                    out.iota_pm.accumulate(ev);
                    out.moments_pm.accumulate(ev);
                    let magnitude = SignedSample::plus(ev.length);
                    if ev.charge > 0 {
                        out.iota_plus.accumulate(magnitude);
                    } else {
                        out.iota_minus.accumulate(magnitude);
                    }
                }
                let first = SignedSample::plus(d.first_radius);
                out.iota_1.accumulate(first);
                out.moments_1.accumulate(first);
                let occupied = SignedSample::plus(d.osd_length);
                out.iota_o.accumulate(occupied);
                out.moments_o.accumulate(occupied);
            }
            Ok(out)
        });

    let mut merged: Option<RadiiEstimate<T>> = None;
    for chunk in chunks {
        let c = chunk?;
        let stats = RadiiChunkStats {
            moments_pm: c.moments_pm.clone(),
            moments_1: c.moments_1.clone(),
            moments_o: c.moments_o.clone(),
            n_rays: c.n_rays,
        };
        match merged.as_mut() {
            None => {
                merged = Some(RadiiEstimate {
                    iota_pm: c.iota_pm,
                    iota_1: c.iota_1,
                    iota_plus: c.iota_plus,
                    iota_minus: c.iota_minus,
                    iota_o: c.iota_o,
                    moments_pm: c.moments_pm,
                    moments_1: c.moments_1,
                    moments_o: c.moments_o,
                    chunks: vec![stats],
                    n_rays: c.n_rays,
                    n_degenerate: c.n_degenerate,
                });
            }
            Some(m) => {
                m.iota_pm.merge(&c.iota_pm)?;
                m.iota_1.merge(&c.iota_1)?;
                m.iota_plus.merge(&c.iota_plus)?;
                m.iota_minus.merge(&c.iota_minus)?;
                m.iota_o.merge(&c.iota_o)?;
                m.moments_pm.merge(&c.moments_pm);
                m.moments_1.merge(&c.moments_1);
                m.moments_o.merge(&c.moments_o);
                m.chunks.push(stats);
                m.n_rays += c.n_rays;
                m.n_degenerate += c.n_degenerate;
            }
        }
    }
    Ok(merged.expect("plan has at least one stream"))
}

impl<T: Real> RadiiEstimate<T> {
    /// Signed radius moment `sum q r^k / n_rays`, with batch stderr. The
    /// denominator equals the total charge exactly.
    pub fn signed_moment(&self, k: usize) -> (f64, f64) {
        let per_chunk: Vec<f64> = self
            .chunks
            .iter()
            .filter(|c| c.n_rays > 0)
            .map(|c| c.moments_pm.weighted_sum(k).as_f64() / c.n_rays as f64)
            .collect();
        let value = self.moments_pm.weighted_sum(k).as_f64() / self.n_rays as f64;
        (value, chunk_stderr(&per_chunk))
    }

    /// Mean first crossing distance, with batch stderr.
    pub fn mean_first_radius(&self) -> (f64, f64) {
        let per_chunk: Vec<f64> = self
            .chunks
            .iter()
            .filter(|c| c.n_rays > 0)
            .map(|c| c.moments_1.weighted_sum(1).as_f64() / c.n_rays as f64)
            .collect();
        let value = self.moments_1.weighted_sum(1).as_f64() / self.n_rays as f64;
        (value, chunk_stderr(&per_chunk))
    }

    /// Mean occupied ray length, with batch stderr.
    pub fn mean_occupied(&self) -> (f64, f64) {
        let per_chunk: Vec<f64> = self
            .chunks
            .iter()
            .filter(|c| c.n_rays > 0)
            .map(|c| c.moments_o.weighted_sum(1).as_f64() / c.n_rays as f64)
            .collect();
        let value = self.moments_o.weighted_sum(1).as_f64() / self.n_rays as f64;
        (value, chunk_stderr(&per_chunk))
    }
}

#[cfg(test)]
mod tests {
    use crate::geometry::{Body, SolidSpec, Vec3};
    use crate::sampling::SamplePlan;

    use super::*;

    fn config(samples: u64, seed: u64) -> EstimatorConfig {
        EstimatorConfig {
            samples,
            n_bins: 64,
            range: None,
            plan: SamplePlan::new(seed, 8),
        }
    }

    #[test]
    fn ball_mean_radius_is_three_quarters() {
        let body = Body::new(SolidSpec::sphere(Vec3::zero(), 1.0)).unwrap();
        let est = estimate_radii(&body, &config(100_000, 21)).unwrap();
        assert_eq!(est.n_rays, 100_000);
        // Convex: one event per ray, no minuses.
        let (np, nm) = est.moments_pm.counts();
        assert_eq!(np, est.n_rays);
        assert_eq!(nm, 0);
        let (r1, s1) = est.mean_first_radius();
        assert!((r1 - 0.75).abs() < 4.0 * s1, "r1={r1} s1={s1}");
        // Signed and first coincide for convex bodies.
        let (rs, _) = est.signed_moment(1);
        assert_eq!(rs, r1);
    }

    #[test]
    fn per_ray_charge_is_exactly_one() {
        let body = Body::new(SolidSpec::shell(Vec3::zero(), 1.0, 0.5)).unwrap();
        let est = estimate_radii(&body, &config(50_000, 22)).unwrap();
        assert_eq!(est.moments_pm.total_charge(), est.n_rays as f64);
        let (np, nm) = est.moments_pm.counts();
        assert_eq!(np - nm, est.n_rays);
        assert!(nm > 0, "shell rays must produce re-entry events");
        // Density integrates to exactly 1 (all events land in range).
        let table = est.iota_pm.normalize(est.n_rays as f64).unwrap();
        assert!((table.integral() + table.overflow_fraction - 1.0).abs() < 1e-12);
    }

    #[test]
    fn signed_mean_telescopes_to_occupied_mean() {
        // Per ray, sum q r = occupied length exactly; the two moment
        // accumulators must agree to rounding.
        let body = Body::new(SolidSpec::shell(Vec3::zero(), 1.0, 0.4)).unwrap();
        let est = estimate_radii(&body, &config(20_000, 23)).unwrap();
        let (signed, _) = est.signed_moment(1);
        let (occupied, _) = est.mean_occupied();
        assert!(
            (signed - occupied).abs() < 1e-12 * occupied,
            "signed={signed} occupied={occupied}"
        );
    }
}
