use crate::geometry::Body;
use crate::sampling::{roles, sample_mu_line};
use crate::signedhist::{MomentAccumulator, SignedHistogram, SignedSample};
use crate::Real;

use super::{chord_decompose, chunk_stderr, EstimateError, EstimatorConfig};

/// Lines drawn before the driver gives up on ever hitting the body.
const HIT_STALL_WINDOW: u64 = 1_000_000;

/// Per-substream scalar statistics kept for batch-means standard errors.
#[derive(Clone, Debug)]
pub struct ChordChunkStats<T> {
    pub moments_pm: MomentAccumulator<T>,
    pub moments_o: MomentAccumulator<T>,
    pub n_hit: u64,
    pub n_sampled: u64,
}

/// Everything the chord sampler measures in one pass of `samples` hitting
/// lines.
///
/// Event conventions (per hitting line with `n` in-body intervals):
///
/// * `mu_pm`: all `2n^2 - n` signed events of the pairwise decomposition;
///   normalizing by the grand total charge `N` gives the signed density
///   whose moments obey the convex chord identities even for nonconvex
///   bodies.
/// * `mu_1`: the first in-body segment only, one `+1` event per line.
/// * `mu_plus` / `mu_minus`: the positive / negative event populations,
///   each recorded with charge `+1` so the two can be compared as ordinary
///   histograms; only `mu_pm` carries signs.
/// * `mu_o`: the occupied (in-body) length of the whole line, one `+1`
///   event per line.
#[derive(Clone, Debug)]
pub struct ChordEstimate<T> {
    pub mu_pm: SignedHistogram<T>,
    pub mu_1: SignedHistogram<T>,
    pub mu_plus: SignedHistogram<T>,
    pub mu_minus: SignedHistogram<T>,
    pub mu_o: SignedHistogram<T>,
    pub moments_pm: MomentAccumulator<T>,
    pub moments_1: MomentAccumulator<T>,
    pub moments_o: MomentAccumulator<T>,
    pub chunks: Vec<ChordChunkStats<T>>,
    pub n_lines_hit: u64,
    pub n_lines_sampled: u64,
}

struct ChunkOut<T> {
    mu_pm: SignedHistogram<T>,
    mu_1: SignedHistogram<T>,
    mu_plus: SignedHistogram<T>,
    mu_minus: SignedHistogram<T>,
    mu_o: SignedHistogram<T>,
    moments_pm: MomentAccumulator<T>,
    moments_1: MomentAccumulator<T>,
    moments_o: MomentAccumulator<T>,
    n_hit: u64,
    n_sampled: u64,
}

/// Samples invariant-measure lines through the body's bounding sphere until
/// `config.samples` of them hit, decomposing every hit into signed chord
/// events.
pub fn estimate_chords<T: Real>(
    body: &Body<T>,
    config: &EstimatorConfig,
) -> Result<ChordEstimate<T>, EstimateError> {
    let center = body.metrics.bounding_center;
    let radius = body.metrics.bounding_radius;
    let diameter = T::of(2.0) * radius;
    let n_bins = config.n_bins;
    let (lo, hi) = config.hist_edges(diameter);
    let plan = config.plan.with_role(roles::CHORDS);

    let chunks: Vec<Result<ChunkOut<T>, EstimateError>> =
        plan.run(|chunk, mut rng| {
            let quota = plan.quota(config.samples, chunk);
            let mut out = ChunkOut {
                mu_pm: SignedHistogram::new(lo, hi, n_bins),
                mu_1: SignedHistogram::new(lo, hi, n_bins),
                mu_plus: SignedHistogram::new(lo, hi, n_bins),
                mu_minus: SignedHistogram::new(lo, hi, n_bins),
                mu_o: SignedHistogram::new(lo, hi, n_bins),
                moments_pm: MomentAccumulator::new(),
                moments_1: MomentAccumulator::new(),
                moments_o: MomentAccumulator::new(),
                n_hit: 0,
                n_sampled: 0,
            };
            let mut misses_in_a_row = 0u64;
            while out.n_hit < quota {
                let line = sample_mu_line::<T>(&mut rng, center, radius);
                out.n_sampled += 1;
                let ivs = body.intersect_line(&line);
                if ivs.is_empty() {
                    misses_in_a_row += 1;
                    if misses_in_a_row >= HIT_STALL_WINDOW {
                        return Err(EstimateError::HitStall(HIT_STALL_WINDOW));
                    }
                    continue;
                }
                misses_in_a_row = 0;
                out.n_hit += 1;
                let d = chord_decompose(&ivs)?;
                for ev in d.all_events() {
                    out.mu_pm.accumulate(ev);
                    out.moments_pm.accumulate(ev);
                    let magnitude = SignedSample::plus(ev.length);
                    if ev.charge > 0 {
                        out.mu_plus.accumulate(magnitude);
                    } else {
                        out.mu_minus.accumulate(magnitude);
                    }
                }
                let first = d.segments[0];
                out.mu_1.accumulate(first);
                out.moments_1.accumulate(first);
                let occupied = SignedSample::plus(d.ocd_length);
                out.mu_o.accumulate(occupied);
                out.moments_o.accumulate(occupied);
            }
            Ok(out)
        });

    let mut merged: Option<ChordEstimate<T>> = None;
    for chunk in chunks {
        let c = chunk?;
        let stats = ChordChunkStats {
            moments_pm: c.moments_pm.clone(),
            moments_o: c.moments_o.clone(),
            n_hit: c.n_hit,
            n_sampled: c.n_sampled,
        };
        match merged.as_mut() {
            None => {
                merged = Some(ChordEstimate {
                    mu_pm: c.mu_pm,
                    mu_1: c.mu_1,
                    mu_plus: c.mu_plus,
                    mu_minus: c.mu_minus,
                    mu_o: c.mu_o,
                    moments_pm: c.moments_pm,
                    moments_1: c.moments_1,
                    moments_o: c.moments_o,
                    chunks: vec![stats],
                    n_lines_hit: c.n_hit,
                    n_lines_sampled: c.n_sampled,
                });
            }
            Some(m) => {
                m.mu_pm.merge(&c.mu_pm)?;
                m.mu_1.merge(&c.mu_1)?;
                m.mu_plus.merge(&c.mu_plus)?;
                m.mu_minus.merge(&c.mu_minus)?;
                m.mu_o.merge(&c.mu_o)?;
                m.moments_pm.merge(&c.moments_pm);
                m.moments_1.merge(&c.moments_1);
                m.moments_o.merge(&c.moments_o);
                m.chunks.push(stats);
                m.n_lines_hit += c.n_hit;
                m.n_lines_sampled += c.n_sampled;
            }
        }
    }
    Ok(merged.expect("plan has at least one stream"))
}

impl<T: Real> ChordEstimate<T> {
    /// Grand total signed charge `N` (equals the number of in-body
    /// segments over all hitting lines).
    pub fn total_charge(&self) -> T {
        self.moments_pm.total_charge()
    }

    /// Multiplicity ratio `N / N_hit`, with batch stderr. Equals 1 exactly
    /// for convex bodies.
    pub fn multiplicity_ratio(&self) -> (f64, f64) {
        let per_chunk: Vec<f64> = self
            .chunks
            .iter()
            .filter(|c| c.n_hit > 0)
            .map(|c| c.moments_pm.total_charge().as_f64() / c.n_hit as f64)
            .collect();
        (
            self.total_charge().as_f64() / self.n_lines_hit as f64,
            chunk_stderr(&per_chunk),
        )
    }

    /// Signed moment `sum q l^k / N`, with batch stderr.
    pub fn signed_moment(&self, k: usize) -> (f64, f64) {
        let per_chunk: Vec<f64> = self
            .chunks
            .iter()
            .filter(|c| c.moments_pm.total_charge() != T::zero())
            .map(|c| {
                (c.moments_pm.weighted_sum(k) / c.moments_pm.total_charge()).as_f64()
            })
            .collect();
        let value = (self.moments_pm.weighted_sum(k) / self.total_charge()).as_f64();
        (value, chunk_stderr(&per_chunk))
    }

    /// Occupied-length moment `sum ocd^k / N_hit`, with batch stderr.
    pub fn occupied_moment(&self, k: usize) -> (f64, f64) {
        let per_chunk: Vec<f64> = self
            .chunks
            .iter()
            .filter(|c| c.n_hit > 0)
            .map(|c| (c.moments_o.weighted_sum(k).as_f64()) / c.n_hit as f64)
            .collect();
        let value = self.moments_o.weighted_sum(k).as_f64() / self.n_lines_hit as f64;
        (value, chunk_stderr(&per_chunk))
    }

    /// Fraction of sampled lines that hit the body.
    pub fn hit_fraction(&self) -> f64 {
        self.n_lines_hit as f64 / self.n_lines_sampled as f64
    }
}
