use crate::geometry::{Body, Line};
use crate::report::{IdentityRecord, Tolerance};
use crate::sampling::{roles, sample_nu_ray, sample_point_pair};
use crate::signedhist::{CompensatedSum, MomentAccumulator, SignedHistogram, SignedSample};
use crate::Real;

use super::{chunk_stderr, estimate_chords, ChordEstimate, EstimateError, EstimatorConfig};

/// Minimum expected events in a bin before the Gaussian bin-wise
/// comparison is considered meaningful.
const MIN_BIN_COUNT: f64 = 5.0;

/// Cross-validation of the three chord randomness classes on a convex
/// body.
///
/// Chords are sampled three ways: from the invariant line measure
/// (`chords`), as the full chord through one uniform interior point
/// (`point_hist`), and as the full chord through a pair of independent
/// uniform interior points (`pair_hist`). The latter two must reproduce
/// the invariant density reweighted by `l` and by `l^4` respectively.
#[derive(Clone, Debug)]
pub struct RandomnessReport<T> {
    pub chords: ChordEstimate<T>,
    pub point_hist: SignedHistogram<T>,
    pub pair_hist: SignedHistogram<T>,
    pub n_point: u64,
    pub n_pair: u64,
    /// Fraction of compared bins where the point-chord density agrees
    /// with the `l`-reweighted invariant density within 4 sigma.
    pub point_within_fraction: f64,
    pub point_bins_compared: usize,
    /// Same for pair chords against the `l^4` reweighting.
    pub pair_within_fraction: f64,
    pub pair_bins_compared: usize,
    pub records: Vec<IdentityRecord>,
}

struct ReweightChunk<T> {
    hist: SignedHistogram<T>,
    moments: MomentAccumulator<T>,
    inv_sum: CompensatedSum<T>,
    n: u64,
}

/// Samples full chords through interior points (one point per chord when
/// `pair` is false, a point pair defining the direction when true).
fn sample_full_chords<T: Real>(
    body: &Body<T>,
    config: &EstimatorConfig,
    pair: bool,
) -> Result<(SignedHistogram<T>, Vec<ReweightChunk<T>>), EstimateError> {
    let diameter = T::of(2.0) * body.metrics.bounding_radius;
    let (hist_lo, hist_hi) = config.hist_edges(diameter);
    let role = if pair {
        roles::PAIR_CHORDS
    } else {
        roles::POINT_CHORDS
    };
    let plan = config.plan.with_role(role);
    let chunks: Vec<Result<ReweightChunk<T>, EstimateError>> = plan.run(|chunk, mut rng| {
        let quota = plan.quota(config.samples, chunk);
        let mut out = ReweightChunk {
            hist: SignedHistogram::new(hist_lo, hist_hi, config.n_bins),
            moments: MomentAccumulator::new(),
            inv_sum: CompensatedSum::zero(),
            n: 0,
        };
        while out.n < quota {
            let line = if pair {
                let p = sample_point_pair(&mut rng, body)?;
                let sep = p.b - p.a;
                if sep.norm_sq() == T::zero() {
                    continue; // coincident points carry no direction
                }
                Line::new(p.a, sep)
            } else {
                let ray = sample_nu_ray(&mut rng, body)?;
                Line::from_unit(ray.origin, ray.direction)
            };
            let ivs = body.intersect_line(&line);
            if ivs.is_empty() {
                continue; // origin epsilon-close to the boundary
            }
            let l = ivs.total_length();
            let ev = SignedSample::plus(l);
            out.hist.accumulate(ev);
            out.moments.accumulate(ev);
            out.inv_sum.add(l.recip());
            out.n += 1;
        }
        Ok(out)
    });

    let mut merged_hist: Option<SignedHistogram<T>> = None;
    let mut stats = Vec::new();
    for chunk in chunks {
        let c = chunk?;
        match merged_hist.as_mut() {
            None => merged_hist = Some(c.hist.clone()),
            Some(h) => h.merge(&c.hist)?,
        }
        stats.push(c);
    }
    Ok((merged_hist.expect("at least one stream"), stats))
}

/// Bin-wise agreement between an observed chord histogram (counts, `n`
/// samples) and a reweighted prediction `l^k mu(l) / norm`. Returns
/// `(fraction within 4 sigma, bins compared)`.
fn binwise_agreement<T: Real>(
    observed: &SignedHistogram<T>,
    n_observed: u64,
    mu_hist: &SignedHistogram<T>,
    n_mu: u64,
    power: i32,
    norm: f64,
) -> (f64, usize) {
    let w = observed.bin_width().as_f64();
    let n_obs = n_observed as f64;
    let n_mu = n_mu as f64;
    let mut compared = 0usize;
    let mut within = 0usize;
    for i in 0..observed.n_bins() {
        let l = observed.bin_center(i).as_f64();
        let c_obs = observed.counts_in(i).0 as f64;
        let c_mu = mu_hist.counts_in(i).0 as f64;
        let mu_density = c_mu / (n_mu * w);
        let pred = l.powi(power) * mu_density / norm;
        let expected_obs = pred * n_obs * w;
        if c_obs < MIN_BIN_COUNT && expected_obs < MIN_BIN_COUNT {
            continue; // too little data on both sides to test
        }
        compared += 1;
        let obs_density = c_obs / (n_obs * w);
        // Poisson-floored standard errors: an empty bin still carries the
        // uncertainty of one count.
        let sigma_obs = c_obs.max(1.0).sqrt() / (n_obs * w);
        let sigma_pred = l.powi(power) * (c_mu.max(1.0).sqrt() / (n_mu * w)) / norm;
        let sigma = (sigma_obs * sigma_obs + sigma_pred * sigma_pred).sqrt();
        if (obs_density - pred).abs() <= 4.0 * sigma {
            within += 1;
        }
    }
    if compared == 0 {
        (0.0, 0)
    } else {
        (within as f64 / compared as f64, compared)
    }
}

/// Verifies, on a convex body, that chords through uniform interior points
/// follow the length-weighted invariant density and chords through point
/// pairs the fourth-power-weighted one, bin-wise and in moments.
pub fn check_randomness_relations<T: Real>(
    body: &Body<T>,
    config: &EstimatorConfig,
) -> Result<RandomnessReport<T>, EstimateError> {
    if !body.is_convex_by_construction() {
        return Err(EstimateError::NonConvexUnsupported);
    }
    let chords = estimate_chords(body, config)?;
    let (point_hist, point_chunks) = sample_full_chords(body, config, false)?;
    let (pair_hist, pair_chunks) = sample_full_chords(body, config, true)?;

    let n_point: u64 = point_chunks.iter().map(|c| c.n).sum();
    let n_pair: u64 = pair_chunks.iter().map(|c| c.n).sum();

    // Invariant-measure moments (on a convex body every event is +1).
    let m = |k: usize| chords.signed_moment(k);
    let (m1, s1) = m(1);
    let (m2, s2) = m(2);
    let (m3, s3) = m(3);
    let (m4, s4) = m(4);

    let (point_within_fraction, point_bins_compared) = binwise_agreement(
        &point_hist,
        n_point,
        &chords.mu_pm,
        chords.n_lines_hit,
        1,
        m1,
    );
    let (pair_within_fraction, pair_bins_compared) = binwise_agreement(
        &pair_hist,
        n_pair,
        &chords.mu_pm,
        chords.n_lines_hit,
        4,
        m4,
    );

    let mut records = Vec::new();
    records.push(IdentityRecord::new(
        "point_chord_binwise_within_4sigma",
        point_within_fraction,
        0.0,
        1.0,
        Tolerance::Relative(0.01),
    ));
    records.push(IdentityRecord::new(
        "pair_chord_binwise_within_4sigma",
        pair_within_fraction,
        0.0,
        1.0,
        Tolerance::Relative(0.01),
    ));

    // Moment identities. Point chords (density l mu / <l>):
    //   E[l] = <l^2>/<l>,  E[1/l] = 1/<l>.
    // Pair chords (density l^4 mu / <l^4>):
    //   E[1/l] = <l^3>/<l^4>.
    let point_mean: Vec<f64> = point_chunks
        .iter()
        .filter(|c| c.n > 0)
        .map(|c| (c.moments.weighted_sum(1) / c.moments.total_charge()).as_f64())
        .collect();
    let point_inv: Vec<f64> = point_chunks
        .iter()
        .filter(|c| c.n > 0)
        .map(|c| c.inv_sum.value().as_f64() / c.n as f64)
        .collect();
    let pair_inv: Vec<f64> = pair_chunks
        .iter()
        .filter(|c| c.n > 0)
        .map(|c| c.inv_sum.value().as_f64() / c.n as f64)
        .collect();

    let merged_mean = |chunks: &[ReweightChunk<T>]| {
        let num: f64 = chunks
            .iter()
            .map(|c| c.moments.weighted_sum(1).as_f64())
            .sum();
        let den: f64 = chunks.iter().map(|c| c.n as f64).sum();
        num / den
    };
    let merged_inv = |chunks: &[ReweightChunk<T>]| {
        let num: f64 = chunks.iter().map(|c| c.inv_sum.value().as_f64()).sum();
        let den: f64 = chunks.iter().map(|c| c.n as f64).sum();
        num / den
    };

    {
        let value = merged_mean(&point_chunks);
        let se_val = chunk_stderr(&point_mean);
        let reference = m2 / m1;
        let se_ref = (s2 / m1).hypot(m2 * s1 / (m1 * m1));
        records.push(IdentityRecord::sigma(
            "point_chord_mean_eq_m2_over_m1",
            value,
            se_val.hypot(se_ref),
            reference,
            4.0,
        ));
    }
    {
        let value = merged_inv(&point_chunks);
        let se_val = chunk_stderr(&point_inv);
        let reference = 1.0 / m1;
        let se_ref = s1 / (m1 * m1);
        records.push(IdentityRecord::sigma(
            "point_chord_inv_mean_eq_recip_m1",
            value,
            se_val.hypot(se_ref),
            reference,
            4.0,
        ));
    }
    {
        let value = merged_inv(&pair_chunks);
        let se_val = chunk_stderr(&pair_inv);
        let reference = m3 / m4;
        let se_ref = (s3 / m4).hypot(m3 * s4 / (m4 * m4));
        records.push(IdentityRecord::sigma(
            "pair_chord_inv_mean_eq_m3_over_m4",
            value,
            se_val.hypot(se_ref),
            reference,
            4.0,
        ));
    }

    Ok(RandomnessReport {
        chords,
        point_hist,
        pair_hist,
        n_point,
        n_pair,
        point_within_fraction,
        point_bins_compared,
        pair_within_fraction,
        pair_bins_compared,
        records,
    })
}
