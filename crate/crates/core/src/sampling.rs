//! Seedable random sampling of the measures the estimators integrate over:
//! isotropic directions, uniform interior points, invariant-measure lines
//! through a bounding sphere, interior rays and point pairs.
//!
//! Reproducibility contract: a `(seed, stream_id)` pair fully determines the
//! sample sequence. Drivers fan work out over stream ids and merge in stream
//! order, so results are independent of thread count.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;
use thiserror::Error;

use crate::geometry::{Body, Line, Vec3};
use crate::Real;

/// Counter-based generator: `seed` selects the experiment, `stream_id` the
/// substream. Distinct stream ids give statistically independent sequences.
#[derive(Clone, Debug)]
pub struct RandomSource {
    rng: ChaCha12Rng,
    seed: u64,
    stream_id: u64,
}

impl RandomSource {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        RandomSource {
            rng,
            seed,
            stream_id,
        }
    }

    #[inline]
    pub fn seed(&self) -> u64 {
        self.seed
    }

    #[inline]
    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Uniform in `[0, 1)`.
    #[inline]
    pub fn uniform<T: Real>(&mut self) -> T {
        T::of(self.rng.random::<f64>())
    }

    /// Uniform in `[lo, hi)`.
    #[inline]
    pub fn uniform_in<T: Real>(&mut self, lo: T, hi: T) -> T {
        lo + (hi - lo) * self.uniform::<T>()
    }
}

impl RngCore for RandomSource {
    #[inline]
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    #[inline]
    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    #[inline]
    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

/// Work plan mapping a sampling job onto RNG substreams.
///
/// Chunk `i` always draws from `RandomSource::new(seed, i)` and chunk
/// results are merged in index order, so the outcome is bit-identical for
/// any number of worker threads.
#[derive(Clone, Copy, Debug)]
pub struct SamplePlan {
    pub seed: u64,
    pub streams: usize,
}

impl Default for SamplePlan {
    fn default() -> Self {
        SamplePlan {
            seed: crate::DEFAULT_SEED,
            streams: crate::DEFAULT_STREAMS,
        }
    }
}

impl SamplePlan {
    pub fn new(seed: u64, streams: usize) -> Self {
        assert!(streams >= 1, "need at least one stream");
        SamplePlan { seed, streams }
    }

    pub fn source(&self, chunk: usize) -> RandomSource {
        RandomSource::new(self.seed, chunk as u64)
    }

    /// Derives the plan for a named sampling role: same stream layout,
    /// statistically independent streams. Keeps estimator families that
    /// share a user seed from consuming the same random sequence for
    /// different purposes.
    pub fn with_role(&self, salt: u64) -> SamplePlan {
        SamplePlan {
            seed: self.seed ^ salt,
            streams: self.streams,
        }
    }

    /// Number of samples chunk `i` owns out of `total`, balanced to within
    /// one and independent of the chunk execution order.
    pub fn quota(&self, total: u64, chunk: usize) -> u64 {
        let base = total / self.streams as u64;
        let extra = total % self.streams as u64;
        base + u64::from((chunk as u64) < extra)
    }

    /// Runs `f` once per chunk, in parallel, returning results in chunk
    /// order.
    pub fn run<A, F>(&self, f: F) -> Vec<A>
    where
        A: Send,
        F: Fn(usize, RandomSource) -> A + Sync,
    {
        use rayon::prelude::*;
        (0..self.streams)
            .into_par_iter()
            .map(|i| f(i, self.source(i)))
            .collect()
    }
}

/// Role salts for [`SamplePlan::with_role`]; one per estimator family.
pub mod roles {
    pub const CHORDS: u64 = 0x4348_4F52_4453;
    pub const RADII: u64 = 0x5241_4449_4953;
    pub const PAIRS: u64 = 0x5041_4952_5321;
    /// Full chords through single uniform interior points.
    pub const POINT_CHORDS: u64 = 0x504E_545F_4348;
    /// Full chords through uniform interior point pairs.
    pub const PAIR_CHORDS: u64 = 0x5052_5F43_4844;
    pub const WALKS: u64 = 0x5741_4C4B_53;
    pub const OPTICAL: u64 = 0x4F50_5449_43;
    pub const VOLUME: u64 = 0x564F_4C55_4D;
    pub const DIRAC_PAIRS: u64 = 0xD12A_C001;
    pub const DIRAC_RADII: u64 = 0xD12A_C002;
    pub const DIRAC_CHORDS: u64 = 0xD12A_C003;
}

#[derive(Debug, Error)]
pub enum SampleError {
    #[error("interior-point rejection sampling stalled: acceptance below 1e-6; \
             body volume is negligible inside its bounding box")]
    RejectionStall,
}

/// Ray for interior-emission estimators: origin strictly inside the body.
#[derive(Clone, Copy, Debug)]
pub struct RaySample<T> {
    pub origin: Vec3<T>,
    pub direction: Vec3<T>,
}

/// Ordered pair of uniform interior points.
#[derive(Clone, Copy, Debug)]
pub struct PointPair<T> {
    pub a: Vec3<T>,
    pub b: Vec3<T>,
}

/// Unit vector uniform on the sphere, by inversion in `cos(theta)`.
/// Consumes exactly two uniforms.
pub fn sample_isotropic_direction<T: Real>(rng: &mut RandomSource) -> Vec3<T> {
    let z = T::of(2.0) * rng.uniform::<T>() - T::one();
    let phi = T::of(2.0) * T::PI() * rng.uniform::<T>();
    let r = (T::one() - z * z).max(T::zero()).sqrt();
    Vec3::new(r * phi.cos(), r * phi.sin(), z)
}

const REJECTION_WINDOW: u64 = 1_000_000;

/// Uniform point in the body, by rejection from its AABB.
pub fn sample_interior_point<T: Real>(
    rng: &mut RandomSource,
    body: &Body<T>,
) -> Result<Vec3<T>, SampleError> {
    let bbox = body.solid.aabb();
    let d = bbox.max - bbox.min;
    for _ in 0..REJECTION_WINDOW {
        let p = bbox.min
            + Vec3::new(
                d.x * rng.uniform::<T>(),
                d.y * rng.uniform::<T>(),
                d.z * rng.uniform::<T>(),
            );
        if body.contains(p) {
            return Ok(p);
        }
    }
    Err(SampleError::RejectionStall)
}

/// Line drawn from the rigid-motion invariant measure restricted to lines
/// meeting the sphere `(center, radius)`: isotropic direction plus a uniform
/// point on the disc of radius `radius` orthogonal to it. `t = 0` sits on
/// the disc plane through `center`.
pub fn sample_mu_line<T: Real>(
    rng: &mut RandomSource,
    center: Vec3<T>,
    radius: T,
) -> Line<T> {
    let direction = sample_isotropic_direction::<T>(rng);
    let (e1, e2) = direction.orthonormal_basis();
    let rho = radius * rng.uniform::<T>().sqrt();
    let phi = T::of(2.0) * T::PI() * rng.uniform::<T>();
    let foot = center + e1 * (rho * phi.cos()) + e2 * (rho * phi.sin());
    Line::from_unit(foot, direction)
}

/// Interior-point ray: uniform origin in the body, isotropic direction.
pub fn sample_nu_ray<T: Real>(
    rng: &mut RandomSource,
    body: &Body<T>,
) -> Result<RaySample<T>, SampleError> {
    let origin = sample_interior_point(rng, body)?;
    let direction = sample_isotropic_direction::<T>(rng);
    Ok(RaySample { origin, direction })
}

/// Two independent uniform interior points.
pub fn sample_point_pair<T: Real>(
    rng: &mut RandomSource,
    body: &Body<T>,
) -> Result<PointPair<T>, SampleError> {
    let a = sample_interior_point(rng, body)?;
    let b = sample_interior_point(rng, body)?;
    Ok(PointPair { a, b })
}
