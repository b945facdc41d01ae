use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{interval_boolean, BoolOp, IntervalSet, Line, Vec3};
use crate::Real;

/// Constructive solid geometry tree over sphere and axis-aligned box
/// primitives.
///
/// The JSON form is externally tagged, e.g.
/// `{"sphere": {"center": [0,0,0], "radius": 1.0}}`,
/// `{"difference": [<outer>, <carved>]}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolidSpec<T> {
    Sphere { center: Vec3<T>, radius: T },
    #[serde(rename = "box")]
    Cuboid { min: Vec3<T>, max: Vec3<T> },
    Union(Vec<SolidSpec<T>>),
    Intersection(Vec<SolidSpec<T>>),
    Difference(Box<SolidSpec<T>>, Box<SolidSpec<T>>),
}

/// Axis-aligned bounding box.
#[derive(Clone, Copy, Debug)]
pub struct Aabb<T> {
    pub min: Vec3<T>,
    pub max: Vec3<T>,
}

impl<T: Real> Aabb<T> {
    pub fn center(&self) -> Vec3<T> {
        (self.min + self.max) * T::of(0.5)
    }

    pub fn half_diagonal(&self) -> T {
        ((self.max - self.min) * T::of(0.5)).norm()
    }

    pub fn volume(&self) -> T {
        let d = self.max - self.min;
        (d.x * d.y * d.z).max(T::zero())
    }

    fn hull(&self, o: &Self) -> Self {
        Aabb {
            min: self.min.min_by_axis(o.min),
            max: self.max.max_by_axis(o.max),
        }
    }

    fn meet(&self, o: &Self) -> Self {
        let min = self.min.max_by_axis(o.min);
        let max = self.max.min_by_axis(o.max);
        if min.x < max.x && min.y < max.y && min.z < max.z {
            Aabb { min, max }
        } else {
            // Empty intersection collapses to a point so downstream
            // center/radius queries stay finite.
            let c = (self.center() + o.center()) * T::of(0.5);
            Aabb { min: c, max: c }
        }
    }

    pub fn disjoint_from(&self, o: &Self) -> bool {
        self.max.x <= o.min.x
            || o.max.x <= self.min.x
            || self.max.y <= o.min.y
            || o.max.y <= self.min.y
            || self.max.z <= o.min.z
            || o.max.z <= self.min.z
    }
}

impl<T: Real> SolidSpec<T> {
    pub fn sphere(center: Vec3<T>, radius: T) -> Self {
        SolidSpec::Sphere { center, radius }
    }

    pub fn cuboid(min: Vec3<T>, max: Vec3<T>) -> Self {
        SolidSpec::Cuboid { min, max }
    }

    pub fn difference(a: SolidSpec<T>, b: SolidSpec<T>) -> Self {
        SolidSpec::Difference(Box::new(a), Box::new(b))
    }

    /// Shell between two concentric spheres, `inner < outer`.
    pub fn shell(center: Vec3<T>, outer: T, inner: T) -> Self {
        SolidSpec::difference(
            SolidSpec::sphere(center, outer),
            SolidSpec::sphere(center, inner),
        )
    }

    /// Structural validity: positive radii, nondegenerate boxes, nonempty
    /// operand lists.
    pub fn validate(&self) -> Result<(), String> {
        match self {
            SolidSpec::Sphere { radius, .. } => {
                if *radius > T::zero() {
                    Ok(())
                } else {
                    Err("sphere radius must be positive".into())
                }
            }
            SolidSpec::Cuboid { min, max } => {
                if min.x < max.x && min.y < max.y && min.z < max.z {
                    Ok(())
                } else {
                    Err("box min must be strictly below max on every axis".into())
                }
            }
            SolidSpec::Union(children) | SolidSpec::Intersection(children) => {
                if children.is_empty() {
                    return Err("union/intersection needs at least one operand".into());
                }
                children.iter().try_for_each(|c| c.validate())
            }
            SolidSpec::Difference(a, b) => {
                a.validate()?;
                b.validate()
            }
        }
    }

    pub fn aabb(&self) -> Aabb<T> {
        match self {
            SolidSpec::Sphere { center, radius } => {
                let r = Vec3::new(*radius, *radius, *radius);
                Aabb {
                    min: *center - r,
                    max: *center + r,
                }
            }
            SolidSpec::Cuboid { min, max } => Aabb {
                min: *min,
                max: *max,
            },
            SolidSpec::Union(children) => {
                let mut boxes = children.iter().map(|c| c.aabb());
                let first = boxes.next().expect("validated nonempty union");
                boxes.fold(first, |acc, b| acc.hull(&b))
            }
            SolidSpec::Intersection(children) => {
                let mut boxes = children.iter().map(|c| c.aabb());
                let first = boxes.next().expect("validated nonempty intersection");
                boxes.fold(first, |acc, b| acc.meet(&b))
            }
            SolidSpec::Difference(a, _) => a.aabb(),
        }
    }

    /// An enclosing sphere, as tight as the tree structure allows: exact
    /// for spheres, the circumsphere for boxes, the carved-from shape for
    /// differences, the smallest available enclosure for intersections.
    /// Every point of the solid lies inside it.
    pub fn bounding_sphere(&self) -> (Vec3<T>, T) {
        match self {
            SolidSpec::Sphere { center, radius } => (*center, *radius),
            SolidSpec::Cuboid { .. } => {
                let b = self.aabb();
                (b.center(), b.half_diagonal())
            }
            SolidSpec::Difference(a, _) => a.bounding_sphere(),
            SolidSpec::Union(children) => {
                let b = self.aabb();
                let center = b.center();
                let radius = children
                    .iter()
                    .map(|c| {
                        let (ci, ri) = c.bounding_sphere();
                        (ci - center).norm() + ri
                    })
                    .fold(T::zero(), |acc, r| acc.max(r));
                (center, radius)
            }
            SolidSpec::Intersection(children) => {
                // The intersection lies inside every member, so the member
                // with the smallest sphere encloses it; the meet-AABB
                // circumsphere may be tighter still.
                let b = self.aabb();
                let mut best = (b.center(), b.half_diagonal());
                for c in children {
                    let (ci, ri) = c.bounding_sphere();
                    if ri < best.1 {
                        best = (ci, ri);
                    }
                }
                best
            }
        }
    }
}

/// Membership test; points within roundoff of a boundary may land on
/// either side.
pub fn contains<T: Real>(solid: &SolidSpec<T>, p: Vec3<T>) -> bool {
    match solid {
        SolidSpec::Sphere { center, radius } => (p - *center).norm_sq() < *radius * *radius,
        SolidSpec::Cuboid { min, max } => {
            min.x < p.x && p.x < max.x && min.y < p.y && p.y < max.y && min.z < p.z && p.z < max.z
        }
        SolidSpec::Union(children) => children.iter().any(|c| contains(c, p)),
        SolidSpec::Intersection(children) => children.iter().all(|c| contains(c, p)),
        SolidSpec::Difference(a, b) => contains(a, p) && !contains(b, p),
    }
}

/// Numerically stable quadratic solve for a unit-direction line against a
/// sphere. Tangent grazes count as misses.
fn sphere_span<T: Real>(center: Vec3<T>, radius: T, line: &Line<T>) -> Option<(T, T)> {
    let m = line.origin - center;
    let b = line.direction.dot(m);
    let c = m.norm_sq() - radius * radius;
    let disc = b * b - c;
    if disc <= T::zero() {
        return None;
    }
    // q carries the sign of -b so neither root suffers cancellation.
    let q = -(b + b.signum() * disc.sqrt());
    let (t1, t2) = (q, c / q);
    Some((t1.min(t2), t1.max(t2)))
}

/// Slab test for an axis-aligned box. Lines lying in a face plane count as
/// misses.
fn cuboid_span<T: Real>(min: Vec3<T>, max: Vec3<T>, line: &Line<T>) -> Option<(T, T)> {
    let mut t0 = T::neg_infinity();
    let mut t1 = T::infinity();
    for axis in 0..3 {
        let o = line.origin.axis(axis);
        let d = line.direction.axis(axis);
        if d == T::zero() {
            if o <= min.axis(axis) || o >= max.axis(axis) {
                return None;
            }
        } else {
            let ta = (min.axis(axis) - o) / d;
            let tb = (max.axis(axis) - o) / d;
            t0 = t0.max(ta.min(tb));
            t1 = t1.min(ta.max(tb));
            if t0 >= t1 {
                return None;
            }
        }
    }
    Some((t0, t1))
}

/// Line parameter intervals where the line lies inside the solid, with the
/// sliver cleanup applied at every CSG node (tolerance `eps`, see
/// [`super::EPS_SCALE`]).
pub fn intersect_line<T: Real>(solid: &SolidSpec<T>, line: &Line<T>, eps: T) -> IntervalSet<T> {
    let raw = match solid {
        SolidSpec::Sphere { center, radius } => match sphere_span(*center, *radius, line) {
            Some((lo, hi)) => IntervalSet::single(lo, hi),
            None => IntervalSet::empty(),
        },
        SolidSpec::Cuboid { min, max } => match cuboid_span(*min, *max, line) {
            Some((lo, hi)) => IntervalSet::single(lo, hi),
            None => IntervalSet::empty(),
        },
        SolidSpec::Union(children) => {
            let sets: Vec<_> = children
                .iter()
                .map(|c| intersect_line(c, line, eps))
                .collect();
            interval_boolean(BoolOp::Union, &sets)
        }
        SolidSpec::Intersection(children) => {
            let sets: Vec<_> = children
                .iter()
                .map(|c| intersect_line(c, line, eps))
                .collect();
            interval_boolean(BoolOp::Intersection, &sets)
        }
        SolidSpec::Difference(a, b) => {
            let sets = [intersect_line(a, line, eps), intersect_line(b, line, eps)];
            interval_boolean(BoolOp::Difference, &sets)
        }
    };
    raw.cleanup(eps)
}

/// Hit-or-miss volume estimate over the solid's AABB.
/// Returns `(volume, stderr)` with the binomial standard error.
pub fn estimate_volume_mc<T: Real, R: Rng>(
    solid: &SolidSpec<T>,
    n_points: u64,
    rng: &mut R,
) -> (T, T) {
    let bbox = solid.aabb();
    let vbox = bbox.volume();
    let d = bbox.max - bbox.min;
    let mut hits = 0u64;
    for _ in 0..n_points {
        let p = bbox.min
            + Vec3::new(
                d.x * T::of(rng.random::<f64>()),
                d.y * T::of(rng.random::<f64>()),
                d.z * T::of(rng.random::<f64>()),
            );
        if contains(solid, p) {
            hits += 1;
        }
    }
    let n = T::of(n_points as f64);
    let p_hat = T::of(hits as f64) / n;
    let stderr = vbox * (p_hat * (T::one() - p_hat) / n).sqrt();
    (p_hat * vbox, stderr)
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    use super::*;

    fn unit_sphere() -> SolidSpec<f64> {
        SolidSpec::sphere(Vec3::zero(), 1.0)
    }

    fn shell() -> SolidSpec<f64> {
        SolidSpec::shell(Vec3::zero(), 1.0, 0.5)
    }

    const EPS: f64 = 1e-9;

    #[test]
    fn sphere_diametral_chord() {
        let line = Line::new(Vec3::new(-2.0, 0.0, 0.0), Vec3::new(1.0, 0.0, 0.0));
        let set = intersect_line(&unit_sphere(), &line, EPS);
        assert_eq!(set.count(), 1);
        let (lo, hi) = set.spans()[0];
        assert!((lo - 1.0).abs() < 1e-12 && (hi - 3.0).abs() < 1e-12);
    }

    #[test]
    fn sphere_miss_and_tangent() {
        let miss = Line::new(Vec3::new(-2.0, 1.5, 0.0), Vec3::new(1.0, 0.0, 0.0));
        assert!(intersect_line(&unit_sphere(), &miss, EPS).is_empty());
        let tangent = Line::new(Vec3::new(-2.0, 1.0, 0.0), Vec3::new(1.0, 0.0, 0.0));
        assert!(intersect_line(&unit_sphere(), &tangent, EPS).is_empty());
    }

    #[test]
    fn shell_diametral_line_has_two_segments() {
        let line = Line::new(Vec3::new(-3.0, 0.0, 0.0), Vec3::new(1.0, 0.0, 0.0));
        let set = intersect_line(&shell(), &line, EPS);
        assert_eq!(set.count(), 2);
        assert!((set.total_length() - 1.0).abs() < 1e-12);
        // Off-center line through the solid part only: a single segment.
        let graze = Line::new(Vec3::new(-3.0, 0.75, 0.0), Vec3::new(1.0, 0.0, 0.0));
        let set = intersect_line(&shell(), &graze, EPS);
        assert_eq!(set.count(), 1);
    }

    #[test]
    fn box_chord_and_parallel_miss() {
        let cube = SolidSpec::cuboid(Vec3::zero(), Vec3::new(1.0, 1.0, 1.0));
        let line = Line::new(Vec3::new(0.5, 0.5, -4.0), Vec3::new(0.0, 0.0, 1.0));
        let set = intersect_line(&cube, &line, EPS);
        assert_eq!(set.count(), 1);
        assert!((set.total_length() - 1.0).abs() < 1e-12);
        // Parallel to z inside the x-slab but outside y.
        let miss = Line::new(Vec3::new(0.5, 2.0, -4.0), Vec3::new(0.0, 0.0, 1.0));
        assert!(intersect_line(&cube, &miss, EPS).is_empty());
        // In the plane of a face: counts as a miss.
        let face = Line::new(Vec3::new(0.5, 1.0, -4.0), Vec3::new(0.0, 0.0, 1.0));
        assert!(intersect_line(&cube, &face, EPS).is_empty());
    }

    #[test]
    fn containment_matches_intersection() {
        let s = shell();
        assert!(contains(&s, Vec3::new(0.75, 0.0, 0.0)));
        assert!(!contains(&s, Vec3::new(0.25, 0.0, 0.0)));
        assert!(!contains(&s, Vec3::new(1.25, 0.0, 0.0)));
    }

    #[test]
    fn aabb_shapes() {
        let b = shell().aabb();
        assert_eq!(b.min, Vec3::new(-1.0, -1.0, -1.0));
        assert_eq!(b.max, Vec3::new(1.0, 1.0, 1.0));
        let (c, r) = shell().bounding_sphere();
        assert!((c.norm()) < 1e-15);
        assert_eq!(r, 1.0); // exact: the outer sphere bounds the shell
        let cube = SolidSpec::cuboid(Vec3::<f64>::zero(), Vec3::new(2.0, 2.0, 2.0));
        let (_, r) = cube.bounding_sphere();
        assert!((r - 3f64.sqrt()).abs() < 1e-12);
        // Intersection picks the smallest enclosure among its members.
        let lens = SolidSpec::Intersection(vec![
            SolidSpec::sphere(Vec3::zero(), 4.0),
            SolidSpec::sphere(Vec3::new(0.5, 0.0, 0.0), 1.0),
        ]);
        let (c, r) = lens.bounding_sphere();
        assert_eq!(r, 1.0);
        assert_eq!(c, Vec3::new(0.5, 0.0, 0.0));
    }

    #[test]
    fn volume_mc_box_is_exact_in_expectation() {
        let cube = SolidSpec::cuboid(Vec3::zero(), Vec3::new(2.0, 1.0, 0.5));
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let (v, _) = estimate_volume_mc(&cube, 2_000, &mut rng);
        assert_eq!(v, 1.0); // every AABB sample is a hit
    }

    #[test]
    fn volume_mc_sphere_within_four_sigma() {
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        let (v, se) = estimate_volume_mc(&unit_sphere(), 200_000, &mut rng);
        let truth = 4.0 * std::f64::consts::PI / 3.0;
        assert!((v - truth).abs() < 4.0 * se, "v={v} truth={truth} se={se}");
    }

    #[test]
    fn json_round_trip_matches_schema() {
        let s = shell();
        let txt = serde_json::to_string(&s).unwrap();
        assert!(txt.starts_with("{\"difference\":[{\"sphere\""));
        let back: SolidSpec<f64> = serde_json::from_str(&txt).unwrap();
        assert!(back.validate().is_ok());
        let boxy: SolidSpec<f64> =
            serde_json::from_str(r#"{"box": {"min": [0,0,0], "max": [1,2,3]}}"#).unwrap();
        assert!(boxy.validate().is_ok());
    }
}
