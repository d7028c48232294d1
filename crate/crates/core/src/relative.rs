//! Two-view relative pose from normalized correspondences.
//!
//! Convention: in a [`Correspondence2D2D`], `a` is the query-view feature and
//! `b` the anchor-view feature. The estimated pose maps anchor-frame points
//! into the query frame, `X_q = R X_k + t`, so matches satisfy the epipolar
//! constraint `aᵀ [t]× R b = 0`.

use nalgebra::{DMatrix, Matrix3};
use rand::seq::index::sample;
use rand::Rng;

use crate::averaging::Ray;
use crate::error::{Error, Result};
use crate::geometry::{skew, Mat3, NormalizedFeature, Pose, RelativePoseEstimate, Rotation, Vec3};

/// Minimum angle between two viewing rays for triangulation, radians.
pub const MIN_RAY_ANGLE: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Correspondence2D2D {
    /// Query-view feature.
    pub a: NormalizedFeature,
    /// Anchor-view feature.
    pub b: NormalizedFeature,
}

impl Correspondence2D2D {
    pub fn new(a: NormalizedFeature, b: NormalizedFeature) -> Self {
        Correspondence2D2D { a, b }
    }
}

/// Essential matrix, stored with unit Frobenius norm.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EssentialMatrix(Mat3);

impl EssentialMatrix {
    /// `[t]× R`, scaled to unit norm.
    pub fn from_pose(rotation: &Rotation, t: &Vec3) -> Result<Self> {
        let e = skew(t) * rotation.matrix();
        let n = e.norm();
        if !(n > 0.0) {
            return Err(Error::Domain("essential matrix needs a nonzero translation".into()));
        }
        Ok(EssentialMatrix(e / n))
    }

    /// Projects an arbitrary matrix onto the essential manifold (two equal
    /// singular values, third zero).
    pub fn from_matrix(m: &Mat3) -> Result<Self> {
        let svd = m.svd(true, true);
        let (u, v_t) = match (svd.u, svd.v_t) {
            (Some(u), Some(v_t)) => (u, v_t),
            _ => return Err(Error::Internal("svd failed on essential matrix".into())),
        };
        let mut idx = [0usize, 1, 2];
        idx.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
        let s = 0.5 * (svd.singular_values[idx[0]] + svd.singular_values[idx[1]]);
        if !(s > 0.0) {
            return Err(Error::DegenerateGeometry("essential matrix has rank < 2".into()));
        }
        let mut d = Mat3::zeros();
        d[(idx[0], idx[0])] = 1.0;
        d[(idx[1], idx[1])] = 1.0;
        let e = u * d * v_t;
        Ok(EssentialMatrix(e / e.norm()))
    }

    pub fn matrix(&self) -> &Mat3 {
        &self.0
    }

    /// Algebraic residual `aᵀ E b`.
    pub fn residual(&self, m: &Correspondence2D2D) -> f64 {
        m.a.homogeneous().dot(&(self.0 * m.b.homogeneous()))
    }

    /// Root of the summed squared point-to-epipolar-line distances in both views.
    pub fn symmetric_epipolar_distance(&self, m: &Correspondence2D2D) -> f64 {
        let a = m.a.homogeneous();
        let b = m.b.homogeneous();
        let la = self.0 * b;
        let lb = self.0.transpose() * a;
        let r = a.dot(&la);
        let na = la.x * la.x + la.y * la.y;
        let nb = lb.x * lb.x + lb.y * lb.y;
        if na <= 0.0 || nb <= 0.0 {
            return f64::INFINITY;
        }
        (r * r * (1.0 / na + 1.0 / nb)).sqrt()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RansacConfig {
    /// Inlier threshold on the symmetric epipolar distance, normalized units.
    pub epipolar_threshold: f64,
    pub confidence: f64,
    pub max_iterations: usize,
}

impl Default for RansacConfig {
    fn default() -> Self {
        RansacConfig {
            epipolar_threshold: 1e-3,
            confidence: 0.999,
            max_iterations: 5000,
        }
    }
}

fn hartley_transform(points: impl Iterator<Item = (f64, f64)> + Clone) -> Option<Mat3> {
    let n = points.clone().count() as f64;
    let (sx, sy) = points.clone().fold((0.0, 0.0), |(sx, sy), (x, y)| (sx + x, sy + y));
    let (mx, my) = (sx / n, sy / n);
    let mean_dist = points
        .map(|(x, y)| ((x - mx).powi(2) + (y - my).powi(2)).sqrt())
        .sum::<f64>()
        / n;
    if !(mean_dist > 1e-12) {
        return None;
    }
    let s = std::f64::consts::SQRT_2 / mean_dist;
    Some(Mat3::new(s, 0.0, -s * mx, 0.0, s, -s * my, 0.0, 0.0, 1.0))
}

/// Normalized eight-point solve on the selected matches (at least 8).
pub fn eight_point(matches: &[Correspondence2D2D], indices: &[usize]) -> Result<EssentialMatrix> {
    if indices.len() < 8 {
        return Err(Error::InsufficientData(format!(
            "eight-point needs 8 matches, got {}",
            indices.len()
        )));
    }
    let ta = hartley_transform(indices.iter().map(|&i| (matches[i].a.x(), matches[i].a.y())))
        .ok_or_else(|| Error::DegenerateGeometry("query features are coincident".into()))?;
    let tb = hartley_transform(indices.iter().map(|&i| (matches[i].b.x(), matches[i].b.y())))
        .ok_or_else(|| Error::DegenerateGeometry("anchor features are coincident".into()))?;

    let rows = indices.len().max(9);
    let mut design = DMatrix::<f64>::zeros(rows, 9);
    for (r, &i) in indices.iter().enumerate() {
        let a = ta * matches[i].a.homogeneous();
        let b = tb * matches[i].b.homogeneous();
        for p in 0..3 {
            for q in 0..3 {
                design[(r, 3 * p + q)] = a[p] * b[q];
            }
        }
    }
    let svd = design.svd(false, true);
    let v_t = svd
        .v_t
        .ok_or_else(|| Error::Internal("svd failed in eight-point".into()))?;
    let s = &svd.singular_values;
    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&i, &j| s[i].total_cmp(&s[j]));
    let (smallest, second, largest) = (order[0], order[1], order[s.len() - 1]);
    if !(s[second] > 1e-10 * s[largest]) {
        return Err(Error::DegenerateGeometry(
            "eight-point design matrix has a null space of dimension > 1".into(),
        ));
    }
    let e = v_t.row(smallest);
    let en = Matrix3::from_row_slice(&[e[0], e[1], e[2], e[3], e[4], e[5], e[6], e[7], e[8]]);
    EssentialMatrix::from_matrix(&(ta.transpose() * en * tb))
}

fn inlier_mask(e: &EssentialMatrix, matches: &[Correspondence2D2D], threshold: f64) -> Vec<bool> {
    matches
        .iter()
        .map(|m| e.symmetric_epipolar_distance(m) < threshold)
        .collect()
}

const REFIT_ROUNDS: usize = 10;

/// RANSAC over eight-match samples, then repeated refits on all inliers.
///
/// Deterministic for a given RNG state; the first hypothesis reaching the best
/// inlier count wins.
pub fn estimate_essential<R: Rng + ?Sized>(
    matches: &[Correspondence2D2D],
    cfg: &RansacConfig,
    rng: &mut R,
) -> Result<(EssentialMatrix, Vec<bool>)> {
    let n = matches.len();
    if n < 8 {
        return Err(Error::InsufficientData(format!(
            "essential estimation needs at least 8 matches, got {n}"
        )));
    }
    let all: Vec<usize> = (0..n).collect();
    if hartley_transform(matches.iter().map(|m| (m.a.x(), m.a.y()))).is_none()
        || hartley_transform(matches.iter().map(|m| (m.b.x(), m.b.y()))).is_none()
    {
        return Err(Error::DegenerateGeometry("all features coincide".into()));
    }

    let mut best: Option<(usize, EssentialMatrix)> = None;
    let mut needed = cfg.max_iterations;
    let mut it = 0;
    while it < needed.min(cfg.max_iterations) {
        it += 1;
        let idx = sample(rng, n, 8).into_vec();
        let Ok(e) = eight_point(matches, &idx) else {
            continue;
        };
        let count = matches
            .iter()
            .filter(|m| e.symmetric_epipolar_distance(m) < cfg.epipolar_threshold)
            .count();
        if best.as_ref().is_none_or(|(c, _)| count > *c) {
            best = Some((count, e));
            needed = adaptive_iterations(count as f64 / n as f64, 8, cfg.confidence);
        }
    }
    let Some((count, e)) = best else {
        return Err(Error::NoConsensus("every eight-point sample was degenerate".into()));
    };
    if count < 8 {
        return Err(Error::NoConsensus(format!("only {count} epipolar inliers")));
    }
    // refit on the inliers until the inlier count stops growing
    let mut best_e = e;
    let mut mask = inlier_mask(&e, matches, cfg.epipolar_threshold);
    let mut count = count;
    for _ in 0..REFIT_ROUNDS {
        let inliers: Vec<usize> = all.iter().copied().filter(|&i| mask[i]).collect();
        let Ok(refit) = eight_point(matches, &inliers) else {
            break;
        };
        let refit_mask = inlier_mask(&refit, matches, cfg.epipolar_threshold);
        let refit_count = refit_mask.iter().filter(|&&m| m).count();
        if refit_count < count {
            break;
        }
        let grew = refit_count > count;
        best_e = refit;
        mask = refit_mask;
        count = refit_count;
        if !grew {
            break;
        }
    }
    Ok((best_e, mask))
}

fn adaptive_iterations(inlier_ratio: f64, sample_size: i32, confidence: f64) -> usize {
    let good = inlier_ratio.powi(sample_size);
    if good >= 1.0 {
        return 1;
    }
    if good <= 0.0 {
        return usize::MAX;
    }
    let k = (1.0 - confidence).ln() / (1.0 - good).ln();
    if k.is_finite() {
        k.ceil().max(1.0) as usize
    } else {
        usize::MAX
    }
}

/// The four `(R, t̂)` factorizations of an essential matrix:
/// `(R, t̂), (R, −t̂), (R̄, t̂), (R̄, −t̂)` with `R̄` the baseline half-turn twin.
pub fn decompose_essential(e: &EssentialMatrix) -> Result<[(Rotation, Vec3); 4]> {
    let svd = e.0.svd(true, true);
    let (mut u, mut v_t) = match (svd.u, svd.v_t) {
        (Some(u), Some(v_t)) => (u, v_t),
        _ => return Err(Error::Internal("svd failed on essential matrix".into())),
    };
    // place the null singular vector last
    let s = svd.singular_values;
    let null = (0..3).min_by(|&i, &j| s[i].total_cmp(&s[j])).unwrap_or(2);
    if null != 2 {
        u.swap_columns(null, 2);
        v_t.swap_rows(null, 2);
    }
    if u.determinant() < 0.0 {
        u = -u;
    }
    if v_t.determinant() < 0.0 {
        v_t = -v_t;
    }
    let w = Mat3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
    let r1 = Rotation::from_matrix(u * w * v_t)?;
    let r2 = Rotation::from_matrix(u * w.transpose() * v_t)?;
    let t: Vec3 = u.column(2).into_owned().normalize();
    Ok([(r1, t), (r1, -t), (r2, t), (r2, -t)])
}

/// Depths of a match in the anchor and query cameras under candidate
/// `X_q = R X_k + t`, from the common-perpendicular midpoint.
fn match_depths(rotation: &Rotation, t: &Vec3, m: &Correspondence2D2D) -> Option<(f64, f64)> {
    let anchor_ray = Ray::new(Vec3::zeros(), m.b.homogeneous()).ok()?;
    let query_center = -(rotation.transpose() * *t);
    let query_ray = Ray::new(query_center, rotation.transpose() * m.a.homogeneous()).ok()?;
    let x = anchor_ray.midpoint_with(&query_ray, MIN_RAY_ANGLE).ok()?;
    let depth_anchor = x.z;
    let depth_query = (rotation * x + t).z;
    Some((depth_query, depth_anchor))
}

/// Number of matches triangulating in front of both cameras.
pub fn positive_depth_count(rotation: &Rotation, t: &Vec3, matches: &[Correspondence2D2D]) -> usize {
    matches
        .iter()
        .filter_map(|m| match_depths(rotation, t, m))
        .filter(|(dq, da)| *dq > 0.0 && *da > 0.0)
        .count()
}

/// Picks the candidate with the most matches in front of both cameras.
pub fn cheirality_select(
    candidates: &[(Rotation, Vec3); 4],
    matches: &[Correspondence2D2D],
) -> Result<RelativePoseEstimate> {
    if matches.is_empty() {
        return Err(Error::InsufficientData("cheirality test needs at least one match".into()));
    }
    let counts: Vec<usize> = candidates
        .iter()
        .map(|(r, t)| positive_depth_count(r, t, matches))
        .collect();
    let best = counts.iter().copied().max().unwrap_or(0);
    if best == 0 {
        return Err(Error::NoValidPose);
    }
    if counts.iter().filter(|&&c| c == best).count() > 1 {
        return Err(Error::AmbiguousCheirality { count: best });
    }
    let i = counts.iter().position(|&c| c == best).unwrap_or(0);
    RelativePoseEstimate::new(candidates[i].0, candidates[i].1)
}

/// Midpoint of the common perpendicular of two back-projected viewing rays.
pub fn midpoint_triangulate(
    pose_a: &Pose,
    pose_b: &Pose,
    fa: &NormalizedFeature,
    fb: &NormalizedFeature,
) -> Result<Vec3> {
    let ca = pose_a.center();
    let cb = pose_b.center();
    if (ca - cb).norm() < 1e-12 {
        return Err(Error::DegenerateGeometry("camera centers coincide".into()));
    }
    let ra = Ray::new(ca, pose_a.ray_direction(fa))?;
    let rb = Ray::new(cb, pose_b.ray_direction(fb))?;
    ra.midpoint_with(&rb, MIN_RAY_ANGLE)
}

/// Relative pose with the epipolar inlier mask it was selected on.
#[derive(Clone, Debug, PartialEq)]
pub struct RelativePoseFit {
    pub rel: RelativePoseEstimate,
    pub essential: EssentialMatrix,
    pub inliers: Vec<bool>,
}

impl RelativePoseFit {
    pub fn inlier_count(&self) -> usize {
        self.inliers.iter().filter(|&&m| m).count()
    }
}

/// Essential-matrix RANSAC, decomposition and cheirality selection.
pub fn estimate_relative_pose<R: Rng + ?Sized>(
    matches: &[Correspondence2D2D],
    cfg: &RansacConfig,
    rng: &mut R,
) -> Result<RelativePoseFit> {
    let (essential, inliers) = estimate_essential(matches, cfg, rng)?;
    let inlier_matches: Vec<Correspondence2D2D> = matches
        .iter()
        .zip(&inliers)
        .filter(|(_, &keep)| keep)
        .map(|(m, _)| *m)
        .collect();
    let candidates = decompose_essential(&essential)?;
    let rel = cheirality_select(&candidates, &inlier_matches)?;
    Ok(RelativePoseFit {
        rel,
        essential,
        inliers,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{geodesic_angle, project, UnitQuaternion};
    use nalgebra::Vector4;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_rotation(rng: &mut impl Rng) -> Rotation {
        let v = Vector4::from_fn(|_, _| rng.random::<f64>() - 0.5);
        UnitQuaternion::from_vector(v).unwrap().to_rotation()
    }

    /// Two cameras a few meters apart, both looking at a cloud near the origin.
    fn two_view(rng: &mut impl Rng, n: usize) -> (Pose, Pose, Vec<Vec3>, Vec<Correspondence2D2D>) {
        let up = Vec3::z();
        let ca = Vec3::new(rng.random_range(-1.0..1.0), -5.0, rng.random_range(-0.5..0.5));
        let cb = Vec3::new(rng.random_range(1.0..3.0), -4.5, rng.random_range(-0.5..0.5));
        let query = Pose::look_at(ca, Vec3::new(0.1, 0.0, 0.0), up).unwrap();
        let anchor = Pose::look_at(cb, Vec3::new(-0.1, 0.2, 0.0), up).unwrap();
        let pts: Vec<Vec3> = (0..n)
            .map(|_| Vec3::from_fn(|_, _| rng.random_range(-1.0..1.0)))
            .collect();
        let matches = pts
            .iter()
            .map(|p| Correspondence2D2D::new(project(&query, p).unwrap(), project(&anchor, p).unwrap()))
            .collect();
        (query, anchor, pts, matches)
    }

    #[test]
    fn epipolar_identity_holds() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (q, a, _, matches) = two_view(&mut rng, 50);
        let (r, t) = q.relative_to(&a);
        let e = EssentialMatrix::from_pose(&r, &t).unwrap();
        for m in &matches {
            assert!(e.residual(m).abs() < 1e-10);
        }
    }

    #[test]
    fn noiseless_recovery_up_to_sign() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (q, a, _, matches) = two_view(&mut rng, 100);
        let (r, t) = q.relative_to(&a);
        let truth = EssentialMatrix::from_pose(&r, &t).unwrap();
        let (e, mask) = estimate_essential(&matches, &RansacConfig::default(), &mut rng).unwrap();
        assert!(mask.iter().all(|&m| m));
        let d = (e.matrix() - truth.matrix()).norm().min((e.matrix() + truth.matrix()).norm());
        assert!(d < 1e-6, "{d:e}");
    }

    #[test]
    fn planted_outliers_are_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (_, _, _, mut matches) = two_view(&mut rng, 80);
        for _ in 0..20 {
            let f = |rng: &mut ChaCha8Rng| {
                NormalizedFeature::new(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5)).unwrap()
            };
            let m = Correspondence2D2D::new(f(&mut rng), f(&mut rng));
            matches.push(m);
        }
        let (_, mask) = estimate_essential(&matches, &RansacConfig::default(), &mut rng).unwrap();
        let recovered = mask[..80].iter().filter(|&&m| m).count();
        assert!(recovered >= 78, "{recovered}");
        let false_pos = mask[80..].iter().filter(|&&m| m).count();
        assert!(false_pos <= 2, "{false_pos}");
    }

    #[test]
    fn identical_matches_are_degenerate() {
        let f = NormalizedFeature::new(0.1, 0.2).unwrap();
        let g = NormalizedFeature::new(-0.1, 0.05).unwrap();
        let matches = vec![Correspondence2D2D::new(f, g); 20];
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let r = estimate_essential(&matches, &RansacConfig::default(), &mut rng);
        assert!(matches!(r, Err(Error::DegenerateGeometry(_)) | Err(Error::NoConsensus(_))));
        assert!(matches!(
            estimate_essential(&matches[..7], &RansacConfig::default(), &mut rng),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn ransac_is_seed_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (_, _, _, mut matches) = two_view(&mut rng, 40);
        for i in 0..10 {
            let x = 0.05 * i as f64;
            matches.push(Correspondence2D2D::new(
                NormalizedFeature::new(x, -x).unwrap(),
                NormalizedFeature::new(-x, 0.3).unwrap(),
            ));
        }
        let cfg = RansacConfig::default();
        let a = estimate_essential(&matches, &cfg, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = estimate_essential(&matches, &cfg, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn decompose_identity_x() {
        let e = EssentialMatrix::from_pose(&Rotation::identity(), &Vec3::x()).unwrap();
        let c = decompose_essential(&e).unwrap();
        assert!(c.iter().any(|(r, t)| {
            geodesic_angle(r, &Rotation::identity()) < 1e-9 && (t - Vec3::x()).norm() < 1e-9
        }));
    }

    #[test]
    fn decomposition_candidates_are_proper_and_reproduce_e() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..100 {
            let r = random_rotation(&mut rng);
            let t = Vec3::from_fn(|_, _| rng.random::<f64>() - 0.5);
            let e = EssentialMatrix::from_pose(&r, &t).unwrap();
            for (cr, ct) in decompose_essential(&e).unwrap() {
                assert!((cr.matrix().determinant() - 1.0).abs() < 1e-9);
                let rebuilt = skew(&ct) * cr.matrix();
                let rebuilt = rebuilt / rebuilt.norm();
                let d = (rebuilt - e.matrix()).norm().min((rebuilt + e.matrix()).norm());
                assert!(d < 1e-8, "{d:e}");
            }
        }
    }

    #[test]
    fn cheirality_picks_ground_truth() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let (q, a, _, matches) = two_view(&mut rng, 30);
            let (r, t) = q.relative_to(&a);
            let e = EssentialMatrix::from_pose(&r, &t).unwrap();
            let cands = decompose_essential(&e).unwrap();
            let counts: Vec<usize> = cands.iter().map(|(r, t)| positive_depth_count(r, t, &matches)).collect();
            assert_eq!(counts.iter().filter(|&&c| c == matches.len()).count(), 1);
            let rel = cheirality_select(&cands, &matches).unwrap();
            assert!(geodesic_angle(rel.rotation(), &r) < 1e-6);
            assert!((rel.direction() - t.normalize()).norm() < 1e-6);
        }
    }

    #[test]
    fn cheirality_survives_one_percent_mismatches() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let (q, a, _, mut matches) = two_view(&mut rng, 200);
        // swap the anchor features of two matches
        let tmp = matches[0].b;
        matches[0].b = matches[1].b;
        matches[1].b = tmp;
        let (r, t) = q.relative_to(&a);
        let cands = decompose_essential(&EssentialMatrix::from_pose(&r, &t).unwrap()).unwrap();
        let rel = cheirality_select(&cands, &matches).unwrap();
        assert!(geodesic_angle(rel.rotation(), &r) < 1e-6);
    }

    #[test]
    fn epipole_match_is_unresolvable() {
        let q = Pose::identity();
        let a = Pose::from_center(Rotation::identity(), Vec3::new(0.2, 0.0, -1.0));
        let (r, t) = q.relative_to(&a);
        let cands = decompose_essential(&EssentialMatrix::from_pose(&r, &t).unwrap()).unwrap();
        // both features sit on the baseline: query sees the anchor center, anchor sees the query center
        let ca = a.center();
        let fa = NormalizedFeature::new(ca.x / ca.z, ca.y / ca.z).unwrap();
        let cq = a.transform_point(&q.center());
        let fb = NormalizedFeature::new(cq.x / cq.z, cq.y / cq.z).unwrap();
        let res = cheirality_select(&cands, &[Correspondence2D2D::new(fa, fb)]);
        assert!(matches!(res, Err(Error::NoValidPose) | Err(Error::AmbiguousCheirality { .. })));
    }

    #[test]
    fn midpoint_examples() {
        let pa = Pose::from_center(Rotation::identity(), Vec3::new(-1.0, 0.0, 0.0));
        let pb = Pose::from_center(Rotation::identity(), Vec3::new(1.0, 0.0, 0.0));
        let x = Vec3::new(0.0, 0.0, 4.0);
        let fa = project(&pa, &x).unwrap();
        let fb = project(&pb, &x).unwrap();
        assert!((midpoint_triangulate(&pa, &pb, &fa, &fb).unwrap() - x).norm() < 1e-10);

        // perturbed: compare with the closed-form common perpendicular
        let fa2 = NormalizedFeature::new(fa.x() + 1e-3, fa.y()).unwrap();
        let got = midpoint_triangulate(&pa, &pb, &fa2, &fb).unwrap();
        assert!((got - x).norm() > 1e-4);
        // both rays lie in the y = 0 plane, so they intersect: solve -1 + s·u = 1 + t·v, s = t
        let u = fa2.x();
        let v = fb.x();
        let s = 2.0 / (u - v);
        let expected = Vec3::new(-1.0 + s * u, 0.0, s);
        assert!((got - expected).norm() < 1e-10, "{got} vs {expected}");

        assert!(matches!(
            midpoint_triangulate(&pa, &pa, &fa, &fb),
            Err(Error::DegenerateGeometry(_))
        ));
    }

    #[test]
    fn end_to_end_relative_pose() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let (q, a, _, matches) = two_view(&mut rng, 60);
        let fit = estimate_relative_pose(&matches, &RansacConfig::default(), &mut rng).unwrap();
        let (r, t) = q.relative_to(&a);
        assert!(geodesic_angle(fit.rel.rotation(), &r) < 1e-6);
        assert!((fit.rel.direction() - t.normalize()).norm() < 1e-6);
        assert_eq!(fit.inlier_count(), 60);
    }
}
