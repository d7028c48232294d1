//! Acceptance run. Prints one PASS/FAIL line per criterion and exits nonzero
//! if any criterion fails.

use std::collections::BTreeMap;
use std::process::Command;
use std::time::{Duration, Instant};

use nalgebra::Vector4;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use mvloc::averaging::{
    center_average, frobenius_objective, markley_by_projection, markley_rotation_average, ray_objective,
    AnchorId, AnchorObservation, Ray,
};
use mvloc::consensus::{anchor_ransac, decoupled_center, decoupled_rotation, ConsensusConfig};
use mvloc::dataset::read_poses;
use mvloc::geometry::{
    geodesic_angle, project, NormalizedFeature, Pose, RelativePoseEstimate, Rotation, UnitQuaternion, Vec2, Vec3,
};
use mvloc::pipeline::{pose_error, read_results_csv, synthetic_dataset};
use mvloc::refine::{e1_gradient, e1_objective, triangulate_track, AnchorPoses, CorrespondenceTrack, TriangulationOptions};
use mvloc::relative::{decompose_essential, positive_depth_count, Correspondence2D2D, EssentialMatrix};
use mvloc::sim::{
    generate_scene, run_k_sweep, run_noise_study, sample_queries, simulation_pipeline, trial_rng, Method, NoiseSpec,
    SceneConfig, SimulatedQuery,
};

type Outcome = Result<String, String>;

fn gauss(rng: &mut impl Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn gauss3(rng: &mut impl Rng) -> Vec3 {
    Vec3::new(gauss(rng), gauss(rng), gauss(rng))
}

fn unit3(rng: &mut impl Rng) -> Vec3 {
    loop {
        let v = gauss3(rng);
        if v.norm() > 1e-6 {
            return v.normalize();
        }
    }
}

fn random_rotation(rng: &mut impl Rng) -> Rotation {
    let q = Vector4::new(gauss(rng), gauss(rng), gauss(rng), gauss(rng));
    UnitQuaternion::from_vector(q).unwrap().to_rotation()
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(limit: Duration, started: Instant) -> Result<(), String> {
    let t = started.elapsed();
    ensure(t < limit, || format!("took {t:.2?}, limit {limit:?}"))
}

// 1. Closed-form center optimality and exact recovery.
fn criterion_1() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst_recovery: f64 = 0.0;
    let mut worst_margin = f64::INFINITY;
    for set in 0..100 {
        let k = rng.random_range(2..=30);
        let c = Vec3::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0));
        let origins: Vec<Vec3> = (0..k)
            .map(|_| loop {
                let o = Vec3::new(
                    rng.random_range(-10.0..10.0),
                    rng.random_range(-10.0..10.0),
                    rng.random_range(-10.0..10.0),
                );
                if (o - c).norm() > 1.0 {
                    break o;
                }
            })
            .collect();

        let exact: Vec<Ray> = origins.iter().map(|o| Ray::new(*o, c - o).unwrap()).collect();
        let sol = center_average(&exact).map_err(|e| format!("set {set}: {e}"))?;
        worst_recovery = worst_recovery.max((sol.center - c).norm());

        let noisy: Vec<Ray> = origins
            .iter()
            .map(|o| Ray::new(*o, (c - o).normalize() + 0.02 * gauss3(&mut rng)).unwrap())
            .collect();
        let sol = center_average(&noisy).map_err(|e| format!("set {set}: {e}"))?;
        let f0 = ray_objective(&noisy, &sol.center);
        for _ in 0..200 {
            let f = ray_objective(&noisy, &(sol.center + 1e-3 * unit3(&mut rng)));
            worst_margin = worst_margin.min(f - f0);
        }
    }
    ensure(worst_recovery < 1e-8, || format!("zero-noise recovery error {worst_recovery:e} m"))?;
    ensure(worst_margin >= 0.0, || format!("a perturbation lowered the objective by {:e}", -worst_margin))?;
    within(Duration::from_secs(1), started)?;
    Ok(format!(
        "recovery {worst_recovery:.1e} m, smallest perturbation increase {worst_margin:.1e}, {:.2?}",
        started.elapsed()
    ))
}

// 2. Center ignores R_qk, rotation ignores T̂_qk.
fn criterion_2() -> Outcome {
    let cfg = SceneConfig {
        n_points: 8,
        n_anchors: 12,
        ..Default::default()
    };
    let same_bits = |a: &[f64], b: &[f64]| a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits());
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for swap in 0..100 {
        let scene = generate_scene(&cfg, swap).map_err(|e| e.to_string())?;
        let obs = scene
            .observations(&NoiseSpec::pose(3.0).unwrap(), &mut trial_rng(2, 1, swap))
            .map_err(|e| e.to_string())?;
        let rotation = decoupled_rotation(&obs).map_err(|e| e.to_string())?;

        // Rebuilt from the same T̂_kq on both sides, differing only in R_qk.
        let rebuild = |o: &AnchorObservation, r: Rotation| {
            AnchorObservation::from_reverse_direction(o.anchor_id.clone(), o.anchor_pose, r, o.direction_kq()).unwrap()
        };
        let kept: Vec<AnchorObservation> = obs.iter().map(|o| rebuild(o, *o.rel().rotation())).collect();
        let rot_swapped: Vec<AnchorObservation> = obs.iter().map(|o| rebuild(o, random_rotation(&mut rng))).collect();
        let center = decoupled_center(&kept).map_err(|e| e.to_string())?;
        let c = decoupled_center(&rot_swapped).map_err(|e| e.to_string())?;
        ensure(same_bits(center.as_slice(), c.as_slice()), || {
            format!("swap {swap}: center changed with R_qk")
        })?;

        let dir_swapped: Vec<AnchorObservation> = obs
            .iter()
            .map(|o| {
                let rel = RelativePoseEstimate::new(*o.rel().rotation(), unit3(&mut rng)).unwrap();
                AnchorObservation::new(o.anchor_id.clone(), o.anchor_pose, rel)
            })
            .collect();
        let r = decoupled_rotation(&dir_swapped).map_err(|e| e.to_string())?;
        ensure(same_bits(rotation.matrix().as_slice(), r.matrix().as_slice()), || {
            format!("swap {swap}: rotation changed with T_qk")
        })?;
    }
    Ok("100 rotation swaps and 100 direction swaps, outputs bit-identical".into())
}

// 3. Decoupled beats translation averaging and the gap grows with noise.
fn criterion_3() -> Outcome {
    let started = Instant::now();
    let cfg = SceneConfig {
        n_points: 8,
        n_anchors: 20,
        ..Default::default()
    };
    let sigmas = [1.0, 2.0, 5.0, 10.0];
    let grid: Vec<NoiseSpec> = sigmas.iter().map(|&s| NoiseSpec::pose(s).unwrap()).collect();
    let study = run_noise_study(&cfg, &grid, 500, 0).map_err(|e| e.to_string())?;
    let mut gaps = Vec::new();
    let mut detail = Vec::new();
    for (i, s) in sigmas.iter().enumerate() {
        let d = study.row(i, Method::Decoupled).median_position_m;
        let g = study.row(i, Method::Govindu).median_position_m;
        detail.push(format!("{s}°: {d:.4}/{g:.4}"));
        ensure(d <= g, || format!("at {s}° decoupled {d:.4} m > translation averaging {g:.4} m"))?;
        gaps.push(g - d);
    }
    ensure(gaps[3] > gaps[0], || format!("gap at 10° {:.4} not above gap at 1° {:.4}", gaps[3], gaps[0]))?;
    within(Duration::from_secs(120), started)?;
    Ok(format!(
        "decoupled/translation medians {}, gap {:.4} -> {:.4} m, {:.2?}",
        detail.join(", "),
        gaps[0],
        gaps[3],
        started.elapsed()
    ))
}

// 4. Eigenvector and projection forms agree; nothing beats them.
fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    let mut instances = Vec::new();
    for i in 0..1000 {
        let base = random_rotation(&mut rng);
        let k = rng.random_range(1..=20);
        let spread = rng.random_range(0.01..0.6);
        let est: Vec<Rotation> = (0..k)
            .map(|_| &base * &Rotation::from_scaled_axis(spread * gauss3(&mut rng)))
            .collect();
        let a = markley_rotation_average(&est).map_err(|e| format!("instance {i}: {e}"))?;
        let b = markley_by_projection(&est).map_err(|e| format!("instance {i}: {e}"))?;
        worst = worst.max(geodesic_angle(&a, &b).to_radians());
        if i < 20 {
            instances.push((est, a));
        }
    }
    ensure(worst < 1e-8, || format!("eigenvector and projection differ by {worst:e} rad"))?;
    for (i, (est, best)) in instances.iter().enumerate() {
        let f = frobenius_objective(best, est);
        for _ in 0..1000 {
            let r = random_rotation(&mut rng);
            let g = frobenius_objective(&r, est);
            ensure(g >= f - 1e-12, || format!("instance {i}: random rotation scores {g} < {f}"))?;
        }
    }
    Ok(format!("max disagreement {worst:.1e} rad over 1000 instances; 20x1000 random rotations never better"))
}

fn direct_e1(track: &CorrespondenceTrack, poses: &AnchorPoses, reference: &AnchorId, g: Vec2, rho: f64) -> f64 {
    let x = poses[reference].inverse_transform_point(&Vec3::new(g.x * rho, g.y * rho, rho));
    track
        .anchor_obs()
        .iter()
        .map(|(id, f)| {
            let p = poses[id].transform_point(&x);
            (f.vector() - Vec2::new(p.x / p.z, p.y / p.z)).norm_squared()
        })
        .sum()
}

fn nelder_mead(f: impl Fn(&[f64; 3]) -> f64, start: [f64; 3], scale: [f64; 3]) -> ([f64; 3], f64) {
    let mut simplex: Vec<([f64; 3], f64)> = (0..4)
        .map(|i| {
            let mut p = start;
            if i > 0 {
                p[i - 1] += scale[i - 1];
            }
            (p, f(&p))
        })
        .collect();
    for _ in 0..20000 {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        if simplex[3].1 - simplex[0].1 <= 1e-22 {
            break;
        }
        let mut centroid = [0.0; 3];
        for (p, _) in &simplex[..3] {
            for d in 0..3 {
                centroid[d] += p[d] / 3.0;
            }
        }
        let along = |t: f64| {
            let mut p = [0.0; 3];
            for d in 0..3 {
                p[d] = centroid[d] + t * (simplex[3].0[d] - centroid[d]);
            }
            p
        };
        let r = along(-1.0);
        let fr = f(&r);
        if fr < simplex[0].1 {
            let e = along(-2.0);
            let fe = f(&e);
            simplex[3] = if fe < fr { (e, fe) } else { (r, fr) };
        } else if fr < simplex[2].1 {
            simplex[3] = (r, fr);
        } else {
            let c = if fr < simplex[3].1 { along(-0.5) } else { along(0.5) };
            let fc = f(&c);
            if fc < simplex[3].1.min(fr) {
                simplex[3] = (c, fc);
            } else {
                let best = simplex[0].0;
                for s in simplex.iter_mut().skip(1) {
                    for d in 0..3 {
                        s.0[d] = best[d] + 0.5 * (s.0[d] - best[d]);
                    }
                    s.1 = f(&s.0);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    simplex[0]
}

/// Exhaustive grid over `(u, v, ρ)`, repeated zooms around the best cell,
/// then a simplex polish.
fn grid_oracle(f: &dyn Fn(&[f64; 3]) -> f64, center: [f64; 3], half: [f64; 3]) -> f64 {
    let mut best = (center, f(&center));
    let mut half = half;
    let mut n = 40;
    loop {
        let c = best.0;
        let step: Vec<f64> = half.iter().map(|h| 2.0 * h / n as f64).collect();
        for i in 0..=n {
            for j in 0..=n {
                for k in 0..=n {
                    let p = [
                        c[0] - half[0] + i as f64 * step[0],
                        c[1] - half[1] + j as f64 * step[1],
                        c[2] - half[2] + k as f64 * step[2],
                    ];
                    if p[2] <= 0.0 {
                        continue;
                    }
                    let v = f(&p);
                    if v < best.1 {
                        best = (p, v);
                    }
                }
            }
        }
        if step[0] < 1e-5 * c[0].abs().max(1e-3) && step[2] < 1e-4 * c[2] {
            break;
        }
        for d in 0..3 {
            half[d] = 2.0 * step[d];
        }
        n = 10;
    }
    let scale = [half[0], half[1], half[2]];
    nelder_mead(f, best.0, scale).1.min(best.1)
}

fn noisy_feature(f: NormalizedFeature, sigma: f64, rng: &mut impl Rng) -> NormalizedFeature {
    NormalizedFeature::new(f.x() + sigma * gauss(rng), f.y() + sigma * gauss(rng)).unwrap()
}

fn two_view_track(seed: u64, point: usize, sigma: f64) -> (CorrespondenceTrack, AnchorPoses, Vec3) {
    let scene = generate_scene(
        &SceneConfig {
            n_points: 20,
            n_anchors: 2,
            ..Default::default()
        },
        seed,
    )
    .unwrap();
    let mut rng = trial_rng(seed, 5, point as u64);
    let x = scene.points[point];
    let obs = scene
        .anchor_ids
        .iter()
        .zip(&scene.anchor_poses)
        .map(|(id, p)| (id.clone(), noisy_feature(project(p, &x).unwrap(), sigma, &mut rng)))
        .collect();
    let track = CorrespondenceTrack::new(0, project(&scene.query_pose, &x).unwrap(), obs).unwrap();
    (track, scene.anchor_pose_map(), x)
}

// 5. Triangulation optimum against a grid oracle; gradient against differences.
fn criterion_5() -> Outcome {
    let mut worst_gap: f64 = 0.0;
    for fixture in 0..20u64 {
        let (track, poses, x) = two_view_track(100 + fixture, (fixture % 20) as usize, 1e-3);
        let lp = triangulate_track(&track, &poses, None, &TriangulationOptions::default())
            .map_err(|e| format!("fixture {fixture}: {e}"))?;
        let reference = lp.reference_view.clone();
        let lib = direct_e1(&track, &poses, &reference, lp.ref_feature, lp.ref_depth);
        let depth = poses[&reference].transform_point(&x).z;
        let g0 = track.anchor_obs().iter().find(|(id, _)| *id == reference).unwrap().1.vector();
        let f = |p: &[f64; 3]| direct_e1(&track, &poses, &reference, Vec2::new(p[0], p[1]), p[2]);
        let oracle = grid_oracle(&f, [g0.x, g0.y, depth], [0.01, 0.01, 0.2 * depth]);
        let gap = (lib - oracle).abs();
        worst_gap = worst_gap.max(gap);
        ensure(gap <= 1e-10, || format!("fixture {fixture}: library {lib:e} vs oracle {oracle:e}"))?;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst_rel: f64 = 0.0;
    for config in 0..100u64 {
        let (track, poses, x) = two_view_track(200 + config, rng.random_range(0..20), 1e-3);
        let ids: Vec<AnchorId> = poses.keys().cloned().collect();
        let reference = &ids[rng.random_range(0..ids.len())];
        let cam = poses[reference].transform_point(&x);
        let g = Vec2::new(cam.x / cam.z + 0.02 * gauss(&mut rng), cam.y / cam.z + 0.02 * gauss(&mut rng));
        let rho = cam.z * rng.random_range(0.7..1.3);
        let analytic = e1_gradient(&track, &poses, reference, g, rho).map_err(|e| e.to_string())?;
        let e = |g: Vec2, r: f64| e1_objective(&track, &poses, reference, g, r).unwrap();
        let (hx, hr) = (1e-6, 1e-6 * rho);
        let fd = Vec3::new(
            (e(g + Vec2::new(hx, 0.0), rho) - e(g - Vec2::new(hx, 0.0), rho)) / (2.0 * hx),
            (e(g + Vec2::new(0.0, hx), rho) - e(g - Vec2::new(0.0, hx), rho)) / (2.0 * hx),
            (e(g, rho + hr) - e(g, rho - hr)) / (2.0 * hr),
        );
        let rel = (analytic - fd).norm() / fd.norm();
        worst_rel = worst_rel.max(rel);
        ensure(rel <= 1e-5, || format!("config {config}: gradient relative error {rel:e}"))?;
    }
    Ok(format!(
        "largest objective gap {worst_gap:.1e} on 20 fixtures; largest gradient error {worst_rel:.1e} on 100 configs"
    ))
}

// 6. Refinement improves the stage-1 pose and never raises its energy.
fn criterion_6() -> Outcome {
    let cfg = SceneConfig {
        n_points: 50,
        n_anchors: 8,
        ..Default::default()
    };
    let pipeline = simulation_pipeline();
    let noise = NoiseSpec::features(1e-3).unwrap();
    let (mut better, mut refined, mut energy_ok, mut failed) = (0, 0, 0, 0);
    for t in 0..200u64 {
        let scene_seed: u64 = trial_rng(6, 0, t).random();
        let outcome = generate_scene(&cfg, scene_seed).and_then(|scene| {
            let sim = SimulatedQuery::new(&scene, 8, &noise, &pipeline, &mut trial_rng(6, 1, t))?;
            Ok((sim.localize(8, &pipeline, t)?, scene.query_pose))
        });
        let Ok((loc, truth)) = outcome else {
            failed += 1;
            continue;
        };
        let Ok(r) = &loc.refinement else {
            failed += 1;
            continue;
        };
        refined += 1;
        if r.e2_final <= r.e2_initial {
            energy_ok += 1;
        }
        if pose_error(&r.pose, &truth).position_m < pose_error(&loc.stage1_pose, &truth).position_m {
            better += 1;
        }
    }
    ensure(better >= 180, || format!("refined better in {better}/200 (failures {failed})"))?;
    ensure(energy_ok == refined, || format!("energy rose in {} of {refined} refinements", refined - energy_ok))?;
    Ok(format!(
        "refined better in {better}/200, energy non-increasing in {energy_ok}/{refined}, {failed} trials without refinement"
    ))
}

// 7. Exactly one decomposition candidate has all points in front.
fn criterion_7() -> Outcome {
    let cfg = SceneConfig {
        n_points: 30,
        n_anchors: 2,
        ..Default::default()
    };
    for s in 0..200u64 {
        let scene = generate_scene(&cfg, 700 + s).map_err(|e| e.to_string())?;
        let anchor = scene.anchor_poses[(s % 2) as usize];
        let truth = RelativePoseEstimate::between(&scene.query_pose, &anchor).map_err(|e| e.to_string())?;
        let matches: Vec<Correspondence2D2D> = scene
            .points
            .iter()
            .map(|x| Correspondence2D2D::new(project(&scene.query_pose, x).unwrap(), project(&anchor, x).unwrap()))
            .collect();
        let e = EssentialMatrix::from_pose(truth.rotation(), &truth.direction()).map_err(|e| e.to_string())?;
        let candidates = decompose_essential(&e).map_err(|e| e.to_string())?;
        let counts: Vec<usize> = candidates.iter().map(|(r, t)| positive_depth_count(r, t, &matches)).collect();
        let top = *counts.iter().max().unwrap();
        let winners: Vec<usize> = (0..4).filter(|&i| counts[i] == top).collect();
        ensure(winners.len() == 1, || format!("scene {s}: tied vote {counts:?}"))?;
        let (r, t) = &candidates[winners[0]];
        let rot_err = (r.matrix() - truth.rotation().matrix()).norm();
        let dir_err = (t.normalize() - truth.direction()).norm();
        ensure(rot_err < 1e-6 && dir_err < 1e-6, || {
            format!("scene {s}: winner off by {rot_err:e} (rotation), {dir_err:e} (direction)")
        })?;
    }
    Ok("200 scenes, unique winner matching ground truth in every one".into())
}

/// Exhaustive pair search written from the definition: the hypothesis of a
/// pair is the midpoint of the rays' common perpendicular and the geodesic
/// midpoint of the two rotation estimates.
fn brute_force_inliers(obs: &[AnchorObservation], theta_ray: f64, theta_rot: f64) -> Vec<usize> {
    let rays: Vec<(Vec3, Vec3)> = obs
        .iter()
        .map(|o| {
            let d = o.anchor_pose.rotation.transpose().apply(&o.direction_kq()).normalize();
            (o.anchor_pose.center(), d)
        })
        .collect();
    let rots: Vec<Rotation> = obs.iter().map(|o| o.rotation_estimate()).collect();
    let mut best: Vec<usize> = Vec::new();
    for i in 0..obs.len() {
        for j in i + 1..obs.len() {
            let ((o1, d1), (o2, d2)) = (rays[i], rays[j]);
            let w = o1 - o2;
            let (b, d, e) = (d1.dot(&d2), d1.dot(&w), d2.dot(&w));
            let den = 1.0 - b * b;
            if den < 1e-12 {
                continue;
            }
            let s = (b * e - d) / den;
            let t = (e - b * d) / den;
            let c = 0.5 * ((o1 + s * d1) + (o2 + t * d2));
            let half = Rotation::from_scaled_axis(0.5 * (rots[i].transpose() * rots[j]).log());
            let r = &rots[i] * &half;
            let members: Vec<usize> = (0..obs.len())
                .filter(|&m| {
                    let (o, d) = rays[m];
                    let v = c - o;
                    let ang = d.cross(&v).norm().atan2(d.dot(&v)).to_degrees();
                    ang <= theta_ray && geodesic_angle(&r, &rots[m]) <= theta_rot
                })
                .collect();
            if members.contains(&i) && members.contains(&j) && members.len() > best.len() {
                best = members;
            }
        }
    }
    best
}

// 8. Planted outlier anchors are rejected exactly.
fn criterion_8() -> Outcome {
    let cfg = SceneConfig {
        n_points: 8,
        n_anchors: 20,
        ..Default::default()
    };
    let consensus = ConsensusConfig::default();
    for inst in 0..100u64 {
        let scene = generate_scene(&cfg, 800 + inst).map_err(|e| e.to_string())?;
        let mut rng = trial_rng(8, 1, inst);
        let mut obs = scene
            .observations(&NoiseSpec::pose(0.5).unwrap(), &mut rng)
            .map_err(|e| e.to_string())?;
        let mut idx: Vec<usize> = (0..obs.len()).collect();
        for i in 0..5 {
            let j = rng.random_range(i..idx.len());
            idx.swap(i, j);
        }
        let outliers: Vec<usize> = idx[..5].to_vec();
        for &o in &outliers {
            let angle = rng.random_range(30.0..180.0f64).to_radians();
            let wrong = Rotation::from_scaled_axis(angle * unit3(&mut rng));
            let rot = &wrong * obs[o].rel().rotation();
            let rel = RelativePoseEstimate::new(rot, unit3(&mut rng)).unwrap();
            obs[o] = AnchorObservation::new(obs[o].anchor_id.clone(), obs[o].anchor_pose, rel);
        }
        let planted: Vec<usize> = (0..obs.len()).filter(|i| !outliers.contains(i)).collect();
        let got = anchor_ransac(&obs, &consensus).map_err(|e| format!("instance {inst}: {e}"))?;
        let brute = brute_force_inliers(&obs, consensus.theta_ray_deg, consensus.theta_rot_deg);
        ensure(got.inlier_indices == planted, || {
            format!("instance {inst}: recovered {:?}, planted {planted:?}", got.inlier_indices)
        })?;
        ensure(brute == planted, || format!("instance {inst}: brute force found {brute:?}"))?;
    }
    Ok("100 instances, 15/15 inliers recovered, matches brute force".into())
}

// 9. More neighbors, lower error.
fn criterion_9() -> Outcome {
    let started = Instant::now();
    let cfg = SceneConfig {
        n_points: 200,
        n_anchors: 50,
        visibility: 0.3,
        ..Default::default()
    };
    let sweep = run_k_sweep(&cfg, &[2, 10, 50], &NoiseSpec::features(1e-3).unwrap(), 300, 0)
        .map_err(|e| e.to_string())?;
    let m: Vec<f64> = sweep.rows.iter().map(|r| r.median_position_m).collect();
    let failed: Vec<usize> = sweep.rows.iter().map(|r| r.failed).collect();
    ensure(m[2] < m[1] && m[1] < m[0], || format!("medians K=2,10,50: {m:?}"))?;
    within(Duration::from_secs(300), started)?;
    Ok(format!(
        "medians K=2 {:.4} m, K=10 {:.4} m, K=50 {:.4} m (failed, counted as infinite: {failed:?}), {:.2?}",
        m[0],
        m[1],
        m[2],
        started.elapsed()
    ))
}

// 10. Files in, CLI run twice, exact poses and identical outputs.
fn criterion_10() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg = SceneConfig {
        n_points: 80,
        n_anchors: 10,
        visibility: 0.8,
        ..Default::default()
    };
    let scene = generate_scene(&cfg, 10).map_err(|e| e.to_string())?;
    let queries: Vec<(String, Pose)> = sample_queries(&scene, &cfg, 4, 10)
        .map_err(|e| e.to_string())?
        .into_iter()
        .enumerate()
        .map(|(i, p)| (format!("q{i:03}"), p))
        .collect();
    let manifest = synthetic_dataset(&scene, &queries, 0.0, 10)
        .and_then(|d| d.save(&dir.path().join("data")))
        .map_err(|e| e.to_string())?;

    let run = |out: &str| -> Result<(Vec<u8>, Vec<u8>), String> {
        let out = dir.path().join(out);
        let status = Command::new(env!("CARGO_BIN_EXE_mvloc"))
            .args(["localize", "--seed", "42", "--manifest"])
            .arg(&manifest)
            .arg("--output")
            .arg(&out)
            .output()
            .map_err(|e| e.to_string())?;
        ensure(status.status.success(), || {
            format!("cli exited with {}: {}", status.status, String::from_utf8_lossy(&status.stderr))
        })?;
        let read = |f: &str| std::fs::read(out.join(f)).map_err(|e| e.to_string());
        Ok((read("report.json")?, read("results.csv")?))
    };
    let first = run("run1")?;
    let second = run("run2")?;
    ensure(first == second, || "outputs differ between runs".into())?;

    let results = read_results_csv(&dir.path().join("run1/results.csv")).map_err(|e| e.to_string())?;
    let truth: BTreeMap<String, Pose> = read_poses(&dir.path().join("data/ground_truth.txt"))
        .map_err(|e| e.to_string())?
        .into_iter()
        .map(|(k, v)| (k, v.to_pose().unwrap()))
        .collect();
    ensure(results.len() == queries.len(), || format!("{} of {} queries localized", results.len(), queries.len()))?;
    let (mut wp, mut wr): (f64, f64) = (0.0, 0.0);
    for r in &results {
        let p = r.refined_pose.ok_or_else(|| format!("{} was not refined", r.query_id))?;
        let e = pose_error(&p, &truth[&r.query_id]);
        wp = wp.max(e.position_m);
        wr = wr.max(e.rotation_deg);
    }
    ensure(wp < 1e-6 && wr < 1e-5, || format!("worst refined error {wp:e} m, {wr:e} deg"))?;
    Ok(format!("{} queries, worst error {wp:.1e} m / {wr:.1e} deg, outputs byte-identical", results.len()))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("center optimality", criterion_1),
        ("decoupling invariants", criterion_2),
        ("noise ordering", criterion_3),
        ("rotation mean equivalence", criterion_4),
        ("triangulation oracle", criterion_5),
        ("refinement improvement", criterion_6),
        ("cheirality", criterion_7),
        ("anchor outlier rejection", criterion_8),
        ("neighbor-count trend", criterion_9),
        ("file round-trip", criterion_10),
    ];
    let mut failures = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        match f() {
            Ok(msg) => println!("criterion {:>2} PASS {name}: {msg}", i + 1),
            Err(msg) => {
                failures += 1;
                println!("criterion {:>2} FAIL {name}: {msg}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failures} failed", criteria.len() - failures);
    if failures > 0 {
        std::process::exit(1);
    }
}
