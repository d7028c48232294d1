//! Chain a relative pose onto a known anchor and check it against the truth.

use mvloc::geometry::{compose_absolute, geodesic_angle, invert_relative, Pose, RelativePoseEstimate, Vec3};

fn main() -> mvloc::Result<()> {
    let anchor = Pose::look_at(Vec3::new(4.0, 0.0, 0.0), Vec3::zeros(), Vec3::z())?;
    let query = Pose::look_at(Vec3::new(0.0, 4.0, 1.0), Vec3::zeros(), Vec3::z())?;

    let rel = RelativePoseEstimate::between(&query, &anchor)?;
    let baseline = (query.center() - anchor.center()).norm();
    let chained = compose_absolute(&rel, baseline, &anchor)?;

    println!("relative rotation  {:.3} deg", rel.rotation().angle_deg());
    println!("direction T_qk     {:?}", rel.direction().as_slice());
    println!("direction T_kq     {:?}", invert_relative(&rel).direction().as_slice());
    println!(
        "chained pose error {:.2e} m, {:.2e} deg",
        (chained.center() - query.center()).norm(),
        geodesic_angle(&chained.rotation, &query.rotation)
    );

    // Without the baseline length only the direction is known; any other
    // scale slides the center along the anchor's locus ray.
    let wrong = compose_absolute(&rel, 0.5 * baseline, &anchor)?;
    println!("half-scale center  {:?}", wrong.center().as_slice());
    Ok(())
}
