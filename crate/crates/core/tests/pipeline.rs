use std::time::Instant;

use geoflat::bundle::{GroupElement, GroupKind};
use geoflat::flatmap::DT_FD;
use geoflat::planner::{min_snap, Boundary, FlatTrajectory};
use geoflat::sim::roundtrip_verify;
use geoflat::systems::{Atlas, Manipulator, Quadrotor, Rocket};
use geoflat::MechanicalSystem;

fn el(kind: GroupKind, v: &[f64]) -> GroupElement {
    GroupElement::from_slice(kind, v).unwrap()
}

fn run(sys: &dyn MechanicalSystem, traj: &FlatTrajectory) -> geoflat::sim::RoundTrip {
    let atlas = Atlas::of(sys);
    let start = Instant::now();
    let rt = roundtrip_verify(sys, &atlas, traj, 1e-3, DT_FD).unwrap();
    println!("{}: {:?} in {:?}", sys.name(), rt.report, start.elapsed());
    rt
}

#[test]
fn rocket_lateral_translation() {
    let traj = min_snap(GroupKind::R2, &[0.0, 2.0], &[el(GroupKind::R2, &[0.0, 0.0]), el(GroupKind::R2, &[2.0, 0.0])], &Boundary::Rest).unwrap();
    let rt = run(&Rocket::default(), &traj);
    assert!(rt.report.max_flat_error < 1e-4);
}

#[test]
fn manipulator_three_waypoints() {
    let k = GroupKind::SE2;
    let traj = min_snap(k, &[0.0, 1.5, 3.0], &[el(k, &[0.0, 0.0, 0.0]), el(k, &[1.0, 0.5, 0.3]), el(k, &[2.0, 0.0, -0.2])], &Boundary::Rest).unwrap();
    let rt = run(&Manipulator::default(), &traj);
    assert!(rt.report.max_flat_error < 1e-4);
    assert!(rt.report.max_residual < 1e-6);
    assert!(rt.report.switch_events.is_empty());
}

#[test]
fn quadrotor_translation_and_yaw() {
    let k = GroupKind::R3xS1;
    let traj = min_snap(k, &[0.0, 2.0], &[el(k, &[0.0, 0.0, 0.0, 0.0]), el(k, &[1.0, -1.0, 0.5, 1.0])], &Boundary::Rest).unwrap();
    let rt = run(&Quadrotor::default(), &traj);
    assert!(rt.report.max_flat_error < 1e-4);
}

#[test]
fn quadrotor_equator_crossing() {
    let k = GroupKind::R3xS1;
    let traj = min_snap(k, &[0.0, 2.0], &[el(k, &[0.0, 0.0, 0.0, 0.0]), el(k, &[20.0, 0.0, -30.0, 0.0])], &Boundary::Rest).unwrap();
    let rt = run(&Quadrotor::default(), &traj);
    assert!(!rt.report.switch_events.is_empty());
    for e in &rt.report.switch_events {
        assert!(e.continuity_error < 1e-6, "{e:?}");
    }
    assert!(rt.report.max_flat_error < 1e-4);
}

#[test]
fn rocket_error_shrinks_with_step() {
    let k = GroupKind::R2;
    let traj = min_snap(k, &[0.0, 1.0], &[el(k, &[0.0, 0.0]), el(k, &[1.0, 0.5])], &Boundary::Rest).unwrap();
    let sys = Rocket::default();
    let atlas = Atlas::of(&sys);
    let errs: Vec<f64> = [8e-3, 4e-3, 2e-3]
        .iter()
        .map(|&dt| roundtrip_verify(&sys, &atlas, &traj, dt, DT_FD).unwrap().report.max_flat_error)
        .collect();
    println!("{errs:?}");
    assert!(errs[0] > errs[1] && errs[1] > errs[2], "{errs:?}");
}
