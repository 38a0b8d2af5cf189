//! RK4 integration of the forced geodesic equation and the flat round trip.

use std::io::Write;

use nalgebra::DVector;
use serde::Serialize;

use crate::bundle::{group_rates, velocity_split, GroupElement, ShapePoint, Trivialization};
use crate::error::{Error, Result};
use crate::flatmap::{flat_output, reconstruct, reconstruct_full, FlatPoint, ReconstructedSample, DT_FD};
use crate::geometry::{forced_acceleration, ConfigPoint};
use crate::linalg::D1_5;
use crate::model::MechanicalSystem;
use crate::planner::FlatTrajectory;
use crate::systems::Atlas;

/// Sampled states and inputs.
#[derive(Debug, Clone)]
pub struct StateTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<(ConfigPoint, DVector<f64>)>,
    pub inputs: Vec<DVector<f64>>,
}

impl StateTrajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// One RK4 step in the local chart centered at `q`.
pub fn rk4_step<F>(sys: &dyn MechanicalSystem, q: &ConfigPoint, v: &DVector<f64>, t: f64, dt: f64, input: &F) -> Result<(ConfigPoint, DVector<f64>)>
where
    F: Fn(f64) -> Result<DVector<f64>>,
{
    let n = v.len();
    let rhs = |z: &DVector<f64>, vel: &DVector<f64>, tt: f64| -> Result<(DVector<f64>, DVector<f64>)> {
        let p = sys.local_point(q, z);
        let f = sys.control_codistribution(&p) * input(tt)?;
        Ok((sys.local_velocity(q, z, vel), forced_acceleration(sys, &p, vel, &f)?))
    };
    let z0 = DVector::zeros(n);
    let (k1z, k1v) = rhs(&z0, v, t)?;
    let (k2z, k2v) = rhs(&(&k1z * (dt / 2.0)), &(v + &k1v * (dt / 2.0)), t + dt / 2.0)?;
    let (k3z, k3v) = rhs(&(&k2z * (dt / 2.0)), &(v + &k2v * (dt / 2.0)), t + dt / 2.0)?;
    let (k4z, k4v) = rhs(&(&k3z * dt), &(v + &k3v * dt), t + dt)?;
    let z = (k1z + k2z * 2.0 + k3z * 2.0 + k4z) * (dt / 6.0);
    let vn = v + (k1v + k2v * 2.0 + k3v * 2.0 + k4v) * (dt / 6.0);
    Ok((sys.local_point(q, &z), vn))
}

/// Integrates from `(q0, q̇0)` over `[t0, t0 + duration]` with input
/// coefficients `input(t)` on the columns of `F`.
pub fn integrate<F>(sys: &dyn MechanicalSystem, q0: &ConfigPoint, qdot0: &DVector<f64>, input: F, t0: f64, dt: f64, duration: f64) -> Result<StateTrajectory>
where
    F: Fn(f64) -> Result<DVector<f64>>,
{
    if !(dt > 0.0) || !(duration >= dt) {
        return Err(Error::InvalidParameter { name: "dt".into(), value: dt });
    }
    let steps = (duration / dt).round() as usize;
    let mut times = Vec::with_capacity(steps + 1);
    let mut states = Vec::with_capacity(steps + 1);
    let mut inputs = Vec::with_capacity(steps + 1);
    let (mut q, mut v) = (q0.clone(), qdot0.clone());
    for k in 0..=steps {
        let t = t0 + k as f64 * dt;
        times.push(t);
        inputs.push(input(t)?);
        states.push((q.clone(), v.clone()));
        if k < steps {
            let (qn, vn) = rk4_step(sys, &q, &v, t, dt, &input)?;
            q = qn;
            v = vn;
        }
    }
    Ok(StateTrajectory { times, states, inputs })
}

/// A change of active chart along a trajectory.
#[derive(Debug, Clone, Serialize)]
pub struct SwitchEvent {
    pub t: f64,
    pub from: usize,
    pub to: usize,
    /// Distance between the simulated configuration and its reconstruction
    /// through the new chart's flat output.
    pub continuity_error: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RoundTripReport {
    pub system: String,
    pub dt: f64,
    pub dt_fd: f64,
    pub steps: usize,
    pub max_flat_error: f64,
    pub max_residual: f64,
    pub switch_events: Vec<SwitchEvent>,
}

/// Full round-trip output: report plus the time series behind it.
#[derive(Debug, Clone)]
pub struct RoundTrip {
    pub report: RoundTripReport,
    pub states: StateTrajectory,
    pub flat_errors: Vec<f64>,
    /// Active atlas chart at each sample.
    pub charts: Vec<usize>,
}

/// Reconstructs states and inputs along `traj` at spacing `dt`, warm-starting
/// each shape solve from the previous sample.
pub fn reconstruct_series(sys: &dyn MechanicalSystem, triv: &Trivialization, traj: &FlatTrajectory, dt: f64, dt_fd: f64) -> Result<Vec<ReconstructedSample>> {
    let n = ((traj.end() - traj.start()) / dt).round() as usize;
    let mut out: Vec<ReconstructedSample> = Vec::with_capacity(n + 1);
    for k in 0..=n {
        let t = (traj.start() + k as f64 * dt).min(traj.end());
        let y = traj.eval(t, 4)?;
        let guess = out.last().map(|r| r.shape.clone());
        out.push(reconstruct_full(sys, triv, t, &y, dt_fd, guess.as_ref())?);
    }
    Ok(out)
}

/// Tracks the active chart of `atlas` along a configuration series.
pub fn track_charts(sys: &dyn MechanicalSystem, atlas: &Atlas, start: usize, qs: &[&ConfigPoint]) -> Vec<usize> {
    let mut active = start;
    qs.iter()
        .map(|q| {
            active = atlas.switch_rule(active, &sys.project(q));
            active
        })
        .collect()
}

/// Flat output through `triv` with its first two derivatives, estimated
/// from the sampled states around index `i`.
fn flat_jet(sys: &dyn MechanicalSystem, triv: &Trivialization, states: &StateTrajectory, i: usize, dt: f64) -> Result<FlatPoint> {
    let gdot = |j: usize| -> Result<DVector<f64>> {
        let (q, v) = &states.states[j];
        let y = flat_output(sys, triv, q)?;
        let (xi, _) = velocity_split(sys, triv, q, v)?;
        Ok(group_rates(&y, &xi, &crate::bundle::LieAlgebraVec::zero(y.kind)).0)
    };
    let (q, _) = &states.states[i];
    let y = flat_output(sys, triv, q)?;
    let n = states.len();
    let gdd = if i >= 2 && i + 2 < n {
        let mut acc = DVector::zeros(y.kind.dim());
        for (k, w) in D1_5.iter().enumerate() {
            if *w != 0.0 {
                acc += gdot(i + k - 2)? * *w;
            }
        }
        acc / dt
    } else if i >= 1 && i + 1 < n {
        (gdot(i + 1)? - gdot(i - 1)?) / (2.0 * dt)
    } else {
        DVector::zeros(y.kind.dim())
    };
    Ok(FlatPoint { derivs: vec![gdot(i)?, gdd], value: y })
}

/// Reconstructs the state through `triv` at sample `i` of `states` and
/// returns its largest coordinate gap to the sampled state (configuration
/// and velocity). Needs two samples of margin on each side for the velocity.
pub fn chart_continuity(sys: &dyn MechanicalSystem, triv: &Trivialization, states: &StateTrajectory, i: usize, dt: f64) -> Result<f64> {
    let (q, v) = &states.states[i];
    let mut guess: ShapePoint = sys.project(q);
    let n = states.len();
    let window: Vec<usize> = if i >= 4 && i + 4 < n { (i - 2..=i + 2).collect() } else { vec![i] };
    let mut offsets = Vec::with_capacity(window.len());
    for j in &window {
        let jet = flat_jet(sys, triv, states, *j, dt)?;
        let (qr, s) = reconstruct(sys, triv, &jet, Some(&guess))?;
        guess = s;
        offsets.push(sys.local_coords(q, &qr));
    }
    if offsets.len() == 1 {
        return Ok(offsets[0].amax());
    }
    let mut rate = DVector::zeros(v.len());
    for (w, z) in D1_5.iter().zip(&offsets) {
        rate += z * (*w / dt);
    }
    let zero = DVector::zeros(v.len());
    let dv = rate - sys.local_velocity(q, &zero, v);
    Ok(offsets[2].amax().max(dv.amax()))
}

/// Continuity of the reconstructed state across a switch from `from` to
/// `to` at time `t`.
///
/// The state reconstructed through `from` is flowed a few steps of `dt_fd`
/// each way under its own (frozen) input, which gives an exact system
/// trajectory to re-derive through `to`.
pub fn switch_continuity(
    sys: &dyn MechanicalSystem,
    from: &Trivialization,
    to: &Trivialization,
    traj: &FlatTrajectory,
    t: f64,
    dt_fd: f64,
    guess: Option<&ShapePoint>,
) -> Result<f64> {
    let r = reconstruct_full(sys, from, t, &traj.eval(t, 4)?, dt_fd, guess)?;
    let u = r.force_coeffs.clone();
    let input = |_: f64| -> Result<DVector<f64>> { Ok(u.clone()) };
    let mut fwd = vec![(r.q.clone(), r.qdot.comps.clone())];
    let mut bwd = Vec::new();
    for (dir, out) in [(1.0, &mut fwd), (-1.0, &mut bwd)] {
        let (mut q, mut v) = (r.q.clone(), r.qdot.comps.clone());
        for _ in 0..4 {
            (q, v) = rk4_step(sys, &q, &v, t, dir * dt_fd, &input)?;
            out.push((q.clone(), v.clone()));
        }
    }
    bwd.reverse();
    let states: Vec<_> = bwd.into_iter().chain(fwd).collect();
    let window = StateTrajectory {
        times: (0..states.len()).map(|k| t + (k as f64 - 4.0) * dt_fd).collect(),
        inputs: vec![u.clone(); states.len()],
        states,
    };
    chart_continuity(sys, to, &window, 4, dt_fd)
}

/// Closes the flatness loop: reconstruct inputs from `traj`, simulate, and
/// compare the simulated flat output with `traj`.
pub fn roundtrip_verify(sys: &dyn MechanicalSystem, atlas: &Atlas, traj: &FlatTrajectory, dt: f64, dt_fd: f64) -> Result<RoundTrip> {
    let triv = atlas
        .trivializations
        .get(traj.chart)
        .ok_or_else(|| Error::Model(format!("trajectory chart {} not in atlas", traj.chart)))?;
    if traj.group_kind != sys.group_kind() {
        return Err(Error::GroupMismatch { expected: format!("{:?}", sys.group_kind()), found: format!("{:?}", traj.group_kind) });
    }
    // Inputs are needed at half steps for RK4.
    let half = reconstruct_series(sys, triv, traj, dt / 2.0, dt_fd)?;
    let max_residual = half.iter().map(|r| r.residual).fold(0.0, f64::max);
    let t0 = traj.start();
    let lookup = |t: f64| -> Result<DVector<f64>> {
        let k = ((t - t0) / (dt / 2.0)).round() as usize;
        half.get(k.min(half.len() - 1)).map(|r| r.force_coeffs.clone()).ok_or(Error::OutOfRange { t, start: t0, end: traj.end() })
    };
    let first = &half[0];
    let states = integrate(sys, &first.q, &first.qdot.comps, lookup, t0, dt, traj.end() - t0)?;

    let mut flat_errors = Vec::with_capacity(states.len());
    for (t, (q, _)) in states.times.iter().zip(&states.states) {
        let y = flat_output(sys, triv, q)?;
        let r = traj.eval(t.min(traj.end()), 0)?;
        flat_errors.push(y.distance(&r.value));
    }
    // Charts follow the reconstructed path; the continuity check runs on it
    // too so that integration drift does not leak into the comparison.
    let recon = StateTrajectory {
        times: half.iter().map(|r| r.t).collect(),
        states: half.iter().map(|r| (r.q.clone(), r.qdot.comps.clone())).collect(),
        inputs: half.iter().map(|r| r.force_coeffs.clone()).collect(),
    };
    let qs: Vec<&ConfigPoint> = recon.states.iter().map(|(q, _)| q).collect();
    let half_charts = track_charts(sys, atlas, traj.chart, &qs);
    let mut switch_events = Vec::new();
    let mut prev = traj.chart;
    for (i, c) in half_charts.iter().enumerate() {
        if *c != prev {
            let err = switch_continuity(sys, triv, &atlas.trivializations[*c], traj, half[i].t, dt_fd, Some(&half[i].shape))?;
            switch_events.push(SwitchEvent { t: half[i].t, from: prev, to: *c, continuity_error: err });
            prev = *c;
        }
    }
    let charts: Vec<usize> = (0..states.len()).map(|k| half_charts[(2 * k).min(half_charts.len() - 1)]).collect();
    let report = RoundTripReport {
        system: sys.name().to_string(),
        dt,
        dt_fd,
        steps: states.len().saturating_sub(1),
        max_flat_error: flat_errors.iter().cloned().fold(0.0, f64::max),
        max_residual,
        switch_events,
    };
    Ok(RoundTrip { report, states, flat_errors, charts })
}

/// Round trip with the default differentiation step.
pub fn roundtrip_default(sys: &dyn MechanicalSystem, atlas: &Atlas, traj: &FlatTrajectory, dt: f64) -> Result<RoundTrip> {
    roundtrip_verify(sys, atlas, traj, dt, DT_FD)
}

/// Writes `t, q…, qdot…, force…, flat_error` rows.
pub fn write_csv<W: Write>(mut w: W, rt: &RoundTrip) -> Result<()> {
    let st = &rt.states;
    let Some((q0, v0)) = st.states.first() else { return Ok(()) };
    let mut header = vec!["t".to_string()];
    header.extend((0..q0.coords.len()).map(|i| format!("q{i}")));
    header.extend((0..v0.len()).map(|i| format!("qdot{i}")));
    header.extend((0..st.inputs[0].len()).map(|i| format!("force{i}")));
    header.push("flat_error".into());
    writeln!(w, "{}", header.join(","))?;
    for i in 0..st.len() {
        let (q, v) = &st.states[i];
        let mut row = vec![format!("{}", st.times[i])];
        row.extend(q.coords.iter().map(|x| format!("{x}")));
        row.extend(v.iter().map(|x| format!("{x}")));
        row.extend(st.inputs[i].iter().map(|x| format!("{x}")));
        row.push(format!("{}", rt.flat_errors[i]));
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

/// Applies `g` to every configuration of a trajectory.
pub fn act_on_states(sys: &dyn MechanicalSystem, g: &GroupElement, st: &StateTrajectory) -> Vec<ConfigPoint> {
    st.states.iter().map(|(q, _)| sys.act(g, q)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bundle::GroupKind;
    use crate::geometry::energy;
    use crate::systems::{Manipulator, Rocket};

    #[test]
    fn rocket_hover_is_stationary() {
        let sys = Rocket::default();
        let q0 = ConfigPoint::from_slice(sys.chart(), &[0.5, 1.0, 0.0]).unwrap();
        let u = DVector::from_vec(vec![0.0, sys.m * sys.g_grav]);
        let st = integrate(&sys, &q0, &DVector::zeros(3), |_| Ok(u.clone()), 0.0, 1e-3, 2.0).unwrap();
        for (q, v) in &st.states {
            assert!((&q.coords - &q0.coords).amax() < 1e-10);
            assert!(v.amax() < 1e-10);
        }
    }

    #[test]
    fn flat_metric_geodesic_is_straight() {
        let sys = Rocket { g_grav: 0.0, ..Rocket::default() };
        let q0 = ConfigPoint::from_slice(sys.chart(), &[0.0, 0.0, 0.1]).unwrap();
        let v = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let st = integrate(&sys, &q0, &v, |_| Ok(DVector::zeros(2)), 0.0, 1e-2, 1.0).unwrap();
        let (q, vend) = st.states.last().unwrap();
        assert!((q.coords[0] - 1.0).abs() < 1e-12 && (q.coords[1] + 2.0).abs() < 1e-12);
        assert!((vend - v).amax() < 1e-12);
    }

    #[test]
    fn zero_input_conserves_energy() {
        let sys = Manipulator::default();
        let q0 = ConfigPoint::from_slice(sys.chart(), &[0.0, 0.0, 0.4, 1.0]).unwrap();
        let v0 = DVector::from_vec(vec![0.3, 0.1, -0.5, 1.0]);
        let st = integrate(&sys, &q0, &v0, |_| Ok(DVector::zeros(3)), 0.0, 1e-3, 2.0).unwrap();
        let e0 = energy(&sys, &q0, &v0);
        for (q, v) in &st.states {
            assert!((energy(&sys, q, v) - e0).abs() < 1e-6);
        }
    }

    #[test]
    fn hover_roundtrip_is_exact() {
        let sys = Rocket::default();
        let atlas = Atlas::of(&sys);
        let y = GroupElement::from_slice(GroupKind::R2, &[0.3, 1.0]).unwrap();
        let traj = FlatTrajectory::constant(&y, 0.0, 0.5);
        let rt = roundtrip_verify(&sys, &atlas, &traj, 1e-2, DT_FD).unwrap();
        assert!(rt.report.max_flat_error < 1e-8);
        let mut buf = Vec::new();
        write_csv(&mut buf, &rt).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), rt.states.len() + 1);
        assert!(text.starts_with("t,q0,q1,q2,qdot0"));
    }
}
