//! Minimum-snap piecewise polynomials in flat-output coordinates.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::bundle::{GroupElement, GroupKind};
use crate::error::{Error, Result};
use crate::flatmap::FlatPoint;
use crate::linalg::angle_diff;

/// One polynomial piece; `coeffs[c][k]` multiplies `(t - t0)^k` for component `c`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub t0: f64,
    pub t1: f64,
    pub coeffs: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlatTrajectory {
    pub group_kind: GroupKind,
    pub segments: Vec<Segment>,
    /// Index of the trivialization the flat output is expressed in.
    #[serde(default)]
    pub chart: usize,
}

/// End conditions on derivatives of orders 1 to 4.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    /// Velocity, acceleration and jerk vanish at both ends.
    #[default]
    Rest,
    /// `start[k]` / `end[k]` hold derivative `k + 1` per component; missing
    /// orders are zero.
    Specified { start: Vec<Vec<f64>>, end: Vec<Vec<f64>> },
}


/// Waypoint file contents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Waypoints {
    pub times: Vec<f64>,
    pub points: Vec<Vec<f64>>,
    #[serde(default)]
    pub boundary: Boundary,
}

fn falling(i: usize, k: usize) -> f64 {
    (0..k).map(|j| (i - j) as f64).product()
}

/// Row of `d^k/dτ^k τ^i` at `τ` for `i = 0..n`.
fn deriv_row(n: usize, k: usize, tau: f64) -> Vec<f64> {
    (0..n).map(|i| if i < k { 0.0 } else { falling(i, k) * tau.powi((i - k) as i32) }).collect()
}

/// Solves one scalar component on normalized segments and returns
/// coefficients in powers of `(t - t0)`.
fn solve_component(durations: &[f64], values: &[f64], start: &[f64], end: &[f64], degree: usize) -> Result<Vec<Vec<f64>>> {
    let nseg = durations.len();
    let n = degree + 1;
    let nv = nseg * n;
    let mut q = DMatrix::zeros(nv, nv);
    for (s, &dur) in durations.iter().enumerate() {
        let w = dur.powi(-7);
        for i in 4..n {
            for j in 4..n {
                q[(s * n + i, s * n + j)] = w * falling(i, 4) * falling(j, 4) / (i + j - 7) as f64;
            }
        }
    }
    let mut rows: Vec<(Vec<(usize, f64)>, f64)> = Vec::new();
    let put = |seg: usize, k: usize, tau: f64, scale: f64| -> Vec<(usize, f64)> {
        deriv_row(n, k, tau).into_iter().enumerate().map(|(i, v)| (seg * n + i, v * scale)).collect()
    };
    for s in 0..nseg {
        rows.push((put(s, 0, 0.0, 1.0), values[s]));
        rows.push((put(s, 0, 1.0, 1.0), values[s + 1]));
    }
    for s in 0..nseg.saturating_sub(1) {
        for k in 1..=4 {
            let mut r = put(s, k, 1.0, durations[s].powi(-(k as i32)));
            r.extend(put(s + 1, k, 0.0, -durations[s + 1].powi(-(k as i32))));
            rows.push((r, 0.0));
        }
    }
    for (k, v) in start.iter().enumerate() {
        rows.push((put(0, k + 1, 0.0, durations[0].powi(-(k as i32 + 1))), *v));
    }
    for (k, v) in end.iter().enumerate() {
        rows.push((put(nseg - 1, k + 1, 1.0, durations[nseg - 1].powi(-(k as i32 + 1))), *v));
    }
    let m = rows.len();
    let mut kkt = DMatrix::zeros(nv + m, nv + m);
    let mut rhs = DVector::zeros(nv + m);
    kkt.view_mut((0, 0), (nv, nv)).copy_from(&(q * 2.0));
    for (r, (entries, b)) in rows.iter().enumerate() {
        for &(c, v) in entries {
            kkt[(nv + r, c)] += v;
            kkt[(c, nv + r)] += v;
        }
        rhs[nv + r] = *b;
    }
    let sol = kkt.lu().solve(&rhs).ok_or_else(|| Error::Planner("singular KKT system".into()))?;
    if sol.iter().any(|v| !v.is_finite()) {
        return Err(Error::Planner("singular KKT system".into()));
    }
    Ok((0..nseg)
        .map(|s| (0..n).map(|i| sol[s * n + i] / durations[s].powi(i as i32)).collect())
        .collect())
}

/// Minimum-snap trajectory through `(time, point)` waypoints.
///
/// Angle components are unwrapped onto the nearest branch of the previous
/// waypoint before fitting.
pub fn min_snap(kind: GroupKind, times: &[f64], points: &[GroupElement], boundary: &Boundary) -> Result<FlatTrajectory> {
    if times.len() < 2 || times.len() != points.len() {
        return Err(Error::Planner(format!("need at least 2 waypoints with matching times (got {} times, {} points)", times.len(), points.len())));
    }
    if times.iter().any(|t| !t.is_finite()) {
        return Err(Error::Planner("non-finite waypoint time".into()));
    }
    for w in times.windows(2) {
        if !(w[1] > w[0]) {
            return Err(Error::Planner(format!("waypoint times must be strictly increasing ({} then {})", w[0], w[1])));
        }
    }
    let dim = kind.dim();
    for p in points {
        if p.kind != kind {
            return Err(Error::GroupMismatch { expected: format!("{kind:?}"), found: format!("{:?}", p.kind) });
        }
    }
    let mask = kind.angle_mask();
    let mut unwrapped: Vec<Vec<f64>> = vec![points[0].data.iter().cloned().collect()];
    for p in &points[1..] {
        let prev = unwrapped.last().unwrap().clone();
        unwrapped.push((0..dim).map(|c| if mask[c] { prev[c] + angle_diff(p.data[c], prev[c]) } else { p.data[c] }).collect());
    }
    let durations: Vec<f64> = times.windows(2).map(|w| w[1] - w[0]).collect();
    let (degree, start, end): (usize, Vec<Vec<f64>>, Vec<Vec<f64>>) = match boundary {
        Boundary::Rest => (7, vec![vec![0.0; 3]; dim], vec![vec![0.0; 3]; dim]),
        Boundary::Specified { start, end } => {
            let per = |d: &Vec<Vec<f64>>| -> Result<Vec<Vec<f64>>> {
                if d.len() > 4 || d.iter().any(|v| v.len() != dim) {
                    return Err(Error::Planner(format!("boundary derivatives must be up to 4 vectors of length {dim}")));
                }
                Ok((0..dim).map(|c| (0..4).map(|k| d.get(k).map_or(0.0, |v| v[c])).collect()).collect())
            };
            (9, per(start)?, per(end)?)
        }
    };
    let mut comps = Vec::with_capacity(dim);
    for c in 0..dim {
        let vals: Vec<f64> = unwrapped.iter().map(|p| p[c]).collect();
        comps.push(solve_component(&durations, &vals, &start[c], &end[c], degree)?);
    }
    let segments = (0..durations.len())
        .map(|s| Segment { t0: times[s], t1: times[s + 1], coeffs: (0..dim).map(|c| comps[c][s].clone()).collect() })
        .collect();
    Ok(FlatTrajectory { group_kind: kind, segments, chart: 0 })
}

/// Plan from a waypoint file's contents.
pub fn plan_waypoints(kind: GroupKind, w: &Waypoints) -> Result<FlatTrajectory> {
    let pts = w
        .points
        .iter()
        .map(|p| {
            if p.len() != kind.dim() {
                return Err(Error::DimensionMismatch { expected: kind.dim(), found: p.len() });
            }
            GroupElement::from_slice(kind, p)
        })
        .collect::<Result<Vec<_>>>()?;
    min_snap(kind, &w.times, &pts, &w.boundary)
}

fn poly_deriv(c: &[f64], k: usize, x: f64) -> f64 {
    let mut acc = 0.0;
    for i in (k..c.len()).rev() {
        acc = acc * x + c[i] * falling(i, k);
    }
    acc
}

impl FlatTrajectory {
    pub fn start(&self) -> f64 {
        self.segments.first().map_or(0.0, |s| s.t0)
    }

    pub fn end(&self) -> f64 {
        self.segments.last().map_or(0.0, |s| s.t1)
    }

    fn segment_at(&self, t: f64) -> Result<&Segment> {
        let (a, b) = (self.start(), self.end());
        let slack = 1e-12 * (1.0 + a.abs().max(b.abs()));
        if self.segments.is_empty() || !(t >= a - slack && t <= b + slack) {
            return Err(Error::OutOfRange { t, start: a, end: b });
        }
        Ok(self.segments.iter().find(|s| t < s.t1).unwrap_or_else(|| self.segments.last().unwrap()))
    }

    /// Unwrapped component values (`k = 0`) or their `k`-th derivatives.
    pub fn raw(&self, t: f64, k: usize) -> Result<DVector<f64>> {
        let s = self.segment_at(t)?;
        let x = t - s.t0;
        Ok(DVector::from_iterator(s.coeffs.len(), s.coeffs.iter().map(|c| poly_deriv(c, k, x))))
    }

    /// Flat point at `t` with derivatives up to `order` (at most 4).
    pub fn eval(&self, t: f64, order: usize) -> Result<FlatPoint> {
        if order > 4 {
            return Err(Error::Planner(format!("derivative order {order} exceeds 4")));
        }
        let value = GroupElement::new(self.group_kind, self.raw(t, 0)?)?;
        let derivs = (1..=order).map(|k| self.raw(t, k)).collect::<Result<Vec<_>>>()?;
        Ok(FlatPoint { value, derivs })
    }

    /// Largest jump in derivatives 0..=4 across interior knots.
    pub fn knot_mismatch(&self) -> f64 {
        let mut worst = 0.0f64;
        for w in self.segments.windows(2) {
            let x = w[0].t1 - w[0].t0;
            for (a, b) in w[0].coeffs.iter().zip(&w[1].coeffs) {
                for k in 0..=4 {
                    worst = worst.max((poly_deriv(a, k, x) - poly_deriv(b, k, 0.0)).abs());
                }
            }
        }
        worst
    }

    /// `∫ ‖y⁗‖² dt` summed over components.
    pub fn snap_cost(&self) -> f64 {
        let mut total = 0.0;
        for s in &self.segments {
            let t = s.t1 - s.t0;
            for c in &s.coeffs {
                for i in 4..c.len() {
                    for j in 4..c.len() {
                        total += c[i] * c[j] * falling(i, 4) * falling(j, 4) * t.powi((i + j - 7) as i32) / (i + j - 7) as f64;
                    }
                }
            }
        }
        total
    }

    /// Validates structure after loading from disk.
    pub fn validate(&self) -> Result<()> {
        if self.segments.is_empty() {
            return Err(Error::Planner("trajectory has no segments".into()));
        }
        let dim = self.group_kind.dim();
        for (i, s) in self.segments.iter().enumerate() {
            if !(s.t1 > s.t0) {
                return Err(Error::Planner(format!("segment {i} has non-increasing times")));
            }
            if s.coeffs.len() != dim || s.coeffs.iter().any(|c| c.is_empty() || c.len() > 10 || c.iter().any(|v| !v.is_finite())) {
                return Err(Error::Planner(format!("segment {i} has malformed coefficients")));
            }
            if i > 0 && (s.t0 - self.segments[i - 1].t1).abs() > 1e-12 {
                return Err(Error::Planner(format!("segment {i} does not start where segment {} ends", i - 1)));
            }
        }
        Ok(())
    }

    /// A trajectory holding `value` on `[t0, t1]`.
    pub fn constant(value: &GroupElement, t0: f64, t1: f64) -> Self {
        FlatTrajectory {
            group_kind: value.kind,
            segments: vec![Segment { t0, t1, coeffs: value.data.iter().map(|v| vec![*v]).collect() }],
            chart: 0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn r2(x: f64, y: f64) -> GroupElement {
        GroupElement::from_slice(GroupKind::R2, &[x, y]).unwrap()
    }

    #[test]
    fn rest_to_rest_matches_closed_form() {
        let tr = min_snap(GroupKind::R2, &[1.0, 3.0], &[r2(0.0, 1.0), r2(2.0, 1.0)], &Boundary::Rest).unwrap();
        for tau in [0.1f64, 0.5, 0.77] {
            let p = 35.0 * tau.powi(4) - 84.0 * tau.powi(5) + 70.0 * tau.powi(6) - 20.0 * tau.powi(7);
            let y = tr.eval(1.0 + 2.0 * tau, 0).unwrap();
            assert_relative_eq!(y.value.data[0], 2.0 * p, epsilon = 1e-12);
            assert_relative_eq!(y.value.data[1], 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn identical_waypoints_stay_put() {
        let tr = min_snap(GroupKind::R2, &[0.0, 1.0], &[r2(1.0, 2.0), r2(1.0, 2.0)], &Boundary::Rest).unwrap();
        let y = tr.eval(0.4, 4).unwrap();
        assert_relative_eq!(y.value.data, r2(1.0, 2.0).data, epsilon = 1e-13);
        assert!(y.derivs.iter().all(|d| d.amax() < 1e-12));
    }

    #[test]
    fn three_waypoints_are_c4() {
        let tr = min_snap(GroupKind::R2, &[0.0, 1.0, 2.5], &[r2(0.0, 0.0), r2(1.0, -1.0), r2(3.0, 0.5)], &Boundary::Rest).unwrap();
        assert!(tr.knot_mismatch() < 1e-8);
        assert_relative_eq!(tr.eval(1.0, 0).unwrap().value.data, r2(1.0, -1.0).data, epsilon = 1e-9);
    }

    #[test]
    fn duplicate_times_rejected() {
        assert!(min_snap(GroupKind::R2, &[0.0, 0.0], &[r2(0.0, 0.0), r2(1.0, 0.0)], &Boundary::Rest).is_err());
    }

    #[test]
    fn eval_out_of_range() {
        let tr = FlatTrajectory::constant(&r2(0.0, 0.0), 0.0, 1.0);
        assert!(matches!(tr.eval(1.5, 0), Err(Error::OutOfRange { .. })));
        assert!(tr.eval(1.0, 2).is_ok());
    }

    #[test]
    fn angles_unwrap_along_nearest_branch() {
        let a = GroupElement::from_slice(GroupKind::SE2, &[0.0, 0.0, 3.0]).unwrap();
        let b = GroupElement::from_slice(GroupKind::SE2, &[0.0, 0.0, -3.0]).unwrap();
        let tr = min_snap(GroupKind::SE2, &[0.0, 1.0], &[a, b], &Boundary::Rest).unwrap();
        let mid = tr.raw(0.5, 0).unwrap()[2];
        assert_relative_eq!(mid, std::f64::consts::PI, epsilon = 1e-9);
        assert_relative_eq!(tr.raw(1.0, 0).unwrap()[2], 2.0 * std::f64::consts::PI - 3.0, epsilon = 1e-12);
    }

    #[test]
    fn specified_boundary_uses_degree_nine() {
        let start = vec![vec![1.0, 0.0], vec![0.0, 0.5], vec![0.0, 0.0], vec![0.1, 0.0]];
        let end = vec![vec![0.0, 0.0]];
        let tr = min_snap(GroupKind::R2, &[0.0, 2.0], &[r2(0.0, 0.0), r2(1.0, 1.0)], &Boundary::Specified { start: start.clone(), end }).unwrap();
        assert_eq!(tr.segments[0].coeffs[0].len(), 10);
        let y = tr.eval(0.0, 4).unwrap();
        for k in 0..4 {
            assert_relative_eq!(y.derivs[k], DVector::from_vec(start[k].clone()), epsilon = 1e-10);
        }
    }

    #[test]
    fn serde_round_trip() {
        let tr = min_snap(GroupKind::R2, &[0.0, 1.0, 2.0], &[r2(0.0, 0.0), r2(1.0, 0.0), r2(1.0, 1.0)], &Boundary::Rest).unwrap();
        let back: FlatTrajectory = serde_json::from_str(&serde_json::to_string(&tr).unwrap()).unwrap();
        assert_eq!(back, tr);
        let w: Waypoints = serde_json::from_str(r#"{"times":[0,1],"points":[[0,0],[1,1]],"boundary":"rest"}"#).unwrap();
        assert_eq!(w.boundary, Boundary::Rest);
    }
}
