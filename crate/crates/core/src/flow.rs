//! Flows of vector fields, the gauge curve `ġ = τ(t) g` driven by an
//! equivariant map along a trajectory, and relative equilibria.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lie::{AlgebraVector, GroupElement};
use crate::linalg;
use crate::rep::{EquivariantMap, VectorField};

/// Grid points of an RK4 integration together with the field values there,
/// which give a cubic Hermite interpolant between grid points.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Trajectory {
    pub t_grid: Vec<f64>,
    pub points: Vec<DVector<f64>>,
    pub derivatives: Vec<DVector<f64>>,
    pub step: f64,
    pub method: String,
}

impl Trajectory {
    pub fn endpoint(&self) -> &DVector<f64> {
        self.points.last().expect("trajectory has the initial point")
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Hermite interpolation at `t` inside `[t_k, t_{k+1}]`.
    pub fn dense(&self, k: usize, theta: f64) -> DVector<f64> {
        let h = self.step;
        let (y0, y1) = (&self.points[k], &self.points[k + 1]);
        let (f0, f1) = (&self.derivatives[k], &self.derivatives[k + 1]);
        let s = theta;
        let s2 = s * s;
        let s3 = s2 * s;
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        y0 * h00 + f0 * (h10 * h) + y1 * h01 + f1 * (h11 * h)
    }

    /// CSV with header `t,v_1,…,v_N`.
    pub fn to_csv(&self) -> String {
        let n = self.points.first().map_or(0, |p| p.len());
        let mut out = String::from("t");
        for i in 1..=n {
            let _ = write!(out, ",v_{i}");
        }
        out.push('\n');
        for (t, p) in self.t_grid.iter().zip(&self.points) {
            let _ = write!(out, "{t:.17e}");
            for c in p.iter() {
                let _ = write!(out, ",{c:.17e}");
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Clone, Debug, Default)]
pub struct FlowOptions {
    /// Abort with a trajectory-escape error once `‖v‖` exceeds this.
    pub escape_radius: Option<f64>,
}

fn step_count(t_end: f64, h: f64) -> Result<usize> {
    if !(h > 0.0 && h.is_finite() && t_end > 0.0 && t_end.is_finite()) {
        return Err(Error::InvalidInput(format!("need h > 0 and t_end > 0, got h = {h}, t_end = {t_end}")));
    }
    let n = (t_end / h).round();
    if (n * h - t_end).abs() > 1e-9 * t_end.max(1.0) || n < 1.0 {
        return Err(Error::InvalidInput(format!("t_end = {t_end} is not a multiple of h = {h}")));
    }
    Ok(n as usize)
}

/// Classical RK4 on a fixed grid with compensated (Kahan) accumulation.
pub fn integrate_flow(x: &VectorField, v0: &DVector<f64>, t_end: f64, h: f64) -> Result<Trajectory> {
    integrate_flow_with(x, v0, t_end, h, &FlowOptions::default())
}

pub fn integrate_flow_with(
    x: &VectorField,
    v0: &DVector<f64>,
    t_end: f64,
    h: f64,
    opts: &FlowOptions,
) -> Result<Trajectory> {
    x.rep.check_point(v0)?;
    let n = step_count(t_end, h)?;
    let mut t_grid = Vec::with_capacity(n + 1);
    let mut points = Vec::with_capacity(n + 1);
    let mut derivatives = Vec::with_capacity(n + 1);
    let mut y = v0.clone();
    let mut comp = DVector::zeros(v0.len());
    let mut f = x.eval(&y)?;
    t_grid.push(0.0);
    points.push(y.clone());
    derivatives.push(f.clone());
    for k in 0..n {
        let t = k as f64 * h;
        let k1 = f;
        let k2 = x.eval(&(&y + &k1 * (0.5 * h)))?;
        let k3 = x.eval(&(&y + &k2 * (0.5 * h)))?;
        let k4 = x.eval(&(&y + &k3 * h))?;
        let incr = (k1 + (k2 + k3) * 2.0 + k4) * (h / 6.0);
        let corrected = incr - &comp;
        let next = &y + &corrected;
        comp = (&next - &y) - corrected;
        y = next;
        let t_next = (k + 1) as f64 * h;
        if y.iter().any(|c| !c.is_finite()) {
            return Err(Error::BlowUp { last_time: t });
        }
        if let Some(r) = opts.escape_radius {
            if y.norm() > r {
                return Err(Error::TrajectoryEscape { time: t_next, radius: r });
            }
        }
        f = x.eval(&y)?;
        if f.iter().any(|c| !c.is_finite()) {
            return Err(Error::BlowUp { last_time: t_next });
        }
        t_grid.push(t_next);
        points.push(y.clone());
        derivatives.push(f.clone());
    }
    Ok(Trajectory {
        t_grid,
        points,
        derivatives,
        step: h,
        method: "rk4".into(),
    })
}

/// Lie-group stepping scheme for `ġ = τ(t) g`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum GaugeMethod {
    /// `g ← exp(h τ(t + h/2)) g`, order 2.
    Midpoint,
    /// Two exponentials at the Gauss nodes, order 4.
    CommutatorFree4,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GroupTrajectory {
    pub t_grid: Vec<f64>,
    pub elements: Vec<GroupElement>,
    pub source: String,
    pub method: GaugeMethod,
}

impl GroupTrajectory {
    /// `max_t ‖gᵀg − I‖_max`.
    pub fn membership_drift(&self) -> f64 {
        self.elements
            .iter()
            .map(|g| {
                let n = g.0.nrows();
                linalg::max_abs(&(g.0.transpose() * &g.0 - DMatrix::identity(n, n)))
            })
            .fold(0.0, f64::max)
    }

    /// One line per time: `t` followed by the row-major matrix entries.
    pub fn to_csv(&self) -> String {
        let n = self.elements.first().map_or(0, |g| g.0.nrows());
        let mut out = String::from("t");
        for i in 1..=n {
            for j in 1..=n {
                let _ = write!(out, ",g_{i}{j}");
            }
        }
        out.push('\n');
        for (t, g) in self.t_grid.iter().zip(&self.elements) {
            let _ = write!(out, "{t:.17e}");
            for i in 0..n {
                for j in 0..n {
                    let _ = write!(out, ",{:.17e}", g.0[(i, j)]);
                }
            }
            out.push('\n');
        }
        out
    }
}

const GAUSS_OFFSET: f64 = 0.288_675_134_594_812_9; // sqrt(3) / 6

/// Solves `ġ = ψ(Φ^Y_t(z)) g`, `g(0) = I`, on the grid of the `Y`-trajectory.
pub fn integrate_gauge(
    psi: &EquivariantMap,
    y: &VectorField,
    z: &DVector<f64>,
    t_end: f64,
    h: f64,
) -> Result<GroupTrajectory> {
    let traj = integrate_flow(y, z, t_end, h)?;
    integrate_gauge_along(psi, &traj, GaugeMethod::CommutatorFree4)
}

/// Gauge curve along an already computed trajectory; the driving curve
/// between grid points comes from the trajectory's Hermite interpolant.
pub fn integrate_gauge_along(psi: &EquivariantMap, traj: &Trajectory, method: GaugeMethod) -> Result<GroupTrajectory> {
    let group = &psi.rep.group;
    let n = group.ambient_dim;
    let h = traj.step;
    let tau = |k: usize, theta: f64| -> Result<DMatrix<f64>> {
        let p = traj.dense(k, theta);
        Ok(group.matrix_of(&psi.eval(&p)?))
    };
    let mut g = DMatrix::<f64>::identity(n, n);
    let mut comp = DMatrix::<f64>::zeros(n, n);
    let mut elements = Vec::with_capacity(traj.len());
    elements.push(GroupElement(g.clone()));
    for k in 0..traj.len().saturating_sub(1) {
        // E − I for the step propagator, accumulated as g ← g + (E − I) g
        let em1 = match method {
            GaugeMethod::Midpoint => linalg::expm1_matrix(&(tau(k, 0.5)? * h)),
            GaugeMethod::CommutatorFree4 => {
                let a1 = tau(k, 0.5 - GAUSS_OFFSET)?;
                let a2 = tau(k, 0.5 + GAUSS_OFFSET)?;
                let (w1, w2) = (0.25 - GAUSS_OFFSET, 0.25 + GAUSS_OFFSET);
                // the later exponential weights the later node more heavily
                let later = linalg::expm1_matrix(&((&a1 * w1 + &a2 * w2) * h));
                let earlier = linalg::expm1_matrix(&((&a1 * w2 + &a2 * w1) * h));
                &later + &earlier + &later * &earlier
            }
        };
        let incr = &em1 * &g - &comp;
        let next = &g + &incr;
        comp = (&next - &g) - incr;
        g = next;
        if g.iter().any(|c| !c.is_finite()) {
            return Err(Error::BlowUp {
                last_time: traj.t_grid[k],
            });
        }
        elements.push(GroupElement(g.clone()));
    }
    Ok(GroupTrajectory {
        t_grid: traj.t_grid.clone(),
        elements,
        source: format!("{} along the flow of a field", psi.label),
        method,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GaugeReport {
    /// `sup ‖Φ^X_t(m) − g(t)·Φ^Y_t(m)‖` over points and grid times.
    pub sup_error: f64,
    pub per_point: Vec<f64>,
    pub membership_drift: f64,
    pub step: f64,
}

pub fn verify_gauge_identity(
    x: &VectorField,
    y: &VectorField,
    psi: &EquivariantMap,
    points: &[DVector<f64>],
    t_end: f64,
    h: f64,
) -> Result<GaugeReport> {
    verify_gauge_identity_with(x, y, psi, points, t_end, h, GaugeMethod::CommutatorFree4)
}

pub fn verify_gauge_identity_with(
    x: &VectorField,
    y: &VectorField,
    psi: &EquivariantMap,
    points: &[DVector<f64>],
    t_end: f64,
    h: f64,
    method: GaugeMethod,
) -> Result<GaugeReport> {
    if points.is_empty() {
        return Err(Error::InvalidInput("gauge identity needs at least one point".into()));
    }
    let rep = &x.rep;
    let results: Vec<(f64, f64)> = points
        .par_iter()
        .map(|m| -> Result<(f64, f64)> {
            let fx = integrate_flow(x, m, t_end, h)?;
            let fy = integrate_flow(y, m, t_end, h)?;
            let gauge = integrate_gauge_along(psi, &fy, method)?;
            let mut worst = 0.0_f64;
            for ((px, py), g) in fx.points.iter().zip(&fy.points).zip(&gauge.elements) {
                worst = worst.max((px - rep.act(g, py)).norm());
            }
            Ok((worst, gauge.membership_drift()))
        })
        .collect::<Result<_>>()?;
    let per_point: Vec<f64> = results.iter().map(|r| r.0).collect();
    Ok(GaugeReport {
        sup_error: per_point.iter().copied().fold(0.0, f64::max),
        membership_drift: results.iter().map(|r| r.1).fold(0.0, f64::max),
        per_point,
        step: h,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RelativeEquilibrium {
    pub x: DVector<f64>,
    pub xi: AlgebraVector,
    /// `‖X(x) − δρ(ξ) x‖`.
    pub residual: f64,
    pub iterations: usize,
}

pub const RELATIVE_EQUILIBRIUM_TOL: f64 = 1e-10;

/// Newton on `X(x) = δρ(ξ) x`, with the orbit directions through `x0` and the
/// isotropy directions of `ξ` removed by linear constraints.
pub fn find_relative_equilibrium(
    x_field: &VectorField,
    x0: &DVector<f64>,
    xi0: &AlgebraVector,
) -> Result<RelativeEquilibrium> {
    let rep = &x_field.rep;
    let group = &rep.group;
    rep.check_point(x0)?;
    if xi0.dim() != group.algebra_dim() {
        return Err(Error::dims("relative equilibrium generator", group.algebra_dim(), xi0.dim()));
    }
    let nv = rep.dim;
    let k = group.algebra_dim();
    let orbit = rep.orbit_tangent_matrix(x0);
    let tangent = linalg::range_basis(&orbit, 1e-10);
    let isotropy = linalg::null_space(&orbit, 1e-10);
    // ⟨ξ, η_j⟩ in the invariant form
    let iso_rows = isotropy.transpose() * group.gram();
    let n_rows = nv + tangent.ncols() + iso_rows.nrows();

    let residual_of = |x: &DVector<f64>, xi: &DVector<f64>| -> Result<(DVector<f64>, f64)> {
        let main = x_field.eval(x)? - rep.delta_rho(&AlgebraVector::new(xi.clone())) * x;
        let mut full = DVector::zeros(n_rows);
        full.rows_mut(0, nv).copy_from(&main);
        full.rows_mut(nv, tangent.ncols()).copy_from(&(tangent.transpose() * (x - x0)));
        full.rows_mut(nv + tangent.ncols(), iso_rows.nrows()).copy_from(&(&iso_rows * xi));
        Ok((full, main.norm()))
    };

    let mut x = x0.clone();
    let mut xi = xi0.coords.clone();
    let (mut f, mut res) = residual_of(&x, &xi)?;
    let max_iter = 50;
    for it in 0..max_iter {
        if res <= 1e-13 * x.norm().max(1.0) {
            return Ok(RelativeEquilibrium {
                x,
                xi: AlgebraVector::new(xi),
                residual: res,
                iterations: it,
            });
        }
        let mut jac = DMatrix::zeros(n_rows, nv + k);
        let dx = jacobian(x_field, &x)? - rep.delta_rho(&AlgebraVector::new(xi.clone()));
        jac.view_mut((0, 0), (nv, nv)).copy_from(&dx);
        for i in 0..k {
            jac.view_mut((0, nv + i), (nv, 1)).copy_from(&(-(&rep.delta_rho_basis[i] * &x)));
        }
        jac.view_mut((nv, 0), (tangent.ncols(), nv)).copy_from(&tangent.transpose());
        jac.view_mut((nv + tangent.ncols(), nv), (iso_rows.nrows(), k)).copy_from(&iso_rows);
        if linalg::rank(&jac, 1e-12) == 0 {
            return Err(Error::DegeneratePoint("Jacobian of the relative-equilibrium system vanishes".into()));
        }
        let step = -linalg::lstsq(&jac, &f);
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..12 {
            let xt = &x + step.rows(0, nv) * lambda;
            let xit = &xi + step.rows(nv, k) * lambda;
            let (ft, rt) = residual_of(&xt, &xit)?;
            if ft.norm() < f.norm() {
                x = xt;
                xi = xit;
                f = ft;
                res = rt;
                accepted = true;
                break;
            }
            lambda *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    if res <= RELATIVE_EQUILIBRIUM_TOL {
        return Ok(RelativeEquilibrium {
            x,
            xi: AlgebraVector::new(xi),
            residual: res,
            iterations: max_iter,
        });
    }
    Err(Error::NoConvergence {
        iterations: max_iter,
        residual: res,
    })
}

/// Central-difference Jacobian of a field (Newton only needs it approximately).
pub fn jacobian(x_field: &VectorField, x: &DVector<f64>) -> Result<DMatrix<f64>> {
    let n = x.len();
    let h = 1e-6 * x.norm().max(1.0);
    let mut jac = DMatrix::zeros(n, n);
    for j in 0..n {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[j] += h;
        xm[j] -= h;
        jac.set_column(j, &((x_field.eval(&xp)? - x_field.eval(&xm)?) / (2.0 * h)));
    }
    Ok(jac)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lie::GroupSpec;
    use crate::rep::{induced_field_from_map, Representation, Sampler};
    use std::f64::consts::{E, PI};
    use std::sync::Arc;

    fn so2() -> Arc<Representation> {
        Representation::parse(GroupSpec::by_name("SO2").unwrap(), "standard").unwrap()
    }

    fn o3_pair() -> Arc<Representation> {
        Representation::parse(GroupSpec::by_name("O3").unwrap(), "diagonal:2").unwrap()
    }

    fn e1e2() -> DVector<f64> {
        DVector::from_vec(vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0])
    }

    #[test]
    fn flow_examples() {
        let rep = so2();
        let v0 = DVector::from_vec(vec![1.0, 0.0]);
        let zero = integrate_flow(&VectorField::zero(&rep), &v0, 1.0, 0.1).unwrap();
        assert!(zero.points.iter().all(|p| *p == v0));

        let id = VectorField::linear(&rep, DMatrix::identity(2, 2)).unwrap();
        let t = integrate_flow(&id, &v0, 1.0, 1e-3).unwrap();
        assert!((t.endpoint() - DVector::from_vec(vec![E, 0.0])).norm() < 1e-10);
        assert_eq!(t.t_grid.len(), 1001);

        let j = VectorField::linear(&rep, DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0])).unwrap();
        let t = integrate_flow(&j, &v0, PI / 2.0, PI / 2000.0).unwrap();
        assert!((t.endpoint() - DVector::from_vec(vec![0.0, 1.0])).norm() < 1e-9);
    }

    #[test]
    fn rk4_is_fourth_order() {
        let rep = so2();
        let a = DMatrix::from_row_slice(2, 2, &[-0.5, -2.0, 2.0, -0.5]);
        let x = VectorField::linear(&rep, a.clone()).unwrap();
        let v0 = DVector::from_vec(vec![1.0, 0.5]);
        let exact = a.exp() * &v0;
        let e1 = (integrate_flow(&x, &v0, 1.0, 0.05).unwrap().endpoint() - &exact).norm();
        let e2 = (integrate_flow(&x, &v0, 1.0, 0.025).unwrap().endpoint() - &exact).norm();
        let ratio = e1 / e2;
        assert!(ratio > 14.0 && ratio < 18.0, "ratio {ratio}");
    }

    #[test]
    fn blow_up_and_escape() {
        let rep = so2();
        let x = VectorField::custom(&rep, "v^3", |v| v.map(|c| c * c * c));
        let v0 = DVector::from_vec(vec![1.0, 0.0]);
        let err = integrate_flow(&x, &v0, 5.0, 0.1);
        assert!(matches!(err, Err(Error::BlowUp { .. })));
        let opts = FlowOptions { escape_radius: Some(3.0) };
        let err = integrate_flow_with(&x, &v0, 5.0, 0.01, &opts);
        assert!(matches!(err, Err(Error::TrajectoryEscape { radius, .. }) if radius == 3.0));
    }

    #[test]
    fn gauge_examples() {
        let rep = so2();
        let z = DVector::from_vec(vec![0.4, -0.3]);
        let zero_map = EquivariantMap::zero(&rep);
        let g = integrate_gauge(&zero_map, &VectorField::zero(&rep), &z, 1.0, 0.01).unwrap();
        assert!(g.elements.iter().all(|e| *e == GroupElement::identity(2)));

        let c = 1.7;
        let psi = EquivariantMap::constant(&rep, AlgebraVector::from_slice(&[c])).unwrap();
        let g = integrate_gauge(&psi, &VectorField::zero(&rep), &z, 1.0, 1e-3).unwrap();
        for (t, e) in g.t_grid.iter().zip(&g.elements) {
            let exact = rep.group.exp_map(&AlgebraVector::from_slice(&[c]), *t).unwrap();
            assert!(e.distance(&exact) < 1e-10);
        }
        assert!(g.membership_drift() < 1e-9);
    }

    #[test]
    fn kepler_gauge_at_circular_orbit() {
        let rep = o3_pair();
        let x = VectorField::central_force(&rep, 1.0, 3.0, 1.0).unwrap();
        let psi = EquivariantMap::angular_momentum(&rep).unwrap();
        let y = x.sub(&induced_field_from_map(&psi)).unwrap();
        let g = integrate_gauge(&psi, &y, &e1e2(), 1.0, 1e-3).unwrap();
        let exact = rep.group.exp_map(&AlgebraVector::basis(3, 2), 1.0).unwrap();
        assert!(g.elements.last().unwrap().distance(&exact) < 1e-6);
        assert!(g.membership_drift() < 1e-9);
    }

    #[test]
    fn gauge_identity_so2_and_order() {
        let rep = so2();
        let x = VectorField::linear(&rep, DMatrix::from_row_slice(2, 2, &[1.0, -1.0, 1.0, 1.0])).unwrap();
        let y = VectorField::linear(&rep, DMatrix::identity(2, 2)).unwrap();
        let psi = EquivariantMap::constant(&rep, AlgebraVector::from_slice(&[1.0])).unwrap();
        let m = [DVector::from_vec(vec![1.0, 0.0])];
        let r = verify_gauge_identity(&x, &y, &psi, &m, 1.0, 1e-3).unwrap();
        assert!(r.sup_error <= 1e-7);

        let same = verify_gauge_identity(&y, &y, &EquivariantMap::zero(&rep), &m, 1.0, 1e-2).unwrap();
        assert_eq!(same.sup_error, 0.0);
    }

    #[test]
    fn midpoint_is_second_order_and_cf4_fourth() {
        let rep = o3_pair();
        let x = VectorField::central_force(&rep, 1.0, 3.0, 1.0).unwrap();
        // |q|-dependent multiple of the angular momentum, so τ(t) is not constant
        let psi = EquivariantMap::custom(&rep, "w(|q|) q×v", |v| {
            let q = v.fixed_rows::<3>(0);
            let w = q.cross(&v.fixed_rows::<3>(3)) * (0.5 + 0.3 * q.norm_squared());
            DVector::from_column_slice(w.as_slice())
        });
        let y = x.sub(&induced_field_from_map(&psi)).unwrap();
        let m = [DVector::from_vec(vec![1.1, 0.1, 0.0, 0.0, 0.9, 0.2])];
        let err = |h: f64, method| verify_gauge_identity_with(&x, &y, &psi, &m, 1.0, h, method).unwrap().sup_error;
        let mid = err(0.02, GaugeMethod::Midpoint) / err(0.01, GaugeMethod::Midpoint);
        assert!(mid > 3.0 && mid < 5.0, "midpoint ratio {mid}");
        let cf = err(0.02, GaugeMethod::CommutatorFree4) / err(0.01, GaugeMethod::CommutatorFree4);
        assert!(cf > 12.0, "cf4 ratio {cf}");
    }

    #[test]
    fn relative_equilibria() {
        let rep = so2();
        let a = DMatrix::from_row_slice(2, 2, &[-1.0, 0.3, 0.2, -2.0]);
        let lin = VectorField::linear(&rep, a).unwrap();
        let re = find_relative_equilibrium(&lin, &DVector::zeros(2), &AlgebraVector::zero(1)).unwrap();
        assert_eq!(re.residual, 0.0);
        assert_eq!(re.x.norm(), 0.0);

        let rep = o3_pair();
        for p in [3.0, 0.0] {
            let x = VectorField::central_force(&rep, 1.0, p, 1.0).unwrap();
            let re = find_relative_equilibrium(&x, &e1e2(), &AlgebraVector::basis(3, 2)).unwrap();
            assert_eq!(re.residual, 0.0);
            // a perturbed start converges back onto the family of circular orbits
            let mut x0 = e1e2();
            x0[0] += 0.01;
            x0[5] += 0.02;
            let re = find_relative_equilibrium(&x, &x0, &AlgebraVector::from_slice(&[0.01, 0.0, 1.02])).unwrap();
            assert!(re.residual <= RELATIVE_EQUILIBRIUM_TOL);
        }
    }

    #[test]
    fn flows_are_equivariant() {
        let rep = o3_pair();
        let x = VectorField::central_force(&rep, 1.0, 3.0, 1.0).unwrap();
        let mut s = Sampler::new(21);
        let gs = s.group_elements(&rep.group, 3);
        let m = e1e2() * 1.1;
        let base = integrate_flow(&x, &m, 0.5, 1e-3).unwrap();
        for g in &gs {
            let moved = integrate_flow(&x, &rep.act(g, &m), 0.5, 1e-3).unwrap();
            for (a, b) in moved.points.iter().zip(&base.points) {
                assert!((a - rep.act(g, b)).norm() < 1e-7);
            }
        }
    }
}
