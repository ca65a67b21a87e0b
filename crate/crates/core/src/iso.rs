//! The relation `X = Y + ψ_V` between invariant vector fields.

use std::sync::Arc;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow;
use crate::lie::{AlgebraVector, GroupElement};
use crate::linalg;
use crate::rep::{check_equivariance, EquivariantMap, InvariantFunction, VectorField};

/// Equivariance threshold a candidate witness must meet before it is used.
pub const WITNESS_EQUIVARIANCE_TOL: f64 = 1e-8;
/// Certification threshold for recovered witnesses.
pub const RECOVERY_TOL: f64 = 1e-8;
/// Relative singular-value threshold below which `ξ ↦ δρ(ξ)v` counts as singular.
pub const FREE_ACTION_TOL: f64 = 1e-8;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SampleDescriptor {
    pub seed: Option<u64>,
    pub group_samples: usize,
    pub point_samples: usize,
}

#[derive(Clone, Debug)]
pub struct IsoWitness {
    pub x: VectorField,
    pub y: VectorField,
    pub psi: EquivariantMap,
    /// `max ‖X(v) − Y(v) − ψ_V(v)‖` over the point samples.
    pub verified_residual: f64,
    pub equivariance_residual: f64,
    pub samples: SampleDescriptor,
}

impl IsoWitness {
    pub fn is_valid(&self, tol: f64) -> bool {
        self.verified_residual <= tol
    }
}

fn same_rep(a: &VectorField, b: &VectorField, psi: &EquivariantMap) -> Result<()> {
    for (what, dim, group) in [
        ("Y", b.rep.dim, &b.rep.group),
        ("ψ", psi.rep.dim, &psi.rep.group),
    ] {
        if dim != a.rep.dim {
            return Err(Error::dims(&format!("{what} representation"), a.rep.dim, dim));
        }
        if group.name != a.rep.group.name {
            return Err(Error::InvalidInput(format!(
                "{what} lives on {} but X on {}",
                group.name, a.rep.group.name
            )));
        }
    }
    Ok(())
}

/// `max ‖X(v) − Y(v) − δρ(ψ(v)) v‖` over `v`.
pub fn witness_residual(x: &VectorField, y: &VectorField, psi: &EquivariantMap, points: &[DVector<f64>]) -> Result<f64> {
    let rep = &x.rep;
    let res: Vec<f64> = points
        .par_iter()
        .map(|v| -> Result<f64> {
            let xi = psi.eval(v)?;
            Ok((x.eval(v)? - y.eval(v)? - rep.delta_rho(&xi) * v).norm())
        })
        .collect::<Result<_>>()?;
    Ok(res.into_iter().fold(0.0, f64::max))
}

pub fn verify_isomorphism(
    x: &VectorField,
    y: &VectorField,
    psi: &EquivariantMap,
    groups: &[GroupElement],
    points: &[DVector<f64>],
) -> Result<IsoWitness> {
    same_rep(x, y, psi)?;
    let eq = check_equivariance(psi, groups, points)?;
    if eq > WITNESS_EQUIVARIANCE_TOL {
        return Err(Error::ContractViolation {
            what: format!("witness {} is not equivariant", psi.label),
            residual: eq,
            tolerance: WITNESS_EQUIVARIANCE_TOL,
        });
    }
    Ok(IsoWitness {
        x: x.clone(),
        y: y.clone(),
        psi: psi.clone(),
        verified_residual: witness_residual(x, y, psi, points)?,
        equivariance_residual: eq,
        samples: SampleDescriptor {
            seed: None,
            group_samples: groups.len(),
            point_samples: points.len(),
        },
    })
}

#[derive(Clone, Debug)]
pub struct RecoveredWitness {
    pub psi: EquivariantMap,
    /// `max ‖δρ(ψ(v))v − (X(v) − Y(v))‖` over the points.
    pub residual: f64,
}

/// Pointwise least squares for `δρ(ξ) v = X(v) − Y(v)` in the invariant metric on g.
pub fn recover_witness(x: &VectorField, y: &VectorField, points: &[DVector<f64>]) -> Result<RecoveredWitness> {
    let rep = &x.rep;
    let group = &rep.group;
    let (_, unwhite) = group.whitening();
    let rows: Vec<(DVector<f64>, AlgebraVector, f64)> = points
        .par_iter()
        .map(|v| -> Result<(DVector<f64>, AlgebraVector, f64)> {
            rep.check_point(v)?;
            let diff = x.eval(v)? - y.eval(v)?;
            let k = group.algebra_dim();
            if k == 0 {
                return Err(Error::SingularPoint {
                    point: v.iter().copied().collect(),
                    sigma_min: 0.0,
                });
            }
            // columns in whitened coordinates, so the minimum-norm solution is
            // the one the invariant form would pick
            let a = rep.orbit_tangent_matrix(v) * &unwhite;
            let sv = linalg::singular_values(&a);
            let smin = if sv.len() < k { 0.0 } else { *sv.last().expect("nonempty") };
            if smin <= FREE_ACTION_TOL * v.norm().max(1.0) {
                return Err(Error::SingularPoint {
                    point: v.iter().copied().collect(),
                    sigma_min: smin,
                });
            }
            let c = &unwhite * linalg::lstsq(&a, &diff);
            let xi = AlgebraVector::new(c);
            let res = (rep.delta_rho(&xi) * v - diff).norm();
            Ok((v.clone(), xi, res))
        })
        .collect::<Result<_>>()?;
    let residual = rows.iter().map(|r| r.2).fold(0.0, f64::max);
    let table = rows.into_iter().map(|(v, xi, _)| (v, xi)).collect();
    Ok(RecoveredWitness {
        psi: EquivariantMap::tabulated(rep, table),
        residual,
    })
}

/// `max |f(Φ^X_t(v)) − f(Φ^Y_t(v))|` over points, grid times and invariants.
pub fn orbit_flow_check(
    x: &VectorField,
    y: &VectorField,
    invariants: &[InvariantFunction],
    points: &[DVector<f64>],
    t_end: f64,
    h: f64,
    opts: &flow::FlowOptions,
) -> Result<f64> {
    if invariants.is_empty() {
        return Err(Error::InvalidInput("no invariant functions supplied".into()));
    }
    let res: Vec<f64> = points
        .par_iter()
        .map(|v| -> Result<f64> {
            let fx = flow::integrate_flow_with(x, v, t_end, h, opts)?;
            let fy = flow::integrate_flow_with(y, v, t_end, h, opts)?;
            let mut worst = 0.0_f64;
            for (a, b) in fx.points.iter().zip(&fy.points) {
                for f in invariants {
                    worst = worst.max((f.eval(a) - f.eval(b)).abs());
                }
            }
            Ok(worst)
        })
        .collect::<Result<_>>()?;
    Ok(res.into_iter().fold(0.0, f64::max))
}

/// Witness for `Y ≅ X` given one for `X ≅ Y`.
pub fn reverse(psi: &EquivariantMap) -> EquivariantMap {
    psi.scaled(-1.0)
}

/// Witness for `X ≅ Z` from witnesses for `X ≅ Y` and `Y ≅ Z`.
pub fn compose(psi1: &EquivariantMap, psi2: &EquivariantMap) -> Result<EquivariantMap> {
    if !Arc::ptr_eq(&psi1.rep, &psi2.rep) && psi1.rep.dim != psi2.rep.dim {
        return Err(Error::dims("composed witness", psi1.rep.dim, psi2.rep.dim));
    }
    psi1.add(psi2)
}
