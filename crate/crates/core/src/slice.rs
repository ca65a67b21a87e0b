//! Affine slices `x + N`, slice decompositions `X = X^S + δρ(ψ^S)y`,
//! transition maps between slices, and the witnesses comparing them.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diff;
use crate::error::{Error, Result};
use crate::lie::{equivariant_splitting, AlgebraVector, GroupElement, GroupFamily, GroupSpec, Splitting};
use crate::linalg;
use crate::quadrature::QuadraturePlan;
use crate::rep::{Representation, VectorField};

/// Singular values of `ξ ↦ δρ(ξ)x` at or below this (times `max(1, ‖x‖)`) are zero.
pub const STABILIZER_SV_TOL: f64 = 1e-9;
/// `‖ρ(h)x − x‖` threshold for membership in the stabilizer.
pub const STABILIZER_POINT_TOL: f64 = 1e-9;
/// Condition number above which a slice decomposition is refused.
pub const SLICE_CONDITION_LIMIT: f64 = 1e8;
/// Constraint residual demanded of a transition map.
pub const TRANSITION_TOL: f64 = 1e-11;
/// Step for finite differences of transition maps.
pub const TRANSITION_FD_STEP: f64 = 1e-3;
/// Largest acceptable Richardson disagreement for transition derivatives.
pub const FD_DISAGREEMENT_LIMIT: f64 = 1e-4;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StabilizerAlgebra {
    /// Orthonormal in the invariant form.
    pub basis: Vec<AlgebraVector>,
    pub singular_values: Vec<f64>,
    pub warning: Option<String>,
}

/// Kernel of `ξ ↦ δρ(ξ)x`.
pub fn stabilizer_algebra(rep: &Representation, x: &DVector<f64>) -> StabilizerAlgebra {
    let group = &rep.group;
    let k = group.algebra_dim();
    if k == 0 {
        return StabilizerAlgebra {
            basis: Vec::new(),
            singular_values: Vec::new(),
            warning: None,
        };
    }
    let (_, unwhite) = group.whitening();
    let a = rep.orbit_tangent_matrix(x) * &unwhite;
    let tol = STABILIZER_SV_TOL * x.norm().max(1.0);
    let mut sv = linalg::singular_values(&a);
    sv.resize(k, 0.0);
    let warning = sv
        .iter()
        .find(|&&s| s > tol && s <= 10.0 * tol)
        .map(|s| format!("ill-conditioned stabilizer: singular value {s:.3e} near the threshold {tol:.1e}"));
    let null = linalg::null_space(&a, tol);
    let basis = (0..null.ncols())
        .map(|j| AlgebraVector::new(&unwhite * null.column(j)))
        .collect();
    StabilizerAlgebra {
        basis,
        singular_values: sv,
        warning,
    }
}

/// Levenberg–Marquardt for `r(c) = 0`. Returns the final point and `‖r‖`.
fn levenberg_marquardt<F>(mut c: DVector<f64>, residual_and_jacobian: F, max_iter: usize, tol: f64) -> (DVector<f64>, f64)
where
    F: Fn(&DVector<f64>) -> (DVector<f64>, DMatrix<f64>),
{
    let (mut r, mut j) = residual_and_jacobian(&c);
    let mut lambda = 1e-3;
    for _ in 0..max_iter {
        let norm = r.norm();
        if norm <= tol {
            break;
        }
        let jt = j.transpose();
        let mut lhs = &jt * &j;
        for i in 0..lhs.nrows() {
            lhs[(i, i)] += lambda * (1.0 + lhs[(i, i)]);
        }
        let Some(step) = lhs.lu().solve(&(-(&jt * &r))) else {
            break;
        };
        let trial = &c + &step;
        let (rt, jt2) = residual_and_jacobian(&trial);
        if rt.norm() < norm {
            c = trial;
            r = rt;
            j = jt2;
            lambda = (lambda * 0.3).max(1e-15);
        } else {
            lambda *= 10.0;
            if lambda > 1e12 {
                break;
            }
        }
    }
    let n = r.norm();
    (c, n)
}

fn lm_seeds(dim: usize, count: usize, scale: f64, seed: u64) -> Vec<DVector<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = vec![DVector::zeros(dim)];
    for _ in 0..count {
        out.push(DVector::from_fn(dim, |_, _| rng.gen_range(-scale..scale)));
    }
    out
}

/// Whether `m ∈ exp(span h_basis)`, the identity component of the stabilizer.
pub fn in_identity_component(group: &GroupSpec, h_basis: &[AlgebraVector], m: &GroupElement) -> bool {
    let n = group.ambient_dim;
    let tol = 1e-8;
    let target = m.matrix();
    if (target - DMatrix::identity(n, n)).norm() <= tol {
        return true;
    }
    if h_basis.is_empty() {
        return false;
    }
    if h_basis.len() == group.algebra_dim() {
        // H₀ is the identity component of G
        return match group.family {
            GroupFamily::Orthogonal { special: false } => target.determinant() > 0.0,
            _ => true,
        };
    }
    let mats: Vec<DMatrix<f64>> = h_basis.iter().map(|h| group.matrix_of(h)).collect();
    let scale = mats.iter().map(|m| m.norm()).fold(f64::INFINITY, f64::min).max(1e-12);
    let f = |c: &DVector<f64>| {
        let mut a = DMatrix::zeros(n, n);
        for (ci, mi) in c.iter().zip(&mats) {
            a += mi * *ci;
        }
        let r = linalg::exp_matrix(&a) - target;
        let mut jac = DMatrix::zeros(n * n, mats.len());
        for (i, mi) in mats.iter().enumerate() {
            let d = linalg::dexp_directional(&a, mi);
            jac.set_column(i, &DVector::from_column_slice(d.as_slice()));
        }
        (DVector::from_column_slice(r.as_slice()), jac)
    };
    lm_seeds(mats.len(), 16, 2.0 * std::f64::consts::PI / scale, 0x7c0de)
        .into_iter()
        .any(|s| levenberg_marquardt(s, f, 100, 1e-12).1 <= tol)
}

fn coset_index(group: &GroupSpec, h_basis: &[AlgebraVector], reps: &[GroupElement], k: &GroupElement) -> Option<usize> {
    reps.iter()
        .position(|r| in_identity_component(group, h_basis, &r.inverse().compose(k)))
}

/// Representatives of the cosets `H/H₀` of the stabilizer of `x`, identity first.
///
/// Candidates come from every component of `G`: for finite groups each
/// element is tested; otherwise `‖ρ(exp(ξ)c)x − x‖` is minimized from seeded
/// starts in each component `c`, and the results are closed under products.
pub fn stabilizer_cosets(rep: &Representation, x: &DVector<f64>, h_basis: &[AlgebraVector]) -> Vec<GroupElement> {
    let group = &rep.group;
    let scale = x.norm().max(1.0);
    let fixes = |g: &GroupElement| (rep.act(g, x) - x).norm() <= STABILIZER_POINT_TOL * scale;
    let mut candidates = Vec::new();
    if group.algebra_dim() == 0 {
        candidates.extend(group.component_reps.iter().map(|c| GroupElement(c.clone())).filter(|g| fixes(g)));
    } else {
        let k = group.algebra_dim();
        for (ci, c) in group.component_reps.iter().enumerate() {
            let rc = rep.rho(&GroupElement(c.clone())) * x;
            let f = |xi: &DVector<f64>| {
                let a = rep.delta_rho(&AlgebraVector::new(xi.clone()));
                let r = linalg::exp_matrix(&a) * &rc - x;
                let mut jac = DMatrix::zeros(rep.dim, k);
                for (i, b) in rep.delta_rho_basis.iter().enumerate() {
                    jac.set_column(i, &(linalg::dexp_directional(&a, b) * &rc));
                }
                (r, jac)
            };
            for s in lm_seeds(k, 24, std::f64::consts::PI, 0x51ce + ci as u64) {
                let (xi, res) = levenberg_marquardt(s, f, 200, 1e-13 * scale);
                if res <= STABILIZER_POINT_TOL * scale {
                    let g = group
                        .exp_map(&AlgebraVector::new(xi), 1.0)
                        .expect("finite iterate")
                        .compose(&GroupElement(c.clone()));
                    if fixes(&g) {
                        candidates.push(g);
                    }
                }
            }
        }
    }
    let mut reps = vec![group.identity()];
    for g in candidates {
        if coset_index(group, h_basis, &reps, &g).is_none() {
            reps.push(g);
        }
    }
    // close under products so that the cosets form the component group
    let cap = 64;
    let mut grew = true;
    while grew && reps.len() < cap {
        grew = false;
        let snapshot = reps.clone();
        'outer: for a in &snapshot {
            for b in &snapshot {
                let p = a.compose(b);
                if coset_index(group, h_basis, &reps, &p).is_none() {
                    reps.push(p);
                    grew = true;
                    if reps.len() >= cap {
                        break 'outer;
                    }
                }
            }
        }
    }
    reps
}

/// Flips columns so that the entry of largest magnitude is positive.
fn canonical_signs(mut m: DMatrix<f64>) -> DMatrix<f64> {
    for j in 0..m.ncols() {
        let col = m.column(j);
        let (imax, _) = col.iter().enumerate().fold((0, 0.0_f64), |(bi, bv), (i, v)| {
            if v.abs() > bv + 1e-12 {
                (i, v.abs())
            } else {
                (bi, bv)
            }
        });
        if m[(imax, j)] < 0.0 {
            m.column_mut(j).neg_mut();
        }
    }
    m
}

/// Optional perturbation of a slice towards the orbit directions.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub enum Tilt {
    /// `dim g × dim N`: slice direction `b_i` becomes `b_i + δρ(T e_i) x`.
    Matrix(DMatrix<f64>),
    /// Random `T` with entries in `[-amplitude, amplitude]`.
    Random { amplitude: f64, seed: u64 },
}

/// `S = x + span(basis)`.
#[derive(Clone, Debug)]
pub struct Slice {
    pub rep: Arc<Representation>,
    pub base_point: DVector<f64>,
    /// Orthonormal columns spanning `N`.
    pub basis: DMatrix<f64>,
    pub radius: f64,
    pub stab_algebra: Vec<AlgebraVector>,
    /// Coset representatives of `H/H₀`, identity first.
    pub stab_component_gens: Vec<GroupElement>,
    pub warnings: Vec<String>,
}

impl Slice {
    /// Normal slice: `N` is the orthogonal complement of the orbit tangent space.
    pub fn build(rep: &Arc<Representation>, x: &DVector<f64>, radius: f64) -> Result<Self> {
        rep.check_point(x)?;
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::InvalidInput(format!("slice radius {radius}")));
        }
        let mut warnings = Vec::new();
        let orthogonal = Self::metric_residual(rep);
        if orthogonal > 1e-10 {
            // the catalog only produces orthogonal representations
            return Err(Error::NoInvariantMetric { residual: orthogonal });
        }
        let stab = stabilizer_algebra(rep, x);
        warnings.extend(stab.warning.clone());
        let tangent = linalg::range_basis(&(rep.orbit_tangent_matrix(x) * rep.group.whitening().1), STABILIZER_SV_TOL * x.norm().max(1.0));
        let basis = canonical_signs(linalg::orthogonal_complement(&tangent, 1e-10));
        let cosets = stabilizer_cosets(rep, x, &stab.basis);
        let slice = Self {
            rep: rep.clone(),
            base_point: x.clone(),
            basis,
            radius,
            stab_algebra: stab.basis,
            stab_component_gens: cosets,
            warnings,
        };
        Ok(slice)
    }

    /// Slice through `x` with a prescribed transversal subspace.
    pub fn with_basis(template: &Slice, basis: &DMatrix<f64>) -> Result<Self> {
        let rep = &template.rep;
        if basis.nrows() != rep.dim || basis.ncols() != template.dim() {
            return Err(Error::dims("slice basis", template.dim(), basis.ncols()));
        }
        let ortho = linalg::range_basis(basis, 1e-10);
        if ortho.ncols() != template.dim() {
            return Err(Error::InvalidInput("slice basis is rank deficient".into()));
        }
        let tangent = rep.orbit_tangent_matrix(&template.base_point);
        let full = linalg::hstack(&[&ortho, &linalg::range_basis(&tangent, 1e-9)]);
        if linalg::rank(&full, 1e-8) != rep.dim {
            return Err(Error::InvalidInput("slice basis is not transverse to the orbit".into()));
        }
        let mut s = template.clone();
        s.basis = canonical_signs(ortho);
        Ok(s)
    }

    fn metric_residual(rep: &Representation) -> f64 {
        let n = rep.dim;
        let mut sampler = crate::rep::Sampler::new(17);
        sampler
            .group_elements(&rep.group, 6)
            .iter()
            .map(|g| {
                let r = rep.rho(g);
                linalg::max_abs(&(r.transpose() * &r - DMatrix::identity(n, n)))
            })
            .fold(0.0, f64::max)
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn group(&self) -> &Arc<GroupSpec> {
        &self.rep.group
    }

    pub fn point(&self, s: &DVector<f64>) -> DVector<f64> {
        &self.base_point + &self.basis * s
    }

    /// Coordinates of `y − x` in the slice basis.
    pub fn coords(&self, y: &DVector<f64>) -> DVector<f64> {
        self.basis.transpose() * (y - &self.base_point)
    }

    /// Distance of `y` from the affine slice.
    pub fn offset(&self, y: &DVector<f64>) -> f64 {
        let d = y - &self.base_point;
        (&d - &self.basis * (self.basis.transpose() * &d)).norm()
    }

    /// Matrix of `h ∈ H` acting on slice coordinates.
    pub fn slice_action(&self, h: &GroupElement) -> DMatrix<f64> {
        self.basis.transpose() * self.rep.rho(h) * &self.basis
    }

    /// Coset representatives together with `exp(η)` for each stabilizer direction.
    pub fn stabilizer_generators(&self) -> Vec<GroupElement> {
        let mut gens = self.stab_component_gens.clone();
        for eta in &self.stab_algebra {
            gens.push(self.group().exp_map(eta, 0.7).expect("finite generator"));
        }
        gens
    }

    /// `g = h ⊕ m` with `m` the invariant-orthogonal complement.
    pub fn splitting(&self) -> Result<Splitting> {
        equivariant_splitting(self.group(), &self.stab_algebra, &self.stabilizer_generators())
    }

    pub fn quadrature_plan(&self) -> Result<QuadraturePlan> {
        QuadraturePlan::new(self.group(), &self.stab_algebra, self.stab_component_gens.clone())
    }

    /// `max |⟨n, δρ(ξ_i)x⟩|` over the basis.
    pub fn orbit_orthogonality_residual(&self) -> f64 {
        let t = self.rep.orbit_tangent_matrix(&self.base_point);
        linalg::max_abs(&(self.basis.transpose() * t))
    }

    /// `max ‖δρ(η)x‖` over the stabilizer algebra basis.
    pub fn stabilizer_residual(&self) -> f64 {
        self.stab_algebra
            .iter()
            .map(|eta| (self.rep.delta_rho(eta) * &self.base_point).norm())
            .fold(0.0, f64::max)
    }

    /// How far the stabilizer generators move `N` off itself.
    pub fn h_stability_residual(&self) -> f64 {
        let mut worst = 0.0_f64;
        for g in self.stabilizer_generators() {
            let moved = self.rep.rho(&g) * &self.basis;
            worst = worst.max(linalg::projection_residual(&self.basis, &moved));
        }
        for eta in &self.stab_algebra {
            let moved = self.rep.delta_rho(eta) * &self.basis;
            worst = worst.max(linalg::projection_residual(&self.basis, &moved));
        }
        worst
    }

    /// Slice whose directions are tilted towards the orbit, averaged over `H`
    /// so that the new subspace is still `H`-stable.
    pub fn tilted(&self, tilt: &Tilt) -> Result<Self> {
        let group = self.group();
        let k = group.algebra_dim();
        let d = self.dim();
        let t = match tilt {
            Tilt::Matrix(t) => {
                if t.shape() != (k, d) {
                    return Err(Error::dims("tilt matrix rows", k, t.nrows()));
                }
                t.clone()
            }
            Tilt::Random { amplitude, seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                DMatrix::from_fn(k, d, |_, _| rng.gen_range(-amplitude.abs()..=amplitude.abs()))
            }
        };
        let plan = self.quadrature_plan()?;
        let degree = plan.max_frequency(|xi| group.ad_matrix(xi).expect("closed algebra"))
            + plan.max_frequency(|xi| self.basis.transpose() * self.rep.delta_rho(xi) * &self.basis);
        let quad = plan.build(group, plan.default_nodes(degree))?;
        let averaged = quad.average(k, d, |h| {
            let ad = group.adjoint_matrix(h)?;
            Ok(ad * &t * self.slice_action(&h.inverse()))
        })?;
        let mut cols = Vec::with_capacity(d);
        for i in 0..d {
            let xi = AlgebraVector::new(averaged.column(i).into_owned());
            cols.push(self.basis.column(i) + self.rep.delta_rho(&xi) * &self.base_point);
        }
        let tilted = linalg::columns_to_matrix(self.rep.dim, &cols);
        let s = Self::with_basis(self, &tilted)?;
        let res = s.h_stability_residual();
        if res > 1e-9 {
            return Err(Error::EquivarianceFailure {
                what: "tilted slice is not H-stable".into(),
                residual: res,
            });
        }
        Ok(s)
    }

    /// The slice `g·S` through `g·x`.
    pub fn translated(&self, g: &GroupElement) -> Result<Self> {
        let group = self.group();
        let stab_algebra = self
            .stab_algebra
            .iter()
            .map(|eta| group.adjoint(g, eta))
            .collect::<Result<Vec<_>>>()?;
        let gi = g.inverse();
        Ok(Self {
            rep: self.rep.clone(),
            base_point: self.rep.act(g, &self.base_point),
            basis: self.rep.rho(g) * &self.basis,
            radius: self.radius,
            stab_algebra,
            stab_component_gens: self.stab_component_gens.iter().map(|c| g.compose(c).compose(&gi)).collect(),
            warnings: self.warnings.clone(),
        })
    }

    /// `count` seeded points `x + B s` with `‖s‖ ≤ fraction · radius`.
    pub fn sample_points(&self, count: usize, fraction: f64, seed: u64) -> Vec<DVector<f64>> {
        let mut sampler = crate::rep::Sampler::new(seed);
        (0..count)
            .map(|_| self.point(&sampler.point_in_ball(self.dim(), fraction * self.radius)))
            .collect()
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SliceDecomposition {
    /// `X^S(y)` as a vector of `V` (lies in `N`).
    pub xs: DVector<f64>,
    /// `X^S(y)` in slice coordinates.
    pub xs_coords: DVector<f64>,
    /// `ψ^S_X(y) ∈ m`.
    pub psi: AlgebraVector,
    pub condition: f64,
}

fn decomposition_matrix(slice: &Slice, splitting: &Splitting, y: &DVector<f64>) -> DMatrix<f64> {
    let cols: Vec<DVector<f64>> = splitting.m_basis.iter().map(|m| slice.rep.delta_rho(m) * y).collect();
    linalg::hstack(&[&slice.basis, &linalg::columns_to_matrix(slice.rep.dim, &cols)])
}

fn check_on_slice(slice: &Slice, y: &DVector<f64>) -> Result<()> {
    slice.rep.check_point(y)?;
    let scale = y.norm().max(1.0);
    if slice.offset(y) > 1e-9 * scale {
        return Err(Error::InvalidInput(format!(
            "point is off the slice by {:.3e}",
            slice.offset(y)
        )));
    }
    if slice.coords(y).norm() > slice.radius * (1.0 + 1e-12) {
        return Err(Error::InvalidInput("point lies outside the slice radius".into()));
    }
    Ok(())
}

/// Solves `X(y) = v + δρ(ξ) y` for `v ∈ N`, `ξ ∈ m`.
pub fn slice_decompose(x_field: &VectorField, slice: &Slice, splitting: &Splitting, y: &DVector<f64>) -> Result<SliceDecomposition> {
    check_on_slice(slice, y)?;
    if slice.dim() + splitting.m_dim() != slice.rep.dim {
        return Err(Error::InvalidSplitting(format!(
            "dim N + dim m = {} + {} but dim V = {}",
            slice.dim(),
            splitting.m_dim(),
            slice.rep.dim
        )));
    }
    let m = decomposition_matrix(slice, splitting, y);
    let condition = linalg::condition_number(&m);
    if !condition.is_finite() || condition > SLICE_CONDITION_LIMIT {
        return Err(Error::SliceBoundary { condition });
    }
    let rhs = x_field.eval(y)?;
    let sol = m
        .lu()
        .solve(&rhs)
        .ok_or(Error::SliceBoundary { condition: f64::INFINITY })?;
    let d = slice.dim();
    let xs_coords = sol.rows(0, d).into_owned();
    let psi = splitting.from_m_coords(&sol.rows(d, splitting.m_dim()).into_owned());
    Ok(SliceDecomposition {
        xs: &slice.basis * &xs_coords,
        xs_coords,
        psi,
        condition,
    })
}

/// `f(y) = exp(ξ)`, `ξ ∈ m`, with `φ(y) = f(y)·y ∈ S₂`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Transition {
    pub xi: AlgebraVector,
    pub f: GroupElement,
    pub phi: DVector<f64>,
    pub residual: f64,
    pub iterations: usize,
}

fn transition_from(slice1: &Slice, slice2: &Slice, splitting: &Splitting, y: &DVector<f64>, start: &DVector<f64>) -> Result<Transition> {
    let rep = &slice1.rep;
    let group = &rep.group;
    let q2 = linalg::orthogonal_complement(&slice2.basis, 1e-10);
    let r = splitting.m_dim();
    if q2.ncols() != r {
        return Err(Error::NoOverlap(format!(
            "slice codimension {} differs from dim m = {r}",
            q2.ncols()
        )));
    }
    let dm: Vec<DMatrix<f64>> = splitting.m_basis.iter().map(|m| rep.delta_rho(m)).collect();
    let assemble = |c: &DVector<f64>| {
        let mut a = DMatrix::zeros(rep.dim, rep.dim);
        for (ci, mi) in c.iter().zip(&dm) {
            a += mi * *ci;
        }
        a
    };
    let constraint = |c: &DVector<f64>| q2.transpose() * (linalg::exp_matrix(&assemble(c)) * y - &slice2.base_point);
    let scale = y.norm().max(1.0);
    let mut c = start.clone();
    let mut f = constraint(&c);
    let mut iterations = 0;
    for it in 0..50 {
        iterations = it;
        if f.norm() <= 1e-15 * scale {
            break;
        }
        let a = assemble(&c);
        let mut jac = DMatrix::zeros(r, r);
        for (j, mj) in dm.iter().enumerate() {
            jac.set_column(j, &(q2.transpose() * linalg::dexp_directional(&a, mj) * y));
        }
        let Some(step) = jac.lu().solve(&(-&f)) else {
            return Err(Error::NoOverlap("singular transition Jacobian".into()));
        };
        // damped: halve until the residual decreases
        let mut lambda = 1.0;
        let mut improved = false;
        for _ in 0..20 {
            let trial = &c + &step * lambda;
            let ft = constraint(&trial);
            if ft.norm() < f.norm() {
                c = trial;
                f = ft;
                improved = true;
                break;
            }
            lambda *= 0.5;
        }
        if !improved {
            break;
        }
    }
    let residual = f.norm();
    if residual > TRANSITION_TOL * scale || c.iter().any(|v| !v.is_finite()) {
        return Err(Error::NoOverlap(format!("transition Newton stalled at residual {residual:.3e}")));
    }
    let xi = splitting.from_m_coords(&c);
    let fg = group.exp_map(&xi, 1.0)?;
    let phi = rep.act(&fg, y);
    Ok(Transition {
        xi,
        f: fg,
        phi,
        residual,
        iterations,
    })
}

pub fn transition_map(slice1: &Slice, slice2: &Slice, splitting: &Splitting, y: &DVector<f64>) -> Result<Transition> {
    check_on_slice(slice1, y)?;
    transition_from(slice1, slice2, splitting, y, &DVector::zeros(splitting.m_dim()))
}

/// `f`, `Df_y(v)` and `Dφ_y(v)` by Richardson-extrapolated differences.
#[derive(Clone, Debug)]
pub struct TransitionJet {
    pub at: Transition,
    /// `Df_y(v)` as an ambient matrix.
    pub df: DMatrix<f64>,
    /// `Dφ_y(v)` from direct differences of `φ`.
    pub dphi: DVector<f64>,
    pub disagreement: f64,
    pub richardson_error: f64,
}

pub fn transition_jet(slice1: &Slice, slice2: &Slice, splitting: &Splitting, y: &DVector<f64>, v: &DVector<f64>) -> Result<TransitionJet> {
    let at = transition_map(slice1, slice2, splitting, y)?;
    if v.norm() == 0.0 {
        let n = slice1.group().ambient_dim;
        return Ok(TransitionJet {
            at,
            df: DMatrix::zeros(n, n),
            dphi: DVector::zeros(v.len()),
            disagreement: 0.0,
            richardson_error: 0.0,
        });
    }
    let tangent_off = (v - &slice1.basis * (slice1.basis.transpose() * v)).norm();
    if tangent_off > 1e-9 * v.norm() {
        return Err(Error::InvalidInput("direction is not tangent to the slice".into()));
    }
    let start = splitting.decompose(&at.xi).1;
    let n = slice1.group().ambient_dim;
    let nv = slice1.rep.dim;
    // scale the step to the direction so that the perturbation has size h
    let h = TRANSITION_FD_STEP / v.norm();
    let jet = diff::richardson(
        |t| {
            let tr = transition_from(slice1, slice2, splitting, &(y + v * t), &start)?;
            let mut out = DVector::zeros(n * n + nv);
            out.rows_mut(0, n * n).copy_from(&DVector::from_column_slice(tr.f.0.as_slice()));
            out.rows_mut(n * n, nv).copy_from(&tr.phi);
            Ok(out)
        },
        h,
    )?;
    if jet.disagreement > FD_DISAGREEMENT_LIMIT {
        return Err(Error::UnreliableDerivative {
            disagreement: jet.disagreement,
        });
    }
    let df = DMatrix::from_column_slice(n, n, jet.value.rows(0, n * n).as_slice());
    let dphi = jet.value.rows(n * n, nv).into_owned();
    Ok(TransitionJet {
        at,
        df,
        dphi,
        disagreement: jet.disagreement,
        richardson_error: jet.error,
    })
}

/// `Tφ_y(v)` by the group-theoretic formula and by direct differences.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TransitionDifferential {
    /// `ρ(f)[δρ(f⁻¹ Df_y(v))·y + v]`.
    pub formula: DVector<f64>,
    pub direct: DVector<f64>,
    pub disagreement: f64,
}

impl TransitionDifferential {
    pub fn mismatch(&self) -> f64 {
        (&self.formula - &self.direct).norm()
    }
}

fn pulled_back_derivative(group: &GroupSpec, f: &GroupElement, df: &DMatrix<f64>) -> Result<AlgebraVector> {
    group.coords_of(&(f.inverse().matrix() * df))
}

pub fn transition_differential(
    slice1: &Slice,
    slice2: &Slice,
    splitting: &Splitting,
    y: &DVector<f64>,
    v: &DVector<f64>,
) -> Result<TransitionDifferential> {
    let jet = transition_jet(slice1, slice2, splitting, y, v)?;
    let rep = &slice1.rep;
    let mu = pulled_back_derivative(&rep.group, &jet.at.f, &jet.df)?;
    let formula = rep.rho(&jet.at.f) * (rep.delta_rho(&mu) * y + v);
    Ok(TransitionDifferential {
        formula,
        direct: jet.dphi,
        disagreement: jet.disagreement,
    })
}

/// Matrix of `Tφ_y` from slice-1 coordinates to slice-2 coordinates.
pub fn transition_differential_matrix(slice1: &Slice, slice2: &Slice, splitting: &Splitting, y: &DVector<f64>) -> Result<DMatrix<f64>> {
    let d = slice1.dim();
    let mut t = DMatrix::zeros(slice2.dim(), d);
    for j in 0..d {
        let v = slice1.basis.column(j).into_owned();
        let td = transition_differential(slice1, slice2, splitting, y, &v)?;
        t.set_column(j, &(slice2.basis.transpose() * td.formula));
    }
    Ok(t)
}

/// `B: m₁ → h` with `m₂ = {v + B v}`; columns are algebra coordinates of `B(m₁_j)`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SplittingChange {
    pub b: DMatrix<f64>,
}

impl SplittingChange {
    pub fn apply(&self, split1: &Splitting, psi1: &AlgebraVector) -> AlgebraVector {
        let (_, m) = split1.decompose(psi1);
        AlgebraVector::new(&self.b * m)
    }
}

pub fn splitting_change(group: &GroupSpec, split1: &Splitting, split2: &Splitting) -> Result<SplittingChange> {
    if split1.h_dim() != split2.h_dim() {
        return Err(Error::InvalidSplitting("the two splittings have different h".into()));
    }
    let (w, _) = group.whitening();
    let span = |vs: &[AlgebraVector]| {
        let cols: Vec<DVector<f64>> = vs.iter().map(|v| &w * &v.coords).collect();
        linalg::range_basis(&linalg::columns_to_matrix(group.algebra_dim(), &cols), 1e-12)
    };
    if split1.h_dim() > 0 && linalg::subspace_distance(&span(&split1.h_basis), &span(&split2.h_basis)) > 1e-10 {
        return Err(Error::InvalidSplitting("the two splittings have different h".into()));
    }
    let cols: Vec<DVector<f64>> = split1
        .m_basis
        .iter()
        .map(|v| -split2.h_part(v).coords)
        .collect();
    Ok(SplittingChange {
        b: linalg::columns_to_matrix(group.algebra_dim(), &cols),
    })
}

#[derive(Clone, Debug)]
pub struct SplittingWitness {
    pub change: SplittingChange,
    /// `φ = B ∘ ψ₁` at each sample.
    pub phi: Vec<AlgebraVector>,
    /// `max ‖ψ₂ − (ψ₁ + Bψ₁)‖` when `ψ₂` is supplied.
    pub psi2_residual: Option<f64>,
}

pub fn splitting_change_witness(
    group: &GroupSpec,
    split1: &Splitting,
    split2: &Splitting,
    psi1: &[AlgebraVector],
    psi2: Option<&[AlgebraVector]>,
) -> Result<SplittingWitness> {
    let change = splitting_change(group, split1, split2)?;
    let phi: Vec<AlgebraVector> = psi1.iter().map(|p| change.apply(split1, p)).collect();
    let psi2_residual = psi2.map(|p2| {
        p2.iter()
            .zip(psi1.iter().zip(&phi))
            .map(|(b, (a, f))| group.norm(&b.sub(&a.add(f))))
            .fold(0.0, f64::max)
    });
    Ok(SplittingWitness {
        change,
        phi,
        psi2_residual,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SliceChangeSample {
    pub y: DVector<f64>,
    pub y_prime: DVector<f64>,
    pub nu: AlgebraVector,
    /// `h`-coefficients of `ν(y′)`.
    pub nu_h: DVector<f64>,
    /// Invariant norm of the `m`-part of `ν(y′)`.
    pub membership: f64,
    /// `‖X^{S′}(y′) − Tφ(X^S(y)) − δρ(ν)y′‖`.
    pub identity: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SliceChangeWitness {
    pub samples: Vec<SliceChangeSample>,
    pub membership_residual: f64,
    pub identity_residual: f64,
}

/// `ν(y′) = Ad(f)(ψ^S(y) − μ(y)) − ψ^{S′}(y′)` with
/// `μ(y) = f(y)⁻¹ Df_y(X^S(y))`, at each sample `y ∈ S`.
pub fn slice_change_witness(
    x_field: &VectorField,
    slice1: &Slice,
    slice2: &Slice,
    splitting: &Splitting,
    points: &[DVector<f64>],
) -> Result<SliceChangeWitness> {
    let rep = &slice1.rep;
    let group = &rep.group;
    let samples = points
        .iter()
        .map(|y| -> Result<SliceChangeSample> {
            let d1 = slice_decompose(x_field, slice1, splitting, y)?;
            let jet = transition_jet(slice1, slice2, splitting, y, &d1.xs)?;
            let y2 = jet.at.phi.clone();
            let d2 = slice_decompose(x_field, slice2, splitting, &y2)?;
            let mu = pulled_back_derivative(group, &jet.at.f, &jet.df)?;
            let nu = group.adjoint(&jet.at.f, &d1.psi.sub(&mu))?.sub(&d2.psi);
            let (nu_h, nu_m) = splitting.decompose(&nu);
            let membership = group.norm(&splitting.from_m_coords(&nu_m));
            let identity = (&d2.xs - &jet.dphi - rep.delta_rho(&nu) * &y2).norm();
            Ok(SliceChangeSample {
                y: y.clone(),
                y_prime: y2,
                nu,
                nu_h,
                membership,
                identity,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SliceChangeWitness {
        membership_residual: samples.iter().map(|s| s.membership).fold(0.0, f64::max),
        identity_residual: samples.iter().map(|s| s.identity).fold(0.0, f64::max),
        samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rep::{induced_field, Sampler};
    use nalgebra::DMatrix;

    fn rep(group: &str, spec: &str) -> Arc<Representation> {
        Representation::parse(GroupSpec::by_name(group).unwrap(), spec).unwrap()
    }

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    #[test]
    fn example_one_census() {
        let r = rep("O3", "diagonal:2");
        let dims: Vec<usize> = [v(&[0.0; 6]), v(&[1.0, 0.0, 0.0, 0.0, 0.0, 0.0]), v(&[1.0, 0.0, 0.0, 0.0, 1.0, 0.0])]
            .iter()
            .map(|x| stabilizer_algebra(&r, x).basis.len())
            .collect();
        assert_eq!(dims, [3, 1, 0]);
    }

    #[test]
    fn stabilizer_components_of_example_one() {
        let r = rep("O3", "diagonal:2");
        // (e1, 0): H ≅ O(2), two components
        let x = v(&[1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let s = Slice::build(&r, &x, 0.5).unwrap();
        assert_eq!(s.stab_component_gens.len(), 2);
        let c = &s.stab_component_gens[1];
        assert!((r.act(c, &x) - &x).norm() < 1e-9);
        assert!(c.0.determinant() < 0.0 || !in_identity_component(&r.group, &s.stab_algebra, c));
        // (e1, e2): H ≅ {±1}
        let x = v(&[1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        let s = Slice::build(&r, &x, 0.5).unwrap();
        assert_eq!(s.stab_component_gens.len(), 2);
        let expected = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 1.0, -1.0]));
        assert!((s.stab_component_gens[1].0.clone() - expected).norm() < 1e-8);
        // SO(3) at (e1, 0): connected
        let s = Slice::build(&rep("SO3", "diagonal:2"), &v(&[1.0, 0.0, 0.0, 0.0, 0.0, 0.0]), 0.5).unwrap();
        assert_eq!(s.stab_component_gens.len(), 1);
    }

    #[test]
    fn slice_examples() {
        let r = rep("SO2", "standard");
        let s = Slice::build(&r, &v(&[1.0, 0.0]), 0.5).unwrap();
        assert_eq!(s.basis, DMatrix::from_column_slice(2, 1, &[1.0, 0.0]));

        let r6 = rep("O3", "diagonal:2");
        let s = Slice::build(&r6, &v(&[1.0, 0.0, 0.0, 0.0, 1.0, 0.0]), 0.5).unwrap();
        assert_eq!(s.dim(), 3);
        assert!(s.orbit_orthogonality_residual() < 1e-10);
        assert!(s.h_stability_residual() < 1e-10);

        let s = Slice::build(&r6, &v(&[0.0; 6]), 0.5).unwrap();
        assert_eq!(s.dim(), 6);

        let s = Slice::build(&r6, &v(&[1.0, 0.0, 0.0, 0.0, 0.0, 0.0]), 0.5).unwrap();
        assert_eq!(s.dim(), 4);
        assert!(s.h_stability_residual() < 1e-10);
        assert!(s.stabilizer_residual() < 1e-12);
    }

    #[test]
    fn decomposition_examples() {
        let r = rep("SO2", "standard");
        let s = Slice::build(&r, &v(&[1.0, 0.0]), 1.0).unwrap();
        let split = s.splitting().unwrap();
        let x = VectorField::linear(&r, DMatrix::from_row_slice(2, 2, &[1.0, -2.0, 2.0, 1.0])).unwrap();
        let d = slice_decompose(&x, &s, &split, &v(&[1.5, 0.0])).unwrap();
        assert!((d.xs - v(&[1.5, 0.0])).norm() < 1e-14);
        assert!((d.psi.coords[0] - 2.0).abs() < 1e-14);

        let horizontal = induced_field(&r, &AlgebraVector::from_slice(&[0.4])).unwrap();
        let d = slice_decompose(&horizontal, &s, &split, &v(&[1.2, 0.0])).unwrap();
        assert!(d.xs.norm() < 1e-15);
        assert!((d.psi.coords[0] - 0.4).abs() < 1e-15);

        let r6 = rep("O3", "diagonal:2");
        let x0 = v(&[1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        let s = Slice::build(&r6, &x0, 0.5).unwrap();
        let split = s.splitting().unwrap();
        let kepler = VectorField::central_force(&r6, 1.0, 3.0, 1.0).unwrap();
        let d = slice_decompose(&kepler, &s, &split, &x0).unwrap();
        assert!(d.xs.norm() < 1e-14);
        assert!((d.psi.coords - v(&[0.0, 0.0, 1.0])).norm() < 1e-14);
    }

    #[test]
    fn reconstruction_and_equivariance_of_the_decomposition() {
        let r6 = rep("O3", "diagonal:2");
        let x0 = v(&[1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let s = Slice::build(&r6, &x0, 0.4).unwrap();
        let split = s.splitting().unwrap();
        let x = VectorField::central_force(&r6, 1.0, 0.0, 1.0)
            .unwrap()
            .add(&crate::rep::induced_field_from_map(&crate::rep::EquivariantMap::angular_momentum(&r6).unwrap()))
            .unwrap();
        let mut sampler = Sampler::new(12);
        let gs = sampler.group_elements(&r6.group, 4);
        for y in s.sample_points(5, 0.8, 3) {
            let d = slice_decompose(&x, &s, &split, &y).unwrap();
            for g in &gs {
                let gy = r6.act(g, &y);
                let rhs = r6.rho(g) * &d.xs + r6.delta_rho(&r6.group.adjoint(g, &d.psi).unwrap()) * &gy;
                assert!((x.eval(&gy).unwrap() - rhs).norm() < 1e-9);
            }
            for h in s.stabilizer_generators() {
                let hy = r6.act(&h, &y);
                let dh = slice_decompose(&x, &s, &split, &hy).unwrap();
                assert!((dh.xs - r6.rho(&h) * &d.xs).norm() < 1e-9);
                let ad = r6.group.adjoint(&h, &d.psi).unwrap();
                assert!(r6.group.norm(&dh.psi.sub(&ad)) < 1e-9);
            }
        }
    }

    #[test]
    fn slice_boundary_detected() {
        let r = rep("SO2", "standard");
        let s = Slice::build(&r, &v(&[1.0, 0.0]), 2.0).unwrap();
        let split = s.splitting().unwrap();
        let x = VectorField::zero(&r);
        // at y = -x + x = 0 the orbit direction degenerates
        let err = slice_decompose(&x, &s, &split, &v(&[1e-12, 0.0]));
        assert!(matches!(err, Err(Error::SliceBoundary { .. })));
    }

    fn tilted_line(alpha: f64) -> (Slice, Slice, Splitting) {
        let r = rep("SO2", "standard");
        let s1 = Slice::build(&r, &v(&[1.0, 0.0]), 0.5).unwrap();
        let s2 = s1.tilted(&Tilt::Matrix(DMatrix::from_element(1, 1, alpha.tan()))).unwrap();
        let split = s1.splitting().unwrap();
        (s1, s2, split)
    }

    #[test]
    fn transition_on_tilted_line() {
        let alpha = 0.2;
        let (s1, s2, split) = tilted_line(alpha);
        assert!((s2.basis.clone() - DMatrix::from_column_slice(2, 1, &[alpha.cos(), alpha.sin()])).norm() < 1e-14);
        let same = transition_map(&s1, &s1, &split, &v(&[1.3, 0.0])).unwrap();
        assert_eq!(same.f, GroupElement::identity(2));
        let at_x = transition_map(&s1, &s2, &split, &v(&[1.0, 0.0])).unwrap();
        assert!(at_x.xi.coords[0].abs() < 1e-15);
        for sval in [-0.3, 0.1, 0.4] {
            let r = 1.0 + sval;
            let tr = transition_map(&s1, &s2, &split, &v(&[r, 0.0])).unwrap();
            // closed form: the circle of radius r meets (1,0) + u (cos α, sin α)
            let u = -alpha.cos() + (alpha.cos().powi(2) - 1.0 + r * r).sqrt();
            let p = v(&[1.0 + u * alpha.cos(), u * alpha.sin()]);
            assert!((tr.phi - &p).norm() < 1e-12);
            assert!((tr.xi.coords[0] - p[1].atan2(p[0])).abs() < 1e-12);
        }
    }

    #[test]
    fn transition_differential_on_tilted_line() {
        let alpha = 0.2;
        let (s1, s2, split) = tilted_line(alpha);
        let x = v(&[1.0, 0.0]);
        let td = transition_differential(&s1, &s2, &split, &x, &v(&[1.0, 0.0])).unwrap();
        let expected = v(&[alpha.cos(), alpha.sin()]) / alpha.cos();
        assert!((&td.formula - &expected).norm() < 1e-9);
        assert!(td.mismatch() < 1e-9);
        let id = transition_differential(&s1, &s1, &split, &v(&[1.2, 0.0]), &v(&[1.0, 0.0])).unwrap();
        assert!((id.formula - v(&[1.0, 0.0])).norm() < 1e-9);
    }

    #[test]
    fn transition_is_h_equivariant_and_formula_matches_fd() {
        let r6 = rep("O3", "diagonal:2");
        let x0 = v(&[1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let s1 = Slice::build(&r6, &x0, 0.3).unwrap();
        let s2 = s1.tilted(&Tilt::Random { amplitude: 0.3, seed: 4 }).unwrap();
        let split = s1.splitting().unwrap();
        let mut sampler = Sampler::new(6);
        for y in s1.sample_points(6, 0.7, 8) {
            let tr = transition_map(&s1, &s2, &split, &y).unwrap();
            assert!(s2.offset(&tr.phi) < 1e-11);
            for h in s1.stabilizer_generators() {
                let th = transition_map(&s1, &s2, &split, &r6.act(&h, &y)).unwrap();
                assert!((th.phi - r6.act(&h, &tr.phi)).norm() < 1e-9);
                let conj = h.compose(&tr.f).compose(&h.inverse());
                assert!(th.f.distance(&conj) < 1e-9);
            }
            let dir = &s1.basis * sampler.point_in_ball(s1.dim(), 1.0);
            let td = transition_differential(&s1, &s2, &split, &y, &dir).unwrap();
            assert!(td.mismatch() < 1e-5, "mismatch {}", td.mismatch());
        }
    }

    #[test]
    fn splitting_change_examples() {
        let g = GroupSpec::by_name("SO3").unwrap();
        let l = |i| AlgebraVector::basis(3, i);
        let s1 = Splitting::with_complement(&g, vec![l(0)], vec![l(1), l(2)], &[]).unwrap();
        let s2 = Splitting::with_complement(&g, vec![l(0)], vec![l(1).add(&l(0)), l(2)], &[]).unwrap();
        let c = splitting_change(&g, &s1, &s2).unwrap();
        assert!((c.apply(&s1, &l(1)).coords - l(0).coords).norm() < 1e-14);
        assert!(c.apply(&s1, &l(2)).coords.norm() < 1e-14);
        let same = splitting_change(&g, &s1, &s1).unwrap();
        assert!(same.b.norm() < 1e-15);

        let other_h = Splitting::with_complement(&g, vec![l(2)], vec![l(0), l(1)], &[]).unwrap();
        assert!(matches!(splitting_change(&g, &s1, &other_h), Err(Error::InvalidSplitting(_))));
    }

    #[test]
    fn splitting_change_consistency_on_slice() {
        // T2 on C², x = (1, 0): h = span{e2} acts on the second factor
        let r = rep("T2", "standard");
        let x0 = v(&[1.0, 0.0, 0.0, 0.0]);
        let s = Slice::build(&r, &x0, 0.5).unwrap();
        let split1 = s.splitting().unwrap();
        let g = r.group.clone();
        let m2 = AlgebraVector::from_slice(&[1.0, 0.5]);
        let split2 = Splitting::with_complement(&g, split1.h_basis.clone(), vec![m2], &s.stabilizer_generators()).unwrap();
        let x = VectorField::custom(&r, "test", |p| {
            let (a, b, c, d) = (p[0], p[1], p[2], p[3]);
            let r2 = a * a + b * b;
            DVector::from_vec(vec![(1.0 - r2) * a - b, (1.0 - r2) * b + a, -0.5 * c - d, -0.5 * d + c])
        });
        let pts = s.sample_points(6, 0.8, 1);
        let d1: Vec<_> = pts.iter().map(|y| slice_decompose(&x, &s, &split1, y).unwrap()).collect();
        let d2: Vec<_> = pts.iter().map(|y| slice_decompose(&x, &s, &split2, y).unwrap()).collect();
        let psi1: Vec<_> = d1.iter().map(|d| d.psi.clone()).collect();
        let psi2: Vec<_> = d2.iter().map(|d| d.psi.clone()).collect();
        let w = splitting_change_witness(&g, &split1, &split2, &psi1, Some(&psi2)).unwrap();
        assert!(w.psi2_residual.unwrap() < 1e-10);
        for ((y, a), (b, phi)) in pts.iter().zip(&d1).zip(d2.iter().zip(&w.phi)) {
            assert!((&a.xs - &b.xs - r.delta_rho(phi) * y).norm() < 1e-10);
        }
    }

    #[test]
    fn slice_change_witness_so2_and_o3() {
        let (s1, s2, split) = tilted_line(0.15);
        let r = s1.rep.clone();
        let x = VectorField::custom(&r, "(1-|v|^2)v + 2Jv", |p| {
            let r2 = p.norm_squared();
            DVector::from_vec(vec![(1.0 - r2) * p[0] - 2.0 * p[1], (1.0 - r2) * p[1] + 2.0 * p[0]])
        });
        let same = slice_change_witness(&x, &s1, &s1, &split, &s1.sample_points(5, 0.5, 2)).unwrap();
        assert!(same.samples.iter().all(|s| s.nu.coords.norm() < 1e-9));
        let w = slice_change_witness(&x, &s1, &s2, &split, &s1.sample_points(10, 0.5, 2)).unwrap();
        assert!(w.membership_residual < 1e-8);
        assert!(w.identity_residual < 1e-7);

        let r6 = rep("O3", "diagonal:2");
        let x0 = v(&[1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let s1 = Slice::build(&r6, &x0, 0.3).unwrap();
        let s2 = s1.tilted(&Tilt::Random { amplitude: 0.25, seed: 9 }).unwrap();
        let split = s1.splitting().unwrap();
        let x = VectorField::central_force(&r6, 1.0, 0.0, 1.0).unwrap();
        let w = slice_change_witness(&x, &s1, &s2, &split, &s1.sample_points(10, 0.6, 5)).unwrap();
        assert!(w.membership_residual < 1e-8, "{}", w.membership_residual);
        assert!(w.identity_residual < 1e-7, "{}", w.identity_residual);
        assert!(w.samples.iter().all(|s| s.nu_h.len() == 1));
    }
}
