//! Compact matrix Lie groups: exponential, adjoint action, invariant inner
//! products and `Ad(H)`-equivariant splittings `g = h ⊕ m`.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

/// Residual threshold when re-expressing a matrix in the algebra basis.
pub const CLOSURE_TOL: f64 = 1e-8;

/// Coordinates of a Lie algebra element in the basis of its [`GroupSpec`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlgebraVector {
    pub coords: DVector<f64>,
}

impl AlgebraVector {
    pub fn new(coords: DVector<f64>) -> Self {
        Self { coords }
    }

    pub fn from_slice(coords: &[f64]) -> Self {
        Self::new(DVector::from_column_slice(coords))
    }

    pub fn zero(dim: usize) -> Self {
        Self::new(DVector::zeros(dim))
    }

    pub fn basis(dim: usize, i: usize) -> Self {
        let mut v = DVector::zeros(dim);
        v[i] = 1.0;
        Self::new(v)
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn scale(&self, s: f64) -> Self {
        Self::new(&self.coords * s)
    }

    pub fn add(&self, other: &Self) -> Self {
        Self::new(&self.coords + &other.coords)
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self::new(&self.coords - &other.coords)
    }

    pub fn is_finite(&self) -> bool {
        self.coords.iter().all(|c| c.is_finite())
    }
}

/// An element of a matrix group, stored as its `n×n` matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupElement(pub DMatrix<f64>);

impl GroupElement {
    pub fn identity(n: usize) -> Self {
        Self(DMatrix::identity(n, n))
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn compose(&self, other: &Self) -> Self {
        Self(&self.0 * &other.0)
    }

    pub fn inverse(&self) -> Self {
        // Every catalog group is orthogonal; fall back to LU for user data.
        let n = self.0.nrows();
        let t = self.0.transpose();
        if linalg::max_abs(&(&t * &self.0 - DMatrix::identity(n, n))) < 1e-12 {
            return Self(t);
        }
        Self(
            self.0
                .clone()
                .try_inverse()
                .unwrap_or_else(|| DMatrix::from_element(n, n, f64::NAN)),
        )
    }

    pub fn distance(&self, other: &Self) -> f64 {
        (&self.0 - &other.0).norm()
    }
}

/// Which membership test and structure a group obeys.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum GroupFamily {
    /// `O(n)` (`special == false`) or `SO(n)`.
    Orthogonal { special: bool },
    /// `T^k` realised as block-diagonal 2×2 rotations.
    Torus { rank: usize },
    /// A finite subgroup of `O(n)`, listed element by element.
    Finite { elements: Vec<DMatrix<f64>> },
}

/// A compact matrix Lie group.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GroupSpec {
    pub name: String,
    pub ambient_dim: usize,
    pub algebra_basis: Vec<DMatrix<f64>>,
    /// One representative per connected component, identity first.
    pub component_reps: Vec<DMatrix<f64>>,
    pub membership_tol: f64,
    pub family: GroupFamily,
    /// Gram matrix of the invariant inner product in basis coordinates.
    gram: DMatrix<f64>,
    /// Pseudo-inverse of the matrix whose columns are the flattened basis.
    coord_solver: DMatrix<f64>,
    abelian: bool,
}

impl fmt::Display for GroupSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} (n = {}, dim g = {}, {} component(s))",
            self.name,
            self.ambient_dim,
            self.algebra_basis.len(),
            self.component_reps.len()
        )
    }
}

pub fn so2_generator() -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0])
}

/// The standard basis `L1, L2, L3` of `so(3)` with `[L1, L2] = L3`.
pub fn so3_generators() -> [DMatrix<f64>; 3] {
    [
        DMatrix::from_row_slice(3, 3, &[0.0, 0.0, 0.0, 0.0, 0.0, -1.0, 0.0, 1.0, 0.0]),
        DMatrix::from_row_slice(3, 3, &[0.0, 0.0, 1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0]),
        DMatrix::from_row_slice(3, 3, &[0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0]),
    ]
}

/// `hat(w)` with `hat(w) u = w × u`.
pub fn hat3(w: &[f64]) -> DMatrix<f64> {
    DMatrix::from_row_slice(3, 3, &[0.0, -w[2], w[1], w[2], 0.0, -w[0], -w[1], w[0], 0.0])
}

fn rotation2(theta: f64) -> DMatrix<f64> {
    let (s, c) = theta.sin_cos();
    DMatrix::from_row_slice(2, 2, &[c, -s, s, c])
}

/// Catalog names accepted by [`GroupSpec::by_name`].
pub const CATALOG: &[&str] = &["SO2", "O2", "SO3", "O3", "T1", "T2", "T3", "Zn:k", "Dn:k"];

impl GroupSpec {
    /// Builds a group from raw data and checks the structural invariants.
    pub fn new(
        name: &str,
        ambient_dim: usize,
        algebra_basis: Vec<DMatrix<f64>>,
        component_reps: Vec<DMatrix<f64>>,
        membership_tol: f64,
        family: GroupFamily,
    ) -> Result<Self> {
        if ambient_dim == 0 {
            return Err(Error::InvalidInput("ambient dimension must be positive".into()));
        }
        for b in algebra_basis.iter().chain(component_reps.iter()) {
            if b.shape() != (ambient_dim, ambient_dim) {
                return Err(Error::dims("group matrix", ambient_dim, b.nrows()));
            }
            if b.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidInput("non-finite group data".into()));
            }
        }
        let n2 = ambient_dim * ambient_dim;
        let k = algebra_basis.len();
        let mut flat = DMatrix::zeros(n2, k);
        for (j, b) in algebra_basis.iter().enumerate() {
            flat.set_column(j, &DVector::from_column_slice(b.as_slice()));
        }
        let coord_solver = if k == 0 {
            DMatrix::zeros(0, n2)
        } else {
            flat.clone()
                .pseudo_inverse(1e-12)
                .map_err(|e| Error::InvalidInput(e.to_string()))?
        };
        if k > 0 && linalg::rank(&flat, 1e-10) < k {
            return Err(Error::InvalidInput("algebra basis is linearly dependent".into()));
        }
        // -1/2 tr(xi eta) is Ad-invariant and positive definite on compact
        // orthogonal algebras; on the torus basis it is the Euclidean form.
        let gram = DMatrix::from_fn(k, k, |i, j| -0.5 * (&algebra_basis[i] * &algebra_basis[j]).trace());
        let abelian = algebra_basis
            .iter()
            .all(|a| algebra_basis.iter().all(|b| linalg::max_abs(&(a * b - b * a)) < 1e-14));
        let spec = Self {
            abelian,
            name: name.to_string(),
            ambient_dim,
            algebra_basis,
            component_reps,
            membership_tol,
            family,
            gram,
            coord_solver,
        };
        spec.validate()?;
        Ok(spec)
    }

    fn validate(&self) -> Result<()> {
        for b in &self.algebra_basis {
            if linalg::max_abs(&(b + b.transpose())) > 1e-12 {
                return Err(Error::InvalidInput(format!(
                    "{}: algebra basis element violates xi + xi^T = 0",
                    self.name
                )));
            }
        }
        for a in &self.algebra_basis {
            for b in &self.algebra_basis {
                let br = a * b - b * a;
                let residual = self.closure_residual(&br);
                if residual > 1e-10 {
                    return Err(Error::ClosureViolation { residual });
                }
            }
        }
        if self.gram.nrows() > 0 && self.gram.clone().cholesky().is_none() {
            return Err(Error::InvalidInput("invariant form is not positive definite".into()));
        }
        if self.component_reps.is_empty() {
            return Err(Error::InvalidInput("at least the identity component is required".into()));
        }
        let n = self.ambient_dim;
        if linalg::max_abs(&(&self.component_reps[0] - DMatrix::identity(n, n))) > 0.0 {
            return Err(Error::InvalidInput("first component representative must be I".into()));
        }
        for c in &self.component_reps {
            if !self.is_member(&GroupElement(c.clone())) {
                return Err(Error::InvalidInput(format!(
                    "{}: component representative fails the membership test",
                    self.name
                )));
            }
        }
        Ok(())
    }

    /// Resolves a catalog name: `SO2`, `O2`, `SO3`, `O3`, `T<k>`, `Zn:<k>`, `Dn:<k>`.
    pub fn by_name(name: &str) -> Result<Arc<Self>> {
        let tol = 1e-10;
        let spec = match name {
            "SO2" => Self::new(
                name,
                2,
                vec![so2_generator()],
                vec![DMatrix::identity(2, 2)],
                tol,
                GroupFamily::Orthogonal { special: true },
            )?,
            "O2" => Self::new(
                name,
                2,
                vec![so2_generator()],
                vec![DMatrix::identity(2, 2), DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -1.0]))],
                tol,
                GroupFamily::Orthogonal { special: false },
            )?,
            "SO3" => Self::new(
                name,
                3,
                so3_generators().to_vec(),
                vec![DMatrix::identity(3, 3)],
                tol,
                GroupFamily::Orthogonal { special: true },
            )?,
            "O3" => Self::new(
                name,
                3,
                so3_generators().to_vec(),
                vec![DMatrix::identity(3, 3), -DMatrix::<f64>::identity(3, 3)],
                tol,
                GroupFamily::Orthogonal { special: false },
            )?,
            _ => {
                if let Some(k) = name.strip_prefix('T') {
                    let rank: usize = k.parse().map_err(|_| Error::UnknownGroup(name.into()))?;
                    Self::torus(rank)?
                } else if let Some(k) = name.strip_prefix("Zn:") {
                    let order: usize = k.parse().map_err(|_| Error::UnknownGroup(name.into()))?;
                    Self::cyclic(order)?
                } else if let Some(k) = name.strip_prefix("Dn:") {
                    let order: usize = k.parse().map_err(|_| Error::UnknownGroup(name.into()))?;
                    Self::dihedral(order)?
                } else {
                    return Err(Error::UnknownGroup(name.into()));
                }
            }
        };
        Ok(Arc::new(spec))
    }

    pub fn torus(rank: usize) -> Result<Self> {
        if rank == 0 {
            return Err(Error::UnknownGroup("T0".into()));
        }
        let n = 2 * rank;
        let basis = (0..rank)
            .map(|k| {
                let mut b = DMatrix::zeros(n, n);
                b.view_mut((2 * k, 2 * k), (2, 2)).copy_from(&so2_generator());
                b
            })
            .collect();
        Self::new(
            &format!("T{rank}"),
            n,
            basis,
            vec![DMatrix::identity(n, n)],
            1e-10,
            GroupFamily::Torus { rank },
        )
    }

    /// `Z/k`. Orders 1 and 2 act on the line (`{1}` and `{±1}`); larger orders
    /// are rotations of the plane.
    pub fn cyclic(order: usize) -> Result<Self> {
        let elements: Vec<DMatrix<f64>> = match order {
            0 => return Err(Error::UnknownGroup("Zn:0".into())),
            1 => vec![DMatrix::identity(1, 1)],
            2 => vec![DMatrix::identity(1, 1), DMatrix::from_element(1, 1, -1.0)],
            k => (0..k).map(|j| rotation2(2.0 * PI * j as f64 / k as f64)).collect(),
        };
        Self::finite(&format!("Zn:{order}"), elements)
    }

    /// Dihedral group of order `2k` acting on the plane.
    pub fn dihedral(order: usize) -> Result<Self> {
        if order == 0 {
            return Err(Error::UnknownGroup("Dn:0".into()));
        }
        let reflection = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        let mut elements: Vec<DMatrix<f64>> = (0..order)
            .map(|j| rotation2(2.0 * PI * j as f64 / order as f64))
            .collect();
        let reflections: Vec<DMatrix<f64>> = elements.iter().map(|r| r * &reflection).collect();
        elements.extend(reflections);
        Self::finite(&format!("Dn:{order}"), elements)
    }

    fn finite(name: &str, elements: Vec<DMatrix<f64>>) -> Result<Self> {
        let n = elements[0].nrows();
        Self::new(
            name,
            n,
            Vec::new(),
            elements.clone(),
            1e-10,
            GroupFamily::Finite { elements },
        )
    }

    pub fn algebra_dim(&self) -> usize {
        self.algebra_basis.len()
    }

    pub fn is_finite_group(&self) -> bool {
        matches!(self.family, GroupFamily::Finite { .. })
    }

    /// Abelian algebra; the identity component then acts trivially under `Ad`.
    pub fn is_abelian(&self) -> bool {
        self.abelian
    }

    pub fn identity(&self) -> GroupElement {
        GroupElement::identity(self.ambient_dim)
    }

    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    /// `Σ c_i ξ_i` as an `n×n` matrix.
    pub fn matrix_of(&self, xi: &AlgebraVector) -> DMatrix<f64> {
        let n = self.ambient_dim;
        let mut m = DMatrix::zeros(n, n);
        for (c, b) in xi.coords.iter().zip(&self.algebra_basis) {
            m += b * *c;
        }
        m
    }

    fn closure_residual(&self, m: &DMatrix<f64>) -> f64 {
        let coords = self.raw_coords(m);
        let recon = self.matrix_of(&AlgebraVector::new(coords));
        (recon - m).norm()
    }

    fn raw_coords(&self, m: &DMatrix<f64>) -> DVector<f64> {
        if self.algebra_basis.is_empty() {
            return DVector::zeros(0);
        }
        &self.coord_solver * DVector::from_column_slice(m.as_slice())
    }

    /// Re-expresses an `n×n` matrix in the algebra basis.
    pub fn coords_of(&self, m: &DMatrix<f64>) -> Result<AlgebraVector> {
        if m.shape() != (self.ambient_dim, self.ambient_dim) {
            return Err(Error::dims("coords_of", self.ambient_dim, m.nrows()));
        }
        let coords = self.raw_coords(m);
        let residual = (self.matrix_of(&AlgebraVector::new(coords.clone())) - m).norm();
        if residual > CLOSURE_TOL * m.norm().max(1.0) {
            return Err(Error::ClosureViolation { residual });
        }
        Ok(AlgebraVector::new(coords))
    }

    fn check_dim(&self, xi: &AlgebraVector) -> Result<()> {
        if xi.dim() != self.algebra_dim() {
            return Err(Error::dims("algebra vector", self.algebra_dim(), xi.dim()));
        }
        if !xi.is_finite() {
            return Err(Error::InvalidInput("non-finite algebra coordinates".into()));
        }
        Ok(())
    }

    /// `exp(t ξ)`.
    pub fn exp_map(&self, xi: &AlgebraVector, t: f64) -> Result<GroupElement> {
        self.check_dim(xi)?;
        if !t.is_finite() {
            return Err(Error::InvalidInput("non-finite time".into()));
        }
        Ok(GroupElement(linalg::exp_matrix(&(self.matrix_of(xi) * t))))
    }

    /// `Ad(g) ξ = g ξ g⁻¹` in basis coordinates.
    pub fn adjoint(&self, g: &GroupElement, xi: &AlgebraVector) -> Result<AlgebraVector> {
        self.check_dim(xi)?;
        if xi.dim() == 0 || (self.abelian && self.component_reps.len() == 1) {
            return Ok(xi.clone());
        }
        let m = g.matrix() * self.matrix_of(xi) * g.inverse().matrix();
        self.coords_of(&m)
    }

    /// Matrix of `Ad(g)` acting on coordinates.
    pub fn adjoint_matrix(&self, g: &GroupElement) -> Result<DMatrix<f64>> {
        let k = self.algebra_dim();
        let mut out = DMatrix::zeros(k, k);
        for j in 0..k {
            out.set_column(j, &self.adjoint(g, &AlgebraVector::basis(k, j))?.coords);
        }
        Ok(out)
    }

    pub fn bracket(&self, xi: &AlgebraVector, eta: &AlgebraVector) -> Result<AlgebraVector> {
        let a = self.matrix_of(xi);
        let b = self.matrix_of(eta);
        self.coords_of(&(&a * &b - &b * &a))
    }

    /// Matrix of `ad(ξ) = [ξ, ·]` acting on coordinates.
    pub fn ad_matrix(&self, xi: &AlgebraVector) -> Result<DMatrix<f64>> {
        let k = self.algebra_dim();
        let mut out = DMatrix::zeros(k, k);
        for j in 0..k {
            out.set_column(j, &self.bracket(xi, &AlgebraVector::basis(k, j))?.coords);
        }
        Ok(out)
    }

    /// `⟨ξ, η⟩ = -½ tr(ξη)`.
    pub fn invariant_inner_product(&self, xi: &AlgebraVector, eta: &AlgebraVector) -> Result<f64> {
        self.check_dim(xi)?;
        self.check_dim(eta)?;
        Ok(xi.coords.dot(&(&self.gram * &eta.coords)))
    }

    pub fn norm(&self, xi: &AlgebraVector) -> f64 {
        xi.coords.dot(&(&self.gram * &xi.coords)).max(0.0).sqrt()
    }

    pub fn is_member(&self, g: &GroupElement) -> bool {
        self.membership_residual(g) <= self.membership_tol
    }

    /// Distance of `g` from satisfying the group's defining conditions.
    pub fn membership_residual(&self, g: &GroupElement) -> f64 {
        let n = self.ambient_dim;
        let m = g.matrix();
        if m.shape() != (n, n) || m.iter().any(|v| !v.is_finite()) {
            return f64::INFINITY;
        }
        let orth = linalg::max_abs(&(m.transpose() * m - DMatrix::identity(n, n)));
        match &self.family {
            GroupFamily::Orthogonal { special } => {
                let det = m.determinant();
                let det_res = if *special { (det - 1.0).abs() } else { (det.abs() - 1.0).abs() };
                orth.max(det_res)
            }
            GroupFamily::Torus { .. } => {
                let mut off = 0.0_f64;
                for i in 0..n {
                    for j in 0..n {
                        if i / 2 != j / 2 {
                            off = off.max(m[(i, j)].abs());
                        }
                    }
                }
                orth.max(off).max((m.determinant() - 1.0).abs())
            }
            GroupFamily::Finite { elements } => elements
                .iter()
                .map(|e| linalg::max_abs(&(e - m)))
                .fold(f64::INFINITY, f64::min),
        }
    }

    /// Orthonormal basis (for the invariant form) of the complement of `span(vs)`.
    pub fn orthogonal_complement(&self, vs: &[AlgebraVector]) -> Vec<AlgebraVector> {
        let k = self.algebra_dim();
        if k == 0 {
            return Vec::new();
        }
        let (white, unwhite) = self.whitening();
        let cols: Vec<DVector<f64>> = vs.iter().map(|v| &white * &v.coords).collect();
        let comp = linalg::orthogonal_complement(&linalg::columns_to_matrix(k, &cols), 1e-10);
        (0..comp.ncols())
            .map(|j| AlgebraVector::new(&unwhite * comp.column(j)))
            .collect()
    }

    /// Orthonormalizes (for the invariant form) the span of `vs`.
    pub fn orthonormalize(&self, vs: &[AlgebraVector], tol: f64) -> Vec<AlgebraVector> {
        let k = self.algebra_dim();
        let (white, unwhite) = self.whitening();
        let cols: Vec<DVector<f64>> = vs.iter().map(|v| &white * &v.coords).collect();
        let basis = linalg::range_basis(&linalg::columns_to_matrix(k, &cols), tol);
        (0..basis.ncols())
            .map(|j| AlgebraVector::new(&unwhite * basis.column(j)))
            .collect()
    }

    /// `(W, W⁻¹)` with `Wᵀ W = gram`, so `W c` are orthonormal coordinates.
    pub fn whitening(&self) -> (DMatrix<f64>, DMatrix<f64>) {
        let k = self.algebra_dim();
        if k == 0 {
            return (DMatrix::zeros(0, 0), DMatrix::zeros(0, 0));
        }
        let l = self.gram.clone().cholesky().expect("validated positive definite").l();
        let w = l.transpose();
        let w_inv = w.clone().try_inverse().expect("triangular with positive diagonal");
        (w, w_inv)
    }

    fn subspace_matrix(&self, vs: &[AlgebraVector]) -> DMatrix<f64> {
        let (white, _) = self.whitening();
        let cols: Vec<DVector<f64>> = vs.iter().map(|v| &white * &v.coords).collect();
        linalg::range_basis(&linalg::columns_to_matrix(self.algebra_dim(), &cols), 1e-12)
    }

    /// How far `Ad(g)` moves `span(vs)` off itself.
    pub fn adjoint_invariance_residual(&self, g: &GroupElement, vs: &[AlgebraVector]) -> Result<f64> {
        if vs.is_empty() {
            return Ok(0.0);
        }
        let u = self.subspace_matrix(vs);
        let moved: Vec<AlgebraVector> = vs.iter().map(|v| self.adjoint(g, v)).collect::<Result<_>>()?;
        let w = self.subspace_matrix(&moved);
        if w.ncols() != u.ncols() {
            return Ok(f64::INFINITY);
        }
        Ok(linalg::subspace_distance(&u, &w))
    }
}

/// A decomposition `g = h ⊕ m` into a stabilizer algebra and a complement.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Splitting {
    pub h_basis: Vec<AlgebraVector>,
    pub m_basis: Vec<AlgebraVector>,
    /// Gram matrix of the invariant inner product.
    pub gram: DMatrix<f64>,
    /// Inverse of `[h_basis | m_basis]`, maps coordinates to (h, m) coefficients.
    solver: DMatrix<f64>,
}

pub const SPLITTING_EQUIVARIANCE_TOL: f64 = 1e-10;

impl Splitting {
    /// Uses an explicit complement `m_basis`; `stabilizer_gens` must preserve both pieces.
    pub fn with_complement(
        group: &GroupSpec,
        h_basis: Vec<AlgebraVector>,
        m_basis: Vec<AlgebraVector>,
        stabilizer_gens: &[GroupElement],
    ) -> Result<Self> {
        let k = group.algebra_dim();
        if h_basis.len() + m_basis.len() != k {
            return Err(Error::InvalidSplitting(format!(
                "dim h + dim m = {} + {} but dim g = {k}",
                h_basis.len(),
                m_basis.len()
            )));
        }
        for v in h_basis.iter().chain(&m_basis) {
            if v.dim() != k {
                return Err(Error::dims("splitting basis vector", k, v.dim()));
            }
        }
        let cols: Vec<DVector<f64>> = h_basis.iter().chain(&m_basis).map(|v| v.coords.clone()).collect();
        let full = linalg::columns_to_matrix(k, &cols);
        let solver = if k == 0 {
            DMatrix::zeros(0, 0)
        } else {
            let cond = linalg::condition_number(&full);
            if !cond.is_finite() || cond > 1e12 {
                return Err(Error::InvalidSplitting(format!(
                    "h and m are not complementary (condition number {cond:.3e})"
                )));
            }
            full.try_inverse()
                .ok_or_else(|| Error::InvalidSplitting("h ⊕ m is singular".into()))?
        };
        for g in stabilizer_gens {
            let rh = group.adjoint_invariance_residual(g, &h_basis)?;
            if rh > SPLITTING_EQUIVARIANCE_TOL {
                return Err(Error::EquivarianceFailure {
                    what: "Ad(h) does not preserve the stabilizer algebra".into(),
                    residual: rh,
                });
            }
            let rm = group.adjoint_invariance_residual(g, &m_basis)?;
            if rm > SPLITTING_EQUIVARIANCE_TOL {
                return Err(Error::EquivarianceFailure {
                    what: "Ad(h) does not preserve the complement m".into(),
                    residual: rm,
                });
            }
        }
        Ok(Self {
            h_basis,
            m_basis,
            gram: group.gram().clone(),
            solver,
        })
    }

    pub fn h_dim(&self) -> usize {
        self.h_basis.len()
    }

    pub fn m_dim(&self) -> usize {
        self.m_basis.len()
    }

    /// `(h-coefficients, m-coefficients)` of `ξ` in the two bases.
    pub fn decompose(&self, xi: &AlgebraVector) -> (DVector<f64>, DVector<f64>) {
        let c = &self.solver * &xi.coords;
        let h = c.rows(0, self.h_dim()).into_owned();
        let m = c.rows(self.h_dim(), self.m_dim()).into_owned();
        (h, m)
    }

    pub fn h_part(&self, xi: &AlgebraVector) -> AlgebraVector {
        self.from_h_coords(&self.decompose(xi).0)
    }

    pub fn m_part(&self, xi: &AlgebraVector) -> AlgebraVector {
        self.from_m_coords(&self.decompose(xi).1)
    }

    pub fn from_h_coords(&self, c: &DVector<f64>) -> AlgebraVector {
        combine(&self.h_basis, c, self.gram.nrows())
    }

    pub fn from_m_coords(&self, c: &DVector<f64>) -> AlgebraVector {
        combine(&self.m_basis, c, self.gram.nrows())
    }

    /// Matrix (dim g × dim h) whose columns are the h basis.
    pub fn h_matrix(&self) -> DMatrix<f64> {
        let cols: Vec<DVector<f64>> = self.h_basis.iter().map(|v| v.coords.clone()).collect();
        linalg::columns_to_matrix(self.gram.nrows(), &cols)
    }

    pub fn m_matrix(&self) -> DMatrix<f64> {
        let cols: Vec<DVector<f64>> = self.m_basis.iter().map(|v| v.coords.clone()).collect();
        linalg::columns_to_matrix(self.gram.nrows(), &cols)
    }

    /// Maximum |⟨h_i, m_j⟩| over basis pairs.
    pub fn cross_inner_products(&self) -> f64 {
        let mut worst = 0.0_f64;
        for h in &self.h_basis {
            for m in &self.m_basis {
                worst = worst.max(h.coords.dot(&(&self.gram * &m.coords)).abs());
            }
        }
        worst
    }
}

fn combine(basis: &[AlgebraVector], c: &DVector<f64>, dim: usize) -> AlgebraVector {
    let mut out = DVector::zeros(dim);
    for (b, ci) in basis.iter().zip(c.iter()) {
        out += &b.coords * *ci;
    }
    AlgebraVector::new(out)
}

/// Builds `g = h ⊕ m` with `m` the invariant-orthogonal complement of `h`.
pub fn equivariant_splitting(
    group: &GroupSpec,
    h_basis: &[AlgebraVector],
    stabilizer_gens: &[GroupElement],
) -> Result<Splitting> {
    let k = group.algebra_dim();
    let ortho = group.orthonormalize(h_basis, 1e-10);
    if ortho.len() != h_basis.len() {
        return Err(Error::InvalidInput("h basis is linearly dependent".into()));
    }
    for v in h_basis {
        if v.dim() != k {
            return Err(Error::dims("h basis vector", k, v.dim()));
        }
    }
    let m_basis = group.orthogonal_complement(h_basis);
    Splitting::with_complement(group, h_basis.to_vec(), m_basis, stabilizer_gens)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn so3() -> Arc<GroupSpec> {
        GroupSpec::by_name("SO3").unwrap()
    }

    #[test]
    fn exp_of_zero_is_identity_exactly() {
        for name in ["SO2", "O3", "T2"] {
            let g = GroupSpec::by_name(name).unwrap();
            let e = g.exp_map(&AlgebraVector::zero(g.algebra_dim()), 3.7).unwrap();
            assert_eq!(e, g.identity());
        }
    }

    #[test]
    fn so2_quarter_turn() {
        let g = GroupSpec::by_name("SO2").unwrap();
        let e = g.exp_map(&AlgebraVector::from_slice(&[1.0]), PI / 2.0).unwrap();
        let expected = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
        assert!((e.matrix() - expected).norm() < 1e-15);
        assert!(g.is_member(&e));
    }

    #[test]
    fn so3_half_turn_about_z_matches_series() {
        let g = so3();
        let xi = AlgebraVector::from_slice(&[0.0, 0.0, 1.0]);
        let e = g.exp_map(&xi, PI).unwrap();
        let expected = DMatrix::from_diagonal(&DVector::from_vec(vec![-1.0, -1.0, 1.0]));
        assert!((e.matrix() - &expected).norm() < 1e-15);
        // independent truncated Taylor series
        let a = g.matrix_of(&xi) * PI;
        let mut term = DMatrix::<f64>::identity(3, 3);
        let mut sum = term.clone();
        for k in 1..40 {
            term = &term * &a / k as f64;
            sum += &term;
        }
        assert!((sum - expected).norm() < 1e-12);
    }

    #[test]
    fn non_finite_input_rejected() {
        let g = so3();
        let err = g.exp_map(&AlgebraVector::from_slice(&[f64::NAN, 0.0, 0.0]), 1.0);
        assert!(matches!(err, Err(Error::InvalidInput(_))));
    }

    #[test]
    fn adjoint_examples() {
        let so2 = GroupSpec::by_name("SO2").unwrap();
        let r = so2.exp_map(&AlgebraVector::from_slice(&[1.0]), 0.8).unwrap();
        let xi = AlgebraVector::from_slice(&[2.5]);
        assert!((so2.adjoint(&r, &xi).unwrap().coords - &xi.coords).norm() < 1e-14);

        let o2 = GroupSpec::by_name("O2").unwrap();
        let refl = GroupElement(o2.component_reps[1].clone());
        let j = AlgebraVector::from_slice(&[1.0]);
        assert_abs_diff_eq!(o2.adjoint(&refl, &j).unwrap().coords[0], -1.0, epsilon = 1e-15);

        let g = so3();
        let theta = 0.7;
        let rz = g.exp_map(&AlgebraVector::from_slice(&[0.0, 0.0, 1.0]), theta).unwrap();
        let ad = g.adjoint(&rz, &AlgebraVector::from_slice(&[1.0, 0.0, 0.0])).unwrap();
        let expected = DVector::from_vec(vec![theta.cos(), theta.sin(), 0.0]);
        assert!((ad.coords - expected).norm() < 1e-12);
    }

    #[test]
    fn closure_violation_detected() {
        let g = so3();
        let sym = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert!(matches!(g.coords_of(&sym), Err(Error::ClosureViolation { .. })));
    }

    #[test]
    fn invariant_form_values() {
        let g = so3();
        let l1 = AlgebraVector::basis(3, 0);
        let l2 = AlgebraVector::basis(3, 1);
        assert_abs_diff_eq!(g.invariant_inner_product(&l1, &l1).unwrap(), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(g.invariant_inner_product(&l1, &l2).unwrap(), 0.0, epsilon = 1e-15);
        for name in ["SO2", "O2", "SO3", "O3", "T2"] {
            let g = GroupSpec::by_name(name).unwrap();
            for i in 0..g.algebra_dim() {
                let e = AlgebraVector::basis(g.algebra_dim(), i);
                assert!(g.invariant_inner_product(&e, &e).unwrap() > 0.0);
            }
        }
    }

    #[test]
    fn splitting_examples() {
        let g = so3();
        let full: Vec<AlgebraVector> = (0..3).map(|i| AlgebraVector::basis(3, i)).collect();
        let s = equivariant_splitting(&g, &full, &[]).unwrap();
        assert_eq!(s.m_dim(), 0);
        let s = equivariant_splitting(&g, &[], &[]).unwrap();
        assert_eq!(s.m_dim(), 3);

        let rx = g.exp_map(&AlgebraVector::basis(3, 0), 0.9).unwrap();
        let s = equivariant_splitting(&g, &[AlgebraVector::basis(3, 0)], &[rx]).unwrap();
        assert_eq!(s.m_dim(), 2);
        for m in &s.m_basis {
            assert!(m.coords[0].abs() < 1e-12);
        }
        assert!(s.cross_inner_products() < 1e-12);
    }

    #[test]
    fn splitting_rejects_non_normalizing_generator() {
        let g = so3();
        // a rotation about e3 does not preserve span{L1}
        let rz = g.exp_map(&AlgebraVector::basis(3, 2), 0.5).unwrap();
        let err = equivariant_splitting(&g, &[AlgebraVector::basis(3, 0)], &[rz]);
        assert!(matches!(err, Err(Error::EquivarianceFailure { .. })));
    }

    #[test]
    fn catalog_membership() {
        for name in ["SO2", "O2", "SO3", "O3", "T1", "T2", "Zn:1", "Zn:2", "Zn:5", "Dn:3"] {
            let g = GroupSpec::by_name(name).unwrap();
            for c in &g.component_reps {
                assert!(g.is_member(&GroupElement(c.clone())), "{name}");
            }
        }
        assert!(GroupSpec::by_name("SU2").is_err());
        let z2 = GroupSpec::by_name("Zn:2").unwrap();
        assert_eq!(z2.ambient_dim, 1);
        assert_eq!(z2.algebra_dim(), 0);
    }

    fn coords3() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-2.0..2.0f64, 3)
    }

    proptest! {
        #[test]
        fn one_parameter_subgroup(c in coords3(), s in -2.0..2.0f64, t in -2.0..2.0f64) {
            let g = so3();
            let xi = AlgebraVector::from_slice(&c);
            let lhs = g.exp_map(&xi, s + t).unwrap();
            let rhs = g.exp_map(&xi, s).unwrap().compose(&g.exp_map(&xi, t).unwrap());
            prop_assert!(lhs.distance(&rhs) < 1e-10);
            prop_assert!(g.is_member(&lhs));
        }

        #[test]
        fn adjoint_is_a_homomorphism(a in coords3(), b in coords3(), x in coords3()) {
            let g = GroupSpec::by_name("O3").unwrap();
            let g1 = g.exp_map(&AlgebraVector::from_slice(&a), 1.0).unwrap();
            let g2 = GroupElement(-g.exp_map(&AlgebraVector::from_slice(&b), 1.0).unwrap().0);
            let xi = AlgebraVector::from_slice(&x);
            let lhs = g.adjoint(&g1.compose(&g2), &xi).unwrap();
            let rhs = g.adjoint(&g1, &g.adjoint(&g2, &xi).unwrap()).unwrap();
            prop_assert!((lhs.coords - rhs.coords).norm() < 1e-10);
        }

        #[test]
        fn derivative_of_adjoint_is_bracket(z in coords3(), x in coords3()) {
            let g = so3();
            let zeta = AlgebraVector::from_slice(&z);
            let xi = AlgebraVector::from_slice(&x);
            let h = 1e-5;
            let plus = g.adjoint(&g.exp_map(&zeta, h).unwrap(), &xi).unwrap();
            let minus = g.adjoint(&g.exp_map(&zeta, -h).unwrap(), &xi).unwrap();
            let fd = (plus.coords - minus.coords) / (2.0 * h);
            let br = g.bracket(&zeta, &xi).unwrap();
            prop_assert!((fd - br.coords).norm() < 1e-6);
        }

        #[test]
        fn inner_product_is_ad_invariant(a in coords3(), x in coords3(), y in coords3()) {
            let g = GroupSpec::by_name("O3").unwrap();
            let k = GroupElement(-g.exp_map(&AlgebraVector::from_slice(&a), 1.0).unwrap().0);
            let xi = AlgebraVector::from_slice(&x);
            let eta = AlgebraVector::from_slice(&y);
            let before = g.invariant_inner_product(&xi, &eta).unwrap();
            let after = g
                .invariant_inner_product(&g.adjoint(&k, &xi).unwrap(), &g.adjoint(&k, &eta).unwrap())
                .unwrap();
            prop_assert!((before - after).abs() < 1e-12);
        }

        #[test]
        fn splitting_reconstructs_every_basis_vector(c in coords3()) {
            let g = so3();
            let axis = AlgebraVector::from_slice(&c);
            prop_assume!(g.norm(&axis) > 0.1);
            let s = equivariant_splitting(&g, &[axis], &[]).unwrap();
            for i in 0..3 {
                let e = AlgebraVector::basis(3, i);
                let recon = s.h_part(&e).add(&s.m_part(&e));
                prop_assert!((recon.coords - e.coords).norm() < 1e-12);
            }
        }
    }
}
