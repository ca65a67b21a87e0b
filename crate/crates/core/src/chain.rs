//! Polynomial truncations of the two-term complexes `∂: maps → fields` on a
//! slice `S` and on its tube `G·S`, the comparison maps between them, and
//! exact checks of the chain homotopy equivalence.
//!
//! Every space is a set of equivariant polynomial maps in slice coordinates
//! `s` (with `y = x + Bs`), represented by orthonormal columns of `vec(C)` where
//! `C` is the `out × len` coefficient matrix over the graded monomials.
//! Tube objects are described through their restriction to `S`:
//! `C^∞(G·S, g)^G ≅ C^∞(S, g)^H`, and tube fields are the image of the
//! assembly `A(v, m)(s) = Bv(s) + δρ(m(s))(x + Bs)`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lie::{AlgebraVector, GroupElement, Splitting};
use crate::linalg;
use crate::poly::Monomials;
use crate::quadrature::{HaarQuadrature, QuadraturePlan};
use crate::rep::{Representation, Sampler};
use crate::slice::Slice;

pub const RANK_TOL: f64 = 1e-8;
pub const IDENTITY_TOL: f64 = 1e-12;
const EQUIVARIANCE_SAMPLES: usize = 30;
const EQUIVARIANCE_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PolyTarget {
    /// `Γ(TS)^H`.
    SliceFields,
    /// `C^∞(S, h)^H`.
    SliceHMaps,
    /// `C^∞(S, m)^H`.
    SliceMMaps,
    /// `C^∞(G·S, g)^G`, restricted to `S`.
    TubeAlgebraMaps,
    /// `Γ(T(G·S))^G`, restricted to `S`.
    TubeFields,
}

#[derive(Clone, Debug)]
pub struct EquivariantPolyBasis {
    pub target: PolyTarget,
    pub max_degree: usize,
    pub nvars: usize,
    pub out_dim: usize,
    /// Number of monomials of degree `≤ max_degree`.
    pub len: usize,
    /// Orthonormal columns, each `vec` of an `out_dim × len` coefficient matrix.
    pub basis_coeffs: DMatrix<f64>,
    /// `‖R² − R‖` of the averaging operator, when one was used.
    pub idempotency_residual: Option<f64>,
    /// Worst equivariance residual over the sampled `(h, s)`.
    pub equivariance_residual: f64,
}

impl EquivariantPolyBasis {
    pub fn dim(&self) -> usize {
        self.basis_coeffs.ncols()
    }

    pub fn coefficients(&self, j: usize) -> DMatrix<f64> {
        DMatrix::from_column_slice(self.out_dim, self.len, self.basis_coeffs.column(j).as_slice())
    }

    /// `‖QᵀQ − I‖` max-abs.
    pub fn gram_residual(&self) -> f64 {
        let d = self.dim();
        linalg::max_abs(&(self.basis_coeffs.transpose() * &self.basis_coeffs - DMatrix::identity(d, d)))
    }

    /// Coordinates of a coefficient vector, and how far it is from the span.
    pub fn coordinates(&self, vec_coeffs: &DVector<f64>) -> (DVector<f64>, f64) {
        let c = self.basis_coeffs.transpose() * vec_coeffs;
        let off = (vec_coeffs - &self.basis_coeffs * &c).amax();
        (c, off)
    }
}

fn vec_of(m: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_column_slice(m.as_slice())
}

fn eval_coeffs(c: &DMatrix<f64>, mono: &Monomials, len: usize, s: &DVector<f64>) -> DVector<f64> {
    let m = mono.evaluate(s.as_slice());
    c * m.rows(0, len)
}

/// A linear action of `H` on the source coordinates and on the target.
pub struct Action<'a> {
    pub tau: &'a dyn Fn(&GroupElement) -> DMatrix<f64>,
    pub sigma: &'a dyn Fn(&GroupElement) -> DMatrix<f64>,
}

/// Orthonormal basis of the equivariant polynomial maps of degree `≤ degree`
/// (`P(τ(h)s) = σ(h)P(s)`), as the range of the averaging operator
/// `R = Σ w S(τ(h))ᵀ ⊗ σ(h⁻¹)` on `vec(C)`.
#[allow(clippy::too_many_arguments)]
pub fn reynolds_basis(
    quad: &HaarQuadrature,
    samples: &[GroupElement],
    action: &Action,
    mono: &Monomials,
    degree: usize,
    out: usize,
    target: PolyTarget,
) -> Result<EquivariantPolyBasis> {
    if degree > mono.max_degree() {
        return Err(Error::InvalidInput(format!(
            "degree {degree} exceeds the monomial table ({})",
            mono.max_degree()
        )));
    }
    let nvars = mono.nvars();
    let len = Monomials::new(nvars, degree).len();
    let size = out * len;
    let empty = |r: Option<f64>| EquivariantPolyBasis {
        target,
        max_degree: degree,
        nvars,
        out_dim: out,
        len,
        basis_coeffs: DMatrix::zeros(size, 0),
        idempotency_residual: r,
        equivariance_residual: 0.0,
    };
    if size == 0 {
        return Ok(empty(Some(0.0)));
    }
    let mut r = DMatrix::zeros(size, size);
    for (w, h) in &quad.nodes {
        let s = mono.substitution_matrix(&(action.tau)(h));
        let s = s.view((0, 0), (len, len)).transpose();
        let sig = (action.sigma)(&h.inverse());
        r += s.kronecker(&sig) * *w;
    }
    let idem = linalg::max_abs(&(&r * &r - &r));
    let basis = linalg::range_basis(&r, RANK_TOL);
    let mut out_basis = empty(Some(idem));
    out_basis.basis_coeffs = basis;
    out_basis.equivariance_residual = equivariance_residual(&out_basis, samples, action, mono);
    Ok(out_basis)
}

fn equivariance_residual(b: &EquivariantPolyBasis, samples: &[GroupElement], action: &Action, mono: &Monomials) -> f64 {
    let mut sampler = Sampler::new(0xbadc0de);
    let mut worst = 0.0_f64;
    for h in samples.iter().take(EQUIVARIANCE_SAMPLES) {
        let s = sampler.point_in_ball(b.nvars, 1.0);
        let ts = (action.tau)(h) * &s;
        let sig = (action.sigma)(h);
        for j in 0..b.dim() {
            let c = b.coefficients(j);
            let lhs = eval_coeffs(&c, mono, b.len, &ts);
            let rhs = &sig * eval_coeffs(&c, mono, b.len, &s);
            worst = worst.max((lhs - rhs).amax());
        }
    }
    worst
}

type MatrixAction<'a> = dyn Fn(&GroupElement) -> DMatrix<f64> + 'a;

/// `s ↦ c + L s`, one per algebra direction; `∂ψ(s) = Σ_i ψ_i(s)(c_i + L_i s)`.
#[derive(Clone, Debug)]
pub struct AffineOp {
    pub constant: DVector<f64>,
    pub linear: DMatrix<f64>,
}

/// Coefficients (`target × len_out`) of `Σ_i ψ_i(s)(c_i + L_i s)`.
pub fn apply_boundary(psi: &DMatrix<f64>, ops: &[AffineOp], mono: &Monomials, len_out: usize) -> Result<DMatrix<f64>> {
    let t = ops.first().map(|o| o.constant.len()).unwrap_or(0);
    let mut out = DMatrix::zeros(t, len_out);
    for (i, op) in ops.iter().enumerate() {
        for m in 0..psi.ncols() {
            let c = psi[(i, m)];
            if c == 0.0 {
                continue;
            }
            if m >= len_out {
                return Err(Error::DegreeBudget {
                    source_degree: mono.degree(m),
                    target_degree: mono.degree(len_out - 1),
                    required: mono.degree(m) + 1,
                });
            }
            for r in 0..t {
                out[(r, m)] += c * op.constant[r];
            }
            for j in 0..op.linear.ncols() {
                let target = mono.times_var(m, j).filter(|&k| k < len_out).ok_or(Error::DegreeBudget {
                    source_degree: mono.degree(m),
                    target_degree: mono.degree(len_out - 1),
                    required: mono.degree(m) + 1,
                })?;
                for r in 0..t {
                    out[(r, target)] += c * op.linear[(r, j)];
                }
            }
        }
    }
    Ok(out)
}

/// Matrix of `∂` from `c1` to `c0` in their bases, and the largest component
/// of an image that falls outside `c0`.
pub fn boundary_matrix(c1: &EquivariantPolyBasis, c0: &EquivariantPolyBasis, ops: &[AffineOp], mono: &Monomials) -> Result<(DMatrix<f64>, f64)> {
    if c1.max_degree + 1 > c0.max_degree {
        return Err(Error::DegreeBudget {
            source_degree: c1.max_degree,
            target_degree: c0.max_degree,
            required: c1.max_degree + 1,
        });
    }
    if ops.len() != c1.out_dim {
        return Err(Error::dims("boundary operators", c1.out_dim, ops.len()));
    }
    let mut m = DMatrix::zeros(c0.dim(), c1.dim());
    let mut off = 0.0_f64;
    for j in 0..c1.dim() {
        let psi = c1.coefficients(j);
        let img = if ops.is_empty() {
            DMatrix::zeros(c0.out_dim, c0.len)
        } else {
            apply_boundary(&psi, ops, mono, c0.len)?
        };
        let (coords, o) = c0.coordinates(&vec_of(&img));
        off = off.max(o);
        m.set_column(j, &coords);
    }
    Ok((m, off))
}

/// Everything needed to build the complexes at one slice.
pub struct SliceModel {
    pub slice: Slice,
    pub splitting: Splitting,
    pub plan: QuadraturePlan,
    /// Node count override for the averaging quadratures.
    pub nodes: Option<usize>,
    samples: Vec<GroupElement>,
}

impl SliceModel {
    pub fn new(slice: &Slice, splitting: &Splitting, nodes: Option<usize>) -> Result<Self> {
        let plan = slice.quadrature_plan()?;
        let samples = plan.sample_elements(slice.group(), EQUIVARIANCE_SAMPLES, 0x0e9)?;
        Ok(Self {
            slice: slice.clone(),
            splitting: splitting.clone(),
            plan,
            nodes,
            samples,
        })
    }

    pub fn rep(&self) -> &Arc<Representation> {
        &self.slice.rep
    }

    pub fn tau(&self, h: &GroupElement) -> DMatrix<f64> {
        self.slice.slice_action(h)
    }

    fn restricted_adjoint(&self, h: &GroupElement, part: &[AlgebraVector], take_h: bool) -> DMatrix<f64> {
        let group = self.slice.group();
        let cols: Vec<DVector<f64>> = part
            .iter()
            .map(|v| {
                let (a, b) = self.splitting.decompose(&group.adjoint(h, v).expect("closed algebra"));
                if take_h {
                    a
                } else {
                    b
                }
            })
            .collect();
        linalg::columns_to_matrix(part.len(), &cols)
    }

    pub fn sigma_h(&self, h: &GroupElement) -> DMatrix<f64> {
        self.restricted_adjoint(h, &self.splitting.h_basis, true)
    }

    pub fn sigma_m(&self, h: &GroupElement) -> DMatrix<f64> {
        self.restricted_adjoint(h, &self.splitting.m_basis, false)
    }

    fn quadrature(&self, degree: usize, sigma_freq: usize) -> Result<HaarQuadrature> {
        let tau_freq = self
            .plan
            .max_frequency(|xi| self.slice.basis.transpose() * self.rep().delta_rho(xi) * &self.slice.basis);
        let l = degree * tau_freq + sigma_freq;
        let configured = self.nodes.unwrap_or_else(|| self.plan.default_nodes(l));
        self.plan.build_checked(self.slice.group(), l, configured)
    }

    pub fn basis(&self, target: PolyTarget, degree: usize, mono: &Monomials) -> Result<EquivariantPolyBasis> {
        let group = self.slice.group().clone();
        let rep = self.rep().clone();
        let tau = |h: &GroupElement| self.tau(h);
        match target {
            PolyTarget::SliceFields => {
                let f = self.plan.max_frequency(|xi| self.slice.basis.transpose() * rep.delta_rho(xi) * &self.slice.basis);
                let action = Action { tau: &tau, sigma: &tau };
                reynolds_basis(&self.quadrature(degree, f)?, &self.samples, &action, mono, degree, self.slice.dim(), target)
            }
            PolyTarget::SliceHMaps | PolyTarget::SliceMMaps | PolyTarget::TubeAlgebraMaps => {
                let f = self.plan.max_frequency(|xi| group.ad_matrix(xi).expect("closed algebra"));
                let sh = |h: &GroupElement| self.sigma_h(h);
                let sm = |h: &GroupElement| self.sigma_m(h);
                let sg = |h: &GroupElement| group.adjoint_matrix(h).expect("closed algebra");
                let (sigma, out): (&MatrixAction, usize) = match target {
                    PolyTarget::SliceHMaps => (&sh, self.splitting.h_dim()),
                    PolyTarget::SliceMMaps => (&sm, self.splitting.m_dim()),
                    _ => (&sg, group.algebra_dim()),
                };
                let action = Action { tau: &tau, sigma };
                reynolds_basis(&self.quadrature(degree, f)?, &self.samples, &action, mono, degree, out, target)
            }
            PolyTarget::TubeFields => Err(Error::InvalidInput(
                "tube fields are built from the assembly map".into(),
            )),
        }
    }

    /// `∂` on the slice: `ψ ↦ Bᵀδρ(ψ(s))(x + Bs)` over the `h` basis.
    pub fn slice_ops(&self) -> Vec<AffineOp> {
        let b = &self.slice.basis;
        let x = &self.slice.base_point;
        self.splitting
            .h_basis
            .iter()
            .map(|eta| {
                let d = self.rep().delta_rho(eta);
                AffineOp {
                    constant: b.transpose() * &d * x,
                    linear: b.transpose() * &d * b,
                }
            })
            .collect()
    }

    /// `ψ ↦ δρ(ψ(s))(x + Bs)` for algebra-valued `ψ` in the given basis.
    pub fn tube_ops(&self, basis: &[AlgebraVector]) -> Vec<AffineOp> {
        let b = &self.slice.basis;
        let x = &self.slice.base_point;
        basis
            .iter()
            .map(|xi| {
                let d = self.rep().delta_rho(xi);
                AffineOp {
                    constant: &d * x,
                    linear: &d * b,
                }
            })
            .collect()
    }
}

/// Both complexes at degree budget `d` (maps `≤ d`, fields `≤ d + 1`) with
/// `K`, `p` and the homotopy `h`.
#[derive(Clone, Debug)]
pub struct ChainModel {
    pub degree: usize,
    pub c1_slice: EquivariantPolyBasis,
    pub c0_slice: EquivariantPolyBasis,
    pub m_maps: EquivariantPolyBasis,
    pub c1_tube: EquivariantPolyBasis,
    pub c0_tube: EquivariantPolyBasis,
    pub boundary_slice: DMatrix<f64>,
    pub boundary_tube: DMatrix<f64>,
    pub k1: DMatrix<f64>,
    pub k0: DMatrix<f64>,
    pub p1: DMatrix<f64>,
    pub p0: DMatrix<f64>,
    pub homotopy: DMatrix<f64>,
    /// Largest coefficient of a boundary image outside its target basis.
    pub boundary_leak: f64,
}

fn embed(coeffs: &DMatrix<f64>, basis: &[AlgebraVector], k: usize) -> DMatrix<f64> {
    let e = linalg::columns_to_matrix(k, &basis.iter().map(|v| v.coords.clone()).collect::<Vec<_>>());
    e * coeffs
}

fn pad_columns(m: &DMatrix<f64>, len: usize) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(m.nrows(), len);
    out.columns_mut(0, m.ncols()).copy_from(m);
    out
}

pub fn build_chain_model(model: &SliceModel, d: usize) -> Result<ChainModel> {
    let group = model.slice.group().clone();
    let k = group.algebra_dim();
    let n = model.rep().dim;
    let mono = Monomials::new(model.slice.dim(), d + 1);

    let c1_slice = model.basis(PolyTarget::SliceHMaps, d, &mono)?;
    let c0_slice = model.basis(PolyTarget::SliceFields, d + 1, &mono)?;
    let m_maps = model.basis(PolyTarget::SliceMMaps, d, &mono)?;
    let c1_tube = model.basis(PolyTarget::TubeAlgebraMaps, d, &mono)?;
    let len_out = c0_slice.len;
    let b = &model.slice.basis;

    // assembly A(v, m) = Bv + δρ(m)(x + Bs)
    let m_ops = model.tube_ops(&model.splitting.m_basis);
    let mut assembly_cols: Vec<DVector<f64>> = Vec::with_capacity(c0_slice.dim() + m_maps.dim());
    for j in 0..c0_slice.dim() {
        assembly_cols.push(vec_of(&(b * c0_slice.coefficients(j))));
    }
    for j in 0..m_maps.dim() {
        let img = if m_ops.is_empty() {
            DMatrix::zeros(n, len_out)
        } else {
            apply_boundary(&m_maps.coefficients(j), &m_ops, &mono, len_out)?
        };
        assembly_cols.push(vec_of(&img));
    }
    let assembly = linalg::columns_to_matrix(n * len_out, &assembly_cols);
    let q = linalg::range_basis(&assembly, RANK_TOL);
    if q.ncols() != assembly.ncols() {
        return Err(Error::Assembly(format!(
            "assembly map has rank {} on a space of dimension {}",
            q.ncols(),
            assembly.ncols()
        )));
    }
    let c0_tube = EquivariantPolyBasis {
        target: PolyTarget::TubeFields,
        max_degree: d + 1,
        nvars: model.slice.dim(),
        out_dim: n,
        len: len_out,
        basis_coeffs: q.clone(),
        idempotency_residual: None,
        equivariance_residual: {
            let rho = |h: &GroupElement| model.rep().rho(h);
            let tau = |h: &GroupElement| model.tau(h);
            let action = Action { tau: &tau, sigma: &rho };
            let probe = EquivariantPolyBasis {
                target: PolyTarget::TubeFields,
                max_degree: d + 1,
                nvars: model.slice.dim(),
                out_dim: n,
                len: len_out,
                basis_coeffs: q.clone(),
                idempotency_residual: None,
                equivariance_residual: 0.0,
            };
            equivariance_residual(&probe, &model.samples, &action, &mono)
        },
    };
    let a_coords = q.transpose() * &assembly;
    let dim0 = a_coords.nrows();
    let a_inv = if dim0 == 0 {
        DMatrix::zeros(0, 0)
    } else {
        a_coords
            .clone()
            .lu()
            .try_inverse()
            .ok_or_else(|| Error::Assembly("assembly matrix is singular".into()))?
    };
    let ns = c0_slice.dim();
    let nm = m_maps.dim();

    let (boundary_slice, leak_s) = boundary_matrix(&c1_slice, &c0_slice, &model.slice_ops(), &mono)?;
    let all: Vec<AlgebraVector> = (0..k).map(|i| AlgebraVector::basis(k, i)).collect();
    let (boundary_tube, leak_t) = boundary_matrix(&c1_tube, &c0_tube, &model.tube_ops(&all), &mono)?;

    let len_in = c1_tube.len;
    let mut k1 = DMatrix::zeros(c1_tube.dim(), c1_slice.dim());
    for j in 0..c1_slice.dim() {
        let g = embed(&c1_slice.coefficients(j), &model.splitting.h_basis, k);
        k1.set_column(j, &c1_tube.coordinates(&vec_of(&g)).0);
    }
    let k0 = a_coords.columns(0, ns).into_owned();
    let h_proj = {
        let rows: Vec<DVector<f64>> = (0..k)
            .map(|i| model.splitting.decompose(&AlgebraVector::basis(k, i)).0)
            .collect();
        linalg::columns_to_matrix(model.splitting.h_dim(), &rows)
    };
    let mut p1 = DMatrix::zeros(c1_slice.dim(), c1_tube.dim());
    for j in 0..c1_tube.dim() {
        let hp = &h_proj * c1_tube.coefficients(j);
        p1.set_column(j, &c1_slice.coordinates(&vec_of(&hp)).0);
    }
    let p0 = a_inv.rows(0, ns).into_owned();
    // m-block of A⁻¹, carried into C1_tube
    let mut m_to_tube = DMatrix::zeros(c1_tube.dim(), nm);
    for j in 0..nm {
        let g = embed(&m_maps.coefficients(j), &model.splitting.m_basis, k);
        m_to_tube.set_column(j, &c1_tube.coordinates(&vec_of(&pad_columns(&g, len_in))).0);
    }
    let homotopy = m_to_tube * a_inv.rows(ns, nm);

    Ok(ChainModel {
        degree: d,
        boundary_leak: leak_s.max(leak_t),
        c1_slice,
        c0_slice,
        m_maps,
        c1_tube,
        c0_tube,
        boundary_slice,
        boundary_tube,
        k1,
        k0,
        p1,
        p0,
        homotopy,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Counterexample {
    pub identity: String,
    pub column: usize,
    pub residual: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HomotopyReport {
    pub degree: usize,
    pub dims: ChainDims,
    pub chain_map_residual: f64,
    pub p1k1_residual: f64,
    pub p0k0_residual: f64,
    /// `id − K₁p₁ − h∂` on maps.
    pub homotopy1_residual: f64,
    /// `id − K₀p₀ − ∂h` on fields.
    pub homotopy0_residual: f64,
    pub rank_boundary_slice: usize,
    pub rank_boundary_tube: usize,
    pub coker_slice: usize,
    pub coker_tube: usize,
    pub surjective: bool,
    pub injective: bool,
    pub max_idempotency: f64,
    pub max_gram: f64,
    pub max_equivariance: f64,
    pub boundary_leak: f64,
    pub counterexamples: Vec<Counterexample>,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq, Eq)]
pub struct ChainDims {
    pub c1_slice: usize,
    pub c0_slice: usize,
    pub m_maps: usize,
    pub c1_tube: usize,
    pub c0_tube: usize,
}

fn worst_column(name: &str, m: &DMatrix<f64>, out: &mut Vec<Counterexample>) -> f64 {
    let mut worst = 0.0_f64;
    let mut col = 0;
    for j in 0..m.ncols() {
        let v = m.column(j).amax();
        if v > worst {
            worst = v;
            col = j;
        }
    }
    if worst > IDENTITY_TOL {
        out.push(Counterexample {
            identity: name.to_string(),
            column: col,
            residual: worst,
        });
    }
    worst
}

fn rank(m: &DMatrix<f64>) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        0
    } else {
        linalg::rank(m, RANK_TOL)
    }
}

pub fn verify_homotopy_equivalence(c: &ChainModel) -> HomotopyReport {
    let mut ce = Vec::new();
    let ident = |n: usize| DMatrix::<f64>::identity(n, n);
    let chain = worst_column("K0 ∂_slice = ∂_tube K1", &(&c.k0 * &c.boundary_slice - &c.boundary_tube * &c.k1), &mut ce);
    let p1k1 = worst_column("p1 K1 = id", &(&c.p1 * &c.k1 - ident(c.c1_slice.dim())), &mut ce);
    let p0k0 = worst_column("p0 K0 = id", &(&c.p0 * &c.k0 - ident(c.c0_slice.dim())), &mut ce);
    let h1 = worst_column(
        "id - K1 p1 = h ∂_tube",
        &(ident(c.c1_tube.dim()) - &c.k1 * &c.p1 - &c.homotopy * &c.boundary_tube),
        &mut ce,
    );
    let h0 = worst_column(
        "id - K0 p0 = ∂_tube h",
        &(ident(c.c0_tube.dim()) - &c.k0 * &c.p0 - &c.boundary_tube * &c.homotopy),
        &mut ce,
    );
    let rs = rank(&c.boundary_slice);
    let rt = rank(&c.boundary_tube);
    let rk = rank(&c.k0);
    let joint = rank(&linalg::hstack(&[&c.k0, &c.boundary_tube]));
    let dim0t = c.c0_tube.dim();
    let surjective = joint == dim0t;
    // K₀ is injective, so dim(im K₀ ∩ im ∂) = rank ∂_slice exactly when the
    // induced map on cokernels is injective
    let injective = rk == c.c0_slice.dim() && rk + rt - joint == rs;
    let coker_slice = c.c0_slice.dim() - rs;
    let coker_tube = dim0t - rt;
    let bases = [&c.c1_slice, &c.c0_slice, &c.m_maps, &c.c1_tube, &c.c0_tube];
    let max_idempotency = bases.iter().filter_map(|b| b.idempotency_residual).fold(0.0, f64::max);
    let max_gram = bases.iter().map(|b| b.gram_residual()).fold(0.0, f64::max);
    let max_equivariance = bases.iter().map(|b| b.equivariance_residual).fold(0.0, f64::max);
    let pass = ce.is_empty()
        && surjective
        && injective
        && coker_slice == coker_tube
        && max_idempotency <= 1e-10
        && max_gram <= IDENTITY_TOL
        && max_equivariance <= EQUIVARIANCE_TOL
        && c.boundary_leak <= IDENTITY_TOL;
    HomotopyReport {
        degree: c.degree,
        dims: ChainDims {
            c1_slice: c.c1_slice.dim(),
            c0_slice: c.c0_slice.dim(),
            m_maps: c.m_maps.dim(),
            c1_tube: c.c1_tube.dim(),
            c0_tube: dim0t,
        },
        chain_map_residual: chain,
        p1k1_residual: p1k1,
        p0k0_residual: p0k0,
        homotopy1_residual: h1,
        homotopy0_residual: h0,
        rank_boundary_slice: rs,
        rank_boundary_tube: rt,
        coker_slice,
        coker_tube,
        surjective,
        injective,
        max_idempotency,
        max_gram,
        max_equivariance,
        boundary_leak: c.boundary_leak,
        counterexamples: ce,
        pass,
    }
}

/// Targets for [`reynolds_basis_at_origin`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum OriginTarget {
    Fields,
    AlgebraMaps,
}

/// Equivariant polynomial fields or `g`-valued maps on `V` itself, `G = H`
/// acting linearly at the origin.
pub fn reynolds_basis_at_origin(rep: &Arc<Representation>, target: OriginTarget, d: usize, nodes: Option<usize>) -> Result<EquivariantPolyBasis> {
    let slice = Slice::build(rep, &DVector::zeros(rep.dim), 1.0)?;
    let splitting = slice.splitting()?;
    let model = SliceModel::new(&slice, &splitting, nodes)?;
    let mono = Monomials::new(rep.dim, d);
    match target {
        OriginTarget::Fields => model.basis(PolyTarget::SliceFields, d, &mono),
        OriginTarget::AlgebraMaps => model.basis(PolyTarget::SliceHMaps, d, &mono),
    }
}

/// Ranks and residuals for every `d` in `degrees`.
pub fn chain_sweep(slice: &Slice, splitting: &Splitting, degrees: &[usize]) -> Result<Vec<HomotopyReport>> {
    let model = SliceModel::new(slice, splitting, None)?;
    degrees
        .iter()
        .map(|&d| Ok(verify_homotopy_equivalence(&build_chain_model(&model, d)?)))
        .collect()
}
