//! Linear representations, invariant vector fields, equivariant maps into the
//! Lie algebra, and sampled symmetry checks.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lie::{AlgebraVector, GroupElement, GroupFamily, GroupSpec};
use crate::linalg;
use crate::poly::PolyMap;

/// How the group matrices act on `V`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum RepKind {
    /// `ρ(g) = g` on `R^n`.
    Standard,
    /// `ρ(g) = diag(g, …, g)` on `(R^n)^copies`.
    Diagonal { copies: usize },
}

#[derive(Debug)]
pub struct Representation {
    pub group: Arc<GroupSpec>,
    pub kind: RepKind,
    pub dim: usize,
    /// `δρ` of each algebra basis element.
    pub delta_rho_basis: Vec<DMatrix<f64>>,
}

impl Representation {
    pub fn new(group: Arc<GroupSpec>, kind: RepKind) -> Result<Arc<Self>> {
        let n = group.ambient_dim;
        let copies = match kind {
            RepKind::Standard => 1,
            RepKind::Diagonal { copies } if copies > 0 => copies,
            RepKind::Diagonal { .. } => {
                return Err(Error::UnknownRepresentation("diagonal:0".into()));
            }
        };
        let delta_rho_basis = group
            .algebra_basis
            .iter()
            .map(|b| linalg::block_diag(&vec![b.clone(); copies]))
            .collect();
        Ok(Arc::new(Self {
            group,
            kind,
            dim: n * copies,
            delta_rho_basis,
        }))
    }

    /// Parses `standard` or `diagonal:<k>`.
    pub fn parse(group: Arc<GroupSpec>, spec: &str) -> Result<Arc<Self>> {
        let kind = match spec {
            "standard" => RepKind::Standard,
            _ => match spec.strip_prefix("diagonal:").map(str::parse::<usize>) {
                Some(Ok(copies)) => RepKind::Diagonal { copies },
                _ => return Err(Error::UnknownRepresentation(spec.into())),
            },
        };
        Self::new(group, kind)
    }

    pub fn spec_string(&self) -> String {
        match self.kind {
            RepKind::Standard => "standard".into(),
            RepKind::Diagonal { copies } => format!("diagonal:{copies}"),
        }
    }

    fn copies(&self) -> usize {
        self.dim / self.group.ambient_dim
    }

    pub fn rho(&self, g: &GroupElement) -> DMatrix<f64> {
        match self.kind {
            RepKind::Standard => g.matrix().clone(),
            RepKind::Diagonal { copies } => linalg::block_diag(&vec![g.matrix().clone(); copies]),
        }
    }

    pub fn delta_rho(&self, xi: &AlgebraVector) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for (c, b) in xi.coords.iter().zip(&self.delta_rho_basis) {
            m += b * *c;
        }
        m
    }

    /// `δρ` of a matrix already known to lie in the algebra.
    pub fn delta_rho_of_matrix(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        linalg::block_diag(&vec![m.clone(); self.copies()])
    }

    pub fn act(&self, g: &GroupElement, v: &DVector<f64>) -> DVector<f64> {
        self.rho(g) * v
    }

    /// Columns `δρ(ξ_i) x` for the algebra basis.
    pub fn orbit_tangent_matrix(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let cols: Vec<DVector<f64>> = self.delta_rho_basis.iter().map(|b| b * x).collect();
        linalg::columns_to_matrix(self.dim, &cols)
    }

    pub fn check_point(&self, v: &DVector<f64>) -> Result<()> {
        if v.len() != self.dim {
            return Err(Error::dims("point of V", self.dim, v.len()));
        }
        if v.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidInput("non-finite point".into()));
        }
        Ok(())
    }

    /// Index ranges of the copies of `R^n` inside `V`, with the group's
    /// invariant pairing structure (used to build invariant functions).
    pub fn invariant_functions(&self) -> Vec<InvariantFunction> {
        let n = self.group.ambient_dim;
        let copies = self.copies();
        let mut out = Vec::new();
        match self.group.family {
            GroupFamily::Torus { rank } => {
                for c in 0..copies {
                    for k in 0..rank {
                        let start = c * n + 2 * k;
                        out.push(InvariantFunction {
                            label: format!("|z{}|^2", c * rank + k + 1),
                            first: (start, 2),
                            second: (start, 2),
                        });
                    }
                }
            }
            _ => {
                for i in 0..copies {
                    for j in i..copies {
                        let label = if i == j {
                            format!("|v{}|^2", i + 1)
                        } else {
                            format!("<v{},v{}>", i + 1, j + 1)
                        };
                        out.push(InvariantFunction {
                            label,
                            first: (i * n, n),
                            second: (j * n, n),
                        });
                    }
                }
            }
        }
        out
    }
}

/// `f(v) = ⟨v[a], v[b]⟩` for two blocks of coordinates.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InvariantFunction {
    pub label: String,
    pub first: (usize, usize),
    pub second: (usize, usize),
}

impl InvariantFunction {
    pub fn eval(&self, v: &DVector<f64>) -> f64 {
        v.rows(self.first.0, self.first.1).dot(&v.rows(self.second.0, self.second.1))
    }
}

type FieldFn = Arc<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>;
type MapFn = Arc<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>;

#[derive(Clone)]
pub enum FieldKind {
    Zero,
    Linear(DMatrix<f64>),
    /// Components indexed like `V`; variables are the coordinates of `V`.
    Polynomial(PolyMap),
    /// `(q, v) ↦ (v, -k q |q|^{-p} / mass)` on `R³ ⊕ R³`.
    CentralForce { k: f64, p: f64, mass: f64 },
    Induced(AlgebraVector),
    FromMap(Box<EquivariantMap>),
    Combination(Vec<(f64, VectorField)>),
    Custom(FieldFn),
}

impl fmt::Debug for FieldKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FieldKind::Zero => write!(f, "Zero"),
            FieldKind::Linear(a) => write!(f, "Linear({a:?})"),
            FieldKind::Polynomial(p) => write!(f, "Polynomial(degree {:?})", p.effective_degree(0.0)),
            FieldKind::CentralForce { k, p, mass } => write!(f, "CentralForce(k={k}, p={p}, m={mass})"),
            FieldKind::Induced(xi) => write!(f, "Induced({:?})", xi.coords.as_slice()),
            FieldKind::FromMap(m) => write!(f, "FromMap({})", m.label),
            FieldKind::Combination(terms) => write!(f, "Combination({} terms)", terms.len()),
            FieldKind::Custom(_) => write!(f, "Custom"),
        }
    }
}

/// A vector field `V -> V` tied to a representation.
#[derive(Clone, Debug)]
pub struct VectorField {
    pub rep: Arc<Representation>,
    pub kind: FieldKind,
    pub label: String,
}

impl VectorField {
    pub fn zero(rep: &Arc<Representation>) -> Self {
        Self::with_kind(rep, FieldKind::Zero, "0")
    }

    pub fn linear(rep: &Arc<Representation>, a: DMatrix<f64>) -> Result<Self> {
        if a.shape() != (rep.dim, rep.dim) {
            return Err(Error::dims("linear field matrix", rep.dim, a.nrows()));
        }
        Ok(Self::with_kind(rep, FieldKind::Linear(a), "linear"))
    }

    pub fn polynomial(rep: &Arc<Representation>, p: PolyMap) -> Result<Self> {
        if p.out_dim() != rep.dim || p.monomials.nvars() != rep.dim {
            return Err(Error::dims("polynomial field", rep.dim, p.out_dim()));
        }
        Ok(Self::with_kind(rep, FieldKind::Polynomial(p), "polynomial"))
    }

    pub fn central_force(rep: &Arc<Representation>, k: f64, p: f64, mass: f64) -> Result<Self> {
        let ok = rep.dim == 6 && rep.group.ambient_dim == 3;
        if !ok {
            return Err(Error::InvalidInput(
                "central_force needs a group acting diagonally on R3 + R3".into(),
            ));
        }
        if !(k.is_finite() && p.is_finite() && mass.is_finite() && mass != 0.0) {
            return Err(Error::InvalidInput("central_force parameters must be finite, mass nonzero".into()));
        }
        Ok(Self::with_kind(rep, FieldKind::CentralForce { k, p, mass }, "central_force"))
    }

    pub fn custom(
        rep: &Arc<Representation>,
        label: &str,
        f: impl Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    ) -> Self {
        Self::with_kind(rep, FieldKind::Custom(Arc::new(f)), label)
    }

    fn with_kind(rep: &Arc<Representation>, kind: FieldKind, label: &str) -> Self {
        Self {
            rep: rep.clone(),
            kind,
            label: label.to_string(),
        }
    }

    pub fn with_label(mut self, label: &str) -> Self {
        self.label = label.to_string();
        self
    }

    /// `Σ c_i X_i`; all terms must share the representation.
    pub fn combination(terms: Vec<(f64, VectorField)>) -> Result<Self> {
        let rep = terms
            .first()
            .map(|(_, f)| f.rep.clone())
            .ok_or_else(|| Error::InvalidInput("empty combination".into()))?;
        for (_, f) in &terms {
            if !Arc::ptr_eq(&f.rep, &rep) && f.rep.dim != rep.dim {
                return Err(Error::dims("combination term", rep.dim, f.rep.dim));
            }
        }
        let label = terms
            .iter()
            .map(|(c, f)| format!("{c}*{}", f.label))
            .collect::<Vec<_>>()
            .join(" + ");
        Ok(Self::with_kind(&rep, FieldKind::Combination(terms), &label))
    }

    pub fn add(&self, other: &VectorField) -> Result<Self> {
        Self::combination(vec![(1.0, self.clone()), (1.0, other.clone())])
    }

    pub fn sub(&self, other: &VectorField) -> Result<Self> {
        Self::combination(vec![(1.0, self.clone()), (-1.0, other.clone())])
    }

    pub fn eval(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        if v.len() != self.rep.dim {
            return Err(Error::dims("vector field argument", self.rep.dim, v.len()));
        }
        Ok(match &self.kind {
            FieldKind::Zero => DVector::zeros(self.rep.dim),
            FieldKind::Linear(a) => a * v,
            FieldKind::Polynomial(p) => p.eval(v.as_slice()),
            FieldKind::CentralForce { k, p, mass } => {
                let q = v.rows(0, 3);
                let vel = v.rows(3, 3);
                let r = q.norm();
                let scale = if *p == 0.0 { 1.0 } else { r.powf(-p) };
                let force = q * (-k * scale / mass);
                let mut out = DVector::zeros(6);
                out.rows_mut(0, 3).copy_from(&vel);
                out.rows_mut(3, 3).copy_from(&force);
                out
            }
            FieldKind::Induced(xi) => self.rep.delta_rho(xi) * v,
            FieldKind::FromMap(psi) => {
                let xi = psi.eval(v)?;
                self.rep.delta_rho(&xi) * v
            }
            FieldKind::Combination(terms) => {
                let mut acc = DVector::zeros(self.rep.dim);
                for (c, f) in terms {
                    acc += f.eval(v)? * *c;
                }
                acc
            }
            FieldKind::Custom(f) => f(v),
        })
    }
}

/// `ξ_V(v) = δρ(ξ) v`.
pub fn induced_field(rep: &Arc<Representation>, xi: &AlgebraVector) -> Result<VectorField> {
    if xi.dim() != rep.group.algebra_dim() {
        return Err(Error::dims("induced field generator", rep.group.algebra_dim(), xi.dim()));
    }
    Ok(VectorField::with_kind(rep, FieldKind::Induced(xi.clone()), "induced"))
}

/// `ψ_V(v) = δρ(ψ(v)) v`.
pub fn induced_field_from_map(psi: &EquivariantMap) -> VectorField {
    let label = format!("({})_V", psi.label);
    VectorField::with_kind(&psi.rep, FieldKind::FromMap(Box::new(psi.clone())), &label)
}

#[derive(Clone)]
pub enum MapKind {
    Zero,
    Constant(AlgebraVector),
    /// `(q, v) ↦ hat(q × v)` on `R³ ⊕ R³`.
    AngularMomentum,
    /// Output rows are algebra coordinates.
    Polynomial(PolyMap),
    /// Values recorded at finitely many points.
    Tabulated(Arc<Vec<(DVector<f64>, AlgebraVector)>>),
    Combination(Vec<(f64, EquivariantMap)>),
    Custom(MapFn),
}

impl fmt::Debug for MapKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MapKind::Zero => write!(f, "Zero"),
            MapKind::Constant(c) => write!(f, "Constant({:?})", c.coords.as_slice()),
            MapKind::AngularMomentum => write!(f, "AngularMomentum"),
            MapKind::Polynomial(p) => write!(f, "Polynomial(degree {:?})", p.effective_degree(0.0)),
            MapKind::Tabulated(t) => write!(f, "Tabulated({} points)", t.len()),
            MapKind::Combination(t) => write!(f, "Combination({} terms)", t.len()),
            MapKind::Custom(_) => write!(f, "Custom"),
        }
    }
}

/// A map `V -> g`, expected to satisfy `ψ(g·v) = Ad(g) ψ(v)`.
#[derive(Clone, Debug)]
pub struct EquivariantMap {
    pub rep: Arc<Representation>,
    pub kind: MapKind,
    pub label: String,
}

/// Relative tolerance for matching a query point against a tabulated point.
const TABLE_MATCH_TOL: f64 = 1e-12;

impl EquivariantMap {
    fn with_kind(rep: &Arc<Representation>, kind: MapKind, label: &str) -> Self {
        Self {
            rep: rep.clone(),
            kind,
            label: label.to_string(),
        }
    }

    pub fn zero(rep: &Arc<Representation>) -> Self {
        Self::with_kind(rep, MapKind::Zero, "0")
    }

    pub fn constant(rep: &Arc<Representation>, xi: AlgebraVector) -> Result<Self> {
        if xi.dim() != rep.group.algebra_dim() {
            return Err(Error::dims("constant map value", rep.group.algebra_dim(), xi.dim()));
        }
        let label = format!("const{:?}", xi.coords.as_slice());
        Ok(Self::with_kind(rep, MapKind::Constant(xi), &label))
    }

    pub fn angular_momentum(rep: &Arc<Representation>) -> Result<Self> {
        let ok = rep.dim == 6 && rep.group.ambient_dim == 3 && rep.group.algebra_dim() == 3;
        if !ok {
            return Err(Error::InvalidInput(
                "angular momentum needs SO(3) or O(3) acting diagonally on R3 + R3".into(),
            ));
        }
        Ok(Self::with_kind(rep, MapKind::AngularMomentum, "angular_momentum"))
    }

    pub fn polynomial(rep: &Arc<Representation>, p: PolyMap) -> Result<Self> {
        if p.out_dim() != rep.group.algebra_dim() || p.monomials.nvars() != rep.dim {
            return Err(Error::dims("polynomial map", rep.group.algebra_dim(), p.out_dim()));
        }
        Ok(Self::with_kind(rep, MapKind::Polynomial(p), "polynomial"))
    }

    pub fn tabulated(rep: &Arc<Representation>, table: Vec<(DVector<f64>, AlgebraVector)>) -> Self {
        Self::with_kind(rep, MapKind::Tabulated(Arc::new(table)), "tabulated")
    }

    pub fn custom(
        rep: &Arc<Representation>,
        label: &str,
        f: impl Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    ) -> Self {
        Self::with_kind(rep, MapKind::Custom(Arc::new(f)), label)
    }

    pub fn combination(terms: Vec<(f64, EquivariantMap)>) -> Result<Self> {
        let rep = terms
            .first()
            .map(|(_, m)| m.rep.clone())
            .ok_or_else(|| Error::InvalidInput("empty combination".into()))?;
        let label = terms
            .iter()
            .map(|(c, m)| format!("{c}*{}", m.label))
            .collect::<Vec<_>>()
            .join(" + ");
        Ok(Self::with_kind(&rep, MapKind::Combination(terms), &label))
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self::combination(vec![(c, self.clone())]).expect("single term")
    }

    pub fn add(&self, other: &EquivariantMap) -> Result<Self> {
        Self::combination(vec![(1.0, self.clone()), (1.0, other.clone())])
    }

    pub fn table(&self) -> Option<&[(DVector<f64>, AlgebraVector)]> {
        match &self.kind {
            MapKind::Tabulated(t) => Some(t.as_slice()),
            _ => None,
        }
    }

    pub fn eval(&self, v: &DVector<f64>) -> Result<AlgebraVector> {
        if v.len() != self.rep.dim {
            return Err(Error::dims("equivariant map argument", self.rep.dim, v.len()));
        }
        let k = self.rep.group.algebra_dim();
        Ok(match &self.kind {
            MapKind::Zero => AlgebraVector::zero(k),
            MapKind::Constant(c) => c.clone(),
            MapKind::AngularMomentum => {
                let q = v.fixed_rows::<3>(0);
                let p = v.fixed_rows::<3>(3);
                let w = q.cross(&p);
                AlgebraVector::from_slice(w.as_slice())
            }
            MapKind::Polynomial(p) => AlgebraVector::new(p.eval(v.as_slice())),
            MapKind::Tabulated(table) => {
                let scale = v.norm().max(1.0);
                table
                    .iter()
                    .find(|(p, _)| (p - v).norm() <= TABLE_MATCH_TOL * scale)
                    .map(|(_, xi)| xi.clone())
                    .ok_or_else(|| {
                        Error::InvalidInput(format!("point {:?} is not in the table", v.as_slice()))
                    })?
            }
            MapKind::Combination(terms) => {
                let mut acc = DVector::zeros(k);
                for (c, m) in terms {
                    acc += m.eval(v)?.coords * *c;
                }
                AlgebraVector::new(acc)
            }
            MapKind::Custom(f) => {
                let out = f(v);
                if out.len() != k {
                    return Err(Error::dims("custom map output", k, out.len()));
                }
                AlgebraVector::new(out)
            }
        })
    }
}

/// `max ‖X(g·v) − ρ(g) X(v)‖` over all sample pairs.
pub fn check_invariance(x: &VectorField, groups: &[GroupElement], points: &[DVector<f64>]) -> Result<f64> {
    if groups.is_empty() || points.is_empty() {
        return Err(Error::InvalidInput("invariance check needs samples".into()));
    }
    let rep = &x.rep;
    let rhos: Vec<DMatrix<f64>> = groups.iter().map(|g| rep.rho(g)).collect();
    let residuals: Vec<f64> = points
        .par_iter()
        .map(|v| -> Result<f64> {
            let xv = x.eval(v)?;
            let mut worst = 0.0_f64;
            for r in &rhos {
                let lhs = x.eval(&(r * v))?;
                worst = worst.max((lhs - r * &xv).norm());
            }
            Ok(worst)
        })
        .collect::<Result<_>>()?;
    Ok(residuals.into_iter().fold(0.0, f64::max))
}

/// `max ‖ψ(g·v) − Ad(g) ψ(v)‖` in the invariant norm.
pub fn check_equivariance(psi: &EquivariantMap, groups: &[GroupElement], points: &[DVector<f64>]) -> Result<f64> {
    if groups.is_empty() || points.is_empty() {
        return Err(Error::InvalidInput("equivariance check needs samples".into()));
    }
    let rep = &psi.rep;
    let group = &rep.group;
    let residuals: Vec<f64> = points
        .par_iter()
        .map(|v| -> Result<f64> {
            let pv = psi.eval(v)?;
            let mut worst = 0.0_f64;
            for g in groups {
                let lhs = psi.eval(&rep.act(g, v))?;
                let rhs = group.adjoint(g, &pv)?;
                worst = worst.max(group.norm(&lhs.sub(&rhs)));
            }
            Ok(worst)
        })
        .collect::<Result<_>>()?;
    Ok(residuals.into_iter().fold(0.0, f64::max))
}

/// Deterministic sampler for group elements and points.
pub struct Sampler {
    rng: ChaCha8Rng,
}

impl Sampler {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        self.rng.gen_range(lo..hi)
    }

    /// `c · exp(ξ)` with `c` cycling through component representatives and
    /// `ξ` uniform in `[-π, π]^dim g`.
    pub fn group_elements(&mut self, group: &GroupSpec, count: usize) -> Vec<GroupElement> {
        let k = group.algebra_dim();
        (0..count)
            .map(|i| {
                let c = GroupElement(group.component_reps[i % group.component_reps.len()].clone());
                if k == 0 {
                    return c;
                }
                let xi = AlgebraVector::new(DVector::from_fn(k, |_, _| {
                    self.rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI)
                }));
                c.compose(&group.exp_map(&xi, 1.0).expect("finite sample"))
            })
            .collect()
    }

    /// Uniform in the ball of the given radius (rejection from the cube).
    pub fn points(&mut self, dim: usize, count: usize, radius: f64) -> Vec<DVector<f64>> {
        (0..count).map(|_| self.point_in_ball(dim, radius)).collect()
    }

    pub fn point_in_ball(&mut self, dim: usize, radius: f64) -> DVector<f64> {
        loop {
            let v = DVector::from_fn(dim, |_, _| self.rng.gen_range(-1.0..1.0));
            if v.norm() <= 1.0 {
                return v * radius;
            }
        }
    }

    pub fn algebra_vector(&mut self, dim: usize, scale: f64) -> AlgebraVector {
        AlgebraVector::new(DVector::from_fn(dim, |_, _| self.rng.gen_range(-scale..scale)))
    }
}
