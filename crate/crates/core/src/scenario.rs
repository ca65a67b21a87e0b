//! Scenario files: a group, a representation, named fields and maps, and a
//! list of checks. Running a scenario yields a [`RunReport`] plus CSV tables.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::chain;
use crate::error::{Error, Result};
use crate::flow;
use crate::iso;
use crate::lie::{AlgebraVector, GroupSpec, Splitting, CATALOG};
use crate::poly::PolyMap;
use crate::rep::{self, EquivariantMap, Representation, Sampler, VectorField};
use crate::slice::{self, Slice, Tilt};
use crate::spectra;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub group: String,
    pub representation: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub fields: BTreeMap<String, FieldSpec>,
    #[serde(default)]
    pub maps: BTreeMap<String, MapSpec>,
    pub checks: Vec<CheckSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<String>,
}

/// Sparse polynomial term: `coeff · s^exps` in output component `out`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Term {
    pub out: usize,
    pub coeff: f64,
    pub exps: Vec<u32>,
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FieldSpec {
    Zero,
    Linear {
        matrix: Vec<Vec<f64>>,
    },
    Polynomial {
        terms: Vec<Term>,
    },
    CentralForce {
        k: f64,
        p: f64,
        #[serde(default = "one")]
        mass: f64,
    },
    /// `ψ_V` for a named map.
    Induced {
        map: String,
    },
    /// `Σ c_i X_i` over named fields.
    Combination {
        terms: Vec<(f64, String)>,
    },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MapSpec {
    Zero,
    Constant { value: Vec<f64> },
    AngularMomentum,
    Polynomial { terms: Vec<Term> },
    Combination { terms: Vec<(f64, String)> },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointSampling {
    pub count: usize,
    pub radius: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub center: Option<Vec<f64>>,
    /// Rejects samples closer than this to the center.
    #[serde(default)]
    pub min_radius: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TiltSpec {
    Matrix(Vec<Vec<f64>>),
    Random { amplitude: f64, seed: u64 },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SliceConfig {
    pub radius: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tilt: Option<TiltSpec>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CheckSpec {
    pub name: String,
    #[serde(flatten)]
    pub kind: CheckKind,
}

fn default_groups() -> usize {
    8
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CheckKind {
    Equivariance {
        #[serde(default)]
        fields: Vec<String>,
        #[serde(default)]
        maps: Vec<String>,
        points: PointSampling,
        #[serde(default = "default_groups")]
        groups: usize,
        tolerance: f64,
    },
    Isomorphism {
        x: String,
        y: String,
        psi: String,
        points: PointSampling,
        #[serde(default = "default_groups")]
        groups: usize,
        tolerance: f64,
    },
    GaugeIdentity {
        x: String,
        y: String,
        psi: String,
        points: PointSampling,
        t_end: f64,
        step: f64,
        tolerance: f64,
        min_ratio: f64,
    },
    OrbitFlow {
        x: String,
        y: String,
        points: PointSampling,
        t_end: f64,
        step: f64,
        tolerance: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        control: Option<String>,
        #[serde(default)]
        control_min: f64,
    },
    WitnessRecovery {
        x: String,
        y: String,
        points: PointSampling,
        #[serde(default = "default_groups")]
        groups: usize,
        tolerance: f64,
        equivariance_tolerance: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        singular_point: Option<Vec<f64>>,
    },
    RelativeEquilibrium {
        field: String,
        guess: Vec<f64>,
        xi_guess: Vec<f64>,
        tolerance: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        expected_xi: Option<Vec<f64>>,
    },
    Shift {
        x: String,
        y: String,
        psi: String,
        tolerance: f64,
    },
    Census {
        points: Vec<Vec<f64>>,
        expected_dims: Vec<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        expected_fixed: Option<Vec<usize>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        expected_components: Option<Vec<usize>>,
    },
    SliceSpectra {
        field: String,
        point: Vec<f64>,
        /// Refines `point` to a relative equilibrium first.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        xi_guess: Option<Vec<f64>>,
        slice1: SliceConfig,
        slice2: SliceConfig,
        /// Basis of the second complement `m₂`, in algebra coordinates.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        m2: Option<Vec<Vec<f64>>>,
        membership_tolerance: f64,
        real_tolerance: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        full_tolerance: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        min_imag_shift: Option<f64>,
    },
    SliceChange {
        field: String,
        point: Vec<f64>,
        slice1: SliceConfig,
        slice2: SliceConfig,
        samples: usize,
        fraction: f64,
        membership_tolerance: f64,
        identity_tolerance: f64,
    },
    ChainHomotopy {
        point: Vec<f64>,
        degrees: Vec<usize>,
        tolerance: f64,
        /// Alternative complement for the functoriality comparison.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        alt_m: Option<Vec<Vec<f64>>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        expected_h_dim: Option<usize>,
    },
}

impl CheckKind {
    pub fn tag(&self) -> &'static str {
        match self {
            CheckKind::Equivariance { .. } => "equivariance",
            CheckKind::Isomorphism { .. } => "isomorphism",
            CheckKind::GaugeIdentity { .. } => "gauge_identity",
            CheckKind::OrbitFlow { .. } => "orbit_flow",
            CheckKind::WitnessRecovery { .. } => "witness_recovery",
            CheckKind::RelativeEquilibrium { .. } => "relative_equilibrium",
            CheckKind::Shift { .. } => "shift",
            CheckKind::Census { .. } => "census",
            CheckKind::SliceSpectra { .. } => "slice_spectra",
            CheckKind::SliceChange { .. } => "slice_change",
            CheckKind::ChainHomotopy { .. } => "chain_homotopy",
        }
    }

    fn field_refs(&self) -> Vec<&str> {
        match self {
            CheckKind::Equivariance { fields, .. } => fields.iter().map(String::as_str).collect(),
            CheckKind::Isomorphism { x, y, .. }
            | CheckKind::GaugeIdentity { x, y, .. }
            | CheckKind::WitnessRecovery { x, y, .. }
            | CheckKind::Shift { x, y, .. } => vec![x, y],
            CheckKind::OrbitFlow { x, y, control, .. } => {
                let mut v = vec![x.as_str(), y.as_str()];
                v.extend(control.as_deref());
                v
            }
            CheckKind::RelativeEquilibrium { field, .. }
            | CheckKind::SliceSpectra { field, .. }
            | CheckKind::SliceChange { field, .. } => vec![field],
            CheckKind::Census { .. } | CheckKind::ChainHomotopy { .. } => Vec::new(),
        }
    }

    fn map_refs(&self) -> Vec<&str> {
        match self {
            CheckKind::Equivariance { maps, .. } => maps.iter().map(String::as_str).collect(),
            CheckKind::Isomorphism { psi, .. } | CheckKind::GaugeIdentity { psi, .. } | CheckKind::Shift { psi, .. } => {
                vec![psi]
            }
            _ => Vec::new(),
        }
    }

    fn tolerances(&self) -> Vec<f64> {
        match self {
            CheckKind::Equivariance { tolerance, .. }
            | CheckKind::Isomorphism { tolerance, .. }
            | CheckKind::GaugeIdentity { tolerance, .. }
            | CheckKind::OrbitFlow { tolerance, .. }
            | CheckKind::RelativeEquilibrium { tolerance, .. }
            | CheckKind::Shift { tolerance, .. }
            | CheckKind::ChainHomotopy { tolerance, .. } => vec![*tolerance],
            CheckKind::WitnessRecovery {
                tolerance,
                equivariance_tolerance,
                ..
            } => vec![*tolerance, *equivariance_tolerance],
            CheckKind::SliceSpectra {
                membership_tolerance,
                real_tolerance,
                full_tolerance,
                ..
            } => {
                let mut v = vec![*membership_tolerance, *real_tolerance];
                v.extend(*full_tolerance);
                v
            }
            CheckKind::SliceChange {
                membership_tolerance,
                identity_tolerance,
                ..
            } => vec![*membership_tolerance, *identity_tolerance],
            CheckKind::Census { .. } => Vec::new(),
        }
    }
}

/// Parses a scenario; errors carry the serde line/column diagnostics.
pub fn parse_scenario(text: &str) -> Result<Scenario> {
    let s: Scenario = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    validate(&s)?;
    Ok(s)
}

pub fn load_scenario(path: &Path) -> Result<Scenario> {
    let text = fs::read_to_string(path)?;
    parse_scenario(&text).map_err(|e| match e {
        Error::Parse(m) => Error::Parse(format!("{}: {m}", path.display())),
        other => other,
    })
}

fn validate(s: &Scenario) -> Result<()> {
    let mut seen = std::collections::BTreeSet::new();
    for c in &s.checks {
        if !seen.insert(c.name.as_str()) {
            return Err(Error::Parse(format!("duplicate check name `{}`", c.name)));
        }
        for f in c.kind.field_refs() {
            if !s.fields.contains_key(f) {
                return Err(Error::Parse(format!("check `{}`: unknown field `{f}`", c.name)));
            }
        }
        for m in c.kind.map_refs() {
            if !s.maps.contains_key(m) {
                return Err(Error::Parse(format!("check `{}`: unknown map `{m}`", c.name)));
            }
        }
        for t in c.kind.tolerances() {
            if !(t > 0.0 && t.is_finite()) {
                return Err(Error::Parse(format!("check `{}`: tolerance {t} must be positive", c.name)));
            }
        }
    }
    for (name, f) in &s.fields {
        match f {
            FieldSpec::Induced { map } if !s.maps.contains_key(map) => {
                return Err(Error::Parse(format!("field `{name}`: unknown map `{map}`")));
            }
            FieldSpec::Combination { terms } => {
                for (_, t) in terms {
                    if !s.fields.contains_key(t) {
                        return Err(Error::Parse(format!("field `{name}`: unknown field `{t}`")));
                    }
                }
            }
            _ => {}
        }
    }
    for (name, m) in &s.maps {
        if let MapSpec::Combination { terms } = m {
            for (_, t) in terms {
                if !s.maps.contains_key(t) {
                    return Err(Error::Parse(format!("map `{name}`: unknown map `{t}`")));
                }
            }
        }
    }
    Ok(())
}

/// Resolved objects of a scenario.
pub struct Context {
    pub rep: Arc<Representation>,
    pub fields: BTreeMap<String, VectorField>,
    pub maps: BTreeMap<String, EquivariantMap>,
}

fn poly_from_terms(nvars: usize, out: usize, terms: &[Term], what: &str) -> Result<PolyMap> {
    let t: Vec<(usize, f64, Vec<u32>)> = terms.iter().map(|t| (t.out, t.coeff, t.exps.clone())).collect();
    PolyMap::from_terms(nvars, out, &t).ok_or_else(|| Error::Parse(format!("{what}: polynomial term out of range")))
}

fn resolve_map(s: &Scenario, rep: &Arc<Representation>, name: &str, cache: &mut BTreeMap<String, EquivariantMap>, depth: usize) -> Result<EquivariantMap> {
    if let Some(m) = cache.get(name) {
        return Ok(m.clone());
    }
    if depth > s.maps.len() {
        return Err(Error::Parse(format!("map `{name}` is defined in terms of itself")));
    }
    let spec = s.maps.get(name).ok_or_else(|| Error::Parse(format!("unknown map `{name}`")))?;
    let k = rep.group.algebra_dim();
    let m = match spec {
        MapSpec::Zero => EquivariantMap::zero(rep),
        MapSpec::Constant { value } => {
            if value.len() != k {
                return Err(Error::Parse(format!("map `{name}`: constant has {} entries, algebra has {k}", value.len())));
            }
            EquivariantMap::constant(rep, AlgebraVector::from_slice(value))?
        }
        MapSpec::AngularMomentum => EquivariantMap::angular_momentum(rep)?,
        MapSpec::Polynomial { terms } => EquivariantMap::polynomial(rep, poly_from_terms(rep.dim, k, terms, name)?)?,
        MapSpec::Combination { terms } => {
            let parts = terms
                .iter()
                .map(|(c, t)| Ok((*c, resolve_map(s, rep, t, cache, depth + 1)?)))
                .collect::<Result<Vec<_>>>()?;
            EquivariantMap::combination(parts)?
        }
    };
    cache.insert(name.to_string(), m.clone());
    Ok(m)
}

fn resolve_field(
    s: &Scenario,
    rep: &Arc<Representation>,
    name: &str,
    maps: &BTreeMap<String, EquivariantMap>,
    cache: &mut BTreeMap<String, VectorField>,
    depth: usize,
) -> Result<VectorField> {
    if let Some(f) = cache.get(name) {
        return Ok(f.clone());
    }
    if depth > s.fields.len() {
        return Err(Error::Parse(format!("field `{name}` is defined in terms of itself")));
    }
    let spec = s.fields.get(name).ok_or_else(|| Error::Parse(format!("unknown field `{name}`")))?;
    let n = rep.dim;
    let f = match spec {
        FieldSpec::Zero => VectorField::zero(rep),
        FieldSpec::Linear { matrix } => {
            if matrix.len() != n || matrix.iter().any(|r| r.len() != n) {
                return Err(Error::Parse(format!("field `{name}`: matrix must be {n}×{n}")));
            }
            VectorField::linear(rep, DMatrix::from_fn(n, n, |i, j| matrix[i][j]))?
        }
        FieldSpec::Polynomial { terms } => VectorField::polynomial(rep, poly_from_terms(n, n, terms, name)?)?,
        FieldSpec::CentralForce { k, p, mass } => VectorField::central_force(rep, *k, *p, *mass)?,
        FieldSpec::Induced { map } => rep::induced_field_from_map(&maps[map]),
        FieldSpec::Combination { terms } => {
            let parts = terms
                .iter()
                .map(|(c, t)| Ok((*c, resolve_field(s, rep, t, maps, cache, depth + 1)?)))
                .collect::<Result<Vec<_>>>()?;
            VectorField::combination(parts)?
        }
    }
    .with_label(name);
    cache.insert(name.to_string(), f.clone());
    Ok(f)
}

pub fn build_context(s: &Scenario) -> Result<Context> {
    let group = GroupSpec::by_name(&s.group).map_err(|e| Error::Parse(format!("group: {e}")))?;
    let rep = Representation::parse(group, &s.representation).map_err(|e| Error::Parse(format!("representation: {e}")))?;
    let mut maps = BTreeMap::new();
    for name in s.maps.keys() {
        resolve_map(s, &rep, name, &mut maps, 0)?;
    }
    let mut fields = BTreeMap::new();
    for name in s.fields.keys() {
        resolve_field(s, &rep, name, &maps, &mut fields, 0)?;
    }
    Ok(Context { rep, fields, maps })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CheckRecord {
    pub name: String,
    pub kind: String,
    pub residuals: BTreeMap<String, f64>,
    pub tolerance: f64,
    pub pass: bool,
    pub wall_time: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunReport {
    pub scenario: String,
    pub digest: String,
    pub seed: u64,
    pub tol_scale: f64,
    pub checks: Vec<CheckRecord>,
    pub pass: bool,
    pub artifacts: Vec<String>,
}

impl RunReport {
    pub fn check(&self, name: &str) -> Option<&CheckRecord> {
        self.checks.iter().find(|c| c.name == name)
    }

    /// Report JSON with every timing field zeroed.
    pub fn without_timing(&self) -> RunReport {
        let mut r = self.clone();
        for c in &mut r.checks {
            c.wall_time = 0.0;
        }
        r
    }
}

#[derive(Clone, Debug)]
pub struct RunOptions {
    pub seed: Option<u64>,
    pub tol_scale: f64,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { seed: None, tol_scale: 1.0 }
    }
}

pub struct RunOutput {
    pub report: RunReport,
    /// `(file name, contents)`.
    pub artifacts: Vec<(String, String)>,
}

struct Outcome {
    residuals: BTreeMap<String, f64>,
    tolerance: f64,
    pass: bool,
    notes: Vec<String>,
    artifacts: Vec<(String, String)>,
}

impl Outcome {
    fn new(tolerance: f64) -> Self {
        Self {
            residuals: BTreeMap::new(),
            tolerance,
            pass: true,
            notes: Vec::new(),
            artifacts: Vec::new(),
        }
    }

    fn record(&mut self, key: &str, value: f64) -> &mut Self {
        self.residuals.insert(key.to_string(), value);
        self
    }

    /// Records `value` and requires `value ≤ tol` (NaN fails).
    fn bound(&mut self, key: &str, value: f64, tol: f64) -> &mut Self {
        self.record(key, value);
        if value.is_nan() || value > tol {
            self.pass = false;
            self.notes.push(format!("{key} = {value:.3e} exceeds {tol:.1e}"));
        }
        self
    }

    fn require(&mut self, ok: bool, why: impl Into<String>) -> &mut Self {
        if !ok {
            self.pass = false;
            self.notes.push(why.into());
        }
        self
    }
}

fn digest(s: &Scenario, seed: u64) -> String {
    let mut canon = s.clone();
    canon.seed = seed;
    let json = serde_json::to_string(&canon).expect("scenario serializes");
    let hash = Sha256::digest(json.as_bytes());
    hash.iter().fold(String::with_capacity(64), |mut out, b| {
        let _ = write!(out, "{b:02x}");
        out
    })
}

fn sample_points(rep: &Representation, spec: &PointSampling, seed: u64) -> Result<Vec<DVector<f64>>> {
    let n = rep.dim;
    let center = match &spec.center {
        Some(c) if c.len() != n => return Err(Error::dims("sampling center", n, c.len())),
        Some(c) => DVector::from_column_slice(c),
        None => DVector::zeros(n),
    };
    let mut sampler = Sampler::new(seed);
    let mut out = Vec::with_capacity(spec.count);
    let mut tries = 0;
    while out.len() < spec.count {
        tries += 1;
        if tries > 1000 * spec.count.max(1) {
            return Err(Error::InvalidInput("could not draw points outside min_radius".into()));
        }
        let d = sampler.point_in_ball(n, spec.radius);
        if d.norm() >= spec.min_radius {
            out.push(&center + d);
        }
    }
    Ok(out)
}

fn vector(v: &[f64], n: usize, what: &str) -> Result<DVector<f64>> {
    if v.len() != n {
        return Err(Error::dims(what, n, v.len()));
    }
    Ok(DVector::from_column_slice(v))
}

fn build_slice(rep: &Arc<Representation>, x: &DVector<f64>, cfg: &SliceConfig, base: Option<&Slice>) -> Result<Slice> {
    let normal = match base {
        Some(b) if (b.base_point.clone() - x).norm() == 0.0 && b.radius == cfg.radius => b.clone(),
        _ => Slice::build(rep, x, cfg.radius)?,
    };
    match &cfg.tilt {
        None => Ok(normal),
        Some(TiltSpec::Matrix(rows)) => {
            let r = rows.len();
            let c = rows.first().map(|r| r.len()).unwrap_or(0);
            if rows.iter().any(|row| row.len() != c) {
                return Err(Error::InvalidInput("ragged tilt matrix".into()));
            }
            normal.tilted(&Tilt::Matrix(DMatrix::from_fn(r, c, |i, j| rows[i][j])))
        }
        Some(TiltSpec::Random { amplitude, seed }) => normal.tilted(&Tilt::Random {
            amplitude: *amplitude,
            seed: *seed,
        }),
    }
}

fn complement(group: &GroupSpec, base: &Slice, split: &Splitting, rows: &[Vec<f64>]) -> Result<Splitting> {
    let m = rows
        .iter()
        .map(|r| vector(r, group.algebra_dim(), "complement vector").map(AlgebraVector::new))
        .collect::<Result<Vec<_>>>()?;
    Splitting::with_complement(group, split.h_basis.clone(), m, &base.stabilizer_generators())
}

fn run_check(ctx: &Context, spec: &CheckSpec, seed: u64, scale: f64) -> Result<Outcome> {
    let rep = &ctx.rep;
    let group = &rep.group;
    let n = rep.dim;
    let field = |name: &str| ctx.fields[name].clone();
    let map = |name: &str| ctx.maps[name].clone();
    let mut sampler = Sampler::new(seed ^ 0x9e37_79b9);
    match &spec.kind {
        CheckKind::Equivariance {
            fields,
            maps,
            points,
            groups,
            tolerance,
        } => {
            let tol = tolerance * scale;
            let pts = sample_points(rep, points, seed)?;
            let gs = sampler.group_elements(group, *groups);
            let mut o = Outcome::new(tol);
            for f in fields {
                o.bound(&format!("field:{f}"), rep::check_invariance(&field(f), &gs, &pts)?, tol);
            }
            for m in maps {
                o.bound(&format!("map:{m}"), rep::check_equivariance(&map(m), &gs, &pts)?, tol);
            }
            Ok(o)
        }
        CheckKind::Isomorphism {
            x,
            y,
            psi,
            points,
            groups,
            tolerance,
        } => {
            let tol = tolerance * scale;
            let pts = sample_points(rep, points, seed)?;
            let gs = sampler.group_elements(group, *groups);
            let w = iso::verify_isomorphism(&field(x), &field(y), &map(psi), &gs, &pts)?;
            let mut o = Outcome::new(tol);
            o.bound("witness", w.verified_residual, tol);
            o.record("equivariance", w.equivariance_residual);
            Ok(o)
        }
        CheckKind::GaugeIdentity {
            x,
            y,
            psi,
            points,
            t_end,
            step,
            tolerance,
            min_ratio,
        } => {
            let tol = tolerance * scale;
            let pts = sample_points(rep, points, seed)?;
            let (fx, fy, p) = (field(x), field(y), map(psi));
            let coarse = flow::verify_gauge_identity(&fx, &fy, &p, &pts, *t_end, *step)?;
            let fine = flow::verify_gauge_identity(&fx, &fy, &p, &pts, *t_end, 0.5 * step)?;
            let ratio = coarse.sup_error / fine.sup_error.max(f64::MIN_POSITIVE);
            let mut o = Outcome::new(tol);
            o.bound("sup_error", coarse.sup_error, tol);
            o.record("sup_error_half_step", fine.sup_error);
            o.record("ratio", ratio);
            o.record("membership_drift", coarse.membership_drift);
            o.require(ratio >= *min_ratio, format!("halving the step gained only {ratio:.2}×, need {min_ratio}"));
            let traj_x = flow::integrate_flow(&fx, &pts[0], *t_end, *step)?;
            let traj_y = flow::integrate_flow(&fy, &pts[0], *t_end, *step)?;
            let gauge = flow::integrate_gauge_along(&p, &traj_y, flow::GaugeMethod::CommutatorFree4)?;
            o.artifacts.push((format!("{}_flow_x.csv", spec.name), traj_x.to_csv()));
            o.artifacts.push((format!("{}_flow_y.csv", spec.name), traj_y.to_csv()));
            o.artifacts.push((format!("{}_gauge.csv", spec.name), gauge.to_csv()));
            Ok(o)
        }
        CheckKind::OrbitFlow {
            x,
            y,
            points,
            t_end,
            step,
            tolerance,
            control,
            control_min,
        } => {
            let tol = tolerance * scale;
            let pts = sample_points(rep, points, seed)?;
            let inv = rep.invariant_functions();
            let opts = flow::FlowOptions::default();
            let d = iso::orbit_flow_check(&field(x), &field(y), &inv, &pts, *t_end, *step, &opts)?;
            let mut o = Outcome::new(tol);
            o.bound("discrepancy", d, tol);
            if let Some(c) = control {
                let dc = iso::orbit_flow_check(&field(x), &field(c), &inv, &pts, *t_end, *step, &opts)?;
                o.record("control_discrepancy", dc);
                o.require(dc > *control_min, format!("control pair only differs by {dc:.3e}"));
            }
            Ok(o)
        }
        CheckKind::WitnessRecovery {
            x,
            y,
            points,
            groups,
            tolerance,
            equivariance_tolerance,
            singular_point,
        } => {
            let tol = tolerance * scale;
            let (fx, fy) = (field(x), field(y));
            let pts = sample_points(rep, points, seed)?;
            let gs = sampler.group_elements(group, *groups);
            // the table must contain the translates it is tested on
            let mut table_pts = pts.clone();
            for g in &gs {
                table_pts.extend(pts.iter().map(|v| rep.act(g, v)));
            }
            let rec = iso::recover_witness(&fx, &fy, &table_pts)?;
            let eq = rep::check_equivariance(&rec.psi, &gs, &pts)?;
            let mut o = Outcome::new(tol);
            o.bound("reproduction", rec.residual, tol);
            o.bound("equivariance", eq, equivariance_tolerance * scale);
            if let Some(sp) = singular_point {
                let v = vector(sp, n, "singular point")?;
                match iso::recover_witness(&fx, &fy, &[v]) {
                    Err(Error::SingularPoint { sigma_min, .. }) => {
                        o.record("singular_sigma_min", sigma_min);
                    }
                    Err(e) => {
                        o.require(false, format!("expected a singular-point error, got {e}"));
                    }
                    Ok(_) => {
                        o.require(false, "recovery succeeded at a non-free point");
                    }
                }
            }
            Ok(o)
        }
        CheckKind::RelativeEquilibrium {
            field: f,
            guess,
            xi_guess,
            tolerance,
            expected_xi,
        } => {
            let tol = tolerance * scale;
            let x0 = vector(guess, n, "guess")?;
            let xi0 = AlgebraVector::new(vector(xi_guess, group.algebra_dim(), "xi_guess")?);
            let re = flow::find_relative_equilibrium(&field(f), &x0, &xi0)?;
            let mut o = Outcome::new(tol);
            o.bound("residual", re.residual, tol);
            o.notes.push(format!("x = {:?}, xi = {:?}", re.x.as_slice(), re.xi.coords.as_slice()));
            if let Some(e) = expected_xi {
                let e = vector(e, group.algebra_dim(), "expected_xi")?;
                o.bound("xi_error", (&re.xi.coords - e).norm(), 1e-8 * scale);
            }
            Ok(o)
        }
        CheckKind::Shift { x, y, psi, tolerance } => {
            let tol = tolerance * scale;
            let r = spectra::shift_check(&field(x), &field(y), &map(psi))?;
            let mut o = Outcome::new(tol);
            o.bound("residual", r.residual, tol);
            o.record("richardson_error", r.richardson_error);
            Ok(o)
        }
        CheckKind::Census {
            points,
            expected_dims,
            expected_fixed,
            expected_components,
        } => {
            let mut o = Outcome::new(0.0);
            let mut csv = String::from("point,stabilizer_dim,components,fixed_dim\n");
            let mut dims = Vec::new();
            let mut fixed = Vec::new();
            let mut comps = Vec::new();
            for p in points {
                let x = vector(p, n, "census point")?;
                let s = Slice::build(rep, &x, 1.0)?;
                let f = spectra::fixed_subalgebra(group, &s.stab_algebra, &s.stab_component_gens)?;
                dims.push(s.stab_algebra.len());
                comps.push(s.stab_component_gens.len());
                fixed.push(f.basis.len());
                o.notes.extend(s.warnings.iter().cloned());
                let _ = writeln!(
                    csv,
                    "\"{:?}\",{},{},{}",
                    p,
                    s.stab_algebra.len(),
                    s.stab_component_gens.len(),
                    f.basis.len()
                );
            }
            o.require(&dims == expected_dims, format!("stabilizer dims {dims:?}, expected {expected_dims:?}"));
            if let Some(e) = expected_fixed {
                o.require(&fixed == e, format!("fixed subalgebra dims {fixed:?}, expected {e:?}"));
            }
            if let Some(e) = expected_components {
                o.require(&comps == e, format!("component counts {comps:?}, expected {e:?}"));
            }
            o.notes.push(format!("dims {dims:?}, components {comps:?}, fixed {fixed:?}"));
            o.artifacts.push((format!("{}.csv", spec.name), csv));
            Ok(o)
        }
        CheckKind::SliceSpectra {
            field: f,
            point,
            xi_guess,
            slice1,
            slice2,
            m2,
            membership_tolerance,
            real_tolerance,
            full_tolerance,
            min_imag_shift,
        } => {
            let xf = field(f);
            let mut x = vector(point, n, "point")?;
            if let Some(g) = xi_guess {
                let xi0 = AlgebraVector::new(vector(g, group.algebra_dim(), "xi_guess")?);
                x = flow::find_relative_equilibrium(&xf, &x, &xi0)?.x;
            }
            let base = Slice::build(rep, &x, slice1.radius)?;
            let s1 = build_slice(rep, &x, slice1, Some(&base))?;
            let s2 = build_slice(rep, &x, slice2, Some(&base))?;
            let split1 = base.splitting()?;
            let split2 = match m2 {
                Some(rows) => complement(group, &base, &split1, rows)?,
                None => split1.clone(),
            };
            let c = spectra::compare_slice_spectra(&xf, &s1, &split1, &s2, &split2)?;
            let mut o = Outcome::new(membership_tolerance * scale);
            o.bound("membership", c.membership_residual, membership_tolerance * scale);
            o.bound("real_part", c.max_real_discrepancy, real_tolerance * scale);
            o.bound("commutator", c.commutator_residual, 1e-6 * scale);
            o.bound("eigenvector", c.eigenvector_residual, 1e-4 * scale);
            o.bound("shift_real_part", c.shift_real_part, 1e-10 * scale);
            o.record("imag_part", c.max_imag_discrepancy);
            o.record("fixed_dim", c.fixed_subalgebra.len() as f64);
            if let Some(t) = full_tolerance {
                o.bound("full_spectrum", c.max_eigenvalue_discrepancy, t * scale);
            }
            if let Some(m) = min_imag_shift {
                o.require(
                    c.max_imag_discrepancy >= *m,
                    format!("imaginary shift {:.3e} below {m:.1e}", c.max_imag_discrepancy),
                );
            }
            o.require(c.warnings.iter().all(|w| !w.contains("ambiguity")), "eigenvalue pairing is ambiguous");
            o.notes.extend(c.warnings.iter().cloned());
            o.artifacts.push((format!("{}_pairs.csv", spec.name), c.pairs_csv()));
            Ok(o)
        }
        CheckKind::SliceChange {
            field: f,
            point,
            slice1,
            slice2,
            samples,
            fraction,
            membership_tolerance,
            identity_tolerance,
        } => {
            let x = vector(point, n, "point")?;
            let base = Slice::build(rep, &x, slice1.radius)?;
            let s1 = build_slice(rep, &x, slice1, Some(&base))?;
            let s2 = build_slice(rep, &x, slice2, Some(&base))?;
            let split = base.splitting()?;
            let pts = s1.sample_points(*samples, *fraction, seed);
            let w = slice::slice_change_witness(&field(f), &s1, &s2, &split, &pts)?;
            let mut o = Outcome::new(identity_tolerance * scale);
            o.bound("membership", w.membership_residual, membership_tolerance * scale);
            o.bound("identity", w.identity_residual, identity_tolerance * scale);
            let mut csv = String::from("index,membership,identity,nu\n");
            for (i, s) in w.samples.iter().enumerate() {
                let _ = writeln!(csv, "{i},{:.6e},{:.6e},\"{:?}\"", s.membership, s.identity, s.nu.coords.as_slice());
            }
            o.artifacts.push((format!("{}.csv", spec.name), csv));
            Ok(o)
        }
        CheckKind::ChainHomotopy {
            point,
            degrees,
            tolerance,
            alt_m,
            expected_h_dim,
        } => {
            let tol = tolerance * scale;
            let x = vector(point, n, "point")?;
            let s = Slice::build(rep, &x, 1.0)?;
            let split = s.splitting()?;
            let reports = chain::chain_sweep(&s, &split, degrees)?;
            let mut o = Outcome::new(tol);
            let mut csv = String::from(
                "degree,c1_slice,c0_slice,m_maps,c1_tube,c0_tube,rank_slice,rank_tube,coker_slice,coker_tube,chain,pk,homotopy1,homotopy0,pass\n",
            );
            let worst = |f: &dyn Fn(&chain::HomotopyReport) -> f64| reports.iter().map(f).fold(0.0, f64::max);
            o.bound("chain_map", worst(&|r| r.chain_map_residual), tol);
            o.bound("p_k", worst(&|r| r.p1k1_residual.max(r.p0k0_residual)), tol);
            o.bound("homotopy", worst(&|r| r.homotopy1_residual.max(r.homotopy0_residual)), tol);
            o.record("dim_h", split.h_dim() as f64);
            o.record("dim_m", split.m_dim() as f64);
            for r in &reports {
                let d = &r.dims;
                let _ = writeln!(
                    csv,
                    "{},{},{},{},{},{},{},{},{},{},{:.3e},{:.3e},{:.3e},{:.3e},{}",
                    r.degree,
                    d.c1_slice,
                    d.c0_slice,
                    d.m_maps,
                    d.c1_tube,
                    d.c0_tube,
                    r.rank_boundary_slice,
                    r.rank_boundary_tube,
                    r.coker_slice,
                    r.coker_tube,
                    r.chain_map_residual,
                    r.p1k1_residual.max(r.p0k0_residual),
                    r.homotopy1_residual,
                    r.homotopy0_residual,
                    r.pass
                );
                o.require(r.pass, format!("degree {}: {:?}", r.degree, r.counterexamples));
                o.require(r.coker_slice == r.coker_tube, format!("degree {}: cokernel dimensions differ", r.degree));
            }
            if let Some(e) = expected_h_dim {
                o.require(split.h_dim() == *e, format!("dim h = {}, expected {e}", split.h_dim()));
            }
            if let Some(rows) = alt_m {
                let alt = complement(group, &s, &split, rows)?;
                let other = chain::chain_sweep(&s, &alt, degrees)?;
                let same = reports.iter().zip(&other).all(|(a, b)| {
                    a.pass == b.pass
                        && a.dims == b.dims
                        && a.rank_boundary_slice == b.rank_boundary_slice
                        && a.rank_boundary_tube == b.rank_boundary_tube
                });
                o.require(same, "changing the splitting changed a rank or an outcome");
                o.record(
                    "functoriality_homotopy",
                    other.iter().map(|r| r.homotopy1_residual.max(r.homotopy0_residual)).fold(0.0, f64::max),
                );
            }
            o.artifacts.push((format!("{}.csv", spec.name), csv));
            Ok(o)
        }
    }
}

/// Runs every check; a failing or erroring check never stops the others.
pub fn run_scenario(s: &Scenario, opts: &RunOptions) -> Result<RunOutput> {
    let ctx = build_context(s)?;
    let seed = opts.seed.unwrap_or(s.seed);
    let scale = if opts.tol_scale > 0.0 { opts.tol_scale } else { 1.0 };
    let results: Vec<(CheckRecord, Vec<(String, String)>)> = s
        .checks
        .par_iter()
        .enumerate()
        .map(|(i, c)| {
            let start = Instant::now();
            let check_seed = seed.wrapping_mul(1_000_003).wrapping_add(i as u64);
            let outcome = run_check(&ctx, c, check_seed, scale);
            let wall_time = start.elapsed().as_secs_f64();
            match outcome {
                Ok(o) => (
                    CheckRecord {
                        name: c.name.clone(),
                        kind: c.kind.tag().to_string(),
                        residuals: o.residuals,
                        tolerance: o.tolerance,
                        pass: o.pass,
                        wall_time,
                        error: None,
                        notes: o.notes,
                    },
                    o.artifacts,
                ),
                Err(e) => (
                    CheckRecord {
                        name: c.name.clone(),
                        kind: c.kind.tag().to_string(),
                        residuals: BTreeMap::new(),
                        tolerance: c.kind.tolerances().first().copied().unwrap_or(0.0) * scale,
                        pass: false,
                        wall_time,
                        error: Some(e.to_string()),
                        notes: Vec::new(),
                    },
                    Vec::new(),
                ),
            }
        })
        .collect();
    let mut checks = Vec::with_capacity(results.len());
    let mut artifacts = Vec::new();
    for (r, a) in results {
        checks.push(r);
        artifacts.extend(a);
    }
    let report = RunReport {
        scenario: s.name.clone(),
        digest: digest(s, seed),
        seed,
        tol_scale: scale,
        pass: checks.iter().all(|c| c.pass),
        checks,
        artifacts: artifacts.iter().map(|(n, _)| n.clone()).collect(),
    };
    Ok(RunOutput { report, artifacts })
}

fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    let file = path.file_name().and_then(|f| f.to_str()).unwrap_or("out");
    let tmp = dir.join(format!(".{file}.tmp"));
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Writes `report.json` and the CSV tables into `dir`; returns the paths.
pub fn write_outputs(out: &RunOutput, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for (name, body) in &out.artifacts {
        let p = dir.join(name);
        write_atomic(&p, body)?;
        written.push(p);
    }
    let p = dir.join("report.json");
    let json = serde_json::to_string_pretty(&out.report).map_err(|e| Error::InvalidInput(e.to_string()))?;
    write_atomic(&p, &json)?;
    written.push(p);
    Ok(written)
}

const BUILTINS: &[(&str, &str)] = &[
    ("so2_minimal", include_str!("../scenarios/so2_minimal.json")),
    ("central_force_o3", include_str!("../scenarios/central_force_o3.json")),
    ("torus_shift", include_str!("../scenarios/torus_shift.json")),
    ("reflection_line", include_str!("../scenarios/reflection_line.json")),
];

pub fn builtin_names() -> Vec<&'static str> {
    BUILTINS.iter().map(|(n, _)| *n).collect()
}

pub fn builtin(name: &str) -> Option<Result<Scenario>> {
    BUILTINS.iter().find(|(n, _)| *n == name).map(|(_, text)| parse_scenario(text))
}

#[derive(Clone, Debug, Serialize)]
pub struct Catalog {
    pub groups: Vec<String>,
    pub representations: Vec<&'static str>,
    pub field_kinds: Vec<&'static str>,
    pub map_kinds: Vec<&'static str>,
    pub check_kinds: Vec<&'static str>,
    pub scenarios: Vec<&'static str>,
}

pub fn list_builtins() -> Catalog {
    Catalog {
        groups: CATALOG.iter().map(|s| s.to_string()).collect(),
        representations: vec!["standard", "diagonal:<k>"],
        field_kinds: vec!["zero", "linear", "polynomial", "central_force", "induced", "combination"],
        map_kinds: vec!["zero", "constant", "angular_momentum", "polynomial", "combination"],
        check_kinds: EXPLANATIONS.iter().map(|(k, _)| *k).collect(),
        scenarios: builtin_names(),
    }
}

const EXPLANATIONS: &[(&str, &str)] = &[
    ("census", "Stabilizer data at each point: dim h = dim ker(ξ ↦ δρ(ξ)x), the number of components of H, and dim h^H with h^H = {ξ ∈ h : Ad(h)ξ = ξ for all h ∈ H}."),
    ("chain_homotopy", "Truncated complexes ∂: maps → fields, ∂ψ(y) = δρ(ψ(y))y, on the slice (H-equivariant, h-valued) and on the tube (restricted to S, g-valued). Checks K₀∂ = ∂K₁, p₁K₁ = id, p₀K₀ = id, id − K₁p₁ = h∂, id − K₀p₀ = ∂h, and that K₀ induces a bijection coker ∂_slice → coker ∂_tube."),
    ("equivariance", "X(g·v) = ρ(g)X(v) for fields and ψ(g·v) = Ad(g)ψ(v) for maps, at sampled g and v."),
    ("gauge_identity", "Φ^X_t(m) = g(t)·Φ^Y_t(m) where X = Y + ψ_V and ġ g⁻¹ = Ad(g)ψ(Φ^Y_t(m)), g(0) = e. Reports the sup error at step h and the gain from halving h."),
    ("isomorphism", "X − Y = ψ_V with ψ_V(v) = δρ(ψ(v))v and ψ equivariant."),
    ("orbit_flow", "Isomorphic fields induce the same flow on orbits: invariant functions agree along Φ^X_t and Φ^Y_t; a non-isomorphic control pair must disagree."),
    ("relative_equilibrium", "Newton solve of X(x) = δρ(ξ)x with the orbit and isotropy directions pinned."),
    ("shift", "At an equilibrium at the origin, DX(0) = DY(0) + δρ(ψ(0)) for X = Y + ψ_V."),
    ("slice_change", "For slices S, S′ through x and φ: S → S′ the transition, ν(y′) = Ad(f)(ψ^S(y) − f⁻¹Df(X^S(y))) − ψ^{S′}(y′) lies in h and X^{S′}(y′) − Tφ(X^S(y)) = δρ(ν)y′."),
    ("slice_spectra", "At a relative equilibrium, D(X^{S₂}) − Tφ D(X^{S₁}) Tφ⁻¹ lies in δρ(h^H); real parts of paired eigenvalues agree, and the shift commutes with the conjugated linearization."),
    ("witness_recovery", "Pointwise least squares for δρ(ψ(v))v = X(v) − Y(v) on the free locus; at a point with nontrivial isotropy the orbit map is singular and recovery is refused."),
];

pub fn explain(check: &str) -> Option<&'static str> {
    EXPLANATIONS.iter().find(|(k, _)| *k == check).map(|(_, e)| *e)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_parse() {
        for name in builtin_names() {
            let s = builtin(name).unwrap().unwrap();
            assert_eq!(s.name, name);
            build_context(&s).unwrap();
        }
    }

    #[test]
    fn missing_group_is_a_parse_error() {
        let err = parse_scenario(r#"{"name": "x", "representation": "standard", "checks": []}"#).unwrap_err();
        assert!(matches!(&err, Error::Parse(m) if m.contains("group")), "{err}");
    }

    #[test]
    fn unknown_reference_is_reported() {
        let text = r#"{"name": "x", "group": "SO2", "representation": "standard",
            "checks": [{"name": "c", "kind": "shift", "x": "X", "y": "Y", "psi": "p", "tolerance": 1e-6}]}"#;
        let err = parse_scenario(text).unwrap_err();
        assert!(err.to_string().contains("unknown field `X`"));
    }

    #[test]
    fn catalog_listing() {
        let c = list_builtins();
        assert!(c.groups.iter().any(|g| g == "SO2"));
        assert!(c.groups.iter().any(|g| g == "O3"));
        assert!(c.field_kinds.contains(&"central_force"));
        assert!(c.scenarios.contains(&"central_force_o3"));
        for k in &c.check_kinds {
            assert!(explain(k).is_some());
        }
    }

    #[test]
    fn builtins_pass_and_repeat() {
        for name in builtin_names() {
            let s = builtin(name).unwrap().unwrap();
            let a = run_scenario(&s, &RunOptions::default()).unwrap();
            for c in &a.report.checks {
                assert!(c.pass, "{name}/{}: {:?} {:?} {:?}", c.name, c.error, c.residuals, c.notes);
            }
            let b = run_scenario(&s, &RunOptions::default()).unwrap();
            let ra = serde_json::to_string(&a.report.without_timing()).unwrap();
            let rb = serde_json::to_string(&b.report.without_timing()).unwrap();
            assert_eq!(ra, rb, "{name} is not reproducible");
        }
    }

    #[test]
    fn seed_override_changes_digest() {
        let s = builtin("reflection_line").unwrap().unwrap();
        let a = run_scenario(&s, &RunOptions::default()).unwrap();
        let b = run_scenario(&s, &RunOptions { seed: Some(99), tol_scale: 1.0 }).unwrap();
        assert_eq!(b.report.seed, 99);
        assert_ne!(a.report.digest, b.report.digest);
    }

    #[test]
    fn module_errors_become_failed_checks() {
        let text = r#"{"name": "x", "group": "SO2", "representation": "standard",
            "fields": {"X": {"kind": "linear", "matrix": [[1.0, -1.0], [1.0, 1.0]]}},
            "checks": [{"name": "re", "kind": "relative_equilibrium", "field": "X",
                        "guess": [1.0, 0.0], "xi_guess": [1.0, 2.0], "tolerance": 1e-8}]}"#;
        let s = parse_scenario(text).unwrap();
        let out = run_scenario(&s, &RunOptions::default()).unwrap();
        assert!(!out.report.pass);
        assert!(out.report.checks[0].error.as_deref().unwrap().contains("dimension"));
    }
}
