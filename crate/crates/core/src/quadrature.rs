//! Exact Haar quadrature on compact subgroups `H = ∪ c_j H₀` of the catalog
//! groups, for integrands that are trigonometric polynomials of bounded degree.

use std::f64::consts::PI;

use nalgebra::{Complex, DMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lie::{AlgebraVector, GroupElement, GroupFamily, GroupSpec};
use crate::linalg;

/// Weighted nodes; weights sum to one.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HaarQuadrature {
    pub nodes: Vec<(f64, GroupElement)>,
}

impl HaarQuadrature {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// `Σ w f(h)` for matrix-valued `f`.
    pub fn average<F>(&self, rows: usize, cols: usize, f: F) -> Result<DMatrix<f64>>
    where
        F: Fn(&GroupElement) -> Result<DMatrix<f64>>,
    {
        let mut acc = DMatrix::zeros(rows, cols);
        for (w, h) in &self.nodes {
            acc += f(h)? * *w;
        }
        Ok(acc)
    }
}

/// Shape of the identity component `H₀`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub enum ConnectedPart {
    Trivial,
    /// Product of circles `exp(θ_i η_i)`, each `η_i` of period `2π`.
    Torus { generators: Vec<AlgebraVector> },
    /// All of `SO(3)` in ZYZ Euler angles.
    FullSo3,
}

/// How to integrate over `H`: connected part, coset representatives, and
/// the node counts needed for a given trigonometric degree.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct QuadraturePlan {
    pub connected: ConnectedPart,
    pub cosets: Vec<GroupElement>,
}

const FREQ_TOL: f64 = 1e-9;

/// Frequencies `ω_j ≥ 0` with `±iω_j` the eigenvalues of a skew(-like) matrix.
fn frequencies(m: &DMatrix<f64>) -> Vec<f64> {
    if m.nrows() == 0 {
        return Vec::new();
    }
    m.complex_eigenvalues().iter().map(|z: &Complex<f64>| z.im.abs()).collect()
}

/// Rescales `η` so that `t ↦ exp(t η)` has period exactly `2π`.
fn normalize_circle(group: &GroupSpec, eta: &AlgebraVector) -> Result<AlgebraVector> {
    let freqs: Vec<f64> = frequencies(&group.matrix_of(eta)).into_iter().filter(|w| *w > FREQ_TOL).collect();
    let w0 = freqs.iter().copied().fold(f64::INFINITY, f64::min);
    if !w0.is_finite() {
        return Err(Error::UnsupportedQuadrature("stabilizer generator acts trivially".into()));
    }
    for q in 1..=12 {
        let g = w0 / q as f64;
        if freqs.iter().all(|w| ((w / g) - (w / g).round()).abs() < 1e-7) {
            return Ok(eta.scale(1.0 / g));
        }
    }
    Err(Error::UnsupportedQuadrature(
        "stabilizer circle has incommensurate frequencies (not closed)".into(),
    ))
}

impl QuadraturePlan {
    /// Classifies `H₀ = exp(span h_basis)`; `cosets` are representatives of `H/H₀`
    /// with the identity first.
    pub fn new(group: &GroupSpec, h_basis: &[AlgebraVector], cosets: Vec<GroupElement>) -> Result<Self> {
        if cosets.is_empty() {
            return Err(Error::InvalidInput("at least the identity coset is required".into()));
        }
        let k = h_basis.len();
        let connected = if k == 0 {
            ConnectedPart::Trivial
        } else if k == 1 {
            ConnectedPart::Torus {
                generators: vec![normalize_circle(group, &h_basis[0])?],
            }
        } else if k == 3 && group.ambient_dim == 3 && group.algebra_dim() == 3 {
            ConnectedPart::FullSo3
        } else if matches!(group.family, GroupFamily::Torus { .. }) {
            // only coordinate subtori are supported
            let ortho = group.orthonormalize(h_basis, 1e-10);
            let basis = linalg::columns_to_matrix(
                group.algebra_dim(),
                &ortho.iter().map(|v| v.coords.clone()).collect::<Vec<_>>(),
            );
            let axes: Vec<usize> = (0..group.algebra_dim())
                .filter(|&i| (basis.row(i).norm() - 1.0).abs() < 1e-10)
                .collect();
            if axes.len() != k {
                return Err(Error::UnsupportedQuadrature(
                    "stabilizer is not a coordinate subtorus".into(),
                ));
            }
            ConnectedPart::Torus {
                generators: axes
                    .into_iter()
                    .map(|i| AlgebraVector::basis(group.algebra_dim(), i))
                    .collect(),
            }
        } else {
            return Err(Error::UnsupportedQuadrature(format!(
                "identity component of dimension {k} in {}",
                group.name
            )));
        };
        Ok(Self { connected, cosets })
    }

    /// Largest frequency of the generators under a linear action of the algebra.
    /// For the full `SO(3)` this is the largest spin appearing.
    pub fn max_frequency<F>(&self, action: F) -> usize
    where
        F: Fn(&AlgebraVector) -> DMatrix<f64>,
    {
        let gens: Vec<AlgebraVector> = match &self.connected {
            ConnectedPart::Trivial => Vec::new(),
            ConnectedPart::Torus { generators } => generators.clone(),
            ConnectedPart::FullSo3 => vec![AlgebraVector::basis(3, 2)],
        };
        gens.iter()
            .flat_map(|g| frequencies(&action(g)))
            .map(|w| (w - FREQ_TOL).ceil().max(0.0) as usize)
            .max()
            .unwrap_or(0)
    }

    /// Equispaced nodes per circle needed for trigonometric degree `degree`.
    pub fn required_nodes(&self, degree: usize) -> usize {
        match self.connected {
            ConnectedPart::Trivial => 1,
            _ => degree + 1,
        }
    }

    /// Default configured node count, with headroom over the requirement.
    pub fn default_nodes(&self, degree: usize) -> usize {
        match self.connected {
            ConnectedPart::Trivial => 1,
            _ => 2 * degree + 1,
        }
    }

    /// Seeded random elements of `H` (not Haar-distributed on `SO(3)`).
    pub fn sample_elements(&self, group: &GroupSpec, count: usize, seed: u64) -> Result<Vec<GroupElement>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut angle = || rng.gen_range(-PI..PI);
        let mut out = Vec::with_capacity(count);
        for i in 0..count {
            let mut g = match &self.connected {
                ConnectedPart::Trivial => group.identity(),
                ConnectedPart::Torus { generators } => {
                    let mut g = group.identity();
                    for gen in generators {
                        g = g.compose(&group.exp_map(gen, angle())?);
                    }
                    g
                }
                ConnectedPart::FullSo3 => {
                    let (a, b, c) = (angle(), angle(), angle());
                    group
                        .exp_map(&AlgebraVector::basis(3, 2), a)?
                        .compose(&group.exp_map(&AlgebraVector::basis(3, 1), b)?)
                        .compose(&group.exp_map(&AlgebraVector::basis(3, 2), c)?)
                }
            };
            g = self.cosets[i % self.cosets.len()].compose(&g);
            out.push(g);
        }
        Ok(out)
    }

    pub fn build_checked(&self, group: &GroupSpec, degree: usize, configured: usize) -> Result<HaarQuadrature> {
        let required = self.required_nodes(degree);
        if configured < required {
            return Err(Error::InsufficientQuadrature { required, configured });
        }
        self.build(group, configured)
    }

    /// Product rule over the connected part with `per_axis` nodes per angle,
    /// composed with the coset sum.
    pub fn build(&self, group: &GroupSpec, per_axis: usize) -> Result<HaarQuadrature> {
        let per_axis = per_axis.max(1);
        let connected: Vec<(f64, GroupElement)> = match &self.connected {
            ConnectedPart::Trivial => vec![(1.0, group.identity())],
            ConnectedPart::Torus { generators } => {
                let mut nodes = vec![(1.0, group.identity())];
                for g in generators {
                    let mut next = Vec::with_capacity(nodes.len() * per_axis);
                    for (w, e) in &nodes {
                        for j in 0..per_axis {
                            let theta = 2.0 * PI * j as f64 / per_axis as f64;
                            let r = group.exp_map(g, theta)?;
                            next.push((w / per_axis as f64, e.compose(&r)));
                        }
                    }
                    nodes = next;
                }
                nodes
            }
            ConnectedPart::FullSo3 => {
                // Haar measure sin β dα dβ dγ / 8π²; Gauss–Legendre in cos β is
                // exact for polynomials in cos β of degree 2n − 1.
                let n_beta = per_axis.div_ceil(2).max(1);
                let (u, wu) = linalg::gauss_legendre(n_beta);
                let l2 = AlgebraVector::basis(3, 1);
                let l3 = AlgebraVector::basis(3, 2);
                let mut nodes = Vec::with_capacity(per_axis * per_axis * n_beta);
                for a in 0..per_axis {
                    let alpha = 2.0 * PI * a as f64 / per_axis as f64;
                    let ra = group.exp_map(&l3, alpha)?;
                    for (ub, wb) in u.iter().zip(&wu) {
                        let rb = group.exp_map(&l2, ub.clamp(-1.0, 1.0).acos())?;
                        let rab = ra.compose(&rb);
                        for c in 0..per_axis {
                            let gamma = 2.0 * PI * c as f64 / per_axis as f64;
                            let w = 0.5 * wb / (per_axis * per_axis) as f64;
                            nodes.push((w, rab.compose(&group.exp_map(&l3, gamma)?)));
                        }
                    }
                }
                nodes
            }
        };
        let nc = self.cosets.len() as f64;
        let mut nodes = Vec::with_capacity(connected.len() * self.cosets.len());
        for c in &self.cosets {
            for (w, h) in &connected {
                nodes.push((w / nc, c.compose(h)));
            }
        }
        Ok(HaarQuadrature { nodes })
    }
}
