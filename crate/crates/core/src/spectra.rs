//! Linearizations at equilibria, the shift `DX(0) = DY(0) + δρ(ψ(0))`, and
//! comparison of slice linearizations at a relative equilibrium.

use nalgebra::{Complex, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::diff;
use crate::error::{Error, Result};
use crate::lie::{AlgebraVector, GroupElement, GroupSpec, Splitting};
use crate::linalg;
use crate::rep::{EquivariantMap, VectorField};
use crate::slice::{self, Slice};

pub const EQUILIBRIUM_TOL: f64 = 1e-8;
/// Real parts closer than this are one cluster.
pub const CLUSTER_TOL: f64 = 1e-6;

type C64 = Complex<f64>;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LinearizationReport {
    pub point: DVector<f64>,
    /// Jacobian in frame coordinates.
    pub matrix: DMatrix<f64>,
    /// Sorted by real part, then imaginary part, both descending.
    pub eigenvalues: Vec<C64>,
    /// Unit eigenvectors, one column per eigenvalue.
    pub eigenvectors: DMatrix<C64>,
    pub fd_step: f64,
    pub richardson_error: f64,
    /// `max ‖Dv − λv‖` over the eigenpairs.
    pub eigen_residual: f64,
}

fn sort_spectrum(mut ev: Vec<C64>) -> Vec<C64> {
    ev.sort_by(|a, b| b.re.total_cmp(&a.re).then(b.im.total_cmp(&a.im)));
    ev
}

pub fn spectrum(d: &DMatrix<f64>) -> Vec<C64> {
    if d.nrows() == 0 {
        return Vec::new();
    }
    sort_spectrum(d.complex_eigenvalues().iter().copied().collect())
}

fn complexify(d: &DMatrix<f64>) -> DMatrix<C64> {
    d.map(|v| C64::new(v, 0.0))
}

/// Right singular vectors of `m` for its `count` smallest singular values,
/// with all singular values in ascending order.
fn smallest_right_vectors(m: &DMatrix<C64>, count: usize) -> (DMatrix<C64>, Vec<f64>) {
    let n = m.ncols();
    let svd = linalg::checked_svd(m);
    let vt = svd.v_t.expect("requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[a].total_cmp(&svd.singular_values[b]));
    let sv: Vec<f64> = order.iter().map(|&i| svd.singular_values[i]).collect();
    let mut out = DMatrix::zeros(n, count.min(order.len()));
    for (j, &i) in order.iter().take(count).enumerate() {
        out.set_column(j, &vt.row(i).adjoint());
    }
    (out, sv)
}

fn eigenvectors(d: &DMatrix<f64>, eigenvalues: &[C64]) -> (DMatrix<C64>, f64) {
    let n = d.nrows();
    let dc = complexify(d);
    let mut vecs = DMatrix::zeros(n, eigenvalues.len());
    let mut worst = 0.0_f64;
    for (j, lambda) in eigenvalues.iter().enumerate() {
        let shifted = &dc - DMatrix::<C64>::identity(n, n) * *lambda;
        let (v, _) = smallest_right_vectors(&shifted, 1);
        let v = v.column(0).into_owned();
        worst = worst.max((&shifted * &v).norm() / v.norm().max(1e-300));
        vecs.set_column(j, &v);
    }
    (vecs, worst)
}

/// Jacobian of `f` at `x` in the frame `basis`: `D = B⁺ DF(x) B`.
pub fn linearize<F>(f: F, x: &DVector<f64>, basis: &DMatrix<f64>) -> Result<LinearizationReport>
where
    F: Fn(&DVector<f64>) -> Result<DVector<f64>>,
{
    if basis.nrows() != x.len() {
        return Err(Error::dims("linearization frame", x.len(), basis.nrows()));
    }
    let at = f(x)?;
    let pinv = basis
        .clone()
        .pseudo_inverse(1e-12)
        .map_err(|e| Error::InvalidInput(e.to_string()))?;
    let norm = (&pinv * &at).norm();
    if norm > EQUILIBRIUM_TOL {
        return Err(Error::NotEquilibrium { norm });
    }
    let h = diff::default_step(x.norm());
    let k = basis.ncols();
    let mut matrix = DMatrix::zeros(k, k);
    let mut richardson_error = 0.0_f64;
    for j in 0..k {
        let dir = basis.column(j).into_owned();
        let d = diff::richardson(|t| Ok(&pinv * f(&(x + &dir * t))?), h)?;
        richardson_error = richardson_error.max(d.error);
        matrix.set_column(j, &d.value);
    }
    let eigenvalues = spectrum(&matrix);
    let (eigenvectors, eigen_residual) = eigenvectors(&matrix, &eigenvalues);
    Ok(LinearizationReport {
        point: x.clone(),
        matrix,
        eigenvalues,
        eigenvectors,
        fd_step: h,
        richardson_error,
        eigen_residual,
    })
}

/// Linearization of the slice field `X^S` at the base point of `slice`.
pub fn linearize_slice_field(x_field: &VectorField, slice: &Slice, splitting: &Splitting) -> Result<LinearizationReport> {
    linearize(
        |y| Ok(slice::slice_decompose(x_field, slice, splitting, y)?.xs),
        &slice.base_point,
        &slice.basis,
    )
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FixedSubalgebra {
    pub basis: Vec<AlgebraVector>,
}

/// `{ξ ∈ h : Ad(c)ξ = ξ for every generator c, [η, ξ] = 0 for η ∈ h}`.
pub fn fixed_subalgebra(group: &GroupSpec, h_basis: &[AlgebraVector], component_gens: &[GroupElement]) -> Result<FixedSubalgebra> {
    if h_basis.is_empty() {
        return Ok(FixedSubalgebra { basis: Vec::new() });
    }
    let k = group.algebra_dim();
    let hm = linalg::columns_to_matrix(k, &h_basis.iter().map(|h| h.coords.clone()).collect::<Vec<_>>());
    let mut blocks: Vec<DMatrix<f64>> = Vec::new();
    for c in component_gens {
        blocks.push((group.adjoint_matrix(c)? - DMatrix::identity(k, k)) * &hm);
    }
    for eta in h_basis {
        blocks.push(group.ad_matrix(eta)? * &hm);
    }
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut stacked = DMatrix::zeros(rows, h_basis.len());
    let mut r = 0;
    for b in &blocks {
        stacked.rows_mut(r, b.nrows()).copy_from(b);
        r += b.nrows();
    }
    let null = linalg::null_space(&stacked, 1e-10);
    let raw: Vec<AlgebraVector> = (0..null.ncols())
        .map(|j| AlgebraVector::new(&hm * null.column(j)))
        .collect();
    Ok(FixedSubalgebra {
        basis: group.orthonormalize(&raw, 1e-10),
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ShiftReport {
    pub dx: DMatrix<f64>,
    pub dy: DMatrix<f64>,
    pub shift: DMatrix<f64>,
    /// `‖DX(0) − DY(0) − δρ(ψ(0))‖_F`.
    pub residual: f64,
    pub richardson_error: f64,
}

/// Checks `DX(0) = DY(0) + δρ(ψ(0))` at the origin, given `X(0) = 0`.
pub fn shift_check(x_field: &VectorField, y_field: &VectorField, psi: &EquivariantMap) -> Result<ShiftReport> {
    let rep = &x_field.rep;
    let n = rep.dim;
    let origin = DVector::zeros(n);
    let frame = DMatrix::identity(n, n);
    let x0 = x_field.eval(&origin)?.norm();
    if x0 > EQUILIBRIUM_TOL {
        return Err(Error::NotEquilibrium { norm: x0 });
    }
    let y0 = y_field.eval(&origin)?.norm();
    if y0 > EQUILIBRIUM_TOL {
        return Err(Error::TheoremViolation {
            what: "Y(0) ≠ 0 although X(0) = 0; the witness is broken".into(),
            value: y0,
        });
    }
    let lx = linearize(|v| x_field.eval(v), &origin, &frame)?;
    let ly = linearize(|v| y_field.eval(v), &origin, &frame)?;
    let shift = rep.delta_rho(&psi.eval(&origin)?);
    let residual = (&lx.matrix - &ly.matrix - &shift).norm();
    Ok(ShiftReport {
        residual,
        richardson_error: lx.richardson_error.max(ly.richardson_error),
        dx: lx.matrix,
        dy: ly.matrix,
        shift,
    })
}

/// Index ranges of eigenvalues whose real parts agree within `CLUSTER_TOL`.
fn real_clusters(ev: &[C64]) -> Vec<std::ops::Range<usize>> {
    let mut out = Vec::new();
    let mut start = 0;
    for i in 1..=ev.len() {
        if i == ev.len() || (ev[i].re - ev[i - 1].re).abs() > CLUSTER_TOL {
            out.push(start..i);
            start = i;
        }
    }
    out
}

/// Orthonormal basis of the generalized eigenspace of `d` for the eigenvalues
/// listed (with multiplicity), and whether `d` is defective there.
fn invariant_subspace(d: &DMatrix<f64>, eigenvalues: &[C64]) -> (DMatrix<C64>, bool) {
    let n = d.nrows();
    let dc = complexify(d);
    let scale = d.norm().max(1.0);
    let mut cols: Vec<DVector<C64>> = Vec::new();
    let mut defective = false;
    let mut used = vec![false; eigenvalues.len()];
    for i in 0..eigenvalues.len() {
        if used[i] {
            continue;
        }
        let lambda = eigenvalues[i];
        let mut mult = 0;
        for j in i..eigenvalues.len() {
            if !used[j] && (eigenvalues[j] - lambda).norm() <= CLUSTER_TOL * scale {
                used[j] = true;
                mult += 1;
            }
        }
        let shifted = &dc - DMatrix::<C64>::identity(n, n) * lambda;
        let mut power = DMatrix::<C64>::identity(n, n);
        for _ in 0..mult {
            power = &power * &shifted;
        }
        let (_, sv) = smallest_right_vectors(&shifted, mult);
        let geometric = sv.iter().filter(|s| **s <= 1e-5 * scale).count();
        if geometric < mult {
            defective = true;
        }
        let (v, _) = smallest_right_vectors(&power, mult);
        cols.extend((0..v.ncols()).map(|j| v.column(j).into_owned()));
    }
    if cols.is_empty() {
        return (DMatrix::zeros(n, 0), defective);
    }
    let w = DMatrix::from_columns(&cols);
    // orthonormalize
    let svd = linalg::checked_svd(&w);
    let u = svd.u.expect("requested");
    let r = svd.singular_values.iter().filter(|s| **s > 1e-8).count();
    (u.columns(0, r).into_owned(), defective)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EigenPair {
    pub first: C64,
    pub second: C64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub d1: DMatrix<f64>,
    pub d2: DMatrix<f64>,
    /// `Tφ_x` in slice coordinates.
    pub transport: DMatrix<f64>,
    /// `T D₁ T⁻¹`.
    pub conjugated: DMatrix<f64>,
    pub spectrum1: Vec<C64>,
    pub spectrum2: Vec<C64>,
    pub pairs: Vec<EigenPair>,
    pub fixed_subalgebra: Vec<AlgebraVector>,
    /// Coefficients of the projection of `Δ` onto `δρ(h^H)`.
    pub xi_star: Vec<f64>,
    pub delta_norm: f64,
    pub membership_residual: f64,
    pub max_real_discrepancy: f64,
    pub max_imag_discrepancy: f64,
    pub max_eigenvalue_discrepancy: f64,
    pub commutator_residual: f64,
    /// `max |Re λ|` over the eigenvalues of `δρ(ξ)`, `ξ ∈ h^H` basis.
    pub shift_real_part: f64,
    pub eigenvector_residual: f64,
    pub defective: bool,
    pub warnings: Vec<String>,
}

impl ComparisonReport {
    pub fn pairs_csv(&self) -> String {
        let mut s = String::from("index,re1,im1,re2,im2\n");
        for (i, p) in self.pairs.iter().enumerate() {
            s.push_str(&format!(
                "{i},{:.15e},{:.15e},{:.15e},{:.15e}\n",
                p.first.re, p.first.im, p.second.re, p.second.im
            ));
        }
        s
    }
}

/// Compares `D(X^{S₂})` with `Tφ D(X^{S₁}) Tφ⁻¹` at a relative equilibrium
/// shared by both slices. `split1` defines the transition map.
pub fn compare_slice_spectra(
    x_field: &VectorField,
    slice1: &Slice,
    split1: &Splitting,
    slice2: &Slice,
    split2: &Splitting,
) -> Result<ComparisonReport> {
    let rep = &slice1.rep;
    let group = &rep.group;
    let l1 = linearize_slice_field(x_field, slice1, split1)?;
    let l2 = linearize_slice_field(x_field, slice2, split2)?;
    let x = &slice1.base_point;
    let transport = slice::transition_differential_matrix(slice1, slice2, split1, x)?;
    let tinv = transport
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::DegeneratePoint("transition differential is singular".into()))?;
    let conjugated = &transport * &l1.matrix * &tinv;
    let delta = &l2.matrix - &conjugated;

    let fixed = fixed_subalgebra(group, &slice2.stab_algebra, &slice2.stab_component_gens)?.basis;
    let b2 = &slice2.basis;
    let gens: Vec<DMatrix<f64>> = fixed.iter().map(|xi| b2.transpose() * rep.delta_rho(xi) * b2).collect();
    let (xi_star, projected) = if gens.is_empty() {
        (Vec::new(), DMatrix::zeros(delta.nrows(), delta.ncols()))
    } else {
        let a = linalg::columns_to_matrix(
            delta.len(),
            &gens.iter().map(|g| DVector::from_column_slice(g.as_slice())).collect::<Vec<_>>(),
        );
        let coef = linalg::lstsq(&a, &DVector::from_column_slice(delta.as_slice()));
        let mut p = DMatrix::zeros(delta.nrows(), delta.ncols());
        for (c, g) in coef.iter().zip(&gens) {
            p += g * *c;
        }
        (coef.iter().copied().collect(), p)
    };
    let membership_residual = (&delta - &projected).norm();
    let commutator_residual = (&conjugated * &projected - &projected * &conjugated).norm();
    let shift_real_part = fixed
        .iter()
        .flat_map(|xi| spectrum(&rep.delta_rho(xi)))
        .map(|z| z.re.abs())
        .fold(0.0, f64::max);

    let spectrum1 = spectrum(&conjugated);
    let spectrum2 = l2.eigenvalues.clone();
    let mut warnings = Vec::new();
    let c1 = real_clusters(&spectrum1);
    let c2 = real_clusters(&spectrum2);
    let sizes1: Vec<usize> = c1.iter().map(|r| r.len()).collect();
    let sizes2: Vec<usize> = c2.iter().map(|r| r.len()).collect();
    if sizes1 != sizes2 {
        warnings.push(format!(
            "eigenvalue pairing ambiguity: real-part clusters {sizes1:?} vs {sizes2:?}; spectra {spectrum1:?} / {spectrum2:?}"
        ));
    }
    let pairs: Vec<EigenPair> = spectrum1
        .iter()
        .zip(&spectrum2)
        .map(|(a, b)| EigenPair { first: *a, second: *b })
        .collect();
    let max_real_discrepancy = pairs.iter().map(|p| (p.first.re - p.second.re).abs()).fold(0.0, f64::max);
    let max_imag_discrepancy = pairs.iter().map(|p| (p.first.im - p.second.im).abs()).fold(0.0, f64::max);
    let max_eigenvalue_discrepancy = pairs.iter().map(|p| (p.first - p.second).norm()).fold(0.0, f64::max);

    // T v must lie in the invariant subspace of D₂ for the paired cluster
    let mut eigenvector_residual = 0.0_f64;
    let mut defective = false;
    if sizes1 == sizes2 {
        let (vecs1, _) = eigenvectors(&l1.matrix, &spectrum(&l1.matrix));
        let ev1 = spectrum(&l1.matrix);
        let tc = complexify(&transport);
        for (r1, r2) in c1.iter().zip(&c2) {
            let (w, def) = invariant_subspace(&l2.matrix, &spectrum2[r2.clone()]);
            defective |= def;
            let lo = spectrum1[r1.start].re - CLUSTER_TOL;
            let hi = spectrum1[r1.end - 1].re + CLUSTER_TOL;
            for (j, lam) in ev1.iter().enumerate() {
                if lam.re < lo.min(hi) || lam.re > hi.max(lo) {
                    continue;
                }
                let tv = &tc * vecs1.column(j);
                let proj = &w * (w.adjoint() * &tv);
                eigenvector_residual = eigenvector_residual.max((&tv - proj).norm() / tv.norm().max(1e-300));
            }
        }
    }
    if defective {
        warnings.push("defective eigenvalue: only the invariant-subspace statement is checked".into());
    }
    Ok(ComparisonReport {
        delta_norm: delta.norm(),
        d1: l1.matrix,
        d2: l2.matrix,
        transport,
        conjugated,
        spectrum1,
        spectrum2,
        pairs,
        fixed_subalgebra: fixed,
        xi_star,
        membership_residual,
        max_real_discrepancy,
        max_imag_discrepancy,
        max_eigenvalue_discrepancy,
        commutator_residual,
        shift_real_part,
        eigenvector_residual,
        defective,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rep::Representation;
    use crate::slice::Tilt;
    use std::sync::Arc;

    fn rep(group: &str, spec: &str) -> Arc<Representation> {
        Representation::parse(GroupSpec::by_name(group).unwrap(), spec).unwrap()
    }

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    #[test]
    fn linear_field_is_exact() {
        let r = rep("SO2", "standard");
        let a = DMatrix::from_row_slice(2, 2, &[0.3, -1.1, 1.1, 0.3]);
        let x = VectorField::linear(&r, a.clone()).unwrap();
        let l = linearize(|p| x.eval(p), &v(&[0.0, 0.0]), &DMatrix::identity(2, 2)).unwrap();
        assert!((l.matrix - a).amax() < 1e-12);
        assert!((l.eigenvalues[0] - C64::new(0.3, 1.1)).norm() < 1e-12);
        assert!(l.eigen_residual < 1e-8);
    }

    #[test]
    fn slice_field_of_the_circle_example() {
        let r = rep("SO2", "standard");
        let x = VectorField::custom(&r, "(|v|^2-1)v + Jv", |p| {
            let r2 = p.norm_squared();
            v(&[(r2 - 1.0) * p[0] - p[1], (r2 - 1.0) * p[1] + p[0]])
        });
        let s = Slice::build(&r, &v(&[1.0, 0.0]), 0.5).unwrap();
        let split = s.splitting().unwrap();
        let l = linearize_slice_field(&x, &s, &split).unwrap();
        assert!((l.matrix[(0, 0)] - 2.0).abs() < 1e-9);
        assert!(l.richardson_error < 1e-7);
        let err = linearize(|p| x.eval(p), &v(&[1.0, 0.0]), &DMatrix::identity(2, 2));
        assert!(matches!(err, Err(Error::NotEquilibrium { .. })));
    }

    #[test]
    fn fixed_subalgebra_examples() {
        let so2 = GroupSpec::by_name("SO2").unwrap();
        let f = fixed_subalgebra(&so2, &[AlgebraVector::basis(1, 0)], &[so2.identity()]).unwrap();
        assert_eq!(f.basis.len(), 1);

        let r6 = rep("O3", "diagonal:2");
        let s = Slice::build(&r6, &v(&[1.0, 0.0, 0.0, 0.0, 0.0, 0.0]), 0.5).unwrap();
        let f = fixed_subalgebra(&r6.group, &s.stab_algebra, &s.stab_component_gens).unwrap();
        assert!(f.basis.is_empty());
        let f = fixed_subalgebra(&r6.group, &[], &[]).unwrap();
        assert!(f.basis.is_empty());
    }

    #[test]
    fn shift_examples() {
        let r = rep("SO2", "standard");
        let j = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
        let x = VectorField::linear(&r, DMatrix::identity(2, 2) * 0.5 + &j).unwrap();
        let psi = EquivariantMap::constant(&r, AlgebraVector::from_slice(&[0.25])).unwrap();
        let y = x.sub(&crate::rep::induced_field_from_map(&psi)).unwrap();
        let s = shift_check(&x, &y, &psi).unwrap();
        assert!((&s.dy - (DMatrix::identity(2, 2) * 0.5 + &j * 0.75)).amax() < 1e-12);
        assert!(s.residual < 1e-10);

        let zero = EquivariantMap::zero(&r);
        assert!(shift_check(&x, &x, &zero).unwrap().residual == 0.0);

        let cubic = VectorField::custom(&r, "cubic", |p| p * p.norm_squared());
        let s = shift_check(&x.add(&cubic).unwrap(), &y.add(&cubic).unwrap(), &psi).unwrap();
        assert!(s.residual < 1e-6);

        // broken witness: Y(0) ≠ 0
        let shifted = VectorField::custom(&r, "offset", |p| p.clone() + v(&[1.0, 0.0]));
        assert!(matches!(shift_check(&x, &shifted, &psi), Err(Error::TheoremViolation { .. })));
    }

    #[test]
    fn tilted_slices_of_the_harmonic_central_force() {
        let r6 = rep("O3", "diagonal:2");
        let x0 = v(&[1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        let x = VectorField::central_force(&r6, 1.0, 0.0, 1.0).unwrap();
        let s0 = Slice::build(&r6, &x0, 0.3).unwrap();
        let s1 = s0.tilted(&Tilt::Random { amplitude: 0.3, seed: 1 }).unwrap();
        let s2 = s0.tilted(&Tilt::Random { amplitude: 0.3, seed: 2 }).unwrap();
        let split = s0.splitting().unwrap();
        let same = compare_slice_spectra(&x, &s1, &split, &s1, &split).unwrap();
        assert!(same.delta_norm < 1e-8);
        let c = compare_slice_spectra(&x, &s1, &split, &s2, &split).unwrap();
        assert!(c.fixed_subalgebra.is_empty());
        assert!(c.max_eigenvalue_discrepancy < 1e-5, "{c:?}");
        assert!(c.membership_residual < 1e-5);
        assert!(c.warnings.is_empty(), "{:?}", c.warnings);
    }

    #[test]
    fn torus_shift_is_imaginary() {
        let r = rep("T2", "standard");
        let x0 = v(&[1.0, 0.0, 0.0, 0.0]);
        let (a, b) = (-0.5, 1.0);
        let x = VectorField::custom(&r, "torus", move |p| {
            let r2 = p[0] * p[0] + p[1] * p[1];
            v(&[(1.0 - r2) * p[0] - p[1], (1.0 - r2) * p[1] + p[0], a * p[2] - b * p[3], a * p[3] + b * p[2]])
        });
        let s1 = Slice::build(&r, &x0, 0.3).unwrap();
        let split1 = s1.splitting().unwrap();
        let split2 = Splitting::with_complement(
            &r.group,
            split1.h_basis.clone(),
            vec![AlgebraVector::from_slice(&[1.0, 0.5])],
            &s1.stabilizer_generators(),
        )
        .unwrap();
        let s2 = s1.tilted(&Tilt::Matrix(DMatrix::from_row_slice(2, 3, &[0.2, 0.0, 0.0, 0.0, 0.0, 0.0]))).unwrap();
        let c = compare_slice_spectra(&x, &s1, &split1, &s2, &split2).unwrap();
        assert_eq!(c.fixed_subalgebra.len(), 1);
        assert!(c.membership_residual < 1e-5);
        assert!(c.max_real_discrepancy < 1e-5);
        assert!((c.max_imag_discrepancy - 0.5).abs() < 1e-6, "{c:?}");
        assert!(c.commutator_residual < 1e-6);
        assert!(c.shift_real_part < 1e-10);
        assert!(c.eigenvector_residual < 1e-4);
    }
}
