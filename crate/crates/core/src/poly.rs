//! Dense polynomial maps `R^n -> R^m` in a graded monomial basis.

use std::collections::HashMap;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

/// All monomials of degree `<= max_degree` in `nvars` variables, ordered by
/// degree and then lexicographically (highest power of `x_0` first).
#[derive(Clone, Debug)]
pub struct Monomials {
    nvars: usize,
    max_degree: usize,
    exps: Vec<Vec<u32>>,
    index: HashMap<Vec<u32>, usize>,
}

fn exponents_of_degree(nvars: usize, degree: usize) -> Vec<Vec<u32>> {
    if nvars == 0 {
        return if degree == 0 { vec![Vec::new()] } else { Vec::new() };
    }
    let mut out = Vec::new();
    for first in (0..=degree).rev() {
        for mut rest in exponents_of_degree(nvars - 1, degree - first) {
            rest.insert(0, first as u32);
            out.push(rest);
        }
    }
    out
}

impl Monomials {
    pub fn new(nvars: usize, max_degree: usize) -> Self {
        let exps: Vec<Vec<u32>> = (0..=max_degree)
            .flat_map(|d| exponents_of_degree(nvars, d))
            .collect();
        let index = exps.iter().enumerate().map(|(i, e)| (e.clone(), i)).collect();
        Self {
            nvars,
            max_degree,
            exps,
            index,
        }
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn max_degree(&self) -> usize {
        self.max_degree
    }

    pub fn len(&self) -> usize {
        self.exps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exps.is_empty()
    }

    pub fn exponent(&self, i: usize) -> &[u32] {
        &self.exps[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.exps[i].iter().sum::<u32>() as usize
    }

    pub fn index_of(&self, e: &[u32]) -> Option<usize> {
        self.index.get(e).copied()
    }

    /// Index of `x_j · m_i`, if it stays within the degree bound.
    pub fn times_var(&self, i: usize, j: usize) -> Option<usize> {
        let mut e = self.exps[i].clone();
        e[j] += 1;
        self.index_of(&e)
    }

    /// Values of every monomial at `x`.
    pub fn evaluate(&self, x: &[f64]) -> DVector<f64> {
        DVector::from_iterator(
            self.len(),
            self.exps
                .iter()
                .map(|e| e.iter().zip(x).map(|(&p, &xi)| xi.powi(p as i32)).product()),
        )
    }

    /// Matrix `S` with `m(A s) = S m(s)` for the vector `m` of all monomials.
    /// Linear substitution preserves degree, so `S` is block diagonal.
    pub fn substitution_matrix(&self, a: &DMatrix<f64>) -> DMatrix<f64> {
        assert_eq!(a.shape(), (self.nvars, self.nvars), "substitution must be square");
        let len = self.len();
        let mut s = DMatrix::zeros(len, len);
        if len == 0 {
            return s;
        }
        s[(0, 0)] = 1.0;
        for i in 1..len {
            // peel off the first variable with a positive exponent
            let e = &self.exps[i];
            let k = e.iter().position(|&p| p > 0).expect("non-constant monomial");
            let mut prev = e.clone();
            prev[k] -= 1;
            let p = self.index_of(&prev).expect("lower-degree monomial present");
            for t in 0..len {
                let c = s[(p, t)];
                if c == 0.0 {
                    continue;
                }
                for j in 0..self.nvars {
                    let akj = a[(k, j)];
                    if akj != 0.0 {
                        let target = self.times_var(t, j).expect("degree bounded by row degree");
                        s[(i, target)] += c * akj;
                    }
                }
            }
        }
        s
    }
}

/// A polynomial map `x -> C m(x)`: row `r` of `coeffs` holds output component `r`.
#[derive(Clone, Debug)]
pub struct PolyMap {
    pub monomials: Arc<Monomials>,
    pub coeffs: DMatrix<f64>,
}

impl PolyMap {
    pub fn new(monomials: Arc<Monomials>, coeffs: DMatrix<f64>) -> Self {
        assert_eq!(coeffs.ncols(), monomials.len());
        Self { monomials, coeffs }
    }

    pub fn zeros(monomials: Arc<Monomials>, out_dim: usize) -> Self {
        let len = monomials.len();
        Self::new(monomials, DMatrix::zeros(out_dim, len))
    }

    /// Builds a map from sparse `(output, coefficient, exponents)` terms.
    pub fn from_terms(nvars: usize, out_dim: usize, terms: &[(usize, f64, Vec<u32>)]) -> Option<Self> {
        let degree = terms
            .iter()
            .map(|(_, _, e)| e.iter().sum::<u32>() as usize)
            .max()
            .unwrap_or(0);
        let monomials = Arc::new(Monomials::new(nvars, degree));
        let mut coeffs = DMatrix::zeros(out_dim, monomials.len());
        for (out, c, e) in terms {
            if *out >= out_dim || e.len() != nvars {
                return None;
            }
            coeffs[(*out, monomials.index_of(e)?)] += c;
        }
        Some(Self::new(monomials, coeffs))
    }

    pub fn out_dim(&self) -> usize {
        self.coeffs.nrows()
    }

    pub fn eval(&self, x: &[f64]) -> DVector<f64> {
        &self.coeffs * self.monomials.evaluate(x)
    }

    /// Highest degree carrying a coefficient above `tol`.
    pub fn effective_degree(&self, tol: f64) -> Option<usize> {
        (0..self.monomials.len())
            .filter(|&j| self.coeffs.column(j).iter().any(|c| c.abs() > tol))
            .map(|j| self.monomials.degree(j))
            .max()
    }
}
