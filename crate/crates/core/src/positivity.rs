//! Positivity of real `(p,p)`-forms.
//!
//! A `(p,p)`-form `u` is weakly positive when `u ∧ iα₁∧ᾱ₁ ∧ … ∧ iα_s∧ᾱ_s ≥ 0`
//! (relative to `ν`) for all (1,0)-covectors `α_j`, `s = n − p`. Outside bidegrees
//! `(0,0)`, `(1,1)`, `(n−1,n−1)` and `(n,n)` the test is a deterministic sample of
//! covector tuples and can only refute.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::complex::{FormComplex, NodalForm};
use crate::error::{Error, Result};
use crate::forms::{mask_wedge, reference_volume_factor, Bidegree, Form, C64, I, ZERO};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    Positive,
    SemiPositive,
    Refuted,
    Inconclusive,
}

impl Verdict {
    pub fn label(self) -> &'static str {
        match self {
            Verdict::Positive => "positive",
            Verdict::SemiPositive => "semi-positive",
            Verdict::Refuted => "refuted",
            Verdict::Inconclusive => "inconclusive",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Witness {
    /// Covectors `α_j` (coefficients on `dz^1..dz^n`) with a negative pairing.
    Covectors { node: usize, alphas: Vec<Vec<C64>>, pairing: f64 },
    /// Negative eigenvalue of the Hermitian coefficient matrix of a (1,1)-form.
    Eigen { node: usize, eigenvalue: f64, vector: Vec<C64> },
}

#[derive(Clone, Debug)]
pub struct PositivityReport {
    pub verdict: Verdict,
    pub witness: Option<Witness>,
    /// Smallest eigenvalue over all nodes when an exact criterion applies.
    pub certificate: Option<f64>,
    /// Smallest real pairing seen over all samples and nodes.
    pub min_pairing: f64,
    pub samples_used: usize,
    /// `true` when the verdict rests on an exact criterion rather than sampling.
    pub exact: bool,
}

#[derive(Clone, Copy, Debug)]
pub struct SamplerSpec {
    pub samples: usize,
    pub seed: u64,
}

impl Default for SamplerSpec {
    fn default() -> Self {
        Self { samples: 256, seed: 0 }
    }
}

const PRIMES: [u64; 40] = [
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89, 97, 101, 103, 107,
    109, 113, 127, 131, 137, 139, 149, 151, 157, 163, 167, 173,
];

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    while i > 0 {
        f /= base as f64;
        r += f * (i % base) as f64;
        i /= base;
    }
    r
}

/// Fiber coefficients of `iα₁∧ᾱ₁ ∧ … ∧ iα_s∧ᾱ_s` over the `(s,s)` monomials.
fn test_form(n: usize, alphas: &[Vec<C64>]) -> Vec<(u32, C64)> {
    let mut acc: Vec<(u32, C64)> = vec![(0, C64::new(1.0, 0.0))];
    for a in alphas {
        let mut next: Vec<(u32, C64)> = Vec::new();
        for &(m, c) in &acc {
            for j in 0..n {
                if a[j] == ZERO {
                    continue;
                }
                for k in 0..n {
                    if a[k] == ZERO {
                        continue;
                    }
                    let Some((m1, s1)) = mask_wedge(m, 1 << j) else { continue };
                    let Some((m2, s2)) = mask_wedge(m1, 1 << (n + k)) else { continue };
                    next.push((m2, c * I * a[j] * a[k].conj() * (s1 * s2)));
                }
            }
        }
        next.sort_by_key(|e| e.0);
        let mut merged: Vec<(u32, C64)> = Vec::new();
        for (m, c) in next {
            match merged.last_mut() {
                Some(last) if last.0 == m => last.1 += c,
                _ => merged.push((m, c)),
            }
        }
        acc = merged;
    }
    acc
}

/// Pairing vector: `u ∧ T = (Σ_a u_a w_a) ν` for a fixed test form `T`.
fn pairing_weights(complex: &FormComplex, bd: Bidegree, t: &[(u32, C64)]) -> Vec<C64> {
    let n = complex.n();
    let fibers = complex.algebra().fibers();
    let vol = reference_volume_factor(n);
    fibers
        .masks(bd)
        .iter()
        .map(|&ma| {
            let mut w = ZERO;
            for &(mt, c) in t {
                if let Some((top, s)) = mask_wedge(ma, mt) {
                    debug_assert_eq!(top, fibers.top_mask());
                    w += c * s / vol;
                }
            }
            w
        })
        .collect()
}

fn eval_pairing(u: &NodalForm, weights: &[C64], x: usize) -> C64 {
    weights.iter().enumerate().map(|(a, w)| u.values[a * u.nodes + x] * w).sum()
}

/// Covector tuples: every axis tuple `(dz^{i_1}, …, dz^{i_s})`, then Halton samples.
fn tuples(n: usize, s: usize, spec: SamplerSpec) -> Vec<Vec<Vec<C64>>> {
    use itertools::Itertools;
    let mut out: Vec<Vec<Vec<C64>>> = Vec::new();
    for combo in (0..n).combinations(s) {
        out.push(
            combo
                .iter()
                .map(|&i| (0..n).map(|j| if i == j { C64::new(1.0, 0.0) } else { ZERO }).collect())
                .collect(),
        );
    }
    let dims = 2 * n * s;
    for k in 0..spec.samples as u64 {
        let idx = spec.seed.wrapping_add(k + 1);
        let coords: Vec<f64> = (0..dims).map(|d| 2.0 * radical_inverse(idx, PRIMES[d % PRIMES.len()]) - 1.0).collect();
        let mut alphas = Vec::with_capacity(s);
        for a in 0..s {
            let v: Vec<C64> = (0..n).map(|j| C64::new(coords[(a * n + j) * 2], coords[(a * n + j) * 2 + 1])).collect();
            let norm = v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt().max(1e-300);
            alphas.push(v.iter().map(|c| c / norm).collect());
        }
        out.push(alphas);
    }
    out
}

/// Hermitian matrix of a (1,1)-form at a node: `u = i Σ M_{jk} dz^j ∧ dz̄^k`.
fn matrix_11(n: usize, u: &NodalForm, complex: &FormComplex, x: usize) -> DMatrix<C64> {
    let fibers = complex.algebra().fibers();
    DMatrix::from_fn(n, n, |j, k| -I * u.values[fibers.index((1 << j) | (1 << (n + k))) * u.nodes + x])
}

/// Hermitian matrix of an (n−1,n−1)-form: `u ∧ i dz^j ∧ dz̄^k = M_{jk} ν`.
fn matrix_dual(n: usize, u: &NodalForm, complex: &FormComplex, x: usize) -> DMatrix<C64> {
    DMatrix::from_fn(n, n, |j, k| {
        let t = [((1u32 << j) | (1u32 << (n + k)), I)];
        let w = pairing_weights(complex, u.bidegree, &t);
        eval_pairing(u, &w, x)
    })
}

fn exact_matrices(complex: &FormComplex, u: &NodalForm) -> Option<Vec<DMatrix<C64>>> {
    let n = complex.n();
    let p = u.bidegree.p;
    let build: fn(usize, &NodalForm, &FormComplex, usize) -> DMatrix<C64> = if p == 1 {
        matrix_11
    } else if p + 1 == n {
        matrix_dual
    } else {
        return None;
    };
    Some((0..u.nodes).map(|x| build(n, u, complex, x)).collect())
}

/// Weak positivity test of a `(p,p)`-form at every quadrature node.
pub fn check_weak_positivity(complex: &FormComplex, u: &Form, spec: SamplerSpec) -> Result<PositivityReport> {
    let n = complex.n();
    let bd = u.bidegree();
    if bd.p != bd.q {
        return Err(Error::Validation(format!("weak positivity needs bidegree (p,p), got {bd}")));
    }
    complex.algebra().check_form(u)?;
    let nodal = complex.evaluate(u);
    let scale = 1.0 + nodal.values.iter().map(|c| c.norm()).fold(0.0, f64::max);
    let tol = 1e-12 * scale;
    let s = n - bd.p;
    let tuples = tuples(n, s, spec);
    let mut min_pairing = f64::INFINITY;
    let mut max_imag: f64 = 0.0;
    let mut witness = None;
    for alphas in &tuples {
        let t = test_form(n, alphas);
        let w = pairing_weights(complex, bd, &t);
        for x in 0..nodal.nodes {
            let v = eval_pairing(&nodal, &w, x);
            max_imag = max_imag.max(v.im.abs());
            min_pairing = min_pairing.min(v.re);
            if v.re < -tol && witness.is_none() {
                witness = Some(Witness::Covectors { node: x, alphas: alphas.clone(), pairing: v.re });
            }
        }
    }
    let real_form = max_imag <= 1e-10 * scale;
    let mut certificate = None;
    let mut exact = false;
    if real_form {
        if let Some(mats) = exact_matrices(complex, &nodal) {
            exact = true;
            let mut lo = f64::INFINITY;
            for (x, m) in mats.iter().enumerate() {
                let h = (m + m.adjoint()) * C64::new(0.5, 0.0);
                let eig = SymmetricEigen::new(h);
                let (i_min, &l) = eig
                    .eigenvalues
                    .iter()
                    .enumerate()
                    .min_by(|a, b| a.1.total_cmp(b.1))
                    .expect("n ≥ 1");
                if l < lo {
                    lo = l;
                    if l < -tol && witness.is_none() {
                        let v = eig.eigenvectors.column(i_min);
                        if bd.p + 1 == n {
                            // α = conj(v) attains v^H M v.
                            let alpha: Vec<C64> = v.iter().map(|c| c.conj()).collect();
                            witness = Some(Witness::Covectors { node: x, alphas: vec![alpha], pairing: l });
                        } else {
                            witness = Some(Witness::Eigen { node: x, eigenvalue: l, vector: v.iter().copied().collect() });
                        }
                    }
                }
            }
            certificate = Some(lo);
        } else if s == 0 || bd.p == 0 {
            exact = true;
        }
    }
    let verdict = if witness.is_some() {
        Verdict::Refuted
    } else if !real_form {
        Verdict::Inconclusive
    } else {
        let decisive = certificate.unwrap_or(min_pairing);
        if decisive > 1e-9 * scale {
            Verdict::Positive
        } else {
            Verdict::SemiPositive
        }
    };
    Ok(PositivityReport { verdict, witness, certificate, min_pairing, samples_used: tuples.len(), exact })
}

/// Eigenvalue test of the Hermitian coefficient matrix of a (1,1)-form; for
/// (1,1) strong and weak positivity coincide, so this verdict is exact.
pub fn check_strong_positivity_11(complex: &FormComplex, u: &Form) -> Result<PositivityReport> {
    let n = complex.n();
    let bd = u.bidegree();
    if bd != Bidegree::new(1, 1) {
        return Err(Error::BidegreeMismatch { expected: Bidegree::new(1, 1), found: bd });
    }
    complex.algebra().check_form(u)?;
    let defect = complex.algebra().reality_defect(u);
    let scale = 1.0 + u.coeff_norm();
    if defect > 1e-10 * scale {
        return Ok(PositivityReport {
            verdict: Verdict::Inconclusive,
            witness: None,
            certificate: None,
            min_pairing: f64::NAN,
            samples_used: 0,
            exact: true,
        });
    }
    let nodal = complex.evaluate(u);
    let tol = 1e-12 * scale;
    let mut lo = f64::INFINITY;
    let mut witness = None;
    for x in 0..nodal.nodes {
        let m = matrix_11(n, &nodal, complex, x);
        let eig = SymmetricEigen::new((&m + m.adjoint()) * C64::new(0.5, 0.0));
        let (i_min, &l) = eig.eigenvalues.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).expect("n ≥ 1");
        if l < lo {
            lo = l;
            if l < -tol {
                witness = Some(Witness::Eigen {
                    node: x,
                    eigenvalue: l,
                    vector: eig.eigenvectors.column(i_min).iter().copied().collect(),
                });
            }
        }
    }
    let verdict = if witness.is_some() {
        Verdict::Refuted
    } else if lo > tol {
        Verdict::Positive
    } else {
        Verdict::SemiPositive
    };
    Ok(PositivityReport { verdict, witness, certificate: Some(lo), min_pairing: lo, samples_used: nodal.nodes, exact: true })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::InvariantModel;

    fn torus3() -> FormComplex {
        FormComplex::invariant(&InvariantModel::abelian(3)).unwrap()
    }

    fn flat_omega(c: &FormComplex) -> Form {
        let a = c.algebra();
        (0..3).map(|j| a.coordinate_monomial(&[j], &[j]).unwrap().scale(I)).reduce(|x, y| x + y).unwrap()
    }

    #[test]
    fn omega_positive_both_ways() {
        let c = torus3();
        let w = flat_omega(&c);
        let weak = check_weak_positivity(&c, &w, SamplerSpec::default()).unwrap();
        let strong = check_strong_positivity_11(&c, &w).unwrap();
        assert_eq!(weak.verdict, Verdict::Positive);
        assert_eq!(strong.verdict, Verdict::Positive);
        assert!((strong.certificate.unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn minus_omega_squared_refuted_on_axis() {
        let c = torus3();
        let w = flat_omega(&c);
        let ww = c.algebra().wedge(&w, &w).unwrap().scale_real(-1.0);
        let r = check_weak_positivity(&c, &ww, SamplerSpec::default()).unwrap();
        assert_eq!(r.verdict, Verdict::Refuted);
        match r.witness.unwrap() {
            Witness::Covectors { alphas, pairing, .. } => {
                assert!(pairing < 0.0);
                assert_eq!(alphas.len(), 1);
                assert_eq!(alphas[0].iter().filter(|c| c.norm() > 0.0).count(), 1);
            }
            other => panic!("unexpected witness {other:?}"),
        }
    }

    #[test]
    fn degenerate_11_is_semi_positive() {
        let c = torus3();
        let a = c.algebra();
        let u = a.coordinate_monomial(&[0], &[0]).unwrap().scale(I) + a.coordinate_monomial(&[1], &[1]).unwrap().scale(I);
        assert_eq!(check_strong_positivity_11(&c, &u).unwrap().verdict, Verdict::SemiPositive);
    }
}
