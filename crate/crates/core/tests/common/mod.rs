#![allow(dead_code)]

use std::sync::Arc;

use aeppli_core::complex::{build_complex, FormComplex};
use aeppli_core::forms::{Bidegree, Form, C64};
use aeppli_core::metric::{omega_from_entries, potential_from_entries, HermitianStructure};
use aeppli_core::forms::Mode;
use aeppli_core::model::{parse_model, MetricEntry, Model, SpectralTorusModel, TwoFormKind};
use nalgebra::{DMatrix, DVector};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

pub fn rng(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}

pub fn complex_of(text: &str) -> Arc<FormComplex> {
    Arc::new(build_complex(&parse_model(text).unwrap().model).unwrap())
}

/// Base metric of a model file shifted by its potential.
pub fn structure_of(text: &str) -> Arc<HermitianStructure> {
    let file = parse_model(text).unwrap();
    let c = Arc::new(build_complex(&file.model).unwrap());
    let base = HermitianStructure::from_entries(c.clone(), &file.metric).unwrap();
    let u = potential_from_entries(&c, &file.potential).unwrap();
    Arc::new(base.shifted(&u).unwrap())
}

pub fn spectral_torus(n: usize, k: i32) -> Arc<FormComplex> {
    let m = SpectralTorusModel::new(n, SpectralTorusModel::axis_modes(n, k), None).unwrap();
    Arc::new(build_complex(&Model::Spectral(m)).unwrap())
}

pub fn flat(c: &Arc<FormComplex>) -> Arc<HermitianStructure> {
    let n = c.n();
    let entries: Vec<MetricEntry> =
        (0..n).map(|j| MetricEntry { mode: Mode::unit(n), i: j, j, value: C64::new(1.0, 0.0) }).collect();
    Arc::new(HermitianStructure::from_entries(c.clone(), &entries).unwrap())
}

pub fn cplx(rng: &mut StdRng, a: f64) -> C64 {
    C64::new(rng.random_range(-a..a), rng.random_range(-a..a))
}

/// Constant `h = I + A Aᴴ / n` with random `A`.
pub fn random_constant_h(n: usize, rng: &mut StdRng) -> DMatrix<C64> {
    let a = DMatrix::from_fn(n, n, |_, _| cplx(rng, 1.0));
    DMatrix::identity(n, n) + &a * a.adjoint() / C64::new(n as f64, 0.0)
}

pub fn constant_metric(c: &Arc<FormComplex>, h: &DMatrix<C64>) -> HermitianStructure {
    let n = c.n();
    let mut entries = Vec::new();
    for i in 0..n {
        for j in 0..n {
            entries.push(MetricEntry { mode: Mode::unit(n), i, j, value: h[(i, j)] });
        }
    }
    let omega = omega_from_entries(c, &entries).unwrap();
    HermitianStructure::new(c.clone(), omega).unwrap()
}

/// Constant random metric plus Hermitian-symmetric Fourier perturbations of size `amp`
/// on every nonzero mode (generally not closed in any sense).
pub fn random_metric(c: &Arc<FormComplex>, rng: &mut StdRng, amp: f64) -> HermitianStructure {
    let n = c.n();
    let h0 = random_constant_h(n, rng);
    let mut entries = Vec::new();
    for i in 0..n {
        for j in 0..n {
            entries.push(MetricEntry { mode: Mode::unit(n), i, j, value: h0[(i, j)] });
        }
    }
    for m in c.modes() {
        if m.is_zero() || m < &m.neg() {
            continue;
        }
        for i in 0..n {
            for j in 0..n {
                // ĥ_{ij}(m) = conj(ĥ_{ji}(−m)) keeps h Hermitian pointwise.
                let v = cplx(rng, amp);
                entries.push(MetricEntry { mode: m.clone(), i, j, value: v });
                entries.push(MetricEntry { mode: m.neg(), i: j, j: i, value: v.conj() });
            }
        }
    }
    let omega = omega_from_entries(c, &entries).unwrap();
    HermitianStructure::new(c.clone(), omega).unwrap()
}

pub fn random_form(c: &FormComplex, bd: Bidegree, rng: &mut StdRng) -> Form {
    let d = c.dim(bd);
    Form::new(bd, DVector::from_fn(d, |_, _| cplx(rng, 1.0)))
}

/// Random (1,0)-potential supported on all modes, coefficients in `[−amp, amp]`.
pub fn random_potential(c: &FormComplex, rng: &mut StdRng, amp: f64) -> Form {
    let d = c.dim(Bidegree::new(1, 0));
    Form::new(Bidegree::new(1, 0), DVector::from_fn(d, |_, _| cplx(rng, amp)))
}

/// Rank by Gaussian elimination with full pivoting.
pub fn rank_oracle(m: &DMatrix<C64>, rel: f64) -> usize {
    let mut a = m.clone();
    let (rows, cols) = a.shape();
    let scale = a.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if scale == 0.0 {
        return 0;
    }
    let mut r = 0;
    for col in 0..cols {
        if r == rows {
            break;
        }
        let mut best = (r, col, 0.0);
        for i in r..rows {
            for j in col..cols {
                if a[(i, j)].norm() > best.2 {
                    best = (i, j, a[(i, j)].norm());
                }
            }
        }
        if best.2 <= rel * scale {
            break;
        }
        a.swap_rows(r, best.0);
        a.swap_columns(col, best.1);
        let p = a[(r, col)];
        for i in r + 1..rows {
            let f = a[(i, col)] / p;
            for j in col..cols {
                let v = a[(r, j)];
                a[(i, j)] -= f * v;
            }
        }
        r += 1;
    }
    r
}

/// `h^{0,q}_∂̄` of a left-invariant model computed from its structure constants
/// alone: `∂̄φ̄^k` is the conjugate of the (2,0)-part of `dφ^k`.
pub fn invariant_dbar_dim_oracle(text: &str, q: usize) -> usize {
    let file = parse_model(text).unwrap();
    let Model::Invariant(m) = file.model else { panic!("invariant model expected") };
    let n = m.n;
    let sets = |k: usize| -> Vec<u32> { (0u32..1 << n).filter(|s| s.count_ones() as usize == k).collect() };
    // ∂̄ on (0,k)-forms in the basis of increasing index sets.
    let dbar = |k: usize| -> DMatrix<C64> {
        let src = sets(k);
        let dst = sets(k + 1);
        let mut mat = DMatrix::zeros(dst.len(), src.len());
        for (col, &s) in src.iter().enumerate() {
            let idx: Vec<usize> = (0..n).filter(|b| s >> b & 1 == 1).collect();
            for (pos, &g) in idx.iter().enumerate() {
                for t in &m.d_phi[g] {
                    if t.kind != TwoFormKind::HoloHolo {
                        continue;
                    }
                    // Replace φ̄^g at position `pos` by conj(c) φ̄^i ∧ φ̄^j.
                    let mut seq: Vec<usize> = idx.clone();
                    seq.remove(pos);
                    let mut word = seq[..pos].to_vec();
                    word.push(t.i);
                    word.push(t.j);
                    word.extend_from_slice(&seq[pos..]);
                    let mut sign = if pos % 2 == 0 { 1.0 } else { -1.0 };
                    let mut sorted = word.clone();
                    for a in 0..sorted.len() {
                        for b in 0..sorted.len() - 1 - a {
                            if sorted[b] > sorted[b + 1] {
                                sorted.swap(b, b + 1);
                                sign = -sign;
                            }
                        }
                    }
                    if sorted.windows(2).any(|w| w[0] == w[1]) {
                        continue;
                    }
                    let mask: u32 = sorted.iter().map(|b| 1u32 << b).sum();
                    let row = dst.iter().position(|&x| x == mask).unwrap();
                    mat[(row, col)] += t.coeff.conj() * sign;
                }
            }
        }
        mat
    };
    let dim = sets(q).len();
    let ker = dim - if q < n { rank_oracle(&dbar(q), 1e-12) } else { 0 };
    let im = if q > 0 { rank_oracle(&dbar(q - 1), 1e-12) } else { 0 };
    ker - im
}

/// Minimal `G`-norm solution of `A x = b`: particular least-squares solution
/// minus its `G`-orthogonal projection onto `ker A` (kernel from an SVD).
pub fn least_norm_oracle(a: &DMatrix<C64>, b: &DVector<C64>, gram: &DMatrix<C64>) -> DVector<C64> {
    let cols = a.ncols();
    let rows = a.nrows().max(cols);
    let mut padded = DMatrix::zeros(rows, cols);
    padded.view_mut((0, 0), a.shape()).copy_from(a);
    let mut rhs = DVector::zeros(rows);
    rhs.rows_mut(0, b.len()).copy_from(b);
    let svd = padded.svd(true, true);
    let smax = svd.singular_values.max();
    let x0 = svd.solve(&rhs, 1e-10 * smax).unwrap();
    let v_t = svd.v_t.unwrap();
    let kernel_rows: Vec<usize> = (0..cols).filter(|&i| svd.singular_values[i] <= 1e-10 * smax).collect();
    if kernel_rows.is_empty() {
        return x0;
    }
    let k = DMatrix::from_fn(cols, kernel_rows.len(), |i, j| v_t[(kernel_rows[j], i)].conj());
    let inner = k.adjoint() * gram * &k;
    let coef = inner.lu().solve(&(k.adjoint() * gram * &x0)).unwrap();
    x0 - k * coef
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}
