//! Hermitian metrics on a form complex.
//!
//! Conventions: `ω = i Σ h_{jk} dz^j ∧ dz̄^k` with `h` Hermitian positive definite,
//! `dV_ω = ω_n = det(h) ν`, `⟨dz^j, dz^k⟩ = (h̄^{-1})_{jk}` and
//! `⟨dz̄^j, dz̄^k⟩ = (h^{-1})_{jk}`. Inner products of forms are quadrature sums
//! over the grid nodes, so on the spectral backend every Gram matrix is an exact
//! positive definite Hermitian matrix on the truncated space.

use std::sync::{Arc, OnceLock};

use itertools::Itertools;
use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::complex::{FormComplex, NodalForm};
use crate::error::{Error, Result};
use crate::forms::{mask_conjugate, mask_wedge, reference_volume_factor, Bidegree, Form, C64, I, ONE, ZERO};
use crate::linalg::{gram_inner, gram_inverse};
use crate::model::{MetricEntry, PotentialEntry};

/// Builds `ω = i Σ ĥ_{jk}(m) e_m dz^j ∧ dz̄^k` from Fourier coefficients of `h`.
pub fn omega_from_entries(complex: &FormComplex, entries: &[MetricEntry]) -> Result<Form> {
    let n = complex.n();
    let alg = complex.algebra();
    let mut omega = alg.zero(Bidegree::new(1, 1));
    for e in entries {
        let mi = alg
            .mode_index(&e.mode)
            .ok_or_else(|| Error::Validation(format!("metric mode {} is not in the mode set", e.mode)))?;
        let mask = (1u32 << e.i) | (1u32 << (n + e.j));
        omega.coeffs_mut()[alg.index(mi, mask)] += I * e.value;
    }
    Ok(omega)
}

/// The (1,0)-form `u = Σ c e_m dz^j`.
pub fn potential_from_entries(complex: &FormComplex, entries: &[PotentialEntry]) -> Result<Form> {
    let alg = complex.algebra();
    let mut u = alg.zero(Bidegree::new(1, 0));
    for e in entries {
        let mi = alg
            .mode_index(&e.mode)
            .ok_or_else(|| Error::Validation(format!("potential mode {} is not in the mode set", e.mode)))?;
        u.coeffs_mut()[alg.index(mi, 1 << e.j)] += e.value;
    }
    Ok(u)
}

/// `∂ū + ∂̄u`, the real (1,1) variation generated by a (1,0)-potential.
pub fn aeppli_shift(complex: &FormComplex, u: &Form) -> Result<Form> {
    if u.bidegree() != Bidegree::new(1, 0) {
        return Err(Error::BidegreeMismatch { expected: Bidegree::new(1, 0), found: u.bidegree() });
    }
    let ubar = complex.algebra().conjugate(u);
    Ok(complex.apply_del(&ubar)? + complex.apply_delbar(u)?)
}

/// Determinant of the `rows × cols` minor of a small matrix.
fn minor_det(m: &DMatrix<C64>, rows: &[usize], cols: &[usize]) -> C64 {
    let e = |a: usize, b: usize| m[(rows[a], cols[b])];
    match rows.len() {
        0 => ONE,
        1 => e(0, 0),
        2 => e(0, 0) * e(1, 1) - e(0, 1) * e(1, 0),
        3 => {
            e(0, 0) * (e(1, 1) * e(2, 2) - e(1, 2) * e(2, 1)) - e(0, 1) * (e(1, 0) * e(2, 2) - e(1, 2) * e(2, 0))
                + e(0, 2) * (e(1, 0) * e(2, 1) - e(1, 1) * e(2, 0))
        }
        k => DMatrix::from_fn(k, k, |a, b| e(a, b)).determinant(),
    }
}

/// Metric data at one quadrature node.
#[derive(Clone, Debug)]
struct NodeMetric {
    /// `⟨dz^j, dz^k⟩`.
    p: DMatrix<C64>,
    /// `⟨dz̄^j, dz̄^k⟩`.
    q: DMatrix<C64>,
    det: f64,
}

#[derive(Debug)]
pub struct HermitianStructure {
    complex: Arc<FormComplex>,
    omega: Form,
    nodes: Vec<NodeMetric>,
    margin: f64,
    grams: Vec<OnceLock<DMatrix<C64>>>,
    gram_invs: Vec<OnceLock<DMatrix<C64>>>,
    compounds: Vec<OnceLock<Vec<(Vec<C64>, Vec<C64>)>>>,
}

impl HermitianStructure {
    /// `omega` must be a real (1,1)-form whose matrix is positive definite at every node.
    pub fn new(complex: Arc<FormComplex>, omega: Form) -> Result<Self> {
        let n = complex.n();
        complex.algebra().check_form(&omega)?;
        if omega.bidegree() != Bidegree::new(1, 1) {
            return Err(Error::BidegreeMismatch { expected: Bidegree::new(1, 1), found: omega.bidegree() });
        }
        let defect = complex.algebra().reality_defect(&omega);
        if defect > 1e-10 * (1.0 + omega.coeff_norm()) {
            return Err(Error::Validation(format!("metric form is not real (defect {defect:.3e})")));
        }
        let nodal = complex.evaluate(&omega);
        let fibers = complex.algebra().fibers();
        let mut nodes = Vec::with_capacity(nodal.nodes);
        let mut margin = f64::INFINITY;
        for x in 0..nodal.nodes {
            let mut h = DMatrix::<C64>::zeros(n, n);
            for j in 0..n {
                for k in 0..n {
                    let idx = fibers.index((1u32 << j) | (1u32 << (n + k)));
                    h[(j, k)] = -I * nodal.values[idx * nodal.nodes + x];
                }
            }
            let h = (&h + h.adjoint()) * C64::new(0.5, 0.0);
            let eig = SymmetricEigen::new(h.clone());
            let lo = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
            margin = margin.min(lo);
            if lo <= 0.0 {
                continue;
            }
            let q = h.clone().try_inverse().ok_or(Error::NotPositive { margin: lo })?;
            let p = q.map(|c| c.conj());
            let det = eig.eigenvalues.iter().product();
            nodes.push(NodeMetric { p, q, det });
        }
        if margin <= 0.0 {
            return Err(Error::NotPositive { margin });
        }
        let slots = (n + 1) * (n + 1);
        Ok(Self {
            complex,
            omega,
            nodes,
            margin,
            grams: (0..slots).map(|_| OnceLock::new()).collect(),
            gram_invs: (0..slots).map(|_| OnceLock::new()).collect(),
            compounds: (0..=n).map(|_| OnceLock::new()).collect(),
        })
    }

    pub fn from_entries(complex: Arc<FormComplex>, entries: &[MetricEntry]) -> Result<Self> {
        let omega = omega_from_entries(&complex, entries)?;
        Self::new(complex, omega)
    }

    /// `ω + ∂ū + ∂̄u` on the same complex.
    pub fn shifted(&self, u: &Form) -> Result<Self> {
        let omega = &self.omega + &aeppli_shift(&self.complex, u)?;
        Self::new(self.complex.clone(), omega)
    }

    pub fn complex(&self) -> &Arc<FormComplex> {
        &self.complex
    }

    pub fn n(&self) -> usize {
        self.complex.n()
    }

    pub fn omega(&self) -> &Form {
        &self.omega
    }

    /// Smallest eigenvalue of `h` over all nodes.
    pub fn positivity_margin(&self) -> f64 {
        self.margin
    }

    /// Metric matrix `h` at a node.
    pub fn h_at(&self, x: usize) -> DMatrix<C64> {
        let q = &self.nodes[x].q;
        q.clone().try_inverse().expect("positive definite")
    }

    /// `∫ dV_ω`.
    pub fn volume(&self) -> f64 {
        self.nodes.iter().map(|m| m.det).sum::<f64>() / self.nodes.len() as f64
    }

    fn slot(&self, bd: Bidegree) -> usize {
        bd.p * (self.n() + 1) + bd.q
    }

    /// Per node, all `k × k` minors of `P` and `Q` over the sorted `k`-subsets.
    fn compound(&self, k: usize) -> &Vec<(Vec<C64>, Vec<C64>)> {
        self.compounds[k].get_or_init(|| {
            let subsets: Vec<Vec<usize>> = (0..self.n()).combinations(k).collect();
            self.nodes
                .iter()
                .map(|m| {
                    let mut pc = Vec::with_capacity(subsets.len() * subsets.len());
                    let mut qc = Vec::with_capacity(subsets.len() * subsets.len());
                    for r in &subsets {
                        for c in &subsets {
                            pc.push(minor_det(&m.p, r, c));
                            qc.push(minor_det(&m.q, r, c));
                        }
                    }
                    (pc, qc)
                })
                .collect()
        })
    }

    /// Fiber Gram `G[b][a] = ⟨e_a, e_b⟩` at node `x`, without the volume factor.
    pub fn fiber_gram(&self, bd: Bidegree, x: usize) -> DMatrix<C64> {
        let cp = self.compound(bd.p);
        let cq = self.compound(bd.q);
        let np = (0..self.n()).combinations(bd.p).count();
        let nq = (0..self.n()).combinations(bd.q).count();
        let d = np * nq;
        DMatrix::from_fn(d, d, |b, a| {
            let (i, j) = (a / nq, a % nq);
            let (k, l) = (b / nq, b % nq);
            cp[x].0[i * np + k] * cq[x].1[j * nq + l]
        })
    }

    /// Gram matrix of `Λ^{p,q}`: `G[b][a] = ⟨e_a, e_b⟩`, so `⟨u,v⟩ = v^H G u`.
    pub fn gram(&self, bd: Bidegree) -> &DMatrix<C64> {
        self.grams[self.slot(bd)].get_or_init(|| self.assemble_gram(bd))
    }

    pub fn gram_inverse(&self, bd: Bidegree) -> &DMatrix<C64> {
        self.gram_invs[self.slot(bd)]
            .get_or_init(|| gram_inverse(self.gram(bd)).expect("Gram matrices of a positive metric are positive definite"))
    }

    fn assemble_gram(&self, bd: Bidegree) -> DMatrix<C64> {
        let fd = self.complex.algebra().fiber_dim(bd);
        let modes = self.complex.modes();
        let grid = self.complex.grid();
        let total = self.complex.dim(bd);
        let nn = self.nodes.len();
        let cp = self.compound(bd.p);
        let cq = self.compound(bd.q);
        let np = (0..self.n()).combinations(bd.p).count();
        let nq = (0..self.n()).combinations(bd.q).count();
        // Fourier coefficients of g_{ab}(x) = ⟨e_a, e_b⟩_x det h(x) for b ≥ a.
        let mut hats: Vec<Vec<C64>> = Vec::with_capacity(fd * (fd + 1) / 2);
        let mut buf = vec![ZERO; nn];
        for a in 0..fd {
            for b in a..fd {
                let (i, j) = (a / nq, a % nq);
                let (k, l) = (b / nq, b % nq);
                for x in 0..nn {
                    buf[x] = cp[x].0[i * np + k] * cq[x].1[j * nq + l] * self.nodes[x].det;
                }
                grid.analyze(&mut buf);
                hats.push(buf.clone());
            }
        }
        let pair = |a: usize, b: usize| a * fd - a * (a + 1) / 2 + b;
        let mut g = DMatrix::zeros(total, total);
        for (mr, m_row) in modes.iter().enumerate() {
            for (mc, m_col) in modes.iter().enumerate() {
                let diff = grid.slot(&m_row.add(&m_col.neg()));
                let back = grid.slot(&m_col.add(&m_row.neg()));
                for b in 0..fd {
                    for a in 0..fd {
                        // G[(m_row, b), (m_col, a)] = ĝ_{ab}(m_row − m_col).
                        let v = if b >= a { hats[pair(a, b)][diff] } else { hats[pair(b, a)][back].conj() };
                        g[(mr * fd + b, mc * fd + a)] = v;
                    }
                }
            }
        }
        (&g + g.adjoint()) * C64::new(0.5, 0.0)
    }

    pub fn inner(&self, u: &Form, v: &Form) -> Result<C64> {
        if u.bidegree() != v.bidegree() {
            return Err(Error::BidegreeMismatch { expected: u.bidegree(), found: v.bidegree() });
        }
        self.complex.algebra().check_form(u)?;
        self.complex.algebra().check_form(v)?;
        Ok(gram_inner(self.gram(u.bidegree()), u.coeffs(), v.coeffs()))
    }

    pub fn norm_sq(&self, u: &Form) -> Result<f64> {
        Ok(self.inner(u, u)?.re.max(0.0))
    }

    pub fn norm(&self, u: &Form) -> Result<f64> {
        Ok(self.norm_sq(u)?.sqrt())
    }

    /// Gram adjoint `A* = G_src^{-1} A^H G_dst` of `A : Λ^src → Λ^dst`.
    pub fn adjoint(&self, a: &DMatrix<C64>, src: Bidegree, dst: Bidegree) -> DMatrix<C64> {
        if a.nrows() == 0 || a.ncols() == 0 {
            return DMatrix::zeros(a.ncols(), a.nrows());
        }
        self.gram_inverse(src) * a.adjoint() * self.gram(dst)
    }

    /// `∂* : Λ^{p+1,q} → Λ^{p,q}` where `bd = (p,q)`.
    pub fn del_adjoint(&self, bd: Bidegree) -> DMatrix<C64> {
        let up = Bidegree::new(bd.p + 1, bd.q);
        self.adjoint(&self.complex.del_matrix(bd), bd, up)
    }

    /// `∂̄* : Λ^{p,q+1} → Λ^{p,q}` where `bd = (p,q)`.
    pub fn delbar_adjoint(&self, bd: Bidegree) -> DMatrix<C64> {
        let right = Bidegree::new(bd.p, bd.q + 1);
        self.adjoint(&self.complex.delbar_matrix(bd), bd, right)
    }

    /// Applies `∂*` to a form of bidegree `(p,q)` with `p ≥ 1`.
    pub fn apply_del_adjoint(&self, v: &Form) -> Result<Form> {
        let bd = v.bidegree();
        if bd.p == 0 {
            return Err(Error::Degree { bidegree: Bidegree::new(bd.p, bd.q), n: self.n() });
        }
        let src = Bidegree::new(bd.p - 1, bd.q);
        Ok(Form::new(src, self.del_adjoint(src) * v.coeffs()))
    }

    /// Applies `∂̄*` to a form of bidegree `(p,q)` with `q ≥ 1`.
    pub fn apply_delbar_adjoint(&self, v: &Form) -> Result<Form> {
        let bd = v.bidegree();
        if bd.q == 0 {
            return Err(Error::Degree { bidegree: bd, n: self.n() });
        }
        let src = Bidegree::new(bd.p, bd.q - 1);
        Ok(Form::new(src, self.delbar_adjoint(src) * v.coeffs()))
    }

    /// `ω_k = ω^k / k!` at the nodes.
    pub fn omega_power_nodal(&self, k: isize) -> Result<NodalForm> {
        let n = self.n() as isize;
        let c = &self.complex;
        let nodes = c.grid().len();
        if k < 0 || k > n {
            return Err(Error::Degree { bidegree: Bidegree::new(k.max(0) as usize, k.max(0) as usize), n: self.n() });
        }
        let mut acc = NodalForm::zeros(Bidegree::new(0, 0), 1, nodes);
        acc.values.iter_mut().for_each(|v| *v = ONE);
        let om = c.evaluate(&self.omega);
        for j in 1..=k {
            acc = c.nodal_wedge(&acc, &om)?.scale(C64::new(1.0 / j as f64, 0.0));
        }
        Ok(acc)
    }

    /// `ω_k`, Galerkin-projected onto the mode set (exact on the invariant backend).
    pub fn omega_power(&self, k: usize) -> Result<Form> {
        Ok(self.complex.project(&self.omega_power_nodal(k as isize)?))
    }

    /// Pointwise Hodge star at the nodes: `Λ^{a,b} → Λ^{n−b,n−a}`, complex linear,
    /// characterized by `u ∧ ⋆v̄ = ⟨u,v⟩ dV_ω`.
    pub fn hodge_star_nodal(&self, w: &NodalForm) -> Result<NodalForm> {
        let n = self.n();
        let bd = w.bidegree;
        self.complex.algebra().check_bidegree(bd)?;
        let fibers = self.complex.algebra().fibers();
        let conj_bd = bd.conjugate();
        let out_bd = Bidegree::new(n - bd.q, n - bd.p);
        let src = fibers.masks(bd);
        let conj_masks = fibers.masks(conj_bd);
        let out_masks = fibers.masks(out_bd);
        let vol = reference_volume_factor(n);
        // S: conjugation permutation with signs, no complex conjugation.
        let perm: Vec<(usize, f64)> = src
            .iter()
            .map(|&m| {
                let (cm, s) = mask_conjugate(m, n);
                (fibers.index(cm), s)
            })
            .collect();
        // W: e_c ∧ e_d = W_{cd} ν, one nonzero entry per row.
        let pairing: Vec<(usize, C64)> = conj_masks
            .iter()
            .map(|&mc| {
                let complement = fibers.top_mask() & !mc;
                let (_, s) = mask_wedge(mc, complement).expect("complementary masks");
                (fibers.index(complement), C64::new(s, 0.0) / vol)
            })
            .collect();
        let mut out = NodalForm::zeros(out_bd, out_masks.len(), w.nodes);
        let mut sw = vec![ZERO; conj_masks.len()];
        for x in 0..w.nodes {
            let wx = w.at(x);
            if wx.iter().all(|c| *c == ZERO) {
                continue;
            }
            sw.iter_mut().for_each(|v| *v = ZERO);
            for (k, &(e, s)) in perm.iter().enumerate() {
                sw[e] += wx[k] * s;
            }
            let g = self.fiber_gram(conj_bd, x);
            let det = self.nodes[x].det;
            let mut res = vec![ZERO; out_masks.len()];
            for c in 0..conj_masks.len() {
                let mut rhs = ZERO;
                for e in 0..conj_masks.len() {
                    rhs += g[(e, c)] * sw[e];
                }
                let (d, wcd) = pairing[c];
                res[d] = rhs * det / wcd;
            }
            out.set_at(x, &res);
        }
        Ok(out)
    }

    /// Galerkin Hodge star.
    pub fn hodge_star(&self, u: &Form) -> Result<Form> {
        self.complex.algebra().check_form(u)?;
        let nodal = self.hodge_star_nodal(&self.complex.evaluate(u))?;
        Ok(self.complex.project(&nodal))
    }

    /// Matrix of `L = ω ∧ · : Λ^{p,q} → Λ^{p+1,q+1}`.
    pub fn lefschetz(&self, bd: Bidegree) -> Result<DMatrix<C64>> {
        let alg = self.complex.algebra();
        let target = Bidegree::new(bd.p + 1, bd.q + 1);
        if !target.fits(self.n()) {
            return Ok(DMatrix::zeros(0, alg.dim(bd)));
        }
        let dim = alg.dim(bd);
        let mut m = DMatrix::zeros(alg.dim(target), dim);
        for col in 0..dim {
            let mut e = alg.zero(bd);
            e.coeffs_mut()[col] = ONE;
            let img = alg.wedge(&self.omega, &e)?;
            m.set_column(col, img.coeffs());
        }
        Ok(m)
    }

    /// `L*_ω u`; forms with `p = 0` or `q = 0` map to the empty zero form.
    pub fn lefschetz_adjoint(&self, u: &Form) -> Result<Form> {
        let bd = u.bidegree();
        if bd.p == 0 || bd.q == 0 {
            return Ok(Form::zeros(bd, 0));
        }
        let src = Bidegree::new(bd.p - 1, bd.q - 1);
        let l = self.lefschetz(src)?;
        Ok(Form::new(src, self.adjoint(&l, src, bd) * u.coeffs()))
    }

    /// `(‖L* u‖ ≤ 1e−10 ‖u‖, ‖L* u‖)`.
    pub fn is_primitive(&self, u: &Form) -> Result<(bool, f64)> {
        let r = self.lefschetz_adjoint(u)?.coeff_norm();
        Ok((r <= 1e-10 * u.coeff_norm().max(f64::MIN_POSITIVE), r))
    }

    /// `∫ u ∧ ⋆v̄`, computed by quadrature of the pointwise star.
    pub fn wedge_star_pairing(&self, u: &Form, v: &Form) -> Result<C64> {
        let c = &self.complex;
        let vbar = c.nodal_conjugate(&c.evaluate(v));
        let star = self.hodge_star_nodal(&vbar)?;
        let top = c.nodal_wedge(&c.evaluate(u), &star)?;
        c.integrate_nodal(&top)
    }
}

/// Dense `DVector` helper for callers assembling forms coefficient-wise.
pub fn form_from_fn(bd: Bidegree, dim: usize, f: impl FnMut(usize) -> C64) -> Form {
    let mut f = f;
    Form::new(bd, DVector::from_fn(dim, |i, _| f(i)))
}
