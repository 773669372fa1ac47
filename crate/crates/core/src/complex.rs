//! Finite form complexes with assembled `∂` and `∂̄` matrices.
//!
//! Both backends share one representation: a [`FormAlgebra`] (mode set × fiber
//! monomials) and a [`QuadratureGrid`]. The invariant backend is the single zero
//! mode on a one-node grid; the spectral backend is a symmetric Fourier mode set on
//! a grid fine enough to integrate quartic products exactly.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::forms::{mask_bidegree, mask_wedge, reference_volume_factor, Bidegree, Form, FormAlgebra, Mode, C64, I, ZERO};
use crate::grid::QuadratureGrid;
use crate::model::{InvariantModel, Model, SpectralTorusModel};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BackendKind {
    Invariant,
    Spectral,
}

impl BackendKind {
    pub fn label(self) -> &'static str {
        match self {
            BackendKind::Invariant => "invariant",
            BackendKind::Spectral => "spectral",
        }
    }
}

/// Values of a form at the quadrature nodes, fiber-major: `values[a * nodes + x]`.
#[derive(Clone, Debug, PartialEq)]
pub struct NodalForm {
    pub bidegree: Bidegree,
    pub fiber_dim: usize,
    pub nodes: usize,
    pub values: Vec<C64>,
}

impl NodalForm {
    pub fn zeros(bidegree: Bidegree, fiber_dim: usize, nodes: usize) -> Self {
        Self { bidegree, fiber_dim, nodes, values: vec![ZERO; fiber_dim * nodes] }
    }

    pub fn component(&self, a: usize) -> &[C64] {
        &self.values[a * self.nodes..(a + 1) * self.nodes]
    }

    pub fn component_mut(&mut self, a: usize) -> &mut [C64] {
        &mut self.values[a * self.nodes..(a + 1) * self.nodes]
    }

    /// Fiber vector at one node.
    pub fn at(&self, x: usize) -> Vec<C64> {
        (0..self.fiber_dim).map(|a| self.values[a * self.nodes + x]).collect()
    }

    pub fn set_at(&mut self, x: usize, fiber: &[C64]) {
        for (a, v) in fiber.iter().enumerate() {
            self.values[a * self.nodes + x] = *v;
        }
    }

    pub fn add_assign(&mut self, other: &NodalForm) {
        assert_eq!(self.bidegree, other.bidegree);
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += b;
        }
    }

    pub fn scale(&self, s: C64) -> NodalForm {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= s);
        out
    }
}

#[derive(Clone, Debug)]
pub struct FormComplex {
    kind: BackendKind,
    algebra: FormAlgebra,
    grid: QuadratureGrid,
    del: Vec<Option<DMatrix<C64>>>,
    delbar: Vec<Option<DMatrix<C64>>>,
}

/// Builds the complex of a validated model.
pub fn build_complex(model: &Model) -> Result<FormComplex> {
    match model {
        Model::Invariant(m) => FormComplex::invariant(m),
        Model::Spectral(m) => FormComplex::spectral(m),
    }
}

impl FormComplex {
    fn slot(n: usize, bd: Bidegree) -> usize {
        bd.p * (n + 1) + bd.q
    }

    pub fn invariant(model: &InvariantModel) -> Result<Self> {
        let n = model.n;
        let algebra = FormAlgebra::invariant(n);
        let gens: Vec<_> = (0..2 * n).map(|b| model.generator_differential(b)).collect();
        let mut del = vec![None; (n + 1) * (n + 1)];
        let mut delbar = vec![None; (n + 1) * (n + 1)];
        for p in 0..=n {
            for q in 0..=n {
                let bd = Bidegree::new(p, q);
                let src = algebra.fibers().masks(bd);
                let up = Bidegree::new(p + 1, q);
                let right = Bidegree::new(p, q + 1);
                let mut dm = up.fits(n).then(|| DMatrix::zeros(algebra.fiber_dim(up), src.len()));
                let mut bm = right.fits(n).then(|| DMatrix::zeros(algebra.fiber_dim(right), src.len()));
                for (col, &mask) in src.iter().enumerate() {
                    for (target, c) in model.differential_of_monomial(mask, &gens) {
                        let tb = mask_bidegree(target, n);
                        let row = algebra.fibers().index(target);
                        if tb == up {
                            dm.as_mut().expect("(p+1,q) exists")[(row, col)] += c;
                        } else if tb == right {
                            bm.as_mut().expect("(p,q+1) exists")[(row, col)] += c;
                        } else {
                            return Err(Error::Contract(format!("d of a {bd} monomial has a {tb} component")));
                        }
                    }
                }
                del[Self::slot(n, bd)] = dm;
                delbar[Self::slot(n, bd)] = bm;
            }
        }
        Ok(Self { kind: BackendKind::Invariant, algebra, grid: QuadratureGrid::point(2 * n), del, delbar })
    }

    pub fn spectral(model: &SpectralTorusModel) -> Result<Self> {
        let n = model.n;
        let algebra = FormAlgebra::new(n, model.modes.iter().cloned())?;
        let grid = QuadratureGrid::new(model.grid.clone());
        let pi = std::f64::consts::PI;
        // ∂_{z_j} e_m = iπ(m_j − i m_{n+j}) e_m, ∂_{z̄_j} e_m = iπ(m_j + i m_{n+j}) e_m.
        let factors: Vec<Vec<C64>> = algebra
            .modes()
            .iter()
            .map(|m| {
                let mut f = Vec::with_capacity(2 * n);
                for j in 0..n {
                    f.push(I * pi * C64::new(m.0[j] as f64, -(m.0[n + j] as f64)));
                }
                for j in 0..n {
                    f.push(I * pi * C64::new(m.0[j] as f64, m.0[n + j] as f64));
                }
                f
            })
            .collect();
        let mut del = vec![None; (n + 1) * (n + 1)];
        let mut delbar = vec![None; (n + 1) * (n + 1)];
        for p in 0..=n {
            for q in 0..=n {
                let bd = Bidegree::new(p, q);
                let up = Bidegree::new(p + 1, q);
                let right = Bidegree::new(p, q + 1);
                let assemble = |target: Bidegree, bits: std::ops::Range<usize>| {
                    target.fits(n).then(|| {
                        let src = algebra.fibers().masks(bd);
                        let mut mat = DMatrix::zeros(algebra.dim(target), algebra.dim(bd));
                        for (mi, f) in factors.iter().enumerate() {
                            for &mask in src {
                                for b in bits.clone() {
                                    if f[b] == ZERO {
                                        continue;
                                    }
                                    let Some((tm, s)) = mask_wedge(1 << b, mask) else { continue };
                                    mat[(algebra.index(mi, tm), algebra.index(mi, mask))] += f[b] * s;
                                }
                            }
                        }
                        mat
                    })
                };
                del[Self::slot(n, bd)] = assemble(up, 0..n);
                delbar[Self::slot(n, bd)] = assemble(right, n..2 * n);
            }
        }
        Ok(Self { kind: BackendKind::Spectral, algebra, grid, del, delbar })
    }

    pub fn kind(&self) -> BackendKind {
        self.kind
    }

    pub fn n(&self) -> usize {
        self.algebra.n()
    }

    pub fn algebra(&self) -> &FormAlgebra {
        &self.algebra
    }

    pub fn grid(&self) -> &QuadratureGrid {
        &self.grid
    }

    pub fn modes(&self) -> &[Mode] {
        self.algebra.modes()
    }

    pub fn dim(&self, bd: Bidegree) -> usize {
        if bd.fits(self.n()) {
            self.algebra.dim(bd)
        } else {
            0
        }
    }

    /// `∂ : Λ^{p,q} → Λ^{p+1,q}`, `None` at the top holomorphic degree.
    pub fn del(&self, bd: Bidegree) -> Option<&DMatrix<C64>> {
        if !bd.fits(self.n()) {
            return None;
        }
        self.del[Self::slot(self.n(), bd)].as_ref()
    }

    /// `∂̄ : Λ^{p,q} → Λ^{p,q+1}`.
    pub fn delbar(&self, bd: Bidegree) -> Option<&DMatrix<C64>> {
        if !bd.fits(self.n()) {
            return None;
        }
        self.delbar[Self::slot(self.n(), bd)].as_ref()
    }

    /// `∂` with explicit zero matrices where the target degree space is empty.
    pub fn del_matrix(&self, bd: Bidegree) -> DMatrix<C64> {
        self.del(bd).cloned().unwrap_or_else(|| DMatrix::zeros(0, self.dim(bd)))
    }

    pub fn delbar_matrix(&self, bd: Bidegree) -> DMatrix<C64> {
        self.delbar(bd).cloned().unwrap_or_else(|| DMatrix::zeros(0, self.dim(bd)))
    }

    /// `∂∂̄ : Λ^{p,q} → Λ^{p+1,q+1}` (zero-row matrix when the target is empty).
    pub fn ddbar_matrix(&self, bd: Bidegree) -> DMatrix<C64> {
        let right = Bidegree::new(bd.p, bd.q + 1);
        match (self.delbar(bd), self.del(right)) {
            (Some(b), Some(d)) => d * b,
            _ => DMatrix::zeros(0, self.dim(bd)),
        }
    }

    fn apply(&self, m: Option<&DMatrix<C64>>, u: &Form, target: Bidegree) -> Result<Form> {
        self.algebra.check_form(u)?;
        Ok(match m {
            Some(m) => Form::new(target, m * u.coeffs()),
            None => Form::zeros(target, 0),
        })
    }

    pub fn apply_del(&self, u: &Form) -> Result<Form> {
        let bd = u.bidegree();
        self.apply(self.del(bd), u, Bidegree::new(bd.p + 1, bd.q))
    }

    pub fn apply_delbar(&self, u: &Form) -> Result<Form> {
        let bd = u.bidegree();
        self.apply(self.delbar(bd), u, Bidegree::new(bd.p, bd.q + 1))
    }

    /// `(∂u, ∂̄u)`; a component leaving the complex is an empty zero form.
    pub fn d_full(&self, u: &Form) -> Result<(Form, Form)> {
        Ok((self.apply_del(u)?, self.apply_delbar(u)?))
    }

    /// Euclidean coefficient norm of `du`.
    pub fn d_norm(&self, u: &Form) -> Result<f64> {
        let (a, b) = self.d_full(u)?;
        Ok(a.coeff_norm().hypot(b.coeff_norm()))
    }

    /// Largest entries of `∂²`, `∂̄²` and `∂∂̄ + ∂̄∂` over all bidegrees.
    pub fn identity_residuals(&self) -> [f64; 3] {
        let n = self.n();
        let mut worst = [0.0f64; 3];
        let max_abs = |m: &DMatrix<C64>| m.iter().map(|c| c.norm()).fold(0.0, f64::max);
        for p in 0..=n {
            for q in 0..=n {
                let bd = Bidegree::new(p, q);
                let up = Bidegree::new(p + 1, q);
                let right = Bidegree::new(p, q + 1);
                if let (Some(a), Some(b)) = (self.del(bd), self.del(up)) {
                    worst[0] = worst[0].max(max_abs(&(b * a)));
                }
                if let (Some(a), Some(b)) = (self.delbar(bd), self.delbar(right)) {
                    worst[1] = worst[1].max(max_abs(&(b * a)));
                }
                if let (Some(d0), Some(b1), Some(b0), Some(d1)) =
                    (self.del(bd), self.delbar(up), self.delbar(bd), self.del(right))
                {
                    worst[2] = worst[2].max(max_abs(&(b1 * d0 + d1 * b0)));
                }
            }
        }
        worst
    }

    /// Synthesizes `u` at every quadrature node.
    pub fn evaluate(&self, u: &Form) -> NodalForm {
        let bd = u.bidegree();
        let fd = self.algebra.fiber_dim(bd);
        let nodes = self.grid.len();
        let mut out = NodalForm::zeros(bd, fd, nodes);
        let slots: Vec<usize> = self.modes().iter().map(|m| self.grid.slot(m)).collect();
        for a in 0..fd {
            let buf = out.component_mut(a);
            let mut any = false;
            for (mi, &s) in slots.iter().enumerate() {
                let c = u.coeffs()[mi * fd + a];
                if c != ZERO {
                    buf[s] += c;
                    any = true;
                }
            }
            if any {
                self.grid.synthesize(buf);
            }
        }
        out
    }

    /// Galerkin projection of nodal values back onto the mode set.
    pub fn project(&self, f: &NodalForm) -> Form {
        let bd = f.bidegree;
        let fd = f.fiber_dim;
        let mut out = self.algebra.zero(bd);
        let slots: Vec<usize> = self.modes().iter().map(|m| self.grid.slot(m)).collect();
        let mut buf = vec![ZERO; f.nodes];
        for a in 0..fd {
            let comp = f.component(a);
            if comp.iter().all(|c| *c == ZERO) {
                continue;
            }
            buf.copy_from_slice(comp);
            self.grid.analyze(&mut buf);
            for (mi, &s) in slots.iter().enumerate() {
                out.coeffs_mut()[mi * fd + a] = buf[s];
            }
        }
        out
    }

    /// Pointwise wedge at the nodes (no truncation).
    pub fn nodal_wedge(&self, u: &NodalForm, v: &NodalForm) -> Result<NodalForm> {
        let bd = Bidegree::new(u.bidegree.p + v.bidegree.p, u.bidegree.q + v.bidegree.q);
        self.algebra.check_bidegree(bd)?;
        let fibers = self.algebra.fibers();
        let mut out = NodalForm::zeros(bd, fibers.dim(bd), u.nodes);
        for (a, &ma) in fibers.masks(u.bidegree).iter().enumerate() {
            let ua = u.component(a);
            if ua.iter().all(|c| *c == ZERO) {
                continue;
            }
            for (b, &mb) in fibers.masks(v.bidegree).iter().enumerate() {
                let Some((mc, s)) = mask_wedge(ma, mb) else { continue };
                let c = fibers.index(mc);
                let vb = v.component(b);
                let dst = &mut out.values[c * u.nodes..(c + 1) * u.nodes];
                for x in 0..u.nodes {
                    dst[x] += ua[x] * vb[x] * s;
                }
            }
        }
        Ok(out)
    }

    pub fn nodal_conjugate(&self, u: &NodalForm) -> NodalForm {
        let n = self.n();
        let fibers = self.algebra.fibers();
        let bd = u.bidegree.conjugate();
        let mut out = NodalForm::zeros(bd, fibers.dim(bd), u.nodes);
        for (a, &ma) in fibers.masks(u.bidegree).iter().enumerate() {
            let (cm, s) = crate::forms::mask_conjugate(ma, n);
            let c = fibers.index(cm);
            for x in 0..u.nodes {
                out.values[c * u.nodes + x] = u.values[a * u.nodes + x].conj() * s;
            }
        }
        out
    }

    /// `∫ u` for a top-degree form, normalized so that `∫ ν = 1`.
    pub fn integrate(&self, u: &Form) -> Result<C64> {
        let n = self.n();
        let top = Bidegree::new(n, n);
        if u.bidegree() != top {
            return Err(Error::BidegreeMismatch { expected: top, found: u.bidegree() });
        }
        Ok(u.coeffs()[self.algebra.zero_mode_index()] / reference_volume_factor(n))
    }

    /// Quadrature version of [`Self::integrate`]; exact for trigonometric
    /// polynomials resolved by the grid.
    pub fn integrate_nodal(&self, u: &NodalForm) -> Result<C64> {
        let n = self.n();
        let top = Bidegree::new(n, n);
        if u.bidegree != top {
            return Err(Error::BidegreeMismatch { expected: top, found: u.bidegree });
        }
        let mean: C64 = u.values.iter().sum::<C64>() / u.nodes as f64;
        Ok(mean / reference_volume_factor(n))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{parse_model, builtin};

    fn iwasawa() -> FormComplex {
        build_complex(&parse_model(builtin::IWASAWA).unwrap().model).unwrap()
    }

    #[test]
    fn torus_differentials_vanish() {
        let c = build_complex(&parse_model(builtin::FLAT_TORUS).unwrap().model).unwrap();
        for p in 0..=3 {
            for q in 0..=3 {
                let bd = Bidegree::new(p, q);
                for m in [c.del(bd), c.delbar(bd)].into_iter().flatten() {
                    assert!(m.iter().all(|x| *x == ZERO));
                }
            }
        }
    }

    #[test]
    fn iwasawa_generator_images() {
        let c = iwasawa();
        let a = c.algebra();
        let phi3 = a.coordinate_monomial(&[2], &[]).unwrap();
        let (d, db) = c.d_full(&phi3).unwrap();
        let want = a.coordinate_monomial(&[0, 1], &[]).unwrap().scale_real(-1.0);
        assert!((&d - &want).coeff_norm() < 1e-15);
        assert!(db.coeff_norm() < 1e-15);
        let phibar3 = a.coordinate_monomial(&[], &[2]).unwrap();
        let (d, db) = c.d_full(&phibar3).unwrap();
        let want = a.coordinate_monomial(&[], &[0, 1]).unwrap().scale_real(-1.0);
        assert!((&db - &want).coeff_norm() < 1e-15);
        assert!(d.coeff_norm() < 1e-15);
        for j in 0..2 {
            let f = a.coordinate_monomial(&[j], &[]).unwrap();
            assert!(c.d_norm(&f).unwrap() < 1e-15);
        }
        assert!(c.identity_residuals().iter().all(|r| *r < 1e-14));
    }

    #[test]
    fn spectral_scalar_derivative() {
        let model = SpectralTorusModel::new(1, SpectralTorusModel::axis_modes(1, 2), None).unwrap();
        let c = FormComplex::spectral(&model).unwrap();
        let m = Mode(vec![0, -2]);
        let e = c.algebra().monomial(&m, 0).unwrap();
        let (d, db) = c.d_full(&e).unwrap();
        let pi = std::f64::consts::PI;
        let mi = c.algebra().mode_index(&m).unwrap();
        // m = (0,-2): ∂ e_m = iπ(0 + 2i) e_m dz = -2π e_m dz
        assert!((d.coeffs()[mi] - C64::new(-2.0 * pi, 0.0)).norm() < 1e-12);
        assert!((db.coeffs()[mi] - C64::new(2.0 * pi, 0.0)).norm() < 1e-12);
        assert!(c.identity_residuals().iter().all(|r| *r < 1e-12));
    }

    #[test]
    fn nodal_round_trip_and_integral() {
        let model = SpectralTorusModel::new(2, SpectralTorusModel::axis_modes(2, 1), None).unwrap();
        let c = FormComplex::spectral(&model).unwrap();
        let bd = Bidegree::new(1, 1);
        let coeffs = nalgebra::DVector::from_fn(c.dim(bd), |i, _| C64::new((i as f64 * 0.37).sin(), (i as f64).cos()));
        let u = Form::new(bd, coeffs);
        let back = c.project(&c.evaluate(&u));
        assert!((&back - &u).coeff_norm() < 1e-12);
        let vol = c.algebra().coordinate_monomial(&[0, 1], &[0, 1]).unwrap();
        let nodal = c.evaluate(&vol);
        assert!((c.integrate_nodal(&nodal).unwrap() - c.integrate(&vol).unwrap()).norm() < 1e-14);
    }
}
