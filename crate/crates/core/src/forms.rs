//! Bigraded exterior algebra over an enumerated basis.
//!
//! A covector monomial `dz^I ∧ dz̄^J` is encoded as a bitmask over `2n` bits:
//! bit `j` is `dz^j`, bit `n + j` is `dz̄^j`. The canonical order of a monomial is
//! increasing bit order, so holomorphic covectors always precede antiholomorphic ones.
//! Indices are 0-based in code.
//!
//! A form of bidegree `(p,q)` is a coefficient vector over the basis
//! `(mode, I, J)`, ordered lexicographically: scalar modes first (sorted lattice
//! vectors), then `I`, then `J`.

use std::collections::HashMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use itertools::Itertools;
use nalgebra::DVector;
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;

pub(crate) const ZERO: C64 = C64::new(0.0, 0.0);
pub(crate) const ONE: C64 = C64::new(1.0, 0.0);
pub(crate) const I: C64 = C64::new(0.0, 1.0);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Bidegree {
    pub p: usize,
    pub q: usize,
}

impl Bidegree {
    pub const fn new(p: usize, q: usize) -> Self {
        Self { p, q }
    }

    pub fn total(self) -> usize {
        self.p + self.q
    }

    pub fn conjugate(self) -> Self {
        Self::new(self.q, self.p)
    }

    pub fn fits(self, n: usize) -> bool {
        self.p <= n && self.q <= n
    }
}

impl fmt::Display for Bidegree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.p, self.q)
    }
}

/// Lattice label of a scalar Fourier mode `e_m(x) = exp(2πi m·x)`.
///
/// Invariant complexes carry the single zero mode, which plays the role of the
/// unit label.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Mode(pub Vec<i32>);

impl Mode {
    pub fn unit(n: usize) -> Self {
        Mode(vec![0; 2 * n])
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&c| c == 0)
    }

    pub fn neg(&self) -> Self {
        Mode(self.0.iter().map(|c| -c).collect())
    }

    pub fn add(&self, other: &Mode) -> Self {
        Mode(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    pub fn sup_norm(&self) -> i32 {
        self.0.iter().map(|c| c.abs()).max().unwrap_or(0)
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}]", self.0.iter().join(" "))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BasisIndex {
    pub mode: Mode,
    /// Strictly increasing holomorphic multi-index `I ⊂ {0..n-1}`.
    pub holo: Vec<usize>,
    /// Strictly increasing antiholomorphic multi-index `J ⊂ {0..n-1}`.
    pub anti: Vec<usize>,
}

impl BasisIndex {
    pub fn mask(&self, n: usize) -> u32 {
        let mut m = 0u32;
        for &i in &self.holo {
            m |= 1 << i;
        }
        for &j in &self.anti {
            m |= 1 << (n + j);
        }
        m
    }
}

/// Sign and product mask of `mono(a) ∧ mono(b)`, or `None` when a covector repeats.
pub fn mask_wedge(a: u32, b: u32) -> Option<(u32, f64)> {
    if a & b != 0 {
        return None;
    }
    let mut inversions = 0u32;
    let mut rest = b;
    while rest != 0 {
        let bit = rest.trailing_zeros();
        inversions += (a >> (bit + 1)).count_ones();
        rest &= rest - 1;
    }
    let sign = if inversions % 2 == 0 { 1.0 } else { -1.0 };
    Some((a | b, sign))
}

pub(crate) fn mask_bidegree(mask: u32, n: usize) -> Bidegree {
    let low = (1u32 << n) - 1;
    Bidegree::new((mask & low).count_ones() as usize, (mask >> n).count_ones() as usize)
}

/// Conjugate of a monomial: `conj(dz^I ∧ dz̄^J) = (-1)^{|I||J|} dz^J ∧ dz̄^I`.
pub(crate) fn mask_conjugate(mask: u32, n: usize) -> (u32, f64) {
    let low = (1u32 << n) - 1;
    let holo = mask & low;
    let anti = mask >> n;
    let sign = if (holo.count_ones() * anti.count_ones()) % 2 == 0 { 1.0 } else { -1.0 };
    (anti | (holo << n), sign)
}

/// Enumeration of monomials per bidegree in the canonical lexicographic order.
#[derive(Clone, Debug)]
pub struct FiberTables {
    n: usize,
    masks: Vec<Vec<u32>>,
    index_of: Vec<usize>,
}

impl FiberTables {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1 && n <= 8, "complex dimension {n} unsupported");
        let mut masks = vec![Vec::new(); (n + 1) * (n + 1)];
        let mut index_of = vec![usize::MAX; 1 << (2 * n)];
        for p in 0..=n {
            for q in 0..=n {
                let list = &mut masks[p * (n + 1) + q];
                for holo in (0..n).combinations(p) {
                    for anti in (0..n).combinations(q) {
                        let m = BasisIndex { mode: Mode::unit(n), holo: holo.clone(), anti }.mask(n);
                        index_of[m as usize] = list.len();
                        list.push(m);
                    }
                }
            }
        }
        Self { n, masks, index_of }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn masks(&self, bd: Bidegree) -> &[u32] {
        &self.masks[bd.p * (self.n + 1) + bd.q]
    }

    pub fn dim(&self, bd: Bidegree) -> usize {
        if bd.fits(self.n) {
            self.masks(bd).len()
        } else {
            0
        }
    }

    /// Position of a monomial inside its own bidegree.
    pub fn index(&self, mask: u32) -> usize {
        self.index_of[mask as usize]
    }

    pub fn top_mask(&self) -> u32 {
        (1u32 << (2 * self.n)) - 1
    }
}

/// Coefficient of the canonical top monomial `dz^1…dz^n ∧ dz̄^1…dz̄^n` inside the
/// reference volume `ν = Π_j (i dz^j ∧ dz̄^j)`.
pub fn reference_volume_factor(n: usize) -> C64 {
    let sign = if (n * (n.saturating_sub(1)) / 2) % 2 == 0 { 1.0 } else { -1.0 };
    I.powu(n as u32) * sign
}

#[derive(Clone, Debug, PartialEq)]
pub struct Form {
    bidegree: Bidegree,
    coeffs: DVector<C64>,
}

impl Form {
    pub fn new(bidegree: Bidegree, coeffs: DVector<C64>) -> Self {
        Self { bidegree, coeffs }
    }

    pub fn zeros(bidegree: Bidegree, dim: usize) -> Self {
        Self { bidegree, coeffs: DVector::zeros(dim) }
    }

    pub fn bidegree(&self) -> Bidegree {
        self.bidegree
    }

    pub fn coeffs(&self) -> &DVector<C64> {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut DVector<C64> {
        &mut self.coeffs
    }

    pub fn into_coeffs(self) -> DVector<C64> {
        self.coeffs
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Euclidean norm of the coefficient vector (flat L² norm on the mode basis).
    pub fn coeff_norm(&self) -> f64 {
        self.coeffs.norm()
    }

    pub fn is_zero(&self, tol: f64) -> bool {
        self.coeffs.iter().all(|c| c.norm() <= tol)
    }

    pub fn scale(&self, s: C64) -> Form {
        Form::new(self.bidegree, &self.coeffs * s)
    }

    pub fn scale_real(&self, s: f64) -> Form {
        self.scale(C64::new(s, 0.0))
    }

    fn check_same(&self, other: &Form) {
        assert_eq!(self.bidegree, other.bidegree, "bidegree mismatch in form arithmetic");
        assert_eq!(self.len(), other.len(), "dimension mismatch in form arithmetic");
    }
}

impl Add for &Form {
    type Output = Form;
    fn add(self, rhs: &Form) -> Form {
        self.check_same(rhs);
        Form::new(self.bidegree, &self.coeffs + &rhs.coeffs)
    }
}

impl Sub for &Form {
    type Output = Form;
    fn sub(self, rhs: &Form) -> Form {
        self.check_same(rhs);
        Form::new(self.bidegree, &self.coeffs - &rhs.coeffs)
    }
}

impl Neg for &Form {
    type Output = Form;
    fn neg(self) -> Form {
        Form::new(self.bidegree, -&self.coeffs)
    }
}

impl Mul<C64> for &Form {
    type Output = Form;
    fn mul(self, rhs: C64) -> Form {
        self.scale(rhs)
    }
}

impl Add for Form {
    type Output = Form;
    fn add(self, rhs: Form) -> Form {
        &self + &rhs
    }
}

impl Sub for Form {
    type Output = Form;
    fn sub(self, rhs: Form) -> Form {
        &self - &rhs
    }
}

/// The mode lattice and fiber monomials of one complex: everything needed to
/// index, multiply and conjugate forms.
#[derive(Clone, Debug)]
pub struct FormAlgebra {
    n: usize,
    modes: Vec<Mode>,
    lookup: HashMap<Mode, usize>,
    negated: Vec<usize>,
    fibers: FiberTables,
}

impl FormAlgebra {
    /// Modes are sorted into the canonical order; the set must contain `0` and be
    /// closed under negation.
    pub fn new(n: usize, modes: impl IntoIterator<Item = Mode>) -> Result<Self> {
        let mut modes: Vec<Mode> = modes.into_iter().collect();
        modes.sort();
        modes.dedup();
        if modes.is_empty() {
            return Err(Error::Validation("mode set is empty".into()));
        }
        if let Some(bad) = modes.iter().find(|m| m.0.len() != 2 * n) {
            return Err(Error::Validation(format!("mode {bad} does not have {} entries", 2 * n)));
        }
        let lookup: HashMap<Mode, usize> = modes.iter().cloned().enumerate().map(|(i, m)| (m, i)).collect();
        if !lookup.contains_key(&Mode::unit(n)) {
            return Err(Error::Validation("mode set must contain the zero mode".into()));
        }
        let mut negated = Vec::with_capacity(modes.len());
        for m in &modes {
            match lookup.get(&m.neg()) {
                Some(&j) => negated.push(j),
                None => {
                    return Err(Error::Validation(format!("mode set is not symmetric: {m} present, {} missing", m.neg())))
                }
            }
        }
        Ok(Self { n, modes, lookup, negated, fibers: FiberTables::new(n) })
    }

    pub fn invariant(n: usize) -> Self {
        Self::new(n, [Mode::unit(n)]).expect("unit mode set is valid")
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn modes(&self) -> &[Mode] {
        &self.modes
    }

    pub fn mode_index(&self, m: &Mode) -> Option<usize> {
        self.lookup.get(m).copied()
    }

    pub fn zero_mode_index(&self) -> usize {
        self.lookup[&Mode::unit(self.n)]
    }

    pub fn negated_mode(&self, i: usize) -> usize {
        self.negated[i]
    }

    pub fn fibers(&self) -> &FiberTables {
        &self.fibers
    }

    pub fn fiber_dim(&self, bd: Bidegree) -> usize {
        self.fibers.dim(bd)
    }

    pub fn dim(&self, bd: Bidegree) -> usize {
        self.modes.len() * self.fiber_dim(bd)
    }

    pub fn check_bidegree(&self, bd: Bidegree) -> Result<()> {
        if bd.fits(self.n) {
            Ok(())
        } else {
            Err(Error::Degree { bidegree: bd, n: self.n })
        }
    }

    pub fn zero(&self, bd: Bidegree) -> Form {
        Form::zeros(bd, self.dim(bd))
    }

    /// The constant function 1 as a (0,0)-form.
    pub fn unit(&self) -> Form {
        let mut f = self.zero(Bidegree::new(0, 0));
        f.coeffs[self.zero_mode_index()] = ONE;
        f
    }

    pub fn check_form(&self, u: &Form) -> Result<()> {
        self.check_bidegree(u.bidegree)?;
        let dim = self.dim(u.bidegree);
        if u.len() != dim {
            return Err(Error::SpaceMismatch { left: u.len(), right: dim });
        }
        Ok(())
    }

    /// Global coefficient index of `(mode, monomial)`.
    pub fn index(&self, mode: usize, mask: u32) -> usize {
        let bd = mask_bidegree(mask, self.n);
        mode * self.fiber_dim(bd) + self.fibers.index(mask)
    }

    /// Basis form `e_mode · mono(mask)`.
    pub fn monomial(&self, mode: &Mode, mask: u32) -> Result<Form> {
        let bd = mask_bidegree(mask, self.n);
        let mi = self
            .mode_index(mode)
            .ok_or_else(|| Error::Validation(format!("mode {mode} is not in the mode set")))?;
        let mut f = self.zero(bd);
        f.coeffs[self.index(mi, mask)] = ONE;
        Ok(f)
    }

    /// Constant-coefficient monomial `dz^I ∧ dz̄^J` (0-based indices).
    pub fn coordinate_monomial(&self, holo: &[usize], anti: &[usize]) -> Result<Form> {
        let mut mask = 0u32;
        let mut sign = 1.0;
        if let Some(bad) = holo.iter().chain(anti).find(|&&i| i >= self.n) {
            return Err(Error::Validation(format!("covector index {bad} out of range")));
        }
        let bits = holo.iter().copied().chain(anti.iter().map(|j| self.n + j));
        for bit in bits {
            let (m, s) = mask_wedge(mask, 1 << bit).ok_or_else(|| Error::Validation("repeated covector".into()))?;
            mask = m;
            sign *= s;
        }
        Ok(self.monomial(&Mode::unit(self.n), mask)?.scale_real(sign))
    }

    pub fn basis(&self, bd: Bidegree) -> Vec<BasisIndex> {
        let mut out = Vec::with_capacity(self.dim(bd));
        for mode in &self.modes {
            for holo in (0..self.n).combinations(bd.p) {
                for anti in (0..self.n).combinations(bd.q) {
                    out.push(BasisIndex { mode: mode.clone(), holo: holo.clone(), anti });
                }
            }
        }
        out
    }

    /// Galerkin wedge product: mode sums that leave the mode set are dropped, which
    /// is the orthogonal projection back onto the span of the mode set.
    pub fn wedge(&self, u: &Form, v: &Form) -> Result<Form> {
        self.check_form(u)?;
        self.check_form(v)?;
        let bd = Bidegree::new(u.bidegree.p + v.bidegree.p, u.bidegree.q + v.bidegree.q);
        self.check_bidegree(bd)?;
        let mut out = self.zero(bd);
        let fu = self.fibers.masks(u.bidegree);
        let fv = self.fibers.masks(v.bidegree);
        let table: Vec<Vec<Option<(usize, f64)>>> = fu
            .iter()
            .map(|&a| {
                fv.iter()
                    .map(|&b| mask_wedge(a, b).map(|(c, s)| (self.fibers.index(c), s)))
                    .collect()
            })
            .collect();
        let (du, dv, dw) = (fu.len(), fv.len(), self.fiber_dim(bd));
        for (mi, m1) in self.modes.iter().enumerate() {
            let ublock = &u.coeffs.as_slice()[mi * du..(mi + 1) * du];
            if ublock.iter().all(|c| *c == ZERO) {
                continue;
            }
            for (mj, m2) in self.modes.iter().enumerate() {
                let vblock = &v.coeffs.as_slice()[mj * dv..(mj + 1) * dv];
                if vblock.iter().all(|c| *c == ZERO) {
                    continue;
                }
                let target = if self.modes.len() == 1 {
                    Some(0)
                } else {
                    self.mode_index(&m1.add(m2))
                };
                let Some(mk) = target else { continue };
                let wblock = &mut out.coeffs.as_mut_slice()[mk * dw..(mk + 1) * dw];
                for (a, ua) in ublock.iter().enumerate() {
                    if *ua == ZERO {
                        continue;
                    }
                    for (b, vb) in vblock.iter().enumerate() {
                        if let Some((c, s)) = table[a][b] {
                            wblock[c] += ua * vb * s;
                        }
                    }
                }
            }
        }
        Ok(out)
    }

    /// Complex conjugation `(p,q) → (q,p)`; scalar modes map `m ↦ -m`.
    pub fn conjugate(&self, u: &Form) -> Form {
        let bd = u.bidegree.conjugate();
        let mut out = self.zero(bd);
        let src = self.fibers.masks(u.bidegree);
        let (ds, dt) = (src.len(), self.fiber_dim(bd));
        for mi in 0..self.modes.len() {
            let mj = self.negated[mi];
            for (a, &mask) in src.iter().enumerate() {
                let c = u.coeffs[mi * ds + a];
                if c == ZERO {
                    continue;
                }
                let (cm, s) = mask_conjugate(mask, self.n);
                out.coeffs[mj * dt + self.fibers.index(cm)] += c.conj() * s;
            }
        }
        out
    }

    /// `‖u - conj(u)‖` for a form of bidegree `(p,p)`.
    pub fn reality_defect(&self, u: &Form) -> f64 {
        if u.bidegree.p != u.bidegree.q {
            return f64::INFINITY;
        }
        (u - &self.conjugate(u)).coeff_norm()
    }

    /// Real part `(u + conj u)/2` of a `(p,p)`-form.
    pub fn real_part(&self, u: &Form) -> Form {
        (u + &self.conjugate(u)).scale_real(0.5)
    }
}

/// Enumerates the basis of `Λ^{p,q}` over `scalar_modes` in canonical order.
pub fn enumerate_basis(n: usize, p: usize, q: usize, scalar_modes: &[Mode]) -> Result<Vec<BasisIndex>> {
    let bd = Bidegree::new(p, q);
    if n == 0 || !bd.fits(n) {
        return Err(Error::Degree { bidegree: bd, n });
    }
    let algebra = FormAlgebra::new(n, scalar_modes.iter().cloned())?;
    Ok(algebra.basis(bd))
}
