//! Model files: invariant Lie-algebra complexes and Fourier-truncated tori.
//!
//! ```text
//! kind invariant            # or: spectral
//! n 3
//! d 3 := -1 * e(1,2)        # dφ³ = -φ¹∧φ²; e = φ^i∧φ^j, f = φ^i∧φ̄^j, g = φ̄^i∧φ̄^j
//! metric h 1 1 := 1         # h_{ij}, ω = i Σ h_{ij} φ^i∧φ̄^j
//! potential u 3 := 0.1i     # ω ← ω + ∂ū + ∂̄u with u = Σ c φ^j
//!
//! kind spectral
//! n 3
//! modes axis K 1            # or: modes box K 1, or explicit `mode m1 … m2n` lines
//! grid 5                    # nodes per active axis (optional, default 4K+1)
//! metric_mode 0 0 0 0 0 0 h 1 1 := 1
//! potential_mode 1 0 0 0 0 0 u 2 := 0.05
//! ```
//!
//! Family files additionally carry `t_samples := 0, 0.5, ...` and may write any
//! coefficient as `poly(c0, c1, ...)` meaning `c0 + c1 t + ...`.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::forms::{mask_conjugate, mask_wedge, Mode, C64, ZERO};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TwoFormKind {
    /// `e(i,j) = φ^i ∧ φ^j`
    HoloHolo,
    /// `f(i,j) = φ^i ∧ φ̄^j`
    HoloAnti,
    /// `g(i,j) = φ̄^i ∧ φ̄^j`
    AntiAnti,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TwoFormTerm {
    pub kind: TwoFormKind,
    pub i: usize,
    pub j: usize,
    pub coeff: C64,
}

impl TwoFormTerm {
    /// Monomial mask and reordering sign, `None` for a repeated covector.
    pub fn monomial(&self, n: usize) -> Option<(u32, f64)> {
        let (a, b) = match self.kind {
            TwoFormKind::HoloHolo => (self.i, self.j),
            TwoFormKind::HoloAnti => (self.i, n + self.j),
            TwoFormKind::AntiAnti => (n + self.i, n + self.j),
        };
        mask_wedge(1 << a, 1 << b)
    }
}

/// Sparse element of the full fiber exterior algebra.
pub(crate) type Sparse = BTreeMap<u32, C64>;

fn sparse_add(target: &mut Sparse, mask: u32, c: C64) {
    *target.entry(mask).or_insert(ZERO) += c;
}

/// Left-invariant complex on a Lie group given by the differentials of an
/// invariant (1,0)-coframe `φ^1, …, φ^n`.
#[derive(Clone, Debug, PartialEq)]
pub struct InvariantModel {
    pub n: usize,
    /// `d_phi[k]` lists the terms of `dφ^k` (0-based generator index).
    pub d_phi: Vec<Vec<TwoFormTerm>>,
}

impl InvariantModel {
    /// Validates integrability and `d² = 0` on all generators.
    pub fn new(n: usize, d_phi: Vec<Vec<TwoFormTerm>>) -> Result<Self> {
        if n == 0 || n > 6 {
            return Err(Error::Validation(format!("complex dimension {n} outside 1..=6")));
        }
        if d_phi.len() != n {
            return Err(Error::Validation(format!("expected {n} generator differentials, got {}", d_phi.len())));
        }
        for (k, terms) in d_phi.iter().enumerate() {
            for t in terms {
                if t.i >= n || t.j >= n {
                    return Err(Error::Validation(format!("d {}: index out of range in term {:?}", k + 1, t)));
                }
            }
        }
        let model = Self { n, d_phi };
        model.validate()?;
        Ok(model)
    }

    pub fn abelian(n: usize) -> Self {
        Self::new(n, vec![Vec::new(); n]).expect("abelian model is valid")
    }

    /// Complex Heisenberg group quotient: `dφ¹ = dφ² = 0`, `dφ³ = -φ¹∧φ²`.
    pub fn iwasawa() -> Self {
        let d3 = vec![TwoFormTerm { kind: TwoFormKind::HoloHolo, i: 0, j: 1, coeff: C64::new(-1.0, 0.0) }];
        Self::new(3, vec![Vec::new(), Vec::new(), d3]).expect("Iwasawa model is valid")
    }

    /// `d` of generator `bit` (0..n: φ, n..2n: φ̄) as a sparse 2-form.
    pub(crate) fn generator_differential(&self, bit: usize) -> Sparse {
        let n = self.n;
        let mut out = Sparse::new();
        let (k, conjugated) = if bit < n { (bit, false) } else { (bit - n, true) };
        for t in &self.d_phi[k] {
            let Some((mask, s)) = t.monomial(n) else { continue };
            if conjugated {
                let (cm, cs) = mask_conjugate(mask, n);
                sparse_add(&mut out, cm, t.coeff.conj() * (s * cs));
            } else {
                sparse_add(&mut out, mask, t.coeff * s);
            }
        }
        out.retain(|_, c| c.norm() > 0.0);
        out
    }

    /// Leibniz extension: `d(g1∧…∧gk) = Σ (-1)^{i-1} g1∧…∧dg_i∧…∧gk`.
    pub(crate) fn differential_of_monomial(&self, mask: u32, gens: &[Sparse]) -> Sparse {
        let mut out = Sparse::new();
        let bits: Vec<usize> = (0..2 * self.n).filter(|b| mask & (1 << b) != 0).collect();
        for (pos, &b) in bits.iter().enumerate() {
            let prefix: u32 = bits[..pos].iter().map(|&x| 1u32 << x).sum();
            let suffix: u32 = bits[pos + 1..].iter().map(|&x| 1u32 << x).sum();
            let sign = if pos % 2 == 0 { 1.0 } else { -1.0 };
            for (&tm, &tc) in &gens[b] {
                let Some((m1, s1)) = mask_wedge(prefix, tm) else { continue };
                let Some((m2, s2)) = mask_wedge(m1, suffix) else { continue };
                sparse_add(&mut out, m2, tc * (sign * s1 * s2));
            }
        }
        out.retain(|_, c| c.norm() > 0.0);
        out
    }

    fn validate(&self) -> Result<()> {
        let n = self.n;
        let gens: Vec<Sparse> = (0..2 * n).map(|b| self.generator_differential(b)).collect();
        let low = (1u32 << n) - 1;
        for k in 0..n {
            for (&mask, c) in &gens[k] {
                if mask & low == 0 && c.norm() > 1e-14 {
                    return Err(Error::Validation(format!(
                        "non-integrable complex structure: dφ^{} has a (0,2) component",
                        k + 1
                    )));
                }
            }
        }
        for (b, dg) in gens.iter().enumerate() {
            let mut dd = Sparse::new();
            for (&mask, &c) in dg {
                for (m, v) in self.differential_of_monomial(mask, &gens) {
                    sparse_add(&mut dd, m, c * v);
                }
            }
            let worst = dd.values().map(|c| c.norm()).fold(0.0, f64::max);
            if worst > 1e-12 {
                let name = if b < n { format!("φ^{}", b + 1) } else { format!("φ̄^{}", b - n + 1) };
                return Err(Error::Validation(format!("d² ≠ 0 on {name} (max entry {worst:.3e})")));
            }
        }
        Ok(())
    }
}

/// Complex torus `C^n / (Z^{2n})`, `z_j = x_j + i x_{n+j}`, truncated to a
/// symmetric Fourier mode set.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralTorusModel {
    pub n: usize,
    pub modes: Vec<Mode>,
    /// Nodes per real axis.
    pub grid: Vec<usize>,
}

impl SpectralTorusModel {
    /// `grid_nodes` applies to every axis carrying a nonzero mode component;
    /// `None` picks the minimum `4·max|m_a| + 1`.
    pub fn new(n: usize, modes: Vec<Mode>, grid_nodes: Option<usize>) -> Result<Self> {
        if n == 0 || n > 4 {
            return Err(Error::Validation(format!("spectral dimension {n} outside 1..=4")));
        }
        let mut modes = modes;
        if !modes.iter().any(|m| m.is_zero()) {
            modes.push(Mode::unit(n));
        }
        modes.sort();
        modes.dedup();
        for m in &modes {
            if m.0.len() != 2 * n {
                return Err(Error::Validation(format!("mode {m} needs {} integers", 2 * n)));
            }
            if modes.binary_search(&m.neg()).is_err() {
                return Err(Error::Validation(format!("mode set not symmetric: {m} without {}", m.neg())));
            }
        }
        let mut grid = Vec::with_capacity(2 * n);
        for a in 0..2 * n {
            let kmax = modes.iter().map(|m| m.0[a].abs()).max().unwrap_or(0) as usize;
            if kmax == 0 {
                grid.push(1);
                continue;
            }
            let needed = 4 * kmax + 1;
            let nodes = grid_nodes.unwrap_or(needed);
            if nodes < needed {
                return Err(Error::Validation(format!(
                    "grid of {nodes} nodes on axis {} cannot integrate quartic products of modes up to {kmax} (need {needed})",
                    a + 1
                )));
            }
            grid.push(nodes);
        }
        Ok(Self { n, modes, grid })
    }

    /// `{0} ∪ {±k e_a : 1 ≤ k ≤ K}`.
    pub fn axis_modes(n: usize, k: i32) -> Vec<Mode> {
        let mut modes = vec![Mode::unit(n)];
        for a in 0..2 * n {
            for s in 1..=k {
                for sign in [-1, 1] {
                    let mut m = vec![0; 2 * n];
                    m[a] = sign * s;
                    modes.push(Mode(m));
                }
            }
        }
        modes
    }

    /// `{m : |m|_∞ ≤ K}`.
    pub fn box_modes(n: usize, k: i32) -> Vec<Mode> {
        let mut modes = vec![Vec::new()];
        for _ in 0..2 * n {
            modes = modes
                .into_iter()
                .flat_map(|m: Vec<i32>| {
                    (-k..=k).map(move |c| {
                        let mut v = m.clone();
                        v.push(c);
                        v
                    })
                })
                .collect();
        }
        modes.into_iter().map(Mode).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Model {
    Invariant(InvariantModel),
    Spectral(SpectralTorusModel),
}

impl Model {
    pub fn n(&self) -> usize {
        match self {
            Model::Invariant(m) => m.n,
            Model::Spectral(m) => m.n,
        }
    }
}

/// One Fourier coefficient `ĥ_{ij}(m)` of the metric matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricEntry {
    pub mode: Mode,
    pub i: usize,
    pub j: usize,
    pub value: C64,
}

/// One coefficient of the (1,0)-potential `u = Σ c e_m dz^j`.
#[derive(Clone, Debug, PartialEq)]
pub struct PotentialEntry {
    pub mode: Mode,
    pub j: usize,
    pub value: C64,
}

/// A parsed, validated model with its metric and optional potential.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelFile {
    pub model: Model,
    /// Hermitian-completed Fourier coefficients of `h`; identity when the file has none.
    pub metric: Vec<MetricEntry>,
    pub potential: Vec<PotentialEntry>,
}

impl ModelFile {
    pub fn n(&self) -> usize {
        self.model.n()
    }
}

/// Polynomial coefficient `c0 + c1 t + …`.
#[derive(Clone, Debug, PartialEq)]
pub struct Coef(pub Vec<C64>);

impl Coef {
    pub fn constant(c: C64) -> Self {
        Coef(vec![c])
    }

    pub fn eval(&self, t: C64) -> C64 {
        self.0.iter().rev().fold(ZERO, |acc, c| acc * t + c)
    }

    pub fn depends_on_t(&self) -> bool {
        self.0.iter().skip(1).any(|c| c.norm() > 0.0)
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Kind {
    Invariant,
    Spectral,
}

#[derive(Clone, Debug)]
struct RawTerm {
    kind: TwoFormKind,
    i: usize,
    j: usize,
    coeff: Coef,
}

/// A model file whose coefficients may depend polynomially on a parameter `t`.
#[derive(Clone, Debug)]
pub struct ModelTemplate {
    kind: Kind,
    n: usize,
    d_phi: Vec<Vec<RawTerm>>,
    modes: Vec<Mode>,
    grid: Option<usize>,
    metric: Vec<(Mode, usize, usize, Coef, usize)>,
    potential: Vec<(Mode, usize, Coef)>,
    pub t_samples: Option<Vec<C64>>,
}

impl ModelTemplate {
    pub fn depends_on_t(&self) -> bool {
        self.d_phi.iter().flatten().any(|t| t.coeff.depends_on_t())
            || self.metric.iter().any(|m| m.3.depends_on_t())
            || self.potential.iter().any(|p| p.2.depends_on_t())
    }

    /// Evaluates every coefficient at `t` and validates the result.
    pub fn instantiate(&self, t: C64) -> Result<ModelFile> {
        let n = self.n;
        let model = match self.kind {
            Kind::Invariant => {
                let d_phi = self
                    .d_phi
                    .iter()
                    .map(|terms| {
                        terms
                            .iter()
                            .map(|r| TwoFormTerm { kind: r.kind, i: r.i, j: r.j, coeff: r.coeff.eval(t) })
                            .filter(|term| term.coeff.norm() > 0.0)
                            .collect()
                    })
                    .collect();
                Model::Invariant(InvariantModel::new(n, d_phi)?)
            }
            Kind::Spectral => {
                if self.modes.is_empty() {
                    return Err(Error::Validation("spectral model declares no modes".into()));
                }
                Model::Spectral(SpectralTorusModel::new(n, self.modes.clone(), self.grid)?)
            }
        };
        let available: Vec<Mode> = match &model {
            Model::Invariant(_) => vec![Mode::unit(n)],
            Model::Spectral(s) => s.modes.clone(),
        };
        let metric = complete_hermitian(
            n,
            self.metric.iter().map(|(m, i, j, c, line)| (m.clone(), *i, *j, c.eval(t), *line)).collect(),
            &available,
        )?;
        let mut potential = Vec::new();
        for (mode, j, c) in &self.potential {
            if !available.contains(mode) {
                return Err(Error::Validation(format!("potential mode {mode} is not in the mode set")));
            }
            potential.push(PotentialEntry { mode: mode.clone(), j: *j, value: c.eval(t) });
        }
        Ok(ModelFile { model, metric, potential })
    }
}

fn complete_hermitian(
    n: usize,
    raw: Vec<(Mode, usize, usize, C64, usize)>,
    available: &[Mode],
) -> Result<Vec<MetricEntry>> {
    if raw.is_empty() {
        return Ok((0..n).map(|i| MetricEntry { mode: Mode::unit(n), i, j: i, value: C64::new(1.0, 0.0) }).collect());
    }
    let mut given: BTreeMap<(Mode, usize, usize), (C64, usize)> = BTreeMap::new();
    for (mode, i, j, v, line) in raw {
        if !available.contains(&mode) {
            return Err(Error::Parse { line, column: 1, message: format!("metric mode {mode} is not in the mode set") });
        }
        if let Some((old, _)) = given.insert((mode.clone(), i, j), (v, line)) {
            if (old - v).norm() > 0.0 {
                return Err(Error::Parse { line, column: 1, message: format!("duplicate metric entry h {} {}", i + 1, j + 1) });
            }
        }
    }
    let mut full = given.clone();
    for ((mode, i, j), (v, line)) in &given {
        let mirror = (mode.neg(), *j, *i);
        match given.get(&mirror) {
            Some((w, _)) if (w - v.conj()).norm() > 1e-12 * (1.0 + v.norm()) => {
                return Err(Error::Parse {
                    line: *line,
                    column: 1,
                    message: format!("metric is not Hermitian: h {} {} conflicts with its mirror entry", i + 1, j + 1),
                });
            }
            Some(_) => {}
            None => {
                full.insert(mirror, (v.conj(), *line));
            }
        }
    }
    Ok(full
        .into_iter()
        .map(|((mode, i, j), (value, _))| MetricEntry { mode, i, j, value })
        .collect())
}

/// Parses a plain model file; polynomial coefficients are rejected here.
pub fn parse_model(text: &str) -> Result<ModelFile> {
    let template = parse_template(text)?;
    if template.depends_on_t() {
        return Err(Error::Validation("poly(...) coefficients are only allowed in family files".into()));
    }
    template.instantiate(ZERO)
}

/// Parses a comma-separated list of complex literals such as `0, 0.5, 0.1-0.2i`.
pub fn parse_complex_list(text: &str) -> Result<Vec<C64>> {
    complex_list(&mut Cursor::new(text, 1))
}

fn complex_list(cur: &mut Cursor<'_>) -> Result<Vec<C64>> {
    let mut out = vec![cur.complex()?];
    loop {
        let _ = cur.eat(',');
        if cur.at_end() {
            break;
        }
        out.push(cur.complex()?);
    }
    Ok(out)
}

struct Cursor<'a> {
    chars: Vec<char>,
    pos: usize,
    line: usize,
    _src: &'a str,
}

impl<'a> Cursor<'a> {
    fn new(src: &'a str, line: usize) -> Self {
        Self { chars: src.chars().collect(), pos: 0, line, _src: src }
    }

    fn err(&self, message: impl Into<String>) -> Error {
        Error::Parse { line: self.line, column: self.pos + 1, message: message.into() }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.chars.len() && self.chars[self.pos].is_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    fn peek_at(&self, k: usize) -> Option<char> {
        self.chars.get(self.pos + k).copied()
    }

    fn at_end(&mut self) -> bool {
        self.skip_ws();
        self.pos >= self.chars.len()
    }

    fn eat(&mut self, c: char) -> bool {
        self.skip_ws();
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: char) -> Result<()> {
        if self.eat(c) {
            Ok(())
        } else {
            Err(self.err(format!("expected '{c}'")))
        }
    }

    fn expect_str(&mut self, s: &str) -> Result<()> {
        self.skip_ws();
        let end = self.pos + s.chars().count();
        if end <= self.chars.len() && self.chars[self.pos..end].iter().copied().eq(s.chars()) {
            self.pos = end;
            Ok(())
        } else {
            Err(self.err(format!("expected '{s}'")))
        }
    }

    fn word(&mut self) -> Option<String> {
        self.skip_ws();
        let start = self.pos;
        while let Some(c) = self.peek() {
            if c.is_alphanumeric() || c == '_' {
                self.pos += 1;
            } else {
                break;
            }
        }
        (self.pos > start).then(|| self.chars[start..self.pos].iter().collect())
    }

    fn integer(&mut self) -> Result<i64> {
        self.skip_ws();
        let start = self.pos;
        if matches!(self.peek(), Some('+') | Some('-')) {
            self.pos += 1;
        }
        while self.peek().is_some_and(|c| c.is_ascii_digit()) {
            self.pos += 1;
        }
        let s: String = self.chars[start..self.pos].iter().collect();
        s.parse().map_err(|_| {
            self.pos = start;
            self.err("expected an integer")
        })
    }

    fn unsigned_real(&mut self) -> Option<f64> {
        let start = self.pos;
        let mut seen_digit = false;
        while let Some(c) = self.peek() {
            if c.is_ascii_digit() {
                seen_digit = true;
                self.pos += 1;
            } else if c == '.' {
                self.pos += 1;
            } else {
                break;
            }
        }
        if !seen_digit {
            self.pos = start;
            return None;
        }
        if matches!(self.peek(), Some('e') | Some('E')) {
            let save = self.pos;
            self.pos += 1;
            if matches!(self.peek(), Some('+') | Some('-')) {
                self.pos += 1;
            }
            if self.peek().is_some_and(|c| c.is_ascii_digit()) {
                while self.peek().is_some_and(|c| c.is_ascii_digit()) {
                    self.pos += 1;
                }
            } else {
                self.pos = save;
            }
        }
        let s: String = self.chars[start..self.pos].iter().collect();
        s.parse().ok()
    }

    fn imaginary_unit_here(&self) -> bool {
        self.peek() == Some('i') && !self.peek_at(1).is_some_and(|c| c.is_alphanumeric() || c == '_')
    }

    /// `a`, `bi`, `i`, `a+bi`, `a-i`, with an optional leading sign; no inner spaces.
    fn complex(&mut self) -> Result<C64> {
        self.skip_ws();
        let start = self.pos;
        let mut sign = 1.0;
        if self.peek() == Some('-') {
            sign = -1.0;
            self.pos += 1;
        } else if self.peek() == Some('+') {
            self.pos += 1;
        }
        let first = if self.imaginary_unit_here() {
            self.pos += 1;
            return Ok(C64::new(0.0, sign));
        } else {
            self.unsigned_real().ok_or_else(|| {
                self.pos = start;
                self.err("expected a complex literal")
            })?
        };
        if self.imaginary_unit_here() {
            self.pos += 1;
            return Ok(C64::new(0.0, sign * first));
        }
        let save = self.pos;
        if let Some(op) = self.peek().filter(|c| *c == '+' || *c == '-') {
            self.pos += 1;
            let s2 = if op == '-' { -1.0 } else { 1.0 };
            if self.imaginary_unit_here() {
                self.pos += 1;
                return Ok(C64::new(sign * first, s2));
            }
            if let Some(im) = self.unsigned_real() {
                if self.imaginary_unit_here() {
                    self.pos += 1;
                    return Ok(C64::new(sign * first, s2 * im));
                }
            }
            self.pos = save;
        }
        Ok(C64::new(sign * first, 0.0))
    }

    fn coef(&mut self) -> Result<Coef> {
        self.skip_ws();
        let save = self.pos;
        if self.word().as_deref() == Some("poly") {
            self.expect('(')?;
            let mut cs = vec![self.complex()?];
            while self.eat(',') {
                cs.push(self.complex()?);
            }
            self.expect(')')?;
            return Ok(Coef(cs));
        }
        self.pos = save;
        if self.eat('(') {
            let c = self.complex()?;
            self.expect(')')?;
            return Ok(Coef::constant(c));
        }
        Ok(Coef::constant(self.complex()?))
    }

    fn finish(&mut self) -> Result<()> {
        if self.at_end() {
            Ok(())
        } else {
            Err(self.err("unexpected trailing input"))
        }
    }
}

fn index_1based(cur: &mut Cursor<'_>, n: usize, what: &str) -> Result<usize> {
    let v = cur.integer()?;
    if v < 1 || v as usize > n {
        return Err(cur.err(format!("{what} index {v} outside 1..={n}")));
    }
    Ok(v as usize - 1)
}

fn mode_vector(cur: &mut Cursor<'_>, n: usize) -> Result<Mode> {
    let mut m = Vec::with_capacity(2 * n);
    for _ in 0..2 * n {
        m.push(cur.integer()? as i32);
    }
    Ok(Mode(m))
}

fn parse_sum(cur: &mut Cursor<'_>, n: usize) -> Result<Vec<RawTerm>> {
    let mut terms = Vec::new();
    let mut first = true;
    loop {
        if cur.at_end() {
            if first {
                return Err(cur.err("empty right-hand side (write 0 for a closed generator)"));
            }
            break;
        }
        let mut sign = C64::new(1.0, 0.0);
        if cur.eat('-') {
            sign = -sign;
        } else if !cur.eat('+') && !first {
            return Err(cur.err("expected '+' or '-' between terms"));
        }
        first = false;
        cur.skip_ws();
        let is_basis = matches!(cur.peek(), Some('e' | 'f' | 'g')) && {
            let mut k = 1;
            while cur.peek_at(k).is_some_and(|c| c == ' ') {
                k += 1;
            }
            cur.peek_at(k) == Some('(')
        };
        let coeff = if is_basis { Coef::constant(C64::new(1.0, 0.0)) } else { cur.coef()? };
        cur.skip_ws();
        let _ = cur.eat('*');
        cur.skip_ws();
        let kind = match cur.peek() {
            Some('e') => TwoFormKind::HoloHolo,
            Some('f') => TwoFormKind::HoloAnti,
            Some('g') => TwoFormKind::AntiAnti,
            _ if !is_basis && cur.at_end() && coeff.0.iter().all(|c| c.norm() == 0.0) => break,
            _ => return Err(cur.err("expected e(i,j), f(i,j) or g(i,j)")),
        };
        cur.pos += 1;
        cur.expect('(')?;
        let i = index_1based(cur, n, "covector")?;
        cur.expect(',')?;
        let j = index_1based(cur, n, "covector")?;
        cur.expect(')')?;
        terms.push(RawTerm { kind, i, j, coeff: Coef(coeff.0.iter().map(|c| c * sign).collect()) });
    }
    Ok(terms)
}

/// Parses a model or family file.
pub fn parse_template(text: &str) -> Result<ModelTemplate> {
    let mut kind: Option<Kind> = None;
    let mut n: Option<usize> = None;
    let mut d_lines: Vec<(usize, usize, String)> = Vec::new();
    let mut modes: Vec<Mode> = Vec::new();
    let mut grid = None;
    let mut metric = Vec::new();
    let mut potential = Vec::new();
    let mut t_samples = None;

    for (lineno, raw) in text.lines().enumerate() {
        let line_no = lineno + 1;
        let content = raw.split('#').next().unwrap_or("");
        let mut cur = Cursor::new(content, line_no);
        if cur.at_end() {
            continue;
        }
        let key = cur.word().ok_or_else(|| cur.err("expected a keyword"))?;
        let need_n = |cur: &Cursor<'_>| n.ok_or_else(|| cur.err("`n` must be declared first"));
        let need_kind = |cur: &Cursor<'_>, k: Kind| match &kind {
            Some(x) if *x == k => Ok(()),
            Some(_) => Err(cur.err(format!("`{key}` is not valid for this model kind"))),
            None => Err(cur.err("`kind` must be declared first")),
        };
        match key.as_str() {
            "kind" => {
                let k = match cur.word().as_deref() {
                    Some("invariant") => Kind::Invariant,
                    Some("spectral") => Kind::Spectral,
                    _ => return Err(cur.err("kind must be `invariant` or `spectral`")),
                };
                if kind.replace(k).is_some() {
                    return Err(cur.err("duplicate `kind`"));
                }
                cur.finish()?;
            }
            "n" => {
                let v = cur.integer()?;
                if !(1..=6).contains(&v) {
                    return Err(cur.err(format!("n = {v} outside 1..=6")));
                }
                if n.replace(v as usize).is_some() {
                    return Err(cur.err("duplicate `n`"));
                }
                cur.finish()?;
            }
            "d" => {
                need_kind(&cur, Kind::Invariant)?;
                let nn = need_n(&cur)?;
                let k = index_1based(&mut cur, nn, "generator")?;
                cur.expect_str(":=")?;
                let rest: String = cur.chars[cur.pos..].iter().collect();
                let offset = cur.pos;
                d_lines.push((line_no, k, format!("{}{}", " ".repeat(offset), rest)));
            }
            "modes" => {
                need_kind(&cur, Kind::Spectral)?;
                let nn = need_n(&cur)?;
                let shape = cur.word();
                let save = cur.pos;
                if cur.word().as_deref() != Some("K") {
                    cur.pos = save;
                }
                let k = cur.integer()?;
                if !(1..=3).contains(&k) {
                    return Err(cur.err(format!("mode radius {k} outside 1..=3")));
                }
                match shape.as_deref() {
                    Some("axis") => modes.extend(SpectralTorusModel::axis_modes(nn, k as i32)),
                    Some("box") => modes.extend(SpectralTorusModel::box_modes(nn, k as i32)),
                    _ => return Err(cur.err("modes shape must be `axis` or `box`")),
                }
                cur.finish()?;
            }
            "mode" => {
                need_kind(&cur, Kind::Spectral)?;
                let nn = need_n(&cur)?;
                modes.push(mode_vector(&mut cur, nn)?);
                cur.finish()?;
            }
            "grid" => {
                need_kind(&cur, Kind::Spectral)?;
                let g = cur.integer()?;
                if g < 1 {
                    return Err(cur.err("grid must be positive"));
                }
                grid = Some(g as usize);
                cur.finish()?;
            }
            "metric" | "metric_mode" => {
                let nn = need_n(&cur)?;
                if kind.is_none() {
                    return Err(cur.err("`kind` must be declared first"));
                }
                let mode = if key == "metric_mode" {
                    need_kind(&cur, Kind::Spectral)?;
                    mode_vector(&mut cur, nn)?
                } else {
                    Mode::unit(nn)
                };
                if cur.word().as_deref() != Some("h") {
                    return Err(cur.err("expected `h`"));
                }
                let i = index_1based(&mut cur, nn, "metric row")?;
                let j = index_1based(&mut cur, nn, "metric column")?;
                cur.expect_str(":=")?;
                let c = cur.coef()?;
                cur.finish()?;
                metric.push((mode, i, j, c, line_no));
            }
            "potential" | "potential_mode" => {
                let nn = need_n(&cur)?;
                if kind.is_none() {
                    return Err(cur.err("`kind` must be declared first"));
                }
                let mode = if key == "potential_mode" {
                    need_kind(&cur, Kind::Spectral)?;
                    mode_vector(&mut cur, nn)?
                } else {
                    Mode::unit(nn)
                };
                if cur.word().as_deref() != Some("u") {
                    return Err(cur.err("expected `u`"));
                }
                let j = index_1based(&mut cur, nn, "potential component")?;
                cur.expect_str(":=")?;
                let c = cur.coef()?;
                cur.finish()?;
                potential.push((mode, j, c));
            }
            "t_samples" => {
                cur.expect_str(":=")?;
                t_samples = Some(complex_list(&mut cur)?);
            }
            other => return Err(Error::Parse { line: line_no, column: 1, message: format!("unknown keyword `{other}`") }),
        }
    }

    let kind = kind.ok_or_else(|| Error::Parse { line: 1, column: 1, message: "missing `kind`".into() })?;
    let n = n.ok_or_else(|| Error::Parse { line: 1, column: 1, message: "missing `n`".into() })?;
    let mut d_phi: Vec<Vec<RawTerm>> = vec![Vec::new(); n];
    let mut seen = vec![false; n];
    for (line_no, k, rhs) in d_lines {
        if std::mem::replace(&mut seen[k], true) {
            return Err(Error::Parse { line: line_no, column: 1, message: format!("duplicate `d {}`", k + 1) });
        }
        let mut cur = Cursor::new(&rhs, line_no);
        d_phi[k] = parse_sum(&mut cur, n)?;
    }
    Ok(ModelTemplate { kind, n, d_phi, modes, grid, metric, potential, t_samples })
}

/// Built-in model texts used by `selftest` and the test suites.
pub mod builtin {
    pub const FLAT_TORUS: &str = "\
# Flat invariant torus, n = 3
kind invariant
n 3
";

    pub const IWASAWA: &str = "\
# Iwasawa manifold: holomorphically parallelizable nilmanifold
kind invariant
n 3
d 3 := -1 * e(1,2)
";

    pub const PERTURBED_SPECTRAL: &str = "\
# Flat torus, 13 axis modes, perturbed inside the Aeppli class of the flat metric
kind spectral
n 3
modes axis K 1
potential_mode 1 0 0 0 0 0 u 2 := 0.03
potential_mode 0 0 0 0 1 0 u 1 := 0.02-0.01i
potential_mode 0 -1 0 0 0 0 u 3 := 0.015i
";
}
