//! The functional `F(ω) = ‖ρ_ω^{2,0}‖²_ω` on an Aeppli class, its differential,
//! and a positivity-preserving gradient descent over (1,0)-potentials.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::cohomology::OperatorBundle;
use crate::error::{Error, Result};
use crate::forms::{Bidegree, Form, C64};
use crate::metric::HermitianStructure;
use crate::positivity::{check_weak_positivity, PositivityReport, SamplerSpec, Verdict};
use crate::torsion::{scale_tolerance, torsion_form, TorsionReport};

pub const B10: Bidegree = Bidegree::new(1, 0);

/// `ω = ω₀ + ∂ū + ∂̄u` for a fixed base `ω₀` and potential `u`.
#[derive(Debug)]
pub struct AeppliPoint {
    base: Arc<HermitianStructure>,
    potential: Form,
    realized: OperatorBundle,
}

impl AeppliPoint {
    pub fn new(base: Arc<HermitianStructure>, potential: Form) -> Result<Self> {
        if potential.bidegree() != B10 {
            return Err(Error::BidegreeMismatch { expected: B10, found: potential.bidegree() });
        }
        let realized = Arc::new(base.shifted(&potential)?);
        Ok(Self { base, potential, realized: OperatorBundle::new(realized) })
    }

    /// The base point itself (`u = 0`).
    pub fn at_base(base: Arc<HermitianStructure>) -> Result<Self> {
        let zero = base.complex().algebra().zero(B10);
        Self::new(base, zero)
    }

    pub fn base(&self) -> &Arc<HermitianStructure> {
        &self.base
    }

    pub fn potential(&self) -> &Form {
        &self.potential
    }

    pub fn realized(&self) -> &Arc<HermitianStructure> {
        self.realized.structure()
    }

    pub fn bundle(&self) -> &OperatorBundle {
        &self.realized
    }

    pub fn positivity_margin(&self) -> f64 {
        self.realized().positivity_margin()
    }

    /// Moves to `u + δ` on the same base.
    pub fn moved(&self, delta: &Form) -> Result<Self> {
        Self::new(self.base.clone(), &self.potential + delta)
    }

    pub fn torsion(&self) -> Result<TorsionReport> {
        torsion_form(&self.realized)
    }
}

/// `F(ω) = ‖ρ^{2,0}_ω‖²_ω`.
pub fn energy(pt: &AeppliPoint) -> Result<f64> {
    let rep = pt.torsion()?;
    pt.realized().norm_sq(&rep.rho20)
}

/// Top-degree nodal form `ρ ∧ ρ̄ ∧ ∂̄ω_{n−3}` (zero for `n ≤ 3`).
fn cubic_density(pt: &AeppliPoint) -> Result<Option<crate::complex::NodalForm>> {
    let h = pt.realized();
    let n = h.n() as isize;
    if n < 4 {
        return Ok(None);
    }
    let rho = pt.torsion()?.rho20;
    let c = h.complex();
    // ∂̄ω_{n−3} = ∂̄ω ∧ ω_{n−4}, pointwise.
    let dbar_omega = c.evaluate(&c.apply_delbar(h.omega())?);
    let dbar_wk = c.nodal_wedge(&dbar_omega, &h.omega_power_nodal(n - 4)?)?;
    let r = c.evaluate(&rho);
    let rr = c.nodal_wedge(&r, &c.nodal_conjugate(&r))?;
    Ok(Some(c.nodal_wedge(&rr, &dbar_wk)?))
}

/// The two terms of `d_ωF(u)`: `−2 Re⟨⟨u, ∂̄*ω⟩⟩_ω` and `2 Re ∫ u∧ρ∧ρ̄∧∂̄ω_{n−3}`.
pub fn differential_terms(pt: &AeppliPoint, u_dir: &Form) -> Result<(f64, f64)> {
    let h = pt.realized();
    h.complex().algebra().check_form(u_dir)?;
    if u_dir.bidegree() != B10 {
        return Err(Error::BidegreeMismatch { expected: B10, found: u_dir.bidegree() });
    }
    let dbar_star_omega = h.apply_delbar_adjoint(h.omega())?;
    let first = -2.0 * h.inner(u_dir, &dbar_star_omega)?.re;
    let second = match cubic_density(pt)? {
        None => 0.0,
        Some(t) => {
            let c = h.complex();
            2.0 * c.integrate_nodal(&c.nodal_wedge(&c.evaluate(u_dir), &t)?)?.re
        }
    };
    Ok((first, second))
}

/// `d_ωF` in the direction `γ = ∂̄u + ∂ū`.
pub fn differential(pt: &AeppliPoint, u_dir: &Form) -> Result<f64> {
    let (a, b) = differential_terms(pt, u_dir)?;
    Ok(a + b)
}

/// `2‖ρ‖² + 2 Re ∫ ∂̄ξ ∧ ρ ∧ ρ̄ ∧ ω_{n−3}`, valid when `ρ = ∂ξ`.
pub fn differential_special(pt: &AeppliPoint, xi: &Form) -> Result<f64> {
    let (value, _, _) = special_parts(pt, xi)?;
    Ok(value)
}

/// `(value, ‖ρ‖², 2 Re ∫ ∂̄ξ∧ρ∧ρ̄∧ω_{n−3})` after checking `ρ = ∂ξ`.
fn special_parts(pt: &AeppliPoint, xi: &Form) -> Result<(f64, f64, f64)> {
    let h = pt.realized();
    let c = h.complex();
    c.algebra().check_form(xi)?;
    if xi.bidegree() != B10 {
        return Err(Error::BidegreeMismatch { expected: B10, found: xi.bidegree() });
    }
    let rho = pt.torsion()?.rho20;
    let residual = (&rho - &c.apply_del(xi)?).coeff_norm();
    if residual > scale_tolerance(h) {
        return Err(Error::Precondition { what: "torsion form is not ∂ξ".into(), residual });
    }
    let n = h.n() as isize;
    let norm_sq = h.norm_sq(&rho)?;
    let integral = if n < 3 {
        0.0
    } else {
        let r = c.evaluate(&rho);
        let rr = c.nodal_wedge(&r, &c.nodal_conjugate(&r))?;
        let dbar_xi = c.evaluate(&c.apply_delbar(xi)?);
        let lhs = c.nodal_wedge(&dbar_xi, &rr)?;
        let top = c.nodal_wedge(&lhs, &h.omega_power_nodal(n - 3)?)?;
        2.0 * c.integrate_nodal(&top)?.re
    };
    Ok((2.0 * norm_sq + integral, norm_sq, integral))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Conclusion {
    Kahler,
    Inconclusive,
}

#[derive(Clone, Debug)]
pub struct CorollaryReport {
    /// Weak positivity of `∂̄ξ`.
    pub positivity: PositivityReport,
    /// `2 Re ∫ ∂̄ξ ∧ ρ ∧ ρ̄ ∧ ω_{n−3}`.
    pub integral: f64,
    pub differential_special: f64,
    pub differential_vanishes: bool,
    pub rho_norm_sq: f64,
    pub conclusion: Conclusion,
    /// For a `Kahler` conclusion: whether the computed `‖ρ‖²` indeed vanishes.
    pub consistent: bool,
}

/// If `∂̄ξ ≥ 0` weakly and `d_ωF(ξ) = 0`, then `2‖ρ‖² = −2 Re ∫(≥ 0)` forces `ρ = 0`.
pub fn corollary_check(pt: &AeppliPoint, xi: &Form, sampler: SamplerSpec) -> Result<CorollaryReport> {
    let h = pt.realized();
    let c = h.complex();
    let (value, norm_sq, integral) = special_parts(pt, xi)?;
    let dbar_xi = c.apply_delbar(xi)?;
    let positivity = check_weak_positivity(c, &dbar_xi, sampler)?;
    let tol = scale_tolerance(h);
    let differential_vanishes = value.abs() <= tol;
    let semi = matches!(positivity.verdict, Verdict::Positive | Verdict::SemiPositive);
    let conclusion = if semi && differential_vanishes { Conclusion::Kahler } else { Conclusion::Inconclusive };
    let consistent = conclusion != Conclusion::Kahler || norm_sq <= tol;
    Ok(CorollaryReport {
        positivity,
        integral,
        differential_special: value,
        differential_vanishes,
        rho_norm_sq: norm_sq,
        conclusion,
        consistent,
    })
}

/// Gradient of `u ↦ F(ω₀ + ∂ū + ∂̄u)` in real coordinates `[Re u; Im u]`.
pub fn real_gradient(pt: &AeppliPoint) -> Result<DVector<f64>> {
    let h = pt.realized();
    let c = h.complex();
    let d = c.dim(B10);
    let w = h.apply_delbar_adjoint(h.omega())?;
    let gw = h.gram(B10) * w.coeffs();
    let mut coeffs: Vec<C64> = gw.iter().map(|v| -2.0 * v.conj()).collect();
    if let Some(t) = cubic_density(pt)? {
        for (k, ck) in coeffs.iter_mut().enumerate() {
            let mut e = c.algebra().zero(B10);
            e.coeffs_mut()[k] = C64::new(1.0, 0.0);
            let top = c.nodal_wedge(&c.evaluate(&e), &t)?;
            *ck += 2.0 * c.integrate_nodal(&top)?;
        }
    }
    Ok(DVector::from_fn(2 * d, |i, _| if i < d { coeffs[i].re } else { -coeffs[i - d].im }))
}

/// Real Riesz matrix `[[A, −B], [B, A]]` of a Hermitian Gram `A + iB`.
pub fn real_riesz(gram: &DMatrix<C64>) -> DMatrix<f64> {
    let d = gram.nrows();
    DMatrix::from_fn(2 * d, 2 * d, |i, j| {
        let g = gram[(i % d, j % d)];
        match (i < d, j < d) {
            (true, true) | (false, false) => g.re,
            (true, false) => -g.im,
            (false, true) => g.im,
        }
    })
}

fn to_form(x: &DVector<f64>) -> Form {
    let d = x.len() / 2;
    Form::new(B10, DVector::from_fn(d, |i, _| C64::new(x[i], x[d + i])))
}

#[derive(Clone, Copy, Debug)]
pub struct FlowOptions {
    pub max_iters: usize,
    /// Stop when the Riesz gradient norm falls below this.
    pub tol: f64,
    pub armijo_c: f64,
    pub initial_step: f64,
    pub shrink: f64,
    pub max_backtracks: usize,
    /// Positivity floor as a fraction of the initial margin.
    pub margin_floor: f64,
}

impl Default for FlowOptions {
    fn default() -> Self {
        Self {
            max_iters: 500,
            tol: 1e-9,
            armijo_c: 1e-4,
            initial_step: 1.0,
            shrink: 0.5,
            max_backtracks: 60,
            margin_floor: 1e-6,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FlowStatus {
    Converged,
    Stalled,
    PositivityBlocked,
    MaxIters,
}

impl FlowStatus {
    pub fn label(self) -> &'static str {
        match self {
            FlowStatus::Converged => "converged",
            FlowStatus::Stalled => "stalled",
            FlowStatus::PositivityBlocked => "positivity_blocked",
            FlowStatus::MaxIters => "max_iters",
        }
    }
}

#[derive(Clone, Debug)]
pub struct FlowIterate {
    pub iter: usize,
    pub potential: Form,
    pub energy: f64,
    pub grad_norm: f64,
    /// Accepted step length (0 for the starting point).
    pub step: f64,
    pub margin: f64,
}

#[derive(Clone, Debug)]
pub struct FlowTrace {
    pub iterates: Vec<FlowIterate>,
    pub status: FlowStatus,
}

impl FlowTrace {
    pub fn last(&self) -> &FlowIterate {
        self.iterates.last().expect("trace holds the starting point")
    }

    pub fn is_monotone(&self) -> bool {
        self.iterates.windows(2).all(|w| w[1].energy <= w[0].energy)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("iter,F,grad_norm,step,margin\n");
        for it in &self.iterates {
            s.push_str(&format!("{},{:.12e},{:.12e},{:.6e},{:.12e}\n", it.iter, it.energy, it.grad_norm, it.step, it.margin));
        }
        s
    }
}

/// Armijo descent along the base-metric Riesz gradient; steps that push the
/// realized metric below the positivity floor are rejected like failed Armijo steps.
pub fn gradient_descent(pt0: AeppliPoint, opts: FlowOptions) -> Result<FlowTrace> {
    let riesz = real_riesz(pt0.base().gram(B10));
    let riesz_inv = {
        let chol = nalgebra::Cholesky::new(riesz.clone())
            .ok_or_else(|| Error::Contract("base Gram on (1,0) is not positive definite".into()))?;
        chol.inverse()
    };
    let floor = opts.margin_floor * pt0.positivity_margin();
    let mut pt = pt0;
    let mut f = energy(&pt)?;
    let mut iterates = Vec::new();
    let mut status = FlowStatus::MaxIters;
    let mut x = {
        let u = pt.potential();
        let d = u.len();
        DVector::from_fn(2 * d, |i, _| if i < d { u.coeffs()[i].re } else { u.coeffs()[i - d].im })
    };
    let mut last_step = 0.0;
    let mut previous: Option<(DVector<f64>, DVector<f64>)> = None;
    for iter in 0..=opts.max_iters {
        let g = real_gradient(&pt)?;
        let dir = &riesz_inv * &g;
        let slope = g.dot(&dir);
        let grad_norm = slope.max(0.0).sqrt();
        iterates.push(FlowIterate {
            iter,
            potential: pt.potential().clone(),
            energy: f,
            grad_norm,
            step: last_step,
            margin: pt.positivity_margin(),
        });
        if grad_norm <= opts.tol {
            status = FlowStatus::Converged;
            break;
        }
        if iter == opts.max_iters {
            break;
        }
        // Barzilai-Borwein trial step in the Riesz metric; Armijo keeps F monotone.
        let mut step = opts.initial_step;
        if let Some((px, pg)) = previous.take() {
            let s = &x - px;
            let sy = s.dot(&(&g - pg));
            if sy > 0.0 {
                step = s.dot(&(&riesz * &s)) / sy;
            }
        }
        let mut accepted = None;
        let mut positivity_rejections = 0;
        for _ in 0..opts.max_backtracks {
            let trial_x = &x - &dir * step;
            let trial = match AeppliPoint::new(pt.base().clone(), to_form(&trial_x)) {
                Ok(p) if p.positivity_margin() >= floor => p,
                Ok(_) | Err(Error::NotPositive { .. }) => {
                    positivity_rejections += 1;
                    step *= opts.shrink;
                    continue;
                }
                Err(e) => return Err(e),
            };
            let ft = energy(&trial)?;
            if ft <= f - opts.armijo_c * step * slope {
                accepted = Some((trial, trial_x, ft));
                break;
            }
            step *= opts.shrink;
        }
        match accepted {
            Some((p, nx, nf)) => {
                pt = p;
                previous = Some((std::mem::replace(&mut x, nx), g));
                f = nf;
                last_step = step;
            }
            None => {
                status = if positivity_rejections == opts.max_backtracks {
                    FlowStatus::PositivityBlocked
                } else {
                    FlowStatus::Stalled
                };
                break;
            }
        }
    }
    Ok(FlowTrace { iterates, status })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::complex::build_complex;
    use crate::model::{builtin, parse_model};

    #[test]
    fn kahler_base_has_zero_energy_and_differential() {
        let file = parse_model(builtin::FLAT_TORUS).unwrap();
        let c = Arc::new(build_complex(&file.model).unwrap());
        let base = Arc::new(HermitianStructure::from_entries(c.clone(), &file.metric).unwrap());
        let pt = AeppliPoint::at_base(base).unwrap();
        assert_eq!(energy(&pt).unwrap(), 0.0);
        let u = c.algebra().coordinate_monomial(&[1], &[]).unwrap();
        assert_eq!(differential(&pt, &u).unwrap(), 0.0);
    }
}
