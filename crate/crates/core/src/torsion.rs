//! Metric classification, Hermitian-symplectic feasibility and the (2,0)-torsion form.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::cohomology::{Laplacian, OperatorBundle};
use crate::error::{Error, Result};
use crate::forms::{Bidegree, Form, C64};
use crate::linalg::{distance_to_image, gram_inverse, lstsq_min_norm, nullspace, RANK_CUTOFF};
use crate::metric::HermitianStructure;

pub const B20: Bidegree = Bidegree::new(2, 0);
pub const B21: Bidegree = Bidegree::new(2, 1);
pub const B11: Bidegree = Bidegree::new(1, 1);

/// Absolute tolerance `1e−8 (1 + ‖ω‖)` used for every defect check.
pub fn scale_tolerance(h: &HermitianStructure) -> f64 {
    1e-8 * (1.0 + h.omega().coeff_norm())
}

#[derive(Clone, Debug)]
pub struct MetricClassification {
    pub kahler: bool,
    pub skt: bool,
    pub balanced: bool,
    pub strongly_gauduchon: bool,
    pub hermitian_symplectic: bool,
    /// `(name, defect)`: `d_omega`, `ddbar_omega`, `d_omega_n1`, `sg_distance`, `hs_residual`.
    pub residuals: Vec<(&'static str, f64)>,
    pub tolerance: f64,
}

impl MetricClassification {
    pub fn residual(&self, name: &str) -> Option<f64> {
        self.residuals.iter().find(|(k, _)| *k == name).map(|(_, v)| *v)
    }

    pub fn flags(&self) -> [(&'static str, bool); 5] {
        [
            ("kahler", self.kahler),
            ("skt", self.skt),
            ("balanced", self.balanced),
            ("strongly_gauduchon", self.strongly_gauduchon),
            ("hermitian_symplectic", self.hermitian_symplectic),
        ]
    }
}

#[derive(Clone, Debug)]
pub struct HsFeasibility {
    pub feasible: bool,
    /// `‖[∂;∂̄]ρ − [0;−∂ω]‖` at the least-squares optimum.
    pub residual: f64,
    pub tolerance: f64,
    /// Minimum-coefficient-norm solution when feasible.
    pub candidate: Option<Form>,
}

fn require_dimension(h: &HermitianStructure) -> Result<()> {
    if h.n() < 2 {
        return Err(Error::Degree { bidegree: B20, n: h.n() });
    }
    Ok(())
}

/// The stacked system `[∂; ∂̄] ρ = [0; −∂ω]` on (2,0)-forms.
fn hs_system(h: &HermitianStructure) -> Result<(DMatrix<C64>, DVector<C64>)> {
    let c = h.complex();
    let del = c.del_matrix(B20);
    let dbar = c.delbar_matrix(B20);
    let del_omega = c.apply_del(h.omega())?;
    let rows = del.nrows() + dbar.nrows();
    let mut a = DMatrix::zeros(rows, c.dim(B20));
    a.view_mut((0, 0), del.shape()).copy_from(&del);
    a.view_mut((del.nrows(), 0), dbar.shape()).copy_from(&dbar);
    let mut b = DVector::zeros(rows);
    b.rows_mut(del.nrows(), dbar.nrows()).copy_from(&(-del_omega.coeffs()));
    Ok((a, b))
}

/// Is there a (2,0)-form `ρ` with `∂ρ = 0` and `∂̄ρ = −∂ω`?
pub fn hs_feasible(h: &HermitianStructure) -> Result<HsFeasibility> {
    require_dimension(h)?;
    let (a, b) = hs_system(h)?;
    let x = lstsq_min_norm(&a, &b);
    let residual = (&a * &x - &b).norm();
    let tolerance = scale_tolerance(h);
    let feasible = residual <= tolerance;
    Ok(HsFeasibility { feasible, residual, tolerance, candidate: feasible.then(|| Form::new(B20, x)) })
}

pub fn classify(h: &HermitianStructure) -> Result<MetricClassification> {
    let n = h.n();
    let c = h.complex();
    let tol = scale_tolerance(h);
    let omega = h.omega();
    let (del_omega, dbar_omega) = c.d_full(omega)?;
    let d_omega = del_omega.coeff_norm().hypot(dbar_omega.coeff_norm());
    let ddbar_omega = if n >= 2 { c.apply_del(&dbar_omega)?.coeff_norm() } else { 0.0 };
    let omega_n1 = h.omega_power(n - 1)?;
    let (del_n1, dbar_n1) = c.d_full(&omega_n1)?;
    let d_omega_n1 = del_n1.coeff_norm().hypot(dbar_n1.coeff_norm());
    let sg_distance = if n >= 2 {
        let image = c.delbar_matrix(Bidegree::new(n, n - 2));
        distance_to_image(&image, del_n1.coeffs())
    } else {
        del_n1.coeff_norm()
    };
    let hs = if n >= 2 {
        hs_feasible(h)?
    } else {
        HsFeasibility { feasible: true, residual: 0.0, tolerance: tol, candidate: None }
    };
    Ok(MetricClassification {
        kahler: d_omega <= tol,
        skt: ddbar_omega <= tol,
        balanced: d_omega_n1 <= tol,
        strongly_gauduchon: sg_distance <= tol,
        hermitian_symplectic: hs.feasible,
        residuals: vec![
            ("d_omega", d_omega),
            ("ddbar_omega", ddbar_omega),
            ("d_omega_n1", d_omega_n1),
            ("sg_distance", sg_distance),
            ("hs_residual", hs.residual),
        ],
        tolerance: tol,
    })
}

#[derive(Clone, Debug)]
pub struct TorsionReport {
    pub rho20: Form,
    pub rho02: Form,
    /// `‖∂̄ρ^{2,0} + ∂ω‖`
    pub residual_constraint: f64,
    /// `‖∂ρ^{2,0}‖`
    pub residual_closed: f64,
    /// `ω`-norm of the projection of `ρ^{2,0}` onto `ker ∂ ∩ ker ∂̄`.
    pub minimality_gap: f64,
    pub tolerance: f64,
}

/// `G`-orthogonal projector onto the span of the columns of `k`.
pub fn gram_projector(gram: &DMatrix<C64>, k: &DMatrix<C64>) -> Result<DMatrix<C64>> {
    if k.ncols() == 0 {
        return Ok(DMatrix::zeros(gram.nrows(), gram.nrows()));
    }
    let inner = k.adjoint() * gram * k;
    Ok(k * gram_inverse(&inner)? * k.adjoint() * gram)
}

/// `ρ^{2,0} = −Δ_BC^{-1}[∂̄*∂ω + ∂̄*∂∂*∂ω]` without any checks.
pub fn torsion_formula(bundle: &OperatorBundle) -> Result<Form> {
    let h = bundle.structure();
    require_dimension(h)?;
    let c = h.complex();
    let del_omega = c.apply_del(h.omega())?;
    let dbar_star = h.delbar_adjoint(B20);
    let t1 = &dbar_star * del_omega.coeffs();
    let inner = h.del_adjoint(B11) * del_omega.coeffs();
    let t2 = &dbar_star * (c.del_matrix(B11) * inner);
    let rhs = Form::new(B20, t1 + t2);
    Ok(bundle.green(Laplacian::BottChern, &rhs)?.scale_real(-1.0))
}

/// The (2,0)-torsion form with its constraint and minimality diagnostics.
/// Refuses metrics that are not Hermitian-symplectic.
pub fn torsion_form(bundle: &OperatorBundle) -> Result<TorsionReport> {
    let h = bundle.structure();
    let feas = hs_feasible(h)?;
    if !feas.feasible {
        return Err(Error::NotHermitianSymplectic { residual: feas.residual, tolerance: feas.tolerance });
    }
    let c = h.complex();
    let rho = torsion_formula(bundle)?;
    let del_omega = c.apply_del(h.omega())?;
    let residual_constraint = (&c.apply_delbar(&rho)? + &del_omega).coeff_norm();
    let residual_closed = c.apply_del(&rho)?.coeff_norm();
    let (a, _) = hs_system(h)?;
    let kernel = nullspace(&a, RANK_CUTOFF);
    let proj = gram_projector(h.gram(B20), &kernel)?;
    let minimality_gap = h.norm(&Form::new(B20, proj * rho.coeffs()))?;
    let tolerance = feas.tolerance;
    for (what, r) in [
        ("∂̄ρ + ∂ω", residual_constraint),
        ("∂ρ", residual_closed),
        ("projection onto ker ∂ ∩ ker ∂̄", minimality_gap),
    ] {
        if r > tolerance {
            return Err(Error::Contract(format!("torsion formula residual {what} = {r:.3e} exceeds {tolerance:.1e}")));
        }
    }
    let rho02 = c.algebra().conjugate(&rho);
    Ok(TorsionReport { rho20: rho, rho02, residual_constraint, residual_closed, minimality_gap, tolerance })
}

/// Convenience wrapper building a fresh operator bundle.
pub fn torsion_of(h: Arc<HermitianStructure>) -> Result<TorsionReport> {
    torsion_form(&OperatorBundle::new(h))
}
