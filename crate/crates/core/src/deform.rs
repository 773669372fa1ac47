//! Minimal-norm solution operators, the Kähler construction inside an Aeppli
//! class, and diagnostics along parameter families of models and metrics.

use std::sync::Arc;

use crate::cohomology::{cohomology_dims, Laplacian, OperatorBundle};
use crate::complex::build_complex;
use crate::energy::{gradient_descent, real_gradient, AeppliPoint, FlowOptions, FlowStatus, B10};
use crate::error::{Error, Result};
use crate::forms::{Bidegree, Form, C64};
use crate::linalg::distance_to_image;
use crate::metric::{aeppli_shift, potential_from_entries, HermitianStructure};
use crate::model::ModelTemplate;
use crate::report::{csv_field, format_complex, format_opt};
use crate::torsion::{scale_tolerance, torsion_form, B21};

/// A solution of a linear equation together with its defects.
#[derive(Clone, Debug)]
pub struct MinimalSolution {
    pub solution: Form,
    /// Euclidean coefficient distance of the right-hand side to the image.
    pub image_distance: f64,
    /// `‖L(solution) − rhs‖`.
    pub residual: f64,
}

/// `u = (∂∂̄)* Δ_BC^{-1} v`, the minimal-norm solution of `∂∂̄u = v`.
pub fn min_ddbar_solution(bundle: &OperatorBundle, v: &Form) -> Result<MinimalSolution> {
    let h = bundle.structure();
    let c = h.complex();
    c.algebra().check_form(v)?;
    let bd = v.bidegree();
    if bd.p == 0 || bd.q == 0 {
        return Err(Error::Degree { bidegree: bd, n: h.n() });
    }
    let src = Bidegree::new(bd.p - 1, bd.q - 1);
    let ddbar = c.ddbar_matrix(src);
    let image_distance = distance_to_image(&ddbar, v.coeffs());
    let tolerance = 1e-8 * v.coeff_norm();
    if image_distance > tolerance {
        return Err(Error::NotInImage { what: "Im ∂∂̄", distance: image_distance, tolerance });
    }
    let g = bundle.green(Laplacian::BottChern, v)?;
    let u = Form::new(src, bundle.ddbar_adjoint(src) * g.coeffs());
    let residual = (&ddbar * u.coeffs() - v.coeffs()).norm();
    let tol = scale_tolerance(h).max(tolerance);
    if residual > tol {
        return Err(Error::Contract(format!("∂∂̄u − v = {residual:.3e} exceeds {tol:.1e}")));
    }
    Ok(MinimalSolution { solution: u, image_distance, residual })
}

#[derive(Clone, Debug)]
pub struct NeumannSolution {
    pub solution: MinimalSolution,
    /// `‖∂̄* Δ_∂̄^{-1} ρ − Δ_∂̄^{-1} ∂̄* ρ‖`.
    pub commutation_defect: f64,
}

/// `φ = ∂̄* Δ_∂̄^{-1} ρ`, the minimal-norm solution of `∂̄φ = ρ`.
pub fn neumann_dbar_solution(bundle: &OperatorBundle, rho: &Form) -> Result<NeumannSolution> {
    let h = bundle.structure();
    let c = h.complex();
    c.algebra().check_form(rho)?;
    let bd = rho.bidegree();
    if bd.q == 0 {
        return Err(Error::Degree { bidegree: bd, n: h.n() });
    }
    let src = Bidegree::new(bd.p, bd.q - 1);
    let dbar = c.delbar_matrix(src);
    let image_distance = distance_to_image(&dbar, rho.coeffs());
    let tolerance = scale_tolerance(h) * (1.0 + rho.coeff_norm());
    if image_distance > tolerance {
        return Err(Error::NotInImage { what: "Im ∂̄", distance: image_distance, tolerance });
    }
    let adj = h.delbar_adjoint(src);
    let g = bundle.green(Laplacian::Dolbeault, rho)?;
    let phi = Form::new(src, &adj * g.coeffs());
    let residual = (&dbar * phi.coeffs() - rho.coeffs()).norm();
    if residual > tolerance {
        return Err(Error::Contract(format!("∂̄φ − ρ = {residual:.3e} exceeds {tolerance:.1e}")));
    }
    let swapped = bundle.green(Laplacian::Dolbeault, &Form::new(src, &adj * rho.coeffs()))?;
    let commutation_defect = (&phi - &swapped).coeff_norm();
    Ok(NeumannSolution { solution: MinimalSolution { solution: phi, image_distance, residual }, commutation_defect })
}

/// Minimum over the nodes of the smallest eigenvalue of a real (1,1)-form,
/// negative when the form is not a metric.
pub fn positivity_margin(h: &HermitianStructure, omega: &Form) -> Result<f64> {
    match HermitianStructure::new(h.complex().clone(), omega.clone()) {
        Ok(s) => Ok(s.positivity_margin()),
        Err(Error::NotPositive { margin }) => Ok(margin),
        Err(e) => Err(e),
    }
}

#[derive(Clone, Debug)]
pub struct KahlerReport {
    pub u_min: Form,
    pub omega_tilde: Form,
    /// Distance of `∂ω` to `Im ∂∂̄`.
    pub hypothesis_distance: f64,
    /// `‖dω̃‖`.
    pub d_residual: f64,
    /// `‖ω̃ − ω − (∂ū_min + ∂̄u_min)‖`.
    pub aeppli_defect: f64,
    pub margin: f64,
    pub tolerance: f64,
}

impl KahlerReport {
    pub fn is_positive(&self) -> bool {
        self.margin > 0.0
    }
}

/// `ω̃ = ω + ∂ū_min + ∂̄u_min` with `u_min = −(∂∂̄)* Δ_BC^{-1}(∂ω)`.
pub fn kahler_in_class(bundle: &OperatorBundle) -> Result<KahlerReport> {
    let h = bundle.structure();
    let c = h.complex();
    let tolerance = scale_tolerance(h);
    if h.n() < 2 {
        return Err(Error::Degree { bidegree: B21, n: h.n() });
    }
    let del_omega = c.apply_del(h.omega())?;
    let hypothesis_distance = distance_to_image(&c.ddbar_matrix(B10), del_omega.coeffs());
    if hypothesis_distance > tolerance {
        return Err(Error::NotInImage { what: "∂ω in Im ∂∂̄", distance: hypothesis_distance, tolerance });
    }
    let g = bundle.green(Laplacian::BottChern, &del_omega)?;
    let u_min = Form::new(B10, bundle.ddbar_adjoint(B10) * g.coeffs()).scale_real(-1.0);
    let shift = aeppli_shift(c, &u_min)?;
    let omega_tilde = h.omega() + &shift;
    let d_residual = c.d_norm(&omega_tilde)?;
    let aeppli_defect = (&(&omega_tilde - h.omega()) - &shift).coeff_norm();
    let margin = positivity_margin(h, &omega_tilde)?;
    if d_residual > tolerance {
        return Err(Error::Contract(format!("dω̃ = {d_residual:.3e} exceeds {tolerance:.1e}")));
    }
    Ok(KahlerReport { u_min, omega_tilde, hypothesis_distance, d_residual, aeppli_defect, margin, tolerance })
}

/// A parameter family: one model/metric per sample `t`, `t = 0` included.
#[derive(Clone, Debug)]
pub struct FamilySpec {
    pub template: ModelTemplate,
    pub samples: Vec<C64>,
}

impl FamilySpec {
    /// Uses `samples` if given, else the template's own `t_samples`.
    pub fn new(template: ModelTemplate, samples: Option<Vec<C64>>) -> Result<Self> {
        let samples = samples
            .or_else(|| template.t_samples.clone())
            .ok_or_else(|| Error::Validation("family needs t samples".into()))?;
        if !samples.iter().any(|t| *t == C64::new(0.0, 0.0)) {
            return Err(Error::Validation("family samples must include t = 0".into()));
        }
        for t in &samples {
            template.instantiate(*t)?;
        }
        Ok(Self { template, samples })
    }
}

#[derive(Clone, Debug)]
pub struct FamilyConfig {
    /// Bidegrees whose Dolbeault and Bott-Chern numbers are tabulated.
    pub bidegrees: Vec<Bidegree>,
    /// When set, each `t ≠ 0` metric is first flowed inside its Aeppli class.
    pub preflow: Option<FlowOptions>,
    /// Caps the criticality direction set to the first basis elements.
    pub direction_cap: Option<usize>,
}

impl Default for FamilyConfig {
    fn default() -> Self {
        Self {
            bidegrees: vec![Bidegree::new(0, 1), Bidegree::new(0, 2), Bidegree::new(2, 1)],
            preflow: None,
            direction_cap: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct FamilyRow {
    pub t: C64,
    /// `(bidegree, h_∂̄, h_BC)` in config order.
    pub dims: Vec<(Bidegree, usize, usize)>,
    pub hermitian_symplectic: bool,
    pub rho_norm: Option<f64>,
    /// Coefficient norm of `ρ_t − ρ_0`.
    pub rho_diff: Option<f64>,
    /// Norm of the minimal `β` with `∂̄β = ρ^{0,2}` when that equation is solvable.
    pub beta_norm: Option<f64>,
    /// `max |d_ωF|` over the direction set `{e_k, i e_k}`.
    pub crit_sup: Option<f64>,
    pub crit_diff: Option<f64>,
    pub kahler_d_residual: Option<f64>,
    pub kahler_margin: Option<f64>,
    pub flow_status: Option<FlowStatus>,
    pub flags: Vec<&'static str>,
    rho: Option<Form>,
}

impl FamilyRow {
    pub fn flagged(&self) -> bool {
        !self.flags.is_empty()
    }
}

#[derive(Clone, Debug)]
pub struct FamilyTable {
    pub rows: Vec<FamilyRow>,
}

impl FamilyTable {
    pub fn zero_row(&self) -> &FamilyRow {
        self.rows.iter().find(|r| r.t == C64::new(0.0, 0.0)).expect("t = 0 is sampled")
    }

    /// Least-squares slope of `log value` against `log |t|` over rows with `t ≠ 0`
    /// and a positive value.
    pub fn observed_order(&self, value: impl Fn(&FamilyRow) -> Option<f64>) -> Option<f64> {
        let pts: Vec<(f64, f64)> = self
            .rows
            .iter()
            .filter(|r| r.t.norm() > 0.0)
            .filter_map(|r| value(r).filter(|v| *v > 0.0).map(|v| (r.t.norm().ln(), v.ln())))
            .collect();
        if pts.len() < 2 {
            return None;
        }
        let k = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        (sxx > 0.0).then(|| sxy / sxx)
    }

    pub fn to_csv(&self) -> String {
        let mut header = vec!["t".to_string()];
        if let Some(r) = self.rows.first() {
            for (bd, _, _) in &r.dims {
                header.push(format!("h_dbar_{}{}", bd.p, bd.q));
                header.push(format!("h_bc_{}{}", bd.p, bd.q));
            }
        }
        header.extend(
            [
                "hermitian_symplectic",
                "rho_norm",
                "rho_diff",
                "beta_norm",
                "crit_sup",
                "crit_diff",
                "kahler_d_residual",
                "kahler_margin",
                "flow_status",
                "flags",
            ]
            .map(String::from),
        );
        let mut out = header.join(",");
        out.push('\n');
        for r in &self.rows {
            let mut f = vec![format_complex(r.t)];
            for (_, a, b) in &r.dims {
                f.push(a.to_string());
                f.push(b.to_string());
            }
            f.push(r.hermitian_symplectic.to_string());
            for x in [r.rho_norm, r.rho_diff, r.beta_norm, r.crit_sup, r.crit_diff, r.kahler_d_residual, r.kahler_margin] {
                f.push(format_opt(x));
            }
            f.push(r.flow_status.map(|s| s.label().to_string()).unwrap_or_default());
            f.push(csv_field(&r.flags.join(";")));
            out.push_str(&f.join(","));
            out.push('\n');
        }
        out
    }
}

fn family_row(spec: &FamilySpec, t: C64, config: &FamilyConfig) -> Result<FamilyRow> {
    let file = spec.template.instantiate(t)?;
    let complex = Arc::new(build_complex(&file.model)?);
    let base = Arc::new(HermitianStructure::from_entries(complex.clone(), &file.metric)?);
    let u = potential_from_entries(&complex, &file.potential)?;
    let mut pt = AeppliPoint::new(base, u)?;
    let dims = cohomology_dims(pt.bundle(), &config.bidegrees)?
        .rows
        .iter()
        .map(|r| (r.bidegree, r.h_dolbeault, r.h_bott_chern))
        .collect();
    let mut row = FamilyRow {
        t,
        dims,
        hermitian_symplectic: false,
        rho_norm: None,
        rho_diff: None,
        beta_norm: None,
        crit_sup: None,
        crit_diff: None,
        kahler_d_residual: None,
        kahler_margin: None,
        flow_status: None,
        flags: Vec::new(),
        rho: None,
    };
    let torsion = match torsion_form(pt.bundle()) {
        Ok(rep) => rep,
        Err(Error::NotHermitianSymplectic { .. }) => {
            row.flags.push("not_hermitian_symplectic");
            return Ok(row);
        }
        Err(e) => return Err(e),
    };
    row.hermitian_symplectic = true;
    if let (Some(opts), false) = (config.preflow, t == C64::new(0.0, 0.0)) {
        let trace = gradient_descent(pt, opts)?;
        row.flow_status = Some(trace.status);
        if trace.status != FlowStatus::Converged {
            row.flags.push("flow_not_converged");
        }
        let potential = trace.last().potential.clone();
        let base = Arc::new(HermitianStructure::from_entries(complex.clone(), &file.metric)?);
        pt = AeppliPoint::new(base, potential)?;
    }
    let torsion = if row.flow_status.is_some() { torsion_form(pt.bundle())? } else { torsion };
    let h = pt.realized();
    row.rho_norm = Some(h.norm(&torsion.rho20)?);
    match neumann_dbar_solution(pt.bundle(), &torsion.rho02) {
        Ok(s) => row.beta_norm = Some(h.norm(&s.solution.solution)?),
        Err(Error::NotInImage { .. }) => row.flags.push("rho02_not_dbar_exact"),
        Err(e) => return Err(e),
    }
    let g = real_gradient(&pt)?;
    let d = g.len() / 2;
    let cap = config.direction_cap.unwrap_or(d).min(d);
    let sup = (0..cap).map(|k| g[k].abs().max(g[d + k].abs())).fold(0.0, f64::max);
    row.crit_sup = Some(sup);
    match kahler_in_class(pt.bundle()) {
        Ok(k) => {
            row.kahler_d_residual = Some(k.d_residual);
            row.kahler_margin = Some(k.margin);
        }
        Err(Error::NotInImage { .. }) => row.flags.push("kahler_hypothesis_failed"),
        Err(e) => return Err(e),
    }
    row.rho = Some(torsion.rho20);
    Ok(row)
}

/// One row per sample, in sample order; rows whose cohomology numbers differ
/// from those at `t = 0`, or whose metric is not Hermitian-symplectic, are flagged.
pub fn family_diagnostics(spec: &FamilySpec, config: &FamilyConfig) -> Result<FamilyTable> {
    let mut rows = Vec::with_capacity(spec.samples.len());
    for t in &spec.samples {
        rows.push(family_row(spec, *t, config)?);
    }
    let zero = rows.iter().position(|r| r.t == C64::new(0.0, 0.0)).expect("validated");
    let (dims0, rho0, sup0) = (rows[zero].dims.clone(), rows[zero].rho.clone(), rows[zero].crit_sup);
    for r in &mut rows {
        if r.dims != dims0 {
            r.flags.insert(0, "dimension_jump");
        }
        if let (Some(a), Some(b)) = (&r.rho, &rho0) {
            if a.len() == b.len() {
                r.rho_diff = Some((a - b).coeff_norm());
            }
        }
        if let (Some(a), Some(b)) = (r.crit_sup, sup0) {
            r.crit_diff = Some((a - b).abs());
        }
    }
    Ok(FamilyTable { rows })
}
