mod common;

use std::sync::Arc;

use aeppli_core::cohomology::OperatorBundle;
use aeppli_core::deform::{
    family_diagnostics, kahler_in_class, min_ddbar_solution, neumann_dbar_solution, FamilyConfig, FamilySpec,
};
use aeppli_core::energy::B10;
use aeppli_core::error::Error;
use aeppli_core::forms::{Bidegree, Form, C64};
use aeppli_core::linalg::nullspace;
use aeppli_core::metric::aeppli_shift;
use aeppli_core::model::{builtin, parse_template};
use common::*;

fn spectral_bundle(seed: u64) -> OperatorBundle {
    let c = spectral_torus(2, 1);
    let mut r = rng(seed);
    OperatorBundle::new(Arc::new(random_metric(&c, &mut r, 0.05)))
}

fn iwasawa_bundle(seed: u64) -> OperatorBundle {
    let c = complex_of(builtin::IWASAWA);
    let mut r = rng(seed);
    OperatorBundle::new(Arc::new(constant_metric(&c, &random_constant_h(3, &mut r))))
}

#[test]
fn min_ddbar_zero_rhs() {
    let b = spectral_bundle(1);
    let z = b.structure().complex().algebra().zero(Bidegree::new(1, 1));
    assert!(min_ddbar_solution(&b, &z).unwrap().solution.is_zero(0.0));
}

#[test]
fn min_ddbar_on_exact_elements() {
    let mut r = rng(2);
    for b in [spectral_bundle(3), iwasawa_bundle(4)] {
        let h = b.structure().clone();
        let c = h.complex().clone();
        for src in [Bidegree::new(0, 0), Bidegree::new(1, 0), Bidegree::new(0, 1)] {
            let w = random_form(&c, src, &mut r);
            let a = c.ddbar_matrix(src);
            let v = Form::new(Bidegree::new(src.p + 1, src.q + 1), &a * w.coeffs());
            if v.coeff_norm() < 1e-8 {
                continue;
            }
            let sol = min_ddbar_solution(&b, &v).unwrap();
            let u = &sol.solution;
            assert!((&a * u.coeffs() - v.coeffs()).norm() <= 1e-8 * (1.0 + v.coeff_norm()));
            assert!(h.norm(u).unwrap() <= h.norm(&w).unwrap() * (1.0 + 1e-10));
            let oracle = least_norm_oracle(&a, v.coeffs(), h.gram(src));
            assert!((u.coeffs() - &oracle).norm() <= 1e-6 * oracle.norm(), "{src}");
            let kernel = nullspace(&a, 1e-10);
            for k in 0..kernel.ncols() {
                let kf = Form::new(src, kernel.column(k).into_owned());
                assert!(h.inner(u, &kf).unwrap().norm() <= 1e-8 * (1.0 + u.coeff_norm()));
            }
        }
    }
}

#[test]
fn min_ddbar_rejects_non_image() {
    let b = iwasawa_bundle(5);
    let c = b.structure().complex().clone();
    // φ¹∧φ̄¹ is ∂∂̄-closed but not ∂∂̄-exact on the invariant complex.
    let v = c.algebra().coordinate_monomial(&[0], &[0]).unwrap();
    match min_ddbar_solution(&b, &v) {
        Err(Error::NotInImage { distance, tolerance, .. }) => assert!(distance > tolerance),
        other => panic!("expected NotInImage, got {other:?}"),
    }
}

#[test]
fn neumann_examples() {
    let mut r = rng(6);
    for b in [spectral_bundle(7), iwasawa_bundle(8)] {
        let h = b.structure().clone();
        let c = h.complex().clone();
        let z = c.algebra().zero(Bidegree::new(0, 2));
        assert!(neumann_dbar_solution(&b, &z).unwrap().solution.solution.is_zero(0.0));
        for src in [Bidegree::new(0, 0), Bidegree::new(0, 1), Bidegree::new(1, 0)] {
            let psi = random_form(&c, src, &mut r);
            let rho = c.apply_delbar(&psi).unwrap();
            if rho.coeff_norm() < 1e-8 {
                continue;
            }
            let sol = neumann_dbar_solution(&b, &rho).unwrap();
            let phi = &sol.solution.solution;
            assert!(sol.solution.residual <= 1e-8 * (1.0 + rho.coeff_norm()));
            assert!(h.norm(phi).unwrap() <= h.norm(&psi).unwrap() * (1.0 + 1e-10));
            let oracle = least_norm_oracle(&c.delbar_matrix(src), rho.coeffs(), h.gram(src));
            assert!((phi.coeffs() - &oracle).norm() <= 1e-6 * oracle.norm(), "{src}");
            assert!(sol.commutation_defect <= 1e-8 * (1.0 + rho.coeff_norm()));
        }
    }
}

#[test]
fn neumann_on_iwasawa_exact_02_form() {
    let b = iwasawa_bundle(9);
    let c = b.structure().complex().clone();
    let alg = c.algebra();
    // ∂̄φ̄³ = −φ̄¹∧φ̄².
    let rho = alg.coordinate_monomial(&[], &[0, 1]).unwrap().scale_real(-1.0);
    let sol = neumann_dbar_solution(&b, &rho).unwrap();
    assert!(sol.solution.residual <= 1e-8);
    let phi = &sol.solution.solution;
    let back = c.apply_delbar(phi).unwrap();
    assert!((&back - &rho).coeff_norm() <= 1e-8);

    let not_exact = alg.coordinate_monomial(&[], &[0, 2]).unwrap();
    assert!(matches!(neumann_dbar_solution(&b, &not_exact), Err(Error::NotInImage { .. })));
}

#[test]
fn neumann_conjugation_consistency() {
    // β for ρ^{0,2} is the conjugate of the minimal ∂-solution for ρ^{2,0}.
    let c = spectral_torus(2, 1);
    let mut r = rng(10);
    let base = flat(&c);
    let u = random_potential(&c, &mut r, 0.01);
    let h = Arc::new(base.shifted(&u).unwrap());
    let b = OperatorBundle::new(h.clone());
    let rep = aeppli_core::torsion::torsion_form(&b).unwrap();
    let beta = neumann_dbar_solution(&b, &rep.rho02).unwrap().solution.solution;
    let oracle = least_norm_oracle(&c.del_matrix(B10), rep.rho20.coeffs(), h.gram(B10));
    let conj = c.algebra().conjugate(&beta);
    assert!((conj.coeffs() - &oracle).norm() <= 1e-6 * oracle.norm());
}

#[test]
fn kahler_in_class_examples() {
    let b = OperatorBundle::new(flat(&spectral_torus(2, 1)));
    let k = kahler_in_class(&b).unwrap();
    assert!(k.u_min.is_zero(0.0));
    assert_eq!(&k.omega_tilde, b.structure().omega());

    let c = spectral_torus(2, 1);
    let mut r = rng(11);
    let v = random_potential(&c, &mut r, 0.01);
    let h = Arc::new(flat(&c).shifted(&v).unwrap());
    let b = OperatorBundle::new(h.clone());
    let k = kahler_in_class(&b).unwrap();
    assert!(k.d_residual <= 1e-8 * (1.0 + h.omega().coeff_norm()));
    assert!(k.aeppli_defect <= 1e-14);
    let shift = aeppli_shift(&c, &k.u_min).unwrap();
    assert!((&(&k.omega_tilde - h.omega()) - &shift).coeff_norm() <= 1e-14);
    assert!(k.is_positive() && k.margin > 0.5);

    match kahler_in_class(&iwasawa_bundle(12)) {
        Err(Error::NotInImage { distance, tolerance, .. }) => assert!(distance > tolerance),
        other => panic!("expected hypothesis failure, got {other:?}"),
    }
}

const N2_FAMILY: &str = "\
kind spectral
n 2
modes axis K 1
potential_mode 1 0 0 0 u 2 := poly(0, 0.05)
potential_mode 0 0 0 1 u 1 := poly(0, 0.03i)
t_samples := 0, 0.5, 0.25, 0.125
";

fn config() -> FamilyConfig {
    FamilyConfig { bidegrees: vec![Bidegree::new(0, 1), Bidegree::new(0, 2)], ..FamilyConfig::default() }
}

#[test]
fn constant_family_has_zero_differences() {
    let text = "kind spectral\nn 2\nmodes axis K 1\npotential_mode 1 0 0 0 u 2 := 0.02\nt_samples := 0, 1, 2\n";
    let spec = FamilySpec::new(parse_template(text).unwrap(), None).unwrap();
    let table = family_diagnostics(&spec, &config()).unwrap();
    for row in &table.rows {
        assert_eq!(row.rho_diff, Some(0.0));
        assert_eq!(row.crit_diff, Some(0.0));
        assert_eq!(row.dims, table.zero_row().dims);
        assert!(!row.flagged());
    }
}

#[test]
fn linear_family_converges_at_first_order() {
    let spec = FamilySpec::new(parse_template(N2_FAMILY).unwrap(), None).unwrap();
    let table = family_diagnostics(&spec, &config()).unwrap();
    let zero = table.zero_row();
    assert_eq!(zero.rho_norm, Some(0.0));
    assert_eq!(zero.kahler_d_residual.map(|r| r <= 1e-12), Some(true));
    let diffs: Vec<f64> = table.rows.iter().skip(1).map(|r| r.rho_diff.unwrap()).collect();
    assert!(diffs.windows(2).all(|w| w[1] < w[0]), "{diffs:?}");
    let order = table.observed_order(|r| r.rho_diff).unwrap();
    assert!((order - 1.0).abs() <= 0.05, "order {order}");
    for row in &table.rows {
        assert!(row.hermitian_symplectic && !row.flagged());
        assert!(row.kahler_margin.unwrap() > 0.0);
    }
    let csv = table.to_csv();
    let mut lines = csv.lines();
    let header = lines.next().unwrap();
    assert!(header.starts_with("t,h_dbar_01,h_bc_01,h_dbar_02,h_bc_02,hermitian_symplectic,rho_norm"));
    let cols = header.split(',').count();
    for line in lines {
        assert_eq!(line.split(',').count(), cols, "{line}");
    }
}

#[test]
fn samples_override_and_validation() {
    let template = parse_template(N2_FAMILY).unwrap();
    let spec = FamilySpec::new(template.clone(), Some(vec![C64::new(0.0, 0.0), C64::new(0.1, 0.0)])).unwrap();
    assert_eq!(spec.samples.len(), 2);
    assert!(matches!(FamilySpec::new(template, Some(vec![C64::new(1.0, 0.0)])), Err(Error::Validation(_))));
}

#[test]
fn jumping_family_is_flagged() {
    let text = "kind invariant\nn 3\nd 3 := poly(0, -1) * e(1,2)\nt_samples := 0, 1\n";
    let spec = FamilySpec::new(parse_template(text).unwrap(), None).unwrap();
    let table = family_diagnostics(&spec, &FamilyConfig::default()).unwrap();
    assert!(!table.rows[0].flagged());
    assert!(table.rows[1].flags.contains(&"dimension_jump"));
    assert!(table.rows[1].rho_norm.is_none());
}
