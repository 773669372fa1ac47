mod common;

use std::f64::consts::PI;

use aeppli_core::cohomology::all_bidegrees;
use aeppli_core::error::Error;
use aeppli_core::forms::{Bidegree, Mode, C64};
use aeppli_core::model::{builtin, parse_model, Model};
use common::*;

#[test]
fn abelian_model_is_valid_with_zero_differentials() {
    let c = complex_of(builtin::FLAT_TORUS);
    for bd in all_bidegrees(3) {
        assert!(c.del_matrix(bd).iter().all(|z| *z == C64::new(0.0, 0.0)), "∂ at {bd}");
        assert!(c.delbar_matrix(bd).iter().all(|z| *z == C64::new(0.0, 0.0)), "∂̄ at {bd}");
    }
}

#[test]
fn iwasawa_generator_images() {
    let c = complex_of(builtin::IWASAWA);
    let alg = c.algebra();
    let phi = |k: usize| alg.coordinate_monomial(&[k], &[]).unwrap();
    let phibar = |k: usize| alg.coordinate_monomial(&[], &[k]).unwrap();
    let want = alg.coordinate_monomial(&[0, 1], &[]).unwrap().scale_real(-1.0);
    assert_eq!(c.apply_del(&phi(2)).unwrap(), want);
    let want_bar = alg.coordinate_monomial(&[], &[0, 1]).unwrap().scale_real(-1.0);
    assert_eq!(c.apply_delbar(&phibar(2)).unwrap(), want_bar);
    for k in 0..3 {
        assert!(c.apply_delbar(&phi(k)).unwrap().is_zero(0.0));
        assert!(c.apply_del(&phibar(k)).unwrap().is_zero(0.0));
        if k < 2 {
            assert!(c.apply_del(&phi(k)).unwrap().is_zero(0.0));
            assert!(c.apply_delbar(&phibar(k)).unwrap().is_zero(0.0));
        }
    }
    let r = c.identity_residuals();
    assert!(r.iter().all(|x| *x <= 1e-12), "{r:?}");
}

#[test]
fn non_integrable_structure_rejected() {
    let text = "kind invariant\nn 3\nd 1 := g(1,2)\n";
    assert!(matches!(parse_model(text), Err(Error::Validation(_))));
}

#[test]
fn d_squared_violation_rejected() {
    // dφ¹ = φ²∧φ̄³, dφ² = φ³∧φ̄¹: d(dφ¹) = φ³∧φ̄¹∧φ̄³ ≠ 0.
    let text = "kind invariant\nn 3\nd 1 := f(2,3)\nd 2 := f(3,1)\n";
    assert!(matches!(parse_model(text), Err(Error::Validation(m)) if m.contains("d²")));
}

#[test]
fn asymmetric_mode_set_rejected() {
    let text = "kind spectral\nn 1\nmode 1 0\n";
    assert!(matches!(parse_model(text), Err(Error::Validation(m)) if m.contains("symmetric")));
}

#[test]
fn syntax_errors_carry_position() {
    match parse_model("kind invariant\nn 3\nd 3 := -1 * q(1,2)\n") {
        Err(Error::Parse { line, column, .. }) => {
            assert_eq!(line, 3);
            assert!(column > 1);
        }
        other => panic!("expected parse error, got {other:?}"),
    }
}

#[test]
fn comments_and_blank_lines() {
    let text = "# header\n\nkind invariant   # trailing\nn 3\n\nd 3 := -1 * e(1,2)\n";
    assert_eq!(parse_model(text).unwrap().model, parse_model(builtin::IWASAWA).unwrap().model);
}

#[test]
fn spectral_scalar_derivatives() {
    let c = spectral_torus(2, 1);
    let alg = c.algebra();
    let n = 2;
    for m in c.modes() {
        let e = alg.monomial(m, 0).unwrap();
        let (del, dbar) = c.d_full(&e).unwrap();
        for j in 0..n {
            let (a, b) = (m.0[j] as f64, m.0[n + j] as f64);
            // e^{2πi m·x}, z_j = x_j + i x_{n+j}, ∂_{z_j} = (∂_{x_j} − i ∂_{x_{n+j}})/2.
            let want_del = C64::new(0.0, PI) * C64::new(a, -b);
            let want_dbar = C64::new(0.0, PI) * C64::new(a, b);
            let mi = alg.mode_index(m).unwrap();
            let got_del = del.coeffs()[alg.index(mi, 1 << j)];
            let got_dbar = dbar.coeffs()[alg.index(mi, 1 << (n + j))];
            assert!((got_del - want_del).norm() <= 1e-14, "{m} ∂ {j}");
            assert!((got_dbar - want_dbar).norm() <= 1e-14, "{m} ∂̄ {j}");
        }
    }
}

#[test]
fn spectral_differentials_are_mode_diagonal() {
    let c = spectral_torus(2, 1);
    let alg = c.algebra();
    for bd in [Bidegree::new(0, 0), Bidegree::new(1, 0), Bidegree::new(1, 1)] {
        let del = c.del_matrix(bd);
        let src = alg.basis(bd);
        let dst = alg.basis(Bidegree::new(bd.p + 1, bd.q));
        for (r, b) in dst.iter().enumerate() {
            for (col, a) in src.iter().enumerate() {
                if a.mode != b.mode {
                    assert_eq!(del[(r, col)], C64::new(0.0, 0.0));
                }
            }
        }
    }
}

#[test]
fn conjugation_intertwines_del_and_delbar() {
    let mut rng = rng(21);
    for c in [complex_of(builtin::IWASAWA), spectral_torus(2, 1)] {
        let alg = c.algebra();
        for bd in all_bidegrees(c.n()) {
            if bd.p == c.n() {
                continue;
            }
            let u = random_form(&c, bd, &mut rng);
            let lhs = alg.conjugate(&c.apply_del(&u).unwrap());
            let rhs = c.apply_delbar(&alg.conjugate(&u)).unwrap();
            assert!((&lhs - &rhs).coeff_norm() <= 1e-12 * (1.0 + lhs.coeff_norm()), "{bd}");
        }
    }
}

#[test]
fn d_full_examples() {
    let c = complex_of(builtin::FLAT_TORUS);
    let h = flat(&c);
    let (a, b) = c.d_full(h.omega()).unwrap();
    assert!(a.is_zero(0.0) && b.is_zero(0.0));

    let iw = structure_of(builtin::IWASAWA);
    let ci = iw.complex();
    let (del, _) = ci.d_full(iw.omega()).unwrap();
    let k = ci
        .algebra()
        .basis(Bidegree::new(2, 1))
        .iter()
        .position(|b| b.holo == [0, 1] && b.anti == [2])
        .unwrap();
    assert!(del.coeffs()[k].norm() > 0.5);

    let mut rng = rng(22);
    let s = spectral_torus(2, 1);
    let u = random_form(&s, Bidegree::new(0, 0), &mut rng);
    let (du, dbu) = s.d_full(&u).unwrap();
    let (ddu, dbdu) = s.d_full(&du).unwrap();
    let (ddbu, dbdbu) = s.d_full(&dbu).unwrap();
    let scale = du.coeff_norm();
    assert!(ddu.coeff_norm() <= 1e-12 * scale);
    assert!(dbdbu.coeff_norm() <= 1e-12 * scale);
    assert!((&dbdu + &ddbu).coeff_norm() <= 1e-12 * scale);
}

#[test]
fn top_degree_d_is_zero() {
    let c = complex_of(builtin::IWASAWA);
    let u = c.algebra().coordinate_monomial(&[0, 1, 2], &[0, 1, 2]).unwrap();
    let (a, b) = c.d_full(&u).unwrap();
    assert!(a.is_zero(0.0) && b.is_zero(0.0));
}

#[test]
fn model_kinds() {
    let f = parse_model(builtin::PERTURBED_SPECTRAL).unwrap();
    let Model::Spectral(s) = &f.model else { panic!() };
    assert_eq!(s.modes.len(), 13);
    assert!(s.modes.contains(&Mode::unit(3)));
    assert_eq!(f.potential.len(), 3);
}
