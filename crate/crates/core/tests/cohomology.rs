mod common;

use std::sync::Arc;

use aeppli_core::cohomology::{all_bidegrees, cohomology_dims, Laplacian, OperatorBundle};
use aeppli_core::forms::{Bidegree, C64};
use aeppli_core::linalg::GramSpectral;
use aeppli_core::metric::HermitianStructure;
use aeppli_core::model::builtin;
use common::*;
use nalgebra::DMatrix;

fn iwasawa_bundle(seed: u64) -> OperatorBundle {
    let c = complex_of(builtin::IWASAWA);
    let mut r = rng(seed);
    OperatorBundle::new(Arc::new(constant_metric(&c, &random_constant_h(3, &mut r))))
}

fn spectral_bundle(seed: u64) -> OperatorBundle {
    let c = spectral_torus(2, 1);
    let mut r = rng(seed);
    OperatorBundle::new(Arc::new(random_metric(&c, &mut r, 0.05)))
}

fn stack(a: &DMatrix<C64>, b: &DMatrix<C64>) -> DMatrix<C64> {
    let mut m = DMatrix::zeros(a.nrows() + b.nrows(), a.ncols());
    m.view_mut((0, 0), a.shape()).copy_from(a);
    m.view_mut((a.nrows(), 0), b.shape()).copy_from(b);
    m
}

#[test]
fn flat_torus_laplacians_vanish() {
    let c = complex_of(builtin::FLAT_TORUS);
    let bundle = OperatorBundle::new(flat(&c));
    for bd in all_bidegrees(3) {
        for kind in [Laplacian::Dolbeault, Laplacian::BottChern] {
            let lap = bundle.laplacian(kind, bd).unwrap();
            assert!(lap.matrix.iter().all(|z| z.norm() == 0.0));
        }
    }
    let table = cohomology_dims(&bundle, &all_bidegrees(3)).unwrap();
    assert_eq!(table.get(Bidegree::new(0, 2)).unwrap().h_bott_chern, 3);
    assert_eq!(table.get(Bidegree::new(1, 1)).unwrap().h_aeppli, 9);
    for row in &table.rows {
        let dim = c.dim(row.bidegree);
        assert_eq!((row.h_dolbeault, row.h_bott_chern, row.h_aeppli), (dim, dim, dim));
    }
}

#[test]
fn iwasawa_dolbeault_dims_match_structure_constant_oracle() {
    let bundle = iwasawa_bundle(1);
    let table = cohomology_dims(&bundle, &all_bidegrees(3)).unwrap();
    for q in 0..=3 {
        let want = invariant_dbar_dim_oracle(builtin::IWASAWA, q);
        assert_eq!(table.get(Bidegree::new(0, q)).unwrap().h_dolbeault, want, "(0,{q})");
    }
    assert_eq!(table.get(Bidegree::new(0, 1)).unwrap().h_dolbeault, 2);
    assert_eq!(table.get(Bidegree::new(1, 0)).unwrap().h_dolbeault, 3);
    for bd in all_bidegrees(3) {
        let a = table.get(bd).unwrap().h_bott_chern;
        let b = table.get(bd.conjugate()).unwrap().h_bott_chern;
        assert_eq!(a, b, "h_BC symmetry at {bd}");
    }
}

#[test]
fn dolbeault_kernel_is_joint_kernel() {
    for bundle in [iwasawa_bundle(2), spectral_bundle(3)] {
        let h = bundle.structure().clone();
        let c = h.complex();
        let n = c.n();
        for bd in all_bidegrees(n) {
            let dim = c.dim(bd);
            let dbar = c.delbar_matrix(bd);
            let adj = if bd.q > 0 { h.delbar_adjoint(Bidegree::new(bd.p, bd.q - 1)) } else { DMatrix::zeros(0, dim) };
            let joint = dim - rank_oracle(&stack(&dbar, &adj), 1e-10);
            let lap = bundle.laplacian(Laplacian::Dolbeault, bd).unwrap();
            assert_eq!(lap.spectral.kernel_dim, joint, "{bd}");
        }
    }
}

#[test]
fn laplacians_are_gram_hermitian_psd() {
    for bundle in [iwasawa_bundle(4), spectral_bundle(5)] {
        let h = bundle.structure().clone();
        for bd in all_bidegrees(h.n()) {
            for kind in [Laplacian::Dolbeault, Laplacian::BottChern] {
                let lap = bundle.laplacian(kind, bd).unwrap();
                let g = h.gram(bd);
                let sym = g * &lap.matrix - lap.matrix.adjoint() * g;
                let scale = lap.matrix.norm().max(1.0);
                assert!(sym.norm() <= 1e-10 * scale * g.norm(), "{kind:?} {bd}");
                let lo = lap.spectral.eigenvalues.first().copied().unwrap_or(0.0);
                assert!(lo >= -1e-10 * scale, "{kind:?} {bd}: {lo}");
                let p = &lap.spectral.projector;
                assert!((p * p - p).norm() <= 1e-9 * (1.0 + p.norm()));
                assert!((g * p - p.adjoint() * g).norm() <= 1e-9 * g.norm() * (1.0 + p.norm()));
                let green_on_kernel = &lap.spectral.green * p;
                assert!(green_on_kernel.norm() <= 1e-8 * (1.0 + lap.spectral.green.norm()));
            }
        }
    }
}

#[test]
fn green_examples() {
    let bundle = iwasawa_bundle(6);
    let h = bundle.structure().clone();
    let c = h.complex();
    let mut r = rng(7);
    let bd = Bidegree::new(2, 0);
    for _ in 0..5 {
        let gamma = random_form(c, bd, &mut r);
        let harmonic = bundle.harmonic(Laplacian::BottChern, &gamma).unwrap();
        let g = bundle.green(Laplacian::BottChern, &harmonic).unwrap();
        assert!(g.coeff_norm() <= 1e-10 * gamma.coeff_norm());
        let res = bundle.green_residual(Laplacian::BottChern, &gamma).unwrap();
        assert!(res <= 1e-8 * gamma.coeff_norm(), "residual {res:.2e}");
        // Green operator = minimal-norm solution of E x = γ − F γ.
        let lap = bundle.laplacian(Laplacian::BottChern, bd).unwrap();
        let rhs = (&gamma - &harmonic).into_coeffs();
        let oracle = least_norm_oracle(&lap.matrix, &rhs, h.gram(bd));
        let got = bundle.green(Laplacian::BottChern, &gamma).unwrap();
        assert!((got.coeffs() - &oracle).norm() <= 1e-6 * oracle.norm().max(1e-12));
    }
}

#[test]
fn kernel_free_green_is_inverse() {
    let mut r = rng(8);
    let a = DMatrix::from_fn(6, 6, |_, _| cplx(&mut r, 1.0));
    let e = &a * a.adjoint() + DMatrix::identity(6, 6);
    let g = DMatrix::identity(6, 6);
    let s = GramSpectral::new(&e, &g, 1e-10).unwrap();
    assert_eq!(s.kernel_dim, 0);
    let inv = e.clone().try_inverse().unwrap();
    assert!((&s.green - inv).norm() <= 1e-13 * s.green.norm());
}

#[test]
fn two_space_decomposition() {
    let mut r = rng(9);
    for bundle in [iwasawa_bundle(10), spectral_bundle(11)] {
        let h = bundle.structure().clone();
        let c = h.complex().clone();
        for bd in all_bidegrees(c.n()) {
            let gamma = random_form(&c, bd, &mut r);
            for kind in [Laplacian::Dolbeault, Laplacian::BottChern] {
                let f = bundle.harmonic(kind, &gamma).unwrap();
                let eg = bundle.apply(kind, &bundle.green(kind, &gamma).unwrap()).unwrap();
                let res = (&(&f + &eg) - &gamma).coeff_norm();
                assert!(res <= 1e-8 * gamma.coeff_norm(), "{kind:?} {bd}: {res:.2e}");
                let cross = h.inner(&f, &eg).unwrap().norm();
                assert!(cross <= 1e-8 * gamma.coeff_norm().powi(2));
            }
        }
    }
}

#[test]
fn green_commutes_with_dbar_adjoint() {
    let mut r = rng(12);
    for bundle in [iwasawa_bundle(13), spectral_bundle(14)] {
        let h = bundle.structure().clone();
        let c = h.complex().clone();
        let n = c.n();
        for bd in all_bidegrees(n) {
            if bd.q == 0 {
                continue;
            }
            let below = Bidegree::new(bd.p, bd.q - 1);
            let adj = h.delbar_adjoint(below);
            let v = random_form(&c, bd, &mut r);
            let gv = bundle.green(Laplacian::Dolbeault, &v).unwrap();
            let lhs = &adj * gv.coeffs();
            let star_v = aeppli_core::forms::Form::new(below, &adj * v.coeffs());
            let rhs = bundle.green(Laplacian::Dolbeault, &star_v).unwrap();
            assert!((lhs - rhs.coeffs()).norm() <= 1e-8 * (1.0 + v.coeff_norm()), "{bd}");
        }
    }
}

#[test]
fn bott_chern_laplacian_is_real() {
    let mut r = rng(15);
    for bundle in [iwasawa_bundle(16), spectral_bundle(17)] {
        let h: Arc<HermitianStructure> = bundle.structure().clone();
        let c = h.complex().clone();
        let alg = c.algebra();
        for bd in all_bidegrees(c.n()) {
            let u = random_form(&c, bd, &mut r);
            let lhs = alg.conjugate(&bundle.apply(Laplacian::BottChern, &u).unwrap());
            let rhs = bundle.apply(Laplacian::BottChern, &alg.conjugate(&u)).unwrap();
            assert!((&lhs - &rhs).coeff_norm() <= 1e-9 * (1.0 + lhs.coeff_norm()), "{bd}");
        }
    }
}

#[test]
fn table_csv_has_header_and_rows() {
    let bundle = iwasawa_bundle(18);
    let table = cohomology_dims(&bundle, &[Bidegree::new(0, 1), Bidegree::new(1, 0)]).unwrap();
    let text = table.to_string();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("p,q,h_dbar,h_bc,h_a,gap_dbar,gap_bc"));
    assert!(lines.next().unwrap().starts_with("0,1,2,"));
    assert!(lines.next().unwrap().starts_with("1,0,3,"));
}
