//! Dolbeault and Bott–Chern Laplacians, their Green operators, and cohomology
//! dimensions (Dolbeault, Bott–Chern, Aeppli).

use std::fmt;
use std::sync::{Arc, OnceLock};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::forms::{Bidegree, Form, C64};
use crate::linalg::{rank, GramSpectral, RANK_CUTOFF};
use crate::metric::HermitianStructure;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Laplacian {
    /// `Δ_∂̄ = ∂̄∂̄* + ∂̄*∂̄`
    Dolbeault,
    /// Six-term Bott–Chern Laplacian.
    BottChern,
}

#[derive(Debug)]
pub struct LaplacianData {
    pub matrix: DMatrix<C64>,
    pub spectral: GramSpectral,
}

/// Lazily assembled Laplacians and Green operators of one Hermitian structure.
#[derive(Debug)]
pub struct OperatorBundle {
    structure: Arc<HermitianStructure>,
    rank_cutoff: f64,
    dolbeault: Vec<OnceLock<Result<LaplacianData, String>>>,
    bott_chern: Vec<OnceLock<Result<LaplacianData, String>>>,
}

impl OperatorBundle {
    pub fn new(structure: Arc<HermitianStructure>) -> Self {
        Self::with_cutoff(structure, RANK_CUTOFF)
    }

    pub fn with_cutoff(structure: Arc<HermitianStructure>, rank_cutoff: f64) -> Self {
        let slots = (structure.n() + 1) * (structure.n() + 1);
        Self {
            structure,
            rank_cutoff,
            dolbeault: (0..slots).map(|_| OnceLock::new()).collect(),
            bott_chern: (0..slots).map(|_| OnceLock::new()).collect(),
        }
    }

    pub fn structure(&self) -> &Arc<HermitianStructure> {
        &self.structure
    }

    pub fn rank_cutoff(&self) -> f64 {
        self.rank_cutoff
    }

    fn n(&self) -> usize {
        self.structure.n()
    }

    /// `(∂∂̄)* : Λ^{p+1,q+1} → Λ^{p,q}` with `bd = (p,q)`.
    pub fn ddbar_adjoint(&self, bd: Bidegree) -> DMatrix<C64> {
        let h = &self.structure;
        let target = Bidegree::new(bd.p + 1, bd.q + 1);
        h.adjoint(&h.complex().ddbar_matrix(bd), bd, target)
    }

    /// `∂*∂̄ : Λ^{p,q} → Λ^{p−1,q+1}`, `None` when `p = 0` or `q = n`.
    fn del_star_delbar(&self, bd: Bidegree) -> Option<DMatrix<C64>> {
        let n = self.n();
        if bd.p == 0 || bd.q == n {
            return None;
        }
        let h = &self.structure;
        let b = h.complex().delbar_matrix(bd);
        let ds = h.del_adjoint(Bidegree::new(bd.p - 1, bd.q + 1));
        Some(ds * b)
    }

    fn assemble(&self, kind: Laplacian, bd: Bidegree) -> DMatrix<C64> {
        let n = self.n();
        let h = &self.structure;
        let c = h.complex();
        let dim = c.dim(bd);
        let mut lap = DMatrix::<C64>::zeros(dim, dim);
        match kind {
            Laplacian::Dolbeault => {
                if bd.q < n {
                    let b = c.delbar_matrix(bd);
                    lap += h.delbar_adjoint(bd) * b;
                }
                if bd.q > 0 {
                    let below = Bidegree::new(bd.p, bd.q - 1);
                    lap += c.delbar_matrix(below) * h.delbar_adjoint(below);
                }
            }
            Laplacian::BottChern => {
                if bd.p < n {
                    lap += h.del_adjoint(bd) * c.del_matrix(bd);
                }
                if bd.q < n {
                    lap += h.delbar_adjoint(bd) * c.delbar_matrix(bd);
                }
                if bd.p < n && bd.q < n {
                    lap += self.ddbar_adjoint(bd) * c.ddbar_matrix(bd);
                }
                if bd.p > 0 && bd.q > 0 {
                    let below = Bidegree::new(bd.p - 1, bd.q - 1);
                    lap += c.ddbar_matrix(below) * self.ddbar_adjoint(below);
                }
                if let Some(b) = self.del_star_delbar(bd) {
                    let target = Bidegree::new(bd.p - 1, bd.q + 1);
                    lap += h.adjoint(&b, bd, target) * b;
                }
                if bd.p < n && bd.q > 0 {
                    let src = Bidegree::new(bd.p + 1, bd.q - 1);
                    if let Some(b) = self.del_star_delbar(src) {
                        lap += &b * h.adjoint(&b, src, bd);
                    }
                }
            }
        }
        lap
    }

    pub fn laplacian(&self, kind: Laplacian, bd: Bidegree) -> Result<&LaplacianData> {
        self.structure.complex().algebra().check_bidegree(bd)?;
        let slot = bd.p * (self.n() + 1) + bd.q;
        let cell = match kind {
            Laplacian::Dolbeault => &self.dolbeault[slot],
            Laplacian::BottChern => &self.bott_chern[slot],
        };
        cell.get_or_init(|| {
            let matrix = self.assemble(kind, bd);
            GramSpectral::new(&matrix, self.structure.gram(bd), self.rank_cutoff)
                .map(|spectral| LaplacianData { matrix, spectral })
                .map_err(|e| e.to_string())
        })
        .as_ref()
        .map_err(|e| Error::Contract(e.clone()))
    }

    fn check(&self, gamma: &Form) -> Result<()> {
        self.structure.complex().algebra().check_form(gamma)
    }

    /// `E^{-1} γ`: the Green operator, zero on harmonic forms.
    pub fn green(&self, kind: Laplacian, gamma: &Form) -> Result<Form> {
        self.check(gamma)?;
        let data = self.laplacian(kind, gamma.bidegree())?;
        Ok(Form::new(gamma.bidegree(), data.spectral.apply_green(gamma.coeffs())))
    }

    /// Harmonic projection `F_E(γ)`.
    pub fn harmonic(&self, kind: Laplacian, gamma: &Form) -> Result<Form> {
        self.check(gamma)?;
        let data = self.laplacian(kind, gamma.bidegree())?;
        Ok(Form::new(gamma.bidegree(), data.spectral.apply_projector(gamma.coeffs())))
    }

    /// `E γ`.
    pub fn apply(&self, kind: Laplacian, gamma: &Form) -> Result<Form> {
        self.check(gamma)?;
        let data = self.laplacian(kind, gamma.bidegree())?;
        Ok(Form::new(gamma.bidegree(), &data.matrix * gamma.coeffs()))
    }

    /// `‖E E^{-1}γ − (γ − F_E γ)‖`.
    pub fn green_residual(&self, kind: Laplacian, gamma: &Form) -> Result<f64> {
        let g = self.green(kind, gamma)?;
        let lhs = self.apply(kind, &g)?;
        let rhs = gamma - &self.harmonic(kind, gamma)?;
        Ok((&lhs - &rhs).coeff_norm())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CohomologyRow {
    pub bidegree: Bidegree,
    pub h_dolbeault: usize,
    pub h_bott_chern: usize,
    pub h_aeppli: usize,
    pub gap_dolbeault: f64,
    pub gap_bott_chern: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CohomologyTable {
    pub rows: Vec<CohomologyRow>,
}

impl CohomologyTable {
    pub fn get(&self, bd: Bidegree) -> Option<&CohomologyRow> {
        self.rows.iter().find(|r| r.bidegree == bd)
    }
}

impl fmt::Display for CohomologyTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "p,q,h_dbar,h_bc,h_a,gap_dbar,gap_bc")?;
        for r in &self.rows {
            writeln!(
                f,
                "{},{},{},{},{},{:.6e},{:.6e}",
                r.bidegree.p, r.bidegree.q, r.h_dolbeault, r.h_bott_chern, r.h_aeppli, r.gap_dolbeault, r.gap_bott_chern
            )?;
        }
        Ok(())
    }
}

fn stack_rows(a: &DMatrix<C64>, b: &DMatrix<C64>) -> DMatrix<C64> {
    let mut m = DMatrix::zeros(a.nrows() + b.nrows(), a.ncols().max(b.ncols()));
    m.view_mut((0, 0), a.shape()).copy_from(a);
    m.view_mut((a.nrows(), 0), b.shape()).copy_from(b);
    m
}

fn stack_cols(a: &DMatrix<C64>, b: &DMatrix<C64>) -> DMatrix<C64> {
    let mut m = DMatrix::zeros(a.nrows().max(b.nrows()), a.ncols() + b.ncols());
    m.view_mut((0, 0), a.shape()).copy_from(a);
    m.view_mut((0, a.ncols()), b.shape()).copy_from(b);
    m
}

/// Quotient-rank dimensions `(h_∂̄, h_BC, h_A)` from the differentials alone.
pub fn quotient_dims(bundle: &OperatorBundle, bd: Bidegree) -> (usize, usize, usize) {
    let c = bundle.structure().complex();
    let tol = bundle.rank_cutoff();
    let dim = c.dim(bd);
    let rk = |m: &DMatrix<C64>| rank(m, tol);
    let into = |m: Option<DMatrix<C64>>| m.unwrap_or_else(|| DMatrix::zeros(dim, 0));

    let ker_dbar = dim - rk(&c.delbar_matrix(bd));
    let im_dbar = rk(&into((bd.q > 0).then(|| c.delbar_matrix(Bidegree::new(bd.p, bd.q - 1)))));
    let h_dbar = ker_dbar - im_dbar;

    let ker_both = dim - rk(&stack_rows(&c.del_matrix(bd), &c.delbar_matrix(bd)));
    let im_ddbar = rk(&into((bd.p > 0 && bd.q > 0).then(|| c.ddbar_matrix(Bidegree::new(bd.p - 1, bd.q - 1)))));
    let h_bc = ker_both - im_ddbar;

    let ker_ddbar = dim - rk(&c.ddbar_matrix(bd));
    let from_del = into((bd.p > 0).then(|| c.del_matrix(Bidegree::new(bd.p - 1, bd.q))));
    let from_dbar = into((bd.q > 0).then(|| c.delbar_matrix(Bidegree::new(bd.p, bd.q - 1))));
    let h_a = ker_ddbar - rk(&stack_cols(&from_del, &from_dbar));
    (h_dbar, h_bc, h_a)
}

/// Cohomology dimensions; Laplacian kernels must agree with quotient ranks.
pub fn cohomology_dims(bundle: &OperatorBundle, bidegrees: &[Bidegree]) -> Result<CohomologyTable> {
    let mut rows = Vec::with_capacity(bidegrees.len());
    for &bd in bidegrees {
        let dolb = bundle.laplacian(Laplacian::Dolbeault, bd)?;
        let bc = bundle.laplacian(Laplacian::BottChern, bd)?;
        let (q_dbar, q_bc, h_a) = quotient_dims(bundle, bd);
        if q_dbar != dolb.spectral.kernel_dim {
            return Err(Error::Contract(format!(
                "Dolbeault dimension mismatch at {bd}: Laplacian kernel {} vs quotient {q_dbar}",
                dolb.spectral.kernel_dim
            )));
        }
        if q_bc != bc.spectral.kernel_dim {
            return Err(Error::Contract(format!(
                "Bott-Chern dimension mismatch at {bd}: Laplacian kernel {} vs quotient {q_bc}",
                bc.spectral.kernel_dim
            )));
        }
        rows.push(CohomologyRow {
            bidegree: bd,
            h_dolbeault: q_dbar,
            h_bott_chern: q_bc,
            h_aeppli: h_a,
            gap_dolbeault: dolb.spectral.relative_gap,
            gap_bott_chern: bc.spectral.relative_gap,
        });
    }
    Ok(CohomologyTable { rows })
}

/// All bidegrees `0 ≤ p,q ≤ n`.
pub fn all_bidegrees(n: usize) -> Vec<Bidegree> {
    (0..=n).flat_map(|p| (0..=n).map(move |q| Bidegree::new(p, q))).collect()
}
