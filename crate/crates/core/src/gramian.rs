//! Controllability/observability matrices and Gramians, the Gramian
//! eigenpartition, the output-controllability and functional-observability
//! rank tests, and the weak/strong duality report.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::numkernel::{
    expm, parse_matrix_sections, rank_tol, render_matrix, ToleranceConfig,
};

/// The object of all analyses: `x' = Ax + Bu`, `y = Cx`, `z = Fx`.
/// `B` and `C` may be absent for one-sided (estimation-only or
/// control-only) studies.
#[derive(Clone, Debug)]
pub struct SystemBundle {
    pub a: DMatrix<f64>,
    pub b: Option<DMatrix<f64>>,
    pub c: Option<DMatrix<f64>>,
    pub f: DMatrix<f64>,
}

impl SystemBundle {
    pub fn new(
        a: DMatrix<f64>,
        b: Option<DMatrix<f64>>,
        c: Option<DMatrix<f64>>,
        f: DMatrix<f64>,
        cfg: &ToleranceConfig,
    ) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::Dimension(format!(
                "A must be square, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        if let Some(b) = &b {
            if b.nrows() != n {
                return Err(Error::Dimension(format!(
                    "B has {} rows, expected {n}",
                    b.nrows()
                )));
            }
        }
        if let Some(c) = &c {
            if c.ncols() != n {
                return Err(Error::Dimension(format!(
                    "C has {} columns, expected {n}",
                    c.ncols()
                )));
            }
        }
        if f.ncols() != n {
            return Err(Error::Dimension(format!(
                "F has {} columns, expected {n}",
                f.ncols()
            )));
        }
        if f.nrows() > n {
            return Err(Error::Dimension(format!(
                "F has {} rows but the state dimension is {n}",
                f.nrows()
            )));
        }
        // F must have linearly independent rows
        if rank_tol(&f, cfg)? != f.nrows() {
            return Err(Error::Input(
                "F must have linearly independent rows".into(),
            ));
        }
        Ok(Self { a, b, c, f })
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn r(&self) -> usize {
        self.f.nrows()
    }

    pub fn b_required(&self) -> Result<&DMatrix<f64>> {
        self.b
            .as_ref()
            .ok_or_else(|| Error::Input("this analysis requires a B section".into()))
    }

    pub fn c_required(&self) -> Result<&DMatrix<f64>> {
        self.c
            .as_ref()
            .ok_or_else(|| Error::Input("this analysis requires a C section".into()))
    }

    /// Parse a system file with sections `A:`, `B:`, `C:`, `F:`.
    pub fn parse(text: &str, cfg: &ToleranceConfig) -> Result<Self> {
        let sections = parse_matrix_sections(text)?;
        let mut a = None;
        let mut b = None;
        let mut c = None;
        let mut f = None;
        for (name, m) in sections {
            let slot = match name.as_str() {
                "A" => &mut a,
                "B" => &mut b,
                "C" => &mut c,
                "F" => &mut f,
                other => {
                    return Err(Error::Input(format!(
                        "unknown system section '{other}' (expected A, B, C, F)"
                    )))
                }
            };
            if slot.replace(m).is_some() {
                return Err(Error::Input(format!("duplicate section '{name}'")));
            }
        }
        let a = a.ok_or_else(|| Error::Input("system file is missing section A".into()))?;
        let f = f.ok_or_else(|| Error::Input("system file is missing section F".into()))?;
        Self::new(a, b, c, f, cfg)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str("A:\n");
        out.push_str(&render_matrix(&self.a));
        if let Some(b) = &self.b {
            out.push_str("B:\n");
            out.push_str(&render_matrix(b));
        }
        if let Some(c) = &self.c {
            out.push_str("C:\n");
            out.push_str(&render_matrix(c));
        }
        out.push_str("F:\n");
        out.push_str(&render_matrix(&self.f));
        out
    }
}

/// Krylov stack `[B AB ... A^{n-1}B]` with exactly n blocks.
pub fn ctrb_matrix(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if a.ncols() != n || b.nrows() != n {
        return Err(Error::Dimension(format!(
            "ctrb_matrix: A is {}x{}, B has {} rows",
            a.nrows(),
            a.ncols(),
            b.nrows()
        )));
    }
    let p = b.ncols();
    let mut out = DMatrix::zeros(n, n * p);
    let mut block = b.clone();
    for k in 0..n {
        out.view_mut((0, k * p), (n, p)).copy_from(&block);
        if k + 1 < n {
            block = a * &block;
        }
    }
    Ok(out)
}

/// Observability matrix, defined through the transpose identity
/// `obsv(C, A) = ctrb(A', C')'`.
pub fn obsv_matrix(c: &DMatrix<f64>, a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    Ok(ctrb_matrix(&a.transpose(), &c.transpose())?.transpose())
}

/// Output controllability of `(A, B; F)`: rank(F * ctrb) = rank(F).
pub fn is_output_controllable(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    f: &DMatrix<f64>,
    cfg: &ToleranceConfig,
) -> Result<bool> {
    if f.ncols() != a.nrows() {
        return Err(Error::Dimension(format!(
            "F has {} columns, expected {}",
            f.ncols(),
            a.nrows()
        )));
    }
    let fc = f * ctrb_matrix(a, b)?;
    Ok(rank_tol(&fc, cfg)? == f.nrows())
}

/// Functional observability of `(C, A; F)`: stacking F onto the
/// observability matrix does not increase its rank.
pub fn is_functionally_observable(
    c: &DMatrix<f64>,
    a: &DMatrix<f64>,
    f: &DMatrix<f64>,
    cfg: &ToleranceConfig,
) -> Result<bool> {
    if f.ncols() != a.nrows() {
        return Err(Error::Dimension(format!(
            "F has {} columns, expected {}",
            f.ncols(),
            a.nrows()
        )));
    }
    let o = obsv_matrix(c, a)?;
    let mut stacked = DMatrix::zeros(o.nrows() + f.nrows(), o.ncols());
    stacked.view_mut((0, 0), (o.nrows(), o.ncols())).copy_from(&o);
    stacked
        .view_mut((o.nrows(), 0), (f.nrows(), f.ncols()))
        .copy_from(f);
    Ok(rank_tol(&stacked, cfg)? == rank_tol(&o, cfg)?)
}

/// One Van Loan step: controllability Gramian of (A, B) over `[0, h]`
/// together with `e^{Ah}`.
fn gramian_step(a: &DMatrix<f64>, bbt: &DMatrix<f64>, h: f64) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let n = a.nrows();
    let mut block = DMatrix::zeros(2 * n, 2 * n);
    block.view_mut((0, 0), (n, n)).copy_from(&(-a));
    block.view_mut((0, n), (n, n)).copy_from(bbt);
    block.view_mut((n, n), (n, n)).copy_from(&a.transpose());
    let e = expm(&block, h)?;
    let f22 = e.view((n, n), (n, n)).into_owned(); // e^{A'h}
    let g = e.view((0, n), (n, n)).into_owned();
    let eah = f22.transpose();
    let w = &eah * g;
    // symmetrize: the construction is exact up to roundoff
    Ok(((&w + w.transpose()) * 0.5, eah))
}

/// Controllability Gramian of `(A, B)` over `[0, t1]`, accumulated over
/// `steps` substeps so long horizons on stable systems stay well scaled.
pub fn finite_horizon_ctrb_gramian(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    t1: f64,
    steps: usize,
) -> Result<DMatrix<f64>> {
    if t1 <= 0.0 {
        return Err(Error::Input(format!("horizon must be positive, got {t1}")));
    }
    if steps < 16 {
        return Err(Error::Input(format!("steps must be >= 16, got {steps}")));
    }
    let n = a.nrows();
    if a.ncols() != n || b.nrows() != n {
        return Err(Error::Dimension("finite_horizon_ctrb_gramian: A/B dims".into()));
    }
    let bbt = b * b.transpose();
    let h = t1 / steps as f64;
    let (wh, eah) = gramian_step(a, &bbt, h)?;
    // W(t + h) = e^{Ah} W(t) e^{A'h} + W(h)
    let mut w = wh.clone();
    for _ in 1..steps {
        w = &eah * w * eah.transpose() + &wh;
    }
    Ok((&w + w.transpose()) * 0.5)
}

/// Finite-horizon controllability and observability Gramians sharing one
/// horizon `t1`.
pub fn finite_horizon_gramians(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    c: &DMatrix<f64>,
    t1: f64,
    steps: usize,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let wc = finite_horizon_ctrb_gramian(a, b, t1, steps)?;
    let wo = finite_horizon_ctrb_gramian(&a.transpose(), &c.transpose(), t1, steps)?;
    Ok((wc, wo))
}

fn is_symmetric(m: &DMatrix<f64>, rel: f64) -> bool {
    let scale = m.norm().max(1e-300);
    (m - m.transpose()).norm() <= rel * scale
}

/// Steady-state Gramian: the unique solution W of `AW + WA' + M = 0` for
/// Hurwitz A and symmetric PSD M.
///
/// Symmetric A (the network Laplacian case) is solved through its
/// eigendecomposition; general A falls back to the Kronecker-vectorized
/// linear system, which is only practical for moderate n.
pub fn infinite_horizon_gramian(a: &DMatrix<f64>, m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if a.ncols() != n || m.nrows() != n || m.ncols() != n {
        return Err(Error::Dimension("infinite_horizon_gramian: A/M dims".into()));
    }
    let hurwitz = a
        .clone()
        .complex_eigenvalues()
        .iter()
        .all(|lam| lam.re < 0.0);
    if !hurwitz {
        return Err(Error::Infeasible(
            "infinite-horizon Gramian undefined: A is not Hurwitz".into(),
        ));
    }

    let w = if is_symmetric(a, 1e-12) {
        let eig = SymmetricEigen::new((a + a.transpose()) * 0.5);
        let v = &eig.eigenvectors;
        let solve = |rhs: &DMatrix<f64>| {
            let mt = v.transpose() * rhs * v;
            let mut x = DMatrix::zeros(n, n);
            for i in 0..n {
                for j in 0..n {
                    x[(i, j)] = -mt[(i, j)] / (eig.eigenvalues[i] + eig.eigenvalues[j]);
                }
            }
            v * x * v.transpose()
        };
        let mut w = solve(m);
        // refinement sweeps recover the accuracy lost to the
        // eigendecomposition, which can be several digits on matrices
        // with tightly clustered eigenvalues
        for _ in 0..25 {
            let r = a * &w + &w * a.transpose() + m;
            if r.norm() <= 1e-12 * m.norm().max(1e-300) {
                break;
            }
            w += solve(&r);
        }
        w
    } else {
        // vec(AW + WA') = (I kron A + A kron I) vec(W)
        let id = DMatrix::identity(n, n);
        let k = id.kronecker(a) + a.kronecker(&id);
        let rhs = nalgebra::DVector::from_iterator(n * n, m.iter().map(|&x| -x));
        let sol = k
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::Numerical("Lyapunov system is singular".into()))?;
        DMatrix::from_iterator(n, n, sol.iter().copied())
    };
    let w = (&w + w.transpose()) * 0.5;

    let residual = (a * &w + &w * a.transpose() + m).norm();
    let scale = m.norm().max(1e-300);
    if residual > 1e-8 * scale {
        return Err(Error::Numerical(format!(
            "Lyapunov residual {residual:.3e} exceeds 1e-8 * ||M||"
        )));
    }
    Ok(w)
}

/// Analysis horizon: finite `t1` works for any system; the
/// steady-state variant requires Hurwitz A.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Horizon {
    Finite(f64),
    Infinite,
}

/// Eigenpartition `W = U1 diag(Lambda1) U1'` with `Im(W) = Im(U1)` and
/// `Ker(W) = Im(U2)`.
#[derive(Clone, Debug)]
pub struct GramianSplit {
    pub w: DMatrix<f64>,
    pub u1: DMatrix<f64>,
    pub lambda1: Vec<f64>,
    pub u2: DMatrix<f64>,
    pub horizon: Horizon,
}

pub fn gramian_split(w: &DMatrix<f64>, horizon: Horizon, cfg: &ToleranceConfig) -> Result<GramianSplit> {
    if !is_symmetric(w, 1e-8) {
        return Err(Error::Input("gramian_split requires a symmetric matrix".into()));
    }
    let n = w.nrows();
    let sym = (w + w.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let lam_max = eig.eigenvalues.iter().cloned().fold(0.0_f64, f64::max);
    let cut = cfg.rank_rel_tol * lam_max;
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| eig.eigenvalues[j].partial_cmp(&eig.eigenvalues[i]).unwrap());
    let mut u1_cols = Vec::new();
    let mut u2_cols = Vec::new();
    let mut lambda1 = Vec::new();
    for &i in &idx {
        let lam = eig.eigenvalues[i];
        if lam > cut {
            lambda1.push(lam);
            u1_cols.push(eig.eigenvectors.column(i).into_owned());
        } else {
            u2_cols.push(eig.eigenvectors.column(i).into_owned());
        }
    }
    let u1 = if u1_cols.is_empty() {
        DMatrix::zeros(n, 0)
    } else {
        DMatrix::from_columns(&u1_cols)
    };
    let u2 = if u2_cols.is_empty() {
        DMatrix::zeros(n, 0)
    } else {
        DMatrix::from_columns(&u2_cols)
    };
    Ok(GramianSplit {
        w: w.clone(),
        u1,
        lambda1,
        u2,
        horizon,
    })
}

/// Weak/strong duality summary for the pair `(C, A; F)` and
/// `(A', C'; F)`.
#[derive(Clone, Debug, Serialize)]
pub struct DualityReport {
    pub dim_cf: usize,
    pub dim_of: usize,
    pub gap: usize,
    pub strong: bool,
    pub output_controllable_dual: bool,
    pub functionally_observable: bool,
    pub ortho_defect: f64,
}

/// Orthonormal image basis with the rank cut taken against an external
/// scale instead of the matrix's own largest singular value.
fn orth_basis_scaled(m: &DMatrix<f64>, scale: f64, cfg: &ToleranceConfig) -> DMatrix<f64> {
    if m.ncols() == 0 || m.nrows() == 0 {
        return DMatrix::zeros(m.nrows(), 0);
    }
    let svd = m.clone().svd(true, false);
    let u = svd.u.as_ref().expect("requested U");
    let cut = cfg.rank_rel_tol * scale.max(1e-300);
    let r = svd.singular_values.iter().filter(|&&s| s > cut).count();
    u.columns(0, r).into_owned()
}

/// Largest singular value of `x' y` for orthonormal-column x, y: the
/// cosine of the smallest principal angle between the two subspaces.
fn subspace_overlap(x: &DMatrix<f64>, y: &DMatrix<f64>) -> (f64, Vec<f64>) {
    if x.ncols() == 0 || y.ncols() == 0 {
        return (0.0, Vec::new());
    }
    let cross = x.transpose() * y;
    let sv = cross.singular_values();
    let max = sv.iter().cloned().fold(0.0_f64, f64::max);
    (max, sv.iter().cloned().collect())
}

/// Duality report built from the shared Gramian
/// `W = W_o(C, A) = W_c(A', C')`.
pub fn duality_report(
    c: &DMatrix<f64>,
    a: &DMatrix<f64>,
    f: &DMatrix<f64>,
    horizon: Horizon,
    cfg: &ToleranceConfig,
) -> Result<DualityReport> {
    if f.ncols() != a.nrows() || c.ncols() != a.nrows() {
        return Err(Error::Dimension("duality_report: C/A/F dims".into()));
    }
    let w = match horizon {
        Horizon::Finite(t1) => {
            finite_horizon_ctrb_gramian(&a.transpose(), &c.transpose(), t1, 64)?
        }
        Horizon::Infinite => {
            infinite_horizon_gramian(&a.transpose(), &(c.transpose() * c))?
        }
    };
    let split = gramian_split(&w, horizon, cfg)?;

    let fu1 = f * &split.u1;
    let fu2 = f * &split.u2;
    // rank decisions on F U_i must share one scale (||F||): a nearly-zero
    // F U_2 would otherwise be promoted to full rank by its own tiny
    // leading singular value
    let ofu1 = orth_basis_scaled(&fu1, f.norm(), cfg);
    let ofu2 = orth_basis_scaled(&fu2, f.norm(), cfg);
    let dim_cf = ofu1.ncols();
    let (defect, cross_sv) = subspace_overlap(&ofu2, &ofu1);
    // principal-angle cosines live in [0, 1]; the cut is absolute so that
    // gap == 0 is exactly equivalent to defect <= ortho_tol
    let overlap_rank = cross_sv.iter().filter(|&&s| s > cfg.ortho_tol).count();
    let dim_of = dim_cf - overlap_rank;
    let strong = defect <= cfg.ortho_tol;

    let output_controllable_dual =
        is_output_controllable(&a.transpose(), &c.transpose(), f, cfg)?;
    let functionally_observable = is_functionally_observable(c, a, f, cfg)?;

    Ok(DualityReport {
        dim_cf,
        dim_of,
        gap: dim_cf - dim_of,
        strong,
        output_controllable_dual,
        functionally_observable,
        ortho_defect: defect,
    })
}
