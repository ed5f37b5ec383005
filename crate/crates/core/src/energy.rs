//! Gramian-based energy measures: the worst-case target control energy,
//! the minimum target observation energy with its reconstruction gain,
//! and the sampled-measurement estimability condition number.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::numkernel::{expm, pinv, ToleranceConfig};

/// Energies for one system; `None` marks a quantity that is undefined
/// because the corresponding rank condition failed.
#[derive(Clone, Debug)]
pub struct EnergyReport {
    pub e_tc: Option<f64>,
    pub e_to: Option<f64>,
    pub g_matrix: Option<DMatrix<f64>>,
    pub kappa: Option<f64>,
}

fn sym_eigvals(m: &DMatrix<f64>) -> Vec<f64> {
    let sym = (m + m.transpose()) * 0.5;
    let mut v: Vec<f64> = SymmetricEigen::new(sym).eigenvalues.iter().cloned().collect();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    v
}

/// Worst-case energy to drive the target vector to a unit state:
/// the reciprocal of the smallest eigenvalue of `F W_c F'`.
pub fn target_control_energy(
    w_c: &DMatrix<f64>,
    f: &DMatrix<f64>,
    cfg: &ToleranceConfig,
) -> Result<f64> {
    if f.ncols() != w_c.nrows() {
        return Err(Error::Dimension("target_control_energy: F/W_c dims".into()));
    }
    let s = f * w_c * f.transpose();
    let ev = sym_eigvals(&s);
    let lam_min = ev[0];
    let lam_max = *ev.last().unwrap();
    if lam_min <= cfg.rank_rel_tol * lam_max.max(0.0) || lam_min <= 0.0 {
        return Err(Error::Infeasible(
            "target control energy undefined: not output controllable (F W_c F' is singular)"
                .into(),
        ));
    }
    Ok(1.0 / lam_min)
}

/// Minimum output energy contributed by a unit initial target state,
/// together with the reconstruction gain `G = F W_o^+`.
///
/// The primary route evaluates `1 / lambda_max(G F')`; the result is
/// cross-checked against the smallest eigenvalue of the matrix pencil
/// `(W_o, F'F)` restricted to the image of `W_o`.
pub fn target_observation_energy(
    w_o: &DMatrix<f64>,
    f: &DMatrix<f64>,
    cfg: &ToleranceConfig,
) -> Result<(f64, DMatrix<f64>)> {
    if f.ncols() != w_o.nrows() {
        return Err(Error::Dimension("target_observation_energy: F/W_o dims".into()));
    }
    let w_pinv = pinv(w_o, cfg.pinv_rel_tol)?;
    let g = f * &w_pinv;
    let residual = (&g * w_o - f).norm() / f.norm().max(1e-300);
    if residual > 1e-6 {
        return Err(Error::Infeasible(
            "target observation energy undefined: no G with G W_o = F exists \
             (not functionally observable)"
                .into(),
        ));
    }
    let gft = &g * f.transpose();
    let lam_max = *sym_eigvals(&gft).last().unwrap();
    if lam_max <= 0.0 {
        return Err(Error::Numerical("F W_o^+ F' has no positive eigenvalue".into()));
    }
    let e_to = 1.0 / lam_max;

    let pencil = pencil_min_eigenvalue(w_o, f, cfg)?;
    if ((pencil - e_to) / e_to).abs() > 1e-6 {
        return Err(Error::Numerical(format!(
            "pencil cross-check disagrees: {pencil:.12e} vs {e_to:.12e}"
        )));
    }
    Ok((e_to, g))
}

/// Survey variant of [`target_observation_energy`]: evaluates
/// `1 / lambda_max(F W_o^+ F')` directly, without the `G W_o = F`
/// feasibility gate or the pencil cross-check.
///
/// Large stabilized-network Gramians are observable in exact arithmetic
/// but so ill conditioned that the gate always trips; energy surveys
/// over such ensembles need the raw quantity.
pub fn target_observation_energy_ungated(
    w_o: &DMatrix<f64>,
    f: &DMatrix<f64>,
    cfg: &ToleranceConfig,
) -> Result<f64> {
    if f.ncols() != w_o.nrows() {
        return Err(Error::Dimension("target_observation_energy_ungated: F/W_o dims".into()));
    }
    let g = f * pinv(w_o, cfg.pinv_rel_tol)?;
    let lam_max = *sym_eigvals(&(&g * f.transpose())).last().unwrap();
    if !(lam_max > 0.0 && lam_max.is_finite()) {
        return Err(Error::Numerical("F W_o^+ F' has no positive eigenvalue".into()));
    }
    Ok(1.0 / lam_max)
}

/// Smallest eigenvalue of the pencil `(W, F'F)` restricted to `Im(W)`,
/// computed by a Cholesky reduction to a standard symmetric problem.
/// `F'F` is singular for r < n, so the reciprocal problem
/// `F'F v = mu W v` is solved instead and the answer is `1 / mu_max`.
fn pencil_min_eigenvalue(
    w: &DMatrix<f64>,
    f: &DMatrix<f64>,
    cfg: &ToleranceConfig,
) -> Result<f64> {
    let sym = (w + w.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let lam_max = eig.eigenvalues.iter().cloned().fold(0.0_f64, f64::max);
    let cut = cfg.rank_rel_tol * lam_max;
    let keep: Vec<usize> = (0..w.nrows())
        .filter(|&i| eig.eigenvalues[i] > cut)
        .collect();
    if keep.is_empty() {
        return Err(Error::Infeasible("the Gramian is zero".into()));
    }
    let m1 = keep.len();
    let mut u1 = DMatrix::zeros(w.nrows(), m1);
    for (j, &i) in keep.iter().enumerate() {
        u1.set_column(j, &eig.eigenvectors.column(i));
    }
    let a_res = u1.transpose() * w * &u1; // SPD on Im(W)
    let b_res = u1.transpose() * (f.transpose() * f) * &u1;
    let chol = a_res
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Numerical("restricted Gramian is not positive definite".into()))?;
    let l_inv = chol
        .l()
        .try_inverse()
        .ok_or_else(|| Error::Numerical("Cholesky factor is singular".into()))?;
    let std = &l_inv * b_res * l_inv.transpose();
    let mu_max = *sym_eigvals(&std).last().unwrap();
    if mu_max <= 0.0 {
        return Err(Error::Numerical("pencil has no finite positive eigenvalue".into()));
    }
    Ok(1.0 / mu_max)
}

/// Condition number of the sampled reconstruction map, plus the
/// agreement diagnostic against the Gramian route.
#[derive(Clone, Debug)]
pub struct Estimability {
    pub kappa: f64,
    /// `||Phi Phi' - dt F W_o(T)^+ F'|| / ||Phi Phi'||`; tends to 0 as
    /// the sampling time shrinks.
    pub diagnostic: f64,
}

/// Builds the sampled observability map `Psi = [C; C e^{A dt}; ...]`,
/// the target map `Phi = F Psi^+`, and returns the condition number of
/// `Phi`.
pub fn estimability_condition(
    c: &DMatrix<f64>,
    a: &DMatrix<f64>,
    f: &DMatrix<f64>,
    dt: f64,
    t_final: f64,
    cfg: &ToleranceConfig,
) -> Result<Estimability> {
    let n = a.nrows();
    if a.ncols() != n || c.ncols() != n || f.ncols() != n {
        return Err(Error::Dimension("estimability_condition: C/A/F dims".into()));
    }
    if !(dt > 0.0 && t_final >= dt) {
        return Err(Error::Input(format!(
            "require 0 < dt <= T, got dt = {dt}, T = {t_final}"
        )));
    }
    let q = c.nrows();
    let samples = (t_final / dt).floor() as usize + 1;
    let step = expm(a, dt)?;
    let mut psi = DMatrix::zeros(samples * q, n);
    let mut block = c.clone();
    for k in 0..samples {
        psi.view_mut((k * q, 0), (q, n)).copy_from(&block);
        if k + 1 < samples {
            block = &block * &step;
        }
    }
    let psi_pinv = pinv(&psi, cfg.pinv_rel_tol)?;
    // row(F) must lie in row(Psi), otherwise z(0) is not recoverable
    // from these samples
    let proj_residual = (f * &psi_pinv * &psi - f).norm() / f.norm().max(1e-300);
    if proj_residual > 1e-6 {
        return Err(Error::Infeasible(
            "sampled observability map is rank-deficient for this target".into(),
        ));
    }
    let phi = f * psi_pinv;
    let sv = phi.clone().singular_values();
    let mut s: Vec<f64> = sv.iter().cloned().collect();
    s.sort_by(|x, y| y.partial_cmp(x).unwrap());
    let smin = s[f.nrows() - 1];
    if smin <= 0.0 {
        return Err(Error::Numerical("Phi is rank-deficient".into()));
    }
    let kappa = s[0] / smin;

    let phi_phit = &phi * phi.transpose();
    let w_o = crate::gramian::finite_horizon_ctrb_gramian(
        &a.transpose(),
        &c.transpose(),
        t_final,
        64.max((t_final / dt).ceil() as usize / 4),
    )?;
    let reference = f * pinv(&w_o, cfg.pinv_rel_tol)? * f.transpose() * dt;
    let diagnostic = (&phi_phit - reference).norm() / phi_phit.norm().max(1e-300);
    Ok(Estimability { kappa, diagnostic })
}
