//! Open-loop minimum-energy target control, target-state reconstruction,
//! the controllability staircase decomposition, the Sigma-set of
//! F-visible eigenpairs, and partial pole placement with setpoint
//! feedforward.

use nalgebra::{Complex, DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};
use crate::gramian::{ctrb_matrix, finite_horizon_ctrb_gramian, is_functionally_observable};
use crate::numkernel::{expm, null_basis, orth_basis, pinv, rank_tol, SeededRng, ToleranceConfig};

type CMatrix = DMatrix<Complex<f64>>;
type CVector = DVector<Complex<f64>>;

/// Orthogonal coordinate change separating controllable from
/// uncontrollable variables: `x_bar = P x` with the controllable block
/// first.
#[derive(Clone, Debug)]
pub struct StaircaseDecomposition {
    pub p: DMatrix<f64>,
    pub m: usize,
    pub a_c: DMatrix<f64>,
    pub a_12: DMatrix<f64>,
    pub a_u: DMatrix<f64>,
    pub b_c: DMatrix<f64>,
    pub f_c: DMatrix<f64>,
    pub f_u: DMatrix<f64>,
}

pub fn staircase_decompose(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    f: &DMatrix<f64>,
    cfg: &ToleranceConfig,
) -> Result<StaircaseDecomposition> {
    let n = a.nrows();
    if a.ncols() != n || b.nrows() != n || f.ncols() != n {
        return Err(Error::Dimension("staircase_decompose: A/B/F dims".into()));
    }
    let ct = ctrb_matrix(a, b)?;
    let m = rank_tol(&ct, cfg)?;
    let p1 = orth_basis(&ct, cfg)?;
    let p2 = null_basis(&ct.transpose(), cfg)?;
    debug_assert_eq!(p1.ncols(), m);
    debug_assert_eq!(p2.ncols(), n - m);
    let mut pt = DMatrix::zeros(n, n);
    pt.view_mut((0, 0), (n, m)).copy_from(&p1);
    pt.view_mut((0, m), (n, n - m)).copy_from(&p2);
    let p = pt.transpose();

    let abar = &p * a * &pt;
    let bbar = &p * b;
    let fbar = f * &pt;
    // the lower-left block is zero because the controllable subspace is
    // A-invariant; drop the roundoff
    let a_c = abar.view((0, 0), (m, m)).into_owned();
    let a_12 = abar.view((0, m), (m, n - m)).into_owned();
    let a_u = abar.view((m, m), (n - m, n - m)).into_owned();
    let b_c = bbar.view((0, 0), (m, b.ncols())).into_owned();
    let f_c = fbar.view((0, 0), (f.nrows(), m)).into_owned();
    let f_u = fbar.view((0, m), (f.nrows(), n - m)).into_owned();
    Ok(StaircaseDecomposition {
        p,
        m,
        a_c,
        a_12,
        a_u,
        b_c,
        f_c,
        f_u,
    })
}

/// One eigenpair of the Sigma-set: an eigenvalue of A together with a
/// left eigenvector whose projection onto row(F) is nonzero.
#[derive(Clone, Debug)]
pub struct SigmaEntry {
    pub eigenvalue: Complex<f64>,
    pub left_eigenvector: CVector,
}

#[derive(Clone, Debug)]
pub struct SigmaSet {
    pub entries: Vec<SigmaEntry>,
}

impl SigmaSet {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn eigenvalues(&self) -> Vec<Complex<f64>> {
        self.entries.iter().map(|e| e.eigenvalue).collect()
    }
}

fn complex_null_space(m: &CMatrix, rel_tol: f64) -> CMatrix {
    let n = m.ncols();
    let svd = m.clone().svd(false, true);
    let v_t = svd.v_t.as_ref().expect("requested V^T");
    let smax = svd.singular_values.max();
    let cut = if smax > 0.0 { rel_tol * smax } else { f64::MAX };
    let mut cols: Vec<CVector> = Vec::new();
    for (i, &s) in svd.singular_values.iter().enumerate() {
        if s <= cut {
            cols.push(v_t.row(i).adjoint());
        }
    }
    if cols.is_empty() {
        CMatrix::zeros(n, 0)
    } else {
        CMatrix::from_columns(&cols)
    }
}

fn to_complex(m: &DMatrix<f64>) -> CMatrix {
    m.map(|x| Complex::new(x, 0.0))
}

/// Cluster eigenvalues into distinct values with multiplicities.
fn cluster_eigenvalues(eigs: &[Complex<f64>], tol: f64) -> Vec<(Complex<f64>, usize)> {
    let mut clusters: Vec<(Complex<f64>, usize)> = Vec::new();
    for &lam in eigs {
        match clusters.iter_mut().find(|(c, _)| (c - lam).norm() <= tol) {
            Some((_, count)) => *count += 1,
            None => clusters.push((lam, 1)),
        }
    }
    clusters
}

/// The set of eigenpairs of A (left eigenvectors) whose projection onto
/// row(F) is nonzero; exactly these closed-loop poles are assignable by
/// static feedback when the dual triple is functionally observable.
pub fn sigma_set(a: &DMatrix<f64>, f: &DMatrix<f64>, cfg: &ToleranceConfig) -> Result<SigmaSet> {
    let n = a.nrows();
    if a.ncols() != n || f.ncols() != n {
        return Err(Error::Dimension("sigma_set: A/F dims".into()));
    }
    if rank_tol(f, cfg)? != f.nrows() {
        return Err(Error::Input("sigma_set requires F with independent rows".into()));
    }
    let fft = f * f.transpose();
    let fft_inv = fft
        .try_inverse()
        .ok_or_else(|| Error::Numerical("F F' is singular".into()))?;
    let q = f.transpose() * fft_inv * f;
    let qc = to_complex(&q);

    let scale = a.norm().max(1.0);
    let eigs: Vec<Complex<f64>> = a.clone().complex_eigenvalues().iter().cloned().collect();
    let clusters = cluster_eigenvalues(&eigs, 1e-6 * scale);

    let at = to_complex(&a.transpose());
    let id = CMatrix::identity(n, n);
    let mut entries = Vec::new();
    for (lam, _) in clusters {
        // geometric eigenspace of the transpose = left eigenvectors
        let basis = complex_null_space(&(&at - &id * lam), 1e-9);
        if basis.ncols() == 0 {
            return Err(Error::Numerical(format!(
                "no eigenvector found for eigenvalue {lam}"
            )));
        }
        let projected = &qc * &basis;
        for idx in greedy_pivot_columns(&projected, cfg.ortho_tol) {
            entries.push(SigmaEntry {
                eigenvalue: lam,
                left_eigenvector: basis.column(idx).into_owned(),
            });
        }
    }
    // conjugate pairs adjacent, then by real part
    entries.sort_by(|x, y| {
        (x.eigenvalue.re, x.eigenvalue.im.abs(), x.eigenvalue.im)
            .partial_cmp(&(y.eigenvalue.re, y.eigenvalue.im.abs(), y.eigenvalue.im))
            .unwrap()
    });
    Ok(SigmaSet { entries })
}

/// Column-pivoted Gram-Schmidt selection: indices of a maximal set of
/// columns that stay linearly independent, largest norm first.
fn greedy_pivot_columns(m: &CMatrix, tol: f64) -> Vec<usize> {
    let mut residual: Vec<CVector> = (0..m.ncols()).map(|j| m.column(j).into_owned()).collect();
    let mut available: Vec<usize> = (0..m.ncols()).collect();
    let mut picked = Vec::new();
    loop {
        let best = available
            .iter()
            .cloned()
            .max_by(|&i, &j| residual[i].norm().partial_cmp(&residual[j].norm()).unwrap());
        let Some(j) = best else { break };
        let norm = residual[j].norm();
        if norm <= tol {
            break;
        }
        let dir = residual[j].map(|x| x / Complex::new(norm, 0.0));
        picked.push(j);
        available.retain(|&i| i != j);
        for &i in &available {
            let coeff = dir.dotc(&residual[i]);
            residual[i] = &residual[i] - &dir * coeff;
        }
    }
    picked.sort_unstable();
    picked
}

/// Static feedback design: gain, requested poles, and the full achieved
/// closed-loop spectrum.
#[derive(Clone, Debug)]
pub struct FeedbackDesign {
    pub k: DMatrix<f64>,
    pub placed: Vec<Complex<f64>>,
    pub achieved_spectrum: Vec<Complex<f64>>,
    pub feedforward_r: Option<DVector<f64>>,
}

fn is_conjugate_closed(poles: &[Complex<f64>], tol: f64) -> bool {
    poles.iter().all(|lam| {
        lam.im.abs() <= tol
            || poles
                .iter()
                .any(|other| (other - lam.conj()).norm() <= tol)
    })
}

/// Ackermann's formula for single-input placement. The characteristic
/// polynomial is accumulated from real linear/quadratic factors so the
/// gain stays real for conjugate-closed pole sets.
fn ackermann(a: &DMatrix<f64>, b: &DVector<f64>, poles: &[Complex<f64>]) -> Result<DVector<f64>> {
    let m = a.nrows();
    assert_eq!(poles.len(), m);
    let mut phi: DMatrix<f64> = DMatrix::identity(m, m);
    let mut remaining: Vec<Complex<f64>> = poles.to_vec();
    while let Some(lam) = remaining.pop() {
        if lam.im.abs() <= 1e-12 {
            phi = &phi * (a - DMatrix::identity(m, m) * lam.re);
        } else {
            let pos = remaining
                .iter()
                .position(|x| (x - lam.conj()).norm() <= 1e-9 * (1.0 + lam.norm()))
                .ok_or_else(|| Error::Input("poles must be closed under conjugation".into()))?;
            remaining.remove(pos);
            let quad = a * a - a * (2.0 * lam.re) + DMatrix::identity(m, m) * lam.norm_sqr();
            phi = &phi * quad;
        }
    }
    let ct = ctrb_matrix(a, &DMatrix::from_column_slice(m, 1, b.as_slice()))?;
    let lu = ct.transpose().lu();
    let mut e_m = DVector::zeros(m);
    e_m[m - 1] = 1.0;
    let x = lu
        .solve(&e_m)
        .ok_or_else(|| Error::Numerical("single-input pair is not controllable".into()))?;
    Ok(phi.transpose() * x)
}

fn spectrum(m: &DMatrix<f64>) -> Vec<Complex<f64>> {
    let mut eigs: Vec<Complex<f64>> = m.clone().complex_eigenvalues().iter().cloned().collect();
    eigs.sort_by(|x, y| (x.re, x.im).partial_cmp(&(y.re, y.im)).unwrap());
    eigs
}

/// Greedy nearest matching between two equally sized multisets of
/// complex values; returns the largest pair distance.
pub fn spectrum_match_error(achieved: &[Complex<f64>], target: &[Complex<f64>]) -> f64 {
    let mut pool: Vec<Complex<f64>> = achieved.to_vec();
    let mut worst = 0.0_f64;
    for t in target {
        if pool.is_empty() {
            return f64::INFINITY;
        }
        let (idx, dist) = pool
            .iter()
            .enumerate()
            .map(|(i, x)| (i, (x - t).norm()))
            .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
            .unwrap();
        worst = worst.max(dist);
        pool.remove(idx);
    }
    worst
}

/// Place all poles of a controllable pair. Single-input uses Ackermann
/// directly; multi-input reduces to single input through a random
/// cyclicity-inducing prefeedback, retried until the achieved spectrum
/// verifies.
fn place_all(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    poles: &[Complex<f64>],
    tol: f64,
) -> Result<DMatrix<f64>> {
    let m = a.nrows();
    let p = b.ncols();
    assert_eq!(poles.len(), m);
    if m == 0 {
        return Ok(DMatrix::zeros(p, 0));
    }
    if p == 1 {
        let k = ackermann(a, &b.column(0).into_owned(), poles)?;
        let kmat = DMatrix::from_row_slice(1, m, k.as_slice());
        let err = spectrum_match_error(&spectrum(&(a - b * &kmat)), poles);
        if err > tol {
            return Err(Error::Numerical(format!(
                "pole placement verification failed (error {err:.3e})"
            )));
        }
        return Ok(kmat);
    }

    let mut rng = SeededRng::new(0x706c6163);
    let mut best: Option<(f64, DMatrix<f64>)> = None;
    for attempt in 0..32 {
        let k0: DMatrix<f64> = if attempt == 0 {
            DMatrix::zeros(p, m)
        } else {
            DMatrix::from_fn(p, m, |_, _| rng.rng().gen_range(-0.5..0.5))
        };
        let g = DVector::from_fn(p, |i, _| {
            if attempt == 0 {
                if i == 0 {
                    1.0
                } else {
                    0.0
                }
            } else {
                rng.rng().gen_range(-1.0..1.0)
            }
        });
        let a0 = a - b * &k0;
        let b1 = b * &g;
        let Ok(k1) = ackermann(&a0, &b1, poles) else {
            continue;
        };
        let k = &k0 + &g * DMatrix::from_row_slice(1, m, k1.as_slice());
        let err = spectrum_match_error(&spectrum(&(a - b * &k)), poles);
        if err <= tol {
            return Ok(k);
        }
        if best.as_ref().map_or(true, |(e, _)| err < *e) {
            best = Some((err, k));
        }
    }
    match best {
        Some((err, _)) => Err(Error::Numerical(format!(
            "pole placement did not converge (best error {err:.3e})"
        ))),
        None => Err(Error::Numerical("pole placement failed on every attempt".into())),
    }
}

/// Partial pole placement (target control via static feedback): places
/// the requested values on the Sigma-set and leaves every other
/// controllable pole at its open-loop location when stable.
pub fn place_target_poles(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    f: &DMatrix<f64>,
    desired: &[Complex<f64>],
    cfg: &ToleranceConfig,
) -> Result<FeedbackDesign> {
    let n = a.nrows();
    let scale = a.norm().max(1.0);
    if !is_conjugate_closed(desired, 1e-9 * scale) {
        return Err(Error::Input(
            "desired poles must be closed under conjugation".into(),
        ));
    }
    if !is_functionally_observable(&b.transpose(), &a.transpose(), f, cfg)? {
        return Err(Error::Infeasible(
            "target poles not assignable: the dual triple (B', A'; F) fails the \
             functional-observability rank test"
                .into(),
        ));
    }
    let sigma = sigma_set(a, f, cfg)?;
    if desired.len() != sigma.len() {
        return Err(Error::Input(format!(
            "expected {} desired poles (the size of the Sigma-set), got {}",
            sigma.len(),
            desired.len()
        )));
    }
    let st = staircase_decompose(a, b, f, cfg)?;

    // controllable open-loop poles not governed by Sigma keep their
    // location when stable, else move to -1-index
    let mut leftovers = spectrum(&st.a_c);
    for lam in sigma.eigenvalues() {
        if let Some((idx, _)) = leftovers
            .iter()
            .enumerate()
            .map(|(i, x)| (i, (x - lam).norm()))
            .min_by(|x, y| x.1.partial_cmp(&y.1).unwrap())
        {
            leftovers.remove(idx);
        }
    }
    let mut targets: Vec<Complex<f64>> = desired.to_vec();
    for (i, lam) in leftovers.iter().enumerate() {
        if lam.re < 0.0 {
            targets.push(*lam);
        } else {
            targets.push(Complex::new(-1.0 - i as f64, 0.0));
        }
    }

    let k_c = place_all(&st.a_c, &st.b_c, &targets, 1e-6 * scale)?;
    // K = [K_c 0] P; the uncontrollable columns stay zero
    let mut kbar = DMatrix::zeros(b.ncols(), n);
    kbar.view_mut((0, 0), (b.ncols(), st.m)).copy_from(&k_c);
    let k = kbar * &st.p;

    let achieved = spectrum(&(a - b * &k));
    let err = spectrum_match_error(&achieved, desired);
    if err > 1e-6 * scale {
        return Err(Error::Numerical(format!(
            "achieved spectrum misses a desired pole by {err:.3e}"
        )));
    }
    Ok(FeedbackDesign {
        k,
        placed: desired.to_vec(),
        achieved_spectrum: achieved,
        feedforward_r: None,
    })
}

/// Minimum-energy open-loop control steering `z` from 0 to `z_star` over
/// `[0, t1]`.
#[derive(Clone, Debug)]
pub struct MinEnergyControl {
    a_t: DMatrix<f64>,
    b_t: DMatrix<f64>,
    eta: DVector<f64>,
    pub t1: f64,
    /// Delivered energy `z*' (F W_c F')^{-1} z*`.
    pub energy: f64,
}

impl MinEnergyControl {
    /// Evaluate `u(t) = B' e^{A'(t1-t)} F' (F W_c F')^{-1} z*`.
    pub fn input(&self, t: f64) -> DVector<f64> {
        let e = expm(&self.a_t, self.t1 - t).expect("A was validated at construction");
        &self.b_t * (e * &self.eta)
    }
}

pub fn min_energy_control(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    f: &DMatrix<f64>,
    z_star: &DVector<f64>,
    t1: f64,
    cfg: &ToleranceConfig,
) -> Result<MinEnergyControl> {
    let n = a.nrows();
    if b.nrows() != n || f.ncols() != n || z_star.len() != f.nrows() {
        return Err(Error::Dimension("min_energy_control: dims".into()));
    }
    let w_c = finite_horizon_ctrb_gramian(a, b, t1, 64)?;
    let s = f * &w_c * f.transpose();
    let ev = nalgebra::SymmetricEigen::new((&s + s.transpose()) * 0.5);
    let lam_min = ev.eigenvalues.min();
    let lam_max = ev.eigenvalues.max();
    if lam_min <= cfg.rank_rel_tol * lam_max.max(0.0) || lam_min <= 0.0 {
        return Err(Error::Infeasible(
            "not output controllable at this horizon: F W_c F' is singular".into(),
        ));
    }
    let s_inv_z = s
        .lu()
        .solve(z_star)
        .ok_or_else(|| Error::Numerical("F W_c F' solve failed".into()))?;
    let energy = z_star.dot(&s_inv_z);
    Ok(MinEnergyControl {
        a_t: a.transpose(),
        b_t: b.transpose(),
        eta: f.transpose() * s_inv_z,
        t1,
        energy,
    })
}

/// Input/output record over `[0, t1]`, sampled on a uniform grid of
/// spacing `dt` (both endpoints included).
#[derive(Clone, Debug)]
pub struct MeasurementRecord {
    pub t1: f64,
    pub dt: f64,
    pub b: DMatrix<f64>,
    pub u: Vec<DVector<f64>>,
    pub y: Vec<DVector<f64>>,
}

#[derive(Clone, Debug)]
pub struct Reconstruction {
    pub z0: DVector<f64>,
    /// Set when the record's grid looks too coarse for the requested
    /// quadrature accuracy.
    pub coarse_warning: bool,
}

/// Reconstruct the initial target state `z(0)` from an input/output
/// record by quadrature of the Gramian reconstruction identity.
pub fn reconstruct_target(
    c: &DMatrix<f64>,
    a: &DMatrix<f64>,
    f: &DMatrix<f64>,
    record: &MeasurementRecord,
    cfg: &ToleranceConfig,
) -> Result<Reconstruction> {
    let n = a.nrows();
    if c.ncols() != n || f.ncols() != n || record.b.nrows() != n {
        return Err(Error::Dimension("reconstruct_target: dims".into()));
    }
    if !(record.dt > 0.0 && record.t1 > 0.0) {
        return Err(Error::Input("record horizon and spacing must be positive".into()));
    }
    let steps = (record.t1 / record.dt).round() as usize;
    if steps == 0
        || record.u.len() != steps + 1
        || record.y.len() != steps + 1
        || ((steps as f64) * record.dt - record.t1).abs() > 1e-9 * record.t1
    {
        return Err(Error::Input(
            "record samples must cover [0, t1] on a uniform grid".into(),
        ));
    }
    if !is_functionally_observable(c, a, f, cfg)? {
        return Err(Error::Infeasible(
            "reconstruction undefined: (C, A; F) is not functionally observable".into(),
        ));
    }
    let dt = record.dt;
    let e_neg = expm(a, -dt)?;
    let e_pos_t = expm(&a.transpose(), dt)?;

    // h(t) = y(t) - C int_0^t e^{-A tau} B u(tau) dtau, accumulated by
    // the trapezoid rule along the record grid; the outer integral
    // int e^{A' t} C' h(t) dt is accumulated the same way.
    let mut m_neg = DMatrix::identity(n, n); // e^{-A k dt}
    let mut m_pos_t = DMatrix::identity(n, n); // e^{A' k dt}
    let mut inner = DVector::zeros(n);
    let mut acc = DVector::zeros(n);
    let mut prev_inner_term = &m_neg * &record.b * &record.u[0];
    let h0 = &record.y[0] - c * &inner;
    let mut prev_outer_term = &m_pos_t * c.transpose() * h0;
    for k in 1..=steps {
        m_neg = &m_neg * &e_neg;
        m_pos_t = &m_pos_t * &e_pos_t;
        let inner_term = &m_neg * &record.b * &record.u[k];
        inner += (&prev_inner_term + &inner_term) * (dt * 0.5);
        prev_inner_term = inner_term;
        // h(t) = C e^{At} x(0) = y(t) - C e^{At} int_0^t e^{-A tau} B u dtau
        let h = &record.y[k] - c * (m_pos_t.transpose() * &inner);
        let outer_term = &m_pos_t * c.transpose() * h;
        acc += (&prev_outer_term + &outer_term) * (dt * 0.5);
        prev_outer_term = outer_term;
    }

    let w_o = finite_horizon_ctrb_gramian(
        &a.transpose(),
        &c.transpose(),
        record.t1,
        steps.max(64),
    )?;
    let g = f * pinv(&w_o, cfg.pinv_rel_tol)?;
    let residual = (&g * &w_o - f).norm() / f.norm().max(1e-300);
    if residual > 1e-6 {
        return Err(Error::Infeasible(
            "no reconstruction gain G with G W_o = F exists".into(),
        ));
    }
    let coarse_warning = dt * a.norm() > 0.1;
    Ok(Reconstruction {
        z0: g * acc,
        coarse_warning,
    })
}

/// Constant reference solving `F (BK - A)^{-1} B r = z_star`
/// (least-squares when there are more inputs than targets).
pub fn setpoint_feedforward(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    k: &DMatrix<f64>,
    f: &DMatrix<f64>,
    z_star: &DVector<f64>,
) -> Result<DVector<f64>> {
    let n = a.nrows();
    if b.nrows() != n || k.ncols() != n || f.ncols() != n || z_star.len() != f.nrows() {
        return Err(Error::Dimension("setpoint_feedforward: dims".into()));
    }
    if b.ncols() < f.nrows() {
        return Err(Error::Input(
            "setpoint feedforward needs at least as many inputs as targets".into(),
        ));
    }
    let bk_minus_a = b * k - a;
    let inv = bk_minus_a
        .try_inverse()
        .ok_or_else(|| Error::Infeasible("closed-loop steady-state map is singular".into()))?;
    let m = f * &inv * b; // r x p
    let r = if m.nrows() == m.ncols() {
        m.clone()
            .lu()
            .solve(z_star)
            .ok_or_else(|| Error::Infeasible("steady-state map is singular".into()))?
    } else {
        pinv(&m, 1e-12)? * z_star
    };
    let x_ss = &inv * b * &r;
    let err = (f * x_ss - z_star).norm();
    if err > 1e-4 * (1.0 + z_star.norm()) {
        return Err(Error::Infeasible(format!(
            "setpoint is not reachable in steady state (residual {err:.3e})"
        )));
    }
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkernel::integrate_lti;
    use crate::testutil::{example_a, example_f};
    use approx::assert_relative_eq;

    fn cfg() -> ToleranceConfig {
        ToleranceConfig::default()
    }

    fn design_a() -> DMatrix<f64> {
        example_a(-1.0, -3.0, -3.0)
    }

    fn e1() -> DMatrix<f64> {
        DMatrix::from_column_slice(5, 1, &[1.0, 0.0, 0.0, 0.0, 0.0])
    }

    #[test]
    fn staircase_of_controllable_pair_is_trivial() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -2.0, -3.0]);
        let b = DMatrix::from_column_slice(2, 1, &[0.0, 1.0]);
        let f = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
        let st = staircase_decompose(&a, &b, &f, &cfg()).unwrap();
        assert_eq!(st.m, 2);
        assert_eq!(st.f_u.ncols(), 0);
        assert_eq!(st.a_u.nrows(), 0);
    }

    #[test]
    fn staircase_of_design_example() {
        let st = staircase_decompose(&design_a(), &e1(), &example_f(), &cfg()).unwrap();
        assert_eq!(st.m, 3);
        // the uncontrollable block carries the two -3 modes
        let eigs = spectrum(&st.a_u);
        assert_eq!(eigs.len(), 2);
        for lam in eigs {
            assert_relative_eq!(lam.re, -3.0, epsilon = 1e-8);
            assert_relative_eq!(lam.im, 0.0, epsilon = 1e-8);
        }
        // F is supported on the controllable block
        assert!(st.f_u.norm() < 1e-10);
        // coordinate change is orthogonal
        let n = st.p.nrows();
        assert_relative_eq!(
            &st.p * st.p.transpose(),
            DMatrix::identity(n, n),
            epsilon = 1e-10
        );
    }

    #[test]
    fn sigma_set_of_design_example() {
        let sigma = sigma_set(&design_a(), &example_f(), &cfg()).unwrap();
        let eigs = sigma.eigenvalues();
        assert_eq!(eigs.len(), 3);
        let expected = [
            Complex::new(-2.0, 0.0),
            Complex::new(-0.5, 0.8660254037844386),
            Complex::new(-0.5, -0.8660254037844386),
        ];
        for want in expected {
            assert!(
                eigs.iter().any(|lam| (lam - want).norm() < 1e-6),
                "missing eigenvalue {want}"
            );
        }
        // the uncontrollable -3 modes are invisible to F
        assert!(eigs.iter().all(|lam| (lam.re + 3.0).abs() > 0.5));
    }

    #[test]
    fn sigma_set_full_rank_f_is_whole_spectrum() {
        let a = DMatrix::from_row_slice(2, 2, &[-1.0, 1.0, 0.0, -2.0]);
        let sigma = sigma_set(&a, &DMatrix::identity(2, 2), &cfg()).unwrap();
        assert_eq!(sigma.len(), 2);
    }

    #[test]
    fn place_design_example_poles() {
        let desired = [
            Complex::new(-4.0, 0.0),
            Complex::new(-5.0, 0.0),
            Complex::new(-6.0, 0.0),
        ];
        let design = place_target_poles(&design_a(), &e1(), &example_f(), &desired, &cfg()).unwrap();
        let expected = [
            Complex::new(-4.0, 0.0),
            Complex::new(-5.0, 0.0),
            Complex::new(-6.0, 0.0),
            Complex::new(-3.0, 0.0),
            Complex::new(-3.0, 0.0),
        ];
        assert!(spectrum_match_error(&design.achieved_spectrum, &expected) < 1e-6);
    }

    #[test]
    fn known_gain_reproduces_spectrum() {
        let k = DMatrix::from_row_slice(1, 5, &[12.0, -47.0, 0.0, 0.0, 59.0]);
        let eigs = spectrum(&(design_a() - e1() * &k));
        let expected = [
            Complex::new(-6.0, 0.0),
            Complex::new(-5.0, 0.0),
            Complex::new(-4.0, 0.0),
            Complex::new(-3.0, 0.0),
            Complex::new(-3.0, 0.0),
        ];
        assert!(spectrum_match_error(&eigs, &expected) < 1e-6);
    }

    #[test]
    fn feedforward_matches_known_reference() {
        let k = DMatrix::from_row_slice(1, 5, &[12.0, -47.0, 0.0, 0.0, 59.0]);
        let z_star = DVector::from_element(1, 1.0);
        let r = setpoint_feedforward(&design_a(), &e1(), &k, &example_f(), &z_star).unwrap();
        assert_relative_eq!(r[0], -120.0, epsilon = 1e-6);
    }

    #[test]
    fn placement_rejects_infeasible_triple() {
        // node 3 has no incoming path from node 1, so the target z = x3
        // is invisible to the input: the dual triple fails the rank test
        let f = DMatrix::from_row_slice(1, 5, &[0.0, 0.0, 1.0, 0.0, 0.0]);
        let desired = [Complex::new(-4.0, 0.0)];
        let out = place_target_poles(&design_a(), &e1(), &f, &desired, &cfg());
        assert!(matches!(out, Err(Error::Infeasible(_))));
    }

    #[test]
    fn placement_rejects_unpaired_complex_poles() {
        let desired = [
            Complex::new(-4.0, 1.0),
            Complex::new(-5.0, 0.0),
            Complex::new(-6.0, 0.0),
        ];
        let out = place_target_poles(&design_a(), &e1(), &example_f(), &desired, &cfg());
        assert!(matches!(out, Err(Error::Input(_))));
    }

    #[test]
    fn multi_input_placement() {
        let a = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 1.0, -2.0, 0.5]);
        let b = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
        let desired = [
            Complex::new(-1.0, 0.0),
            Complex::new(-2.0, 1.0),
            Complex::new(-2.0, -1.0),
        ];
        let design = place_target_poles(&a, &b, &DMatrix::identity(3, 3), &desired, &cfg()).unwrap();
        assert!(spectrum_match_error(&design.achieved_spectrum, &desired) < 1e-6);
    }

    #[test]
    fn min_energy_control_reaches_target() {
        let a = design_a();
        let b = e1();
        let f = example_f();
        let z_star = DVector::from_element(1, 1.0);
        let t1 = 2.0;
        let ctl = min_energy_control(&a, &b, &f, &z_star, t1, &cfg()).unwrap();
        let x0 = DVector::zeros(5);
        let traj = integrate_lti(&a, &b, |t| ctl.input(t), &x0, t1, 1e-3).unwrap();
        let z_end = (&f * traj.final_state())[0];
        assert_relative_eq!(z_end, 1.0, epsilon = 1e-5);
        assert!(ctl.energy > 0.0);
    }

    #[test]
    fn reconstruct_scalar_initial_state() {
        // x' = -x + u with u = 1, y = x: z(0) = x(0) recoverable
        let a = DMatrix::from_element(1, 1, -1.0);
        let c = DMatrix::from_element(1, 1, 1.0);
        let f = DMatrix::from_element(1, 1, 1.0);
        let b = DMatrix::from_element(1, 1, 1.0);
        let dt = 1e-3_f64;
        let t1 = 4.0_f64;
        let steps = (t1 / dt).round() as usize;
        let x0 = 0.7;
        // closed form: x(t) = (x0 - 1) e^{-t} + 1
        let y: Vec<DVector<f64>> = (0..=steps)
            .map(|k| DVector::from_element(1, (x0 - 1.0) * (-(k as f64) * dt).exp() + 1.0))
            .collect();
        let u = vec![DVector::from_element(1, 1.0); steps + 1];
        let record = MeasurementRecord { t1, dt, b, u, y };
        let rec = reconstruct_target(&c, &a, &f, &record, &cfg()).unwrap();
        assert_relative_eq!(rec.z0[0], x0, epsilon = 1e-5);
        assert!(!rec.coarse_warning);
    }

    #[test]
    fn reconstruct_rejects_unobservable_function() {
        let a = DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, -2.0]);
        let c = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
        let f = DMatrix::from_row_slice(1, 2, &[0.0, 1.0]);
        let record = MeasurementRecord {
            t1: 1.0,
            dt: 0.5,
            b: DMatrix::zeros(2, 1),
            u: vec![DVector::zeros(1); 3],
            y: vec![DVector::zeros(1); 3],
        };
        assert!(matches!(
            reconstruct_target(&c, &a, &f, &record, &cfg()),
            Err(Error::Infeasible(_))
        ));
    }
}
