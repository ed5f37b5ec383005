//! Functional observer synthesis for estimating a feedback signal -Kx,
//! closed-loop assembly, spectrum separation checks, and end-to-end
//! simulation.

use nalgebra::{Complex, DMatrix, DVector};

use crate::error::{Error, Result};
use crate::gramian::is_functionally_observable;
use crate::numkernel::{integrate_lti, parse_matrix_sections, render_matrix, Trajectory, ToleranceConfig};
use crate::target_control::spectrum_match_error;

/// Reduced-order observer `w' = Nw + Jy`, `u = Dw + Ey`, with auxiliary
/// matrix T satisfying the design identities
/// `NT + JC - TA = 0` and `-DT - EC = K`.
#[derive(Clone, Debug)]
pub struct FunctionalObserver {
    pub n_mat: DMatrix<f64>,
    pub j: DMatrix<f64>,
    pub d: DMatrix<f64>,
    pub e: DMatrix<f64>,
    pub t: DMatrix<f64>,
    pub n0: usize,
}

impl FunctionalObserver {
    pub fn new(
        n_mat: DMatrix<f64>,
        j: DMatrix<f64>,
        d: DMatrix<f64>,
        e: DMatrix<f64>,
        t: DMatrix<f64>,
    ) -> Result<Self> {
        let n0 = n_mat.nrows();
        if n0 == 0 {
            return Err(Error::Input("observer order must be at least 1".into()));
        }
        if n_mat.ncols() != n0
            || j.nrows() != n0
            || d.ncols() != n0
            || t.nrows() != n0
            || e.nrows() != d.nrows()
            || e.ncols() != j.ncols()
        {
            return Err(Error::Dimension("observer matrices are inconsistent".into()));
        }
        Ok(Self { n_mat, j, d, e, t, n0 })
    }

    /// The gain this observer realizes: `K = -DT - EC`.
    pub fn realized_gain(&self, c: &DMatrix<f64>) -> DMatrix<f64> {
        -(&self.d * &self.t) - &self.e * c
    }

    /// Normalized residuals of the two algebraic design conditions
    /// against a given plant and gain.
    pub fn condition_residuals(
        &self,
        c: &DMatrix<f64>,
        a: &DMatrix<f64>,
        k: &DMatrix<f64>,
    ) -> (f64, f64) {
        let scale = (a.norm() * self.t.norm().max(1.0))
            .max(k.norm())
            .max(1.0);
        let r2 = (&self.n_mat * &self.t + &self.j * c - &self.t * a).norm() / scale;
        let r3 = (-(&self.d * &self.t) - &self.e * c - k).norm() / scale;
        (r2, r3)
    }

    pub fn is_hurwitz(&self) -> bool {
        self.n_mat
            .clone()
            .complex_eigenvalues()
            .iter()
            .all(|lam| lam.re < 0.0)
    }

    /// Multi-section text file with sections N, J, D, E, T.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for (name, m) in [
            ("N", &self.n_mat),
            ("J", &self.j),
            ("D", &self.d),
            ("E", &self.e),
            ("T", &self.t),
        ] {
            out.push_str(name);
            out.push_str(":\n");
            out.push_str(&render_matrix(m));
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut n = None;
        let mut j = None;
        let mut d = None;
        let mut e = None;
        let mut t = None;
        for (name, m) in parse_matrix_sections(text)? {
            let slot = match name.as_str() {
                "N" => &mut n,
                "J" => &mut j,
                "D" => &mut d,
                "E" => &mut e,
                "T" => &mut t,
                other => {
                    return Err(Error::Input(format!(
                        "unknown observer section '{other}' (expected N, J, D, E, T)"
                    )))
                }
            };
            if slot.replace(m).is_some() {
                return Err(Error::Input(format!("duplicate section '{name}'")));
            }
        }
        let missing = |s: &str| Error::Input(format!("observer file is missing section {s}"));
        Self::new(
            n.ok_or_else(|| missing("N"))?,
            j.ok_or_else(|| missing("J"))?,
            d.ok_or_else(|| missing("D"))?,
            e.ok_or_else(|| missing("E"))?,
            t.ok_or_else(|| missing("T"))?,
        )
    }
}

/// Real companion matrix with the given conjugate-closed spectrum.
fn companion_from_poles(poles: &[Complex<f64>]) -> DMatrix<f64> {
    // expand prod (s - lambda_i) into real coefficients
    let mut coeffs: Vec<Complex<f64>> = vec![Complex::new(1.0, 0.0)];
    for lam in poles {
        let mut next = vec![Complex::new(0.0, 0.0); coeffs.len() + 1];
        for (i, &ci) in coeffs.iter().enumerate() {
            next[i] += ci * (-lam);
            next[i + 1] += ci;
        }
        coeffs = next;
    }
    let n = poles.len();
    let mut m = DMatrix::zeros(n, n);
    for i in 1..n {
        m[(i, i - 1)] = 1.0;
    }
    for i in 0..n {
        // monic polynomial: last column holds -a_0 .. -a_{n-1}
        m[(i, n - 1)] = -coeffs[i].re;
    }
    m
}

/// Synthesize a functional observer for the signal `-Kx`.
///
/// The order starts at the number of rows of K and grows until the
/// coupled linear conditions become solvable, capped at the plant order.
/// D is fixed to `[I 0]`, the top rows of T are eliminated through
/// condition (iii), and the remaining unknowns (E, J, free rows of T)
/// solve condition (ii) in the least-squares sense.
pub fn synthesize_functional_observer(
    c: &DMatrix<f64>,
    a: &DMatrix<f64>,
    k: &DMatrix<f64>,
    observer_poles: &[Complex<f64>],
    cfg: &ToleranceConfig,
) -> Result<FunctionalObserver> {
    let n = a.nrows();
    let p = k.nrows();
    if a.ncols() != n || c.ncols() != n || k.ncols() != n {
        return Err(Error::Dimension("synthesize_functional_observer: dims".into()));
    }
    if observer_poles.is_empty() {
        return Err(Error::Input("at least one observer pole is required".into()));
    }
    if observer_poles.iter().any(|lam| lam.re >= 0.0) {
        return Err(Error::Input("observer poles must lie in the open left half-plane".into()));
    }
    let minus_k = -k;
    if !is_functionally_observable(c, a, &minus_k, cfg)? {
        return Err(Error::Infeasible(
            "observer infeasible: (C, A; -K) fails the functional-observability rank test"
                .into(),
        ));
    }

    for n0 in p..=n {
        let mut poles: Vec<Complex<f64>> = observer_poles.iter().cloned().take(n0).collect();
        // keep conjugate closure when truncating
        if poles
            .iter()
            .any(|lam| lam.im.abs() > 1e-12 && !poles.iter().any(|o| (o - lam.conj()).norm() < 1e-9))
        {
            poles.retain(|lam| lam.im.abs() <= 1e-12);
        }
        let mut extra = 0;
        while poles.len() < n0 {
            extra += 1;
            let cand = -1.0
                - extra as f64
                - observer_poles.iter().map(|l| l.re.abs()).fold(0.0, f64::max);
            poles.push(Complex::new(cand, 0.0));
        }
        let n_mat = companion_from_poles(&poles);

        if let Some(obs) = try_order(c, a, k, &n_mat, n0) {
            let (r2, r3) = obs.condition_residuals(c, a, k);
            if r2 <= 1e-8 && r3 <= 1e-8 {
                return Ok(obs);
            }
        }
    }
    Err(Error::Infeasible(format!(
        "no functional observer of order <= {n} found; a full-order observer may be required"
    )))
}

/// Attempt one observer order with N fixed: solve the linearized design
/// conditions for (E, J, free rows of T).
fn try_order(
    c: &DMatrix<f64>,
    a: &DMatrix<f64>,
    k: &DMatrix<f64>,
    n_mat: &DMatrix<f64>,
    n0: usize,
) -> Option<FunctionalObserver> {
    let n = a.nrows();
    let q = c.nrows();
    let p = k.nrows();
    let free_rows = n0 - p;
    let unknowns = p * q + n0 * q + free_rows * n;

    // D = [I_p 0]; condition (iii) pins the top p rows of T to -K - EC
    let mut d = DMatrix::zeros(p, n0);
    for i in 0..p {
        d[(i, i)] = 1.0;
    }

    let assemble = |theta: &DVector<f64>| -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
        let e = DMatrix::from_column_slice(p, q, &theta.as_slice()[0..p * q]);
        let j = DMatrix::from_column_slice(n0, q, &theta.as_slice()[p * q..p * q + n0 * q]);
        let mut t = DMatrix::zeros(n0, n);
        let top = -k - &e * c;
        t.view_mut((0, 0), (p, n)).copy_from(&top);
        if free_rows > 0 {
            let tf = DMatrix::from_column_slice(
                free_rows,
                n,
                &theta.as_slice()[p * q + n0 * q..],
            );
            t.view_mut((p, 0), (free_rows, n)).copy_from(&tf);
        }
        (e, j, t)
    };
    let residual = |theta: &DVector<f64>| -> DVector<f64> {
        let (_, j, t) = assemble(theta);
        let r = n_mat * &t + &j * c - &t * a;
        DVector::from_column_slice(r.as_slice())
    };

    let r0 = residual(&DVector::zeros(unknowns));
    let mut mat = DMatrix::zeros(r0.len(), unknowns);
    for i in 0..unknowns {
        let mut ei = DVector::zeros(unknowns);
        ei[i] = 1.0;
        mat.set_column(i, &(residual(&ei) - &r0));
    }
    let svd = mat.svd(true, true);
    let theta = svd.solve(&(-r0), 1e-12).ok()?;
    let (e, j, t) = assemble(&theta);
    FunctionalObserver::new(n_mat.clone(), j, d, e, t).ok()
}

/// The assembled plant-plus-observer system of dimension n + n0.
#[derive(Clone, Debug)]
pub struct ClosedLoop {
    /// Block system matrix `[[A + BEC, BD], [JC, N]]`.
    pub block: DMatrix<f64>,
    /// Reference injection channel `[B; 0]` (the reference enters as
    /// `u = r + Dw + Ey`).
    pub input: DMatrix<f64>,
    pub reference: Option<DVector<f64>>,
    pub expected_spectrum: Vec<Complex<f64>>,
    pub spectrum: Vec<Complex<f64>>,
    /// Largest distance between the block spectrum and the separation
    /// prediction `eig(A - BK) u eig(N)`.
    pub separation_error: f64,
    pub n: usize,
    pub n0: usize,
    t_obs: DMatrix<f64>,
}

fn sorted_spectrum(m: &DMatrix<f64>) -> Vec<Complex<f64>> {
    let mut eigs: Vec<Complex<f64>> = m.clone().complex_eigenvalues().iter().cloned().collect();
    eigs.sort_by(|x, y| (x.re, x.im).partial_cmp(&(y.re, y.im)).unwrap());
    eigs
}

/// Build the closed-loop block matrix and verify the separation of its
/// spectrum into controller and observer poles.
pub fn assemble_closed_loop(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    c: &DMatrix<f64>,
    obs: &FunctionalObserver,
    reference: Option<DVector<f64>>,
) -> Result<ClosedLoop> {
    let n = a.nrows();
    let p = b.ncols();
    let q = c.nrows();
    let n0 = obs.n0;
    if b.nrows() != n
        || c.ncols() != n
        || obs.j.ncols() != q
        || obs.d.nrows() != p
        || obs.t.ncols() != n
    {
        return Err(Error::Dimension("assemble_closed_loop: dims".into()));
    }
    if let Some(r) = &reference {
        if r.len() != p {
            return Err(Error::Dimension(format!(
                "reference has length {}, expected {p}",
                r.len()
            )));
        }
    }
    // The loop closes with u = Dw + Ey + r.  The observer must be driven
    // by that same input, w' = Nw + Jy + TBu, so that the estimation error
    // e = w - Tx obeys e' = Ne for any reference.
    let tb = &obs.t * b;
    let mut block = DMatrix::zeros(n + n0, n + n0);
    block
        .view_mut((0, 0), (n, n))
        .copy_from(&(a + b * &obs.e * c));
    block.view_mut((0, n), (n, n0)).copy_from(&(b * &obs.d));
    block
        .view_mut((n, 0), (n0, n))
        .copy_from(&(&obs.j * c + &tb * &obs.e * c));
    block
        .view_mut((n, n), (n0, n0))
        .copy_from(&(&obs.n_mat + &tb * &obs.d));

    let mut input = DMatrix::zeros(n + n0, p);
    input.view_mut((0, 0), (n, p)).copy_from(b);
    input.view_mut((n, 0), (n0, p)).copy_from(&tb);

    let k = obs.realized_gain(c);
    let mut expected = sorted_spectrum(&(a - b * k));
    expected.extend(sorted_spectrum(&obs.n_mat));
    expected.sort_by(|x, y| (x.re, x.im).partial_cmp(&(y.re, y.im)).unwrap());
    let spectrum = sorted_spectrum(&block);
    let separation_error = spectrum_match_error(&spectrum, &expected);

    Ok(ClosedLoop {
        block,
        input,
        reference,
        expected_spectrum: expected,
        spectrum,
        separation_error,
        n,
        n0,
        t_obs: obs.t.clone(),
    })
}

/// Closed-loop sample path with the derived target and estimation-error
/// signals.
#[derive(Clone, Debug)]
pub struct ClosedLoopRun {
    pub trajectory: Trajectory,
    pub z: Vec<DVector<f64>>,
    pub estimation_error_norm: Vec<f64>,
}

/// Integrate the assembled loop from `(x0, w0)`; returns the stacked
/// trajectory plus `z(t) = F x(t)` and `||w(t) - T x(t)||`.
pub fn simulate_closed_loop(
    cl: &ClosedLoop,
    f: &DMatrix<f64>,
    x0: &DVector<f64>,
    w0: &DVector<f64>,
    t1: f64,
    dt: f64,
) -> Result<ClosedLoopRun> {
    if x0.len() != cl.n || w0.len() != cl.n0 {
        return Err(Error::Dimension(format!(
            "initial condition dims: x0 has {}, w0 has {}, expected {} and {}",
            x0.len(),
            w0.len(),
            cl.n,
            cl.n0
        )));
    }
    if f.ncols() != cl.n {
        return Err(Error::Dimension("F columns must match the plant order".into()));
    }
    let mut state0 = DVector::zeros(cl.n + cl.n0);
    state0.rows_mut(0, cl.n).copy_from(x0);
    state0.rows_mut(cl.n, cl.n0).copy_from(w0);
    let r = cl
        .reference
        .clone()
        .unwrap_or_else(|| DVector::zeros(cl.input.ncols()));
    let trajectory = integrate_lti(&cl.block, &cl.input, |_| r.clone(), &state0, t1, dt)?;
    let mut z = Vec::with_capacity(trajectory.states.len());
    let mut err = Vec::with_capacity(trajectory.states.len());
    for s in &trajectory.states {
        let x = s.rows(0, cl.n).into_owned();
        let w = s.rows(cl.n, cl.n0).into_owned();
        z.push(f * &x);
        err.push((&w - &cl.t_obs * &x).norm());
    }
    Ok(ClosedLoopRun {
        trajectory,
        z,
        estimation_error_norm: err,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::{example_a, example_f};
    use approx::assert_relative_eq;

    fn cfg() -> ToleranceConfig {
        ToleranceConfig::default()
    }

    fn design_a() -> DMatrix<f64> {
        example_a(-1.0, -3.0, -3.0)
    }

    /// y = (x5, x1).
    fn design_c() -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 5, &[0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0])
    }

    fn design_b() -> DMatrix<f64> {
        DMatrix::from_column_slice(5, 1, &[1.0, 0.0, 0.0, 0.0, 0.0])
    }

    fn design_k() -> DMatrix<f64> {
        DMatrix::from_row_slice(1, 5, &[12.0, -47.0, 0.0, 0.0, 59.0])
    }

    fn reference_observer() -> FunctionalObserver {
        FunctionalObserver::new(
            DMatrix::from_element(1, 1, -1.0),
            DMatrix::from_row_slice(1, 2, &[0.0, -47.0]),
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_row_slice(1, 2, &[-59.0, -12.0]),
            DMatrix::from_row_slice(1, 5, &[0.0, 47.0, 0.0, 0.0, 0.0]),
        )
        .unwrap()
    }

    #[test]
    fn reference_quintuple_satisfies_conditions() {
        let obs = reference_observer();
        let (r2, r3) = obs.condition_residuals(&design_c(), &design_a(), &design_k());
        assert!(r2 <= 1e-8, "dynamics residual {r2}");
        assert!(r3 <= 1e-8, "gain residual {r3}");
        assert!(obs.is_hurwitz());
        assert_relative_eq!(obs.realized_gain(&design_c()), design_k(), epsilon = 1e-12);
    }

    #[test]
    fn synthesis_finds_first_order_observer() {
        let poles = [Complex::new(-1.0, 0.0)];
        let obs =
            synthesize_functional_observer(&design_c(), &design_a(), &design_k(), &poles, &cfg())
                .unwrap();
        assert_eq!(obs.n0, 1);
        let (r2, r3) = obs.condition_residuals(&design_c(), &design_a(), &design_k());
        assert!(r2 <= 1e-8 && r3 <= 1e-8, "residuals {r2} {r3}");
        assert_relative_eq!(obs.n_mat[(0, 0)], -1.0, epsilon = 1e-9);
    }

    #[test]
    fn synthesis_rejects_unstable_poles() {
        let poles = [Complex::new(0.5, 0.0)];
        assert!(synthesize_functional_observer(
            &design_c(),
            &design_a(),
            &design_k(),
            &poles,
            &cfg()
        )
        .is_err());
    }

    #[test]
    fn synthesis_rejects_unobservable_gain() {
        // y = x3 only ever sees node 3, but K needs x1, x2, x5
        let c = DMatrix::from_row_slice(1, 5, &[0.0, 0.0, 1.0, 0.0, 0.0]);
        let out = synthesize_functional_observer(
            &c,
            &design_a(),
            &design_k(),
            &[Complex::new(-1.0, 0.0)],
            &cfg(),
        );
        assert!(matches!(out, Err(Error::Infeasible(_))));
    }

    #[test]
    fn closed_loop_separates_spectra() {
        let cl = assemble_closed_loop(
            &design_a(),
            &design_b(),
            &design_c(),
            &reference_observer(),
            None,
        )
        .unwrap();
        let expected = [
            Complex::new(-6.0, 0.0),
            Complex::new(-5.0, 0.0),
            Complex::new(-4.0, 0.0),
            Complex::new(-3.0, 0.0),
            Complex::new(-3.0, 0.0),
            Complex::new(-1.0, 0.0),
        ];
        assert!(spectrum_match_error(&cl.spectrum, &expected) < 1e-6);
        assert!(cl.separation_error < 1e-6);
    }

    #[test]
    fn closed_loop_tracks_setpoint() {
        let reference = DVector::from_element(1, -120.0);
        let cl = assemble_closed_loop(
            &design_a(),
            &design_b(),
            &design_c(),
            &reference_observer(),
            Some(reference),
        )
        .unwrap();
        let run = simulate_closed_loop(
            &cl,
            &example_f(),
            &DVector::zeros(5),
            &DVector::zeros(1),
            8.0,
            1e-3,
        )
        .unwrap();
        let z_end = run.z.last().unwrap()[0];
        assert!((z_end - 1.0).abs() <= 1e-2, "z(8) = {z_end}");
        // the estimation error decays along with exp(-t)
        assert!(run.estimation_error_norm.last().unwrap() < &1e-2);
    }

    #[test]
    fn observer_file_roundtrip() {
        let obs = reference_observer();
        let back = FunctionalObserver::parse(&obs.render()).unwrap();
        assert_eq!(back.n_mat, obs.n_mat);
        assert_eq!(back.j, obs.j);
        assert_eq!(back.d, obs.d);
        assert_eq!(back.e, obs.e);
        assert_eq!(back.t, obs.t);
    }

    #[test]
    fn observer_rejects_inconsistent_dims() {
        assert!(FunctionalObserver::new(
            DMatrix::from_element(1, 1, -1.0),
            DMatrix::from_row_slice(1, 2, &[0.0, 0.0]),
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_row_slice(1, 3, &[0.0, 0.0, 0.0]),
            DMatrix::from_row_slice(1, 5, &[0.0; 5]),
        )
        .is_err());
    }
}
