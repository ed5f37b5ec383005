//! Shared numerical kernel: matrix exponential, fixed-step integration,
//! rank/subspace utilities, deterministic RNG, and matrix text I/O.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Thresholds shared by all rank and subspace decisions.
///
/// All tolerances are relative to the largest singular value of the matrix
/// under test, since the systems studied here scale with the network size.
#[derive(Clone, Copy, Debug)]
pub struct ToleranceConfig {
    /// Singular values below `rank_rel_tol * sigma_max` are treated as zero.
    pub rank_rel_tol: f64,
    /// Allowed deviation from orthonormality in subspace bases.
    pub ortho_tol: f64,
    /// Truncation threshold for pseudoinverses, relative to sigma_max.
    pub pinv_rel_tol: f64,
}

impl Default for ToleranceConfig {
    fn default() -> Self {
        Self {
            rank_rel_tol: 1e-9,
            ortho_tol: 1e-8,
            pinv_rel_tol: 1e-10,
        }
    }
}

impl ToleranceConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("rank_rel_tol", self.rank_rel_tol),
            ("ortho_tol", self.ortho_tol),
            ("pinv_rel_tol", self.pinv_rel_tol),
        ] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::Input(format!(
                    "{name} must be in (0, 1), got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// A sampled state path: `states[k]` is the state at `times[k]`.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<DVector<f64>>,
}

impl Trajectory {
    pub fn final_state(&self) -> &DVector<f64> {
        self.states.last().expect("trajectory is nonempty")
    }

    /// Linear interpolation between grid points.
    pub fn sample(&self, t: f64) -> DVector<f64> {
        let n = self.times.len();
        if t <= self.times[0] {
            return self.states[0].clone();
        }
        if t >= self.times[n - 1] {
            return self.states[n - 1].clone();
        }
        let i = self.times.partition_point(|&ti| ti <= t).min(n - 1);
        let (t0, t1) = (self.times[i - 1], self.times[i]);
        let w = (t - t0) / (t1 - t0);
        &self.states[i - 1] * (1.0 - w) + &self.states[i] * w
    }
}

/// Deterministic stream generator (ChaCha, a counter-based stream cipher).
/// Identical seeds yield identical draws within one build; `substream`
/// derives independent streams for parallel work.
#[derive(Clone, Debug)]
pub struct SeededRng {
    pub seed: u64,
    inner: ChaCha8Rng,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Independent stream `index` derived from the same master seed.
    pub fn substream(&self, index: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(index.wrapping_add(1));
        Self {
            seed: self.seed,
            inner: rng,
        }
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.inner
    }
}

fn check_finite(m: &DMatrix<f64>, what: &str) -> Result<()> {
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::Input(format!("{what} contains non-finite entries")));
    }
    Ok(())
}

/// Matrix exponential `e^{At}` by scaling-and-squaring with a degree-13
/// Pade approximant.
pub fn expm(a: &DMatrix<f64>, t: f64) -> Result<DMatrix<f64>> {
    if a.nrows() != a.ncols() {
        return Err(Error::Dimension(format!(
            "expm requires a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    if !t.is_finite() {
        return Err(Error::Input(format!("expm time must be finite, got {t}")));
    }
    check_finite(a, "expm input")?;
    let n = a.nrows();
    if n == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }

    let m = a * t;
    // 1-norm based scaling so the Pade approximant stays in its
    // accuracy region (theta_13 from Higham's analysis).
    let norm1 = (0..n)
        .map(|j| m.column(j).iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0_f64, f64::max);
    let theta13 = 5.371920351148152;
    let s = if norm1 > theta13 {
        (norm1 / theta13).log2().ceil() as u32
    } else {
        0
    };
    let m = m / 2f64.powi(s as i32);

    const B: [f64; 14] = [
        64764752532480000.0,
        32382376266240000.0,
        7771770303897600.0,
        1187353796428800.0,
        129060195264000.0,
        10559470521600.0,
        670442572800.0,
        33522128640.0,
        1323241920.0,
        40840800.0,
        960960.0,
        16380.0,
        182.0,
        1.0,
    ];

    let id = DMatrix::identity(n, n);
    let m2 = &m * &m;
    let m4 = &m2 * &m2;
    let m6 = &m2 * &m4;
    let u = &m
        * (&m6 * (&m6 * B[13] + &m4 * B[11] + &m2 * B[9])
            + &m6 * B[7]
            + &m4 * B[5]
            + &m2 * B[3]
            + &id * B[1]);
    let v = &m6 * (&m6 * B[12] + &m4 * B[10] + &m2 * B[8])
        + &m6 * B[6]
        + &m4 * B[4]
        + &m2 * B[2]
        + &id * B[0];

    let lu = (&v - &u).lu();
    let mut r = lu
        .solve(&(&v + &u))
        .ok_or_else(|| Error::Numerical("expm Pade denominator is singular".into()))?;
    for _ in 0..s {
        r = &r * &r;
    }
    Ok(r)
}

/// Classical fixed-step RK4 integration of `x' = Ax + Bu(t)` over `[0, t1]`.
///
/// The step is shrunk to the nearest divisor of `t1` so the grid lands
/// exactly on the final time.
pub fn integrate_lti<U>(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    u: U,
    x0: &DVector<f64>,
    t1: f64,
    dt: f64,
) -> Result<Trajectory>
where
    U: Fn(f64) -> DVector<f64>,
{
    let n = a.nrows();
    if a.ncols() != n || b.nrows() != n || x0.len() != n {
        return Err(Error::Dimension(format!(
            "integrate_lti: A is {}x{}, B has {} rows, x0 has length {}",
            a.nrows(),
            a.ncols(),
            b.nrows(),
            x0.len()
        )));
    }
    if !(dt > 0.0 && dt <= t1) {
        return Err(Error::Input(format!(
            "integrate_lti requires 0 < dt <= t1, got dt = {dt}, t1 = {t1}"
        )));
    }
    let steps = (t1 / dt).ceil() as usize;
    let h = t1 / steps as f64;

    let deriv = |t: f64, x: &DVector<f64>| -> Result<DVector<f64>> {
        let ut = u(t);
        if ut.len() != b.ncols() {
            return Err(Error::Dimension(format!(
                "input signal has length {}, expected {}",
                ut.len(),
                b.ncols()
            )));
        }
        Ok(a * x + b * ut)
    };

    let mut times = Vec::with_capacity(steps + 1);
    let mut states = Vec::with_capacity(steps + 1);
    let mut x = x0.clone();
    times.push(0.0);
    states.push(x.clone());
    for k in 0..steps {
        let t = k as f64 * h;
        let k1 = deriv(t, &x)?;
        let k2 = deriv(t + 0.5 * h, &(&x + &k1 * (0.5 * h)))?;
        let k3 = deriv(t + 0.5 * h, &(&x + &k2 * (0.5 * h)))?;
        let k4 = deriv(t + h, &(&x + &k3 * h))?;
        x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        let t_next = (k + 1) as f64 * h;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Diverged(t_next));
        }
        times.push(t_next);
        states.push(x.clone());
    }
    Ok(Trajectory { times, states })
}

/// Numerical rank: the number of singular values above
/// `rank_rel_tol * sigma_max`. The zero matrix has rank 0.
pub fn rank_tol(m: &DMatrix<f64>, cfg: &ToleranceConfig) -> Result<usize> {
    if m.is_empty() {
        return Err(Error::Input("rank of an empty matrix is undefined".into()));
    }
    check_finite(m, "rank input")?;
    let sv = m.clone().singular_values();
    let smax = sv.max();
    if smax <= 0.0 {
        return Ok(0);
    }
    Ok(sv.iter().filter(|&&s| s > cfg.rank_rel_tol * smax).count())
}

/// Orthonormal basis of the column space. Returns a matrix with 0 columns
/// when the image is trivial.
pub fn orth_basis(m: &DMatrix<f64>, cfg: &ToleranceConfig) -> Result<DMatrix<f64>> {
    if m.is_empty() {
        return Err(Error::Input("orth_basis of an empty matrix".into()));
    }
    check_finite(m, "orth_basis input")?;
    let svd = m.clone().svd(true, false);
    let u = svd.u.as_ref().expect("requested U");
    let sv = &svd.singular_values;
    let smax = sv.max();
    if smax <= 0.0 {
        return Ok(DMatrix::zeros(m.nrows(), 0));
    }
    let r = sv.iter().filter(|&&s| s > cfg.rank_rel_tol * smax).count();
    Ok(u.columns(0, r).into_owned())
}

/// Orthonormal basis of the kernel, computed as the image of the
/// projector onto the orthogonal complement of the row space.
pub fn null_basis(m: &DMatrix<f64>, cfg: &ToleranceConfig) -> Result<DMatrix<f64>> {
    if m.is_empty() {
        return Err(Error::Input("null_basis of an empty matrix".into()));
    }
    check_finite(m, "null_basis input")?;
    let n = m.ncols();
    let row_space = orth_basis(&m.transpose(), cfg)?;
    let proj = DMatrix::identity(n, n) - &row_space * row_space.transpose();
    let eig = nalgebra::SymmetricEigen::new(proj);
    let mut cols: Vec<DVector<f64>> = Vec::new();
    for (i, &lam) in eig.eigenvalues.iter().enumerate() {
        // projector eigenvalues are 0 or 1
        if lam > 0.5 {
            cols.push(eig.eigenvectors.column(i).into_owned());
        }
    }
    if cols.is_empty() {
        return Ok(DMatrix::zeros(n, 0));
    }
    Ok(DMatrix::from_columns(&cols))
}

/// Moore-Penrose pseudoinverse with singular values truncated below
/// `rel_tol * sigma_max`.
pub fn pinv(m: &DMatrix<f64>, rel_tol: f64) -> Result<DMatrix<f64>> {
    check_finite(m, "pinv input")?;
    let svd = m.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let eps = if smax > 0.0 { rel_tol * smax } else { f64::MAX };
    svd.pseudo_inverse(eps)
        .map_err(|e| Error::Numerical(format!("pseudoinverse failed: {e}")))
}

/// Parse the dense matrix text format: optional `#` comment lines, a
/// `ROWS COLS` header, then ROWS lines of COLS decimals.
pub fn parse_matrix(text: &str) -> Result<DMatrix<f64>> {
    let mut data_lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));

    let (hline, header) = data_lines
        .next()
        .ok_or(Error::Parse {
            line: 0,
            msg: "missing ROWS COLS header".into(),
        })?;
    let dims: Vec<&str> = header.split_whitespace().collect();
    if dims.len() != 2 {
        return Err(Error::Parse {
            line: hline,
            msg: format!("expected 'ROWS COLS' header, got '{header}'"),
        });
    }
    let rows: usize = dims[0].parse().map_err(|_| Error::Parse {
        line: hline,
        msg: format!("invalid row count '{}'", dims[0]),
    })?;
    let cols: usize = dims[1].parse().map_err(|_| Error::Parse {
        line: hline,
        msg: format!("invalid column count '{}'", dims[1]),
    })?;
    if rows == 0 || cols == 0 {
        return Err(Error::Parse {
            line: hline,
            msg: "matrix dimensions must be positive".into(),
        });
    }

    let mut entries = Vec::with_capacity(rows * cols);
    for _ in 0..rows {
        let (lno, line) = data_lines.next().ok_or(Error::Parse {
            line: hline,
            msg: format!("expected {rows} data rows"),
        })?;
        let row: Vec<f64> = line
            .split_whitespace()
            .map(|tok| {
                tok.parse::<f64>().map_err(|_| Error::Parse {
                    line: lno,
                    msg: format!("non-numeric token '{tok}'"),
                })
            })
            .collect::<Result<_>>()?;
        if row.len() != cols {
            return Err(Error::Parse {
                line: lno,
                msg: format!("expected {cols} entries, found {}", row.len()),
            });
        }
        if row.iter().any(|x| !x.is_finite()) {
            return Err(Error::Parse {
                line: lno,
                msg: "non-finite entry".into(),
            });
        }
        entries.extend(row);
    }
    if let Some((lno, line)) = data_lines.next() {
        return Err(Error::Parse {
            line: lno,
            msg: format!("unexpected trailing data '{line}'"),
        });
    }
    Ok(DMatrix::from_row_slice(rows, cols, &entries))
}

/// Parse a multi-section file: lines like `A:` start a named section and
/// the following lines up to the next header form one matrix in the
/// [`parse_matrix`] format. Returns `(name, matrix)` pairs in file order.
pub fn parse_matrix_sections(text: &str) -> Result<Vec<(String, DMatrix<f64>)>> {
    let mut sections: Vec<(String, String)> = Vec::new();
    for (lno, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.ends_with(':') && !trimmed.starts_with('#') {
            let name = trimmed.trim_end_matches(':').trim();
            if name.is_empty() || name.contains(char::is_whitespace) {
                return Err(Error::Parse {
                    line: lno + 1,
                    msg: format!("invalid section header '{trimmed}'"),
                });
            }
            sections.push((name.to_string(), String::new()));
        } else {
            match sections.last_mut() {
                Some((_, body)) => {
                    body.push_str(line);
                    body.push('\n');
                }
                None if trimmed.is_empty() || trimmed.starts_with('#') => {}
                None => {
                    return Err(Error::Parse {
                        line: lno + 1,
                        msg: "data before the first section header".into(),
                    })
                }
            }
        }
    }
    sections
        .into_iter()
        .map(|(name, body)| {
            let m = parse_matrix(&body).map_err(|e| match e {
                Error::Parse { line, msg } => Error::Parse {
                    line,
                    msg: format!("in section '{name}': {msg}"),
                },
                other => other,
            })?;
            Ok((name, m))
        })
        .collect()
}

/// Render a matrix in the text format accepted by [`parse_matrix`].
/// Entries use the shortest decimal form that round-trips exactly.
pub fn render_matrix(m: &DMatrix<f64>) -> String {
    let mut out = format!("{} {}\n", m.nrows(), m.ncols());
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| format!("{:e}", m[(i, j)])).collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    out
}
