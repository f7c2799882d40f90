//! Exact construction of Cook-Toom (Winograd minimal filtering) transforms.
//!
//! For output length `m` and kernel length `r` the tile length is
//! `t = m + r − 1`. A [`TransformSet`] holds the triple `(AT, G, BT)` such that
//! for any tile `x` (length `t`) and kernel `w` (length `r`)
//!
//! ```text
//! AT · ((G · w) ⊙ (BT · x)) = [ Σ_k x[i + k] · w[k] ]   for i in 0..m
//! ```
//!
//! i.e. the `m` valid cross-correlation outputs, using `t` multiplications.
//! The matrices are built in exact rational arithmetic by Lagrange
//! interpolation over `t − 1` finite points plus the point at infinity.

use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};
use crate::gemm::Matrix;

/// Largest output tile length accepted without [`GenerateOptions::allow_large_tiles`].
pub const MAX_DEFAULT_TILE: usize = 4;

/// Dense row-major matrix of exact rationals.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RationalMatrix {
    rows: usize,
    cols: usize,
    data: Vec<BigRational>,
}

impl RationalMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![BigRational::zero(); rows * cols],
        }
    }

    /// Builds a matrix from integer rows; handy for literal matrices.
    pub fn from_integers(rows: &[&[i64]]) -> Self {
        let cols = rows.first().map_or(0, |r| r.len());
        let mut out = Self::zeros(rows.len(), cols);
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), cols, "ragged integer matrix");
            for (j, &v) in row.iter().enumerate() {
                out.set(i, j, BigRational::from_integer(v.into()));
            }
        }
        out
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> &BigRational {
        &self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: BigRational) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[BigRational] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<BigRational> {
        (0..self.rows).map(|i| self.get(i, j).clone()).collect()
    }

    pub fn mul_vec(&self, v: &[BigRational]) -> Vec<BigRational> {
        assert_eq!(v.len(), self.cols);
        (0..self.rows)
            .map(|i| {
                self.row(i)
                    .iter()
                    .zip(v)
                    .fold(BigRational::zero(), |acc, (a, b)| acc + a * b)
            })
            .collect()
    }

    /// Determinant by Gaussian elimination over the rationals.
    pub fn determinant(&self) -> BigRational {
        assert_eq!(self.rows, self.cols, "determinant of a non-square matrix");
        let n = self.rows;
        let mut a = self.data.clone();
        let mut det = BigRational::one();
        for col in 0..n {
            let Some(pivot) = (col..n).find(|&r| !a[r * n + col].is_zero()) else {
                return BigRational::zero();
            };
            if pivot != col {
                for k in 0..n {
                    a.swap(pivot * n + k, col * n + k);
                }
                det = -det;
            }
            let p = a[col * n + col].clone();
            det *= &p;
            for r in col + 1..n {
                let factor = &a[r * n + col] / &p;
                if factor.is_zero() {
                    continue;
                }
                for k in col..n {
                    let delta = &factor * &a[col * n + k];
                    a[r * n + k] -= delta;
                }
            }
        }
        det
    }

    /// Nearest-`f32` copy of every entry.
    pub fn to_f32(&self) -> Matrix {
        let data = self.data.iter().map(rational_to_f32).collect();
        Matrix::from_vec(self.rows, self.cols, data).expect("shape preserved")
    }
}

/// Entries as `p/q`, one row per line.
impl fmt::Display for RationalMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.rows {
            let row: Vec<String> = self
                .row(i)
                .iter()
                .map(|v| format!("{}/{}", v.numer(), v.denom()))
                .collect();
            writeln!(f, "{}", row.join(" "))?;
        }
        Ok(())
    }
}

/// Rounds an exact rational to the nearest representable `f32`.
pub fn rational_to_f32(q: &BigRational) -> f32 {
    let approx = q.to_f64().unwrap_or(f64::NAN) as f32;
    if !approx.is_finite() {
        return approx;
    }
    // The f64 detour can double-round; settle between the neighbours exactly.
    [approx.next_down(), approx, approx.next_up()]
        .into_iter()
        .filter_map(|c| BigRational::from_float(c).map(|exact| (c, (exact - q).abs())))
        .min_by(|a, b| a.1.cmp(&b.1))
        .map(|(c, _)| c)
        .unwrap_or(approx)
}

/// Knobs for [`generate_1d_with`].
#[derive(Debug, Clone, Copy, Default)]
pub struct GenerateOptions {
    /// Accept output tiles longer than [`MAX_DEFAULT_TILE`]. Float error of the
    /// transforms grows quickly with the magnitude of the interpolation points.
    pub allow_large_tiles: bool,
}

/// A 1-D `F(m, r)` transform triple with exact and `f32` copies.
#[derive(Debug, Clone)]
pub struct TransformSet {
    m: usize,
    r: usize,
    points: Vec<BigRational>,
    at: RationalMatrix,
    g: RationalMatrix,
    bt: RationalMatrix,
    at_f32: Matrix,
    g_f32: Matrix,
    bt_f32: Matrix,
}

impl TransformSet {
    /// Assembles a set from explicit matrices without checking the
    /// correlation identity (see [`verify_transform_set`]). Only the shapes
    /// are validated.
    pub fn from_parts(
        m: usize,
        r: usize,
        points: Vec<BigRational>,
        at: RationalMatrix,
        g: RationalMatrix,
        bt: RationalMatrix,
    ) -> Result<Self> {
        if m == 0 || r == 0 {
            return Err(Error::Construction(format!(
                "F({m}, {r}): lengths must be positive"
            )));
        }
        let t = m + r - 1;
        let shapes = [("AT", &at, (m, t)), ("G", &g, (t, r)), ("BT", &bt, (t, t))];
        for (name, mat, expected) in shapes {
            if (mat.rows, mat.cols) != expected {
                return Err(Error::Size(format!(
                    "{name} is {}x{}, F({m}, {r}) needs {}x{}",
                    mat.rows, mat.cols, expected.0, expected.1
                )));
            }
        }
        Ok(Self {
            m,
            r,
            points,
            at_f32: at.to_f32(),
            g_f32: g.to_f32(),
            bt_f32: bt.to_f32(),
            at,
            g,
            bt,
        })
    }

    /// The trivial `F(1, 1)` set: all three matrices are `[[1]]`.
    pub fn identity() -> Self {
        generate_1d(1, 1, &[]).expect("F(1, 1) always constructs")
    }

    /// Output tile length.
    pub fn m(&self) -> usize {
        self.m
    }

    /// Kernel length.
    pub fn r(&self) -> usize {
        self.r
    }

    /// Tile (Hadamard) length `m + r − 1`; the multiply count per tile.
    pub fn t(&self) -> usize {
        self.m + self.r - 1
    }

    pub fn points(&self) -> &[BigRational] {
        &self.points
    }

    /// Output transform, `m × t`.
    pub fn at(&self) -> &RationalMatrix {
        &self.at
    }

    /// Kernel transform, `t × r`.
    pub fn g(&self) -> &RationalMatrix {
        &self.g
    }

    /// Input transform, `t × t`.
    pub fn bt(&self) -> &RationalMatrix {
        &self.bt
    }

    pub fn at_f32(&self) -> &Matrix {
        &self.at_f32
    }

    pub fn g_f32(&self) -> &Matrix {
        &self.g_f32
    }

    pub fn bt_f32(&self) -> &Matrix {
        &self.bt_f32
    }

    pub fn is_identity(&self) -> bool {
        self.m == 1 && self.r == 1
    }

    /// Plain-text dump: a header line, then `AT`, `G` and `BT` blocks with
    /// entries written as `p/q`.
    pub fn to_text(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for TransformSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let points: Vec<String> = self
            .points
            .iter()
            .map(|p| format!("{}/{}", p.numer(), p.denom()))
            .collect();
        writeln!(f, "F({}, {}) points: {}", self.m, self.r, points.join(" "))?;
        for (name, mat) in [("AT", &self.at), ("G", &self.g), ("BT", &self.bt)] {
            writeln!(f)?;
            writeln!(f, "{name} {}x{}", mat.rows, mat.cols)?;
            write!(f, "{mat}")?;
        }
        Ok(())
    }
}

/// `0, 1, −1, 2, −2, 3, −3, …` truncated to `n` entries.
pub fn default_points(n: usize) -> Vec<BigRational> {
    (0..n)
        .map(|i| {
            let magnitude = i.div_ceil(2) as i64;
            let v = if i % 2 == 1 { magnitude } else { -magnitude };
            BigRational::from_integer(BigInt::from(v))
        })
        .collect()
}

/// [`generate_1d_with`] using default options.
pub fn generate_1d(m: usize, r: usize, points: &[BigRational]) -> Result<TransformSet> {
    generate_1d_with(m, r, points, GenerateOptions::default())
}

/// Builds `F(m, r)` from `m + r − 2` distinct finite interpolation points.
///
/// With `N_j = Π_{l≠j} (a_j − a_l)`:
/// * row `j` of `BT` is `sign(N_j) · Π_{l≠j} (x − a_l)` (ascending coefficients),
///   row `j` of `G` is `a_j^k / |N_j|` and column `j` of `AT` is `a_j^i`;
/// * the point at infinity contributes the last row of `BT`
///   (`Π_l (a_l − x)`), `e_{r−1}` as the last row of `G`, and
///   `(−1)^{t−1} · e_{m−1}` as the last column of `AT`.
///
/// With points `[0, 1, −1]` this yields the familiar `F(2, 3)` matrices.
pub fn generate_1d_with(
    m: usize,
    r: usize,
    points: &[BigRational],
    options: GenerateOptions,
) -> Result<TransformSet> {
    if m == 0 || r == 0 {
        return Err(Error::Construction(format!(
            "F({m}, {r}): tile and kernel lengths must be positive"
        )));
    }
    if m > MAX_DEFAULT_TILE && !options.allow_large_tiles {
        return Err(Error::Construction(format!(
            "F({m}, {r}): output tiles longer than {MAX_DEFAULT_TILE} are refused by default"
        )));
    }
    let t = m + r - 1;
    let finite = t - 1;
    if points.len() != finite {
        return Err(Error::Arity {
            m,
            r,
            expected: finite,
            got: points.len(),
        });
    }
    for (i, a) in points.iter().enumerate() {
        if points[..i].contains(a) {
            return Err(Error::Construction(format!("duplicate interpolation point {a}")));
        }
    }

    let inf_sign = if finite.is_multiple_of(2) {
        BigRational::one()
    } else {
        -BigRational::one()
    };

    let mut at = RationalMatrix::zeros(m, t);
    let mut g = RationalMatrix::zeros(t, r);
    let mut bt = RationalMatrix::zeros(t, t);

    for (j, a) in points.iter().enumerate() {
        let others: Vec<&BigRational> = points
            .iter()
            .enumerate()
            .filter_map(|(l, p)| (l != j).then_some(p))
            .collect();
        let norm = others.iter().fold(BigRational::one(), |acc, &p| acc * (a - p));
        let scale = norm.abs();

        let mut power = BigRational::one();
        for i in 0..m.max(r) {
            if i < m {
                at.set(i, j, power.clone());
            }
            if i < r {
                g.set(j, i, &power / &scale);
            }
            power *= a;
        }

        let sign = if norm.is_negative() {
            -BigRational::one()
        } else {
            BigRational::one()
        };
        let coeffs = poly_from_roots(others.into_iter());
        for (k, c) in coeffs.into_iter().enumerate() {
            bt.set(j, k, c * &sign);
        }
    }

    at.set(m - 1, t - 1, inf_sign.clone());
    g.set(t - 1, r - 1, BigRational::one());
    for (k, c) in poly_from_roots(points.iter()).into_iter().enumerate() {
        bt.set(t - 1, k, c * &inf_sign);
    }

    TransformSet::from_parts(m, r, points.to_vec(), at, g, bt)
}

/// Ascending coefficients of `Π (x − root)`.
fn poly_from_roots<'a>(roots: impl Iterator<Item = &'a BigRational>) -> Vec<BigRational> {
    let mut coeffs = vec![BigRational::one()];
    for root in roots {
        let mut next = vec![BigRational::zero(); coeffs.len() + 1];
        for (k, c) in coeffs.iter().enumerate() {
            next[k + 1] += c;
            next[k] -= c * root;
        }
        coeffs = next;
    }
    coeffs
}

/// One basis pair for which the correlation identity did not hold.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BasisFailure {
    /// Index `i` of the input basis vector `e_i` (length `t`).
    pub input_index: usize,
    /// Index `j` of the kernel basis vector `e_j` (length `r`).
    pub kernel_index: usize,
    pub expected: Vec<BigRational>,
    pub actual: Vec<BigRational>,
}

/// Outcome of [`verify_transform_set`].
#[derive(Debug, Clone, Default)]
pub struct VerifyReport {
    pub checked: usize,
    pub failures: Vec<BasisFailure>,
    /// Structural problems (shape mismatches) that prevented checking.
    pub errors: Vec<String>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty() && self.errors.is_empty() && self.checked > 0
    }
}

impl fmt::Display for VerifyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.passed() {
            return write!(f, "pass ({} basis pairs)", self.checked);
        }
        write!(f, "fail")?;
        for e in &self.errors {
            write!(f, "; {e}")?;
        }
        for fail in &self.failures {
            write!(f, "; input e{} x kernel e{}", fail.input_index, fail.kernel_index)?;
        }
        Ok(())
    }
}

/// Exhaustively checks the correlation identity on every pair of basis
/// vectors `(e_i, e_j)`, comparing against direct correlation in exact
/// arithmetic. By bilinearity this covers all inputs.
pub fn verify_transform_set(ts: &TransformSet) -> VerifyReport {
    let (m, r, t) = (ts.m, ts.r, ts.t());
    let mut report = VerifyReport::default();
    let shapes = [
        ("AT", &ts.at, (m, t)),
        ("G", &ts.g, (t, r)),
        ("BT", &ts.bt, (t, t)),
    ];
    for (name, mat, expected) in shapes {
        if (mat.rows, mat.cols) != expected {
            report.errors.push(format!(
                "{name} is {}x{}, expected {expected:?}",
                mat.rows, mat.cols
            ));
        }
    }
    if !report.errors.is_empty() {
        return report;
    }

    for i in 0..t {
        let transformed_input = ts.bt.column(i);
        for j in 0..r {
            let transformed_kernel = ts.g.column(j);
            let product: Vec<BigRational> = transformed_kernel
                .iter()
                .zip(&transformed_input)
                .map(|(a, b)| a * b)
                .collect();
            let actual = ts.at.mul_vec(&product);
            let expected = correlate_exact(&basis(t, i), &basis(r, j));
            report.checked += 1;
            if actual != expected {
                report.failures.push(BasisFailure {
                    input_index: i,
                    kernel_index: j,
                    expected,
                    actual,
                });
            }
        }
    }
    report
}

fn basis(len: usize, k: usize) -> Vec<BigRational> {
    let mut v = vec![BigRational::zero(); len];
    v[k] = BigRational::one();
    v
}

/// Valid cross-correlation `y[i] = Σ_k x[i + k] · w[k]`.
fn correlate_exact(x: &[BigRational], w: &[BigRational]) -> Vec<BigRational> {
    (0..=x.len() - w.len())
        .map(|i| {
            w.iter()
                .enumerate()
                .fold(BigRational::zero(), |acc, (k, wk)| acc + &x[i + k] * wk)
        })
        .collect()
}
