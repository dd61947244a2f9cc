//! Dense complex linear algebra and scalar optimization helpers.

use std::fmt;
use std::ops::{Add, Index, IndexMut, Mul, Neg, Sub};

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::NumericsError;

pub type C64 = Complex64;

/// Relative tolerance used when checking that a matrix is Hermitian.
pub const HERMITIAN_TOL: f64 = 1e-12;

const GRID_POINTS: usize = 1001;
const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Dense complex matrix.
#[derive(Clone, PartialEq)]
pub struct CMatrix(DMatrix<C64>);

impl CMatrix {
    /// Builds a matrix from row-major entries.
    pub fn from_row_major(rows: usize, cols: usize, data: &[C64]) -> Self {
        assert_eq!(data.len(), rows * cols, "entry count must equal rows*cols");
        CMatrix(DMatrix::from_row_slice(rows, cols, data))
    }

    pub fn from_real_rows(rows: &[&[f64]]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        let data: Vec<C64> = rows
            .iter()
            .flat_map(|row| {
                assert_eq!(row.len(), c, "ragged rows");
                row.iter().map(|&x| C64::new(x, 0.0))
            })
            .collect();
        Self::from_row_major(r, c, &data)
    }

    pub fn from_rows(rows: &[Vec<C64>]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        let data: Vec<C64> = rows
            .iter()
            .flat_map(|row| {
                assert_eq!(row.len(), c, "ragged rows");
                row.iter().copied()
            })
            .collect();
        Self::from_row_major(r, c, &data)
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        CMatrix(DMatrix::zeros(rows, cols))
    }

    pub fn identity(n: usize) -> Self {
        CMatrix(DMatrix::identity(n, n))
    }

    pub fn diag_real(d: &[f64]) -> Self {
        let mut m = Self::zeros(d.len(), d.len());
        for (i, &x) in d.iter().enumerate() {
            m[(i, i)] = C64::new(x, 0.0);
        }
        m
    }

    /// Column vector from complex entries.
    pub fn column(v: &[C64]) -> Self {
        Self::from_row_major(v.len(), 1, v)
    }

    /// Row vector from complex entries.
    pub fn row_vector(v: &[C64]) -> Self {
        Self::from_row_major(1, v.len(), v)
    }

    pub fn from_nalgebra(m: DMatrix<C64>) -> Self {
        CMatrix(m)
    }

    pub fn as_nalgebra(&self) -> &DMatrix<C64> {
        &self.0
    }

    pub fn rows(&self) -> usize {
        self.0.nrows()
    }

    pub fn cols(&self) -> usize {
        self.0.ncols()
    }

    pub fn is_square(&self) -> bool {
        self.rows() == self.cols()
    }

    /// Row `i` as a 1×cols matrix.
    pub fn row(&self, i: usize) -> CMatrix {
        CMatrix(self.0.rows(i, 1).into_owned())
    }

    /// Column `j` as a rows×1 matrix.
    pub fn col(&self, j: usize) -> CMatrix {
        CMatrix(self.0.columns(j, 1).into_owned())
    }

    pub fn adjoint(&self) -> CMatrix {
        CMatrix(self.0.adjoint())
    }

    pub fn transpose(&self) -> CMatrix {
        CMatrix(self.0.transpose())
    }

    pub fn trace(&self) -> C64 {
        self.0.trace()
    }

    pub fn det(&self) -> C64 {
        self.0.clone().determinant()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.0.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn scale(&self, s: f64) -> CMatrix {
        CMatrix(self.0.map(|z| z * s))
    }

    pub fn scale_c(&self, s: C64) -> CMatrix {
        CMatrix(self.0.map(|z| z * s))
    }

    /// Elementwise largest |A - A†|, relative to max(1, max|A|).
    pub fn hermitian_deviation(&self) -> f64 {
        if !self.is_square() {
            return f64::INFINITY;
        }
        let n = self.rows();
        let mut dev: f64 = 0.0;
        for i in 0..n {
            for j in i..n {
                dev = dev.max((self[(i, j)] - self[(j, i)].conj()).norm());
            }
        }
        dev / self.max_abs().max(1.0)
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermitian_deviation() <= HERMITIAN_TOL
    }

    /// (A + A†)/2.
    pub fn hermitian_part(&self) -> CMatrix {
        CMatrix((&self.0 + self.0.adjoint()) * C64::new(0.5, 0.0))
    }

    /// v v† for a column vector `v`.
    pub fn outer(v: &CMatrix) -> CMatrix {
        v * &v.adjoint()
    }

    /// Real part of `x A x†` for a row vector `x`.
    pub fn quad_form_row(x: &CMatrix, a: &CMatrix) -> f64 {
        (x * a * x.adjoint())[(0, 0)].re
    }

    /// Entries in row-major order.
    pub fn to_row_major(&self) -> Vec<C64> {
        let mut out = Vec::with_capacity(self.rows() * self.cols());
        for i in 0..self.rows() {
            for j in 0..self.cols() {
                out.push(self[(i, j)]);
            }
        }
        out
    }

    pub fn to_pairs(&self) -> Vec<Vec<[f64; 2]>> {
        (0..self.rows()).map(|i| (0..self.cols()).map(|j| [self[(i, j)].re, self[(i, j)].im]).collect()).collect()
    }

    pub fn from_pairs(rows: &[Vec<[f64; 2]>]) -> Result<CMatrix, String> {
        if rows.is_empty() {
            return Err("matrix has no rows".into());
        }
        let c = rows[0].len();
        if c == 0 {
            return Err("matrix has empty rows".into());
        }
        if let Some(i) = rows.iter().position(|r| r.len() != c) {
            return Err(format!("row {i} has {} entries, expected {c}", rows[i].len()));
        }
        let data: Vec<C64> = rows.iter().flatten().map(|p| C64::new(p[0], p[1])).collect();
        Ok(CMatrix::from_row_major(rows.len(), c, &data))
    }
}

impl fmt::Debug for CMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CMatrix{:?}", self.to_pairs())
    }
}

impl Index<(usize, usize)> for CMatrix {
    type Output = C64;
    fn index(&self, idx: (usize, usize)) -> &C64 {
        &self.0[idx]
    }
}

impl IndexMut<(usize, usize)> for CMatrix {
    fn index_mut(&mut self, idx: (usize, usize)) -> &mut C64 {
        &mut self.0[idx]
    }
}

macro_rules! binop {
    ($trait:ident, $method:ident, $op:tt) => {
        impl $trait<&CMatrix> for &CMatrix {
            type Output = CMatrix;
            fn $method(self, rhs: &CMatrix) -> CMatrix {
                CMatrix(&self.0 $op &rhs.0)
            }
        }
        impl $trait<CMatrix> for CMatrix {
            type Output = CMatrix;
            fn $method(self, rhs: CMatrix) -> CMatrix {
                CMatrix(self.0 $op rhs.0)
            }
        }
        impl $trait<&CMatrix> for CMatrix {
            type Output = CMatrix;
            fn $method(self, rhs: &CMatrix) -> CMatrix {
                CMatrix(self.0 $op &rhs.0)
            }
        }
        impl $trait<CMatrix> for &CMatrix {
            type Output = CMatrix;
            fn $method(self, rhs: CMatrix) -> CMatrix {
                CMatrix(&self.0 $op rhs.0)
            }
        }
    };
}

binop!(Add, add, +);
binop!(Sub, sub, -);
binop!(Mul, mul, *);

impl Neg for CMatrix {
    type Output = CMatrix;
    fn neg(self) -> CMatrix {
        CMatrix(-self.0)
    }
}

impl Serialize for CMatrix {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.to_pairs().serialize(s)
    }
}

impl<'de> Deserialize<'de> for CMatrix {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let rows = Vec::<Vec<[f64; 2]>>::deserialize(d)?;
        CMatrix::from_pairs(&rows).map_err(serde::de::Error::custom)
    }
}

/// `A = basis† · diag(values) · basis`, eigenvalues ascending.
#[derive(Debug, Clone)]
pub struct EigDecomposition {
    pub values: Vec<f64>,
    pub basis: CMatrix,
}

impl EigDecomposition {
    pub fn reconstruct(&self) -> CMatrix {
        &self.basis.adjoint() * &CMatrix::diag_real(&self.values) * &self.basis
    }
}

pub fn eig_hermitian(a: &CMatrix) -> Result<EigDecomposition, NumericsError> {
    if !a.is_square() {
        return Err(NumericsError::NotSquare { rows: a.rows(), cols: a.cols() });
    }
    if !a.is_finite() {
        return Err(NumericsError::NonFinite);
    }
    let deviation = a.hermitian_deviation();
    if deviation > HERMITIAN_TOL {
        return Err(NumericsError::NotHermitian { deviation });
    }
    let eig = a.hermitian_part().0.symmetric_eigen();
    let n = a.rows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut basis = CMatrix::zeros(n, n);
    for (r, &i) in order.iter().enumerate() {
        for k in 0..n {
            basis[(r, k)] = eig.eigenvectors[(k, i)].conj();
        }
    }
    Ok(EigDecomposition { values, basis })
}

/// `A = u · diag(singular_values) · v†`, singular values descending (thin form).
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: CMatrix,
    pub singular_values: Vec<f64>,
    pub v: CMatrix,
}

impl Svd {
    pub fn reconstruct(&self) -> CMatrix {
        &self.u * &CMatrix::diag_real(&self.singular_values) * self.v.adjoint()
    }
}

pub fn svd(a: &CMatrix) -> Result<Svd, NumericsError> {
    if !a.is_finite() {
        return Err(NumericsError::NonFinite);
    }
    let s = a.0.clone().svd(true, true);
    let u = s.u.expect("u requested");
    let v = s.v_t.expect("v_t requested").adjoint();
    let k = s.singular_values.len();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&i, &j| s.singular_values[j].total_cmp(&s.singular_values[i]));
    let mut us = CMatrix::zeros(u.nrows(), k);
    let mut vs = CMatrix::zeros(v.nrows(), k);
    for (c, &i) in order.iter().enumerate() {
        for r in 0..u.nrows() {
            us[(r, c)] = u[(r, i)];
        }
        for r in 0..v.nrows() {
            vs[(r, c)] = v[(r, i)];
        }
    }
    Ok(Svd { u: us, singular_values: order.iter().map(|&i| s.singular_values[i]).collect(), v: vs })
}

/// Hermitian PSD square root pair `(A^{1/2}, A^{-1/2})`; eigenvalues are clamped at `floor`.
pub fn hermitian_sqrt_pair(a: &CMatrix, floor: f64) -> Result<(CMatrix, CMatrix), NumericsError> {
    let e = eig_hermitian(a)?;
    let s: Vec<f64> = e.values.iter().map(|&l| l.max(floor).sqrt()).collect();
    let si: Vec<f64> = s.iter().map(|&x| 1.0 / x).collect();
    let bt = e.basis.adjoint();
    Ok((&bt * &CMatrix::diag_real(&s) * &e.basis, &bt * &CMatrix::diag_real(&si) * &e.basis))
}

/// log2 of the (real) determinant of a Hermitian positive definite matrix.
pub fn log2_det(a: &CMatrix) -> f64 {
    let d =
        if a.rows() == 2 && a.cols() == 2 { (a[(0, 0)] * a[(1, 1)] - a[(0, 1)] * a[(1, 0)]).re } else { a.det().re };
    d.log2()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WaterfillResult {
    pub powers: Vec<f64>,
    pub level: f64,
}

/// Maximizes Σ log2(1 + g_i p_i) subject to Σ p_i = budget, p_i ≥ 0.
pub fn waterfill(gains: &[f64], budget: f64) -> Result<WaterfillResult, NumericsError> {
    if gains.is_empty() {
        return Err(NumericsError::EmptyGains);
    }
    if let Some((index, &value)) = gains.iter().enumerate().find(|(_, g)| !(g.is_finite() && **g > 0.0)) {
        return Err(NumericsError::BadGain { index, value });
    }
    if !(budget.is_finite() && budget >= 0.0) {
        return Err(NumericsError::BadBudget(budget));
    }
    Ok(waterfill_unchecked(gains, budget))
}

/// Same as [`waterfill`] but zero gains simply receive no power.
pub(crate) fn waterfill_nonneg(gains: &[f64], budget: f64) -> WaterfillResult {
    let positive: Vec<usize> = (0..gains.len()).filter(|&i| gains[i] > 1e-300).collect();
    let mut powers = vec![0.0; gains.len()];
    if positive.is_empty() {
        return WaterfillResult { powers, level: 0.0 };
    }
    let sub: Vec<f64> = positive.iter().map(|&i| gains[i]).collect();
    let r = waterfill_unchecked(&sub, budget.max(0.0));
    for (k, &i) in positive.iter().enumerate() {
        powers[i] = r.powers[k];
    }
    WaterfillResult { powers, level: r.level }
}

fn waterfill_unchecked(gains: &[f64], budget: f64) -> WaterfillResult {
    let mut order: Vec<usize> = (0..gains.len()).collect();
    order.sort_by(|&i, &j| gains[j].total_cmp(&gains[i]));
    let mut level = 1.0 / gains[order[0]];
    let mut active = 1;
    let mut inv_sum = 0.0;
    for k in 1..=order.len() {
        inv_sum += 1.0 / gains[order[k - 1]];
        let l = (budget + inv_sum) / k as f64;
        if l > 1.0 / gains[order[k - 1]] || k == 1 {
            level = l;
            active = k;
        } else {
            break;
        }
    }
    let mut powers = vec![0.0; gains.len()];
    for &i in order.iter().take(active) {
        powers[i] = (level - 1.0 / gains[i]).max(0.0);
    }
    WaterfillResult { powers, level }
}

fn check_interval(lo: f64, hi: f64) -> Result<(), NumericsError> {
    if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
        return Err(NumericsError::BadInterval { lo, hi });
    }
    Ok(())
}

/// Golden-section maximization, assuming `f` is unimodal on `[lo, hi]`.
pub fn golden_max<F: FnMut(f64) -> f64>(mut f: F, lo: f64, hi: f64, tol: f64) -> (f64, f64) {
    let (mut a, mut b) = (lo, hi);
    let mut x1 = b - INV_PHI * (b - a);
    let mut x2 = a + INV_PHI * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    let mut best = if f1 >= f2 { (x1, f1) } else { (x2, f2) };
    let tol = tol.max(1e-15);
    while b - a > tol {
        if f1 >= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - INV_PHI * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INV_PHI * (b - a);
            f2 = f(x2);
        }
        for (x, fx) in [(x1, f1), (x2, f2)] {
            if fx > best.1 {
                best = (x, fx);
            }
        }
    }
    best
}

/// Grid scan with 1001 points followed by golden-section refinement around the best cell.
///
/// Returns `(argmax, max)`.
pub fn maximize_1d<F: FnMut(f64) -> f64>(mut f: F, lo: f64, hi: f64, tol: f64) -> Result<(f64, f64), NumericsError> {
    check_interval(lo, hi)?;
    if hi == lo {
        let v = f(lo);
        return if v.is_finite() { Ok((lo, v)) } else { Err(NumericsError::NonFiniteObjective { x: lo }) };
    }
    let step = (hi - lo) / (GRID_POINTS - 1) as f64;
    let mut best = (lo, f64::NEG_INFINITY);
    let mut best_i = 0;
    for i in 0..GRID_POINTS {
        let x = if i == GRID_POINTS - 1 { hi } else { lo + step * i as f64 };
        let v = f(x);
        if !v.is_finite() {
            return Err(NumericsError::NonFiniteObjective { x });
        }
        if v > best.1 {
            best = (x, v);
            best_i = i;
        }
    }
    let a = lo + step * best_i.saturating_sub(1) as f64;
    let b = (lo + step * (best_i + 1) as f64).min(hi);
    let mut bad = None;
    let refined = golden_max(
        |x| {
            let v = f(x);
            if !v.is_finite() && bad.is_none() {
                bad = Some(x);
            }
            v
        },
        a,
        b,
        tol,
    );
    if let Some(x) = bad {
        return Err(NumericsError::NonFiniteObjective { x });
    }
    if refined.1 > best.1 {
        best = refined;
    }
    Ok(best)
}

/// Compass (pattern) search maximizing `f`; `None` marks an infeasible point.
///
/// Moves along ± each coordinate and the diagonals, halving the step on failure.
pub fn compass_search<F: FnMut(&[f64]) -> Option<f64>>(
    mut f: F,
    x0: &[f64],
    f0: f64,
    step: f64,
    min_step: f64,
    max_evals: usize,
) -> (Vec<f64>, f64) {
    let n = x0.len();
    let mut dirs: Vec<Vec<f64>> = Vec::new();
    for i in 0..n {
        for s in [1.0, -1.0] {
            let mut d = vec![0.0; n];
            d[i] = s;
            dirs.push(d);
        }
    }
    if n == 2 {
        let r = std::f64::consts::FRAC_1_SQRT_2;
        for (a, b) in [(r, r), (r, -r), (-r, r), (-r, -r)] {
            dirs.push(vec![a, b]);
        }
    }
    let mut x = x0.to_vec();
    let mut fx = f0;
    let mut h = step;
    let mut evals = 0;
    while h > min_step && evals < max_evals {
        let mut improved = false;
        for d in &dirs {
            let y: Vec<f64> = x.iter().zip(d).map(|(xi, di)| xi + h * di).collect();
            evals += 1;
            if let Some(fy) = f(&y) {
                if fy > fx {
                    x = y;
                    fx = fy;
                    improved = true;
                    break;
                }
            }
        }
        if !improved {
            h *= 0.5;
        }
    }
    (x, fx)
}

/// Nelder-Mead maximization; `None` from `f` marks an infeasible point. Returns the best vertex.
pub fn nelder_mead_max<F: FnMut(&[f64]) -> Option<f64>>(
    mut f: F,
    x0: &[f64],
    f0: f64,
    step: f64,
    tol: f64,
    max_evals: usize,
) -> (Vec<f64>, f64) {
    let n = x0.len();
    let mut eval = |x: &[f64]| f(x).unwrap_or(f64::NEG_INFINITY);
    let mut simplex: Vec<(Vec<f64>, f64)> = vec![(x0.to_vec(), f0)];
    for i in 0..n {
        let mut x = x0.to_vec();
        x[i] += step;
        let mut fx = eval(&x);
        if fx == f64::NEG_INFINITY {
            x[i] = x0[i] - step;
            fx = eval(&x);
        }
        simplex.push((x, fx));
    }
    let mut evals = n;
    while evals < max_evals {
        simplex.sort_by(|a, b| b.1.total_cmp(&a.1));
        let (best, worst) = (simplex[0].1, simplex[n].1);
        let spread = simplex
            .iter()
            .skip(1)
            .map(|(x, _)| x.iter().zip(&simplex[0].0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
        if best.is_finite() && worst.is_finite() && best - worst <= tol && spread.fold(0.0, f64::max) <= tol {
            break;
        }
        let mut c = vec![0.0; n];
        for (x, _) in &simplex[..n] {
            for (ci, xi) in c.iter_mut().zip(x) {
                *ci += xi / n as f64;
            }
        }
        let toward = |t: f64, w: &[f64]| -> Vec<f64> { c.iter().zip(w).map(|(ci, wi)| ci + t * (wi - ci)).collect() };
        let xr = toward(-1.0, &simplex[n].0);
        let fr = eval(&xr);
        evals += 1;
        if fr > simplex[0].1 {
            let xe = toward(-2.0, &simplex[n].0);
            let fe = eval(&xe);
            evals += 1;
            simplex[n] = if fe > fr { (xe, fe) } else { (xr, fr) };
        } else if fr > simplex[n - 1].1 {
            simplex[n] = (xr, fr);
        } else {
            let (xk, fk) = if fr > worst {
                let xk = toward(-0.5, &simplex[n].0);
                (xk.clone(), eval(&xk))
            } else {
                let xk = toward(0.5, &simplex[n].0);
                (xk.clone(), eval(&xk))
            };
            evals += 1;
            if fk > worst.max(fr) {
                simplex[n] = (xk, fk);
            } else {
                let x_best = simplex[0].0.clone();
                for v in simplex.iter_mut().skip(1) {
                    let x: Vec<f64> = x_best.iter().zip(&v.0).map(|(b, xi)| b + 0.5 * (xi - b)).collect();
                    let fx = eval(&x);
                    *v = (x, fx);
                }
                evals += n;
            }
        }
    }
    simplex.sort_by(|a, b| b.1.total_cmp(&a.1));
    let (x, fx) = simplex.swap_remove(0);
    (x, fx)
}

/// `n` evenly spaced points from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![lo],
        _ => (0..n).map(|i| if i == n - 1 { hi } else { lo + (hi - lo) * i as f64 / (n - 1) as f64 }).collect(),
    }
}
