//! Pointwise matrix calculus for the special Lagrangian operator.
//!
//! Everything here acts on small dense symmetric matrices (dimension at most
//! [`MAX_DIM`]): the spectrum, the arctan-sum operator and its derivative,
//! elementary symmetric polynomials, the regularized geodesic operator in
//! determinant and sigma form, and the choice of phase branch.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Largest supported matrix dimension.
pub const MAX_DIM: usize = 8;
const PACKED_LEN: usize = MAX_DIM * (MAX_DIM + 1) / 2;
const MAX_SWEEPS: usize = 64;
const PIVOT_FLOOR: f64 = 1e-14;

#[inline]
fn packed_index(i: usize, j: usize) -> usize {
    let (lo, hi) = if i <= j { (i, j) } else { (j, i) };
    hi * (hi + 1) / 2 + lo
}

/// Dense real symmetric matrix stored as its upper triangle, so the two
/// off-diagonal copies can never disagree.
#[derive(Clone, Copy, PartialEq)]
pub struct SymmetricMatrix {
    dim: usize,
    packed: [f64; PACKED_LEN],
}

impl SymmetricMatrix {
    pub fn zeros(dim: usize) -> Self {
        assert!(
            (1..=MAX_DIM).contains(&dim),
            "matrix dimension {dim} outside 1..={MAX_DIM}"
        );
        Self {
            dim,
            packed: [0.0; PACKED_LEN],
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self::from_diagonal(&vec![1.0; dim])
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m.set(i, i, d);
        }
        m
    }

    /// Builds from `f(i, j)` evaluated on the upper triangle only.
    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(dim);
        for j in 0..dim {
            for i in 0..=j {
                m.packed[packed_index(i, j)] = f(i, j);
            }
        }
        m
    }

    /// Builds from full rows, rejecting ragged, oversized or asymmetric input.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.len();
        if dim == 0 || dim > MAX_DIM {
            return Err(Error::InvalidInput(format!(
                "matrix dimension {dim} outside 1..={MAX_DIM}"
            )));
        }
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::InvalidInput("matrix rows must be square".into()));
        }
        for i in 0..dim {
            for j in 0..i {
                if rows[i][j] != rows[j][i] {
                    return Err(Error::InvalidInput(format!(
                        "matrix not symmetric at ({i}, {j}): {} vs {}",
                        rows[i][j], rows[j][i]
                    )));
                }
            }
        }
        Ok(Self::from_fn(dim, |i, j| rows[i][j]))
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        debug_assert!(i < self.dim && j < self.dim);
        self.packed[packed_index(i, j)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        debug_assert!(i < self.dim && j < self.dim);
        self.packed[packed_index(i, j)] = value;
    }

    #[inline]
    pub fn add_to(&mut self, i: usize, j: usize, value: f64) {
        self.packed[packed_index(i, j)] += value;
    }

    fn active(&self) -> &[f64] {
        &self.packed[..self.dim * (self.dim + 1) / 2]
    }

    pub fn is_finite(&self) -> bool {
        self.active().iter().all(|v| v.is_finite())
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = *self;
        out.packed.iter_mut().for_each(|v| *v *= factor);
        out
    }

    pub fn plus(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim);
        let mut out = *self;
        for (a, b) in out.packed.iter_mut().zip(other.packed.iter()) {
            *a += b;
        }
        out
    }

    /// Frobenius pairing `sum_ij A_ij B_ij`.
    pub fn contract(&self, other: &Self) -> f64 {
        assert_eq!(self.dim, other.dim);
        let mut acc = 0.0;
        for j in 0..self.dim {
            for i in 0..j {
                acc += 2.0 * self.get(i, j) * other.get(i, j);
            }
            acc += self.get(j, j) * other.get(j, j);
        }
        acc
    }

    pub fn max_abs(&self) -> f64 {
        self.active().iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// The trailing `(dim-1)` block, dropping row and column 0.
    pub fn lower_block(&self) -> Self {
        Self::from_fn(self.dim - 1, |i, j| self.get(i + 1, j + 1))
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.dim)
            .map(|i| (0..self.dim).map(|j| self.get(i, j)).collect())
            .collect()
    }

    fn to_dense(&self) -> [[f64; MAX_DIM]; MAX_DIM] {
        let mut a = [[0.0; MAX_DIM]; MAX_DIM];
        for i in 0..self.dim {
            for j in 0..self.dim {
                a[i][j] = self.get(i, j);
            }
        }
        a
    }

    fn check_finite(&self) -> Result<()> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidInput("matrix has non-finite entries".into()))
        }
    }
}

impl fmt::Debug for SymmetricMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.to_rows()).finish()
    }
}

/// Eigenvalues in nondecreasing order and the matching orthonormal
/// eigenvectors (`vectors[k]` belongs to `values[k]`).
#[derive(Clone, Copy)]
pub(crate) struct Spectrum {
    pub dim: usize,
    pub values: [f64; MAX_DIM],
    pub vectors: [[f64; MAX_DIM]; MAX_DIM],
}

impl Spectrum {
    pub fn values(&self) -> &[f64] {
        &self.values[..self.dim]
    }
}

/// Cyclic Jacobi with a fixed (row-major) sweep order.
pub(crate) fn spectrum(a: &SymmetricMatrix) -> Result<Spectrum> {
    a.check_finite()?;
    let m = a.dim;
    let mut d = a.to_dense();
    let mut v = [[0.0; MAX_DIM]; MAX_DIM];
    for (i, row) in v.iter_mut().enumerate().take(m) {
        row[i] = 1.0;
    }
    let scale: f64 = (0..m)
        .flat_map(|i| (0..m).map(move |j| (i, j)))
        .map(|(i, j)| d[i][j] * d[i][j])
        .sum::<f64>()
        .sqrt();

    for _ in 0..MAX_SWEEPS {
        let off: f64 = (0..m)
            .flat_map(|p| (p + 1..m).map(move |q| (p, q)))
            .map(|(p, q)| d[p][q] * d[p][q])
            .sum::<f64>()
            .sqrt();
        if off <= 1e-17 * scale || off == 0.0 {
            break;
        }
        for p in 0..m {
            for q in p + 1..m {
                let apq = d[p][q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (d[q][q] - d[p][p]) / (2.0 * apq);
                let t = if theta.abs() > 1e150 {
                    0.5 / theta
                } else {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for row in d.iter_mut().take(m) {
                    let (dkp, dkq) = (row[p], row[q]);
                    row[p] = c * dkp - s * dkq;
                    row[q] = s * dkp + c * dkq;
                }
                for k in 0..m {
                    let (dpk, dqk) = (d[p][k], d[q][k]);
                    d[p][k] = c * dpk - s * dqk;
                    d[q][k] = s * dpk + c * dqk;
                }
                d[p][q] = 0.0;
                d[q][p] = 0.0;
                for row in v.iter_mut().take(m) {
                    let (vkp, vkq) = (row[p], row[q]);
                    row[p] = c * vkp - s * vkq;
                    row[q] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| d[i][i].total_cmp(&d[j][j]));
    let mut out = Spectrum {
        dim: m,
        values: [0.0; MAX_DIM],
        vectors: [[0.0; MAX_DIM]; MAX_DIM],
    };
    for (slot, &src) in order.iter().enumerate() {
        out.values[slot] = d[src][src];
        for k in 0..m {
            out.vectors[slot][k] = v[k][src];
        }
    }
    Ok(out)
}

/// Eigenvalues of `a` in nondecreasing order.
pub fn eigenvalues(a: &SymmetricMatrix) -> Result<Vec<f64>> {
    Ok(spectrum(a)?.values().to_vec())
}

/// `sum_i arctan(lambda_i(a))`, in `(-m pi/2, m pi/2)`.
pub fn arctan_sum(a: &SymmetricMatrix) -> Result<f64> {
    Ok(spectrum(a)?.values().iter().map(|l| l.atan()).sum())
}

/// Derivative of [`arctan_sum`] with respect to the matrix entries,
/// `(I + A^2)^{-1}`.
pub fn arctan_sum_gradient(a: &SymmetricMatrix) -> Result<SymmetricMatrix> {
    Ok(arctan_sum_jet(a)?.gradient)
}

/// Value, gradient and spectral extremes of the arctan-sum operator at one
/// matrix, sharing a single eigensolve.
#[derive(Debug, Clone, Copy)]
pub struct ArctanSumJet {
    pub value: f64,
    pub gradient: SymmetricMatrix,
    pub min_eigenvalue: f64,
    /// Smallest eigenvalue of the gradient, `1 / (1 + max lambda^2)`.
    pub min_gradient_eigenvalue: f64,
}

pub fn arctan_sum_jet(a: &SymmetricMatrix) -> Result<ArctanSumJet> {
    let spec = spectrum(a)?;
    let m = spec.dim;
    let weights: Vec<f64> = spec.values().iter().map(|l| 1.0 / (1.0 + l * l)).collect();
    let gradient = SymmetricMatrix::from_fn(m, |i, j| {
        (0..m)
            .map(|k| weights[k] * spec.vectors[k][i] * spec.vectors[k][j])
            .sum()
    });
    Ok(ArctanSumJet {
        value: spec.values().iter().map(|l| l.atan()).sum(),
        gradient,
        min_eigenvalue: spec.values[0],
        min_gradient_eigenvalue: weights.iter().cloned().fold(f64::INFINITY, f64::min),
    })
}

/// k-th elementary symmetric polynomial of `values`, expanded from the
/// product `prod_i (1 + x_i s)`.
pub fn elementary_symmetric(values: &[f64], k: usize) -> Result<f64> {
    if k > values.len() {
        return Err(Error::InvalidInput(format!(
            "sigma_{k} undefined for {} values",
            values.len()
        )));
    }
    Ok(elementary_symmetric_all(values)[k])
}

/// All of `sigma_0 ..= sigma_m` at once.
pub fn elementary_symmetric_all(values: &[f64]) -> Vec<f64> {
    let mut e = vec![0.0; values.len() + 1];
    e[0] = 1.0;
    for (count, &x) in values.iter().enumerate() {
        for j in (1..=count + 1).rev() {
            e[j] += x * e[j - 1];
        }
    }
    e
}

/// The phase branch: the calibration angle `theta` of the holomorphic volume
/// form and the constant right-hand side `big_theta = k pi + theta`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct PhaseBranch {
    pub n: usize,
    pub theta: f64,
    pub big_theta: f64,
}

impl PhaseBranch {
    pub fn new(n: usize, theta: f64, big_theta: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidInput("spatial dimension must be positive".into()));
        }
        if !(theta > -PI - 1e-12 && theta <= PI + 1e-12) {
            return Err(Error::InvalidInput(format!("theta {theta} outside (-pi, pi]")));
        }
        let k = (big_theta - theta) / PI;
        if (k - k.round()).abs() > 1e-9 {
            return Err(Error::InvalidInput(format!(
                "big_theta {big_theta} is not theta plus an integer multiple of pi"
            )));
        }
        let m = (n + 1) as f64;
        let lo = (m - 1.0) * FRAC_PI_2;
        let hi = (m + 1.0) * FRAC_PI_2;
        if big_theta < lo - 1e-12 || big_theta >= hi {
            return Err(Error::InvalidInput(format!(
                "big_theta {big_theta} outside the concave branch [{lo}, {hi})"
            )));
        }
        Ok(Self {
            n,
            theta,
            big_theta,
        })
    }

    pub fn cylinder_dim(&self) -> usize {
        self.n + 1
    }
}

/// The calibration angle chosen from `n mod 4`, with `big_theta = n pi / 2`.
pub fn select_branch(n: usize) -> Result<PhaseBranch> {
    if n == 0 {
        return Err(Error::InvalidInput("spatial dimension must be positive".into()));
    }
    let theta = match n % 4 {
        0 => 0.0,
        1 => FRAC_PI_2,
        2 => PI,
        _ => -FRAC_PI_2,
    };
    PhaseBranch::new(n, theta, n as f64 * FRAC_PI_2)
}

/// Lagrangian phase of a graph with spatial Hessian `hess_x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LagrangianPhase {
    /// `sum arctan lambda_i - theta` without any reduction; all admissibility
    /// inequalities are stated on this value.
    pub raw: f64,
    /// Representative of `raw` in `(-pi, pi]`.
    pub reduced: f64,
}

pub fn reduce_angle(angle: f64) -> f64 {
    let r = angle.rem_euclid(2.0 * PI);
    if r > PI {
        r - 2.0 * PI
    } else {
        r
    }
}

pub fn lagrangian_phase(hess_x: &SymmetricMatrix, theta: f64) -> Result<LagrangianPhase> {
    let raw = arctan_sum(hess_x)? - theta;
    Ok(LagrangianPhase {
        raw,
        reduced: reduce_angle(raw),
    })
}

/// Determinant by LU with partial pivoting on a row-major `m x m` buffer.
pub(crate) fn complex_determinant(a: &mut [Complex64], m: usize) -> Complex64 {
    let mut det = Complex64::new(1.0, 0.0);
    for col in 0..m {
        let pivot_row = (col..m)
            .max_by(|&r, &s| a[r * m + col].norm().total_cmp(&a[s * m + col].norm()))
            .unwrap();
        let pivot = a[pivot_row * m + col];
        if pivot.norm() < PIVOT_FLOOR {
            return Complex64::new(0.0, 0.0);
        }
        if pivot_row != col {
            for k in 0..m {
                a.swap(col * m + k, pivot_row * m + k);
            }
            det = -det;
        }
        det *= pivot;
        for r in col + 1..m {
            let factor = a[r * m + col] / pivot;
            if factor.norm() == 0.0 {
                continue;
            }
            for k in col..m {
                let sub = factor * a[col * m + k];
                a[r * m + k] -= sub;
            }
        }
    }
    det
}

fn check_operator_dims(grad_u_t: &[f64], hess_x: &SymmetricMatrix, branch: &PhaseBranch) -> Result<()> {
    let n = hess_x.dim();
    if grad_u_t.len() != n || branch.n != n {
        return Err(Error::InvalidInput(format!(
            "operator dimensions disagree: gradient {}, hessian {}, branch {}",
            grad_u_t.len(),
            n,
            branch.n
        )));
    }
    Ok(())
}

/// `Im(e^{-i theta} det M)` with the complex block matrix
/// `M = [[tau + i u_tt, i grad_u_t], [i grad_u_t^T, I + i hess_x]]`.
pub fn geodesic_operator_det(
    u_tt: f64,
    grad_u_t: &[f64],
    hess_x: &SymmetricMatrix,
    tau: f64,
    branch: &PhaseBranch,
) -> Result<f64> {
    check_operator_dims(grad_u_t, hess_x, branch)?;
    let n = hess_x.dim();
    let m = n + 1;
    let i = Complex64::new(0.0, 1.0);
    let mut a = vec![Complex64::new(0.0, 0.0); m * m];
    a[0] = Complex64::new(tau, u_tt);
    for k in 0..n {
        a[k + 1] = i * grad_u_t[k];
        a[(k + 1) * m] = i * grad_u_t[k];
        for l in 0..n {
            let delta = if k == l { 1.0 } else { 0.0 };
            a[(k + 1) * m + l + 1] = Complex64::new(delta, hess_x.get(k, l));
        }
    }
    let det = complex_determinant(&mut a, m);
    Ok((Complex64::from_polar(1.0, -branch.theta) * det).im)
}

/// `Im(e^{-i theta} det(I + i A))` expanded through elementary symmetric
/// polynomials of the eigenvalues of `A`.
pub fn calibrated_sigma_sum(a: &SymmetricMatrix, theta: f64) -> Result<f64> {
    let sigma = elementary_symmetric_all(spectrum(a)?.values());
    let (sin, cos) = theta.sin_cos();
    let mut odd = 0.0;
    let mut even = 0.0;
    for (k, s) in sigma.iter().enumerate() {
        let sign = if (k / 2) % 2 == 0 { 1.0 } else { -1.0 };
        if k % 2 == 1 {
            odd += sign * s;
        } else {
            even += sign * s;
        }
    }
    Ok(cos * odd - sin * even)
}

/// Same operator as [`geodesic_operator_det`], evaluated as the sigma-k
/// combination of the full space-time Hessian minus `(1 - tau)` times that of
/// the spatial Hessian.
pub fn geodesic_operator_sigma(
    u_tt: f64,
    grad_u_t: &[f64],
    hess_x: &SymmetricMatrix,
    tau: f64,
    branch: &PhaseBranch,
) -> Result<f64> {
    check_operator_dims(grad_u_t, hess_x, branch)?;
    let n = hess_x.dim();
    let full = SymmetricMatrix::from_fn(n + 1, |i, j| match (i, j) {
        (0, 0) => u_tt,
        (0, j) => grad_u_t[j - 1],
        (i, j) => hess_x.get(i - 1, j - 1),
    });
    Ok(calibrated_sigma_sum(&full, branch.theta)?
        - (1.0 - tau) * calibrated_sigma_sum(hess_x, branch.theta)?)
}
