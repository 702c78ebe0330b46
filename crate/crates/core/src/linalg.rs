//! Sparse linear systems for the Newton corrector: a CSR matrix, a Jacobi
//! preconditioned BiCGSTAB, and a banded LU with partial pivoting.

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl CsrMatrix {
    /// Builds from per-row `(column, value)` lists; duplicate columns are
    /// summed.
    pub fn from_rows(n: usize, rows: Vec<Vec<(usize, f64)>>) -> Self {
        assert_eq!(rows.len(), n);
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for mut row in rows {
            row.sort_by_key(|&(c, _)| c);
            let mut last = usize::MAX;
            for (c, v) in row {
                assert!(c < n, "column {c} out of range");
                if c == last {
                    *vals.last_mut().unwrap() += v;
                } else {
                    cols.push(c);
                    vals.push(v);
                    last = c;
                }
            }
            row_ptr.push(cols.len());
        }
        Self {
            n,
            row_ptr,
            cols,
            vals,
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[range.clone()].iter().copied().zip(self.vals[range].iter().copied())
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = self.row(i).map(|(c, v)| v * x[c]).sum();
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n)
            .map(|i| self.row(i).find(|&(c, _)| c == i).map_or(0.0, |(_, v)| v))
            .collect()
    }

    /// `(lower, upper)` bandwidths.
    pub fn bandwidths(&self) -> (usize, usize) {
        let mut kl = 0;
        let mut ku = 0;
        for i in 0..self.n {
            for (c, _) in self.row(i) {
                if c < i {
                    kl = kl.max(i - c);
                } else {
                    ku = ku.max(c - i);
                }
            }
        }
        (kl, ku)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[derive(Debug, Clone, Copy)]
pub struct KrylovOutcome {
    pub iterations: usize,
    pub relative_residual: f64,
}

/// BiCGSTAB with right Jacobi preconditioning, started from zero. Stops once
/// `|b - A x| <= tol |b|`.
pub fn bicgstab(
    a: &CsrMatrix,
    b: &[f64],
    tol: f64,
    max_iterations: usize,
) -> Result<(Vec<f64>, KrylovOutcome)> {
    let n = a.dim();
    let inv_diag: Vec<f64> = a
        .diagonal()
        .into_iter()
        .map(|d| if d != 0.0 { 1.0 / d } else { 1.0 })
        .collect();
    let precondition = |x: &[f64], out: &mut [f64]| {
        for ((o, xi), di) in out.iter_mut().zip(x).zip(&inv_diag) {
            *o = xi * di;
        }
    };

    let b_norm = norm(b);
    let mut x = vec![0.0; n];
    if b_norm == 0.0 {
        return Ok((
            x,
            KrylovOutcome {
                iterations: 0,
                relative_residual: 0.0,
            },
        ));
    }
    let mut r = b.to_vec();
    let r_hat = r.clone();
    let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut y = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut t = vec![0.0; n];

    for it in 1..=max_iterations {
        let rho_new = dot(&r_hat, &r);
        if rho_new == 0.0 || omega == 0.0 {
            return Err(Error::LinearSolver(format!("bicgstab breakdown at iteration {it}")));
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        precondition(&p, &mut y);
        a.matvec(&y, &mut v);
        let denom = dot(&r_hat, &v);
        if denom == 0.0 {
            return Err(Error::LinearSolver(format!("bicgstab breakdown at iteration {it}")));
        }
        alpha = rho / denom;
        for i in 0..n {
            x[i] += alpha * y[i];
            s[i] = r[i] - alpha * v[i];
        }
        let s_norm = norm(&s);
        if s_norm <= tol * b_norm {
            return Ok((
                x,
                KrylovOutcome {
                    iterations: it,
                    relative_residual: s_norm / b_norm,
                },
            ));
        }
        precondition(&s, &mut z);
        a.matvec(&z, &mut t);
        let tt = dot(&t, &t);
        omega = if tt > 0.0 { dot(&t, &s) / tt } else { 0.0 };
        for i in 0..n {
            x[i] += omega * z[i];
            r[i] = s[i] - omega * t[i];
        }
        let r_norm = norm(&r);
        if r_norm <= tol * b_norm {
            return Ok((
                x,
                KrylovOutcome {
                    iterations: it,
                    relative_residual: r_norm / b_norm,
                },
            ));
        }
    }
    Err(Error::LinearSolver(format!(
        "bicgstab did not reach {tol:e} in {max_iterations} iterations"
    )))
}

/// LU factors of a banded matrix with partial pivoting. Row `i` keeps the
/// columns `i - kl ..= i + kl + ku` to leave room for pivoting fill.
#[derive(Debug, Clone)]
pub struct BandedLu {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    data: Vec<f64>,
    pivots: Vec<usize>,
}

impl BandedLu {
    #[inline]
    fn slot(&self, i: usize, c: usize) -> usize {
        i * self.width + (c + self.kl - i)
    }

    pub fn factor(a: &CsrMatrix) -> Result<Self> {
        let n = a.dim();
        let (kl, ku) = a.bandwidths();
        let width = 2 * kl + ku + 1;
        let mut lu = Self {
            n,
            kl,
            ku,
            width,
            data: vec![0.0; n * width],
            pivots: vec![0; n],
        };
        for i in 0..n {
            for (c, v) in a.row(i) {
                let s = lu.slot(i, c);
                lu.data[s] = v;
            }
        }
        let scale = lu.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        for j in 0..n {
            let last_row = (j + kl).min(n - 1);
            let last_col = (j + kl + ku).min(n - 1);
            let mut p = j;
            let mut best = lu.data[lu.slot(j, j)].abs();
            for i in j + 1..=last_row {
                let cand = lu.data[lu.slot(i, j)].abs();
                if cand > best {
                    best = cand;
                    p = i;
                }
            }
            if best <= 1e-300 || best <= f64::EPSILON * 1e-4 * scale {
                return Err(Error::LinearSolver(format!("singular pivot in column {j}")));
            }
            lu.pivots[j] = p;
            if p != j {
                for c in j..=last_col {
                    let (sj, sp) = (lu.slot(j, c), lu.slot(p, c));
                    lu.data.swap(sj, sp);
                }
            }
            let pivot = lu.data[lu.slot(j, j)];
            for i in j + 1..=last_row {
                let sij = lu.slot(i, j);
                let factor = lu.data[sij] / pivot;
                lu.data[sij] = factor;
                if factor == 0.0 || last_col == j {
                    continue;
                }
                // Both row segments are contiguous and the target lies
                // after the pivot row.
                let len = last_col - j;
                let src = lu.slot(j, j + 1);
                let dst = lu.slot(i, j + 1);
                let (head, tail) = lu.data.split_at_mut(dst);
                for (d, s) in tail[..len].iter_mut().zip(&head[src..src + len]) {
                    *d -= factor * s;
                }
            }
        }
        Ok(lu)
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut x = b.to_vec();
        for j in 0..n {
            let p = self.pivots[j];
            if p != j {
                x.swap(j, p);
            }
            let last_row = (j + self.kl).min(n - 1);
            for i in j + 1..=last_row {
                x[i] -= self.data[self.slot(i, j)] * x[j];
            }
        }
        for i in (0..n).rev() {
            let last_col = (i + self.kl + self.ku).min(n - 1);
            let mut acc = x[i];
            for c in i + 1..=last_col {
                acc -= self.data[self.slot(i, c)] * x[c];
            }
            x[i] = acc / self.data[self.slot(i, i)];
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{rngs::StdRng, Rng, SeedableRng};

    fn random_banded(n: usize, kl: usize, ku: usize, seed: u64) -> CsrMatrix {
        let mut rng = StdRng::seed_from_u64(seed);
        let rows = (0..n)
            .map(|i| {
                let lo = i.saturating_sub(kl);
                let hi = (i + ku).min(n - 1);
                (lo..=hi)
                    .map(|c| {
                        let v: f64 = rng.gen_range(-1.0..1.0);
                        (c, if c == i { v + 0.2 } else { v })
                    })
                    .collect()
            })
            .collect();
        CsrMatrix::from_rows(n, rows)
    }

    fn residual(a: &CsrMatrix, x: &[f64], b: &[f64]) -> f64 {
        let mut ax = vec![0.0; b.len()];
        a.matvec(x, &mut ax);
        ax.iter().zip(b).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn csr_sums_duplicates() {
        let a = CsrMatrix::from_rows(2, vec![vec![(1, 1.0), (0, 2.0), (1, 3.0)], vec![(1, 5.0)]]);
        assert_eq!(a.nnz(), 3);
        assert_eq!(a.diagonal(), vec![2.0, 5.0]);
        let mut y = vec![0.0; 2];
        a.matvec(&[1.0, 1.0], &mut y);
        assert_eq!(y, vec![6.0, 5.0]);
        assert_eq!(a.bandwidths(), (0, 1));
    }

    #[test]
    fn banded_lu_needs_pivoting() {
        // Zero leading diagonal forces a row swap.
        let a = CsrMatrix::from_rows(
            3,
            vec![
                vec![(0, 0.0), (1, 2.0)],
                vec![(0, 1.0), (1, 1.0), (2, 1.0)],
                vec![(1, 3.0), (2, 1.0)],
            ],
        );
        let b = vec![2.0, 3.0, 4.0];
        let x = BandedLu::factor(&a).unwrap().solve(&b);
        assert!(residual(&a, &x, &b) < 1e-14);
    }

    #[test]
    fn banded_lu_random_systems() {
        for seed in 0..5 {
            let a = random_banded(60, 7, 4, seed);
            let b: Vec<f64> = (0..60).map(|i| (i as f64).sin()).collect();
            let x = BandedLu::factor(&a).unwrap().solve(&b);
            assert!(residual(&a, &x, &b) < 1e-9, "seed {seed}");
        }
    }

    #[test]
    fn banded_lu_rejects_singular() {
        let a = CsrMatrix::from_rows(2, vec![vec![(0, 1.0), (1, 2.0)], vec![(0, 2.0), (1, 4.0)]]);
        assert!(BandedLu::factor(&a).is_err());
    }

    #[test]
    fn bicgstab_on_diagonally_dominant_system() {
        let n = 200;
        let rows = (0..n)
            .map(|i| {
                let mut r = vec![(i, 4.0 + (i % 3) as f64)];
                if i > 0 {
                    r.push((i - 1, -1.0));
                }
                if i + 1 < n {
                    r.push((i + 1, -1.5));
                }
                r.push(((i + 17) % n, 0.3));
                r
            })
            .collect();
        let a = CsrMatrix::from_rows(n, rows);
        let b: Vec<f64> = (0..n).map(|i| 1.0 + (i as f64 * 0.1).cos()).collect();
        let (x, out) = bicgstab(&a, &b, 1e-12, 1000).unwrap();
        assert!(out.relative_residual <= 1e-12);
        assert!(residual(&a, &x, &b) < 1e-10);
    }

    #[test]
    fn bicgstab_zero_rhs() {
        let a = CsrMatrix::from_rows(2, vec![vec![(0, 1.0)], vec![(1, 1.0)]]);
        let (x, out) = bicgstab(&a, &[0.0, 0.0], 1e-10, 10).unwrap();
        assert_eq!(x, vec![0.0, 0.0]);
        assert_eq!(out.iterations, 0);
    }
}
