//! Grids on the torus and the time cylinder, boundary potentials, the
//! interpolating potential and its Hessian field, and the finite-difference
//! Hessian of the unknown.
//!
//! All cylinder data live in rescaled time `t in [0, 1]`; the regularization
//! parameter only enters through the `1/tau` and `1/sqrt(tau)` factors applied
//! when a space-time Hessian is assembled.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Endpoint, Error, Result};
use crate::spectral::SymmetricMatrix;

/// Largest supported torus dimension.
pub const MAX_SPATIAL_DIM: usize = 3;
const TWO_PI: f64 = 2.0 * PI;

/// Uniform grid on the unit torus `R^n / Z^n`, axis 0 varying fastest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct TorusGrid {
    n: usize,
    points: usize,
}

impl TorusGrid {
    pub fn new(n: usize, points: usize) -> Result<Self> {
        if !(1..=MAX_SPATIAL_DIM).contains(&n) {
            return Err(Error::Config(format!(
                "spatial dimension {n} outside 1..={MAX_SPATIAL_DIM}"
            )));
        }
        if points < 4 {
            return Err(Error::Config(format!(
                "need at least 4 points per axis, got {points}"
            )));
        }
        Ok(Self { n, points })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn points(&self) -> usize {
        self.points
    }

    pub fn spacing(&self) -> f64 {
        1.0 / self.points as f64
    }

    pub fn node_count(&self) -> usize {
        self.points.pow(self.n as u32)
    }

    #[inline]
    fn stride(&self, axis: usize) -> usize {
        self.points.pow(axis as u32)
    }

    /// Integer coordinate of `node` along `axis`.
    #[inline]
    pub fn coordinate(&self, node: usize, axis: usize) -> usize {
        (node / self.stride(axis)) % self.points
    }

    pub fn position(&self, node: usize) -> Vec<f64> {
        (0..self.n)
            .map(|axis| self.coordinate(node, axis) as f64 * self.spacing())
            .collect()
    }

    /// Neighbor of `node` displaced by `offset` cells along `axis`, wrapping.
    #[inline]
    pub fn shift(&self, node: usize, axis: usize, offset: isize) -> usize {
        let c = self.coordinate(node, axis) as isize;
        let moved = (c + offset).rem_euclid(self.points as isize);
        (node as isize + (moved - c) * self.stride(axis) as isize) as usize
    }
}

/// `[0, 1] x T^n` in rescaled time, with Dirichlet faces at `t = 0` and
/// `t = 1`. Nodes are numbered time-major, so the interior nodes form one
/// contiguous block.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CylinderGrid {
    space: TorusGrid,
    time_points: usize,
    tau: f64,
}

impl CylinderGrid {
    pub fn new(space: TorusGrid, time_points: usize, tau: f64) -> Result<Self> {
        if time_points < 3 {
            return Err(Error::Config(format!(
                "need at least 3 time points, got {time_points}"
            )));
        }
        if !(tau > 0.0 && tau <= 1.0) {
            return Err(Error::InvalidInput(format!("tau {tau} outside (0, 1]")));
        }
        Ok(Self {
            space,
            time_points,
            tau,
        })
    }

    pub fn with_tau(&self, tau: f64) -> Result<Self> {
        Self::new(self.space, self.time_points, tau)
    }

    pub fn space(&self) -> &TorusGrid {
        &self.space
    }

    pub fn n(&self) -> usize {
        self.space.n
    }

    pub fn time_points(&self) -> usize {
        self.time_points
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn time_step(&self) -> f64 {
        1.0 / (self.time_points - 1) as f64
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.time_step()
    }

    pub fn slice_len(&self) -> usize {
        self.space.node_count()
    }

    pub fn node_count(&self) -> usize {
        self.time_points * self.slice_len()
    }

    pub fn interior_count(&self) -> usize {
        (self.time_points - 2) * self.slice_len()
    }

    #[inline]
    pub fn node(&self, k: usize, j: usize) -> usize {
        k * self.slice_len() + j
    }

    /// `(time index, spatial node)` of a cylinder node.
    #[inline]
    pub fn split(&self, node: usize) -> (usize, usize) {
        (node / self.slice_len(), node % self.slice_len())
    }

    /// Cylinder node of the `i`-th interior unknown.
    #[inline]
    pub fn interior_node(&self, i: usize) -> usize {
        self.slice_len() + i
    }

    pub fn is_face(&self, node: usize) -> bool {
        let (k, _) = self.split(node);
        k == 0 || k + 1 == self.time_points
    }

    /// Same nodes, ignoring `tau`.
    pub fn same_nodes(&self, other: &Self) -> bool {
        self.space == other.space && self.time_points == other.time_points
    }
}

/// One Fourier term `a cos(2 pi k.x) + b sin(2 pi k.x)` of a periodic potential.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrigMode {
    pub wave: Vec<i64>,
    pub cos_amp: f64,
    pub sin_amp: f64,
}

impl TrigMode {
    fn phase(&self, x: &[f64]) -> f64 {
        TWO_PI * self.wave.iter().zip(x).map(|(&k, &xi)| k as f64 * xi).sum::<f64>()
    }
}

/// Boundary potential `u(x) = x^T Q x / 2 + sum of trig modes`.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialSpec {
    quadratic: SymmetricMatrix,
    modes: Vec<TrigMode>,
}

impl PotentialSpec {
    pub fn new(quadratic: SymmetricMatrix, modes: Vec<TrigMode>) -> Result<Self> {
        let n = quadratic.dim();
        if n > MAX_SPATIAL_DIM {
            return Err(Error::Config(format!(
                "potential dimension {n} exceeds {MAX_SPATIAL_DIM}"
            )));
        }
        if !quadratic.is_finite() {
            return Err(Error::InvalidInput("quadratic part is not finite".into()));
        }
        for mode in &modes {
            if mode.wave.len() != n {
                return Err(Error::Config(format!(
                    "wave vector {:?} does not have {n} components",
                    mode.wave
                )));
            }
            if !(mode.cos_amp.is_finite() && mode.sin_amp.is_finite()) {
                return Err(Error::InvalidInput("mode amplitude is not finite".into()));
            }
        }
        Ok(Self { quadratic, modes })
    }

    pub fn quadratic_only(quadratic: SymmetricMatrix) -> Self {
        Self {
            quadratic,
            modes: Vec::new(),
        }
    }

    pub fn n(&self) -> usize {
        self.quadratic.dim()
    }

    pub fn quadratic(&self) -> &SymmetricMatrix {
        &self.quadratic
    }

    pub fn modes(&self) -> &[TrigMode] {
        &self.modes
    }

    pub fn negated(&self) -> Self {
        Self {
            quadratic: self.quadratic.scaled(-1.0),
            modes: self
                .modes
                .iter()
                .map(|m| TrigMode {
                    wave: m.wave.clone(),
                    cos_amp: -m.cos_amp,
                    sin_amp: -m.sin_amp,
                })
                .collect(),
        }
    }

    /// The periodic part alone.
    pub fn periodic_value_at(&self, x: &[f64]) -> f64 {
        self.modes
            .iter()
            .map(|m| {
                let (s, c) = m.phase(x).sin_cos();
                m.cos_amp * c + m.sin_amp * s
            })
            .sum()
    }

    pub fn value_at(&self, x: &[f64]) -> f64 {
        let n = self.n();
        let mut quad = 0.0;
        for i in 0..n {
            for j in 0..n {
                quad += x[i] * self.quadratic.get(i, j) * x[j];
            }
        }
        0.5 * quad + self.periodic_value_at(x)
    }

    pub fn gradient_at(&self, x: &[f64]) -> Vec<f64> {
        let n = self.n();
        let mut g: Vec<f64> = (0..n)
            .map(|i| (0..n).map(|j| self.quadratic.get(i, j) * x[j]).sum())
            .collect();
        for m in &self.modes {
            let (s, c) = m.phase(x).sin_cos();
            let amp = TWO_PI * (-m.cos_amp * s + m.sin_amp * c);
            for (gi, &k) in g.iter_mut().zip(&m.wave) {
                *gi += amp * k as f64;
            }
        }
        g
    }

    pub fn hessian_at(&self, x: &[f64]) -> SymmetricMatrix {
        let mut h = self.quadratic;
        for m in &self.modes {
            let (s, c) = m.phase(x).sin_cos();
            let amp = -TWO_PI * TWO_PI * (m.cos_amp * c + m.sin_amp * s);
            for i in 0..self.n() {
                for j in i..self.n() {
                    h.add_to(i, j, amp * (m.wave[i] * m.wave[j]) as f64);
                }
            }
        }
        h
    }
}

/// Exact derivatives of a potential at every torus node.
#[derive(Debug, Clone)]
pub struct SampledPotential {
    pub hessians: Vec<SymmetricMatrix>,
    pub gradients: Vec<Vec<f64>>,
}

pub fn sample_potential(spec: &PotentialSpec, grid: &TorusGrid) -> Result<SampledPotential> {
    if spec.n() != grid.n() {
        return Err(Error::InvalidInput(format!(
            "potential is {}-dimensional but the grid is {}-dimensional",
            spec.n(),
            grid.n()
        )));
    }
    let (hessians, gradients) = (0..grid.node_count())
        .map(|j| {
            let x = grid.position(j);
            (spec.hessian_at(&x), spec.gradient_at(&x))
        })
        .unzip();
    Ok(SampledPotential {
        hessians,
        gradients,
    })
}

/// The two endpoint potentials. Their quadratic parts must agree, which is
/// what makes `u1 - u0` a function on the torus.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryPair {
    pub u0: PotentialSpec,
    pub u1: PotentialSpec,
}

impl BoundaryPair {
    pub fn new(u0: PotentialSpec, u1: PotentialSpec) -> Result<Self> {
        if u0.n() != u1.n() {
            return Err(Error::InvalidInput("endpoint dimensions differ".into()));
        }
        if u0.quadratic != u1.quadratic {
            return Err(Error::InvalidInput(
                "endpoint quadratic parts differ, so u1 - u0 is not periodic".into(),
            ));
        }
        Ok(Self { u0, u1 })
    }

    pub fn n(&self) -> usize {
        self.u0.n()
    }

    pub fn negated(&self) -> Self {
        Self {
            u0: self.u0.negated(),
            u1: self.u1.negated(),
        }
    }

    pub fn endpoint(&self, which: Endpoint) -> &PotentialSpec {
        match which {
            Endpoint::Start => &self.u0,
            Endpoint::End => &self.u1,
        }
    }

    /// `u1 - u0` at `x`; the quadratic parts cancel.
    pub fn difference_at(&self, x: &[f64]) -> f64 {
        self.u1.periodic_value_at(x) - self.u0.periodic_value_at(x)
    }
}

/// What the cylinder problem actually consumes from the endpoints: the
/// gradient of `u1 - u0` and the two Hessians, sampled on the torus.
#[derive(Debug, Clone)]
pub struct BoundaryData {
    pub space: TorusGrid,
    /// `n` components per torus node, node-major.
    pub grad_diff: Vec<f64>,
    pub hess0: Vec<SymmetricMatrix>,
    pub hess1: Vec<SymmetricMatrix>,
}

impl BoundaryData {
    pub fn from_pair(pair: &BoundaryPair, space: &TorusGrid) -> Result<Self> {
        let s0 = sample_potential(&pair.u0, space)?;
        let s1 = sample_potential(&pair.u1, space)?;
        let grad_diff = s0
            .gradients
            .iter()
            .zip(&s1.gradients)
            .flat_map(|(g0, g1)| g1.iter().zip(g0).map(|(a, b)| a - b).collect::<Vec<_>>())
            .collect();
        Ok(Self {
            space: *space,
            grad_diff,
            hess0: s0.hessians,
            hess1: s1.hessians,
        })
    }

    pub fn grad_diff_at(&self, j: usize) -> &[f64] {
        let n = self.space.n();
        &self.grad_diff[j * n..(j + 1) * n]
    }

    pub fn hessians(&self, which: Endpoint) -> &[SymmetricMatrix] {
        match which {
            Endpoint::Start => &self.hess0,
            Endpoint::End => &self.hess1,
        }
    }
}

/// Gradient of `u1 - u0` and the Hessian `(1-t) D^2 u0 + t D^2 u1` of the
/// linear interpolation, per time slice.
#[derive(Debug, Clone)]
pub struct InterpolationPotential {
    pub grad_diff: Vec<f64>,
    pub hessians: Vec<SymmetricMatrix>,
}

fn blend(h0: &SymmetricMatrix, h1: &SymmetricMatrix, t: f64) -> SymmetricMatrix {
    h0.scaled(1.0 - t).plus(&h1.scaled(t))
}

pub fn interpolation_potential(
    pair: &BoundaryPair,
    grid: &CylinderGrid,
) -> Result<InterpolationPotential> {
    let data = BoundaryData::from_pair(pair, grid.space())?;
    let hessians = (0..grid.node_count())
        .map(|node| {
            let (k, j) = grid.split(node);
            blend(&data.hess0[j], &data.hess1[j], grid.time(k))
        })
        .collect();
    Ok(InterpolationPotential {
        grad_diff: data.grad_diff,
        hessians,
    })
}

/// Space-time Hessian of the interpolating potential (in `s = sqrt(tau) t`
/// coordinates) at every cylinder node.
#[derive(Debug, Clone)]
pub struct ChiField {
    grid: CylinderGrid,
    values: Vec<SymmetricMatrix>,
}

impl ChiField {
    pub fn from_boundary_data(data: &BoundaryData, grid: &CylinderGrid) -> Result<Self> {
        if data.space != *grid.space() {
            return Err(Error::InvalidInput("boundary data sampled on another grid".into()));
        }
        let tau = grid.tau();
        if !(tau > 0.0) {
            return Err(Error::InvalidInput(format!("tau must be positive, got {tau}")));
        }
        let inv_sqrt_tau = 1.0 / tau.sqrt();
        let n = grid.n();
        let values = (0..grid.node_count())
            .map(|node| {
                let (k, j) = grid.split(node);
                let lower = blend(&data.hess0[j], &data.hess1[j], grid.time(k));
                let g = data.grad_diff_at(j);
                SymmetricMatrix::from_fn(n + 1, |a, b| match (a, b) {
                    (0, 0) => 0.0,
                    (0, b) => g[b - 1] * inv_sqrt_tau,
                    (a, b) => lower.get(a - 1, b - 1),
                })
            })
            .collect();
        Ok(Self {
            grid: *grid,
            values,
        })
    }

    /// Injects arbitrary per-node matrices.
    pub fn from_values(grid: &CylinderGrid, values: Vec<SymmetricMatrix>) -> Result<Self> {
        if values.len() != grid.node_count() {
            return Err(Error::InvalidInput(format!(
                "expected {} chi values, got {}",
                grid.node_count(),
                values.len()
            )));
        }
        if values.iter().any(|m| m.dim() != grid.n() + 1) {
            return Err(Error::InvalidInput("chi matrices must be (n+1)x(n+1)".into()));
        }
        Ok(Self {
            grid: *grid,
            values,
        })
    }

    pub fn uniform(grid: &CylinderGrid, value: SymmetricMatrix) -> Result<Self> {
        Self::from_values(grid, vec![value; grid.node_count()])
    }

    pub fn grid(&self) -> &CylinderGrid {
        &self.grid
    }

    #[inline]
    pub fn at(&self, node: usize) -> &SymmetricMatrix {
        &self.values[node]
    }

    pub fn values(&self) -> &[SymmetricMatrix] {
        &self.values
    }

    /// Spatial blocks on one Dirichlet face.
    pub fn face_hessians(&self, face: Endpoint) -> Vec<SymmetricMatrix> {
        let k = match face {
            Endpoint::Start => 0,
            Endpoint::End => self.grid.time_points() - 1,
        };
        (0..self.grid.slice_len())
            .map(|j| self.values[self.grid.node(k, j)].lower_block())
            .collect()
    }
}

pub fn assemble_chi(pair: &BoundaryPair, grid: &CylinderGrid) -> Result<ChiField> {
    ChiField::from_boundary_data(&BoundaryData::from_pair(pair, grid.space())?, grid)
}

/// Scalar samples on every cylinder node.
#[derive(Debug, Clone, PartialEq)]
pub struct CylinderField {
    grid: CylinderGrid,
    values: Vec<f64>,
}

impl CylinderField {
    pub fn zeros(grid: &CylinderGrid) -> Self {
        Self {
            grid: *grid,
            values: vec![0.0; grid.node_count()],
        }
    }

    /// Samples `f(t, x)` at every node, faces included.
    pub fn from_fn(grid: &CylinderGrid, f: impl Fn(f64, &[f64]) -> f64) -> Self {
        let values = (0..grid.node_count())
            .map(|node| {
                let (k, j) = grid.split(node);
                f(grid.time(k), &grid.space().position(j))
            })
            .collect();
        Self {
            grid: *grid,
            values,
        }
    }

    pub fn from_values(grid: &CylinderGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.node_count() {
            return Err(Error::InvalidInput(format!(
                "expected {} samples, got {}",
                grid.node_count(),
                values.len()
            )));
        }
        Ok(Self {
            grid: *grid,
            values,
        })
    }

    /// Zero faces with the given interior values.
    pub fn from_interior(grid: &CylinderGrid, interior: &[f64]) -> Result<Self> {
        if interior.len() != grid.interior_count() {
            return Err(Error::InvalidInput(format!(
                "expected {} interior samples, got {}",
                grid.interior_count(),
                interior.len()
            )));
        }
        let mut field = Self::zeros(grid);
        field.interior_mut().copy_from_slice(interior);
        Ok(field)
    }

    pub fn grid(&self) -> &CylinderGrid {
        &self.grid
    }

    /// Same samples regarded on a grid with another `tau`.
    pub fn regrid(&self, grid: &CylinderGrid) -> Result<Self> {
        if !self.grid.same_nodes(grid) {
            return Err(Error::InvalidInput("grids have different nodes".into()));
        }
        Ok(Self {
            grid: *grid,
            values: self.values.clone(),
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn interior(&self) -> &[f64] {
        let ns = self.grid.slice_len();
        &self.values[ns..ns + self.grid.interior_count()]
    }

    pub fn interior_mut(&mut self) -> &mut [f64] {
        let ns = self.grid.slice_len();
        let len = self.grid.interior_count();
        &mut self.values[ns..ns + len]
    }

    pub fn faces_are_zero(&self) -> bool {
        let ns = self.grid.slice_len();
        let last = self.grid.node(self.grid.time_points() - 1, 0);
        self.values[..ns].iter().chain(&self.values[last..]).all(|&v| v == 0.0)
    }

    pub fn zero_faces(&mut self) {
        let ns = self.grid.slice_len();
        let last = self.grid.node(self.grid.time_points() - 1, 0);
        self.values[..ns].iter_mut().for_each(|v| *v = 0.0);
        self.values[last..].iter_mut().for_each(|v| *v = 0.0);
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn max_abs_difference(&self, other: &Self) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn negated(&self) -> Self {
        Self {
            grid: self.grid,
            values: self.values.iter().map(|v| -v).collect(),
        }
    }

    /// Sup of `|grad_(t,x) v|` (Euclidean) in rescaled coordinates: central
    /// differences in the interior, second-order one-sided differences in `t`
    /// on the faces.
    pub fn gradient_sup_norm(&self) -> f64 {
        let grid = &self.grid;
        let space = grid.space();
        let nt = grid.time_points();
        let ht = grid.time_step();
        let h = space.spacing();
        let v = &self.values;
        (0..grid.node_count())
            .map(|node| {
                let (k, j) = grid.split(node);
                let dt = if k == 0 {
                    (-3.0 * v[node] + 4.0 * v[grid.node(1, j)] - v[grid.node(2, j)]) / (2.0 * ht)
                } else if k + 1 == nt {
                    (3.0 * v[node] - 4.0 * v[grid.node(k - 1, j)] + v[grid.node(k - 2, j)])
                        / (2.0 * ht)
                } else {
                    (v[grid.node(k + 1, j)] - v[grid.node(k - 1, j)]) / (2.0 * ht)
                };
                let mut sq = dt * dt;
                for axis in 0..space.n() {
                    let p = grid.node(k, space.shift(j, axis, 1));
                    let m = grid.node(k, space.shift(j, axis, -1));
                    let dx = (v[p] - v[m]) / (2.0 * h);
                    sq += dx * dx;
                }
                sq.sqrt()
            })
            .fold(0.0, f64::max)
    }

    /// Second-order one-sided `d/dt` at each node of a face.
    pub fn face_time_derivative(&self, face: Endpoint) -> Vec<f64> {
        let grid = &self.grid;
        let ht = grid.time_step();
        let last = grid.time_points() - 1;
        let v = &self.values;
        (0..grid.slice_len())
            .map(|j| match face {
                Endpoint::Start => {
                    (-3.0 * v[grid.node(0, j)] + 4.0 * v[grid.node(1, j)] - v[grid.node(2, j)])
                        / (2.0 * ht)
                }
                Endpoint::End => {
                    (3.0 * v[grid.node(last, j)] - 4.0 * v[grid.node(last - 1, j)]
                        + v[grid.node(last - 2, j)])
                        / (2.0 * ht)
                }
            })
            .collect()
    }
}

/// Scale factors applied to the time-time and time-space second
/// differences.
#[derive(Debug, Clone, Copy)]
pub struct TimeScaling {
    pub tt: f64,
    pub tx: f64,
}

impl TimeScaling {
    /// Rescaled grid to `s = sqrt(tau) t` coordinates.
    pub fn cylinder(tau: f64) -> Self {
        Self {
            tt: 1.0 / tau,
            tx: 1.0 / tau.sqrt(),
        }
    }

    /// Plain `t` coordinates.
    pub fn unit() -> Self {
        Self { tt: 1.0, tx: 1.0 }
    }
}

/// Central second differences of `values` at interior node `(k, j)` with
/// stride `step` cells; `step = 1` is the solver stencil. Nodes within
/// `step` of a face have no stencil and must not be passed.
pub fn hessian_stencil(
    values: &[f64],
    grid: &CylinderGrid,
    k: usize,
    j: usize,
    step: usize,
    scaling: TimeScaling,
) -> SymmetricMatrix {
    let space = grid.space();
    let n = space.n();
    let ns = grid.slice_len();
    let st = step as isize;
    let ht = grid.time_step() * step as f64;
    let hx = space.spacing() * step as f64;
    let c = grid.node(k, j);
    let up = c + step * ns;
    let down = c - step * ns;
    let mut out = SymmetricMatrix::zeros(n + 1);

    out.set(
        0,
        0,
        scaling.tt * (values[up] - 2.0 * values[c] + values[down]) / (ht * ht),
    );
    for a in 0..n {
        let jp = space.shift(j, a, st);
        let jm = space.shift(j, a, -st);
        let tx = (values[up - j + jp] - values[up - j + jm] - values[down - j + jp]
            + values[down - j + jm])
            / (4.0 * ht * hx);
        out.set(0, a + 1, scaling.tx * tx);
        let base = c - j;
        out.set(
            a + 1,
            a + 1,
            (values[base + jp] - 2.0 * values[c] + values[base + jm]) / (hx * hx),
        );
        for b in a + 1..n {
            let pp = space.shift(jp, b, st);
            let pm = space.shift(jp, b, -st);
            let mp = space.shift(jm, b, st);
            let mm = space.shift(jm, b, -st);
            let mixed = (values[base + pp] - values[base + pm] - values[base + mp]
                + values[base + mm])
                / (4.0 * hx * hx);
            out.set(a + 1, b + 1, mixed);
        }
    }
    out
}

/// `chi + D^2 v` in `s` coordinates at every interior node, in interior
/// order.
pub fn scaled_hessian_operator(v: &CylinderField, chi: &ChiField) -> Result<Vec<SymmetricMatrix>> {
    let grid = v.grid();
    if !grid.same_nodes(chi.grid()) || grid.tau() != chi.grid().tau() {
        return Err(Error::InvalidInput("field and chi live on different grids".into()));
    }
    let scaling = TimeScaling::cylinder(grid.tau());
    let ns = grid.slice_len();
    Ok((0..grid.interior_count())
        .into_par_iter()
        .map(|i| {
            let node = ns + i;
            let (k, j) = grid.split(node);
            chi.at(node)
                .plus(&hessian_stencil(v.values(), grid, k, j, 1, scaling))
        })
        .collect())
}
