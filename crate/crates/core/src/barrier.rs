//! Admissibility margin, the explicit sub- and supersolution barriers, and the
//! runtime checks of the orderings they guarantee.

use std::f64::consts::FRAC_PI_2;

use serde::Serialize;

use crate::error::{Endpoint, Error, Result};
use crate::fields::{scaled_hessian_operator, BoundaryPair, BoundaryData, ChiField, CylinderField, TorusGrid};
use crate::spectral::{arctan_sum, PhaseBranch, SymmetricMatrix};

/// Largest subsolution parameter tried before giving up.
pub const MAX_SUB_LAMBDA: f64 = 1e12;
/// Rounding allowance in the subsolution margin predicate. The starting
/// value `tau / tan(delta)` meets the margin with equality for
/// time-independent data.
pub const MARGIN_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Serialize)]
pub struct AdmissibilityMargin {
    pub delta: f64,
    /// Minimum raw arctan sum of the spatial Hessian, per endpoint.
    pub min_phase: [f64; 2],
    pub argmin: [usize; 2],
}

/// `delta = min_i min_x (arctan_sum(hess_i(x)) + pi/2 - big_theta) / 2` over
/// both endpoints; fails unless positive.
pub fn margin_from_hessians(
    hess0: &[SymmetricMatrix],
    hess1: &[SymmetricMatrix],
    branch: &PhaseBranch,
) -> Result<AdmissibilityMargin> {
    let mut min_phase = [f64::INFINITY; 2];
    let mut argmin = [0usize; 2];
    for (e, hessians) in [hess0, hess1].into_iter().enumerate() {
        for (j, h) in hessians.iter().enumerate() {
            let phase = arctan_sum(h)?;
            if phase < min_phase[e] {
                min_phase[e] = phase;
                argmin[e] = j;
            }
        }
    }
    let bound = branch.big_theta - FRAC_PI_2;
    let worst = if min_phase[1] < min_phase[0] { 1 } else { 0 };
    let delta = 0.5 * (min_phase[worst] - bound);
    if !(delta > 0.0) {
        return Err(Error::Admissibility {
            endpoint: if worst == 0 { Endpoint::Start } else { Endpoint::End },
            node: argmin[worst],
            phase: min_phase[worst],
            bound,
        });
    }
    Ok(AdmissibilityMargin {
        delta,
        min_phase,
        argmin,
    })
}

pub fn admissibility_margin(
    pair: &BoundaryPair,
    branch: &PhaseBranch,
    grid: &TorusGrid,
) -> Result<AdmissibilityMargin> {
    let data = BoundaryData::from_pair(pair, grid)?;
    margin_from_hessians(&data.hess0, &data.hess1, branch)
}

/// Margin read off the spatial blocks of `chi` on the two faces.
pub fn margin_from_chi(chi: &ChiField, branch: &PhaseBranch) -> Result<AdmissibilityMargin> {
    margin_from_hessians(
        &chi.face_hessians(Endpoint::Start),
        &chi.face_hessians(Endpoint::End),
        branch,
    )
}

#[derive(Debug, Clone)]
pub struct Subsolution {
    pub lambda: f64,
    pub field: CylinderField,
    /// Arctan sum of `chi + D^2 v_sub` at each interior node.
    pub phase: Vec<f64>,
    pub doublings: usize,
}

fn parabola(chi: &ChiField, lambda: f64) -> CylinderField {
    CylinderField::from_fn(chi.grid(), |t, _| 0.5 * lambda * t * (t - 1.0))
}

/// Subsolution `v = lambda t (t - 1) / 2`, with `lambda` found by doubling
/// from `tau / tan(delta)` until `arctan_sum(chi + D^2 v) >= big_theta + delta`
/// holds at every interior node.
pub fn build_subsolution(delta: f64, chi: &ChiField, branch: &PhaseBranch) -> Result<Subsolution> {
    if !(delta > 0.0) {
        return Err(Error::InvalidInput(format!("delta must be positive, got {delta}")));
    }
    let tau = chi.grid().tau();
    let target = branch.big_theta + delta - MARGIN_SLACK;
    let mut lambda = tau / delta.tan();
    let mut doublings = 0;
    while lambda <= MAX_SUB_LAMBDA {
        let field = parabola(chi, lambda);
        let phase = scaled_hessian_operator(&field, chi)?
            .iter()
            .map(arctan_sum)
            .collect::<Result<Vec<_>>>()?;
        if phase.iter().all(|&p| p >= target) {
            return Ok(Subsolution {
                lambda,
                field,
                phase,
                doublings,
            });
        }
        lambda *= 2.0;
        doublings += 1;
    }
    Err(Error::BarrierFailure(format!(
        "subsolution margin {delta:.3e} not reached for lambda up to {MAX_SUB_LAMBDA:e}"
    )))
}

#[derive(Debug, Clone)]
pub struct Supersolution {
    pub lambda: f64,
    pub field: CylinderField,
}

/// Supersolution `v = lambda t (1 - t) / 2` with `lambda = tau max(0, max tr chi)`,
/// which makes `tr(chi + D^2 v) <= 0` everywhere.
pub fn build_supersolution(chi: &ChiField) -> Result<Supersolution> {
    let grid = chi.grid();
    let tau = grid.tau();
    let max_trace = chi.values().iter().map(|m| m.trace()).fold(0.0_f64, f64::max);
    let lambda = max_trace * tau;
    let field = CylinderField::from_fn(grid, |t, _| 0.5 * lambda * t * (1.0 - t));
    for (i, m) in scaled_hessian_operator(&field, chi)?.iter().enumerate() {
        let tr = m.trace();
        if tr > 1e-10 * (1.0 + max_trace) {
            return Err(Error::BarrierFailure(format!(
                "supersolution trace {tr:.3e} positive at interior node {i}"
            )));
        }
    }
    Ok(Supersolution { lambda, field })
}

/// Both barriers for one `tau`.
#[derive(Debug, Clone)]
pub struct BarrierPair {
    pub delta: f64,
    pub lambda_sub: f64,
    pub lambda_super: f64,
    pub v_sub: CylinderField,
    pub v_super: CylinderField,
    /// Arctan sum of `chi + D^2 v_sub` at each interior node.
    pub sub_phase: Vec<f64>,
}

impl BarrierPair {
    pub fn build(delta: f64, chi: &ChiField, branch: &PhaseBranch) -> Result<Self> {
        let sub = build_subsolution(delta, chi, branch)?;
        let sup = build_supersolution(chi)?;
        Ok(Self {
            delta,
            lambda_sub: sub.lambda,
            lambda_super: sup.lambda,
            v_sub: sub.field,
            v_super: sup.field,
            sub_phase: sub.phase,
        })
    }

    /// `(-lambda_sub / 8, lambda_super / 8)`, the sup-norm envelope any
    /// solution between the barriers must respect.
    pub fn linf_bounds(&self) -> (f64, f64) {
        (-self.lambda_sub / 8.0, self.lambda_super / 8.0)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SandwichReport {
    pub passed: bool,
    /// Largest `v_sub - v` (positive means violated).
    pub lower_excess: f64,
    /// Largest `v - v_super` (positive means violated).
    pub upper_excess: f64,
    pub worst_node: usize,
    pub slack: f64,
}

impl SandwichReport {
    pub fn violation(&self) -> f64 {
        self.lower_excess.max(self.upper_excess).max(0.0)
    }
}

/// Checks `v_sub <= v <= v_super` up to `1e-9 (1 + |v|_inf)`.
pub fn check_sandwich(v: &CylinderField, barriers: &BarrierPair) -> SandwichReport {
    let slack = 1e-9 * (1.0 + v.sup_norm());
    let mut lower_excess = f64::NEG_INFINITY;
    let mut upper_excess = f64::NEG_INFINITY;
    let mut worst_node = 0;
    let mut worst = f64::NEG_INFINITY;
    let lo = barriers.v_sub.values();
    let hi = barriers.v_super.values();
    for (node, &x) in v.values().iter().enumerate() {
        let below = lo[node] - x;
        let above = x - hi[node];
        lower_excess = lower_excess.max(below);
        upper_excess = upper_excess.max(above);
        if below.max(above) > worst {
            worst = below.max(above);
            worst_node = node;
        }
    }
    SandwichReport {
        passed: lower_excess <= slack && upper_excess <= slack,
        lower_excess,
        upper_excess,
        worst_node,
        slack,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct NormalDerivativeReport {
    /// Nodes where `d/ds v` leaves the barrier range on a face.
    pub warnings: usize,
    pub max_excess: f64,
}

/// Compares one-sided `d/ds v` on the faces against the slopes of the two
/// barriers, `-lambda_sub / (2 sqrt tau) <= v_s(0) <= lambda_super / (2 sqrt tau)`
/// and the mirrored range at `t = 1`.
pub fn normal_derivative_monitor(v: &CylinderField, barriers: &BarrierPair) -> NormalDerivativeReport {
    let sqrt_tau = v.grid().tau().sqrt();
    let lo = barriers.lambda_sub / (2.0 * sqrt_tau);
    let hi = barriers.lambda_super / (2.0 * sqrt_tau);
    let tol = 1e-9 * (1.0 + lo.max(hi));
    let mut warnings = 0;
    let mut max_excess = 0.0_f64;
    for (face, min, max) in [(Endpoint::Start, -lo, hi), (Endpoint::End, -hi, lo)] {
        for d in v.face_time_derivative(face) {
            let ds = d / sqrt_tau;
            let excess = (min - ds).max(ds - max);
            if excess > tol {
                warnings += 1;
            }
            max_excess = max_excess.max(excess);
        }
    }
    NormalDerivativeReport {
        warnings,
        max_excess,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{assemble_chi, CylinderGrid, PotentialSpec, TrigMode};
    use crate::spectral::select_branch;

    fn constant_pair(c: f64, n: usize) -> BoundaryPair {
        let q = SymmetricMatrix::from_diagonal(&vec![c; n]);
        BoundaryPair::new(PotentialSpec::quadratic_only(q), PotentialSpec::quadratic_only(q)).unwrap()
    }

    fn grid(n: usize, points: usize, nt: usize, tau: f64) -> CylinderGrid {
        CylinderGrid::new(TorusGrid::new(n, points).unwrap(), nt, tau).unwrap()
    }

    #[test]
    fn margin_constant_hessian() {
        let branch = select_branch(2).unwrap();
        let m = admissibility_margin(&constant_pair(2.0, 2), &branch, &TorusGrid::new(2, 4).unwrap())
            .unwrap();
        let expected = 0.5 * (2.0 * 2f64.atan() + FRAC_PI_2 - std::f64::consts::PI);
        assert!((m.delta - expected).abs() < 1e-15);
        assert!((m.delta - 0.3217).abs() < 1e-4);
    }

    #[test]
    fn margin_boundary_of_cone_is_rejected() {
        let branch = select_branch(2).unwrap();
        let r = admissibility_margin(&constant_pair(1.0, 2), &branch, &TorusGrid::new(2, 4).unwrap());
        assert!(matches!(r, Err(Error::Admissibility { .. })));
    }

    #[test]
    fn margin_names_bad_endpoint() {
        let branch = select_branch(1).unwrap();
        let q = SymmetricMatrix::from_diagonal(&[1.0]);
        let bad = PotentialSpec::new(
            q,
            vec![TrigMode {
                wave: vec![1],
                cos_amp: 0.05,
                sin_amp: 0.0,
            }],
        )
        .unwrap();
        let pair = BoundaryPair::new(PotentialSpec::quadratic_only(q), bad).unwrap();
        match admissibility_margin(&pair, &branch, &TorusGrid::new(1, 8).unwrap()) {
            Err(Error::Admissibility { endpoint, node, .. }) => {
                assert_eq!(endpoint, Endpoint::End);
                assert_eq!(node, 0);
            }
            other => panic!("expected admissibility error, got {other:?}"),
        }
    }

    #[test]
    fn subsolution_constant_hessian() {
        let branch = select_branch(2).unwrap();
        let g = grid(2, 4, 9, 1.0);
        let chi = assemble_chi(&constant_pair(2.0, 2), &g).unwrap();
        let delta = margin_from_chi(&chi, &branch).unwrap().delta;
        let sub = build_subsolution(delta, &chi, &branch).unwrap();
        assert!(sub.doublings <= 1);
        assert!((sub.lambda / (1.0 / delta.tan()) - 1.0).abs() < 1e-12 || sub.doublings == 1);
        assert!((1.0 / delta.tan() - 3.0).abs() < 1e-12);
        for j in 0..g.slice_len() {
            assert_eq!(sub.field.values()[g.node(0, j)], 0.0);
            assert_eq!(sub.field.values()[g.node(8, j)], 0.0);
            assert!((sub.field.values()[g.node(4, j)] + sub.lambda / 8.0).abs() < 1e-15);
        }
        assert!(sub.phase.iter().all(|&p| p >= branch.big_theta + delta - MARGIN_SLACK));
    }

    #[test]
    fn supersolution_constant_hessian() {
        let g = grid(2, 4, 9, 1.0);
        let chi = assemble_chi(&constant_pair(2.0, 2), &g).unwrap();
        let sup = build_supersolution(&chi).unwrap();
        assert_eq!(sup.lambda, 4.0);
        assert!((sup.field.values()[g.node(4, 0)] - 0.5).abs() < 1e-15);
        let chi_q = assemble_chi(&constant_pair(2.0, 2), &g.with_tau(0.25).unwrap()).unwrap();
        assert_eq!(build_supersolution(&chi_q).unwrap().lambda, 1.0);
    }

    #[test]
    fn supersolution_periodic_only() {
        let spec = PotentialSpec::new(
            SymmetricMatrix::zeros(1),
            vec![TrigMode {
                wave: vec![1],
                cos_amp: 0.1,
                sin_amp: 0.0,
            }],
        )
        .unwrap();
        let pair = BoundaryPair::new(spec.clone(), spec).unwrap();
        let g = grid(1, 8, 5, 1.0);
        let chi = assemble_chi(&pair, &g).unwrap();
        let sup = build_supersolution(&chi).unwrap();
        let expected = 0.1 * (2.0 * std::f64::consts::PI).powi(2);
        assert!((sup.lambda - expected).abs() < 1e-12);
    }

    #[test]
    fn sandwich_cases() {
        let branch = select_branch(2).unwrap();
        let g = grid(2, 4, 9, 1.0);
        let chi = assemble_chi(&constant_pair(2.0, 2), &g).unwrap();
        let delta = margin_from_chi(&chi, &branch).unwrap().delta;
        let b = BarrierPair::build(delta, &chi, &branch).unwrap();
        let r = check_sandwich(&b.v_sub, &b);
        assert!(r.passed);
        assert_eq!(r.lower_excess, 0.0);
        assert!(check_sandwich(&CylinderField::zeros(&g), &b).passed);
        let mu = 4.0 / 3.0;
        let exact = CylinderField::from_fn(&g, |t, _| 0.5 * mu * t * (t - 1.0));
        assert!(check_sandwich(&exact, &b).passed);
        let too_low = CylinderField::from_fn(&g, |t, _| 2.0 * b.lambda_sub * t * (t - 1.0));
        let r = check_sandwich(&too_low, &b);
        assert!(!r.passed);
        assert!(r.lower_excess > 0.0);
        let mon = normal_derivative_monitor(&exact, &b);
        assert_eq!(mon.warnings, 0);
        assert!(normal_derivative_monitor(&too_low, &b).warnings > 0);
    }

    // Holds while the starting value tau / tan(delta) already meets the
    // margin. Once the off-diagonal chi terms force doublings (the n = 1 case
    // below at tau = 1/64) a larger delta can need a larger lambda.
    #[test]
    fn larger_delta_never_needs_larger_lambda() {
        let branch = select_branch(1).unwrap();
        let q = SymmetricMatrix::from_diagonal(&[3.0]);
        let u1 = PotentialSpec::new(
            q,
            vec![TrigMode {
                wave: vec![1],
                cos_amp: 0.05,
                sin_amp: 0.0,
            }],
        )
        .unwrap();
        let perturbed = BoundaryPair::new(PotentialSpec::quadratic_only(q), u1).unwrap();
        let cases = [
            (perturbed.clone(), 1.0),
            (perturbed.clone(), 0.25),
            (constant_pair(3.0, 1), 1.0 / 64.0),
        ];
        for (pair, tau) in cases {
            let chi = assemble_chi(&pair, &grid(1, 16, 9, tau)).unwrap();
            let true_delta = margin_from_chi(&chi, &branch).unwrap().delta;
            let mut last = f64::INFINITY;
            for step in 1..=20 {
                let delta = true_delta * step as f64 / 20.0;
                let lambda = build_subsolution(delta, &chi, &branch).unwrap().lambda;
                assert!(lambda <= last, "tau {tau} delta {delta}: {lambda} > {last}");
                last = lambda;
            }
        }
    }

    #[test]
    fn doubling_binds_for_strong_off_diagonal_terms() {
        let branch = select_branch(1).unwrap();
        let q = SymmetricMatrix::from_diagonal(&[3.0]);
        let u1 = PotentialSpec::new(
            q,
            vec![TrigMode {
                wave: vec![1],
                cos_amp: 0.05,
                sin_amp: 0.0,
            }],
        )
        .unwrap();
        let pair = BoundaryPair::new(PotentialSpec::quadratic_only(q), u1).unwrap();
        let chi = assemble_chi(&pair, &grid(1, 16, 9, 1.0 / 64.0)).unwrap();
        let delta = margin_from_chi(&chi, &branch).unwrap().delta;
        let sub = build_subsolution(delta, &chi, &branch).unwrap();
        assert!(sub.doublings > 0);
        assert!(sub.phase.iter().all(|&p| p >= branch.big_theta + delta - MARGIN_SLACK));
    }
}
