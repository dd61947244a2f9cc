//! Compress-and-forward with Gaussian quantization noise levels `a`, `b` at the relays.

use rayon::prelude::*;
use serde::Serialize;

use crate::bounds::bound_broadcast;
use crate::channel::ChannelInstance;
use crate::effort::Effort;
use crate::error::{RelayError, Result};
use crate::numerics::{
    compass_search, eig_hermitian, linspace, log2_det, nelder_mead_max, svd, waterfill_nonneg, CMatrix, C64,
};

pub const NOISE_MIN: f64 = 1e-4;
pub const NOISE_MAX: f64 = 1e4;
const PENALTY: f64 = 1e3;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CfSolution {
    pub q_s: CMatrix,
    pub a: f64,
    pub b: f64,
    pub rate: f64,
    /// Margins of the relay-1, relay-2 and joint constraints, in bits.
    pub slacks: [f64; 3],
    /// Cells of the noise grid whose inner covariance had to be pulled toward the isotropic one.
    pub fallback_cells: usize,
}

/// Objective and the three constraint margins (right side minus left side, bits).
pub fn cf_objective_and_constraints(inst: &ChannelInstance, q_s: &CMatrix, a: f64, b: f64) -> Result<(f64, [f64; 3])> {
    if !(a > 0.0 && a.is_finite()) {
        return Err(RelayError::parameter("a", format!("quantization noise must be positive, got {a}")));
    }
    if !(b > 0.0 && b.is_finite()) {
        return Err(RelayError::parameter("b", format!("quantization noise must be positive, got {b}")));
    }
    Ok(evaluate(inst, q_s, a, b))
}

fn evaluate(inst: &ChannelInstance, q_s: &CMatrix, a: f64, b: f64) -> (f64, [f64; 3]) {
    let gq = &inst.g * q_s * inst.g.adjoint();
    let mut m = gq.clone();
    m[(0, 0)] += 1.0 + a;
    m[(1, 1)] += 1.0 + b;
    let ld = log2_det(&m);
    let rate = ld - ((1.0 + a) * (1.0 + b)).log2();
    let g11 = gq[(0, 0)].re.max(0.0);
    let g22 = gq[(1, 1)].re.max(0.0);
    let (p1, p2) = (inst.p_r1, inst.p_r2);
    let joint = (1.0 + p1 * inst.h_norm_sq(0) + p2 * inst.h_norm_sq(1) + p1 * p2 * inst.det_hh()).log2();
    let s1 = (1.0 + p1 * inst.h_norm_sq(0)).log2() - (ld - (a * (1.0 + b + g22)).log2());
    let s2 = (1.0 + p2 * inst.h_norm_sq(1)).log2() - (ld - (b * (1.0 + a + g11)).log2());
    let s3 = joint - (ld - (a * b).log2());
    (rate, [s1, s2, s3])
}

fn min3(s: &[f64; 3]) -> f64 {
    s[0].min(s[1]).min(s[2])
}

#[derive(Debug, Clone)]
struct Cell {
    q: CMatrix,
    rate: f64,
    fallback: bool,
}

/// Source covariance for fixed noise levels: waterfilling on (I + A)^{-1/2} G, pulled toward
/// (P_s/M) I by bisection when that violates a constraint.
fn inner(inst: &ChannelInstance, a: f64, b: f64) -> Option<Cell> {
    let m = inst.source_antennas();
    let mut gt = inst.g.clone();
    for j in 0..m {
        gt[(0, j)] /= (1.0 + a).sqrt();
        gt[(1, j)] /= (1.0 + b).sqrt();
    }
    let s = svd(&gt).ok()?;
    let sq: Vec<f64> = s.singular_values.iter().map(|x| x * x).collect();
    let w = waterfill_nonneg(&sq, inst.p_s);
    let q = (&s.v * CMatrix::diag_real(&w.powers) * s.v.adjoint()).hermitian_part();
    let (rate, slacks) = evaluate(inst, &q, a, b);
    if min3(&slacks) >= 0.0 {
        return Some(Cell { q, rate, fallback: false });
    }
    let q0 = CMatrix::identity(m).scale(inst.p_s / m as f64);
    let (_, s0) = evaluate(inst, &q0, a, b);
    if min3(&s0) < 0.0 {
        return None;
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..50 {
        let t = 0.5 * (lo + hi);
        let (_, st) = evaluate(inst, &(q.scale(1.0 - t) + q0.scale(t)), a, b);
        if min3(&st) >= 0.0 {
            hi = t;
        } else {
            lo = t;
        }
    }
    let q = q.scale(1.0 - hi) + q0.scale(hi);
    let (rate, _) = evaluate(inst, &q, a, b);
    Some(Cell { q, rate, fallback: true })
}

/// Maximizes the CF rate over a log-spaced `n × n` grid of (a, b), refines by compass search,
/// then polishes source covariance and noise levels jointly with the default budget.
pub fn cf_optimize(inst: &ChannelInstance, n: usize) -> Result<CfSolution> {
    cf_optimize_with(inst, n, Effort::Default.cf_polish_evals())
}

pub fn cf_optimize_with(inst: &ChannelInstance, n: usize, polish_evals: usize) -> Result<CfSolution> {
    if inst.p_r1 * inst.h_norm_sq(0) <= 0.0 || inst.p_r2 * inst.h_norm_sq(1) <= 0.0 {
        return Err(RelayError::ZeroRelayPower("compress-and-forward needs both relay links active".into()));
    }
    if n < 2 {
        return Err(RelayError::parameter("grid", "need at least 2 points per axis"));
    }
    let (lmin, lmax) = (NOISE_MIN.ln(), NOISE_MAX.ln());
    let axis = linspace(lmin, lmax, n);
    let cells: Vec<(usize, f64, f64)> = axis
        .iter()
        .enumerate()
        .flat_map(|(i, &la)| axis.iter().enumerate().map(move |(j, &lb)| (i * n + j, la, lb)))
        .collect();
    let evaluated: Vec<Option<(usize, f64, f64, Cell)>> =
        cells.par_iter().map(|&(k, la, lb)| inner(inst, la.exp(), lb.exp()).map(|c| (k, la, lb, c))).collect();
    let fallback_cells = evaluated.iter().flatten().filter(|c| c.3.fallback).count();
    let best = evaluated
        .into_iter()
        .flatten()
        .reduce(|x, y| if y.3.rate > x.3.rate { y } else { x })
        .ok_or_else(|| RelayError::Infeasible("no feasible quantization noise levels on the grid".into()))?;
    let (_, la, lb, cell) = best;
    let f = |x: &[f64]| {
        if x.iter().any(|v| !(lmin..=lmax).contains(v)) {
            return None;
        }
        inner(inst, x[0].exp(), x[1].exp()).map(|c| c.rate)
    };
    let step = (lmax - lmin) / (n - 1) as f64;
    let (x, _) = compass_search(f, &[la, lb], cell.rate, step, 1e-10, 4000);
    let (a, b) = (x[0].exp(), x[1].exp());
    let (cell, a, b) = match inner(inst, a, b) {
        Some(c) if c.rate >= cell.rate => (c, a, b),
        _ => (cell, la.exp(), lb.exp()),
    };
    let (cell, a, b) = polish(inst, cell, a, b, polish_evals);
    finish(inst, cell, a, b, fallback_cells)
}

/// Smallest common scaling `t ≥ 1` of both noise levels that makes every margin nonnegative.
fn restore(inst: &ChannelInstance, q: &CMatrix, a: f64, b: f64) -> Option<f64> {
    let ok = |t: f64| min3(&evaluate(inst, q, a * t, b * t).1) >= 0.0;
    if ok(1.0) {
        return Some(1.0);
    }
    let mut hi = 2.0;
    while !ok(hi) {
        hi *= 2.0;
        if hi > 1e12 {
            return None;
        }
    }
    let mut lo = hi / 2.0;
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if ok(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Some(hi)
}

/// Source covariance `P_s B B† / tr(B B†)` from the real and imaginary parts of `B`.
fn covariance_from(x: &[f64], m: usize, p_s: f64) -> Option<CMatrix> {
    let data: Vec<C64> = (0..m * m).map(|k| C64::new(x[2 * k], x[2 * k + 1])).collect();
    let bm = CMatrix::from_row_major(m, m, &data);
    let q = &bm * bm.adjoint();
    let tr = q.trace().re;
    (tr > 0.0 && tr.is_finite()).then(|| q.scale(p_s / tr).hermitian_part())
}

/// Joint search over the source covariance and the noise levels. A point violating a
/// constraint is pulled back by scaling both noise levels up together.
fn polish(inst: &ChannelInstance, cell: Cell, a: f64, b: f64, evals: usize) -> (Cell, f64, f64) {
    let m = inst.source_antennas();
    let Ok(e) = eig_hermitian(&cell.q) else {
        return (cell, a, b);
    };
    let root: Vec<f64> = e.values.iter().map(|v| v.max(0.0).sqrt()).collect();
    let bm = e.basis.adjoint() * CMatrix::diag_real(&root);
    let mut x0: Vec<f64> = bm.to_row_major().iter().flat_map(|z| [z.re, z.im]).collect();
    x0.extend([a.ln(), b.ln()]);
    let scale = inst.p_s.sqrt().max(1e-3);
    let point = |x: &[f64]| {
        let q = covariance_from(x, m, inst.p_s)?;
        let (a, b) = (x[2 * m * m].exp(), x[2 * m * m + 1].exp());
        let t = restore(inst, &q, a, b)?;
        Some((q, a * t, b * t))
    };
    let f = |x: &[f64]| point(x).map(|(q, a, b)| evaluate(inst, &q, a, b).0);
    // Penalized pass first: it can slide along active constraints, which the repaired one cannot.
    let penalized = |x: &[f64]| {
        let q = covariance_from(x, m, inst.p_s)?;
        let (rate, sl) = evaluate(inst, &q, x[2 * m * m].exp(), x[2 * m * m + 1].exp());
        Some(rate + PENALTY * min3(&sl).min(0.0))
    };
    let (y, _) = nelder_mead_max(penalized, &x0, cell.rate, 0.2 * scale, 1e-12, evals / 4);
    let (mut x, mut v) = (x0, cell.rate);
    if let Some(w) = f(&y).filter(|&w| w > v) {
        (x, v) = (y, w);
    }
    let steps: &[f64] = if evals >= 4_000 { &[0.2, 0.05, 0.5, 0.02] } else { &[0.2, 0.05] };
    for step in steps {
        let (y, w) = nelder_mead_max(f, &x, v, step * scale, 1e-11, evals * 3 / 4 / steps.len());
        if w > v {
            (x, v) = (y, w);
        }
    }
    match point(&x) {
        Some((q, a, b)) if v > cell.rate => (Cell { q, rate: v, fallback: cell.fallback }, a, b),
        _ => (cell, a, b),
    }
}

fn finish(inst: &ChannelInstance, cell: Cell, a: f64, b: f64, fallback_cells: usize) -> Result<CfSolution> {
    let (rate, slacks) = cf_objective_and_constraints(inst, &cell.q, a, b)?;
    if min3(&slacks) < -1e-9 {
        return Err(RelayError::Infeasible(format!("CF solution violates a constraint: {slacks:?}")));
    }
    Ok(CfSolution { q_s: cell.q, a, b, rate: rate.max(0.0), slacks, fallback_cells })
}

pub fn cf_optimize_effort(inst: &ChannelInstance, effort: Effort) -> Result<CfSolution> {
    cf_optimize_with(inst, effort.cf_grid(), effort.cf_polish_evals())
}

/// `bound_broadcast − CF rate` at equal relay powers; zero relay power counts as rate 0.
pub fn cf_asymptotic_gap(inst: &ChannelInstance, power_grid: &[f64], effort: Effort) -> Result<Vec<(f64, f64)>> {
    let bound = bound_broadcast(inst)?;
    power_grid
        .iter()
        .map(|&p| {
            let rate = match cf_optimize_effort(&inst.with_relay_power(p, p), effort) {
                Ok(s) => s.rate,
                Err(RelayError::ZeroRelayPower(_)) => 0.0,
                Err(e) => return Err(e),
            };
            Ok((p, bound - rate))
        })
        .collect()
}
