//! Source-to-relays broadcast channel with two private (dirty-paper coded)
//! streams and one common stream.
//!
//! Each stream uses a rank-one beam in the span of the two channel rows. The
//! useful beams trace three arcs of the (|g1 v|², |g2 v|²) ellipse, one per
//! stream, so the region is sampled over beam angles on those arcs, the power
//! split, and the encoding order. Time sharing is handled by a linear program
//! over the sampled support points.

use std::f64::consts::{FRAC_PI_2, PI};

use log::warn;
use microlp::{ComparisonOp, OptimizationDirection, Problem};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::ChannelInstance;
use crate::effort::Effort;
use crate::error::{RelayError, Result};
use crate::numerics::{compass_search, eig_hermitian, linspace, nelder_mead_max, CMatrix, C64};
use crate::rates::RateTriple;

const PSD_TOL: f64 = 1e-9;
const TIE_EPS: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EncodingOrder {
    /// Relay 1's message is encoded last and sees no interference.
    Pi12,
    Pi21,
}

/// Stream covariances and the encoding order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BcParams {
    pub order: EncodingOrder,
    pub q1: CMatrix,
    pub q2: CMatrix,
    pub qc: CMatrix,
}

impl BcParams {
    pub fn zero(m: usize) -> Self {
        BcParams {
            order: EncodingOrder::Pi12,
            q1: CMatrix::zeros(m, m),
            q2: CMatrix::zeros(m, m),
            qc: CMatrix::zeros(m, m),
        }
    }
}

pub type BcCorner = RateTriple;

/// Power-scaled gains `(|g1 v|² p, |g2 v|² p)` of one stream.
type Gains = (f64, f64);

fn rates_from_gains(order: EncodingOrder, s1: Gains, s2: Gains, sc: Gains) -> RateTriple {
    let (r1, r2) = match order {
        EncodingOrder::Pi12 => ((1.0 + s1.0).log2(), (1.0 + s2.1 / (1.0 + s1.1)).log2()),
        EncodingOrder::Pi21 => ((1.0 + s1.0 / (1.0 + s2.0)).log2(), (1.0 + s2.1).log2()),
    };
    let rc1 = (1.0 + sc.0 / (1.0 + s1.0 + s2.0)).log2();
    let rc2 = (1.0 + sc.1 / (1.0 + s1.1 + s2.1)).log2();
    RateTriple::new(r1, r2, rc1.min(rc2))
}

fn check_covariance(name: &str, q: &CMatrix, m: usize) -> Result<()> {
    if q.rows() != m || q.cols() != m {
        return Err(RelayError::parameter(name, format!("must be {m}x{m}, got {}x{}", q.rows(), q.cols())));
    }
    let e = eig_hermitian(q).map_err(|e| RelayError::parameter(name, e.to_string()))?;
    let scale = q.max_abs().max(1.0);
    if e.values[0] < -PSD_TOL * scale {
        return Err(RelayError::parameter(name, format!("not PSD (eigenvalue {})", e.values[0])));
    }
    Ok(())
}

/// Evaluates the three broadcast rates for explicit covariances.
pub fn bc_rates(inst: &ChannelInstance, params: &BcParams) -> Result<RateTriple> {
    let m = inst.source_antennas();
    check_covariance("q1", &params.q1, m)?;
    check_covariance("q2", &params.q2, m)?;
    check_covariance("qc", &params.qc, m)?;
    let tr = (params.q1.trace() + params.q2.trace() + params.qc.trace()).re;
    if tr > inst.p_s + PSD_TOL * inst.p_s.max(1.0) {
        return Err(RelayError::parameter("q", format!("total trace {tr} exceeds p_s = {}", inst.p_s)));
    }
    let (g1, g2) = (inst.g_row(0), inst.g_row(1));
    let gains = |q: &CMatrix| (CMatrix::quad_form_row(&g1, q).max(0.0), CMatrix::quad_form_row(&g2, q).max(0.0));
    Ok(rates_from_gains(params.order, gains(&params.q1), gains(&params.q2), gains(&params.qc)))
}

/// Unit beams `v(θ) = cos θ e_a + sin θ e^{j∠a} e_b` with `e_a ∝ g1†` and `e_b` the
/// normalized part of `g2†` orthogonal to `e_a`.
#[derive(Debug, Clone)]
pub struct BeamGeometry {
    ea: CMatrix,
    eb: Option<CMatrix>,
    g1: f64,
    a: C64,
    b: f64,
}

impl BeamGeometry {
    pub fn new(inst: &ChannelInstance) -> Self {
        let m = inst.source_antennas();
        let (g1r, g2r) = (inst.g_row(0), inst.g_row(1));
        let n1 = g1r.frobenius_norm();
        let n2 = g2r.frobenius_norm();
        let tiny = 1e-14 * (1.0 + n1.max(n2));
        if n1 <= tiny {
            let ea = if n2 > tiny {
                g2r.adjoint().scale(1.0 / n2)
            } else {
                let mut e = CMatrix::zeros(m, 1);
                e[(0, 0)] = C64::new(1.0, 0.0);
                e
            };
            return BeamGeometry { ea, eb: None, g1: 0.0, a: C64::new(n2, 0.0), b: 0.0 };
        }
        let ea = g1r.adjoint().scale(1.0 / n1);
        let a = (&g2r * &ea)[(0, 0)];
        let w = g2r.adjoint() - ea.scale_c(a.conj());
        let b = w.frobenius_norm();
        if b <= 1e-12 * n2.max(1.0) {
            return BeamGeometry { ea, eb: None, g1: n1, a, b: 0.0 };
        }
        BeamGeometry { ea, eb: Some(w.scale(1.0 / b)), g1: n1, a, b }
    }

    /// Angle of the beam that maximizes |g2 v|.
    pub fn theta_ymax(&self) -> f64 {
        self.b.atan2(self.a.norm())
    }

    /// Angle intervals `[common, stream 2, stream 1]`. A private stream's gain at its own relay
    /// also interferes with the common stream there, so its arc runs past the matched beam to
    /// the beam that is silent at that relay.
    pub fn arcs(&self) -> [(f64, f64); 3] {
        let t = self.theta_ymax();
        [(0.0, t), (t, t + FRAC_PI_2), (FRAC_PI_2, PI)]
    }

    /// `(|g1 v|², |g2 v|²)` for the beam at angle `theta`.
    pub fn gains(&self, theta: f64) -> Gains {
        if self.eb.is_none() {
            return (self.g1 * self.g1, self.a.norm_sqr());
        }
        let (c, s) = (theta.cos(), theta.sin());
        let y = self.a.norm() * c + self.b * s;
        ((self.g1 * c).powi(2), y * y)
    }

    /// Common beam maximizing the smaller common SINR when the private streams leave
    /// interference-plus-noise `n1`, `n2` at the relays. On the common arc the relay-1 SINR
    /// falls and the relay-2 SINR rises, so the optimum is their crossing, clamped to the arc.
    pub fn common_beam(&self, n1: f64, n2: f64) -> f64 {
        if self.eb.is_none() {
            return 0.0;
        }
        let t = (self.g1 * (n2 / n1).sqrt() - self.a.norm()).atan2(self.b);
        t.clamp(0.0, self.theta_ymax())
    }

    pub fn beam(&self, theta: f64) -> CMatrix {
        match &self.eb {
            None => self.ea.clone(),
            Some(eb) => self.ea.scale(theta.cos()) + eb.scale_c(C64::from_polar(theta.sin(), self.a.arg())),
        }
    }
}

/// A point of the beam/power parameter space; power fractions of the private streams
/// are `f1`, `f2`, the common stream takes the rest.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BeamPoint {
    pub order: EncodingOrder,
    pub f1: f64,
    pub f2: f64,
    pub t1: f64,
    pub t2: f64,
    pub tc: f64,
}

impl BeamPoint {
    /// Same private streams with the best common beam.
    fn with_common_beam(mut self, geo: &BeamGeometry, p_s: f64) -> Self {
        let (x1, y1) = geo.gains(self.t1);
        let (x2, y2) = geo.gains(self.t2);
        let n1 = 1.0 + p_s * (self.f1 * x1 + self.f2 * x2);
        let n2 = 1.0 + p_s * (self.f1 * y1 + self.f2 * y2);
        self.tc = geo.common_beam(n1, n2);
        self
    }

    fn rates(&self, geo: &BeamGeometry, p_s: f64) -> RateTriple {
        let fc = (1.0 - self.f1 - self.f2).max(0.0);
        let sc = |g: Gains, f: f64| (g.0 * f * p_s, g.1 * f * p_s);
        rates_from_gains(
            self.order,
            sc(geo.gains(self.t1), self.f1),
            sc(geo.gains(self.t2), self.f2),
            sc(geo.gains(self.tc), fc),
        )
    }

    fn in_bounds(&self, arcs: &[(f64, f64); 3]) -> bool {
        let inside = |t: f64, (lo, hi): (f64, f64)| t >= lo - 1e-15 && t <= hi + 1e-15;
        self.f1 >= 0.0
            && self.f2 >= 0.0
            && self.f1 + self.f2 <= 1.0 + 1e-15
            && inside(self.tc, arcs[0])
            && inside(self.t2, arcs[1])
            && inside(self.t1, arcs[2])
    }

    fn to_vec(self) -> [f64; 4] {
        [self.t1, self.t2, self.f1, self.f2]
    }

    /// Private-stream coordinates; the common beam is filled in by [`Self::with_common_beam`].
    fn from_slice(order: EncodingOrder, x: &[f64]) -> Self {
        BeamPoint { order, t1: x[0], t2: x[1], tc: 0.0, f1: x[2], f2: x[3] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BcSupportPoint {
    pub rates: RateTriple,
    pub beam: BeamPoint,
}

/// One time-sharing component of a membership witness.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WitnessComponent {
    pub weight: f64,
    pub params: BcParams,
    pub rates: RateTriple,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BcWitness {
    pub components: Vec<WitnessComponent>,
}

impl BcWitness {
    /// Time-shared rates.
    pub fn rates(&self) -> RateTriple {
        let mut s = [0.0; 3];
        for c in &self.components {
            for (k, v) in c.rates.as_array().iter().enumerate() {
                s[k] += c.weight * v;
            }
        }
        RateTriple::from_array(s)
    }

    /// Re-evaluates every component from its covariances.
    pub fn verify(&self, inst: &ChannelInstance, target: &RateTriple, tol: f64) -> Result<bool> {
        let mut s = [0.0; 3];
        for c in &self.components {
            let r = bc_rates(inst, &c.params)?;
            for (k, v) in r.as_array().iter().enumerate() {
                s[k] += c.weight * v;
            }
        }
        let w: f64 = self.components.iter().map(|c| c.weight).sum();
        Ok((w - 1.0).abs() < 1e-9 && RateTriple::from_array(s).dominates(target, tol))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Membership {
    Inside(BcWitness),
    NotFound,
}

impl Membership {
    pub fn is_inside(&self) -> bool {
        matches!(self, Membership::Inside(_))
    }
}

/// Sampled inner approximation of the broadcast region, stored as support points.
#[derive(Debug, Clone)]
pub struct BcRegion {
    p_s: f64,
    geo: BeamGeometry,
    single_user: [f64; 2],
    points: Vec<BcSupportPoint>,
}

fn weight_grid(n: usize) -> Vec<[f64; 3]> {
    let mut out = Vec::new();
    let denom = n as f64 + 3.0 * TIE_EPS;
    for i in 0..=n {
        for j in 0..=n - i {
            let k = n - i - j;
            out.push([(i as f64 + TIE_EPS) / denom, (j as f64 + TIE_EPS) / denom, (k as f64 + TIE_EPS) / denom]);
        }
    }
    out
}

fn dot(w: &[f64; 3], r: &RateTriple) -> f64 {
    w[0] * r.r1 + w[1] * r.r2 + w[2] * r.rc
}

#[derive(Clone, Copy)]
struct Candidate {
    score: f64,
    index: usize,
    beam: BeamPoint,
}

fn better(a: Candidate, b: Candidate) -> Candidate {
    if b.score > a.score || (b.score == a.score && b.index < a.index) {
        b
    } else {
        a
    }
}

impl BcRegion {
    pub fn build(inst: &ChannelInstance, effort: Effort) -> Self {
        let geo = BeamGeometry::new(inst);
        let p_s = inst.p_s;
        let single_user = [(1.0 + p_s * inst.g_norm_sq(0)).log2(), (1.0 + p_s * inst.g_norm_sq(1)).log2()];
        let mut region = BcRegion { p_s, geo, single_user, points: Vec::new() };
        if p_s == 0.0 {
            region.points.push(BcSupportPoint {
                rates: RateTriple::ZERO,
                beam: BeamPoint { order: EncodingOrder::Pi12, f1: 0.0, f2: 0.0, t1: PI, t2: FRAC_PI_2, tc: 0.0 },
            });
            return region;
        }
        let arcs = region.geo.arcs();
        let nb = effort.beam_points();
        let ts: Vec<Vec<f64>> = arcs.iter().map(|&(lo, hi)| linspace(lo, hi, nb)).collect();
        let gains: Vec<Vec<Gains>> = ts.iter().map(|t| t.iter().map(|&x| region.geo.gains(x)).collect()).collect();
        let np = effort.power_steps();
        let mut splits = Vec::new();
        for order in [EncodingOrder::Pi12, EncodingOrder::Pi21] {
            for i in 0..=np {
                for j in 0..=np - i {
                    splits.push((order, i as f64 / np as f64, j as f64 / np as f64));
                }
            }
        }
        let weights = weight_grid(effort.direction_steps());
        let per_split = nb * nb;
        let init = || {
            vec![
                Candidate {
                    score: f64::NEG_INFINITY,
                    index: usize::MAX,
                    beam: BeamPoint { order: EncodingOrder::Pi12, f1: 0.0, f2: 0.0, t1: 0.0, t2: 0.0, tc: 0.0 },
                };
                weights.len()
            ]
        };
        let best = splits
            .par_iter()
            .enumerate()
            .fold(init, |mut acc, (si, &(order, f1, f2))| {
                let fc = (1.0 - f1 - f2).max(0.0);
                for (i1, g1) in gains[2].iter().enumerate() {
                    let s1 = (g1.0 * f1 * p_s, g1.1 * f1 * p_s);
                    for (i2, g2) in gains[1].iter().enumerate() {
                        let s2 = (g2.0 * f2 * p_s, g2.1 * f2 * p_s);
                        let tc = region.geo.common_beam(1.0 + s1.0 + s2.0, 1.0 + s1.1 + s2.1);
                        let gc = region.geo.gains(tc);
                        let r = rates_from_gains(order, s1, s2, (gc.0 * fc * p_s, gc.1 * fc * p_s));
                        let index = si * per_split + i1 * nb + i2;
                        for (w, slot) in weights.iter().zip(acc.iter_mut()) {
                            let score = dot(w, &r);
                            if score > slot.score {
                                *slot = Candidate {
                                    score,
                                    index,
                                    beam: BeamPoint { order, f1, f2, t1: ts[2][i1], t2: ts[1][i2], tc },
                                };
                            }
                        }
                    }
                }
                acc
            })
            .reduce(init, |a, b| a.into_iter().zip(b).map(|(x, y)| better(x, y)).collect());

        let step = (0.5 / nb as f64).max(0.5 / np as f64);
        let refined: Vec<BcSupportPoint> =
            weights.par_iter().zip(best.par_iter()).map(|(w, cand)| region.refine(w, cand.beam, &arcs, step)).collect();
        for p in refined {
            let dup = region.points.iter().any(|q| {
                (q.rates.r1 - p.rates.r1).abs() < 1e-12
                    && (q.rates.r2 - p.rates.r2).abs() < 1e-12
                    && (q.rates.rc - p.rates.rc).abs() < 1e-12
            });
            if !dup {
                region.points.push(p);
            }
        }
        region
    }

    fn refine(&self, w: &[f64; 3], start: BeamPoint, arcs: &[(f64, f64); 3], step: f64) -> BcSupportPoint {
        let order = start.order;
        let f = |x: &[f64]| {
            let bp = BeamPoint::from_slice(order, x).with_common_beam(&self.geo, self.p_s);
            bp.in_bounds(arcs).then(|| dot(w, &bp.rates(&self.geo, self.p_s)))
        };
        let x0 = start.to_vec();
        let f0 = dot(w, &start.rates(&self.geo, self.p_s));
        let (x, v) = compass_search(f, &x0, f0, step, 1e-7, 4000);
        let (x, v) = nelder_mead_max(f, &x, v, step, 1e-10, 2000);
        let (x, _) = compass_search(f, &x, v, step * 0.1, 1e-9, 2000);
        let beam = BeamPoint::from_slice(order, &x).with_common_beam(&self.geo, self.p_s);
        BcSupportPoint { rates: beam.rates(&self.geo, self.p_s), beam }
    }

    pub fn points(&self) -> &[BcSupportPoint] {
        &self.points
    }

    /// Single-stream limits log2(1 + P_s‖g_i‖²).
    pub fn single_user_rates(&self) -> [f64; 2] {
        self.single_user
    }

    /// Covariances realizing a sampled beam point.
    pub fn params(&self, beam: &BeamPoint) -> BcParams {
        let q = |t: f64, f: f64| CMatrix::outer(&self.geo.beam(t)).scale(f * self.p_s);
        BcParams {
            order: beam.order,
            q1: q(beam.t1, beam.f1),
            q2: q(beam.t2, beam.f2),
            qc: q(beam.tc, (1.0 - beam.f1 - beam.f2).max(0.0)),
        }
    }

    /// Quick necessary condition from the single-stream limits.
    pub fn may_contain(&self, t: &RateTriple, tol: f64) -> bool {
        let [u1, u2] = self.single_user;
        t.r1 <= u1 + tol && t.r2 <= u2 + tol && t.rc <= u1.min(u2) + tol
    }

    /// Time-sharing weights over the support points whose combination dominates `target`.
    pub fn hull_weights(&self, target: &RateTriple) -> Result<Option<Vec<(usize, f64)>>> {
        let mut lp = Problem::new(OptimizationDirection::Maximize);
        let lam: Vec<_> = self.points.iter().map(|_| lp.add_var(0.0, (0.0, f64::INFINITY))).collect();
        let margin = lp.add_var(1.0, (-1e3, 1e3));
        lp.add_constraint(lam.iter().map(|&v| (v, 1.0)).collect::<Vec<_>>().as_slice(), ComparisonOp::Eq, 1.0);
        for (d, tv) in target.as_array().iter().enumerate() {
            let mut expr: Vec<_> = lam.iter().zip(&self.points).map(|(&v, p)| (v, p.rates.as_array()[d])).collect();
            expr.push((margin, -1.0));
            lp.add_constraint(expr.as_slice(), ComparisonOp::Ge, *tv);
        }
        let sol = lp
            .solve()
            .map_err(|e| RelayError::Lp(e.to_string()))?
            .into_solution()
            .map_err(|_| RelayError::Lp("solve interrupted".into()))?;
        if sol.var_value(margin) < -1e-9 {
            return Ok(None);
        }
        let mut w: Vec<(usize, f64)> =
            lam.iter().enumerate().map(|(k, &v)| (k, sol.var_value(v))).filter(|&(_, x)| x > 1e-12).collect();
        let total: f64 = w.iter().map(|x| x.1).sum();
        for x in &mut w {
            x.1 /= total;
        }
        Ok(Some(w))
    }

    pub fn membership(&self, inst: &ChannelInstance, target: &RateTriple) -> Result<Membership> {
        if target.r1 <= 0.0 && target.r2 <= 0.0 && target.rc <= 0.0 {
            let params = BcParams::zero(inst.source_antennas());
            return Ok(Membership::Inside(BcWitness {
                components: vec![WitnessComponent { weight: 1.0, params, rates: RateTriple::ZERO }],
            }));
        }
        if !self.may_contain(target, 1e-12) {
            return Ok(Membership::NotFound);
        }
        let Some(weights) = self.hull_weights(target)? else {
            return Ok(Membership::NotFound);
        };
        let witness = BcWitness {
            components: weights
                .iter()
                .map(|&(k, weight)| {
                    let p = &self.points[k];
                    WitnessComponent { weight, params: self.params(&p.beam), rates: p.rates }
                })
                .collect(),
        };
        if witness.verify(inst, target, 1e-8)? {
            Ok(Membership::Inside(witness))
        } else {
            warn!("broadcast witness failed re-verification for {target:?}");
            Ok(Membership::NotFound)
        }
    }
}

/// Searches the sampled broadcast region for a point dominating `triple`.
///
/// `NotFound` is not a proof of exclusion; the search is an inner approximation.
pub fn bc_membership(inst: &ChannelInstance, triple: &RateTriple, effort: Effort) -> Result<Membership> {
    BcRegion::build(inst, effort).membership(inst, triple)
}

/// Maximum of R1 + R2 with no common stream.
pub fn bc_sum_capacity(inst: &ChannelInstance) -> Result<f64> {
    if inst.p_s == 0.0 {
        return Ok(0.0);
    }
    let geo = BeamGeometry::new(inst);
    let arcs = geo.arcs();
    let n = 33;
    let t1s = linspace(arcs[2].0, arcs[2].1, n);
    let t2s = linspace(arcs[1].0, arcs[1].1, n);
    let fs = linspace(0.0, 1.0, n);
    let mut best: Option<(f64, BeamPoint)> = None;
    for order in [EncodingOrder::Pi12, EncodingOrder::Pi21] {
        for &t1 in &t1s {
            for &t2 in &t2s {
                for &f1 in &fs {
                    let bp = BeamPoint { order, f1, f2: 1.0 - f1, t1, t2, tc: 0.0 };
                    let r = bp.rates(&geo, inst.p_s);
                    let v = r.r1 + r.r2;
                    if best.is_none_or(|(b, _)| v > b) {
                        best = Some((v, bp));
                    }
                }
            }
        }
    }
    let (v0, bp) = best.expect("nonempty grid");
    let order = bp.order;
    let f = |x: &[f64]| {
        let p = BeamPoint { order, t1: x[0], t2: x[1], tc: 0.0, f1: x[2], f2: 1.0 - x[2] };
        p.in_bounds(&[(0.0, 0.0), arcs[1], arcs[2]]).then(|| {
            let r = p.rates(&geo, inst.p_s);
            r.r1 + r.r2
        })
    };
    let (_, v) = compass_search(f, &[bp.t1, bp.t2, bp.f1], v0, 0.05, 1e-9, 5000);
    Ok(v)
}
