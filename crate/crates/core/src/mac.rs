//! Relays-to-destination multiple-access channel with a common message.

use serde::Serialize;

use crate::channel::ChannelInstance;
use crate::error::{RelayError, Result};
use crate::numerics::{linspace, C64};
use crate::rates::RateTriple;

const SATURATION_SLACK: f64 = 1e-12;
const RANK_TOL: f64 = 1e-12;

/// Common-signal power fractions `alpha`, `beta` and correlation `gamma`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MacParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: C64,
}

impl MacParams {
    pub fn new(alpha: f64, beta: f64, gamma: C64) -> Self {
        MacParams { alpha, beta, gamma }
    }

    pub const PRIVATE_ONLY: MacParams = MacParams { alpha: 0.0, beta: 0.0, gamma: C64 { re: 0.0, im: 0.0 } };

    /// Correlation phase aligned with h1†h2.
    pub fn aligned(inst: &ChannelInstance, alpha: f64, beta: f64, gamma_mag: f64) -> Self {
        MacParams::new(alpha, beta, C64::from_polar(gamma_mag, inst.h_inner().arg()))
    }

    /// Induced relay correlation ρ = γ√(αβ).
    pub fn rho(&self) -> C64 {
        self.gamma * (self.alpha * self.beta).sqrt()
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("alpha", self.alpha), ("beta", self.beta)] {
            if !(v.is_finite() && (0.0..=1.0).contains(&v)) {
                return Err(RelayError::parameter(name, format!("{v} not in [0, 1]")));
            }
        }
        let g = self.gamma.norm();
        if !(g.is_finite() && g <= 1.0 + 1e-12) {
            return Err(RelayError::parameter("gamma", format!("|gamma| = {g} exceeds 1")));
        }
        Ok(())
    }
}

/// Right-hand sides of the four region inequalities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MacCorner {
    pub r1_max: f64,
    pub r2_max: f64,
    pub sum_private_max: f64,
    pub sum_total: f64,
}

impl MacCorner {
    /// True when `t` satisfies all four inequalities within `tol`.
    pub fn contains(&self, t: &RateTriple, tol: f64) -> bool {
        t.r1 <= self.r1_max + tol
            && t.r2 <= self.r2_max + tol
            && t.r1 + t.r2 <= self.sum_private_max + tol
            && t.sum() <= self.sum_total + tol
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CorrelationResult {
    pub rho_mag: f64,
    pub rho_phase: f64,
    pub saturated: bool,
    pub max_sum_rate: f64,
}

/// log2 det(I + H Q H†) for a 2×2 Hermitian relay covariance, via det(I + Q H†H).
pub fn relay_logdet(inst: &ChannelInstance, q: [[C64; 2]; 2]) -> f64 {
    let n1 = inst.h_norm_sq(0);
    let n2 = inst.h_norm_sq(1);
    let c = inst.h_inner();
    let k = [[C64::new(n1, 0.0), c], [c.conj(), C64::new(n2, 0.0)]];
    let m = |i: usize, j: usize| {
        let v = q[i][0] * k[0][j] + q[i][1] * k[1][j];
        if i == j {
            v + 1.0
        } else {
            v
        }
    };
    (m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0)).re.log2()
}

fn diag_logdet(inst: &ChannelInstance, q1: f64, q2: f64) -> f64 {
    let a = q1 * inst.h_norm_sq(0);
    let b = q2 * inst.h_norm_sq(1);
    (1.0 + a + b + q1 * q2 * inst.det_hh()).log2()
}

pub fn region_corner(inst: &ChannelInstance, params: &MacParams) -> Result<MacCorner> {
    params.validate()?;
    Ok(region_corner_unchecked(inst, params))
}

pub(crate) fn region_corner_unchecked(inst: &ChannelInstance, p: &MacParams) -> MacCorner {
    let (p1, p2) = (inst.p_r1, inst.p_r2);
    let q1 = (1.0 - p.alpha) * p1;
    let q2 = (1.0 - p.beta) * p2;
    let off = p.gamma * (p.alpha * p.beta * p1 * p2).sqrt();
    let q = [[C64::new(p1, 0.0), off], [off.conj(), C64::new(p2, 0.0)]];
    MacCorner {
        r1_max: (1.0 + q1 * inst.h_norm_sq(0)).log2(),
        r2_max: (1.0 + q2 * inst.h_norm_sq(1)).log2(),
        sum_private_max: diag_logdet(inst, q1, q2),
        sum_total: relay_logdet(inst, q),
    }
}

/// Sum rate log2 det(I + H Q_r H†) at correlation magnitude `r` with the optimal phase.
pub fn sum_rate_at_rho(inst: &ChannelInstance, r: f64) -> f64 {
    let (p1, p2) = (inst.p_r1, inst.p_r2);
    let s = (p1 * p2).sqrt();
    let v = 1.0
        + p1 * inst.h_norm_sq(0)
        + p2 * inst.h_norm_sq(1)
        + p1 * p2 * inst.det_hh() * (1.0 - r * r)
        + 2.0 * r * s * inst.h_inner().norm();
    v.log2()
}

pub fn sum_rate_vs_rho(inst: &ChannelInstance, rho_grid: &[f64]) -> Vec<(f64, f64)> {
    rho_grid.iter().map(|&r| (r, sum_rate_at_rho(inst, r))).collect()
}

/// |h1†h2| / (√(P_r1 P_r2) det(H†H)), infinite when H†H is singular.
fn unclamped_rho(inst: &ChannelInstance) -> f64 {
    let d = inst.det_hh();
    let c = inst.h_inner().norm();
    if d <= RANK_TOL * inst.h_norm_sq(0) * inst.h_norm_sq(1) {
        return f64::INFINITY;
    }
    let s = (inst.p_r1 * inst.p_r2).sqrt();
    if s == 0.0 {
        return if c == 0.0 { 0.0 } else { f64::INFINITY };
    }
    c / (s * d)
}

pub fn optimal_correlation(inst: &ChannelInstance) -> Result<CorrelationResult> {
    inst.geometry()?;
    if inst.p_r1 <= 0.0 || inst.p_r2 <= 0.0 {
        return Err(RelayError::ZeroRelayPower(format!(
            "optimal correlation needs p_r1, p_r2 > 0 (got {}, {})",
            inst.p_r1, inst.p_r2
        )));
    }
    let raw = unclamped_rho(inst);
    let saturated = raw >= 1.0 - SATURATION_SLACK;
    let (p1, p2) = (inst.p_r1, inst.p_r2);
    let (n1, n2, d) = (inst.h_norm_sq(0), inst.h_norm_sq(1), inst.det_hh());
    let c = inst.h_inner().norm();
    let (rho_mag, max_sum_rate) = if saturated {
        (1.0, (1.0 + p1 * n1 + p2 * n2 + 2.0 * (p1 * p2).sqrt() * c).log2())
    } else {
        (raw, (1.0 + p1 * n1 + p2 * n2 + p1 * p2 * d + c * c / d).log2())
    };
    Ok(CorrelationResult { rho_mag, rho_phase: inst.h_inner().arg(), saturated, max_sum_rate })
}

/// SNR gain of the optimally correlated relays over independent relays.
pub fn delta_snr(inst: &ChannelInstance) -> f64 {
    let c = inst.h_inner().norm();
    if c < 1e-12 {
        return 0.0;
    }
    let raw = unclamped_rho(inst);
    if raw >= 1.0 - SATURATION_SLACK {
        2.0 * (inst.p_r1 * inst.p_r2).sqrt() * c
    } else {
        c * c / inst.det_hh()
    }
}

/// A point on the maximum sum-rate face together with the parameters that support it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SubregionPoint {
    pub params: MacParams,
    pub triple: RateTriple,
}

/// Parameters on the maximum sum-rate face for a given √α ∈ [|ρ|opt, 1].
pub fn subregion_params(inst: &ChannelInstance, rho_opt: f64, sqrt_alpha: f64) -> MacParams {
    let beta = if rho_opt == 0.0 { 0.0 } else { (rho_opt / sqrt_alpha).powi(2).min(1.0) };
    MacParams::aligned(inst, sqrt_alpha * sqrt_alpha, beta, 1.0)
}

/// Vertices of the face polygon {R1 ≤ m1, R2 ≤ m2, R1+R2 ≤ m12, Rc = S − R1 − R2}.
pub fn face_vertices(corner: &MacCorner) -> Vec<RateTriple> {
    let s = corner.sum_total;
    let (m1, m2) = (corner.r1_max, corner.r2_max);
    let m12 = corner.sum_private_max.min(m1 + m2);
    let raw = [(0.0, 0.0), (m1, 0.0), (m1, (m12 - m1).max(0.0)), ((m12 - m2).max(0.0), m2), (0.0, m2)];
    let mut out: Vec<RateTriple> = Vec::new();
    for (a, b) in raw {
        let t = RateTriple::new(a, b, (s - a - b).max(0.0));
        if !out.iter().any(|o| (o.r1 - t.r1).abs() < 1e-12 && (o.r2 - t.r2).abs() < 1e-12) {
            out.push(t);
        }
    }
    out
}

/// Samples the maximum sum-rate face uniformly in √α and returns the face vertices for each sample.
pub fn subregion_boundary(inst: &ChannelInstance, n_samples: usize) -> Result<Vec<SubregionPoint>> {
    if n_samples < 2 {
        return Err(RelayError::parameter("n_samples", "need at least 2 samples"));
    }
    let opt = optimal_correlation(inst)?;
    let mut out: Vec<SubregionPoint> = Vec::new();
    for sa in linspace(opt.rho_mag, 1.0, n_samples) {
        let params = subregion_params(inst, opt.rho_mag, sa);
        let corner = region_corner_unchecked(inst, &params);
        for triple in face_vertices(&corner) {
            let dup = out.iter().any(|p| {
                (p.triple.r1 - triple.r1).abs() < 1e-12
                    && (p.triple.r2 - triple.r2).abs() < 1e-12
                    && (p.triple.rc - triple.rc).abs() < 1e-12
            });
            if !dup {
                out.push(SubregionPoint { params, triple });
            }
        }
    }
    Ok(out)
}

/// Smallest common rate needed to operate on the maximum sum-rate face.
pub fn rc_threshold(inst: &ChannelInstance) -> Result<f64> {
    let opt = optimal_correlation(inst)?;
    let rho = opt.rho_mag;
    if rho == 0.0 {
        return Ok(0.0);
    }
    let (p1, p2) = (inst.p_r1, inst.p_r2);
    let d = inst.det_hh();
    let k = ((p2 * inst.h_norm_sq(1) + p1 * p2 * d) / (p1 * inst.h_norm_sq(0) + p1 * p2 * d)).sqrt();
    // The private sum is concave in alpha, so clamping the stationary point to the feasible range is exact.
    let alpha = (k * rho).clamp(rho * rho, 1.0);
    let beta = (rho * rho / alpha).min(1.0);
    let private = diag_logdet(inst, (1.0 - alpha) * p1, (1.0 - beta) * p2);
    Ok((opt.max_sum_rate - private).max(0.0))
}
