//! Cut-set upper bound: broadcast cut plus the two mixed cuts.

use serde::Serialize;

use crate::channel::ChannelInstance;
use crate::error::Result;
use crate::mac;
use crate::numerics::{maximize_1d, svd, waterfill_nonneg};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SideCut {
    /// Source and relay 1 on the transmit side: crosses source→relay 2 and relay 1→destination.
    WithRelay1,
    /// Source and relay 2 on the transmit side.
    WithRelay2,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UpperBoundReport {
    pub bound_bc: f64,
    pub bound_cut13: f64,
    pub bound_cut14: f64,
    pub overall: f64,
    pub argmax_rho_2: f64,
    pub argmax_rho_3: f64,
}

impl UpperBoundReport {
    /// Name of the expression attaining the minimum.
    pub fn active(&self) -> &'static str {
        if self.overall == self.bound_bc {
            "broadcast-cut"
        } else if self.overall == self.bound_cut13 {
            "side-cut-1"
        } else {
            "side-cut-2"
        }
    }
}

/// max log2 det(I + G Q G†) over tr(Q) ≤ P_s, by waterfilling on the squared singular values of G.
pub fn bound_broadcast(inst: &ChannelInstance) -> Result<f64> {
    if inst.p_s == 0.0 {
        return Ok(0.0);
    }
    let s = svd(&inst.g)?;
    let gains: Vec<f64> = s.singular_values.iter().map(|x| x * x).collect();
    let w = waterfill_nonneg(&gains, inst.p_s);
    Ok(gains.iter().zip(&w.powers).map(|(g, p)| (1.0 + g * p).log2()).sum())
}

/// The max-min over |ρ| of the destination cut and the mixed source/relay product.
///
/// Returns `(bound, argmax |ρ|)`.
pub fn bound_sidecut(inst: &ChannelInstance, which: SideCut) -> Result<(f64, f64)> {
    let (j_other, i_relay) = match which {
        SideCut::WithRelay1 => (1, 0),
        SideCut::WithRelay2 => (0, 1),
    };
    let src = (1.0 + inst.p_s * inst.g_norm_sq(j_other)).log2();
    let relay_snr = inst.relay_power(i_relay) * inst.h_norm_sq(i_relay);
    let env = |r: f64| {
        let second = src + (1.0 + (1.0 - r * r) * relay_snr).log2();
        mac::sum_rate_at_rho(inst, r).min(second)
    };
    let (r, v) = maximize_1d(env, 0.0, 1.0, 1e-10)?;
    Ok((v.max(0.0), r))
}

pub fn upper_bound(inst: &ChannelInstance) -> Result<UpperBoundReport> {
    let bound_bc = bound_broadcast(inst)?;
    let (bound_cut13, argmax_rho_2) = bound_sidecut(inst, SideCut::WithRelay1)?;
    let (bound_cut14, argmax_rho_3) = bound_sidecut(inst, SideCut::WithRelay2)?;
    let overall = bound_bc.min(bound_cut13).min(bound_cut14);
    Ok(UpperBoundReport { bound_bc, bound_cut13, bound_cut14, overall, argmax_rho_2, argmax_rho_3 })
}
