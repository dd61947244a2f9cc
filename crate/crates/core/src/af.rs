//! Amplify-and-forward: rate evaluation and the alternating optimization of
//! relay gains and source covariance.

use serde::Serialize;

use crate::bounds::bound_broadcast;
use crate::channel::ChannelInstance;
use crate::error::{RelayError, Result};
use crate::numerics::{eig_hermitian, linspace, log2_det, maximize_1d, svd, waterfill_nonneg, CMatrix, C64};

const PEAK_SLACK: f64 = 1e-9;
const FD_STEP: f64 = 1e-6;
const BRACKET_POINTS: usize = 201;

/// Relay amplitudes; relay 1 additionally rotates by `phi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AfGains {
    pub a: f64,
    pub b: f64,
    pub phi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AfState {
    pub q_s: CMatrix,
    pub gains: AfGains,
    pub q_e: CMatrix,
    pub f: CMatrix,
    pub rate: f64,
    pub iteration: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum GainBranch {
    /// Relay 2 at full power, relay 1 optimized.
    OptimizeA,
    /// Relay 1 at full power, relay 2 optimized.
    OptimizeB,
}

/// Diagnostics of one pass of the loop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AfStep {
    pub iteration: usize,
    pub a_peak: f64,
    pub b_peak: f64,
    pub branch: GainBranch,
    pub gains: AfGains,
    pub gain_rate: f64,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AfOutcome {
    pub state: AfState,
    pub converged: bool,
    pub history: Vec<AfStep>,
}

/// Largest amplitudes meeting the relay power constraints: `√(P_ri / (1 + g_i Q_s g_i†))`.
pub fn peaks(inst: &ChannelInstance, q_e: &CMatrix) -> (f64, f64) {
    ((inst.p_r1 / (1.0 + q_e[(0, 0)].re.max(0.0))).sqrt(), (inst.p_r2 / (1.0 + q_e[(1, 1)].re.max(0.0))).sqrt())
}

fn amplifier(g: &AfGains) -> CMatrix {
    let mut a = CMatrix::zeros(2, 2);
    a[(0, 0)] = C64::from_polar(g.a, g.phi);
    a[(1, 1)] = C64::new(g.b, 0.0);
    a
}

fn check_peaks(inst: &ChannelInstance, q_s: &CMatrix, g: &AfGains) -> Result<()> {
    let q_e = &inst.g * q_s * inst.g.adjoint();
    let (ap, bp) = peaks(inst, &q_e);
    for (relay, gain, peak) in [(1, g.a, ap), (2, g.b, bp)] {
        if !(gain >= 0.0 && gain <= peak * (1.0 + PEAK_SLACK) + PEAK_SLACK) {
            return Err(RelayError::PeakViolation { relay, gain, peak });
        }
    }
    Ok(())
}

/// Effective channel `F = Λ^{-1/2} U H A G` where `I + H A A† H† = U† Λ U`.
pub fn whitened_channel(inst: &ChannelInstance, gains: &AfGains) -> Result<CMatrix> {
    let a = amplifier(gains);
    let ha = &inst.h * &a;
    let k = CMatrix::identity(inst.dest_antennas()) + &ha * ha.adjoint();
    let e = eig_hermitian(&k.hermitian_part())?;
    let inv: Vec<f64> = e.values.iter().map(|l| 1.0 / l.sqrt()).collect();
    Ok(CMatrix::diag_real(&inv) * &e.basis * &ha * &inst.g)
}

/// Quotient form log2 det(K + HAGQG†A†H†) − log2 det(K) and whitened form log2 det(I + F Q F†).
pub fn af_rate_forms(inst: &ChannelInstance, q_s: &CMatrix, gains: &AfGains) -> Result<(f64, f64)> {
    let a = amplifier(gains);
    let ha = &inst.h * &a;
    let n = inst.dest_antennas();
    let k = CMatrix::identity(n) + &ha * ha.adjoint();
    let hag = &ha * &inst.g;
    let quotient = log2_det(&(&k + &hag * q_s * hag.adjoint())) - log2_det(&k);
    let f = whitened_channel(inst, gains)?;
    let whitened = log2_det(&(CMatrix::identity(n) + &f * q_s * f.adjoint()));
    Ok((quotient, whitened))
}

/// AF rate for a source covariance and relay gains within their peaks.
pub fn af_rate(inst: &ChannelInstance, q_s: &CMatrix, gains: &AfGains) -> Result<f64> {
    check_peaks(inst, q_s, gains)?;
    Ok(af_rate_forms(inst, q_s, gains)?.0.max(0.0))
}

/// Closed-form rate in terms of `Q^e = G Q_s G†`, amplitudes and relay-1 phase.
pub fn af_scalar_objective(inst: &ChannelInstance, q_e: &CMatrix, a: f64, b: f64, phi: f64) -> f64 {
    let (n1, n2, d, c) = (inst.h_norm_sq(0), inst.h_norm_sq(1), inst.det_hh(), inst.h_inner());
    let tr = q_e.trace().re;
    let det = (q_e[(0, 0)] * q_e[(1, 1)] - q_e[(0, 1)] * q_e[(1, 0)]).re;
    let (a2, b2) = (a * a, b * b);
    let cross = 2.0 * (C64::from_polar(a * b, -phi) * c * q_e[(1, 0)]).re;
    let num = a2 * b2 * d * (tr + det) + a2 * n1 * q_e[(0, 0)].re + b2 * n2 * q_e[(1, 1)].re + cross;
    let den = 1.0 + a2 * n1 + b2 * n2 + a2 * b2 * d;
    (1.0 + num / den).log2()
}

/// Relay-1 phase aligning the cross term: ∠(h1†h2 · q21).
pub fn optimal_phase(inst: &ChannelInstance, q_e: &CMatrix) -> f64 {
    (inst.h_inner() * q_e[(1, 0)]).arg()
}

/// Maximizes `f` on `[0, hi]` by locating sign changes of its finite-difference derivative.
fn stationary_max<F: Fn(f64) -> f64>(f: F, hi: f64) -> Result<(f64, f64)> {
    if hi <= 0.0 {
        return Ok((0.0, f(0.0)));
    }
    let h = FD_STEP * hi.max(1.0);
    let deriv = |x: f64| {
        let (l, r) = ((x - h).max(0.0), (x + h).min(hi));
        (f(r) - f(l)) / (r - l)
    };
    let xs = linspace(0.0, hi, BRACKET_POINTS);
    let ds: Vec<f64> = xs.iter().map(|&x| deriv(x)).collect();
    if ds.iter().any(|d| !d.is_finite()) {
        return Ok(maximize_1d(&f, 0.0, hi, 1e-10)?);
    }
    let mut cands = vec![0.0, hi];
    for i in 0..xs.len() - 1 {
        if ds[i] > 0.0 && ds[i + 1] <= 0.0 {
            let (mut lo, mut up) = (xs[i], xs[i + 1]);
            for _ in 0..100 {
                let mid = 0.5 * (lo + up);
                if deriv(mid) > 0.0 {
                    lo = mid;
                } else {
                    up = mid;
                }
                if up - lo < 1e-12 * hi.max(1.0) {
                    break;
                }
            }
            cands.push(0.5 * (lo + up));
        }
    }
    let mut best = (0.0, f64::NEG_INFINITY);
    for x in cands {
        let v = f(x);
        if !v.is_finite() {
            return Ok(maximize_1d(&f, 0.0, hi, 1e-10)?);
        }
        if v > best.1 {
            best = (x, v);
        }
    }
    Ok(best)
}

/// One gain update for a fixed source covariance: returns the chosen gains, branch and peaks.
pub fn gain_step(inst: &ChannelInstance, q_s: &CMatrix) -> Result<(AfGains, GainBranch, f64, (f64, f64))> {
    let q_e = &inst.g * q_s * inst.g.adjoint();
    let (ap, bp) = peaks(inst, &q_e);
    let phi = optimal_phase(inst, &q_e);
    let (a_opt, ra) = stationary_max(|a| af_scalar_objective(inst, &q_e, a, bp, phi), ap)?;
    let (b_opt, rb) = stationary_max(|b| af_scalar_objective(inst, &q_e, ap, b, phi), bp)?;
    let (gains, branch, r) = if ra >= rb {
        (AfGains { a: a_opt, b: bp, phi }, GainBranch::OptimizeA, ra)
    } else {
        (AfGains { a: ap, b: b_opt, phi }, GainBranch::OptimizeB, rb)
    };
    Ok((gains, branch, r, (ap, bp)))
}

fn make_state(inst: &ChannelInstance, q_s: CMatrix, gains: AfGains, iteration: usize) -> Result<AfState> {
    let rate = af_rate(inst, &q_s, &gains)?;
    let q_e = &inst.g * &q_s * inst.g.adjoint();
    let f = whitened_channel(inst, &gains)?;
    Ok(AfState { q_s, gains, q_e, f, rate, iteration })
}

/// Alternates gain updates and waterfilled source covariance updates, keeping the best state seen.
pub fn af_optimize(inst: &ChannelInstance, max_iter: usize, tol: f64) -> Result<AfOutcome> {
    let m = inst.source_antennas();
    let mut q = CMatrix::identity(m).scale(inst.p_s / m as f64);
    let mut best: Option<AfState> = None;
    let mut history = Vec::new();
    let mut prev: Option<f64> = None;
    let mut converged = false;
    for it in 0..max_iter.max(1) {
        let (gains, branch, gain_rate, (ap, bp)) = gain_step(inst, &q)?;
        let f = whitened_channel(inst, &gains)?;
        let s = svd(&f)?;
        let sq: Vec<f64> = s.singular_values.iter().map(|x| x * x).collect();
        let w = waterfill_nonneg(&sq, inst.p_s);
        let q_new = (&s.v * CMatrix::diag_real(&w.powers) * s.v.adjoint()).hermitian_part();

        let q_e_new = &inst.g * &q_new * inst.g.adjoint();
        let (ap2, bp2) = peaks(inst, &q_e_new);
        let clipped = AfGains { a: gains.a.min(ap2), b: gains.b.min(bp2), phi: gains.phi };
        let cand_old = make_state(inst, q.clone(), gains, it)?;
        let cand_new = make_state(inst, q_new.clone(), clipped, it)?;
        let rate = cand_old.rate.max(cand_new.rate);
        for cand in [cand_old, cand_new] {
            if best.as_ref().is_none_or(|b| cand.rate > b.rate) {
                best = Some(cand);
            }
        }
        history.push(AfStep { iteration: it, a_peak: ap, b_peak: bp, branch, gains, gain_rate, rate });
        q = q_new;
        if prev.is_some_and(|p| (rate - p).abs() < tol) {
            converged = true;
            break;
        }
        prev = Some(rate);
    }
    Ok(AfOutcome { state: best.expect("at least one iteration"), converged, history })
}

/// `bound_broadcast − AF rate` at equal relay powers for each entry of `power_grid`.
pub fn af_asymptotic_gap(inst: &ChannelInstance, power_grid: &[f64]) -> Result<Vec<(f64, f64)>> {
    let bound = bound_broadcast(inst)?;
    power_grid
        .iter()
        .map(|&p| {
            let r = af_optimize(&inst.with_relay_power(p, p), 100, 1e-6)?;
            Ok((p, bound - r.state.rate))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{angled_instance, named_instance, NamedMatrix::*};

    fn weak_row_instance(g2_sq: f64) -> ChannelInstance {
        let phi = 46.40f64.to_radians();
        angled_instance((1.0, g2_sq.sqrt()), phi, (1.0, 1.0), phi, 10.0, 5.0, 5.0).unwrap()
    }

    #[test]
    fn zero_gains_zero_rate() {
        let inst = named_instance(Mid, Mid, 10.0, 5.0, 5.0).unwrap();
        let r = af_rate(&inst, &CMatrix::diag_real(&[5.0, 5.0]), &AfGains { a: 0.0, b: 0.0, phi: 0.0 }).unwrap();
        assert_eq!(r, 0.0);
    }

    #[test]
    fn decoupled_identity_chain() {
        let inst = named_instance(Ortho, Ortho, 10.0, 5.0, 5.0).unwrap();
        let q = CMatrix::diag_real(&[5.0, 5.0]);
        let a = (5.0f64 / 6.0).sqrt();
        let g = AfGains { a, b: a, phi: 0.0 };
        let r = af_rate(&inst, &q, &g).unwrap();
        let snr = 5.0 * a * a / (1.0 + a * a);
        assert!((r - 2.0 * (1.0 + snr).log2()).abs() < 1e-12);
        assert!((r - 2.0 * (1.0 + 25.0 / 11.0f64).log2()).abs() < 1e-12);
        let q_e = &inst.g * &q * inst.g.adjoint();
        assert!((af_scalar_objective(&inst, &q_e, a, a, 0.0) - r).abs() < 1e-12);
    }

    #[test]
    fn peak_violation_names_relay() {
        let inst = named_instance(Ortho, Ortho, 10.0, 5.0, 5.0).unwrap();
        let err = af_rate(&inst, &CMatrix::diag_real(&[5.0, 5.0]), &AfGains { a: 0.5, b: 2.0, phi: 0.0 }).unwrap_err();
        assert!(matches!(err, RelayError::PeakViolation { relay: 2, .. }));
    }

    #[test]
    fn scalar_objective_matches_matrix_form() {
        let inst = ChannelInstance::new(
            CMatrix::from_rows(&[
                vec![C64::new(0.3, 0.2), C64::new(-0.5, 0.1)],
                vec![C64::new(0.1, -0.7), C64::new(0.4, 0.4)],
            ]),
            CMatrix::from_rows(&[
                vec![C64::new(0.9, 0.0), C64::new(0.2, -0.3)],
                vec![C64::new(-0.1, 0.4), C64::new(0.6, 0.1)],
            ]),
            4.0,
            2.0,
            3.0,
        )
        .unwrap();
        let q = CMatrix::from_rows(&[
            vec![C64::new(2.5, 0.0), C64::new(0.3, 0.4)],
            vec![C64::new(0.3, -0.4), C64::new(1.5, 0.0)],
        ]);
        let q_e = &inst.g * &q * inst.g.adjoint();
        let phi = optimal_phase(&inst, &q_e);
        let (ap, bp) = peaks(&inst, &q_e);
        let g = AfGains { a: 0.7 * ap, b: 0.9 * bp, phi };
        let r = af_rate(&inst, &q, &g).unwrap();
        assert!((af_scalar_objective(&inst, &q_e, g.a, g.b, phi) - r).abs() < 1e-9);
        let (qf, wf) = af_rate_forms(&inst, &q, &g).unwrap();
        assert!((qf - wf).abs() < 1e-9);
        for d in [-0.01, 0.01] {
            assert!(af_scalar_objective(&inst, &q_e, g.a, g.b, phi + d) <= r + 1e-12);
        }
        assert_eq!(af_scalar_objective(&inst, &CMatrix::zeros(2, 2), 1.0, 1.0, 0.0), 0.0);
    }

    #[test]
    fn single_relay_reduction() {
        let inst = named_instance(Mid, Mid, 10.0, 5.0, 5.0).unwrap();
        let q_e = &inst.g * CMatrix::diag_real(&[5.0, 5.0]) * inst.g.adjoint();
        let b: f64 = 0.8;
        let n2 = inst.h_norm_sq(1);
        let want = (1.0 + b * b * n2 * q_e[(1, 1)].re / (1.0 + b * b * n2)).log2();
        assert!((af_scalar_objective(&inst, &q_e, 0.0, b, 0.3) - want).abs() < 1e-12);
    }

    #[test]
    fn identity_converges_fast() {
        let inst = named_instance(Ortho, Ortho, 10.0, 5.0, 5.0).unwrap();
        let out = af_optimize(&inst, 100, 1e-6).unwrap();
        assert!(out.converged && out.history.len() <= 3);
        let a = (5.0f64 / 6.0).sqrt();
        assert!((out.state.gains.a - a).abs() < 1e-9 && (out.state.gains.b - a).abs() < 1e-9);
    }

    #[test]
    fn full_power_caveat() {
        let strong = af_optimize(&weak_row_instance(0.16), 100, 1e-6).unwrap();
        let s0 = strong.history[0];
        assert!((s0.b_peak - 1.67).abs() < 0.01);
        assert!((s0.gains.b - s0.b_peak).abs() < 1e-3);
        let weak = af_optimize(&weak_row_instance(0.09), 100, 1e-6).unwrap();
        let w0 = weak.history[0];
        assert!((w0.b_peak - 1.85).abs() < 0.01);
        assert!(w0.gains.b < w0.b_peak - 0.05);
    }

    #[test]
    fn best_so_far_is_monotone_and_bounded() {
        let inst = named_instance(Mid, Parallel, 10.0, 5.0, 5.0).unwrap();
        let out = af_optimize(&inst, 100, 1e-6).unwrap();
        let max_hist = out.history.iter().map(|s| s.rate).fold(f64::NEG_INFINITY, f64::max);
        assert!((out.state.rate - max_hist).abs() < 1e-12);
        assert!(out.state.rate <= crate::bounds::upper_bound(&inst).unwrap().overall + 1e-9);
    }

    #[test]
    fn zero_relay_power_gap_is_bound() {
        let inst = named_instance(Mid, Mid, 10.0, 5.0, 5.0).unwrap();
        let gaps = af_asymptotic_gap(&inst, &[0.0]).unwrap();
        assert!((gaps[0].1 - bound_broadcast(&inst).unwrap()).abs() < 1e-12);
    }
}
