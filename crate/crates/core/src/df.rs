//! Decode-and-forward: the largest R1 + R2 + Rc supported by both the
//! broadcast hop and the multiple-access hop.

use microlp::{ComparisonOp, OptimizationDirection, Problem};
use rayon::prelude::*;
use serde::Serialize;

use crate::bc::{BcRegion, BcWitness, WitnessComponent};
use crate::bounds::{upper_bound, UpperBoundReport};
use crate::channel::ChannelInstance;
use crate::effort::Effort;
use crate::error::{RelayError, Result};
use crate::mac::{
    optimal_correlation, region_corner_unchecked, subregion_params, CorrelationResult, MacCorner, MacParams,
};
use crate::numerics::{compass_search, golden_max, linspace};
use crate::rates::RateTriple;

const CERT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ActiveBound {
    MacSum,
    BcSum,
    SideCut,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DfReport {
    pub rate: f64,
    pub witness_mac: MacParams,
    pub witness_triple: RateTriple,
    pub witness_bc: BcWitness,
    pub optimal_certificate: bool,
    pub active_bound: ActiveBound,
    /// Number of intersection linear programs solved.
    pub lp_solves: usize,
}

/// Best rate triple in the intersection of one MAC polytope and the sampled BC hull.
#[derive(Debug, Clone)]
pub struct Intersection {
    pub value: f64,
    pub triple: RateTriple,
    pub weights: Vec<(usize, f64)>,
}

/// max R1+R2+Rc over {MAC inequalities of `corner`} ∩ Co(BC support points).
pub fn intersect(region: &BcRegion, corner: &MacCorner) -> Result<Intersection> {
    let pts = region.points();
    let mut lp = Problem::new(OptimizationDirection::Maximize);
    let lam: Vec<_> = pts.iter().map(|_| lp.add_var(0.0, (0.0, f64::INFINITY))).collect();
    let r: Vec<_> = (0..3).map(|_| lp.add_var(1.0, (0.0, f64::INFINITY))).collect();
    lp.add_constraint(lam.iter().map(|&v| (v, 1.0)).collect::<Vec<_>>().as_slice(), ComparisonOp::Eq, 1.0);
    for (d, &rv) in r.iter().enumerate() {
        let mut expr: Vec<_> = lam.iter().zip(pts).map(|(&v, p)| (v, -p.rates.as_array()[d])).collect();
        expr.push((rv, 1.0));
        lp.add_constraint(expr.as_slice(), ComparisonOp::Le, 0.0);
    }
    lp.add_constraint([(r[0], 1.0)], ComparisonOp::Le, corner.r1_max.max(0.0));
    lp.add_constraint([(r[1], 1.0)], ComparisonOp::Le, corner.r2_max.max(0.0));
    lp.add_constraint([(r[0], 1.0), (r[1], 1.0)], ComparisonOp::Le, corner.sum_private_max.max(0.0));
    lp.add_constraint([(r[0], 1.0), (r[1], 1.0), (r[2], 1.0)], ComparisonOp::Le, corner.sum_total.max(0.0));
    let sol = lp
        .solve()
        .map_err(|e| RelayError::Lp(e.to_string()))?
        .into_solution()
        .map_err(|_| RelayError::Lp("solve interrupted".into()))?;
    let triple = RateTriple::new(sol.var_value(r[0]), sol.var_value(r[1]), sol.var_value(r[2]));
    let mut weights: Vec<(usize, f64)> =
        lam.iter().enumerate().map(|(k, &v)| (k, sol.var_value(v))).filter(|&(_, x)| x > 1e-12).collect();
    let total: f64 = weights.iter().map(|w| w.1).sum();
    for w in &mut weights {
        w.1 /= total;
    }
    Ok(Intersection { value: triple.sum(), triple, weights })
}

#[derive(Debug, Clone)]
struct Best {
    value: f64,
    params: MacParams,
    hit: Intersection,
}

struct Search<'a> {
    inst: &'a ChannelInstance,
    region: &'a BcRegion,
    lp_solves: std::sync::atomic::AtomicUsize,
}

impl Search<'_> {
    fn eval(&self, params: MacParams) -> Result<Best> {
        self.lp_solves.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
        let corner = region_corner_unchecked(self.inst, &params);
        let hit = intersect(self.region, &corner)?;
        Ok(Best { value: hit.value, params, hit })
    }

    /// Scans the maximum sum-rate face; returns the best point found.
    fn face_scan(&self, opt: &CorrelationResult, samples: usize) -> Result<Best> {
        let rho = opt.rho_mag;
        let mut best: Option<(f64, Best)> = None;
        for sa in linspace(rho, 1.0, samples) {
            let b = self.eval(subregion_params(self.inst, rho, sa))?;
            if best.as_ref().is_none_or(|(_, x)| b.value > x.value) {
                best = Some((sa, b));
            }
            if best.as_ref().is_some_and(|(_, x)| x.value >= opt.max_sum_rate - CERT_TOL) {
                break;
            }
        }
        let (sa0, mut best) = best.expect("at least two samples");
        if best.value < opt.max_sum_rate - CERT_TOL && rho < 1.0 {
            let h = (1.0 - rho) / (samples - 1) as f64;
            let (lo, hi) = ((sa0 - h).max(rho), (sa0 + h).min(1.0));
            let (sa, _) = golden_max(
                |sa| self.eval(subregion_params(self.inst, rho, sa)).map_or(f64::NEG_INFINITY, |b| b.value),
                lo,
                hi,
                1e-7,
            );
            let b = self.eval(subregion_params(self.inst, rho, sa))?;
            if b.value > best.value {
                best = b;
            }
        }
        Ok(best)
    }

    fn grid(&self, n: usize, gamma_mags: &[f64], target: f64) -> Result<Best> {
        let axis = linspace(0.0, 1.0, n);
        let cells: Vec<MacParams> = gamma_mags
            .iter()
            .flat_map(|&g| {
                let axis = &axis;
                axis.iter().flat_map(move |&a| axis.iter().map(move |&b| (a, b, g)))
            })
            .map(|(a, b, g)| MacParams::aligned(self.inst, a, b, g))
            .collect();
        let results: Vec<Best> = cells.par_iter().map(|&p| self.eval(p)).collect::<Result<_>>()?;
        let mut best = results[0].clone();
        for r in results.into_iter().skip(1) {
            if r.value > best.value {
                best = r;
            }
            if best.value >= target {
                break;
            }
        }
        Ok(best)
    }

    fn refine(&self, start: Best, step: f64) -> Best {
        let inst = self.inst;
        let f = |x: &[f64]| {
            if x.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return None;
            }
            self.eval(MacParams::aligned(inst, x[0], x[1], x[2])).ok().map(|b| b.value)
        };
        let x0 = [start.params.alpha, start.params.beta, start.params.gamma.norm()];
        let (x, v) = compass_search(f, &x0, start.value, step, 1e-6, 400);
        if v > start.value {
            self.eval(MacParams::aligned(inst, x[0], x[1], x[2])).unwrap_or(start)
        } else {
            start
        }
    }

    fn symmetric_line(&self, n: usize) -> Result<Best> {
        let mut best: Option<(f64, Best)> = None;
        for a in linspace(0.0, 1.0, 4 * n) {
            let b = self.eval(MacParams::aligned(self.inst, a, a, 1.0))?;
            if best.as_ref().is_none_or(|(_, x)| b.value > x.value) {
                best = Some((a, b));
            }
        }
        let (a0, best) = best.expect("nonempty line");
        let h = 1.0 / (4 * n - 1) as f64;
        let (a, _) = golden_max(
            |a| self.eval(MacParams::aligned(self.inst, a, a, 1.0)).map_or(f64::NEG_INFINITY, |b| b.value),
            (a0 - h).max(0.0),
            (a0 + h).min(1.0),
            1e-7,
        );
        let b = self.eval(MacParams::aligned(self.inst, a, a, 1.0))?;
        Ok(if b.value > best.value { b } else { best })
    }
}

fn is_symmetric(inst: &ChannelInstance) -> bool {
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-9 * (1.0 + a.abs().max(b.abs()));
    close(inst.p_r1, inst.p_r2)
        && close(inst.h_norm_sq(0), inst.h_norm_sq(1))
        && close(inst.g_norm_sq(0), inst.g_norm_sq(1))
}

fn witness(region: &BcRegion, hit: &Intersection) -> BcWitness {
    BcWitness {
        components: hit
            .weights
            .iter()
            .map(|&(k, weight)| {
                let p = &region.points()[k];
                WitnessComponent { weight, params: region.params(&p.beam), rates: p.rates }
            })
            .collect(),
    }
}

/// Checks whether some point of the maximum sum-rate face lies in the sampled BC region.
pub fn df_optimality_check(inst: &ChannelInstance, effort: Effort) -> Result<(bool, Option<(MacParams, RateTriple)>)> {
    let region = BcRegion::build(inst, effort);
    df_optimality_check_with_region(inst, &region, effort)
}

pub fn df_optimality_check_with_region(
    inst: &ChannelInstance,
    region: &BcRegion,
    effort: Effort,
) -> Result<(bool, Option<(MacParams, RateTriple)>)> {
    let Ok(opt) = optimal_correlation(inst) else {
        return Ok((false, None));
    };
    let s = Search { inst, region, lp_solves: 0.into() };
    let best = s.face_scan(&opt, effort.subregion_samples())?;
    let ok = best.value >= opt.max_sum_rate - CERT_TOL;
    Ok((ok, ok.then_some((best.params, best.hit.triple))))
}

pub fn df_max_rate(inst: &ChannelInstance, effort: Effort) -> Result<DfReport> {
    let region = BcRegion::build(inst, effort);
    df_max_rate_with_region(inst, &region, effort)
}

/// Same as [`df_max_rate`] with a prebuilt broadcast region (it depends only on `g` and `p_s`).
pub fn df_max_rate_with_region(inst: &ChannelInstance, region: &BcRegion, effort: Effort) -> Result<DfReport> {
    let ub = upper_bound(inst)?;
    let s = Search { inst, region, lp_solves: 0.into() };
    let opt = optimal_correlation(inst).ok();

    let mut certified = None;
    if let Some(opt) = &opt {
        let b = s.face_scan(opt, effort.subregion_samples())?;
        if b.value >= opt.max_sum_rate - CERT_TOL {
            certified = Some(b);
        }
    }
    let (best, certificate) = match certified {
        Some(b) => (b, true),
        None => {
            let target = ub.overall - CERT_TOL;
            let n = effort.df_grid();
            let mut best = if is_symmetric(inst) { Some(s.symmetric_line(n)?) } else { None };
            if best.as_ref().is_none_or(|b| b.value < target) {
                let g = s.grid(n, &[1.0, 0.0], target)?;
                if best.as_ref().is_none_or(|b| g.value > b.value) {
                    best = Some(g);
                }
            }
            let mut best = best.expect("search ran");
            if best.value < target {
                best = s.refine(best, 0.5 / (n - 1) as f64);
            }
            (best, false)
        }
    };

    let corner = region_corner_unchecked(inst, &best.params);
    let mut triple = best.hit.triple;
    triple.r1 = triple.r1.max(0.0);
    triple.r2 = triple.r2.max(0.0);
    triple.rc = triple.rc.max(0.0);
    if !corner.contains(&triple, 1e-9) {
        return Err(RelayError::Infeasible(format!("DF triple {triple:?} violates the MAC region")));
    }
    let witness_bc = witness(region, &best.hit);
    if !witness_bc.verify(inst, &triple, 1e-8)? {
        return Err(RelayError::Infeasible(format!("DF triple {triple:?} failed BC re-verification")));
    }
    let rate = triple.sum();
    Ok(DfReport {
        rate,
        witness_mac: best.params,
        witness_triple: triple,
        witness_bc,
        optimal_certificate: certificate,
        active_bound: classify(rate, certificate, &ub, opt.as_ref()),
        lp_solves: s.lp_solves.into_inner(),
    })
}

fn classify(rate: f64, certificate: bool, ub: &UpperBoundReport, opt: Option<&CorrelationResult>) -> ActiveBound {
    const TOL: f64 = 1e-3;
    if certificate {
        ActiveBound::MacSum
    } else if (rate - ub.bound_bc).abs() <= TOL {
        ActiveBound::BcSum
    } else if (rate - ub.bound_cut13.min(ub.bound_cut14)).abs() <= TOL {
        ActiveBound::SideCut
    } else if opt.is_some_and(|o| (rate - o.max_sum_rate).abs() <= TOL) {
        ActiveBound::MacSum
    } else {
        ActiveBound::None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bounds::upper_bound;
    use crate::channel::{angled_instance, named_instance, NamedMatrix::*};

    fn angle46_instance() -> ChannelInstance {
        let phi = 46.3942f64.to_radians();
        angled_instance((1.0, 1.0), phi, (1.0, 1.0), phi, 10.0, 4.17, 4.17).unwrap()
    }

    #[test]
    fn certificate_on_crossing_configuration() {
        let inst = angle46_instance();
        let r = df_max_rate(&inst, Effort::Default).unwrap();
        let opt = optimal_correlation(&inst).unwrap();
        assert!(r.optimal_certificate);
        assert!((r.rate - opt.max_sum_rate).abs() < 1e-9);
        assert!((r.rate - upper_bound(&inst).unwrap().overall).abs() < 1e-3);
    }

    #[test]
    fn zero_powers() {
        let o = named_instance(Ortho, Ortho, 10.0, 0.0, 0.0).unwrap();
        assert_eq!(df_max_rate(&o, Effort::Low).unwrap().rate, 0.0);
        let z = named_instance(Ortho, Ortho, 0.0, 5.0, 5.0).unwrap();
        let (ok, _) = df_optimality_check(&z, Effort::Low).unwrap();
        assert!(!ok);
        assert_eq!(df_max_rate(&z, Effort::Low).unwrap().rate, 0.0);
    }

    #[test]
    fn witnesses_are_consistent() {
        let inst = named_instance(Mid, Parallel, 10.0, 2.0, 3.0).unwrap();
        let r = df_max_rate(&inst, Effort::Low).unwrap();
        let ub = upper_bound(&inst).unwrap();
        assert!(r.rate <= ub.overall + 1e-9);
        assert!(r.witness_bc.verify(&inst, &r.witness_triple, 1e-8).unwrap());
        let c = crate::mac::region_corner(&inst, &r.witness_mac).unwrap();
        assert!(c.contains(&r.witness_triple, 1e-9));
    }
}
