//! Fixtures and brute-force oracles shared by the integration tests.
//!
//! The oracles work on real 2×2 instances and re-derive every rate expression from scratch
//! with plain `f64` arithmetic, so they share no evaluation code with the library.
#![allow(dead_code)]

use microlp::{ComparisonOp, OptimizationDirection, Problem};
use rand::{Rng, RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use relaylab::{angled_instance, named_instance, CMatrix, ChannelInstance, NamedMatrix, C64};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn angle35_instance() -> ChannelInstance {
    angled_instance((1.0, 1.0), 0.5, (1.0, 1.0), 35f64.to_radians(), 10.0, 5.0, 5.0).unwrap()
}

pub fn angle46_instance() -> ChannelInstance {
    let phi = 46.3942f64.to_radians();
    angled_instance((1.0, 1.0), phi, (1.0, 1.0), phi, 10.0, 4.17, 4.17).unwrap()
}

/// Second source-relay row with squared norm `g2_sq`, both angles at 46.40°.
pub fn weak_row_instance(g2_sq: f64) -> ChannelInstance {
    let phi = 46.40f64.to_radians();
    angled_instance((1.0, g2_sq.sqrt()), phi, (1.0, 1.0), phi, 10.0, 5.0, 5.0).unwrap()
}

/// (G, H) tag pairs of the six reference combinations.
pub fn reference_pairs() -> Vec<(NamedMatrix, NamedMatrix)> {
    let mut v = Vec::new();
    for g in NamedMatrix::ALL {
        for h in [NamedMatrix::Ortho, NamedMatrix::Parallel] {
            v.push((g, h));
        }
    }
    v
}

pub fn reference(g: NamedMatrix, h: NamedMatrix, p_r: f64) -> ChannelInstance {
    named_instance(g, h, 10.0, p_r, p_r).unwrap()
}

fn log_uniform<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    (lo.ln() + rng.random::<f64>() * (hi.ln() - lo.ln())).exp()
}

/// Complex 2×2 instance with random powers in [0.1, 100].
pub fn random_complex<R: Rng + ?Sized>(rng: &mut R) -> ChannelInstance {
    let (ps, p1, p2) = (log_uniform(rng, 0.1, 100.0), log_uniform(rng, 0.1, 100.0), log_uniform(rng, 0.1, 100.0));
    ChannelInstance::random(rng, 2, 2, ps, p1, p2)
}

/// Real 2×2 instance, entries uniform in [-1, 1], P_s = 10, relay powers uniform in [0.5, 20].
pub fn random_real<R: Rng + ?Sized>(rng: &mut R) -> ChannelInstance {
    let mut e = || rng.random_range(-1.0..1.0);
    let g = CMatrix::from_real_rows(&[&[e(), e()], &[e(), e()]]);
    let h = CMatrix::from_real_rows(&[&[e(), e()], &[e(), e()]]);
    let p1 = rng.random_range(0.5..20.0);
    let p2 = rng.random_range(0.5..20.0);
    ChannelInstance::new(g, h, 10.0, p1, p2).unwrap()
}

/// Random 2×2 unitary.
pub fn random_unitary<R: Rng + ?Sized>(rng: &mut R) -> CMatrix {
    let t = rng.random_range(0.0..std::f64::consts::FRAC_PI_2);
    let (a, b, c) = (
        rng.random_range(0.0..std::f64::consts::TAU),
        rng.random_range(0.0..std::f64::consts::TAU),
        rng.random_range(0.0..std::f64::consts::TAU),
    );
    let e = |x: f64| C64::from_polar(1.0, x);
    CMatrix::from_row_major(2, 2, &[e(a) * t.cos(), e(b) * t.sin(), -e(c - b) * t.sin() * e(a), e(c) * t.cos()])
}

/// Real 2×2 matrix as plain arrays, panicking on imaginary parts.
fn real(m: &CMatrix) -> [[f64; 2]; 2] {
    let mut out = [[0.0; 2]; 2];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, x) in row.iter_mut().enumerate() {
            assert!(m[(i, j)].im.abs() < 1e-15, "oracles take real instances");
            *x = m[(i, j)].re;
        }
    }
    out
}

fn det2(m: [[f64; 2]; 2]) -> f64 {
    m[0][0] * m[1][1] - m[0][1] * m[1][0]
}

/// log2 det(I + A Q Aᵀ) for 2×2 real A and symmetric Q.
fn logdet_iaqat(a: [[f64; 2]; 2], q: [[f64; 2]; 2]) -> f64 {
    let mut m = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            let mut s = if i == j { 1.0 } else { 0.0 };
            for k in 0..2 {
                for l in 0..2 {
                    s += a[i][k] * q[k][l] * a[j][l];
                }
            }
            m[i][j] = s;
        }
    }
    det2(m).log2()
}

/// Minimal Nelder–Mead for the oracle polish.
pub fn nelder_mead(f: &dyn Fn(&[f64]) -> f64, x0: &[f64], scale: f64, iters: usize) -> (Vec<f64>, f64) {
    let n = x0.len();
    let mut simplex: Vec<(Vec<f64>, f64)> = (0..=n)
        .map(|i| {
            let mut x = x0.to_vec();
            if i > 0 {
                x[i - 1] += scale;
            }
            let fx = f(&x);
            (x, fx)
        })
        .collect();
    for _ in 0..iters {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        if (simplex[n].1 - simplex[0].1).abs() < 1e-13 {
            break;
        }
        let centroid: Vec<f64> = (0..n).map(|d| simplex[..n].iter().map(|p| p.0[d]).sum::<f64>() / n as f64).collect();
        let along =
            |t: f64| -> Vec<f64> { (0..n).map(|d| centroid[d] + t * (simplex[n].0[d] - centroid[d])).collect() };
        let xr = along(-1.0);
        let fr = f(&xr);
        if fr < simplex[0].1 {
            let xe = along(-2.0);
            let fe = f(&xe);
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
        } else {
            let xc = along(0.5);
            let fc = f(&xc);
            if fc < simplex[n].1 {
                simplex[n] = (xc, fc);
            } else {
                let best = simplex[0].0.clone();
                for p in simplex.iter_mut().skip(1) {
                    p.0 = (0..n).map(|d| best[d] + 0.5 * (p.0[d] - best[d])).collect();
                    p.1 = f(&p.0);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    simplex.swap_remove(0)
}

/// Compress-and-forward objective and smallest constraint margin with Q = p vvᵀ + (P_s − p) uuᵀ.
fn cf_point(g: [[f64; 2]; 2], h: [[f64; 2]; 2], pr: (f64, f64), ps: f64, x: &[f64]) -> (f64, f64) {
    let (a, b) = (x[0].exp(), x[1].exp());
    let p = x[2].clamp(0.0, ps);
    let (c, s) = (x[3].cos(), x[3].sin());
    let q = [
        [p * c * c + (ps - p) * s * s, (2.0 * p - ps) * c * s],
        [(2.0 * p - ps) * c * s, p * s * s + (ps - p) * c * c],
    ];
    let gq = |i: usize| -> f64 { (0..2).map(|k| (0..2).map(|l| g[i][k] * q[k][l] * g[i][l]).sum::<f64>()).sum() };
    let g12: f64 = (0..2).map(|k| (0..2).map(|l| g[0][k] * q[k][l] * g[1][l]).sum::<f64>()).sum();
    let (g11, g22) = (gq(0), gq(1));
    let d = (1.0 + a + g11) * (1.0 + b + g22) - g12 * g12;
    let rate = (d / ((1.0 + a) * (1.0 + b))).log2();
    let n1 = h[0][0] * h[0][0] + h[1][0] * h[1][0];
    let n2 = h[0][1] * h[0][1] + h[1][1] * h[1][1];
    let joint = logdet_iaqat(h, [[pr.0, 0.0], [0.0, pr.1]]);
    let s1 = (1.0 + pr.0 * n1).log2() - (d / (a * (1.0 + b + g22))).log2();
    let s2 = (1.0 + pr.1 * n2).log2() - (d / (b * (1.0 + a + g11))).log2();
    let s3 = joint - (d / (a * b)).log2();
    (rate, s1.min(s2).min(s3))
}

/// Brute-force CF optimum over (ln a, ln b, power split, eigenbasis angle), then a penalized
/// Nelder–Mead polish from the five best feasible grid points.
pub fn cf_oracle(inst: &ChannelInstance) -> f64 {
    let (g, h) = (real(&inst.g), real(&inst.h));
    let pr = (inst.p_r1, inst.p_r2);
    let ps = inst.p_s;
    let (lo, hi) = (1e-4f64.ln(), 1e4f64.ln());
    let mut cand: Vec<(f64, [f64; 4])> = Vec::new();
    for i in 0..25 {
        let la = lo + (hi - lo) * i as f64 / 24.0;
        for j in 0..25 {
            let lb = lo + (hi - lo) * j as f64 / 24.0;
            for k in 0..11 {
                let p = ps * k as f64 / 10.0;
                for t in 0..12 {
                    let th = std::f64::consts::PI * t as f64 / 12.0;
                    let x = [la, lb, p, th];
                    let (r, s) = cf_point(g, h, pr, ps, &x);
                    if s >= 0.0 {
                        cand.push((r, x));
                    }
                }
            }
        }
    }
    cand.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut best = cand.first().map_or(0.0, |c| c.0);
    for (_, x0) in cand.iter().take(5) {
        let f = |x: &[f64]| {
            let (r, s) = cf_point(g, h, pr, ps, x);
            -r + 1e3 * (-s).max(0.0)
        };
        let (x, _) = nelder_mead(&f, x0, 0.3, 4000);
        let (r, s) = cf_point(g, h, pr, ps, &x);
        if s >= -1e-9 {
            best = best.max(r);
        }
    }
    best.max(0.0)
}

/// Broadcast rates for real unit beams at angles `th` with powers `p`; order 0 decodes
/// stream 1 free of stream 2.
fn bc_point(g: [[f64; 2]; 2], order: usize, th: [f64; 3], p: [f64; 3]) -> [f64; 3] {
    let gain = |i: usize, t: f64, pw: f64| {
        let v = g[i][0] * t.cos() + g[i][1] * t.sin();
        v * v * pw
    };
    let x: Vec<f64> = (0..3).map(|k| gain(0, th[k], p[k])).collect();
    let y: Vec<f64> = (0..3).map(|k| gain(1, th[k], p[k])).collect();
    let (r1, r2) = if order == 0 {
        ((1.0 + x[0]).log2(), (1.0 + y[1] / (1.0 + y[0])).log2())
    } else {
        ((1.0 + x[0] / (1.0 + x[1])).log2(), (1.0 + y[1]).log2())
    };
    let rc = (1.0 + x[2] / (1.0 + x[0] + x[1])).log2().min((1.0 + y[2] / (1.0 + y[0] + y[1])).log2());
    [r1, r2, rc]
}

/// Power split from two free coordinates via a softmax, so the polish stays on the simplex.
fn split(ps: f64, u: f64, v: f64) -> [f64; 3] {
    let m = u.max(v).max(0.0);
    let (e1, e2, e3) = ((u - m).exp(), (v - m).exp(), (-m).exp());
    let s = e1 + e2 + e3;
    [ps * e1 / s, ps * e2 / s, ps * e3 / s]
}

/// Weight directions on the simplex with step `1/n`.
pub fn directions(n: usize) -> Vec<[f64; 3]> {
    let mut v = Vec::new();
    for i in 0..=n {
        for j in 0..=n - i {
            v.push([i as f64 / n as f64, j as f64 / n as f64, (n - i - j) as f64 / n as f64]);
        }
    }
    v
}

/// Support values max w·R of the broadcast region for each weight direction.
pub fn bc_support(inst: &ChannelInstance, dirs: &[[f64; 3]]) -> Vec<f64> {
    bc_support_detail(inst, dirs).into_iter().map(|d| d.0).collect()
}

/// Support value with the maximizing order, beam angles and powers.
pub fn bc_support_detail(inst: &ChannelInstance, dirs: &[[f64; 3]]) -> Vec<(f64, usize, [f64; 3], [f64; 3])> {
    let g = real(&inst.g);
    let ps = inst.p_s;
    let nt = 12;
    let thetas: Vec<f64> = (0..nt).map(|i| std::f64::consts::PI * i as f64 / nt as f64).collect();
    let mut best: Vec<(f64, usize, [f64; 3], [f64; 3])> = vec![(f64::NEG_INFINITY, 0, [0.0; 3], [0.0; 3]); dirs.len()];
    let steps = 6;
    for order in 0..2 {
        for &t1 in &thetas {
            for &t2 in &thetas {
                for &tc in &thetas {
                    for i in 0..=steps {
                        for j in 0..=steps - i {
                            let p = [
                                ps * i as f64 / steps as f64,
                                ps * j as f64 / steps as f64,
                                ps * (steps - i - j) as f64 / steps as f64,
                            ];
                            let r = bc_point(g, order, [t1, t2, tc], p);
                            for (d, w) in dirs.iter().enumerate() {
                                let val = w[0] * r[0] + w[1] * r[1] + w[2] * r[2];
                                if val > best[d].0 {
                                    best[d] = (val, order, [t1, t2, tc], p);
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    dirs.iter()
        .zip(best)
        .map(|(w, (val, order, th, p))| {
            let val_at = |x: &[f64]| {
                let r = bc_point(g, order, [x[0], x[1], x[2]], split(ps, x[3], x[4]));
                -(w[0] * r[0] + w[1] * r[1] + w[2] * r[2])
            };
            let lg = |x: f64| (x.max(1e-9) / ps).ln();
            let x0 = [th[0], th[1], th[2], lg(p[0]) - lg(p[2]), lg(p[1]) - lg(p[2])];
            let (x, fx) = nelder_mead(&val_at, &x0, 0.2, 3000);
            if -fx > val {
                (-fx, order, [x[0], x[1], x[2]], split(ps, x[3], x[4]))
            } else {
                (val, order, th, p)
            }
        })
        .collect()
}

/// MAC inequality right-hand sides for real correlation coefficient `gamma` in [-1, 1].
fn mac_rhs(h: [[f64; 2]; 2], p: (f64, f64), alpha: f64, beta: f64, gamma: f64) -> [f64; 4] {
    let (q1, q2) = ((1.0 - alpha) * p.0, (1.0 - beta) * p.1);
    let n = |j: usize| h[0][j] * h[0][j] + h[1][j] * h[1][j];
    let off = gamma * (alpha * beta * p.0 * p.1).sqrt();
    [
        (1.0 + q1 * n(0)).log2(),
        (1.0 + q2 * n(1)).log2(),
        logdet_iaqat(h, [[q1, 0.0], [0.0, q2]]),
        logdet_iaqat(h, [[p.0, off], [off, p.1]]),
    ]
}

/// max R1+R2+Rc over {w·R ≤ support(w)} ∩ MAC(alpha, beta, gamma), R ≥ 0.
fn intersect(dirs: &[[f64; 3]], support: &[f64], rhs: [f64; 4]) -> f64 {
    let mut lp = Problem::new(OptimizationDirection::Maximize);
    let r: Vec<_> = (0..3).map(|_| lp.add_var(1.0, (0.0, f64::INFINITY))).collect();
    for (w, &s) in dirs.iter().zip(support) {
        lp.add_constraint([(r[0], w[0]), (r[1], w[1]), (r[2], w[2])], ComparisonOp::Le, s);
    }
    lp.add_constraint([(r[0], 1.0)], ComparisonOp::Le, rhs[0]);
    lp.add_constraint([(r[1], 1.0)], ComparisonOp::Le, rhs[1]);
    lp.add_constraint([(r[0], 1.0), (r[1], 1.0)], ComparisonOp::Le, rhs[2]);
    lp.add_constraint([(r[0], 1.0), (r[1], 1.0), (r[2], 1.0)], ComparisonOp::Le, rhs[3]);
    lp.solve().ok().and_then(|s| s.into_solution().ok()).map_or(0.0, |s| s.objective())
}

/// max R1+R2+Rc over conv{points} (with free disposal) ∩ MAC(alpha, beta, gamma).
fn intersect_hull(points: &[[f64; 3]], rhs: [f64; 4]) -> f64 {
    let mut lp = Problem::new(OptimizationDirection::Maximize);
    let r: Vec<_> = (0..3).map(|_| lp.add_var(1.0, (0.0, f64::INFINITY))).collect();
    let lam: Vec<_> = points.iter().map(|_| lp.add_var(0.0, (0.0, f64::INFINITY))).collect();
    let ones: Vec<_> = lam.iter().map(|&l| (l, 1.0)).collect();
    lp.add_constraint(&ones, ComparisonOp::Eq, 1.0);
    for c in 0..3 {
        let mut row = vec![(r[c], 1.0)];
        row.extend(lam.iter().zip(points).map(|(&l, pt)| (l, -pt[c])));
        lp.add_constraint(&row, ComparisonOp::Le, 0.0);
    }
    lp.add_constraint([(r[0], 1.0)], ComparisonOp::Le, rhs[0]);
    lp.add_constraint([(r[1], 1.0)], ComparisonOp::Le, rhs[1]);
    lp.add_constraint([(r[0], 1.0), (r[1], 1.0)], ComparisonOp::Le, rhs[2]);
    lp.add_constraint([(r[0], 1.0), (r[1], 1.0), (r[2], 1.0)], ComparisonOp::Le, rhs[3]);
    lp.solve().ok().and_then(|s| s.into_solution().ok()).map_or(0.0, |s| s.objective())
}

/// Brute-force DF bracket: `inner` uses the convex hull of explicitly achieved broadcast
/// points, `outer` the half-spaces through the sampled support values. Both are maximized
/// over a grid of (alpha, beta, gamma) and polished by Nelder–Mead.
#[derive(Debug, Clone, Copy)]
pub struct DfOracle {
    pub inner: f64,
    pub outer: f64,
}

pub fn df_oracle(inst: &ChannelInstance) -> DfOracle {
    df_oracle_with(inst, 20)
}

fn maximize_mac(value: &dyn Fn(f64, f64, f64) -> f64) -> f64 {
    let n = 11;
    let mut best = (f64::NEG_INFINITY, [0.0; 3]);
    for i in 0..n {
        for j in 0..n {
            for k in 0..5 {
                let x = [i as f64 / (n - 1) as f64, j as f64 / (n - 1) as f64, -1.0 + 0.5 * k as f64];
                let v = value(x[0], x[1], x[2]);
                if v > best.0 {
                    best = (v, x);
                }
            }
        }
    }
    let f = |x: &[f64]| -value(x[0].clamp(0.0, 1.0), x[1].clamp(0.0, 1.0), x[2].clamp(-1.0, 1.0));
    let (_, fx) = nelder_mead(&f, &best.1, 0.05, 400);
    best.0.max(-fx)
}

pub fn df_oracle_with(inst: &ChannelInstance, ndir: usize) -> DfOracle {
    let h = real(&inst.h);
    let g = real(&inst.g);
    let p = (inst.p_r1, inst.p_r2);
    let dirs = directions(ndir);
    let detail = bc_support_detail(inst, &dirs);
    let support: Vec<f64> = detail.iter().map(|d| d.0).collect();
    let points: Vec<[f64; 3]> = detail.iter().map(|d| bc_point(g, d.1, d.2, d.3)).collect();
    let outer = maximize_mac(&|a, b, c| intersect(&dirs, &support, mac_rhs(h, p, a, b, c)));
    let inner = maximize_mac(&|a, b, c| intersect_hull(&points, mac_rhs(h, p, a, b, c)));
    DfOracle { inner, outer }
}

/// Common-rate threshold by an α sweep over the maximum sum-rate face, from raw channel entries.
pub fn rc_threshold_grid(inst: &ChannelInstance, step: f64) -> f64 {
    let (h, p1, p2) = (&inst.h, inst.p_r1, inst.p_r2);
    let n1 = h[(0, 0)].norm_sqr() + h[(1, 0)].norm_sqr();
    let n2 = h[(0, 1)].norm_sqr() + h[(1, 1)].norm_sqr();
    let c = (h[(0, 0)].conj() * h[(0, 1)] + h[(1, 0)].conj() * h[(1, 1)]).norm();
    let d = n1 * n2 - c * c;
    let rho = (c / ((p1 * p2).sqrt() * d)).min(1.0);
    let s = (1.0 + p1 * n1 + p2 * n2 + p1 * p2 * d * (1.0 - rho * rho) + 2.0 * rho * (p1 * p2).sqrt() * c).log2();
    let lo = rho * rho;
    let steps = ((1.0 - lo) / step).ceil() as usize;
    let mut best = f64::NEG_INFINITY;
    for i in 0..=steps {
        let alpha = (lo + i as f64 * step).min(1.0);
        let beta = (rho * rho / alpha).min(1.0);
        let (q1, q2) = ((1.0 - alpha) * p1, (1.0 - beta) * p2);
        best = best.max((1.0 + q1 * n1 + q2 * n2 + q1 * q2 * d).log2());
    }
    (s - best).max(0.0)
}

/// log2 det(I + H Q H†) with the relay covariance at correlation `rho` (magnitude and phase).
pub fn relay_sum_rate(inst: &ChannelInstance, rho: C64) -> f64 {
    let (p1, p2) = (inst.p_r1, inst.p_r2);
    let off = rho * (p1 * p2).sqrt();
    let q = CMatrix::from_row_major(2, 2, &[C64::new(p1, 0.0), off, off.conj(), C64::new(p2, 0.0)]);
    let n = inst.h.rows();
    (CMatrix::identity(n) + &inst.h * q * inst.h.adjoint()).det().re.log2()
}
