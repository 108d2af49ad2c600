//! Infeasible primal-dual path following with Nesterov–Todd scaling and a Mehrotra corrector.

use faer::linalg::solvers::Solve;
use faer::linalg::triangular_solve::solve_upper_triangular_in_place;
use faer::{Mat, Par, Side};

use super::{certify_dual, min_eig, Certificate, SdpProblem, SdpSolution, SolveStatus, SolverOptions};

const STEP_FRACTION: f64 = 0.95;
/// consecutive iterations without improving the best iterate before giving up
const STALL_LIMIT: usize = 15;
const REFINE_STEPS: usize = 4;

/// One stored LMI entry, expanded per variable for the Schur build.
#[derive(Clone, Copy)]
struct Slot {
    var: usize,
    row: usize,
    col: usize,
    /// value doubled off the diagonal
    weight: f64,
}

struct Scaling {
    /// S = G^{-T} Λ G^{-1}, X = G Λ G^T
    g: Vec<Mat<f64>>,
    w: Vec<Mat<f64>>,
    lambda: Vec<Vec<f64>>,
}

fn blocks_like(p: &SdpProblem, diag: f64) -> Vec<Mat<f64>> {
    p.blocks.iter().map(|&n| Mat::from_fn(n, n, |i, j| if i == j { diag } else { 0.0 })).collect()
}

fn inner(a: &[Mat<f64>], b: &[Mat<f64>]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let mut s = 0.0;
            for j in 0..x.ncols() {
                for i in 0..x.nrows() {
                    s += x[(i, j)] * y[(i, j)];
                }
            }
            s
        })
        .sum()
}

fn norm_fro(a: &[Mat<f64>]) -> f64 {
    inner(a, a).sqrt()
}

fn symmetrize(m: &mut Mat<f64>) {
    let n = m.nrows();
    for j in 0..n {
        for i in 0..j {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

fn nt_scaling(s: &[Mat<f64>], x: &[Mat<f64>]) -> Option<Scaling> {
    let mut out = Scaling { g: Vec::new(), w: Vec::new(), lambda: Vec::new() };
    for (sb, xb) in s.iter().zip(x) {
        let n = sb.nrows();
        if n == 0 {
            out.g.push(Mat::zeros(0, 0));
            out.w.push(Mat::zeros(0, 0));
            out.lambda.push(Vec::new());
            continue;
        }
        let ls = sb.llt(Side::Lower).ok()?;
        let lx = xb.llt(Side::Lower).ok()?;
        let l = ls.L().to_owned();
        let r = lx.L();
        let svd = (l.transpose() * r).svd().ok()?;
        let sig: Vec<f64> = (0..n).map(|k| svd.S().column_vector()[k]).collect();
        if sig.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return None;
        }
        let mut g = Mat::from_fn(n, n, |i, k| svd.U()[(i, k)] * sig[k].sqrt());
        solve_upper_triangular_in_place(l.transpose(), g.as_mut(), Par::Seq);
        let mut w = &g * g.transpose();
        symmetrize(&mut w);
        out.g.push(g);
        out.w.push(w);
        out.lambda.push(sig);
    }
    Some(out)
}

/// Largest α ≤ 1 keeping Λ + α·D ⪰ 0, shrunk by the step fraction.
fn step_length(lambda: &[Vec<f64>], d: &[Mat<f64>]) -> f64 {
    let mut worst = 0.0f64;
    for (l, db) in lambda.iter().zip(d) {
        let n = l.len();
        if n == 0 {
            continue;
        }
        let scaled = Mat::from_fn(n, n, |i, j| 0.5 * (db[(i, j)] + db[(j, i)]) / (l[i] * l[j]).sqrt());
        let e = min_eig(&scaled);
        if !e.is_finite() {
            return 0.0;
        }
        worst = worst.min(e);
    }
    if worst >= 0.0 { 1.0 } else { (STEP_FRACTION / -worst).min(1.0) }
}

struct Workspace<'a> {
    p: &'a SdpProblem,
    slots: Vec<Vec<Slot>>,
}

impl<'a> Workspace<'a> {
    fn new(p: &'a SdpProblem) -> Self {
        let mut slots = vec![Vec::new(); p.blocks.len()];
        for (var, g) in p.constraints.iter().enumerate() {
            for e in &g.entries {
                let weight = if e.row == e.col { e.value } else { 2.0 * e.value };
                slots[e.block].push(Slot { var, row: e.row, col: e.col, weight });
            }
        }
        Self { p, slots }
    }

    /// M_ij = ⟨G_i, W G_j W⟩ from pairs of stored entries.
    fn schur(&self, w: &[Mat<f64>]) -> Mat<f64> {
        let m = self.p.n_vars();
        let mut out = Mat::<f64>::zeros(m, m);
        for (b, slots) in self.slots.iter().enumerate() {
            let wb = &w[b];
            for (k, s1) in slots.iter().enumerate() {
                let (p, q) = (s1.row, s1.col);
                for s2 in &slots[..=k] {
                    let (r, s) = (s2.row, s2.col);
                    let f = wb[(p, r)] * wb[(q, s)] + wb[(p, s)] * wb[(q, r)];
                    let v = 0.5 * s1.weight * s2.weight * f;
                    out[(s1.var, s2.var)] += v;
                    if !std::ptr::eq(s1, s2) {
                        out[(s2.var, s1.var)] += v;
                    }
                }
            }
        }
        out
    }

    fn apply_constraints(&self, dy: &[f64]) -> Vec<Mat<f64>> {
        let mut out = self.p.zero_blocks();
        for (g, &v) in self.p.constraints.iter().zip(dy) {
            if v != 0.0 {
                g.add_to(&mut out, v);
            }
        }
        out
    }
}

fn factor_schur(m: &Mat<f64>) -> Option<faer::linalg::solvers::Llt<f64>> {
    if let Ok(l) = m.llt(Side::Lower) {
        return Some(l);
    }
    let n = m.nrows();
    let scale = (0..n).map(|i| m[(i, i)].abs()).fold(1e-300, f64::max);
    let mut delta = 1e-14 * scale;
    for _ in 0..8 {
        let reg = Mat::from_fn(n, n, |i, j| m[(i, j)] + if i == j { delta } else { 0.0 });
        if let Ok(l) = reg.llt(Side::Lower) {
            return Some(l);
        }
        delta *= 100.0;
    }
    None
}

struct Direction {
    dy: Vec<f64>,
    /// scaled directions G^T dS G and G^{-1} dX G^{-T}
    ds_scaled: Vec<Mat<f64>>,
    dx_scaled: Vec<Mat<f64>>,
    dx: Vec<Mat<f64>>,
    ds: Vec<Mat<f64>>,
}

/// Solves the Newton system for complementarity target Λ D + D Λ = rc.
fn direction(
    ws: &Workspace,
    sc: &Scaling,
    chol: &faer::linalg::solvers::Llt<f64>,
    rc: &[Mat<f64>],
    rp: &[Mat<f64>],
    rd: &[f64],
) -> Direction {
    let p = ws.p;
    let d: Vec<Mat<f64>> = sc
        .lambda
        .iter()
        .zip(rc)
        .map(|(l, r)| Mat::from_fn(l.len(), l.len(), |i, j| r[(i, j)] / (l[i] + l[j])))
        .collect();
    // H = G D G^T − W Rp W, so that dX = H − W (Σ dy G) W
    let h: Vec<Mat<f64>> = (0..p.blocks.len())
        .map(|b| {
            let g = &sc.g[b];
            let w = &sc.w[b];
            let mut h = g * &d[b] * g.transpose() - w * &rp[b] * w;
            symmetrize(&mut h);
            h
        })
        .collect();
    let rhs = Mat::from_fn(p.n_vars(), 1, |i, _| p.constraints[i].inner(&h) + rd[i]);
    let sol = chol.solve(&rhs);
    let mut dy: Vec<f64> = (0..p.n_vars()).map(|i| sol[(i, 0)]).collect();
    // Refinement against the operator itself: the residual of this system is exactly the dual
    // infeasibility the step leaves behind, and the factored M loses digits as W degenerates.
    let operator_residual = |dy: &[f64]| -> (Vec<Mat<f64>>, Mat<f64>, f64) {
        let applied = ws.apply_constraints(dy);
        let wa: Vec<Mat<f64>> = (0..p.blocks.len()).map(|b| &sc.w[b] * &applied[b] * &sc.w[b]).collect();
        let r = Mat::from_fn(p.n_vars(), 1, |i, _| rhs[(i, 0)] - p.constraints[i].inner(&wa));
        let norm = (0..r.nrows()).map(|i| r[(i, 0)] * r[(i, 0)]).sum::<f64>().sqrt();
        (applied, r, norm)
    };
    let (mut applied, mut res, mut res_norm) = operator_residual(&dy);
    for _ in 0..REFINE_STEPS {
        let corr = chol.solve(&res);
        let trial: Vec<f64> = dy.iter().enumerate().map(|(i, v)| v + corr[(i, 0)]).collect();
        let (a, r, n) = operator_residual(&trial);
        if !(n < 0.5 * res_norm) {
            break;
        }
        (dy, applied, res, res_norm) = (trial, a, r, n);
    }
    let ds: Vec<Mat<f64>> = applied.iter().zip(rp).map(|(a, r)| a + r).collect();
    let mut dx = Vec::with_capacity(p.blocks.len());
    let mut ds_scaled = Vec::with_capacity(p.blocks.len());
    let mut dx_scaled = Vec::with_capacity(p.blocks.len());
    for b in 0..p.blocks.len() {
        let g = &sc.g[b];
        let w = &sc.w[b];
        let mut x = &h[b] - w * &applied[b] * w;
        symmetrize(&mut x);
        dx.push(x);
        let dss = g.transpose() * &ds[b] * g;
        dx_scaled.push(&d[b] - &dss);
        ds_scaled.push(dss);
    }
    Direction { dy, ds_scaled, dx_scaled, dx, ds }
}

/// Removes the dual residual by a least-squares shift along span{G_i}, shortened when needed so
/// that X stays positive definite. Accumulated roundoff in dX otherwise drifts X off the affine
/// set once W becomes badly conditioned.
fn project_dual(p: &SdpProblem, ws: &Workspace, gram: &faer::linalg::solvers::Llt<f64>, x: &mut [Mat<f64>]) {
    let rd = p.dual_residual(x);
    let rhs = Mat::from_fn(rd.len(), 1, |i, _| rd[i]);
    let c = gram.solve(&rhs);
    let shift: Vec<f64> = (0..rd.len()).map(|i| -c[(i, 0)]).collect();
    let delta = ws.apply_constraints(&shift);
    let mut t = 1.0;
    for _ in 0..4 {
        let moved: Vec<Mat<f64>> = x.iter().zip(&delta).map(|(a, d)| a + d * faer::Scale(t)).collect();
        if moved.iter().all(|b| b.nrows() == 0 || b.llt(Side::Lower).is_ok()) {
            x.clone_from_slice(&moved);
            return;
        }
        t *= 0.25;
    }
}

pub fn solve(p: &SdpProblem, opts: &SolverOptions) -> SdpSolution {
    let m = p.n_vars();
    let n_total: usize = p.total_dim();
    if m == 0 {
        let s = p.lmi(&[]);
        let feasible = s.iter().map(min_eig).all(|e| e >= -opts.tol);
        return SdpSolution {
            y: Vec::new(),
            x: p.zero_blocks(),
            primal_obj: p.constant,
            dual_obj: p.constant,
            gap: 0.0,
            primal_infeasibility: 0.0,
            dual_infeasibility: 0.0,
            iterations: 0,
            status: if feasible { SolveStatus::Optimal } else { SolveStatus::Infeasible },
        };
    }

    let ws = Workspace::new(p);
    // Gram matrix of the constraint matrices, used to pull X back onto ⟨G_i, X⟩ = f_i
    let gram = factor_schur(&ws.schur(&blocks_like(p, 1.0)));
    let g0_norm = p.offset.norm_fro();
    let f_norm = p.objective.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nsq = (n_total as f64).sqrt();
    let max_gnorm = p.constraints.iter().map(|g| g.norm_fro()).fold(g0_norm, f64::max);
    let xi = p
        .constraints
        .iter()
        .zip(&p.objective)
        .map(|(g, f)| n_total as f64 * (1.0 + f.abs()) / (1.0 + g.norm_fro()))
        .fold(10f64.max(nsq), f64::max);
    let eta = 10f64.max(nsq).max(max_gnorm);

    let mut y = vec![0.0; m];
    let mut x = blocks_like(p, xi);
    let mut s = blocks_like(p, eta);
    let mut status = SolveStatus::MaxIter;
    let mut iterations = 0;
    // best iterate so far by max(gap, pinf, dinf); degenerate programs (no interior moment
    // matrix) lose accuracy late in the run and are rolled back to it
    let mut best: Option<(f64, Vec<f64>, Vec<Mat<f64>>, Vec<Mat<f64>>)> = None;
    let mut worse_streak = 0;
    // dual matrix with the highest certified value seen; late iterates of degenerate programs
    // can drift off the dual affine set while earlier ones still certify
    let mut best_dual: Option<(f64, Vec<Mat<f64>>)> = None;

    let measures = |y: &[f64], x: &[Mat<f64>], s: &[Mat<f64>]| {
        let mut rp = p.lmi(y);
        for (a, b) in rp.iter_mut().zip(s) {
            *a -= b;
        }
        let rd = p.dual_residual(x);
        let pobj = p.primal_objective(y);
        let dobj = p.dual_objective(x);
        let pinf = norm_fro(&rp) / (1.0 + g0_norm);
        let dinf = rd.iter().map(|v| v * v).sum::<f64>().sqrt() / (1.0 + f_norm);
        (rp, rd, pobj, dobj, pinf, dinf)
    };

    for it in 0..opts.max_iter {
        iterations = it;
        let (rp, rd, pobj, dobj, pinf, dinf) = measures(&y, &x, &s);
        // both the objective gap and the complementarity ⟨X, S⟩; with an infeasible primal the
        // objectives can cross long before the iterates are close to optimal
        let gap = (pobj - dobj).abs().max(inner(&x, &s)) / (1.0 + pobj.abs());
        if opts.verbose {
            eprintln!("{it:3} p {pobj:+.9e} d {dobj:+.9e} gap {gap:.2e} pinf {pinf:.2e} dinf {dinf:.2e}");
        }
        if gap <= opts.tol && pinf <= opts.tol && dinf <= opts.tol {
            status = SolveStatus::Optimal;
            best = None;
            break;
        }
        if dinf <= opts.tol {
            if let Certificate::Certified { bound, .. } = certify_dual(p, &x) {
                if best_dual.as_ref().is_none_or(|(b, _)| bound > *b) {
                    best_dual = Some((bound, x.clone()));
                }
            }
        }
        let merit = gap.max(pinf).max(dinf);
        if !merit.is_finite() || ![pobj, dobj].iter().all(|v| v.is_finite()) {
            status = SolveStatus::NumericalFailure;
            break;
        }
        match &best {
            Some((m, ..)) if merit >= *m => {
                worse_streak += 1;
                if merit > 100.0 * m || worse_streak >= STALL_LIMIT {
                    status = SolveStatus::NumericalFailure;
                    break;
                }
            }
            _ => {
                worse_streak = 0;
                best = Some((merit, y.clone(), x.clone(), s.clone()));
            }
        }

        let Some(sc) = nt_scaling(&s, &x) else {
            status = SolveStatus::NumericalFailure;
            break;
        };
        let mu = sc.lambda.iter().flatten().map(|l| l * l).sum::<f64>() / n_total as f64;
        let schur = ws.schur(&sc.w);
        let Some(chol) = factor_schur(&schur) else {
            status = SolveStatus::NumericalFailure;
            break;
        };

        // predictor
        let rc_aff: Vec<Mat<f64>> = sc
            .lambda
            .iter()
            .map(|l| Mat::from_fn(l.len(), l.len(), |i, j| if i == j { -2.0 * l[i] * l[i] } else { 0.0 }))
            .collect();
        let aff = direction(&ws, &sc, &chol, &rc_aff, &rp, &rd);
        let ax = step_length(&sc.lambda, &aff.dx_scaled);
        let as_ = step_length(&sc.lambda, &aff.ds_scaled);
        let mu_aff = {
            let xs: Vec<Mat<f64>> = sc
                .lambda
                .iter()
                .zip(&aff.dx_scaled)
                .map(|(l, d)| Mat::from_fn(l.len(), l.len(), |i, j| ax * d[(i, j)] + if i == j { l[i] } else { 0.0 }))
                .collect();
            let ss: Vec<Mat<f64>> = sc
                .lambda
                .iter()
                .zip(&aff.ds_scaled)
                .map(|(l, d)| Mat::from_fn(l.len(), l.len(), |i, j| as_ * d[(i, j)] + if i == j { l[i] } else { 0.0 }))
                .collect();
            inner(&xs, &ss) / n_total as f64
        };
        let sigma = (mu_aff / mu).clamp(0.0, 1.0).powi(3);

        // corrector
        let rc: Vec<Mat<f64>> = sc
            .lambda
            .iter()
            .enumerate()
            .map(|(b, l)| {
                let dxs = &aff.dx_scaled[b];
                let dss = &aff.ds_scaled[b];
                let cross = dxs * dss + dss * dxs;
                Mat::from_fn(l.len(), l.len(), |i, j| {
                    let base = if i == j { 2.0 * sigma * mu - 2.0 * l[i] * l[i] } else { 0.0 };
                    base - cross[(i, j)]
                })
            })
            .collect();
        let dir = direction(&ws, &sc, &chol, &rc, &rp, &rd);
        let ax = step_length(&sc.lambda, &dir.dx_scaled);
        let as_ = step_length(&sc.lambda, &dir.ds_scaled);
        if ax < 1e-12 && as_ < 1e-12 {
            status = SolveStatus::NumericalFailure;
            break;
        }
        for (v, d) in y.iter_mut().zip(&dir.dy) {
            *v += as_ * d;
        }
        for b in 0..p.blocks.len() {
            x[b] += &dir.dx[b] * faer::Scale(ax);
            s[b] += &dir.ds[b] * faer::Scale(as_);
            symmetrize(&mut x[b]);
            symmetrize(&mut s[b]);
        }
        if let Some(gram) = &gram {
            project_dual(p, &ws, gram, &mut x);
        }
        // same on the primal side: S = Γ(y) exactly once Γ(y) is itself positive definite
        let exact = p.lmi(&y);
        if exact.iter().all(|b| b.nrows() == 0 || b.llt(Side::Lower).is_ok()) {
            s = exact;
            s.iter_mut().for_each(symmetrize);
        }
        iterations = it + 1;
    }

    if let Some((merit, by, bx, bs)) = best {
        (y, x, s) = (by, bx, bs);
        if merit <= opts.tol {
            status = SolveStatus::Optimal;
        }
    }
    if let Some((_, bx)) = best_dual {
        if !matches!(certify_dual(p, &x), Certificate::Certified { .. }) {
            x = bx;
        }
    }
    let (_, _, pobj, dobj, pinf, dinf) = measures(&y, &x, &s);
    // the swap above must not produce an optimal claim the numbers do not support
    if status == SolveStatus::Optimal && ((pobj - dobj).abs() > opts.tol * (1.0 + pobj.abs()) || dinf > opts.tol) {
        status = SolveStatus::NumericalFailure;
    }
    SdpSolution {
        y,
        x,
        primal_obj: pobj,
        dual_obj: dobj,
        gap: (pobj - dobj).abs(),
        primal_infeasibility: pinf,
        dual_infeasibility: dinf,
        iterations,
        status,
    }
}
