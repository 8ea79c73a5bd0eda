//! Convex quadratic program solver.
//!
//! Solves
//! ```text
//!     minimize    1/2 x' P x + q' x
//!     subject to  l <= A x <= u
//! ```
//! with P positive semidefinite, via operator splitting (the OSQP scheme):
//! a single quasi-definite KKT factorization per penalty setting, cheap
//! fixed-point iterations, divergence-based infeasibility certificates, and
//! an active-set polish step that refines converged iterates to near machine
//! precision. Equality rows are expressed as `l = u`.
//!
//! Everything is deterministic: penalty updates and convergence checks run
//! on fixed iteration counts, never wall time.

use thiserror::Error;

use crate::linalg::{axpy, dot, norm_inf, Ldlt, Lu, Mat};
use crate::real::{real, Real};

#[derive(Debug, Error, PartialEq)]
pub enum QpError {
    #[error("no convergence after {iterations} iterations")]
    NumericalFailure { iterations: usize },
}

/// `l <= A x <= u` rows with `l = u` act as equalities.
#[derive(Debug, Clone)]
pub struct QpProblem<T> {
    pub p: Mat<T>,
    pub q: Vec<T>,
    pub a: Mat<T>,
    pub l: Vec<T>,
    pub u: Vec<T>,
}

impl<T: Real> QpProblem<T> {
    pub fn num_vars(&self) -> usize {
        self.q.len()
    }

    pub fn num_rows(&self) -> usize {
        self.l.len()
    }

    pub fn objective(&self, x: &[T]) -> T {
        let px = self.p.mul_vec(x);
        real::<T>(0.5) * dot(&px, x) + dot(&self.q, x)
    }
}

/// Worst-case KKT violations of a primal-dual pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktResiduals<T> {
    pub stationarity: T,
    pub primal: T,
    pub complementarity: T,
}

impl<T: Real> KktResiduals<T> {
    pub fn max(&self) -> T {
        self.stationarity.max(self.primal).max(self.complementarity)
    }

    /// Evaluates the KKT conditions of `(x, y)` on `qp`. Non-finite pairs
    /// evaluate to infinite residuals.
    pub fn evaluate(qp: &QpProblem<T>, x: &[T], y: &[T]) -> Self {
        if x.iter().chain(y).any(|v| !v.is_finite()) {
            return Self {
                stationarity: T::infinity(),
                primal: T::infinity(),
                complementarity: T::infinity(),
            };
        }
        let s = qp.a.mul_vec(x);
        let mut grad = qp.p.mul_vec(x);
        for (g, qi) in grad.iter_mut().zip(&qp.q) {
            *g += *qi;
        }
        let aty = qp.a.mul_vec_transpose(y);
        for (g, v) in grad.iter_mut().zip(&aty) {
            *g += *v;
        }
        let stationarity = norm_inf(&grad);
        let mut primal = T::zero();
        let mut complementarity = T::zero();
        for i in 0..qp.num_rows() {
            primal = primal.max(qp.l[i] - s[i]).max(s[i] - qp.u[i]);
            if qp.l[i] == qp.u[i] {
                continue; // equality row: dual sign free, no slackness
            }
            let y_pos = y[i].max(T::zero());
            let y_neg = (-y[i]).max(T::zero());
            let up = if qp.u[i].is_finite() {
                y_pos * (qp.u[i] - s[i]).abs()
            } else {
                y_pos // dual must vanish on an absent bound
            };
            let lo = if qp.l[i].is_finite() {
                y_neg * (s[i] - qp.l[i]).abs()
            } else {
                y_neg
            };
            complementarity = complementarity.max(up).max(lo);
        }
        Self { stationarity, primal: primal.max(T::zero()), complementarity }
    }
}

#[derive(Debug, Clone)]
pub struct QpSolution<T> {
    pub x: Vec<T>,
    pub y: Vec<T>,
    pub objective: T,
    pub iterations: usize,
    pub polished: bool,
    pub residuals: KktResiduals<T>,
}

/// A certificate of primal infeasibility: a direction `delta_y` with
/// `A' delta_y ~ 0` whose support function on `[l, u]` is negative.
#[derive(Debug, Clone)]
pub struct InfeasibilityCertificate<T> {
    pub delta_y: Vec<T>,
}

#[derive(Debug, Clone)]
pub enum QpOutcome<T> {
    Solved(QpSolution<T>),
    Infeasible(InfeasibilityCertificate<T>),
    /// The objective is unbounded below over the feasible set.
    Unbounded,
}

impl<T> QpOutcome<T> {
    pub fn solution(&self) -> Option<&QpSolution<T>> {
        match self {
            QpOutcome::Solved(s) => Some(s),
            _ => None,
        }
    }

    pub fn is_infeasible(&self) -> bool {
        matches!(self, QpOutcome::Infeasible(_))
    }
}

const SIGMA: f64 = 1e-6;
const ALPHA: f64 = 1.6;
const RHO_INIT: f64 = 0.1;
const RHO_EQ_SCALE: f64 = 1e3;
const RHO_MIN: f64 = 1e-6;
const RHO_MAX: f64 = 1e6;
const CHECK_INTERVAL: usize = 25;
const RHO_UPDATE_INTERVAL: usize = 200;
const MAX_ITER: usize = 50_000;
/// A certificate ray is accepted when its support gap exceeds its
/// constraint-space residual by this factor: it then proves that no
/// feasible point exists within a ball of this radius in the scaled space.
const RAY_MARGIN: f64 = 200.0;
const POLISH_REG: f64 = 1e-6;
const POLISH_REFINE_STEPS: usize = 10;

pub fn solve_qp<T: Real>(qp: &QpProblem<T>, tol: T) -> Result<QpOutcome<T>, QpError> {
    solve_qp_warm(qp, tol, None)
}

/// Like [`solve_qp`] but optionally starting from a previous primal-dual
/// pair (used by branch-and-bound to reuse the parent node's solution).
pub fn solve_qp_warm<T: Real>(
    qp: &QpProblem<T>,
    tol: T,
    warm: Option<(&[T], &[T])>,
) -> Result<QpOutcome<T>, QpError> {
    let n = qp.num_vars();
    let m = qp.num_rows();
    assert_eq!(qp.p.rows, n);
    assert_eq!(qp.p.cols, n);
    assert_eq!(qp.a.rows, m);
    assert_eq!(qp.a.cols, n);
    assert_eq!(qp.u.len(), m);
    debug_assert!(qp.l.iter().zip(&qp.u).all(|(l, u)| l <= u), "l <= u required");

    // trivial unconstrained case
    if m == 0 {
        return solve_unconstrained(qp, tol);
    }

    // equilibrate; iterate on the scaled problem, judge on the original
    let scaling = ruiz_equilibrate(qp);
    let sqp = &scaling.scaled;

    let sigma: T = real(SIGMA);
    let is_eq: Vec<bool> = sqp.l.iter().zip(&sqp.u).map(|(l, u)| l == u).collect();
    let mut rho_bar: T = real(RHO_INIT);
    let rho_vec = |rho_bar: T| -> Vec<T> {
        is_eq
            .iter()
            .map(|&eq| if eq { rho_bar * real(RHO_EQ_SCALE) } else { rho_bar })
            .collect()
    };
    let mut rho = rho_vec(rho_bar);
    let mut kkt = factor_kkt(sqp, sigma, &rho)?;

    let mut x = match warm {
        Some((wx, _)) => scaling.scale_x(wx),
        None => vec![T::zero(); n],
    };
    let mut y = match warm {
        Some((_, wy)) => scaling.scale_y(wy),
        None => vec![T::zero(); m],
    };
    let mut z = sqp.a.mul_vec(&x);
    clamp_into(&mut z, &sqp.l, &sqp.u);

    let alpha: T = real(ALPHA);
    let mut rhs = vec![T::zero(); n + m];
    let mut iter = 0usize;
    let mut best_kkt: Option<(Vec<T>, Vec<T>, KktResiduals<T>)> = None;
    // deltas accumulated since the last check: a smoother ray estimate for
    // the infeasibility certificates than a single iteration's step
    let mut delta_x_acc = vec![T::zero(); n];
    let mut delta_y_acc = vec![T::zero(); m];

    while iter < MAX_ITER {
        iter += 1;
        // rhs = [sigma*x - q; z - y/rho]
        for i in 0..n {
            rhs[i] = sigma * x[i] - sqp.q[i];
        }
        for i in 0..m {
            rhs[n + i] = z[i] - y[i] / rho[i];
        }
        kkt.solve_in_place(&mut rhs[..]);
        // x_tilde = rhs[..n], nu = rhs[n..]
        let mut x_next = vec![T::zero(); n];
        for i in 0..n {
            x_next[i] = alpha * rhs[i] + (T::one() - alpha) * x[i];
        }
        let mut z_pre = vec![T::zero(); m];
        for i in 0..m {
            let z_tilde = z[i] + (rhs[n + i] - y[i]) / rho[i];
            z_pre[i] = alpha * z_tilde + (T::one() - alpha) * z[i];
        }
        let mut z_next = vec![T::zero(); m];
        let mut y_next = vec![T::zero(); m];
        for i in 0..m {
            let v = z_pre[i] + y[i] / rho[i];
            z_next[i] = v.max(sqp.l[i]).min(sqp.u[i]);
            y_next[i] = y[i] + rho[i] * (z_pre[i] - z_next[i]);
        }

        for (acc, (a, b)) in delta_x_acc.iter_mut().zip(x_next.iter().zip(&x)) {
            *acc += *a - *b;
        }
        for (acc, (a, b)) in delta_y_acc.iter_mut().zip(y_next.iter().zip(&y)) {
            *acc += *a - *b;
        }
        x = x_next;
        z = z_next;
        y = y_next;

        if iter % CHECK_INTERVAL == 0 || iter == MAX_ITER {
            let x_orig = scaling.unscale_x(&x);
            let y_orig = scaling.unscale_y(&y);
            let res = KktResiduals::evaluate(qp, &x_orig, &y_orig);
            if res.max() <= tol {
                let sol = finish(qp, x_orig, y_orig, iter, false, res);
                return Ok(QpOutcome::Solved(sol));
            }
            // try to polish once the iterates are roughly primal-feasible;
            // the reduced KKT solve supplies the remaining accuracy
            let scale = norm_inf(&qp.q).max(T::one());
            let rough: T = (tol + real::<T>(1e-4) * scale).max(real(1e-4));
            if res.primal <= rough {
                if let Some((px, py, pres)) = polish(qp, &x_orig) {
                    if iter % 5000 == 0 && std::env::var("TSCMPC_QP_TRACE").is_ok() {
                        eprintln!("  polish at {iter}: stat {:.2e} prim {:.2e} cs {:.2e}",
                            pres.stationarity.to_f64().unwrap(), pres.primal.to_f64().unwrap(), pres.complementarity.to_f64().unwrap());
                    }
                    if pres.max() <= tol {
                        let sol = finish(qp, px, py, iter, true, pres);
                        return Ok(QpOutcome::Solved(sol));
                    }
                    let keep = best_kkt.as_ref().map_or(true, |(_, _, b)| pres.max() < b.max());
                    if keep {
                        best_kkt = Some((px, py, pres));
                    }
                }
            }
            if iter % 5000 == 0 && std::env::var("TSCMPC_QP_TRACE").is_ok() {
                let dyn_ = norm_inf(&delta_y_acc);
                let at = sqp.a.mul_vec_transpose(&delta_y_acc);
                let mut support = T::zero();
                for i in 0..delta_y_acc.len() {
                    let pos = delta_y_acc[i].max(T::zero());
                    let neg = delta_y_acc[i].min(T::zero());
                    if sqp.u[i].is_finite() { support += sqp.u[i] * pos; }
                    if sqp.l[i].is_finite() { support += sqp.l[i] * neg; }
                }
                eprintln!("it {iter}: res {:.2e}/{:.2e}/{:.2e} |dy| {:.2e} |A'dy|/|dy| {:.2e} support/|dy| {:.2e}",
                    res.stationarity.to_f64().unwrap(), res.primal.to_f64().unwrap(), res.complementarity.to_f64().unwrap(),
                    dyn_.to_f64().unwrap(),
                    (norm_inf(&at) / dyn_).to_f64().unwrap(),
                    (support / dyn_).to_f64().unwrap());
            }
            if let Some(mut cert) = detect_primal_infeasible(sqp, &delta_y_acc) {
                for (v, e) in cert.delta_y.iter_mut().zip(&scaling.e) {
                    *v *= *e;
                }
                return Ok(QpOutcome::Infeasible(cert));
            }
            if detect_dual_infeasible(sqp, &delta_x_acc) {
                return Ok(QpOutcome::Unbounded);
            }
            for v in delta_x_acc.iter_mut() {
                *v = T::zero();
            }
            for v in delta_y_acc.iter_mut() {
                *v = T::zero();
            }
        }

        if iter % RHO_UPDATE_INTERVAL == 0 && iter < MAX_ITER {
            let new_rho_bar = adapt_rho(sqp, &x, &y, &z, rho_bar);
            let ratio = (new_rho_bar / rho_bar).max(rho_bar / new_rho_bar);
            if ratio > real(10.0) {
                rho_bar = new_rho_bar;
                rho = rho_vec(rho_bar);
                kkt = factor_kkt(sqp, sigma, &rho)?;
            }
        }
    }

    // out of iterations: accept the best polished pair if it meets tol
    if let Some((px, py, pres)) = best_kkt {
        if pres.max() <= tol {
            return Ok(QpOutcome::Solved(finish(qp, px, py, iter, true, pres)));
        }
    }
    Err(QpError::NumericalFailure { iterations: iter })
}

const RUIZ_ITERS: usize = 10;

/// Diagonal scalings from modified Ruiz equilibration of the KKT matrix
/// plus cost normalization: `P -> c D P D`, `q -> c D q`, `A -> E A D`,
/// bounds `-> E l, E u`. Unscaling: `x = D x_bar`, `y = E y_bar / c`.
struct Scaling<T> {
    d: Vec<T>,
    e: Vec<T>,
    c: T,
    scaled: QpProblem<T>,
}

impl<T: Real> Scaling<T> {
    fn unscale_x(&self, x: &[T]) -> Vec<T> {
        x.iter().zip(&self.d).map(|(v, d)| *v * *d).collect()
    }

    fn unscale_y(&self, y: &[T]) -> Vec<T> {
        y.iter().zip(&self.e).map(|(v, e)| *v * *e / self.c).collect()
    }

    fn scale_x(&self, x: &[T]) -> Vec<T> {
        x.iter().zip(&self.d).map(|(v, d)| *v / *d).collect()
    }

    fn scale_y(&self, y: &[T]) -> Vec<T> {
        y.iter().zip(&self.e).map(|(v, e)| *v * self.c / *e).collect()
    }
}

fn ruiz_equilibrate<T: Real>(qp: &QpProblem<T>) -> Scaling<T> {
    let n = qp.num_vars();
    let m = qp.num_rows();
    let mut p = qp.p.clone();
    let mut a = qp.a.clone();
    let mut q = qp.q.clone();
    let mut d = vec![T::one(); n];
    let mut e = vec![T::one(); m];
    let mut c = T::one();
    let guard = |v: T| if v > T::zero() { v } else { T::one() };

    for _ in 0..RUIZ_ITERS {
        // column norms of [P A'; A 0]
        let mut col = vec![T::zero(); n];
        for i in 0..n {
            for j in 0..n {
                col[j] = col[j].max(p[(i, j)].abs());
            }
        }
        let mut row = vec![T::zero(); m];
        for r in 0..m {
            for j in 0..n {
                let v = a[(r, j)].abs();
                col[j] = col[j].max(v);
                row[r] = row[r].max(v);
            }
        }
        let dd: Vec<T> = col.iter().map(|&v| T::one() / guard(v).sqrt()).collect();
        let ee: Vec<T> = row.iter().map(|&v| T::one() / guard(v).sqrt()).collect();
        for i in 0..n {
            for j in 0..n {
                p[(i, j)] = p[(i, j)] * dd[i] * dd[j];
            }
        }
        for r in 0..m {
            for j in 0..n {
                a[(r, j)] = a[(r, j)] * ee[r] * dd[j];
            }
        }
        for j in 0..n {
            q[j] *= dd[j];
            d[j] *= dd[j];
        }
        for r in 0..m {
            e[r] *= ee[r];
        }
        // cost normalization
        let mut mean_col = T::zero();
        for j in 0..n {
            let mut cn = T::zero();
            for i in 0..n {
                cn = cn.max(p[(i, j)].abs());
            }
            mean_col += cn;
        }
        mean_col /= real(n as f64);
        let gamma = T::one() / guard(mean_col.max(norm_inf(&q)));
        for i in 0..n {
            for j in 0..n {
                p[(i, j)] *= gamma;
            }
        }
        for qj in q.iter_mut() {
            *qj *= gamma;
        }
        c *= gamma;
    }

    let l: Vec<T> = qp.l.iter().zip(&e).map(|(v, ei)| *v * *ei).collect();
    let u: Vec<T> = qp.u.iter().zip(&e).map(|(v, ei)| *v * *ei).collect();
    Scaling { d, e, c, scaled: QpProblem { p, q, a, l, u } }
}

fn finish<T: Real>(
    qp: &QpProblem<T>,
    x: Vec<T>,
    y: Vec<T>,
    iterations: usize,
    polished: bool,
    residuals: KktResiduals<T>,
) -> QpSolution<T> {
    let objective = qp.objective(&x);
    QpSolution { objective, x, y, iterations, polished, residuals }
}

fn solve_unconstrained<T: Real>(qp: &QpProblem<T>, tol: T) -> Result<QpOutcome<T>, QpError> {
    let n = qp.num_vars();
    let mut reg = qp.p.clone();
    for i in 0..n {
        reg[(i, i)] += real(SIGMA);
    }
    let Some(f) = Ldlt::factor(&reg) else {
        return Err(QpError::NumericalFailure { iterations: 0 });
    };
    let mut x: Vec<T> = qp.q.iter().map(|&v| -v).collect();
    f.solve_in_place(&mut x);
    // refine against the unregularized system
    for _ in 0..POLISH_REFINE_STEPS {
        let mut r: Vec<T> = qp.p.mul_vec(&x);
        for i in 0..n {
            r[i] = -qp.q[i] - r[i];
        }
        f.solve_in_place(&mut r);
        for i in 0..n {
            x[i] += r[i];
        }
    }
    let res = KktResiduals::evaluate(qp, &x, &[]);
    if res.max() <= tol {
        Ok(QpOutcome::Solved(finish(qp, x, vec![], 1, false, res)))
    } else {
        // singular P with unmatched gradient: unbounded below
        Ok(QpOutcome::Unbounded)
    }
}

fn clamp_into<T: Real>(z: &mut [T], l: &[T], u: &[T]) {
    for i in 0..z.len() {
        z[i] = z[i].max(l[i]).min(u[i]);
    }
}

fn factor_kkt<T: Real>(qp: &QpProblem<T>, sigma: T, rho: &[T]) -> Result<Ldlt<T>, QpError> {
    let n = qp.num_vars();
    let m = qp.num_rows();
    let mut k = Mat::zeros(n + m, n + m);
    for i in 0..n {
        for j in 0..n {
            k[(i, j)] = qp.p[(i, j)];
        }
        k[(i, i)] += sigma;
    }
    for r in 0..m {
        for c in 0..n {
            let v = qp.a[(r, c)];
            k[(n + r, c)] = v;
            k[(c, n + r)] = v;
        }
        k[(n + r, n + r)] = -T::one() / rho[r];
    }
    Ldlt::factor(&k).ok_or(QpError::NumericalFailure { iterations: 0 })
}

fn adapt_rho<T: Real>(qp: &QpProblem<T>, x: &[T], y: &[T], z: &[T], rho_bar: T) -> T {
    let ax = qp.a.mul_vec(x);
    let r_prim: T = ax
        .iter()
        .zip(z)
        .fold(T::zero(), |acc, (a, b)| acc.max((*a - *b).abs()));
    let denom_p = norm_inf(&ax).max(norm_inf(z)).max(T::one());
    let mut grad = qp.p.mul_vec(x);
    let px_norm = norm_inf(&grad);
    let aty = qp.a.mul_vec_transpose(y);
    for (g, (qi, at)) in grad.iter_mut().zip(qp.q.iter().zip(&aty)) {
        *g += *qi + *at;
    }
    let r_dual = norm_inf(&grad);
    let denom_d = px_norm.max(norm_inf(&aty)).max(norm_inf(&qp.q)).max(T::one());
    let num = (r_prim / denom_p).max(real(1e-12));
    let den = (r_dual / denom_d).max(real(1e-12));
    (rho_bar * (num / den).sqrt())
        .max(real(RHO_MIN))
        .min(real(RHO_MAX))
}

/// Farkas-style test: for any feasible x, `delta_y' A x <= support(delta_y)`
/// and `delta_y' A x >= -||A' delta_y|| ||x||`. A ray with negative support
/// gap `sigma` and constraint-space residual `tau` therefore proves that no
/// feasible point exists with `||x|| <= sigma / tau`; the ray is accepted
/// once that radius exceeds [`RAY_MARGIN`].
fn detect_primal_infeasible<T: Real>(
    qp: &QpProblem<T>,
    delta_y: &[T],
) -> Option<InfeasibilityCertificate<T>> {
    let dy_norm = norm_inf(delta_y);
    if dy_norm <= T::zero() || !dy_norm.is_finite() {
        return None;
    }
    let mut support = T::zero();
    let mut inf_bound_leak = T::zero();
    for i in 0..delta_y.len() {
        let pos = delta_y[i].max(T::zero());
        let neg = delta_y[i].min(T::zero());
        if qp.u[i].is_finite() {
            support += qp.u[i] * pos;
        } else {
            inf_bound_leak = inf_bound_leak.max(pos);
        }
        if qp.l[i].is_finite() {
            support += qp.l[i] * neg;
        } else {
            inf_bound_leak = inf_bound_leak.max(-neg);
        }
    }
    let sigma = -support;
    if !(sigma > T::zero()) {
        return None;
    }
    // components pushing on an absent bound would make the support infinite
    if inf_bound_leak * real(RAY_MARGIN) > sigma {
        return None;
    }
    let tau = norm_inf(&qp.a.mul_vec_transpose(delta_y));
    if tau * real(RAY_MARGIN) <= sigma {
        Some(InfeasibilityCertificate { delta_y: delta_y.to_vec() })
    } else {
        None
    }
}

/// Mirror of the primal test: a direction of unbounded descent must lower
/// the cost while staying asymptotically feasible.
fn detect_dual_infeasible<T: Real>(qp: &QpProblem<T>, delta_x: &[T]) -> bool {
    let dx_norm = norm_inf(delta_x);
    if dx_norm <= T::zero() || !dx_norm.is_finite() {
        return false;
    }
    let sigma = -dot(&qp.q, delta_x);
    if !(sigma > T::zero()) {
        return false;
    }
    let margin: T = real(RAY_MARGIN);
    if norm_inf(&qp.p.mul_vec(delta_x)) * margin > sigma {
        return false;
    }
    let a_dx = qp.a.mul_vec(delta_x);
    for i in 0..a_dx.len() {
        let v = a_dx[i];
        if v * margin > sigma && qp.u[i].is_finite() {
            return false;
        }
        if -v * margin > sigma && qp.l[i].is_finite() {
            return false;
        }
    }
    true
}

/// Tolerance (scaled by the bound magnitude) under which a row counts as
/// active for the polish step.
const ACTIVE_SLACK: f64 = 1e-5;

/// Active-set refinement: guesses active rows from slack proximity on the
/// current primal iterate (primal iterates settle long before the duals),
/// solves the reduced equality KKT system, and re-solves with any newly
/// violated rows pinned until the candidate is primal-feasible. Returns the
/// best refined pair with its true residuals.
fn polish<T: Real>(qp: &QpProblem<T>, x: &[T]) -> Option<(Vec<T>, Vec<T>, KktResiduals<T>)> {
    let n = qp.num_vars();
    let m = qp.num_rows();
    let s_now = qp.a.mul_vec(x);
    let mut active: Vec<(usize, bool)> = Vec::new(); // (row, upper?)
    let mut in_set = vec![false; m];
    for i in 0..m {
        if qp.l[i] == qp.u[i] {
            active.push((i, true)); // equality row, bound value same either way
            in_set[i] = true;
            continue;
        }
        let eps_u: T = real::<T>(ACTIVE_SLACK) * (T::one() + qp.u[i].abs().min(real(1e12)));
        let eps_l: T = real::<T>(ACTIVE_SLACK) * (T::one() + qp.l[i].abs().min(real(1e12)));
        if qp.u[i].is_finite() && (qp.u[i] - s_now[i]).abs() <= eps_u {
            active.push((i, true));
            in_set[i] = true;
        } else if qp.l[i].is_finite() && (s_now[i] - qp.l[i]).abs() <= eps_l {
            active.push((i, false));
            in_set[i] = true;
        }
    }

    let mut best: Option<(Vec<T>, Vec<T>, KktResiduals<T>)> = None;
    for _round in 0..POLISH_ACTIVE_ROUNDS {
        let (px, py) = solve_active_kkt(qp, &active)?;
        let res = KktResiduals::evaluate(qp, &px, &py);
        let better = best.as_ref().map_or(true, |(_, _, b)| res.max() < b.max());
        // pin any rows the candidate violates and try again
        let s = qp.a.mul_vec(&px);
        let mut added = false;
        for i in 0..m {
            if in_set[i] {
                continue;
            }
            if qp.u[i].is_finite() && s[i] > qp.u[i] {
                active.push((i, true));
                in_set[i] = true;
                added = true;
            } else if qp.l[i].is_finite() && s[i] < qp.l[i] {
                active.push((i, false));
                in_set[i] = true;
                added = true;
            }
        }
        if better {
            best = Some((px, py, res));
        }
        if !added {
            break;
        }
    }
    best
}

/// Maximum active-set growth rounds inside the polish step.
const POLISH_ACTIVE_ROUNDS: usize = 6;

/// Solves the equality-pinned KKT system for a fixed active set and expands
/// the dual to full row space with pinned-side sign clipping.
fn solve_active_kkt<T: Real>(
    qp: &QpProblem<T>,
    active: &[(usize, bool)],
) -> Option<(Vec<T>, Vec<T>)> {
    let n = qp.num_vars();
    let m = qp.num_rows();
    let na = active.len();
    let dim = n + na;
    let build_kkt = |delta: T| -> Mat<T> {
        let mut k = Mat::zeros(dim, dim);
        for i in 0..n {
            for j in 0..n {
                k[(i, j)] = qp.p[(i, j)];
            }
            k[(i, i)] += delta;
        }
        for (r, &(row, _)) in active.iter().enumerate() {
            for c in 0..n {
                let v = qp.a[(row, c)];
                k[(n + r, c)] = v;
                k[(c, n + r)] = v;
            }
            k[(n + r, n + r)] = -delta;
        }
        k
    };
    // partial-pivoted LU keeps growth bounded where unpivoted LDLT can
    // overflow (zero-weight channels leave the quadratic block singular);
    // redundant active rows additionally need the regularized variant
    let f = Lu::factor(&build_kkt(T::zero()))
        .or_else(|| Lu::factor(&build_kkt(real(POLISH_REG))))?;
    let mut rhs = vec![T::zero(); dim];
    for i in 0..n {
        rhs[i] = -qp.q[i];
    }
    for (r, &(row, upper)) in active.iter().enumerate() {
        rhs[n + r] = if upper { qp.u[row] } else { qp.l[row] };
    }
    // residual of the unregularized reduced KKT system
    let unreg_residual = |sol: &[T]| -> Vec<T> {
        let mut resid = rhs.clone();
        for i in 0..n {
            let mut acc = dot(qp.p.row(i), &sol[..n]);
            for (r, &(row, _)) in active.iter().enumerate() {
                acc += qp.a[(row, i)] * sol[n + r];
            }
            resid[i] -= acc;
        }
        for (r, &(row, _)) in active.iter().enumerate() {
            resid[n + r] -= dot(qp.a.row(row), &sol[..n]);
        }
        resid
    };
    // iterative refinement against the unregularized system, keeping the
    // best iterate; redundant active rows make the system singular, so each
    // step is validated rather than trusted
    let mut sol = f.solve(&rhs);
    if sol.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let mut best = sol.clone();
    let mut best_res = norm_inf(&unreg_residual(&sol));
    for _ in 0..POLISH_REFINE_STEPS {
        let resid = unreg_residual(&sol);
        let corr = f.solve(&resid);
        axpy(T::one(), &corr, &mut sol);
        if sol.iter().any(|v| !v.is_finite()) {
            break;
        }
        let r = norm_inf(&unreg_residual(&sol));
        if r < best_res {
            best_res = r;
            best = sol.clone();
        } else {
            break;
        }
    }
    let sol = best;
    let x = sol[..n].to_vec();
    let mut y_full = vec![T::zero(); m];
    for (r, &(row, _)) in active.iter().enumerate() {
        y_full[row] = sol[n + r];
    }
    // a pinned side's dual sign is constrained: upper-active rows need
    // y >= 0, lower-active rows y <= 0; weakly active rows get clipped to 0
    for &(row, upper) in active {
        if qp.l[row] == qp.u[row] {
            continue;
        }
        if upper {
            y_full[row] = y_full[row].max(T::zero());
        } else {
            y_full[row] = y_full[row].min(T::zero());
        }
    }
    Some((x, y_full))
}

/// Direct solve of an equality-constrained QP via its KKT linear system,
/// using LU with partial pivoting. Independent of the iterative path; used
/// as a test oracle and for hand verification.
pub fn solve_equality_qp<T: Real>(
    p: &Mat<T>,
    q: &[T],
    a: &Mat<T>,
    b: &[T],
) -> Option<(Vec<T>, Vec<T>)> {
    let n = q.len();
    let m = b.len();
    let mut k = Mat::zeros(n + m, n + m);
    for i in 0..n {
        for j in 0..n {
            k[(i, j)] = p[(i, j)];
        }
    }
    for r in 0..m {
        for c in 0..n {
            k[(n + r, c)] = a[(r, c)];
            k[(c, n + r)] = a[(r, c)];
        }
    }
    let f = Lu::factor(&k)?;
    let mut rhs = vec![T::zero(); n + m];
    for i in 0..n {
        rhs[i] = -q[i];
    }
    rhs[n..].copy_from_slice(b);
    let sol = f.solve(&rhs);
    Some((sol[..n].to_vec(), sol[n..].to_vec()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn mat(rows: &[&[f64]]) -> Mat<f64> {
        Mat::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>())
    }

    #[test]
    fn one_dim_clamp() {
        // min (x-1)^2 s.t. x <= 0.5  ->  x = 0.5
        let qp = QpProblem {
            p: mat(&[&[2.0]]),
            q: vec![-2.0],
            a: mat(&[&[1.0]]),
            l: vec![f64::NEG_INFINITY],
            u: vec![0.5],
        };
        let out = solve_qp(&qp, 1e-8).unwrap();
        let sol = out.solution().expect("solvable");
        assert!((sol.x[0] - 0.5).abs() < 1e-8, "{}", sol.x[0]);
    }

    #[test]
    fn equality_only_matches_kkt_oracle() {
        // min 1/2 x'Px + q'x s.t. Ax = b
        let p = mat(&[&[4.0, 1.0, 0.0], &[1.0, 3.0, 0.5], &[0.0, 0.5, 2.0]]);
        let q = vec![1.0, -2.0, 0.3];
        let a = mat(&[&[1.0, 1.0, 0.0], &[0.0, 1.0, -1.0]]);
        let b = vec![1.0, 0.5];
        let (x_direct, _) = solve_equality_qp(&p, &q, &a, &b).unwrap();

        let qp = QpProblem { p, q, a, l: b.clone(), u: b };
        let out = solve_qp(&qp, 1e-9).unwrap();
        let sol = out.solution().unwrap();
        for (xi, xd) in sol.x.iter().zip(&x_direct) {
            assert!((xi - xd).abs() < 1e-8, "{xi} vs {xd}");
        }
        assert!(sol.residuals.max() <= 1e-9);
    }

    #[test]
    fn contradictory_bounds_infeasible() {
        // x <= 0 and x >= 1
        let qp = QpProblem {
            p: mat(&[&[1.0]]),
            q: vec![0.0],
            a: mat(&[&[1.0], &[1.0]]),
            l: vec![f64::NEG_INFINITY, 1.0],
            u: vec![0.0, f64::INFINITY],
        };
        let out = solve_qp(&qp, 1e-8).unwrap();
        assert!(out.is_infeasible());
    }

    #[test]
    fn unbounded_detected() {
        // min x s.t. x <= 0: unbounded below
        let qp = QpProblem {
            p: mat(&[&[0.0]]),
            q: vec![1.0],
            a: mat(&[&[1.0]]),
            l: vec![f64::NEG_INFINITY],
            u: vec![0.0],
        };
        let out = solve_qp(&qp, 1e-8).unwrap();
        assert!(matches!(out, QpOutcome::Unbounded));
    }

    #[test]
    fn unconstrained_quadratic() {
        let qp = QpProblem {
            p: mat(&[&[2.0, 0.0], &[0.0, 4.0]]),
            q: vec![-2.0, -8.0],
            a: Mat::zeros(0, 2),
            l: vec![],
            u: vec![],
        };
        let out = solve_qp(&qp, 1e-9).unwrap();
        let sol = out.solution().unwrap();
        assert!((sol.x[0] - 1.0).abs() < 1e-9);
        assert!((sol.x[1] - 2.0).abs() < 1e-9);
    }

    #[test]
    fn box_qp_known_solution() {
        // min 1/2 ||x - c||^2 s.t. 0 <= x <= 1 -> clamp(c)
        let c = [1.5, -0.2, 0.7];
        let qp = QpProblem {
            p: Mat::identity(3),
            q: c.iter().map(|v| -v).collect(),
            a: Mat::identity(3),
            l: vec![0.0; 3],
            u: vec![1.0; 3],
        };
        let out = solve_qp(&qp, 1e-9).unwrap();
        let sol = out.solution().unwrap();
        let expected = [1.0f64, 0.0, 0.7];
        for (xi, e) in sol.x.iter().zip(&expected) {
            assert!((xi - e).abs() < 1e-8, "{xi} vs {e}");
        }
    }

    #[test]
    fn psd_hessian_with_zero_block() {
        // only the first variable is penalized; second pinned by equality
        let qp = QpProblem {
            p: mat(&[&[2.0, 0.0], &[0.0, 0.0]]),
            q: vec![-4.0, 0.0],
            a: mat(&[&[0.0, 1.0]]),
            l: vec![3.0],
            u: vec![3.0],
        };
        let out = solve_qp(&qp, 1e-8).unwrap();
        let sol = out.solution().unwrap();
        assert!((sol.x[0] - 2.0).abs() < 1e-7);
        assert!((sol.x[1] - 3.0).abs() < 1e-7);
    }

    #[test]
    fn random_strictly_convex_qps_satisfy_kkt() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for trial in 0..30 {
            let n = rng.gen_range(2..6);
            let m = rng.gen_range(1..8);
            // P = L L' + eps I (PD)
            let mut p = Mat::<f64>::zeros(n, n);
            for i in 0..n {
                for j in 0..n {
                    let v: f64 = rng.gen_range(-1.0..1.0);
                    p[(i, j)] = v;
                }
            }
            let mut pd = Mat::<f64>::zeros(n, n);
            for i in 0..n {
                for j in 0..n {
                    let mut acc = 0.0;
                    for k in 0..n {
                        acc += p[(i, k)] * p[(j, k)];
                    }
                    pd[(i, j)] = acc;
                }
                pd[(i, i)] += 0.1;
            }
            let q: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let mut a = Mat::<f64>::zeros(m, n);
            for i in 0..m {
                for j in 0..n {
                    a[(i, j)] = rng.gen_range(-1.0..1.0);
                }
            }
            // feasible by construction: bounds straddle A x0
            let x0: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let ax0 = a.mul_vec(&x0);
            let l: Vec<f64> = ax0.iter().map(|v| v - rng.gen_range(0.0..1.0)).collect();
            let u: Vec<f64> = ax0.iter().map(|v| v + rng.gen_range(0.0..1.0)).collect();
            let qp = QpProblem { p: pd, q, a, l, u };
            let out = solve_qp(&qp, 1e-8).unwrap();
            let sol = out.solution().unwrap_or_else(|| panic!("trial {trial} unsolved"));
            assert!(
                sol.residuals.max() <= 1e-8,
                "trial {trial}: residuals {:?}",
                sol.residuals
            );
        }
    }

    #[test]
    fn warm_start_agrees_with_cold() {
        let qp = QpProblem {
            p: mat(&[&[2.0, 0.5], &[0.5, 1.0]]),
            q: vec![1.0, -1.0],
            a: mat(&[&[1.0, 1.0], &[1.0, -1.0]]),
            l: vec![-1.0, -2.0],
            u: vec![1.0, 2.0],
        };
        let cold = solve_qp(&qp, 1e-9).unwrap();
        let cs = cold.solution().unwrap();
        let warm = solve_qp_warm(&qp, 1e-9, Some((&cs.x, &cs.y))).unwrap();
        let ws = warm.solution().unwrap();
        assert!((cs.objective - ws.objective).abs() < 1e-9);
    }

    #[test]
    fn f32_lane_solves() {
        let qp = QpProblem::<f32> {
            p: Mat::identity(2),
            q: vec![-1.0, -1.0],
            a: Mat::identity(2),
            l: vec![0.0, 0.0],
            u: vec![0.25, 10.0],
        };
        let out = solve_qp(&qp, 1e-4f32).unwrap();
        let sol = out.solution().unwrap();
        assert!((sol.x[0] - 0.25).abs() < 1e-3);
        assert!((sol.x[1] - 1.0).abs() < 1e-3);
    }
}
