//! Derivative-free and finite-difference minimizers used by the estimators.
//!
//! All minimizers treat a non-finite objective value as `+inf`, so an
//! objective can signal "outside the domain" by returning NaN or infinity.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Optimizer {
    NelderMead,
    #[default]
    QuasiNewtonFD,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptOptions {
    pub max_iters: usize,
    /// Stop when every `|g_j| * max(1, |x_j|)` is below this.
    pub gtol: f64,
    /// Stop when an iteration lowers the objective by less than this.
    pub ftol: f64,
    /// Stop when no coordinate moved by more than this (times `max(1, |x_j|)`).
    pub xtol: f64,
    /// Longest step allowed in a single line search, in parameter units.
    pub max_step: f64,
}

impl Default for OptOptions {
    fn default() -> Self {
        OptOptions {
            max_iters: 500,
            gtol: 1e-5,
            ftol: 0.0,
            xtol: 1e-13,
            max_step: 4.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct OptResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub iters: usize,
    pub converged: bool,
    pub reason: String,
    /// Objective value after each iteration.
    pub trace: Vec<f64>,
}

fn finite_or_inf(v: f64) -> f64 {
    if v.is_finite() {
        v
    } else {
        f64::INFINITY
    }
}

/// Central-difference gradient with step `1e-5 * max(1, |x_j|)`. Falls back
/// to a one-sided difference when one side is not finite.
pub fn fd_gradient<F: FnMut(&[f64]) -> f64>(f: &mut F, x: &[f64], fx: f64) -> Vec<f64> {
    let mut g = vec![0.0; x.len()];
    let mut xp = x.to_vec();
    for j in 0..x.len() {
        let h = 1e-5 * x[j].abs().max(1.0);
        xp[j] = x[j] + h;
        let fp = f(&xp);
        xp[j] = x[j] - h;
        let fm = f(&xp);
        xp[j] = x[j];
        g[j] = match (fp.is_finite(), fm.is_finite()) {
            (true, true) => (fp - fm) / (2.0 * h),
            (true, false) => (fp - fx) / h,
            (false, true) => (fx - fm) / h,
            (false, false) => 0.0,
        };
    }
    g
}

fn scaled_gnorm(g: &[f64], x: &[f64]) -> f64 {
    g.iter()
        .zip(x)
        .map(|(gi, xi)| gi.abs() * xi.abs().max(1.0))
        .fold(0.0, f64::max)
}

const PRECISION_REASON: &str = "optimum reached at working precision";

/// Whether a stalled search sits at the best point double precision can
/// resolve: the predicted decrease `gᵀ H⁻¹ g` is below the rounding level of
/// the objective, and the gradient is within a factor 100 of `gtol`.
fn at_precision_floor(decrement: f64, g: &[f64], x: &[f64], fx: f64, gtol: f64) -> bool {
    let floor = 1e3 * f64::EPSILON * fx.abs().max(1.0);
    decrement >= 0.0 && decrement <= floor && scaled_gnorm(g, x) <= 100.0 * gtol
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// BFGS with finite-difference gradients and a backtracking Armijo line search.
pub fn bfgs<F: FnMut(&[f64]) -> f64>(mut f: F, x0: &[f64], opts: &OptOptions) -> OptResult {
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut fx = finite_or_inf(f(&x));
    let mut trace = Vec::new();
    if n == 0 || !fx.is_finite() {
        let reason = if n == 0 { "nothing to optimize" } else { "objective not finite at start" };
        return OptResult { x, f: fx, iters: 0, converged: n == 0, reason: reason.into(), trace };
    }
    let mut g = fd_gradient(&mut f, &x, fx);
    let identity = |n: usize| {
        let mut h = vec![0.0; n * n];
        for i in 0..n {
            h[i * n + i] = 1.0;
        }
        h
    };
    let mut h = identity(n);
    let mut fresh = true;
    let mut iters = 0;
    while iters < opts.max_iters {
        if scaled_gnorm(&g, &x) <= opts.gtol {
            return OptResult { x, f: fx, iters, converged: true, reason: "gradient tolerance reached".into(), trace };
        }
        let mut d: Vec<f64> = (0..n).map(|i| -dot(&h[i * n..(i + 1) * n], &g)).collect();
        let mut slope = dot(&g, &d);
        if !(slope < 0.0) {
            h = identity(n);
            fresh = true;
            d = g.iter().map(|v| -v).collect();
            slope = dot(&g, &d);
        }
        let norm = d.iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut alpha = if norm > opts.max_step { opts.max_step / norm } else { 1.0 };
        let mut accepted = None;
        for _ in 0..60 {
            let xn: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + alpha * b).collect();
            let fxn = finite_or_inf(f(&xn));
            if fxn <= fx + 1e-4 * alpha * slope {
                accepted = Some((xn, fxn));
                break;
            }
            alpha *= 0.5;
        }
        let Some((xn, fxn)) = accepted else {
            if !fresh {
                h = identity(n);
                fresh = true;
                continue;
            }
            let converged = at_precision_floor(-slope, &g, &x, fx, opts.gtol);
            let reason = if converged { PRECISION_REASON } else { "line search failed" };
            return OptResult { x, f: fx, iters, converged, reason: reason.into(), trace };
        };
        iters += 1;
        let gn = fd_gradient(&mut f, &xn, fxn);
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let yv: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &yv);
        let df = fx - fxn;
        let max_move = s
            .iter()
            .zip(&x)
            .map(|(si, xi)| si.abs() / xi.abs().max(1.0))
            .fold(0.0, f64::max);
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&yv, &yv).sqrt() {
            if fresh {
                // Scale the initial inverse Hessian before the first update.
                let scale = sy / dot(&yv, &yv);
                for v in h.iter_mut() {
                    *v *= scale;
                }
            }
            let rho = 1.0 / sy;
            let hy: Vec<f64> = (0..n).map(|i| dot(&h[i * n..(i + 1) * n], &yv)).collect();
            let yhy = dot(&yv, &hy);
            for i in 0..n {
                for j in 0..n {
                    h[i * n + j] += -rho * (hy[i] * s[j] + s[i] * hy[j]) + (rho * rho * yhy + rho) * s[i] * s[j];
                }
            }
            fresh = false;
        }
        x = xn;
        fx = fxn;
        g = gn;
        trace.push(fx);
        if df < opts.ftol || max_move < opts.xtol {
            if scaled_gnorm(&g, &x) <= opts.gtol {
                return OptResult { x, f: fx, iters, converged: true, reason: "gradient tolerance reached".into(), trace };
            }
            let decrement: f64 = (0..n).map(|i| g[i] * dot(&h[i * n..(i + 1) * n], &g)).sum();
            let converged = at_precision_floor(decrement, &g, &x, fx, opts.gtol);
            let reason = if converged { PRECISION_REASON } else { "no further progress" };
            return OptResult { x, f: fx, iters, converged, reason: reason.into(), trace };
        }
    }
    let converged = scaled_gnorm(&g, &x) <= opts.gtol;
    OptResult {
        x,
        f: fx,
        iters,
        converged,
        reason: if converged { "gradient tolerance reached".into() } else { "iteration limit reached".into() },
        trace,
    }
}

/// Nelder–Mead simplex search. Stops when the spread of objective values
/// across the simplex falls below `max(ftol, 1e-12)` and the simplex is
/// smaller than `xtol`-scaled units, or at `max_iters`.
pub fn nelder_mead<F: FnMut(&[f64]) -> f64>(mut f: F, x0: &[f64], opts: &OptOptions) -> OptResult {
    let n = x0.len();
    let mut trace = Vec::new();
    if n == 0 {
        let fx = f(x0);
        return OptResult { x: x0.to_vec(), f: fx, iters: 0, converged: true, reason: "nothing to optimize".into(), trace };
    }
    let mut simplex: Vec<Vec<f64>> = vec![x0.to_vec()];
    for j in 0..n {
        let mut v = x0.to_vec();
        v[j] += 0.25 * x0[j].abs().max(1.0);
        simplex.push(v);
    }
    let mut vals: Vec<f64> = simplex.iter().map(|v| finite_or_inf(f(v))).collect();
    let ftol = opts.ftol.max(1e-12);
    let xtol = opts.xtol.max(1e-10);
    let mut iters = 0;
    let mut converged = false;
    while iters < opts.max_iters {
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        vals = order.iter().map(|&i| vals[i]).collect();
        let spread = vals[n] - vals[0];
        let size = (1..=n)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .map(|(i, j)| (simplex[i][j] - simplex[0][j]).abs() / simplex[0][j].abs().max(1.0))
            .fold(0.0, f64::max);
        if spread.is_finite() && spread <= ftol && size <= xtol.max(1e-8) {
            converged = true;
            break;
        }
        iters += 1;
        let centroid: Vec<f64> = (0..n).map(|j| simplex[..n].iter().map(|v| v[j]).sum::<f64>() / n as f64).collect();
        let along = |t: f64| -> Vec<f64> {
            centroid.iter().zip(&simplex[n]).map(|(c, w)| c + t * (w - c)).collect()
        };
        let xr = along(-1.0);
        let fr = finite_or_inf(f(&xr));
        if fr < vals[0] {
            let xe = along(-2.0);
            let fe = finite_or_inf(f(&xe));
            if fe < fr {
                simplex[n] = xe;
                vals[n] = fe;
            } else {
                simplex[n] = xr;
                vals[n] = fr;
            }
        } else if fr < vals[n - 1] {
            simplex[n] = xr;
            vals[n] = fr;
        } else {
            let (xc, fc) = if fr < vals[n] {
                let xc = along(-0.5);
                let fc = finite_or_inf(f(&xc));
                (xc, fc)
            } else {
                let xc = along(0.5);
                let fc = finite_or_inf(f(&xc));
                (xc, fc)
            };
            if fc < vals[n].min(fr) {
                simplex[n] = xc;
                vals[n] = fc;
            } else {
                for i in 1..=n {
                    let shrunk: Vec<f64> = simplex[0].iter().zip(&simplex[i]).map(|(b, v)| b + 0.5 * (v - b)).collect();
                    vals[i] = finite_or_inf(f(&shrunk));
                    simplex[i] = shrunk;
                }
            }
        }
        trace.push(vals.iter().copied().fold(f64::INFINITY, f64::min));
    }
    let best = (0..=n).min_by(|&a, &b| vals[a].total_cmp(&vals[b])).unwrap();
    OptResult {
        x: simplex[best].clone(),
        f: vals[best],
        iters,
        converged,
        reason: if converged { "simplex collapsed".into() } else { "iteration limit reached".into() },
        trace,
    }
}

pub fn minimize<F: FnMut(&[f64]) -> f64>(method: Optimizer, f: F, x0: &[f64], opts: &OptOptions) -> OptResult {
    match method {
        Optimizer::NelderMead => nelder_mead(f, x0, opts),
        Optimizer::QuasiNewtonFD => bfgs(f, x0, opts),
    }
}

/// Minimum of `f` on `[a, b]` by Brent's parabolic/golden-section method.
/// Returns `(x, f(x))`.
pub fn brent_min<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, tol: f64) -> (f64, f64) {
    const CGOLD: f64 = 0.381_966_011_250_105_1;
    let (mut a, mut b) = (a.min(b), a.max(b));
    let mut x = a + CGOLD * (b - a);
    let (mut w, mut v) = (x, x);
    let mut fx = finite_or_inf(f(x));
    let (mut fw, mut fv) = (fx, fx);
    let mut d: f64 = 0.0;
    let mut e: f64 = 0.0;
    for _ in 0..500 {
        let xm = 0.5 * (a + b);
        let tol1 = tol * x.abs() + 1e-14;
        let tol2 = 2.0 * tol1;
        if (x - xm).abs() <= tol2 - 0.5 * (b - a) {
            break;
        }
        let mut golden = true;
        if e.abs() > tol1 {
            let r = (x - w) * (fx - fv);
            let mut q = (x - v) * (fx - fw);
            let mut p = (x - v) * q - (x - w) * r;
            q = 2.0 * (q - r);
            if q > 0.0 {
                p = -p;
            }
            q = q.abs();
            let etemp = e;
            e = d;
            if p.abs() < (0.5 * q * etemp).abs() && p > q * (a - x) && p < q * (b - x) {
                d = p / q;
                let u = x + d;
                if u - a < tol2 || b - u < tol2 {
                    d = tol1.copysign(xm - x);
                }
                golden = false;
            }
        }
        if golden {
            e = if x >= xm { a - x } else { b - x };
            d = CGOLD * e;
        }
        let u = if d.abs() >= tol1 { x + d } else { x + tol1.copysign(d) };
        let fu = finite_or_inf(f(u));
        if fu <= fx {
            if u >= x {
                a = x;
            } else {
                b = x;
            }
            v = w;
            fv = fw;
            w = x;
            fw = fx;
            x = u;
            fx = fu;
        } else {
            if u < x {
                a = u;
            } else {
                b = u;
            }
            if fu <= fw || w == x {
                v = w;
                fv = fw;
                w = u;
                fw = fu;
            } else if fu <= fv || v == x || v == w {
                v = u;
                fv = fu;
            }
        }
    }
    (x, fx)
}

/// Root of `f` in `[a, b]` (with `f(a)` and `f(b)` of opposite sign) by
/// Brent's method. `None` when the bracket does not change sign.
pub fn brent_root<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, tol: f64) -> Option<f64> {
    let (mut a, mut b) = (a, b);
    let (mut fa, mut fb) = (f(a), f(b));
    if fa == 0.0 {
        return Some(a);
    }
    if fb == 0.0 {
        return Some(b);
    }
    if !(fa.is_finite() && fb.is_finite()) || fa.signum() == fb.signum() {
        return None;
    }
    let (mut c, mut fc) = (a, fa);
    let mut d = b - a;
    let mut e = d;
    for _ in 0..500 {
        if fb.signum() == fc.signum() {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol1 = 2.0 * f64::EPSILON * b.abs() + 0.5 * tol;
        let xm = 0.5 * (c - b);
        if xm.abs() <= tol1 || fb == 0.0 {
            return Some(b);
        }
        if e.abs() >= tol1 && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * xm * s;
                q = 1.0 - s;
            } else {
                let qq = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * xm * qq * (qq - r) - (b - a) * (r - 1.0));
                q = (qq - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            }
            p = p.abs();
            if 2.0 * p < (3.0 * xm * q - (tol1 * q).abs()).min((e * q).abs()) {
                e = d;
                d = p / q;
            } else {
                d = xm;
                e = d;
            }
        } else {
            d = xm;
            e = d;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol1 { d } else { tol1.copysign(xm) };
        fb = f(b);
    }
    Some(b)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rosenbrock(x: &[f64]) -> f64 {
        (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2)
    }

    #[test]
    fn bfgs_rosenbrock() {
        let r = bfgs(rosenbrock, &[-1.2, 1.0], &OptOptions { gtol: 1e-7, ..Default::default() });
        assert!((r.x[0] - 1.0).abs() < 1e-5 && (r.x[1] - 1.0).abs() < 1e-5, "{:?}", r);
        assert!(r.trace.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn nelder_mead_quadratic() {
        let f = |x: &[f64]| (x[0] - 3.0).powi(2) + 2.0 * (x[1] + 1.0).powi(2);
        let r = nelder_mead(f, &[0.0, 0.0], &OptOptions { max_iters: 2000, ..Default::default() });
        assert!(r.converged);
        assert!((r.x[0] - 3.0).abs() < 1e-4 && (r.x[1] + 1.0).abs() < 1e-4);
    }

    #[test]
    fn brent_min_and_root() {
        let (x, _) = brent_min(|x| (x - 2.0).powi(2) + 1.0, 0.0, 5.0, 1e-10);
        assert!((x - 2.0).abs() < 1e-7);
        let r = brent_root(|x| x * x - 2.0, 0.0, 2.0, 1e-14).unwrap();
        assert!((r - 2f64.sqrt()).abs() < 1e-13);
        assert!(brent_root(|x| x * x + 1.0, 0.0, 2.0, 1e-14).is_none());
    }

    #[test]
    fn infinite_values_are_avoided() {
        let f = |x: &[f64]| if x[0] <= 0.0 { f64::NAN } else { x[0] - x[0].ln() };
        let r = bfgs(f, &[3.0], &OptOptions::default());
        assert!((r.x[0] - 1.0).abs() < 1e-4);
    }
}
