//! Box-constrained nonlinear least squares: Levenberg–Marquardt with a
//! forward-difference Jacobian, and Nelder–Mead on the sum of squares as a
//! derivative-free fallback.
//!
//! Residual functions may fail at some points (e.g. an unattainable quote);
//! such points are treated as infinitely bad trial points, except at the
//! start, where the failure is returned.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Levenberg–Marquardt, then Nelder–Mead from the best point if LM
    /// stagnates without converging.
    #[default]
    LevenbergMarquardt,
    NelderMead,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LsqOptions {
    pub method: Method,
    pub max_evaluations: usize,
    /// Stop when an accepted step reduces the cost by less than this
    /// fraction.
    pub ftol: f64,
    /// Stop when the step is below `xtol * (|x| + xtol)`.
    pub xtol: f64,
    /// Stop when the scaled projected gradient falls below this.
    pub gtol: f64,
    /// Forward-difference step relative to `max(|x_i|, 1)`.
    pub fd_step: f64,
    /// Stop as soon as the cost falls below this.
    pub cost_floor: f64,
}

impl Default for LsqOptions {
    fn default() -> Self {
        LsqOptions {
            method: Method::LevenbergMarquardt,
            max_evaluations: 200,
            ftol: 1e-10,
            xtol: 1e-8,
            gtol: 1e-10,
            fd_step: 1e-6,
            cost_floor: 1e-20,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Bounds {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() || lower.is_empty() {
            return Err(Error::invalid("bounds must be non-empty and of equal length"));
        }
        if let Some(i) = (0..lower.len()).find(|&i| !(lower[i] <= upper[i]) || !lower[i].is_finite() || !upper[i].is_finite()) {
            return Err(Error::invalid(format!("bad bounds [{}, {}] for coordinate {i}", lower[i], upper[i])));
        }
        Ok(Bounds { lower, upper })
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter().zip(self.lower.iter().zip(&self.upper)).all(|(v, (lo, hi))| (lo..=hi).contains(&v))
    }

    fn project(&self, x: &mut [f64]) {
        for (v, (lo, hi)) in x.iter_mut().zip(self.lower.iter().zip(&self.upper)) {
            *v = v.clamp(*lo, *hi);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LsqReport {
    pub x: Vec<f64>,
    pub residuals: Vec<f64>,
    /// `sum r_i^2`.
    pub cost: f64,
    pub evaluations: usize,
    pub iterations: usize,
    pub converged: bool,
    /// Method that produced the final point.
    pub method: Method,
    pub message: String,
}

fn cost_of(r: &[f64]) -> f64 {
    r.iter().map(|v| v * v).sum()
}

/// Counts evaluations and remembers the best point seen.
struct Tracker<F> {
    f: F,
    evaluations: usize,
    best: Option<(Vec<f64>, Vec<f64>, f64)>,
}

impl<F: FnMut(&[f64]) -> Result<Vec<f64>>> Tracker<F> {
    fn eval(&mut self, x: &[f64]) -> Option<(Vec<f64>, f64)> {
        self.evaluations += 1;
        let r = (self.f)(x).ok()?;
        let c = cost_of(&r);
        if !c.is_finite() {
            return None;
        }
        if self.best.as_ref().is_none_or(|(_, _, b)| c < *b) {
            self.best = Some((x.to_vec(), r.clone(), c));
        }
        Some((r, c))
    }
}

/// Minimizes `sum f(x)_i^2` over the box.
pub fn least_squares<F>(f: F, x0: &[f64], bounds: &Bounds, opts: &LsqOptions) -> Result<LsqReport>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    if x0.len() != bounds.lower.len() {
        return Err(Error::invalid("start point and bounds differ in dimension"));
    }
    if !bounds.contains(x0) {
        return Err(Error::invalid(format!("start point {x0:?} lies outside the bounds")));
    }
    let mut t = Tracker {
        f,
        evaluations: 1,
        best: None,
    };
    let r0 = (t.f)(x0)?;
    if r0.is_empty() {
        return Err(Error::invalid("residual function returned no residuals"));
    }
    let c0 = cost_of(&r0);
    if !c0.is_finite() {
        return Err(Error::numeric(format!("non-finite residuals at the start point {x0:?}")));
    }
    t.best = Some((x0.to_vec(), r0.clone(), c0));

    let (mut report, done) = match opts.method {
        Method::LevenbergMarquardt => levenberg_marquardt(&mut t, x0, r0, c0, bounds, opts),
        Method::NelderMead => (nelder_mead(&mut t, x0, bounds, opts, 0), true),
    };
    if !done && t.evaluations < opts.max_evaluations {
        let (x, _, _) = t.best.clone().expect("start point evaluated");
        let iters = report.iterations;
        report = nelder_mead(&mut t, &x, bounds, opts, iters);
        report.message = format!("Levenberg-Marquardt stagnated; {}", report.message);
    }
    let (x, residuals, cost) = t.best.expect("start point evaluated");
    report.x = x;
    report.residuals = residuals;
    report.cost = cost;
    report.evaluations = t.evaluations;
    Ok(report)
}

/// Returns the report and whether LM reached a convergence criterion.
fn levenberg_marquardt<F>(t: &mut Tracker<F>, x0: &[f64], r0: Vec<f64>, c0: f64, bounds: &Bounds, opts: &LsqOptions) -> (LsqReport, bool)
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut r = r0;
    let mut cost = c0;
    let mut lambda = 1e-3;
    let mut iterations = 0;
    let finish = |iterations, converged, message: String| {
        (
            LsqReport {
                x: Vec::new(),
                residuals: Vec::new(),
                cost: 0.0,
                evaluations: 0,
                iterations,
                converged,
                method: Method::LevenbergMarquardt,
                message,
            },
            converged,
        )
    };
    if cost <= opts.cost_floor {
        return finish(0, true, "cost below floor at start".into());
    }
    loop {
        if t.evaluations + n > opts.max_evaluations {
            return finish(iterations, false, format!("evaluation budget {} exhausted", opts.max_evaluations));
        }
        iterations += 1;
        // forward differences, stepping inward at an upper bound
        let m = r.len();
        let mut jac = vec![0.0; m * n];
        for i in 0..n {
            let mut h = opts.fd_step * x[i].abs().max(1.0);
            if x[i] + h > bounds.upper[i] {
                h = -h;
            }
            let mut xp = x.clone();
            xp[i] += h;
            let Some((rp, _)) = t.eval(&xp) else {
                return finish(iterations, false, format!("residuals failed at the difference point {xp:?}"));
            };
            if rp.len() != m {
                return finish(iterations, false, "residual count changed between evaluations".into());
            }
            let h = xp[i] - x[i];
            for k in 0..m {
                jac[k * n + i] = (rp[k] - r[k]) / h;
            }
        }
        let mut jtj = vec![0.0; n * n];
        let mut g = vec![0.0; n];
        for k in 0..m {
            for i in 0..n {
                g[i] += jac[k * n + i] * r[k];
                for j in 0..n {
                    jtj[i * n + j] += jac[k * n + i] * jac[k * n + j];
                }
            }
        }
        // projected gradient: components pushing out of the box vanish
        let pg: f64 = (0..n)
            .map(|i| {
                let blocked = (x[i] <= bounds.lower[i] && g[i] > 0.0) || (x[i] >= bounds.upper[i] && g[i] < 0.0);
                if blocked {
                    0.0
                } else {
                    g[i] * g[i] / jtj[i * n + i].max(f64::MIN_POSITIVE)
                }
            })
            .sum::<f64>()
            .sqrt();
        if pg <= opts.gtol * cost.sqrt().max(1.0) {
            return finish(iterations, true, "projected gradient below tolerance".into());
        }
        // inner loop: raise lambda until a step is accepted
        loop {
            let mut a = jtj.clone();
            for i in 0..n {
                a[i * n + i] += lambda * jtj[i * n + i].max(1e-12);
            }
            let rhs: Vec<f64> = g.iter().map(|v| -v).collect();
            let step = match solve_spd(&a, &rhs, n) {
                Some(s) => s,
                None => {
                    lambda *= 10.0;
                    if lambda > 1e16 {
                        return finish(iterations, false, "damped normal equations are singular".into());
                    }
                    continue;
                }
            };
            let mut xn: Vec<f64> = x.iter().zip(&step).map(|(a, b)| a + b).collect();
            bounds.project(&mut xn);
            let dx: f64 = xn.iter().zip(&x).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            let xnorm: f64 = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            if dx <= opts.xtol * (xnorm + opts.xtol) {
                return finish(iterations, true, "step below tolerance".into());
            }
            if t.evaluations >= opts.max_evaluations {
                return finish(iterations, false, format!("evaluation budget {} exhausted", opts.max_evaluations));
            }
            match t.eval(&xn) {
                Some((rn, cn)) if cn < cost => {
                    let reduction = (cost - cn) / cost;
                    x = xn;
                    r = rn;
                    cost = cn;
                    lambda = (lambda / 10.0).max(1e-12);
                    if cost <= opts.cost_floor {
                        return finish(iterations, true, "cost below floor".into());
                    }
                    if reduction < opts.ftol {
                        return finish(iterations, true, "relative cost reduction below tolerance".into());
                    }
                    break;
                }
                _ => {
                    lambda *= 10.0;
                    if lambda > 1e16 {
                        return finish(iterations, false, "no descent step found".into());
                    }
                }
            }
        }
    }
}

/// Cholesky solve of a small symmetric positive definite system.
fn solve_spd(a: &[f64], b: &[f64], n: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if !(s > 0.0) {
                    return None;
                }
                l[i * n + i] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    let mut y = b.to_vec();
    for i in 0..n {
        for k in 0..i {
            y[i] -= l[i * n + k] * y[k];
        }
        y[i] /= l[i * n + i];
    }
    for i in (0..n).rev() {
        for k in i + 1..n {
            y[i] -= l[k * n + i] * y[k];
        }
        y[i] /= l[i * n + i];
    }
    y.iter().all(|v| v.is_finite()).then_some(y)
}

fn nelder_mead<F>(t: &mut Tracker<F>, x0: &[f64], bounds: &Bounds, opts: &LsqOptions, prior_iterations: usize) -> LsqReport
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    let n = x0.len();
    let eval = |t: &mut Tracker<F>, x: &[f64]| t.eval(x).map(|(_, c)| c).unwrap_or(f64::INFINITY);
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    let c0 = t.best.as_ref().filter(|(bx, _, _)| bx == x0).map(|b| b.2);
    let c0 = match c0 {
        Some(c) => c,
        None => eval(t, x0),
    };
    simplex.push((x0.to_vec(), c0));
    for i in 0..n {
        let mut x = x0.to_vec();
        let width = bounds.upper[i] - bounds.lower[i];
        let step = 0.05 * if width > 0.0 { width } else { x0[i].abs().max(1.0) };
        x[i] = if x[i] + step <= bounds.upper[i] { x[i] + step } else { x[i] - step };
        bounds.project(&mut x);
        let c = eval(t, &x);
        simplex.push((x, c));
    }
    let mut iterations = prior_iterations;
    let report = |iterations, converged, message: String| LsqReport {
        x: Vec::new(),
        residuals: Vec::new(),
        cost: 0.0,
        evaluations: 0,
        iterations,
        converged,
        method: Method::NelderMead,
        message,
    };
    loop {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let (best, worst) = (simplex[0].1, simplex[n].1);
        if best <= opts.cost_floor {
            return report(iterations, true, "cost below floor".into());
        }
        let size = simplex[1..]
            .iter()
            .map(|(x, _)| x.iter().zip(&simplex[0].0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        let scale = simplex[0].0.iter().map(|v| v.abs()).fold(0.0, f64::max);
        if worst.is_finite() && worst - best <= opts.ftol * best.abs().max(opts.cost_floor) && size <= opts.xtol.sqrt() * (scale + 1.0) {
            return report(iterations, true, "simplex collapsed".into());
        }
        if size <= opts.xtol * (scale + opts.xtol) {
            return report(iterations, true, "simplex below step tolerance".into());
        }
        if t.evaluations + 2 > opts.max_evaluations {
            return report(iterations, false, format!("evaluation budget {} exhausted", opts.max_evaluations));
        }
        iterations += 1;
        let centroid: Vec<f64> = (0..n).map(|i| simplex[..n].iter().map(|(x, _)| x[i]).sum::<f64>() / n as f64).collect();
        let along = |coef: f64| {
            let mut x: Vec<f64> = centroid.iter().zip(&simplex[n].0).map(|(c, w)| c + coef * (c - w)).collect();
            bounds.project(&mut x);
            x
        };
        let xr = along(1.0);
        let cr = eval(t, &xr);
        if cr < simplex[0].1 {
            let xe = along(2.0);
            let ce = eval(t, &xe);
            simplex[n] = if ce < cr { (xe, ce) } else { (xr, cr) };
        } else if cr < simplex[n - 1].1 {
            simplex[n] = (xr, cr);
        } else {
            let (xc, cc) = if cr < worst {
                let x = along(0.5);
                let c = eval(t, &x);
                (x, c)
            } else {
                let x = along(-0.5);
                let c = eval(t, &x);
                (x, c)
            };
            if cc < worst.min(cr) {
                simplex[n] = (xc, cc);
            } else {
                // shrink towards the best vertex
                let x_best = simplex[0].0.clone();
                for v in simplex.iter_mut().skip(1) {
                    let x: Vec<f64> = v.0.iter().zip(&x_best).map(|(a, b)| b + 0.5 * (a - b)).collect();
                    let c = eval(t, &x);
                    *v = (x, c);
                }
            }
        }
    }
}
