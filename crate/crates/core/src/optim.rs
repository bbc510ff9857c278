//! Derivative-free simplex search and quasi-Newton minimization of the
//! discrete least-squares objective.

use serde::Serialize;

/// Why an optimizer stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    FTol,
    XTol,
    GTol,
    MaxIters,
    LineSearchFailed,
    StartIsOptimal,
}

/// Optimization outcome. `lambda_hat` is in search coordinates; the
/// recovered initial state and linear block are filled in by the caller
/// once the forward model is re-queried at the optimum.
#[derive(Debug, Clone, Serialize)]
pub struct FitResult {
    pub lambda_hat: Vec<f64>,
    pub best_value: f64,
    /// Best objective value after each iteration (non-increasing for the
    /// simplex search).
    pub objective_history: Vec<f64>,
    pub iterations: usize,
    pub n_evaluations: usize,
    pub termination: Termination,
    /// Best point after each iteration (parallel to `objective_history`).
    #[serde(skip)]
    pub param_history: Vec<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x0_hat: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta_hat: Option<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct NelderMeadConfig {
    pub reflection: f64,
    pub expansion: f64,
    pub contraction: f64,
    pub shrink: f64,
    /// Relative step used to build the initial simplex from the start point.
    pub init_step_rel: f64,
    /// Absolute step for coordinates at zero.
    pub init_step_abs: f64,
    pub max_iters: usize,
    /// Relative spread of simplex values below which the search stops.
    pub f_tol: f64,
    /// Relative simplex diameter below which the search stops.
    pub x_tol: f64,
}

impl Default for NelderMeadConfig {
    fn default() -> Self {
        Self {
            reflection: 1.0,
            expansion: 2.0,
            contraction: 0.5,
            shrink: 0.5,
            init_step_rel: 0.25,
            init_step_abs: 0.025,
            max_iters: 5000,
            f_tol: 1e-14,
            x_tol: 1e-10,
        }
    }
}

impl NelderMeadConfig {
    pub fn validate(&self) -> crate::error::Result<()> {
        if self.reflection.is_nan() || self.reflection <= 0.0 {
            return Err(crate::error::Error::Config("reflection must be > 0".into()));
        }
        if self.expansion.is_nan() || self.expansion <= 1.0 {
            return Err(crate::error::Error::Config("expansion must be > 1".into()));
        }
        if !(self.contraction > 0.0 && self.contraction < 1.0) {
            return Err(crate::error::Error::Config(
                "contraction must be in (0, 1)".into(),
            ));
        }
        if !(self.shrink > 0.0 && self.shrink < 1.0) {
            return Err(crate::error::Error::Config(
                "shrink must be in (0, 1)".into(),
            ));
        }
        Ok(())
    }
}

/// Standard simplex iteration with the configured coefficients. Vertex
/// ordering ties break on the lower index, which keeps runs deterministic.
pub fn nelder_mead<F: FnMut(&[f64]) -> f64>(
    mut f: F,
    x0: &[f64],
    cfg: &NelderMeadConfig,
) -> FitResult {
    let dim = x0.len();
    let mut n_evals = 0usize;
    let mut eval = |x: &[f64], n_evals: &mut usize| {
        *n_evals += 1;
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };

    // Initial simplex: x0 plus a step along each coordinate.
    let mut vertices: Vec<Vec<f64>> = Vec::with_capacity(dim + 1);
    vertices.push(x0.to_vec());
    for i in 0..dim {
        let mut v = x0.to_vec();
        let step = if v[i] != 0.0 {
            cfg.init_step_rel * v[i].abs()
        } else {
            cfg.init_step_abs
        };
        v[i] += step;
        vertices.push(v);
    }
    let mut values: Vec<f64> = vertices.iter().map(|v| eval(v, &mut n_evals)).collect();

    let mut order: Vec<usize> = (0..=dim).collect();
    let mut history = Vec::new();
    let mut param_history: Vec<Vec<f64>> = Vec::new();
    let mut iterations = 0;
    let mut termination = Termination::MaxIters;

    for iter in 0..cfg.max_iters {
        iterations = iter + 1;
        order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap().then(a.cmp(&b)));
        let best = order[0];
        let worst = order[dim];
        let second_worst = order[dim - 1];

        // Convergence: relative value spread or simplex diameter.
        let spread = values[worst] - values[best];
        if spread <= cfg.f_tol * (1.0 + values[best].abs()) {
            termination = Termination::FTol;
            history.push(values[best]);
            param_history.push(vertices[best].clone());
            break;
        }
        let diameter = vertices
            .iter()
            .map(|v| {
                v.iter()
                    .zip(&vertices[best])
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0_f64, f64::max)
            })
            .fold(0.0_f64, f64::max);
        let scale = vertices[best]
            .iter()
            .map(|v| v.abs())
            .fold(0.0_f64, f64::max);
        if diameter <= cfg.x_tol * (1.0 + scale) {
            termination = Termination::XTol;
            history.push(values[best]);
            param_history.push(vertices[best].clone());
            break;
        }

        // Centroid of all but the worst vertex.
        let mut centroid = vec![0.0; dim];
        for &i in order.iter().take(dim) {
            for (c, v) in centroid.iter_mut().zip(&vertices[i]) {
                *c += v;
            }
        }
        centroid.iter_mut().for_each(|c| *c /= dim as f64);

        let reflect: Vec<f64> = centroid
            .iter()
            .zip(&vertices[worst])
            .map(|(c, w)| c + cfg.reflection * (c - w))
            .collect();
        let f_reflect = eval(&reflect, &mut n_evals);

        if f_reflect < values[best] {
            let expand: Vec<f64> = centroid
                .iter()
                .zip(&vertices[worst])
                .map(|(c, w)| c + cfg.expansion * cfg.reflection * (c - w))
                .collect();
            let f_expand = eval(&expand, &mut n_evals);
            if f_expand < f_reflect {
                vertices[worst] = expand;
                values[worst] = f_expand;
            } else {
                vertices[worst] = reflect;
                values[worst] = f_reflect;
            }
        } else if f_reflect < values[second_worst] {
            vertices[worst] = reflect;
            values[worst] = f_reflect;
        } else {
            let shrink_needed = if f_reflect < values[worst] {
                // Outside contraction.
                let contract: Vec<f64> = centroid
                    .iter()
                    .zip(&reflect)
                    .map(|(c, r)| c + cfg.contraction * (r - c))
                    .collect();
                let f_contract = eval(&contract, &mut n_evals);
                if f_contract <= f_reflect {
                    vertices[worst] = contract;
                    values[worst] = f_contract;
                    false
                } else {
                    true
                }
            } else {
                // Inside contraction.
                let contract: Vec<f64> = centroid
                    .iter()
                    .zip(&vertices[worst])
                    .map(|(c, w)| c - cfg.contraction * (c - w))
                    .collect();
                let f_contract = eval(&contract, &mut n_evals);
                if f_contract < values[worst] {
                    vertices[worst] = contract;
                    values[worst] = f_contract;
                    false
                } else {
                    true
                }
            };
            if shrink_needed {
                let anchor = vertices[best].clone();
                for &i in order.iter().skip(1) {
                    for (v, a) in vertices[i].iter_mut().zip(&anchor) {
                        *v = a + cfg.shrink * (*v - a);
                    }
                    values[i] = eval(&vertices[i], &mut n_evals);
                }
            }
        }

        let mut running_best = 0;
        for i in 1..values.len() {
            if values[i] < values[running_best] {
                running_best = i;
            }
        }
        history.push(values[running_best]);
        param_history.push(vertices[running_best].clone());
    }

    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap().then(a.cmp(&b)));
    let best = order[0];
    FitResult {
        lambda_hat: vertices[best].clone(),
        best_value: values[best],
        objective_history: history,
        iterations,
        n_evaluations: n_evals,
        termination,
        param_history,
        x0_hat: None,
        theta_hat: None,
    }
}

#[derive(Debug, Clone)]
pub struct BfgsConfig {
    pub max_iters: usize,
    /// Relative forward-difference step for gradients.
    pub fd_step_rel: f64,
    pub g_tol: f64,
    pub f_tol: f64,
    pub armijo_c1: f64,
    pub backtrack_factor: f64,
    pub max_backtracks: usize,
}

impl Default for BfgsConfig {
    fn default() -> Self {
        Self {
            max_iters: 1000,
            fd_step_rel: 1e-6,
            g_tol: 1e-8,
            f_tol: 1e-14,
            armijo_c1: 1e-4,
            backtrack_factor: 0.5,
            max_backtracks: 40,
        }
    }
}

/// Forward finite-difference gradient with per-coordinate relative step.
pub fn fd_gradient<F: FnMut(&[f64]) -> f64>(
    f: &mut F,
    x: &[f64],
    fx: f64,
    step_rel: f64,
    n_evals: &mut usize,
) -> Vec<f64> {
    let mut g = vec![0.0; x.len()];
    let mut xp = x.to_vec();
    for i in 0..x.len() {
        let h = step_rel * (x[i].abs() + 1e-3);
        xp[i] = x[i] + h;
        *n_evals += 1;
        g[i] = (f(&xp) - fx) / h;
        xp[i] = x[i];
    }
    g
}

/// BFGS with forward finite-difference gradients and Armijo backtracking.
/// The inverse-Hessian approximation resets to identity whenever the
/// curvature condition fails.
pub fn bfgs<F: FnMut(&[f64]) -> f64>(mut f: F, x0: &[f64], cfg: &BfgsConfig) -> FitResult {
    let dim = x0.len();
    let mut n_evals = 0usize;
    let mut x = x0.to_vec();
    n_evals += 1;
    let mut fx = f(&x);
    let mut g = fd_gradient(&mut f, &x, fx, cfg.fd_step_rel, &mut n_evals);

    // Inverse Hessian approximation, row-major.
    let mut h_inv = identity(dim);
    let mut history = vec![fx];
    let mut param_history = vec![x.clone()];
    let mut iterations = 0;
    let mut termination = Termination::MaxIters;

    for iter in 0..cfg.max_iters {
        iterations = iter + 1;
        let g_norm = g.iter().map(|v| v.abs()).fold(0.0_f64, f64::max);
        if g_norm <= cfg.g_tol {
            termination = Termination::GTol;
            break;
        }

        // Search direction p = -H g.
        let mut p = vec![0.0; dim];
        for i in 0..dim {
            let mut acc = 0.0;
            for j in 0..dim {
                acc -= h_inv[i * dim + j] * g[j];
            }
            p[i] = acc;
        }
        let mut slope: f64 = p.iter().zip(&g).map(|(pi, gi)| pi * gi).sum();
        if slope >= 0.0 {
            // Not a descent direction; fall back to steepest descent.
            for (pi, gi) in p.iter_mut().zip(&g) {
                *pi = -gi;
            }
            slope = -g.iter().map(|v| v * v).sum::<f64>();
            h_inv = identity(dim);
        }

        // Armijo backtracking; on failure retry once along steepest descent
        // with a reset Hessian approximation before giving up.
        let mut x_new = x.clone();
        let mut f_new = fx;
        let mut accepted = false;
        'restart: for attempt in 0..2 {
            if attempt == 1 {
                h_inv = identity(dim);
                for (pi, gi) in p.iter_mut().zip(&g) {
                    *pi = -gi;
                }
                slope = -g.iter().map(|v| v * v).sum::<f64>();
            }
            let mut alpha = 1.0;
            for _ in 0..cfg.max_backtracks {
                for i in 0..dim {
                    x_new[i] = x[i] + alpha * p[i];
                }
                n_evals += 1;
                f_new = f(&x_new);
                if f_new.is_finite() && f_new <= fx + cfg.armijo_c1 * alpha * slope {
                    accepted = true;
                    break 'restart;
                }
                alpha *= cfg.backtrack_factor;
            }
        }
        if !accepted {
            termination = Termination::LineSearchFailed;
            break;
        }

        let g_new = fd_gradient(&mut f, &x_new, f_new, cfg.fd_step_rel, &mut n_evals);
        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let yv: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy: f64 = s.iter().zip(&yv).map(|(a, b)| a * b).sum();
        let s_norm: f64 = s.iter().map(|v| v * v).sum::<f64>().sqrt();
        let y_norm: f64 = yv.iter().map(|v| v * v).sum::<f64>().sqrt();

        if sy > 1e-10 * s_norm * y_norm {
            bfgs_update(&mut h_inv, &s, &yv, sy);
        } else {
            h_inv = identity(dim);
        }

        let f_drop = fx - f_new;
        x = x_new;
        fx = f_new;
        g = g_new;
        history.push(fx);
        param_history.push(x.clone());

        if f_drop.abs() <= cfg.f_tol * (1.0 + fx.abs()) {
            termination = Termination::FTol;
            break;
        }
    }

    FitResult {
        lambda_hat: x,
        best_value: fx,
        objective_history: history,
        iterations,
        n_evaluations: n_evals,
        termination,
        param_history,
        x0_hat: None,
        theta_hat: None,
    }
}

fn identity(dim: usize) -> Vec<f64> {
    let mut m = vec![0.0; dim * dim];
    for i in 0..dim {
        m[i * dim + i] = 1.0;
    }
    m
}

/// Sherman-Morrison style rank-two update of the inverse Hessian:
/// `H <- (I - rho s y^T) H (I - rho y s^T) + rho s s^T`.
fn bfgs_update(h: &mut [f64], s: &[f64], y: &[f64], sy: f64) {
    let dim = s.len();
    let rho = 1.0 / sy;
    // hy = H y, yhy = y^T H y.
    let mut hy = vec![0.0; dim];
    for i in 0..dim {
        let mut acc = 0.0;
        for j in 0..dim {
            acc += h[i * dim + j] * y[j];
        }
        hy[i] = acc;
    }
    let yhy: f64 = y.iter().zip(&hy).map(|(a, b)| a * b).sum();
    for i in 0..dim {
        for j in 0..dim {
            h[i * dim + j] += -rho * (s[i] * hy[j] + hy[i] * s[j])
                + rho * rho * yhy * s[i] * s[j]
                + rho * s[i] * s[j];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nelder_mead_quadratic_bowl() {
        let c = [0.3, -1.2, 2.5, 0.7, -0.1];
        let f = |x: &[f64]| -> f64 { x.iter().zip(&c).map(|(a, b)| (a - b) * (a - b)).sum() };
        let x0 = [1.0, 1.0, 1.0, 1.0, 1.0];
        let res = nelder_mead(f, &x0, &NelderMeadConfig::default());
        assert!(res.iterations <= 500, "iterations {}", res.iterations);
        for (a, b) in res.lambda_hat.iter().zip(&c) {
            assert!((a - b).abs() < 1e-6, "got {:?}", res.lambda_hat);
        }
    }

    #[test]
    fn nelder_mead_start_at_optimum_terminates_fast() {
        let c = [1.0, 2.0];
        let f = |x: &[f64]| -> f64 { x.iter().zip(&c).map(|(a, b)| (a - b) * (a - b)).sum() };
        let res = nelder_mead(f, &c, &NelderMeadConfig::default());
        assert_eq!(res.lambda_hat, c.to_vec());
        assert!(matches!(
            res.termination,
            Termination::FTol | Termination::XTol
        ));
        assert!(res.iterations < 200);
    }

    #[test]
    fn nelder_mead_history_non_increasing() {
        let f = |x: &[f64]| -> f64 { (x[0] - 1.0).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2) };
        let res = nelder_mead(f, &[-1.2, 1.0], &NelderMeadConfig::default());
        for w in res.objective_history.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-15));
        }
    }

    #[test]
    fn bfgs_rosenbrock() {
        let f = |x: &[f64]| -> f64 { (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2) };
        // Noiseless analytic objective: a small forward-difference step is
        // accurate, letting the search reach the 1e-5 gate.
        let cfg = BfgsConfig {
            g_tol: 1e-8,
            fd_step_rel: 1e-8,
            ..Default::default()
        };
        let res = bfgs(f, &[-1.2, 1.0], &cfg);
        assert!(
            (res.lambda_hat[0] - 1.0).abs() < 1e-5,
            "{:?}",
            res.lambda_hat
        );
        assert!(
            (res.lambda_hat[1] - 1.0).abs() < 1e-5,
            "{:?}",
            res.lambda_hat
        );
    }

    #[test]
    fn fd_gradient_richardson_ratio() {
        // First-order forward differences halve their error with the step.
        let x = [0.7];
        let mut n = 0;
        let mut d = |h: f64| {
            let mut f = |x: &[f64]| -> f64 { (x[0] * 1.3).sin() + x[0] * x[0] };
            let fx = f(&x);
            fd_gradient(&mut f, &x, fx, h, &mut n)[0]
        };
        let g1 = d(1e-3);
        let g2 = d(5e-4);
        let g3 = d(2.5e-4);
        let ratio = (g1 - g2) / (g2 - g3);
        assert!((1.5..2.5).contains(&ratio), "richardson ratio {ratio}");
    }

    #[test]
    fn config_validation() {
        let mut cfg = NelderMeadConfig::default();
        assert!(cfg.validate().is_ok());
        cfg.expansion = 1.0;
        assert!(cfg.validate().is_err());
        cfg = NelderMeadConfig {
            contraction: 1.5,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }
}
