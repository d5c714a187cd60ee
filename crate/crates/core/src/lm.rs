//! Damped least-squares (Levenberg-Marquardt) minimizer for the small dense
//! fitting problems in `specfit`. Gradient/Gauss-Newton blend with adaptive
//! damping; the Jacobian is taken by forward differences. Deterministic.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub(crate) struct LmOptions {
    pub max_iter: usize,
    pub cost_tol: f64,
    pub step_tol: f64,
    pub lambda_init: f64,
    /// Skip the covariance computation at the solution (bootstrap refits
    /// only need the point estimate).
    pub covariance: bool,
}

impl Default for LmOptions {
    fn default() -> Self {
        LmOptions {
            max_iter: 200,
            cost_tol: 1e-12,
            step_tol: 1e-12,
            lambda_init: 1e-3,
            covariance: true,
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct LmResult {
    pub params: Vec<f64>,
    pub converged: bool,
    /// Sum of squared residuals at the solution.
    pub cost: f64,
    /// Costs after each accepted step (monotone non-increasing).
    pub cost_history: Vec<f64>,
    /// Parameter covariance s^2 (J^T J)^-1 at the solution.
    pub covariance: Vec<Vec<f64>>,
    pub std_errors: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Solve the symmetric system A x = b by Gaussian elimination with partial
/// pivoting. A is small (parameter count squared).
fn solve_dense(a: &[Vec<f64>], b: &[f64]) -> Option<Vec<f64>> {
    let n = b.len();
    let mut m: Vec<Vec<f64>> = a.iter().cloned().collect();
    let mut rhs = b.to_vec();
    for col in 0..n {
        let (pivot_row, pivot) = (col..n)
            .map(|r| (r, m[r][col].abs()))
            .max_by(|x, y| x.1.total_cmp(&y.1))?;
        if pivot <= 0.0 || !pivot.is_finite() {
            return None;
        }
        m.swap(col, pivot_row);
        rhs.swap(col, pivot_row);
        for r in col + 1..n {
            let f = m[r][col] / m[col][col];
            for c in col..n {
                m[r][c] -= f * m[col][c];
            }
            rhs[r] -= f * rhs[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut s = rhs[row];
        for c in row + 1..n {
            s -= m[row][c] * x[c];
        }
        x[row] = s / m[row][row];
    }
    Some(x)
}

fn invert_dense(a: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let n = a.len();
    let mut inv = vec![vec![0.0; n]; n];
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        let col = solve_dense(a, &e)?;
        for i in 0..n {
            inv[i][j] = col[i];
        }
    }
    Some(inv)
}

/// Minimize |r(p)|^2 with a forward-difference Jacobian.
pub(crate) fn minimize<F>(
    residuals: F,
    p0: &[f64],
    n_residuals: usize,
    opts: &LmOptions,
) -> Result<LmResult>
where
    F: FnMut(&[f64], &mut [f64]) -> bool,
{
    minimize_impl(residuals, None::<fn(&[f64], &mut [Vec<f64>])>, p0, n_residuals, opts)
}

/// Minimize |r(p)|^2 with an analytic Jacobian (`jacobian` fills rows
/// d r_i / d p_j for the current parameters).
pub(crate) fn minimize_with_jacobian<F, J>(
    residuals: F,
    jacobian: J,
    p0: &[f64],
    n_residuals: usize,
    opts: &LmOptions,
) -> Result<LmResult>
where
    F: FnMut(&[f64], &mut [f64]) -> bool,
    J: FnMut(&[f64], &mut [Vec<f64>]),
{
    minimize_impl(residuals, Some(jacobian), p0, n_residuals, opts)
}

fn minimize_impl<F, J>(
    mut residuals: F,
    mut jacobian: Option<J>,
    p0: &[f64],
    n_residuals: usize,
    opts: &LmOptions,
) -> Result<LmResult>
where
    F: FnMut(&[f64], &mut [f64]) -> bool,
    J: FnMut(&[f64], &mut [Vec<f64>]),
{
    let np = p0.len();
    if n_residuals < np {
        return Err(Error::config(format!(
            "need at least as many residuals ({n_residuals}) as parameters ({np})"
        )));
    }
    let mut p = p0.to_vec();
    let mut r = vec![0.0; n_residuals];
    if !residuals(&p, &mut r) {
        return Err(Error::config("initial parameters outside the model domain"));
    }
    let mut cost = dot(&r, &r);
    let mut cost_history = vec![cost];
    let mut lambda = opts.lambda_init;
    let mut converged = false;

    let mut jac = vec![vec![0.0; np]; n_residuals];
    let mut r_try = vec![0.0; n_residuals];

    for _ in 0..opts.max_iter {
        let mut r_base = vec![0.0; n_residuals];
        if !residuals(&p, &mut r_base) {
            break;
        }
        if let Some(jfn) = jacobian.as_mut() {
            jfn(&p, &mut jac);
        } else {
            // Forward-difference Jacobian.
            for j in 0..np {
                let step = 1e-7 * p[j].abs().max(1e-9);
                let mut p_step = p.clone();
                p_step[j] += step;
                if !residuals(&p_step, &mut r_try) {
                    // One-sided the other way.
                    p_step[j] = p[j] - step;
                    if !residuals(&p_step, &mut r_try) {
                        return Err(Error::config("model undefined near current parameters"));
                    }
                    for i in 0..n_residuals {
                        jac[i][j] = (r_base[i] - r_try[i]) / step;
                    }
                    continue;
                }
                for i in 0..n_residuals {
                    jac[i][j] = (r_try[i] - r_base[i]) / step;
                }
            }
        }
        // Normal equations.
        let mut jtj = vec![vec![0.0; np]; np];
        let mut jtr = vec![0.0; np];
        for i in 0..n_residuals {
            for a in 0..np {
                jtr[a] += jac[i][a] * r_base[i];
                for b in a..np {
                    jtj[a][b] += jac[i][a] * jac[i][b];
                }
            }
        }
        for a in 0..np {
            for b in 0..a {
                jtj[a][b] = jtj[b][a];
            }
        }
        let grad_norm = jtr.iter().map(|g| g.abs()).fold(0.0, f64::max);
        if grad_norm < 1e-14 * cost.max(1e-300) {
            converged = true;
            break;
        }

        // Try damped steps until one is accepted.
        let mut accepted = false;
        for _ in 0..40 {
            let mut damped = jtj.clone();
            for a in 0..np {
                damped[a][a] += lambda * jtj[a][a].max(1e-300);
            }
            let Some(delta) = solve_dense(&damped, &jtr) else {
                lambda *= 10.0;
                continue;
            };
            let p_new: Vec<f64> = p.iter().zip(&delta).map(|(x, d)| x - d).collect();
            if residuals(&p_new, &mut r_try) {
                let cost_new = dot(&r_try, &r_try);
                if cost_new.is_finite() && cost_new < cost {
                    let step_size = delta
                        .iter()
                        .zip(&p)
                        .map(|(d, x)| d.abs() / x.abs().max(1e-12))
                        .fold(0.0, f64::max);
                    let improvement = (cost - cost_new) / cost.max(1e-300);
                    p = p_new;
                    cost = cost_new;
                    cost_history.push(cost);
                    lambda = (lambda / 3.0).max(1e-14);
                    accepted = true;
                    if improvement < opts.cost_tol || step_size < opts.step_tol {
                        converged = true;
                    }
                    break;
                }
            }
            lambda *= 4.0;
            if lambda > 1e16 {
                break;
            }
        }
        if !accepted {
            // No downhill step found at any damping: local minimum.
            converged = true;
            break;
        }
        if converged {
            break;
        }
    }

    // Covariance at the solution from the undamped normal matrix.
    if !residuals(&p, &mut r) {
        return Err(Error::config("model undefined at the solution"));
    }
    let (covariance, std_errors) = if opts.covariance {
        let mut jtj = vec![vec![0.0; np]; np];
        if let Some(jfn) = jacobian.as_mut() {
            jfn(&p, &mut jac);
        } else {
            let mut r_base = vec![0.0; n_residuals];
            residuals(&p, &mut r_base);
            for j in 0..np {
                let step = 1e-7 * p[j].abs().max(1e-9);
                let mut p_step = p.clone();
                p_step[j] += step;
                if residuals(&p_step, &mut r_try) {
                    for i in 0..n_residuals {
                        jac[i][j] = (r_try[i] - r_base[i]) / step;
                    }
                }
            }
        }
        for i in 0..n_residuals {
            for a in 0..np {
                for b in a..np {
                    jtj[a][b] += jac[i][a] * jac[i][b];
                }
            }
        }
        for a in 0..np {
            for b in 0..a {
                jtj[a][b] = jtj[b][a];
            }
        }
        let dof = (n_residuals.saturating_sub(np)).max(1) as f64;
        let s2 = cost / dof;
        let covariance: Vec<Vec<f64>> = match invert_dense(&jtj) {
            Some(inv) => inv
                .into_iter()
                .map(|row| row.into_iter().map(|v| v * s2).collect())
                .collect(),
            None => vec![vec![f64::NAN; np]; np],
        };
        let std_errors = (0..np)
            .map(|j| covariance[j][j].max(0.0).sqrt())
            .collect();
        (covariance, std_errors)
    } else {
        (vec![vec![f64::NAN; np]; np], vec![f64::NAN; np])
    };
    Ok(LmResult {
        params: p,
        converged,
        cost,
        cost_history,
        covariance,
        std_errors,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fits_exponential_decay() {
        // y = a exp(-k x), noiseless.
        let xs: Vec<f64> = (0..50).map(|i| i as f64 * 0.1).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 3.7 * (-0.85 * x).exp()).collect();
        let res = minimize(
            |p, out| {
                for (i, (x, y)) in xs.iter().zip(&ys).enumerate() {
                    out[i] = p[0] * (-p[1] * x).exp() - y;
                }
                true
            },
            &[1.0, 0.3],
            xs.len(),
            &LmOptions::default(),
        )
        .unwrap();
        assert!(res.converged);
        assert!((res.params[0] - 3.7).abs() < 1e-8);
        assert!((res.params[1] - 0.85).abs() < 1e-8);
        // Accepted-step costs never increase.
        for w in res.cost_history.windows(2) {
            assert!(w[1] <= w[0]);
        }
    }

    #[test]
    fn rejects_underdetermined_problems() {
        let r = minimize(|_p, _out| true, &[1.0, 2.0, 3.0], 2, &LmOptions::default());
        assert!(r.is_err());
    }

    #[test]
    fn covariance_scales_with_noise() {
        // Linear model y = a + b x with known noise: standard errors follow
        // the closed-form OLS values.
        let xs: Vec<f64> = (0..40).map(|i| i as f64).collect();
        // Deterministic pseudo-noise.
        let noise: Vec<f64> = (0..40)
            .map(|i| ((i * 2654435761u64 % 1000) as f64 / 1000.0 - 0.5) * 0.2)
            .collect();
        let ys: Vec<f64> = xs
            .iter()
            .zip(&noise)
            .map(|(x, n)| 1.5 + 0.25 * x + n)
            .collect();
        let res = minimize(
            |p, out| {
                for (i, (x, y)) in xs.iter().zip(&ys).enumerate() {
                    out[i] = p[0] + p[1] * x - y;
                }
                true
            },
            &[0.0, 0.0],
            xs.len(),
            &LmOptions::default(),
        )
        .unwrap();
        let n = xs.len() as f64;
        let sx: f64 = xs.iter().sum();
        let sxx: f64 = xs.iter().map(|x| x * x).sum();
        let denom = n * sxx - sx * sx;
        let s2 = res.cost / (n - 2.0);
        let se_b = (n * s2 / denom).sqrt();
        assert!((res.std_errors[1] - se_b).abs() < 1e-6 * se_b);
    }
}
