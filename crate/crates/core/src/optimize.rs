//! Unconstrained minimizers: adaptive Nelder-Mead and BFGS with
//! central-difference gradients.
//!
//! Objectives return `f64::INFINITY` (or NaN) outside their domain; both
//! methods treat such points as rejected moves.

/// Relative finite-difference step `eps^(1/3) * max(|x|, 1)`.
pub fn fd_step(x: f64) -> f64 {
    f64::EPSILON.cbrt() * x.abs().max(1.0)
}

/// Central-difference gradient of `f` at `x`.
pub fn central_gradient<F: FnMut(&[f64]) -> f64>(f: &mut F, x: &[f64]) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|j| {
            let h = fd_step(x[j]);
            probe[j] = x[j] + h;
            let up = f(&probe);
            probe[j] = x[j] - h;
            let down = f(&probe);
            probe[j] = x[j];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Largest `|g_j| * max(|x_j|, 1) / max(|f|, 1)`.
pub fn scaled_gradient_norm(grad: &[f64], x: &[f64], f: f64) -> f64 {
    let denom = f.abs().max(1.0);
    grad.iter()
        .zip(x)
        .map(|(g, xi)| (g * xi.abs().max(1.0)).abs() / denom)
        .fold(0.0, f64::max)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub f: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NelderMeadOptions {
    pub max_iter: usize,
    /// Spread of objective values across the simplex.
    pub f_tol: f64,
    /// Largest coordinate distance of any vertex from the best vertex.
    pub x_tol: f64,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self { max_iter: 5000, f_tol: 1e-8, x_tol: 1e-6 }
    }
}

fn sanitize(v: f64) -> f64 {
    if v.is_nan() {
        f64::INFINITY
    } else {
        v
    }
}

/// Nelder-Mead with dimension-adaptive coefficients.
pub fn nelder_mead<F: FnMut(&[f64]) -> f64>(mut f: F, x0: &[f64], opts: &NelderMeadOptions) -> Minimum {
    let n = x0.len();
    let mut evaluations = 0;
    let mut eval = |x: &[f64]| {
        evaluations += 1;
        sanitize(f(x))
    };
    if n == 0 {
        let v = eval(x0);
        return Minimum { x: vec![], f: v, iterations: 0, evaluations: 1, converged: true };
    }
    let nf = n as f64;
    let (alpha, beta, gamma, delta) = (1.0, 1.0 + 2.0 / nf, 0.75 - 0.5 / nf, 1.0 - 1.0 / nf);

    let mut simplex: Vec<Vec<f64>> = vec![x0.to_vec()];
    for j in 0..n {
        let mut v = x0.to_vec();
        v[j] += (0.05 * x0[j].abs()).max(0.1);
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(|v| eval(v)).collect();

    let mut iterations = 0;
    let mut converged = false;
    let mut order: Vec<usize> = (0..=n).collect();
    let mut centroid = vec![0.0; n];
    let mut trial = vec![0.0; n];
    let point = |c: &[f64], worst: &[f64], t: f64, out: &mut Vec<f64>| {
        for ((o, ci), wi) in out.iter_mut().zip(c).zip(worst) {
            *o = ci + t * (ci - wi);
        }
    };

    while iterations < opts.max_iter {
        order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
        let (best, worst, second) = (order[0], order[n], order[n - 1]);
        let spread = values[worst] - values[best];
        let size = simplex
            .iter()
            .flat_map(|v| v.iter().zip(&simplex[best]).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        if values[best].is_finite() && spread <= opts.f_tol && size <= opts.x_tol {
            converged = true;
            break;
        }
        iterations += 1;

        centroid.iter_mut().for_each(|c| *c = 0.0);
        for &i in &order[..n] {
            for (c, xi) in centroid.iter_mut().zip(&simplex[i]) {
                *c += xi / nf;
            }
        }
        point(&centroid, &simplex[worst], alpha, &mut trial);
        let fr = eval(&trial);
        if fr < values[best] {
            let reflected = trial.clone();
            point(&centroid, &simplex[worst], alpha * beta, &mut trial);
            let fe = eval(&trial);
            if fe < fr {
                simplex[worst].copy_from_slice(&trial);
                values[worst] = fe;
            } else {
                simplex[worst] = reflected;
                values[worst] = fr;
            }
            continue;
        }
        if fr < values[second] {
            simplex[worst].copy_from_slice(&trial);
            values[worst] = fr;
            continue;
        }
        let outside = fr < values[worst];
        let t = if outside { alpha * gamma } else { -gamma };
        point(&centroid, &simplex[worst], t, &mut trial);
        let fc = eval(&trial);
        if fc < fr.min(values[worst]) || (outside && fc <= fr) {
            simplex[worst].copy_from_slice(&trial);
            values[worst] = fc;
            continue;
        }
        let anchor = simplex[best].clone();
        for &i in &order[1..] {
            for (xi, ai) in simplex[i].iter_mut().zip(&anchor) {
                *xi = ai + delta * (*xi - ai);
            }
            values[i] = eval(&simplex[i]);
        }
    }
    let best = (0..=n).min_by(|&i, &j| values[i].total_cmp(&values[j])).unwrap_or(0);
    Minimum { x: simplex[best].clone(), f: values[best], iterations, evaluations, converged }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BfgsOptions {
    pub max_iter: usize,
    /// Tolerance on [`scaled_gradient_norm`].
    pub grad_tol: f64,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        Self { max_iter: 200, grad_tol: 1e-5 }
    }
}

/// BFGS on the inverse Hessian with backtracking Armijo line search.
///
/// `converged` means the scaled gradient dropped below `grad_tol`.
pub fn bfgs<F: FnMut(&[f64]) -> f64>(mut f: F, x0: &[f64], opts: &BfgsOptions) -> Minimum {
    let n = x0.len();
    let mut evaluations = 0;
    let mut eval = |x: &[f64]| {
        evaluations += 1;
        sanitize(f(x))
    };
    let mut x = x0.to_vec();
    let mut fx = eval(&x);
    if n == 0 || !fx.is_finite() {
        return Minimum { x, f: fx, iterations: 0, evaluations, converged: n == 0 };
    }
    let mut g = central_gradient(&mut eval, &x);
    let mut hinv = identity(n);
    let mut fresh = true;
    let mut iterations = 0;
    let mut converged = scaled_gradient_norm(&g, &x, fx) <= opts.grad_tol;
    let mut trial = vec![0.0; n];

    while !converged && iterations < opts.max_iter {
        iterations += 1;
        let mut dir: Vec<f64> = (0..n).map(|i| -dot(&hinv[i], &g)).collect();
        let mut slope = dot(&dir, &g);
        if slope.is_nan() || slope >= 0.0 {
            hinv = identity(n);
            fresh = true;
            dir = g.iter().map(|v| -v).collect();
            slope = dot(&dir, &g);
        }
        if fresh {
            // keep the first step modest in parameter space
            let len = dir.iter().map(|d| d.abs()).fold(0.0, f64::max);
            if len > 1.0 {
                dir.iter_mut().for_each(|d| *d /= len);
                slope /= len;
            }
        }
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            for i in 0..n {
                trial[i] = x[i] + step * dir[i];
            }
            let ft = eval(&trial);
            if ft.is_finite() && ft <= fx + 1e-4 * step * slope {
                accepted = Some(ft);
                break;
            }
            step *= 0.5;
        }
        let Some(ft) = accepted else {
            if fresh {
                break;
            }
            hinv = identity(n);
            fresh = true;
            continue;
        };
        let s: Vec<f64> = trial.iter().zip(&x).map(|(a, b)| a - b).collect();
        let g_new = central_gradient(&mut eval, &trial);
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
            if fresh {
                let scale = sy / dot(&y, &y);
                hinv = identity(n);
                hinv.iter_mut().enumerate().for_each(|(i, row)| row[i] = scale);
            }
            update_inverse(&mut hinv, &s, &y, sy);
            fresh = false;
        }
        x.copy_from_slice(&trial);
        fx = ft;
        g = g_new;
        converged = scaled_gradient_norm(&g, &x, fx) <= opts.grad_tol;
    }
    Minimum { x, f: fx, iterations, evaluations, converged }
}

fn identity(n: usize) -> Vec<Vec<f64>> {
    (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `H <- (I - r s y') H (I - r y s') + r s s'` with `r = 1/(s'y)`.
fn update_inverse(h: &mut [Vec<f64>], s: &[f64], y: &[f64], sy: f64) {
    let n = s.len();
    let r = 1.0 / sy;
    let hy: Vec<f64> = (0..n).map(|i| dot(&h[i], y)).collect();
    let yhy = dot(y, &hy);
    for i in 0..n {
        for j in 0..n {
            h[i][j] += (1.0 + r * yhy) * r * s[i] * s[j] - r * (hy[i] * s[j] + s[i] * hy[j]);
        }
    }
}
