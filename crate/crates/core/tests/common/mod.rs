//! Reference implementations used only by tests. Nothing here calls into the
//! production analytics; each quantity is recomputed by direct summation.

#![allow(dead_code)]

use fairliq::market_env::MarketParams;
use rand::Rng;

/// Post-trade inventories for a sales vector.
pub fn remaining_after(x0: f64, sales: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(sales.len());
    let mut x = x0;
    for n in sales {
        x -= n;
        out.push(x);
    }
    out
}

pub fn direct_shortfall(p: &MarketParams, x0: f64, sales: &[f64]) -> f64 {
    let xs = remaining_after(x0, sales);
    let mut permanent = 0.0;
    let mut temporary = 0.0;
    for (n, x) in sales.iter().zip(&xs) {
        let v = n / p.tau;
        permanent += p.tau * x * (p.gamma * v);
        let sign = if *n > 0.0 { 1.0 } else { 0.0 };
        temporary += n * (p.epsilon * sign + p.eta * v);
    }
    permanent + temporary
}

pub fn direct_variance(p: &MarketParams, x0: f64, sales: &[f64]) -> f64 {
    let xs = remaining_after(x0, sales);
    let mut acc = 0.0;
    for x in xs {
        acc += p.tau * x * x;
    }
    p.sigma_step * p.sigma_step * acc
}

pub fn direct_utility(p: &MarketParams, lambda: f64, x0: f64, sales: &[f64]) -> f64 {
    direct_shortfall(p, x0, sales) + lambda * direct_variance(p, x0, sales)
}

/// Sales vector from interior inventories y = (x_1, …, x_{M−1}), with x_0 = X
/// and x_M = 0.
pub fn sales_from_interior(x0: f64, interior: &[f64]) -> Vec<f64> {
    let mut path = Vec::with_capacity(interior.len() + 2);
    path.push(x0);
    path.extend_from_slice(interior);
    path.push(0.0);
    path.windows(2).map(|w| w[0] - w[1]).collect()
}

/// Smooth part of U (the fixed-cost term ε·X is constant when every sale is
/// positive and is dropped here).
fn smooth_utility(p: &MarketParams, lambda: f64, x0: f64, interior: &[f64]) -> f64 {
    let sales = sales_from_interior(x0, interior);
    let xs = remaining_after(x0, &sales);
    let mut acc = 0.0;
    for (n, x) in sales.iter().zip(&xs) {
        acc += p.gamma * x * n + p.eta / p.tau * n * n + lambda * p.sigma_step * p.sigma_step * p.tau * x * x;
    }
    acc
}

/// Solves `a·z = b` by Gaussian elimination with partial pivoting.
pub fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            if f != 0.0 {
                for k in col..n {
                    a[row][k] -= f * a[col][k];
                }
                b[row] -= f * b[col];
            }
        }
    }
    let mut z = vec![0.0; n];
    for row in (0..n).rev() {
        let mut s = b[row];
        for k in row + 1..n {
            s -= a[row][k] * z[k];
        }
        z[row] = s / a[row][row];
    }
    z
}

/// Minimizes U over all schedules liquidating `x0` in `m` steps by treating it
/// as an unconstrained quadratic in the interior inventories. The Hessian and
/// linear term are read off the quadratic by exact polarization at scale X.
/// Returns `(sales, U)`.
pub fn qp_minimize(p: &MarketParams, lambda: f64, x0: f64, m: usize) -> (Vec<f64>, f64) {
    let d = m - 1;
    if d == 0 {
        let sales = vec![x0];
        let u = direct_utility(p, lambda, x0, &sales);
        return (sales, u);
    }
    let s = x0;
    let q = |y: &[f64]| smooth_utility(p, lambda, x0, y);
    let zero = vec![0.0; d];
    let q0 = q(&zero);
    let unit = |i: usize, c: f64| {
        let mut v = zero.clone();
        v[i] = c;
        v
    };
    let qi: Vec<f64> = (0..d).map(|i| q(&unit(i, s))).collect();
    let qmi: Vec<f64> = (0..d).map(|i| q(&unit(i, -s))).collect();
    let mut h = vec![vec![0.0; d]; d];
    for i in 0..d {
        for j in 0..d {
            let mut v = zero.clone();
            v[i] += s;
            v[j] += s;
            h[i][j] = if i == j {
                (qi[i] - 2.0 * q0 + qmi[i]) / (s * s)
            } else {
                (q(&v) - qi[i] - qi[j] + q0) / (s * s)
            };
        }
    }
    let grad0: Vec<f64> = (0..d).map(|i| -(qi[i] - qmi[i]) / (2.0 * s)).collect();
    let y = solve_dense(h, grad0);
    let sales = sales_from_interior(x0, &y);
    let u = direct_utility(p, lambda, x0, &sales);
    (sales, u)
}

/// A random feasible schedule: nonnegative sales summing to `x0`, with a
/// random subset of steps left idle.
pub fn random_schedule<R: Rng>(rng: &mut R, x0: f64, m: usize) -> Vec<f64> {
    let mut w: Vec<f64> = (0..m)
        .map(|_| if rng.random_bool(0.2) { 0.0 } else { -rng.random::<f64>().max(1e-300).ln() })
        .collect();
    if w.iter().all(|&v| v == 0.0) {
        w[rng.random_range(0..m)] = 1.0;
    }
    let total: f64 = w.iter().sum();
    let mut sales: Vec<f64> = w.iter().map(|v| x0 * v / total).collect();
    let spent: f64 = sales[..m - 1].iter().sum();
    sales[m - 1] = (x0 - spent).max(0.0);
    sales
}

/// Central finite difference of a scalar function along coordinate `i`.
pub fn central_difference<F: FnMut(&[f64]) -> f64>(mut f: F, x: &[f64], i: usize, h: f64) -> f64 {
    let mut plus = x.to_vec();
    let mut minus = x.to_vec();
    plus[i] += h;
    minus[i] -= h;
    (f(&plus) - f(&minus)) / (2.0 * h)
}

pub fn rel_err(actual: f64, expected: f64) -> f64 {
    (actual - expected).abs() / expected.abs().max(f64::MIN_POSITIVE)
}

/// Relative error with an absolute floor, for comparing near-zero gradients.
pub fn grad_err(actual: f64, expected: f64, floor: f64) -> f64 {
    (actual - expected).abs() / expected.abs().max(actual.abs()).max(floor)
}
