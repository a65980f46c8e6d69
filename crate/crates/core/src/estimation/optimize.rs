use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// How the minimizer finished.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimReport {
    pub converged: bool,
    pub starts: usize,
    /// Starts whose simplex search reached a finite objective.
    pub finite_starts: usize,
    pub best_start: usize,
    pub simplex_iterations: usize,
    pub polish_iterations: usize,
    pub evaluations: usize,
    /// Largest gradient component not blocked by an active bound.
    pub projected_gradient: f64,
    pub at_bound: Vec<bool>,
}

const PRIMES: [u32; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];

fn radical_inverse(mut i: u32, base: u32) -> f64 {
    let (mut f, mut r) = (1.0, 0.0);
    while i > 0 {
        f /= base as f64;
        r += f * (i % base) as f64;
        i /= base;
    }
    r
}

/// `n` Halton points mapped into the box.
pub(crate) fn halton_starts(n: usize, lo: &[f64], hi: &[f64]) -> Vec<Vec<f64>> {
    (1..=n as u32)
        .map(|i| {
            lo.iter()
                .zip(hi)
                .enumerate()
                .map(|(d, (a, b))| a + radical_inverse(i, PRIMES[d % PRIMES.len()]) * (b - a))
                .collect()
        })
        .collect()
}

fn clamp(x: &mut [f64], lo: &[f64], hi: &[f64]) {
    for ((v, a), b) in x.iter_mut().zip(lo).zip(hi) {
        *v = v.clamp(*a, *b);
    }
}

struct Counted<'a, F> {
    f: &'a F,
    evals: usize,
}

impl<F: Fn(&[f64]) -> Vec<f64>> Counted<'_, F> {
    fn resid(&mut self, x: &[f64]) -> Vec<f64> {
        self.evals += 1;
        (self.f)(x)
    }

    fn cost(&mut self, x: &[f64]) -> f64 {
        let c: f64 = self.resid(x).iter().map(|r| r * r).sum();
        if c.is_finite() {
            c
        } else {
            f64::INFINITY
        }
    }
}

/// Nelder–Mead with every trial point projected into the box.
fn nelder_mead<F: Fn(&[f64]) -> Vec<f64>>(
    f: &mut Counted<F>,
    x0: &[f64],
    lo: &[f64],
    hi: &[f64],
    max_iter: usize,
) -> (Vec<f64>, f64, usize) {
    let n = x0.len();
    let mut simplex: Vec<Vec<f64>> = vec![x0.to_vec()];
    for d in 0..n {
        let mut v = x0.to_vec();
        let step = 0.1 * (hi[d] - lo[d]);
        v[d] = if v[d] + step <= hi[d] { v[d] + step } else { v[d] - step };
        simplex.push(v);
    }
    let mut fv: Vec<f64> = simplex.iter().map(|v| f.cost(v)).collect();
    let mut it = 0;
    while it < max_iter {
        it += 1;
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| fv[a].total_cmp(&fv[b]));
        simplex = order.iter().map(|&k| simplex[k].clone()).collect();
        fv = order.iter().map(|&k| fv[k]).collect();
        let spread = fv[n] - fv[0];
        let size = simplex[1..]
            .iter()
            .flat_map(|v| v.iter().zip(&simplex[0]).enumerate().map(|(d, (a, b))| (a - b).abs() / (hi[d] - lo[d])))
            .fold(0.0f64, f64::max);
        if (spread.is_finite() && spread <= 1e-15 * (1.0 + fv[0].abs())) && size <= 1e-9 || size <= 1e-12 {
            break;
        }
        let centroid: Vec<f64> = (0..n).map(|d| simplex[..n].iter().map(|v| v[d]).sum::<f64>() / n as f64).collect();
        let along = |t: f64| {
            let mut p: Vec<f64> = (0..n).map(|d| centroid[d] + t * (simplex[n][d] - centroid[d])).collect();
            clamp(&mut p, lo, hi);
            p
        };
        let xr = along(-1.0);
        let fr = f.cost(&xr);
        if fr < fv[0] {
            let xe = along(-2.0);
            let fe = f.cost(&xe);
            if fe < fr {
                simplex[n] = xe;
                fv[n] = fe;
            } else {
                simplex[n] = xr;
                fv[n] = fr;
            }
        } else if fr < fv[n - 1] {
            simplex[n] = xr;
            fv[n] = fr;
        } else {
            let (xc, fc) = if fr < fv[n] {
                let xc = along(-0.5);
                let fc = f.cost(&xc);
                (xc, fc)
            } else {
                let xc = along(0.5);
                let fc = f.cost(&xc);
                (xc, fc)
            };
            if fc < fv[n].min(fr) {
                simplex[n] = xc;
                fv[n] = fc;
            } else {
                for k in 1..=n {
                    let shrunk: Vec<f64> = (0..n).map(|d| simplex[0][d] + 0.5 * (simplex[k][d] - simplex[0][d])).collect();
                    fv[k] = f.cost(&shrunk);
                    simplex[k] = shrunk;
                }
            }
        }
    }
    let best = (0..=n).min_by(|&a, &b| fv[a].total_cmp(&fv[b])).unwrap_or(0);
    (simplex[best].clone(), fv[best], it)
}

/// Forward or central difference Jacobian of the residual vector, one-sided
/// where a central step would leave the box.
pub(crate) fn jacobian<F: Fn(&[f64]) -> Vec<f64>>(f: &F, x: &[f64], lo: &[f64], hi: &[f64]) -> DMatrix<f64> {
    let base = f(x);
    let mut cols = Vec::with_capacity(x.len());
    for d in 0..x.len() {
        let h = 1e-6 * x[d].abs().max(1.0);
        let mut up = x.to_vec();
        let mut dn = x.to_vec();
        let col: Vec<f64> = if x[d] + h <= hi[d] && x[d] - h >= lo[d] {
            up[d] += h;
            dn[d] -= h;
            f(&up).iter().zip(f(&dn)).map(|(a, b)| (a - b) / (2.0 * h)).collect()
        } else if x[d] + h <= hi[d] {
            up[d] += h;
            f(&up).iter().zip(&base).map(|(a, b)| (a - b) / h).collect()
        } else {
            dn[d] -= h;
            base.iter().zip(f(&dn)).map(|(a, b)| (a - b) / h).collect()
        };
        cols.push(col);
    }
    DMatrix::from_fn(base.len(), x.len(), |i, j| cols[j][i])
}

fn projected_gradient(g: &DVector<f64>, x: &[f64], lo: &[f64], hi: &[f64]) -> f64 {
    (0..x.len())
        .map(|d| {
            let blocked = (x[d] <= lo[d] && g[d] > 0.0) || (x[d] >= hi[d] && g[d] < 0.0);
            if blocked {
                0.0
            } else {
                g[d].abs()
            }
        })
        .fold(0.0, f64::max)
}

/// Projected Levenberg–Marquardt on ½‖r‖². Returns the point, its cost, the
/// iteration count, the final projected gradient and whether the step
/// criterion was met.
fn levenberg_marquardt<F: Fn(&[f64]) -> Vec<f64>>(
    f: &mut Counted<F>,
    x0: &[f64],
    lo: &[f64],
    hi: &[f64],
    max_iter: usize,
) -> (Vec<f64>, f64, usize, f64, bool) {
    let mut x = x0.to_vec();
    let mut r = DVector::from_vec(f.resid(&x));
    let mut cost = r.norm_squared();
    let mut mu = 1e-3;
    let mut grad = f64::INFINITY;
    let mut it = 0;
    let mut done = false;
    while it < max_iter && cost.is_finite() {
        it += 1;
        let j = jacobian(f.f, &x, lo, hi);
        f.evals += 2 * x.len();
        let g = j.transpose() * &r;
        let a = j.transpose() * &j;
        grad = projected_gradient(&g, &x, lo, hi);
        if cost <= 1e-30 || grad <= 1e-15 * (1.0 + cost) {
            done = true;
            break;
        }
        let mut accepted = false;
        while mu < 1e16 {
            // Coordinates pushed against an active bound stay fixed.
            let mut m = a.clone();
            let mut rhs = -&g;
            for d in 0..x.len() {
                m[(d, d)] += mu * a[(d, d)].max(1e-12);
                let blocked = (x[d] <= lo[d] && g[d] > 0.0) || (x[d] >= hi[d] && g[d] < 0.0);
                if blocked {
                    m.row_mut(d).fill(0.0);
                    m.column_mut(d).fill(0.0);
                    m[(d, d)] = 1.0;
                    rhs[d] = 0.0;
                }
            }
            let Some(step) = m.cholesky().map(|c| c.solve(&rhs)) else {
                mu *= 10.0;
                continue;
            };
            let mut xn: Vec<f64> = x.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            clamp(&mut xn, lo, hi);
            let rn = DVector::from_vec(f.resid(&xn));
            let cn = rn.norm_squared();
            if cn.is_finite() && cn < cost {
                let moved = xn.iter().zip(&x).map(|(a, b)| (a - b).abs() / (1.0 + b.abs())).fold(0.0, f64::max);
                let gain = cost - cn;
                x = xn;
                r = rn;
                cost = cn;
                mu = (mu * 0.3).max(1e-12);
                accepted = true;
                if moved <= 1e-12 || gain <= 1e-15 * cost {
                    done = true;
                }
                break;
            }
            mu *= 10.0;
        }
        if !accepted {
            // No descent available at any damping: a (box-)stationary point.
            done = true;
        }
        if done {
            let j = jacobian(f.f, &x, lo, hi);
            grad = projected_gradient(&(j.transpose() * &r), &x, lo, hi);
            break;
        }
    }
    (x, cost, it, grad, done)
}

/// Minimize ‖r(x)‖² over a box: Nelder–Mead from each start, then a
/// Levenberg–Marquardt polish of every finite simplex solution; the best
/// polished point wins.
pub(crate) fn least_squares<F: Fn(&[f64]) -> Vec<f64>>(
    f: &F,
    lo: &[f64],
    hi: &[f64],
    starts: &[Vec<f64>],
) -> Option<(Vec<f64>, f64, OptimReport)> {
    let mut counted = Counted { f, evals: 0 };
    let mut best: Option<(Vec<f64>, f64, usize, usize, f64, bool)> = None;
    let (mut nm_total, mut finite) = (0, 0);
    for (k, s) in starts.iter().enumerate() {
        let mut x0 = s.clone();
        clamp(&mut x0, lo, hi);
        let (xs, fs, nm_it) = nelder_mead(&mut counted, &x0, lo, hi, 400 * x0.len());
        nm_total += nm_it;
        if !fs.is_finite() {
            continue;
        }
        finite += 1;
        let (xp, fp, lm_it, grad, done) = levenberg_marquardt(&mut counted, &xs, lo, hi, 200);
        if best.as_ref().is_none_or(|b| fp < b.1) {
            best = Some((xp, fp, k, lm_it, grad, done));
        }
    }
    let (x, cost, k, lm_it, grad, done) = best?;
    let at_bound = (0..x.len())
        .map(|d| {
            let tol = 1e-7 * (hi[d] - lo[d]).max(1e-12);
            x[d] - lo[d] <= tol || hi[d] - x[d] <= tol
        })
        .collect();
    let report = OptimReport {
        converged: done && grad <= 1e-5 * (1.0 + cost.sqrt()),
        starts: starts.len(),
        finite_starts: finite,
        best_start: k,
        simplex_iterations: nm_total,
        polish_iterations: lm_it,
        evaluations: counted.evals,
        projected_gradient: grad,
        at_bound,
    };
    Some((x, cost, report))
}
