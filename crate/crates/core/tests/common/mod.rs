//! Reference solvers used to check the library. They share no code with it:
//! disutilities are evaluated and differentiated from their definitions here.

#![allow(dead_code)]

use dmadmm::disutility::{Disutility, LoadBounds};

pub fn value(f: &Disutility, x: f64) -> f64 {
    match *f {
        Disutility::Quadratic { q } => q * x * x / 2.0,
        Disutility::KinkedQuadratic { q, eta } => {
            if x.abs() <= eta {
                q * x * x
            } else {
                q * (3.0 * x * x - 2.0 * eta * eta)
            }
        }
        Disutility::KinkedQuadraticAsPrinted { q, eta } => {
            if x.abs() <= eta {
                q * x * x
            } else {
                q * (3.0 * x * x - eta)
            }
        }
        Disutility::AsymmetricQuadratic { q_minus, q_plus } => {
            let q = if x < 0.0 { q_minus } else { q_plus };
            q * x * x / 2.0
        }
    }
}

/// Left and right derivatives of a convex model.
pub fn one_sided(f: &Disutility, x: f64) -> (f64, f64) {
    match *f {
        Disutility::Quadratic { q } => (q * x, q * x),
        Disutility::KinkedQuadratic { q, eta } => {
            let slope = |inside: bool| if inside { 2.0 * q * x } else { 6.0 * q * x };
            let left = slope(x > -eta && x <= eta);
            let right = slope(x >= -eta && x < eta);
            (left, right)
        }
        Disutility::AsymmetricQuadratic { q_minus, q_plus } => {
            let left = if x <= 0.0 { q_minus * x } else { q_plus * x };
            let right = if x < 0.0 { q_minus * x } else { q_plus * x };
            (left, right)
        }
        Disutility::KinkedQuadraticAsPrinted { .. } => panic!("no derivative oracle for the nonconvex form"),
    }
}

/// Interior kinks of a convex model.
fn kinks(f: &Disutility) -> Vec<f64> {
    match *f {
        Disutility::Quadratic { .. } => vec![],
        Disutility::KinkedQuadratic { eta, .. } => vec![-eta, eta],
        Disutility::AsymmetricQuadratic { .. } => vec![0.0],
        Disutility::KinkedQuadraticAsPrinted { .. } => panic!("unsupported"),
    }
}

/// Minimizes a unimodal function on `[lo, hi]` by golden-section search.
pub fn golden(g: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut a = hi - inv_phi * (hi - lo);
    let mut b = lo + inv_phi * (hi - lo);
    let (mut ga, mut gb) = (g(a), g(b));
    for _ in 0..200 {
        if hi - lo <= 1e-15 * (1.0 + lo.abs().max(hi.abs())) {
            break;
        }
        if ga <= gb {
            hi = b;
            b = a;
            gb = ga;
            a = hi - inv_phi * (hi - lo);
            ga = g(a);
        } else {
            lo = a;
            a = b;
            ga = gb;
            b = lo + inv_phi * (hi - lo);
            gb = g(b);
        }
    }
    let mid = 0.5 * (lo + hi);
    // endpoints may beat the interior when the minimizer sits on the box
    [lo, mid, hi].into_iter().fold(mid, |best, x| if g(x) < g(best) { x } else { best })
}

/// Prox reference: evaluate on a uniform grid of spacing `h`, then refine the
/// bracket around the best grid point by golden-section search.
pub fn prox_reference(f: &Disutility, b: &LoadBounds, y: f64, rho: f64, c: f64, h: f64) -> f64 {
    let g = |x: f64| value(f, x) + y * x + rho / 2.0 * (x - c) * (x - c);
    let steps = ((b.upper - b.lower) / h).ceil().max(1.0) as usize;
    let point = |k: usize| if k == steps { b.upper } else { b.lower + k as f64 * h };
    let best = (0..=steps).min_by(|&i, &j| g(point(i)).total_cmp(&g(point(j)))).unwrap();
    let lo = point(best.saturating_sub(1));
    let hi = point((best + 1).min(steps));
    golden(g, lo, hi)
}

/// Response `x(y)` of one load as a piecewise-linear, non-increasing
/// function of the price, listed as `(y, x)` knots in increasing `y`.
fn response_knots(f: &Disutility, b: &LoadBounds) -> Vec<(f64, f64)> {
    let mut xs = vec![b.upper];
    let mut inner: Vec<f64> = kinks(f).into_iter().filter(|&k| k > b.lower && k < b.upper).collect();
    inner.sort_by(|a, c| c.total_cmp(a));
    xs.extend(inner);
    if b.lower < b.upper {
        xs.push(b.lower);
    }
    let mut knots = Vec::new();
    for (j, &x) in xs.iter().enumerate() {
        let (left, right) = one_sided(f, x);
        let at_top = j == 0;
        let at_bottom = j == xs.len() - 1;
        // x(y) = x on [-right, -left]; the box extends the ends to infinity
        if !at_top {
            knots.push((-right, x));
        }
        if !at_bottom {
            knots.push((-left, x));
        }
        if at_top && at_bottom {
            knots.push((0.0, x));
        }
    }
    knots
}

fn interpolate(knots: &[(f64, f64)], y: f64) -> f64 {
    if y <= knots[0].0 {
        return knots[0].1;
    }
    let last = knots[knots.len() - 1];
    if y >= last.0 {
        return last.1;
    }
    let j = knots.partition_point(|k| k.0 <= y);
    let (y0, x0) = knots[j - 1];
    let (y1, x1) = knots[j];
    if y1 == y0 {
        x1
    } else {
        x0 + (x1 - x0) * (y - y0) / (y1 - y0)
    }
}

pub struct Reference {
    pub x: Vec<f64>,
    pub y: f64,
    pub p: f64,
}

/// Solves `min sum f_i(x_i)` s.t. `sum x_i = c`, box constraints, by locating
/// `c` between consecutive breakpoints of the aggregate response and
/// interpolating.
pub fn knapsack_reference(fs: &[Disutility], bs: &[LoadBounds], c: f64) -> Reference {
    let knots: Vec<Vec<(f64, f64)>> = fs.iter().zip(bs).map(|(f, b)| response_knots(f, b)).collect();
    let total = |y: f64| knots.iter().map(|k| interpolate(k, y)).sum::<f64>();
    let mut ys: Vec<f64> = knots.iter().flatten().map(|k| k.0).collect();
    ys.sort_by(f64::total_cmp);
    ys.dedup();
    let lo_pad = ys[0] - 1.0;
    let hi_pad = ys[ys.len() - 1] + 1.0;
    ys.insert(0, lo_pad);
    ys.push(hi_pad);
    let totals: Vec<f64> = ys.iter().map(|&y| total(y)).collect();
    let j = totals.iter().position(|&s| s <= c).expect("c within capacity");
    let y = if j == 0 || totals[j] == c {
        ys[j]
    } else {
        let (s0, s1) = (totals[j - 1], totals[j]);
        ys[j - 1] + (ys[j] - ys[j - 1]) * (s0 - c) / (s0 - s1)
    };
    let x: Vec<f64> = knots.iter().map(|k| interpolate(k, y)).collect();
    let p = fs.iter().zip(&x).map(|(f, &xi)| value(f, xi)).sum();
    Reference { x, y, p }
}

/// Euclidean projection of `z` onto `{sum x = c, lower <= x <= upper}`.
pub fn project_capped_simplex(z: &[f64], bs: &[LoadBounds], c: f64) -> Vec<f64> {
    let shifted = |lambda: f64| -> f64 { z.iter().zip(bs).map(|(&v, b)| (v - lambda).clamp(b.lower, b.upper)).sum() };
    let (mut lo, mut hi) = (-1.0, 1.0);
    while shifted(lo) < c {
        lo *= 2.0;
    }
    while shifted(hi) > c {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if shifted(mid) > c {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let lambda = 0.5 * (lo + hi);
    z.iter().zip(bs).map(|(&v, b)| (v - lambda).clamp(b.lower, b.upper)).collect()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max)
}
