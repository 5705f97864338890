//! Derivative-free Nelder-Mead simplex minimisation with optional box bounds.

#[derive(Debug, Clone)]
pub struct NelderMeadOptions {
    /// Initial simplex offsets per coordinate.
    pub initial_step: Vec<f64>,
    /// Convergence: max |x_i - x_best| over the simplex.
    pub xatol: f64,
    /// Convergence: max |f_i - f_best| over the simplex.
    pub fatol: f64,
    pub max_iter: usize,
    /// Coordinates are projected into `[lo, hi]` before every evaluation.
    pub bounds: Option<Vec<(f64, f64)>>,
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn project(x: &mut [f64], bounds: &Option<Vec<(f64, f64)>>) {
    if let Some(b) = bounds {
        for (xi, (lo, hi)) in x.iter_mut().zip(b) {
            *xi = xi.clamp(*lo, *hi);
        }
    }
}

/// Standard coefficients (reflection 1, expansion 2, contraction 1/2, shrink 1/2).
pub fn nelder_mead<F>(f: F, x0: &[f64], opts: &NelderMeadOptions) -> Minimum
where
    F: Fn(&[f64]) -> f64,
{
    let n = x0.len();
    let eval = |x: &mut Vec<f64>| {
        project(x, &opts.bounds);
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };

    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    let mut p = x0.to_vec();
    let v = eval(&mut p);
    simplex.push((p, v));
    for i in 0..n {
        let mut p = x0.to_vec();
        p[i] += opts.initial_step[i];
        let v = eval(&mut p);
        simplex.push((p, v));
    }

    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iter {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let best = &simplex[0];
        let fspread = simplex.iter().map(|s| (s.1 - best.1).abs()).fold(0.0, f64::max);
        let xspread = simplex
            .iter()
            .flat_map(|s| s.0.iter().zip(&best.0).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        if fspread <= opts.fatol && xspread <= opts.xatol {
            converged = true;
            break;
        }
        iterations += 1;

        let mut centroid = vec![0.0; n];
        for (x, _) in &simplex[..n] {
            for (c, xi) in centroid.iter_mut().zip(x) {
                *c += xi / n as f64;
            }
        }
        let worst = simplex[n].clone();
        let along = |t: f64| -> Vec<f64> { centroid.iter().zip(&worst.0).map(|(c, w)| c + t * (c - w)).collect() };

        let mut xr = along(1.0);
        let fr = eval(&mut xr);
        if fr < simplex[0].1 {
            let mut xe = along(2.0);
            let fe = eval(&mut xe);
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
            continue;
        }
        // Outside contraction when the reflection beats the worst point.
        let (mut xc, outside) = if fr < worst.1 {
            (along(0.5), true)
        } else {
            (along(-0.5), false)
        };
        let fc = eval(&mut xc);
        if (outside && fc <= fr) || (!outside && fc < worst.1) {
            simplex[n] = (xc, fc);
            continue;
        }
        let best = simplex[0].0.clone();
        for s in simplex.iter_mut().skip(1) {
            let mut x: Vec<f64> = best.iter().zip(&s.0).map(|(b, xi)| b + 0.5 * (xi - b)).collect();
            let v = eval(&mut x);
            *s = (x, v);
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (x, value) = simplex.swap_remove(0);
    Minimum {
        x,
        value,
        iterations,
        converged,
    }
}
