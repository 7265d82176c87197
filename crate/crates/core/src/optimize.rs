//! Derivative-free minimisation (Nelder–Mead) used by the M_tb fit.

#[derive(Debug, Clone, Copy)]
pub struct NelderMeadOptions {
    pub max_evals: usize,
    /// Stop when the simplex spread in x and f both drop below these.
    pub x_tol: f64,
    pub f_tol: f64,
    /// Initial simplex edge length per coordinate.
    pub step: f64,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self { max_evals: 20_000, x_tol: 1e-10, f_tol: 1e-12, step: 0.5 }
    }
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub fx: f64,
    pub evals: usize,
    pub converged: bool,
}

/// Minimises `f`. Non-finite values are treated as `+inf`, which lets callers
/// reject infeasible points by returning NaN or infinity.
pub fn nelder_mead<F: FnMut(&[f64]) -> f64>(mut f: F, start: &[f64], opts: NelderMeadOptions) -> Minimum {
    let n = start.len();
    let mut eval = |x: &[f64], count: &mut usize| {
        *count += 1;
        let v = f(x);
        if v.is_finite() { v } else { f64::INFINITY }
    };
    let mut evals = 0;
    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    simplex.push(start.to_vec());
    for i in 0..n {
        let mut v = start.to_vec();
        v[i] += opts.step;
        simplex.push(v);
    }
    let mut fs: Vec<f64> = simplex.iter().map(|x| eval(x, &mut evals)).collect();
    let mut converged = false;

    while evals < opts.max_evals {
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| fs[a].total_cmp(&fs[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        fs = order.iter().map(|&i| fs[i]).collect();

        let f_spread = (fs[n] - fs[0]).abs();
        let x_spread = simplex[1..]
            .iter()
            .flat_map(|v| v.iter().zip(&simplex[0]).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        if x_spread <= opts.x_tol && (f_spread <= opts.f_tol || !fs[n].is_finite() && !fs[0].is_finite()) {
            converged = true;
            break;
        }

        let centroid: Vec<f64> = (0..n).map(|j| simplex[..n].iter().map(|v| v[j]).sum::<f64>() / n as f64).collect();
        let along = |t: f64| -> Vec<f64> { (0..n).map(|j| centroid[j] + t * (simplex[n][j] - centroid[j])).collect() };

        let xr = along(-1.0);
        let fr = eval(&xr, &mut evals);
        if fr < fs[0] {
            let xe = along(-2.0);
            let fe = eval(&xe, &mut evals);
            if fe < fr {
                simplex[n] = xe;
                fs[n] = fe;
            } else {
                simplex[n] = xr;
                fs[n] = fr;
            }
            continue;
        }
        if fr < fs[n - 1] {
            simplex[n] = xr;
            fs[n] = fr;
            continue;
        }
        let (xc, fc) = if fr < fs[n] {
            let xc = along(-0.5);
            let fc = eval(&xc, &mut evals);
            (xc, fc)
        } else {
            let xc = along(0.5);
            let fc = eval(&xc, &mut evals);
            (xc, fc)
        };
        if fc < fs[n].min(fr) {
            simplex[n] = xc;
            fs[n] = fc;
            continue;
        }
        // Shrink towards the best vertex.
        for i in 1..=n {
            let v: Vec<f64> = (0..n).map(|j| simplex[0][j] + 0.5 * (simplex[i][j] - simplex[0][j])).collect();
            fs[i] = eval(&v, &mut evals);
            simplex[i] = v;
        }
    }

    let best = (0..=n).min_by(|&a, &b| fs[a].total_cmp(&fs[b])).unwrap();
    Minimum { x: simplex[best].clone(), fx: fs[best], evals, converged }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rosenbrock() {
        let m = nelder_mead(
            |x| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2),
            &[-1.2, 1.0],
            NelderMeadOptions::default(),
        );
        assert!(m.converged);
        assert!((m.x[0] - 1.0).abs() < 1e-6 && (m.x[1] - 1.0).abs() < 1e-6, "{:?}", m.x);
    }

    #[test]
    fn respects_infeasible_region() {
        let m = nelder_mead(
            |x| if x[0] < 0.5 { f64::NAN } else { (x[0] - 0.2).powi(2) },
            &[2.0],
            NelderMeadOptions::default(),
        );
        assert!(m.x[0] >= 0.5 && (m.x[0] - 0.5).abs() < 1e-6);
    }
}
