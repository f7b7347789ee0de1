//! Derivative-free Nelder-Mead minimization.

#[derive(Debug, Clone, Copy)]
pub struct NelderMeadOptions {
    pub max_iter: usize,
    /// Converged when the spread of objective values across the simplex is below this.
    pub f_tol: f64,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self {
            max_iter: 500,
            f_tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub f: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Minimizes `f` from `x0` with per-coordinate initial steps `step`.
/// Non-finite objective values are treated as +inf.
pub fn nelder_mead<F>(f: F, x0: &[f64], step: &[f64], opts: NelderMeadOptions) -> Minimum
where
    F: Fn(&[f64]) -> f64,
{
    let n = x0.len();
    let eval = |x: &[f64]| {
        let v = f(x);
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    };
    if n == 0 {
        return Minimum {
            x: Vec::new(),
            f: eval(x0),
            iterations: 0,
            converged: true,
        };
    }

    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    simplex.push(x0.to_vec());
    for i in 0..n {
        let mut v = x0.to_vec();
        v[i] += step[i];
        simplex.push(v);
    }
    let mut fvals: Vec<f64> = simplex.iter().map(|v| eval(v)).collect();

    let (alpha, gamma, rho, sigma) = (1.0, 2.0, 0.5, 0.5);
    let mut iterations = 0;
    let mut converged = false;
    let mut order: Vec<usize> = (0..=n).collect();

    while iterations < opts.max_iter {
        order.sort_by(|&a, &b| fvals[a].total_cmp(&fvals[b]));
        let best = order[0];
        let worst = order[n];
        let second_worst = order[n - 1];
        if (fvals[worst] - fvals[best]).abs() <= opts.f_tol {
            converged = true;
            break;
        }
        iterations += 1;

        let mut centroid = vec![0.0; n];
        for &idx in &order[..n] {
            for (c, v) in centroid.iter_mut().zip(&simplex[idx]) {
                *c += v / n as f64;
            }
        }
        let toward = |coef: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&simplex[worst])
                .map(|(c, w)| c + coef * (w - c))
                .collect()
        };

        let reflected = toward(-alpha);
        let fr = eval(&reflected);
        if fr < fvals[best] {
            let expanded = toward(-gamma);
            let fe = eval(&expanded);
            if fe < fr {
                simplex[worst] = expanded;
                fvals[worst] = fe;
            } else {
                simplex[worst] = reflected;
                fvals[worst] = fr;
            }
            continue;
        }
        if fr < fvals[second_worst] {
            simplex[worst] = reflected;
            fvals[worst] = fr;
            continue;
        }
        let (contracted, fc) = if fr < fvals[worst] {
            let c = toward(-rho);
            let fc = eval(&c);
            (c, fc)
        } else {
            let c = toward(rho);
            let fc = eval(&c);
            (c, fc)
        };
        if fc < fvals[worst].min(fr) {
            simplex[worst] = contracted;
            fvals[worst] = fc;
            continue;
        }
        let anchor = simplex[best].clone();
        for &idx in &order[1..] {
            let shrunk: Vec<f64> = anchor
                .iter()
                .zip(&simplex[idx])
                .map(|(b, v)| b + sigma * (v - b))
                .collect();
            fvals[idx] = eval(&shrunk);
            simplex[idx] = shrunk;
        }
    }

    let best = (0..=n).min_by(|&a, &b| fvals[a].total_cmp(&fvals[b])).unwrap();
    Minimum {
        x: simplex[best].clone(),
        f: fvals[best],
        iterations,
        converged,
    }
}
