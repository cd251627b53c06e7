use nalgebra::{DMatrix, DVector};

/// Weighted linear least-squares solution.
#[derive(Debug, Clone)]
pub(crate) struct LinearFit {
    pub coef: Vec<f64>,
    pub chi2: f64,
}

/// Minimize `Σ w_i (y_i − Σ_j c_j·cols[j][i])²` with the coefficients
/// flagged in `nonneg` held at or above zero.
///
/// With only a handful of columns the constrained optimum is found
/// exactly by trying every active set and keeping the best feasible one.
pub(crate) fn solve_nnls(cols: &[Vec<f64>], y: &[f64], w: &[f64], nonneg: &[bool]) -> Option<LinearFit> {
    let p = cols.len();
    debug_assert_eq!(nonneg.len(), p);
    let mut gram = DMatrix::<f64>::zeros(p, p);
    let mut rhs = DVector::<f64>::zeros(p);
    for i in 0..y.len() {
        for a in 0..p {
            let wa = w[i] * cols[a][i];
            rhs[a] += wa * y[i];
            for b in a..p {
                gram[(a, b)] += wa * cols[b][i];
            }
        }
    }
    for a in 0..p {
        for b in 0..a {
            gram[(a, b)] = gram[(b, a)];
        }
    }

    let constrained: Vec<usize> = (0..p).filter(|&j| nonneg[j]).collect();
    let mut best: Option<(f64, Vec<f64>)> = None;
    for mask in 0u32..(1 << constrained.len()) {
        let active: Vec<usize> = (0..p)
            .filter(|&j| match constrained.iter().position(|&c| c == j) {
                Some(k) => mask & (1 << k) == 0,
                None => true,
            })
            .collect();
        let mut coef = vec![0.0; p];
        if !active.is_empty() {
            let g = DMatrix::from_fn(active.len(), active.len(), |r, c| gram[(active[r], active[c])]);
            let h = DVector::from_fn(active.len(), |r, _| rhs[active[r]]);
            let Some(chol) = g.cholesky() else { continue };
            let x = chol.solve(&h);
            for (k, &j) in active.iter().enumerate() {
                coef[j] = x[k];
            }
        }
        if (0..p).any(|j| nonneg[j] && coef[j] < 0.0) {
            continue;
        }
        let chi2 = chi_square(cols, y, w, &coef);
        if chi2.is_finite() && best.as_ref().is_none_or(|(c, _)| chi2 < *c) {
            best = Some((chi2, coef));
        }
    }
    best.map(|(chi2, coef)| LinearFit { coef, chi2 })
}

pub(crate) fn chi_square(cols: &[Vec<f64>], y: &[f64], w: &[f64], coef: &[f64]) -> f64 {
    (0..y.len())
        .map(|i| {
            let m: f64 = cols.iter().zip(coef).map(|(c, k)| c[i] * k).sum();
            w[i] * (y[i] - m).powi(2)
        })
        .sum()
}
