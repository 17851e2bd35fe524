//! Local least-squares polynomial smoothing (Savitzky-Golay style). Interior
//! points use a centred window; points within half a window of either end use
//! the truncated, one-sided window that fits inside the series.

use crate::error::{Error, Result};

/// Weights `c` such that `sum_j c[j] * y[j]` is the value at `centre` of the
/// degree-`degree` least-squares polynomial through points `0..len`.
fn fit_weights(len: usize, centre: usize, degree: usize) -> Vec<f64> {
    let degree = degree.min(len - 1);
    let p = degree + 1;
    let half = (len as f64 - 1.0).max(1.0) / 2.0;
    // abscissae scaled to roughly [-1, 1] for conditioning
    let xs: Vec<f64> = (0..len).map(|j| (j as f64 - centre as f64) / half).collect();

    // Gram matrix of the monomial basis
    let mut gram = vec![0.0; p * p];
    for &x in &xs {
        let mut pow = vec![1.0; 2 * p - 1];
        for k in 1..pow.len() {
            pow[k] = pow[k - 1] * x;
        }
        for r in 0..p {
            for c in 0..p {
                gram[r * p + c] += pow[r + c];
            }
        }
    }
    // The fitted value at the centre (x = 0) is the constant coefficient:
    // solve gram * w = e0, then c_j = sum_k w_k x_j^k.
    let mut rhs = vec![0.0; p];
    rhs[0] = 1.0;
    let w = solve_spd(&mut gram, &mut rhs, p);
    xs.iter()
        .map(|&x| {
            let mut acc = 0.0;
            let mut xp = 1.0;
            for wk in &w {
                acc += wk * xp;
                xp *= x;
            }
            acc
        })
        .collect()
}

/// Gaussian elimination with partial pivoting on a small dense system.
fn solve_spd(a: &mut [f64], b: &mut [f64], n: usize) -> Vec<f64> {
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i * n + col].abs().total_cmp(&a[j * n + col].abs()))
            .unwrap();
        if pivot != col {
            for k in 0..n {
                a.swap(col * n + k, pivot * n + k);
            }
            b.swap(col, pivot);
        }
        let d = a[col * n + col];
        for row in col + 1..n {
            let f = a[row * n + col] / d;
            if f != 0.0 {
                for k in col..n {
                    a[row * n + k] -= f * a[col * n + k];
                }
                b[row] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut acc = b[row];
        for k in row + 1..n {
            acc -= a[row * n + k] * x[k];
        }
        x[row] = acc / a[row * n + row];
    }
    x
}

/// Smooths `series` with a sliding least-squares polynomial fit.
///
/// `window_len` must be odd and larger than `degree`. Series shorter than the
/// window are fitted with whatever points exist (degree reduced if needed).
pub fn smooth_signal(series: &[f64], window_len: usize, degree: usize) -> Result<Vec<f64>> {
    if window_len.is_multiple_of(2) || window_len == 0 {
        return Err(Error::config(format!("smoothing window must be odd, got {window_len}")));
    }
    if degree >= window_len {
        return Err(Error::config(format!(
            "smoothing degree {degree} must be below window length {window_len}"
        )));
    }
    let n = series.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    let half = window_len / 2;
    let mut out = vec![0.0; n];

    let interior = if n >= window_len {
        Some(fit_weights(window_len, half, degree))
    } else {
        None
    };

    for i in 0..n {
        let lo = i.saturating_sub(half);
        let hi = (i + half).min(n - 1);
        let full = hi - lo + 1 == window_len;
        let owned;
        let weights: &[f64] = match (&interior, full) {
            (Some(w), true) => w,
            _ => {
                owned = fit_weights(hi - lo + 1, i - lo, degree);
                &owned
            }
        };
        out[i] = weights
            .iter()
            .zip(&series[lo..=hi])
            .map(|(w, y)| w * y)
            .sum();
    }
    Ok(out)
}
