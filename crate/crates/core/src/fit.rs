//! Small least-squares fits for scan curves: a sinusoid on a pedestal
//! (polarization fringes) and a Gaussian on a pedestal (delay dips/peaks).

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FitError {
    #[error("fit needs at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("normal equations are singular")]
    Singular,
    #[error("non-finite input data")]
    NonFinite,
}

/// Parameters and their covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct FitResult<const P: usize> {
    pub params: [f64; P],
    pub covariance: [[f64; P]; P],
    pub residual_sum_squares: f64,
}

impl<const P: usize> FitResult<P> {
    pub fn stderr(&self, i: usize) -> f64 {
        self.covariance[i][i].max(0.0).sqrt()
    }
}

/// Inverse of a symmetric positive definite matrix by Cholesky.
fn spd_inverse<const P: usize>(m: &[[f64; P]; P]) -> Result<[[f64; P]; P], FitError> {
    let mut l = [[0.0; P]; P];
    for i in 0..P {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i][k] * l[j][k]).sum();
            if i == j {
                let d = m[i][i] - s;
                if !(d > 1e-13 * m[i][i].abs()) || d <= 0.0 {
                    return Err(FitError::Singular);
                }
                l[i][i] = d.sqrt();
            } else {
                l[i][j] = (m[i][j] - s) / l[j][j];
            }
        }
    }
    // Invert L, then A⁻¹ = L⁻ᵀ L⁻¹.
    let mut linv = [[0.0; P]; P];
    for i in 0..P {
        linv[i][i] = 1.0 / l[i][i];
        for j in 0..i {
            let s: f64 = (j..i).map(|k| l[i][k] * linv[k][j]).sum();
            linv[i][j] = -s / l[i][i];
        }
    }
    let mut inv = [[0.0; P]; P];
    for i in 0..P {
        for j in 0..P {
            inv[i][j] = (i.max(j)..P).map(|k| linv[k][i] * linv[k][j]).sum();
        }
    }
    Ok(inv)
}

fn check(xs: &[f64], ys: &[f64], sigmas: Option<&[f64]>, needed: usize) -> Result<(), FitError> {
    assert_eq!(xs.len(), ys.len());
    if xs.len() < needed {
        return Err(FitError::TooFewPoints {
            needed,
            got: xs.len(),
        });
    }
    let finite = xs.iter().chain(ys).all(|v| v.is_finite())
        && sigmas.is_none_or(|s| s.iter().all(|v| v.is_finite() && *v > 0.0));
    if finite {
        Ok(())
    } else {
        Err(FitError::NonFinite)
    }
}

/// Weighted linear least squares for `y ≈ Σ p_k φ_k(x)`.
///
/// With `sigmas` the covariance is `(JᵀWJ)⁻¹`; without, it is scaled by the
/// residual variance `RSS/(n − P)`.
pub fn linear_least_squares<const P: usize>(
    xs: &[f64],
    ys: &[f64],
    sigmas: Option<&[f64]>,
    basis: impl Fn(f64) -> [f64; P],
) -> Result<FitResult<P>, FitError> {
    check(xs, ys, sigmas, P)?;
    let mut normal = [[0.0; P]; P];
    let mut rhs = [0.0; P];
    for (i, (&x, &y)) in xs.iter().zip(ys).enumerate() {
        let w = sigmas.map_or(1.0, |s| 1.0 / (s[i] * s[i]));
        let phi = basis(x);
        for j in 0..P {
            rhs[j] += w * phi[j] * y;
            for k in 0..P {
                normal[j][k] += w * phi[j] * phi[k];
            }
        }
    }
    let inv = spd_inverse(&normal)?;
    let mut params = [0.0; P];
    for j in 0..P {
        params[j] = (0..P).map(|k| inv[j][k] * rhs[k]).sum();
    }
    let mut rss = 0.0;
    let mut chi2 = 0.0;
    for (i, (&x, &y)) in xs.iter().zip(ys).enumerate() {
        let phi = basis(x);
        let r = y - (0..P).map(|k| params[k] * phi[k]).sum::<f64>();
        rss += r * r;
        chi2 += sigmas.map_or(r * r, |s| (r / s[i]).powi(2));
    }
    let covariance = match sigmas {
        Some(_) => inv,
        None => {
            let dof = (xs.len() - P).max(1) as f64;
            inv.map(|row| row.map(|v| v * chi2 / dof))
        }
    };
    Ok(FitResult {
        params,
        covariance,
        residual_sum_squares: rss,
    })
}

/// `y = c₀ + c₁ cos 2x + c₂ sin 2x`, i.e. a π-periodic `sin²` fringe on a
/// pedestal.
pub fn fit_fringe(
    xs: &[f64],
    ys: &[f64],
    sigmas: Option<&[f64]>,
) -> Result<FitResult<3>, FitError> {
    linear_least_squares(xs, ys, sigmas, |x| {
        let (s, c) = (2.0 * x).sin_cos();
        [1.0, c, s]
    })
}

/// `y = a + b·exp(−x²/w²)` with parameters `[a, b, w]`.
///
/// The width is found by minimizing the profiled residual over `w` (the
/// linear parameters are solved exactly for each trial width); the
/// covariance comes from the full three-parameter Jacobian at the optimum.
/// When that Jacobian is rank-deficient (a flat curve has no width) the
/// width variance is reported as infinite and `a`, `b` keep their
/// fixed-width covariance.
pub fn fit_gaussian_pedestal(
    xs: &[f64],
    ys: &[f64],
    sigmas: Option<&[f64]>,
) -> Result<FitResult<3>, FitError> {
    check(xs, ys, sigmas, 4)?;
    let x_scale = xs.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if x_scale == 0.0 {
        return Err(FitError::Singular);
    }
    let us: Vec<f64> = xs.iter().map(|x| x / x_scale).collect();

    let chi2_at = |w: f64| -> f64 {
        match linear_least_squares(&us, ys, sigmas, |u| [1.0, (-(u * u) / (w * w)).exp()]) {
            Ok(fit) => weighted_rss(&us, ys, sigmas, fit.params[0], fit.params[1], w),
            Err(_) => f64::INFINITY,
        }
    };

    // Coarse log grid, then golden-section refinement around the best node.
    let mut spacing = f64::INFINITY;
    let mut sorted = us.clone();
    sorted.sort_by(f64::total_cmp);
    for pair in sorted.windows(2) {
        let d = pair[1] - pair[0];
        if d > 0.0 {
            spacing = spacing.min(d);
        }
    }
    let lo = (0.25 * spacing).min(0.5).ln();
    let hi = 4.0f64.ln();
    let nodes = 400;
    let grid: Vec<f64> = (0..=nodes)
        .map(|i| lo + (hi - lo) * i as f64 / nodes as f64)
        .collect();
    let values: Vec<f64> = grid.iter().map(|&g| chi2_at(g.exp())).collect();
    let best = values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap_or(0);
    let (mut a, mut b) = (grid[best.saturating_sub(1)], grid[(best + 1).min(nodes)]);
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let (mut fc, mut fd) = (chi2_at(c.exp()), chi2_at(d.exp()));
    for _ in 0..200 {
        if (b - a).abs() < 1e-13 {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = chi2_at(c.exp());
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = chi2_at(d.exp());
        }
    }
    let w = (0.5 * (a + b)).exp();

    let linear = linear_least_squares(&us, ys, sigmas, |u| [1.0, (-(u * u) / (w * w)).exp()])?;
    let [pedestal, amplitude] = linear.params;
    let rss_scaled = weighted_rss(&us, ys, sigmas, pedestal, amplitude, w);

    // Full Jacobian in (a, b, w).
    let mut normal = [[0.0; 3]; 3];
    for (i, &u) in us.iter().enumerate() {
        let wt = sigmas.map_or(1.0, |s| 1.0 / (s[i] * s[i]));
        let e = (-(u * u) / (w * w)).exp();
        let j = [1.0, e, amplitude * e * 2.0 * u * u / (w * w * w)];
        for p in 0..3 {
            for q in 0..3 {
                normal[p][q] += wt * j[p] * j[q];
            }
        }
    }
    let dof = (us.len() - 3).max(1) as f64;
    let noise = if sigmas.is_some() {
        1.0
    } else {
        rss_scaled / dof
    };
    let covariance = match spd_inverse(&normal) {
        Ok(inv) => inv.map(|row| row.map(|v| v * noise)),
        Err(_) => {
            let c = linear.covariance;
            [
                [c[0][0], c[0][1], 0.0],
                [c[1][0], c[1][1], 0.0],
                [0.0, 0.0, f64::INFINITY],
            ]
        }
    };
    // Undo the x scaling on w.
    let mut covariance = covariance;
    for k in 0..3 {
        covariance[2][k] *= x_scale;
        covariance[k][2] *= x_scale;
    }
    let residual_sum_squares = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| {
            let r = y - pedestal - amplitude * (-(x * x) / (w * w * x_scale * x_scale)).exp();
            r * r
        })
        .sum();
    Ok(FitResult {
        params: [pedestal, amplitude, w * x_scale],
        covariance,
        residual_sum_squares,
    })
}

fn weighted_rss(us: &[f64], ys: &[f64], sigmas: Option<&[f64]>, a: f64, b: f64, w: f64) -> f64 {
    us.iter()
        .zip(ys)
        .enumerate()
        .map(|(i, (&u, &y))| {
            let r = y - a - b * (-(u * u) / (w * w)).exp();
            sigmas.map_or(r * r, |s| (r / s[i]).powi(2))
        })
        .sum()
}
