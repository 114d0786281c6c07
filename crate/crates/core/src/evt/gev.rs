//! Generalized extreme value distribution: evaluation and fitting.

use serde::{Deserialize, Serialize};

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;
const GUMBEL_EPS: f64 = 1e-8;

/// Location, scale and shape of a GEV distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GevParams {
    pub mu: f64,
    pub sigma: f64,
    pub xi: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitMethod {
    MaximumLikelihood,
    /// Method-of-moments Gumbel estimate, used when the optimizer fails.
    MomentsGumbel,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GevFit {
    pub params: GevParams,
    pub method: FitMethod,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FitError {
    #[error("{n} values, at least {min} needed to fit")]
    InsufficientData { n: usize, min: usize },
    #[error("all values are equal")]
    DegenerateCounts,
}

impl GevParams {
    /// `ln F(y)` of the standard GEV CDF, with the support guard applied.
    pub fn ln_cdf(&self, y: f64) -> f64 {
        let z = (y - self.mu) / self.sigma;
        if self.xi.abs() < GUMBEL_EPS {
            return -(-z).exp();
        }
        let t = 1.0 + self.xi * z;
        if t <= 0.0 {
            return if self.xi > 0.0 { f64::NEG_INFINITY } else { 0.0 };
        }
        -t.powf(-1.0 / self.xi)
    }

    /// Standard GEV CDF `exp(-[1 + xi (y - mu) / sigma]^(-1/xi))`.
    pub fn cdf(&self, y: f64) -> f64 {
        self.ln_cdf(y).exp()
    }

    /// Inverse CDF.
    pub fn quantile(&self, p: f64) -> f64 {
        let l = -p.ln();
        if self.xi.abs() < GUMBEL_EPS {
            self.mu - self.sigma * l.ln()
        } else {
            self.mu + self.sigma * (l.powf(-self.xi) - 1.0) / self.xi
        }
    }

    /// Negative log-likelihood of `ys`; infinite outside the support.
    pub fn neg_log_likelihood(&self, ys: &[f64]) -> f64 {
        if !(self.sigma > 0.0) || !self.sigma.is_finite() {
            return f64::INFINITY;
        }
        let n = ys.len() as f64;
        let ln_sigma = self.sigma.ln();
        let mut acc = n * ln_sigma;
        if self.xi.abs() < GUMBEL_EPS {
            for &y in ys {
                let z = (y - self.mu) / self.sigma;
                acc += z + (-z).exp();
            }
        } else {
            let inv = 1.0 / self.xi;
            for &y in ys {
                let t = 1.0 + self.xi * (y - self.mu) / self.sigma;
                if t <= 0.0 {
                    return f64::INFINITY;
                }
                let lt = t.ln();
                acc += (1.0 + inv) * lt + (-inv * lt).exp();
            }
        }
        if acc.is_finite() {
            acc
        } else {
            f64::INFINITY
        }
    }
}

/// Rarity of count `x` under params fitted to negated counts: `F(-x)`.
/// Non-increasing in `x`.
pub fn gev_tail(x: f64, params: &GevParams) -> f64 {
    params.cdf(-x)
}

/// `ln gev_tail(x)`, finite for all but support-excluded inputs.
pub fn ln_gev_tail(x: f64, params: &GevParams) -> f64 {
    params.ln_cdf(-x)
}

/// The expression `(1/sigma) [1 + xi (y - mu) / sigma]^(-1/xi)` evaluated at
/// `y = -x`, kept for comparison with the CDF form. Zero outside the support.
pub fn printed_form(x: f64, params: &GevParams) -> f64 {
    let y = -x;
    let z = (y - params.mu) / params.sigma;
    let core = if params.xi.abs() < GUMBEL_EPS {
        (-z).exp()
    } else {
        let t = 1.0 + params.xi * z;
        if t <= 0.0 {
            return 0.0;
        }
        t.powf(-1.0 / params.xi)
    };
    core / params.sigma
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    (mean, var.sqrt())
}

/// Method-of-moments Gumbel estimate.
pub fn gumbel_moments(samples: &[f64]) -> GevParams {
    let (mean, sd) = mean_std(samples);
    let sigma = (6f64.sqrt() * sd / std::f64::consts::PI).max(f64::MIN_POSITIVE);
    GevParams {
        mu: mean - EULER_GAMMA * sigma,
        sigma,
        xi: 0.0,
    }
}

/// Fits a GEV to block maxima by maximum likelihood.
pub fn fit_gev_maxima(samples: &[f64], min_fit_size: usize) -> Result<GevFit, FitError> {
    if samples.len() < min_fit_size.max(2) {
        return Err(FitError::InsufficientData {
            n: samples.len(),
            min: min_fit_size.max(2),
        });
    }
    let first = samples[0];
    if samples.iter().all(|&x| x == first) {
        return Err(FitError::DegenerateCounts);
    }
    let start = gumbel_moments(samples);
    // The likelihood is unbounded for xi <= -1, so the search stays above it.
    let objective = |p: &[f64; 3]| {
        if p[2] <= -1.0 {
            return f64::INFINITY;
        }
        GevParams {
            mu: p[0],
            sigma: p[1].exp(),
            xi: p[2],
        }
        .neg_log_likelihood(samples)
    };
    let mut best: Option<([f64; 3], f64)> = None;
    for xi0 in [0.1, -0.1, 0.0] {
        let x0 = [start.mu, start.sigma.ln(), xi0];
        if !objective(&x0).is_finite() {
            continue;
        }
        let steps = [0.2 * start.sigma, 0.2, 0.1];
        if let Some((x, f)) = nelder_mead(&objective, x0, steps, 4000, 1e-10) {
            if best.is_none_or(|(_, bf)| f < bf) {
                best = Some((x, f));
            }
        }
    }
    Ok(match best {
        Some((x, f)) if f.is_finite() && x.iter().all(|v| v.is_finite()) => GevFit {
            params: GevParams {
                mu: x[0],
                sigma: x[1].exp(),
                xi: x[2],
            },
            method: FitMethod::MaximumLikelihood,
        },
        _ => GevFit {
            params: start,
            method: FitMethod::MomentsGumbel,
        },
    })
}

/// Fits a GEV to negated values, so small values form the upper tail.
/// Returned params live in the negated domain.
pub fn fit_gev(values: &[f64], min_fit_size: usize) -> Result<GevFit, FitError> {
    let negated: Vec<f64> = values.iter().map(|v| -v).collect();
    fit_gev_maxima(&negated, min_fit_size)
}

/// Minimizes `f` with the Nelder-Mead simplex method. Returns `None` when no
/// finite point was ever found or the iteration budget ran out.
fn nelder_mead(
    f: &impl Fn(&[f64; 3]) -> f64,
    x0: [f64; 3],
    steps: [f64; 3],
    max_iter: usize,
    tol: f64,
) -> Option<([f64; 3], f64)> {
    const N: usize = 3;
    let mut simplex: Vec<([f64; 3], f64)> = Vec::with_capacity(N + 1);
    simplex.push((x0, f(&x0)));
    for i in 0..N {
        let mut x = x0;
        x[i] += steps[i];
        simplex.push((x, f(&x)));
    }
    let sort = |s: &mut Vec<([f64; 3], f64)>| s.sort_by(|a, b| a.1.total_cmp(&b.1));
    for _ in 0..max_iter {
        sort(&mut simplex);
        let (best, worst) = (simplex[0].1, simplex[N].1);
        let x_best = simplex[0].0;
        let spread = simplex
            .iter()
            .skip(1)
            .flat_map(|(x, _)| {
                (0..N).map(move |i| (x[i] - x_best[i]).abs() / (1.0 + x_best[i].abs()))
            })
            .fold(0.0f64, f64::max);
        if best.is_finite() && (worst - best).abs() <= tol * (1.0 + best.abs()) && spread < 1e-6 {
            return Some(simplex[0]);
        }
        let mut centroid = [0.0; 3];
        for (x, _) in &simplex[..N] {
            for i in 0..N {
                centroid[i] += x[i] / N as f64;
            }
        }
        let along = |t: f64| {
            let mut p = [0.0; 3];
            for i in 0..N {
                p[i] = centroid[i] + t * (simplex[N].0[i] - centroid[i]);
            }
            p
        };
        let xr = along(-1.0);
        let fr = f(&xr);
        if fr < simplex[0].1 {
            let xe = along(-2.0);
            let fe = f(&xe);
            simplex[N] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[N - 1].1 {
            simplex[N] = (xr, fr);
        } else {
            let (xc, fc) = if fr < simplex[N].1 {
                let xc = along(-0.5);
                (xc, f(&xc))
            } else {
                let xc = along(0.5);
                (xc, f(&xc))
            };
            if fc < simplex[N].1.min(fr) {
                simplex[N] = (xc, fc);
            } else {
                let x_best = simplex[0].0;
                for (x, fx) in simplex.iter_mut().skip(1) {
                    for i in 0..N {
                        x[i] = x_best[i] + 0.5 * (x[i] - x_best[i]);
                    }
                    *fx = f(x);
                }
            }
        }
    }
    None
}
