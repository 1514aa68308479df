//! Kolmogorov–Smirnov tests, the normal distribution function and
//! confidence intervals.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("need at least {needed} samples, got {got}")]
    InsufficientSamples { needed: usize, got: usize },
}

pub const Z99: f64 = 2.5758293035489004;
pub const MIN_KS_SAMPLES: usize = 1000;

pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// `P(K > λ)` for the Kolmogorov distribution.
pub fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..=100 {
        let term = (-2.0 * (k * k) as f64 * lambda * lambda).exp();
        sum += sign * term;
        if term < 1e-16 * sum.abs() {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

fn p_value(d: f64, effective_n: f64) -> f64 {
    let en = effective_n.sqrt();
    kolmogorov_survival((en + 0.12 + 0.11 / en) * d)
}

fn sorted(data: &[f64]) -> Vec<f64> {
    let mut v = data.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// Two-sample statistic `sup |F_A − F_B|` with the asymptotic p-value.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<KsResult, StatsError> {
    let got = a.len().min(b.len());
    if got < MIN_KS_SAMPLES {
        return Err(StatsError::InsufficientSamples {
            needed: MIN_KS_SAMPLES,
            got,
        });
    }
    let (a, b) = (sorted(a), sorted(b));
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] == x {
            i += 1;
        }
        while j < b.len() && b[j] == x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(KsResult {
        statistic: d,
        p_value: p_value(d, na * nb / (na + nb)),
    })
}

/// One-sample statistic `sup |F_n − F|` against a continuous CDF.
pub fn ks_one_sample(sample: &[f64], cdf: impl Fn(f64) -> f64) -> Result<KsResult, StatsError> {
    if sample.is_empty() {
        return Err(StatsError::InsufficientSamples { needed: 1, got: 0 });
    }
    let s = sorted(sample);
    let n = s.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in s.iter().enumerate() {
        let f = cdf(x);
        d = d.max(f - i as f64 / n).max((i + 1) as f64 / n - f);
    }
    Ok(KsResult {
        statistic: d,
        p_value: p_value(d, n),
    })
}

/// Sample mean with standard deviation and 99% confidence radius.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MeanCi {
    pub mean: f64,
    pub sd: f64,
    pub n: usize,
    pub ci99: f64,
}

impl MeanCi {
    pub fn contains(&self, value: f64) -> bool {
        (self.mean - value).abs() <= self.ci99
    }

    /// `(mean − value)` in standard errors.
    pub fn z(&self, value: f64) -> f64 {
        let se = self.sd / (self.n as f64).sqrt();
        if se > 0.0 {
            (self.mean - value) / se
        } else if self.mean == value {
            0.0
        } else {
            f64::INFINITY.copysign(self.mean - value)
        }
    }
}

pub fn mean_ci(data: &[f64]) -> MeanCi {
    let n = data.len();
    let nf = n as f64;
    let mean = data.iter().sum::<f64>() / nf;
    let var = if n > 1 {
        data.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (nf - 1.0)
    } else {
        0.0
    };
    let sd = var.sqrt();
    MeanCi {
        mean,
        sd,
        n,
        ci99: Z99 * sd / nf.sqrt(),
    }
}

/// Sample variance (unbiased).
pub fn variance(data: &[f64]) -> f64 {
    mean_ci(data).sd.powi(2)
}
