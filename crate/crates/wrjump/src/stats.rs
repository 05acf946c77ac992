//! Small statistical test helpers: chi-square goodness of fit,
//! Kolmogorov-Smirnov against the uniform law, and moment utilities.

use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Upper-tail p-value of a chi-square statistic with `dof` degrees of freedom.
pub fn chi_square_p_value(stat: f64, dof: f64) -> f64 {
    if dof <= 0.0 {
        return 1.0;
    }
    let dist = ChiSquared::new(dof).expect("positive dof");
    1.0 - dist.cdf(stat)
}

/// Chi-square goodness-of-fit p-value for observed bin counts against
/// expected counts. Adjacent bins are merged until every expected count is
/// at least 5, the usual validity rule.
pub fn chi_square_gof(observed: &[f64], expected: &[f64]) -> f64 {
    assert_eq!(observed.len(), expected.len());
    let mut obs = Vec::new();
    let mut exp = Vec::new();
    let (mut o_acc, mut e_acc) = (0.0, 0.0);
    for (&o, &e) in observed.iter().zip(expected) {
        o_acc += o;
        e_acc += e;
        if e_acc >= 5.0 {
            obs.push(o_acc);
            exp.push(e_acc);
            o_acc = 0.0;
            e_acc = 0.0;
        }
    }
    if e_acc > 0.0 {
        if let (Some(lo), Some(le)) = (obs.last_mut(), exp.last_mut()) {
            *lo += o_acc;
            *le += e_acc;
        } else {
            obs.push(o_acc);
            exp.push(e_acc);
        }
    }
    if obs.len() < 2 {
        return 1.0;
    }
    let stat: f64 = obs
        .iter()
        .zip(&exp)
        .map(|(&o, &e)| (o - e) * (o - e) / e)
        .sum();
    chi_square_p_value(stat, (obs.len() - 1) as f64)
}

/// Chi-square test that CDF-transformed samples `u in [0, 1]` are uniform,
/// using `bins` equiprobable bins.
pub fn chi_square_uniformized(u: &[f64], bins: usize) -> f64 {
    let mut observed = vec![0.0_f64; bins];
    for &v in u {
        let b = ((v * bins as f64) as usize).min(bins - 1);
        observed[b] += 1.0;
    }
    let expected = vec![u.len() as f64 / bins as f64; bins];
    chi_square_gof(&observed, &expected)
}

/// Two-sided Kolmogorov-Smirnov p-value for samples against the uniform law
/// on `[0, 1]`. Uses the asymptotic Kolmogorov distribution with the
/// small-sample correction of Stephens.
pub fn ks_uniform_p_value(samples: &[f64]) -> (f64, f64) {
    let n = samples.len();
    if n == 0 {
        return (0.0, 1.0);
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let nf = n as f64;
    let mut d = 0.0_f64;
    for (i, &u) in sorted.iter().enumerate() {
        let hi = (i + 1) as f64 / nf - u;
        let lo = u - i as f64 / nf;
        d = d.max(hi).max(lo);
    }
    let sqrt_n = nf.sqrt();
    let lambda = (sqrt_n + 0.12 + 0.11 / sqrt_n) * d;
    (d, kolmogorov_q(lambda))
}

/// Complementary CDF of the Kolmogorov distribution,
/// `Q(lambda) = 2 sum_{j>=1} (-1)^{j-1} exp(-2 j^2 lambda^2)`.
fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 1e-8 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for j in 1..=100 {
        let term = (-2.0 * (j as f64) * (j as f64) * lambda * lambda).exp();
        sum += sign * term;
        sign = -sign;
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Sample mean.
pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|&x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64
}

/// Standard error of the sample mean.
pub fn standard_error(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    (variance(xs) / xs.len() as f64).sqrt()
}
