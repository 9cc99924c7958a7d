use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Highest expansion order accepted by [`taylor_coefficients`].
pub const MAX_ORDER: usize = 8;

/// Output nonlinearity of the perceptron.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    /// `erf(λ/√2)`.
    ErfScaled,
    /// Polynomial with the given Taylor coefficients `β₀, β₁, ...`.
    Custom(Vec<f64>),
}

// β_k of tanh for k = 0..=9
const TANH: [f64; 10] = [
    0.0,
    1.0,
    0.0,
    -1.0 / 3.0,
    0.0,
    2.0 / 15.0,
    0.0,
    -17.0 / 315.0,
    0.0,
    62.0 / 2835.0,
];

impl Activation {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "tanh" => Ok(Activation::Tanh),
            "erf" | "erf_scaled" => Ok(Activation::ErfScaled),
            _ => Err(Error::Unknown {
                kind: "activation",
                name: s.to_string(),
            }),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
            Activation::ErfScaled => "erf_scaled",
            Activation::Custom(_) => "custom",
        }
    }

    pub fn value(&self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::ErfScaled => libm::erf(x / std::f64::consts::SQRT_2),
            Activation::Custom(c) => c.iter().rev().fold(0.0, |acc, b| acc * x + b),
        }
    }

    pub fn derivative(&self, x: f64) -> f64 {
        match self {
            Activation::Tanh => {
                let t = x.tanh();
                1.0 - t * t
            }
            Activation::ErfScaled => (2.0 / std::f64::consts::PI).sqrt() * (-0.5 * x * x).exp(),
            Activation::Custom(c) => c
                .iter()
                .enumerate()
                .skip(1)
                .rev()
                .fold(0.0, |acc, (k, b)| acc * x + k as f64 * b),
        }
    }

    /// `β_k = σ^{(k)}(0)/k!` for `k = 0..n`.
    pub fn taylor(&self, n: usize) -> Vec<f64> {
        match self {
            Activation::Tanh => (0..n).map(|k| TANH.get(k).copied().unwrap_or(f64::NAN)).collect(),
            Activation::ErfScaled => {
                let s = (2.0 / std::f64::consts::PI).sqrt();
                (0..n)
                    .map(|k| {
                        if k % 2 == 0 {
                            return 0.0;
                        }
                        let j = (k - 1) / 2;
                        let fact: f64 = (1..=j).map(|i| i as f64).product();
                        let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
                        sign * s / (2f64.powi(j as i32) * fact * k as f64)
                    })
                    .collect()
            }
            Activation::Custom(c) => (0..n).map(|k| c.get(k).copied().unwrap_or(0.0)).collect(),
        }
    }
}

/// Taylor data of the activation truncated at order `K`.
///
/// `beta[k]` and `beta_tilde[k] = k β_k` for `k = 0..=K+1`;
/// `gamma[k] = Σ_{m=0}^{k} β_m β̃_{k−m+1}` for `k = 0..=K`, the coefficients
/// of `σ(λ)σ'(λ)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ActivationExpansion {
    pub activation: Activation,
    pub order: usize,
    pub beta: Vec<f64>,
    pub beta_tilde: Vec<f64>,
    pub gamma: Vec<f64>,
}

pub fn taylor_coefficients(activation: &Activation, order: usize) -> Result<ActivationExpansion> {
    if order > MAX_ORDER {
        return Err(Error::InvalidParameter(format!(
            "expansion order {order} exceeds {MAX_ORDER}"
        )));
    }
    let beta = activation.taylor(order + 2);
    let beta_tilde: Vec<f64> = beta.iter().enumerate().map(|(k, b)| k as f64 * b).collect();
    let gamma = (0..=order)
        .map(|k| (0..=k).map(|m| beta[m] * beta_tilde[k - m + 1]).sum())
        .collect();
    Ok(ActivationExpansion {
        activation: activation.clone(),
        order,
        beta,
        beta_tilde,
        gamma,
    })
}

impl ActivationExpansion {
    /// Copy with every term above `λ^k` set to zero. `β̃_{k+1}` belongs to
    /// `σ'(λ)` at `λ^k` and is kept.
    pub fn truncated(&self, k: usize) -> Self {
        let mut e = self.clone();
        for (i, g) in e.gamma.iter_mut().enumerate() {
            if i > k {
                *g = 0.0;
            }
        }
        for (i, b) in e.beta_tilde.iter_mut().enumerate() {
            if i > k + 1 {
                *b = 0.0;
            }
        }
        for (i, b) in e.beta.iter_mut().enumerate() {
            if i > k {
                *b = 0.0;
            }
        }
        e
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tanh_coefficients() {
        let e = taylor_coefficients(&Activation::Tanh, 3).unwrap();
        assert_eq!(e.gamma[0], 0.0);
        assert_eq!(e.gamma[1], 1.0);
        assert_eq!(e.gamma[2], 0.0);
        assert!((e.gamma[3] + 4.0 / 3.0).abs() < 1e-15);
        assert_eq!(e.beta_tilde[3], -1.0);
        for (k, (b, bt)) in e.beta.iter().zip(&e.beta_tilde).enumerate() {
            assert_eq!(*bt, k as f64 * b);
        }
    }

    #[test]
    fn gamma_low_orders_match_closed_form() {
        let act = Activation::Custom(vec![0.3, 1.1, -0.7, 0.2]);
        let e = taylor_coefficients(&act, 2).unwrap();
        let b = &e.beta;
        assert!((e.gamma[0] - b[0] * b[1]).abs() < 1e-15);
        assert!((e.gamma[1] - (b[1] * b[1] + 2.0 * b[0] * b[2])).abs() < 1e-15);
    }

    #[test]
    fn erf_coefficients() {
        let e = taylor_coefficients(&Activation::ErfScaled, 2).unwrap();
        let s = (2.0 / std::f64::consts::PI).sqrt();
        assert!((e.beta[1] - s).abs() < 1e-15);
        assert!((e.beta[3] + s / 6.0).abs() < 1e-15);
        assert_eq!(e.beta[2], 0.0);
    }

    // Taylor coefficients of tanh·sech² from central finite differences of
    // the function itself.
    #[test]
    fn gamma3_against_finite_differences() {
        let f = |x: f64| x.tanh() * (1.0 - x.tanh().powi(2));
        let h: f64 = 0.01;
        // f'''(0)/6 with a 7-point stencil
        let d3 = (-f(3.0 * h) + 8.0 * f(2.0 * h) - 13.0 * f(h) + 13.0 * f(-h) - 8.0 * f(-2.0 * h)
            + f(-3.0 * h))
            / (8.0 * h.powi(3));
        let e = taylor_coefficients(&Activation::Tanh, 3).unwrap();
        assert!((d3 / 6.0 - e.gamma[3]).abs() < 1e-4, "{}", d3 / 6.0);
        let d1 = (f(h) - f(-h)) / (2.0 * h);
        assert!((d1 - e.gamma[1]).abs() < 1e-2);
    }

    #[test]
    fn series_values_agree_with_functions() {
        for act in [Activation::Tanh, Activation::ErfScaled] {
            let b = act.taylor(10);
            let x: f64 = 0.1;
            let series: f64 = b.iter().enumerate().map(|(k, c)| c * x.powi(k as i32)).sum();
            assert!((series - act.value(x)).abs() < 1e-12);
        }
    }

    #[test]
    fn order_limit() {
        assert!(taylor_coefficients(&Activation::Tanh, 9).is_err());
        assert!(Activation::parse("relu").is_err());
    }
}
