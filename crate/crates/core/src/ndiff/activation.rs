use serde::{Deserialize, Serialize};

/// Values passed to [`Activation::Logit`] are clamped to `[LOGIT_EPS, 1 - LOGIT_EPS]`.
pub const LOGIT_EPS: f64 = 1e-9;

/// Pointwise nonlinearity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Activation {
    Identity,
    LeakyRelu { slope: f64 },
    Sigmoid,
    Tanh,
    /// Inverse of the logistic sigmoid; maps `(0, 1)` onto the real line.
    Logit,
}

impl Activation {
    pub const fn leaky() -> Self {
        Activation::LeakyRelu { slope: 0.2 }
    }

    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Identity => z,
            Activation::LeakyRelu { slope } => {
                if z > 0.0 {
                    z
                } else {
                    slope * z
                }
            }
            Activation::Sigmoid => sigmoid(z),
            Activation::Tanh => z.tanh(),
            Activation::Logit => {
                let p = z.clamp(LOGIT_EPS, 1.0 - LOGIT_EPS);
                (p / (1.0 - p)).ln()
            }
        }
    }

    /// Derivative at pre-activation `z`, given the already computed output `y`.
    pub fn derivative(self, z: f64, y: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::LeakyRelu { slope } => {
                if z > 0.0 {
                    1.0
                } else {
                    slope
                }
            }
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Tanh => 1.0 - y * y,
            Activation::Logit => {
                if (LOGIT_EPS..=1.0 - LOGIT_EPS).contains(&z) {
                    1.0 / (z * (1.0 - z))
                } else {
                    0.0
                }
            }
        }
    }

    /// Piecewise-linear activations have zero second derivative almost
    /// everywhere, which the gradient-penalty computation relies on.
    pub fn is_piecewise_linear(self) -> bool {
        matches!(self, Activation::Identity | Activation::LeakyRelu { .. })
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}
