use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

pub const DEFAULT_LEAKY_SLOPE: f64 = 0.01;

/// Elementwise nonlinearity. Derivatives are taken at the pre-activation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Relu,
    LeakyRelu(f64),
    Tanh,
    Sigmoid,
    /// Heaviside forward; straight-through derivative 1 on `|x| <= 1`.
    BinaryStep,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Relu => x.max(0.0),
            Activation::LeakyRelu(slope) => {
                if x > 0.0 {
                    x
                } else {
                    slope * x
                }
            }
            Activation::Tanh => x.tanh(),
            Activation::Sigmoid => sigmoid(x),
            Activation::BinaryStep => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    #[inline]
    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::LeakyRelu(slope) => {
                if x > 0.0 {
                    1.0
                } else {
                    slope
                }
            }
            Activation::Tanh => {
                let t = x.tanh();
                1.0 - t * t
            }
            Activation::Sigmoid => {
                let s = sigmoid(x);
                s * (1.0 - s)
            }
            Activation::BinaryStep => {
                if x.abs() <= 1.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Activation::Identity => f.write_str("identity"),
            Activation::Relu => f.write_str("relu"),
            Activation::LeakyRelu(s) if *s == DEFAULT_LEAKY_SLOPE => f.write_str("leaky_relu"),
            Activation::LeakyRelu(s) => write!(f, "leaky_relu:{s}"),
            Activation::Tanh => f.write_str("tanh"),
            Activation::Sigmoid => f.write_str("sigmoid"),
            Activation::BinaryStep => f.write_str("binary_step"),
        }
    }
}

impl FromStr for Activation {
    type Err = Error;

    /// Accepts `identity`, `relu`, `leaky_relu[:slope]`, `tanh`, `sigmoid`,
    /// `binary_step`.
    fn from_str(s: &str) -> Result<Self, Error> {
        let s = s.trim();
        let (name, arg) = match s.split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => (s, None),
        };
        let act = match (name, arg) {
            ("identity" | "linear", None) => Activation::Identity,
            ("relu", None) => Activation::Relu,
            ("leaky_relu", None) => Activation::LeakyRelu(DEFAULT_LEAKY_SLOPE),
            ("leaky_relu", Some(a)) => {
                let slope: f64 = a.parse().map_err(|_| Error::InvalidArgument(format!("bad leaky_relu slope {a:?}")))?;
                if !slope.is_finite() {
                    return Err(Error::InvalidArgument(format!("bad leaky_relu slope {a:?}")));
                }
                Activation::LeakyRelu(slope)
            }
            ("tanh", None) => Activation::Tanh,
            ("sigmoid", None) => Activation::Sigmoid,
            ("binary_step", None) => Activation::BinaryStep,
            _ => return Err(Error::InvalidArgument(format!("unknown activation {s:?}"))),
        };
        Ok(act)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_forms() {
        assert!((Activation::LeakyRelu(0.01).apply(-2.0) + 0.02).abs() < 1e-15);
        assert_eq!(Activation::Tanh.apply(0.0), 0.0);
        assert_eq!(Activation::Tanh.derivative(0.0), 1.0);
        for x in [-1.0f64, 0.0, 1.0] {
            assert!((Activation::Sigmoid.apply(x) - 1.0 / (1.0 + (-x).exp())).abs() <= 1e-12);
        }
        assert_eq!(Activation::BinaryStep.apply(0.3), 1.0);
        assert_eq!(Activation::BinaryStep.derivative(1.5), 0.0);
        assert_eq!(Activation::BinaryStep.derivative(-0.5), 1.0);
    }

    #[test]
    fn parse_and_display() {
        for s in ["identity", "relu", "leaky_relu", "leaky_relu:0.2", "tanh", "sigmoid", "binary_step"] {
            let a: Activation = s.parse().unwrap();
            assert_eq!(a.to_string(), s);
        }
        assert!("swish".parse::<Activation>().is_err());
        assert!("relu:3".parse::<Activation>().is_err());
    }
}
