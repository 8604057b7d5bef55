//! Task losses and their first three derivatives with respect to the raw
//! margin.
//!
//! Multiclass derivatives are the diagonal of the softmax cross-entropy
//! Hessian chain: each class margin is treated as its own scalar output.

use serde::{Deserialize, Serialize};

use super::dataset::TaskKind;
use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossFamily {
    /// `0.5 * (y - f)^2`
    SquaredError,
    /// Negative log-likelihood of `sigmoid(f)` for `y in {0, 1}`.
    Logistic,
    /// Negative log of the softmax probability of class `y`.
    Softmax,
}

/// `(g, h, k)`: first, second and third derivative of the loss.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Derivatives {
    pub g: f64,
    pub h: f64,
    pub k: f64,
}

impl LossFamily {
    pub fn for_task(task: TaskKind) -> Self {
        match task {
            TaskKind::Regression => LossFamily::SquaredError,
            TaskKind::Binary => LossFamily::Logistic,
            TaskKind::Multiclass => LossFamily::Softmax,
        }
    }

    pub fn task(self) -> TaskKind {
        match self {
            LossFamily::SquaredError => TaskKind::Regression,
            LossFamily::Logistic => TaskKind::Binary,
            LossFamily::Softmax => TaskKind::Multiclass,
        }
    }

    /// Checks that `(y, margins)` is a legal argument pair.
    pub fn validate(self, y: f64, margins: &[f64]) -> Result<()> {
        if margins.is_empty() || margins.iter().any(|m| !m.is_finite()) {
            return Err(invalid("raw margins must be finite and non-empty"));
        }
        match self {
            LossFamily::SquaredError => {
                if margins.len() != 1 || !y.is_finite() {
                    return Err(invalid("squared error needs one margin and a finite target"));
                }
            }
            LossFamily::Logistic => {
                if margins.len() != 1 || !(y == 0.0 || y == 1.0) {
                    return Err(invalid(format!(
                        "logistic loss needs one margin and a target in {{0, 1}}, got {y}"
                    )));
                }
            }
            LossFamily::Softmax => {
                if margins.len() < 2 || y < 0.0 || y.fract() != 0.0 || y as usize >= margins.len() {
                    return Err(invalid(format!(
                        "softmax loss needs >= 2 margins and a class index below {}, got {y}",
                        margins.len()
                    )));
                }
            }
        }
        Ok(())
    }

    /// Loss value `l(y, f)`.
    pub fn value(self, y: f64, margins: &[f64]) -> Result<f64> {
        self.validate(y, margins)?;
        Ok(self.value_unchecked(y, margins))
    }

    pub(crate) fn value_unchecked(self, y: f64, margins: &[f64]) -> f64 {
        match self {
            LossFamily::SquaredError => {
                let r = y - margins[0];
                0.5 * r * r
            }
            LossFamily::Logistic => {
                let f = margins[0];
                f.max(0.0) + (-f.abs()).exp().ln_1p() - y * f
            }
            LossFamily::Softmax => {
                let max = margins.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let lse = max + margins.iter().map(|m| (m - max).exp()).sum::<f64>().ln();
                lse - margins[y as usize]
            }
        }
    }

    /// Per-output derivatives at `margins`.
    pub fn derivatives(self, y: f64, margins: &[f64]) -> Result<Vec<Derivatives>> {
        self.validate(y, margins)?;
        let mut out = vec![Derivatives::default(); margins.len()];
        self.derivatives_into(y, margins, &mut out);
        Ok(out)
    }

    pub(crate) fn derivatives_into(self, y: f64, margins: &[f64], out: &mut [Derivatives]) {
        match self {
            LossFamily::SquaredError => {
                out[0] = Derivatives {
                    g: margins[0] - y,
                    h: 1.0,
                    k: 0.0,
                };
            }
            LossFamily::Logistic => {
                let s = sigmoid(margins[0]);
                let h = s * (1.0 - s);
                out[0] = Derivatives {
                    g: s - y,
                    h,
                    k: h * (1.0 - 2.0 * s),
                };
            }
            LossFamily::Softmax => {
                let probs = softmax(margins);
                let label = y as usize;
                for (c, (p, d)) in probs.iter().zip(out.iter_mut()).enumerate() {
                    let h = p * (1.0 - p);
                    *d = Derivatives {
                        g: p - if c == label { 1.0 } else { 0.0 },
                        h,
                        k: h * (1.0 - 2.0 * p),
                    };
                }
            }
        }
    }

    /// First derivative only, per output.
    pub(crate) fn gradient_into(self, y: f64, margins: &[f64], out: &mut [f64]) {
        match self {
            LossFamily::SquaredError => out[0] = margins[0] - y,
            LossFamily::Logistic => out[0] = sigmoid(margins[0]) - y,
            LossFamily::Softmax => {
                let probs = softmax(margins);
                for (c, (p, o)) in probs.iter().zip(out.iter_mut()).enumerate() {
                    *o = p - if c == y as usize { 1.0 } else { 0.0 };
                }
            }
        }
    }

    /// Maps raw margins to the prediction space.
    pub fn activate(self, margins: &[f64]) -> Vec<f64> {
        match self {
            LossFamily::SquaredError => margins.to_vec(),
            LossFamily::Logistic => vec![sigmoid(margins[0])],
            LossFamily::Softmax => softmax(margins),
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn softmax(margins: &[f64]) -> Vec<f64> {
    let max = margins.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = margins.iter().map(|m| (m - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const LN2: f64 = std::f64::consts::LN_2;

    #[test]
    fn loss_values() {
        assert_eq!(LossFamily::SquaredError.value(2.0, &[2.0]).unwrap(), 0.0);
        assert!((LossFamily::Logistic.value(1.0, &[0.0]).unwrap() - LN2).abs() < 1e-15);
        assert_eq!(LossFamily::SquaredError.value(0.0, &[3.0]).unwrap(), 4.5);
        let three = LossFamily::Softmax.value(1.0, &[0.0, 0.0, 0.0]).unwrap();
        assert!((three - 3f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn derivative_values() {
        let d = LossFamily::SquaredError.derivatives(2.0, &[1.0]).unwrap()[0];
        assert_eq!((d.g, d.h, d.k), (-1.0, 1.0, 0.0));
        let d = LossFamily::Logistic.derivatives(1.0, &[0.0]).unwrap()[0];
        assert_eq!((d.g, d.h, d.k), (-0.5, 0.25, 0.0));
        let d = LossFamily::Logistic.derivatives(0.0, &[40.0]).unwrap()[0];
        assert!((d.g - 1.0).abs() < 1e-12 && d.h < 1e-12 && d.k.abs() < 1e-12);
    }

    #[test]
    fn mismatched_targets_are_rejected() {
        assert!(LossFamily::Logistic.value(2.0, &[0.0]).is_err());
        assert!(LossFamily::Softmax.value(3.0, &[0.0, 1.0, 2.0]).is_err());
        assert!(LossFamily::SquaredError.value(1.0, &[0.0, 1.0]).is_err());
        assert!(LossFamily::SquaredError.value(1.0, &[f64::INFINITY]).is_err());
    }

    #[test]
    fn logistic_is_stable_at_extremes() {
        let v = LossFamily::Logistic.value(1.0, &[-800.0]).unwrap();
        assert!((v - 800.0).abs() < 1e-9);
        assert!(LossFamily::Logistic.value(0.0, &[-800.0]).unwrap() < 1e-300);
    }

    #[test]
    fn activation() {
        assert_eq!(LossFamily::Logistic.activate(&[0.0]), vec![0.5]);
        let p = LossFamily::Softmax.activate(&[1.0, 1.0]);
        assert_eq!(p, vec![0.5, 0.5]);
    }
}
