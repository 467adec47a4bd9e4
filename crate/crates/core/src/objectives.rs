//! Reference evaluators for the two training objectives: the modality-weighted
//! predictive synthesis loss and the contrastive correction loss. Natural log
//! throughout; averaging over a dataset is left to the caller.

use serde::{Deserialize, Serialize};

/// Row-major dense matrix.
pub type Matrix = Vec<Vec<f64>>;

const NORMALIZATION_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ObjectiveError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite input in {0}")]
    NonFiniteInput(&'static str),
    #[error("{field} out of range: {value}")]
    OutOfRange { field: &'static str, value: f64 },
    #[error("distributions have different supports ({0} vs {1})")]
    SupportMismatch(usize, usize),
    #[error("p has mass {p} at index {index} where q has none")]
    SupportViolation { index: usize, p: f64 },
    #[error("{0} is not a probability distribution")]
    InvalidDistribution(&'static str),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HpsInput {
    /// `[t][i]`: log-probability of the next state under modality `i`.
    pub log_probs: Vec<Vec<f64>>,
    pub omega: Vec<f64>,
    pub layers_theta: Vec<Matrix>,
    pub layers_ref: Vec<Matrix>,
    pub lambda: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct C3Input {
    pub alpha: Vec<f64>,
    pub log_probs_pos: Vec<f64>,
    pub pi_theta: Vec<f64>,
    pub pi_ref: Vec<f64>,
    pub lambda: f64,
}

fn finite(name: &'static str, xs: &[f64]) -> Result<(), ObjectiveError> {
    if xs.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(ObjectiveError::NonFiniteInput(name))
    }
}

fn nonnegative(name: &'static str, xs: &[f64]) -> Result<(), ObjectiveError> {
    match xs.iter().find(|x| **x < 0.0) {
        Some(v) => Err(ObjectiveError::OutOfRange { field: name, value: *v }),
        None => Ok(()),
    }
}

fn log_probs_valid(name: &'static str, xs: &[f64]) -> Result<(), ObjectiveError> {
    finite(name, xs)?;
    match xs.iter().find(|x| **x > 0.0) {
        Some(v) => Err(ObjectiveError::OutOfRange { field: name, value: *v }),
        None => Ok(()),
    }
}

fn scalar(name: &'static str, x: f64) -> Result<(), ObjectiveError> {
    finite(name, &[x])?;
    nonnegative(name, &[x])
}

fn check_matrix_pair(l: usize, a: &Matrix, b: &Matrix) -> Result<(), ObjectiveError> {
    if a.len() != b.len() {
        return Err(ObjectiveError::ShapeMismatch(format!(
            "layer {l}: {} rows vs {}",
            a.len(),
            b.len()
        )));
    }
    let cols = a.first().map_or(0, Vec::len);
    for (r, (ra, rb)) in a.iter().zip(b).enumerate() {
        if ra.len() != cols || rb.len() != cols {
            return Err(ObjectiveError::ShapeMismatch(format!("layer {l}: row {r} width")));
        }
        finite("layers", ra)?;
        finite("layers", rb)?;
    }
    Ok(())
}

/// `‖A − B‖_F`.
pub fn frobenius_distance(a: &Matrix, b: &Matrix) -> f64 {
    a.iter()
        .zip(b)
        .flat_map(|(ra, rb)| ra.iter().zip(rb).map(|(x, y)| (x - y) * (x - y)))
        .sum::<f64>()
        .sqrt()
}

impl HpsInput {
    pub fn validate(&self) -> Result<(), ObjectiveError> {
        let m = self.omega.len();
        for (t, row) in self.log_probs.iter().enumerate() {
            if row.len() != m {
                return Err(ObjectiveError::ShapeMismatch(format!(
                    "log_probs[{t}] has {} modalities, omega has {m}",
                    row.len()
                )));
            }
            log_probs_valid("log_probs", row)?;
        }
        finite("omega", &self.omega)?;
        nonnegative("omega", &self.omega)?;
        scalar("lambda", self.lambda)?;
        if self.layers_theta.len() != self.layers_ref.len() {
            return Err(ObjectiveError::ShapeMismatch(format!(
                "{} parameter layers vs {} reference layers",
                self.layers_theta.len(),
                self.layers_ref.len()
            )));
        }
        for (l, (a, b)) in self.layers_theta.iter().zip(&self.layers_ref).enumerate() {
            check_matrix_pair(l, a, b)?;
        }
        Ok(())
    }

    pub fn regularizer(&self) -> f64 {
        self.layers_theta
            .iter()
            .zip(&self.layers_ref)
            .map(|(a, b)| frobenius_distance(a, b))
            .sum()
    }
}

/// `−Σ_t Σ_i ω_i · log P[t][i] + λ Σ_l ‖Ω_l(θ) − Ω_l(θ_ref)‖_F`.
pub fn hps_loss(input: &HpsInput) -> Result<f64, ObjectiveError> {
    input.validate()?;
    let mut nll = 0.0;
    for row in &input.log_probs {
        for (w, lp) in input.omega.iter().zip(row) {
            nll -= w * lp;
        }
    }
    Ok(nll + input.lambda * input.regularizer())
}

fn distribution(name: &'static str, p: &[f64]) -> Result<(), ObjectiveError> {
    finite(name, p)?;
    if p.is_empty() || p.iter().any(|x| *x < 0.0) || (p.iter().sum::<f64>() - 1.0).abs() > NORMALIZATION_TOL {
        return Err(ObjectiveError::InvalidDistribution(name));
    }
    Ok(())
}

/// `Σ_k p_k ln(p_k / q_k)` with `0 · ln(0/q) = 0`.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> Result<f64, ObjectiveError> {
    if p.len() != q.len() {
        return Err(ObjectiveError::SupportMismatch(p.len(), q.len()));
    }
    finite("p", p)?;
    finite("q", q)?;
    let mut kl = 0.0;
    for (k, (pk, qk)) in p.iter().zip(q).enumerate() {
        if *pk == 0.0 {
            continue;
        }
        if *qk == 0.0 {
            return Err(ObjectiveError::SupportViolation { index: k, p: *pk });
        }
        kl += pk * (pk / qk).ln();
    }
    // Rounding can leave a tiny negative sum for near-identical inputs.
    Ok(kl.max(0.0))
}

impl C3Input {
    pub fn validate(&self) -> Result<(), ObjectiveError> {
        if self.alpha.len() != self.log_probs_pos.len() {
            return Err(ObjectiveError::ShapeMismatch(format!(
                "{} step weights vs {} log-probabilities",
                self.alpha.len(),
                self.log_probs_pos.len()
            )));
        }
        finite("alpha", &self.alpha)?;
        nonnegative("alpha", &self.alpha)?;
        log_probs_valid("log_probs_pos", &self.log_probs_pos)?;
        scalar("lambda", self.lambda)?;
        if self.pi_theta.len() != self.pi_ref.len() {
            return Err(ObjectiveError::SupportMismatch(self.pi_theta.len(), self.pi_ref.len()));
        }
        distribution("pi_theta", &self.pi_theta)?;
        distribution("pi_ref", &self.pi_ref)?;
        Ok(())
    }
}

/// `−Σ_t α_t · log P(y⁺_t | …) + λ · KL(π_θ ‖ π_ref)`.
pub fn c3_loss(input: &C3Input) -> Result<f64, ObjectiveError> {
    input.validate()?;
    let nll: f64 = input
        .alpha
        .iter()
        .zip(&input.log_probs_pos)
        .map(|(a, lp)| -a * lp)
        .sum();
    Ok(nll + input.lambda * kl_divergence(&input.pi_theta, &input.pi_ref)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hps_zero_case() {
        let m = vec![vec![1.0, 2.0], vec![3.0, 4.0]];
        let x = HpsInput {
            log_probs: vec![vec![0.0, 0.0]; 3],
            omega: vec![0.4, 0.6],
            layers_theta: vec![m.clone()],
            layers_ref: vec![m],
            lambda: 2.0,
        };
        assert_eq!(hps_loss(&x), Ok(0.0));
    }

    #[test]
    fn hps_frobenius_five() {
        let x = HpsInput {
            log_probs: vec![vec![0.0]],
            omega: vec![1.0],
            layers_theta: vec![vec![vec![3.0, 4.0], vec![0.0, 0.0]]],
            layers_ref: vec![vec![vec![0.0, 0.0], vec![0.0, 0.0]]],
            lambda: 1.0,
        };
        assert_eq!(hps_loss(&x), Ok(5.0));
    }

    #[test]
    fn hps_shape_errors() {
        let x = HpsInput {
            log_probs: vec![vec![0.0, -1.0]],
            omega: vec![1.0],
            layers_theta: vec![],
            layers_ref: vec![],
            lambda: 0.0,
        };
        assert!(matches!(hps_loss(&x), Err(ObjectiveError::ShapeMismatch(_))));
        let y = HpsInput {
            log_probs: vec![vec![f64::NAN]],
            omega: vec![1.0],
            ..x.clone()
        };
        assert_eq!(hps_loss(&y), Err(ObjectiveError::NonFiniteInput("log_probs")));
    }

    #[test]
    fn kl_closed_forms() {
        assert_eq!(kl_divergence(&[0.3, 0.7], &[0.3, 0.7]), Ok(0.0));
        assert_eq!(kl_divergence(&[1.0, 0.0], &[0.5, 0.5]), Ok(std::f64::consts::LN_2));
        assert!(matches!(
            kl_divergence(&[0.5, 0.5], &[1.0, 0.0]),
            Err(ObjectiveError::SupportViolation { index: 1, .. })
        ));
    }

    #[test]
    fn c3_zero_case_and_scaling() {
        let x = C3Input {
            alpha: vec![1.0, 2.0],
            log_probs_pos: vec![0.0, 0.0],
            pi_theta: vec![0.25, 0.75],
            pi_ref: vec![0.25, 0.75],
            lambda: 3.0,
        };
        assert_eq!(c3_loss(&x), Ok(0.0));
        let y = C3Input {
            log_probs_pos: vec![-0.5, -1.5],
            ..x.clone()
        };
        let z = C3Input {
            alpha: vec![3.0, 6.0],
            ..y.clone()
        };
        assert!((c3_loss(&z).unwrap() - 3.0 * c3_loss(&y).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn c3_rejects_unnormalized() {
        let x = C3Input {
            alpha: vec![1.0],
            log_probs_pos: vec![-1.0],
            pi_theta: vec![0.5, 0.6],
            pi_ref: vec![0.5, 0.5],
            lambda: 1.0,
        };
        assert_eq!(c3_loss(&x), Err(ObjectiveError::InvalidDistribution("pi_theta")));
    }
}
