use super::EvalError;

/// Positive-class F1 together with the zero-division flag.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FScore {
    pub value: f64,
    /// Precision + recall was zero (no true positives); `value` is 0 by
    /// convention.
    pub zero_division: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl Confusion {
    pub fn from_labels(pred: &[u8], gold: &[u8]) -> Result<Self, EvalError> {
        check_len(pred.len(), gold.len())?;
        let mut c = Confusion::default();
        for (i, (&p, &g)) in pred.iter().zip(gold).enumerate() {
            if p > 1 || g > 1 {
                return Err(EvalError::NonBinary { index: i });
            }
            match (p, g) {
                (1, 1) => c.tp += 1,
                (1, 0) => c.fp += 1,
                (0, 0) => c.tn += 1,
                _ => c.fn_ += 1,
            }
        }
        Ok(c)
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }
}

fn check_len(a: usize, b: usize) -> Result<(), EvalError> {
    if a == b {
        Ok(())
    } else {
        Err(EvalError::LengthMismatch {
            predictions: a,
            gold: b,
        })
    }
}

/// Harmonic mean of precision and recall on class 1.
pub fn f_score(pred: &[u8], gold: &[u8]) -> Result<FScore, EvalError> {
    let c = Confusion::from_labels(pred, gold)?;
    // F1 = 2TP / (2TP + FP + FN); zero exactly when precision + recall is
    // zero or undefined.
    if c.tp == 0 {
        return Ok(FScore {
            value: 0.0,
            zero_division: true,
        });
    }
    let precision = c.tp as f64 / (c.tp + c.fp) as f64;
    let recall = c.tp as f64 / (c.tp + c.fn_) as f64;
    Ok(FScore {
        value: 2.0 * precision * recall / (precision + recall),
        zero_division: false,
    })
}

pub fn accuracy(pred: &[u8], gold: &[u8]) -> Result<f64, EvalError> {
    let c = Confusion::from_labels(pred, gold)?;
    if c.total() == 0 {
        return Err(EvalError::Empty);
    }
    Ok((c.tp + c.tn) as f64 / c.total() as f64)
}

pub fn rmse(pred: &[f64], gold: &[f64]) -> Result<f64, EvalError> {
    check_len(pred.len(), gold.len())?;
    if pred.is_empty() {
        return Err(EvalError::Empty);
    }
    if let Some(i) = pred.iter().chain(gold).position(|v| !v.is_finite()) {
        return Err(EvalError::NonFinite { index: i % pred.len() });
    }
    let mse = pred.iter().zip(gold).map(|(p, g)| (p - g) * (p - g)).sum::<f64>() / pred.len() as f64;
    Ok(libm::sqrt(mse))
}
