use crate::diffcore::{Scalar, Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Pearson correlation with an explicit flag for undefined cases.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PearsonR {
    /// Correlation in `[−1, 1]`; `0.0` when `degenerate`.
    pub r: f64,
    /// Set when either input is constant and the coefficient is undefined.
    pub degenerate: bool,
}

/// Standard Pearson coefficient: covariance over the product of standard
/// deviations.
pub fn pearson_r(y: &[f64], yhat: &[f64]) -> Result<PearsonR> {
    if y.len() != yhat.len() {
        return Err(Error::dim(format!(
            "pearson_r: lengths {} and {} differ",
            y.len(),
            yhat.len()
        )));
    }
    if y.len() < 2 {
        return Err(Error::dim("pearson_r: need at least 2 samples"));
    }
    let n = y.len() as f64;
    let my = y.iter().sum::<f64>() / n;
    let mp = yhat.iter().sum::<f64>() / n;
    let (mut syy, mut spp, mut syp) = (0.0, 0.0, 0.0);
    for (a, b) in y.iter().zip(yhat) {
        let (dy, dp) = (a - my, b - mp);
        syy += dy * dy;
        spp += dp * dp;
        syp += dy * dp;
    }
    let flat = |xs: &[f64], ss: f64| {
        let scale = xs.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        let tol = 4.0 * f64::EPSILON * scale;
        ss <= xs.len() as f64 * tol * tol
    };
    if flat(y, syy) || flat(yhat, spp) {
        return Ok(PearsonR {
            r: 0.0,
            degenerate: true,
        });
    }
    Ok(PearsonR {
        r: (syp / (syy.sqrt() * spp.sqrt())).clamp(-1.0, 1.0),
        degenerate: false,
    })
}

/// Handles of the three loss terms recorded for one prediction.
#[derive(Clone, Copy, Debug)]
pub struct LossTerms {
    pub mse: Var,
    pub corr: Var,
    pub total: Var,
}

/// `mse + α·corr_loss`, recorded on one tape so a single backward pass
/// covers both terms.
pub fn composite_loss<S: Scalar>(
    tape: &mut Tape<S>,
    pred: Var,
    target: &Tensor<S>,
    alpha: f64,
) -> Result<LossTerms> {
    if !(alpha >= 0.0) {
        return Err(Error::config(format!("alpha must be ≥ 0, got {alpha}")));
    }
    let mse = tape.mse_loss(pred, target)?;
    let corr = tape.corr_loss(pred, target)?;
    let total = tape.add_scaled(mse, corr, alpha)?;
    Ok(LossTerms { mse, corr, total })
}

/// Untracked evaluation of the three loss terms `(mse, corr, total)`.
pub fn loss_values<S: Scalar>(target: &Tensor<S>, pred: &Tensor<S>, alpha: f64) -> Result<(f64, f64, f64)> {
    let mut tape = Tape::new();
    let p = tape.constant(pred.clone());
    let terms = composite_loss(&mut tape, p, target, alpha)?;
    let v = |v: Var| tape.value(v).item().to_f64();
    Ok((v(terms.mse), v(terms.corr), v(terms.total)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pearson_examples() {
        let r = pearson_r(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]).unwrap();
        assert!((r.r - 0.8).abs() < 1e-12);
        let r = pearson_r(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap();
        assert!((r.r + 1.0).abs() < 1e-15);
        let x = [0.3, -1.2, 2.5, 0.0];
        assert!((pearson_r(&x, &x).unwrap().r - 1.0).abs() < 1e-15);
    }

    #[test]
    fn constant_input_is_flagged_not_nan() {
        let r = pearson_r(&[2.0; 5], &[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        assert!(r.degenerate);
        assert_eq!(r.r, 0.0);
        assert!(pearson_r(&[1.0], &[1.0]).is_err());
        assert!(pearson_r(&[1.0, 2.0], &[1.0]).is_err());
    }
}
