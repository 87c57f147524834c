//! Belief functions mapping the window of past deviations to a forecast of
//! the next deviation.
//!
//! Windows are ordered most recent first: `window[0] = x_{t-1}`,
//! `window[1] = x_{t-2}`, and so on. Lagged predictors that see fewer
//! prices than their lag fall back to the oldest available deviation.

use crate::error::{Error, Result};

/// A price predictor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Predictor {
    /// Reversion towards the fundamental price: `f = v·x_{t-1}`, `0 <= v < 1`.
    Fundamental { reversion: f64 },
    /// Trend extrapolation: `f = g·x_{t-1}`, `g > 1`.
    Chartist { trend: f64 },
    /// Price rate of change averaged over `lag - 1` periods, applied twice.
    Roc { lag: usize },
    /// Rate of change blended with the unit rate by a confidence weight that
    /// vanishes at extreme rates.
    SmoothedRoc { lag: usize, confidence: f64 },
}

impl Predictor {
    pub fn fundamental(reversion: f64) -> Self {
        Predictor::Fundamental { reversion }
    }

    pub fn chartist(trend: f64) -> Self {
        Predictor::Chartist { trend }
    }

    pub fn roc(lag: usize) -> Self {
        Predictor::Roc { lag }
    }

    pub fn smoothed_roc(lag: usize, confidence: f64) -> Self {
        Predictor::SmoothedRoc { lag, confidence }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Predictor::Fundamental { reversion } => {
                if !(0.0..1.0).contains(&reversion) {
                    return Err(Error::domain(
                        "reversion",
                        format!("0 <= v < 1 required, got {reversion}"),
                    ));
                }
            }
            Predictor::Chartist { trend } => {
                if !(trend > 1.0) || !trend.is_finite() {
                    return Err(Error::domain("trend", format!("g > 1 required, got {trend}")));
                }
            }
            Predictor::Roc { lag } => check_lag(lag)?,
            Predictor::SmoothedRoc { lag, confidence } => {
                check_lag(lag)?;
                if !(confidence > 0.0) || !confidence.is_finite() {
                    return Err(Error::domain(
                        "confidence",
                        format!("alpha > 0 required, got {confidence}"),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Number of past deviations the predictor reads.
    pub fn lag(&self) -> usize {
        match *self {
            Predictor::Fundamental { .. } | Predictor::Chartist { .. } => 1,
            Predictor::Roc { lag } | Predictor::SmoothedRoc { lag, .. } => lag,
        }
    }

    /// Forecast of the next deviation.
    pub fn predict(&self, window: &[f64], pbar: f64) -> Result<f64> {
        let last = *window
            .first()
            .ok_or_else(|| Error::InvalidState("empty deviation window".into()))?;
        match *self {
            Predictor::Fundamental { reversion } => Ok(reversion * last),
            Predictor::Chartist { trend } => Ok(trend * last),
            Predictor::Roc { lag } => predict_roc(window, lag, pbar),
            Predictor::SmoothedRoc { lag, confidence } => predict_sroc(window, lag, confidence, pbar),
        }
    }

    /// Partial derivatives `∂f/∂x_{t-i}`, `i = 1..=lag`, at the zero window.
    pub fn gradient_at_zero(&self) -> Vec<f64> {
        match *self {
            Predictor::Fundamental { reversion } => vec![reversion],
            Predictor::Chartist { trend } => vec![trend],
            // Both rate variants share the same linearization because the
            // confidence weight is flat at unit rate.
            Predictor::Roc { lag } | Predictor::SmoothedRoc { lag, .. } => {
                let span = (lag - 1) as f64;
                let mut grad = vec![0.0; lag];
                grad[0] = 1.0 + 2.0 / span;
                grad[lag - 1] -= 2.0 / span;
                grad
            }
        }
    }

    /// `f(x̄·1) / x̄` on a constant window.
    pub fn equilibrium_slope(&self, xbar: f64, pbar: f64) -> Result<f64> {
        let window = vec![xbar; self.lag()];
        Ok(self.predict(&window, pbar)? / xbar)
    }

    pub fn label(&self) -> &'static str {
        match self {
            Predictor::Fundamental { .. } => "fundamental",
            Predictor::Chartist { .. } => "chartist",
            Predictor::Roc { .. } => "roc",
            Predictor::SmoothedRoc { .. } => "sroc",
        }
    }
}

fn check_lag(lag: usize) -> Result<()> {
    if lag < 2 {
        return Err(Error::domain("lag", format!("L >= 2 required, got {lag}")));
    }
    Ok(())
}

/// Rate of change `((p̄ + x_{t-1}) / (p̄ + x_{t-L}))^(1/(L-1))`.
///
/// With fewer than `lag` deviations available the oldest one stands in for
/// `x_{t-L}` and the exponent follows the span actually covered; a single
/// deviation gives the unit rate.
pub fn roc_rate(window: &[f64], lag: usize, pbar: f64) -> Result<f64> {
    Ok(log_rate(window, lag, pbar)?.exp())
}

/// `ln ROC`, computed from the deviations so that nearby prices do not
/// cancel against `p̄`.
fn log_rate(window: &[f64], lag: usize, pbar: f64) -> Result<f64> {
    let last = *window
        .first()
        .ok_or_else(|| Error::InvalidState("empty deviation window".into()))?;
    let span = (lag.max(1) - 1).min(window.len() - 1);
    let oldest = window[span];
    for price in [pbar + last, pbar + oldest] {
        if !(price > 0.0) {
            return Err(Error::NonPositivePriceLevel { price });
        }
    }
    if span == 0 {
        return Ok(0.0);
    }
    Ok(((last - oldest) / (pbar + oldest)).ln_1p() / span as f64)
}

/// Confidence weight `2 / (ROC^α + ROC^-α)`, evaluated as `sech(α·ln ROC)`.
pub fn roc_confidence(rate: f64, alpha: f64) -> f64 {
    weight_from_log(rate.ln(), alpha)
}

fn weight_from_log(log_rate: f64, alpha: f64) -> f64 {
    (alpha * log_rate).cosh().recip()
}

/// `(p̄ + x)·(1 + e)² - p̄` written as `x + (p̄ + x)·e·(2 + e)`.
fn scaled_forecast(last: f64, pbar: f64, excess: f64) -> f64 {
    last + (pbar + last) * excess * (2.0 + excess)
}

/// Plain rate-of-change forecast `(p̄ + x_{t-1})·ROC² - p̄`.
pub fn predict_roc(window: &[f64], lag: usize, pbar: f64) -> Result<f64> {
    let excess = log_rate(window, lag, pbar)?.exp_m1();
    Ok(scaled_forecast(window[0], pbar, excess))
}

/// Smoothed rate-of-change forecast
/// `(p̄ + x_{t-1})·(α_ROC·ROC + 1 - α_ROC)² - p̄`.
pub fn predict_sroc(window: &[f64], lag: usize, alpha: f64, pbar: f64) -> Result<f64> {
    let log = log_rate(window, lag, pbar)?;
    let excess = weight_from_log(log, alpha) * log.exp_m1();
    Ok(scaled_forecast(window[0], pbar, excess))
}
