//! Structural constants and the one-period mechanics of the two-type market:
//! pricing, optimal demands, excess returns, and the evolutionary update of
//! the population split.
//!
//! All quantities are expressed as deviations `x = p - p̄` from the
//! fundamental price. Dividends are deterministic (no dividend shock).

use crate::error::{Error, Result};

/// Structural constants of the market.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarketParams {
    /// Gross return of the risk-free asset, `1 + r`.
    pub gross_return: f64,
    /// Risk-aversion coefficient.
    pub risk_aversion: f64,
    /// Common belief about the variance of excess returns.
    pub variance: f64,
    /// Outside shares supplied per trader.
    pub supply: f64,
    /// Mean dividend.
    pub mean_dividend: f64,
    /// Per-period cost of the fundamental predictor (type 1).
    pub cost_fundamental: f64,
    /// Per-period cost of the non-fundamental predictor (type 2).
    pub cost_other: f64,
    /// Intensity of choice.
    pub beta: f64,
    /// Accept `gross_return >= 2` (a risk-free rate of 100% or more).
    pub allow_high_return: bool,
}

impl Default for MarketParams {
    fn default() -> Self {
        Self {
            gross_return: 1.1,
            risk_aversion: 1.0,
            variance: 1.0,
            supply: 0.1,
            mean_dividend: 1.0,
            cost_fundamental: 1.0,
            cost_other: 0.0,
            beta: 3.0,
            allow_high_return: false,
        }
    }
}

impl MarketParams {
    pub fn with_beta(mut self, beta: f64) -> Self {
        self.beta = beta;
        self
    }

    pub fn with_supply(mut self, supply: f64) -> Self {
        self.supply = supply;
        self
    }

    /// `a·σ²`, the inverse slope of every demand curve (up to `R`).
    pub fn risk_scale(&self) -> f64 {
        self.risk_aversion * self.variance
    }

    /// Risk premium `a·σ²·s` required for holding the outside supply.
    pub fn risk_premium(&self) -> f64 {
        self.risk_scale() * self.supply
    }

    /// `C1 - C2`.
    pub fn cost_gap(&self) -> f64 {
        self.cost_fundamental - self.cost_other
    }

    /// Checks every standing assumption and returns the fundamental price.
    pub fn validate(&self) -> Result<f64> {
        let finite = [
            ("gross_return", self.gross_return),
            ("risk_aversion", self.risk_aversion),
            ("variance", self.variance),
            ("supply", self.supply),
            ("mean_dividend", self.mean_dividend),
            ("cost_fundamental", self.cost_fundamental),
            ("cost_other", self.cost_other),
            ("beta", self.beta),
        ];
        for (name, value) in finite {
            if !value.is_finite() {
                return Err(Error::domain(name, format!("must be finite, got {value}")));
            }
        }
        if self.gross_return <= 1.0 {
            return Err(Error::domain(
                "gross_return",
                format!("R > 1 required, got {}", self.gross_return),
            ));
        }
        if self.gross_return >= 2.0 && !self.allow_high_return {
            return Err(Error::domain(
                "gross_return",
                format!(
                    "R < 2 required unless allow_high_return is set, got {}",
                    self.gross_return
                ),
            ));
        }
        if self.risk_aversion <= 0.0 {
            return Err(Error::domain(
                "risk_aversion",
                format!("a > 0 required, got {}", self.risk_aversion),
            ));
        }
        if self.variance <= 0.0 {
            return Err(Error::domain(
                "variance",
                format!("sigma2 > 0 required, got {}", self.variance),
            ));
        }
        if self.supply < 0.0 {
            return Err(Error::domain(
                "supply",
                format!("s >= 0 required, got {}", self.supply),
            ));
        }
        if self.beta < 0.0 {
            return Err(Error::domain(
                "beta",
                format!("beta >= 0 required, got {}", self.beta),
            ));
        }
        for (name, cost) in [
            ("cost_fundamental", self.cost_fundamental),
            ("cost_other", self.cost_other),
        ] {
            if cost < 0.0 {
                return Err(Error::domain(name, format!("cost >= 0 required, got {cost}")));
            }
        }
        fundamental_price(self)
    }
}

/// Fundamental price `p̄ = (ȳ - a·σ²·s) / (R - 1)`.
pub fn fundamental_price(params: &MarketParams) -> Result<f64> {
    if params.gross_return <= 1.0 {
        return Err(Error::domain(
            "gross_return",
            format!("R > 1 required, got {}", params.gross_return),
        ));
    }
    let numerator = params.mean_dividend - params.risk_premium();
    if numerator <= 0.0 {
        return Err(Error::domain(
            "fundamental_price",
            format!("mean_dividend - risk_aversion*variance*supply > 0 required, got {numerator}"),
        ));
    }
    Ok(numerator / (params.gross_return - 1.0))
}

/// Fractions `(n1, n2)` from the fraction difference `m = n1 - n2`.
pub fn fractions(m: f64) -> (f64, f64) {
    ((1.0 + m) / 2.0, (1.0 - m) / 2.0)
}

/// Market-clearing deviation without trading restrictions.
pub fn clear_unconstrained(predictions: (f64, f64), m: f64, params: &MarketParams) -> f64 {
    let (f1, f2) = predictions;
    ((1.0 + m) * f1 + (1.0 - m) * f2) / (2.0 * params.gross_return)
}

/// Mean-variance optimal demand of a trader with forecast `prediction` when
/// the realized deviation is `x`. Negative values are short positions.
pub fn optimal_demand(prediction: f64, x: f64, params: &MarketParams) -> f64 {
    (prediction - params.gross_return * x) / params.risk_scale() + params.supply
}

/// Realized excess return per share, `x_t - R·x_{t-1} + a·σ²·s`.
pub fn excess_return(x: f64, x_prev: f64, params: &MarketParams) -> f64 {
    x - params.gross_return * x_prev + params.risk_premium()
}

/// Next-period fraction difference from the realized excess return and the
/// demands held over the period. Serves both the constrained and the
/// unconstrained market since it takes realized demands.
pub fn update_fraction_difference(excess_return: f64, z_prev: (f64, f64), params: &MarketParams) -> f64 {
    let fitness_gap = excess_return * (z_prev.0 - z_prev.1) - params.cost_gap();
    // tanh rounds to ±1 for arguments beyond ~19; keep the split strictly interior.
    (0.5 * params.beta * fitness_gap)
        .tanh()
        .clamp(-MAX_FRACTION_DIFFERENCE, MAX_FRACTION_DIFFERENCE)
}

/// Largest representable value below one.
pub const MAX_FRACTION_DIFFERENCE: f64 = 1.0 - f64::EPSILON / 2.0;

/// Realized net profit `R_t·z_{h,t-1} - C_h`.
pub fn net_profit(excess_return: f64, z_prev: f64, cost: f64) -> f64 {
    excess_return * z_prev - cost
}
