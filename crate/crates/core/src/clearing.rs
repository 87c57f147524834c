//! Market clearing with and without the uptick rule.
//!
//! Under the rule, short positions are forbidden whenever the last realized
//! tick was not an uptick (`x_{t-1} <= x_{t-2}`). The two-type market then
//! becomes a piecewise-smooth map with three branches: the unconstrained
//! branch on `U ∪ Z0`, and the branches on `Z1` (type 1 priced out) and `Z2`
//! (type 2 priced out).

use std::fmt;

use crate::error::{Error, Result};
use crate::model::{
    clear_unconstrained, excess_return, fractions, fundamental_price, net_profit, update_fraction_difference,
    MarketParams,
};
use crate::predictors::Predictor;

/// Per-capita demand residual tolerated after clearing.
pub const CLEARING_TOLERANCE: f64 = 1e-12;

/// Whether the uptick rule is in force.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    Constrained,
    Unconstrained,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Constrained => "constrained",
            Mode::Unconstrained => "unconstrained",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Region of the state space that selected the clearing branch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Region {
    /// Last tick was an uptick: short sales allowed.
    U,
    /// Restricted, but both optimal demands are non-negative.
    Z0,
    /// Restricted, type 1 would go short and is held at zero.
    Z1,
    /// Restricted, type 2 would go short and is held at zero.
    Z2,
    /// No trading restriction in force.
    Unconstrained,
}

impl Region {
    pub fn as_str(&self) -> &'static str {
        match self {
            Region::U => "U",
            Region::Z0 => "Z0",
            Region::Z1 => "Z1",
            Region::Z2 => "Z2",
            Region::Unconstrained => "UNCONSTRAINED",
        }
    }

    pub fn is_restricted(&self) -> bool {
        matches!(self, Region::Z1 | Region::Z2)
    }
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Region {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "U" => Ok(Region::U),
            "Z0" => Ok(Region::Z0),
            "Z1" => Ok(Region::Z1),
            "Z2" => Ok(Region::Z2),
            "UNCONSTRAINED" => Ok(Region::Unconstrained),
            other => Err(Error::InvalidState(format!("unknown region label `{other}`"))),
        }
    }
}

/// Rolling state of the two-type market at the start of period `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketState {
    /// Past deviations, most recent first (`x_{t-1}, x_{t-2}, ...`).
    pub deviations: Vec<f64>,
    /// Fraction difference `m_t = n_{1,t} - n_{2,t}` used in period `t`.
    pub m: f64,
    /// Demands realized in period `t - 1`.
    pub z_prev: (f64, f64),
    capacity: usize,
}

impl MarketState {
    /// Opening state: only `x_0` is known.
    pub fn opening(x0: f64, m1: f64, z0: (f64, f64), capacity: usize) -> Self {
        Self {
            deviations: vec![x0],
            m: m1,
            z_prev: z0,
            capacity: capacity.max(2),
        }
    }

    /// State with an explicit history (most recent first).
    pub fn from_history(history: Vec<f64>, m: f64, z_prev: (f64, f64), capacity: usize) -> Result<Self> {
        let capacity = capacity.max(2);
        if history.is_empty() || history.len() > capacity {
            return Err(Error::InvalidState(format!(
                "history length {} outside 1..={capacity}",
                history.len()
            )));
        }
        Ok(Self {
            deviations: history,
            m,
            z_prev,
            capacity,
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Most recent deviation `x_{t-1}`.
    pub fn last(&self) -> f64 {
        self.deviations[0]
    }

    /// Only the opening deviation is known: no tick, no fraction update yet.
    pub fn is_opening(&self) -> bool {
        self.deviations.len() < 2
    }

    pub fn validate(&self, pbar: f64) -> Result<()> {
        if self.deviations.is_empty() {
            return Err(Error::InvalidState("empty deviation window".into()));
        }
        if !(self.m > -1.0 && self.m < 1.0) {
            return Err(Error::InvalidState(format!(
                "fraction difference {} outside (-1, 1)",
                self.m
            )));
        }
        if let Some(&x) = self.deviations.iter().find(|&&x| !(x > -pbar) || !x.is_finite()) {
            return Err(Error::NonPositivePrice { x, pbar });
        }
        Ok(())
    }

    fn push(&mut self, x: f64) {
        if self.deviations.len() == self.capacity {
            self.deviations.pop();
        }
        self.deviations.insert(0, x);
    }

    /// Flattened state `(x_{t-1}, ..., z_{1,t-1}, z_{2,t-1}, m_t)`.
    pub fn to_vector(&self) -> Vec<f64> {
        let mut v = self.deviations.clone();
        v.extend([self.z_prev.0, self.z_prev.1, self.m]);
        v
    }

    /// Inverse of [`to_vector`](Self::to_vector) for a state of the same shape.
    pub fn set_from_vector(&mut self, v: &[f64]) {
        let n = self.deviations.len();
        assert_eq!(v.len(), n + 3, "state vector shape mismatch");
        self.deviations.copy_from_slice(&v[..n]);
        self.z_prev = (v[n], v[n + 1]);
        self.m = v[n + 2];
    }
}

/// Everything realized in one trading period.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    /// Realized deviation `x_t`.
    pub x: f64,
    /// Forecasts `(f1, f2)` used in the period.
    pub predictions: (f64, f64),
    /// Realized demands `(z1, z2)`.
    pub demands: (f64, f64),
    pub region: Region,
    /// Excess return `R_t` per share.
    pub excess_return: f64,
    /// Net profits `(U1, U2)` of the positions held over the period.
    pub net_profits: (f64, f64),
    /// Fraction difference `m_t` in force during the period.
    pub m: f64,
    /// Fractions `(n1, n2)` in force during the period.
    pub fractions: (f64, f64),
}

impl StepOutcome {
    /// Per-capita demand minus supply.
    pub fn clearing_residual(&self, supply: f64) -> f64 {
        self.fractions.0 * self.demands.0 + self.fractions.1 * self.demands.1 - supply
    }
}

/// Optimal demands evaluated at the would-be unconstrained clearing price.
pub fn candidate_demands(predictions: (f64, f64), m: f64, params: &MarketParams) -> (f64, f64) {
    let (n1, n2) = fractions(m);
    let spread = (predictions.0 - predictions.1) / params.risk_scale();
    (n2 * spread + params.supply, -n1 * spread + params.supply)
}

/// Region selected by the last tick and the candidate demand signs.
pub fn classify(x_prev1: f64, x_prev2: f64, candidate: (f64, f64)) -> Result<Region> {
    if x_prev1 > x_prev2 {
        return Ok(Region::U);
    }
    let (z1, z2) = candidate;
    match (z1 < 0.0, z2 < 0.0) {
        (true, true) => Err(Error::ImpossibleRegion { z1, z2 }),
        (true, false) => Ok(Region::Z1),
        (false, true) => Ok(Region::Z2),
        (false, false) => Ok(Region::Z0),
    }
}

/// Linear demand of one trader type, `z(x) = slope·(x - intercept)`,
/// truncated at zero when short sales are forbidden.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DemandCurve {
    /// Deviation at which the demand vanishes.
    pub intercept: f64,
    /// Common slope `-R / (a·σ²)`.
    pub slope: f64,
    /// Population fraction of this type.
    pub fraction: f64,
}

impl DemandCurve {
    pub fn new(prediction: f64, fraction: f64, params: &MarketParams) -> Self {
        Self {
            intercept: (prediction + params.risk_premium()) / params.gross_return,
            slope: -params.gross_return / params.risk_scale(),
            fraction,
        }
    }

    pub fn demand(&self, x: f64) -> f64 {
        self.slope * (x - self.intercept)
    }

    pub fn long_only_demand(&self, x: f64) -> f64 {
        self.demand(x).max(0.0)
    }
}

/// Deviation at which the per-capita long-only demand equals `supply`.
///
/// The aggregate is piecewise linear and decreasing up to the largest
/// intercept, so the root lies on the first segment (scanning breakpoints
/// from the top) whose linear solution falls inside it.
pub fn clear_general(curves: &[DemandCurve], supply: f64) -> Result<f64> {
    if !(supply > 0.0) {
        return Err(Error::domain(
            "supply",
            "positive supply required for a unique clearing price",
        ));
    }
    let mut active: Vec<&DemandCurve> = curves.iter().filter(|c| c.fraction > 0.0).collect();
    if active.is_empty() {
        return Err(Error::InvalidState(
            "no trader type with positive fraction".into(),
        ));
    }
    active.sort_by(|a, b| b.intercept.total_cmp(&a.intercept));

    let mut weighted_slope = 0.0;
    let mut weighted_offset = 0.0;
    for (k, curve) in active.iter().enumerate() {
        weighted_slope += curve.fraction * curve.slope;
        weighted_offset += curve.fraction * curve.slope * curve.intercept;
        let x = (supply + weighted_offset) / weighted_slope;
        let lower = active.get(k + 1).map_or(f64::NEG_INFINITY, |c| c.intercept);
        if x >= lower {
            return Ok(x);
        }
    }
    unreachable!("aggregate demand is unbounded below the smallest intercept")
}

/// A two-type market: structural constants, predictor pair, and rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Market {
    pub params: MarketParams,
    pub predictors: (Predictor, Predictor),
    pub mode: Mode,
    pbar: f64,
}

impl Market {
    pub fn new(params: MarketParams, predictors: (Predictor, Predictor), mode: Mode) -> Result<Self> {
        let pbar = params.validate()?;
        predictors.0.validate()?;
        predictors.1.validate()?;
        Ok(Self {
            params,
            predictors,
            mode,
            pbar,
        })
    }

    pub fn with_mode(mut self, mode: Mode) -> Self {
        self.mode = mode;
        self
    }

    pub fn with_beta(mut self, beta: f64) -> Self {
        self.params.beta = beta;
        self
    }

    /// Same market with a different outside supply (recomputes `p̄`).
    pub fn with_supply(mut self, supply: f64) -> Result<Self> {
        self.params.supply = supply;
        self.pbar = fundamental_price(&self.params)?;
        Ok(self)
    }

    pub fn fundamental_price(&self) -> f64 {
        self.pbar
    }

    /// Deviations retained in the state window.
    pub fn window_capacity(&self) -> usize {
        self.predictors.0.lag().max(self.predictors.1.lag()).max(2) + 1
    }

    /// Opening state with the conventional initial demands `z_0 = (s, s)`.
    pub fn opening_state(&self, x0: f64, m1: f64) -> MarketState {
        let s = self.params.supply;
        MarketState::opening(x0, m1, (s, s), self.window_capacity())
    }

    /// Steady state with a full constant window at `xbar`.
    pub fn steady_state(&self, xbar: f64, m: f64, z: (f64, f64)) -> MarketState {
        let capacity = self.window_capacity();
        MarketState {
            deviations: vec![xbar; capacity],
            m,
            z_prev: z,
            capacity,
        }
    }

    pub fn predictions(&self, window: &[f64]) -> Result<(f64, f64)> {
        Ok((
            self.predictors.0.predict(window, self.pbar)?,
            self.predictors.1.predict(window, self.pbar)?,
        ))
    }

    /// One trading period: returns the outcome and the shifted state.
    pub fn step(&self, state: &MarketState) -> Result<(StepOutcome, MarketState)> {
        let mut next = state.clone();
        let outcome = self.advance(&mut next)?;
        Ok((outcome, next))
    }

    /// In-place variant of [`step`](Self::step).
    pub fn advance(&self, state: &mut MarketState) -> Result<StepOutcome> {
        let params = &self.params;
        let m = state.m;
        if !(m > -1.0 && m < 1.0) {
            return Err(Error::InvalidState(format!(
                "fraction difference {m} outside (-1, 1)"
            )));
        }
        let predictions = self.predictions(&state.deviations)?;
        let (f1, f2) = predictions;
        let candidate = candidate_demands(predictions, m, params);

        // The opening period has no tick to test and trades freely.
        let region = match self.mode {
            Mode::Unconstrained => Region::Unconstrained,
            Mode::Constrained if state.is_opening() => Region::U,
            Mode::Constrained => classify(state.deviations[0], state.deviations[1], candidate)?,
        };

        let s = params.supply;
        let premium = params.risk_premium();
        let r = params.gross_return;
        let (x, demands) = match region {
            Region::U | Region::Z0 | Region::Unconstrained => {
                (clear_unconstrained(predictions, m, params), candidate)
            }
            Region::Z1 => (
                (f2 - premium * (1.0 + m) / (1.0 - m)) / r,
                (0.0, 2.0 * s / (1.0 - m)),
            ),
            Region::Z2 => (
                (f1 - premium * (1.0 - m) / (1.0 + m)) / r,
                (2.0 * s / (1.0 + m), 0.0),
            ),
        };
        if !(x > -self.pbar) || !x.is_finite() {
            return Err(Error::NonPositivePrice { x, pbar: self.pbar });
        }

        let ret = excess_return(x, state.deviations[0], params);
        let net_profits = (
            net_profit(ret, state.z_prev.0, params.cost_fundamental),
            net_profit(ret, state.z_prev.1, params.cost_other),
        );
        let m_next = if state.is_opening() {
            m
        } else {
            update_fraction_difference(ret, state.z_prev, params)
        };

        state.push(x);
        state.m = m_next;
        state.z_prev = demands;

        Ok(StepOutcome {
            x,
            predictions,
            demands,
            region,
            excess_return: ret,
            net_profits,
            m,
            fractions: fractions(m),
        })
    }
}
