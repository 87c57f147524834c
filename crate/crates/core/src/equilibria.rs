//! Closed-form equilibria, eigenvalues, admissibility, and bifurcation
//! thresholds of the two-type market, plus numerical cross-checks
//! (finite-difference Jacobians of the step map, eigenvalue-modulus
//! bisection).

use std::fmt;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::clearing::{Market, MarketState};
use crate::error::{Error, Result};
use crate::model::{fractions, MarketParams};
use crate::predictors::Predictor;

/// Location of a fixed point relative to the region where its branch applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Admissibility {
    Admissible,
    Virtual,
    /// The fixed point does not exist for these parameters.
    NotDefined,
}

impl fmt::Display for Admissibility {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Admissibility::Admissible => "admissible",
            Admissibility::Virtual => "virtual",
            Admissibility::NotDefined => "not-defined",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EquilibriumKind {
    Fundamental,
    NonFundamentalPlus,
    NonFundamentalMinus,
}

impl fmt::Display for EquilibriumKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EquilibriumKind::Fundamental => "fundamental",
            EquilibriumKind::NonFundamentalPlus => "nonfund_plus",
            EquilibriumKind::NonFundamentalMinus => "nonfund_minus",
        })
    }
}

/// A fixed point of the unconstrained branch with its linearization.
#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumReport {
    pub kind: EquilibriumKind,
    pub x_bar: f64,
    pub m_bar: f64,
    pub demands: (f64, f64),
    /// Eigenvalues of the step map, padded with zeros to the state dimension.
    pub eigenvalues: Vec<Complex64>,
    pub status: Admissibility,
}

impl EquilibriumReport {
    fn not_defined(kind: EquilibriumKind) -> Self {
        Self {
            kind,
            x_bar: f64::NAN,
            m_bar: f64::NAN,
            demands: (f64::NAN, f64::NAN),
            eigenvalues: Vec::new(),
            status: Admissibility::NotDefined,
        }
    }

    pub fn is_defined(&self) -> bool {
        self.status != Admissibility::NotDefined
    }

    /// Largest eigenvalue modulus (`NaN` when undefined).
    pub fn spectral_radius(&self) -> f64 {
        spectral_radius(&self.eigenvalues)
    }

    pub fn is_stable(&self) -> bool {
        self.spectral_radius() < 1.0
    }

    /// Market state sitting exactly at this equilibrium.
    pub fn state(&self, market: &Market) -> MarketState {
        market.steady_state(self.x_bar, self.m_bar, self.demands)
    }
}

pub fn spectral_radius(eigenvalues: &[Complex64]) -> f64 {
    eigenvalues.iter().map(|l| l.norm()).fold(f64::NAN, f64::max)
}

/// Roots of `λ^n - c[0]·λ^(n-1) - c[1]·λ^(n-2) - ... - c[n-1]` from the
/// eigenvalues of the companion matrix.
pub fn characteristic_roots(coefficients: &[f64]) -> Vec<Complex64> {
    let n = coefficients.len();
    if n == 0 {
        return Vec::new();
    }
    let mut companion = DMatrix::<f64>::zeros(n, n);
    for (j, &c) in coefficients.iter().enumerate() {
        companion[(0, j)] = c;
    }
    for i in 1..n {
        companion[(i, i - 1)] = 1.0;
    }
    companion.complex_eigenvalues().iter().copied().collect()
}

/// Eigenvalues of a real square matrix.
pub fn matrix_eigenvalues(matrix: &DMatrix<f64>) -> Vec<Complex64> {
    matrix.complex_eigenvalues().iter().copied().collect()
}

fn pad_with_zeros(mut roots: Vec<Complex64>, dimension: usize) -> Vec<Complex64> {
    while roots.len() < dimension {
        roots.push(Complex64::new(0.0, 0.0));
    }
    roots
}

/// State dimension of the step map: window plus two demands plus `m`.
pub fn state_dimension(market: &Market) -> usize {
    market.window_capacity() + 3
}

/// Fundamental equilibrium `x̄ = 0`, `m̄ = tanh(-β(C1 - C2)/2)`, `z̄ = (s, s)`.
pub fn fundamental_equilibrium(market: &Market) -> Result<EquilibriumReport> {
    let pbar = market.fundamental_price();
    let (p1, p2) = market.predictors;
    let lag = p1.lag().max(p2.lag());
    let zeros = vec![0.0; lag];
    for p in [p1, p2] {
        let f0 = p.predict(&zeros, pbar)?;
        if f0 != 0.0 {
            return Err(Error::NonVanishingPredictor(f0));
        }
    }
    let params = &market.params;
    let m_bar = (-0.5 * params.beta * params.cost_gap()).tanh();
    let (n1, n2) = fractions(m_bar);
    let (g1, g2) = (p1.gradient_at_zero(), p2.gradient_at_zero());
    let coefficients: Vec<f64> = (0..lag)
        .map(|i| {
            let d1 = g1.get(i).copied().unwrap_or(0.0);
            let d2 = g2.get(i).copied().unwrap_or(0.0);
            (n1 * d1 + n2 * d2) / params.gross_return
        })
        .collect();
    let s = params.supply;
    Ok(EquilibriumReport {
        kind: EquilibriumKind::Fundamental,
        x_bar: 0.0,
        m_bar,
        demands: (s, s),
        eigenvalues: pad_with_zeros(characteristic_roots(&coefficients), state_dimension(market)),
        status: Admissibility::Admissible,
    })
}

/// Qualitative regime of the fundamentalist-versus-chartist market.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ChartistRegime {
    /// `1 < g < R`: the fundamental equilibrium is unique and globally stable.
    FundamentalOnly,
    /// `R < g < 2R - v`: limit point, transcritical, and Neimark–Sacker sequence.
    Intermediate,
    /// `g > 2R - v`: the fundamental is unstable for every `β > 0`.
    StrongTrend,
}

/// Closed-form thresholds of the fundamentalist-versus-chartist market.
///
/// Entries that do not apply to the current regime are `None`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChartistThresholds {
    pub regime: ChartistRegime,
    pub beta_lp: Option<f64>,
    pub beta_tr: Option<f64>,
    pub beta_bc_plus: Option<f64>,
    pub beta_bc_minus: Option<f64>,
    pub x_lp: Option<f64>,
    pub x_bc_plus: Option<f64>,
    pub x_bc_minus: Option<f64>,
    pub s_bc_minus: Option<f64>,
    /// `β` below which `β_TR < β_NS⁺` (the comparison the closed forms allow).
    pub beta_ns_plus_comparator: Option<f64>,
    /// `g > R²`: orbits may diverge for large `β`.
    pub unbounded_warning: bool,
}

impl ChartistThresholds {
    /// `(name, value)` of every defined entry, in reporting order.
    pub fn entries(&self) -> Vec<(&'static str, f64)> {
        [
            ("beta_LP", self.beta_lp),
            ("beta_BC_plus", self.beta_bc_plus),
            ("beta_TR", self.beta_tr),
            ("beta_BC_minus", self.beta_bc_minus),
            ("x_LP", self.x_lp),
            ("x_BC_plus", self.x_bc_plus),
            ("x_BC_minus", self.x_bc_minus),
            ("s_BC_minus", self.s_bc_minus),
            ("beta_NS_plus_comparator", self.beta_ns_plus_comparator),
        ]
        .into_iter()
        .filter_map(|(name, value)| value.map(|v| (name, v)))
        .collect()
    }
}

fn check_chartist_pair(params: &MarketParams, v: f64, g: f64) -> Result<f64> {
    Predictor::fundamental(v).validate()?;
    Predictor::chartist(g).validate()?;
    let cost = params.cost_gap();
    if !(cost > 0.0) {
        return Err(Error::domain(
            "cost_fundamental",
            format!("C1 - C2 > 0 required for the switching thresholds, got {cost}"),
        ));
    }
    Ok(cost)
}

/// Every closed-form threshold for fundamentalists (`v`) against chartists (`g`).
pub fn chartist_thresholds(params: &MarketParams, v: f64, g: f64) -> Result<ChartistThresholds> {
    let cost = check_chartist_pair(params, v, g)?;
    let r = params.gross_return;
    let scale = params.risk_scale();
    let s = params.supply;
    let unbounded_warning = g > r * r;

    if g <= r {
        return Ok(ChartistThresholds {
            regime: ChartistRegime::FundamentalOnly,
            beta_lp: None,
            beta_tr: None,
            beta_bc_plus: None,
            beta_bc_minus: None,
            x_lp: None,
            x_bc_plus: None,
            x_bc_minus: None,
            s_bc_minus: None,
            beta_ns_plus_comparator: None,
            unbounded_warning,
        });
    }

    let regime = if g < 2.0 * r - v {
        ChartistRegime::Intermediate
    } else {
        ChartistRegime::StrongTrend
    };
    let beta_tr = ((r - v) / (g - r)).ln() / cost;
    let beta_lp = beta_tr / (1.0 + scale * s * s / (4.0 * cost) * (g - v) / (r - 1.0));
    let beta_bc_plus = beta_tr / (1.0 + scale * s * s / cost * (g - v) * (1.0 - v) / ((r - v) * (r - v)));
    let s_bc_minus = (cost / scale * (g - r) * (g - r) / ((g - v) * (g - 1.0))).sqrt();
    let bc_minus_denominator = 1.0 - scale * s * s / cost * (g - v) * (g - 1.0) / ((g - r) * (g - r));
    let beta_bc_minus = (s < s_bc_minus).then(|| beta_tr / bc_minus_denominator);
    let positive = |b: f64| (b > 0.0).then_some(b);

    Ok(ChartistThresholds {
        regime,
        beta_lp: positive(beta_lp),
        beta_tr: positive(beta_tr),
        beta_bc_plus: positive(beta_bc_plus),
        beta_bc_minus: beta_bc_minus.and_then(positive),
        x_lp: Some(scale * s / (2.0 * (r - 1.0))),
        x_bc_plus: Some(scale * s / (r - v)),
        x_bc_minus: Some(-scale * s / (g - r)),
        s_bc_minus: Some(s_bc_minus),
        beta_ns_plus_comparator: (s > 0.0)
            .then(|| (r - 1.0) * (r - 1.0) / (scale * s * s * (g - r) * (r - v))),
        unbounded_warning,
    })
}

/// Which non-fundamental equilibrium.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Branch {
    Plus,
    Minus,
}

/// The two non-fundamental equilibria `(x̄±, m̄)` of the chartist market at
/// `params.beta`, with eigenvalues and admissibility under the uptick rule.
pub fn nonfundamental_equilibria(
    params: &MarketParams,
    v: f64,
    g: f64,
) -> Result<(EquilibriumReport, EquilibriumReport)> {
    let cost = check_chartist_pair(params, v, g)?;
    let undefined = || {
        (
            EquilibriumReport::not_defined(EquilibriumKind::NonFundamentalPlus),
            EquilibriumReport::not_defined(EquilibriumKind::NonFundamentalMinus),
        )
    };
    let r = params.gross_return;
    if g <= r || params.beta <= 0.0 {
        return Ok(undefined());
    }
    let scale = params.risk_scale();
    let s = params.supply;
    let beta = params.beta;

    let beta_tr = ((r - v) / (g - r)).ln() / cost;
    let beta_lp = beta_tr / (1.0 + scale * s * s / (4.0 * cost) * (g - v) / (r - 1.0));
    let x_lp = scale * s / (2.0 * (r - 1.0));
    let radicand = (x_lp * x_lp + scale * cost / ((r - 1.0) * (g - v))) * (1.0 - beta_lp / beta);
    if radicand < 0.0 {
        return Ok(undefined());
    }
    let root = radicand.sqrt();
    let m_bar = 1.0 - 2.0 * (r - v) / (g - v);
    let x_bc_plus = scale * s / (r - v);
    let x_bc_minus = -scale * s / (g - r);
    let dimension = 3 + 3; // window of three deviations, two demands, m

    let report = |kind, x_bar: f64, status| {
        let (n1, n2) = fractions(m_bar);
        let spread = (v - g) * x_bar / scale;
        EquilibriumReport {
            kind,
            x_bar,
            m_bar,
            demands: (n2 * spread + s, -n1 * spread + s),
            eigenvalues: pad_with_zeros(
                characteristic_roots(&chartist_cubic(params, v, g, x_bar)),
                dimension,
            ),
            status,
        }
    };

    let x_plus = x_lp + root;
    let x_minus = x_lp - root;
    let admissible = |ok: bool| {
        if ok {
            Admissibility::Admissible
        } else {
            Admissibility::Virtual
        }
    };
    Ok((
        report(
            EquilibriumKind::NonFundamentalPlus,
            x_plus,
            admissible(x_plus <= x_bc_plus),
        ),
        report(
            EquilibriumKind::NonFundamentalMinus,
            x_minus,
            admissible(x_bc_minus <= x_minus && x_minus <= x_bc_plus),
        ),
    ))
}

/// Coefficients `(γ1, γ2, γ3)` of `λ³ - γ1·λ² - γ2·λ - γ3` at a
/// non-fundamental equilibrium `x̄` of the chartist market.
pub fn chartist_cubic(params: &MarketParams, v: f64, g: f64, x_bar: f64) -> [f64; 3] {
    let r = params.gross_return;
    let scale = params.risk_scale();
    let premium = params.risk_premium();
    let beta = params.beta;
    let ret = -(r - 1.0) * x_bar + premium;
    let argument = -0.5 * beta * (ret * (g - v) / scale * x_bar + params.cost_gap());
    let sech = argument.cosh().recip();
    let gamma = beta * x_bar * (g - v) * (g - v) / (4.0 * scale) * sech * sech;
    [1.0 + gamma * x_bar / r, -gamma * x_bar, gamma / r * ret]
}

/// Neimark–Sacker threshold of the fundamental equilibrium against
/// rate-of-change traders with `L = 2`: `(1/C)·ln(R/(2 - R))`, or `+∞` when
/// the equilibrium is stable for every `β`.
pub fn roc_ns_threshold(params: &MarketParams) -> f64 {
    let r = params.gross_return;
    let cost = params.cost_gap();
    if r >= 2.0 || cost <= 0.0 {
        return f64::INFINITY;
    }
    (r / (2.0 - r)).ln() / cost
}

/// Bisection tolerance in `β` for numerical stability crossings.
pub const CROSSING_TOLERANCE: f64 = 1e-6;

/// First `β` in `[lo, hi]` where `radius(β) - 1` changes sign, refined by
/// bisection to `tol`. `radius` returns `None` where the fixed point is not
/// defined; such points are skipped.
pub fn stability_crossing(radius: impl Fn(f64) -> Option<f64>, lo: f64, hi: f64, tol: f64) -> Option<f64> {
    const SAMPLES: usize = 400;
    const FLAT: f64 = 1e-12;
    let side = |beta: f64| {
        radius(beta)
            .filter(|r| r.is_finite() && (r - 1.0).abs() > FLAT)
            .map(|r| r > 1.0)
    };
    let mut previous: Option<(f64, bool)> = None;
    for k in 0..=SAMPLES {
        let beta = lo + (hi - lo) * k as f64 / SAMPLES as f64;
        let Some(unstable) = side(beta) else { continue };
        if let Some((mut a, a_unstable)) = previous {
            if a_unstable != unstable {
                let mut b = beta;
                while b - a > tol {
                    let mid = 0.5 * (a + b);
                    match side(mid) {
                        Some(u) if u == a_unstable => a = mid,
                        Some(_) => b = mid,
                        None => return Some(mid),
                    }
                }
                return Some(0.5 * (a + b));
            }
        }
        previous = Some((beta, unstable));
    }
    None
}

/// Numerical Neimark–Sacker search on one non-fundamental branch of the
/// chartist market: bisection on the spectral radius of the closed-form
/// cubic. `None` when no crossing exists in the interval.
pub fn ns_bifurcation_search(
    params: &MarketParams,
    v: f64,
    g: f64,
    branch: Branch,
    interval: (f64, f64),
) -> Result<Option<f64>> {
    check_chartist_pair(params, v, g)?;
    let radius = |beta: f64| {
        let p = params.with_beta(beta);
        let (plus, minus) = nonfundamental_equilibria(&p, v, g).ok()?;
        let eq = match branch {
            Branch::Plus => plus,
            Branch::Minus => minus,
        };
        eq.is_defined().then(|| eq.spectral_radius())
    };
    Ok(stability_crossing(
        radius,
        interval.0,
        interval.1,
        CROSSING_TOLERANCE,
    ))
}

/// Numerical stability-loss search for the fundamental equilibrium of any
/// predictor pair, by bisection on the spectral radius of its companion
/// matrix.
pub fn fundamental_stability_crossing(market: &Market, interval: (f64, f64)) -> Result<Option<f64>> {
    fundamental_equilibrium(market)?;
    let radius = |beta: f64| {
        fundamental_equilibrium(&market.with_beta(beta))
            .ok()
            .map(|eq| eq.spectral_radius())
    };
    Ok(stability_crossing(
        radius,
        interval.0,
        interval.1,
        CROSSING_TOLERANCE,
    ))
}

/// Outcome of the slope test that rules out non-fundamental equilibria.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UniquenessVerdict {
    /// Every probed slope `f(x̄·1)/x̄` lies below `R`.
    pub all_below: bool,
    /// Every probed slope lies above `R`.
    pub all_above: bool,
    /// Probe points actually evaluated.
    pub probes: usize,
}

impl UniquenessVerdict {
    /// The fundamental is the only fixed point (on the probed grid).
    pub fn holds(&self) -> bool {
        self.probes > 0 && (self.all_below || self.all_above)
    }
}

/// Sign-symmetric probe grid spanning `1e-3` to `0.99·p̄` in magnitude.
pub fn default_probe_grid(pbar: f64) -> Vec<f64> {
    let (lo, hi) = (1e-3f64.ln(), (0.99 * pbar).ln());
    let n = 64;
    (0..n)
        .map(|k| (lo + (hi - lo) * k as f64 / (n - 1) as f64).exp())
        .flat_map(|x| [x, -x])
        .collect()
}

/// Probes `f_h(x̄·1)/x̄` for both predictors on `probe_grid` (zero skipped;
/// points outside a predictor's domain are skipped).
pub fn uniqueness_check(
    predictors: (Predictor, Predictor),
    params: &MarketParams,
    probe_grid: &[f64],
) -> Result<UniquenessVerdict> {
    let pbar = params.validate()?;
    let r = params.gross_return;
    let mut verdict = UniquenessVerdict {
        all_below: true,
        all_above: true,
        probes: 0,
    };
    for &x in probe_grid.iter().filter(|x| **x != 0.0) {
        for p in [predictors.0, predictors.1] {
            let Ok(slope) = p.equilibrium_slope(x, pbar) else {
                continue;
            };
            verdict.probes += 1;
            verdict.all_below &= slope < r;
            verdict.all_above &= slope > r;
        }
    }
    Ok(verdict)
}

/// Finite-difference step used by [`step_jacobian`].
pub const JACOBIAN_STEP: f64 = 1e-7;

/// Central-difference Jacobian of the one-period state map at `state`, in
/// the coordinates of [`MarketState::to_vector`].
pub fn step_jacobian(market: &Market, state: &MarketState, h: f64) -> Result<DMatrix<f64>> {
    let base = state.to_vector();
    let n = base.len();
    let mut jacobian = DMatrix::zeros(n, n);
    let mut probe = state.clone();
    for j in 0..n {
        let mut up = base.clone();
        up[j] += h;
        probe.set_from_vector(&up);
        let (_, forward) = market.step(&probe)?;
        let mut down = base.clone();
        down[j] -= h;
        probe.set_from_vector(&down);
        let (_, backward) = market.step(&probe)?;
        let (fw, bw) = (forward.to_vector(), backward.to_vector());
        for i in 0..n {
            jacobian[(i, j)] = (fw[i] - bw[i]) / (2.0 * h);
        }
    }
    Ok(jacobian)
}

/// A fixed point of one of the restricted branches (`Z1` or `Z2`).
///
/// These sit on the discontinuity `x_{t-1} = x_{t-2}` and are unstable by
/// construction; they are reported for diagnostics only.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RestrictedFixedPoint {
    pub region: crate::clearing::Region,
    pub x_bar: f64,
    pub m_bar: f64,
    pub demands: (f64, f64),
}

/// Fixed points of the `Z1` and `Z2` branches of the chartist market found
/// by a logarithmic scan plus bisection over the deviation.
pub fn restricted_fixed_points(params: &MarketParams, v: f64, g: f64) -> Result<Vec<RestrictedFixedPoint>> {
    use crate::clearing::Region;
    check_chartist_pair(params, v, g)?;
    let pbar = params.validate()?;
    let r = params.gross_return;
    let s = params.supply;
    let premium = params.risk_premium();
    if !(s > 0.0) {
        return Ok(Vec::new());
    }
    let tanh_fraction = |gap: f64| (0.5 * params.beta * gap).tanh();

    // Z1: x̄ = (g·x̄ - a·σ²·s·(1+m)/(1-m)) / R fixes m given x̄ (needs g > R, x̄ > 0).
    let z1_m = |x: f64| {
        let q = (g - r) * x / premium;
        (q - 1.0) / (q + 1.0)
    };
    let z1_residual = |x: f64| {
        let m = z1_m(x);
        let ret = -(r - 1.0) * x + premium;
        m - tanh_fraction(ret * (-2.0 * s / (1.0 - m)) - params.cost_gap())
    };
    // Z2: x̄ = (v·x̄ - a·σ²·s·(1-m)/(1+m)) / R, x̄ < 0.
    let z2_m = |x: f64| {
        let q = (v - r) * x / premium;
        (1.0 - q) / (1.0 + q)
    };
    let z2_residual = |x: f64| {
        let m = z2_m(x);
        let ret = -(r - 1.0) * x + premium;
        m - tanh_fraction(ret * (2.0 * s / (1.0 + m)) - params.cost_gap())
    };

    let mut found = Vec::new();
    let mut scan =
        |region: Region, sign: f64, upper: f64, residual: &dyn Fn(f64) -> f64, m_of: &dyn Fn(f64) -> f64| {
            let n = 2000;
            let (lo, hi) = (1e-6f64.ln(), upper.ln());
            let point = |k: usize| sign * (lo + (hi - lo) * k as f64 / n as f64).exp();
            let mut a = point(0);
            let mut fa = residual(a);
            for k in 1..=n {
                let b = point(k);
                let fb = residual(b);
                if fa.is_finite() && fb.is_finite() && fa * fb < 0.0 {
                    let (mut lo, mut hi, mut flo) = (a, b, fa);
                    for _ in 0..100 {
                        let mid = 0.5 * (lo + hi);
                        let fm = residual(mid);
                        if fm * flo > 0.0 {
                            lo = mid;
                            flo = fm;
                        } else {
                            hi = mid;
                        }
                    }
                    let x = 0.5 * (lo + hi);
                    let m = m_of(x);
                    let demands = match region {
                        Region::Z1 => (0.0, 2.0 * s / (1.0 - m)),
                        _ => (2.0 * s / (1.0 + m), 0.0),
                    };
                    found.push(RestrictedFixedPoint {
                        region,
                        x_bar: x,
                        m_bar: m,
                        demands,
                    });
                }
                a = b;
                fa = fb;
            }
        };
    if g > r {
        scan(Region::Z1, 1.0, 1e3 * pbar, &z1_residual, &z1_m);
    }
    scan(Region::Z2, -1.0, 0.999 * pbar, &z2_residual, &z2_m);
    Ok(found)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clearing::Mode;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn params() -> MarketParams {
        MarketParams::default()
    }

    fn chartist(beta: f64, mode: Mode) -> Market {
        Market::new(
            params().with_beta(beta),
            (Predictor::fundamental(0.0), Predictor::chartist(1.2)),
            mode,
        )
        .unwrap()
    }

    #[test]
    fn companion_roots_of_known_polynomials() {
        // λ² - 3λ + 2 = (λ - 1)(λ - 2)
        let mut roots: Vec<f64> = characteristic_roots(&[3.0, -2.0]).iter().map(|z| z.re).collect();
        roots.sort_by(f64::total_cmp);
        assert_abs_diff_eq!(roots[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(roots[1], 2.0, epsilon = 1e-12);
        // λ² + 1
        let roots = characteristic_roots(&[0.0, -1.0]);
        assert!(roots
            .iter()
            .all(|z| (z.norm() - 1.0).abs() < 1e-12 && z.im.abs() > 0.5));
    }

    #[test]
    fn fundamental_equilibrium_chartist_pair() {
        let eq = fundamental_equilibrium(&chartist(0.0, Mode::Unconstrained)).unwrap();
        assert_eq!(eq.m_bar, 0.0);
        assert_eq!(eq.demands, (0.1, 0.1));
        assert_eq!(eq.eigenvalues.len(), 6);
        assert_abs_diff_eq!(eq.spectral_radius(), 1.2 / 2.2, epsilon = 1e-12);

        let beta_tr = 11f64.ln();
        let eq = fundamental_equilibrium(&chartist(beta_tr, Mode::Unconstrained)).unwrap();
        assert_abs_diff_eq!(eq.spectral_radius(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn fundamental_equilibrium_sroc_pair() {
        let market = Market::new(
            params().with_beta(0.0),
            (Predictor::fundamental(0.0), Predictor::smoothed_roc(2, 10.0)),
            Mode::Unconstrained,
        )
        .unwrap();
        let eq = fundamental_equilibrium(&market).unwrap();
        // λ² - γ1 λ - γ2 with γ1 = 3/2.2 and γ2 = -1/1.1
        let (g1, g2) = (3.0 / 2.2, -1.0 / 1.1);
        let mut expected = characteristic_roots(&[g1, g2]);
        let mut got: Vec<Complex64> = eq
            .eigenvalues
            .iter()
            .copied()
            .filter(|z| z.norm() > 1e-9)
            .collect();
        let key = |z: &Complex64| (z.im * 1e6).round();
        expected.sort_by(|a, b| key(a).total_cmp(&key(b)));
        got.sort_by(|a, b| key(a).total_cmp(&key(b)));
        assert_eq!(got.len(), 2);
        for (a, b) in got.iter().zip(&expected) {
            assert_abs_diff_eq!((a - b).norm(), 0.0, epsilon = 1e-12);
        }
        // product of the roots is -γ2
        assert_abs_diff_eq!((got[0] * got[1]).re, 1.0 / 1.1, epsilon = 1e-12);
    }

    #[test]
    fn chartist_threshold_values() {
        let t = chartist_thresholds(&params(), 0.0, 1.2).unwrap();
        let ln11 = 11f64.ln();
        assert_eq!(t.regime, ChartistRegime::Intermediate);
        assert_abs_diff_eq!(t.beta_tr.unwrap(), ln11, epsilon = 1e-12);
        assert_abs_diff_eq!(t.beta_lp.unwrap(), ln11 / 1.03, epsilon = 1e-12);
        assert_abs_diff_eq!(
            t.beta_bc_plus.unwrap(),
            ln11 / (1.0 + 0.012 / 1.21),
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(t.beta_bc_minus.unwrap(), ln11 / 0.76, epsilon = 1e-12);
        assert_abs_diff_eq!(t.x_lp.unwrap(), 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(t.x_bc_plus.unwrap(), 1.0 / 11.0, epsilon = 1e-12);
        assert_abs_diff_eq!(t.x_bc_minus.unwrap(), -1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(t.s_bc_minus.unwrap(), (1.0f64 / 24.0).sqrt(), epsilon = 1e-12);
        assert!(!t.unbounded_warning);
    }

    #[test]
    fn pitchfork_at_zero_supply() {
        let t = chartist_thresholds(&params().with_supply(0.0), 0.0, 1.2).unwrap();
        assert_abs_diff_eq!(t.beta_lp.unwrap(), t.beta_tr.unwrap(), epsilon = 1e-15);
    }

    #[test]
    fn weak_trend_has_no_thresholds() {
        let t = chartist_thresholds(&params(), 0.0, 1.05).unwrap();
        assert_eq!(t.regime, ChartistRegime::FundamentalOnly);
        assert!(t.entries().is_empty());
        assert!(chartist_thresholds(&params(), 0.0, 1.0).is_err());
        assert!(chartist_thresholds(&params(), 1.0, 1.2).is_err());
    }

    #[test]
    fn strong_trend_flags_negative_thresholds() {
        // g > 2R - v and g > R²
        let t = chartist_thresholds(&params(), 0.0, 2.5).unwrap();
        assert_eq!(t.regime, ChartistRegime::StrongTrend);
        assert!(t.beta_tr.is_none() && t.beta_lp.is_none());
        assert!(t.unbounded_warning);
    }

    #[test]
    fn threshold_ordering() {
        let t = chartist_thresholds(&params(), 0.0, 1.2).unwrap();
        let (lp, bcp, tr, bcm) = (
            t.beta_lp.unwrap(),
            t.beta_bc_plus.unwrap(),
            t.beta_tr.unwrap(),
            t.beta_bc_minus.unwrap(),
        );
        assert!(lp < bcp && bcp < tr && tr < bcm);
    }

    #[test]
    fn nonfundamental_equilibria_at_beta_three() {
        let (plus, minus) = nonfundamental_equilibria(&params().with_beta(3.0), 0.0, 1.2).unwrap();
        assert_abs_diff_eq!(plus.m_bar, 1.0 - 2.0 * 1.1 / 1.2, epsilon = 1e-12);
        assert_eq!(plus.status, Admissibility::Virtual);
        assert_eq!(minus.status, Admissibility::Admissible);
        // Independent check: both satisfy the scalar fixed-point condition
        // m̄ = tanh(-β/2·((-(R-1)x̄ + a σ² s)(g - v)x̄/(a σ²) + C)).
        for eq in [&plus, &minus] {
            let x = eq.x_bar;
            let rhs = (-1.5 * ((-0.1 * x + 0.1) * 1.2 * x + 1.0)).tanh();
            assert_abs_diff_eq!(eq.m_bar, rhs, epsilon = 1e-12);
        }
        assert!(plus.x_bar > 1.88 && plus.x_bar < 1.89);
        assert_abs_diff_eq!(plus.x_bar + minus.x_bar, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn nonfundamental_equilibria_at_limit_point_and_transcritical() {
        let t = chartist_thresholds(&params(), 0.0, 1.2).unwrap();
        let (plus, minus) =
            nonfundamental_equilibria(&params().with_beta(t.beta_lp.unwrap()), 0.0, 1.2).unwrap();
        assert_abs_diff_eq!(plus.x_bar, 0.5, epsilon = 1e-7);
        assert_abs_diff_eq!(minus.x_bar, 0.5, epsilon = 1e-7);
        let (_, minus) =
            nonfundamental_equilibria(&params().with_beta(t.beta_tr.unwrap()), 0.0, 1.2).unwrap();
        assert_abs_diff_eq!(minus.x_bar, 0.0, epsilon = 1e-12);
        let (plus, _) = nonfundamental_equilibria(&params().with_beta(2.0), 0.0, 1.2).unwrap();
        assert_eq!(plus.status, Admissibility::NotDefined);
    }

    #[test]
    fn transcritical_shares_fraction_difference() {
        let t = chartist_thresholds(&params(), 0.0, 1.2).unwrap();
        let m0 = (-t.beta_tr.unwrap() / 2.0).tanh();
        assert_abs_diff_eq!(m0, 1.0 - 2.0 * 1.1 / 1.2, epsilon = 1e-10);
    }

    #[test]
    fn border_collisions_match_locations() {
        // At β_BC⁺ the minus branch reaches x_BC⁺; at β_BC⁻ it reaches x_BC⁻.
        let t = chartist_thresholds(&params(), 0.0, 1.2).unwrap();
        let (_, minus) =
            nonfundamental_equilibria(&params().with_beta(t.beta_bc_plus.unwrap()), 0.0, 1.2).unwrap();
        assert_abs_diff_eq!(minus.x_bar, t.x_bc_plus.unwrap(), epsilon = 1e-10);
        let (_, minus) =
            nonfundamental_equilibria(&params().with_beta(t.beta_bc_minus.unwrap()), 0.0, 1.2).unwrap();
        assert_abs_diff_eq!(minus.x_bar, t.x_bc_minus.unwrap(), epsilon = 1e-10);
    }

    #[test]
    fn roc_ns_threshold_values() {
        assert_abs_diff_eq!(roc_ns_threshold(&params()), (1.1f64 / 0.9).ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(roc_ns_threshold(&params()), 0.200_670_695, epsilon = 1e-9);
        let mut p = params();
        p.gross_return = 2.0;
        p.allow_high_return = true;
        assert_eq!(roc_ns_threshold(&p), f64::INFINITY);
        let mut p = params();
        p.gross_return = 1.5;
        p.cost_fundamental = 2.0;
        p.mean_dividend = 2.0;
        assert_abs_diff_eq!(roc_ns_threshold(&p), 0.5 * 3f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn fundamental_ns_bisection_for_sroc() {
        let market = Market::new(
            params(),
            (Predictor::fundamental(0.0), Predictor::smoothed_roc(2, 10.0)),
            Mode::Unconstrained,
        )
        .unwrap();
        let beta = fundamental_stability_crossing(&market, (0.0, 2.0))
            .unwrap()
            .unwrap();
        assert_abs_diff_eq!(beta, roc_ns_threshold(&params()), epsilon = 1e-5);
    }

    #[test]
    fn ns_search_on_minus_branch() {
        let t = chartist_thresholds(&params(), 0.0, 1.2).unwrap();
        let beta = ns_bifurcation_search(&params(), 0.0, 1.2, Branch::Minus, (t.beta_tr.unwrap(), 6.0))
            .unwrap()
            .expect("crossing");
        assert!(beta > t.beta_tr.unwrap() && beta < 6.0);
        let below = nonfundamental_equilibria(&params().with_beta(beta - 1e-3), 0.0, 1.2)
            .unwrap()
            .1;
        let above = nonfundamental_equilibria(&params().with_beta(beta + 1e-3), 0.0, 1.2)
            .unwrap()
            .1;
        assert!(below.is_stable() && !above.is_stable());
        // complex pair at the crossing
        assert!(above
            .eigenvalues
            .iter()
            .any(|l| l.norm() > 1.0 && l.im.abs() > 1e-6));
    }

    #[test]
    fn ns_plus_comparator_predicts_order() {
        for s in [0.1, 0.2, 0.3] {
            let p = params().with_supply(s);
            let t = chartist_thresholds(&p, 0.0, 1.2).unwrap();
            let lp = t.beta_lp.unwrap();
            let ns = ns_bifurcation_search(&p, 0.0, 1.2, Branch::Plus, (lp + 1e-9, 20.0))
                .unwrap()
                .expect("crossing");
            let tr = t.beta_tr.unwrap();
            let comparator = t.beta_ns_plus_comparator.unwrap();
            assert_eq!(
                tr < ns,
                tr < comparator,
                "s = {s}: tr {tr}, ns {ns}, cmp {comparator}"
            );
        }
    }

    #[test]
    fn no_crossing_in_stable_interval() {
        let found = ns_bifurcation_search(&params(), 0.0, 1.2, Branch::Minus, (2.5, 2.6)).unwrap();
        assert!(found.is_none());
    }

    #[test]
    fn uniqueness_examples() {
        let p = params();
        let grid = default_probe_grid(9.0);
        let sroc = uniqueness_check(
            (Predictor::fundamental(0.0), Predictor::smoothed_roc(2, 10.0)),
            &p,
            &grid,
        )
        .unwrap();
        assert!(sroc.holds());
        let chart =
            uniqueness_check((Predictor::fundamental(0.0), Predictor::chartist(1.2)), &p, &grid).unwrap();
        assert!(!chart.holds());
        let funds = uniqueness_check(
            (Predictor::fundamental(0.2), Predictor::fundamental(0.7)),
            &p,
            &grid,
        )
        .unwrap();
        assert!(funds.holds());
    }

    #[test]
    fn finite_difference_eigenvalues_at_fundamental() {
        let market = chartist(1.0, Mode::Unconstrained);
        let eq = fundamental_equilibrium(&market).unwrap();
        let jac = step_jacobian(&market, &eq.state(&market), JACOBIAN_STEP).unwrap();
        let fd = spectral_radius(&matrix_eigenvalues(&jac));
        assert_relative_eq!(fd, eq.spectral_radius(), max_relative = 1e-5);
    }

    #[test]
    fn admissible_equilibrium_is_fixed_by_step() {
        let p = params().with_beta(3.0);
        let (_, minus) = nonfundamental_equilibria(&p, 0.0, 1.2).unwrap();
        let market = chartist(3.0, Mode::Constrained);
        let state = minus.state(&market);
        let (outcome, next) = market.step(&state).unwrap();
        assert_abs_diff_eq!(outcome.x, minus.x_bar, epsilon = 1e-10);
        assert_abs_diff_eq!(next.m, minus.m_bar, epsilon = 1e-10);
    }

    #[test]
    fn restricted_fixed_points_are_on_the_right_side() {
        let found = restricted_fixed_points(&params().with_beta(3.0), 0.0, 1.2).unwrap();
        for fp in &found {
            match fp.region {
                crate::clearing::Region::Z1 => assert!(fp.x_bar > 0.0),
                _ => assert!(fp.x_bar < 0.0),
            }
            assert!(fp.m_bar > -1.0 && fp.m_bar < 1.0);
        }
    }
}
