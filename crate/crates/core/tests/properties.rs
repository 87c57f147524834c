//! Randomized invariant suites over the market map (10⁴ states each).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use uptick_core::clearing::{candidate_demands, classify};
use uptick_core::dynamics::simulate;
use uptick_core::equilibria::{fundamental_equilibrium, nonfundamental_equilibria, Admissibility};
use uptick_core::model::{clear_unconstrained, fractions, optimal_demand, update_fraction_difference};
use uptick_core::*;

const CASES: usize = 10_000;

fn rng(stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    rng.set_stream(stream);
    rng
}

fn random_predictor(rng: &mut ChaCha8Rng) -> Predictor {
    match rng.gen_range(0..4) {
        0 => Predictor::fundamental(rng.gen_range(0.0..0.95)),
        1 => Predictor::chartist(rng.gen_range(1.01..2.0)),
        2 => Predictor::roc(rng.gen_range(2..5)),
        _ => Predictor::smoothed_roc(rng.gen_range(2..5), rng.gen_range(0.5..20.0)),
    }
}

fn random_market(rng: &mut ChaCha8Rng, mode: Mode) -> Market {
    let params = MarketParams {
        supply: rng.gen_range(0.01..0.3),
        beta: rng.gen_range(0.0..6.0),
        ..MarketParams::default()
    };
    let pair = (random_predictor(rng), random_predictor(rng));
    Market::new(params, pair, mode).unwrap()
}

fn random_state(rng: &mut ChaCha8Rng, market: &Market) -> MarketState {
    let history: Vec<f64> = (0..market.window_capacity())
        .map(|_| rng.gen_range(-3.0..3.0))
        .collect();
    let m = rng.gen_range(-0.99..0.99);
    let z = (rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
    MarketState::from_history(history, m, z, market.window_capacity()).unwrap()
}

/// A random constrained market and state in Z1 or Z2 (downtick, one
/// negative candidate demand).
fn restricted_case(rng: &mut ChaCha8Rng) -> (Market, MarketState, Region) {
    loop {
        let market = random_market(rng, Mode::Constrained);
        let mut state = random_state(rng, &market);
        if state.deviations[0] > state.deviations[1] {
            state.deviations.swap(0, 1);
        }
        let Ok(predictions) = market.predictions(&state.deviations) else {
            continue;
        };
        let candidate = candidate_demands(predictions, state.m, &market.params);
        match classify(state.deviations[0], state.deviations[1], candidate) {
            Ok(region @ (Region::Z1 | Region::Z2)) => return (market, state, region),
            _ => continue,
        }
    }
}

fn fundamental_chartist(rng: &mut ChaCha8Rng, mode: Mode) -> (Market, f64, f64) {
    let v = rng.gen_range(0.0..0.9);
    let g = rng.gen_range(1.01..2.0);
    let params = MarketParams {
        supply: rng.gen_range(0.01..0.3),
        beta: rng.gen_range(0.0..6.0),
        ..MarketParams::default()
    };
    let market = Market::new(params, (Predictor::fundamental(v), Predictor::chartist(g)), mode).unwrap();
    (market, v, g)
}

#[test]
fn clearing_residual_both_modes() {
    let mut rng = rng(1);
    let mut checked = 0;
    for _ in 0..CASES {
        for mode in [Mode::Constrained, Mode::Unconstrained] {
            let market = random_market(&mut rng, mode);
            let state = random_state(&mut rng, &market);
            if let Ok((outcome, _)) = market.step(&state) {
                let residual = outcome.clearing_residual(market.params.supply);
                assert!(
                    residual < CLEARING_TOLERANCE,
                    "residual {residual} in {:?}",
                    outcome.region
                );
                checked += 1;
            }
        }
    }
    assert!(checked > CASES);
}

#[test]
fn branch_consistency() {
    let mut rng = rng(2);
    let mut regions = std::collections::HashSet::new();
    for _ in 0..CASES {
        let market = random_market(&mut rng, Mode::Constrained);
        let state = random_state(&mut rng, &market);
        let Ok((outcome, next)) = market.step(&state) else {
            continue;
        };
        // The realized window holds the two deviations that decided the tick.
        let (x1, x2) = (next.deviations[1], next.deviations[2]);
        let candidate = candidate_demands(outcome.predictions, outcome.m, &market.params);
        assert_eq!(classify(x1, x2, candidate).unwrap(), outcome.region);
        match outcome.region {
            Region::Z1 => assert_eq!(outcome.demands.0, 0.0),
            Region::Z2 => assert_eq!(outcome.demands.1, 0.0),
            _ => assert_eq!(outcome.demands, candidate),
        }
        regions.insert(outcome.region);
    }
    assert_eq!(regions.len(), 4, "{regions:?}");
}

#[test]
fn price_raising_in_restricted_regions() {
    let mut rng = rng(3);
    for _ in 0..CASES {
        let (market, state, region) = restricted_case(&mut rng);
        let (constrained, _) = market.step(&state).unwrap();
        let (free, _) = market.with_mode(Mode::Unconstrained).step(&state).unwrap();
        assert_eq!(constrained.region, region);
        assert!(
            constrained.x > free.x,
            "{region}: {} <= {}",
            constrained.x,
            free.x
        );

        // Gap oracle: x^(h) - x^(0) = -(a σ²/R)·(n_h/n_k)·z_h^(0).
        let (n1, n2) = fractions(state.m);
        let (ratio, z) = match region {
            Region::Z1 => (n1 / n2, free.demands.0),
            _ => (n2 / n1, free.demands.1),
        };
        let gap = -market.params.risk_scale() / market.params.gross_return * ratio * z;
        let scale = 1.0 + gap.abs();
        assert!(((constrained.x - free.x) - gap).abs() < 1e-9 * scale);
    }
}

#[test]
fn continuity_across_demand_borders() {
    let mut rng = rng(4);
    for _ in 0..CASES {
        let (market, v, g) = fundamental_chartist(&mut rng, Mode::Constrained);
        let params = market.params;
        let m = rng.gen_range(-0.95..0.95);
        let (n1, n2) = fractions(m);
        let scale = params.risk_scale();
        let s = params.supply;
        // z1 = -n2 (g - v) x / aσ² + s vanishes at x = aσ² s / (n2 (g - v)); z2 at the mirror.
        let borders = [
            (Region::Z1, scale * s / (n2 * (g - v)), 1.0),
            (Region::Z2, -scale * s / (n1 * (g - v)), -1.0),
        ];
        for (region, border, inward) in borders {
            if border <= -0.9 * market.fundamental_price() {
                continue;
            }
            let delta = 1e-12 * (1.0 + border.abs());
            let price = |x: f64| {
                let state =
                    MarketState::from_history(vec![x, x + 1.0], m, (s, s), market.window_capacity()).unwrap();
                market.step(&state).map(|(o, _)| o)
            };
            let (Ok(inside), Ok(outside)) = (price(border + inward * delta), price(border - inward * delta))
            else {
                continue;
            };
            assert_eq!(inside.region, region);
            assert_eq!(outside.region, Region::Z0);
            assert!(
                (inside.x - outside.x).abs() < 1e-10,
                "{region} gap {}",
                inside.x - outside.x
            );
        }
    }
}

#[test]
fn discontinuity_across_tick_border() {
    let mut rng = rng(5);
    let mut largest_gap: f64 = 0.0;
    for _ in 0..CASES {
        let (market, mut state, region) = restricted_case(&mut rng);
        // Put the state exactly on the tick border, then just above it.
        state.deviations[1] = state.deviations[0];
        let Ok((on_border, _)) = market.step(&state) else {
            continue;
        };
        let mut uptick = state.clone();
        uptick.deviations[1] -= 1e-12 * (1.0 + state.deviations[0].abs());
        let Ok((above, _)) = market.step(&uptick) else {
            continue;
        };
        assert_eq!(above.region, Region::U);
        if on_border.region == region {
            let gap = on_border.x - above.x;
            assert!(gap > 0.0);
            largest_gap = largest_gap.max(gap);
        }
    }
    assert!(largest_gap > 1e-2, "largest gap {largest_gap}");
}

#[test]
fn general_clearing_matches_step() {
    let mut rng = rng(6);
    let mut seen = std::collections::HashSet::new();
    for _ in 0..CASES {
        let market = random_market(&mut rng, Mode::Constrained);
        let mut state = random_state(&mut rng, &market);
        if state.deviations[0] > state.deviations[1] {
            state.deviations.swap(0, 1);
        }
        let Ok((outcome, _)) = market.step(&state) else {
            continue;
        };
        let (n1, n2) = fractions(state.m);
        let curves = [
            DemandCurve::new(outcome.predictions.0, n1, &market.params),
            DemandCurve::new(outcome.predictions.1, n2, &market.params),
        ];
        let x = clear_general(&curves, market.params.supply).unwrap();
        assert!(
            (x - outcome.x).abs() < 1e-10 * (1.0 + x.abs()),
            "{}: {x} vs {}",
            outcome.region,
            outcome.x
        );
        seen.insert(outcome.region);
    }
    assert!(seen.contains(&Region::Z0) && seen.contains(&Region::Z1) && seen.contains(&Region::Z2));
}

#[test]
fn contraction_for_weak_trend() {
    let mut rng = rng(7);
    for _ in 0..CASES {
        let r = MarketParams::default().gross_return;
        let v = rng.gen_range(0.0..0.99);
        let g = rng.gen_range(1.0 + 1e-6..r);
        let params = MarketParams::default().with_beta(rng.gen_range(0.0..20.0));
        let market = Market::new(
            params,
            (Predictor::fundamental(v), Predictor::chartist(g)),
            Mode::Unconstrained,
        )
        .unwrap();
        let state = random_state(&mut rng, &market);
        let (outcome, _) = market.step(&state).unwrap();
        assert!(outcome.x.abs() < state.deviations[0].abs());
    }
}

#[test]
fn common_beliefs_and_positivity() {
    let mut rng = rng(8);
    let params = MarketParams::default();
    let pbar = params.validate().unwrap();
    for _ in 0..CASES {
        let m = rng.gen_range(-0.999..0.999);
        let f = rng.gen_range(-pbar + 1e-6..3.0 * pbar);
        let x = clear_unconstrained((f, f), m, &params);
        assert!((x - f / params.gross_return).abs() < 1e-12 * (1.0 + f.abs()));
        assert!((optimal_demand(f, x, &params) - params.supply).abs() < 1e-12);

        let f1 = rng.gen_range(-pbar + 1e-9..3.0 * pbar);
        let f2 = rng.gen_range(-pbar + 1e-9..3.0 * pbar);
        assert!(clear_unconstrained((f1, f2), m, &params) > -pbar);

        let ret = rng.gen_range(-1e6..1e6);
        let z = (rng.gen_range(-1e3..1e3), rng.gen_range(-1e3..1e3));
        let p = params.with_beta(rng.gen_range(0.0..1e3));
        let next = update_fraction_difference(ret, z, &p);
        assert!(next > -1.0 && next < 1.0);
    }
}

#[test]
fn unconstrained_chartist_orbits_keep_their_sign() {
    let mut rng = rng(9);
    for _ in 0..200 {
        let beta = rng.gen_range(0.0..6.0);
        let market = Market::new(
            MarketParams::default().with_beta(beta),
            (Predictor::fundamental(0.0), Predictor::chartist(1.2)),
            Mode::Unconstrained,
        )
        .unwrap();
        let x0: f64 = rng.gen_range(0.001..1.5) * if rng.gen() { 1.0 } else { -1.0 };
        let orbit = simulate(&market, x0, 0.0, 2000, 0).unwrap();
        assert!(orbit
            .deviations()
            .iter()
            .all(|x| x.signum() == x0.signum() || *x == 0.0));
    }
}

#[test]
fn restricted_periods_raise_prices_along_orbits() {
    let mut restricted = 0;
    for x0 in [-1.0, -0.5, -0.1, 0.1, 0.5] {
        let market = Market::new(
            MarketParams::default().with_beta(4.0),
            (Predictor::fundamental(0.0), Predictor::chartist(1.2)),
            Mode::Constrained,
        )
        .unwrap();
        let free = market.with_mode(Mode::Unconstrained);
        let mut state = market.opening_state(x0, 0.0);
        for _ in 0..5000 {
            let (alternative, _) = free.step(&state).unwrap();
            let outcome = market.advance(&mut state).unwrap();
            if outcome.region.is_restricted() {
                assert!(outcome.x > alternative.x);
                restricted += 1;
            }
        }
    }
    assert!(restricted > 100);
}

#[test]
fn simulation_is_bit_reproducible() {
    let mut rng = rng(10);
    for _ in 0..50 {
        let mode = if rng.gen() {
            Mode::Constrained
        } else {
            Mode::Unconstrained
        };
        let market = random_market(&mut rng, mode);
        let x0 = rng.gen_range(-1.0..1.0);
        let a = simulate(&market, x0, 0.0, 300, 100);
        let b = simulate(&market, x0, 0.0, 300, 100);
        assert_eq!(a, b);
    }
}

/// A real eigenvalue crossing +1 (or -1) makes Π(1 - λ) (or Π(-1 - λ))
/// vanish and change sign.
#[test]
fn sroc_fundamental_has_no_real_unit_crossing() {
    let market = Market::new(
        MarketParams::default(),
        (Predictor::fundamental(0.0), Predictor::smoothed_roc(2, 10.0)),
        Mode::Unconstrained,
    )
    .unwrap();
    let characteristic = |beta: f64, at: f64| {
        let eq = fundamental_equilibrium(&market.with_beta(beta)).unwrap();
        eq.eigenvalues
            .iter()
            .fold(num_complex::Complex64::new(1.0, 0.0), |acc, l| acc * (at - l))
            .re
    };
    for at in [1.0, -1.0] {
        let reference = characteristic(0.0, at).signum();
        for k in 0..=2000 {
            let beta = k as f64 * 0.01;
            let value = characteristic(beta, at);
            assert!(
                value.signum() == reference && value.abs() > 1e-6,
                "P({at}) = {value} at beta {beta}"
            );
        }
    }
}

#[test]
fn admissible_equilibria_are_fixed_points() {
    for s in [0.05, 0.1, 0.2, 0.3] {
        for k in 0..200 {
            let beta = 0.05 + k as f64 * 0.05;
            let params = MarketParams::default().with_supply(s).with_beta(beta);
            let market = Market::new(
                params,
                (Predictor::fundamental(0.0), Predictor::chartist(1.2)),
                Mode::Constrained,
            )
            .unwrap();
            let (plus, minus) = nonfundamental_equilibria(&params, 0.0, 1.2).unwrap();
            for eq in [plus, minus] {
                let check = match eq.status {
                    Admissibility::Admissible => market,
                    Admissibility::Virtual => market.with_mode(Mode::Unconstrained),
                    Admissibility::NotDefined => continue,
                };
                let (outcome, next) = check.step(&eq.state(&check)).unwrap();
                assert!((outcome.x - eq.x_bar).abs() < 1e-10);
                assert!((next.m - eq.m_bar).abs() < 1e-10);
                assert!((outcome.demands.0 - eq.demands.0).abs() < 1e-10);
                assert!((outcome.demands.1 - eq.demands.1).abs() < 1e-10);
            }
        }
    }
}
