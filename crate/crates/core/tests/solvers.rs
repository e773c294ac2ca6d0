//! Cross-checks between independent solvers through the public API.

use std::sync::Arc;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wassball::attack::{run_attack, AttackConfig, AttackMethod, QuadraticLoss};
use wassball::dualproj::project_ball;
use wassball::dykstra::dykstra_project;
use wassball::lmo::{entropic_lmo, exact_dual_solve, LmoConfig};
use wassball::oracle::{lmo_exact, wasserstein_exact};
use wassball::{build_euclidean_cost, BallSpec, Block, GridShape, LocalCost};

fn random_ball(rng: &mut ChaCha8Rng, side: usize, k: usize, epsilon: f64) -> BallSpec {
    let cost = Arc::new(build_euclidean_cost(GridShape::square(side).unwrap(), k).unwrap());
    let x: Vec<f64> = (0..cost.n()).map(|_| rng.random_range(0.0..1.0)).collect();
    BallSpec::new(cost, x, epsilon).unwrap()
}

fn random_block(rng: &mut ChaCha8Rng, cost: &Arc<LocalCost>, scale: f64) -> Block {
    Block::from_fn(cost.clone(), |_, _| rng.random_range(-scale..scale))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn projection_matches_dykstra(seed in 0u64..10_000, epsilon in 0.01f64..0.3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ball = random_ball(&mut rng, 3, 3, epsilon);
        let g = random_block(&mut rng, ball.cost(), 0.5);
        let p = project_ball(&g, &ball, 1e-10).unwrap();
        let d = dykstra_project(&g, &ball, 20_000, 0.0).unwrap();
        let ours = p.coupling.block().half_dist_sq(&g);
        let reference = d.coupling.block().half_dist_sq(&g);
        prop_assert!((ours - reference).abs() <= 1e-6 * reference.max(1e-3), "{ours} vs {reference}");
    }

    #[test]
    fn projection_is_idempotent(seed in 0u64..10_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ball = random_ball(&mut rng, 4, 3, 0.1);
        let g = random_block(&mut rng, ball.cost(), 1.0);
        let once = project_ball(&g, &ball, 1e-11).unwrap();
        let twice = project_ball(once.coupling.block(), &ball, 1e-11).unwrap();
        prop_assert!(once.coupling.block().half_dist_sq(twice.coupling.block()) <= 1e-14);
    }

    #[test]
    fn entropic_lmo_approaches_lp(seed in 0u64..10_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ball = random_ball(&mut rng, 3, 3, 0.2);
        let h = random_block(&mut rng, ball.cost(), 1.0);
        let (lp, _) = lmo_exact(&h, &ball).unwrap();
        let exact = exact_dual_solve(&h, &ball, 1e-12).unwrap();
        prop_assert!((lp - exact.value).abs() <= 1e-7);
        let s = entropic_lmo(&h, &ball, &LmoConfig::entropic(1e-4).with_tol(1e-10)).unwrap();
        let value = s.coupling.block().dot(&h);
        prop_assert!(s.coupling.transport_cost() <= ball.radius() + 1e-9);
        // Feasible, so never below the LP optimum; the entropy costs at most
        // γ·Σxᵢ·log(k²).
        let slack = 1e-4 * ball.mass() * 9f64.ln();
        prop_assert!(value >= lp - 1e-9 && value <= lp + slack + 1e-6, "{value} vs {lp}");
    }
}

#[test]
fn projection_attacks_reach_the_sphere() {
    let cost = Arc::new(build_euclidean_cost(GridShape::square(6).unwrap(), 5).unwrap());
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let raw = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        let v: Vec<f64> = (0..36).map(|_| rng.random_range(0.0..1.0)).collect();
        let s: f64 = v.iter().sum();
        v.iter().map(|a| a / s).collect()
    };
    let x = raw(&mut rng);
    let b = raw(&mut rng);
    let wxb = wasserstein_exact(&x, &b, &cost).unwrap();
    let loss = QuadraticLoss { target: b };
    for (method, epsilon) in [
        (AttackMethod::PgdDualProjection, 0.5 * wxb),
        (AttackMethod::FwDualLmo, 0.5 * wxb),
        (AttackMethod::PgdDualProjection, 2.0 * wxb),
    ] {
        let config = AttackConfig {
            method,
            epsilon,
            iterations: 10_000,
            step_size: 0.05,
            stop_tol: 1e-12,
            k: 5,
            tol: 1e-9,
            normalize: method == AttackMethod::FwDualLmo,
            warm_start: true,
            ..AttackConfig::default()
        };
        let r = run_attack(&loss, &cost, &x, 0, &config).unwrap();
        let w = wasserstein_exact(&x, &r.adversarial, &cost).unwrap();
        let expected = epsilon.min(wxb);
        assert!(
            (w - expected).abs() <= 2e-3,
            "{method:?} at {epsilon}: {w} vs {expected}"
        );
    }
}
