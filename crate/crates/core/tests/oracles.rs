//! Closed-form and fixed-point means against brute-force minimizers, and
//! analytic weight gradients against finite differences.

use e2m::audit::{brute_force_mean, gradient_check, random_spd, PgdConfig, RandomPoint, RawCoords};
use e2m::geometry::validate_weights;
use e2m::rng::{substream, uniform_simplex};
use e2m::space::{ProbGrid, SpdBw, SpdPower, Network, Wasserstein1d};
use e2m::MetricSpace;

fn mean_gap<S: RandomPoint<f64> + RawCoords<f64>>(space: &S, seed: u64) -> f64 {
    let mut rng = substream(seed, "oracle-test", 0);
    let anchors: Vec<S::Point> = (0..3).map(|_| space.random_point(&mut rng)).collect();
    let w = uniform_simplex::<f64, _>(3, &mut rng);
    let fast = space.frechet_mean(&validate_weights(&w).unwrap(), &anchors).unwrap();
    let slow = brute_force_mean(space, &w, &anchors, PgdConfig::default()).unwrap();
    space.distance(&fast, &slow).unwrap()
}

#[test]
fn flat_means_match_brute_force() {
    for seed in 0..3 {
        assert!(mean_gap(&Wasserstein1d::new(ProbGrid::new(20).unwrap()), seed) < 1e-6);
        let g = mean_gap(&Network::new(4), seed);
        assert!(g < 1e-6, "seed {seed}: {g}");
        assert!(mean_gap(&SpdPower::new(2), seed) < 1e-6);
    }
}

#[test]
fn bw_mean_matches_brute_force() {
    for seed in 0..3 {
        let g = mean_gap(&SpdBw::new(2), seed);
        assert!(g < 1e-4, "seed {seed}: {g}");
    }
}

#[test]
fn weight_gradients_match_central_differences() {
    let r = gradient_check(&Wasserstein1d::new(ProbGrid::default()), 10, 5, 1e-5, 7).unwrap();
    assert!(r.max_rel_error < 1e-6, "{r:?}");
    let r = gradient_check(&Network::new(6), 10, 5, 1e-5, 7).unwrap();
    assert!(r.max_rel_error < 1e-6, "{r:?}");
    let r = gradient_check(&SpdPower::new(3), 10, 5, 1e-5, 7).unwrap();
    assert!(r.max_rel_error < 1e-6, "{r:?}");
    let r = gradient_check(&SpdBw::new(2), 10, 5, 1e-5, 7).unwrap();
    assert!(r.max_rel_error < 1e-3, "{r:?}");
}

#[test]
fn power_mean_is_squared_root_average() {
    let mut rng = substream(3, "t", 0);
    let a = random_spd::<f64, _>(3, &mut rng);
    let b = random_spd::<f64, _>(3, &mut rng);
    let space = SpdPower::new(3);
    let m = space.frechet_mean(&validate_weights(&[0.5, 0.5]).unwrap(), &[a.clone(), b.clone()]).unwrap();
    let ra = a.power(0.5).unwrap();
    let rb = b.power(0.5).unwrap();
    let avg = ra.add(&rb).scale(0.5);
    let sq = avg.matrix().matmul(avg.matrix());
    assert!(m.sym().matrix().sub(&sq).max_abs() < 1e-10);
}
