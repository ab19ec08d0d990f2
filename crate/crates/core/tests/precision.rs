//! The single-precision instantiation follows the double-precision one.

use e2m::geometry::validate_weights;
use e2m::model::{train, TrainConfig};
use e2m::rng::substream;
use e2m::space::{laplacian_from_edges, Network, SpdBw, SpdMatrix};
use e2m::{GfrModel32, MetricSpace};
use rand::Rng;

#[test]
fn f32_training_runs_and_predicts_valid_points() {
    let mut rng = substream(1, "f32", 0);
    let x: Vec<Vec<f32>> = (0..40).map(|_| vec![rng.random(), rng.random()]).collect();
    let y: Vec<_> = x.iter().map(|r| laplacian_from_edges(&[r[0], r[1], 0.5f32], 3).unwrap()).collect();
    let cfg = TrainConfig { epochs: 20, hidden: vec![8, 8], eval_every: 5, ..Default::default() };
    let space = Network::new(3);
    let (model, hist) = train(&space, &x, &y, &cfg).unwrap();
    assert!(hist.records.iter().all(|r| r.holdout_mspe.is_finite()));
    for xi in &x[..5] {
        space.validate(&model.predict(xi).unwrap()).unwrap();
    }
    let gfr: GfrModel32<Network> = GfrModel32::fit(space.clone(), &x, &y).unwrap();
    space.validate(&gfr.predict(&[0.3, 0.7]).unwrap()).unwrap();
}

#[test]
fn f32_bw_gradient_tracks_f64() {
    let mut rng = substream(2, "f32", 0);
    let anchors: Vec<SpdMatrix<f64>> = (0..3).map(|_| e2m::audit::random_spd(2, &mut rng)).collect();
    let y = e2m::audit::random_spd::<f64, _>(2, &mut rng);
    let w = validate_weights(&[0.2f64, 0.3, 0.5]).unwrap();
    let space = SpdBw::new(2);
    let g64 = space.loss_grad_w(&w, &anchors, &y).unwrap();
    let a32: Vec<SpdMatrix<f32>> = anchors.iter().map(|a| a.cast()).collect();
    let w32 = validate_weights(&[0.2f32, 0.3, 0.5]).unwrap();
    let g32 = space.loss_grad_w(&w32, &a32, &y.cast()).unwrap();
    for (a, b) in g64.iter().zip(&g32) {
        assert!((a - *b as f64).abs() < 1e-3 * a.abs().max(1.0), "{a} vs {b}");
    }
}
