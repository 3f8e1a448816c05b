use caricature::implicit::{
    marching_cubes, occupancy_loss, predict_occupancy, rasterize_field, sample_training_points, train_occupancy, FeatureMap,
    FeatureVolumeInput, FnField, GridSpec, OccupancyPredictor, OccupancyTrainConfig, SamplingConfig,
};
use caricature::mesh::shapes::icosphere;
use caricature::metrics::{p2s, P2sOptions};
use caricature::multiview::ViewId;
use caricature::multiview::ViewCamera;
use nalgebra::{Matrix3, Vector3};

const SIZE: usize = 64;
const SCALE: f64 = 24.0;

/// Front view whose single channel is the unit sphere's half chord along each pixel ray.
fn radial_input() -> FeatureVolumeInput {
    let half = SIZE as f64 / 2.0;
    let map = FeatureMap::from_fn(SIZE, SIZE, 1, |x, y, _| {
        let mx = (x as f64 - half) / SCALE;
        let my = (half - y as f64) / SCALE;
        (1.0 - mx * mx - my * my).max(0.0).sqrt()
    })
    .unwrap();
    let cam = ViewCamera::new(ViewId::Front, Matrix3::identity(), Vector3::zeros(), SCALE, SIZE, SIZE).unwrap();
    FeatureVolumeInput::new(map, cam).unwrap()
}

#[test]
fn toy_sphere_occupancy_is_learned_from_a_radial_feature() {
    let sphere = icosphere(3, 1.0);
    let samples = sample_training_points(&sphere, &SamplingConfig::with_total(1700, 0.2, 7)).unwrap();
    let input = radial_input();
    let net = OccupancyPredictor::with_hidden(1, &[16], 3).unwrap();
    let config = OccupancyTrainConfig { learning_rate: 1e-2, batch_size: Some(50), ..Default::default() };
    let trained = train_occupancy(&net, &input, &samples, &config).unwrap();
    let first = trained.loss_trace[0];
    let last = *trained.loss_trace.last().unwrap();
    assert_eq!(trained.loss_trace.len(), 500);
    assert!(last < 0.01, "loss {first} -> {last}");
    let predictions: Vec<f64> =
        samples.iter().map(|s| predict_occupancy(&trained.predictor, &input, &s.point).unwrap()).collect();
    let labels: Vec<f64> = samples.iter().map(|s| s.occupancy).collect();
    let after = occupancy_loss(&predictions, &labels).unwrap();
    assert!(after < 0.01, "{after}");
}

#[test]
fn marched_unit_sphere_stays_within_a_cell_of_the_surface() {
    let spec = GridSpec::cube(-1.5, 1.5, 64).unwrap();
    let grid = rasterize_field(&FnField(|p: &nalgebra::Point3<f64>| if p.coords.norm() < 1.0 { 1.0 } else { 0.0 }), &spec)
        .unwrap();
    let mesh = marching_cubes(&grid, 0.5).unwrap();
    let cell = spec.cell_size().x;
    let mean = mesh.vertices.iter().map(|v| (v.coords.norm() - 1.0).abs()).sum::<f64>() / mesh.vertices.len() as f64;
    assert!(mean < cell, "mean radial error {mean} vs cell {cell}");
    let reference = icosphere(5, 1.0);
    let score = p2s(&mesh, &reference, &P2sOptions { align: false, ..Default::default() }).unwrap();
    assert!(score < cell, "{score}");
}
