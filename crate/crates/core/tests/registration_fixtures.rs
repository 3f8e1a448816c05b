use caricature::mesh::SpatialIndex;
use caricature::metrics::mean_surface_distance;
use caricature::multiview::LandmarkSet3D;
use caricature::registration::{nicp, register_with_pca, LandmarkPairs, NicpConfig};
use caricature::synth::{self, HeadParams, HEAD_LEVELS};

fn landmark_rms(mesh: &caricature::mesh::Mesh, ids: &[usize], targets: &[nalgebra::Point3<f64>]) -> f64 {
    let sum: f64 = ids.iter().zip(targets).map(|(&i, t)| (mesh.vertices[i] - t).norm_squared()).sum();
    (sum / ids.len() as f64).sqrt()
}

#[test]
fn landmarks_prevent_collapse_on_an_exaggerated_nose() {
    let template = HeadParams::neutral().mesh(HEAD_LEVELS);
    let target = HeadParams::exaggerated_nose(4.0).mesh(HEAD_LEVELS);
    let ids = synth::landmark_vertex_ids(HEAD_LEVELS);
    let truth = LandmarkSet3D::from_vertices(&target, &ids).unwrap();
    let pairs = LandmarkPairs::new(&ids, &truth.points).unwrap();

    let guided = nicp(&template, &target, &pairs, &NicpConfig::default()).unwrap();
    let unguided_config = NicpConfig { landmark_weight: 0.0, ..Default::default() };
    let unguided = nicp(&template, &target, &pairs, &unguided_config).unwrap();

    let g = landmark_rms(&guided.mesh, &ids, &truth.points);
    let u = landmark_rms(&unguided.mesh, &ids, &truth.points);
    println!("guided landmark rms {g:.6}, unguided {u:.6}");
    assert!(g < u);
}

#[test]
fn projection_removes_spike_outliers() {
    let basis = synth::default_basis(0).unwrap();
    let ids = synth::landmark_vertex_ids(HEAD_LEVELS);
    let head = synth::blend_corpus(&basis, &ids, 1, 0).unwrap().remove(0);
    let (spiked, _) = synth::add_spikes(&head.mesh, 0.01, 0.06, 0).unwrap();
    let template = basis.mean_mesh();
    let pairs = LandmarkPairs::new(&ids, &head.landmarks.points).unwrap();
    let config = NicpConfig { outer_rounds: 6, ..Default::default() };
    let result = register_with_pca(&template, &spiked, &pairs, &basis, &config).unwrap();

    let snapped = basis.pca_snap(&result.pca, None).unwrap();
    let drift = snapped.vertices.iter().zip(&result.pca.vertices).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
    assert!(drift < 1e-12, "{drift}");

    let clean = SpatialIndex::build(&head.mesh);
    let p_nicp = mean_surface_distance(&result.nicp.vertices, &clean);
    let p_pca = mean_surface_distance(&result.pca.vertices, &clean);
    println!("p2s to clean: nicp {p_nicp:.6}, pca {p_pca:.6}");
    assert!(p_pca < p_nicp);
}
