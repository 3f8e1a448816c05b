use std::fs;
use std::path::{Path, PathBuf};

use caricature::mesh::{obj, shapes, Mesh};
use caricature::metrics::{p2s, P2sOptions};
use caricature::morphable::{interpolate, ShapeBasis};
use caricature::multiview::{LandmarkRecords, LandmarkScheme, LandmarkSet3D};
use caricature::registration::LandmarkBinding;
use caricature_cli::{run_with_env, Cli, CliError, CliResult};
use clap::Parser;
use nalgebra::{Point3, Vector3};

fn run(args: &[&str]) -> CliResult<String> {
    let cli = Cli::try_parse_from(std::iter::once("caricature").chain(args.iter().copied())).expect("arguments parse");
    run_with_env(cli, |_| None)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// A three-head corpus whose pipeline config uses a coarser grid.
fn corpus(dir: &Path, seed: &str) -> PathBuf {
    let out = dir.join("corpus");
    run(&["--out", s(&out), "--seed", seed, "synth", "--count", "3"]).unwrap();
    let config = out.join("pipeline.toml");
    let text = fs::read_to_string(&config).unwrap().replace("resolution = 128", "resolution = 64");
    fs::write(&config, text).unwrap();
    out
}

fn read_dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = walk(dir).into_iter().map(|p| (p.strip_prefix(dir).unwrap().display().to_string(), fs::read(&p).unwrap())).collect();
    files.sort();
    files
}

fn walk(dir: &Path) -> Vec<PathBuf> {
    let mut out = vec![];
    for e in fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            out.extend(walk(&p));
        } else {
            out.push(p);
        }
    }
    out
}

fn head(corpus: &Path, i: usize, ext: &str) -> PathBuf {
    corpus.join("heads").join(format!("head_{i:03}.{ext}"))
}

fn stage_of(e: CliError) -> String {
    e.to_string()
}

#[test]
fn synth_is_deterministic_counts_heads_and_stays_in_span() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    run(&["--out", s(&a), "--seed", "5", "synth", "--count", "2"]).unwrap();
    run(&["--out", s(&b), "--seed", "5", "synth", "--count", "2"]).unwrap();
    assert_eq!(read_dir_bytes(&a), read_dir_bytes(&b));
    let heads = walk(&a.join("heads")).into_iter().filter(|p| p.extension().unwrap() == "obj").count();
    assert_eq!(heads, 2);

    let basis = ShapeBasis::load(a.join("basis.bin")).unwrap();
    let manifest = fs::read_to_string(a.join("manifest.csv")).unwrap();
    let row = manifest.lines().find(|l| l.starts_with("head_001")).unwrap();
    let written: Vec<f64> = row.split(',').nth(2).unwrap().split(' ').map(|x| x.parse().unwrap()).collect();
    let mesh = obj::load_mesh(head(&a, 1, "obj")).unwrap();
    let projected = basis.project(&mesh).unwrap();
    for (p, w) in projected.a.iter().zip(&written) {
        // both sides went through 9 significant digits
        assert!((p - w).abs() < 1e-6 * (1.0 + w.abs()), "{p} vs {w}");
    }
}

#[test]
fn reconstruct_is_byte_identical_and_close_to_the_input() {
    let dir = tempfile::tempdir().unwrap();
    let c = corpus(dir.path(), "2");
    let config = c.join("pipeline.toml");
    let (mesh, lm, rig) = (head(&c, 0, "obj"), head(&c, 0, "landmarks.txt"), head(&c, 0, "rig.txt"));
    let go = |out: &Path| {
        run(&[
            "--config",
            s(&config),
            "--out",
            s(out),
            "reconstruct",
            "--mesh",
            s(&mesh),
            "--landmarks",
            s(&lm),
            "--rig",
            s(&rig),
        ])
        .unwrap()
    };
    let (r1, r2) = (dir.path().join("r1"), dir.path().join("r2"));
    go(&r1);
    go(&r2);
    assert_eq!(read_dir_bytes(&r1), read_dir_bytes(&r2));
    for f in ["pifu.obj", "nicp.obj", "pca.obj", "landmarks.txt", "rig.txt", "diagnostics.csv", "rounds.csv", "report.txt"] {
        assert!(r1.join(f).exists(), "{f}");
    }
    let truth = obj::load_mesh(head(&c, 0, "obj")).unwrap();
    let pca = obj::load_mesh(r1.join("pca.obj")).unwrap();
    let d = p2s(&pca, &truth, &P2sOptions { align: false, ..Default::default() }).unwrap();
    assert!(d < 0.02 * truth.diagonal(), "{d}");
    let diag = fs::read_to_string(r1.join("diagnostics.csv")).unwrap();
    assert!(diag.starts_with("round,alpha,p2s,landmark_rms,pruned_fraction\n"));
}

#[test]
fn missing_basis_is_a_config_error_naming_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let c = corpus(dir.path(), "0");
    fs::remove_file(c.join("basis.bin")).unwrap();
    let e = run(&[
        "--config",
        s(&c.join("pipeline.toml")),
        "--out",
        s(&dir.path().join("o")),
        "reconstruct",
        "--mesh",
        s(&head(&c, 0, "obj")),
        "--landmarks",
        s(&head(&c, 0, "landmarks.txt")),
    ])
    .unwrap_err();
    let msg = stage_of(e);
    assert!(msg.starts_with("config error") && msg.contains("basis.bin"), "{msg}");
}

#[test]
fn register_recovers_the_template_and_reports_missing_landmarks() {
    let dir = tempfile::tempdir().unwrap();
    let c = corpus(dir.path(), "0");
    let scheme = LandmarkScheme::default();
    let template = obj::load_mesh(c.join("template.obj")).unwrap();
    let binding = LandmarkBinding::load(c.join("binding.txt"), &scheme).unwrap();
    let records = LandmarkRecords {
        points3d: Some(LandmarkSet3D::from_vertices(&template, &binding.vertex_ids).unwrap()),
        views: Default::default(),
    };
    let lm = dir.path().join("template.landmarks.txt");
    records.save(&lm, &scheme).unwrap();
    let out = dir.path().join("reg");
    let config = c.join("pipeline.toml");
    run(&["--config", s(&config), "--out", s(&out), "register", "--target", s(&c.join("template.obj")), "--landmarks", s(&lm)])
        .unwrap();
    let pca = obj::load_mesh(out.join("pca.obj")).unwrap();
    let worst = pca.vertices.iter().zip(&template.vertices).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
    assert!(worst < 1e-6 * template.diagonal(), "{worst}");
    let rounds = fs::read_to_string(out.join("rounds.csv")).unwrap();
    assert_eq!(rounds.lines().count(), 4);

    let e = run(&[
        "--config",
        s(&config),
        "--out",
        s(&out),
        "register",
        "--target",
        s(&c.join("template.obj")),
        "--landmarks",
        s(&dir.path().join("nope.txt")),
    ])
    .unwrap_err();
    assert!(stage_of(e).contains("nope.txt"));
}

fn write_meshes(dir: &Path, meshes: &[Mesh]) -> PathBuf {
    fs::create_dir_all(dir).unwrap();
    for (i, m) in meshes.iter().enumerate() {
        obj::save_mesh(m, dir.join(format!("m{i}.obj"))).unwrap();
    }
    dir.to_path_buf()
}

fn shifted(m: &Mesh, seed: u64) -> Mesh {
    // deterministic per-vertex displacement, exactly representable in 9 digits
    let mut v = m.clone();
    for (i, p) in v.vertices.iter_mut().enumerate() {
        let k = ((i as u64 * 7 + seed * 13) % 11) as f64;
        *p += Vector3::new(k * 0.01, -k * 0.005, 0.02);
    }
    v
}

#[test]
fn build_basis_closed_form_and_errors() {
    let dir = tempfile::tempdir().unwrap();
    let base = shapes::icosphere(2, 1.0);
    let (a, b) = (shifted(&base, 1), shifted(&base, 2));
    let two = write_meshes(&dir.path().join("two"), &[a.clone(), b.clone()]);
    let out = dir.path().join("basis");
    run(&["--out", s(&out), "build-basis", "--meshes", s(&two), "--components", "1"]).unwrap();
    let basis = ShapeBasis::load(out.join("basis.bin")).unwrap();
    let (a, b) = (obj::load_mesh(two.join("m0.obj")).unwrap(), obj::load_mesh(two.join("m1.obj")).unwrap());
    let diff: f64 = a.vertices.iter().zip(&b.vertices).map(|(p, q)| (p - q).norm_squared()).sum();
    assert!((basis.eigenvalues()[0] - diff / 4.0).abs() < 1e-9, "{} vs {}", basis.eigenvalues()[0], diff / 4.0);
    assert!(fs::read_to_string(out.join("basis_variance.csv")).unwrap().starts_with("component,eigenvalue"));

    let same = write_meshes(&dir.path().join("same"), &[base.clone(), base.clone()]);
    run(&["--out", s(&out), "build-basis", "--meshes", s(&same), "--components", "1"]).unwrap();
    assert_eq!(ShapeBasis::load(out.join("basis.bin")).unwrap().total_variance(), 0.0);

    assert!(run(&["--out", s(&out), "build-basis", "--meshes", s(&two), "--components", "5"]).is_err());

    let bad = write_meshes(&dir.path().join("bad"), &[base.clone(), shapes::icosphere(1, 1.0)]);
    let msg = stage_of(run(&["--out", s(&out), "build-basis", "--meshes", s(&bad)]).unwrap_err());
    assert!(msg.contains("m1.obj"), "{msg}");
}

#[test]
fn detect_landmarks_round_trip_identity_and_scheme_errors() {
    let dir = tempfile::tempdir().unwrap();
    let c = corpus(dir.path(), "3");
    let scheme = LandmarkScheme::default();
    let config = c.join("pipeline.toml");
    let (mesh, lm, rig) = (head(&c, 1, "obj"), head(&c, 1, "landmarks.txt"), head(&c, 1, "rig.txt"));
    let go = |out: &Path, refine: bool| {
        let mut args = vec![
            "--config",
            s(&config),
            "--out",
            s(out),
            "detect-landmarks",
            "--mesh",
            s(&mesh),
            "--landmarks",
            s(&lm),
            "--rig",
            s(&rig),
        ];
        if !refine {
            args.push("--no-refine");
        }
        run(&args).unwrap();
        LandmarkRecords::load(out.join("landmarks.txt"), &scheme).unwrap().points3d.unwrap()
    };
    let lifted = go(&dir.path().join("plain"), false);
    let refined = go(&dir.path().join("refined"), true);
    // an untrained network has a zero head
    assert_eq!(lifted, refined);
    let truth = LandmarkRecords::load(head(&c, 1, "landmarks.txt"), &scheme).unwrap().points3d.unwrap();
    let worst = lifted.points.iter().zip(&truth.points).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
    assert!(worst < 1e-6, "{worst}");

    let bad = dir.path().join("bad.txt");
    fs::write(&bad, "0 elbow 3d 0 0 0\n").unwrap();
    let e = run(&["--config", s(&config), "--out", s(dir.path()), "detect-landmarks", "--mesh", s(&mesh), "--landmarks", s(&bad)]);
    assert!(stage_of(e.unwrap_err()).starts_with("read landmarks failed"));
}

#[test]
fn eval_zero_translation_and_concentric_spheres() {
    let dir = tempfile::tempdir().unwrap();
    let sphere = shapes::icosphere(3, 1.0);
    let moved = sphere.map_vertices(|p| p + Vector3::new(0.25, -0.5, 1.0));
    let big = shapes::icosphere(5, 1.1);
    let d = dir.path();
    for (name, m) in [("s.obj", &sphere), ("moved.obj", &moved), ("big.obj", &big)] {
        obj::save_mesh(m, d.join(name)).unwrap();
    }
    let value = |args: &[&str]| -> f64 {
        let out = d.join("ev");
        let mut all = vec!["--out", s(&out), "eval"];
        all.extend_from_slice(args);
        run(&all).unwrap();
        let csv = fs::read_to_string(out.join("eval.csv")).unwrap();
        csv.lines().nth(1).unwrap().split(',').nth(1).unwrap().parse().unwrap()
    };
    assert_eq!(value(&["--pred", s(&d.join("s.obj")), "--gt", s(&d.join("s.obj"))]), 0.0);
    // the translated copy went through 9-digit OBJ text, so it is exact only to that precision
    let moved = value(&["--pred", s(&d.join("moved.obj")), "--gt", s(&d.join("s.obj"))]);
    assert!(moved < 1e-8, "{moved}");
    let concentric = value(&["--pred", s(&d.join("s.obj")), "--gt", s(&d.join("big.obj")), "--no-align"]);
    assert!((concentric - 0.1).abs() < 5e-3, "{concentric}");
}

#[test]
fn eval_reports_face_and_mpjpe_with_masks() {
    let dir = tempfile::tempdir().unwrap();
    let c = corpus(dir.path(), "4");
    let out = dir.path().join("ev");
    let lm = head(&c, 0, "landmarks.txt");
    run(&[
        "--config",
        s(&c.join("pipeline.toml")),
        "--out",
        s(&out),
        "eval",
        "--pred",
        s(&head(&c, 0, "obj")),
        "--gt",
        s(&head(&c, 0, "obj")),
        "--pred-landmarks",
        s(&lm),
        "--gt-landmarks",
        s(&lm),
    ])
    .unwrap();
    let csv = fs::read_to_string(out.join("eval.csv")).unwrap();
    let names: Vec<&str> = csv.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(names, ["p2s_head", "p2s_face", "mpjpe"]);
    for l in csv.lines().skip(1) {
        assert_eq!(l.split(',').nth(1).unwrap().parse::<f64>().unwrap(), 0.0, "{l}");
    }
}

#[test]
fn variance_zero_closed_form_and_missing_masks() {
    let dir = tempfile::tempdir().unwrap();
    let base = shapes::icosphere(1, 1.0);
    let n = base.vertices.len();
    let masks = dir.path().join("masks.txt");
    fs::write(&masks, "first 0 1 2\n").unwrap();
    let table = |meshes: &Path| -> Vec<f64> {
        let t = run(&["--out", s(&dir.path().join("v")), "variance", "--meshes", s(meshes), "--masks", s(&masks)]).unwrap();
        t.lines().skip(1).map(|l| l.rsplit(',').next().unwrap().parse().unwrap()).collect()
    };
    let same = write_meshes(&dir.path().join("same"), &[base.clone(), base.clone(), base.clone()]);
    assert_eq!(table(&same), [0.0, 0.0]);

    let other = base.map_vertices(|p| Point3::new(p.x + 0.5, p.y, p.z));
    let pair = write_meshes(&dir.path().join("pair"), &[base.clone(), other]);
    // each vertex sits 0.25 from the pair mean; the table prints 10 digits
    let v = table(&pair);
    assert!((v[0] - 0.0625).abs() < 1e-8 && (v[1] - 0.0625).abs() < 1e-8, "{v:?} ({n} vertices)");

    let e = run(&["--out", s(&dir.path().join("v")), "variance", "--meshes", s(&pair), "--masks", s(&dir.path().join("none.txt"))]);
    assert!(stage_of(e.unwrap_err()).contains("none.txt"));
}

#[test]
fn interpolate_endpoints_midpoint_and_extrapolation() {
    let dir = tempfile::tempdir().unwrap();
    let c = corpus(dir.path(), "6");
    let (a, b) = (head(&c, 0, "obj"), head(&c, 1, "obj"));
    let out = dir.path().join("ip");
    run(&["--out", s(&out), "interpolate", "--a", s(&a), "--b", s(&b), "--t", "0,0.5,1,1.5"]).unwrap();
    let (ma, mb) = (obj::load_mesh(&a).unwrap(), obj::load_mesh(&b).unwrap());
    let load = |t: &str| obj::load_mesh(out.join(format!("interp_{t}.obj"))).unwrap();
    assert_eq!(load("0").vertices, ma.vertices);
    assert_eq!(load("1").vertices, mb.vertices);
    let mid = interpolate(&ma, &mb, 0.5).unwrap();
    let close = |x: &Mesh, y: &Mesh| x.vertices.iter().zip(&y.vertices).all(|(p, q)| (p - q).norm() < 1e-8);
    assert!(close(&load("0.5"), &mid));

    // blends of basis meshes stay in the span: extrapolated coefficients are linear
    let basis = ShapeBasis::load(c.join("basis.bin")).unwrap();
    let ext = load("1.5");
    let (ca, cb, ce) = (basis.project(&ma).unwrap(), basis.project(&mb).unwrap(), basis.project(&ext).unwrap());
    for i in 0..basis.dim() {
        let expected = ca.a[i] + 1.5 * (cb.a[i] - ca.a[i]);
        assert!((ce.a[i] - expected).abs() < 1e-6, "{i}");
    }
    assert!(close(&basis.pca_snap(&ext, None).unwrap(), &ext));
}

#[test]
fn binary_exit_status_reflects_failures() {
    let exe = env!("CARGO_BIN_EXE_caricature");
    let dir = tempfile::tempdir().unwrap();
    let ok = std::process::Command::new(exe)
        .args(["--out", s(dir.path()), "synth", "--count", "1"])
        .env("RUST_LOG", "off")
        .output()
        .unwrap();
    assert!(ok.status.success());
    let bad = std::process::Command::new(exe)
        .args(["--out", s(dir.path()), "register", "--target", "missing.obj", "--landmarks", "x"])
        .env("RUST_LOG", "off")
        .output()
        .unwrap();
    assert!(!bad.status.success());
    let err = String::from_utf8(bad.stderr).unwrap();
    assert!(err.starts_with("error: config error"), "{err}");
}

#[test]
fn environment_overrides_the_output_directory() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("from-env");
    let cli = Cli::try_parse_from(["caricature", "synth", "--count", "1"]).unwrap();
    let t = target.clone();
    run_with_env(cli, move |k| (k == "CARICATURE_OUT").then(|| t.display().to_string())).unwrap();
    assert!(target.join("manifest.csv").exists());
}
