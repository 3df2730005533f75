use nalgebra::{Rotation3, Vector3};
use qcmorph::diffgeo::boundary_corrected;
use qcmorph::mesh::{Dataset, LandmarkSet, Subject, TriMesh};
use qcmorph::param::rectangular_param;
use qcmorph::shape::*;
use qcmorph::synth::primitives::{hex_lattice, sphere_cap};
use qcmorph::synth::{gen_dataset, gen_surface, ClassParams, Preset, SynthSpec};
use qcmorph::teichmuller::{landmark_tmap, landmark_tmap_with, QcOptions};
use qcmorph::Error;

fn small_spec(preset: Preset, seed: u64) -> SynthSpec {
    SynthSpec {
        resolution: 400,
        ..SynthSpec::preset(preset, seed)
    }
}

fn subject(name: &str, mesh: TriMesh, landmarks: LandmarkSet, label: &str) -> Subject {
    Subject {
        name: name.into(),
        mesh,
        landmarks,
        label: label.into(),
    }
}

fn max_deviation(a: &TriMesh, b: &TriMesh) -> f64 {
    a.vertices().iter().zip(b.vertices()).map(|(p, q)| (p - q).norm()).fold(0.0, f64::max)
}

#[test]
fn mean_of_identical_meshes_is_the_mesh() {
    let (m, lm) = gen_surface(&small_spec(Preset::Mixed, 1), 0, 0).unwrap();
    let ds = Dataset {
        subjects: (0..3).map(|i| subject(&format!("s{i}"), m.clone(), lm.clone(), "a")).collect(),
    };
    let mean = mean_surface_of(&ds, &QcOptions::default()).unwrap();
    assert!(max_deviation(&mean.mesh, &m) < 1e-6 * m.bbox_diagonal());
    assert_eq!(mean.landmarks, lm);
    assert!(mean.distances.iter().flatten().all(|&d| d < 1e-9));
}

#[test]
fn rigid_motion_is_absorbed_by_alignment() {
    let (m, lm) = gen_surface(&small_spec(Preset::Mixed, 2), 1, 0).unwrap();
    let r = Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(Vector3::new(0.3, -0.5, 0.8)), 0.9);
    let moved = m.map_positions(|p| r * p + Vector3::new(0.4, -1.0, 2.0)).unwrap();
    let ds = Dataset {
        subjects: vec![subject("a", m.clone(), lm.clone(), "a"), subject("b", moved, lm, "b")],
    };
    let mean = mean_surface_of(&ds, &QcOptions::default()).unwrap();
    let (rot, t) = kabsch(mean.mesh.vertices(), m.vertices());
    let aligned = mean.mesh.map_positions(|p| rot * p + t).unwrap();
    let rel = max_deviation(&aligned, &m) / m.bbox_diagonal();
    assert!(rel < 1e-3, "relative deviation {rel}");
}

#[test]
fn kabsch_recovers_rotation() {
    let p: Vec<Vector3<f64>> = (0..20)
        .map(|i| {
            let t = i as f64;
            Vector3::new(t.sin(), (1.7 * t).cos(), 0.1 * t)
        })
        .collect();
    let r = Rotation3::from_euler_angles(0.2, -1.1, 2.5);
    let q: Vec<Vector3<f64>> = p.iter().map(|x| r * x + Vector3::new(1.0, 2.0, 3.0)).collect();
    let (rot, t) = kabsch(&p, &q);
    assert!((rot.matrix() - r.matrix()).norm() < 1e-10);
    assert!((t - Vector3::new(1.0, 2.0, 3.0)).norm() < 1e-10);
    // a mirror image must not be matched by a reflection
    let mirrored: Vec<Vector3<f64>> = p.iter().map(|x| Vector3::new(-x.x, x.y, x.z)).collect();
    let (rot, _) = kabsch(&p, &mirrored);
    assert!((rot.matrix().determinant() - 1.0).abs() < 1e-10);
}

#[test]
fn mean_height_lies_between_the_classes() {
    let low = ClassParams {
        cusp_height: 0.3,
        ..ClassParams::default()
    };
    let high = ClassParams {
        cusp_height: 0.4,
        ..ClassParams::default()
    };
    let spec = SynthSpec {
        class_params: [low, high],
        param_sigma: 0.0,
        resolution: 400,
        ..SynthSpec::default()
    };
    let ds = gen_dataset(&spec, 3).unwrap();
    let mean = mean_surface_of(&ds, &QcOptions::default()).unwrap();
    let peak = |m: &TriMesh| m.vertices().iter().map(|p| p.z).fold(f64::NEG_INFINITY, f64::max);
    let class_peak = |c: &ClassParams| {
        let (m, _) = gen_surface(&SynthSpec { noise_sigma: 0.0, ..spec.clone() }, if c.cusp_height < 0.35 { 0 } else { 1 }, 0).unwrap();
        peak(&m)
    };
    let want = 0.5 * (class_peak(&spec.class_params[0]) + class_peak(&spec.class_params[1]));
    let got = peak(&mean.mesh);
    assert!((got - want).abs() < 0.1 * want, "mean peak {got}, expected {want}");
}

#[test]
fn identical_surfaces_have_zero_shape_index() {
    let (m, lm) = gen_surface(&small_spec(Preset::CurvatureDiff, 4), 1, 1).unwrap();
    let map = landmark_tmap(&m, &lm, &m, &lm, &QcOptions::default()).unwrap();
    let c = feature_curvatures(&m);
    let params = ShapeIndexParams::normalized(1.0, 1.0, 1.0, 0.1).unwrap();
    let idx = shape_index(&map, &m, &c, &c, &params).unwrap();
    assert!(idx.iter().all(|&x| (0.0..1e-9).contains(&x)), "max {}", idx.iter().cloned().fold(0.0, f64::max));

    let other = gen_surface(&small_spec(Preset::CurvatureDiff, 4), 1, 2).unwrap();
    let map = landmark_tmap(&m, &lm, &other.0, &other.1, &QcOptions::default()).unwrap();
    let gamma = shape_index(&map, &other.0, &feature_curvatures(&other.0), &c, &ShapeIndexParams::new(0.0, 0.0, 1.0, 0.1).unwrap()).unwrap();
    assert!(gamma.iter().all(|&x| x == map.distance));
    assert!(map.distance > 0.0);
}

#[test]
fn planar_subject_against_unit_cap() {
    let (n, edge) = (12, 0.05);
    let cap = sphere_cap(n, edge).unwrap();
    let (pts, faces) = hex_lattice(n, edge);
    let plane = TriMesh::new(pts.iter().map(|p| Vector3::new(p.x, p.y, 0.0)).collect(), faces).unwrap();
    let r = n as f64 * edge;
    let near = |x: f64, y: f64, boundary: bool| {
        (0..pts.len())
            .filter(|&i| plane.is_boundary(i) == boundary)
            .min_by(|&a, &b| {
                let da = (pts[a].x - x).hypot(pts[a].y - y);
                let db = (pts[b].x - x).hypot(pts[b].y - y);
                da.total_cmp(&db)
            })
            .unwrap()
    };
    let idx = vec![near(0.0, -r, true), near(0.0, r, true), near(-0.5 * r, 0.0, false), near(0.5 * r, 0.0, false)];
    let lm = LandmarkSet::new(idx, pts.len()).unwrap();
    let pc = rectangular_param(&cap, &lm).unwrap();
    let pp = rectangular_param(&plane, &lm).unwrap();
    let map = landmark_tmap_with(&cap, &lm, &pc, &plane, &lm, &pp, &QcOptions::default()).unwrap();
    let t = shape_terms(&map, &plane, &feature_curvatures(&plane), &feature_curvatures(&cap)).unwrap();

    // interior vertices at least three rings from the rim
    let ring_ok: Vec<bool> = pts.iter().map(|p| p.norm() < r - 3.0 * edge).collect();
    let mut checked = 0;
    for (k, ok) in ring_ok.iter().enumerate() {
        if *ok {
            assert!((t.dh[k] - 1.0).abs() < 0.03, "vertex {k}: |dH| = {}", t.dh[k]);
            assert!((t.dk[k] - 1.0).abs() < 0.03, "vertex {k}: |dK| = {}", t.dk[k]);
            checked += 1;
        }
    }
    assert!(checked > 100);
    // boundary values were replaced by interior neighbour averages
    let c = feature_curvatures(&cap);
    assert_eq!(c.h, boundary_corrected(&cap, &c.h));
}

#[test]
fn excluded_subjects_are_limited() {
    let ds = gen_dataset(&small_spec(Preset::Mixed, 3), 2).unwrap();
    let params = rect_params(&ds).unwrap();
    let t = &ds.subjects[0];
    let strict = QcOptions {
        max_iter: 1,
        ..QcOptions::default()
    };
    let err = maps_from(&t.mesh, &t.landmarks, &ds, &params, &strict).unwrap_err();
    assert!(matches!(err, Error::TooManyExcluded { total: 4, .. }), "{err}");
    let maps = maps_from(&t.mesh, &t.landmarks, &ds, &params, &QcOptions::default()).unwrap();
    assert!(maps.iter().all(Option::is_some));
}

#[test]
fn pipeline_is_deterministic_and_needs_two_classes() {
    let ds = gen_dataset(&small_spec(Preset::Mixed, 6), 3).unwrap();
    let opts = PipelineOptions {
        search: SearchOptions {
            rho: 0.03 * std::f64::consts::PI,
            p_cut_grid: vec![1.0, 0.01],
            trees: 25,
            seed: 5,
            ..SearchOptions::default()
        },
        ..PipelineOptions::default()
    };
    let a = run_pipeline(&ds, &opts).unwrap();
    let b = run_pipeline(&ds, &opts).unwrap();
    assert_eq!(a.search, b.search);
    assert_eq!(a.features.components.rows(), 6);
    assert_eq!(a.features.components.cols(), a.features.mean.mesh.num_vertices());
    let c = a.features.components.matrix(a.search.best.params.weights());
    assert!(c.values.iter().flatten().all(|&x| x >= 0.0));
    for (k, &e) in a.features.components.eligible.iter().enumerate() {
        assert_eq!(e, !a.features.mean.mesh.is_boundary(k));
        if !e {
            assert!(!a.search.best.significant_vertex_mask[k]);
        }
    }

    let dir = tempfile::tempdir().unwrap();
    write_artifacts(&a, &ds, dir.path()).unwrap();
    let report: ClassificationReport =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report, a.search.best);

    let mut one = ds.clone();
    one.subjects.iter_mut().for_each(|s| s.label = "only".into());
    assert!(matches!(run_pipeline(&one, &opts), Err(Error::ClassCount(1))));
}
