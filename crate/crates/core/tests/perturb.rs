use gert_core::geom::Vec3;
use gert_core::perturb::{
    apply_perturbation, derive_rng, standard_normal, Channel, PerturbationKind, PerturbationSpec, MIN_BUILDING_HEIGHT_M,
};
use gert_core::scene::{ObjectKind, Scene};
use gert_core::synth::ManhattanLayout;
use proptest::prelude::*;

fn city(height_m: f64) -> Scene {
    ManhattanLayout {
        blocks: 3,
        height_m,
        ..ManhattanLayout::default()
    }
    .scene(3.5e9)
    .unwrap()
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

#[test]
fn streams_are_uncorrelated() {
    let n = 40_000u64;
    let first = |seed, tx, idx, b, ch| standard_normal(&mut derive_rng(seed, tx, idx, b, ch));
    let height: Vec<f64> = (0..n).map(|i| first(1, 0, i, 3, Channel::Height)).collect();
    let pairs: [(&str, Vec<f64>); 5] = [
        ("channel", (0..n).map(|i| first(1, 0, i, 3, Channel::PosX)).collect()),
        ("building", (0..n).map(|i| first(1, 0, i, 4, Channel::Height)).collect()),
        ("index", (0..n).map(|i| first(1, 0, i + 1, 3, Channel::Height)).collect()),
        ("transmitter", (0..n).map(|i| first(1, 1, i, 3, Channel::Height)).collect()),
        ("seed", (0..n).map(|i| first(2, 0, i, 3, Channel::Height)).collect()),
    ];
    for (what, other) in &pairs {
        let r = pearson(&height, other);
        assert!(r.abs() < 0.02, "{what}: r = {r}");
    }
    // successive draws of one stream
    let mut rng = derive_rng(9, 0, 0, 0, Channel::Eps);
    let seq: Vec<f64> = (0..n + 1).map(|_| standard_normal(&mut rng)).collect();
    assert!(pearson(&seq[..n as usize], &seq[1..]).abs() < 0.02);
}

#[test]
fn tall_buildings_are_never_clamped() {
    let scene = city(5.0);
    let spec = PerturbationSpec {
        count: 50,
        ..PerturbationSpec::new(PerturbationKind::Height, 5)
    };
    for k in 0..spec.count {
        assert_eq!(apply_perturbation(&scene, &spec, 0, k).unwrap().clamped, 0);
    }
}

#[test]
fn clamp_counter_matches_draws() {
    let scene = city(1.0);
    let spec = PerturbationSpec {
        count: 20,
        ..PerturbationSpec::new(PerturbationKind::Height, 11)
    };
    let mut total = 0;
    for k in 0..spec.count {
        let p = apply_perturbation(&scene, &spec, 2, k).unwrap();
        let want = scene
            .buildings
            .keys()
            .filter(|&&id| {
                let z = standard_normal(&mut derive_rng(11, 2, k as u64, id as u64, Channel::Height));
                1.0 + spec.sigma_height_m * z < MIN_BUILDING_HEIGHT_M
            })
            .count();
        assert_eq!(p.clamped, want);
        assert!(p.scene.buildings.values().all(|b| b.height_m >= MIN_BUILDING_HEIGHT_M));
        total += want;
    }
    assert!(total > 0);
}

#[test]
fn terrain_is_untouched_by_every_kind() {
    let scene = city(20.0);
    for kind in PerturbationKind::ALL {
        let p = apply_perturbation(&scene, &PerturbationSpec::new(kind, 3), 0, 1).unwrap().scene;
        let ground = |s: &Scene| s.meshes.iter().find(|m| m.object_kind == ObjectKind::Terrain).cloned().unwrap();
        assert_eq!(ground(&p), ground(&scene), "{kind}");
        assert_eq!(p.materials[&0], scene.materials[&0], "{kind}");
        assert_eq!(p.meshes.len(), scene.meshes.len());
    }
}

#[test]
fn combined_kinds_reuse_single_kind_draws() {
    let scene = city(20.0);
    let spec = |kind| PerturbationSpec::new(kind, 21);
    let h = apply_perturbation(&scene, &spec(PerturbationKind::Height), 0, 4).unwrap().scene;
    let p = apply_perturbation(&scene, &spec(PerturbationKind::Position), 0, 4).unwrap().scene;
    let m = apply_perturbation(&scene, &spec(PerturbationKind::Material), 0, 4).unwrap().scene;
    let all = apply_perturbation(&scene, &spec(PerturbationKind::All), 0, 4).unwrap().scene;
    for id in scene.buildings.keys() {
        assert_eq!(all.buildings[id].height_m, h.buildings[id].height_m);
        assert_eq!(all.buildings[id].footprint, p.buildings[id].footprint);
        assert_eq!(all.materials[id], m.materials[id]);
    }
}

#[test]
fn invalid_specs_are_rejected() {
    let scene = city(20.0);
    let mut spec = PerturbationSpec::new(PerturbationKind::Height, 0);
    assert!(apply_perturbation(&scene, &spec, 0, spec.count).is_err());
    spec.sigma_height_m = -1.0;
    assert!(apply_perturbation(&scene, &spec, 0, 0).is_err());
    spec.sigma_height_m = f64::NAN;
    assert!(spec.validate().is_err());
}

fn centroid(vs: &[Vec3]) -> Vec3 {
    vs.iter().fold(Vec3::new(0.0, 0.0, 0.0), |a, &v| a + v) / vs.len() as f64
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn perturbation_is_a_pure_function(seed in any::<u64>(), tx in 0u64..4, k in 0usize..50, kind in 0usize..5) {
        let scene = city(20.0);
        let spec = PerturbationSpec::new(PerturbationKind::ALL[kind], seed);
        let a = apply_perturbation(&scene, &spec, tx, k).unwrap();
        let b = apply_perturbation(&scene, &spec, tx, k).unwrap();
        prop_assert_eq!(&a.scene, &b.scene);
        let other = apply_perturbation(&scene, &spec, tx, (k + 1) % spec.count).unwrap();
        prop_assert_ne!(&a.scene, &other.scene);
    }

    #[test]
    fn rigid_moves_preserve_shape(seed in any::<u64>(), k in 0usize..50) {
        let scene = city(20.0);
        let spec = PerturbationSpec::new(PerturbationKind::HeightPosition, seed);
        let p = apply_perturbation(&scene, &spec, 0, k).unwrap().scene;
        for (a, b) in scene.meshes.iter().zip(&p.meshes).filter(|(a, _)| a.object_kind == ObjectKind::Building) {
            let info = &scene.buildings[&a.object_id];
            let d = centroid(&b.vertices) - centroid(&a.vertices);
            for (u, v) in a.vertices.iter().zip(&b.vertices) {
                prop_assert!(((v.x - u.x) - d.x).abs() < 1e-9 && ((v.y - u.y) - d.y).abs() < 1e-9);
                if u.z <= info.base_elevation_m + 1e-9 {
                    prop_assert_eq!(u.z, v.z);
                } else {
                    prop_assert!((v.z - info.base_elevation_m - p.buildings[&a.object_id].height_m).abs() < 1e-9);
                }
            }
            prop_assert_eq!(&a.triangles, &b.triangles);
        }
    }

    #[test]
    fn material_noise_stays_physical(seed in any::<u64>(), rel in 0.0f64..3.0) {
        let scene = city(20.0);
        let spec = PerturbationSpec { material_rel_sigma: rel, ..PerturbationSpec::new(PerturbationKind::Material, seed) };
        let p = apply_perturbation(&scene, &spec, 0, 0).unwrap().scene;
        for (id, m) in &p.materials {
            prop_assert!(m.eps_r >= 1.0 && m.sigma_s_per_m >= 0.0);
            if *id == 0 {
                prop_assert_eq!(m, &scene.materials[id]);
            }
        }
    }
}
