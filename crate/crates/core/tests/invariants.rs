use std::sync::Arc;

use proptest::prelude::*;
use vrf_core::body::capsule::capsule_person;
use vrf_core::body::{forward_kinematics, skin_vertices, Pose, ShapeCoeffs};
use vrf_core::feature_map::FeatureMap;
use vrf_core::field::{aggregate_features, knn, local_summary, query_field, DecoderMlp, FieldConfig, FieldModel, FieldScene, GridIndex};
use vrf_core::frames::to_local;
use vrf_core::math::{axis_angle_to_matrix, RigidTransform, Vec3};
use vrf_core::render::{composite, Camera, RenderConfig};
use vrf_core::field::RadianceSample;

fn vec3(r: f64) -> impl Strategy<Value = Vec3> {
    (-r..r, -r..r, -r..r).prop_map(|(x, y, z)| Vec3::new(x, y, z))
}

fn samples(n: usize) -> impl Strategy<Value = Vec<(RadianceSample, f64)>> {
    prop::collection::vec(
        ((0.0..1.0f64, 0.0..1.0f64, 0.0..1.0f64), 0.0..50.0f64, 0.0..0.2f64),
        1..n,
    )
    .prop_map(|v| {
        v.into_iter()
            .map(|((r, g, b), density, delta)| (RadianceSample { color: [r, g, b], density }, delta))
            .collect()
    })
}

fn pose_strategy() -> impl Strategy<Value = Pose> {
    (prop::collection::vec(vec3(0.8), 6), vec3(0.5)).prop_map(|(joint_rotations, root_translation)| Pose {
        joint_rotations,
        root_translation,
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn weights_partition_transmittance(s in samples(40)) {
        let (samp, deltas): (Vec<_>, Vec<_>) = s.into_iter().unzip();
        let r = composite(&samp, &deltas);
        let total: f64 = r.weights.iter().sum::<f64>() + r.residual;
        prop_assert!((total - 1.0).abs() <= 1e-6);
        // Transmittance before each sample never increases.
        let mut t = 1.0;
        for w in &r.weights {
            let next = t - w;
            prop_assert!(next <= t + 1e-15);
            t = next;
        }
    }

    #[test]
    fn zero_density_tail_is_neutral(s in samples(20), extra in 1usize..10) {
        let (mut samp, mut deltas): (Vec<_>, Vec<_>) = s.into_iter().unzip();
        let before = composite(&samp, &deltas);
        samp.extend(std::iter::repeat(RadianceSample::EMPTY).take(extra));
        deltas.extend(std::iter::repeat(0.1).take(extra));
        let after = composite(&samp, &deltas);
        prop_assert_eq!(before.color, after.color);
        prop_assert_eq!(before.residual, after.residual);
    }

    #[test]
    fn skinning_partition_of_unity(pose in pose_strategy()) {
        let t = capsule_person();
        let a = forward_kinematics(&t.skeleton(), &pose).unwrap();
        let posed = skin_vertices(&t.rest_vertices, &t.skin_weights, &a).unwrap();
        for (i, (v, rest)) in posed.iter().zip(&t.rest_vertices).enumerate() {
            let w = t.weights(i);
            prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            // Vertices fully owned by one part move rigidly with it.
            if let Some(p) = w.iter().position(|x| *x == 1.0) {
                prop_assert!((a[p].apply(rest) - v).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn frame_round_trip(p in vec3(2.0), axis in vec3(3.0), t in vec3(2.0)) {
        let f = RigidTransform::new(axis_angle_to_matrix(&axis), t);
        let local = to_local(&p, &f);
        prop_assert!((f.apply(&local) - p).norm() <= 1e-6);
    }

    #[test]
    fn aggregate_is_permutation_invariant(
        rows in prop::collection::vec((prop::collection::vec(-1.0..1.0f64, 5), 0.0..0.3f64, vec3(0.3)), 2..7),
        seed in any::<u64>(),
    ) {
        let mut perm: Vec<usize> = (0..rows.len()).collect();
        let mut s = seed;
        for i in (1..perm.len()).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            perm.swap(i, (s >> 33) as usize % (i + 1));
        }
        let feats: Vec<&[f64]> = rows.iter().map(|r| r.0.as_slice()).collect();
        let dists: Vec<f64> = rows.iter().map(|r| r.1).collect();
        let coords: Vec<Vec3> = rows.iter().map(|r| r.2).collect();
        let pf: Vec<&[f64]> = perm.iter().map(|&i| feats[i]).collect();
        let pd: Vec<f64> = perm.iter().map(|&i| dists[i]).collect();
        let pc: Vec<Vec3> = perm.iter().map(|&i| coords[i]).collect();
        prop_assert_eq!(aggregate_features(&feats, &dists).feature, aggregate_features(&pf, &pd).feature);
        prop_assert_eq!(local_summary(&coords), local_summary(&pc));
    }

    #[test]
    fn grid_knn_matches_brute_force(
        verts in prop::collection::vec(vec3(1.0), 8..80),
        queries in prop::collection::vec(vec3(1.5), 1..30),
        k in 1usize..6,
        cell in 0.05..0.8f64,
    ) {
        let grid = GridIndex::build(&verts, cell).unwrap();
        for q in &queries {
            prop_assert_eq!(grid.knn(q, k).unwrap(), knn(q, &verts, k).unwrap());
        }
    }
}

fn small_model(t: &vrf_core::body::BodyTemplate) -> FieldModel {
    let config = FieldConfig {
        octaves: 3,
        ..FieldConfig::for_template(t)
    };
    FieldModel {
        feature_map: FeatureMap::random(16, 16, 4, 1),
        mlp: DecoderMlp::new(4 + config.encoding_dim(), &[24, 24], 2),
        config,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    /// Moving the whole posed body rigidly moves its field with it.
    #[test]
    fn query_field_is_rigidly_equivariant(axis in vec3(2.0), shift in vec3(1.0), pose in pose_strategy(), pick in 0usize..600, offset in vec3(0.04)) {
        let t = Arc::new(capsule_person());
        let model = small_model(&t);
        let scene = FieldScene::new(t.clone(), &model, pose.clone(), ShapeCoeffs::zeros(2)).unwrap();
        // The root joint sits at the origin, so a root rotation R and a
        // translation R·t₀ + s realize x ↦ R x + s on the posed body.
        let g = RigidTransform::new(axis_angle_to_matrix(&axis), shift);
        let root = nalgebra::Rotation3::from_matrix(&(g.rotation * axis_angle_to_matrix(&pose.joint_rotations[0])));
        let mut moved = pose.clone();
        moved.joint_rotations[0] = root.scaled_axis();
        moved.root_translation = g.rotation * pose.root_translation + shift;
        let moved_scene = scene.reposed(moved).unwrap();
        let p = scene.geometry.vertices[pick % t.num_vertices()] + offset;
        let a = query_field(&p, &scene).unwrap();
        let b = query_field(&g.apply(&p), &moved_scene).unwrap();
        for c in 0..3 {
            prop_assert!((a.color[c] - b.color[c]).abs() <= 1e-5);
        }
        prop_assert!((a.density - b.density).abs() <= 1e-5 * a.density.max(1.0));
    }
}

#[test]
fn rendering_is_deterministic_across_chunkings() {
    let t = Arc::new(capsule_person());
    let model = small_model(&t);
    let scene = FieldScene::new(t, &model, Pose::rest(6), ShapeCoeffs::zeros(2)).unwrap();
    let cam = Camera::orbit(Vec3::zeros(), 0.3, 0.1, 2.6, 14.0, (12, 12)).unwrap();
    let cfg = RenderConfig {
        samples_per_ray: 16,
        stratified: true,
        seed: 4,
        chunk: 7,
    };
    let a = vrf_core::render::render_image(&scene, &cam, &cfg).unwrap();
    let b = vrf_core::render::render_image(&scene, &cam, &RenderConfig { chunk: 64, ..cfg }).unwrap();
    assert_eq!(a, b);
}
