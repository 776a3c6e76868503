//! Analytic gradients against central finite differences on a toy scene:
//! four pixel rays, eight midpoint samples each.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vrf_core::body::capsule::capsule_person;
use vrf_core::body::{Pose, ShapeCoeffs};
use vrf_core::feature_map::{features_from_taps, FeatureMap};
use vrf_core::field::{DecoderMlp, FieldConfig, FieldModel, FieldScene};
use vrf_core::math::Vec3;
use vrf_core::recon::{backward, GradientSet, SampleConfig};
use vrf_core::render::{Camera, Ray};

pub struct Toy {
    pub scene: FieldScene,
    pub map: FeatureMap,
    rays: Vec<Ray>,
    targets: Vec<[f64; 3]>,
    cfg: SampleConfig,
}

pub fn toy() -> Toy {
    let t = Arc::new(capsule_person());
    let config = FieldConfig {
        octaves: 2,
        ..FieldConfig::for_template(&t)
    };
    let map = FeatureMap::random(8, 8, 4, 3);
    // A larger feature scale makes texel gradients visible above round-off.
    let map = FeatureMap::from_data(8, 8, 4, map.data.iter().map(|v| v * 30.0).collect()).unwrap();
    let mlp = DecoderMlp::new(4 + config.encoding_dim(), &[16, 16], 4);
    let model = FieldModel {
        feature_map: map.clone(),
        mlp,
        config,
    };
    let scene = FieldScene::new(t, &model, Pose::rest(6), ShapeCoeffs::zeros(2)).unwrap();
    let cam = Camera::orbit(Vec3::new(0.0, 0.3, 0.0), 0.2, 0.1, 2.0, 30.0, (8, 8)).unwrap();
    let rays: Vec<Ray> = [(3, 3), (4, 2), (4, 5), (2, 4)].iter().map(|&(x, y)| cam.pixel_ray(x, y)).collect();
    Toy {
        scene,
        map,
        rays,
        targets: vec![[0.8, 0.2, 0.1], [0.1, 0.5, 0.9], [0.3, 0.3, 0.3], [0.9, 0.9, 0.0]],
        cfg: SampleConfig {
            samples_per_ray: 8,
            stratified: false,
            seed: 0,
        },
    }
}

impl Toy {
    pub fn grads(&self) -> (f64, GradientSet) {
        let out = backward(&self.scene, &self.rays, &self.targets, &self.cfg, self.map.data.len()).unwrap();
        (out.loss, out.grads)
    }

    fn loss(&self, mlp: &DecoderMlp, map: &FeatureMap) -> f64 {
        let s = self
            .scene
            .with_mlp(mlp.clone())
            .with_vertex_features(features_from_taps(map, &self.scene.taps))
            .unwrap();
        backward(&s, &self.rays, &self.targets, &self.cfg, map.data.len()).unwrap().loss
    }
}

pub fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-7)
}

#[derive(Clone, Copy, Debug, Default)]
pub struct Report {
    pub weights: usize,
    pub biases: usize,
    pub texels: usize,
    /// Parameters skipped because a ReLU kink sat within the step.
    pub kinks: usize,
    pub worst: f64,
}

impl Report {
    pub fn checked(&self) -> usize {
        self.weights + self.biases + self.texels
    }
}

enum Param {
    Weight(usize, usize, usize),
    Bias(usize, usize),
    Texel(usize),
}

/// Checks `n` randomly drawn parameters, a third from each kind.
pub fn run(n: usize, seed: u64) -> Report {
    let toy = toy();
    let (loss, grads) = toy.grads();
    assert!(loss > 0.0);
    let mlp = (*toy.scene.mlp).clone();
    let touched: Vec<usize> = toy.scene.taps.iter().flat_map(|t| t.iter().filter(|x| x.1 > 0.0).map(|x| x.0)).collect();
    let c = toy.map.channels;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = Report::default();
    let mut attempts = 0;
    while report.checked() < n && attempts < 4 * n {
        attempts += 1;
        let param = match attempts % 3 {
            0 => {
                let li = rng.gen_range(0..mlp.layers.len());
                let l = &mlp.layers[li];
                Param::Weight(li, rng.gen_range(0..l.outputs()), rng.gen_range(0..l.inputs()))
            }
            1 => {
                let li = rng.gen_range(0..mlp.layers.len());
                Param::Bias(li, rng.gen_range(0..mlp.layers[li].outputs()))
            }
            _ => Param::Texel(touched[rng.gen_range(0..touched.len())] * c + rng.gen_range(0..c)),
        };
        let (base, analytic) = match param {
            Param::Weight(l, r, k) => (mlp.layers[l].weight[[r, k]], grads.mlp[l].weight[[r, k]]),
            Param::Bias(l, r) => (mlp.layers[l].bias[r], grads.mlp[l].bias[r]),
            Param::Texel(i) => (toy.map.data[i], grads.texels[i]),
        };
        let f = |h: f64| match param {
            Param::Weight(l, r, k) => {
                let mut m = mlp.clone();
                m.layers[l].weight[[r, k]] = base + h;
                toy.loss(&m, &toy.map)
            }
            Param::Bias(l, r) => {
                let mut m = mlp.clone();
                m.layers[l].bias[r] = base + h;
                toy.loss(&m, &toy.map)
            }
            Param::Texel(i) => {
                let mut m = toy.map.clone();
                m.data[i] = base + h;
                toy.loss(&mlp, &m)
            }
        };
        let fd = |h: f64| (f(h) - f(-h)) / (2.0 * h);
        let h = 1e-3 * base.abs().max(1.0);
        let (coarse, fine) = (fd(h), fd(h / 10.0));
        // A ReLU kink within reach of the step shows up as disagreement
        // between the two step sizes.
        if rel_err(coarse, fine) > 1e-3 {
            report.kinks += 1;
            continue;
        }
        report.worst = report.worst.max(rel_err(analytic, fine));
        match param {
            Param::Weight(..) => report.weights += 1,
            Param::Bias(..) => report.biases += 1,
            Param::Texel(_) => report.texels += 1,
        }
    }
    report
}
