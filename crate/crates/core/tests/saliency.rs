mod common;

use bayesteach::saliency::gp::rbf_kernel_1d;
use bayesteach::saliency::*;
use bayesteach::seed;
use nalgebra::{DMatrix, DVector};
use rand::Rng;

fn assert_cov_close(got: &DMatrix<f64>, want: &DMatrix<f64>, what: &str) {
    for i in 0..want.nrows() {
        assert!(
            (got[(i, i)] - want[(i, i)]).abs() / want[(i, i)] < 0.05,
            "{what}: var {i} {} vs {}",
            got[(i, i)],
            want[(i, i)]
        );
        for j in 0..want.ncols() {
            if i != j {
                assert!((got[(i, j)] - want[(i, j)]).abs() < 0.05 * want[(i, i)], "{what}: cov ({i},{j})");
            }
        }
    }
}

#[test]
fn factored_sampler_matches_dense_cholesky() {
    let cfg = GpMaskConfig {
        width: 8,
        height: 8,
        mean: 0.0,
        marginal_std: 1.0,
        length_scale: 2.0,
        n_masks: 1,
        jitter: 1e-6,
    };
    let sampler = GridGpSampler::new(cfg).unwrap();
    let draws: Vec<DVector<f64>> = (0..20_000)
        .map(|i| {
            let g = sampler.sample_field(7, i);
            DVector::from_iterator(64, (0..8).flat_map(|y| (0..8).map(move |x| (y, x))).map(|(y, x)| g[(y, x)]))
        })
        .collect();
    let factored = common::empirical_cov(&draws);

    let k = common::dense_kernel(8, 2.0, 1e-6);
    let l = k.clone().cholesky().unwrap().unpack();
    assert_cov_close(&factored, &(&l * l.transpose()), "factored vs dense kernel");

    let mut rng = seed::rng(8);
    let dense_draws: Vec<DVector<f64>> = (0..20_000)
        .map(|_| &l * DVector::from_fn(64, |_, _| common::normal(&mut rng)))
        .collect();
    assert_cov_close(&factored, &common::empirical_cov(&dense_draws), "factored vs dense draws");

    // The separable kernel is the Kronecker product of the 1-D kernels.
    let r = rbf_kernel_1d(8, 2.0, 0.0);
    let kron = r.kronecker(&r);
    assert!((kron - common::dense_kernel(8, 2.0, 0.0)).abs().max() < 1e-12);
}

#[test]
fn batches_are_bit_identical_per_seed() {
    let cfg = GpMaskConfig {
        width: 16,
        height: 12,
        n_masks: 40,
        ..GpMaskConfig::default()
    };
    let a = sample_masks(&cfg, 123).unwrap();
    let b = sample_masks(&cfg, 123).unwrap();
    let bits = |m: &MaskBatch| m.masks.iter().flatten().map(|v| v.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&a), bits(&b));
}

#[test]
fn default_prior_mask_mean() {
    let cfg = GpMaskConfig {
        width: 32,
        height: 32,
        n_masks: 10_000,
        ..GpMaskConfig::default()
    };
    let sampler = GridGpSampler::new(cfg.clone()).unwrap();
    let mut total = 0.0;
    for i in 0..cfg.n_masks as u64 {
        total += sampler.sample_mask(2, i).iter().map(|&v| f64::from(v)).sum::<f64>();
    }
    let mean = total / (cfg.n_masks * 32 * 32) as f64;

    let mut rng = seed::rng(4);
    let oracle = (0..1_000_000)
        .map(|_| 1.0 / (1.0 + (-(-100.0 + 100.0 * common::normal(&mut rng))).exp()))
        .sum::<f64>()
        / 1e6;
    assert!((oracle - 0.159).abs() < 0.005, "oracle {oracle}");
    assert!((mean - 0.159).abs() < 0.02, "mask mean {mean}");
}

fn three_by_three() -> (Image, Vec<Vec<f32>>) {
    let data: Vec<f32> = (0..27).map(|i| ((i * 37) % 64) as f32 / 64.0).collect();
    let masks = vec![
        vec![1.0, 0.5, 0.0, 0.25, 1.0, 0.75, 0.0, 0.0, 1.0],
        vec![0.0; 9],
        vec![1.0; 9],
        vec![0.125, 0.875, 0.5, 0.5, 0.0, 1.0, 0.25, 0.75, 0.375],
    ];
    (Image::new(3, 3, data).unwrap(), masks)
}

#[test]
fn expected_saliency_equals_brute_force_average() {
    let (img, masks) = three_by_three();
    let labels = vec!["cat".to_string(), "dog".to_string()];
    let weights: Vec<Vec<f32>> = (0..2)
        .map(|k| (0..27).map(|i| (((i * 11 + k * 5) % 9) as f32 - 4.0) / 4.0).collect())
        .collect();
    let bias = vec![0.3, -0.2];
    let clf = LinearToyClassifier::new(3, 3, labels.clone(), weights.clone(), bias.clone()).unwrap();

    // Independent softmax over the masked pixels.
    let prob_cat = |mask: &[f32]| -> f64 {
        let logit = |k: usize| -> f64 {
            let mut s = bias[k];
            for p in 0..9 {
                for c in 0..3 {
                    s += f64::from(weights[k][p * 3 + c]) * f64::from(img.data[p * 3 + c]) * f64::from(mask[p]);
                }
            }
            s
        };
        let (a, b) = (logit(0), logit(1));
        1.0 / (1.0 + (b - a).exp())
    };
    let w: Vec<f64> = masks.iter().map(|m| prob_cat(m)).collect();
    let wsum: f64 = w.iter().sum();
    let brute: Vec<f64> = (0..9)
        .map(|p| masks.iter().zip(&w).map(|(m, wi)| wi * f64::from(m[p])).sum::<f64>() / wsum)
        .collect();

    let batch = MaskBatch {
        width: 3,
        height: 3,
        masks: masks.clone(),
        seed: 0,
    };
    let map = expected_saliency(&clf, &img, "cat", &batch).unwrap();
    for (a, b) in map.values.iter().zip(&brute) {
        assert!((a - b).abs() < 1e-12, "{a} vs {b}");
    }

    let flat = expected_saliency(&ConstantClassifier(0.3), &img, "cat", &batch).unwrap();
    for p in 0..9 {
        let plain = masks.iter().map(|m| f64::from(m[p])).sum::<f64>() / 4.0;
        assert!((flat.values[p] - plain).abs() < 1e-12);
    }
}

#[test]
fn saliency_stays_within_mask_range() {
    let labels: Vec<String> = (0..4).map(|i| format!("l{i}")).collect();
    for run in 0..20u64 {
        let cfg = GpMaskConfig {
            width: 10,
            height: 7,
            mean: -1.0,
            marginal_std: 3.0,
            length_scale: 2.5,
            n_masks: 30,
            jitter: 1e-6,
        };
        let clf = LinearToyClassifier::seeded(10, 7, labels.clone(), run);
        let mut rng = seed::rng(run);
        let data = (0..210).map(|_| rng.random_range(0.0f32..1.0)).collect();
        let img = Image::new(10, 7, data).unwrap();
        let batch = sample_masks(&cfg, run).unwrap();
        let map = expected_saliency(&clf, &img, &labels[(run % 4) as usize], &batch).unwrap();
        for p in 0..70 {
            let lo = batch.masks.iter().map(|m| m[p]).fold(f32::INFINITY, f32::min);
            let hi = batch.masks.iter().map(|m| m[p]).fold(f32::NEG_INFINITY, f32::max);
            assert!(map.values[p] >= f64::from(lo) && map.values[p] <= f64::from(hi));
        }
    }
}

#[test]
fn blur_matches_naive_reference() {
    for fixture in 0..5u64 {
        let mut rng = seed::rng(fixture);
        let data = (0..32 * 32 * 3).map(|_| rng.random_range(0..256u32) as f32 / 256.0).collect();
        let img = Image::new(32, 32, data).unwrap();
        let map = SaliencyMap {
            width: 32,
            height: 32,
            values: (0..32 * 32).map(|_| rng.random_range(0.0..=1.0)).collect(),
            target_label: "y".into(),
        };
        assert_eq!(render_blur(&img, &map).unwrap(), common::naive_blur(&img, &map));
    }
}

#[test]
fn renderer_identities() {
    let mut rng = seed::rng(1);
    let data = (0..20 * 15 * 3).map(|_| rng.random_range(0.0f32..1.0)).collect();
    let img = Image::new(20, 15, data).unwrap();
    let ones = SaliencyMap {
        width: 20,
        height: 15,
        values: vec![1.0; 300],
        target_label: "y".into(),
    };
    assert_eq!(render_blur(&img, &ones).unwrap(), img);
    let random = SaliencyMap {
        values: (0..300).map(|_| rng.random_range(0.0..=1.0)).collect(),
        ..ones
    };
    assert_eq!(render_jet(&img, &random, 0.0).unwrap(), img);
}
