use maninex::contrastive::loss_unimodal;
use maninex::negsampler::{pairwise_distance_histogram, demo_batches, ManiNegParams, SamplerRng, SamplingStrategy};
use maninex::toytrain::*;
use ndarray::Array2;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn short_cfg(steps: u64, seed: u64) -> TrainConfig {
    TrainConfig {
        steps,
        warmup_steps: 10,
        seed,
        ..TrainConfig::default()
    }
}

fn small_data(n: usize) -> ToyData {
    generate_synthetic(&SyntheticSpec { n_instances: n, ..SyntheticSpec::default() }, 1).unwrap()
}

fn maninegs() -> maninex::negsampler::SamplingStrategy {
    SamplerKind::Maninegs.strategy(ManiNegParams::default())
}

#[test]
fn same_seed_same_parameters() {
    let data = small_data(200);
    let rows: Vec<usize> = (0..200).collect();
    let run = |seed| {
        let cfg = short_cfg(60, seed);
        let mut m = cfg.init_model(&data);
        pretrain(&mut m, &data, &rows, &maninegs(), Scenario::Multimodal, &cfg).unwrap();
        m.param_hash()
    };
    assert_eq!(run(3), run(3));
    assert_ne!(run(3), run(4));
}

#[test]
fn zero_learning_rate_freezes_parameters() {
    let data = small_data(120);
    let rows: Vec<usize> = (0..120).collect();
    let cfg = TrainConfig { lr_peak: 0.0, lr_min: 0.0, ..short_cfg(40, 0) };
    for scenario in [Scenario::Unimodal, Scenario::Multimodal] {
        let mut m = cfg.init_model(&data);
        let before = m.clone();
        pretrain(&mut m, &data, &rows, &maninegs(), scenario, &cfg).unwrap();
        assert_eq!(m, before);
    }
}

#[test]
fn training_lowers_unimodal_loss() {
    let data = small_data(100);
    let rows: Vec<usize> = (0..100).collect();
    let cfg = short_cfg(200, 2);
    let mut m = cfg.init_model(&data);
    let full = |m: &ToyModel| loss_unimodal(&project(m, &data, &rows).unwrap(), m.temperature.tau()).unwrap();
    let before = full(&m);
    let strategy = SamplerKind::Uniform.strategy(ManiNegParams::default());
    let log = pretrain(&mut m, &data, &rows, &strategy, Scenario::Unimodal, &cfg).unwrap();
    assert_eq!(log.len(), 200);
    assert!(full(&m) < before, "{} !< {before}", full(&m));
    assert!(log.last().unwrap().l_uni < log[0].l_uni);
}

/// Plug-in mutual information (nats) between two discrete variables.
fn mutual_information(x: &[bool], y: &[bool]) -> f64 {
    let n = x.len() as f64;
    let mut joint = [[0.0; 2]; 2];
    for (&a, &b) in x.iter().zip(y) {
        joint[a as usize][b as usize] += 1.0 / n;
    }
    let px = [joint[0][0] + joint[0][1], joint[1][0] + joint[1][1]];
    let py = [joint[0][0] + joint[1][0], joint[0][1] + joint[1][1]];
    let mut mi = 0.0;
    for a in 0..2 {
        for b in 0..2 {
            if joint[a][b] > 0.0 {
                mi += joint[a][b] * (joint[a][b] / (px[a] * py[b])).ln();
            }
        }
    }
    mi
}

#[test]
fn half_flip_noise_erases_label_information() {
    let spec = SyntheticSpec { n_instances: 10_000, trait_flip_noise: 0.5, ..SyntheticSpec::default() };
    let data = generate_synthetic(&spec, 7).unwrap();
    let clean = generate_synthetic(&SyntheticSpec { trait_flip_noise: 0.0, ..spec.clone() }, 7).unwrap();
    let bit = |d: &ToyData, b: usize| d.dataset.records().iter().map(|r| r.bits.get(b)).collect::<Vec<_>>();
    let worst = (0..35).map(|b| mutual_information(&bit(&data, b), &data.labels)).fold(0.0, f64::max);
    assert!(worst < 0.01, "max MI {worst}");
    // the same world without noise does carry label information
    let best_clean = (0..35).map(|b| mutual_information(&bit(&clean, b), &clean.labels)).fold(0.0, f64::max);
    assert!(best_clean > 0.05, "{best_clean}");
}

#[test]
fn noiseless_population_is_a_function_of_the_latent() {
    let spec = SyntheticSpec { n_instances: 300, trait_flip_noise: 0.0, view_noise_sigma: 0.0, ..SyntheticSpec::default() };
    let a = generate_synthetic(&spec, 5).unwrap();
    let b = generate_synthetic(&spec, 5).unwrap();
    assert_eq!(a.dataset, b.dataset);
    assert_eq!(a.cc, b.cc);
    assert_eq!(a.cc, a.mlo);
    for i in 0..300 {
        let h = a.latent.row(i).to_vec();
        let u = a.nuisance.row(i).to_vec();
        assert_eq!(a.dataset.records()[i].bits, a.world.manifestation(&h));
        assert_eq!(a.cc.row(i), a.world.view(&h, &u));
        assert_eq!(a.labels[i], a.world.label(&h));
    }
}

#[test]
fn independent_bits_average_half_the_length_apart() {
    let spec = SyntheticSpec { correlation_mode: CorrelationMode::Independent, ..SyntheticSpec::default() };
    let data = generate_synthetic(&spec, 3).unwrap();
    let uni = SamplingStrategy::Uniform { dedup: false };
    let b = demo_batches(None, &data.dataset, &uni, 64, 63_000, SamplerRng::new(1), 0).unwrap();
    let mean = pairwise_distance_histogram(&b, &data.dataset).mean().unwrap();
    assert!((mean - 17.5).abs() < 0.5, "{mean}");
}

fn brute_auc(scores: &[f64], labels: &[bool]) -> f64 {
    let (mut wins, mut pairs) = (0.0, 0.0);
    for (i, &li) in labels.iter().enumerate() {
        for (j, &lj) in labels.iter().enumerate() {
            if li && !lj {
                pairs += 1.0;
                wins += match scores[i].partial_cmp(&scores[j]).unwrap() {
                    std::cmp::Ordering::Greater => 1.0,
                    std::cmp::Ordering::Equal => 0.5,
                    std::cmp::Ordering::Less => 0.0,
                };
            }
        }
    }
    wins / pairs
}

proptest! {
    #[test]
    fn auc_equals_pair_count(data in proptest::collection::vec((0u8..6, any::<bool>()), 2..80)) {
        let scores: Vec<f64> = data.iter().map(|(s, _)| *s as f64).collect();
        let labels: Vec<bool> = data.iter().map(|(_, l)| *l).collect();
        prop_assume!(labels.iter().any(|&l| l) && !labels.iter().all(|&l| l));
        let a = auc(&scores, &labels).unwrap();
        prop_assert!((a - brute_auc(&scores, &labels)).abs() <= 1e-12);
        prop_assert!((0.0..=1.0).contains(&a));
        // strictly increasing transform
        let t: Vec<f64> = scores.iter().map(|s| (0.7 * s).exp() - 3.0).collect();
        prop_assert_eq!(auc(&t, &labels).unwrap(), a);
    }
}

#[test]
fn random_labels_give_chance_auc() {
    let mut g = ChaCha8Rng::seed_from_u64(12);
    let x = Array2::from_shape_simple_fn((2000, 8), || g.random::<f64>());
    let y: Vec<bool> = (0..2000).map(|_| g.random()).collect();
    let train = x.slice(ndarray::s![..1000, ..]).to_owned();
    let test = x.slice(ndarray::s![1000.., ..]).to_owned();
    let lr = LogisticRegression::fit(&train, &y[..1000], 3.16, 1000).unwrap();
    assert!(lr.converged);
    let a = auc(&lr.decision(&test), &y[1000..]).unwrap();
    assert!((a - 0.5).abs() <= 0.05, "{a}");
}

#[test]
fn identical_encoders_on_exact_bits_align_perfectly() {
    let spec = SyntheticSpec { n_instances: 80, trait_flip_noise: 0.0, view_noise_sigma: 0.0, ..SyntheticSpec::default() };
    let mut data = generate_synthetic(&spec, 2).unwrap();
    let all: Vec<usize> = (0..80).collect();
    // images that recover the bits exactly
    data.cc = data.manifestation_matrix(&all);
    data.mlo = data.cc.clone();
    let mut m = ToyModel::init(ModelDims { feature_dim: 35, ..ModelDims::default() }, 0.7, 0);
    m.f_i = m.f_m.clone();
    let h = alignment_histogram(&m, &data, &all, 40).unwrap();
    assert!(h.distances.iter().all(|d| d.abs() < 1e-12));
    assert_eq!(h.counts[0], 160);
}

#[test]
fn alignment_from_init_to_trained() {
    let cfg = ExperimentConfig {
        synthetic: SyntheticSpec { trait_flip_noise: 0.0, view_noise_sigma: 0.0, ..SyntheticSpec::default() },
        ..ExperimentConfig::default()
    };
    let p = PreparedData::new(&cfg).unwrap();
    let tc = TrainConfig { seed: 0, ..cfg.train.clone() };
    let mut m = tc.init_model(&p.data);
    let untrained = alignment_histogram(&m, &p.data, &p.split.test, 40).unwrap().mean;
    assert!((untrained - 1.0).abs() <= 0.1, "{untrained}");
    let floor = linear_probe(&m, &p.data, &p.split.train, &p.split.test, cfg.probe).unwrap();

    // checkpoints every 250 steps
    let mut means = Vec::new();
    pretrain_observed(&mut m, &p.data, &p.split.train, &maninegs(), Scenario::Multimodal, &tc, 250, |_, model| {
        means.push(alignment_histogram(model, &p.data, &p.split.test, 40)?.mean);
        Ok(())
    })
    .unwrap();
    assert_eq!(means.len(), 9);
    assert!(means.windows(2).all(|w| w[1] < w[0]), "{means:?}");
    assert!(*means.last().unwrap() < untrained);

    let trained = linear_probe(&m, &p.data, &p.split.train, &p.split.test, cfg.probe).unwrap();
    assert!(trained >= floor - 0.02, "{trained} vs floor {floor}");
}

#[test]
fn samplers_share_initialisation() {
    let cfg = ExperimentConfig {
        synthetic: SyntheticSpec { n_instances: 200, ..SyntheticSpec::default() },
        train: short_cfg(30, 0),
        ..ExperimentConfig::default()
    };
    let p = PreparedData::new(&cfg).unwrap();
    let start = |s: u64| TrainConfig { seed: s, ..cfg.train.clone() }.init_model(&p.data).param_hash();
    assert_eq!(start(5), start(5));
    let a = run_cell(&cfg, &p, SamplerKind::Maninegs, Scenario::Multimodal, 5).unwrap();
    let b = run_cell(&cfg, &p, SamplerKind::Uniform, Scenario::Multimodal, 5).unwrap();
    // same start, different batches, different end point
    assert_ne!(a.result.param_hash, b.result.param_hash);
    assert_eq!(a.loss_log[0].tau, b.loss_log[0].tau);
}

#[test]
fn report_has_one_row_per_run_and_per_cell() {
    let cfg = ExperimentConfig {
        synthetic: SyntheticSpec { n_instances: 240, ..SyntheticSpec::default() },
        train: short_cfg(30, 0),
        seeds: vec![0, 1, 2],
        ..ExperimentConfig::default()
    };
    let r = run_experiment(&cfg).unwrap();
    assert_eq!(r.runs.len(), 2 * 2 * 3);
    assert_eq!(r.summary.len(), 4);
    assert!(r.summary.iter().all(|c| c.n_runs == 3));
    assert_eq!(run_experiment(&cfg).unwrap(), r);

    let mut csv = Vec::new();
    write_runs_csv(&mut csv, &r.runs).unwrap();
    let text = String::from_utf8(csv).unwrap();
    assert_eq!(text.lines().next().unwrap(), "sampler,scenario,seed,auc,alignment_mean,final_tau");
    assert_eq!(text.lines().count(), 13);
}

#[test]
fn summary_std_is_unbiased() {
    let run = |seed, auc| RunResult {
        sampler: SamplerKind::Uniform,
        scenario: Scenario::Unimodal,
        seed,
        auc,
        alignment_mean: None,
        final_tau: 0.7,
        final_loss: 1.0,
        param_hash: String::new(),
    };
    // 0.2, 0.4, 0.9: mean 0.5, squared deviations 0.09 + 0.01 + 0.16 = 0.26, / 2
    let s = summarize(&[run(2, 0.9), run(0, 0.2), run(1, 0.4)]);
    assert_eq!(s.len(), 1);
    assert!((s[0].auc_mean - 0.5).abs() < 1e-15);
    assert!((s[0].auc_std - 0.13f64.sqrt()).abs() < 1e-15);
    assert_eq!(s[0].alignment_mean, None);
}
