//! Acceptance suite: one test per criterion, each printing a PASS line
//! (visible with `cargo test --test acceptance -- --nocapture`).

mod common;

use std::time::Instant;

use common::*;
use multist_core::audio::FeatureMatrix;
use multist_core::augment::{spec_augment, stretch_indices, time_stretch_with_factor, SpecAugmentParams};
use multist_core::decode::{beam_search, DecodeConfig};
use multist_core::losses::{cross_entropy, ctc_loss, kd_loss, KdConfig, Task};
use multist_core::metrics::{bleu, edit_distance, wer};
use multist_core::model::{frontend_output_len, Forward, Model, ModelConfig};
use multist_core::params::ParameterStore;
use multist_core::prepare::prepare_data;
use multist_core::rng;
use multist_core::synth::{generate_raw, SynthOptions};
use multist_core::tensor::{concat_cols, conv1d, embed, Tensor};
use multist_core::text::{BLANK, BOS, EOS, PAD, UNK};
use multist_core::train::{lr_inverse_sqrt, train, train_with_options, TrainOptions};
use rand::Rng;

// ---------------------------------------------------------------------
// Criterion 1: gradient oracle (per-op < 1e-4, end-to-end < 1e-3, < 2 min)
// ---------------------------------------------------------------------

fn gradcheck(
    label: &str,
    shape: Vec<usize>,
    data: Vec<f64>,
    f: &dyn Fn(Tensor<f64>) -> Tensor<f64>,
) -> f64 {
    let x = Tensor::param(shape.clone(), data.clone());
    let loss = f(x.clone());
    loss.backward();
    let analytic = x.grad().unwrap_or_else(|| panic!("{label}: no gradient reached the input"));
    let mut func = |xs: &[f64]| f(Tensor::new(shape.clone(), xs.to_vec())).item();
    let numeric = numeric_grad(&mut func, &data, 1e-3);
    let err = max_rel_err(&analytic, &numeric);
    assert!(err < 1e-4, "{label}: max relative error {err:.3e} >= 1e-4");
    err
}

/// Random positive weights used to make the upstream gradient non-uniform.
fn weighted_sum(t: &Tensor<f64>, seed: u64) -> Tensor<f64> {
    t.mul_mask(offset_randoms(t.numel(), seed)).sum_all()
}

#[test]
fn acceptance_01_gradient_oracle() {
    let t0 = Instant::now();
    let mut worst: f64 = 0.0;
    let mut track = |err: f64| worst = worst.max(err);

    // Elementwise and affine ops.
    let b_const = Tensor::new(vec![3, 4], offset_randoms(12, 11));
    track(gradcheck("add", vec![3, 4], offset_randoms(12, 1), &|x| {
        weighted_sum(&x.add(&b_const), 100)
    }));
    let bias_c = Tensor::new(vec![4], offset_randoms(4, 12));
    track(gradcheck("add_bias.x", vec![3, 4], offset_randoms(12, 2), &|x| {
        weighted_sum(&x.add_bias(&bias_c), 101)
    }));
    let x_c = Tensor::new(vec![3, 4], offset_randoms(12, 3));
    track(gradcheck("add_bias.b", vec![4], offset_randoms(4, 4), &|b| {
        weighted_sum(&x_c.add_bias(&b), 102)
    }));
    track(gradcheck("scale", vec![2, 5], offset_randoms(10, 5), &|x| {
        weighted_sum(&x.scale(-1.7), 103)
    }));
    track(gradcheck("mul_mask", vec![2, 5], offset_randoms(10, 6), &|x| {
        x.mul_mask(offset_randoms(10, 104)).sum_all()
    }));
    track(gradcheck("relu", vec![3, 5], offset_randoms(15, 7), &|x| {
        weighted_sum(&x.relu(), 105)
    }));

    // Matrix products (both operands).
    let m_b = Tensor::new(vec![4, 3], offset_randoms(12, 20));
    track(gradcheck("matmul.a", vec![2, 4], offset_randoms(8, 21), &|a| {
        weighted_sum(&a.matmul(&m_b).unwrap(), 106)
    }));
    let m_a = Tensor::new(vec![2, 4], offset_randoms(8, 22));
    track(gradcheck("matmul.b", vec![4, 3], offset_randoms(12, 23), &|b| {
        weighted_sum(&m_a.matmul(&b).unwrap(), 107)
    }));
    let nt_b = Tensor::new(vec![3, 4], offset_randoms(12, 24));
    track(gradcheck("matmul_nt.a", vec![2, 4], offset_randoms(8, 25), &|a| {
        weighted_sum(&a.matmul_nt(&nt_b).unwrap(), 108)
    }));
    let nt_a = Tensor::new(vec![2, 4], offset_randoms(8, 26));
    track(gradcheck("matmul_nt.b", vec![3, 4], offset_randoms(12, 27), &|b| {
        weighted_sum(&nt_a.matmul_nt(&b).unwrap(), 109)
    }));

    // Shape ops.
    track(gradcheck("slice_cols", vec![3, 6], offset_randoms(18, 30), &|x| {
        weighted_sum(&x.slice_cols(1, 4), 110)
    }));
    let part_c = Tensor::new(vec![3, 2], offset_randoms(6, 31));
    track(gradcheck("concat_cols", vec![3, 3], offset_randoms(9, 32), &|x| {
        weighted_sum(&concat_cols(&[x, part_c.clone()]), 111)
    }));
    track(gradcheck("sum_all", vec![2, 3], offset_randoms(6, 33), &|x| {
        x.sum_all().scale(1.3)
    }));
    track(gradcheck("mean_all", vec![2, 3], offset_randoms(6, 34), &|x| {
        x.mean_all().scale(-0.8)
    }));

    // Row-wise nonlinearities.
    track(gradcheck("softmax_rows", vec![3, 5], offset_randoms(15, 40), &|x| {
        weighted_sum(&x.softmax_rows(), 112)
    }));
    track(gradcheck("log_softmax_rows", vec![3, 5], offset_randoms(15, 41), &|x| {
        weighted_sum(&x.log_softmax_rows(), 113)
    }));
    let ln_g = Tensor::new(vec![5], offset_randoms(5, 42));
    let ln_b = Tensor::new(vec![5], offset_randoms(5, 43));
    track(gradcheck("layer_norm.x", vec![3, 5], offset_randoms(15, 44), &|x| {
        weighted_sum(&x.layer_norm(&ln_g, &ln_b), 114)
    }));
    let ln_x = Tensor::new(vec![3, 5], offset_randoms(15, 45));
    track(gradcheck("layer_norm.g", vec![5], offset_randoms(5, 46), &|g| {
        weighted_sum(&ln_x.layer_norm(&g, &ln_b), 115)
    }));
    track(gradcheck("layer_norm.b", vec![5], offset_randoms(5, 47), &|b| {
        weighted_sum(&ln_x.layer_norm(&ln_g, &b), 116)
    }));

    // Convolution over a 5x2 input, both strides, all three operands.
    for stride in [1usize, 2] {
        let k_c = Tensor::new(vec![3, 2, 3], offset_randoms(18, 50 + stride as u64));
        let b_c = Tensor::new(vec![3], offset_randoms(3, 52));
        track(gradcheck(
            &format!("conv1d.x stride {stride}"),
            vec![5, 2],
            offset_randoms(10, 53),
            &|x| weighted_sum(&conv1d(&x, &k_c, &b_c, stride).unwrap(), 117),
        ));
        let x_cc = Tensor::new(vec![5, 2], offset_randoms(10, 54));
        track(gradcheck(
            &format!("conv1d.w stride {stride}"),
            vec![3, 2, 3],
            offset_randoms(18, 55),
            &|w| weighted_sum(&conv1d(&x_cc, &w, &b_c, stride).unwrap(), 118),
        ));
        track(gradcheck(
            &format!("conv1d.b stride {stride}"),
            vec![3],
            offset_randoms(3, 56),
            &|b| weighted_sum(&conv1d(&x_cc, &k_c, &b, stride).unwrap(), 119),
        ));
    }

    // Embedding lookup.
    track(gradcheck("embed", vec![6, 4], offset_randoms(24, 60), &|t| {
        weighted_sum(&embed(&t, &[1, 3, 3, 5], 2.0).unwrap(), 120)
    }));

    // Losses on log-probability inputs.
    track(gradcheck("cross_entropy", vec![4, 5], offset_randoms(20, 61), &|x| {
        cross_entropy(&x.log_softmax_rows(), &[2, 1, PAD, 4], PAD, 0.0)
            .unwrap()
            .scale(1.4)
    }));
    track(gradcheck("cross_entropy.smoothed", vec![4, 5], offset_randoms(20, 62), &|x| {
        cross_entropy(&x.log_softmax_rows(), &[2, 1, PAD, 4], PAD, 0.1)
            .unwrap()
            .scale(0.9)
    }));
    track(gradcheck("ctc_loss", vec![5, 4], offset_randoms(20, 63), &|x| {
        ctc_loss(&x.log_softmax_rows(), &[1, 2, 1], 0).unwrap().scale(1.2)
    }));
    let teacher_rows = {
        let logits = Tensor::new(vec![3, 5], offset_randoms(15, 64));
        let sm = logits.softmax_rows();
        Tensor::new(vec![3, 5], sm.data().to_vec())
    };
    track(gradcheck("kd_loss", vec![3, 5], offset_randoms(15, 65), &|x| {
        kd_loss(
            &x.log_softmax_rows(),
            &teacher_rows,
            &[1, 3, 2],
            PAD,
            0.0,
            &KdConfig { kd_weight: 0.7 },
        )
        .unwrap()
        .scale(1.1)
    }));

    // End-to-end: one-sample ST loss (CE + 0.3 * CTC/len) through the
    // whole model, checked on a deterministic 1% parameter sample.
    let cfg = ModelConfig {
        dropout: 0.0,
        vocab_size: 16,
        n_mels: 8,
        ..toy_model_config(16, &["aa", "xx"])
    };
    let mut store = multist_core::model::init_params::<f64>(&cfg, 7);
    let feats = FeatureMatrix::from_rows(24, 8, offset_randoms(24 * 8, 70));
    let transcript = vec![5usize, 6, 7];
    let tgt = vec![6usize, 8];
    let dec_input: Vec<usize> = std::iter::once(BOS).chain(tgt.iter().copied()).collect();
    let dec_target: Vec<usize> = tgt.iter().copied().chain(std::iter::once(EOS)).collect();
    let src = cfg.languages.get("aa").unwrap();
    let dst = cfg.languages.get("xx").unwrap();

    let st_loss = |store: &ParameterStore<f64>| -> Tensor<f64> {
        let model = Model::new(&cfg, store);
        let mut fwd = Forward::eval();
        let (enc, frontend_out) = model.encode_speech(&feats, src, &mut fwd).unwrap();
        let lp = model.decode_logprobs(&enc, &dec_input, dst, &mut fwd).unwrap();
        let ce = cross_entropy(&lp, &dec_target, PAD, 0.0).unwrap();
        let ctc = ctc_loss(&model.ctc_head(&frontend_out).unwrap(), &transcript, BLANK).unwrap();
        ce.add(&ctc.scale(0.3 / transcript.len() as f64))
    };

    let loss = st_loss(&store);
    loss.backward();
    let grads: Vec<(String, Vec<f64>)> = store
        .iter()
        .map(|(n, t)| (n.to_string(), t.grad().unwrap_or_else(|| vec![0.0; t.numel()])))
        .collect();
    let flat: Vec<(String, usize, f64)> = grads
        .iter()
        .flat_map(|(n, g)| g.iter().enumerate().map(move |(i, v)| (n.clone(), i, *v)))
        .collect();
    let total = flat.len();
    let n_samples = (total / 100).max(60);
    let mut max_err = 0.0f64;
    for k in 0..n_samples {
        let (name, idx, analytic) = flat[(k * total) / n_samples].clone();
        let base = store.get(&name).data().to_vec();
        let shape = store.get(&name).shape().to_vec();
        let mut probe = base.clone();
        probe[idx] = base[idx] + 1e-3;
        store.set(&name, Tensor::param(shape.clone(), probe.clone()));
        let hi = st_loss(&store).item();
        probe[idx] = base[idx] - 1e-3;
        store.set(&name, Tensor::param(shape.clone(), probe));
        let lo = st_loss(&store).item();
        store.set(&name, Tensor::param(shape, base));
        let numeric = (hi - lo) / 2e-3;
        let err = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1.0);
        assert!(
            err < 1e-3,
            "end-to-end gradient of {name}[{idx}]: rel err {err:.3e} >= 1e-3"
        );
        max_err = max_err.max(err);
    }

    let elapsed = t0.elapsed();
    assert!(elapsed.as_secs() < 120, "gradient oracle took {elapsed:?} (>= 2 min)");
    println!(
        "ACCEPTANCE 01 gradient-oracle: PASS (worst per-op {worst:.2e}, end-to-end {max_err:.2e} over {n_samples} sampled entries, {elapsed:?})"
    );
}

// ---------------------------------------------------------------------
// Criterion 2: CTC vs brute-force enumeration, exhaustive small grid
// ---------------------------------------------------------------------

#[test]
fn acceptance_02_ctc_oracle() {
    let t0 = Instant::now();
    let blank = 0usize;
    let mut cases = 0usize;

    // The -ln 0.75 case: three uniform frames over {blank, a}, target "a".
    let uniform = vec![vec![0.5f64.ln(); 2]; 3];
    let lp = Tensor::new(vec![3, 2], uniform.concat());
    let loss = ctc_loss(&lp, &[1], blank).unwrap().item();
    assert!((loss - (-(0.75f64.ln()))).abs() < 1e-12);
    assert!((loss - ctc_brute_force(&uniform, &[1], blank)).abs() < 1e-9);

    for v in 2..=4usize {
        // All targets of length 0..=3 over the non-blank alphabet.
        let mut targets: Vec<Vec<usize>> = vec![vec![]];
        for len in 1..=3usize {
            let mut level: Vec<Vec<usize>> = Vec::new();
            let mut stack = vec![Vec::new()];
            while let Some(cur) = stack.pop() {
                if cur.len() == len {
                    level.push(cur);
                    continue;
                }
                for s in 1..v {
                    let mut next = cur.clone();
                    next.push(s);
                    stack.push(next);
                }
            }
            targets.extend(level);
        }
        for t_len in 1..=6usize {
            for target in &targets {
                let mut r = rng::stream(99, &[v as u64, t_len as u64, rng::fnv1a(&target.iter().map(|&x| x as u8).collect::<Vec<_>>())]);
                let rows: Vec<Vec<f64>> = (0..t_len)
                    .map(|_| {
                        let logits: Vec<f64> = (0..v).map(|_| r.gen_range(-2.0..2.0)).collect();
                        let mx = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                        let lse = logits.iter().map(|l| (l - mx).exp()).sum::<f64>().ln() + mx;
                        logits.iter().map(|l| l - lse).collect()
                    })
                    .collect();
                let lp = Tensor::new(vec![t_len, v], rows.concat());
                let fwd = ctc_loss(&lp, target, blank).unwrap().item();
                let brute = ctc_brute_force(&rows, target, blank);
                if fwd.is_infinite() || brute.is_infinite() {
                    assert_eq!(
                        fwd.is_infinite(),
                        brute.is_infinite(),
                        "infeasibility disagreement at v={v} t={t_len} target={target:?}"
                    );
                } else {
                    assert!(
                        (fwd - brute).abs() <= 1e-9,
                        "v={v} t={t_len} target={target:?}: forward {fwd} vs brute force {brute}"
                    );
                }
                cases += 1;
            }
        }
    }
    let elapsed = t0.elapsed();
    assert!(elapsed.as_secs() < 60, "CTC oracle took {elapsed:?} (>= 1 min)");
    println!("ACCEPTANCE 02 ctc-oracle: PASS ({cases} grid cases, {elapsed:?})");
}

// ---------------------------------------------------------------------
// Criterion 3: frontend shape law
// ---------------------------------------------------------------------

#[test]
fn acceptance_03_shape_law() {
    // Law vs an independent floating-point ceiling computation.
    for t in 8..=512usize {
        let expected = (((t as f64 / 2.0).ceil() / 2.0).ceil() / 2.0).ceil() as usize;
        assert_eq!(frontend_output_len(t, 3), expected, "length law broke at t={t}");
    }
    // Real forward passes: convolution-only frontend over a sweep, plus the
    // full block (with transformer layers) at spot points.
    let cfg = ModelConfig {
        d_model: 8,
        heads: 2,
        ffn: 16,
        enc_layers: 1,
        dec_layers: 1,
        transformer_per_block: 0,
        dropout: 0.0,
        vocab_size: 8,
        n_mels: 4,
        ..toy_model_config(8, &["aa", "xx"])
    };
    let store = multist_core::model::init_params::<f64>(&cfg, 3);
    let model = Model::new(&cfg, &store);
    for t in (8..=512).step_by(21).chain([8, 9, 98, 511, 512]) {
        let feats = FeatureMatrix::from_rows(t, 4, offset_randoms(t * 4, t as u64));
        let out = model.frontend(&feats, &mut Forward::eval()).unwrap();
        assert_eq!(out.shape()[0], frontend_output_len(t, 3), "frontend length at t={t}");
    }
    let cfg_full = ModelConfig { transformer_per_block: 2, ..cfg.clone() };
    let store_full = multist_core::model::init_params::<f64>(&cfg_full, 4);
    let model_full = Model::new(&cfg_full, &store_full);
    for t in [8usize, 98, 211, 512] {
        let feats = FeatureMatrix::from_rows(t, 4, offset_randoms(t * 4, 900 + t as u64));
        let out = model_full.frontend(&feats, &mut Forward::eval()).unwrap();
        assert_eq!(out.shape()[0], frontend_output_len(t, 3));
    }
    println!("ACCEPTANCE 03 shape-law: PASS (t in 8..=512)");
}

// ---------------------------------------------------------------------
// Criterion 4: schedule law, exact in 64-bit over the paper grid
// ---------------------------------------------------------------------

#[test]
fn acceptance_04_schedule_law() {
    for &base in &[2e-3f64, 1e-3, 8e-4, 5e-4, 3e-4] {
        for &warmup in &[2000usize, 6000, 10000] {
            assert_eq!(lr_inverse_sqrt(warmup, base, warmup), base);
            assert_eq!(lr_inverse_sqrt(4 * warmup, base, warmup), base / 2.0);
        }
    }
    println!("ACCEPTANCE 04 schedule-law: PASS (5 base rates x 3 warmups, exact)");
}

// ---------------------------------------------------------------------
// Criterion 5: augmentation laws
// ---------------------------------------------------------------------

#[test]
fn acceptance_05_augmentation_laws() {
    // s = 1 identity.
    let m = FeatureMatrix::from_rows(37, 6, offset_randoms(37 * 6, 1));
    assert_eq!(time_stretch_with_factor(&m, 1.0).data(), m.data());

    // Monotone non-decreasing index selection for 1000 random (t, s).
    let mut r = rng::stream(5, &[501]);
    for _ in 0..1000 {
        let t = r.gen_range(1..300usize);
        let s = r.gen_range(0.3..3.0f64);
        let idx = stretch_indices(t, s);
        assert!(!idx.is_empty());
        assert!(idx.windows(2).all(|w| w[0] <= w[1]), "t={t} s={s}");
        assert!(*idx.last().unwrap() < t);
    }

    // Zero-mask identity.
    let p0 = SpecAugmentParams { num_time_masks: 0, num_freq_masks: 0, ..Default::default() };
    let mut rr = rng::stream(6, &[502]);
    assert_eq!(spec_augment(&m, &p0, &mut rr).data(), m.data());

    // Band structure at the paper parameters on a 100x80 grid.
    let big = FeatureMatrix::from_rows(100, 80, offset_randoms(100 * 80, 2));
    let p = SpecAugmentParams::default();
    for seed in 0..20u64 {
        let mut rng_a = rng::stream(seed, &[503]);
        let out = spec_augment(&big, &p, &mut rng_a);
        let changed: usize = out
            .data()
            .iter()
            .zip(big.data())
            .filter(|(a, b)| a != b)
            .count();
        assert!(changed <= 2 * 40 * 80 + 4 * 100, "seed {seed}: {changed} masked cells");

        let zero_rows: Vec<bool> = (0..100)
            .map(|i| out.row(i).iter().all(|v| *v == 0.0))
            .collect();
        let zero_cols: Vec<bool> = (0..80)
            .map(|j| (0..100).all(|i| out.get(i, j) == 0.0))
            .collect();
        let bands = |flags: &[bool]| {
            flags
                .windows(2)
                .filter(|w| !w[0] && w[1])
                .count()
                + usize::from(flags[0])
        };
        assert!(bands(&zero_rows) <= 2, "seed {seed}: more than 2 time bands");
        assert!(bands(&zero_cols) <= 1, "seed {seed}: more than 1 frequency band");

        // Every unmasked cell is bit-identical to the input.
        for i in 0..100 {
            for j in 0..80 {
                let (a, b) = (out.get(i, j), big.get(i, j));
                assert!(a == b || a == 0.0);
            }
        }
    }
    println!("ACCEPTANCE 05 augmentation-laws: PASS");
}

// ---------------------------------------------------------------------
// Criterion 6: decoder laws
// ---------------------------------------------------------------------

#[test]
fn acceptance_06_decoder_laws() {
    // beam = 1 equals greedy on 100 random fixture models.
    for seed in 0..100u64 {
        let cfg = DecodeConfig {
            beam: 1,
            max_len: 6,
            min_len: 1,
            length_penalty: 1.0,
            bos_id: BOS,
            eos_id: 3,
            banned_ids: vec![],
        };
        let s1 = PeakedScorer { seed, vocab: 10, sharpness: 4.0 };
        let beam = beam_search(&mut [s1], &cfg).unwrap();
        let mut s2 = PeakedScorer { seed, vocab: 10, sharpness: 4.0 };
        let greedy = greedy_reference(&mut s2, &cfg).unwrap();
        assert_eq!(beam.ids, greedy.ids, "seed {seed}");
        assert!((beam.score - greedy.score).abs() < 1e-12, "seed {seed}");
    }

    // Wide beam matches the exhaustive optimum on toy models.
    for seed in 0..10u64 {
        let vocab = 12usize;
        let max_len = 5usize;
        let cfg = DecodeConfig {
            beam: vocab * max_len,
            max_len,
            min_len: 1,
            length_penalty: 1.0,
            bos_id: BOS,
            eos_id: 3,
            banned_ids: vec![],
        };
        let s = PeakedScorer { seed, vocab, sharpness: 5.0 };
        let beam = beam_search(&mut [s], &cfg).unwrap();
        let mut s2 = PeakedScorer { seed, vocab, sharpness: 5.0 };
        let exhaustive = exhaustive_best(&mut s2, &cfg).unwrap();
        let nb = beam.normalized_score(cfg.length_penalty);
        let ne = exhaustive.normalized_score(cfg.length_penalty);
        assert!(
            (nb - ne).abs() <= 1e-9,
            "seed {seed}: beam {nb} vs exhaustive {ne} ({:?} vs {:?})",
            beam.ids,
            exhaustive.ids
        );
        assert_eq!(beam.ids, exhaustive.ids, "seed {seed}");
    }

    // k-copy ensemble equals the single model within 1e-9.
    for seed in [3u64, 17, 40] {
        let cfg = DecodeConfig {
            beam: 4,
            max_len: 6,
            min_len: 1,
            length_penalty: 1.0,
            bos_id: BOS,
            eos_id: 3,
            banned_ids: vec![],
        };
        let mk = || PeakedScorer { seed, vocab: 9, sharpness: 4.0 };
        let single = beam_search(&mut [mk()], &cfg).unwrap();
        let triple = beam_search(&mut [mk(), mk(), mk()], &cfg).unwrap();
        assert_eq!(single.ids, triple.ids, "seed {seed}");
        assert!((single.score - triple.score).abs() < 1e-9, "seed {seed}");
    }
    println!("ACCEPTANCE 06 decoder-laws: PASS (greedy x100, exhaustive x10, ensemble x3)");
}

// ---------------------------------------------------------------------
// Criterion 7: metric oracles
// ---------------------------------------------------------------------

#[test]
fn acceptance_07_metric_oracles() {
    let corpus = ["the cat sat", "a b c d e f", "uno dos tres"];
    assert_eq!(bleu(&corpus, &corpus).unwrap(), 100.0);

    let score = bleu(&["a b c d"], &["a b c d e"]).unwrap();
    assert!((score - 77.88).abs() < 0.01, "hand BP case: {score}");

    // WER dynamic programming vs the recursive oracle, 500 random pairs.
    let alphabet = ["a", "b", "c"];
    let mut r = rng::stream(7, &[701]);
    for case in 0..500 {
        let la = r.gen_range(0..=6usize);
        let lb = r.gen_range(1..=6usize);
        let a: Vec<&str> = (0..la).map(|_| alphabet[r.gen_range(0..3)]).collect();
        let b: Vec<&str> = (0..lb).map(|_| alphabet[r.gen_range(0..3)]).collect();
        assert_eq!(
            edit_distance(&a, &b),
            edit_distance_recursive(&a, &b),
            "case {case}: {a:?} vs {b:?}"
        );
        let hyp = a.join(" ");
        let reference = b.join(" ");
        let w = wer(&[hyp.as_str()], &[reference.as_str()]).unwrap();
        assert!((w - edit_distance_recursive(&a, &b) as f64 / lb as f64).abs() < 1e-12);
    }
    println!("ACCEPTANCE 07 metric-oracles: PASS (BLEU cases + 500 WER pairs)");
}

// ---------------------------------------------------------------------
// Criterion 8: curriculum behavior at toy scale
// ---------------------------------------------------------------------

#[test]
fn acceptance_08_curriculum_toy_run() {
    let t0 = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let raw = dir.path().join("raw");
    let data = dir.path().join("data");
    let out = dir.path().join("run");

    // >= 50 utterances: two source and two target toy languages.
    let n = generate_raw(
        &raw,
        &SynthOptions { seed: 11, utterances_per_pair: 30, ..Default::default() },
    )
    .unwrap();
    assert!(n >= 50);

    let model = toy_model_config(24, &["aa", "bb", "xx", "yy"]);
    let mut cfg = toy_full_config(
        &data,
        &out,
        model,
        vec![
            toy_phase(1, 300, vec![Task::Asr, Task::Nmt]),
            toy_phase(2, 400, vec![Task::Asr, Task::Nmt, Task::St]),
            toy_phase(3, 300, vec![Task::St]),
        ],
        11,
        8,
    );
    prepare_data(&raw, &data, &cfg, 10).unwrap();
    cfg.train.log_interval = 20;
    // Oracle-style run: no label smoothing, so the loss floor is zero and
    // the curriculum's effect on the raw objective is measurable.
    cfg.train.label_smoothing = 0.0;

    let report = train::<f32>(&cfg).unwrap();
    let elapsed = t0.elapsed();
    assert!(elapsed.as_secs() < 30 * 60, "toy run took {elapsed:?} (>= 30 min)");

    // Phase-3 ST loss falls below 20% of its phase-3 starting value.
    let p3: Vec<&multist_core::train::StepRecord> =
        report.records.iter().filter(|r| r.phase == 3).collect();
    assert!(p3.len() >= 50);
    let start: f64 = p3[..3].iter().map(|r| r.raw_loss).sum::<f64>() / 3.0;
    let end: f64 = p3[p3.len() - 10..].iter().map(|r| r.raw_loss).sum::<f64>() / 10.0;
    assert!(
        end < 0.2 * start,
        "phase-3 loss: start {start:.4}, end {end:.4} (ratio {:.3})",
        end / start
    );

    // The 0.5/0.5/1.0 weighting is visible in the weighted decomposition.
    let mut seen = std::collections::BTreeSet::new();
    for r in report.records.iter().filter(|r| r.phase == 2) {
        let w = match r.task {
            Task::Asr => 0.5,
            Task::Nmt => 0.5,
            Task::St => 1.0,
        };
        assert!((r.weighted_loss - w * r.raw_loss).abs() < 1e-9);
        seen.insert(r.task);
    }
    assert_eq!(seen.len(), 3, "phase 2 must mix all three tasks");
    let log = std::fs::read_to_string(&report.log_path).unwrap();
    assert!(log.contains("# phase 2 start: tasks=asr,nmt,st weights asr=0.5 nmt=0.5 st=1"));

    // kd_loss == 0.3 * CE when the teacher equals the student.
    let student = Tensor::new(vec![2, 6], offset_randoms(12, 80)).log_softmax_rows();
    let teacher = Tensor::new(vec![2, 6], student.data().iter().map(|l| l.exp()).collect());
    for smoothing in [0.0, 0.1] {
        let kd = kd_loss(&student, &teacher, &[5, 1], PAD, smoothing, &KdConfig { kd_weight: 0.7 })
            .unwrap()
            .item();
        let ce = cross_entropy(&student, &[5, 1], PAD, smoothing).unwrap().item();
        assert!((kd - 0.3 * ce).abs() < 1e-9);
    }

    println!(
        "ACCEPTANCE 08 curriculum-toy-run: PASS ({} steps, phase-3 loss {start:.3} -> {end:.3}, {elapsed:?})",
        report.records.len()
    );
}

// ---------------------------------------------------------------------
// Criterion 9: determinism
// ---------------------------------------------------------------------

#[test]
fn acceptance_09_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let raw = dir.path().join("raw");
    let data = dir.path().join("data");
    generate_raw(
        &raw,
        &SynthOptions { seed: 5, utterances_per_pair: 6, ..Default::default() },
    )
    .unwrap();

    let model = ModelConfig { dropout: 0.1, ..toy_model_config(16, &["aa", "bb", "xx", "yy"]) };
    let phases = vec![
        toy_phase(1, 20, vec![Task::Asr, Task::Nmt]),
        toy_phase(2, 20, vec![Task::Asr, Task::Nmt, Task::St]),
        toy_phase(3, 10, vec![Task::St]),
    ];
    let cfg_probe = toy_full_config(&data, &dir.path().join("probe"), model.clone(), phases.clone(), 3, 4);
    prepare_data(&raw, &data, &cfg_probe, 10).unwrap();

    let mut outputs = Vec::new();
    for run in 0..2 {
        let out = dir.path().join(format!("run{run}"));
        let cfg = toy_full_config(&data, &out, model.clone(), phases.clone(), 3, 4);
        train::<f32>(&cfg).unwrap();
        outputs.push((
            std::fs::read(out.join("final.ckpt")).unwrap(),
            std::fs::read(out.join("train.log")).unwrap(),
        ));
    }
    assert_eq!(outputs[0].0, outputs[1].0, "final checkpoints differ");
    assert_eq!(outputs[0].1, outputs[1].1, "loss logs differ");
    println!("ACCEPTANCE 09 determinism: PASS (byte-identical checkpoint and log)");
}

// ---------------------------------------------------------------------
// Criterion 10: zero-shot routing liveness
// ---------------------------------------------------------------------

#[test]
fn acceptance_10_zero_shot_liveness() {
    let dir = tempfile::tempdir().unwrap();
    let raw = dir.path().join("raw");
    let data = dir.path().join("data");
    let out = dir.path().join("run");

    // ASR(aa) and NMT(aa -> xx) only: no direct aa-speech -> xx-text data.
    generate_raw(
        &raw,
        &SynthOptions {
            seed: 21,
            utterances_per_pair: 12,
            st_pairs: vec![],
            asr_langs: vec!["aa".into()],
            nmt_pairs: vec![("aa".into(), "xx".into())],
            ..Default::default()
        },
    )
    .unwrap();

    let model = toy_model_config(16, &["aa", "xx"]);
    let cfg = toy_full_config(
        &data,
        &out,
        model,
        vec![
            toy_phase(1, 60, vec![Task::Asr, Task::Nmt]),
            toy_phase(2, 60, vec![Task::Asr, Task::Nmt]),
        ],
        21,
        4,
    );
    prepare_data(&raw, &data, &cfg, 6).unwrap();
    let report = train_with_options::<f32>(&cfg, &TrainOptions::default()).unwrap();

    let vocab = multist_core::text::Vocabulary::load(&data.join("vocab.txt")).unwrap();
    let cfg = cfg.with_vocab_size(vocab.size()).unwrap();
    let store = ParameterStore::<f32>::load(&report.final_checkpoint).unwrap().clone_frozen();
    let manifest =
        multist_core::data::Manifest::read(&data.join("train_asr.tsv"), &cfg.model.languages)
            .unwrap();
    assert!(!manifest.rows.is_empty());

    let tgt = cfg.model.languages.get("xx").unwrap();
    for row in &manifest.rows {
        let feats = multist_core::audio::read_features::<f32>(
            &data.join(row.audio_path.as_ref().unwrap()),
        )
        .unwrap();
        let model = Model::new(&cfg.model, &store);
        let (enc, _) = model
            .encode_speech(&feats, cfg.model.languages.get(&row.src_lang).unwrap(), &mut Forward::eval())
            .unwrap();
        let hyp = beam_search(
            &mut [multist_core::decode::ModelScorer { model, enc, tgt_lang: tgt }],
            &DecodeConfig {
                beam: 5,
                max_len: multist_core::decode::default_max_len(frontend_output_len(
                    feats.num_frames(),
                    cfg.model.conv_blocks,
                )),
                min_len: 1,
                length_penalty: 1.0,
                bos_id: BOS,
                eos_id: EOS,
                banned_ids: vec![PAD, BOS, UNK, BLANK],
            },
        )
        .unwrap();
        let text = vocab.decode(&hyp.ids).unwrap();
        assert!(!text.is_empty(), "row {} decoded to an empty hypothesis", row.id);
    }
    println!(
        "ACCEPTANCE 10 zero-shot-liveness: PASS ({} rows decoded non-empty)",
        manifest.rows.len()
    );
}
