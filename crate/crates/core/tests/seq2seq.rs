use std::ops::ControlFlow;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use silhouette_core::autodiff::{grad_check, AutodiffError, ParamStore, Tape, Tensor};
use silhouette_core::noise::{mask_scenario_a, MaskedPair};
use silhouette_core::parallel::Sequential;
use silhouette_core::seq2seq::{
    build_vocab, label_smoothed_loss, label_smoothed_loss_var, multi_step_attention, train_stage1, Example, Seq2SeqConfig, Seq2SeqError, Seq2SeqModel, Vocabulary, BOS, EOS,
};
use silhouette_core::sparql::parse_sparql;
use silhouette_core::text::tokenize_question;
use silhouette_core::toybench::{generate_toybench, ToybenchSpec};

fn random_probs(rng: &mut ChaCha8Rng, n: usize, z: usize) -> Tensor {
    let mut data = Vec::with_capacity(n * z);
    for _ in 0..n {
        let row: Vec<f64> = (0..z).map(|_| rng.random_range(0.01..1.0)).collect();
        let s: f64 = row.iter().sum();
        data.extend(row.into_iter().map(|x| x / s));
    }
    Tensor::matrix(n, z, data)
}

/// Builds q explicitly for every (position, token) and sums.
fn smoothed_loss_oracle(p: &Tensor, targets: &[usize], gamma: f64) -> f64 {
    let (n, z) = (p.rows(), p.cols());
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..z {
            let q = if j == targets[i] { gamma } else { (1.0 - gamma) / (z as f64 - 1.0) };
            total += q * p.data()[i * z + j].ln();
        }
    }
    -total / n as f64
}

#[test]
fn smoothed_loss_matches_double_loop_on_500_cases() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..500 {
        let n = rng.random_range(1..7);
        let z = rng.random_range(2..25);
        let gamma = rng.random_range((1.0 / z as f64 + 1e-6)..=1.0);
        let p = random_probs(&mut rng, n, z);
        let targets: Vec<usize> = (0..n).map(|_| rng.random_range(0..z)).collect();
        let want = smoothed_loss_oracle(&p, &targets, gamma);
        let got = label_smoothed_loss(&p, &targets, gamma).unwrap();
        assert!((got - want).abs() < 1e-12, "{got} vs {want}");

        let params = ParamStore::new();
        let mut tape = Tape::new(&params);
        let lp = tape.constant(Tensor::matrix(n, z, p.data().iter().map(|x| x.ln()).collect()));
        let v = label_smoothed_loss_var(&mut tape, lp, &targets, gamma).unwrap();
        assert!((tape.value(v).item() - want).abs() < 1e-12);
    }
}

#[test]
fn uniform_distribution_gives_log_z() {
    let p = Tensor::matrix(1, 4, vec![0.25; 4]);
    let loss = label_smoothed_loss(&p, &[2], 0.9).unwrap();
    assert!((loss - 4f64.ln()).abs() < 1e-12);
    assert!((loss - 1.386294).abs() < 1e-6);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..50 {
        let z = rng.random_range(2..40);
        let n = rng.random_range(1..5);
        let p = Tensor::matrix(n, z, vec![1.0 / z as f64; n * z]);
        let t: Vec<usize> = (0..n).map(|_| rng.random_range(0..z)).collect();
        let g = rng.random_range((1.0 / z as f64 + 1e-6)..=1.0);
        assert!((label_smoothed_loss(&p, &t, g).unwrap() - (z as f64).ln()).abs() < 1e-12);
    }
}

#[test]
fn gamma_one_is_cross_entropy_and_gamma_is_checked() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let p = random_probs(&mut rng, 3, 6);
    let t = [0, 5, 2];
    let ce = -(p.row(0)[0].ln() + p.row(1)[5].ln() + p.row(2)[2].ln()) / 3.0;
    assert!((label_smoothed_loss(&p, &t, 1.0).unwrap() - ce).abs() < 1e-12);
    for bad in [0.0, 1.0 / 6.0, 1.5] {
        assert!(matches!(label_smoothed_loss(&p, &t, bad), Err(Seq2SeqError::InvalidGamma { .. })));
    }
}

fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Tensor {
    Tensor::matrix(r, c, (0..r * c).map(|_| rng.random_range(-1.5..1.5)).collect())
}

#[test]
fn attention_matches_formula_on_100_shapes() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..100 {
        let (n, m, h) = (rng.random_range(1..5), rng.random_range(1..9), rng.random_range(1..7));
        let d = random_matrix(&mut rng, n, h);
        let z = random_matrix(&mut rng, m, h);
        let e = random_matrix(&mut rng, m, h);
        let (a, c) = multi_step_attention(&d, &z, &e).unwrap();
        assert_eq!(a.shape(), &[n, m]);
        assert_eq!(c.shape(), &[n, h]);
        for i in 0..n {
            let dots: Vec<f64> = (0..m).map(|j| (0..h).map(|k| d.row(i)[k] * z.row(j)[k]).sum()).collect();
            let denom: f64 = dots.iter().map(|x| x.exp()).sum();
            let want_a: Vec<f64> = dots.iter().map(|x| x.exp() / denom).collect();
            let sum: f64 = a.row(i).iter().sum();
            assert!((sum - 1.0).abs() < 1e-9);
            for j in 0..m {
                assert!(a.row(i)[j] >= 0.0);
                assert!((a.row(i)[j] - want_a[j]).abs() < 1e-12);
            }
            for k in 0..h {
                let want: f64 = (0..m).map(|j| want_a[j] * (z.row(j)[k] + e.row(j)[k])).sum::<f64>() + d.row(i)[k];
                assert!((c.row(i)[k] - want).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn attention_edge_cases() {
    let d = Tensor::matrix(1, 2, vec![0.3, -0.7]);
    let z = Tensor::matrix(1, 2, vec![1.0, 2.0]);
    let e = Tensor::matrix(1, 2, vec![0.5, 0.5]);
    let (a, c) = multi_step_attention(&d, &z, &e).unwrap();
    assert_eq!(a.data(), &[1.0]);
    assert!((c.data()[0] - 1.8).abs() < 1e-15 && (c.data()[1] - 1.8).abs() < 1e-15);

    // d orthogonal to every z_j: equal scores.
    let d = Tensor::matrix(1, 2, vec![1.0, 0.0]);
    let z = Tensor::matrix(3, 2, vec![0.0, 1.0, 0.0, -2.0, 0.0, 5.0]);
    let (a, _) = multi_step_attention(&d, &z, &Tensor::zeros(&[3, 2])).unwrap();
    for x in a.data() {
        assert!((x - 1.0 / 3.0).abs() < 1e-15);
    }
}

fn tiny_vocab(n: usize) -> Vocabulary {
    Vocabulary::from_tokens((0..n).map(|i| format!("w{i}")))
}

fn micro_config(embed: usize, hidden: usize) -> Seq2SeqConfig {
    Seq2SeqConfig {
        embed_dim: embed,
        hidden_dim: hidden,
        kernel_width: 3,
        encoder_layers: 2,
        decoder_layers: 2,
        max_positions: 12,
        gamma: 0.9,
        seed: 4,
        ..Default::default()
    }
}

fn micro_model(embed: usize, hidden: usize) -> Seq2SeqModel {
    Seq2SeqModel::new(micro_config(embed, hidden), tiny_vocab(10), tiny_vocab(12)).unwrap()
}

#[test]
fn output_distribution_cases() {
    let mut m = micro_model(8, 8);
    let z = m.tgt_vocab.len();
    let d: Vec<f64> = (0..8).map(|i| i as f64 * 0.3 - 1.0).collect();

    // Oracle: softmax of W·d + b straight from the parameters.
    let w = m.params.by_name("out.w").unwrap().clone();
    let b = m.params.by_name("out.b").unwrap().clone();
    let logits: Vec<f64> = (0..z).map(|j| (0..8).map(|k| d[k] * w.row(k)[j]).sum::<f64>() + b.data()[j]).collect();
    let mx = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let s: f64 = logits.iter().map(|l| (l - mx).exp()).sum();
    let p = m.output_distribution(&d).unwrap();
    for j in 0..z {
        assert!((p[j] - (logits[j] - mx).exp() / s).abs() < 1e-12);
    }

    let id = m.params.id("out.w").unwrap();
    m.params.get_mut(id).data_mut().fill(0.0);
    let id = m.params.id("out.b").unwrap();
    m.params.get_mut(id).data_mut().fill(0.0);
    for x in m.output_distribution(&d).unwrap() {
        assert!((x - 1.0 / z as f64).abs() < 1e-15);
    }
    m.params.get_mut(id).data_mut()[7] = 1e3;
    let p = m.output_distribution(&d).unwrap();
    assert!((p[7] - 1.0).abs() < 1e-12);
}

#[test]
fn encode_shapes_and_position_sensitivity() {
    let m = micro_model(6, 8);
    let (z, e) = m.encode(&[5]).unwrap();
    assert_eq!((z.shape(), e.shape()), (&[1, 8][..], &[1, 6][..]));
    let (z1, _) = m.encode(&[4, 5, 6]).unwrap();
    let (z2, _) = m.encode(&[5, 4, 6]).unwrap();
    assert_ne!(z1, z2);
    assert!(matches!(m.encode(&[4; 13]), Err(Seq2SeqError::TooLong { len: 13, max: 12 })));
}

#[test]
fn zero_kernels_leave_only_the_residual_path() {
    let mut m = micro_model(6, 8);
    let names: Vec<String> = m.params.iter().map(|(n, _)| n.to_string()).filter(|n| n.starts_with("enc.") && n.contains(".conv.")).collect();
    for n in names {
        let id = m.params.id(&n).unwrap();
        m.params.get_mut(id).data_mut().fill(0.0);
    }
    let src = [4, 7, 9];
    let (z, e) = m.encode(&src).unwrap();
    // GLU of zeros is zero, so z is just the projected embedding.
    let w = m.params.by_name("enc.in_proj.w").unwrap();
    let b = m.params.by_name("enc.in_proj.b").unwrap();
    let embed = m.params.by_name("enc.embed").unwrap();
    let pos = m.params.by_name("enc.pos").unwrap();
    for (i, &t) in src.iter().enumerate() {
        for k in 0..6 {
            assert_eq!(e.row(i)[k], embed.row(t)[k] + pos.row(i)[k]);
        }
        for j in 0..8 {
            let want: f64 = (0..6).map(|k| e.row(i)[k] * w.row(k)[j]).sum::<f64>() + b.data()[j];
            assert!((z.row(i)[j] - want).abs() < 1e-12);
        }
    }
}

fn end_to_end_check(embed: usize, hidden: usize) -> f64 {
    let m = micro_model(embed, hidden);
    assert!(m.tgt_vocab.len() <= 20);
    let src = [4, 5, 9, 6];
    let tgt = [7, 4, 11];
    grad_check(
        |tape| {
            m.loss_on(tape, &src, &tgt).map_err(|e| match e {
                Seq2SeqError::Autodiff(a) => a,
                other => panic!("{other}"),
            })
        },
        &m.params,
        1e-5,
        24,
    )
    .unwrap()
}

#[test]
fn full_model_gradient_passes_grad_check() {
    let err = end_to_end_check(8, 8);
    assert!(err < 1e-4, "max rel err {err}");
    let err = end_to_end_check(6, 8);
    assert!(err < 1e-4, "max rel err with projections {err}");
}

#[test]
fn decoder_is_causal() {
    let m = micro_model(8, 8);
    let params = &m.params;
    let states = |prefix: &[usize]| -> Result<Tensor, AutodiffError> {
        let mut tape = Tape::new(params);
        let enc = m.encode_on(&mut tape, &[4, 5, 6]).unwrap();
        let d = m.decode_on(&mut tape, &enc, prefix).unwrap();
        let logits = m.logits_on(&mut tape, d).unwrap();
        Ok(tape.value(logits).clone())
    };
    let a = states(&[BOS, 4, 5, 6, 7]).unwrap();
    for t in 0..4 {
        let mut other = vec![BOS, 4, 5, 6, 7];
        for x in other.iter_mut().skip(t + 1) {
            *x = 10;
        }
        let b = states(&other).unwrap();
        for row in 0..=t {
            assert_eq!(a.row(row), b.row(row), "row {row} changed when altering positions > {t}");
        }
    }
}

#[test]
fn memorizes_a_single_example() {
    let mut cfg = micro_config(16, 16);
    cfg.gamma = 1.0;
    cfg.max_epochs = 200;
    cfg.batch_size = 1;
    cfg.learning_rate = 0.1;
    cfg.momentum = 0.9;
    cfg.clip_norm = Some(1.0);
    let data = [Example { src: vec![4, 5, 6], tgt: vec![9, 4, 11, 8] }];
    let mut m = Seq2SeqModel::new(cfg.clone(), tiny_vocab(10), tiny_vocab(12)).unwrap();
    let log = train_stage1(&mut m, &data, &Sequential, |s, _| if s.loss < 0.05 { ControlFlow::Break(()) } else { ControlFlow::Continue(()) }).unwrap();
    assert!(log.final_loss().unwrap() < 0.05, "{:?}", log.final_loss());
    assert!(log.epochs.len() <= 200);
    assert_eq!(m.decode(&data[0].src, 20, 1).unwrap(), data[0].tgt);
    assert_eq!(m.decode(&data[0].src, 20, 4).unwrap(), data[0].tgt);

    // Same seed, different smoothing: different loss curve.
    cfg.gamma = 0.9;
    cfg.max_epochs = 5;
    let mut a = Seq2SeqModel::new(cfg.clone(), tiny_vocab(10), tiny_vocab(12)).unwrap();
    let la = train_stage1(&mut a, &data, &Sequential, |_, _| ControlFlow::Continue(())).unwrap();
    cfg.gamma = 1.0;
    let mut b = Seq2SeqModel::new(cfg, tiny_vocab(10), tiny_vocab(12)).unwrap();
    let lb = train_stage1(&mut b, &data, &Sequential, |_, _| ControlFlow::Continue(())).unwrap();
    assert_ne!(la.final_loss(), lb.final_loss());
}

fn toybench_pairs(n: usize) -> Vec<MaskedPair> {
    let bench = generate_toybench(&ToybenchSpec { n_train: n, n_val: 1, n_test: 1, ..Default::default() }).unwrap();
    bench
        .train
        .iter()
        .map(|r| mask_scenario_a(&tokenize_question(&r.question), &parse_sparql(&r.sparql).unwrap(), &bench.embeddings))
        .collect()
}

fn trained_on(pairs: &[MaskedPair], epochs: usize) -> (Seq2SeqModel, Vec<Example>) {
    let (src, tgt) = build_vocab(pairs, 1).unwrap();
    let data: Vec<Example> = pairs
        .iter()
        .map(|p| Example {
            src: src.encode(&p.masked_question),
            tgt: tgt.encode(&p.masked_sparql),
        })
        .collect();
    let cfg = Seq2SeqConfig {
        embed_dim: 16,
        hidden_dim: 16,
        encoder_layers: 1,
        decoder_layers: 1,
        max_epochs: epochs,
        ..Default::default()
    };
    let mut m = Seq2SeqModel::new(cfg, src, tgt).unwrap();
    train_stage1(&mut m, &data, &Sequential, |_, _| ControlFlow::Continue(())).unwrap();
    (m, data)
}

#[test]
fn toybench_target_vocab_has_no_resources() {
    let pairs = toybench_pairs(60);
    let (src, tgt) = build_vocab(&pairs, 1).unwrap();
    assert!(tgt.tokens().iter().all(|t| !t.starts_with("dbr:")));
    assert_eq!(build_vocab(&pairs, 1).unwrap(), (src, tgt));
}

#[test]
fn greedy_is_stepwise_argmax_and_beam_never_scores_lower() {
    let pairs = toybench_pairs(40);
    let (m, data) = trained_on(&pairs, 6);
    for ex in data.iter().take(25) {
        let greedy = m.decode(&ex.src, 30, 1).unwrap();

        // Stepwise argmax trace, ties to the lower id.
        let mut tape = Tape::new(&m.params);
        let enc = m.encode_on(&mut tape, &ex.src).unwrap();
        let mut prefix = vec![BOS];
        let mut trace = Vec::new();
        for _ in 0..30 {
            let lp = m.next_log_probs(&mut tape, &enc, &prefix).unwrap();
            let best = (0..lp.len()).fold(0, |b, i| if lp[i] > lp[b] { i } else { b });
            if best == EOS {
                break;
            }
            trace.push(best);
            prefix.push(best);
        }
        assert_eq!(greedy, trace);

        let beam = m.decode(&ex.src, 30, 4).unwrap();
        if greedy.len() < 30 {
            let (sb, sg) = (m.sequence_score(&ex.src, &beam).unwrap(), m.sequence_score(&ex.src, &greedy).unwrap());
            assert!(sb >= sg - 1e-12, "beam {sb} < greedy {sg}");
        }
    }
}

#[test]
fn training_is_reproducible() {
    let pairs = toybench_pairs(12);
    let (a, _) = trained_on(&pairs, 2);
    let (b, _) = trained_on(&pairs, 2);
    assert_eq!(a.params, b.params);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn attention_rows_are_distributions(n in 1usize..4, m in 1usize..8, h in 1usize..6, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = random_matrix(&mut rng, n, h);
        let z = random_matrix(&mut rng, m, h);
        let (a, _) = multi_step_attention(&d, &z, &random_matrix(&mut rng, m, h)).unwrap();
        for i in 0..n {
            let s: f64 = a.row(i).iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-9);
            prop_assert!(a.row(i).iter().all(|x| *x >= 0.0));
        }
    }

    #[test]
    fn smoothed_loss_is_at_least_gold_term(n in 1usize..5, z in 2usize..12, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = random_probs(&mut rng, n, z);
        let t: Vec<usize> = (0..n).map(|_| rng.random_range(0..z)).collect();
        let g = rng.random_range((1.0 / z as f64 + 1e-6)..=1.0);
        let loss = label_smoothed_loss(&p, &t, g).unwrap();
        prop_assert!(loss.is_finite() && loss > 0.0);
    }
}
