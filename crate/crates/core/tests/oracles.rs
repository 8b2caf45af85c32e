mod common;

use common::{cider_ref, delta_ref, farthest_ref, loss_ref, toks};
use mtle::dataio::{load_features, write_features, Caption, Dataset, DatasetKind, Split, VideoSample, BOS, EOS, RESERVED, UNK};
use mtle::metrics::{bleu, cider_per_record, lcs_len, rouge_l, BleuSmoothing, EvalRecord};
use mtle::model::{encode, teacher_force, AttentionMemory, DecodeMode, Dropout, InferOptions, ModelConfig};
use mtle::multitask::{mtl_loss, training_pair_for, MultitaskError, TaskSet, TaskVars};
use mtle::numerics::{grad_check, NumericsError, Tape, Tensor, Var};
use mtle::semantics::{build_sdm, Embedder, PairSampling, StopWordList, SurrogateEmbedder};
use mtle::trainer::{train, TrainConfig, TrainResources};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

fn tiny_config(vocab_size: usize) -> ModelConfig {
    ModelConfig {
        feature_dim: 3,
        proj_dim: 2,
        enc_hidden: 3,
        dec_hidden: 3,
        word_dim: 2,
        attn_dim: 2,
        vocab_size,
    }
}

fn random_model(seed: u64, cfg: ModelConfig, scale: f64) -> (TaskSet, ChaCha8Rng) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = TaskSet::init(cfg, 2, &mut rng).unwrap();
    for t in model.tensors_mut() {
        for v in t.data_mut() {
            *v = rng.random_range(-scale..scale);
        }
    }
    (model, rng)
}

fn random_frames(rng: &mut ChaCha8Rng, t: usize, d: usize) -> Vec<Vec<f64>> {
    (0..t).map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()).collect()
}

fn random_caption(rng: &mut ChaCha8Rng, words: usize, vocab: usize) -> Vec<usize> {
    let mut c = vec![BOS];
    c.extend((0..words).map(|_| rng.random_range(RESERVED.len()..vocab)));
    c.push(EOS);
    c
}

#[test]
fn matmul_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let params = [random_tensor(&mut rng, &[3, 4]), random_tensor(&mut rng, &[4, 2])];
    let report = grad_check(&params, 1e-5, |tape: &mut Tape, p: &[Var]| {
        let m = tape.matmul(p[0], p[1])?;
        Ok::<_, NumericsError>(tape.sum(m))
    })
    .unwrap();
    assert_eq!(report.entries_checked, 20);
    assert!(report.passed(1e-6), "{report:?}");
}

#[test]
fn sigmoid_gradient_closed_form() {
    let mut tape = Tape::new();
    let x = tape.leaf(Tensor::vector(vec![1.5]));
    let s = tape.sigmoid(x);
    let loss = tape.sum(s);
    let g = tape.backward(loss).unwrap().get(x).unwrap().data()[0];
    let sig = 1.0 / (1.0 + (-1.5f64).exp());
    assert!((g - sig * (1.0 - sig)).abs() < 1e-8);
    let f = |x: f64| 1.0 / (1.0 + (-x).exp());
    let numeric = (f(1.5 + 1e-5) - f(1.5 - 1e-5)) / 2e-5;
    assert!((g - numeric).abs() < 1e-8);
}

#[test]
fn hadamard_gradient_is_the_other_factor() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let a = random_tensor(&mut rng, &[5]);
    let b = random_tensor(&mut rng, &[5]);
    let mut tape = Tape::new();
    let (va, vb) = (tape.leaf(a.clone()), tape.leaf(b.clone()));
    let h = tape.hadamard(va, vb).unwrap();
    let loss = tape.sum(h);
    let grads = tape.backward(loss).unwrap();
    assert_eq!(grads.get(va).unwrap().data(), b.data());
    let report = grad_check(&[a, b], 1e-5, |tape: &mut Tape, p: &[Var]| {
        let h = tape.hadamard(p[0], p[1])?;
        Ok::<_, NumericsError>(tape.sum(h))
    })
    .unwrap();
    assert!(report.passed(1e-6), "{report:?}");
}

#[test]
fn softmax_closed_form() {
    let mut tape = Tape::new();
    let x = tape.constant(Tensor::vector(vec![0.0, 3f64.ln()]));
    let p = tape.softmax(x).unwrap();
    let p = tape.value(p).data();
    assert!((p[0] - 0.25).abs() < 1e-15 && (p[1] - 0.75).abs() < 1e-15);
}

/// A scalar built from every taped operation.
fn composition(tape: &mut Tape, p: &[Var]) -> Result<Var, NumericsError> {
    let (m, x, y) = (p[0], p[1], p[2]);
    let mx = tape.matmul(m, x)?;
    let s = tape.sigmoid(mx);
    let t = tape.tanh(y);
    let st = tape.hadamard(s, t)?;
    let d = tape.sub(st, y)?;
    let a = tape.abs(d);
    let sm = tape.softmax(a)?;
    let lg = tape.log(sm)?;
    let c = tape.concat(&[lg, x])?;
    let sl = tape.slice(c, 1, 3)?;
    let rows = tape.stack_rows(&[sl, y])?;
    let tr = tape.transpose(rows)?;
    let r = tape.select_row(tr, 2)?;
    let pk = tape.pick(r, 1)?;
    let sc = tape.scale(pk, 0.7);
    let sum = tape.sum(sl);
    let added = tape.add(sc, sum)?;
    let ms = tape.sum(m);
    tape.add_all(&[added, ms, pk])
}

#[test]
fn every_operation_matches_finite_differences() {
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = [
            random_tensor(&mut rng, &[3, 4]),
            random_tensor(&mut rng, &[4]),
            random_tensor(&mut rng, &[3]),
        ];
        let report = grad_check(&params, 1e-5, composition).unwrap();
        assert!(report.passed(1e-6), "seed {seed}: {report:?}");
    }
}

#[test]
fn backward_is_bit_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let params = [
        random_tensor(&mut rng, &[3, 4]),
        random_tensor(&mut rng, &[4]),
        random_tensor(&mut rng, &[3]),
    ];
    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|p| tape.leaf(p.clone())).collect();
    let loss = composition(&mut tape, &vars).unwrap();
    let a = tape.backward(loss).unwrap();
    let b = tape.backward(loss).unwrap();
    for &v in &vars {
        assert_eq!(a.get(v).unwrap(), b.get(v).unwrap());
    }
}

#[test]
fn cross_entropy_gradient_matches_finite_differences() {
    let cfg = tiny_config(7);
    let (model, mut rng) = random_model(21, cfg, 0.5);
    let frames = random_frames(&mut rng, 3, cfg.feature_dim);
    let caption = random_caption(&mut rng, 3, cfg.vocab_size);
    let params: Vec<Tensor> = model.tensors().into_iter().cloned().collect();
    let report = grad_check(&params, 1e-5, |tape: &mut Tape, p: &[Var]| {
        let vars = TaskVars::from_flat(&model, p);
        let nu = encode(tape, &vars.encoder, &frames, &mut Dropout::disabled())?;
        let mem = AttentionMemory::new(tape, &vars.decoders[0], &nu)?;
        let dists = teacher_force(tape, &vars.decoders[0], &mem, &caption, &mut Dropout::disabled())?;
        let mut terms = Vec::new();
        for (i, &d) in dists.iter().enumerate() {
            let p = tape.pick(d, caption[i + 1])?;
            terms.push(tape.log(p)?);
        }
        let s = tape.add_all(&terms)?;
        Ok::<_, MultitaskError>(tape.scale(s, -1.0))
    })
    .unwrap();
    assert!(report.passed(1e-4), "{report:?}");
}

#[test]
fn feature_file_round_trip_is_single_precision_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let frames = random_frames(&mut rng, 5, 8);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("f.mtlf");
    write_features(&path, &frames).unwrap();
    let back = load_features(&path).unwrap();
    for (a, b) in frames.iter().flatten().zip(back.iter().flatten()) {
        assert_eq!(*b, *a as f32 as f64);
    }
    assert_eq!(back.len(), 5);
}

#[test]
fn hand_set_loss_fixture() {
    // All-zero weights keep h = 0, so each decoder's distribution is the
    // softmax of its output bias at every step.
    let cfg = tiny_config(4);
    let mut model = TaskSet::zeros(cfg, 2).unwrap();
    model.decoders[0].out_b = Tensor::vector(vec![0.0, 2f64.ln(), 0.0, 3f64.ln()]);
    model.decoders[1].out_b = Tensor::vector(vec![2f64.ln(), 0.0, 0.0, 0.0]);
    let frames = vec![vec![0.3, -0.2, 0.1], vec![0.0, 0.5, -0.4]];
    let x1 = [BOS, UNK, EOS];
    let xc = [BOS, UNK, UNK, EOS];
    let (eta, lambda) = (1.0, 0.5);
    // P0 = [1, 2, 1, 3] / 7 and P1 = [2, 1, 1, 1] / 5.
    let ce_reference = -(3.0f64 / 7.0).ln() - (2.0f64 / 7.0).ln();
    let ce_complement = 3.0 * 5f64.ln();
    let agreement = (3.0 / 7.0 - 1.0 / 5.0) + (2.0 / 7.0 - 1.0 / 5.0);
    let expected = lambda * (ce_reference + ce_complement + eta * agreement);
    assert!((expected - 0.5 * ((49.0f64 / 6.0).ln() + 3.0 * 5f64.ln() + 11.0 / 35.0)).abs() < 1e-15);

    let mut tape = Tape::new();
    let vars = model.bind(&mut tape, false);
    let nu = encode(&mut tape, &vars.encoder, &frames, &mut Dropout::disabled()).unwrap();
    let loss = mtl_loss(&mut tape, &vars, &nu, &x1, &xc, eta, lambda, &mut Dropout::disabled()).unwrap();
    let b = loss.breakdown;
    assert!((b.ce_reference - ce_reference).abs() < 1e-9);
    assert!((b.ce_complement - ce_complement).abs() < 1e-9);
    assert!((b.agreement - agreement).abs() < 1e-9);
    assert!((b.total - expected).abs() < 1e-9);
}

#[test]
fn loss_matches_direct_forward_computation() {
    for seed in 0..20 {
        let cfg = tiny_config(9);
        let (model, mut rng) = random_model(seed, cfg, 0.8);
        let frames = random_frames(&mut rng, 1 + seed as usize % 4, cfg.feature_dim);
        let x1 = random_caption(&mut rng, 2, cfg.vocab_size);
        let xc = random_caption(&mut rng, 3, cfg.vocab_size);
        let eta = rng.random_range(0.0..1.0);
        let lambda = rng.random_range(0.5..2.0);
        let mut tape = Tape::new();
        let vars = model.bind(&mut tape, false);
        let nu = encode(&mut tape, &vars.encoder, &frames, &mut Dropout::disabled()).unwrap();
        let got = mtl_loss(&mut tape, &vars, &nu, &x1, &xc, eta, lambda, &mut Dropout::disabled())
            .unwrap()
            .breakdown;
        let want = loss_ref(&model, &frames, &x1, &xc, eta, lambda);
        assert!((got.ce_reference - want.ce_reference).abs() < 1e-9, "seed {seed}");
        assert!((got.ce_complement - want.ce_complement).abs() < 1e-9, "seed {seed}");
        assert!((got.agreement - want.agreement).abs() < 1e-9, "seed {seed}");
        assert!((got.total - want.total).abs() < 1e-9, "seed {seed}");
    }
}

#[test]
fn terms_only_reach_their_own_decoder_and_encoder_gradients_add_up() {
    let cfg = tiny_config(9);
    let (model, mut rng) = random_model(4, cfg, 0.5);
    let frames = random_frames(&mut rng, 3, cfg.feature_dim);
    let x1 = random_caption(&mut rng, 3, cfg.vocab_size);
    let xc = random_caption(&mut rng, 2, cfg.vocab_size);
    let (eta, lambda) = (0.7, 1.3);
    let mut tape = Tape::new();
    let vars = model.bind(&mut tape, true);
    let nu = encode(&mut tape, &vars.encoder, &frames, &mut Dropout::disabled()).unwrap();
    let loss = mtl_loss(&mut tape, &vars, &nu, &x1, &xc, eta, lambda, &mut Dropout::disabled()).unwrap();

    let grads = |tape: &Tape, v: Var, of: &[Var]| -> Vec<Tensor> {
        let g = tape.backward(v).unwrap();
        of.iter().map(|&p| g.get_or_zeros(p, tape.shape(p))).collect()
    };
    let dec0 = vars.decoders[0].vars();
    let dec1 = vars.decoders[1].vars();
    for g in grads(&tape, loss.ce_reference, &dec1) {
        assert!(g.data().iter().all(|&x| x == 0.0));
    }
    for g in grads(&tape, loss.ce_complement, &dec0) {
        assert!(g.data().iter().all(|&x| x == 0.0));
    }
    assert!(grads(&tape, loss.ce_reference, &dec0).iter().any(|g| g.squared_norm() > 0.0));

    let enc = vars.encoder.vars();
    let total = grads(&tape, loss.total, &enc);
    let r = grads(&tape, loss.ce_reference, &enc);
    let c = grads(&tape, loss.ce_complement, &enc);
    let a = grads(&tape, loss.agreement, &enc);
    for k in 0..enc.len() {
        for i in 0..total[k].len() {
            let sum = lambda * (r[k].data()[i] + c[k].data()[i] + eta * a[k].data()[i]);
            assert!((total[k].data()[i] - sum).abs() < 1e-10);
        }
    }
}

fn video(id: &str, captions: &[&str]) -> VideoSample {
    VideoSample {
        video_id: id.into(),
        frames: vec![vec![0.0; 3]],
        captions: captions.iter().map(|c| Caption::new(*c)).collect(),
        split: Split::Train,
    }
}

#[test]
fn six_caption_complement_is_the_farthest() {
    let v = video(
        "v",
        &[
            "a man rides a horse",
            "a man is riding a horse",
            "someone rides an animal",
            "a person on a horse in a field",
            "horse riding",
            "a rider gallops across the field",
        ],
    );
    let sdm = build_sdm("v", &v.captions, &SurrogateEmbedder).unwrap();
    let vecs: Vec<Vec<f64>> = v
        .captions
        .iter()
        .map(|c| SurrogateEmbedder.embed(&c.text).unwrap().vector().to_vec())
        .collect();
    let delta: Vec<Vec<f64>> = vecs.iter().map(|u| vecs.iter().map(|w| delta_ref(u, w)).collect()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for r in 0..6 {
        let pair = training_pair_for(
            &v,
            r,
            Some(&sdm),
            DatasetKind::Multi,
            &StopWordList::default(),
            PairSampling::Farthest,
            &mut rng,
        )
        .unwrap();
        let c = pair.complement_index.unwrap();
        assert_eq!(Some(c), farthest_ref(&delta, r));
        for j in (0..6).filter(|&j| j != r) {
            assert!(delta[r][c] >= delta[r][j] - 1e-12);
        }
        assert_eq!(pair.complement, v.captions[c].tokens);
    }
}

fn rec(c: &str, refs: &[&str]) -> EvalRecord {
    EvalRecord::new("v", toks(c), refs.iter().map(|r| toks(r)).collect())
}

#[test]
fn bleu2_hand_fixtures() {
    // p1 = 3/3, p2 = 2/2, c = 3, r = 4.
    let got = bleu(&[rec("the cat sat", &["the cat sat down"])], 2, BleuSmoothing::None).unwrap();
    assert!((got - (1.0f64 - 4.0 / 3.0).exp()).abs() < 1e-9);
    // Clipped p1 = 2/3, p2 = 1/2, c = r = 3.
    let got = bleu(&[rec("the the cat", &["the cat sat"])], 2, BleuSmoothing::None).unwrap();
    assert!((got - (1.0f64 / 3.0).sqrt()).abs() < 1e-9);
    // Corpus level: counts pooled before the geometric mean.
    // p1 = (2 + 3) / (2 + 3), p2 = (1 + 1) / (1 + 2), c = 5, r = 2 + 4.
    let corpus = [rec("a b", &["a b"]), rec("c d e", &["c d x e"])];
    let got = bleu(&corpus, 2, BleuSmoothing::None).unwrap();
    let want = (1.0f64 - 6.0 / 5.0).exp() * (2.0f64 / 3.0).sqrt();
    assert!((got - want).abs() < 1e-9);
}

#[test]
fn rouge_l_direct_formula() {
    let (c, r) = (toks("a b c d"), toks("a c d"));
    assert_eq!(lcs_len(&c, &r), 3);
    let (p, rc, beta) = (0.75f64, 1.0f64, 1.2f64);
    let f = (1.0 + beta * beta) * p * rc / (rc + beta * beta * p);
    let got = rouge_l(&[rec("a b c d", &["a c d"])], 1.2).unwrap();
    assert!((got - f).abs() < 1e-12);
}

#[test]
fn cider_matches_brute_force() {
    let corpus = [
        ("a man is playing a guitar", vec!["a man plays a guitar", "someone is playing guitar"]),
        ("a cat sleeps on the sofa", vec!["a cat is sleeping", "the cat naps on a couch"]),
        ("a man is cooking", vec!["a man cooks food in a kitchen", "a person is cooking"]),
    ];
    let records: Vec<EvalRecord> = corpus.iter().map(|(c, r)| rec(c, r)).collect();
    let plain: Vec<(Vec<String>, Vec<Vec<String>>)> = records
        .iter()
        .map(|r| (r.candidate.clone(), r.references.clone()))
        .collect();
    let got = cider_per_record(&records, 4, 6.0).unwrap();
    let want = cider_ref(&plain, 4, 6.0);
    for (g, w) in got.iter().zip(&want) {
        assert!((g - w).abs() < 1e-9, "{got:?} vs {want:?}");
    }
    assert!(got.iter().any(|&s| s > 0.0));
}

#[test]
fn overfit_single_pair_reproduces_caption() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let dataset = Dataset {
        kind: DatasetKind::Single,
        videos: vec![VideoSample {
            video_id: "only".into(),
            frames: random_frames(&mut rng, 4, 5),
            captions: vec![Caption::new("a dog chases a red ball")],
            split: Split::Train,
        }],
    };
    let config = TrainConfig {
        epochs: 150,
        learning_rate: 0.01,
        enc_hidden: 8,
        dec_hidden: 12,
        word_dim: 8,
        attn_dim: 8,
        proj_dim: 4,
        ..TrainConfig::default()
    };
    let ck = train(&dataset, &config, &TrainResources::default()).unwrap();
    let out = ck.model.infer(&dataset.videos[0].frames, &InferOptions::default()).unwrap();
    assert_eq!(ck.vocab.decode(&out), toks("a dog chases a red ball"));
}

#[test]
fn beam_of_one_is_greedy_and_twin_ensemble_is_greedy() {
    let cfg = tiny_config(10);
    for seed in 0..10 {
        let (mut model, mut rng) = random_model(seed, cfg, 1.5);
        let frames = random_frames(&mut rng, 4, cfg.feature_dim);
        let opts = |mode| InferOptions {
            mode,
            max_len: 8,
            decoder: 0,
        };
        let greedy = model.infer(&frames, &opts(DecodeMode::Greedy)).unwrap();
        assert_eq!(model.infer(&frames, &opts(DecodeMode::Beam { width: 1 })).unwrap(), greedy);
        model.decoders[1] = model.decoders[0].clone();
        assert_eq!(model.infer(&frames, &opts(DecodeMode::Ensemble)).unwrap(), greedy);
    }
}

#[test]
fn zero_epochs_returns_seeded_initialization() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let dataset = Dataset {
        kind: DatasetKind::Multi,
        videos: vec![VideoSample {
            video_id: "v".into(),
            frames: random_frames(&mut rng, 2, 3),
            captions: vec![Caption::new("a b"), Caption::new("c d")],
            split: Split::Train,
        }],
    };
    let config = TrainConfig {
        epochs: 0,
        seed: 42,
        ..TrainConfig::default()
    };
    let ck = train(&dataset, &config, &TrainResources::default()).unwrap();
    assert!(ck.loss_log.is_empty());
    let cfg = config.model_config(3, ck.vocab.len());
    let expected = TaskSet::init(cfg, 2, &mut ChaCha8Rng::seed_from_u64(42)).unwrap();
    assert_eq!(ck.model, expected);
}
