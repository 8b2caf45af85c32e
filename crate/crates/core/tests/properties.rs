mod common;

use common::{delta_ref, farthest_ref};
use mtle::dataio::{decode_features, encode_features, tokenize, Caption, Vocabulary, BOS, EOS, RESERVED};
use mtle::metrics::{bleu, cider, modified_precision_counts, rouge_l, BleuSmoothing, EvalRecord};
use mtle::model::{attend, encode, AttentionMemory, Dropout, EncodedVideo, ModelConfig};
use mtle::multitask::{centroid_prob, mtl_loss, TaskSet};
use mtle::numerics::{softmax, Tape, Tensor};
use mtle::semantics::{augment, build_sdm, delta, EmbeddingSource, SentenceEmbedding, StopWordList, SurrogateEmbedder};
use mtle::trainer::clip_gradients;
use proptest::collection::vec;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const WORDS: &[&str] = &["a", "the", "man", "dog", "runs", "is", "on", "grass", "red", "ball", "jumps", "over"];

fn word() -> impl Strategy<Value = String> {
    prop::sample::select(WORDS).prop_map(str::to_owned)
}

fn sentence(max: usize) -> impl Strategy<Value = Vec<String>> {
    vec(word(), 1..=max)
}

fn distribution(n: usize) -> impl Strategy<Value = Vec<f64>> {
    vec(0.01f64..1.0, n).prop_map(|w| {
        let s: f64 = w.iter().sum();
        w.iter().map(|x| x / s).collect()
    })
}

fn record() -> impl Strategy<Value = EvalRecord> {
    (sentence(7), vec(sentence(7), 1..4)).prop_map(|(c, r)| EvalRecord::new("v", c, r))
}

fn small_config() -> ModelConfig {
    ModelConfig {
        feature_dim: 3,
        proj_dim: 2,
        enc_hidden: 2,
        dec_hidden: 3,
        word_dim: 2,
        attn_dim: 2,
        vocab_size: 8,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn softmax_is_normalized_and_shift_invariant(x in vec(-50.0f64..50.0, 1..10), c in -100.0f64..100.0) {
        let p = softmax(&x);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(p.iter().all(|&v| v >= 0.0));
        let shifted: Vec<f64> = x.iter().map(|v| v + c).collect();
        for (a, b) in p.iter().zip(softmax(&shifted)) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn feature_bytes_round_trip(t in 1usize..6, d in 1usize..6, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let frames: Vec<Vec<f64>> = (0..t).map(|_| (0..d).map(|_| rng.random_range(-1e3..1e3)).collect()).collect();
        let back = decode_features(&encode_features(&frames).unwrap()).unwrap();
        for (a, b) in frames.iter().flatten().zip(back.iter().flatten()) {
            prop_assert_eq!(*b, *a as f32 as f64);
        }
    }

    #[test]
    fn vocabulary_encode_decode_is_identity(captions in vec(sentence(6), 1..6)) {
        let vocab = Vocabulary::build(captions.iter().map(|c| c.as_slice()), 1).unwrap();
        for c in &captions {
            let enc = vocab.encode(c);
            prop_assert_eq!(enc[0], BOS);
            prop_assert_eq!(*enc.last().unwrap(), EOS);
            prop_assert_eq!(&vocab.decode(&enc), c);
        }
    }

    #[test]
    fn augment_keeps_order_and_is_idempotent(caption in sentence(10)) {
        let words = StopWordList::default();
        let once = augment(&caption, &words);
        let twice = augment(&once.tokens, &words);
        prop_assert_eq!(&twice.tokens, &once.tokens);
        let mut rest = caption.iter();
        for t in &once.tokens {
            prop_assert!(rest.any(|c| c == t), "token {} out of order or introduced", t);
        }
        if !once.degenerate {
            prop_assert!(once.tokens.iter().all(|t| !words.contains(t)));
        }
    }

    #[test]
    fn tokenize_is_lowercase_and_trimmed(text in "[A-Za-z,.!? ]{0,30}") {
        for t in tokenize(&text) {
            prop_assert!(!t.is_empty());
            prop_assert_eq!(t.to_lowercase(), t.clone());
            prop_assert!(!t.starts_with(|c: char| c.is_ascii_punctuation()));
            prop_assert!(!t.ends_with(|c: char| c.is_ascii_punctuation()));
        }
    }

    #[test]
    fn delta_is_symmetric_and_bounded(u in vec(-1.0f64..1.0, 4), v in vec(-1.0f64..1.0, 4)) {
        prop_assume!(u.iter().any(|x| x.abs() > 1e-3) && v.iter().any(|x| x.abs() > 1e-3));
        let eu = SentenceEmbedding::new(u.clone(), EmbeddingSource::Precomputed).unwrap();
        let ev = SentenceEmbedding::new(v.clone(), EmbeddingSource::Precomputed).unwrap();
        let d = delta(&eu, &ev).unwrap();
        prop_assert_eq!(d, delta(&ev, &eu).unwrap());
        prop_assert!((-1e-12..=2.0 + 1e-12).contains(&d));
        prop_assert!(delta(&eu, &eu).unwrap().abs() < 1e-12);
        prop_assert!((d - delta_ref(&u, &v)).abs() < 1e-12);
        let (au, av): (Vec<f64>, Vec<f64>) = (u.iter().map(|x| x.abs()).collect(), v.iter().map(|x| x.abs()).collect());
        let ea = SentenceEmbedding::new(au, EmbeddingSource::Precomputed).unwrap();
        let eb = SentenceEmbedding::new(av, EmbeddingSource::Precomputed).unwrap();
        prop_assert!(delta(&ea, &eb).unwrap() <= 1.0 + 1e-12);
    }

    #[test]
    fn sdm_complements_match_exhaustive_search(captions in vec(sentence(5), 1..=8)) {
        let captions: Vec<Caption> = captions.into_iter().map(Caption::from_tokens).collect();
        let sdm = build_sdm("v", &captions, &SurrogateEmbedder).unwrap();
        for i in 0..sdm.n {
            prop_assert!(sdm.delta[i][i].abs() < 1e-12);
            for j in 0..sdm.n {
                prop_assert_eq!(sdm.delta[i][j], sdm.delta[j][i]);
            }
            prop_assert_eq!(sdm.complement[i], farthest_ref(&sdm.delta, i));
        }
    }

    #[test]
    fn centroid_is_the_entrywise_mean(dists in vec(distribution(5), 1..5)) {
        let refs: Vec<&[f64]> = dists.iter().map(|d| d.as_slice()).collect();
        let c = centroid_prob(&refs).unwrap();
        prop_assert!((c.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for k in 0..5 {
            let mean = dists.iter().map(|d| d[k]).sum::<f64>() / dists.len() as f64;
            prop_assert!((c[k] - mean).abs() < 1e-12);
        }
        let same = vec![dists[0].as_slice(); 3];
        for (a, b) in centroid_prob(&same).unwrap().iter().zip(&dists[0]) {
            prop_assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn metrics_are_bounded_and_order_invariant(records in vec(record(), 2..6), seed in any::<u64>()) {
        let b = bleu(&records, 4, BleuSmoothing::None).unwrap();
        let r = rouge_l(&records, 1.2).unwrap();
        prop_assert!((0.0..=1.0 + 1e-12).contains(&b));
        prop_assert!((0.0..=1.0 + 1e-12).contains(&r));
        let c = cider(&records, 4, 6.0).ok();
        if let Some(c) = c {
            prop_assert!((0.0..=10.0 + 1e-9).contains(&c));
        }

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut shuffled = records.clone();
        for i in (1..shuffled.len()).rev() {
            shuffled.swap(i, rng.random_range(0..=i));
        }
        for rec in &mut shuffled {
            rec.references.reverse();
        }
        prop_assert!((bleu(&shuffled, 4, BleuSmoothing::None).unwrap() - b).abs() < 1e-12);
        prop_assert!((rouge_l(&shuffled, 1.2).unwrap() - r).abs() < 1e-12);
        if let Some(c) = c {
            prop_assert!((cider(&shuffled, 4, 6.0).unwrap() - c).abs() < 1e-9);
        }
    }

    #[test]
    fn appending_a_reference_ngram_never_lowers_matches(rec in record(), order in 1usize..=4, pick in any::<prop::sample::Index>()) {
        let reference = &rec.references[0];
        prop_assume!(reference.len() >= order);
        let start = pick.index(reference.len() - order + 1);
        let mut longer = rec.candidate.clone();
        longer.extend_from_slice(&reference[start..start + order]);
        let before = modified_precision_counts(std::slice::from_ref(&rec), 4).unwrap();
        let after = modified_precision_counts(&[EvalRecord::new("v", longer, rec.references.clone())], 4).unwrap();
        for k in 0..4 {
            prop_assert!(after.matched[k] >= before.matched[k]);
        }
    }

    #[test]
    fn clipping_preserves_direction(g in vec(-10.0f64..10.0, 1..8), h in vec(-10.0f64..10.0, 1..8), max in 0.1f64..20.0) {
        let before = vec![Tensor::vector(g.clone()), Tensor::vector(h.clone())];
        let mut after = before.clone();
        let report = clip_gradients(&mut after, max).unwrap();
        let norm: f64 = before.iter().map(|t| t.squared_norm()).sum::<f64>().sqrt();
        prop_assert!((report.norm - norm).abs() < 1e-12);
        prop_assert!(report.scale >= 0.0 && report.scale <= 1.0);
        for (b, a) in before.iter().zip(&after) {
            for (x, y) in b.data().iter().zip(a.data()) {
                prop_assert!((y - report.scale * x).abs() < 1e-12);
            }
        }
        let post: f64 = after.iter().map(|t| t.squared_norm()).sum::<f64>().sqrt();
        prop_assert!(post <= max.max(norm.min(max)) + 1e-9);
    }

    #[test]
    fn loss_total_decomposes(seed in any::<u64>(), eta in 0.0f64..=1.0, lambda in 0.1f64..3.0) {
        let cfg = small_config();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let model = TaskSet::init(cfg, 2, &mut rng).unwrap();
        let frames: Vec<Vec<f64>> = (0..3).map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let cap = |rng: &mut ChaCha8Rng, n: usize| -> Vec<usize> {
            let mut c = vec![BOS];
            c.extend((0..n).map(|_| rng.random_range(RESERVED.len()..cfg.vocab_size)));
            c.push(EOS);
            c
        };
        let (x1, xc) = (cap(&mut rng, 2), cap(&mut rng, 3));
        let mut tape = Tape::new();
        let vars = model.bind(&mut tape, false);
        let nu = encode(&mut tape, &vars.encoder, &frames, &mut Dropout::disabled()).unwrap();
        let b = mtl_loss(&mut tape, &vars, &nu, &x1, &xc, eta, lambda, &mut Dropout::disabled()).unwrap().breakdown;
        prop_assert!(b.ce_reference >= 0.0 && b.ce_complement >= 0.0 && b.agreement >= 0.0);
        prop_assert!((b.total - lambda * (b.ce_reference + b.ce_complement + eta * b.agreement)).abs() < 1e-12);
    }

    #[test]
    fn attention_weights_are_a_permutation_equivariant_distribution(seed in any::<u64>(), t in 1usize..6) {
        let cfg = small_config();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let model = TaskSet::init(cfg, 2, &mut rng).unwrap();
        let ctx = cfg.context_dim();
        let steps: Vec<Vec<f64>> = (0..t).map(|_| (0..ctx).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
        let h: Vec<f64> = (0..cfg.dec_hidden).map(|_| rng.random_range(-1.0..1.0)).collect();
        let weights = |order: &[usize]| -> Vec<f64> {
            let mut tape = Tape::new();
            let vars = model.bind(&mut tape, false);
            let s: Vec<_> = order.iter().map(|&i| tape.constant(Tensor::vector(steps[i].clone()))).collect();
            let nu = EncodedVideo { steps: s.clone(), forward: s.clone(), backward: s.clone(), projected: s };
            let mem = AttentionMemory::new(&mut tape, &vars.decoders[0], &nu).unwrap();
            let hv = tape.constant(Tensor::vector(h.clone()));
            let att = attend(&mut tape, &vars.decoders[0], hv, &mem).unwrap();
            tape.value(att.weights).data().to_vec()
        };
        let order: Vec<usize> = (0..t).collect();
        let w = weights(&order);
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(w.iter().all(|&x| x >= 0.0));
        let rev: Vec<usize> = order.iter().rev().copied().collect();
        let wr = weights(&rev);
        for k in 0..t {
            prop_assert!((wr[k] - w[rev[k]]).abs() < 1e-12);
        }
    }
}
