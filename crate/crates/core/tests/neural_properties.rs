use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use slicelm::encode::{EmbeddingTable, SparseInput, WordSlot};
use slicelm::neural::{
    dev_split, ensemble_logits, quick_eval, softmax, train, EncodedCorpus, EncodedSentence, TrainConfig,
};

fn argmax(v: &[f64]) -> usize {
    v.iter().enumerate().fold(0, |b, (i, &x)| if x > v[b] { i } else { b })
}

/// Noisy copy task: label features point at the target, a word slot carries a
/// distractor token.
fn toy(seed: u64, v: u32, sentences: usize) -> (EncodedCorpus, EmbeddingTable) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = v as usize + 4;
    let emb = EmbeddingTable::new(v as usize, 4, (0..v * 4).map(|_| rng.gen_range(-1.0f32..1.0)).collect()).unwrap();
    let sentences = (0..sentences)
        .map(|k| {
            let targets: Vec<u32> = (0..6).map(|_| rng.gen_range(0..v)).collect();
            let inputs = targets
                .iter()
                .map(|&t| SparseInput {
                    entries: vec![(t, 1.0)],
                    words: vec![WordSlot {
                        offset: v,
                        tokens: vec![(rng.gen_range(0..v), 1.0)],
                    }],
                })
                .collect();
            EncodedSentence {
                id: format!("s{k}"),
                inputs,
                targets,
            }
        })
        .collect();
    (EncodedCorpus { dim, sentences }, emb)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn softmax_is_normalized_and_shift_invariant(
        logits in prop::collection::vec(-50.0f64..50.0, 1..64),
        shift in -1e3f64..1e3,
    ) {
        let p = softmax(&logits).unwrap();
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        prop_assert!(p.iter().all(|&x| (0.0..=1.0).contains(&x)));
        let shifted: Vec<f64> = logits.iter().map(|x| x + shift).collect();
        let q = softmax(&shifted).unwrap();
        for (a, b) in p.iter().zip(&q) {
            prop_assert!((a - b).abs() <= 1e-12 * a.max(*b).max(1e-300) || (a - b).abs() <= 1e-15);
        }
    }

    #[test]
    fn zero_head_keeps_the_base_prediction(base in prop::collection::vec(-20.0f64..20.0, 1..64)) {
        let zero = vec![0.0; base.len()];
        let ens = ensemble_logits(&zero, &base).unwrap();
        prop_assert_eq!(argmax(&ens), argmax(&base));
        prop_assert_eq!(argmax(&softmax(&ens).unwrap()), argmax(&base));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn kept_snapshot_is_the_best_dev_epoch(seed in any::<u64>()) {
        let (corpus, emb) = toy(seed, 10, 30);
        let cfg = TrainConfig { epochs: 6, lr: 3e-3, hidden: vec![16, 4], seed, ..Default::default() };
        let (params, log) = train(&corpus, &emb, None, &cfg).unwrap();
        let best = log.epochs.iter().map(|e| e.dev_ppl).fold(f64::INFINITY, f64::min);
        prop_assert_eq!(log.epochs[log.best_epoch - 1].dev_ppl, best);
        prop_assert!(log.epochs[..log.best_epoch - 1].iter().all(|e| e.dev_ppl > best));

        let n_dev = dev_split(corpus.sentences.len(), cfg.dev_fraction).unwrap();
        let dev = EncodedCorpus {
            dim: corpus.dim,
            sentences: corpus.sentences[corpus.sentences.len() - n_dev..].to_vec(),
        };
        let (ppl, _) = quick_eval(Some(&params), &dev, None).unwrap();
        prop_assert_eq!(ppl, best);
    }

    #[test]
    fn training_loss_falls_on_a_learnable_task(seed in any::<u64>()) {
        let (corpus, emb) = toy(seed, 10, 30);
        let cfg = TrainConfig { epochs: 5, lr: 1e-2, hidden: vec![16, 4], dropout: 0.0, seed, ..Default::default() };
        let (_, log) = train(&corpus, &emb, None, &cfg).unwrap();
        prop_assert!(log.epochs.last().unwrap().train_loss < log.epochs[0].train_loss);
    }
}
