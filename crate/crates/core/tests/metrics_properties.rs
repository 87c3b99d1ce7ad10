mod support;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use slicelm::metrics::{approx_randomization_test, evaluate, pos_breakdown, token_eval, EvalReport};
use slicelm::neural::softmax;
use support::metric_oracle;

const TAGS: [&str; 6] = ["NOUN", "VERB", "ADJ", "DET", "PUNCT", "??"];

fn random_posteriors(seed: u64, n: usize, v: usize) -> (Vec<Vec<f64>>, Vec<u32>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let posts = (0..n)
        .map(|_| {
            let scale = rng.gen_range(0.1..6.0);
            let logits: Vec<f64> = (0..v).map(|_| rng.gen_range(-scale..scale)).collect();
            softmax(&logits).unwrap()
        })
        .collect();
    let golds = (0..n).map(|_| rng.gen_range(0..v as u32)).collect();
    (posts, golds)
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

#[test]
fn metrics_match_the_high_precision_reference() {
    let (posts, golds) = random_posteriors(7, 2_000, 8);
    let got = evaluate(&posts, &golds).unwrap();
    let want = metric_oracle::metrics(&posts, &golds);
    assert_eq!(got.tokens, 2_000);
    for (name, g, w) in [
        ("ppl", got.ppl, want.ppl),
        ("entropy", got.entropy, want.entropy),
        ("accuracy", got.accuracy, want.accuracy),
        ("confidence", got.confidence, want.confidence),
        ("mrr", got.mrr, want.mrr),
    ] {
        assert!(rel_close(g, w, 1e-10), "{name}: {g} vs {w}");
    }
}

#[test]
fn per_class_reports_equal_restricted_recomputation() {
    let (posts, golds) = random_posteriors(3, 600, 10);
    let tags: Vec<String> = (0..600).map(|k| ["NOUN", "VERB", "DET"][k % 3].to_string()).collect();
    let evals: Vec<_> = posts
        .iter()
        .zip(&golds)
        .map(|(d, &g)| token_eval(d, g).unwrap())
        .collect();
    let b = pos_breakdown(&evals, &tags).unwrap();
    assert_eq!(b.classes.len(), 3);
    for (class, tag) in [("noun", "NOUN"), ("verb", "VERB"), ("det", "DET")] {
        let (p, g): (Vec<_>, Vec<_>) = posts
            .iter()
            .zip(&golds)
            .zip(&tags)
            .filter(|(_, t)| *t == tag)
            .map(|((d, &g), _)| (d.clone(), g))
            .unzip();
        let want = metric_oracle::metrics(&p, &g);
        assert!(rel_close(b.classes[class].ppl, want.ppl, 1e-10));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn softmax_matches_the_high_precision_reference(logits in prop::collection::vec(-30.0f64..30.0, 1..40)) {
        let got = softmax(&logits).unwrap();
        for (g, w) in got.iter().zip(metric_oracle::softmax(&logits)) {
            prop_assert!((g - w).abs() <= 1e-12 * w.max(1e-300) || (g - w).abs() < 1e-18);
        }
    }

    #[test]
    fn perplexity_exponentiates_last(seed in any::<u64>(), n in 1usize..200) {
        let (posts, golds) = random_posteriors(seed, n, 8);
        let r = evaluate(&posts, &golds).unwrap();
        let per_token: f64 = posts.iter().zip(&golds).map(|(d, &g)| 1.0 / d[g as usize]).sum::<f64>() / n as f64;
        prop_assert!(r.ppl <= per_token * (1.0 + 1e-12));
    }

    #[test]
    fn perfect_accuracy_means_unit_mrr(seed in any::<u64>(), n in 1usize..100) {
        let (posts, _) = random_posteriors(seed, n, 8);
        let golds: Vec<u32> = posts
            .iter()
            .map(|d| {
                let top = (0..d.len()).fold(0, |b, i| if d[i] > d[b] { i } else { b });
                top as u32
            })
            .collect();
        let r = evaluate(&posts, &golds).unwrap();
        prop_assert_eq!(r.accuracy, 1.0);
        prop_assert_eq!(r.mrr, 1.0);
    }

    #[test]
    fn p_values_stay_in_range(
        a in prop::collection::vec(-5.0f64..5.0, 0..60),
        noise in any::<u64>(),
        rounds in 1usize..200,
        seed in any::<u64>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(noise);
        let b: Vec<f64> = a.iter().map(|x| x + rng.gen_range(-1.0..1.0)).collect();
        let p = approx_randomization_test(&a, &b, rounds, seed).unwrap();
        prop_assert!(p >= 1.0 / (rounds + 1) as f64 && p <= 1.0);
    }

    #[test]
    fn class_token_counts_sum_to_the_total(seed in any::<u64>(), n in 1usize..300) {
        let (posts, golds) = random_posteriors(seed, n, 6);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
        let tags: Vec<String> = (0..n).map(|_| TAGS[rng.gen_range(0..TAGS.len())].to_string()).collect();
        let evals: Vec<_> = posts.iter().zip(&golds).map(|(d, &g)| token_eval(d, g).unwrap()).collect();
        let b = pos_breakdown(&evals, &tags).unwrap();
        prop_assert_eq!(b.classes.values().map(|r: &EvalReport| r.tokens).sum::<usize>(), n);
        prop_assert_eq!(b.unknown_tags, tags.iter().filter(|t| *t == "??").count());
    }
}
