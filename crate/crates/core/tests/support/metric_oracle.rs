//! Arbitrary-precision reference for posteriors and token metrics.

use dashu_float::FBig;

const BITS: usize = 128;

type Big = FBig;

fn big(x: f64) -> Big {
    Big::try_from(x).expect("finite").with_precision(BITS).value()
}

fn zero() -> Big {
    big(0.0)
}

fn to_f64(x: &Big) -> f64 {
    x.to_f64().value()
}

/// Softmax evaluated at 128 bits without max-shifting.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let exps: Vec<Big> = logits.iter().map(|&x| big(x).exp()).collect();
    let z = exps.iter().fold(zero(), |a, e| a + e);
    exps.iter().map(|e| to_f64(&(e / &z))).collect()
}

pub struct Reference {
    pub ppl: f64,
    pub entropy: f64,
    pub accuracy: f64,
    pub confidence: f64,
    pub mrr: f64,
}

/// Metrics of `posteriors` against `golds`: logs, sums and the final
/// exponential are taken at 128 bits; ranks come from a full sort.
pub fn metrics(posteriors: &[Vec<f64>], golds: &[u32]) -> Reference {
    let n = big(posteriors.len() as f64);
    let (mut nll, mut h, mut conf, mut rr) = (zero(), zero(), zero(), zero());
    let mut correct = 0usize;
    for (dist, &g) in posteriors.iter().zip(golds) {
        let g = g as usize;
        nll -= big(dist[g]).ln();
        for &p in dist.iter().filter(|&&p| p > 0.0) {
            let p = big(p);
            h -= &p * p.ln();
        }
        let mut order: Vec<usize> = (0..dist.len()).collect();
        // descending probability, ascending id among ties
        order.sort_by(|&a, &b| dist[b].total_cmp(&dist[a]).then(a.cmp(&b)));
        correct += usize::from(order[0] == g);
        conf += big(dist[order[0]]);
        let rank = 1 + dist.iter().filter(|&&p| p > dist[g]).count();
        rr += big(1.0) / big(rank as f64);
    }
    Reference {
        ppl: to_f64(&(nll / &n).exp()),
        entropy: to_f64(&(h / &n)),
        accuracy: correct as f64 / posteriors.len() as f64,
        confidence: to_f64(&(conf / &n)),
        mrr: to_f64(&(rr / &n)),
    }
}
