use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::EntitySpan;
use crate::error::{Error, Result};
use crate::eval::metrics::Prf;

/// Per-sentence `(tp, fp, fn)` of two systems against the same gold.
type PairCounts = [usize; 6];

fn counts(gold: &[EntitySpan], pred: &[EntitySpan]) -> [usize; 3] {
    let tp = pred.iter().filter(|s| gold.contains(s)).count();
    [tp, pred.len() - tp, gold.len() - tp]
}

fn delta(rows: &[PairCounts], picks: impl Iterator<Item = usize>) -> f64 {
    let mut sum = [0usize; 6];
    for i in picks {
        for (s, v) in sum.iter_mut().zip(rows[i]) {
            *s += v;
        }
    }
    Prf::from_counts(sum[0], sum[1], sum[2]).f1 - Prf::from_counts(sum[3], sum[4], sum[5]).f1
}

/// Paired bootstrap over sentences for `F1(a) - F1(b)`.
///
/// Each resample draws `n` sentence indices with replacement and recomputes
/// the delta; the one-sided p-value is the fraction of resamples whose
/// delta does not keep the observed sign (`<= 0` when the observed delta is
/// positive, `>= 0` when negative). An observed delta of exactly 0 gives
/// p = 1. Resample `r` uses its own stream of the `seed` generator, and
/// sentences are put in a canonical order first, so the result does not
/// depend on corpus order.
pub fn bootstrap_test(
    gold: &[Vec<EntitySpan>],
    pred_a: &[Vec<EntitySpan>],
    pred_b: &[Vec<EntitySpan>],
    resamples: usize,
    seed: u64,
) -> Result<f64> {
    if gold.len() != pred_a.len() || gold.len() != pred_b.len() {
        return Err(Error::contract("bootstrap needs aligned corpora"));
    }
    if resamples < 100 {
        return Err(Error::contract(format!("at least 100 resamples required, got {resamples}")));
    }
    let n = gold.len();
    let mut rows: Vec<PairCounts> = (0..n)
        .map(|i| {
            let [a0, a1, a2] = counts(&gold[i], &pred_a[i]);
            let [b0, b1, b2] = counts(&gold[i], &pred_b[i]);
            [a0, a1, a2, b0, b1, b2]
        })
        .collect();
    rows.sort_unstable();
    let observed = delta(&rows, 0..n);
    if observed == 0.0 || n == 0 {
        return Ok(1.0);
    }
    let mut reversed = 0usize;
    for r in 0..resamples {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(r as u64);
        let d = delta(&rows, (0..n).map(|_| rng.gen_range(0..n)));
        if (observed > 0.0 && d <= 0.0) || (observed < 0.0 && d >= 0.0) {
            reversed += 1;
        }
    }
    Ok(reversed as f64 / resamples as f64)
}
