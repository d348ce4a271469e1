//! Linear-chain CRF over `L` labels with virtual START (`L`) and STOP
//! (`L + 1`) states.
//!
//! ```text
//! score(y) = T[START, y_0] + Σ_t T[y_t, y_{t+1}] + T[y_{n-1}, STOP] + Σ_t E[t, y_t]
//! ```

use rand::Rng;

use crate::autodiff::{ParamId, ParamStore, Tape, Var};
use crate::data::scheme::{split_tag, Prefix};
use crate::data::LabelScheme;
use crate::error::{Error, Result};
use crate::init::{glorot, zeros_row};

/// Largest `L^n` that [`brute_force`] will enumerate.
pub const BRUTE_FORCE_LIMIT: u64 = 1_000_000;

/// Per-position emission scores, `n x L`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct TagLattice {
    n: usize,
    labels: usize,
    emissions: Vec<f64>,
}

impl TagLattice {
    pub fn new(n: usize, labels: usize, emissions: Vec<f64>) -> Result<Self> {
        if n == 0 || labels == 0 {
            return Err(Error::contract("a lattice needs at least one position and one label"));
        }
        if emissions.len() != n * labels {
            return Err(Error::dim("lattice", &[n, labels], &[emissions.len()]));
        }
        if let Some(bad) = emissions.iter().position(|v| !v.is_finite()) {
            return Err(Error::contract(format!(
                "non-finite emission at position {} label {}",
                bad / labels,
                bad % labels
            )));
        }
        Ok(Self { n, labels, emissions })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let labels = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != labels) {
            return Err(Error::contract("ragged emission rows"));
        }
        Self::new(rows.len(), labels, rows.concat())
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn labels(&self) -> usize {
        self.labels
    }

    pub fn emission(&self, t: usize, y: usize) -> f64 {
        self.emissions[t * self.labels + y]
    }

    pub fn emissions(&self) -> &[f64] {
        &self.emissions
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.emissions[t * self.labels..(t + 1) * self.labels]
    }

    /// Adds `k` to every emission at position `t`.
    pub fn shift_row(&mut self, t: usize, k: f64) {
        let l = self.labels;
        self.emissions[t * l..(t + 1) * l].iter_mut().for_each(|v| *v += k);
    }
}

/// Transition scores, `(L+2) x (L+2)` row-major (`from` major).
///
/// Scores are stored finite; moves into START, out of STOP, and moves
/// disallowed by an optional constraint mask read as `-inf` through
/// [`Transitions::get`].
#[derive(Debug, Clone, PartialEq)]
pub struct Transitions {
    labels: usize,
    scores: Vec<f64>,
    allowed: Option<Vec<bool>>,
}

impl Transitions {
    pub fn new(labels: usize, scores: Vec<f64>) -> Result<Self> {
        let k = labels + 2;
        if scores.len() != k * k {
            return Err(Error::dim("transitions", &[k, k], &[scores.len()]));
        }
        Ok(Self { labels, scores, allowed: None })
    }

    pub fn zeros(labels: usize) -> Self {
        let k = labels + 2;
        Self { labels, scores: vec![0.0; k * k], allowed: None }
    }

    /// Restricts moves to those marked `true` in `mask` (same layout as the
    /// scores).
    pub fn with_allowed(mut self, mask: Vec<bool>) -> Result<Self> {
        if mask.len() != self.scores.len() {
            return Err(Error::dim("transition mask", &[self.scores.len()], &[mask.len()]));
        }
        self.allowed = Some(mask);
        Ok(self)
    }

    pub fn labels(&self) -> usize {
        self.labels
    }

    pub fn start(&self) -> usize {
        self.labels
    }

    pub fn stop(&self) -> usize {
        self.labels + 1
    }

    pub fn raw(&self) -> &[f64] {
        &self.scores
    }

    pub fn set(&mut self, from: usize, to: usize, value: f64) {
        let k = self.labels + 2;
        self.scores[from * k + to] = value;
    }

    /// Effective score of the move `from -> to`.
    pub fn get(&self, from: usize, to: usize) -> f64 {
        let k = self.labels + 2;
        let idx = from * k + to;
        if to == self.start() || from == self.stop() {
            return f64::NEG_INFINITY;
        }
        match &self.allowed {
            Some(mask) if !mask[idx] => f64::NEG_INFINITY,
            _ => self.scores[idx],
        }
    }

    fn check(&self, lattice: &TagLattice) -> Result<()> {
        if lattice.labels != self.labels {
            return Err(Error::dim("crf", &[lattice.labels], &[self.labels]));
        }
        Ok(())
    }
}

/// Allowed-move mask for a label inventory under `scheme`: entity-internal
/// tags may only continue an entity of the same type.
pub fn scheme_constraints<S: AsRef<str>>(labels: &[S], scheme: LabelScheme) -> Result<Vec<bool>> {
    let l = labels.len();
    let k = l + 2;
    let (start, stop) = (l, l + 1);
    let parsed = labels
        .iter()
        .enumerate()
        .map(|(i, s)| split_tag(s.as_ref()).ok_or_else(|| Error::Scheme { index: i, message: format!("bad label {:?}", s.as_ref()) }))
        .collect::<Result<Vec<_>>>()?;
    let opens_inside = |p: Prefix| matches!(p, Prefix::B | Prefix::I);
    let continues = |p: Prefix| match scheme {
        LabelScheme::Bio => p == Prefix::I,
        LabelScheme::Bioes => matches!(p, Prefix::I | Prefix::E),
    };
    let mut mask = vec![false; k * k];
    for from in 0..k {
        for to in 0..k {
            if to == start || from == stop {
                continue;
            }
            let prev = (from < l).then(|| parsed[from]);
            let next = (to < l).then(|| parsed[to]);
            let inside_before = match (scheme, prev) {
                (LabelScheme::Bioes, Some((p, _))) => opens_inside(p),
                _ => false,
            };
            let ok = match next {
                None => !inside_before,
                Some((np, nk)) if continues(np) => match prev {
                    Some((pp, pk)) => {
                        let can_precede = match scheme {
                            LabelScheme::Bio => matches!(pp, Prefix::B | Prefix::I),
                            LabelScheme::Bioes => opens_inside(pp),
                        };
                        can_precede && pk == nk
                    }
                    None => false,
                },
                Some(_) => !inside_before,
            };
            mask[from * k + to] = ok;
        }
    }
    Ok(mask)
}

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Score of the label sequence `y`.
pub fn score_sequence(lattice: &TagLattice, tr: &Transitions, y: &[usize]) -> Result<f64> {
    tr.check(lattice)?;
    if y.len() != lattice.n {
        return Err(Error::contract(format!("label sequence of length {} for a lattice of {}", y.len(), lattice.n)));
    }
    if let Some(&bad) = y.iter().find(|&&l| l >= lattice.labels) {
        return Err(Error::contract(format!("label id {bad} out of range for {} labels", lattice.labels)));
    }
    let mut score = tr.get(tr.start(), y[0]);
    for t in 0..y.len() {
        score += lattice.emission(t, y[t]);
        let next = y.get(t + 1).copied().unwrap_or(tr.stop());
        score += tr.get(y[t], next);
    }
    Ok(score)
}

fn forward(lattice: &TagLattice, tr: &Transitions) -> Vec<Vec<f64>> {
    let l = lattice.labels;
    let mut alpha = Vec::with_capacity(lattice.n);
    alpha.push((0..l).map(|y| tr.get(tr.start(), y) + lattice.emission(0, y)).collect::<Vec<_>>());
    for t in 1..lattice.n {
        let prev = &alpha[t - 1];
        let row = (0..l)
            .map(|y| log_sum_exp((0..l).map(|p| prev[p] + tr.get(p, y))) + lattice.emission(t, y))
            .collect();
        alpha.push(row);
    }
    alpha
}

fn backward(lattice: &TagLattice, tr: &Transitions) -> Vec<Vec<f64>> {
    let (n, l) = (lattice.n, lattice.labels);
    let mut beta = vec![Vec::new(); n];
    beta[n - 1] = (0..l).map(|y| tr.get(y, tr.stop())).collect();
    for t in (0..n - 1).rev() {
        let next = &beta[t + 1];
        beta[t] = (0..l)
            .map(|y| log_sum_exp((0..l).map(|q| tr.get(y, q) + lattice.emission(t + 1, q) + next[q])))
            .collect();
    }
    beta
}

/// `log Σ_y exp(score(y))` by the forward algorithm.
pub fn log_partition(lattice: &TagLattice, tr: &Transitions) -> Result<f64> {
    tr.check(lattice)?;
    let alpha = forward(lattice, tr);
    let last = &alpha[lattice.n - 1];
    Ok(log_sum_exp((0..lattice.labels).map(|y| last[y] + tr.get(y, tr.stop()))))
}

/// Posterior quantities of a lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct Marginals {
    pub log_z: f64,
    /// `P(y_t = y)`, `n x L` row-major.
    pub unary: Vec<f64>,
    /// Expected number of times each transition is taken, laid out like
    /// [`Transitions::raw`].
    pub transitions: Vec<f64>,
}

/// Forward-backward marginals. Fails when no label sequence is admissible.
pub fn marginals(lattice: &TagLattice, tr: &Transitions) -> Result<Marginals> {
    tr.check(lattice)?;
    let (n, l) = (lattice.n, lattice.labels);
    let k = l + 2;
    let alpha = forward(lattice, tr);
    let beta = backward(lattice, tr);
    let log_z = log_sum_exp((0..l).map(|y| alpha[n - 1][y] + tr.get(y, tr.stop())));
    if !log_z.is_finite() {
        return Err(Error::contract("no admissible label sequence"));
    }
    let mut unary = vec![0.0; n * l];
    for t in 0..n {
        for y in 0..l {
            unary[t * l + y] = (alpha[t][y] + beta[t][y] - log_z).exp();
        }
    }
    let mut pair = vec![0.0; k * k];
    for y in 0..l {
        pair[tr.start() * k + y] = unary[y];
        pair[y * k + tr.stop()] = unary[(n - 1) * l + y];
    }
    for t in 0..n - 1 {
        for a in 0..l {
            for b in 0..l {
                let lp = alpha[t][a] + tr.get(a, b) + lattice.emission(t + 1, b) + beta[t + 1][b] - log_z;
                pair[a * k + b] += lp.exp();
            }
        }
    }
    Ok(Marginals { log_z, unary, transitions: pair })
}

/// `log_partition - score_sequence(gold)`, i.e. `-log P(gold)`.
pub fn nll(lattice: &TagLattice, tr: &Transitions, gold: &[usize]) -> Result<f64> {
    let score = score_sequence(lattice, tr, gold)?;
    let log_z = log_partition(lattice, tr)?;
    // Rounding can push a near-certain gold a hair below zero.
    Ok((log_z - score).max(0.0))
}

/// Highest-scoring sequence and its score. Among equal-scoring sequences
/// the lexicographically smallest wins.
pub fn viterbi(lattice: &TagLattice, tr: &Transitions) -> Result<(Vec<usize>, f64)> {
    tr.check(lattice)?;
    let (n, l) = (lattice.n, lattice.labels);
    // Best suffix score from (t, y) to STOP; decoding then runs left to
    // right picking the lowest id among maximisers.
    let mut suffix = vec![Vec::new(); n];
    suffix[n - 1] = (0..l).map(|y| tr.get(y, tr.stop())).collect::<Vec<_>>();
    for t in (0..n - 1).rev() {
        let next = &suffix[t + 1];
        suffix[t] = (0..l)
            .map(|y| {
                (0..l)
                    .map(|q| tr.get(y, q) + lattice.emission(t + 1, q) + next[q])
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .collect();
    }
    let pick = |cands: Vec<f64>| -> (usize, f64) {
        let mut best = (0, f64::NEG_INFINITY);
        for (y, v) in cands.into_iter().enumerate() {
            if v > best.1 {
                best = (y, v);
            }
        }
        best
    };
    let (first, best_score) = pick((0..l).map(|y| tr.get(tr.start(), y) + lattice.emission(0, y) + suffix[0][y]).collect());
    if best_score == f64::NEG_INFINITY {
        return Err(Error::contract("no admissible label sequence"));
    }
    let mut path = vec![first];
    for t in 1..n {
        let prev = path[t - 1];
        let (y, _) = pick((0..l).map(|q| tr.get(prev, q) + lattice.emission(t, q) + suffix[t][q]).collect());
        path.push(y);
    }
    Ok((path, best_score))
}

/// Calls `visit` with every label sequence and its score, in lexicographic
/// order. Subject to the same size guard as [`brute_force`].
pub fn for_each_sequence(lattice: &TagLattice, tr: &Transitions, mut visit: impl FnMut(&[usize], f64)) -> Result<()> {
    tr.check(lattice)?;
    let (n, l) = (lattice.n, lattice.labels);
    let total = u32::try_from(n).ok().and_then(|e| (l as u64).checked_pow(e));
    if total.is_none_or(|t| t > BRUTE_FORCE_LIMIT) {
        return Err(Error::contract(format!("{l}^{n} sequences exceed the enumeration limit of {BRUTE_FORCE_LIMIT}")));
    }
    let mut y = vec![0usize; n];
    loop {
        visit(&y, score_sequence(lattice, tr, &y)?);
        let mut pos = n;
        loop {
            if pos == 0 {
                return Ok(());
            }
            pos -= 1;
            y[pos] += 1;
            if y[pos] < l {
                break;
            }
            y[pos] = 0;
        }
    }
}

/// Exhaustive-enumeration answer for a lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct BruteForce {
    pub log_z: f64,
    pub best: Vec<usize>,
    pub best_score: f64,
}

/// Enumerates all `L^n` sequences; refuses when `L^n > 10^6`.
pub fn brute_force(lattice: &TagLattice, tr: &Transitions) -> Result<BruteForce> {
    let mut scores = Vec::new();
    let mut best = (Vec::new(), f64::NEG_INFINITY);
    for_each_sequence(lattice, tr, |y, s| {
        scores.push(s);
        if s > best.1 {
            best = (y.to_vec(), s);
        }
    })?;
    Ok(BruteForce {
        log_z: log_sum_exp(scores.iter().copied()),
        best: best.0,
        best_score: best.1,
    })
}

/// Learnable CRF layer: transitions plus the `hidden -> L` emission map.
#[derive(Debug, Clone, PartialEq)]
pub struct CrfParams {
    pub transitions: ParamId,
    pub weight: ParamId,
    pub bias: ParamId,
    pub labels: usize,
    pub input_dim: usize,
    /// Constraint mask, when scheme-constrained decoding is on.
    pub allowed: Option<Vec<bool>>,
}

impl CrfParams {
    /// Transitions start at zero, the emission map Glorot-uniform.
    pub fn register<R: Rng>(store: &mut ParamStore, prefix: &str, input_dim: usize, labels: usize, rng: &mut R) -> Result<Self> {
        let k = labels + 2;
        let transitions = store.insert(format!("{prefix}.transitions"), crate::autodiff::Tensor::zeros(&[k, k]))?;
        let weight = store.insert(format!("{prefix}.weight"), glorot(rng, input_dim, labels))?;
        let bias = store.insert(format!("{prefix}.bias"), zeros_row(labels))?;
        Ok(Self { transitions, weight, bias, labels, input_dim, allowed: None })
    }

    /// Emission scores `hidden · W + b` for `hidden` of shape `n x input_dim`.
    pub fn emissions(&self, tape: &mut Tape, hidden: Var) -> Result<Var> {
        let w = tape.param(self.weight);
        let b = tape.param(self.bias);
        let projected = tape.matmul(hidden, w)?;
        tape.add_row(projected, b)
    }

    pub fn transition_scores(&self, store: &ParamStore) -> Result<Transitions> {
        let tr = Transitions::new(self.labels, store.get(self.transitions).data().to_vec())?;
        match &self.allowed {
            Some(mask) => tr.with_allowed(mask.clone()),
            None => Ok(tr),
        }
    }

    /// Sentence NLL recorded on the tape; see [`nll_on_tape`].
    pub fn nll(&self, tape: &mut Tape, emissions: Var, gold: &[usize]) -> Result<Var> {
        let t = tape.param(self.transitions);
        nll_on_tape(tape, emissions, t, self.labels, self.allowed.as_deref(), gold)
    }
}

/// NLL as a tape node over `emissions` (`n x L`) and `transitions`
/// (`(L+2) x (L+2)`). The backward pass uses forward-backward marginals:
/// `dE = P(y_t) - [gold_t]`, `dT = E[count] - gold count`.
pub fn nll_on_tape(
    tape: &mut Tape,
    emissions: Var,
    transitions: Var,
    labels: usize,
    allowed: Option<&[bool]>,
    gold: &[usize],
) -> Result<Var> {
    let (n, l) = tape.shape(emissions);
    if l != labels {
        return Err(Error::dim("crf_nll", &[n, l], &[labels]));
    }
    let finite = tape.value(emissions).iter().chain(tape.value(transitions)).all(|v| v.is_finite());
    if !finite {
        // Diverged parameters: report a NaN loss and let the caller abort.
        let backward = Box::new(move |_: &[f64]| vec![None, None]);
        return tape.custom(&[emissions, transitions], 1, 1, vec![f64::NAN], backward);
    }
    let lattice = TagLattice::new(n, l, tape.value(emissions).to_vec())?;
    let mut tr = Transitions::new(labels, tape.value(transitions).to_vec())?;
    if let Some(mask) = allowed {
        tr = tr.with_allowed(mask.to_vec())?;
    }
    let score = score_sequence(&lattice, &tr, gold)?;
    let m = marginals(&lattice, &tr)?;
    let loss = (m.log_z - score).max(0.0);
    if !loss.is_finite() {
        return Err(Error::contract("gold sequence is inadmissible under the transition mask"));
    }
    let k = l + 2;
    let mut d_e = m.unary;
    let mut d_t = m.transitions;
    for (t, &y) in gold.iter().enumerate() {
        d_e[t * l + y] -= 1.0;
        let prev = if t == 0 { l } else { gold[t - 1] };
        d_t[prev * k + y] -= 1.0;
    }
    d_t[gold[n - 1] * k + l + 1] -= 1.0;
    let backward = Box::new(move |g: &[f64]| {
        let s = g[0];
        vec![
            Some(d_e.iter().map(|v| v * s).collect()),
            Some(d_t.iter().map(|v| v * s).collect()),
        ]
    });
    tape.custom(&[emissions, transitions], 1, 1, vec![loss], backward)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tensor;
    use crate::gradcheck::{central_difference, relative_error};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_instance(rng: &mut ChaCha8Rng, n: usize, l: usize) -> (TagLattice, Transitions) {
        let e = (0..n * l).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let k = l + 2;
        let t = (0..k * k).map(|_| rng.gen_range(-2.0..2.0)).collect();
        (TagLattice::new(n, l, e).unwrap(), Transitions::new(l, t).unwrap())
    }

    /// Score by direct summation over the boundary-extended sequence.
    fn scalar_score(lat: &TagLattice, tr: &Transitions, y: &[usize]) -> f64 {
        let l = lat.labels();
        let k = l + 2;
        let mut ext = vec![l];
        ext.extend_from_slice(y);
        ext.push(l + 1);
        let mut s = 0.0;
        for w in ext.windows(2) {
            s += tr.raw()[w[0] * k + w[1]];
        }
        for (t, &lab) in y.iter().enumerate() {
            s += lat.emissions()[t * l + lab];
        }
        s
    }

    #[test]
    fn score_examples() {
        let lat = TagLattice::from_rows(&[vec![2.0, 5.0]]).unwrap();
        assert_eq!(score_sequence(&lat, &Transitions::zeros(2), &[1]).unwrap(), 5.0);
        let lat = TagLattice::from_rows(&[vec![1.0, 0.0], vec![0.0, 3.0]]).unwrap();
        assert_eq!(score_sequence(&lat, &Transitions::zeros(2), &[0, 1]).unwrap(), 4.0);
        assert!(score_sequence(&lat, &Transitions::zeros(2), &[0, 2]).is_err());
        assert!(score_sequence(&lat, &Transitions::zeros(2), &[0]).is_err());

        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (lat, tr) = random_instance(&mut rng, 4, 3);
        for _ in 0..20 {
            let y: Vec<usize> = (0..4).map(|_| rng.gen_range(0..3)).collect();
            let got = score_sequence(&lat, &tr, &y).unwrap();
            assert!((got - scalar_score(&lat, &tr, &y)).abs() < 1e-12);
        }
    }

    #[test]
    fn partition_examples() {
        let lat = TagLattice::from_rows(&[vec![0.0, 0.0]]).unwrap();
        let z = log_partition(&lat, &Transitions::zeros(2)).unwrap();
        assert!((z - 2f64.ln()).abs() < 1e-15);
        let (a, b) = (1.3_f64, -0.4_f64);
        let lat = TagLattice::from_rows(&[vec![a, b]]).unwrap();
        let z = log_partition(&lat, &Transitions::zeros(2)).unwrap();
        assert!((z - (a.exp() + b.exp()).ln()).abs() < 1e-14);
        let bf = brute_force(&lat, &Transitions::zeros(2)).unwrap();
        assert!((bf.log_z - z).abs() < 1e-14);
        assert_eq!(bf.best, vec![0]);
    }

    #[test]
    fn enumeration_oracle_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let n = rng.gen_range(1..=6);
            let l = rng.gen_range(1..=5);
            let (lat, tr) = random_instance(&mut rng, n, l);
            let bf = brute_force(&lat, &tr).unwrap();
            let z = log_partition(&lat, &tr).unwrap();
            assert!((z - bf.log_z).abs() < 1e-8, "{z} vs {}", bf.log_z);
            let (path, score) = viterbi(&lat, &tr).unwrap();
            assert_eq!(path, bf.best);
            assert!((score - bf.best_score).abs() < 1e-9);

            let gold: Vec<usize> = (0..n).map(|_| rng.gen_range(0..l)).collect();
            let loss = nll(&lat, &tr, &gold).unwrap();
            assert!(loss >= 0.0);
            let p_gold = (scalar_score(&lat, &tr, &gold) - bf.log_z).exp();
            assert!(((-loss).exp() - p_gold).abs() < 1e-9);

            let mut total = 0.0;
            for_each_sequence(&lat, &tr, |_, s| total += (s - z).exp()).unwrap();
            assert!((total - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn single_label_and_dominant_gold() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (lat, tr) = random_instance(&mut rng, 5, 1);
        assert!(nll(&lat, &tr, &[0; 5]).unwrap().abs() < 1e-12);
        assert_eq!(viterbi(&lat, &tr).unwrap().0, vec![0; 5]);

        let gold = [2, 0, 1, 1];
        let rows: Vec<Vec<f64>> = gold
            .iter()
            .map(|&g| (0..3).map(|y| if y == g { 50.0 } else { 0.0 }).collect())
            .collect();
        let lat = TagLattice::from_rows(&rows).unwrap();
        let loss = nll(&lat, &Transitions::zeros(3), &gold).unwrap();
        assert!(loss < 1e-12, "{loss}");
    }

    #[test]
    fn viterbi_without_transitions_is_rowwise_argmax_with_low_ties() {
        let lat = TagLattice::from_rows(&[vec![1.0, 3.0, 3.0], vec![2.0, 2.0, 0.0], vec![0.0, -1.0, 5.0]]).unwrap();
        let (path, score) = viterbi(&lat, &Transitions::zeros(3)).unwrap();
        assert_eq!(path, vec![1, 0, 2]);
        assert_eq!(score, 10.0);
        // an all-tied lattice decodes to all zeros
        let lat = TagLattice::new(4, 3, vec![0.5; 12]).unwrap();
        assert_eq!(viterbi(&lat, &Transitions::zeros(3)).unwrap().0, vec![0; 4]);
        assert_eq!(brute_force(&lat, &Transitions::zeros(3)).unwrap().best, vec![0; 4]);
    }

    #[test]
    fn brute_force_size_guard() {
        let lat = TagLattice::new(9, 5, vec![0.0; 45]).unwrap();
        assert!(brute_force(&lat, &Transitions::zeros(5)).is_err());
        let lat = TagLattice::new(19, 2, vec![0.0; 38]).unwrap();
        assert!(brute_force(&lat, &Transitions::zeros(2)).is_ok());
        let lat = TagLattice::new(20, 2, vec![0.0; 40]).unwrap();
        assert!(brute_force(&lat, &Transitions::zeros(2)).is_err());
    }

    #[test]
    fn boundary_moves_are_never_taken() {
        let mut tr = Transitions::zeros(2);
        tr.set(2, 2, 1e6);
        tr.set(3, 0, 1e6);
        tr.set(0, 2, 1e6);
        let lat = TagLattice::new(3, 2, vec![0.0; 6]).unwrap();
        let z = log_partition(&lat, &tr).unwrap();
        assert!((z - 8f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn lattice_rejects_bad_input() {
        assert!(TagLattice::new(0, 2, vec![]).is_err());
        assert!(TagLattice::new(1, 2, vec![0.0]).is_err());
        assert!(TagLattice::new(1, 2, vec![0.0, f64::NAN]).is_err());
        let lat = TagLattice::new(1, 2, vec![0.0, 0.0]).unwrap();
        assert!(log_partition(&lat, &Transitions::zeros(3)).is_err());
    }

    #[test]
    fn constraint_mask_bioes() {
        let labels = ["O", "B-X", "I-X", "E-X", "S-X", "B-Y", "I-Y", "E-Y", "S-Y"];
        let mask = scheme_constraints(&labels, LabelScheme::Bioes).unwrap();
        let k = labels.len() + 2;
        let id = |s: &str| labels.iter().position(|l| *l == s).unwrap();
        let ok = |a: usize, b: usize| mask[a * k + b];
        let (start, stop) = (labels.len(), labels.len() + 1);
        assert!(!ok(id("O"), id("I-X")));
        assert!(!ok(id("O"), id("E-X")));
        assert!(ok(id("B-X"), id("I-X")));
        assert!(ok(id("B-X"), id("E-X")));
        assert!(!ok(id("B-X"), id("E-Y")));
        assert!(!ok(id("B-X"), id("O")));
        assert!(!ok(id("B-X"), stop));
        assert!(ok(id("E-X"), id("B-Y")));
        assert!(ok(id("S-X"), stop));
        assert!(!ok(start, id("I-X")));
        assert!(ok(start, id("S-Y")));

        // every admissible decode is well formed
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..30 {
            let (lat, tr) = random_instance(&mut rng, 5, labels.len());
            let tr = tr.with_allowed(mask.clone()).unwrap();
            let (path, _) = viterbi(&lat, &tr).unwrap();
            let tags: Vec<&str> = path.iter().map(|&p| labels[p]).collect();
            assert!(crate::data::parse_spans(&tags, LabelScheme::Bioes).is_ok(), "{tags:?}");
        }

        let bio = ["O", "B-X", "I-X"];
        let mask = scheme_constraints(&bio, LabelScheme::Bio).unwrap();
        let k = 5;
        assert!(!mask[0 * k + 2]);
        assert!(mask[1 * k + 2] && mask[2 * k + 2] && mask[2 * k + 4]);
        assert!(!mask[3 * k + 2]);
    }

    #[test]
    fn tape_nll_matches_function_and_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (n, l) = (4, 3);
        let (lat, tr) = random_instance(&mut rng, n, l);
        let gold = [1, 0, 2, 2];
        let e = Tensor::matrix(n, l, lat.emissions().to_vec()).unwrap().with_requires_grad(true);
        let t = Tensor::matrix(l + 2, l + 2, tr.raw().to_vec()).unwrap().with_requires_grad(true);
        let mut tape = Tape::new();
        let (ev, tv) = (tape.leaf(&e), tape.leaf(&t));
        let loss = nll_on_tape(&mut tape, ev, tv, l, None, &gold).unwrap();
        assert!((tape.scalar(loss) - nll(&lat, &tr, &gold).unwrap()).abs() < 1e-12);
        tape.backward(loss).unwrap();
        let de = tape.grad(ev).unwrap().to_vec();
        let dt = tape.grad(tv).unwrap().to_vec();
        for i in 0..n * l {
            let fd = central_difference(
                |v| {
                    let mut em = lat.emissions().to_vec();
                    em[i] += v;
                    nll(&TagLattice::new(n, l, em).unwrap(), &tr, &gold).unwrap()
                },
                1e-5,
            );
            assert!(relative_error(de[i], fd) < 1e-6);
        }
        let k = l + 2;
        for i in 0..k * k {
            let fd = central_difference(
                |v| {
                    let mut raw = tr.raw().to_vec();
                    raw[i] += v;
                    nll(&lat, &Transitions::new(l, raw).unwrap(), &gold).unwrap()
                },
                1e-5,
            );
            assert!(relative_error(dt[i], fd) < 1e-6, "{i}: {} vs {fd}", dt[i]);
            if i % k == l || i / k == l + 1 {
                assert_eq!(dt[i], 0.0);
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn shift_invariance(seed in any::<u64>(), n in 1usize..6, l in 1usize..5, k in -5.0f64..5.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (lat, tr) = random_instance(&mut rng, n, l);
            let t = rng.gen_range(0..n);
            let mut shifted = lat.clone();
            shifted.shift_row(t, k);
            let z0 = log_partition(&lat, &tr).unwrap();
            let z1 = log_partition(&shifted, &tr).unwrap();
            prop_assert!((z1 - z0 - k).abs() < 1e-9);
            prop_assert_eq!(viterbi(&lat, &tr).unwrap().0, viterbi(&shifted, &tr).unwrap().0);
        }

        #[test]
        fn partition_gradient_is_brute_force_marginal(seed in any::<u64>(), n in 1usize..5, l in 1usize..4) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (lat, tr) = random_instance(&mut rng, n, l);
            let m = marginals(&lat, &tr).unwrap();
            let mut brute = vec![0.0; n * l];
            for_each_sequence(&lat, &tr, |y, s| {
                let p = (s - m.log_z).exp();
                for (t, &lab) in y.iter().enumerate() {
                    brute[t * l + lab] += p;
                }
            }).unwrap();
            for i in 0..n * l {
                prop_assert!((m.unary[i] - brute[i]).abs() < 1e-6);
            }
        }

        #[test]
        fn nll_is_non_negative(seed in any::<u64>(), n in 1usize..8, l in 1usize..6) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (lat, tr) = random_instance(&mut rng, n, l);
            let gold: Vec<usize> = (0..n).map(|_| rng.gen_range(0..l)).collect();
            prop_assert!(nll(&lat, &tr, &gold).unwrap() >= 0.0);
        }
    }
}
