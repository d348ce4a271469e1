//! Token representations: `x_t = [v_t; e_t; r_t; p_t]` for the recurrent
//! layer and `g0_t = [v_t; e_t; r_t]` for the graph encoder.

use rand::Rng;

use crate::autodiff::{Axis, ParamId, ParamStore, Tape, Tensor, Var};
use crate::cell::{run_masked, LstmParams};
use crate::data::{init_row, Sentence, Vocabulary, PAD};
use crate::error::{Error, Result};

/// Embedding sizes and which optional blocks are present.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EmbedDims {
    pub word: usize,
    pub char: usize,
    pub char_hidden: usize,
    pub deprel: usize,
    pub pos: usize,
    pub use_deprel: bool,
    pub use_pos: bool,
}

impl Default for EmbedDims {
    fn default() -> Self {
        Self { word: 100, char: 30, char_hidden: 50, deprel: 50, pos: 50, use_deprel: true, use_pos: true }
    }
}

impl EmbedDims {
    pub fn char_out(&self) -> usize {
        2 * self.char_hidden
    }

    pub fn g0_dim(&self) -> usize {
        self.word + self.char_out() + if self.use_deprel { self.deprel } else { 0 }
    }

    pub fn x_dim(&self) -> usize {
        self.g0_dim() + if self.use_pos { self.pos } else { 0 }
    }
}

/// Lookup tables plus the character BiLSTM.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTables {
    pub word: ParamId,
    pub char: ParamId,
    pub deprel: Option<ParamId>,
    pub pos: Option<ParamId>,
    pub char_fwd: LstmParams,
    pub char_bwd: LstmParams,
    pub dims: EmbedDims,
}

/// `rows x dim` table with uniform rows and a zero PAD row.
pub fn random_table<R: Rng>(rng: &mut R, rows: usize, dim: usize) -> Tensor {
    let mut data = Vec::with_capacity(rows * dim);
    for r in 0..rows {
        if r == PAD {
            data.extend(std::iter::repeat_n(0.0, dim));
        } else {
            data.extend(init_row(rng, dim));
        }
    }
    Tensor::matrix(rows, dim, data).expect("shape matches data")
}

impl EmbeddingTables {
    /// Registers all tables sized for `vocab`. When `words` is given it
    /// replaces the random word table (its column count must match).
    pub fn register<R: Rng>(
        store: &mut ParamStore,
        vocab: &Vocabulary,
        dims: EmbedDims,
        words: Option<Tensor>,
        rng: &mut R,
    ) -> Result<Self> {
        let word_table = match words {
            Some(t) => {
                if t.dims2() != (vocab.words.len(), dims.word) {
                    let (r, c) = t.dims2();
                    return Err(Error::dim("word_embeddings", &[r, c], &[vocab.words.len(), dims.word]));
                }
                t
            }
            None => random_table(rng, vocab.words.len(), dims.word),
        };
        let word = store.insert("embed.word", word_table)?;
        let char = store.insert("embed.char", random_table(rng, vocab.chars.len(), dims.char))?;
        let deprel = match dims.use_deprel {
            true => Some(store.insert("embed.deprel", random_table(rng, vocab.deprels.len(), dims.deprel))?),
            false => None,
        };
        let pos = match dims.use_pos {
            true => Some(store.insert("embed.pos", random_table(rng, vocab.pos.len(), dims.pos))?),
            false => None,
        };
        let char_fwd = LstmParams::register(store, "embed.char_lstm.fwd", dims.char, dims.char_hidden, rng)?;
        let char_bwd = LstmParams::register(store, "embed.char_lstm.bwd", dims.char, dims.char_hidden, rng)?;
        Ok(Self { word, char, deprel, pos, char_fwd, char_bwd, dims })
    }
}

/// Vocabulary ids of one sentence. Positions whose word id is PAD are
/// padding: they carry no characters and assemble to zero rows.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SentenceIds {
    pub words: Vec<usize>,
    pub chars: Vec<Vec<usize>>,
    pub deprels: Vec<usize>,
    pub pos: Vec<usize>,
}

impl SentenceIds {
    pub fn encode(sentence: &Sentence, vocab: &Vocabulary) -> Self {
        Self {
            words: sentence.tokens.iter().map(|t| vocab.word_id(t)).collect(),
            chars: sentence.tokens.iter().map(|t| vocab.char_ids(t)).collect(),
            deprels: sentence.deprels.iter().map(|r| vocab.deprel_id(r)).collect(),
            pos: sentence.pos_tags.iter().map(|p| vocab.pos_id(p)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    /// Copy extended with padding positions up to `len`.
    pub fn padded(&self, len: usize) -> Self {
        let mut out = self.clone();
        while out.len() < len {
            out.words.push(PAD);
            out.chars.push(Vec::new());
            out.deprels.push(PAD);
            out.pos.push(PAD);
        }
        out
    }
}

/// Character encodings for a list of tokens, one `1 x 2H_c` row each:
/// `[final forward state; final backward state]` of a plain BiLSTM.
/// Tokens run side by side as a masked batch; an empty character list is
/// only accepted for padding positions (`allow_empty`) and yields zeros.
pub fn char_encode_batch(tape: &mut Tape, tables: &EmbeddingTables, tokens: &[Vec<usize>], allow_empty: bool) -> Result<Var> {
    let h = tables.dims.char_hidden;
    if tokens.is_empty() {
        return Err(Error::contract("no tokens to encode"));
    }
    if !allow_empty && tokens.iter().any(Vec::is_empty) {
        return Err(Error::contract("token has no characters"));
    }
    let longest = tokens.iter().map(Vec::len).max().unwrap_or(0);
    if longest == 0 {
        return Ok(tape.zeros(tokens.len(), 2 * h));
    }
    let table = tape.param(tables.char);
    let ff = tables.char_fwd.fuse(tape)?;
    let fb = tables.char_bwd.fuse(tape)?;
    let run = |tape: &mut Tape, reverse: bool, fused| -> Result<Var> {
        let mut steps = Vec::with_capacity(longest);
        let mut masks = Vec::with_capacity(longest);
        for s in 0..longest {
            let ids: Vec<usize> = tokens
                .iter()
                .map(|t| match t.len() > s {
                    true if reverse => t[t.len() - 1 - s],
                    true => t[s],
                    false => PAD,
                })
                .collect();
            steps.push(tape.gather_rows(table, &ids, Some(PAD))?);
            masks.push(tokens.iter().map(|t| if t.len() > s { 1.0 } else { 0.0 }).collect());
        }
        Ok(run_masked(tape, fused, &steps, &masks)?.h)
    };
    let fwd = run(tape, false, &ff)?;
    let bwd = run(tape, true, &fb)?;
    tape.concat(&[fwd, bwd], Axis::Cols)
}

/// Character encoding of a single token.
pub fn char_encode(tape: &mut Tape, tables: &EmbeddingTables, chars: &[usize]) -> Result<Var> {
    if chars.is_empty() {
        return Err(Error::contract("token has no characters"));
    }
    char_encode_batch(tape, tables, &[chars.to_vec()], false)
}

/// Inverted dropout with keep-probability `1 - rate`.
pub fn dropout<R: Rng>(tape: &mut Tape, v: Var, rate: f64, rng: &mut R) -> Result<Var> {
    if rate <= 0.0 {
        return Ok(v);
    }
    if rate >= 1.0 {
        return Err(Error::contract(format!("dropout rate {rate} must be below 1")));
    }
    let (r, c) = tape.shape(v);
    let keep = 1.0 / (1.0 - rate);
    let mask = (0..r * c).map(|_| if rng.gen::<f64>() < rate { 0.0 } else { keep }).collect();
    let mask = tape.constant(r, c, mask)?;
    tape.mul(v, mask)
}

/// Assembled inputs of a sentence.
#[derive(Debug, Clone, Copy)]
pub struct Assembled {
    /// `n x x_dim`
    pub x: Var,
    /// `n x g0_dim`
    pub g0: Var,
}

/// Builds `x` and `g0` in one pass; the word, character and relation
/// blocks are shared. With `dropout` set, each output gets an independent
/// dropout mask.
pub fn assemble<R: Rng>(
    tape: &mut Tape,
    tables: &EmbeddingTables,
    ids: &SentenceIds,
    dropout_rate: Option<(f64, &mut R)>,
) -> Result<Assembled> {
    let n = ids.len();
    if n == 0 {
        return Err(Error::contract("empty sentence"));
    }
    for (t, (&w, c)) in ids.words.iter().zip(&ids.chars).enumerate() {
        if w != PAD && c.is_empty() {
            return Err(Error::contract(format!("token {t} has no characters")));
        }
    }
    let word_table = tape.param(tables.word);
    let v = tape.gather_rows(word_table, &ids.words, Some(PAD))?;
    let e = char_encode_batch(tape, tables, &ids.chars, true)?;
    let mut shared = vec![v, e];
    if let Some(table) = tables.deprel {
        let table = tape.param(table);
        shared.push(tape.gather_rows(table, &ids.deprels, Some(PAD))?);
    }
    let g0 = tape.concat(&shared, Axis::Cols)?;
    let x = match tables.pos {
        Some(table) => {
            let table = tape.param(table);
            let p = tape.gather_rows(table, &ids.pos, Some(PAD))?;
            tape.concat(&[g0, p], Axis::Cols)?
        }
        None => g0,
    };
    match dropout_rate {
        Some((rate, rng)) => Ok(Assembled { x: dropout(tape, x, rate, rng)?, g0: dropout(tape, g0, rate, rng)? }),
        None => Ok(Assembled { x, g0 }),
    }
}

/// `x` alone, without dropout.
pub fn assemble_x(tape: &mut Tape, tables: &EmbeddingTables, ids: &SentenceIds) -> Result<Var> {
    Ok(assemble::<rand::rngs::mock::StepRng>(tape, tables, ids, None)?.x)
}

/// `g0` alone, without dropout.
pub fn assemble_g0(tape: &mut Tape, tables: &EmbeddingTables, ids: &SentenceIds) -> Result<Var> {
    Ok(assemble::<rand::rngs::mock::StepRng>(tape, tables, ids, None)?.g0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::sigmoid;
    use crate::data::build_vocab;
    use crate::gradcheck::{central_difference, relative_error};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sentence(tokens: &[&str]) -> Sentence {
        let n = tokens.len();
        Sentence {
            tokens: tokens.iter().map(|s| s.to_string()).collect(),
            pos_tags: (0..n).map(|i| ["NN", "VB", "DT"][i % 3].to_string()).collect(),
            heads: (0..n).collect(),
            deprels: (0..n).map(|i| ["root", "nsubj", "obj", "det"][i % 4].to_string()).collect(),
            labels: vec!["O".to_string(); n],
        }
    }

    fn setup(dims: EmbedDims, seed: u64) -> (ParamStore, EmbeddingTables, Vocabulary, ChaCha8Rng) {
        let s = sentence(&["the", "cat", "ate", "a", "fish", "x"]);
        let vocab = build_vocab(&[s], 1);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let tables = EmbeddingTables::register(&mut store, &vocab, dims, None, &mut rng).unwrap();
        // non-zero biases so the zero-parameter cases below are meaningful
        for id in store.ids().collect::<Vec<_>>() {
            if store.name(id).contains("char_lstm") {
                for v in store.get_mut(id).data_mut() {
                    *v = rng.gen_range(-0.5..0.5);
                }
            }
        }
        (store, tables, vocab, rng)
    }

    fn small() -> EmbedDims {
        EmbedDims { word: 4, char: 3, char_hidden: 2, deprel: 3, pos: 2, use_deprel: true, use_pos: true }
    }

    /// Plain LSTM over one character sequence, by hand.
    fn scalar_lstm(store: &ParamStore, p: &LstmParams, xs: &[Vec<f64>]) -> Vec<f64> {
        let h_dim = p.hidden;
        let mut h = vec![0.0; h_dim];
        let mut c = vec![0.0; h_dim];
        let pre = |w: ParamId, u: ParamId, b: ParamId, x: &[f64], h: &[f64], k: usize| {
            let (w, u, b) = (store.get(w), store.get(u), store.get(b));
            let mut s = b.data()[k];
            for (i, xi) in x.iter().enumerate() {
                s += xi * w.at(i, k);
            }
            for (i, hi) in h.iter().enumerate() {
                s += hi * u.at(i, k);
            }
            s
        };
        for x in xs {
            let mut nh = vec![0.0; h_dim];
            let mut nc = vec![0.0; h_dim];
            for k in 0..h_dim {
                let f = sigmoid(pre(p.w_f, p.u_f, p.b_f, x, &h, k));
                let i = sigmoid(pre(p.w_i, p.u_i, p.b_i, x, &h, k));
                let o = sigmoid(pre(p.w_o, p.u_o, p.b_o, x, &h, k));
                let u = pre(p.w_u, p.u_u, p.b_u, x, &h, k).tanh();
                nc[k] = f * c[k] + i * u;
                nh[k] = o * nc[k].tanh();
            }
            h = nh;
            c = nc;
        }
        h
    }

    #[test]
    fn dimension_arithmetic() {
        let d = EmbedDims::default();
        assert_eq!(d.x_dim(), 300);
        assert_eq!(d.g0_dim(), 250);
        assert_eq!(d.char_out(), 100);
        let (store, tables, vocab, _) = setup(d, 1);
        let ids = SentenceIds::encode(&sentence(&["the", "cat", "a"]), &vocab);
        let mut tape = Tape::with_params(&store);
        let a = assemble::<ChaCha8Rng>(&mut tape, &tables, &ids, None).unwrap();
        assert_eq!(tape.shape(a.x), (3, 300));
        assert_eq!(tape.shape(a.g0), (3, 250));
    }

    #[test]
    fn zero_char_parameters_and_single_character() {
        let (mut store, tables, vocab, _) = setup(EmbedDims::default(), 2);
        let ids = vocab.char_ids("x");
        {
            let mut tape = Tape::with_params(&store);
            let e = char_encode(&mut tape, &tables, &ids).unwrap();
            assert_eq!(tape.shape(e), (1, 100));
            assert!(char_encode(&mut tape, &tables, &[]).is_err());
        }
        for id in store.ids().collect::<Vec<_>>() {
            if store.name(id).contains("char_lstm") {
                store.get_mut(id).data_mut().iter_mut().for_each(|v| *v = 0.0);
            }
        }
        let mut tape = Tape::with_params(&store);
        let e = char_encode(&mut tape, &tables, &vocab.char_ids("fish")).unwrap();
        assert_eq!(tape.shape(e), (1, 100));
        assert!(tape.value(e).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn char_encoding_matches_scalar_lstm() {
        let (store, tables, vocab, _) = setup(small(), 3);
        let table = store.get(tables.char);
        for word in ["ab", "fish", "x"] {
            let ids = vocab.char_ids(word);
            let rows: Vec<Vec<f64>> = ids.iter().map(|&i| table.row(i).to_vec()).collect();
            let rev: Vec<Vec<f64>> = rows.iter().rev().cloned().collect();
            let expected: Vec<f64> = scalar_lstm(&store, &tables.char_fwd, &rows)
                .into_iter()
                .chain(scalar_lstm(&store, &tables.char_bwd, &rev))
                .collect();
            let mut tape = Tape::with_params(&store);
            let e = char_encode(&mut tape, &tables, &ids).unwrap();
            for (a, b) in tape.value(e).iter().zip(&expected) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn batched_encoding_has_no_cross_token_leakage() {
        let (store, tables, vocab, _) = setup(small(), 4);
        let words = ["fish", "a", "cat", "x"];
        let ids: Vec<Vec<usize>> = words.iter().map(|w| vocab.char_ids(w)).collect();
        let mut tape = Tape::with_params(&store);
        let batch = char_encode_batch(&mut tape, &tables, &ids, false).unwrap();
        let batch = tape.to_tensor(batch);
        for (t, chars) in ids.iter().enumerate() {
            let single = char_encode(&mut tape, &tables, chars).unwrap();
            for (a, b) in tape.value(single).iter().zip(batch.row(t)) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn padding_rows_are_zero_and_g0_is_a_prefix_of_x() {
        let (store, tables, vocab, _) = setup(small(), 5);
        let ids = SentenceIds::encode(&sentence(&["the", "cat", "ate"]), &vocab).padded(5);
        let mut tape = Tape::with_params(&store);
        let a = assemble::<ChaCha8Rng>(&mut tape, &tables, &ids, None).unwrap();
        let (x, g0) = (tape.to_tensor(a.x), tape.to_tensor(a.g0));
        let d = tables.dims;
        for t in 0..5 {
            assert_eq!(&x.row(t)[..d.g0_dim()], g0.row(t));
            if t >= 3 {
                assert!(x.row(t).iter().all(|&v| v == 0.0));
            }
        }
        let mut bad = ids.clone();
        bad.chars[1].clear();
        assert!(assemble::<ChaCha8Rng>(&mut tape, &tables, &bad, None).is_err());
    }

    #[test]
    fn ablated_blocks_shrink_rows() {
        let dims = EmbedDims { use_deprel: false, use_pos: false, ..small() };
        let (store, tables, vocab, _) = setup(dims, 6);
        assert!(tables.deprel.is_none() && tables.pos.is_none());
        let ids = SentenceIds::encode(&sentence(&["the", "cat"]), &vocab);
        let mut tape = Tape::with_params(&store);
        let a = assemble::<ChaCha8Rng>(&mut tape, &tables, &ids, None).unwrap();
        assert_eq!(tape.shape(a.x), (2, 4 + 4));
        assert_eq!(tape.shape(a.g0), (2, 4 + 4));
    }

    #[test]
    fn dropout_only_in_training() {
        let (store, tables, vocab, mut rng) = setup(small(), 7);
        let ids = SentenceIds::encode(&sentence(&["the", "cat", "ate", "fish"]), &vocab);
        let mut tape = Tape::with_params(&store);
        let a = assemble_x(&mut tape, &tables, &ids).unwrap();
        let b = assemble_x(&mut tape, &tables, &ids).unwrap();
        assert_eq!(tape.value(a), tape.value(b));
        let d = assemble(&mut tape, &tables, &ids, Some((0.5, &mut rng))).unwrap();
        let (clean, dropped) = (tape.value(a), tape.value(d.x));
        assert!(dropped.iter().any(|&v| v == 0.0));
        for (c, v) in clean.iter().zip(dropped) {
            assert!(*v == 0.0 || (v - 2.0 * c).abs() < 1e-12);
        }
    }

    #[test]
    fn shared_word_gradient_accumulates_from_both_paths() {
        let (store, tables, vocab, _) = setup(small(), 8);
        let ids = SentenceIds::encode(&sentence(&["the", "cat", "the"]), &vocab);
        let weights = |len: usize, salt: f64| -> Vec<f64> { (0..len).map(|i| ((i as f64) * 0.37 + salt).sin()).collect() };
        let d = tables.dims;
        let wx = weights(3 * d.x_dim(), 0.1);
        let wg = weights(3 * d.g0_dim(), 0.7);
        let loss_of = |store: &ParamStore| -> f64 {
            let mut tape = Tape::with_params(store);
            let a = assemble::<ChaCha8Rng>(&mut tape, &tables, &ids, None).unwrap();
            let x: f64 = tape.value(a.x).iter().zip(&wx).map(|(a, b)| a * b).sum();
            let g: f64 = tape.value(a.g0).iter().zip(&wg).map(|(a, b)| a * b).sum();
            x + g
        };
        let mut tape = Tape::with_params(&store);
        let a = assemble::<ChaCha8Rng>(&mut tape, &tables, &ids, None).unwrap();
        let cx = tape.constant(3, d.x_dim(), wx.clone()).unwrap();
        let cg = tape.constant(3, d.g0_dim(), wg.clone()).unwrap();
        let px = tape.mul(a.x, cx).unwrap();
        let pg = tape.mul(a.g0, cg).unwrap();
        let (sx, sg) = (tape.sum(px), tape.sum(pg));
        let loss = tape.add(sx, sg).unwrap();
        tape.backward(loss).unwrap();
        let grads = tape.param_grads();
        let word_grad = grads.get(tables.word).unwrap().to_vec();
        let char_grad = grads.get(tables.char).unwrap().to_vec();
        drop(tape);
        let mut probe = store.clone();
        for (table, grad) in [(tables.word, &word_grad), (tables.char, &char_grad)] {
            for i in 0..store.get(table).len() {
                let fd = central_difference(
                    |h| {
                        let orig = probe.get(table).data()[i];
                        probe.get_mut(table).data_mut()[i] = orig + h;
                        let l = loss_of(&probe);
                        probe.get_mut(table).data_mut()[i] = orig;
                        l
                    },
                    1e-5,
                );
                assert!(relative_error(grad[i], fd) < 1e-6, "{i}: {} vs {fd}", grad[i]);
            }
            let cols = store.get(table).dims2().1;
            assert!(grad[..cols].iter().all(|&g| g == 0.0), "PAD row received gradient");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn permuting_tokens_permutes_rows(i in 0usize..5, j in 0usize..5, seed in 0u64..1000) {
            let (store, tables, vocab, _) = setup(small(), seed);
            let words = ["the", "cat", "ate", "a", "fish"];
            let s = sentence(&words);
            let mut swapped = s.clone();
            for col in [&mut swapped.tokens, &mut swapped.pos_tags, &mut swapped.deprels] {
                col.swap(i, j);
            }
            let mut tape = Tape::with_params(&store);
            let a = assemble_x(&mut tape, &tables, &SentenceIds::encode(&s, &vocab)).unwrap();
            let b = assemble_x(&mut tape, &tables, &SentenceIds::encode(&swapped, &vocab)).unwrap();
            let (a, b) = (tape.to_tensor(a), tape.to_tensor(b));
            for t in 0..5 {
                let src = if t == i { j } else if t == j { i } else { t };
                prop_assert_eq!(a.row(src), b.row(t));
            }
        }
    }
}
