use rand::Rng;

use crate::autodiff::{Axis, ParamId, ParamStore, Tape, Var};
use crate::cell::CellState;
use crate::error::{Error, Result};
use crate::init::{glorot, zeros_row};

/// Standard LSTM cell: gates `f`, `i`, `o` and one candidate, all reading
/// `(x_t, h_{t-1})`. Weights are stored `in x out` and applied to row
/// vectors.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LstmParams {
    pub w_f: ParamId,
    pub w_i: ParamId,
    pub w_o: ParamId,
    pub w_u: ParamId,
    pub u_f: ParamId,
    pub u_i: ParamId,
    pub u_o: ParamId,
    pub u_u: ParamId,
    pub b_f: ParamId,
    pub b_i: ParamId,
    pub b_o: ParamId,
    pub b_u: ParamId,
    pub input_dim: usize,
    pub hidden: usize,
}

/// Per-sentence fused view: gate blocks side by side in `[f, i, o, u]` order.
#[derive(Debug, Clone, Copy)]
pub struct FusedLstm {
    pub input: Var,
    pub recurrent: Var,
    pub bias: Var,
    pub hidden: usize,
}

impl LstmParams {
    pub fn register<R: Rng>(store: &mut ParamStore, prefix: &str, input_dim: usize, hidden: usize, rng: &mut R) -> Result<Self> {
        let mut w = |name: &str, rows: usize| store.insert(format!("{prefix}.{name}"), glorot(rng, rows, hidden));
        let (w_f, w_i, w_o, w_u) = (w("W_f", input_dim)?, w("W_i", input_dim)?, w("W_o", input_dim)?, w("W_u", input_dim)?);
        let (u_f, u_i, u_o, u_u) = (w("U_f", hidden)?, w("U_i", hidden)?, w("U_o", hidden)?, w("U_u", hidden)?);
        let mut b = |name: &str| store.insert(format!("{prefix}.{name}"), zeros_row(hidden));
        Ok(Self {
            w_f,
            w_i,
            w_o,
            w_u,
            u_f,
            u_i,
            u_o,
            u_u,
            b_f: b("b_f")?,
            b_i: b("b_i")?,
            b_o: b("b_o")?,
            b_u: b("b_u")?,
            input_dim,
            hidden,
        })
    }

    pub fn fuse(&self, tape: &mut Tape) -> Result<FusedLstm> {
        let mut cat = |ids: [ParamId; 4]| -> Result<Var> {
            let vars: Vec<Var> = ids.iter().map(|&id| tape.param(id)).collect();
            tape.concat(&vars, Axis::Cols)
        };
        Ok(FusedLstm {
            input: cat([self.w_f, self.w_i, self.w_o, self.w_u])?,
            recurrent: cat([self.u_f, self.u_i, self.u_o, self.u_u])?,
            bias: cat([self.b_f, self.b_i, self.b_o, self.b_u])?,
            hidden: self.hidden,
        })
    }
}

/// Gate update from fused pre-activations `[f, i, o, u]` (`B x 4H`).
fn update(tape: &mut Tape, pre: Var, c_prev: Var, hidden: usize) -> Result<CellState> {
    let gates_pre = tape.slice_cols(pre, 0, 3 * hidden)?;
    let gates = tape.sigmoid(gates_pre);
    let cand_pre = tape.slice_cols(pre, 3 * hidden, hidden)?;
    let cand = tape.tanh(cand_pre);
    let f = tape.slice_cols(gates, 0, hidden)?;
    let i = tape.slice_cols(gates, hidden, hidden)?;
    let o = tape.slice_cols(gates, 2 * hidden, hidden)?;
    let keep = tape.mul(f, c_prev)?;
    let write = tape.mul(i, cand)?;
    let c = tape.add(keep, write)?;
    let squashed = tape.tanh(c);
    let h = tape.mul(o, squashed)?;
    Ok(CellState { h, c })
}

/// One LSTM step over a batch of rows: `x_t` is `B x D`, the state `B x H`.
pub fn plain_lstm_step(tape: &mut Tape, fused: &FusedLstm, x_t: Var, state: CellState) -> Result<CellState> {
    let (b, d) = tape.shape(x_t);
    let (bd, _) = tape.shape(fused.input);
    let (hb, hh) = tape.shape(state.h);
    if d != bd || hb != b || hh != fused.hidden {
        return Err(Error::dim("plain_lstm_step", &[b, d], &[bd, hh]));
    }
    let xw = tape.matmul(x_t, fused.input)?;
    let hu = tape.matmul(state.h, fused.recurrent)?;
    let sum = tape.add(xw, hu)?;
    let pre = tape.add_row(sum, fused.bias)?;
    update(tape, pre, state.c, fused.hidden)
}

/// Runs the cell over the rows of `x` (`n x D`), right to left when
/// `reverse`. Returned states are indexed by original position.
pub fn run_lstm(tape: &mut Tape, fused: &FusedLstm, x: Var, reverse: bool) -> Result<Vec<CellState>> {
    let (n, d) = tape.shape(x);
    let (bd, _) = tape.shape(fused.input);
    if d != bd {
        return Err(Error::dim("run_lstm", &[n, d], &[bd, 4 * fused.hidden]));
    }
    let xw = tape.matmul(x, fused.input)?;
    let projected = tape.add_row(xw, fused.bias)?;
    let mut state = CellState::zeros(tape, 1, fused.hidden);
    let mut states: Vec<Option<CellState>> = vec![None; n];
    let order: Vec<usize> = if reverse { (0..n).rev().collect() } else { (0..n).collect() };
    for t in order {
        let row = tape.slice_rows(projected, t, 1)?;
        let hu = tape.matmul(state.h, fused.recurrent)?;
        let pre = tape.add(row, hu)?;
        state = update(tape, pre, state.c, fused.hidden)?;
        states[t] = Some(state);
    }
    Ok(states.into_iter().map(|s| s.expect("every position visited")).collect())
}

/// Bidirectional plain LSTM: row `t` is `[h_fwd_t ; h_bwd_t]`.
pub fn run_bilstm(tape: &mut Tape, fwd: &LstmParams, bwd: &LstmParams, x: Var) -> Result<Var> {
    let ff = fwd.fuse(tape)?;
    let fb = bwd.fuse(tape)?;
    let forward = run_lstm(tape, &ff, x, false)?;
    let backward = run_lstm(tape, &fb, x, true)?;
    stack_directions(tape, &forward, &backward)
}

pub(crate) fn stack_directions(tape: &mut Tape, forward: &[CellState], backward: &[CellState]) -> Result<Var> {
    let fh: Vec<Var> = forward.iter().map(|s| s.h).collect();
    let bh: Vec<Var> = backward.iter().map(|s| s.h).collect();
    let f = tape.concat(&fh, Axis::Rows)?;
    let b = tape.concat(&bh, Axis::Rows)?;
    tape.concat(&[f, b], Axis::Cols)
}

/// Runs a masked LSTM over padded sequences in parallel.
///
/// `steps[s]` is the `B x D` input at step `s` and `masks[s][b]` is 1 while
/// step `s` is inside sequence `b`. Outside a sequence the state is carried
/// through unchanged, so the returned state is each row's state after its
/// last real step.
pub fn run_masked(tape: &mut Tape, fused: &FusedLstm, steps: &[Var], masks: &[Vec<f64>]) -> Result<CellState> {
    let Some(&first) = steps.first() else {
        return Err(Error::contract("masked LSTM run needs at least one step"));
    };
    let (batch, _) = tape.shape(first);
    let h = fused.hidden;
    let mut state = CellState::zeros(tape, batch, h);
    for (s, &x) in steps.iter().enumerate() {
        let next = plain_lstm_step(tape, fused, x, state)?;
        if masks[s].iter().all(|&m| m == 1.0) {
            state = next;
            continue;
        }
        let keep: Vec<f64> = masks[s].iter().flat_map(|&m| std::iter::repeat_n(m, h)).collect();
        let carry: Vec<f64> = keep.iter().map(|m| 1.0 - m).collect();
        let keep = tape.constant(batch, h, keep)?;
        let carry = tape.constant(batch, h, carry)?;
        let blend = |tape: &mut Tape, new: Var, old: Var| -> Result<Var> {
            let a = tape.mul(keep, new)?;
            let b = tape.mul(carry, old)?;
            tape.add(a, b)
        };
        state = CellState {
            h: blend(tape, next.h, state.h)?,
            c: blend(tape, next.c, state.c)?,
        };
    }
    Ok(state)
}
