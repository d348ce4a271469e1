use rand::Rng;

use crate::autodiff::{Axis, ParamId, ParamStore, Tape, Var};
use crate::cell::lstm::stack_directions;
use crate::cell::{CellState, Direction, GateStep, GateTrace};
use crate::error::{Error, Result};
use crate::init::{glorot, zeros_row};

/// Parameter blocks of the Syn-LSTM cell.
///
/// ```text
/// f = σ(W_f x + U_f h + Q_f g + b_f)      i = σ(W_i x + U_i h + b_i)
/// o = σ(W_o x + U_o h + Q_o g + b_o)      m = σ(W_m g + U_m h + b_m)
/// c̃ = tanh(W_u x + U_u h + b_u)           s̃ = tanh(W_n g + U_n h + b_n)
/// c = f ⊙ c_prev + i ⊙ c̃ + m ⊙ s̃          h = o ⊙ tanh(c)
/// ```
///
/// `i` and `c̃` never see `g`; `m` and `s̃` never see `x`. Weights are stored
/// `in x out` and multiply row vectors from the right.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SynLstmParams {
    pub w_f: ParamId,
    pub w_o: ParamId,
    pub w_i: ParamId,
    pub w_u: ParamId,
    pub w_m: ParamId,
    pub w_n: ParamId,
    pub u_f: ParamId,
    pub u_o: ParamId,
    pub u_i: ParamId,
    pub u_m: ParamId,
    pub u_u: ParamId,
    pub u_n: ParamId,
    pub q_f: ParamId,
    pub q_o: ParamId,
    pub b_f: ParamId,
    pub b_o: ParamId,
    pub b_i: ParamId,
    pub b_m: ParamId,
    pub b_u: ParamId,
    pub b_n: ParamId,
    pub input_dim: usize,
    pub graph_dim: usize,
    pub hidden: usize,
}

/// Fused per-sentence view. Column blocks are ordered `[f, o, i, m, c̃, s̃]`;
/// the input matrix stacks the `x` rows above the `g` rows and holds
/// constant zeros where a gate has no term for that stream.
#[derive(Debug, Clone, Copy)]
pub struct FusedSyn {
    pub input: Var,
    pub recurrent: Var,
    pub bias: Var,
    pub input_dim: usize,
    pub graph_dim: usize,
    pub hidden: usize,
}

impl SynLstmParams {
    pub fn register<R: Rng>(
        store: &mut ParamStore,
        prefix: &str,
        input_dim: usize,
        graph_dim: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let mut w = |name: &str, rows: usize| store.insert(format!("{prefix}.{name}"), glorot(rng, rows, hidden));
        let w_f = w("W_f", input_dim)?;
        let w_o = w("W_o", input_dim)?;
        let w_i = w("W_i", input_dim)?;
        let w_u = w("W_u", input_dim)?;
        let w_m = w("W_m", graph_dim)?;
        let w_n = w("W_n", graph_dim)?;
        let u_f = w("U_f", hidden)?;
        let u_o = w("U_o", hidden)?;
        let u_i = w("U_i", hidden)?;
        let u_m = w("U_m", hidden)?;
        let u_u = w("U_u", hidden)?;
        let u_n = w("U_n", hidden)?;
        let q_f = w("Q_f", graph_dim)?;
        let q_o = w("Q_o", graph_dim)?;
        let mut b = |name: &str| store.insert(format!("{prefix}.{name}"), zeros_row(hidden));
        Ok(Self {
            w_f,
            w_o,
            w_i,
            w_u,
            w_m,
            w_n,
            u_f,
            u_o,
            u_i,
            u_m,
            u_u,
            u_n,
            q_f,
            q_o,
            b_f: b("b_f")?,
            b_o: b("b_o")?,
            b_i: b("b_i")?,
            b_m: b("b_m")?,
            b_u: b("b_u")?,
            b_n: b("b_n")?,
            input_dim,
            graph_dim,
            hidden,
        })
    }

    /// Every parameter block, in declaration order.
    pub fn blocks(&self) -> [ParamId; 20] {
        [
            self.w_f, self.w_o, self.w_i, self.w_u, self.w_m, self.w_n, self.u_f, self.u_o, self.u_i, self.u_m,
            self.u_u, self.u_n, self.q_f, self.q_o, self.b_f, self.b_o, self.b_i, self.b_m, self.b_u, self.b_n,
        ]
    }

    pub fn fuse(&self, tape: &mut Tape) -> Result<FusedSyn> {
        let (dx, dg, h) = (self.input_dim, self.graph_dim, self.hidden);
        let zx = tape.zeros(dx, h);
        let zg = tape.zeros(dg, h);
        let mut p = |id: ParamId| tape.param(id);
        let x_row = [p(self.w_f), p(self.w_o), p(self.w_i), zx, p(self.w_u), zx];
        let g_row = [p(self.q_f), p(self.q_o), zg, p(self.w_m), zg, p(self.w_n)];
        let u_row = [p(self.u_f), p(self.u_o), p(self.u_i), p(self.u_m), p(self.u_u), p(self.u_n)];
        let b_row = [p(self.b_f), p(self.b_o), p(self.b_i), p(self.b_m), p(self.b_u), p(self.b_n)];
        let top = tape.concat(&x_row, Axis::Cols)?;
        let bottom = tape.concat(&g_row, Axis::Cols)?;
        Ok(FusedSyn {
            input: tape.concat(&[top, bottom], Axis::Rows)?,
            recurrent: tape.concat(&u_row, Axis::Cols)?,
            bias: tape.concat(&b_row, Axis::Cols)?,
            input_dim: dx,
            graph_dim: dg,
            hidden: h,
        })
    }
}

/// Gate values and candidates of one step, as plain numbers.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub f: Vec<f64>,
    pub o: Vec<f64>,
    pub i: Vec<f64>,
    pub m: Vec<f64>,
    pub c_tilde: Vec<f64>,
    pub s_tilde: Vec<f64>,
    pub c: Vec<f64>,
    pub h: Vec<f64>,
}

/// Nonlinearities and state update from fused pre-activations (`1 x 6H`).
fn update(tape: &mut Tape, pre: Var, c_prev: Var, hidden: usize) -> Result<(CellState, [Var; 6])> {
    let h = hidden;
    let gates_pre = tape.slice_cols(pre, 0, 4 * h)?;
    let gates = tape.sigmoid(gates_pre);
    let cands_pre = tape.slice_cols(pre, 4 * h, 2 * h)?;
    let cands = tape.tanh(cands_pre);
    let f = tape.slice_cols(gates, 0, h)?;
    let o = tape.slice_cols(gates, h, h)?;
    let i = tape.slice_cols(gates, 2 * h, h)?;
    let m = tape.slice_cols(gates, 3 * h, h)?;
    let c_tilde = tape.slice_cols(cands, 0, h)?;
    let s_tilde = tape.slice_cols(cands, h, h)?;
    let keep = tape.mul(f, c_prev)?;
    let ctx = tape.mul(i, c_tilde)?;
    let structured = tape.mul(m, s_tilde)?;
    let partial = tape.add(keep, ctx)?;
    let c = tape.add(partial, structured)?;
    let squashed = tape.tanh(c);
    let h_new = tape.mul(o, squashed)?;
    Ok((CellState { h: h_new, c }, [f, o, i, m, c_tilde, s_tilde]))
}

fn record(tape: &Tape, state: &CellState, parts: &[Var; 6]) -> StepRecord {
    let v = |x: Var| tape.value(x).to_vec();
    StepRecord {
        f: v(parts[0]),
        o: v(parts[1]),
        i: v(parts[2]),
        m: v(parts[3]),
        c_tilde: v(parts[4]),
        s_tilde: v(parts[5]),
        c: v(state.c),
        h: v(state.h),
    }
}

/// One Syn-LSTM step for row vectors `x_t` (`1 x Dx`) and `g_t` (`1 x Dg`).
pub fn step(tape: &mut Tape, fused: &FusedSyn, x_t: Var, g_t: Var, state: CellState) -> Result<(CellState, StepRecord)> {
    let (xr, xd) = tape.shape(x_t);
    let (gr, gd) = tape.shape(g_t);
    if xr != 1 || gr != 1 || xd != fused.input_dim || gd != fused.graph_dim {
        return Err(Error::dim("syn_lstm_step", &[xr, xd, gr, gd], &[fused.input_dim, fused.graph_dim]));
    }
    if tape.shape(state.h) != (1, fused.hidden) || tape.shape(state.c) != (1, fused.hidden) {
        let (r, c) = tape.shape(state.h);
        return Err(Error::dim("syn_lstm_step", &[r, c], &[1, fused.hidden]));
    }
    let xg = tape.concat(&[x_t, g_t], Axis::Cols)?;
    let projected = tape.matmul(xg, fused.input)?;
    let hu = tape.matmul(state.h, fused.recurrent)?;
    let sum = tape.add(projected, hu)?;
    let pre = tape.add(sum, fused.bias)?;
    let (next, parts) = update(tape, pre, state.c, fused.hidden)?;
    let rec = record(tape, &next, &parts);
    Ok((next, rec))
}

/// Runs one direction over `x` (`n x Dx`) and `g` (`n x Dg`). States and
/// records are indexed by original position.
pub fn run_direction(
    tape: &mut Tape,
    fused: &FusedSyn,
    x: Var,
    g: Var,
    reverse: bool,
) -> Result<(Vec<CellState>, Vec<StepRecord>)> {
    let (n, xd) = tape.shape(x);
    let (gn, gd) = tape.shape(g);
    if n == 0 {
        return Err(Error::contract("Syn-LSTM needs at least one position"));
    }
    if gn != n || xd != fused.input_dim || gd != fused.graph_dim {
        return Err(Error::dim("syn_lstm_run", &[n, xd, gn, gd], &[fused.input_dim, fused.graph_dim]));
    }
    let xg = tape.concat(&[x, g], Axis::Cols)?;
    let projected = tape.matmul(xg, fused.input)?;
    let projected = tape.add_row(projected, fused.bias)?;
    let mut state = CellState::zeros(tape, 1, fused.hidden);
    let mut states = vec![None; n];
    let mut records = vec![None; n];
    let order: Vec<usize> = if reverse { (0..n).rev().collect() } else { (0..n).collect() };
    for t in order {
        let row = tape.slice_rows(projected, t, 1)?;
        let hu = tape.matmul(state.h, fused.recurrent)?;
        let pre = tape.add(row, hu)?;
        let (next, parts) = update(tape, pre, state.c, fused.hidden)?;
        records[t] = Some(record(tape, &next, &parts));
        states[t] = Some(next);
        state = next;
    }
    Ok((
        states.into_iter().map(|s| s.expect("visited")).collect(),
        records.into_iter().map(|r| r.expect("visited")).collect(),
    ))
}

/// Bidirectional Syn-LSTM: row `t` of the result is `[h_fwd_t ; h_bwd_t]`.
/// Gate values are appended to `trace` when given.
pub fn run_bidirectional(
    tape: &mut Tape,
    x: Var,
    g: Var,
    fwd: &SynLstmParams,
    bwd: &SynLstmParams,
    trace: Option<&mut GateTrace>,
) -> Result<Var> {
    let ff = fwd.fuse(tape)?;
    let fb = bwd.fuse(tape)?;
    let (fs, frec) = run_direction(tape, &ff, x, g, false)?;
    let (bs, brec) = run_direction(tape, &fb, x, g, true)?;
    if let Some(trace) = trace {
        for (direction, recs) in [(Direction::Forward, &frec), (Direction::Backward, &brec)] {
            for (position, r) in recs.iter().enumerate() {
                trace.steps.push(GateStep {
                    position,
                    direction,
                    f: r.f.clone(),
                    i: r.i.clone(),
                    m: r.m.clone(),
                    o: r.o.clone(),
                });
            }
        }
    }
    stack_directions(tape, &fs, &bs)
}
