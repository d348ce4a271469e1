use crate::autodiff::{ParamStore, Tape, Tensor};
use crate::cell::syn::{run_direction, StepRecord, SynLstmParams};
use crate::error::{Error, Result};

/// Forward run of `params` over `x`/`g` from zero state, then the
/// closed-form cell state at position `t` (see [`expand_from_records`]).
pub fn expand_cell_state(store: &ParamStore, params: &SynLstmParams, x: &Tensor, g: &Tensor, t: usize) -> Result<Vec<f64>> {
    let records = forward_records(store, params, x, g)?;
    expand_from_records(&records, t)
}

/// Gate and candidate records of a left-to-right run.
pub fn forward_records(store: &ParamStore, params: &SynLstmParams, x: &Tensor, g: &Tensor) -> Result<Vec<StepRecord>> {
    let mut tape = Tape::with_params(store);
    let fused = params.fuse(&mut tape)?;
    let xv = tape.leaf(x);
    let gv = tape.leaf(g);
    let (_, records) = run_direction(&mut tape, &fused, xv, gv, false)?;
    Ok(records)
}

/// Cell state at position `t` as a weighted sum of all candidate states,
/// from a forward run started at zero state:
///
/// ```text
/// c_t = Σ_j a_j ⊙ c̃_j + Σ_j q_j ⊙ s̃_j
/// a_j = i_j ⊙ Π_{k=j+1..t} f_k,    q_j = m_j ⊙ Π_{k=j+1..t} f_k
/// ```
///
/// Only the recorded gates and candidates are read; the recorded cell
/// states are not.
pub fn expand_from_records(records: &[StepRecord], t: usize) -> Result<Vec<f64>> {
    let (c, _, _) = expansion_with_weights(records, t)?;
    Ok(c)
}

/// The expansion together with the weights `a_j` and `q_j` for `j = 0..=t`.
#[allow(clippy::type_complexity)]
pub fn expansion_with_weights(records: &[StepRecord], t: usize) -> Result<(Vec<f64>, Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    if t >= records.len() {
        return Err(Error::contract(format!("position {t} outside a run of {}", records.len())));
    }
    let h = records[t].f.len();
    let mut c = vec![0.0; h];
    let mut a_weights = Vec::with_capacity(t + 1);
    let mut q_weights = Vec::with_capacity(t + 1);
    for j in 0..=t {
        let mut decay = vec![1.0; h];
        for rec in &records[j + 1..=t] {
            decay.iter_mut().zip(&rec.f).for_each(|(d, f)| *d *= f);
        }
        let r = &records[j];
        let a: Vec<f64> = r.i.iter().zip(&decay).map(|(i, d)| i * d).collect();
        let q: Vec<f64> = r.m.iter().zip(&decay).map(|(m, d)| m * d).collect();
        for k in 0..h {
            c[k] += a[k] * r.c_tilde[k] + q[k] * r.s_tilde[k];
        }
        a_weights.push(a);
        q_weights.push(q);
    }
    Ok((c, a_weights, q_weights))
}
