//! Recurrent cells: the Syn-LSTM, a plain LSTM used by the character
//! encoder and the baselines, and the closed-form cell-state expansion.

mod expansion;
mod lstm;
mod syn;

use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};

pub use expansion::{expand_cell_state, expand_from_records, expansion_with_weights, forward_records};
pub use lstm::{plain_lstm_step, run_bilstm, run_lstm, run_masked, FusedLstm, LstmParams};
pub use syn::{run_bidirectional, run_direction, step, FusedSyn, StepRecord, SynLstmParams};

/// Recurrent `(h, c)` pair, each `B x H`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CellState {
    pub h: Var,
    pub c: Var,
}

impl CellState {
    pub fn zeros(tape: &mut Tape, batch: usize, hidden: usize) -> Self {
        Self {
            h: tape.zeros(batch, hidden),
            c: tape.zeros(batch, hidden),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    Forward,
    Backward,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Gate {
    F,
    I,
    M,
    O,
}

impl FromStr for Gate {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "f" => Ok(Gate::F),
            "i" => Ok(Gate::I),
            "m" => Ok(Gate::M),
            "o" => Ok(Gate::O),
            other => Err(Error::contract(format!("unknown gate {other}; expected f, i, m or o"))),
        }
    }
}

impl Gate {
    pub fn name(self) -> &'static str {
        match self {
            Gate::F => "f",
            Gate::I => "i",
            Gate::M => "m",
            Gate::O => "o",
        }
    }
}

/// Gate activations of one direction at one position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateStep {
    pub position: usize,
    pub direction: Direction,
    pub f: Vec<f64>,
    pub i: Vec<f64>,
    pub m: Vec<f64>,
    pub o: Vec<f64>,
}

impl GateStep {
    pub fn gate(&self, gate: Gate) -> &[f64] {
        match gate {
            Gate::F => &self.f,
            Gate::I => &self.i,
            Gate::M => &self.m,
            Gate::O => &self.o,
        }
    }
}

/// Recorded gate activations of one sentence.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GateTrace {
    pub steps: Vec<GateStep>,
}

impl GateTrace {
    pub fn values(&self, gate: Gate) -> impl Iterator<Item = f64> + '_ {
        self.steps.iter().flat_map(move |s| s.gate(gate).iter().copied())
    }

    /// `(position, gate, mean)` rows, the mean taken over hidden units and
    /// both directions.
    pub fn mean_rows(&self) -> Vec<(usize, Gate, f64)> {
        let positions = self.steps.iter().map(|s| s.position + 1).max().unwrap_or(0);
        let mut rows = Vec::new();
        for position in 0..positions {
            for gate in [Gate::F, Gate::I, Gate::M, Gate::O] {
                let vals: Vec<f64> = self
                    .steps
                    .iter()
                    .filter(|s| s.position == position)
                    .flat_map(|s| s.gate(gate).iter().copied())
                    .collect();
                if !vals.is_empty() {
                    rows.push((position, gate, vals.iter().sum::<f64>() / vals.len() as f64));
                }
            }
        }
        rows
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("position,gate,mean_value\n");
        for (p, g, v) in self.mean_rows() {
            let _ = writeln!(out, "{p},{},{v}", g.name());
        }
        out
    }
}
