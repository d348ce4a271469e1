use crate::autodiff::{ParamGrads, ParamId, ParamStore, Tensor};
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Rows,
    Cols,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElementwiseOp {
    Add,
    Mul,
    Sigmoid,
    Tanh,
    Relu,
}

/// Backward closure for a custom op: maps the output gradient to one
/// optional gradient per input.
pub type CustomBackward<'a> = Box<dyn Fn(&[f64]) -> Vec<Option<Vec<f64>>> + 'a>;

enum Op<'a> {
    Leaf,
    Param(ParamId),
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    Scale(Var, f64),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    Concat(Vec<Var>, Axis),
    SliceRows(Var, usize),
    SliceCols(Var, usize),
    Gather {
        table: Var,
        ids: Vec<usize>,
        pad: Option<usize>,
    },
    Sum(Var),
    Custom(Vec<Var>, CustomBackward<'a>),
}

struct Node<'a> {
    rows: usize,
    cols: usize,
    // empty for parameter leaves; their values live in the store
    value: Vec<f64>,
    op: Op<'a>,
    requires_grad: bool,
}

/// Dynamic computation tape for reverse-mode differentiation.
///
/// Nodes are appended in execution order, so every node's inputs precede it
/// and a single reverse sweep is a reverse topological traversal. Parameter
/// leaves refer into a borrowed [`ParamStore`] instead of copying it.
pub struct Tape<'a> {
    params: Option<&'a ParamStore>,
    nodes: Vec<Node<'a>>,
    grads: Vec<Option<Vec<f64>>>,
    backward_done: bool,
}

impl Default for Tape<'_> {
    fn default() -> Self {
        Self::new()
    }
}

impl<'a> Tape<'a> {
    pub fn new() -> Self {
        Self {
            params: None,
            nodes: Vec::new(),
            grads: Vec::new(),
            backward_done: false,
        }
    }

    pub fn with_params(params: &'a ParamStore) -> Self {
        Self {
            params: Some(params),
            ..Self::new()
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, rows: usize, cols: usize, value: Vec<f64>, op: Op<'a>, requires_grad: bool) -> Var {
        debug_assert!(matches!(op, Op::Param(_)) || value.len() == rows * cols);
        self.nodes.push(Node {
            rows,
            cols,
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        let n = &self.nodes[v.0];
        (n.rows, n.cols)
    }

    pub fn value(&self, v: Var) -> &[f64] {
        let node = &self.nodes[v.0];
        match node.op {
            Op::Param(id) => self
                .params
                .expect("parameter leaf without a store")
                .get(id)
                .data(),
            _ => &node.value,
        }
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.value(v)[0]
    }

    pub fn to_tensor(&self, v: Var) -> Tensor {
        let (r, c) = self.shape(v);
        Tensor::matrix(r, c, self.value(v).to_vec()).expect("node shape is consistent")
    }

    // ---- leaves ----

    /// Records a leaf copied from `tensor`; gradients flow to it iff the
    /// tensor has `requires_grad` set.
    pub fn leaf(&mut self, tensor: &Tensor) -> Var {
        let (r, c) = tensor.dims2();
        self.push(r, c, tensor.data().to_vec(), Op::Leaf, tensor.requires_grad())
    }

    pub fn constant(&mut self, rows: usize, cols: usize, data: Vec<f64>) -> Result<Var> {
        if data.len() != rows * cols {
            return Err(Error::dim("constant", &[rows, cols], &[data.len()]));
        }
        Ok(self.push(rows, cols, data, Op::Leaf, false))
    }

    pub fn zeros(&mut self, rows: usize, cols: usize) -> Var {
        self.push(rows, cols, vec![0.0; rows * cols], Op::Leaf, false)
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        let store = self.params.expect("tape has no parameter store");
        let t = store.get(id);
        let (r, c) = t.dims2();
        self.push(r, c, Vec::new(), Op::Param(id), t.requires_grad())
    }

    // ---- primitives ----

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.shape(a);
        let (k2, n) = self.shape(b);
        if k != k2 {
            return Err(Error::dim("matmul", &[m, k], &[k2, n]));
        }
        let out = matmul_nn(self.value(a), self.value(b), m, k, n);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(m, n, out, Op::MatMul(a, b), rg))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let sa = self.shape(a);
        let sb = self.shape(b);
        if sa != sb {
            return Err(Error::dim(op, &[sa.0, sa.1], &[sb.0, sb.1]));
        }
        Ok(())
    }

    fn binary(&mut self, a: Var, b: Var, name: &'static str, f: fn(f64, f64) -> f64, op: Op<'a>) -> Result<Var> {
        self.same_shape(name, a, b)?;
        let out = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(x, y)| f(*x, *y))
            .collect();
        let (r, c) = self.shape(a);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(r, c, out, op, rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "add", |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "sub", |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "mul", |x, y| x * y, Op::Mul(a, b))
    }

    /// Adds a `1 x c` row to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (r, c) = self.shape(a);
        let (br, bc) = self.shape(row);
        if br != 1 || bc != c {
            return Err(Error::dim("add_row", &[r, c], &[br, bc]));
        }
        let bias = self.value(row);
        let out = self
            .value(a)
            .chunks(c.max(1))
            .flat_map(|chunk| chunk.iter().zip(bias).map(|(x, b)| x + b))
            .collect();
        let rg = self.rg(a) || self.rg(row);
        Ok(self.push(r, c, out, Op::AddRow(a, row), rg))
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let out = self.value(a).iter().map(|x| x * k).collect();
        let (r, c) = self.shape(a);
        let rg = self.rg(a);
        self.push(r, c, out, Op::Scale(a, k), rg)
    }

    fn unary(&mut self, a: Var, f: fn(f64) -> f64, op: Op<'a>) -> Var {
        let out = self.value(a).iter().map(|x| f(*x)).collect();
        let (r, c) = self.shape(a);
        let rg = self.rg(a);
        self.push(r, c, out, op, rg)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, sigmoid, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, f64::tanh, Op::Tanh(a))
    }

    /// ReLU with derivative 0 at 0.
    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(a, |x| if x > 0.0 { x } else { 0.0 }, Op::Relu(a))
    }

    pub fn elementwise(&mut self, op: ElementwiseOp, operands: &[Var]) -> Result<Var> {
        let arity = match op {
            ElementwiseOp::Add | ElementwiseOp::Mul => 2,
            _ => 1,
        };
        if operands.len() != arity {
            return Err(Error::contract(format!(
                "{op:?} takes {arity} operand(s), got {}",
                operands.len()
            )));
        }
        match op {
            ElementwiseOp::Add => self.add(operands[0], operands[1]),
            ElementwiseOp::Mul => self.mul(operands[0], operands[1]),
            ElementwiseOp::Sigmoid => Ok(self.sigmoid(operands[0])),
            ElementwiseOp::Tanh => Ok(self.tanh(operands[0])),
            ElementwiseOp::Relu => Ok(self.relu(operands[0])),
        }
    }

    pub fn concat(&mut self, parts: &[Var], axis: Axis) -> Result<Var> {
        let Some(&first) = parts.first() else {
            return Err(Error::contract("concat of an empty list"));
        };
        let (r0, c0) = self.shape(first);
        match axis {
            Axis::Rows => {
                let mut rows = 0;
                for &p in parts {
                    let (r, c) = self.shape(p);
                    if c != c0 {
                        return Err(Error::dim("concat", &[r0, c0], &[r, c]));
                    }
                    rows += r;
                }
                let mut out = Vec::with_capacity(rows * c0);
                for &p in parts {
                    out.extend_from_slice(self.value(p));
                }
                let rg = parts.iter().any(|&p| self.rg(p));
                Ok(self.push(rows, c0, out, Op::Concat(parts.to_vec(), axis), rg))
            }
            Axis::Cols => {
                let mut cols = 0;
                for &p in parts {
                    let (r, c) = self.shape(p);
                    if r != r0 {
                        return Err(Error::dim("concat", &[r0, c0], &[r, c]));
                    }
                    cols += c;
                }
                let mut out = Vec::with_capacity(r0 * cols);
                for i in 0..r0 {
                    for &p in parts {
                        let c = self.shape(p).1;
                        out.extend_from_slice(&self.value(p)[i * c..(i + 1) * c]);
                    }
                }
                let rg = parts.iter().any(|&p| self.rg(p));
                Ok(self.push(r0, cols, out, Op::Concat(parts.to_vec(), axis), rg))
            }
        }
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let (r, c) = self.shape(a);
        if start + len > r {
            return Err(Error::dim("slice_rows", &[r, c], &[start, len]));
        }
        let out = self.value(a)[start * c..(start + len) * c].to_vec();
        let rg = self.rg(a);
        Ok(self.push(len, c, out, Op::SliceRows(a, start), rg))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let (r, c) = self.shape(a);
        if start + len > c {
            return Err(Error::dim("slice_cols", &[r, c], &[start, len]));
        }
        let v = self.value(a);
        let mut out = Vec::with_capacity(r * len);
        for i in 0..r {
            out.extend_from_slice(&v[i * c + start..i * c + start + len]);
        }
        let rg = self.rg(a);
        Ok(self.push(r, len, out, Op::SliceCols(a, start), rg))
    }

    /// Row lookup `table[ids]`. Rows whose id equals `pad` read as zero and
    /// receive no gradient.
    pub fn gather_rows(&mut self, table: Var, ids: &[usize], pad: Option<usize>) -> Result<Var> {
        let (r, c) = self.shape(table);
        let v = self.value(table);
        let mut out = Vec::with_capacity(ids.len() * c);
        for &id in ids {
            if id >= r {
                return Err(Error::contract(format!("row id {id} out of range for table with {r} rows")));
            }
            if Some(id) == pad {
                out.extend(std::iter::repeat_n(0.0, c));
            } else {
                out.extend_from_slice(&v[id * c..(id + 1) * c]);
            }
        }
        let rg = self.rg(table);
        Ok(self.push(
            ids.len(),
            c,
            out,
            Op::Gather {
                table,
                ids: ids.to_vec(),
                pad,
            },
            rg,
        ))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).iter().sum();
        let rg = self.rg(a);
        self.push(1, 1, vec![s], Op::Sum(a), rg)
    }

    /// Records an op whose forward value was computed by the caller.
    pub fn custom(
        &mut self,
        inputs: &[Var],
        rows: usize,
        cols: usize,
        value: Vec<f64>,
        backward: CustomBackward<'a>,
    ) -> Result<Var> {
        if value.len() != rows * cols {
            return Err(Error::dim("custom", &[rows, cols], &[value.len()]));
        }
        let rg = inputs.iter().any(|&p| self.rg(p));
        Ok(self.push(rows, cols, value, Op::Custom(inputs.to_vec(), backward), rg))
    }

    // ---- reverse sweep ----

    /// Propagates gradients from the scalar `loss` to every ancestor that
    /// requires them. Calling it twice without [`Tape::reset_grads`] fails.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.backward_done {
            return Err(Error::State("backward already ran on this tape; call reset_grads first".into()));
        }
        if self.shape(loss) != (1, 1) {
            let (r, c) = self.shape(loss);
            return Err(Error::contract(format!("backward needs a scalar loss, got {r}x{c}")));
        }
        self.backward_done = true;
        self.grads = vec![None; self.nodes.len()];
        if !self.rg(loss) {
            return Ok(());
        }
        self.grads[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            let Some(g) = self.grads[i].take() else { continue };
            if self.nodes[i].requires_grad {
                self.propagate(i, &g);
            }
            self.grads[i] = Some(g);
        }
        Ok(())
    }

    pub fn reset_grads(&mut self) {
        self.grads.clear();
        self.backward_done = false;
    }

    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Sums gradients of all parameter leaves, one entry per parameter.
    pub fn param_grads(&self) -> ParamGrads {
        let mut out: Vec<(ParamId, Vec<f64>)> = Vec::new();
        for (i, node) in self.nodes.iter().enumerate() {
            let Op::Param(id) = node.op else { continue };
            let Some(Some(g)) = self.grads.get(i) else { continue };
            match out.iter_mut().find(|(pid, _)| *pid == id) {
                Some((_, acc)) => acc.iter_mut().zip(g).for_each(|(a, b)| *a += b),
                None => out.push((id, g.clone())),
            }
        }
        out.sort_by_key(|(id, _)| *id);
        ParamGrads { grads: out }
    }

    fn add_grad(&mut self, v: Var, g: Vec<f64>) {
        if !self.rg(v) {
            return;
        }
        match &mut self.grads[v.0] {
            Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += b),
            slot @ None => *slot = Some(g),
        }
    }

    fn propagate(&mut self, i: usize, g: &[f64]) {
        let (rows, cols) = (self.nodes[i].rows, self.nodes[i].cols);
        // Take the op out so the node list can be borrowed while propagating.
        let op = std::mem::replace(&mut self.nodes[i].op, Op::Leaf);
        match &op {
            Op::Leaf | Op::Param(_) => {}
            Op::MatMul(a, b) => {
                let (m, k) = self.shape(*a);
                let n = cols;
                if self.rg(*a) {
                    let da = matmul_nt(g, self.value(*b), m, n, k);
                    self.add_grad(*a, da);
                }
                if self.rg(*b) {
                    let db = matmul_tn(self.value(*a), g, m, k, n);
                    self.add_grad(*b, db);
                }
            }
            Op::Add(a, b) => {
                self.add_grad(*a, g.to_vec());
                self.add_grad(*b, g.to_vec());
            }
            Op::Sub(a, b) => {
                self.add_grad(*a, g.to_vec());
                self.add_grad(*b, g.iter().map(|x| -x).collect());
            }
            Op::Mul(a, b) => {
                if self.rg(*a) {
                    let da = g.iter().zip(self.value(*b)).map(|(x, y)| x * y).collect();
                    self.add_grad(*a, da);
                }
                if self.rg(*b) {
                    let db = g.iter().zip(self.value(*a)).map(|(x, y)| x * y).collect();
                    self.add_grad(*b, db);
                }
            }
            Op::AddRow(a, row) => {
                self.add_grad(*a, g.to_vec());
                if self.rg(*row) {
                    let mut db = vec![0.0; cols];
                    for chunk in g.chunks(cols.max(1)) {
                        db.iter_mut().zip(chunk).for_each(|(d, x)| *d += x);
                    }
                    self.add_grad(*row, db);
                }
            }
            Op::Scale(a, k) => self.add_grad(*a, g.iter().map(|x| x * k).collect()),
            Op::Sigmoid(a) => {
                let y = &self.nodes[i].value;
                let da = g.iter().zip(y).map(|(x, s)| x * s * (1.0 - s)).collect();
                self.add_grad(*a, da);
            }
            Op::Tanh(a) => {
                let y = &self.nodes[i].value;
                let da = g.iter().zip(y).map(|(x, t)| x * (1.0 - t * t)).collect();
                self.add_grad(*a, da);
            }
            Op::Relu(a) => {
                let da = g
                    .iter()
                    .zip(self.value(*a))
                    .map(|(x, v)| if *v > 0.0 { *x } else { 0.0 })
                    .collect();
                self.add_grad(*a, da);
            }
            Op::Concat(parts, Axis::Rows) => {
                let mut offset = 0;
                for &p in parts {
                    let len = self.shape(p).0 * cols;
                    self.add_grad(p, g[offset..offset + len].to_vec());
                    offset += len;
                }
            }
            Op::Concat(parts, Axis::Cols) => {
                let mut offset = 0;
                for &p in parts {
                    let pc = self.shape(p).1;
                    if self.rg(p) {
                        let mut dp = Vec::with_capacity(rows * pc);
                        for r in 0..rows {
                            dp.extend_from_slice(&g[r * cols + offset..r * cols + offset + pc]);
                        }
                        self.add_grad(p, dp);
                    }
                    offset += pc;
                }
            }
            Op::SliceRows(a, start) => {
                let (ar, ac) = self.shape(*a);
                let mut da = vec![0.0; ar * ac];
                da[start * ac..(start + rows) * ac].copy_from_slice(g);
                self.add_grad(*a, da);
            }
            Op::SliceCols(a, start) => {
                let (ar, ac) = self.shape(*a);
                let mut da = vec![0.0; ar * ac];
                for r in 0..ar {
                    da[r * ac + start..r * ac + start + cols].copy_from_slice(&g[r * cols..(r + 1) * cols]);
                }
                self.add_grad(*a, da);
            }
            Op::Gather { table, ids, pad } => {
                let (tr, tc) = self.shape(*table);
                let mut dt = vec![0.0; tr * tc];
                for (k, &id) in ids.iter().enumerate() {
                    if Some(id) == *pad {
                        continue;
                    }
                    dt[id * tc..(id + 1) * tc]
                        .iter_mut()
                        .zip(&g[k * tc..(k + 1) * tc])
                        .for_each(|(d, x)| *d += x);
                }
                self.add_grad(*table, dt);
            }
            Op::Sum(a) => {
                let (r, c) = self.shape(*a);
                self.add_grad(*a, vec![g[0]; r * c]);
            }
            Op::Custom(inputs, backward) => {
                let grads = backward(g);
                for (&p, dg) in inputs.iter().zip(grads) {
                    if let Some(dg) = dg {
                        self.add_grad(p, dg);
                    }
                }
            }
        }
        self.nodes[i].op = op;
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `C[m x n] = A[m x k] * B[k x n]`
pub fn matmul_nn(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut c = vec![0.0; m * n];
    for i in 0..m {
        let crow = &mut c[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            crow.iter_mut().zip(brow).for_each(|(cv, bv)| *cv += av * bv);
        }
    }
    c
}

/// `C[m x k] = G[m x n] * B[k x n]^T`
fn matmul_nt(g: &[f64], b: &[f64], m: usize, n: usize, k: usize) -> Vec<f64> {
    let mut c = vec![0.0; m * k];
    for i in 0..m {
        let grow = &g[i * n..(i + 1) * n];
        for p in 0..k {
            let brow = &b[p * n..(p + 1) * n];
            c[i * k + p] = grow.iter().zip(brow).map(|(x, y)| x * y).sum();
        }
    }
    c
}

/// `C[k x n] = A[m x k]^T * G[m x n]`
fn matmul_tn(a: &[f64], g: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut c = vec![0.0; k * n];
    for i in 0..m {
        let grow = &g[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            c[p * n..(p + 1) * n]
                .iter_mut()
                .zip(grow)
                .for_each(|(cv, gv)| *cv += av * gv);
        }
    }
    c
}
