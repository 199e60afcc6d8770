//! Reverse-mode autodiff on a linear tape. Each training step records the
//! forward computation into a fresh [`Tape`]; [`Tape::backward`] replays it in
//! reverse and accumulates gradients into the named parameter leaves.

use super::store::{Gradients, ParamStore};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to a node on the tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf { name: Option<String> },
    MatMul(usize, usize),
    Transpose(usize),
    Add(usize, usize),
    Sub(usize, usize),
    /// Matrix plus a bias row broadcast over every row.
    AddRow(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    Relu(usize),
    SoftmaxRows(usize),
    LayerNormRows { x: usize, gain: usize, bias: usize },
    Concat(Vec<usize>),
    ConcatCols(Vec<usize>),
    StackRows(Vec<usize>),
    Row(usize, usize),
    Slice(usize, usize, usize),
    /// Rows of `table` selected by index, one output row per index.
    Gather { table: usize, ids: Vec<usize> },
    /// Output row t is the sum of the table rows listed in `ids[t]`.
    GatherSum { table: usize, ids: Vec<Vec<usize>> },
    /// Output row t comes from `a` where `mask[t]` is true, else from `b`.
    RowSelect { a: usize, b: usize, mask: Vec<bool> },
    Sum(usize),
    MaxAll { x: usize, argmax: usize },
    /// Stable `-log softmax(logits)[target]`.
    CrossEntropyLogits { logits: usize, target: usize },
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf { .. } => "leaf",
            Op::MatMul(..) => "matmul",
            Op::Transpose(..) => "transpose",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::AddRow(..) => "add_row",
            Op::Mul(..) => "mul",
            Op::Scale(..) => "scale",
            Op::Relu(..) => "relu",
            Op::SoftmaxRows(..) => "softmax_rows",
            Op::LayerNormRows { .. } => "layer_norm_rows",
            Op::Concat(..) => "concat",
            Op::ConcatCols(..) => "concat_cols",
            Op::StackRows(..) => "stack_rows",
            Op::Row(..) => "row",
            Op::Slice(..) => "slice",
            Op::Gather { .. } => "gather",
            Op::GatherSum { .. } => "gather_sum",
            Op::RowSelect { .. } => "row_select",
            Op::Sum(..) => "sum",
            Op::MaxAll { .. } => "max",
            Op::CrossEntropyLogits { .. } => "cross_entropy_logits",
        }
    }
}

struct Node {
    op: Op,
    value: Tensor,
}

/// Recorded forward computation.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    fn push(&mut self, op: Op, value: Tensor) -> Var {
        self.nodes.push(Node { op, value });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Constant leaf; receives no gradient.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(Op::Leaf { name: None }, t)
    }

    /// Named parameter leaf; `backward` accumulates its gradient by name.
    pub fn param(&mut self, store: &ParamStore, name: &str) -> Var {
        let t = store.get(name).unwrap_or_else(|| panic!("unknown parameter `{name}`")).clone();
        self.push(Op::Leaf { name: Some(name.to_string()) }, t)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.nodes[a.0].value.matmul(&self.nodes[b.0].value);
        self.push(Op::MatMul(a.0, b.0), v)
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let v = self.nodes[a.0].value.transposed();
        self.push(Op::Transpose(a.0), v)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let mut v = self.nodes[a.0].value.clone();
        v.add_in_place(&self.nodes[b.0].value);
        self.push(Op::Add(a.0, b.0), v)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let bt = &self.nodes[b.0].value;
        let at = &self.nodes[a.0].value;
        assert_eq!(at.shape(), bt.shape(), "sub shape mismatch");
        let data = at.data().iter().zip(bt.data()).map(|(x, y)| x - y).collect();
        let v = Tensor::new(at.shape().to_vec(), data);
        self.push(Op::Sub(a.0, b.0), v)
    }

    pub fn add_row(&mut self, a: Var, bias: Var) -> Var {
        let at = &self.nodes[a.0].value;
        let bt = &self.nodes[bias.0].value;
        assert_eq!(at.cols(), bt.cols(), "add_row width mismatch");
        let mut v = at.clone();
        for i in 0..v.rows() {
            for (x, b) in v.row_mut(i).iter_mut().zip(bt.data()) {
                *x += b;
            }
        }
        self.push(Op::AddRow(a.0, bias.0), v)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let at = &self.nodes[a.0].value;
        let bt = &self.nodes[b.0].value;
        assert_eq!(at.shape(), bt.shape(), "mul shape mismatch");
        let data = at.data().iter().zip(bt.data()).map(|(x, y)| x * y).collect();
        let v = Tensor::new(at.shape().to_vec(), data);
        self.push(Op::Mul(a.0, b.0), v)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let mut v = self.nodes[a.0].value.clone();
        v.scale_in_place(c);
        self.push(Op::Scale(a.0, c), v)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let at = &self.nodes[a.0].value;
        let data = at.data().iter().map(|&x| x.max(0.0)).collect();
        let v = Tensor::new(at.shape().to_vec(), data);
        self.push(Op::Relu(a.0), v)
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let at = &self.nodes[a.0].value;
        let mut v = at.clone();
        for i in 0..v.rows() {
            softmax_in_place(v.row_mut(i));
        }
        self.push(Op::SoftmaxRows(a.0), v)
    }

    pub fn layer_norm_rows(&mut self, x: Var, gain: Var, bias: Var) -> Var {
        let xt = &self.nodes[x.0].value;
        let g = self.nodes[gain.0].value.data().to_vec();
        let b = self.nodes[bias.0].value.data().to_vec();
        assert_eq!(xt.cols(), g.len());
        let mut v = xt.clone();
        for i in 0..v.rows() {
            let row = v.row_mut(i);
            let (mean, inv_std) = norm_stats(row);
            for (j, val) in row.iter_mut().enumerate() {
                *val = g[j] * (*val - mean) * inv_std + b[j];
            }
        }
        self.push(Op::LayerNormRows { x: x.0, gain: gain.0, bias: bias.0 }, v)
    }

    pub fn concat(&mut self, parts: &[Var]) -> Var {
        let mut data = Vec::new();
        for p in parts {
            let t = &self.nodes[p.0].value;
            assert_eq!(t.shape().len(), 1, "concat expects rank-1 inputs");
            data.extend_from_slice(t.data());
        }
        let v = Tensor::vector(data);
        self.push(Op::Concat(parts.iter().map(|p| p.0).collect()), v)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let rows = self.nodes[parts[0].0].value.rows();
        let total: usize = parts.iter().map(|p| self.nodes[p.0].value.cols()).sum();
        let mut data = Vec::with_capacity(rows * total);
        for i in 0..rows {
            for p in parts {
                data.extend_from_slice(self.nodes[p.0].value.row(i));
            }
        }
        let v = Tensor::matrix(rows, total, data);
        self.push(Op::ConcatCols(parts.iter().map(|p| p.0).collect()), v)
    }

    pub fn stack_rows(&mut self, rows: &[Var]) -> Var {
        let cols = self.nodes[rows[0].0].value.len();
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let t = &self.nodes[r.0].value;
            assert_eq!(t.len(), cols, "stack_rows width mismatch");
            data.extend_from_slice(t.data());
        }
        let v = Tensor::matrix(rows.len(), cols, data);
        self.push(Op::StackRows(rows.iter().map(|r| r.0).collect()), v)
    }

    pub fn row(&mut self, a: Var, idx: usize) -> Var {
        let v = Tensor::vector(self.nodes[a.0].value.row(idx).to_vec());
        self.push(Op::Row(a.0, idx), v)
    }

    pub fn slice(&mut self, a: Var, from: usize, to: usize) -> Var {
        let at = &self.nodes[a.0].value;
        assert_eq!(at.shape().len(), 1, "slice expects a rank-1 input");
        let v = Tensor::vector(at.data()[from..to].to_vec());
        self.push(Op::Slice(a.0, from, to), v)
    }

    pub fn gather(&mut self, table: Var, ids: &[usize]) -> Var {
        let t = &self.nodes[table.0].value;
        let cols = t.cols();
        let mut data = Vec::with_capacity(ids.len() * cols);
        for &id in ids {
            data.extend_from_slice(t.row(id));
        }
        let v = Tensor::matrix(ids.len(), cols, data);
        self.push(Op::Gather { table: table.0, ids: ids.to_vec() }, v)
    }

    pub fn gather_sum(&mut self, table: Var, ids: &[Vec<usize>]) -> Var {
        let t = &self.nodes[table.0].value;
        let cols = t.cols();
        let mut data = vec![0.0; ids.len() * cols];
        for (r, list) in ids.iter().enumerate() {
            for &id in list {
                for (o, &x) in data[r * cols..(r + 1) * cols].iter_mut().zip(t.row(id)) {
                    *o += x;
                }
            }
        }
        let v = Tensor::matrix(ids.len(), cols, data);
        self.push(Op::GatherSum { table: table.0, ids: ids.to_vec() }, v)
    }

    pub fn row_select(&mut self, a: Var, b: Var, mask: &[bool]) -> Var {
        let at = &self.nodes[a.0].value;
        let bt = &self.nodes[b.0].value;
        assert_eq!(at.shape(), bt.shape(), "row_select shape mismatch");
        assert_eq!(at.rows(), mask.len());
        let cols = at.cols();
        let mut data = Vec::with_capacity(at.len());
        for (i, &m) in mask.iter().enumerate() {
            data.extend_from_slice(if m { at.row(i) } else { bt.row(i) });
        }
        let v = Tensor::matrix(at.rows(), cols, data);
        self.push(Op::RowSelect { a: a.0, b: b.0, mask: mask.to_vec() }, v)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.nodes[a.0].value.data().iter().sum();
        self.push(Op::Sum(a.0), Tensor::scalar(s))
    }

    /// Max over all elements; ties break toward the lowest index.
    pub fn max(&mut self, a: Var) -> Var {
        let data = self.nodes[a.0].value.data();
        let mut argmax = 0;
        for (i, &v) in data.iter().enumerate() {
            if v > data[argmax] {
                argmax = i;
            }
        }
        let v = Tensor::scalar(data[argmax]);
        self.push(Op::MaxAll { x: a.0, argmax }, v)
    }

    pub fn cross_entropy_logits(&mut self, logits: Var, target: usize) -> Var {
        let x = self.nodes[logits.0].value.data();
        let m = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + x.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        let loss = lse - x[target];
        self.push(Op::CrossEntropyLogits { logits: logits.0, target }, Tensor::scalar(loss))
    }

    /// Reverse pass from a scalar `loss`. Returns the gradients of every
    /// named parameter leaf reachable from the loss.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let loss_t = &self.nodes[loss.0].value;
        if !loss_t.is_scalar() {
            return Err(Error::NonScalarLoss(loss_t.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::scalar(1.0));

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.value.all_finite() || !g.all_finite() {
                return Err(Error::NonFinite(node.op.name().to_string()));
            }
            match &node.op {
                Op::Leaf { .. } => {
                    grads[idx] = Some(g);
                    continue;
                }
                Op::MatMul(a, b) => {
                    let gm = as_matrix(&g, self.nodes[*a].value.rows(), self.nodes[*b].value.cols());
                    let da = gm.matmul(&self.nodes[*b].value.transposed());
                    let db = self.nodes[*a].value.transposed().matmul(&gm);
                    accumulate(&mut grads, *a, reshape_like(da, &self.nodes[*a].value));
                    accumulate(&mut grads, *b, reshape_like(db, &self.nodes[*b].value));
                }
                Op::Transpose(a) => {
                    accumulate(&mut grads, *a, g.transposed());
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *a, g.clone());
                    accumulate(&mut grads, *b, g);
                }
                Op::Sub(a, b) => {
                    accumulate(&mut grads, *a, g.clone());
                    let mut ng = g;
                    ng.scale_in_place(-1.0);
                    accumulate(&mut grads, *b, ng);
                }
                Op::AddRow(a, bias) => {
                    let cols = g.cols();
                    let mut db = vec![0.0; cols];
                    for i in 0..g.rows() {
                        for (s, &v) in db.iter_mut().zip(g.row(i)) {
                            *s += v;
                        }
                    }
                    accumulate(&mut grads, *bias, reshape_like(Tensor::vector(db), &self.nodes[*bias].value));
                    accumulate(&mut grads, *a, g);
                }
                Op::Mul(a, b) => {
                    let da = elementwise_mul(&g, &self.nodes[*b].value);
                    let db = elementwise_mul(&g, &self.nodes[*a].value);
                    accumulate(&mut grads, *a, da);
                    accumulate(&mut grads, *b, db);
                }
                Op::Scale(a, c) => {
                    let mut da = g;
                    da.scale_in_place(*c);
                    accumulate(&mut grads, *a, da);
                }
                Op::Relu(a) => {
                    let x = &self.nodes[*a].value;
                    let data = g
                        .data()
                        .iter()
                        .zip(x.data())
                        .map(|(&gv, &xv)| if xv > 0.0 { gv } else { 0.0 })
                        .collect();
                    accumulate(&mut grads, *a, Tensor::new(x.shape().to_vec(), data));
                }
                Op::SoftmaxRows(a) => {
                    let y = &node.value;
                    let mut da = y.clone();
                    for i in 0..y.rows() {
                        let yr = y.row(i);
                        let gr = g.row(i);
                        let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                        for (o, (&yv, &gv)) in da.row_mut(i).iter_mut().zip(yr.iter().zip(gr)) {
                            *o = yv * (gv - dot);
                        }
                    }
                    accumulate(&mut grads, *a, da);
                }
                Op::LayerNormRows { x, gain, bias } => {
                    let xt = &self.nodes[*x].value;
                    let gv = self.nodes[*gain].value.data();
                    let cols = xt.cols();
                    let mut dx = xt.clone();
                    let mut dg = vec![0.0; cols];
                    let mut db = vec![0.0; cols];
                    for i in 0..xt.rows() {
                        let xr = xt.row(i);
                        let gr = g.row(i);
                        let (mean, inv_std) = norm_stats(xr);
                        let xhat: Vec<f64> = xr.iter().map(|&v| (v - mean) * inv_std).collect();
                        let dyh: Vec<f64> = gr.iter().zip(gv).map(|(&gy, &gg)| gy * gg).collect();
                        let mean_dyh: f64 = dyh.iter().sum::<f64>() / cols as f64;
                        let mean_dyh_xhat: f64 =
                            dyh.iter().zip(&xhat).map(|(a, b)| a * b).sum::<f64>() / cols as f64;
                        for j in 0..cols {
                            dx.row_mut(i)[j] =
                                inv_std * (dyh[j] - mean_dyh - xhat[j] * mean_dyh_xhat);
                            dg[j] += gr[j] * xhat[j];
                            db[j] += gr[j];
                        }
                    }
                    accumulate(&mut grads, *x, dx);
                    accumulate(&mut grads, *gain, reshape_like(Tensor::vector(dg), &self.nodes[*gain].value));
                    accumulate(&mut grads, *bias, reshape_like(Tensor::vector(db), &self.nodes[*bias].value));
                }
                Op::Concat(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let len = self.nodes[p].value.len();
                        let da = Tensor::vector(g.data()[offset..offset + len].to_vec());
                        accumulate(&mut grads, p, da);
                        offset += len;
                    }
                }
                Op::ConcatCols(parts) => {
                    let rows = node.value.rows();
                    let mut offset = 0;
                    for &p in parts {
                        let pc = self.nodes[p].value.cols();
                        let mut data = Vec::with_capacity(rows * pc);
                        for i in 0..rows {
                            data.extend_from_slice(&g.row(i)[offset..offset + pc]);
                        }
                        accumulate(&mut grads, p, Tensor::matrix(rows, pc, data));
                        offset += pc;
                    }
                }
                Op::StackRows(rows) => {
                    for (i, &r) in rows.iter().enumerate() {
                        accumulate(&mut grads, r, Tensor::vector(g.row(i).to_vec()));
                    }
                }
                Op::Row(a, idx) => {
                    let mut da = Tensor::zeros(self.nodes[*a].value.shape().to_vec());
                    da.row_mut(*idx).copy_from_slice(g.data());
                    accumulate(&mut grads, *a, da);
                }
                Op::Slice(a, from, _to) => {
                    let mut da = Tensor::zeros(self.nodes[*a].value.shape().to_vec());
                    da.data_mut()[*from..*from + g.len()].copy_from_slice(g.data());
                    accumulate(&mut grads, *a, da);
                }
                Op::Gather { table, ids } => {
                    let mut dt = Tensor::zeros(self.nodes[*table].value.shape().to_vec());
                    for (r, &id) in ids.iter().enumerate() {
                        for (o, &v) in dt.row_mut(id).iter_mut().zip(g.row(r)) {
                            *o += v;
                        }
                    }
                    accumulate(&mut grads, *table, dt);
                }
                Op::GatherSum { table, ids } => {
                    let mut dt = Tensor::zeros(self.nodes[*table].value.shape().to_vec());
                    for (r, list) in ids.iter().enumerate() {
                        for &id in list {
                            for (o, &v) in dt.row_mut(id).iter_mut().zip(g.row(r)) {
                                *o += v;
                            }
                        }
                    }
                    accumulate(&mut grads, *table, dt);
                }
                Op::RowSelect { a, b, mask } => {
                    let mut da = Tensor::zeros(self.nodes[*a].value.shape().to_vec());
                    let mut db = Tensor::zeros(self.nodes[*b].value.shape().to_vec());
                    for (i, &m) in mask.iter().enumerate() {
                        let dst = if m { da.row_mut(i) } else { db.row_mut(i) };
                        dst.copy_from_slice(g.row(i));
                    }
                    accumulate(&mut grads, *a, da);
                    accumulate(&mut grads, *b, db);
                }
                Op::Sum(a) => {
                    let gs = g.item();
                    let shape = self.nodes[*a].value.shape().to_vec();
                    let n: usize = shape.iter().product();
                    accumulate(&mut grads, *a, Tensor::new(shape, vec![gs; n]));
                }
                Op::MaxAll { x, argmax } => {
                    let mut da = Tensor::zeros(self.nodes[*x].value.shape().to_vec());
                    da.data_mut()[*argmax] = g.item();
                    accumulate(&mut grads, *x, da);
                }
                Op::CrossEntropyLogits { logits, target } => {
                    let x = self.nodes[*logits].value.data();
                    let m = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let exps: Vec<f64> = x.iter().map(|v| (v - m).exp()).collect();
                    let z: f64 = exps.iter().sum();
                    let gs = g.item();
                    let mut data: Vec<f64> = exps.iter().map(|e| gs * e / z).collect();
                    data[*target] -= gs;
                    accumulate(&mut grads, *logits, Tensor::new(self.nodes[*logits].value.shape().to_vec(), data));
                }
            }
        }

        let mut out = Gradients::new();
        for (idx, node) in self.nodes.iter().enumerate() {
            if let Op::Leaf { name: Some(name) } = &node.op {
                if let Some(g) = grads[idx].take() {
                    if !g.all_finite() {
                        return Err(Error::NonFinite("leaf".to_string()));
                    }
                    out.accumulate(name, g);
                }
            }
        }
        Ok(out)
    }
}

fn as_matrix(t: &Tensor, rows: usize, cols: usize) -> Tensor {
    Tensor::matrix(rows, cols, t.data().to_vec())
}

fn reshape_like(t: Tensor, like: &Tensor) -> Tensor {
    Tensor::new(like.shape().to_vec(), t.data().to_vec())
}

fn elementwise_mul(a: &Tensor, b: &Tensor) -> Tensor {
    let data = a.data().iter().zip(b.data()).map(|(x, y)| x * y).collect();
    Tensor::new(a.shape().to_vec(), data)
}

fn accumulate(grads: &mut [Option<Tensor>], idx: usize, g: Tensor) {
    match &mut grads[idx] {
        Some(existing) => existing.add_in_place(&g),
        slot @ None => *slot = Some(g),
    }
}

fn softmax_in_place(row: &mut [f64]) {
    let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut z = 0.0;
    for v in row.iter_mut() {
        *v = (*v - m).exp();
        z += *v;
    }
    for v in row.iter_mut() {
        *v /= z;
    }
}

const LN_EPS: f64 = 1e-5;

fn norm_stats(row: &[f64]) -> (f64, f64) {
    let n = row.len() as f64;
    let mean = row.iter().sum::<f64>() / n;
    let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, 1.0 / (var + LN_EPS).sqrt())
}

/// Compares analytic gradients of `f` against central finite differences.
///
/// `f` must be deterministic: it is probed twice at the base point and an
/// error is returned if the two values differ. Returns the maximum relative
/// error `|analytic - numeric| / max(1, |analytic|, |numeric|)` over every
/// scalar entry of every parameter.
pub fn grad_check<F>(f: F, params: &ParamStore, eps: f64) -> Result<f64>
where
    F: Fn(&ParamStore) -> Result<(f64, Gradients)>,
{
    assert!(eps > 0.0 && eps <= 1e-2, "eps must be in (0, 1e-2]");
    let (base1, grads) = f(params)?;
    let (base2, _) = f(params)?;
    if base1 != base2 {
        return Err(Error::NonDeterministic);
    }

    let mut max_rel = 0.0_f64;
    let mut probe = params.clone();
    for name in params.names() {
        let len = params.get(&name).unwrap().len();
        for i in 0..len {
            let orig = probe.get(&name).unwrap().data()[i];
            probe.get_mut(&name).unwrap().data_mut()[i] = orig + eps;
            let (up, _) = f(&probe)?;
            probe.get_mut(&name).unwrap().data_mut()[i] = orig - eps;
            let (down, _) = f(&probe)?;
            probe.get_mut(&name).unwrap().data_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * eps);
            let analytic = grads.get(&name).map(|g| g.data()[i]).unwrap_or(0.0);
            let rel = (analytic - numeric).abs() / 1.0_f64.max(analytic.abs()).max(numeric.abs());
            max_rel = max_rel.max(rel);
        }
    }
    Ok(max_rel)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store_with(name: &str, t: Tensor) -> ParamStore {
        let mut s = ParamStore::new(0);
        s.insert(name, t);
        s
    }

    #[test]
    fn sum_of_squares_gradient() {
        let store = store_with("x", Tensor::vector(vec![1.0, 2.0, 3.0]));
        let mut tape = Tape::new();
        let x = tape.param(&store, "x");
        let sq = tape.mul(x, x);
        let loss = tape.sum(sq);
        assert_eq!(tape.value(loss).item(), 14.0);
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.get("x").unwrap().data(), &[2.0, 4.0, 6.0]);
    }

    #[test]
    fn constant_loss_has_no_grads() {
        let mut tape = Tape::new();
        let c = tape.constant(Tensor::scalar(5.0));
        let grads = tape.backward(c).unwrap();
        assert!(grads.is_empty());
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let store = store_with("x", Tensor::vector(vec![1.0, 2.0]));
        let mut tape = Tape::new();
        let x = tape.param(&store, "x");
        assert!(matches!(tape.backward(x), Err(Error::NonScalarLoss(_))));
    }

    #[test]
    fn nan_is_reported_with_op_name() {
        let store = store_with("x", Tensor::vector(vec![f64::NAN, 1.0]));
        let mut tape = Tape::new();
        let x = tape.param(&store, "x");
        let s = tape.sum(x);
        let err = tape.backward(s).unwrap_err();
        assert!(err.to_string().contains("sum"), "{err}");
    }

    #[test]
    fn backward_is_linear() {
        // grad of (a*f + b*g) = a*grad(f) + b*grad(g)
        let store = store_with("x", Tensor::vector(vec![0.5, -1.5, 2.0]));
        let grad_of = |a: f64, b: f64| {
            let mut tape = Tape::new();
            let x = tape.param(&store, "x");
            let f = {
                let sq = tape.mul(x, x);
                tape.sum(sq)
            };
            let g = tape.sum(x);
            let fa = tape.scale(f, a);
            let gb = tape.scale(g, b);
            let loss = tape.add(fa, gb);
            tape.backward(loss).unwrap().get("x").unwrap().clone()
        };
        let gf = grad_of(1.0, 0.0);
        let gg = grad_of(0.0, 1.0);
        let combined = grad_of(2.0, 3.0);
        for i in 0..3 {
            let expect = 2.0 * gf.data()[i] + 3.0 * gg.data()[i];
            assert!((combined.data()[i] - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn max_breaks_ties_toward_lowest_index() {
        let store = store_with("x", Tensor::vector(vec![3.0, 3.0, 1.0]));
        let mut tape = Tape::new();
        let x = tape.param(&store, "x");
        let m = tape.max(x);
        let grads = tape.backward(m).unwrap();
        assert_eq!(grads.get("x").unwrap().data(), &[1.0, 0.0, 0.0]);
    }

    #[test]
    fn grad_check_quadratic() {
        let store = store_with("x", Tensor::scalar(3.0));
        let err = grad_check(
            |p| {
                let mut tape = Tape::new();
                let x = tape.param(p, "x");
                let loss = tape.mul(x, x);
                let v = tape.value(loss).item();
                let g = tape.backward(loss)?;
                Ok((v, g))
            },
            &store,
            1e-4,
        )
        .unwrap();
        assert!(err <= 1e-6, "relative error {err}");
    }

    #[test]
    fn grad_check_reports_kink_without_asserting() {
        // |x| at x = 0: analytic (subgradient 0 via relu pair) differs from
        // the symmetric numeric estimate. Documented failure case.
        let store = store_with("x", Tensor::scalar(0.0));
        let err = grad_check(
            |p| {
                let mut tape = Tape::new();
                let x = tape.param(p, "x");
                let pos = tape.relu(x);
                let nx = tape.scale(x, -1.0);
                let neg = tape.relu(nx);
                let loss = tape.add(pos, neg);
                let v = tape.value(loss).item();
                let g = tape.backward(loss)?;
                Ok((v, g))
            },
            &store,
            1e-4,
        )
        .unwrap();
        // Reported, not asserted small: the kink makes the estimate unreliable.
        eprintln!("grad_check at |x|, x=0: max relative error {err}");
    }

    #[test]
    fn mlp_matches_finite_differences() {
        // Random 3-layer MLP, scalar output; oracle is central differences.
        let mut store = ParamStore::new(7);
        store.add_fan_in("w1", 4, 6);
        store.add_fan_in("w2", 6, 5);
        store.add_fan_in("w3", 5, 1);
        store.add_zeros("b1", vec![6]);
        store.add_zeros("b2", vec![5]);
        store.add_uniform("x", vec![1, 4], 0.5);
        let err = grad_check(
            |p| {
                let mut tape = Tape::new();
                let x = tape.param(p, "x");
                let w1 = tape.param(p, "w1");
                let b1 = tape.param(p, "b1");
                let w2 = tape.param(p, "w2");
                let b2 = tape.param(p, "b2");
                let w3 = tape.param(p, "w3");
                let h1 = tape.matmul(x, w1);
                let h1 = tape.add_row(h1, b1);
                let h1 = tape.relu(h1);
                let h2 = tape.matmul(h1, w2);
                let h2 = tape.add_row(h2, b2);
                let h2 = tape.relu(h2);
                let out = tape.matmul(h2, w3);
                let loss = tape.sum(out);
                let v = tape.value(loss).item();
                let g = tape.backward(loss)?;
                Ok((v, g))
            },
            &store,
            1e-4,
        )
        .unwrap();
        assert!(err <= 1e-4, "relative error {err}");
    }

    #[test]
    fn softmax_and_layer_norm_match_finite_differences() {
        let mut store = ParamStore::new(11);
        store.add_uniform("x", vec![3, 6], 1.0);
        store.add_ones("g", vec![6]);
        store.add_uniform("b", vec![6], 0.1);
        store.add_fan_in("w", 6, 4);
        let err = grad_check(
            |p| {
                let mut tape = Tape::new();
                let x = tape.param(p, "x");
                let g = tape.param(p, "g");
                let b = tape.param(p, "b");
                let w = tape.param(p, "w");
                let n = tape.layer_norm_rows(x, g, b);
                let s = tape.matmul(n, w);
                let s = tape.softmax_rows(s);
                let loss = {
                    let sq = tape.mul(s, s);
                    tape.sum(sq)
                };
                let v = tape.value(loss).item();
                let grads = tape.backward(loss)?;
                Ok((v, grads))
            },
            &store,
            1e-4,
        )
        .unwrap();
        assert!(err <= 1e-4, "relative error {err}");
    }

    #[test]
    fn cross_entropy_matches_finite_differences() {
        let mut store = ParamStore::new(3);
        store.add_uniform("z", vec![4], 2.0);
        let err = grad_check(
            |p| {
                let mut tape = Tape::new();
                let z = tape.param(p, "z");
                let loss = tape.cross_entropy_logits(z, 2);
                let v = tape.value(loss).item();
                let g = tape.backward(loss)?;
                Ok((v, g))
            },
            &store,
            1e-4,
        )
        .unwrap();
        assert!(err <= 1e-4, "relative error {err}");
    }
}
