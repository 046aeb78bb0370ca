//! Tape-based reverse-mode differentiation over 2-D matrices.
//!
//! A batch of variable-length sequences is stacked row-wise; ops that mix
//! rows (shifts for convolution, self-attention) respect the segment table so
//! that no information crosses sequence boundaries.

use std::collections::HashMap;
use std::rc::Rc;

use super::params::{Grads, ParamId, ParamStore};
use super::tensor::{gemm, gemm_into, Mat};

/// `(start_row, len)` of each sequence in a stacked batch.
pub type Segments = Rc<Vec<(usize, usize)>>;

pub fn single_segment(len: usize) -> Segments {
    Rc::new(vec![(0, len)])
}

pub fn segments_from_lengths(lengths: &[usize]) -> Segments {
    let mut start = 0;
    let mut out = Vec::with_capacity(lengths.len());
    for &len in lengths {
        out.push((start, len));
        start += len;
    }
    Rc::new(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

enum Op {
    Leaf,
    Param,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    AddRow(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    Gather(Var, Vec<usize>),
    Shift(Var, isize, Segments),
    ConcatCols(Vec<Var>),
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Mat,
        inv_std: Vec<f64>,
    },
    Attention {
        q: Var,
        k: Var,
        v: Var,
        heads: usize,
        segments: Segments,
        probs: Vec<Mat>,
    },
    RepeatRows(Var, Vec<usize>),
    StraightThrough(Var),
    MeanAbsErr(Var, Mat),
    MeanSqErr(Var, Mat),
    RowSqDistMean(Var, Var),
    CrossEntropy {
        logits: Var,
        targets: Vec<(usize, usize)>,
        probs: Mat,
    },
    WeightedSum(Vec<(Var, f64)>),
}

struct Node {
    value: Mat,
    op: Op,
}

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
    params: HashMap<(u64, ParamId), Var>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, value: Mat, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Mat {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value.data[0]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Constant input; receives no gradient outside the graph.
    pub fn input(&mut self, value: Mat) -> Var {
        self.push(value, Op::Leaf)
    }

    /// Constant copy of `v`'s value (stop-gradient).
    pub fn detach(&mut self, v: Var) -> Var {
        let value = self.value(v).clone();
        self.input(value)
    }

    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        let key = (store.uid(), id);
        if let Some(&v) = self.params.get(&key) {
            return v;
        }
        let v = self.push(store.get(id).clone(), Op::Param);
        self.params.insert(key, v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).matmul(self.value(b));
        self.push(value, Op::MatMul(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let mut value = self.value(a).clone();
        assert_eq!(value.shape(), self.value(b).shape(), "add shape mismatch");
        value.add_assign(self.value(b));
        self.push(value, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let mut value = self.value(a).clone();
        assert_eq!(value.shape(), self.value(b).shape(), "sub shape mismatch");
        for (x, y) in value.data.iter_mut().zip(&self.value(b).data) {
            *x -= y;
        }
        self.push(value, Op::Sub(a, b))
    }

    /// Broadcast-add a `1×C` row to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let mut value = self.value(a).clone();
        let r = self.value(row);
        assert_eq!((1, value.cols), r.shape(), "add_row shape mismatch");
        for i in 0..value.rows {
            for (x, b) in value.row_mut(i).iter_mut().zip(&r.data) {
                *x += b;
            }
        }
        self.push(value, Op::AddRow(a, row))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let mut value = self.value(a).clone();
        value.scale_in_place(s);
        self.push(value, Op::Scale(a, s))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let mut value = self.value(a).clone();
        value.data.iter_mut().for_each(|x| *x = x.max(0.0));
        self.push(value, Op::Relu(a))
    }

    /// Rows of `table` selected by `indices`.
    pub fn gather(&mut self, table: Var, indices: &[usize]) -> Var {
        let t = self.value(table);
        let mut value = Mat::zeros(indices.len(), t.cols);
        for (i, &idx) in indices.iter().enumerate() {
            value.row_mut(i).copy_from_slice(t.row(idx));
        }
        self.push(value, Op::Gather(table, indices.to_vec()))
    }

    /// `out[i] = a[i - offset]` inside each segment, zero where that falls outside.
    pub fn shift(&mut self, a: Var, offset: isize, segments: &Segments) -> Var {
        let src = self.value(a);
        let mut value = Mat::zeros(src.rows, src.cols);
        for &(start, len) in segments.iter() {
            for i in 0..len {
                let j = i as isize - offset;
                if j >= 0 && (j as usize) < len {
                    value.row_mut(start + i).copy_from_slice(src.row(start + j as usize));
                }
            }
        }
        self.push(value, Op::Shift(a, offset, segments.clone()))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let rows = self.value(parts[0]).rows;
        let cols: usize = parts.iter().map(|&p| self.value(p).cols).sum();
        let mut value = Mat::zeros(rows, cols);
        let mut off = 0;
        for &p in parts {
            let m = self.value(p);
            assert_eq!(m.rows, rows, "concat_cols row mismatch");
            for r in 0..rows {
                value.row_mut(r)[off..off + m.cols].copy_from_slice(m.row(r));
            }
            off += m.cols;
        }
        self.push(value, Op::ConcatCols(parts.to_vec()))
    }

    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Var {
        const EPS: f64 = 1e-5;
        let xv = self.value(x);
        let (rows, cols) = xv.shape();
        let mut xhat = Mat::zeros(rows, cols);
        let mut inv_std = vec![0.0; rows];
        for r in 0..rows {
            let row = xv.row(r);
            let mean = row.iter().sum::<f64>() / cols as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / cols as f64;
            let is = 1.0 / (var + EPS).sqrt();
            inv_std[r] = is;
            for (o, v) in xhat.row_mut(r).iter_mut().zip(row) {
                *o = (v - mean) * is;
            }
        }
        let g = self.value(gamma);
        let b = self.value(beta);
        let mut value = xhat.clone();
        for r in 0..rows {
            for c in 0..cols {
                let v = value.get(r, c) * g.data[c] + b.data[c];
                value.set(r, c, v);
            }
        }
        self.push(
            value,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            },
        )
    }

    /// Multi-head scaled dot-product self-attention, per segment.
    pub fn attention(&mut self, q: Var, k: Var, v: Var, heads: usize, segments: &Segments) -> Var {
        let (qv, kv, vv) = (self.value(q), self.value(k), self.value(v));
        let (rows, width) = qv.shape();
        assert_eq!(width % heads, 0, "width must divide into heads");
        let dh = width / heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut out = Mat::zeros(rows, width);
        let mut probs = Vec::with_capacity(segments.len() * heads);
        for &(start, len) in segments.iter() {
            for h in 0..heads {
                let qb = qv.view().block(start, len, h * dh, dh);
                let kb = kv.view().block(start, len, h * dh, dh);
                let vb = vv.view().block(start, len, h * dh, dh);
                let mut s = Mat::zeros(len, len);
                gemm(scale, qb, false, kb, true, 0.0, &mut s);
                softmax_rows_in_place(&mut s);
                gemm_into(
                    1.0,
                    s.view(),
                    false,
                    vb,
                    false,
                    0.0,
                    &mut out.data,
                    start * width + h * dh,
                    len,
                    dh,
                    width,
                );
                probs.push(s);
            }
        }
        self.push(
            out,
            Op::Attention {
                q,
                k,
                v,
                heads,
                segments: segments.clone(),
                probs,
            },
        )
    }

    /// Row `i` of `a` repeated `counts[i]` times.
    pub fn repeat_rows(&mut self, a: Var, counts: &[usize]) -> Var {
        let src = self.value(a);
        assert_eq!(src.rows, counts.len(), "repeat_rows count mismatch");
        let total: usize = counts.iter().sum();
        let mut value = Mat::zeros(total, src.cols);
        let mut o = 0;
        for (i, &c) in counts.iter().enumerate() {
            for _ in 0..c {
                value.row_mut(o).copy_from_slice(src.row(i));
                o += 1;
            }
        }
        self.push(value, Op::RepeatRows(a, counts.to_vec()))
    }

    /// Forward value `quantized`, gradient copied unchanged to `continuous`.
    pub fn straight_through(&mut self, continuous: Var, quantized: Mat) -> Var {
        assert_eq!(self.value(continuous).shape(), quantized.shape());
        self.push(quantized, Op::StraightThrough(continuous))
    }

    pub fn mean_abs_err(&mut self, pred: Var, target: &Mat) -> Var {
        let p = self.value(pred);
        assert_eq!(p.shape(), target.shape(), "mean_abs_err shape mismatch");
        let n = p.data.len().max(1) as f64;
        let loss = p.data.iter().zip(&target.data).map(|(a, b)| (a - b).abs()).sum::<f64>() / n;
        self.push(Mat::scalar(loss), Op::MeanAbsErr(pred, target.clone()))
    }

    pub fn mean_sq_err(&mut self, pred: Var, target: &Mat) -> Var {
        let p = self.value(pred);
        assert_eq!(p.shape(), target.shape(), "mean_sq_err shape mismatch");
        let n = p.data.len().max(1) as f64;
        let loss = p.data.iter().zip(&target.data).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / n;
        self.push(Mat::scalar(loss), Op::MeanSqErr(pred, target.clone()))
    }

    /// Mean over rows of the squared Euclidean distance between `a[r]` and `b[r]`.
    pub fn row_sq_dist_mean(&mut self, a: Var, b: Var) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        assert_eq!(av.shape(), bv.shape(), "row_sq_dist_mean shape mismatch");
        let n = av.rows.max(1) as f64;
        let loss = av.data.iter().zip(&bv.data).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / n;
        self.push(Mat::scalar(loss), Op::RowSqDistMean(a, b))
    }

    /// Mean softmax cross-entropy over `(row, class)` targets; zero when empty.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[(usize, usize)]) -> Var {
        let mut probs = self.value(logits).clone();
        softmax_rows_in_place(&mut probs);
        let loss = if targets.is_empty() {
            0.0
        } else {
            targets
                .iter()
                .map(|&(r, c)| -probs.get(r, c).max(f64::MIN_POSITIVE).ln())
                .sum::<f64>()
                / targets.len() as f64
        };
        self.push(
            Mat::scalar(loss),
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                probs,
            },
        )
    }

    pub fn weighted_sum(&mut self, terms: &[(Var, f64)]) -> Var {
        let total: f64 = terms.iter().map(|&(v, w)| self.scalar(v) * w).sum();
        self.push(Mat::scalar(total), Op::WeightedSum(terms.to_vec()))
    }

    /// Reverse pass from scalar `root`; returns parameter gradients.
    pub fn backward(&self, root: Var, store: &ParamStore) -> Grads {
        let mut grads = Grads::zeros_like(store);
        self.backward_into(root, store, &mut grads);
        grads
    }

    pub fn backward_into(&self, root: Var, store: &ParamStore, out: &mut Grads) {
        let node_grads = self.node_grads(root);
        self.collect(&node_grads, store, out);
    }

    /// Parameter gradients for several stores from a single reverse pass.
    pub fn backward_multi(&self, root: Var, stores: &[&ParamStore]) -> Vec<Grads> {
        let node_grads = self.node_grads(root);
        stores
            .iter()
            .map(|s| {
                let mut g = Grads::zeros_like(s);
                self.collect(&node_grads, s, &mut g);
                g
            })
            .collect()
    }

    fn collect(&self, node_grads: &[Option<Mat>], store: &ParamStore, out: &mut Grads) {
        for (&(uid, id), &var) in &self.params {
            if uid != store.uid() {
                continue;
            }
            if let Some(g) = &node_grads[var.0] {
                out.accumulate(id, g);
            }
        }
    }

    /// Gradient of `root` with respect to every node (None where unreachable).
    pub fn node_grads(&self, root: Var) -> Vec<Option<Mat>> {
        assert_eq!(self.value(root).shape(), (1, 1), "backward root must be scalar");
        let mut g: Vec<Option<Mat>> = (0..self.nodes.len()).map(|_| None).collect();
        g[root.0] = Some(Mat::scalar(1.0));
        for i in (0..=root.0).rev() {
            let Some(dy) = g[i].take() else { continue };
            self.propagate(i, &dy, &mut g);
            g[i] = Some(dy);
        }
        g
    }

    fn propagate(&self, i: usize, dy: &Mat, g: &mut [Option<Mat>]) {
        let node = &self.nodes[i];
        match &node.op {
            Op::Leaf | Op::Param => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let mut da = Mat::zeros(av.rows, av.cols);
                gemm(1.0, dy.view(), false, bv.view(), true, 0.0, &mut da);
                let mut db = Mat::zeros(bv.rows, bv.cols);
                gemm(1.0, av.view(), true, dy.view(), false, 0.0, &mut db);
                acc(g, *a, da);
                acc(g, *b, db);
            }
            Op::Add(a, b) => {
                acc(g, *a, dy.clone());
                acc(g, *b, dy.clone());
            }
            Op::Sub(a, b) => {
                acc(g, *a, dy.clone());
                let mut neg = dy.clone();
                neg.scale_in_place(-1.0);
                acc(g, *b, neg);
            }
            Op::AddRow(a, row) => {
                acc(g, *a, dy.clone());
                let mut dr = Mat::zeros(1, dy.cols);
                for r in 0..dy.rows {
                    for (o, v) in dr.data.iter_mut().zip(dy.row(r)) {
                        *o += v;
                    }
                }
                acc(g, *row, dr);
            }
            Op::Scale(a, s) => {
                let mut d = dy.clone();
                d.scale_in_place(*s);
                acc(g, *a, d);
            }
            Op::Relu(a) => {
                let mut d = dy.clone();
                for (dv, y) in d.data.iter_mut().zip(&node.value.data) {
                    if *y <= 0.0 {
                        *dv = 0.0;
                    }
                }
                acc(g, *a, d);
            }
            Op::Gather(table, indices) => {
                let t = self.value(*table);
                let mut d = Mat::zeros(t.rows, t.cols);
                for (r, &idx) in indices.iter().enumerate() {
                    for (o, v) in d.row_mut(idx).iter_mut().zip(dy.row(r)) {
                        *o += v;
                    }
                }
                acc(g, *table, d);
            }
            Op::Shift(a, offset, segments) => {
                let mut d = Mat::zeros(dy.rows, dy.cols);
                for &(start, len) in segments.iter() {
                    for i in 0..len {
                        let j = i as isize - offset;
                        if j >= 0 && (j as usize) < len {
                            let src = dy.row(start + i).to_vec();
                            for (o, v) in d.row_mut(start + j as usize).iter_mut().zip(src) {
                                *o += v;
                            }
                        }
                    }
                }
                acc(g, *a, d);
            }
            Op::ConcatCols(parts) => {
                let mut off = 0;
                for &p in parts {
                    let cols = self.value(p).cols;
                    let mut d = Mat::zeros(dy.rows, cols);
                    for r in 0..dy.rows {
                        d.row_mut(r).copy_from_slice(&dy.row(r)[off..off + cols]);
                    }
                    off += cols;
                    acc(g, p, d);
                }
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            } => {
                let gv = self.value(*gamma);
                let (rows, cols) = xhat.shape();
                let mut dgamma = Mat::zeros(1, cols);
                let mut dbeta = Mat::zeros(1, cols);
                let mut dx = Mat::zeros(rows, cols);
                let n = cols as f64;
                for r in 0..rows {
                    let dyr = dy.row(r);
                    let xh = xhat.row(r);
                    let mut sum_dxh = 0.0;
                    let mut sum_dxh_xh = 0.0;
                    for c in 0..cols {
                        dgamma.data[c] += dyr[c] * xh[c];
                        dbeta.data[c] += dyr[c];
                        let dxh = dyr[c] * gv.data[c];
                        sum_dxh += dxh;
                        sum_dxh_xh += dxh * xh[c];
                    }
                    let is = inv_std[r];
                    let out = dx.row_mut(r);
                    for c in 0..cols {
                        let dxh = dyr[c] * gv.data[c];
                        out[c] = is / n * (n * dxh - sum_dxh - xh[c] * sum_dxh_xh);
                    }
                }
                acc(g, *x, dx);
                acc(g, *gamma, dgamma);
                acc(g, *beta, dbeta);
            }
            Op::Attention {
                q,
                k,
                v,
                heads,
                segments,
                probs,
            } => {
                let (qv, kv, vv) = (self.value(*q), self.value(*k), self.value(*v));
                let (rows, width) = qv.shape();
                let dh = width / heads;
                let scale = 1.0 / (dh as f64).sqrt();
                let mut dq = Mat::zeros(rows, width);
                let mut dk = Mat::zeros(rows, width);
                let mut dv = Mat::zeros(rows, width);
                let mut pi = 0;
                for &(start, len) in segments.iter() {
                    for h in 0..*heads {
                        let p = &probs[pi];
                        pi += 1;
                        let col = h * dh;
                        let dyb = dy.view().block(start, len, col, dh);
                        let qb = qv.view().block(start, len, col, dh);
                        let kb = kv.view().block(start, len, col, dh);
                        let vb = vv.view().block(start, len, col, dh);
                        let off = start * width + col;
                        // dV = P^T dO
                        gemm_into(1.0, p.view(), true, dyb, false, 0.0, &mut dv.data, off, len, dh, width);
                        // dP = dO V^T
                        let mut dp = Mat::zeros(len, len);
                        gemm(1.0, dyb, false, vb, true, 0.0, &mut dp);
                        // dS = P * (dP - rowsum(dP * P))
                        for r in 0..len {
                            let dot: f64 = dp.row(r).iter().zip(p.row(r)).map(|(a, b)| a * b).sum();
                            let pr = p.row(r).to_vec();
                            for (d, pv) in dp.row_mut(r).iter_mut().zip(pr) {
                                *d = pv * (*d - dot);
                            }
                        }
                        gemm_into(scale, dp.view(), false, kb, false, 0.0, &mut dq.data, off, len, dh, width);
                        gemm_into(scale, dp.view(), true, qb, false, 0.0, &mut dk.data, off, len, dh, width);
                    }
                }
                acc(g, *q, dq);
                acc(g, *k, dk);
                acc(g, *v, dv);
            }
            Op::RepeatRows(a, counts) => {
                let cols = dy.cols;
                let mut d = Mat::zeros(counts.len(), cols);
                let mut o = 0;
                for (i, &c) in counts.iter().enumerate() {
                    for _ in 0..c {
                        let src = dy.row(o);
                        for (x, v) in d.row_mut(i).iter_mut().zip(src) {
                            *x += v;
                        }
                        o += 1;
                    }
                }
                acc(g, *a, d);
            }
            Op::StraightThrough(a) => acc(g, *a, dy.clone()),
            Op::MeanAbsErr(pred, target) => {
                let p = self.value(*pred);
                let n = p.data.len().max(1) as f64;
                let s = dy.data[0] / n;
                let data = p
                    .data
                    .iter()
                    .zip(&target.data)
                    .map(|(a, b)| {
                        let d = a - b;
                        if d > 0.0 {
                            s
                        } else if d < 0.0 {
                            -s
                        } else {
                            0.0
                        }
                    })
                    .collect();
                acc(g, *pred, Mat::from_vec(p.rows, p.cols, data));
            }
            Op::MeanSqErr(pred, target) => {
                let p = self.value(*pred);
                let n = p.data.len().max(1) as f64;
                let s = 2.0 * dy.data[0] / n;
                let data = p.data.iter().zip(&target.data).map(|(a, b)| s * (a - b)).collect();
                acc(g, *pred, Mat::from_vec(p.rows, p.cols, data));
            }
            Op::RowSqDistMean(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let s = 2.0 * dy.data[0] / av.rows.max(1) as f64;
                let da: Vec<f64> = av.data.iter().zip(&bv.data).map(|(x, y)| s * (x - y)).collect();
                let db: Vec<f64> = da.iter().map(|v| -v).collect();
                acc(g, *a, Mat::from_vec(av.rows, av.cols, da));
                acc(g, *b, Mat::from_vec(bv.rows, bv.cols, db));
            }
            Op::CrossEntropy { logits, targets, probs } => {
                if targets.is_empty() {
                    return;
                }
                let s = dy.data[0] / targets.len() as f64;
                let mut d = Mat::zeros(probs.rows, probs.cols);
                for &(r, c) in targets {
                    for (o, p) in d.row_mut(r).iter_mut().zip(probs.row(r)) {
                        *o += s * p;
                    }
                    let v = d.get(r, c) - s;
                    d.set(r, c, v);
                }
                acc(g, *logits, d);
            }
            Op::WeightedSum(terms) => {
                for &(v, w) in terms {
                    acc(g, v, Mat::scalar(dy.data[0] * w));
                }
            }
        }
    }
}

fn acc(g: &mut [Option<Mat>], v: Var, d: Mat) {
    match &mut g[v.0] {
        Some(existing) => existing.add_assign(&d),
        slot @ None => *slot = Some(d),
    }
}

pub fn softmax_rows_in_place(m: &mut Mat) {
    for r in 0..m.rows {
        let row = m.row_mut(r);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_mat(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Mat {
        Mat::from_vec(r, c, (0..r * c).map(|_| rng.gen_range(-1.0..1.0)).collect())
    }

    /// Central-difference check of d(loss)/d(param) for every scalar of every parameter.
    fn check<F>(store: &mut ParamStore, f: F)
    where
        F: Fn(&mut Graph, &ParamStore) -> Var,
    {
        let mut g = Graph::new();
        let root = f(&mut g, store);
        let grads = g.backward(root, store);
        let h = 1e-5;
        for id in store.ids().collect::<Vec<_>>() {
            for i in 0..store.get(id).data.len() {
                let orig = store.get(id).data[i];
                store.get_mut(id).data[i] = orig + h;
                let mut gp = Graph::new();
                let rp = f(&mut gp, store);
                let lp = gp.scalar(rp);
                store.get_mut(id).data[i] = orig - h;
                let mut gm = Graph::new();
                let rm = f(&mut gm, store);
                let lm = gm.scalar(rm);
                store.get_mut(id).data[i] = orig;
                let fd = (lp - lm) / (2.0 * h);
                let an = grads.get(id).data[i];
                let tol = 1e-6 + 1e-4 * fd.abs().max(an.abs());
                assert!(
                    (fd - an).abs() <= tol,
                    "{}[{i}]: finite diff {fd} vs analytic {an}",
                    store.name(id)
                );
            }
        }
    }

    #[test]
    fn gradients_of_dense_ops() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut store = ParamStore::new();
        let x = store.add("x", rand_mat(&mut rng, 5, 4));
        let w = store.add("w", rand_mat(&mut rng, 4, 3));
        let b = store.add("b", rand_mat(&mut rng, 1, 3));
        let gamma = store.add("gamma", rand_mat(&mut rng, 1, 3));
        let beta = store.add("beta", rand_mat(&mut rng, 1, 3));
        let table = store.add("table", rand_mat(&mut rng, 4, 3));
        let target = rand_mat(&mut rng, 5, 3);
        let segs = segments_from_lengths(&[2, 3]);
        check(&mut store, |g, s| {
            let xv = g.param(s, x);
            let wv = g.param(s, w);
            let bv = g.param(s, b);
            let h = g.matmul(xv, wv);
            let h = g.add_row(h, bv);
            let gm = g.param(s, gamma);
            let bt = g.param(s, beta);
            let h = g.layer_norm(h, gm, bt);
            let prev = g.shift(h, 1, &segs);
            let next = g.shift(h, -1, &segs);
            let cat = g.concat_cols(&[prev, h, next]);
            let tv = g.param(s, table);
            let emb = g.gather(tv, &[0, 3, 3, 1, 2]);
            let emb2 = g.concat_cols(&[emb, emb, emb]);
            let mix = g.add(cat, emb2);
            let mix = g.scale(mix, 0.7);
            let sq = g.mean_sq_err(mix, &Mat::zeros(5, 9));
            let d = g.sub(h, emb);
            let mae = g.mean_sq_err(d, &target);
            let ce = g.cross_entropy(h, &[(0, 1), (3, 2), (4, 0)]);
            g.weighted_sum(&[(sq, 1.0), (mae, 0.5), (ce, 2.0)])
        });
    }

    #[test]
    fn gradients_of_attention_and_repeat() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut store = ParamStore::new();
        let q = store.add("q", rand_mat(&mut rng, 5, 4));
        let k = store.add("k", rand_mat(&mut rng, 5, 4));
        let v = store.add("v", rand_mat(&mut rng, 5, 4));
        let a = store.add("a", rand_mat(&mut rng, 3, 4));
        let b = store.add("b", rand_mat(&mut rng, 3, 4));
        let segs = segments_from_lengths(&[3, 2]);
        let target = rand_mat(&mut rng, 5, 4);
        let t2 = rand_mat(&mut rng, 6, 4);
        check(&mut store, |g, s| {
            let (qv, kv, vv) = (g.param(s, q), g.param(s, k), g.param(s, v));
            let o = g.attention(qv, kv, vv, 2, &segs);
            let l1 = g.mean_sq_err(o, &target);
            let av = g.param(s, a);
            let rep = g.repeat_rows(av, &[1, 3, 2]);
            let l2 = g.mean_sq_err(rep, &t2);
            let bv = g.param(s, b);
            let l3 = g.row_sq_dist_mean(av, bv);
            let r = g.relu(av);
            let l4 = g.mean_sq_err(r, &Mat::filled(3, 4, 0.3));
            g.weighted_sum(&[(l1, 1.0), (l2, 1.0), (l3, 0.25), (l4, 1.0)])
        });
    }

    #[test]
    fn attention_does_not_cross_segments() {
        let mut g = Graph::new();
        let q = g.input(Mat::from_vec(3, 2, vec![1., 0., 0., 1., 1., 1.]));
        let mut vals = Mat::from_vec(3, 2, vec![1., 2., 3., 4., 5., 6.]);
        let v = g.input(vals.clone());
        let segs = segments_from_lengths(&[2, 1]);
        let o1 = g.attention(q, q, v, 1, &segs);
        let out1 = g.value(o1).clone();
        // Single-row segment attends only to itself.
        assert_eq!(out1.row(2), &[5., 6.]);
        vals.set(2, 0, 100.0);
        let v2 = g.input(vals);
        let o2 = g.attention(q, q, v2, 1, &segs);
        assert_eq!(g.value(o2).row(0), out1.row(0));
    }

    #[test]
    fn straight_through_copies_gradient() {
        let mut store = ParamStore::new();
        let ze = store.add("ze", Mat::from_vec(2, 2, vec![0.1, 0.2, 0.3, 0.4]));
        let mut g = Graph::new();
        let zv = g.param(&store, ze);
        let st = g.straight_through(zv, Mat::from_vec(2, 2, vec![1., 1., 0., 0.]));
        let l = g.mean_sq_err(st, &Mat::zeros(2, 2));
        let grads = g.backward(l, &store);
        // d/dzq of mean(zq^2) = zq / 2, copied verbatim onto ze.
        assert_eq!(grads.get(ze).data, vec![0.5, 0.5, 0.0, 0.0]);
    }

    #[test]
    fn empty_cross_entropy_is_zero() {
        let mut g = Graph::new();
        let l = g.input(Mat::zeros(3, 4));
        let ce = g.cross_entropy(l, &[]);
        assert_eq!(g.scalar(ce), 0.0);
    }
}
