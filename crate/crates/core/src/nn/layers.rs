//! Building blocks shared by the reference encoder, the acoustic model and the
//! phoneme language model.

use rand::Rng;

use super::graph::{Graph, Segments, Var};
use super::params::{ParamId, ParamStore};
use super::tensor::Mat;

#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
}

impl Linear {
    pub fn new<R: Rng>(store: &mut ParamStore, name: &str, input: usize, output: usize, rng: &mut R) -> Self {
        Linear {
            weight: store.glorot(format!("{name}.weight"), input, output, rng),
            bias: store.zeros(format!("{name}.bias"), 1, output),
        }
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Var {
        let w = g.param(store, self.weight);
        let b = g.param(store, self.bias);
        let h = g.matmul(x, w);
        g.add_row(h, b)
    }
}

/// Kernel-3, stride-1 convolution along the row axis with zero "same" padding.
#[derive(Clone, Debug)]
pub struct Conv1d3 {
    pub proj: Linear,
}

impl Conv1d3 {
    pub fn new<R: Rng>(store: &mut ParamStore, name: &str, input: usize, output: usize, rng: &mut R) -> Self {
        Conv1d3 {
            proj: Linear::new(store, name, 3 * input, output, rng),
        }
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var, segments: &Segments) -> Var {
        let prev = g.shift(x, 1, segments);
        let next = g.shift(x, -1, segments);
        let window = g.concat_cols(&[prev, x, next]);
        self.proj.forward(g, store, window)
    }
}

#[derive(Clone, Debug)]
pub struct LayerNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
}

impl LayerNorm {
    pub fn new(store: &mut ParamStore, name: &str, width: usize) -> Self {
        LayerNorm {
            gamma: store.ones(format!("{name}.gamma"), 1, width),
            beta: store.zeros(format!("{name}.beta"), 1, width),
        }
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Var {
        let gm = g.param(store, self.gamma);
        let bt = g.param(store, self.beta);
        g.layer_norm(x, gm, bt)
    }
}

#[derive(Clone, Debug)]
pub struct Embedding {
    pub table: ParamId,
}

impl Embedding {
    pub fn new<R: Rng>(store: &mut ParamStore, name: &str, count: usize, width: usize, rng: &mut R) -> Self {
        Embedding {
            table: store.uniform(format!("{name}.table"), count, width, 0.1, rng),
        }
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, ids: &[usize]) -> Var {
        let t = g.param(store, self.table);
        g.gather(t, ids)
    }
}

#[derive(Clone, Debug)]
pub struct SelfAttention {
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub out: Linear,
    pub heads: usize,
}

impl SelfAttention {
    pub fn new<R: Rng>(store: &mut ParamStore, name: &str, width: usize, heads: usize, rng: &mut R) -> Self {
        SelfAttention {
            query: Linear::new(store, &format!("{name}.query"), width, width, rng),
            key: Linear::new(store, &format!("{name}.key"), width, width, rng),
            value: Linear::new(store, &format!("{name}.value"), width, width, rng),
            out: Linear::new(store, &format!("{name}.out"), width, width, rng),
            heads,
        }
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var, segments: &Segments) -> Var {
        let q = self.query.forward(g, store, x);
        let k = self.key.forward(g, store, x);
        let v = self.value.forward(g, store, x);
        let a = g.attention(q, k, v, self.heads, segments);
        self.out.forward(g, store, a)
    }
}

/// Pre-norm transformer block: `x + attn(ln(x))`, then `x + ff(ln(x))`.
#[derive(Clone, Debug)]
pub struct TransformerBlock {
    pub norm_attn: LayerNorm,
    pub attn: SelfAttention,
    pub norm_ff: LayerNorm,
    pub ff_in: Linear,
    pub ff_out: Linear,
}

impl TransformerBlock {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        width: usize,
        heads: usize,
        ff_width: usize,
        rng: &mut R,
    ) -> Self {
        TransformerBlock {
            norm_attn: LayerNorm::new(store, &format!("{name}.norm_attn"), width),
            attn: SelfAttention::new(store, &format!("{name}.attn"), width, heads, rng),
            norm_ff: LayerNorm::new(store, &format!("{name}.norm_ff"), width),
            ff_in: Linear::new(store, &format!("{name}.ff_in"), width, ff_width, rng),
            ff_out: Linear::new(store, &format!("{name}.ff_out"), ff_width, width, rng),
        }
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var, segments: &Segments) -> Var {
        let h = self.norm_attn.forward(g, store, x);
        let h = self.attn.forward(g, store, h, segments);
        let x = g.add(x, h);
        let h = self.norm_ff.forward(g, store, x);
        let h = self.ff_in.forward(g, store, h);
        let h = g.relu(h);
        let h = self.ff_out.forward(g, store, h);
        g.add(x, h)
    }
}

#[derive(Clone, Debug)]
pub struct TransformerStack {
    pub blocks: Vec<TransformerBlock>,
    pub final_norm: LayerNorm,
}

impl TransformerStack {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        layers: usize,
        width: usize,
        heads: usize,
        ff_width: usize,
        rng: &mut R,
    ) -> Self {
        let blocks = (0..layers)
            .map(|i| TransformerBlock::new(store, &format!("{name}.{i}"), width, heads, ff_width, rng))
            .collect();
        TransformerStack {
            blocks,
            final_norm: LayerNorm::new(store, &format!("{name}.final_norm"), width),
        }
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, mut x: Var, segments: &Segments) -> Var {
        for b in &self.blocks {
            x = b.forward(g, store, x, segments);
        }
        self.final_norm.forward(g, store, x)
    }
}

/// Sinusoidal position table for the positions of every row of a stacked batch.
pub fn sinusoidal_positions(segments: &Segments, width: usize) -> Mat {
    let rows: usize = segments.iter().map(|&(_, l)| l).sum();
    let mut out = Mat::zeros(rows, width);
    for &(start, len) in segments.iter() {
        for pos in 0..len {
            let row = out.row_mut(start + pos);
            for i in 0..width / 2 {
                let freq = 1.0 / 10000f64.powf(2.0 * i as f64 / width as f64);
                row[2 * i] = (pos as f64 * freq).sin();
                row[2 * i + 1] = (pos as f64 * freq).cos();
            }
        }
    }
    out
}
