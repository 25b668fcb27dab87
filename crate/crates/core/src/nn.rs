//! Parameter storage and transformer building blocks.

use rand::Rng;

use crate::graph::{Graph, Var};
use crate::tensor::Matrix;

pub const LAYER_NORM_EPS: f64 = 1e-5;
const ATTN_MASK: f64 = -1e9;

/// Index of a parameter inside its [`ParamStore`].
pub type PId = usize;

/// Ordered, named collection of trainable matrices. The order is fixed at
/// construction time, so checkpoints and optimizer state line up by index.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    names: Vec<String>,
    mats: Vec<Matrix>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, m: Matrix) -> PId {
        let name = name.into();
        assert!(
            !self.names.contains(&name),
            "duplicate parameter name {name:?}"
        );
        self.names.push(name);
        self.mats.push(m);
        self.mats.len() - 1
    }

    pub fn len(&self) -> usize {
        self.mats.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mats.is_empty()
    }

    pub fn name(&self, p: PId) -> &str {
        &self.names[p]
    }

    pub fn get(&self, p: PId) -> &Matrix {
        &self.mats[p]
    }

    pub fn get_mut(&mut self, p: PId) -> &mut Matrix {
        &mut self.mats[p]
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, &Matrix)> {
        self.names.iter().map(|n| n.as_str()).zip(self.mats.iter())
    }

    pub fn scalar_count(&self) -> usize {
        self.mats.iter().map(|m| m.len()).sum()
    }

    /// Inserts every parameter into the graph as a trainable leaf.
    pub fn attach(&self, g: &mut Graph) -> Attached {
        Attached {
            vars: self.mats.iter().map(|m| g.leaf(m.clone())).collect(),
        }
    }

    /// Inserts every parameter as a constant: inference without gradient
    /// bookkeeping.
    pub fn attach_frozen(&self, g: &mut Graph) -> Attached {
        Attached {
            vars: self.mats.iter().map(|m| g.constant(m.clone())).collect(),
        }
    }
}

/// Graph vars for one attachment of a [`ParamStore`].
pub struct Attached {
    vars: Vec<Var>,
}

impl Attached {
    pub fn var(&self, p: PId) -> Var {
        self.vars[p]
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }
}

/// Xavier/Glorot uniform initialization.
pub fn xavier(rng: &mut impl Rng, rows: usize, cols: usize) -> Matrix {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    Matrix::from_fn(rows, cols, |_, _| rng.gen_range(-bound..bound))
}

/// Inverted-dropout mask: entries are 0 with probability `p`, else 1/(1-p).
pub fn dropout_mask(rng: &mut impl Rng, rows: usize, cols: usize, p: f64) -> Matrix {
    debug_assert!((0.0..1.0).contains(&p));
    let keep = 1.0 / (1.0 - p);
    Matrix::from_fn(rows, cols, |_, _| {
        if rng.gen::<f64>() < p {
            0.0
        } else {
            keep
        }
    })
}

/// Fixed sinusoidal positional encoding table (rows = positions).
pub fn sinusoidal_encoding(len: usize, dim: usize) -> Matrix {
    Matrix::from_fn(len, dim, |pos, c| {
        let i = (c / 2) as f64;
        let angle = pos as f64 / 10000f64.powf(2.0 * i / dim as f64);
        if c % 2 == 0 {
            angle.sin()
        } else {
            angle.cos()
        }
    })
}

#[derive(Debug, Clone)]
pub struct Linear {
    pub w: PId,
    pub b: PId,
}

impl Linear {
    pub fn new(
        store: &mut ParamStore,
        rng: &mut impl Rng,
        name: &str,
        d_in: usize,
        d_out: usize,
    ) -> Self {
        Linear {
            w: store.add(format!("{name}.w"), xavier(rng, d_in, d_out)),
            b: store.add(format!("{name}.b"), Matrix::zeros(1, d_out)),
        }
    }

    pub fn forward(&self, g: &mut Graph, ps: &Attached, x: Var) -> Var {
        let h = g.matmul(x, ps.var(self.w));
        g.add_row_broadcast(h, ps.var(self.b))
    }
}

#[derive(Debug, Clone)]
pub struct LayerNorm {
    pub gain: PId,
    pub bias: PId,
}

impl LayerNorm {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize) -> Self {
        LayerNorm {
            gain: store.add(format!("{name}.gain"), Matrix::ones(1, dim)),
            bias: store.add(format!("{name}.bias"), Matrix::zeros(1, dim)),
        }
    }

    pub fn forward(&self, g: &mut Graph, ps: &Attached, x: Var) -> Var {
        g.layer_norm(x, ps.var(self.gain), ps.var(self.bias), LAYER_NORM_EPS)
    }
}

#[derive(Debug, Clone)]
pub struct MultiHeadAttention {
    q: Linear,
    k: Linear,
    v: Linear,
    out: Linear,
    heads: usize,
}

impl MultiHeadAttention {
    pub fn new(
        store: &mut ParamStore,
        rng: &mut impl Rng,
        name: &str,
        dim: usize,
        heads: usize,
    ) -> Self {
        assert_eq!(dim % heads, 0, "embed dim must divide evenly into heads");
        MultiHeadAttention {
            q: Linear::new(store, rng, &format!("{name}.q"), dim, dim),
            k: Linear::new(store, rng, &format!("{name}.k"), dim, dim),
            v: Linear::new(store, rng, &format!("{name}.v"), dim, dim),
            out: Linear::new(store, rng, &format!("{name}.out"), dim, dim),
            heads: heads,
        }
    }

    /// Attention of `q_in` over `kv_in`. With `causal`, position i attends
    /// only to positions <= i (requires q and kv lengths to match).
    pub fn forward(&self, g: &mut Graph, ps: &Attached, q_in: Var, kv_in: Var, causal: bool) -> Var {
        let dim = q_in.cols;
        let dh = dim / self.heads;
        let q = self.q.forward(g, ps, q_in);
        let k = self.k.forward(g, ps, kv_in);
        let v = self.v.forward(g, ps, kv_in);

        let mask = causal.then(|| {
            g.constant(Matrix::from_fn(q_in.rows, kv_in.rows, |r, c| {
                if c > r {
                    ATTN_MASK
                } else {
                    0.0
                }
            }))
        });

        let mut ctx = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let qh = g.slice_cols(q, h * dh, (h + 1) * dh);
            let kh = g.slice_cols(k, h * dh, (h + 1) * dh);
            let vh = g.slice_cols(v, h * dh, (h + 1) * dh);
            let kt = g.transpose(kh);
            let scores = g.matmul(qh, kt);
            let mut scores = g.scale(scores, 1.0 / (dh as f64).sqrt());
            if let Some(m) = mask {
                scores = g.add(scores, m);
            }
            let probs = g.softmax_rows(scores);
            ctx.push(g.matmul(probs, vh));
        }
        let ctx = g.concat_cols(&ctx);
        self.out.forward(g, ps, ctx)
    }
}

#[derive(Debug, Clone)]
pub struct FeedForward {
    lin1: Linear,
    lin2: Linear,
}

impl FeedForward {
    pub fn new(
        store: &mut ParamStore,
        rng: &mut impl Rng,
        name: &str,
        dim: usize,
        hidden: usize,
    ) -> Self {
        FeedForward {
            lin1: Linear::new(store, rng, &format!("{name}.lin1"), dim, hidden),
            lin2: Linear::new(store, rng, &format!("{name}.lin2"), hidden, dim),
        }
    }

    pub fn forward(&self, g: &mut Graph, ps: &Attached, x: Var) -> Var {
        let h = self.lin1.forward(g, ps, x);
        let h = g.gelu(h);
        self.lin2.forward(g, ps, h)
    }
}

/// Pre-norm self-attention transformer block.
#[derive(Debug, Clone)]
pub struct EncoderBlock {
    ln1: LayerNorm,
    attn: MultiHeadAttention,
    ln2: LayerNorm,
    ff: FeedForward,
}

impl EncoderBlock {
    pub fn new(
        store: &mut ParamStore,
        rng: &mut impl Rng,
        name: &str,
        dim: usize,
        heads: usize,
        hidden: usize,
    ) -> Self {
        EncoderBlock {
            ln1: LayerNorm::new(store, &format!("{name}.ln1"), dim),
            attn: MultiHeadAttention::new(store, rng, &format!("{name}.attn"), dim, heads),
            ln2: LayerNorm::new(store, &format!("{name}.ln2"), dim),
            ff: FeedForward::new(store, rng, &format!("{name}.ff"), dim, hidden),
        }
    }

    pub fn forward(&self, g: &mut Graph, ps: &Attached, x: Var, dropout: Option<&Matrix>) -> Var {
        let n = self.ln1.forward(g, ps, x);
        let a = self.attn.forward(g, ps, n, n, false);
        let a = apply_dropout(g, a, dropout);
        let x = g.add(x, a);
        let n = self.ln2.forward(g, ps, x);
        let f = self.ff.forward(g, ps, n);
        let f = apply_dropout(g, f, dropout);
        g.add(x, f)
    }
}

/// Pre-norm decoder block: self-attention over the queries, cross-attention
/// into an encoded memory, then a feed-forward.
#[derive(Debug, Clone)]
pub struct DecoderBlock {
    ln1: LayerNorm,
    self_attn: MultiHeadAttention,
    ln2: LayerNorm,
    cross_attn: MultiHeadAttention,
    ln3: LayerNorm,
    ff: FeedForward,
}

impl DecoderBlock {
    pub fn new(
        store: &mut ParamStore,
        rng: &mut impl Rng,
        name: &str,
        dim: usize,
        heads: usize,
        hidden: usize,
    ) -> Self {
        DecoderBlock {
            ln1: LayerNorm::new(store, &format!("{name}.ln1"), dim),
            self_attn: MultiHeadAttention::new(store, rng, &format!("{name}.self"), dim, heads),
            ln2: LayerNorm::new(store, &format!("{name}.ln2"), dim),
            cross_attn: MultiHeadAttention::new(store, rng, &format!("{name}.cross"), dim, heads),
            ln3: LayerNorm::new(store, &format!("{name}.ln3"), dim),
            ff: FeedForward::new(store, rng, &format!("{name}.ff"), dim, hidden),
        }
    }

    pub fn forward(&self, g: &mut Graph, ps: &Attached, x: Var, memory: Var) -> Var {
        let n = self.ln1.forward(g, ps, x);
        let a = self.self_attn.forward(g, ps, n, n, false);
        let x = g.add(x, a);
        let n = self.ln2.forward(g, ps, x);
        let a = self.cross_attn.forward(g, ps, n, memory, false);
        let x = g.add(x, a);
        let n = self.ln3.forward(g, ps, x);
        let f = self.ff.forward(g, ps, n);
        g.add(x, f)
    }
}

fn apply_dropout(g: &mut Graph, x: Var, mask: Option<&Matrix>) -> Var {
    match mask {
        Some(m) if m.rows() == x.rows && m.cols() == x.cols => {
            let mv = g.constant(m.clone());
            g.mul(x, mv)
        }
        Some(_) => panic!("dropout mask shape mismatch"),
        None => x,
    }
}
