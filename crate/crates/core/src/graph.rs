//! Reverse-mode automatic differentiation over [`Matrix`] values.
//!
//! A [`Graph`] is a write-once tape: every operation appends a node holding
//! the forward value and a backward closure. Calling [`Graph::backward`]
//! walks the tape in reverse and accumulates gradients for every node that
//! can reach a trainable leaf. Graphs are rebuilt per training step, which at
//! this scale costs microseconds and keeps the engine free of any hidden
//! state, so identical inputs always produce identical tapes.

use crate::tensor::Matrix;

#[derive(Clone, Copy, Debug)]
pub struct Var {
    pub id: usize,
    pub rows: usize,
    pub cols: usize,
}

type BackFn = Box<dyn Fn(&Matrix, &[Matrix], &mut [Option<Matrix>])>;

#[derive(Default)]
pub struct Graph {
    values: Vec<Matrix>,
    backs: Vec<Option<BackFn>>,
    requires: Vec<bool>,
}

/// Gradients produced by one backward pass, indexed by node id.
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Matrix> {
        self.grads.get(v.id).and_then(|g| g.as_ref())
    }

    /// Gradient of a node, zeros if it never received one.
    pub fn get_or_zeros(&self, v: Var) -> Matrix {
        self.get(v)
            .cloned()
            .unwrap_or_else(|| Matrix::zeros(v.rows, v.cols))
    }
}

fn accum(grads: &mut [Option<Matrix>], id: usize, delta: Matrix) {
    match &mut grads[id] {
        Some(g) => g.add_assign(&delta),
        slot @ None => *slot = Some(delta),
    }
}

impl Graph {
    pub fn new() -> Self {
        Graph::default()
    }

    fn push(&mut self, value: Matrix, requires: bool, back: Option<BackFn>) -> Var {
        let id = self.values.len();
        let var = Var {
            id,
            rows: value.rows(),
            cols: value.cols(),
        };
        self.values.push(value);
        self.requires.push(requires);
        self.backs.push(if requires { back } else { None });
        var
    }

    /// Trainable leaf: gradients are collected for it.
    pub fn leaf(&mut self, m: Matrix) -> Var {
        self.push(m, true, None)
    }

    /// Non-trainable value: no gradient flows into it.
    pub fn constant(&mut self, m: Matrix) -> Var {
        self.push(m, false, None)
    }

    pub fn scalar_const(&mut self, v: f64) -> Var {
        self.constant(Matrix::scalar(v))
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.values[v.id]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn req(&self, v: Var) -> bool {
        self.requires[v.id]
    }

    pub fn backward(&self, loss: Var) -> Gradients {
        assert_eq!(
            (loss.rows, loss.cols),
            (1, 1),
            "backward expects a scalar loss"
        );
        let mut grads: Vec<Option<Matrix>> = vec![None; self.values.len()];
        grads[loss.id] = Some(Matrix::scalar(1.0));
        for i in (0..=loss.id).rev() {
            let Some(g) = grads[i].take() else { continue };
            if let Some(back) = &self.backs[i] {
                back(&g, &self.values, &mut grads);
            }
            grads[i] = Some(g);
        }
        Gradients { grads }
    }

    // ---- elementwise binary ----

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        assert_eq!((a.rows, a.cols), (b.rows, b.cols), "add shape mismatch");
        let mut out = self.values[a.id].clone();
        out.add_assign(&self.values[b.id]);
        let (ar, br) = (self.req(a), self.req(b));
        self.push(
            out,
            ar || br,
            Some(Box::new(move |g, _v, grads| {
                if ar {
                    accum(grads, a.id, g.clone());
                }
                if br {
                    accum(grads, b.id, g.clone());
                }
            })),
        )
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        assert_eq!((a.rows, a.cols), (b.rows, b.cols), "sub shape mismatch");
        let out = Matrix::from_fn(a.rows, a.cols, |r, c| {
            self.values[a.id].at(r, c) - self.values[b.id].at(r, c)
        });
        let (ar, br) = (self.req(a), self.req(b));
        self.push(
            out,
            ar || br,
            Some(Box::new(move |g, _v, grads| {
                if ar {
                    accum(grads, a.id, g.clone());
                }
                if br {
                    accum(grads, b.id, g.scale(-1.0));
                }
            })),
        )
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        assert_eq!((a.rows, a.cols), (b.rows, b.cols), "mul shape mismatch");
        let out = Matrix::from_fn(a.rows, a.cols, |r, c| {
            self.values[a.id].at(r, c) * self.values[b.id].at(r, c)
        });
        let (ar, br) = (self.req(a), self.req(b));
        self.push(
            out,
            ar || br,
            Some(Box::new(move |g, v, grads| {
                if ar {
                    let d = Matrix::from_fn(g.rows(), g.cols(), |r, c| {
                        g.at(r, c) * v[b.id].at(r, c)
                    });
                    accum(grads, a.id, d);
                }
                if br {
                    let d = Matrix::from_fn(g.rows(), g.cols(), |r, c| {
                        g.at(r, c) * v[a.id].at(r, c)
                    });
                    accum(grads, b.id, d);
                }
            })),
        )
    }

    pub fn div(&mut self, a: Var, b: Var) -> Var {
        assert_eq!((a.rows, a.cols), (b.rows, b.cols), "div shape mismatch");
        let out = Matrix::from_fn(a.rows, a.cols, |r, c| {
            self.values[a.id].at(r, c) / self.values[b.id].at(r, c)
        });
        let (ar, br) = (self.req(a), self.req(b));
        let out_var = self.push(
            out,
            ar || br,
            None, // placeholder, replaced below to capture own id
        );
        let oid = out_var.id;
        if ar || br {
            self.backs[oid] = Some(Box::new(move |g, v, grads| {
                if ar {
                    let d = Matrix::from_fn(g.rows(), g.cols(), |r, c| {
                        g.at(r, c) / v[b.id].at(r, c)
                    });
                    accum(grads, a.id, d);
                }
                if br {
                    let d = Matrix::from_fn(g.rows(), g.cols(), |r, c| {
                        -g.at(r, c) * v[oid].at(r, c) / v[b.id].at(r, c)
                    });
                    accum(grads, b.id, d);
                }
            }));
        }
        out_var
    }

    pub fn min_elem(&mut self, a: Var, b: Var) -> Var {
        assert_eq!((a.rows, a.cols), (b.rows, b.cols));
        let out = Matrix::from_fn(a.rows, a.cols, |r, c| {
            self.values[a.id].at(r, c).min(self.values[b.id].at(r, c))
        });
        let (ar, br) = (self.req(a), self.req(b));
        self.push(
            out,
            ar || br,
            Some(Box::new(move |g, v, grads| {
                // subgradient: ties go to `a`
                let pick_a = |r: usize, c: usize| v[a.id].at(r, c) <= v[b.id].at(r, c);
                if ar {
                    let d = Matrix::from_fn(g.rows(), g.cols(), |r, c| {
                        if pick_a(r, c) { g.at(r, c) } else { 0.0 }
                    });
                    accum(grads, a.id, d);
                }
                if br {
                    let d = Matrix::from_fn(g.rows(), g.cols(), |r, c| {
                        if pick_a(r, c) { 0.0 } else { g.at(r, c) }
                    });
                    accum(grads, b.id, d);
                }
            })),
        )
    }

    pub fn max_elem(&mut self, a: Var, b: Var) -> Var {
        assert_eq!((a.rows, a.cols), (b.rows, b.cols));
        let out = Matrix::from_fn(a.rows, a.cols, |r, c| {
            self.values[a.id].at(r, c).max(self.values[b.id].at(r, c))
        });
        let (ar, br) = (self.req(a), self.req(b));
        self.push(
            out,
            ar || br,
            Some(Box::new(move |g, v, grads| {
                let pick_a = |r: usize, c: usize| v[a.id].at(r, c) >= v[b.id].at(r, c);
                if ar {
                    let d = Matrix::from_fn(g.rows(), g.cols(), |r, c| {
                        if pick_a(r, c) { g.at(r, c) } else { 0.0 }
                    });
                    accum(grads, a.id, d);
                }
                if br {
                    let d = Matrix::from_fn(g.rows(), g.cols(), |r, c| {
                        if pick_a(r, c) { 0.0 } else { g.at(r, c) }
                    });
                    accum(grads, b.id, d);
                }
            })),
        )
    }

    // ---- scalar ops ----

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let out = self.values[a.id].scale(s);
        let ar = self.req(a);
        self.push(
            out,
            ar,
            Some(Box::new(move |g, _v, grads| {
                accum(grads, a.id, g.scale(s));
            })),
        )
    }

    pub fn add_scalar(&mut self, a: Var, s: f64) -> Var {
        let out = self.values[a.id].map(|x| x + s);
        let ar = self.req(a);
        self.push(
            out,
            ar,
            Some(Box::new(move |g, _v, grads| {
                accum(grads, a.id, g.clone());
            })),
        )
    }

    // ---- linear algebra ----

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(a.cols, b.rows, "matmul shape mismatch");
        let out = self.values[a.id].matmul(&self.values[b.id]);
        let (ar, br) = (self.req(a), self.req(b));
        self.push(
            out,
            ar || br,
            Some(Box::new(move |g, v, grads| {
                if ar {
                    accum(grads, a.id, g.matmul(&v[b.id].transpose()));
                }
                if br {
                    accum(grads, b.id, v[a.id].transpose().matmul(g));
                }
            })),
        )
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let out = self.values[a.id].transpose();
        let ar = self.req(a);
        self.push(
            out,
            ar,
            Some(Box::new(move |g, _v, grads| {
                accum(grads, a.id, g.transpose());
            })),
        )
    }

    // ---- activations ----

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.values[a.id].map(crate::graph::sigmoid_scalar);
        let ar = self.req(a);
        let var = self.push(out, ar, None);
        let oid = var.id;
        if ar {
            self.backs[oid] = Some(Box::new(move |g, v, grads| {
                let d = Matrix::from_fn(g.rows(), g.cols(), |r, c| {
                    let y = v[oid].at(r, c);
                    g.at(r, c) * y * (1.0 - y)
                });
                accum(grads, a.id, d);
            }));
        }
        var
    }

    /// Numerically stable `ln(1 + e^x)`; derivative is the sigmoid.
    pub fn softplus(&mut self, a: Var) -> Var {
        let out = self.values[a.id].map(softplus_scalar);
        let ar = self.req(a);
        self.push(
            out,
            ar,
            Some(Box::new(move |g, v, grads| {
                let d = Matrix::from_fn(g.rows(), g.cols(), |r, c| {
                    g.at(r, c) * sigmoid_scalar(v[a.id].at(r, c))
                });
                accum(grads, a.id, d);
            })),
        )
    }

    pub fn gelu(&mut self, a: Var) -> Var {
        let out = self.values[a.id].map(gelu_scalar);
        let ar = self.req(a);
        self.push(
            out,
            ar,
            Some(Box::new(move |g, v, grads| {
                let d = Matrix::from_fn(g.rows(), g.cols(), |r, c| {
                    g.at(r, c) * gelu_grad_scalar(v[a.id].at(r, c))
                });
                accum(grads, a.id, d);
            })),
        )
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.values[a.id].map(|x| x.max(0.0));
        let ar = self.req(a);
        self.push(
            out,
            ar,
            Some(Box::new(move |g, v, grads| {
                let d = Matrix::from_fn(g.rows(), g.cols(), |r, c| {
                    if v[a.id].at(r, c) > 0.0 { g.at(r, c) } else { 0.0 }
                });
                accum(grads, a.id, d);
            })),
        )
    }

    // ---- row-wise softmax family ----

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let x = &self.values[a.id];
        let mut out = Matrix::zeros(a.rows, a.cols);
        for r in 0..a.rows {
            let row = x.row(r);
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for c in 0..a.cols {
                let e = (row[c] - m).exp();
                out.set(r, c, e);
                z += e;
            }
            for c in 0..a.cols {
                out.set(r, c, out.at(r, c) / z);
            }
        }
        let ar = self.req(a);
        let var = self.push(out, ar, None);
        let oid = var.id;
        if ar {
            self.backs[oid] = Some(Box::new(move |g, v, grads| {
                let y = &v[oid];
                let mut d = Matrix::zeros(g.rows(), g.cols());
                for r in 0..g.rows() {
                    let dot: f64 = (0..g.cols()).map(|c| g.at(r, c) * y.at(r, c)).sum();
                    for c in 0..g.cols() {
                        d.set(r, c, y.at(r, c) * (g.at(r, c) - dot));
                    }
                }
                accum(grads, a.id, d);
            }));
        }
        var
    }

    pub fn log_softmax_rows(&mut self, a: Var) -> Var {
        let x = &self.values[a.id];
        let mut out = Matrix::zeros(a.rows, a.cols);
        for r in 0..a.rows {
            let row = x.row(r);
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + row.iter().map(|&v| (v - m).exp()).sum::<f64>().ln();
            for c in 0..a.cols {
                out.set(r, c, row[c] - lse);
            }
        }
        let ar = self.req(a);
        let var = self.push(out, ar, None);
        let oid = var.id;
        if ar {
            self.backs[oid] = Some(Box::new(move |g, v, grads| {
                let y = &v[oid];
                let mut d = Matrix::zeros(g.rows(), g.cols());
                for r in 0..g.rows() {
                    let gsum: f64 = (0..g.cols()).map(|c| g.at(r, c)).sum();
                    for c in 0..g.cols() {
                        d.set(r, c, g.at(r, c) - y.at(r, c).exp() * gsum);
                    }
                }
                accum(grads, a.id, d);
            }));
        }
        var
    }

    // ---- normalization ----

    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: f64) -> Var {
        assert_eq!(gain.rows, 1);
        assert_eq!(gain.cols, x.cols);
        assert_eq!(bias.rows, 1);
        assert_eq!(bias.cols, x.cols);
        let d = x.cols as f64;
        let xv = &self.values[x.id];
        let gv = &self.values[gain.id];
        let bv = &self.values[bias.id];
        let mut out = Matrix::zeros(x.rows, x.cols);
        for r in 0..x.rows {
            let row = xv.row(r);
            let mu = row.iter().sum::<f64>() / d;
            let var = row.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / d;
            let inv = 1.0 / (var + eps).sqrt();
            for c in 0..x.cols {
                let xh = (row[c] - mu) * inv;
                out.set(r, c, xh * gv.at(0, c) + bv.at(0, c));
            }
        }
        let (xr, gr, br) = (self.req(x), self.req(gain), self.req(bias));
        self.push(
            out,
            xr || gr || br,
            Some(Box::new(move |g, v, grads| {
                let xv = &v[x.id];
                let gv = &v[gain.id];
                let cols = g.cols();
                let d = cols as f64;
                let mut dx = Matrix::zeros(g.rows(), cols);
                let mut dgain = Matrix::zeros(1, cols);
                let mut dbias = Matrix::zeros(1, cols);
                for r in 0..g.rows() {
                    let row = xv.row(r);
                    let mu = row.iter().sum::<f64>() / d;
                    let var = row.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / d;
                    let inv = 1.0 / (var + eps).sqrt();
                    // dy = g * gain, applied to normalized activations
                    let mut mean_dy = 0.0;
                    let mut mean_dy_xh = 0.0;
                    for c in 0..cols {
                        let xh = (row[c] - mu) * inv;
                        let dy = g.at(r, c) * gv.at(0, c);
                        mean_dy += dy;
                        mean_dy_xh += dy * xh;
                        dgain.set(0, c, dgain.at(0, c) + g.at(r, c) * xh);
                        dbias.set(0, c, dbias.at(0, c) + g.at(r, c));
                    }
                    mean_dy /= d;
                    mean_dy_xh /= d;
                    for c in 0..cols {
                        let xh = (row[c] - mu) * inv;
                        let dy = g.at(r, c) * gv.at(0, c);
                        dx.set(r, c, inv * (dy - mean_dy - xh * mean_dy_xh));
                    }
                }
                if xr {
                    accum(grads, x.id, dx);
                }
                if gr {
                    accum(grads, gain.id, dgain);
                }
                if br {
                    accum(grads, bias.id, dbias);
                }
            })),
        )
    }

    // ---- reductions ----

    pub fn sum_all(&mut self, a: Var) -> Var {
        let out = Matrix::scalar(self.values[a.id].sum());
        let ar = self.req(a);
        self.push(
            out,
            ar,
            Some(Box::new(move |g, _v, grads| {
                let s = g.item();
                accum(grads, a.id, Matrix::from_fn(a.rows, a.cols, |_, _| s));
            })),
        )
    }

    pub fn mean_all(&mut self, a: Var) -> Var {
        let n = (a.rows * a.cols) as f64;
        let out = Matrix::scalar(self.values[a.id].sum() / n);
        let ar = self.req(a);
        self.push(
            out,
            ar,
            Some(Box::new(move |g, _v, grads| {
                let s = g.item() / n;
                accum(grads, a.id, Matrix::from_fn(a.rows, a.cols, |_, _| s));
            })),
        )
    }

    // ---- broadcasts and reshapes ----

    /// Scales row `t` of `x` by scalar `s[t]`. This is the score-weighted
    /// feature product: output row = score * feature row.
    pub fn scale_rows(&mut self, x: Var, s: Var) -> Var {
        assert_eq!(s.cols, 1, "scale_rows expects a column vector");
        assert_eq!(s.rows, x.rows, "scale_rows length mismatch");
        let out = Matrix::from_fn(x.rows, x.cols, |r, c| {
            self.values[x.id].at(r, c) * self.values[s.id].at(r, 0)
        });
        let (xr, sr) = (self.req(x), self.req(s));
        self.push(
            out,
            xr || sr,
            Some(Box::new(move |g, v, grads| {
                if xr {
                    let d = Matrix::from_fn(g.rows(), g.cols(), |r, c| {
                        g.at(r, c) * v[s.id].at(r, 0)
                    });
                    accum(grads, x.id, d);
                }
                if sr {
                    let mut d = Matrix::zeros(s.rows, 1);
                    for r in 0..g.rows() {
                        let mut acc = 0.0;
                        for c in 0..g.cols() {
                            acc += g.at(r, c) * v[x.id].at(r, c);
                        }
                        d.set(r, 0, acc);
                    }
                    accum(grads, s.id, d);
                }
            })),
        )
    }

    /// Adds a 1xD row vector to every row of `x`.
    pub fn add_row_broadcast(&mut self, x: Var, b: Var) -> Var {
        assert_eq!(b.rows, 1);
        assert_eq!(b.cols, x.cols);
        let out = Matrix::from_fn(x.rows, x.cols, |r, c| {
            self.values[x.id].at(r, c) + self.values[b.id].at(0, c)
        });
        let (xr, br) = (self.req(x), self.req(b));
        self.push(
            out,
            xr || br,
            Some(Box::new(move |g, _v, grads| {
                if xr {
                    accum(grads, x.id, g.clone());
                }
                if br {
                    let mut d = Matrix::zeros(1, g.cols());
                    for r in 0..g.rows() {
                        for c in 0..g.cols() {
                            d.set(0, c, d.at(0, c) + g.at(r, c));
                        }
                    }
                    accum(grads, b.id, d);
                }
            })),
        )
    }

    pub fn slice_rows(&mut self, a: Var, r0: usize, r1: usize) -> Var {
        assert!(r0 < r1 && r1 <= a.rows);
        let out = Matrix::from_fn(r1 - r0, a.cols, |r, c| self.values[a.id].at(r0 + r, c));
        let ar = self.req(a);
        self.push(
            out,
            ar,
            Some(Box::new(move |g, _v, grads| {
                let mut d = Matrix::zeros(a.rows, a.cols);
                for r in 0..g.rows() {
                    for c in 0..g.cols() {
                        d.set(r0 + r, c, g.at(r, c));
                    }
                }
                accum(grads, a.id, d);
            })),
        )
    }

    pub fn slice_cols(&mut self, a: Var, c0: usize, c1: usize) -> Var {
        assert!(c0 < c1 && c1 <= a.cols);
        let out = Matrix::from_fn(a.rows, c1 - c0, |r, c| self.values[a.id].at(r, c0 + c));
        let ar = self.req(a);
        self.push(
            out,
            ar,
            Some(Box::new(move |g, _v, grads| {
                let mut d = Matrix::zeros(a.rows, a.cols);
                for r in 0..g.rows() {
                    for c in 0..g.cols() {
                        d.set(r, c0 + c, g.at(r, c));
                    }
                }
                accum(grads, a.id, d);
            })),
        )
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty());
        let cols = parts[0].cols;
        let total: usize = parts.iter().map(|p| p.rows).sum();
        let mut out = Matrix::zeros(total, cols);
        let mut off = 0;
        for p in parts {
            assert_eq!(p.cols, cols, "concat_rows column mismatch");
            for r in 0..p.rows {
                for c in 0..cols {
                    out.set(off + r, c, self.values[p.id].at(r, c));
                }
            }
            off += p.rows;
        }
        let reqs: Vec<bool> = parts.iter().map(|p| self.req(*p)).collect();
        let parts: Vec<Var> = parts.to_vec();
        self.push(
            out,
            reqs.iter().any(|&r| r),
            Some(Box::new(move |g, _v, grads| {
                let mut off = 0;
                for (p, preq) in parts.iter().zip(&reqs) {
                    if *preq {
                        let d = Matrix::from_fn(p.rows, p.cols, |r, c| g.at(off + r, c));
                        accum(grads, p.id, d);
                    }
                    off += p.rows;
                }
            })),
        )
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty());
        let rows = parts[0].rows;
        let total: usize = parts.iter().map(|p| p.cols).sum();
        let mut out = Matrix::zeros(rows, total);
        let mut off = 0;
        for p in parts {
            assert_eq!(p.rows, rows, "concat_cols row mismatch");
            for r in 0..rows {
                for c in 0..p.cols {
                    out.set(r, off + c, self.values[p.id].at(r, c));
                }
            }
            off += p.cols;
        }
        let reqs: Vec<bool> = parts.iter().map(|p| self.req(*p)).collect();
        let parts: Vec<Var> = parts.to_vec();
        self.push(
            out,
            reqs.iter().any(|&r| r),
            Some(Box::new(move |g, _v, grads| {
                let mut off = 0;
                for (p, preq) in parts.iter().zip(&reqs) {
                    if *preq {
                        let d = Matrix::from_fn(p.rows, p.cols, |r, c| g.at(r, off + c));
                        accum(grads, p.id, d);
                    }
                    off += p.cols;
                }
            })),
        )
    }

    /// Selects rows of `table` by index: out[i] = table[idx[i]]. Used for
    /// token embedding lookups; gradients scatter-add back into the table.
    pub fn gather_rows(&mut self, table: Var, idx: &[usize]) -> Var {
        for &i in idx {
            assert!(i < table.rows, "gather index out of range");
        }
        let out = Matrix::from_fn(idx.len(), table.cols, |r, c| {
            self.values[table.id].at(idx[r], c)
        });
        let tr = self.req(table);
        let idx: Vec<usize> = idx.to_vec();
        self.push(
            out,
            tr,
            Some(Box::new(move |g, _v, grads| {
                let mut d = Matrix::zeros(table.rows, table.cols);
                for (r, &i) in idx.iter().enumerate() {
                    for c in 0..g.cols() {
                        d.set(i, c, d.at(i, c) + g.at(r, c));
                    }
                }
                accum(grads, table.id, d);
            })),
        )
    }

    // ---- composites ----

    /// Mean squared error between two same-shaped values.
    pub fn mse(&mut self, a: Var, b: Var) -> Var {
        let d = self.sub(a, b);
        let sq = self.mul(d, d);
        self.mean_all(sq)
    }
}

#[inline]
pub fn sigmoid_scalar(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub fn softplus_scalar(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

#[inline]
fn gelu_scalar(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x * x * x)).tanh())
}

#[inline]
fn gelu_grad_scalar(x: f64) -> f64 {
    let u = GELU_C * (x + 0.044715 * x * x * x);
    let t = u.tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * 0.044715 * x * x)
}
