//! Reverse-mode differentiation over vector-valued nodes.
//!
//! A [`Tape`] is built fresh for every forward pass. Nodes hold dense vectors;
//! matrices only appear as parameters consumed by [`Tape::matvec`], so the
//! tape never copies a weight matrix.

use crate::nn::param::{ParamId, ParamStore};
use crate::scalar::{softmax, Scalar};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op<T> {
    Input,
    Param(ParamId),
    MatVec { w: ParamId, x: Var },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Tanh(Var),
    Sigmoid(Var),
    Slice { src: Var, start: usize },
    Concat(Vec<Var>),
    Dot(Var, Var),
    Sum(Var),
    Scale(Var, T),
    MulConst(Var, Vec<T>),
    Square(Var),
    CrossEntropy { logits: Var, target: usize, probs: Vec<T> },
}

#[derive(Debug, Clone)]
struct Node<T> {
    value: Vec<T>,
    op: Op<T>,
}

pub struct Tape<'s, T> {
    store: &'s ParamStore<T>,
    nodes: Vec<Node<T>>,
}

/// Parameter gradients produced by [`Tape::backward`], indexed like the store.
#[derive(Debug, Clone)]
pub struct Gradients<T> {
    per_param: Vec<Option<Vec<T>>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn get(&self, id: ParamId) -> Option<&[T]> {
        self.per_param.get(id.0).and_then(|g| g.as_deref())
    }

    /// Adds these gradients into the `grad` fields of `store`.
    pub fn accumulate_into(&self, store: &mut ParamStore<T>) {
        for (i, g) in self.per_param.iter().enumerate() {
            if let Some(g) = g {
                let t = store.get_mut(ParamId(i));
                for (acc, &d) in t.grad.iter_mut().zip(g) {
                    *acc = *acc + d;
                }
            }
        }
    }
}

impl<'s, T: Scalar> Tape<'s, T> {
    pub fn new(store: &'s ParamStore<T>) -> Self {
        Self {
            store,
            nodes: Vec::new(),
        }
    }

    pub fn store(&self) -> &'s ParamStore<T> {
        self.store
    }

    fn push(&mut self, value: Vec<T>, op: Op<T>) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &[T] {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> T {
        self.nodes[v.0].value[0]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// A constant (non-differentiable) vector.
    pub fn input(&mut self, values: Vec<T>) -> Var {
        self.push(values, Op::Input)
    }

    /// A parameter used as a vector (biases, attention `v`, start tokens).
    pub fn param(&mut self, id: ParamId) -> Var {
        let values = self.store.get(id).values.clone();
        self.push(values, Op::Param(id))
    }

    pub fn matvec(&mut self, w: ParamId, x: Var) -> Var {
        let (rows, cols) = self.store.get(w).matrix_dims();
        let xs = &self.nodes[x.0].value;
        assert_eq!(xs.len(), cols, "matvec: {} inputs for {rows}x{cols} matrix", xs.len());
        let out = matvec_plain(&self.store.get(w).values, rows, cols, xs);
        self.push(out, Op::MatVec { w, x })
    }

    fn zip_with(&mut self, a: Var, b: Var, f: impl Fn(T, T) -> T, op: Op<T>) -> Var {
        let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        assert_eq!(va.len(), vb.len(), "elementwise op on lengths {} and {}", va.len(), vb.len());
        let out = va.iter().zip(vb).map(|(&x, &y)| f(x, y)).collect();
        self.push(out, op)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.zip_with(a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.zip_with(a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.zip_with(a, b, |x, y| x * y, Op::Mul(a, b))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.nodes[a.0].value.iter().map(|x| x.tanh()).collect();
        self.push(out, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.nodes[a.0].value.iter().map(|&x| crate::scalar::sigmoid(x)).collect();
        self.push(out, Op::Sigmoid(a))
    }

    pub fn slice(&mut self, src: Var, start: usize, len: usize) -> Var {
        let out = self.nodes[src.0].value[start..start + len].to_vec();
        self.push(out, Op::Slice { src, start })
    }

    pub fn concat(&mut self, parts: &[Var]) -> Var {
        let out = parts
            .iter()
            .flat_map(|p| self.nodes[p.0].value.iter().copied())
            .collect();
        self.push(out, Op::Concat(parts.to_vec()))
    }

    pub fn dot(&mut self, a: Var, b: Var) -> Var {
        let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        assert_eq!(va.len(), vb.len());
        let out = va.iter().zip(vb).map(|(&x, &y)| x * y).sum();
        self.push(vec![out], Op::Dot(a, b))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let out = self.nodes[a.0].value.iter().copied().sum();
        self.push(vec![out], Op::Sum(a))
    }

    pub fn scale(&mut self, a: Var, k: T) -> Var {
        let out = self.nodes[a.0].value.iter().map(|&x| x * k).collect();
        self.push(out, Op::Scale(a, k))
    }

    /// Elementwise product with a constant vector (no gradient to the constant).
    pub fn mul_const(&mut self, a: Var, k: Vec<T>) -> Var {
        let va = &self.nodes[a.0].value;
        assert_eq!(va.len(), k.len());
        let out = va.iter().zip(&k).map(|(&x, &c)| x * c).collect();
        self.push(out, Op::MulConst(a, k))
    }

    pub fn square(&mut self, a: Var) -> Var {
        let out = self.nodes[a.0].value.iter().map(|&x| x * x).collect();
        self.push(out, Op::Square(a))
    }

    /// Mean of a list of scalar nodes.
    pub fn mean(&mut self, scalars: &[Var]) -> Var {
        let stacked = self.concat(scalars);
        let total = self.sum(stacked);
        self.scale(total, T::one() / T::from_usize_lossy(scalars.len()))
    }

    /// `-log softmax(logits)[target]`.
    pub fn cross_entropy(&mut self, logits: Var, target: usize) -> Var {
        let probs = softmax(&self.nodes[logits.0].value);
        let lse = crate::scalar::log_sum_exp(&self.nodes[logits.0].value);
        let loss = lse - self.nodes[logits.0].value[target];
        self.push(
            vec![loss],
            Op::CrossEntropy {
                logits,
                target,
                probs,
            },
        )
    }

    /// Gradients of the scalar node `loss` with respect to every parameter reached.
    pub fn backward(&self, loss: Var) -> Gradients<T> {
        assert_eq!(self.nodes[loss.0].value.len(), 1, "backward needs a scalar loss");
        let mut grads: Vec<Option<Vec<T>>> = vec![None; self.nodes.len()];
        let mut per_param: Vec<Option<Vec<T>>> = vec![None; self.store.len()];
        grads[loss.0] = Some(vec![T::one()]);

        fn acc<T: Scalar>(slot: &mut Option<Vec<T>>, len: usize) -> &mut Vec<T> {
            slot.get_or_insert_with(|| vec![T::zero(); len])
        }

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Input => {}
                Op::Param(id) => {
                    let dst = acc(&mut per_param[id.0], g.len());
                    dst.iter_mut().zip(&g).for_each(|(d, &x)| *d = *d + x);
                }
                Op::MatVec { w, x } => {
                    let t = self.store.get(*w);
                    let (rows, cols) = t.matrix_dims();
                    let xs = &self.nodes[x.0].value;
                    let dw = acc(&mut per_param[w.0], rows * cols);
                    for r in 0..rows {
                        let gr = g[r];
                        if gr == T::zero() {
                            continue;
                        }
                        let row = &mut dw[r * cols..(r + 1) * cols];
                        row.iter_mut().zip(xs).for_each(|(d, &xv)| *d = *d + gr * xv);
                    }
                    let dx = acc(&mut grads[x.0], cols);
                    for r in 0..rows {
                        let gr = g[r];
                        if gr == T::zero() {
                            continue;
                        }
                        let row = &t.values[r * cols..(r + 1) * cols];
                        dx.iter_mut().zip(row).for_each(|(d, &wv)| *d = *d + gr * wv);
                    }
                }
                Op::Add(a, b) => {
                    add_into(acc(&mut grads[a.0], g.len()), &g, T::one());
                    add_into(acc(&mut grads[b.0], g.len()), &g, T::one());
                }
                Op::Sub(a, b) => {
                    add_into(acc(&mut grads[a.0], g.len()), &g, T::one());
                    add_into(acc(&mut grads[b.0], g.len()), &g, -T::one());
                }
                Op::Mul(a, b) => {
                    let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                    let da: Vec<T> = g.iter().zip(vb).map(|(&d, &y)| d * y).collect();
                    let db: Vec<T> = g.iter().zip(va).map(|(&d, &x)| d * x).collect();
                    add_into(acc(&mut grads[a.0], g.len()), &da, T::one());
                    add_into(acc(&mut grads[b.0], g.len()), &db, T::one());
                }
                Op::Tanh(a) => {
                    let d: Vec<T> = g
                        .iter()
                        .zip(&node.value)
                        .map(|(&d, &y)| d * (T::one() - y * y))
                        .collect();
                    add_into(acc(&mut grads[a.0], g.len()), &d, T::one());
                }
                Op::Sigmoid(a) => {
                    let d: Vec<T> = g
                        .iter()
                        .zip(&node.value)
                        .map(|(&d, &y)| d * y * (T::one() - y))
                        .collect();
                    add_into(acc(&mut grads[a.0], g.len()), &d, T::one());
                }
                Op::Slice { src, start } => {
                    let len = self.nodes[src.0].value.len();
                    let dst = acc(&mut grads[src.0], len);
                    add_into(&mut dst[*start..*start + g.len()], &g, T::one());
                }
                Op::Concat(parts) => {
                    let mut off = 0;
                    for p in parts {
                        let len = self.nodes[p.0].value.len();
                        add_into(acc(&mut grads[p.0], len), &g[off..off + len], T::one());
                        off += len;
                    }
                }
                Op::Dot(a, b) => {
                    let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                    add_into(acc(&mut grads[a.0], vb.len()), vb, g[0]);
                    add_into(acc(&mut grads[b.0], va.len()), va, g[0]);
                }
                Op::Sum(a) => {
                    let len = self.nodes[a.0].value.len();
                    acc(&mut grads[a.0], len).iter_mut().for_each(|d| *d = *d + g[0]);
                }
                Op::Scale(a, k) => add_into(acc(&mut grads[a.0], g.len()), &g, *k),
                Op::MulConst(a, k) => {
                    let d: Vec<T> = g.iter().zip(k).map(|(&d, &c)| d * c).collect();
                    add_into(acc(&mut grads[a.0], g.len()), &d, T::one());
                }
                Op::Square(a) => {
                    let va = &self.nodes[a.0].value;
                    let d: Vec<T> = g.iter().zip(va).map(|(&d, &x)| d * (x + x)).collect();
                    add_into(acc(&mut grads[a.0], g.len()), &d, T::one());
                }
                Op::CrossEntropy {
                    logits,
                    target,
                    probs,
                } => {
                    let mut d: Vec<T> = probs.iter().map(|&p| p * g[0]).collect();
                    d[*target] = d[*target] - g[0];
                    add_into(acc(&mut grads[logits.0], d.len()), &d, T::one());
                }
            }
        }
        Gradients { per_param }
    }
}

fn add_into<T: Scalar>(dst: &mut [T], src: &[T], k: T) {
    dst.iter_mut().zip(src).for_each(|(d, &s)| *d = *d + k * s);
}

/// Row-major `W x` for a `rows x cols` matrix.
pub fn matvec_plain<T: Scalar>(w: &[T], rows: usize, cols: usize, x: &[T]) -> Vec<T> {
    debug_assert_eq!(w.len(), rows * cols);
    (0..rows)
        .map(|r| {
            w[r * cols..(r + 1) * cols]
                .iter()
                .zip(x)
                .fold(T::zero(), |s, (&a, &b)| s + a * b)
        })
        .collect()
}
