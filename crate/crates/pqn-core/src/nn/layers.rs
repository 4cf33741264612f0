use serde::{Deserialize, Serialize};

use crate::error::{PqnError, Result};
use crate::nn::param::{ParamId, ParamStore, ParamTensor};
use crate::nn::tape::{matvec_plain, Tape, Var};
use crate::scalar::{sigmoid, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    None,
    Tanh,
    Sigmoid,
}

impl Activation {
    fn apply<T: Scalar>(self, x: T) -> T {
        match self {
            Activation::None => x,
            Activation::Tanh => x.tanh(),
            Activation::Sigmoid => sigmoid(x),
        }
    }
}

/// `activation(W x + b)` without recording gradients.
pub fn dense_forward<T: Scalar>(
    x: &[T],
    w: &ParamTensor<T>,
    b: &ParamTensor<T>,
    activation: Activation,
) -> Result<Vec<T>> {
    let (rows, cols) = w.matrix_dims();
    if w.shape.len() != 2 || cols != x.len() || b.len() != rows {
        return Err(PqnError::Shape(format!(
            "dense: W {:?}, b {:?}, x [{}]",
            w.shape,
            b.shape,
            x.len()
        )));
    }
    Ok(matvec_plain(&w.values, rows, cols, x)
        .into_iter()
        .zip(&b.values)
        .map(|(z, &bias)| activation.apply(z + bias))
        .collect())
}

/// Handles to a dense layer's weight and bias.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dense {
    pub w: ParamId,
    pub b: ParamId,
}

impl Dense {
    pub fn register<T: Scalar>(
        store: &mut ParamStore<T>,
        prefix: &str,
        inputs: usize,
        outputs: usize,
    ) -> Result<Self> {
        let w = store.insert(ParamTensor::zeros(format!("{prefix}.w"), vec![outputs, inputs]))?;
        let b = store.insert(ParamTensor::zeros(format!("{prefix}.b"), vec![outputs]))?;
        Ok(Self { w, b })
    }

    pub fn forward<T: Scalar>(&self, store: &ParamStore<T>, x: &[T], act: Activation) -> Result<Vec<T>> {
        dense_forward(x, store.get(self.w), store.get(self.b), act)
    }

    pub fn forward_tape<T: Scalar>(&self, tape: &mut Tape<'_, T>, x: Var, act: Activation) -> Var {
        let wx = tape.matvec(self.w, x);
        let b = tape.param(self.b);
        let z = tape.add(wx, b);
        match act {
            Activation::None => z,
            Activation::Tanh => tape.tanh(z),
            Activation::Sigmoid => tape.sigmoid(z),
        }
    }
}

/// Hidden and cell vectors of an LSTM.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmCellState<T> {
    pub h: Vec<T>,
    pub c: Vec<T>,
}

impl<T: Scalar> LstmCellState<T> {
    pub fn zeros(k: usize) -> Self {
        Self {
            h: vec![T::zero(); k],
            c: vec![T::zero(); k],
        }
    }

    pub fn hidden_size(&self) -> usize {
        self.h.len()
    }
}

/// Tape handles for an LSTM state.
#[derive(Debug, Clone, Copy)]
pub struct LstmVars {
    pub h: Var,
    pub c: Var,
}

/// Single-layer LSTM cell. The stacked weight is `[4k, input + k]` with gate
/// blocks ordered input, forget, candidate, output.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LstmCell {
    pub w: ParamId,
    pub b: ParamId,
    pub input: usize,
    pub hidden: usize,
}

impl LstmCell {
    pub fn register<T: Scalar>(
        store: &mut ParamStore<T>,
        prefix: &str,
        input: usize,
        hidden: usize,
    ) -> Result<Self> {
        let w = store.insert(ParamTensor::zeros(
            format!("{prefix}.w"),
            vec![4 * hidden, input + hidden],
        ))?;
        let b = store.insert(ParamTensor::zeros(format!("{prefix}.b"), vec![4 * hidden]))?;
        Ok(Self { w, b, input, hidden })
    }

    pub fn step<T: Scalar>(
        &self,
        store: &ParamStore<T>,
        x: &[T],
        state: &LstmCellState<T>,
    ) -> Result<LstmCellState<T>> {
        lstm_step(x, state, store.get(self.w), store.get(self.b))
    }

    pub fn step_tape<T: Scalar>(&self, tape: &mut Tape<'_, T>, x: Var, state: LstmVars) -> LstmVars {
        let k = self.hidden;
        let xh = tape.concat(&[x, state.h]);
        let wz = tape.matvec(self.w, xh);
        let b = tape.param(self.b);
        let z = tape.add(wz, b);
        let zi = tape.slice(z, 0, k);
        let zf = tape.slice(z, k, k);
        let zg = tape.slice(z, 2 * k, k);
        let zo = tape.slice(z, 3 * k, k);
        let i = tape.sigmoid(zi);
        let f = tape.sigmoid(zf);
        let g = tape.tanh(zg);
        let o = tape.sigmoid(zo);
        let fc = tape.mul(f, state.c);
        let ig = tape.mul(i, g);
        let c = tape.add(fc, ig);
        let tc = tape.tanh(c);
        let h = tape.mul(o, tc);
        LstmVars { h, c }
    }
}

/// One LSTM update without recording gradients.
pub fn lstm_step<T: Scalar>(
    x: &[T],
    state: &LstmCellState<T>,
    w: &ParamTensor<T>,
    b: &ParamTensor<T>,
) -> Result<LstmCellState<T>> {
    let k = state.hidden_size();
    let (rows, cols) = w.matrix_dims();
    if state.c.len() != k || rows != 4 * k || cols != x.len() + k || b.len() != 4 * k {
        return Err(PqnError::Shape(format!(
            "lstm: W {:?}, b {:?}, x [{}], hidden {k}",
            w.shape,
            b.shape,
            x.len()
        )));
    }
    let mut xh = Vec::with_capacity(cols);
    xh.extend_from_slice(x);
    xh.extend_from_slice(&state.h);
    let z: Vec<T> = matvec_plain(&w.values, rows, cols, &xh)
        .into_iter()
        .zip(&b.values)
        .map(|(a, &bias)| a + bias)
        .collect();
    let mut h = Vec::with_capacity(k);
    let mut c = Vec::with_capacity(k);
    for j in 0..k {
        let i = sigmoid(z[j]);
        let f = sigmoid(z[k + j]);
        let g = z[2 * k + j].tanh();
        let o = sigmoid(z[3 * k + j]);
        let cj = f * state.c[j] + i * g;
        c.push(cj);
        h.push(o * cj.tanh());
    }
    Ok(LstmCellState { h, c })
}
