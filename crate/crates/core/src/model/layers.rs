//! Parameterised building blocks recorded on a [`Tape`].

use alloc::format;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{contract, Result};
use crate::grad::{Array, Binding, ParamId, ParameterStore, Tape, Var};

/// Slope of the leaky rectifier applied to attention scores.
pub const GAT_LEAKY_SLOPE: f64 = 0.2;

#[derive(Debug, Clone, Copy)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParameterStore,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        rng: &mut R,
    ) -> Result<Self> {
        Ok(Self {
            weight: store.insert_glorot(&format!("{name}.weight"), &[in_dim, out_dim], in_dim, out_dim, rng)?,
            bias: store.insert_zeros(&format!("{name}.bias"), &[out_dim])?,
            in_dim,
            out_dim,
        })
    }

    pub fn param_count(in_dim: usize, out_dim: usize) -> usize {
        in_dim * out_dim + out_dim
    }

    /// `x [M, in] -> [M, out]`
    pub fn forward(&self, tape: &mut Tape, p: &Binding, x: Var) -> Result<Var> {
        let y = tape.matmul(x, p.var(self.weight))?;
        tape.add_bias(y, p.var(self.bias))
    }
}

/// Gated recurrent cell with a single fused bias.
#[derive(Debug, Clone, Copy)]
pub struct LstmCell {
    pub input_weight: ParamId,
    pub hidden_weight: ParamId,
    pub bias: ParamId,
    pub input_dim: usize,
    pub hidden: usize,
}

impl LstmCell {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParameterStore,
        name: &str,
        input_dim: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Result<Self> {
        Ok(Self {
            input_weight: store.insert_glorot(
                &format!("{name}.w_input"),
                &[input_dim, 4 * hidden],
                input_dim,
                hidden,
                rng,
            )?,
            hidden_weight: store.insert_glorot(
                &format!("{name}.w_hidden"),
                &[hidden, 4 * hidden],
                hidden,
                hidden,
                rng,
            )?,
            bias: store.insert_zeros(&format!("{name}.bias"), &[4 * hidden])?,
            input_dim,
            hidden,
        })
    }

    pub fn param_count(input_dim: usize, hidden: usize) -> usize {
        4 * hidden * (input_dim + hidden) + 4 * hidden
    }

    /// One step: gates are ordered input, forget, candidate, output.
    pub fn step(&self, tape: &mut Tape, p: &Binding, x: Var, h: Var, c: Var) -> Result<(Var, Var)> {
        let xs = tape.shape(x);
        if xs.len() != 2 || xs[1] != self.input_dim || tape.shape(h) != [xs[0], self.hidden] || tape.shape(c) != tape.shape(h) {
            return contract(format!(
                "lstm_cell: input {:?}, hidden {:?}, cell {:?} for input size {} hidden size {}",
                tape.shape(x),
                tape.shape(h),
                tape.shape(c),
                self.input_dim,
                self.hidden
            ));
        }
        let hs = self.hidden;
        let gx = tape.matmul(x, p.var(self.input_weight))?;
        let gh = tape.matmul(h, p.var(self.hidden_weight))?;
        let g = tape.add(gx, gh)?;
        let g = tape.add_bias(g, p.var(self.bias))?;
        let i = tape.slice(g, 0, hs)?;
        let i = tape.sigmoid(i)?;
        let f = tape.slice(g, hs, hs)?;
        let f = tape.sigmoid(f)?;
        let cand = tape.slice(g, 2 * hs, hs)?;
        let cand = tape.tanh(cand)?;
        let o = tape.slice(g, 3 * hs, hs)?;
        let o = tape.sigmoid(o)?;
        let fc = tape.mul(f, c)?;
        let ig = tape.mul(i, cand)?;
        let c_next = tape.add(fc, ig)?;
        let tc = tape.tanh(c_next)?;
        let h_next = tape.mul(o, tc)?;
        Ok((h_next, c_next))
    }
}

/// Multi-head graph attention over a fully connected pedestrian graph
/// (self-loops included). Head outputs are concatenated, biased and passed
/// through `tanh`.
#[derive(Debug, Clone, Copy)]
pub struct GatLayer {
    pub weight: ParamId,
    pub attn_src: ParamId,
    pub attn_dst: ParamId,
    pub bias: ParamId,
    pub in_dim: usize,
    pub heads: usize,
    pub head_dim: usize,
}

impl GatLayer {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParameterStore,
        name: &str,
        in_dim: usize,
        heads: usize,
        head_dim: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let out = heads * head_dim;
        Ok(Self {
            weight: store.insert_glorot(&format!("{name}.weight"), &[in_dim, out], in_dim, out, rng)?,
            attn_src: store.insert_glorot(&format!("{name}.attn_src"), &[head_dim, heads], head_dim, 1, rng)?,
            attn_dst: store.insert_glorot(&format!("{name}.attn_dst"), &[head_dim, heads], head_dim, 1, rng)?,
            bias: store.insert_zeros(&format!("{name}.bias"), &[out])?,
            in_dim,
            heads,
            head_dim,
        })
    }

    pub fn param_count(in_dim: usize, heads: usize, head_dim: usize) -> usize {
        in_dim * heads * head_dim + 2 * head_dim * heads + heads * head_dim
    }

    pub fn out_dim(&self) -> usize {
        self.heads * self.head_dim
    }

    /// `h [N, in] -> [N, heads * head_dim]`
    pub fn forward(&self, tape: &mut Tape, p: &Binding, h: Var) -> Result<Var> {
        let n = tape.shape(h)[0];
        let wh = tape.matmul(h, p.var(self.weight))?;
        let ones_col = tape.constant(Array::full(&[n, 1], 1.0))?;
        let ones_row = tape.constant(Array::full(&[1, n], 1.0))?;
        let mut heads = Vec::with_capacity(self.heads);
        for k in 0..self.heads {
            let whk = if self.heads == 1 {
                wh
            } else {
                tape.slice(wh, k * self.head_dim, self.head_dim)?
            };
            let a_src = if self.heads == 1 {
                p.var(self.attn_src)
            } else {
                tape.slice(p.var(self.attn_src), k, 1)?
            };
            let a_dst = if self.heads == 1 {
                p.var(self.attn_dst)
            } else {
                tape.slice(p.var(self.attn_dst), k, 1)?
            };
            let s_src = tape.matmul(whk, a_src)?; // [N, 1]
            let s_dst = tape.matmul(whk, a_dst)?; // [N, 1]
            let s_dst_t = tape.transpose(s_dst)?; // [1, N]
            let e_src = tape.matmul(s_src, ones_row)?;
            let e_dst = tape.matmul(ones_col, s_dst_t)?;
            let e = tape.add(e_src, e_dst)?;
            let e = tape.leaky_relu(e, GAT_LEAKY_SLOPE)?;
            let alpha = tape.softmax(e)?;
            heads.push(tape.matmul(alpha, whk)?);
        }
        let cat = if heads.len() == 1 {
            heads[0]
        } else {
            tape.concat(&heads)?
        };
        let out = tape.add_bias(cat, p.var(self.bias))?;
        tape.tanh(out)
    }
}
