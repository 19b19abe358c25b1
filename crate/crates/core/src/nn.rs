//! GRU building blocks and model dimensions shared by the QA and QG networks.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, ParamId, ParamSet, Var};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Layer sizes. The defaults are the full-size configuration.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelDims {
    pub embedding_dim: usize,
    pub qa_hidden: usize,
    pub qg_hidden: usize,
    pub attention_dim: usize,
    pub cooc_dim: usize,
    pub cooc_vocab: usize,
    pub vocab_size: usize,
}

impl Default for ModelDims {
    fn default() -> Self {
        ModelDims {
            embedding_dim: 300,
            qa_hidden: 100,
            qg_hidden: 512,
            attention_dim: 30,
            cooc_dim: 10,
            cooc_vocab: 10,
            vocab_size: 30_000,
        }
    }
}

impl ModelDims {
    /// Every dimension shrunk to `hidden`, for gradient checks and toy runs.
    pub fn tiny(hidden: usize) -> Self {
        ModelDims {
            embedding_dim: hidden,
            qa_hidden: hidden,
            qg_hidden: hidden,
            attention_dim: hidden,
            ..ModelDims::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            ("embedding_dim", self.embedding_dim),
            ("qa_hidden", self.qa_hidden),
            ("qg_hidden", self.qg_hidden),
            ("attention_dim", self.attention_dim),
            ("cooc_dim", self.cooc_dim),
            ("cooc_vocab", self.cooc_vocab),
            ("vocab_size", self.vocab_size),
        ];
        match all.iter().find(|(_, v)| *v == 0) {
            Some((name, _)) => Err(Error::Config(format!("{name} must be positive"))),
            None => Ok(()),
        }
    }

    /// Length of the QA pair feature `[v_q; v_a; v_q ⊙ v_a; e_c]`.
    pub fn qa_feature_dim(&self) -> usize {
        6 * self.qa_hidden + self.cooc_dim
    }

    /// Decoder state width, equal to the concatenated encoder state.
    pub fn decoder_hidden(&self) -> usize {
        2 * self.qg_hidden
    }
}

#[derive(Clone, Debug)]
pub struct GruCell {
    pub w_z: ParamId,
    pub w_r: ParamId,
    pub w_h: ParamId,
    pub u_z: ParamId,
    pub u_r: ParamId,
    pub u_h: ParamId,
    pub b_z: ParamId,
    pub b_r: ParamId,
    pub b_h: ParamId,
    pub input: usize,
    pub hidden: usize,
}

impl GruCell {
    pub fn register<S: Scalar, R: Rng>(
        params: &mut ParamSet<S>,
        prefix: &str,
        input: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let mut w = |n: &str| params.insert_glorot(format!("{prefix}.{n}"), &[hidden, input], rng);
        let (w_z, w_r, w_h) = (w("W_z")?, w("W_r")?, w("W_h")?);
        let mut u = |n: &str| params.insert_glorot(format!("{prefix}.{n}"), &[hidden, hidden], rng);
        let (u_z, u_r, u_h) = (u("U_z")?, u("U_r")?, u("U_h")?);
        let mut b = |n: &str| params.insert_zeros(format!("{prefix}.{n}"), &[hidden]);
        let (b_z, b_r, b_h) = (b("b_z")?, b("b_r")?, b("b_h")?);
        Ok(GruCell {
            w_z,
            w_r,
            w_h,
            u_z,
            u_r,
            u_h,
            b_z,
            b_r,
            b_h,
            input,
            hidden,
        })
    }

    pub fn param_ids(&self) -> [ParamId; 9] {
        [
            self.w_z, self.w_r, self.w_h, self.u_z, self.u_r, self.u_h, self.b_z, self.b_r, self.b_h,
        ]
    }

    fn gate<S: Scalar>(
        &self,
        g: &mut Graph<'_, S>,
        w: ParamId,
        u: ParamId,
        b: ParamId,
        x: Var,
        h: Var,
    ) -> Result<Var> {
        let (w, u, b) = (g.param(w), g.param(u), g.param(b));
        let wx = g.matmul(w, x)?;
        let uh = g.matmul(u, h)?;
        let s = g.add(wx, uh)?;
        g.add(s, b)
    }

    /// One update:
    /// `z = σ(W_z x + U_z h)`, `r = σ(W_r x + U_r h)`,
    /// `h̃ = tanh(W_h x + U_h (r ⊙ h))`, `h' = z ⊙ h̃ + (1 - z) ⊙ h`.
    pub fn step<S: Scalar>(&self, g: &mut Graph<'_, S>, x: Var, h: Var) -> Result<Var> {
        let z = self.gate(g, self.w_z, self.u_z, self.b_z, x, h)?;
        let z = g.sigmoid(z);
        let r = self.gate(g, self.w_r, self.u_r, self.b_r, x, h)?;
        let r = g.sigmoid(r);
        let rh = g.mul(r, h)?;
        let cand = self.gate(g, self.w_h, self.u_h, self.b_h, x, rh)?;
        let cand = g.tanh(cand);
        let keep = g.one_minus(z);
        let new_part = g.mul(z, cand)?;
        let old_part = g.mul(keep, h)?;
        g.add(new_part, old_part)
    }
}

/// Forward and backward GRUs over the same sequence.
#[derive(Clone, Debug)]
pub struct BiGru {
    pub forward: GruCell,
    pub backward: GruCell,
}

/// Hidden states of a [`BiGru`] pass; `backward[i]` has read positions `n-1 ..= i`.
pub struct BiGruStates {
    pub forward: Vec<Var>,
    pub backward: Vec<Var>,
}

impl BiGruStates {
    /// Final forward state joined with the final backward state.
    pub fn last(&self, g: &mut Graph<'_, impl Scalar>) -> Result<Var> {
        let f = *self.forward.last().expect("non-empty run");
        let b = self.backward[0];
        g.concat(&[f, b])
    }
}

impl BiGru {
    pub fn register<S: Scalar, R: Rng>(
        params: &mut ParamSet<S>,
        prefix: &str,
        input: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Result<Self> {
        Ok(BiGru {
            forward: GruCell::register(params, &format!("{prefix}.fwd"), input, hidden, rng)?,
            backward: GruCell::register(params, &format!("{prefix}.bwd"), input, hidden, rng)?,
        })
    }

    pub fn param_ids(&self) -> impl Iterator<Item = ParamId> {
        self.forward
            .param_ids()
            .into_iter()
            .chain(self.backward.param_ids())
    }

    pub fn run<S: Scalar>(&self, g: &mut Graph<'_, S>, inputs: &[Var]) -> Result<BiGruStates> {
        if inputs.is_empty() {
            return Err(Error::EmptySequence);
        }
        let hidden = self.forward.hidden;
        let mut h = g.zeros(&[hidden]);
        let mut forward = Vec::with_capacity(inputs.len());
        for &x in inputs {
            h = self.forward.step(g, x, h)?;
            forward.push(h);
        }
        let mut h = g.zeros(&[hidden]);
        let mut backward = vec![h; inputs.len()];
        for (i, &x) in inputs.iter().enumerate().rev() {
            h = self.backward.step(g, x, h)?;
            backward[i] = h;
        }
        Ok(BiGruStates { forward, backward })
    }
}

/// Embedding rows for `ids`.
pub fn embed<S: Scalar>(g: &mut Graph<'_, S>, table: ParamId, ids: &[usize]) -> Result<Vec<Var>> {
    let t = g.param(table);
    ids.iter().map(|&i| g.row_lookup(t, i)).collect()
}
