use super::encoder::{lstm_update, Dropout, EncodedVideo};
use super::{DecoderVars, ModelError};
use crate::numerics::{Tape, Tensor, Var};

/// Recurrent state of a decoder between steps.
#[derive(Clone, Copy, Debug)]
pub struct DecoderState {
    pub hidden: Var,
    pub cell: Var,
    pub step: usize,
}

impl DecoderState {
    pub fn zeros(tape: &mut Tape, hidden: usize) -> Self {
        let z = Tensor::zeros(&[hidden]);
        Self {
            hidden: tape.constant(z.clone()),
            cell: tape.constant(z),
            step: 0,
        }
    }
}

/// Encoder outputs laid out for attention by one decoder: the keys
/// `W_a νᵗ` (independent of the decoder state) and the value matrix whose
/// columns are `νᵗ`.
#[derive(Clone, Debug)]
pub struct AttentionMemory {
    keys: Vec<Var>,
    values: Var,
}

impl AttentionMemory {
    pub fn new(tape: &mut Tape, dec: &DecoderVars, nu: &EncodedVideo) -> Result<Self, ModelError> {
        if nu.is_empty() {
            return Err(ModelError::EmptySequence);
        }
        let keys = nu
            .steps
            .iter()
            .map(|&s| tape.matmul(dec.attn_w, s))
            .collect::<Result<Vec<_>, _>>()?;
        let rows = tape.stack_rows(&nu.steps)?;
        let values = tape.transpose(rows)?;
        Ok(Self { keys, values })
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }
}

#[derive(Clone, Copy, Debug)]
pub struct Attention {
    pub context: Var,
    pub weights: Var,
}

/// Additive attention: `eᵗ = v_aᵀ tanh(W_a νᵗ + U_a h)`, weights are the
/// softmax of `e` and the context is the weighted sum of `νᵗ`.
pub fn attend(tape: &mut Tape, dec: &DecoderVars, h_prev: Var, memory: &AttentionMemory) -> Result<Attention, ModelError> {
    let query = tape.matmul(dec.attn_u, h_prev)?;
    let mut scores = Vec::with_capacity(memory.len());
    for &k in &memory.keys {
        let s = tape.add(k, query)?;
        let s = tape.tanh(s);
        scores.push(tape.matmul(dec.attn_v, s)?);
    }
    let scores = tape.concat(&scores)?;
    let weights = tape.softmax(scores)?;
    let context = tape.matmul(memory.values, weights)?;
    Ok(Attention { context, weights })
}

/// One decoder step on input token `token` given the attention context.
pub fn decode_step(
    tape: &mut Tape,
    dec: &DecoderVars,
    token: usize,
    state: DecoderState,
    context: Var,
    dropout: &mut Dropout<'_>,
) -> Result<DecoderState, ModelError> {
    if token >= dec.vocab_size {
        return Err(ModelError::TokenOutOfRange {
            token,
            vocab_size: dec.vocab_size,
        });
    }
    let emb = tape.select_row(dec.embedding, token)?;
    let emb = dropout.apply(tape, emb)?;
    let wx = tape.matmul(dec.cell.w, emb)?;
    let uh = tape.matmul(dec.cell.u, state.hidden)?;
    let cv = tape.matmul(dec.context, context)?;
    let pre = tape.add_all(&[wx, uh, cv, dec.cell.b])?;
    let (hidden, cell) = lstm_update(tape, pre, state.cell, dec.cell.hidden)?;
    Ok(DecoderState {
        hidden,
        cell,
        step: state.step + 1,
    })
}

/// Logits `W_d h + b_d`.
pub fn output_logits(tape: &mut Tape, dec: &DecoderVars, hidden: Var, dropout: &mut Dropout<'_>) -> Result<Var, ModelError> {
    let h = dropout.apply(tape, hidden)?;
    let wh = tape.matmul(dec.out_w, h)?;
    Ok(tape.add(wh, dec.out_b)?)
}

/// `softmax(W_d h + b_d)` over the vocabulary.
pub fn output_dist(tape: &mut Tape, dec: &DecoderVars, hidden: Var, dropout: &mut Dropout<'_>) -> Result<Var, ModelError> {
    let logits = output_logits(tape, dec, hidden, dropout)?;
    Ok(tape.softmax(logits)?)
}

/// Feeds `tokens[..n-1]` (starting with BOS) and returns the predicted
/// distribution at every step; step `i` predicts `tokens[i + 1]`.
pub fn teacher_force(
    tape: &mut Tape,
    dec: &DecoderVars,
    memory: &AttentionMemory,
    tokens: &[usize],
    dropout: &mut Dropout<'_>,
) -> Result<Vec<Var>, ModelError> {
    if tokens.len() < 2 {
        return Err(ModelError::EmptyCaption);
    }
    let mut state = DecoderState::zeros(tape, dec.cell.hidden);
    let mut dists = Vec::with_capacity(tokens.len() - 1);
    for &tok in &tokens[..tokens.len() - 1] {
        let att = attend(tape, dec, state.hidden, memory)?;
        state = decode_step(tape, dec, tok, state, att.context, dropout)?;
        dists.push(output_dist(tape, dec, state.hidden, dropout)?);
    }
    Ok(dists)
}
