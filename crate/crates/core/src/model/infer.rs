use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::decoder::{attend, decode_step, output_dist, AttentionMemory, DecoderState};
use super::encoder::{encode, Dropout};
use super::{DecoderParams, DecoderVars, EncoderParams, ModelError};
use crate::dataio::{BOS, EOS};
use crate::numerics::{Tape, Var};

/// How captions are generated at inference time.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "mode")]
pub enum DecodeMode {
    /// Argmax token per step from one decoder.
    Greedy,
    /// Length-normalized beam search of the given width on one decoder.
    Beam { width: usize },
    /// Greedy decoding on the mean of all decoders' distributions.
    Ensemble,
}

impl fmt::Display for DecodeMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DecodeMode::Greedy => f.write_str("greedy"),
            DecodeMode::Beam { width } => write!(f, "beam:{width}"),
            DecodeMode::Ensemble => f.write_str("ensemble"),
        }
    }
}

impl FromStr for DecodeMode {
    type Err = ModelError;

    /// Accepts `greedy`, `ensemble`, `beam` (width 5), `beam:K` and `beam(K)`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        match s {
            "greedy" => return Ok(DecodeMode::Greedy),
            "ensemble" => return Ok(DecodeMode::Ensemble),
            "beam" => return Ok(DecodeMode::Beam { width: 5 }),
            _ => {}
        }
        let width = s
            .strip_prefix("beam:")
            .or_else(|| s.strip_prefix("beam(").and_then(|r| r.strip_suffix(')')))
            .and_then(|w| w.parse::<usize>().ok())
            .filter(|&w| w >= 1)
            .ok_or_else(|| ModelError::UnknownMode(s.to_owned()))?;
        Ok(DecodeMode::Beam { width })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct InferOptions {
    pub mode: DecodeMode,
    pub max_len: usize,
    /// Decoder used by greedy and beam modes.
    pub decoder: usize,
}

impl Default for InferOptions {
    fn default() -> Self {
        Self {
            mode: DecodeMode::Greedy,
            max_len: 20,
            decoder: 0,
        }
    }
}

struct Session {
    tape: Tape,
    decoders: Vec<(DecoderVars, AttentionMemory)>,
}

impl Session {
    fn new(encoder: &EncoderParams, decoders: &[&DecoderParams], frames: &[Vec<f64>]) -> Result<Self, ModelError> {
        let mut tape = Tape::new();
        let ev = encoder.bind(&mut tape, false);
        let nu = encode(&mut tape, &ev, frames, &mut Dropout::disabled())?;
        let decoders = decoders
            .iter()
            .map(|d| {
                let dv = d.bind(&mut tape, false);
                let mem = AttentionMemory::new(&mut tape, &dv, &nu)?;
                Ok((dv, mem))
            })
            .collect::<Result<Vec<_>, ModelError>>()?;
        Ok(Self { tape, decoders })
    }

    /// Advances decoder `k` on `token`, returning the new state and the
    /// next-token distribution.
    fn step(&mut self, k: usize, token: usize, state: DecoderState) -> Result<(DecoderState, Vec<f64>), ModelError> {
        let (dv, mem) = &self.decoders[k];
        let att = attend(&mut self.tape, dv, state.hidden, mem)?;
        let next = decode_step(&mut self.tape, dv, token, state, att.context, &mut Dropout::disabled())?;
        let p: Var = output_dist(&mut self.tape, dv, next.hidden, &mut Dropout::disabled())?;
        Ok((next, self.tape.value(p).data().to_vec()))
    }

    fn zero_state(&mut self, k: usize) -> DecoderState {
        let h = self.decoders[k].0.cell.hidden;
        DecoderState::zeros(&mut self.tape, h)
    }
}

/// Index of the largest entry, lowest index on ties.
pub fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in p.iter().enumerate() {
        if v > p[best] {
            best = i;
        }
    }
    best
}

/// Entrywise mean of equal-length distributions.
pub fn mean_distribution(dists: &[Vec<f64>]) -> Result<Vec<f64>, ModelError> {
    let first = dists.first().ok_or(ModelError::Config("no distributions to average".into()))?;
    let n = dists.len() as f64;
    let mut out = vec![0.0; first.len()];
    for d in dists {
        if d.len() != out.len() {
            return Err(ModelError::Config(format!(
                "distribution lengths differ: {} vs {}",
                out.len(),
                d.len()
            )));
        }
        for (o, v) in out.iter_mut().zip(d) {
            *o += v;
        }
    }
    out.iter_mut().for_each(|o| *o /= n);
    Ok(out)
}

/// Generates a caption (token indices, without BOS/EOS) for `frames`.
pub fn infer(
    encoder: &EncoderParams,
    decoders: &[DecoderParams],
    frames: &[Vec<f64>],
    opts: &InferOptions,
) -> Result<Vec<usize>, ModelError> {
    if opts.max_len == 0 {
        return Err(ModelError::Config("max_len must be at least 1".into()));
    }
    if frames.is_empty() {
        return Err(ModelError::EmptySequence);
    }
    match opts.mode {
        DecodeMode::Greedy | DecodeMode::Beam { .. } => {
            let dec = decoders.get(opts.decoder).ok_or(ModelError::NoSuchDecoder {
                index: opts.decoder,
                count: decoders.len(),
            })?;
            let mut session = Session::new(encoder, &[dec], frames)?;
            match opts.mode {
                DecodeMode::Beam { width } => beam(&mut session, width, opts.max_len),
                _ => greedy(&mut session, opts.max_len),
            }
        }
        DecodeMode::Ensemble => {
            if decoders.is_empty() {
                return Err(ModelError::NoSuchDecoder { index: 0, count: 0 });
            }
            let refs: Vec<&DecoderParams> = decoders.iter().collect();
            let mut session = Session::new(encoder, &refs, frames)?;
            ensemble(&mut session, opts.max_len)
        }
    }
}

fn greedy(session: &mut Session, max_len: usize) -> Result<Vec<usize>, ModelError> {
    let mut state = session.zero_state(0);
    let mut token = BOS;
    let mut out = Vec::new();
    for _ in 0..max_len {
        let (next, p) = session.step(0, token, state)?;
        state = next;
        token = argmax(&p);
        if token == EOS {
            break;
        }
        out.push(token);
    }
    Ok(out)
}

fn ensemble(session: &mut Session, max_len: usize) -> Result<Vec<usize>, ModelError> {
    let n = session.decoders.len();
    let mut states: Vec<DecoderState> = (0..n).map(|k| session.zero_state(k)).collect();
    let mut token = BOS;
    let mut out = Vec::new();
    for _ in 0..max_len {
        let mut dists = Vec::with_capacity(n);
        for (k, state) in states.iter_mut().enumerate() {
            let (next, p) = session.step(k, token, *state)?;
            *state = next;
            dists.push(p);
        }
        token = argmax(&mean_distribution(&dists)?);
        if token == EOS {
            break;
        }
        out.push(token);
    }
    Ok(out)
}

#[derive(Clone, Debug)]
struct Hypothesis {
    tokens: Vec<usize>,
    log_prob: f64,
    state: DecoderState,
    finished: bool,
}

impl Hypothesis {
    /// Average log-probability per generated token (EOS included).
    fn score(&self) -> f64 {
        self.log_prob / self.tokens.len().max(1) as f64
    }
}

fn beam(session: &mut Session, width: usize, max_len: usize) -> Result<Vec<usize>, ModelError> {
    if width == 0 {
        return Err(ModelError::UnknownMode("beam:0".into()));
    }
    let start = session.zero_state(0);
    let mut live = vec![Hypothesis {
        tokens: Vec::new(),
        log_prob: 0.0,
        state: start,
        finished: false,
    }];
    let mut finished: Vec<Hypothesis> = Vec::new();
    for _ in 0..max_len {
        let mut candidates = Vec::new();
        for hyp in &live {
            let last = hyp.tokens.last().copied().unwrap_or(BOS);
            let (next, p) = session.step(0, last, hyp.state)?;
            for (tok, &prob) in p.iter().enumerate() {
                if prob <= 0.0 {
                    continue;
                }
                let mut tokens = hyp.tokens.clone();
                tokens.push(tok);
                candidates.push(Hypothesis {
                    tokens,
                    log_prob: hyp.log_prob + prob.ln(),
                    state: next,
                    finished: tok == EOS,
                });
            }
        }
        // Stable sort keeps (beam, token) order among equal scores.
        candidates.sort_by(|a, b| b.score().total_cmp(&a.score()));
        candidates.truncate(width);
        live.clear();
        for c in candidates {
            if c.finished {
                finished.push(c);
            } else {
                live.push(c);
            }
        }
        if live.is_empty() || finished.len() >= width {
            break;
        }
    }
    let best = finished
        .iter()
        .chain(live.iter())
        .fold(None::<&Hypothesis>, |best, h| match best {
            Some(b) if b.score() >= h.score() => Some(b),
            _ => Some(h),
        })
        .expect("at least one hypothesis");
    Ok(best.tokens.iter().copied().filter(|&t| t != EOS).collect())
}
