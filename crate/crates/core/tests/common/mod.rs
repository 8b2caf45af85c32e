//! Independent reference implementations used as test oracles.
//!
//! Everything here is written with plain loops over `f64` slices and shares
//! no code with the library beyond reading parameter tensors.
#![allow(dead_code)]

use std::collections::HashMap;

use mtle::model::{DecoderParams, LstmParams};
use mtle::multitask::TaskSet;
use mtle::numerics::Tensor;

fn matvec(m: &Tensor, x: &[f64]) -> Vec<f64> {
    let (rows, cols) = (m.shape()[0], m.shape()[1]);
    assert_eq!(cols, x.len());
    (0..rows)
        .map(|r| (0..cols).map(|c| m.data()[r * cols + c] * x[c]).sum())
        .collect()
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn lstm(cell: &LstmParams, x: &[f64], h: &[f64], c: &[f64], extra: Option<&[f64]>) -> (Vec<f64>, Vec<f64>) {
    let n = h.len();
    let wx = matvec(&cell.w, x);
    let uh = matvec(&cell.u, h);
    let mut pre: Vec<f64> = (0..4 * n).map(|k| wx[k] + uh[k] + cell.b.data()[k]).collect();
    if let Some(e) = extra {
        for (p, v) in pre.iter_mut().zip(e) {
            *p += v;
        }
    }
    let mut h2 = vec![0.0; n];
    let mut c2 = vec![0.0; n];
    for k in 0..n {
        let i = sigmoid(pre[k]);
        let f = sigmoid(pre[n + k]);
        let o = sigmoid(pre[2 * n + k]);
        let z = pre[3 * n + k].tanh();
        c2[k] = i * z + f * c[k];
        h2[k] = o * c2[k].tanh();
    }
    (h2, c2)
}

fn run(cell: &LstmParams, inputs: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = cell.u.shape()[1];
    let (mut h, mut c) = (vec![0.0; n], vec![0.0; n]);
    inputs
        .iter()
        .map(|x| {
            (h, c) = lstm(cell, x, &h, &c, None);
            h.clone()
        })
        .collect()
}

/// Encoder outputs `[h→ᵗ; h←ᵗ; vᵗ]` computed directly.
pub fn encode_ref(model: &TaskSet, frames: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let v: Vec<Vec<f64>> = frames.iter().map(|f| matvec(&model.encoder.proj, f)).collect();
    let fwd = run(&model.encoder.forward, &v);
    let rev: Vec<Vec<f64>> = v.iter().rev().cloned().collect();
    let mut bwd = run(&model.encoder.backward, &rev);
    bwd.reverse();
    (0..v.len())
        .map(|t| [fwd[t].clone(), bwd[t].clone(), v[t].clone()].concat())
        .collect()
}

/// Per-step output distributions of one decoder teacher-forced on `tokens`.
pub fn teacher_force_ref(dec: &DecoderParams, nu: &[Vec<f64>], tokens: &[usize]) -> Vec<Vec<f64>> {
    let n = dec.cell.u.shape()[1];
    let d_w = dec.embedding.shape()[1];
    let (mut h, mut c) = (vec![0.0; n], vec![0.0; n]);
    let mut out = Vec::new();
    for &tok in &tokens[..tokens.len() - 1] {
        let q = matvec(&dec.attn_u, &h);
        let scores: Vec<f64> = nu
            .iter()
            .map(|nt| {
                let k = matvec(&dec.attn_w, nt);
                let s: Vec<f64> = k.iter().zip(&q).map(|(a, b)| (a + b).tanh()).collect();
                s.iter().zip(dec.attn_v.data()).map(|(a, b)| a * b).sum()
            })
            .collect();
        let w = softmax_ref(&scores);
        let mut ctx = vec![0.0; nu[0].len()];
        for (wt, nt) in w.iter().zip(nu) {
            for (cx, v) in ctx.iter_mut().zip(nt) {
                *cx += wt * v;
            }
        }
        let emb = &dec.embedding.data()[tok * d_w..(tok + 1) * d_w];
        let cv = matvec(&dec.context, &ctx);
        (h, c) = lstm(&dec.cell, emb, &h, &c, Some(&cv));
        let logits: Vec<f64> = matvec(&dec.out_w, &h)
            .iter()
            .zip(dec.out_b.data())
            .map(|(a, b)| a + b)
            .collect();
        out.push(softmax_ref(&logits));
    }
    out
}

pub fn softmax_ref(x: &[f64]) -> Vec<f64> {
    let m = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = x.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

#[derive(Debug, Clone, Copy)]
pub struct RefLoss {
    pub ce_reference: f64,
    pub ce_complement: f64,
    pub agreement: f64,
    pub total: f64,
}

/// The joint loss from directly computed forward probabilities.
pub fn loss_ref(model: &TaskSet, frames: &[Vec<f64>], x1: &[usize], xc: &[usize], eta: f64, lambda: f64) -> RefLoss {
    let nu = encode_ref(model, frames);
    let p1 = teacher_force_ref(&model.decoders[0], &nu, x1);
    let pc = teacher_force_ref(&model.decoders[1], &nu, xc);
    let pc1 = teacher_force_ref(&model.decoders[1], &nu, x1);
    let ce = |p: &[Vec<f64>], x: &[usize]| -> f64 { -(0..p.len()).map(|i| p[i][x[i + 1]].ln()).sum::<f64>() };
    let ce_reference = ce(&p1, x1);
    let ce_complement = ce(&pc, xc);
    let agreement = (0..p1.len()).map(|i| (p1[i][x1[i + 1]] - pc1[i][x1[i + 1]]).abs()).sum();
    RefLoss {
        ce_reference,
        ce_complement,
        agreement,
        total: lambda * (ce_reference + ce_complement + eta * agreement),
    }
}

pub fn toks(s: &str) -> Vec<String> {
    s.split_whitespace().map(str::to_owned).collect()
}

fn grams(s: &[String], n: usize) -> Vec<Vec<String>> {
    if s.len() < n {
        return Vec::new();
    }
    (0..=s.len() - n).map(|i| s[i..i + n].to_vec()).collect()
}

fn count(list: &[Vec<String>]) -> HashMap<Vec<String>, f64> {
    let mut m = HashMap::new();
    for g in list {
        *m.entry(g.clone()).or_insert(0.0) += 1.0;
    }
    m
}

/// CIDEr computed record by record with hash maps: TF-IDF vectors with
/// `idf = ln(N / df)`, cosine, Gaussian length penalty, mean over references
/// and orders, times 10.
pub fn cider_ref(records: &[(Vec<String>, Vec<Vec<String>>)], n_max: usize, sigma: f64) -> Vec<f64> {
    let n_docs = records.len() as f64;
    let mut scores = vec![0.0; records.len()];
    for n in 1..=n_max {
        let mut df: HashMap<Vec<String>, f64> = HashMap::new();
        for (_, refs) in records {
            let mut seen: Vec<Vec<String>> = refs.iter().flat_map(|r| grams(r, n)).collect();
            seen.sort();
            seen.dedup();
            for g in seen {
                *df.entry(g).or_insert(0.0) += 1.0;
            }
        }
        let vecd = |s: &[String]| -> HashMap<Vec<String>, f64> {
            count(&grams(s, n))
                .into_iter()
                .map(|(g, c)| {
                    let d = df.get(&g).copied().unwrap_or(1.0).max(1.0);
                    let w = c * (n_docs / d).ln();
                    (g, w)
                })
                .collect()
        };
        for (k, (cand, refs)) in records.iter().enumerate() {
            let vc = vecd(cand);
            let mut acc = 0.0;
            for r in refs {
                let vr = vecd(r);
                let dot: f64 = vc.iter().map(|(g, a)| a * vr.get(g).copied().unwrap_or(0.0)).sum();
                let na = vc.values().map(|a| a * a).sum::<f64>().sqrt();
                let nb = vr.values().map(|a| a * a).sum::<f64>().sqrt();
                let cos = if na > 0.0 && nb > 0.0 { dot / (na * nb) } else { 0.0 };
                let d = cand.len() as f64 - r.len() as f64;
                acc += cos * (-d * d / (2.0 * sigma * sigma)).exp();
            }
            scores[k] += acc / refs.len() as f64;
        }
    }
    scores.iter().map(|s| 10.0 * s / n_max as f64).collect()
}

/// Cosine distance from raw vectors.
pub fn delta_ref(u: &[f64], v: &[f64]) -> f64 {
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    let nu = u.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nv = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    1.0 - dot / (nu * nv)
}

/// Index `j ≠ i` with the largest distance, lowest index on ties.
pub fn farthest_ref(delta: &[Vec<f64>], i: usize) -> Option<usize> {
    let mut best: Option<usize> = None;
    for j in 0..delta.len() {
        if j == i {
            continue;
        }
        match best {
            Some(b) if delta[i][j] <= delta[i][b] => {}
            _ => best = Some(j),
        }
    }
    best
}
