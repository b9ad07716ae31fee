//! The four probe architectures, their forward passes and analytic gradients.

use std::fmt;

use ndarray::{Array1, Array2, ArrayView1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::pairs::{CandidateSet, PairExample};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arch {
    Linear,
    SimMlp,
    EnhMlp,
    Attention,
}

impl Arch {
    pub const ALL: [Arch; 4] = [Arch::Linear, Arch::SimMlp, Arch::EnhMlp, Arch::Attention];

    pub fn name(self) -> &'static str {
        match self {
            Arch::Linear => "linear",
            Arch::SimMlp => "sim_mlp",
            Arch::EnhMlp => "enh_mlp",
            Arch::Attention => "attention",
        }
    }
}

impl fmt::Display for Arch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Arch {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Arch::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::validation(format!("unknown probe architecture `{s}`")))
    }
}

/// Two-layer perceptron with a two-logit head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "arch", rename_all = "snake_case")]
pub enum ProbeParams {
    Linear { w: Array1<f64>, b: f64 },
    SimMlp(Mlp),
    EnhMlp(Mlp),
    Attention { wq: Array2<f64>, wk: Array2<f64> },
}

fn feature_width(arch: Arch, d: usize) -> usize {
    match arch {
        Arch::EnhMlp => 4 * d,
        _ => 2 * d,
    }
}

impl ProbeParams {
    pub fn zeros(arch: Arch, d: usize) -> Self {
        let f = feature_width(arch, d);
        let mlp = || Mlp {
            w1: Array2::zeros((d, f)),
            b1: Array1::zeros(d),
            w2: Array2::zeros((2, d)),
            b2: Array1::zeros(2),
        };
        match arch {
            Arch::Linear => ProbeParams::Linear {
                w: Array1::zeros(f),
                b: 0.0,
            },
            Arch::SimMlp => ProbeParams::SimMlp(mlp()),
            Arch::EnhMlp => ProbeParams::EnhMlp(mlp()),
            Arch::Attention => ProbeParams::Attention {
                wq: Array2::zeros((d, d)),
                wk: Array2::zeros((d, d)),
            },
        }
    }

    /// Matrices and weight vectors uniform in `±1/sqrt(fan_in)`, biases zero.
    pub fn init(arch: Arch, d: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut uniform = |rows: usize, cols: usize| {
            let bound = 1.0 / (cols as f64).sqrt();
            Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-bound..=bound))
        };
        let f = feature_width(arch, d);
        let mlp = |uniform: &mut dyn FnMut(usize, usize) -> Array2<f64>| Mlp {
            w1: uniform(d, f),
            b1: Array1::zeros(d),
            w2: uniform(2, d),
            b2: Array1::zeros(2),
        };
        match arch {
            Arch::Linear => ProbeParams::Linear {
                w: uniform(1, f).into_shape_with_order(f).expect("1 x f reshapes to f"),
                b: 0.0,
            },
            Arch::SimMlp => ProbeParams::SimMlp(mlp(&mut uniform)),
            Arch::EnhMlp => ProbeParams::EnhMlp(mlp(&mut uniform)),
            Arch::Attention => ProbeParams::Attention {
                wq: uniform(d, d),
                wk: uniform(d, d),
            },
        }
    }

    /// `Wq = Wk = I`: raw scaled dot-product attention.
    pub fn identity_attention(d: usize) -> Self {
        ProbeParams::Attention {
            wq: Array2::eye(d),
            wk: Array2::eye(d),
        }
    }

    pub fn arch(&self) -> Arch {
        match self {
            ProbeParams::Linear { .. } => Arch::Linear,
            ProbeParams::SimMlp(_) => Arch::SimMlp,
            ProbeParams::EnhMlp(_) => Arch::EnhMlp,
            ProbeParams::Attention { .. } => Arch::Attention,
        }
    }

    /// Hidden size the parameters were built for.
    pub fn dim(&self) -> usize {
        match self {
            ProbeParams::Linear { w, .. } => w.len() / 2,
            ProbeParams::SimMlp(m) | ProbeParams::EnhMlp(m) => m.b1.len(),
            ProbeParams::Attention { wq, .. } => wq.nrows(),
        }
    }

    /// Named parameter blocks in a fixed order.
    pub fn blocks(&self) -> Vec<(&'static str, &[f64])> {
        fn s<D: ndarray::Dimension>(a: &ndarray::Array<f64, D>) -> &[f64] {
            a.as_slice().expect("parameters are contiguous")
        }
        match self {
            ProbeParams::Linear { w, b } => vec![("w", s(w)), ("b", std::slice::from_ref(b))],
            ProbeParams::SimMlp(m) | ProbeParams::EnhMlp(m) => {
                vec![("W1", s(&m.w1)), ("b1", s(&m.b1)), ("W2", s(&m.w2)), ("b2", s(&m.b2))]
            }
            ProbeParams::Attention { wq, wk } => vec![("Wq", s(wq)), ("Wk", s(wk))],
        }
    }

    fn blocks_mut(&mut self) -> Vec<(&'static str, &mut [f64])> {
        fn s<D: ndarray::Dimension>(a: &mut ndarray::Array<f64, D>) -> &mut [f64] {
            a.as_slice_mut().expect("parameters are contiguous")
        }
        match self {
            ProbeParams::Linear { w, b } => vec![("w", s(w)), ("b", std::slice::from_mut(b))],
            ProbeParams::SimMlp(m) | ProbeParams::EnhMlp(m) => vec![
                ("W1", s(&mut m.w1)),
                ("b1", s(&mut m.b1)),
                ("W2", s(&mut m.w2)),
                ("b2", s(&mut m.b2)),
            ],
            ProbeParams::Attention { wq, wk } => vec![("Wq", s(wq)), ("Wk", s(wk))],
        }
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.blocks().into_iter().flat_map(|(_, b)| b.iter().copied()).collect()
    }

    pub fn len(&self) -> usize {
        self.blocks().iter().map(|(_, b)| b.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Same architecture and shapes, entries taken from `values`.
    pub fn unflatten_like(&self, values: &[f64]) -> Result<Self> {
        if values.len() != self.len() {
            return Err(Error::validation(format!(
                "{} values for {} parameters",
                values.len(),
                self.len()
            )));
        }
        let mut out = self.clone();
        let mut rest = values;
        for (_, block) in out.blocks_mut() {
            let (head, tail) = rest.split_at(block.len());
            block.copy_from_slice(head);
            rest = tail;
        }
        Ok(out)
    }

    /// `self += alpha * other`; both must share architecture and shapes.
    pub fn axpy(&mut self, alpha: f64, other: &ProbeParams) -> Result<()> {
        self.check_like(other)?;
        for ((_, dst), (_, src)) in self.blocks_mut().into_iter().zip(other.blocks()) {
            dst.iter_mut().zip(src).for_each(|(x, y)| *x += alpha * y);
        }
        Ok(())
    }

    fn check_like(&self, other: &ProbeParams) -> Result<()> {
        let shapes = |p: &ProbeParams| p.blocks().iter().map(|(_, b)| b.len()).collect::<Vec<_>>();
        if self.arch() != other.arch() || shapes(self) != shapes(other) {
            return Err(Error::validation("parameter structures differ"));
        }
        Ok(())
    }

    /// Shapes match the architecture for hidden size `d` and all entries are finite.
    pub fn validate(&self, d: usize) -> Result<()> {
        let expected = ProbeParams::zeros(self.arch(), d);
        let dims_ok = match (self, &expected) {
            (ProbeParams::Linear { w, .. }, ProbeParams::Linear { w: w0, .. }) => w.dim() == w0.dim(),
            (ProbeParams::SimMlp(m), ProbeParams::SimMlp(m0)) | (ProbeParams::EnhMlp(m), ProbeParams::EnhMlp(m0)) => {
                m.w1.dim() == m0.w1.dim()
                    && m.b1.dim() == m0.b1.dim()
                    && m.w2.dim() == m0.w2.dim()
                    && m.b2.dim() == m0.b2.dim()
            }
            (ProbeParams::Attention { wq, wk }, ProbeParams::Attention { wq: q0, .. }) => {
                wq.dim() == q0.dim() && wk.dim() == q0.dim()
            }
            _ => false,
        };
        if !dims_ok {
            return Err(Error::validation(format!(
                "{} parameters do not match hidden size {d}",
                self.arch()
            )));
        }
        check_finite(self)
    }
}

fn check_finite(p: &ProbeParams) -> Result<()> {
    for (name, block) in p.blocks() {
        if block.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical {
                block: name.into(),
                message: "non-finite value".into(),
            });
        }
    }
    Ok(())
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

fn check_pair(d: usize, h_e: &[f64], h_a: &[f64]) -> Result<()> {
    if h_e.len() != d || h_a.len() != d {
        return Err(Error::validation(format!(
            "probe expects vectors of dim {d}, got {} and {}",
            h_e.len(),
            h_a.len()
        )));
    }
    Ok(())
}

/// `[h_e; h_a]`, extended with `|h_e - h_a|` and `h_e ⊙ h_a` for the enhanced MLP.
pub fn features(arch: Arch, h_e: &[f64], h_a: &[f64]) -> Array1<f64> {
    let mut z: Vec<f64> = h_e.iter().chain(h_a).copied().collect();
    if arch == Arch::EnhMlp {
        z.extend(h_e.iter().zip(h_a).map(|(x, y)| (x - y).abs()));
        z.extend(h_e.iter().zip(h_a).map(|(x, y)| x * y));
    }
    Array1::from(z)
}

struct MlpPass {
    z: Array1<f64>,
    pre: Array1<f64>,
    hidden: Array1<f64>,
    logits: [f64; 2],
}

fn mlp_pass(m: &Mlp, z: Array1<f64>) -> MlpPass {
    let pre = m.w1.dot(&z) + &m.b1;
    let hidden = pre.mapv(|v| v.max(0.0));
    let l = m.w2.dot(&hidden) + &m.b2;
    MlpPass {
        z,
        pre,
        hidden,
        logits: [l[0], l[1]],
    }
}

fn mlp_params(params: &ProbeParams, arch: Arch) -> Result<&Mlp> {
    match (params, arch) {
        (ProbeParams::SimMlp(m), Arch::SimMlp) | (ProbeParams::EnhMlp(m), Arch::EnhMlp) => Ok(m),
        _ => Err(Error::validation(format!("expected {arch} parameters, got {}", params.arch()))),
    }
}

pub fn forward_linear(params: &ProbeParams, h_e: &[f64], h_a: &[f64]) -> Result<f64> {
    let ProbeParams::Linear { w, b } = params else {
        return Err(Error::validation(format!("expected linear parameters, got {}", params.arch())));
    };
    check_pair(params.dim(), h_e, h_a)?;
    Ok(sigmoid(w.dot(&features(Arch::Linear, h_e, h_a)) + b))
}

fn forward_mlp(params: &ProbeParams, arch: Arch, h_e: &[f64], h_a: &[f64]) -> Result<f64> {
    let m = mlp_params(params, arch)?;
    check_pair(params.dim(), h_e, h_a)?;
    let pass = mlp_pass(m, features(arch, h_e, h_a));
    Ok(sigmoid(pass.logits[1] - pass.logits[0]))
}

/// Positive-class probability of the two-logit softmax.
pub fn forward_sim_mlp(params: &ProbeParams, h_e: &[f64], h_a: &[f64]) -> Result<f64> {
    forward_mlp(params, Arch::SimMlp, h_e, h_a)
}

pub fn forward_enh_mlp(params: &ProbeParams, h_e: &[f64], h_a: &[f64]) -> Result<f64> {
    forward_mlp(params, Arch::EnhMlp, h_e, h_a)
}

/// Probability that `(h_e, h_a)` is a true pair, for the three pair classifiers.
pub fn predict(params: &ProbeParams, h_e: &[f64], h_a: &[f64]) -> Result<f64> {
    match params.arch() {
        Arch::Linear => forward_linear(params, h_e, h_a),
        Arch::SimMlp => forward_sim_mlp(params, h_e, h_a),
        Arch::EnhMlp => forward_enh_mlp(params, h_e, h_a),
        Arch::Attention => Err(Error::validation(
            "attention probes score candidate sets, not pairs",
        )),
    }
}

/// Query, per-candidate keys, and scaled logits.
type AttentionPass = (Array1<f64>, Vec<Array1<f64>>, Vec<f64>);

fn attention_logits(wq: &Array2<f64>, wk: &Array2<f64>, h_e: &[f64], candidates: &[Vec<f64>]) -> Result<AttentionPass> {
    let d = wq.nrows();
    if candidates.is_empty() {
        return Err(Error::validation("attention needs at least one candidate"));
    }
    if h_e.len() != d || candidates.iter().any(|c| c.len() != d) {
        return Err(Error::validation(format!("attention probe expects vectors of dim {d}")));
    }
    let scale = (d as f64).sqrt();
    let q = wq.dot(&ArrayView1::from(h_e));
    let keys: Vec<Array1<f64>> = candidates.iter().map(|a| wk.dot(&ArrayView1::from(a.as_slice()))).collect();
    let logits = keys.iter().map(|k| q.dot(k) / scale).collect();
    Ok((q, keys, logits))
}

/// Softmax over candidates of `(Wq h_e)ᵀ (Wk h_a) / sqrt(d)`.
pub fn attention_scores(params: &ProbeParams, h_e: &[f64], candidates: &[Vec<f64>]) -> Result<Vec<f64>> {
    let ProbeParams::Attention { wq, wk } = params else {
        return Err(Error::validation(format!("expected attention parameters, got {}", params.arch())));
    };
    let (_, _, logits) = attention_logits(wq, wk, h_e, candidates)?;
    Ok(softmax(&logits))
}

/// Training input matching the probe family.
#[derive(Debug, Clone, Copy)]
pub enum ProbeBatch<'a> {
    Pairs(&'a [PairExample]),
    Candidates(&'a [CandidateSet]),
}

impl ProbeBatch<'_> {
    pub fn len(&self) -> usize {
        match self {
            ProbeBatch::Pairs(p) => p.len(),
            ProbeBatch::Candidates(c) => c.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn outer(a: &Array1<f64>, b: &Array1<f64>) -> Array2<f64> {
    let col = a.view().insert_axis(ndarray::Axis(1));
    let row = b.view().insert_axis(ndarray::Axis(0));
    col.dot(&row)
}

/// Mean cross-entropy over the batch and its gradient, shaped like `params`.
pub fn loss_and_gradients(params: &ProbeParams, batch: ProbeBatch<'_>) -> Result<(f64, ProbeParams)> {
    if batch.is_empty() {
        return Err(Error::validation("empty batch"));
    }
    let d = params.dim();
    let mut grad = ProbeParams::zeros(params.arch(), d);
    let mut loss = 0.0;
    match (params, batch) {
        (ProbeParams::Linear { w, b }, ProbeBatch::Pairs(pairs)) => {
            let ProbeParams::Linear { w: gw, b: gb } = &mut grad else { unreachable!() };
            for p in pairs {
                check_pair(d, &p.h_e, &p.h_a)?;
                let z = features(Arch::Linear, &p.h_e, &p.h_a);
                let s = w.dot(&z) + b;
                let y = f64::from(p.label);
                loss += y * softplus(-s) + (1.0 - y) * softplus(s);
                let g = sigmoid(s) - y;
                gw.scaled_add(g, &z);
                *gb += g;
            }
        }
        (ProbeParams::SimMlp(m), ProbeBatch::Pairs(pairs)) | (ProbeParams::EnhMlp(m), ProbeBatch::Pairs(pairs)) => {
            let arch = params.arch();
            let (ProbeParams::SimMlp(gm) | ProbeParams::EnhMlp(gm)) = &mut grad else { unreachable!() };
            for p in pairs {
                check_pair(d, &p.h_e, &p.h_a)?;
                let pass = mlp_pass(m, features(arch, &p.h_e, &p.h_a));
                let probs = softmax(&pass.logits);
                let y = usize::from(p.label == 1);
                let max = pass.logits[0].max(pass.logits[1]);
                let log_sum = max + ((pass.logits[0] - max).exp() + (pass.logits[1] - max).exp()).ln();
                loss += log_sum - pass.logits[y];
                let mut dl = Array1::from(probs);
                dl[y] -= 1.0;
                gm.w2 += &outer(&dl, &pass.hidden);
                gm.b2 += &dl;
                let dh = m.w2.t().dot(&dl);
                let du = dh * pass.pre.mapv(|v| if v > 0.0 { 1.0 } else { 0.0 });
                gm.w1 += &outer(&du, &pass.z);
                gm.b1 += &du;
            }
        }
        (ProbeParams::Attention { wq, wk }, ProbeBatch::Candidates(sets)) => {
            let ProbeParams::Attention { wq: gq, wk: gk } = &mut grad else { unreachable!() };
            let scale = (d as f64).sqrt();
            for set in sets {
                if set.target >= set.candidates.len() {
                    return Err(Error::validation(format!(
                        "target {} outside {} candidates",
                        set.target,
                        set.candidates.len()
                    )));
                }
                let (q, keys, logits) = attention_logits(wq, wk, &set.h_e, &set.candidates)?;
                let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let log_sum = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
                loss += log_sum - logits[set.target];
                let mut g = softmax(&logits);
                g[set.target] -= 1.0;
                let mut dq = Array1::<f64>::zeros(d);
                for (gj, (k, a)) in g.iter().zip(keys.iter().zip(&set.candidates)) {
                    dq.scaled_add(gj / scale, k);
                    let dk = &q * (gj / scale);
                    *gk += &outer(&dk, &Array1::from(a.clone()));
                }
                *gq += &outer(&dq, &Array1::from(set.h_e.clone()));
            }
        }
        (p, b) => {
            let kind = match b {
                ProbeBatch::Pairs(_) => "pair examples",
                ProbeBatch::Candidates(_) => "candidate sets",
            };
            return Err(Error::validation(format!("{} probe cannot train on {kind}", p.arch())));
        }
    }
    let n = batch.len() as f64;
    let mut mean = ProbeParams::zeros(params.arch(), d);
    mean.axpy(1.0 / n, &grad)?;
    loss /= n;
    if !loss.is_finite() {
        return Err(Error::Numerical {
            block: "loss".into(),
            message: format!("loss evaluated to {loss}"),
        });
    }
    check_finite(&mean)?;
    Ok((loss, mean))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair(h_e: &[f64], h_a: &[f64], label: u8) -> PairExample {
        PairExample {
            sample_id: "s".into(),
            element_index: 0,
            argument_index: usize::from(label == 0),
            h_e: h_e.to_vec(),
            h_a: h_a.to_vec(),
            label,
        }
    }

    #[test]
    fn zero_params_give_half() {
        for arch in [Arch::Linear, Arch::SimMlp, Arch::EnhMlp] {
            let p = ProbeParams::zeros(arch, 3);
            assert_eq!(predict(&p, &[1.0, -2.0, 0.5], &[0.0, 4.0, 1.0]).unwrap(), 0.5);
        }
    }

    #[test]
    fn linear_saturates_and_checks_shapes() {
        let ProbeParams::Linear { w, .. } = ProbeParams::zeros(Arch::Linear, 2) else { unreachable!() };
        let p = ProbeParams::Linear { w, b: 20.0 };
        assert!((forward_linear(&p, &[0.0, 0.0], &[0.0, 0.0]).unwrap() - 1.0).abs() < 1e-8);
        assert!(forward_linear(&p, &[0.0], &[0.0, 0.0]).is_err());
    }

    #[test]
    fn relu_kill_gives_half() {
        let mut p = ProbeParams::init(Arch::SimMlp, 2, 3);
        if let ProbeParams::SimMlp(m) = &mut p {
            m.w1.fill(0.0);
            m.b1.fill(-1.0);
        }
        assert_eq!(forward_sim_mlp(&p, &[1.0, 2.0], &[3.0, 4.0]).unwrap(), 0.5);
    }

    #[test]
    fn enhanced_features() {
        let z = features(Arch::EnhMlp, &[1.0, 2.0], &[3.0, 1.0]);
        assert_eq!(z.to_vec(), vec![1.0, 2.0, 3.0, 1.0, 2.0, 1.0, 3.0, 2.0]);
        let u = [0.5, -3.0];
        let z = features(Arch::EnhMlp, &u, &u);
        assert_eq!(&z.to_vec()[4..], &[0.0, 0.0, 0.25, 9.0]);
        assert!(features(Arch::EnhMlp, &[0.0; 3], &[0.0; 3]).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn attention_hand_case() {
        let p = ProbeParams::identity_attention(1);
        let a = attention_scores(&p, &[1.0], &[vec![1.0], vec![0.0]]).unwrap();
        let e = std::f64::consts::E;
        assert!((a[0] - e / (e + 1.0)).abs() < 1e-12);
        assert!((a[1] - 1.0 / (e + 1.0)).abs() < 1e-12);
        assert_eq!(attention_scores(&p, &[1.0], &[vec![3.0]]).unwrap(), vec![1.0]);
        let u = attention_scores(&p, &[1.0], &[vec![2.0], vec![2.0], vec![2.0]]).unwrap();
        assert!(u.iter().all(|v| (v - 1.0 / 3.0).abs() < 1e-15));
        assert!(attention_scores(&p, &[1.0], &[]).is_err());
    }

    #[test]
    fn ln2_loss_at_half() {
        let p = ProbeParams::zeros(Arch::Linear, 2);
        let batch = [pair(&[1.0, 2.0], &[3.0, 4.0], 1)];
        let (loss, _) = loss_and_gradients(&p, ProbeBatch::Pairs(&batch)).unwrap();
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn confident_loss_near_zero() {
        let ProbeParams::Linear { w, .. } = ProbeParams::zeros(Arch::Linear, 1) else { unreachable!() };
        let p = ProbeParams::Linear { w, b: 40.0 };
        let batch = [pair(&[0.0], &[0.0], 1)];
        let (loss, _) = loss_and_gradients(&p, ProbeBatch::Pairs(&batch)).unwrap();
        assert!(loss < 1e-15);
    }

    #[test]
    fn flatten_round_trip_and_serde() {
        for arch in Arch::ALL {
            let p = ProbeParams::init(arch, 3, 9);
            let q = p.unflatten_like(&p.flatten()).unwrap();
            assert_eq!(p, q);
            let json = serde_json::to_string(&p).unwrap();
            assert!(json.contains(&format!("\"arch\":\"{arch}\"")));
            let back: ProbeParams = serde_json::from_str(&json).unwrap();
            assert_eq!(back, p);
            back.validate(3).unwrap();
            assert!(back.validate(4).is_err());
        }
    }

    #[test]
    fn non_finite_block_named() {
        let mut p = ProbeParams::zeros(Arch::SimMlp, 2);
        if let ProbeParams::SimMlp(m) = &mut p {
            m.b2[0] = f64::NAN;
        }
        match p.validate(2) {
            Err(Error::Numerical { block, .. }) => assert_eq!(block, "b2"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn mismatched_batch_kind() {
        let p = ProbeParams::zeros(Arch::Attention, 2);
        assert!(loss_and_gradients(&p, ProbeBatch::Pairs(&[pair(&[0.0; 2], &[0.0; 2], 1)])).is_err());
    }
}
