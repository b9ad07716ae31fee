use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use scenecog::probe::*;

fn random_vec(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn random_pairs(rng: &mut ChaCha8Rng, d: usize, n: usize) -> Vec<PairExample> {
    (0..n)
        .map(|i| PairExample {
            sample_id: format!("s{i}"),
            element_index: i,
            argument_index: i,
            h_e: random_vec(rng, d),
            h_a: random_vec(rng, d),
            label: (i % 2) as u8,
        })
        .collect()
}

fn random_sets(rng: &mut ChaCha8Rng, d: usize, n: usize) -> Vec<CandidateSet> {
    (0..n)
        .map(|i| {
            let k = 2 + i % 3;
            CandidateSet {
                sample_id: format!("s{i}"),
                element_index: 0,
                h_e: random_vec(rng, d),
                candidates: (0..k).map(|_| random_vec(rng, d)).collect(),
                target: i % k,
            }
        })
        .collect()
}

fn loss_at(params: &ProbeParams, flat: &[f64], batch: ProbeBatch<'_>) -> f64 {
    loss_and_gradients(&params.unflatten_like(flat).unwrap(), batch).unwrap().0
}

/// Largest relative error between the analytic gradient and central differences.
fn max_rel_error(params: &ProbeParams, batch: ProbeBatch<'_>, step: f64) -> f64 {
    let (_, grad) = loss_and_gradients(params, batch).unwrap();
    let analytic = grad.flatten();
    let base = params.flatten();
    let mut worst = 0.0f64;
    for i in 0..base.len() {
        let mut plus = base.clone();
        let mut minus = base.clone();
        plus[i] += step;
        minus[i] -= step;
        let numeric = (loss_at(params, &plus, batch) - loss_at(params, &minus, batch)) / (2.0 * step);
        let denom = analytic[i].abs().max(numeric.abs()).max(1e-8);
        worst = worst.max((analytic[i] - numeric).abs() / denom);
    }
    worst
}

#[test]
fn gradients_match_finite_differences() {
    let d = 6;
    for arch in Arch::ALL {
        for instance in 0..5u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + instance);
            let params = ProbeParams::init(arch, d, instance);
            let pairs = random_pairs(&mut rng, d, 4);
            let sets = random_sets(&mut rng, d, 4);
            let batch = if arch == Arch::Attention {
                ProbeBatch::Candidates(&sets)
            } else {
                ProbeBatch::Pairs(&pairs)
            };
            let err = max_rel_error(&params, batch, 1e-5);
            assert!(err < 1e-4, "{arch} instance {instance}: {err}");
        }
    }
}

/// Straight-line re-implementation of the two-layer probe.
fn mlp_oracle(m: &Mlp, z: &[f64]) -> f64 {
    let d = m.b1.len();
    let mut hidden = vec![0.0; d];
    for (r, h) in hidden.iter_mut().enumerate() {
        let mut s = m.b1[r];
        for (c, zc) in z.iter().enumerate() {
            s += m.w1[[r, c]] * zc;
        }
        *h = if s > 0.0 { s } else { 0.0 };
    }
    let mut logits = [0.0; 2];
    for (k, l) in logits.iter_mut().enumerate() {
        *l = m.b2[k] + (0..d).map(|j| m.w2[[k, j]] * hidden[j]).sum::<f64>();
    }
    logits[1].exp() / (logits[0].exp() + logits[1].exp())
}

#[test]
fn mlp_forward_matches_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for seed in 0..20 {
        let mut p = ProbeParams::init(Arch::SimMlp, 2, seed);
        if let ProbeParams::SimMlp(m) = &mut p {
            m.b1.iter_mut().for_each(|b| *b = rng.random_range(-0.5..0.5));
            m.b2.iter_mut().for_each(|b| *b = rng.random_range(-0.5..0.5));
        }
        let (h_e, h_a) = (random_vec(&mut rng, 2), random_vec(&mut rng, 2));
        let ProbeParams::SimMlp(m) = &p else { unreachable!() };
        let z: Vec<f64> = h_e.iter().chain(&h_a).copied().collect();
        let got = forward_sim_mlp(&p, &h_e, &h_a).unwrap();
        assert!((got - mlp_oracle(m, &z)).abs() < 1e-9);
    }
}

#[test]
fn build_pairs_counts_and_labels() {
    let dir = tempfile::tempdir().unwrap();
    let mut w = ArchiveWriter::create(dir.path()).unwrap();
    let text = "aa bb cc dd ee ff";
    let spans: Vec<_> = (0..6).map(|i| scenecog::corpus::Span::new(3 * i, 3 * i + 2).unwrap()).collect();
    let mut samples = Vec::new();
    for s in 0..100 {
        let m = ndarray::Array2::from_shape_fn((6, 4), |(t, j)| (s * 7 + t * 3 + j) as f32 * 0.01);
        let id = format!("k{s:03}");
        w.add_sample(&id, text, spans.clone(), &[(1, m.clone()), (2, m.clone()), (3, m)]).unwrap();
        samples.push(ProbeSample {
            sample_id: id,
            pairs: (0..3)
                .map(|i| SpanPair {
                    element: spans[2 * i],
                    argument: spans[2 * i + 1],
                })
                .collect(),
        });
    }
    let archive = w.finish().unwrap();
    let (pairs, report) = build_pairs(&samples, &archive, &[1, 2, 3], 1.13, 5).unwrap();
    assert_eq!((report.positives, report.negatives, report.available_negatives), (300, 339, 600));
    assert_eq!(pairs.len(), 639);
    assert!(pairs.iter().all(|p| (p.label == 1) == (p.element_index == p.argument_index)));
    let (again, _) = build_pairs(&samples, &archive, &[1, 2, 3], 1.13, 5).unwrap();
    assert_eq!(pairs, again);

    let (one, r) = build_pairs(&samples[..1], &archive, &[1, 2, 3], 100.0, 0).unwrap();
    assert_eq!((r.positives, r.negatives), (3, 6));
    assert_eq!(one.len(), 9);

    let single = ProbeSample {
        sample_id: "k000".into(),
        pairs: samples[0].pairs[..1].to_vec(),
    };
    let (_, r) = build_pairs(&[single], &archive, &[1, 2, 3], 1.13, 0).unwrap();
    assert_eq!((r.positives, r.negatives), (1, 0));

    let (sets, skipped) = build_candidate_sets(&samples[..2], &archive, &[1, 2, 3], CandidateMode::Tokens).unwrap();
    assert!(skipped.is_empty());
    assert_eq!(sets.len(), 6);
    assert!(sets.iter().all(|s| s.target == 0 && s.candidates.len() == 5));
}

proptest! {
    #[test]
    fn attention_scores_sum_to_one(
        seed in 0u64..1000,
        d in 1usize..6,
        k in 1usize..8,
        scale in 0.1f64..50.0,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = ProbeParams::init(Arch::Attention, d, seed);
        let h_e: Vec<f64> = random_vec(&mut rng, d).into_iter().map(|v| v * scale).collect();
        let cands: Vec<Vec<f64>> = (0..k).map(|_| random_vec(&mut rng, d).into_iter().map(|v| v * scale).collect()).collect();
        let a = attention_scores(&p, &h_e, &cands).unwrap();
        prop_assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        prop_assert!(a.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn zero_params_are_half(seed in 0u64..1000, d in 1usize..8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (h_e, h_a) = (random_vec(&mut rng, d), random_vec(&mut rng, d));
        for arch in [Arch::Linear, Arch::SimMlp, Arch::EnhMlp] {
            prop_assert_eq!(predict(&ProbeParams::zeros(arch, d), &h_e, &h_a).unwrap(), 0.5);
        }
    }
}
