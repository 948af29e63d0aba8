use std::sync::OnceLock;

use collapse_core::collapse::{closed_form_ideal, dpi_chain, step_finite, step_ideal, Channel};
use collapse_core::complexity::{aid_delta, bdm, ctm, BdmConfig, CtmOptions, Perturbation};
use collapse_core::harness::fmt_float;
use collapse_core::neurosym::{
    causal_correct, estimate_contraction, iterated_bound, prefix_pool, project_index, score_programs, select_program,
    CausalCorrector, Component, CorrectionMode, ProjectionDirection, SymbolicConstraintSet,
};
use collapse_core::tm::{
    build_frequency_table, build_partial_table, decode_machine, encode_machine, table_from_str, table_to_string,
    CensusMode, OutputFrequencyTable,
};
use collapse_core::{
    entropy, fit_empirical, kl_divergence, mix, sample, tv_distance, Categorical, JointTable, Support,
};
use proptest::prelude::*;

fn table22() -> &'static OutputFrequencyTable {
    static T: OnceLock<OutputFrequencyTable> = OnceLock::new();
    T.get_or_init(|| build_frequency_table(2, 2, 1000, CensusMode::Exhaustive).unwrap())
}

fn weights(k: std::ops::Range<usize>) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.01f64..10.0, k)
}

fn dist(w: &[f64]) -> Categorical {
    Categorical::from_weights(Support::range(w.len()), w.to_vec()).unwrap()
}

/// Two distributions on a shared support.
fn pair() -> impl Strategy<Value = (Categorical, Categorical)> {
    (2usize..24)
        .prop_flat_map(|k| (weights(k..k + 1), weights(k..k + 1)))
        .prop_map(|(a, b)| (dist(&a), dist(&b)))
}

fn on_simplex(q: &Categorical) -> bool {
    let s: f64 = q.probs().iter().sum();
    (s - 1.0).abs() < 1e-9 && q.probs().iter().all(|&p| (0.0..=1.0).contains(&p))
}

fn bits(len: std::ops::Range<usize>) -> impl Strategy<Value = String> {
    prop::collection::vec(prop::bool::ANY, len).prop_map(|v| v.into_iter().map(|b| if b { '1' } else { '0' }).collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn divergences_are_well_behaved((p, q) in pair()) {
        let kl = kl_divergence(&p, &q).unwrap();
        prop_assert!(kl >= 0.0);
        prop_assert_eq!(kl_divergence(&p, &p).unwrap(), 0.0);
        let tv = tv_distance(&p, &q).unwrap();
        prop_assert!((0.0..=1.0).contains(&tv));
        prop_assert_eq!(tv, tv_distance(&q, &p).unwrap());
        // Pinsker.
        prop_assert!(tv <= (kl * std::f64::consts::LN_2 / 2.0).sqrt() + 1e-12);
        let h = entropy(&p);
        prop_assert!(h >= 0.0 && h <= (p.len() as f64).log2() + 1e-12);
    }

    #[test]
    fn mixture_stays_on_simplex_and_scales_tv((p, q) in pair(), alpha in 0.0f64..=1.0) {
        let m = mix(alpha, &p, &q).unwrap();
        prop_assert!(on_simplex(&m));
        let lhs = tv_distance(&m, &q).unwrap();
        prop_assert!((lhs - alpha * tv_distance(&p, &q).unwrap()).abs() <= 1e-12);
    }

    #[test]
    fn ideal_steps_compose_to_closed_form((p, q) in pair(), alpha in 0.0f64..=1.0, t in 0usize..60) {
        let mut cur = q.clone();
        for _ in 0..t {
            cur = step_ideal(&p, &cur, alpha).unwrap();
        }
        let closed = closed_form_ideal(&p, &q, alpha, t).unwrap();
        for (a, b) in cur.probs().iter().zip(closed.probs()) {
            prop_assert!((a - b).abs() <= 1e-10);
        }
    }

    #[test]
    fn empirical_fit_stays_inside_the_source((_, q) in pair(), n in 1usize..200, seed in any::<u64>()) {
        let s = sample(&q, n, seed).unwrap();
        prop_assert_eq!(s.n(), n);
        let fit = fit_empirical(&s, q.support()).unwrap();
        prop_assert!(on_simplex(&fit));
        prop_assert!(fit.support_size() <= n.min(q.support_size()));
        let again = sample(&q, n, seed).unwrap();
        prop_assert_eq!(again.draw_indices(), s.draw_indices());
    }

    #[test]
    fn closed_loop_never_gains_support((p, q) in pair(), n in 1usize..100, seed in any::<u64>()) {
        let next = step_finite(&p, &q, 0.0, n, seed).unwrap();
        for i in next.positive_indices() {
            prop_assert!(q.prob(i) > 0.0);
        }
        let point = Categorical::point_mass(q.support().clone(), 0);
        prop_assert_eq!(step_finite(&p, &point, 0.0, n, seed).unwrap(), point);
    }

    #[test]
    fn processing_never_adds_information(
        flat in weights(4..40),
        rows in prop::collection::vec(weights(3..4), 2..8),
    ) {
        let nx = rows.len();
        let nm = (flat.len() / nx).max(1);
        let cells: Vec<f64> = flat.iter().cycle().take(nm * nx).copied().collect();
        let total: f64 = cells.iter().sum();
        let probs: Vec<Vec<f64>> = cells.chunks(nx).map(|r| r.iter().map(|v| v / total).collect()).collect();
        let joint = JointTable::new(Support::range(nm), Support::range(nx), probs).unwrap();
        let kernel: Vec<Vec<f64>> = rows
            .iter()
            .map(|r| {
                let s: f64 = r.iter().sum();
                r.iter().map(|v| v / s).collect()
            })
            .collect();
        let r = dpi_chain(&joint, &Channel::new(Support::range(3), kernel).unwrap()).unwrap();
        prop_assert!(r.i_my <= r.i_mx + 1e-12);
        let id = dpi_chain(&joint, &Channel::identity(Support::range(nx))).unwrap();
        prop_assert!((id.i_my - id.i_mx).abs() <= 1e-12);
    }

    #[test]
    fn machine_codes_round_trip(i in 0u64..20736) {
        let m = decode_machine(i, 2, 2).unwrap();
        prop_assert_eq!(encode_machine(&m), i);
    }

    #[test]
    fn census_slices_add_up(cut in 1u64..20735, workers in 1usize..9) {
        let lo = build_partial_table(2, 2, 1000, 0..cut, workers).unwrap();
        let hi = build_partial_table(2, 2, 1000, cut..20736, 1).unwrap();
        let mut counts = lo.counts.clone();
        for (o, c) in hi.counts {
            *counts.entry(o).or_insert(0) += c;
        }
        prop_assert_eq!(&counts, &table22().counts);
        prop_assert_eq!(lo.halted_machines + hi.halted_machines, table22().halted_machines);
    }

    #[test]
    fn bdm_multiplicity_law(b in bits(1..5), r in 1usize..9) {
        let t = table22();
        prop_assume!(t.counts.contains_key(&b));
        let v = bdm(&b.repeat(r), &BdmConfig::new(b.len()), t).unwrap().value;
        let c = ctm(&b, t, CtmOptions::default()).unwrap().value;
        prop_assert!((v - (c + (r as f64).log2())).abs() <= 1e-12);
        prop_assert!(v >= c);
    }

    #[test]
    fn invertible_edits_are_antisymmetric(o in bits(2..24), pos in any::<prop::sample::Index>(), flip in any::<bool>()) {
        let t = table22();
        let cfg = BdmConfig::new(2);
        let position = pos.index(o.len());
        let tau = if flip {
            Perturbation::Flip { position }
        } else {
            Perturbation::Substitute { position, symbol: 1 - (o.as_bytes()[position] - b'0') }
        };
        let moved = tau.apply(&o).unwrap();
        let back = tau.inverse(&o).unwrap();
        prop_assert_eq!(back.apply(&moved).unwrap(), o.clone());
        let sum = aid_delta(&o, &tau, &cfg, t).unwrap() + aid_delta(&moved, &back, &cfg, t).unwrap();
        prop_assert!(sum.abs() <= 1e-12);
    }

    #[test]
    fn exact_correction_contracts((p, r) in pair(), eta in 0.0f64..=1.0, phi in 0.0f64..=1.0) {
        let c = CausalCorrector::new(eta, phi, CorrectionMode::Exact, 0);
        let out = causal_correct(&r, &p, &c, 0).unwrap();
        prop_assert!(on_simplex(&out));
        let before = kl_divergence(&p, &r).unwrap();
        let after = kl_divergence(&p, &out).unwrap();
        prop_assert!(after <= (1.0 - eta * phi) * before + 1e-12);
    }

    #[test]
    fn subset_correction_stays_on_simplex((p, r) in pair(), eta in 0.0f64..=1.0, phi in 0.0f64..=1.0, seed in any::<u64>()) {
        let c = CausalCorrector::new(eta, phi, CorrectionMode::CoordinateSubset, seed);
        let out = causal_correct(&r, &p, &c, 3).unwrap();
        prop_assert!(on_simplex(&out));
        prop_assert_eq!(out, causal_correct(&r, &p, &c, 3).unwrap());
    }

    #[test]
    fn projection_minimises_divergence(w in weights(16..17), reverse in any::<bool>()) {
        let pool = prefix_pool(4).unwrap();
        let set = SymbolicConstraintSet::from_pool(&pool, 100.0, Vec::new()).unwrap();
        let q = Categorical::new(pool.support().clone(), dist(&w).probs().to_vec()).unwrap();
        let dir = if reverse { ProjectionDirection::ModelFirst } else { ProjectionDirection::MemberFirst };
        let (i, d) = project_index(&q, &set, dir).unwrap();
        for m in set.members() {
            let dm = match dir {
                ProjectionDirection::MemberFirst => kl_divergence(&m.dist, &q).unwrap(),
                ProjectionDirection::ModelFirst => kl_divergence(&q, &m.dist).unwrap(),
            };
            prop_assert!(d <= dm + 1e-12);
        }
        prop_assert!(i < set.members().len());
    }

    #[test]
    fn contraction_fit_recovers_recursions(c in 0.05f64..=1.0, delta in 0.0f64..1.0, d0 in 0.1f64..10.0) {
        let mut d = vec![d0];
        for _ in 0..30 {
            d.push(c * d.last().unwrap() + delta);
        }
        let r = estimate_contraction(&d, Component::Overall).unwrap();
        prop_assert!((r.c - c).abs() <= 1e-6, "c {} vs {}", r.c, c);
        prop_assert!((r.delta - delta).abs() <= 1e-6);
        prop_assert!(r.bound_satisfied);
        prop_assert!(iterated_bound(c, delta, d0, 5).unwrap() >= d[5] - 1e-9);
    }

    #[test]
    fn penalty_never_favours_longer_programs(
        draws in prop::collection::vec(0usize..16, 1..12),
        l1 in 0.0f64..5.0,
        dl in 0.0f64..5.0,
    ) {
        let pool = prefix_pool(4).unwrap();
        let labels: Vec<&str> = draws.iter().map(|&i| pool.support().label(i)).collect();
        let data = collapse_core::SampleSet::from_labels(pool.support(), &labels, 0).unwrap();
        let a = score_programs(&data, &pool, l1).unwrap();
        let b = score_programs(&data, &pool, l1 + dl).unwrap();
        let k: Vec<f64> = pool.programs().iter().map(|p| p.complexity_bits).collect();
        for i in 0..k.len() {
            for j in 0..k.len() {
                if k[i] < k[j] && a[i] <= a[j] {
                    prop_assert!(b[i] <= b[j]);
                }
            }
        }
        let chosen = select_program(&data, &pool, l1).unwrap();
        prop_assert!(a.iter().all(|&s| a[chosen.index] <= s + 1e-9));
    }

    #[test]
    fn floats_round_trip(x in any::<f64>()) {
        let s = fmt_float(x);
        let back: f64 = s.parse().unwrap();
        prop_assert!(back == x || (x.is_nan() && back.is_nan()));
    }
}

#[test]
fn table_text_round_trips() {
    let t = table22();
    assert_eq!(&table_from_str(&table_to_string(t)).unwrap(), t);
}
