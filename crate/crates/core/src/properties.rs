//! Property tests over randomly generated formulas, knowledge bases and
//! datasets.

use std::collections::{BTreeSet, HashSet};

use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::datagen::{
    atom_pool, generate_dataset, generate_formula, generate_kb, instance_rng, load_dataset, save_dataset, GenConfig,
};
use crate::encoding::{consistency_flag, encode_dataset, FlagOptions};
use crate::experiments::make_folds;
use crate::learners::{custom_loss, fit_lasso, fit_ridge_path, lasso_alpha_max, ConstraintWeighting};
use crate::logic::{
    atoms_of, is_consistent, parse_formula, satisfies, Formula, Interpretation, KnowledgeBase, Literal,
};
use crate::measures::{enumerate_mis, enumerate_mis_bruteforce, measure_kb, value_entropy, Measure};

fn arb_formula(atoms: usize) -> impl Strategy<Value = Formula> {
    let leaf = (0..atoms, any::<bool>()).prop_map(move |(i, negated)| {
        let atom = atom_pool(atoms)[i].clone();
        Formula::lit(if negated { Literal::neg(atom) } else { Literal::pos(atom) })
    });
    leaf.prop_recursive(4, 24, 4, |inner| {
        (any::<bool>(), prop::collection::vec(inner, 1..4)).prop_map(|(and, children)| {
            if and {
                Formula::and(children)
            } else {
                Formula::or(children)
            }
        })
    })
}

/// A knowledge base drawn by the generator from a proptest-chosen seed.
fn arb_kb(max_atoms: usize, max_formulas: usize) -> impl Strategy<Value = KnowledgeBase> {
    (1..=max_atoms, 1..=max_formulas, any::<u64>()).prop_map(|(atoms, formulas, seed)| {
        let mut config = GenConfig::new(atoms, formulas, 1, seed);
        config.max_literal_occurrences = 6;
        generate_kb(&mut instance_rng(seed, 0), &config)
    })
}

fn subset(kb: &KnowledgeBase, mask: u64) -> Vec<Formula> {
    kb.iter().enumerate().filter(|(i, _)| mask >> i & 1 == 1).map(|(_, f)| f.clone()).collect()
}

fn consistent_by_models(formulas: &[Formula]) -> bool {
    let atoms: Vec<_> = atoms_of(formulas).into_iter().collect();
    (0..1u64 << atoms.len()).any(|mask| {
        let w = Interpretation::from_mask(&atoms, mask);
        formulas.iter().all(|f| satisfies(&w, f).unwrap())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn formula_text_round_trips(f in arb_formula(5)) {
        let text = f.to_string();
        let back = parse_formula(&text).unwrap();
        prop_assert_eq!(&back, &f);
        prop_assert_eq!(back.to_string(), text);
    }

    #[test]
    fn flattening_is_idempotent(f in arb_formula(4)) {
        let once = f.normalized();
        prop_assert_eq!(once.normalized(), once.clone());
        prop_assert_eq!(once, f.clone());
        if let Some(op) = f.connective() {
            let children = match &f {
                Formula::And(c) | Formula::Or(c) => c.clone(),
                Formula::Lit(_) => unreachable!(),
            };
            prop_assert!(children.iter().all(|c| c.connective() != Some(op)));
        }
    }

    #[test]
    fn consistency_agrees_with_model_enumeration(kb in arb_kb(5, 6)) {
        prop_assert_eq!(is_consistent(kb.formulas()).unwrap(), consistent_by_models(kb.formulas()));
    }

    #[test]
    fn consistency_is_monotone(kb in arb_kb(4, 6), mask in any::<u64>()) {
        let all = is_consistent(kb.formulas()).unwrap();
        let part = is_consistent(&subset(&kb, mask)).unwrap();
        // Subsets of consistent sets are consistent.
        prop_assert!(!all || part);
    }

    #[test]
    fn mis_matches_bruteforce(kb in arb_kb(6, 8)) {
        prop_assert_eq!(enumerate_mis(&kb).unwrap(), enumerate_mis_bruteforce(&kb).unwrap());
    }

    #[test]
    fn every_mis_is_minimal(kb in arb_kb(5, 8)) {
        for set in enumerate_mis(&kb).unwrap().subsets() {
            prop_assert!(!is_consistent(set).unwrap());
            for skip in 0..set.len() {
                let smaller: Vec<Formula> =
                    set.iter().enumerate().filter(|&(i, _)| i != skip).map(|(_, f)| f.clone()).collect();
                prop_assert!(is_consistent(&smaller).unwrap());
            }
        }
    }

    #[test]
    fn measures_satisfy_postulates(kb in arb_kb(6, 8), seed in any::<u64>()) {
        let (mi, at) = measure_kb(&kb).unwrap();
        prop_assert!(at <= atoms_of(kb.iter()).len());
        prop_assert_eq!(mi == 0, at == 0);
        if is_consistent(kb.formulas()).unwrap() {
            prop_assert_eq!((mi, at), (0, 0));
        }
        let mut bigger = kb.clone();
        let atoms = atom_pool(6);
        bigger.insert(generate_formula(&mut ChaCha8Rng::seed_from_u64(seed), &atoms, 6));
        let (mi2, at2) = measure_kb(&bigger).unwrap();
        prop_assert!(mi2 >= mi && at2 >= at);
    }

    #[test]
    fn consistency_heuristic_is_sound(kb in arb_kb(6, 8)) {
        if consistency_flag(&kb) {
            prop_assert!(is_consistent(kb.formulas()).unwrap());
            prop_assert_eq!(measure_kb(&kb).unwrap(), (0, 0));
        }
    }

    #[test]
    fn entropy_is_bounded(values in prop::collection::vec(0u8..6, 1..60)) {
        let as_f: Vec<f64> = values.iter().map(|&v| f64::from(v)).collect();
        let h = value_entropy(&as_f).unwrap();
        let unique = values.iter().collect::<BTreeSet<_>>().len() as f64;
        prop_assert!(h >= 0.0);
        prop_assert!(h <= unique.ln() + 1e-12);
    }

    #[test]
    fn encoding_is_injective(seed in any::<u64>(), atoms in 2usize..5) {
        let d = generate_dataset(&GenConfig::new(atoms, 4, 40, seed)).unwrap();
        let e = encode_dataset(&d, Measure::At, FlagOptions::all_for(Measure::At), None).unwrap();
        let mut seen = HashSet::new();
        let mut kbs = HashSet::new();
        for (inst, row) in d.instances.iter().zip(&e.rows) {
            let key: BTreeSet<&String> = inst.kb.keys().iter().collect();
            if kbs.insert(key) {
                prop_assert!(seen.insert(row.kb_bits.clone()));
            }
        }
    }

    #[test]
    fn dataset_files_round_trip(seed in any::<u64>(), atoms in 1usize..5, n in 1usize..20) {
        let d = generate_dataset(&GenConfig::new(atoms, 5, n, seed)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.jsonl");
        save_dataset(&d, &path).unwrap();
        prop_assert_eq!(load_dataset(&path).unwrap(), d);
    }

    #[test]
    fn folds_partition_the_rows(n in 30usize..400, k in 2usize..11, seed in any::<u64>()) {
        prop_assume!(n > 2 * n.div_ceil(k));
        let folds = make_folds(n, k, seed).unwrap();
        prop_assert_eq!(folds.len(), k);
        let mut tests = BTreeSet::new();
        for f in &folds {
            let test: BTreeSet<_> = f.test.iter().collect();
            prop_assert!(f.validation.iter().chain(&f.subtrain).all(|i| !test.contains(i)));
            prop_assert!(f.validation.iter().all(|i| !f.subtrain.contains(i)));
            prop_assert_eq!(f.validation.len(), f.test.len());
            prop_assert_eq!(f.test.len() + f.validation.len() + f.subtrain.len(), n);
            prop_assert!(f.test.len().abs_diff(n / k) <= 1);
            for &i in &f.test {
                prop_assert!(tests.insert(i));
            }
        }
        prop_assert_eq!(tests.len(), n);
    }

    #[test]
    fn constraint_loss_never_shrinks(
        preds in prop::collection::vec(-5.0f64..5.0, 1..20),
        seed in any::<u64>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b = preds.len();
        let targets: Vec<f64> = (0..b).map(|_| rng.gen_range(0.0..5.0)).collect();
        let flags = vec![vec![(0..b).map(|_| f64::from(u8::from(rng.gen_bool(0.5)))).collect::<Vec<_>>()]];
        for weighting in [ConstraintWeighting::Batch, ConstraintWeighting::Instance] {
            let out = custom_loss(&preds, &targets, &flags, weighting).unwrap();
            prop_assert!(out.loss >= out.pred_loss);
            prop_assert!(out.loss <= 2.0 * out.pred_loss + 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn regularization_shrinks_coefficients(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (n, d) = (30, 6);
        let x = DMatrix::from_fn(n, d, |_, _| f64::from(u8::from(rng.gen_bool(0.4))));
        let y: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..6.0)).collect();
        let alphas = [1e-3, 1e-2, 1e-1, 1.0, 10.0, 100.0];

        let ridge = fit_ridge_path(&x, &y, &alphas).unwrap();
        let l2: Vec<f64> = ridge.iter().map(|m| m.coefficients.iter().map(|c| c * c).sum::<f64>()).collect();
        for w in l2.windows(2) {
            prop_assert!(w[1] <= w[0] * (1.0 + 1e-9) + 1e-12);
        }

        let alpha_max = lasso_alpha_max(&x, &y).unwrap();
        let mut last = f64::INFINITY;
        for frac in [0.01, 0.1, 0.5, 1.0] {
            let m = fit_lasso(&x, &y, alpha_max * frac).unwrap();
            let l1 = m.coefficients.iter().map(|c| c.abs()).sum::<f64>();
            prop_assert!(l1 <= last + 1e-4);
            last = l1;
        }
        prop_assert_eq!(last, 0.0);
    }
}
