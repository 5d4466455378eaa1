mod common;

use std::collections::HashSet;

use factmine_core::metrics::{rouge_l_text, tokenize};
use factmine_core::{chexbert_instance, chexbert_micro, fact_items, factual_similarity, normalize_entity, LabelVector};
use proptest::prelude::*;

/// Independent route: string keys in a hash set, counted by hand.
fn brute_force_similarity(a: &factmine_core::FactGraph, b: &factmine_core::FactGraph) -> f64 {
    let keys = |g: &factmine_core::FactGraph| -> HashSet<String> {
        let e = g.entities();
        let mut out: HashSet<String> = e
            .iter()
            .map(|x| format!("E|{}|{}", normalize_entity(&x.text), x.label.as_str()))
            .collect();
        for r in g.relations() {
            let (s, t) = (&e[r.source], &e[r.target]);
            out.insert(format!(
                "R|{}|{}|{}|{}|{}",
                normalize_entity(&s.text),
                s.label.as_str(),
                r.kind.as_str(),
                normalize_entity(&t.text),
                t.label.as_str()
            ));
        }
        out
    };
    let (ka, kb) = (keys(a), keys(b));
    if ka.is_empty() && kb.is_empty() {
        return 0.0;
    }
    let shared = ka.intersection(&kb).count();
    2.0 * shared as f64 / (ka.len() + kb.len()) as f64
}

fn labels() -> impl Strategy<Value = LabelVector> {
    prop::array::uniform5(any::<bool>()).prop_map(LabelVector::new)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(400))]

    #[test]
    fn similarity_matches_brute_force(a in common::small_graph(4), b in common::small_graph(4)) {
        let s = factual_similarity(&a, &b);
        prop_assert_eq!(s.to_bits(), brute_force_similarity(&a, &b).to_bits());
        prop_assert_eq!(s.to_bits(), factual_similarity(&b, &a).to_bits());
        prop_assert!((0.0..=1.0).contains(&s));
        let ia = fact_items(&a);
        prop_assert_eq!(s == 1.0, !ia.is_empty() && ia == fact_items(&b));
    }

    #[test]
    fn chexbert_instance_is_multiple_of_fifth(a in labels(), b in labels()) {
        let s = chexbert_instance(&a, &b);
        let k = (s * 5.0).round();
        prop_assert!((s - k / 5.0).abs() < 1e-12);
        prop_assert_eq!(s, chexbert_instance(&b, &a));
    }

    #[test]
    fn micro_f1_perfect_when_equal(refs in prop::collection::vec(labels(), 1..20)) {
        let f = chexbert_micro(&refs, &refs).unwrap();
        if refs.iter().any(|l| l.positives() > 0) {
            prop_assert_eq!(f, 1.0);
        } else {
            prop_assert_eq!(f, 0.0);
        }
    }

    #[test]
    fn rouge_case_invariant(words in prop::collection::vec("[a-zA-Z]{1,6}", 1..12), other in prop::collection::vec("[a-z]{1,6}", 0..12)) {
        let a = words.join(" ");
        let b = other.join(" ");
        prop_assert_eq!(rouge_l_text(&a, &a), 1.0);
        prop_assert_eq!(rouge_l_text(&a, &b), rouge_l_text(&a.to_uppercase(), &b.to_uppercase()));
        let s = rouge_l_text(&a, &b);
        prop_assert!((0.0..=1.0).contains(&s));
        prop_assert_eq!(tokenize(&a).len(), words.len());
    }
}
