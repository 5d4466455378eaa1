#![allow(dead_code)]

use factmine_core::{Entity, EntityLabel, FactGraph, Relation, RelationType};
use proptest::prelude::*;

const WORDS: [&str; 6] = ["lung", "pleural", "effusion", "heart", "Opacity", "base."];

pub fn entity_label() -> impl Strategy<Value = EntityLabel> {
    prop::sample::select(EntityLabel::ALL.to_vec())
}

pub fn relation_type() -> impl Strategy<Value = RelationType> {
    prop::sample::select(RelationType::ALL.to_vec())
}

/// Small graphs over a tiny vocabulary so that overlaps are common.
pub fn small_graph(max_entities: usize) -> impl Strategy<Value = FactGraph> {
    prop::collection::vec((prop::sample::select(WORDS.to_vec()), entity_label()), 0..=max_entities)
        .prop_flat_map(|ents| {
            let n = ents.len();
            let rels = if n == 0 {
                prop::collection::vec((Just(0usize), relation_type(), Just(0usize)), 0..=0).boxed()
            } else {
                prop::collection::vec((0..n, relation_type(), 0..n), 0..=2).boxed()
            };
            (Just(ents), rels)
        })
        .prop_map(|(ents, rels)| {
            let entities = ents.into_iter().map(|(t, l)| Entity::new(t, l)).collect();
            let relations = rels
                .into_iter()
                .map(|(source, kind, target)| Relation { source, kind, target })
                .collect();
            FactGraph::new(entities, relations).expect("indices in range")
        })
}
