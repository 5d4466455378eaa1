//! Factual and textual similarity metrics.
//!
//! Graph overlap is a Dice coefficient over the set of fact items (entities
//! plus relations, keyed by normalized text and label). Label agreement
//! comes in two flavours: the per-instance fraction of matching positions,
//! and the pooled micro-averaged F1 over a whole set of reports.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use crate::corpus::{normalize_entity, EntityLabel, FactGraph, LabelVector, RelationType};
use crate::error::{Error, Result};

/// A single comparable fact extracted from a graph.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum FactItem {
    Entity {
        text: String,
        label: EntityLabel,
    },
    Relation {
        source_text: String,
        source_label: EntityLabel,
        kind: RelationType,
        target_text: String,
        target_label: EntityLabel,
    },
}

/// Per-pair scores between a reference and a hypothesis report.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InstanceScore {
    pub f1_radgraph: f64,
    pub f1_chexbert_instance: f64,
}

impl InstanceScore {
    pub fn sum(&self) -> f64 {
        self.f1_radgraph + self.f1_chexbert_instance
    }
}

/// Scores aggregated over a set of (reference, hypothesis) pairs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CorpusScore {
    pub f1_chexbert_micro: f64,
    pub f1_radgraph_mean: f64,
    pub rouge_l_mean: f64,
}

pub fn fact_items(graph: &FactGraph) -> BTreeSet<FactItem> {
    let ents = graph.entities();
    let norm: Vec<String> = ents.iter().map(|e| normalize_entity(&e.text)).collect();
    let mut items: BTreeSet<FactItem> = ents
        .iter()
        .zip(&norm)
        .map(|(e, text)| FactItem::Entity {
            text: text.clone(),
            label: e.label,
        })
        .collect();
    for r in graph.relations() {
        items.insert(FactItem::Relation {
            source_text: norm[r.source].clone(),
            source_label: ents[r.source].label,
            kind: r.kind,
            target_text: norm[r.target].clone(),
            target_label: ents[r.target].label,
        });
    }
    items
}

/// `2 * shared / (a + b)`, zero when both sides are empty.
#[inline]
pub fn dice(shared: usize, a: usize, b: usize) -> f64 {
    if a + b == 0 {
        0.0
    } else {
        (2 * shared) as f64 / (a + b) as f64
    }
}

pub fn factual_similarity(q: &FactGraph, d: &FactGraph) -> f64 {
    let qi = fact_items(q);
    let di = fact_items(d);
    dice(qi.intersection(&di).count(), qi.len(), di.len())
}

/// Fraction of the five observation positions on which the two label
/// vectors agree.
pub fn chexbert_instance(reference: &LabelVector, hypothesis: &LabelVector) -> f64 {
    let equal = reference
        .values()
        .iter()
        .zip(hypothesis.values())
        .filter(|(a, b)| a == b)
        .count();
    equal as f64 / reference.values().len() as f64
}

/// Pooled true/false positive counts over (record, class) decisions.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl Confusion {
    pub fn add(&mut self, reference: &LabelVector, hypothesis: &LabelVector) {
        for (&r, &h) in reference.values().iter().zip(hypothesis.values()) {
            match (r, h) {
                (true, true) => self.tp += 1,
                (false, true) => self.fp += 1,
                (true, false) => self.fn_ += 1,
                (false, false) => {}
            }
        }
    }

    pub fn f1(&self) -> f64 {
        let denom = 2 * self.tp + self.fp + self.fn_;
        if denom == 0 {
            0.0
        } else {
            (2 * self.tp) as f64 / denom as f64
        }
    }
}

/// Micro-averaged F1 over all (record, class) decisions.
pub fn chexbert_micro(refs: &[LabelVector], hyps: &[LabelVector]) -> Result<f64> {
    if refs.len() != hyps.len() {
        return Err(Error::LengthMismatch {
            left: refs.len(),
            right: hyps.len(),
        });
    }
    let mut c = Confusion::default();
    for (r, h) in refs.iter().zip(hyps) {
        c.add(r, h);
    }
    Ok(c.f1())
}

/// Lowercased whitespace tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace().map(|t| t.to_lowercase()).collect()
}

pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let mut prev = alloc::vec![0usize; b.len() + 1];
    let mut cur = alloc::vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { cur[j].max(prev[j + 1]) };
        }
        core::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// ROUGE-L F1 over token sequences. Tokens are compared case-insensitively.
pub fn rouge_l<S: AsRef<str>>(reference: &[S], hypothesis: &[S]) -> f64 {
    let r: Vec<String> = reference.iter().map(|t| t.as_ref().to_lowercase()).collect();
    let h: Vec<String> = hypothesis.iter().map(|t| t.as_ref().to_lowercase()).collect();
    let lcs = lcs_len(&r, &h);
    if lcs == 0 {
        return 0.0;
    }
    let p = lcs as f64 / h.len() as f64;
    let rec = lcs as f64 / r.len() as f64;
    2.0 * p * rec / (p + rec)
}

pub fn rouge_l_text(reference: &str, hypothesis: &str) -> f64 {
    rouge_l(&tokenize(reference), &tokenize(hypothesis))
}

pub fn instance_score(reference: (&LabelVector, &FactGraph), hypothesis: (&LabelVector, &FactGraph)) -> InstanceScore {
    InstanceScore {
        f1_radgraph: factual_similarity(reference.1, hypothesis.1),
        f1_chexbert_instance: chexbert_instance(reference.0, hypothesis.0),
    }
}

/// Fact item sets of many graphs, interned to sorted id lists so pairwise
/// overlap is a linear merge.
///
/// Produces the same values as [`factual_similarity`], bit for bit.
#[derive(Clone, Debug)]
pub struct FactTable {
    sets: Vec<Vec<u32>>,
}

impl FactTable {
    pub fn new<'a, I>(graphs: I) -> Self
    where
        I: IntoIterator<Item = &'a FactGraph>,
    {
        let mut ids: BTreeMap<FactItem, u32> = BTreeMap::new();
        let sets = graphs
            .into_iter()
            .map(|g| {
                let mut set: Vec<u32> = fact_items(g)
                    .into_iter()
                    .map(|item| {
                        let next = ids.len() as u32;
                        *ids.entry(item).or_insert(next)
                    })
                    .collect();
                set.sort_unstable();
                set
            })
            .collect();
        FactTable { sets }
    }

    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }

    pub fn item_count(&self, i: usize) -> usize {
        self.sets[i].len()
    }

    pub fn similarity(&self, i: usize, j: usize) -> f64 {
        let (a, b) = (&self.sets[i], &self.sets[j]);
        let (mut x, mut y, mut shared) = (0, 0, 0);
        while x < a.len() && y < b.len() {
            match a[x].cmp(&b[y]) {
                core::cmp::Ordering::Less => x += 1,
                core::cmp::Ordering::Greater => y += 1,
                core::cmp::Ordering::Equal => {
                    shared += 1;
                    x += 1;
                    y += 1;
                }
            }
        }
        dice(shared, a.len(), b.len())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Entity, Relation};
    use alloc::vec;

    fn lv(v: [u8; 5]) -> LabelVector {
        LabelVector::new(v.map(|x| x == 1))
    }

    fn graph(ents: &[(&str, EntityLabel)], rels: &[(usize, RelationType, usize)]) -> FactGraph {
        FactGraph::new(
            ents.iter().map(|(t, l)| Entity::new(*t, *l)).collect(),
            rels.iter()
                .map(|&(s, k, t)| Relation {
                    source: s,
                    kind: k,
                    target: t,
                })
                .collect(),
        )
        .unwrap()
    }

    use EntityLabel::*;

    #[test]
    fn fact_items_examples() {
        let g = graph(
            &[("pleural", AnatDp), ("effusion", ObsDp)],
            &[(1, RelationType::LocatedAt, 0)],
        );
        let items = fact_items(&g);
        assert_eq!(items.len(), 3);
        assert_eq!(fact_items(&FactGraph::empty()).len(), 0);
        let dup = graph(&[("lung", AnatDp), ("Lung.", AnatDp)], &[]);
        assert_eq!(fact_items(&dup).len(), 1);
    }

    #[test]
    fn factual_similarity_examples() {
        // items {A,B,C} vs {B,C,D}
        let q = graph(&[("a", ObsDp), ("b", ObsDp), ("c", ObsDp)], &[]);
        let d = graph(&[("b", ObsDp), ("c", ObsDp), ("d", ObsDp)], &[]);
        assert!((factual_similarity(&q, &d) - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(factual_similarity(&q, &q), 1.0);
        let e = graph(&[("x", AnatDp)], &[]);
        assert_eq!(factual_similarity(&q, &e), 0.0);
        assert_eq!(factual_similarity(&FactGraph::empty(), &FactGraph::empty()), 0.0);
        // same text, different label is a different item
        let l1 = graph(&[("effusion", ObsDp)], &[]);
        let l2 = graph(&[("effusion", ObsDa)], &[]);
        assert_eq!(factual_similarity(&l1, &l2), 0.0);
    }

    #[test]
    fn chexbert_instance_examples() {
        assert_eq!(chexbert_instance(&lv([1, 0, 1, 0, 0]), &lv([1, 0, 0, 0, 0])), 0.8);
        assert_eq!(chexbert_instance(&lv([1, 0, 1, 0, 0]), &lv([1, 0, 1, 0, 0])), 1.0);
        assert_eq!(chexbert_instance(&lv([1, 1, 1, 1, 1]), &lv([0, 0, 0, 0, 0])), 0.0);
    }

    #[test]
    fn chexbert_micro_examples() {
        let refs = [lv([1, 0, 0, 1, 0]), lv([0, 0, 0, 0, 1])];
        assert_eq!(chexbert_micro(&refs, &refs).unwrap(), 1.0);
        assert_eq!(
            chexbert_micro(&[lv([1, 0, 0, 0, 0])], &[lv([0, 0, 0, 0, 0])]).unwrap(),
            0.0
        );
        let refs = [lv([1, 1, 0, 0, 0]), lv([0, 0, 0, 0, 1])];
        let hyps = [lv([1, 0, 0, 0, 0]), lv([0, 0, 0, 1, 1])];
        assert!((chexbert_micro(&refs, &hyps).unwrap() - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(
            chexbert_micro(&refs, &hyps[..1]),
            Err(Error::LengthMismatch { left: 2, right: 1 })
        );
        // all-negative on both sides: no decisions count as positive
        let z = [lv([0; 5])];
        assert_eq!(chexbert_micro(&z, &z).unwrap(), 0.0);
    }

    #[test]
    fn rouge_examples() {
        assert_eq!(rouge_l_text("no pleural effusion", "no pleural effusion"), 1.0);
        let s = rouge_l_text("no pleural effusion seen", "no effusion seen");
        assert!((s - 6.0 / 7.0).abs() < 1e-12);
        assert_eq!(rouge_l_text("heart normal", "lungs clear"), 0.0);
        assert_eq!(rouge_l_text("", "lungs clear"), 0.0);
        assert_eq!(rouge_l_text("Lungs CLEAR", "lungs clear"), 1.0);
    }

    #[test]
    fn lcs_small() {
        assert_eq!(lcs_len(b"ABCBDAB", b"BDCABA"), 4);
        assert_eq!(lcs_len::<u8>(b"", b"abc"), 0);
    }

    #[test]
    fn fact_table_matches_direct() {
        let gs = vec![
            graph(&[("a", ObsDp), ("b", AnatDp)], &[(0, RelationType::LocatedAt, 1)]),
            graph(&[("b", AnatDp), ("c", ObsDa)], &[]),
            FactGraph::empty(),
        ];
        let t = FactTable::new(&gs);
        for i in 0..gs.len() {
            for j in 0..gs.len() {
                assert_eq!(
                    t.similarity(i, j).to_bits(),
                    factual_similarity(&gs[i], &gs[j]).to_bits()
                );
            }
        }
    }
}
