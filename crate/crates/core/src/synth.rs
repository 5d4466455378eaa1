//! Deterministic synthetic corpora.
//!
//! Observation labels are drawn independently per report. Each positive
//! observation contributes a finding (observation entity, anatomy entity,
//! optional severity modifier and their relations); negatives are sometimes
//! stated as absent or uncertain; background facts are sprinkled in. Image
//! and text features are noisy linear read-outs of a latent vector built
//! from the same facts, so a retriever can learn to match them.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::corpus::{
    Corpus, Entity, EntityLabel, FactGraph, FeatureDims, LabelVector, Relation, RelationType, ReportRecord, Split,
    NUM_OBSERVATIONS,
};
use crate::error::{Error, Result};

/// Template for one of the five observations.
#[derive(Clone, Debug, PartialEq)]
pub struct FindingTemplate {
    pub observation: String,
    /// Anatomical locations; one is chosen per report.
    pub anatomy: Vec<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BackgroundFact {
    /// Anatomy entity the finding is located at, if any.
    pub anatomy: Option<String>,
    pub finding: String,
    pub label: EntityLabel,
    pub sentence: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthVocab {
    pub findings: [FindingTemplate; NUM_OBSERVATIONS],
    pub severities: Vec<String>,
    pub background: Vec<BackgroundFact>,
}

fn strings(items: &[&str]) -> Vec<String> {
    items.iter().map(|s| s.to_string()).collect()
}

impl SynthVocab {
    /// Chest radiograph vocabulary.
    pub fn chest() -> Self {
        let finding = |obs: &str, anat: &[&str]| FindingTemplate {
            observation: obs.to_string(),
            anatomy: strings(anat),
        };
        let bg = |anat: Option<&str>, f: &str, label: EntityLabel, s: &str| BackgroundFact {
            anatomy: anat.map(str::to_string),
            finding: f.to_string(),
            label,
            sentence: s.to_string(),
        };
        SynthVocab {
            findings: [
                finding("cardiomegaly", &["heart", "cardiac silhouette"]),
                finding("edema", &["pulmonary", "interstitial", "perihilar"]),
                finding(
                    "consolidation",
                    &["left lower lobe", "right lower lobe", "right upper lobe"],
                ),
                finding("atelectasis", &["bibasilar", "left base", "right base"]),
                finding("effusion", &["left pleural", "right pleural", "bilateral pleural"]),
            ],
            severities: strings(&["mild", "moderate", "small", "large"]),
            background: vec![
                bg(None, "pneumothorax", EntityLabel::ObsDa, "There is no pneumothorax."),
                bg(
                    Some("mediastinal contours"),
                    "normal",
                    EntityLabel::ObsDp,
                    "Mediastinal contours are normal.",
                ),
                bg(
                    Some("osseous structures"),
                    "intact",
                    EntityLabel::ObsDp,
                    "Osseous structures are intact.",
                ),
                bg(Some("aorta"), "tortuous", EntityLabel::ObsDp, "The aorta is tortuous."),
                bg(
                    None,
                    "sternotomy wires",
                    EntityLabel::ObsDp,
                    "Sternotomy wires are seen.",
                ),
                bg(None, "pacemaker", EntityLabel::ObsDp, "A pacemaker is in place."),
                bg(
                    Some("hilar contours"),
                    "stable",
                    EntityLabel::ObsDp,
                    "Hilar contours are stable.",
                ),
                bg(
                    Some("lungs"),
                    "hyperinflated",
                    EntityLabel::ObsDp,
                    "The lungs are hyperinflated.",
                ),
            ],
        }
    }
}

impl Default for SynthVocab {
    fn default() -> Self {
        SynthVocab::chest()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthParams {
    pub seed: u64,
    pub n_train: usize,
    pub n_validation: usize,
    pub n_test: usize,
    pub image_dim: usize,
    pub text_dim: usize,
    pub vocab: SynthVocab,
    /// Prevalence of each observation.
    pub label_prior: f64,
    /// Weight of the latent facts in the features; 0 makes features pure noise.
    pub signal: f64,
    pub image_noise: f64,
    pub text_noise: f64,
    /// Probability that a record continues the previous record's patient.
    pub repeat_patient: f64,
}

impl SynthParams {
    /// `n` records split 80/10/10 (remainder to train).
    pub fn new(seed: u64, n: usize) -> Self {
        let n_validation = n / 10;
        let n_test = n / 10;
        SynthParams {
            seed,
            n_train: n - n_validation - n_test,
            n_validation,
            n_test,
            image_dim: 32,
            text_dim: 32,
            vocab: SynthVocab::chest(),
            label_prior: 0.3,
            signal: 1.0,
            image_noise: 0.6,
            text_noise: 0.2,
            repeat_patient: 0.3,
        }
    }

    pub fn with_splits(seed: u64, n_train: usize, n_validation: usize, n_test: usize) -> Self {
        SynthParams {
            n_train,
            n_validation,
            n_test,
            ..SynthParams::new(seed, 0)
        }
    }

    pub fn total(&self) -> usize {
        self.n_train + self.n_validation + self.n_test
    }
}

/// Latent dimension shared by image and text read-outs.
const LATENT_DIM: usize = 24;

struct Latents {
    observation: Vec<Vec<f64>>,
    anatomy: Vec<Vec<Vec<f64>>>,
    severity: Vec<Vec<f64>>,
    background: Vec<Vec<f64>>,
    image_readout: Vec<f64>,
    text_readout: Vec<f64>,
}

fn gaussian(rng: &mut ChaCha8Rng, len: usize, std: f64) -> Vec<f64> {
    let n = Normal::new(0.0, std).expect("finite std");
    (0..len).map(|_| n.sample(rng)).collect()
}

impl Latents {
    fn new(rng: &mut ChaCha8Rng, p: &SynthParams) -> Self {
        let v = &p.vocab;
        Latents {
            observation: (0..NUM_OBSERVATIONS).map(|_| gaussian(rng, LATENT_DIM, 1.0)).collect(),
            anatomy: v
                .findings
                .iter()
                .map(|f| f.anatomy.iter().map(|_| gaussian(rng, LATENT_DIM, 0.4)).collect())
                .collect(),
            severity: v.severities.iter().map(|_| gaussian(rng, LATENT_DIM, 0.3)).collect(),
            background: v.background.iter().map(|_| gaussian(rng, LATENT_DIM, 0.5)).collect(),
            image_readout: gaussian(rng, p.image_dim * LATENT_DIM, 1.0 / libm::sqrt(LATENT_DIM as f64)),
            text_readout: gaussian(rng, p.text_dim * LATENT_DIM, 1.0 / libm::sqrt(LATENT_DIM as f64)),
        }
    }
}

fn read_out(matrix: &[f64], latent: &[f64], dim: usize, noise: &[f64], signal: f64) -> Vec<f64> {
    (0..dim)
        .map(|i| {
            let row = &matrix[i * LATENT_DIM..(i + 1) * LATENT_DIM];
            let s: f64 = row.iter().zip(latent).map(|(a, b)| a * b).sum();
            signal * s + noise[i]
        })
        .collect()
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

struct GraphBuilder {
    entities: Vec<Entity>,
    relations: Vec<Relation>,
}

impl GraphBuilder {
    fn entity(&mut self, text: &str, label: EntityLabel) -> usize {
        self.entities.push(Entity::new(text, label));
        self.entities.len() - 1
    }

    fn relate(&mut self, source: usize, kind: RelationType, target: usize) {
        self.relations.push(Relation { source, kind, target });
    }
}

struct SynthRecord {
    labels: LabelVector,
    graph: FactGraph,
    text: String,
    image: Vec<f64>,
    text_features: Vec<f64>,
}

fn synth_record(rng: &mut ChaCha8Rng, p: &SynthParams, lat: &Latents) -> Result<SynthRecord> {
    let v = &p.vocab;
    let mut labels = [false; NUM_OBSERVATIONS];
    for l in labels.iter_mut() {
        *l = rng.random_bool(p.label_prior);
    }
    let mut g = GraphBuilder {
        entities: Vec::new(),
        relations: Vec::new(),
    };
    let mut latent = vec![0.0; LATENT_DIM];
    let add = |latent: &mut Vec<f64>, v: &[f64]| {
        for (a, b) in latent.iter_mut().zip(v) {
            *a += b;
        }
    };
    let mut sentences: Vec<String> = Vec::new();
    for (c, &present) in labels.iter().enumerate() {
        let f = &v.findings[c];
        if present {
            let obs = g.entity(&f.observation, EntityLabel::ObsDp);
            let a = rng.random_range(0..f.anatomy.len());
            let anat = g.entity(&f.anatomy[a], EntityLabel::AnatDp);
            g.relate(obs, RelationType::LocatedAt, anat);
            add(&mut latent, &lat.observation[c]);
            add(&mut latent, &lat.anatomy[c][a]);
            let mut words = String::new();
            if !v.severities.is_empty() && rng.random_bool(0.6) {
                let s = rng.random_range(0..v.severities.len());
                let sev = g.entity(&v.severities[s], EntityLabel::ObsDp);
                g.relate(sev, RelationType::Modify, obs);
                add(&mut latent, &lat.severity[s]);
                words.push_str(&v.severities[s]);
                words.push(' ');
            }
            words.push_str(&f.anatomy[a]);
            words.push(' ');
            words.push_str(&f.observation);
            sentences.push(format!("There is {words}."));
        } else {
            let roll: f64 = rng.random();
            if roll < 0.1 {
                g.entity(&f.observation, EntityLabel::ObsU);
                sentences.push(format!("Possible {}.", f.observation));
            } else if roll < 0.55 {
                g.entity(&f.observation, EntityLabel::ObsDa);
                sentences.push(format!("No {}.", f.observation));
            }
        }
    }
    for (b, fact) in v.background.iter().enumerate() {
        if rng.random_bool(0.3) {
            let f = g.entity(&fact.finding, fact.label);
            if let Some(anat) = &fact.anatomy {
                let a = g.entity(anat, EntityLabel::AnatDp);
                g.relate(f, RelationType::LocatedAt, a);
            }
            add(&mut latent, &lat.background[b]);
            sentences.push(fact.sentence.clone());
        }
    }
    if sentences.is_empty() {
        sentences.push("No acute cardiopulmonary process.".to_string());
    }
    let text = sentences.iter().map(|s| capitalize(s)).collect::<Vec<_>>().join(" ");
    let image_noise = gaussian(rng, p.image_dim, p.image_noise);
    let text_noise = gaussian(rng, p.text_dim, p.text_noise);
    let image = read_out(&lat.image_readout, &latent, p.image_dim, &image_noise, p.signal);
    let textf = read_out(&lat.text_readout, &latent, p.text_dim, &text_noise, p.signal);
    Ok(SynthRecord {
        labels: LabelVector::new(labels),
        graph: FactGraph::new(g.entities, g.relations)?,
        text,
        image,
        text_features: textf,
    })
}

/// Generates a corpus that is a pure function of `params`.
pub fn synth_corpus(params: &SynthParams) -> Result<Corpus> {
    if params.total() == 0 {
        return Err(Error::InvalidConfig(
            "synthetic corpus needs at least one record".into(),
        ));
    }
    if params.image_dim == 0 {
        return Err(Error::InvalidConfig("image dimension must be positive".into()));
    }
    if !(0.0..=1.0).contains(&params.label_prior) || !(0.0..=1.0).contains(&params.repeat_patient) {
        return Err(Error::InvalidConfig("probabilities must lie in [0, 1]".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let latents = Latents::new(&mut rng, params);
    let mut records = Vec::with_capacity(params.total());
    let mut patient = 0usize;
    let splits = [
        (Split::Train, params.n_train),
        (Split::Validation, params.n_validation),
        (Split::Test, params.n_test),
    ];
    for (split, count) in splits {
        for i in 0..count {
            if i == 0 || !rng.random_bool(params.repeat_patient) {
                patient += 1;
            }
            let s = synth_record(&mut rng, params, &latents)?;
            records.push(ReportRecord {
                report_id: format!("s{:06}", records.len() + 1),
                patient_id: format!("p{patient:06}"),
                split,
                report_text: s.text,
                labels: s.labels,
                graph: s.graph,
                image_ref: None,
                image_features: s.image,
                text_features: Some(s.text_features),
            });
        }
    }
    Corpus::new(
        FeatureDims {
            image: params.image_dim,
            text: params.text_dim,
        },
        records,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_seed_sensitive() {
        let a = synth_corpus(&SynthParams::new(7, 10)).unwrap();
        let b = synth_corpus(&SynthParams::new(7, 10)).unwrap();
        let c = synth_corpus(&SynthParams::new(8, 10)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.len(), 10);
    }

    #[test]
    fn minimal_corpus() {
        let c = synth_corpus(&SynthParams::new(7, 1)).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c.records()[0].split, Split::Train);
        assert!(synth_corpus(&SynthParams::new(7, 0)).is_err());
    }

    #[test]
    fn splits_and_patients() {
        let c = synth_corpus(&SynthParams::with_splits(3, 40, 5, 5)).unwrap();
        assert_eq!(c.split_positions(Split::Train).len(), 40);
        assert_eq!(c.split_positions(Split::Validation).len(), 5);
        assert_eq!(c.split_positions(Split::Test).len(), 5);
        let recs = c.records();
        // patients never span splits
        for w in recs.windows(2) {
            if w[0].split != w[1].split {
                assert_ne!(w[0].patient_id, w[1].patient_id);
            }
        }
        assert!(recs.iter().all(|r| !r.report_text.is_empty()));
    }

    #[test]
    fn graphs_follow_labels() {
        let c = synth_corpus(&SynthParams::new(11, 60)).unwrap();
        let vocab = SynthVocab::chest();
        for r in c.records() {
            for (i, &present) in r.labels.values().iter().enumerate() {
                let has_pos = r
                    .graph
                    .entities()
                    .iter()
                    .any(|e| e.text == vocab.findings[i].observation && e.label == EntityLabel::ObsDp);
                assert_eq!(has_pos, present);
            }
        }
    }
}
