//! Synthetic benchmark: a small DBpedia-shaped KG, templated questions
//! with gold SPARQL and answers, and a word-embedding table in which each
//! relation's question word is a near-synonym of its label.
//!
//! Several relations share one question word (e.g. `head` asks for
//! `dbo:mayor` of a city but `dbo:leaderName` of a country). Once the
//! entity is masked the word alone cannot decide between them, while the
//! KG can.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::{answer_strings, Benchmark, QaRecord};
use crate::kg::{Iri, KgError, KnowledgeGraph, Node, Triple};
use crate::sparql::parse_sparql;
use crate::text::{iri_label_tokens, tokenize_question, EmbeddingTable};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ToybenchSpec {
    pub n_entities: usize,
    pub n_relations: usize,
    pub n_classes: usize,
    /// Relation facts drawn before `dbp:` duplicates and `rdf:type` facts.
    pub n_facts: usize,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub template_set: String,
    pub embed_dim: usize,
    pub seed: u64,
}

impl Default for ToybenchSpec {
    fn default() -> Self {
        ToybenchSpec {
            n_entities: 150,
            n_relations: CATALOG.len(),
            n_classes: CLASSES.len(),
            n_facts: 450,
            n_train: 140,
            n_val: 20,
            n_test: 40,
            template_set: "standard".into(),
            embed_dim: 64,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ToybenchError {
    #[error("invalid toybench spec: {0}")]
    InvalidSpec(String),
    #[error("could only generate {got} distinct questions for `{split}`, wanted {wanted}")]
    Exhausted { split: &'static str, got: usize, wanted: usize },
    #[error(transparent)]
    Kg(#[from] KgError),
}

/// Ontology classes with the word used for them in questions and their
/// share of the entity pool.
const CLASSES: &[(&str, &str, usize)] = &[
    ("Person", "person", 34),
    ("City", "city", 16),
    ("Country", "country", 8),
    ("Company", "company", 10),
    ("Film", "film", 10),
    ("Book", "book", 9),
    ("University", "university", 6),
    ("Currency", "currency", 7),
];

#[derive(Clone, Copy, Debug)]
enum Obj {
    Class(&'static str),
    Number,
}

struct RelSpec {
    iri: &'static str,
    word: &'static str,
    subject: &'static str,
    object: Obj,
    /// Maximum objects per subject.
    max_objects: usize,
}

const fn rel(iri: &'static str, word: &'static str, subject: &'static str, object: Obj, max_objects: usize) -> RelSpec {
    RelSpec { iri, word, subject, object, max_objects }
}

/// `dbp:` duplicates are attached to a share of these facts; `deathPlace`
/// and `placeOfDeath` are mutually exclusive per person.
const CATALOG: &[RelSpec] = &[
    rel("dbo:birthPlace", "hometown", "Person", Obj::Class("City"), 1),
    rel("dbo:mayor", "head", "City", Obj::Class("Person"), 1),
    rel("dbo:leaderName", "head", "Country", Obj::Class("Person"), 1),
    rel("dbo:capital", "seat", "Country", Obj::Class("City"), 1),
    rel("dbo:state", "nation", "City", Obj::Class("Country"), 1),
    rel("dbo:deathPlace", "demise", "Person", Obj::Class("City"), 1),
    rel("dbo:placeOfDeath", "demise", "Person", Obj::Class("City"), 1),
    rel("dbo:spouse", "partner", "Person", Obj::Class("Person"), 1),
    rel("dbo:chairman", "head", "Company", Obj::Class("Person"), 1),
    rel("dbo:location", "nation", "Company", Obj::Class("Country"), 1),
    rel("dbo:foundedBy", "founder", "Company", Obj::Class("Person"), 1),
    rel("dbo:director", "creator", "Film", Obj::Class("Person"), 1),
    rel("dbo:starring", "cast", "Film", Obj::Class("Person"), 3),
    rel("dbo:author", "creator", "Book", Obj::Class("Person"), 1),
    rel("dbo:publisher", "imprint", "Book", Obj::Class("Company"), 1),
    rel("dbo:almaMater", "school", "Person", Obj::Class("University"), 1),
    rel("dbo:president", "head", "University", Obj::Class("Person"), 1),
    rel("dbo:currency", "money", "Country", Obj::Class("Currency"), 1),
    rel("dbo:populationTotal", "inhabitants", "City", Obj::Number, 1),
];

/// Relations that receive a `dbp:` twin on some facts.
const TWINNED: &[&str] = &["dbo:birthPlace", "dbo:spouse"];
const TWIN_RATE: f64 = 0.4;

const SYLLABLES: &[&str] = &[
    "ka", "lo", "vi", "stra", "mor", "den", "ri", "sa", "tho", "bel", "quin", "dar", "fen", "gal", "hor", "jin", "lu",
    "mar", "nel", "pol", "rus", "tor", "ul", "van", "wen", "yar", "zel", "cor", "dri", "esk", "fa", "gor", "ith", "kel",
    "nor", "om", "pra", "sil", "tav", "ur",
];

/// Question frames. Words inside braces are substituted.
const TEMPLATE_WEIGHTS: &[(Template, u32)] = &[
    (Template::Forward, 28),
    (Template::Reverse, 14),
    (Template::Count, 10),
    (Template::Ask, 10),
    (Template::Typed, 16),
    (Template::TwoHop, 22),
];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Template {
    Forward,
    Reverse,
    Count,
    Ask,
    Typed,
    TwoHop,
}

/// Words the templates themselves use.
const FRAME_WORDS: &[&str] = &["what", "is", "the", "of", "whose", "how", "many", "things", "have", "does", "list", "with"];

struct World {
    names: BTreeMap<Iri, String>,
    class_of: BTreeMap<Iri, &'static str>,
    facts: Vec<Triple>,
}

fn class_word(class: &str) -> &'static str {
    CLASSES.iter().find(|c| c.0 == class).map(|c| c.1).expect("known class")
}

fn spec_of(rel: &Iri) -> &'static RelSpec {
    let s = rel.to_string();
    CATALOG.iter().find(|r| r.iri == s).expect("catalog relation")
}

impl ToybenchSpec {
    fn validate(&self) -> Result<(), ToybenchError> {
        let bad = |m: String| Err(ToybenchError::InvalidSpec(m));
        if self.template_set != "standard" {
            return bad(format!("unknown template set `{}`", self.template_set));
        }
        if self.n_classes == 0 || self.n_classes > CLASSES.len() {
            return bad(format!("n_classes must be in 1..={}", CLASSES.len()));
        }
        if self.n_relations == 0 || self.n_relations > CATALOG.len() {
            return bad(format!("n_relations must be in 1..={}", CATALOG.len()));
        }
        if self.n_entities < 2 * self.n_classes {
            return bad("need at least two entities per class".into());
        }
        if self.n_facts == 0 || self.embed_dim == 0 {
            return bad("n_facts and embed_dim must be positive".into());
        }
        Ok(())
    }

    fn classes(&self) -> &'static [(&'static str, &'static str, usize)] {
        &CLASSES[..self.n_classes]
    }

    fn relations(&self) -> Vec<&'static RelSpec> {
        let have = |c: &str| self.classes().iter().any(|k| k.0 == c);
        CATALOG
            .iter()
            .filter(|r| {
                have(r.subject)
                    && match r.object {
                        Obj::Number => true,
                        Obj::Class(c) => have(c),
                    }
            })
            .take(self.n_relations)
            .collect()
    }
}

fn make_name(rng: &mut ChaCha8Rng, reserved: &BTreeSet<String>, used: &mut BTreeSet<String>) -> String {
    loop {
        let word = |rng: &mut ChaCha8Rng| {
            let n = rng.random_range(2..=3);
            (0..n).map(|_| *SYLLABLES.choose(rng).expect("syllables")).collect::<String>()
        };
        let (a, b) = (word(rng), word(rng));
        if a == b || reserved.contains(&a) || reserved.contains(&b) {
            continue;
        }
        let cap = |w: &str| {
            let mut c = w.chars();
            let first = c.next().expect("non-empty").to_ascii_uppercase();
            core::iter::once(first).chain(c).collect::<String>()
        };
        let name = format!("{} {}", cap(&a), cap(&b));
        if used.insert(name.clone()) {
            return name;
        }
    }
}

fn reserved_words() -> BTreeSet<String> {
    let mut r: BTreeSet<String> = FRAME_WORDS.iter().map(|s| s.to_string()).collect();
    for c in CLASSES {
        r.insert(c.1.to_string());
        r.extend(iri_label_tokens(&Iri::dbo(c.0)));
    }
    for rel in CATALOG {
        r.insert(rel.word.to_string());
        r.extend(iri_label_tokens(&rel.iri.parse::<Iri>().expect("catalog IRI")));
    }
    r
}

fn build_world(spec: &ToybenchSpec, rng: &mut ChaCha8Rng) -> World {
    let reserved = reserved_words();
    let classes = spec.classes();
    let weight_total: usize = classes.iter().map(|c| c.2).sum();
    let mut counts: Vec<usize> = classes.iter().map(|c| (spec.n_entities * c.2 / weight_total).max(2)).collect();
    // Fix rounding so the total is exact.
    while counts.iter().sum::<usize>() < spec.n_entities {
        let i = (0..counts.len()).max_by_key(|&i| (counts[i], usize::MAX - i)).expect("classes");
        counts[i] += 1;
    }
    while counts.iter().sum::<usize>() > spec.n_entities {
        let i = (0..counts.len()).filter(|&i| counts[i] > 2).max_by_key(|&i| (counts[i], usize::MAX - i)).expect("room to shrink");
        counts[i] -= 1;
    }

    let mut used = BTreeSet::new();
    let mut names = BTreeMap::new();
    let mut class_of = BTreeMap::new();
    let mut by_class: BTreeMap<&str, Vec<Iri>> = BTreeMap::new();
    for (c, n) in classes.iter().zip(&counts) {
        for _ in 0..*n {
            let name = make_name(rng, &reserved, &mut used);
            let iri = Iri::dbr(name.replace(' ', "_"));
            names.insert(iri.clone(), name);
            class_of.insert(iri.clone(), c.0);
            by_class.entry(c.0).or_default().push(iri);
        }
    }

    let relations = spec.relations();
    // Each person dies either in `deathPlace` or `placeOfDeath` style.
    let mut death_style: BTreeMap<&Iri, bool> = BTreeMap::new();
    let mut slots: Vec<(Iri, &RelSpec)> = Vec::new();
    for (iri, class) in &class_of {
        for r in relations.iter().filter(|r| r.subject == *class) {
            if r.iri == "dbo:deathPlace" || r.iri == "dbo:placeOfDeath" {
                let style = *death_style.entry(iri).or_insert_with(|| rng.random_bool(0.5));
                if style != (r.iri == "dbo:deathPlace") {
                    continue;
                }
            }
            for _ in 0..r.max_objects {
                slots.push((iri.clone(), r));
            }
        }
    }
    slots.shuffle(rng);
    slots.truncate(spec.n_facts);
    slots.sort_by(|a, b| (&a.0, a.1.iri).cmp(&(&b.0, b.1.iri)));

    let mut facts = BTreeSet::new();
    for (subject, r) in slots {
        let relation: Iri = r.iri.parse().expect("catalog IRI");
        let object = match r.object {
            Obj::Number => Node::Literal(format!("{}", rng.random_range(1_000..2_000_000))),
            Obj::Class(c) => {
                let pool: Vec<&Iri> = by_class[c].iter().filter(|o| **o != subject).collect();
                Node::Iri((*pool.choose(rng).expect("two entities per class")).clone())
            }
        };
        if TWINNED.contains(&r.iri) && rng.random_bool(TWIN_RATE) {
            let twin = relation.relation_twin().expect("dbo relation");
            facts.insert(Triple::new(subject.clone(), twin, object.clone()));
        }
        facts.insert(Triple::new(subject, relation, object));
    }
    for (iri, class) in &class_of {
        facts.insert(Triple::new(iri.clone(), Iri::rdf_type(), Node::Iri(Iri::dbo(*class))));
    }
    World {
        names,
        class_of,
        facts: facts.into_iter().collect(),
    }
}

struct Draft {
    question: String,
    sparql: String,
}

fn draft(world: &World, kg: &KnowledgeGraph, template: Template, rng: &mut ChaCha8Rng) -> Option<Draft> {
    let rel_facts: Vec<&Triple> = world.facts.iter().filter(|f| !f.relation.is_rdf_type() && f.relation.prefix == crate::kg::Prefix::Dbo).collect();
    let f = *rel_facts.choose(rng)?;
    let spec = spec_of(&f.relation);
    let s_name = &world.names[&f.subject];
    let (rel, word) = (&f.relation, spec.word);
    let object = f.object.as_iri();
    let d = |question: String, sparql: String| Some(Draft { question, sparql });
    match template {
        Template::Forward => d(
            format!("What is the {word} of {s_name}?"),
            format!("SELECT DISTINCT ?uri WHERE {{ {} {rel} ?uri }}", f.subject),
        ),
        Template::Reverse => {
            let o = object?;
            d(format!("Whose {word} is {}?", world.names[o]), format!("SELECT DISTINCT ?uri WHERE {{ ?uri {rel} {o} }}"))
        }
        Template::Count => {
            if spec.max_objects > 1 {
                d(
                    format!("How many {word} does {s_name} have?"),
                    format!("SELECT DISTINCT COUNT(?uri) WHERE {{ {} {rel} ?uri }}", f.subject),
                )
            } else {
                let o = object?;
                d(
                    format!("How many things have {word} {}?", world.names[o]),
                    format!("SELECT DISTINCT COUNT(?uri) WHERE {{ ?uri {rel} {o} }}"),
                )
            }
        }
        Template::Ask => {
            let o = object?;
            d(
                format!("Is {} the {word} of {s_name}?", world.names[o]),
                format!("ASK WHERE {{ {} {rel} {o} }}", f.subject),
            )
        }
        Template::Typed => {
            let o = object?;
            let class = world.class_of[&f.subject];
            d(
                format!("List the {} with {word} {}?", class_word(class), world.names[o]),
                format!("SELECT DISTINCT ?uri WHERE {{ ?uri {rel} {o} . ?uri a dbo:{class} }}"),
            )
        }
        Template::TwoHop => {
            let mid = object?;
            let next: Vec<&Triple> = kg
                .facts()
                .iter()
                .filter(|g| g.subject == *mid && !g.relation.is_rdf_type() && g.relation.prefix == crate::kg::Prefix::Dbo)
                .collect();
            let g = *next.choose(rng)?;
            let word2 = spec_of(&g.relation).word;
            d(
                format!("What is the {word2} of the {word} of {s_name}?"),
                format!("SELECT DISTINCT ?uri WHERE {{ {} {rel} ?x . ?x {} ?uri }}", f.subject, g.relation),
            )
        }
    }
}

fn build_embeddings(spec: &ToybenchSpec, world: &World, rng: &mut ChaCha8Rng) -> EmbeddingTable {
    let dim = spec.embed_dim;
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let unit = |v: Vec<f64>| {
        let n = libm::sqrt(v.iter().map(|x| x * x).sum::<f64>());
        v.into_iter().map(|x| x / n).collect::<Vec<f64>>()
    };
    let mut base: BTreeSet<String> = FRAME_WORDS.iter().map(|s| s.to_string()).collect();
    for c in CLASSES {
        base.insert(c.1.to_string());
    }
    for r in CATALOG {
        base.extend(iri_label_tokens(&r.iri.parse::<Iri>().expect("catalog IRI")));
    }
    for name in world.names.values() {
        base.extend(tokenize_question(name));
    }
    let synonyms: BTreeSet<&str> = CATALOG.iter().map(|r| r.word).collect();
    let mut table = EmbeddingTable::new(dim);
    for w in base.iter().filter(|w| !synonyms.contains(w.as_str())) {
        let v = unit((0..dim).map(|_| normal.sample(rng)).collect());
        table.insert(w, v).expect("dimension");
    }
    // A question word sits near the (normalised) label means of every
    // relation that uses it.
    for word in &synonyms {
        let mut acc = vec![0.0; dim];
        for r in CATALOG.iter().filter(|r| r.word == *word) {
            let m = unit(table.mean(&iri_label_tokens(&r.iri.parse::<Iri>().expect("catalog IRI"))));
            acc.iter_mut().zip(&m).for_each(|(a, x)| *a += x);
        }
        let noisy: Vec<f64> = unit(acc).into_iter().map(|x| x + 0.05 / libm::sqrt(dim as f64) * normal.sample(rng)).collect();
        table.insert(word, unit(noisy)).expect("dimension");
    }
    table
}

/// Generates a benchmark. Deterministic in `spec.seed`.
pub fn generate_toybench(spec: &ToybenchSpec) -> Result<Benchmark, ToybenchError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let world = build_world(spec, &mut rng);
    let kg = KnowledgeGraph::from_triples(world.facts.iter().cloned())?;
    let embeddings = build_embeddings(spec, &world, &mut rng);

    let weights: u32 = TEMPLATE_WEIGHTS.iter().map(|t| t.1).sum();
    let mut seen: BTreeSet<String> = BTreeSet::new();
    let mut splits: Vec<Vec<QaRecord>> = Vec::new();
    for (split, wanted) in [("train", spec.n_train), ("val", spec.n_val), ("test", spec.n_test)] {
        let mut records = Vec::with_capacity(wanted);
        let mut attempts = 0;
        while records.len() < wanted {
            attempts += 1;
            if attempts > 200 * (wanted + 10) {
                return Err(ToybenchError::Exhausted { split, got: records.len(), wanted });
            }
            let mut pick = rng.random_range(0..weights);
            let template = TEMPLATE_WEIGHTS
                .iter()
                .find(|(_, w)| {
                    if pick < *w {
                        true
                    } else {
                        pick -= w;
                        false
                    }
                })
                .map(|t| t.0)
                .expect("weights cover range");
            let Some(d) = draft(&world, &kg, template, &mut rng) else {
                continue;
            };
            if !seen.insert(d.question.to_lowercase()) {
                continue;
            }
            let query = parse_sparql(&d.sparql).expect("templates produce valid SPARQL");
            let answers = answer_strings(&query, &kg).expect("templates produce executable SPARQL");
            if answers.is_empty() {
                continue;
            }
            records.push(QaRecord {
                id: format!("{split}-{:04}", records.len()),
                question: d.question,
                sparql: d.sparql,
                answers,
            });
        }
        splits.push(records);
    }
    let test = splits.pop().expect("three splits");
    let val = splits.pop().expect("three splits");
    let train = splits.pop().expect("three splits");
    Ok(Benchmark { kg, train, val, test, embeddings })
}
