use std::collections::BTreeSet;

use silhouette_core::kg::Prefix;
use silhouette_core::noise::coverage_stats;
use silhouette_core::sparql::{extract_terms, parse_sparql, SparqlQuery};
use silhouette_core::toybench::{generate_toybench, ToybenchSpec};

fn parsed(records: &[silhouette_core::dataset::QaRecord]) -> Vec<SparqlQuery> {
    records.iter().map(|r| parse_sparql(&r.sparql).unwrap()).collect()
}

#[test]
fn split_sizes_and_determinism() {
    let spec = ToybenchSpec { n_train: 50, n_val: 10, n_test: 20, seed: 12, ..Default::default() };
    let a = generate_toybench(&spec).unwrap();
    assert_eq!((a.train.len(), a.val.len(), a.test.len()), (50, 10, 20));
    let b = generate_toybench(&spec).unwrap();
    assert_eq!((a.train, a.val, a.test), (b.train, b.val, b.test));
    assert_eq!(a.kg.to_tsv(), b.kg.to_tsv());
    assert_eq!(a.embeddings.to_text(), b.embeddings.to_text());
    let c = generate_toybench(&ToybenchSpec { seed: 13, ..spec }).unwrap();
    assert_ne!(a.kg.to_tsv(), c.kg.to_tsv());
}

#[test]
fn questions_are_distinct_across_splits() {
    let b = generate_toybench(&ToybenchSpec::default()).unwrap();
    let all: Vec<String> = b.train.iter().chain(&b.val).chain(&b.test).map(|r| r.question.to_lowercase()).collect();
    assert_eq!(all.iter().collect::<BTreeSet<_>>().len(), all.len());
}

#[test]
fn dbo_dbp_duplicates_exist() {
    let b = generate_toybench(&ToybenchSpec::default()).unwrap();
    let rels = b.kg.relations();
    assert!(rels.iter().any(|r| r.prefix == Prefix::Dbp && r.relation_twin().is_some_and(|t| rels.contains(&t))));
}

/// Train gold queries built to mention exactly half of the test entities.
#[test]
fn constructed_split_gives_half_entity_coverage() {
    let b = generate_toybench(&ToybenchSpec { seed: 3, ..Default::default() }).unwrap();
    let mut test = parsed(&b.test);
    let mut entities: BTreeSet<_> = test.iter().flat_map(|q| extract_terms(q).entities).collect();
    if entities.len() % 2 == 1 {
        let extra = parse_sparql("SELECT DISTINCT ?uri WHERE { dbr:Padding_Entity dbo:p ?uri }").unwrap();
        entities.extend(extract_terms(&extra).entities);
        test.push(extra);
    }
    let train: Vec<SparqlQuery> = entities
        .iter()
        .take(entities.len() / 2)
        .map(|e| parse_sparql(&format!("SELECT DISTINCT ?uri WHERE {{ {e} ?p ?uri }}")).unwrap())
        .collect();
    assert_eq!(coverage_stats(&train, &test).dbr, Some(50.0));
}
