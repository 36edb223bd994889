use std::collections::BTreeSet;

use proptest::prelude::*;
use silhouette_core::dataset::Benchmark;
use silhouette_core::kg::Iri;
use silhouette_core::noise::{coverage_stats, demask, gold_linker, mask_scenario_a, mask_scenario_b, mask_scenario_c, simulate_linker, LinkerNoiseConfig};
use silhouette_core::sparql::{extract_terms, is_placeholder, parse_sparql, tokenize_sparql};
use silhouette_core::text::tokenize_question;
use silhouette_core::toybench::{generate_toybench, ToybenchSpec};

fn benches(seeds: std::ops::RangeInclusive<u64>) -> Vec<Benchmark> {
    seeds.map(|seed| generate_toybench(&ToybenchSpec { seed, ..Default::default() }).unwrap()).collect()
}

#[test]
fn scenario_a_masks_everything_and_round_trips_on_1000_pairs() {
    let mut n = 0;
    for b in benches(1..=5) {
        for r in b.train.iter().chain(&b.val).chain(&b.test) {
            let gold = parse_sparql(&r.sparql).unwrap();
            let q = tokenize_question(&r.question);
            let pair = mask_scenario_a(&q, &gold, &b.embeddings);
            let terms = extract_terms(&gold);

            let masked: BTreeSet<Iri> = pair.mask_table.values().map(|e| e.iri.clone()).collect();
            let wanted: BTreeSet<Iri> = terms.entities.iter().chain(&terms.relations).cloned().collect();
            assert_eq!(masked, wanted, "{}", r.question);
            // Every entry was found in the question too.
            for (ph, e) in &pair.mask_table {
                assert!(e.span.is_some(), "{ph} unaligned in {:?}", r.question);
                assert!(pair.masked_question.contains(ph));
                assert!(pair.masked_sparql.contains(ph));
            }
            // No gold entity or relation survives in the masked SPARQL.
            for t in &pair.masked_sparql {
                assert!(!wanted.iter().any(|w| w.to_string() == *t), "{t} left concrete");
            }
            let text = demask(&pair.masked_sparql, &pair.mask_table).unwrap();
            assert_eq!(tokenize_sparql(&text).unwrap(), tokenize_sparql(&r.sparql).unwrap());
            n += 1;
        }
    }
    assert_eq!(n, 1000);
}

#[test]
fn full_recall_linkers_reduce_to_scenario_a() {
    for b in benches(6..=6) {
        for r in &b.test {
            let gold = parse_sparql(&r.sparql).unwrap();
            let q = tokenize_question(&r.question);
            let a = mask_scenario_a(&q, &gold, &b.embeddings);
            let links = gold_linker(&q, &gold, &b.embeddings);
            let sim = simulate_linker(&links, &LinkerNoiseConfig::perfect(3), &b.kg, q.len(), &r.id).unwrap();
            assert_eq!(sim, links);
            let pb = mask_scenario_b(&q, &gold, &sim);
            let pc = mask_scenario_c(&q, &gold, &sim);
            assert_eq!((pb.masked_question, pb.masked_sparql, pb.mask_table), (a.masked_question.clone(), a.masked_sparql.clone(), a.mask_table.clone()));
            assert_eq!((pc.masked_question, pc.masked_sparql, pc.mask_table), (a.masked_question, a.masked_sparql, a.mask_table));
        }
    }
}

#[test]
fn coverage_on_a_constructed_split() {
    let q = |e: &str| parse_sparql(&format!("SELECT DISTINCT ?uri WHERE {{ dbr:{e} dbo:p ?uri }}")).unwrap();
    let train: Vec<_> = (0..7).map(|i| q(&format!("E{i}"))).collect();
    let eval: Vec<_> = (0..15).map(|i| q(&format!("E{i}"))).collect();
    let c = coverage_stats(&train, &eval);
    assert!((c.dbr.unwrap() - 100.0 * 7.0 / 15.0).abs() < 1e-12);
    assert_eq!(format!("{:.1}", c.dbr.unwrap()), "46.7");
    assert_eq!(c.dbo, Some(100.0));
    assert_eq!(c.dbp, None);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn noisy_masks_are_consistent(seed in 0u64..10_000, re in 0.0f64..=1.0, rr in 0.0f64..=1.0, wrong in 0.0f64..=1.0, spur in 0.0f64..3.0) {
        let b = generate_toybench(&ToybenchSpec { seed: 2, n_train: 20, n_val: 1, n_test: 1, ..Default::default() }).unwrap();
        let cfg = LinkerNoiseConfig { recall_entity: re, recall_relation: rr, spurious_rate: spur, wrong_link_rate: wrong, seed };
        for r in &b.train {
            let gold = parse_sparql(&r.sparql).unwrap();
            let q = tokenize_question(&r.question);
            let links = simulate_linker(&gold_linker(&q, &gold, &b.embeddings), &cfg, &b.kg, q.len(), &r.id).unwrap();
            links.validate(q.len()).unwrap();
            for pair in [mask_scenario_b(&q, &gold, &links), mask_scenario_c(&q, &gold, &links)] {
                for t in pair.masked_sparql.iter().chain(&pair.masked_question).filter(|t| is_placeholder(t)) {
                    prop_assert!(pair.mask_table.contains_key(t));
                }
                // Masking only ever replaces gold terms by their own placeholders.
                let text = demask(&pair.masked_sparql, &pair.mask_table).unwrap();
                prop_assert_eq!(tokenize_sparql(&text).unwrap(), tokenize_sparql(&r.sparql).unwrap());
            }
        }
    }
}
