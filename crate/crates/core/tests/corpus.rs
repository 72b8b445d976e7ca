mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::time::{Duration, Instant};

use common::{build, corpus, ctx};
use explorable_core::corpus::{list_ids, load_entry, load_gold};
use explorable_core::depgraph::{compare_to_gold, GraphWarning};
use explorable_core::formalizer::check_alignment;
use explorable_core::lean::LeanRunner;
use explorable_core::pipeline::worked_examples;
use explorable_core::prober::{
    evaluate_at, make_probe, oracle_check, value_consistency, Binding, DisagreementKind, ReducedValue,
};
use explorable_core::LeanSource;

#[test]
fn b11_recovers_seven_of_eight_steps() {
    let start = Instant::now();
    let doc = build("b11");
    let gold = load_gold(&load_entry(&corpus(), "b11").unwrap())
        .unwrap()
        .unwrap();
    let report = compare_to_gold(&doc.graph.step_maps, &gold);
    assert_eq!(report.total, 8);
    assert!(report.strict >= 7, "{report:?}");
    assert_eq!(report.lenient, 8, "{report:?}");
    let missed: Vec<_> = report
        .steps
        .iter()
        .filter(|s| !s.strict)
        .map(|s| s.step)
        .collect();
    assert_eq!(missed, vec![5]);
    assert!(start.elapsed() < Duration::from_secs(60));
}

#[test]
fn b11_edges_follow_definitions() {
    let doc = build("b11");
    let e = &doc.graph.edges;
    assert!(e.contains(&("n_def".into(), "hn".into())));
    assert!(e.contains(&("n".into(), "hns".into())));
    assert!(e.contains(&("hr".into(), "hrs".into())));
    let seven: BTreeSet<usize> = doc.graph.step_maps.relies_on[&7].keys().copied().collect();
    assert!(seven.is_superset(&BTreeSet::from([2, 4, 5])));
    assert!(doc.graph.warnings.is_empty());
}

#[test]
fn reference_alignment_names() {
    let doc = build("b11");
    let report = check_alignment(&doc.written, &doc.lean).unwrap();
    assert!(report.is_aligned());
    for n in ["n", "r", "s"] {
        assert!(report.matched_names.contains(n));
    }
}

#[test]
fn pathology_fixtures() {
    let pn2 = build("pn2");
    let gaps: Vec<_> = pn2
        .graph
        .warnings
        .iter()
        .filter(|w| matches!(w, GraphWarning::ClosingTacticGap { .. }))
        .collect();
    assert_eq!(gaps.len(), 1, "{:?}", pn2.graph.warnings);
    let rfl = build("rfl_demo");
    let bk: Vec<_> = rfl
        .graph
        .warnings
        .iter()
        .filter(|w| matches!(w, GraphWarning::BookkeepingNode { .. }))
        .collect();
    assert_eq!(bk.len(), 1, "{:?}", rfl.graph.warnings);
    assert!(matches!(bk[0], GraphWarning::BookkeepingNode { fact, .. } if fact == "h"));
}

#[test]
fn four_maps_transpose_on_corpus() {
    for id in list_ids(&corpus()).unwrap() {
        let m = build(&id).graph.step_maps;
        let mut from_relies: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
        for (k, deps) in &m.relies_on {
            for j in deps.keys() {
                from_relies.entry(*j).or_default().insert(*k);
            }
        }
        let used_by: BTreeMap<usize, BTreeSet<usize>> = m
            .used_by
            .iter()
            .filter(|(_, v)| !v.is_empty())
            .map(|(k, v)| (*k, v.clone()))
            .collect();
        assert_eq!(from_relies, used_by, "{id}");
    }
}

#[test]
fn b11_break_detection() {
    let doc = build("b11");
    let runner = LeanRunner::reference();
    let at2 = evaluate_at(&doc, &Binding::new([("x", 2)]), &runner, &ctx()).unwrap();
    assert!(!at2.hypotheses_ok);
    assert_eq!(at2.conclusion_holds, Some(false));
    assert_eq!(at2.break_step, Some(5));
    for x in 3..=10 {
        let e = evaluate_at(&doc, &Binding::new([("x", x)]), &runner, &ctx()).unwrap();
        assert!(e.hypotheses_ok);
        assert_eq!(e.break_step, None, "x = {x}");
    }
}

#[test]
fn b11_values_at_five() {
    let doc = build("b11");
    let e = evaluate_at(&doc, &Binding::new([("x", 5)]), &LeanRunner::reference(), &ctx()).unwrap();
    let last = e.per_step.last().unwrap();
    assert_eq!(last.values["n"], ReducedValue::Int(24));
    assert_eq!(last.values["r"], ReducedValue::Int(4));
    assert_eq!(last.values["s"], ReducedValue::Int(6));
    assert_eq!(last.values["hr"], ReducedValue::Bool(true));
}

#[test]
fn b11_worked_examples_at_two() {
    let doc = build("b11");
    let e = evaluate_at(&doc, &Binding::new([("x", 2)]), &LeanRunner::reference(), &ctx()).unwrap();
    let worked = worked_examples(&doc, &e);
    assert_eq!(worked.len(), 8);
    for w in &worked {
        assert!(w.text.is_some(), "step {} missing {:?}", w.step, w.missing_keys);
    }
    assert_eq!(worked[1].text.as_deref(), Some("x^2 - 1 = 2^2 - 1 = 3"));
    assert!(worked[4].breaks_here);
}

#[test]
fn step_two_probe_reduces_n() {
    let doc = build("b11");
    let probe = make_probe(&doc.lean, &doc.written.inputs, 2, &Binding::new([("x", 2)])).unwrap();
    let outcome = LeanRunner::reference()
        .run_probe(&probe, 2, &common::scratch().join("n_probe.lean"))
        .unwrap();
    assert!(outcome.closed);
    let state = outcome
        .raw_states
        .iter()
        .rev()
        .find(|s| !s.is_terminal())
        .unwrap();
    assert_eq!(state.hypothesis("n_def").unwrap().type_text, "n = 3");
}

#[test]
fn oracle_agreement_on_study_theorems() {
    let start = Instant::now();
    let runner = LeanRunner::reference();
    for id in ["b11", "b12"] {
        let doc = build(id);
        let var = doc.written.inputs[0].name.clone();
        let values = BTreeMap::from([(var, (-10..=10).collect())]);
        let report = oracle_check(&doc, &values, &runner, &ctx()).unwrap();
        assert_eq!(report.checked, 21);
        assert!(report.is_clean(), "{id}: {:?}", report.disagreements);
    }
    let a1 = build("a1");
    let values = BTreeMap::from([
        ("x".to_string(), (2..=6).collect()),
        ("n".to_string(), vec![3, 5, 7]),
    ]);
    let report = oracle_check(&a1, &values, &runner, &ctx()).unwrap();
    assert_eq!(report.checked, 15);
    assert!(report.is_clean(), "{:?}", report.disagreements);
    assert!(start.elapsed() < Duration::from_secs(300));
}

#[test]
fn mutated_constant_disagrees() {
    let mut doc = build("b11");
    let text = doc.lean.full_text.replace("r = x - 1 :=", "r = x - 3 :=");
    assert_ne!(text, doc.lean.full_text);
    doc.lean = LeanSource::parse(&text).unwrap();
    let values = BTreeMap::from([("x".to_string(), (-10..=10).collect())]);
    let report = oracle_check(&doc, &values, &LeanRunner::reference(), &ctx()).unwrap();
    assert!(!report.is_clean());
    assert!(report
        .disagreements
        .iter()
        .any(|d| d.kind == DisagreementKind::BreakUnderValidHypotheses));
}

#[test]
fn extracted_values_satisfy_definitions() {
    let runner = LeanRunner::reference();
    for id in ["b11", "b12", "a1"] {
        let doc = build(id);
        let input = &doc.written.inputs[0];
        for v in input.default_range.values() {
            let b = Binding::defaults(&doc.written.inputs).with(&input.name, v);
            let e = evaluate_at(&doc, &b, &runner, &ctx()).unwrap();
            for p in &e.per_step {
                let failures = value_consistency(&doc.lean, p);
                assert!(
                    failures.is_empty(),
                    "{id} {b} step {}: {failures:?}",
                    p.step_index
                );
            }
        }
    }
}

#[test]
fn a1_breaks_at_s_step_for_n_one() {
    let doc = build("a1");
    let e = evaluate_at(
        &doc,
        &Binding::new([("x", 2), ("n", 1)]),
        &LeanRunner::reference(),
        &ctx(),
    )
    .unwrap();
    assert!(!e.hypotheses_ok);
    assert_eq!(e.break_step, Some(6));
    let worked = worked_examples(
        &doc,
        &evaluate_at(
            &doc,
            &Binding::new([("x", 2), ("n", 3)]),
            &LeanRunner::reference(),
            &ctx(),
        )
        .unwrap(),
    );
    assert_eq!(worked[1].text.as_deref(), Some("x^n + 1 = 2^3 + 1 = 9"));
    assert_eq!(
        worked[3].text.as_deref(),
        Some("r = 2 + 1 = 3, s = 3, and r · s = 3 · 3 = 9")
    );
}
