//! Acceptance checks: one PASS/FAIL line per criterion, non-zero exit on failure.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use explorable_cli::commands::{self, Paths};
use explorable_core::bundle::{from_bundle_str, load_bundle, to_bundle_string};
use explorable_core::corpus::{load_entry, load_gold};
use explorable_core::depgraph::{compare_to_gold, GraphWarning};
use explorable_core::lean::LeanRunner;
use explorable_core::pipeline::worked_examples;
use explorable_core::prober::{evaluate_at, oracle_check, value_consistency, Binding, ProbeContext};
use explorable_core::provider::ProviderMode;
use explorable_core::{LeanSource, ProofDocument};

type Check = Result<String, String>;
type Criterion = (&'static str, fn(&Env) -> Check);

struct Env {
    paths: Paths,
    runner: LeanRunner,
    ctx: ProbeContext,
}

impl Env {
    fn doc(&self, id: &str) -> Result<ProofDocument, String> {
        let path = self.paths.bundle(id);
        if !path.is_file() {
            commands::formalize(&self.paths, id, ProviderMode::Fixture, &self.runner)
                .map_err(|e| e.to_string())?;
            commands::analyze(&self.paths, id, ProviderMode::Fixture, &self.runner)
                .map_err(|e| e.to_string())?;
        }
        load_bundle(&path).map(|b| b.document).map_err(|e| e.to_string())
    }
}

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn gold_recovery(env: &Env) -> Check {
    let start = Instant::now();
    let doc = env.doc("b11")?;
    let entry = load_entry(&env.paths.corpus, "b11").map_err(|e| e.to_string())?;
    let gold = load_gold(&entry)
        .map_err(|e| e.to_string())?
        .ok_or("no gold graph")?;
    let report = compare_to_gold(&doc.graph.step_maps, &gold);
    let elapsed = start.elapsed();
    ensure(
        report.strict >= 7,
        format!("recovered {}/{}", report.strict, report.total),
    )?;
    ensure(elapsed < Duration::from_secs(60), format!("took {elapsed:?}"))?;
    Ok(format!(
        "{}/{} steps in {:.2?}",
        report.strict, report.total, elapsed
    ))
}

fn worked_example(env: &Env) -> Check {
    let doc = env.doc("b11")?;
    let e = evaluate_at(&doc, &Binding::new([("x", 2)]), &env.runner, &env.ctx).map_err(|e| e.to_string())?;
    let worked = worked_examples(&doc, &e);
    let missing: Vec<_> = worked
        .iter()
        .filter(|w| w.text.is_none())
        .map(|w| w.step)
        .collect();
    ensure(missing.is_empty(), format!("steps without text: {missing:?}"))?;
    let two = worked[1].text.clone().unwrap_or_default();
    ensure(two == "x^2 - 1 = 2^2 - 1 = 3", format!("step 2 reads `{two}`"))?;
    Ok(format!("{} templates instantiated; step 2: {two}", worked.len()))
}

fn oracle_agreement(env: &Env) -> Check {
    let mut checked = 0;
    let full: Vec<i64> = (-10..=10).collect();
    for id in ["b11", "b12"] {
        let doc = env.doc(id)?;
        let var = doc.written.inputs[0].name.clone();
        let r = oracle_check(
            &doc,
            &BTreeMap::from([(var, full.clone())]),
            &env.runner,
            &env.ctx,
        )
        .map_err(|e| e.to_string())?;
        ensure(
            r.is_clean(),
            format!("{id}: {} disagreements", r.disagreements.len()),
        )?;
        checked += r.checked;
    }
    let a1 = env.doc("a1")?;
    let values = BTreeMap::from([
        ("x".to_string(), (2..=6).collect()),
        ("n".to_string(), vec![3, 5, 7]),
    ]);
    let r = oracle_check(&a1, &values, &env.runner, &env.ctx).map_err(|e| e.to_string())?;
    ensure(
        r.is_clean(),
        format!("a1: {} disagreements", r.disagreements.len()),
    )?;
    checked += r.checked;

    let mut mutated = env.doc("b11")?;
    let text = mutated.lean.full_text.replace("r = x - 1 :=", "r = x - 3 :=");
    ensure(text != mutated.lean.full_text, "mutation site not found")?;
    mutated.lean = LeanSource::parse(&text).map_err(|e| e.to_string())?;
    let r = oracle_check(
        &mutated,
        &BTreeMap::from([("x".to_string(), full)]),
        &env.runner,
        &env.ctx,
    )
    .map_err(|e| e.to_string())?;
    ensure(!r.is_clean(), "mutated constant went undetected")?;
    Ok(format!(
        "0 disagreements over {checked} bindings; mutation gives {}",
        r.disagreements.len()
    ))
}

fn break_detection(env: &Env) -> Check {
    let doc = env.doc("b11")?;
    let eval =
        |x| evaluate_at(&doc, &Binding::new([("x", x)]), &env.runner, &env.ctx).map_err(|e| e.to_string());
    let two = eval(2)?;
    ensure(!two.hypotheses_ok, "hypotheses hold at x = 2")?;
    ensure(
        two.break_step == Some(5),
        format!("break at {:?} for x = 2", two.break_step),
    )?;
    for x in 3..=10 {
        let e = eval(x)?;
        ensure(
            e.break_step.is_none(),
            format!("break at {:?} for x = {x}", e.break_step),
        )?;
    }
    Ok("x = 2 breaks at step 5; x = 3..10 unbroken".into())
}

fn pathologies(env: &Env) -> Check {
    let count = |id: &str, f: fn(&GraphWarning) -> bool| -> Result<usize, String> {
        Ok(env.doc(id)?.graph.warnings.iter().filter(|w| f(w)).count())
    };
    let gaps = count("pn2", |w| matches!(w, GraphWarning::ClosingTacticGap { .. }))?;
    let bk = count("rfl_demo", |w| matches!(w, GraphWarning::BookkeepingNode { .. }))?;
    ensure(gaps == 1, format!("pn2 closing gaps: {gaps}"))?;
    ensure(bk == 1, format!("rfl_demo bookkeeping nodes: {bk}"))?;
    Ok("one closing-tactic gap, one bookkeeping node".into())
}

fn determinism(env: &Env) -> Check {
    let ids = ["a1", "b11", "b12", "pn2", "rfl_demo"];
    let mut runs = Vec::new();
    for _ in 0..2 {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let paths = Paths {
            bundles: dir.path().join("bundles"),
            workdir: dir.path().join("work"),
            ..env.paths.clone()
        };
        let mut bytes = Vec::new();
        for id in ids {
            let path = commands::formalize(&paths, id, ProviderMode::Fixture, &env.runner)
                .map_err(|e| e.to_string())?;
            commands::analyze(&paths, id, ProviderMode::Fixture, &env.runner).map_err(|e| e.to_string())?;
            if !matches!(id, "pn2" | "rfl_demo") {
                commands::precompute(&paths, id, &[], &env.runner).map_err(|e| e.to_string())?;
            }
            bytes.push(std::fs::read(path).map_err(|e| e.to_string())?);
        }
        runs.push(bytes);
    }
    ensure(runs[0] == runs[1], "bundles differ between runs")?;
    Ok(format!("{} bundles byte-identical across two runs", ids.len()))
}

fn invariants(env: &Env) -> Check {
    let mut evals = 0;
    for id in ["a1", "b11", "b12", "pn2", "rfl_demo"] {
        let doc = env.doc(id)?;
        let text = to_bundle_string(&doc);
        let back = from_bundle_str(&text).map_err(|e| e.to_string())?.document;
        ensure(
            back == doc && to_bundle_string(&back) == text,
            format!("{id}: bundle round trip"),
        )?;

        let g = &doc.graph;
        g.topological_order().map_err(|e| format!("{id}: {e}"))?;
        for (from, to) in &g.edges {
            let (a, b) = (&g.nodes[from], &g.nodes[to]);
            ensure(a.order < b.order, format!("{id}: {from} -> {to} out of order"))?;
            if let (Some(sa), Some(sb)) = (a.step, b.step) {
                ensure(sa <= sb, format!("{id}: {from} -> {to} goes back a step"))?;
            }
        }

        let m = &g.step_maps;
        let mut transposed: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
        for (k, deps) in &m.relies_on {
            for j in deps.keys() {
                transposed.entry(*j).or_default().insert(*k);
            }
        }
        let used_by: BTreeMap<usize, BTreeSet<usize>> = m
            .used_by
            .iter()
            .filter(|(_, v)| !v.is_empty())
            .map(|(k, v)| (*k, v.clone()))
            .collect();
        ensure(
            transposed == used_by,
            format!("{id}: relies_on and used_by disagree"),
        )?;

        if doc.written.oracle.is_none() || matches!(id, "pn2" | "rfl_demo") {
            continue;
        }
        let input = &doc.written.inputs[0];
        for v in input.default_range.values() {
            let b = Binding::defaults(&doc.written.inputs).with(&input.name, v);
            let e = evaluate_at(&doc, &b, &env.runner, &env.ctx).map_err(|e| e.to_string())?;
            for p in &e.per_step {
                let bad = value_consistency(&doc.lean, p);
                ensure(
                    bad.is_empty(),
                    format!("{id} at {b} step {}: {bad:?}", p.step_index),
                )?;
            }
            evals += 1;
        }
    }
    Ok(format!(
        "round trip, acyclicity, monotonicity, transpose; {evals} bindings value-consistent"
    ))
}

fn main() -> ExitCode {
    let dir = tempfile::tempdir().expect("scratch dir");
    let env = Env {
        paths: common::paths(dir.path()),
        runner: LeanRunner::reference(),
        ctx: ProbeContext::new(dir.path().join("work")),
    };
    let checks: [Criterion; 7] = [
        ("gold dependency recovery", gold_recovery),
        ("worked example at x = 2", worked_example),
        ("oracle agreement and mutation", oracle_agreement),
        ("break detection", break_detection),
        ("pathology warnings", pathologies),
        ("fixture-mode determinism", determinism),
        ("invariants", invariants),
    ];
    let mut failed = 0;
    for (name, check) in checks {
        match check(&env) {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name}: {detail}");
            }
        }
    }
    println!("{} of {} criteria passed", checks.len() - failed, checks.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
