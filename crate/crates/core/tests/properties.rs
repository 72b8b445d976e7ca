//! Property tests over randomly generated straight-line proofs.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::OnceLock;

use explorable_core::bundle::{from_bundle_str, to_bundle_string};
use explorable_core::corpus::CorpusEntry;
use explorable_core::lean::LeanRunner;
use explorable_core::pipeline::{analyze, formalize, precompute};
use explorable_core::prober::{evaluate_at, value_consistency, Binding, ProbeContext, ReducedValue};
use explorable_core::provider::{CompletionRequest, GenerationProvider, ProviderError, ProviderMode};
use explorable_core::segment::segment_written_proof;
use explorable_core::{InputVar, IntRange, NumberDomain, OracleSpec, ProofDocument};
use proptest::prelude::*;
use proptest::sample::Index;

#[derive(Debug, Clone, Copy)]
enum Op {
    Add,
    Sub,
    Mul,
}

/// `v = a op b` where `a` is `x` or an earlier variable and `b` is a small
/// constant, `x`, or (for `Add`/`Sub`) an earlier variable.
#[derive(Debug, Clone)]
struct Def {
    op: Op,
    a: Index,
    b: Index,
    constant: i64,
    /// Also state the definition as a separate equational fact.
    restate: bool,
}

#[derive(Debug, Clone)]
struct Spec {
    steps: Vec<Vec<Def>>,
}

fn def() -> impl Strategy<Value = Def> {
    (
        prop_oneof![Just(Op::Add), Just(Op::Sub), Just(Op::Mul)],
        any::<Index>(),
        any::<Index>(),
        0i64..5,
        any::<bool>(),
    )
        .prop_map(|(op, a, b, constant, restate)| Def {
            op,
            a,
            b,
            constant,
            restate,
        })
}

fn spec() -> impl Strategy<Value = Spec> {
    prop::collection::vec(prop::collection::vec(def(), 1..3), 1..5).prop_map(|steps| Spec { steps })
}

struct Generated {
    lean: String,
    prose: String,
    templates: BTreeMap<usize, String>,
    /// Expected value of every variable at a given `x`.
    eval: Box<dyn Fn(i64) -> BTreeMap<String, i64> + Send + Sync>,
}

#[derive(Clone)]
enum Operand {
    X,
    Var(usize),
    Const(i64),
}

fn render(o: &Operand) -> String {
    match o {
        Operand::X => "x".into(),
        Operand::Var(i) => format!("v{i}"),
        Operand::Const(c) => c.to_string(),
    }
}

fn generate(spec: &Spec) -> Generated {
    let mut lean = String::from("theorem gen : ∀ x : ℤ, x + 0 = x := by\n  -- step 1\n  intro x\n");
    let mut prose = vec!["Let $x$ be an integer.".to_string()];
    let mut templates = BTreeMap::from([(1, "Let x = {{x}}.".to_string())]);
    let mut defs: Vec<(Op, Operand, Operand)> = Vec::new();
    for (s, step) in spec.steps.iter().enumerate() {
        let index = s + 2;
        lean.push_str(&format!("  -- step {index}\n"));
        let mut shown = Vec::new();
        for d in step {
            let n = defs.len();
            let a = match d.a.index(n + 1) {
                0 => Operand::X,
                i => Operand::Var(i - 1),
            };
            let b = match (d.op, d.b.index(n + 2)) {
                (_, 0) => Operand::Const(d.constant),
                (_, 1) => Operand::X,
                (Op::Mul, _) => Operand::Const(d.constant),
                (_, i) => Operand::Var(i - 2),
            };
            let sym = match d.op {
                Op::Add => "+",
                Op::Sub => "-",
                Op::Mul => "*",
            };
            let expr = format!("{} {sym} {}", render(&a), render(&b));
            lean.push_str(&format!(
                "  have ⟨v{n}, v{n}_def⟩ : ∃ v{n} : ℤ, v{n} = {expr} := ⟨_, rfl⟩\n"
            ));
            if d.restate {
                lean.push_str(&format!("  have h{n} : v{n} = {expr} := by rw [v{n}_def]\n"));
            }
            shown.push(format!("v{n} = {{{{v{n}}}}}"));
            defs.push((d.op, a, b));
        }
        if index == spec.steps.len() + 1 {
            lean.push_str("  omega\n");
        }
        prose.push(format!("Next we define step {index} quantities."));
        templates.insert(index, shown.join(", "));
    }
    let eval = move |x: i64| {
        let mut vals: Vec<i64> = Vec::new();
        for (op, a, b) in &defs {
            let get = |o: &Operand| match o {
                Operand::X => x,
                Operand::Var(i) => vals[*i],
                Operand::Const(c) => *c,
            };
            let (a, b) = (get(a), get(b));
            vals.push(match op {
                Op::Add => a + b,
                Op::Sub => a - b,
                Op::Mul => a * b,
            });
        }
        vals.iter()
            .enumerate()
            .map(|(i, v)| (format!("v{i}"), *v))
            .collect()
    };
    Generated {
        lean,
        prose: prose.join("¶ "),
        templates,
        eval: Box::new(eval),
    }
}

struct GenProvider<'a>(&'a Generated);

impl GenerationProvider for GenProvider<'_> {
    fn mode(&self) -> ProviderMode {
        ProviderMode::Live
    }

    fn complete(&self, request: &CompletionRequest) -> Result<String, ProviderError> {
        match request.tags.kind.as_str() {
            "formalize" => Ok(format!("```lean\n{}```\n", self.0.lean)),
            "link" => Ok("[]".into()),
            "template" => Ok(self.0.templates[&request.tags.step.unwrap()].clone()),
            other => Err(ProviderError::Config(format!("unexpected request {other}"))),
        }
    }
}

fn scratch() -> &'static std::path::Path {
    static DIR: OnceLock<tempfile::TempDir> = OnceLock::new();
    DIR.get_or_init(|| tempfile::tempdir().unwrap()).path()
}

fn runner() -> &'static LeanRunner {
    static R: OnceLock<LeanRunner> = OnceLock::new();
    R.get_or_init(LeanRunner::reference)
}

fn build(g: &Generated) -> ProofDocument {
    let mut written =
        segment_written_proof("For every integer $x$, $x + 0 = x$.", &g.prose, Some("¶")).unwrap();
    written.inputs.push(InputVar {
        name: "x".into(),
        number_domain: NumberDomain::Integer,
        default_range: IntRange::new(-3, 3),
        default_value: 1,
    });
    written.oracle = Some(OracleSpec {
        hypothesis: "true".into(),
        conclusion: "x + 0 == x".into(),
    });
    let entry = CorpusEntry {
        id: "gen".into(),
        dir: scratch().to_path_buf(),
        written,
    };
    let provider = GenProvider(g);
    let mut doc = formalize(&entry, &provider, runner(), scratch(), 1).unwrap();
    analyze(&mut doc, &provider, runner(), scratch(), 1).unwrap();
    doc
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn graph_is_acyclic_and_monotone(s in spec()) {
        let doc = build(&generate(&s));
        let g = &doc.graph;
        prop_assert!(g.topological_order().is_ok());
        for (from, to) in &g.edges {
            let (a, b) = (&g.nodes[from], &g.nodes[to]);
            prop_assert!(a.order < b.order, "{from} -> {to}");
            if let (Some(sa), Some(sb)) = (a.step, b.step) {
                prop_assert!(sa <= sb, "{from}@{sa} -> {to}@{sb}");
            }
        }
        for (n, node) in &g.nodes {
            if let Some(i) = n.strip_prefix('v').and_then(|i| i.parse::<usize>().ok()) {
                let step = s.steps.iter().scan(0, |c, st| { *c += st.len(); Some(*c) })
                    .position(|end| i < end).unwrap() + 2;
                prop_assert_eq!(node.step, Some(step), "{}", n);
            }
        }
    }

    #[test]
    fn four_maps_are_transposes(s in spec()) {
        let m = build(&generate(&s)).graph.step_maps;
        let mut from_relies: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
        for (k, deps) in &m.relies_on {
            for (j, facts) in deps {
                prop_assert!(j < k);
                from_relies.entry(*j).or_default().insert(*k);
                let introduced = m.introduces.get(j).cloned().unwrap_or_default();
                let consumed = m.consumes.get(k).cloned().unwrap_or_default();
                prop_assert!(facts.is_subset(&introduced), "{k} <- {j}: {facts:?}");
                prop_assert!(facts.is_subset(&consumed), "{k} <- {j}: {facts:?}");
            }
        }
        let used_by: BTreeMap<usize, BTreeSet<usize>> =
            m.used_by.iter().filter(|(_, v)| !v.is_empty()).map(|(k, v)| (*k, v.clone())).collect();
        prop_assert_eq!(from_relies, used_by);
    }

    #[test]
    fn probe_values_are_consistent(s in spec(), x in -10i64..=10) {
        let g = generate(&s);
        let doc = build(&g);
        let e = evaluate_at(&doc, &Binding::new([("x", x)]), runner(), &ProbeContext::new(scratch())).unwrap();
        prop_assert_eq!(e.break_step, None);
        let expected = (g.eval)(x);
        for p in &e.per_step {
            prop_assert!(p.closed);
            prop_assert!(value_consistency(&doc.lean, p).is_empty());
            for (k, v) in &p.values {
                if let (Some(want), ReducedValue::Int(got)) = (expected.get(k), v) {
                    prop_assert_eq!(want, got, "{} at x = {}", k, x);
                }
            }
        }
        let last = e.per_step.last().unwrap();
        for (k, want) in &expected {
            prop_assert_eq!(last.values.get(k), Some(&ReducedValue::Int(*want)), "{}", k);
        }
    }

    #[test]
    fn bundle_round_trips(s in spec(), lo in -3i64..=0, len in 0i64..3) {
        let mut doc = build(&generate(&s));
        let ranges = BTreeMap::from([("x".to_string(), IntRange::new(lo, lo + len))]);
        precompute(&mut doc, &ranges, 16, runner(), &ProbeContext::new(scratch())).unwrap();
        let text = to_bundle_string(&doc);
        let loaded = from_bundle_str(&text).unwrap();
        prop_assert!(loaded.warnings.is_empty());
        prop_assert_eq!(&loaded.document, &doc);
        prop_assert_eq!(to_bundle_string(&loaded.document), text);
    }
}
