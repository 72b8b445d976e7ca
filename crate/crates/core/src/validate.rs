//! Whole-document structural validation with field paths.

use std::collections::BTreeSet;

use crate::linker::validate_links;
use crate::model::{is_lean_ident, ProofDocument, ProofState, ValidationReport};
use crate::oracle::Predicate;
use crate::templater::{available_keys, validate_template};

pub fn validate_document(doc: &ProofDocument) -> ValidationReport {
    let mut r = ValidationReport::default();
    if doc.id.is_empty() || doc.id.contains(['/', '\\']) {
        r.violation("id", "id must be a non-empty file-name-safe string");
    }
    validate_written(doc, &mut r);
    r.merge(validate_links(&doc.written, &doc.lean, &doc.links));
    validate_graph(doc, &mut r);
    let keys = available_keys(doc);
    for (k, t) in &doc.templates {
        if t.prose_step != *k {
            r.violation(
                format!("templates[{k}].prose_step"),
                format!("expected {k}, found {}", t.prose_step),
            );
        }
        if doc.written.step(*k).is_none() {
            r.violation(format!("templates[{k}]"), format!("step {k} does not exist"));
        }
        r.merge(validate_template(t, &keys));
    }
    validate_sweeps(doc, &mut r);
    r
}

fn validate_written(doc: &ProofDocument, r: &mut ValidationReport) {
    let w = &doc.written;
    if w.steps.is_empty() {
        r.violation("written.steps", "proof has no steps");
    }
    for (i, s) in w.steps.iter().enumerate() {
        let path = format!("written.steps[{i}]");
        if s.index != i + 1 {
            r.violation(
                format!("{path}.index"),
                format!("expected {}, found {}", i + 1, s.index),
            );
        }
        let mut names = BTreeSet::new();
        for (j, p) in s.propositions.iter().enumerate() {
            let pp = format!("{path}.propositions[{j}]");
            if p.range.start > p.range.end
                || p.range.end > s.text.len()
                || !s.text.is_char_boundary(p.range.start)
                || !s.text.is_char_boundary(p.range.end)
            {
                r.violation(format!("{pp}.range"), "range lies outside the step text");
            }
            if !names.insert(&p.name) {
                r.violation(
                    format!("{pp}.name"),
                    format!("duplicate proposition `{}`", p.name),
                );
            }
        }
    }
    let mut inputs = BTreeSet::new();
    for (i, v) in w.inputs.iter().enumerate() {
        let path = format!("written.inputs[{i}]");
        if !is_lean_ident(&v.name) {
            r.violation(
                format!("{path}.name"),
                format!("`{}` is not an identifier", v.name),
            );
        }
        if !inputs.insert(v.name.as_str()) {
            r.violation(format!("{path}.name"), format!("duplicate input `{}`", v.name));
        }
        if v.default_range.is_empty() {
            r.violation(format!("{path}.default_range"), "range is empty");
        }
        if v.default_range.values().any(|x| !v.number_domain.contains(x)) {
            r.violation(format!("{path}.default_range"), "range leaves the number domain");
        }
        if !v.number_domain.contains(v.default_value) {
            r.violation(
                format!("{path}.default_value"),
                "value lies outside the number domain",
            );
        }
    }
    if let Some(o) = &w.oracle {
        for (field, src) in [("hypothesis", &o.hypothesis), ("conclusion", &o.conclusion)] {
            let path = format!("written.oracle.{field}");
            match Predicate::parse(src) {
                Err(e) => r.violation(path, e.to_string()),
                Ok(p) => {
                    for v in p.free_vars() {
                        if !inputs.contains(v.as_str()) {
                            r.violation(&path, format!("`{v}` is not an input variable"));
                        }
                    }
                }
            }
        }
    }
}

fn validate_graph(doc: &ProofDocument, r: &mut ValidationReport) {
    let g = &doc.graph;
    for (from, to) in &g.edges {
        for end in [from, to] {
            if !g.nodes.contains_key(end) {
                r.violation(
                    "graph.edges",
                    format!("edge ({from}, {to}) names unknown fact `{end}`"),
                );
            }
        }
        if let (Some(a), Some(b)) = (g.nodes.get(from), g.nodes.get(to)) {
            if let (Some(sa), Some(sb)) = (a.step, b.step) {
                if sa > sb {
                    r.violation(
                        "graph.edges",
                        format!("edge ({from}, {to}) runs from step {sa} back to step {sb}"),
                    );
                }
            }
        }
    }
    if let Err(e) = g.topological_order() {
        r.violation("graph.edges", e.to_string());
    }
    for (name, n) in &g.nodes {
        if let Some(k) = n.step {
            if doc.written.step(k).is_none() {
                r.violation(
                    format!("graph.nodes[{name}].step"),
                    format!("step {k} does not exist"),
                );
            }
        }
    }
}

fn validate_sweeps(doc: &ProofDocument, r: &mut ValidationReport) {
    let Some(cache) = &doc.sweep_cache else { return };
    for (var, s) in cache {
        let path = format!("sweep_cache[{var}]");
        if s.variable != *var {
            r.violation(
                format!("{path}.variable"),
                format!("keyed as `{var}` but sweeps `{}`", s.variable),
            );
        }
        if doc.written.input(var).is_none() {
            r.violation(&path, format!("`{var}` is not an input variable"));
        }
        for (i, e) in s.entries.iter().enumerate() {
            if !s.range.contains(e.value) {
                r.violation(
                    format!("{path}.entries[{i}].value"),
                    "value lies outside the range",
                );
            }
        }
        if s.entries.windows(2).any(|w| w[0].value >= w[1].value) {
            r.violation(format!("{path}.entries"), "entries are not strictly increasing");
        }
    }
}

/// States must not bind the same name twice.
pub fn validate_states(states: &[ProofState]) -> ValidationReport {
    let mut r = ValidationReport::default();
    for (i, s) in states.iter().enumerate() {
        let mut seen = BTreeSet::new();
        for h in &s.hypotheses {
            if !seen.insert(h.name.as_str()) {
                r.violation(
                    format!("states[{i}].hypotheses"),
                    format!("duplicate hypothesis name `{}`", h.name),
                );
            }
        }
    }
    r
}
