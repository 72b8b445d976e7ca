use std::collections::BTreeMap;
use std::path::PathBuf;
use std::str::FromStr;

use clap::{Parser, Subcommand};
use explorable_core::provider::ProviderMode;
use explorable_core::{InputVar, IntRange};

#[derive(Debug, Parser)]
#[command(
    name = "explorable",
    version,
    about = "Build and serve explorable proof documents"
)]
pub struct Cli {
    /// Corpus directory (one sub-directory per document).
    #[arg(long, global = true, env = "EXPLORABLE_CORPUS", default_value = "corpus")]
    pub corpus: PathBuf,
    /// Directory holding `<id>.json` bundles.
    #[arg(long, global = true, env = "EXPLORABLE_BUNDLES", default_value = "bundles")]
    pub bundles: PathBuf,
    /// Fixture store for the fixture provider.
    #[arg(long, global = true, env = "EXPLORABLE_FIXTURES", default_value = "fixtures")]
    pub fixtures: PathBuf,
    /// Scratch directory for Lean files and probes.
    #[arg(long, global = true, env = "EXPLORABLE_WORKDIR")]
    pub workdir: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the aligned Lean proof and links, writing the bundle.
    Formalize {
        #[arg(long)]
        doc: String,
        #[arg(long, default_value = "fixture")]
        provider: ProviderMode,
    },
    /// Recover the fact graph and generate worked-example templates.
    Analyze {
        #[arg(long)]
        doc: String,
        #[arg(long, default_value = "fixture")]
        provider: ProviderMode,
    },
    /// Sweep every input and store the results in the bundle.
    Precompute {
        #[arg(long)]
        doc: String,
        /// `LO..HI` or `VAR=LO..HI`; repeatable.
        #[arg(long, allow_hyphen_values = true)]
        range: Vec<RangeSpec>,
    },
    /// Compare the oracle predicates with the probes over a range.
    OracleCheck {
        #[arg(long)]
        doc: String,
        /// `LO..HI`, `VAR=LO..HI` or `VAR=V1,V2,...`; repeatable.
        #[arg(long, allow_hyphen_values = true)]
        range: Vec<RangeSpec>,
    },
    /// Serve the bundles over HTTP.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        /// Deadline for uncached evaluations, in seconds.
        #[arg(long, default_value_t = 30)]
        deadline: u64,
        /// Maximum concurrent uncached evaluations.
        #[arg(long, default_value_t = 5)]
        max_uncached: usize,
    },
    /// Record fixtures for the corpus from its authored artifacts.
    SeedFixtures {
        /// Documents to seed; all when omitted.
        #[arg(long)]
        doc: Vec<String>,
        /// Remove existing fixtures first.
        #[arg(long)]
        clean: bool,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RangeValues {
    Interval(IntRange),
    List(Vec<i64>),
}

impl RangeValues {
    pub fn values(&self) -> Vec<i64> {
        match self {
            RangeValues::Interval(r) => r.values().collect(),
            RangeValues::List(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RangeSpec {
    /// Absent means the document's first input.
    pub var: Option<String>,
    pub values: RangeValues,
}

impl FromStr for RangeSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (var, rest) = match s.split_once('=') {
            Some((v, rest)) if !v.contains('.') => (Some(v.trim().to_string()), rest),
            _ => (None, s),
        };
        let values = if rest.contains("..") {
            RangeValues::Interval(rest.parse()?)
        } else {
            let list: Result<Vec<i64>, _> = rest.split(',').map(|v| v.trim().parse::<i64>()).collect();
            RangeValues::List(list.map_err(|e| format!("bad value list `{rest}`: {e}"))?)
        };
        Ok(RangeSpec { var, values })
    }
}

/// Resolves specs against the document inputs, keyed by variable.
pub fn resolve_ranges(
    specs: &[RangeSpec],
    inputs: &[InputVar],
) -> Result<BTreeMap<String, RangeValues>, String> {
    let mut out = BTreeMap::new();
    for spec in specs {
        let var = match &spec.var {
            Some(v) => v.clone(),
            None => inputs
                .first()
                .map(|i| i.name.clone())
                .ok_or("document has no inputs to range over")?,
        };
        if !inputs.iter().any(|i| i.name == var) {
            return Err(format!("`{var}` is not an input variable"));
        }
        if out.insert(var.clone(), spec.values.clone()).is_some() {
            return Err(format!("`{var}` given more than once"));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use explorable_core::NumberDomain;

    fn input(name: &str) -> InputVar {
        InputVar {
            name: name.into(),
            number_domain: NumberDomain::Integer,
            default_range: IntRange::new(0, 1),
            default_value: 0,
        }
    }

    #[test]
    fn parses_forms() {
        assert_eq!(
            "-10..10".parse::<RangeSpec>().unwrap(),
            RangeSpec {
                var: None,
                values: RangeValues::Interval(IntRange::new(-10, 10))
            }
        );
        assert_eq!(
            "x=2..6".parse::<RangeSpec>().unwrap(),
            RangeSpec {
                var: Some("x".into()),
                values: RangeValues::Interval(IntRange::new(2, 6))
            }
        );
        assert_eq!(
            "n=3,5,7".parse::<RangeSpec>().unwrap(),
            RangeSpec {
                var: Some("n".into()),
                values: RangeValues::List(vec![3, 5, 7])
            }
        );
        assert!("n=3,a".parse::<RangeSpec>().is_err());
    }

    #[test]
    fn resolves_against_inputs() {
        let inputs = [input("x"), input("n")];
        let specs = vec!["1..2".parse().unwrap(), "n=3".parse().unwrap()];
        let r = resolve_ranges(&specs, &inputs).unwrap();
        assert_eq!(r["x"].values(), vec![1, 2]);
        assert_eq!(r["n"].values(), vec![3]);
        assert!(resolve_ranges(&["y=1..2".parse().unwrap()], &inputs).is_err());
    }
}
