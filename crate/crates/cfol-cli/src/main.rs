//! `cfol`: batch front end for threshold presentations of continuous
//! metric structures. Exit codes: 0 = pass, 1 = check failure, 2 = input
//! error.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use cfol::corpus::{
    extract_order_chain, gen_dyadic_family, gen_probability_algebra, gen_random_structure,
    SigShape,
};
use cfol::densify::{
    check_completable, check_tau_substructure, decode, is_inessential_extension, roundtrip_check,
    validate_level_family,
};
use cfol::discretize::{
    build_signature_fragment, check_tdense, encode, generate_tdense, materialize,
    DiscreteSignatureFragment, DiscreteStructure,
};
use cfol::rational::{parse_unit_rat, Grid};
use cfol::semantics::{
    check_metric, check_uniform_continuity, ContinuousStructure,
};
use cfol::syntax::{
    fragment_close, parse_formula, standard_fragment, ContinuousSignature, Formula, Fragment,
};
use cfol::typespace::{build_sequence_type, limit_type, qf_type, same_type};
use cfol_cli::{
    dyadic_spec, from_discrete, from_level_family, from_sequence_type, from_structure,
    from_type, render_verdict, to_discrete, to_json_string, to_level_family, to_structure,
    to_type, DiscreteFile, InputError, LevelFamilyFile, StructureFile, TypeFile,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Human,
}

#[derive(Debug, Args)]
struct FragmentFlags {
    /// Threshold grid resolution L (grid points i/L).
    #[arg(long = "grid", default_value_t = 8)]
    grid: u32,
    /// Conjunction/disjunction truncation bound N.
    #[arg(long = "omega", default_value_t = 4)]
    omega: u32,
    /// Closure depth for the automatic fragment.
    #[arg(long = "depth", default_value_t = 2)]
    depth: usize,
    /// Seed formulas (repeatable); overrides the depth-based fragment.
    #[arg(long = "formula")]
    formulas: Vec<String>,
}

impl FragmentFlags {
    fn build(&self, sig: &ContinuousSignature) -> Result<Fragment, InputError> {
        if self.grid < 2 || self.omega < 2 {
            return Err(InputError("--grid and --omega must be at least 2".into()));
        }
        if self.formulas.is_empty() {
            return Ok(standard_fragment(sig, self.depth, self.grid, self.omega));
        }
        let seed = self
            .formulas
            .iter()
            .map(|s| {
                parse_formula(s, sig).map_err(|e| InputError(format!("formula {s:?}: {e}")))
            })
            .collect::<Result<Vec<Formula>, _>>()?;
        Ok(fragment_close(&seed, self.grid, self.omega))
    }
}

#[derive(Debug, Parser)]
#[command(name = "cfol", version, about = "threshold presentations of continuous metric structures")]
struct Cli {
    /// Report format.
    #[arg(long = "format", global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Output file (defaults to stdout).
    #[arg(long = "out", global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Validate a continuous structure file (metric + moduli).
    Validate { input: PathBuf },
    /// Encode a continuous structure as a materialized discrete structure.
    Encode {
        input: PathBuf,
        #[command(flatten)]
        fragment: FragmentFlags,
        /// Fail when any metric/relation value is off the threshold grid.
        #[arg(long = "strict-grid")]
        strict_grid: bool,
    },
    /// Decode a discrete structure back into a continuous structure.
    Decode { input: PathBuf },
    /// Check the generated T_dense instances against a discrete structure.
    Check { input: PathBuf },
    /// Verify both round-trip directions for a continuous structure.
    Roundtrip {
        input: PathBuf,
        #[command(flatten)]
        fragment: FragmentFlags,
    },
    /// Print deterministic per-scheme axiom instance counts for a fragment.
    Axioms {
        #[command(flatten)]
        fragment: FragmentFlags,
        /// Universe size to ground the schemes over.
        #[arg(long = "size", default_value_t = 2)]
        size: usize,
    },
    /// Compare quantifier-free threshold types of two tuples.
    Type {
        input: PathBuf,
        /// First tuple, comma-separated element names.
        #[arg(long = "tuple")]
        tuple: String,
        /// Second tuple; when present the verdict is same-type yes/no.
        #[arg(long = "tuple2")]
        tuple2: Option<String>,
        /// Parameter elements, comma-separated.
        #[arg(long = "params", default_value = "")]
        params: String,
    },
    /// Build the sequence type of a continuous type and resolve its limit.
    Seqtype {
        /// Continuous structure file.
        structure: PathBuf,
        /// Continuous type file.
        #[arg(long = "type")]
        type_file: PathBuf,
        /// Base subset B' (comma-separated element names; default all).
        #[arg(long = "base", default_value = "")]
        base: String,
        #[command(flatten)]
        fragment: FragmentFlags,
        /// Chain depth N.
        #[arg(long = "seq-depth", default_value_t = 4)]
        seq_depth: u32,
    },
    /// Generate a corpus artifact (structure or level family).
    Corpus {
        #[arg(long = "kind", value_enum)]
        kind: CorpusKind,
        #[arg(long = "seed", default_value_t = 0)]
        seed: u64,
        #[arg(long = "size", default_value_t = 4)]
        size: usize,
        #[arg(long = "grid", default_value_t = 8)]
        grid: u32,
        /// Probability-algebra atom weights, comma-separated rationals.
        #[arg(long = "weights", default_value = "1/2,1/2")]
        weights: String,
        /// Dyadic family level count K.
        #[arg(long = "levels", default_value_t = 3)]
        levels: u32,
        /// Dyadic family relation anchor.
        #[arg(long = "anchor", default_value = "0")]
        anchor: String,
        #[arg(long = "omega", default_value_t = 4)]
        omega: u32,
        /// Function arities of the random signature, comma-separated.
        #[arg(long = "fn-arities", default_value = "")]
        fn_arities: String,
        /// Relation arities of the random signature, comma-separated.
        #[arg(long = "rel-arities", default_value = "1")]
        rel_arities: String,
    },
    /// Check fragment elementarity of a substructure inclusion against
    /// the discrete substructure relation of the encodings.
    Elem {
        sub: PathBuf,
        sup: PathBuf,
        #[command(flatten)]
        fragment: FragmentFlags,
    },
    /// Check that one discrete structure is an inessential extension of
    /// another.
    Inessential {
        sub: PathBuf,
        sup: PathBuf,
        /// Closeness depth: every element needs a base element within 1/n
        /// for all n up to this bound.
        #[arg(long = "ext-depth", default_value_t = 4)]
        ext_depth: u32,
    },
    /// Validate a level family and check completability at a depth.
    Completable {
        input: PathBuf,
        /// Chain depth for the stabilization check.
        #[arg(long = "chain-depth", default_value_t = 2)]
        chain_depth: u32,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum CorpusKind {
    Random,
    Pra,
    Dyadic,
}

/// Check failure: exit code 1 with a message.
struct CheckFailure(String);

enum CmdError {
    Input(String),
    Check(String),
}

impl From<InputError> for CmdError {
    fn from(e: InputError) -> CmdError {
        CmdError::Input(e.to_string())
    }
}

impl From<CheckFailure> for CmdError {
    fn from(e: CheckFailure) -> CmdError {
        CmdError::Check(e.0)
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CmdError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CmdError::Input(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CmdError::Input(format!("{}: {e}", path.display())))
}

fn emit(out: &Option<PathBuf>, text: &str) -> Result<(), CmdError> {
    match out {
        Some(path) => std::fs::write(path, text)
            .map_err(|e| CmdError::Input(format!("{}: {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn load_structure(path: &Path) -> Result<ContinuousStructure, CmdError> {
    let file: StructureFile = read_json(path)?;
    Ok(to_structure(&file)?)
}

fn load_discrete(path: &Path) -> Result<DiscreteStructure, CmdError> {
    let file: DiscreteFile = read_json(path)?;
    Ok(to_discrete(&file)?)
}

fn encode_all(
    m: &ContinuousStructure,
    dsig: &DiscreteSignatureFragment,
) -> Result<DiscreteStructure, CmdError> {
    let all: Vec<usize> = (0..m.size()).collect();
    let enc = encode(m, &all, dsig).map_err(|e| CmdError::Input(e.to_string()))?;
    Ok(materialize(&enc))
}

fn parse_tuple(m_universe: &[String], text: &str) -> Result<Vec<usize>, CmdError> {
    if text.is_empty() {
        return Ok(Vec::new());
    }
    text.split(',')
        .map(|name| {
            m_universe
                .iter()
                .position(|e| e == name.trim())
                .ok_or_else(|| CmdError::Input(format!("unknown element {name:?}")))
        })
        .collect()
}

fn parse_arities(text: &str) -> Result<Vec<usize>, CmdError> {
    if text.is_empty() {
        return Ok(Vec::new());
    }
    text.split(',')
        .map(|a| {
            a.trim()
                .parse::<usize>()
                .map_err(|e| CmdError::Input(format!("bad arity {a:?}: {e}")))
        })
        .collect()
}

fn run(cli: Cli) -> Result<(), CmdError> {
    let json = cli.format == Format::Json;
    match cli.command {
        Command::Validate { input } => {
            let m = load_structure(&input)?;
            check_metric(m.size(), &m.metric).map_err(|v| CheckFailure(v.to_string()))?;
            check_uniform_continuity(&m).map_err(|v| CheckFailure(v.to_string()))?;
            emit(&cli.out, &report_line(json, "validate", true, None))?;
            Ok(())
        }
        Command::Encode {
            input,
            fragment,
            strict_grid,
        } => {
            let m = load_structure(&input)?;
            let frag = fragment.build(&m.signature)?;
            if strict_grid {
                if let Some(off) = off_grid_value(&m, frag.grid) {
                    return Err(CheckFailure(format!("off-grid value: {off}")).into());
                }
            }
            let dsig = build_signature_fragment(&m.signature, &frag)
                .map_err(|e| CmdError::Input(e.to_string()))?;
            let ext = encode_all(&m, &dsig)?;
            emit(&cli.out, &to_json_string(&from_discrete(&ext)?))
        }
        Command::Decode { input } => {
            let d = load_discrete(&input)?;
            let m = decode(&d).map_err(|e| CheckFailure(e.to_string()))?;
            emit(&cli.out, &to_json_string(&from_structure(&m)))
        }
        Command::Check { input } => {
            let d = load_discrete(&input)?;
            let theory = cfol::discretize::generate_for(&d);
            let report = check_tdense(&d, &theory);
            emit(&cli.out, &render_verdict(&report, json))?;
            if report.passed() {
                Ok(())
            } else {
                Err(CheckFailure("T_dense instance failures".into()).into())
            }
        }
        Command::Roundtrip { input, fragment } => {
            let m = load_structure(&input)?;
            let frag = fragment.build(&m.signature)?;
            let dsig = build_signature_fragment(&m.signature, &frag)
                .map_err(|e| CmdError::Input(e.to_string()))?;
            let report = roundtrip_check(&m, &dsig);
            emit(
                &cli.out,
                &report_line(json, "roundtrip", report.pass, report.detail.as_deref()),
            )?;
            if report.pass {
                Ok(())
            } else {
                Err(CheckFailure("round-trip mismatch".into()).into())
            }
        }
        Command::Axioms { fragment, size } => {
            let sig = ContinuousSignature::default();
            if fragment.formulas.is_empty() {
                return Err(CmdError::Input(
                    "axioms requires at least one --formula".into(),
                ));
            }
            let frag = fragment.build(&sig)?;
            let dsig = build_signature_fragment(&sig, &frag)
                .map_err(|e| CmdError::Input(e.to_string()))?;
            let theory = generate_tdense(&dsig, size, &BTreeMap::new());
            let mut counts: BTreeMap<&'static str, u64> = BTreeMap::new();
            for inst in &theory.instances {
                *counts.entry(inst.scheme().as_str()).or_default() += 1;
            }
            let mut out = String::new();
            for (scheme, count) in &counts {
                if json {
                    out.push_str(&format!(
                        "{{\"scheme\":\"{scheme}\",\"instances\":{count}}}\n"
                    ));
                } else {
                    out.push_str(&format!("{scheme:<5} {count}\n"));
                }
            }
            out.push_str(&if json {
                format!("{{\"total\":{}}}\n", theory.instances.len())
            } else {
                format!("total {}\n", theory.instances.len())
            });
            emit(&cli.out, &out)
        }
        Command::Type {
            input,
            tuple,
            tuple2,
            params,
        } => {
            let d = load_discrete(&input)?;
            let a = parse_tuple(&d.universe, &tuple)?;
            let c = parse_tuple(&d.universe, &params)?;
            match tuple2 {
                Some(second) => {
                    let b = parse_tuple(&d.universe, &second)?;
                    if a.len() != b.len() {
                        return Err(CmdError::Input("tuple arities differ".into()));
                    }
                    let same = same_type(&d, &a, &b, &c);
                    emit(
                        &cli.out,
                        &report_line(json, "same-type", same, None),
                    )?;
                    if same {
                        Ok(())
                    } else {
                        Err(CheckFailure("types differ".into()).into())
                    }
                }
                None => {
                    let ty = qf_type(&d, &a, &c);
                    let set = ty.facts.iter().filter(|&&b| b).count();
                    let line = if json {
                        format!(
                            "{{\"command\":\"type\",\"facts\":{},\"true_facts\":{set}}}\n",
                            ty.facts.len()
                        )
                    } else {
                        format!("type facts: {} ({set} true)\n", ty.facts.len())
                    };
                    emit(&cli.out, &line)
                }
            }
        }
        Command::Seqtype {
            structure,
            type_file,
            base,
            fragment,
            seq_depth,
        } => {
            let m = load_structure(&structure)?;
            let tf: TypeFile = read_json(&type_file)?;
            let r = to_type(&tf, &m.signature, &m.universe)?;
            let base_elems = if base.is_empty() {
                (0..m.size()).collect()
            } else {
                parse_tuple(&m.universe, &base)?
            };
            let frag = fragment.build(&m.signature)?;
            let dsig = build_signature_fragment(&m.signature, &frag)
                .map_err(|e| CmdError::Input(e.to_string()))?;
            let ext = encode_all(&m, &dsig)?;
            let st = build_sequence_type(&r, &m, &base_elems, seq_depth)
                .map_err(|e| CheckFailure(e.to_string()))?;
            // Consistency: the resolved limit must reproduce a type whose
            // realization set matches on the finite universe.
            let back = limit_type(&st, &ext).map_err(|e| CheckFailure(e.to_string()))?;
            let _ = from_type(&back, &m.universe);
            emit(&cli.out, &to_json_string(&from_sequence_type(&st, &m.universe)))
        }
        Command::Corpus {
            kind,
            seed,
            size,
            grid,
            weights,
            levels,
            anchor,
            omega,
            fn_arities,
            rel_arities,
        } => match kind {
            CorpusKind::Random => {
                let shape = SigShape {
                    function_arities: parse_arities(&fn_arities)?,
                    relation_arities: parse_arities(&rel_arities)?,
                };
                let m = gen_random_structure(seed, size, grid, &shape);
                emit(&cli.out, &to_json_string(&from_structure(&m)))
            }
            CorpusKind::Pra => {
                let weights = weights
                    .split(',')
                    .map(|w| {
                        parse_unit_rat(w.trim())
                            .map_err(|e| CmdError::Input(format!("bad weight {w:?}: {e}")))
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                let p = gen_probability_algebra(&weights, grid);
                let chain = extract_order_chain(&p);
                let names: Vec<&str> = chain
                    .iter()
                    .map(|&e| p.structure.universe[e].as_str())
                    .collect();
                // The chain goes to stderr so the file stays a single
                // machine-readable JSON document.
                eprintln!("order chain: {}", names.join(" < "));
                emit(&cli.out, &to_json_string(&from_structure(&p.structure)))
            }
            CorpusKind::Dyadic => {
                let spec = dyadic_spec(&anchor)?;
                let fam = gen_dyadic_family(levels, &spec, omega);
                emit(&cli.out, &to_json_string(&from_level_family(&fam)?))
            }
        },
        Command::Elem { sub, sup, fragment } => {
            let m_sub = load_structure(&sub)?;
            let m_sup = load_structure(&sup)?;
            let embed: Vec<usize> = m_sub
                .universe
                .iter()
                .map(|e| {
                    m_sup
                        .universe
                        .iter()
                        .position(|f| f == e)
                        .ok_or_else(|| CmdError::Input(format!("element {e:?} missing in sup")))
                })
                .collect::<Result<_, _>>()?;
            if m_sub.signature != m_sup.signature {
                return Err(CmdError::Input("signatures differ".into()));
            }
            let frag = fragment.build(&m_sub.signature)?;
            let dsig = build_signature_fragment(&m_sub.signature, &frag)
                .map_err(|e| CmdError::Input(e.to_string()))?;
            let elementary =
                cfol::semantics::check_phi_elementary(&m_sub, &m_sup, &embed, &frag).is_ok();
            let ext_sub = encode_all(&m_sub, &dsig)?;
            let ext_sup = encode_all(&m_sup, &dsig)?;
            let discrete_sub = check_tau_substructure(&ext_sub, &ext_sup).is_ok();
            let agree = elementary == discrete_sub;
            let line = if json {
                format!(
                    "{{\"command\":\"elem\",\"elementary\":{elementary},\"tau_substructure\":{discrete_sub},\"agree\":{agree}}}\n"
                )
            } else {
                format!(
                    "elementary: {elementary}; tau-substructure: {discrete_sub}; agree: {agree}\n"
                )
            };
            emit(&cli.out, &line)?;
            if elementary {
                Ok(())
            } else {
                Err(CheckFailure("inclusion is not fragment-elementary".into()).into())
            }
        }
        Command::Inessential {
            sub,
            sup,
            ext_depth,
        } => {
            let a = load_discrete(&sub)?;
            let b = load_discrete(&sup)?;
            let report = is_inessential_extension(&a, &b, ext_depth)
                .map_err(|e| CmdError::Input(e.to_string()))?;
            let detail = report
                .failing
                .as_ref()
                .map(|(e, n)| format!("no base element within 1/{n} of {e}"));
            emit(
                &cli.out,
                &report_line(json, "inessential", report.ok, detail.as_deref()),
            )?;
            if report.ok {
                Ok(())
            } else {
                Err(CheckFailure("extension is essential".into()).into())
            }
        }
        Command::Completable { input, chain_depth } => {
            let file: LevelFamilyFile = read_json(&input)?;
            let fam = to_level_family(&file)?;
            validate_level_family(&fam).map_err(|e| CheckFailure(e.to_string()))?;
            let report =
                check_completable(&fam, chain_depth).map_err(|e| CheckFailure(e.to_string()))?;
            emit(
                &cli.out,
                &report_line(json, "completable", report.pass, report.witness.as_deref()),
            )?;
            if report.pass {
                Ok(())
            } else {
                Err(CheckFailure("family is not completable at depth".into()).into())
            }
        }
    }
}

fn report_line(json: bool, command: &str, pass: bool, detail: Option<&str>) -> String {
    if json {
        let detail_json = match detail {
            Some(d) => serde_json::to_string(d).expect("string serializes"),
            None => "null".to_string(),
        };
        format!("{{\"command\":\"{command}\",\"pass\":{pass},\"detail\":{detail_json}}}\n")
    } else {
        match detail {
            Some(d) => format!("{command}: {} ({d})\n", if pass { "pass" } else { "FAIL" }),
            None => format!("{command}: {}\n", if pass { "pass" } else { "FAIL" }),
        }
    }
}

fn off_grid_value(m: &ContinuousStructure, grid: Grid) -> Option<String> {
    for (i, v) in m.metric.iter().enumerate() {
        if !grid.contains(v) {
            let n = m.size();
            return Some(format!(
                "d({}, {}) = {}",
                m.universe[i / n],
                m.universe[i % n],
                cfol::rational::format_rat(v)
            ));
        }
    }
    for (r, table) in &m.relations {
        for v in table {
            if !grid.contains(v) {
                return Some(format!("{r} value {}", cfol::rational::format_rat(v)));
            }
        }
    }
    None
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::from(0),
        Err(CmdError::Check(msg)) => {
            eprintln!("check failed: {msg}");
            ExitCode::from(1)
        }
        Err(CmdError::Input(msg)) => {
            eprintln!("input error: {msg}");
            ExitCode::from(2)
        }
    }
}
