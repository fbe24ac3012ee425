//! File formats and report serialization for the `cfol` command-line
//! tool: JSON schemas for continuous structures, materialized discrete
//! structures, level families, continuous types, and sequence types, plus
//! the JSON-lines verdict reports.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use cfol::corpus::DyadicRelSpec;
use cfol::densify::LevelFamily;
use cfol::discretize::{
    build_signature_fragment, decode_tuple, Dir, DiscreteStructure, Mode, Payload, SchemeReport,
    VerdictReport,
};
use cfol::rational::{format_rat, in_unit_interval, parse_rat, rat_zero, Rat};
use cfol::semantics::{tuple_index, ContinuousStructure};
use cfol::syntax::{
    fragment_close, parse_formula, print_formula, ContinuousSignature, Formula, Fragment,
    FunctionDecl, ModulusTable, RelationDecl,
};
use cfol::typespace::{ContinuousTypeFragment, SeqEntry, SequenceType, TypeCondition};

/// Errors mapped to exit code 2: the input could not be understood.
#[derive(Debug)]
pub struct InputError(pub String);

impl fmt::Display for InputError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl std::error::Error for InputError {}

fn err<T>(msg: impl Into<String>) -> Result<T, InputError> {
    Err(InputError(msg.into()))
}

fn rational(s: &str) -> Result<Rat, InputError> {
    parse_rat(s).map_err(|e| InputError(format!("bad rational {s:?}: {e}")))
}

fn unit_rational(s: &str) -> Result<Rat, InputError> {
    let r = rational(s)?;
    if !in_unit_interval(&r) {
        return err(format!("rational {s} is outside [0, 1]"));
    }
    Ok(r)
}

// ---------------------------------------------------------------------------
// Continuous structure files
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SymbolDto {
    pub name: String,
    pub arity: usize,
    /// Modulus entries `[r, delta]` as "p/q" strings.
    pub modulus: Vec<(String, String)>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SignatureDto {
    pub functions: Vec<SymbolDto>,
    pub relations: Vec<SymbolDto>,
}

/// JSON schema for a continuous structure: metric as upper-triangle
/// entries (diagonal implied 0), function and relation tables as rows of
/// `[[arg names...], output]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StructureFile {
    pub signature: SignatureDto,
    pub universe: Vec<String>,
    pub metric: Vec<(String, String, String)>,
    pub functions: BTreeMap<String, Vec<(Vec<String>, String)>>,
    pub relations: BTreeMap<String, Vec<(Vec<String>, String)>>,
}

fn symbol_modulus(dto: &SymbolDto) -> Result<ModulusTable, InputError> {
    let mut entries = BTreeMap::new();
    for (r, delta) in &dto.modulus {
        entries.insert(unit_rational(r)?, unit_rational(delta)?);
    }
    ModulusTable::new(entries).map_err(|e| InputError(format!("modulus of {}: {e}", dto.name)))
}

pub fn signature_from_dto(dto: &SignatureDto) -> Result<ContinuousSignature, InputError> {
    let functions = dto
        .functions
        .iter()
        .map(|s| {
            Ok(FunctionDecl {
                name: s.name.clone(),
                arity: s.arity,
                modulus: symbol_modulus(s)?,
            })
        })
        .collect::<Result<Vec<_>, InputError>>()?;
    let relations = dto
        .relations
        .iter()
        .map(|s| {
            Ok(RelationDecl {
                name: s.name.clone(),
                arity: s.arity,
                modulus: symbol_modulus(s)?,
            })
        })
        .collect::<Result<Vec<_>, InputError>>()?;
    ContinuousSignature::new(functions, relations).map_err(|e| InputError(e.to_string()))
}

pub fn signature_to_dto(sig: &ContinuousSignature) -> SignatureDto {
    let sym = |name: &str, arity: usize, modulus: &ModulusTable| SymbolDto {
        name: name.to_string(),
        arity,
        modulus: modulus
            .entries
            .iter()
            .map(|(r, d)| (format_rat(r), format_rat(d)))
            .collect(),
    };
    SignatureDto {
        functions: sig
            .functions
            .iter()
            .map(|f| sym(&f.name, f.arity, &f.modulus))
            .collect(),
        relations: sig
            .relations
            .iter()
            .map(|r| sym(&r.name, r.arity, &r.modulus))
            .collect(),
    }
}

pub fn to_structure(file: &StructureFile) -> Result<ContinuousStructure, InputError> {
    let sig = signature_from_dto(&file.signature)?;
    let n = file.universe.len();
    let index: BTreeMap<&str, usize> = file
        .universe
        .iter()
        .enumerate()
        .map(|(i, e)| (e.as_str(), i))
        .collect();
    if index.len() != n {
        return err("duplicate universe element names");
    }
    let lookup = |name: &str| -> Result<usize, InputError> {
        index
            .get(name)
            .copied()
            .ok_or_else(|| InputError(format!("unknown element {name:?}")))
    };
    let mut metric = vec![None; n * n];
    for i in 0..n {
        metric[i * n + i] = Some(rat_zero());
    }
    for (a, b, v) in &file.metric {
        let (i, j) = (lookup(a)?, lookup(b)?);
        let v = unit_rational(v)?;
        metric[i * n + j] = Some(v.clone());
        metric[j * n + i] = Some(v);
    }
    let metric: Vec<Rat> = metric
        .into_iter()
        .enumerate()
        .map(|(t, v)| v.ok_or_else(|| InputError(format!(
            "metric pair ({}, {}) unlisted",
            file.universe[t / n], file.universe[t % n]
        ))))
        .collect::<Result<_, _>>()?;
    let mut functions = BTreeMap::new();
    for decl in &sig.functions {
        let rows = file
            .functions
            .get(&decl.name)
            .ok_or_else(|| InputError(format!("missing function table {:?}", decl.name)))?;
        let mut table = vec![None; n.pow(decl.arity as u32)];
        for (args, out) in rows {
            if args.len() != decl.arity {
                return err(format!("function {} row has wrong arity", decl.name));
            }
            let coords = args.iter().map(|a| lookup(a)).collect::<Result<Vec<_>, _>>()?;
            table[tuple_index(n, &coords)] = Some(lookup(out)?);
        }
        let table = table
            .into_iter()
            .collect::<Option<Vec<usize>>>()
            .ok_or_else(|| InputError(format!("function table {} is not total", decl.name)))?;
        functions.insert(decl.name.clone(), table);
    }
    let mut relations = BTreeMap::new();
    for decl in &sig.relations {
        let rows = file
            .relations
            .get(&decl.name)
            .ok_or_else(|| InputError(format!("missing relation table {:?}", decl.name)))?;
        let mut table = vec![None; n.pow(decl.arity as u32)];
        for (args, v) in rows {
            if args.len() != decl.arity {
                return err(format!("relation {} row has wrong arity", decl.name));
            }
            let coords = args.iter().map(|a| lookup(a)).collect::<Result<Vec<_>, _>>()?;
            table[tuple_index(n, &coords)] = Some(unit_rational(v)?);
        }
        let table = table
            .into_iter()
            .collect::<Option<Vec<Rat>>>()
            .ok_or_else(|| InputError(format!("relation table {} is not total", decl.name)))?;
        relations.insert(decl.name.clone(), table);
    }
    ContinuousStructure::new(sig, file.universe.clone(), metric, functions, relations)
        .map_err(|e| InputError(e.to_string()))
}

pub fn from_structure(m: &ContinuousStructure) -> StructureFile {
    let n = m.size();
    let name = |i: usize| m.universe[i].clone();
    let mut metric = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            metric.push((name(i), name(j), format_rat(&m.metric[i * n + j])));
        }
    }
    let functions = m
        .functions
        .iter()
        .map(|(f, table)| {
            let arity = m.signature.function(f).expect("declared").arity;
            let rows = table
                .iter()
                .enumerate()
                .map(|(t, &out)| {
                    let args = decode_tuple(n, arity, t).into_iter().map(name).collect();
                    (args, name(out))
                })
                .collect();
            (f.clone(), rows)
        })
        .collect();
    let relations = m
        .relations
        .iter()
        .map(|(r, table)| {
            let arity = m.signature.relation(r).expect("declared").arity;
            let rows = table
                .iter()
                .enumerate()
                .map(|(t, v)| {
                    let args = decode_tuple(n, arity, t).into_iter().map(name).collect();
                    (args, format_rat(v))
                })
                .collect();
            (r.clone(), rows)
        })
        .collect();
    StructureFile {
        signature: signature_to_dto(&m.signature),
        universe: m.universe.clone(),
        metric,
        functions,
        relations,
    }
}

// ---------------------------------------------------------------------------
// Discrete structure files
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FragmentDto {
    pub formulas: Vec<String>,
    #[serde(rename = "grid_L")]
    pub grid_l: u32,
    #[serde(rename = "omega_N")]
    pub omega_n: u32,
}

/// JSON schema for a materialized discrete structure. Carries the
/// continuous signature so that decoding and axiom generation know the
/// declared arities and moduli.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiscreteFile {
    pub signature: SignatureDto,
    pub fragment: FragmentDto,
    pub universe: Vec<String>,
    pub functions: BTreeMap<String, Vec<(Vec<String>, String)>>,
    /// Rows `[formula, threshold, "GEQ"|"LEQ", [tuple...], truth]`.
    pub truth: Vec<(String, String, String, Vec<String>, bool)>,
}

pub fn fragment_from_dto(
    dto: &FragmentDto,
    sig: &ContinuousSignature,
) -> Result<Fragment, InputError> {
    let seed = dto
        .formulas
        .iter()
        .map(|s| parse_formula(s, sig).map_err(|e| InputError(format!("formula {s:?}: {e}"))))
        .collect::<Result<Vec<Formula>, _>>()?;
    if dto.grid_l < 2 || dto.omega_n < 2 {
        return err("grid_L and omega_N must be at least 2");
    }
    let frag = fragment_close(&seed, dto.grid_l, dto.omega_n);
    if frag.formulas().len() != dto.formulas.len() {
        return err("fragment formula list is not closed under subformulas");
    }
    Ok(frag)
}

pub fn to_discrete(file: &DiscreteFile) -> Result<DiscreteStructure, InputError> {
    let sig = signature_from_dto(&file.signature)?;
    let frag = fragment_from_dto(&file.fragment, &sig)?;
    let dsig = build_signature_fragment(&sig, &frag).map_err(|e| InputError(e.to_string()))?;
    let n = file.universe.len();
    let index: BTreeMap<&str, usize> = file
        .universe
        .iter()
        .enumerate()
        .map(|(i, e)| (e.as_str(), i))
        .collect();
    if index.len() != n {
        return err("duplicate universe element names");
    }
    let lookup = |name: &str| -> Result<usize, InputError> {
        index
            .get(name)
            .copied()
            .ok_or_else(|| InputError(format!("unknown element {name:?}")))
    };
    let mut func_tables = BTreeMap::new();
    for decl in &sig.functions {
        let rows = file
            .functions
            .get(&decl.name)
            .ok_or_else(|| InputError(format!("missing function table {:?}", decl.name)))?;
        let mut table = vec![None; n.pow(decl.arity as u32)];
        for (args, out) in rows {
            let coords = args.iter().map(|a| lookup(a)).collect::<Result<Vec<_>, _>>()?;
            table[tuple_index(n, &coords)] = Some(lookup(out)?);
        }
        let table = table
            .into_iter()
            .collect::<Option<Vec<usize>>>()
            .ok_or_else(|| InputError(format!("function table {} is not total", decl.name)))?;
        func_tables.insert(decl.name.clone(), table);
    }
    let grid = frag.grid;
    let mut tables: Vec<Vec<Option<bool>>> = (0..dsig.formula_count())
        .map(|f| vec![None; (grid.l as usize + 1) * 2 * n.pow(dsig.arity(f) as u32)])
        .collect();
    for (fs, rs, ds, tuple, val) in &file.truth {
        let formula =
            parse_formula(fs, &sig).map_err(|e| InputError(format!("formula {fs:?}: {e}")))?;
        let f = frag
            .index_of(&formula)
            .ok_or_else(|| InputError(format!("truth row formula {fs:?} not in fragment")))?;
        let r = unit_rational(rs)?;
        if !grid.contains(&r) {
            return err(format!("threshold {rs} is off the grid"));
        }
        let gi = grid.floor_index(&r);
        let dir = match ds.as_str() {
            "GEQ" => Dir::Geq,
            "LEQ" => Dir::Leq,
            other => return err(format!("bad direction {other:?}")),
        };
        if tuple.len() != dsig.arity(f) {
            return err(format!("truth row tuple arity mismatch for {fs:?}"));
        }
        let coords = tuple.iter().map(|a| lookup(a)).collect::<Result<Vec<_>, _>>()?;
        let t = tuple_index(n, &coords);
        let tc = n.pow(dsig.arity(f) as u32);
        let slot = ((gi as usize * 2) + if dir == Dir::Geq { 0 } else { 1 }) * tc + t;
        tables[f][slot] = Some(*val);
    }
    let payload = tables
        .into_iter()
        .enumerate()
        .map(|(f, t)| {
            t.into_iter().collect::<Option<Vec<bool>>>().ok_or_else(|| {
                InputError(format!(
                    "truth table for {} is not total",
                    print_formula(dsig.formula(f))
                ))
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(DiscreteStructure {
        dsig,
        universe: file.universe.clone(),
        func_tables,
        payload: Payload::Extensional(payload),
    })
}

pub fn from_discrete(d: &DiscreteStructure) -> Result<DiscreteFile, InputError> {
    let Payload::Extensional(_) = &d.payload else {
        return err("only materialized (extensional) structures are written to files");
    };
    let n = d.size();
    let name = |i: usize| d.universe[i].clone();
    let grid = d.dsig.fragment.grid;
    let mut truth = Vec::new();
    for f in 0..d.dsig.formula_count() {
        let k = d.dsig.arity(f);
        let printed = print_formula(d.dsig.formula(f));
        for gi in grid.points() {
            for dir in [Dir::Geq, Dir::Leq] {
                for t in 0..n.pow(k as u32) {
                    truth.push((
                        printed.clone(),
                        format_rat(&grid.value(gi)),
                        dir.as_str().to_string(),
                        decode_tuple(n, k, t).into_iter().map(name).collect(),
                        d.truth(f, gi, dir, t),
                    ));
                }
            }
        }
    }
    let functions = d
        .func_tables
        .iter()
        .map(|(fname, table)| {
            let arity = d.dsig.signature.function(fname).expect("declared").arity;
            let rows = table
                .iter()
                .enumerate()
                .map(|(t, &out)| {
                    let args = decode_tuple(n, arity, t).into_iter().map(name).collect();
                    (args, name(out))
                })
                .collect();
            (fname.clone(), rows)
        })
        .collect();
    Ok(DiscreteFile {
        signature: signature_to_dto(&d.dsig.signature),
        fragment: FragmentDto {
            formulas: d
                .dsig
                .fragment
                .formulas()
                .iter()
                .map(print_formula)
                .collect(),
            grid_l: grid.l,
            omega_n: d.dsig.fragment.omega_n,
        },
        universe: d.universe.clone(),
        functions,
        truth,
    })
}

// ---------------------------------------------------------------------------
// Level families, types, sequence types
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LevelFamilyFile {
    pub levels: Vec<DiscreteFile>,
    pub rate: String,
}

pub fn to_level_family(file: &LevelFamilyFile) -> Result<LevelFamily, InputError> {
    Ok(LevelFamily {
        levels: file
            .levels
            .iter()
            .map(to_discrete)
            .collect::<Result<_, _>>()?,
        rate: unit_rational(&file.rate)?,
    })
}

pub fn from_level_family(fam: &LevelFamily) -> Result<LevelFamilyFile, InputError> {
    Ok(LevelFamilyFile {
        levels: fam
            .levels
            .iter()
            .map(from_discrete)
            .collect::<Result<_, _>>()?,
        rate: format_rat(&fam.rate),
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TypeConditionDto {
    pub formula: String,
    pub subject_vars: Vec<String>,
    /// Pairs `[variable, element name]`.
    pub params: Vec<(String, String)>,
}

/// A continuous type file: conditions `formula = 0` with element-name
/// parameters resolved against a designated structure.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TypeFile {
    pub arity: usize,
    pub conditions: Vec<TypeConditionDto>,
}

pub fn to_type(
    file: &TypeFile,
    sig: &ContinuousSignature,
    universe: &[String],
) -> Result<ContinuousTypeFragment, InputError> {
    let lookup = |name: &str| -> Result<usize, InputError> {
        universe
            .iter()
            .position(|e| e == name)
            .ok_or_else(|| InputError(format!("unknown element {name:?}")))
    };
    let conditions = file
        .conditions
        .iter()
        .map(|c| {
            Ok(TypeCondition {
                formula: parse_formula(&c.formula, sig)
                    .map_err(|e| InputError(format!("formula {:?}: {e}", c.formula)))?,
                subject_vars: c.subject_vars.clone(),
                params: c
                    .params
                    .iter()
                    .map(|(v, e)| Ok((v.clone(), lookup(e)?)))
                    .collect::<Result<_, InputError>>()?,
            })
        })
        .collect::<Result<Vec<_>, InputError>>()?;
    Ok(ContinuousTypeFragment {
        arity: file.arity,
        conditions,
    })
}

pub fn from_type(r: &ContinuousTypeFragment, universe: &[String]) -> TypeFile {
    TypeFile {
        arity: r.arity,
        conditions: r
            .conditions
            .iter()
            .map(|c| TypeConditionDto {
                formula: print_formula(&c.formula),
                subject_vars: c.subject_vars.clone(),
                params: c
                    .params
                    .iter()
                    .map(|(v, e)| (v.clone(), universe[*e].clone()))
                    .collect(),
            })
            .collect(),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeqEntryDto {
    pub formula: String,
    pub subject_vars: Vec<String>,
    pub param_vars: Vec<String>,
    pub chain: Vec<Vec<String>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SequenceTypeFile {
    pub arity: usize,
    pub index: Vec<SeqEntryDto>,
    pub depth: u32,
}

pub fn from_sequence_type(st: &SequenceType, universe: &[String]) -> SequenceTypeFile {
    SequenceTypeFile {
        arity: st.arity,
        index: st
            .entries
            .iter()
            .map(|e| SeqEntryDto {
                formula: print_formula(&e.formula),
                subject_vars: e.subject_vars.clone(),
                param_vars: e.param_vars.clone(),
                chain: e
                    .chain
                    .iter()
                    .map(|t| t.iter().map(|&i| universe[i].clone()).collect())
                    .collect(),
            })
            .collect(),
        depth: st.depth,
    }
}

pub fn to_sequence_type(
    file: &SequenceTypeFile,
    sig: &ContinuousSignature,
    universe: &[String],
) -> Result<SequenceType, InputError> {
    let lookup = |name: &str| -> Result<usize, InputError> {
        universe
            .iter()
            .position(|e| e == name)
            .ok_or_else(|| InputError(format!("unknown element {name:?}")))
    };
    let entries = file
        .index
        .iter()
        .map(|e| {
            Ok(SeqEntry {
                formula: parse_formula(&e.formula, sig)
                    .map_err(|err| InputError(format!("formula {:?}: {err}", e.formula)))?,
                subject_vars: e.subject_vars.clone(),
                param_vars: e.param_vars.clone(),
                chain: e
                    .chain
                    .iter()
                    .map(|t| t.iter().map(|n| lookup(n)).collect::<Result<_, _>>())
                    .collect::<Result<_, InputError>>()?,
            })
        })
        .collect::<Result<Vec<_>, InputError>>()?;
    Ok(SequenceType {
        arity: file.arity,
        depth: file.depth,
        entries,
    })
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SchemeLine {
    pub scheme: String,
    pub pass: u64,
    pub fail: u64,
    pub skip: u64,
    pub mode: String,
    pub witness: Option<String>,
}

pub fn mode_str(mode: Mode) -> &'static str {
    match mode {
        Mode::Exact => "exact",
        Mode::Truncated => "truncated",
        Mode::OracleExact => "oracle-exact",
    }
}

pub fn scheme_line(s: &SchemeReport) -> SchemeLine {
    SchemeLine {
        scheme: s.scheme.as_str().to_string(),
        pass: s.pass,
        fail: s.fail,
        skip: s.skip,
        mode: mode_str(s.mode).to_string(),
        witness: s.witness.clone(),
    }
}

/// Renders a verdict report: JSON-lines (one object per scheme) or an
/// aligned human table.
pub fn render_verdict(report: &VerdictReport, json: bool) -> String {
    let mut out = String::new();
    for s in &report.schemes {
        if json {
            out.push_str(
                &serde_json::to_string(&scheme_line(s)).expect("report serializes"),
            );
        } else {
            out.push_str(&format!(
                "{:<5} {:<12} pass={:<8} fail={:<8} skip={:<6}{}",
                s.scheme.as_str(),
                mode_str(s.mode),
                s.pass,
                s.fail,
                s.skip,
                s.witness
                    .as_deref()
                    .map(|w| format!(" witness: {w}"))
                    .unwrap_or_default(),
            ));
        }
        out.push('\n');
    }
    out
}

/// Serializes any report value as pretty JSON with a trailing newline,
/// keeping identical invocations byte-identical.
pub fn to_json_string<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("value serializes");
    s.push('\n');
    s
}

/// Builds the dyadic relation spec from an anchor string.
pub fn dyadic_spec(anchor: &str) -> Result<DyadicRelSpec, InputError> {
    Ok(DyadicRelSpec {
        anchor: unit_rational(anchor)?,
    })
}
