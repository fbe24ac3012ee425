//! Decoding discrete threshold models back into continuous structures:
//! derived metric and relation values (as rational cuts of the threshold
//! tables), derived moduli, the full decode, round-trip verification,
//! discrete substructures, inessential extensions, and level families.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use num_traits::Zero;

use crate::discretize::{
    check_tdense, encode, generate_for, materialize, uc_tuple, Dir, DiscreteSignatureFragment,
    DiscreteStructure,
};
use crate::rational::{format_rat, rat, Rat};
use crate::semantics::{
    check_uniform_continuity, tuple_index, tuples, ContinuousStructure, MetricViolation,
    StructureError,
};
use crate::syntax::{
    formula_modulus_at, print_formula, uc_monus_formula, Formula, ModulusTable, Term,
};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DensifyError {
    /// The <=-cut (or >=-cut) of a formula at a tuple is empty.
    EmptyCut { formula: String, tuple: String },
    /// inf-of-<=-set minus sup-of->=-set is outside [0, 1/L].
    InconsistentCut { formula: String, tuple: String, gap: Rat },
    /// decode demands gap 0; the input only satisfies gap <= 1/L.
    NonzeroGap { formula: String, tuple: String },
    /// The derived metric is not a metric.
    Metric(MetricViolation),
    /// The decoded structure fails validation.
    Structure(String),
    /// A relation atom (or its continuity comparison formula) is missing
    /// from the fragment.
    MissingAtom(String),
    NotSubstructure(String),
    BadFamily(String),
}

impl fmt::Display for DensifyError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DensifyError::EmptyCut { formula, tuple } => {
                write!(f, "empty threshold cut for {formula} at ({tuple})")
            }
            DensifyError::InconsistentCut { formula, tuple, gap } => write!(
                f,
                "inconsistent threshold cut for {formula} at ({tuple}): gap {}",
                format_rat(gap)
            ),
            DensifyError::NonzeroGap { formula, tuple } => {
                write!(f, "nonzero cut gap for {formula} at ({tuple}); decode requires exactness")
            }
            DensifyError::Metric(v) => write!(f, "derived metric invalid: {v}"),
            DensifyError::Structure(s) => write!(f, "decoded structure invalid: {s}"),
            DensifyError::MissingAtom(s) => write!(f, "fragment lacks required formula: {s}"),
            DensifyError::NotSubstructure(s) => write!(f, "not a discrete substructure: {s}"),
            DensifyError::BadFamily(s) => write!(f, "invalid level family: {s}"),
        }
    }
}

/// Canonical value and cut gap of one fragment formula at one tuple:
/// value = inf of the <=-true grid thresholds, gap = that inf minus the
/// sup of the >=-true thresholds. Models of the order schemes have
/// gap 0 or 1/L; anything else is inconsistent.
pub fn derived_value(
    d: &DiscreteStructure,
    f: usize,
    t: usize,
) -> Result<(Rat, Rat), DensifyError> {
    let grid = d.dsig.fragment.grid;
    let describe = || {
        (
            print_formula(d.dsig.formula(f)),
            format!("tuple #{t}"),
        )
    };
    let leq_inf = grid.points().find(|&gi| d.truth(f, gi, Dir::Leq, t));
    let geq_sup = grid
        .points()
        .filter(|&gi| d.truth(f, gi, Dir::Geq, t))
        .last();
    let (Some(leq_inf), Some(geq_sup)) = (leq_inf, geq_sup) else {
        let (formula, tuple) = describe();
        return Err(DensifyError::EmptyCut { formula, tuple });
    };
    let value = grid.value(leq_inf);
    let gap = grid.value(leq_inf) - grid.value(geq_sup);
    if gap < Rat::zero() || gap > rat(1, grid.l as i64) {
        let (formula, tuple) = describe();
        return Err(DensifyError::InconsistentCut { formula, tuple, gap });
    }
    Ok((value, gap))
}

/// The metric read off the distance atom's threshold tables.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DerivedMetric {
    /// Row-major `n*n` canonical values.
    pub table: Vec<Rat>,
    /// Per-pair cut gaps (same layout); 0 on oracle-exact inputs.
    pub gaps: Vec<Rat>,
}

impl DerivedMetric {
    pub fn max_gap(&self) -> Rat {
        self.gaps
            .iter()
            .cloned()
            .max()
            .unwrap_or_else(crate::rational::rat_zero)
    }
}

pub fn derived_metric(d: &DiscreteStructure) -> Result<DerivedMetric, DensifyError> {
    let n = d.size();
    let di = d.dsig.dist_idx;
    let mut table = Vec::with_capacity(n * n);
    let mut gaps = Vec::with_capacity(n * n);
    for t in 0..n * n {
        let (v, g) = derived_value(d, di, t)?;
        table.push(v);
        gaps.push(g);
    }
    Ok(DerivedMetric { table, gaps })
}

/// Position in the fragment of the atom `R(v0, .., vk)` (distinct
/// variables) for each relation of the signature.
fn relation_atoms(d: &DiscreteStructure) -> Result<Vec<(String, usize, usize)>, DensifyError> {
    let mut out = Vec::new();
    for decl in &d.dsig.signature.relations {
        let idx = d
            .dsig
            .fragment
            .formulas()
            .iter()
            .position(|f| match f {
                Formula::Rel(name, args) if *name == decl.name => {
                    let vars: Vec<&String> = args
                        .iter()
                        .filter_map(|a| match a {
                            Term::Var(v) => Some(v),
                            _ => None,
                        })
                        .collect();
                    vars.len() == args.len()
                        && (1..vars.len()).all(|i| !vars[..i].contains(&vars[i]))
                }
                _ => false,
            })
            .ok_or_else(|| DensifyError::MissingAtom(decl.name.clone()))?;
        out.push((decl.name.clone(), idx, decl.arity));
    }
    Ok(out)
}

/// Derived relation value tables, in argument-position order (the layout
/// of [`ContinuousStructure`] tables). The <=-cut and >=-cut are cross-
/// checked via the gap bound.
pub fn derived_relations(
    d: &DiscreteStructure,
) -> Result<BTreeMap<String, Vec<Rat>>, DensifyError> {
    let n = d.size();
    let mut out = BTreeMap::new();
    for (name, idx, arity) in relation_atoms(d)? {
        let formula = d.dsig.formula(idx);
        let Formula::Rel(_, args) = formula else { unreachable!() };
        let vars = d.dsig.vars(idx);
        // Position, in argument order, of each sorted variable.
        let arg_of_var: Vec<usize> = vars
            .iter()
            .map(|v| {
                args.iter()
                    .position(|a| matches!(a, Term::Var(w) if w == v))
                    .expect("distinct variable atom")
            })
            .collect();
        let mut table = Vec::with_capacity(n.pow(arity as u32));
        for arg_tuple in tuples(n, arity) {
            let coords: Vec<usize> = arg_of_var.iter().map(|&p| arg_tuple[p]).collect();
            let (v, _) = derived_value(d, idx, tuple_index(n, &coords))?;
            table.push(v);
        }
        out.insert(name, table);
    }
    Ok(out)
}

/// Derived (optimal-at-grid) moduli: for each grid `r`, `delta(r)` is the
/// largest grid `s` such that every ground continuity implication with
/// premise `d <= s` holds in the tables; the sets are downward closed, so
/// the scan from above is exact.
pub fn derived_moduli(
    d: &DiscreteStructure,
) -> Result<(BTreeMap<String, ModulusTable>, BTreeMap<String, ModulusTable>), DensifyError> {
    let grid = d.dsig.fragment.grid;
    let n = d.size();
    let di = d.dsig.dist_idx;
    let mut funcs = BTreeMap::new();
    for decl in &d.dsig.signature.functions {
        let table = &d.func_tables[&decl.name];
        let mut entries = BTreeMap::new();
        for r in grid.points() {
            let holds = |s: u32| {
                tuples(n, decl.arity).all(|ta| {
                    tuples(n, decl.arity).all(|tb| {
                        let premise = ta
                            .iter()
                            .zip(&tb)
                            .all(|(&x, &y)| d.truth(di, s, Dir::Leq, x * n + y));
                        let fa = table[tuple_index(n, &ta)];
                        let fb = table[tuple_index(n, &tb)];
                        !premise || d.truth(di, r, Dir::Leq, fa * n + fb)
                    })
                })
            };
            let best = (0..=grid.l).rev().find(|&s| holds(s)).unwrap_or(0);
            entries.insert(grid.value(r), grid.value(best));
        }
        funcs.insert(
            decl.name.clone(),
            ModulusTable::new(entries).map_err(|e| DensifyError::Structure(e.to_string()))?,
        );
    }
    let mut rels = BTreeMap::new();
    for decl in &d.dsig.signature.relations {
        let uc_formula = uc_monus_formula(decl);
        let uc = d
            .dsig
            .fragment
            .index_of(&uc_formula)
            .ok_or_else(|| DensifyError::MissingAtom(print_formula(&uc_formula)))?;
        let Formula::Monus(left, right) = &uc_formula else { unreachable!() };
        let (Formula::Rel(_, largs), Formula::Rel(_, rargs)) = (left.as_ref(), right.as_ref())
        else {
            unreachable!()
        };
        let uc_vars = d.dsig.vars(uc).to_vec();
        let mut entries = BTreeMap::new();
        for r in grid.points() {
            let holds = |s: u32| {
                tuples(n, decl.arity).all(|ta| {
                    tuples(n, decl.arity).all(|tb| {
                        let premise = ta
                            .iter()
                            .zip(&tb)
                            .all(|(&x, &y)| d.truth(di, s, Dir::Leq, x * n + y));
                        if !premise {
                            return true;
                        }
                        let t_ab = uc_tuple(n, &uc_vars, largs, rargs, &ta, &tb);
                        let t_ba = uc_tuple(n, &uc_vars, largs, rargs, &tb, &ta);
                        d.truth(uc, r, Dir::Leq, t_ab as usize)
                            && d.truth(uc, r, Dir::Leq, t_ba as usize)
                    })
                })
            };
            let best = (0..=grid.l).rev().find(|&s| holds(s)).unwrap_or(0);
            entries.insert(grid.value(r), grid.value(best));
        }
        rels.insert(
            decl.name.clone(),
            ModulusTable::new(entries).map_err(|e| DensifyError::Structure(e.to_string()))?,
        );
    }
    Ok((funcs, rels))
}

/// Rebuilds the continuous structure from the threshold tables: metric and
/// relation values from the cuts (gap 0 required), functions carried over,
/// moduli replaced by the derived ones. For a finite universe the
/// completion step is the identity.
pub fn decode(d: &DiscreteStructure) -> Result<ContinuousStructure, DensifyError> {
    let n = d.size();
    let metric = derived_metric(d)?;
    if let Some(pos) = metric.gaps.iter().position(|g| !g.is_zero()) {
        return Err(DensifyError::NonzeroGap {
            formula: print_formula(d.dsig.formula(d.dsig.dist_idx)),
            tuple: format!("({}, {})", d.universe[pos / n], d.universe[pos % n]),
        });
    }
    crate::semantics::check_metric(n, &metric.table).map_err(DensifyError::Metric)?;
    // Relation cuts must also be exact for decode.
    for (_, idx, _) in relation_atoms(d)? {
        for t in 0..d.tuple_count(idx) {
            let (_, gap) = derived_value(d, idx, t)?;
            if !gap.is_zero() {
                return Err(DensifyError::NonzeroGap {
                    formula: print_formula(d.dsig.formula(idx)),
                    tuple: format!("tuple #{t}"),
                });
            }
        }
    }
    let relations = derived_relations(d)?;
    let (func_moduli, rel_moduli) = derived_moduli(d)?;
    let mut signature = d.dsig.signature.clone();
    for decl in &mut signature.functions {
        decl.modulus = func_moduli[&decl.name].clone();
    }
    for decl in &mut signature.relations {
        decl.modulus = rel_moduli[&decl.name].clone();
    }
    let m = ContinuousStructure::new(
        signature,
        d.universe.clone(),
        metric.table,
        d.func_tables.clone(),
        relations,
    )
    .map_err(|e: StructureError| DensifyError::Structure(e.to_string()))?;
    check_uniform_continuity(&m).map_err(|v| DensifyError::Structure(v.to_string()))?;
    Ok(m)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoundtripReport {
    pub pass: bool,
    pub detail: Option<String>,
}

impl RoundtripReport {
    fn fail(detail: String) -> RoundtripReport {
        RoundtripReport {
            pass: false,
            detail: Some(detail),
        }
    }
}

/// Verifies both round-trip directions: (i) decode(materialize(encode(M)))
/// has M's exact universe/metric/function/relation tables; (ii) re-encoding
/// the decoded structure reproduces the materialized tables bit for bit.
pub fn roundtrip_check(
    m: &ContinuousStructure,
    dsig: &DiscreteSignatureFragment,
) -> RoundtripReport {
    let all: Vec<usize> = (0..m.size()).collect();
    let enc = match encode(m, &all, dsig) {
        Ok(e) => e,
        Err(e) => return RoundtripReport::fail(format!("encode failed: {e}")),
    };
    let ext = materialize(&enc);
    let back = match decode(&ext) {
        Ok(b) => b,
        Err(e) => return RoundtripReport::fail(format!("decode failed: {e}")),
    };
    if back.universe != m.universe {
        return RoundtripReport::fail("universe mismatch".to_string());
    }
    if back.metric != m.metric {
        return RoundtripReport::fail("metric table mismatch".to_string());
    }
    if back.functions != m.functions {
        return RoundtripReport::fail("function table mismatch".to_string());
    }
    if back.relations != m.relations {
        return RoundtripReport::fail("relation table mismatch".to_string());
    }
    let re_enc = match encode(&back, &all, dsig) {
        Ok(e) => e,
        Err(e) => return RoundtripReport::fail(format!("re-encode failed: {e}")),
    };
    let re_ext = materialize(&re_enc);
    if re_ext.payload != ext.payload || re_ext.universe != ext.universe {
        return RoundtripReport::fail("re-encoded tables differ from original encoding".to_string());
    }
    RoundtripReport {
        pass: true,
        detail: None,
    }
}

/// Checks that `a` embeds into `b` as a discrete substructure via element
/// names: same fragment, function tables commute, and every threshold
/// relation agrees on `a`-tuples. Returns the embedding (a-index ->
/// b-index).
pub fn check_tau_substructure(
    a: &DiscreteStructure,
    b: &DiscreteStructure,
) -> Result<Vec<usize>, DensifyError> {
    if a.dsig != b.dsig {
        return Err(DensifyError::NotSubstructure(
            "signature fragments differ".to_string(),
        ));
    }
    let embed: Vec<usize> = a
        .universe
        .iter()
        .map(|e| {
            b.universe
                .iter()
                .position(|f| f == e)
                .ok_or_else(|| DensifyError::NotSubstructure(format!("element {e} missing")))
        })
        .collect::<Result<_, _>>()?;
    let (na, nb) = (a.size(), b.size());
    for decl in &a.dsig.signature.functions {
        let ta = &a.func_tables[&decl.name];
        let tb = &b.func_tables[&decl.name];
        for tuple in tuples(na, decl.arity) {
            let mapped: Vec<usize> = tuple.iter().map(|&i| embed[i]).collect();
            if embed[ta[tuple_index(na, &tuple)]] != tb[tuple_index(nb, &mapped)] {
                return Err(DensifyError::NotSubstructure(format!(
                    "function {} does not commute with the inclusion",
                    decl.name
                )));
            }
        }
    }
    for f in 0..a.dsig.formula_count() {
        let k = a.dsig.arity(f);
        for (dir, gi) in [Dir::Geq, Dir::Leq]
            .into_iter()
            .flat_map(|d2| a.dsig.fragment.grid.points().map(move |gi| (d2, gi)))
        {
            for tuple in tuples(na, k) {
                let mapped: Vec<usize> = tuple.iter().map(|&i| embed[i]).collect();
                if a.truth(f, gi, dir, tuple_index(na, &tuple))
                    != b.truth(f, gi, dir, tuple_index(nb, &mapped))
                {
                    return Err(DensifyError::NotSubstructure(format!(
                        "{} disagrees at a restricted tuple",
                        a.dsig.symbol_name(f, gi, dir)
                    )));
                }
            }
        }
    }
    Ok(embed)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InessentialReport {
    pub ok: bool,
    /// First `(element of B, n)` with no `A`-element within `1/n`.
    pub failing: Option<(String, u32)>,
}

/// Is `b` an inessential extension of `a` at depth `depth_n`: every
/// element of `b` has, for each `n <= depth_n`, an `a`-element within
/// `1/n` (threshold snapped down to the grid)?
pub fn is_inessential_extension(
    a: &DiscreteStructure,
    b: &DiscreteStructure,
    depth_n: u32,
) -> Result<InessentialReport, DensifyError> {
    let embed = check_tau_substructure(a, b)?;
    let grid = b.dsig.fragment.grid;
    let di = b.dsig.dist_idx;
    let nb = b.size();
    for (bi, bname) in b.universe.iter().enumerate() {
        for n in 1..=depth_n {
            let gi = grid.floor_index(&rat(1, n as i64));
            let near = embed
                .iter()
                .any(|&ai| b.truth(di, gi, Dir::Leq, bi * nb + ai));
            if !near {
                return Ok(InessentialReport {
                    ok: false,
                    failing: Some((bname.clone(), n)),
                });
            }
        }
    }
    Ok(InessentialReport {
        ok: true,
        failing: None,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TfaeClause {
    pub clause: String,
    pub pass: bool,
    pub detail: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TfaeReport {
    pub clauses: Vec<TfaeClause>,
}

impl TfaeReport {
    pub fn pass(&self) -> bool {
        self.clauses.iter().all(|c| c.pass)
    }
}

/// Verifies a common-extension witness `c` for `a` and `b`: both embed
/// into `c`, `c` satisfies the fragment's T_dense instances, and `c` is an
/// inessential extension of `b`.
pub fn check_tfae_witness(
    a: &DiscreteStructure,
    b: &DiscreteStructure,
    c: &DiscreteStructure,
    depth_n: u32,
) -> TfaeReport {
    let mut clauses = Vec::new();
    let mut push = |clause: &str, result: Result<(), String>| {
        clauses.push(TfaeClause {
            clause: clause.to_string(),
            pass: result.is_ok(),
            detail: result.err(),
        });
    };
    push(
        "A substructure of C",
        check_tau_substructure(a, c).map(|_| ()).map_err(|e| e.to_string()),
    );
    push(
        "B substructure of C",
        check_tau_substructure(b, c).map(|_| ()).map_err(|e| e.to_string()),
    );
    let report = check_tdense(c, &generate_for(c));
    push(
        "C satisfies T_dense fragment",
        if report.passed() {
            Ok(())
        } else {
            Err(report
                .schemes
                .iter()
                .find(|s| s.fail > 0)
                .and_then(|s| s.witness.clone())
                .unwrap_or_else(|| "scheme failure".to_string()))
        },
    );
    push(
        "C inessential over B",
        match is_inessential_extension(b, c, depth_n) {
            Ok(r) if r.ok => Ok(()),
            Ok(r) => Err(format!("fails at {:?}", r.failing)),
            Err(e) => Err(e.to_string()),
        },
    );
    TfaeReport { clauses }
}

/// An increasing chain of extensional discrete structures over a shared
/// fragment, with a promised geometric refinement rate: every element of
/// the top level has a level-`k` element within `rate^k`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LevelFamily {
    pub levels: Vec<DiscreteStructure>,
    pub rate: Rat,
}

/// Checks the family invariants: nonempty, shared fragment, each level a
/// substructure of the next, and the refinement rate against the top
/// level's derived metric.
pub fn validate_level_family(fam: &LevelFamily) -> Result<(), DensifyError> {
    if fam.levels.is_empty() {
        return Err(DensifyError::BadFamily("no levels".to_string()));
    }
    if fam.rate <= Rat::zero() || fam.rate >= crate::rational::rat_one() {
        return Err(DensifyError::BadFamily("rate must be in (0, 1)".to_string()));
    }
    for w in fam.levels.windows(2) {
        check_tau_substructure(&w[0], &w[1])?;
    }
    let top = fam.levels.last().expect("nonempty");
    let metric = derived_metric(top)?;
    let n = top.size();
    for (k, level) in fam.levels.iter().enumerate() {
        let embed = check_tau_substructure(level, top)?;
        let tol = num_traits::pow::pow(fam.rate.clone(), k);
        for (ti, tname) in top.universe.iter().enumerate() {
            let near = embed
                .iter()
                .any(|&li| metric.table[ti * n + li] <= tol);
            if !near {
                return Err(DensifyError::BadFamily(format!(
                    "element {tname} has no level-{k} approximation within {}",
                    format_rat(&tol)
                )));
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompletableReport {
    pub pass: bool,
    /// Failing `(relation, element x, element y, |difference|, bound)`.
    pub witness: Option<String>,
}

/// Completability at finite depth: any two level-`depth` elements that
/// approximate the same top element (derived distance `<= rate^depth`)
/// must have relation values within the formula-modulus bound at
/// `rate^(depth-1)` — chain-independence of the limits, checked on the
/// unary relation atoms.
pub fn check_completable(fam: &LevelFamily, depth: u32) -> Result<CompletableReport, DensifyError> {
    validate_level_family(fam)?;
    let top = fam.levels.last().expect("nonempty");
    let level = &fam.levels[(depth as usize).min(fam.levels.len() - 1)];
    let embed = check_tau_substructure(level, top)?;
    let metric = derived_metric(top)?;
    let relations = derived_relations(top)?;
    let n = top.size();
    let tol = num_traits::pow::pow(fam.rate.clone(), depth as usize);
    let spread = num_traits::pow::pow(fam.rate.clone(), depth.saturating_sub(1) as usize);
    for decl in &top.dsig.signature.relations {
        if decl.arity != 1 {
            continue;
        }
        let atom = Formula::Rel(decl.name.clone(), alloc::vec![Term::var("x")]);
        let bound = formula_modulus_at(&atom, &top.dsig.signature, &spread);
        let table = &relations[&decl.name];
        for e in 0..n {
            let near: Vec<usize> = embed
                .iter()
                .copied()
                .filter(|&li| metric.table[e * n + li] <= tol)
                .collect();
            for (i, &x) in near.iter().enumerate() {
                for &y in &near[i + 1..] {
                    let (vx, vy) = (&table[x], &table[y]);
                    let diff = if vx >= vy { vx - vy } else { vy - vx };
                    if diff > bound {
                        return Ok(CompletableReport {
                            pass: false,
                            witness: Some(format!(
                                "{}: |{}({}) - {}({})| = {} > {}",
                                decl.name,
                                decl.name,
                                top.universe[x],
                                decl.name,
                                top.universe[y],
                                format_rat(&diff),
                                format_rat(&bound)
                            )),
                        });
                    }
                }
            }
        }
    }
    Ok(CompletableReport {
        pass: true,
        witness: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretize::{build_signature_fragment, restrict_structure};
    use crate::rational::{rat, rat_zero};
    use crate::semantics::tests_support::m2;
    use crate::syntax::{standard_fragment, ContinuousSignature, FunctionDecl, ModulusTable};
    use alloc::vec;

    fn m2_encoding(grid_l: u32) -> DiscreteStructure {
        let m = m2();
        let frag = standard_fragment(&m.signature, 2, grid_l, 2);
        let ds = build_signature_fragment(&m.signature, &frag).unwrap();
        materialize(&encode(&m, &[0, 1], &ds).unwrap())
    }

    #[test]
    fn derived_metric_on_encoding() {
        let ext = m2_encoding(4);
        let dm = derived_metric(&ext).unwrap();
        assert_eq!(dm.table, vec![rat(0, 1), rat(1, 2), rat(1, 2), rat(0, 1)]);
        assert!(dm.gaps.iter().all(|g| g.is_zero()));
    }

    #[test]
    fn inconsistent_cut_rejected() {
        let mut ext = m2_encoding(4);
        // Make every >= threshold true at (a, b): sup of >=-set exceeds the
        // inf of the <=-set, an order-scheme violation surfacing as a gap.
        let di = ext.dsig.dist_idx;
        for gi in 0..=4u32 {
            if !ext.truth(di, gi, Dir::Geq, 1) {
                ext.flip_truth(di, gi, Dir::Geq, 1);
            }
        }
        assert!(matches!(
            derived_metric(&ext),
            Err(DensifyError::InconsistentCut { .. })
        ));
    }

    #[test]
    fn derived_relations_recover_tables() {
        let ext = m2_encoding(4);
        let rels = derived_relations(&ext).unwrap();
        assert_eq!(rels["P"], vec![rat(0, 1), rat(3, 4)]);
    }

    #[test]
    fn derived_moduli_dominate_declared() {
        let ext = m2_encoding(4);
        let (_, rels) = derived_moduli(&ext).unwrap();
        let derived = &rels["P"];
        for (r, delta) in &ext.dsig.signature.relations[0].modulus.entries {
            if ext.dsig.fragment.grid.contains(r) {
                assert!(derived.entries[r] >= *delta, "derived below declared at {r}");
            }
        }
    }

    #[test]
    fn derived_function_modulus_identity() {
        // One unary identity function on a 2-point space: delta(r) >= r.
        let modulus = ModulusTable::new(
            [(rat(1, 2), rat(1, 2)), (rat(1, 1), rat(1, 1))]
                .into_iter()
                .collect(),
        )
        .unwrap();
        let sig = ContinuousSignature::new(
            vec![FunctionDecl {
                name: "id".to_string(),
                arity: 1,
                modulus,
            }],
            vec![],
        )
        .unwrap();
        let m = ContinuousStructure::new(
            sig.clone(),
            vec!["a".to_string(), "b".to_string()],
            vec![rat_zero(), rat(1, 2), rat(1, 2), rat_zero()],
            [("id".to_string(), vec![0usize, 1])].into_iter().collect(),
            BTreeMap::new(),
        )
        .unwrap();
        let frag = standard_fragment(&sig, 1, 4, 2);
        let ds = build_signature_fragment(&sig, &frag).unwrap();
        let ext = materialize(&encode(&m, &[0, 1], &ds).unwrap());
        let (funcs, _) = derived_moduli(&ext).unwrap();
        for gi in 0..=4u32 {
            let r = rat(gi as i64, 4);
            assert!(funcs["id"].entries[&r] >= r);
        }
    }

    #[test]
    fn decode_round_trips_m2() {
        let m = m2();
        let ext = m2_encoding(4);
        let back = decode(&ext).unwrap();
        assert_eq!(back.universe, m.universe);
        assert_eq!(back.metric, m.metric);
        assert_eq!(back.relations, m.relations);
        let report = roundtrip_check(&m, &ext.dsig);
        assert!(report.pass, "{:?}", report.detail);
    }

    #[test]
    fn off_grid_value_blocks_decode() {
        // P(b) = 3/4 is off the L=2 grid: the relation cut has gap 1/2.
        let ext = m2_encoding(2);
        assert!(matches!(
            decode(&ext),
            Err(DensifyError::NonzeroGap { .. })
        ));
        let report = roundtrip_check(&m2(), &ext.dsig);
        assert!(!report.pass);
    }

    #[test]
    fn substructure_and_inessential() {
        let ext = m2_encoding(4);
        let sub = restrict_structure(&ext, &[0]).unwrap();
        check_tau_substructure(&sub, &ext).unwrap();
        // A = B: trivially inessential.
        assert!(is_inessential_extension(&ext, &ext, 4).unwrap().ok);
        // b sits 1/2 away from A = {a}: fails at n = 4.
        let report = is_inessential_extension(&sub, &ext, 4).unwrap();
        assert!(!report.ok);
        let (elem, _) = report.failing.unwrap();
        assert_eq!(elem, "b");
        // Unrelated universes are not substructures.
        assert!(check_tau_substructure(&ext, &sub).is_err());
    }

    #[test]
    fn tfae_self_witness() {
        let ext = m2_encoding(4);
        let report = check_tfae_witness(&ext, &ext, &ext, 4);
        assert!(report.pass(), "{:?}", report.clauses);
        let sub = restrict_structure(&ext, &[0]).unwrap();
        let report = check_tfae_witness(&sub, &ext, &sub, 4);
        assert!(!report.pass());
    }

    #[test]
    fn constant_family_completable() {
        let ext = m2_encoding(4);
        let fam = LevelFamily {
            levels: vec![ext.clone(), ext.clone(), ext],
            rate: rat(1, 2),
        };
        validate_level_family(&fam).unwrap();
        let report = check_completable(&fam, 2).unwrap();
        assert!(report.pass, "{:?}", report.witness);
    }
}
