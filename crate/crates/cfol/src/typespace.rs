//! Quantifier-free threshold types over parameters, sequence types with
//! Cauchy-chain parameters, limit types, and their realization checks at
//! bounded depth.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use num_traits::Zero;

use crate::discretize::{Dir, DiscreteStructure};
use crate::rational::{format_rat, rat, rat_one, Rat};
use crate::semantics::{eval, tuple_index, tuples, Assignment, ContinuousStructure};
use crate::syntax::{formula_modulus_at, print_formula, Formula};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TypeError {
    /// A formula of a type condition is not in the structure's fragment.
    FormulaNotInFragment(String),
    /// A condition variable is neither a subject variable nor bound to a
    /// parameter, or a binding names a variable the formula lacks.
    VariableMismatch(String),
    /// No element of the base subset is close enough to a parameter at
    /// some chain depth.
    BaseNotDense { param: String, n: u32 },
    /// No universe element is a stable limit of a parameter chain.
    UnresolvedChain { index: usize, coord: usize },
    /// Candidate chain length does not match the sequence type's depth.
    DepthMismatch { expected: u32, got: usize },
    /// A candidate tuple has the wrong arity.
    ArityMismatch { expected: usize, got: usize },
    OutOfUniverse(usize),
}

impl fmt::Display for TypeError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TypeError::FormulaNotInFragment(s) => write!(f, "formula not in fragment: {s}"),
            TypeError::VariableMismatch(s) => write!(f, "condition variable mismatch: {s}"),
            TypeError::BaseNotDense { param, n } => {
                write!(f, "base subset has no element within 1/2^{n} of {param}")
            }
            TypeError::UnresolvedChain { index, coord } => {
                write!(f, "chain {index} coordinate {coord} has no stable limit element")
            }
            TypeError::DepthMismatch { expected, got } => {
                write!(f, "expected {} candidate tuples, got {got}", expected + 1)
            }
            TypeError::ArityMismatch { expected, got } => {
                write!(f, "expected arity {expected}, got {got}")
            }
            TypeError::OutOfUniverse(e) => write!(f, "element index {e} out of universe"),
        }
    }
}

/// One position of a type pattern: a coordinate of the subject tuple or
/// one of the fixed parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Slot {
    Subject(usize),
    Param(usize),
}

/// The quantifier-free threshold type of a subject tuple over parameters:
/// the truth value of every fragment threshold symbol on every tuple
/// pattern mixing subject coordinates with parameters, in a fixed
/// enumeration order. Two tuples have the same type iff the fact vectors
/// (over equal parameters) coincide.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QfType {
    pub arity: usize,
    pub params: Vec<usize>,
    /// Flat facts: formulas in fragment order, slot patterns in
    /// lexicographic order, grid thresholds ascending, Geq before Leq.
    pub facts: Vec<bool>,
}

fn resolve_slot(slot: Slot, subject: &[usize], params: &[usize]) -> usize {
    match slot {
        Slot::Subject(j) => subject[j],
        Slot::Param(j) => params[j],
    }
}

pub fn qf_type(d: &DiscreteStructure, subject: &[usize], params: &[usize]) -> QfType {
    let n = d.size();
    let slot_count = subject.len() + params.len();
    let slot = |i: usize| {
        if i < subject.len() {
            Slot::Subject(i)
        } else {
            Slot::Param(i - subject.len())
        }
    };
    let mut facts = Vec::new();
    for f in 0..d.dsig.formula_count() {
        let k = d.dsig.arity(f);
        for pattern in tuples(slot_count, k) {
            let coords: Vec<usize> = pattern
                .iter()
                .map(|&i| resolve_slot(slot(i), subject, params))
                .collect();
            let t = tuple_index(n, &coords);
            for gi in d.dsig.fragment.grid.points() {
                facts.push(d.truth(f, gi, Dir::Geq, t));
                facts.push(d.truth(f, gi, Dir::Leq, t));
            }
        }
    }
    QfType {
        arity: subject.len(),
        params: params.to_vec(),
        facts,
    }
}

pub fn same_type(d: &DiscreteStructure, a: &[usize], b: &[usize], params: &[usize]) -> bool {
    qf_type(d, a, params) == qf_type(d, b, params)
}

/// The continuous-side counterpart of [`same_type`]: exact value equality
/// of every fragment formula on every pattern mixing the subject with the
/// parameters. On encodings this agrees with `same_type`.
pub fn same_type_continuous(
    m: &ContinuousStructure,
    fragment: &crate::syntax::Fragment,
    a: &[usize],
    b: &[usize],
    params: &[usize],
) -> bool {
    let slot_count = a.len() + params.len();
    for formula in fragment.formulas() {
        let vars = formula.free_var_list();
        for pattern in tuples(slot_count, vars.len()) {
            let assign = |subject: &[usize]| -> Assignment {
                vars.iter()
                    .cloned()
                    .zip(pattern.iter().map(|&i| {
                        if i < subject.len() {
                            subject[i]
                        } else {
                            params[i - subject.len()]
                        }
                    }))
                    .collect()
            };
            let va = eval(formula, m, &assign(a)).expect("fragment formula evaluates");
            let vb = eval(formula, m, &assign(b)).expect("fragment formula evaluates");
            if va != vb {
                return false;
            }
        }
    }
    true
}

/// One condition "φ(x⃗, b⃗) = 0": the subject variables in tuple order and
/// the remaining free variables bound to universe elements.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TypeCondition {
    pub formula: Formula,
    pub subject_vars: Vec<String>,
    pub params: Vec<(String, usize)>,
}

/// A finite fragment-level continuous type: a set of "φ(x⃗, b⃗) = 0"
/// conditions with parameters from a designated structure.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContinuousTypeFragment {
    pub arity: usize,
    pub conditions: Vec<TypeCondition>,
}

fn condition_assignment(
    cond: &TypeCondition,
    subject: &[usize],
) -> Result<Assignment, TypeError> {
    if subject.len() != cond.subject_vars.len() {
        return Err(TypeError::ArityMismatch {
            expected: cond.subject_vars.len(),
            got: subject.len(),
        });
    }
    let mut assign: Assignment = cond
        .subject_vars
        .iter()
        .cloned()
        .zip(subject.iter().copied())
        .collect();
    for (v, e) in &cond.params {
        assign.insert(v.clone(), *e);
    }
    for v in cond.formula.free_vars() {
        if !assign.contains_key(&v) {
            return Err(TypeError::VariableMismatch(v));
        }
    }
    Ok(assign)
}

/// Does `subject` realize the type in `m` (every condition evaluates to 0)?
pub fn type_realized_at(
    m: &ContinuousStructure,
    r: &ContinuousTypeFragment,
    subject: &[usize],
) -> Result<bool, TypeError> {
    for cond in &r.conditions {
        let assign = condition_assignment(cond, subject)?;
        let v = eval(&cond.formula, m, &assign)
            .map_err(|e| TypeError::VariableMismatch(e.to_string()))?;
        if !v.is_zero() {
            return Ok(false);
        }
    }
    Ok(true)
}

/// One index entry of a sequence type: a condition formula with its
/// parameter chain `b_0, .., b_N` (one parameter tuple per depth).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeqEntry {
    pub formula: Formula,
    pub subject_vars: Vec<String>,
    pub param_vars: Vec<String>,
    /// `chain[n]` = the parameter tuple at depth `n`, `0 <= n <= depth`.
    pub chain: Vec<Vec<usize>>,
}

/// A sequence type at finite depth `N`: per-index formulas over chains of
/// parameters, plus the implicit coordinatewise Cauchy constraints
/// `R[d <= 1/2^n](x_k at n+1, x_k at n)` on candidates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SequenceType {
    pub arity: usize,
    pub depth: u32,
    pub entries: Vec<SeqEntry>,
}

/// Grid index for a strict "< bound" constraint: the largest grid value
/// strictly below the bound, with bounds >= 1 read as the vacuous "<= 1"
/// and bounds <= 0 as "<= 0".
fn strict_threshold(grid: crate::rational::Grid, bound: &Rat) -> u32 {
    if *bound >= rat_one() {
        grid.l
    } else {
        grid.strict_floor_index(bound).unwrap_or(0)
    }
}

/// Threshold of the step-`n` constraint on φ: `min(1, w^φ(eps))` where
/// `eps = 2` at step 0 (vacuous after the cap) and `1/2^(n-1)` afterwards.
fn step_bound(d: &DiscreteStructure, formula: &Formula, n: u32) -> Rat {
    let eps = if n == 0 { rat(2, 1) } else { rat(1, 1 << (n - 1)) };
    let w = formula_modulus_at(formula, &d.dsig.signature, &eps);
    if w > rat_one() {
        rat_one()
    } else {
        w
    }
}

/// Builds the sequence type of a continuous type `r` over the base subset
/// `b_prime` of `m`: each parameter of each condition is approximated at
/// every depth `n <= depth` by the nearest base element strictly within
/// `1/2^n` (ties broken by universe order), so parameters already in the
/// base yield constant chains.
pub fn build_sequence_type(
    r: &ContinuousTypeFragment,
    m: &ContinuousStructure,
    b_prime: &[usize],
    depth: u32,
) -> Result<SequenceType, TypeError> {
    let mut base: Vec<usize> = b_prime.to_vec();
    base.sort_unstable();
    base.dedup();
    if let Some(&e) = base.iter().find(|&&e| e >= m.size()) {
        return Err(TypeError::OutOfUniverse(e));
    }
    let mut entries = Vec::new();
    for cond in &r.conditions {
        let mut chain = Vec::with_capacity(depth as usize + 1);
        for n in 0..=depth {
            let tol = rat(1, 1i64 << n);
            let tuple: Vec<usize> = cond
                .params
                .iter()
                .map(|(name, e)| {
                    base.iter()
                        .copied()
                        .filter(|&b| *m.dist(b, *e) < tol)
                        .min_by_key(|&b| m.dist(b, *e).clone())
                        .ok_or_else(|| TypeError::BaseNotDense {
                            param: format!("{name} = {}", m.universe[*e]),
                            n,
                        })
                })
                .collect::<Result<_, _>>()?;
            chain.push(tuple);
        }
        entries.push(SeqEntry {
            formula: cond.formula.clone(),
            subject_vars: cond.subject_vars.clone(),
            param_vars: cond.params.iter().map(|(v, _)| v.clone()).collect(),
            chain,
        });
    }
    Ok(SequenceType {
        arity: r.arity,
        depth,
        entries,
    })
}

/// Resolves each parameter chain to its limit in the (finite) universe:
/// the first element within derived distance `1/2^(n-1)` of the chain's
/// depth-`n` tuple for every `n >= 1`. Returns the continuous type at the
/// resolved parameters.
pub fn limit_type(
    st: &SequenceType,
    d: &DiscreteStructure,
) -> Result<ContinuousTypeFragment, TypeError> {
    let metric = crate::densify::derived_metric(d)
        .map_err(|_| TypeError::UnresolvedChain { index: 0, coord: 0 })?;
    let n_elems = d.size();
    let mut conditions = Vec::new();
    for (i, entry) in st.entries.iter().enumerate() {
        let coords = entry.param_vars.len();
        let mut resolved = Vec::with_capacity(coords);
        for c in 0..coords {
            let limit = (0..n_elems).find(|&e| {
                (1..=st.depth).all(|n| {
                    let tol = rat(1, 1i64 << (n - 1));
                    metric.table[e * n_elems + entry.chain[n as usize][c]] <= tol
                })
            });
            match limit {
                Some(e) => resolved.push(e),
                None => return Err(TypeError::UnresolvedChain { index: i, coord: c }),
            }
        }
        conditions.push(TypeCondition {
            formula: entry.formula.clone(),
            subject_vars: entry.subject_vars.clone(),
            params: entry
                .param_vars
                .iter()
                .cloned()
                .zip(resolved)
                .collect(),
        });
    }
    Ok(ContinuousTypeFragment {
        arity: st.arity,
        conditions,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RealizationReport {
    pub ok: bool,
    /// Human description of the first violated constraint.
    pub violation: Option<String>,
}

/// Checks a candidate chain `a_0, .., a_N` against a sequence type: the
/// step-`n` threshold constraint of every index on `(a_n, chain_n)`, and
/// the coordinatewise Cauchy constraints `d(a_{n+1,k}, a_{n,k}) <= 1/2^n`.
pub fn check_realizes_sequence(
    d: &DiscreteStructure,
    candidates: &[Vec<usize>],
    st: &SequenceType,
) -> Result<RealizationReport, TypeError> {
    if candidates.len() != st.depth as usize + 1 {
        return Err(TypeError::DepthMismatch {
            expected: st.depth,
            got: candidates.len(),
        });
    }
    for a in candidates {
        if a.len() != st.arity {
            return Err(TypeError::ArityMismatch {
                expected: st.arity,
                got: a.len(),
            });
        }
    }
    let grid = d.dsig.fragment.grid;
    let n_elems = d.size();
    let di = d.dsig.dist_idx;
    // Cauchy constraints between consecutive candidate tuples.
    for n in 0..st.depth {
        let gi = grid.floor_index(&rat(1, 1i64 << n));
        for k in 0..st.arity {
            let (x, y) = (candidates[n as usize + 1][k], candidates[n as usize][k]);
            if !d.truth(di, gi, Dir::Leq, x * n_elems + y) {
                return Ok(RealizationReport {
                    ok: false,
                    violation: Some(format!(
                        "Cauchy constraint fails at step {n}, coordinate {k}: R[d <= 1/2^{n}]({}, {}) is false",
                        d.universe[x], d.universe[y]
                    )),
                });
            }
        }
    }
    // Per-index threshold constraints.
    for (i, entry) in st.entries.iter().enumerate() {
        let Some(f) = d.dsig.fragment.index_of(&entry.formula) else {
            return Err(TypeError::FormulaNotInFragment(print_formula(&entry.formula)));
        };
        let vars = d.dsig.vars(f);
        for n in 0..=st.depth {
            let bound = step_bound(d, &entry.formula, n);
            let gi = strict_threshold(grid, &bound);
            let mut binding: BTreeMap<&String, usize> = BTreeMap::new();
            for (k, v) in entry.subject_vars.iter().enumerate() {
                binding.insert(v, candidates[n as usize][k]);
            }
            for (k, v) in entry.param_vars.iter().enumerate() {
                binding.insert(v, entry.chain[n as usize][k]);
            }
            let coords: Vec<usize> = vars
                .iter()
                .map(|v| {
                    binding
                        .get(v)
                        .copied()
                        .ok_or_else(|| TypeError::VariableMismatch(v.clone()))
                })
                .collect::<Result<_, _>>()?;
            let t = tuple_index(n_elems, &coords);
            if !d.truth(f, gi, Dir::Leq, t) {
                return Ok(RealizationReport {
                    ok: false,
                    violation: Some(format!(
                        "index {i} fails at step {n}: R[{} <= {}] is false",
                        print_formula(&entry.formula),
                        format_rat(&grid.value(gi))
                    )),
                });
            }
        }
    }
    Ok(RealizationReport {
        ok: true,
        violation: None,
    })
}

/// The sub-sequence-type given by a subset of the index set; realization
/// of the original implies realization of the restriction.
pub fn restrict_sequence_type(st: &SequenceType, indices: &[usize]) -> SequenceType {
    SequenceType {
        arity: st.arity,
        depth: st.depth,
        entries: indices
            .iter()
            .filter_map(|&i| st.entries.get(i).cloned())
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretize::{build_signature_fragment, encode, materialize};
    use crate::rational::{rat, rat_zero};
    use crate::semantics::tests_support::m2;
    use crate::syntax::{parse_formula, standard_fragment, ContinuousSignature, RelationDecl};
    use alloc::vec;

    fn m2_encoding() -> (ContinuousStructure, DiscreteStructure) {
        let m = m2();
        let frag = standard_fragment(&m.signature, 2, 8, 2);
        let ds = build_signature_fragment(&m.signature, &frag).unwrap();
        let ext = materialize(&encode(&m, &[0, 1], &ds).unwrap());
        (m, ext)
    }

    fn symmetric_two_point() -> (ContinuousStructure, DiscreteStructure) {
        let modulus = crate::syntax::ModulusTable::new(
            [(rat(1, 2), rat(1, 2)), (rat(1, 1), rat(1, 1))]
                .into_iter()
                .collect(),
        )
        .unwrap();
        let sig = ContinuousSignature::new(
            vec![],
            vec![RelationDecl {
                name: "P".to_string(),
                arity: 1,
                modulus,
            }],
        )
        .unwrap();
        let m = ContinuousStructure::new(
            sig.clone(),
            vec!["a".to_string(), "b".to_string()],
            vec![rat_zero(), rat(1, 2), rat(1, 2), rat_zero()],
            BTreeMap::new(),
            [("P".to_string(), vec![rat(1, 4), rat(1, 4)])]
                .into_iter()
                .collect(),
        )
        .unwrap();
        let frag = standard_fragment(&sig, 1, 8, 2);
        let ds = build_signature_fragment(&sig, &frag).unwrap();
        let ext = materialize(&encode(&m, &[0, 1], &ds).unwrap());
        (m, ext)
    }

    #[test]
    fn qf_type_distinguishes_and_matches() {
        let (m, ext) = m2_encoding();
        // Self-equality and the P-value split in M2.
        assert!(same_type(&ext, &[0], &[0], &[]));
        assert!(!same_type(&ext, &[0], &[1], &[]));
        assert!(!same_type_continuous(&m, &ext.dsig.fragment, &[0], &[1], &[]));
        // Symmetric structure: a and b are indistinguishable.
        let (sm, sext) = symmetric_two_point();
        assert!(same_type(&sext, &[0], &[1], &[]));
        assert!(same_type_continuous(&sm, &sext.dsig.fragment, &[0], &[1], &[]));
        // With a parameter the symmetry breaks: d(a, a) = 0 but d(b, a) = 1/2.
        assert!(!same_type(&sext, &[0], &[1], &[0]));
        assert!(!same_type_continuous(&sm, &sext.dsig.fragment, &[0], &[1], &[0]));
    }

    #[test]
    fn discrete_and_continuous_type_equality_agree() {
        let (m, ext) = m2_encoding();
        for a in 0..2usize {
            for b in 0..2usize {
                for params in [vec![], vec![0], vec![1], vec![0, 1]] {
                    assert_eq!(
                        same_type(&ext, &[a], &[b], &params),
                        same_type_continuous(&m, &ext.dsig.fragment, &[a], &[b], &params),
                    );
                }
            }
        }
    }

    fn sample_type(m: &ContinuousStructure) -> ContinuousTypeFragment {
        // "d(x, b) = 0": realized exactly by b.
        let formula = parse_formula("d(x, y)", &m.signature).unwrap();
        ContinuousTypeFragment {
            arity: 1,
            conditions: vec![TypeCondition {
                formula,
                subject_vars: vec!["x".to_string()],
                params: vec![("y".to_string(), 1)],
            }],
        }
    }

    #[test]
    fn realization_of_continuous_type() {
        let (m, _) = m2_encoding();
        let r = sample_type(&m);
        assert!(type_realized_at(&m, &r, &[1]).unwrap());
        assert!(!type_realized_at(&m, &r, &[0]).unwrap());
    }

    #[test]
    fn sequence_type_round_trip() {
        let (m, ext) = m2_encoding();
        let r = sample_type(&m);
        // Parameters lie in the base: chains are constant and the limit
        // resolves back to the original parameters.
        let st = build_sequence_type(&r, &m, &[0, 1], 3).unwrap();
        assert!(st.entries.iter().all(|e| e.chain.iter().all(|t| t == &vec![1])));
        let back = limit_type(&st, &ext).unwrap();
        assert_eq!(back, r);
        // Constant candidates at the realizing element realize the
        // sequence type; at the other element they fail the threshold.
        let good: Vec<Vec<usize>> = (0..=3).map(|_| vec![1]).collect();
        assert!(check_realizes_sequence(&ext, &good, &st).unwrap().ok);
        let bad: Vec<Vec<usize>> = (0..=3).map(|_| vec![0]).collect();
        let report = check_realizes_sequence(&ext, &bad, &st).unwrap();
        assert!(!report.ok);
        // Jumping candidates violate the Cauchy constraint.
        let jump = vec![vec![1], vec![1], vec![1], vec![0]];
        let report = check_realizes_sequence(&ext, &jump, &st).unwrap();
        assert!(!report.ok);
        assert!(report.violation.unwrap().contains("Cauchy"));
    }

    #[test]
    fn empty_base_errors() {
        let (m, _) = m2_encoding();
        let r = sample_type(&m);
        assert!(matches!(
            build_sequence_type(&r, &m, &[], 2),
            Err(TypeError::BaseNotDense { .. })
        ));
        // A base missing the parameter is not dense enough beyond 1/2.
        assert!(matches!(
            build_sequence_type(&r, &m, &[0], 3),
            Err(TypeError::BaseNotDense { .. })
        ));
    }

    #[test]
    fn restriction_is_monotone() {
        let (m, ext) = m2_encoding();
        let r = sample_type(&m);
        let st = build_sequence_type(&r, &m, &[0, 1], 3).unwrap();
        let empty = restrict_sequence_type(&st, &[]);
        assert!(empty.entries.is_empty());
        let good: Vec<Vec<usize>> = (0..=3).map(|_| vec![1]).collect();
        assert!(check_realizes_sequence(&ext, &good, &empty).unwrap().ok);
        assert_eq!(restrict_sequence_type(&st, &[0]), st);
    }
}
