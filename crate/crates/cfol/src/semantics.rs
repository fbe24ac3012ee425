//! Finite metric structures and exact evaluation of continuous formulas.
//!
//! A [`ContinuousStructure`] carries a finite universe, a rational metric
//! table, and dense function/relation tables. Quantifiers are realized as
//! exact max/min over the universe, so every formula value is a rational in
//! `[0,1]`.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use num_traits::Zero;

use crate::rational::{in_unit_interval, max_rat, min_rat, monus, rat_one, rat_zero, Rat};
use crate::syntax::{ContinuousSignature, Formula, Fragment, Term};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StructureError {
    EmptyUniverse,
    DuplicateElement(String),
    MissingTable(String),
    TableSize { name: String, expected: usize, got: usize },
    ValueOutOfRange { name: String, index: usize },
    FunctionRangeOutOfBounds { name: String, index: usize },
    MetricViolation(MetricViolation),
}

impl fmt::Display for StructureError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StructureError::EmptyUniverse => write!(f, "universe is empty"),
            StructureError::DuplicateElement(e) => write!(f, "duplicate element: {e}"),
            StructureError::MissingTable(n) => write!(f, "missing table for symbol: {n}"),
            StructureError::TableSize { name, expected, got } => {
                write!(f, "table for {name} has {got} entries, expected {expected}")
            }
            StructureError::ValueOutOfRange { name, index } => {
                write!(f, "value of {name} at tuple {index} outside [0,1]")
            }
            StructureError::FunctionRangeOutOfBounds { name, index } => {
                write!(f, "function {name} at tuple {index} maps outside the universe")
            }
            StructureError::MetricViolation(v) => write!(f, "metric violation: {v}"),
        }
    }
}

/// Why a candidate metric table fails to be a `[0,1]`-valued metric.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MetricViolation {
    NotZeroOnDiagonal(usize),
    ZeroOffDiagonal(usize, usize),
    NotSymmetric(usize, usize),
    OutOfRange(usize, usize),
    Triangle(usize, usize, usize),
}

impl fmt::Display for MetricViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MetricViolation::NotZeroOnDiagonal(i) => write!(f, "d({i},{i}) != 0"),
            MetricViolation::ZeroOffDiagonal(i, j) => write!(f, "d({i},{j}) = 0 with {i} != {j}"),
            MetricViolation::NotSymmetric(i, j) => write!(f, "d({i},{j}) != d({j},{i})"),
            MetricViolation::OutOfRange(i, j) => write!(f, "d({i},{j}) outside [0,1]"),
            MetricViolation::Triangle(i, j, k) => {
                write!(f, "d({i},{k}) > d({i},{j}) + d({j},{k})")
            }
        }
    }
}

/// Checks that an `n x n` table (row-major) is a metric with values in
/// `[0,1]`: zero exactly on the diagonal, symmetric, triangle inequality.
pub fn check_metric(n: usize, table: &[Rat]) -> Result<(), MetricViolation> {
    assert_eq!(table.len(), n * n, "metric table size");
    for i in 0..n {
        for j in 0..n {
            let v = &table[i * n + j];
            if !in_unit_interval(v) {
                return Err(MetricViolation::OutOfRange(i, j));
            }
            if i == j && !v.is_zero() {
                return Err(MetricViolation::NotZeroOnDiagonal(i));
            }
            if i != j && v.is_zero() {
                return Err(MetricViolation::ZeroOffDiagonal(i, j));
            }
            if table[i * n + j] != table[j * n + i] {
                return Err(MetricViolation::NotSymmetric(i, j));
            }
        }
    }
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                if table[i * n + k].clone() > table[i * n + j].clone() + &table[j * n + k] {
                    return Err(MetricViolation::Triangle(i, j, k));
                }
            }
        }
    }
    Ok(())
}

/// Row-major index of an arity-`k` tuple over a universe of size `n`.
pub fn tuple_index(n: usize, tuple: &[usize]) -> usize {
    let mut idx = 0usize;
    for &t in tuple {
        debug_assert!(t < n);
        idx = idx * n + t;
    }
    idx
}

/// Iterator over all arity-`k` tuples in row-major order.
pub fn tuples(n: usize, k: usize) -> TupleIter {
    TupleIter {
        n,
        current: vec![0; k],
        done: n == 0 && k > 0,
        first: true,
    }
}

pub struct TupleIter {
    n: usize,
    current: Vec<usize>,
    done: bool,
    first: bool,
}

impl Iterator for TupleIter {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        if self.done {
            return None;
        }
        if self.first {
            self.first = false;
            return Some(self.current.clone());
        }
        for pos in (0..self.current.len()).rev() {
            if self.current[pos] + 1 < self.n {
                self.current[pos] += 1;
                for p in pos + 1..self.current.len() {
                    self.current[p] = 0;
                }
                return Some(self.current.clone());
            }
        }
        self.done = true;
        None
    }
}

/// A finite continuous metric structure with dense, row-major tables.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContinuousStructure {
    pub signature: ContinuousSignature,
    /// Element names; positions are the internal element indices.
    pub universe: Vec<String>,
    /// `n*n` row-major metric table.
    pub metric: Vec<Rat>,
    /// Per function symbol, `n^arity` table of element indices.
    pub functions: BTreeMap<String, Vec<usize>>,
    /// Per relation symbol, `n^arity` table of values in `[0,1]`.
    pub relations: BTreeMap<String, Vec<Rat>>,
}

impl ContinuousStructure {
    /// Validates tables eagerly: sizes, ranges, and the metric axioms.
    /// Declared moduli are *not* verified here; see
    /// [`check_uniform_continuity`].
    pub fn new(
        signature: ContinuousSignature,
        universe: Vec<String>,
        metric: Vec<Rat>,
        functions: BTreeMap<String, Vec<usize>>,
        relations: BTreeMap<String, Vec<Rat>>,
    ) -> Result<ContinuousStructure, StructureError> {
        let n = universe.len();
        if n == 0 {
            return Err(StructureError::EmptyUniverse);
        }
        let mut seen = BTreeSet::new();
        for e in &universe {
            if !seen.insert(e.clone()) {
                return Err(StructureError::DuplicateElement(e.clone()));
            }
        }
        if metric.len() != n * n {
            return Err(StructureError::TableSize {
                name: "d".to_string(),
                expected: n * n,
                got: metric.len(),
            });
        }
        check_metric(n, &metric).map_err(StructureError::MetricViolation)?;
        for decl in &signature.functions {
            let table = functions
                .get(&decl.name)
                .ok_or_else(|| StructureError::MissingTable(decl.name.clone()))?;
            let expected = n.pow(decl.arity as u32);
            if table.len() != expected {
                return Err(StructureError::TableSize {
                    name: decl.name.clone(),
                    expected,
                    got: table.len(),
                });
            }
            for (i, &v) in table.iter().enumerate() {
                if v >= n {
                    return Err(StructureError::FunctionRangeOutOfBounds {
                        name: decl.name.clone(),
                        index: i,
                    });
                }
            }
        }
        for decl in &signature.relations {
            let table = relations
                .get(&decl.name)
                .ok_or_else(|| StructureError::MissingTable(decl.name.clone()))?;
            let expected = n.pow(decl.arity as u32);
            if table.len() != expected {
                return Err(StructureError::TableSize {
                    name: decl.name.clone(),
                    expected,
                    got: table.len(),
                });
            }
            for (i, v) in table.iter().enumerate() {
                if !in_unit_interval(v) {
                    return Err(StructureError::ValueOutOfRange {
                        name: decl.name.clone(),
                        index: i,
                    });
                }
            }
        }
        Ok(ContinuousStructure {
            signature,
            universe,
            metric,
            functions,
            relations,
        })
    }

    pub fn size(&self) -> usize {
        self.universe.len()
    }

    pub fn dist(&self, a: usize, b: usize) -> &Rat {
        &self.metric[a * self.universe.len() + b]
    }

    pub fn element_index(&self, name: &str) -> Option<usize> {
        self.universe.iter().position(|e| e == name)
    }

    /// Max-coordinate distance between two tuples of equal length.
    pub fn tuple_dist(&self, a: &[usize], b: &[usize]) -> Rat {
        debug_assert_eq!(a.len(), b.len());
        let mut m = rat_zero();
        for (&x, &y) in a.iter().zip(b) {
            m = max_rat(m, self.dist(x, y).clone());
        }
        m
    }
}

/// Variable assignment: names to element indices.
pub type Assignment = BTreeMap<String, usize>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EvalError {
    UnboundVariable(String),
    UnknownSymbol(String),
}

impl fmt::Display for EvalError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EvalError::UnboundVariable(v) => write!(f, "unbound variable: {v}"),
            EvalError::UnknownSymbol(s) => write!(f, "unknown symbol: {s}"),
        }
    }
}

pub fn eval_term(
    t: &Term,
    m: &ContinuousStructure,
    env: &Assignment,
) -> Result<usize, EvalError> {
    match t {
        Term::Var(v) => env
            .get(v)
            .copied()
            .ok_or_else(|| EvalError::UnboundVariable(v.clone())),
        Term::App(f, args) => {
            let table = m
                .functions
                .get(f)
                .ok_or_else(|| EvalError::UnknownSymbol(f.clone()))?;
            let mut tuple = Vec::with_capacity(args.len());
            for a in args {
                tuple.push(eval_term(a, m, env)?);
            }
            Ok(table[tuple_index(m.size(), &tuple)])
        }
    }
}

/// Exact `[0,1]` value of a formula under an assignment of its free
/// variables. `sup`/`inf` are max/min over the finite universe.
pub fn eval(f: &Formula, m: &ContinuousStructure, env: &Assignment) -> Result<Rat, EvalError> {
    match f {
        Formula::Zero => Ok(rat_zero()),
        Formula::One => Ok(rat_one()),
        Formula::Dist(a, b) => {
            let x = eval_term(a, m, env)?;
            let y = eval_term(b, m, env)?;
            Ok(m.dist(x, y).clone())
        }
        Formula::Rel(name, args) => {
            let table = m
                .relations
                .get(name)
                .ok_or_else(|| EvalError::UnknownSymbol(name.clone()))?;
            let mut tuple = Vec::with_capacity(args.len());
            for a in args {
                tuple.push(eval_term(a, m, env)?);
            }
            Ok(table[tuple_index(m.size(), &tuple)].clone())
        }
        Formula::Half(g) => Ok(eval(g, m, env)? / crate::rational::rat(2, 1)),
        Formula::Monus(g, h) => Ok(monus(&eval(g, m, env)?, &eval(h, m, env)?)),
        Formula::Sup(v, g) => {
            let mut best: Option<Rat> = None;
            let mut env2 = env.clone();
            for i in 0..m.size() {
                env2.insert(v.clone(), i);
                let val = eval(g, m, &env2)?;
                best = Some(match best {
                    None => val,
                    Some(b) => max_rat(b, val),
                });
            }
            Ok(best.expect("nonempty universe"))
        }
        Formula::Inf(v, g) => {
            let mut best: Option<Rat> = None;
            let mut env2 = env.clone();
            for i in 0..m.size() {
                env2.insert(v.clone(), i);
                let val = eval(g, m, &env2)?;
                best = Some(match best {
                    None => val,
                    Some(b) => min_rat(b, val),
                });
            }
            Ok(best.expect("nonempty universe"))
        }
    }
}

/// A continuity violation: a relation/function moved more than its declared
/// modulus allows.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContinuityViolation {
    pub symbol: String,
    pub r: Rat,
    pub delta: Rat,
    pub left: Vec<usize>,
    pub right: Vec<usize>,
}

impl fmt::Display for ContinuityViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} violates modulus at r={}: tuples {:?}, {:?} are < {} apart",
            self.symbol,
            crate::rational::format_rat(&self.r),
            self.left,
            self.right,
            crate::rational::format_rat(&self.delta),
        )
    }
}

/// Checks every declared modulus under the strict reading: tuple distance
/// `< delta(r)` implies output difference `<= r` (functions: output
/// distance `<= r`).
pub fn check_uniform_continuity(
    m: &ContinuousStructure,
) -> Result<(), ContinuityViolation> {
    let n = m.size();
    for decl in &m.signature.relations {
        let table = &m.relations[&decl.name];
        for (r, delta) in &decl.modulus.entries {
            for a in tuples(n, decl.arity) {
                for b in tuples(n, decl.arity) {
                    if m.tuple_dist(&a, &b) < *delta {
                        let va = &table[tuple_index(n, &a)];
                        let vb = &table[tuple_index(n, &b)];
                        let diff = if va >= vb { va - vb } else { vb - va };
                        if diff > *r {
                            return Err(ContinuityViolation {
                                symbol: decl.name.clone(),
                                r: r.clone(),
                                delta: delta.clone(),
                                left: a,
                                right: b,
                            });
                        }
                    }
                }
            }
        }
    }
    for decl in &m.signature.functions {
        let table = &m.functions[&decl.name];
        for (r, delta) in &decl.modulus.entries {
            for a in tuples(n, decl.arity) {
                for b in tuples(n, decl.arity) {
                    if m.tuple_dist(&a, &b) < *delta {
                        let fa = table[tuple_index(n, &a)];
                        let fb = table[tuple_index(n, &b)];
                        if m.dist(fa, fb) > r {
                            return Err(ContinuityViolation {
                                symbol: decl.name.clone(),
                                r: r.clone(),
                                delta: delta.clone(),
                                left: a,
                                right: b,
                            });
                        }
                    }
                }
            }
        }
    }
    Ok(())
}

/// A continuous theory: a set of closed conditions `phi = 0`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Theory {
    pub conditions: Vec<Formula>,
}

/// A condition that fails in a structure, with its nonzero value.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TheoryFailure {
    pub condition: Formula,
    pub value: Rat,
}

/// Checks every closed condition evaluates to exactly 0.
pub fn models_theory(
    m: &ContinuousStructure,
    theory: &Theory,
) -> Result<(), TheoryFailure> {
    let env = Assignment::new();
    for cond in &theory.conditions {
        let v = eval(cond, m, &env).expect("closed condition over the signature");
        if !v.is_zero() {
            return Err(TheoryFailure {
                condition: cond.clone(),
                value: v,
            });
        }
    }
    Ok(())
}

/// A reason a substructure embedding is not elementary for a fragment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ElementarityFailure {
    pub formula: Formula,
    pub tuple: Vec<usize>,
    pub sub_value: Rat,
    pub sup_value: Rat,
}

/// Checks whether the inclusion of `sub` into `sup` (given by the element
/// map `embed`: sub index -> sup index) preserves the exact value of every
/// fragment formula at every tuple from the substructure.
pub fn check_phi_elementary(
    sub: &ContinuousStructure,
    sup: &ContinuousStructure,
    embed: &[usize],
    fragment: &Fragment,
) -> Result<(), ElementarityFailure> {
    assert_eq!(embed.len(), sub.size());
    for f in fragment.formulas() {
        let vars = f.free_var_list();
        for tuple in tuples(sub.size(), vars.len()) {
            let env_sub: Assignment = vars
                .iter()
                .cloned()
                .zip(tuple.iter().copied())
                .collect();
            let env_sup: Assignment = vars
                .iter()
                .cloned()
                .zip(tuple.iter().map(|&i| embed[i]))
                .collect();
            let a = eval(f, sub, &env_sub).expect("fragment formula");
            let b = eval(f, sup, &env_sup).expect("fragment formula");
            if a != b {
                return Err(ElementarityFailure {
                    formula: f.clone(),
                    tuple,
                    sub_value: a,
                    sup_value: b,
                });
            }
        }
    }
    Ok(())
}

#[cfg(test)]
pub(crate) mod tests_support {
    use super::*;
    use crate::rational::rat;
    use crate::syntax::{ModulusTable, RelationDecl};
    use alloc::string::ToString;

    /// Two-point structure: d(a,b) = 1/2, P(a) = 0, P(b) = 3/4.
    pub(crate) fn m2() -> ContinuousStructure {
        let modulus = ModulusTable::new(
            [(rat(1, 4), rat(1, 8)), (rat(3, 4), rat(1, 1))]
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
        ContinuousStructure::new(
            sig,
            vec!["a".to_string(), "b".to_string()],
            vec![rat(0, 1), rat(1, 2), rat(1, 2), rat(0, 1)],
            BTreeMap::new(),
            [("P".to_string(), vec![rat(0, 1), rat(3, 4)])]
                .into_iter()
                .collect(),
        )
        .unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::tests_support::m2;
    use super::*;
    use crate::rational::rat;
    use crate::syntax::{parse_formula, ModulusTable};
    use alloc::string::ToString;

    #[test]
    fn eval_oracle_values() {
        let m = m2();
        let sig = &m.signature.clone();
        let env: Assignment = [("x".to_string(), 0usize), ("y".to_string(), 1usize)]
            .into_iter()
            .collect();
        // Hand-computed values on m2.
        for (text, expected) in [
            ("P(x)", rat(0, 1)),
            ("P(y)", rat(3, 4)),
            ("d(x, y)", rat(1, 2)),
            ("monus(P(y), d(x, y))", rat(1, 4)),
            ("monus(d(x, y), P(y))", rat(0, 1)),
            ("half(P(y))", rat(3, 8)),
            ("sup z. P(z)", rat(3, 4)),
            ("inf z. P(z)", rat(0, 1)),
            ("sup z. monus(d(x, z), P(z))", rat(0, 1)),
            ("inf z. monus(P(z), half(1))", rat(0, 1)),
            ("sup z. inf w. d(z, w)", rat(0, 1)),
            ("sup z. sup w. d(z, w)", rat(1, 2)),
        ] {
            let f = parse_formula(text, sig).unwrap();
            assert_eq!(eval(&f, &m, &env).unwrap(), expected, "formula {text}");
        }
    }

    #[test]
    fn metric_validation() {
        // Triangle violation: d(0,2) = 1 > d(0,1) + d(1,2) = 1/2.
        let t = vec![
            rat(0, 1), rat(1, 4), rat(1, 1),
            rat(1, 4), rat(0, 1), rat(1, 4),
            rat(1, 1), rat(1, 4), rat(0, 1),
        ];
        assert_eq!(check_metric(3, &t), Err(MetricViolation::Triangle(0, 1, 2)));

        let asym = vec![rat(0, 1), rat(1, 4), rat(1, 2), rat(0, 1)];
        assert!(matches!(
            check_metric(2, &asym),
            Err(MetricViolation::NotSymmetric(..))
        ));

        let ident = vec![rat(0, 1), rat(0, 1), rat(0, 1), rat(0, 1)];
        assert_eq!(
            check_metric(2, &ident),
            Err(MetricViolation::ZeroOffDiagonal(0, 1))
        );
    }

    #[test]
    fn uniform_continuity_strict() {
        // m2 declares delta(1/4) = 1/8: only pairs strictly closer than 1/8
        // are constrained, so the 1/2-apart pair with |P diff| = 3/4 is fine.
        assert!(check_uniform_continuity(&m2()).is_ok());

        // Tighten: delta(1/4) = 3/4 now constrains the pair at distance 1/2.
        let mut m = m2();
        m.signature.relations[0].modulus = ModulusTable::new(
            [(rat(1, 4), rat(3, 4))].into_iter().collect(),
        )
        .unwrap();
        let err = check_uniform_continuity(&m).unwrap_err();
        assert_eq!(err.symbol, "P");
        assert_eq!(err.r, rat(1, 4));
    }

    #[test]
    fn theory_models() {
        let m = m2();
        let sig = m.signature.clone();
        let holds = parse_formula("inf z. P(z)", &sig).unwrap();
        let fails = parse_formula("sup z. P(z)", &sig).unwrap();
        assert!(models_theory(&m, &Theory { conditions: vec![holds.clone()] }).is_ok());
        let err = models_theory(&m, &Theory { conditions: vec![holds, fails] }).unwrap_err();
        assert_eq!(err.value, rat(3, 4));
    }

    #[test]
    fn tuple_iteration() {
        let all: Vec<_> = tuples(3, 2).collect();
        assert_eq!(all.len(), 9);
        assert_eq!(all[0], vec![0, 0]);
        assert_eq!(all[8], vec![2, 2]);
        assert_eq!(tuple_index(3, &[2, 1]), 7);
        let nullary: Vec<_> = tuples(3, 0).collect();
        assert_eq!(nullary, vec![Vec::<usize>::new()]);
    }

    #[test]
    fn elementarity_check() {
        let sup = m2();
        let sig = sup.signature.clone();
        // {a} alone: quantified formulas change value, atoms do not.
        let sub = ContinuousStructure::new(
            sig.clone(),
            vec!["a".to_string()],
            vec![rat(0, 1)],
            BTreeMap::new(),
            [("P".to_string(), vec![rat(0, 1)])].into_iter().collect(),
        )
        .unwrap();
        let atoms = crate::syntax::fragment_close(
            &[parse_formula("P(x)", &sig).unwrap()],
            4,
            2,
        );
        assert!(check_phi_elementary(&sub, &sup, &[0], &atoms).is_ok());
        let quant = crate::syntax::fragment_close(
            &[parse_formula("sup z. P(z)", &sig).unwrap()],
            4,
            2,
        );
        let err = check_phi_elementary(&sub, &sup, &[0], &quant).unwrap_err();
        assert_eq!(err.sub_value, rat(0, 1));
        assert_eq!(err.sup_value, rat(3, 4));
    }
}
