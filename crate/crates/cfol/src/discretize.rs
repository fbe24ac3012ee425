//! Discrete threshold presentations: the signature fragment of relations
//! `R[phi >= r]` / `R[phi <= r]`, the encoding of a finite continuous
//! structure, and generation/model-checking of the ground axiom instances
//! that make the threshold tables cohere like rational cuts.
//!
//! Axiom schemes fall into four groups: the ordered structure of the reals
//! (1a–1h), formula construction (2a–2k), metric structure (3a–3c), and
//! uniform continuity (4a–4b). Infinitary conjunctions/disjunctions are
//! truncated at the fragment's grid and omega bound; on intensional
//! payloads the limit schemes are decided exactly from the rational value
//! oracle instead.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use num_traits::Zero;

use crate::rational::{in_unit_interval, rat, Rat};
use crate::semantics::{eval, tuple_index, tuples, Assignment, ContinuousStructure, Theory};
use crate::syntax::{print_formula, ContinuousSignature, Formula, Fragment, Term};

/// Threshold direction of a relation symbol `R[phi dir r]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Dir {
    Geq,
    Leq,
}

impl Dir {
    pub fn as_str(self) -> &'static str {
        match self {
            Dir::Geq => "GEQ",
            Dir::Leq => "LEQ",
        }
    }
}

impl fmt::Display for Dir {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Dir::Geq => ">=",
            Dir::Leq => "<=",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DiscretizeError {
    MissingDistanceAtom,
    NotNicelyDense,
    SubsetNotClosed(String),
    ConditionNotInFragment(String),
}

impl fmt::Display for DiscretizeError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DiscretizeError::MissingDistanceAtom => {
                write!(f, "fragment has no distance atom d(x, y)")
            }
            DiscretizeError::NotNicelyDense => {
                write!(f, "subset is not nicely dense (not all of a finite universe, or not function-closed)")
            }
            DiscretizeError::SubsetNotClosed(s) => {
                write!(f, "subset is not closed under function {s}")
            }
            DiscretizeError::ConditionNotInFragment(s) => {
                write!(f, "theory condition not in fragment: {s}")
            }
        }
    }
}

/// The finite slice of the discrete signature: one relation symbol per
/// (fragment formula, grid threshold, direction), plus the base functions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DiscreteSignatureFragment {
    pub signature: ContinuousSignature,
    pub fragment: Fragment,
    /// Index of the distance atom `d(x, y)` within the fragment.
    pub dist_idx: usize,
    var_lists: Vec<Vec<String>>,
}

impl DiscreteSignatureFragment {
    pub fn build(
        signature: ContinuousSignature,
        fragment: Fragment,
    ) -> Result<DiscreteSignatureFragment, DiscretizeError> {
        let dist_idx = fragment
            .formulas()
            .iter()
            .position(|f| matches!(f, Formula::Dist(Term::Var(a), Term::Var(b)) if a != b))
            .ok_or(DiscretizeError::MissingDistanceAtom)?;
        let var_lists = fragment
            .formulas()
            .iter()
            .map(|f| f.free_var_list())
            .collect();
        Ok(DiscreteSignatureFragment {
            signature,
            fragment,
            dist_idx,
            var_lists,
        })
    }

    pub fn formula(&self, idx: usize) -> &Formula {
        &self.fragment.formulas()[idx]
    }

    pub fn formula_count(&self) -> usize {
        self.fragment.formulas().len()
    }

    /// Free-variable list (canonical order) of a fragment formula; its
    /// length is the arity of the induced relation symbols.
    pub fn vars(&self, idx: usize) -> &[String] {
        &self.var_lists[idx]
    }

    pub fn arity(&self, idx: usize) -> usize {
        self.var_lists[idx].len()
    }

    pub fn grid_points(&self) -> u32 {
        self.fragment.grid.l + 1
    }

    /// Total number of threshold relation symbols.
    pub fn rel_symbol_count(&self) -> usize {
        self.formula_count() * self.grid_points() as usize * 2
    }

    /// Relation symbols in canonical order: formula, then grid index, then
    /// GEQ before LEQ.
    pub fn symbols(&self) -> impl Iterator<Item = (usize, u32, Dir)> + '_ {
        (0..self.formula_count()).flat_map(move |f| {
            self.fragment.grid.points().flat_map(move |gi| {
                [(f, gi, Dir::Geq), (f, gi, Dir::Leq)].into_iter()
            })
        })
    }

    pub fn symbol_name(&self, f: usize, gi: u32, dir: Dir) -> String {
        format!(
            "R[{} {} {}]",
            print_formula(self.formula(f)),
            dir,
            crate::rational::format_rat(&self.fragment.grid.value(gi))
        )
    }
}

pub fn build_signature_fragment(
    sig: &ContinuousSignature,
    frag: &Fragment,
) -> Result<DiscreteSignatureFragment, DiscretizeError> {
    DiscreteSignatureFragment::build(sig.clone(), frag.clone())
}

/// Payload of a discrete structure: either the rational value of every
/// fragment formula at every tuple (the intensional oracle, `[formula]
/// [tuple]`), or materialized truth tables (`[formula][(gi*2+dir)*tc + t]`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Payload {
    Intensional(Vec<Vec<Rat>>),
    Extensional(Vec<Vec<bool>>),
}

/// A discrete structure over a [`DiscreteSignatureFragment`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DiscreteStructure {
    pub dsig: DiscreteSignatureFragment,
    pub universe: Vec<String>,
    pub func_tables: BTreeMap<String, Vec<usize>>,
    pub payload: Payload,
}

impl DiscreteStructure {
    pub fn size(&self) -> usize {
        self.universe.len()
    }

    pub fn is_intensional(&self) -> bool {
        matches!(self.payload, Payload::Intensional(_))
    }

    pub fn tuple_count(&self, f: usize) -> usize {
        self.universe.len().pow(self.dsig.arity(f) as u32)
    }

    /// Oracle value of a fragment formula at a flat tuple index
    /// (intensional payloads only).
    pub fn value(&self, f: usize, t: usize) -> Option<&Rat> {
        match &self.payload {
            Payload::Intensional(v) => Some(&v[f][t]),
            Payload::Extensional(_) => None,
        }
    }

    /// Membership of the tuple in `R[formula dir grid(gi)]`.
    pub fn truth(&self, f: usize, gi: u32, dir: Dir, t: usize) -> bool {
        match &self.payload {
            Payload::Intensional(v) => {
                let r = self.dsig.fragment.grid.value(gi);
                match dir {
                    Dir::Geq => v[f][t] >= r,
                    Dir::Leq => v[f][t] <= r,
                }
            }
            Payload::Extensional(tables) => {
                let tc = self.tuple_count(f);
                tables[f][(gi as usize * 2 + dir as usize) * tc + t]
            }
        }
    }

    /// Flips one truth bit of an extensional payload (mutation testing).
    pub fn flip_truth(&mut self, f: usize, gi: u32, dir: Dir, t: usize) {
        let tc = self.tuple_count(f);
        match &mut self.payload {
            Payload::Extensional(tables) => {
                let slot = &mut tables[f][(gi as usize * 2 + dir as usize) * tc + t];
                *slot = !*slot;
            }
            Payload::Intensional(_) => panic!("cannot flip bits of an intensional payload"),
        }
    }

    fn element_names(&self, k: usize, t: usize) -> String {
        let coords = decode_tuple(self.size(), k, t);
        let names: Vec<&str> = coords.iter().map(|&i| self.universe[i].as_str()).collect();
        names.join(",")
    }

    fn literal(&self, f: usize, gi: u32, dir: Dir, t: usize) -> String {
        format!(
            "{}({})",
            self.dsig.symbol_name(f, gi, dir),
            self.element_names(self.dsig.arity(f), t)
        )
    }
}

/// Flat tuple index -> coordinates (row-major, most significant first).
pub fn decode_tuple(n: usize, k: usize, mut t: usize) -> Vec<usize> {
    let mut out = vec![0usize; k];
    for pos in (0..k).rev() {
        out[pos] = t % n;
        t /= n;
    }
    out
}

/// Is `a` nicely dense in `m`? For a finite structure this means `a` is the
/// whole universe (the only metrically dense subset) and is closed under
/// the function tables (trivially true for the whole universe, checked
/// anyway for generality).
pub fn check_nicely_dense(m: &ContinuousStructure, a: &[usize]) -> bool {
    let set: BTreeSet<usize> = a.iter().copied().collect();
    if set.len() != a.len() || a.iter().any(|&i| i >= m.size()) {
        return false;
    }
    if set.len() != m.size() {
        return false;
    }
    for decl in &m.signature.functions {
        let table = &m.functions[&decl.name];
        for tuple in tuples(m.size(), decl.arity) {
            if tuple.iter().all(|i| set.contains(i))
                && !set.contains(&table[tuple_index(m.size(), &tuple)])
            {
                return false;
            }
        }
    }
    true
}

/// Encodes `(M, A)` as the intensional discrete structure whose oracle
/// records the exact value of every fragment formula at every `A`-tuple.
pub fn encode(
    m: &ContinuousStructure,
    a: &[usize],
    dsig: &DiscreteSignatureFragment,
) -> Result<DiscreteStructure, DiscretizeError> {
    if !check_nicely_dense(m, a) {
        return Err(DiscretizeError::NotNicelyDense);
    }
    let mut a = a.to_vec();
    a.sort_unstable();
    let n = a.len();
    let universe: Vec<String> = a.iter().map(|&i| m.universe[i].clone()).collect();
    // Position of an original element index within A.
    let back: BTreeMap<usize, usize> = a.iter().enumerate().map(|(p, &i)| (i, p)).collect();
    let mut func_tables = BTreeMap::new();
    for decl in &m.signature.functions {
        let src = &m.functions[&decl.name];
        let mut table = Vec::with_capacity(n.pow(decl.arity as u32));
        for tuple in tuples(n, decl.arity) {
            let orig: Vec<usize> = tuple.iter().map(|&p| a[p]).collect();
            table.push(back[&src[tuple_index(m.size(), &orig)]]);
        }
        func_tables.insert(decl.name.clone(), table);
    }
    let mut values = Vec::with_capacity(dsig.formula_count());
    for (f, formula) in dsig.fragment.formulas().iter().enumerate() {
        let vars = dsig.vars(f);
        let mut col = Vec::with_capacity(n.pow(vars.len() as u32));
        for tuple in tuples(n, vars.len()) {
            let env: Assignment = vars
                .iter()
                .cloned()
                .zip(tuple.iter().map(|&p| a[p]))
                .collect();
            col.push(eval(formula, m, &env).expect("fragment formula over signature"));
        }
        values.push(col);
    }
    Ok(DiscreteStructure {
        dsig: dsig.clone(),
        universe,
        func_tables,
        payload: Payload::Intensional(values),
    })
}

/// Thresholds an intensional payload into full truth tables; the identity
/// on extensional payloads.
pub fn materialize(d: &DiscreteStructure) -> DiscreteStructure {
    match &d.payload {
        Payload::Extensional(_) => d.clone(),
        Payload::Intensional(values) => {
            let grid = &d.dsig.fragment.grid;
            let mut tables = Vec::with_capacity(values.len());
            for (f, col) in values.iter().enumerate() {
                let tc = d.tuple_count(f);
                debug_assert_eq!(tc, col.len());
                let mut bits = vec![false; (grid.l as usize + 1) * 2 * tc];
                for gi in grid.points() {
                    let r = grid.value(gi);
                    for (t, v) in col.iter().enumerate() {
                        bits[(gi as usize * 2 + Dir::Geq as usize) * tc + t] = *v >= r;
                        bits[(gi as usize * 2 + Dir::Leq as usize) * tc + t] = *v <= r;
                    }
                }
                tables.push(bits);
            }
            DiscreteStructure {
                dsig: d.dsig.clone(),
                universe: d.universe.clone(),
                func_tables: d.func_tables.clone(),
                payload: Payload::Extensional(tables),
            }
        }
    }
}

/// Restricts an extensional discrete structure to a function-closed subset
/// of its universe (the induced discrete substructure).
pub fn restrict_structure(
    d: &DiscreteStructure,
    elems: &[usize],
) -> Result<DiscreteStructure, DiscretizeError> {
    let mut elems = elems.to_vec();
    elems.sort_unstable();
    elems.dedup();
    assert!(elems.iter().all(|&e| e < d.size()), "element out of range");
    let n_old = d.size();
    let n = elems.len();
    let back: BTreeMap<usize, usize> = elems.iter().enumerate().map(|(p, &e)| (e, p)).collect();
    let mut func_tables = BTreeMap::new();
    for decl in &d.dsig.signature.functions {
        let src = &d.func_tables[&decl.name];
        let mut table = Vec::with_capacity(n.pow(decl.arity as u32));
        for tuple in tuples(n, decl.arity) {
            let orig: Vec<usize> = tuple.iter().map(|&p| elems[p]).collect();
            let img = src[tuple_index(n_old, &orig)];
            let mapped = *back
                .get(&img)
                .ok_or_else(|| DiscretizeError::SubsetNotClosed(decl.name.clone()))?;
            table.push(mapped);
        }
        func_tables.insert(decl.name.clone(), table);
    }
    let grid = d.dsig.fragment.grid;
    let payload = match &d.payload {
        Payload::Intensional(values) => {
            let mut out = Vec::with_capacity(values.len());
            for (f, col) in values.iter().enumerate() {
                let k = d.dsig.arity(f);
                let mut sub = Vec::with_capacity(n.pow(k as u32));
                for tuple in tuples(n, k) {
                    let orig: Vec<usize> = tuple.iter().map(|&p| elems[p]).collect();
                    sub.push(col[tuple_index(n_old, &orig)].clone());
                }
                out.push(sub);
            }
            Payload::Intensional(out)
        }
        Payload::Extensional(tables) => {
            let mut out = Vec::with_capacity(tables.len());
            for (f, bits) in tables.iter().enumerate() {
                let k = d.dsig.arity(f);
                let tc_old = n_old.pow(k as u32);
                let tc_new = n.pow(k as u32);
                let mut sub = vec![false; (grid.l as usize + 1) * 2 * tc_new];
                for gi in grid.points() {
                    for dir in [Dir::Geq, Dir::Leq] {
                        for (t, tuple) in tuples(n, k).enumerate() {
                            let orig: Vec<usize> = tuple.iter().map(|&p| elems[p]).collect();
                            sub[(gi as usize * 2 + dir as usize) * tc_new + t] = bits
                                [(gi as usize * 2 + dir as usize) * tc_old
                                    + tuple_index(n_old, &orig)];
                        }
                    }
                }
                out.push(sub);
            }
            Payload::Extensional(out)
        }
    };
    Ok(DiscreteStructure {
        dsig: d.dsig.clone(),
        universe: elems.iter().map(|&e| d.universe[e].clone()).collect(),
        func_tables,
        payload,
    })
}

/// Axiom scheme identifiers, in the order of the axiom list.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum SchemeId {
    O1a, O1b, O1c, O1d, O1e, O1f, O1g, O1h,
    C2a, C2b, C2c, C2d, C2e, C2f, C2g, C2h, C2i, C2j, C2k,
    M3a, M3b, M3c,
    U4a, U4b,
    TStar,
}

impl SchemeId {
    pub const TDENSE: [SchemeId; 24] = [
        SchemeId::O1a, SchemeId::O1b, SchemeId::O1c, SchemeId::O1d,
        SchemeId::O1e, SchemeId::O1f, SchemeId::O1g, SchemeId::O1h,
        SchemeId::C2a, SchemeId::C2b, SchemeId::C2c, SchemeId::C2d,
        SchemeId::C2e, SchemeId::C2f, SchemeId::C2g, SchemeId::C2h,
        SchemeId::C2i, SchemeId::C2j, SchemeId::C2k,
        SchemeId::M3a, SchemeId::M3b, SchemeId::M3c,
        SchemeId::U4a, SchemeId::U4b,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SchemeId::O1a => "1(a)", SchemeId::O1b => "1(b)", SchemeId::O1c => "1(c)",
            SchemeId::O1d => "1(d)", SchemeId::O1e => "1(e)", SchemeId::O1f => "1(f)",
            SchemeId::O1g => "1(g)", SchemeId::O1h => "1(h)",
            SchemeId::C2a => "2(a)", SchemeId::C2b => "2(b)", SchemeId::C2c => "2(c)",
            SchemeId::C2d => "2(d)", SchemeId::C2e => "2(e)", SchemeId::C2f => "2(f)",
            SchemeId::C2g => "2(g)", SchemeId::C2h => "2(h)", SchemeId::C2i => "2(i)",
            SchemeId::C2j => "2(j)", SchemeId::C2k => "2(k)",
            SchemeId::M3a => "3(a)", SchemeId::M3b => "3(b)", SchemeId::M3c => "3(c)",
            SchemeId::U4a => "4(a)", SchemeId::U4b => "4(b)",
            SchemeId::TStar => "T*",
        }
    }
}

impl fmt::Display for SchemeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// How a scheme's verdict was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// The ground body is a faithful finite rendering of the axiom.
    Exact,
    /// Infinitary parts were truncated at the grid / omega bound.
    Truncated,
    /// Decided exactly from the intensional rational value oracle.
    OracleExact,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Exact => "exact",
            Mode::Truncated => "truncated",
            Mode::OracleExact => "oracle-exact",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Verification mode of a scheme given the payload kind.
pub fn scheme_mode(scheme: SchemeId, intensional: bool) -> Mode {
    use SchemeId::*;
    match scheme {
        O1a | O1b | O1c | O1d | O1e | C2a | C2b | C2c | C2d | C2k | M3a | M3b | U4a
        | U4b | TStar => Mode::Exact,
        O1f | O1g | O1h | C2g | C2h | C2i | C2j => {
            if intensional {
                Mode::OracleExact
            } else {
                Mode::Truncated
            }
        }
        C2e | C2f | M3c => Mode::Truncated,
    }
}

/// One ground axiom instance. Formulas, thresholds, and tuples are stored
/// as fragment/grid/flat-tuple indices; bodies are rendered on demand.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AxiomInstance {
    /// `!R[phi>=r](t) -> R[phi<=r](t)`
    O1a { f: u32, gi: u32, t: u32 },
    /// `!R[phi<=r](t) -> R[phi>=r](t)`
    O1b { f: u32, gi: u32, t: u32 },
    /// `r > s`: `!R[phi>=r](t) | !R[phi<=s](t)`
    O1c { f: u32, r: u32, s: u32, t: u32 },
    /// `r >= s`: `R[phi<=s] -> R[phi<=r]` and `R[phi>=r] -> R[phi>=s]`
    O1d { f: u32, r: u32, s: u32, t: u32 },
    /// `R[phi>=r](t) | R[phi<=r](t)`
    O1e { f: u32, gi: u32, t: u32 },
    /// `AND_n OR_{|r-s|<1/n} R[phi<=r](t) & R[phi>=s](t)`
    O1f { f: u32, t: u32 },
    /// `(AND_n R[phi>=r-1/n](t)) -> R[phi>=r](t)`
    O1g { f: u32, gi: u32, t: u32 },
    /// `(AND_n R[phi<=r+1/n](t)) -> R[phi<=r](t)`
    O1h { f: u32, gi: u32, t: u32 },
    /// `R[phi>=0](t) & R[phi<=1](t)`
    C2a { f: u32, t: u32 },
    /// `t > 0`: `!R[0>=t] & !R[1<=1-t]`
    C2b { gi: u32, zero: u32, one: u32 },
    /// `R[half(phi)>=r] <-> R[phi>=2r]`
    C2c { h: u32, f: u32, gi: u32, t: u32 },
    /// `R[half(phi)<=r] <-> R[phi<=2r]`
    C2d { h: u32, f: u32, gi: u32, t: u32 },
    /// `R[phi-.psi>=r] <-> OR_s (R[psi<=s] & R[phi>=r+s])`
    C2e { m: u32, f: u32, g: u32, gi: u32, tm: u32, tf: u32, tg: u32 },
    /// `R[phi-.psi<=r] <-> AND_s (R[psi<=s] -> R[phi<=r+s])`
    C2f { m: u32, f: u32, g: u32, gi: u32, tm: u32, tf: u32, tg: u32 },
    /// `R[sup psi<=r](t) <-> forall a R[psi<=r](..a..)`
    C2g { q: u32, b: u32, gi: u32, t: u32, base: u32, stride: u32 },
    /// `R[sup psi>=r](t) <-> AND_n exists a R[psi>=r-1/n](..a..)`
    C2h { q: u32, b: u32, gi: u32, t: u32, base: u32, stride: u32 },
    /// `R[inf psi<=r](t) <-> AND_n exists a R[psi<=r+1/n](..a..)`
    C2i { q: u32, b: u32, gi: u32, t: u32, base: u32, stride: u32 },
    /// `R[inf psi>=r](t) <-> forall a R[psi>=r](..a..)`
    C2j { q: u32, b: u32, gi: u32, t: u32, base: u32, stride: u32 },
    /// Term reduction: `R[phi[y:=F(u)] dir r](t_psi) <-> R[phi dir r](t_phi)`
    C2k { psi: u32, phi: u32, gi: u32, dir: Dir, t_psi: u32, t_phi: u32 },
    /// `R[d<=0](a,b) <-> a == b`
    M3a { a: u32, b: u32 },
    /// `R[d dir r](a,b) <-> R[d dir r](b,a)`
    M3b { gi: u32, dir: Dir, a: u32, b: u32 },
    /// `R[d>=r](a,b) -> OR_{s<=r} R[d>=s](a,c) & R[d>=r-s](c,b)`
    M3c { gi: u32, a: u32, b: u32, c: u32 },
    /// `AND_i R[d<=s](a_i,b_i) -> R[d<=r](F(a),F(b))`
    U4a { r: u32, s: u32, pairs: Vec<(u32, u32)>, fa: u32, fb: u32 },
    /// `AND_i R[d<=s](a_i,b_i) -> R[uc<=r](a,b) & R[uc<=r](b,a)`
    U4b { uc: u32, r: u32, s: u32, pairs: Vec<(u32, u32)>, t_ab: u32, t_ba: u32 },
    /// `R[phi<=0]()` for a theory condition `phi = 0`
    TStar { f: u32 },
}

impl AxiomInstance {
    pub fn scheme(&self) -> SchemeId {
        match self {
            AxiomInstance::O1a { .. } => SchemeId::O1a,
            AxiomInstance::O1b { .. } => SchemeId::O1b,
            AxiomInstance::O1c { .. } => SchemeId::O1c,
            AxiomInstance::O1d { .. } => SchemeId::O1d,
            AxiomInstance::O1e { .. } => SchemeId::O1e,
            AxiomInstance::O1f { .. } => SchemeId::O1f,
            AxiomInstance::O1g { .. } => SchemeId::O1g,
            AxiomInstance::O1h { .. } => SchemeId::O1h,
            AxiomInstance::C2a { .. } => SchemeId::C2a,
            AxiomInstance::C2b { .. } => SchemeId::C2b,
            AxiomInstance::C2c { .. } => SchemeId::C2c,
            AxiomInstance::C2d { .. } => SchemeId::C2d,
            AxiomInstance::C2e { .. } => SchemeId::C2e,
            AxiomInstance::C2f { .. } => SchemeId::C2f,
            AxiomInstance::C2g { .. } => SchemeId::C2g,
            AxiomInstance::C2h { .. } => SchemeId::C2h,
            AxiomInstance::C2i { .. } => SchemeId::C2i,
            AxiomInstance::C2j { .. } => SchemeId::C2j,
            AxiomInstance::C2k { .. } => SchemeId::C2k,
            AxiomInstance::M3a { .. } => SchemeId::M3a,
            AxiomInstance::M3b { .. } => SchemeId::M3b,
            AxiomInstance::M3c { .. } => SchemeId::M3c,
            AxiomInstance::U4a { .. } => SchemeId::U4a,
            AxiomInstance::U4b { .. } => SchemeId::U4b,
            AxiomInstance::TStar { .. } => SchemeId::TStar,
        }
    }

    /// Fragment formulas whose truth tables the instance reads. Used to
    /// index instances by relevance for targeted re-checking.
    pub fn formulas_read(&self, dist_idx: usize) -> Vec<usize> {
        match self {
            AxiomInstance::O1a { f, .. }
            | AxiomInstance::O1b { f, .. }
            | AxiomInstance::O1c { f, .. }
            | AxiomInstance::O1d { f, .. }
            | AxiomInstance::O1e { f, .. }
            | AxiomInstance::O1f { f, .. }
            | AxiomInstance::O1g { f, .. }
            | AxiomInstance::O1h { f, .. }
            | AxiomInstance::C2a { f, .. }
            | AxiomInstance::TStar { f } => vec![*f as usize],
            AxiomInstance::C2b { zero, one, .. } => vec![*zero as usize, *one as usize],
            AxiomInstance::C2c { h, f, .. } | AxiomInstance::C2d { h, f, .. } => {
                vec![*h as usize, *f as usize]
            }
            AxiomInstance::C2e { m, f, g, .. } | AxiomInstance::C2f { m, f, g, .. } => {
                vec![*m as usize, *f as usize, *g as usize]
            }
            AxiomInstance::C2g { q, b, .. }
            | AxiomInstance::C2h { q, b, .. }
            | AxiomInstance::C2i { q, b, .. }
            | AxiomInstance::C2j { q, b, .. } => vec![*q as usize, *b as usize],
            AxiomInstance::C2k { psi, phi, .. } => vec![*psi as usize, *phi as usize],
            AxiomInstance::M3a { .. }
            | AxiomInstance::M3b { .. }
            | AxiomInstance::M3c { .. }
            | AxiomInstance::U4a { .. } => vec![dist_idx],
            AxiomInstance::U4b { uc, .. } => vec![dist_idx, *uc as usize],
        }
    }
}

/// Generated ground theory: instances in deterministic order plus per-
/// scheme counts of instances that had to be skipped because the fragment
/// lacks a required symbol.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct GeneratedTheory {
    pub instances: Vec<AxiomInstance>,
    pub skipped: BTreeMap<SchemeId, u64>,
}

struct Gen<'a> {
    ds: &'a DiscreteSignatureFragment,
    n: usize,
    funcs: &'a BTreeMap<String, Vec<usize>>,
    out: GeneratedTheory,
}

impl<'a> Gen<'a> {
    fn l(&self) -> u32 {
        self.ds.fragment.grid.l
    }

    fn tc(&self, f: usize) -> usize {
        self.n.pow(self.ds.arity(f) as u32)
    }

    fn skip(&mut self, scheme: SchemeId, count: u64) {
        *self.out.skipped.entry(scheme).or_insert(0) += count;
    }

    fn push(&mut self, inst: AxiomInstance) {
        self.out.instances.push(inst);
    }

    fn group1(&mut self) {
        let l = self.l();
        // 1(a), 1(b), 1(e): totality of the threshold cut.
        for f in 0..self.ds.formula_count() {
            for gi in 0..=l {
                for t in 0..self.tc(f) as u32 {
                    self.push(AxiomInstance::O1a { f: f as u32, gi, t });
                }
            }
        }
        for f in 0..self.ds.formula_count() {
            for gi in 0..=l {
                for t in 0..self.tc(f) as u32 {
                    self.push(AxiomInstance::O1b { f: f as u32, gi, t });
                }
            }
        }
        // 1(c): disjointness above/below.
        for f in 0..self.ds.formula_count() {
            for r in 1..=l {
                for s in 0..r {
                    for t in 0..self.tc(f) as u32 {
                        self.push(AxiomInstance::O1c { f: f as u32, r, s, t });
                    }
                }
            }
        }
        // 1(d): monotonicity in the threshold.
        for f in 0..self.ds.formula_count() {
            for r in 0..=l {
                for s in 0..=r {
                    for t in 0..self.tc(f) as u32 {
                        self.push(AxiomInstance::O1d { f: f as u32, r, s, t });
                    }
                }
            }
        }
        for f in 0..self.ds.formula_count() {
            for gi in 0..=l {
                for t in 0..self.tc(f) as u32 {
                    self.push(AxiomInstance::O1e { f: f as u32, gi, t });
                }
            }
        }
        // 1(f): the cut has no gap wider than any 1/n.
        for f in 0..self.ds.formula_count() {
            for t in 0..self.tc(f) as u32 {
                self.push(AxiomInstance::O1f { f: f as u32, t });
            }
        }
        // 1(g)/1(h): the cut is closed from the left/right.
        for f in 0..self.ds.formula_count() {
            for gi in 0..=l {
                for t in 0..self.tc(f) as u32 {
                    self.push(AxiomInstance::O1g { f: f as u32, gi, t });
                }
            }
        }
        for f in 0..self.ds.formula_count() {
            for gi in 0..=l {
                for t in 0..self.tc(f) as u32 {
                    self.push(AxiomInstance::O1h { f: f as u32, gi, t });
                }
            }
        }
    }

    fn group2(&mut self) {
        let l = self.l();
        // 2(a): values lie in [0,1].
        for f in 0..self.ds.formula_count() {
            for t in 0..self.tc(f) as u32 {
                self.push(AxiomInstance::C2a { f: f as u32, t });
            }
        }
        // 2(b): the constants are 0 and 1.
        let zero = self.ds.fragment.index_of(&Formula::Zero);
        let one = self.ds.fragment.index_of(&Formula::One);
        match (zero, one) {
            (Some(z), Some(o)) => {
                for gi in 1..=l {
                    self.push(AxiomInstance::C2b {
                        gi,
                        zero: z as u32,
                        one: o as u32,
                    });
                }
            }
            _ => self.skip(SchemeId::C2b, l as u64),
        }
        // 2(c)/2(d): halving doubles the threshold.
        let halves: Vec<(usize, usize)> = self
            .ds
            .fragment
            .formulas()
            .iter()
            .enumerate()
            .filter_map(|(i, h)| match h {
                Formula::Half(inner) => {
                    Some((i, self.ds.fragment.index_of(inner).expect("closed fragment")))
                }
                _ => None,
            })
            .collect();
        for &(h, f) in &halves {
            for gi in 0..=l {
                for t in 0..self.tc(h) as u32 {
                    self.push(AxiomInstance::C2c { h: h as u32, f: f as u32, gi, t });
                }
            }
        }
        for &(h, f) in &halves {
            for gi in 0..=l {
                for t in 0..self.tc(h) as u32 {
                    self.push(AxiomInstance::C2d { h: h as u32, f: f as u32, gi, t });
                }
            }
        }
        // 2(e)/2(f): monus via threshold shifts.
        let monuses: Vec<(usize, usize, usize)> = self
            .ds
            .fragment
            .formulas()
            .iter()
            .enumerate()
            .filter_map(|(i, m)| match m {
                Formula::Monus(a, b) => Some((
                    i,
                    self.ds.fragment.index_of(a).expect("closed fragment"),
                    self.ds.fragment.index_of(b).expect("closed fragment"),
                )),
                _ => None,
            })
            .collect();
        for &(m, f, g) in &monuses {
            let proj_f = projection(self.ds.vars(m), self.ds.vars(f));
            let proj_g = projection(self.ds.vars(m), self.ds.vars(g));
            // The r = 0 instance of 2(e) asserts the two cut-sets meet,
            // which is refutable only when the operand value is forced to a
            // grid point; that holds when both operands are the same
            // formula at the same tuple. Off that diagonal the r = 0
            // instance can fail on faithful encodings, so it is not emitted.
            for gi in 0..=l {
                for tm in 0..self.tc(m) {
                    let coords = decode_tuple(self.n, self.ds.arity(m), tm);
                    let tf = project_index(self.n, &coords, &proj_f);
                    let tg = project_index(self.n, &coords, &proj_g);
                    if gi == 0 && !(f == g && tf == tg) {
                        continue;
                    }
                    self.push(AxiomInstance::C2e {
                        m: m as u32,
                        f: f as u32,
                        g: g as u32,
                        gi,
                        tm: tm as u32,
                        tf: tf as u32,
                        tg: tg as u32,
                    });
                }
            }
            for gi in 0..=l {
                for tm in 0..self.tc(m) {
                    let coords = decode_tuple(self.n, self.ds.arity(m), tm);
                    let tf = project_index(self.n, &coords, &proj_f);
                    let tg = project_index(self.n, &coords, &proj_g);
                    self.push(AxiomInstance::C2f {
                        m: m as u32,
                        f: f as u32,
                        g: g as u32,
                        gi,
                        tm: tm as u32,
                        tf: tf as u32,
                        tg: tg as u32,
                    });
                }
            }
        }
        // 2(g)-2(j): quantifiers as universe sweeps.
        for (q, formula) in self.ds.fragment.formulas().iter().enumerate() {
            let (v, body, is_sup) = match formula {
                Formula::Sup(v, b) => (v, b, true),
                Formula::Inf(v, b) => (v, b, false),
                _ => continue,
            };
            let b = self.ds.fragment.index_of(body).expect("closed fragment");
            for gi in 0..=l {
                for t in 0..self.tc(q) {
                    let (base, stride) =
                        quant_layout(self.n, self.ds.vars(q), self.ds.vars(b), v, t);
                    let (qi, bi, gi, ti) = (q as u32, b as u32, gi, t as u32);
                    if is_sup {
                        self.push(AxiomInstance::C2g { q: qi, b: bi, gi, t: ti, base, stride });
                        self.push(AxiomInstance::C2h { q: qi, b: bi, gi, t: ti, base, stride });
                    } else {
                        self.push(AxiomInstance::C2i { q: qi, b: bi, gi, t: ti, base, stride });
                        self.push(AxiomInstance::C2j { q: qi, b: bi, gi, t: ti, base, stride });
                    }
                }
            }
        }
        // 2(k): term reduction for depth-1 terms F(u...).
        self.group2k();
    }

    fn group2k(&mut self) {
        let l = self.l();
        let decls = self.ds.signature.functions.clone();
        for phi in 0..self.ds.formula_count() {
            let phi_vars: Vec<String> = self.ds.vars(phi).to_vec();
            for y in &phi_vars {
                for decl in &decls {
                    let mut args = Vec::with_capacity(decl.arity);
                    let mut j = 0usize;
                    while args.len() < decl.arity {
                        let cand = format!("u{j}");
                        j += 1;
                        if !phi_vars.contains(&cand) {
                            args.push(Term::Var(cand));
                        }
                    }
                    let term = Term::App(decl.name.clone(), args);
                    let psi_formula = self.ds.formula(phi).subst(y, &term);
                    let psi = match self.ds.fragment.index_of(&psi_formula) {
                        Some(i) => i,
                        None => {
                            let tc = self.n.pow(psi_formula.free_vars().len() as u32) as u64;
                            self.skip(SchemeId::C2k, (l as u64 + 1) * 2 * tc);
                            continue;
                        }
                    };
                    let psi_vars: Vec<String> = self.ds.vars(psi).to_vec();
                    let table = &self.funcs[&decl.name];
                    // Positions of the fresh term arguments within psi's
                    // variable list.
                    let Term::App(_, fresh_args) = &term else { unreachable!() };
                    let term_args: Vec<usize> = fresh_args
                        .iter()
                        .map(|a| {
                            let Term::Var(v) = a else { unreachable!() };
                            psi_vars.iter().position(|w| w == v).expect("fresh var free")
                        })
                        .collect();
                    let mut insts = Vec::new();
                    for t_psi in 0..self.n.pow(psi_vars.len() as u32) {
                        let coords = decode_tuple(self.n, psi_vars.len(), t_psi);
                        let arg_tuple: Vec<usize> =
                            term_args.iter().map(|&p| coords[p]).collect();
                        let e = table[tuple_index(self.n, &arg_tuple)];
                        let phi_coords: Vec<usize> = phi_vars
                            .iter()
                            .map(|w| {
                                if w == y {
                                    e
                                } else {
                                    coords[psi_vars
                                        .iter()
                                        .position(|p| p == w)
                                        .expect("shared variable")]
                                }
                            })
                            .collect();
                        let t_phi = tuple_index(self.n, &phi_coords);
                        for gi in 0..=l {
                            for dir in [Dir::Geq, Dir::Leq] {
                                insts.push(AxiomInstance::C2k {
                                    psi: psi as u32,
                                    phi: phi as u32,
                                    gi,
                                    dir,
                                    t_psi: t_psi as u32,
                                    t_phi: t_phi as u32,
                                });
                            }
                        }
                    }
                    self.out.instances.extend(insts);
                }
            }
        }
    }

    fn group3(&mut self) {
        let l = self.l();
        let n = self.n as u32;
        for a in 0..n {
            for b in 0..n {
                self.push(AxiomInstance::M3a { a, b });
            }
        }
        for gi in 0..=l {
            for dir in [Dir::Geq, Dir::Leq] {
                for a in 0..n {
                    for b in 0..n {
                        self.push(AxiomInstance::M3b { gi, dir, a, b });
                    }
                }
            }
        }
        for gi in 0..=l {
            for a in 0..n {
                for b in 0..n {
                    for c in 0..n {
                        self.push(AxiomInstance::M3c { gi, a, b, c });
                    }
                }
            }
        }
    }

    fn group4(&mut self) {
        let grid = self.ds.fragment.grid;
        for decl in &self.ds.signature.functions.clone() {
            let table = &self.funcs[&decl.name];
            for (r, delta) in &decl.modulus.entries {
                let s_count = grid.points().filter(|&s| grid.value(s) < *delta).count();
                if !grid.contains(r) {
                    let pairs = (self.n.pow(decl.arity as u32)).pow(2) as u64;
                    self.skip(SchemeId::U4a, s_count as u64 * pairs);
                    continue;
                }
                let r = grid.floor_index(r);
                for s in grid.points() {
                    if grid.value(s) >= *delta {
                        continue;
                    }
                    for ta in tuples(self.n, decl.arity) {
                        for tb in tuples(self.n, decl.arity) {
                            let fa = table[tuple_index(self.n, &ta)] as u32;
                            let fb = table[tuple_index(self.n, &tb)] as u32;
                            let pairs = ta
                                .iter()
                                .zip(&tb)
                                .map(|(&x, &y)| (x as u32, y as u32))
                                .collect();
                            self.push(AxiomInstance::U4a { r, s, pairs, fa, fb });
                        }
                    }
                }
            }
        }
        for decl in &self.ds.signature.relations.clone() {
            let uc_formula = crate::syntax::uc_monus_formula(decl);
            let uc = self.ds.fragment.index_of(&uc_formula);
            for (r, delta) in &decl.modulus.entries {
                let s_count = grid.points().filter(|&s| grid.value(s) < *delta).count() as u64;
                let pairs_count = (self.n.pow(decl.arity as u32)).pow(2) as u64;
                let (uc, r) = match (uc, grid.contains(r)) {
                    (Some(uc), true) => (uc, grid.floor_index(r)),
                    _ => {
                        self.skip(SchemeId::U4b, s_count * pairs_count);
                        continue;
                    }
                };
                // Map (a-tuple, b-tuple) to the uc formula's argument order.
                let Formula::Monus(left, right) = &uc_formula else { unreachable!() };
                let (Formula::Rel(_, largs), Formula::Rel(_, rargs)) =
                    (left.as_ref(), right.as_ref())
                else {
                    unreachable!()
                };
                let uc_vars = self.ds.vars(uc);
                for s in grid.points() {
                    if grid.value(s) >= *delta {
                        continue;
                    }
                    for ta in tuples(self.n, decl.arity) {
                        for tb in tuples(self.n, decl.arity) {
                            let t_ab = uc_tuple(self.n, uc_vars, largs, rargs, &ta, &tb);
                            let t_ba = uc_tuple(self.n, uc_vars, largs, rargs, &tb, &ta);
                            let pairs = ta
                                .iter()
                                .zip(&tb)
                                .map(|(&x, &y)| (x as u32, y as u32))
                                .collect();
                            self.push(AxiomInstance::U4b {
                                uc: uc as u32,
                                r,
                                s,
                                pairs,
                                t_ab,
                                t_ba,
                            });
                        }
                    }
                }
            }
        }
    }
}

/// Positions (within `sup_vars`) of each variable of `sub_vars`.
fn projection(sup_vars: &[String], sub_vars: &[String]) -> Vec<usize> {
    sub_vars
        .iter()
        .map(|v| sup_vars.iter().position(|w| w == v).expect("subformula variables are free in the superformula"))
        .collect()
}

fn project_index(n: usize, coords: &[usize], proj: &[usize]) -> usize {
    let sub: Vec<usize> = proj.iter().map(|&p| coords[p]).collect();
    tuple_index(n, &sub)
}

/// For a quantified formula with outer tuple index `t` over `q_vars`,
/// computes `(base, stride)` so the body tuple index for witness `a` is
/// `base + a * stride` over `b_vars` (the bound variable `v` inserted).
fn quant_layout(
    n: usize,
    q_vars: &[String],
    b_vars: &[String],
    v: &str,
    t: usize,
) -> (u32, u32) {
    let coords = decode_tuple(n, q_vars.len(), t);
    match b_vars.iter().position(|w| w == v) {
        None => {
            // Vacuous quantifier: body has the same variables.
            let idx = project_index(n, &coords, &projection(q_vars, b_vars));
            (idx as u32, 0)
        }
        Some(p) => {
            let mut full = Vec::with_capacity(b_vars.len());
            let mut stride = 1usize;
            for (i, w) in b_vars.iter().enumerate() {
                if i == p {
                    full.push(0);
                } else {
                    full.push(coords[q_vars.iter().position(|x| x == w).expect("outer variable")]);
                }
            }
            for _ in p + 1..b_vars.len() {
                stride *= n;
            }
            (tuple_index(n, &full) as u32, stride as u32)
        }
    }
}

pub(crate) fn uc_tuple(
    n: usize,
    uc_vars: &[String],
    largs: &[Term],
    rargs: &[Term],
    ta: &[usize],
    tb: &[usize],
) -> u32 {
    let mut env: BTreeMap<&str, usize> = BTreeMap::new();
    for (arg, &e) in largs.iter().zip(ta) {
        let Term::Var(v) = arg else { unreachable!() };
        env.insert(v, e);
    }
    for (arg, &e) in rargs.iter().zip(tb) {
        let Term::Var(v) = arg else { unreachable!() };
        env.insert(v, e);
    }
    let coords: Vec<usize> = uc_vars.iter().map(|v| env[v.as_str()]).collect();
    tuple_index(n, &coords) as u32
}

/// Generates every ground T_dense instance for the fragment over a
/// universe of size `n`. `funcs` supplies the function tables needed to
/// ground the term-reduction and function-continuity schemes.
pub fn generate_tdense(
    ds: &DiscreteSignatureFragment,
    n: usize,
    funcs: &BTreeMap<String, Vec<usize>>,
) -> GeneratedTheory {
    let mut g = Gen {
        ds,
        n,
        funcs,
        out: GeneratedTheory::default(),
    };
    g.group1();
    g.group2();
    g.group3();
    g.group4();
    g.out
}

/// T_dense instances for a discrete structure's own fragment and universe.
pub fn generate_for(d: &DiscreteStructure) -> GeneratedTheory {
    generate_tdense(&d.dsig, d.size(), &d.func_tables)
}

/// T* = T_dense plus `R[phi <= 0]` for every closed condition `phi = 0`.
pub fn generate_tstar(
    theory: &Theory,
    ds: &DiscreteSignatureFragment,
    n: usize,
    funcs: &BTreeMap<String, Vec<usize>>,
) -> Result<GeneratedTheory, DiscretizeError> {
    let mut out = generate_tdense(ds, n, funcs);
    for cond in &theory.conditions {
        let f = ds
            .fragment
            .index_of(&cond.alpha_normalize())
            .ok_or_else(|| DiscretizeError::ConditionNotInFragment(print_formula(cond)))?;
        out.instances.push(AxiomInstance::TStar { f: f as u32 });
    }
    Ok(out)
}

/// Evaluates one ground instance against the structure's tables/oracle.
pub fn eval_instance(d: &DiscreteStructure, inst: &AxiomInstance) -> bool {
    let grid = d.dsig.fragment.grid;
    let l = grid.l;
    let n = d.size() as u32;
    let omega = d.dsig.fragment.omega_n;
    match *inst {
        AxiomInstance::O1a { f, gi, t } | AxiomInstance::O1b { f, gi, t }
        | AxiomInstance::O1e { f, gi, t } => {
            d.truth(f as usize, gi, Dir::Geq, t as usize)
                || d.truth(f as usize, gi, Dir::Leq, t as usize)
        }
        AxiomInstance::O1c { f, r, s, t } => {
            !d.truth(f as usize, r, Dir::Geq, t as usize)
                || !d.truth(f as usize, s, Dir::Leq, t as usize)
        }
        AxiomInstance::O1d { f, r, s, t } => {
            let (f, t) = (f as usize, t as usize);
            (!d.truth(f, s, Dir::Leq, t) || d.truth(f, r, Dir::Leq, t))
                && (!d.truth(f, r, Dir::Geq, t) || d.truth(f, s, Dir::Geq, t))
        }
        AxiomInstance::O1f { f, t } => match d.value(f as usize, t as usize) {
            Some(v) => in_unit_interval(v),
            None => {
                // Narrowest |r - s| over pairs with R[<=r] and R[>=s] true;
                // the truncated conjunction requires it below 1/omega_N.
                let (f, t) = (f as usize, t as usize);
                let leq: Vec<u32> =
                    (0..=l).filter(|&gi| d.truth(f, gi, Dir::Leq, t)).collect();
                let geq: Vec<u32> =
                    (0..=l).filter(|&gi| d.truth(f, gi, Dir::Geq, t)).collect();
                let mut best: Option<u32> = None;
                for &r in &leq {
                    for &s in &geq {
                        let diff = r.abs_diff(s);
                        best = Some(best.map_or(diff, |b| b.min(diff)));
                    }
                }
                match best {
                    Some(b) => b * omega < l,
                    None => false,
                }
            }
        },
        AxiomInstance::O1g { f, gi, t } => match d.value(f as usize, t as usize) {
            // The full premise says the value is >= r - 1/n for every n,
            // i.e. >= r; verify the implication exactly on the oracle.
            Some(v) => !(*v >= grid.value(gi)) || *v >= grid.value(gi),
            // Grid bits can certify the premise only by certifying the
            // conclusion itself, so the truncation carries no content.
            None => true,
        },
        AxiomInstance::O1h { f, gi, t } => match d.value(f as usize, t as usize) {
            Some(v) => !(*v <= grid.value(gi)) || *v <= grid.value(gi),
            None => true,
        },
        AxiomInstance::C2a { f, t } => {
            d.truth(f as usize, 0, Dir::Geq, t as usize)
                && d.truth(f as usize, l, Dir::Leq, t as usize)
        }
        AxiomInstance::C2b { gi, zero, one } => {
            !d.truth(zero as usize, gi, Dir::Geq, 0)
                && !d.truth(one as usize, l - gi, Dir::Leq, 0)
        }
        AxiomInstance::C2c { h, f, gi, t } => {
            let lhs = d.truth(h as usize, gi, Dir::Geq, t as usize);
            let rhs = 2 * gi <= l && d.truth(f as usize, 2 * gi, Dir::Geq, t as usize);
            lhs == rhs
        }
        AxiomInstance::C2d { h, f, gi, t } => {
            let lhs = d.truth(h as usize, gi, Dir::Leq, t as usize);
            let rhs = 2 * gi > l || d.truth(f as usize, 2 * gi, Dir::Leq, t as usize);
            lhs == rhs
        }
        AxiomInstance::C2e { m, f, g, gi, tm, tf, tg } => {
            let lhs = d.truth(m as usize, gi, Dir::Geq, tm as usize);
            let rhs = (0..=l).any(|s| {
                d.truth(g as usize, s, Dir::Leq, tg as usize)
                    && gi + s <= l
                    && d.truth(f as usize, gi + s, Dir::Geq, tf as usize)
            });
            lhs == rhs
        }
        AxiomInstance::C2f { m, f, g, gi, tm, tf, tg } => {
            let lhs = d.truth(m as usize, gi, Dir::Leq, tm as usize);
            let rhs = (0..=l).all(|s| {
                !d.truth(g as usize, s, Dir::Leq, tg as usize)
                    || gi + s > l
                    || d.truth(f as usize, gi + s, Dir::Leq, tf as usize)
            });
            lhs == rhs
        }
        AxiomInstance::C2g { q, b, gi, t, base, stride } => {
            let lhs = d.truth(q as usize, gi, Dir::Leq, t as usize);
            let rhs =
                (0..n).all(|a| d.truth(b as usize, gi, Dir::Leq, (base + a * stride) as usize));
            lhs == rhs
        }
        AxiomInstance::C2h { q, b, gi, t, base, stride } => {
            match d.value(q as usize, t as usize) {
                Some(vq) => {
                    // sup >= r iff some witness value >= r - 1/n for all n,
                    // i.e. the max witness value >= r on a finite universe.
                    let r = grid.value(gi);
                    let max = (0..n)
                        .map(|a| d.value(b as usize, (base + a * stride) as usize).unwrap())
                        .max()
                        .expect("nonempty universe");
                    (*vq >= r) == (*max >= r)
                }
                None => {
                    // Forward direction only; thresholds r - 1/n are
                    // snapped down to the grid (a sound weakening).
                    if !d.truth(q as usize, gi, Dir::Geq, t as usize) {
                        return true;
                    }
                    (1..=omega).all(|nn| {
                        let x = grid.value(gi) - rat(1, nn as i64);
                        if x < Rat::zero() {
                            return true;
                        }
                        let s = grid.floor_index(&x);
                        (0..n).any(|a| {
                            d.truth(b as usize, s, Dir::Geq, (base + a * stride) as usize)
                        })
                    })
                }
            }
        }
        AxiomInstance::C2i { q, b, gi, t, base, stride } => {
            match d.value(q as usize, t as usize) {
                Some(vq) => {
                    let r = grid.value(gi);
                    let min = (0..n)
                        .map(|a| d.value(b as usize, (base + a * stride) as usize).unwrap())
                        .min()
                        .expect("nonempty universe");
                    (*vq <= r) == (*min <= r)
                }
                None => {
                    if !d.truth(q as usize, gi, Dir::Leq, t as usize) {
                        return true;
                    }
                    (1..=omega).all(|nn| {
                        let x = grid.value(gi) + rat(1, nn as i64);
                        if x > Rat::from_integer(1.into()) {
                            return true;
                        }
                        let s = grid.ceil_index(&x);
                        (0..n).any(|a| {
                            d.truth(b as usize, s, Dir::Leq, (base + a * stride) as usize)
                        })
                    })
                }
            }
        }
        AxiomInstance::C2j { q, b, gi, t, base, stride } => {
            let lhs = d.truth(q as usize, gi, Dir::Geq, t as usize);
            let rhs =
                (0..n).all(|a| d.truth(b as usize, gi, Dir::Geq, (base + a * stride) as usize));
            lhs == rhs
        }
        AxiomInstance::C2k { psi, phi, gi, dir, t_psi, t_phi } => {
            d.truth(psi as usize, gi, dir, t_psi as usize)
                == d.truth(phi as usize, gi, dir, t_phi as usize)
        }
        AxiomInstance::M3a { a, b } => {
            let t = (a * n + b) as usize;
            d.truth(d.dsig.dist_idx, 0, Dir::Leq, t) == (a == b)
        }
        AxiomInstance::M3b { gi, dir, a, b } => {
            d.truth(d.dsig.dist_idx, gi, dir, (a * n + b) as usize)
                == d.truth(d.dsig.dist_idx, gi, dir, (b * n + a) as usize)
        }
        AxiomInstance::M3c { gi, a, b, c } => {
            let di = d.dsig.dist_idx;
            if !d.truth(di, gi, Dir::Geq, (a * n + b) as usize) {
                return true;
            }
            (0..=gi).any(|s| {
                d.truth(di, s, Dir::Geq, (a * n + c) as usize)
                    && d.truth(di, gi - s, Dir::Geq, (c * n + b) as usize)
            })
        }
        AxiomInstance::U4a { r, s, ref pairs, fa, fb } => {
            let di = d.dsig.dist_idx;
            let premise = pairs
                .iter()
                .all(|&(x, y)| d.truth(di, s, Dir::Leq, (x * n + y) as usize));
            !premise || d.truth(di, r, Dir::Leq, (fa * n + fb) as usize)
        }
        AxiomInstance::U4b { uc, r, s, ref pairs, t_ab, t_ba } => {
            let di = d.dsig.dist_idx;
            let premise = pairs
                .iter()
                .all(|&(x, y)| d.truth(di, s, Dir::Leq, (x * n + y) as usize));
            !premise
                || (d.truth(uc as usize, r, Dir::Leq, t_ab as usize)
                    && d.truth(uc as usize, r, Dir::Leq, t_ba as usize))
        }
        AxiomInstance::TStar { f } => d.truth(f as usize, 0, Dir::Leq, 0),
    }
}

/// Human-readable ground body, used as a failure witness.
pub fn describe_instance(d: &DiscreteStructure, inst: &AxiomInstance) -> String {
    let scheme = inst.scheme();
    let lit = |f: u32, gi: u32, dir: Dir, t: u32| d.literal(f as usize, gi, dir, t as usize);
    let body = match *inst {
        AxiomInstance::O1a { f, gi, t } | AxiomInstance::O1b { f, gi, t }
        | AxiomInstance::O1e { f, gi, t } => {
            format!("{} or {}", lit(f, gi, Dir::Geq, t), lit(f, gi, Dir::Leq, t))
        }
        AxiomInstance::O1c { f, r, s, t } => format!(
            "not({} and {})",
            lit(f, r, Dir::Geq, t),
            lit(f, s, Dir::Leq, t)
        ),
        AxiomInstance::O1d { f, r, s, t } => format!(
            "{} -> {} and {} -> {}",
            lit(f, s, Dir::Leq, t),
            lit(f, r, Dir::Leq, t),
            lit(f, r, Dir::Geq, t),
            lit(f, s, Dir::Geq, t)
        ),
        AxiomInstance::O1f { f, t } => {
            format!("cut of {} has a gap wider than 1/omega_N", lit(f, 0, Dir::Geq, t))
        }
        AxiomInstance::O1g { f, gi, t } => {
            format!("left closure at {}", lit(f, gi, Dir::Geq, t))
        }
        AxiomInstance::O1h { f, gi, t } => {
            format!("right closure at {}", lit(f, gi, Dir::Leq, t))
        }
        AxiomInstance::C2a { f, t } => format!(
            "{} and {}",
            lit(f, 0, Dir::Geq, t),
            lit(f, d.dsig.fragment.grid.l, Dir::Leq, t)
        ),
        AxiomInstance::C2b { gi, zero, one } => format!(
            "not {} and not {}",
            lit(zero, gi, Dir::Geq, 0),
            lit(one, d.dsig.fragment.grid.l - gi, Dir::Leq, 0)
        ),
        AxiomInstance::C2c { h, f, gi, t } => format!(
            "{} <-> {}",
            lit(h, gi, Dir::Geq, t),
            if 2 * gi <= d.dsig.fragment.grid.l {
                lit(f, 2 * gi, Dir::Geq, t)
            } else {
                "false".to_string()
            }
        ),
        AxiomInstance::C2d { h, f, gi, t } => format!(
            "{} <-> {}",
            lit(h, gi, Dir::Leq, t),
            if 2 * gi <= d.dsig.fragment.grid.l {
                lit(f, 2 * gi, Dir::Leq, t)
            } else {
                "true".to_string()
            }
        ),
        AxiomInstance::C2e { m, gi, tm, .. } =>

            format!("monus cut at {}", lit(m, gi, Dir::Geq, tm)),
        AxiomInstance::C2f { m, gi, tm, .. } => {
            format!("monus cut at {}", lit(m, gi, Dir::Leq, tm))
        }
        AxiomInstance::C2g { q, gi, t, .. } => {
            format!("sup sweep at {}", lit(q, gi, Dir::Leq, t))
        }
        AxiomInstance::C2h { q, gi, t, .. } => {
            format!("sup approach at {}", lit(q, gi, Dir::Geq, t))
        }
        AxiomInstance::C2i { q, gi, t, .. } => {
            format!("inf approach at {}", lit(q, gi, Dir::Leq, t))
        }
        AxiomInstance::C2j { q, gi, t, .. } => {
            format!("inf sweep at {}", lit(q, gi, Dir::Geq, t))
        }
        AxiomInstance::C2k { psi, phi, gi, dir, t_psi, t_phi } => format!(
            "{} <-> {}",
            lit(psi, gi, dir, t_psi),
            lit(phi, gi, dir, t_phi)
        ),
        AxiomInstance::M3a { a, b } => format!(
            "{} <-> {}",
            lit(d.dsig.dist_idx as u32, 0, Dir::Leq, a * d.size() as u32 + b),
            if a == b { "true" } else { "false" }
        ),
        AxiomInstance::M3b { gi, dir, a, b } => {
            let n = d.size() as u32;
            format!(
                "{} <-> {}",
                lit(d.dsig.dist_idx as u32, gi, dir, a * n + b),
                lit(d.dsig.dist_idx as u32, gi, dir, b * n + a)
            )
        }
        AxiomInstance::M3c { gi, a, b, c } => {
            let n = d.size() as u32;
            format!(
                "{} -> split through {}",
                lit(d.dsig.dist_idx as u32, gi, Dir::Geq, a * n + b),
                d.universe[c as usize]
            )
        }
        AxiomInstance::U4a { r, s, fa, fb, .. } => {
            let n = d.size() as u32;
            format!(
                "function continuity: inputs within {} -> {}",
                crate::rational::format_rat(&d.dsig.fragment.grid.value(s)),
                lit(d.dsig.dist_idx as u32, r, Dir::Leq, fa * n + fb)
            )
        }
        AxiomInstance::U4b { uc, r, s, t_ab, .. } => format!(
            "relation continuity: inputs within {} -> {}",
            crate::rational::format_rat(&d.dsig.fragment.grid.value(s)),
            lit(uc, r, Dir::Leq, t_ab)
        ),
        AxiomInstance::TStar { f } => lit(f, 0, Dir::Leq, 0),
    };
    format!("{scheme}: {body}")
}

/// Per-scheme verdicts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SchemeReport {
    pub scheme: SchemeId,
    pub pass: u64,
    pub fail: u64,
    pub skip: u64,
    pub mode: Mode,
    pub witness: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VerdictReport {
    pub schemes: Vec<SchemeReport>,
}

impl VerdictReport {
    pub fn passed(&self) -> bool {
        self.schemes.iter().all(|s| s.fail == 0)
    }

    pub fn scheme(&self, id: SchemeId) -> Option<&SchemeReport> {
        self.schemes.iter().find(|s| s.scheme == id)
    }
}

/// Checks every generated instance, grouping verdicts by scheme in axiom-
/// list order. The first failing instance per scheme is kept as a witness.
pub fn check_tdense(d: &DiscreteStructure, theory: &GeneratedTheory) -> VerdictReport {
    let intensional = d.is_intensional();
    let mut order: Vec<SchemeId> = SchemeId::TDENSE.to_vec();
    if theory
        .instances
        .iter()
        .any(|i| i.scheme() == SchemeId::TStar)
    {
        order.push(SchemeId::TStar);
    }
    let mut reports: BTreeMap<SchemeId, SchemeReport> = order
        .iter()
        .map(|&s| {
            (
                s,
                SchemeReport {
                    scheme: s,
                    pass: 0,
                    fail: 0,
                    skip: theory.skipped.get(&s).copied().unwrap_or(0),
                    mode: scheme_mode(s, intensional),
                    witness: None,
                },
            )
        })
        .collect();
    for inst in &theory.instances {
        let report = reports.get_mut(&inst.scheme()).expect("scheme listed");
        if eval_instance(d, inst) {
            report.pass += 1;
        } else {
            report.fail += 1;
            if report.witness.is_none() {
                report.witness = Some(describe_instance(d, inst));
            }
        }
    }
    VerdictReport {
        schemes: order.into_iter().map(|s| reports[&s].clone()).collect(),
    }
}

/// First failing instance, if any (short-circuiting; used by mutation
/// tests to re-check only instances relevant to a flipped bit).
pub fn find_failing_instance<'a, I>(d: &DiscreteStructure, instances: I) -> Option<&'a AxiomInstance>
where
    I: IntoIterator<Item = &'a AxiomInstance>,
{
    instances.into_iter().find(|inst| !eval_instance(d, inst))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::semantics::tests_support::m2;
    use crate::syntax::{parse_formula, standard_fragment};

    fn m2_setup(grid_l: u32) -> (ContinuousStructure, DiscreteSignatureFragment) {
        let m = m2();
        let frag = standard_fragment(&m.signature, 2, grid_l, 2);
        let ds = build_signature_fragment(&m.signature, &frag).unwrap();
        (m, ds)
    }

    #[test]
    fn symbol_counts() {
        let m = m2();
        // {d(x,y)} alone at L=2: 1 formula x 3 thresholds x 2 dirs.
        let frag = crate::syntax::fragment_close(
            &[parse_formula("d(x, y)", &m.signature).unwrap()],
            2,
            2,
        );
        let ds = build_signature_fragment(&m.signature, &frag).unwrap();
        assert_eq!(ds.rel_symbol_count(), 6);
        // {d(x,y), P(x)} at L=4: 2 x 5 x 2.
        let frag = crate::syntax::fragment_close(
            &[
                parse_formula("d(x, y)", &m.signature).unwrap(),
                parse_formula("P(x)", &m.signature).unwrap(),
            ],
            4,
            2,
        );
        let ds = build_signature_fragment(&m.signature, &frag).unwrap();
        assert_eq!(ds.rel_symbol_count(), 20);
        assert_eq!(ds.symbols().count(), 20);
    }

    #[test]
    fn missing_distance_atom_rejected() {
        let m = m2();
        let frag = crate::syntax::fragment_close(
            &[parse_formula("P(x)", &m.signature).unwrap()],
            4,
            2,
        );
        assert_eq!(
            build_signature_fragment(&m.signature, &frag).unwrap_err(),
            DiscretizeError::MissingDistanceAtom
        );
    }

    #[test]
    fn nicely_dense_checks() {
        let m = m2();
        assert!(check_nicely_dense(&m, &[0, 1]));
        assert!(!check_nicely_dense(&m, &[0])); // proper subset: not dense
        assert!(!check_nicely_dense(&m, &[0, 0, 1])); // duplicates
    }

    #[test]
    fn encode_thresholds_match_values() {
        let (m, ds) = m2_setup(4);
        let enc = encode(&m, &[0, 1], &ds).unwrap();
        let p = ds.fragment.index_of(&parse_formula("P(x0)", &m.signature).unwrap()).unwrap();
        // R[P >= 1/2] = {b}
        assert!(!enc.truth(p, 2, Dir::Geq, 0));
        assert!(enc.truth(p, 2, Dir::Geq, 1));
        // R[phi >= 0] holds of every tuple, for every formula.
        for f in 0..ds.formula_count() {
            for t in 0..enc.tuple_count(f) {
                assert!(enc.truth(f, 0, Dir::Geq, t));
            }
        }
        // R[d <= 0](a,a) holds; R[d <= 0](a,b) fails.
        assert!(enc.truth(ds.dist_idx, 0, Dir::Leq, 0));
        assert!(!enc.truth(ds.dist_idx, 0, Dir::Leq, 1));
    }

    #[test]
    fn materialize_agrees_with_oracle_and_is_idempotent() {
        let (m, ds) = m2_setup(4);
        let enc = encode(&m, &[0, 1], &ds).unwrap();
        let ext = materialize(&enc);
        for (f, gi, dir) in ds.symbols() {
            for t in 0..enc.tuple_count(f) {
                assert_eq!(enc.truth(f, gi, dir, t), ext.truth(f, gi, dir, t));
            }
        }
        assert_eq!(materialize(&ext), ext);
    }

    #[test]
    fn scheme_1e_instance_count() {
        let m = m2();
        let frag = crate::syntax::fragment_close(
            &[
                parse_formula("d(x, y)", &m.signature).unwrap(),
                parse_formula("P(x)", &m.signature).unwrap(),
            ],
            2,
            2,
        );
        let ds = build_signature_fragment(&m.signature, &frag).unwrap();
        let theory = generate_tdense(&ds, 2, &BTreeMap::new());
        let p = ds.fragment.index_of(&parse_formula("P(x)", &m.signature).unwrap()).unwrap();
        let count = theory
            .instances
            .iter()
            .filter(|i| matches!(i, AxiomInstance::O1e { f, .. } if *f as usize == p))
            .count();
        // One unary formula, L=2, universe of 2: 3 thresholds x 2 elements.
        assert_eq!(count, 6);
        // 2(b) is skipped (no constants in this fragment) and counted.
        assert_eq!(theory.skipped[&SchemeId::C2b], 2);
    }

    #[test]
    fn encoding_passes_tdense() {
        let (m, ds) = m2_setup(4);
        let enc = encode(&m, &[0, 1], &ds).unwrap();
        let theory = generate_for(&enc);
        // Intensional: the limit schemes are decided oracle-exact.
        let report = check_tdense(&enc, &theory);
        assert!(report.passed(), "intensional failures: {:?}",
            report.schemes.iter().filter(|s| s.fail > 0).collect::<Vec<_>>());
        assert_eq!(report.scheme(SchemeId::O1f).unwrap().mode, Mode::OracleExact);
        // Extensional: same instances on the materialized tables.
        let ext = materialize(&enc);
        let report = check_tdense(&ext, &theory);
        assert!(report.passed(), "extensional failures: {:?}",
            report.schemes.iter().filter(|s| s.fail > 0).collect::<Vec<_>>());
        assert_eq!(report.scheme(SchemeId::O1f).unwrap().mode, Mode::Truncated);
        assert_eq!(report.scheme(SchemeId::M3a).unwrap().mode, Mode::Exact);
    }

    #[test]
    fn flipped_d_bit_fails_3a() {
        let (m, ds) = m2_setup(4);
        let mut ext = materialize(&encode(&m, &[0, 1], &ds).unwrap());
        let theory = generate_for(&ext);
        // Flip R[d <= 0](a, b) to true: 3(a) must notice.
        ext.flip_truth(ds.dist_idx, 0, Dir::Leq, 1);
        let report = check_tdense(&ext, &theory);
        let m3a = report.scheme(SchemeId::M3a).unwrap();
        assert!(m3a.fail >= 1);
        assert!(m3a.witness.is_some());
    }

    #[test]
    fn tstar_conditions() {
        let m = m2();
        let frag = crate::syntax::fragment_close(
            &[
                parse_formula("d(x, y)", &m.signature).unwrap(),
                parse_formula("monus(1, 1)", &m.signature).unwrap(),
                Formula::Zero,
            ],
            4,
            2,
        );
        let ds = build_signature_fragment(&m.signature, &frag).unwrap();
        let enc = encode(&m, &[0, 1], &ds).unwrap();
        // T = {} is exactly T_dense.
        let empty = generate_tstar(&Theory::default(), &ds, 2, &enc.func_tables).unwrap();
        assert_eq!(empty, generate_for(&enc));
        // monus(1,1) = 0 holds in every structure.
        let good = Theory {
            conditions: vec![parse_formula("monus(1, 1)", &m.signature).unwrap()],
        };
        let theory = generate_tstar(&good, &ds, 2, &enc.func_tables).unwrap();
        assert!(check_tdense(&enc, &theory).passed());
        // 1 = 0 fails in every structure.
        let bad = Theory {
            conditions: vec![Formula::One],
        };
        let theory = generate_tstar(&bad, &ds, 2, &enc.func_tables).unwrap();
        let report = check_tdense(&enc, &theory);
        assert_eq!(report.scheme(SchemeId::TStar).unwrap().fail, 1);
        // A condition outside the fragment is an error.
        let off = Theory {
            conditions: vec![parse_formula("half(half(half(1)))", &m.signature).unwrap()],
        };
        assert!(generate_tstar(&off, &ds, 2, &enc.func_tables).is_err());
    }

    #[test]
    fn generation_is_deterministic() {
        let (_, ds) = m2_setup(4);
        let a = generate_tdense(&ds, 2, &BTreeMap::new());
        let b = generate_tdense(&ds, 2, &BTreeMap::new());
        assert_eq!(a, b);
        assert!(!a.instances.is_empty());
    }

    #[test]
    fn off_grid_value_trips_extensional_1f() {
        // P(b) = 3/4 is off the L=2 grid; with omega_N >= L the truncated
        // 1(f) check must notice the 1/2-wide gap in the cut.
        let m = m2();
        let frag = crate::syntax::fragment_close(
            &[
                parse_formula("d(x, y)", &m.signature).unwrap(),
                parse_formula("P(x)", &m.signature).unwrap(),
            ],
            2,
            4,
        );
        let ds = build_signature_fragment(&m.signature, &frag).unwrap();
        let ext = materialize(&encode(&m, &[0, 1], &ds).unwrap());
        let theory = generate_for(&ext);
        let report = check_tdense(&ext, &theory);
        assert!(report.scheme(SchemeId::O1f).unwrap().fail >= 1);
    }
}
