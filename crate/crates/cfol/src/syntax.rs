//! Continuous signatures, terms, and formulas: grammar, recursive-descent
//! parser, canonical printer, fragments, and compositional formula moduli.
//!
//! Formula values live in `[0,1]`; the connective set is fixed to
//! `{0, 1, x/2, monus}` with `sup`/`inf` quantifiers and the built-in
//! metric atom `d(t, t')`. Formulas are alpha-normalized on parse so that
//! structural equality decides formula identity.

use alloc::borrow::ToOwned;
use alloc::boxed::Box;
use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use num_traits::Zero;

use crate::rational::{min_rat, rat, rat_one, rat_zero, Grid, Rat};

/// Modulus of uniform continuity as a finite monotone table `r -> delta`:
/// input tuples at max-coordinate distance `< delta(r)` yield outputs that
/// differ by at most `r`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ModulusTable {
    pub entries: BTreeMap<Rat, Rat>,
}

impl ModulusTable {
    pub fn new(entries: BTreeMap<Rat, Rat>) -> Result<ModulusTable, SignatureError> {
        let mut prev: Option<&Rat> = None;
        for (r, delta) in &entries {
            if !crate::rational::in_unit_interval(r) || !crate::rational::in_unit_interval(delta) {
                return Err(SignatureError::ModulusOutOfRange);
            }
            if let Some(p) = prev {
                if delta < p {
                    return Err(SignatureError::ModulusNotMonotone);
                }
            }
            prev = Some(delta);
        }
        Ok(ModulusTable { entries })
    }

    pub fn delta(&self, r: &Rat) -> Option<&Rat> {
        self.entries.get(r)
    }

    /// Smallest tabulated `r` with `delta(r) > eps`, capped at 1 when no
    /// entry qualifies. This is the table inverse used to bound how much an
    /// output can move when inputs move by at most `eps`.
    pub fn inverse(&self, eps: &Rat) -> Rat {
        for (r, delta) in &self.entries {
            if delta > eps {
                return r.clone();
            }
        }
        rat_one()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SignatureError {
    DuplicateName(String),
    ModulusNotMonotone,
    ModulusOutOfRange,
}

impl fmt::Display for SignatureError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SignatureError::DuplicateName(n) => write!(f, "duplicate symbol name: {n}"),
            SignatureError::ModulusNotMonotone => write!(f, "modulus table not monotone"),
            SignatureError::ModulusOutOfRange => write!(f, "modulus entry outside [0,1]"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FunctionDecl {
    pub name: String,
    pub arity: usize,
    pub modulus: ModulusTable,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RelationDecl {
    pub name: String,
    pub arity: usize,
    pub modulus: ModulusTable,
}

/// A continuous signature. The metric symbol `d` is implicit and not
/// listed among the relations.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ContinuousSignature {
    pub functions: Vec<FunctionDecl>,
    pub relations: Vec<RelationDecl>,
}

impl ContinuousSignature {
    pub fn new(
        functions: Vec<FunctionDecl>,
        relations: Vec<RelationDecl>,
    ) -> Result<ContinuousSignature, SignatureError> {
        let mut names = BTreeSet::new();
        for n in functions
            .iter()
            .map(|f| &f.name)
            .chain(relations.iter().map(|r| &r.name))
        {
            if !names.insert(n.clone()) {
                return Err(SignatureError::DuplicateName(n.clone()));
            }
        }
        Ok(ContinuousSignature {
            functions,
            relations,
        })
    }

    pub fn function(&self, name: &str) -> Option<&FunctionDecl> {
        self.functions.iter().find(|f| f.name == name)
    }

    pub fn relation(&self, name: &str) -> Option<&RelationDecl> {
        self.relations.iter().find(|r| r.name == name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Term {
    Var(String),
    App(String, Vec<Term>),
}

impl Term {
    pub fn var(name: &str) -> Term {
        Term::Var(name.to_owned())
    }

    pub fn free_vars(&self, out: &mut BTreeSet<String>) {
        match self {
            Term::Var(v) => {
                out.insert(v.clone());
            }
            Term::App(_, args) => {
                for a in args {
                    a.free_vars(out);
                }
            }
        }
    }

    fn rename(&self, map: &BTreeMap<String, String>) -> Term {
        match self {
            Term::Var(v) => Term::Var(map.get(v).cloned().unwrap_or_else(|| v.clone())),
            Term::App(f, args) => {
                Term::App(f.clone(), args.iter().map(|a| a.rename(map)).collect())
            }
        }
    }

    fn subst(&self, var: &str, term: &Term) -> Term {
        match self {
            Term::Var(v) if v == var => term.clone(),
            Term::Var(_) => self.clone(),
            Term::App(f, args) => {
                Term::App(f.clone(), args.iter().map(|a| a.subst(var, term)).collect())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Formula {
    Zero,
    One,
    Dist(Term, Term),
    Rel(String, Vec<Term>),
    Half(Box<Formula>),
    Monus(Box<Formula>, Box<Formula>),
    Sup(String, Box<Formula>),
    Inf(String, Box<Formula>),
}

impl Formula {
    pub fn half(f: Formula) -> Formula {
        Formula::Half(Box::new(f))
    }

    pub fn monus(f: Formula, g: Formula) -> Formula {
        Formula::Monus(Box::new(f), Box::new(g))
    }

    pub fn sup(v: &str, f: Formula) -> Formula {
        Formula::Sup(v.to_owned(), Box::new(f))
    }

    pub fn inf(v: &str, f: Formula) -> Formula {
        Formula::Inf(v.to_owned(), Box::new(f))
    }

    pub fn dist(a: Term, b: Term) -> Formula {
        Formula::Dist(a, b)
    }

    pub fn rel(name: &str, args: Vec<Term>) -> Formula {
        Formula::Rel(name.to_owned(), args)
    }

    pub fn free_vars(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_free(&mut out);
        out
    }

    fn collect_free(&self, out: &mut BTreeSet<String>) {
        match self {
            Formula::Zero | Formula::One => {}
            Formula::Dist(a, b) => {
                a.free_vars(out);
                b.free_vars(out);
            }
            Formula::Rel(_, args) => {
                for a in args {
                    a.free_vars(out);
                }
            }
            Formula::Half(f) => f.collect_free(out),
            Formula::Monus(f, g) => {
                f.collect_free(out);
                g.collect_free(out);
            }
            Formula::Sup(v, f) | Formula::Inf(v, f) => {
                let mut inner = BTreeSet::new();
                f.collect_free(&mut inner);
                inner.remove(v);
                out.extend(inner);
            }
        }
    }

    /// Free variables in canonical (lexicographic) order; these are the
    /// argument positions of the induced threshold relations.
    pub fn free_var_list(&self) -> Vec<String> {
        self.free_vars().into_iter().collect()
    }

    /// Immediate subformulas (terms are not formulas).
    pub fn children(&self) -> Vec<&Formula> {
        match self {
            Formula::Zero | Formula::One | Formula::Dist(..) | Formula::Rel(..) => vec![],
            Formula::Half(f) => vec![f],
            Formula::Monus(f, g) => vec![f, g],
            Formula::Sup(_, f) | Formula::Inf(_, f) => vec![f],
        }
    }

    /// AST height, atoms at height 1.
    pub fn depth(&self) -> usize {
        1 + self
            .children()
            .into_iter()
            .map(Formula::depth)
            .max()
            .unwrap_or(0)
    }

    /// Renames bound variables to `v0, v1, ...` in pre-order, skipping any
    /// name that occurs free in the whole formula. Two formulas that differ
    /// only in bound-variable names normalize to the same value.
    pub fn alpha_normalize(&self) -> Formula {
        let free = self.free_vars();
        let mut counter = 0usize;
        self.normalize_inner(&BTreeMap::new(), &free, &mut counter)
    }

    fn normalize_inner(
        &self,
        bound: &BTreeMap<String, String>,
        free: &BTreeSet<String>,
        counter: &mut usize,
    ) -> Formula {
        match self {
            Formula::Zero => Formula::Zero,
            Formula::One => Formula::One,
            Formula::Dist(a, b) => Formula::Dist(a.rename(bound), b.rename(bound)),
            Formula::Rel(name, args) => Formula::Rel(
                name.clone(),
                args.iter().map(|a| a.rename(bound)).collect(),
            ),
            Formula::Half(f) => Formula::half(f.normalize_inner(bound, free, counter)),
            Formula::Monus(f, g) => Formula::monus(
                f.normalize_inner(bound, free, counter),
                g.normalize_inner(bound, free, counter),
            ),
            Formula::Sup(v, f) | Formula::Inf(v, f) => {
                let fresh = loop {
                    let cand = format!("v{counter}");
                    *counter += 1;
                    if !free.contains(&cand) {
                        break cand;
                    }
                };
                let mut inner_bound = bound.clone();
                inner_bound.insert(v.clone(), fresh.clone());
                let body = f.normalize_inner(&inner_bound, free, counter);
                match self {
                    Formula::Sup(..) => Formula::Sup(fresh, Box::new(body)),
                    _ => Formula::Inf(fresh, Box::new(body)),
                }
            }
        }
    }

    /// Capture-avoiding substitution of `term` for the free variable `var`,
    /// alpha-normalized afterwards.
    pub fn subst(&self, var: &str, term: &Term) -> Formula {
        self.subst_inner(var, term).alpha_normalize()
    }

    fn subst_inner(&self, var: &str, term: &Term) -> Formula {
        match self {
            Formula::Zero => Formula::Zero,
            Formula::One => Formula::One,
            Formula::Dist(a, b) => Formula::Dist(a.subst(var, term), b.subst(var, term)),
            Formula::Rel(name, args) => Formula::Rel(
                name.clone(),
                args.iter().map(|a| a.subst(var, term)).collect(),
            ),
            Formula::Half(f) => Formula::half(f.subst_inner(var, term)),
            Formula::Monus(f, g) => {
                Formula::monus(f.subst_inner(var, term), g.subst_inner(var, term))
            }
            Formula::Sup(v, f) | Formula::Inf(v, f) => {
                // Bound variables are alpha-normalized `v#` names, distinct
                // from every free variable, so capture cannot occur here.
                let body = if v == var {
                    f.as_ref().clone()
                } else {
                    f.subst_inner(var, term)
                };
                match self {
                    Formula::Sup(..) => Formula::Sup(v.clone(), Box::new(body)),
                    _ => Formula::Inf(v.clone(), Box::new(body)),
                }
            }
        }
    }
}

fn print_term(t: &Term, out: &mut String) {
    match t {
        Term::Var(v) => out.push_str(v),
        Term::App(f, args) => {
            out.push_str(f);
            if !args.is_empty() {
                out.push('(');
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        out.push_str(", ");
                    }
                    print_term(a, out);
                }
                out.push(')');
            }
        }
    }
}

fn print_formula_inner(f: &Formula, out: &mut String) {
    match f {
        Formula::Zero => out.push('0'),
        Formula::One => out.push('1'),
        Formula::Dist(a, b) => {
            out.push_str("d(");
            print_term(a, out);
            out.push_str(", ");
            print_term(b, out);
            out.push(')');
        }
        Formula::Rel(name, args) => {
            out.push_str(name);
            if !args.is_empty() {
                out.push('(');
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        out.push_str(", ");
                    }
                    print_term(a, out);
                }
                out.push(')');
            }
        }
        Formula::Half(g) => {
            out.push_str("half(");
            print_formula_inner(g, out);
            out.push(')');
        }
        Formula::Monus(g, h) => {
            out.push_str("monus(");
            print_formula_inner(g, out);
            out.push_str(", ");
            print_formula_inner(h, out);
            out.push(')');
        }
        Formula::Sup(v, g) => {
            out.push_str("sup ");
            out.push_str(v);
            out.push_str(". ");
            print_formula_inner(g, out);
        }
        Formula::Inf(v, g) => {
            out.push_str("inf ");
            out.push_str(v);
            out.push_str(". ");
            print_formula_inner(g, out);
        }
    }
}

/// Canonical text form; round-trips through [`parse_formula`].
pub fn print_formula(f: &Formula) -> String {
    let mut out = String::new();
    print_formula_inner(f, &mut out);
    out
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&print_formula(self))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParseError {
    Syntax { pos: usize, msg: String },
    UnknownSymbol { pos: usize, name: String },
    ArityMismatch { pos: usize, name: String, expected: usize, got: usize },
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParseError::Syntax { pos, msg } => write!(f, "syntax error at {pos}: {msg}"),
            ParseError::UnknownSymbol { pos, name } => {
                write!(f, "unknown symbol at {pos}: {name}")
            }
            ParseError::ArityMismatch {
                pos,
                name,
                expected,
                got,
            } => write!(
                f,
                "arity mismatch at {pos}: {name} expects {expected} arguments, got {got}"
            ),
        }
    }
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    sig: &'a ContinuousSignature,
}

impl<'a> Parser<'a> {
    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn expect(&mut self, c: u8) -> Result<(), ParseError> {
        if self.peek() == Some(c) {
            self.pos += 1;
            Ok(())
        } else {
            Err(ParseError::Syntax {
                pos: self.pos,
                msg: format!("expected '{}'", c as char),
            })
        }
    }

    fn ident(&mut self) -> Result<(usize, String), ParseError> {
        self.skip_ws();
        let start = self.pos;
        let mut end = start;
        if end < self.src.len() && (self.src[end].is_ascii_alphabetic()) {
            end += 1;
            while end < self.src.len()
                && (self.src[end].is_ascii_alphanumeric() || self.src[end] == b'_')
            {
                end += 1;
            }
        }
        if end == start {
            return Err(ParseError::Syntax {
                pos: start,
                msg: "expected identifier".to_string(),
            });
        }
        self.pos = end;
        Ok((start, core::str::from_utf8(&self.src[start..end]).unwrap().to_string()))
    }

    fn args(&mut self) -> Result<Vec<Term>, ParseError> {
        self.expect(b'(')?;
        let mut out = Vec::new();
        if self.peek() == Some(b')') {
            self.pos += 1;
            return Ok(out);
        }
        loop {
            out.push(self.term()?);
            match self.peek() {
                Some(b',') => {
                    self.pos += 1;
                }
                Some(b')') => {
                    self.pos += 1;
                    return Ok(out);
                }
                _ => {
                    return Err(ParseError::Syntax {
                        pos: self.pos,
                        msg: "expected ',' or ')'".to_string(),
                    })
                }
            }
        }
    }

    fn term(&mut self) -> Result<Term, ParseError> {
        let (pos, name) = self.ident()?;
        if let Some(decl) = self.sig.function(&name) {
            let args = if self.peek() == Some(b'(') {
                self.args()?
            } else {
                Vec::new()
            };
            if args.len() != decl.arity {
                return Err(ParseError::ArityMismatch {
                    pos,
                    name,
                    expected: decl.arity,
                    got: args.len(),
                });
            }
            Ok(Term::App(name, args))
        } else if self.sig.relation(&name).is_some() {
            Err(ParseError::Syntax {
                pos,
                msg: format!("relation {name} used as a term"),
            })
        } else {
            Ok(Term::Var(name))
        }
    }

    fn formula(&mut self) -> Result<Formula, ParseError> {
        match self.peek() {
            Some(b'0') => {
                self.pos += 1;
                Ok(Formula::Zero)
            }
            Some(b'1') => {
                self.pos += 1;
                Ok(Formula::One)
            }
            Some(c) if c.is_ascii_alphabetic() => {
                let (pos, name) = self.ident()?;
                match name.as_str() {
                    "half" => {
                        self.expect(b'(')?;
                        let body = self.formula()?;
                        self.expect(b')')?;
                        Ok(Formula::half(body))
                    }
                    "monus" => {
                        self.expect(b'(')?;
                        let f = self.formula()?;
                        self.expect(b',')?;
                        let g = self.formula()?;
                        self.expect(b')')?;
                        Ok(Formula::monus(f, g))
                    }
                    "sup" | "inf" => {
                        let (_, v) = self.ident()?;
                        self.expect(b'.')?;
                        let body = self.formula()?;
                        if name == "sup" {
                            Ok(Formula::Sup(v, Box::new(body)))
                        } else {
                            Ok(Formula::Inf(v, Box::new(body)))
                        }
                    }
                    "d" => {
                        self.expect(b'(')?;
                        let a = self.term()?;
                        self.expect(b',')?;
                        let b = self.term()?;
                        self.expect(b')')?;
                        Ok(Formula::Dist(a, b))
                    }
                    _ => {
                        let decl = self.sig.relation(&name).ok_or(ParseError::UnknownSymbol {
                            pos,
                            name: name.clone(),
                        })?;
                        let expected = decl.arity;
                        let args = if self.peek() == Some(b'(') {
                            self.args()?
                        } else {
                            Vec::new()
                        };
                        if args.len() != expected {
                            return Err(ParseError::ArityMismatch {
                                pos,
                                name,
                                expected,
                                got: args.len(),
                            });
                        }
                        Ok(Formula::Rel(name, args))
                    }
                }
            }
            _ => Err(ParseError::Syntax {
                pos: self.pos,
                msg: "expected formula".to_string(),
            }),
        }
    }
}

/// Parses the formula grammar; the result is alpha-normalized.
pub fn parse_formula(text: &str, sig: &ContinuousSignature) -> Result<Formula, ParseError> {
    let mut p = Parser {
        src: text.as_bytes(),
        pos: 0,
        sig,
    };
    let f = p.formula()?;
    p.skip_ws();
    if p.pos != p.src.len() {
        return Err(ParseError::Syntax {
            pos: p.pos,
            msg: "trailing input".to_string(),
        });
    }
    Ok(f.alpha_normalize())
}

/// The finite slice over which the infinite discrete signature and theory
/// are materialized: a subformula-closed formula set, a threshold grid, and
/// an omega-truncation bound.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fragment {
    formulas: Vec<Formula>,
    pub grid: Grid,
    pub omega_n: u32,
}

impl Fragment {
    /// Formulas in canonical order (lexicographic on printed form).
    pub fn formulas(&self) -> &[Formula] {
        &self.formulas
    }

    pub fn contains(&self, f: &Formula) -> bool {
        self.index_of(f).is_some()
    }

    pub fn index_of(&self, f: &Formula) -> Option<usize> {
        self.formulas.iter().position(|g| g == f)
    }
}

/// Smallest subformula-closed superset of `seed`, paired with the grid and
/// truncation parameters. Formulas are alpha-normalized and ordered
/// lexicographically on their printed form.
pub fn fragment_close(seed: &[Formula], grid_l: u32, omega_n: u32) -> Fragment {
    assert!(omega_n >= 2, "omega_N must be >= 2");
    let grid = Grid::new(grid_l);
    let mut seen: BTreeSet<Formula> = BTreeSet::new();
    let mut stack: Vec<Formula> = seed.iter().map(Formula::alpha_normalize).collect();
    while let Some(f) = stack.pop() {
        if seen.contains(&f) {
            continue;
        }
        for c in f.children() {
            stack.push(c.alpha_normalize());
        }
        seen.insert(f);
    }
    let mut formulas: Vec<Formula> = seen.into_iter().collect();
    formulas.sort_by(|a, b| print_formula(a).cmp(&print_formula(b)));
    Fragment {
        formulas,
        grid,
        omega_n,
    }
}

/// All formulas of AST height at most `depth` over the signature's atoms
/// (the metric atom on two variables plus every relation atom on distinct
/// variables), closed under subformulas.
///
/// Height-1 formulas are the atoms; each extra level applies `half`,
/// `monus` (over pairs of the previous level), and `sup`/`inf` over each
/// free variable.
pub fn depth_fragment(
    sig: &ContinuousSignature,
    depth: usize,
    grid_l: u32,
    omega_n: u32,
) -> Fragment {
    let mut level: BTreeSet<Formula> = signature_atoms(sig).into_iter().collect();
    let mut all = level.clone();
    for _ in 1..depth {
        let prev: Vec<Formula> = level.iter().cloned().collect();
        let mut next = BTreeSet::new();
        for f in &prev {
            next.insert(Formula::half(f.clone()).alpha_normalize());
            for v in f.free_vars() {
                next.insert(Formula::sup(&v, f.clone()).alpha_normalize());
                next.insert(Formula::inf(&v, f.clone()).alpha_normalize());
            }
            for g in &prev {
                next.insert(Formula::monus(f.clone(), g.clone()).alpha_normalize());
            }
        }
        all.extend(next.iter().cloned());
        level = next;
    }
    let seed: Vec<Formula> = all.into_iter().collect();
    fragment_close(&seed, grid_l, omega_n)
}

/// The atoms of a signature: `d(x, y)` plus `R(x0, ..)` for every relation.
pub fn signature_atoms(sig: &ContinuousSignature) -> Vec<Formula> {
    let mut out = vec![Formula::Dist(Term::var("x"), Term::var("y"))];
    for r in &sig.relations {
        let args = (0..r.arity).map(|i| Term::Var(format!("x{i}"))).collect();
        out.push(Formula::Rel(r.name.clone(), args));
    }
    out
}

/// The uniform-continuity comparison formula `R(z0,..) -. R(z0',..)` with
/// disjoint variable tuples; its threshold relations are what the
/// relation-modulus axioms and the derived moduli speak about.
pub fn uc_monus_formula(rel: &RelationDecl) -> Formula {
    let left = (0..rel.arity).map(|i| Term::Var(format!("a{i}"))).collect();
    let right = (0..rel.arity).map(|i| Term::Var(format!("b{i}"))).collect();
    Formula::monus(
        Formula::Rel(rel.name.clone(), left),
        Formula::Rel(rel.name.clone(), right),
    )
    .alpha_normalize()
}

/// Depth fragment extended with the uniform-continuity monus formulas, so
/// the relation-modulus axiom group is materializable and moduli can be
/// derived on decode.
pub fn standard_fragment(
    sig: &ContinuousSignature,
    depth: usize,
    grid_l: u32,
    omega_n: u32,
) -> Fragment {
    let mut seed: Vec<Formula> = depth_fragment(sig, depth, grid_l, omega_n)
        .formulas()
        .to_vec();
    seed.push(Formula::Zero);
    seed.push(Formula::One);
    for r in &sig.relations {
        seed.push(uc_monus_formula(r));
    }
    fragment_close(&seed, grid_l, omega_n)
}

fn term_modulus(t: &Term, sig: &ContinuousSignature, eps: &Rat) -> Rat {
    match t {
        Term::Var(_) => eps.clone(),
        Term::App(f, args) => {
            let arg_bound = args
                .iter()
                .map(|a| term_modulus(a, sig, eps))
                .max()
                .unwrap_or_else(rat_zero);
            match sig.function(f) {
                Some(decl) if decl.arity == 0 => rat_zero(),
                Some(decl) => decl.modulus.inverse(&arg_bound),
                None => rat_one(),
            }
        }
    }
}

fn modulus_at(f: &Formula, sig: &ContinuousSignature, eps: &Rat) -> Rat {
    let w = match f {
        Formula::Zero | Formula::One => rat_zero(),
        Formula::Dist(a, b) => term_modulus(a, sig, eps) + term_modulus(b, sig, eps),
        Formula::Rel(name, args) => {
            let arg_bound = args
                .iter()
                .map(|a| term_modulus(a, sig, eps))
                .max()
                .unwrap_or_else(rat_zero);
            match sig.relation(name) {
                Some(decl) if decl.arity == 0 => rat_zero(),
                Some(decl) => {
                    if arg_bound.is_zero() {
                        rat_zero()
                    } else {
                        decl.modulus.inverse(&arg_bound)
                    }
                }
                None => rat_one(),
            }
        }
        Formula::Half(g) => modulus_at(g, sig, eps) / rat(2, 1),
        Formula::Monus(g, h) => modulus_at(g, sig, eps) + modulus_at(h, sig, eps),
        Formula::Sup(_, g) | Formula::Inf(_, g) => modulus_at(g, sig, eps),
    };
    min_rat(w, rat_one())
}

/// Compositional formula modulus `w` over the grid: for tuples at
/// max-coordinate distance `<= eps`, `|f(a) - f(b)| <= w(eps)`. Atoms use
/// the table inverse of the declared moduli, `d` contributes `2*eps`,
/// `monus` adds, `half` halves, quantifiers preserve the body's modulus;
/// everything is capped at 1.
pub fn formula_modulus(f: &Formula, sig: &ContinuousSignature, grid_l: u32) -> ModulusTable {
    let grid = Grid::new(grid_l);
    let mut entries = BTreeMap::new();
    for i in grid.points() {
        let eps = grid.value(i);
        let w = modulus_at(f, sig, &eps);
        entries.insert(eps, w);
    }
    // Compositional moduli are monotone by construction.
    ModulusTable { entries }
}

/// Evaluates the formula-modulus composition at an arbitrary `eps` (not
/// just grid points).
pub fn formula_modulus_at(f: &Formula, sig: &ContinuousSignature, eps: &Rat) -> Rat {
    modulus_at(f, sig, eps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::parse_rat;

    fn sig_with_unary_p() -> ContinuousSignature {
        let modulus = ModulusTable::new(
            [(rat(1, 2), rat(1, 2)), (rat(1, 1), rat(1, 1))]
                .into_iter()
                .collect(),
        )
        .unwrap();
        ContinuousSignature::new(
            vec![],
            vec![RelationDecl {
                name: "P".to_string(),
                arity: 1,
                modulus,
            }],
        )
        .unwrap()
    }

    #[test]
    fn parse_examples() {
        let sig = sig_with_unary_p();
        let f = parse_formula("monus(P(x), half(1))", &sig).unwrap();
        assert_eq!(
            f,
            Formula::monus(
                Formula::rel("P", vec![Term::var("x")]),
                Formula::half(Formula::One)
            )
        );
        let f = parse_formula("sup y. d(y, x)", &sig).unwrap();
        assert_eq!(
            f,
            Formula::Sup(
                "v0".to_string(),
                Box::new(Formula::Dist(Term::var("v0"), Term::var("x")))
            )
        );
        match parse_formula("P(x, y)", &sig) {
            Err(ParseError::ArityMismatch { expected: 1, got: 2, .. }) => {}
            other => panic!("expected arity mismatch, got {other:?}"),
        }
        assert!(matches!(
            parse_formula("Q(x)", &sig),
            Err(ParseError::UnknownSymbol { .. })
        ));
        assert!(matches!(
            parse_formula("monus(P(x)", &sig),
            Err(ParseError::Syntax { .. })
        ));
    }

    #[test]
    fn print_examples() {
        assert_eq!(print_formula(&Formula::Zero), "0");
        assert_eq!(print_formula(&Formula::half(Formula::One)), "half(1)");
        assert_eq!(
            print_formula(&Formula::sup(
                "x",
                Formula::Dist(Term::var("x"), Term::var("y"))
            )),
            "sup x. d(x, y)"
        );
    }

    #[test]
    fn print_parse_round_trip() {
        let sig = sig_with_unary_p();
        for text in [
            "monus(P(x), half(1))",
            "sup y. inf z. monus(d(y, z), P(x))",
            "half(half(0))",
        ] {
            let f = parse_formula(text, &sig).unwrap();
            let printed = print_formula(&f);
            let again = parse_formula(&printed, &sig).unwrap();
            assert_eq!(f, again);
        }
    }

    #[test]
    fn alpha_normalization_identifies_variants() {
        let sig = sig_with_unary_p();
        let a = parse_formula("sup y. P(y)", &sig).unwrap();
        let b = parse_formula("sup z. P(z)", &sig).unwrap();
        assert_eq!(a, b);
        // Bound names never collide with free names.
        let c = parse_formula("sup v0. d(v0, v1)", &sig).unwrap();
        if let Formula::Sup(v, _) = &c {
            assert_ne!(v, "v1");
        } else {
            panic!();
        }
    }

    #[test]
    fn fragment_closure_examples() {
        let sig = sig_with_unary_p();
        let p = parse_formula("P(x)", &sig).unwrap();
        let q = Formula::Dist(Term::var("x"), Term::var("y"));
        let m = Formula::monus(p.clone(), q.clone());
        let frag = fragment_close(&[m.clone()], 4, 2);
        assert_eq!(frag.formulas().len(), 3);
        assert!(frag.contains(&p) && frag.contains(&q) && frag.contains(&m));

        let empty = fragment_close(&[], 4, 2);
        assert!(empty.formulas().is_empty());

        let s = parse_formula("sup x. d(x, y)", &sig).unwrap();
        let frag = fragment_close(&[s.clone()], 4, 2);
        assert_eq!(frag.formulas().len(), 2);
    }

    #[test]
    fn fragment_close_idempotent_and_monotone() {
        let sig = sig_with_unary_p();
        let f = parse_formula("monus(half(P(x)), d(x, y))", &sig).unwrap();
        let frag1 = fragment_close(&[f.clone()], 4, 2);
        let frag2 = fragment_close(frag1.formulas(), 4, 2);
        assert_eq!(frag1, frag2);
        let g = parse_formula("sup x. P(x)", &sig).unwrap();
        let bigger = fragment_close(&[f, g], 4, 2);
        for h in frag1.formulas() {
            assert!(bigger.contains(h));
        }
    }

    #[test]
    fn formula_modulus_atoms() {
        let sig = sig_with_unary_p();
        let d = Formula::Dist(Term::var("x"), Term::var("y"));
        let w = formula_modulus(&d, &sig, 4);
        // w(eps) = min(1, 2 eps)
        assert_eq!(w.entries[&rat(1, 4)], rat(1, 2));
        assert_eq!(w.entries[&rat(3, 4)], rat(1, 1));

        let one = formula_modulus(&Formula::One, &sig, 4);
        assert!(one.entries.values().all(|v| v.is_zero()));

        let h = Formula::half(d.clone());
        let wh = formula_modulus(&h, &sig, 4);
        assert_eq!(wh.entries[&rat(1, 4)], rat(1, 4));
    }

    #[test]
    fn formula_modulus_monotone_and_capped() {
        let sig = sig_with_unary_p();
        let f = Formula::monus(
            Formula::rel("P", vec![Term::var("x")]),
            Formula::Dist(Term::var("x"), Term::var("y")),
        );
        let w = formula_modulus(&f, &sig, 8);
        let mut prev = rat(0, 1);
        for i in 0..=8u32 {
            let v = &w.entries[&parse_rat(&format!("{i}/8")).unwrap()];
            assert!(*v >= prev && *v <= rat(1, 1));
            prev = v.clone();
        }
    }

    #[test]
    fn modulus_table_invariants() {
        assert!(ModulusTable::new(
            [(rat(1, 2), rat(3, 4)), (rat(3, 4), rat(1, 2))]
                .into_iter()
                .collect()
        )
        .is_err());
        let m = ModulusTable::new(
            [(rat(1, 4), rat(1, 8)), (rat(1, 2), rat(1, 2))]
                .into_iter()
                .collect(),
        )
        .unwrap();
        assert_eq!(m.inverse(&rat(1, 4)), rat(1, 2));
        assert_eq!(m.inverse(&rat(3, 4)), rat(1, 1));
    }
}
