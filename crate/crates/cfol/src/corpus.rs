//! Deterministic generators for test structures: random grid-aligned
//! finite metric structures, finite probability algebras with their order
//! extraction, and dyadic level families.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use num_traits::Zero;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::densify::LevelFamily;
use crate::discretize::{build_signature_fragment, encode, materialize};
use crate::rational::{format_rat, rat, rat_one, rat_zero, Grid, Rat};
use crate::semantics::{tuple_index, tuples, ContinuousStructure, Theory};
use crate::syntax::{
    fragment_close, parse_formula, signature_atoms, uc_monus_formula, ContinuousSignature,
    Formula, FunctionDecl, ModulusTable, RelationDecl, Term,
};

/// Shape of a randomly generated signature: arities of the function and
/// relation symbols (named `f0, f1, ..` and `R0, R1, ..`).
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SigShape {
    pub function_arities: Vec<usize>,
    pub relation_arities: Vec<usize>,
}

/// Largest grid `s` such that every tuple pair within distance `s` has
/// table values differing by at most `r`: the measured-optimal modulus
/// entry. Using the non-strict reading makes the declared table equal to
/// the one later derived from threshold data.
fn optimal_delta(
    grid: Grid,
    m_metric: impl Fn(usize, usize) -> Rat,
    n: usize,
    arity: usize,
    diff: impl Fn(&[usize], &[usize]) -> Rat,
    r: &Rat,
) -> Rat {
    let tuple_dist = |a: &[usize], b: &[usize]| -> Rat {
        a.iter()
            .zip(b)
            .map(|(&x, &y)| m_metric(x, y))
            .max()
            .unwrap_or_else(rat_zero)
    };
    let mut best = 0u32;
    for gi in grid.points() {
        let s = grid.value(gi);
        let ok = tuples(n, arity).all(|a| {
            tuples(n, arity).all(|b| tuple_dist(&a, &b) > s || diff(&a, &b) <= *r)
        });
        if ok {
            best = gi;
        } else {
            break;
        }
    }
    grid.value(best)
}

fn measured_relation_modulus(grid: Grid, metric: &[Rat], n: usize, arity: usize, table: &[Rat]) -> ModulusTable {
    let mut entries = BTreeMap::new();
    for gi in grid.points() {
        let r = grid.value(gi);
        let delta = optimal_delta(
            grid,
            |x, y| metric[x * n + y].clone(),
            n,
            arity,
            |a, b| {
                let (va, vb) = (&table[tuple_index(n, a)], &table[tuple_index(n, b)]);
                if va >= vb { va - vb } else { vb - va }
            },
            &r,
        );
        entries.insert(r, delta);
    }
    ModulusTable::new(entries).expect("measured modulus is monotone and in range")
}

fn measured_function_modulus(grid: Grid, metric: &[Rat], n: usize, arity: usize, table: &[usize]) -> ModulusTable {
    let mut entries = BTreeMap::new();
    for gi in grid.points() {
        let r = grid.value(gi);
        let delta = optimal_delta(
            grid,
            |x, y| metric[x * n + y].clone(),
            n,
            arity,
            |a, b| metric[table[tuple_index(n, a)] * n + table[tuple_index(n, b)]].clone(),
            &r,
        );
        entries.insert(r, delta);
    }
    ModulusTable::new(entries).expect("measured modulus is monotone and in range")
}

/// Random positive grid-aligned symmetric table repaired to a metric by
/// shortest-path closure.
fn random_metric(rng: &mut ChaCha8Rng, n: usize, grid: Grid) -> Vec<Rat> {
    let mut table = alloc::vec![rat_zero(); n * n];
    for i in 0..n {
        for j in i + 1..n {
            let gi = rng.random_range(1..=grid.l);
            table[i * n + j] = grid.value(gi);
            table[j * n + i] = grid.value(gi);
        }
    }
    // Floyd-Warshall min-plus closure: triangle repair that preserves
    // symmetry, positivity, and grid alignment.
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                let via = table[i * n + k].clone() + &table[k * n + j];
                if via < table[i * n + j] {
                    table[i * n + j] = via;
                }
            }
        }
    }
    table
}

/// Deterministic random structure: grid-aligned repaired metric, random
/// grid relation values, random function tables, measured-optimal moduli.
/// Always passes metric and uniform-continuity validation.
pub fn gen_random_structure(
    seed: u64,
    n: usize,
    grid_l: u32,
    shape: &SigShape,
) -> ContinuousStructure {
    assert!(n >= 1, "need at least one element");
    let grid = Grid::new(grid_l);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let metric = random_metric(&mut rng, n, grid);
    let universe: Vec<String> = (0..n).map(|i| format!("e{i}")).collect();
    let mut func_tables: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    let mut functions = Vec::new();
    for (fi, &arity) in shape.function_arities.iter().enumerate() {
        let name = format!("f{fi}");
        let table: Vec<usize> = (0..n.pow(arity as u32))
            .map(|_| rng.random_range(0..n))
            .collect();
        functions.push(FunctionDecl {
            name: name.clone(),
            arity,
            modulus: measured_function_modulus(grid, &metric, n, arity, &table),
        });
        func_tables.insert(name, table);
    }
    let mut rel_tables: BTreeMap<String, Vec<Rat>> = BTreeMap::new();
    let mut relations = Vec::new();
    for (ri, &arity) in shape.relation_arities.iter().enumerate() {
        let name = format!("R{ri}");
        let table: Vec<Rat> = (0..n.pow(arity as u32))
            .map(|_| grid.value(rng.random_range(0..=grid.l)))
            .collect();
        relations.push(RelationDecl {
            name: name.clone(),
            arity,
            modulus: measured_relation_modulus(grid, &metric, n, arity, &table),
        });
        rel_tables.insert(name, table);
    }
    let sig = ContinuousSignature::new(functions, relations).expect("fresh names");
    ContinuousStructure::new(sig, universe, metric, func_tables, rel_tables)
        .expect("generated structure is valid by construction")
}

/// A finite probability algebra: the subsets of `k` weighted atoms modulo
/// measure-zero symmetric difference, with boolean operations as
/// functions, the measure as a unary relation, and `d(A, B) = mu(A xor B)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProbabilityAlgebra {
    pub weights: Vec<Rat>,
    /// Representative atom masks of the merged elements, in element order.
    pub masks: Vec<u32>,
    pub structure: ContinuousStructure,
    /// Closed conditions (each asserted `= 0`) expressible in the
    /// connective grammar: lattice identities, complement laws, measure
    /// normalization, and the 1-Lipschitz bound on the measure.
    pub theory: Theory,
}

fn mask_name(mask: u32, k: usize) -> String {
    let atoms: Vec<String> = (0..k).filter(|&i| mask >> i & 1 == 1).map(|i| i.to_string()).collect();
    format!("{{{}}}", atoms.join(","))
}

/// Builds the 2^k-subset algebra (distance-0 subsets merged) together
/// with its finitely-expressible bundled conditions.
pub fn gen_probability_algebra(weights: &[Rat], grid_l: u32) -> ProbabilityAlgebra {
    let k = weights.len();
    assert!(k >= 1 && k <= 16, "atom count out of range");
    assert!(weights.iter().all(|w| *w >= rat_zero()), "negative weight");
    assert!(
        weights.iter().cloned().sum::<Rat>() == rat_one(),
        "weights must sum to 1"
    );
    let mu_of = |mask: u32| -> Rat {
        (0..k)
            .filter(|&i| mask >> i & 1 == 1)
            .map(|i| weights[i].clone())
            .sum()
    };
    // Merge masks whose symmetric difference has measure 0; the class
    // representative is the smallest mask.
    let full = (1u32 << k) - 1;
    let mut rep_of: BTreeMap<u32, u32> = BTreeMap::new();
    let mut masks: Vec<u32> = Vec::new();
    for m in 0..=full {
        let rep = masks
            .iter()
            .copied()
            .find(|&r| mu_of(r ^ m).is_zero())
            .unwrap_or(m);
        if rep == m {
            masks.push(m);
        }
        rep_of.insert(m, rep);
    }
    let index_of: BTreeMap<u32, usize> = masks.iter().enumerate().map(|(i, &m)| (m, i)).collect();
    let elem = |mask: u32| index_of[&rep_of[&mask]];
    let n = masks.len();
    let universe: Vec<String> = masks.iter().map(|&m| mask_name(m, k)).collect();
    let mut metric = Vec::with_capacity(n * n);
    for &a in &masks {
        for &b in &masks {
            metric.push(mu_of(a ^ b));
        }
    }
    let mut func_tables: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    func_tables.insert("zero".to_string(), alloc::vec![elem(0)]);
    func_tables.insert("one".to_string(), alloc::vec![elem(full)]);
    func_tables.insert(
        "compl".to_string(),
        masks.iter().map(|&m| elem(full & !m)).collect(),
    );
    let mut meet = Vec::with_capacity(n * n);
    let mut join = Vec::with_capacity(n * n);
    for &a in &masks {
        for &b in &masks {
            meet.push(elem(a & b));
            join.push(elem(a | b));
        }
    }
    func_tables.insert("meet".to_string(), meet);
    func_tables.insert("join".to_string(), join);
    let mu_table: Vec<Rat> = masks.iter().map(|&m| mu_of(m)).collect();
    let grid = Grid::new(grid_l);
    let arities: &[(&str, usize)] = &[
        ("zero", 0),
        ("one", 0),
        ("compl", 1),
        ("meet", 2),
        ("join", 2),
    ];
    let functions: Vec<FunctionDecl> = arities
        .iter()
        .map(|&(name, arity)| FunctionDecl {
            name: name.to_string(),
            arity,
            modulus: measured_function_modulus(grid, &metric, n, arity, &func_tables[name]),
        })
        .collect();
    let relations = alloc::vec![RelationDecl {
        name: "mu".to_string(),
        arity: 1,
        modulus: measured_relation_modulus(grid, &metric, n, 1, &mu_table),
    }];
    let sig = ContinuousSignature::new(functions, relations).expect("fresh names");
    let structure = ContinuousStructure::new(
        sig.clone(),
        universe,
        metric,
        func_tables,
        [("mu".to_string(), mu_table)].into_iter().collect(),
    )
    .expect("probability algebra is a valid structure");
    let conditions: Vec<Formula> = [
        "sup x. d(meet(x, x), x)",
        "sup x. sup y. d(meet(x, y), meet(y, x))",
        "sup x. sup y. d(join(x, y), join(y, x))",
        "sup x. sup y. sup z. d(meet(x, meet(y, z)), meet(meet(x, y), z))",
        "sup x. sup y. sup z. d(join(x, join(y, z)), join(join(x, y), z))",
        "sup x. d(join(x, zero), x)",
        "sup x. d(meet(x, one), x)",
        "sup x. d(meet(x, compl(x)), zero)",
        "sup x. d(join(x, compl(x)), one)",
        "mu(zero)",
        "monus(1, mu(one))",
        "sup x. sup y. monus(monus(mu(x), mu(y)), d(x, y))",
    ]
    .iter()
    .map(|s| parse_formula(s, &sig).expect("bundled condition parses"))
    .collect();
    ProbabilityAlgebra {
        weights: weights.to_vec(),
        masks,
        structure,
        theory: Theory { conditions },
    }
}

impl ProbabilityAlgebra {
    pub fn mu(&self, e: usize) -> &Rat {
        &self.structure.relations["mu"][e]
    }

    /// `x` precedes `y` when `mu(x) -. mu(meet(x, y)) = 0`, i.e. `x` is
    /// contained in `y` up to measure zero.
    pub fn precedes(&self, x: usize, y: usize) -> bool {
        let n = self.structure.size();
        let m = self.structure.functions["meet"][x * n + y];
        self.mu(m) >= self.mu(x)
    }
}

/// Greedily extracts a maximal chain under the algebra's order, starting
/// from the zero element and always stepping to the smallest-measure
/// successor. On the k-atom uniform algebra the chain has length k + 1.
pub fn extract_order_chain(p: &ProbabilityAlgebra) -> Vec<usize> {
    let n = p.structure.size();
    let mut current = p.structure.functions["zero"][0];
    let mut chain = alloc::vec![current];
    loop {
        let next = (0..n)
            .filter(|&y| y != current && p.precedes(current, y) && p.mu(y) > p.mu(current))
            .min_by_key(|&y| (p.mu(y).clone(), y));
        match next {
            Some(y) => {
                chain.push(y);
                current = y;
            }
            None => return chain,
        }
    }
}

/// Specification of the 1-Lipschitz unary relation of a dyadic family:
/// `P(x) = |x - anchor|`, clamped into `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DyadicRelSpec {
    pub anchor: Rat,
}

impl DyadicRelSpec {
    fn value(&self, x: &Rat) -> Rat {
        let v = if *x >= self.anchor {
            x - &self.anchor
        } else {
            &self.anchor - x
        };
        if v > rat_one() {
            rat_one()
        } else {
            v
        }
    }
}

/// The dyadic level family: level `k` holds the dyadics `i/2^k` in
/// `[0, 1]` with `d = |x - y|` and the unary relation from `rel_spec`,
/// all levels encoded over one shared quantifier-free fragment at grid
/// `L = 2^levels`. Refinement rate 1/2.
pub fn gen_dyadic_family(levels: u32, rel_spec: &DyadicRelSpec, omega_n: u32) -> LevelFamily {
    assert!((1..=12).contains(&levels), "level count out of range");
    let grid_l = 1u32 << levels;
    let grid = Grid::new(grid_l);
    // Shared signature: modulus measured on the finest level so every
    // level satisfies it.
    let top_points: Vec<Rat> = (0..=grid_l).map(|i| grid.value(i)).collect();
    let abs_diff = |x: &Rat, y: &Rat| if x >= y { x - y } else { y - x };
    let top_n = top_points.len();
    let mut top_metric = Vec::with_capacity(top_n * top_n);
    for x in &top_points {
        for y in &top_points {
            top_metric.push(abs_diff(x, y));
        }
    }
    let top_table: Vec<Rat> = top_points.iter().map(|x| rel_spec.value(x)).collect();
    let sig = ContinuousSignature::new(
        Vec::new(),
        alloc::vec![RelationDecl {
            name: "P".to_string(),
            arity: 1,
            modulus: measured_relation_modulus(grid, &top_metric, top_n, 1, &top_table),
        }],
    )
    .expect("fresh names");
    // Quantifier-free fragment: threshold truth on a tuple is then
    // independent of the ambient level, so inclusions restrict.
    let mut seed: Vec<Formula> = signature_atoms(&sig);
    seed.push(Formula::Zero);
    seed.push(Formula::One);
    seed.push(uc_monus_formula(&sig.relations[0]));
    seed.push(Formula::half(Formula::Rel(
        "P".to_string(),
        alloc::vec![Term::var("x0")],
    )));
    let fragment = fragment_close(&seed, grid_l, omega_n);
    let dsig = build_signature_fragment(&sig, &fragment).expect("fragment has the distance atom");
    let mut out_levels = Vec::with_capacity(levels as usize + 1);
    for level in 0..=levels {
        let step = 1u32 << (levels - level);
        let points: Vec<Rat> = (0..=grid_l).step_by(step as usize).map(|i| grid.value(i)).collect();
        let n = points.len();
        let mut metric = Vec::with_capacity(n * n);
        for x in &points {
            for y in &points {
                metric.push(abs_diff(x, y));
            }
        }
        let table: Vec<Rat> = points.iter().map(|x| rel_spec.value(x)).collect();
        let universe: Vec<String> = points.iter().map(|x| format!("p{}", format_rat(x))).collect();
        let m = ContinuousStructure::new(
            sig.clone(),
            universe,
            metric,
            BTreeMap::new(),
            [("P".to_string(), table)].into_iter().collect(),
        )
        .expect("dyadic level is a valid structure");
        let all: Vec<usize> = (0..n).collect();
        out_levels.push(materialize(&encode(&m, &all, &dsig).expect("level encodes")));
    }
    LevelFamily {
        levels: out_levels,
        rate: rat(1, 2),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::densify::{check_completable, validate_level_family};
    use crate::semantics::{check_metric, check_uniform_continuity, models_theory};

    fn shape() -> SigShape {
        SigShape {
            function_arities: alloc::vec![1],
            relation_arities: alloc::vec![1, 2],
        }
    }

    #[test]
    fn random_structures_valid_and_deterministic() {
        for seed in 0..20u64 {
            let m = gen_random_structure(seed, 5, 8, &shape());
            check_metric(m.size(), &m.metric).unwrap();
            check_uniform_continuity(&m).unwrap();
        }
        let a = gen_random_structure(7, 5, 8, &shape());
        let b = gen_random_structure(7, 5, 8, &shape());
        assert_eq!(a, b);
        let c = gen_random_structure(8, 5, 8, &shape());
        assert_ne!(a, c);
    }

    #[test]
    fn one_point_structure() {
        let m = gen_random_structure(0, 1, 4, &SigShape::default());
        assert_eq!(m.size(), 1);
        check_metric(1, &m.metric).unwrap();
    }

    #[test]
    fn probability_algebra_uniform_two_atoms() {
        let p = gen_probability_algebra(&[rat(1, 2), rat(1, 2)], 8);
        assert_eq!(p.structure.size(), 4);
        // d({0}, {1}) = mu of the full symmetric difference = 1.
        let i0 = p.masks.iter().position(|&m| m == 0b01).unwrap();
        let i1 = p.masks.iter().position(|&m| m == 0b10).unwrap();
        assert_eq!(*p.structure.dist(i0, i1), rat_one());
        assert_eq!(*p.mu(p.structure.functions["zero"][0]), rat_zero());
        assert_eq!(*p.mu(p.structure.functions["one"][0]), rat_one());
        assert!(models_theory(&p.structure, &p.theory).is_ok());
        let chain = extract_order_chain(&p);
        assert_eq!(chain.len(), 3);
    }

    #[test]
    fn probability_algebra_merges_null_sets() {
        // A zero-weight atom makes {1} equivalent to the empty set.
        let p = gen_probability_algebra(&[rat(1, 1), rat_zero()], 4);
        assert_eq!(p.structure.size(), 2);
        assert!(models_theory(&p.structure, &p.theory).is_ok());
        let chain = extract_order_chain(&p);
        assert_eq!(chain.len(), 2);
    }

    #[test]
    fn order_is_reflexive_and_transitive() {
        let p = gen_probability_algebra(&[rat(1, 2), rat(1, 4), rat(1, 4)], 8);
        let n = p.structure.size();
        for x in 0..n {
            assert!(p.precedes(x, x));
            for y in 0..n {
                for z in 0..n {
                    if p.precedes(x, y) && p.precedes(y, z) {
                        assert!(p.precedes(x, z));
                    }
                }
            }
        }
        assert_eq!(extract_order_chain(&p).len(), 4);
    }

    #[test]
    fn dyadic_family_shape_and_validity() {
        let fam = gen_dyadic_family(2, &DyadicRelSpec { anchor: rat_zero() }, 2);
        let sizes: Vec<usize> = fam.levels.iter().map(|l| l.size()).collect();
        assert_eq!(sizes, alloc::vec![2, 3, 5]);
        validate_level_family(&fam).unwrap();
        let report = check_completable(&fam, 1).unwrap();
        assert!(report.pass, "{:?}", report.witness);
    }

    #[test]
    fn dyadic_family_deterministic() {
        let spec = DyadicRelSpec { anchor: rat(1, 4) };
        let a = gen_dyadic_family(3, &spec, 2);
        let b = gen_dyadic_family(3, &spec, 2);
        assert_eq!(a, b);
        validate_level_family(&a).unwrap();
    }
}
