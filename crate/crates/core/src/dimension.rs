//! The dimension monoid of a finite lattice: generators `g[x,y]` for
//! `x < y`, one relation `g[x,z] = g[x,y] + g[y,z]` per chain `x <= y <= z`
//! and one relation `g[x/\y,x] = g[y,x\/y]` per transposed pair.
//!
//! The word problem is attacked from two sides. A bounded bidirectional
//! rewrite search finds equalities; two families of certificates refute
//! them: per-class prime-interval weights (kept only for the class
//! components that every relation provably preserves) and the
//! principal-congruence join, which maps each generator to the lattice
//! congruence it collapses. All verdicts are three-valued: `Inconclusive`
//! means the bound ran out, never that the answer is known.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::egroup::EElement;
use crate::exec::CancelToken;
use crate::lattice::{FiniteLattice, LatticeCongruence, LatticeError, ProjectivityClasses};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DimError {
    #[error("unknown element `{0}`")]
    UnknownElement(String),
    #[error("interval [{0},{1}] is not ordered")]
    NotAnInterval(String, String),
    #[error("search budget exhausted")]
    BudgetExhausted,
    #[error("ideal membership inconclusive for {0}")]
    MembershipInconclusive(String),
    #[error("lattice is not modular")]
    NotModular,
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Lattice(#[from] LatticeError),
}

/// A formal nonnegative combination of interval generators.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct DimElement {
    counts: BTreeMap<usize, u32>,
}

impl DimElement {
    pub fn zero() -> Self {
        DimElement::default()
    }

    pub fn generator(gen: usize) -> Self {
        let mut counts = BTreeMap::new();
        counts.insert(gen, 1);
        DimElement { counts }
    }

    pub fn is_zero(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn total(&self) -> u32 {
        self.counts.values().sum()
    }

    pub fn count(&self, gen: usize) -> u32 {
        self.counts.get(&gen).copied().unwrap_or(0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, u32)> + '_ {
        self.counts.iter().map(|(&g, &c)| (g, c))
    }

    pub fn add(&self, other: &DimElement) -> DimElement {
        let mut out = self.clone();
        for (g, c) in other.iter() {
            *out.counts.entry(g).or_insert(0) += c;
        }
        out
    }

    pub fn add_gen(&self, gen: usize, times: u32) -> DimElement {
        let mut out = self.clone();
        if times > 0 {
            *out.counts.entry(gen).or_insert(0) += times;
        }
        out
    }

    pub fn contains(&self, other: &DimElement) -> bool {
        other.iter().all(|(g, c)| self.count(g) >= c)
    }

    /// Multiset difference; caller must ensure containment.
    pub fn minus(&self, other: &DimElement) -> DimElement {
        let mut out = self.clone();
        for (g, c) in other.iter() {
            let e = out.counts.get_mut(&g).expect("minus underflow");
            *e -= c;
            if *e == 0 {
                out.counts.remove(&g);
            }
        }
        out
    }

    /// Componentwise minimum.
    pub fn meet(&self, other: &DimElement) -> DimElement {
        let mut counts = BTreeMap::new();
        for (g, c) in self.iter() {
            let m = c.min(other.count(g));
            if m > 0 {
                counts.insert(g, m);
            }
        }
        DimElement { counts }
    }

    /// All sub-multisets, in a deterministic order.
    pub fn sub_multisets(&self) -> Vec<DimElement> {
        let items: Vec<(usize, u32)> = self.iter().collect();
        let mut out = vec![DimElement::zero()];
        for (g, c) in items {
            let mut next = Vec::with_capacity(out.len() * (c as usize + 1));
            for base in &out {
                for k in 0..=c {
                    next.push(base.add_gen(g, k));
                }
            }
            out = next;
        }
        out
    }
}

/// Verdict of the bounded equality decision.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum EqVerdict {
    Equal { path: Vec<String> },
    Distinct { certificate: Certificate },
    Inconclusive,
}

impl EqVerdict {
    pub fn is_equal(&self) -> bool {
        matches!(self, EqVerdict::Equal { .. })
    }
    pub fn is_distinct(&self) -> bool {
        matches!(self, EqVerdict::Distinct { .. })
    }
}

/// Verdict of the bounded divisibility decision for the algebraic order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum LeqVerdict {
    Leq { complement: String },
    NotLeq { certificate: Certificate },
    Inconclusive,
}

impl LeqVerdict {
    pub fn is_leq(&self) -> bool {
        matches!(self, LeqVerdict::Leq { .. })
    }
    pub fn is_not_leq(&self) -> bool {
        matches!(self, LeqVerdict::NotLeq { .. })
    }
}

/// A separating invariant, rendered for reports.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Certificate {
    pub kind: String,
    pub lhs: String,
    pub rhs: String,
}

/// Presentation of the dimension monoid of a finite lattice, with bounded
/// decision machinery attached.
#[derive(Debug, Clone)]
pub struct DimMonoid {
    lattice: FiniteLattice,
    gens: Vec<(usize, usize)>,
    gen_index: HashMap<(usize, usize), usize>,
    relations: Vec<(DimElement, DimElement)>,
    bound: u32,
    proj: ProjectivityClasses,
    /// Per generator, per projectivity class: prime counts along one fixed
    /// maximal chain of the interval.
    weights: Vec<Vec<u32>>,
    /// Class components that every relation preserves.
    enabled_components: Vec<usize>,
    /// Principal congruence collapsed by each generator.
    gen_congruence: Vec<LatticeCongruence>,
    /// Whether the congruence join respects every relation.
    congruence_enabled: bool,
    /// Relations added beyond the presentation (from ideal quotients).
    extra_relations: usize,
}

impl DimMonoid {
    pub fn new(lattice: &FiniteLattice, bound: u32) -> Self {
        let n = lattice.len();
        let mut gens = Vec::new();
        let mut gen_index = HashMap::new();
        for x in 0..n {
            for y in 0..n {
                if lattice.lt(x, y) {
                    gen_index.insert((x, y), gens.len());
                    gens.push((x, y));
                }
            }
        }
        let mut relations = Vec::new();
        let mut seen = HashSet::new();
        // Additivity along chains.
        for x in 0..n {
            for y in 0..n {
                for z in 0..n {
                    if lattice.lt(x, y) && lattice.lt(y, z) {
                        let l = DimElement::generator(gen_index[&(x, z)]);
                        let r = DimElement::generator(gen_index[&(x, y)])
                            .add(&DimElement::generator(gen_index[&(y, z)]));
                        if seen.insert((l.clone(), r.clone())) {
                            relations.push((l, r));
                        }
                    }
                }
            }
        }
        // Transposition invariance for incomparable pairs.
        for x in 0..n {
            for y in 0..n {
                if lattice.leq(x, y) || lattice.leq(y, x) {
                    continue;
                }
                let m = lattice.meet(x, y);
                let j = lattice.join(x, y);
                let l = DimElement::generator(gen_index[&(m, x)]);
                let r = DimElement::generator(gen_index[&(y, j)]);
                if l != r && seen.insert((l.clone(), r.clone())) {
                    relations.push((l, r));
                }
            }
        }
        let proj = lattice.projectivity_classes();
        let weights = Self::chain_weights(lattice, &gens, &proj);
        let gen_congruence: Vec<LatticeCongruence> = gens
            .iter()
            .map(|&(x, y)| lattice.principal_congruence(x, y))
            .collect();
        let mut monoid = DimMonoid {
            lattice: lattice.clone(),
            gens,
            gen_index,
            relations,
            bound,
            proj,
            weights,
            enabled_components: Vec::new(),
            gen_congruence,
            congruence_enabled: false,
            extra_relations: 0,
        };
        monoid.verify_invariants();
        monoid
    }

    // One fixed maximal chain per interval, walked greedily through the
    // least admissible cover; counts per projectivity class.
    fn chain_weights(
        lattice: &FiniteLattice,
        gens: &[(usize, usize)],
        proj: &ProjectivityClasses,
    ) -> Vec<Vec<u32>> {
        gens.iter()
            .map(|&(x, y)| {
                let mut w = vec![0u32; proj.class_count()];
                let mut cur = x;
                while cur != y {
                    let next = (0..lattice.len())
                        .find(|&z| {
                            lattice.lt(cur, z)
                                && lattice.leq(z, y)
                                && !(0..lattice.len()).any(|v| {
                                    lattice.lt(cur, v) && lattice.lt(v, z) && lattice.leq(v, y)
                                })
                        })
                        .expect("interval has a cover chain");
                    let class = proj
                        .class_of_prime(cur, next)
                        .expect("chain step is a cover");
                    w[class] += 1;
                    cur = next;
                }
                w
            })
            .collect()
    }

    // Re-derives which certificates survive the current relation set.
    fn verify_invariants(&mut self) {
        let classes = self.proj.class_count();
        self.enabled_components = (0..classes)
            .filter(|&c| {
                self.relations.iter().all(|(l, r)| {
                    self.raw_weight_component(l, c) == self.raw_weight_component(r, c)
                })
            })
            .collect();
        self.congruence_enabled = self
            .relations
            .iter()
            .all(|(l, r)| self.raw_congruence(l) == self.raw_congruence(r));
    }

    fn raw_weight_component(&self, x: &DimElement, class: usize) -> u64 {
        x.iter()
            .map(|(g, c)| u64::from(self.weights[g][class]) * u64::from(c))
            .sum()
    }

    fn raw_congruence(&self, x: &DimElement) -> LatticeCongruence {
        let mut acc = LatticeCongruence::identity(self.lattice.len());
        for (g, _) in x.iter() {
            acc = acc.join(&self.gen_congruence[g]);
        }
        acc
    }

    pub fn lattice(&self) -> &FiniteLattice {
        &self.lattice
    }

    pub fn bound(&self) -> u32 {
        self.bound
    }

    pub fn generator_count(&self) -> usize {
        self.gens.len()
    }

    pub fn relation_count(&self) -> usize {
        self.relations.len()
    }

    pub fn relations(&self) -> &[(DimElement, DimElement)] {
        &self.relations
    }

    pub fn generator_interval(&self, gen: usize) -> (usize, usize) {
        self.gens[gen]
    }

    pub fn projectivity(&self) -> &ProjectivityClasses {
        &self.proj
    }

    pub fn enabled_weight_components(&self) -> &[usize] {
        &self.enabled_components
    }

    pub fn congruence_certificates_enabled(&self) -> bool {
        self.congruence_enabled
    }

    pub fn invariant_summary(&self) -> String {
        format!(
            "{} of {} weight components enabled, congruence join {}",
            self.enabled_components.len(),
            self.proj.class_count(),
            if self.congruence_enabled {
                "enabled"
            } else {
                "disabled"
            }
        )
    }

    /// Weight vector restricted to the verified components.
    pub fn weight_vector(&self, x: &DimElement) -> Vec<u64> {
        self.enabled_components
            .iter()
            .map(|&c| self.raw_weight_component(x, c))
            .collect()
    }

    /// Congruence-join invariant, if verified for this relation set.
    pub fn congruence_invariant(&self, x: &DimElement) -> Option<LatticeCongruence> {
        self.congruence_enabled.then(|| self.raw_congruence(x))
    }

    /// The generator for an interval `x < y`.
    pub fn generator_for(&self, x: usize, y: usize) -> Result<usize, DimError> {
        self.gen_index.get(&(x, y)).copied().ok_or_else(|| {
            DimError::NotAnInterval(
                self.lattice.name(x).to_string(),
                self.lattice.name(y).to_string(),
            )
        })
    }

    /// Extended distance: `g[x/\y, x\/y]`, zero when `x = y`.
    pub fn delta(&self, x: usize, y: usize) -> DimElement {
        if x == y {
            return DimElement::zero();
        }
        let m = self.lattice.meet(x, y);
        let j = self.lattice.join(x, y);
        DimElement::generator(self.gen_index[&(m, j)])
    }

    pub fn delta_named(&self, x: &str, y: &str) -> Result<DimElement, DimError> {
        Ok(self.delta(self.lattice.element(x)?, self.lattice.element(y)?))
    }

    /// Builds an element from `(lo, hi)` name pairs, one unit each.
    pub fn element_from_intervals(
        &self,
        intervals: &[(String, String)],
    ) -> Result<DimElement, DimError> {
        let mut out = DimElement::zero();
        for (lo, hi) in intervals {
            let x = self.lattice.element(lo)?;
            let y = self.lattice.element(hi)?;
            if x == y {
                continue;
            }
            let g = self.generator_for(x, y)?;
            out = out.add_gen(g, 1);
        }
        Ok(out)
    }

    /// Parses `2*[x,y]+[u,v]` syntax.
    pub fn parse_element(&self, text: &str) -> Result<DimElement, DimError> {
        let mut out = DimElement::zero();
        let trimmed = text.trim();
        if trimmed == "0" {
            return Ok(out);
        }
        for part in trimmed.split('+') {
            let part = part.trim();
            let (mult, rest) = match part.split_once('*') {
                Some((m, r)) => (
                    m.trim().parse::<u32>().map_err(|_| {
                        DimError::InvalidInput(format!("bad multiplier in `{part}`"))
                    })?,
                    r.trim(),
                ),
                None => (1, part),
            };
            let inner = rest
                .strip_prefix('[')
                .and_then(|s| s.strip_suffix(']'))
                .ok_or_else(|| DimError::InvalidInput(format!("expected `[x,y]` in `{part}`")))?;
            let (lo, hi) = inner
                .split_once(',')
                .ok_or_else(|| DimError::InvalidInput(format!("expected `[x,y]` in `{part}`")))?;
            let x = self.lattice.element(lo.trim())?;
            let y = self.lattice.element(hi.trim())?;
            if x == y {
                continue;
            }
            let g = self.generator_for(x, y)?;
            out = out.add_gen(g, mult);
        }
        Ok(out)
    }

    pub fn render(&self, x: &DimElement) -> String {
        if x.is_zero() {
            return "0".to_string();
        }
        x.iter()
            .map(|(g, c)| {
                let (lo, hi) = self.gens[g];
                let body = format!("[{},{}]", self.lattice.name(lo), self.lattice.name(hi));
                if c == 1 {
                    body
                } else {
                    format!("{c}*{body}")
                }
            })
            .collect::<Vec<_>>()
            .join("+")
    }

    fn neighbors(&self, x: &DimElement, mult_bound: u32) -> Vec<DimElement> {
        let mut out = Vec::new();
        for (l, r) in &self.relations {
            for (from, to) in [(l, r), (r, l)] {
                if x.contains(from) {
                    let y = x.minus(from).add(to);
                    if y.total() <= mult_bound {
                        out.push(y);
                    }
                }
            }
        }
        out
    }

    /// Bounded bidirectional search for a rewrite path `a -> b`, with the
    /// monoid's default bounds.
    pub fn dim_equal(&self, a: &DimElement, b: &DimElement) -> EqVerdict {
        self.dim_equal_bounded(a, b, self.bound.max(a.total()).max(b.total()), 100_000)
    }

    pub fn dim_equal_bounded(
        &self,
        a: &DimElement,
        b: &DimElement,
        mult_bound: u32,
        node_budget: u64,
    ) -> EqVerdict {
        if a == b {
            return EqVerdict::Equal {
                path: vec![self.render(a)],
            };
        }
        for &c in &self.enabled_components {
            let (wa, wb) = (
                self.raw_weight_component(a, c),
                self.raw_weight_component(b, c),
            );
            if wa != wb {
                return EqVerdict::Distinct {
                    certificate: Certificate {
                        kind: format!("class-weight[{c}]"),
                        lhs: wa.to_string(),
                        rhs: wb.to_string(),
                    },
                };
            }
        }
        if self.congruence_enabled {
            let (pa, pb) = (self.raw_congruence(a), self.raw_congruence(b));
            if pa != pb {
                return EqVerdict::Distinct {
                    certificate: Certificate {
                        kind: "congruence-join".into(),
                        lhs: format!("{:?}", pa.blocks()),
                        rhs: format!("{:?}", pb.blocks()),
                    },
                };
            }
        }
        match self.find_path(a, b, mult_bound, node_budget) {
            Some(path) => EqVerdict::Equal {
                path: path.iter().map(|e| self.render(e)).collect(),
            },
            None => EqVerdict::Inconclusive,
        }
    }

    fn find_path(
        &self,
        a: &DimElement,
        b: &DimElement,
        mult_bound: u32,
        node_budget: u64,
    ) -> Option<Vec<DimElement>> {
        let mut fwd: HashMap<DimElement, Option<DimElement>> = HashMap::new();
        let mut bwd: HashMap<DimElement, Option<DimElement>> = HashMap::new();
        fwd.insert(a.clone(), None);
        bwd.insert(b.clone(), None);
        let mut qf = VecDeque::from([a.clone()]);
        let mut qb = VecDeque::from([b.clone()]);
        let mut nodes = 0u64;
        while !(qf.is_empty() && qb.is_empty()) {
            let expand_fwd = if qb.is_empty() {
                true
            } else if qf.is_empty() {
                false
            } else {
                qf.len() <= qb.len()
            };
            let (queue, this, other, fwd_side) = if expand_fwd {
                (&mut qf, &mut fwd, &mut bwd, true)
            } else {
                (&mut qb, &mut bwd, &mut fwd, false)
            };
            let Some(cur) = queue.pop_front() else {
                continue;
            };
            nodes += 1;
            if nodes > node_budget {
                return None;
            }
            for next in self.neighbors(&cur, mult_bound) {
                if this.contains_key(&next) {
                    continue;
                }
                this.insert(next.clone(), Some(cur.clone()));
                if other.contains_key(&next) {
                    let _ = fwd_side;
                    return Some(Self::stitch(&fwd, &bwd, &next));
                }
                queue.push_back(next);
            }
        }
        None
    }

    fn stitch(
        fwd: &HashMap<DimElement, Option<DimElement>>,
        bwd: &HashMap<DimElement, Option<DimElement>>,
        meet: &DimElement,
    ) -> Vec<DimElement> {
        let mut left = Vec::new();
        let mut cur = Some(meet.clone());
        while let Some(c) = cur {
            cur = fwd.get(&c).and_then(|p| p.clone());
            left.push(c);
        }
        left.reverse();
        let mut cur = bwd.get(meet).and_then(|p| p.clone());
        while let Some(c) = cur {
            cur = bwd.get(&c).and_then(|p| p.clone());
            left.push(c);
        }
        left
    }

    /// Bounded decision of the algebraic quasi-order `a <= b`.
    pub fn dim_leq(&self, a: &DimElement, b: &DimElement) -> LeqVerdict {
        self.dim_leq_bounded(a, b, self.bound.max(a.total()).max(b.total()), 100_000)
    }

    pub fn dim_leq_bounded(
        &self,
        a: &DimElement,
        b: &DimElement,
        mult_bound: u32,
        node_budget: u64,
    ) -> LeqVerdict {
        for &c in &self.enabled_components {
            let (wa, wb) = (
                self.raw_weight_component(a, c),
                self.raw_weight_component(b, c),
            );
            if wa > wb {
                return LeqVerdict::NotLeq {
                    certificate: Certificate {
                        kind: format!("class-weight[{c}]"),
                        lhs: wa.to_string(),
                        rhs: wb.to_string(),
                    },
                };
            }
        }
        if self.congruence_enabled {
            let (pa, pb) = (self.raw_congruence(a), self.raw_congruence(b));
            if !pa.refines(&pb) {
                return LeqVerdict::NotLeq {
                    certificate: Certificate {
                        kind: "congruence-join".into(),
                        lhs: format!("{:?}", pa.blocks()),
                        rhs: format!("{:?}", pb.blocks()),
                    },
                };
            }
        }
        // a <= b iff some rewrite of a embeds into some rewrite of b.
        let mut seen_a: HashSet<DimElement> = HashSet::from([a.clone()]);
        let mut seen_b: HashSet<DimElement> = HashSet::from([b.clone()]);
        let mut qa = VecDeque::from([a.clone()]);
        let mut qb = VecDeque::from([b.clone()]);
        if b.contains(a) {
            return LeqVerdict::Leq {
                complement: self.render(&b.minus(a)),
            };
        }
        let mut nodes = 0u64;
        while !(qa.is_empty() && qb.is_empty()) {
            nodes += 1;
            if nodes > node_budget {
                return LeqVerdict::Inconclusive;
            }
            if let Some(cur) = qa.pop_front() {
                for next in self.neighbors(&cur, mult_bound) {
                    if seen_a.insert(next.clone()) {
                        if let Some(b_el) = seen_b.iter().find(|b_el| b_el.contains(&next)) {
                            return LeqVerdict::Leq {
                                complement: self.render(&b_el.minus(&next)),
                            };
                        }
                        qa.push_back(next);
                    }
                }
            }
            if let Some(cur) = qb.pop_front() {
                for next in self.neighbors(&cur, mult_bound) {
                    if seen_b.insert(next.clone()) {
                        if let Some(a_el) = seen_a.iter().find(|a_el| next.contains(a_el)) {
                            return LeqVerdict::Leq {
                                complement: self.render(&next.minus(a_el)),
                            };
                        }
                        qb.push_back(next);
                    }
                }
            }
        }
        LeqVerdict::Inconclusive
    }

    /// Length of the longest cover chain from bottom to top; used to size
    /// rewrite bounds so full prime decompositions stay reachable.
    pub fn height(&self) -> u32 {
        let l = &self.lattice;
        let (bottom, top) = (l.bottom(), l.top());
        if bottom == top {
            return 0;
        }
        let g = self.gen_index[&(bottom, top)];
        self.weights[g].iter().sum::<u32>().max(1)
    }

    pub fn rewrite_bound_for(&self, x: &DimElement) -> u32 {
        (x.total() * self.height().max(1) + 2).max(self.bound)
    }
}

impl fmt::Display for DimMonoid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "dimension monoid: {} generators, {} relations ({} adjoined), {}",
            self.gens.len(),
            self.relations.len(),
            self.extra_relations,
            self.invariant_summary()
        )
    }
}

/// Shared equality cache for search-heavy operations.
#[derive(Default)]
pub struct EqCache {
    class_of: HashMap<DimElement, usize>,
    class_members: Vec<HashSet<DimElement>>,
}

impl EqCache {
    pub fn new() -> Self {
        EqCache::default()
    }

    /// Class id of `x`, computing and caching its rewrite component (up to
    /// `mult_bound`) on first sight.
    pub fn class_id(&mut self, m: &DimMonoid, x: &DimElement, mult_bound: u32) -> usize {
        if let Some(&id) = self.class_of.get(x) {
            return id;
        }
        let mut seen: HashSet<DimElement> = HashSet::from([x.clone()]);
        let mut queue = VecDeque::from([x.clone()]);
        let mut hit: Option<usize> = None;
        while let Some(cur) = queue.pop_front() {
            if let Some(&id) = self.class_of.get(&cur) {
                hit = Some(id);
                break;
            }
            for next in m.neighbors(&cur, mult_bound) {
                if seen.insert(next.clone()) {
                    queue.push_back(next);
                }
            }
        }
        let id = hit.unwrap_or_else(|| {
            self.class_members.push(HashSet::new());
            self.class_members.len() - 1
        });
        for el in seen {
            self.class_of.insert(el.clone(), id);
            self.class_members[id].insert(el);
        }
        id
    }

    pub fn equal(
        &mut self,
        m: &DimMonoid,
        x: &DimElement,
        y: &DimElement,
        mult_bound: u32,
    ) -> bool {
        if x == y {
            return true;
        }
        if m.weight_vector(x) != m.weight_vector(y) {
            return false;
        }
        self.class_id(m, x, mult_bound) == self.class_id(m, y, mult_bound)
    }

    pub fn members(&mut self, m: &DimMonoid, x: &DimElement, mult_bound: u32) -> Vec<DimElement> {
        let id = self.class_id(m, x, mult_bound);
        let mut v: Vec<DimElement> = self.class_members[id].iter().cloned().collect();
        // Largest first: full decompositions make the best refinement
        // candidates.
        v.sort_by(|a, b| b.total().cmp(&a.total()).then_with(|| a.cmp(b)));
        v
    }
}

/// One equation instance in a refinement report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RefinementCase {
    pub a0: String,
    pub a1: String,
    pub b0: String,
    pub b1: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RefinementReport {
    pub equations: u64,
    pub refined: u64,
    pub unresolved: Vec<RefinementCase>,
    pub complete: bool,
}

impl RefinementReport {
    pub fn all_refined(&self) -> bool {
        self.complete && self.unresolved.is_empty()
    }
}

/// Searches a 2x2 refinement for every equation `a0 + a1 = b0 + b1` whose
/// sides have total multiplicity at most `size_bound`.
pub fn refinement_check(m: &DimMonoid, size_bound: u32, node_budget: u64) -> RefinementReport {
    refinement_check_with(m, size_bound, node_budget, &CancelToken::new())
}

/// As [`refinement_check`], polling a cancellation token between
/// equations; a cancelled run returns its partial report with
/// `complete = false`.
pub fn refinement_check_with(
    m: &DimMonoid,
    size_bound: u32,
    node_budget: u64,
    cancel: &CancelToken,
) -> RefinementReport {
    let mut cache = EqCache::new();
    let mult_bound = (size_bound * m.height().max(1) + 2).max(m.bound());
    let mut elements = vec![DimElement::zero()];
    for g in 0..m.generator_count() {
        let mut next = Vec::new();
        for e in &elements {
            let room = size_bound - e.total();
            for k in 0..=room {
                next.push(e.add_gen(g, k));
            }
        }
        elements = next;
    }
    let mut by_class: BTreeMap<usize, Vec<DimElement>> = BTreeMap::new();
    for e in &elements {
        let id = cache.class_id(m, e, mult_bound);
        by_class.entry(id).or_default().push(e.clone());
    }
    let mut report = RefinementReport {
        equations: 0,
        refined: 0,
        unresolved: Vec::new(),
        complete: true,
    };
    let mut nodes = 0u64;
    for members in by_class.values() {
        for s in members {
            for t in members {
                if s > t {
                    continue;
                }
                for a0 in s.sub_multisets() {
                    let a1 = s.minus(&a0);
                    if a0 > a1 {
                        continue;
                    }
                    for b0 in t.sub_multisets() {
                        let b1 = t.minus(&b0);
                        if b0 > b1
                            || (s == t && (a0.clone(), a1.clone()) > (b0.clone(), b1.clone()))
                        {
                            continue;
                        }
                        report.equations += 1;
                        nodes += 1;
                        if nodes > node_budget || cancel.is_cancelled() {
                            report.complete = false;
                            return report;
                        }
                        match find_refinement(m, &mut cache, &a0, &a1, &b0, &b1, mult_bound) {
                            Some(c) => {
                                report.refined += 1;
                                debug_assert!(verify_refinement(
                                    m, &mut cache, &a0, &a1, &b0, &b1, &c, mult_bound
                                ));
                            }
                            None => report.unresolved.push(RefinementCase {
                                a0: m.render(&a0),
                                a1: m.render(&a1),
                                b0: m.render(&b0),
                                b1: m.render(&b1),
                            }),
                        }
                    }
                }
            }
        }
    }
    report
}

fn verify_refinement(
    m: &DimMonoid,
    cache: &mut EqCache,
    a0: &DimElement,
    a1: &DimElement,
    b0: &DimElement,
    b1: &DimElement,
    c: &[DimElement; 4],
    mult_bound: u32,
) -> bool {
    cache.equal(m, &c[0].add(&c[1]), a0, mult_bound)
        && cache.equal(m, &c[2].add(&c[3]), a1, mult_bound)
        && cache.equal(m, &c[0].add(&c[2]), b0, mult_bound)
        && cache.equal(m, &c[1].add(&c[3]), b1, mult_bound)
}

fn find_refinement(
    m: &DimMonoid,
    cache: &mut EqCache,
    a0: &DimElement,
    a1: &DimElement,
    b0: &DimElement,
    b1: &DimElement,
    mult_bound: u32,
) -> Option<[DimElement; 4]> {
    const CAND_CAP: usize = 64;
    let a0s = cache.members(m, a0, mult_bound);
    let b0s = cache.members(m, b0, mult_bound);
    let a1s = cache.members(m, a1, mult_bound);
    // Greedy: split off the common part of representatives of a0 and b0,
    // then complete through a representative of a1.
    for a0r in a0s.iter().take(CAND_CAP) {
        for b0r in b0s.iter().take(CAND_CAP) {
            let c00 = a0r.meet(b0r);
            let c01 = a0r.minus(&c00);
            let c10 = b0r.minus(&c00);
            for a1r in a1s.iter().take(CAND_CAP) {
                if !a1r.contains(&c10) {
                    continue;
                }
                let c11 = a1r.minus(&c10);
                if cache.equal(m, &c01.add(&c11), b1, mult_bound) {
                    return Some([c00, c01, c10, c11]);
                }
            }
        }
    }
    // Exhaustive fallback over splits of class representatives.
    for a0r in a0s.iter().take(CAND_CAP) {
        for c00 in a0r.sub_multisets() {
            let c01 = a0r.minus(&c00);
            for a1r in a1s.iter().take(CAND_CAP) {
                for c10 in a1r.sub_multisets() {
                    let c11 = a1r.minus(&c10);
                    if cache.equal(m, &c00.add(&c10), b0, mult_bound)
                        && cache.equal(m, &c01.add(&c11), b1, mult_bound)
                    {
                        return Some([c00, c01, c10, c11]);
                    }
                }
            }
        }
    }
    None
}

/// Three-valued ideal membership.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum MemberVerdict {
    Member,
    NotMember,
    Inconclusive,
}

/// An o-ideal given by generators: the least subset containing them that is
/// closed under addition and downward closed in the algebraic order.
#[derive(Debug, Clone)]
pub struct OIdeal {
    pub generators: Vec<DimElement>,
    pub bound: u32,
}

impl OIdeal {
    pub fn new(generators: Vec<DimElement>, bound: u32) -> Self {
        OIdeal { generators, bound }
    }

    /// Decides `x` in the ideal, within bounds.
    ///
    /// Membership searches sums of generators dominating `x`. The negative
    /// side uses certificates valid for every sum at once: a verified
    /// weight component vanishing on all generators but not on `x`, or the
    /// congruence join, which is idempotent and therefore bounded on sums.
    pub fn membership(&self, m: &DimMonoid, x: &DimElement) -> MemberVerdict {
        if x.is_zero() {
            return MemberVerdict::Member;
        }
        let mut sums: Vec<DimElement> = vec![DimElement::zero()];
        for _ in 0..self.bound {
            let mut next = Vec::new();
            for s in &sums {
                for g in &self.generators {
                    next.push(s.add(g));
                }
            }
            if next.is_empty() {
                break;
            }
            for s in &next {
                let mult = m.rewrite_bound_for(&x.add(s));
                if m.dim_leq_bounded(x, s, mult, 50_000).is_leq() {
                    return MemberVerdict::Member;
                }
            }
            sums = next;
        }
        for &c in m.enabled_weight_components() {
            let on_gens: u64 = self
                .generators
                .iter()
                .map(|g| m.raw_weight_component(g, c))
                .sum();
            if on_gens == 0 && m.raw_weight_component(x, c) > 0 {
                return MemberVerdict::NotMember;
            }
        }
        if m.congruence_enabled {
            let mut top = LatticeCongruence::identity(m.lattice.len());
            for g in &self.generators {
                top = top.join(&m.raw_congruence(g));
            }
            if !m.raw_congruence(x).refines(&top) {
                return MemberVerdict::NotMember;
            }
        }
        MemberVerdict::Inconclusive
    }

    /// Materializes the members among all elements of total multiplicity at
    /// most `mult_bound`. Errors if any membership is undecided.
    pub fn materialize(
        &self,
        m: &DimMonoid,
        mult_bound: u32,
    ) -> Result<BTreeSet<DimElement>, DimError> {
        let mut elements = vec![DimElement::zero()];
        for g in 0..m.generator_count() {
            let mut next = Vec::new();
            for e in &elements {
                let room = mult_bound - e.total();
                for k in 0..=room {
                    next.push(e.add_gen(g, k));
                }
            }
            elements = next;
        }
        let mut out = BTreeSet::new();
        for e in elements {
            match self.membership(m, &e) {
                MemberVerdict::Member => {
                    out.insert(e);
                }
                MemberVerdict::NotMember => {}
                MemberVerdict::Inconclusive => {
                    return Err(DimError::MembershipInconclusive(m.render(&e)))
                }
            }
        }
        Ok(out)
    }
}

/// Quotient presentation: the ideal generators are forced to zero and the
/// certificates are re-verified against the extended relation set.
pub fn quotient_by_o_ideal(m: &DimMonoid, ideal: &OIdeal) -> DimMonoid {
    let mut out = m.clone();
    for g in &ideal.generators {
        if !g.is_zero() {
            out.relations.push((g.clone(), DimElement::zero()));
            out.extra_relations += 1;
        }
    }
    out.verify_invariants();
    out
}

/// The congruence `x ~ y iff delta(x,y) in I`, verified compatible, plus
/// the quotient lattice.
pub fn collapse_by_o_ideal(
    m: &DimMonoid,
    ideal: &OIdeal,
) -> Result<(LatticeCongruence, FiniteLattice), DimError> {
    let n = m.lattice.len();
    let mut pairs = Vec::new();
    for x in 0..n {
        for y in x + 1..n {
            match ideal.membership(m, &m.delta(x, y)) {
                MemberVerdict::Member => pairs.push((x, y)),
                MemberVerdict::NotMember => {}
                MemberVerdict::Inconclusive => {
                    return Err(DimError::MembershipInconclusive(format!(
                        "delta({},{})",
                        m.lattice.name(x),
                        m.lattice.name(y)
                    )));
                }
            }
        }
    }
    // Transitive closure of the member pairs.
    let mut class_of: Vec<usize> = (0..n).collect();
    for &(x, y) in &pairs {
        let (cx, cy) = (class_of[x], class_of[y]);
        if cx != cy {
            let keep = cx.min(cy);
            let drop = cx.max(cy);
            for c in class_of.iter_mut() {
                if *c == drop {
                    *c = keep;
                }
            }
        }
    }
    let blocks: Vec<Vec<usize>> = {
        let mut map: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (i, &c) in class_of.iter().enumerate() {
            map.entry(c).or_default().push(i);
        }
        map.into_values().collect()
    };
    let theta = LatticeCongruence::from_blocks(n, &blocks);
    m.lattice.check_congruence(&theta)?;
    let quotient = m.lattice.quotient(&theta)?;
    Ok((theta, quotient))
}

/// Target of a monoid homomorphism out of a dimension monoid.
#[derive(Debug, Clone)]
pub enum HomTarget {
    Dim(Box<DimMonoid>),
    /// `Z^rank` with componentwise order; elements are nonnegative vectors.
    Simplicial(usize),
    /// Positive cone of the unit-and-generators ordered group.
    ECone,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TargetElem {
    Dim(DimElement),
    Vector(Vec<i64>),
    E(EElement),
}

impl TargetElem {
    fn add(&self, other: &TargetElem) -> TargetElem {
        match (self, other) {
            (TargetElem::Dim(a), TargetElem::Dim(b)) => TargetElem::Dim(a.add(b)),
            (TargetElem::Vector(a), TargetElem::Vector(b)) => {
                TargetElem::Vector(a.iter().zip(b).map(|(x, y)| x + y).collect())
            }
            (TargetElem::E(a), TargetElem::E(b)) => TargetElem::E(a.add(b)),
            _ => panic!("mixed target elements"),
        }
    }
}

/// A homomorphism given by generator images.
#[derive(Debug, Clone)]
pub struct MonoidHom {
    pub target: HomTarget,
    pub images: Vec<TargetElem>,
}

impl MonoidHom {
    pub fn apply(&self, x: &DimElement) -> TargetElem {
        let mut acc = match &self.target {
            HomTarget::Dim(_) => TargetElem::Dim(DimElement::zero()),
            HomTarget::Simplicial(r) => TargetElem::Vector(vec![0; *r]),
            HomTarget::ECone => TargetElem::E(EElement::zero()),
        };
        for (g, c) in x.iter() {
            for _ in 0..c {
                acc = acc.add(&self.images[g]);
            }
        }
        acc
    }

    fn target_equal(&self, a: &TargetElem, b: &TargetElem) -> bool {
        match (&self.target, a, b) {
            (HomTarget::Dim(n), TargetElem::Dim(x), TargetElem::Dim(y)) => {
                let bound = n.rewrite_bound_for(&x.add(y));
                n.dim_equal_bounded(x, y, bound, 50_000).is_equal()
            }
            (_, TargetElem::Vector(x), TargetElem::Vector(y)) => x == y,
            (_, TargetElem::E(x), TargetElem::E(y)) => x == y,
            _ => false,
        }
    }

    /// Checks that every source relation maps to a target equality.
    pub fn validate(&self, m: &DimMonoid) -> Vec<String> {
        let mut out = Vec::new();
        for (l, r) in &m.relations {
            if !self.target_equal(&self.apply(l), &self.apply(r)) {
                out.push(format!("{} = {}", m.render(l), m.render(r)));
            }
        }
        out
    }
}

/// One failed lifting in a V-homomorphism report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VFailure {
    pub element: String,
    pub split_left: String,
    pub split_right: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VReport {
    pub checked_elements: u64,
    pub checked_splits: u64,
    pub failures: Vec<VFailure>,
    pub complete: bool,
}

impl VReport {
    pub fn is_v_homomorphism(&self) -> bool {
        self.failures.is_empty() && self.complete
    }
}

fn render_target(t: &TargetElem, hom: &MonoidHom) -> String {
    match (t, &hom.target) {
        (TargetElem::Dim(x), HomTarget::Dim(n)) => n.render(x),
        (TargetElem::Vector(v), _) => crate::interp::fmt_vec(v),
        (TargetElem::E(e), _) => e.to_string(),
        _ => "?".into(),
    }
}

/// Checks the splitting-lift property: for each source element `c` of
/// multiplicity at most `size_bound` and each target splitting
/// `hom(c) = a + b`, some source splitting `c = a' + b'` maps onto it.
pub fn is_v_homomorphism(
    m: &DimMonoid,
    hom: &MonoidHom,
    size_bound: u32,
    node_budget: u64,
) -> VReport {
    let mut report = VReport {
        checked_elements: 0,
        checked_splits: 0,
        failures: Vec::new(),
        complete: true,
    };
    let mut elements = vec![DimElement::zero()];
    for g in 0..m.generator_count() {
        let mut next = Vec::new();
        for e in &elements {
            let room = size_bound - e.total();
            for k in 0..=room {
                next.push(e.add_gen(g, k));
            }
        }
        elements = next;
    }
    let mut cache = EqCache::new();
    let mut nodes = 0u64;
    for c in &elements {
        report.checked_elements += 1;
        let image = hom.apply(c);
        let splits = target_splits(&image, hom, size_bound);
        let mult = m.rewrite_bound_for(c);
        let reps = cache.members(m, c, mult);
        for (left, right) in splits {
            report.checked_splits += 1;
            nodes += 1;
            if nodes > node_budget {
                report.complete = false;
                return report;
            }
            let mut found = false;
            'lift: for rep in &reps {
                for a in rep.sub_multisets() {
                    let b = rep.minus(&a);
                    if hom.target_equal(&hom.apply(&a), &left)
                        && hom.target_equal(&hom.apply(&b), &right)
                    {
                        found = true;
                        break 'lift;
                    }
                }
            }
            if !found {
                report.failures.push(VFailure {
                    element: m.render(c),
                    split_left: render_target(&left, hom),
                    split_right: render_target(&right, hom),
                });
            }
        }
    }
    report
}

// Enumerates splittings of a target element into two positives, bounded
// where the target is not finitely splittable.
fn target_splits(
    image: &TargetElem,
    hom: &MonoidHom,
    size_bound: u32,
) -> Vec<(TargetElem, TargetElem)> {
    match (image, &hom.target) {
        (TargetElem::Vector(v), _) => {
            let lo = vec![0i64; v.len()];
            crate::interp::box_points(&lo, v)
                .into_iter()
                .map(|a| {
                    let b: Vec<i64> = v.iter().zip(&a).map(|(x, y)| x - y).collect();
                    (TargetElem::Vector(a), TargetElem::Vector(b))
                })
                .collect()
        }
        (TargetElem::Dim(x), HomTarget::Dim(n)) => {
            let mut cache = EqCache::new();
            let mult = n.rewrite_bound_for(x);
            let mut out = Vec::new();
            for rep in cache.members(n, x, mult) {
                for a in rep.sub_multisets() {
                    let b = rep.minus(&a);
                    out.push((TargetElem::Dim(a), TargetElem::Dim(b)));
                }
            }
            out
        }
        (TargetElem::E(u), HomTarget::ECone) => {
            let labels = u.support();
            let cap = i64::from(size_bound)
                + u.coeffs.values().map(|v| v.abs()).max().unwrap_or(0)
                + u.m.abs();
            let mut parts: Vec<EElement> = vec![EElement::zero()];
            for l in &labels {
                let mut next = Vec::new();
                for p in &parts {
                    for k in -cap..=cap {
                        let mut q = p.clone();
                        if k != 0 {
                            q.coeffs.insert(l.clone(), k);
                        }
                        next.push(q);
                    }
                }
                parts = next;
            }
            let mut out = Vec::new();
            for p in parts {
                for mm in -cap..=cap {
                    let mut a = p.clone();
                    a.m = mm;
                    let b = u.sub(&a);
                    if a.is_positive() && b.is_positive() {
                        out.push((TargetElem::E(a), TargetElem::E(b)));
                    }
                }
            }
            out
        }
        _ => Vec::new(),
    }
}

/// An alternating chain certificate: `u = w_0 <= ... <= w_{2n} = v` whose
/// even segments sum to `a` and odd segments to `b`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AlternatingChain {
    pub elements: Vec<String>,
}

/// Finds a decomposition chain for a splitting `a + b` of `delta(u, v)` in
/// a modular lattice.
pub fn find_alternating_chain(
    m: &DimMonoid,
    u: usize,
    v: usize,
    a: &DimElement,
    b: &DimElement,
    node_budget: u64,
) -> Result<AlternatingChain, DimError> {
    find_alternating_chain_with(m, u, v, a, b, node_budget, &CancelToken::new())
}

/// As [`find_alternating_chain`], polling a cancellation token inside the
/// chain search; cancellation surfaces as `BudgetExhausted`.
#[allow(clippy::too_many_arguments)]
pub fn find_alternating_chain_with(
    m: &DimMonoid,
    u: usize,
    v: usize,
    a: &DimElement,
    b: &DimElement,
    node_budget: u64,
    cancel: &CancelToken,
) -> Result<AlternatingChain, DimError> {
    let l = m.lattice();
    if !l.classify().modular {
        return Err(DimError::NotModular);
    }
    if !l.leq(u, v) {
        return Err(DimError::InvalidInput(format!(
            "{} is not below {}",
            l.name(u),
            l.name(v)
        )));
    }
    let sum = a.add(b);
    let target = m.delta(u, v);
    let mult = m.rewrite_bound_for(&sum).max(m.rewrite_bound_for(&target));
    if !m.dim_equal_bounded(&sum, &target, mult, 100_000).is_equal() {
        return Err(DimError::InvalidInput(
            "a + b is not the distance from u to v".into(),
        ));
    }
    let wa = m.weight_vector(a);
    let wb = m.weight_vector(b);
    let mut cache = EqCache::new();
    let mut nodes = 0u64;
    let max_len = 2 * (m.height() as usize + a.total() as usize + b.total() as usize + 2);
    let mut chain = vec![u];
    let found = chain_dfs(
        m,
        v,
        &wa,
        &wb,
        a,
        b,
        mult,
        max_len,
        node_budget,
        &mut chain,
        &DimElement::zero(),
        &DimElement::zero(),
        &mut nodes,
        &mut cache,
        cancel,
    );
    match found {
        Some(sol) => Ok(AlternatingChain {
            elements: sol.iter().map(|&i| l.name(i).to_string()).collect(),
        }),
        None => Err(DimError::BudgetExhausted),
    }
}

#[allow(clippy::too_many_arguments)]
fn chain_dfs(
    m: &DimMonoid,
    v: usize,
    wa: &[u64],
    wb: &[u64],
    a: &DimElement,
    b: &DimElement,
    mult: u32,
    max_len: usize,
    budget: u64,
    chain: &mut Vec<usize>,
    acc_a: &DimElement,
    acc_b: &DimElement,
    nodes: &mut u64,
    cache: &mut EqCache,
    cancel: &CancelToken,
) -> Option<Vec<usize>> {
    *nodes += 1;
    if *nodes > budget || cancel.is_cancelled() {
        return None;
    }
    let cur = *chain.last().unwrap();
    let segments_so_far = chain.len() - 1;
    // Parity of the segment about to be laid down; even segments feed the
    // `a` side. A complete chain has an even segment count.
    let parity_even = segments_so_far % 2 == 0;
    if cur == v && parity_even && cache.equal(m, acc_a, a, mult) && cache.equal(m, acc_b, b, mult)
    {
        return Some(chain.clone());
    }
    if chain.len() > max_len {
        return None;
    }
    let stationary_last = chain.len() >= 2 && chain[chain.len() - 1] == chain[chain.len() - 2];
    for next in 0..m.lattice().len() {
        if !m.lattice().leq(cur, next) || !m.lattice().leq(next, v) {
            continue;
        }
        if next == cur && stationary_last {
            continue;
        }
        let seg = m.delta(cur, next);
        let (acc_a2, acc_b2) = if parity_even {
            (acc_a.add(&seg), acc_b.clone())
        } else {
            (acc_a.clone(), acc_b.add(&seg))
        };
        let fits = {
            let w = m.weight_vector(if parity_even { &acc_a2 } else { &acc_b2 });
            let target = if parity_even { wa } else { wb };
            w.iter().zip(target).all(|(x, y)| x <= y)
        };
        if !fits {
            continue;
        }
        chain.push(next);
        if let Some(sol) = chain_dfs(
            m, v, wa, wb, a, b, mult, max_len, budget, chain, &acc_a2, &acc_b2, nodes, cache,
            cancel,
        ) {
            return Some(sol);
        }
        chain.pop();
    }
    None
}

/// Maximal semilattice quotient: the monoid modulo `x + x = x`, explored as
/// a congruence closure over generator-support masks.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SemilatticeQuotient {
    /// Canonical member (as sorted generator index sets) per class.
    pub classes: Vec<Vec<usize>>,
    /// Class of each single generator.
    pub generator_class: Vec<usize>,
    /// Join table over classes.
    pub join: Vec<Vec<usize>>,
}

pub fn semilattice_quotient(
    m: &DimMonoid,
    mask_budget: usize,
) -> Result<SemilatticeQuotient, DimError> {
    let g = m.generator_count();
    if g > 60 {
        return Err(DimError::InvalidInput("too many generators".into()));
    }
    let mask_of = |e: &DimElement| -> u64 { e.iter().fold(0u64, |acc, (gen, _)| acc | (1 << gen)) };
    let base: Vec<(u64, u64)> = m
        .relations
        .iter()
        .map(|(l, r)| (mask_of(l), mask_of(r)))
        .collect();
    // Interned masks with union-find over their ids.
    let mut ids: HashMap<u64, usize> = HashMap::new();
    let mut masks: Vec<u64> = Vec::new();
    let mut parent: Vec<usize> = Vec::new();
    fn find(parent: &mut Vec<usize>, i: usize) -> usize {
        if parent[i] != i {
            let r = find(parent, parent[i]);
            parent[i] = r;
        }
        parent[i]
    }
    fn intern(
        mask: u64,
        ids: &mut HashMap<u64, usize>,
        masks: &mut Vec<u64>,
        parent: &mut Vec<usize>,
    ) -> usize {
        *ids.entry(mask).or_insert_with(|| {
            masks.push(mask);
            parent.push(masks.len() - 1);
            masks.len() - 1
        })
    }
    intern(0, &mut ids, &mut masks, &mut parent);
    for gen in 0..g {
        intern(1 << gen, &mut ids, &mut masks, &mut parent);
    }
    // Close: relation pairs merged in every reachable union context, and the
    // reachable set closed under pairwise union of class representatives.
    loop {
        let mut changed = false;
        let snapshot: Vec<u64> = masks.clone();
        for ctx in &snapshot {
            for (l, r) in &base {
                if masks.len() > mask_budget {
                    return Err(DimError::BudgetExhausted);
                }
                let ia = intern(ctx | l, &mut ids, &mut masks, &mut parent);
                let ib = intern(ctx | r, &mut ids, &mut masks, &mut parent);
                let (ra, rb) = (find(&mut parent, ia), find(&mut parent, ib));
                if ra != rb {
                    parent[ra.max(rb)] = ra.min(rb);
                    changed = true;
                }
            }
        }
        // Representative per root (least mask).
        let mut rep_of_root: HashMap<usize, u64> = HashMap::new();
        for i in 0..masks.len() {
            let r = find(&mut parent, i);
            let e = rep_of_root.entry(r).or_insert(masks[i]);
            *e = (*e).min(masks[i]);
        }
        let reps: Vec<u64> = {
            let mut v: Vec<u64> = rep_of_root.values().copied().collect();
            v.sort_unstable();
            v.dedup();
            v
        };
        for (i, &r1) in reps.iter().enumerate() {
            for &r2 in reps.iter().skip(i) {
                if masks.len() > mask_budget {
                    return Err(DimError::BudgetExhausted);
                }
                if !ids.contains_key(&(r1 | r2)) {
                    intern(r1 | r2, &mut ids, &mut masks, &mut parent);
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    // Final classes over representatives.
    let mut rep_of_root: HashMap<usize, u64> = HashMap::new();
    for i in 0..masks.len() {
        let r = find(&mut parent, i);
        let e = rep_of_root.entry(r).or_insert(masks[i]);
        *e = (*e).min(masks[i]);
    }
    let rep_of = |mask: u64, ids: &HashMap<u64, usize>, parent: &mut Vec<usize>| -> u64 {
        let id = ids[&mask];
        let root = find(parent, id);
        rep_of_root[&root]
    };
    let mut class_ids: HashMap<u64, usize> = HashMap::new();
    let mut classes: Vec<Vec<usize>> = Vec::new();
    let class_of = |mask: u64,
                        ids: &HashMap<u64, usize>,
                        parent: &mut Vec<usize>,
                        class_ids: &mut HashMap<u64, usize>,
                        classes: &mut Vec<Vec<usize>>|
     -> usize {
        let rep = rep_of(mask, ids, parent);
        if let Some(&c) = class_ids.get(&rep) {
            return c;
        }
        let c = classes.len();
        class_ids.insert(rep, c);
        classes.push((0..g).filter(|i| rep & (1 << i) != 0).collect());
        c
    };
    class_of(0, &ids, &mut parent, &mut class_ids, &mut classes);
    let mut generator_class = Vec::with_capacity(g);
    for gen in 0..g {
        generator_class.push(class_of(
            1 << gen,
            &ids,
            &mut parent,
            &mut class_ids,
            &mut classes,
        ));
    }
    // Register every class reachable as a representative.
    let all_reps: Vec<u64> = {
        let mut v: Vec<u64> = rep_of_root.values().copied().collect();
        v.sort_unstable();
        v.dedup();
        v
    };
    for &r in &all_reps {
        class_of(r, &ids, &mut parent, &mut class_ids, &mut classes);
    }
    let k = classes.len();
    let mut join = vec![vec![0usize; k]; k];
    let class_masks: Vec<u64> = classes
        .iter()
        .map(|c| c.iter().fold(0u64, |acc, &i| acc | (1 << i)))
        .collect();
    for i in 0..k {
        for j in 0..k {
            let mask = class_masks[i] | class_masks[j];
            join[i][j] = class_of(mask, &ids, &mut parent, &mut class_ids, &mut classes);
        }
    }
    Ok(SemilatticeQuotient {
        classes,
        generator_class,
        join,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::corpus;

    fn gen(m: &DimMonoid, lo: &str, hi: &str) -> DimElement {
        let x = m.lattice().element(lo).unwrap();
        let y = m.lattice().element(hi).unwrap();
        DimElement::generator(m.generator_for(x, y).unwrap())
    }

    fn gen_by_idx(m: &DimMonoid, x: usize, y: usize) -> DimElement {
        DimElement::generator(m.generator_for(x, y).unwrap())
    }

    #[test]
    fn delta_basics() {
        let l = corpus::n5();
        let m = DimMonoid::new(&l, 8);
        let c = l.element("c").unwrap();
        let a = l.element("a").unwrap();
        assert!(m.delta(c, c).is_zero());
        assert_eq!(m.delta(c, a), gen(&m, "c", "a"));
        for x in 0..l.len() {
            for y in 0..l.len() {
                assert_eq!(m.delta(x, y), m.delta(y, x));
            }
        }
    }

    #[test]
    fn d1_equalities_hold() {
        for (_, l) in corpus::all() {
            let m = DimMonoid::new(&l, 8);
            for x in 0..l.len() {
                for y in 0..l.len() {
                    for z in 0..l.len() {
                        if l.lt(x, y) && l.lt(y, z) {
                            let lhs = gen_by_idx(&m, x, z);
                            let rhs = gen_by_idx(&m, x, y).add(&gen_by_idx(&m, y, z));
                            assert!(m.dim_equal(&lhs, &rhs).is_equal());
                            assert!(m.dim_leq(&gen_by_idx(&m, x, y), &lhs).is_leq());
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn m3_atom_generators_coincide() {
        let m = DimMonoid::new(&corpus::m3(), 8);
        let a = gen(&m, "o", "p");
        let b = gen(&m, "o", "q");
        let verdict = m.dim_equal(&a, &b);
        assert!(verdict.is_equal(), "{verdict:?}");
    }

    #[test]
    fn chain_counting_invariant_separates() {
        let m = DimMonoid::new(&corpus::chain(1), 8);
        let g = gen(&m, "0", "1");
        let twice = g.add(&g);
        let verdict = m.dim_equal(&g, &twice);
        assert!(verdict.is_distinct(), "{verdict:?}");
        assert_ne!(m.weight_vector(&g), m.weight_vector(&twice));
        let verdict = m.dim_leq(&twice, &g);
        assert!(verdict.is_not_leq(), "{verdict:?}");
        assert!(m.dim_leq(&DimElement::zero(), &twice).is_leq());
    }

    #[test]
    fn n5_partial_invariants() {
        let l = corpus::n5();
        let m = DimMonoid::new(&l, 8);
        // The critical-interval class fails preservation; the other two
        // survive, and the congruence join survives on any true lattice.
        assert_eq!(m.enabled_weight_components().len(), 2);
        assert!(m.congruence_certificates_enabled());
        // g[o,a] = g[b,i] via transposition even though [o,a] is not prime.
        let verdict = m.dim_equal(&gen(&m, "o", "a"), &gen(&m, "b", "i"));
        assert!(verdict.is_equal(), "{verdict:?}");
        // delta(c,a) is nonzero: certified by the congruence join.
        let verdict = m.dim_equal(&gen(&m, "c", "a"), &DimElement::zero());
        assert!(verdict.is_distinct(), "{verdict:?}");
    }

    #[test]
    fn distance_laws_small() {
        for (_, l) in corpus::all() {
            let m = DimMonoid::new(&l, 8);
            for x in 0..l.len() {
                for y in 0..l.len() {
                    let d = m.delta(x, y);
                    if x == y {
                        assert!(d.is_zero());
                    } else {
                        assert!(m.dim_equal(&d, &DimElement::zero()).is_distinct());
                    }
                    for z in 0..l.len() {
                        let lhs = m.delta(x, z);
                        let rhs = m.delta(x, y).add(&m.delta(y, z));
                        let verdict = m.dim_leq(&lhs, &rhs);
                        assert!(
                            verdict.is_leq(),
                            "triangle failed at {} {} {}: {verdict:?}",
                            l.name(x),
                            l.name(y),
                            l.name(z)
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn modular_generator_classes_match_projectivity() {
        for (name, l) in corpus::modular() {
            let m = DimMonoid::new(&l, 8);
            let pc = l.projectivity_classes();
            let primes: Vec<DimElement> = pc
                .primes
                .iter()
                .map(|&(x, y)| gen_by_idx(&m, x, y))
                .collect();
            let mut reps: Vec<usize> = Vec::new();
            for (i, p) in primes.iter().enumerate() {
                if !reps.iter().any(|&r| m.dim_equal(p, &primes[r]).is_equal()) {
                    reps.push(i);
                }
            }
            assert_eq!(reps.len(), pc.class_count(), "{name}");
        }
    }

    #[test]
    fn refinement_diagonal_case() {
        let m = DimMonoid::new(&corpus::chain(1), 8);
        let g = gen(&m, "0", "1");
        let mut cache = EqCache::new();
        let c = find_refinement(&m, &mut cache, &g, &g, &g, &g, 8).unwrap();
        assert!(verify_refinement(&m, &mut cache, &g, &g, &g, &g, &c, 8));
    }

    #[test]
    fn refinement_on_chain_and_m3() {
        for l in [corpus::chain(3), corpus::m3()] {
            let m = DimMonoid::new(&l, 8);
            let report = refinement_check(&m, 2, 2_000_000);
            assert!(report.all_refined(), "{report:?}");
        }
    }

    #[test]
    fn o_ideal_trivial_and_full() {
        let l = corpus::chain(2);
        let m = DimMonoid::new(&l, 8);
        let zero_ideal = OIdeal::new(vec![], 3);
        assert_eq!(
            zero_ideal.membership(&m, &DimElement::zero()),
            MemberVerdict::Member
        );
        assert_eq!(
            zero_ideal.membership(&m, &gen(&m, "0", "1")),
            MemberVerdict::NotMember
        );
        // Quotient by {0} is verdict-equivalent to the original.
        let q = quotient_by_o_ideal(&m, &zero_ideal);
        let a = gen(&m, "0", "2");
        let b = gen(&m, "0", "1").add(&gen(&m, "1", "2"));
        assert_eq!(m.dim_equal(&a, &b).is_equal(), q.dim_equal(&a, &b).is_equal());
        // The full ideal absorbs everything.
        let full = OIdeal::new(
            (0..m.generator_count()).map(DimElement::generator).collect(),
            3,
        );
        assert_eq!(full.membership(&m, &a), MemberVerdict::Member);
        let q = quotient_by_o_ideal(&m, &full);
        assert!(q.dim_equal(&a, &DimElement::zero()).is_equal());
    }

    #[test]
    fn o_ideal_materialize_is_an_o_ideal() {
        let l = corpus::chain(2);
        let m = DimMonoid::new(&l, 8);
        let ideal = OIdeal::new(vec![gen(&m, "0", "1")], 3);
        let members = ideal.materialize(&m, 2).unwrap();
        let mut elements = vec![DimElement::zero()];
        for g in 0..m.generator_count() {
            let mut next = Vec::new();
            for e in &elements {
                let room = 2 - e.total();
                for k in 0..=room {
                    next.push(e.add_gen(g, k));
                }
            }
            elements = next;
        }
        // x + y in I iff x, y in I, within the explored bound.
        for x in &elements {
            for y in &elements {
                if x.total() + y.total() > 2 {
                    continue;
                }
                let sum_in = members.contains(&x.add(y));
                let both_in = members.contains(x) && members.contains(y);
                assert_eq!(sum_in, both_in);
            }
        }
    }

    #[test]
    fn quotient_by_pentagon_ideal() {
        let l = corpus::n5();
        let m = DimMonoid::new(&l, 8);
        let ideal = OIdeal::new(vec![gen(&m, "c", "a")], 3);
        let q = quotient_by_o_ideal(&m, &ideal);
        let verdict = q.dim_equal(&gen(&q, "o", "c"), &gen(&q, "o", "a"));
        assert!(verdict.is_equal(), "{verdict:?}");
    }

    #[test]
    fn collapse_pentagon() {
        let l = corpus::n5();
        let m = DimMonoid::new(&l, 8);
        let ideal = OIdeal::new(vec![gen(&m, "c", "a")], 3);
        let (theta, quotient) = collapse_by_o_ideal(&m, &ideal).unwrap();
        let c = l.element("c").unwrap();
        let a = l.element("a").unwrap();
        assert!(theta.same(c, a));
        assert_eq!(theta.blocks().len(), 4);
        assert!(quotient.classify().modular);
        let (theta, _) = collapse_by_o_ideal(&m, &OIdeal::new(vec![], 3)).unwrap();
        assert!(theta.is_identity());
        let full = OIdeal::new(
            (0..m.generator_count()).map(DimElement::generator).collect(),
            3,
        );
        let (theta, q) = collapse_by_o_ideal(&m, &full).unwrap();
        assert_eq!(theta.blocks().len(), 1);
        assert_eq!(q.len(), 1);
    }

    #[test]
    fn v_homomorphism_identity_and_doubling() {
        let l = corpus::chain(1);
        let m = DimMonoid::new(&l, 8);
        // Identity on a free one-generator monoid.
        let hom = MonoidHom {
            target: HomTarget::Dim(Box::new(m.clone())),
            images: vec![TargetElem::Dim(gen(&m, "0", "1"))],
        };
        assert!(hom.validate(&m).is_empty());
        let report = is_v_homomorphism(&m, &hom, 2, 100_000);
        assert!(report.is_v_homomorphism(), "{report:?}");
        // Doubling into Z fails: 2 = 1 + 1 does not lift.
        let hom = MonoidHom {
            target: HomTarget::Simplicial(1),
            images: vec![TargetElem::Vector(vec![2])],
        };
        assert!(hom.validate(&m).is_empty());
        let report = is_v_homomorphism(&m, &hom, 1, 100_000);
        assert!(!report.failures.is_empty());
        assert_eq!(report.failures[0].split_left, "<1>");
        // The zero map to the trivial target is a V-homomorphism.
        let hom = MonoidHom {
            target: HomTarget::Simplicial(0),
            images: vec![TargetElem::Vector(vec![])],
        };
        let report = is_v_homomorphism(&m, &hom, 2, 100_000);
        assert!(report.is_v_homomorphism());
    }

    #[test]
    fn alternating_chain_degenerate_and_split() {
        let l = corpus::chain(3);
        let m = DimMonoid::new(&l, 8);
        let (u, v) = (l.element("0").unwrap(), l.element("3").unwrap());
        let d = m.delta(u, v);
        let chain = find_alternating_chain(&m, u, v, &d, &DimElement::zero(), 100_000).unwrap();
        assert_eq!(chain.elements.first().map(String::as_str), Some("0"));
        assert_eq!(chain.elements.last().map(String::as_str), Some("3"));
        let chain = find_alternating_chain(&m, u, v, &DimElement::zero(), &d, 100_000).unwrap();
        assert_eq!(chain.elements.len() % 2, 1);
        // Alternating split: a = g[0,1]+g[2,3], b = g[1,2].
        let a = gen(&m, "0", "1").add(&gen(&m, "2", "3"));
        let b = gen(&m, "1", "2");
        let chain = find_alternating_chain(&m, u, v, &a, &b, 1_000_000).unwrap();
        verify_chain(&m, &chain, &a, &b);
        let n5 = DimMonoid::new(&corpus::n5(), 8);
        let err =
            find_alternating_chain(&n5, 0, 4, &DimElement::zero(), &DimElement::zero(), 1000)
                .unwrap_err();
        assert!(matches!(err, DimError::NotModular));
    }

    fn verify_chain(m: &DimMonoid, chain: &AlternatingChain, a: &DimElement, b: &DimElement) {
        let l = m.lattice();
        let ids: Vec<usize> = chain
            .elements
            .iter()
            .map(|n| l.element(n).unwrap())
            .collect();
        assert_eq!(ids.len() % 2, 1);
        let mut acc_a = DimElement::zero();
        let mut acc_b = DimElement::zero();
        for (k, w) in ids.windows(2).enumerate() {
            assert!(l.leq(w[0], w[1]));
            let seg = m.delta(w[0], w[1]);
            if k % 2 == 0 {
                acc_a = acc_a.add(&seg);
            } else {
                acc_b = acc_b.add(&seg);
            }
        }
        assert!(m.dim_equal(&acc_a, a).is_equal());
        assert!(m.dim_equal(&acc_b, b).is_equal());
    }

    #[test]
    fn semilattice_quotients() {
        // One free generator: two classes.
        let m = DimMonoid::new(&corpus::chain(1), 8);
        let s = semilattice_quotient(&m, 4096).unwrap();
        assert_eq!(s.classes.len(), 2);
        // Two free generators (3-chain primes): a four-element square.
        let m = DimMonoid::new(&corpus::chain(2), 8);
        let s = semilattice_quotient(&m, 4096).unwrap();
        assert_eq!(s.classes.len(), 4);
        for i in 0..s.classes.len() {
            assert_eq!(s.join[i][i], i);
            for j in 0..s.classes.len() {
                assert_eq!(s.join[i][j], s.join[j][i]);
            }
        }
        // Trivial lattice: one class.
        let m = DimMonoid::new(&corpus::chain(0), 8);
        let s = semilattice_quotient(&m, 64).unwrap();
        assert_eq!(s.classes.len(), 1);
    }

    #[test]
    fn cancellation_stops_long_searches() {
        let m = DimMonoid::new(&corpus::chain(3), 8);
        let cancel = crate::exec::CancelToken::new();
        cancel.cancel();
        let report = refinement_check_with(&m, 2, 1_000_000, &cancel);
        assert!(!report.complete);
        let (u, v) = (0, 3);
        let d = m.delta(u, v);
        let err = find_alternating_chain_with(
            &m,
            u,
            v,
            &d,
            &DimElement::zero(),
            1_000_000,
            &cancel,
        )
        .unwrap_err();
        assert!(matches!(err, DimError::BudgetExhausted));
    }

    #[test]
    fn parse_and_render_elements() {
        let m = DimMonoid::new(&corpus::chain(3), 8);
        let e = m.parse_element("2*[0,1]+[1,3]").unwrap();
        assert_eq!(e.total(), 3);
        let rendered = m.render(&e);
        let back = m.parse_element(&rendered).unwrap();
        assert_eq!(back, e);
        assert!(m.parse_element("[0,1").is_err());
        assert!(m.parse_element("[0,9]").is_err());
    }
}
