//! Finite lattices: construction from cover lists, meet/join tables,
//! structural classification, prime-interval projectivity, congruences and
//! quotients.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LatticeError {
    #[error("cover list contains a cycle through `{0}`")]
    CyclicInput(String),
    #[error("not a lattice: elements `{x}` and `{y}` have no {kind}")]
    NotALattice { x: String, y: String, kind: String },
    #[error("empty element list")]
    Empty,
    #[error("duplicate element id `{0}`")]
    DuplicateElement(String),
    #[error("unknown element id `{0}`")]
    UnknownElement(String),
    #[error("partition is not a lattice congruence: {0}")]
    NotACongruence(String),
}

/// A closed interval `[lo, hi]` of a lattice, referenced by element ids.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct IntervalRef {
    pub lo: String,
    pub hi: String,
}

impl fmt::Display for IntervalRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{},{}]", self.lo, self.hi)
    }
}

/// On-disk form: element ids plus a cover list.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LatticeFile {
    pub elements: Vec<String>,
    pub covers: Vec<(String, String)>,
}

/// A finite lattice over named elements.
///
/// The order relation, meet table and join table are total; construction
/// fails if any pair of elements lacks a meet or a join.
#[derive(Debug, Clone)]
pub struct FiniteLattice {
    names: Vec<String>,
    index: HashMap<String, usize>,
    leq: Vec<Vec<bool>>,
    meet: Vec<Vec<usize>>,
    join: Vec<Vec<usize>>,
    covers: Vec<(usize, usize)>,
}

impl FiniteLattice {
    /// Builds a lattice from an explicit element list and a cover list.
    ///
    /// The order is the reflexive-transitive closure of the covers.
    pub fn from_elements_covers(
        elements: &[String],
        covers: &[(String, String)],
    ) -> Result<Self, LatticeError> {
        if elements.is_empty() {
            return Err(LatticeError::Empty);
        }
        let mut index = HashMap::new();
        for (i, name) in elements.iter().enumerate() {
            if index.insert(name.clone(), i).is_some() {
                return Err(LatticeError::DuplicateElement(name.clone()));
            }
        }
        let n = elements.len();
        let mut leq = vec![vec![false; n]; n];
        for (i, row) in leq.iter_mut().enumerate() {
            row[i] = true;
        }
        for (a, b) in covers {
            let i = *index
                .get(a)
                .ok_or_else(|| LatticeError::UnknownElement(a.clone()))?;
            let j = *index
                .get(b)
                .ok_or_else(|| LatticeError::UnknownElement(b.clone()))?;
            if i == j {
                return Err(LatticeError::CyclicInput(a.clone()));
            }
            leq[i][j] = true;
        }
        // Warshall closure.
        for k in 0..n {
            for i in 0..n {
                if leq[i][k] {
                    for j in 0..n {
                        if leq[k][j] {
                            leq[i][j] = true;
                        }
                    }
                }
            }
        }
        for i in 0..n {
            for j in 0..n {
                if i != j && leq[i][j] && leq[j][i] {
                    return Err(LatticeError::CyclicInput(elements[i].clone()));
                }
            }
        }
        let mut meet = vec![vec![0usize; n]; n];
        let mut join = vec![vec![0usize; n]; n];
        for x in 0..n {
            for y in 0..n {
                meet[x][y] = Self::bound_of(&leq, n, x, y, true).ok_or_else(|| {
                    LatticeError::NotALattice {
                        x: elements[x].clone(),
                        y: elements[y].clone(),
                        kind: "meet".into(),
                    }
                })?;
                join[x][y] = Self::bound_of(&leq, n, x, y, false).ok_or_else(|| {
                    LatticeError::NotALattice {
                        x: elements[x].clone(),
                        y: elements[y].clone(),
                        kind: "join".into(),
                    }
                })?;
            }
        }
        let mut cover_pairs = Vec::new();
        for i in 0..n {
            for j in 0..n {
                if i != j && leq[i][j] {
                    let strict_between = (0..n)
                        .any(|k| k != i && k != j && leq[i][k] && leq[k][j]);
                    if !strict_between {
                        cover_pairs.push((i, j));
                    }
                }
            }
        }
        cover_pairs.sort_unstable();
        Ok(FiniteLattice {
            names: elements.to_vec(),
            index,
            leq,
            meet,
            join,
            covers: cover_pairs,
        })
    }

    /// Builds a lattice from a cover list alone; elements are collected in
    /// order of first appearance.
    pub fn from_covers(covers: &[(String, String)]) -> Result<Self, LatticeError> {
        let mut elements: Vec<String> = Vec::new();
        let mut seen = HashMap::new();
        for (a, b) in covers {
            for name in [a, b] {
                if !seen.contains_key(name) {
                    seen.insert(name.clone(), ());
                    elements.push(name.clone());
                }
            }
        }
        Self::from_elements_covers(&elements, covers)
    }

    pub fn from_file(file: &LatticeFile) -> Result<Self, LatticeError> {
        Self::from_elements_covers(&file.elements, &file.covers)
    }

    pub fn to_file(&self) -> LatticeFile {
        LatticeFile {
            elements: self.names.clone(),
            covers: self
                .covers
                .iter()
                .map(|&(a, b)| (self.names[a].clone(), self.names[b].clone()))
                .collect(),
        }
    }

    // Greatest lower bound when `lower`, least upper bound otherwise.
    fn bound_of(leq: &[Vec<bool>], n: usize, x: usize, y: usize, lower: bool) -> Option<usize> {
        let candidates: Vec<usize> = (0..n)
            .filter(|&z| {
                if lower {
                    leq[z][x] && leq[z][y]
                } else {
                    leq[x][z] && leq[y][z]
                }
            })
            .collect();
        candidates.iter().copied().find(|&c| {
            candidates.iter().all(|&z| {
                if lower {
                    leq[z][c]
                } else {
                    leq[c][z]
                }
            })
        })
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, i: usize) -> &str {
        &self.names[i]
    }

    pub fn element(&self, name: &str) -> Result<usize, LatticeError> {
        self.index
            .get(name)
            .copied()
            .ok_or_else(|| LatticeError::UnknownElement(name.to_string()))
    }

    pub fn leq(&self, x: usize, y: usize) -> bool {
        self.leq[x][y]
    }

    pub fn lt(&self, x: usize, y: usize) -> bool {
        x != y && self.leq[x][y]
    }

    pub fn meet(&self, x: usize, y: usize) -> usize {
        self.meet[x][y]
    }

    pub fn join(&self, x: usize, y: usize) -> usize {
        self.join[x][y]
    }

    pub fn bottom(&self) -> usize {
        (0..self.len()).fold(0, |acc, i| self.meet(acc, i))
    }

    pub fn top(&self) -> usize {
        (0..self.len()).fold(0, |acc, i| self.join(acc, i))
    }

    /// Cover pairs `(x, y)` with `x` covered by `y`, i.e. the prime intervals.
    pub fn covers(&self) -> &[(usize, usize)] {
        &self.covers
    }

    pub fn interval(&self, lo: usize, hi: usize) -> IntervalRef {
        IntervalRef {
            lo: self.names[lo].clone(),
            hi: self.names[hi].clone(),
        }
    }

    /// Structural classification by exhaustive sublattice search.
    pub fn classify(&self) -> StructureReport {
        let n = self.len();
        let bottom = self.bottom();
        let top = self.top();
        // A pentagon is a quintuple o <= c < a <= i with a/\b = o, b\/c = i;
        // its presence is equivalent to a failure of the modular law.
        let mut pentagon = None;
        'outer: for c in 0..n {
            for a in 0..n {
                if !(self.lt(c, a)) {
                    continue;
                }
                for b in 0..n {
                    let o = self.meet(a, b);
                    let i = self.join(b, c);
                    if self.leq(o, c) && self.leq(a, i) && self.meet(c, b) == o && self.join(a, b) == i
                    {
                        pentagon = Some([o, c, a, b, i]);
                        break 'outer;
                    }
                }
            }
        }
        let modular = pentagon.is_none();
        let mut diamond = None;
        if modular {
            'm3: for x in 0..n {
                for y in x + 1..n {
                    for z in y + 1..n {
                        let o = self.meet(x, y);
                        let i = self.join(x, y);
                        if self.meet(x, z) == o
                            && self.meet(y, z) == o
                            && self.join(x, z) == i
                            && self.join(y, z) == i
                        {
                            diamond = Some([o, x, y, z, i]);
                            break 'm3;
                        }
                    }
                }
            }
        }
        let distributive = modular && diamond.is_none();
        let mut complement_failure = None;
        for x in 0..n {
            let has = (0..n).any(|y| self.meet(x, y) == bottom && self.join(x, y) == top);
            if !has {
                complement_failure = Some(self.names[x].clone());
                break;
            }
        }
        StructureReport {
            modular,
            pentagon_witness: pentagon.map(|w| w.map(|i| self.names[i].clone())),
            distributive,
            diamond_witness: diamond.map(|w| w.map(|i| self.names[i].clone())),
            complemented: complement_failure.is_none(),
            complement_failure,
        }
    }

    /// Partitions the prime intervals into projectivity classes: the
    /// transitive closure of the transposition relation that pairs
    /// `[x/\y, x]` with `[y, x\/y]`.
    pub fn projectivity_classes(&self) -> ProjectivityClasses {
        let primes = self.covers.clone();
        let pos: HashMap<(usize, usize), usize> = primes
            .iter()
            .enumerate()
            .map(|(k, &p)| (p, k))
            .collect();
        let mut uf = UnionFind::new(primes.len());
        for (k1, &(a1, b1)) in primes.iter().enumerate() {
            for (k2, &(a2, b2)) in primes.iter().enumerate() {
                if k1 >= k2 {
                    continue;
                }
                let first = self.meet(b1, a2) == a1 && self.join(b1, a2) == b2;
                let second = self.meet(b2, a1) == a2 && self.join(b2, a1) == b1;
                if first || second {
                    uf.union(k1, k2);
                }
            }
        }
        let mut class_of = vec![0usize; primes.len()];
        let mut rep_to_class: HashMap<usize, usize> = HashMap::new();
        let mut classes: Vec<Vec<usize>> = Vec::new();
        for k in 0..primes.len() {
            let r = uf.find(k);
            let c = *rep_to_class.entry(r).or_insert_with(|| {
                classes.push(Vec::new());
                classes.len() - 1
            });
            class_of[k] = c;
            classes[c].push(k);
        }
        ProjectivityClasses {
            primes,
            prime_index: pos,
            class_of,
            classes,
        }
    }

    /// Least lattice congruence identifying `x` and `y`.
    pub fn principal_congruence(&self, x: usize, y: usize) -> LatticeCongruence {
        self.congruence_from_pairs(&[(x, y)])
    }

    /// Least lattice congruence containing all given pairs.
    pub fn congruence_from_pairs(&self, pairs: &[(usize, usize)]) -> LatticeCongruence {
        let n = self.len();
        let mut uf = UnionFind::new(n);
        for &(x, y) in pairs {
            uf.union(x, y);
        }
        loop {
            let mut changed = false;
            for u in 0..n {
                for v in 0..n {
                    if uf.find(u) != uf.find(v) {
                        continue;
                    }
                    for w in 0..n {
                        let (mu, mv) = (self.meet(u, w), self.meet(v, w));
                        if uf.find(mu) != uf.find(mv) {
                            uf.union(mu, mv);
                            changed = true;
                        }
                        let (ju, jv) = (self.join(u, w), self.join(v, w));
                        if uf.find(ju) != uf.find(jv) {
                            uf.union(ju, jv);
                            changed = true;
                        }
                    }
                }
            }
            if !changed {
                break;
            }
        }
        LatticeCongruence::from_union_find(n, &mut uf)
    }

    /// Checks that the partition is compatible with meet and join.
    pub fn check_congruence(&self, theta: &LatticeCongruence) -> Result<(), LatticeError> {
        let n = self.len();
        if theta.class_of.len() != n {
            return Err(LatticeError::NotACongruence(format!(
                "partition covers {} elements, lattice has {}",
                theta.class_of.len(),
                n
            )));
        }
        for x in 0..n {
            for x2 in 0..n {
                if theta.class_of[x] != theta.class_of[x2] {
                    continue;
                }
                for y in 0..n {
                    let (mx, mx2) = (self.meet(x, y), self.meet(x2, y));
                    if theta.class_of[mx] != theta.class_of[mx2] {
                        return Err(LatticeError::NotACongruence(format!(
                            "{} = {} but {} /\\ {} and {} /\\ {} split",
                            self.names[x],
                            self.names[x2],
                            self.names[x],
                            self.names[y],
                            self.names[x2],
                            self.names[y]
                        )));
                    }
                    let (jx, jx2) = (self.join(x, y), self.join(x2, y));
                    if theta.class_of[jx] != theta.class_of[jx2] {
                        return Err(LatticeError::NotACongruence(format!(
                            "{} = {} but {} \\/ {} and {} \\/ {} split",
                            self.names[x],
                            self.names[x2],
                            self.names[x],
                            self.names[y],
                            self.names[x2],
                            self.names[y]
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Quotient lattice on the blocks of a congruence. Block names join the
    /// member names with `|`.
    pub fn quotient(&self, theta: &LatticeCongruence) -> Result<FiniteLattice, LatticeError> {
        self.check_congruence(theta)?;
        let blocks = theta.blocks();
        let block_names: Vec<String> = blocks
            .iter()
            .map(|b| {
                b.iter()
                    .map(|&i| self.names[i].clone())
                    .collect::<Vec<_>>()
                    .join("|")
            })
            .collect();
        let mut covers = Vec::new();
        let k = blocks.len();
        // Induced order: [x] <= [y] iff some representatives are comparable.
        let mut bleq = vec![vec![false; k]; k];
        for (bi, bx) in blocks.iter().enumerate() {
            for (bj, by) in blocks.iter().enumerate() {
                bleq[bi][bj] =
                    bx.iter().any(|&x| by.iter().any(|&y| self.leq(x, y)));
            }
        }
        for i in 0..k {
            for j in 0..k {
                if i != j && bleq[i][j] {
                    covers.push((block_names[i].clone(), block_names[j].clone()));
                }
            }
        }
        FiniteLattice::from_elements_covers(&block_names, &covers)
    }
}

/// Result of [`FiniteLattice::classify`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StructureReport {
    pub modular: bool,
    /// `[o, c, a, b, i]` with `o <= c < a <= i`, `a/\b = o`, `b\/c = i`.
    pub pentagon_witness: Option<[String; 5]>,
    pub distributive: bool,
    pub diamond_witness: Option<[String; 5]>,
    pub complemented: bool,
    pub complement_failure: Option<String>,
}

/// Prime intervals of a lattice partitioned by projectivity.
#[derive(Debug, Clone)]
pub struct ProjectivityClasses {
    pub primes: Vec<(usize, usize)>,
    prime_index: HashMap<(usize, usize), usize>,
    pub class_of: Vec<usize>,
    pub classes: Vec<Vec<usize>>,
}

impl ProjectivityClasses {
    pub fn class_count(&self) -> usize {
        self.classes.len()
    }

    pub fn class_of_prime(&self, lo: usize, hi: usize) -> Option<usize> {
        self.prime_index.get(&(lo, hi)).map(|&k| self.class_of[k])
    }
}

/// A partition of the elements of a lattice.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LatticeCongruence {
    /// Class id per element, normalized so ids appear in first-use order.
    pub class_of: Vec<usize>,
}

impl LatticeCongruence {
    pub fn identity(n: usize) -> Self {
        LatticeCongruence {
            class_of: (0..n).collect(),
        }
    }

    pub fn full(n: usize) -> Self {
        LatticeCongruence {
            class_of: vec![0; n],
        }
    }

    pub fn from_blocks(n: usize, blocks: &[Vec<usize>]) -> Self {
        let mut class_of = vec![usize::MAX; n];
        for (c, b) in blocks.iter().enumerate() {
            for &i in b {
                class_of[i] = c;
            }
        }
        let mut out = LatticeCongruence { class_of };
        out.normalize();
        out
    }

    fn from_union_find(n: usize, uf: &mut UnionFind) -> Self {
        let mut out = LatticeCongruence {
            class_of: (0..n).map(|i| uf.find(i)).collect(),
        };
        out.normalize();
        out
    }

    fn normalize(&mut self) {
        let mut seen: HashMap<usize, usize> = HashMap::new();
        for c in self.class_of.iter_mut() {
            let next = seen.len();
            let id = *seen.entry(*c).or_insert(next);
            *c = id;
        }
    }

    pub fn blocks(&self) -> Vec<Vec<usize>> {
        let k = self.class_of.iter().copied().max().map_or(0, |m| m + 1);
        let mut blocks = vec![Vec::new(); k];
        for (i, &c) in self.class_of.iter().enumerate() {
            blocks[c].push(i);
        }
        blocks
    }

    pub fn same(&self, x: usize, y: usize) -> bool {
        self.class_of[x] == self.class_of[y]
    }

    /// Refinement order: `self <= other` iff every block of `self` is
    /// contained in a block of `other`.
    pub fn refines(&self, other: &LatticeCongruence) -> bool {
        let n = self.class_of.len();
        for x in 0..n {
            for y in x + 1..n {
                if self.same(x, y) && !other.same(x, y) {
                    return false;
                }
            }
        }
        true
    }

    /// Least partition above both, as a partition join.
    pub fn join(&self, other: &LatticeCongruence) -> LatticeCongruence {
        let n = self.class_of.len();
        let mut uf = UnionFind::new(n);
        for x in 0..n {
            for y in x + 1..n {
                if self.same(x, y) || other.same(x, y) {
                    uf.union(x, y);
                }
            }
        }
        Self::from_union_find(n, &mut uf)
    }

    pub fn is_identity(&self) -> bool {
        self.class_of.iter().enumerate().all(|(i, &c)| i == c)
    }
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, x: usize) -> usize {
        if self.parent[x] != x {
            let r = self.find(self.parent[x]);
            self.parent[x] = r;
        }
        self.parent[x]
    }

    fn union(&mut self, x: usize, y: usize) {
        let (rx, ry) = (self.find(x), self.find(y));
        if rx != ry {
            // Attach the larger root so class ids stay canonical-first.
            let (lo, hi) = if rx < ry { (rx, ry) } else { (ry, rx) };
            self.parent[hi] = lo;
        }
    }
}

/// Stock lattices used across the test and scenario suites.
pub mod corpus {
    use super::FiniteLattice;

    fn build(elements: &[&str], covers: &[(&str, &str)]) -> FiniteLattice {
        let els: Vec<String> = elements.iter().map(|s| s.to_string()).collect();
        let cvs: Vec<(String, String)> = covers
            .iter()
            .map(|(a, b)| (a.to_string(), b.to_string()))
            .collect();
        FiniteLattice::from_elements_covers(&els, &cvs).expect("stock lattice")
    }

    /// Chain with `edges` covers (so `edges + 1` elements), named `0..=edges`.
    pub fn chain(edges: usize) -> FiniteLattice {
        let els: Vec<String> = (0..=edges).map(|i| i.to_string()).collect();
        let cvs: Vec<(String, String)> = (0..edges)
            .map(|i| (i.to_string(), (i + 1).to_string()))
            .collect();
        FiniteLattice::from_elements_covers(&els, &cvs).expect("chain")
    }

    /// The five-element non-modular lattice with `o <= c <= a <= i`,
    /// `a /\ b = o`, `b \/ c = i`.
    pub fn n5() -> FiniteLattice {
        build(
            &["o", "c", "a", "b", "i"],
            &[("o", "c"), ("c", "a"), ("a", "i"), ("o", "b"), ("b", "i")],
        )
    }

    /// The five-element modular non-distributive lattice (three atoms).
    pub fn m3() -> FiniteLattice {
        build(
            &["o", "p", "q", "r", "i"],
            &[
                ("o", "p"),
                ("o", "q"),
                ("o", "r"),
                ("p", "i"),
                ("q", "i"),
                ("r", "i"),
            ],
        )
    }

    /// Product of chains with `a` and `b` elements, named `i.j`.
    pub fn grid(a: usize, b: usize) -> FiniteLattice {
        let mut els = Vec::new();
        let mut cvs = Vec::new();
        for i in 0..a {
            for j in 0..b {
                els.push(format!("{i}.{j}"));
                if i + 1 < a {
                    cvs.push((format!("{i}.{j}"), format!("{}.{j}", i + 1)));
                }
                if j + 1 < b {
                    cvs.push((format!("{i}.{j}"), format!("{i}.{}", j + 1)));
                }
            }
        }
        FiniteLattice::from_elements_covers(&els, &cvs).expect("grid")
    }

    /// The corpus used by the acceptance suite: chains of length 1..=5,
    /// the diamond, the pentagon, and the 2x2 and 2x3 grids.
    pub fn all() -> Vec<(String, FiniteLattice)> {
        let mut out: Vec<(String, FiniteLattice)> = (1..=5)
            .map(|k| (format!("chain{k}"), chain(k)))
            .collect();
        out.push(("m3".into(), m3()));
        out.push(("n5".into(), n5()));
        out.push(("grid2x2".into(), grid(2, 2)));
        out.push(("grid2x3".into(), grid(2, 3)));
        out
    }

    /// The modular members of [`all`].
    pub fn modular() -> Vec<(String, FiniteLattice)> {
        all()
            .into_iter()
            .filter(|(_, l)| l.classify().modular)
            .collect()
    }
}
