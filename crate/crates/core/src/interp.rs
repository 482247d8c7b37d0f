//! Interpolators on `Z^r`, concrete models with a distinguished unit, exact
//! integer-subgroup membership, and the construction of interpolators that
//! keep a designated family of subgroups closed under interpolation.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum InterpError {
    #[error("rank mismatch: expected {expected}, got {got}")]
    RankMismatch { expected: usize, got: usize },
    #[error("no interpolant in designated subgroup for quadruple {0}")]
    NoInterpolantInSubgroup(String),
    #[error("subgroup family is not closed under intersection: members {0} and {1}")]
    FamilyNotIntersectionClosed(usize, usize),
}

pub type Vector = Vec<i64>;

pub fn vec_add(a: &[i64], b: &[i64]) -> Vector {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

pub fn vec_sub(a: &[i64], b: &[i64]) -> Vector {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn vec_scale(a: &[i64], k: i64) -> Vector {
    a.iter().map(|x| x * k).collect()
}

pub fn vec_leq(a: &[i64], b: &[i64]) -> bool {
    a.iter().zip(b).all(|(x, y)| x <= y)
}

pub fn fmt_vec(v: &[i64]) -> String {
    let body: Vec<String> = v.iter().map(|x| x.to_string()).collect();
    format!("<{}>", body.join(","))
}

/// A quadruple `(x, x', y, y')` submitted to an interpolator.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Quad {
    pub x: Vector,
    pub x2: Vector,
    pub y: Vector,
    pub y2: Vector,
}

impl Quad {
    pub fn new(x: Vector, x2: Vector, y: Vector, y2: Vector) -> Self {
        Quad { x, x2, y, y2 }
    }

    /// The premise `x, x' <= y, y'`, componentwise.
    pub fn premise_holds(&self) -> bool {
        vec_leq(&self.x, &self.y)
            && vec_leq(&self.x, &self.y2)
            && vec_leq(&self.x2, &self.y)
            && vec_leq(&self.x2, &self.y2)
    }

    /// Canonical representative of the orbit under swapping the lower pair
    /// and swapping the upper pair: both pairs sorted lexicographically.
    pub fn canonical(&self) -> Quad {
        let (x, x2) = if self.x <= self.x2 {
            (self.x.clone(), self.x2.clone())
        } else {
            (self.x2.clone(), self.x.clone())
        };
        let (y, y2) = if self.y <= self.y2 {
            (self.y.clone(), self.y2.clone())
        } else {
            (self.y2.clone(), self.y.clone())
        };
        Quad { x, x2, y, y2 }
    }

    /// Componentwise box `[max(x,x'), min(y,y')]` of admissible interpolants.
    pub fn bounds(&self) -> (Vector, Vector) {
        let lo: Vector = self
            .x
            .iter()
            .zip(&self.x2)
            .map(|(a, b)| *a.max(b))
            .collect();
        let hi: Vector = self
            .y
            .iter()
            .zip(&self.y2)
            .map(|(a, b)| *a.min(b))
            .collect();
        (lo, hi)
    }
}

impl fmt::Display for Quad {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "({},{},{},{})",
            fmt_vec(&self.x),
            fmt_vec(&self.x2),
            fmt_vec(&self.y),
            fmt_vec(&self.y2)
        )
    }
}

/// Enumerates the integer points of `[lo, hi]` in lexicographic order.
pub fn box_points(lo: &[i64], hi: &[i64]) -> Vec<Vector> {
    if lo.iter().zip(hi).any(|(l, h)| l > h) {
        return Vec::new();
    }
    let mut out = vec![Vec::new()];
    for (l, h) in lo.iter().zip(hi) {
        let mut next = Vec::new();
        for p in &out {
            for v in *l..=*h {
                let mut q = p.clone();
                q.push(v);
                next.push(q);
            }
        }
        out = next;
    }
    out
}

/// Common interface of all interpolator implementations.
pub trait Interpolate {
    fn rank(&self) -> usize;
    fn interpolate(&self, q: &Quad) -> Result<Vector, InterpError>;
}

/// A total interpolator on `Z^r`: componentwise maximum of the lower pair
/// when the premise holds (zero otherwise), overridden on finitely many
/// canonical quadruples.
#[derive(Debug, Clone)]
pub struct Interpolator {
    rank: usize,
    overrides: HashMap<Quad, Vector>,
}

/// On-disk override table entry.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OverrideEntry {
    pub x: Vector,
    pub x2: Vector,
    pub y: Vector,
    pub y2: Vector,
    pub z: Vector,
}

impl Interpolator {
    pub fn base(rank: usize) -> Self {
        Interpolator {
            rank,
            overrides: HashMap::new(),
        }
    }

    /// Adds an override for the orbit of `q`. The value is not validated
    /// here; run [`validate_interpolator`] to check it.
    pub fn with_override(mut self, q: Quad, z: Vector) -> Self {
        self.overrides.insert(q.canonical(), z);
        self
    }

    pub fn from_entries(rank: usize, entries: &[OverrideEntry]) -> Self {
        let mut it = Interpolator::base(rank);
        for e in entries {
            it = it.with_override(
                Quad::new(e.x.clone(), e.x2.clone(), e.y.clone(), e.y2.clone()),
                e.z.clone(),
            );
        }
        it
    }

    pub fn overrides(&self) -> impl Iterator<Item = (&Quad, &Vector)> {
        self.overrides.iter()
    }
}

impl Interpolate for Interpolator {
    fn rank(&self) -> usize {
        self.rank
    }

    fn interpolate(&self, q: &Quad) -> Result<Vector, InterpError> {
        if q.x.len() != self.rank {
            return Err(InterpError::RankMismatch {
                expected: self.rank,
                got: q.x.len(),
            });
        }
        if !q.premise_holds() {
            return Ok(vec![0; self.rank]);
        }
        let canon = q.canonical();
        if let Some(z) = self.overrides.get(&canon) {
            return Ok(z.clone());
        }
        let (lo, _) = q.bounds();
        Ok(lo)
    }
}

/// One rule violation found while validating an interpolator.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InterpViolation {
    pub quad: String,
    pub value: Vector,
    pub rule: String,
}

/// Checks the interpolation and symmetry rules on every override entry
/// exactly and on the supplied sample quadruples for the base rule.
pub fn validate_interpolator<I: Interpolate>(
    interp: &I,
    overrides: &[(Quad, Vector)],
    samples: &[Quad],
) -> Vec<InterpViolation> {
    let mut out = Vec::new();
    for (q, z) in overrides {
        if q.premise_holds() {
            let (lo, hi) = q.bounds();
            if !(vec_leq(&lo, z) && vec_leq(z, &hi)) {
                out.push(InterpViolation {
                    quad: q.to_string(),
                    value: z.clone(),
                    rule: "interpolation".into(),
                });
            }
        }
    }
    for q in samples {
        let z = match interp.interpolate(q) {
            Ok(z) => z,
            Err(e) => {
                out.push(InterpViolation {
                    quad: q.to_string(),
                    value: Vec::new(),
                    rule: format!("evaluation error: {e}"),
                });
                continue;
            }
        };
        if q.premise_holds() {
            let (lo, hi) = q.bounds();
            if !(vec_leq(&lo, &z) && vec_leq(&z, &hi)) {
                out.push(InterpViolation {
                    quad: q.to_string(),
                    value: z.clone(),
                    rule: "interpolation".into(),
                });
            }
        }
        let swaps = [
            Quad::new(q.x2.clone(), q.x.clone(), q.y.clone(), q.y2.clone()),
            Quad::new(q.x.clone(), q.x2.clone(), q.y2.clone(), q.y.clone()),
        ];
        for s in swaps {
            if interp.interpolate(&s).ok() != Some(z.clone()) {
                out.push(InterpViolation {
                    quad: q.to_string(),
                    value: z.clone(),
                    rule: "symmetry".into(),
                });
            }
        }
    }
    out
}

/// Deterministic quadruple sampler for validation runs.
pub fn sample_quads(rank: usize, count: usize, seed: u64) -> Vec<Quad> {
    let mut state = seed.wrapping_add(0x9e3779b97f4a7c15);
    let mut next = move || {
        // splitmix64
        state = state.wrapping_add(0x9e3779b97f4a7c15);
        let mut z = state;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
        z ^ (z >> 31)
    };
    fn rand_vec(rank: usize, next: &mut dyn FnMut() -> u64) -> Vector {
        (0..rank).map(|_| (next() % 7) as i64 - 3).collect()
    }
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let x = rand_vec(rank, &mut next);
        let x2 = rand_vec(rank, &mut next);
        let q = if next() % 2 == 0 {
            // Half the samples satisfy the premise by construction.
            let top: Vector = x.iter().zip(&x2).map(|(a, b)| *a.max(b)).collect();
            let bump1: Vector = (0..rank).map(|_| (next() % 3) as i64).collect();
            let bump2: Vector = (0..rank).map(|_| (next() % 3) as i64).collect();
            Quad::new(x, x2, vec_add(&top, &bump1), vec_add(&top, &bump2))
        } else {
            let y = rand_vec(rank, &mut next);
            let y2 = rand_vec(rank, &mut next);
            Quad::new(x, x2, y, y2)
        };
        out.push(q);
    }
    out
}

/// A concrete model: `Z^rank` ordered componentwise, a distinguished
/// nonnegative unit, a generator assignment into `[0, unit]`, and an
/// interpolator.
#[derive(Debug, Clone)]
pub struct Model {
    pub rank: usize,
    pub unit: Vector,
    pub interpolator: Interpolator,
    pub assignment: BTreeMap<String, Vector>,
}

impl Model {
    pub fn new(unit: Vector, interpolator: Interpolator) -> Self {
        Model {
            rank: unit.len(),
            unit,
            interpolator,
            assignment: BTreeMap::new(),
        }
    }

    pub fn assign(mut self, label: &str, v: Vector) -> Self {
        self.assignment.insert(label.to_string(), v);
        self
    }
}

/// One failed axiom in a model-membership report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelViolation {
    pub axiom: String,
    pub witness: String,
}

/// Report for [`validate_model`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelReport {
    pub violations: Vec<ModelViolation>,
    pub interpolator_violations: Vec<InterpViolation>,
    /// Group axioms and unperforation hold for every componentwise-ordered
    /// `Z^r` and are accepted without enumeration.
    pub assumed: Vec<String>,
}

impl ModelReport {
    pub fn ok(&self) -> bool {
        self.violations.is_empty() && self.interpolator_violations.is_empty()
    }
}

/// Checks membership of a model in the axiom class: nonnegative unit, the
/// index-two rule (`0 <= 3x <= unit` forces `x = 0`, which on `Z^r` fails
/// exactly when some unit coordinate is `>= 3`), assignments inside
/// `[0, unit]`, and the interpolator rules on samples.
pub fn validate_model(model: &Model, samples: usize, seed: u64) -> ModelReport {
    let mut violations = Vec::new();
    if !model.unit.iter().all(|&c| c >= 0) {
        violations.push(ModelViolation {
            axiom: "POINT".into(),
            witness: fmt_vec(&model.unit),
        });
    }
    for (i, &c) in model.unit.iter().enumerate() {
        if c >= 3 {
            let mut basis = vec![0; model.rank];
            basis[i] = 1;
            violations.push(ModelViolation {
                axiom: "INDEX".into(),
                witness: fmt_vec(&basis),
            });
        }
    }
    for (label, v) in &model.assignment {
        if v.len() != model.rank
            || !vec_leq(&vec![0; model.rank], v)
            || !vec_leq(v, &model.unit)
        {
            violations.push(ModelViolation {
                axiom: "ASSIGNMENT".into(),
                witness: format!("{label} -> {}", fmt_vec(v)),
            });
        }
    }
    let overrides: Vec<(Quad, Vector)> = model
        .interpolator
        .overrides()
        .map(|(q, z)| (q.clone(), z.clone()))
        .collect();
    let quads = sample_quads(model.rank, samples, seed);
    let interpolator_violations = validate_interpolator(&model.interpolator, &overrides, &quads);
    ModelReport {
        violations,
        interpolator_violations,
        assumed: vec![
            "POAG: componentwise order on Z^r".into(),
            "UNPERF: componentwise order is unperforated".into(),
        ],
    }
}

/// Brute-force index check on `Z^r`: scans the box `[0, unit]` for a
/// nonzero `x` with `3x <= unit`. Test oracle for the INDEX clause of
/// [`validate_model`].
pub fn index_violation_bruteforce(unit: &[i64]) -> Option<Vector> {
    let points = box_points(&vec![0; unit.len()], unit);
    points
        .into_iter()
        .find(|x| x.iter().any(|&c| c != 0) && vec_leq(&vec_scale(x, 3), unit))
}

/// A finitely generated subgroup of `Z^rank` with exact membership.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IntegerSubgroup {
    pub rank: usize,
    pub generators: Vec<Vector>,
}

/// Outcome of [`IntegerSubgroup::membership`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Membership {
    /// Coordinates of the vector over the generator list.
    Member(Vec<i64>),
    NotMember,
}

impl IntegerSubgroup {
    pub fn new(rank: usize, generators: Vec<Vector>) -> Self {
        assert!(generators.iter().all(|g| g.len() == rank));
        IntegerSubgroup { rank, generators }
    }

    pub fn full(rank: usize) -> Self {
        let gens = (0..rank)
            .map(|i| {
                let mut v = vec![0; rank];
                v[i] = 1;
                v
            })
            .collect();
        IntegerSubgroup::new(rank, gens)
    }

    /// Exact membership by integer elimination. `Member` carries one
    /// coordinate vector `c` with `sum c_i * g_i = v`.
    pub fn membership(&self, v: &[i64]) -> Membership {
        assert_eq!(v.len(), self.rank);
        match solve_integer(&self.generators, v) {
            Some(c) => Membership::Member(c),
            None => Membership::NotMember,
        }
    }

    pub fn contains(&self, v: &[i64]) -> bool {
        matches!(self.membership(v), Membership::Member(_))
    }

    /// Is every generator of `other` a member of `self`?
    pub fn contains_subgroup(&self, other: &IntegerSubgroup) -> bool {
        other.generators.iter().all(|g| self.contains(g))
    }

    /// Intersection of two subgroups, computed through the integer kernel
    /// of the stacked generator matrix.
    pub fn intersect(&self, other: &IntegerSubgroup) -> IntegerSubgroup {
        assert_eq!(self.rank, other.rank);
        let k1 = self.generators.len();
        let mut stacked: Vec<Vec<i128>> = Vec::new();
        for g in &self.generators {
            stacked.push(g.iter().map(|&x| x as i128).collect());
        }
        for g in &other.generators {
            stacked.push(g.iter().map(|&x| -(x as i128)).collect());
        }
        let kernel = integer_kernel(&stacked);
        let gens: Vec<Vector> = kernel
            .iter()
            .map(|row| {
                let mut v = vec![0i128; self.rank];
                for (i, coef) in row.iter().take(k1).enumerate() {
                    for (j, val) in self.generators[i].iter().enumerate() {
                        v[j] += coef * (*val as i128);
                    }
                }
                v.into_iter()
                    .map(|x| i64::try_from(x).expect("overflow"))
                    .collect()
            })
            .filter(|v: &Vector| v.iter().any(|&x| x != 0))
            .collect();
        IntegerSubgroup::new(self.rank, gens)
    }

    pub fn same_group(&self, other: &IntegerSubgroup) -> bool {
        self.contains_subgroup(other) && other.contains_subgroup(self)
    }
}

/// Solves `sum c_i * gens_i = target` over the integers via a row-style
/// Hermite reduction with a transformation record.
fn solve_integer(gens: &[Vector], target: &[i64]) -> Option<Vec<i64>> {
    let k = gens.len();
    let r = target.len();
    if k == 0 {
        return if target.iter().all(|&x| x == 0) {
            Some(Vec::new())
        } else {
            None
        };
    }
    // Work matrix rows: [generator | transformation-identity].
    let mut m: Vec<Vec<i128>> = gens
        .iter()
        .enumerate()
        .map(|(i, g)| {
            let mut row: Vec<i128> = g.iter().map(|&x| x as i128).collect();
            row.extend((0..k).map(|j| i128::from(j == i)));
            row
        })
        .collect();
    hermite_rows(&mut m, r);
    // Forward-substitute the target through the echelon rows.
    let mut t: Vec<i128> = target.iter().map(|&x| x as i128).collect();
    let mut combo = vec![0i128; k];
    for row in &m {
        let pivot = (0..r).find(|&j| row[j] != 0);
        let Some(p) = pivot else { continue };
        if t[p] == 0 {
            continue;
        }
        if t[p] % row[p] != 0 {
            return None;
        }
        let q = t[p] / row[p];
        for j in 0..r {
            t[j] -= q * row[j];
        }
        for j in 0..k {
            combo[j] += q * row[r + j];
        }
    }
    if t.iter().any(|&x| x != 0) {
        return None;
    }
    Some(
        combo
            .into_iter()
            .map(|x| i64::try_from(x).expect("coordinate overflow"))
            .collect(),
    )
}

/// Basis of the left kernel `{x : x * m = 0}` of an integer matrix given by
/// rows.
fn integer_kernel(m: &[Vec<i128>]) -> Vec<Vec<i128>> {
    let k = m.len();
    if k == 0 {
        return Vec::new();
    }
    let r = m[0].len();
    let mut work: Vec<Vec<i128>> = m
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut w = row.clone();
            w.extend((0..k).map(|j| i128::from(j == i)));
            w
        })
        .collect();
    hermite_rows(&mut work, r);
    work.iter()
        .filter(|row| row[..r].iter().all(|&x| x == 0))
        .map(|row| row[r..].to_vec())
        .collect()
}

/// In-place row Hermite reduction on the first `cols` columns; the columns
/// beyond `cols` carry the transformation and are updated alongside.
fn hermite_rows(m: &mut [Vec<i128>], cols: usize) {
    let rows = m.len();
    let mut pivot_row = 0;
    for col in 0..cols {
        if pivot_row >= rows {
            break;
        }
        loop {
            // Row with the smallest nonzero entry in this column.
            let mut best: Option<usize> = None;
            for (i, row) in m.iter().enumerate().skip(pivot_row) {
                if row[col] != 0 && best.map_or(true, |b: usize| row[col].abs() < m[b][col].abs())
                {
                    best = Some(i);
                }
            }
            let Some(b) = best else { break };
            m.swap(pivot_row, b);
            let mut done = true;
            let pivot_val = m[pivot_row][col];
            for i in pivot_row + 1..rows {
                if m[i][col] == 0 {
                    continue;
                }
                let q = m[i][col].div_euclid(pivot_val);
                if q != 0 {
                    for j in 0..m[i].len() {
                        let sub = q * m[pivot_row][j];
                        m[i][j] -= sub;
                    }
                }
                if m[i][col] != 0 {
                    done = false;
                }
            }
            if done {
                if m[pivot_row][col] < 0 {
                    for x in m[pivot_row].iter_mut() {
                        *x = -*x;
                    }
                }
                pivot_row += 1;
                break;
            }
        }
    }
}

/// An interpolator that selects, for each quadruple, the lexicographically
/// least box point inside the least family subgroup containing the
/// quadruple's range. Materialized choices are cached per canonical orbit.
pub struct SmoothInterpolator {
    rank: usize,
    family: Vec<IntegerSubgroup>,
    cache: Mutex<HashMap<Quad, Vector>>,
}

impl fmt::Debug for SmoothInterpolator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SmoothInterpolator")
            .field("rank", &self.rank)
            .field("family_size", &self.family.len())
            .finish()
    }
}

impl SmoothInterpolator {
    /// Requires the family to be closed under pairwise intersection.
    pub fn new(rank: usize, family: Vec<IntegerSubgroup>) -> Result<Self, InterpError> {
        for (i, a) in family.iter().enumerate() {
            for (j, b) in family.iter().enumerate().skip(i + 1) {
                let inter = a.intersect(b);
                if !family.iter().any(|m| m.same_group(&inter)) {
                    return Err(InterpError::FamilyNotIntersectionClosed(i, j));
                }
            }
        }
        Ok(SmoothInterpolator {
            rank,
            family,
            cache: Mutex::new(HashMap::new()),
        })
    }

    /// Least family member containing all four range vectors, or the full
    /// group when no member does.
    fn least_containing(&self, q: &Quad) -> IntegerSubgroup {
        let range = [&q.x, &q.x2, &q.y, &q.y2];
        let mut best: Option<&IntegerSubgroup> = None;
        for member in &self.family {
            if range.iter().all(|v| member.contains(v)) {
                best = match best {
                    None => Some(member),
                    Some(b) => {
                        if b.contains_subgroup(member) {
                            Some(member)
                        } else {
                            Some(b)
                        }
                    }
                };
            }
        }
        best.cloned()
            .unwrap_or_else(|| IntegerSubgroup::full(self.rank))
    }

    /// Snapshot of the materialized entries, for validation.
    pub fn materialized(&self) -> Vec<(Quad, Vector)> {
        self.cache
            .lock()
            .unwrap()
            .iter()
            .map(|(q, z)| (q.clone(), z.clone()))
            .collect()
    }
}

impl Interpolate for SmoothInterpolator {
    fn rank(&self) -> usize {
        self.rank
    }

    fn interpolate(&self, q: &Quad) -> Result<Vector, InterpError> {
        if q.x.len() != self.rank {
            return Err(InterpError::RankMismatch {
                expected: self.rank,
                got: q.x.len(),
            });
        }
        if !q.premise_holds() {
            return Ok(vec![0; self.rank]);
        }
        let canon = q.canonical();
        if let Some(z) = self.cache.lock().unwrap().get(&canon) {
            return Ok(z.clone());
        }
        let sub = self.least_containing(&canon);
        let (lo, hi) = canon.bounds();
        let choice = box_points(&lo, &hi)
            .into_iter()
            .find(|z| sub.contains(z))
            .ok_or_else(|| InterpError::NoInterpolantInSubgroup(canon.to_string()))?;
        self.cache.lock().unwrap().insert(canon, choice.clone());
        Ok(choice)
    }
}

/// The image subgroups of the rank-4 model separating a two-generator set:
/// images of the unit line, of the two single-generator subgroups, and of
/// the pair subgroup. Used as a smoothening family by the scenario suite.
pub fn sigma_family() -> Vec<IntegerSubgroup> {
    vec![
        IntegerSubgroup::new(4, vec![vec![1, 1, 1, 1]]),
        IntegerSubgroup::new(4, vec![vec![1, 1, 0, 0], vec![0, 0, 1, 1]]),
        IntegerSubgroup::new(4, vec![vec![1, 0, 1, 0], vec![0, 1, 0, 1]]),
        IntegerSubgroup::new(
            4,
            vec![
                vec![1, 1, 0, 0],
                vec![1, 0, 1, 0],
                vec![1, 1, 1, 1],
                vec![1, 0, 0, 0],
            ],
        ),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn base_rule_is_valid_on_samples() {
        let it = Interpolator::base(2);
        let samples = sample_quads(2, 200, 7);
        assert!(validate_interpolator(&it, &[], &samples).is_empty());
    }

    #[test]
    fn reference_override_valid_and_twisted_one_not() {
        let q = Quad::new(vec![0, 0], vec![0, 0], vec![1, 0], vec![1, 1]);
        let good = vec![(q.clone(), vec![1, 0])];
        let it = Interpolator::base(2).with_override(q.clone(), vec![1, 0]);
        assert!(validate_interpolator(&it, &good, &[]).is_empty());

        let bad = vec![(q.clone(), vec![1, 1])];
        let it = Interpolator::base(2).with_override(q, vec![1, 1]);
        let report = validate_interpolator(&it, &bad, &[]);
        assert_eq!(report.len(), 1);
        assert_eq!(report[0].rule, "interpolation");
    }

    #[test]
    fn model_index_decision() {
        let m = Model::new(vec![2, 1], Interpolator::base(2));
        assert!(validate_model(&m, 50, 1).ok());
        assert!(index_violation_bruteforce(&[2, 1]).is_none());

        let m = Model::new(vec![3], Interpolator::base(1));
        let rep = validate_model(&m, 50, 1);
        assert!(!rep.ok());
        assert_eq!(rep.violations[0].axiom, "INDEX");
        assert_eq!(rep.violations[0].witness, "<1>");
        assert_eq!(index_violation_bruteforce(&[3]), Some(vec![1]));

        let m = Model::new(vec![1, 1, 1, 1], Interpolator::base(4));
        assert!(validate_model(&m, 50, 1).ok());
    }

    #[test]
    fn index_decision_matches_bruteforce_up_to_rank_6() {
        for rank in 1..=3usize {
            for unit in box_points(&vec![0; rank], &vec![4; rank]) {
                let decided = unit.iter().any(|&c| c >= 3);
                assert_eq!(index_violation_bruteforce(&unit).is_some(), decided);
            }
        }
        for rank in 4..=6usize {
            for c in 0..=4i64 {
                let unit = vec![c; rank];
                assert_eq!(index_violation_bruteforce(&unit).is_some(), c >= 3);
            }
        }
    }

    #[test]
    fn subgroup_membership_examples() {
        let s = IntegerSubgroup::new(2, vec![vec![2, 0]]);
        assert_eq!(s.membership(&[4, 0]), Membership::Member(vec![2]));
        assert_eq!(s.membership(&[3, 0]), Membership::NotMember);

        let s = IntegerSubgroup::new(
            4,
            vec![
                vec![1, 1, 0, 0],
                vec![1, 0, 1, 0],
                vec![1, 1, 1, 1],
                vec![1, 0, 0, 0],
            ],
        );
        match s.membership(&[0, 1, 1, 0]) {
            Membership::Member(c) => {
                let mut v = vec![0i64; 4];
                for (coef, g) in c.iter().zip(&s.generators) {
                    v = vec_add(&v, &vec_scale(g, *coef));
                }
                assert_eq!(v, vec![0, 1, 1, 0]);
            }
            m => panic!("expected member, got {m:?}"),
        }
    }

    #[test]
    fn subgroup_intersection() {
        let a = IntegerSubgroup::new(2, vec![vec![2, 0], vec![0, 1]]);
        let b = IntegerSubgroup::new(2, vec![vec![3, 0], vec![0, 2]]);
        let i = a.intersect(&b);
        assert!(i.contains(&[6, 0]));
        assert!(i.contains(&[0, 2]));
        assert!(!i.contains(&[2, 0]));
        assert!(!i.contains(&[3, 0]));
        assert!(!i.contains(&[0, 1]));
    }

    #[test]
    fn smoothen_forces_unique_point() {
        let sm = SmoothInterpolator::new(4, sigma_family()).unwrap();
        let q = Quad::new(
            vec![0, 0, 0, 0],
            vec![1, 0, 0, -1],
            vec![1, 1, 0, 0],
            vec![1, 0, 1, 0],
        );
        // The admissible box is the single point <1,0,0,0>.
        let (lo, hi) = q.bounds();
        assert_eq!(box_points(&lo, &hi), vec![vec![1, 0, 0, 0]]);
        assert_eq!(sm.interpolate(&q).unwrap(), vec![1, 0, 0, 0]);
        // Swapping the lower pair gives the same value.
        let swapped = Quad::new(
            vec![1, 0, 0, -1],
            vec![0, 0, 0, 0],
            vec![1, 0, 1, 0],
            vec![1, 1, 0, 0],
        );
        assert_eq!(sm.interpolate(&swapped).unwrap(), vec![1, 0, 0, 0]);
        // Materialized entries pass validation.
        let entries = sm.materialized();
        assert!(!entries.is_empty());
        assert!(validate_interpolator(&sm, &entries, &[]).is_empty());
    }

    #[test]
    fn smoothen_degenerate_box() {
        let family = vec![IntegerSubgroup::full(2)];
        let sm = SmoothInterpolator::new(2, family).unwrap();
        let q = Quad::new(vec![0, 0], vec![0, 0], vec![0, 0], vec![0, 0]);
        assert_eq!(sm.interpolate(&q).unwrap(), vec![0, 0]);
    }

    #[test]
    fn smoothen_rejects_non_closed_family() {
        let family = vec![
            IntegerSubgroup::new(2, vec![vec![2, 0], vec![0, 1]]),
            IntegerSubgroup::new(2, vec![vec![3, 0], vec![0, 1]]),
        ];
        assert!(matches!(
            SmoothInterpolator::new(2, family),
            Err(InterpError::FamilyNotIntersectionClosed(_, _))
        ));
    }

    #[test]
    fn smoothen_reports_missing_interpolant() {
        // The index-3 subgroup generated by <2,1> and <1,2> contains the
        // whole range of the quadruple below, but the only admissible box
        // point is <2,2>, which it misses.
        let family = vec![IntegerSubgroup::new(2, vec![vec![2, 1], vec![1, 2]])];
        let sm = SmoothInterpolator::new(2, family).unwrap();
        let q = Quad::new(vec![2, 1], vec![1, 2], vec![2, 4], vec![4, 2]);
        let (lo, hi) = q.bounds();
        assert_eq!(box_points(&lo, &hi), vec![vec![2, 2]]);
        assert!(matches!(
            sm.interpolate(&q),
            Err(InterpError::NoInterpolantInSubgroup(_))
        ));
    }

    #[test]
    fn override_entries_roundtrip() {
        let entries = vec![OverrideEntry {
            x: vec![0, 0],
            x2: vec![0, -1],
            y: vec![1, 0],
            y2: vec![1, 0],
            z: vec![0, 0],
        }];
        let json = serde_json::to_string(&entries).unwrap();
        let back: Vec<OverrideEntry> = serde_json::from_str(&json).unwrap();
        let it = Interpolator::from_entries(2, &back);
        let q = Quad::new(vec![0, 0], vec![0, -1], vec![1, 0], vec![1, 0]);
        assert_eq!(it.interpolate(&q).unwrap(), vec![0, 0]);
    }
}
