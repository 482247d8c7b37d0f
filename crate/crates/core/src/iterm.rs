//! Terms over the signature `0`, `e`, generators, difference and the 4-ary
//! interpolation operation, with model evaluation, restriction, interval
//! bounds, a sound forward-chaining inequality prover, and a finite-model
//! refuter.
//!
//! The prover and the refuter attack the same question from opposite ends:
//! `derive_leq` certifies inequalities that hold in every model of the
//! axiom class, `refute_leq` hunts for a concrete model of the class where
//! the inequality fails. Nothing may ever be both proved and refuted.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::egroup::{e_leq, EElement};
use crate::exec::ExecMode;
#[cfg(feature = "parallel")]
use crate::exec::map_collect;
use crate::interp::{box_points, fmt_vec, Interpolate, InterpError, Model, Quad, Vector};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TermError {
    #[error("unbound generator `{0}`")]
    UnboundGenerator(String),
    #[error(transparent)]
    Interp(#[from] InterpError),
    #[error("parse error: {0}")]
    Parse(String),
}

/// Syntax tree for group terms with interpolation nodes.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ITerm {
    Zero,
    Unit,
    Gen(String),
    Sum(Box<ITerm>, Box<ITerm>),
    Diff(Box<ITerm>, Box<ITerm>),
    Bowtie(Box<[ITerm; 4]>),
}

impl ITerm {
    pub fn gen(label: &str) -> ITerm {
        ITerm::Gen(label.to_string())
    }

    /// `e - a_label`.
    pub fn cogen(label: &str) -> ITerm {
        ITerm::Diff(Box::new(ITerm::Unit), Box::new(ITerm::gen(label)))
    }

    pub fn sum(a: ITerm, b: ITerm) -> ITerm {
        ITerm::Sum(Box::new(a), Box::new(b))
    }

    pub fn diff(a: ITerm, b: ITerm) -> ITerm {
        ITerm::Diff(Box::new(a), Box::new(b))
    }

    pub fn bowtie(x: ITerm, x2: ITerm, y: ITerm, y2: ITerm) -> ITerm {
        ITerm::Bowtie(Box::new([x, x2, y, y2]))
    }

    /// The canonical squeeze element of a two-generator pair:
    /// `bowtie(0, a+a'-e, a, a')` with the labels sorted, so the builder
    /// is symmetric in its arguments.
    pub fn c_pair(l1: &str, l2: &str) -> ITerm {
        let (lo, hi) = if l1 <= l2 { (l1, l2) } else { (l2, l1) };
        ITerm::bowtie(
            ITerm::Zero,
            ITerm::diff(ITerm::sum(ITerm::gen(lo), ITerm::gen(hi)), ITerm::Unit),
            ITerm::gen(lo),
            ITerm::gen(hi),
        )
    }

    /// Generator labels occurring in the tree.
    pub fn syntactic_support(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_support(&mut out);
        out
    }

    fn collect_support(&self, out: &mut BTreeSet<String>) {
        match self {
            ITerm::Zero | ITerm::Unit => {}
            ITerm::Gen(l) => {
                out.insert(l.clone());
            }
            ITerm::Sum(a, b) | ITerm::Diff(a, b) => {
                a.collect_support(out);
                b.collect_support(out);
            }
            ITerm::Bowtie(c) => {
                for t in c.iter() {
                    t.collect_support(out);
                }
            }
        }
    }

    /// Substitutes zero for every generator outside `keep`.
    pub fn restrict(&self, keep: &BTreeSet<String>) -> ITerm {
        match self {
            ITerm::Zero => ITerm::Zero,
            ITerm::Unit => ITerm::Unit,
            ITerm::Gen(l) => {
                if keep.contains(l) {
                    ITerm::Gen(l.clone())
                } else {
                    ITerm::Zero
                }
            }
            ITerm::Sum(a, b) => ITerm::sum(a.restrict(keep), b.restrict(keep)),
            ITerm::Diff(a, b) => ITerm::diff(a.restrict(keep), b.restrict(keep)),
            ITerm::Bowtie(c) => ITerm::Bowtie(Box::new([
                c[0].restrict(keep),
                c[1].restrict(keep),
                c[2].restrict(keep),
                c[3].restrict(keep),
            ])),
        }
    }

    /// Parses the s-expression syntax:
    /// `(bowtie 0 (sub (add (gen xi) (gen eta)) e) (gen xi) (gen eta))`.
    pub fn parse(text: &str) -> Result<ITerm, TermError> {
        let tokens = tokenize(text);
        let mut pos = 0;
        let term = parse_term(&tokens, &mut pos)?;
        if pos != tokens.len() {
            return Err(TermError::Parse(format!(
                "trailing input after term: `{}`",
                tokens[pos..].join(" ")
            )));
        }
        Ok(term)
    }
}

impl fmt::Display for ITerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ITerm::Zero => write!(f, "0"),
            ITerm::Unit => write!(f, "e"),
            ITerm::Gen(l) => write!(f, "(gen {l})"),
            ITerm::Sum(a, b) => write!(f, "(add {a} {b})"),
            ITerm::Diff(a, b) => write!(f, "(sub {a} {b})"),
            ITerm::Bowtie(c) => write!(f, "(bowtie {} {} {} {})", c[0], c[1], c[2], c[3]),
        }
    }
}

fn tokenize(text: &str) -> Vec<String> {
    text.replace('(', " ( ")
        .replace(')', " ) ")
        .split_whitespace()
        .map(str::to_string)
        .collect()
}

fn parse_term(tokens: &[String], pos: &mut usize) -> Result<ITerm, TermError> {
    let tok = tokens
        .get(*pos)
        .ok_or_else(|| TermError::Parse("unexpected end of input".into()))?;
    *pos += 1;
    match tok.as_str() {
        "0" => Ok(ITerm::Zero),
        "e" => Ok(ITerm::Unit),
        "(" => {
            let head = tokens
                .get(*pos)
                .ok_or_else(|| TermError::Parse("unexpected end after `(`".into()))?
                .clone();
            *pos += 1;
            let term = match head.as_str() {
                "gen" => {
                    let label = tokens
                        .get(*pos)
                        .ok_or_else(|| TermError::Parse("missing generator label".into()))?
                        .clone();
                    *pos += 1;
                    ITerm::Gen(label)
                }
                "add" | "sub" => {
                    let a = parse_term(tokens, pos)?;
                    let b = parse_term(tokens, pos)?;
                    if head == "add" {
                        ITerm::sum(a, b)
                    } else {
                        ITerm::diff(a, b)
                    }
                }
                "bowtie" => {
                    let x = parse_term(tokens, pos)?;
                    let x2 = parse_term(tokens, pos)?;
                    let y = parse_term(tokens, pos)?;
                    let y2 = parse_term(tokens, pos)?;
                    ITerm::bowtie(x, x2, y, y2)
                }
                other => return Err(TermError::Parse(format!("unknown operator `{other}`"))),
            };
            match tokens.get(*pos) {
                Some(t) if t == ")" => {
                    *pos += 1;
                    Ok(term)
                }
                _ => Err(TermError::Parse("missing `)`".into())),
            }
        }
        other => Err(TermError::Parse(format!("unexpected token `{other}`"))),
    }
}

/// Evaluates a term in a concrete model using the model's interpolator.
pub fn evaluate(t: &ITerm, model: &Model) -> Result<Vector, TermError> {
    evaluate_with(t, &model.unit, &model.assignment, &model.interpolator)
}

/// Evaluates with an explicit interpolator (e.g. a smoothening one).
pub fn evaluate_with<I: Interpolate>(
    t: &ITerm,
    unit: &[i64],
    assignment: &BTreeMap<String, Vector>,
    interp: &I,
) -> Result<Vector, TermError> {
    match t {
        ITerm::Zero => Ok(vec![0; unit.len()]),
        ITerm::Unit => Ok(unit.to_vec()),
        ITerm::Gen(l) => assignment
            .get(l)
            .cloned()
            .ok_or_else(|| TermError::UnboundGenerator(l.clone())),
        ITerm::Sum(a, b) => {
            let (va, vb) = (
                evaluate_with(a, unit, assignment, interp)?,
                evaluate_with(b, unit, assignment, interp)?,
            );
            Ok(va.iter().zip(&vb).map(|(x, y)| x + y).collect())
        }
        ITerm::Diff(a, b) => {
            let (va, vb) = (
                evaluate_with(a, unit, assignment, interp)?,
                evaluate_with(b, unit, assignment, interp)?,
            );
            Ok(va.iter().zip(&vb).map(|(x, y)| x - y).collect())
        }
        ITerm::Bowtie(c) => {
            let vals: Vec<Vector> = c
                .iter()
                .map(|t| evaluate_with(t, unit, assignment, interp))
                .collect::<Result<_, _>>()?;
            let q = Quad::new(
                vals[0].clone(),
                vals[1].clone(),
                vals[2].clone(),
                vals[3].clone(),
            );
            Ok(interp.interpolate(&q)?)
        }
    }
}

/// Evaluates an element of the unit-and-generators group in a model.
pub fn evaluate_e(u: &EElement, unit: &[i64], assignment: &BTreeMap<String, Vector>) -> Vector {
    let mut out: Vector = unit.iter().map(|c| c * u.m).collect();
    for (l, &n) in &u.coeffs {
        if let Some(v) = assignment.get(l) {
            for (o, x) in out.iter_mut().zip(v) {
                *o += n * x;
            }
        }
    }
    out
}

struct TermBounds {
    lo: EElement,
    hi: EElement,
    exact: Option<EElement>,
}

fn bounds_rec(t: &ITerm) -> TermBounds {
    match t {
        ITerm::Zero => TermBounds {
            lo: EElement::zero(),
            hi: EElement::zero(),
            exact: Some(EElement::zero()),
        },
        ITerm::Unit => TermBounds {
            lo: EElement::unit(),
            hi: EElement::unit(),
            exact: Some(EElement::unit()),
        },
        ITerm::Gen(l) => TermBounds {
            lo: EElement::zero(),
            hi: EElement::gen(l),
            exact: Some(EElement::gen(l)),
        },
        ITerm::Sum(a, b) => {
            let (ba, bb) = (bounds_rec(a), bounds_rec(b));
            TermBounds {
                lo: ba.lo.add(&bb.lo),
                hi: ba.hi.add(&bb.hi),
                exact: match (ba.exact, bb.exact) {
                    (Some(x), Some(y)) => Some(x.add(&y)),
                    _ => None,
                },
            }
        }
        ITerm::Diff(a, b) => {
            let (ba, bb) = (bounds_rec(a), bounds_rec(b));
            TermBounds {
                lo: ba.lo.sub(&bb.hi),
                hi: ba.hi.sub(&bb.lo),
                exact: match (ba.exact, bb.exact) {
                    (Some(x), Some(y)) => Some(x.sub(&y)),
                    _ => None,
                },
            }
        }
        ITerm::Bowtie(c) => {
            // The value sits above the first lower child when the premise
            // holds and is zero otherwise, so pad each bound toward zero
            // with the scalar envelope when necessary.
            let bx = bounds_rec(&c[0]);
            let lo_cand = bx.exact.unwrap_or(bx.lo);
            let lo = if e_leq(&lo_cand, &EElement::zero()) {
                lo_cand
            } else {
                EElement::unit().scaled(lo_cand.subset_min().min(0))
            };
            let by2 = bounds_rec(&c[3]);
            let hi_cand = by2.exact.unwrap_or(by2.hi);
            let hi = if e_leq(&EElement::zero(), &hi_cand) {
                hi_cand
            } else {
                EElement::unit().scaled(hi_cand.subset_max().max(0))
            };
            TermBounds {
                lo,
                hi,
                exact: None,
            }
        }
    }
}

/// Structural interval bounds `(lo, hi)` with `lo <= t <= hi` valid in
/// every model of the axiom class.
pub fn term_bounds(t: &ITerm) -> (EElement, EElement) {
    let b = bounds_rec(t);
    (b.lo, b.hi)
}

// ---------------------------------------------------------------------
// Inequality derivation.
// ---------------------------------------------------------------------

/// Atoms of the linear-form view of a term: the unit, the generators, and
/// whole interpolation nodes, canonicalized by sorting each argument pair.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Atom {
    Unit,
    Gen(String),
    Bow(Box<[LinForm; 4]>),
}

/// Integer combination of atoms.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct LinForm {
    coeffs: BTreeMap<Atom, i64>,
}

impl LinForm {
    fn atom(a: Atom) -> LinForm {
        let mut coeffs = BTreeMap::new();
        coeffs.insert(a, 1);
        LinForm { coeffs }
    }

    fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    fn add(&self, other: &LinForm) -> LinForm {
        let mut out = self.clone();
        for (a, &c) in &other.coeffs {
            let e = out.coeffs.entry(a.clone()).or_insert(0);
            *e += c;
            if *e == 0 {
                out.coeffs.remove(a);
            }
        }
        out
    }

    fn sub(&self, other: &LinForm) -> LinForm {
        self.add(&other.scaled(-1))
    }

    fn scaled(&self, k: i64) -> LinForm {
        if k == 0 {
            return LinForm::default();
        }
        LinForm {
            coeffs: self
                .coeffs
                .iter()
                .map(|(a, &c)| (a.clone(), c * k))
                .collect(),
        }
    }

    fn content(&self) -> i64 {
        self.coeffs.values().fold(0i64, |acc, &c| gcd(acc, c.abs()))
    }

    fn max_coeff(&self) -> i64 {
        self.coeffs.values().map(|c| c.abs()).max().unwrap_or(0)
    }
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

impl fmt::Display for LinForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.coeffs.is_empty() {
            return write!(f, "0");
        }
        let mut first = true;
        for (a, &c) in &self.coeffs {
            let body = match a {
                Atom::Unit => "e".to_string(),
                Atom::Gen(l) => format!("a_{l}"),
                Atom::Bow(ch) => format!("bow({},{},{},{})", ch[0], ch[1], ch[2], ch[3]),
            };
            if first {
                match c {
                    1 => write!(f, "{body}")?,
                    -1 => write!(f, "-{body}")?,
                    c => write!(f, "{c}{body}")?,
                }
                first = false;
            } else if c < 0 {
                if c == -1 {
                    write!(f, " - {body}")?;
                } else {
                    write!(f, " - {}{body}", -c)?;
                }
            } else if c == 1 {
                write!(f, " + {body}")?;
            } else {
                write!(f, " + {c}{body}")?;
            }
        }
        Ok(())
    }
}

/// Flattens a term to a linear form over atoms, sorting the argument pairs
/// of every interpolation node so symmetric variants share an atom.
pub fn canon(t: &ITerm) -> LinForm {
    match t {
        ITerm::Zero => LinForm::default(),
        ITerm::Unit => LinForm::atom(Atom::Unit),
        ITerm::Gen(l) => LinForm::atom(Atom::Gen(l.clone())),
        ITerm::Sum(a, b) => canon(a).add(&canon(b)),
        ITerm::Diff(a, b) => canon(a).sub(&canon(b)),
        ITerm::Bowtie(c) => {
            let mut lower = [canon(&c[0]), canon(&c[1])];
            lower.sort();
            let mut upper = [canon(&c[2]), canon(&c[3])];
            upper.sort();
            let [l0, l1] = lower;
            let [u0, u1] = upper;
            LinForm::atom(Atom::Bow(Box::new([l0, l1, u0, u1])))
        }
    }
}

/// Inference rules of the derivation engine.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Rule {
    /// `0 >= 0`.
    Trivial,
    /// `e >= 0`.
    UnitPositive,
    /// `a_l >= 0`.
    GenLower(String),
    /// `e - a_l >= 0`.
    GenUpper(String),
    /// Sum of two known nonnegatives.
    Add,
    /// Divide by the content when >= 2.
    Unperforation,
    /// From `0 <= 3w <= e` conclude `-w >= 0`.
    IndexRule,
    /// Interpolation node above a lower argument (`bow - x_i >= 0`).
    InterpLower,
    /// Upper argument above the interpolation node (`y_j - bow >= 0`).
    InterpUpper,
}

/// One step of a derivation: a nonnegative form with its provenance.
#[derive(Debug, Clone)]
pub struct DerivationStep {
    pub rule: Rule,
    pub parents: Vec<usize>,
    pub form: LinForm,
}

/// A replayable proof that `s <= t`.
#[derive(Debug, Clone)]
pub struct Derivation {
    pub goal: LinForm,
    pub steps: Vec<DerivationStep>,
}

impl Derivation {
    /// Re-checks every step, returning false on any unsound inference.
    pub fn replay(&self) -> bool {
        for (i, step) in self.steps.iter().enumerate() {
            if step.parents.iter().any(|&p| p >= i) {
                return false;
            }
            let ok = match &step.rule {
                Rule::Trivial => step.form.is_zero(),
                Rule::UnitPositive => step.form == LinForm::atom(Atom::Unit),
                Rule::GenLower(l) => step.form == LinForm::atom(Atom::Gen(l.clone())),
                Rule::GenUpper(l) => {
                    step.form
                        == LinForm::atom(Atom::Unit).sub(&LinForm::atom(Atom::Gen(l.clone())))
                }
                Rule::Add => {
                    step.parents.len() == 2
                        && self.steps[step.parents[0]]
                            .form
                            .add(&self.steps[step.parents[1]].form)
                            == step.form
                }
                Rule::Unperforation => {
                    step.parents.len() == 1 && {
                        let parent = &self.steps[step.parents[0]].form;
                        let k = parent.content();
                        k >= 2 && step.form.scaled(k) == *parent
                    }
                }
                Rule::IndexRule => {
                    step.parents.len() == 2 && {
                        let three_w = &self.steps[step.parents[0]].form;
                        let upper = &self.steps[step.parents[1]].form;
                        step.form.scaled(-3) == *three_w
                            && LinForm::atom(Atom::Unit).sub(three_w) == *upper
                    }
                }
                Rule::InterpLower | Rule::InterpUpper => {
                    // form = bow - x_i (lower) or y_j - bow (upper); the
                    // parents certify the premise y_j - x_i >= 0.
                    let Some((bow_children, sign)) = extract_bow(&step.form) else {
                        return false;
                    };
                    let [x0, x1, y0, y1] = bow_children;
                    let premise_ok = [(&x0, &y0), (&x0, &y1), (&x1, &y0), (&x1, &y1)]
                        .iter()
                        .all(|(x, y)| {
                            let need = y.sub(x);
                            need.is_zero()
                                || step.parents.iter().any(|&p| self.steps[p].form == need)
                        });
                    let bow_atom = LinForm::atom(Atom::Bow(Box::new([
                        x0.clone(),
                        x1.clone(),
                        y0.clone(),
                        y1.clone(),
                    ])));
                    let side_ok = match step.rule {
                        Rule::InterpLower => {
                            let diff = bow_atom.sub(&step.form);
                            sign == 1 && (diff == x0 || diff == x1)
                        }
                        Rule::InterpUpper => {
                            let diff = step.form.add(&bow_atom);
                            sign == -1 && (diff == y0 || diff == y1)
                        }
                        _ => unreachable!(),
                    };
                    premise_ok && side_ok
                }
            };
            if !ok {
                return false;
            }
        }
        self.steps.last().map(|s| &s.form) == Some(&self.goal)
    }

    pub fn render(&self) -> Vec<String> {
        self.steps
            .iter()
            .enumerate()
            .map(|(i, s)| format!("{i}: {:?} {:?} |- {} >= 0", s.rule, s.parents, s.form))
            .collect()
    }
}

// Finds the unique bowtie atom with coefficient +-1 in a form.
fn extract_bow(form: &LinForm) -> Option<([LinForm; 4], i64)> {
    let mut found = None;
    for (a, &c) in &form.coeffs {
        if let Atom::Bow(children) = a {
            if found.is_some() || (c != 1 && c != -1) {
                return None;
            }
            found = Some(((**children).clone(), c));
        }
    }
    found
}

/// Outcome of the derivation search.
#[derive(Debug, Clone)]
pub enum DeriveOutcome {
    Proved(Derivation),
    Unknown,
}

impl DeriveOutcome {
    pub fn is_proved(&self) -> bool {
        matches!(self, DeriveOutcome::Proved(_))
    }
}

const COEFF_CAP: i64 = 24;
const ATOM_CAP: usize = 16;

/// Forward-chaining proof search for `s <= t`, running `depth` saturation
/// rounds within a work budget counting rule applications and pair visits.
///
/// Every derived form is nonnegative in every model of the axiom class, so
/// `Proved` inequalities can never be refuted by [`refute_leq`].
pub fn derive_leq(s: &ITerm, t: &ITerm, depth: u32, budget: u64) -> DeriveOutcome {
    let mut ops = 0u64;
    let goal = canon(t).sub(&canon(s));
    let mut facts: Vec<DerivationStep> = Vec::new();
    let mut index: HashMap<LinForm, usize> = HashMap::new();
    fn push(
        step: DerivationStep,
        facts: &mut Vec<DerivationStep>,
        index: &mut HashMap<LinForm, usize>,
    ) -> Option<usize> {
        if index.contains_key(&step.form) {
            return None;
        }
        if step.form.max_coeff() > COEFF_CAP || step.form.coeffs.len() > ATOM_CAP {
            return None;
        }
        index.insert(step.form.clone(), facts.len());
        facts.push(step);
        Some(facts.len() - 1)
    }
    // Seeds: the zero form, the unit, and the generator relations over
    // every label in sight.
    push(
        DerivationStep {
            rule: Rule::Trivial,
            parents: vec![],
            form: LinForm::default(),
        },
        &mut facts,
        &mut index,
    );
    push(
        DerivationStep {
            rule: Rule::UnitPositive,
            parents: vec![],
            form: LinForm::atom(Atom::Unit),
        },
        &mut facts,
        &mut index,
    );
    let mut labels = BTreeSet::new();
    let mut bows = BTreeSet::new();
    collect_atoms(&goal, &mut labels, &mut bows);
    for l in &labels {
        push(
            DerivationStep {
                rule: Rule::GenLower(l.clone()),
                parents: vec![],
                form: LinForm::atom(Atom::Gen(l.clone())),
            },
            &mut facts,
            &mut index,
        );
        push(
            DerivationStep {
                rule: Rule::GenUpper(l.clone()),
                parents: vec![],
                form: LinForm::atom(Atom::Unit).sub(&LinForm::atom(Atom::Gen(l.clone()))),
            },
            &mut facts,
            &mut index,
        );
    }
    let bows: Vec<[LinForm; 4]> = bows.into_iter().collect();
    let mut expanded: HashSet<usize> = HashSet::new();
    let mut frontier_start = 0usize;
    for _round in 0..depth {
        if let Some(&g) = index.get(&goal) {
            return DeriveOutcome::Proved(extract_derivation(&facts, g, &goal));
        }
        let round_start = facts.len();
        // Interpolation consequences for nodes whose premise is proven.
        for (bi, children) in bows.iter().enumerate() {
            if expanded.contains(&bi) {
                continue;
            }
            let [x0, x1, y0, y1] = children;
            let mut premise_ids = Vec::new();
            let mut all = true;
            for (x, y) in [(x0, y0), (x0, y1), (x1, y0), (x1, y1)] {
                let need = y.sub(x);
                if need.is_zero() {
                    premise_ids.push(0); // the zero fact
                } else if let Some(&i) = index.get(&need) {
                    premise_ids.push(i);
                } else {
                    all = false;
                    break;
                }
            }
            if !all {
                continue;
            }
            expanded.insert(bi);
            let bow = LinForm::atom(Atom::Bow(Box::new(children.clone())));
            for (form, rule) in [
                (bow.sub(x0), Rule::InterpLower),
                (bow.sub(x1), Rule::InterpLower),
                (y0.sub(&bow), Rule::InterpUpper),
                (y1.sub(&bow), Rule::InterpUpper),
            ] {
                push(
                    DerivationStep {
                        rule,
                        parents: premise_ids.clone(),
                        form,
                    },
                    &mut facts,
                    &mut index,
                );
            }
        }
        // Pairwise sums where at least one operand is new.
        let upto = facts.len();
        'add: for i in 0..upto {
            let j_start = i.max(frontier_start);
            for j in j_start..upto {
                ops += 1;
                if ops > budget {
                    break 'add;
                }
                let form = facts[i].form.add(&facts[j].form);
                push(
                    DerivationStep {
                        rule: Rule::Add,
                        parents: vec![i, j],
                        form,
                    },
                    &mut facts,
                    &mut index,
                );
            }
        }
        // Unperforation and the index rule on everything so far.
        let upto = facts.len();
        for i in 0..upto {
            ops += 1;
            if ops > budget {
                break;
            }
            let k = facts[i].form.content();
            if k >= 2 {
                let reduced = LinForm {
                    coeffs: facts[i]
                        .form
                        .coeffs
                        .iter()
                        .map(|(a, c)| (a.clone(), c / k))
                        .collect(),
                };
                push(
                    DerivationStep {
                        rule: Rule::Unperforation,
                        parents: vec![i],
                        form: reduced,
                    },
                    &mut facts,
                    &mut index,
                );
            }
            // f = 3w with e - f also known gives -w.
            let f = facts[i].form.clone();
            if !f.is_zero() && f.coeffs.values().all(|c| c % 3 == 0) {
                let upper = LinForm::atom(Atom::Unit).sub(&f);
                if let Some(&j) = index.get(&upper) {
                    let neg_w = LinForm {
                        coeffs: f.coeffs.iter().map(|(a, c)| (a.clone(), -c / 3)).collect(),
                    };
                    push(
                        DerivationStep {
                            rule: Rule::IndexRule,
                            parents: vec![i, j],
                            form: neg_w,
                        },
                        &mut facts,
                        &mut index,
                    );
                }
            }
        }
        frontier_start = round_start;
        if let Some(&g) = index.get(&goal) {
            return DeriveOutcome::Proved(extract_derivation(&facts, g, &goal));
        }
        if ops > budget {
            break;
        }
    }
    match index.get(&goal) {
        Some(&g) => DeriveOutcome::Proved(extract_derivation(&facts, g, &goal)),
        None => DeriveOutcome::Unknown,
    }
}

fn collect_atoms(form: &LinForm, labels: &mut BTreeSet<String>, bows: &mut BTreeSet<[LinForm; 4]>) {
    for atom in form.coeffs.keys() {
        match atom {
            Atom::Unit => {}
            Atom::Gen(l) => {
                labels.insert(l.clone());
            }
            Atom::Bow(children) => {
                if bows.insert((**children).clone()) {
                    for child in children.iter() {
                        collect_atoms(child, labels, bows);
                    }
                }
            }
        }
    }
}

// Prunes the fact list down to the ancestors of the goal, renumbered.
fn extract_derivation(facts: &[DerivationStep], goal_id: usize, goal: &LinForm) -> Derivation {
    let mut needed = BTreeSet::new();
    let mut stack = vec![goal_id];
    while let Some(i) = stack.pop() {
        if needed.insert(i) {
            stack.extend(&facts[i].parents);
        }
    }
    let order: Vec<usize> = needed.into_iter().collect();
    let renumber: HashMap<usize, usize> = order.iter().enumerate().map(|(n, &o)| (o, n)).collect();
    let steps = order
        .iter()
        .map(|&o| DerivationStep {
            rule: facts[o].rule.clone(),
            parents: facts[o].parents.iter().map(|p| renumber[p]).collect(),
            form: facts[o].form.clone(),
        })
        .collect();
    Derivation {
        goal: goal.clone(),
        steps,
    }
}

// ---------------------------------------------------------------------
// Finite-model refutation.
// ---------------------------------------------------------------------

/// A refutation witness: a model of the axiom class where the inequality
/// fails, with the interpolant choices that realize it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Witness {
    pub rank: usize,
    pub unit: Vector,
    pub assignment: BTreeMap<String, Vector>,
    pub choices: Vec<(Quad, Vector)>,
    pub lhs_value: Vector,
    pub rhs_value: Vector,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchStats {
    pub candidates: u64,
    pub nodes: u64,
    /// True when the entire candidate space was scanned within budget.
    pub complete: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum RefuteOutcome {
    Refuted(Witness),
    NoWitnessFound(SearchStats),
}

impl RefuteOutcome {
    pub fn is_refuted(&self) -> bool {
        matches!(self, RefuteOutcome::Refuted(_))
    }
}

#[derive(Debug, Clone)]
pub struct RefuteConfig {
    /// Search-node budget: every candidate model accounts at least one
    /// node, and every interpolant-choice extension one more.
    pub budget: u64,
    pub mode: ExecMode,
    /// Largest unit coordinate enumerated. The default 2 keeps every
    /// candidate inside the axiom class; raising it admits units that
    /// break the index rule, for informational searches only.
    pub max_unit: i64,
}

impl Default for RefuteConfig {
    fn default() -> Self {
        RefuteConfig {
            budget: 1_000_000,
            mode: ExecMode::default(),
            max_unit: 2,
        }
    }
}

// Evaluation against a partial choice table; reports the first quadruple
// that still needs an interpolant, in evaluation order.
enum ChoiceEval {
    Value(Vector),
    Need(Quad),
}

fn eval_choices(
    t: &ITerm,
    unit: &[i64],
    assignment: &BTreeMap<String, Vector>,
    choices: &HashMap<Quad, Vector>,
) -> ChoiceEval {
    match t {
        ITerm::Zero => ChoiceEval::Value(vec![0; unit.len()]),
        ITerm::Unit => ChoiceEval::Value(unit.to_vec()),
        ITerm::Gen(l) => ChoiceEval::Value(assignment[l].clone()),
        ITerm::Sum(a, b) | ITerm::Diff(a, b) => {
            let va = match eval_choices(a, unit, assignment, choices) {
                ChoiceEval::Value(v) => v,
                need => return need,
            };
            let vb = match eval_choices(b, unit, assignment, choices) {
                ChoiceEval::Value(v) => v,
                need => return need,
            };
            let sign = if matches!(t, ITerm::Sum(_, _)) { 1 } else { -1 };
            ChoiceEval::Value(va.iter().zip(&vb).map(|(x, y)| x + sign * y).collect())
        }
        ITerm::Bowtie(c) => {
            let mut vals = Vec::with_capacity(4);
            for child in c.iter() {
                match eval_choices(child, unit, assignment, choices) {
                    ChoiceEval::Value(v) => vals.push(v),
                    need => return need,
                }
            }
            let q = Quad::new(
                vals[0].clone(),
                vals[1].clone(),
                vals[2].clone(),
                vals[3].clone(),
            );
            if !q.premise_holds() {
                return ChoiceEval::Value(vec![0; unit.len()]);
            }
            let canon = q.canonical();
            match choices.get(&canon) {
                Some(v) => ChoiceEval::Value(v.clone()),
                None => ChoiceEval::Need(canon),
            }
        }
    }
}

// Backtracking over interpolant choices, lexicographic per quadruple, until
// some completion makes lhs <= rhs fail.
#[allow(clippy::too_many_arguments)]
fn search_choices(
    lhs: &ITerm,
    rhs: &ITerm,
    unit: &[i64],
    assignment: &BTreeMap<String, Vector>,
    choices: &mut HashMap<Quad, Vector>,
    order: &mut Vec<(Quad, Vector)>,
    nodes: &mut u64,
    node_cap: u64,
) -> Option<(Vec<(Quad, Vector)>, Vector, Vector)> {
    *nodes += 1;
    if *nodes > node_cap {
        return None;
    }
    let need = match eval_choices(lhs, unit, assignment, choices) {
        ChoiceEval::Value(lv) => match eval_choices(rhs, unit, assignment, choices) {
            ChoiceEval::Value(rv) => {
                if !crate::interp::vec_leq(&lv, &rv) {
                    return Some((order.clone(), lv, rv));
                }
                return None;
            }
            ChoiceEval::Need(q) => q,
        },
        ChoiceEval::Need(q) => q,
    };
    let (lo, hi) = need.bounds();
    for point in box_points(&lo, &hi) {
        choices.insert(need.clone(), point.clone());
        order.push((need.clone(), point));
        if let Some(hit) =
            search_choices(lhs, rhs, unit, assignment, choices, order, nodes, node_cap)
        {
            return Some(hit);
        }
        order.pop();
        choices.remove(&need);
    }
    None
}

/// Hunts for a model of the axiom class refuting `s <= t`.
///
/// The candidate space is fixed: ranks 1, 2, 4; units with coordinates in
/// `{0,1,2}`; generator assignments inside `[0, unit]`; interpolants
/// backtracked over all admissible box points, chosen consistently per
/// canonical quadruple. Enumeration order is canonical (rank, then unit,
/// then assignment, then choices, all lexicographic) and the first witness
/// in that order is returned regardless of the execution mode.
pub fn refute_leq(s: &ITerm, t: &ITerm, cfg: &RefuteConfig) -> RefuteOutcome {
    let mut labels: Vec<String> = s
        .syntactic_support()
        .union(&t.syntactic_support())
        .cloned()
        .collect();
    labels.sort();
    // Candidate blocks: one per (rank, unit), holding box^labels assignments.
    struct Block {
        unit: Vector,
        points: Vec<Vector>,
        offset: u64,
    }
    let mut blocks = Vec::new();
    let mut total = 0u64;
    for rank in [1usize, 2, 4] {
        for unit in box_points(&vec![0; rank], &vec![cfg.max_unit; rank]) {
            let points = box_points(&vec![0; rank], &unit);
            let count = (points.len() as u64)
                .checked_pow(labels.len() as u32)
                .unwrap_or(u64::MAX);
            blocks.push(Block {
                unit,
                points,
                offset: total,
            });
            total = total.saturating_add(count);
        }
    }
    let labels_ref = &labels;
    let blocks_ref = &blocks;
    let candidate = move |idx: u64, node_cap: u64| -> (Option<Witness>, u64) {
        let block = blocks_ref
            .iter()
            .rev()
            .find(|b| b.offset <= idx)
            .expect("index within blocks");
        let mut rem = idx - block.offset;
        let base = block.points.len() as u64;
        // Mixed-radix decode, first label most significant.
        let mut assignment = BTreeMap::new();
        for l in labels_ref.iter().rev() {
            let digit = (rem % base) as usize;
            rem /= base;
            assignment.insert(l.clone(), block.points[digit].clone());
        }
        let mut choices = HashMap::new();
        let mut order = Vec::new();
        let mut nodes = 0u64;
        let hit = search_choices(
            s,
            t,
            &block.unit,
            &assignment,
            &mut choices,
            &mut order,
            &mut nodes,
            node_cap,
        )
        .map(|(choices, lhs_value, rhs_value)| Witness {
            rank: block.unit.len(),
            unit: block.unit.clone(),
            assignment,
            choices,
            lhs_value,
            rhs_value,
        });
        (hit, nodes)
    };
    // Candidates run in outer chunks: within a chunk the scan may
    // parallelize, but node accounting and the returned witness follow the
    // canonical candidate order, so the outcome is mode-independent. The
    // per-candidate node cap is fixed at the start of each chunk for the
    // same reason.
    const CHUNK: u64 = 512;
    const CANDIDATE_CAP: u64 = 1 << 20;
    let mut used = 0u64;
    let mut examined = 0u64;
    let mut start = 0u64;
    let mut chunk_no = 0u32;
    while start < total && used < cfg.budget {
        // Chunks grow geometrically so early witnesses waste little
        // speculative work, while steady-state chunks stay large enough to
        // amortize dispatch.
        let this_chunk = (64u64 << chunk_no.min(3)).min(CHUNK);
        chunk_no += 1;
        let len = this_chunk.min(total - start) as usize;
        let cap = CANDIDATE_CAP.min(cfg.budget - used);
        enum ChunkOutcome {
            Witness(Witness),
            Exhausted,
            Done,
        }
        let outcome = match cfg.mode {
            ExecMode::Sequential => {
                // Short-circuits at the first hit; the accounting below is
                // the same order the parallel arm replays.
                let mut out = ChunkOutcome::Done;
                for i in 0..len {
                    if used >= cfg.budget {
                        out = ChunkOutcome::Exhausted;
                        break;
                    }
                    let (hit, nodes) = candidate(start + i as u64, cap);
                    used = used.saturating_add(nodes.max(1));
                    examined += 1;
                    if let Some(w) = hit {
                        out = ChunkOutcome::Witness(w);
                        break;
                    }
                }
                out
            }
            #[cfg(feature = "parallel")]
            ExecMode::Parallel => {
                let results = map_collect(len, cfg.mode, |i| candidate(start + i as u64, cap));
                let mut out = ChunkOutcome::Done;
                for (hit, nodes) in results {
                    if used >= cfg.budget {
                        out = ChunkOutcome::Exhausted;
                        break;
                    }
                    used = used.saturating_add(nodes.max(1));
                    examined += 1;
                    if let Some(w) = hit {
                        out = ChunkOutcome::Witness(w);
                        break;
                    }
                }
                out
            }
        };
        match outcome {
            ChunkOutcome::Witness(w) => return RefuteOutcome::Refuted(w),
            ChunkOutcome::Exhausted => {
                return RefuteOutcome::NoWitnessFound(SearchStats {
                    candidates: examined,
                    nodes: used,
                    complete: false,
                })
            }
            ChunkOutcome::Done => {}
        }
        start += len as u64;
    }
    RefuteOutcome::NoWitnessFound(SearchStats {
        candidates: examined,
        nodes: used,
        complete: start >= total,
    })
}

/// Renders a witness as a one-line model description.
pub fn render_witness(w: &Witness) -> String {
    let assigns: Vec<String> = w
        .assignment
        .iter()
        .map(|(l, v)| format!("a_{l}={}", fmt_vec(v)))
        .collect();
    let choices: Vec<String> = w
        .choices
        .iter()
        .map(|(q, v)| format!("{q}->{}", fmt_vec(v)))
        .collect();
    format!(
        "unit={} {} choices[{}] lhs={} rhs={}",
        fmt_vec(&w.unit),
        assigns.join(" "),
        choices.join(" "),
        fmt_vec(&w.lhs_value),
        fmt_vec(&w.rhs_value)
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interp::Interpolator;

    fn squeeze_term(label: &str) -> ITerm {
        // bowtie(0, 0, a, e - a): positive in some models, halved below e.
        ITerm::bowtie(
            ITerm::Zero,
            ITerm::Zero,
            ITerm::gen(label),
            ITerm::cogen(label),
        )
    }

    #[test]
    fn parse_print_roundtrip() {
        let text = "(bowtie 0 (sub (add (gen xi) (gen eta)) e) (gen xi) (gen eta))";
        let t = ITerm::parse(text).unwrap();
        // Same element up to the symmetry the canonical builder applies.
        assert_eq!(canon(&t), canon(&ITerm::c_pair("xi", "eta")));
        let printed = t.to_string();
        assert_eq!(ITerm::parse(&printed).unwrap(), t);
        assert!(ITerm::parse("(add 0").is_err());
        assert!(ITerm::parse("(mul 0 0)").is_err());
    }

    #[test]
    fn c_pair_builder_is_symmetric() {
        assert_eq!(ITerm::c_pair("xi", "eta"), ITerm::c_pair("eta", "xi"));
    }

    #[test]
    fn support_and_restrict() {
        let t = ITerm::c_pair("xi", "eta");
        let supp = t.syntactic_support();
        assert_eq!(
            supp.iter().cloned().collect::<Vec<_>>(),
            vec!["eta".to_string(), "xi".to_string()]
        );
        assert_eq!(ITerm::gen("xi").restrict(&BTreeSet::new()), ITerm::Zero);
        let keep: BTreeSet<String> = ["xi".to_string()].into();
        let r = t.restrict(&keep);
        // The eta leaf becomes zero, everything else is intact.
        assert_eq!(
            r,
            ITerm::bowtie(
                ITerm::Zero,
                ITerm::diff(ITerm::sum(ITerm::gen("eta"), ITerm::gen("xi")), ITerm::Unit),
                ITerm::gen("eta"),
                ITerm::gen("xi"),
            )
            .restrict(&keep)
        );
        assert_eq!(t.restrict(&t.syntactic_support()), t);
        // Support shrinks under restriction.
        assert!(r.syntactic_support().is_subset(&t.syntactic_support()));
    }

    #[test]
    fn evaluate_squeeze_under_reference_interpolator() {
        // Unit 2, assignment 1, override (0,0,1,1) -> 1.
        let interp = Interpolator::base(1)
            .with_override(Quad::new(vec![0], vec![0], vec![1], vec![1]), vec![1]);
        let model = Model::new(vec![2], interp).assign("xi", vec![1]);
        let x = squeeze_term("xi");
        assert_eq!(evaluate(&x, &model).unwrap(), vec![1]);
        // Base rule only: the value drops to zero.
        let base = Model::new(vec![2], Interpolator::base(1)).assign("xi", vec![1]);
        assert_eq!(evaluate(&x, &base).unwrap(), vec![0]);
        // Unit evaluates to the unit.
        assert_eq!(evaluate(&ITerm::Unit, &base).unwrap(), vec![2]);
        // Unbound generators are reported.
        assert!(matches!(
            evaluate(&ITerm::gen("nope"), &base),
            Err(TermError::UnboundGenerator(_))
        ));
    }

    #[test]
    fn term_bounds_examples() {
        let (lo, hi) = term_bounds(&ITerm::gen("xi"));
        assert_eq!(lo, EElement::zero());
        assert_eq!(hi, EElement::gen("xi"));
        let (lo, hi) = term_bounds(&squeeze_term("xi"));
        assert_eq!(lo, EElement::zero());
        assert_eq!(hi, EElement::cogen("xi"));
        let (lo, hi) = term_bounds(&ITerm::diff(ITerm::Unit, ITerm::Unit));
        assert_eq!(lo, EElement::zero());
        assert_eq!(hi, EElement::zero());
    }

    #[test]
    fn derive_generator_relation() {
        let out = derive_leq(&ITerm::Zero, &ITerm::gen("xi"), 1, 1000);
        match out {
            DeriveOutcome::Proved(d) => {
                assert!(d.replay());
                assert_eq!(d.steps.len(), 1);
            }
            DeriveOutcome::Unknown => panic!("expected proof"),
        }
    }

    #[test]
    fn derive_two_x_below_unit() {
        let x = squeeze_term("xi");
        let two_x = ITerm::sum(x.clone(), x.clone());
        let out = derive_leq(&two_x, &ITerm::Unit, 3, 50_000);
        match out {
            DeriveOutcome::Proved(d) => assert!(d.replay()),
            DeriveOutcome::Unknown => panic!("expected proof"),
        }
        // x <= 0 is not derivable (it is false in some models).
        assert!(!derive_leq(&x, &ITerm::Zero, 3, 50_000).is_proved());
    }

    #[test]
    fn refute_squeeze_positive() {
        let x = squeeze_term("xi");
        let out = refute_leq(&x, &ITerm::Zero, &RefuteConfig::default());
        match out {
            RefuteOutcome::Refuted(w) => {
                assert_eq!(w.unit, vec![2]);
                assert_eq!(w.assignment["xi"], vec![1]);
                assert_eq!(w.lhs_value, vec![1]);
                assert_eq!(w.rhs_value, vec![0]);
                assert_eq!(w.choices.len(), 1);
                assert_eq!(w.choices[0].1, vec![1]);
            }
            o => panic!("expected refutation, got {o:?}"),
        }
    }

    #[test]
    fn refute_zero_below_unit_fails_everywhere() {
        let out = refute_leq(&ITerm::Zero, &ITerm::Unit, &RefuteConfig::default());
        match out {
            RefuteOutcome::NoWitnessFound(stats) => {
                assert!(stats.complete);
                // Empty support: one candidate per unit.
                assert_eq!(stats.candidates, (3 + 9 + 81) as u64);
            }
            o => panic!("expected exhaustion, got {o:?}"),
        }
    }

    #[test]
    fn refute_final_inequality() {
        let lhs = ITerm::sum(
            ITerm::c_pair("alpha", "beta"),
            ITerm::c_pair("beta", "gamma"),
        );
        let rhs = ITerm::sum(ITerm::gen("beta"), ITerm::c_pair("alpha", "gamma"));
        let out = refute_leq(&lhs, &rhs, &RefuteConfig::default());
        match out {
            RefuteOutcome::Refuted(w) => {
                // Canonically first witness: rank 2, the coordinate-swapped
                // presentation of the index-two model.
                assert_eq!(w.rank, 2);
                let mut sorted_unit = w.unit.clone();
                sorted_unit.sort_unstable_by(|a, b| b.cmp(a));
                assert_eq!(sorted_unit, vec![2, 1]);
                let mut l = w.lhs_value.clone();
                let mut r = w.rhs_value.clone();
                l.sort_unstable_by(|a, b| b.cmp(a));
                r.sort_unstable_by(|a, b| b.cmp(a));
                assert_eq!(l, vec![2, 0]);
                assert_eq!(r, vec![1, 1]);
            }
            o => panic!("expected refutation, got {o:?}"),
        }
    }

    #[test]
    fn refuter_is_deterministic_across_modes() {
        let x = squeeze_term("xi");
        let seq = refute_leq(
            &x,
            &ITerm::Zero,
            &RefuteConfig {
                mode: ExecMode::Sequential,
                ..RefuteConfig::default()
            },
        );
        let def = refute_leq(&x, &ITerm::Zero, &RefuteConfig::default());
        assert_eq!(seq, def);
    }

    #[test]
    fn canon_merges_symmetric_bowties() {
        let a = ITerm::bowtie(ITerm::gen("p"), ITerm::Zero, ITerm::gen("q"), ITerm::Unit);
        let b = ITerm::bowtie(ITerm::Zero, ITerm::gen("p"), ITerm::Unit, ITerm::gen("q"));
        assert_eq!(canon(&a), canon(&b));
        assert!(canon(&ITerm::diff(a, b)).is_zero());
    }
}
