//! Exact arithmetic and order decisions in the pointed ordered group
//! generated by elements `a_xi` with relations `0 <= a_xi <= e`.
//!
//! Elements are written `m*e + sum n_xi * a_xi`. An element is positive
//! exactly when `m + sum(n_xi | xi in Y) >= 0` for every subset `Y` of the
//! generator set; the minimum over subsets is attained at the set of
//! negative coefficients, which turns the exponential quantifier into one
//! pass over the support.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EGroupError {
    #[error("search budget exhausted after {0} nodes")]
    BudgetExhausted(u64),
}

/// `m*e + sum n_xi * a_xi` with finite support and no zero coefficients.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
pub struct EElement {
    pub m: i64,
    #[serde(default)]
    pub coeffs: BTreeMap<String, i64>,
}

impl EElement {
    pub fn zero() -> Self {
        EElement::default()
    }

    pub fn unit() -> Self {
        EElement {
            m: 1,
            coeffs: BTreeMap::new(),
        }
    }

    pub fn gen(label: &str) -> Self {
        let mut coeffs = BTreeMap::new();
        coeffs.insert(label.to_string(), 1);
        EElement { m: 0, coeffs }
    }

    /// `e - a_xi`.
    pub fn cogen(label: &str) -> Self {
        EElement::unit().sub(&EElement::gen(label))
    }

    pub fn scaled(&self, k: i64) -> Self {
        if k == 0 {
            return EElement::zero();
        }
        EElement {
            m: self.m * k,
            coeffs: self
                .coeffs
                .iter()
                .map(|(l, &v)| (l.clone(), v * k))
                .collect(),
        }
    }

    pub fn add(&self, other: &EElement) -> Self {
        let mut out = self.clone();
        out.m += other.m;
        for (l, &v) in &other.coeffs {
            let c = out.coeffs.entry(l.clone()).or_insert(0);
            *c += v;
            if *c == 0 {
                out.coeffs.remove(l);
            }
        }
        out
    }

    pub fn sub(&self, other: &EElement) -> Self {
        self.add(&other.scaled(-1))
    }

    pub fn is_zero(&self) -> bool {
        self.m == 0 && self.coeffs.is_empty()
    }

    pub fn support(&self) -> Vec<String> {
        self.coeffs.keys().cloned().collect()
    }

    pub fn coeff(&self, label: &str) -> i64 {
        self.coeffs.get(label).copied().unwrap_or(0)
    }

    /// Minimum of `m + sum(n_xi | xi in Y)` over all subsets `Y`, attained
    /// at the negative-coefficient subset.
    pub fn subset_min(&self) -> i64 {
        self.m + self.coeffs.values().filter(|&&v| v < 0).sum::<i64>()
    }

    /// Maximum of the same functional, attained at the positive subset.
    pub fn subset_max(&self) -> i64 {
        self.m + self.coeffs.values().filter(|&&v| v > 0).sum::<i64>()
    }

    /// The subset attaining [`EElement::subset_min`].
    pub fn min_subset(&self) -> Vec<String> {
        self.coeffs
            .iter()
            .filter(|(_, &v)| v < 0)
            .map(|(l, _)| l.clone())
            .collect()
    }

    pub fn is_positive(&self) -> bool {
        self.subset_min() >= 0
    }
}

impl fmt::Display for EElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts = Vec::new();
        if self.m != 0 {
            parts.push(match self.m {
                1 => "e".to_string(),
                -1 => "-e".to_string(),
                m => format!("{m}e"),
            });
        }
        for (l, &v) in &self.coeffs {
            parts.push(match v {
                1 => format!("a_{l}"),
                -1 => format!("-a_{l}"),
                v => format!("{v}a_{l}"),
            });
        }
        if parts.is_empty() {
            return write!(f, "0");
        }
        let mut out = String::new();
        for (i, p) in parts.iter().enumerate() {
            if i == 0 {
                out.push_str(p);
            } else if let Some(rest) = p.strip_prefix('-') {
                out.push_str(" - ");
                out.push_str(rest);
            } else {
                out.push_str(" + ");
                out.push_str(p);
            }
        }
        write!(f, "{out}")
    }
}

/// Decides `u <= v`.
pub fn e_leq(u: &EElement, v: &EElement) -> bool {
    v.sub(u).is_positive()
}

/// Zeroes every generator coefficient outside `keep`; the unit part is fixed.
pub fn restrict(u: &EElement, keep: &[String]) -> EElement {
    EElement {
        m: u.m,
        coeffs: u
            .coeffs
            .iter()
            .filter(|(l, _)| keep.contains(l))
            .map(|(l, &v)| (l.clone(), v))
            .collect(),
    }
}

/// Pushes coefficients forward along a relabeling, summing collisions.
pub fn map_gens<F>(u: &EElement, f: F) -> EElement
where
    F: Fn(&str) -> String,
{
    let mut out = EElement {
        m: u.m,
        coeffs: BTreeMap::new(),
    };
    for (l, &v) in &u.coeffs {
        let t = f(l);
        let c = out.coeffs.entry(t).or_insert(0);
        *c += v;
    }
    out.coeffs.retain(|_, v| *v != 0);
    out
}

/// Outcome of an index decision.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum IndexVerdict {
    True,
    CounterexampleFound(EElement),
}

/// Decides whether `u` has index at most `n`: `(n+1)x <= u` with `x >= 0`
/// forces `x = 0`.
///
/// For `u = e` the decision is exact: evaluating the order criterion at the
/// empty subset forces the unit part of `x` to zero and singletons force
/// every coefficient to zero, so the answer is `True` for every `n >= 1`.
/// For general `u` this is a bounded counterexample search over coefficient
/// boxes on the support of `u` plus one fresh generator; `True` then means
/// no counterexample exists within the box.
pub fn has_index_at_most(
    u: &EElement,
    n: u32,
    budget: u64,
) -> Result<IndexVerdict, EGroupError> {
    assert!(n >= 1, "index bound must be positive");
    assert!(u.is_positive(), "index is defined for positive elements");
    if *u == EElement::unit() {
        return Ok(IndexVerdict::True);
    }
    let labels = u.support();
    let bound = u
        .coeffs
        .values()
        .map(|v| v.abs())
        .chain([u.m.abs(), i64::from(n) + 1])
        .max()
        .unwrap_or(1);
    let mut nodes: u64 = 0;
    // Candidates over the support box first, enumerated by total magnitude
    // then lexicographically, so the first counterexample is canonical.
    for size in 1..=(bound as usize * (labels.len() + 1)) {
        let mut stack: Vec<(EElement, usize, i64)> = vec![(EElement::zero(), 0, size as i64)];
        while let Some((partial, pos, remaining)) = stack.pop() {
            nodes += 1;
            if nodes > budget {
                return Err(EGroupError::BudgetExhausted(nodes));
            }
            if pos == labels.len() + 1 {
                if remaining != 0 {
                    continue;
                }
                let x = partial;
                if !x.is_zero()
                    && x.is_positive()
                    && e_leq(&x.scaled(i64::from(n) + 1), u)
                {
                    return Ok(IndexVerdict::CounterexampleFound(x));
                }
                continue;
            }
            // Position 0 is the unit coefficient, the rest follow `labels`.
            // Push in reverse so the stack pops values in ascending order.
            let mut vals: Vec<i64> = (-remaining..=remaining).collect();
            vals.sort_by_key(|v| (v.abs(), *v));
            for &v in vals.iter().rev() {
                if v.abs() > bound {
                    continue;
                }
                let mut next = partial.clone();
                if pos == 0 {
                    next.m = v;
                } else if v != 0 {
                    next.coeffs.insert(labels[pos - 1].clone(), v);
                }
                stack.push((next, pos + 1, remaining - v.abs()));
            }
        }
    }
    // A counterexample supported entirely outside of `u` collapses, under a
    // relabeling fixing the support of `u`, to a positive multiple of a
    // single fresh generator; one fresh label therefore covers that case.
    let fresh = fresh_label(&labels);
    for k in 1..=bound {
        nodes += 1;
        if nodes > budget {
            return Err(EGroupError::BudgetExhausted(nodes));
        }
        let x = EElement::gen(&fresh).scaled(k);
        if e_leq(&x.scaled(i64::from(n) + 1), u) {
            return Ok(IndexVerdict::CounterexampleFound(x));
        }
    }
    Ok(IndexVerdict::True)
}

fn fresh_label(existing: &[String]) -> String {
    let mut k = 0;
    loop {
        let cand = format!("aux{k}");
        if !existing.contains(&cand) {
            return cand;
        }
        k += 1;
    }
}

/// Evaluates the order criterion the slow way, across every subset of the
/// combined support. Test oracle for [`e_leq`].
pub fn e_leq_bruteforce(u: &EElement, v: &EElement) -> bool {
    let d = v.sub(u);
    let labels = d.support();
    let n = labels.len();
    assert!(n <= 20, "brute-force oracle limited to small supports");
    for mask in 0u32..(1 << n) {
        let mut s = d.m;
        for (i, l) in labels.iter().enumerate() {
            if mask & (1 << i) != 0 {
                s += d.coeff(l);
            }
        }
        if s < 0 {
            return false;
        }
    }
    true
}
