//! Finite free-set search: subsets avoiding the image of a point-to-set
//! mapping, and triples avoiding the image of a pair-to-set mapping.
//!
//! Exact subset search is a backtracking independent-set scan over the
//! symmetrized conflict graph; the greedy mode is sound (every answer is
//! re-checkable) but incomplete.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::exec::{find_first_map, ExecMode};

/// A mapping from points to finite subsets of the ground set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SetMapping {
    #[serde(rename = "X")]
    pub ground: Vec<String>,
    #[serde(rename = "Phi")]
    pub phi: BTreeMap<String, BTreeSet<String>>,
}

impl SetMapping {
    pub fn image(&self, x: &str) -> BTreeSet<String> {
        self.phi.get(x).cloned().unwrap_or_default()
    }

    /// Is `set` free: no member in the image of another member?
    pub fn is_free(&self, set: &[String]) -> bool {
        set.iter().all(|xi| {
            let img = self.image(xi);
            set.iter().all(|eta| eta == xi || !img.contains(eta))
        })
    }
}

/// A mapping from unordered pairs to finite subsets of the ground set.
/// Pair keys serialize as `"a,b"` with the two labels sorted.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PairMapping {
    #[serde(rename = "X")]
    pub ground: Vec<String>,
    #[serde(rename = "Psi")]
    pub psi: BTreeMap<String, BTreeSet<String>>,
}

impl PairMapping {
    pub fn pair_key(a: &str, b: &str) -> String {
        if a <= b {
            format!("{a},{b}")
        } else {
            format!("{b},{a}")
        }
    }

    pub fn image(&self, a: &str, b: &str) -> BTreeSet<String> {
        self.psi
            .get(&Self::pair_key(a, b))
            .cloned()
            .unwrap_or_default()
    }

    /// The three exclusions of a free triple.
    pub fn is_free_triple(&self, a: &str, b: &str, c: &str) -> bool {
        a != b
            && a != c
            && b != c
            && !self.image(b, c).contains(a)
            && !self.image(a, c).contains(b)
            && !self.image(a, b).contains(c)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum SubsetOutcome {
    Found(Vec<String>),
    NotFound,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SearchMode {
    Exact,
    Greedy,
}

/// Finds a subset of size `k` none of whose elements lies in the image of
/// another. Exact mode backtracks over the conflict graph and is complete;
/// greedy mode deletes maximum-degree vertices and may miss solutions.
pub fn find_free_subset(m: &SetMapping, k: usize, mode: SearchMode) -> SubsetOutcome {
    let n = m.ground.len();
    if k > n {
        return SubsetOutcome::NotFound;
    }
    // Symmetrized conflict graph.
    let index: BTreeMap<&str, usize> = m
        .ground
        .iter()
        .enumerate()
        .map(|(i, l)| (l.as_str(), i))
        .collect();
    let mut conflict = vec![vec![false; n]; n];
    for (i, xi) in m.ground.iter().enumerate() {
        for eta in m.image(xi) {
            if let Some(&j) = index.get(eta.as_str()) {
                if i != j {
                    conflict[i][j] = true;
                    conflict[j][i] = true;
                }
            }
        }
    }
    match mode {
        SearchMode::Exact => {
            let mut chosen = Vec::new();
            if backtrack(&conflict, n, k, 0, &mut chosen) {
                let set: Vec<String> = chosen.iter().map(|&i| m.ground[i].clone()).collect();
                debug_assert!(m.is_free(&set));
                SubsetOutcome::Found(set)
            } else {
                SubsetOutcome::NotFound
            }
        }
        SearchMode::Greedy => {
            let mut alive: BTreeSet<usize> = (0..n).collect();
            loop {
                let degree =
                    |i: usize, alive: &BTreeSet<usize>| alive.iter().filter(|&&j| conflict[i][j]).count();
                let worst = alive
                    .iter()
                    .copied()
                    .max_by_key(|&i| degree(i, &alive))
                    .filter(|&i| degree(i, &alive) > 0);
                match worst {
                    Some(i) => {
                        alive.remove(&i);
                    }
                    None => break,
                }
            }
            if alive.len() >= k {
                let set: Vec<String> =
                    alive.iter().take(k).map(|&i| m.ground[i].clone()).collect();
                debug_assert!(m.is_free(&set));
                SubsetOutcome::Found(set)
            } else {
                SubsetOutcome::NotFound
            }
        }
    }
}

// Lexicographically first independent set of size k, by backtracking.
fn backtrack(
    conflict: &[Vec<bool>],
    n: usize,
    k: usize,
    from: usize,
    chosen: &mut Vec<usize>,
) -> bool {
    if chosen.len() == k {
        return true;
    }
    if n - from < k - chosen.len() {
        return false;
    }
    for cand in from..n {
        if chosen.iter().any(|&c| conflict[c][cand]) {
            continue;
        }
        chosen.push(cand);
        if backtrack(conflict, n, k, cand + 1, chosen) {
            return true;
        }
        chosen.pop();
    }
    false
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum TripleOutcome {
    Found(String, String, String),
    NotFound,
}

/// Exhaustive scan for a free triple, in canonical index order. The scan
/// partitions across workers and still returns the first hit.
pub fn find_free_triple(p: &PairMapping, mode: ExecMode) -> TripleOutcome {
    let n = p.ground.len();
    if n < 3 {
        return TripleOutcome::NotFound;
    }
    let total = n * n * n;
    let hit = find_first_map(total, mode, |idx| {
        let a = idx / (n * n);
        let b = (idx / n) % n;
        let c = idx % n;
        if a < b && b < c {
            let (x, y, z) = (&p.ground[a], &p.ground[b], &p.ground[c]);
            if p.is_free_triple(x, y, z) {
                return Some((x.clone(), y.clone(), z.clone()));
            }
        }
        None
    });
    match hit {
        Some((a, b, c)) => TripleOutcome::Found(a, b, c),
        None => TripleOutcome::NotFound,
    }
}

/// Brute-force oracle: first free subset of size `k` over all subsets in
/// lexicographic order.
pub fn free_subset_bruteforce(m: &SetMapping, k: usize) -> SubsetOutcome {
    let n = m.ground.len();
    if k > n || n > 20 {
        return SubsetOutcome::NotFound;
    }
    if k == 0 {
        return SubsetOutcome::Found(Vec::new());
    }
    let mut chosen: Vec<usize> = (0..k).collect();
    loop {
        let set: Vec<String> = chosen.iter().map(|&i| m.ground[i].clone()).collect();
        if m.is_free(&set) {
            return SubsetOutcome::Found(set);
        }
        // Next combination.
        let mut i = k;
        loop {
            if i == 0 {
                return SubsetOutcome::NotFound;
            }
            i -= 1;
            if chosen[i] != i + n - k {
                chosen[i] += 1;
                for j in i + 1..k {
                    chosen[j] = chosen[j - 1] + 1;
                }
                break;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mapping(ground: &[&str], phi: &[(&str, &[&str])]) -> SetMapping {
        SetMapping {
            ground: ground.iter().map(|s| s.to_string()).collect(),
            phi: phi
                .iter()
                .map(|(k, v)| {
                    (
                        k.to_string(),
                        v.iter().map(|s| s.to_string()).collect::<BTreeSet<_>>(),
                    )
                })
                .collect(),
        }
    }

    #[test]
    fn unconstrained_mapping_returns_everything() {
        let m = mapping(&["a", "b", "c"], &[]);
        match find_free_subset(&m, 3, SearchMode::Exact) {
            SubsetOutcome::Found(s) => assert_eq!(s.len(), 3),
            o => panic!("{o:?}"),
        }
    }

    #[test]
    fn cycle_mapping_finds_opposite_pair() {
        let m = mapping(
            &["0", "1", "2", "3"],
            &[("0", &["1"]), ("1", &["2"]), ("2", &["3"]), ("3", &["0"])],
        );
        assert_eq!(
            find_free_subset(&m, 2, SearchMode::Exact),
            SubsetOutcome::Found(vec!["0".into(), "2".into()])
        );
        assert_eq!(
            free_subset_bruteforce(&m, 2),
            SubsetOutcome::Found(vec!["0".into(), "2".into()])
        );
    }

    #[test]
    fn mutual_conflict_has_no_pair() {
        let m = mapping(&["0", "1"], &[("0", &["1"]), ("1", &["0"])]);
        assert_eq!(
            find_free_subset(&m, 2, SearchMode::Exact),
            SubsetOutcome::NotFound
        );
        assert_eq!(free_subset_bruteforce(&m, 2), SubsetOutcome::NotFound);
    }

    #[test]
    fn greedy_is_sound() {
        let m = mapping(
            &["0", "1", "2", "3", "4"],
            &[("0", &["1", "2", "3"]), ("4", &["0"])],
        );
        if let SubsetOutcome::Found(s) = find_free_subset(&m, 3, SearchMode::Greedy) {
            assert!(m.is_free(&s));
        }
    }

    fn pair_mapping(ground: &[&str], psi: &[((&str, &str), &[&str])]) -> PairMapping {
        PairMapping {
            ground: ground.iter().map(|s| s.to_string()).collect(),
            psi: psi
                .iter()
                .map(|((a, b), v)| {
                    (
                        PairMapping::pair_key(a, b),
                        v.iter().map(|s| s.to_string()).collect::<BTreeSet<_>>(),
                    )
                })
                .collect(),
        }
    }

    #[test]
    fn empty_pair_mapping_finds_first_triple() {
        let p = pair_mapping(&["x", "y", "z", "w"], &[]);
        assert_eq!(
            find_free_triple(&p, ExecMode::Sequential),
            TripleOutcome::Found("x".into(), "y".into(), "z".into())
        );
    }

    #[test]
    fn complement_construction_blocks_all_triples() {
        // The image of each pair is everything else, so every triple
        // violates an exclusion.
        let p = pair_mapping(
            &["0", "1", "2"],
            &[
                (("0", "1"), &["2"][..]),
                (("0", "2"), &["1"][..]),
                (("1", "2"), &["0"][..]),
            ],
        );
        assert_eq!(
            find_free_triple(&p, ExecMode::default()),
            TripleOutcome::NotFound
        );
    }

    #[test]
    fn min_image_mapping_finds_triple() {
        // The image of {b,c} is {min(b,c)} on 0..5.
        let ground: Vec<String> = (0..6).map(|i| i.to_string()).collect();
        let mut psi = BTreeMap::new();
        for i in 0..6 {
            for j in i + 1..6 {
                let key = PairMapping::pair_key(&i.to_string(), &j.to_string());
                psi.insert(key, BTreeSet::from([i.to_string()]));
            }
        }
        let p = PairMapping { ground, psi };
        match find_free_triple(&p, ExecMode::default()) {
            TripleOutcome::Found(a, b, c) => {
                assert!(p.is_free_triple(&a, &b, &c));
            }
            o => panic!("{o:?}"),
        }
    }

    #[test]
    fn triple_scan_deterministic_across_modes() {
        let ground: Vec<String> = (0..7).map(|i| i.to_string()).collect();
        let mut psi = BTreeMap::new();
        for i in 0..7 {
            for j in i + 1..7 {
                let key = PairMapping::pair_key(&i.to_string(), &j.to_string());
                psi.insert(key, BTreeSet::from([((i + j) % 7).to_string()]));
            }
        }
        let p = PairMapping { ground, psi };
        let seq = find_free_triple(&p, ExecMode::Sequential);
        let def = find_free_triple(&p, ExecMode::default());
        assert_eq!(seq, def);
    }

    #[test]
    fn mapping_files_roundtrip() {
        let m = mapping(&["0", "1"], &[("0", &["1"])]);
        let json = serde_json::to_string(&m).unwrap();
        let back: SetMapping = serde_json::from_str(&json).unwrap();
        assert_eq!(back.ground, m.ground);
        assert_eq!(back.image("0"), m.image("0"));
    }
}
