//! Ising problems, energy evaluation and an exhaustive ground-state oracle.
//!
//! Energies follow `E(σ) = -Σ_{(i,j)} J_ij σ_i σ_j`, so an antiferromagnetic
//! bond (`J = -1`) is satisfied by opposite spins. This is the convention under
//! which the measurement-feedback rule `ε_i = ζ Σ_j J_ij X_j` drives the machine
//! toward low-energy configurations.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{CimError, Result};

/// Largest spin count accepted by [`ground_states_bruteforce`].
pub const MAX_BRUTEFORCE_SPINS: usize = 24;

/// A weighted coupling between spins `i < j`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub i: usize,
    pub j: usize,
    pub weight: f64,
}

/// An Ising instance: `n` spins and a weighted edge list.
///
/// Construction validates the edge list; afterwards the problem is immutable
/// and can be shared freely between trial workers.
#[derive(Debug, Clone, PartialEq)]
pub struct IsingProblem {
    n: usize,
    edges: Vec<Edge>,
    neighbors: Vec<Vec<(usize, f64)>>,
}

impl IsingProblem {
    /// Builds a problem from `(i, j, J_ij)` triples. Pairs may be given in either
    /// order; they are stored with `i < j`.
    pub fn new(n: usize, edges: impl IntoIterator<Item = (usize, usize, f64)>) -> Result<Self> {
        if n == 0 {
            return Err(CimError::input("spin count must be at least 1"));
        }
        let mut seen = HashSet::new();
        let mut stored = Vec::new();
        let mut neighbors = vec![Vec::new(); n];
        for (a, b, weight) in edges {
            if a >= n || b >= n {
                return Err(CimError::input(format!(
                    "edge ({a}, {b}) out of range for {n} spins"
                )));
            }
            if a == b {
                return Err(CimError::input(format!("self-loop on spin {a}")));
            }
            if !weight.is_finite() {
                return Err(CimError::input(format!("non-finite weight on ({a}, {b})")));
            }
            let (i, j) = if a < b { (a, b) } else { (b, a) };
            if !seen.insert((i, j)) {
                return Err(CimError::input(format!("duplicate edge ({i}, {j})")));
            }
            stored.push(Edge { i, j, weight });
            neighbors[i].push((j, weight));
            neighbors[j].push((i, weight));
        }
        Ok(IsingProblem {
            n,
            edges: stored,
            neighbors,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// Couplings `(j, J_ij)` incident on spin `i`.
    pub fn neighbors(&self, i: usize) -> &[(usize, f64)] {
        &self.neighbors[i]
    }

    /// `Σ_j J_ij v_j` for every `i`.
    pub fn local_fields(&self, v: &[f64]) -> Vec<f64> {
        self.neighbors
            .iter()
            .map(|row| row.iter().map(|&(j, w)| w * v[j]).sum())
            .collect()
    }

    /// Parses the plain-text format: first line `n`, then one `i j J_ij` per line.
    /// Blank lines and `#` comments are ignored.
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(no, l)| (no + 1, l.split('#').next().unwrap_or("").trim()))
            .filter(|(_, l)| !l.is_empty());
        let (_, header) = lines
            .next()
            .ok_or_else(|| CimError::input("empty problem file"))?;
        let n: usize = header
            .parse()
            .map_err(|_| CimError::input(format!("bad spin count `{header}`")))?;
        let mut edges = Vec::new();
        for (no, line) in lines {
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 3 {
                return Err(CimError::input(format!(
                    "line {no}: expected `i j J_ij`, got `{line}`"
                )));
            }
            let bad = |what: &str| CimError::input(format!("line {no}: bad {what}"));
            let i: usize = fields[0].parse().map_err(|_| bad("index i"))?;
            let j: usize = fields[1].parse().map_err(|_| bad("index j"))?;
            let w: f64 = fields[2].parse().map_err(|_| bad("weight"))?;
            edges.push((i, j, w));
        }
        IsingProblem::new(n, edges)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        IsingProblem::parse(&text)
    }

    /// Serializes to the same plain-text format accepted by [`IsingProblem::parse`].
    pub fn to_text(&self) -> String {
        let mut out = format!("{}\n", self.n);
        for e in &self.edges {
            out.push_str(&format!("{} {} {}\n", e.i, e.j, e.weight));
        }
        out
    }
}

/// Nearest-neighbour antiferromagnetic ring, `J = -1` on `(i, i+1 mod n)`.
///
/// For `n = 2` the wrap-around bond coincides with `(0, 1)` and is kept once.
pub fn ring_antiferromagnet(n: usize) -> Result<IsingProblem> {
    if n < 2 {
        return Err(CimError::input(format!("ring needs at least 2 spins, got {n}")));
    }
    let mut pairs: Vec<(usize, usize)> = (0..n)
        .map(|i| {
            let j = (i + 1) % n;
            (i.min(j), i.max(j))
        })
        .collect();
    pairs.sort_unstable();
    pairs.dedup();
    IsingProblem::new(n, pairs.into_iter().map(|(i, j)| (i, j, -1.0)))
}

/// A configuration of `±1` spins.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SpinConfig(Vec<i8>);

impl SpinConfig {
    pub fn new(spins: Vec<i8>) -> Result<Self> {
        if let Some(bad) = spins.iter().find(|&&s| s != 1 && s != -1) {
            return Err(CimError::input(format!("spin value {bad} is not ±1")));
        }
        Ok(SpinConfig(spins))
    }

    /// Bit `k` of `bits` set means spin `k` is `+1`.
    pub fn from_bits(bits: u64, n: usize) -> Self {
        SpinConfig((0..n).map(|k| if bits >> k & 1 == 1 { 1 } else { -1 }).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn spins(&self) -> &[i8] {
        &self.0
    }

    pub fn flipped(&self) -> Self {
        SpinConfig(self.0.iter().map(|s| -s).collect())
    }
}

impl fmt::Display for SpinConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for s in &self.0 {
            f.write_str(if *s > 0 { "+" } else { "-" })?;
        }
        Ok(())
    }
}

/// `E(σ) = -Σ J_ij σ_i σ_j`.
pub fn energy(problem: &IsingProblem, s: &SpinConfig) -> Result<f64> {
    if s.len() != problem.n() {
        return Err(CimError::input(format!(
            "configuration has {} spins, problem has {}",
            s.len(),
            problem.n()
        )));
    }
    let sp = s.spins();
    Ok(-problem
        .edges()
        .iter()
        .map(|e| e.weight * f64::from(sp[e.i]) * f64::from(sp[e.j]))
        .sum::<f64>())
}

/// Exact minimum energy and every configuration attaining it.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub e_min: f64,
    pub configs: Vec<SpinConfig>,
}

impl GroundTruth {
    /// True iff `s` attains the minimum energy.
    pub fn is_success(&self, problem: &IsingProblem, s: &SpinConfig) -> Result<bool> {
        let e = energy(problem, s)?;
        Ok(e <= self.e_min + energy_tolerance(problem))
    }
}

fn energy_tolerance(problem: &IsingProblem) -> f64 {
    let scale: f64 = problem.edges().iter().map(|e| e.weight.abs()).sum();
    1e-9 * scale.max(1.0)
}

/// Enumerates all `2^n` configurations in Gray-code order.
pub fn ground_states_bruteforce(problem: &IsingProblem) -> Result<GroundTruth> {
    let n = problem.n();
    if n > MAX_BRUTEFORCE_SPINS {
        return Err(CimError::Capability(format!(
            "exhaustive enumeration limited to {MAX_BRUTEFORCE_SPINS} spins, got {n}"
        )));
    }
    let tol = energy_tolerance(problem);
    let mut spins = vec![-1i8; n];
    let mut e = energy(problem, &SpinConfig(spins.clone()))?;
    let mut bits: u64 = 0;
    let mut e_min = e;
    let mut best = vec![bits];
    for step in 1u64..(1u64 << n) {
        let k = step.trailing_zeros() as usize;
        // Flipping spin k changes E by 2 σ_k Σ_j J_kj σ_j.
        let field: f64 = problem
            .neighbors(k)
            .iter()
            .map(|&(j, w)| w * f64::from(spins[j]))
            .sum();
        e += 2.0 * f64::from(spins[k]) * field;
        spins[k] = -spins[k];
        bits ^= 1 << k;
        if e < e_min - tol {
            e_min = e;
            best.clear();
            best.push(bits);
        } else if e <= e_min + tol {
            best.push(bits);
        }
    }
    // Recompute exactly to shed accumulated rounding from the incremental updates.
    let mut configs: Vec<SpinConfig> = best.iter().map(|&b| SpinConfig::from_bits(b, n)).collect();
    configs.sort();
    let e_min = configs
        .iter()
        .map(|c| energy(problem, c))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .fold(f64::INFINITY, f64::min);
    Ok(GroundTruth { e_min, configs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn alternating(n: usize, first: i8) -> SpinConfig {
        SpinConfig::new((0..n).map(|k| if k % 2 == 0 { first } else { -first }).collect()).unwrap()
    }

    #[test]
    fn ring16_alternating_energy() {
        let p = ring_antiferromagnet(16).unwrap();
        assert_eq!(energy(&p, &alternating(16, 1)).unwrap(), -16.0);
    }

    #[test]
    fn single_edge_energy() {
        let p = IsingProblem::new(2, [(0, 1, -1.0)]).unwrap();
        let s = SpinConfig::new(vec![1, -1]).unwrap();
        assert_eq!(energy(&p, &s).unwrap(), -1.0);
    }

    #[test]
    fn zero_couplings_zero_energy() {
        let p = IsingProblem::new(3, [(0, 1, 0.0), (1, 2, 0.0)]).unwrap();
        for b in 0..8 {
            assert_eq!(energy(&p, &SpinConfig::from_bits(b, 3)).unwrap(), 0.0);
        }
    }

    #[test]
    fn energy_dimension_mismatch() {
        let p = ring_antiferromagnet(4).unwrap();
        let s = SpinConfig::new(vec![1, -1]).unwrap();
        assert!(matches!(energy(&p, &s), Err(CimError::Input(_))));
    }

    #[test]
    fn ring_edge_counts() {
        let r16 = ring_antiferromagnet(16).unwrap();
        assert_eq!(r16.edges().len(), 16);
        assert!(r16.edges().iter().all(|e| e.weight == -1.0));
        let r2 = ring_antiferromagnet(2).unwrap();
        assert_eq!(r2.edges(), &[Edge { i: 0, j: 1, weight: -1.0 }]);
        assert_eq!(ring_antiferromagnet(3).unwrap().edges().len(), 3);
        assert!(ring_antiferromagnet(1).is_err());
    }

    #[test]
    fn invalid_problems_rejected() {
        assert!(IsingProblem::new(0, []).is_err());
        assert!(IsingProblem::new(2, [(0, 2, 1.0)]).is_err());
        assert!(IsingProblem::new(2, [(1, 1, 1.0)]).is_err());
        assert!(IsingProblem::new(2, [(0, 1, 1.0), (1, 0, 2.0)]).is_err());
        assert!(IsingProblem::new(2, [(0, 1, f64::NAN)]).is_err());
        assert!(SpinConfig::new(vec![1, 0]).is_err());
    }

    #[test]
    fn ring16_ground_states() {
        let p = ring_antiferromagnet(16).unwrap();
        let gt = ground_states_bruteforce(&p).unwrap();
        assert_eq!(gt.e_min, -16.0);
        let mut expected = vec![alternating(16, -1), alternating(16, 1)];
        expected.sort();
        assert_eq!(gt.configs, expected);
    }

    #[test]
    fn two_spin_ground_states() {
        let p = ring_antiferromagnet(2).unwrap();
        let gt = ground_states_bruteforce(&p).unwrap();
        assert_eq!(gt.e_min, -1.0);
        assert_eq!(
            gt.configs,
            vec![
                SpinConfig::new(vec![-1, 1]).unwrap(),
                SpinConfig::new(vec![1, -1]).unwrap()
            ]
        );
    }

    #[test]
    fn frustrated_triangle() {
        let p = ring_antiferromagnet(3).unwrap();
        let gt = ground_states_bruteforce(&p).unwrap();
        assert_eq!(gt.configs.len(), 6);
        assert_eq!(gt.e_min, -1.0);
    }

    #[test]
    fn success_examples() {
        let p = ring_antiferromagnet(16).unwrap();
        let gt = ground_states_bruteforce(&p).unwrap();
        assert!(gt.is_success(&p, &alternating(16, 1)).unwrap());
        let up = SpinConfig::new(vec![1; 16]).unwrap();
        assert_eq!(energy(&p, &up).unwrap(), 16.0);
        assert!(!gt.is_success(&p, &up).unwrap());

        let lone = IsingProblem::new(1, []).unwrap();
        let gt1 = ground_states_bruteforce(&lone).unwrap();
        assert!(gt1.is_success(&lone, &SpinConfig::new(vec![1]).unwrap()).unwrap());
        assert!(gt1.is_success(&lone, &SpinConfig::new(vec![-1]).unwrap()).unwrap());
    }

    #[test]
    fn bruteforce_capability_limit() {
        let p = ring_antiferromagnet(MAX_BRUTEFORCE_SPINS + 1).unwrap();
        assert!(matches!(
            ground_states_bruteforce(&p),
            Err(CimError::Capability(_))
        ));
    }

    #[test]
    fn ring_ground_state_degeneracy() {
        for n in 2..=12 {
            let gt = ground_states_bruteforce(&ring_antiferromagnet(n).unwrap()).unwrap();
            let expected = if n % 2 == 0 { 2 } else { 2 * n };
            assert_eq!(gt.configs.len(), expected, "n = {n}");
        }
    }

    #[test]
    fn text_format_roundtrip_and_errors() {
        let p = IsingProblem::parse("# ring\n3\n0 1 -1\n1 2 0.5\n\n0 2 -1 # wrap\n").unwrap();
        assert_eq!(p.n(), 3);
        assert_eq!(p.edges().len(), 3);
        assert_eq!(IsingProblem::parse(&p.to_text()).unwrap(), p);
        assert!(IsingProblem::parse("").is_err());
        assert!(IsingProblem::parse("2\n0 1\n").is_err());
        assert!(IsingProblem::parse("2\n0 5 1\n").is_err());
    }

    fn arb_problem() -> impl Strategy<Value = IsingProblem> {
        (2usize..=8).prop_flat_map(|n| {
            let pairs: Vec<(usize, usize)> =
                (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
            let k = pairs.len();
            (Just(n), Just(pairs), prop::collection::vec(prop::option::of(-2.0f64..2.0), k))
        })
        .prop_map(|(n, pairs, ws)| {
            IsingProblem::new(
                n,
                pairs
                    .into_iter()
                    .zip(ws)
                    .filter_map(|((i, j), w)| w.map(|w| (i, j, w))),
            )
            .unwrap()
        })
    }

    proptest! {
        #[test]
        fn energy_flip_invariant(p in arb_problem(), bits in any::<u64>()) {
            let s = SpinConfig::from_bits(bits, p.n());
            prop_assert_eq!(energy(&p, &s).unwrap(), energy(&p, &s.flipped()).unwrap());
        }

        #[test]
        fn success_matches_enumeration(p in arb_problem()) {
            let gt = ground_states_bruteforce(&p).unwrap();
            let all: Vec<f64> = (0..1u64 << p.n())
                .map(|b| energy(&p, &SpinConfig::from_bits(b, p.n())).unwrap())
                .collect();
            let min = all.iter().cloned().fold(f64::INFINITY, f64::min);
            prop_assert!((gt.e_min - min).abs() < 1e-9);
            for (b, e) in all.iter().enumerate() {
                let s = SpinConfig::from_bits(b as u64, p.n());
                let listed = gt.configs.contains(&s);
                prop_assert_eq!(gt.is_success(&p, &s).unwrap(), (e - min).abs() < 1e-9);
                prop_assert_eq!(listed, (e - min).abs() < 1e-9);
            }
        }
    }
}
