//! Neyman–Pearson tests on finite probability spaces.
//!
//! Maximise `P(A)` subject to `Q(A) ≤ budget` over non-randomized sets `A`.
//! Up to [`EXHAUSTIVE_MAX_ATOMS`] atoms the exhaustive scan over all subsets
//! is authoritative. Larger spaces use a likelihood-ratio ordered
//! branch-and-bound, which is still exact but may fall back to plain greedy
//! inclusion when the node limit runs out.

use std::cmp::Ordering;
use std::collections::HashSet;
use std::io::Read;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_closed_unit, Error, Result};

/// Mass tolerance for feasibility and for the unit-sum check.
pub const MASS_TOL: f64 = 1e-12;
pub const EXHAUSTIVE_MAX_ATOMS: usize = 20;
const BRANCH_NODE_LIMIT: u64 = 50_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub label: String,
    pub p_mass: f64,
    pub q_mass: f64,
}

/// Two probability measures on the same finite set of labelled atoms.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiscreteMeasurePair {
    atoms: Vec<Atom>,
}

#[derive(Deserialize)]
struct AtomRecord {
    label: String,
    p: f64,
    q: f64,
}

impl DiscreteMeasurePair {
    pub fn new(atoms: Vec<Atom>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::InvalidMeasurePair("no atoms".into()));
        }
        let mut seen = HashSet::new();
        for a in &atoms {
            if !seen.insert(a.label.as_str()) {
                return Err(Error::InvalidMeasurePair(format!("duplicate label `{}`", a.label)));
            }
            for (side, m) in [("p", a.p_mass), ("q", a.q_mass)] {
                if !(m >= 0.0 && m.is_finite()) {
                    return Err(Error::InvalidMeasurePair(format!(
                        "atom `{}` has invalid {side} mass {m}",
                        a.label
                    )));
                }
            }
        }
        let p: f64 = atoms.iter().map(|a| a.p_mass).sum();
        let q: f64 = atoms.iter().map(|a| a.q_mass).sum();
        if (p - 1.0).abs() > MASS_TOL || (q - 1.0).abs() > MASS_TOL {
            return Err(Error::InvalidMeasurePair(format!(
                "masses must sum to 1 (p sums to {p}, q sums to {q})"
            )));
        }
        Ok(Self { atoms })
    }

    /// Atoms labelled `1..=k` from parallel mass vectors.
    pub fn from_masses(p: &[f64], q: &[f64]) -> Result<Self> {
        if p.len() != q.len() {
            return Err(Error::InvalidMeasurePair("p and q lengths differ".into()));
        }
        Self::new(
            p.iter()
                .zip(q)
                .enumerate()
                .map(|(i, (&p_mass, &q_mass))| Atom {
                    label: (i + 1).to_string(),
                    p_mass,
                    q_mass,
                })
                .collect(),
        )
    }

    /// Read `label,p,q` rows (with header).
    pub fn from_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_reader(reader);
        let atoms = rdr
            .deserialize::<AtomRecord>()
            .map(|r| {
                r.map(|r| Atom {
                    label: r.label,
                    p_mass: r.p,
                    q_mass: r.q,
                })
            })
            .collect::<std::result::Result<Vec<_>, _>>()?;
        Self::new(atoms)
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// The same atoms with the roles of P and Q exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            atoms: self
                .atoms
                .iter()
                .map(|a| Atom {
                    label: a.label.clone(),
                    p_mass: a.q_mass,
                    q_mass: a.p_mass,
                })
                .collect(),
        }
    }

    fn mass_of(&self, idx: &[usize]) -> (f64, f64) {
        idx.iter().fold((0.0, 0.0), |(p, q), &i| {
            (p + self.atoms[i].p_mass, q + self.atoms[i].q_mass)
        })
    }

    /// Atom indices by descending `p/q` (`q = 0, p > 0` first), ties by label.
    fn lr_order(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.atoms.len()).collect();
        idx.sort_by(|&i, &j| {
            let (a, b) = (&self.atoms[i], &self.atoms[j]);
            // p_a/q_a > p_b/q_b  ⟺  p_a q_b > p_b q_a  (masses are nonnegative)
            let lhs = a.p_mass * b.q_mass;
            let rhs = b.p_mass * a.q_mass;
            let null_a = a.p_mass == 0.0 && a.q_mass == 0.0;
            let null_b = b.p_mass == 0.0 && b.q_mass == 0.0;
            null_a
                .cmp(&null_b)
                .then(rhs.total_cmp(&lhs))
                .then_with(|| a.label.cmp(&b.label))
        });
        idx
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum NpMethod {
    /// Scan of all `2^k` subsets.
    Exhaustive,
    /// Likelihood-ratio ordered branch-and-bound, proven optimal.
    LikelihoodRatio,
    /// Greedy likelihood-ratio inclusion after the branch-and-bound node
    /// limit was hit; feasible but not certified optimal.
    GreedyFallback,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NPSolution {
    /// Labels of the chosen atoms, in the pair's atom order.
    pub chosen_atoms: Vec<String>,
    pub objective_mass: f64,
    pub constraint_mass: f64,
    /// Smallest likelihood ratio `p/q` inside the chosen set; `+∞` when the
    /// set is empty or only holds `q = 0` atoms.
    #[serde(serialize_with = "crate::serde_ext::extended_f64")]
    pub lr_threshold: f64,
    pub method: NpMethod,
}

/// Maximise `P(A)` subject to `Q(A) ≤ budget`.
pub fn solve_np(pair: &DiscreteMeasurePair, budget: f64) -> Result<NPSolution> {
    check_closed_unit("budget", budget)?;
    if pair.len() <= EXHAUSTIVE_MAX_ATOMS {
        solve_np_exhaustive(pair, budget)
    } else {
        solve_np_lr(pair, budget)
    }
}

/// Minimise `Q(A)` subject to `P(A) ≥ floor`, via the complement of the
/// maximal-`Q` set under `P(Aᶜ) ≤ 1 − floor`.
pub fn solve_np_min(pair: &DiscreteMeasurePair, floor: f64) -> Result<NPSolution> {
    check_closed_unit("floor", floor)?;
    let dual = solve_np(&pair.swapped(), 1.0 - floor)?;
    let excluded: HashSet<&str> = dual.chosen_atoms.iter().map(String::as_str).collect();
    let chosen: Vec<usize> = (0..pair.len())
        .filter(|&i| !excluded.contains(pair.atoms[i].label.as_str()))
        .collect();
    Ok(build_solution(pair, &chosen, |p, q| (q, p), dual.method))
}

/// Exhaustive scan; ties in `P(A)` go to the smaller `Q(A)`, then to the
/// set that is earliest in likelihood-ratio order.
pub fn solve_np_exhaustive(pair: &DiscreteMeasurePair, budget: f64) -> Result<NPSolution> {
    check_closed_unit("budget", budget)?;
    let k = pair.len();
    if k > EXHAUSTIVE_MAX_ATOMS {
        return Err(Error::InvalidMeasurePair(format!(
            "exhaustive scan limited to {EXHAUSTIVE_MAX_ATOMS} atoms, got {k}"
        )));
    }
    let order = pair.lr_order();
    let p: Vec<f64> = order.iter().map(|&i| pair.atoms[i].p_mass).collect();
    let q: Vec<f64> = order.iter().map(|&i| pair.atoms[i].q_mass).collect();
    let cap = budget + MASS_TOL;
    // Bit b of a mask selects the b-th atom in LR order. Reversing the bits
    // makes numerically smaller keys prefer higher-ratio atoms.
    let key = |mask: u32| mask.reverse_bits();
    let best = (0u32..(1u32 << k))
        .into_par_iter()
        .filter_map(|mask| {
            let (mut pm, mut qm) = (0.0, 0.0);
            for b in 0..k {
                if mask >> b & 1 == 1 {
                    pm += p[b];
                    qm += q[b];
                }
            }
            (qm <= cap).then_some((pm, qm, mask))
        })
        .reduce_with(|a, b| {
            let ord = a
                .0
                .total_cmp(&b.0)
                .then(b.1.total_cmp(&a.1))
                .then(key(b.2).cmp(&key(a.2)));
            if ord == Ordering::Less {
                b
            } else {
                a
            }
        })
        .expect("the empty set is always feasible");
    let chosen: Vec<usize> = (0..k).filter(|b| best.2 >> b & 1 == 1).map(|b| order[b]).collect();
    Ok(build_solution(pair, &chosen, |p, q| (p, q), NpMethod::Exhaustive))
}

/// Likelihood-ratio route: depth-first branch-and-bound in LR order with the
/// fractional (LP) relaxation as bound, seeded with greedy inclusion.
pub fn solve_np_lr(pair: &DiscreteMeasurePair, budget: f64) -> Result<NPSolution> {
    check_closed_unit("budget", budget)?;
    let cap = budget + MASS_TOL;
    let order: Vec<usize> = pair
        .lr_order()
        .into_iter()
        .filter(|&i| pair.atoms[i].p_mass > 0.0 && pair.atoms[i].q_mass <= cap)
        .collect();
    let p: Vec<f64> = order.iter().map(|&i| pair.atoms[i].p_mass).collect();
    let q: Vec<f64> = order.iter().map(|&i| pair.atoms[i].q_mass).collect();

    let mut greedy = vec![false; order.len()];
    let (mut gp, mut gq) = (0.0, 0.0);
    for j in 0..order.len() {
        if gq + q[j] <= cap {
            greedy[j] = true;
            gp += p[j];
            gq += q[j];
        }
    }

    let mut search = BranchAndBound {
        p: &p,
        q: &q,
        cap,
        best_p: gp,
        best_q: gq,
        best: greedy,
        current: vec![false; order.len()],
        nodes: 0,
    };
    let complete = search.run(0, 0.0, 0.0);
    let method = if complete {
        NpMethod::LikelihoodRatio
    } else {
        NpMethod::GreedyFallback
    };
    let chosen: Vec<usize> = (0..order.len()).filter(|&j| search.best[j]).map(|j| order[j]).collect();
    Ok(build_solution(pair, &chosen, |p, q| (p, q), method))
}

struct BranchAndBound<'a> {
    p: &'a [f64],
    q: &'a [f64],
    cap: f64,
    best_p: f64,
    best_q: f64,
    best: Vec<bool>,
    current: Vec<bool>,
    nodes: u64,
}

impl BranchAndBound<'_> {
    /// Fractional-knapsack bound on what items `j..` can still add.
    fn bound(&self, j: usize, room: f64) -> f64 {
        let mut room = room;
        let mut add = 0.0;
        for t in j..self.p.len() {
            if self.q[t] <= room {
                room -= self.q[t];
                add += self.p[t];
            } else {
                if self.q[t] > 0.0 {
                    add += self.p[t] * room / self.q[t];
                }
                break;
            }
        }
        add
    }

    /// Returns `false` if the node limit interrupted the search.
    fn run(&mut self, j: usize, pm: f64, qm: f64) -> bool {
        self.nodes += 1;
        if self.nodes > BRANCH_NODE_LIMIT {
            return false;
        }
        if pm > self.best_p || (pm == self.best_p && qm < self.best_q) {
            self.best_p = pm;
            self.best_q = qm;
            self.best.clone_from(&self.current);
        }
        if j == self.p.len() {
            return true;
        }
        // Keep ties alive so the smaller-constraint set can still win; the
        // slack covers rounding in the bound.
        if pm + self.bound(j, self.cap - qm) < self.best_p * (1.0 - 4.0 * f64::EPSILON) {
            return true;
        }
        if qm + self.q[j] <= self.cap {
            self.current[j] = true;
            let ok = self.run(j + 1, pm + self.p[j], qm + self.q[j]);
            self.current[j] = false;
            if !ok {
                return false;
            }
        }
        self.run(j + 1, pm, qm)
    }
}

/// Assemble a solution; `orient` maps `(p, q)` masses to
/// `(objective, constraint)`.
fn build_solution(
    pair: &DiscreteMeasurePair,
    chosen: &[usize],
    orient: impl Fn(f64, f64) -> (f64, f64),
    method: NpMethod,
) -> NPSolution {
    let mut chosen = chosen.to_vec();
    chosen.sort_unstable();
    let (pm, qm) = pair.mass_of(&chosen);
    let (objective_mass, constraint_mass) = orient(pm, qm);
    let lr_threshold = chosen
        .iter()
        .map(|&i| &pair.atoms[i])
        .filter(|a| a.p_mass > 0.0 || a.q_mass > 0.0)
        .map(|a| if a.q_mass == 0.0 { f64::INFINITY } else { a.p_mass / a.q_mass })
        .fold(f64::INFINITY, f64::min);
    NPSolution {
        chosen_atoms: chosen.iter().map(|&i| pair.atoms[i].label.clone()).collect(),
        objective_mass,
        constraint_mass,
        lr_threshold,
        method,
    }
}
