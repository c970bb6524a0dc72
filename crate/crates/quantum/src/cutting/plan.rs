//! Choosing which entangling gates to cut.

use crate::circuit::Circuit;
use crate::error::CutError;

/// A circuit together with the entangling gates to remove and the
/// resulting fragment partition.
#[derive(Debug, Clone, PartialEq)]
pub struct CutPlan {
    circuit: Circuit,
    cuts: Vec<usize>,
    fragments: Vec<Vec<usize>>,
    fragment_of: Vec<usize>,
}

impl CutPlan {
    /// Builds a plan from explicit cut positions (gate indices).
    pub fn new(circuit: Circuit, mut cuts: Vec<usize>) -> Result<Self, CutError> {
        cuts.sort_unstable();
        cuts.dedup();
        for &c in &cuts {
            match circuit.gates().get(c) {
                Some(g) if g.is_entangling() => {}
                _ => return Err(CutError::NotEntangling(c)),
            }
        }
        let fragments = components(&circuit, &cuts);
        let mut fragment_of = vec![0; circuit.num_qubits()];
        for (f, qubits) in fragments.iter().enumerate() {
            for &q in qubits {
                fragment_of[q] = f;
            }
        }
        Ok(Self {
            circuit,
            cuts,
            fragments,
            fragment_of,
        })
    }

    pub fn circuit(&self) -> &Circuit {
        &self.circuit
    }

    /// Cut gate indices, ascending.
    pub fn cuts(&self) -> &[usize] {
        &self.cuts
    }

    /// Qubit sets of each fragment, sorted; fragments ordered by lowest qubit.
    pub fn fragments(&self) -> &[Vec<usize>] {
        &self.fragments
    }

    pub fn fragment_of(&self, qubit: usize) -> usize {
        self.fragment_of[qubit]
    }

    pub fn fragment_sizes(&self) -> Vec<usize> {
        self.fragments.iter().map(Vec::len).collect()
    }

    /// True when cutting leaves the circuit in one piece.
    pub fn is_vacuous(&self) -> bool {
        self.fragments.len() < 2
    }

    /// Stable identifier derived from the circuit and the cut set.
    pub fn id(&self) -> String {
        let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
        let mut feed = |bytes: &[u8]| {
            for b in bytes {
                hash ^= u64::from(*b);
                hash = hash.wrapping_mul(0x0100_0000_01b3);
            }
        };
        feed(self.circuit.to_json().as_bytes());
        for c in &self.cuts {
            feed(&(*c as u64).to_le_bytes());
        }
        format!("plan-{hash:016x}")
    }
}

/// Limits for [`plan_cuts_with`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PlannerConfig {
    /// Plans needing more cuts than this are reported as infeasible.
    pub max_cuts: usize,
    /// Number of candidate cut sets the exhaustive search may evaluate
    /// before switching to the greedy planner.
    pub search_cap: u64,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            max_cuts: 8,
            search_cap: 1_000_000,
        }
    }
}

/// Fewest cuts such that every fragment has at most `max_fragment_qubits`
/// qubits; ties go to the lexicographically lowest gate indices.
pub fn plan_cuts(circuit: &Circuit, max_fragment_qubits: usize) -> Result<CutPlan, CutError> {
    plan_cuts_with(circuit, max_fragment_qubits, &PlannerConfig::default())
}

pub fn plan_cuts_with(
    circuit: &Circuit,
    max_fragment_qubits: usize,
    config: &PlannerConfig,
) -> Result<CutPlan, CutError> {
    if max_fragment_qubits == 0 {
        return Err(CutError::InvalidBound);
    }
    let candidates = circuit.entangling_indices();
    let fits = |cuts: &[usize]| components(circuit, cuts).iter().all(|f| f.len() <= max_fragment_qubits);
    let infeasible = CutError::Infeasible {
        max_fragment_qubits,
        max_cuts: config.max_cuts,
    };

    let mut evaluated = 0u64;
    let limit = config.max_cuts.min(candidates.len());
    'search: for k in 0..=limit {
        let mut picks: Vec<usize> = (0..k).collect();
        loop {
            if evaluated >= config.search_cap {
                break 'search;
            }
            evaluated += 1;
            let cuts: Vec<usize> = picks.iter().map(|&i| candidates[i]).collect();
            if fits(&cuts) {
                return CutPlan::new(circuit.clone(), cuts);
            }
            if !next_combination(&mut picks, candidates.len()) {
                break;
            }
        }
        if k == limit {
            return Err(infeasible);
        }
    }

    let cuts = greedy_cuts(circuit, &candidates, max_fragment_qubits);
    if cuts.len() > config.max_cuts {
        return Err(infeasible);
    }
    CutPlan::new(circuit.clone(), cuts)
}

/// Repeatedly cuts the gate whose removal most shrinks the largest fragment.
fn greedy_cuts(circuit: &Circuit, candidates: &[usize], bound: usize) -> Vec<usize> {
    let largest = |cuts: &[usize]| components(circuit, cuts).iter().map(Vec::len).max().unwrap_or(0);
    let mut cuts = Vec::new();
    while largest(&cuts) > bound {
        let best = candidates
            .iter()
            .filter(|c| !cuts.contains(*c))
            .map(|&c| {
                let mut trial = cuts.clone();
                trial.push(c);
                (largest(&trial), c)
            })
            .min();
        match best {
            Some((_, c)) => cuts.push(c),
            None => break,
        }
    }
    cuts.sort_unstable();
    cuts
}

/// Advances `picks` (strictly increasing indices below `n`) to the next
/// k-combination in lexicographic order.
fn next_combination(picks: &mut [usize], n: usize) -> bool {
    let k = picks.len();
    for i in (0..k).rev() {
        if picks[i] < n - k + i {
            picks[i] += 1;
            for j in i + 1..k {
                picks[j] = picks[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Connected components of the qubit interaction graph with `cuts` removed.
pub(crate) fn components(circuit: &Circuit, cuts: &[usize]) -> Vec<Vec<usize>> {
    let n = circuit.num_qubits();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for (i, gate) in circuit.gates().iter().enumerate() {
        if !gate.is_entangling() || cuts.contains(&i) {
            continue;
        }
        let q = gate.qubits();
        let (ra, rb) = (find(&mut parent, q[0]), find(&mut parent, q[1]));
        if ra != rb {
            parent[ra.max(rb)] = ra.min(rb);
        }
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut slot = vec![usize::MAX; n];
    for q in 0..n {
        let root = find(&mut parent, q);
        if slot[root] == usize::MAX {
            slot[root] = groups.len();
            groups.push(Vec::new());
        }
        groups[slot[root]].push(q);
    }
    groups
}
