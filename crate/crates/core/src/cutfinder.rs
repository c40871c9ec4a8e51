//! Combinatorial normaliser computation: fibres, co-reachability sets with
//! witness words, and the cut construction.

use std::collections::BTreeMap;

use nalgebra::DVector;

use crate::product::ProductSystem;
use crate::Error;

/// A fibre over a chain state: a subset `α × {s}` of a recurrent SCC `D`.
/// Members are global product indices, ascending.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Fibre {
    pub chain_state: usize,
    pub members: Vec<usize>,
}

impl Fibre {
    /// The fibre `{⟨q,s⟩}` for a single product state.
    pub fn singleton(p: &ProductSystem, d: usize) -> Fibre {
        Fibre {
            chain_state: p.split(d).1,
            members: vec![d],
        }
    }

    pub fn from_members(p: &ProductSystem, members: Vec<usize>) -> Fibre {
        let s = p.split(members[0]).1;
        debug_assert!(members.iter().all(|&g| p.split(g).1 == s));
        let mut members = members;
        members.sort_unstable();
        members.dedup();
        Fibre {
            chain_state: s,
            members,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }
}

/// `f ⟹ s′`: step a fibre along a chain edge. `None` when `M_{s,s′} = 0`.
pub fn fibre_step(
    p: &ProductSystem,
    in_d: &[bool],
    f: &Fibre,
    s2: usize,
) -> Result<Option<Fibre>, Error> {
    if s2 >= p.chain().n_states() {
        return Err(Error::Invalid(format!("unknown chain state index {s2}")));
    }
    if p.chain().prob(f.chain_state, s2) == 0.0 {
        return Ok(None);
    }
    let mut members = Vec::new();
    for &g in &f.members {
        let (q, s) = p.split(g);
        for &q2 in p.automaton().targets(q, s) {
            let g2 = p.index(q2, s2);
            if in_d[g2] {
                members.push(g2);
            }
        }
    }
    members.sort_unstable();
    members.dedup();
    Ok(Some(Fibre {
        chain_state: s2,
        members,
    }))
}

/// Steps a fibre through a whole chain-state word.
pub fn fibre_step_word(
    p: &ProductSystem,
    in_d: &[bool],
    f: &Fibre,
    word: &[usize],
) -> Result<Option<Fibre>, Error> {
    let mut cur = f.clone();
    for &s2 in word {
        match fibre_step(p, in_d, &cur, s2)? {
            Some(next) => cur = next,
            None => return Ok(None),
        }
    }
    Ok(Some(cur))
}

/// Co-reachability of a base state `d`: every `e` such that some fibre-path
/// from `{d}` contains both `d` and `e`, with witness words.
#[derive(Clone, Debug)]
pub struct CoReach {
    pub base: usize,
    /// Members of `Co(d)` (global indices, ascending). Always contains `d`.
    pub members: Vec<usize>,
    /// `e → CoPath(d)(e)` as a chain-state word; empty for `d` itself.
    pub witnesses: BTreeMap<usize, Vec<usize>>,
}

/// BFS over the pair graph with vertices `(p, p′, s)` (both `⟨p,s⟩` and
/// `⟨p′,s⟩` in `D`), started from `(q, q, s)` for `d = ⟨q,s⟩`. The graph is
/// materialised up front — quadratic in the transitions — and shortest
/// paths bound every witness by `|Q|·|D|`.
pub fn co_reachability(p: &ProductSystem, in_d: &[bool], d: usize) -> CoReach {
    let nq = p.automaton().n_states();
    let ns = p.chain().n_states();
    let (q0, s0) = p.split(d);
    let vid = |a: usize, b: usize, s: usize| (a * nq + b) * ns + s;
    let mut adj: Vec<Vec<u32>> = vec![Vec::new(); nq * nq * ns];
    for a in 0..nq {
        for b in 0..nq {
            for s in 0..ns {
                if !in_d[p.index(a, s)] || !in_d[p.index(b, s)] {
                    continue;
                }
                let v = vid(a, b, s);
                for &s2 in p.chain().successors(s) {
                    for &a2 in p.automaton().targets(a, s) {
                        if !in_d[p.index(a2, s2)] {
                            continue;
                        }
                        for &b2 in p.automaton().targets(b, s) {
                            if in_d[p.index(b2, s2)] {
                                adj[v].push(vid(a2, b2, s2) as u32);
                            }
                        }
                    }
                }
            }
        }
    }
    let mut parent: Vec<u32> = vec![u32::MAX; nq * nq * ns];
    let start = vid(q0, q0, s0);
    parent[start] = start as u32;
    let mut queue = std::collections::VecDeque::from([start]);
    while let Some(v) = queue.pop_front() {
        for &v2 in &adj[v] {
            if parent[v2 as usize] == u32::MAX {
                parent[v2 as usize] = v as u32;
                queue.push_back(v2 as usize);
            }
        }
    }
    let mut members = Vec::new();
    let mut witnesses = BTreeMap::new();
    for q2 in 0..nq {
        let v = vid(q0, q2, s0);
        if parent[v] == u32::MAX {
            continue;
        }
        let e = p.index(q2, s0);
        members.push(e);
        // Witness = chain-state projection of the BFS path, start excluded.
        let mut word = Vec::new();
        let mut cur = v;
        while cur != start {
            word.push(cur % ns);
            cur = parent[cur] as usize;
        }
        word.reverse();
        witnesses.insert(e, word);
    }
    members.sort_unstable();
    CoReach {
        base: d,
        members,
        witnesses,
    }
}

/// A computed cut `d ⟹ w` together with the word that produced it and the
/// Survives trace (one entry per backward step, plus the initial set).
#[derive(Clone, Debug)]
pub struct Cut {
    pub base: usize,
    pub fibre: Fibre,
    pub word: Vec<usize>,
    pub survives_trace: Vec<Vec<usize>>,
}

/// Runs the cut algorithm on an accepting recurrent SCC `D` with base
/// `d = min D`. Grows `w` by prepending co-reachability witnesses while some
/// surviving `e ≠ d` remains in `Co(d)`.
pub fn compute_cut(p: &ProductSystem, members: &[usize]) -> Result<Cut, Error> {
    let mut in_d = vec![false; p.size()];
    for &g in members {
        in_d[g] = true;
    }
    let d = *members.iter().min().ok_or_else(|| {
        Error::Internal("cut requested for empty SCC".into())
    })?;
    let (_, s0) = p.split(d);
    let co = co_reachability(p, &in_d, d);

    let nq = p.automaton().n_states();
    let max_word = nq * nq * members.len();
    let mut word: Vec<usize> = Vec::new();
    // Survives starts as the full fibre (Q × {s}) ∩ D and is rebuilt
    // backwards through each prepended witness.
    let mut survives: Vec<usize> = members
        .iter()
        .copied()
        .filter(|&g| p.split(g).1 == s0)
        .collect();
    let mut trace = vec![survives.clone()];

    for _ in 0..nq {
        let e = match co
            .members
            .iter()
            .copied()
            .filter(|&e| e != d && survives.contains(&e))
            .min()
        {
            Some(e) => e,
            None => {
                let fibre = fibre_step_word(p, &in_d, &Fibre::singleton(p, d), &word)?
                    .ok_or_else(|| Error::Internal("cut word not enabled".into()))?;
                return Ok(Cut {
                    base: d,
                    fibre,
                    word,
                    survives_trace: trace,
                });
            }
        };
        let v = &co.witnesses[&e];
        // Backward pass: for i = n..1 keep ⟨p, v_{i-1}⟩ ∈ D (v_0 = s) whose
        // step into v_i meets the current Survives set.
        for i in (0..v.len()).rev() {
            let prev_letter = if i == 0 { s0 } else { v[i - 1] };
            let next: Vec<usize> = members
                .iter()
                .copied()
                .filter(|&g| {
                    let (q, s) = p.split(g);
                    s == prev_letter
                        && p.automaton()
                            .targets(q, s)
                            .iter()
                            .any(|&q2| survives.binary_search(&p.index(q2, v[i])).is_ok())
                })
                .collect();
            survives = next;
            trace.push(survives.clone());
        }
        let mut grown = v.clone();
        grown.extend_from_slice(&word);
        if grown.len() > max_word {
            return Err(Error::Internal(format!(
                "cut word exceeded length bound {max_word}"
            )));
        }
        word = grown;
    }
    Err(Error::Internal(
        "cut algorithm exceeded |Q| iterations (is the automaton unambiguous?)".into(),
    ))
}

/// Characteristic vector of a cut over the canonical index order of `D`.
pub fn cut_normaliser(cut: &Cut, members: &[usize]) -> DVector<f64> {
    DVector::from_iterator(
        members.len(),
        members
            .iter()
            .map(|g| if cut.fibre.members.contains(g) { 1.0 } else { 0.0 }),
    )
}
