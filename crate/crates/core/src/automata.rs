//! Büchi automata: representation, JSON parsing, the transition-function
//! extension, normalisation (unreachable-state and diamond removal) and the
//! unambiguity check.

use std::collections::{HashMap, HashSet, VecDeque};

use serde::Deserialize;

use crate::Error;

/// A Büchi automaton over an ordered alphabet.
///
/// State and letter order is declaration order; every downstream tie-break
/// (choice of the base product state, letter order in the basis worklist)
/// derives from these indices. Instances are immutable after construction.
#[derive(Clone, Debug)]
pub struct BuchiAutomaton {
    states: Vec<String>,
    alphabet: Vec<String>,
    /// `delta[q][a]` is the sorted list of successors of `q` under letter `a`.
    delta: Vec<Vec<Vec<usize>>>,
    /// `lookup[q][a][r]` answers `r ∈ δ(q,a)` in constant time.
    lookup: Vec<Vec<Vec<bool>>>,
    initial: Vec<usize>,
    accepting: Vec<bool>,
}

#[derive(Deserialize)]
struct TransitionDoc {
    from: String,
    label: String,
    to: Vec<String>,
}

#[derive(Deserialize)]
struct AutomatonDoc {
    states: Vec<String>,
    alphabet: Vec<String>,
    initial: Vec<String>,
    accepting: Vec<String>,
    transitions: Vec<TransitionDoc>,
}

fn index_of(map: &HashMap<String, usize>, name: &str, kind: &str) -> Result<usize, Error> {
    map.get(name)
        .copied()
        .ok_or_else(|| Error::Parse(format!("undeclared {kind} identifier '{name}'")))
}

/// Parses the automaton JSON schema. Does not normalise.
pub fn parse_automaton(text: &str) -> Result<BuchiAutomaton, Error> {
    let doc: AutomatonDoc =
        serde_json::from_str(text).map_err(|e| Error::Parse(format!("malformed JSON: {e}")))?;

    let mut state_idx = HashMap::new();
    for (i, s) in doc.states.iter().enumerate() {
        if state_idx.insert(s.clone(), i).is_some() {
            return Err(Error::Parse(format!("duplicate state '{s}'")));
        }
    }
    let mut letter_idx = HashMap::new();
    for (i, a) in doc.alphabet.iter().enumerate() {
        if letter_idx.insert(a.clone(), i).is_some() {
            return Err(Error::Parse(format!("duplicate letter '{a}'")));
        }
    }
    if doc.initial.is_empty() {
        return Err(Error::Parse("empty initial set".into()));
    }

    let n = doc.states.len();
    let k = doc.alphabet.len();
    let mut delta = vec![vec![Vec::new(); k]; n];
    let mut seen = HashSet::new();
    for t in &doc.transitions {
        let q = index_of(&state_idx, &t.from, "state")?;
        let a = index_of(&letter_idx, &t.label, "letter")?;
        if !seen.insert((q, a)) {
            return Err(Error::Parse(format!(
                "duplicate transition entry for ({}, {})",
                t.from, t.label
            )));
        }
        let mut targets = Vec::with_capacity(t.to.len());
        for r in &t.to {
            targets.push(index_of(&state_idx, r, "state")?);
        }
        targets.sort_unstable();
        targets.dedup();
        delta[q][a] = targets;
    }

    let mut initial: Vec<usize> = doc
        .initial
        .iter()
        .map(|s| index_of(&state_idx, s, "state"))
        .collect::<Result<_, _>>()?;
    initial.sort_unstable();
    initial.dedup();

    let mut accepting = vec![false; n];
    for s in &doc.accepting {
        accepting[index_of(&state_idx, s, "state")?] = true;
    }

    Ok(BuchiAutomaton::from_parts(
        doc.states,
        doc.alphabet,
        delta,
        initial,
        accepting,
    ))
}

impl BuchiAutomaton {
    /// Builds an automaton from index-based parts. Used by parsing and the
    /// instance generators; panics on inconsistent dimensions.
    pub fn from_parts(
        states: Vec<String>,
        alphabet: Vec<String>,
        delta: Vec<Vec<Vec<usize>>>,
        initial: Vec<usize>,
        accepting: Vec<bool>,
    ) -> Self {
        let n = states.len();
        let k = alphabet.len();
        assert_eq!(delta.len(), n);
        assert_eq!(accepting.len(), n);
        let mut lookup = vec![vec![vec![false; n]; k]; n];
        for (q, row) in delta.iter().enumerate() {
            assert_eq!(row.len(), k);
            for (a, targets) in row.iter().enumerate() {
                for &r in targets {
                    assert!(r < n);
                    lookup[q][a][r] = true;
                }
            }
        }
        for &q in &initial {
            assert!(q < n);
        }
        BuchiAutomaton {
            states,
            alphabet,
            delta,
            lookup,
            initial,
            accepting,
        }
    }

    pub fn n_states(&self) -> usize {
        self.states.len()
    }

    pub fn n_letters(&self) -> usize {
        self.alphabet.len()
    }

    pub fn state_names(&self) -> &[String] {
        &self.states
    }

    pub fn alphabet(&self) -> &[String] {
        &self.alphabet
    }

    pub fn state_index(&self, name: &str) -> Option<usize> {
        self.states.iter().position(|s| s == name)
    }

    pub fn letter_index(&self, name: &str) -> Option<usize> {
        self.alphabet.iter().position(|a| a == name)
    }

    pub fn initial(&self) -> &[usize] {
        &self.initial
    }

    pub fn is_accepting(&self, q: usize) -> bool {
        self.accepting[q]
    }

    pub fn has_accepting_state(&self) -> bool {
        self.accepting.iter().any(|&b| b)
    }

    pub fn targets(&self, q: usize, a: usize) -> &[usize] {
        &self.delta[q][a]
    }

    pub fn has_transition(&self, q: usize, a: usize, r: usize) -> bool {
        self.lookup[q][a][r]
    }

    /// `|δ|`: the number of state pairs `(q,r)` connected by at least one
    /// letter.
    pub fn transition_pair_count(&self) -> usize {
        let n = self.n_states();
        let mut count = 0;
        for q in 0..n {
            for r in 0..n {
                if (0..self.n_letters()).any(|a| self.lookup[q][a][r]) {
                    count += 1;
                }
            }
        }
        count
    }

    /// Serialises back into the input JSON schema.
    pub fn to_json(&self) -> String {
        let mut transitions = Vec::new();
        for (q, rows) in self.delta.iter().enumerate() {
            for (a, tos) in rows.iter().enumerate() {
                if !tos.is_empty() {
                    transitions.push(serde_json::json!({
                        "from": self.states[q],
                        "label": self.alphabet[a],
                        "to": tos.iter().map(|&r| self.states[r].clone()).collect::<Vec<_>>(),
                    }));
                }
            }
        }
        let doc = serde_json::json!({
            "states": self.states,
            "alphabet": self.alphabet,
            "initial": self.initial.iter().map(|&q| self.states[q].clone()).collect::<Vec<_>>(),
            "accepting": (0..self.n_states())
                .filter(|&q| self.accepting[q])
                .map(|q| self.states[q].clone())
                .collect::<Vec<_>>(),
            "transitions": transitions,
        });
        serde_json::to_string_pretty(&doc).unwrap()
    }

    /// The standard extension of the transition function to state sets and
    /// words. The empty word returns `source` unchanged (deduplicated).
    pub fn delta_set(&self, source: &[usize], word: &[usize]) -> Result<Vec<usize>, Error> {
        for &a in word {
            if a >= self.n_letters() {
                return Err(Error::Invalid(format!("unknown letter index {a}")));
            }
        }
        let mut current: Vec<usize> = source.to_vec();
        current.sort_unstable();
        current.dedup();
        for &a in word {
            let mut next = vec![false; self.n_states()];
            for &q in &current {
                for &r in &self.delta[q][a] {
                    next[r] = true;
                }
            }
            current = next
                .iter()
                .enumerate()
                .filter_map(|(r, &b)| b.then_some(r))
                .collect();
        }
        Ok(current)
    }

    /// Convenience form of [`delta_set`](Self::delta_set) taking letter names.
    pub fn delta_set_named(&self, source: &[&str], word: &[&str]) -> Result<Vec<String>, Error> {
        let src: Vec<usize> = source
            .iter()
            .map(|s| {
                self.state_index(s)
                    .ok_or_else(|| Error::Invalid(format!("unknown state '{s}'")))
            })
            .collect::<Result<_, _>>()?;
        let w: Vec<usize> = word
            .iter()
            .map(|a| {
                self.letter_index(a)
                    .ok_or_else(|| Error::Invalid(format!("unknown letter '{a}'")))
            })
            .collect::<Result<_, _>>()?;
        Ok(self
            .delta_set(&src, &w)?
            .into_iter()
            .map(|q| self.states[q].clone())
            .collect())
    }

    /// Rebuilds the automaton keeping only the flagged states.
    fn restrict(&self, keep: &[bool]) -> BuchiAutomaton {
        let mut new_index = vec![usize::MAX; self.n_states()];
        let mut states = Vec::new();
        for (q, &k) in keep.iter().enumerate() {
            if k {
                new_index[q] = states.len();
                states.push(self.states[q].clone());
            }
        }
        let k = self.n_letters();
        let mut delta = vec![vec![Vec::new(); k]; states.len()];
        let mut accepting = vec![false; states.len()];
        for q in 0..self.n_states() {
            if !keep[q] {
                continue;
            }
            accepting[new_index[q]] = self.accepting[q];
            for a in 0..k {
                delta[new_index[q]][a] = self.delta[q][a]
                    .iter()
                    .filter(|&&r| keep[r])
                    .map(|&r| new_index[r])
                    .collect();
            }
        }
        let initial = self
            .initial
            .iter()
            .filter(|&&q| keep[q])
            .map(|&q| new_index[q])
            .collect();
        BuchiAutomaton::from_parts(states, self.alphabet.clone(), delta, initial, accepting)
    }

    /// Removes every state not reachable from the initial set. Initial
    /// states are always kept, even without outgoing transitions.
    pub fn remove_unreachable(&self) -> BuchiAutomaton {
        let mut keep = vec![false; self.n_states()];
        let mut queue: VecDeque<usize> = VecDeque::new();
        for &q in &self.initial {
            if !keep[q] {
                keep[q] = true;
                queue.push_back(q);
            }
        }
        while let Some(q) = queue.pop_front() {
            for a in 0..self.n_letters() {
                for &r in &self.delta[q][a] {
                    if !keep[r] {
                        keep[r] = true;
                        queue.push_back(r);
                    }
                }
            }
        }
        self.restrict(&keep)
    }

    /// Iteratively drops non-initial states with no outgoing transitions,
    /// then re-runs reachability. No infinite run passes through such a
    /// state, so the language is unchanged.
    pub fn trim(&self) -> BuchiAutomaton {
        let mut current = self.remove_unreachable();
        loop {
            let dead: Vec<usize> = (0..current.n_states())
                .filter(|&q| {
                    !current.initial.contains(&q)
                        && (0..current.n_letters()).all(|a| current.delta[q][a].is_empty())
                })
                .collect();
            if dead.is_empty() {
                return current;
            }
            let mut keep = vec![true; current.n_states()];
            for q in dead {
                keep[q] = false;
            }
            current = current.restrict(&keep).remove_unreachable();
        }
    }

    /// Removes diamonds (two distinct runs for the same finite word between
    /// one state pair) by breadth-first search on the self-product with a
    /// fresh root connected to the pairs `(q,q)`, `q` initial. A state `t`
    /// is deleted whenever an edge from some `(s,s')` with `s ≠ s'` into
    /// `(t,t)` is found; the search restarts after each deletion.
    ///
    /// Only sound on unambiguous input: on ambiguous automata states may be
    /// deleted spuriously, so callers run [`verify_unambiguous`] first.
    pub fn remove_diamonds(&self) -> BuchiAutomaton {
        let mut current = self.clone();
        'restart: loop {
            let n = current.n_states();
            if n == 0 {
                return current;
            }
            let mut visited = vec![false; n * n];
            let mut queue = VecDeque::new();
            for &q in &current.initial {
                // $-transition from the fresh root to (q,q).
                if !visited[q * n + q] {
                    visited[q * n + q] = true;
                    queue.push_back((q, q));
                }
            }
            while let Some((u, v)) = queue.pop_front() {
                for a in 0..current.n_letters() {
                    for &u2 in &current.delta[u][a] {
                        for &v2 in &current.delta[v][a] {
                            if u != v && u2 == v2 {
                                let mut keep = vec![true; n];
                                keep[u2] = false;
                                current = current.restrict(&keep);
                                continue 'restart;
                            }
                            if !visited[u2 * n + v2] {
                                visited[u2 * n + v2] = true;
                                queue.push_back((u2, v2));
                            }
                        }
                    }
                }
            }
            return current;
        }
    }

    /// Full normalisation pipeline: trim, remove diamonds, trim again.
    /// Expects unambiguous input (see [`remove_diamonds`](Self::remove_diamonds)).
    pub fn normalise(&self) -> BuchiAutomaton {
        self.trim().remove_diamonds().trim()
    }

    /// Checks that every accepted word has at most one accepting run, by
    /// searching the self-product restricted to pairs that have diverged.
    pub fn verify_unambiguous(&self) -> Verdict {
        SelfProduct::new(self).search()
    }
}

/// Outcome of the unambiguity check.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Verdict {
    Unambiguous,
    /// A word prefix after which two distinct runs sit at the given state
    /// pair, from which two accepting continuations of one word exist.
    Ambiguous {
        word_prefix: Vec<String>,
        pair: (String, String),
    },
}

impl Verdict {
    pub fn is_unambiguous(&self) -> bool {
        matches!(self, Verdict::Unambiguous)
    }

    /// Converts the verdict into a pipeline error carrying the witness.
    pub fn check(self) -> Result<(), crate::Error> {
        match self {
            Verdict::Unambiguous => Ok(()),
            Verdict::Ambiguous { word_prefix, pair } => {
                Err(crate::Error::Ambiguous(pair.0, pair.1, word_prefix))
            }
        }
    }
}

/// Self-product search: a pair `(p,q)` is *divergent* once the two tracked
/// runs have differed at some position. The automaton is ambiguous iff from
/// some divergent pair the product graph admits a cycle that is accepting in
/// both coordinates (two acceptance sets, one per coordinate).
struct SelfProduct<'a> {
    a: &'a BuchiAutomaton,
    n: usize,
}

impl<'a> SelfProduct<'a> {
    fn new(a: &'a BuchiAutomaton) -> Self {
        SelfProduct { a, n: a.n_states() }
    }

    fn pair_successors(&self, u: usize, v: usize) -> Vec<(usize, usize, usize)> {
        let mut out = Vec::new();
        for a in 0..self.a.n_letters() {
            for &u2 in self.a.targets(u, a) {
                for &v2 in self.a.targets(v, a) {
                    out.push((a, u2, v2));
                }
            }
        }
        out
    }

    fn search(&self) -> Verdict {
        let n = self.n;
        if n == 0 {
            return Verdict::Unambiguous;
        }

        // Words leading to each reachable single state (for witness output).
        let mut reach_word: Vec<Option<Vec<usize>>> = vec![None; n];
        let mut queue = VecDeque::new();
        for &q in self.a.initial() {
            if reach_word[q].is_none() {
                reach_word[q] = Some(Vec::new());
                queue.push_back(q);
            }
        }
        while let Some(q) = queue.pop_front() {
            for a in 0..self.a.n_letters() {
                for &r in self.a.targets(q, a) {
                    if reach_word[r].is_none() {
                        let mut w = reach_word[q].clone().unwrap();
                        w.push(a);
                        reach_word[r] = Some(w);
                        queue.push_back(r);
                    }
                }
            }
        }

        // Seeds: distinct initial pairs, and splits out of a reachable state.
        let mut seed: HashMap<usize, Vec<usize>> = HashMap::new();
        for &p in self.a.initial() {
            for &q in self.a.initial() {
                if p != q {
                    seed.entry(p * n + q).or_insert_with(Vec::new);
                }
            }
        }
        for q in 0..n {
            let Some(prefix) = &reach_word[q] else {
                continue;
            };
            for a in 0..self.a.n_letters() {
                let t = self.a.targets(q, a);
                for &x in t {
                    for &y in t {
                        if x != y {
                            let mut w = prefix.clone();
                            w.push(a);
                            seed.entry(x * n + y).or_insert(w);
                        }
                    }
                }
            }
        }

        // Divergence is absorbing, so close the seed set under successors,
        // remembering how each pair was first reached.
        let mut diverged: Vec<bool> = vec![false; n * n];
        let mut origin: HashMap<usize, (Option<usize>, Option<usize>, Vec<usize>)> = HashMap::new();
        let mut queue = VecDeque::new();
        for (pq, w) in seed {
            if !diverged[pq] {
                diverged[pq] = true;
                origin.insert(pq, (None, None, w));
                queue.push_back(pq);
            }
        }
        while let Some(pq) = queue.pop_front() {
            let (u, v) = (pq / n, pq % n);
            for (a, u2, v2) in self.pair_successors(u, v) {
                let id = u2 * n + v2;
                if !diverged[id] {
                    diverged[id] = true;
                    origin.insert(id, (Some(pq), Some(a), Vec::new()));
                    queue.push_back(id);
                }
            }
        }

        let word_to = |mut pq: usize| -> Vec<usize> {
            let mut suffix = Vec::new();
            loop {
                match &origin[&pq] {
                    (None, _, seed_word) => {
                        let mut w = seed_word.clone();
                        suffix.reverse();
                        w.extend(suffix);
                        return w;
                    }
                    (Some(parent), Some(a), _) => {
                        suffix.push(*a);
                        pq = *parent;
                    }
                    _ => unreachable!(),
                }
            }
        };

        let nodes: Vec<usize> = (0..n * n).filter(|&pq| diverged[pq]).collect();
        let node_pos: HashMap<usize, usize> = nodes.iter().enumerate().map(|(i, &v)| (v, i)).collect();
        let adj: Vec<Vec<usize>> = nodes
            .iter()
            .map(|&pq| {
                self.pair_successors(pq / n, pq % n)
                    .into_iter()
                    .map(|(_, u2, v2)| node_pos[&(u2 * n + v2)])
                    .collect()
            })
            .collect();

        for comp in tarjan(&adj) {
            let nontrivial = comp.len() > 1
                || adj[comp[0]].contains(&comp[0]);
            if !nontrivial {
                continue;
            }
            let first_accepts = comp.iter().any(|&i| self.a.is_accepting(nodes[i] / n));
            let second_accepts = comp.iter().any(|&i| self.a.is_accepting(nodes[i] % n));
            if first_accepts && second_accepts {
                let pq = nodes[comp[0]];
                let (u, v) = (pq / n, pq % n);
                let word = word_to(pq)
                    .into_iter()
                    .map(|a| self.a.alphabet[a].clone())
                    .collect();
                return Verdict::Ambiguous {
                    word_prefix: word,
                    pair: (self.a.states[u].clone(), self.a.states[v].clone()),
                };
            }
        }
        Verdict::Unambiguous
    }
}

/// Tarjan's algorithm on an adjacency list; components are emitted in
/// reverse topological order (every component before the components that
/// can reach it).
pub fn tarjan(adj: &[Vec<usize>]) -> Vec<Vec<usize>> {
    struct State<'g> {
        adj: &'g [Vec<usize>],
        index: usize,
        idx: Vec<Option<usize>>,
        low: Vec<usize>,
        stack: Vec<usize>,
        on_stack: Vec<bool>,
        comps: Vec<Vec<usize>>,
    }

    // Explicit call stack: product graphs can be deep.
    fn connect(root: usize, st: &mut State) {
        let mut call: Vec<(usize, usize)> = vec![(root, 0)];
        st.idx[root] = Some(st.index);
        st.low[root] = st.index;
        st.index += 1;
        st.stack.push(root);
        st.on_stack[root] = true;

        while let Some(&mut (v, ref mut next)) = call.last_mut() {
            if *next < st.adj[v].len() {
                let w = st.adj[v][*next];
                *next += 1;
                if st.idx[w].is_none() {
                    st.idx[w] = Some(st.index);
                    st.low[w] = st.index;
                    st.index += 1;
                    st.stack.push(w);
                    st.on_stack[w] = true;
                    call.push((w, 0));
                } else if st.on_stack[w] {
                    st.low[v] = st.low[v].min(st.idx[w].unwrap());
                }
            } else {
                call.pop();
                if let Some(&(parent, _)) = call.last() {
                    st.low[parent] = st.low[parent].min(st.low[v]);
                }
                if st.low[v] == st.idx[v].unwrap() {
                    let mut comp = Vec::new();
                    loop {
                        let w = st.stack.pop().unwrap();
                        st.on_stack[w] = false;
                        comp.push(w);
                        if w == v {
                            break;
                        }
                    }
                    comp.sort_unstable();
                    st.comps.push(comp);
                }
            }
        }
    }

    let n = adj.len();
    let mut st = State {
        adj,
        index: 0,
        idx: vec![None; n],
        low: vec![0; n],
        stack: Vec::new(),
        on_stack: vec![false; n],
        comps: Vec::new(),
    };
    for v in 0..n {
        if st.idx[v].is_none() {
            connect(v, &mut st);
        }
    }
    st.comps
}
