//! Test harness: canonical example instances, instance generators, oracle
//! implementations (deterministic BSCC reachability, Monte Carlo), an
//! exhaustive cut checker, and benchmark plumbing.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::automata::{parse_automaton, tarjan, BuchiAutomaton};
use crate::cutfinder::Cut;
use crate::markov::{InitialDistribution, MarkovChain};
use crate::product::{analyse, ProductSystem};
use crate::solver::{self, Method};
use crate::{Error, Tolerances};

/// The running-example automaton and chain used throughout the tests.
pub mod testdata {
    use super::*;

    pub const EXAMPLE_AUTOMATON_JSON: &str = r#"{
        "states": ["q0", "q1", "q2", "q3"],
        "alphabet": ["a", "b"],
        "initial": ["q0"],
        "accepting": ["q0"],
        "transitions": [
            {"from": "q0", "label": "a", "to": ["q1"]},
            {"from": "q1", "label": "a", "to": ["q0"]},
            {"from": "q1", "label": "b", "to": ["q1", "q3"]},
            {"from": "q2", "label": "a", "to": ["q3"]},
            {"from": "q2", "label": "b", "to": ["q0", "q2"]},
            {"from": "q3", "label": "a", "to": ["q2"]}
        ]
    }"#;

    pub const EXAMPLE_CHAIN_JSON: &str = r#"{
        "states": ["a", "b"],
        "matrix": [[0.5, 0.5], [0.5, 0.5]],
        "initial": [0.5, 0.5]
    }"#;

    pub fn example_automaton() -> BuchiAutomaton {
        parse_automaton(EXAMPLE_AUTOMATON_JSON).unwrap()
    }

    pub fn example_chain() -> (MarkovChain, InitialDistribution) {
        crate::markov::parse_chain(EXAMPLE_CHAIN_JSON).unwrap()
    }
}

/// Uniform chain (and distribution) over the automaton's alphabet, for
/// instances generated without an explicit chain.
pub fn uniform_chain_for(a: &BuchiAutomaton) -> (MarkovChain, InitialDistribution) {
    let m = MarkovChain::uniform(a.alphabet().to_vec());
    let iota = InitialDistribution::uniform(m.n_states());
    (m, iota)
}

/// The strongly connected two-tree family with quadratically many
/// transitions, parameterised by tree depth `n ≥ 1` (2ⁿ leaves per tree).
///
/// Tree `T1` branches downward with `a`/`b`; the reversed tree `T2` ascends
/// child-to-parent, the edge labelled by the child's position (`a` for the
/// first child, `b` for the second) so that simultaneous runs never merge.
/// Every `T1` leaf jumps to every former leaf of `T2` on both letters,
/// giving the `(2ⁿ)²` bipartite block; the former root of `T2` carries an
/// `a` self-loop and returns to the root of `T1` on `b`.
pub fn quadratic_family(n: usize) -> BuchiAutomaton {
    assert!(n >= 1, "tree depth must be at least 1");
    let tree = (1usize << (n + 1)) - 1; // heap-indexed nodes 1..=tree
    let leaves: Vec<usize> = ((1 << n)..=tree).collect();
    let t1 = |i: usize| format!("u{i}");
    let t2 = |i: usize| format!("v{i}");
    let mut states: Vec<String> = (1..=tree).map(t1).collect();
    states.extend((1..=tree).map(t2));
    let mut transitions = Vec::new();
    let push = |v: &mut Vec<serde_json::Value>, from: String, label: &str, to: Vec<String>| {
        v.push(serde_json::json!({"from": from, "label": label, "to": to}));
    };
    for i in 1..=tree / 2 {
        push(&mut transitions, t1(i), "a", vec![t1(2 * i)]);
        push(&mut transitions, t1(i), "b", vec![t1(2 * i + 1)]);
        push(&mut transitions, t2(2 * i), "a", vec![t2(i)]);
        push(&mut transitions, t2(2 * i + 1), "b", vec![t2(i)]);
    }
    let former_leaves: Vec<String> = leaves.iter().map(|&i| t2(i)).collect();
    for &i in &leaves {
        push(&mut transitions, t1(i), "a", former_leaves.clone());
        push(&mut transitions, t1(i), "b", former_leaves.clone());
    }
    push(&mut transitions, t2(1), "a", vec![t2(1)]);
    push(&mut transitions, t2(1), "b", vec![t1(1)]);
    let doc = serde_json::json!({
        "states": states,
        "alphabet": ["a", "b"],
        "initial": [t1(1)],
        "accepting": [t2(1)],
        "transitions": transitions,
    });
    parse_automaton(&doc.to_string()).unwrap()
}

fn random_names(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i}")).collect()
}

fn automaton_from_parts(
    n_states: usize,
    n_letters: usize,
    delta: &[Vec<Vec<usize>>],
    initial: &[usize],
    accepting: &[usize],
) -> BuchiAutomaton {
    let states = random_names("q", n_states);
    let letters = random_names("s", n_letters);
    let mut transitions = Vec::new();
    for (q, rows) in delta.iter().enumerate() {
        for (l, tos) in rows.iter().enumerate() {
            if !tos.is_empty() {
                transitions.push(serde_json::json!({
                    "from": states[q],
                    "label": letters[l],
                    "to": tos.iter().map(|&t| states[t].clone()).collect::<Vec<_>>(),
                }));
            }
        }
    }
    let doc = serde_json::json!({
        "states": states,
        "alphabet": letters,
        "initial": initial.iter().map(|&q| format!("q{q}")).collect::<Vec<_>>(),
        "accepting": accepting.iter().map(|&q| format!("q{q}")).collect::<Vec<_>>(),
        "transitions": transitions,
    });
    parse_automaton(&doc.to_string()).unwrap()
}

/// Rejection-samples a random UBA that is unambiguous and has an accepting
/// recurrent SCC in the product with the uniform chain. Returns `None`
/// after 10,000 rejections.
pub fn generate_random_uba(
    seed: u64,
    n_states: usize,
    n_letters: usize,
    density: f64,
) -> Option<BuchiAutomaton> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tol = Tolerances::default();
    for _ in 0..10_000 {
        let mut delta = vec![vec![Vec::new(); n_letters]; n_states];
        for (q, row) in delta.iter_mut().enumerate() {
            let mut any = false;
            for tos in row.iter_mut() {
                for t in 0..n_states {
                    if rng.random_range(0.0..1.0) < density {
                        tos.push(t);
                        any = true;
                    }
                }
            }
            if !any {
                // Forced self-loop keeps every state alive even at density 0.
                row[0].push(q);
            }
            // Complete the remaining letters with one target each: incomplete
            // rows would leave the product without recurrent SCCs and the
            // rejection loop would almost never terminate.
            for tos in row.iter_mut() {
                if tos.is_empty() {
                    tos.push(rng.random_range(0..n_states));
                }
            }
        }
        let initial = vec![rng.random_range(0..n_states)];
        let mut accepting: Vec<usize> =
            (0..n_states).filter(|_| rng.random_range(0.0..1.0) < 0.3).collect();
        if accepting.is_empty() {
            accepting.push(rng.random_range(0..n_states));
        }
        let a = automaton_from_parts(n_states, n_letters, &delta, &initial, &accepting);
        if !a.verify_unambiguous().is_unambiguous() {
            continue;
        }
        let (m, _) = uniform_chain_for(&a);
        let norm = a.normalise();
        if norm.n_states() == 0 {
            continue;
        }
        match analyse(&norm, &m, &tol) {
            Ok(p) => {
                if p.sccs().iter().any(|s| s.recurrent && s.accepting) {
                    return Some(a);
                }
            }
            Err(_) => continue,
        }
    }
    None
}

/// A random complete deterministic Büchi automaton (one successor per
/// state/letter), trivially unambiguous.
pub fn generate_random_deterministic(seed: u64, n_states: usize, n_letters: usize) -> BuchiAutomaton {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let delta: Vec<Vec<Vec<usize>>> = (0..n_states)
        .map(|_| {
            (0..n_letters)
                .map(|_| vec![rng.random_range(0..n_states)])
                .collect()
        })
        .collect();
    let initial = vec![rng.random_range(0..n_states)];
    let mut accepting: Vec<usize> =
        (0..n_states).filter(|_| rng.random_range(0.0..1.0) < 0.4).collect();
    if accepting.is_empty() {
        accepting.push(rng.random_range(0..n_states));
    }
    automaton_from_parts(n_states, n_letters, &delta, &initial, &accepting)
}

/// Classical oracle for deterministic automata: build the product Markov
/// chain (with a dead sink for missing transitions), mark bottom SCCs that
/// contain an accepting automaton state as winning, and solve the
/// reachability system.
pub fn deterministic_oracle(
    a: &BuchiAutomaton,
    m: &MarkovChain,
    iota: &InitialDistribution,
) -> Result<f64, Error> {
    let nq = a.n_states();
    let ns = m.n_states();
    if a.alphabet() != m.state_names() {
        return Err(Error::Invalid("alphabet does not match chain".into()));
    }
    for q in 0..nq {
        for s in 0..ns {
            if a.targets(q, s).len() > 1 {
                return Err(Error::Invalid("automaton is not deterministic".into()));
            }
        }
    }
    // Product chain states 0..nq*ns, sink = nq*ns.
    let sink = nq * ns;
    let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); sink + 1];
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); sink + 1];
    for q in 0..nq {
        for s in 0..ns {
            let i = q * ns + s;
            for &s2 in m.successors(s) {
                let p = m.prob(s, s2);
                let j = match a.targets(q, s).first() {
                    Some(&q2) => q2 * ns + s2,
                    None => sink,
                };
                rows[i].push((j, p));
                adj[i].push(j);
            }
        }
    }
    rows[sink].push((sink, 1.0));
    adj[sink].push(sink);
    let sccs = tarjan(&adj);
    let mut value: Vec<Option<f64>> = vec![None; sink + 1];
    for scc in &sccs {
        let bottom = scc.iter().all(|&i| {
            adj[i].iter().all(|&j| scc.binary_search(&j).is_ok())
        });
        if bottom {
            let winning = scc
                .iter()
                .any(|&i| i != sink && a.is_accepting(i / ns));
            for &i in scc {
                value[i] = Some(if winning { 1.0 } else { 0.0 });
            }
        }
    }
    // Reachability for transient states: x = Px restricted, solved densely.
    let transient: Vec<usize> = (0..=sink).filter(|&i| value[i].is_none()).collect();
    if !transient.is_empty() {
        let local: std::collections::HashMap<usize, usize> =
            transient.iter().enumerate().map(|(k, &i)| (i, k)).collect();
        let k = transient.len();
        let mut mat = nalgebra::DMatrix::zeros(k, k);
        let mut b = DVector::zeros(k);
        for (r, &i) in transient.iter().enumerate() {
            mat[(r, r)] = 1.0;
            for &(j, p) in &rows[i] {
                match value[j] {
                    Some(v) => b[r] += p * v,
                    None => mat[(r, local[&j])] -= p,
                }
            }
        }
        let (x, residual) = crate::numerics::solve_least_squares(&mat, &b);
        if residual > 1e-8 * (1.0 + b.norm()) {
            return Err(Error::Numerical(format!(
                "oracle reachability solve residual {residual:.3e}"
            )));
        }
        for (r, &i) in transient.iter().enumerate() {
            value[i] = Some(x[r].clamp(0.0, 1.0));
        }
    }
    let q0 = match a.initial() {
        [q] => *q,
        _ => return Err(Error::Invalid("oracle expects a single initial state".into())),
    };
    let mut prob = 0.0;
    for s in 0..ns {
        prob += iota.weight(s) * value[q0 * ns + s].unwrap();
    }
    Ok(prob.clamp(0.0, 1.0))
}

/// Statistical oracle: samples `n_samples` trajectories of length `l` and
/// counts those on which some run visits the accepting set at least `k`
/// times, by dynamic programming over the automaton. Returns the empirical
/// frequency and a 3σ binomial half-width; the estimate converges to the
/// true probability as `l, k → ∞`.
pub fn monte_carlo_estimate(
    a: &BuchiAutomaton,
    m: &MarkovChain,
    iota: &InitialDistribution,
    l: usize,
    k: usize,
    n_samples: usize,
    seed: u64,
) -> (f64, f64) {
    const UNREACH: u8 = u8::MAX;
    let nq = a.n_states();
    let ns = m.n_states();
    let cap = k.min(u8::MAX as usize - 1) as u8;
    // Transition lists per letter, flattened for the inner loop.
    let per_letter: Vec<Vec<(usize, usize)>> = (0..ns)
        .map(|s| {
            (0..nq)
                .flat_map(|q| a.targets(q, s).iter().map(move |&q2| (q, q2)))
                .collect()
        })
        .collect();
    let iota_cum: Vec<f64> = iota
        .weights()
        .iter()
        .scan(0.0, |acc, w| {
            *acc += w;
            Some(*acc)
        })
        .collect();
    let row_cum: Vec<Vec<f64>> = (0..ns)
        .map(|s| {
            m.row(s)
                .iter()
                .scan(0.0, |acc, p| {
                    *acc += p;
                    Some(*acc)
                })
                .collect()
        })
        .collect();
    let pick = |cum: &[f64], x: f64| cum.iter().position(|&c| x < c).unwrap_or(cum.len() - 1);

    let one_sample = |i: usize| -> bool {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (i as u64).wrapping_mul(0x9E3779B97F4A7C15));
        let mut s = pick(&iota_cum, rng.random_range(0.0..1.0));
        let mut val = vec![UNREACH; nq];
        let mut next = vec![UNREACH; nq];
        for &q in a.initial() {
            val[q] = 0;
        }
        for _ in 0..l {
            next.fill(UNREACH);
            let mut alive = false;
            for &(q, q2) in &per_letter[s] {
                if val[q] == UNREACH {
                    continue;
                }
                let v = (val[q] + u8::from(a.is_accepting(q2))).min(cap);
                if next[q2] == UNREACH || v > next[q2] {
                    next[q2] = v;
                    alive = true;
                }
            }
            if !alive {
                return false;
            }
            std::mem::swap(&mut val, &mut next);
            s = pick(&row_cum[s], rng.random_range(0.0..1.0));
        }
        val.iter().any(|&v| v != UNREACH && v as usize >= k)
    };

    #[cfg(feature = "parallel")]
    let hits = (0..n_samples).into_par_iter().filter(|&i| one_sample(i)).count();
    #[cfg(not(feature = "parallel"))]
    let hits = (0..n_samples).filter(|&i| one_sample(i)).count();

    let p = hits as f64 / n_samples as f64;
    let half = 3.0 * (p * (1.0 - p) / n_samples as f64).sqrt();
    (p, half)
}

/// Brute-force cut check for small SCCs (`|Q| ≤ 64`): every fibre reachable
/// from the candidate along enabled chain edges must be nonempty.
pub fn verify_cut_exhaustive(p: &ProductSystem, members: &[usize], cut: &Cut) -> bool {
    let nq = p.automaton().n_states();
    assert!(nq <= 64, "mask-based fibre search needs |Q| <= 64");
    let mut in_d = vec![false; p.size()];
    for &g in members {
        in_d[g] = true;
    }
    let mask_of = |f: &[usize]| -> u64 {
        f.iter().map(|&g| 1u64 << p.split(g).0).fold(0, |a, b| a | b)
    };
    let start = (cut.fibre.chain_state, mask_of(&cut.fibre.members));
    let mut seen = std::collections::HashSet::from([start]);
    let mut stack = vec![start];
    while let Some((s, mask)) = stack.pop() {
        if mask == 0 {
            return false;
        }
        for &s2 in p.chain().successors(s) {
            let mut next = 0u64;
            for q in 0..nq {
                if mask >> q & 1 == 1 {
                    for &q2 in p.automaton().targets(q, s) {
                        if in_d[p.index(q2, s2)] {
                            next |= 1 << q2;
                        }
                    }
                }
            }
            if seen.insert((s2, next)) {
                stack.push((s2, next));
            }
        }
    }
    true
}

/// One benchmark input.
pub struct BenchInstance {
    pub id: String,
    pub n: usize,
    pub automaton: BuchiAutomaton,
    pub chain: MarkovChain,
    pub iota: InitialDistribution,
}

/// One CSV row of the benchmark report.
#[derive(Clone, Debug)]
pub struct BenchRow {
    pub instance_id: String,
    pub n: usize,
    pub q: usize,
    pub delta: usize,
    pub s: usize,
    pub e: usize,
    pub method: String,
    pub normaliser_ms: f64,
    pub total_ms: f64,
    pub agreement_delta: f64,
}

pub fn rows_to_csv(rows: &[BenchRow]) -> String {
    let mut out =
        String::from("instance_id,n,Q,delta,S,E,method,normaliser_ms,total_ms,agreement_delta\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{:.4},{:.4},{:.3e}\n",
            r.instance_id,
            r.n,
            r.q,
            r.delta,
            r.s,
            r.e,
            r.method,
            r.normaliser_ms,
            r.total_ms,
            r.agreement_delta
        ));
    }
    out
}

/// Median-of-5 wall time (ms) of the normaliser stage alone, after one
/// warmup run. Inner repetitions are adapted so each timed sample is long
/// enough to measure.
pub fn time_normaliser_stage(
    p: &ProductSystem,
    method: Method,
    tol: &Tolerances,
) -> Result<f64, Error> {
    solver::compute_normalisers(p, method, tol)?; // warmup + error check
    let mut reps = 1usize;
    loop {
        let t = std::time::Instant::now();
        for _ in 0..reps {
            let _ = solver::compute_normalisers(p, method, tol)?;
        }
        if t.elapsed().as_millis() >= 5 || reps >= 1024 {
            break;
        }
        reps *= 4;
    }
    let mut samples = Vec::with_capacity(5);
    for _ in 0..5 {
        let t = std::time::Instant::now();
        for _ in 0..reps {
            let _ = solver::compute_normalisers(p, method, tol)?;
        }
        samples.push(t.elapsed().as_secs_f64() * 1e3 / reps as f64);
    }
    samples.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(samples[2])
}

/// Times the normaliser stage of each method on each instance and checks
/// cross-method agreement of the final solution.
pub fn benchmark(
    instances: &[BenchInstance],
    methods: &[Method],
    tol: &Tolerances,
) -> Result<Vec<BenchRow>, Error> {
    let mut rows = Vec::new();
    for inst in instances {
        let norm = inst.automaton.normalise();
        let p = analyse(&norm, &inst.chain, tol)?;
        let (_, r_cut) =
            solver::model_check_full(&inst.automaton, &inst.chain, &inst.iota, Method::Cut, tol)?;
        let (_, r_pseudo) = solver::model_check_full(
            &inst.automaton,
            &inst.chain,
            &inst.iota,
            Method::Pseudo,
            tol,
        )?;
        let agreement = r_cut
            .z
            .iter()
            .zip(&r_pseudo.z)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        if agreement > tol.agreement {
            return Err(Error::Numerical(format!(
                "benchmark instance {} disagrees across methods ({agreement:.3e})",
                inst.id
            )));
        }
        for &method in methods {
            if method == Method::Both {
                continue;
            }
            let normaliser_ms = time_normaliser_stage(&p, method, tol)?;
            let result = match method {
                Method::Cut => &r_cut,
                _ => &r_pseudo,
            };
            rows.push(BenchRow {
                instance_id: inst.id.clone(),
                n: inst.n,
                q: inst.automaton.n_states(),
                delta: inst.automaton.transition_pair_count(),
                s: inst.chain.n_states(),
                e: inst.chain.edge_count(),
                method: method.name().to_string(),
                normaliser_ms,
                total_ms: result.timings_ms.values().sum(),
                agreement_delta: agreement,
            });
        }
    }
    Ok(rows)
}

/// Benchmark instances for the quadratic family over the uniform 2-state
/// chain.
pub fn quadratic_instances(n_values: &[usize]) -> Vec<BenchInstance> {
    n_values
        .iter()
        .map(|&n| {
            let a = quadratic_family(n);
            let (chain, iota) = uniform_chain_for(&a);
            BenchInstance {
                id: format!("quadratic-{n}"),
                n,
                automaton: a,
                chain,
                iota,
            }
        })
        .collect()
}
