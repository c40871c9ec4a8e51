//! End-to-end pipeline: automaton normalisation, product construction and
//! classification, per-SCC normaliser computation (cut, pseudo-cut, or
//! both), and the final linear solve.

use std::collections::BTreeMap;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
#[cfg(feature = "parallel")]
use rayon::prelude::*;
use serde::Serialize;

use crate::automata::BuchiAutomaton;
use crate::cutfinder;
use crate::markov::{InitialDistribution, MarkovChain};
use crate::numerics;
use crate::product::{analyse, ProductSystem};
use crate::pseudocut;
use crate::{Error, Tolerances};

/// Normaliser computation strategy.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    Cut,
    Pseudo,
    /// Run both and require agreement; the reported vector is the
    /// pseudo-cut one.
    Both,
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "cut" => Ok(Method::Cut),
            "pseudo" => Ok(Method::Pseudo),
            "both" => Ok(Method::Both),
            other => Err(Error::Invalid(format!("unknown method '{other}'"))),
        }
    }
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Cut => "cut",
            Method::Pseudo => "pseudo",
            Method::Both => "both",
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SccReport {
    pub states: Vec<String>,
    pub recurrent: bool,
    pub accepting: bool,
    /// Normaliser over the SCC's canonical member order; only present for
    /// accepting recurrent SCCs.
    pub normaliser: Option<Vec<f64>>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ModelCheckResult {
    pub probability: f64,
    pub method: String,
    /// `‖z − Bz‖∞` of the reported solution.
    pub residual: f64,
    /// `|μ⊤z_D − 1|` per accepting recurrent SCC, in SCC order.
    pub normaliser_residuals: Vec<f64>,
    pub z: Vec<f64>,
    pub sccs: Vec<SccReport>,
    pub timings_ms: BTreeMap<String, f64>,
    /// Number of components clamped into [0, 1] after the solve.
    pub clamped: usize,
}

/// Computes a single normaliser for the accepting recurrent SCC `members`.
pub fn compute_normaliser(
    p: &ProductSystem,
    members: &[usize],
    method: Method,
    tol: &Tolerances,
) -> Result<DVector<f64>, Error> {
    match method {
        Method::Cut => {
            let cut = cutfinder::compute_cut(p, members)?;
            Ok(cutfinder::cut_normaliser(&cut, members))
        }
        Method::Pseudo => {
            let y = p.dominant_eigenvector(members, tol)?;
            let delta = pseudocut::build_delta(p, members);
            let basis = pseudocut::compute_basis(&delta, p.chain(), &y, tol);
            let mut in_d = vec![false; p.size()];
            for &g in members {
                in_d[g] = true;
            }
            let d = members[0];
            let co = cutfinder::co_reachability(p, &in_d, d);
            pseudocut::pseudo_cut(p, &co, &basis, &y, tol)
        }
        Method::Both => Err(Error::Internal(
            "compute_normaliser expects a single method".into(),
        )),
    }
}

/// Computes normalisers for every accepting recurrent SCC. With the
/// `parallel` feature the fan-out runs on the rayon pool; otherwise it is
/// sequential.
pub fn compute_normalisers(
    p: &ProductSystem,
    method: Method,
    tol: &Tolerances,
) -> Result<Vec<(usize, DVector<f64>)>, Error> {
    let targets: Vec<usize> = p
        .sccs()
        .iter()
        .enumerate()
        .filter(|(_, s)| s.recurrent && s.accepting)
        .map(|(k, _)| k)
        .collect();
    #[cfg(feature = "parallel")]
    let iter = targets.par_iter();
    #[cfg(not(feature = "parallel"))]
    let iter = targets.iter();
    iter.map(|&k| {
        compute_normaliser(p, &p.sccs()[k].members, method, tol).map(|mu| (k, mu))
    })
    .collect()
}

/// Stacks and solves the linear system: `(I − B)ζ = 0`, one normaliser row
/// `μ(D)⊤ζ_D = 1` per accepting recurrent SCC, and `ζ_D = 0` for
/// non-accepting recurrent SCCs. Returns `(z, ‖z − Bz‖∞, clamped)`.
pub fn assemble_and_solve(
    p: &ProductSystem,
    normalisers: &[(usize, DVector<f64>)],
    tol: &Tolerances,
) -> Result<(DVector<f64>, f64, usize), Error> {
    let n = p.size();
    let zero_rows: Vec<usize> = p
        .sccs()
        .iter()
        .filter(|s| s.recurrent && !s.accepting)
        .flat_map(|s| s.members.iter().copied())
        .collect();
    let m = n + normalisers.len() + zero_rows.len();
    let mut a = DMatrix::zeros(m, n);
    let mut b = DVector::zeros(m);
    for i in 0..n {
        a[(i, i)] = 1.0;
        for &(j, w) in p.row(i) {
            a[(i, j)] -= w;
        }
    }
    for (r, (k, mu)) in normalisers.iter().enumerate() {
        let row = n + r;
        for (l, &g) in p.sccs()[*k].members.iter().enumerate() {
            a[(row, g)] = mu[l];
        }
        b[row] = 1.0;
    }
    for (r, &g) in zero_rows.iter().enumerate() {
        a[(n + normalisers.len() + r, g)] = 1.0;
    }
    let (mut z, _) = numerics::solve_least_squares(&a, &b);
    let residual = numerics::inf_norm(&(&z - apply_b(p, &z)));
    if residual > tol.residual {
        return Err(Error::Numerical(format!(
            "fixed-point residual {residual:.3e} exceeds tolerance {:.3e}",
            tol.residual
        )));
    }
    for (k, mu) in normalisers {
        let dot: f64 = p.sccs()[*k]
            .members
            .iter()
            .zip(mu.iter())
            .map(|(&g, &m)| m * z[g])
            .sum();
        if (dot - 1.0).abs() > tol.residual {
            return Err(Error::Numerical(format!(
                "normaliser row violated: μ⊤z = {dot}"
            )));
        }
    }
    let mut clamped = 0;
    for x in z.iter_mut() {
        if *x < 0.0 {
            if *x < -tol.residual {
                return Err(Error::Numerical(format!("z component {x} below 0")));
            }
            *x = 0.0;
            clamped += 1;
        } else if *x > 1.0 {
            if *x > 1.0 + tol.residual {
                return Err(Error::Numerical(format!("z component {x} above 1")));
            }
            *x = 1.0;
            clamped += 1;
        }
    }
    Ok((z, residual, clamped))
}

/// `B·z` via the sparse rows.
fn apply_b(p: &ProductSystem, z: &DVector<f64>) -> DVector<f64> {
    let mut out = DVector::zeros(p.size());
    for i in 0..p.size() {
        for &(j, w) in p.row(i) {
            out[i] += w * z[j];
        }
    }
    out
}

/// Full pipeline; also returns the analysed product so callers can perform
/// further checks against `B`.
pub fn model_check_full(
    a: &BuchiAutomaton,
    m: &MarkovChain,
    iota: &InitialDistribution,
    method: Method,
    tol: &Tolerances,
) -> Result<(ProductSystem, ModelCheckResult), Error> {
    if a.alphabet() != m.state_names() {
        return Err(Error::Invalid(
            "automaton alphabet does not match chain state list (order-sensitive)".into(),
        ));
    }
    let mut timings = BTreeMap::new();
    let start = Instant::now();
    a.verify_unambiguous().check()?;
    let mut mark = lap(&mut timings, "verify_ms", start);

    let norm = a.normalise();
    mark = lap(&mut timings, "normalise_ms", mark);

    let p = analyse(&norm, m, tol)?;
    mark = lap(&mut timings, "product_ms", mark);

    let (z, residual, clamped, normalisers) = match method {
        Method::Both => {
            let cut_n = compute_normalisers(&p, Method::Cut, tol)?;
            let pseudo_n = compute_normalisers(&p, Method::Pseudo, tol)?;
            mark = lap(&mut timings, "normalisers_ms", mark);
            let (z_cut, _, _) = assemble_and_solve(&p, &cut_n, tol)?;
            let (z, residual, clamped) = assemble_and_solve(&p, &pseudo_n, tol)?;
            let delta = numerics::inf_norm(&(&z - &z_cut));
            if delta > tol.agreement {
                return Err(Error::Numerical(format!(
                    "cut and pseudo-cut methods disagree: ‖z_cut − z_pseudo‖∞ = {delta:.3e}"
                )));
            }
            (z, residual, clamped, pseudo_n)
        }
        single => {
            let ns = compute_normalisers(&p, single, tol)?;
            mark = lap(&mut timings, "normalisers_ms", mark);
            let (z, residual, clamped) = assemble_and_solve(&p, &ns, tol)?;
            (z, residual, clamped, ns)
        }
    };
    lap(&mut timings, "solve_ms", mark);

    let mut probability = 0.0;
    for &q in norm.initial() {
        for s in 0..m.n_states() {
            probability += iota.weight(s) * z[p.index(q, s)];
        }
    }
    probability = probability.clamp(0.0, 1.0);

    let mut normaliser_of: BTreeMap<usize, &DVector<f64>> = BTreeMap::new();
    let mut normaliser_residuals = Vec::new();
    for (k, mu) in &normalisers {
        normaliser_of.insert(*k, mu);
        let dot: f64 = p.sccs()[*k]
            .members
            .iter()
            .zip(mu.iter())
            .map(|(&g, &m)| m * z[g])
            .sum();
        normaliser_residuals.push((dot - 1.0).abs());
    }
    let sccs = p
        .sccs()
        .iter()
        .enumerate()
        .map(|(k, scc)| SccReport {
            states: scc.members.iter().map(|&g| p.state_label(g)).collect(),
            recurrent: scc.recurrent,
            accepting: scc.accepting,
            normaliser: normaliser_of.get(&k).map(|mu| mu.iter().copied().collect()),
        })
        .collect();

    let result = ModelCheckResult {
        probability,
        method: method.name().to_string(),
        residual,
        normaliser_residuals,
        z: z.iter().copied().collect(),
        sccs,
        timings_ms: timings,
        clamped,
    };
    Ok((p, result))
}

/// Computes `Pr_ι^M(L(A))` for an unambiguous Büchi automaton.
pub fn model_check(
    a: &BuchiAutomaton,
    m: &MarkovChain,
    iota: &InitialDistribution,
    method: Method,
    tol: &Tolerances,
) -> Result<ModelCheckResult, Error> {
    model_check_full(a, m, iota, method, tol).map(|(_, r)| r)
}

fn lap(timings: &mut BTreeMap<String, f64>, stage: &str, since: Instant) -> Instant {
    let now = Instant::now();
    timings.insert(stage.to_string(), now.duration_since(since).as_secs_f64() * 1e3);
    now
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::testdata;

    fn fig() -> (BuchiAutomaton, MarkovChain, InitialDistribution) {
        let a = testdata::example_automaton();
        let (m, iota) = testdata::example_chain();
        (a, m, iota)
    }

    #[test]
    fn running_example_probability_both_methods() {
        let (a, m, iota) = fig();
        let tol = Tolerances::default();
        for method in [Method::Cut, Method::Pseudo, Method::Both] {
            let r = model_check(&a, &m, &iota, method, &tol).unwrap();
            assert!(
                (r.probability - 1.0 / 3.0).abs() < 1e-9,
                "{}: got {}",
                method.name(),
                r.probability
            );
            assert!(r.residual <= tol.residual);
        }
    }

    #[test]
    fn running_example_z_vector() {
        let (a, m, iota) = fig();
        let tol = Tolerances::default();
        let (p, r) = model_check_full(&a, &m, &iota, Method::Both, &tol).unwrap();
        let expect = [
            (p.index(0, 0), 2.0 / 3.0),
            (p.index(1, 0), 1.0 / 3.0),
            (p.index(1, 1), 1.0),
            (p.index(2, 0), 1.0 / 3.0),
            (p.index(2, 1), 1.0),
            (p.index(3, 0), 2.0 / 3.0),
            (p.index(0, 1), 0.0),
            (p.index(3, 1), 0.0),
        ];
        for (g, v) in expect {
            assert!((r.z[g] - v).abs() < 1e-9, "z[{g}] = {} != {v}", r.z[g]);
        }
    }

    #[test]
    fn empty_acceptance_set_gives_zero() {
        let a = crate::automata::parse_automaton(
            r#"{"states":["q"],"alphabet":["a","b"],"initial":["q"],"accepting":[],
                "transitions":[{"from":"q","label":"a","to":["q"]},
                               {"from":"q","label":"b","to":["q"]}]}"#,
        )
        .unwrap();
        let (m, iota) = testdata::example_chain();
        let r = model_check(&a, &m, &iota, Method::Both, &Tolerances::default()).unwrap();
        assert_eq!(r.probability, 0.0);
        assert!(r.z.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn accept_everything_gives_one() {
        let a = crate::automata::parse_automaton(
            r#"{"states":["q"],"alphabet":["x"],"initial":["q"],"accepting":["q"],
                "transitions":[{"from":"q","label":"x","to":["q"]}]}"#,
        )
        .unwrap();
        let m = MarkovChain::new(
            vec!["x".into()],
            vec![vec![1.0]],
            &Tolerances::default(),
        )
        .unwrap();
        let iota = InitialDistribution::uniform(1);
        let r = model_check(&a, &m, &iota, Method::Both, &Tolerances::default()).unwrap();
        assert!((r.probability - 1.0).abs() < 1e-12);
        assert!(r.z.iter().all(|&x| (x - 1.0).abs() < 1e-9));
    }

    #[test]
    fn ambiguous_input_rejected() {
        let a = crate::automata::parse_automaton(
            r#"{"states":["p","q"],"alphabet":["a"],"initial":["p","q"],"accepting":["p","q"],
                "transitions":[{"from":"p","label":"a","to":["p"]},
                               {"from":"q","label":"a","to":["q"]}]}"#,
        )
        .unwrap();
        let m = MarkovChain::new(vec!["a".into()], vec![vec![1.0]], &Tolerances::default()).unwrap();
        let iota = InitialDistribution::uniform(1);
        let err = model_check(&a, &m, &iota, Method::Both, &Tolerances::default()).unwrap_err();
        assert!(matches!(err, Error::Ambiguous(..)));
    }

    #[test]
    fn alphabet_mismatch_rejected() {
        let (a, _, _) = fig();
        let m = MarkovChain::uniform(vec!["x".into(), "y".into()]);
        let iota = InitialDistribution::uniform(2);
        let err = model_check(&a, &m, &iota, Method::Pseudo, &Tolerances::default()).unwrap_err();
        assert!(matches!(err, Error::Invalid(_)));
    }

    #[test]
    fn result_serialises_with_expected_keys() {
        let (a, m, iota) = fig();
        let r = model_check(&a, &m, &iota, Method::Pseudo, &Tolerances::default()).unwrap();
        let json: serde_json::Value = serde_json::to_value(&r).unwrap();
        for key in ["probability", "method", "residual", "sccs", "timings_ms"] {
            assert!(json.get(key).is_some(), "missing key {key}");
        }
        assert_eq!(json["sccs"].as_array().unwrap().len(), 3);
    }
}
