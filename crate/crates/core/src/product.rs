//! The product matrix `B` over `Q × S`, its SCC decomposition, and the
//! recurrent/accepting classification with dominant eigenvectors.

use nalgebra::{DMatrix, DVector};

use crate::automata::{tarjan, BuchiAutomaton};
use crate::markov::MarkovChain;
use crate::numerics;
use crate::{Error, Tolerances};

/// One SCC of `B`, with members in canonical (ascending product-index)
/// order. Flags are populated by [`ProductSystem::classify_all`].
#[derive(Clone, Debug)]
pub struct Scc {
    pub members: Vec<usize>,
    pub recurrent: bool,
    pub accepting: bool,
}

/// The sparse matrix `B`: entry `M_{s,s'}` at `(⟨q,s⟩, ⟨q',s'⟩)` whenever
/// `q' ∈ δ(q,s)` and `M_{s,s'} > 0`. Product state `⟨q,s⟩` has dense index
/// `q·|S| + s`. Immutable once classified; per-SCC operations are
/// independent and safe to run concurrently.
#[derive(Clone, Debug)]
pub struct ProductSystem {
    automaton: BuchiAutomaton,
    chain: MarkovChain,
    n: usize,
    rows: Vec<Vec<(usize, f64)>>,
    preds: Vec<Vec<usize>>,
    sccs: Vec<Scc>,
}

/// Builds `B` (matrix only; SCCs are computed separately).
pub fn build_product(a: &BuchiAutomaton, m: &MarkovChain) -> Result<ProductSystem, Error> {
    if a.alphabet() != m.state_names() {
        return Err(Error::Invalid(
            "automaton alphabet does not match chain state list (order-sensitive)".into(),
        ));
    }
    let nq = a.n_states();
    let ns = m.n_states();
    let n = nq * ns;
    let mut rows = vec![Vec::new(); n];
    let mut preds = vec![Vec::new(); n];
    for q in 0..nq {
        for s in 0..ns {
            let from = q * ns + s;
            for &q2 in a.targets(q, s) {
                for &s2 in m.successors(s) {
                    let to = q2 * ns + s2;
                    rows[from].push((to, m.prob(s, s2)));
                    preds[to].push(from);
                }
            }
        }
    }
    for row in &mut rows {
        row.sort_unstable_by_key(|&(j, _)| j);
    }
    for col in &mut preds {
        col.sort_unstable();
    }
    Ok(ProductSystem {
        automaton: a.clone(),
        chain: m.clone(),
        n,
        rows,
        preds,
        sccs: Vec::new(),
    })
}

impl ProductSystem {
    pub fn automaton(&self) -> &BuchiAutomaton {
        &self.automaton
    }

    pub fn chain(&self) -> &MarkovChain {
        &self.chain
    }

    /// Number of product states `|Q||S|`.
    pub fn size(&self) -> usize {
        self.n
    }

    pub fn rows(&self) -> &[Vec<(usize, f64)>] {
        &self.rows
    }

    /// Sparse row of `B` at product state `i`.
    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    /// Predecessor product states of `i` in the graph of `B`.
    pub fn predecessors(&self, i: usize) -> &[usize] {
        &self.preds[i]
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(|r| r.len()).sum()
    }

    /// Decomposes the automaton part / chain part of a product index.
    pub fn split(&self, i: usize) -> (usize, usize) {
        let ns = self.chain.n_states();
        (i / ns, i % ns)
    }

    pub fn index(&self, q: usize, s: usize) -> usize {
        q * self.chain.n_states() + s
    }

    pub fn state_label(&self, i: usize) -> String {
        let (q, s) = self.split(i);
        format!(
            "<{},{}>",
            self.automaton.state_names()[q],
            self.chain.state_names()[s]
        )
    }

    /// Computes the SCCs of `B`, sinks first (each SCC precedes every SCC
    /// that can reach it). Flags are left false until classification.
    pub fn compute_sccs(&mut self) -> &[Scc] {
        let adj: Vec<Vec<usize>> = self
            .rows
            .iter()
            .map(|row| row.iter().map(|&(j, _)| j).collect())
            .collect();
        self.sccs = tarjan(&adj)
            .into_iter()
            .map(|members| Scc {
                members,
                recurrent: false,
                accepting: false,
            })
            .collect();
        &self.sccs
    }

    pub fn sccs(&self) -> &[Scc] {
        &self.sccs
    }

    /// Dense copy of the submatrix `B_{D,D}` in canonical member order.
    pub fn submatrix(&self, members: &[usize]) -> DMatrix<f64> {
        let k = members.len();
        let local: std::collections::HashMap<usize, usize> =
            members.iter().enumerate().map(|(i, &g)| (g, i)).collect();
        let mut b = DMatrix::zeros(k, k);
        for (i, &g) in members.iter().enumerate() {
            for &(j, w) in &self.rows[g] {
                if let Some(&lj) = local.get(&j) {
                    b[(i, lj)] = w;
                }
            }
        }
        b
    }

    /// Classifies one SCC: recurrent iff `I − B_{D,D}` is rank-deficient,
    /// accepting iff the SCC contains a product state with accepting
    /// automaton part.
    pub fn classify_scc(&self, members: &[usize], tol: &Tolerances) -> Result<(bool, bool), Error> {
        let accepting = members
            .iter()
            .any(|&g| self.automaton.is_accepting(self.split(g).0));
        if members.len() == 1 {
            // Singleton: recurrent iff it carries a self-loop of weight 1.
            let g = members[0];
            let w = self
                .rows[g]
                .iter()
                .find(|&&(j, _)| j == g)
                .map(|&(_, w)| w)
                .unwrap_or(0.0);
            let threshold = tol.rank * (1.0 + w.abs());
            let gap = (1.0 - w).abs();
            if gap >= threshold / 10.0 && gap <= threshold * 10.0 {
                return Err(Error::Numerical(format!(
                    "recurrence decision ambiguous for singleton SCC (gap {gap:.3e})"
                )));
            }
            return Ok((gap < threshold, accepting));
        }
        let b = self.submatrix(members);
        let i_minus_b = DMatrix::identity(members.len(), members.len()) - &b;
        let (rank, _) = numerics::rank_and_nullspace(&i_minus_b, tol)?;
        Ok((rank < members.len(), accepting))
    }

    /// Classifies every SCC in place.
    pub fn classify_all(&mut self, tol: &Tolerances) -> Result<(), Error> {
        let flags: Vec<(bool, bool)> = self
            .sccs
            .iter()
            .map(|scc| self.classify_scc(&scc.members, tol))
            .collect::<Result<_, _>>()?;
        for (scc, (rec, acc)) in self.sccs.iter_mut().zip(flags) {
            scc.recurrent = rec;
            scc.accepting = acc;
        }
        Ok(())
    }

    /// Strictly positive dominant eigenvector of `B_{D,D}` with eigenvalue
    /// 1, normalised to `‖y‖∞ = 1`.
    ///
    /// Since `D` is an SCC, `B_{D,D}` is irreducible and the Perron
    /// eigenvector is simple, so `(B − I)y = 0` together with the
    /// normalisation `Σy = 1` has a unique solution; replacing one row of
    /// `B − I` with the normalisation makes the system square and is solved
    /// by LU. A nullspace solve is the (rare) fallback.
    pub fn dominant_eigenvector(
        &self,
        members: &[usize],
        tol: &Tolerances,
    ) -> Result<DVector<f64>, Error> {
        let k = members.len();
        let b = self.submatrix(members);
        let mut sys = &b - DMatrix::identity(k, k);
        sys.row_mut(0).fill(1.0);
        let mut rhs = DVector::zeros(k);
        rhs[0] = 1.0;
        if let Some(mut y) = sys.lu().solve(&rhs) {
            let scale = numerics::inf_norm(&y);
            if scale > 0.0 {
                y /= scale;
                let residual = numerics::inf_norm(&(&b * &y - &y));
                if residual <= 1e-11 && y.iter().all(|&x| x > tol.positivity) {
                    return Ok(y);
                }
            }
        }
        let shifted = &b - DMatrix::identity(k, k);
        let (_, nullspace) = numerics::rank_and_nullspace(&shifted, tol)?;
        if nullspace.len() != 1 {
            return Err(Error::Numerical(format!(
                "dominant eigenspace has dimension {} (expected 1)",
                nullspace.len()
            )));
        }
        let mut y = nullspace.into_iter().next().unwrap();
        let max_abs = numerics::inf_norm(&y);
        if max_abs == 0.0 {
            return Err(Error::Numerical("zero vector in nullspace".into()));
        }
        // Sign-fix so the dominant component is positive, then scale.
        let sign = y.iter().fold(0.0f64, |acc, &x| {
            if acc == 0.0 && x.abs() == max_abs {
                x.signum()
            } else {
                acc
            }
        });
        y *= sign / max_abs;
        if y.iter().any(|&x| x <= tol.positivity) {
            return Err(Error::Numerical(
                "dominant eigenvector is not strictly positive".into(),
            ));
        }
        let residual = numerics::inf_norm(&(&b * &y - &y));
        if residual > tol.residual * numerics::inf_norm(&y) {
            return Err(Error::Numerical(format!(
                "eigenvector residual {residual:.3e} exceeds tolerance"
            )));
        }
        Ok(y)
    }

    /// DOT-like diagnostic dump of `B` and its SCCs.
    pub fn to_dot(&self) -> String {
        use std::fmt::Write;
        let mut out = String::from("digraph B {\n");
        for (k, scc) in self.sccs.iter().enumerate() {
            writeln!(
                out,
                "  subgraph cluster_{k} {{ label=\"scc {k} recurrent={} accepting={}\";",
                scc.recurrent, scc.accepting
            )
            .unwrap();
            for &i in &scc.members {
                writeln!(out, "    \"{}\";", self.state_label(i)).unwrap();
            }
            out.push_str("  }\n");
        }
        for i in 0..self.n {
            for &(j, w) in &self.rows[i] {
                writeln!(
                    out,
                    "  \"{}\" -> \"{}\" [label=\"{w}\"];",
                    self.state_label(i),
                    self.state_label(j)
                )
                .unwrap();
            }
        }
        out.push_str("}\n");
        out
    }
}

/// Convenience: build, decompose and classify in one call.
pub fn analyse(
    a: &BuchiAutomaton,
    m: &MarkovChain,
    tol: &Tolerances,
) -> Result<ProductSystem, Error> {
    let mut p = build_product(a, m)?;
    p.compute_sccs();
    p.classify_all(tol)?;
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::testdata;

    fn running_example() -> ProductSystem {
        let a = testdata::example_automaton();
        let (m, _) = testdata::example_chain();
        analyse(&a, &m, &Tolerances::default()).unwrap()
    }

    #[test]
    fn product_matches_running_example() {
        let p = running_example();
        assert_eq!(p.size(), 8);
        // All weights are 1/2 and ⟨q0,b⟩, ⟨q3,b⟩ have no outgoing edges.
        for i in 0..p.size() {
            for &(_, w) in p.row(i) {
                assert_eq!(w, 0.5);
            }
        }
        let q0b = p.index(0, 1);
        let q3b = p.index(3, 1);
        assert!(p.row(q0b).is_empty());
        assert!(p.row(q3b).is_empty());
        // Nonzero count = Σ |δ(q,s)|·|succ(s)| = 8·2.
        assert_eq!(p.nnz(), 16);
    }

    #[test]
    fn alphabet_mismatch_rejected() {
        let a = testdata::example_automaton();
        let m = crate::markov::MarkovChain::uniform(vec!["x".into(), "y".into()]);
        assert!(build_product(&a, &m).is_err());
    }

    #[test]
    fn trivial_automaton_product_is_chain() {
        let a = crate::automata::parse_automaton(
            r#"{"states":["q"],"alphabet":["a","b"],"initial":["q"],"accepting":["q"],
                "transitions":[{"from":"q","label":"a","to":["q"]},
                               {"from":"q","label":"b","to":["q"]}]}"#,
        )
        .unwrap();
        let (m, _) = testdata::example_chain();
        let p = build_product(&a, &m).unwrap();
        assert_eq!(p.size(), 2);
        for s in 0..2 {
            for &(j, w) in p.row(s) {
                assert_eq!(w, m.prob(s, j));
            }
        }
    }

    #[test]
    fn sccs_of_running_example() {
        let p = running_example();
        let sccs = p.sccs();
        assert_eq!(sccs.len(), 3);
        // Sinks first: the two non-recurrent singletons precede D.
        assert_eq!(sccs[0].members, vec![p.index(0, 1)]);
        assert_eq!(sccs[1].members, vec![p.index(3, 1)]);
        assert_eq!(
            sccs[2].members,
            vec![
                p.index(0, 0),
                p.index(1, 0),
                p.index(1, 1),
                p.index(2, 0),
                p.index(2, 1),
                p.index(3, 0)
            ]
        );
        assert!(!sccs[0].recurrent && !sccs[1].recurrent);
        assert!(sccs[2].recurrent && sccs[2].accepting);
    }

    #[test]
    fn scc_order_has_no_forward_edges() {
        let p = running_example();
        let mut scc_of = vec![0usize; p.size()];
        for (k, scc) in p.sccs().iter().enumerate() {
            for &i in &scc.members {
                scc_of[i] = k;
            }
        }
        for i in 0..p.size() {
            for &(j, _) in p.row(i) {
                assert!(scc_of[i] >= scc_of[j], "edge from earlier SCC to later SCC");
            }
        }
    }

    #[test]
    fn dominant_eigenvector_running_example() {
        let p = running_example();
        let d = &p.sccs()[2].members.clone();
        let y = p.dominant_eigenvector(d, &Tolerances::default()).unwrap();
        let expected = [2.0, 1.0, 3.0, 1.0, 3.0, 2.0];
        let scale = y[0] / expected[0];
        for (yi, e) in y.iter().zip(expected) {
            assert!((yi - e * scale).abs() < 1e-9, "y not proportional to the reference vector");
        }
        assert!(y.iter().all(|&x| x > 0.0));
    }

    #[test]
    fn singleton_without_loop_not_recurrent() {
        let p = running_example();
        let (rec, acc) = p
            .classify_scc(&[p.index(0, 1)], &Tolerances::default())
            .unwrap();
        assert!(!rec);
        assert!(acc); // automaton part q0 is accepting
    }

    #[test]
    fn stochastic_block_is_recurrent() {
        // 1-state looping automaton over an identity chain: B = M stochastic.
        let a = crate::automata::parse_automaton(
            r#"{"states":["q"],"alphabet":["a","b"],"initial":["q"],"accepting":["q"],
                "transitions":[{"from":"q","label":"a","to":["q"]},
                               {"from":"q","label":"b","to":["q"]}]}"#,
        )
        .unwrap();
        let (m, _) = testdata::example_chain();
        let p = analyse(&a, &m, &Tolerances::default()).unwrap();
        assert_eq!(p.sccs().len(), 1);
        assert!(p.sccs()[0].recurrent);
        let y = p
            .dominant_eigenvector(&p.sccs()[0].members.clone(), &Tolerances::default())
            .unwrap();
        assert!((y[0] - y[1]).abs() < 1e-9);
    }
}
