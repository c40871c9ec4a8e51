//! Finite discrete-time Markov chains and initial distributions.

use serde::Deserialize;

use crate::{Error, Tolerances};

/// A finite-state Markov chain with a dense row-stochastic matrix. The
/// declared state order defines the total order used for tie-breaking in the
/// basis worklist. Immutable after construction.
#[derive(Clone, Debug)]
pub struct MarkovChain {
    states: Vec<String>,
    matrix: Vec<Vec<f64>>,
    succs: Vec<Vec<usize>>,
    preds: Vec<Vec<usize>>,
}

/// An initial distribution over the chain states.
#[derive(Clone, Debug)]
pub struct InitialDistribution {
    weights: Vec<f64>,
}

#[derive(Deserialize)]
struct ChainDoc {
    states: Vec<String>,
    matrix: Vec<Vec<f64>>,
    initial: Vec<f64>,
}

/// Parses and validates the chain JSON schema.
pub fn parse_chain(text: &str) -> Result<(MarkovChain, InitialDistribution), Error> {
    let doc: ChainDoc =
        serde_json::from_str(text).map_err(|e| Error::Parse(format!("malformed JSON: {e}")))?;
    let tol = Tolerances::default();
    let chain = MarkovChain::new(doc.states, doc.matrix, &tol)?;
    let iota = InitialDistribution::new(doc.initial, &tol)?;
    if iota.weights.len() != chain.n_states() {
        return Err(Error::Invalid(
            "initial distribution length does not match state count".into(),
        ));
    }
    Ok((chain, iota))
}

impl MarkovChain {
    pub fn new(states: Vec<String>, matrix: Vec<Vec<f64>>, tol: &Tolerances) -> Result<Self, Error> {
        let n = states.len();
        if matrix.len() != n {
            return Err(Error::Invalid("matrix row count does not match states".into()));
        }
        for (i, row) in matrix.iter().enumerate() {
            if row.len() != n {
                return Err(Error::Invalid(format!("row {i} has wrong length")));
            }
            let mut sum = 0.0;
            for &p in row {
                if p < 0.0 {
                    return Err(Error::Invalid(format!("negative entry in row {i}")));
                }
                if p > 1.0 + tol.stochastic {
                    return Err(Error::Invalid(format!("entry > 1 in row {i}")));
                }
                sum += p;
            }
            if (sum - 1.0).abs() > tol.stochastic {
                return Err(Error::Invalid(format!(
                    "row {i} sums to {sum}, not 1 within {}",
                    tol.stochastic
                )));
            }
        }
        let succs: Vec<Vec<usize>> = matrix
            .iter()
            .map(|row| (0..n).filter(|&t| row[t] > 0.0).collect())
            .collect();
        let preds: Vec<Vec<usize>> = (0..n)
            .map(|t| (0..n).filter(|&s| matrix[s][t] > 0.0).collect())
            .collect();
        Ok(MarkovChain {
            states,
            matrix,
            succs,
            preds,
        })
    }

    /// Uniform chain over the given states: every entry `1/|S|`.
    pub fn uniform(states: Vec<String>) -> Self {
        let n = states.len();
        let p = 1.0 / n as f64;
        MarkovChain::new(states, vec![vec![p; n]; n], &Tolerances::default()).unwrap()
    }

    pub fn n_states(&self) -> usize {
        self.states.len()
    }

    pub fn state_names(&self) -> &[String] {
        &self.states
    }

    pub fn prob(&self, s: usize, t: usize) -> f64 {
        self.matrix[s][t]
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.matrix[s]
    }

    /// Successors of `s` in the graph of `M`.
    pub fn successors(&self, s: usize) -> &[usize] {
        &self.succs[s]
    }

    /// `E(t)`: the edges of `M` that end in `t`, as their source states.
    pub fn incoming_edges(&self, t: usize) -> Result<&[usize], Error> {
        self.preds
            .get(t)
            .map(|v| v.as_slice())
            .ok_or_else(|| Error::Invalid(format!("unknown chain state index {t}")))
    }

    /// Total number of edges |E|.
    pub fn edge_count(&self) -> usize {
        self.succs.iter().map(|s| s.len()).sum()
    }
}

impl InitialDistribution {
    pub fn new(weights: Vec<f64>, tol: &Tolerances) -> Result<Self, Error> {
        if weights.iter().any(|&w| w < 0.0) {
            return Err(Error::Invalid("negative weight in initial distribution".into()));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > tol.stochastic {
            return Err(Error::Invalid(format!(
                "initial distribution sums to {sum}, not 1"
            )));
        }
        Ok(InitialDistribution { weights })
    }

    pub fn uniform(n: usize) -> Self {
        InitialDistribution {
            weights: vec![1.0 / n as f64; n],
        }
    }

    pub fn weight(&self, s: usize) -> f64 {
        self.weights[s]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::testdata;

    #[test]
    fn parse_example_chain() {
        let (m, iota) = testdata::example_chain();
        assert_eq!(m.n_states(), 2);
        assert_eq!(m.edge_count(), 4);
        assert_eq!(iota.weight(0), 0.5);
    }

    #[test]
    fn identity_chain_has_self_edges_only() {
        let m = MarkovChain::new(
            vec!["a".into(), "b".into()],
            vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            &Tolerances::default(),
        )
        .unwrap();
        assert_eq!(m.edge_count(), 2);
        assert_eq!(m.incoming_edges(0).unwrap(), &[0]);
    }

    #[test]
    fn rejects_non_stochastic_row() {
        let err = parse_chain(
            r#"{"states":["a","b"],"matrix":[[0.5,0.6],[0.5,0.5]],"initial":[0.5,0.5]}"#,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Invalid(_)));
    }

    #[test]
    fn rejects_negative_entry() {
        let err = parse_chain(
            r#"{"states":["a","b"],"matrix":[[-0.5,1.5],[0.5,0.5]],"initial":[0.5,0.5]}"#,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Invalid(_)));
    }

    #[test]
    fn rejects_bad_distribution() {
        let err = parse_chain(
            r#"{"states":["a","b"],"matrix":[[0.5,0.5],[0.5,0.5]],"initial":[0.9,0.3]}"#,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Invalid(_)));
    }

    #[test]
    fn incoming_edges_example_chain() {
        let (m, _) = testdata::example_chain();
        assert_eq!(m.incoming_edges(0).unwrap(), &[0, 1]);
        assert!(m.incoming_edges(5).is_err());
    }

    #[test]
    fn zero_column_has_no_incoming() {
        let m = MarkovChain::new(
            vec!["a".into(), "b".into()],
            vec![vec![1.0, 0.0], vec![1.0, 0.0]],
            &Tolerances::default(),
        )
        .unwrap();
        assert!(m.incoming_edges(1).unwrap().is_empty());
    }
}
