//! Optional neighbour communication on a 1D grid.
//!
//! Agents are numbered `0..n` here; the neighbourhood of `i` is the closed
//! index interval `[max(0, i - n0), min(n - 1, i + n0)]`, self included.

use std::ops::RangeInclusive;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum CommGraph {
    /// Every agent uses its own values.
    #[default]
    None,
    Grid1d {
        n0: usize,
    },
}

impl CommGraph {
    pub fn neighbors(&self, n: usize, i: usize) -> Result<RangeInclusive<usize>> {
        if i >= n {
            return Err(Error::InvalidParameter(format!("agent index {i} out of range for n = {n}")));
        }
        Ok(match *self {
            CommGraph::None => i..=i,
            CommGraph::Grid1d { n0 } => i.saturating_sub(n0)..=(i.saturating_add(n0)).min(n - 1),
        })
    }

    /// Unweighted mean of `values` over the neighbourhood of `i`.
    pub fn average_neighborhood(&self, i: usize, values: &[f64]) -> Result<f64> {
        let range = self.neighbors(values.len(), i)?;
        Ok(shifted_mean(&values[range]))
    }

    /// Neighbourhood means for every agent.
    pub fn average_all(&self, values: &[f64]) -> Vec<f64> {
        let n = values.len();
        let mut whole: Option<f64> = None;
        (0..n)
            .map(|i| {
                let r = self.neighbors(n, i).expect("index in range");
                if *r.start() == 0 && *r.end() == n - 1 {
                    *whole.get_or_insert_with(|| shifted_mean(values))
                } else {
                    shifted_mean(&values[r])
                }
            })
            .collect()
    }
}

/// Mean taken relative to the first element, so equal inputs give back
/// exactly that value.
fn shifted_mean(values: &[f64]) -> f64 {
    let first = values[0];
    first + values.iter().map(|v| v - first).sum::<f64>() / values.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn neighbor_examples() {
        let g = CommGraph::Grid1d { n0: 2 };
        // one-based {3..7} for i = 5
        assert_eq!(g.neighbors(10, 4).unwrap(), 2..=6);
        assert_eq!(g.neighbors(10, 0).unwrap(), 0..=2);
        assert_eq!(g.neighbors(10, 9).unwrap(), 7..=9);
        let full = CommGraph::Grid1d { n0: 9 };
        for i in 0..10 {
            assert_eq!(full.neighbors(10, i).unwrap(), 0..=9);
        }
        assert!(g.neighbors(10, 10).is_err());
        assert_eq!(CommGraph::None.neighbors(10, 3).unwrap(), 3..=3);
    }

    #[test]
    fn symmetric_neighborhoods() {
        for n0 in 0..5 {
            let g = CommGraph::Grid1d { n0 };
            for i in 0..12 {
                for j in g.neighbors(12, i).unwrap() {
                    assert!(g.neighbors(12, j).unwrap().contains(&i));
                }
            }
        }
    }

    #[test]
    fn consensus_is_preserved_exactly() {
        for v in [0.1, 0.3, -7.77, 1e-300] {
            let values = vec![v; 11];
            for n0 in [0, 1, 3, 20] {
                assert!(CommGraph::Grid1d { n0 }.average_all(&values).iter().all(|&a| a == v));
            }
        }
    }

    #[test]
    fn average_examples() {
        let g = CommGraph::Grid1d { n0: 1 };
        assert_eq!(g.average_neighborhood(1, &[1.0, 2.0, 3.0]).unwrap(), 2.0);
        let flat = [0.3; 7];
        assert!(CommGraph::Grid1d { n0: 2 }.average_all(&flat).iter().all(|&v| v == 0.3));
        assert_eq!(CommGraph::None.average_all(&[1.0, 5.0]), vec![1.0, 5.0]);
    }

    #[test]
    fn full_graph_gives_identical_means() {
        let values: Vec<f64> = (0..17).map(|i| (i as f64 * 0.731).sin()).collect();
        let out = CommGraph::Grid1d { n0: 16 }.average_all(&values);
        assert!(out.iter().all(|&v| v.to_bits() == out[0].to_bits()));
    }

    #[test]
    fn bulk_matches_single() {
        let values: Vec<f64> = (0..23).map(|i| (i as f64).cos()).collect();
        let g = CommGraph::Grid1d { n0: 3 };
        let bulk = g.average_all(&values);
        for (i, v) in bulk.iter().enumerate() {
            assert!((v - g.average_neighborhood(i, &values).unwrap()).abs() < 1e-15);
        }
    }
}
