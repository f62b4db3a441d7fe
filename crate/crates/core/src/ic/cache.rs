use std::collections::HashMap;
use std::sync::Mutex;

use super::{solve_ic, InfluenceCurve, Neighborhood, RiskReport, SolverConfig};
use crate::error::Result;
use crate::family::Model;

type Key = (String, Vec<u64>, u64, Neighborhood);

/// Solved curves keyed by the exact bits of `(family, θ, r, neighborhood)`.
///
/// Safe for concurrent use; a racing pair of misses solves twice and keeps the
/// first result.
#[derive(Debug, Default)]
pub struct IcCache {
    map: Mutex<HashMap<Key, (InfluenceCurve, RiskReport)>>,
}

impl IcCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.map.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn solve(
        &self,
        family: &Model,
        theta: &[f64],
        r: f64,
        neighborhood: Neighborhood,
        config: &SolverConfig,
    ) -> Result<(InfluenceCurve, RiskReport)> {
        // Debug output distinguishes configured families sharing a name
        let key: Key = (
            format!("{family:?}"),
            theta.iter().map(|t| t.to_bits()).collect(),
            r.to_bits(),
            neighborhood,
        );
        if let Some(hit) = self.map.lock().unwrap().get(&key) {
            return Ok(hit.clone());
        }
        let solved = solve_ic(family, theta, r, neighborhood, config)?;
        Ok(self.map.lock().unwrap().entry(key).or_insert(solved).clone())
    }
}
