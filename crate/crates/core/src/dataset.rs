//! Transition datasets: the unit handed to the regression oracles.
//!
//! Raw tuples are kept for CSV dump/load and provenance; the regression code
//! works from `CellStats` (per-(h,s,a) counts, reward sums, and next-state
//! counts), which are sufficient statistics for tabular least squares and can
//! be maintained incrementally at O(1) per transition.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::Trajectory;

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
pub struct Transition {
    pub state: usize,
    pub action: usize,
    pub reward: f64,
    pub next_state: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct TransitionDataset {
    pub num_states: usize,
    pub num_actions: usize,
    pub horizon: usize,
    /// steps[h-1] holds the tuples observed at step h.
    pub steps: Vec<Vec<Transition>>,
}

impl TransitionDataset {
    pub fn new(num_states: usize, num_actions: usize, horizon: usize) -> Self {
        TransitionDataset { num_states, num_actions, horizon, steps: vec![Vec::new(); horizon] }
    }

    pub fn push(&mut self, h: usize, t: Transition) {
        self.steps[h - 1].push(t);
    }

    pub fn push_trajectory(&mut self, traj: &Trajectory) {
        for s in &traj.steps {
            self.push(
                s.h,
                Transition {
                    state: s.state,
                    action: s.action,
                    reward: s.reward,
                    next_state: s.next_state,
                },
            );
        }
    }

    pub fn len(&self) -> usize {
        self.steps.iter().map(|v| v.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn extend(&mut self, other: &TransitionDataset) {
        for (h, tuples) in other.steps.iter().enumerate() {
            self.steps[h].extend_from_slice(tuples);
        }
    }

    pub fn cell_stats(&self) -> CellStats {
        let mut stats = CellStats::new(self.num_states, self.num_actions, self.horizon);
        for (h0, tuples) in self.steps.iter().enumerate() {
            for t in tuples {
                stats.add(h0 + 1, t.state, t.action, t.reward, t.next_state);
            }
        }
        stats
    }

    /// Columns (h, s, a, r, s_next); header row mandatory. Floats use Rust's
    /// shortest round-trip formatting, so dump/load is value-exact.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("h,s,a,r,s_next\n");
        for (h0, tuples) in self.steps.iter().enumerate() {
            for t in tuples {
                out.push_str(&format!(
                    "{},{},{},{},{}\n",
                    h0 + 1,
                    t.state,
                    t.action,
                    t.reward,
                    t.next_state
                ));
            }
        }
        out
    }

    /// Parse the CSV form; dimensions are inferred as max index + 1.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        match lines.next() {
            Some(header) if header.trim() == "h,s,a,r,s_next" => {}
            other => {
                return Err(Error::Config(format!(
                    "dataset CSV must start with header 'h,s,a,r,s_next', got {other:?}"
                )))
            }
        }
        let mut rows: Vec<(usize, Transition)> = Vec::new();
        let (mut max_h, mut max_s, mut max_a) = (0usize, 0usize, 0usize);
        for (i, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 5 {
                return Err(Error::Config(format!("dataset CSV row {}: expected 5 fields", i + 2)));
            }
            let parse_usize = |f: &str, what: &str| {
                f.trim().parse::<usize>().map_err(|_| {
                    Error::Config(format!("dataset CSV row {}: bad {what} '{f}'", i + 2))
                })
            };
            let h = parse_usize(fields[0], "h")?;
            let s = parse_usize(fields[1], "s")?;
            let a = parse_usize(fields[2], "a")?;
            let r = fields[3]
                .trim()
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("dataset CSV row {}: bad r", i + 2)))?;
            let sn = parse_usize(fields[4], "s_next")?;
            if h == 0 {
                return Err(Error::Config(format!("dataset CSV row {}: h must be >= 1", i + 2)));
            }
            max_h = max_h.max(h);
            max_s = max_s.max(s.max(sn));
            max_a = max_a.max(a);
            rows.push((h, Transition { state: s, action: a, reward: r, next_state: sn }));
        }
        let mut ds = TransitionDataset::new(max_s + 1, max_a + 1, max_h.max(1));
        for (h, t) in rows {
            ds.push(h, t);
        }
        Ok(ds)
    }
}

/// Sufficient statistics for tabular regression, maintained incrementally.
#[derive(Clone, Debug)]
pub struct CellStats {
    pub num_states: usize,
    pub num_actions: usize,
    pub horizon: usize,
    /// n[h][s][a]: sample count per cell.
    pub n: Vec<Vec<Vec<u64>>>,
    /// sum_r[h][s][a]: summed observed rewards.
    pub sum_r: Vec<Vec<Vec<f64>>>,
    /// next[h][s][a][s']: observed next-state counts.
    pub next: Vec<Vec<Vec<Vec<u64>>>>,
}

impl CellStats {
    pub fn new(num_states: usize, num_actions: usize, horizon: usize) -> Self {
        CellStats {
            num_states,
            num_actions,
            horizon,
            n: vec![vec![vec![0; num_actions]; num_states]; horizon],
            sum_r: vec![vec![vec![0.0; num_actions]; num_states]; horizon],
            next: vec![vec![vec![vec![0; num_states]; num_actions]; num_states]; horizon],
        }
    }

    pub fn add(&mut self, h: usize, s: usize, a: usize, r: f64, next_state: usize) {
        self.n[h - 1][s][a] += 1;
        self.sum_r[h - 1][s][a] += r;
        self.next[h - 1][s][a][next_state] += 1;
    }

    pub fn add_trajectory(&mut self, traj: &Trajectory) {
        for st in &traj.steps {
            self.add(st.h, st.state, st.action, st.reward, st.next_state);
        }
    }

    pub fn step_total(&self, h: usize) -> u64 {
        self.n[h - 1].iter().flatten().sum()
    }

    pub fn total(&self) -> u64 {
        (1..=self.horizon).map(|h| self.step_total(h)).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip() {
        let mut ds = TransitionDataset::new(2, 2, 3);
        ds.push(1, Transition { state: 0, action: 1, reward: 0.5546875, next_state: 1 });
        ds.push(3, Transition { state: 1, action: 0, reward: 1.0 / 3.0, next_state: 0 });
        let text = ds.to_csv();
        assert!(text.starts_with("h,s,a,r,s_next\n"));
        let back = TransitionDataset::from_csv(&text).unwrap();
        assert_eq!(back.steps[0], ds.steps[0]);
        assert_eq!(back.steps[2], ds.steps[2]);
        assert_eq!(back.to_csv(), text);
    }

    #[test]
    fn csv_requires_header() {
        assert!(TransitionDataset::from_csv("1,0,0,0.5,1\n").is_err());
    }

    #[test]
    fn stats_match_dataset() {
        let mut ds = TransitionDataset::new(2, 2, 2);
        ds.push(1, Transition { state: 0, action: 0, reward: 0.25, next_state: 1 });
        ds.push(1, Transition { state: 0, action: 0, reward: 0.75, next_state: 1 });
        ds.push(2, Transition { state: 1, action: 1, reward: 0.0, next_state: 0 });
        let stats = ds.cell_stats();
        assert_eq!(stats.n[0][0][0], 2);
        assert_eq!(stats.sum_r[0][0][0], 1.0);
        assert_eq!(stats.next[0][0][0][1], 2);
        assert_eq!(stats.step_total(2), 1);
        assert_eq!(stats.total(), 3);
    }
}
