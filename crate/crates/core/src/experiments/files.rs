//! On-disk formats for models and feature matrices.
//!
//! A model file is TOML:
//!
//! ```toml
//! discount = 0.9
//! reward_range = "unit"          # optional, "unit" or "arbitrary"
//! rewards = [[1.0, 1.0], [0.0, 0.0]]            # rewards[s][a]
//! transitions = [[[1.0, 0.0], [0.0, 1.0]],      # transitions[s][a][s']
//!                [[1.0, 0.0], [0.0, 1.0]]]
//! ```
//!
//! A feature file is plain text: the first non-comment line holds `d`, then one
//! whitespace-separated row of `d` numbers per state. `#` starts a comment.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linear_fa::FeatureSystem;
use crate::mdp::{Mdp, RewardRange};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MdpFile {
    pub discount: f64,
    #[serde(default)]
    pub reward_range: Option<RewardRange>,
    pub rewards: Vec<Vec<f64>>,
    pub transitions: Vec<Vec<Vec<f64>>>,
}

impl MdpFile {
    pub fn into_mdp(self) -> Result<Mdp> {
        let num_states = self.rewards.len();
        let num_actions = self.rewards.first().map_or(0, Vec::len);
        if self.transitions.len() != num_states {
            return Err(Error::Parse(format!(
                "transitions list {} states, rewards list {num_states}",
                self.transitions.len()
            )));
        }
        let mut reward = Vec::with_capacity(num_states * num_actions);
        let mut transition = Vec::with_capacity(num_states * num_actions * num_states);
        for (s, (r_row, p_rows)) in self.rewards.iter().zip(&self.transitions).enumerate() {
            if r_row.len() != num_actions || p_rows.len() != num_actions {
                return Err(Error::Parse(format!(
                    "state {s} does not list exactly {num_actions} actions"
                )));
            }
            reward.extend_from_slice(r_row);
            for (a, p) in p_rows.iter().enumerate() {
                if p.len() != num_states {
                    return Err(Error::Parse(format!(
                        "transitions[{s}][{a}] has {} entries, expected {num_states}",
                        p.len()
                    )));
                }
                transition.extend_from_slice(p);
            }
        }
        Mdp::with_reward_range(
            num_states,
            num_actions,
            transition,
            reward,
            self.discount,
            self.reward_range.unwrap_or(RewardRange::Unit),
        )
    }

    pub fn from_mdp(mdp: &Mdp) -> Self {
        let (ns, na) = (mdp.num_states(), mdp.num_actions());
        MdpFile {
            discount: mdp.discount(),
            reward_range: Some(mdp.reward_range()),
            rewards: (0..ns)
                .map(|s| (0..na).map(|a| mdp.reward(s, a)).collect())
                .collect(),
            transitions: (0..ns)
                .map(|s| (0..na).map(|a| mdp.transition_row(s, a).to_vec()).collect())
                .collect(),
        }
    }
}

pub fn parse_mdp(text: &str) -> Result<Mdp> {
    let file: MdpFile = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    file.into_mdp()
}

pub fn load_mdp(path: &Path) -> Result<Mdp> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_mdp(&text).map_err(|e| match e {
        Error::Parse(msg) => Error::Parse(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn parse_features(text: &str) -> Result<FeatureSystem> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty());
    let (line_no, header) = lines
        .next()
        .ok_or_else(|| Error::Parse("feature file is empty".into()))?;
    let dim: usize = header.parse().map_err(|_| {
        Error::Parse(format!(
            "line {line_no}: expected feature dimension, got {header:?}"
        ))
    })?;
    let mut rows = Vec::new();
    for (line_no, line) in lines {
        let row = line
            .split_whitespace()
            .map(|tok| {
                tok.parse::<f64>()
                    .map_err(|_| Error::Parse(format!("line {line_no}: bad number {tok:?}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        if row.len() != dim {
            return Err(Error::Parse(format!(
                "line {line_no}: expected {dim} features, found {}",
                row.len()
            )));
        }
        rows.push(row);
    }
    FeatureSystem::from_rows(&rows)
}

pub fn load_features(path: &Path) -> Result<FeatureSystem> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_features(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    const TWO_STATE: &str = r#"
discount = 0.9
rewards = [[1.0, 1.0], [0.0, 0.0]]
transitions = [[[1.0, 0.0], [0.0, 1.0]], [[1.0, 0.0], [0.0, 1.0]]]
"#;

    #[test]
    fn model_file_round_trip() {
        let mdp = parse_mdp(TWO_STATE).unwrap();
        assert_eq!(mdp.num_states(), 2);
        assert_eq!(mdp.transition_row(1, 1), &[0.0, 1.0]);
        let again = MdpFile::from_mdp(&mdp).into_mdp().unwrap();
        assert_eq!(mdp, again);
    }

    #[test]
    fn unknown_model_keys_rejected() {
        let text = format!("{TWO_STATE}\ngamma = 0.5\n");
        assert!(matches!(parse_mdp(&text), Err(Error::Parse(_))));
    }

    #[test]
    fn ragged_model_rejected() {
        let text = "discount = 0.9\nrewards = [[1.0], [0.0, 0.0]]\ntransitions = [[[1.0, 0.0]], [[1.0, 0.0], [0.0, 1.0]]]\n";
        assert!(parse_mdp(text).is_err());
    }

    #[test]
    fn feature_file_with_comments() {
        let fs = parse_features("# phi\n1\n1.0  # x1\n\n2.0\n").unwrap();
        assert_eq!((fs.num_states(), fs.dim()), (2, 1));
        assert_eq!(fs.feature(1), vec![2.0]);
        assert!(parse_features("2\n1.0\n").is_err());
        assert!(parse_features("1\nabc\n").is_err());
    }
}
