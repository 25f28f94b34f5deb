//! Published reference values and how a model number is judged against them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnchorPolicy {
    /// Pass or fail at combined 3σ.
    Compare,
    /// Depends on lab calibration the model does not have; shown, never judged.
    ReportOnly,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Anchor {
    pub id: &'static str,
    pub value: f64,
    pub sigma: f64,
    pub policy: AnchorPolicy,
    pub citation: &'static str,
}

pub const ANCHORS: &[Anchor] = &[
    Anchor {
        id: "visibility",
        value: 0.928,
        sigma: 0.026,
        policy: AnchorPolicy::Compare,
        citation: "average visibility of four correlation curves, 92.8 ± 2.6 %",
    },
    Anchor {
        id: "chsh_s",
        value: 2.675,
        sigma: 0.050,
        policy: AnchorPolicy::Compare,
        citation: "S = 2.675 ± 0.050, exceeds the classical bound 2",
    },
    Anchor {
        id: "g2_zero",
        value: 0.037,
        sigma: 0.003,
        policy: AnchorPolicy::ReportOnly,
        citation: "source autocorrelation g2(0) = 0.037 ± 0.003",
    },
    Anchor {
        id: "s_high_background",
        value: 1.344,
        sigma: 0.019,
        policy: AnchorPolicy::ReportOnly,
        citation: "S = 1.344 ± 0.019 at g2(0) = 0.67 ± 0.01",
    },
    Anchor {
        id: "g2_high_background",
        value: 0.67,
        sigma: 0.01,
        policy: AnchorPolicy::ReportOnly,
        citation: "g2(0) = 0.67 ± 0.01 of the strongest background point",
    },
    Anchor {
        id: "crossover_g2",
        value: 0.2,
        sigma: 0.0,
        policy: AnchorPolicy::ReportOnly,
        citation: "S falls below 2 at g2(0) of approximately 0.2",
    },
    Anchor {
        id: "crossover_beta",
        value: 0.43,
        sigma: 0.0,
        policy: AnchorPolicy::ReportOnly,
        citation: "laser background constitutes 43 % of the total at the crossover",
    },
    Anchor {
        id: "tripartite",
        value: 0.22,
        sigma: 0.005,
        policy: AnchorPolicy::Compare,
        citation: "three-port post-selection probability approximately 0.22",
    },
];

pub fn anchor(id: &str) -> Result<&'static Anchor> {
    ANCHORS
        .iter()
        .find(|a| a.id == id)
        .ok_or_else(|| Error::UnknownAnchor(id.to_string()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnchorStatus {
    Match,
    ReportOnly,
    Mismatch,
}

impl std::fmt::Display for AnchorStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            AnchorStatus::Match => "match",
            AnchorStatus::ReportOnly => "report-only",
            AnchorStatus::Mismatch => "mismatch",
        })
    }
}

/// Judges `value ± sigma` against anchor `id` at combined 3σ.
pub fn compare_to_anchor(value: f64, sigma: f64, id: &str) -> Result<AnchorStatus> {
    let a = anchor(id)?;
    if a.policy == AnchorPolicy::ReportOnly {
        return Ok(AnchorStatus::ReportOnly);
    }
    let combined = sigma.hypot(a.sigma);
    Ok(if (value - a.value).abs() <= 3.0 * combined {
        AnchorStatus::Match
    } else {
        AnchorStatus::Mismatch
    })
}

/// One line of a comparison table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnchorRow {
    pub id: String,
    pub value: f64,
    pub sigma: f64,
    pub anchor: f64,
    pub anchor_sigma: f64,
    pub status: AnchorStatus,
    pub note: String,
    pub citation: String,
}

impl AnchorRow {
    pub fn new(id: &str, value: f64, sigma: f64, note: impl Into<String>) -> Result<Self> {
        let a = anchor(id)?;
        Ok(AnchorRow {
            id: id.to_string(),
            value,
            sigma,
            anchor: a.value,
            anchor_sigma: a.sigma,
            status: compare_to_anchor(value, sigma, id)?,
            note: note.into(),
            citation: a.citation.to_string(),
        })
    }

    /// Shown without a verdict regardless of the anchor policy.
    pub fn report_only(id: &str, value: f64, sigma: f64, note: impl Into<String>) -> Result<Self> {
        let mut row = Self::new(id, value, sigma, note)?;
        row.status = AnchorStatus::ReportOnly;
        Ok(row)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn statuses() {
        assert_eq!(
            compare_to_anchor(2.624, 0.02, "chsh_s").unwrap(),
            AnchorStatus::Match
        );
        assert_eq!(
            compare_to_anchor(2.2222, 0.0, "tripartite").unwrap(),
            AnchorStatus::Mismatch
        );
        assert_eq!(
            compare_to_anchor(0.2222, 0.0, "tripartite").unwrap(),
            AnchorStatus::Match
        );
        assert_eq!(
            compare_to_anchor(0.1, 0.0, "crossover_beta").unwrap(),
            AnchorStatus::ReportOnly
        );
        assert!(matches!(
            compare_to_anchor(1.0, 0.0, "nope"),
            Err(Error::UnknownAnchor(_))
        ));
    }

    #[test]
    fn every_anchor_is_cited_and_unique() {
        for (i, a) in ANCHORS.iter().enumerate() {
            assert!(!a.citation.is_empty());
            assert!(ANCHORS[i + 1..].iter().all(|b| b.id != a.id));
            assert!(a.sigma >= 0.0);
        }
    }
}
