//! Dominant-cluster finders.
//!
//! Every finder returns a prefix of the sorted head: the first `size` tokens are
//! dominant. Jump-cut looks for sudden drops in the sorted probabilities; the
//! other finders are the classic truncation rules used for sampling.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::prob::StepDistribution;
use crate::scoring::step_entropy;

pub const DEFAULT_X_PERCENT: f64 = 0.3;
pub const DEFAULT_EPSILON: f64 = 0.005;

/// The dominant prefix of a step's head.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DominantCluster {
    /// Cutting index `c`: the first `size` head entries are dominant.
    pub size: usize,
    /// Total probability of the dominant entries.
    pub mass: f64,
}

impl DominantCluster {
    /// The first `size` head entries of `step`, summed in head order.
    pub fn prefix(step: &StepDistribution, size: usize) -> Self {
        let size = size.clamp(1, step.head.len());
        let mass = step.head[..size].iter().map(|tp| tp.prob).sum();
        Self { size, mass }
    }

    pub fn cutting_index(&self) -> usize {
        self.size
    }

    /// Whether a head position (zero-based) falls inside the cluster.
    pub fn contains(&self, index: usize) -> bool {
        index < self.size
    }
}

/// Which significant drop becomes the cutting point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CutRule {
    /// The last significant drop.
    #[default]
    Last,
    /// The first significant drop; separates only the leading group on
    /// staircase-shaped distributions.
    First,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FinderKind {
    JumpCut,
    TopK,
    TopP,
    EpsilonCut,
    EtaCut,
    MinP,
}

impl FinderKind {
    pub const ALL: [FinderKind; 6] = [
        FinderKind::JumpCut,
        FinderKind::TopK,
        FinderKind::TopP,
        FinderKind::EpsilonCut,
        FinderKind::EtaCut,
        FinderKind::MinP,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FinderKind::JumpCut => "jump-cut",
            FinderKind::TopK => "top-k",
            FinderKind::TopP => "top-p",
            FinderKind::EpsilonCut => "epsilon-cut",
            FinderKind::EtaCut => "eta-cut",
            FinderKind::MinP => "min-p",
        }
    }
}

impl fmt::Display for FinderKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for FinderKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        FinderKind::ALL
            .into_iter()
            .find(|kind| kind.name() == s)
            .ok_or_else(|| format!("unknown cluster finder `{s}`"))
    }
}

/// A cluster finder together with its hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "kebab-case")]
pub enum ClusterFinderConfig {
    JumpCut {
        x_percent: f64,
        epsilon: f64,
        #[serde(default)]
        rule: CutRule,
    },
    TopK {
        k: usize,
    },
    TopP {
        p: f64,
    },
    EpsilonCut {
        epsilon: f64,
    },
    EtaCut {
        eta: f64,
    },
    MinP {
        p: f64,
    },
}

impl Default for ClusterFinderConfig {
    fn default() -> Self {
        Self::jump_cut(DEFAULT_X_PERCENT, DEFAULT_EPSILON)
    }
}

impl ClusterFinderConfig {
    pub fn jump_cut(x_percent: f64, epsilon: f64) -> Self {
        ClusterFinderConfig::JumpCut {
            x_percent,
            epsilon,
            rule: CutRule::Last,
        }
    }

    pub fn kind(&self) -> FinderKind {
        match self {
            ClusterFinderConfig::JumpCut { .. } => FinderKind::JumpCut,
            ClusterFinderConfig::TopK { .. } => FinderKind::TopK,
            ClusterFinderConfig::TopP { .. } => FinderKind::TopP,
            ClusterFinderConfig::EpsilonCut { .. } => FinderKind::EpsilonCut,
            ClusterFinderConfig::EtaCut { .. } => FinderKind::EtaCut,
            ClusterFinderConfig::MinP { .. } => FinderKind::MinP,
        }
    }

    pub fn validate(&self) -> Result<(), ClusterError> {
        fn open_unit(name: &'static str, v: f64) -> Result<(), ClusterError> {
            if v > 0.0 && v < 1.0 {
                Ok(())
            } else {
                Err(ClusterError::InvalidConfig(format!(
                    "{name} must lie in (0, 1), got {v}"
                )))
            }
        }
        match *self {
            ClusterFinderConfig::JumpCut {
                x_percent, epsilon, ..
            } => {
                open_unit("x_percent", x_percent)?;
                open_unit("epsilon", epsilon)
            }
            ClusterFinderConfig::TopK { k: 0 } => {
                Err(ClusterError::InvalidConfig("k must be at least 1".into()))
            }
            ClusterFinderConfig::TopK { .. } => Ok(()),
            ClusterFinderConfig::TopP { p } | ClusterFinderConfig::MinP { p } => {
                if p > 0.0 && p <= 1.0 {
                    Ok(())
                } else {
                    Err(ClusterError::InvalidConfig(format!(
                        "p must lie in (0, 1], got {p}"
                    )))
                }
            }
            ClusterFinderConfig::EpsilonCut { epsilon } => open_unit("epsilon", epsilon),
            ClusterFinderConfig::EtaCut { eta } => open_unit("eta", eta),
        }
    }
}

impl fmt::Display for ClusterFinderConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ClusterFinderConfig::JumpCut {
                x_percent,
                epsilon,
                rule,
            } => {
                write!(f, "jump-cut(x={x_percent},eps={epsilon}")?;
                if *rule == CutRule::First {
                    write!(f, ",first")?;
                }
                write!(f, ")")
            }
            ClusterFinderConfig::TopK { k } => write!(f, "top-k(k={k})"),
            ClusterFinderConfig::TopP { p } => write!(f, "top-p(p={p})"),
            ClusterFinderConfig::EpsilonCut { epsilon } => write!(f, "epsilon-cut(eps={epsilon})"),
            ClusterFinderConfig::EtaCut { eta } => write!(f, "eta-cut(eta={eta})"),
            ClusterFinderConfig::MinP { p } => write!(f, "min-p(p={p})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ClusterError {
    #[error("step head is not epsilon-complete for epsilon {epsilon} (last head probability {last})")]
    NotEpsilonComplete { epsilon: f64, last: f64 },
    #[error("invalid cluster finder config: {0}")]
    InvalidConfig(String),
}

/// Probability that follows the last head entry in the drop scan: the mean
/// tail probability when a tail exists, otherwise 0.
fn boundary_value(step: &StepDistribution) -> f64 {
    step.tail_mean().unwrap_or(0.0)
}

/// Jump-cut cutting index over `probs` followed by one `boundary` value.
///
/// Position `i` (1-based) is significant when
/// `p_i - p_{i+1} > max(p_i * x_percent, epsilon)`. Returns 1 when no drop is
/// significant.
pub fn jump_cut_index(probs: &[f64], boundary: f64, x_percent: f64, epsilon: f64, rule: CutRule) -> usize {
    let mut cut = None;
    for (i, &p) in probs.iter().enumerate() {
        let next = probs.get(i + 1).copied().unwrap_or(boundary);
        if p - next > (p * x_percent).max(epsilon) {
            cut = Some(i + 1);
            if rule == CutRule::First {
                break;
            }
        }
    }
    cut.unwrap_or(1)
}

/// The jump-cut dominant cluster. The step must be ε-complete for `epsilon`.
pub fn jump_cut(
    step: &StepDistribution,
    x_percent: f64,
    epsilon: f64,
) -> Result<DominantCluster, ClusterError> {
    jump_cut_with_rule(step, x_percent, epsilon, CutRule::Last)
}

pub fn jump_cut_with_rule(
    step: &StepDistribution,
    x_percent: f64,
    epsilon: f64,
    rule: CutRule,
) -> Result<DominantCluster, ClusterError> {
    if !step.is_epsilon_complete(epsilon) {
        return Err(ClusterError::NotEpsilonComplete {
            epsilon,
            last: step.head.last().map_or(f64::NAN, |tp| tp.prob),
        });
    }
    Ok(jump_cut_unchecked(step, x_percent, epsilon, rule))
}

/// Jump-cut without the ε-completeness precondition. On incomplete heads the
/// result only reflects the stored head and the mean-tail boundary.
pub fn jump_cut_unchecked(
    step: &StepDistribution,
    x_percent: f64,
    epsilon: f64,
    rule: CutRule,
) -> DominantCluster {
    let probs: Vec<f64> = step.head_probs().collect();
    let c = jump_cut_index(&probs, boundary_value(step), x_percent, epsilon, rule);
    DominantCluster::prefix(step, c)
}

pub fn top_k(step: &StepDistribution, k: usize) -> DominantCluster {
    DominantCluster::prefix(step, k)
}

pub fn top_p(step: &StepDistribution, p: f64) -> DominantCluster {
    let mut cumulative = 0.0;
    let mut size = step.head.len();
    for (i, tp) in step.head.iter().enumerate() {
        cumulative += tp.prob;
        if cumulative >= p {
            size = i + 1;
            break;
        }
    }
    DominantCluster::prefix(step, size)
}

pub fn epsilon_cut(step: &StepDistribution, epsilon: f64) -> DominantCluster {
    let size = step.head_probs().filter(|&prob| prob > epsilon).count();
    DominantCluster::prefix(step, size)
}

/// η-sampling threshold `min(η, √η · exp(−H))`.
pub fn eta_threshold(step: &StepDistribution, eta: f64) -> f64 {
    eta.min(eta.sqrt() * (-step_entropy(step)).exp())
}

pub fn eta_cut(step: &StepDistribution, eta: f64) -> DominantCluster {
    let threshold = eta_threshold(step, eta);
    let size = step.head_probs().filter(|&prob| prob > threshold).count();
    DominantCluster::prefix(step, size)
}

pub fn min_p(step: &StepDistribution, p: f64) -> DominantCluster {
    let threshold = step.head[0].prob * p;
    let size = step.head_probs().filter(|&prob| prob >= threshold).count();
    DominantCluster::prefix(step, size)
}

pub fn find_cluster(
    step: &StepDistribution,
    config: &ClusterFinderConfig,
) -> Result<DominantCluster, ClusterError> {
    match *config {
        ClusterFinderConfig::JumpCut {
            x_percent,
            epsilon,
            rule,
        } => jump_cut_with_rule(step, x_percent, epsilon, rule),
        ClusterFinderConfig::TopK { k } => Ok(top_k(step, k)),
        ClusterFinderConfig::TopP { p } => Ok(top_p(step, p)),
        ClusterFinderConfig::EpsilonCut { epsilon } => Ok(epsilon_cut(step, epsilon)),
        ClusterFinderConfig::EtaCut { eta } => Ok(eta_cut(step, eta)),
        ClusterFinderConfig::MinP { p } => Ok(min_p(step, p)),
    }
}
