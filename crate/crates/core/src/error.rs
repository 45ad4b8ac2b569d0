use std::fmt;

use crate::model::NodeSet;

/// Which inequality of the shuffle-configuration constraint set failed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Constraint {
    /// `1 <= t <= r` (equivalently `s >= 1`).
    CooperationRange,
    /// `1 <= K_r <= K`.
    ReceiverRange,
    /// `s <= K_r`.
    MulticastFitsReceivers,
    /// `t <= K - K_r`.
    CooperationFitsTransmitters,
    /// `K - K_r <= K - s`.
    TransmittersBound,
}

impl fmt::Display for Constraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Constraint::CooperationRange => "1 <= t <= r",
            Constraint::ReceiverRange => "1 <= K_r <= K",
            Constraint::MulticastFitsReceivers => "s <= K_r",
            Constraint::CooperationFitsTransmitters => "t <= K - K_r",
            Constraint::TransmittersBound => "K - K_r <= K - s",
        };
        f.write_str(s)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("constraint {constraint} violated: {detail}")]
    ConstraintViolation { constraint: Constraint, detail: String },

    #[error("infeasible instance: {0}")]
    Infeasible(String),

    #[error("outside formula domain: {0}")]
    Domain(String),

    #[error("node {node} is not an intended receiver of message (D = {dest}, B = {coop})")]
    NotIntended { node: usize, dest: NodeSet, coop: NodeSet },

    #[error("node {node} lacks side information for segment {segment}")]
    MissingSideInformation { node: usize, segment: String },

    #[error("{stragglers} stragglers cannot be tolerated with cooperation size t = {t}")]
    TooManyStragglers { stragglers: usize, t: usize },

    #[error("received matrix at node {node} is ill-conditioned (cond = {condition:.3e}); resample the channel")]
    IllConditioned { node: usize, condition: f64 },

    #[error("regime not simulated: {0}")]
    UnsupportedRegime(String),

    #[error("closed form and brute force disagree at r = {r}, K = {k}: {detail}")]
    Discrepancy { r: u64, k: u64, detail: String },

    #[error("internal invariant violated: {0}")]
    Internal(String),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn internal(msg: impl Into<String>) -> Self {
        Error::Internal(msg.into())
    }

    /// True for errors caused by the caller's instance rather than by a bug.
    pub fn is_invalid_input(&self) -> bool {
        matches!(
            self,
            Error::Parameter(_)
                | Error::ConstraintViolation { .. }
                | Error::Infeasible(_)
                | Error::Domain(_)
                | Error::TooManyStragglers { .. }
                | Error::UnsupportedRegime(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
