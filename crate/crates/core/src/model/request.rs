use std::fmt;

use serde::{Deserialize, Serialize};

use super::app::AppId;
use super::substrate::NodeId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RequestId(pub u64);

impl fmt::Display for RequestId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// One online arrival. Active in slots `arrival .. arrival + duration`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Request {
    pub id: RequestId,
    pub app: AppId,
    pub origin: NodeId,
    pub size: f64,
    pub arrival: u32,
    pub duration: u32,
}

impl Request {
    /// First slot in which the request is no longer active.
    pub fn departure(&self) -> u32 {
        self.arrival + self.duration
    }

    pub fn is_active(&self, t: u32) -> bool {
        self.arrival <= t && t < self.departure()
    }

    /// Size times duration, in CU x slots.
    pub fn volume(&self) -> f64 {
        self.size * self.duration as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RequestStatus {
    Pending,
    Allocated,
    Rejected,
    Preempted,
    Departed,
}

impl RequestStatus {
    /// Allowed transitions: pending -> allocated | rejected,
    /// allocated -> preempted | departed.
    pub fn can_become(self, next: RequestStatus) -> bool {
        use RequestStatus::*;
        matches!(
            (self, next),
            (Pending, Allocated) | (Pending, Rejected) | (Allocated, Preempted) | (Allocated, Departed)
        )
    }

    pub fn is_rejection(self) -> bool {
        matches!(self, RequestStatus::Rejected | RequestStatus::Preempted)
    }
}
