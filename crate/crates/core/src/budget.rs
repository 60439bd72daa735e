//! Cooperative wall-clock budgets for in-process execution.

use std::time::{Duration, Instant};

#[derive(Debug, Clone, Copy)]
pub struct Deadline {
    expires: Option<Instant>,
}

impl Deadline {
    pub fn none() -> Self {
        Self { expires: None }
    }

    pub fn after(budget: Duration) -> Self {
        Self {
            expires: Some(Instant::now() + budget),
        }
    }

    pub fn expired(&self) -> bool {
        self.expires.is_some_and(|t| Instant::now() >= t)
    }
}

impl Default for Deadline {
    fn default() -> Self {
        Self::none()
    }
}
