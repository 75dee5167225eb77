use std::time::Duration;

use super::ForgeError;

/// Retry schedule for live forge calls: one initial attempt, then one retry
/// after each backoff delay. Only [`ForgeError::is_retryable`] errors retry;
/// a rate limit waits at least its retry-after.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RetryPolicy {
    pub backoff: Vec<Duration>,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            backoff: [1, 2, 4].map(Duration::from_secs).to_vec(),
        }
    }
}

impl RetryPolicy {
    pub fn none() -> Self {
        Self {
            backoff: Vec::new(),
        }
    }

    pub fn run<T>(
        &self,
        mut sleep: impl FnMut(Duration),
        mut op: impl FnMut() -> Result<T, ForgeError>,
    ) -> Result<T, ForgeError> {
        let mut delays = self.backoff.iter();
        loop {
            match op() {
                Ok(v) => return Ok(v),
                Err(e) if e.is_retryable() => {
                    let Some(delay) = delays.next() else {
                        return Err(e);
                    };
                    let wait = match &e {
                        ForgeError::RateLimited { retry_after } => (*retry_after).max(*delay),
                        _ => *delay,
                    };
                    tracing::debug!(?wait, error = %e, "retrying forge call");
                    sleep(wait);
                }
                Err(e) => return Err(e),
            }
        }
    }
}
