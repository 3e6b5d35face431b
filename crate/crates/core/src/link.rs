use thiserror::Error;

/// Milliseconds on whatever clock drives the link (virtual in simulation).
pub type Millis = u64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinkState {
    Up,
    Down,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LinkError {
    #[error("link is down")]
    LinkDown,
    #[error("link is closed")]
    Closed,
    #[error("clock went backwards: {now} < {last}")]
    ClockRegression { now: Millis, last: Millis },
    #[error("link i/o error: {0}")]
    Io(String),
}

/// A bidirectional frame pipe. Implementations never block.
pub trait Link {
    fn state(&self, now: Millis) -> LinkState;

    /// Hands one encoded frame to the link. Fails with `LinkDown` while the
    /// link is down so the caller can buffer.
    fn send(&mut self, frame: &[u8], now: Millis) -> Result<(), LinkError>;

    /// Frames that have arrived by `now`, in arrival order.
    fn recv(&mut self, now: Millis) -> Result<Vec<Vec<u8>>, LinkError>;

    /// Earliest future instant at which `recv` or `state` may change, if known.
    fn next_event(&self, now: Millis) -> Option<Millis>;
}
