//! Deterministic simulated link.
//!
//! Randomness: each direction owns a `ChaCha8Rng`. The client-to-server
//! direction is seeded with `seed_from_u64(seed)`, the server-to-client
//! direction with `seed_from_u64(seed ^ 0x9E37_79B9_7F4A_7C15)`. Every
//! accepted send consumes exactly three draws, in this order: loss,
//! duplication, reordering. A draw is `(next_u64() >> 11) as f64 / 2^53 * 100`
//! and fires when it is strictly below the configured percentage. Sends
//! refused because the link is down consume no draws.
//!
//! Timing: a frame sent at `t` is due at `t + latency_ms`. When the reorder
//! draw fires and another frame is still pending, the new frame swaps its
//! delivery slot with the pending frame due last, so it
//! overtakes it. A duplicate is delivered immediately after its original.
//! Frames whose delivery time falls inside an outage are lost.

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::rc::Rc;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::link::{Link, LinkError, LinkState, Millis};
use crate::types::InvalidValue;

pub const REVERSE_SEED_MASK: u64 = 0x9E37_79B9_7F4A_7C15;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub loss_pct: f64,
    #[serde(default)]
    pub dup_pct: f64,
    #[serde(default)]
    pub reorder_pct: f64,
    #[serde(default)]
    pub latency_ms: Millis,
    /// Half-open `[down_at, up_at)` intervals.
    #[serde(default)]
    pub outage_schedule: Vec<(Millis, Millis)>,
}

impl Default for LinkConfig {
    fn default() -> Self {
        LinkConfig {
            seed: 0,
            loss_pct: 0.0,
            dup_pct: 0.0,
            reorder_pct: 0.0,
            latency_ms: 10,
            outage_schedule: Vec::new(),
        }
    }
}

impl LinkConfig {
    pub fn lossless(seed: u64) -> Self {
        LinkConfig {
            seed,
            ..LinkConfig::default()
        }
    }

    pub fn validate(&self) -> Result<(), InvalidValue> {
        for (name, v) in [
            ("loss_pct", self.loss_pct),
            ("dup_pct", self.dup_pct),
            ("reorder_pct", self.reorder_pct),
        ] {
            if !(0.0..=100.0).contains(&v) {
                return Err(InvalidValue::new(
                    "link config",
                    format!("{name} {v} outside 0..=100"),
                ));
            }
        }
        let mut prev_up = None;
        for &(down, up) in &self.outage_schedule {
            if down >= up {
                return Err(InvalidValue::new(
                    "link config",
                    format!("outage [{down},{up}) is empty or inverted"),
                ));
            }
            if prev_up.is_some_and(|p| down < p) {
                return Err(InvalidValue::new(
                    "link config",
                    "outage intervals overlap or are unordered",
                ));
            }
            prev_up = Some(up);
        }
        Ok(())
    }

    pub fn state_at(&self, now: Millis) -> LinkState {
        if self
            .outage_schedule
            .iter()
            .any(|&(down, up)| down <= now && now < up)
        {
            LinkState::Down
        } else {
            LinkState::Up
        }
    }

    /// First outage boundary strictly after `now`.
    pub fn next_transition(&self, now: Millis) -> Option<Millis> {
        self.outage_schedule
            .iter()
            .flat_map(|&(d, u)| [d, u])
            .filter(|&t| t > now)
            .min()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    ClientToServer,
    ServerToClient,
}

/// One observable step of a channel. `frame` is the 0-based index of the
/// send call that produced the frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimEvent {
    Refused { at: Millis, frame: u64 },
    Dropped { at: Millis, frame: u64 },
    Queued { at: Millis, frame: u64, due: Millis },
    Duplicated { frame: u64 },
    Reordered { frame: u64, overtook: u64 },
    Delivered { at: Millis, frame: u64 },
    LostInOutage { at: Millis, frame: u64 },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ChannelStats {
    pub sent: u64,
    pub refused: u64,
    pub dropped: u64,
    pub duplicated: u64,
    pub reordered: u64,
    pub delivered: u64,
    pub lost_in_outage: u64,
}

#[derive(Debug, Clone)]
struct Pending {
    frame: u64,
    bytes: Vec<u8>,
}

/// One direction of a simulated link.
#[derive(Debug, Clone)]
pub struct SimChannel {
    config: LinkConfig,
    rng: ChaCha8Rng,
    /// Keyed by (due time, insertion key).
    pending: BTreeMap<(Millis, u64), Pending>,
    next_key: u64,
    next_frame: u64,
    last_advance: Millis,
    stats: ChannelStats,
    transcript: Vec<SimEvent>,
}

fn draw_pct(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64 * 100.0
}

impl SimChannel {
    pub fn new(config: LinkConfig, direction: Direction) -> Self {
        let seed = match direction {
            Direction::ClientToServer => config.seed,
            Direction::ServerToClient => config.seed ^ REVERSE_SEED_MASK,
        };
        SimChannel {
            config,
            rng: ChaCha8Rng::seed_from_u64(seed),
            pending: BTreeMap::new(),
            next_key: 0,
            next_frame: 0,
            last_advance: 0,
            stats: ChannelStats::default(),
            transcript: Vec::new(),
        }
    }

    pub fn link_state(&self, now: Millis) -> LinkState {
        self.config.state_at(now)
    }

    pub fn send(&mut self, bytes: &[u8], now: Millis) -> Result<(), LinkError> {
        let frame = self.next_frame;
        self.next_frame += 1;
        if self.link_state(now) == LinkState::Down {
            self.stats.refused += 1;
            self.transcript.push(SimEvent::Refused { at: now, frame });
            return Err(LinkError::LinkDown);
        }
        self.stats.sent += 1;
        let lose = draw_pct(&mut self.rng) < self.config.loss_pct;
        let dup = draw_pct(&mut self.rng) < self.config.dup_pct;
        let reorder = draw_pct(&mut self.rng) < self.config.reorder_pct;
        if lose {
            self.stats.dropped += 1;
            self.transcript.push(SimEvent::Dropped { at: now, frame });
            return Ok(());
        }

        let due = now + self.config.latency_ms;
        let mut slot = (due, self.next_key);
        self.next_key += 1;
        self.transcript.push(SimEvent::Queued {
            at: now,
            frame,
            due,
        });

        if reorder {
            if let Some((&prev_slot, _)) = self.pending.last_key_value() {
                let prev = self.pending.remove(&prev_slot).expect("key just observed");
                self.stats.reordered += 1;
                self.transcript.push(SimEvent::Reordered {
                    frame,
                    overtook: prev.frame,
                });
                self.pending.insert(slot, prev);
                slot = prev_slot;
            }
        }
        self.pending.insert(
            slot,
            Pending {
                frame,
                bytes: bytes.to_vec(),
            },
        );

        if dup {
            self.stats.duplicated += 1;
            self.transcript.push(SimEvent::Duplicated { frame });
            let dup_slot = (slot.0, self.next_key);
            self.next_key += 1;
            self.pending.insert(
                dup_slot,
                Pending {
                    frame,
                    bytes: bytes.to_vec(),
                },
            );
        }
        Ok(())
    }

    pub fn advance(&mut self, now: Millis) -> Result<Vec<Vec<u8>>, LinkError> {
        if now < self.last_advance {
            return Err(LinkError::ClockRegression {
                now,
                last: self.last_advance,
            });
        }
        self.last_advance = now;
        let mut out = Vec::new();
        while let Some(entry) = self.pending.first_entry() {
            let (due, _) = *entry.key();
            if due > now {
                break;
            }
            let p = entry.remove();
            if self.config.state_at(due) == LinkState::Down {
                self.stats.lost_in_outage += 1;
                self.transcript.push(SimEvent::LostInOutage {
                    at: due,
                    frame: p.frame,
                });
                continue;
            }
            self.stats.delivered += 1;
            self.transcript.push(SimEvent::Delivered {
                at: due,
                frame: p.frame,
            });
            out.push(p.bytes);
        }
        Ok(out)
    }

    pub fn next_delivery(&self) -> Option<Millis> {
        self.pending.keys().next().map(|&(due, _)| due)
    }

    pub fn pending(&self) -> usize {
        self.pending.len()
    }

    pub fn stats(&self) -> ChannelStats {
        self.stats
    }

    pub fn transcript(&self) -> &[SimEvent] {
        &self.transcript
    }
}

#[derive(Debug)]
struct Duplex {
    config: LinkConfig,
    c2s: SimChannel,
    s2c: SimChannel,
}

/// A simulated two-endpoint link. Cloning shares the same state.
#[derive(Debug, Clone)]
pub struct SimLink {
    inner: Rc<RefCell<Duplex>>,
}

impl SimLink {
    pub fn new(config: LinkConfig) -> Self {
        SimLink {
            inner: Rc::new(RefCell::new(Duplex {
                c2s: SimChannel::new(config.clone(), Direction::ClientToServer),
                s2c: SimChannel::new(config.clone(), Direction::ServerToClient),
                config,
            })),
        }
    }

    /// Returns the client end and the server end.
    pub fn split(&self) -> (SimEnd, SimEnd) {
        (
            SimEnd {
                inner: Rc::clone(&self.inner),
                side: Direction::ClientToServer,
            },
            SimEnd {
                inner: Rc::clone(&self.inner),
                side: Direction::ServerToClient,
            },
        )
    }

    /// Frames queued in either direction and not yet delivered.
    pub fn in_flight(&self) -> usize {
        let d = self.inner.borrow();
        d.c2s.pending() + d.s2c.pending()
    }

    pub fn config(&self) -> LinkConfig {
        self.inner.borrow().config.clone()
    }

    pub fn stats(&self, dir: Direction) -> ChannelStats {
        let d = self.inner.borrow();
        match dir {
            Direction::ClientToServer => d.c2s.stats(),
            Direction::ServerToClient => d.s2c.stats(),
        }
    }

    pub fn transcript(&self, dir: Direction) -> Vec<SimEvent> {
        let d = self.inner.borrow();
        match dir {
            Direction::ClientToServer => d.c2s.transcript().to_vec(),
            Direction::ServerToClient => d.s2c.transcript().to_vec(),
        }
    }
}

/// One endpoint of a [`SimLink`]. `side` names the direction it sends in.
#[derive(Debug, Clone)]
pub struct SimEnd {
    inner: Rc<RefCell<Duplex>>,
    side: Direction,
}

impl SimEnd {
    pub fn direction(&self) -> Direction {
        self.side
    }

    /// Due time of the next frame travelling towards this end.
    pub fn next_arrival(&self) -> Option<Millis> {
        let d = self.inner.borrow();
        match self.side {
            Direction::ClientToServer => d.s2c.next_delivery(),
            Direction::ServerToClient => d.c2s.next_delivery(),
        }
    }
}

impl Link for SimEnd {
    fn state(&self, now: Millis) -> LinkState {
        self.inner.borrow().config.state_at(now)
    }

    fn send(&mut self, frame: &[u8], now: Millis) -> Result<(), LinkError> {
        let mut d = self.inner.borrow_mut();
        match self.side {
            Direction::ClientToServer => d.c2s.send(frame, now),
            Direction::ServerToClient => d.s2c.send(frame, now),
        }
    }

    fn recv(&mut self, now: Millis) -> Result<Vec<Vec<u8>>, LinkError> {
        let mut d = self.inner.borrow_mut();
        match self.side {
            Direction::ClientToServer => d.s2c.advance(now),
            Direction::ServerToClient => d.c2s.advance(now),
        }
    }

    fn next_event(&self, now: Millis) -> Option<Millis> {
        let d = self.inner.borrow();
        let incoming = match self.side {
            Direction::ClientToServer => d.s2c.next_delivery(),
            Direction::ServerToClient => d.c2s.next_delivery(),
        };
        [incoming, d.config.next_transition(now)]
            .into_iter()
            .flatten()
            .min()
    }
}
