//! Deterministic discrete-event core.
//!
//! One [`Engine`] owns the virtual clock, the event queue, one FIFO CPU queue
//! per mesh node and the single random stream of a simulation. Protocol state
//! lives in a [`World`] that reacts to events and schedules new ones.

mod time;
mod trace;

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::scalar::Scalar;
use crate::topology::{NodeIdx, Topology};

pub use time::SimTime;
pub use trace::{SimTrace, TraceRecord};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EventKind {
    MessageArrival { from: NodeIdx },
    ServiceCompletion,
    Timer,
}

impl EventKind {
    pub fn name(&self) -> &'static str {
        match self {
            EventKind::MessageArrival { .. } => "arrive",
            EventKind::ServiceCompletion => "service",
            EventKind::Timer => "timer",
        }
    }
}

#[derive(Clone, Debug)]
pub struct SimEvent<P> {
    pub fire_time: SimTime,
    pub sequence: u64,
    /// Node the event is delivered to.
    pub node: NodeIdx,
    pub kind: EventKind,
    pub payload: P,
}

struct Queued<P>(SimEvent<P>);

impl<P> PartialEq for Queued<P> {
    fn eq(&self, other: &Self) -> bool {
        self.key() == other.key()
    }
}
impl<P> Eq for Queued<P> {}
impl<P> PartialOrd for Queued<P> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<P> Ord for Queued<P> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key().cmp(&other.key())
    }
}
impl<P> Queued<P> {
    fn key(&self) -> (SimTime, u64) {
        (self.0.fire_time, self.0.sequence)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SimError {
    #[error("event at {at} us is before the clock ({now} us)")]
    PastEvent { at: SimTime, now: SimTime },
    #[error("unknown node index {0}")]
    UnknownNode(NodeIdx),
}

#[derive(Clone, Debug, PartialEq)]
pub struct EngineConfig {
    pub seed: u64,
    /// Service time of one work unit on a node with `cpu_capacity = 1`.
    pub base_service_ms: f64,
    /// Upper bound of the uniform extra delay added to every network message.
    pub jitter_ms: f64,
    pub trace: bool,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            base_service_ms: 1.0,
            jitter_ms: 0.0,
            trace: true,
        }
    }
}

/// FIFO single-server CPU of one node.
#[derive(Clone, Debug, Default)]
pub struct CpuQueue {
    pub busy_until: SimTime,
    /// Service intervals in start order; they never overlap.
    pub intervals: Vec<(SimTime, SimTime)>,
}

impl CpuQueue {
    pub fn busy_time(&self, from: SimTime, to: SimTime) -> u64 {
        self.intervals
            .iter()
            .map(|&(s, e)| e.min(to).0.saturating_sub(s.max(from).0))
            .sum()
    }
}

/// Protocol state driven by the engine.
pub trait World<T: Scalar, P> {
    fn handle(&mut self, engine: &mut Engine<'_, T, P>, event: SimEvent<P>) -> Result<(), SimError>;
}

pub struct Engine<'t, T, P> {
    topology: &'t Topology<T>,
    config: EngineConfig,
    now: SimTime,
    next_sequence: u64,
    queue: BinaryHeap<Reverse<Queued<P>>>,
    cpus: Vec<CpuQueue>,
    rng: ChaCha8Rng,
    trace: Vec<TraceRecord>,
}

impl<'t, T: Scalar, P: fmt::Display> Engine<'t, T, P> {
    pub fn new(topology: &'t Topology<T>, config: EngineConfig) -> Self {
        Self {
            topology,
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            config,
            now: SimTime::ZERO,
            next_sequence: 0,
            queue: BinaryHeap::new(),
            cpus: vec![CpuQueue::default(); topology.len()],
            trace: Vec::new(),
        }
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn topology(&self) -> &'t Topology<T> {
        self.topology
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    pub fn pending(&self) -> usize {
        self.queue.len()
    }

    pub fn cpu(&self, node: NodeIdx) -> &CpuQueue {
        &self.cpus[node.0]
    }

    fn check(&self, node: NodeIdx) -> Result<(), SimError> {
        if node.0 < self.topology.len() {
            Ok(())
        } else {
            Err(SimError::UnknownNode(node))
        }
    }

    /// Enqueues an event and returns its sequence number.
    pub fn schedule(
        &mut self,
        fire_time: SimTime,
        node: NodeIdx,
        kind: EventKind,
        payload: P,
    ) -> Result<u64, SimError> {
        self.check(node)?;
        if fire_time < self.now {
            return Err(SimError::PastEvent {
                at: fire_time,
                now: self.now,
            });
        }
        let sequence = self.next_sequence;
        self.next_sequence += 1;
        self.queue.push(Reverse(Queued(SimEvent {
            fire_time,
            sequence,
            node,
            kind,
            payload,
        })));
        Ok(sequence)
    }

    pub fn timer(&mut self, node: NodeIdx, at: SimTime, payload: P) -> Result<u64, SimError> {
        self.schedule(at, node, EventKind::Timer, payload)
    }

    /// Network delay of a message over the shortest path, without jitter.
    pub fn network_delay(&self, from: NodeIdx, to: NodeIdx, bytes: u64) -> SimTime {
        if from == to {
            return SimTime::ZERO;
        }
        SimTime::from_ms_f64(self.topology.route_delay(from, to, bytes).as_f64())
    }

    /// Sends `payload` over the mesh; returns the arrival time.
    pub fn send_message(
        &mut self,
        from: NodeIdx,
        to: NodeIdx,
        bytes: u64,
        payload: P,
    ) -> Result<SimTime, SimError> {
        self.check(from)?;
        self.check(to)?;
        let mut delay = self.network_delay(from, to, bytes);
        if from != to && self.config.jitter_ms > 0.0 {
            delay = delay + SimTime::from_ms_f64(self.rng.random::<f64>() * self.config.jitter_ms);
        }
        let at = self.now + delay;
        self.schedule(at, to, EventKind::MessageArrival { from }, payload)?;
        Ok(at)
    }

    /// Queues `work_units` on the node's CPU; the completion event carries
    /// `payload`. Returns the completion time.
    pub fn cpu_submit(
        &mut self,
        node: NodeIdx,
        work_units: f64,
        payload: P,
    ) -> Result<SimTime, SimError> {
        self.check(node)?;
        let cpu = self.topology.node(node).cpu_capacity.as_f64();
        let service = SimTime::from_ms_f64(work_units / cpu * self.config.base_service_ms);
        let queue = &mut self.cpus[node.0];
        let start = queue.busy_until.max(self.now);
        let done = start + service;
        queue.busy_until = done;
        if service > SimTime::ZERO {
            queue.intervals.push((start, done));
        }
        self.schedule(done, node, EventKind::ServiceCompletion, payload)?;
        Ok(done)
    }

    /// Processes events in `(fire_time, sequence)` order until the queue is
    /// empty or the next event lies beyond `t_end`. Returns the records of the
    /// events processed by this call. Stops at the first error raised by the
    /// world.
    pub fn run_until<W: World<T, P>>(&mut self, t_end: SimTime, world: &mut W) -> Result<SimTrace, SimError> {
        let start = self.trace.len();
        while let Some(Reverse(head)) = self.queue.peek() {
            if head.0.fire_time > t_end {
                break;
            }
            let Reverse(Queued(event)) = self.queue.pop().expect("peeked");
            self.now = event.fire_time;
            if self.config.trace {
                self.trace.push(TraceRecord {
                    time: event.fire_time,
                    sequence: event.sequence,
                    node: self.topology.id(event.node).to_string(),
                    kind: event.kind.name(),
                    detail: event.payload.to_string(),
                });
            }
            world.handle(self, event)?;
        }
        Ok(SimTrace {
            records: self.trace.split_off(start),
        })
    }
}
