//! In-process topic bus modelling two delivery contracts:
//!
//! * best effort: a full queue evicts its oldest message to admit the new one;
//! * reliable: a full queue blocks the producer until the consumer catches up.
//!
//! Each topic is a bounded FIFO of `history_depth` messages guarded by a
//! mutex and two condition variables.

use std::collections::{BTreeMap, VecDeque};
use std::sync::{Arc, Condvar, Mutex, MutexGuard};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::PipelineError;

pub const TRACKED_OBJECTS: &str = "tracked_objects";
pub const CAMERA_POSE: &str = "camera_pose";
pub const SCENE_GRAPH: &str = "scene_graph";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reliability {
    BestEffort,
    Reliable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QosPolicy {
    pub reliability: Reliability,
    pub history_depth: usize,
}

impl QosPolicy {
    pub fn best_effort(history_depth: usize) -> Self {
        QosPolicy {
            reliability: Reliability::BestEffort,
            history_depth,
        }
    }

    pub fn reliable(history_depth: usize) -> Self {
        QosPolicy {
            reliability: Reliability::Reliable,
            history_depth,
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.history_depth == 0 {
            return Err(PipelineError::Config("history_depth must be >= 1".into()));
        }
        Ok(())
    }

    /// Topic policies of the standard pipeline.
    pub fn defaults() -> BTreeMap<String, QosPolicy> {
        BTreeMap::from([
            (TRACKED_OBJECTS.to_string(), QosPolicy::best_effort(10)),
            (CAMERA_POSE.to_string(), QosPolicy::reliable(5)),
            (SCENE_GRAPH.to_string(), QosPolicy::reliable(10)),
        ])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PublishOutcome {
    Accepted,
    /// Accepted after evicting the oldest queued message.
    AcceptedWithEviction,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopicStats {
    pub published: u64,
    pub delivered: u64,
    pub dropped: u64,
    pub queued: usize,
}

struct TopicState<M> {
    queue: VecDeque<M>,
    closed: bool,
    stats: TopicStats,
}

struct Topic<M> {
    name: String,
    policy: QosPolicy,
    state: Mutex<TopicState<M>>,
    not_empty: Condvar,
    not_full: Condvar,
}

impl<M> Topic<M> {
    fn lock(&self) -> MutexGuard<'_, TopicState<M>> {
        self.state.lock().unwrap_or_else(|e| e.into_inner())
    }

    fn push(&self, state: &mut TopicState<M>, msg: M) -> PublishOutcome {
        let mut outcome = PublishOutcome::Accepted;
        if state.queue.len() >= self.policy.history_depth {
            state.queue.pop_front();
            state.stats.dropped += 1;
            outcome = PublishOutcome::AcceptedWithEviction;
        }
        state.queue.push_back(msg);
        state.stats.published += 1;
        state.stats.queued = state.queue.len();
        self.not_empty.notify_one();
        outcome
    }

    fn pop(&self, state: &mut TopicState<M>) -> Option<M> {
        let msg = state.queue.pop_front()?;
        state.stats.delivered += 1;
        state.stats.queued = state.queue.len();
        self.not_full.notify_one();
        Some(msg)
    }
}

/// Named topics with fixed QoS policies.
pub struct Bus<M> {
    topics: BTreeMap<String, Arc<Topic<M>>>,
}

impl<M> Default for Bus<M> {
    fn default() -> Self {
        Bus {
            topics: BTreeMap::new(),
        }
    }
}

impl<M> Bus<M> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_policies(policies: &BTreeMap<String, QosPolicy>) -> Result<Self, PipelineError> {
        let mut bus = Self::new();
        for (name, policy) in policies {
            bus.register(name, *policy)?;
        }
        Ok(bus)
    }

    pub fn register(&mut self, name: &str, policy: QosPolicy) -> Result<(), PipelineError> {
        policy.validate()?;
        if self.topics.contains_key(name) {
            return Err(PipelineError::DuplicateTopic(name.to_string()));
        }
        self.topics.insert(
            name.to_string(),
            Arc::new(Topic {
                name: name.to_string(),
                policy,
                state: Mutex::new(TopicState {
                    queue: VecDeque::with_capacity(policy.history_depth),
                    closed: false,
                    stats: TopicStats::default(),
                }),
                not_empty: Condvar::new(),
                not_full: Condvar::new(),
            }),
        );
        Ok(())
    }

    fn topic(&self, name: &str) -> Result<&Arc<Topic<M>>, PipelineError> {
        self.topics
            .get(name)
            .ok_or_else(|| PipelineError::UnknownTopic(name.to_string()))
    }

    pub fn policy(&self, name: &str) -> Result<QosPolicy, PipelineError> {
        Ok(self.topic(name)?.policy)
    }

    /// Publishes under the topic's policy. Reliable topics block while full.
    pub fn publish(&self, name: &str, msg: M) -> Result<PublishOutcome, PipelineError> {
        let topic = self.topic(name)?;
        let mut state = topic.lock();
        if state.closed {
            return Err(PipelineError::Closed(topic.name.clone()));
        }
        if topic.policy.reliability == Reliability::Reliable {
            while state.queue.len() >= topic.policy.history_depth && !state.closed {
                state = topic.not_full.wait(state).unwrap_or_else(|e| e.into_inner());
            }
            if state.closed {
                return Err(PipelineError::Closed(topic.name.clone()));
            }
        }
        Ok(topic.push(&mut state, msg))
    }

    /// Non-blocking publish. A full reliable topic hands the message back.
    pub fn try_publish(&self, name: &str, msg: M) -> Result<Result<PublishOutcome, M>, PipelineError> {
        let topic = self.topic(name)?;
        let mut state = topic.lock();
        if state.closed {
            return Err(PipelineError::Closed(topic.name.clone()));
        }
        if topic.policy.reliability == Reliability::Reliable && state.queue.len() >= topic.policy.history_depth {
            return Ok(Err(msg));
        }
        Ok(Ok(topic.push(&mut state, msg)))
    }

    pub fn subscribe(&self, name: &str) -> Result<Subscriber<M>, PipelineError> {
        Ok(Subscriber {
            topic: Arc::clone(self.topic(name)?),
        })
    }

    /// Closes a topic: producers get `Closed`, consumers drain what is queued.
    pub fn close(&self, name: &str) -> Result<(), PipelineError> {
        let topic = self.topic(name)?;
        topic.lock().closed = true;
        topic.not_empty.notify_all();
        topic.not_full.notify_all();
        Ok(())
    }

    pub fn close_all(&self) {
        for name in self.topics.keys() {
            let _ = self.close(name);
        }
    }

    pub fn stats(&self, name: &str) -> Result<TopicStats, PipelineError> {
        Ok(self.topic(name)?.lock().stats)
    }

    /// Evictions per topic.
    pub fn drop_counts(&self) -> BTreeMap<String, u64> {
        self.topics
            .iter()
            .map(|(n, t)| (n.clone(), t.lock().stats.dropped))
            .collect()
    }
}

/// Consumer handle for one topic.
pub struct Subscriber<M> {
    topic: Arc<Topic<M>>,
}

impl<M> Subscriber<M> {
    pub fn try_recv(&self) -> Option<M> {
        let mut state = self.topic.lock();
        self.topic.pop(&mut state)
    }

    /// Blocks until a message arrives; `None` once the topic is closed and drained.
    pub fn recv(&self) -> Option<M> {
        let mut state = self.topic.lock();
        loop {
            if let Some(m) = self.topic.pop(&mut state) {
                return Some(m);
            }
            if state.closed {
                return None;
            }
            state = self.topic.not_empty.wait(state).unwrap_or_else(|e| e.into_inner());
        }
    }

    pub fn recv_timeout(&self, timeout: Duration) -> Option<M> {
        let mut state = self.topic.lock();
        if let Some(m) = self.topic.pop(&mut state) {
            return Some(m);
        }
        if state.closed {
            return None;
        }
        let (mut state, _) = self
            .topic
            .not_empty
            .wait_timeout(state, timeout)
            .unwrap_or_else(|e| e.into_inner());
        self.topic.pop(&mut state)
    }

    pub fn topic_name(&self) -> &str {
        &self.topic.name
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicU64, Ordering};
    use std::thread;

    #[test]
    fn best_effort_evicts_oldest() {
        let mut bus = Bus::new();
        bus.register("t", QosPolicy::best_effort(10)).unwrap();
        let sub = bus.subscribe("t").unwrap();
        let mut outcomes = Vec::new();
        for i in 1..=11 {
            outcomes.push(bus.publish("t", i).unwrap());
        }
        assert_eq!(outcomes.iter().filter(|o| **o == PublishOutcome::AcceptedWithEviction).count(), 1);
        assert_eq!(bus.stats("t").unwrap().dropped, 1);
        let got: Vec<i32> = std::iter::from_fn(|| sub.try_recv()).collect();
        assert_eq!(got, (2..=11).collect::<Vec<_>>());
    }

    #[test]
    fn reliable_blocks_until_consumed() {
        let mut bus = Bus::new();
        bus.register("r", QosPolicy::reliable(5)).unwrap();
        let bus = Arc::new(bus);
        let sub = bus.subscribe("r").unwrap();
        let published = Arc::new(AtomicU64::new(0));
        let producer = {
            let bus = Arc::clone(&bus);
            let published = Arc::clone(&published);
            thread::spawn(move || {
                for i in 0..6 {
                    bus.publish("r", i).unwrap();
                    published.fetch_add(1, Ordering::SeqCst);
                }
            })
        };
        thread::sleep(Duration::from_millis(100));
        assert_eq!(published.load(Ordering::SeqCst), 5, "6th publish must block");
        assert_eq!(sub.recv(), Some(0));
        producer.join().unwrap();
        assert_eq!(published.load(Ordering::SeqCst), 6);
        let rest: Vec<i32> = std::iter::from_fn(|| sub.try_recv()).collect();
        assert_eq!(rest, vec![1, 2, 3, 4, 5]);
        assert_eq!(bus.stats("r").unwrap().dropped, 0);
    }

    #[test]
    fn try_publish_hands_back_on_full_reliable() {
        let mut bus = Bus::new();
        bus.register("r", QosPolicy::reliable(1)).unwrap();
        assert_eq!(bus.try_publish("r", 1).unwrap(), Ok(PublishOutcome::Accepted));
        assert_eq!(bus.try_publish("r", 2).unwrap(), Err(2));
    }

    #[test]
    fn paced_consumer_loses_nothing() {
        for policy in [QosPolicy::best_effort(2), QosPolicy::reliable(2)] {
            let mut bus = Bus::new();
            bus.register("t", policy).unwrap();
            let sub = bus.subscribe("t").unwrap();
            let mut got = Vec::new();
            for i in 0..100 {
                bus.publish("t", i).unwrap();
                got.push(sub.try_recv().unwrap());
            }
            assert_eq!(got, (0..100).collect::<Vec<_>>());
            assert_eq!(bus.stats("t").unwrap().dropped, 0);
        }
    }

    #[test]
    fn routing_errors() {
        let mut bus: Bus<u8> = Bus::new();
        assert!(matches!(bus.publish("nope", 1), Err(PipelineError::UnknownTopic(_))));
        assert!(bus.subscribe("nope").is_err());
        bus.register("a", QosPolicy::reliable(1)).unwrap();
        assert!(matches!(bus.register("a", QosPolicy::reliable(1)), Err(PipelineError::DuplicateTopic(_))));
        assert!(bus.register("z", QosPolicy::reliable(0)).is_err());
        bus.close("a").unwrap();
        assert!(matches!(bus.publish("a", 1), Err(PipelineError::Closed(_))));
    }

    #[test]
    fn default_policies() {
        let d = QosPolicy::defaults();
        assert_eq!(d[TRACKED_OBJECTS], QosPolicy::best_effort(10));
        assert_eq!(d[CAMERA_POSE], QosPolicy::reliable(5));
        assert_eq!(d[SCENE_GRAPH], QosPolicy::reliable(10));
    }

    #[test]
    fn threaded_reliable_delivery_is_exact() {
        let mut bus = Bus::new();
        bus.register("r", QosPolicy::reliable(3)).unwrap();
        let bus = Arc::new(bus);
        let sub = bus.subscribe("r").unwrap();
        let producer = {
            let bus = Arc::clone(&bus);
            thread::spawn(move || {
                for i in 0..1000u32 {
                    bus.publish("r", i).unwrap();
                }
                bus.close("r").unwrap();
            })
        };
        let got: Vec<u32> = std::iter::from_fn(|| sub.recv()).collect();
        producer.join().unwrap();
        assert_eq!(got, (0..1000).collect::<Vec<_>>());
    }
}
