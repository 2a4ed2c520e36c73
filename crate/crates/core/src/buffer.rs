//! Transitions and the ring-buffer replay memory.

use rand::Rng;

use crate::error::{Error, Result};
use crate::events::EventVector;
use crate::scalar::Scalar;

/// One environment step.
#[derive(Clone, Debug, PartialEq)]
pub struct Transition<T> {
    pub state: Vec<T>,
    pub action: Vec<T>,
    pub reward: T,
    pub next_state: Vec<T>,
    /// Terminal: bootstrapping stops here.
    pub done: bool,
    /// Time-limit cut. Stored for bookkeeping only, never masks targets.
    pub truncated: bool,
    pub events: EventVector,
}

/// A gathered minibatch in row-major flat arrays.
#[derive(Clone, Debug, Default)]
pub struct Batch<T> {
    pub len: usize,
    pub obs_dim: usize,
    pub act_dim: usize,
    pub n_events: usize,
    pub states: Vec<T>,
    pub actions: Vec<T>,
    pub rewards: Vec<T>,
    pub next_states: Vec<T>,
    /// `1 - done` per row.
    pub not_done: Vec<T>,
    /// `len x n_events`, entries 0 or 1.
    pub events: Vec<T>,
}

impl<T: Scalar> Batch<T> {
    /// Column `k` of the event matrix.
    pub fn event_column(&self, k: usize) -> Vec<T> {
        (0..self.len).map(|i| self.events[i * self.n_events + k]).collect()
    }
}

/// Fixed-capacity ring of transitions with struct-of-arrays storage.
#[derive(Clone, Debug)]
pub struct ReplayBuffer<T> {
    capacity: usize,
    obs_dim: usize,
    act_dim: usize,
    n_events: usize,
    write_cursor: usize,
    count: usize,
    states: Vec<T>,
    actions: Vec<T>,
    rewards: Vec<T>,
    next_states: Vec<T>,
    done: Vec<bool>,
    truncated: Vec<bool>,
    events: Vec<bool>,
}

impl<T: Scalar> ReplayBuffer<T> {
    pub fn new(capacity: usize, obs_dim: usize, act_dim: usize, n_events: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::Config("replay capacity must be positive".into()));
        }
        // storage grows lazily up to capacity
        Ok(Self {
            capacity,
            obs_dim,
            act_dim,
            n_events,
            write_cursor: 0,
            count: 0,
            states: Vec::new(),
            actions: Vec::new(),
            rewards: Vec::new(),
            next_states: Vec::new(),
            done: Vec::new(),
            truncated: Vec::new(),
            events: Vec::new(),
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    pub fn act_dim(&self) -> usize {
        self.act_dim
    }

    pub fn n_events(&self) -> usize {
        self.n_events
    }

    pub fn append(&mut self, t: &Transition<T>) -> Result<()> {
        self.push(&t.state, &t.action, t.reward, &t.next_state, t.done, t.truncated, &t.events)
    }

    /// Appends from borrowed parts, evicting the oldest entry when full.
    #[allow(clippy::too_many_arguments)]
    pub fn push(
        &mut self,
        state: &[T],
        action: &[T],
        reward: T,
        next_state: &[T],
        done: bool,
        truncated: bool,
        events: &EventVector,
    ) -> Result<()> {
        if state.len() != self.obs_dim || next_state.len() != self.obs_dim {
            return Err(Error::Shape(format!(
                "state has {} / next_state has {} entries, buffer expects {}",
                state.len(),
                next_state.len(),
                self.obs_dim
            )));
        }
        if action.len() != self.act_dim {
            return Err(Error::Shape(format!(
                "action has {} entries, buffer expects {}",
                action.len(),
                self.act_dim
            )));
        }
        if events.len() != self.n_events {
            return Err(Error::Shape(format!(
                "event vector has {} flags, buffer expects {}",
                events.len(),
                self.n_events
            )));
        }
        let one = T::one();
        if action.iter().any(|a| !a.is_finite() || *a > one || *a < -one) {
            return Err(Error::Shape("action components must lie in [-1, 1]".into()));
        }

        let slot = self.write_cursor;
        if self.count < self.capacity && slot == self.rewards.len() {
            self.states.extend_from_slice(state);
            self.actions.extend_from_slice(action);
            self.rewards.push(reward);
            self.next_states.extend_from_slice(next_state);
            self.done.push(done);
            self.truncated.push(truncated);
            self.events.extend(events.iter());
        } else {
            let (o, a, e) = (self.obs_dim, self.act_dim, self.n_events);
            self.states[slot * o..(slot + 1) * o].copy_from_slice(state);
            self.actions[slot * a..(slot + 1) * a].copy_from_slice(action);
            self.rewards[slot] = reward;
            self.next_states[slot * o..(slot + 1) * o].copy_from_slice(next_state);
            self.done[slot] = done;
            self.truncated[slot] = truncated;
            for (dst, src) in self.events[slot * e..(slot + 1) * e].iter_mut().zip(events.iter()) {
                *dst = src;
            }
        }
        self.write_cursor = (self.write_cursor + 1) % self.capacity;
        self.count = (self.count + 1).min(self.capacity);
        Ok(())
    }

    /// Physical slot of the `i`-th oldest stored transition.
    fn slot(&self, i: usize) -> usize {
        if self.count < self.capacity {
            i
        } else {
            (self.write_cursor + i) % self.capacity
        }
    }

    fn read_slot(&self, slot: usize) -> Transition<T> {
        let (o, a, e) = (self.obs_dim, self.act_dim, self.n_events);
        Transition {
            state: self.states[slot * o..(slot + 1) * o].to_vec(),
            action: self.actions[slot * a..(slot + 1) * a].to_vec(),
            reward: self.rewards[slot],
            next_state: self.next_states[slot * o..(slot + 1) * o].to_vec(),
            done: self.done[slot],
            truncated: self.truncated[slot],
            events: EventVector::new(self.events[slot * e..(slot + 1) * e].to_vec()),
        }
    }

    /// The `i`-th oldest stored transition.
    pub fn get(&self, i: usize) -> Option<Transition<T>> {
        (i < self.count).then(|| self.read_slot(self.slot(i)))
    }

    fn check_available(&self, n: usize) -> Result<()> {
        if n == 0 {
            return Err(Error::EmptyBatch);
        }
        if n > self.count {
            return Err(Error::InsufficientData { requested: n, available: self.count });
        }
        Ok(())
    }

    /// Slots drawn independently and uniformly, with replacement.
    ///
    /// Any `n >= 1` is accepted once something is stored; warmup gating is
    /// the trainer's job.
    pub fn sample_slots<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Vec<usize>> {
        if n == 0 {
            return Err(Error::EmptyBatch);
        }
        if self.count == 0 {
            return Err(Error::InsufficientData { requested: n, available: 0 });
        }
        Ok((0..n).map(|_| rng.random_range(0..self.count)).collect())
    }

    pub fn sample_uniform<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Vec<Transition<T>>> {
        Ok(self.sample_slots(n, rng)?.into_iter().map(|s| self.read_slot(s)).collect())
    }

    /// Uniform minibatch gathered straight into flat arrays.
    pub fn sample_batch<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Batch<T>> {
        let slots = self.sample_slots(n, rng)?;
        Ok(self.gather(&slots))
    }

    /// The `n` most recent transitions, oldest first.
    pub fn last_n(&self, n: usize) -> Result<Vec<Transition<T>>> {
        self.check_available(n)?;
        Ok((self.count - n..self.count).map(|i| self.read_slot(self.slot(i))).collect())
    }

    /// Event vectors of the `n` most recent transitions, oldest first.
    pub fn last_n_events(&self, n: usize) -> Result<Vec<EventVector>> {
        self.check_available(n)?;
        let e = self.n_events;
        Ok((self.count - n..self.count)
            .map(|i| {
                let s = self.slot(i);
                EventVector::new(self.events[s * e..(s + 1) * e].to_vec())
            })
            .collect())
    }

    /// Whether each of the `n` most recent transitions closed its episode
    /// (terminal or time-limit cut), oldest first.
    pub fn last_n_episode_ends(&self, n: usize) -> Result<Vec<bool>> {
        self.check_available(n)?;
        Ok((self.count - n..self.count)
            .map(|i| {
                let s = self.slot(i);
                self.done[s] || self.truncated[s]
            })
            .collect())
    }

    pub fn gather(&self, slots: &[usize]) -> Batch<T> {
        let (o, a, e) = (self.obs_dim, self.act_dim, self.n_events);
        let n = slots.len();
        let mut b = Batch {
            len: n,
            obs_dim: o,
            act_dim: a,
            n_events: e,
            states: Vec::with_capacity(n * o),
            actions: Vec::with_capacity(n * a),
            rewards: Vec::with_capacity(n),
            next_states: Vec::with_capacity(n * o),
            not_done: Vec::with_capacity(n),
            events: Vec::with_capacity(n * e),
        };
        for &s in slots {
            b.states.extend_from_slice(&self.states[s * o..(s + 1) * o]);
            b.actions.extend_from_slice(&self.actions[s * a..(s + 1) * a]);
            b.rewards.push(self.rewards[s]);
            b.next_states.extend_from_slice(&self.next_states[s * o..(s + 1) * o]);
            b.not_done.push(if self.done[s] { T::zero() } else { T::one() });
            b.events.extend(
                self.events[s * e..(s + 1) * e]
                    .iter()
                    .map(|&f| if f { T::one() } else { T::zero() }),
            );
        }
        b
    }
}
