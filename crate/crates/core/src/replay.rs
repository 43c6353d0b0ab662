//! Uniform experience replay with n-step windows.
//!
//! Transitions live in a FIFO ring. A window starts at a uniformly chosen
//! stored transition and extends forward for up to `n` steps, stopping early
//! after a transition that ended its episode (terminal or truncated) or at
//! the newest stored transition. A window therefore never joins two
//! episodes.

use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub obs: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_obs: Vec<f64>,
    pub terminal: bool,
    pub truncated: bool,
}

/// One n-step window `(o_t, a_t, r_t..r_{t+m-1}, o_{t+m})`.
#[derive(Debug, Clone, PartialEq)]
pub struct NStepSample {
    pub obs: Vec<f64>,
    pub action: Vec<f64>,
    pub rewards: Vec<f64>,
    pub next_obs: Vec<f64>,
    /// True when the window ends on a real termination (no bootstrap).
    pub terminal: bool,
    /// Ring slot of the first transition.
    pub start: usize,
}

impl NStepSample {
    /// Effective window length `m`.
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }
}

/// `Σ_{i<m} γ^i r_i + (terminal ? 0 : γ^m · bootstrap)`.
pub fn nstep_return(rewards: &[f64], gamma: f64, bootstrap: f64, terminal: bool) -> f64 {
    // Horner from the back: r_0 + γ(r_1 + γ(... + γ·tail)).
    let tail = if terminal { 0.0 } else { bootstrap };
    rewards.iter().rev().fold(tail, |acc, &r| r + gamma * acc)
}

pub const DEFAULT_CAPACITY: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayBuffer {
    capacity: usize,
    obs_dim: usize,
    act_dim: usize,
    obs: Vec<f64>,
    next_obs: Vec<f64>,
    actions: Vec<f64>,
    rewards: Vec<f64>,
    terminal: Vec<bool>,
    truncated: Vec<bool>,
    episode: Vec<u64>,
    /// Slot the next store writes to.
    head: usize,
    len: usize,
    inserted: u64,
    current_episode: u64,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, obs_dim: usize, act_dim: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            capacity,
            obs_dim,
            act_dim,
            obs: Vec::new(),
            next_obs: Vec::new(),
            actions: Vec::new(),
            rewards: Vec::new(),
            terminal: Vec::new(),
            truncated: Vec::new(),
            episode: Vec::new(),
            head: 0,
            len: 0,
            inserted: 0,
            current_episode: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Total number of stores ever made.
    pub fn inserted(&self) -> u64 {
        self.inserted
    }

    /// Floats held by the storage vectors; bounded by the capacity.
    pub fn stored_floats(&self) -> usize {
        self.obs.len() + self.next_obs.len() + self.actions.len() + self.rewards.len()
    }

    pub fn store(&mut self, t: &Transition) -> Result<()> {
        if t.obs.len() != self.obs_dim || t.next_obs.len() != self.obs_dim || t.action.len() != self.act_dim {
            return Err(Error::Contract(format!(
                "transition dims obs {}/{} act {} vs buffer obs {} act {}",
                t.obs.len(),
                t.next_obs.len(),
                t.action.len(),
                self.obs_dim,
                self.act_dim
            )));
        }
        let i = self.head;
        if self.len < self.capacity {
            self.obs.extend_from_slice(&t.obs);
            self.next_obs.extend_from_slice(&t.next_obs);
            self.actions.extend_from_slice(&t.action);
            self.rewards.push(t.reward);
            self.terminal.push(t.terminal);
            self.truncated.push(t.truncated);
            self.episode.push(self.current_episode);
            self.len += 1;
        } else {
            let (od, ad) = (self.obs_dim, self.act_dim);
            self.obs[i * od..(i + 1) * od].copy_from_slice(&t.obs);
            self.next_obs[i * od..(i + 1) * od].copy_from_slice(&t.next_obs);
            self.actions[i * ad..(i + 1) * ad].copy_from_slice(&t.action);
            self.rewards[i] = t.reward;
            self.terminal[i] = t.terminal;
            self.truncated[i] = t.truncated;
            self.episode[i] = self.current_episode;
        }
        self.head = (self.head + 1) % self.capacity;
        self.inserted += 1;
        if t.terminal || t.truncated {
            self.current_episode += 1;
        }
        Ok(())
    }

    fn oldest(&self) -> usize {
        if self.len < self.capacity {
            0
        } else {
            self.head
        }
    }

    fn newest(&self) -> usize {
        (self.head + self.capacity - 1) % self.capacity
    }

    /// Ring slot of the `k`-th oldest stored transition.
    pub fn slot(&self, k: usize) -> usize {
        (self.oldest() + k) % self.capacity
    }

    pub fn get(&self, slot: usize) -> Transition {
        let (od, ad) = (self.obs_dim, self.act_dim);
        Transition {
            obs: self.obs[slot * od..(slot + 1) * od].to_vec(),
            action: self.actions[slot * ad..(slot + 1) * ad].to_vec(),
            reward: self.rewards[slot],
            next_obs: self.next_obs[slot * od..(slot + 1) * od].to_vec(),
            terminal: self.terminal[slot],
            truncated: self.truncated[slot],
        }
    }

    /// Episode id recorded for a slot (ids increase by one per episode end).
    pub fn episode_of(&self, slot: usize) -> u64 {
        self.episode[slot]
    }

    /// The n-step window starting at `slot`.
    pub fn window(&self, slot: usize, n: usize) -> NStepSample {
        assert!(n >= 1 && slot < self.len);
        let (od, ad) = (self.obs_dim, self.act_dim);
        let newest = self.newest();
        let mut rewards = Vec::with_capacity(n);
        let mut j = slot;
        let mut terminal = false;
        loop {
            debug_assert_eq!(self.episode[j], self.episode[slot]);
            rewards.push(self.rewards[j]);
            if self.terminal[j] {
                terminal = true;
                break;
            }
            if self.truncated[j] || j == newest || rewards.len() == n {
                break;
            }
            j = (j + 1) % self.capacity;
        }
        NStepSample {
            obs: self.obs[slot * od..(slot + 1) * od].to_vec(),
            action: self.actions[slot * ad..(slot + 1) * ad].to_vec(),
            rewards,
            next_obs: self.next_obs[j * od..(j + 1) * od].to_vec(),
            terminal,
            start: slot,
        }
    }

    /// Draws `k` windows with uniformly random starts.
    pub fn sample_nstep<R: Rng + ?Sized>(&self, k: usize, n: usize, rng: &mut R) -> Result<Vec<NStepSample>> {
        if self.is_empty() {
            return Err(Error::NotReady("replay buffer is empty".into()));
        }
        if n == 0 {
            return Err(Error::Contract("n-step window length must be >= 1".into()));
        }
        Ok((0..k)
            .map(|_| {
                let idx = rng.random_range(0..self.len);
                self.window(self.slot(idx), n)
            })
            .collect())
    }

    pub fn write_snapshot<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(b"PORB")?;
        w.write_all(&1u32.to_le_bytes())?;
        for v in [
            self.capacity as u64,
            self.obs_dim as u64,
            self.act_dim as u64,
            self.head as u64,
            self.len as u64,
            self.inserted,
            self.current_episode,
        ] {
            w.write_all(&v.to_le_bytes())?;
        }
        for arr in [&self.obs, &self.next_obs, &self.actions, &self.rewards] {
            for v in arr.iter() {
                w.write_all(&v.to_bits().to_le_bytes())?;
            }
        }
        for i in 0..self.len {
            let flags = self.terminal[i] as u8 | (self.truncated[i] as u8) << 1;
            w.write_all(&[flags])?;
            w.write_all(&self.episode[i].to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_snapshot<R: Read>(mut r: R) -> Result<Self> {
        let bad = |reason: &str| Error::Format {
            path: "<replay snapshot>".into(),
            reason: reason.to_string(),
        };
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != b"PORB" {
            return Err(bad("missing PORB magic"));
        }
        let mut b4 = [0u8; 4];
        r.read_exact(&mut b4)?;
        if u32::from_le_bytes(b4) != 1 {
            return Err(bad("unsupported snapshot version"));
        }
        let read_u64 = |r: &mut R| -> Result<u64> {
            let mut b = [0u8; 8];
            r.read_exact(&mut b)?;
            Ok(u64::from_le_bytes(b))
        };
        let mut header = [0u64; 7];
        for h in &mut header {
            *h = read_u64(&mut r)?;
        }
        let [capacity, obs_dim, act_dim, head, len, inserted, current_episode] = header;
        let (capacity, obs_dim, act_dim) = (capacity as usize, obs_dim as usize, act_dim as usize);
        let (head, len) = (head as usize, len as usize);
        if capacity == 0 || len > capacity || head >= capacity {
            return Err(bad("inconsistent header"));
        }
        let floats = |count: usize, r: &mut R| -> Result<Vec<f64>> {
            (0..count).map(|_| read_u64(r).map(f64::from_bits)).collect()
        };
        let obs = floats(len * obs_dim, &mut r)?;
        let next_obs = floats(len * obs_dim, &mut r)?;
        let actions = floats(len * act_dim, &mut r)?;
        let rewards = floats(len, &mut r)?;
        let mut terminal = Vec::with_capacity(len);
        let mut truncated = Vec::with_capacity(len);
        let mut episode = Vec::with_capacity(len);
        for _ in 0..len {
            let mut flag = [0u8; 1];
            r.read_exact(&mut flag)?;
            terminal.push(flag[0] & 1 != 0);
            truncated.push(flag[0] & 2 != 0);
            episode.push(read_u64(&mut r)?);
        }
        Ok(Self {
            capacity,
            obs_dim,
            act_dim,
            obs,
            next_obs,
            actions,
            rewards,
            terminal,
            truncated,
            episode,
            head,
            len,
            inserted,
            current_episode,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_snapshot(std::io::BufWriter::new(f))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        Self::read_snapshot(std::io::BufReader::new(f))
    }
}
