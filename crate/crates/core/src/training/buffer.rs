//! Episode storage and chunk sampling.

use std::collections::VecDeque;

use rand::Rng;

use crate::kinematics::ACTION_DIM;
use crate::signals::{DESCRIPTION_DIM, OBJECTIVE_DIM};
use crate::{Error, Result};

/// One rollout: per-step objective, action taken, measured description and
/// the clip's ideal unit action.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRecord {
    o: Vec<Vec<f64>>,
    a: Vec<Vec<f64>>,
    d_real: Vec<Vec<f64>>,
    m: Vec<Vec<f64>>,
}

impl EpisodeRecord {
    pub fn new(o: Vec<Vec<f64>>, a: Vec<Vec<f64>>, d_real: Vec<Vec<f64>>, m: Vec<Vec<f64>>) -> Result<Self> {
        let f = o.len();
        if f == 0 {
            return Err(Error::Contract("episode must have at least one step".into()));
        }
        for (name, seq, width) in [
            ("o", &o, OBJECTIVE_DIM),
            ("a", &a, ACTION_DIM),
            ("d_real", &d_real, DESCRIPTION_DIM),
            ("m", &m, ACTION_DIM),
        ] {
            if seq.len() != f {
                return Err(Error::Contract(format!("episode sequence '{name}' has {} steps, expected {f}", seq.len())));
            }
            if let Some(t) = seq.iter().position(|v| v.len() != width) {
                return Err(Error::Contract(format!("episode '{name}' step {t} has width {}, expected {width}", seq[t].len())));
            }
        }
        if a.iter().flatten().any(|u| !(0.0..=1.0).contains(u)) {
            return Err(Error::Validation("episode actions must lie in [0, 1]".into()));
        }
        Ok(EpisodeRecord { o, a, d_real, m })
    }

    pub fn len(&self) -> usize {
        self.o.len()
    }

    pub fn is_empty(&self) -> bool {
        self.o.is_empty()
    }

    pub fn o(&self) -> &[Vec<f64>] {
        &self.o
    }

    pub fn a(&self) -> &[Vec<f64>] {
        &self.a
    }

    pub fn d_real(&self) -> &[Vec<f64>] {
        &self.d_real
    }

    pub fn m(&self) -> &[Vec<f64>] {
        &self.m
    }
}

/// Bounded FIFO of episodes.
#[derive(Debug, Clone)]
pub struct EpisodeBuffer {
    capacity: usize,
    episodes: VecDeque<EpisodeRecord>,
    pushed: usize,
}

impl EpisodeBuffer {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::Config("buffer capacity must be positive".into()));
        }
        Ok(EpisodeBuffer {
            capacity,
            episodes: VecDeque::with_capacity(capacity.min(1024)),
            pushed: 0,
        })
    }

    /// Appends an episode, evicting the oldest when full.
    pub fn push(&mut self, episode: EpisodeRecord) {
        if self.episodes.len() == self.capacity {
            self.episodes.pop_front();
        }
        self.episodes.push_back(episode);
        self.pushed += 1;
    }

    pub fn len(&self) -> usize {
        self.episodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.episodes.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Episodes ever pushed, including evicted ones.
    pub fn total_pushed(&self) -> usize {
        self.pushed
    }

    pub fn get(&self, i: usize) -> Option<&EpisodeRecord> {
        self.episodes.get(i)
    }

    pub fn iter(&self) -> impl Iterator<Item = &EpisodeRecord> {
        self.episodes.iter()
    }
}

/// A window into one buffered episode.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChunkView {
    pub episode: usize,
    pub start: usize,
    /// Steps actually present; the rest of the `mask` is padding.
    pub valid: usize,
    pub mask: Vec<bool>,
}

impl ChunkView {
    pub fn range(&self) -> std::ops::Range<usize> {
        self.start..self.start + self.valid
    }
}

/// Draws `count` chunks of length `length`: a uniformly random episode and a
/// uniformly random start offset. Episodes shorter than `length` are taken
/// whole with a masked tail.
pub fn sample_chunks(buffer: &EpisodeBuffer, count: usize, length: usize, rng: &mut impl Rng) -> Result<Vec<ChunkView>> {
    if buffer.is_empty() {
        return Err(Error::State("cannot sample chunks from an empty buffer".into()));
    }
    if length < 2 {
        return Err(Error::Contract(format!("chunk length must be at least 2, got {length}")));
    }
    Ok((0..count)
        .map(|_| {
            let episode = rng.random_range(0..buffer.len());
            let f = buffer.episodes[episode].len();
            let (start, valid) = if f >= length {
                (rng.random_range(0..=f - length), length)
            } else {
                (0, f)
            };
            let mask = (0..length).map(|i| i < valid).collect();
            ChunkView {
                episode,
                start,
                valid,
                mask,
            }
        })
        .collect())
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn episode(f: usize, tag: f64) -> EpisodeRecord {
        EpisodeRecord::new(
            vec![vec![tag; OBJECTIVE_DIM]; f],
            vec![vec![0.5; ACTION_DIM]; f],
            vec![vec![0.0; DESCRIPTION_DIM]; f],
            vec![vec![0.5; ACTION_DIM]; f],
        )
        .unwrap()
    }

    #[test]
    fn eviction_is_oldest_first() {
        let mut b = EpisodeBuffer::new(3).unwrap();
        for k in 0..5 {
            b.push(episode(2, k as f64));
            assert!(b.len() <= 3);
        }
        let tags: Vec<f64> = b.iter().map(|e| e.o()[0][0]).collect();
        assert_eq!(tags, vec![2.0, 3.0, 4.0]);
        assert_eq!(b.total_pushed(), 5);
    }

    #[test]
    fn record_invariants() {
        assert!(EpisodeRecord::new(vec![], vec![], vec![], vec![]).is_err());
        let mut bad = episode(3, 0.0);
        bad.m.pop();
        assert!(EpisodeRecord::new(bad.o, bad.a, bad.d_real, bad.m).is_err());
    }

    #[test]
    fn chunk_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let empty = EpisodeBuffer::new(4).unwrap();
        assert!(matches!(sample_chunks(&empty, 1, 4, &mut rng), Err(Error::State(_))));

        let mut b = EpisodeBuffer::new(4).unwrap();
        b.push(episode(8, 0.0));
        let c = sample_chunks(&b, 3, 8, &mut rng).unwrap();
        assert!(c.iter().all(|c| c.start == 0 && c.valid == 8 && c.mask.iter().all(|m| *m)));
        assert!(sample_chunks(&b, 1, 1, &mut rng).is_err());

        let c = sample_chunks(&b, 1, 12, &mut rng).unwrap();
        assert_eq!(c[0].valid, 8);
        assert_eq!(c[0].mask.iter().filter(|m| !**m).count(), 4);
    }

    #[test]
    fn offsets_are_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut b = EpisodeBuffer::new(1).unwrap();
        b.push(episode(10 + 3, 0.0));
        let mut counts = [0usize; 4];
        for c in sample_chunks(&b, 10_000, 10, &mut rng).unwrap() {
            counts[c.start] += 1;
        }
        for n in counts {
            assert!((n as f64 - 2500.0).abs() <= 0.05 * 2500.0, "{counts:?}");
        }
    }
}
