use std::fmt;

use serde::{Deserialize, Serialize};

use super::{ClassId, StationId, TaskId};

/// One job: a task currently visiting a station, with its current class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Job {
    pub task: TaskId,
    pub class: ClassId,
}

/// Ordered job contents of every station.
///
/// Jobs are stored station by station in one buffer; `ends[i]` is the end of
/// station `i + 1`'s segment. Within a station, index 0 is the head of line
/// and new jobs join at the tail.
#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NetworkState {
    ends: Vec<u32>,
    jobs: Vec<Job>,
}

impl NetworkState {
    pub fn empty(stations: usize) -> Self {
        Self {
            ends: vec![0; stations],
            jobs: Vec::new(),
        }
    }

    /// Builds a state from per-station job lists (station 1 first).
    pub fn from_stations(stations: Vec<Vec<Job>>) -> Self {
        let mut ends = Vec::with_capacity(stations.len());
        let mut jobs = Vec::new();
        for s in stations {
            jobs.extend(s);
            ends.push(jobs.len() as u32);
        }
        Self { ends, jobs }
    }

    pub fn station_count(&self) -> usize {
        self.ends.len()
    }

    fn range(&self, station: StationId) -> std::ops::Range<usize> {
        let end = self.ends[station - 1] as usize;
        let start = if station == 1 { 0 } else { self.ends[station - 2] as usize };
        start..end
    }

    /// Jobs at station `i` (1-based), head first.
    #[inline]
    pub fn station(&self, station: StationId) -> &[Job] {
        &self.jobs[self.range(station)]
    }

    pub fn len(&self, station: StationId) -> usize {
        self.range(station).len()
    }

    pub fn total_jobs(&self) -> usize {
        self.jobs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.jobs.is_empty()
    }

    /// Station, position within it, and job for `task`, if present.
    pub fn locate(&self, task: TaskId) -> Option<(StationId, usize, Job)> {
        let k = self.jobs.iter().position(|j| j.task == task)?;
        let station = self.ends.iter().position(|&e| (e as usize) > k).expect("index within buffer") + 1;
        let start = self.range(station).start;
        Some((station, k - start, self.jobs[k]))
    }

    pub fn contains_task(&self, task: TaskId) -> bool {
        self.jobs.iter().any(|j| j.task == task)
    }

    pub fn iter_stations(&self) -> impl Iterator<Item = (StationId, &[Job])> + '_ {
        (1..=self.ends.len()).map(move |i| (i, self.station(i)))
    }

    /// Removes the job at `position` of `station`.
    pub(crate) fn remove(&mut self, station: StationId, position: usize) -> Job {
        let k = self.range(station).start + position;
        let job = self.jobs.remove(k);
        for e in &mut self.ends[station - 1..] {
            *e -= 1;
        }
        job
    }

    /// Appends `job` at the tail of `station`.
    pub(crate) fn push(&mut self, station: StationId, job: Job) {
        let k = self.ends[station - 1] as usize;
        self.jobs.insert(k, job);
        for e in &mut self.ends[station - 1..] {
            *e += 1;
        }
    }

    /// Canonical byte encoding: for each station in order, a length prefix
    /// followed by `(task, class)` pairs. Equal encodings iff equal states.
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(4 * self.ends.len() + 16 * self.jobs.len());
        for (_, jobs) in self.iter_stations() {
            out.extend_from_slice(&(jobs.len() as u32).to_le_bytes());
            for j in jobs {
                out.extend_from_slice(&j.task.to_le_bytes());
                out.extend_from_slice(&(j.class as u64).to_le_bytes());
            }
        }
        out
    }
}

impl fmt::Debug for NetworkState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, jobs) in self.iter_stations() {
            if i > 1 {
                write!(f, " ")?;
            }
            write!(f, "{i}:[")?;
            for (n, j) in jobs.iter().enumerate() {
                if n > 0 {
                    write!(f, ",")?;
                }
                write!(f, "{}/{}", j.task, j.class)?;
            }
            write!(f, "]")?;
        }
        write!(f, "}}")
    }
}
