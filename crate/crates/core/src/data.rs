//! Dense worker × task reading matrices.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct WorkerId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TaskId(pub u32);

impl fmt::Display for WorkerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

impl fmt::Display for TaskId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// Readings of every participating worker on every task, row-major by
/// participant.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    participants: Vec<WorkerId>,
    tasks: Vec<TaskId>,
    values: Vec<f64>,
}

#[derive(Debug, Deserialize, Serialize)]
struct Reading {
    worker_id: u32,
    task_id: u32,
    value: f64,
}

impl DataMatrix {
    pub fn new(participants: Vec<WorkerId>, tasks: Vec<TaskId>, values: Vec<f64>) -> Result<Self> {
        if values.len() != participants.len() * tasks.len() {
            return Err(Error::Data(format!(
                "expected {} readings for {} participants x {} tasks, got {}",
                participants.len() * tasks.len(),
                participants.len(),
                tasks.len(),
                values.len()
            )));
        }
        if participants.iter().collect::<HashSet<_>>().len() != participants.len() {
            return Err(Error::Data("duplicate participant identifier".into()));
        }
        if tasks.iter().collect::<HashSet<_>>().len() != tasks.len() {
            return Err(Error::Data("duplicate task identifier".into()));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::Data(format!("non-finite reading {v}")));
        }
        Ok(Self {
            participants,
            tasks,
            values,
        })
    }

    /// Builds a matrix from per-participant rows.
    pub fn from_rows(participants: Vec<WorkerId>, tasks: Vec<TaskId>, rows: &[Vec<f64>]) -> Result<Self> {
        if rows.len() != participants.len() || rows.iter().any(|r| r.len() != tasks.len()) {
            return Err(Error::Data("row shape does not match participants x tasks".into()));
        }
        let values = rows.iter().flatten().copied().collect();
        Self::new(participants, tasks, values)
    }

    pub fn participants(&self) -> &[WorkerId] {
        &self.participants
    }

    pub fn tasks(&self) -> &[TaskId] {
        &self.tasks
    }

    pub fn participant_count(&self) -> usize {
        self.participants.len()
    }

    pub fn task_count(&self) -> usize {
        self.tasks.len()
    }

    pub fn row(&self, participant: usize) -> &[f64] {
        let m = self.tasks.len();
        &self.values[participant * m..(participant + 1) * m]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        (0..self.participants.len()).map(move |i| self.row(i))
    }

    pub fn get(&self, participant: usize, task: usize) -> f64 {
        self.values[participant * self.tasks.len() + task]
    }

    pub fn position(&self, worker: WorkerId) -> Option<usize> {
        self.participants.iter().position(|&w| w == worker)
    }

    /// Loads `worker_id,task_id,value` CSV. Every worker present must have a
    /// reading for every task present, exactly once. Participants and tasks
    /// are ordered by identifier.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["worker_id", "task_id", "value"] {
            return Err(Error::Data(format!(
                "expected header `worker_id,task_id,value`, found `{}`",
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let mut cells: HashMap<(u32, u32), f64> = HashMap::new();
        let mut workers = BTreeSet::new();
        let mut tasks = BTreeSet::new();
        for rec in rdr.deserialize() {
            let r: Reading = rec?;
            if cells.insert((r.worker_id, r.task_id), r.value).is_some() {
                return Err(Error::Data(format!(
                    "duplicate reading for worker {} task {}",
                    r.worker_id, r.task_id
                )));
            }
            workers.insert(r.worker_id);
            tasks.insert(r.task_id);
        }
        if workers.is_empty() {
            return Err(Error::Data("no readings".into()));
        }
        let mut values = Vec::with_capacity(workers.len() * tasks.len());
        for &w in &workers {
            for &t in &tasks {
                let v = cells.get(&(w, t)).ok_or_else(|| {
                    Error::Data(format!("worker {w} has no reading for task {t}; matrix must be dense"))
                })?;
                values.push(*v);
            }
        }
        Self::new(
            workers.into_iter().map(WorkerId).collect(),
            tasks.into_iter().map(TaskId).collect(),
            values,
        )
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for (i, &p) in self.participants.iter().enumerate() {
            for (j, &t) in self.tasks.iter().enumerate() {
                w.serialize(Reading {
                    worker_id: p.0,
                    task_id: t.0,
                    value: self.get(i, j),
                })?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Per-task `(min, max)` of submitted readings.
    pub fn task_ranges(&self) -> Vec<(f64, f64)> {
        (0..self.task_count())
            .map(|j| {
                self.rows().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| {
                    (lo.min(r[j]), hi.max(r[j]))
                })
            })
            .collect()
    }

    /// Participant rows keyed by identifier.
    pub fn by_worker(&self) -> BTreeMap<WorkerId, &[f64]> {
        self.participants
            .iter()
            .enumerate()
            .map(|(i, &w)| (w, self.row(i)))
            .collect()
    }
}
