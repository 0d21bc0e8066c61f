//! Class-incremental task scheduling.

use crate::error::{Error, Result};
use crate::numerics::RngStream;

const SCHEDULE_STREAM: u64 = 0x5343_4845_4455_4C45;

/// Ordered disjoint class groups, one per incremental task.
#[derive(Clone, Debug, PartialEq)]
pub struct TaskSchedule {
    classes_per_task: Vec<Vec<u16>>,
}

impl TaskSchedule {
    pub fn num_tasks(&self) -> usize {
        self.classes_per_task.len()
    }

    pub fn task_classes(&self, t: usize) -> &[u16] {
        &self.classes_per_task[t]
    }

    /// Classes introduced by tasks 0..=t.
    pub fn classes_up_to(&self, t: usize) -> Vec<u16> {
        let mut all: Vec<u16> = self.classes_per_task[..=t].concat();
        all.sort_unstable();
        all
    }
}

/// Seeded class permutation split into `tasks` contiguous groups.
///
/// When `tasks` does not divide `num_classes`, the first
/// `num_classes % tasks` tasks take one extra class.
pub fn schedule_tasks(num_classes: usize, tasks: usize, seed: u64) -> Result<TaskSchedule> {
    if tasks == 0 {
        return Err(Error::InvalidInput("schedule: T must be >= 1".into()));
    }
    if tasks > num_classes {
        return Err(Error::InvalidInput(format!(
            "schedule: T = {tasks} exceeds C = {num_classes}"
        )));
    }
    let mut order: Vec<u16> = (0..num_classes as u16).collect();
    RngStream::new(seed, SCHEDULE_STREAM).shuffle(&mut order);

    let base = num_classes / tasks;
    let extra = num_classes % tasks;
    let mut classes_per_task = Vec::with_capacity(tasks);
    let mut cursor = 0;
    for t in 0..tasks {
        let size = base + usize::from(t < extra);
        let mut group: Vec<u16> = order[cursor..cursor + size].to_vec();
        group.sort_unstable();
        classes_per_task.push(group);
        cursor += size;
    }
    Ok(TaskSchedule { classes_per_task })
}
