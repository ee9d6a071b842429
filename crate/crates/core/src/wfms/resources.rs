use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResourceLock {
    pub resource: String,
    pub holder: Option<String>,
    pub queue: VecDeque<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Grant {
    Granted,
    Queued,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{instance_id} does not hold {resource}")]
pub struct NotHolder {
    pub instance_id: String,
    pub resource: String,
}

/// Shared resources with FIFO hand-over.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResourceTable {
    locks: BTreeMap<String, ResourceLock>,
}

impl ResourceTable {
    pub fn acquire(&mut self, instance_id: &str, resource: &str) -> Grant {
        let lock = self.locks.entry(resource.to_string()).or_insert_with(|| ResourceLock {
            resource: resource.to_string(),
            ..ResourceLock::default()
        });
        match &lock.holder {
            None => {
                lock.holder = Some(instance_id.to_string());
                Grant::Granted
            }
            Some(h) if h == instance_id => Grant::Granted,
            Some(_) => {
                if !lock.queue.iter().any(|q| q == instance_id) {
                    lock.queue.push_back(instance_id.to_string());
                }
                Grant::Queued
            }
        }
    }

    /// Releases and hands the resource to the queue head, which is returned.
    pub fn release(&mut self, instance_id: &str, resource: &str) -> Result<Option<String>, NotHolder> {
        let lock = self
            .locks
            .get_mut(resource)
            .filter(|l| l.holder.as_deref() == Some(instance_id))
            .ok_or_else(|| NotHolder {
                instance_id: instance_id.to_string(),
                resource: resource.to_string(),
            })?;
        lock.holder = lock.queue.pop_front();
        Ok(lock.holder.clone())
    }

    pub fn get(&self, resource: &str) -> Option<&ResourceLock> {
        self.locks.get(resource)
    }

    pub fn locks(&self) -> impl Iterator<Item = &ResourceLock> {
        self.locks.values()
    }
}
