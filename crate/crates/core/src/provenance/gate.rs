use std::collections::BTreeSet;

use parking_lot::{Condvar, Mutex};

struct Entry {
    ticket: u64,
    paths: BTreeSet<String>,
}

/// Admits workflow runs in arrival order; a run waits while any earlier
/// admitted or waiting run shares a path with it.
#[derive(Default)]
pub(crate) struct RunGate {
    queue: Mutex<(u64, Vec<Entry>)>,
    changed: Condvar,
}

pub(crate) struct Slot<'a> {
    gate: &'a RunGate,
    ticket: u64,
}

impl Drop for Slot<'_> {
    fn drop(&mut self) {
        let mut q = self.gate.queue.lock();
        q.1.retain(|e| e.ticket != self.ticket);
        self.gate.changed.notify_all();
    }
}

impl RunGate {
    pub fn enter(&self, paths: BTreeSet<String>) -> Slot<'_> {
        let mut q = self.queue.lock();
        let ticket = q.0;
        q.0 += 1;
        q.1.push(Entry { ticket, paths });
        loop {
            let pos = q.1.iter().position(|e| e.ticket == ticket).expect("own entry");
            let mine = &q.1[pos].paths;
            if !q.1[..pos].iter().any(|e| !e.paths.is_disjoint(mine)) {
                return Slot { gate: self, ticket };
            }
            self.changed.wait(&mut q);
        }
    }
}
