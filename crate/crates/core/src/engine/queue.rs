//! Execution queues: FIFO lanes that run one request at a time.

use std::cell::{Cell, RefCell};
use std::collections::VecDeque;
use std::rc::Rc;

use futures::channel::oneshot;
use futures::future::LocalBoxFuture;

use crate::error::{EngineError, EngineResult};
use crate::security::Sid;

pub(crate) type Job = Box<dyn FnOnce() -> LocalBoxFuture<'static, ()>>;

pub struct Queue {
    pub qid: u64,
    pub creds: Vec<Sid>,
    jobs: RefCell<VecDeque<(u64, Job)>>,
    running: Cell<bool>,
    closed: Cell<bool>,
    /// Chain of the job the worker is executing, if any.
    current: Cell<Option<u64>>,
    started: Cell<u64>,
}

impl Queue {
    pub(crate) fn new(qid: u64, creds: Vec<Sid>) -> Rc<Queue> {
        Rc::new(Queue {
            qid,
            creds,
            jobs: RefCell::new(VecDeque::new()),
            running: Cell::new(false),
            closed: Cell::new(false),
            current: Cell::new(None),
            started: Cell::new(0),
        })
    }

    pub fn is_idle(&self) -> bool {
        !self.running.get() && self.jobs.borrow().is_empty()
    }

    pub fn pending(&self) -> usize {
        self.jobs.borrow().len()
    }

    /// Number of jobs the worker has started so far.
    pub fn started(&self) -> u64 {
        self.started.get()
    }

    pub fn current_chain(&self) -> Option<u64> {
        self.current.get()
    }

    pub(crate) fn close(&self) {
        self.closed.set(true);
        self.jobs.borrow_mut().clear();
    }

    /// Appends a job. Returns true if a worker must be started.
    pub(crate) fn push(&self, chain: u64, job: Job) -> EngineResult<bool> {
        if self.closed.get() {
            return Err(EngineError::QueueClosed);
        }
        self.jobs.borrow_mut().push_back((chain, job));
        if self.running.get() {
            Ok(false)
        } else {
            self.running.set(true);
            Ok(true)
        }
    }

    /// Worker loop: drains the queue strictly in order.
    pub(crate) async fn work(self: Rc<Self>) {
        loop {
            let next = self.jobs.borrow_mut().pop_front();
            let Some((chain, job)) = next else {
                self.running.set(false);
                return;
            };
            self.started.set(self.started.get() + 1);
            self.current.set(Some(chain));
            job().await;
            self.current.set(None);
        }
    }
}

/// Wraps a result-producing future as a job plus a receiver for its result.
pub(crate) fn reply_job<T: 'static>(
    f: impl FnOnce() -> LocalBoxFuture<'static, EngineResult<T>> + 'static,
) -> (Job, oneshot::Receiver<EngineResult<T>>) {
    let (tx, rx) = oneshot::channel();
    let job: Job = Box::new(move || {
        Box::pin(async move {
            let r = f().await;
            let _ = tx.send(r);
        })
    });
    (job, rx)
}
