//! Wengert tape: ops append a backward closure during the forward pass, and
//! `backward` replays them in exact reverse execution order. Gradients
//! accumulate additively wherever a tensor fans out.

use std::cell::{Cell, RefCell};
use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Result, TensorError};
use crate::tensor::Tensor;

static NEXT_TAPE_UID: AtomicU64 = AtomicU64::new(1);

pub struct Tape {
    uid: u64,
    records: RefCell<Vec<Box<dyn Fn()>>>,
    enabled: Cell<bool>,
}

impl Tape {
    pub fn new() -> Tape {
        Tape {
            uid: NEXT_TAPE_UID.fetch_add(1, Ordering::Relaxed),
            records: RefCell::new(Vec::new()),
            enabled: Cell::new(true),
        }
    }

    /// Tape that records nothing: forward values only, for inference.
    pub fn disabled() -> Tape {
        let t = Tape::new();
        t.enabled.set(false);
        t
    }

    pub fn is_enabled(&self) -> bool {
        self.enabled.get()
    }

    /// Mark `out` as produced here and push its backward closure.
    ///
    /// Op-author API: the closure must read `out`'s gradient via
    /// `grad_or_zeros` and push contributions into each differentiable input
    /// via `accumulate_grad`. Ops define outputs as fresh tensors, so the
    /// closure never aliases its own output with an input.
    pub fn record(&self, out: &Tensor, backward: impl Fn() + 'static) {
        out.set_tape_uid(self.uid);
        if self.enabled.get() {
            self.records.borrow_mut().push(Box::new(backward));
        }
    }

    pub fn len(&self) -> usize {
        self.records.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.borrow().is_empty()
    }

    /// Drop all recorded operations (end of a training step).
    pub fn clear(&self) {
        self.records.borrow_mut().clear();
    }

    /// Reverse pass from a scalar loss: seeds d(loss)/d(loss) = 1 and visits
    /// every recorded op in reverse execution order.
    pub fn backward(&self, loss: &Tensor) -> Result<()> {
        if loss.numel() != 1 {
            return Err(TensorError::Contract(format!(
                "backward requires a scalar loss, got {} elements",
                loss.numel()
            )));
        }
        match loss.tape_uid() {
            Some(uid) if uid == self.uid => {}
            _ => {
                return Err(TensorError::Contract(
                    "loss was not produced on this tape (detached graph)".into(),
                ))
            }
        }
        loss.seed_grad_ones();
        for record in self.records.borrow().iter().rev() {
            record();
        }
        Ok(())
    }
}

impl Default for Tape {
    fn default() -> Self {
        Tape::new()
    }
}
