use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

/// What a callback may change between epochs.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingControl {
    pub learning_rate: f64,
    pub stop_training: bool,
}

/// Epoch-end hook. Receives the 0-based epoch within the phase and the merged
/// train/validation record (`loss`, `accuracy`, `val_loss`, ...).
pub trait Callback: Send + Sync {
    fn name(&self) -> String;

    fn on_epoch_end(&self, epoch: usize, record: &BTreeMap<String, f64>, control: &mut TrainingControl);
}

struct FnCallback<F> {
    name: String,
    f: F,
}

impl<F> Callback for FnCallback<F>
where
    F: Fn(usize, &BTreeMap<String, f64>, &mut TrainingControl) + Send + Sync,
{
    fn name(&self) -> String {
        self.name.clone()
    }

    fn on_epoch_end(&self, epoch: usize, record: &BTreeMap<String, f64>, control: &mut TrainingControl) {
        (self.f)(epoch, record, control)
    }
}

/// Shared handle to a callback, cheap to clone into configs.
#[derive(Clone)]
pub struct CallbackHandle(Arc<dyn Callback>);

impl CallbackHandle {
    pub fn new(callback: impl Callback + 'static) -> Self {
        CallbackHandle(Arc::new(callback))
    }

    pub fn from_fn<F>(name: impl Into<String>, f: F) -> Self
    where
        F: Fn(usize, &BTreeMap<String, f64>, &mut TrainingControl) + Send + Sync + 'static,
    {
        Self::new(FnCallback {
            name: name.into(),
            f,
        })
    }

    pub fn name(&self) -> String {
        self.0.name()
    }

    pub fn on_epoch_end(&self, epoch: usize, record: &BTreeMap<String, f64>, control: &mut TrainingControl) {
        self.0.on_epoch_end(epoch, record, control)
    }
}

impl fmt::Debug for CallbackHandle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CallbackHandle({})", self.name())
    }
}

impl PartialEq for CallbackHandle {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.0, &other.0)
    }
}

/// Multiplies the learning rate by `factor` at the end of each listed epoch.
pub fn step_schedule(epochs: Vec<usize>, factor: f64) -> CallbackHandle {
    CallbackHandle::from_fn("step_schedule", move |epoch, _, control| {
        if epochs.contains(&epoch) {
            control.learning_rate *= factor;
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Mutex;

    #[test]
    fn from_fn_invokes_closure() {
        let seen = Arc::new(Mutex::new(Vec::new()));
        let sink = seen.clone();
        let cb = CallbackHandle::from_fn("rec", move |e, r, _| {
            sink.lock().unwrap().push((e, r["loss"]));
        });
        let mut control = TrainingControl {
            learning_rate: 0.1,
            stop_training: false,
        };
        let record = BTreeMap::from([("loss".to_string(), 0.5)]);
        cb.on_epoch_end(3, &record, &mut control);
        assert_eq!(*seen.lock().unwrap(), vec![(3, 0.5)]);
        assert_eq!(cb.name(), "rec");
        assert_eq!(cb, cb.clone());
    }

    #[test]
    fn schedule_scales_rate() {
        let cb = step_schedule(vec![1], 0.5);
        let mut control = TrainingControl {
            learning_rate: 0.1,
            stop_training: false,
        };
        cb.on_epoch_end(0, &BTreeMap::new(), &mut control);
        assert_eq!(control.learning_rate, 0.1);
        cb.on_epoch_end(1, &BTreeMap::new(), &mut control);
        assert_eq!(control.learning_rate, 0.05);
    }
}
