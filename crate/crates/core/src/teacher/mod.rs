//! Multilayer-perceptron teacher: training, inference at any softmax
//! temperature, hidden-layer probes and a binary save format.

mod io;
mod net;
mod probe;
mod train;

pub use io::{MAGIC as NET_MAGIC, VERSION as NET_VERSION};
pub use net::{argmax, softmax_t, Activation, Architecture, ForwardPass, InputScaler, Layer, OutputKind, TeacherNet};
pub use probe::{train_probes, Probe, ProbeSet};
pub use train::{train, EarlyStop, EpochRecord, Gradients, Supervision, TrainSpec, TrainingLog, PROB_FLOOR};
