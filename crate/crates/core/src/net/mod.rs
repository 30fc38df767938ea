//! The untrained encoder-decoder network, its reverse-mode gradients, and
//! the Adam optimizer used for the weight subproblem.

pub mod adam;
pub mod checkpoint;
pub mod layers;
pub mod network;
pub mod params;
pub mod spec;
pub mod theta;

pub use adam::adam_step;
pub use network::{backward, build_network, forward, layer_schema, make_input, Tape};
pub use params::{Gradients, LayerKind, LayerParams, ParamStore, ParamTensor};
pub use spec::NetSpec;
pub use theta::{solve_theta_subproblem, theta_objective, ThetaOutcome};
