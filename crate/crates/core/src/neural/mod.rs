//! Dependency-light neural machinery with explicit reverse passes.

pub mod adam;
pub mod checkpoint;
pub mod critic;
pub mod mlp;
pub mod policy;

pub use adam::AdamState;
pub use critic::{concat_rows, critic_net, CriticEnsemble, MinQ, NetSet, TwinCritic};
pub use mlp::{soft_update, Activation, Mlp, MlpCache};
pub use policy::{log_one_minus_tanh_sq, standard_normal, DeterministicPolicy, GaussianPolicy, PolicySample};
