//! PAC-Bayes information bottleneck training: the Gibbs-posterior energy
//! `U(w) = L(w) - beta log p(w)` with a Fisher-shaped Gaussian prior,
//! Langevin dynamics, temperature and step-size schedules, posterior
//! ensembles and flat binary checkpoints.

mod checkpoint;
mod prior;
mod sgld;
mod train;

pub use checkpoint::{read_checkpoint, write_checkpoint, Checkpoint};
pub use prior::{energy_grad, prior_neg_log_grad, EnergyGrad, LikelihoodScale, PriorSpec};
pub use sgld::{schedule, sgld_chain, sgld_step, ChainConfig, Decay, Schedule};
pub use train::{
    posterior_accuracy, posterior_predict, run_pib_training, run_pib_training_with_observer,
    PibOutcome, PosteriorSample, SgldConfig, StabilityMonitor,
};
