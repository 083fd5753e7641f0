//! Two-phase training.
//!
//! Phase I trains on the shared node types only and yields target predictions.
//! Confident predictions become pseudo-labels; phase II then trains on the
//! full pair, warm-started from phase I, with private types and completion.

mod checkpoint;
mod config;
mod model;
mod pseudo;

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use checkpoint::Checkpoint;
pub use config::{Ablation, TrainConfig};
pub use model::{
    accuracy, argmax_rows, classifier_loss, phase1_loss, phase2_loss, phase_loss, ForwardVars,
    LossComponents, Model, Phase,
};
pub use pseudo::{select_pseudo_labels, PseudoLabel, PseudoLabelSet};

use crate::autograd::Tape;
use crate::error::{Error, Result};
use crate::hin::{restrict_to_shared, Domain, DomainPair};
use crate::linalg::Matrix;
use crate::params::{Adam, AdamConfig};

const INIT_STREAM: u64 = 1;
const DROPOUT_STREAM: u64 = 2;

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// One logged optimisation step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub phase: Phase,
    pub epoch: usize,
    pub lambda: f64,
    pub components: LossComponents,
    pub total: f64,
}

/// Owns a model and its optimiser for one phase.
pub struct Trainer {
    pub model: Model,
    pub phase: Phase,
    pub pseudo: PseudoLabelSet,
    opt: Adam,
    rng: ChaCha8Rng,
    step: usize,
    total_steps: usize,
}

impl Trainer {
    pub fn new(
        model: Model,
        phase: Phase,
        pseudo: PseudoLabelSet,
        total_steps: usize,
        rng: ChaCha8Rng,
    ) -> Self {
        let mut opt = Adam::new(AdamConfig::with_lr(model.config.learning_rate));
        if !model.config.ablation.trains_completion() {
            for id in model.completion_params() {
                opt.freeze(id);
            }
        }
        Self {
            model,
            phase,
            pseudo,
            opt,
            rng,
            step: 0,
            total_steps,
        }
    }

    /// One full-graph step. The record holds the loss before the update.
    pub fn step(&mut self) -> Result<EpochRecord> {
        let lambda = self
            .model
            .config
            .grl
            .coefficient(self.step, self.total_steps);
        let mut tape = Tape::with_exec(self.model.exec);
        let vars = self.model.forward(
            &mut tape,
            self.phase,
            &self.pseudo,
            lambda,
            Some(&mut self.rng),
        )?;
        let total = tape.scalar(vars.total);
        if !total.is_finite() {
            return Err(Error::Diverged {
                phase: self.phase.number(),
                step: self.step,
            });
        }
        let grads = tape.backward(vars.total).params(&tape);
        self.opt.step(&mut self.model.store, &grads);
        let record = EpochRecord {
            phase: self.phase,
            epoch: self.step,
            lambda,
            components: vars.components(&tape),
            total,
        };
        self.step += 1;
        Ok(record)
    }

    pub fn run(&mut self, epochs: usize) -> Result<Vec<EpochRecord>> {
        (0..epochs).map(|_| self.step()).collect()
    }
}

#[derive(Debug, Clone)]
pub struct PhaseOneOutput {
    pub model: Model,
    pub trace: Vec<EpochRecord>,
    /// Class probabilities of the target's classified nodes.
    pub target_probs: Matrix,
}

#[derive(Debug, Clone)]
pub struct PhaseTwoOutput {
    pub model: Model,
    pub trace: Vec<EpochRecord>,
    pub pseudo: PseudoLabelSet,
}

fn training_view(pair: &DomainPair) -> Result<DomainPair> {
    pair.validate()?;
    Ok(pair.without_target_labels())
}

/// Phase I on the shared-type restriction of `pair`. Target labels are
/// stripped before anything else sees the pair.
pub fn train_phase1(pair: &DomainPair, config: &TrainConfig) -> Result<PhaseOneOutput> {
    let pair = restrict_to_shared(&training_view(pair)?);
    let mut init = stream_rng(config.seed, INIT_STREAM);
    let model = Model::build(&pair, config, &mut init)?;
    let mut trainer = Trainer::new(
        model,
        Phase::One,
        PseudoLabelSet::default(),
        config.epochs_phase1,
        stream_rng(config.seed, DROPOUT_STREAM),
    );
    let trace = trainer.run(config.epochs_phase1)?;
    let target_probs = trainer.model.predict_proba(Domain::Target)?;
    Ok(PhaseOneOutput {
        model: trainer.model,
        trace,
        target_probs,
    })
}

/// The pair phase II trains on under `config`'s ablation.
pub fn phase2_pair(pair: &DomainPair, config: &TrainConfig) -> DomainPair {
    if config.ablation.uses_private() {
        pair.clone()
    } else {
        restrict_to_shared(pair)
    }
}

/// Pseudo-labels phase II uses: none for the no-DA baseline.
pub fn phase2_pseudo_labels(
    phase1: &PhaseOneOutput,
    config: &TrainConfig,
) -> Result<PseudoLabelSet> {
    if config.ablation == Ablation::NoDa {
        return Ok(PseudoLabelSet::default());
    }
    select_pseudo_labels(
        &phase1.target_probs,
        config.pseudo_threshold,
        config.pseudo_max_fraction,
    )
}

pub fn train_phase2(
    pair: &DomainPair,
    phase1: &PhaseOneOutput,
    config: &TrainConfig,
) -> Result<PhaseTwoOutput> {
    let pair = phase2_pair(&training_view(pair)?, config);
    let pseudo = phase2_pseudo_labels(phase1, config)?;
    let mut init = stream_rng(config.seed, INIT_STREAM);
    let mut model = Model::build(&pair, config, &mut init)?;
    if !config.cold_start {
        model.store.warm_start_from(&phase1.model.store);
    }
    let mut trainer = Trainer::new(
        model,
        Phase::Two,
        pseudo.clone(),
        config.epochs_phase2,
        stream_rng(config.seed, DROPOUT_STREAM + 1),
    );
    let trace = trainer.run(config.epochs_phase2)?;
    Ok(PhaseTwoOutput {
        model: trainer.model,
        trace,
        pseudo,
    })
}

/// Outcome of a complete training run.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: Model,
    pub phase: Phase,
    pub trace: Vec<EpochRecord>,
    pub pseudo_labels: usize,
    pub seconds: f64,
}

/// Phase I, then phase II unless `phase_one_only`.
pub fn train(
    pair: &DomainPair,
    config: &TrainConfig,
    phase_one_only: bool,
) -> Result<TrainOutcome> {
    let start = Instant::now();
    let p1 = train_phase1(pair, config)?;
    if phase_one_only {
        return Ok(TrainOutcome {
            model: p1.model,
            phase: Phase::One,
            trace: p1.trace,
            pseudo_labels: 0,
            seconds: start.elapsed().as_secs_f64(),
        });
    }
    let p2 = train_phase2(pair, &p1, config)?;
    let mut trace = p1.trace;
    trace.extend(p2.trace);
    Ok(TrainOutcome {
        model: p2.model,
        phase: Phase::Two,
        trace,
        pseudo_labels: p2.pseudo.len(),
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// Target accuracy of `model` against the labels stored in `pair`.
pub fn evaluate(model: &Model, pair: &DomainPair) -> Result<f64> {
    let labels = pair
        .target
        .labels
        .as_ref()
        .ok_or_else(|| Error::contract("target graph carries no labels to evaluate against"))?;
    accuracy(&model.predict(Domain::Target)?, labels)
}
