use std::path::Path;

use super::EvalError;
use crate::data_pipeline::{mkf_config_for_manifest, Dataset};
use crate::gru_net::{predict_stream, read_checkpoint, Checkpoint};
use crate::mkf::{run_filter, FilterMode, MkfConfig, StateEstimate};

/// A source of state estimates for a dataset.
#[derive(Debug, Clone)]
pub enum Estimator {
    /// Filter without the external velocity sensor.
    BaselineMkf,
    /// Filter with the external velocity sensor, unsmoothed.
    ReferenceMkf,
    /// The dataset's stored smoothed targets.
    Reference,
    Network { name: String, checkpoint: Box<Checkpoint> },
}

impl Estimator {
    pub fn network(name: &str, checkpoint: Checkpoint) -> Self {
        Estimator::Network {
            name: name.to_string(),
            checkpoint: Box::new(checkpoint),
        }
    }

    pub fn name(&self) -> &str {
        match self {
            Estimator::BaselineMkf => "baseline",
            Estimator::ReferenceMkf => "reference_mkf",
            Estimator::Reference => "reference",
            Estimator::Network { name, .. } => name,
        }
    }

    /// One estimate per frame.
    pub fn estimate(&self, ds: &Dataset) -> Result<Vec<StateEstimate>, EvalError> {
        match self {
            Estimator::BaselineMkf => run_mkf(ds, FilterMode::Baseline),
            Estimator::ReferenceMkf => run_mkf(ds, FilterMode::Reference),
            Estimator::Reference => ds.targets.clone().ok_or_else(|| EvalError::MissingSeries {
                dataset: ds.id(),
                series: "targets",
            }),
            Estimator::Network { checkpoint, .. } => Ok(run_network(checkpoint, ds)),
        }
    }

    /// Parses `baseline`, `reference_mkf`, `reference` or `NAME=CHECKPOINT_PATH`.
    pub fn parse(item: &str) -> Result<Self, EvalError> {
        match item.trim() {
            "baseline" => Ok(Estimator::BaselineMkf),
            "reference_mkf" => Ok(Estimator::ReferenceMkf),
            "reference" => Ok(Estimator::Reference),
            other => {
                let (name, path) = other
                    .split_once('=')
                    .ok_or_else(|| EvalError::Invalid(format!("unknown estimator `{other}`")))?;
                if name.is_empty() {
                    return Err(EvalError::Invalid(format!("estimator `{other}` has no name")));
                }
                Ok(Self::network(name, read_checkpoint(Path::new(path))?))
            }
        }
    }

    /// Comma-separated list of [`Estimator::parse`] items.
    pub fn parse_list(list: &str) -> Result<Vec<Self>, EvalError> {
        list.split(',')
            .filter(|s| !s.trim().is_empty())
            .map(Self::parse)
            .collect()
    }
}

/// Filter configured from the dataset's manifest, in the given mode.
pub fn mkf_config_for(ds: &Dataset, mode: FilterMode) -> Result<MkfConfig, EvalError> {
    Ok(mkf_config_for_manifest(&ds.manifest)?.with_mode(mode))
}

pub fn run_mkf(ds: &Dataset, mode: FilterMode) -> Result<Vec<StateEstimate>, EvalError> {
    let states = run_filter(&ds.frames, &mkf_config_for(ds, mode)?)?;
    Ok(states.into_iter().map(|s| s.mean).collect())
}

pub fn run_network(ck: &Checkpoint, ds: &Dataset) -> Vec<StateEstimate> {
    predict_stream(&ck.net, &ck.norm, &ds.frames, ck.warmup_steps)
        .into_iter()
        .map(|e| e.state)
        .collect()
}
