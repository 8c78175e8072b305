//! Simulate → observe → summarize, on the observed dataset's grids.

use rand::Rng;

use crate::error::Result;
use crate::model::{project_observation, ModelSpec, ObservationMode, ObservedDataset, ParamVector};
use crate::simulate::simulate;
use crate::summaries::{summarize, ReferenceGrid, SummaryVector};

#[derive(Debug, Clone)]
pub struct SyntheticSummarizer {
    pub model: ModelSpec,
    pub mode: ObservationMode,
    pub reference: ReferenceGrid,
}

impl SyntheticSummarizer {
    pub fn new(model: ModelSpec, mode: ObservationMode, observed: &SummaryVector) -> Result<Self> {
        model.validate()?;
        Ok(SyntheticSummarizer {
            model,
            mode,
            reference: ReferenceGrid::of(observed),
        })
    }

    pub fn dataset<R: Rng + ?Sized>(&self, params: &ParamVector, rng: &mut R) -> Result<ObservedDataset> {
        let path = simulate(&self.model, params, rng)?;
        Ok(project_observation(&path, self.mode))
    }

    /// Summary of one synthetic dataset; exactly one `simulate` call.
    pub fn summary<R: Rng + ?Sized>(&self, params: &ParamVector, rng: &mut R) -> Result<SummaryVector> {
        let ds = self.dataset(params, rng)?;
        summarize(&ds, self.model.step, Some(&self.reference))
    }
}

/// Simulates the observation for `params` and summarizes it on its own grid.
pub fn observe<R: Rng + ?Sized>(
    model: &ModelSpec,
    mode: ObservationMode,
    params: &ParamVector,
    rng: &mut R,
) -> Result<(ObservedDataset, SummaryVector)> {
    model.validate()?;
    params.validate_for(model)?;
    let path = simulate(model, params, rng)?;
    let ds = project_observation(&path, mode);
    let s = summarize(&ds, model.step, None)?;
    Ok((ds, s))
}
