use std::path::Path;

use rerender_core::model::{baseline_accuracy, default_corpora, simulate_collaboration, split_holdout, Collaboration, CurvePoint, TextCorpus};
use serde::Serialize;

use crate::Failure;

/// Share of a user-supplied corpus held out for scoring.
pub const HOLDOUT_FRACTION: f64 = 0.15;
/// Accuracy share of the full-data baseline counted as converged.
pub const CONVERGED_SHARE: f64 = 0.95;

#[derive(Debug, Clone, Serialize)]
pub struct SimulationReport {
    pub users: usize,
    pub rate: usize,
    pub steps: usize,
    pub seed: u64,
    pub corpus_positives: usize,
    pub corpus_negatives: usize,
    pub baseline_accuracy: f64,
    /// First timestep at or above `CONVERGED_SHARE * baseline_accuracy`.
    pub converged_at: Option<u64>,
    pub final_accuracy: f64,
    #[serde(skip)]
    pub curve: Vec<CurvePoint>,
}

/// Reads a JSON corpus `{"positives": [...], "negatives": [...]}`.
pub fn load_corpus(path: &Path) -> Result<TextCorpus, Failure> {
    let bytes = std::fs::read(path).map_err(|e| Failure::usage(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_slice(&bytes).map_err(|e| Failure::usage(format!("{} is not a corpus: {e}", path.display())))
}

pub fn first_reaching(curve: &[CurvePoint], target: f64) -> Option<u64> {
    curve.iter().find(|p| p.accuracy >= target).map(|p| p.timestep)
}

/// Runs the simulation on `corpus` (a seeded split of it is held out) or on
/// the default synthetic corpus for the seed.
pub fn run(c: &Collaboration, corpus: Option<TextCorpus>) -> Result<SimulationReport, Failure> {
    let (train, holdout) = match corpus {
        Some(full) => split_holdout(&full, HOLDOUT_FRACTION, c.seed),
        None => default_corpora(c.seed),
    };
    let domain = |e: rerender_core::Error| Failure::domain(e.to_string());
    let curve = simulate_collaboration(c, &train, &holdout).map_err(domain)?;
    let baseline = baseline_accuracy(&train, &holdout).map_err(domain)?;
    Ok(SimulationReport {
        users: c.users,
        rate: c.rate,
        steps: c.steps,
        seed: c.seed,
        corpus_positives: train.positives.len(),
        corpus_negatives: train.negatives.len(),
        baseline_accuracy: baseline,
        converged_at: first_reaching(&curve, CONVERGED_SHARE * baseline),
        final_accuracy: curve.last().map_or(0.0, |p| p.accuracy),
        curve,
    })
}

/// `timestep,accumulated_positives,accuracy` rows.
pub fn write_csv<W: std::io::Write>(curve: &[CurvePoint], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for p in curve {
        w.serialize(p)?;
    }
    w.flush()?;
    Ok(())
}
