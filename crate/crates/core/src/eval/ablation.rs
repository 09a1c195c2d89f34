//! Runs a grid of pipeline configurations, each against fresh memory.

use serde::{Deserialize, Serialize};

use crate::backends::ModelBackends;
use crate::pipeline::{config_echo, run_cell, DatasetRun, PipelineConfig};
use crate::prompt::PromptLayout;
use crate::types::Example;

use super::{EvalReport, VqaSample};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationCell {
    pub label: String,
    pub config: PipelineConfig,
}

impl AblationCell {
    pub fn new(config: PipelineConfig) -> Self {
        Self { label: config.label(), config }
    }
}

#[derive(Debug)]
pub enum CellOutcome {
    Completed(Box<DatasetRun>),
    Failed(String),
}

#[derive(Debug)]
pub struct CellResult {
    pub label: String,
    pub report: EvalReport,
    pub outcome: CellOutcome,
}

impl CellResult {
    /// The cell could not run, or ran without answering any sample.
    pub fn failed_entirely(&self) -> bool {
        match &self.outcome {
            CellOutcome::Failed(_) => true,
            CellOutcome::Completed(run) => run.report.answered == 0,
        }
    }
}

/// One result per cell, in grid order. A cell that errors does not stop
/// the others.
pub fn run_ablation(
    backends: &dyn ModelBackends,
    grid: &[AblationCell],
    samples: &[VqaSample],
    seed_pool: &[Example],
) -> Result<Vec<CellResult>, String> {
    if grid.is_empty() {
        return Err("ablation grid is empty".into());
    }
    Ok(grid
        .iter()
        .map(|cell| {
            log::info!("ablation cell {}", cell.label);
            match run_cell(backends, &cell.config, samples, seed_pool) {
                Ok(mut run) => {
                    run.report.label = cell.label.clone();
                    CellResult { label: cell.label.clone(), report: run.report.clone(), outcome: CellOutcome::Completed(Box::new(run)) }
                }
                Err(e) => {
                    log::error!("ablation cell {} failed: {e}", cell.label);
                    CellResult {
                        label: cell.label.clone(),
                        report: EvalReport::failed_cell(cell.label.clone(), config_echo(&cell.config)),
                        outcome: CellOutcome::Failed(e.to_string()),
                    }
                }
            }
        })
        .collect())
}

/// Both generation and retrieval switched on and off.
pub fn module_grid(base: &PipelineConfig) -> Vec<AblationCell> {
    let mut cells = Vec::new();
    for enable_oeg in [false, true] {
        for enable_mka in [false, true] {
            cells.push(AblationCell::new(PipelineConfig { enable_oeg, enable_mka, ..base.clone() }));
        }
    }
    cells
}

pub const SEED_SIZES: [usize; 4] = [0, 60, 200, 400];

/// Retrieval on with memory pre-seeded at each size; region-level
/// generation off so only seeded memory varies.
pub fn seed_grid(base: &PipelineConfig, sizes: &[usize]) -> Vec<AblationCell> {
    sizes
        .iter()
        .map(|&seed_k| AblationCell::new(PipelineConfig { enable_oeg: false, enable_mka: true, seed_k, ..base.clone() }))
        .collect()
}

pub fn layout_grid(base: &PipelineConfig) -> Vec<AblationCell> {
    PromptLayout::ALL
        .iter()
        .map(|&layout| {
            let mut c = base.clone();
            c.prompt.layout = layout;
            AblationCell::new(c)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum GridKind {
    #[default]
    Modules,
    Seeds,
    Layouts,
}

impl std::str::FromStr for GridKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "modules" => Ok(GridKind::Modules),
            "seeds" => Ok(GridKind::Seeds),
            "layouts" => Ok(GridKind::Layouts),
            other => Err(format!("unknown grid {other:?} (expected modules, seeds or layouts)")),
        }
    }
}

pub fn grid(kind: GridKind, base: &PipelineConfig) -> Vec<AblationCell> {
    match kind {
        GridKind::Modules => module_grid(base),
        GridKind::Seeds => seed_grid(base, &SEED_SIZES),
        GridKind::Layouts => layout_grid(base),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::{BackendClient, Endpoint, MockConfig, MockTransport, MockWorld};
    use std::sync::Arc;

    #[test]
    fn grid_shapes() {
        let base = PipelineConfig::default();
        assert_eq!(module_grid(&base).len(), 4);
        let seeds = seed_grid(&base, &SEED_SIZES);
        assert_eq!(seeds.iter().map(|c| c.config.seed_k).collect::<Vec<_>>(), SEED_SIZES);
        let layouts = layout_grid(&base);
        assert_eq!(layouts.len(), 2);
        assert_ne!(layouts[0].label, layouts[1].label);
    }

    #[test]
    fn failing_cell_is_isolated() {
        let w = Arc::new(MockWorld::new(MockConfig::default()));
        let b = BackendClient::new(MockTransport(w.clone()), 0);
        let samples = w.synthetic_dataset(3);
        let pool = w.synthetic_seed_examples(2);
        let base = PipelineConfig::default();
        // k=60 cannot be seeded from two examples
        let results = run_ablation(&b, &seed_grid(&base, &[0, 60]), &samples, &pool).unwrap();
        assert_eq!(results.len(), 2);
        assert!(!results[0].failed_entirely());
        assert!(results[1].failed_entirely());
        assert!(run_ablation(&b, &[], &samples, &pool).is_err());

        let w = Arc::new(MockWorld::new(MockConfig::default().failing(Endpoint::Llm)));
        let b = BackendClient::new(MockTransport(w.clone()), 0);
        let results = run_ablation(&b, &layout_grid(&base), &samples, &pool).unwrap();
        assert!(results.iter().all(CellResult::failed_entirely));
    }
}
