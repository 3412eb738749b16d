use crate::harness::RunConfig;
use crate::matrixcore::Matrix;
use crate::optim::StepRecord;

/// Loss and stationarity measure at one logged step, evaluated at the
/// weights the step starts from.
#[derive(Debug, Clone, PartialEq)]
pub struct StepLog {
    pub step: u64,
    pub loss: f64,
    pub psi: f64,
    /// `‖∇_ℓ f‖_*` per block.
    pub grad_nuclear: Vec<f64>,
}

/// Everything a run produced.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunTrace {
    /// Ordered by step, then layer. Only matrix layers carry records.
    pub records: Vec<StepRecord>,
    pub logs: Vec<StepLog>,
    pub initial_w_frob: Vec<f64>,
    pub final_w_frob: Vec<f64>,
    pub final_weights: Vec<Matrix>,
    pub final_loss: f64,
    pub final_psi: f64,
    pub seed: u64,
    pub config: Option<RunConfig>,
    /// Set when the run stopped on a non-finite update.
    pub aborted_at: Option<u64>,
}

impl RunTrace {
    pub fn layers(&self) -> Vec<usize> {
        let mut layers: Vec<usize> = self.records.iter().map(|r| r.layer).collect();
        layers.sort_unstable();
        layers.dedup();
        layers
    }

    pub fn layer_records(&self, layer: usize) -> impl Iterator<Item = &StepRecord> {
        self.records.iter().filter(move |r| r.layer == layer)
    }

    /// Records of the first logged step.
    pub fn first_step_records(&self) -> Vec<&StepRecord> {
        match self.records.first() {
            Some(first) => self
                .records
                .iter()
                .take_while(|r| r.step == first.step)
                .collect(),
            None => Vec::new(),
        }
    }

    /// Logged loss at `step`, if that step was logged.
    pub fn loss_at(&self, step: u64) -> Option<f64> {
        self.logs.iter().find(|l| l.step == step).map(|l| l.loss)
    }

    pub fn psi_series(&self) -> Vec<(u64, f64)> {
        self.logs.iter().map(|l| (l.step, l.psi)).collect()
    }
}
