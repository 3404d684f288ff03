use ponderlab::stepfn::StepOutput;
use ponderlab::tape::Bound;
use ponderlab::{ParamSet, Result, StepFunction, Tape, Tensor, Var};

/// A step function that replays fixed per-example outputs.
///
/// The state is a single column counting the steps taken so far, which the
/// step uses to look up `lambda[b][n]` and `y[b][n]`. Steps past the end of
/// a script repeat its last entry.
pub struct ScriptedStep {
    pub lambda: Vec<Vec<f64>>,
    pub y: Vec<Vec<f64>>,
    params: ParamSet,
}

impl ScriptedStep {
    pub fn new(lambda: Vec<Vec<f64>>, y: Vec<Vec<f64>>) -> Self {
        assert_eq!(lambda.len(), y.len());
        ScriptedStep {
            lambda,
            y,
            params: ParamSet::new(),
        }
    }

    /// Every example halts with the same probability at every step and
    /// predicts `0.5 + 0.01·n` at step `n`.
    pub fn constant(batch: usize, lambda: f64, steps: usize) -> Self {
        let y: Vec<f64> = (1..=steps).map(|n| 0.5 + 0.01 * n as f64).collect();
        Self::new(vec![vec![lambda; steps]; batch], vec![y; batch])
    }

    pub fn batch(&self) -> usize {
        self.lambda.len()
    }

    fn column(&self, table: &[Vec<f64>], n: usize) -> Tensor {
        Tensor::column(table.iter().map(|row| row[n.min(row.len() - 1)]).collect())
    }
}

impl StepFunction for ScriptedStep {
    fn input_dim(&self) -> usize {
        1
    }

    fn state_dim(&self) -> usize {
        1
    }

    fn params(&self) -> &ParamSet {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    fn apply(&self, tape: &mut Tape, _bound: &Bound, _x: Var, h: Var) -> Result<StepOutput> {
        let n = tape.value(h).data()[0] as usize;
        let y_hat = tape.constant(self.column(&self.y, n));
        let lambda = tape.constant(self.column(&self.lambda, n));
        let one = tape.constant(Tensor::ones(&[self.batch(), 1]));
        let h_next = tape.add(h, one)?;
        Ok(StepOutput { y_hat, h_next, lambda })
    }
}
