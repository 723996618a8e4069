use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use crate::datalog::{CompiledStratum, Engine, EvalError, EvalStats, Evaluation, StratumStats};
use crate::facts::Relation;

use super::ExecutionPlan;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StageReport {
    pub stage: usize,
    pub stats: StratumStats,
    pub elapsed: Duration,
}

/// A plan being executed one stage at a time. Stages are block-oriented:
/// each starts only after the previous one has finished, so execution can
/// be paused or abandoned at any stage boundary.
pub struct PlanExecution<'p> {
    plan: &'p ExecutionPlan,
    engine: Engine,
    next: usize,
    reports: Vec<StageReport>,
}

impl<'p> PlanExecution<'p> {
    pub fn new(plan: &'p ExecutionPlan, edb: &BTreeMap<String, Relation>) -> Self {
        PlanExecution { plan, engine: Engine::new(&plan.program, edb), next: 0, reports: Vec::new() }
    }

    pub fn set_parallel(&mut self, parallel: bool) {
        self.engine.set_parallel(parallel);
    }

    pub fn is_done(&self) -> bool {
        self.next >= self.plan.stages.len()
    }

    pub fn completed_stages(&self) -> usize {
        self.next
    }

    pub fn reports(&self) -> &[StageReport] {
        &self.reports
    }

    /// Runs the next stage; returns false when nothing was left to run.
    pub fn run_next_stage(&mut self) -> Result<bool, EvalError> {
        let Some(stage) = self.plan.stages.get(self.next) else { return Ok(false) };
        let start = Instant::now();
        let compiled: CompiledStratum = self.engine.compile(&stage.rules, &stage.targets)?;
        let stats = self.engine.run_stratum(&compiled)?;
        self.reports.push(StageReport { stage: stage.id, stats, elapsed: start.elapsed() });
        self.next += 1;
        Ok(true)
    }

    /// Runs stages until done or until `keep_going` says stop before a stage.
    pub fn run_while(&mut self, mut keep_going: impl FnMut(usize) -> bool) -> Result<bool, EvalError> {
        while !self.is_done() {
            if !keep_going(self.next) {
                return Ok(false);
            }
            self.run_next_stage()?;
        }
        Ok(true)
    }

    pub fn approx_bytes(&self) -> usize {
        self.engine.peak_bytes().max(self.engine.approx_bytes())
    }

    /// Output relations; only meaningful once every stage has run.
    pub fn finish(self) -> Result<Evaluation, EvalError> {
        let relations = self.engine.relations(self.plan.outputs().iter())?;
        let stats = EvalStats { strata: self.reports.into_iter().map(|r| r.stats).collect(), peak_bytes: self.engine.peak_bytes() };
        Ok(Evaluation { relations, stats })
    }
}

/// Runs every stage and returns the output relations.
pub fn evaluate_plan(plan: &ExecutionPlan, edb: &BTreeMap<String, Relation>) -> Result<Evaluation, EvalError> {
    let diags = crate::datalog::check_safety(&plan.program);
    if !diags.is_empty() {
        return Err(EvalError::Unsafe(diags));
    }
    let mut run = PlanExecution::new(plan, edb);
    run.run_while(|_| true)?;
    run.finish()
}
