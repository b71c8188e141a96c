//! Stage one of the pipeline: build the p-value matrix with RL-specific
//! conditioning rules, choose the threshold at the largest normalized gap in
//! the sorted p-values, emit the causal graph, and score it against a known
//! ground truth.

use crate::data::{CausalGraph, DimensionSchema, PValueMatrix, TransitionDataset};
use crate::error::{FocusError, Result};
use crate::kci::{hsic_test, kci_test, linear_ci_test, KciConfig, TestResult};
use crate::seeding::split_seed;
use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Which variables to condition on when testing `X_t^i -> X_{t+1}^j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConditioningRule {
    /// Condition on all other time-t variables and on no time-(t+1)
    /// variables: blocks forks among the inputs without opening colliders
    /// among the outputs.
    FocusRule,
    /// Additionally condition on all time-(t+1) variables except the target;
    /// reproduces the conditioning ablation.
    AllVariables,
    /// Marginal tests only; diagnostic.
    NoConditioning,
}

/// Which independence test backs the matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CiTester {
    Kci,
    /// Partial correlation with the Fisher z-transform; the linear ablation.
    Linear,
}

/// Conditioning set for cell `(source_i, target_j)` under `rule`, expressed
/// as input indices (time t) and target indices (time t+1; index `n_s` is
/// the reward, treated as a t+1-epoch variable).
pub fn conditioning_sets(
    schema: &DimensionSchema,
    rule: ConditioningRule,
    source_i: usize,
    target_j: usize,
) -> (Vec<usize>, Vec<usize>) {
    match rule {
        ConditioningRule::NoConditioning => (Vec::new(), Vec::new()),
        ConditioningRule::FocusRule => {
            let t_vars = (0..schema.n_inputs()).filter(|&i| i != source_i).collect();
            (t_vars, Vec::new())
        }
        ConditioningRule::AllVariables => {
            let t_vars = (0..schema.n_inputs()).filter(|&i| i != source_i).collect();
            let t1_vars = (0..schema.n_targets()).filter(|&j| j != target_j).collect();
            (t_vars, t1_vars)
        }
    }
}

fn run_cell(
    ds: &TransitionDataset,
    inputs: &Array2<f64>,
    rule: ConditioningRule,
    tester: CiTester,
    cfg: &KciConfig,
    source_i: usize,
    target_j: usize,
) -> Result<TestResult> {
    let x = inputs.column(source_i);
    let y = ds.target_column(target_j);
    let (t_vars, t1_vars) = conditioning_sets(&ds.schema, rule, source_i, target_j);
    let d_z = t_vars.len() + t1_vars.len();
    let mut z = Array2::<f64>::zeros((ds.len(), d_z));
    for (c, &i) in t_vars.iter().enumerate() {
        z.column_mut(c).assign(&inputs.column(i));
    }
    for (c, &j) in t1_vars.iter().enumerate() {
        z.column_mut(t_vars.len() + c).assign(&ds.target_column(j));
    }
    match tester {
        CiTester::Kci => {
            if d_z == 0 {
                hsic_test(x, y.view(), cfg)
            } else {
                kci_test(x, y.view(), z.view(), cfg)
            }
        }
        CiTester::Linear => linear_ci_test(x, y.view(), z.view(), cfg),
    }
}

/// Run one independence test per (input, target) pair. Cells are independent
/// and run in parallel, each with a seed derived from its position so the
/// result does not depend on scheduling.
pub fn build_pvalue_matrix(
    ds: &TransitionDataset,
    rule: ConditioningRule,
    tester: CiTester,
    cfg: &KciConfig,
) -> Result<PValueMatrix> {
    cfg.validate()?;
    let n_inputs = ds.schema.n_inputs();
    let n_targets = ds.schema.n_targets();
    if ds.len() < 50 {
        return Err(FocusError::InvalidArgument(format!(
            "dataset has {} transitions; independence testing needs at least 50",
            ds.len()
        )));
    }
    let inputs = ds.input_matrix();
    let cells: Vec<(usize, usize)> = (0..n_inputs)
        .flat_map(|i| (0..n_targets).map(move |j| (i, j)))
        .collect();
    let results: Vec<Result<f64>> = cells
        .par_iter()
        .map(|&(i, j)| {
            let cell_cfg = KciConfig {
                seed: split_seed(cfg.seed, (i * n_targets + j) as u64),
                ..*cfg
            };
            run_cell(ds, &inputs, rule, tester, &cell_cfg, i, j)
                .map(|r| r.p_value)
                .map_err(|e| FocusError::TestFailure {
                    source_var: ds.schema.input_name(i).to_string(),
                    target_var: ds.schema.target_name(j),
                    inner: Box::new(e),
                })
        })
        .collect();
    let mut p = Array2::<f64>::zeros((n_inputs, n_targets));
    for ((i, j), r) in cells.into_iter().zip(results) {
        p[(i, j)] = r?;
    }
    PValueMatrix::new(ds.schema.clone(), p)
}

/// Threshold selection record: the ascending p-values, the chosen index into
/// them, and the normalized gap score at every split point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdReport {
    pub sorted_p: Vec<f64>,
    pub chosen_index: usize,
    pub p_star: f64,
    pub gap_scores: Vec<f64>,
}

/// Choose `p*` at the largest normalized gap of the ascending p-values
/// `p_1 <= ... <= p_n`: maximize `p_{i+1}/(i+1) - p_i/i` over 1-based
/// positions `i`, ties broken toward the smaller index (the sparser graph).
pub fn select_threshold_from_values(values: &[f64]) -> Result<ThresholdReport> {
    let mut sorted_p = values.to_vec();
    sorted_p.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted_p.len();
    if n < 2 || sorted_p.first() == sorted_p.last() {
        return Err(FocusError::Degenerate(
            "all p-values are identical; the gap rule cannot pick a threshold, set one manually"
                .into(),
        ));
    }
    // 0-based k corresponds to 1-based position i = k + 1
    let gap_scores: Vec<f64> = (0..n - 1)
        .map(|k| sorted_p[k + 1] / (k + 2) as f64 - sorted_p[k] / (k + 1) as f64)
        .collect();
    let mut chosen_index = 0;
    let mut best = f64::NEG_INFINITY;
    for (k, &score) in gap_scores.iter().enumerate() {
        if score > best {
            best = score;
            chosen_index = k;
        }
    }
    Ok(ThresholdReport {
        p_star: sorted_p[chosen_index],
        sorted_p,
        chosen_index,
        gap_scores,
    })
}

pub fn select_threshold(p_matrix: &PValueMatrix) -> Result<ThresholdReport> {
    let values: Vec<f64> = p_matrix.p.iter().copied().collect();
    select_threshold_from_values(&values)
}

/// Indicator graph: an edge wherever `p <= p_star` (boundary inclusive).
pub fn graph_from_pvalues(p_matrix: &PValueMatrix, p_star: f64) -> Result<CausalGraph> {
    if !(0.0 < p_star && p_star < 1.0) {
        return Err(FocusError::InvalidArgument(format!(
            "p_star must lie strictly inside (0, 1), got {p_star}"
        )));
    }
    let mask = p_matrix.p.mapv(|p| u8::from(p <= p_star));
    CausalGraph::new(p_matrix.schema.clone(), mask)
}

/// Classification-style score of a learned mask against the ground truth;
/// an edge is the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StructureScore {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

pub fn structure_accuracy(learned: &CausalGraph, truth: &CausalGraph) -> Result<StructureScore> {
    if learned.mask.dim() != truth.mask.dim() {
        return Err(FocusError::ShapeMismatch(format!(
            "graph shapes differ: {:?} vs {:?}",
            learned.mask.dim(),
            truth.mask.dim()
        )));
    }
    let mut tp = 0usize;
    let mut tn = 0usize;
    let mut fp = 0usize;
    let mut missed = 0usize;
    for (&l, &t) in learned.mask.iter().zip(truth.mask.iter()) {
        match (l, t) {
            (1, 1) => tp += 1,
            (0, 0) => tn += 1,
            (1, 0) => fp += 1,
            _ => missed += 1,
        }
    }
    let total = (tp + tn + fp + missed) as f64;
    let accuracy = (tp + tn) as f64 / total;
    let precision = if tp + fp > 0 {
        tp as f64 / (tp + fp) as f64
    } else if tp + missed == 0 {
        1.0
    } else {
        0.0
    };
    let recall = if tp + missed > 0 {
        tp as f64 / (tp + missed) as f64
    } else {
        1.0
    };
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Ok(StructureScore {
        accuracy,
        precision,
        recall,
        f1,
    })
}

/// Outcome of the full structure-learning stage.
#[derive(Debug, Clone)]
pub struct StructureResult {
    pub p_matrix: PValueMatrix,
    pub threshold: ThresholdReport,
    pub graph: CausalGraph,
}

/// Convenience wrapper: p-value matrix, threshold and graph in one call.
pub fn learn_structure(
    ds: &TransitionDataset,
    rule: ConditioningRule,
    tester: CiTester,
    cfg: &KciConfig,
) -> Result<StructureResult> {
    let p_matrix = build_pvalue_matrix(ds, rule, tester, cfg)?;
    let threshold = select_threshold(&p_matrix)?;
    let graph = graph_from_pvalues(&p_matrix, threshold.p_star)?;
    Ok(StructureResult {
        p_matrix,
        threshold,
        graph,
    })
}
