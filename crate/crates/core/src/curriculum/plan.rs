//! Stage plans and the step → stage walk.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::CurriculumError;
use crate::tokenizer::{Condition, ConditionSet};

/// Dataset split used by the default plan for its main stages.
pub const MAIN_SPLIT: &str = "main";
/// Dataset split used by the default plan's final quality stage.
pub const QUALITY_SPLIT: &str = "hq";

fn default_mixture() -> BTreeMap<String, f64> {
    BTreeMap::from([
        (MAIN_SPLIT.to_string(), 1.0),
        (QUALITY_SPLIT.to_string(), 1.0),
    ])
}

fn one() -> f64 {
    1.0
}

/// One training stage. Mixture weights are per-split sampling weights: every
/// example of split `s` is drawn with probability proportional to `mixture[s]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Stage {
    pub name: String,
    pub conditions: ConditionSet,
    pub steps: usize,
    #[serde(default = "default_mixture")]
    pub mixture: BTreeMap<String, f64>,
    /// Multiplier on the plan learning rate.
    #[serde(default = "one")]
    pub lr_scale: f64,
}

impl Stage {
    pub fn new(name: &str, conditions: ConditionSet, steps: usize) -> Self {
        Self {
            name: name.to_string(),
            conditions,
            steps,
            mixture: default_mixture(),
            lr_scale: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainStagePlan {
    pub stages: Vec<Stage>,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
}

fn default_lr() -> f64 {
    1e-5
}

fn default_batch() -> usize {
    8
}

impl Default for TrainStagePlan {
    fn default() -> Self {
        Self::default_for(16_000)
    }
}

impl TrainStagePlan {
    /// Validates the invariants: non-empty, positive step budgets, nested
    /// (monotone) condition sets, sane mixtures and rates.
    pub fn new(
        stages: Vec<Stage>,
        learning_rate: f64,
        batch_size: usize,
    ) -> Result<Self, CurriculumError> {
        let plan = Self {
            stages,
            learning_rate,
            batch_size,
        };
        plan.validate()?;
        Ok(plan)
    }

    /// Camera → camera+identity → camera+identity+depth in step ratios
    /// 4:2:2 of `total_steps`, then a quality stage of `total_steps/16` steps
    /// on the quality split at a tenth of the learning rate.
    pub fn default_for(total_steps: usize) -> Self {
        use Condition::*;
        let total = total_steps.max(8);
        let (a, b) = (total * 4 / 8, total * 2 / 8);
        let c = total - a - b;
        let mut quality = Stage::new("quality", ConditionSet::FULL, (total / 16).max(1));
        quality.mixture = BTreeMap::from([(QUALITY_SPLIT.to_string(), 1.0)]);
        quality.lr_scale = 0.1;
        Self {
            stages: vec![
                Stage::new("camera", ConditionSet::of(&[Camera]), a),
                Stage::new("camera+identity", ConditionSet::of(&[Camera, Identity]), b),
                Stage::new("camera+identity+depth", ConditionSet::FULL, c),
                quality,
            ],
            learning_rate: default_lr(),
            batch_size: default_batch(),
        }
    }

    pub fn validate(&self) -> Result<(), CurriculumError> {
        if self.stages.is_empty() {
            return Err(CurriculumError::EmptyPlan);
        }
        let bad = |m: String| Err(CurriculumError::InvalidPlan(m));
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad(format!(
                "learning rate {} must be finite and ≥ 0",
                self.learning_rate
            ));
        }
        if self.batch_size == 0 {
            return bad("batch size must be positive".into());
        }
        let mut enabled = ConditionSet::EMPTY;
        for s in &self.stages {
            if s.steps == 0 {
                return bad(format!("stage '{}' has a zero step budget", s.name));
            }
            if !enabled.is_subset(s.conditions) {
                return bad(format!(
                    "stage '{}' drops conditions enabled earlier ({} then {})",
                    s.name, enabled, s.conditions
                ));
            }
            enabled = s.conditions;
            if s.mixture.values().any(|&w| !(w >= 0.0 && w.is_finite()))
                || s.mixture.values().sum::<f64>() <= 0.0
            {
                return bad(format!(
                    "stage '{}' mixture weights must be ≥ 0 with a positive sum",
                    s.name
                ));
            }
            if !(s.lr_scale >= 0.0 && s.lr_scale.is_finite()) {
                return bad(format!(
                    "stage '{}' lr_scale must be finite and ≥ 0",
                    s.name
                ));
            }
        }
        Ok(())
    }

    pub fn total_steps(&self) -> usize {
        self.stages.iter().map(|s| s.steps).sum()
    }

    /// Index of the stage that global step `step` belongs to.
    pub fn stage_at(&self, step: usize) -> Option<usize> {
        let mut end = 0;
        for (k, s) in self.stages.iter().enumerate() {
            end += s.steps;
            if step < end {
                return Some(k);
            }
        }
        None
    }

    /// Global step at which stage `k` starts.
    pub fn stage_start(&self, k: usize) -> usize {
        self.stages[..k].iter().map(|s| s.steps).sum()
    }
}

/// `(global_step, stage index, enabled conditions)` for every step of the plan.
pub fn stage_schedule(
    plan: &TrainStagePlan,
) -> Result<impl Iterator<Item = (usize, usize, ConditionSet)> + '_, CurriculumError> {
    plan.validate()?;
    Ok(plan
        .stages
        .iter()
        .enumerate()
        .flat_map(|(k, s)| std::iter::repeat_n((k, s.conditions), s.steps))
        .enumerate()
        .map(|(step, (k, c))| (step, k, c)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use Condition::*;

    #[test]
    fn boundary_arithmetic() {
        let (sc, si, sd) = (40, 20, 20);
        let plan = TrainStagePlan::new(
            vec![
                Stage::new("c", ConditionSet::of(&[Camera]), sc),
                Stage::new("ci", ConditionSet::of(&[Camera, Identity]), si),
                Stage::new("cid", ConditionSet::FULL, sd),
            ],
            1e-5,
            4,
        )
        .unwrap();
        let sched: Vec<_> = stage_schedule(&plan).unwrap().collect();
        assert_eq!(sched.len(), sc + si + sd);
        assert_eq!(sched[sc - 1].1, 0);
        assert_eq!(sched[sc].1, 1);
        assert_eq!(sched[sc + si].1, 2);
        assert_eq!(plan.stage_at(sc + si + sd), None);
    }

    #[test]
    fn single_stage_is_constant() {
        let plan =
            TrainStagePlan::new(vec![Stage::new("all", ConditionSet::FULL, 7)], 1e-5, 1).unwrap();
        assert!(stage_schedule(&plan)
            .unwrap()
            .all(|(_, k, c)| k == 0 && c == ConditionSet::FULL));
    }

    #[test]
    fn invalid_plans_are_rejected() {
        assert!(matches!(
            TrainStagePlan::new(vec![], 1e-5, 1),
            Err(CurriculumError::EmptyPlan)
        ));
        let non_monotone = vec![
            Stage::new("ci", ConditionSet::of(&[Camera, Identity]), 3),
            Stage::new("c", ConditionSet::of(&[Camera]), 3),
        ];
        assert!(matches!(
            TrainStagePlan::new(non_monotone, 1e-5, 1),
            Err(CurriculumError::InvalidPlan(_))
        ));
        assert!(
            TrainStagePlan::new(vec![Stage::new("z", ConditionSet::FULL, 0)], 1e-5, 1).is_err()
        );
        let mut s = Stage::new("m", ConditionSet::FULL, 1);
        s.mixture = BTreeMap::from([("main".into(), 0.0)]);
        assert!(TrainStagePlan::new(vec![s], 1e-5, 1).is_err());
    }

    #[test]
    fn default_plan_shape() {
        let plan = TrainStagePlan::default_for(800);
        plan.validate().unwrap();
        let steps: Vec<usize> = plan.stages.iter().map(|s| s.steps).collect();
        assert_eq!(steps, vec![400, 200, 200, 50]);
        assert_eq!(plan.stages[3].lr_scale, 0.1);
        assert_eq!(plan.learning_rate, 1e-5);
        let json = serde_json::to_string(&plan).unwrap();
        assert_eq!(serde_json::from_str::<TrainStagePlan>(&json).unwrap(), plan);
    }

    fn set(bits: u8) -> ConditionSet {
        Condition::ALL
            .iter()
            .enumerate()
            .fold(ConditionSet::EMPTY, |s, (i, &c)| {
                if bits >> i & 1 == 1 {
                    s.with(c)
                } else {
                    s
                }
            })
    }

    proptest! {
        #[test]
        fn valid_plans_are_nested_and_exact(bits in prop::collection::vec(0u8..8, 1..5), steps in prop::collection::vec(1usize..20, 5)) {
            // Build nested sets by accumulating unions.
            let mut acc = ConditionSet::EMPTY;
            let stages: Vec<Stage> = bits.iter().enumerate().map(|(i, &b)| {
                for c in set(b).iter() { acc = acc.with(c); }
                Stage::new(&format!("s{i}"), acc, steps[i])
            }).collect();
            let plan = TrainStagePlan::new(stages, 1e-5, 2).unwrap();
            let mut prev = ConditionSet::EMPTY;
            let mut seen = 0;
            for (step, k, c) in stage_schedule(&plan).unwrap() {
                prop_assert_eq!(step, seen);
                prop_assert!(prev.is_subset(c));
                prop_assert!(step >= plan.stage_start(k) && step < plan.stage_start(k) + plan.stages[k].steps);
                prev = c;
                seen += 1;
            }
            prop_assert_eq!(seen, plan.total_steps());
        }
    }
}
