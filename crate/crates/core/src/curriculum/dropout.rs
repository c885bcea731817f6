//! Per-sample condition dropout (required by classifier-free guidance).

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::CurriculumError;
use crate::diffusion::NULL_TEXT_ID;
use crate::tokenizer::ConditionedTokens;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DropoutPolicy {
    pub camera: f64,
    pub identity: f64,
    pub depth: f64,
    /// Probability of replacing the text by the null prompt.
    pub text_null: f64,
}

impl Default for DropoutPolicy {
    fn default() -> Self {
        Self {
            camera: 0.1,
            identity: 0.1,
            depth: 0.1,
            text_null: 0.1,
        }
    }
}

impl DropoutPolicy {
    pub fn none() -> Self {
        Self {
            camera: 0.0,
            identity: 0.0,
            depth: 0.0,
            text_null: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), CurriculumError> {
        for (name, p) in [
            ("camera", self.camera),
            ("identity", self.identity),
            ("depth", self.depth),
            ("text_null", self.text_null),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(CurriculumError::InvalidPlan(format!(
                    "dropout probability {name}={p} outside [0, 1]"
                )));
            }
        }
        Ok(())
    }
}

/// Independently per sample, removes each present condition with its
/// probability and nulls the text with `text_null`. Four uniforms are drawn
/// per sample whatever is present, so the stream does not depend on the data.
/// The video block is never touched.
pub fn apply_dropout(
    batch: &[ConditionedTokens],
    policy: &DropoutPolicy,
    rng: &mut impl Rng,
) -> Vec<ConditionedTokens> {
    batch
        .iter()
        .map(|item| {
            let draws: [f64; 4] = std::array::from_fn(|_| rng.random::<f64>());
            let mut out = item.clone();
            if draws[0] < policy.camera {
                out.camera = None;
            }
            if draws[1] < policy.identity {
                out.identity = None;
            }
            if draws[2] < policy.depth {
                out.depth = None;
            }
            if draws[3] < policy.text_null {
                out.text.iter_mut().for_each(|t| *t = NULL_TEXT_ID);
            }
            out
        })
        .collect()
}
