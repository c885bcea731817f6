//! The seven-category benchmark: construction, generation and scoring.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::encode::{encode_sample, generate_videos};
use super::estimate::{estimate_square, eval_depth_toy, smoothness, wrap_angle};
use super::world::{sample_seeded, ToySample, ToyWorldSpec};
use super::SynthError;
use crate::diffusion::FlowConfig;
use crate::model::ModelParams;
use crate::tokenizer::{Condition, ConditionSet, Tokenizer, VideoTensor};

/// Condition combinations of the benchmark, in canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Camera,
    Identities,
    Depth,
    CameraIdentities,
    CameraDepth,
    IdentitiesDepth,
    CameraIdentitiesDepth,
}

impl Category {
    pub const ALL: [Category; 7] = [
        Category::Camera,
        Category::Identities,
        Category::Depth,
        Category::CameraIdentities,
        Category::CameraDepth,
        Category::IdentitiesDepth,
        Category::CameraIdentitiesDepth,
    ];

    pub fn conditions(self) -> ConditionSet {
        use Condition::*;
        match self {
            Category::Camera => ConditionSet::of(&[Camera]),
            Category::Identities => ConditionSet::of(&[Identity]),
            Category::Depth => ConditionSet::of(&[Depth]),
            Category::CameraIdentities => ConditionSet::of(&[Camera, Identity]),
            Category::CameraDepth => ConditionSet::of(&[Camera, Depth]),
            Category::IdentitiesDepth => ConditionSet::of(&[Identity, Depth]),
            Category::CameraIdentitiesDepth => ConditionSet::FULL,
        }
    }

    /// Directory and report name.
    pub fn name(self) -> &'static str {
        match self {
            Category::Camera => "camera",
            Category::Identities => "identities",
            Category::Depth => "depth",
            Category::CameraIdentities => "camera_identities",
            Category::CameraDepth => "camera_depth",
            Category::IdentitiesDepth => "identities_depth",
            Category::CameraIdentitiesDepth => "camera_identities_depth",
        }
    }

    fn index(self) -> u64 {
        Category::ALL.iter().position(|&c| c == self).unwrap_or(0) as u64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchCase {
    pub id: String,
    pub category: Category,
    pub seed: u64,
    pub sample: ToySample,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchSuite {
    pub spec: ToyWorldSpec,
    pub seed: u64,
    pub cases_per_category: usize,
    pub cases: Vec<BenchCase>,
}

/// Well-mixed 64-bit seed for `(seed, stream, index)` (SplitMix64 finalizer).
pub fn case_seed(seed: u64, stream: u64, index: u64) -> u64 {
    let mut z = seed
        .wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(index.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Builds `cases_per_category` cases for each of the seven categories from
/// disjoint per-case seeds; cases within a category are pairwise distinct.
pub fn build_bench(
    spec: &ToyWorldSpec,
    cases_per_category: usize,
    seed: u64,
) -> Result<BenchSuite, SynthError> {
    spec.validate()?;
    let mut cases = Vec::with_capacity(7 * cases_per_category);
    for category in Category::ALL {
        let drawn: Vec<(u64, ToySample)> = (0..cases_per_category as u64)
            .into_par_iter()
            .map(|i| {
                let s = case_seed(seed, 1 + category.index(), i);
                Ok((s, sample_seeded(spec, s)?))
            })
            .collect::<Result<_, SynthError>>()?;
        let mut kept: Vec<(u64, ToySample)> = Vec::with_capacity(drawn.len());
        for (i, (mut s, mut sample)) in drawn.into_iter().enumerate() {
            let mut salt = 0;
            while kept.iter().any(|(_, k)| k.labels == sample.labels) {
                salt += 1;
                s = case_seed(seed, 1 + category.index(), (i as u64) | (salt << 32));
                sample = sample_seeded(spec, s)?;
            }
            kept.push((s, sample));
        }
        for (i, (s, sample)) in kept.into_iter().enumerate() {
            cases.push(BenchCase {
                id: format!("{}-{i:03}", category.name()),
                category,
                seed: s,
                sample,
            });
        }
    }
    Ok(BenchSuite {
        spec: spec.clone(),
        seed,
        cases_per_category,
        cases,
    })
}

/// Produces one video per case from the given condition subset.
pub trait Generator {
    fn generate(
        &mut self,
        spec: &ToyWorldSpec,
        cases: &[&BenchCase],
        conditions: ConditionSet,
    ) -> Result<Vec<VideoTensor>, SynthError>;
}

/// Returns the ground-truth renders (harness self-test).
#[derive(Debug, Clone, Copy, Default)]
pub struct OracleGenerator;

impl Generator for OracleGenerator {
    fn generate(
        &mut self,
        _spec: &ToyWorldSpec,
        cases: &[&BenchCase],
        _c: ConditionSet,
    ) -> Result<Vec<VideoTensor>, SynthError> {
        Ok(cases.iter().map(|c| c.sample.video.clone()).collect())
    }
}

/// Samples from a trained model with classifier-free guidance.
pub struct ModelGenerator<'a> {
    pub params: &'a ModelParams,
    pub tokenizer: Tokenizer,
    pub flow: FlowConfig,
    pub seed: u64,
    pub batch_size: usize,
}

impl Generator for ModelGenerator<'_> {
    fn generate(
        &mut self,
        spec: &ToyWorldSpec,
        cases: &[&BenchCase],
        conditions: ConditionSet,
    ) -> Result<Vec<VideoTensor>, SynthError> {
        let mut out = Vec::with_capacity(cases.len());
        for chunk in cases.chunks(self.batch_size.max(1)) {
            let items = chunk
                .iter()
                .map(|c| encode_sample(&self.tokenizer, &c.sample, conditions))
                .collect::<Result<Vec<_>, _>>()?;
            let seed = case_seed(self.seed, 0, chunk[0].seed);
            out.extend(generate_videos(
                self.params,
                &self.tokenizer,
                spec,
                &items,
                &self.flow,
                seed,
            )?);
        }
        Ok(out)
    }
}

/// Every toy metric of one generated video against its ground truth. When
/// no square is detected, the square-based metrics take their chance-level
/// penalties: half the frame diagonal, a quarter turn, orthogonal color
/// (similarity 0.5), and zero motion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseScores {
    pub id: String,
    pub category: Option<Category>,
    pub detected: bool,
    pub center_err: f64,
    pub orient_err: f64,
    pub identity_sim: f64,
    pub depth_mae: f64,
    pub smoothness: f64,
    pub dynamic: f64,
}

pub fn score_case(
    spec: &ToyWorldSpec,
    id: &str,
    category: Option<Category>,
    gen: &VideoTensor,
    gt: &ToySample,
) -> Result<CaseScores, SynthError> {
    if gen.shape() != gt.video.shape() {
        return Err(SynthError::Shape(format!(
            "generated {:?} vs ground truth {:?}",
            gen.shape(),
            gt.video.shape()
        )));
    }
    let pal = &spec.palette;
    let n = gt.centers.len() as f64;
    let depth_mae = eval_depth_toy(gen, &gt.depth)?;
    let smooth = if gen.dim().0 >= 2 {
        smoothness(gen)?
    } else {
        1.0
    };
    let reference = gt
        .identities
        .first()
        .ok_or_else(|| SynthError::Shape("ground truth has no identity image".into()))?;
    let ref_est = estimate_square(&reference.clone().insert_axis(ndarray::Axis(0)), pal)?;
    let mut scores = CaseScores {
        id: id.to_string(),
        category,
        detected: false,
        center_err: (spec.height as f64).hypot(spec.width as f64) / 2.0,
        orient_err: std::f64::consts::FRAC_PI_2,
        identity_sim: 0.5,
        depth_mae,
        smoothness: smooth,
        dynamic: 0.0,
    };
    match estimate_square(gen, pal) {
        Ok(est) => {
            scores.detected = true;
            scores.center_err = est
                .centers
                .iter()
                .zip(&gt.centers)
                .map(|(a, b)| (a[0] - b[0]).hypot(a[1] - b[1]))
                .sum::<f64>()
                / n;
            scores.orient_err = est
                .orientations
                .iter()
                .zip(&gt.orientations)
                .map(|(a, b)| wrap_angle(a - b).abs())
                .sum::<f64>()
                / n;
            let mean = |cs: &[[f64; 3]]| {
                let k = cs.len() as f64;
                cs.iter().fold([0.0; 3], |a, c| {
                    [a[0] + c[0] / k, a[1] + c[1] / k, a[2] + c[2] / k]
                })
            };
            let (g, r) = (mean(&est.colors), mean(&ref_est.colors));
            let norm = |v: [f64; 3]| (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
            let denom = norm(g) * norm(r);
            let cosine = if denom > 0.0 {
                ((g[0] * r[0] + g[1] * r[1] + g[2] * r[2]) / denom).clamp(-1.0, 1.0)
            } else {
                0.0
            };
            scores.identity_sim = (cosine + 1.0) / 2.0;
            if est.centers.len() >= 2 {
                scores.dynamic = est
                    .centers
                    .windows(2)
                    .map(|p| (p[1][0] - p[0][0]).hypot(p[1][1] - p[0][1]))
                    .sum::<f64>()
                    / (est.centers.len() - 1) as f64;
            }
        }
        Err(SynthError::NotFound { .. }) => {}
        Err(e) => return Err(e),
    }
    Ok(scores)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricMeans {
    pub cases: usize,
    pub undetected: usize,
    pub center_err: f64,
    pub orient_err: f64,
    pub identity_sim: f64,
    pub depth_mae: f64,
    pub smoothness: f64,
    pub dynamic: f64,
}

impl MetricMeans {
    pub fn of<'a>(scores: impl IntoIterator<Item = &'a CaseScores>) -> Self {
        let list: Vec<&CaseScores> = scores.into_iter().collect();
        let n = list.len().max(1) as f64;
        let avg = |f: fn(&CaseScores) -> f64| list.iter().map(|s| f(s)).sum::<f64>() / n;
        Self {
            cases: list.len(),
            undetected: list.iter().filter(|s| !s.detected).count(),
            center_err: avg(|s| s.center_err),
            orient_err: avg(|s| s.orient_err),
            identity_sim: avg(|s| s.identity_sim),
            depth_mae: avg(|s| s.depth_mae),
            smoothness: avg(|s| s.smoothness),
            dynamic: avg(|s| s.dynamic),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryReport {
    pub category: Category,
    pub conditions: ConditionSet,
    pub means: MetricMeans,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub seed: u64,
    pub categories: Vec<CategoryReport>,
    pub overall: MetricMeans,
    pub cases: Vec<CaseScores>,
}

impl BenchReport {
    pub fn category(&self, c: Category) -> Option<&CategoryReport> {
        self.categories.iter().find(|r| r.category == c)
    }
}

/// Generates every case from its category's conditions and scores it.
pub fn run_bench(
    suite: &BenchSuite,
    generator: &mut dyn Generator,
) -> Result<BenchReport, SynthError> {
    let mut categories = Vec::with_capacity(7);
    let mut all = Vec::with_capacity(suite.cases.len());
    for category in Category::ALL {
        let cases: Vec<&BenchCase> = suite
            .cases
            .iter()
            .filter(|c| c.category == category)
            .collect();
        let videos = generator.generate(&suite.spec, &cases, category.conditions())?;
        if videos.len() != cases.len() {
            return Err(SynthError::Shape(format!(
                "generator returned {} videos for {} cases",
                videos.len(),
                cases.len()
            )));
        }
        let scores: Vec<CaseScores> = cases
            .par_iter()
            .zip(videos.par_iter())
            .map(|(c, v)| score_case(&suite.spec, &c.id, Some(category), v, &c.sample))
            .collect::<Result<_, _>>()?;
        categories.push(CategoryReport {
            category,
            conditions: category.conditions(),
            means: MetricMeans::of(&scores),
        });
        all.extend(scores);
    }
    Ok(BenchReport {
        seed: suite.seed,
        categories,
        overall: MetricMeans::of(&all),
        cases: all,
    })
}
