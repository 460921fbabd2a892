//! Interactive-perception loop for grasping exactly one layer: grasp, run a
//! cyclic trajectory, classify how many layers moved, adjust the height.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bagsim::{
    attempt_grasp, execute_cyclic_trajectory, BagError, BagState, BagsimParams, GraspOutcome,
    InteractionTrace, Layers, MaterialKind, PerMaterial,
};
use crate::geom::Raster;
use crate::percept::{
    perceived_grasp_height, render_observation, select_grasp_point, GraspMode, PerceptError,
    PerceptionNoise,
};

/// Smallest bisection bracket before the search is declared stuck (mm).
const MIN_BRACKET: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SlipError {
    #[error("invalid classifier: {0}")]
    InvalidClassifier(String),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("bisection bracket collapsed")]
    BracketCollapse,
    #[error(transparent)]
    Percept(#[from] PerceptError),
    #[error(transparent)]
    Bag(#[from] BagError),
}

/// Anything that turns an interaction trace into a predicted layer count.
pub trait LayerClassifier {
    fn predict<R: Rng + ?Sized>(&mut self, trace: &InteractionTrace, rng: &mut R) -> Layers;
}

/// Confusion-matrix stand-in for the video classifier. Row = true layer
/// count, column = predicted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifierModel {
    pub confusion: [[f64; 3]; 3],
}

impl ClassifierModel {
    pub fn new(confusion: [[f64; 3]; 3]) -> Result<Self, SlipError> {
        let m = Self { confusion };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<(), SlipError> {
        for (r, row) in self.confusion.iter().enumerate() {
            if row.iter().any(|&p| !(p >= 0.0 && p.is_finite())) {
                return Err(SlipError::InvalidClassifier(format!(
                    "row {r} has a negative entry"
                )));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(SlipError::InvalidClassifier(format!(
                    "row {r} sums to {sum}"
                )));
            }
        }
        Ok(())
    }

    pub fn identity() -> Self {
        Self::with_error(0.0)
    }

    /// Correct with probability `1 - error`, otherwise one of the two wrong
    /// classes with equal probability.
    pub fn with_error(error: f64) -> Self {
        let (d, o) = (1.0 - error, 0.5 * error);
        Self {
            confusion: [[d, o, o], [o, d, o], [o, o, d]],
        }
    }

    pub fn for_material(kind: MaterialKind) -> Self {
        match kind {
            MaterialKind::FoldedCloth => Self {
                confusion: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.38, 0.62]],
            },
            MaterialKind::Dress => Self {
                confusion: [[1.0, 0.0, 0.0], [0.125, 0.75, 0.125], [0.0, 0.25, 0.75]],
            },
            MaterialKind::Hat => Self {
                confusion: [[1.0, 0.0, 0.0], [0.085, 0.83, 0.085], [0.0, 0.75, 0.25]],
            },
            _ => Self::with_error(0.1),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, truth: Layers, rng: &mut R) -> Layers {
        let row = &self.confusion[truth.count()];
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (k, &p) in row.iter().enumerate() {
            acc += p;
            if u < acc {
                return Layers::from_count(k);
            }
        }
        // Rounding left a sliver above the last cumulative sum.
        let last = row.iter().rposition(|&p| p > 0.0).unwrap_or(truth.count());
        Layers::from_count(last)
    }
}

impl LayerClassifier for ClassifierModel {
    fn predict<R: Rng + ?Sized>(&mut self, trace: &InteractionTrace, rng: &mut R) -> Layers {
        self.sample(trace.true_layers, rng)
    }
}

impl Default for PerMaterial<ClassifierModel> {
    fn default() -> Self {
        PerMaterial::from_fn(ClassifierModel::for_material)
    }
}

/// Draws a prediction for the trace's true layer count.
pub fn classify<R: Rng + ?Sized>(
    trace: &InteractionTrace,
    m: &ClassifierModel,
    rng: &mut R,
) -> Layers {
    m.sample(trace.true_layers, rng)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum H0Rule {
    /// Perceived surface height at the grasp point, floored at `h_min`.
    PerceivedDepth {
        h_min: f64,
    },
    Fixed {
        h: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Strategy {
    FixedStep,
    DecayingStep { gamma: f64 },
    Bisection,
}

impl Strategy {
    pub fn name(&self) -> String {
        match self {
            Strategy::FixedStep => "fixed_step".into(),
            Strategy::DecayingStep { gamma } => format!("decaying_step({gamma})"),
            Strategy::Bisection => "bisection".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SlipParams {
    pub h0_rule: H0Rule,
    pub dh_minus: f64,
    pub dh_plus: f64,
    pub strategy: Strategy,
    pub trial_max: u32,
    /// Iterations per trial; 0 disables the loop entirely.
    pub iter_max: u32,
    pub total_iteration_cap: u32,
    pub h_ceiling: f64,
}

impl Default for SlipParams {
    fn default() -> Self {
        Self {
            h0_rule: H0Rule::PerceivedDepth { h_min: 2.0 },
            dh_minus: 1.0,
            dh_plus: 3.0,
            strategy: Strategy::FixedStep,
            trial_max: 3,
            iter_max: 5,
            total_iteration_cap: 15,
            h_ceiling: 20.0,
        }
    }
}

impl SlipParams {
    pub fn validate(&self) -> Result<(), SlipError> {
        let bad = |m: &str| Err(SlipError::InvalidParams(m.into()));
        if !(self.dh_minus > 0.0 && self.dh_plus > 0.0) {
            return bad("height steps must be positive");
        }
        if self.trial_max == 0 || self.total_iteration_cap == 0 {
            return bad("trial and total iteration caps must be at least 1");
        }
        if !(self.h_ceiling > 0.0 && self.h_ceiling.is_finite()) {
            return bad("h_ceiling must be positive");
        }
        if let Strategy::DecayingStep { gamma } = self.strategy {
            if !(gamma > 0.0 && gamma < 1.0) {
                return bad("decay factor must lie in (0, 1)");
            }
        }
        match self.h0_rule {
            H0Rule::PerceivedDepth { h_min } if !(h_min >= 0.0 && h_min.is_finite()) => {
                bad("h_min must be non-negative")
            }
            H0Rule::Fixed { h } if !(h >= 0.0 && h.is_finite()) => {
                bad("fixed h0 must be non-negative")
            }
            _ => Ok(()),
        }
    }
}

/// Mutable state of a height-adjustment strategy over one SLIP run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepState {
    pub strategy: Strategy,
    pub minus: f64,
    pub plus: f64,
    pub lo: f64,
    pub hi: f64,
    pub h_ceiling: f64,
}

impl StepState {
    pub fn new(params: &SlipParams) -> Self {
        Self {
            strategy: params.strategy,
            minus: params.dh_minus,
            plus: params.dh_plus,
            lo: 0.0,
            hi: params.h_ceiling,
            h_ceiling: params.h_ceiling,
        }
    }

    pub fn with_bracket(mut self, lo: f64, hi: f64) -> Self {
        self.lo = lo;
        self.hi = hi;
        self
    }

    /// Height for the next attempt after observing `predicted` at `h`.
    /// Only 0 and 2 predictions move the gripper.
    pub fn next_height(&mut self, h: f64, predicted: Layers) -> Result<f64, SlipError> {
        let next = match (self.strategy, predicted) {
            (_, Layers::One) => h,
            (Strategy::FixedStep, Layers::Zero) => h - self.minus,
            (Strategy::FixedStep, Layers::Two) => h + self.plus,
            (Strategy::DecayingStep { gamma }, p) => {
                let next = if p == Layers::Zero {
                    h - self.minus
                } else {
                    h + self.plus
                };
                self.minus *= gamma;
                self.plus *= gamma;
                next
            }
            (Strategy::Bisection, p) => {
                if p == Layers::Zero {
                    self.hi = h;
                } else {
                    self.lo = h;
                }
                if self.hi - self.lo < MIN_BRACKET {
                    return Err(SlipError::BracketCollapse);
                }
                0.5 * (self.lo + self.hi)
            }
        };
        Ok(next.clamp(0.0, self.h_ceiling))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlipStop {
    Success,
    /// Classifier said one layer but the gripper held something else.
    FalseAccept,
    CapReached,
    BracketCollapse,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeightStep {
    pub trial: u32,
    pub h: f64,
    pub predicted: Layers,
    pub true_layers: Layers,
    pub held: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlipResult {
    pub success: bool,
    pub stop: SlipStop,
    pub iterations_used: u32,
    pub trials_used: u32,
    pub height_trace: Vec<HeightStep>,
    pub final_grasp: Option<GraspOutcome>,
}

impl SlipResult {
    pub fn false_accept(&self) -> bool {
        self.stop == SlipStop::FalseAccept
    }

    pub fn heights(&self) -> Vec<f64> {
        self.height_trace.iter().map(|s| s.h).collect()
    }
}

/// Everything `run_slip` needs besides the bag and the classifier.
#[derive(Debug, Clone, Copy)]
pub struct SlipContext<'a> {
    pub params: &'a SlipParams,
    pub noise: &'a PerceptionNoise,
    pub sim: &'a BagsimParams,
    pub raster: &'a Raster,
}

/// Runs the grasp / trajectory / classify loop. The grasp height carries
/// over between trials; only the grasp location is resampled.
pub fn run_slip<C: LayerClassifier, R: Rng + ?Sized>(
    s: &BagState,
    ctx: SlipContext<'_>,
    classifier: &mut C,
    rng: &mut R,
) -> Result<(BagState, SlipResult), SlipError> {
    let params = ctx.params;
    params.validate()?;
    let mut state = s.clone();
    let mut steps = StepState::new(params);
    let mut result = SlipResult {
        success: false,
        stop: SlipStop::CapReached,
        iterations_used: 0,
        trials_used: 0,
        height_trace: Vec::new(),
        final_grasp: None,
    };
    if params.iter_max == 0 {
        return Ok((state, result));
    }
    let mut h: Option<f64> = None;
    let mut rim_seen = false;
    'trials: for trial in 0..params.trial_max {
        if result.iterations_used >= params.total_iteration_cap {
            break;
        }
        result.trials_used = trial + 1;
        let obs = render_observation(&state, ctx.raster, ctx.noise, rng);
        let p = match select_grasp_point(&obs, GraspMode::RimCenterForSlip, rng) {
            Ok(t) => t.point(),
            Err(PerceptError::ModeUnavailable(_)) => continue,
            Err(e) => return Err(e.into()),
        };
        rim_seen = true;
        let mut height = *h.get_or_insert_with(|| match params.h0_rule {
            H0Rule::PerceivedDepth { h_min } => perceived_grasp_height(&obs, p, h_min),
            H0Rule::Fixed { h } => h,
        });
        for _ in 0..params.iter_max {
            if result.iterations_used >= params.total_iteration_cap {
                break 'trials;
            }
            let g = attempt_grasp(&state, p, height, ctx.sim, rng)?;
            let (next, trace) = execute_cyclic_trajectory(&state, &g, ctx.sim, rng);
            state = next;
            let predicted = classifier.predict(&trace, rng);
            result.iterations_used += 1;
            result.height_trace.push(HeightStep {
                trial,
                h: height,
                predicted,
                true_layers: g.layers,
                held: g.held,
            });
            if predicted == Layers::One {
                if g.is_single_layer() {
                    result.success = true;
                    result.stop = SlipStop::Success;
                    result.final_grasp = Some(g);
                    state.held_grasp = Some(g);
                    return Ok((state, result));
                }
                if g.layers != Layers::One {
                    result.stop = SlipStop::FalseAccept;
                    result.final_grasp = Some(g);
                    state.held_grasp = Some(g);
                    return Ok((state, result));
                }
                // A single layer slipped out: retry at the same height.
                continue;
            }
            match steps.next_height(height, predicted) {
                Ok(next) => height = next,
                Err(SlipError::BracketCollapse) => {
                    result.stop = SlipStop::BracketCollapse;
                    h = Some(height);
                    continue 'trials;
                }
                Err(e) => return Err(e),
            }
            h = Some(height);
        }
    }
    if !rim_seen {
        return Err(PerceptError::ModeUnavailable(GraspMode::RimCenterForSlip.name()).into());
    }
    Ok((state, result))
}
