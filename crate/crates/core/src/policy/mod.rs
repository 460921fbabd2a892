//! Task policies: SLIP-Bagging, AutoBag and the baselines. Each maps
//! observations to primitives and reports an [`EpisodeResult`].

mod autobag;
mod bagging;
mod flatten;

pub use autobag::{autobag_step, run_autobag, AutoBagStep, AutoBagVariant};
pub use bagging::{run_baseline, run_slip_bagging, BaselineKind};
pub use flatten::{flatten, flatten_branch, FlattenResult, FlattenStep};

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bagsim::{
    apply_primitive, ActionPrimitive, BagState, BagsimParams, MaterialKind, MaterialPresets,
    PerMaterial,
};
use crate::geom::Raster;
use crate::percept::{
    opening_metrics, render_observation, Observation, OpeningMetrics, PerceptionNoise,
};
use crate::slip::{ClassifierModel, SlipParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlattenThresholds {
    pub p_small: f64,
    pub p_large: f64,
    /// Largest accepted angle between opening and forward axis (radians).
    pub alpha: f64,
}

impl Default for FlattenThresholds {
    fn default() -> Self {
        Self {
            p_small: 0.45,
            p_large: 0.85,
            alpha: PI / 12.0,
        }
    }
}

impl FlattenThresholds {
    pub fn validate(&self) -> Result<(), String> {
        if !(0.0 < self.p_small && self.p_small < self.p_large && self.p_large <= 1.0) {
            return Err("flatten thresholds need 0 < p_small < p_large <= 1".into());
        }
        if !(self.alpha > 0.0 && self.alpha < PI) {
            return Err("alpha must lie in (0, pi)".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ElongationGate {
    /// Pass when the elongation is at most the threshold.
    AtMost,
    /// Pass when the elongation is at least the threshold.
    AtLeast,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AutoBagThresholds {
    pub s1: f64,
    pub a1: f64,
    pub e1: f64,
    pub a2: f64,
    pub e2: f64,
    pub elongation_gate: ElongationGate,
}

impl Default for AutoBagThresholds {
    fn default() -> Self {
        Self {
            s1: 0.55,
            a1: 0.15,
            e1: 4.5,
            a2: 0.45,
            e2: 2.88,
            elongation_gate: ElongationGate::AtMost,
        }
    }
}

impl AutoBagThresholds {
    pub fn validate(&self) -> Result<(), String> {
        let all = [self.s1, self.a1, self.e1, self.a2, self.e2];
        if all.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
            return Err("AutoBag thresholds must be positive".into());
        }
        if self.a2 <= self.a1 {
            return Err("a2 must exceed a1".into());
        }
        if self.e2 >= self.e1 {
            return Err("e2 must be below e1".into());
        }
        Ok(())
    }

    fn elongation_ok(&self, e: f64, gate: f64) -> bool {
        match self.elongation_gate {
            ElongationGate::AtMost => e <= gate,
            ElongationGate::AtLeast => e >= gate && e.is_finite(),
        }
    }

    /// Stage-1 exit gate.
    pub fn stage1_passed(&self, m: &OpeningMetrics) -> bool {
        m.s >= self.s1 && m.a_ch >= self.a1 && self.elongation_ok(m.e_ch, self.e1)
    }

    /// Stage-2 exit gate.
    pub fn stage2_passed(&self, m: &OpeningMetrics) -> bool {
        m.a_ch >= self.a2 && self.elongation_ok(m.e_ch, self.e2)
    }
}

/// Constants of the baseline policies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineParams {
    /// Chance a handbag handle grasp takes both handles or the wrong one.
    pub hg_handbag_error: f64,
    /// Chance the layers happen to be separated for a pin-pull opening.
    pub pin_pull_separation: f64,
    /// Chance each fling-open handle grasp takes exactly one layer.
    pub fling_handle_one_layer: f64,
    /// Chance the opening survives releasing the fling.
    pub fling_survive: f64,
    /// Standard deviation of the top-insertion aim (cm).
    pub top_insert_sd: f64,
    /// Dilation depth used in AutoBag stage 2 (cm).
    pub dilate_depth: f64,
    /// Torque limit used in AutoBag stage 2 (N m).
    pub dilate_torque: f64,
    /// Opening-axis misalignment that triggers a stage-2 rotation (radians).
    pub dilate_align_tol: f64,
}

impl Default for BaselineParams {
    fn default() -> Self {
        Self {
            hg_handbag_error: 0.35,
            pin_pull_separation: 0.05,
            fling_handle_one_layer: 0.5,
            fling_survive: 0.4,
            top_insert_sd: 1.0,
            dilate_depth: 10.0,
            dilate_torque: 0.02,
            dilate_align_tol: PI / 12.0,
        }
    }
}

/// Every constant a policy episode reads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyConfig {
    pub sim: BagsimParams,
    pub materials: MaterialPresets,
    pub noise: PerMaterial<PerceptionNoise>,
    pub classifiers: PerMaterial<ClassifierModel>,
    pub slip: SlipParams,
    pub flatten: FlattenThresholds,
    pub autobag: AutoBagThresholds,
    pub baselines: BaselineParams,
    pub n_objects: u32,
    /// Counted-action budget for flattening or opening.
    pub action_cap: u32,
    /// Centroid offset from the workspace center that triggers recentering (cm).
    pub recenter_distance: f64,
    /// Recentering actions allowed per episode (not counted in the budget).
    pub recenter_cap: u32,
    /// Rim centroid closer than this to the bag centroid gives no heading (cm).
    pub min_rim_offset: f64,
    /// Turn applied before side insertion (radians, counter-clockwise).
    pub sideways_turn: f64,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            sim: BagsimParams::default(),
            materials: MaterialPresets::default(),
            noise: PerMaterial::default(),
            classifiers: PerMaterial::default(),
            slip: SlipParams::default(),
            flatten: FlattenThresholds::default(),
            autobag: AutoBagThresholds::default(),
            baselines: BaselineParams::default(),
            n_objects: 6,
            action_cap: 30,
            recenter_distance: 12.0,
            recenter_cap: 10,
            min_rim_offset: 3.0,
            sideways_turn: 0.5 * PI,
        }
    }
}

impl PolicyConfig {
    pub fn validate(&self) -> Result<(), String> {
        self.sim.workspace.validate()?;
        self.materials.validate().map_err(|e| e.to_string())?;
        for kind in MaterialKind::ALL {
            self.noise
                .get(kind)
                .validate()
                .map_err(|e| format!("noise.{kind}: {e}"))?;
            self.classifiers
                .get(kind)
                .validate()
                .map_err(|e| format!("classifiers.{kind}: {e}"))?;
        }
        self.slip.validate().map_err(|e| e.to_string())?;
        self.flatten.validate()?;
        self.autobag.validate()?;
        if self.n_objects == 0 {
            return Err("n_objects must be at least 1".into());
        }
        if self.action_cap == 0 {
            return Err("action_cap must be at least 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FailureTag {
    #[serde(rename = "none")]
    None,
    #[serde(rename = "A_flatten_orient")]
    AFlattenOrient,
    #[serde(rename = "B_grasp_stuck")]
    BGraspStuck,
    #[serde(rename = "C_slip_out")]
    CSlipOut,
    #[serde(rename = "D_insert_hit")]
    DInsertHit,
    #[serde(rename = "false_accept")]
    FalseAccept,
    #[serde(rename = "action_cap_exceeded")]
    ActionCapExceeded,
}

impl FailureTag {
    pub const ALL: [FailureTag; 7] = [
        FailureTag::None,
        FailureTag::AFlattenOrient,
        FailureTag::BGraspStuck,
        FailureTag::CSlipOut,
        FailureTag::DInsertHit,
        FailureTag::FalseAccept,
        FailureTag::ActionCapExceeded,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FailureTag::None => "none",
            FailureTag::AFlattenOrient => "A_flatten_orient",
            FailureTag::BGraspStuck => "B_grasp_stuck",
            FailureTag::CSlipOut => "C_slip_out",
            FailureTag::DInsertHit => "D_insert_hit",
            FailureTag::FalseAccept => "false_accept",
            FailureTag::ActionCapExceeded => "action_cap_exceeded",
        }
    }
}

impl fmt::Display for FailureTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    SlipBagging,
    #[serde(rename = "autobag")]
    AutoBag,
    #[serde(rename = "autobag_d")]
    AutoBagD,
    PerceivedDepth,
    HandleGrasp,
    MinDepthPlace,
    SobelPlace,
    PinPullSide,
    FlingOpen,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 9] = [
        PolicyKind::SlipBagging,
        PolicyKind::AutoBag,
        PolicyKind::AutoBagD,
        PolicyKind::PerceivedDepth,
        PolicyKind::HandleGrasp,
        PolicyKind::MinDepthPlace,
        PolicyKind::SobelPlace,
        PolicyKind::PinPullSide,
        PolicyKind::FlingOpen,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::SlipBagging => "slip_bagging",
            PolicyKind::AutoBag => "autobag",
            PolicyKind::AutoBagD => "autobag_d",
            PolicyKind::PerceivedDepth => "perceived_depth",
            PolicyKind::HandleGrasp => "handle_grasp",
            PolicyKind::MinDepthPlace => "min_depth_place",
            PolicyKind::SobelPlace => "sobel_place",
            PolicyKind::PinPullSide => "pin_pull_side",
            PolicyKind::FlingOpen => "fling_open",
        }
    }

    /// Policies evaluated from an already flattened bag.
    pub fn starts_flat(self) -> bool {
        matches!(self, PolicyKind::PerceivedDepth | PolicyKind::HandleGrasp)
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PolicyKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PolicyKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown policy `{s}`"))
    }
}

/// Outcome of one episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub policy: PolicyKind,
    pub material: MaterialKind,
    pub seed: u64,
    /// Flattened (SLIP-Bagging family) or opened upward (AutoBag family).
    pub flatten_success: bool,
    /// Whether the episode reached its layer-grasp stage.
    pub grasp_attempted: bool,
    pub single_layer_success: bool,
    pub objects_inserted: u32,
    pub objects_contained: u32,
    pub n_objects: u32,
    pub flatten_actions: u32,
    pub slip_iterations: u32,
    pub failure_tag: FailureTag,
    pub wall_time_sim: f64,
}

impl EpisodeResult {
    pub(crate) fn new(
        policy: PolicyKind,
        material: MaterialKind,
        seed: u64,
        n_objects: u32,
    ) -> Self {
        Self {
            policy,
            material,
            seed,
            flatten_success: false,
            grasp_attempted: false,
            single_layer_success: false,
            objects_inserted: 0,
            objects_contained: 0,
            n_objects,
            flatten_actions: 0,
            slip_iterations: 0,
            failure_tag: FailureTag::None,
            wall_time_sim: 0.0,
        }
    }

    pub fn full_success(&self) -> bool {
        self.objects_contained == self.n_objects
    }

    pub(crate) fn fail(&mut self, tag: FailureTag) {
        if self.failure_tag == FailureTag::None {
            self.failure_tag = tag;
        }
    }
}

/// Per-episode view of the configuration for one material.
pub(crate) struct Env<'a> {
    pub cfg: &'a PolicyConfig,
    pub noise: PerceptionNoise,
    pub classifier: ClassifierModel,
    pub raster: Raster,
}

impl<'a> Env<'a> {
    pub fn new(cfg: &'a PolicyConfig, kind: MaterialKind) -> Self {
        Self {
            cfg,
            noise: *cfg.noise.get(kind),
            classifier: *cfg.classifiers.get(kind),
            raster: cfg.sim.workspace.raster(),
        }
    }

    pub fn observe<R: Rng + ?Sized>(&self, s: &BagState, rng: &mut R) -> Observation {
        render_observation(s, &self.raster, &self.noise, rng)
    }

    pub fn metrics(&self, o: &Observation, s: &BagState) -> Option<OpeningMetrics> {
        opening_metrics(o, s.a_max).ok()
    }

    /// Applies a primitive; a rejected primitive leaves the state unchanged.
    pub fn act<R: Rng + ?Sized>(&self, s: &mut BagState, a: &ActionPrimitive, rng: &mut R) -> bool {
        match apply_primitive(s, a, &self.cfg.sim, rng) {
            Ok(next) => {
                *s = next;
                true
            }
            Err(_) => false,
        }
    }

    /// Recenters when the bag has drifted too far, within the per-episode cap.
    pub fn maybe_recenter<R: Rng + ?Sized>(
        &self,
        s: &mut BagState,
        recenters: &mut u32,
        rng: &mut R,
    ) -> bool {
        let far = s
            .footprint
            .centroid()
            .distance(self.cfg.sim.workspace.center())
            > self.cfg.recenter_distance;
        if far && *recenters < self.cfg.recenter_cap {
            *recenters += 1;
            self.act(s, &ActionPrimitive::Recenter, rng)
        } else {
            false
        }
    }
}

/// Runs one episode of `policy` on a fresh bag generated from `seed`.
pub fn run_episode(
    policy: PolicyKind,
    material: MaterialKind,
    cfg: &PolicyConfig,
    seed: u64,
) -> EpisodeResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = cfg.materials.get(material);
    let s = if policy.starts_flat() {
        BagState::new_flat(m, &cfg.sim, &mut rng)
    } else {
        BagState::new(m, &cfg.sim, &mut rng)
    };
    let mut r = match policy {
        PolicyKind::SlipBagging => run_slip_bagging(&s, cfg, &mut rng),
        PolicyKind::AutoBag => run_autobag(&s, cfg, AutoBagVariant::Full, &mut rng),
        PolicyKind::AutoBagD => run_autobag(&s, cfg, AutoBagVariant::NoStage2, &mut rng),
        PolicyKind::PerceivedDepth => run_baseline(&s, BaselineKind::PerceivedDepth, cfg, &mut rng),
        PolicyKind::HandleGrasp => run_baseline(&s, BaselineKind::HandleGrasp, cfg, &mut rng),
        PolicyKind::MinDepthPlace => run_baseline(&s, BaselineKind::MinDepthPlace, cfg, &mut rng),
        PolicyKind::SobelPlace => run_baseline(&s, BaselineKind::SobelPlace, cfg, &mut rng),
        PolicyKind::PinPullSide => run_baseline(&s, BaselineKind::PinPullSide, cfg, &mut rng),
        PolicyKind::FlingOpen => run_baseline(&s, BaselineKind::FlingOpen, cfg, &mut rng),
    };
    r.seed = seed;
    r
}
