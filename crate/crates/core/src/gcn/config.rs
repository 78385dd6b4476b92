use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::check_fusion_weights;
use crate::error::{Error, Result};
use crate::graph::GraphOptions;

/// Which branches a model carries and whether object edges are pose-gated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VariantFlags {
    pub use_global: bool,
    pub use_pog: bool,
    pub use_ppg: bool,
    pub pose_gating_on: bool,
}

impl VariantFlags {
    pub fn has_graph_branch(&self) -> bool {
        self.use_pog || self.use_ppg
    }
}

/// Named ablation rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    /// Global image feature only.
    Global,
    /// Person-object graph, every person linked to every object.
    PogNoPose,
    /// Person-object graph with keypoint-gated object edges.
    Pog,
    /// Both graphs trained jointly.
    PogPpg,
    /// Both graphs fused with the global branch.
    Mgr,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::Global,
        Variant::PogNoPose,
        Variant::Pog,
        Variant::PogPpg,
        Variant::Mgr,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Global => "global",
            Variant::PogNoPose => "pog-no-pose",
            Variant::Pog => "pog",
            Variant::PogPpg => "pog+ppg",
            Variant::Mgr => "mgr",
        }
    }

    pub fn flags(self) -> VariantFlags {
        let (use_global, use_pog, use_ppg, pose_gating_on) = match self {
            Variant::Global => (true, false, false, true),
            Variant::PogNoPose => (false, true, false, false),
            Variant::Pog => (false, true, false, true),
            Variant::PogPpg => (false, true, true, true),
            Variant::Mgr => (true, true, true, true),
        };
        VariantFlags {
            use_global,
            use_pog,
            use_ppg,
            pose_gating_on,
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Variant::ALL.iter().map(|v| v.name()).collect();
                Error::Config(format!("unknown variant {s:?}, expected one of {names:?}"))
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr0: f64,
    pub momentum: f64,
    pub lr_decay_factor: f64,
    pub lr_decay_period_epochs: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub weight_decay: f64,
    pub fusion_weight_global: f64,
    pub fusion_weight_graph: f64,
    pub use_global: bool,
    pub use_pog: bool,
    pub use_ppg: bool,
    pub pose_gating_on: bool,
    /// Output widths of the person-object GCN layers.
    pub pog_hidden: Vec<usize>,
    /// Output widths of the person-pose GCN layers.
    pub ppg_hidden: Vec<usize>,
    pub seed: u64,
    pub dilation: f64,
    pub min_keypoint_confidence: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let flags = Variant::Mgr.flags();
        TrainConfig {
            lr0: 0.01,
            momentum: 0.9,
            lr_decay_factor: 0.1,
            lr_decay_period_epochs: 20,
            epochs: 60,
            batch_size: 16,
            weight_decay: 0.0,
            fusion_weight_global: 0.4,
            fusion_weight_graph: 0.6,
            use_global: flags.use_global,
            use_pog: flags.use_pog,
            use_ppg: flags.use_ppg,
            pose_gating_on: flags.pose_gating_on,
            pog_hidden: vec![256, 256],
            ppg_hidden: vec![64, 64],
            seed: 0,
            dilation: 0.0,
            min_keypoint_confidence: 0.0,
        }
    }
}

impl TrainConfig {
    pub fn with_variant(mut self, variant: Variant) -> Self {
        self.set_variant(variant);
        self
    }

    pub fn set_variant(&mut self, variant: Variant) {
        let f = variant.flags();
        self.use_global = f.use_global;
        self.use_pog = f.use_pog;
        self.use_ppg = f.use_ppg;
        self.pose_gating_on = f.pose_gating_on;
    }

    pub fn flags(&self) -> VariantFlags {
        VariantFlags {
            use_global: self.use_global,
            use_pog: self.use_pog,
            use_ppg: self.use_ppg,
            pose_gating_on: self.pose_gating_on,
        }
    }

    /// The named variant these flags correspond to, if any.
    pub fn variant(&self) -> Option<Variant> {
        let f = self.flags();
        Variant::ALL.into_iter().find(|v| v.flags() == f)
    }

    pub fn graph_options(&self) -> GraphOptions {
        GraphOptions {
            dilation: self.dilation,
            min_keypoint_confidence: self.min_keypoint_confidence,
            pose_gating: self.pose_gating_on,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if !(self.lr0 > 0.0 && self.lr0.is_finite()) {
            return fail(format!("lr0 must be positive, got {}", self.lr0));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return fail(format!(
                "momentum must lie in [0, 1), got {}",
                self.momentum
            ));
        }
        if !(self.lr_decay_factor > 0.0 && self.lr_decay_factor <= 1.0) {
            return fail(format!(
                "lr_decay_factor must lie in (0, 1], got {}",
                self.lr_decay_factor
            ));
        }
        if self.lr_decay_period_epochs == 0 {
            return fail("lr_decay_period_epochs must be at least 1".into());
        }
        if self.batch_size == 0 {
            return fail("batch_size must be at least 1".into());
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return fail(format!(
                "weight_decay must be non-negative, got {}",
                self.weight_decay
            ));
        }
        check_fusion_weights(self.fusion_weight_global, self.fusion_weight_graph)?;
        if !(self.use_global || self.use_pog || self.use_ppg) {
            return fail("at least one branch must be enabled".into());
        }
        if self.use_pog && self.pog_hidden.is_empty() || self.use_ppg && self.ppg_hidden.is_empty()
        {
            return fail("enabled graph branches need at least one layer".into());
        }
        if self
            .pog_hidden
            .iter()
            .chain(&self.ppg_hidden)
            .any(|&d| d == 0)
        {
            return fail("layer widths must be positive".into());
        }
        if !(self.dilation >= 0.0 && self.dilation.is_finite()) {
            return fail(format!(
                "dilation must be non-negative, got {}",
                self.dilation
            ));
        }
        if !(0.0..=1.0).contains(&self.min_keypoint_confidence) {
            return fail(format!(
                "min_keypoint_confidence must lie in [0, 1], got {}",
                self.min_keypoint_confidence
            ));
        }
        Ok(())
    }
}
