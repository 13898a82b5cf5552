use std::fmt;

use crate::error::{Error, Result};
use crate::model::UnetConfig;
use crate::pair::Modality;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Objective {
    Noise2Clean,
    Noise2Noise,
    Consensus,
}

impl Objective {
    pub const ALL: [Objective; 3] = [Objective::Noise2Clean, Objective::Noise2Noise, Objective::Consensus];

    pub fn label(self) -> &'static str {
        match self {
            Objective::Noise2Clean => "noise2clean",
            Objective::Noise2Noise => "noise2noise",
            Objective::Consensus => "consensus",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|o| o.label() == s.trim())
            .ok_or_else(|| Error::Config(format!("unknown objective {s:?} (noise2clean|noise2noise|consensus)")))
    }

    /// Whether a second network is trained.
    pub fn is_pair(self) -> bool {
        self == Objective::Consensus
    }
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub patch: usize,
    pub batch: usize,
    pub patches_per_slice: usize,
    pub epochs: usize,
    pub lr: f64,
    pub beta_w: f64,
    pub beta_r: f64,
    pub seed: u64,
    pub objective: Objective,
    pub depth: usize,
    pub base_features: usize,
}

/// Regularization weights tuned per modality.
pub fn default_betas(modality: Modality) -> (f64, f64) {
    match modality {
        Modality::Ct => (5e-6, 0.5),
        Modality::Mr => (1e-6, 5.0),
    }
}

impl TrainConfig {
    /// Full-size schedule: 96² patches, batches of 40, 100 epochs, U-Net depth 4 / 32 features.
    pub fn paper(modality: Modality) -> Self {
        let (beta_w, beta_r) = default_betas(modality);
        let net = UnetConfig::paper_scale(modality.channels());
        Self {
            patch: 96,
            batch: 40,
            patches_per_slice: 40,
            epochs: 100,
            lr: 1e-4,
            beta_w,
            beta_r,
            seed: 0,
            objective: Objective::Consensus,
            depth: net.depth,
            base_features: net.base_features,
        }
    }

    /// Single-workstation schedule: 32² patches, batches of 8, 20 epochs, depth 3 / 16 features.
    pub fn desk(modality: Modality) -> Self {
        let net = UnetConfig::desk(modality.channels());
        Self {
            patch: 32,
            batch: 8,
            epochs: 20,
            depth: net.depth,
            base_features: net.base_features,
            ..Self::paper(modality)
        }
    }

    pub fn unet(&self, modality: Modality) -> UnetConfig {
        UnetConfig::new(self.depth, self.base_features, modality.channels())
    }

    pub fn validate(&self) -> Result<()> {
        if self.depth < 1 || self.base_features < 1 {
            return Err(Error::Config(format!(
                "network depth {} / features {} must be positive",
                self.depth, self.base_features
            )));
        }
        let m = 1usize << self.depth;
        if self.patch == 0 || !self.patch.is_multiple_of(m) {
            return Err(Error::Config(format!(
                "patch {} must be a positive multiple of 2^depth = {m}",
                self.patch
            )));
        }
        if self.batch == 0 || self.patches_per_slice == 0 {
            return Err(Error::Config("batch and patches_per_slice must be positive".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("learning rate {}", self.lr)));
        }
        for (name, b) in [("beta_w", self.beta_w), ("beta_r", self.beta_r)] {
            if !(b >= 0.0 && b.is_finite()) {
                return Err(Error::Config(format!("{name} = {b} must be finite and >= 0")));
            }
        }
        Ok(())
    }

    /// Every field that shapes the optimization trajectory except the epoch
    /// budget, so a finished run can be extended by resuming.
    pub fn canonical(&self) -> String {
        format!(
            "patch={} batch={} patches_per_slice={} lr={:016x} beta_w={:016x} beta_r={:016x} seed={} objective={} depth={} base_features={}",
            self.patch,
            self.batch,
            self.patches_per_slice,
            self.lr.to_bits(),
            self.beta_w.to_bits(),
            self.beta_r.to_bits(),
            self.seed,
            self.objective,
            self.depth,
            self.base_features
        )
    }

    /// FNV-1a of [`canonical`](Self::canonical), as 16 hex digits.
    pub fn hash(&self) -> String {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in self.canonical().bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        format!("{h:016x}")
    }
}
