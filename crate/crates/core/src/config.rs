//! Run configuration: one TOML file holding every tunable, with the
//! published constants as defaults.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::camera::CameraIntrinsics;
use crate::cloud::CloudConfig;
use crate::error::{Error, Result};
use crate::grasp::GraspConfig;
use crate::viewsphere::{SphericalPose, ViewsphereConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneConfig {
    pub table_side_m: f64,
    pub depth_noise_sigma_m: f64,
    pub start_polar_deg: f64,
    pub start_azimuth_deg: f64,
    pub max_steps: usize,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            table_side_m: 0.6,
            depth_noise_sigma_m: 0.0,
            start_polar_deg: 50.0,
            start_azimuth_deg: 0.0,
            max_steps: 6,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViewRing {
    pub polar_deg: f64,
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicyConfig {
    /// Binary images for the 2D heuristic are rendered at this fraction of
    /// the camera resolution.
    pub h2d_image_scale: f64,
    pub h2d_dilation_px: usize,
    /// Half-angle of the cone around object normals that makes an
    /// unexplored point useful.
    pub h3d_cone_deg: f64,
    pub h3d_points_threshold: usize,
    /// Occluder disk radius in voxel sizes.
    pub occluder_radius_voxels: f64,
    pub infogain_top_view: bool,
    pub infogain_rings: Vec<ViewRing>,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            h2d_image_scale: 0.25,
            h2d_dilation_px: 1,
            h3d_cone_deg: 15.0,
            h3d_points_threshold: 20,
            occluder_radius_voxels: 1.0,
            infogain_top_view: true,
            infogain_rings: vec![
                ViewRing { polar_deg: 25.0, count: 8 },
                ViewRing { polar_deg: 50.0, count: 12 },
                ViewRing { polar_deg: 75.0, count: 13 },
            ],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QConfig {
    pub episodes: usize,
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    pub gamma: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Fraction of episodes over which epsilon decays linearly.
    pub epsilon_decay_fraction: f64,
    pub replay_capacity: usize,
    pub batch_size: usize,
    pub objects: Vec<String>,
}

impl Default for QConfig {
    fn default() -> Self {
        Self {
            episodes: 300,
            hidden: vec![128; 4],
            learning_rate: 1e-3,
            gamma: 0.9,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_decay_fraction: 0.6,
            replay_capacity: 10_000,
            batch_size: 64,
            objects: crate::catalog::training_objects().iter().map(|s| s.to_string()).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MlConfig {
    pub haf_grid: usize,
    pub haf_region_m: f64,
    pub pca_components: usize,
    pub selfsup_objects: Vec<String>,
    pub selfsup_poses_per_object: usize,
    pub selfsup_rollouts: usize,
    pub selfsup_rollout_steps: usize,
    pub heldout_fraction: f64,
    pub logistic_learning_rate: f64,
    pub logistic_epochs: usize,
    pub logistic_l2: f64,
    pub lda_shrinkage: f64,
    pub q: QConfig,
}

impl Default for MlConfig {
    fn default() -> Self {
        Self {
            haf_grid: 5,
            haf_region_m: 0.3,
            pca_components: 26,
            selfsup_objects: crate::catalog::SELFSUP_OBJECTS.iter().map(|s| s.to_string()).collect(),
            selfsup_poses_per_object: 200,
            selfsup_rollouts: 3,
            selfsup_rollout_steps: 5,
            heldout_fraction: 0.25,
            logistic_learning_rate: 0.5,
            logistic_epochs: 500,
            logistic_l2: 1e-3,
            lda_shrinkage: 1e-2,
            q: QConfig::default(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelPaths {
    pub logistic: Option<PathBuf>,
    pub lda: Option<PathBuf>,
    pub qnet: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub objects: Vec<String>,
    pub policies: Vec<String>,
    pub poses: usize,
    pub pose_seed: u64,
    pub difficulty_step: usize,
    pub models: ModelPaths,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            objects: crate::catalog::test_objects().iter().map(|s| s.to_string()).collect(),
            policies: ["random", "brick", "bfs", "h2d", "h3d", "infogain"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
            poses: 20,
            pose_seed: 2023,
            difficulty_step: 2,
            models: ModelPaths::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub dump_clouds: bool,
    /// Write per-decision wall time into records. Off makes reruns
    /// byte-identical.
    pub record_timing: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("avgrasp-out"),
            dump_clouds: false,
            record_timing: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub viewsphere: ViewsphereConfig,
    pub camera: CameraIntrinsics,
    pub scene: SceneConfig,
    pub cloud: CloudConfig,
    pub grasp: GraspConfig,
    pub policy: PolicyConfig,
    pub ml: MlConfig,
    pub bench: BenchConfig,
    pub output: OutputConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            viewsphere: ViewsphereConfig::default(),
            camera: CameraIntrinsics::default(),
            scene: SceneConfig::default(),
            cloud: CloudConfig::default(),
            grasp: GraspConfig::default(),
            policy: PolicyConfig::default(),
            ml: MlConfig::default(),
            bench: BenchConfig::default(),
            output: OutputConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config is serializable")
    }

    pub fn validate(&self) -> Result<()> {
        self.viewsphere.validate()?;
        self.camera.validate()?;
        self.cloud.validate()?;
        self.grasp.validate()?;
        if self.scene.max_steps == 0 {
            return Err(Error::Config("scene: max_steps must be at least 1".into()));
        }
        if !self.viewsphere.polar_in_bounds(self.scene.start_polar_deg) {
            return Err(Error::Config("scene: start pose outside the polar bounds".into()));
        }
        if self.ml.haf_grid == 0 || self.ml.pca_components == 0 {
            return Err(Error::Config("ml: haf_grid and pca_components must be positive".into()));
        }
        if self.bench.poses == 0 {
            return Err(Error::Config("bench: poses must be at least 1".into()));
        }
        Ok(())
    }

    pub fn start_pose(&self) -> SphericalPose {
        SphericalPose::new(
            self.viewsphere.radius_m,
            self.scene.start_polar_deg,
            self.scene.start_azimuth_deg,
        )
    }

    /// Short hex digest of the canonical JSON form. The output section and
    /// the benchmark's object, policy and pose-count selection are excluded;
    /// each record names its own episode.
    pub fn hash(&self) -> String {
        let mut canon = self.clone();
        canon.output = OutputConfig::default();
        canon.bench.objects.clear();
        canon.bench.policies.clear();
        canon.bench.poses = 0;
        let json = serde_json::to_string(&canon).expect("config is serializable");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}
