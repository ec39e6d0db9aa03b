//! Backend selection shared by the CLI, harness and service.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use simsam_core::{Segmenter, SyntheticSegmenter};

use crate::error::Result;
use crate::scene::{OracleSettings, SceneDescriptor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum BackendConfig {
    /// The synthetic oracle. Entries with a scene descriptor use it; other
    /// images are segmented by luminance with `oracle` settings.
    Synthetic {
        #[serde(default)]
        oracle: OracleSettings,
    },
    /// ONNX encoder/decoder pair in `model_dir`.
    Neural { model_dir: PathBuf },
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig::Synthetic { oracle: OracleSettings::default() }
    }
}

impl BackendConfig {
    pub fn synthetic() -> Self {
        Self::default()
    }

    pub(crate) fn resolve_paths(&mut self, base: &Path) {
        if let BackendConfig::Neural { model_dir } = self {
            *model_dir = base.join(&*model_dir);
        }
    }
}

/// A loaded backend.
#[derive(Clone)]
pub struct Backend {
    shared: Arc<dyn Segmenter>,
    per_scene: bool,
}

impl std::fmt::Debug for Backend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Backend").field("id", &self.shared.id()).field("per_scene", &self.per_scene).finish()
    }
}

impl Backend {
    pub fn load(cfg: &BackendConfig) -> Result<Self> {
        match cfg {
            BackendConfig::Synthetic { oracle } => {
                Ok(Self { shared: Arc::new(SyntheticSegmenter::from_luminance((*oracle).into())?), per_scene: true })
            }
            BackendConfig::Neural { model_dir } => load_neural(model_dir),
        }
    }

    pub fn id(&self) -> &str {
        self.shared.id()
    }

    /// The segmenter to use for one image. For the synthetic backend a scene
    /// descriptor, when given, replaces the luminance oracle.
    pub fn for_scene(&self, scene: Option<&Path>) -> Result<Arc<dyn Segmenter>> {
        match scene {
            Some(path) if self.per_scene => {
                Ok(Arc::new(SyntheticSegmenter::for_scene(SceneDescriptor::load(path)?.build()?)))
            }
            _ => Ok(self.shared.clone()),
        }
    }

    pub fn segmenter(&self) -> Arc<dyn Segmenter> {
        self.shared.clone()
    }
}

#[cfg(feature = "neural")]
fn load_neural(model_dir: &Path) -> Result<Backend> {
    Ok(Backend { shared: Arc::new(crate::neural::NeuralSegmenter::load(model_dir)?), per_scene: false })
}

#[cfg(not(feature = "neural"))]
fn load_neural(model_dir: &Path) -> Result<Backend> {
    Err(crate::error::Error::Config(format!(
        "cannot load {}: this build lacks the `neural` feature",
        model_dir.display()
    )))
}
