use alloc::string::String;
use alloc::vec::Vec;

use super::SceneWindow;
use crate::error::{contract, Result};

/// Windows of one scene, cut once for training (dense stride) and once for
/// testing (non-overlapping stride).
#[derive(Debug, Clone, PartialEq)]
pub struct SceneData {
    pub name: String,
    pub train_windows: Vec<SceneWindow>,
    pub test_windows: Vec<SceneWindow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit {
    pub held_out: String,
    pub train: Vec<SceneWindow>,
    pub test: Vec<SceneWindow>,
}

impl DatasetSplit {
    /// Distinct scene names in the training list.
    pub fn train_scenes(&self) -> Vec<&str> {
        let mut v: Vec<&str> = self.train.iter().map(|w| w.scene.as_str()).collect();
        v.sort_unstable();
        v.dedup();
        v
    }
}

/// One split per scene: that scene's test windows are held out and every
/// other scene's training windows form the training list.
pub fn leave_one_out(scenes: &[SceneData]) -> Result<Vec<DatasetSplit>> {
    if scenes.len() < 2 {
        return contract("leave-one-out needs at least two scenes");
    }
    let mut names: Vec<&str> = scenes.iter().map(|s| s.name.as_str()).collect();
    names.sort_unstable();
    names.dedup();
    if names.len() != scenes.len() {
        return contract("scene names must be unique");
    }
    Ok(scenes
        .iter()
        .map(|held| DatasetSplit {
            held_out: held.name.clone(),
            train: scenes
                .iter()
                .filter(|s| s.name != held.name)
                .flat_map(|s| s.train_windows.iter().cloned())
                .collect(),
            test: held.test_windows.clone(),
        })
        .collect())
}
