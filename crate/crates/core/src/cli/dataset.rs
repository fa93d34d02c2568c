use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::CliError;
use crate::mapping::MapTargets;
use crate::planner::PlanInput;
use crate::scenario::{
    generate_scenario, load_scenario, rasterize_bev, save_scenario, GridConfig, IntervalMode, ScenarioParams, Scene,
    SceneRegions, SCENE_EXTENSION,
};

pub const MANIFEST_FILE: &str = "manifest.toml";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub id: String,
    /// Hex string, as in the scene files.
    pub seed: String,
}

/// Index of a generated scene directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    pub base_seed: u64,
    pub params: ScenarioParams,
    #[serde(default)]
    pub scenes: Vec<ManifestEntry>,
}

pub fn scene_seed(base: u64, index: usize) -> u64 {
    crate::numerics::SeededRng::derive_seed(base, index as u64)
}

/// Writes `count` scenes plus the manifest into `out`.
pub fn generate_dataset(out: &Path, base_seed: u64, count: usize, params: &ScenarioParams) -> Result<Manifest, CliError> {
    params.validate()?;
    std::fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    let mut scenes = Vec::with_capacity(count);
    for i in 0..count {
        let seed = scene_seed(base_seed, i);
        let scene = generate_scenario(seed, params)?;
        let id = format!("scene_{i:05}");
        save_scenario(&scene, &out.join(format!("{id}.{SCENE_EXTENSION}")))?;
        scenes.push(ManifestEntry {
            id,
            seed: format!("{seed:#018x}"),
        });
    }
    let manifest = Manifest {
        format: "map-manifest".into(),
        version: 1,
        base_seed,
        params: params.clone(),
        scenes,
    };
    let path = out.join(MANIFEST_FILE);
    let text = toml::to_string(&manifest).expect("manifest is serializable");
    std::fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
    Ok(manifest)
}

/// Scene files of `dir` in name order.
pub fn scene_paths(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let rd = std::fs::read_dir(dir).map_err(|e| CliError::io(dir, e))?;
    let mut paths = Vec::new();
    for entry in rd {
        let p = entry.map_err(|e| CliError::io(dir, e))?.path();
        if p.extension().is_some_and(|e| e == SCENE_EXTENSION) {
            paths.push(p);
        }
    }
    paths.sort();
    Ok(paths)
}

pub fn load_scenes(dir: &Path) -> Result<Vec<(String, Scene)>, CliError> {
    scene_paths(dir)?
        .into_iter()
        .map(|p| {
            let id = p.file_stem().unwrap_or_default().to_string_lossy().into_owned();
            Ok((id, load_scenario(&p)?))
        })
        .collect()
}

/// A scene with everything the forward pass and the losses read from it.
#[derive(Clone, Debug)]
pub struct Sample {
    pub id: String,
    pub scene: Scene,
    pub input: PlanInput,
    pub targets: MapTargets,
    pub regions: SceneRegions,
}

impl Sample {
    pub fn prepare(
        id: String,
        scene: Scene,
        grids: &GridConfig,
        channels: usize,
        stride: usize,
        mode: IntervalMode,
    ) -> Result<Self, CliError> {
        let bev = rasterize_bev(&scene, &grids.bev, channels)?;
        let ego = scene.ego_status(mode)?;
        Ok(Self {
            id,
            input: PlanInput::new(&bev, ego, stride),
            targets: MapTargets::from_bev(&bev, stride),
            regions: SceneRegions::new(&scene, &grids.region),
            scene,
        })
    }
}

pub fn prepare_all(
    scenes: Vec<(String, Scene)>,
    grids: &GridConfig,
    channels: usize,
    stride: usize,
    mode: IntervalMode,
) -> Result<Vec<Sample>, CliError> {
    scenes
        .into_iter()
        .map(|(id, s)| Sample::prepare(id, s, grids, channels, stride, mode))
        .collect()
}
