//! Scene directories: `<name>.json` annotations next to `<name>.png` (or
//! `<name>.fpdm`) density maps. Prediction directories hold only JSON files
//! with matching names.

use std::path::{Path, PathBuf};

use floorplan_core::data::Floorplan;
use floorplan_core::synth::generate_synthetic;
use floorplan_nn::train::Sample;

use crate::annotation::{load_annotations, save_annotations, Orientation};
use crate::config::DataConfig;
use crate::density::{read_density, write_png16};
use crate::error::{Error, Result};

pub fn scene_name(index: usize) -> String {
    format!("scene_{index:05}")
}

/// Sorted `.json` files of a directory, or the file itself.
pub fn json_files(path: &Path) -> Result<Vec<PathBuf>> {
    if path.is_file() {
        return Ok(vec![path.to_path_buf()]);
    }
    let entries = std::fs::read_dir(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for e in entries {
        let p = e.map_err(|e| Error::io(path, e))?.path();
        if p.extension().and_then(|x| x.to_str()) == Some("json") {
            out.push(p);
        }
    }
    out.sort();
    Ok(out)
}

fn stem(p: &Path) -> String {
    p.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string()
}

/// Named annotations; warnings from orientation fixes are collected.
pub fn load_plans(path: &Path, warnings: &mut Vec<String>) -> Result<Vec<(String, Floorplan)>> {
    json_files(path)?
        .into_iter()
        .map(|p| {
            let loaded = load_annotations(&p, Orientation::AutoCorrect)?;
            warnings.extend(loaded.warnings);
            Ok((stem(&p), loaded.plan))
        })
        .collect()
}

/// Density map belonging to an annotation file.
pub fn density_path(json: &Path) -> Option<PathBuf> {
    ["png", "fpdm"]
        .iter()
        .map(|e| json.with_extension(e))
        .find(|p| p.is_file())
}

/// Annotated scenes with their density maps.
pub fn load_samples(path: &Path, warnings: &mut Vec<String>) -> Result<Vec<(String, Sample)>> {
    let mut out = Vec::new();
    for p in json_files(path)? {
        let loaded = load_annotations(&p, Orientation::AutoCorrect)?;
        warnings.extend(loaded.warnings);
        let dp = density_path(&p).ok_or_else(|| Error::Density {
            path: p.with_extension("png"),
            message: "no density map next to the annotation".into(),
        })?;
        let density = read_density(&dp)?;
        if (density.width, density.height) != (loaded.plan.width, loaded.plan.height) {
            return Err(Error::Density {
                path: dp,
                message: format!(
                    "map is {}x{} but the annotation says {}x{}",
                    density.width, density.height, loaded.plan.width, loaded.plan.height
                ),
            });
        }
        out.push((
            stem(&p),
            Sample {
                density,
                plan: loaded.plan,
            },
        ));
    }
    Ok(out)
}

/// Writes `cfg.scenes` synthetic scenes; returns their names.
pub fn generate_corpus(dir: &Path, cfg: &DataConfig) -> Result<Vec<String>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut names = Vec::with_capacity(cfg.scenes);
    for i in 0..cfg.scenes {
        let scene = generate_synthetic(cfg.seed.wrapping_add(i as u64), &cfg.synth)?;
        let name = scene_name(i);
        save_annotations(&scene.plan, &dir.join(format!("{name}.json")))?;
        write_png16(&scene.density, &dir.join(format!("{name}.png")))?;
        names.push(name);
    }
    Ok(names)
}

pub fn write_plans(dir: &Path, plans: &[(String, Floorplan)]) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (name, plan) in plans {
        save_annotations(plan, &dir.join(format!("{name}.json")))?;
    }
    Ok(())
}
