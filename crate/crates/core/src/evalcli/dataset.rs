//! Simulated corpora and their on-disk layout:
//!
//! ```text
//! <dir>/manifest.txt              modality, grid, slice counts, per-slice scales
//! <dir>/{train,test}/NNNN_r1.cndt  (and _r2, _est, _clean)
//! ```
//!
//! CT slices are stored as f64 `[H, W]` in HU/1000, MR slices as complex
//! f64 `[H, W]` in normalized units.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::ct_sim::{random_abdomen, CtAcquisition};
use crate::error::{Error, Result};
use crate::model::checkpoint::parse_key_values;
use crate::mr_sim::{random_mr_phantom, MrAcquisition};
use crate::numerics::{load_tensor, save_tensor, ComplexGrid2D, Grid2D, Rng, TensorData, Unit};
use crate::pair::{Image, Modality, SplitPair};

use super::config::{Acquisition, ExperimentConfig};

/// Stream of the experiment seed reserved for data generation.
pub const DATA_STREAM: u64 = 0x5EED_DA7A;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub modality: Modality,
    pub grid: usize,
    pub train: Vec<SplitPair>,
    pub test: Vec<SplitPair>,
}

/// Slice `index` of the corpus (training slices first, then test slices):
/// phantom from stream `2·index`, acquisition noise from `2·index + 1`.
pub fn simulate_slice(cfg: &ExperimentConfig, index: usize) -> Result<SplitPair> {
    let master = Rng::new(cfg.seed).derive(DATA_STREAM);
    let mut shape_rng = master.derive(2 * index as u64);
    let mut noise_rng = master.derive(2 * index as u64 + 1);
    match cfg.acquisition {
        Acquisition::Ct(c) => {
            let phantom = random_abdomen(c.grid, &mut shape_rng);
            CtAcquisition::new(&phantom, c)?.draw_pair(&mut noise_rng)
        }
        Acquisition::Mr(c) => {
            let phantom = random_mr_phantom(c.grid, &mut shape_rng);
            MrAcquisition::new(&phantom, c)?.draw_pair(&mut noise_rng)
        }
    }
}

pub fn simulate_dataset(cfg: &ExperimentConfig) -> Result<Dataset> {
    let slices = |range: std::ops::Range<usize>| range.map(|i| simulate_slice(cfg, i)).collect::<Result<Vec<_>>>();
    let train = slices(0..cfg.slices_train)?;
    let test = slices(cfg.slices_train..cfg.slices_train + cfg.slices_test)?;
    Ok(Dataset {
        modality: cfg.modality,
        grid: cfg.grid,
        train,
        test,
    })
}

fn save_image(path: &Path, img: &Image) -> Result<()> {
    let dims = [img.height(), img.width()];
    match img {
        Image::Real(g) => save_tensor(path, &dims, &TensorData::F64(g.data().to_vec())),
        Image::Complex(g) => save_tensor(path, &dims, &TensorData::ComplexF64(g.data().to_vec())),
    }
}

fn load_image(path: &Path, modality: Modality) -> Result<Image> {
    let file = load_tensor(path)?;
    let [h, w] = file.dims[..] else {
        return Err(Error::Malformed {
            path: path.to_path_buf(),
            reason: format!("expected a 2-D image, dims {:?}", file.dims),
        });
    };
    Ok(match modality {
        Modality::Ct => Image::Real(Grid2D::new(h, w, file.data.into_f64()?, Unit::HuPerThousand)?),
        Modality::Mr => Image::Complex(ComplexGrid2D::new(h, w, file.data.into_complex64()?)?),
    })
}

fn split_dir(dir: &Path, split: &str) -> std::path::PathBuf {
    dir.join(split)
}

pub fn save_dataset(dir: &Path, ds: &Dataset) -> Result<()> {
    let mut manifest = String::new();
    let _ = writeln!(manifest, "modality = {}", ds.modality.label());
    let _ = writeln!(manifest, "grid = {}", ds.grid);
    let _ = writeln!(manifest, "slices_train = {}", ds.train.len());
    let _ = writeln!(manifest, "slices_test = {}", ds.test.len());
    for (split, pairs) in [("train", &ds.train), ("test", &ds.test)] {
        let sub = split_dir(dir, split);
        fs::create_dir_all(&sub).map_err(|e| Error::io(&sub, e))?;
        for (i, p) in pairs.iter().enumerate() {
            let _ = writeln!(manifest, "scale.{split}.{i} = {}", p.scale);
            save_image(&sub.join(format!("{i:04}_r1.cndt")), &p.r1)?;
            save_image(&sub.join(format!("{i:04}_r2.cndt")), &p.r2)?;
            save_image(&sub.join(format!("{i:04}_est.cndt")), &p.est)?;
            if let Some(c) = &p.clean {
                save_image(&sub.join(format!("{i:04}_clean.cndt")), c)?;
            }
        }
    }
    let path = dir.join("manifest.txt");
    fs::write(&path, manifest).map_err(|e| Error::io(path, e))
}

pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let path = dir.join("manifest.txt");
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let map = parse_key_values(&text)?;
    let get = |k: &str| -> Result<&String> {
        map.get(k).ok_or_else(|| Error::Malformed {
            path: path.clone(),
            reason: format!("missing {k}"),
        })
    };
    let parse_num = |k: &str| -> Result<usize> {
        get(k)?.parse().map_err(|e| Error::Malformed {
            path: path.clone(),
            reason: format!("{k}: {e}"),
        })
    };
    let modality = Modality::parse(get("modality")?)?;
    let grid = parse_num("grid")?;
    let load_split = |split: &str, count: usize| -> Result<Vec<SplitPair>> {
        let sub = split_dir(dir, split);
        (0..count)
            .map(|i| {
                let scale: f64 = get(&format!("scale.{split}.{i}"))?.parse().map_err(|e| Error::Malformed {
                    path: path.clone(),
                    reason: format!("scale.{split}.{i}: {e}"),
                })?;
                let clean_path = sub.join(format!("{i:04}_clean.cndt"));
                let clean = if clean_path.exists() {
                    Some(load_image(&clean_path, modality)?)
                } else {
                    None
                };
                SplitPair::new(
                    modality,
                    load_image(&sub.join(format!("{i:04}_r1.cndt")), modality)?,
                    load_image(&sub.join(format!("{i:04}_r2.cndt")), modality)?,
                    load_image(&sub.join(format!("{i:04}_est.cndt")), modality)?,
                    clean,
                    scale,
                )
            })
            .collect()
    };
    let train = load_split("train", parse_num("slices_train")?)?;
    let test = load_split("test", parse_num("slices_test")?)?;
    Ok(Dataset {
        modality,
        grid,
        train,
        test,
    })
}
