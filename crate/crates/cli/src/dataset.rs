//! Dataset simulation and loading. A simulated dataset is a directory of
//! LFT1 pairs (`*_obs.lft`, `*_gt.lft`, plus `*_mask.lft` where relevant)
//! with a JSON manifest recording the task, seed, noise, and operator
//! parameters.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use lofi_core::grid::GridImage;
use lofi_core::ops::{
    self, awgn, fbp, ks_forward, ks_inverse, ks_noise_sigma, phantom_gen, radon, uniform_angles,
    uv_mask_gen, FbpFilter, FourierMaskOp, InpaintOp, LinearOperator, NoiseSpec, PhantomKind,
};
use lofi_core::rng::SeedRng;
use lofi_core::Real;

use crate::config::{DataConfig, Task};

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct SampleEntry {
    pub obs: String,
    pub gt: String,
    pub mask: Option<String>,
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct Manifest {
    pub task: Task,
    pub seed: u64,
    pub count: usize,
    pub resolution: usize,
    pub phantom: PhantomKind,
    pub noise: serde_json::Value,
    pub operator: serde_json::Value,
    pub samples: Vec<SampleEntry>,
}

impl Manifest {
    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join("manifest.json");
        let text = std::fs::read_to_string(&path)
            .with_context(|| format!("reading manifest {}", path.display()))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Generate a dataset directory for the given task. Deterministic under the
/// data seed.
pub fn simulate(task: Task, cfg: &DataConfig, dir: &Path) -> Result<Manifest> {
    std::fs::create_dir_all(dir)?;
    let mut rng = SeedRng::new(cfg.seed);
    let m = cfg.resolution;
    let kind = cfg.phantom.unwrap_or_else(|| task.default_phantom());
    let mut samples = Vec::with_capacity(cfg.count);

    // Task-level noise and operator descriptors for the manifest.
    let mut noise = serde_json::json!(null);
    let mut operator = serde_json::json!(null);

    // The radio task shares one uv coverage across the dataset.
    let radio_mask = if task == Task::Radio {
        let mask = uv_mask_gen(m, cfg.uv_tracks, &mut rng.fork(0xDADA))?;
        let mask_f: Vec<f32> = mask.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
        lofi_core::lft::save_tensor(&dir.join("uv_mask.lft"), &[m as u32, m as u32], &mask_f)?;
        operator = serde_json::json!({
            "uv_tracks": cfg.uv_tracks,
            "coverage": ops::masks::mask_coverage(&mask),
            "mask_file": "uv_mask.lft",
        });
        Some(mask)
    } else {
        None
    };

    for i in 0..cfg.count {
        let gt = phantom_gen::<f32>(kind, m, &mut rng)?;
        let obs_name = format!("sample{i:03}_obs.lft");
        let gt_name = format!("sample{i:03}_gt.lft");
        let mut mask_name = None;

        let obs: GridImage<f32> = match task {
            Task::Denoise => {
                let sigma = cfg.sigma.unwrap_or(0.15);
                noise = serde_json::json!({ "kind": "sigma", "sigma": sigma });
                awgn(&gt, &NoiseSpec::Sigma { sigma }, &mut rng)
            }
            Task::Ldct => {
                let snr = cfg.snr_db.unwrap_or(30.0);
                noise = serde_json::json!({ "kind": "snr_db", "snr_db": snr });
                operator = serde_json::json!({ "angles": cfg.angles, "fbp_filter": "ramp" });
                let angles = uniform_angles(cfg.angles);
                let sino = radon(&gt, &angles)?;
                let noisy = awgn(
                    &GridImage::from_vec(
                        sino.data.nrows(),
                        sino.data.ncols(),
                        1,
                        sino.data.iter().cloned().collect(),
                    )?,
                    &NoiseSpec::SnrDb { snr_db: snr },
                    &mut rng,
                );
                let noisy_sino = ops::Sinogram {
                    angles: sino.angles.clone(),
                    data: ndarray::Array2::from_shape_vec(
                        (sino.data.nrows(), sino.data.ncols()),
                        noisy.into_data(),
                    )?,
                };
                fbp(&noisy_sino, m, FbpFilter::Ramp)?
            }
            Task::Ks => {
                let sigma_i = cfg
                    .sigma
                    .unwrap_or_else(|| ks_noise_sigma(0.37, 300.0, m, 30.0));
                noise = serde_json::json!({ "kind": "per_pixel_shear", "sigma_i": sigma_i });
                operator = serde_json::json!({ "model": "kaiser_squires" });
                let gamma = ks_forward(&gt)?;
                let noisy = awgn(&gamma, &NoiseSpec::Sigma { sigma: sigma_i }, &mut rng);
                ks_inverse(&noisy)?
            }
            Task::Inpaint => {
                let sigma = cfg.sigma.unwrap_or(0.0);
                noise = serde_json::json!({ "kind": "sigma", "sigma": sigma });
                operator = serde_json::json!({ "masked_fraction": cfg.mask_fraction });
                let op = InpaintOp::<f32>::random(m, m, 1, cfg.mask_fraction, &mut rng);
                let name = format!("sample{i:03}_mask.lft");
                op.mask.save_lft(&dir.join(&name))?;
                mask_name = Some(name);
                ops::masks::inpaint_simulate(&op, &gt, &NoiseSpec::Sigma { sigma }, &mut rng)?
            }
            Task::Radio => {
                let snr = cfg.snr_db.unwrap_or(30.0);
                noise = serde_json::json!({ "kind": "snr_db", "snr_db": snr });
                let op = FourierMaskOp::new(m, radio_mask.clone().unwrap())?;
                mask_name = Some("uv_mask.lft".to_string());
                op.simulate(&gt, &NoiseSpec::SnrDb { snr_db: snr }, &mut rng)?
            }
            Task::TransposeToy => {
                noise = serde_json::json!(null);
                operator = serde_json::json!({ "model": "transpose" });
                gt.transposed()
            }
        };

        obs.save_lft(&dir.join(&obs_name))?;
        gt.save_lft(&dir.join(&gt_name))?;
        if i == 0 {
            // One preview pair for quick inspection.
            gt.save_png_normalized(&dir.join("preview_gt.png"))?;
            if obs.channels() == 1 {
                obs.save_png_normalized(&dir.join("preview_obs.png"))?;
            }
        }
        samples.push(SampleEntry {
            obs: obs_name,
            gt: gt_name,
            mask: mask_name,
        });
    }

    let manifest = Manifest {
        task,
        seed: cfg.seed,
        count: cfg.count,
        resolution: m,
        phantom: kind,
        noise,
        operator,
        samples,
    };
    std::fs::write(
        dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)?,
    )?;
    Ok(manifest)
}

/// Load an LFT1 image in dataset precision and convert.
pub fn load_image<T: Real>(path: &Path) -> Result<GridImage<T>> {
    let img = GridImage::<f32>::load_lft(path)
        .with_context(|| format!("loading {}", path.display()))?;
    Ok(img.convert::<T>())
}

/// Training pairs from a manifest directory; the last sample is held out for
/// validation when more than one sample exists.
pub fn load_dataset<T: Real>(dir: &Path) -> Result<(Manifest, lofi_core::model::Dataset<T>)> {
    let manifest = Manifest::load(dir)?;
    let mut pairs = Vec::with_capacity(manifest.samples.len());
    for s in &manifest.samples {
        let obs = load_image::<T>(&dir.join(&s.obs))?;
        let gt = load_image::<T>(&dir.join(&s.gt))?;
        pairs.push((obs, gt));
    }
    let val = if pairs.len() > 1 { pairs.pop() } else { None };
    Ok((
        manifest,
        lofi_core::model::Dataset { pairs, val },
    ))
}

/// Resolve the dataset directory for a run: an explicit manifest directory
/// or a freshly simulated one under the output directory.
pub fn ensure_dataset(task: Task, data: &DataConfig, out_dir: &Path) -> Result<PathBuf> {
    if let Some(dir) = &data.manifest {
        return Ok(dir.clone());
    }
    let dir = out_dir.join("data");
    if !dir.join("manifest.json").exists() {
        simulate(task, data, &dir)?;
    }
    Ok(dir)
}
