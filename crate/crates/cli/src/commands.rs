//! Subcommand implementations.

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use lofi_core::admm::{admm_run, AdmmConfig};
use lofi_core::grid::{Coord, GridImage};
use lofi_core::metrics::{psnr, ssim, MetricReport};
use lofi_core::model::{
    infer_image, load_checkpoint, peek_config, save_checkpoint, train_loop, train_step, Dataset,
    FilterMode, LofiConfig, LofiModel, Precision, TrainConfig,
};
use lofi_core::ops::{FourierMaskOp, IdentityOp, InpaintOp, LinearOperator, PhantomKind};
use lofi_core::patch::ccpg_refine;
use lofi_core::rng::SeedRng;
use lofi_core::Real;

use crate::config::RunConfig;
use crate::dataset::{ensure_dataset, load_dataset, load_image, simulate};

pub fn cmd_simulate(cfg: &RunConfig) -> Result<()> {
    let dir = cfg.output.join("data");
    let manifest = simulate(cfg.task, &cfg.data, &dir)?;
    cfg.write_resolved(&cfg.output)?;
    println!(
        "simulated {} {:?} samples at {}x{} in {}",
        manifest.count,
        manifest.task,
        manifest.resolution,
        manifest.resolution,
        dir.display()
    );
    Ok(())
}

fn write_metrics_csv(path: &Path, log: &[lofi_core::model::TrainLogRow]) -> Result<()> {
    use std::io::Write;
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "step,loss,val_psnr")?;
    for row in log {
        match row.val_psnr {
            Some(v) => writeln!(f, "{},{:.6e},{:.4}", row.step, row.loss, v)?,
            None => writeln!(f, "{},{:.6e},", row.step, row.loss)?,
        }
    }
    Ok(())
}

fn run_train<T: Real>(cfg: &RunConfig, data_dir: &Path, resume: Option<&Path>) -> Result<()> {
    let (manifest, dataset): (_, Dataset<T>) = load_dataset::<T>(data_dir)?;
    let mut model_cfg = cfg.model.clone();
    model_cfg.channels = dataset.pairs[0].0.channels();
    model_cfg.resolve_auto(manifest.resolution);
    model_cfg.validate().map_err(anyhow::Error::from)?;

    let ck_path = cfg.output.join("checkpoint.lfck");
    let (mut model, mut rng) = match resume {
        Some(path) => {
            let (model, rng) = load_checkpoint::<T>(path)?;
            let rng = rng.unwrap_or_else(|| SeedRng::new(cfg.train.seed));
            eprintln!("resumed from {} at step {}", path.display(), model.step);
            (model, rng)
        }
        None => {
            let mut rng = SeedRng::new(cfg.train.seed);
            let model = LofiModel::<T>::new(model_cfg, &mut rng)?;
            (model, rng)
        }
    };
    eprintln!(
        "training {} parameters on {} pairs ({} held out for validation)",
        model.param_count(),
        dataset.pairs.len(),
        if dataset.val.is_some() { 1 } else { 0 }
    );
    let t0 = Instant::now();
    let log = train_loop(&mut model, &dataset, &cfg.train, &mut rng, |m, r, _step| {
        save_checkpoint(m, Some(r), &ck_path)?;
        Ok(())
    })?;
    if let Some(f) = &model.filter {
        lofi_core::filter::filter_export(f, &ck_path)?;
    }
    write_metrics_csv(&cfg.output.join("metrics.csv"), &log)?;
    let last = log.last();
    eprintln!(
        "finished {} steps in {:.1}s (final loss {:.4e})",
        log.len(),
        t0.elapsed().as_secs_f64(),
        last.map(|r| r.loss).unwrap_or(f64::NAN)
    );
    println!("checkpoint: {}", ck_path.display());
    Ok(())
}

pub fn cmd_train(cfg: &RunConfig, resume: Option<&Path>) -> Result<()> {
    cfg.validate()?;
    std::fs::create_dir_all(&cfg.output)?;
    cfg.write_resolved(&cfg.output)?;
    let data_dir = ensure_dataset(cfg.task, &cfg.data, &cfg.output)?;
    match cfg.model.precision {
        Precision::F32 => run_train::<f32>(cfg, &data_dir, resume),
        Precision::F64 => run_train::<f64>(cfg, &data_dir, resume),
    }
}

fn load_any_image<T: Real>(path: &Path) -> Result<GridImage<T>> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("png") => Ok(GridImage::<T>::load_png(path)?),
        _ => load_image::<T>(path),
    }
}

fn save_outputs<T: Real>(img: &GridImage<T>, stem: &Path) -> Result<()> {
    img.save_lft(&stem.with_extension("lft"))?;
    let lo = img.data().iter().cloned().fold(T::infinity(), T::min).to_f64_c();
    let hi = img
        .data()
        .iter()
        .cloned()
        .fold(T::neg_infinity(), T::max)
        .to_f64_c();
    if img.channels() == 1 || img.channels() == 3 {
        if lo < -0.05 || hi > 1.05 {
            img.save_png_normalized(&stem.with_extension("png"))?;
        } else {
            img.save_png(&stem.with_extension("png"))?;
        }
    }
    Ok(())
}

fn run_infer<T: Real>(
    ck: &Path,
    input: &Path,
    out_h: Option<usize>,
    out_w: Option<usize>,
    pixel_batch: usize,
    out: &Path,
) -> Result<()> {
    let (model, _) = load_checkpoint::<T>(ck)?;
    let q = load_any_image::<T>(input)?;
    let h = out_h.unwrap_or(q.height());
    let w = out_w.unwrap_or(q.width());
    let rec = infer_image(&model, &q, h, w, pixel_batch)?;
    std::fs::create_dir_all(out.parent().unwrap_or(Path::new(".")))?;
    save_outputs(&rec, out)?;
    println!("wrote {}x{} reconstruction to {}.lft", h, w, out.display());
    Ok(())
}

pub fn cmd_infer(
    ck: &Path,
    input: &Path,
    out_h: Option<usize>,
    out_w: Option<usize>,
    pixel_batch: usize,
    out: &Path,
) -> Result<()> {
    let (config, _) = peek_config(ck)?;
    match config.precision {
        Precision::F32 => run_infer::<f32>(ck, input, out_h, out_w, pixel_batch, out),
        Precision::F64 => run_infer::<f64>(ck, input, out_h, out_w, pixel_batch, out),
    }
}

#[derive(Debug, Clone)]
pub enum AdmmTask {
    Denoise,
    Inpaint,
    Radio,
}

impl std::str::FromStr for AdmmTask {
    type Err = anyhow::Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "denoise" => Ok(Self::Denoise),
            "inpaint" => Ok(Self::Inpaint),
            "radio" => Ok(Self::Radio),
            other => bail!("unknown admm task '{other}' (denoise | inpaint | radio)"),
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn run_admm<T: Real>(
    ck: &Path,
    task: &AdmmTask,
    measurements: &Path,
    mask: Option<&Path>,
    alpha: f64,
    iters: usize,
    pixel_batch: usize,
    gt: Option<&Path>,
    out_dir: &Path,
) -> Result<()> {
    let (model, _) = load_checkpoint::<T>(ck)?;
    let q = load_image::<T>(measurements)?;
    let gt_img = gt.map(|p| load_image::<T>(p)).transpose()?;
    std::fs::create_dir_all(out_dir)?;

    let op: Box<dyn LinearOperator<T>> = match task {
        AdmmTask::Denoise => Box::new(IdentityOp {
            shape: (q.height(), q.width(), q.channels()),
        }),
        AdmmTask::Inpaint => {
            let mask_path = mask.context("inpaint needs --mask")?;
            Box::new(InpaintOp::new(load_image::<T>(mask_path)?)?)
        }
        AdmmTask::Radio => {
            let mask_path = mask.context("radio needs --mask")?;
            let m = load_image::<f32>(mask_path)?;
            if m.height() != m.width() || m.channels() != 1 {
                bail!("radio mask must be a square single-channel 0/1 field");
            }
            let flags = m.data().iter().map(|&v| v >= 0.5).collect();
            Box::new(FourierMaskOp::new(m.height(), flags)?)
        }
    };

    let (h, w, _) = op.domain_shape();
    let cfg = AdmmConfig {
        alpha: T::from_f64_c(alpha),
        iterations: iters,
    };
    let snap_dir = out_dir.to_path_buf();
    let mut snapshot = |k: usize, v: &GridImage<T>| {
        if k % 10 == 0 {
            let _ = v.save_png_normalized(&snap_dir.join(format!("iter{k:03}.png")));
        }
    };
    let denoiser = |z: &GridImage<T>| infer_image(&model, z, h, w, pixel_batch);
    let (rec, stats) = admm_run(
        op.as_ref(),
        &q,
        denoiser,
        &cfg,
        gt_img.as_ref(),
        Some(&mut snapshot),
    )?;

    save_outputs(&rec, &out_dir.join("reconstruction"))?;
    use std::io::Write;
    let mut f = std::io::BufWriter::new(std::fs::File::create(out_dir.join("residuals.csv"))?);
    writeln!(f, "iter,primal_residual,psnr_vs_gt")?;
    for s in &stats {
        match s.psnr_vs_gt {
            Some(p) => writeln!(f, "{},{:.6e},{:.4}", s.iter, s.primal_residual, p)?,
            None => writeln!(f, "{},{:.6e},", s.iter, s.primal_residual)?,
        }
    }
    if let Some(last) = stats.last() {
        println!(
            "admm finished: residual {:.3e}{}",
            last.primal_residual,
            last.psnr_vs_gt
                .map(|p| format!(", psnr {p:.2} dB"))
                .unwrap_or_default()
        );
    } else {
        println!("admm finished after 0 iterations (zero image)");
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
pub fn cmd_admm(
    ck: &Path,
    task: &AdmmTask,
    measurements: &Path,
    mask: Option<&Path>,
    alpha: f64,
    iters: usize,
    pixel_batch: usize,
    gt: Option<&Path>,
    out_dir: &Path,
) -> Result<()> {
    let (config, _) = peek_config(ck)?;
    match config.precision {
        Precision::F32 => run_admm::<f32>(ck, task, measurements, mask, alpha, iters, pixel_batch, gt, out_dir),
        Precision::F64 => run_admm::<f64>(ck, task, measurements, mask, alpha, iters, pixel_batch, gt, out_dir),
    }
}

fn collect_lfts(path: &Path) -> Result<Vec<PathBuf>> {
    if path.is_file() {
        return Ok(vec![path.to_path_buf()]);
    }
    let mut files: Vec<PathBuf> = std::fs::read_dir(path)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().and_then(|e| e.to_str()) == Some("lft"))
        .collect();
    files.sort();
    Ok(files)
}

pub fn cmd_eval(recon: &Path, reference: &Path, peak_range: bool, out_csv: Option<&Path>) -> Result<()> {
    let recs = collect_lfts(recon)?;
    let refs = collect_lfts(reference)?;
    if recs.len() != refs.len() || recs.is_empty() {
        bail!(
            "reconstruction and reference sets differ in size ({} vs {})",
            recs.len(),
            refs.len()
        );
    }
    let peak = if peak_range { None } else { Some(1.0) };
    let mut report = MetricReport::default();
    for (r, g) in recs.iter().zip(refs.iter()) {
        let a = load_image::<f64>(r)?;
        let b = load_image::<f64>(g)?;
        let name = r.file_stem().unwrap_or_default().to_string_lossy().to_string();
        let p = psnr(&a, &b, peak)?;
        let s = ssim(&a, &b, peak)?;
        report.push(name, p, s);
    }
    println!("{:<32} {:>9} {:>8}", "name", "psnr_db", "ssim");
    for (name, p, s) in &report.rows {
        println!("{name:<32} {p:>9.3} {s:>8.4}");
    }
    println!("{:<32} {:>9.3} {:>8.4}", "mean", report.mean_psnr(), report.mean_ssim());
    if let Some(csv) = out_csv {
        use std::io::Write;
        let mut f = std::io::BufWriter::new(std::fs::File::create(csv)?);
        writeln!(f, "name,psnr_db,ssim")?;
        for (name, p, s) in &report.rows {
            writeln!(f, "{name},{p:.4},{s:.5}")?;
        }
        writeln!(f, "mean,{:.4},{:.5}", report.mean_psnr(), report.mean_ssim())?;
    }
    Ok(())
}

pub struct BenchRow {
    pub n: usize,
    pub transient_floats: u64,
    pub ms_per_100_steps: f64,
}

/// Instrumented training-memory benchmark across resolutions.
pub fn bench_rows(resolutions: &[usize], steps: usize, threads: usize) -> Result<Vec<BenchRow>> {
    let mut rows = Vec::new();
    for &n in resolutions {
        let mut rng = SeedRng::new(77);
        let mut cfg = LofiConfig {
            branch_hidden: vec![128, 128, 128],
            mixer_hidden: vec![128, 128, 128],
            filter: FilterMode::Fourier,
            precision: Precision::F32,
            ..LofiConfig::default()
        };
        cfg.resolve_auto(n);
        let mut model = LofiModel::<f32>::new(cfg, &mut rng)?;
        let q = lofi_core::ops::phantom_gen::<f32>(PhantomKind::Blobs, n, &mut rng)?;
        let f = lofi_core::ops::phantom_gen::<f32>(PhantomKind::Blobs, n, &mut rng)?;
        let tc = TrainConfig {
            object_batch: 2,
            pixel_batch: 128,
            ..TrainConfig::default()
        };
        let objects = [(&q, &f), (&f, &q)];
        let mut train_rng = SeedRng::new(5);
        // Warm-up, then a counted step, then timed steps.
        train_step(&mut model, &objects, &tc, &mut train_rng)?;
        let (res, floats) = lofi_core::alloc_track::measure_floats(threads, || {
            train_step(&mut model, &objects, &tc, &mut train_rng)
        })?;
        res?;
        let (timed, _) = lofi_core::alloc_track::measure_floats(threads, || -> Result<f64> {
            let t0 = Instant::now();
            for _ in 0..steps {
                train_step(&mut model, &objects, &tc, &mut train_rng)?;
            }
            Ok(t0.elapsed().as_secs_f64())
        })?;
        let secs = timed?;
        rows.push(BenchRow {
            n,
            transient_floats: floats,
            ms_per_100_steps: secs / steps as f64 * 100.0 * 1000.0,
        });
    }
    rows.sort_by_key(|r| r.n);
    Ok(rows)
}

pub fn cmd_bench(resolutions: &[usize], steps: usize, threads: usize, out_csv: Option<&Path>) -> Result<()> {
    if resolutions.is_empty() {
        bail!("need at least one resolution");
    }
    let rows = bench_rows(resolutions, steps, threads)?;
    println!("{:>6} {:>18} {:>16}", "n", "transient_floats", "ms_per_100_steps");
    for r in &rows {
        println!("{:>6} {:>18} {:>16.1}", r.n, r.transient_floats, r.ms_per_100_steps);
    }
    if let Some(csv) = out_csv {
        use std::io::Write;
        let mut f = std::io::BufWriter::new(std::fs::File::create(csv)?);
        writeln!(f, "n,transient_floats,ms_per_100_steps")?;
        for r in &rows {
            writeln!(f, "{},{},{:.1}", r.n, r.transient_floats, r.ms_per_100_steps)?;
        }
    }
    // The resolution-agnostic working set is the whole point: fail loudly.
    let f0 = rows[0].transient_floats;
    if rows.iter().any(|r| r.transient_floats != f0) {
        bail!("transient-float counts differ across resolutions");
    }
    let (tmin, tmax) = rows.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), r| {
        (lo.min(r.ms_per_100_steps), hi.max(r.ms_per_100_steps))
    });
    if tmax > 2.0 * tmin {
        bail!("wall time per step spreads more than 2x across resolutions ({tmin:.1} vs {tmax:.1} ms/100)");
    }
    println!("resolution-agnostic working set: ok");
    Ok(())
}

fn parse_pixels(spec: &str) -> Result<Vec<(usize, usize)>> {
    spec.split(';')
        .filter(|s| !s.is_empty())
        .map(|pair| {
            let mut it = pair.split(',');
            let r = it.next().context("pixel spec: row missing")?.trim().parse()?;
            let c = it.next().context("pixel spec: col missing")?.trim().parse()?;
            Ok((r, c))
        })
        .collect()
}

fn run_trace<T: Real>(ck: &Path, input: &Path, pixels: &str, out_dir: &Path) -> Result<()> {
    let (model, _) = load_checkpoint::<T>(ck)?;
    let q = load_any_image::<T>(input)?;
    let pre = lofi_core::model::preprocess(&model, &q)?;
    std::fs::create_dir_all(out_dir)?;
    let pixels = parse_pixels(pixels)?;
    let (h, w) = (q.height(), q.width());
    for &(r, c) in &pixels {
        if r >= h || c >= w {
            bail!("query pixel ({r}, {c}) outside the {h}x{w} input");
        }
        let center = Coord::<T>::pixel_center(r, c, h, w);
        let trace: Vec<ndarray::Array2<T>> = match &model.ccpg {
            Some(stack) => {
                let (_, trace) =
                    ccpg_refine(&pre, center, &model.offsets, stack, model.config.boundary)?;
                trace
            }
            None => vec![model.offsets.offsets.clone()],
        };
        // Tensor [T+1][K][2].
        let k = model.offsets.k();
        let flat: Vec<T> = trace.iter().flat_map(|t| t.iter().cloned().collect::<Vec<_>>()).collect();
        lofi_core::lft::save_tensor(
            &out_dir.join(format!("trace_r{r}_c{c}.lft")),
            &[trace.len() as u32, k as u32, 2],
            &flat,
        )?;
        // One overlay per stage: query pixel red, sample points blue.
        for (stage, offs) in trace.iter().enumerate() {
            let mut rgb = to_rgb_normalized(&q);
            mark(&mut rgb, r as i64, c as i64, [1.0, 0.1, 0.1]);
            for row in offs.rows() {
                let x = (center.x + row[0]).to_f64_c() * w as f64 - 0.5;
                let y = (center.y + row[1]).to_f64_c() * h as f64 - 0.5;
                mark(&mut rgb, y.round() as i64, x.round() as i64, [0.15, 0.3, 1.0]);
            }
            rgb.save_png(&out_dir.join(format!("trace_r{r}_c{c}_stage{stage}.png")))?;
        }
    }
    println!("wrote geometry traces for {} pixels to {}", pixels.len(), out_dir.display());
    Ok(())
}

fn to_rgb_normalized<T: Real>(img: &GridImage<T>) -> GridImage<f32> {
    let lo = img.data().iter().cloned().fold(T::infinity(), T::min).to_f64_c();
    let hi = img.data().iter().cloned().fold(T::neg_infinity(), T::max).to_f64_c();
    let span = if hi > lo { hi - lo } else { 1.0 };
    let (h, w, c) = (img.height(), img.width(), img.channels());
    let mut out = GridImage::<f32>::zeros(h, w, 3);
    for i in 0..h * w {
        let v = ((img.data()[i * c].to_f64_c() - lo) / span) as f32;
        for ch in 0..3 {
            out.data_mut()[i * 3 + ch] = v;
        }
    }
    out
}

fn mark(img: &mut GridImage<f32>, r: i64, c: i64, color: [f32; 3]) {
    for dr in -1..=1i64 {
        for dc in -1..=1i64 {
            let rr = r + dr;
            let cc = c + dc;
            if rr >= 0 && cc >= 0 && (rr as usize) < img.height() && (cc as usize) < img.width() {
                for ch in 0..3 {
                    img.set(rr as usize, cc as usize, ch, color[ch]);
                }
            }
        }
    }
}

pub fn cmd_trace(ck: &Path, input: &Path, pixels: &str, out_dir: &Path) -> Result<()> {
    let (config, _) = peek_config(ck)?;
    match config.precision {
        Precision::F32 => run_trace::<f32>(ck, input, pixels, out_dir),
        Precision::F64 => run_trace::<f64>(ck, input, pixels, out_dir),
    }
}
