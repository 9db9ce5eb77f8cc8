//! The six batch commands behind the `priornet` binary.

use std::cell::RefCell;
use std::fs;
use std::path::{Path, PathBuf};

use priornet_core::dcp::dcp_dehaze;
use priornet_core::metrics::{quality, QualityReport};
use priornet_core::model::ModelWeights;
use priornet_core::physics::{synthesize_haze, transmission_from_depth, HazeParams, Image};
use priornet_core::rng::SplitMix64;
use priornet_core::train::{self, RandConvExtractor};

use crate::config::RunConfig;
use crate::error::{from_tensor, from_weight_format, CliError};
use crate::manifest::DatasetManifest;
use crate::ppm;
use crate::report;

pub fn load_weights(path: &Path) -> Result<ModelWeights, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    ModelWeights::from_bytes(&bytes).map_err(|e| from_weight_format(path, e))
}

pub fn save_weights(model: &ModelWeights, path: &Path) -> Result<(), CliError> {
    fs::write(path, model.to_bytes()).map_err(|e| CliError::io(path, e))
}

fn stem_of(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "image".into())
}

/// Synthesize hazy observations for every clean/depth pair, with the
/// haze parameters drawn per image from the configured ranges and
/// recorded in a sidecar text file.
pub fn synth(manifest_path: &str, config_path: &str, out_dir: &str) -> Result<(), CliError> {
    let manifest = DatasetManifest::load(Path::new(manifest_path))?;
    let config = RunConfig::load(Path::new(config_path))?;
    let out = Path::new(out_dir);
    fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;

    let mut rng = SplitMix64::new(config.train.seed);
    for entry in &manifest.entries {
        let a = rng.uniform(config.a_min, config.a_max);
        let beta = rng.uniform(config.beta_min, config.beta_max);
        let clean = ppm::read_image(&entry.first)?;
        let depth = ppm::read_depth(&entry.second)?;
        let transmission = transmission_from_depth(&depth, beta);
        let params = HazeParams::uniform(a, beta, transmission);
        let hazy = synthesize_haze(&clean, &params).map_err(from_tensor)?;

        let stem = stem_of(&entry.first);
        ppm::write_image(&hazy, &out.join(format!("{stem}_hazy.ppm")))?;
        let sidecar = out.join(format!("{stem}_hazy.txt"));
        fs::write(&sidecar, format!("a = {a}\nbeta = {beta}\n"))
            .map_err(|e| CliError::io(&sidecar, e))?;
    }
    println!("synthesized {} hazy images into {out_dir}", manifest.len());
    Ok(())
}

/// Train on hazy/clean pairs; writes the weight file, a loss CSV next
/// to it, and periodic checkpoints when the config asks for them.
pub fn train(manifest_path: &str, config_path: &str, out_path: &str) -> Result<(), CliError> {
    let manifest = DatasetManifest::load(Path::new(manifest_path))?;
    let config = RunConfig::load(Path::new(config_path))?;
    let mut dataset = Vec::with_capacity(manifest.len());
    for entry in &manifest.entries {
        dataset.push((ppm::read_image(&entry.first)?, ppm::read_image(&entry.second)?));
    }

    let mut model =
        ModelWeights::build(config.model.clone(), config.train.seed).map_err(from_tensor)?;
    let extractor = RandConvExtractor::seeded(config.train.seed);
    let out = Path::new(out_path);

    let checkpoint_failure: RefCell<Option<CliError>> = RefCell::new(None);
    let history = train::train(&mut model, &dataset, &config.train, &extractor, |iter, m| {
        let path = PathBuf::from(format!("{out_path}.ckpt-{iter}"));
        if let Err(e) = save_weights(m, &path) {
            checkpoint_failure.borrow_mut().get_or_insert(e);
        }
    })
    .map_err(from_tensor)?;
    if let Some(e) = checkpoint_failure.into_inner() {
        return Err(e);
    }

    save_weights(&model, out)?;
    report::write_loss_history(&out.with_extension("csv"), &history)?;
    if let Some(last) = history.last() {
        println!(
            "trained {} iterations; final loss {:.6}; weights -> {out_path}",
            history.len(),
            last.total
        );
    }
    Ok(())
}

/// Restore a single image or a whole manifest of them.
pub fn dehaze(
    weights_path: &str,
    input: Option<&str>,
    manifest: Option<&str>,
    out_path: &str,
) -> Result<(), CliError> {
    let model = load_weights(Path::new(weights_path))?;
    match (input, manifest) {
        (Some(file), None) => {
            let hazy = ppm::read_image(Path::new(file))?;
            let restored = model.dehaze(&hazy).map_err(from_tensor)?;
            ppm::write_image(&restored, Path::new(out_path))
        }
        (None, Some(list)) => {
            let manifest = DatasetManifest::load(Path::new(list))?;
            let out = Path::new(out_path);
            fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
            for entry in &manifest.entries {
                let hazy = ppm::read_image(&entry.first)?;
                let restored = model.dehaze(&hazy).map_err(from_tensor)?;
                let name = entry.first.file_name().expect("manifest paths are files");
                ppm::write_image(&restored, &out.join(name))?;
            }
            println!("dehazed {} images into {out_path}", manifest.len());
            Ok(())
        }
        _ => Err(CliError::Usage(
            "dehaze needs exactly one of --in or --manifest".into(),
        )),
    }
}

fn evaluate_pairs(
    manifest: &DatasetManifest,
    mut restore: impl FnMut(&Image) -> Result<Image, CliError>,
    out_dir: Option<&Path>,
) -> Result<Vec<QualityReport>, CliError> {
    let mut rows = Vec::with_capacity(manifest.len());
    for entry in &manifest.entries {
        let hazy = ppm::read_image(&entry.first)?;
        let clear = ppm::read_image(&entry.second)?;
        let restored = restore(&hazy)?;
        if let Some(dir) = out_dir {
            let name = entry.first.file_name().expect("manifest paths are files");
            ppm::write_image(&restored, &dir.join(name))?;
        }
        rows.push(quality(&restored, &clear, &stem_of(&entry.first)).map_err(from_tensor)?);
    }
    Ok(rows)
}

/// Dehaze every manifest pair with the model and score against the
/// references; emits the per-image CSV plus a mean row.
pub fn eval(weights_path: &str, manifest_path: &str, report_path: &str) -> Result<(), CliError> {
    let model = load_weights(Path::new(weights_path))?;
    let manifest = DatasetManifest::load(Path::new(manifest_path))?;
    let rows = evaluate_pairs(
        &manifest,
        |hazy| model.dehaze(hazy).map_err(from_tensor),
        None,
    )?;
    report::write_eval(Path::new(report_path), &rows)?;
    let (psnr, ssim) = report::means(&rows);
    println!("mean psnr {psnr:.4} dB, mean ssim {ssim:.4} over {} images", rows.len());
    Ok(())
}

/// The classical baseline through the same restore/score path.
pub fn dcp(
    input: Option<&str>,
    manifest: Option<&str>,
    out: Option<&str>,
    report_path: Option<&str>,
) -> Result<(), CliError> {
    match (input, manifest) {
        (Some(file), None) => {
            let Some(out_path) = out else {
                return Err(CliError::Usage("dcp --in needs --out".into()));
            };
            let hazy = ppm::read_image(Path::new(file))?;
            ppm::write_image(&dcp_dehaze(&hazy), Path::new(out_path))
        }
        (None, Some(list)) => {
            if out.is_none() && report_path.is_none() {
                return Err(CliError::Usage(
                    "dcp --manifest needs --report and/or --out".into(),
                ));
            }
            let manifest = DatasetManifest::load(Path::new(list))?;
            let out_dir = match out {
                Some(dir) => {
                    let dir = Path::new(dir);
                    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
                    Some(dir)
                }
                None => None,
            };
            let rows = evaluate_pairs(&manifest, |hazy| Ok(dcp_dehaze(hazy)), out_dir)?;
            if let Some(path) = report_path {
                report::write_eval(Path::new(path), &rows)?;
            }
            let (psnr, ssim) = report::means(&rows);
            println!("dcp mean psnr {psnr:.4} dB, mean ssim {ssim:.4} over {} images", rows.len());
            Ok(())
        }
        _ => Err(CliError::Usage(
            "dcp needs exactly one of --in or --manifest".into(),
        )),
    }
}

/// Print the config, parameter count, and serialized size of a weight
/// file.
pub fn info(weights_path: &str) -> Result<(), CliError> {
    let model = load_weights(Path::new(weights_path))?;
    let config = model.config();
    println!("variant: {}", config.variant.name());
    println!("kernel_size: {}", config.kernel_size);
    println!("channels_per_conv: {}", config.channels_per_conv);
    println!("mia_reduction: {}", config.mia_reduction);
    println!("bias_b: {}", config.bias_b);
    println!("parameters: {}", model.param_count());
    println!("serialized_bytes: {}", model.to_bytes().len());
    Ok(())
}
