//! Image loading and the on-disk layout of generated datasets:
//! `out/images/NNNNNN.png`, `out/masks/NNNNNN.png` and `out/manifest.json`.

use std::fs;
use std::io::ErrorKind;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use image::{ColorType, DynamicImage, GrayImage, ImageFormat, ImageReader, RgbImage};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fag::{expand_training_set, generate, FagConfig, SamplePair};
use crate::imgproc::{otsu_threshold, ImageBuffer, MaskBuffer, Rect};
use crate::rng::derive_seed;

pub const MANIFEST_VERSION: &str = "1";
pub const IMAGES_DIR: &str = "images";
pub const MASKS_DIR: &str = "masks";
pub const MANIFEST_FILE: &str = "manifest.json";

/// Samples generated in memory before their files are written.
const WRITE_CHUNK: usize = 64;

/// Decodes an 8-bit PNG or JPEG into RGB, expanding grayscale and dropping
/// alpha. `resize` rescales to a square side with a triangle filter.
pub fn load_image(path: &Path, resize: Option<usize>) -> Result<ImageBuffer> {
    let reader = match ImageReader::open(path) {
        Ok(r) => r,
        Err(e) if e.kind() == ErrorKind::NotFound => return Err(Error::NotFound(path.to_path_buf())),
        Err(e) => return Err(Error::io(path, e)),
    };
    let reader = reader.with_guessed_format().map_err(|e| Error::io(path, e))?;
    match reader.format() {
        Some(ImageFormat::Png | ImageFormat::Jpeg) => {}
        Some(other) => {
            return Err(Error::UnsupportedFormat { path: path.to_path_buf(), detail: format!("{other:?}") });
        }
        None => {
            return Err(Error::CorruptImage { path: path.to_path_buf(), reason: "unrecognised file signature".into() })
        }
    }
    let img = reader.decode().map_err(|e| match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::CorruptImage { path: path.to_path_buf(), reason: other.to_string() },
    })?;
    match img.color() {
        ColorType::L8 | ColorType::La8 | ColorType::Rgb8 | ColorType::Rgba8 => {}
        other => {
            return Err(Error::UnsupportedBitDepth { path: path.to_path_buf(), detail: format!("{other:?}") });
        }
    }
    let img = match resize {
        Some(side) if (img.width() as usize, img.height() as usize) != (side, side) => {
            img.resize_exact(side as u32, side as u32, image::imageops::FilterType::Triangle)
        }
        _ => img,
    };
    let rgb = img.into_rgb8();
    let (w, h) = (rgb.width() as usize, rgb.height() as usize);
    ImageBuffer::from_raw(w, h, rgb.into_raw())
}

/// Image files with a `.png`, `.jpg` or `.jpeg` extension, sorted by path.
pub fn list_images(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = match fs::read_dir(dir) {
        Ok(e) => e,
        Err(e) if e.kind() == ErrorKind::NotFound => return Err(Error::NotFound(dir.to_path_buf())),
        Err(e) => return Err(Error::io(dir, e)),
    };
    let mut out = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
        if path.is_file() && matches!(ext.as_deref(), Some("png" | "jpg" | "jpeg")) {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

pub fn save_rgb(path: &Path, image: &ImageBuffer) -> Result<()> {
    let (w, h) = image.dims();
    let buf = RgbImage::from_raw(w as u32, h as u32, image.data().to_vec()).expect("buffer length matches dims");
    save_dynamic(path, DynamicImage::ImageRgb8(buf))
}

/// Writes a mask as 8-bit grayscale with set pixels at 255.
pub fn save_mask(path: &Path, mask: &MaskBuffer) -> Result<()> {
    let (w, h) = mask.dims();
    save_gray(path, w, h, mask.data().iter().map(|&v| v * 255).collect())
}

pub fn save_gray(path: &Path, width: usize, height: usize, data: Vec<u8>) -> Result<()> {
    let buf = GrayImage::from_raw(width as u32, height as u32, data)
        .ok_or_else(|| Error::DimensionMismatch(format!("gray buffer does not fill {width}x{height}")))?;
    save_dynamic(path, DynamicImage::ImageLuma8(buf))
}

fn save_dynamic(path: &Path, img: DynamicImage) -> Result<()> {
    img.save_with_format(path, ImageFormat::Png).map_err(|e| match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::Encode { path: path.to_path_buf(), reason: other.to_string() },
    })
}

/// Loads a mask PNG written by [`save_mask`]; any nonzero sample is set.
pub fn load_mask(path: &Path) -> Result<MaskBuffer> {
    let img = load_image(path, None)?;
    let (w, h) = img.dims();
    MaskBuffer::from_raw(w, h, img.data().chunks_exact(3).map(|p| u8::from(p[0] != 0)).collect())
}

/// File name stem for a dataset index.
pub fn index_name(index: usize) -> String {
    format!("{index:06}.png")
}

/// Writes the pair under `out_dir` and returns the anomaly and mask paths
/// relative to it.
pub fn save_pair(pair: &SamplePair, out_dir: &Path, index: usize) -> Result<(PathBuf, PathBuf)> {
    let name = index_name(index);
    let anomaly = Path::new(IMAGES_DIR).join(&name);
    let mask = Path::new(MASKS_DIR).join(&name);
    for sub in [IMAGES_DIR, MASKS_DIR] {
        let dir = out_dir.join(sub);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    }
    save_rgb(&out_dir.join(&anomaly), &pair.anomaly_image)?;
    save_mask(&out_dir.join(&mask), &pair.mask)?;
    Ok((anomaly, mask))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub index: usize,
    pub source_path: String,
    pub anomaly_path: String,
    pub mask_path: String,
    pub seed: u64,
    pub patch_rect: Rect,
    pub paste_position: (usize, usize),
}

/// A sample that could not be generated. `sample` is its position in the
/// expanded input list, from which its seed was derived.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestFailure {
    pub sample: usize,
    pub source_path: String,
    pub seed: u64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub version: String,
    pub master_seed: u64,
    pub config: FagConfig,
    pub entries: Vec<ManifestEntry>,
    pub failures: Vec<ManifestFailure>,
}

impl DatasetManifest {
    pub fn write(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self).expect("manifest serialises");
        fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| match e.kind() {
            ErrorKind::NotFound => Error::NotFound(path.to_path_buf()),
            _ => Error::io(path, e),
        })?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.line() as u64,
            reason: e.to_string(),
        })
    }
}

#[derive(Debug, Clone)]
pub struct BuildOptions {
    pub count: usize,
    pub master_seed: u64,
    pub config: FagConfig,
    /// Square side to resize inputs to, if any.
    pub resize: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct BuildSummary {
    pub written: usize,
    pub failed: usize,
    /// Extra generation attempts summed over written samples.
    pub retries: usize,
    pub elapsed: Duration,
    pub manifest: DatasetManifest,
}

impl BuildSummary {
    pub fn failure_rate(&self) -> f64 {
        let total = self.written + self.failed;
        if total == 0 {
            0.0
        } else {
            self.failed as f64 / total as f64
        }
    }
}

/// Expands `inputs` round-robin to `count` samples, generates one pair per
/// sample with seed `derive_seed(master_seed, i)`, and writes the dataset.
///
/// Generation runs in parallel; files are numbered by sample order among
/// the successes, so the output does not depend on scheduling. Failed
/// samples are listed in the manifest and skipped.
pub fn build_dataset(inputs: &[PathBuf], out_dir: &Path, opts: &BuildOptions) -> Result<BuildSummary> {
    let start = Instant::now();
    opts.config.validate()?;
    if opts.count == 0 {
        return Err(Error::InvalidArgument("count must be at least 1".into()));
    }
    let sources: Vec<usize> = expand_training_set(&(0..inputs.len()).collect::<Vec<_>>(), opts.count)?
        .into_iter()
        .take(opts.count)
        .collect();

    let used: Vec<usize> = {
        let mut u = sources.clone();
        u.sort_unstable();
        u.dedup();
        u
    };
    let loaded: Vec<(usize, ImageBuffer, Option<MaskBuffer>)> = used
        .par_iter()
        .map(|&k| {
            let img = load_image(&inputs[k], opts.resize)?;
            let object = opts.config.object_constrained.then(|| otsu_threshold(&img).mask);
            Ok((k, img, object))
        })
        .collect::<Result<_>>()?;
    let lookup = |k: usize| &loaded[used.binary_search(&k).expect("source was loaded")];

    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut entries = Vec::new();
    let mut failures = Vec::new();
    let mut retries = 0;
    for chunk_start in (0..sources.len()).step_by(WRITE_CHUNK) {
        let chunk = chunk_start..(chunk_start + WRITE_CHUNK).min(sources.len());
        let results: Vec<(usize, u64, Result<SamplePair>)> = chunk
            .into_par_iter()
            .map(|i| {
                let (_, img, object) = lookup(sources[i]);
                let seed = derive_seed(opts.master_seed, i as u64);
                (i, seed, generate(img, object.as_ref(), &opts.config, seed))
            })
            .collect();
        let mut batch = Vec::new();
        for (i, seed, res) in results {
            let source_path = inputs[sources[i]].to_string_lossy().into_owned();
            match res {
                Ok(pair) => {
                    let index = entries.len() + batch.len();
                    batch.push((index, source_path, pair));
                }
                Err(e) => failures.push(ManifestFailure { sample: i, source_path, seed, reason: e.to_string() }),
            }
        }
        let written: Vec<ManifestEntry> = batch
            .par_iter()
            .map(|(index, source_path, pair)| {
                let (anomaly, mask) = save_pair(pair, out_dir, *index)?;
                Ok(ManifestEntry {
                    index: *index,
                    source_path: source_path.clone(),
                    anomaly_path: slash_path(&anomaly),
                    mask_path: slash_path(&mask),
                    seed: pair.meta.seed,
                    patch_rect: pair.meta.patch_rect,
                    paste_position: pair.meta.paste_position,
                })
            })
            .collect::<Result<_>>()?;
        retries += batch.iter().map(|(_, _, p)| p.meta.attempts - 1).sum::<usize>();
        entries.extend(written);
    }

    let manifest = DatasetManifest {
        version: MANIFEST_VERSION.into(),
        master_seed: opts.master_seed,
        config: opts.config.clone(),
        entries,
        failures,
    };
    manifest.write(&out_dir.join(MANIFEST_FILE))?;
    Ok(BuildSummary {
        written: manifest.entries.len(),
        failed: manifest.failures.len(),
        retries,
        elapsed: start.elapsed(),
        manifest,
    })
}

fn slash_path(p: &Path) -> String {
    p.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/")
}

/// Side-by-side `x_nor | x_abn | overlay`, the overlay tinting label pixels
/// red at half opacity.
pub fn preview_panel(x_nor: &ImageBuffer, pair: &SamplePair) -> Result<ImageBuffer> {
    let (w, h) = x_nor.dims();
    if pair.anomaly_image.dims() != (w, h) || pair.mask.dims() != (w, h) {
        return Err(Error::DimensionMismatch("preview inputs differ in size".into()));
    }
    Ok(ImageBuffer::from_fn(3 * w, h, |x, y| {
        let (panel, px) = (x / w, x % w);
        match panel {
            0 => x_nor.get(px, y),
            1 => pair.anomaly_image.get(px, y),
            _ => {
                let p = pair.anomaly_image.get(px, y);
                if pair.mask.get(px, y) {
                    [((p[0] as u16 + 255) / 2) as u8, p[1] / 2, p[2] / 2]
                } else {
                    p
                }
            }
        }
    }))
}
