//! Writing generated samples to disk and reading them back.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::assets::Assets;
use super::quarter::quarter;
use super::render::{render_sample, Sample};
use super::spec::{sample_scene, SceneSpec};
use super::GeneratorConfig;
use crate::flow::{read_flo_file, write_flo_file};
use crate::image::{load_mask_png, save_mask_png, Image};
use crate::kvconfig::ConfigFields;
use crate::rng::{derive_seed, substream};
use crate::{CoreError, Result};

/// Size of the original synthetic chairs dataset, recorded in manifests.
pub const REFERENCE_COUNT: usize = 22_872;
/// Its train/test split.
pub const REFERENCE_SPLIT: (usize, usize) = (22_232, 640);

const MANIFEST_MAGIC: &str = "flownet-dataset v1";
pub const MANIFEST_FILE: &str = "manifest.txt";
pub const CONFIG_FILE: &str = "generator.cfg";

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetManifest {
    pub seed: u64,
    pub config_hash: String,
    pub width: usize,
    pub height: usize,
    /// Sample ids; files are `<id>-img1.png`, `<id>-img2.png`,
    /// `<id>-flow.flo`, `<id>-occ.png` and `<id>-spec.txt`.
    pub entries: Vec<String>,
}

impl DatasetManifest {
    pub fn to_text(&self) -> String {
        let mut s = format!(
            "{MANIFEST_MAGIC}\nseed={}\ncount={}\nconfig_hash={}\nreference_count={REFERENCE_COUNT}\nreference_split={}/{}\nwidth={}\nheight={}\n",
            self.seed,
            self.entries.len(),
            self.config_hash,
            REFERENCE_SPLIT.0,
            REFERENCE_SPLIT.1,
            self.width,
            self.height
        );
        for e in &self.entries {
            let _ = writeln!(s, "entry={e}");
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next() != Some(MANIFEST_MAGIC) {
            return Err(CoreError::Format("not a dataset manifest".into()));
        }
        let mut m = Self {
            seed: 0,
            config_hash: String::new(),
            width: 0,
            height: 0,
            entries: Vec::new(),
        };
        let mut count = None;
        for line in lines.filter(|l| !l.trim().is_empty()) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CoreError::Format(format!("manifest line {line:?}")))?;
            match k {
                "seed" => m.seed = crate::kvconfig::parse_value(k, v)?,
                "count" => count = Some(crate::kvconfig::parse_value::<usize>(k, v)?),
                "config_hash" => m.config_hash = v.to_string(),
                "width" => m.width = crate::kvconfig::parse_value(k, v)?,
                "height" => m.height = crate::kvconfig::parse_value(k, v)?,
                "entry" => m.entries.push(v.to_string()),
                _ => {}
            }
        }
        if count != Some(m.entries.len()) {
            return Err(CoreError::Format(format!(
                "manifest count {count:?} but {} entries",
                m.entries.len()
            )));
        }
        Ok(m)
    }
}

fn sample_id(i: usize) -> String {
    format!("{i:07}")
}

fn write_sample(dir: &Path, id: &str, s: &Sample, spec_text: &str) -> Result<()> {
    s.img1.save_png(dir.join(format!("{id}-img1.png")))?;
    s.img2.save_png(dir.join(format!("{id}-img2.png")))?;
    write_flo_file(dir.join(format!("{id}-flow.flo")), &s.flow)?;
    save_mask_png(dir.join(format!("{id}-occ.png")), s.width(), s.height(), &s.occlusion)?;
    std::fs::write(dir.join(format!("{id}-spec.txt")), spec_text)?;
    Ok(())
}

/// Scene `scene` of a dataset and its samples (quadrants, if quartering).
fn scene_samples(config: &GeneratorConfig, assets: &Assets, seed: u64, scene: usize) -> Result<(SceneSpec, Vec<Sample>)> {
    let tags = [scene as u64];
    let spec = sample_scene(config, derive_seed(seed, &tags), &mut substream(seed, &tags))?;
    let full = render_sample(&spec, assets)?;
    let parts = if config.quarter {
        quarter(&full, config.strict_quadrant_occlusion)?.into()
    } else {
        vec![full]
    };
    Ok((spec, parts))
}

/// The samples [`generate_dataset`] would write, kept in memory at full
/// float precision.
pub fn generate_samples(config: &GeneratorConfig, assets: &Assets, seed: u64, count: usize) -> Result<Vec<Sample>> {
    config.validate()?;
    let per = config.samples_per_scene();
    let mut out = Vec::with_capacity(count);
    for scene in 0..count.div_ceil(per) {
        let (_, parts) = scene_samples(config, assets, seed, scene)?;
        out.extend(parts.into_iter().take(count - scene * per));
    }
    Ok(out)
}

/// Renders `count` samples into `out`. Scene `j` draws from the substream
/// `(seed, j)`; with quartering, samples `4j..4j+4` are its quadrants.
pub fn generate_dataset(
    config: &GeneratorConfig,
    assets: &Assets,
    seed: u64,
    count: usize,
    out: impl AsRef<Path>,
) -> Result<DatasetManifest> {
    config.validate()?;
    let out = out.as_ref();
    std::fs::create_dir_all(out)?;
    let per = config.samples_per_scene();
    let mut entries = Vec::with_capacity(count);
    for scene in 0..count.div_ceil(per) {
        let (spec, parts) = scene_samples(config, assets, seed, scene)?;
        for (q, s) in parts.iter().enumerate() {
            let i = scene * per + q;
            if i >= count {
                break;
            }
            let id = sample_id(i);
            let mut text = spec.to_text();
            if config.quarter {
                let _ = writeln!(text, "quadrant={q}");
            }
            write_sample(out, &id, s, &text)?;
            entries.push(id);
        }
    }
    let kv = config.to_kv();
    let manifest = DatasetManifest {
        seed,
        config_hash: kv.hash(),
        width: config.width,
        height: config.height,
        entries,
    };
    std::fs::write(out.join(CONFIG_FILE), kv.to_text())?;
    std::fs::write(out.join(MANIFEST_FILE), manifest.to_text())?;
    Ok(manifest)
}

/// A directory of samples, listed by its manifest or, lacking one, by the
/// `*-img1.png` files it contains.
#[derive(Clone, Debug)]
pub struct Dataset {
    dir: PathBuf,
    entries: Vec<String>,
    manifest: Option<DatasetManifest>,
}

impl Dataset {
    pub fn open(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        let mpath = dir.join(MANIFEST_FILE);
        if mpath.is_file() {
            let manifest = DatasetManifest::parse(&std::fs::read_to_string(&mpath)?)?;
            return Ok(Self {
                entries: manifest.entries.clone(),
                manifest: Some(manifest),
                dir,
            });
        }
        let mut entries: Vec<String> = std::fs::read_dir(&dir)?
            .filter_map(|e| e.ok())
            .filter_map(|e| e.file_name().to_str().and_then(|n| n.strip_suffix("-img1.png")).map(String::from))
            .collect();
        entries.sort();
        if entries.is_empty() {
            return Err(CoreError::Empty);
        }
        Ok(Self {
            dir,
            entries,
            manifest: None,
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn manifest(&self) -> Option<&DatasetManifest> {
        self.manifest.as_ref()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.entries
    }

    /// Loads sample `i`. A missing occlusion file means nothing is occluded.
    pub fn load(&self, i: usize) -> Result<Sample> {
        let id = self
            .entries
            .get(i)
            .ok_or_else(|| CoreError::Invalid(format!("sample {i} of {}", self.entries.len())))?;
        let img1 = Image::load(self.dir.join(format!("{id}-img1.png")))?;
        let img2 = Image::load(self.dir.join(format!("{id}-img2.png")))?;
        let flow = read_flo_file(self.dir.join(format!("{id}-flow.flo")))?;
        let occ_path = self.dir.join(format!("{id}-occ.png"));
        let occlusion = if occ_path.is_file() {
            load_mask_png(occ_path)?.2
        } else {
            vec![false; flow.len()]
        };
        let s = Sample {
            img1,
            img2,
            flow,
            occlusion,
        };
        s.check_dimensions()?;
        Ok(s)
    }

    pub fn load_all(&self) -> Result<Vec<Sample>> {
        (0..self.len()).map(|i| self.load(i)).collect()
    }
}
