//! On-disk dataset format.
//!
//! A dataset directory holds `manifest.json` plus one `sceneNNNN.cpx` per
//! scene. The `.cpx` layout is normative: a 16-byte header (magic `CPXS`,
//! u32 LE sample count, u32 LE bit pattern of the f32 sample rate, 4
//! reserved zero bytes) followed by interleaved little-endian f32 I/Q.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use jamlab_core::recognizer::{scene_features, FeatureParams, RecognizerDataset, SceneFeatures};
use jamlab_core::signal::{
    plan_dataset, synth_record, ComplexSeries, DatasetConfig, EchoScene, FalseTarget,
    JammingKind, JammingSpec, SceneRecord, Split,
};

use crate::pgm;
use crate::{CmdError, CmdResult};

pub const CPX_MAGIC: &[u8; 4] = b"CPXS";
pub const CPX_HEADER_LEN: usize = 16;

/// Serialize a complex series into the normative byte layout.
pub fn cpx_bytes(x: &ComplexSeries) -> Vec<u8> {
    let mut out = Vec::with_capacity(CPX_HEADER_LEN + 8 * x.len());
    out.extend_from_slice(CPX_MAGIC);
    out.extend_from_slice(&(x.len() as u32).to_le_bytes());
    out.extend_from_slice(&(x.sample_rate_hz as f32).to_bits().to_le_bytes());
    out.extend_from_slice(&[0u8; 4]);
    for s in &x.samples {
        out.extend_from_slice(&(s.re as f32).to_le_bytes());
        out.extend_from_slice(&(s.im as f32).to_le_bytes());
    }
    out
}

/// Parse the normative byte layout back into a complex series.
pub fn cpx_from_bytes(bytes: &[u8]) -> CmdResult<ComplexSeries> {
    if bytes.len() < CPX_HEADER_LEN || &bytes[0..4] != CPX_MAGIC {
        return Err(CmdError::Io("not a CPXS file".into()));
    }
    let n = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let fs = f32::from_bits(u32::from_le_bytes(bytes[8..12].try_into().unwrap())) as f64;
    let expected = CPX_HEADER_LEN + 8 * n;
    if bytes.len() != expected {
        return Err(CmdError::Io(format!(
            "CPXS length {} does not match header count {n}",
            bytes.len()
        )));
    }
    let mut samples = Vec::with_capacity(n);
    for i in 0..n {
        let off = CPX_HEADER_LEN + 8 * i;
        let re = f32::from_le_bytes(bytes[off..off + 4].try_into().unwrap()) as f64;
        let im = f32::from_le_bytes(bytes[off + 4..off + 8].try_into().unwrap()) as f64;
        samples.push(num_complex::Complex64::new(re, im));
    }
    Ok(ComplexSeries {
        samples,
        sample_rate_hz: fs,
        t0_s: 0.0,
        carrier_hz: 0.0,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestFalseTarget {
    pub delay_s: f64,
    pub doppler_hz: f64,
    pub amplitude: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestScene {
    pub id: usize,
    pub label: String,
    pub split: String,
    pub seed: u64,
    pub jnr_db: f64,
    pub jam_center_hz: f64,
    pub jam_bandwidth_hz: f64,
    pub delay_s: f64,
    pub doppler_hz: f64,
    pub false_targets: Vec<ManifestFalseTarget>,
    pub angle_deg: f64,
    pub target_delay_s: f64,
    pub file: String,
    /// Byte offset of the first sample inside the file.
    pub data_offset: usize,
    pub samples: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub master_seed: u64,
    pub sample_rate_hz: f64,
    pub carrier_hz: f64,
    pub bandwidth_hz: f64,
    pub pulse_width_s: f64,
    pub pri_s: f64,
    pub snr_db: f64,
    pub scenes: Vec<ManifestScene>,
}

impl Manifest {
    pub fn class_histogram(&self) -> [usize; 3] {
        let mut h = [0usize; 3];
        for s in &self.scenes {
            match s.label.as_str() {
                "AJ" => h[0] += 1,
                "RFTJ" => h[1] += 1,
                "RDFTJ" => h[2] += 1,
                _ => {}
            }
        }
        h
    }
}

fn scene_file_name(id: usize) -> String {
    format!("scene{id:04}.cpx")
}

fn manifest_scene(rec: &SceneRecord, samples: usize) -> ManifestScene {
    ManifestScene {
        id: rec.id,
        label: rec.kind.name().to_string(),
        split: rec.split.tag().to_string(),
        seed: rec.seed,
        jnr_db: rec.spec.jnr_db,
        jam_center_hz: rec.spec.jam_center_hz,
        jam_bandwidth_hz: rec.spec.jam_bandwidth_hz,
        delay_s: rec.spec.delay_s,
        doppler_hz: rec.spec.doppler_hz,
        false_targets: rec
            .spec
            .false_targets
            .iter()
            .map(|t| ManifestFalseTarget {
                delay_s: t.delay_s,
                doppler_hz: t.doppler_hz,
                amplitude: t.amplitude,
            })
            .collect(),
        angle_deg: rec.spec.angle_deg,
        target_delay_s: rec.target_delay_s,
        file: scene_file_name(rec.id),
        data_offset: CPX_HEADER_LEN,
        samples,
    }
}

/// Synthesize every planned scene and write the dataset directory.
/// Scene synthesis fans out across the rayon pool; each scene derives its
/// own seed, so the output is independent of scheduling.
pub fn write_dataset(
    cfg: &DatasetConfig,
    dir: &Path,
    feature_params: Option<&FeatureParams>,
    pgm_preview: usize,
) -> CmdResult<Manifest> {
    let plan = plan_dataset(cfg)?;
    fs::create_dir_all(dir)?;
    let scenes: Vec<(ManifestScene, Vec<u8>, Option<EchoScene>)> = plan
        .par_iter()
        .map(|rec| {
            let scene = synth_record(&cfg.radar, rec).map_err(CmdError::from)?;
            let bytes = cpx_bytes(&scene.composite);
            let keep = if rec.id < pgm_preview { Some(scene) } else { None };
            Ok((manifest_scene(rec, cfg.radar.window_samples()), bytes, keep))
        })
        .collect::<CmdResult<Vec<_>>>()?;
    for (meta, bytes, scene) in &scenes {
        let mut f = fs::File::create(dir.join(&meta.file))?;
        f.write_all(bytes)?;
        if let (Some(scene), Some(fp)) = (scene, feature_params) {
            let feats = scene_features(&scene.composite, fp).map_err(CmdError::from)?;
            pgm::write_pgm(
                &dir.join(format!("scene{:04}_stft.pgm", meta.id)),
                &feats.stft_img,
            )?;
            pgm::write_pgm(
                &dir.join(format!("scene{:04}_spwvd.pgm", meta.id)),
                &feats.spwvd_img,
            )?;
        }
    }
    let manifest = Manifest {
        master_seed: cfg.master_seed,
        sample_rate_hz: cfg.radar.sample_rate_hz,
        carrier_hz: cfg.radar.carrier_hz,
        bandwidth_hz: cfg.radar.bandwidth_hz,
        pulse_width_s: cfg.radar.pulse_width_s,
        pri_s: cfg.radar.pri_s,
        snr_db: cfg.radar.snr_db,
        scenes: scenes.into_iter().map(|(m, _, _)| m).collect(),
    };
    let mut out = fs::File::create(dir.join("manifest.json"))?;
    serde_json::to_writer_pretty(&mut out, &manifest)
        .map_err(|e| CmdError::Io(e.to_string()))?;
    out.write_all(b"\n")?;
    Ok(manifest)
}

pub fn read_manifest(dir: &Path) -> CmdResult<Manifest> {
    let path = dir.join("manifest.json");
    let mut text = String::new();
    fs::File::open(&path)
        .map_err(|e| CmdError::Io(format!("{}: {e}", path.display())))?
        .read_to_string(&mut text)?;
    serde_json::from_str(&text).map_err(|e| CmdError::Io(format!("{}: {e}", path.display())))
}

pub fn read_scene(dir: &Path, meta: &ManifestScene) -> CmdResult<ComplexSeries> {
    let bytes = fs::read(dir.join(&meta.file))?;
    cpx_from_bytes(&bytes)
}

fn label_index(label: &str) -> CmdResult<usize> {
    match label {
        "AJ" => Ok(0),
        "RFTJ" => Ok(1),
        "RDFTJ" => Ok(2),
        other => Err(CmdError::Io(format!("unknown label '{other}' in manifest"))),
    }
}

/// A dataset with extracted recognizer features, ready to train on.
pub struct LoadedDataset {
    pub manifest: Manifest,
    pub data: RecognizerDataset,
    /// Scene ids of the test split, aligned with `data.test`.
    pub test_ids: Vec<usize>,
}

/// Load a dataset directory and extract recognizer features for every
/// scene, grouped by split. Feature extraction is parallel and ordered.
pub fn load_feature_dataset(dir: &Path, fp: &FeatureParams) -> CmdResult<LoadedDataset> {
    let manifest = read_manifest(dir)?;
    let features: Vec<(usize, String, SceneFeatures, usize)> = manifest
        .scenes
        .par_iter()
        .map(|meta| {
            let series = read_scene(dir, meta)?;
            let f = scene_features(&series, fp).map_err(CmdError::from)?;
            Ok((meta.id, meta.split.clone(), f, label_index(&meta.label)?))
        })
        .collect::<CmdResult<Vec<_>>>()?;
    let mut data = RecognizerDataset {
        train: Vec::new(),
        val: Vec::new(),
        test: Vec::new(),
    };
    let mut test_ids = Vec::new();
    for (id, split, f, label) in features {
        match split.as_str() {
            "train" => data.train.push((f, label)),
            "val" => data.val.push((f, label)),
            "test" => {
                test_ids.push(id);
                data.test.push((f, label));
            }
            other => return Err(CmdError::Io(format!("unknown split tag '{other}'"))),
        }
    }
    Ok(LoadedDataset {
        manifest,
        data,
        test_ids,
    })
}

/// Rebuild the core-side record from a manifest entry (used by tests and
/// the report command to resynthesize scenes).
pub fn record_from_manifest(meta: &ManifestScene) -> CmdResult<SceneRecord> {
    let kind = match label_index(&meta.label)? {
        0 => JammingKind::Aj,
        1 => JammingKind::Rftj,
        _ => JammingKind::Rdftj,
    };
    let spec = JammingSpec {
        kind,
        jnr_db: meta.jnr_db,
        jam_center_hz: meta.jam_center_hz,
        jam_bandwidth_hz: meta.jam_bandwidth_hz,
        delay_s: meta.delay_s,
        doppler_hz: meta.doppler_hz,
        false_targets: meta
            .false_targets
            .iter()
            .map(|t| FalseTarget {
                delay_s: t.delay_s,
                doppler_hz: t.doppler_hz,
                amplitude: t.amplitude,
            })
            .collect(),
        angle_deg: meta.angle_deg,
    };
    let split = match meta.split.as_str() {
        "train" => Split::Train,
        "val" => Split::Val,
        _ => Split::Test,
    };
    Ok(SceneRecord {
        id: meta.id,
        kind,
        spec,
        target_delay_s: meta.target_delay_s,
        split,
        seed: meta.seed,
    })
}
