#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use eegart_cli::commands::{self, TrainArgs};
use eegart_core::dataset::corpus::{list_subjects, recording_path};
use eegart_core::models::{ModelKind, Profile};

pub struct Fixture {
    _dir: tempfile::TempDir,
    /// Synthetic corpus plus one report and attention file per recording.
    pub data: PathBuf,
    pub weights: PathBuf,
    pub ids: Vec<String>,
}

pub const SPEC: &str = r#"{"subjects": 6, "duration_s": 420.0, "artifact_rate": 0.25}"#;

pub fn quick_train(data: &Path, out: &Path, arch: ModelKind) -> TrainArgs {
    TrainArgs {
        arch,
        data: data.to_path_buf(),
        profile: Profile::Toy,
        seed: 5,
        out: out.to_path_buf(),
        max_epochs: Some(2),
        patience: Some(1),
        batch_size: Some(32),
        lr: None,
    }
}

pub fn write_spec(dir: &Path) -> PathBuf {
    let p = dir.join("spec.json");
    std::fs::write(&p, SPEC).unwrap();
    p
}

pub fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let data = dir.path().join("data");
        let spec = write_spec(dir.path());
        commands::synth(Some(&spec), 3, &data).unwrap();
        let weights = dir.path().join("cnn_cbam.bin");
        commands::train(&quick_train(&data, &weights, ModelKind::CnnCbam)).unwrap();
        let ids = list_subjects(&data).unwrap();
        for id in &ids {
            let out = eegart_cli::files::report_path(&data, id);
            commands::detect(&weights, &recording_path(&data, id), &out, None).unwrap();
        }
        Fixture { _dir: dir, data, weights, ids }
    })
}

/// Private copy of the fixture data so tests can write annotations.
pub fn data_copy() -> tempfile::TempDir {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    for e in std::fs::read_dir(&f.data).unwrap() {
        let p = e.unwrap().path();
        std::fs::copy(&p, dir.path().join(p.file_name().unwrap())).unwrap();
    }
    dir
}
