use std::fs;
use std::path::Path;

use e2efs::data::{
    load_audio_dataset, load_matrix, save_matrix, synth_classification, synth_regression, Dataset, ManifestOptions,
    Split, TargetKind, SYNTH_INPUT,
};
use e2efs::dsp::{AudioBuffer, FeaturePipeline};
use e2efs::losses::Target;
use e2efs::nn::Task;
use e2efs::selection::{FeatureMask, MaskOrigin};
use e2efs::{Error, FeatureMatrix};

fn write_wav(dir: &Path, name: &str, freq: f64, n: usize) {
    let a: AudioBuffer<f64> = AudioBuffer::sine(freq, 0.4, 16_000, n).unwrap();
    a.write_wav(dir.join(name)).unwrap();
}

fn label_opts() -> ManifestOptions {
    ManifestOptions {
        pipeline: FeaturePipeline::default(),
        target_kind: TargetKind::Label,
        expected_target_len: None,
    }
}

#[test]
fn loads_labelled_manifest() {
    let dir = tempfile::tempdir().unwrap();
    for (i, f) in [300.0, 500.0, 700.0, 900.0].iter().enumerate() {
        write_wav(dir.path(), &format!("c{i}.wav"), *f, 8000);
    }
    fs::write(
        dir.path().join("manifest.csv"),
        "id,wav_path,split,label_or_target_path\n\
         a,c0.wav,train,mask\n\
         b,c1.wav,train,clear\n\
         c,c2.wav,devel,clear\n\
         d,c3.wav,test,\n",
    )
    .unwrap();
    let (ds, warnings) = load_audio_dataset::<f64>(dir.path().join("manifest.csv"), &label_opts()).unwrap();
    assert!(warnings.is_empty());
    assert_eq!(ds.task(), Task::Classification { n_classes: 2 });
    assert_eq!(ds.metadata.class_names, vec!["mask", "clear"]);
    assert_eq!(ds.train()[1].target, Some(Target::Class(1)));
    assert_eq!(ds.dev()[0].id, "c");
    assert_eq!(ds.test()[0].target, None);
    // 0.5 s at hop 160
    let m = &ds.train()[0].inputs["spect"];
    assert_eq!((m.n_bands(), m.n_frames()), (128, 1 + (8000 - 512) / 160));
}

#[test]
fn sequence_targets_warn_on_length() {
    let dir = tempfile::tempdir().unwrap();
    write_wav(dir.path(), "x.wav", 200.0, 4000);
    write_wav(dir.path(), "y.wav", 250.0, 4000);
    fs::write(dir.path().join("x.csv"), "0.1\n0.2\n0.3\n").unwrap();
    fs::write(dir.path().join("y.csv"), "1\n2\n\n3\n4\n").unwrap();
    fs::write(
        dir.path().join("m.csv"),
        "id,wav_path,split,label_or_target_path\nx,x.wav,train,x.csv\ny,y.wav,train,y.csv\n",
    )
    .unwrap();
    let opts = ManifestOptions {
        target_kind: TargetKind::Sequence,
        expected_target_len: Some(4),
        ..label_opts()
    };
    let (ds, warnings) = load_audio_dataset::<f64>(dir.path().join("m.csv"), &opts).unwrap();
    assert_eq!(ds.task(), Task::SequenceRegression);
    assert_eq!(warnings.len(), 1);
    assert_eq!((warnings[0].id.as_str(), warnings[0].expected, warnings[0].found), ("x", 4, 3));
    assert_eq!(ds.train()[1].target, Some(Target::Sequence(vec![1.0, 2.0, 3.0, 4.0])));
}

fn manifest_error(body: &str) -> String {
    let dir = tempfile::tempdir().unwrap();
    write_wav(dir.path(), "a.wav", 300.0, 4000);
    fs::write(dir.path().join("m.csv"), body).unwrap();
    let err = load_audio_dataset::<f64>(dir.path().join("m.csv"), &label_opts()).unwrap_err();
    assert!(matches!(err, Error::Data(_) | Error::Csv(_)), "{err:?}");
    err.to_string()
}

#[test]
fn manifest_errors_name_the_row() {
    let e = manifest_error("id,wav,split,label\na,a.wav,train,x\n");
    assert!(e.contains("header"), "{e}");
    let e = manifest_error("id,wav_path,split,label_or_target_path\na,a.wav,train,x\na,a.wav,dev,y\n");
    assert!(e.contains("row 3") && e.contains("duplicate") && e.contains("row 2"), "{e}");
    let e = manifest_error("id,wav_path,split,label_or_target_path\na,a.wav,train,x\nb,nope.wav,dev,y\n");
    assert!(e.contains("row 3") && e.contains("nope.wav"), "{e}");
    let e = manifest_error("id,wav_path,split,label_or_target_path\na,a.wav,holdout,x\n");
    assert!(e.contains("row 2"), "{e}");
}

#[test]
fn wrong_sample_rate_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let a: AudioBuffer<f64> = AudioBuffer::sine(300.0, 0.4, 8_000, 4000).unwrap();
    a.write_wav(dir.path().join("a.wav")).unwrap();
    fs::write(
        dir.path().join("m.csv"),
        "id,wav_path,split,label_or_target_path\na,a.wav,train,x\n",
    )
    .unwrap();
    let err = load_audio_dataset::<f64>(dir.path().join("m.csv"), &label_opts()).unwrap_err();
    assert!(err.to_string().contains("8000"), "{err}");
}

#[test]
fn dataset_directory_round_trip() {
    let ds: Dataset<f64> = synth_classification(5, 30, 4, 6, &[2], 1.0).unwrap();
    let masked = ds
        .derive_input(SYNTH_INPUT, "sel", &FeatureMask::new(vec![1, 2], 6, MaskOrigin::Manual).unwrap())
        .unwrap();
    let reg: Dataset<f64> = synth_regression(6, 10, 5, 3, &[0]).unwrap();
    let dir = tempfile::tempdir().unwrap();
    for (i, d) in [masked, reg].into_iter().enumerate() {
        let path = dir.path().join(format!("d{i}"));
        d.save_dir(&path).unwrap();
        let back = Dataset::<f64>::load_dir(&path).unwrap();
        assert_eq!(back, d);
        for s in Split::ALL {
            for (a, b) in back.split(s).iter().zip(d.split(s)) {
                for (name, m) in &a.inputs {
                    let bits = |m: &FeatureMatrix<f64>| m.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
                    assert_eq!(bits(m), bits(&b.inputs[name]));
                }
            }
        }
    }
}

#[test]
fn fmat_file_round_trip_and_corruption() {
    let m = FeatureMatrix::from_rows(&[vec![1.5f64, -0.0, 1e-300], vec![f64::MAX, 3.0, -7.25]], 25.0).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.fmat");
    save_matrix(&path, &m).unwrap();
    let back: FeatureMatrix<f64> = load_matrix(&path).unwrap();
    assert_eq!(back, m);
    assert_eq!(back.values()[1].to_bits(), (-0.0f64).to_bits());

    let bytes = fs::read(&path).unwrap();
    fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
    assert!(matches!(load_matrix::<f64>(&path), Err(Error::Corrupt(_))));
    let mut bad = bytes.clone();
    bad[0] = b'X';
    fs::write(&path, bad).unwrap();
    assert!(matches!(load_matrix::<f64>(&path), Err(Error::Corrupt(_))));
}

#[test]
fn mask_file_round_trip() {
    let m = FeatureMask::new(vec![40, 3, 17], 128, MaskOrigin::Random(9)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("mask.txt");
    m.save(&path).unwrap();
    let text = fs::read_to_string(&path).unwrap();
    assert!(text.starts_with("# origin="), "{text}");
    assert!(text.lines().skip(1).eq(["3", "17", "40"]));
    assert_eq!(FeatureMask::load(&path).unwrap(), m);
}
