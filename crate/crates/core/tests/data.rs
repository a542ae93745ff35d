use std::collections::BTreeSet;
use std::path::Path;

use fsad_core::data::{
    corpus_recipes, default_label_map, filter_blurred, generate_synthetic_corpus, image_blur_score,
    load_image_folder, load_image_folder_with, preprocess, read_corpus, render, sample_abnormal_subset,
    split_patientwise, write_corpus, FolderOptions, FrameSet, Image, Label, LabeledFrame, Partition, SplitPlan,
    SynthConfig, TARGET_SIZE,
};
use fsad_core::training::Preset;
use fsad_core::Error;
use image::{Rgb, RgbImage};
use proptest::prelude::*;

fn frame(id: &str, patient_id: u32, label: Label, pixels: Image) -> LabeledFrame {
    LabeledFrame { id: id.to_string(), pixels, patient_id, label }
}

fn gray_image(h: usize, w: usize, f: impl Fn(usize, usize) -> f32) -> Image {
    let plane: Vec<f32> = (0..h * w).map(|i| f(i / w, i % w)).collect();
    Image::new(h, w, [plane.clone(), plane.clone(), plane].concat()).unwrap()
}

#[test]
fn desk_sized_corpus_counts() {
    let cfg = SynthConfig { n_patients: 15, frames_per_patient: 100, ..Default::default() };
    let recipes = corpus_recipes(&cfg).unwrap();
    assert_eq!(recipes.len(), 1500);
    let patients: BTreeSet<u32> = recipes.iter().map(|r| r.patient_id).collect();
    assert_eq!(patients.len(), 15);
    for p in &patients {
        assert_eq!(recipes.iter().filter(|r| r.patient_id == *p).count(), 100);
    }
}

#[test]
fn lesions_change_pixels_inside_their_mask_only_for_abnormal_frames() {
    let cfg = SynthConfig { n_patients: 3, frames_per_patient: 20, abnormal_fraction: 0.5, ..Default::default() };
    for recipe in corpus_recipes(&cfg).unwrap() {
        let img = render(&recipe);
        let mut clean = recipe.clone();
        clean.lesion = None;
        let background = render(&clean);
        match &recipe.lesion {
            None => assert_eq!(img, background),
            Some(l) => {
                let mut differs = false;
                for y in 0..img.height() {
                    for x in 0..img.width() {
                        let changed = (0..3).any(|c| img.get(c, y, x) != background.get(c, y, x));
                        assert!(!changed || l.contains(x, y), "pixel ({x},{y}) changed outside the blob");
                        differs |= changed;
                    }
                }
                assert!(differs, "{} carries an invisible lesion", recipe.id());
            }
        }
    }
}

#[test]
fn synthetic_pixels_are_valid() {
    let cfg = SynthConfig { n_patients: 2, frames_per_patient: 10, ..Default::default() };
    for f in generate_synthetic_corpus(&cfg).unwrap() {
        assert_eq!((f.pixels.height(), f.pixels.width()), (TARGET_SIZE, TARGET_SIZE));
        assert!(f.pixels.data().iter().all(|v| v.is_finite() && (0.0..=1.0).contains(v)));
    }
}

/// Direct 3x3 convolution with replicated borders, then the population
/// variance of the response.
fn laplacian_variance_oracle(gray: &[Vec<f64>]) -> f64 {
    let kernel = [[0.0, 1.0, 0.0], [1.0, -4.0, 1.0], [0.0, 1.0, 0.0]];
    let (h, w) = (gray.len() as isize, gray[0].len() as isize);
    let mut resp = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (dy, row) in kernel.iter().enumerate() {
                for (dx, k) in row.iter().enumerate() {
                    let yy = (y + dy as isize - 1).clamp(0, h - 1) as usize;
                    let xx = (x + dx as isize - 1).clamp(0, w - 1) as usize;
                    acc += k * gray[yy][xx];
                }
            }
            resp.push(acc);
        }
    }
    let n = resp.len() as f64;
    let mean = resp.iter().sum::<f64>() / n;
    resp.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n
}

#[test]
fn checkerboard_blur_score_matches_direct_convolution() {
    for side in [8, 9, 16] {
        let img = gray_image(side, side, |y, x| ((x + y) % 2) as f32);
        let gray: Vec<Vec<f64>> =
            (0..side).map(|y| (0..side).map(|x| if (x + y) % 2 == 1 { 1.0 } else { 0.0 }).collect()).collect();
        let got = image_blur_score(&img);
        let want = laplacian_variance_oracle(&gray);
        assert!((got - want).abs() < 1e-9, "{side}: {got} vs {want}");
    }
    assert_eq!(image_blur_score(&Image::filled(12, 12, 0.4)), 0.0);
}

fn box_blur(img: &Image) -> Image {
    let (h, w) = (img.height(), img.width());
    let mut data = Vec::with_capacity(img.data().len());
    for c in 0..3 {
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0;
                for dy in -1..=1isize {
                    for dx in -1..=1isize {
                        let yy = (y as isize + dy).clamp(0, h as isize - 1) as usize;
                        let xx = (x as isize + dx).clamp(0, w as isize - 1) as usize;
                        acc += img.get(c, yy, xx);
                    }
                }
                data.push(acc / 9.0);
            }
        }
    }
    Image::new(h, w, data).unwrap()
}

#[test]
fn blurring_lowers_the_score() {
    let cfg = SynthConfig { n_patients: 1, frames_per_patient: 5, ..Default::default() };
    for f in generate_synthetic_corpus(&cfg).unwrap() {
        assert!(image_blur_score(&box_blur(&f.pixels)) < image_blur_score(&f.pixels));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn box_blur_never_raises_the_score(values in prop::collection::vec(0.0f32..=1.0, 3 * 10 * 10)) {
        let img = Image::new(10, 10, values).unwrap();
        prop_assert!(image_blur_score(&box_blur(&img)) <= image_blur_score(&img) + 1e-12);
    }

    #[test]
    fn preprocessing_is_idempotent(h in 8usize..40, w in 8usize..40, seed in any::<u32>()) {
        let img = gray_image(h, w, |y, x| (((y * 31 + x * 17) as u32 ^ seed) % 256) as f32 / 255.0);
        let f = frame("p", 1, Label::Normal, img);
        let once = preprocess(&f, TARGET_SIZE).unwrap();
        prop_assert_eq!(preprocess(&once, TARGET_SIZE).unwrap(), once);
    }
}

#[test]
fn resizing_cases() {
    let big = frame("big", 1, Label::Normal, Image::filled(1072, 1072, 0.3));
    let out = preprocess(&big, TARGET_SIZE).unwrap();
    assert_eq!((out.pixels.height(), out.pixels.width()), (64, 64));
    assert!(out.pixels.data().iter().all(|&v| v == 0.3));
    let cfg = SynthConfig { n_patients: 1, frames_per_patient: 1, ..Default::default() };
    let f = generate_synthetic_corpus(&cfg).unwrap().remove(0);
    assert_eq!(preprocess(&f, TARGET_SIZE).unwrap(), f);
}

#[test]
fn blur_filter_keeps_exactly_the_sharp_frames() {
    let cfg = SynthConfig { n_patients: 1, frames_per_patient: 6, ..Default::default() };
    let mut frames = generate_synthetic_corpus(&cfg).unwrap();
    for f in frames.iter_mut().step_by(2) {
        f.pixels = box_blur(&box_blur(&f.pixels));
    }
    let scores: Vec<f64> = frames.iter().map(|f| image_blur_score(&f.pixels)).collect();
    let mut sorted = scores.clone();
    sorted.sort_by(f64::total_cmp);
    let threshold = (sorted[2] + sorted[3]) / 2.0;
    let kept = filter_blurred(frames.clone(), threshold).unwrap();
    let want: Vec<&str> = frames.iter().zip(&scores).filter(|(_, &s)| s >= threshold).map(|(f, _)| f.id.as_str()).collect();
    assert_eq!(kept.iter().map(|f| f.id.as_str()).collect::<Vec<_>>(), want);
    assert_eq!(filter_blurred(frames.clone(), 0.0).unwrap().len(), frames.len());
    assert!(filter_blurred(frames, sorted[5] + 1.0).unwrap().is_empty());
}

#[test]
fn desk_corpus_loses_under_one_percent_to_blur() {
    let preset = Preset::builtin("desk").unwrap();
    let frames = generate_synthetic_corpus(&preset.data.synth).unwrap();
    let n = frames.len();
    let kept = filter_blurred(frames, preset.data.blur_threshold).unwrap().len();
    assert!((n - kept) * 100 < n, "{} of {n} dropped", n - kept);
}

fn write_png(path: &Path, value: u8) {
    RgbImage::from_pixel(16, 16, Rgb([value, value / 2, value / 3])).save(path).unwrap();
}

#[test]
fn folder_fixture_loads_with_labels() {
    let dir = tempfile::tempdir().unwrap();
    assert!(load_image_folder(dir.path(), &default_label_map()).unwrap().frames.is_empty());
    std::fs::create_dir_all(dir.path().join("normal")).unwrap();
    std::fs::create_dir_all(dir.path().join("abnormal")).unwrap();
    for (i, name) in ["1_a.png", "1_b.png", "2_a.png"].iter().enumerate() {
        write_png(&dir.path().join("normal").join(name), 40 * i as u8 + 10);
    }
    write_png(&dir.path().join("abnormal").join("3_a.png"), 200);
    let load = load_image_folder(dir.path(), &default_label_map()).unwrap();
    assert_eq!(load.frames.len(), 4);
    assert!(load.rejected.is_empty());
    assert_eq!(load.frames.iter().filter(|f| f.label == Label::Normal).count(), 3);
    let abnormal: Vec<_> = load.frames.iter().filter(|f| f.label == Label::Abnormal).collect();
    assert_eq!((abnormal.len(), abnormal[0].patient_id), (1, 3));

    // stride applies per patient: patient 1 keeps its first frame only
    let opts = FolderOptions { stride: 2, ..Default::default() };
    let strided = load_image_folder_with(dir.path(), &opts).unwrap();
    assert_eq!(strided.frames.len(), 3);

    std::fs::write(dir.path().join("normal").join("4_broken.png"), b"not a png").unwrap();
    assert_eq!(load_image_folder(dir.path(), &default_label_map()).unwrap().rejected.len(), 1);

    write_png(&dir.path().join("normal").join("frame.png"), 5);
    match load_image_folder(dir.path(), &default_label_map()) {
        Err(Error::PatientId(p)) => assert!(p.ends_with("frame.png")),
        other => panic!("expected a patient-id error, got {other:?}"),
    }
}

#[test]
fn corpus_round_trip_preserves_fingerprint() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = SynthConfig { n_patients: 2, frames_per_patient: 4, ..Default::default() };
    let frames = generate_synthetic_corpus(&cfg).unwrap();
    let manifest = write_corpus(&frames, dir.path(), Some(cfg), 1e-4, 0).unwrap();
    let (read, back) = read_corpus(dir.path()).unwrap();
    assert_eq!(read, manifest);
    assert_eq!(back.len(), frames.len());
}

/// Corpus shaped like the full-scale data, with tiny constant frames.
fn full_scale_frames() -> Vec<LabeledFrame> {
    let img = Image::filled(8, 8, 0.5);
    let mut frames = Vec::new();
    for p in 0..60u32 {
        for i in 0..420 {
            let label = if i % 10 == 0 { Label::Abnormal } else { Label::Normal };
            frames.push(frame(&format!("{p}_{i}"), p, label, img.clone()));
        }
    }
    frames
}

#[test]
fn full_scale_split_shape() {
    let preset = Preset::builtin("paper").unwrap();
    let split = split_patientwise(&full_scale_frames(), &preset.data.split, 0).unwrap();
    assert_eq!(split.train_normal.len(), 13250);
    assert_eq!(split.test.len(), 967);
    assert_eq!(split.test.count(Label::Abnormal), 217);
    assert!(split.development_patients().is_disjoint(&split.test.patients()));
}

fn check_split_invariants(frames: &[LabeledFrame], plan: &SplitPlan, seed: u64) {
    let s = split_patientwise(frames, plan, seed).unwrap();
    assert!(s.train_normal.frames.iter().all(|f| f.label == Label::Normal));
    assert!(s.train_abnormal.frames.iter().all(|f| f.label == Label::Abnormal));
    let parts = [&s.train_normal.patients(), &s.validation.patients(), &s.test.patients()];
    for i in 0..3 {
        for j in i + 1..3 {
            assert!(parts[i].is_disjoint(parts[j]), "partitions {i} and {j} share patients");
        }
    }
    assert!(s.train_abnormal.patients().is_subset(&s.train_normal.patients()));
    let want = plan.test_abnormal_fraction * s.test.len() as f64;
    assert!((s.test.count(Label::Abnormal) as f64 - want).abs() <= 1.0);
    assert_eq!(s.validation.count(Label::Normal), s.validation.count(Label::Abnormal));
}

#[test]
fn fifteen_patient_split_is_patient_disjoint() {
    let cfg = SynthConfig { n_patients: 15, frames_per_patient: 12, abnormal_fraction: 0.3, ..Default::default() };
    let frames: Vec<LabeledFrame> = corpus_recipes(&cfg)
        .unwrap()
        .iter()
        .map(|r| frame(&r.id(), r.patient_id, r.label(), Image::filled(8, 8, 0.5)))
        .collect();
    for seed in 0..10 {
        check_split_invariants(&frames, &SplitPlan::default(), seed);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(30))]

    #[test]
    fn random_corpora_split_disjointly(
        patients in 3u32..20,
        per in 4usize..30,
        seed in any::<u64>(),
    ) {
        let img = Image::filled(8, 8, 0.5);
        let frames: Vec<LabeledFrame> = (0..patients)
            .flat_map(|p| (0..per).map(move |i| (p, i)))
            .map(|(p, i)| frame(&format!("{p}_{i}"), p, if i % 3 == 0 { Label::Abnormal } else { Label::Normal }, img.clone()))
            .collect();
        let plan = SplitPlan { proportions: [0.5, 0.2, 0.3], ..SplitPlan::default() };
        match split_patientwise(&frames, &plan, seed) {
            Ok(_) => check_split_invariants(&frames, &plan, seed),
            Err(e) => prop_assert!(matches!(e, Error::Contract(_) | Error::Config(_)), "{e}"),
        }
    }
}

#[test]
fn single_patient_cannot_be_split() {
    let frames: Vec<LabeledFrame> =
        (0..10).map(|i| frame(&i.to_string(), 1, Label::Normal, Image::filled(8, 8, 0.1))).collect();
    assert!(matches!(split_patientwise(&frames, &SplitPlan::default(), 0), Err(Error::Contract(_))));
}

#[test]
fn abnormal_subsets() {
    let img = Image::filled(8, 8, 0.5);
    let pool = FrameSet::new(
        Partition::TrainAbnormal,
        (0..60).map(|i| frame(&format!("a{i}"), i % 7, Label::Abnormal, img.clone())).collect(),
    );
    assert_eq!(sample_abnormal_subset(&pool, 40, 3).unwrap().len(), 40);
    assert!(sample_abnormal_subset(&pool, 0, 3).unwrap().is_empty());
    assert_eq!(sample_abnormal_subset(&pool, 12, 9).unwrap(), sample_abnormal_subset(&pool, 12, 9).unwrap());
    assert!(matches!(sample_abnormal_subset(&pool, 61, 0), Err(Error::Config(_))));
    let wrong = FrameSet::new(Partition::Validation, pool.frames.clone());
    assert!(matches!(sample_abnormal_subset(&wrong, 1, 0), Err(Error::Contract(_))));
}
