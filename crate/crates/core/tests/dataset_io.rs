mod common;

use std::fs;
use std::path::Path;

use domaug::dataset::{format_label_line, parse_label_line};
use domaug::{load_dataset, resize_letterbox, save_dataset, BoxLabel, DomainTag, Error, LabeledImage, RgbImage, SplitRole};
use image::Rgb;
use proptest::prelude::*;

use common::*;

fn write_raw(root: &Path, stem: &str, w: u32, h: u32, label: &str) {
    fs::create_dir_all(root.join("images")).unwrap();
    fs::create_dir_all(root.join("labels")).unwrap();
    RgbImage::from_pixel(w, h, Rgb([1, 2, 3]))
        .save(root.join("images").join(format!("{stem}.png")))
        .unwrap();
    fs::write(root.join("labels").join(format!("{stem}.txt")), label).unwrap();
}

fn snapshot(root: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    for sub in ["images", "labels"] {
        let mut entries: Vec<_> = fs::read_dir(root.join(sub)).unwrap().map(|e| e.unwrap().path()).collect();
        entries.sort();
        for p in entries {
            out.push((p.display().to_string(), fs::read(&p).unwrap()));
        }
    }
    out
}

#[test]
fn save_then_load_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let mut split = source_split(5, 1);
    split.images[0].labels[0] = BoxLabel::with_confidence(1, 0.375, CLASSES, 0.5, 0.5, 0.25, 0.5);
    save_dataset(&split, dir.path()).unwrap();
    let back = load_dataset(dir.path(), SplitRole::Source).unwrap();
    assert_eq!(back.category_names, split.category_names);
    assert_eq!(back.len(), split.len());
    for (a, b) in split.images.iter().zip(&back.images) {
        assert_eq!(a.id, b.id);
        assert_eq!(a.pixels, b.pixels);
        assert_eq!(b.domain, DomainTag::Source);
        assert_eq!(a.labels.len(), b.labels.len());
        for (la, lb) in a.labels.iter().zip(&b.labels) {
            assert_eq!(la.class_id, lb.class_id);
            assert!((la.confidence() - lb.confidence()).abs() < 1e-6);
            for (x, y) in [(la.cx, lb.cx), (la.cy, lb.cy), (la.w, lb.w), (la.h, lb.h)] {
                assert!((x - y).abs() <= 5e-7, "{x} vs {y}");
            }
        }
    }
}

#[test]
fn missing_label_file_names_the_stem() {
    let dir = tempfile::tempdir().unwrap();
    write_raw(dir.path(), "a", 8, 8, "0 0.5 0.5 0.5 0.5\n");
    RgbImage::new(4, 4).save(dir.path().join("images/b.png")).unwrap();
    match load_dataset(dir.path(), SplitRole::Source) {
        Err(Error::MissingLabel { stem, .. }) => assert_eq!(stem, "b"),
        other => panic!("expected missing label error, got {other:?}"),
    }
}

#[test]
fn malformed_line_reports_file_and_line() {
    let dir = tempfile::tempdir().unwrap();
    write_raw(dir.path(), "a", 8, 8, "0 0.5 0.5 0.5 0.5\n\n0 0.5 0.5\n");
    let before = snapshot(dir.path());
    let err = load_dataset(dir.path(), SplitRole::Target).unwrap_err();
    match &err {
        Error::LabelParse { path, line, .. } => {
            assert!(path.ends_with("labels/a.txt"));
            assert_eq!(*line, 3);
        }
        other => panic!("unexpected {other:?}"),
    }
    assert!(err.to_string().contains("a.txt:3"));
    assert_eq!(snapshot(dir.path()), before);
}

#[test]
fn out_of_range_coordinate_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    write_raw(dir.path(), "a", 8, 8, "0 1.5 0.5 0.2 0.1\n");
    let err = load_dataset(dir.path(), SplitRole::Source).unwrap_err();
    assert!(err.to_string().contains("cx out of range"), "{err}");
    assert_eq!(err.kind().exit_code(), 3);
}

#[test]
fn class_index_beyond_classes_file_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    write_raw(dir.path(), "a", 8, 8, "4 0.5 0.5 0.2 0.1\n");
    fs::write(dir.path().join("classes.txt"), "car\nperson\n").unwrap();
    assert!(load_dataset(dir.path(), SplitRole::Source).is_err());
    fs::remove_file(dir.path().join("classes.txt")).unwrap();
    let split = load_dataset(dir.path(), SplitRole::Source).unwrap();
    assert_eq!(split.num_classes(), 5);
}

#[test]
fn missing_directories_are_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert!(load_dataset(dir.path(), SplitRole::Source).is_err());
}

#[test]
fn letterbox_of_portrait_image() {
    let img = LabeledImage::new(
        "p",
        RgbImage::from_pixel(320, 640, Rgb([9, 9, 9])),
        vec![BoxLabel::one_hot(0, 1, 0.5, 0.5, 0.5, 0.25)],
        DomainTag::Source,
    );
    let out = resize_letterbox(&img, 640).unwrap();
    let l = &out.image.labels[0];
    assert!((l.w - 0.25).abs() < 1e-12 && (l.h - 0.25).abs() < 1e-12);
    assert!((l.cx - 0.5).abs() < 1e-12);
    assert_eq!(out.image.pixels.get_pixel(10, 320).0, [114; 3]);
    assert_eq!(out.image.pixels.get_pixel(320, 320).0, [9; 3]);
}

#[test]
fn letterbox_labels_match_painted_pixels() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
    for _ in 0..40 {
        let (w, h) = (rng.random_range(20..300), rng.random_range(20..300));
        let bw = rng.random_range(4..=w / 2);
        let bh = rng.random_range(4..=h / 2);
        let (x0, y0) = (rng.random_range(0..=w - bw), rng.random_range(0..=h - bh));
        let label = pixel_box(0, x0, y0, x0 + bw, y0 + bh, w, h);
        let blank = LabeledImage::new("b", RgbImage::new(w, h), vec![label.clone()], DomainTag::Source);
        let mut marked = blank.clone();
        for y in y0..y0 + bh {
            for x in x0..x0 + bw {
                marked.pixels.put_pixel(x, y, Rgb([255; 3]));
            }
        }
        let side = 160;
        let a = resize_letterbox(&marked, side).unwrap();
        let b = resize_letterbox(&blank, side).unwrap();
        let diff = channel_diff(&a.image.pixels, &b.image.pixels);
        let (rx0, ry0, rx1, ry1, _) = marker_rect(&diff, side, side).unwrap();
        let r = a.image.labels[0].to_pixel_rect(side, side);
        let score = iou((r.x0, r.y0, r.x1, r.y1), (rx0, ry0, rx1, ry1));
        assert!(score >= 0.99, "iou {score} for {w}x{h} box {x0},{y0} {bw}x{bh}");
    }
}

fn arb_label() -> impl Strategy<Value = BoxLabel> {
    (0usize..4, 0.05f64..0.95, 0.05f64..0.95, 0.01f64..0.1, 0.01f64..0.1, prop::option::of(0.0f64..=1.0)).prop_map(
        |(c, cx, cy, w, h, conf)| match conf {
            Some(p) => BoxLabel::with_confidence(c, p, 4, cx, cy, w, h),
            None => BoxLabel::one_hot(c, 4, cx, cy, w, h),
        },
    )
}

proptest! {
    #[test]
    fn label_lines_round_trip(label in arb_label()) {
        let line = format_label_line(&label).unwrap();
        let back = parse_label_line(&line).unwrap().unwrap().into_box(4);
        prop_assert_eq!(back.class_id, label.class_id);
        prop_assert!((back.confidence() - label.confidence()).abs() <= 5e-7);
        prop_assert!((back.cx - label.cx).abs() <= 5e-7);
        prop_assert!((back.h - label.h).abs() <= 5e-7);
    }

    #[test]
    fn pixel_rect_round_trip(label in arb_label(), w in 16u32..2000, h in 16u32..2000) {
        let r = label.to_pixel_rect(w, h);
        let mut back = label.clone();
        back.set_pixel_rect(&r, w, h);
        prop_assert!((back.cx - label.cx).abs() < 1e-12);
        prop_assert!((back.w - label.w).abs() < 1e-12);
    }
}
