use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use domaug::{save_dataset, BoxLabel, DatasetSplit, DomainTag, LabeledImage, RgbImage, SplitRole};
use domaug_ffi::*;
use image::Rgb;

fn last_error() -> String {
    let p = domaug_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn write_split(root: &Path, n: usize, shade: u8, domain: DomainTag, role: SplitRole) {
    let images = (0..n)
        .map(|i| {
            let px = RgbImage::from_fn(48, 40, |x, y| Rgb([shade.wrapping_add(i as u8), (x * 5) as u8, (y * 5) as u8]));
            let labels = vec![BoxLabel::one_hot(i % 2, 2, 0.5, 0.5, 0.4, 0.5)];
            LabeledImage::new(format!("img{i:02}"), px, labels, domain)
        })
        .collect();
    let split = DatasetSplit {
        images,
        role,
        category_names: vec!["a".into(), "b".into()],
    };
    save_dataset(&split, root).unwrap();
}

fn cstr(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn load(path: &Path, role: DomaugRole) -> *mut DomaugDataset {
    let mut ds = ptr::null_mut();
    let p = cstr(path.to_str().unwrap());
    assert_eq!(unsafe { domaug_dataset_load(p.as_ptr(), role, &mut ds) }, DomaugStatus::Ok);
    ds
}

#[test]
fn dataset_config_and_run() {
    let dir = tempfile::tempdir().unwrap();
    let (src, tgt, run) = (dir.path().join("src"), dir.path().join("tgt"), dir.path().join("run"));
    write_split(&src, 6, 200, DomainTag::Source, SplitRole::Source);
    write_split(&tgt, 2, 20, DomainTag::Target, SplitRole::Target);

    let s = load(&src, DomaugRole::Source);
    let t = load(&tgt, DomaugRole::Target);
    assert_eq!(unsafe { domaug_dataset_len(s) }, 6);
    assert_eq!(unsafe { domaug_dataset_len(t) }, 2);

    let mut cfg = ptr::null_mut();
    assert_eq!(unsafe { domaug_config_default(&mut cfg) }, DomaugStatus::Ok);
    for (k, v) in [("epochs", "2"), ("candidates_per_epoch", "10"), ("canvas_side", "64"), ("seed", "5")] {
        let (k, v) = (cstr(k), cstr(v));
        assert_eq!(unsafe { domaug_config_set(cfg, k.as_ptr(), v.as_ptr()) }, DomaugStatus::Ok);
    }
    let (bad, val) = (cstr("no_such_key"), cstr("1"));
    assert_eq!(unsafe { domaug_config_set(cfg, bad.as_ptr(), val.as_ptr()) }, DomaugStatus::Config);
    assert!(last_error().contains("no_such_key"));

    let mut kept = 0usize;
    let run_c = cstr(run.to_str().unwrap());
    assert_eq!(unsafe { domaug_run(s, t, cfg, run_c.as_ptr(), &mut kept) }, DomaugStatus::Ok, "{}", last_error_or_none());
    assert_eq!(kept, 16);
    assert!(run.join("summary.csv").is_file());
    assert!(domaug_last_error_message().is_null());

    unsafe {
        domaug_config_free(cfg);
        domaug_dataset_free(s);
        domaug_dataset_free(t);
        domaug_dataset_free(ptr::null_mut());
    }
}

fn last_error_or_none() -> String {
    let p = domaug_last_error_message();
    if p.is_null() {
        String::new()
    } else {
        last_error()
    }
}

#[test]
fn missing_seed_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let (src, tgt) = (dir.path().join("src"), dir.path().join("tgt"));
    write_split(&src, 2, 200, DomainTag::Source, SplitRole::Source);
    write_split(&tgt, 1, 20, DomainTag::Target, SplitRole::Target);
    let (s, t) = (load(&src, DomaugRole::Source), load(&tgt, DomaugRole::Target));
    let mut cfg = ptr::null_mut();
    unsafe { domaug_config_default(&mut cfg) };
    let run = cstr(dir.path().join("run").to_str().unwrap());
    assert_eq!(unsafe { domaug_run(s, t, cfg, run.as_ptr(), ptr::null_mut()) }, DomaugStatus::Config);
    assert!(last_error().contains("seed"));
    unsafe {
        domaug_config_free(cfg);
        domaug_dataset_free(s);
        domaug_dataset_free(t);
    }
}

#[test]
fn load_errors_map_to_data_status() {
    let dir = tempfile::tempdir().unwrap();
    let mut ds = ptr::null_mut();
    let p = cstr(dir.path().join("absent").to_str().unwrap());
    assert_eq!(unsafe { domaug_dataset_load(p.as_ptr(), DomaugRole::Source, &mut ds) }, DomaugStatus::Data);
    assert!(ds.is_null());
    assert_eq!(
        unsafe { domaug_dataset_load(ptr::null(), DomaugRole::Source, &mut ds) },
        DomaugStatus::NullPointer
    );
    let cfg_path = dir.path().join("c.toml");
    std::fs::write(&cfg_path, "epochs = \"many\"\n").unwrap();
    let mut cfg = ptr::null_mut();
    let p = cstr(cfg_path.to_str().unwrap());
    assert_eq!(unsafe { domaug_config_from_file(p.as_ptr(), &mut cfg) }, DomaugStatus::Config);
}

#[test]
fn distances() {
    let targets = [1.0, 0.0, 0.0, 1.0];
    let cand = [1.0, 1.0];
    let mut d = 0.0;
    assert_eq!(unsafe { domaug_mmd_sq(cand.as_ptr(), targets.as_ptr(), 2, 2, &mut d) }, DomaugStatus::Ok);
    assert!((d - 0.5).abs() < 1e-12);

    let mut zero = 9usize;
    let zero_cand = [0.0, 0.0];
    assert_eq!(
        unsafe { domaug_cosine_dist(zero_cand.as_ptr(), targets.as_ptr(), 2, 2, &mut d, &mut zero) },
        DomaugStatus::Ok
    );
    assert_eq!((d, zero), (2.0, 2));
    assert_eq!(
        unsafe { domaug_mmd_sq(cand.as_ptr(), targets.as_ptr(), 0, 2, &mut d) },
        DomaugStatus::InvalidArgument
    );
}

#[test]
fn filter_indices_follow_distance_then_index() {
    let distances = [0.5, 0.1, 0.5, 0.3, 0.1, 0.9, 0.2, 0.5, 0.4, 0.0, 0.7];
    let mut out = [usize::MAX; 11];
    let mut len = 0;
    assert_eq!(
        unsafe { domaug_filter_top_k(distances.as_ptr(), distances.len(), 0.5, out.as_mut_ptr(), &mut len) },
        DomaugStatus::Ok
    );
    assert_eq!(&out[..len], &[9, 1, 4, 6, 3]);
    assert_eq!(
        unsafe { domaug_filter_top_k(distances.as_ptr(), 1, 0.5, out.as_mut_ptr(), &mut len) },
        DomaugStatus::Config
    );
}

#[test]
fn gaussian_map_and_embedding() {
    let mut map = vec![0.0; 4 * 3];
    assert_eq!(unsafe { domaug_gaussian_weight_map(4, 3, 10, 10, map.as_mut_ptr()) }, DomaugStatus::Ok);
    assert_eq!(map[0], map[3]);
    assert_eq!(map[0], map[11]);
    assert_eq!(
        unsafe { domaug_gaussian_weight_map(1, 3, 10, 10, map.as_mut_ptr()) },
        DomaugStatus::InvalidArgument
    );

    let rgb = vec![255u8; 16 * 16 * 3];
    let mut v = vec![0.0; domaug_builtin_dim()];
    assert_eq!(unsafe { domaug_embed_builtin(rgb.as_ptr(), 16, 16, v.as_mut_ptr()) }, DomaugStatus::Ok);
    assert!(v.iter().all(|x| (x - 1.0).abs() < 1e-12));
}

fn target_profile_dir() -> PathBuf {
    let exe = std::env::current_exe().unwrap();
    exe.parent().unwrap().parent().unwrap().to_path_buf()
}

#[test]
fn header_compiles_and_links_from_c() {
    let header_dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("include");
    assert!(header_dir.join("domaug.h").is_file());
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("probe.c");
    std::fs::write(
        &src,
        r#"#include <stdio.h>
#include "domaug.h"
int main(void) {
    double t[4] = {1, 0, 0, 1}, c[2] = {1, 1}, d = -1;
    if (domaug_mmd_sq(c, t, 2, 2, &d) != DOMAUG_STATUS_OK) return 1;
    DomaugConfig *cfg = NULL;
    if (domaug_config_default(&cfg) != DOMAUG_STATUS_OK) return 2;
    if (domaug_config_set(cfg, "k", "2.5") != DOMAUG_STATUS_OK) { }
    if (domaug_config_set(cfg, "bogus", "1") != DOMAUG_STATUS_CONFIG) return 3;
    if (domaug_last_error_message() == NULL) return 4;
    domaug_config_free(cfg);
    printf("%.3f\n", d);
    return 0;
}
"#,
    )
    .unwrap();
    let lib = target_profile_dir().join("libdomaug_ffi.a");
    let exe = dir.path().join("probe");
    let mut cmd = Command::new("cc");
    cmd.arg("-I").arg(&header_dir).arg(&src);
    if lib.is_file() {
        cmd.arg(&lib).args(["-lpthread", "-ldl", "-lm", "-o"]).arg(&exe);
    } else {
        cmd.arg("-fsyntax-only");
    }
    let status = match cmd.status() {
        Ok(s) => s,
        Err(_) => return, // no C compiler available
    };
    assert!(status.success());
    if lib.is_file() {
        let out = Command::new(&exe).output().unwrap();
        assert!(out.status.success(), "probe exited with {:?}", out.status);
        assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "0.500");
    }
}
