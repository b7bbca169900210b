use std::ffi::{CStr, CString};
use std::process::Command;
use std::ptr;

use frugal_cd::dataio::{synth_generate, SynthConfig};
use frugal_cd_ffi::*;

const SMALL: &str = r#"{"n": 300, "n_pos": 12, "d": 8, "seed": 3}"#;

fn last_error() -> String {
    let p = fcd_last_error();
    assert!(!p.is_null(), "no error message recorded");
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn small_dataset() -> *mut FcdDataset {
    let config = CString::new(SMALL).unwrap();
    let mut ds = ptr::null_mut();
    assert_eq!(unsafe { fcd_dataset_synth(config.as_ptr(), &mut ds) }, FcdStatus::Ok);
    ds
}

#[test]
fn dataset_handles_round_trip_through_disk() {
    let ds = small_dataset();
    let (mut len, mut dim) = (0, 0);
    unsafe {
        assert_eq!(fcd_dataset_shape(ds, &mut len, &mut dim), FcdStatus::Ok);
        assert_eq!((len, dim), (300, 8));

        let dir = tempfile::tempdir().unwrap();
        let path = CString::new(dir.path().join("s.fcd").to_str().unwrap()).unwrap();
        assert_eq!(fcd_dataset_save(ds, path.as_ptr()), FcdStatus::Ok);
        let mut back = ptr::null_mut();
        assert_eq!(fcd_dataset_load(path.as_ptr(), &mut back), FcdStatus::Ok);
        assert_eq!(fcd_dataset_shape(back, &mut len, &mut dim), FcdStatus::Ok);
        assert_eq!((len, dim), (300, 8));
        fcd_dataset_free(back);

        let missing = CString::new(dir.path().join("none.fcd").to_str().unwrap()).unwrap();
        assert_eq!(fcd_dataset_load(missing.as_ptr(), &mut back), FcdStatus::Io);
        fcd_dataset_free(ds);
    }
}

#[test]
fn bad_config_json_is_a_parse_error() {
    let config = CString::new("{\"n\": ").unwrap();
    let mut ds = ptr::null_mut();
    assert_eq!(unsafe { fcd_dataset_synth(config.as_ptr(), &mut ds) }, FcdStatus::Parse);
    assert!(ds.is_null());
    assert!(last_error().contains("config_json"));

    let config = CString::new(r#"{"n": 10, "n_pos": 11}"#).unwrap();
    assert_eq!(unsafe { fcd_dataset_synth(config.as_ptr(), &mut ds) }, FcdStatus::InvalidArgument);
}

#[test]
fn null_pointers_are_rejected() {
    let mut len = 0;
    unsafe {
        assert_eq!(fcd_dataset_shape(ptr::null(), &mut len, &mut len), FcdStatus::NullPointer);
        assert_eq!(fcd_dataset_load(ptr::null(), ptr::null_mut()), FcdStatus::NullPointer);
        assert_eq!(fcd_net_random(4, 2, 0, ptr::null_mut()), FcdStatus::NullPointer);
        fcd_dataset_free(ptr::null_mut());
        fcd_net_free(ptr::null_mut());
        fcd_session_free(ptr::null_mut());
        fcd_string_free(ptr::null_mut());
    }
    assert!(last_error().contains("null"));
}

#[test]
fn success_clears_the_last_error() {
    let mut eer = 0.0;
    unsafe {
        assert_eq!(fcd_auc_of_eers(ptr::null(), 0, &mut eer), FcdStatus::InvalidArgument);
        assert!(!fcd_last_error().is_null());
        let eers = [4.0, 6.0];
        assert_eq!(fcd_auc_of_eers(eers.as_ptr(), 2, &mut eer), FcdStatus::Ok);
    }
    assert_eq!(eer, 5.0);
    assert!(fcd_last_error().is_null());
}

#[test]
fn net_inverse_undoes_forward() {
    let mut net = ptr::null_mut();
    let x = [0.3, -1.2, 2.5, 0.0, -0.7, 1.1];
    let (mut z, mut back) = ([0.0; 6], [0.0; 6]);
    let mut p = -1.0;
    unsafe {
        assert_eq!(fcd_net_random(6, 3, 11, &mut net), FcdStatus::Ok);
        let mut dim = 0;
        assert_eq!(fcd_net_dim(net, &mut dim), FcdStatus::Ok);
        assert_eq!(dim, 6);
        assert_eq!(fcd_net_forward(net, x.as_ptr(), 6, z.as_mut_ptr()), FcdStatus::Ok);
        assert_eq!(fcd_net_inverse(net, z.as_ptr(), 6, back.as_mut_ptr()), FcdStatus::Ok);
        assert_eq!(fcd_net_classify(net, x.as_ptr(), 6, &mut p), FcdStatus::Ok);
        assert_eq!(fcd_net_forward(net, x.as_ptr(), 5, z.as_mut_ptr()), FcdStatus::Shape);
        fcd_net_free(net);
    }
    for (a, b) in x.iter().zip(&back) {
        assert!((a - b).abs() < 1e-12, "{a} vs {b}");
    }
    assert!((0.0..=1.0).contains(&p));
}

#[test]
fn eer_of_a_perfect_ranking_is_zero() {
    let scores = [0.1, 0.2, 0.8, 0.9];
    let labels: [i8; 4] = [-1, -1, 1, 1];
    let mut eer = -1.0;
    unsafe {
        assert_eq!(fcd_compute_eer(scores.as_ptr(), labels.as_ptr(), 4, &mut eer), FcdStatus::Ok);
        assert_eq!(eer, 0.0);
        let bad: [i8; 4] = [-1, 0, 1, 1];
        assert_eq!(fcd_compute_eer(scores.as_ptr(), bad.as_ptr(), 4, &mut eer), FcdStatus::InvalidArgument);
    }
}

#[test]
fn session_runs_to_completion_with_ground_truth() {
    let truth = synth_generate(&serde_json::from_str::<SynthConfig>(SMALL).unwrap()).unwrap();
    let ds = small_dataset();
    let config = CString::new(r#"{"display_size": 8, "iterations": 3, "train": {"epochs": 30}}"#).unwrap();
    let mut s = ptr::null_mut();
    let (mut phase, mut iteration) = (FcdPhase::Ready, 0);
    unsafe {
        assert_eq!(fcd_session_new(ds, config.as_ptr(), &mut s), FcdStatus::Ok);
        // The session holds its own reference to the data.
        fcd_dataset_free(ds);

        let mut len = 0;
        assert_eq!(fcd_session_display(s, ptr::null_mut(), 0, &mut len), FcdStatus::BufferTooSmall);
        assert_eq!(len, 8);

        let mut eers = Vec::new();
        loop {
            assert_eq!(fcd_session_status(s, &mut phase, &mut iteration), FcdStatus::Ok);
            if phase == FcdPhase::Finished {
                break;
            }
            assert_eq!(phase, FcdPhase::AwaitingLabels);
            let mut ids = [0u32; 8];
            assert_eq!(fcd_session_display(s, ids.as_mut_ptr(), 8, &mut len), FcdStatus::Ok);
            let labels: Vec<i8> = ids.iter().map(|&i| truth.get(i).unwrap().label.unwrap().as_i8()).collect();
            assert_eq!(fcd_session_submit(s, ids.as_ptr(), labels.as_ptr(), 7, ptr::null_mut()), FcdStatus::LabelMismatch);
            let mut eer = 0.0;
            assert_eq!(fcd_session_submit(s, ids.as_ptr(), labels.as_ptr(), 8, &mut eer), FcdStatus::Ok);
            eers.push(eer);
        }
        assert_eq!(eers.len(), 3);
        let mut ids = [0u32; 8];
        assert_eq!(fcd_session_display(s, ids.as_mut_ptr(), 8, &mut len), FcdStatus::Phase);

        let mut auc = 0.0;
        assert_eq!(fcd_session_auc(s, &mut auc), FcdStatus::Ok);
        assert!((auc - (eers[1] + eers[2]) / 2.0).abs() < 1e-12);

        let mut json = ptr::null_mut();
        assert_eq!(fcd_session_metrics_json(s, &mut json), FcdStatus::Ok);
        let v: serde_json::Value = serde_json::from_str(CStr::from_ptr(json).to_str().unwrap()).unwrap();
        assert_eq!(v["records"].as_array().unwrap().len(), 3);
        fcd_string_free(json);

        let mut net = ptr::null_mut();
        assert_eq!(fcd_session_net(s, &mut net), FcdStatus::Ok);
        fcd_net_free(net);
        fcd_session_free(s);
    }
}

/// Links a C program against the static library when it is present next to
/// the test binary, otherwise only checks that the header parses.
#[test]
fn header_works_from_c() {
    let header = concat!(env!("CARGO_MANIFEST_DIR"), "/include/frugal_cd.h");
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("probe.c");
    std::fs::write(
        &src,
        format!(
            r#"#include "{header}"
#include <stdio.h>
int main(void) {{
    FcdDataset *ds = NULL;
    size_t n = 0, d = 0;
    if (fcd_dataset_shape(ds, &n, &d) != FCD_STATUS_NULL_POINTER || fcd_last_error() == NULL) return 1;
    if (fcd_dataset_synth("{{\"n\": 120, \"n_pos\": 6, \"d\": 4}}", &ds) != FCD_STATUS_OK) return 2;
    if (fcd_dataset_shape(ds, &n, &d) != FCD_STATUS_OK || n != 120 || d != 4) return 3;
    fcd_dataset_free(ds);
    puts("ok");
    return 0;
}}
"#
        ),
    )
    .unwrap();
    let lib = std::env::current_exe()
        .unwrap()
        .parent()
        .and_then(|deps| deps.parent())
        .map(|d| d.join("libfrugal_cd_ffi.a"));
    let mut cc = Command::new("cc");
    cc.args(["-std=c99", "-Wall", "-Werror"]).arg(&src);
    let exe = dir.path().join("probe");
    let linking = matches!(&lib, Some(l) if l.exists());
    if linking {
        cc.arg(lib.unwrap()).arg("-o").arg(&exe).args(["-lpthread", "-ldl", "-lm"]);
    } else {
        cc.arg("-fsyntax-only");
    }
    let status = match cc.status() {
        Ok(s) => s,
        Err(_) => {
            eprintln!("no C compiler, skipping");
            return;
        }
    };
    assert!(status.success());
    if linking {
        let out = Command::new(&exe).output().unwrap();
        assert!(out.status.success(), "probe exited with {:?}", out.status);
        assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "ok");
    }
}
