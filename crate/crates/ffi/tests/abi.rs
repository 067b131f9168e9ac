use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use ssws_ffi::*;

fn last_error() -> String {
    unsafe {
        CStr::from_ptr(ssws_last_error())
            .to_string_lossy()
            .into_owned()
    }
}

const PLAN: &str =
    "# listeners = 6\n# screens_per_listener = 2\n# ratings_per_utterance = 2\n# seed = 5\n\
utterance_id\tdomain\ta\tb\n\
u1\tnews\ta/u1.wav\tb/u1.wav\nu2\tnews\ta/u2.wav\tb/u2.wav\nu3\tnews\ta/u3.wav\tb/u3.wav\n\
u4\tnav\ta/u4.wav\tb/u4.wav\nu5\tnav\ta/u5.wav\tb/u5.wav\nu6\tnav\ta/u6.wav\tb/u6.wav\n";

#[test]
fn codec_calls() {
    let mut bin = 0usize;
    unsafe {
        assert_eq!(ssws_mulaw_encode(0.0, 1024, &mut bin), SswsStatus::Ok);
        assert_eq!(bin, 512);
        assert_eq!(
            ssws_mulaw_encode(2.0, 1024, &mut bin),
            SswsStatus::InvalidArgument
        );
        assert!(!last_error().is_empty());
        assert_eq!(
            ssws_mulaw_encode(0.0, 1024, ptr::null_mut()),
            SswsStatus::NullPointer
        );
        let x = [-1.0f32, 0.0, 1.0];
        let mut b = [0u32; 3];
        let mut y = [0f32; 3];
        assert_eq!(
            ssws_mulaw_encode_buffer(x.as_ptr(), 3, 1024, b.as_mut_ptr()),
            SswsStatus::Ok
        );
        assert_eq!(b, [0, 512, 1023]);
        assert_eq!(
            ssws_mulaw_decode_buffer(b.as_ptr(), 3, 1024, y.as_mut_ptr()),
            SswsStatus::Ok
        );
        assert!(last_error().is_empty());
    }
}

#[test]
fn stats_calls() {
    let d = [2.0, -1.0, 3.0, 0.0, 1.0];
    let z = [0.0; 5];
    let (mut t, mut p) = (0.0, 0.0);
    unsafe {
        assert_eq!(
            ssws_paired_t_test(d.as_ptr(), z.as_ptr(), 5, &mut t, &mut p),
            SswsStatus::Ok
        );
        assert!((t - 2f64.sqrt()).abs() < 1e-4);
        let ps = [0.001, 0.02, 0.03];
        let mut adj = [0.0; 3];
        let mut rej = [9u8; 3];
        assert_eq!(
            ssws_holm(ps.as_ptr(), 3, 0.05, adj.as_mut_ptr(), rej.as_mut_ptr()),
            SswsStatus::Ok
        );
        assert_eq!(rej, [1, 1, 1]);
        let same = [1.0, 2.0];
        assert_eq!(
            ssws_wilcoxon(same.as_ptr(), same.as_ptr(), 2, &mut t, &mut p),
            SswsStatus::Stats
        );
        let mut r = [0.0; 4];
        assert_eq!(
            ssws_screen_ranks([80.0, 60.0, 60.0, 20.0].as_ptr(), 4, r.as_mut_ptr()),
            SswsStatus::Ok
        );
        assert_eq!(r, [1.0, 2.5, 2.5, 4.0]);
    }
}

#[test]
fn assignment_handle() {
    let plan = CString::new(PLAN).unwrap();
    let mut h = ptr::null_mut();
    unsafe {
        assert_eq!(
            ssws_assignment_build(plan.as_ptr(), 0, 0, &mut h),
            SswsStatus::Ok
        );
        let mut n = 99;
        assert_eq!(ssws_assignment_violations(h, &mut n), SswsStatus::Ok);
        assert_eq!(n, 0);
        let mut json = ptr::null_mut();
        assert_eq!(ssws_assignment_to_json(h, &mut json), SswsStatus::Ok);
        let v: serde_json::Value =
            serde_json::from_str(CStr::from_ptr(json).to_str().unwrap()).unwrap();
        assert_eq!(v["listeners"].as_array().unwrap().len(), 6);
        ssws_string_free(json);
        ssws_assignment_free(h);
        let bad = CString::new(PLAN.replace("# listeners = 6", "# listeners = 7")).unwrap();
        assert_eq!(
            ssws_assignment_build(bad.as_ptr(), 0, 0, &mut h),
            SswsStatus::Design
        );
        assert!(h.is_null());
    }
}

#[test]
fn model_round_trip() {
    use ssws::neural::write_checkpoint;
    use ssws::wavenet::{init_params, ModelConfig};
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ModelConfig::tiny();
    cfg.stack.blocks = 1;
    cfg.stack.layers_per_block = 2;
    cfg.hop_size = 40;
    let params = init_params::<f32>(&cfg, 3).unwrap();
    let (ck, cf) = (dir.path().join("m.ckpt"), dir.path().join("m.cfg"));
    write_checkpoint(&ck, &params, None).unwrap();
    std::fs::write(&cf, cfg.to_text()).unwrap();
    let c = |p: &Path| CString::new(p.to_str().unwrap()).unwrap();
    let mut m = ptr::null_mut();
    unsafe {
        assert_eq!(
            ssws_model_load(c(&ck).as_ptr(), c(&cf).as_ptr(), &mut m),
            SswsStatus::Ok
        );
        let mut rf = 0;
        assert_eq!(ssws_model_receptive_field(m, &mut rf), SswsStatus::Ok);
        assert_eq!(rf, 4);
        let feats = vec![0f32; 3 * 88];
        let mut out = vec![0f32; 120];
        let mut written = 0;
        assert_eq!(
            ssws_model_synthesize(m, feats.as_ptr(), 3, 1, out.as_mut_ptr(), 119, &mut written),
            SswsStatus::BufferTooSmall
        );
        assert_eq!(
            ssws_model_synthesize(m, feats.as_ptr(), 3, 1, out.as_mut_ptr(), 120, &mut written),
            SswsStatus::Ok
        );
        assert_eq!(written, 120);
        assert!(out.iter().all(|x| x.abs() <= 1.0));
        ssws_model_free(m);
        let missing = c(&dir.path().join("none.ckpt"));
        assert_eq!(
            ssws_model_load(missing.as_ptr(), c(&cf).as_ptr(), &mut m),
            SswsStatus::Io
        );
        assert!(m.is_null());
    }
}

fn target_dir() -> PathBuf {
    // target/<profile>/deps/<test binary>
    std::env::current_exe()
        .unwrap()
        .parent()
        .unwrap()
        .parent()
        .unwrap()
        .to_path_buf()
}

#[test]
fn header_declares_every_export() {
    let header =
        std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("include/ssws.h"))
            .unwrap();
    let src =
        std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("src/lib.rs")).unwrap();
    let exports: Vec<&str> = src
        .lines()
        .filter_map(|l| l.split("extern \"C\" fn ").nth(1))
        .map(|rest| rest.split('(').next().unwrap())
        .collect();
    assert!(exports.len() >= 18);
    for f in exports {
        assert!(header.contains(&format!("{f}(")), "{f} missing from header");
    }
}

#[test]
fn c_program_links_and_runs() {
    let lib = target_dir().join("libssws_ffi.a");
    assert!(
        lib.exists(),
        "static library not built at {}",
        lib.display()
    );
    let dir = tempfile::tempdir().unwrap();
    let c_src = dir.path().join("smoke.c");
    std::fs::write(
        &c_src,
        format!(
            r#"#include <stdio.h>
#include <string.h>
#include "ssws.h"
static const char *PLAN = "{}";
int main(void) {{
    size_t bin = 0;
    if (ssws_mulaw_encode(1.0, 1024, &bin) != SSWS_STATUS_OK || bin != 1023) return 1;
    if (ssws_mulaw_encode(0.0, 1024, NULL) != SSWS_STATUS_NULL_POINTER) return 2;
    if (strlen(ssws_last_error()) == 0) return 3;
    SswsAssignment *a = NULL;
    if (ssws_assignment_build(PLAN, 1, 9, &a) != SSWS_STATUS_OK) return 4;
    size_t v = 1;
    if (ssws_assignment_violations(a, &v) != SSWS_STATUS_OK || v != 0) return 5;
    char *json = NULL;
    if (ssws_assignment_to_json(a, &json) != SSWS_STATUS_OK || strstr(json, "\"seed\": 9") == NULL) return 6;
    ssws_string_free(json);
    ssws_assignment_free(a);
    printf("ok %s\n", ssws_version());
    return 0;
}}
"#,
            PLAN.escape_default()
        ),
    )
    .unwrap();
    let exe = dir.path().join("smoke");
    let status = Command::new("cc")
        .arg(&c_src)
        .arg("-I")
        .arg(Path::new(env!("CARGO_MANIFEST_DIR")).join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .expect("C compiler");
    assert!(status.success());
    let out = Command::new(&exe).output().unwrap();
    assert!(out.status.success(), "exit {:?}", out.status.code());
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("ok "));
}
