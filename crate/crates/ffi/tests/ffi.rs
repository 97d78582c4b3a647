use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use pvp_ffi::*;

fn cstr(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn last_error() -> String {
    let p = pvp_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn env_round_trip_through_handles() {
    unsafe {
        let mut env = ptr::null_mut();
        let cfg = cstr(r#"{"env":"lanekeep"}"#);
        assert_eq!(pvp_env_new(cfg.as_ptr(), &mut env), PvpStatus::Ok);
        let (mut obs_dim, mut discrete, mut dim) = (0usize, true, 0usize);
        assert_eq!(pvp_env_spec(env, &mut obs_dim, &mut discrete, &mut dim), PvpStatus::Ok);
        assert!(!discrete);
        assert_eq!(dim, 2);
        let mut obs = vec![0.0; obs_dim];
        assert_eq!(pvp_env_reset(env, 1, obs.as_mut_ptr(), obs_dim), PvpStatus::Ok);
        let mut a = vec![0.0; dim];
        let mut st = PvpStep::default();
        let mut steps = 0;
        while !st.done {
            assert_eq!(pvp_env_expert_action(env, a.as_mut_ptr(), dim), PvpStatus::Ok);
            assert_eq!(
                pvp_env_step_continuous(env, a.as_ptr(), dim, obs.as_mut_ptr(), obs_dim, &mut st),
                PvpStatus::Ok
            );
            steps += 1;
        }
        assert!(st.success, "expert finishes the route after {steps} steps");
        pvp_env_free(env);
    }
}

#[test]
fn errors_carry_status_and_message() {
    unsafe {
        let mut env = ptr::null_mut();
        let bad = cstr(r#"{"env":"gridworld","width":2,"height":2,"layout":"empty"}"#);
        assert_eq!(pvp_env_new(bad.as_ptr(), &mut env), PvpStatus::Config);
        assert!(env.is_null());
        assert!(!last_error().is_empty());

        let junk = cstr("{");
        assert_eq!(pvp_env_new(junk.as_ptr(), &mut env), PvpStatus::Config);
        assert_eq!(pvp_env_new(ptr::null(), &mut env), PvpStatus::NullPointer);

        let ok = cstr(r#"{"env":"gridworld","width":6,"height":6,"layout":"empty"}"#);
        assert_eq!(pvp_env_new(ok.as_ptr(), &mut env), PvpStatus::Ok);
        let mut obs = vec![0.0; 3];
        assert_eq!(pvp_env_reset(env, 0, obs.as_mut_ptr(), 3), PvpStatus::InvalidArgument);
        assert!(last_error().contains("observation buffer"));
        let mut st = PvpStep::default();
        assert_eq!(pvp_env_step_discrete(env, 9, obs.as_mut_ptr(), 3, &mut st), PvpStatus::InvalidArgument);
        pvp_env_free(env);
        pvp_env_free(ptr::null_mut());
    }
}

#[test]
fn loss_and_bound() {
    let mut out = 0.0;
    let (qh, qn) = ([1.5, 0.0], [-1.0, 0.5]);
    unsafe {
        assert_eq!(pvp_pv_loss(qh.as_ptr(), qn.as_ptr(), 2, 1.0, &mut out), PvpStatus::Ok);
        assert!((out - (0.25 + 0.0 + 1.0 + 2.25) / 2.0).abs() < 1e-12);
        assert_eq!(pvp_pv_loss(qh.as_ptr(), qn.as_ptr(), 2, 0.0, &mut out), PvpStatus::InvalidArgument);
        assert_eq!(pvp_compute_bound(0.99, 0.05, 0.01, 0.5, &mut out), PvpStatus::Ok);
        assert!((out - 3.5).abs() < 1e-9);
        assert_eq!(pvp_compute_bound(1.0, 0.0, 0.0, 0.0, &mut out), PvpStatus::InvalidArgument);
        assert_eq!(pvp_compute_bound(0.9, 0.0, 0.0, 0.0, ptr::null_mut()), PvpStatus::NullPointer);
    }
}

#[test]
fn train_returns_a_summary() {
    let cfg = serde_json::json!({
        "env": {"env": "gridworld", "width": 5, "height": 5, "layout": "empty"},
        "agent_kind": "pvp_dqn",
        "pvp": {"batch_size": 16, "learning_starts": 10},
        "oracle": {"source": "scripted"},
        "total_steps": 60,
        "eval_every": 0,
        "eval_episodes": 2,
        "seed": 3
    });
    let text = cstr(&cfg.to_string());
    let mut out = ptr::null_mut();
    unsafe {
        assert_eq!(pvp_train(text.as_ptr(), &mut out), PvpStatus::Ok, "{}", last_error());
        let summary: serde_json::Value = serde_json::from_str(CStr::from_ptr(out).to_str().unwrap()).unwrap();
        assert_eq!(summary["total_steps"], 60);
        pvp_string_free(out);

        let bad = cstr(r#"{"env":{"env":"lanekeep"},"agent_kind":"pvp_dqn","oracle":{"source":"none"},"total_steps":5,"seed":0}"#);
        assert_eq!(pvp_train(bad.as_ptr(), &mut out), PvpStatus::Config);
        assert!(out.is_null());
    }
}

#[test]
fn header_is_current_and_c_code_links() {
    let root = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let header = std::fs::read_to_string(root.join("include/pvp.h")).unwrap();
    for sym in [
        "pvp_env_new",
        "pvp_env_free",
        "pvp_env_step_discrete",
        "pvp_env_step_continuous",
        "pvp_pv_loss",
        "pvp_compute_bound",
        "pvp_train",
        "pvp_last_error",
        "PVP_STATUS_NULL_POINTER",
    ] {
        assert!(header.contains(sym), "{sym} missing from header");
    }
    let target = std::env::current_exe().unwrap().parent().unwrap().parent().unwrap().to_path_buf();
    let lib = target.join("libpvp_ffi.a");
    assert!(lib.exists(), "{} not built", lib.display());
    let out = std::env::temp_dir().join(format!("pvp_ffi_smoke_{}", std::process::id()));
    let status = Command::new("cc")
        .arg(root.join("tests/c/smoke.c"))
        .arg("-I")
        .arg(root.join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&out)
        .status()
        .expect("a C compiler on PATH");
    assert!(status.success());
    let run = Command::new(&out).output().unwrap();
    let _ = std::fs::remove_file(&out);
    assert!(run.status.success(), "exit {:?}: {}", run.status.code(), String::from_utf8_lossy(&run.stderr));
    assert!(String::from_utf8_lossy(&run.stdout).starts_with("ok"));
}
