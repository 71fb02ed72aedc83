use std::ffi::{c_char, CStr};
use std::path::Path;
use std::process::Command;
use std::ptr;

use hypercrowd_ffi::*;

fn last_error() -> String {
    let mut buf = vec![0 as c_char; 256];
    let n = unsafe { hc_last_error(buf.as_mut_ptr(), buf.len()) };
    assert!(n > 0);
    unsafe { CStr::from_ptr(buf.as_ptr()) }.to_string_lossy().into_owned()
}

fn new_sim(config: &CStr, strategy: &CStr, seed: u64) -> (HcStatus, *mut HcSimulation) {
    let mut sim = ptr::null_mut();
    let s = unsafe { hc_simulation_new(ptr::null(), config.as_ptr(), strategy.as_ptr(), seed, &mut sim) };
    (s, sim)
}

#[test]
fn runs_a_small_market() {
    let (s, sim) = new_sim(c"{\"mus\": 6, \"quota\": 1, \"task_types\": 2}", c"prism", 4);
    assert_eq!(s, HcStatus::Ok);
    assert!(!sim.is_null());
    let mut rows = vec![
        HcStepMetrics {
            t: 0,
            social_welfare: 0.0,
            mu_utility_mean: 0.0,
            completion_ratio: 0.0,
            collisions: 0,
            energy: 0.0,
            perception_error: 0.0,
        };
        30
    ];
    unsafe {
        assert_eq!(hc_simulation_run(sim, 30, rows.as_mut_ptr()), HcStatus::Ok);
        assert_eq!(hc_simulation_time(sim), 30);
        assert_eq!(hc_simulation_mcsps(sim), 2);
        let mut u = 0.0;
        assert_eq!(hc_simulation_mcsp_utility(sim, 1, &mut u), HcStatus::Ok);
        assert_eq!(hc_simulation_mcsp_utility(sim, 2, &mut u), HcStatus::OutOfRange);
        assert!(hc_simulation_step(sim, ptr::null_mut()) == HcStatus::Ok);
        assert_eq!(hc_simulation_time(sim), 31);
        hc_simulation_free(sim);
    }
    for (t, r) in rows.iter().enumerate() {
        assert_eq!(r.t, t as u64);
        assert!((0.0..=1.0).contains(&r.completion_ratio));
        assert!(r.perception_error.is_finite());
    }
    assert!(rows.windows(2).all(|w| w[1].perception_error <= w[0].perception_error));
}

#[test]
fn same_seed_same_metrics() {
    let run = || {
        let (_, sim) = new_sim(c"{\"mus\": 5, \"quota\": 1}", c"pacmab", 9);
        let mut out = [HcStepMetrics {
            t: 0,
            social_welfare: 0.0,
            mu_utility_mean: 0.0,
            completion_ratio: 0.0,
            collisions: 0,
            energy: 0.0,
            perception_error: 0.0,
        }; 20];
        unsafe {
            assert_eq!(hc_simulation_run(sim, 20, out.as_mut_ptr()), HcStatus::Ok);
            hc_simulation_free(sim);
        }
        out
    };
    let (a, b) = (run(), run());
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x.social_welfare.to_bits(), y.social_welfare.to_bits());
        assert!(x.perception_error.is_nan());
    }
}

#[test]
fn errors_carry_codes_and_messages() {
    let (s, sim) = new_sim(c"{\"mus\": 0}", c"prism", 1);
    assert_eq!(s, HcStatus::Config);
    assert!(sim.is_null());
    assert!(last_error().contains("mus"));

    assert_eq!(new_sim(c"{", c"prism", 1).0, HcStatus::Config);
    assert_eq!(new_sim(c"{}", c"greedy", 1).0, HcStatus::Config);
    assert!(last_error().contains("greedy"));

    let mut sim = ptr::null_mut();
    let s = unsafe { hc_simulation_new(c"huge".as_ptr(), ptr::null(), c"mgs".as_ptr(), 1, &mut sim) };
    assert_eq!(s, HcStatus::Config);
    let s = unsafe { hc_simulation_new(ptr::null(), ptr::null(), ptr::null(), 1, &mut sim) };
    assert_eq!(s, HcStatus::NullPointer);
    let bad = [0xffu8, 0];
    let s = unsafe { hc_simulation_new(ptr::null(), ptr::null(), bad.as_ptr().cast(), 1, &mut sim) };
    assert_eq!(s, HcStatus::InvalidUtf8);
    unsafe {
        assert_eq!(hc_simulation_run(ptr::null_mut(), 1, ptr::null_mut()), HcStatus::NullPointer);
        assert_eq!(hc_simulation_time(ptr::null()), 0);
        hc_simulation_free(ptr::null_mut());
    }

    // A short buffer still gets a terminated prefix.
    let mut tiny = [1 as c_char; 4];
    let n = unsafe { hc_last_error(tiny.as_mut_ptr(), tiny.len()) };
    assert!(n > 3);
    assert_eq!(tiny[3], 0);
}

#[test]
fn assignment_entry_point() {
    let w = [4.0, 1.0, 3.0, 2.0, 0.0, 5.0, 3.0, 2.0, 2.0];
    let mut cols = [0isize; 3];
    let mut total = 0.0;
    let s = unsafe { hc_solve_assignment(w.as_ptr(), 3, 3, cols.as_mut_ptr(), &mut total) };
    assert_eq!(s, HcStatus::Ok);
    // Hand-checked optimum: (0,0)=4, (1,2)=5, (2,1)=2.
    assert_eq!(cols, [0, 2, 1]);
    assert_eq!(total, 11.0);

    let w = [1.0, f64::NAN, 7.0, 2.0, f64::NEG_INFINITY, 3.0];
    let mut cols = [0isize; 3];
    let s = unsafe { hc_solve_assignment(w.as_ptr(), 3, 2, cols.as_mut_ptr(), &mut total) };
    assert_eq!(s, HcStatus::Ok);
    assert_eq!(cols, [-1, 0, 1]);
    assert_eq!(total, 10.0);

    let w = [f64::NAN];
    let s = unsafe { hc_solve_assignment(w.as_ptr(), 1, 1, cols.as_mut_ptr(), &mut total) };
    assert_eq!(s, HcStatus::Infeasible);
    let w = [f64::INFINITY];
    let s = unsafe { hc_solve_assignment(w.as_ptr(), 1, 1, cols.as_mut_ptr(), &mut total) };
    assert_eq!(s, HcStatus::OutOfRange);
    let s = unsafe { hc_solve_assignment(ptr::null(), 0, 0, ptr::null_mut(), &mut total) };
    assert_eq!(s, HcStatus::Ok);
    assert_eq!(total, 0.0);
}

#[test]
fn version_is_the_crate_version() {
    let v = unsafe { CStr::from_ptr(hc_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_compiles_as_c() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR"));
    let header = dir.join("include/hypercrowd.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for f in ["hc_simulation_new", "hc_simulation_run", "hc_solve_assignment", "hc_last_error", "HC_STATUS_PANIC"] {
        assert!(text.contains(f), "{f} missing from header");
    }
    let Ok(cc) = which_cc() else {
        eprintln!("no C compiler found; skipping compile check");
        return;
    };
    let tmp = tempfile::tempdir().unwrap();
    let src = tmp.path().join("use.c");
    std::fs::write(
        &src,
        r#"#include "hypercrowd.h"
int use(void) {
    HcSimulation *sim = 0;
    HcStepMetrics m;
    HcStatus s = hc_simulation_new("desk", "{}", "prism", 1, &sim);
    if (s != HC_STATUS_OK) { char buf[64]; hc_last_error(buf, sizeof buf); return (int)s; }
    s = hc_simulation_step(sim, &m);
    hc_simulation_free(sim);
    double w[1] = {1.0}; ptrdiff_t c[1]; double total;
    return (int)s + (int)hc_solve_assignment(w, 1, 1, c, &total);
}
"#,
    )
    .unwrap();
    let status = Command::new(cc)
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(dir.join("include"))
        .arg(&src)
        .status()
        .unwrap();
    assert!(status.success());
}

fn which_cc() -> Result<&'static str, ()> {
    ["cc", "gcc", "clang"]
        .into_iter()
        .find(|c| Command::new(c).arg("--version").output().is_ok_and(|o| o.status.success()))
        .ok_or(())
}
