use std::ffi::{CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use orcs_ffi::*;

fn new_sim(config: &str) -> (OrcsStatus, *mut OrcsSimulation) {
    let text = CString::new(config).unwrap();
    let mut handle = ptr::null_mut();
    let status = unsafe { orcs_simulation_new(text.as_ptr(), &mut handle) };
    (status, handle)
}

fn last_error() -> String {
    let p = orcs_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_str().unwrap().to_owned()
}

const SMALL: &str =
    "n = 64\nbox = 50\npdist = disordered\nradius-dist = const:3\nthreads = 1\nseed = 7\n";

#[test]
fn create_step_and_read_back() {
    let (status, sim) = new_sim(SMALL);
    assert_eq!(status, OrcsStatus::Ok);
    assert!(!sim.is_null());
    unsafe {
        assert_eq!(orcs_simulation_len(sim), 64);
        let mut rec = OrcsStepRecord::default();
        assert_eq!(orcs_simulation_step(sim, &mut rec), OrcsStatus::Ok);
        assert_eq!(rec.step, 0);
        assert_eq!(rec.rebuilt, 1);
        assert_eq!(orcs_simulation_steps_done(sim), 1);

        let mut summary = OrcsRunSummary::default();
        assert_eq!(orcs_simulation_run(sim, 9, &mut summary), OrcsStatus::Ok);
        assert_eq!(summary.steps_run, 9);
        assert_eq!(orcs_simulation_steps_done(sim), 10);

        let mut xyz = vec![f64::NAN; 3 * 64];
        assert_eq!(
            orcs_simulation_positions(sim, xyz.as_mut_ptr(), xyz.len()),
            OrcsStatus::Ok
        );
        assert!(xyz.iter().all(|v| (0.0..=50.0).contains(v)));
        let mut radii = vec![0.0; 64];
        assert_eq!(
            orcs_simulation_radii(sim, radii.as_mut_ptr(), radii.len()),
            OrcsStatus::Ok
        );
        assert!(radii.iter().all(|&r| r == 3.0));
        orcs_simulation_free(sim);
    }
}

#[test]
fn null_config_means_defaults_and_null_record_is_allowed() {
    let mut handle = ptr::null_mut();
    assert_eq!(
        unsafe { orcs_simulation_new(ptr::null(), &mut handle) },
        OrcsStatus::Ok
    );
    unsafe {
        assert_eq!(orcs_simulation_len(handle), 20000);
        orcs_simulation_free(handle);
    }
    let (_, sim) = new_sim(SMALL);
    unsafe {
        assert_eq!(orcs_simulation_step(sim, ptr::null_mut()), OrcsStatus::Ok);
        assert_eq!(orcs_simulation_run(sim, 2, ptr::null_mut()), OrcsStatus::Ok);
        orcs_simulation_free(sim);
    }
}

#[test]
fn config_errors_name_the_key() {
    let (status, sim) = new_sim("n = 10\nwarp = 9\n");
    assert_eq!(status, OrcsStatus::Config);
    assert!(sim.is_null());
    assert!(last_error().contains("warp"), "{}", last_error());

    let (status, _) = new_sim("mode = perse\nradius-dist = uniform:1:2\nn = 10\n");
    assert_eq!(status, OrcsStatus::Config);
    assert!(last_error().contains("mode"));
}

#[test]
fn capacity_and_overflow_map_to_their_codes() {
    let (status, _) = new_sim("n = 100\nmax-particles = 50\n");
    assert_eq!(status, OrcsStatus::Capacity);

    let (status, sim) =
        new_sim("n = 200\nbox = 10\nradius-dist = const:4\nmode = list\nkmax = 2\nthreads = 1\n");
    assert_eq!(status, OrcsStatus::Ok);
    unsafe {
        assert_eq!(
            orcs_simulation_step(sim, ptr::null_mut()),
            OrcsStatus::NeighborListOverflow
        );
        assert!(last_error().contains("overflow"));
        let mut summary = OrcsRunSummary::default();
        assert_eq!(
            orcs_simulation_run(sim, 3, &mut summary),
            OrcsStatus::NeighborListOverflow
        );
        assert_eq!(summary.steps_run, 0);
        orcs_simulation_free(sim);
    }
}

#[test]
fn null_and_short_buffers_are_rejected() {
    unsafe {
        assert_eq!(
            orcs_simulation_step(ptr::null_mut(), ptr::null_mut()),
            OrcsStatus::NullPointer
        );
        assert_eq!(orcs_simulation_len(ptr::null()), 0);
        assert_eq!(
            orcs_simulation_new(ptr::null(), ptr::null_mut()),
            OrcsStatus::NullPointer
        );
        orcs_simulation_free(ptr::null_mut());
    }
    let (_, sim) = new_sim(SMALL);
    unsafe {
        let mut short = vec![0.0; 10];
        assert_eq!(
            orcs_simulation_positions(sim, short.as_mut_ptr(), short.len()),
            OrcsStatus::InvalidArgument
        );
        assert!(last_error().contains("need 192"));
        assert_eq!(
            orcs_simulation_radii(sim, ptr::null_mut(), 64),
            OrcsStatus::NullPointer
        );
        orcs_simulation_free(sim);
    }
    let bad = [b'n', b'=', 0xff, 0];
    let mut handle = ptr::null_mut();
    let status = unsafe { orcs_simulation_new(bad.as_ptr().cast(), &mut handle) };
    assert_eq!(status, OrcsStatus::InvalidArgument);
}

#[test]
fn cost_model_entry_points() {
    // Closed form: radicand 1 - 2 (t_u - t_r) / dq = 1 + 2 * 3.5 / 0.5 = 15, sqrt - 1 = 2.87 -> 3.
    assert_eq!(orcs_k_u_opt(0.5, 4.0, 0.5, 1e-9, 100), 3);
    assert_eq!(orcs_k_u_opt(0.5, 4.0, 0.0, 1e-9, 100), 100);
    // k = 0 rebuilds every step: n * (t_r + t_q).
    assert_eq!(orcs_total_cost(2.0, 1.0, 0.5, 0.1, 10, 0), 25.0);
    // k = 1: n / 2 * (dq / 2 + t_u + t_q + t_r + t_q) = 5 * 4.05.
    assert!((orcs_total_cost(2.0, 1.0, 0.5, 0.1, 10, 1) - 20.25).abs() < 1e-12);
}

#[test]
fn version_is_the_crate_version() {
    let v = unsafe { CStr::from_ptr(orcs_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_declares_the_api_and_compiles_as_c() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/orcs.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for name in [
        "typedef struct OrcsSimulation OrcsSimulation",
        "ORCS_STATUS_NEIGHBOR_LIST_OVERFLOW",
        "orcs_simulation_new",
        "orcs_simulation_step",
        "orcs_simulation_run",
        "orcs_simulation_positions",
        "orcs_simulation_free",
        "orcs_last_error_message",
        "orcs_k_u_opt",
        "orcs_total_cost",
    ] {
        assert!(text.contains(name), "header lacks {name}");
    }

    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        r#"#include "orcs.h"
int main(void) {
    OrcsSimulation *sim = 0;
    OrcsStatus s = orcs_simulation_new("n = 8", &sim);
    OrcsStepRecord rec;
    if (s == ORCS_STATUS_OK) s = orcs_simulation_step(sim, &rec);
    orcs_simulation_free(sim);
    return s == ORCS_STATUS_OK ? 0 : (int)orcs_k_u_opt(1, 2, 3, 0, 4);
}
"#,
    )
    .unwrap();
    let include = header.parent().unwrap();
    match Command::new("cc")
        .arg("-fsyntax-only")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(include)
        .arg(&src)
        .output()
    {
        Ok(out) => assert!(
            out.status.success(),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        ),
        Err(e) => eprintln!("no C compiler ({e}); header syntax not checked"),
    }
}
