//! The C interface driven from Rust, plus a C program compiled against the
//! generated header.

use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use impact_ffi::*;
use tempfile::TempDir;

fn cstr(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn last_error() -> String {
    let p = impact_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

/// Steering right on a line. Finite horizon: with u = 0 the interior cells
/// keep all upper-bound mass inside the domain, which stalls the upper
/// iterate of infinite-horizon interval iteration.
const STEER: &str = "\
[state]
lb = -2
ub = 2
eta = 1
[input]
lb = -1
ub = 1
eta = 1
[dynamics]
f1 = x1 + u1
[noise]
type = normal
sigma = 0.3
[spec]
type = reach
target = x1 >= 1.5
[synthesis]
horizon = 10
";

struct Pipeline {
    config: *mut ImpactConfig,
    imdp: *mut ImpactImdp,
    controller: *mut ImpactController,
}

impl Pipeline {
    fn run(config: *mut ImpactConfig) -> Self {
        let mut imdp = ptr::null_mut();
        let mut controller = ptr::null_mut();
        unsafe {
            assert_eq!(impact_abstraction_build(config, 1, &mut imdp), ImpactStatus::Ok, "{}", last_error());
            assert_eq!(impact_synthesize(config, imdp, 1, &mut controller), ImpactStatus::Ok, "{}", last_error());
        }
        Self {
            config,
            imdp,
            controller,
        }
    }
}

impl Drop for Pipeline {
    fn drop(&mut self) {
        unsafe {
            impact_controller_free(self.controller);
            impact_imdp_free(self.imdp);
            impact_config_free(self.config);
        }
    }
}

#[test]
fn selfloop_round_trip() {
    let mut config = ptr::null_mut();
    let path = cstr(configs().join("toy_selfloop.cfg").to_str().unwrap());
    unsafe {
        assert_eq!(impact_config_load(path.as_ptr(), &mut config), ImpactStatus::Ok);
        let (mut n_s, mut n_u, mut n_w) = (9, 9, 9);
        assert_eq!(impact_config_sizes(config, &mut n_s, &mut n_u, &mut n_w), ImpactStatus::Ok);
        assert_eq!((n_s, n_u, n_w), (1, 0, 0));
    }
    let p = Pipeline::run(config);
    let dir = TempDir::new().unwrap();
    unsafe {
        let mut rows = 0;
        assert_eq!(
            impact_imdp_dims(p.imdp, ptr::null_mut(), ptr::null_mut(), ptr::null_mut(), &mut rows),
            ImpactStatus::Ok
        );
        assert_eq!(rows, 1);

        let (mut state, mut lo, mut hi) = (9, 0.0, 0.0);
        assert_eq!(impact_controller_row(p.controller, 0, &mut state, &mut lo, &mut hi), ImpactStatus::Ok);
        assert_eq!(state, 0);
        assert!((lo - 0.64).abs() < 1e-9 && (hi - 0.64).abs() < 1e-9, "[{lo}, {hi}]");

        // save and reload both objects
        let abs = cstr(dir.path().join("abs").to_str().unwrap());
        assert_eq!(impact_imdp_save(p.imdp, abs.as_ptr()), ImpactStatus::Ok);
        let mut reloaded = ptr::null_mut();
        assert_eq!(impact_imdp_load(abs.as_ptr(), &mut reloaded), ImpactStatus::Ok);
        impact_imdp_free(reloaded);

        let file = cstr(dir.path().join("ctl.txt").to_str().unwrap());
        assert_eq!(impact_controller_save(p.controller, file.as_ptr()), ImpactStatus::Ok);
        let mut c = ptr::null_mut();
        assert_eq!(impact_controller_load(file.as_ptr(), &mut c), ImpactStatus::Ok);
        let (mut len, mut again) = (0, 0.0);
        assert_eq!(impact_controller_len(c, &mut len), ImpactStatus::Ok);
        assert_eq!(len, 1);
        impact_controller_row(c, 0, ptr::null_mut(), &mut again, ptr::null_mut());
        assert_eq!(again, lo);
        impact_controller_free(c);
    }
}

#[test]
fn controller_prescribes_inputs() {
    let mut config = ptr::null_mut();
    let text = cstr(STEER);
    assert_eq!(unsafe { impact_config_parse(text.as_ptr(), &mut config) }, ImpactStatus::Ok);
    let p = Pipeline::run(config);
    unsafe {
        let mut u = [f64::NAN; 1];
        let mut found = -1;
        let x = [-1.1];
        assert_eq!(
            impact_controller_input(p.controller, x.as_ptr(), 1, u.as_mut_ptr(), 1, &mut found),
            ImpactStatus::Ok
        );
        assert_eq!(found, 1);
        // steering towards the target on the right
        assert_eq!(u[0], 1.0);

        // the target cell is not in the table
        let x = [2.0];
        impact_controller_input(p.controller, x.as_ptr(), 1, u.as_mut_ptr(), 1, &mut found);
        assert_eq!(found, 0);

        let status = impact_controller_input(p.controller, x.as_ptr(), 2, u.as_mut_ptr(), 1, &mut found);
        assert_eq!(status, ImpactStatus::OutOfRange);
        let x = [0.0];
        let status = impact_controller_input(p.controller, x.as_ptr(), 1, u.as_mut_ptr(), 0, &mut found);
        assert_eq!(status, ImpactStatus::OutOfRange);
        assert!(last_error().contains("u holds 0"));
    }
}

#[test]
fn errors_are_reported_with_messages() {
    unsafe {
        let mut config = ptr::null_mut();
        assert_eq!(impact_config_parse(ptr::null(), &mut config), ImpactStatus::NullArgument);
        assert!(last_error().contains("source"));
        assert!(config.is_null());

        let bad = cstr("[state]\nlb = 0\n");
        assert_eq!(impact_config_parse(bad.as_ptr(), &mut config), ImpactStatus::Config);
        assert!(last_error().contains("ub"), "{}", last_error());

        let invalid = [0xffu8, 0];
        assert_eq!(impact_config_parse(invalid.as_ptr().cast(), &mut config), ImpactStatus::InvalidUtf8);

        let missing = cstr("/nonexistent/abstraction");
        let mut imdp = ptr::null_mut();
        assert_eq!(impact_imdp_load(missing.as_ptr(), &mut imdp), ImpactStatus::Io);

        // an abstraction used with a different configuration
        let selfloop = cstr(configs().join("toy_selfloop.cfg").to_str().unwrap());
        assert_eq!(impact_config_load(selfloop.as_ptr(), &mut config), ImpactStatus::Ok);
        let p = Pipeline::run(config);
        let mut other = ptr::null_mut();
        let steer = cstr(STEER);
        assert_eq!(impact_config_parse(steer.as_ptr(), &mut other), ImpactStatus::Ok);
        let mut c = ptr::null_mut();
        assert_eq!(impact_synthesize(other, p.imdp, 1, &mut c), ImpactStatus::Mismatch);
        assert!(c.is_null());
        impact_config_free(other);

        assert_eq!(
            impact_controller_row(p.controller, 5, ptr::null_mut(), ptr::null_mut(), ptr::null_mut()),
            ImpactStatus::OutOfRange
        );
        assert!(last_error().contains("row 5"));

        // freeing null is a no-op
        impact_config_free(ptr::null_mut());
        impact_imdp_free(ptr::null_mut());
        impact_controller_free(ptr::null_mut());
    }
}

#[test]
fn synthesis_failures_map_to_their_status() {
    let text = cstr(&format!(
        "{}max_iterations = 3\nepsilon = 1e-12\n",
        std::fs::read_to_string(configs().join("toy_selfloop.cfg"))
            .unwrap()
            .replace("epsilon = 1e-9\nhorizon = 2", "horizon = infinite")
    ));
    let mut config = ptr::null_mut();
    unsafe {
        assert_eq!(impact_config_parse(text.as_ptr(), &mut config), ImpactStatus::Ok, "{}", last_error());
        let mut imdp = ptr::null_mut();
        assert_eq!(impact_abstraction_build(config, 0, &mut imdp), ImpactStatus::Ok);
        let mut c = ptr::null_mut();
        assert_eq!(impact_synthesize(config, imdp, 0, &mut c), ImpactStatus::Synthesis);
        assert!(last_error().contains("converge"), "{}", last_error());
        impact_imdp_free(imdp);
        impact_config_free(config);
    }
}

fn header() -> String {
    std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("include/impact.h")).unwrap()
}

#[test]
fn header_declares_every_exported_function() {
    let source = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("src/lib.rs")).unwrap();
    let header = header();
    let mut count = 0;
    for line in source.lines() {
        let Some(rest) = line.split("extern \"C\" fn ").nth(1) else {
            continue;
        };
        let name = rest.split('(').next().unwrap();
        assert!(header.contains(&format!("{name}(")), "{name} missing from include/impact.h");
        count += 1;
    }
    assert!(count >= 15, "{count}");
}

/// Compiles `tests/smoke.c` against the header and the static library.
#[test]
fn c_program_links_and_runs() {
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    if Command::new(&cc).arg("--version").output().is_err() {
        eprintln!("skipping: no C compiler ({cc})");
        return;
    }
    // target/<profile>/deps/<this test> -> target/<profile>
    let exe = std::env::current_exe().unwrap();
    let profile_dir = exe.parent().unwrap().parent().unwrap();
    let lib = profile_dir.join("libimpact_ffi.a");
    if !lib.exists() {
        eprintln!("skipping: {} has not been built", lib.display());
        return;
    }
    let dir = TempDir::new().unwrap();
    let bin = dir.path().join("smoke");
    let manifest = Path::new(env!("CARGO_MANIFEST_DIR"));
    let status = Command::new(&cc)
        .args(["-std=c99", "-Wall", "-Werror", "-I"])
        .arg(manifest.join("include"))
        .arg(manifest.join("tests/smoke.c"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .status()
        .unwrap();
    assert!(status.success());
    let out = Command::new(&bin).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.trim(), format!("{} 0.640000000000 0.640000000000", env!("CARGO_PKG_VERSION")));
}
