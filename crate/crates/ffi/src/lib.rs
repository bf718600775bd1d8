//! C ABI for the solver: opaque scenario handles, status codes, and a
//! thread-local last-error message. The header `include/cutmix.h` is
//! generated at build time.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use cutmix::driver;
use cutmix::scenario::Scenario;
use cutmix::ErrorCategory;

/// Status code of every API call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CmStatus {
    CmOk = 0,
    CmConfigError = 1,
    CmGeometryError = 2,
    CmAssemblyError = 3,
    CmSolverError = 4,
    CmIoError = 5,
    CmInvalidArgument = 6,
    CmInternalError = 7,
}

/// Opaque scenario handle.
pub struct CmScenario {
    inner: Scenario,
}

/// Headline numbers of one completed run.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct CmRunSummary {
    /// Free, active degrees of freedom of the reduced system.
    pub dofs: u64,
    pub h_min: f64,
    pub h_max: f64,
    /// Condition estimate; NaN when the scenario disables it.
    pub condition: f64,
    /// Iteration count of the linear solve (0 for the direct path).
    pub iterations: u64,
    /// Relative residual of the linear solve.
    pub residual: f64,
    /// Strain energy of the computed field.
    pub energy: f64,
}

/// Headline numbers of a geometry validation.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct CmGeometrySummary {
    pub matrix_area: f64,
    pub pore_area: f64,
    pub interface_length: f64,
    pub analytic_pore_area: f64,
    pub warning_count: u64,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(message: &str) {
    let sanitized = message.replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).unwrap_or_default();
    });
}

fn status_of(category: ErrorCategory) -> CmStatus {
    match category {
        ErrorCategory::Config => CmStatus::CmConfigError,
        ErrorCategory::Geometry => CmStatus::CmGeometryError,
        ErrorCategory::Assembly => CmStatus::CmAssemblyError,
        ErrorCategory::Solver => CmStatus::CmSolverError,
        ErrorCategory::Io => CmStatus::CmIoError,
    }
}

fn guard(f: impl FnOnce() -> CmStatus) -> CmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => {
            set_error("internal panic");
            CmStatus::CmInternalError
        }
    }
}

/// # Safety
/// `ptr` must be null or a valid NUL-terminated string.
unsafe fn cstr<'a>(ptr: *const c_char) -> Option<&'a str> {
    if ptr.is_null() {
        return None;
    }
    CStr::from_ptr(ptr).to_str().ok()
}

/// Message of the most recent failure on this thread. Valid until the
/// next failing call from the same thread.
#[no_mangle]
pub extern "C" fn cm_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn cm_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Loads a scenario file. On success stores a handle in `out`; the caller
/// frees it with `cm_scenario_free`.
///
/// # Safety
/// `path` must be a valid NUL-terminated string; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cm_scenario_load(
    path: *const c_char,
    out: *mut *mut CmScenario,
) -> CmStatus {
    guard(|| {
        let (Some(path), false) = (cstr(path), out.is_null()) else {
            set_error("null argument");
            return CmStatus::CmInvalidArgument;
        };
        match Scenario::load(Path::new(path)) {
            Ok(inner) => {
                *out = Box::into_raw(Box::new(CmScenario { inner }));
                CmStatus::CmOk
            }
            Err(e) => {
                set_error(&e.to_string());
                status_of(e.category())
            }
        }
    })
}

/// Parses a scenario from TOML text; relative paths resolve against
/// `base_dir` (may be null for the current directory).
///
/// # Safety
/// Pointer arguments must be null or valid NUL-terminated strings; `out`
/// must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cm_scenario_from_toml(
    text: *const c_char,
    base_dir: *const c_char,
    out: *mut *mut CmScenario,
) -> CmStatus {
    guard(|| {
        let (Some(text), false) = (cstr(text), out.is_null()) else {
            set_error("null argument");
            return CmStatus::CmInvalidArgument;
        };
        let base = cstr(base_dir).unwrap_or(".");
        match Scenario::from_toml_str(text, Path::new(base)) {
            Ok(inner) => {
                *out = Box::into_raw(Box::new(CmScenario { inner }));
                CmStatus::CmOk
            }
            Err(e) => {
                set_error(&e.to_string());
                status_of(e.category())
            }
        }
    })
}

/// Releases a scenario handle. Null is accepted.
///
/// # Safety
/// `scenario` must be null or a pointer from `cm_scenario_load` /
/// `cm_scenario_from_toml` that has not been freed.
#[no_mangle]
pub unsafe extern "C" fn cm_scenario_free(scenario: *mut CmScenario) {
    if !scenario.is_null() {
        drop(Box::from_raw(scenario));
    }
}

/// Runs a scenario. Artifacts are written under `out_dir` when it is not
/// null; `summary` (optional) receives the headline numbers.
///
/// # Safety
/// `scenario` must be a live handle; `out_dir` null or a valid string;
/// `summary` null or a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cm_run(
    scenario: *const CmScenario,
    out_dir: *const c_char,
    summary: *mut CmRunSummary,
) -> CmStatus {
    guard(|| {
        let Some(handle) = scenario.as_ref() else {
            set_error("null scenario");
            return CmStatus::CmInvalidArgument;
        };
        let dir_str = cstr(out_dir);
        let dir = dir_str.map(Path::new);
        match driver::run(&handle.inner, dir) {
            Ok(result) => {
                if !summary.is_null() {
                    *summary = CmRunSummary {
                        dofs: result.system.free_dofs().len() as u64,
                        h_min: result.h_min,
                        h_max: result.h_max,
                        condition: result.kappa.unwrap_or(f64::NAN),
                        iterations: result.report.iterations as u64,
                        residual: result.report.residual,
                        energy: result.energy,
                    };
                }
                CmStatus::CmOk
            }
            Err(e) => {
                set_error(&e.to_string());
                status_of(e.category())
            }
        }
    })
}

/// Effective macro modulus of the scenario's pore population.
///
/// # Safety
/// `scenario` must be a live handle; `effective` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cm_homogenize(
    scenario: *const CmScenario,
    effective: *mut f64,
) -> CmStatus {
    guard(|| {
        let (Some(handle), false) = (scenario.as_ref(), effective.is_null()) else {
            set_error("null argument");
            return CmStatus::CmInvalidArgument;
        };
        match driver::homogenize_report(&handle.inner) {
            Ok(report) => {
                *effective = report.effective;
                CmStatus::CmOk
            }
            Err(e) => {
                set_error(&e.to_string());
                status_of(e.category())
            }
        }
    })
}

/// Discrete-geometry check of the scenario.
///
/// # Safety
/// `scenario` must be a live handle; `summary` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cm_validate(
    scenario: *const CmScenario,
    seed: u64,
    summary: *mut CmGeometrySummary,
) -> CmStatus {
    guard(|| {
        let (Some(handle), false) = (scenario.as_ref(), summary.is_null()) else {
            set_error("null argument");
            return CmStatus::CmInvalidArgument;
        };
        match driver::validate(&handle.inner, seed) {
            Ok(report) => {
                *summary = CmGeometrySummary {
                    matrix_area: report.matrix_area,
                    pore_area: report.pore_area,
                    interface_length: report.interface_length,
                    analytic_pore_area: report.analytic_pore_area,
                    warning_count: report.warnings.len() as u64,
                };
                CmStatus::CmOk
            }
            Err(e) => {
                set_error(&e.to_string());
                status_of(e.category())
            }
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::ffi::CString;
    use std::ptr;

    const SCENARIO: &str = r#"
name = "ffi"

[domain]
min = [0.0, 0.0]
max = [2.0, 1.0]

[mesh]
nx = 8
ny = 4

[solver]
condition = false

[materials]
micro = { e = 1.0, nu = 0.0 }
macro = { e = 1.0, nu = 0.0 }

[bc]
clamped = "bottom"
loaded = "top"
displacement = [0.0, -0.1]
"#;

    fn load_inline(text: &str) -> *mut CmScenario {
        let c = CString::new(text).unwrap();
        let mut handle = ptr::null_mut();
        let status = unsafe { cm_scenario_from_toml(c.as_ptr(), ptr::null(), &mut handle) };
        assert_eq!(status, CmStatus::CmOk);
        assert!(!handle.is_null());
        handle
    }

    #[test]
    fn run_through_the_c_abi() {
        let handle = load_inline(SCENARIO);
        let mut summary = CmRunSummary {
            dofs: 0,
            h_min: 0.0,
            h_max: 0.0,
            condition: 0.0,
            iterations: 0,
            residual: 0.0,
            energy: 0.0,
        };
        let dir = std::env::temp_dir().join("cutmix_ffi_run");
        let _ = std::fs::remove_dir_all(&dir);
        let c_dir = CString::new(dir.to_str().unwrap()).unwrap();
        let status = unsafe { cm_run(handle, c_dir.as_ptr(), &mut summary) };
        assert_eq!(status, CmStatus::CmOk);
        assert!(summary.dofs > 0);
        assert!(summary.residual < 1e-10);
        assert!(summary.condition.is_nan());
        assert!(dir.join("fields.vtk").exists());
        unsafe { cm_scenario_free(handle) };
        let _ = std::fs::remove_dir_all(&dir);
    }

    #[test]
    fn error_paths_set_status_and_message() {
        let mut handle = ptr::null_mut();
        let missing = CString::new("/nonexistent/scenario.toml").unwrap();
        let status = unsafe { cm_scenario_load(missing.as_ptr(), &mut handle) };
        assert_eq!(status, CmStatus::CmIoError);
        let msg = unsafe { CStr::from_ptr(cm_last_error_message()) };
        assert!(!msg.to_bytes().is_empty());

        let bad = CString::new("name = \"broken\"").unwrap();
        let status = unsafe { cm_scenario_from_toml(bad.as_ptr(), ptr::null(), &mut handle) };
        assert_eq!(status, CmStatus::CmConfigError);

        let status = unsafe { cm_scenario_load(ptr::null(), &mut handle) };
        assert_eq!(status, CmStatus::CmInvalidArgument);

        let status = unsafe { cm_run(ptr::null(), ptr::null(), ptr::null_mut()) };
        assert_eq!(status, CmStatus::CmInvalidArgument);
    }

    #[test]
    fn homogenize_and_validate_through_the_c_abi() {
        let text = SCENARIO.replace(
            "[solver]",
            "[[pores]]\ncenter = [1.0, 0.5]\nradius = 0.2\n\n[solver]",
        );
        let handle = load_inline(&text);

        let mut effective = 0.0;
        let status = unsafe { cm_homogenize(handle, &mut effective) };
        assert_eq!(status, CmStatus::CmOk);
        assert!(effective > 0.0 && effective < 1.0);

        let mut geometry = CmGeometrySummary {
            matrix_area: 0.0,
            pore_area: 0.0,
            interface_length: 0.0,
            analytic_pore_area: 0.0,
            warning_count: 0,
        };
        let status = unsafe { cm_validate(handle, 0, &mut geometry) };
        assert_eq!(status, CmStatus::CmOk);
        assert!(geometry.pore_area > 0.0);
        unsafe { cm_scenario_free(handle) };
    }

    #[test]
    fn null_free_is_a_no_op() {
        unsafe { cm_scenario_free(ptr::null_mut()) };
    }

    #[test]
    fn version_is_nul_terminated() {
        let v = unsafe { CStr::from_ptr(cm_version()) };
        assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
    }
}
