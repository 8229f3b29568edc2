//! C ABI over the routing-game equilibrium oracle: build a problem (the
//! built-in benchmark or a TOML network description), solve it to a target
//! gap, certify externally supplied flows, and read the results back through
//! accessors. Handles are opaque; every fallible call returns an error code.

use std::ffi::CStr;
use std::os::raw::c_char;

use sncg::oracle::{ConvexFlowProblem, OracleResult};
use sncg::routing::{figure1_description, NetworkDescription, PathFlow};

/// Status codes returned by every fallible function.
#[repr(i32)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SncgStatus {
    Ok = 0,
    NullPointer = -1,
    InvalidArgument = -2,
    ParseError = -3,
    SolveFailed = -4,
}

/// Opaque equilibrium problem handle.
pub struct SncgProblem {
    inner: ConvexFlowProblem,
}

/// Opaque solve-result handle.
pub struct SncgResult {
    inner: OracleResult,
}

/// Creates the built-in two-population benchmark problem with unit masses.
/// The handle must be released with `sncg_problem_free`.
#[no_mangle]
pub extern "C" fn sncg_problem_new_benchmark(out: *mut *mut SncgProblem) -> SncgStatus {
    if out.is_null() {
        return SncgStatus::NullPointer;
    }
    let network = figure1_description().build().expect("benchmark is valid");
    let masses = vec![1.0; network.populations.len()];
    let handle = Box::new(SncgProblem {
        inner: ConvexFlowProblem::new(network, masses),
    });
    unsafe { *out = Box::into_raw(handle) };
    SncgStatus::Ok
}

/// Creates a problem from a TOML network description (`nodes`, `edges`,
/// `populations` tables) and per-population masses.
///
/// # Safety
/// `toml` must be a valid NUL-terminated string; `masses` must point to
/// `n_masses` doubles.
#[no_mangle]
pub unsafe extern "C" fn sncg_problem_from_toml(
    toml: *const c_char,
    masses: *const f64,
    n_masses: usize,
    out: *mut *mut SncgProblem,
) -> SncgStatus {
    if toml.is_null() || masses.is_null() || out.is_null() {
        return SncgStatus::NullPointer;
    }
    let text = match CStr::from_ptr(toml).to_str() {
        Ok(t) => t,
        Err(_) => return SncgStatus::ParseError,
    };
    let desc: NetworkDescription = match toml_parse(text) {
        Ok(d) => d,
        Err(_) => return SncgStatus::ParseError,
    };
    let network = match desc.build() {
        Ok(n) => n,
        Err(_) => return SncgStatus::ParseError,
    };
    if n_masses != network.populations.len() {
        return SncgStatus::InvalidArgument;
    }
    let masses = std::slice::from_raw_parts(masses, n_masses).to_vec();
    if masses.iter().any(|&m| !(m > 0.0) || !m.is_finite()) {
        return SncgStatus::InvalidArgument;
    }
    *out = Box::into_raw(Box::new(SncgProblem {
        inner: ConvexFlowProblem::new(network, masses),
    }));
    SncgStatus::Ok
}

fn toml_parse(text: &str) -> Result<NetworkDescription, String> {
    sncg::harness::parse_network_toml(text)
}

/// Releases a problem handle. Null is ignored.
///
/// # Safety
/// `problem` must be a handle from `sncg_problem_new_benchmark` or
/// `sncg_problem_from_toml`, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sncg_problem_free(problem: *mut SncgProblem) {
    if !problem.is_null() {
        drop(Box::from_raw(problem));
    }
}

/// Minimizes the potential to the requested gap tolerance. On success the
/// result handle must be released with `sncg_result_free`.
///
/// # Safety
/// `problem` must be a live problem handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sncg_solve(
    problem: *const SncgProblem,
    tol: f64,
    max_iters: usize,
    out: *mut *mut SncgResult,
) -> SncgStatus {
    if problem.is_null() || out.is_null() {
        return SncgStatus::NullPointer;
    }
    if !(tol > 0.0) || max_iters == 0 {
        return SncgStatus::InvalidArgument;
    }
    let result = (*problem).inner.minimize_potential(tol, max_iters);
    if !result.converged {
        return SncgStatus::SolveFailed;
    }
    *out = Box::into_raw(Box::new(SncgResult { inner: result }));
    SncgStatus::Ok
}

/// Releases a result handle. Null is ignored.
///
/// # Safety
/// `result` must be a handle from `sncg_solve`, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sncg_result_free(result: *mut SncgResult) {
    if !result.is_null() {
        drop(Box::from_raw(result));
    }
}

/// Number of populations in a solved problem.
///
/// # Safety
/// `result` must be a live result handle.
#[no_mangle]
pub unsafe extern "C" fn sncg_result_num_populations(result: *const SncgResult) -> usize {
    if result.is_null() {
        return 0;
    }
    (*result).inner.flows.flows.len()
}

/// Number of paths of one population (0 if out of range).
///
/// # Safety
/// `result` must be a live result handle.
#[no_mangle]
pub unsafe extern "C" fn sncg_result_num_paths(
    result: *const SncgResult,
    population: usize,
) -> usize {
    if result.is_null() {
        return 0;
    }
    let result = &*result;
    result.inner.flows.flows.get(population).map_or(0, |f| f.len())
}

/// Equilibrium flow on one path.
///
/// # Safety
/// `result` must be a live result handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sncg_result_flow(
    result: *const SncgResult,
    population: usize,
    path: usize,
    out: *mut f64,
) -> SncgStatus {
    if result.is_null() || out.is_null() {
        return SncgStatus::NullPointer;
    }
    let result = &*result;
    match result.inner.flows.flows.get(population).and_then(|f| f.get(path)) {
        Some(&v) => {
            *out = v;
            SncgStatus::Ok
        }
        None => SncgStatus::InvalidArgument,
    }
}

/// Cost of one path at the equilibrium flows.
///
/// # Safety
/// `result` must be a live result handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sncg_result_cost(
    result: *const SncgResult,
    population: usize,
    path: usize,
    out: *mut f64,
) -> SncgStatus {
    if result.is_null() || out.is_null() {
        return SncgStatus::NullPointer;
    }
    let result = &*result;
    match result.inner.path_costs.get(population).and_then(|c| c.get(path)) {
        Some(&v) => {
            *out = v;
            SncgStatus::Ok
        }
        None => SncgStatus::InvalidArgument,
    }
}

/// Residual unilateral-deviation gap of the solution.
///
/// # Safety
/// `result` must be a live result handle.
#[no_mangle]
pub unsafe extern "C" fn sncg_result_epsilon_gap(result: *const SncgResult) -> f64 {
    if result.is_null() {
        return f64::NAN;
    }
    (*result).inner.epsilon_gap
}

/// Potential value at the solution.
///
/// # Safety
/// `result` must be a live result handle.
#[no_mangle]
pub unsafe extern "C" fn sncg_result_potential(result: *const SncgResult) -> f64 {
    if result.is_null() {
        return f64::NAN;
    }
    (*result).inner.potential
}

/// Certifies externally supplied flows: writes the maximum cost reduction
/// any agent can obtain by unilateral deviation. `flows` holds every
/// population's path flows concatenated in order; `path_counts` gives the
/// number of paths per population.
///
/// # Safety
/// `problem` must be a live problem handle; `flows` must point to
/// sum(path_counts) doubles; `path_counts` to `n_populations` entries;
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sncg_epsilon_gap(
    problem: *const SncgProblem,
    flows: *const f64,
    path_counts: *const usize,
    n_populations: usize,
    out: *mut f64,
) -> SncgStatus {
    if problem.is_null() || flows.is_null() || path_counts.is_null() || out.is_null() {
        return SncgStatus::NullPointer;
    }
    let problem = &(*problem).inner;
    if n_populations != problem.network.populations.len() {
        return SncgStatus::InvalidArgument;
    }
    let counts = std::slice::from_raw_parts(path_counts, n_populations);
    for (p, routes) in problem.network.populations.iter().enumerate() {
        if counts[p] != routes.paths.len() {
            return SncgStatus::InvalidArgument;
        }
    }
    let total: usize = counts.iter().sum();
    let flat = std::slice::from_raw_parts(flows, total);
    let mut path_flow = PathFlow { flows: Vec::with_capacity(n_populations) };
    let mut offset = 0;
    for &c in counts {
        path_flow.flows.push(flat[offset..offset + c].to_vec());
        offset += c;
    }
    let masses = problem.masses.clone();
    if path_flow.validate(&problem.network, &masses).is_err() {
        return SncgStatus::InvalidArgument;
    }
    *out = problem.epsilon_gap(&path_flow);
    SncgStatus::Ok
}
