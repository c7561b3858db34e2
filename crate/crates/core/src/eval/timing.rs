use std::time::Instant;

use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub label: String,
    pub cpu_seconds: f64,
    pub wall_seconds: f64,
}

fn clock_seconds(clock: libc::clockid_t) -> f64 {
    let mut ts = libc::timespec { tv_sec: 0, tv_nsec: 0 };
    // SAFETY: `ts` is a valid, writable timespec.
    let rc = unsafe { libc::clock_gettime(clock, &mut ts) };
    if rc != 0 {
        return f64::NAN;
    }
    ts.tv_sec as f64 + ts.tv_nsec as f64 * 1e-9
}

/// CPU time consumed by all threads of this process.
pub fn cpu_time_process() -> f64 {
    clock_seconds(libc::CLOCK_PROCESS_CPUTIME_ID)
}

/// CPU time consumed by the calling thread.
pub fn cpu_time_thread() -> f64 {
    clock_seconds(libc::CLOCK_THREAD_CPUTIME_ID)
}

fn measure<R>(label: &str, clock: fn() -> f64, f: impl FnOnce() -> R) -> (R, StageTiming) {
    let (cpu0, wall0) = (clock(), Instant::now());
    let out = f();
    let timing = StageTiming {
        label: label.to_string(),
        cpu_seconds: (clock() - cpu0).max(0.0),
        wall_seconds: wall0.elapsed().as_secs_f64(),
    };
    log::debug!("{label}: {:.4}s cpu, {:.4}s wall", timing.cpu_seconds, timing.wall_seconds);
    (out, timing)
}

/// Runs `f`, reporting process CPU time and wall time.
pub fn time_stage<R>(label: &str, f: impl FnOnce() -> R) -> (R, StageTiming) {
    measure(label, cpu_time_process, f)
}

/// Like [`time_stage`] but charges only the calling thread, so concurrent
/// work on other threads is not counted.
pub fn time_stage_thread<R>(label: &str, f: impl FnOnce() -> R) -> (R, StageTiming) {
    measure(label, cpu_time_thread, f)
}
