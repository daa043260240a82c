//! Monotonic wall-clock timing in milliseconds. Timings are reported, never
//! asserted; on wasm targets (no monotonic clock) they read as zero.

#[cfg(not(target_arch = "wasm32"))]
pub fn now() -> f64 {
    use std::time::Instant;
    use std::sync::OnceLock;
    static EPOCH: OnceLock<Instant> = OnceLock::new();
    let epoch = EPOCH.get_or_init(Instant::now);
    epoch.elapsed().as_secs_f64() * 1e3
}

#[cfg(target_arch = "wasm32")]
pub fn now() -> f64 {
    0.0
}

/// Runs a closure and returns its result with the elapsed milliseconds.
pub fn timed<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let start = now();
    let out = f();
    (out, now() - start)
}
