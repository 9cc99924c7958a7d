//! Checkpoint schedules.

/// Step indices `0 ..= n_steps` spaced logarithmically with `per_decade`
/// points per factor of ten. Always contains 0, 1 and `n_steps`.
pub fn log_checkpoints(n_steps: usize, per_decade: usize) -> Vec<usize> {
    let mut out = vec![0];
    if n_steps == 0 {
        return out;
    }
    let per_decade = per_decade.max(1) as f64;
    let top = (n_steps as f64).log10();
    let count = (top * per_decade).ceil() as usize;
    for i in 0..=count {
        let s = 10f64.powf(i as f64 / per_decade).round() as usize;
        if s >= 1 && s <= n_steps && *out.last().unwrap() != s {
            out.push(s);
        }
    }
    if *out.last().unwrap() != n_steps {
        out.push(n_steps);
    }
    out
}
