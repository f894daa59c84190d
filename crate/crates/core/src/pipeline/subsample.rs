use crate::ingest::ObservationStream;

/// Reduces a stream to `target_fps`.
///
/// Ideal ticks are anchored at the first frame stamp: `t0 + n / target_fps`.
/// For each tick, the nearest frame later than the previously selected one
/// is taken if it lies strictly within half a tick period; ticks with no such frame
/// are rejected. Ties go to the earlier frame.
pub fn subsample(stream: &ObservationStream, target_fps: f64) -> ObservationStream {
    subsample_with_stats(stream, target_fps).0
}

/// Like [`subsample`], also returning the number of rejected ticks.
pub fn subsample_with_stats(stream: &ObservationStream, target_fps: f64) -> (ObservationStream, u64) {
    assert!(target_fps > 0.0, "target_fps must be positive");
    let frames = stream.frames();
    let Some(first) = frames.first() else {
        return (ObservationStream::default(), 0);
    };
    let t0 = first.stamp.micros();
    let period_us = 1e6 / target_fps;
    let half_us = 0.5 * period_us;
    let t_last = frames.last().map(|f| f.stamp.micros()).unwrap_or(t0) as f64;
    // a tick is only generated while its window can still reach the last frame,
    // which keeps the tick set stable under re-subsampling
    let n_ticks = (((t_last - t0 as f64) + half_us) / period_us).ceil().max(1.0) as u64;

    let mut selected = Vec::new();
    let mut rejected = 0u64;
    let mut cursor = 0usize; // first index not yet eligible
    for n in 0..n_ticks {
        let tick = t0 as f64 + n as f64 * period_us;
        // first eligible frame at or after the tick
        let mut hi = cursor;
        while hi < frames.len() && (frames[hi].stamp.micros() as f64) < tick {
            hi += 1;
        }
        let mut best: Option<(usize, f64)> = None;
        for idx in [hi.checked_sub(1), Some(hi)].into_iter().flatten() {
            if idx < cursor || idx >= frames.len() {
                continue;
            }
            let dist = (frames[idx].stamp.micros() as f64 - tick).abs();
            if best.is_none_or(|(_, d)| dist < d) {
                best = Some((idx, dist));
            }
        }
        match best {
            Some((idx, dist)) if dist < half_us => {
                selected.push(frames[idx].clone());
                cursor = idx + 1;
            }
            _ => rejected += 1,
        }
    }
    let out = ObservationStream::new(selected).expect("selection preserves order");
    (out, rejected)
}
