//! Decimation and the offset-based window sampler.

use super::DatasetConfig;
use crate::control::TrajectoryLog;

/// Span of one window in seconds: `seq_len · stride / 1000`.
pub fn effective_time(seq_len: usize, stride: usize) -> f64 {
    (seq_len as u64 * stride as u64) as f64 / 1000.0
}

/// Fraction of raw frames used when every offset is sampled:
/// `(stride / ssr) / stride`.
pub fn utilization(stride: usize, ssr: usize) -> f64 {
    (stride / ssr) as f64 / stride as f64
}

/// One window: raw frame indices `offset + k·stride` for consecutive `k`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Window {
    pub offset: usize,
    /// Index of the window within its offset family.
    pub index: usize,
    pub frames: Vec<usize>,
}

/// Windows over a log of `n_frames` raw frames.
///
/// For each offset `o ∈ {0, ssr, …, stride − ssr}` the decimated series
/// `o, o + stride, …` is cut into consecutive, non-overlapping windows of
/// `seq_len` frames; an incomplete tail is dropped.
pub fn offset_windows(n_frames: usize, stride: usize, ssr: usize, seq_len: usize) -> Vec<Window> {
    let mut out = Vec::new();
    if stride == 0 || ssr == 0 || seq_len == 0 {
        return out;
    }
    for offset in (0..stride).step_by(ssr) {
        if offset >= n_frames {
            break;
        }
        let kept = (n_frames - offset).div_ceil(stride);
        for w in 0..kept / seq_len {
            let frames = (0..seq_len)
                .map(|k| offset + (w * seq_len + k) * stride)
                .collect();
            out.push(Window {
                offset,
                index: w,
                frames,
            });
        }
    }
    out
}

/// Number of windows [`offset_windows`] would return, without allocating.
pub fn count_windows(n_frames: usize, stride: usize, ssr: usize, seq_len: usize) -> usize {
    if stride == 0 || ssr == 0 || seq_len == 0 {
        return 0;
    }
    (0..stride)
        .step_by(ssr)
        .take_while(|&o| o < n_frames)
        .map(|o| (n_frames - o).div_ceil(stride) / seq_len)
        .sum()
}

/// Windows of one log under `cfg`. A log shorter than one window yields
/// none.
pub fn offset_sample(log: &TrajectoryLog, cfg: &DatasetConfig) -> Vec<Window> {
    offset_windows(log.len(), cfg.stride, cfg.ssr, cfg.seq_len)
}

/// Linear interpolation of a frame-major series (`width` values per frame,
/// spacing `dt`) at time `t`, clamped to the recorded span.
pub fn resample_linear(series: &[f64], width: usize, dt: f64, t: f64) -> Vec<f64> {
    let n = if width == 0 { 0 } else { series.len() / width };
    if n == 0 {
        return vec![0.0; width];
    }
    let mut pos = (t / dt).clamp(0.0, (n - 1) as f64);
    // snap times that land on a tick up to rounding
    if (pos - pos.round()).abs() < 1e-9 {
        pos = pos.round();
    }
    let i0 = pos.floor() as usize;
    let frac = pos - i0 as f64;
    let row = |i: usize| &series[i * width..(i + 1) * width];
    if frac == 0.0 || i0 + 1 >= n {
        return row(i0).to_vec();
    }
    row(i0)
        .iter()
        .zip(row(i0 + 1))
        .map(|(a, b)| a + frac * (b - a))
        .collect()
}
