//! Post-processing of simulated channels: peak-based oscillation frequency,
//! fault dip, stability verdict and phase lag between channels.
//!
//! The frequency of a decaying swing is estimated from the time between
//! successive peaks, `f ≈ 1/Δt`, averaged over four to ten consecutive
//! intervals. Channels are first detrended by subtracting a centred moving
//! average so slow drifts do not hide the small late peaks.

use crate::error::{Error, Result};

pub const MIN_INTERVALS: usize = 4;
pub const MAX_INTERVALS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalysisSettings {
    /// Minimum peak prominence as a fraction of the window's peak-to-peak.
    pub prominence_fraction: f64,
    /// Absolute prominence floor in channel units, so a channel that is flat
    /// to rounding does not report noise as oscillation.
    pub min_prominence: f64,
    /// Moving-average window removed before peak search, seconds
    /// (0 disables detrending).
    pub detrend_window: f64,
    /// Measurement window starts this long after fault clearing.
    pub start_offset: f64,
}

impl Default for AnalysisSettings {
    fn default() -> Self {
        AnalysisSettings {
            prominence_fraction: 1e-3,
            min_prominence: 1e-9,
            detrend_window: 0.5,
            start_offset: 0.2,
        }
    }
}

/// Peak-to-peak range of a slice.
pub fn peak_to_peak(x: &[f64]) -> f64 {
    let (lo, hi) = x
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if lo.is_finite() {
        hi - lo
    } else {
        0.0
    }
}

/// Prominence of the local maximum at `i`.
fn prominence(x: &[f64], i: usize) -> f64 {
    let p = x[i];
    let mut left = p;
    for &v in x[..i].iter().rev() {
        if v > p {
            break;
        }
        left = left.min(v);
    }
    let mut right = p;
    for &v in &x[i + 1..] {
        if v > p {
            break;
        }
        right = right.min(v);
    }
    p - left.max(right)
}

/// Times of local maxima with at least `min_prominence`, refined by a
/// parabola through the three samples around each maximum. Flat tops are
/// reported at their centre sample.
pub fn find_peaks(time: &[f64], x: &[f64], min_prominence: f64) -> Vec<f64> {
    assert_eq!(time.len(), x.len(), "time and channel lengths differ");
    let n = x.len();
    let mut peaks = Vec::new();
    let mut i = 1;
    while i + 1 < n {
        if x[i] > x[i - 1] {
            // walk over a possible plateau
            let mut j = i;
            while j + 1 < n && x[j + 1] == x[i] {
                j += 1;
            }
            if j + 1 < n && x[j + 1] < x[i] {
                let c = (i + j) / 2;
                if prominence(x, c) >= min_prominence {
                    peaks.push(refine(time, x, c));
                }
            }
            i = j + 1;
        } else {
            i += 1;
        }
    }
    peaks
}

fn refine(time: &[f64], x: &[f64], c: usize) -> f64 {
    let (y0, y1, y2) = (x[c - 1], x[c], x[c + 1]);
    let denom = y0 - 2.0 * y1 + y2;
    if denom == 0.0 {
        return time[c];
    }
    let offset = (0.5 * (y0 - y2) / denom).clamp(-0.5, 0.5);
    let h = if offset >= 0.0 { time[c + 1] - time[c] } else { time[c] - time[c - 1] };
    time[c] + offset * h
}

/// Subtracts a centred moving average of `window` samples, padding the
/// edges with the end values.
pub fn detrend(x: &[f64], window: usize) -> Vec<f64> {
    if window < 2 || x.is_empty() {
        return x.to_vec();
    }
    let half = window / 2;
    let n = x.len();
    let at = |k: isize| x[k.clamp(0, n as isize - 1) as usize];
    let w = (2 * half + 1) as f64;
    let mut sum: f64 = (-(half as isize)..=half as isize).map(at).sum();
    let mut out = Vec::with_capacity(n);
    for i in 0..n as isize {
        out.push(x[i as usize] - sum / w);
        sum += at(i + half as isize + 1) - at(i - half as isize);
    }
    out
}

/// Mean of `1/Δt` over the first `n` intervals between `peaks`.
pub fn oscillation_frequency(peaks: &[f64], n: usize) -> Result<f64> {
    if !(MIN_INTERVALS..=MAX_INTERVALS).contains(&n) {
        return Err(Error::InvalidParameter {
            field: "n".into(),
            reason: format!("must lie in {MIN_INTERVALS}..={MAX_INTERVALS}"),
        });
    }
    if peaks.len() < n + 1 {
        return Err(Error::InsufficientPeaks {
            found: peaks.len(),
            needed: n + 1,
        });
    }
    Ok(peaks.windows(2).take(n).map(|w| 1.0 / (w[1] - w[0])).sum::<f64>() / n as f64)
}

/// Global minimum of `x` over `[t0, t1]` and the first time it occurs.
pub fn dip(time: &[f64], x: &[f64], t0: f64, t1: f64) -> Option<(f64, f64)> {
    time.iter()
        .zip(x)
        .filter(|(t, _)| **t >= t0 && **t <= t1)
        .fold(None, |best: Option<(f64, f64)>, (&t, &v)| match best {
            Some((bv, _)) if bv <= v => best,
            _ => Some((v, t)),
        })
}

fn window(time: &[f64], t0: f64, t1: f64) -> std::ops::Range<usize> {
    let a = time.partition_point(|t| *t < t0);
    let b = time.partition_point(|t| *t <= t1);
    a..b.max(a)
}

#[derive(Debug, Clone, PartialEq)]
pub struct OscillationReport {
    pub channel: String,
    pub peak_times: Vec<f64>,
    pub interval_frequencies: Vec<f64>,
    /// Averaged frequency, absent when fewer than five peaks were found.
    pub frequency: Option<f64>,
    pub intervals_used: usize,
    pub min: f64,
    pub max: f64,
    pub stable: bool,
}

/// Peak analysis of one channel from `t_start` on; `t_clear` anchors the
/// stability verdict.
pub fn analyze_channel(
    name: &str,
    time: &[f64],
    x: &[f64],
    t_clear: f64,
    settings: &AnalysisSettings,
) -> OscillationReport {
    let t_start = t_clear + settings.start_offset;
    let r = window(time, t_start, f64::INFINITY);
    let (tw, xw) = (&time[r.clone()], &x[r]);
    let dt = if time.len() > 1 { time[1] - time[0] } else { 1.0 };
    let samples = (settings.detrend_window / dt).round() as usize;
    let y = detrend(xw, samples);
    let prominence = (settings.prominence_fraction * peak_to_peak(&y)).max(settings.min_prominence);
    let peaks = find_peaks(tw, &y, prominence);
    let interval_frequencies: Vec<f64> = peaks.windows(2).map(|w| 1.0 / (w[1] - w[0])).collect();
    let n = interval_frequencies.len().min(MAX_INTERVALS);
    let frequency = oscillation_frequency(&peaks, n.max(MIN_INTERVALS)).ok();
    OscillationReport {
        channel: name.to_string(),
        peak_times: peaks,
        intervals_used: if frequency.is_some() { n } else { 0 },
        interval_frequencies,
        frequency,
        min: xw.iter().copied().fold(f64::INFINITY, f64::min),
        max: xw.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        stable: is_stable(time, x, t_clear),
    }
}

/// Settling verdict: the last second's peak-to-peak is below 10 % of the
/// peak-to-peak over the first second after clearing. `None` when the
/// record ends less than two seconds after clearing.
pub fn stability_verdict(time: &[f64], x: &[f64], t_clear: f64) -> Option<bool> {
    let &t_end = time.last()?;
    if t_end < t_clear + 2.0 {
        return None;
    }
    let first = peak_to_peak(&x[window(time, t_clear, t_clear + 1.0)]);
    let last = peak_to_peak(&x[window(time, t_end - 1.0, t_end)]);
    Some(last.is_finite() && first.is_finite() && last <= 0.1 * first)
}

pub fn is_stable(time: &[f64], x: &[f64], t_clear: f64) -> bool {
    stability_verdict(time, x, t_clear) == Some(true)
}

/// Lag of `b` behind `a` at the cross-correlation maximum, searched up to
/// `max_lag` seconds either way, refined below the sample step.
pub fn correlation_lag(a: &[f64], b: &[f64], dt: f64, max_lag: f64) -> f64 {
    let n = a.len().min(b.len());
    let m = ((max_lag / dt).round() as isize).min(n as isize - 3).max(1);
    // Pearson coefficient over the overlap, so the shrinking overlap does
    // not bias the peak towards zero lag
    let corr = |l: isize| -> f64 {
        let (s0, s1) = if l >= 0 { (0, n - l as usize) } else { ((-l) as usize, n) };
        let xa = &a[s0..s1];
        let xb = &b[(s0 as isize + l) as usize..(s1 as isize + l) as usize];
        let k = xa.len() as f64;
        let (ma, mb) = (xa.iter().sum::<f64>() / k, xb.iter().sum::<f64>() / k);
        let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
        for (x, y) in xa.iter().zip(xb) {
            sab += (x - ma) * (y - mb);
            saa += (x - ma) * (x - ma);
            sbb += (y - mb) * (y - mb);
        }
        let d = (saa * sbb).sqrt();
        if d > 0.0 {
            sab / d
        } else {
            0.0
        }
    };
    let c: Vec<f64> = (-m..=m).map(corr).collect();
    let k = c
        .iter()
        .enumerate()
        .max_by(|x, y| x.1.total_cmp(y.1))
        .map(|(k, _)| k)
        .unwrap_or(0);
    let mut lag = k as f64 - m as f64;
    if k > 0 && k + 1 < c.len() {
        let denom = c[k - 1] - 2.0 * c[k] + c[k + 1];
        if denom != 0.0 {
            lag += 0.5 * (c[k - 1] - c[k + 1]) / denom;
        }
    }
    lag * dt
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn grid(t_end: f64, dt: f64) -> Vec<f64> {
        (0..=(t_end / dt).round() as usize).map(|i| i as f64 * dt).collect()
    }

    #[test]
    fn sine_peaks_half_second_apart() {
        let t = grid(3.0, 1e-3);
        let x: Vec<f64> = t.iter().map(|t| (2.0 * PI * 2.0 * t).sin()).collect();
        let p = find_peaks(&t, &x, 0.01);
        assert_eq!(p.len(), 6);
        for w in p.windows(2) {
            assert!((w[1] - w[0] - 0.5).abs() < 1e-6);
        }
        assert!((p[0] - 0.125).abs() < 1e-6);
    }

    #[test]
    fn monotone_has_no_peaks() {
        let t = grid(1.0, 1e-3);
        assert!(find_peaks(&t, &t, 0.0).is_empty());
        let flat = vec![1.0; t.len()];
        assert!(find_peaks(&t, &flat, 0.0).is_empty());
    }

    #[test]
    fn small_ripples_are_rejected_by_prominence() {
        let t = grid(2.0, 1e-3);
        let x: Vec<f64> = t
            .iter()
            .map(|t| (2.0 * PI * t).sin() + 0.05 * (2.0 * PI * 40.0 * t).sin())
            .collect();
        assert_eq!(find_peaks(&t, &x, 0.5).len(), 2);
        assert!(find_peaks(&t, &x, 0.0).len() > 10);
    }

    #[test]
    fn frequency_from_evenly_spaced_peaks() {
        let p = [1.0, 1.5, 2.0, 2.5, 3.0];
        assert!((oscillation_frequency(&p, 4).unwrap() - 2.0).abs() < 1e-12);
        assert!(matches!(
            oscillation_frequency(&p, 5),
            Err(Error::InsufficientPeaks { found: 5, needed: 6 })
        ));
        assert!(oscillation_frequency(&p, 3).is_err());
        assert!(oscillation_frequency(&[0.0; 20], 11).is_err());
    }

    #[test]
    fn noisy_damped_oscillation() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand::rngs::StdRng::seed_from_u64(7);
        let t = grid(4.0, 1e-3);
        let f0 = 1.96;
        let x: Vec<f64> = t
            .iter()
            .map(|t| (-0.3 * t).exp() * (2.0 * PI * f0 * t).sin() + 0.05 * (rng.gen::<f64>() - 0.5))
            .collect();
        // light smoothing as any measurement chain would apply
        let k = 25;
        let s: Vec<f64> = (0..x.len())
            .map(|i| {
                let (a, b) = (i.saturating_sub(k), (i + k + 1).min(x.len()));
                x[a..b].iter().sum::<f64>() / (b - a) as f64
            })
            .collect();
        let p = find_peaks(&t, &s, 0.2);
        let f = oscillation_frequency(&p, 6).unwrap();
        assert!((f - f0).abs() / f0 < 0.01, "{f}");
    }

    #[test]
    fn dip_examples() {
        let t = grid(1.0, 0.1);
        let c = vec![0.7; t.len()];
        assert_eq!(dip(&t, &c, 0.0, 1.0), Some((0.7, 0.0)));
        let v: Vec<f64> = t.iter().map(|t| (t - 0.4).abs() + 0.2).collect();
        let (m, at) = dip(&t, &v, 0.0, 1.0).unwrap();
        assert!((m - 0.2).abs() < 1e-12 && (at - 0.4).abs() < 1e-12);
        assert_eq!(dip(&t, &v, 2.0, 3.0), None);
    }

    #[test]
    fn detrend_removes_ramp_but_keeps_oscillation() {
        let t = grid(4.0, 1e-3);
        let x: Vec<f64> = t.iter().map(|t| 0.3 * t + 0.01 * (2.0 * PI * 2.0 * t).sin()).collect();
        let y = detrend(&x, 500);
        // centre of the record: pure oscillation remains
        let mid = &y[500..3500];
        assert!(peak_to_peak(mid) < 0.0201 && peak_to_peak(mid) > 0.0199);
        let p = find_peaks(&t[500..3500], mid, 1e-3);
        assert!((oscillation_frequency(&p, MIN_INTERVALS).unwrap() - 2.0).abs() < 1e-3);
    }

    #[test]
    fn stability_verdict() {
        let t = grid(20.0, 1e-2);
        let damped: Vec<f64> = t.iter().map(|t| (-(t - 2.0).max(0.0)).exp() * (2.0 * PI * 2.0 * t).sin()).collect();
        assert!(is_stable(&t, &damped, 2.0));
        let sustained: Vec<f64> = t.iter().map(|t| (2.0 * PI * 2.0 * t).sin()).collect();
        assert!(!is_stable(&t, &sustained, 2.0));
        assert_eq!(super::stability_verdict(&t[..300], &damped[..300], 2.0), None);
    }

    #[test]
    fn lag_of_delayed_copy() {
        let dt = 1e-3;
        let t = grid(5.0, dt);
        let a: Vec<f64> = t.iter().map(|t| (2.0 * PI * 2.0 * t).sin()).collect();
        let b: Vec<f64> = t.iter().map(|t| (2.0 * PI * 2.0 * (t - 0.03)).sin()).collect();
        let l = correlation_lag(&a, &b, dt, 0.2);
        assert!((l - 0.03).abs() < 1e-3, "{l}");
        assert!((correlation_lag(&b, &a, dt, 0.2) + 0.03).abs() < 1e-3);
    }

    #[test]
    fn report_on_damped_swing() {
        let t = grid(20.0, 1e-3);
        let x: Vec<f64> = t
            .iter()
            .map(|&t| if t < 2.0 { 0.0 } else { 0.02 * (-0.8 * (t - 2.0)).exp() * (2.0 * PI * 2.1 * (t - 2.0)).sin() + 0.01 * t })
            .collect();
        let r = analyze_channel("w", &t, &x, 2.0, &AnalysisSettings::default());
        assert!(r.intervals_used >= MIN_INTERVALS);
        assert!((r.frequency.unwrap() - 2.1).abs() < 0.02, "{r:?}");
    }

    #[test]
    fn rounding_noise_is_not_an_oscillation() {
        let t: Vec<f64> = (0..8000).map(|i| i as f64 * 1e-3).collect();
        let x: Vec<f64> = t.iter().map(|t| 1e-15 * (2.0 * PI * 300.0 * t).sin()).collect();
        let r = analyze_channel("q", &t, &x, 2.0, &AnalysisSettings::default());
        assert!(r.peak_times.is_empty() && r.frequency.is_none());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]
        #[test]
        fn estimator_exact_and_invariant(f in 0.5f64..5.0, amp in 0.01f64..100.0, offset in -50.0f64..50.0, phase in 0.0f64..std::f64::consts::TAU) {
            let t = grid(12.0, 1e-3);
            let x: Vec<f64> = t.iter().map(|t| offset + amp * (2.0 * PI * f * t + phase).sin()).collect();
            let p = find_peaks(&t, &x, 0.01 * peak_to_peak(&x));
            let est = oscillation_frequency(&p, 4).unwrap();
            prop_assert!((est - f).abs() / f < 1e-4);
            let unit: Vec<f64> = t.iter().map(|t| (2.0 * PI * f * t + phase).sin()).collect();
            let q = find_peaks(&t, &unit, 0.01 * peak_to_peak(&unit));
            prop_assert_eq!(p.len(), q.len());
            for (a, b) in p.iter().zip(&q) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }
    }
}
