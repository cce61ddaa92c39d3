//! Post-processing of time series: curve crossings, rank correlation, fits,
//! peak detection and ensemble statistics.

/// Ranks with ties replaced by their average rank (1-based).
pub fn ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut out = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i + 1;
        while j < idx.len() && values[idx[j]] == values[idx[i]] {
            j += 1;
        }
        let avg = (i + j + 1) as f64 / 2.0;
        for &k in &idx[i..j] {
            out[k] = avg;
        }
        i = j;
    }
    out
}

/// Pearson correlation; `NaN` if either input is constant.
pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len(), "correlation inputs must have equal length");
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    sxy / (sxx * syy).sqrt()
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    pearson(&ranks(x), &ranks(y))
}

/// Least-squares `(slope, intercept)` of `y ≈ slope·x + intercept`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    assert_eq!(x.len(), y.len(), "fit inputs must have equal length");
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
    }
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Sample mean and standard error of the mean.
pub fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

fn sign(x: f64) -> i8 {
    if x > 0.0 {
        1
    } else if x < 0.0 {
        -1
    } else {
        0
    }
}

/// Times at which `a − b` changes sign, linearly interpolated between samples.
pub fn crossings(times: &[f64], a: &[f64], b: &[f64]) -> Vec<f64> {
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mut out = Vec::new();
    let mut last: Option<(usize, i8)> = None;
    for (i, &d) in diff.iter().enumerate() {
        let s = sign(d);
        if s == 0 {
            continue;
        }
        if let Some((j, sj)) = last {
            if sj != s {
                let (t0, t1, d0, d1) = (times[j], times[i], diff[j], d);
                out.push(t0 + (t1 - t0) * d0 / (d0 - d1));
            }
        }
        last = Some((i, s));
    }
    out
}

/// Mean of the final `fraction` of a series (at least one sample).
pub fn tail_mean(values: &[f64], fraction: f64) -> f64 {
    let k = ((values.len() as f64 * fraction).ceil() as usize).clamp(1, values.len());
    let tail = &values[values.len() - k..];
    tail.iter().sum::<f64>() / k as f64
}

/// Average logarithmic decay `ln(y(0) / ȳ_tail)` of a relaxing curve, with the
/// tail mean taken over the final `tail_fraction`. Larger means faster.
pub fn mean_log_decay(values: &[f64], tail_fraction: f64) -> f64 {
    (values[0] / tail_mean(values, tail_fraction)).ln()
}

/// Relaxation-inversion test for a pair of distance curves.
///
/// `farther` must start strictly above `closer` and end below it, where "end"
/// is the mean over the final `tail_fraction` of the window. Returns the first
/// crossing time, or `None` when there is no inversion.
pub fn inversion_time(times: &[f64], farther: &[f64], closer: &[f64], tail_fraction: f64) -> Option<f64> {
    if farther.first()? <= closer.first()? {
        return None;
    }
    if tail_mean(farther, tail_fraction) >= tail_mean(closer, tail_fraction) {
        return None;
    }
    crossings(times, farther, closer).first().copied()
}

/// Longest contiguous stretch, as a fraction of the window length, during
/// which `a − b` has the opposite sign to its initial value.
pub fn longest_inversion_fraction(times: &[f64], a: &[f64], b: &[f64]) -> f64 {
    let span = times[times.len() - 1] - times[0];
    if span <= 0.0 {
        return 0.0;
    }
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let Some(s0) = diff.iter().map(|&d| sign(d)).find(|&s| s != 0) else { return 0.0 };
    let mut best = 0.0f64;
    let mut start: Option<f64> = None;
    for (i, &d) in diff.iter().enumerate() {
        if sign(d) == -s0 {
            start.get_or_insert(times[i]);
            best = best.max(times[i] - start.unwrap());
        } else {
            start = None;
        }
    }
    best / span
}

/// Local maxima whose topographic prominence is at least `min_prominence`.
///
/// Prominence follows the usual definition: the height above the higher of the
/// two lowest points reached before meeting a strictly higher sample (or the
/// array edge) on either side. Flat tops count once, at their middle.
pub fn prominent_peaks(y: &[f64], min_prominence: f64) -> Vec<(usize, f64)> {
    let n = y.len();
    let mut out = Vec::new();
    let mut i = 1;
    while i + 1 < n {
        if y[i] > y[i - 1] {
            let mut j = i;
            while j + 1 < n && y[j + 1] == y[i] {
                j += 1;
            }
            if j + 1 < n && y[j + 1] < y[i] {
                let peak = (i + j) / 2;
                let h = y[peak];
                let mut left_min = h;
                let mut k = i;
                while k > 0 {
                    k -= 1;
                    if y[k] > h {
                        break;
                    }
                    left_min = left_min.min(y[k]);
                }
                let mut right_min = h;
                let mut k = j;
                while k + 1 < n {
                    k += 1;
                    if y[k] > h {
                        break;
                    }
                    right_min = right_min.min(y[k]);
                }
                let prominence = h - left_min.max(right_min);
                if prominence >= min_prominence {
                    out.push((peak, prominence));
                }
            }
            i = j + 1;
        } else {
            i += 1;
        }
    }
    out
}
