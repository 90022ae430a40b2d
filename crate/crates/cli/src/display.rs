//! Trace decimation for transport to the review UI.

pub const MAX_DISPLAY_POINTS: usize = 2000;

/// At most `max_points` (index, value) pairs. Longer inputs are cut into
/// `max_points / 2` buckets and each bucket contributes its minimum and
/// maximum in time order, so isolated spikes survive.
pub fn envelope(values: &[f64], max_points: usize) -> Vec<(usize, f64)> {
    let n = values.len();
    if n <= max_points {
        return values.iter().cloned().enumerate().collect();
    }
    let buckets = (max_points / 2).max(1);
    let mut out = Vec::with_capacity(2 * buckets);
    for b in 0..buckets {
        let lo = b * n / buckets;
        let hi = (b + 1) * n / buckets;
        if lo == hi {
            continue;
        }
        let (mut imin, mut imax) = (lo, lo);
        for i in lo..hi {
            if values[i] < values[imin] {
                imin = i;
            }
            if values[i] > values[imax] {
                imax = i;
            }
        }
        let (a, c) = if imin <= imax { (imin, imax) } else { (imax, imin) };
        out.push((a, values[a]));
        if c != a {
            out.push((c, values[c]));
        }
    }
    out
}
