//! Chronological splits.

use std::ops::Range;

use crate::windows::WindowConfig;

/// First 80% of lines for training, the rest for testing.
pub fn split_offline(n: usize) -> (Range<usize>, Range<usize>) {
    split_at_fraction(n, 0.8)
}

pub fn split_at_fraction(n: usize, fraction: f64) -> (Range<usize>, Range<usize>) {
    let cut = ((n as f64) * fraction).floor() as usize;
    let cut = cut.min(n);
    (0..cut, cut..n)
}

/// `chunks` consecutive ranges of equal size; the remainder goes to the last.
pub fn split_online(n: usize, chunks: usize) -> Vec<Range<usize>> {
    if chunks == 0 {
        return Vec::new();
    }
    let size = n / chunks;
    (0..chunks)
        .map(|i| {
            let start = i * size;
            let end = if i + 1 == chunks { n } else { start + size };
            start..end
        })
        .collect()
}

/// A split point moved back to the start of the window holding line `cut`,
/// so that window falls entirely on the later side.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AlignedCut {
    pub index: usize,
    /// Start of the first window on the later side, in milliseconds.
    pub boundary: i64,
}

/// Aligns `cut` to a window start. `times` are the effective timestamps of
/// all lines and `epoch` the window origin.
pub fn align_cut(times: &[i64], cut: usize, cfg: &WindowConfig, epoch: i64) -> AlignedCut {
    if cut >= times.len() {
        return AlignedCut {
            index: times.len(),
            boundary: times.iter().copied().max().map_or(epoch, |t| t + 1),
        };
    }
    let step = cfg.step_ms();
    let k = (times[cut] - epoch).div_euclid(step);
    let boundary = epoch + k * step;
    let mut index = cut;
    while index > 0 && times[index - 1] >= boundary {
        index -= 1;
    }
    AlignedCut { index, boundary }
}

/// Effective timestamps: the line's own, or one following the previous line
/// at `rate` lines per second.
pub fn effective_times(stamps: impl IntoIterator<Item = Option<i64>>, rate: f64, epoch: Option<i64>) -> Vec<i64> {
    let gap = (1000.0 / rate).round().max(1.0) as i64;
    let mut last: Option<i64> = None;
    stamps
        .into_iter()
        .map(|ts| {
            let t = match (ts, last) {
                (Some(t), _) => t,
                (None, Some(p)) => p + gap,
                (None, None) => epoch.unwrap_or(0),
            };
            last = Some(last.map_or(t, |p| p.max(t)));
            t
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use std::time::Duration;

    use super::*;

    #[test]
    fn offline_examples() {
        assert_eq!(split_offline(10), (0..8, 8..10));
        assert_eq!(split_offline(0), (0..0, 0..0));
    }

    #[test]
    fn online_examples() {
        assert_eq!(split_online(12, 6), vec![0..2, 2..4, 4..6, 6..8, 8..10, 10..12]);
        let c = split_online(13, 6);
        assert_eq!(c.last(), Some(&(10..13)));
        assert_eq!(c.iter().map(|r| r.len()).sum::<usize>(), 13);
        assert_eq!(c.windows(2).count(), 5);
    }

    #[test]
    fn boundary_window_goes_to_test() {
        // Two one-hour windows; the 80% index lands inside the second.
        let hour = 3_600_000;
        let times: Vec<i64> = vec![0, 10, 20, 30, hour + 1, hour + 2, hour + 3, hour + 4, hour + 5, hour + 6];
        let cfg = WindowConfig::fixed(Duration::from_secs(3600));
        let (train, _) = split_offline(times.len());
        let cut = align_cut(&times, train.end, &cfg, 0);
        assert_eq!(cut, AlignedCut { index: 4, boundary: hour });
        assert!(times[..cut.index].iter().all(|&t| t < cut.boundary));
        assert!(times[cut.index..].iter().all(|&t| t >= cut.boundary));
    }

    #[test]
    fn synthetic_times() {
        assert_eq!(effective_times([None, None, Some(5000), None], 2.0, None), vec![0, 500, 5000, 5500]);
    }
}
