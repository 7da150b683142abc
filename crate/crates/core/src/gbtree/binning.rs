//! Equal-frequency feature binning.
//!
//! Each feature gets an increasing list of cut points; `bin(x)` is the number
//! of cuts `≤ x`, so a split after bin `b` sends `x < cuts[b]` left.

/// Cut points for one feature.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureBins {
    pub cuts: Vec<f64>,
}

impl FeatureBins {
    /// With at most `max_bin` distinct values every value gets its own bin and
    /// cuts sit at midpoints; otherwise cuts sit just below equal-frequency
    /// quantiles of the sample.
    pub fn fit(values: &[f64], max_bin: usize) -> Self {
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let mut distinct = sorted.clone();
        distinct.dedup();
        if distinct.len() <= 1 {
            return Self { cuts: Vec::new() };
        }
        if distinct.len() <= max_bin {
            let cuts = distinct.windows(2).map(|w| midpoint(w[0], w[1])).collect();
            return Self { cuts };
        }
        let n = sorted.len();
        let mut cuts: Vec<f64> = Vec::with_capacity(max_bin - 1);
        for k in 1..max_bin {
            let q = sorted[k * n / max_bin];
            // largest distinct value strictly below q
            let pos = distinct.partition_point(|&v| v < q);
            if pos == 0 {
                continue;
            }
            let cut = midpoint(distinct[pos - 1], q);
            if cuts.last().is_none_or(|&last| cut > last) {
                cuts.push(cut);
            }
        }
        Self { cuts }
    }

    pub fn n_bins(&self) -> usize {
        self.cuts.len() + 1
    }

    pub fn bin(&self, x: f64) -> u16 {
        self.cuts.partition_point(|&c| c <= x) as u16
    }
}

/// A value strictly above `a` and at most `b` (for `a < b`).
fn midpoint(a: f64, b: f64) -> f64 {
    let m = a + (b - a) / 2.0;
    if m > a && m <= b {
        m
    } else {
        b
    }
}

/// Row-major binned copy of a feature matrix.
#[derive(Debug, Clone)]
pub struct BinnedMatrix {
    pub n_rows: usize,
    pub n_features: usize,
    pub bins: Vec<u16>,
    pub features: Vec<FeatureBins>,
    /// Offset of each feature's first bin in a flat histogram.
    pub offsets: Vec<usize>,
    pub total_bins: usize,
}

impl BinnedMatrix {
    pub fn new(x: &[f64], n_rows: usize, n_features: usize, max_bin: usize) -> Self {
        let features: Vec<FeatureBins> = (0..n_features)
            .map(|f| {
                let col: Vec<f64> = (0..n_rows).map(|i| x[i * n_features + f]).collect();
                FeatureBins::fit(&col, max_bin)
            })
            .collect();
        let mut bins = Vec::with_capacity(n_rows * n_features);
        for i in 0..n_rows {
            for (f, fb) in features.iter().enumerate() {
                bins.push(fb.bin(x[i * n_features + f]));
            }
        }
        let mut offsets = Vec::with_capacity(n_features);
        let mut total = 0;
        for fb in &features {
            offsets.push(total);
            total += fb.n_bins();
        }
        Self {
            n_rows,
            n_features,
            bins,
            features,
            offsets,
            total_bins: total,
        }
    }

    #[inline]
    pub fn get(&self, row: usize, feature: usize) -> u16 {
        self.bins[row * self.n_features + feature]
    }
}
