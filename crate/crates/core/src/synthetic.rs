//! Seeded synthetic mixture data on the UHPC schema: five nonlinear targets
//! with small noise, plus a minority of atypical mixtures whose labels carry
//! gross errors.

use std::sync::Arc;

use rand::distributions::Distribution;
use rand::Rng as _;
use rand_distr::Normal;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::rng;
use crate::schema::FeatureSchema;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticSpec {
    pub n_rows: usize,
    /// Share of rows drawn as atypical mixtures with corrupted labels.
    pub corruption_fraction: f64,
    /// Noise sd on clean labels, relative to each target's clean sd.
    pub noise_relative: f64,
    /// Gross label error magnitude range, in clean-target sds.
    pub gross_error_sd: (f64, f64),
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_rows: 1200,
            corruption_fraction: 0.10,
            noise_relative: 0.02,
            gross_error_sd: (0.5, 1.0),
            seed: 7,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub data: Dataset,
    /// Ids of corrupted rows, ascending.
    pub corrupted: Vec<u64>,
}

/// Input vector in schema input order.
struct Mix([f64; 17]);

const CEMENT: usize = 0;
const COARSE: usize = 1;
const SILICA: usize = 2;
const FLY_ASH: usize = 3;
const SLAG: usize = 4;
const SAND: usize = 5;
const SP: usize = 6;
const WATER: usize = 7;
const HPWR: usize = 8;
const WB: usize = 9;
const FIBER: usize = 10;
const DIAMETER: usize = 11;
const LENGTH: usize = 12;
const SF_TENSILE: usize = 13;
const SF_MODULUS: usize = 14;
const TEMPERATURE: usize = 15;
const AGE: usize = 16;

const AGES: [f64; 7] = [1.0, 3.0, 7.0, 14.0, 28.0, 56.0, 91.0];

fn normal(r: &mut rng::Rng, mean: f64, sd: f64, lo: f64, hi: f64) -> f64 {
    Normal::new(mean, sd)
        .expect("finite sd")
        .sample(r)
        .clamp(lo, hi)
}

fn typical(r: &mut rng::Rng) -> Mix {
    let mut m = [0.0; 17];
    m[CEMENT] = normal(r, 800.0, 110.0, 369.0, 1097.0);
    m[COARSE] = if r.gen_bool(0.2) {
        r.gen_range(200.0..900.0)
    } else {
        0.0
    };
    m[SILICA] = if r.gen_bool(0.75) {
        normal(r, 120.0, 50.0, 10.0, 279.2)
    } else {
        0.0
    };
    m[FLY_ASH] = if r.gen_bool(0.15) {
        r.gen_range(20.0..150.0)
    } else {
        0.0
    };
    m[SLAG] = if r.gen_bool(0.25) {
        r.gen_range(30.0..250.0)
    } else {
        0.0
    };
    m[SAND] = normal(r, 900.0, 150.0, 300.0, 1213.0);
    m[SP] = normal(r, 14.0, 8.0, 0.0, 50.0);
    m[HPWR] = if r.gen_bool(0.3) {
        r.gen_range(5.0..60.0)
    } else {
        0.0
    };
    m[WB] = normal(r, 0.19, 0.035, 0.12, 0.30);
    if r.gen_bool(0.85) {
        m[FIBER] = normal(r, 1.8, 0.6, 0.3, 4.0);
        m[DIAMETER] = r.gen_range(150.0..300.0);
        m[LENGTH] = r.gen_range(8.0..20.0);
        m[SF_TENSILE] = r.gen_range(1800.0..3000.0);
        m[SF_MODULUS] = r.gen_range(180.0..220.0);
    }
    m[TEMPERATURE] = normal(r, 20.0, 3.0, 5.0, 26.0);
    m[AGE] = AGES[r.gen_range(0..AGES.len())];
    finish_water(&mut m);
    Mix(m)
}

/// Mixtures from the fringes of the observed ranges.
fn atypical(r: &mut rng::Rng) -> Mix {
    let mut m = [0.0; 17];
    let edge = |r: &mut rng::Rng, lo: f64, hi: f64| {
        let u: f64 = r.gen_range(0.0..0.2);
        if r.gen_bool(0.5) {
            lo + u * (hi - lo)
        } else {
            hi - u * (hi - lo)
        }
    };
    m[CEMENT] = edge(r, 369.0, 1097.0);
    m[COARSE] = if r.gen_bool(0.6) {
        r.gen_range(900.0..1931.0)
    } else {
        0.0
    };
    m[SILICA] = edge(r, 0.0, 279.2);
    m[FLY_ASH] = if r.gen_bool(0.6) {
        r.gen_range(150.0..301.76)
    } else {
        0.0
    };
    m[SLAG] = if r.gen_bool(0.6) {
        r.gen_range(250.0..468.9)
    } else {
        0.0
    };
    m[SAND] = edge(r, 0.0, 1213.0);
    m[SP] = edge(r, 0.0, 88.2);
    m[HPWR] = if r.gen_bool(0.6) {
        r.gen_range(60.0..256.0)
    } else {
        0.0
    };
    m[WB] = edge(r, 0.10, 0.36);
    if r.gen_bool(0.7) {
        m[FIBER] = r.gen_range(3.0..7.0);
        m[DIAMETER] = edge(r, 100.0, 500.0);
        m[LENGTH] = edge(r, 5.0, 30.0);
        m[SF_TENSILE] = edge(r, 500.0, 3842.0);
        m[SF_MODULUS] = r.gen_range(200.0..700.0);
    }
    m[TEMPERATURE] = edge(r, 0.0, 26.0);
    m[AGE] = AGES[r.gen_range(0..AGES.len())];
    finish_water(&mut m);
    Mix(m)
}

fn finish_water(m: &mut [f64; 17]) {
    let binder = m[CEMENT] + m[SILICA] + m[FLY_ASH] + m[SLAG];
    m[WATER] = (m[WB] * binder).clamp(0.0, 293.0);
    m[WB] = if binder > 0.0 {
        (m[WATER] / binder).min(0.36)
    } else {
        0.0
    };
}

/// Clean targets: compressive, flexural, tensile, slump flow, porosity. Each
/// depends only on inputs kept by the shipped selection for that target.
fn targets(m: &Mix) -> [f64; 5] {
    let x = &m.0;
    let age = (1.0 + x[AGE]).ln() / 92f64.ln();
    let wb = x[WB];
    let fiber_q = x[FIBER] * (x[SF_TENSILE] / 2500.0).sqrt();
    let cs = 25.0
        + 140.0 * age.powf(0.8) * (1.7 - 3.8 * wb)
        + 0.08 * x[SILICA]
        + 0.03 * x[SLAG]
        + 6.0 * fiber_q
        - 0.25 * x[SP].max(25.0)
        + 0.01 * (x[CEMENT] - 800.0);
    let fs = 3.0
        + 14.0 * age * (1.5 - 3.0 * wb)
        + 4.5 * fiber_q * (250.0 / x[DIAMETER].max(100.0)).sqrt()
        + 0.004 * x[CEMENT]
        - 0.002 * x[COARSE];
    let ts = 0.5
        + 6.0 * age * (1.4 - 3.0 * wb)
        + 1.8 * x[FIBER] * (x[SF_TENSILE] / 3000.0)
        + 0.004 * x[SILICA]
        - 0.004 * x[SLAG]
        + 0.02 * (x[TEMPERATURE] - 18.0);
    let slump = 180.0 + 1500.0 * (wb - 0.12) + 7.0 * x[SP] - 35.0 * x[FIBER] - 0.08 * x[COARSE]
        + 0.12 * (x[SAND] - 800.0) * (wb > 0.2) as u8 as f64
        - 0.15 * x[SILICA];
    let porosity = 1.0 + 60.0 * wb * wb * (1.3 - 0.7 * age) + 0.0015 * x[COARSE]
        - 0.004 * x[SILICA]
        + 1.5 * (x[LENGTH] / 30.0)
        + 0.01 * x[SP];
    [
        cs.clamp(12.2, 404.0),
        fs.clamp(0.0, 36.2),
        ts.clamp(0.0, 17.1),
        slump.clamp(0.0, 924.0),
        porosity.clamp(0.0, 18.6),
    ]
}

const TARGET_BOUNDS: [(f64, f64); 5] = [
    (12.2, 404.0),
    (0.0, 36.2),
    (0.0, 17.1),
    (0.0, 924.0),
    (0.0, 18.6),
];

fn sd(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// Rows get ids `1..=n_rows`. Corrupted rows are a seeded sample of exactly
/// `round(fraction · n)` positions, generated as atypical mixtures; each of
/// their labels is shifted by a random sign times a uniform draw from
/// `gross_error_sd` clean-target sds.
pub fn generate(spec: &SyntheticSpec) -> Result<SyntheticData> {
    if spec.n_rows < 10 {
        return Err(Error::InsufficientData {
            needed: 10,
            got: spec.n_rows,
        });
    }
    if !(0.0..0.5).contains(&spec.corruption_fraction) {
        return Err(Error::InvalidArgument(
            "corruption_fraction must lie in [0, 0.5)".into(),
        ));
    }
    let schema = Arc::new(FeatureSchema::uhpc());
    let mut r = rng::seeded(rng::derive_named(spec.seed, "synthetic"));
    let n = spec.n_rows;
    let n_bad = (spec.corruption_fraction * n as f64).round() as usize;
    let mut bad = vec![false; n];
    for i in rand::seq::index::sample(&mut r, n, n_bad) {
        bad[i] = true;
    }
    let mixes: Vec<Mix> = bad
        .iter()
        .map(|&b| if b { atypical(&mut r) } else { typical(&mut r) })
        .collect();
    let clean: Vec<[f64; 5]> = mixes.iter().map(targets).collect();
    let sds: Vec<f64> = (0..5)
        .map(|t| {
            let v: Vec<f64> = clean
                .iter()
                .zip(&bad)
                .filter(|(_, b)| !**b)
                .map(|(c, _)| c[t])
                .collect();
            sd(&v)
        })
        .collect();
    let (glo, ghi) = spec.gross_error_sd;
    let mut rows = Vec::with_capacity(n);
    for i in 0..n {
        let mut row = mixes[i].0.to_vec();
        for t in 0..5 {
            let mut y = clean[i][t]
                + normal(
                    &mut r,
                    0.0,
                    spec.noise_relative * sds[t],
                    f64::MIN,
                    f64::MAX,
                );
            if bad[i] {
                let sign = if r.gen_bool(0.5) { 1.0 } else { -1.0 };
                y += sign * r.gen_range(glo..=ghi) * sds[t];
            }
            let (lo, hi) = TARGET_BOUNDS[t];
            row.push(y.clamp(lo, hi));
        }
        rows.push(row);
    }
    let data = Dataset::new(schema, rows, (1..=n as u64).collect())?.with_source("synthetic");
    let corrupted = (0..n).filter(|&i| bad[i]).map(|i| i as u64 + 1).collect();
    Ok(SyntheticData { data, corrupted })
}
