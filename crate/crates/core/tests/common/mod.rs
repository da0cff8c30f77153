//! Reference formulas written directly from the closed forms, independent of
//! the library's evaluation paths. Plain f64 arithmetic, no regrouping.
#![allow(dead_code)]

use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

/// Tri-fBm covariance `t^{2HK} + s^{2HK} - (t^{2H} + s^{2H})^K`.
pub fn tri_cov(h: f64, k: f64, s: f64, t: f64) -> f64 {
    t.powf(2.0 * h * k) + s.powf(2.0 * h * k) - (t.powf(2.0 * h) + s.powf(2.0 * h)).powf(k)
}

/// Gamma function by upward recurrence and a Stirling series at `x >= 10`.
pub fn gamma_ref(x: f64) -> f64 {
    if x < 0.5 {
        return PI / ((PI * x).sin() * gamma_ref(1.0 - x));
    }
    let mut shift = 1.0;
    let mut z = x;
    while z < 10.0 {
        shift *= z;
        z += 1.0;
    }
    let inv = 1.0 / z;
    let inv2 = inv * inv;
    let series = inv
        * (1.0 / 12.0
            - inv2 * (1.0 / 360.0 - inv2 * (1.0 / 1260.0 - inv2 * (1.0 / 1680.0 - inv2 / 1188.0))));
    let ln = (z - 0.5) * z.ln() - z + 0.5 * (2.0 * PI).ln() + series;
    ln.exp() / shift
}

/// Generalized binomial coefficient `x (x-1) ... (x-j+1) / j!`.
pub fn binom_ref(x: f64, j: u32) -> f64 {
    (0..j).fold(1.0, |acc, i| acc * (x - i as f64) / (i + 1) as f64)
}

/// n-fBm covariance with normalizing constant `1 / (Gamma(2H+1) |sin(pi H)|)`.
pub fn nth_cov(h: f64, order: u32, s: f64, t: f64) -> f64 {
    if s == 0.0 || t == 0.0 {
        return 0.0;
    }
    let c = 1.0 / (gamma_ref(2.0 * h + 1.0) * (PI * h).sin().abs());
    let sign = if order % 2 == 0 { 1.0 } else { -1.0 };
    let mut poly = 0.0;
    for j in 0..order {
        let jf = j as f64;
        let b = if j % 2 == 0 { 1.0 } else { -1.0 } * binom_ref(2.0 * h, j);
        poly += b * (t.powf(jf) * s.powf(2.0 * h - jf) + s.powf(jf) * t.powf(2.0 * h - jf));
    }
    sign * 0.5 * c * ((t - s).abs().powf(2.0 * h) - poly)
}

/// Covariance of `X(a1) - X(a0)` and `X(b1) - X(b0)` from a covariance function.
pub fn four_point(cov: impl Fn(f64, f64) -> f64, a0: f64, a1: f64, b0: f64, b1: f64) -> f64 {
    cov(a1, b1) - cov(a1, b0) - cov(a0, b1) + cov(a0, b0)
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

pub fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_qvarlab")
}

/// Runs the CLI with a JSON config written to `dir/config.json`.
pub fn run_cli(sub: &str, config: &str, dir: &Path, out: &Path, threads: Option<&str>, extra: &[&str]) -> Output {
    std::fs::create_dir_all(dir).unwrap();
    let cfg = dir.join(format!("{sub}.json"));
    std::fs::write(&cfg, config).unwrap();
    let mut cmd = Command::new(bin());
    cmd.arg(sub).arg("--config").arg(&cfg).arg("--out").arg(out).args(extra);
    match threads {
        Some(t) => cmd.env("QVARLAB_THREADS", t),
        None => cmd.env_remove("QVARLAB_THREADS"),
    };
    cmd.output().expect("qvarlab runs")
}

/// Every file in `dir` ending in `.csv`, sorted.
pub fn csv_files(dir: &Path) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .collect();
    v.sort();
    v
}

/// Parses a CSV table with a header into column names and string rows.
pub fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(str::to_string).collect();
    let rows = lines.map(|l| l.split(',').map(str::to_string).collect()).collect();
    (header, rows)
}

pub fn column(header: &[String], name: &str) -> usize {
    header.iter().position(|h| h == name).unwrap_or_else(|| panic!("no column {name}"))
}
