//! Brute-force reference implementations: no sorting, no merge counts,
//! plain f64 arithmetic.

#![allow(dead_code)]

use std::path::PathBuf;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

/// Rank of each element: 1 + (number smaller) + (number equal - 1) / 2.
pub fn oracle_ranks(v: &[i64]) -> Vec<f64> {
    v.iter()
        .map(|x| {
            let less = v.iter().filter(|y| *y < x).count() as f64;
            let equal = v.iter().filter(|y| *y == x).count() as f64;
            1.0 + less + (equal - 1.0) / 2.0
        })
        .collect()
}

fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut sab = 0.0;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    for i in 0..a.len() {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        None
    } else {
        Some(sab / (saa * sbb).sqrt())
    }
}

pub fn oracle_spearman(a: &[i64], b: &[i64]) -> Option<f64> {
    pearson(&oracle_ranks(a), &oracle_ranks(b))
}

/// Tau-b by enumerating every pair.
pub fn oracle_kendall(a: &[i64], b: &[i64]) -> Option<f64> {
    let n = a.len();
    let (mut concordant, mut discordant, mut tie_a, mut tie_b) = (0i64, 0i64, 0i64, 0i64);
    for i in 0..n {
        for j in (i + 1)..n {
            let da = (a[i] - a[j]).signum();
            let db = (b[i] - b[j]).signum();
            if da == 0 {
                tie_a += 1;
            }
            if db == 0 {
                tie_b += 1;
            }
            if da != 0 && db != 0 {
                if da == db {
                    concordant += 1;
                } else {
                    discordant += 1;
                }
            }
        }
    }
    let pairs = (n * (n - 1) / 2) as i64;
    let denom = (((pairs - tie_a) * (pairs - tie_b)) as f64).sqrt();
    if denom == 0.0 {
        None
    } else {
        Some((concordant - discordant) as f64 / denom)
    }
}

/// Unweighted kappa from a 5x5 contingency table of values 1..=5.
pub fn oracle_kappa(a: &[i64], b: &[i64]) -> Option<f64> {
    let n = a.len() as f64;
    let mut table = [[0f64; 5]; 5];
    for (x, y) in a.iter().zip(b) {
        table[(*x - 1) as usize][(*y - 1) as usize] += 1.0;
    }
    let po = (0..5).map(|i| table[i][i]).sum::<f64>() / n;
    let pe = (0..5)
        .map(|i| {
            let row: f64 = table[i].iter().sum();
            let col: f64 = (0..5).map(|r| table[r][i]).sum();
            row * col
        })
        .sum::<f64>()
        / (n * n);
    if pe == 1.0 {
        None
    } else {
        Some((po - pe) / (1.0 - pe))
    }
}

pub fn is_constant(v: &[i64]) -> bool {
    v.windows(2).all(|w| w[0] == w[1])
}
