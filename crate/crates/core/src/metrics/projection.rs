use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};

/// Centered embedding rows projected on their top two principal directions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Projection {
    pub coords: Vec<[f64; 2]>,
    pub eigenvalues: [f64; 2],
    /// Data rank was below two; the second axis is all zeros.
    pub degenerate: bool,
}

const MAX_POWER_ITERS: usize = 200_000;
const POWER_TOL: f64 = 1e-15;

fn mat_vec(m: &[f64], v: &[f64]) -> Vec<f64> {
    let h = v.len();
    (0..h)
        .map(|i| m[i * h..(i + 1) * h].iter().zip(v).map(|(a, b)| a * b).sum())
        .collect()
}

fn normalize(v: &mut [f64]) -> f64 {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        for x in v.iter_mut() {
            *x /= norm;
        }
    }
    norm
}

/// Dominant eigenpair of a symmetric PSD matrix by power iteration.
fn power_iteration(m: &[f64], h: usize) -> (f64, Vec<f64>) {
    let mut v: Vec<f64> = (0..h).map(|i| 1.0 / (i + 1) as f64).collect();
    normalize(&mut v);
    let mut lambda = 0.0;
    for _ in 0..MAX_POWER_ITERS {
        let mut next = mat_vec(m, &v);
        let norm = normalize(&mut next);
        if norm == 0.0 {
            return (0.0, v);
        }
        let delta: f64 = next.iter().zip(&v).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        v = next;
        lambda = norm;
        if delta < POWER_TOL {
            break;
        }
    }
    (lambda, v)
}

/// Projects `rows` (N × h, h ≥ 2) onto the two leading principal axes.
pub fn linear_projection_2d(rows: &[Vec<f64>]) -> Result<Projection> {
    let h = rows.first().map_or(0, Vec::len);
    if h < 2 {
        return Err(contract("projection needs embeddings of width ≥ 2"));
    }
    let n = rows.len() as f64;
    let mean: Vec<f64> = (0..h).map(|c| rows.iter().map(|r| r[c]).sum::<f64>() / n).collect();
    let centered: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| r.iter().zip(&mean).map(|(a, m)| a - m).collect())
        .collect();
    let mut cov = vec![0.0; h * h];
    for r in &centered {
        for i in 0..h {
            for j in 0..h {
                cov[i * h + j] += r[i] * r[j];
            }
        }
    }
    let (l1, v1) = power_iteration(&cov, h);
    let mut deflated = cov.clone();
    for i in 0..h {
        for j in 0..h {
            deflated[i * h + j] -= l1 * v1[i] * v1[j];
        }
    }
    let (mut l2, mut v2) = power_iteration(&deflated, h);
    let degenerate = l2 <= 1e-10 * l1.max(1e-300);
    if degenerate {
        l2 = 0.0;
        v2 = vec![0.0; h];
    }
    let coords = centered
        .iter()
        .map(|r| {
            let a: f64 = r.iter().zip(&v1).map(|(x, y)| x * y).sum();
            let b: f64 = r.iter().zip(&v2).map(|(x, y)| x * y).sum();
            [a, b]
        })
        .collect();
    Ok(Projection {
        coords,
        eigenvalues: [l1, l2],
        degenerate,
    })
}
