use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

/// Distance used on the maze side of the isomorphism comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MazeMetric {
    #[default]
    Euclidean,
    Manhattan,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IsomorphismReport {
    pub pearson: f64,
    pub spearman: f64,
    pub num_pairs: usize,
}

/// Upper-triangle distances between rows, row-major `(0,1), (0,2), …, (1,2), …`.
pub fn pairwise_distances(rows: &[Vec<f64>], metric: MazeMetric) -> Vec<f64> {
    let n = rows.len();
    let mut out = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            let it = rows[i].iter().zip(&rows[j]);
            let d = match metric {
                MazeMetric::Euclidean => it.map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt(),
                MazeMetric::Manhattan => it.map(|(a, b)| (a - b).abs()).sum(),
            };
            out.push(d);
        }
    }
    out
}

pub fn pairwise_euclidean(rows: &[Vec<f64>]) -> Vec<f64> {
    pairwise_distances(rows, MazeMetric::Euclidean)
}

pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(Error::Contract(format!(
            "correlation needs two equal-length vectors of length ≥ 2, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(Error::UndefinedCorrelation("zero-variance input".into()));
    }
    // sqrt(x·x) is exact, so identical inputs give exactly 1
    let prod = saa * sbb;
    let denom = if prod.is_finite() { prod.sqrt() } else { saa.sqrt() * sbb.sqrt() };
    Ok((sab / denom).clamp(-1.0, 1.0))
}

/// 1-based ranks with ties given their average rank.
pub fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
    let mut out = vec![0.0; v.len()];
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && v[idx[end]] == v[idx[start]] {
            end += 1;
        }
        // positions start..end hold ranks start+1 ..= end
        let avg = (start + 1 + end) as f64 / 2.0;
        for &k in &idx[start..end] {
            out[k] = avg;
        }
        start = end;
    }
    out
}

pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64> {
    pearson(&ranks(a), &ranks(b))
}

/// Correlates latent pairwise Euclidean distances with maze distances.
pub fn distance_correlations(latent: &Tensor, coords: &[[f64; 2]], metric: MazeMetric) -> Result<IsomorphismReport> {
    let n = latent.rows();
    if n < 3 || coords.len() != n {
        return Err(Error::Contract(format!(
            "need ≥ 3 nodes with matching coordinates, got {} latent rows and {} coordinates",
            n,
            coords.len()
        )));
    }
    let rows: Vec<Vec<f64>> = (0..n).map(|i| latent.row(i).to_vec()).collect();
    let pts: Vec<Vec<f64>> = coords.iter().map(|c| c.to_vec()).collect();
    let dz = pairwise_euclidean(&rows);
    let dm = pairwise_distances(&pts, metric);
    Ok(IsomorphismReport {
        pearson: pearson(&dz, &dm)?,
        spearman: spearman(&dz, &dm)?,
        num_pairs: dz.len(),
    })
}
