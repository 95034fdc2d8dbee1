use nalgebra::{DMatrix, SymmetricEigen};

use crate::series::SeriesWindow;
use crate::{Error, Result};

/// Two-component projection of flattened windows from both sets.
#[derive(Clone, Debug, PartialEq)]
pub struct PcaProjection {
    pub real: Vec<[f64; 2]>,
    pub generated: Vec<[f64; 2]>,
    /// Variance along each component.
    pub explained_variance: [f64; 2],
    /// Share of the total variance along each component.
    pub explained_ratio: [f64; 2],
}

impl PcaProjection {
    /// `x,y,label` lines with a header, real points first.
    pub fn to_delimited(&self) -> String {
        let mut out = String::from("pc1,pc2,set\n");
        for (pts, label) in [(&self.real, "real"), (&self.generated, "generated")] {
            for p in pts.iter() {
                out.push_str(&format!("{},{},{label}\n", p[0], p[1]));
            }
        }
        out
    }
}

/// Fits principal axes on `real ∪ gen` and projects both sets onto the top two.
pub fn pca_project(real: &[SeriesWindow], gen: &[SeriesWindow]) -> Result<PcaProjection> {
    if real.is_empty() || gen.is_empty() {
        return Err(Error::Validation("both sets must be non-empty".into()));
    }
    let dim = real[0].len() * real[0].features();
    if real.iter().chain(gen).any(|w| w.len() * w.features() != dim) {
        return Err(Error::Validation("all windows must have the same shape".into()));
    }
    let n = real.len() + gen.len();
    let rows: Vec<Vec<f64>> = real.iter().chain(gen).map(|w| w.to_row_major()).collect();
    let mut mean = vec![0.0; dim];
    for r in &rows {
        mean.iter_mut().zip(r).for_each(|(m, v)| *m += v / n as f64);
    }
    let x = DMatrix::from_fn(n, dim, |i, j| rows[i][j] - mean[j]);
    let cov = (x.transpose() * &x) / ((n.max(2) - 1) as f64);
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let total: f64 = eig.eigenvalues.iter().map(|v| v.max(0.0)).sum();
    let pick = |k: usize| order.get(k).copied();
    let axis = |k: usize| pick(k).map(|c| eig.eigenvectors.column(c).into_owned());
    let (a1, a2) = (axis(0), axis(1));
    let project = |i: usize| {
        let row = x.row(i);
        let c = |a: &Option<nalgebra::DVector<f64>>| a.as_ref().map_or(0.0, |v| row.dot(&v.transpose()));
        [c(&a1), c(&a2)]
    };
    let var = |k: usize| pick(k).map_or(0.0, |c| eig.eigenvalues[c].max(0.0));
    let explained_variance = [var(0), var(1)];
    let ratio = |v: f64| if total > 0.0 { v / total } else { 0.0 };
    Ok(PcaProjection {
        real: (0..real.len()).map(project).collect(),
        generated: (real.len()..n).map(project).collect(),
        explained_variance,
        explained_ratio: [ratio(explained_variance[0]), ratio(explained_variance[1])],
    })
}
