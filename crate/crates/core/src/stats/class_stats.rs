use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::{Grouping, LabeledDataset};
use crate::error::{Error, Result};

/// Per-class and pooled first and second order summaries.
///
/// For binary problems group 0 is the negative class and group 1 the
/// positive one, so `mean_difference = κ₊ − κ₋`.
///
/// `within_class_covariance` is the *sum* of the class covariances, not
/// their average. Only its direction matters for the discriminant.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassStats {
    pub class_means: Vec<DVector<f64>>,
    /// Unbiased (1/(n−1)) class covariances.
    pub class_covariances: Vec<DMatrix<f64>>,
    pub sample_counts: Vec<usize>,
    /// Mixture weight of each group (n_c / n for empirical stats).
    pub class_weights: Vec<f64>,
    pub pooled_mean: DVector<f64>,
    /// Second moment of the pooled data after removing the pooled mean
    /// (1/n normalisation).
    pub pooled_second_moment: DMatrix<f64>,
    pub within_class_covariance: DMatrix<f64>,
    pub grouping: Grouping,
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let s = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = s;
            m[(j, i)] = s;
        }
    }
}

/// Row indices of each group.
pub(crate) fn group_indices(data: &LabeledDataset, grouping: &Grouping) -> Result<Vec<Vec<usize>>> {
    let mut idx = vec![Vec::new(); grouping.num_groups()];
    for (i, &l) in data.labels().iter().enumerate() {
        idx[grouping.group_of(l)?].push(i);
    }
    Ok(idx)
}

/// Mean and unbiased covariance of the given rows.
pub(crate) fn mean_and_covariance(data: &LabeledDataset, rows: &[usize]) -> (DVector<f64>, DMatrix<f64>) {
    let d = data.dim();
    let n = rows.len();
    let mut mean = DVector::zeros(d);
    for &i in rows {
        for (m, x) in mean.iter_mut().zip(data.row(i)) {
            *m += x;
        }
    }
    mean /= n as f64;
    let mut centered = DMatrix::zeros(n, d);
    for (r, &i) in rows.iter().enumerate() {
        for (j, x) in data.row(i).iter().enumerate() {
            centered[(r, j)] = x - mean[j];
        }
    }
    let mut cov = centered.tr_mul(&centered);
    if n > 1 {
        cov /= (n - 1) as f64;
    } else {
        cov.fill(0.0);
    }
    symmetrize(&mut cov);
    (mean, cov)
}

impl ClassStats {
    /// Stats of an exact mixture: group `c` has weight `weights[c]`, mean
    /// `means[c]` and covariance `covs[c]`. Used for analytic oracles.
    pub fn from_population(
        means: Vec<DVector<f64>>,
        covs: Vec<DMatrix<f64>>,
        weights: Vec<f64>,
    ) -> Result<Self> {
        let c = means.len();
        if c == 0 || covs.len() != c || weights.len() != c {
            return Err(Error::InvalidParameter(
                "means, covariances and weights must have the same nonzero length".into(),
            ));
        }
        let d = means[0].len();
        for (i, (m, s)) in means.iter().zip(&covs).enumerate() {
            if m.len() != d || s.nrows() != d || s.ncols() != d {
                return Err(Error::DimensionMismatch {
                    index: i,
                    expected: d,
                    got: m.len(),
                });
            }
        }
        let total: f64 = weights.iter().sum();
        let weights: Vec<f64> = weights.iter().map(|w| w / total).collect();
        let pooled_mean = means
            .iter()
            .zip(&weights)
            .fold(DVector::zeros(d), |acc, (m, w)| acc + m * *w);
        let mut pooled = DMatrix::zeros(d, d);
        let mut within = DMatrix::zeros(d, d);
        for ((m, s), w) in means.iter().zip(&covs).zip(&weights) {
            let dm = m - &pooled_mean;
            pooled += (s + &dm * dm.transpose()) * *w;
            within += s;
        }
        symmetrize(&mut pooled);
        symmetrize(&mut within);
        Ok(ClassStats {
            class_means: means,
            class_covariances: covs,
            sample_counts: vec![0; c],
            class_weights: weights,
            pooled_mean,
            pooled_second_moment: pooled,
            within_class_covariance: within,
            grouping: Grouping::identity(c),
        })
    }

    pub fn dim(&self) -> usize {
        self.pooled_mean.len()
    }

    pub fn num_groups(&self) -> usize {
        self.class_means.len()
    }

    fn require_binary(&self) -> Result<()> {
        if self.num_groups() != 2 {
            return Err(Error::NonBinaryLabels(self.num_groups()));
        }
        Ok(())
    }

    /// `m = κ₊ − κ₋`.
    pub fn mean_difference(&self) -> Result<DVector<f64>> {
        self.require_binary()?;
        Ok(&self.class_means[1] - &self.class_means[0])
    }

    /// `κ_b = m mᵀ`.
    pub fn between_class(&self) -> Result<DMatrix<f64>> {
        let m = self.mean_difference()?;
        Ok(&m * m.transpose())
    }

    /// Class covariance with 1/n normalisation (equal to the unbiased one
    /// for population stats).
    pub fn class_covariance_biased(&self, c: usize) -> DMatrix<f64> {
        let n = self.sample_counts[c];
        if n == 0 {
            self.class_covariances[c].clone()
        } else {
            &self.class_covariances[c] * ((n - 1) as f64 / n as f64)
        }
    }
}

/// Per-class means and covariances plus pooled summaries.
pub fn estimate_class_stats(data: &LabeledDataset, grouping: &Grouping) -> Result<ClassStats> {
    let groups = group_indices(data, grouping)?;
    for (class, rows) in groups.iter().enumerate() {
        if rows.len() < 2 {
            return Err(Error::TooFewSamples {
                class,
                count: rows.len(),
                needed: 2,
            });
        }
    }
    let d = data.dim();
    let n = data.len() as f64;
    let mut means = Vec::with_capacity(groups.len());
    let mut covs = Vec::with_capacity(groups.len());
    for rows in &groups {
        let (m, s) = mean_and_covariance(data, rows);
        means.push(m);
        covs.push(s);
    }
    let counts: Vec<usize> = groups.iter().map(Vec::len).collect();
    let weights: Vec<f64> = counts.iter().map(|&c| c as f64 / n).collect();
    let pooled_mean = means
        .iter()
        .zip(&counts)
        .fold(DVector::zeros(d), |acc, (m, &c)| acc + m * c as f64)
        / n;
    // pooled scatter = sum of class scatters + between-class scatter
    let mut pooled = DMatrix::zeros(d, d);
    let mut within = DMatrix::zeros(d, d);
    for ((m, s), &c) in means.iter().zip(&covs).zip(&counts) {
        let dm = m - &pooled_mean;
        pooled += s * (c - 1) as f64 + &dm * dm.transpose() * c as f64;
        within += s;
    }
    pooled /= n;
    symmetrize(&mut pooled);
    symmetrize(&mut within);
    Ok(ClassStats {
        class_means: means,
        class_covariances: covs,
        sample_counts: counts,
        class_weights: weights,
        pooled_mean,
        pooled_second_moment: pooled,
        within_class_covariance: within,
        grouping: grouping.clone(),
    })
}

/// Which fourth-order tensor to contract with `v ⊗ v ⊗ v`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FourthOrderTensor {
    /// Σ_c κ_c^{i,j,k,l}: the within-class fourth cumulant.
    WithinCumulant,
    /// κ^{ijkl} of the pooled (centred) data.
    FullMoment,
    /// Σ_c E_c[z^i z^j z^k z^l] with z the class-centred input.
    WithinMoment,
    /// κ^{i,j,k,l} of the pooled data.
    FullCumulant,
}

impl FourthOrderTensor {
    pub const ALL: [FourthOrderTensor; 4] = [
        FourthOrderTensor::WithinCumulant,
        FourthOrderTensor::FullMoment,
        FourthOrderTensor::WithinMoment,
        FourthOrderTensor::FullCumulant,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FourthOrderTensor::WithinCumulant => "within_cumulant",
            FourthOrderTensor::FullMoment => "full_moment",
            FourthOrderTensor::WithinMoment => "within_moment",
            FourthOrderTensor::FullCumulant => "full_cumulant",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Unknown {
                kind: "tensor mode",
                name: s.to_string(),
            })
    }
}

/// Streaming sums over one group: a = Σ z (z·v)³, b = Σ z (z·v), c = Σ (z·v)².
fn contracted_sums(
    data: &LabeledDataset,
    rows: &[usize],
    center: &DVector<f64>,
    v: &DVector<f64>,
) -> (DVector<f64>, DVector<f64>, f64) {
    let d = data.dim();
    let mut a = DVector::zeros(d);
    let mut b = DVector::zeros(d);
    let mut c = 0.0;
    let mut z = vec![0.0; d];
    for &i in rows {
        let mut p = 0.0;
        for (j, x) in data.row(i).iter().enumerate() {
            z[j] = x - center[j];
            p += z[j] * v[j];
        }
        let p3 = p * p * p;
        for j in 0..d {
            a[j] += z[j] * p3;
            b[j] += z[j] * p;
        }
        c += p * p;
    }
    (a, b, c)
}

/// `u_i = T^{ijkl} v_j v_k v_l` for the chosen tensor, computed in one pass
/// per group without forming the order-4 tensor.
pub fn contract_fourth_order(
    data: &LabeledDataset,
    stats: &ClassStats,
    v: &DVector<f64>,
    mode: FourthOrderTensor,
) -> Result<DVector<f64>> {
    if v.len() != data.dim() || stats.dim() != data.dim() {
        return Err(Error::DimensionMismatch {
            index: 0,
            expected: data.dim(),
            got: v.len(),
        });
    }
    let d = data.dim();
    match mode {
        FourthOrderTensor::WithinCumulant | FourthOrderTensor::WithinMoment => {
            let groups = group_indices(data, &stats.grouping)?;
            let mut u = DVector::zeros(d);
            for (c, rows) in groups.iter().enumerate() {
                if rows.is_empty() {
                    return Err(Error::TooFewSamples {
                        class: c,
                        count: 0,
                        needed: 1,
                    });
                }
                let n = rows.len() as f64;
                let (a, b, q) = contracted_sums(data, rows, &stats.class_means[c], v);
                u += a / n;
                if mode == FourthOrderTensor::WithinCumulant {
                    // Wick part with the 1/n class covariance
                    u -= b * (3.0 * q / (n * n));
                }
            }
            Ok(u)
        }
        FourthOrderTensor::FullMoment | FourthOrderTensor::FullCumulant => {
            let rows: Vec<usize> = (0..data.len()).collect();
            let n = rows.len() as f64;
            let (a, b, q) = contracted_sums(data, &rows, &stats.pooled_mean, v);
            let mut u = a / n;
            if mode == FourthOrderTensor::FullCumulant {
                u -= b * (3.0 * q / (n * n));
            }
            Ok(u)
        }
    }
}

/// `u_j = κ_w^{j,k,l,m} v_k v_l v_m` with the within-class fourth cumulant
/// summed over the groups of `stats`.
pub fn contract_within_class_fourth_cumulant(
    data: &LabeledDataset,
    stats: &ClassStats,
    v: &DVector<f64>,
) -> Result<DVector<f64>> {
    contract_fourth_order(data, stats, v, FourthOrderTensor::WithinCumulant)
}
