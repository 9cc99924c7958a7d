//! Dense moment and cumulant tensors of order 1 to 4.
//!
//! Indices follow the usual convention: the moments of `x` are
//! `κ^i = E x^i`, `κ^{ij} = E x^i x^j`, ... and the cumulants are written with
//! commas, `κ^{i,j}`, `κ^{i,j,k}`, ... The two families are related by sums
//! over index partitions, which [`bracket_sum`] evaluates: `a^i b^{jk}[3]`
//! stands for `a^i b^{jk} + a^j b^{ik} + a^k b^{ij}`.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Largest dimension for which order-3 and order-4 tensors are materialised.
///
/// At `D = 64` an order-4 tensor of `f64` takes 128 MiB.
pub const DEFAULT_DENSE_CAP: usize = 64;

/// Dense tensor with `dim^order` entries stored in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseTensor {
    order: usize,
    dim: usize,
    data: Vec<f64>,
}

impl DenseTensor {
    pub fn zeros(order: usize, dim: usize) -> Self {
        assert!((1..=4).contains(&order), "tensor order must be 1..=4");
        DenseTensor {
            order,
            dim,
            data: vec![0.0; dim.pow(order as u32)],
        }
    }

    pub fn from_vec(order: usize, dim: usize, data: Vec<f64>) -> Result<Self> {
        if !(1..=4).contains(&order) {
            return Err(Error::InvalidParameter(format!(
                "tensor order {order} outside 1..=4"
            )));
        }
        let expected = dim.pow(order as u32);
        if data.len() != expected {
            return Err(Error::DimensionMismatch {
                index: 0,
                expected,
                got: data.len(),
            });
        }
        Ok(DenseTensor { order, dim, data })
    }

    pub fn from_vector(v: &DVector<f64>) -> Self {
        DenseTensor {
            order: 1,
            dim: v.len(),
            data: v.iter().copied().collect(),
        }
    }

    pub fn from_matrix(m: &DMatrix<f64>) -> Self {
        assert_eq!(m.nrows(), m.ncols(), "matrix must be square");
        let dim = m.nrows();
        let mut data = Vec::with_capacity(dim * dim);
        for i in 0..dim {
            for j in 0..dim {
                data.push(m[(i, j)]);
            }
        }
        DenseTensor {
            order: 2,
            dim,
            data,
        }
    }

    pub fn to_vector(&self) -> DVector<f64> {
        assert_eq!(self.order, 1);
        DVector::from_column_slice(&self.data)
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        assert_eq!(self.order, 2);
        DMatrix::from_row_slice(self.dim, self.dim, &self.data)
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    fn offset(&self, index: &[usize]) -> usize {
        debug_assert_eq!(index.len(), self.order);
        index.iter().fold(0, |acc, &i| acc * self.dim + i)
    }

    pub fn get(&self, index: &[usize]) -> f64 {
        self.data[self.offset(index)]
    }

    pub fn set(&mut self, index: &[usize], value: f64) {
        let o = self.offset(index);
        self.data[o] = value;
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&x| x == 0.0)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, &x| m.max(x.abs()))
    }

    pub fn scaled(&self, s: f64) -> Self {
        DenseTensor {
            order: self.order,
            dim: self.dim,
            data: self.data.iter().map(|x| x * s).collect(),
        }
    }

    /// `self + s * other`.
    pub fn add_scaled(&self, other: &DenseTensor, s: f64) -> Result<Self> {
        self.check_same_shape(other)?;
        Ok(DenseTensor {
            order: self.order,
            dim: self.dim,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a + s * b)
                .collect(),
        })
    }

    fn check_same_shape(&self, other: &DenseTensor) -> Result<()> {
        if self.order != other.order || self.dim != other.dim {
            return Err(Error::InvalidParameter(format!(
                "shape mismatch: order {} dim {} vs order {} dim {}",
                self.order, self.dim, other.order, other.dim
            )));
        }
        Ok(())
    }

    /// Average over all index permutations.
    pub fn symmetrized(&self) -> Self {
        let perms = permutations(self.order);
        let mut out = DenseTensor::zeros(self.order, self.dim);
        let mut idx = vec![0usize; self.order];
        let mut permuted = vec![0usize; self.order];
        for flat in 0..self.data.len() {
            unflatten(flat, self.dim, &mut idx);
            let mut acc = 0.0;
            for p in &perms {
                for (slot, &src) in p.iter().enumerate() {
                    permuted[slot] = idx[src];
                }
                acc += self.get(&permuted);
            }
            out.data[flat] = acc / perms.len() as f64;
        }
        out
    }

    /// Largest deviation from full permutation symmetry, relative to the
    /// largest entry. Zero means every entry equals all its index
    /// permutations bit for bit.
    pub fn asymmetry(&self) -> f64 {
        let scale = self.max_abs();
        if scale == 0.0 {
            return 0.0;
        }
        let perms = permutations(self.order);
        let mut idx = vec![0usize; self.order];
        let mut permuted = vec![0usize; self.order];
        let mut worst = 0.0f64;
        for flat in 0..self.data.len() {
            unflatten(flat, self.dim, &mut idx);
            for p in &perms {
                for (slot, &src) in p.iter().enumerate() {
                    permuted[slot] = idx[src];
                }
                worst = worst.max((self.get(&permuted) - self.data[flat]).abs());
            }
        }
        worst / scale
    }

    /// Copy the entry at each sorted multi-index to all its permutations.
    fn fill_from_sorted(&mut self) {
        let mut idx = vec![0usize; self.order];
        for flat in 0..self.data.len() {
            unflatten(flat, self.dim, &mut idx);
            idx.sort_unstable();
            let src = self.offset(&idx);
            self.data[flat] = self.data[src];
        }
    }

    /// Contract every index but the first with `v`: `T^{i j k ...} v_j v_k ...`.
    pub fn contract_tail(&self, v: &DVector<f64>) -> DVector<f64> {
        assert_eq!(v.len(), self.dim);
        let d = self.dim;
        let mut cur = self.data.clone();
        let mut len = cur.len();
        for _ in 1..self.order {
            len /= d;
            let mut next = vec![0.0; len];
            for (o, slot) in next.iter_mut().enumerate() {
                let row = &cur[o * d..(o + 1) * d];
                *slot = row.iter().zip(v.iter()).map(|(a, b)| a * b).sum();
            }
            cur = next;
        }
        DVector::from_vec(cur)
    }

    /// Relative max-norm distance, `max|a-b| / max(max|a|, max|b|, floor)`.
    pub fn relative_distance(&self, other: &DenseTensor, floor: f64) -> f64 {
        let diff = self
            .data
            .iter()
            .zip(&other.data)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        diff / self.max_abs().max(other.max_abs()).max(floor)
    }
}

fn unflatten(mut flat: usize, dim: usize, idx: &mut [usize]) {
    for slot in idx.iter_mut().rev() {
        *slot = flat % dim;
        flat /= dim;
    }
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    fn rec(prefix: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        if prefix.len() == used.len() {
            out.push(prefix.clone());
            return;
        }
        for i in 0..used.len() {
            if !used[i] {
                used[i] = true;
                prefix.push(i);
                rec(prefix, used, out);
                prefix.pop();
                used[i] = false;
            }
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::new(), &mut vec![false; n], &mut out);
    out
}

/// One product term of a bracket sum: for each factor, the output positions
/// its indices occupy.
type Term = Vec<Vec<usize>>;

fn bracket_terms(factors: &[&DenseTensor]) -> Result<Vec<Term>> {
    if factors.is_empty() {
        return Err(Error::InvalidParameter("bracket sum needs a factor".into()));
    }
    let order: usize = factors.iter().map(|f| f.order).sum();
    if order > 4 {
        return Err(Error::InvalidParameter(format!(
            "bracket pattern has total order {order}, at most 4 supported"
        )));
    }
    let dim = factors[0].dim;
    if let Some(f) = factors.iter().find(|f| f.dim != dim) {
        return Err(Error::DimensionMismatch {
            index: 0,
            expected: dim,
            got: f.dim,
        });
    }
    // Factors passed by the same reference are the same symbol, so swapping
    // them does not produce a new term.
    let symbol: Vec<usize> = factors
        .iter()
        .map(|f| {
            factors
                .iter()
                .position(|g| std::ptr::eq(*f, *g))
                .expect("factor is in its own list")
        })
        .collect();

    let mut seen = BTreeSet::new();
    let mut terms = Vec::new();
    for perm in permutations(order) {
        let mut slot = 0;
        let mut key: Vec<(usize, Vec<usize>)> = Vec::with_capacity(factors.len());
        let mut term: Term = Vec::with_capacity(factors.len());
        for (fi, f) in factors.iter().enumerate() {
            let mut pos: Vec<usize> = perm[slot..slot + f.order].to_vec();
            slot += f.order;
            // factors are symmetric tensors: index order inside one factor is irrelevant
            pos.sort_unstable();
            key.push((symbol[fi], pos.clone()));
            term.push(pos);
        }
        key.sort();
        if seen.insert(key) {
            terms.push(term);
        }
    }
    Ok(terms)
}

/// Number of distinct terms in the bracket sum of `factors` (the `[n]` in the
/// bracket notation).
pub fn bracket_count(factors: &[&DenseTensor]) -> Result<usize> {
    Ok(bracket_terms(factors)?.len())
}

/// Sum of the product of `factors` over all distinct partitions of the output
/// indices into blocks of the factors' orders.
///
/// Factors are assumed symmetric. Passing the same reference twice marks the
/// two factors as the same symbol, so `bracket_sum(&[&k1, &k1, &k2])` is
/// `κ^i κ^j κ^{k,l}[6]` while two different first-order tensors `a`, `b` give
/// `a^i b^j[2]`.
pub fn bracket_sum(factors: &[&DenseTensor]) -> Result<DenseTensor> {
    let terms = bracket_terms(factors)?;
    let order: usize = factors.iter().map(|f| f.order).sum();
    let dim = factors[0].dim;
    let mut out = DenseTensor::zeros(order, dim);
    if factors.iter().any(|f| f.is_zero()) {
        return Ok(out);
    }
    let mut idx = vec![0usize; order];
    let mut sub = [0usize; 4];
    for flat in 0..out.data.len() {
        unflatten(flat, dim, &mut idx);
        let mut acc = 0.0;
        for term in &terms {
            let mut prod = 1.0;
            for (f, pos) in factors.iter().zip(term) {
                for (k, &p) in pos.iter().enumerate() {
                    sub[k] = idx[p];
                }
                prod *= f.get(&sub[..pos.len()]);
            }
            acc += prod;
        }
        out.data[flat] = acc;
    }
    Ok(out)
}

macro_rules! tensor_set {
    ($name:ident, $what:literal) => {
        #[doc = concat!("Dense ", $what, " of orders 1 to 4 in dimension `D`.")]
        #[derive(Debug, Clone, PartialEq)]
        pub struct $name {
            orders: [DenseTensor; 4],
        }

        impl $name {
            pub fn new(
                first: DenseTensor,
                second: DenseTensor,
                third: DenseTensor,
                fourth: DenseTensor,
            ) -> Result<Self> {
                let dim = first.dim;
                for (k, t) in [&first, &second, &third, &fourth].iter().enumerate() {
                    if t.order != k + 1 {
                        return Err(Error::InvalidParameter(format!(
                            "slot {} holds an order-{} tensor",
                            k + 1,
                            t.order
                        )));
                    }
                    if t.dim != dim {
                        return Err(Error::DimensionMismatch {
                            index: k + 1,
                            expected: dim,
                            got: t.dim,
                        });
                    }
                }
                Ok($name {
                    orders: [first, second, third, fourth],
                })
            }

            pub fn zeros(dim: usize, cap: usize) -> Result<Self> {
                check_cap(dim, cap)?;
                Ok($name {
                    orders: [1, 2, 3, 4].map(|k| DenseTensor::zeros(k, dim)),
                })
            }

            pub fn dim(&self) -> usize {
                self.orders[0].dim
            }

            /// Tensor of the given order (1..=4).
            pub fn order(&self, k: usize) -> &DenseTensor {
                &self.orders[k - 1]
            }

            pub fn order_mut(&mut self, k: usize) -> &mut DenseTensor {
                &mut self.orders[k - 1]
            }

            /// Largest relative max-norm difference over the four orders.
            pub fn relative_distance(&self, other: &Self, floor: f64) -> f64 {
                self.orders
                    .iter()
                    .zip(&other.orders)
                    .map(|(a, b)| a.relative_distance(b, floor))
                    .fold(0.0, f64::max)
            }
        }
    };
}

tensor_set!(MomentSet, "raw moments `κ^i, κ^{ij}, κ^{ijk}, κ^{ijkl}`");
tensor_set!(CumulantSet, "cumulants `κ^i, κ^{i,j}, κ^{i,j,k}, κ^{i,j,k,l}`");

fn check_cap(dim: usize, cap: usize) -> Result<()> {
    if dim > cap {
        return Err(Error::DenseCapExceeded {
            order: 4,
            dim,
            cap,
        });
    }
    Ok(())
}

impl MomentSet {
    /// Empirical raw moments (normalised by `1/n`) of the given rows.
    ///
    /// Each product is formed once per sorted index tuple, so the result is
    /// exactly symmetric.
    pub fn empirical<'a, I>(rows: I, dim: usize, cap: usize) -> Result<Self>
    where
        I: IntoIterator<Item = &'a [f64]>,
    {
        check_cap(dim, cap)?;
        let mut set = MomentSet::zeros(dim, cap)?;
        let mut n = 0usize;
        let (d2, d3) = (dim * dim, dim * dim * dim);
        for (r, x) in rows.into_iter().enumerate() {
            if x.len() != dim {
                return Err(Error::DimensionMismatch {
                    index: r,
                    expected: dim,
                    got: x.len(),
                });
            }
            n += 1;
            let [t1, t2, t3, t4] = &mut set.orders;
            for i in 0..dim {
                t1.data[i] += x[i];
                for j in i..dim {
                    let xij = x[i] * x[j];
                    t2.data[i * dim + j] += xij;
                    for k in j..dim {
                        let xijk = xij * x[k];
                        t3.data[i * d2 + j * dim + k] += xijk;
                        for l in k..dim {
                            t4.data[i * d3 + j * d2 + k * dim + l] += xijk * x[l];
                        }
                    }
                }
            }
        }
        if n == 0 {
            return Err(Error::TooFewSamples {
                class: 0,
                count: 0,
                needed: 1,
            });
        }
        let inv = 1.0 / n as f64;
        for t in &mut set.orders {
            for a in &mut t.data {
                *a *= inv;
            }
            t.fill_from_sorted();
        }
        Ok(set)
    }

    /// Mixture of moment sets: `Σ_c weight_c · M_c`.
    pub fn mixture(parts: &[(f64, &MomentSet)]) -> Result<Self> {
        let (w0, first) = parts
            .first()
            .ok_or_else(|| Error::InvalidParameter("empty mixture".into()))?;
        let mut orders = first.orders.clone().map(|t| t.scaled(*w0));
        for (w, m) in &parts[1..] {
            for k in 0..4 {
                orders[k] = orders[k].add_scaled(&m.orders[k], *w)?;
            }
        }
        Ok(MomentSet { orders })
    }
}

/// Moments in terms of cumulants:
///
/// ```text
/// κ^{ij}   = κ^{i,j} + κ^i κ^j
/// κ^{ijk}  = κ^{i,j,k} + κ^i κ^{j,k}[3] + κ^i κ^j κ^k
/// κ^{ijkl} = κ^{i,j,k,l} + κ^i κ^{j,k,l}[4] + κ^{i,j} κ^{k,l}[3]
///            + κ^i κ^j κ^{k,l}[6] + κ^i κ^j κ^k κ^l
/// ```
pub fn moments_from_cumulants(c: &CumulantSet) -> Result<MomentSet> {
    let [k1, k2, k3, k4] = &c.orders;
    let m2 = k2.add_scaled(&bracket_sum(&[k1, k1])?, 1.0)?;
    let m3 = k3
        .add_scaled(&bracket_sum(&[k1, k2])?, 1.0)?
        .add_scaled(&bracket_sum(&[k1, k1, k1])?, 1.0)?;
    let m4 = k4
        .add_scaled(&bracket_sum(&[k1, k3])?, 1.0)?
        .add_scaled(&bracket_sum(&[k2, k2])?, 1.0)?
        .add_scaled(&bracket_sum(&[k1, k1, k2])?, 1.0)?
        .add_scaled(&bracket_sum(&[k1, k1, k1, k1])?, 1.0)?;
    MomentSet::new(k1.clone(), m2, m3, m4)
}

/// Cumulants in terms of moments, the inverse of [`moments_from_cumulants`]:
///
/// ```text
/// κ^{i,j}     = κ^{ij} − κ^i κ^j
/// κ^{i,j,k}   = κ^{ijk} − κ^i κ^{jk}[3] + 2 κ^i κ^j κ^k
/// κ^{i,j,k,l} = κ^{ijkl} − κ^i κ^{jkl}[4] − κ^{ij} κ^{kl}[3]
///               + 2 κ^i κ^j κ^{kl}[6] − 6 κ^i κ^j κ^k κ^l
/// ```
pub fn cumulants_from_moments(m: &MomentSet) -> Result<CumulantSet> {
    let [m1, m2, m3, m4] = &m.orders;
    let c2 = m2.add_scaled(&bracket_sum(&[m1, m1])?, -1.0)?;
    let c3 = m3
        .add_scaled(&bracket_sum(&[m1, m2])?, -1.0)?
        .add_scaled(&bracket_sum(&[m1, m1, m1])?, 2.0)?;
    let c4 = m4
        .add_scaled(&bracket_sum(&[m1, m3])?, -1.0)?
        .add_scaled(&bracket_sum(&[m2, m2])?, -1.0)?
        .add_scaled(&bracket_sum(&[m1, m1, m2])?, 2.0)?
        .add_scaled(&bracket_sum(&[m1, m1, m1, m1])?, -6.0)?;
    CumulantSet::new(m1.clone(), c2, c3, c4)
}
