//! Compressed sparse rows, block systems and a pivoted band LU.
//!
//! The structured lattice ordering keeps every coupled system banded, so
//! a band factorization with partial pivoting is the direct solver for
//! both the saddle-point steps and their transposes.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    pub nrows: usize,
    pub ncols: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<usize>,
    pub data: Vec<f64>,
}

impl CsrMatrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        CsrMatrix { nrows, ncols, indptr: vec![0; nrows + 1], indices: Vec::new(), data: Vec::new() }
    }

    /// Sums duplicate entries.
    pub fn from_triplets(nrows: usize, ncols: usize, mut t: Vec<(usize, usize, f64)>) -> Self {
        // stable: duplicates are summed in insertion (element) order
        t.sort_by_key(|a| (a.0, a.1));
        let mut indptr = vec![0; nrows + 1];
        let mut indices = Vec::with_capacity(t.len());
        let mut data: Vec<f64> = Vec::with_capacity(t.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in t {
            debug_assert!(r < nrows && c < ncols);
            if last == Some((r, c)) {
                *data.last_mut().unwrap() += v;
            } else {
                indices.push(c);
                data.push(v);
                indptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..nrows {
            indptr[r + 1] += indptr[r];
        }
        CsrMatrix { nrows, ncols, indptr, indices, data }
    }

    pub fn nnz(&self) -> usize {
        self.data.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let s = self.indptr[r]..self.indptr[r + 1];
        self.indices[s.clone()].iter().copied().zip(self.data[s].iter().copied())
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.row(r).filter(|&(j, _)| j == c).map(|(_, v)| v).sum()
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.nrows).flat_map(move |r| self.row(r).map(move |(c, v)| (r, c, v)))
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.ncols);
        (0..self.nrows).map(|r| self.row(r).map(|(c, v)| v * x[c]).sum()).collect()
    }

    /// `y += alpha * A x`
    pub fn matvec_add(&self, alpha: f64, x: &[f64], y: &mut [f64]) {
        for (r, yr) in y.iter_mut().enumerate().take(self.nrows) {
            let s: f64 = self.row(r).map(|(c, v)| v * x[c]).sum();
            *yr += alpha * s;
        }
    }

    pub fn matvec_transpose(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.nrows);
        let mut y = vec![0.0; self.ncols];
        for (r, &xr) in x.iter().enumerate() {
            for (c, v) in self.row(r) {
                y[c] += v * xr;
            }
        }
        y
    }

    /// `yᵀ A x`
    pub fn bilinear(&self, y: &[f64], x: &[f64]) -> f64 {
        (0..self.nrows).map(|r| y[r] * self.row(r).map(|(c, v)| v * x[c]).sum::<f64>()).sum()
    }

    pub fn transpose(&self) -> CsrMatrix {
        CsrMatrix::from_triplets(self.ncols, self.nrows, self.triplets().map(|(r, c, v)| (c, r, v)).collect())
    }

    pub fn scaled(&self, s: f64) -> CsrMatrix {
        let mut out = self.clone();
        out.data.iter_mut().for_each(|v| *v *= s);
        out
    }

    /// Linear combination `Σ sᵢ Aᵢ` of same-shape matrices.
    pub fn combine(terms: &[(f64, &CsrMatrix)]) -> CsrMatrix {
        let (nrows, ncols) = (terms[0].1.nrows, terms[0].1.ncols);
        let mut t = Vec::with_capacity(terms.iter().map(|(_, m)| m.nnz()).sum());
        for (s, m) in terms {
            assert_eq!((m.nrows, m.ncols), (nrows, ncols));
            t.extend(m.triplets().map(|(r, c, v)| (r, c, s * v)));
        }
        CsrMatrix::from_triplets(nrows, ncols, t)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.ncols]; self.nrows];
        for (r, c, v) in self.triplets() {
            d[r][c] += v;
        }
        d
    }
}

/// Row-major band storage; row `r` keeps columns `r - kl ..= r + kl + ku`
/// so that partial pivoting fill stays in place.
#[derive(Debug, Clone)]
pub struct BandMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    a: Vec<f64>,
}

impl BandMatrix {
    pub fn from_entries(n: usize, entries: &[(usize, usize, f64)]) -> Self {
        let (mut kl, mut ku) = (0usize, 0usize);
        for &(r, c, _) in entries {
            if r > c {
                kl = kl.max(r - c);
            } else {
                ku = ku.max(c - r);
            }
        }
        let width = 2 * kl + ku + 1;
        let mut m = BandMatrix { n, kl, ku, width, a: vec![0.0; n * width] };
        for &(r, c, v) in entries {
            let k = m.idx(r, c);
            m.a[k] += v;
        }
        m
    }

    #[inline]
    fn idx(&self, r: usize, c: usize) -> usize {
        r * self.width + c + self.kl - r
    }

    pub fn bandwidths(&self) -> (usize, usize) {
        (self.kl, self.ku)
    }

    pub fn factor(mut self) -> Result<BandLu> {
        let (n, kl, ku) = (self.n, self.kl, self.ku);
        let mut pivots = vec![0usize; n];
        let mut mult = vec![0.0; n * kl.max(1)];
        for i in 0..n {
            let last_row = (i + kl).min(n - 1);
            let last_col = (i + kl + ku).min(n - 1);
            let mut p = i;
            let mut best = self.a[self.idx(i, i)].abs();
            for r in i + 1..=last_row {
                let v = self.a[self.idx(r, i)].abs();
                if v > best {
                    best = v;
                    p = r;
                }
            }
            if best == 0.0 {
                return Err(Error::SingularMatrix(i));
            }
            pivots[i] = p;
            if p != i {
                for c in i..=last_col {
                    let (ki, kp) = (self.idx(i, c), self.idx(p, c));
                    self.a.swap(ki, kp);
                }
            }
            let pivot = self.a[self.idx(i, i)];
            let len = last_col - i;
            let pivot_start = self.idx(i, i) + 1;
            for r in i + 1..=last_row {
                let kr = self.idx(r, i);
                let m = self.a[kr] / pivot;
                mult[i * kl + (r - i - 1)] = m;
                if m == 0.0 {
                    continue;
                }
                self.a[kr] = 0.0;
                let (head, tail) = self.a.split_at_mut(kr + 1);
                let src = &head[pivot_start..pivot_start + len];
                for (dst, s) in tail[..len].iter_mut().zip(src) {
                    *dst -= m * s;
                }
            }
        }
        Ok(BandLu { band: self, pivots, mult })
    }
}

#[derive(Debug, Clone)]
pub struct BandLu {
    band: BandMatrix,
    pivots: Vec<usize>,
    mult: Vec<f64>,
}

impl BandLu {
    pub fn n(&self) -> usize {
        self.band.n
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let BandMatrix { n, kl, ku, .. } = self.band;
        assert_eq!(rhs.len(), n);
        let mut b = rhs.to_vec();
        for i in 0..n {
            let p = self.pivots[i];
            if p != i {
                b.swap(i, p);
            }
            let bi = b[i];
            if bi != 0.0 {
                for r in i + 1..=(i + kl).min(n - 1) {
                    b[r] -= self.mult[i * kl + (r - i - 1)] * bi;
                }
            }
        }
        for i in (0..n).rev() {
            let last_col = (i + kl + ku).min(n - 1);
            let start = self.band.idx(i, i);
            let row = &self.band.a[start..start + (last_col - i) + 1];
            let s: f64 = row[1..].iter().zip(&b[i + 1..=last_col]).map(|(a, x)| a * x).sum();
            b[i] = (b[i] - s) / row[0];
        }
        b
    }
}

/// Index layout of a multi-field system, interleaved by lattice position so
/// the assembled matrix is banded.
#[derive(Debug, Clone)]
pub struct BlockLayout {
    sizes: Vec<usize>,
    offsets: Vec<usize>,
    /// Block-major index to band position.
    perm: Vec<usize>,
}

impl BlockLayout {
    /// `keys[b][i]` is the ordering key of DOF `i` of block `b`.
    pub fn new(keys: &[Vec<u64>]) -> Self {
        let sizes: Vec<usize> = keys.iter().map(Vec::len).collect();
        let mut offsets = vec![0; sizes.len() + 1];
        for (b, s) in sizes.iter().enumerate() {
            offsets[b + 1] = offsets[b] + s;
        }
        let offs = &offsets;
        let mut order: Vec<(u64, usize)> =
            keys.iter().enumerate().flat_map(|(b, k)| k.iter().enumerate().map(move |(i, &key)| (key, offs[b] + i))).collect();
        order.sort_unstable();
        let mut perm = vec![0; offsets[sizes.len()]];
        for (pos, &(_, g)) in order.iter().enumerate() {
            perm[g] = pos;
        }
        BlockLayout { sizes, offsets, perm }
    }

    pub fn total(&self) -> usize {
        self.perm.len()
    }

    pub fn block_size(&self, b: usize) -> usize {
        self.sizes[b]
    }

    pub fn n_blocks(&self) -> usize {
        self.sizes.len()
    }

    pub fn position(&self, block: usize, i: usize) -> usize {
        self.perm[self.offsets[block] + i]
    }

    /// Scatters per-block vectors into band order.
    pub fn pack(&self, parts: &[&[f64]]) -> Vec<f64> {
        let mut out = vec![0.0; self.total()];
        for (b, part) in parts.iter().enumerate() {
            assert_eq!(part.len(), self.sizes[b]);
            for (i, v) in part.iter().enumerate() {
                out[self.position(b, i)] = *v;
            }
        }
        out
    }

    pub fn unpack(&self, x: &[f64]) -> Vec<Vec<f64>> {
        (0..self.n_blocks()).map(|b| (0..self.sizes[b]).map(|i| x[self.position(b, i)]).collect()).collect()
    }
}

/// Block operator `[A_ij]` over a [`BlockLayout`].
#[derive(Debug, Clone)]
pub struct BlockSystem<'a> {
    pub layout: &'a BlockLayout,
    pub blocks: Vec<(usize, usize, &'a CsrMatrix)>,
}

impl<'a> BlockSystem<'a> {
    pub fn new(layout: &'a BlockLayout) -> Self {
        BlockSystem { layout, blocks: Vec::new() }
    }

    pub fn with(mut self, bi: usize, bj: usize, m: &'a CsrMatrix) -> Self {
        assert_eq!(m.nrows, self.layout.block_size(bi));
        assert_eq!(m.ncols, self.layout.block_size(bj));
        self.blocks.push((bi, bj, m));
        self
    }

    pub fn matvec_parts(&self, x: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let mut y: Vec<Vec<f64>> = (0..self.layout.n_blocks()).map(|b| vec![0.0; self.layout.block_size(b)]).collect();
        for &(bi, bj, m) in &self.blocks {
            m.matvec_add(1.0, &x[bj], &mut y[bi]);
        }
        y
    }

    pub fn factor(&self) -> Result<BandLu> {
        let mut entries = Vec::with_capacity(self.blocks.iter().map(|b| b.2.nnz()).sum());
        for &(bi, bj, m) in &self.blocks {
            for (r, c, v) in m.triplets() {
                entries.push((self.layout.position(bi, r), self.layout.position(bj, c), v));
            }
        }
        BandMatrix::from_entries(self.layout.total(), &entries).factor()
    }

    /// Direct solve followed by a relative residual check against `tol`.
    pub fn solve_checked(&self, lu: &BandLu, rhs: &[Vec<f64>], tol: f64) -> Result<Vec<Vec<f64>>> {
        let parts: Vec<&[f64]> = rhs.iter().map(Vec::as_slice).collect();
        let b = self.layout.pack(&parts);
        let bnorm = norm2(&b);
        if bnorm == 0.0 {
            return Ok(rhs.iter().map(|r| vec![0.0; r.len()]).collect());
        }
        let x = self.layout.unpack(&lu.solve(&b));
        let ax = self.matvec_parts(&x);
        let res: f64 = ax.iter().flatten().zip(rhs.iter().flatten()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        let rel = res / bnorm;
        if rel.is_nan() || rel > tol {
            return Err(Error::LinearSolveFailed { residual: rel, tol });
        }
        Ok(x)
    }
}

pub fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}
