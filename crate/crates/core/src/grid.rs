//! Pixel grids and local transport costs.
//!
//! Every solver in this crate works on couplings restricted to a `k × k`
//! neighbourhood of each pixel. A [`LocalCost`] fixes that sparsity pattern:
//! row `i` of a coupling has `k²` slots, of which the first
//! [`LocalCost::row_len`]`(i)` are valid. Slot 0 is always the pixel itself
//! (cost 0); the remaining valid slots list the in-bounds neighbours of the
//! same channel in row-major offset order. Slots past the row length are
//! padding and always hold zero.

use crate::error::{Error, Result};

/// Default cap on `n` for anything that materialises an `n × n` table.
pub const DEFAULT_DENSE_CAP: usize = 4096;

/// Dimensions of a (possibly multi-channel) image.
///
/// Pixels are indexed channel-major and then row-major:
/// `index = (channel * height + row) * width + col`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct GridShape {
    width: usize,
    height: usize,
    channels: usize,
}

impl GridShape {
    pub fn new(width: usize, height: usize, channels: usize) -> Result<Self> {
        if width == 0 || height == 0 || channels == 0 {
            return Err(Error::InvalidParameter(format!(
                "grid dimensions must be positive, got {width}x{height}x{channels}"
            )));
        }
        Ok(Self {
            width,
            height,
            channels,
        })
    }

    /// Single-channel `width × height` grid.
    pub fn square(side: usize) -> Result<Self> {
        Self::new(side, side, 1)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// Total number of pixels `n = width · height · channels`.
    pub fn len(&self) -> usize {
        self.width * self.height * self.channels
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn index(&self, channel: usize, row: usize, col: usize) -> usize {
        (channel * self.height + row) * self.width + col
    }

    /// Inverse of [`GridShape::index`]: `(channel, row, col)`.
    pub fn position(&self, index: usize) -> (usize, usize, usize) {
        let plane = self.width * self.height;
        let channel = index / plane;
        let rem = index % plane;
        (channel, rem / self.width, rem % self.width)
    }
}

/// Transport cost restricted to `k × k` neighbourhoods.
///
/// Immutable after construction; share it behind an `Arc`.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalCost {
    shape: GridShape,
    k: usize,
    stride: usize,
    row_len: Vec<usize>,
    targets: Vec<usize>,
    costs: Vec<f64>,
    min_offdiag: f64,
    col_ptr: Vec<usize>,
    col_slots: Vec<usize>,
}

/// Euclidean distance between pixel indices, the default ground cost.
pub fn euclidean(drow: isize, dcol: isize) -> f64 {
    ((drow * drow + dcol * dcol) as f64).sqrt()
}

/// Euclidean-cost neighbourhoods of side `k` on `shape`.
pub fn build_euclidean_cost(shape: GridShape, k: usize) -> Result<LocalCost> {
    LocalCost::with_cost_fn(shape, k, euclidean)
}

impl LocalCost {
    /// Builds the neighbourhood structure with a custom ground cost.
    ///
    /// `cost_fn(drow, dcol)` gives the cost of moving mass by the given pixel
    /// offset. It must vanish at `(0, 0)` and be strictly positive and
    /// finite elsewhere.
    pub fn with_cost_fn<F>(shape: GridShape, k: usize, cost_fn: F) -> Result<Self>
    where
        F: Fn(isize, isize) -> f64,
    {
        if k == 0 || k.is_multiple_of(2) {
            return Err(Error::InvalidParameter(format!(
                "neighbourhood side k must be odd and positive, got {k}"
            )));
        }
        let max_k = 2 * shape.width.max(shape.height) - 1;
        if k > max_k {
            return Err(Error::InvalidParameter(format!(
                "neighbourhood side k = {k} exceeds {max_k} for a {}x{} grid",
                shape.width, shape.height
            )));
        }
        if cost_fn(0, 0) != 0.0 {
            return Err(Error::InvalidParameter(
                "cost of staying in place must be exactly zero".into(),
            ));
        }

        let half = (k / 2) as isize;
        let mut offsets = vec![(0isize, 0isize, 0.0)];
        for dr in -half..=half {
            for dc in -half..=half {
                if dr == 0 && dc == 0 {
                    continue;
                }
                let c = cost_fn(dr, dc);
                if !(c.is_finite() && c > 0.0) {
                    return Err(Error::InvalidParameter(format!(
                        "cost for offset ({dr}, {dc}) must be finite and positive, got {c}"
                    )));
                }
                offsets.push((dr, dc, c));
            }
        }

        let n = shape.len();
        let stride = k * k;
        let mut row_len = Vec::with_capacity(n);
        let mut targets = vec![usize::MAX; n * stride];
        let mut costs = vec![0.0; n * stride];
        let mut min_offdiag = f64::INFINITY;
        for i in 0..n {
            let (ch, r, c) = shape.position(i);
            let mut len = 0;
            for &(dr, dc, cost) in &offsets {
                let rr = r as isize + dr;
                let cc = c as isize + dc;
                if rr < 0 || cc < 0 || rr >= shape.height as isize || cc >= shape.width as isize {
                    continue;
                }
                let slot = i * stride + len;
                targets[slot] = shape.index(ch, rr as usize, cc as usize);
                costs[slot] = cost;
                if len > 0 {
                    min_offdiag = min_offdiag.min(cost);
                }
                len += 1;
            }
            row_len.push(len);
        }

        let mut col_count = vec![0usize; n];
        for i in 0..n {
            for s in 0..row_len[i] {
                col_count[targets[i * stride + s]] += 1;
            }
        }
        let mut col_ptr = vec![0usize; n + 1];
        for j in 0..n {
            col_ptr[j + 1] = col_ptr[j] + col_count[j];
        }
        let mut fill = col_ptr.clone();
        let mut col_slots = vec![0usize; col_ptr[n]];
        for i in 0..n {
            for s in 0..row_len[i] {
                let flat = i * stride + s;
                let j = targets[flat];
                col_slots[fill[j]] = flat;
                fill[j] += 1;
            }
        }

        Ok(Self {
            shape,
            k,
            stride,
            row_len,
            targets,
            costs,
            min_offdiag,
            col_ptr,
            col_slots,
        })
    }

    pub fn shape(&self) -> GridShape {
        self.shape
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Number of pixels.
    pub fn n(&self) -> usize {
        self.shape.len()
    }

    /// Slots per row (`k²`), including padding.
    pub fn stride(&self) -> usize {
        self.stride
    }

    /// Length of the block backing a coupling (`n · k²`).
    pub fn block_len(&self) -> usize {
        self.n() * self.stride
    }

    /// Number of valid neighbours of pixel `i`, itself included.
    pub fn row_len(&self, i: usize) -> usize {
        self.row_len[i]
    }

    pub fn is_valid(&self, i: usize, slot: usize) -> bool {
        slot < self.row_len[i]
    }

    /// Target pixels of the valid slots of row `i`.
    pub fn row_targets(&self, i: usize) -> &[usize] {
        let start = i * self.stride;
        &self.targets[start..start + self.row_len[i]]
    }

    /// Costs of the valid slots of row `i`; entry 0 is the zero self-cost.
    pub fn row_costs(&self, i: usize) -> &[f64] {
        let start = i * self.stride;
        &self.costs[start..start + self.row_len[i]]
    }

    /// Flat slot index `(i, slot) -> i · k² + slot`.
    pub fn flat(&self, i: usize, slot: usize) -> usize {
        i * self.stride + slot
    }

    /// Target pixel of a flat slot, `None` for padding.
    pub fn target_of(&self, flat: usize) -> Option<usize> {
        let t = self.targets[flat];
        (t != usize::MAX).then_some(t)
    }

    /// Cost of a flat slot; padding slots report zero.
    pub fn cost_of(&self, flat: usize) -> f64 {
        self.costs[flat]
    }

    /// Full cost block, aligned with coupling values.
    pub fn costs(&self) -> &[f64] {
        &self.costs
    }

    /// Flat slots whose target is pixel `j`.
    pub fn column_slots(&self, j: usize) -> &[usize] {
        &self.col_slots[self.col_ptr[j]..self.col_ptr[j + 1]]
    }

    /// Largest number of slots targeting a single pixel.
    pub fn max_column_len(&self) -> usize {
        (0..self.n())
            .map(|j| self.col_ptr[j + 1] - self.col_ptr[j])
            .max()
            .unwrap_or(0)
    }

    /// Smallest strictly positive cost present; `+∞` when no row has a
    /// neighbour besides itself (`k = 1` or a single pixel).
    pub fn min_offdiag(&self) -> f64 {
        self.min_offdiag
    }

    /// Cost between two pixels if `q` lies in the neighbourhood of `p`.
    pub fn cost_between(&self, p: usize, q: usize) -> Option<f64> {
        self.row_targets(p)
            .iter()
            .position(|&t| t == q)
            .map(|s| self.row_costs(p)[s])
    }

    /// `‖C‖_F²` over stored entries.
    pub fn frobenius_sq(&self) -> f64 {
        self.costs.iter().map(|c| c * c).sum()
    }

    /// `xᵀ C 1` over stored entries.
    pub fn weighted_row_cost(&self, x: &[f64]) -> f64 {
        (0..self.n())
            .map(|i| x[i] * self.row_costs(i).iter().sum::<f64>())
            .sum()
    }
}

/// Dense `n × n` cost table; `None` marks transport that is not allowed.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseCost {
    n: usize,
    table: Vec<Option<f64>>,
}

impl DenseCost {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        self.table[i * self.n + j]
    }

    /// Builds a table directly, mostly for hand-written test instances.
    pub fn from_table(n: usize, table: Vec<Option<f64>>) -> Result<Self> {
        if table.len() != n * n {
            return Err(Error::Shape {
                expected: n * n,
                actual: table.len(),
            });
        }
        Ok(Self { n, table })
    }

    /// Number of allowed entries in row `i`.
    pub fn allowed_in_row(&self, i: usize) -> usize {
        (0..self.n).filter(|&j| self.get(i, j).is_some()).count()
    }
}

/// Expands a local cost into a dense table with forbidden entries.
pub fn dense_cost(local: &LocalCost) -> Result<DenseCost> {
    dense_cost_capped(local, DEFAULT_DENSE_CAP)
}

pub fn dense_cost_capped(local: &LocalCost, cap: usize) -> Result<DenseCost> {
    let n = local.n();
    if n > cap {
        return Err(Error::TooLarge { size: n, cap });
    }
    let mut table = vec![None; n * n];
    for i in 0..n {
        for (&j, &c) in local.row_targets(i).iter().zip(local.row_costs(i)) {
            table[i * n + j] = Some(c);
        }
    }
    Ok(DenseCost { n, table })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cost(w: usize, h: usize, k: usize) -> LocalCost {
        build_euclidean_cost(GridShape::new(w, h, 1).unwrap(), k).unwrap()
    }

    #[test]
    fn euclidean_entries() {
        let c = cost(3, 3, 3);
        let s = c.shape();
        let center = s.index(0, 1, 1);
        assert_eq!(c.cost_between(center, s.index(0, 1, 2)), Some(1.0));
        let diag = c.cost_between(center, s.index(0, 2, 2)).unwrap();
        assert!((diag - std::f64::consts::SQRT_2).abs() < 1e-12);
        assert_eq!(c.cost_between(center, center), Some(0.0));
        assert_eq!(c.min_offdiag(), 1.0);
    }

    #[test]
    fn rejects_bad_k() {
        let s = GridShape::square(4).unwrap();
        assert!(matches!(
            build_euclidean_cost(s, 2),
            Err(Error::InvalidParameter(_))
        ));
        assert!(matches!(
            build_euclidean_cost(s, 0),
            Err(Error::InvalidParameter(_))
        ));
        assert!(build_euclidean_cost(s, 7).is_ok());
        assert!(build_euclidean_cost(s, 9).is_err());
    }

    #[test]
    fn borders_are_truncated() {
        let c = cost(5, 5, 5);
        assert_eq!(c.row_len(0), 9);
        assert_eq!(c.row_len(c.shape().index(0, 2, 2)), 25);
        assert_eq!(c.row_len(c.shape().index(0, 0, 2)), 15);
        for i in 0..c.n() {
            assert_eq!(c.row_targets(i)[0], i);
            assert_eq!(c.row_costs(i)[0], 0.0);
            assert!(c.row_len(i) <= 25);
        }
    }

    #[test]
    fn channels_never_mix() {
        let s = GridShape::new(4, 3, 3).unwrap();
        let c = build_euclidean_cost(s, 5).unwrap();
        for i in 0..c.n() {
            let (ch, _, _) = s.position(i);
            for &j in c.row_targets(i) {
                assert_eq!(s.position(j).0, ch);
            }
        }
    }

    #[test]
    fn symmetric_costs() {
        let c = cost(6, 4, 5);
        for i in 0..c.n() {
            for (&j, &v) in c.row_targets(i).iter().zip(c.row_costs(i)) {
                assert_eq!(c.cost_between(j, i), Some(v));
            }
        }
    }

    #[test]
    fn column_index_matches_rows() {
        let c = cost(5, 4, 3);
        let mut seen = 0;
        for j in 0..c.n() {
            for &flat in c.column_slots(j) {
                assert_eq!(c.target_of(flat), Some(j));
                seen += 1;
            }
        }
        assert_eq!(seen, (0..c.n()).map(|i| c.row_len(i)).sum::<usize>());
        assert_eq!(c.max_column_len(), 9);
    }

    #[test]
    fn k_one_has_no_offdiagonal() {
        let c = cost(2, 2, 1);
        assert!(c.min_offdiag().is_infinite());
        let d = dense_cost(&c).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(d.get(i, j).is_some(), i == j);
            }
        }
    }

    #[test]
    fn dense_two_pixel_line() {
        let c = build_euclidean_cost(GridShape::new(2, 1, 1).unwrap(), 3).unwrap();
        let d = dense_cost(&c).unwrap();
        assert_eq!(d.get(0, 0), Some(0.0));
        assert_eq!(d.get(0, 1), Some(1.0));
        assert_eq!(d.get(1, 0), Some(1.0));
        assert_eq!(d.get(1, 1), Some(0.0));
    }

    #[test]
    fn dense_interior_has_full_neighbourhood() {
        let c = cost(3, 3, 3);
        let d = dense_cost(&c).unwrap();
        assert_eq!(d.allowed_in_row(4), 9);
        assert_eq!(d.allowed_in_row(0), 4);
    }

    #[test]
    fn dense_cap() {
        let c = cost(10, 10, 3);
        assert!(matches!(
            dense_cost_capped(&c, 99),
            Err(Error::TooLarge { size: 100, cap: 99 })
        ));
    }

    #[test]
    fn custom_cost_hook() {
        let s = GridShape::square(3).unwrap();
        let l1 = LocalCost::with_cost_fn(s, 3, |r, c| (r.abs() + c.abs()) as f64).unwrap();
        assert_eq!(l1.cost_between(0, 4), Some(2.0));
        assert!(LocalCost::with_cost_fn(s, 3, |_, _| 0.0).is_err());
        assert!(LocalCost::with_cost_fn(s, 3, |r, c| (r + c) as f64).is_err());
    }
}
