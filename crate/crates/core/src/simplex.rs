//! Euclidean projection onto the scaled simplex `{w ≥ 0, Σw = z}`.
//!
//! This is the inner kernel of the dual projection: for a fixed multiplier
//! the Lagrangian separates into one simplex projection per row.

use crate::coupling::{Block, Coupling};
use crate::error::{check_len, Error, Result};

/// Projects `v` onto `{w ≥ 0, Σw = mass}` by sorting and thresholding.
pub fn project_simplex(v: &[f64], mass: f64) -> Result<Vec<f64>> {
    validate(v, mass)?;
    let mut out = vec![0.0; v.len()];
    let mut scratch = Vec::with_capacity(v.len());
    project_into(v, mass, &mut out, &mut scratch);
    Ok(out)
}

fn validate(v: &[f64], mass: f64) -> Result<()> {
    if mass.is_nan() || mass < 0.0 {
        return Err(Error::InvalidMass(mass));
    }
    if v.is_empty() {
        return Err(Error::InvalidInput("cannot project an empty vector".into()));
    }
    if v.iter().any(|x| x.is_nan()) {
        return Err(Error::InvalidInput("NaN in simplex input".into()));
    }
    Ok(())
}

/// Threshold `θ` such that `max(v − θ, 0)` sums to `mass`.
///
/// `scratch` is reused between calls to avoid allocating per row.
pub(crate) fn threshold(v: &[f64], mass: f64, scratch: &mut Vec<f64>) -> f64 {
    // θ ≥ (Σ_T v − mass)/|T| for every subset T, so entries at or below
    // that bound for T = {max} and then for T = {v > bound} never enter the
    // support.
    let floor = v.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x)) - mass;
    let (count, sum) = v
        .iter()
        .filter(|&&x| x > floor)
        .fold((0.0, 0.0), |(n, t), &x| (n + 1.0, t + x));
    let floor = floor.max((sum - mass) / count);
    scratch.clear();
    scratch.extend(v.iter().filter(|&&x| x > floor));
    scratch.sort_unstable_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = scratch[0] - mass;
    for (j, &u) in scratch.iter().enumerate() {
        cumsum += u;
        let t = (cumsum - mass) / (j + 1) as f64;
        if u - t > 0.0 {
            theta = t;
        } else {
            break;
        }
    }
    theta
}

/// Unchecked kernel. `out` must have the same length as `v`.
pub(crate) fn project_into(v: &[f64], mass: f64, out: &mut [f64], scratch: &mut Vec<f64>) {
    if mass == 0.0 {
        out.fill(0.0);
        return;
    }
    if v.len() == 1 {
        out[0] = mass;
        return;
    }
    // An entry at least `mass` above all others takes everything.
    let (mut top, mut second, mut arg) = (f64::NEG_INFINITY, f64::NEG_INFINITY, 0);
    for (j, &x) in v.iter().enumerate() {
        if x > top {
            second = top;
            top = x;
            arg = j;
        } else if x > second {
            second = x;
        }
    }
    if top >= second + mass {
        out.fill(0.0);
        out[arg] = mass;
        return;
    }
    let theta = threshold(v, mass, scratch);
    let mut total = 0.0;
    let mut support = 0usize;
    for (o, &x) in out.iter_mut().zip(v) {
        *o = (x - theta).max(0.0);
        if *o > 0.0 {
            total += *o;
            support += 1;
        }
    }
    if support == 0 {
        // Only reachable through rounding when every entry sits at θ.
        let share = mass / v.len() as f64;
        out.fill(share);
        return;
    }
    let fix = (mass - total) / support as f64;
    if fix != 0.0 {
        for o in out.iter_mut() {
            if *o > 0.0 {
                *o = (*o + fix).max(0.0);
            }
        }
    }
}

/// Projects every row of `block` onto the simplex of mass `x_i`.
pub fn project_rows(block: &Block, x: &[f64]) -> Result<Coupling> {
    let cost = block.cost();
    check_len(cost.n(), x.len())?;
    if let Some(i) = x.iter().position(|&m| m.is_nan() || m < 0.0) {
        return Err(Error::InvalidMass(x[i]));
    }
    if !block.is_finite() {
        return Err(Error::InvalidInput("block has non-finite entries".into()));
    }
    Coupling::from_block(project_rows_unchecked(block, x))
}

/// Row projection without validation; callers guarantee finite input.
pub(crate) fn project_rows_unchecked(block: &Block, x: &[f64]) -> Block {
    let cost = block.cost().clone();
    let mut out = Block::zeros(cost.clone());
    let mut scratch = Vec::with_capacity(cost.stride());
    for (i, &xi) in x.iter().enumerate() {
        let row = block.row(i);
        project_into(row, xi, out.row_mut(i), &mut scratch);
    }
    out
}

/// Row projection of `G − λC` without materialising the shifted block.
pub(crate) fn project_shifted_rows(g: &Block, lambda: f64, x: &[f64]) -> Block {
    let cost = g.cost().clone();
    let mut out = Block::zeros(cost.clone());
    let mut shifted = Vec::with_capacity(cost.stride());
    let mut scratch = Vec::with_capacity(cost.stride());
    for (i, &xi) in x.iter().enumerate() {
        shifted.clear();
        shifted.extend(
            g.row(i)
                .iter()
                .zip(cost.row_costs(i))
                .map(|(gv, c)| gv - lambda * c),
        );
        project_into(&shifted, xi, out.row_mut(i), &mut scratch);
    }
    out
}

/// `⟨Π, C⟩` of the row projection of `G − λC` and its derivative in `λ`,
/// `−Σᵢ |Sᵢ| Var_{Sᵢ}(C)` over each row's support `Sᵢ`. The cost is summed
/// in the same order as [`Block::transport_cost`] so both agree bit for bit.
pub(crate) fn shifted_rows_cost(g: &Block, lambda: f64, x: &[f64]) -> (f64, f64) {
    shifted_rows_into(g, lambda, x, &mut Block::zeros(g.cost().clone()))
}

/// [`shifted_rows_cost`] that also leaves the projected rows in `out`, equal
/// to [`project_shifted_rows`] at the same `λ`.
pub(crate) fn shifted_rows_into(g: &Block, lambda: f64, x: &[f64], out: &mut Block) -> (f64, f64) {
    let cost = g.cost();
    let mut shifted = Vec::with_capacity(cost.stride());
    let mut scratch = Vec::with_capacity(cost.stride());
    let mut total = -0.0;
    let mut slope = 0.0;
    for (i, &xi) in x.iter().enumerate() {
        let c_row = cost.row_costs(i);
        shifted.clear();
        shifted.extend(g.row(i).iter().zip(c_row).map(|(gv, c)| gv - lambda * c));
        let row = out.row_mut(i);
        project_into(&shifted, xi, row, &mut scratch);
        let (mut support, mut sum_c, mut sum_c2) = (0.0, 0.0, 0.0);
        for (v, c) in row.iter().zip(c_row) {
            total += v * c;
            if *v > 0.0 {
                support += 1.0;
                sum_c += c;
                sum_c2 += c * c;
            }
        }
        if support > 1.0 {
            slope -= sum_c2 - sum_c * sum_c / support;
        }
    }
    (total, slope)
}
