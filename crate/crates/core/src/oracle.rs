//! Exact finite-state computations used as ground truth for every Monte
//! Carlo component: backward products, total variation, and the exact
//! transition matrix of the coupled chain.
//!
//! Everything here is dense and capped at 64 states, which keeps ordered
//! matrix products exact to double precision at test scale.

use nalgebra::DMatrix;

use crate::error::{CoreError, Result};

/// Hard cap on oracle state counts; products stay exact in f64 well below it.
pub const MAX_ORACLE_STATES: usize = 64;

const PROB_TOL: f64 = 1e-12;

/// A probability vector over a finite state space.
#[derive(Clone, Debug, PartialEq)]
pub struct DistributionVector(Vec<f64>);

impl DistributionVector {
    pub fn new(masses: Vec<f64>) -> Result<Self> {
        if masses.iter().any(|m| *m < 0.0 || !m.is_finite()) {
            return Err(CoreError::Argument("negative or non-finite mass".into()));
        }
        let s: f64 = masses.iter().sum();
        if (s - 1.0).abs() > PROB_TOL {
            return Err(CoreError::Argument(format!(
                "masses sum to {s}, not 1 within {PROB_TOL:e}"
            )));
        }
        Ok(Self(masses))
    }

    /// Dirac mass at `state`.
    pub fn dirac(len: usize, state: usize) -> Result<Self> {
        if state >= len {
            return Err(CoreError::Argument(format!("state {state} out of range {len}")));
        }
        let mut m = vec![0.0; len];
        m[state] = 1.0;
        Ok(Self(m))
    }

    pub fn masses(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Apply one row-stochastic kernel on the right.
    pub fn propagate(&self, m: &DMatrix<f64>) -> Result<Self> {
        if m.nrows() != self.len() {
            return Err(CoreError::Argument(format!(
                "dimension mismatch: vector {} vs matrix {}x{}",
                self.len(),
                m.nrows(),
                m.ncols()
            )));
        }
        let mut out = vec![0.0; m.ncols()];
        for (i, w) in self.0.iter().enumerate() {
            if *w == 0.0 {
                continue;
            }
            for j in 0..m.ncols() {
                out[j] += w * m[(i, j)];
            }
        }
        Ok(Self(out))
    }
}

/// Check that every row of `m` is a probability vector.
pub fn validate_stochastic(m: &DMatrix<f64>) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(CoreError::Argument("matrix is not square".into()));
    }
    if m.nrows() > MAX_ORACLE_STATES {
        return Err(CoreError::Argument(format!(
            "oracle instances are capped at {MAX_ORACLE_STATES} states"
        )));
    }
    for i in 0..m.nrows() {
        let mut s = 0.0;
        for j in 0..m.ncols() {
            let p = m[(i, j)];
            if p < 0.0 || !p.is_finite() {
                return Err(CoreError::Config(format!("row {i} has invalid entry {p}")));
            }
            s += p;
        }
        if (s - 1.0).abs() > PROB_TOL {
            return Err(CoreError::Config(format!(
                "row {i} sums to {s}, not 1 within {PROB_TOL:e}"
            )));
        }
    }
    Ok(())
}

/// delta_z times the ordered product of the given kernels (first kernel
/// applied first). An empty list returns delta_z.
pub fn exact_backward(matrices: &[&DMatrix<f64>], z: usize) -> Result<DistributionVector> {
    let n = matrices
        .first()
        .map(|m| m.nrows())
        .unwrap_or_else(|| z + 1);
    let mut v = DistributionVector::dirac(n, z)?;
    for m in matrices {
        validate_stochastic(m)?;
        v = v.propagate(m)?;
    }
    Ok(v)
}

/// Total variation distance: half the l1 distance.
pub fn exact_tv(p: &DistributionVector, q: &DistributionVector) -> Result<f64> {
    if p.len() != q.len() {
        return Err(CoreError::Argument("length mismatch".into()));
    }
    let l1: f64 = p
        .masses()
        .iter()
        .zip(q.masses())
        .map(|(a, b)| (a - b).abs())
        .sum();
    Ok(0.5 * l1)
}

/// State indexing of the coupled chain: the first `n` states are the
/// coalesced copy of E, followed by the n*n ordered pairs (y, y_bar).
#[derive(Clone, Copy, Debug)]
pub struct CoupledIndex {
    pub n: usize,
}

impl CoupledIndex {
    pub fn total(&self) -> usize {
        self.n + self.n * self.n
    }

    pub fn coalesced(&self, y: usize) -> usize {
        y
    }

    pub fn pair(&self, y: usize, y_bar: usize) -> usize {
        self.n + y * self.n + y_bar
    }

    /// Mass of the event {Y != Y_bar}: off-diagonal pairs.
    pub fn unequal_mass(&self, dist: &DistributionVector) -> f64 {
        let mut acc = 0.0;
        for y in 0..self.n {
            for yb in 0..self.n {
                if y != yb {
                    acc += dist.masses()[self.pair(y, yb)];
                }
            }
        }
        acc
    }

    /// Marginal law of one coordinate (0 = Y, 1 = Y_bar); the coalesced
    /// copy counts for both coordinates.
    pub fn marginal(&self, dist: &DistributionVector, coord: usize) -> Result<DistributionVector> {
        let mut out = vec![0.0; self.n];
        for y in 0..self.n {
            out[y] += dist.masses()[self.coalesced(y)];
        }
        for y in 0..self.n {
            for yb in 0..self.n {
                let w = dist.masses()[self.pair(y, yb)];
                match coord {
                    0 => out[y] += w,
                    1 => out[yb] += w,
                    _ => return Err(CoreError::Argument("coord must be 0 or 1".into())),
                }
            }
        }
        DistributionVector::new(out)
    }
}

/// Exact one-step transition matrix of the coupled chain for a single
/// kernel `p` with minorization mass `eta`, residual measure `nu` and a
/// small-set predicate on states:
///
/// - from a coalesced state (and from an equal pair) both coordinates move
///   together with law `p`;
/// - from an unequal pair outside the small set the coordinates move
///   independently;
/// - from an unequal pair inside, with probability `eta` both land on one
///   draw from `nu` (entering the coalesced copy), otherwise they move
///   independently with the residual kernel (p - eta nu) / (1 - eta).
///
/// Rows sum to 1 within 1e-12 and each coordinate's marginal is exactly `p`.
pub fn exact_coupled_matrix(
    p: &DMatrix<f64>,
    eta: f64,
    nu: &DistributionVector,
    small_set: &dyn Fn(usize) -> bool,
) -> Result<DMatrix<f64>> {
    validate_stochastic(p)?;
    let n = p.nrows();
    if nu.len() != n {
        return Err(CoreError::Argument("nu length mismatch".into()));
    }
    if !(0.0..1.0).contains(&eta) {
        return Err(CoreError::Argument(format!("eta must be in [0,1), got {eta}")));
    }
    // Residual rows Q[i] = (P[i] - eta nu) / (1 - eta) for small-set rows.
    let mut residual = vec![vec![0.0; n]; n];
    for i in 0..n {
        if !small_set(i) {
            continue;
        }
        let mut row = vec![0.0; n];
        let mut worst = 0.0f64;
        for j in 0..n {
            let q = (p[(i, j)] - eta * nu.masses()[j]) / (1.0 - eta);
            worst = worst.min(q);
            row[j] = q.max(0.0);
        }
        if worst < -1e-9 {
            return Err(CoreError::MinorizationViolation {
                margin: worst,
                context: format!("residual row {i}"),
            });
        }
        let s: f64 = row.iter().sum();
        for q in row.iter_mut() {
            *q /= s;
        }
        residual[i] = row;
    }

    let idx = CoupledIndex { n };
    let total = idx.total();
    let mut m = DMatrix::zeros(total, total);
    // Coalesced copy moves with p and stays coalesced.
    for c in 0..n {
        for w in 0..n {
            m[(idx.coalesced(c), idx.coalesced(w))] = p[(c, w)];
        }
    }
    for y in 0..n {
        for yb in 0..n {
            let row = idx.pair(y, yb);
            if y == yb {
                // Equal pair: both coordinates take one common draw.
                for w in 0..n {
                    m[(row, idx.coalesced(w))] = p[(y, w)];
                }
            } else if small_set(y) && small_set(yb) && eta > 0.0 {
                for w in 0..n {
                    m[(row, idx.coalesced(w))] = eta * nu.masses()[w];
                }
                for w in 0..n {
                    for wb in 0..n {
                        m[(row, idx.pair(w, wb))] +=
                            (1.0 - eta) * residual[y][w] * residual[yb][wb];
                    }
                }
            } else {
                for w in 0..n {
                    for wb in 0..n {
                        m[(row, idx.pair(w, wb))] = p[(y, w)] * p[(yb, wb)];
                    }
                }
            }
        }
    }
    Ok(m)
}

/// Stationary vector of a single kernel by power iteration, with the final
/// balance residual ||pi P - pi||_1 returned alongside.
pub fn power_stationary(p: &DMatrix<f64>, max_iter: usize) -> Result<(DistributionVector, f64)> {
    validate_stochastic(p)?;
    let n = p.nrows();
    let mut v = DistributionVector(vec![1.0 / n as f64; n]);
    let mut residual = f64::INFINITY;
    for _ in 0..max_iter {
        let next = v.propagate(p)?;
        residual = v
            .masses()
            .iter()
            .zip(next.masses())
            .map(|(a, b)| (a - b).abs())
            .sum();
        v = next;
        if residual < 1e-16 {
            break;
        }
    }
    Ok((v, residual))
}
