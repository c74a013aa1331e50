//! Uniform size grids and the discretized operator built on them.

use crate::coefficients::{validate_assumptions, KernelModel, ProblemSpec};
use crate::error::{Error, Result};

/// Uniform grid on (0, R]: nodes x_i = i * dx for i = 1..N, with the
/// boundary value at x = 0 held as an implicit ghost entry equal to zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    n: usize,
    dx: f64,
}

impl Grid {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    /// Truncation radius, reconstructed as dx * N so doubling N at fixed dx
    /// doubles R exactly.
    pub fn r(&self) -> f64 {
        self.dx * self.n as f64
    }

    /// Node abscissa for the 0-based storage index: x = (i + 1) * dx.
    pub fn node(&self, i: usize) -> f64 {
        (i + 1) as f64 * self.dx
    }

    /// Same spacing, twice the radius.
    pub fn doubled(&self) -> Grid {
        Grid { n: 2 * self.n, dx: self.dx }
    }
}

/// Builds the uniform grid with N nodes on (0, R]. Needs R > 0 and N >= 16;
/// coarser grids cannot resolve the fragmentation gain term.
pub fn build_grid(r: f64, n: usize) -> Result<Grid> {
    if !(r > 0.0) || !r.is_finite() {
        return Err(Error::Config(format!("truncation radius must be positive, got {r}")));
    }
    if n < 16 {
        return Err(Error::Config(format!("grid needs at least 16 nodes, got {n}")));
    }
    Ok(Grid { n, dx: r / n as f64 })
}

/// Grid below the public node floor, for hand-checkable fixtures.
#[cfg(test)]
pub(crate) fn grid_unchecked(r: f64, n: usize) -> Grid {
    Grid { n, dx: r / n as f64 }
}

/// Lower-triangular fragmentation matrix K[i][j] = (1/x_j) ktilde(x_i / x_j)
/// for i <= j, with every column scaled so dx * sum_i K[i][j] = 1.
#[derive(Debug, Clone)]
pub enum DiscreteKernel {
    /// Uniform kernel: K[i][j] = 1/x_j below the diagonal, already exactly
    /// column-normalized, so nothing is stored.
    Uniform,
    /// General kernel: column j holds the j + 1 entries K[0..=j][j].
    Columns(Vec<Vec<f64>>),
}

/// Coefficient vectors and fragmentation matrix sampled on a grid, with the
/// modulation from the originating [`ProblemSpec`] already applied.
#[derive(Debug, Clone)]
pub struct DiscreteProblem {
    pub grid: Grid,
    pub tau: Vec<f64>,
    pub beta: Vec<f64>,
    pub kernel: DiscreteKernel,
    pub spec: ProblemSpec,
}

impl DiscreteProblem {
    pub fn kernel_entry(&self, i: usize, j: usize) -> f64 {
        if i > j {
            return 0.0;
        }
        match &self.kernel {
            DiscreteKernel::Uniform => 1.0 / self.grid.node(j),
            DiscreteKernel::Columns(cols) => cols[j][i],
        }
    }

    /// Gain term 2 dx * sum_j K[i][j] w[j] for w = beta .* u, written into
    /// `out`. The uniform kernel collapses to suffix sums and costs O(N).
    pub fn gain_into(&self, weighted: &[f64], out: &mut [f64]) {
        let n = self.grid.n();
        let dx = self.grid.dx();
        match &self.kernel {
            DiscreteKernel::Uniform => {
                let mut suffix = 0.0;
                for i in (0..n).rev() {
                    suffix += weighted[i] / self.grid.node(i);
                    out[i] = 2.0 * dx * suffix;
                }
            }
            DiscreteKernel::Columns(cols) => {
                out.fill(0.0);
                for (j, col) in cols.iter().enumerate() {
                    let w = 2.0 * dx * weighted[j];
                    if w == 0.0 {
                        continue;
                    }
                    for (i, k) in col.iter().enumerate() {
                        out[i] += k * w;
                    }
                }
            }
        }
    }

    /// Applies the discrete operator: transport by upwind differences with a
    /// zero inflow ghost node, division loss, and fragmentation gain.
    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        let n = self.grid.n();
        let dx = self.grid.dx();
        let weighted: Vec<f64> = self.beta.iter().zip(u).map(|(b, v)| b * v).collect();
        let mut out = vec![0.0; n];
        self.gain_into(&weighted, &mut out);
        for i in 0..n {
            out[i] -= (self.tau[i] / dx + self.beta[i]) * u[i];
            if i > 0 {
                out[i] += self.tau[i - 1] / dx * u[i - 1];
            }
        }
        out
    }

    /// Dense row-major copy of the operator matrix (upper Hessenberg).
    pub fn assemble_dense(&self) -> Vec<Vec<f64>> {
        let n = self.grid.n();
        let dx = self.grid.dx();
        let mut a = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in i..n {
                a[i][j] = 2.0 * dx * self.kernel_entry(i, j) * self.beta[j];
            }
            a[i][i] -= self.tau[i] / dx + self.beta[i];
            if i > 0 {
                a[i][i - 1] += self.tau[i - 1] / dx;
            }
        }
        a
    }
}

/// Samples the spec's rates (modulation applied) and kernel on the grid.
/// Fails when a hard assumption check fails or a rate cannot be evaluated at
/// some node, e.g. a tabulated rate whose range misses part of the grid.
pub fn build_discrete_problem(spec: &ProblemSpec, grid: Grid) -> Result<DiscreteProblem> {
    let report = validate_assumptions(spec);
    if !report.solvable() {
        let why: Vec<String> = report
            .failures()
            .filter(|c| c.hard)
            .map(|c| format!("{}: {}", c.id, c.detail))
            .collect();
        return Err(Error::Rejected(why.join("; ")));
    }

    let n = grid.n();
    let mut tau = Vec::with_capacity(n);
    let mut beta = Vec::with_capacity(n);
    for i in 0..n {
        let x = grid.node(i);
        tau.push(spec.tau_at(x)?);
        beta.push(spec.beta_at(x)?);
    }

    let kernel = match &spec.kernel {
        KernelModel::Uniform => DiscreteKernel::Uniform,
        model => {
            let dx = grid.dx();
            let mut cols = Vec::with_capacity(n);
            for j in 0..n {
                let xj = grid.node(j);
                let mut col: Vec<f64> =
                    (0..=j).map(|i| model.density(grid.node(i) / xj) / xj).collect();
                let mass: f64 = dx * col.iter().sum::<f64>();
                if mass > 0.0 {
                    let scale = 1.0 / mass;
                    for k in col.iter_mut() {
                        *k *= scale;
                    }
                } else {
                    // density vanishes at every resolvable ratio (can happen
                    // in the first column when ktilde(1) = 0); park the mass
                    // on the diagonal so the column invariant still holds
                    col[j] = 1.0 / dx;
                }
                cols.push(col);
            }
            DiscreteKernel::Columns(cols)
        }
    };

    Ok(DiscreteProblem { grid, tau, beta, kernel, spec: spec.clone() })
}

/// Checks whether the solution profile has decayed by the end of the grid:
/// over the last 5% of nodes (at least one), both transported mass tau_i u_i
/// and division flux beta_i u_i must stay at or below `eps_tail`. Returns
/// the doubled grid when the tail is still active, `None` when resolved.
pub fn adapt_truncation(
    problem: &DiscreteProblem,
    u: &[f64],
    eps_tail: f64,
) -> Result<Option<Grid>> {
    let n = problem.grid.n();
    if u.len() != n {
        return Err(Error::GridMismatch);
    }
    let window = (n / 20).max(1);
    let mut tail = 0.0_f64;
    for i in n - window..n {
        tail = tail.max(problem.tau[i] * u[i]).max(problem.beta[i] * u[i]);
    }
    if tail > eps_tail {
        Ok(Some(problem.grid.doubled()))
    } else {
        Ok(None)
    }
}
