//! Modified nodal analysis of the ideal-device crossbar tile.
//!
//! Every cell (i, j) joins a column-side node and a row-side node through its
//! cell conductance g[i][j]. Column wire segments chain cells vertically from
//! the DAC end (row index 0), row segments chain cells horizontally toward the
//! TIA end (column index M-1), `r_input` ties DAC j to the head of column j,
//! and `r_output` ties the tail of row i to its TIA virtual ground. The DAC
//! nodes carry the source constraints, giving the nominal system dimension
//! 2*N*M + M with right-hand side [0; v_in].
//!
//! Zero resistances are contracted exactly (node merging) rather than stamped
//! as huge conductances, so parasitic-free tiles solve to machine precision.

use ndarray::{Array1, Array2, ArrayView1};

use crate::config::CrossbarConfig;
use crate::error::{CoreError, Result};
use crate::grid::ConductanceGrid;
use crate::scalar::Scalar;
use crate::solver::{reverse_cuthill_mckee, BandLu, BandMatrix, UnionFind};

/// Where a logical circuit node ended up after contraction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Class {
    /// Merged with the virtual-ground reference.
    Ground,
    /// Merged with DAC `m`; its voltage equals input m.
    Source(usize),
    /// Free node, position in the reduced unknown vector.
    Unknown(usize),
}

#[derive(Debug, Clone, Copy)]
enum OutputTap {
    /// Output current read as (row-end voltage) / r_output.
    RowEndNode,
    /// r_output = 0: output current read as the branch current into virtual
    /// ground, i.e. the sum of the row's cell currents.
    RowConservation,
}

/// Reusable topology, contraction, and ordering data for one tile geometry.
///
/// Building this is `O(N*M)`; it can then factor many conductance grids.
#[derive(Debug, Clone)]
pub struct CrossbarSolver<T> {
    rows: usize,
    cols: usize,
    config: CrossbarConfig<T>,
    n_unknowns: usize,
    bandwidth: usize,
    /// Class of each cell's (column-side, row-side) node, row-major.
    cell_classes: Vec<(Class, Class)>,
    /// Conductive edges that do not depend on g: wires, input and output resistances.
    fixed_edges: Vec<(Class, Class, T)>,
    output_tap: OutputTap,
    /// For `RowEndNode`: unknown index of each row's end node.
    row_end_unknown: Vec<usize>,
}

/// Numeric factorization of one conductance grid, reusable for many solves.
#[derive(Debug, Clone)]
pub struct FactorData<T> {
    lu: BandLu<T>,
    /// Source-injection map: per input m, the (unknown, conductance) entries
    /// feeding current from DAC m into the reduced system.
    injection: Vec<Vec<(usize, T)>>,
    g: Array2<T>,
}

/// Forward basis solution: unknown-node voltages for each unit input, plus the
/// conductance matrix G they imply.
#[derive(Debug, Clone)]
pub struct BasisSolution<T> {
    /// `n_unknowns x M`; column m holds the unknown voltages for input e_m.
    v_unknown: Array2<T>,
    /// Realized conductance matrix, `N x M`.
    pub g_matrix: Array2<T>,
}

/// Node voltages and cell currents for one applied input vector.
#[derive(Debug, Clone)]
pub struct NodeVoltageSolution<T> {
    /// Voltage at each cell's column-side node.
    pub v_col: Array2<T>,
    /// Voltage at each cell's row-side node.
    pub v_row: Array2<T>,
    /// Current through each idealized cell conductor.
    pub i_cell: Array2<T>,
}

impl<T: Scalar> CrossbarSolver<T> {
    pub fn new(config: &CrossbarConfig<T>) -> Result<Self> {
        config.validate()?;
        let n = config.rows;
        let m = config.cols;
        let nm = n * m;
        let col_node = |i: usize, j: usize| i * m + j;
        let row_node = |i: usize, j: usize| nm + i * m + j;
        let dac_node = |j: usize| 2 * nm + j;
        let ground = 2 * nm + m;

        // Contract zero-resistance edges.
        let mut uf = UnionFind::new(ground + 1);
        let zero = T::zero();
        if config.r_wire == zero {
            for j in 0..m {
                for i in 1..n {
                    uf.union(col_node(i - 1, j), col_node(i, j));
                }
            }
            for i in 0..n {
                for j in 1..m {
                    uf.union(row_node(i, j - 1), row_node(i, j));
                }
            }
        }
        if config.r_input == zero {
            for j in 0..m {
                uf.union(dac_node(j), col_node(0, j));
            }
        }
        if config.r_output == zero {
            for i in 0..n {
                uf.union(row_node(i, m - 1), ground);
            }
        }

        // Classify contraction roots: ground, per-input source, or unknown.
        let ground_root = uf.find(ground);
        let mut source_of_root = std::collections::HashMap::new();
        for j in 0..m {
            let r = uf.find(dac_node(j));
            debug_assert_ne!(r, ground_root, "a source shorted to ground");
            let prev = source_of_root.insert(r, j);
            debug_assert!(prev.is_none(), "two sources merged");
        }
        let mut unknown_of_root = std::collections::HashMap::new();
        let classify = |uf: &mut UnionFind,
                            node: usize,
                            unknown_of_root: &mut std::collections::HashMap<usize, usize>| {
            let r = uf.find(node);
            if r == ground_root {
                Class::Ground
            } else if let Some(&j) = source_of_root.get(&r) {
                Class::Source(j)
            } else {
                let next = unknown_of_root.len();
                Class::Unknown(*unknown_of_root.entry(r).or_insert(next))
            }
        };

        let mut cell_classes = Vec::with_capacity(nm);
        for i in 0..n {
            for j in 0..m {
                let a = classify(&mut uf, col_node(i, j), &mut unknown_of_root);
                let b = classify(&mut uf, row_node(i, j), &mut unknown_of_root);
                cell_classes.push((a, b));
            }
        }
        let dac_classes: Vec<Class> = (0..m)
            .map(|j| classify(&mut uf, dac_node(j), &mut unknown_of_root))
            .collect();
        let n_unknowns = unknown_of_root.len();

        // Fixed conductive edges (nonzero resistance only; zero ones were merged).
        let mut fixed_edges: Vec<(Class, Class, T)> = Vec::new();
        let cell_class = |i: usize, j: usize| cell_classes[i * m + j];
        if config.r_wire > zero {
            let gw = config.r_wire.recip();
            for j in 0..m {
                for i in 1..n {
                    fixed_edges.push((cell_class(i - 1, j).0, cell_class(i, j).0, gw));
                }
            }
            for i in 0..n {
                for j in 1..m {
                    fixed_edges.push((cell_class(i, j - 1).1, cell_class(i, j).1, gw));
                }
            }
        }
        if config.r_input > zero {
            let gi = config.r_input.recip();
            for (j, &dc) in dac_classes.iter().enumerate() {
                fixed_edges.push((dc, cell_class(0, j).0, gi));
            }
        }
        let output_tap;
        let mut row_end_unknown = Vec::new();
        if config.r_output > zero {
            let go = config.r_output.recip();
            for i in 0..n {
                let rc = cell_class(i, m - 1).1;
                fixed_edges.push((rc, Class::Ground, go));
                match rc {
                    Class::Unknown(k) => row_end_unknown.push(k),
                    _ => unreachable!("row-end node cannot merge with source or ground here"),
                }
            }
            output_tap = OutputTap::RowEndNode;
        } else {
            output_tap = OutputTap::RowConservation;
        }

        // Reorder unknowns with RCM over the conductive structure.
        let mut adjacency = vec![Vec::new(); n_unknowns];
        let push_adj = |a: Class, b: Class, adjacency: &mut Vec<Vec<usize>>| {
            if let (Class::Unknown(x), Class::Unknown(y)) = (a, b) {
                adjacency[x].push(y);
                adjacency[y].push(x);
            }
        };
        for &(a, b, _) in &fixed_edges {
            push_adj(a, b, &mut adjacency);
        }
        for &(a, b) in &cell_classes {
            push_adj(a, b, &mut adjacency);
        }
        for adj in &mut adjacency {
            adj.sort_unstable();
            adj.dedup();
        }
        let perm = reverse_cuthill_mckee(&adjacency);
        let mut new_index = vec![0usize; n_unknowns];
        for (new, &old) in perm.iter().enumerate() {
            new_index[old] = new;
        }
        let remap = |c: Class| match c {
            Class::Unknown(k) => Class::Unknown(new_index[k]),
            other => other,
        };
        for pair in &mut cell_classes {
            *pair = (remap(pair.0), remap(pair.1));
        }
        for edge in &mut fixed_edges {
            *edge = (remap(edge.0), remap(edge.1), edge.2);
        }
        for k in &mut row_end_unknown {
            *k = new_index[*k];
        }
        let mut bandwidth = 0usize;
        let track = |a: Class, b: Class, bandwidth: &mut usize| {
            if let (Class::Unknown(x), Class::Unknown(y)) = (a, b) {
                *bandwidth = (*bandwidth).max(x.abs_diff(y));
            }
        };
        for &(a, b, _) in &fixed_edges {
            track(a, b, &mut bandwidth);
        }
        for &(a, b) in &cell_classes {
            track(a, b, &mut bandwidth);
        }

        Ok(Self {
            rows: n,
            cols: m,
            config: config.clone(),
            n_unknowns,
            bandwidth,
            cell_classes,
            fixed_edges,
            output_tap,
            row_end_unknown,
        })
    }

    pub fn config(&self) -> &CrossbarConfig<T> {
        &self.config
    }

    /// Nominal MNA dimension, `2*N*M + M`.
    pub fn dimension(&self) -> usize {
        2 * self.rows * self.cols + self.cols
    }

    /// Number of free nodes after contracting zero-resistance edges.
    pub fn reduced_dimension(&self) -> usize {
        self.n_unknowns
    }

    /// Assemble and factor the admittance system for one conductance grid.
    pub fn factor(&self, g: &ConductanceGrid<T>) -> Result<FactorData<T>> {
        for ((i, j), &gv) in g.values().indexed_iter() {
            if !gv.is_finite() || gv < self.config.g_min || gv > self.config.g_max {
                return Err(CoreError::InvalidInput(format!(
                    "conductance {gv} at ({i},{j}) outside [{}, {}]",
                    self.config.g_min, self.config.g_max
                )));
            }
        }
        self.factor_unchecked(g.values())
    }

    /// Factor a raw conductance matrix without the configured bounds check.
    ///
    /// Entries must still be finite and positive; used internally where cells
    /// stand in for other series elements (device linearizations).
    pub fn factor_unchecked(&self, g: &Array2<T>) -> Result<FactorData<T>> {
        if g.nrows() != self.rows || g.ncols() != self.cols {
            return Err(CoreError::InvalidInput(format!(
                "grid shape {}x{} does not match solver {}x{}",
                g.nrows(),
                g.ncols(),
                self.rows,
                self.cols
            )));
        }
        for ((i, j), &gv) in g.indexed_iter() {
            if !gv.is_finite() || gv <= T::zero() {
                return Err(CoreError::InvalidInput(format!(
                    "conductance {gv} at ({i},{j}) must be finite and positive"
                )));
            }
        }
        let mut band = BandMatrix::zeros(self.n_unknowns, self.bandwidth);
        let mut injection = vec![Vec::new(); self.cols];
        {
            let mut stamp = |a: Class, b: Class, gamma: T| match (a, b) {
                (Class::Unknown(x), Class::Unknown(y)) => {
                    band.add(x, x, gamma);
                    band.add(y, y, gamma);
                    band.add(x, y, -gamma);
                    band.add(y, x, -gamma);
                }
                (Class::Unknown(x), Class::Source(mm)) | (Class::Source(mm), Class::Unknown(x)) => {
                    band.add(x, x, gamma);
                    injection[mm].push((x, gamma));
                }
                (Class::Unknown(x), Class::Ground) | (Class::Ground, Class::Unknown(x)) => {
                    band.add(x, x, gamma);
                }
                // Source-to-ground (fully contracted tiles) carries current but
                // adds nothing to the reduced system.
                _ => {}
            };
            for &(a, b, gamma) in &self.fixed_edges {
                stamp(a, b, gamma);
            }
            for (idx, &(a, b)) in self.cell_classes.iter().enumerate() {
                let (i, j) = (idx / self.cols, idx % self.cols);
                stamp(a, b, g[[i, j]]);
            }
        }
        let lu = band.factor("factoring crossbar admittance matrix")?;
        Ok(FactorData {
            lu,
            injection,
            g: g.clone(),
        })
    }

    fn solve_injected(&self, f: &FactorData<T>, weights: &[T]) -> Vec<T> {
        let mut b = vec![T::zero(); self.n_unknowns];
        for (m, w) in weights.iter().enumerate() {
            if *w != T::zero() {
                for &(k, gamma) in &f.injection[m] {
                    b[k] += gamma * *w;
                }
            }
        }
        f.lu.solve_in_place(&mut b);
        b
    }

    /// Voltage of a contracted class under unit input `e_m`.
    #[inline]
    fn basis_val(v_unknown: &Array2<T>, class: Class, m: usize) -> T {
        match class {
            Class::Unknown(k) => v_unknown[[k, m]],
            Class::Source(s) => {
                if s == m {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Class::Ground => T::zero(),
        }
    }

    /// Solve against all M unit inputs and extract the conductance matrix.
    pub fn basis(&self, f: &FactorData<T>) -> BasisSolution<T> {
        let (n, m) = (self.rows, self.cols);
        let mut v_unknown = Array2::zeros((self.n_unknowns, m));
        let mut e = vec![T::zero(); m];
        for mm in 0..m {
            e[mm] = T::one();
            let x = self.solve_injected(f, &e);
            e[mm] = T::zero();
            for (k, xv) in x.into_iter().enumerate() {
                v_unknown[[k, mm]] = xv;
            }
        }
        let mut g_matrix = Array2::zeros((n, m));
        match self.output_tap {
            OutputTap::RowEndNode => {
                let go = self.config.r_output.recip();
                for i in 0..n {
                    let k = self.row_end_unknown[i];
                    for mm in 0..m {
                        g_matrix[[i, mm]] = v_unknown[[k, mm]] * go;
                    }
                }
            }
            OutputTap::RowConservation => {
                for i in 0..n {
                    for mm in 0..m {
                        let mut acc = T::zero();
                        for j in 0..m {
                            let (a, b) = self.cell_classes[i * m + j];
                            let dv = Self::basis_val(&v_unknown, a, mm)
                                - Self::basis_val(&v_unknown, b, mm);
                            acc += f.g[[i, j]] * dv;
                        }
                        g_matrix[[i, mm]] = acc;
                    }
                }
            }
        }
        BasisSolution { v_unknown, g_matrix }
    }

    /// Realized conductance matrix G for the factored grid.
    pub fn conductance_matrix(&self, f: &FactorData<T>) -> Array2<T> {
        self.basis(f).g_matrix
    }

    /// Single entry `G[i][j]`: one solve against unit input j reading output i.
    pub fn conductance_entry(&self, f: &FactorData<T>, i: usize, j: usize) -> T {
        let m = self.cols;
        let mut e = vec![T::zero(); m];
        e[j] = T::one();
        let x = self.solve_injected(f, &e);
        match self.output_tap {
            OutputTap::RowEndNode => x[self.row_end_unknown[i]] * self.config.r_output.recip(),
            OutputTap::RowConservation => {
                let val = |class: Class| match class {
                    Class::Unknown(k) => x[k],
                    Class::Source(s) => {
                        if s == j {
                            T::one()
                        } else {
                            T::zero()
                        }
                    }
                    Class::Ground => T::zero(),
                };
                let mut acc = T::zero();
                for jj in 0..m {
                    let (a, b) = self.cell_classes[i * m + jj];
                    acc += f.g[[i, jj]] * (val(a) - val(b));
                }
                acc
            }
        }
    }

    /// Node voltages and cell currents under one applied input vector.
    pub fn node_voltages(
        &self,
        f: &FactorData<T>,
        v_in: ArrayView1<'_, T>,
    ) -> Result<NodeVoltageSolution<T>> {
        let m = self.cols;
        if v_in.len() != m {
            return Err(CoreError::InvalidInput(format!(
                "input vector length {} does not match {} columns",
                v_in.len(),
                m
            )));
        }
        for &v in v_in.iter() {
            if !v.is_finite() || v < T::zero() || v > self.config.v_max {
                return Err(CoreError::InvalidInput(format!(
                    "input voltage {v} outside [0, {}]",
                    self.config.v_max
                )));
            }
        }
        Ok(self.node_voltages_unchecked(f, v_in))
    }

    /// Same as [`Self::node_voltages`] without the physical input-range check;
    /// used internally for calibration and adjoint work.
    pub fn node_voltages_unchecked(
        &self,
        f: &FactorData<T>,
        v_in: ArrayView1<'_, T>,
    ) -> NodeVoltageSolution<T> {
        let (n, m) = (self.rows, self.cols);
        let weights: Vec<T> = v_in.iter().copied().collect();
        let x = self.solve_injected(f, &weights);
        let val = |class: Class| match class {
            Class::Unknown(k) => x[k],
            Class::Source(s) => v_in[s],
            Class::Ground => T::zero(),
        };
        let mut v_col = Array2::zeros((n, m));
        let mut v_row = Array2::zeros((n, m));
        let mut i_cell = Array2::zeros((n, m));
        for i in 0..n {
            for j in 0..m {
                let (a, b) = self.cell_classes[i * m + j];
                let vc = val(a);
                let vr = val(b);
                v_col[[i, j]] = vc;
                v_row[[i, j]] = vr;
                i_cell[[i, j]] = f.g[[i, j]] * (vc - vr);
            }
        }
        NodeVoltageSolution { v_col, v_row, i_cell }
    }

    /// Gradient of `F(g) = ||W - G(g)/alpha||_F^2` with respect to every cell
    /// conductance, given `residual = W - G/alpha`.
    ///
    /// Uses the adjoint method: the derivative of G with respect to one cell
    /// only touches that cell's two-node stamp, so one extra set of N
    /// transposed solves prices all N*M partial derivatives.
    pub fn frobenius_gradient(
        &self,
        f: &FactorData<T>,
        basis: &BasisSolution<T>,
        residual: &Array2<T>,
        alpha: T,
    ) -> Array2<T> {
        let (n, m) = (self.rows, self.cols);
        debug_assert_eq!(residual.dim(), (n, m));
        let nu = self.n_unknowns;

        // Adjoint solutions U = A^{-T} S_i^T for each output row i.
        let mut u = Array2::zeros((nu, n));
        for i in 0..n {
            let mut rhs = vec![T::zero(); nu];
            match self.output_tap {
                OutputTap::RowEndNode => {
                    rhs[self.row_end_unknown[i]] = self.config.r_output.recip();
                }
                OutputTap::RowConservation => {
                    for j in 0..m {
                        let (a, b) = self.cell_classes[i * m + j];
                        if let Class::Unknown(k) = a {
                            rhs[k] += f.g[[i, j]];
                        }
                        if let Class::Unknown(k) = b {
                            rhs[k] -= f.g[[i, j]];
                        }
                    }
                }
            }
            f.lu.solve_transpose_in_place(&mut rhs);
            for (k, v) in rhs.into_iter().enumerate() {
                u[[k, i]] = v;
            }
        }

        // P = U * residual, folding the adjoint weights with the error matrix.
        let mut p = Array2::zeros((nu, m));
        for k in 0..nu {
            for mm in 0..m {
                let mut acc = T::zero();
                for i in 0..n {
                    acc += u[[k, i]] * residual[[i, mm]];
                }
                p[[k, mm]] = acc;
            }
        }

        let direct = matches!(self.output_tap, OutputTap::RowConservation);
        let scale = T::two() / alpha;
        let mut grad = Array2::zeros((n, m));
        for i in 0..n {
            for j in 0..m {
                let (a, b) = self.cell_classes[i * m + j];
                let mut s_direct = T::zero();
                let mut s_system = T::zero();
                for mm in 0..m {
                    let dv = Self::basis_val(&basis.v_unknown, a, mm)
                        - Self::basis_val(&basis.v_unknown, b, mm);
                    if dv == T::zero() {
                        continue;
                    }
                    if direct {
                        s_direct += residual[[i, mm]] * dv;
                    }
                    let pa = match a {
                        Class::Unknown(k) => p[[k, mm]],
                        _ => T::zero(),
                    };
                    let pb = match b {
                        Class::Unknown(k) => p[[k, mm]],
                        _ => T::zero(),
                    };
                    s_system += (pa - pb) * dv;
                }
                grad[[i, j]] = -scale * (s_direct - s_system);
            }
        }
        grad
    }
}

/// Assembled and factored MNA system for one (config, grid) pair.
///
/// Immutable after construction; safe to share across threads for concurrent
/// back-solves.
#[derive(Debug, Clone)]
pub struct MnaSystem<T> {
    solver: CrossbarSolver<T>,
    factor: FactorData<T>,
}

impl<T: Scalar> MnaSystem<T> {
    pub fn assemble(config: &CrossbarConfig<T>, g: &ConductanceGrid<T>) -> Result<Self> {
        let solver = CrossbarSolver::new(config)?;
        let factor = solver.factor(g)?;
        Ok(Self { solver, factor })
    }

    /// Nominal system dimension `2*N*M + M`.
    pub fn dimension(&self) -> usize {
        self.solver.dimension()
    }

    /// Right-hand side `[0; v_in]` of the nominal system.
    pub fn rhs_vector(&self, v_in: ArrayView1<'_, T>) -> Array1<T> {
        let dim = self.dimension();
        let m = self.solver.cols;
        let mut rhs = Array1::zeros(dim);
        for (j, &v) in v_in.iter().enumerate().take(m) {
            rhs[dim - m + j] = v;
        }
        rhs
    }

    pub fn solver(&self) -> &CrossbarSolver<T> {
        &self.solver
    }

    pub fn conductance_matrix(&self) -> Array2<T> {
        self.solver.conductance_matrix(&self.factor)
    }

    pub fn basis(&self) -> BasisSolution<T> {
        self.solver.basis(&self.factor)
    }

    pub fn node_voltages(&self, v_in: ArrayView1<'_, T>) -> Result<NodeVoltageSolution<T>> {
        self.solver.node_voltages(&self.factor, v_in)
    }

    pub fn frobenius_gradient(
        &self,
        basis: &BasisSolution<T>,
        residual: &Array2<T>,
        alpha: T,
    ) -> Array2<T> {
        self.solver
            .frobenius_gradient(&self.factor, basis, residual, alpha)
    }
}

/// Build the MNA system for a grid; the primary entry point of the circuit model.
pub fn assemble_mna<T: Scalar>(
    config: &CrossbarConfig<T>,
    g: &ConductanceGrid<T>,
) -> Result<MnaSystem<T>> {
    MnaSystem::assemble(config, g)
}

/// Conductance matrix realized by the resistive network, `G = S Y^{-1} B`.
pub fn extract_conductance_matrix<T: Scalar>(
    config: &CrossbarConfig<T>,
    g: &ConductanceGrid<T>,
) -> Result<Array2<T>> {
    Ok(MnaSystem::assemble(config, g)?.conductance_matrix())
}

/// Matrix effectively realized once the peripheral scaling is applied, `G / alpha`.
pub fn realized_matrix<T: Scalar>(g_matrix: &Array2<T>, alpha: T) -> Result<Array2<T>> {
    if !alpha.is_finite() || alpha <= T::zero() {
        return Err(CoreError::InvalidInput(format!(
            "alpha must be positive, got {alpha}"
        )));
    }
    Ok(g_matrix.mapv(|v| v / alpha))
}

/// Node voltages and cell currents under an applied input vector.
pub fn solve_node_voltages<T: Scalar>(
    config: &CrossbarConfig<T>,
    g: &ConductanceGrid<T>,
    v_in: ArrayView1<'_, T>,
) -> Result<NodeVoltageSolution<T>> {
    MnaSystem::assemble(config, g)?.node_voltages(v_in)
}

/// Gradient of `||W - G(g)/alpha||_F^2` given `residual = W - G/alpha`.
pub fn conductance_gradient<T: Scalar>(
    config: &CrossbarConfig<T>,
    g: &ConductanceGrid<T>,
    residual: &Array2<T>,
    alpha: T,
) -> Result<Array2<T>> {
    let sys = MnaSystem::assemble(config, g)?;
    let basis = sys.basis();
    Ok(sys.frobenius_gradient(&basis, residual, alpha))
}
