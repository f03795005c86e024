//! Device-level simulation of a crossbar tile.
//!
//! Each cell is a memristor in series with its access transistor, joined at an
//! internal node. The whole network is solved by damped Newton-Raphson with
//! the linearized MNA system as the Jacobian, starting from the solution of
//! the ideal-conductor model.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::config::CrossbarConfig;
use crate::device::{DeviceModel, TransistorLaw};
use crate::error::{CoreError, Result};
use crate::scalar::Scalar;
use crate::solver::{reverse_cuthill_mckee, BandMatrix, UnionFind};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Class {
    Ground,
    Source(usize),
    Unknown(usize),
}

/// Options for the global Newton solve.
#[derive(Debug, Clone)]
pub struct NewtonOptions<T> {
    /// Iteration cap before reporting non-convergence.
    pub max_iters: usize,
    /// Convergence once max KCL residual < `tol_rel` * max branch current.
    pub tol_rel: T,
    /// Step-halving attempts per iteration before declaring a stall.
    pub max_dampings: usize,
}

impl<T: Scalar> Default for NewtonOptions<T> {
    fn default() -> Self {
        // the spec tolerance, relaxed only when the scalar type cannot express it
        let eps_floor = T::epsilon() * T::cast(100.0);
        Self {
            max_iters: 100,
            tol_rel: T::cast(1e-9).max(eps_floor),
            max_dampings: 40,
        }
    }
}

/// Converged device-level solution.
#[derive(Debug, Clone)]
pub struct NonlinearSolution<T> {
    /// TIA output currents per row; digital values follow by dividing by alpha.
    pub outputs: Array1<T>,
    /// Voltage at each cell's column-side node.
    pub v_col: Array2<T>,
    /// Voltage at each cell's internal memristor/transistor node.
    pub v_mid: Array2<T>,
    /// Voltage at each cell's row-side node.
    pub v_row: Array2<T>,
    /// Newton iterations used.
    pub iterations: usize,
}

/// Reusable topology and ordering for device-level solves of one (config, model).
#[derive(Debug, Clone)]
pub struct NonlinearSolver<T> {
    config: CrossbarConfig<T>,
    model: DeviceModel<T>,
    n_unknowns: usize,
    /// Per cell: classes of (column node, internal node, row node).
    cell_nodes: Vec<(Class, Class, Class)>,
    fixed_edges: Vec<(Class, Class, T)>,
    /// Template with the constant linear stamps already applied.
    template: BandMatrix<T>,
    read_row_end: Option<Vec<usize>>,
}

impl<T: Scalar> NonlinearSolver<T> {
    pub fn new(config: &CrossbarConfig<T>, model: &DeviceModel<T>) -> Result<Self> {
        config.validate()?;
        let n = config.rows;
        let m = config.cols;
        let nm = n * m;
        let col_node = |i: usize, j: usize| i * m + j;
        let mid_node = |i: usize, j: usize| nm + i * m + j;
        let row_node = |i: usize, j: usize| 2 * nm + i * m + j;
        let dac_node = |j: usize| 3 * nm + j;
        let ground = 3 * nm + m;

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
        if matches!(model.transistor, TransistorLaw::Ideal) {
            for i in 0..n {
                for j in 0..m {
                    uf.union(mid_node(i, j), row_node(i, j));
                }
            }
        }

        let ground_root = uf.find(ground);
        let mut source_of_root = std::collections::HashMap::new();
        for j in 0..m {
            source_of_root.insert(uf.find(dac_node(j)), j);
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

        let mut cell_nodes = Vec::with_capacity(nm);
        for i in 0..n {
            for j in 0..m {
                let c = classify(&mut uf, col_node(i, j), &mut unknown_of_root);
                let p = classify(&mut uf, mid_node(i, j), &mut unknown_of_root);
                let r = classify(&mut uf, row_node(i, j), &mut unknown_of_root);
                cell_nodes.push((c, p, r));
            }
        }
        let dac_classes: Vec<Class> = (0..m)
            .map(|j| classify(&mut uf, dac_node(j), &mut unknown_of_root))
            .collect();
        let n_unknowns = unknown_of_root.len();

        let mut fixed_edges: Vec<(Class, Class, T)> = Vec::new();
        let cell = |i: usize, j: usize| cell_nodes[i * m + j];
        if config.r_wire > zero {
            let gw = config.r_wire.recip();
            for j in 0..m {
                for i in 1..n {
                    fixed_edges.push((cell(i - 1, j).0, cell(i, j).0, gw));
                }
            }
            for i in 0..n {
                for j in 1..m {
                    fixed_edges.push((cell(i, j - 1).2, cell(i, j).2, gw));
                }
            }
        }
        if config.r_input > zero {
            let gi = config.r_input.recip();
            for (j, &dc) in dac_classes.iter().enumerate() {
                fixed_edges.push((dc, cell(0, j).0, gi));
            }
        }
        let mut read_row_end = None;
        if config.r_output > zero {
            let go = config.r_output.recip();
            let mut taps = Vec::with_capacity(n);
            for i in 0..n {
                let rc = cell(i, m - 1).2;
                fixed_edges.push((rc, Class::Ground, go));
                match rc {
                    Class::Unknown(k) => taps.push(k),
                    _ => unreachable!("row end cannot be a source or ground here"),
                }
            }
            read_row_end = Some(taps);
        }

        // RCM over the full conductive + device structure.
        let mut adjacency = vec![Vec::new(); n_unknowns];
        let push_adj = |a: Class, b: Class, adjacency: &mut Vec<Vec<usize>>| {
            if let (Class::Unknown(x), Class::Unknown(y)) = (a, b) {
                if x != y {
                    adjacency[x].push(y);
                    adjacency[y].push(x);
                }
            }
        };
        for &(a, b, _) in &fixed_edges {
            push_adj(a, b, &mut adjacency);
        }
        for &(c, p, r) in &cell_nodes {
            push_adj(c, p, &mut adjacency);
            push_adj(p, r, &mut adjacency);
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
        for t in &mut cell_nodes {
            *t = (remap(t.0), remap(t.1), remap(t.2));
        }
        for e in &mut fixed_edges {
            *e = (remap(e.0), remap(e.1), e.2);
        }
        if let Some(taps) = &mut read_row_end {
            for k in taps {
                *k = new_index[*k];
            }
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
        for &(c, p, r) in &cell_nodes {
            track(c, p, &mut bandwidth);
            track(p, r, &mut bandwidth);
        }

        // Pre-stamp the constant linear conductances.
        let mut template = BandMatrix::zeros(n_unknowns, bandwidth);
        for &(a, b, gamma) in &fixed_edges {
            match (a, b) {
                (Class::Unknown(x), Class::Unknown(y)) => {
                    template.add(x, x, gamma);
                    template.add(y, y, gamma);
                    template.add(x, y, -gamma);
                    template.add(y, x, -gamma);
                }
                (Class::Unknown(x), _) | (_, Class::Unknown(x)) => {
                    template.add(x, x, gamma);
                }
                _ => {}
            }
        }

        Ok(Self {
            config: config.clone(),
            model: model.clone(),
            n_unknowns,
            cell_nodes,
            fixed_edges,
            template,
            read_row_end,
        })
    }

    fn val(x: &[T], v_in: ArrayView1<'_, T>, class: Class) -> T {
        match class {
            Class::Unknown(k) => x[k],
            Class::Source(s) => v_in[s],
            Class::Ground => T::zero(),
        }
    }

    /// KCL residual at every unknown node; returns (residual, max branch current).
    fn residual(
        &self,
        s: ArrayView2<'_, T>,
        x: &[T],
        v_in: ArrayView1<'_, T>,
    ) -> (Vec<T>, T) {
        let m = self.config.cols;
        let mut res = vec![T::zero(); self.n_unknowns];
        let mut max_cur = T::zero();
        let leave = |class: Class, i: T, res: &mut Vec<T>| {
            if let Class::Unknown(k) = class {
                res[k] += i;
            }
        };
        for &(a, b, gamma) in &self.fixed_edges {
            let i = gamma * (Self::val(x, v_in, a) - Self::val(x, v_in, b));
            max_cur = max_cur.max(i.abs());
            leave(a, i, &mut res);
            leave(b, -i, &mut res);
        }
        for (idx, &(c, p, r)) in self.cell_nodes.iter().enumerate() {
            let (i, j) = (idx / m, idx % m);
            let vc = Self::val(x, v_in, c);
            let vp = Self::val(x, v_in, p);
            let im = self.model.memristor.current(s[[i, j]], vc - vp);
            max_cur = max_cur.max(im.abs());
            leave(c, im, &mut res);
            leave(p, -im, &mut res);
            if !matches!(self.model.transistor, TransistorLaw::Ideal) {
                let vr = Self::val(x, v_in, r);
                let it = self.model.transistor.current(vp, vr);
                max_cur = max_cur.max(it.abs());
                leave(p, it, &mut res);
                leave(r, -it, &mut res);
            }
        }
        (res, max_cur)
    }

    fn jacobian(&self, s: ArrayView2<'_, T>, x: &[T], v_in: ArrayView1<'_, T>) -> BandMatrix<T> {
        let m = self.config.cols;
        let mut jac = self.template.clone();
        let stamp = |row: Class, col: Class, v: T, jac: &mut BandMatrix<T>| {
            if let (Class::Unknown(rk), Class::Unknown(ck)) = (row, col) {
                jac.add(rk, ck, v);
            }
        };
        for (idx, &(c, p, r)) in self.cell_nodes.iter().enumerate() {
            let (i, j) = (idx / m, idx % m);
            let vc = Self::val(x, v_in, c);
            let vp = Self::val(x, v_in, p);
            let (_, dim_dv) = self.model.memristor.partials(s[[i, j]], vc - vp);
            // memristor: i flows c -> p, conductance-like stamp
            stamp(c, c, dim_dv, &mut jac);
            stamp(c, p, -dim_dv, &mut jac);
            stamp(p, c, -dim_dv, &mut jac);
            stamp(p, p, dim_dv, &mut jac);
            if !matches!(self.model.transistor, TransistorLaw::Ideal) {
                let vr = Self::val(x, v_in, r);
                let (_, dit_dp, dit_dr) = self.model.transistor.current_and_partials(vp, vr);
                stamp(p, p, dit_dp, &mut jac);
                stamp(p, r, dit_dr, &mut jac);
                stamp(r, p, -dit_dp, &mut jac);
                stamp(r, r, -dit_dr, &mut jac);
            }
        }
        jac
    }

    /// Initial guess: solve the ideal-conductor model with each cell replaced
    /// by its series small-signal conductance, then split the internal node by
    /// the transistor conductance.
    fn initial_guess(&self, s: ArrayView2<'_, T>, v_in: ArrayView1<'_, T>) -> Result<Vec<T>> {
        let (n, m) = (self.config.rows, self.config.cols);
        let g_lin = Array2::from_shape_fn((n, m), |(i, j)| self.model.cell_small_signal(s[[i, j]]));
        let lin = crate::mna::CrossbarSolver::new(&self.config)?;
        let factor = lin.factor_unchecked(&g_lin)?;
        let sol = lin.node_voltages_unchecked(&factor, v_in);
        let mut x = vec![T::zero(); self.n_unknowns];
        for (idx, &(c, p, r)) in self.cell_nodes.iter().enumerate() {
            let (i, j) = (idx / m, idx % m);
            if let Class::Unknown(k) = c {
                x[k] = sol.v_col[[i, j]];
            }
            if let Class::Unknown(k) = r {
                x[k] = sol.v_row[[i, j]];
            }
            if let Class::Unknown(k) = p {
                let vp = match self.model.transistor.small_signal(sol.v_row[[i, j]]) {
                    Some(gt) if gt > T::zero() => sol.v_row[[i, j]] + sol.i_cell[[i, j]] / gt,
                    _ => sol.v_row[[i, j]],
                };
                x[k] = vp;
            }
        }
        Ok(x)
    }

    fn describe_unknown(&self, k: usize) -> String {
        let m = self.config.cols;
        for (idx, &(c, p, r)) in self.cell_nodes.iter().enumerate() {
            let (i, j) = (idx / m, idx % m);
            if c == Class::Unknown(k) {
                return format!("col({i},{j})");
            }
            if p == Class::Unknown(k) {
                return format!("mid({i},{j})");
            }
            if r == Class::Unknown(k) {
                return format!("row({i},{j})");
            }
        }
        format!("node#{k}")
    }

    /// Solve the device-level network for state matrix `s` and inputs `v_in`.
    pub fn simulate(
        &self,
        s: ArrayView2<'_, T>,
        v_in: ArrayView1<'_, T>,
        options: &NewtonOptions<T>,
    ) -> Result<NonlinearSolution<T>> {
        let (n, m) = (self.config.rows, self.config.cols);
        if s.dim() != (n, m) {
            return Err(CoreError::InvalidInput(format!(
                "state shape {:?} does not match tile {}x{}",
                s.dim(),
                n,
                m
            )));
        }
        for &sv in s.iter() {
            if !sv.is_finite() || sv < T::zero() || sv > T::one() {
                return Err(CoreError::InvalidInput(format!(
                    "state variable {sv} outside [0, 1]"
                )));
            }
        }
        if v_in.len() != m {
            return Err(CoreError::InvalidInput(format!(
                "input length {} does not match {} columns",
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

        let mut x = self.initial_guess(s, v_in)?;
        let (mut res, mut max_cur) = self.residual(s, &x, v_in);
        let mut res_norm = max_abs(&res);
        let mut iterations = 0;
        while res_norm > options.tol_rel * max_cur {
            if iterations >= options.max_iters {
                let worst = argmax_abs(&res);
                return Err(CoreError::NonConvergence {
                    iterations,
                    residual: res_norm.to_f64().unwrap_or(f64::NAN),
                    relative: (res_norm / max_cur.max(T::epsilon()))
                        .to_f64()
                        .unwrap_or(f64::NAN),
                    node: self.describe_unknown(worst),
                });
            }
            let jac = self.jacobian(s, &x, v_in);
            let lu = jac.factor("factoring device Jacobian")?;
            let mut step: Vec<T> = res.iter().map(|&r| -r).collect();
            lu.solve_in_place(&mut step);

            // residual-halving damping
            let mut lambda = T::one();
            let mut accepted = false;
            for _ in 0..=options.max_dampings {
                let trial: Vec<T> = x
                    .iter()
                    .zip(&step)
                    .map(|(&xi, &di)| xi + lambda * di)
                    .collect();
                let (trial_res, trial_cur) = self.residual(s, &trial, v_in);
                let trial_norm = max_abs(&trial_res);
                if trial_norm < res_norm {
                    x = trial;
                    res = trial_res;
                    res_norm = trial_norm;
                    max_cur = trial_cur;
                    accepted = true;
                    break;
                }
                lambda = lambda * T::half();
            }
            iterations += 1;
            if !accepted {
                let worst = argmax_abs(&res);
                return Err(CoreError::NonConvergence {
                    iterations,
                    residual: res_norm.to_f64().unwrap_or(f64::NAN),
                    relative: (res_norm / max_cur.max(T::epsilon()))
                        .to_f64()
                        .unwrap_or(f64::NAN),
                    node: self.describe_unknown(worst),
                });
            }
        }

        // collect voltages and output currents
        let mut v_col = Array2::zeros((n, m));
        let mut v_mid = Array2::zeros((n, m));
        let mut v_row = Array2::zeros((n, m));
        for (idx, &(c, p, r)) in self.cell_nodes.iter().enumerate() {
            let (i, j) = (idx / m, idx % m);
            v_col[[i, j]] = Self::val(&x, v_in, c);
            v_mid[[i, j]] = Self::val(&x, v_in, p);
            v_row[[i, j]] = Self::val(&x, v_in, r);
        }
        let mut outputs = Array1::zeros(n);
        match &self.read_row_end {
            Some(taps) => {
                let go = self.config.r_output.recip();
                for i in 0..n {
                    outputs[i] = x[taps[i]] * go;
                }
            }
            None => {
                // r_output = 0: branch current into virtual ground equals the
                // sum of device currents entering the row.
                for (idx, &(_, p, r)) in self.cell_nodes.iter().enumerate() {
                    let (i, j) = (idx / m, idx % m);
                    let dev = if matches!(self.model.transistor, TransistorLaw::Ideal) {
                        self.model
                            .memristor
                            .current(s[[i, j]], v_col[[i, j]] - Self::val(&x, v_in, p))
                    } else {
                        self.model
                            .transistor
                            .current(Self::val(&x, v_in, p), Self::val(&x, v_in, r))
                    };
                    outputs[i] += dev;
                }
            }
        }

        Ok(NonlinearSolution {
            outputs,
            v_col,
            v_mid,
            v_row,
            iterations,
        })
    }
}

fn max_abs<T: Scalar>(v: &[T]) -> T {
    v.iter().fold(T::zero(), |acc, &x| acc.max(x.abs()))
}

fn argmax_abs<T: Scalar>(v: &[T]) -> usize {
    let mut best = 0;
    let mut best_val = T::zero();
    for (i, &x) in v.iter().enumerate() {
        if x.abs() > best_val {
            best_val = x.abs();
            best = i;
        }
    }
    best
}

/// Solve the full nonlinear network and return the TIA output currents.
pub fn simulate_nonlinear<T: Scalar>(
    config: &CrossbarConfig<T>,
    s: ArrayView2<'_, T>,
    model: &DeviceModel<T>,
    v_in: ArrayView1<'_, T>,
) -> Result<NonlinearSolution<T>> {
    NonlinearSolver::new(config, model)?.simulate(s, v_in, &NewtonOptions::default())
}
