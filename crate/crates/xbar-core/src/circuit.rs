//! Exact linear-circuit model of an MxN crossbar with resistive
//! non-idealities: wire segments, sense resistors, driver resistances and
//! arbitrary device conductances. Ground truth for every reduced model.
//!
//! Topology per row i and column j (0-based):
//!
//! ```text
//! source_i --R_driver-- a(i,0) --r_row-- a(i,1) ... a(i,N-1)
//! a(i,j) --1/G[i][j]-- b(i,j)
//! b(0,j) --r_col-- b(1,j) ... b(M-1,j) --R_sense-- ground
//! ```
//!
//! Kirchhoff current law over the internal nodes yields a symmetric positive
//! definite conductance Laplacian. A zero-resistance segment is handled by
//! merging its endpoint nodes before assembly, never by stamping a huge
//! conductance.

use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};

use crate::band::{BandCholesky, BandMatrix};
use crate::error::{Error, Result};
use crate::matrix::{ConductanceMatrix, Matrix};
use crate::params::CrossbarParams;

/// Relative residual limit enforced after every solve.
pub const RESIDUAL_LIMIT: f64 = 1e-10;

/// Unknown counts below this use a dense factorization; larger systems use
/// the banded path. 2048 is the node count of a 32x32 crossbar.
const DENSE_NODE_LIMIT: usize = 2048;

/// Which side of the array a node lives on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    /// `a(i,j)` nodes along the rows (input side).
    Row,
    /// `b(i,j)` nodes along the columns (sense side).
    Col,
}

/// Resolution of a physical node after zero-resistance merging.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeClass {
    /// Index into the unknown vector.
    Unknown(usize),
    Ground,
    /// Pinned to source voltage `vin[t]`.
    Source(usize),
}

#[derive(Debug, Clone, Copy)]
enum Term {
    X(usize),
    Src(usize),
}

#[derive(Debug, Clone)]
enum IoutSpec {
    /// Current through the column's sense resistor: `x[pos] * g`.
    Sense { pos: usize, g: f64 },
    /// `R_sense = 0`: KCL balance of all branches draining into the merged
    /// ground region of this column.
    GroundedSum(Vec<(Term, f64)>),
}

enum Storage {
    Dense(DMatrix<f64>),
    Band(BandMatrix),
}

enum Factor {
    Dense(nalgebra::Cholesky<f64, nalgebra::Dyn>),
    Band(BandCholesky),
    /// Every node merged into a source or ground; nothing to solve.
    Empty,
}

/// Assembled KCL system of one crossbar network.
///
/// Immutable after assembly and safe to share across threads; the
/// factorization is computed once on first solve and cached.
pub struct NodalSystem {
    rows: usize,
    cols: usize,
    g: Matrix,
    n_unknowns: usize,
    node_class: Vec<NodeClass>,
    storage: Storage,
    /// Per source: (unknown index, conductance) right-hand-side couplings.
    source_cols: Vec<Vec<(usize, f64)>>,
    /// Per source: total conductance hanging on the source class.
    source_diag: Vec<f64>,
    iout: Vec<IoutSpec>,
    factor: OnceLock<std::result::Result<Factor, Error>>,
}

/// Node voltages and port currents of one operating point.
#[derive(Debug, Clone)]
pub struct SolveResult {
    /// All `2*M*N` node voltages in public node order, merged nodes resolved.
    pub node_voltages: Vec<f64>,
    /// Current through each column's sense path into ground, amperes.
    pub i_out: Vec<f64>,
    /// Current delivered by each row source, amperes.
    pub i_in: Vec<f64>,
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let ra = self.find(a);
        let rb = self.find(b);
        if ra != rb {
            self.parent[rb] = ra;
        }
    }
}

/// Assemble the KCL system for `params` and the programmed state `g`.
pub fn assemble(params: &CrossbarParams, g: &ConductanceMatrix) -> Result<NodalSystem> {
    let drivers = vec![params.r_driver; params.rows];
    assemble_with_drivers(params, g, &drivers)
}

/// Assemble with a per-row series source resistance. `assemble` is the
/// uniform special case; per-row values let peripheral models (e.g. a DAC
/// output stage reduced to its Thevenin equivalent) be embedded exactly.
pub fn assemble_with_drivers(
    params: &CrossbarParams,
    g: &ConductanceMatrix,
    r_drivers: &[f64],
) -> Result<NodalSystem> {
    params.validate()?;
    g.validate(params)?;
    let (m, n) = (params.rows, params.cols);
    if r_drivers.len() != m {
        return Err(Error::DimensionMismatch(format!(
            "{} driver resistances for {} rows",
            r_drivers.len(),
            m
        )));
    }
    for (i, &r) in r_drivers.iter().enumerate() {
        if !r.is_finite() || r < 0.0 {
            return Err(Error::InvalidParams(format!(
                "driver resistance for row {i} must be finite and >= 0, got {r}"
            )));
        }
    }

    // handle layout: [0, 2MN) physical nodes, then M sources, then ground
    let nodes = 2 * m * n;
    let src0 = nodes;
    let gnd = nodes + m;
    let a_id = |i: usize, j: usize| i * n + j;
    let b_id = |i: usize, j: usize| m * n + j * m + i;

    let mut uf = UnionFind::new(nodes + m + 1);
    for i in 0..m {
        if r_drivers[i] == 0.0 {
            uf.union(src0 + i, a_id(i, 0));
        }
        if params.r_row == 0.0 {
            for j in 0..n.saturating_sub(1) {
                uf.union(a_id(i, j), a_id(i, j + 1));
            }
        }
    }
    for j in 0..n {
        if params.r_col == 0.0 {
            for i in 0..m.saturating_sub(1) {
                uf.union(b_id(i, j), b_id(i + 1, j));
            }
        }
        if params.r_sense == 0.0 {
            uf.union(b_id(m - 1, j), gnd);
        }
    }

    // classify roots; detect shorted terminals
    let gnd_root = uf.find(gnd);
    let mut src_root = vec![0usize; m];
    for i in 0..m {
        let r = uf.find(src0 + i);
        if r == gnd_root {
            return Err(Error::Singular(format!(
                "source {i} shorted to ground by zero-resistance merging"
            )));
        }
        src_root[i] = r;
    }
    for i in 1..m {
        if src_root[..i].contains(&src_root[i]) {
            return Err(Error::Singular(format!(
                "sources shorted together (row {i})"
            )));
        }
    }

    // assign unknown indices in an interleaved order along the shorter
    // dimension so the Laplacian band stays narrow
    let mut root_unknown: Vec<Option<usize>> = vec![None; nodes + m + 1];
    let mut n_unknowns = 0usize;
    {
        let mut visit = |node: usize, uf: &mut UnionFind| {
            let r = uf.find(node);
            if r == gnd_root || src_root.contains(&r) {
                return;
            }
            if root_unknown[r].is_none() {
                root_unknown[r] = Some(n_unknowns);
                n_unknowns += 1;
            }
        };
        if m <= n {
            for j in 0..n {
                for i in 0..m {
                    visit(a_id(i, j), &mut uf);
                    visit(b_id(i, j), &mut uf);
                }
            }
        } else {
            for i in 0..m {
                for j in 0..n {
                    visit(a_id(i, j), &mut uf);
                    visit(b_id(i, j), &mut uf);
                }
            }
        }
    }

    let class_of = |node: usize, uf: &mut UnionFind| -> NodeClass {
        let r = uf.find(node);
        if r == gnd_root {
            NodeClass::Ground
        } else if let Some(t) = src_root.iter().position(|&x| x == r) {
            NodeClass::Source(t)
        } else {
            NodeClass::Unknown(root_unknown[r].expect("unassigned unknown root"))
        }
    };

    // branch list: (node handle, node handle, conductance)
    let mut branches: Vec<(usize, usize, f64)> = Vec::with_capacity(4 * m * n);
    for i in 0..m {
        if r_drivers[i] > 0.0 {
            branches.push((src0 + i, a_id(i, 0), 1.0 / r_drivers[i]));
        }
        if params.r_row > 0.0 {
            for j in 0..n - 1 {
                branches.push((a_id(i, j), a_id(i, j + 1), 1.0 / params.r_row));
            }
        }
    }
    for i in 0..m {
        for j in 0..n {
            let gij = g.at(i, j);
            if gij > 0.0 {
                branches.push((a_id(i, j), b_id(i, j), gij));
            }
        }
    }
    for j in 0..n {
        if params.r_col > 0.0 {
            for i in 0..m - 1 {
                branches.push((b_id(i, j), b_id(i + 1, j), 1.0 / params.r_col));
            }
        }
        if params.r_sense > 0.0 {
            branches.push((b_id(m - 1, j), gnd, 1.0 / params.r_sense));
        }
    }

    // bandwidth under the interleaved numbering
    let mut bw = 0usize;
    for &(p, q, _) in &branches {
        if let (NodeClass::Unknown(u), NodeClass::Unknown(v)) =
            (class_of(p, &mut uf), class_of(q, &mut uf))
        {
            bw = bw.max(u.abs_diff(v));
        }
    }

    let mut storage = if n_unknowns < DENSE_NODE_LIMIT {
        Storage::Dense(DMatrix::zeros(n_unknowns, n_unknowns))
    } else {
        Storage::Band(BandMatrix::zeros(n_unknowns, bw))
    };
    let mut source_cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); m];
    let mut source_diag = vec![0.0; m];

    {
        let stamp_diag = |u: usize, gv: f64, storage: &mut Storage| match storage {
            Storage::Dense(d) => d[(u, u)] += gv,
            Storage::Band(b) => b.add(u, u, gv),
        };
        for &(p, q, gv) in &branches {
            let cp = class_of(p, &mut uf);
            let cq = class_of(q, &mut uf);
            match (cp, cq) {
                (NodeClass::Unknown(u), NodeClass::Unknown(v)) => {
                    if u == v {
                        continue; // endpoints merged together: shorted branch
                    }
                    stamp_diag(u, gv, &mut storage);
                    stamp_diag(v, gv, &mut storage);
                    match &mut storage {
                        Storage::Dense(d) => {
                            d[(u, v)] -= gv;
                            d[(v, u)] -= gv;
                        }
                        Storage::Band(b) => b.add(u, v, -gv),
                    }
                }
                (NodeClass::Unknown(u), NodeClass::Ground)
                | (NodeClass::Ground, NodeClass::Unknown(u)) => {
                    stamp_diag(u, gv, &mut storage);
                }
                (NodeClass::Unknown(u), NodeClass::Source(t))
                | (NodeClass::Source(t), NodeClass::Unknown(u)) => {
                    stamp_diag(u, gv, &mut storage);
                    source_cols[t].push((u, gv));
                    source_diag[t] += gv;
                }
                (NodeClass::Source(t), NodeClass::Ground)
                | (NodeClass::Ground, NodeClass::Source(t)) => {
                    source_diag[t] += gv;
                }
                (NodeClass::Source(t), NodeClass::Source(s)) => {
                    if t != s {
                        return Err(Error::Singular(format!(
                            "branch directly couples sources {t} and {s}"
                        )));
                    }
                }
                (NodeClass::Ground, NodeClass::Ground) => {}
            }
        }
    }

    // output-current extraction per column
    let mut iout = Vec::with_capacity(n);
    for j in 0..n {
        if params.r_sense > 0.0 {
            match class_of(b_id(m - 1, j), &mut uf) {
                NodeClass::Unknown(u) => iout.push(IoutSpec::Sense {
                    pos: u,
                    g: 1.0 / params.r_sense,
                }),
                other => {
                    return Err(Error::Singular(format!(
                        "column {j}: sense node unexpectedly resolved to {other:?}"
                    )))
                }
            }
        } else {
            // every branch draining into the grounded region of this column
            let mut terms: Vec<(Term, f64)> = Vec::new();
            let mut add_boundary = |from: usize, gv: f64, uf: &mut UnionFind| {
                match class_of(from, uf) {
                    NodeClass::Unknown(u) => terms.push((Term::X(u), gv)),
                    NodeClass::Source(t) => terms.push((Term::Src(t), gv)),
                    NodeClass::Ground => {}
                }
            };
            for i in 0..m {
                if class_of(b_id(i, j), &mut uf) != NodeClass::Ground {
                    continue;
                }
                let gij = g.at(i, j);
                if gij > 0.0 {
                    add_boundary(a_id(i, j), gij, &mut uf);
                }
                if params.r_col > 0.0 {
                    if i > 0 {
                        add_boundary(b_id(i - 1, j), 1.0 / params.r_col, &mut uf);
                    }
                    if i + 1 < m {
                        add_boundary(b_id(i + 1, j), 1.0 / params.r_col, &mut uf);
                    }
                }
            }
            iout.push(IoutSpec::GroundedSum(terms));
        }
    }

    let node_class: Vec<NodeClass> = (0..nodes).map(|p| class_of(p, &mut uf)).collect();

    Ok(NodalSystem {
        rows: m,
        cols: n,
        g: g.matrix().clone(),
        n_unknowns,
        node_class,
        storage,
        source_cols,
        source_diag,
        iout,
        factor: OnceLock::new(),
    })
}

impl NodalSystem {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Count of unmerged internal nodes (the solved dimension). Equals
    /// `2*M*N` when no wire segment has zero resistance.
    pub fn n_unknowns(&self) -> usize {
        self.n_unknowns
    }

    /// Public node index of `a(i,j)` / `b(i,j)`: row-side nodes first in
    /// row-major order, then column-side nodes in column-major order.
    pub fn node_index(&self, side: Side, i: usize, j: usize) -> usize {
        match side {
            Side::Row => i * self.cols + j,
            Side::Col => self.rows * self.cols + j * self.rows + i,
        }
    }

    /// Resolution of a physical node after merging.
    pub fn node_class(&self, side: Side, i: usize, j: usize) -> NodeClass {
        self.node_class[self.node_index(side, i, j)]
    }

    /// Dense copy of the assembled Laplacian over the unknowns (test and
    /// inspection aid; the solve path never forms this for banded systems).
    pub fn dense_laplacian(&self) -> DMatrix<f64> {
        match &self.storage {
            Storage::Dense(d) => d.clone(),
            Storage::Band(b) => {
                let n = self.n_unknowns;
                let mut d = DMatrix::zeros(n, n);
                for i in 0..n {
                    for j in i.saturating_sub(b.bandwidth())..=i {
                        let v = b.get(i, j);
                        d[(i, j)] = v;
                        d[(j, i)] = v;
                    }
                }
                d
            }
        }
    }

    /// Right-hand side induced by the source vector.
    pub fn rhs(&self, vin: &[f64]) -> Vec<f64> {
        let mut rhs = vec![0.0; self.n_unknowns];
        for (t, cols) in self.source_cols.iter().enumerate() {
            let v = vin[t];
            if v != 0.0 {
                for &(u, gv) in cols {
                    rhs[u] += gv * v;
                }
            }
        }
        rhs
    }

    fn factor(&self) -> Result<&Factor> {
        self.factor
            .get_or_init(|| {
                if self.n_unknowns == 0 {
                    return Ok(Factor::Empty);
                }
                match &self.storage {
                    Storage::Dense(d) => nalgebra::Cholesky::new(d.clone())
                        .map(Factor::Dense)
                        .ok_or_else(|| {
                            Error::Singular("dense Cholesky: matrix not positive definite".into())
                        }),
                    Storage::Band(b) => b.cholesky().map(Factor::Band),
                }
            })
            .as_ref()
            .map_err(|e| e.clone())
    }

    fn mat_vec(&self, x: &[f64]) -> Vec<f64> {
        match &self.storage {
            Storage::Dense(d) => {
                let xv = DVector::from_column_slice(x);
                (d * xv).as_slice().to_vec()
            }
            Storage::Band(b) => b.mat_vec(x),
        }
    }

    fn condition_estimate(&self) -> f64 {
        match self.factor() {
            Ok(Factor::Band(f)) => f.condition_estimate(),
            Ok(Factor::Dense(_)) | Ok(Factor::Empty) | Err(_) => f64::NAN,
        }
    }

    /// Solve for the node voltages under the given source vector and extract
    /// the port currents. The relative residual is checked against
    /// [`RESIDUAL_LIMIT`]; one refinement pass is applied before giving up.
    pub fn solve(&self, vin: &[f64]) -> Result<SolveResult> {
        if vin.len() != self.rows {
            return Err(Error::DimensionMismatch(format!(
                "vin length {} for {} rows",
                vin.len(),
                self.rows
            )));
        }
        if let Some(bad) = vin.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("input voltage {bad}")));
        }

        let factor = self.factor()?;
        let rhs = self.rhs(vin);
        let mut x = match factor {
            Factor::Empty => Vec::new(),
            Factor::Dense(f) => {
                let b = DVector::from_column_slice(&rhs);
                f.solve(&b).as_slice().to_vec()
            }
            Factor::Band(f) => f.solve(&rhs),
        };

        if !x.is_empty() {
            let rhs_norm = rhs.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
            if rhs_norm > 0.0 {
                let mut resid = self.residual(&x, &rhs);
                if resid / rhs_norm > 1e-12 {
                    // one step of iterative refinement
                    let ax = self.mat_vec(&x);
                    let r: Vec<f64> = rhs.iter().zip(&ax).map(|(b, a)| b - a).collect();
                    let dx = match factor {
                        Factor::Empty => unreachable!(),
                        Factor::Dense(f) => {
                            let b = DVector::from_column_slice(&r);
                            f.solve(&b).as_slice().to_vec()
                        }
                        Factor::Band(f) => f.solve(&r),
                    };
                    for (xi, di) in x.iter_mut().zip(&dx) {
                        *xi += di;
                    }
                    resid = self.residual(&x, &rhs);
                }
                if resid / rhs_norm > RESIDUAL_LIMIT {
                    return Err(Error::IllConditioned {
                        residual: resid / rhs_norm,
                        limit: RESIDUAL_LIMIT,
                        cond_estimate: self.condition_estimate(),
                    });
                }
            }
        }

        // resolve all physical node voltages
        let node_voltages: Vec<f64> = self
            .node_class
            .iter()
            .map(|c| match c {
                NodeClass::Unknown(u) => x[*u],
                NodeClass::Ground => 0.0,
                NodeClass::Source(t) => vin[*t],
            })
            .collect();

        let i_out: Vec<f64> = self
            .iout
            .iter()
            .map(|spec| match spec {
                IoutSpec::Sense { pos, g } => x[*pos] * g,
                IoutSpec::GroundedSum(terms) => terms
                    .iter()
                    .map(|(t, gv)| match t {
                        Term::X(u) => gv * x[*u],
                        Term::Src(t) => gv * vin[*t],
                    })
                    .sum(),
            })
            .collect();

        let i_in: Vec<f64> = (0..self.rows)
            .map(|t| {
                let coupled: f64 = self.source_cols[t]
                    .iter()
                    .map(|&(u, gv)| gv * x[u])
                    .sum();
                self.source_diag[t] * vin[t] - coupled
            })
            .collect();

        Ok(SolveResult {
            node_voltages,
            i_out,
            i_in,
        })
    }

    fn residual(&self, x: &[f64], rhs: &[f64]) -> f64 {
        let ax = self.mat_vec(x);
        ax.iter()
            .zip(rhs)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max)
    }

    /// Per-device currents `G[i][j]*(Va(i,j) - Vb(i,j))`. A negative entry
    /// means the current through that device is reversed (a sneak path).
    pub fn branch_currents(&self, result: &SolveResult) -> Result<Matrix> {
        if result.node_voltages.len() != 2 * self.rows * self.cols {
            return Err(Error::DimensionMismatch(
                "solve result does not belong to this system".into(),
            ));
        }
        let mut out = Matrix::zeros(self.rows, self.cols);
        for i in 0..self.rows {
            for j in 0..self.cols {
                let va = result.node_voltages[self.node_index(Side::Row, i, j)];
                let vb = result.node_voltages[self.node_index(Side::Col, i, j)];
                *out.at_mut(i, j) = self.g.at(i, j) * (va - vb);
            }
        }
        Ok(out)
    }
}

/// Effective port conductances by superposition: row i of `g_eff` is the
/// output current vector under `vin = e_i`, and `g_load[i]` is the current
/// delivered by source i under the same drive (the driving-point input
/// conductance of row i with all other sources held at 0 V through their
/// drivers).
pub fn port_conductance(
    params: &CrossbarParams,
    g: &ConductanceMatrix,
) -> Result<(Matrix, Vec<f64>)> {
    let sys = assemble(params, g)?;
    port_conductance_of(&sys)
}

/// Same as [`port_conductance`] on an already-assembled system, sharing its
/// cached factorization across the M superposition solves.
pub fn port_conductance_of(sys: &NodalSystem) -> Result<(Matrix, Vec<f64>)> {
    let m = sys.rows();
    let n = sys.cols();
    let mut g_eff = Matrix::zeros(m, n);
    let mut g_load = vec![0.0; m];
    let mut vin = vec![0.0; m];
    for i in 0..m {
        vin[i] = 1.0;
        let res = sys.solve(&vin)?;
        vin[i] = 0.0;
        for j in 0..n {
            *g_eff.at_mut(i, j) = res.i_out[j];
        }
        g_load[i] = res.i_in[i];
    }
    Ok((g_eff, g_load))
}
