//! Reduction of the linear CpH DAE to an explicit ODE `s' = M s + G w + G' w'`
//! by dummy derivatives, and its integration.
//!
//! The `f_C` and `f_l` rows with `c = 1` are algebraic constraints on the
//! storage states. As many storage states are solved from them, the rest form
//! `s`. The remaining unknowns `u = (z_storage', z_r, z_R)` solve `J u = -known`.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::cph::CphDae;
use crate::error::CphError;
use crate::loopcut::Group;
use crate::ode::{self, Options, Step};
use crate::sigma::{block_ranges, singular_ratio, StructuralResult, SINGULAR_RATIO};
use crate::waveform::Waveform;

/// Exhaustive column search is used while the number of candidate subsets is at most this.
const EXHAUSTIVE_LIMIT: usize = 2000;

#[derive(Debug, Clone, PartialEq)]
pub struct DdSelection {
    /// Σ rows with `c = 1` in the capacitor block.
    pub rows_c: Vec<usize>,
    /// Σ rows with `c = 1` in the inductor block.
    pub rows_l: Vec<usize>,
    /// Storage states solved from the `f_C` rows.
    pub solved_c: Vec<usize>,
    /// Storage states solved from the `f_l` rows.
    pub solved_l: Vec<usize>,
    /// Remaining capacitor states, `s_C`.
    pub states_c: Vec<usize>,
    /// Remaining inductor states, `s_L`.
    pub states_l: Vec<usize>,
    pub k_c: DMatrix<f64>,
    pub k_l: DMatrix<f64>,
}

impl DdSelection {
    /// Edges of `s = (s_C, s_L)`.
    pub fn states(&self) -> Vec<usize> {
        self.states_c.iter().chain(&self.states_l).copied().collect()
    }

    pub fn solved(&self) -> Vec<usize> {
        self.solved_c.iter().chain(&self.solved_l).copied().collect()
    }
}

fn binomial(n: usize, k: usize) -> usize {
    let k = k.min(n - k);
    let mut r: usize = 1;
    for i in 0..k {
        r = r.saturating_mul(n - i) / (i + 1);
    }
    r
}

fn subsets(n: usize, k: usize, f: &mut impl FnMut(&[usize])) {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, f: &mut impl FnMut(&[usize])) {
        if cur.len() == k {
            f(cur);
            return;
        }
        for i in start..=n - (k - cur.len()) {
            cur.push(i);
            rec(i + 1, n, k, cur, f);
            cur.pop();
        }
    }
    rec(0, n, k, &mut Vec::with_capacity(k), f);
}

/// Greedy column-pivoted Gram-Schmidt: the `rows` most independent columns.
fn pivoted_columns(a: &DMatrix<f64>) -> Vec<usize> {
    let mut work = a.clone();
    let mut chosen = Vec::new();
    for _ in 0..a.nrows() {
        let Some(best) = (0..work.ncols())
            .filter(|j| !chosen.contains(j))
            .max_by(|&i, &j| work.column(i).norm().total_cmp(&work.column(j).norm()))
        else {
            break;
        };
        let q = work.column(best).normalize();
        chosen.push(best);
        for j in 0..work.ncols() {
            let proj = q.dot(&work.column(j));
            let updated = work.column(j) - &q * proj;
            work.set_column(j, &updated);
        }
    }
    chosen.sort_unstable();
    chosen
}

/// Columns of `a` (`n x k`, `n <= k`) forming the best-conditioned `n x n` submatrix.
pub fn choose_columns(a: &DMatrix<f64>) -> Vec<usize> {
    let (n, k) = a.shape();
    if n == 0 {
        return Vec::new();
    }
    if binomial(k, n) > EXHAUSTIVE_LIMIT {
        return pivoted_columns(a);
    }
    let mut best: Option<(f64, Vec<usize>)> = None;
    subsets(k, n, &mut |cols| {
        let r = singular_ratio(&a.select_columns(cols));
        if best.as_ref().is_none_or(|(b, _)| r > *b) {
            best = Some((r, cols.to_vec()));
        }
    });
    best.map(|(_, c)| c).unwrap_or_default()
}

/// Picks `K_C` from the constraint rows of `J_C` and `K_L` from those of `J_L`.
/// Constraint rows are the ones with `c = 1`; candidate columns have `d = 1`.
pub fn select_dummies(dae: &CphDae, st: &StructuralResult) -> Result<DdSelection, CphError> {
    if st.index > 2 {
        return Err(CphError::Internal(format!("index {} exceeds 2", st.index)));
    }
    let ranges = block_ranges(dae.partition());
    let vars = &st.sigma.cols;
    let pick = |(start, len): (usize, usize)| {
        let rows: Vec<usize> = (start..start + len).filter(|&i| st.offsets.c[i] == 1).collect();
        let cols: Vec<usize> = (start..start + len).filter(|&j| st.offsets.d[j] == 1).collect();
        let upper = st.jacobian.select_rows(&rows).select_columns(&cols);
        let chosen = choose_columns(&upper);
        let k = upper.select_columns(&chosen);
        if !rows.is_empty() && (chosen.len() != rows.len() || singular_ratio(&k) <= SINGULAR_RATIO) {
            return Err(CphError::Internal("rank-deficient dummy selection".into()));
        }
        let solved: Vec<usize> = chosen.iter().map(|&j| vars[cols[j]]).collect();
        let states: Vec<usize> = cols
            .iter()
            .map(|&j| vars[j])
            .filter(|e| !solved.contains(e))
            .collect();
        Ok((rows, solved, states, k))
    };
    let (rows_c, solved_c, states_c, k_c) = pick(ranges[0])?;
    let (rows_l, solved_l, states_l, k_l) = pick(ranges[1])?;
    Ok(DdSelection {
        rows_c,
        rows_l,
        solved_c,
        solved_l,
        states_c,
        states_l,
        k_c,
        k_l,
    })
}

/// `s' = M s + G_w w(t) + G_dw w'(t)` together with the maps that rebuild every
/// circuit quantity from `(t, s)`.
#[derive(Debug, Clone)]
pub struct ExplicitOde {
    dae: CphDae,
    selection: DdSelection,
    pub m: DMatrix<f64>,
    pub g_w: DMatrix<f64>,
    pub g_dw: DMatrix<f64>,
    /// Source edges ordering the columns of `G_w`, `G_dw`: `v` then `I`.
    pub source_edges: Vec<usize>,
    waves: Vec<Waveform>,
    dwaves: Vec<Waveform>,
    /// Edges of the reduced variables, Σ column order.
    vars: Vec<usize>,
    storage: Vec<usize>,
    e: DMatrix<f64>,
    e_w: DMatrix<f64>,
    j_inv: DMatrix<f64>,
    a_z: DMatrix<f64>,
    b_w: DMatrix<f64>,
    b_dw: DMatrix<f64>,
}

/// Everything known about the circuit at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    /// States by edge.
    pub x: Vec<f64>,
    /// State derivatives by edge (zero where not determined by the reduced system).
    pub xdot: Vec<f64>,
    pub v: Vec<f64>,
    pub i: Vec<f64>,
    pub energy: f64,
}

pub fn reduce_to_ode(
    dae: &CphDae,
    st: &StructuralResult,
    sel: &DdSelection,
) -> Result<ExplicitOde, CphError> {
    let p = dae.partition();
    let vars = st.sigma.cols.clone();
    let n = vars.len();
    let pos: HashMap<usize, usize> = vars.iter().enumerate().map(|(j, &e)| (e, j)).collect();
    let storage: Vec<usize> = (0..n).filter(|&j| st.offsets.d[j] == 1).map(|j| vars[j]).collect();
    let spos: HashMap<usize, usize> = storage.iter().enumerate().map(|(k, &e)| (e, k)).collect();
    let source_edges = p.concat(&[Group::TreeV, Group::LinkI]);
    let wpos: HashMap<usize, usize> =
        source_edges.iter().enumerate().map(|(k, &e)| (e, k)).collect();
    let nw = source_edges.len();
    let states = sel.states();
    let ns = states.len();

    // known-term matrices of the (differentiated) equations
    let mut a_z = DMatrix::zeros(n, storage.len());
    let mut b_w = DMatrix::zeros(n, nw);
    let mut b_dw = DMatrix::zeros(n, nw);
    for (i, &row) in st.sigma.rows.iter().enumerate() {
        let expr = dae.residual_expr(row);
        let ci = st.offsets.c[i];
        for (&(edge, k), &coef) in &expr.terms {
            let j = *pos.get(&edge).ok_or_else(|| {
                CphError::Internal(format!("reduced row {row} references output edge {edge}"))
            })?;
            let order = i64::from(k) + ci;
            if order < st.offsets.d[j] {
                a_z[(i, spos[&edge])] += coef;
            } else if order > st.offsets.d[j] {
                return Err(CphError::Internal("offsets violate sigma".into()));
            }
        }
        for (&edge, &coef) in &expr.sources {
            match ci {
                0 => b_w[(i, wpos[&edge])] += coef,
                1 => b_dw[(i, wpos[&edge])] += coef,
                _ => return Err(CphError::Internal("offset above 1".into())),
            }
        }
    }

    // z_storage = E s + E_w w
    let mut e = DMatrix::zeros(storage.len(), ns);
    let mut e_w = DMatrix::zeros(storage.len(), nw);
    for (k, s) in states.iter().enumerate() {
        e[(spos[s], k)] = 1.0;
    }
    for (rows, solved, k) in [
        (&sel.rows_c, &sel.solved_c, &sel.k_c),
        (&sel.rows_l, &sel.solved_l, &sel.k_l),
    ] {
        if rows.is_empty() {
            continue;
        }
        let k_inv = k
            .clone()
            .try_inverse()
            .ok_or_else(|| CphError::Internal("singular dummy block".into()))?;
        // K y + R s + S w = 0 over these rows
        let mut r = DMatrix::zeros(rows.len(), ns);
        for (k_idx, s) in states.iter().enumerate() {
            for (a, &i) in rows.iter().enumerate() {
                r[(a, k_idx)] = st.jacobian[(i, pos[s])];
            }
        }
        let sw = b_dw.select_rows(rows);
        let y_s = -&k_inv * r;
        let y_w = -&k_inv * sw;
        for (a, y) in solved.iter().enumerate() {
            e.set_row(spos[y], &y_s.row(a));
            e_w.set_row(spos[y], &y_w.row(a));
        }
    }

    let j_inv = st
        .jacobian
        .clone()
        .try_inverse()
        .ok_or_else(|| CphError::Internal("System Jacobian not invertible".into()))?;
    let sel_rows: Vec<usize> = states.iter().map(|s| pos[s]).collect();
    let jsel = j_inv.select_rows(&sel_rows);
    let m = -&jsel * (&a_z * &e);
    let g_w = -&jsel * (&a_z * &e_w + &b_w);
    let g_dw = -&jsel * &b_dw;

    let waves: Vec<Waveform> = source_edges
        .iter()
        .map(|&s| dae.waveform(s).cloned().unwrap_or_else(|| Waveform::constant(0.0)))
        .collect();
    let dwaves = waves.iter().map(Waveform::derivative).collect();
    Ok(ExplicitOde {
        dae: dae.clone(),
        selection: sel.clone(),
        m,
        g_w,
        g_dw,
        source_edges,
        waves,
        dwaves,
        vars,
        storage,
        e,
        e_w,
        j_inv,
        a_z,
        b_w,
        b_dw,
    })
}

impl ExplicitOde {
    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn dae(&self) -> &CphDae {
        &self.dae
    }

    pub fn selection(&self) -> &DdSelection {
        &self.selection
    }

    /// Names of the entries of `s`, e.g. `q_c3`.
    pub fn state_labels(&self) -> Vec<String> {
        self.selection
            .states()
            .iter()
            .map(|&e| self.dae.state_label(e))
            .collect()
    }

    fn forcing(&self, t: f64) -> (DVector<f64>, DVector<f64>) {
        (
            DVector::from_iterator(self.waves.len(), self.waves.iter().map(|w| w.eval(t))),
            DVector::from_iterator(self.dwaves.len(), self.dwaves.iter().map(|w| w.eval(t))),
        )
    }

    pub fn rhs(&self, t: f64, s: &[f64], ds: &mut [f64]) {
        let (w, dw) = self.forcing(t);
        let r = &self.m * DVector::from_column_slice(s) + &self.g_w * w + &self.g_dw * dw;
        ds.copy_from_slice(r.as_slice());
    }

    /// Rebuilds the full state, its derivative, ports and energy from `(t, s)`.
    pub fn reconstruct(&self, t: f64, s: &[f64]) -> Result<Snapshot, CphError> {
        let m = self.dae.edge_count();
        let (w, dw) = self.forcing(t);
        let z = &self.e * DVector::from_column_slice(s) + &self.e_w * &w;
        let u = -&self.j_inv * (&self.a_z * &z + &self.b_w * &w + &self.b_dw * &dw);
        let mut x = vec![0.0; m];
        let mut xdot = vec![0.0; m];
        for (k, &edge) in self.storage.iter().enumerate() {
            x[edge] = z[k];
        }
        for (j, &edge) in self.vars.iter().enumerate() {
            if self.storage.contains(&edge) {
                xdot[edge] = u[j];
            } else {
                x[edge] = u[j];
            }
        }
        let p = self.dae.partition();
        let (xv, xi) = self.dae.output_variables(t, &x, &xdot)?;
        for (&e, val) in p.edges(Group::TreeV).iter().zip(xv) {
            x[e] = val;
        }
        for (&e, val) in p.edges(Group::LinkI).iter().zip(xi) {
            x[e] = val;
        }
        let (v, i) = self.dae.eval_ports(t, &x, &xdot)?;
        let energy = self.dae.hamiltonian(&x);
        Ok(Snapshot {
            x,
            xdot,
            v,
            i,
            energy,
        })
    }

    /// `s` extracted from a full edge-indexed state.
    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        self.selection.states().iter().map(|&e| x[e]).collect()
    }
}

/// Power terms at one instant: `dH/dt`, power delivered by the sources and
/// power dissipated in the resistors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PowerBalance {
    pub dh_dt: f64,
    pub supplied: f64,
    pub dissipated: f64,
}

impl PowerBalance {
    pub fn residual(&self) -> f64 {
        self.dh_dt - (self.supplied - self.dissipated)
    }

    pub fn scale(&self) -> f64 {
        self.dh_dt.abs().max(self.supplied.abs()).max(self.dissipated.abs())
    }
}

pub fn power_balance(dae: &CphDae, snap: &Snapshot) -> PowerBalance {
    let grad = dae.hamiltonian_gradient(&snap.x);
    let dh_dt = grad.iter().zip(&snap.xdot).map(|(g, d)| g * d).sum();
    let mut supplied = 0.0;
    let mut dissipated = 0.0;
    for (e, el) in dae.circuit().elements().iter().enumerate() {
        let pw = snap.v[e] * snap.i[e];
        if el.kind.is_source() {
            supplied -= pw;
        } else if el.kind == crate::netlist::ElementKind::Resistor {
            dissipated += pw;
        }
    }
    PowerBalance {
        dh_dt,
        supplied,
        dissipated,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub state_labels: Vec<String>,
    pub edge_labels: Vec<String>,
    pub s: Vec<Vec<f64>>,
    pub x: Vec<Vec<f64>>,
    pub xdot: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub i: Vec<Vec<f64>>,
    /// Voltage-source currents, partition order.
    pub xv: Vec<Vec<f64>>,
    /// Current-source voltages, partition order.
    pub xi: Vec<Vec<f64>>,
    pub energy: Vec<f64>,
    pub stats: ode::Stats,
}

/// Integrates from `s0` and reconstructs everything at `samples`.
pub fn integrate(
    ode: &ExplicitOde,
    t0: f64,
    t1: f64,
    s0: &[f64],
    samples: &[f64],
    opts: &Options,
) -> Result<Trajectory, CphError> {
    integrate_observed(ode, t0, t1, s0, samples, opts, |_| {})
}

pub fn integrate_observed<O: FnMut(&Step)>(
    ode: &ExplicitOde,
    t0: f64,
    t1: f64,
    s0: &[f64],
    samples: &[f64],
    opts: &Options,
    on_step: O,
) -> Result<Trajectory, CphError> {
    if s0.len() != ode.dim() {
        return Err(CphError::Dimension(format!(
            "s0 has {} entries, the reduced ODE has {}",
            s0.len(),
            ode.dim()
        )));
    }
    let sol = ode::integrate(|t, s, ds| ode.rhs(t, s, ds), t0, t1, s0, samples, opts, on_step)?;
    let dae = ode.dae();
    let p = dae.partition();
    let mut tr = Trajectory {
        times: samples.to_vec(),
        state_labels: ode.state_labels(),
        edge_labels: dae.circuit().labels(),
        s: Vec::new(),
        x: Vec::new(),
        xdot: Vec::new(),
        v: Vec::new(),
        i: Vec::new(),
        xv: Vec::new(),
        xi: Vec::new(),
        energy: Vec::new(),
        stats: sol.stats,
    };
    for (&t, s) in samples.iter().zip(sol.samples) {
        let snap = ode.reconstruct(t, &s)?;
        tr.xv.push(p.edges(Group::TreeV).iter().map(|&e| snap.x[e]).collect());
        tr.xi.push(p.edges(Group::LinkI).iter().map(|&e| snap.x[e]).collect());
        tr.s.push(s);
        tr.x.push(snap.x);
        tr.xdot.push(snap.xdot);
        tr.v.push(snap.v);
        tr.i.push(snap.i);
        tr.energy.push(snap.energy);
    }
    Ok(tr)
}
