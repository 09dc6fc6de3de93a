//! Independent reference model: grounded-node modified nodal analysis, reduced
//! to an explicit ODE by the shuffle algorithm in exact rational arithmetic.
//!
//! Unknowns are `y = (lambda, i_L, i_V)`: node potentials (ground removed),
//! inductor currents and voltage-source currents.

use nalgebra::{DMatrix, DVector};
use num_traits::Zero;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cph::{element_matrix, CouplingBlocks};
use crate::error::CphError;
use crate::exact::{rat_int, RatMatrix};
use crate::graph::incidence_matrix;
use crate::netlist::{Circuit, ElementKind};
use crate::ode::{self, Options};
use crate::waveform::Waveform;

#[derive(Debug, Clone)]
pub struct MnaSystem {
    n_lambda: usize,
    /// `y' = a y + sum_k s[k] w^(k)(t)`.
    a: DMatrix<f64>,
    s: Vec<DMatrix<f64>>,
    /// `cy y + sum_k cs[k] w^(k)(t) = 0` must hold on consistent states.
    cy: DMatrix<f64>,
    cs: Vec<DMatrix<f64>>,
    /// `waves[k][src]` is the k-th derivative of source `src`.
    waves: Vec<Vec<Waveform>>,
    /// Reduced incidence, edges x non-ground nodes.
    b: DMatrix<f64>,
    caps: (Vec<usize>, DMatrix<f64>),
    inds: (Vec<usize>, DMatrix<f64>),
    kinds: Vec<ElementKind>,
    ind_pos: Vec<Option<usize>>,
    vsrc_pos: Vec<Option<usize>>,
}

fn rat(m: &DMatrix<f64>) -> Result<RatMatrix, CphError> {
    Ok(RatMatrix::from_f64(m)?)
}

fn place(dst: &mut RatMatrix, r0: usize, c0: usize, src: &RatMatrix) {
    for i in 0..src.nrows() {
        for j in 0..src.ncols() {
            dst.set(r0 + i, c0 + j, src.get(i, j).clone());
        }
    }
}

/// Builds the MNA pencil and reduces it. `ground` is a one-based node number.
pub fn mna_system(
    circuit: &Circuit,
    coupling: Option<&CouplingBlocks>,
    ground: usize,
) -> Result<MnaSystem, CphError> {
    let n_nodes = circuit.node_count();
    if ground == 0 || ground > n_nodes {
        return Err(CphError::Config(format!("ground node {ground} is not in 1..={n_nodes}")));
    }
    let a_full = incidence_matrix(circuit);
    let m = circuit.edge_count();
    let keep: Vec<usize> = (0..n_nodes).filter(|&k| k != ground - 1).collect();
    let b = DMatrix::from_fn(m, keep.len(), |e, j| a_full.matrix().get(e, keep[j]) as f64);
    let kinds = circuit.kinds();
    let of = |k: ElementKind| -> Vec<usize> { (0..m).filter(|&e| kinds[e] == k).collect() };
    let (l_edges, vs, is) = (of(ElementKind::Inductor), of(ElementKind::VoltageSource), of(ElementKind::CurrentSource));
    let caps = element_matrix(circuit, ElementKind::Capacitor, coupling)?;
    let inds = element_matrix(circuit, ElementKind::Inductor, coupling)?;
    let ress = element_matrix(circuit, ElementKind::Resistor, coupling)?;

    let nl = keep.len();
    let n = nl + l_edges.len() + vs.len();
    let sources: Vec<usize> = vs.iter().chain(&is).copied().collect();
    let nw = sources.len();
    // sums like C1 + C2 must stay exact, so the products are formed over Q
    let b_rat = rat(&b)?;
    let all_nodes: Vec<usize> = (0..nl).collect();
    let rows = |edges: &[usize]| b_rat.select(edges, &all_nodes);
    let (b_c, b_r, b_l, b_v, b_i) = (rows(&caps.0), rows(&ress.0), rows(&l_edges), rows(&vs), rows(&is));
    let congruence = |bk: &RatMatrix, k: &DMatrix<f64>| -> Result<RatMatrix, CphError> {
        Ok(bk.transpose().mul(&rat(k)?)?.mul(bk)?)
    };
    let minus = rat_int(-1);

    let mut e = RatMatrix::zeros(n, n);
    let mut a = RatMatrix::zeros(n, n);
    let mut s0 = RatMatrix::zeros(n, nw);
    place(&mut e, 0, 0, &congruence(&b_c, &caps.1)?);
    place(&mut a, 0, 0, &congruence(&b_r, &ress.1)?);
    place(&mut a, 0, nl, &b_l.transpose());
    place(&mut a, 0, nl + l_edges.len(), &b_v.transpose());
    place(&mut s0, 0, vs.len(), &b_i.transpose());
    let r1 = nl;
    place(&mut e, r1, r1, &rat(&inds.1)?);
    place(&mut a, r1, 0, &b_l.scale(&minus));
    let r2 = nl + l_edges.len();
    place(&mut a, r2, 0, &b_v);
    place(&mut s0, r2, 0, &RatMatrix::identity(vs.len()).scale(&minus));

    // augmented [E | A | S_0 .. S_K]
    let orders = n + 2;
    let mut aug = e.hstack(&a).hstack(&s0);
    aug = aug.hstack(&RatMatrix::zeros(n, nw * (orders - 1)));
    let s_col = |k: usize| 2 * n + k * nw;
    let mut constraints: Option<RatMatrix> = None;
    let mut done = false;
    for _ in 0..=n {
        let rank = aug.rref(n).len();
        if rank == n {
            done = true;
            break;
        }
        let zero_rows: Vec<usize> = (rank..n).collect();
        let all_cols: Vec<usize> = (0..aug.ncols()).collect();
        let c = aug.select(&zero_rows, &all_cols);
        for i in 0..c.nrows() {
            if c.is_zero_row(i, n..2 * n) {
                return Err(CphError::Internal(if c.is_zero_row(i, 0..c.ncols()) {
                    "MNA pencil is singular".into()
                } else {
                    "MNA constraints are inconsistent".into()
                }));
            }
            if !c.is_zero_row(i, s_col(orders - 1)..s_col(orders)) {
                return Err(CphError::Internal("source derivative order overflow".into()));
            }
        }
        constraints = Some(match constraints {
            None => c.clone(),
            Some(prev) => prev.vstack(&c),
        });
        // differentiate: E <- A_z, A <- 0, S_{k+1} <- S_k
        for &i in &zero_rows {
            for j in 0..n {
                let v = aug.get(i, n + j).clone();
                aug.set(i, j, v);
                aug.set(i, n + j, Zero::zero());
            }
            for k in (0..orders - 1).rev() {
                for q in 0..nw {
                    let v = aug.get(i, s_col(k) + q).clone();
                    aug.set(i, s_col(k + 1) + q, v);
                }
            }
            for q in 0..nw {
                aug.set(i, s_col(0) + q, Zero::zero());
            }
        }
    }
    if !done {
        return Err(CphError::Internal("shuffle algorithm did not terminate".into()));
    }
    let f = aug.to_f64();
    let a_ode = -f.view((0, n), (n, n)).into_owned();
    let s_ode: Vec<DMatrix<f64>> =
        (0..orders).map(|k| -f.view((0, s_col(k)), (n, nw)).into_owned()).collect();
    let (cy, cs) = match constraints {
        Some(c) => {
            let c = c.to_f64();
            let rows = c.nrows();
            (
                c.view((0, n), (rows, n)).into_owned(),
                (0..orders).map(|k| c.view((0, s_col(k)), (rows, nw)).into_owned()).collect(),
            )
        }
        None => (DMatrix::zeros(0, n), vec![DMatrix::zeros(0, nw); orders]),
    };
    let base: Vec<Waveform> = sources
        .iter()
        .map(|&e| circuit.element(e).waveform().cloned().unwrap_or_else(|| Waveform::constant(0.0)))
        .collect();
    let waves = (0..orders)
        .map(|k| base.iter().map(|w| w.nth_derivative(k)).collect())
        .collect();
    let mut ind_pos = vec![None; m];
    for (k, &e) in l_edges.iter().enumerate() {
        ind_pos[e] = Some(nl + k);
    }
    let mut vsrc_pos = vec![None; m];
    for (k, &e) in vs.iter().enumerate() {
        vsrc_pos[e] = Some(r2 + k);
    }
    Ok(MnaSystem {
        n_lambda: nl,
        a: a_ode,
        s: s_ode,
        cy,
        cs,
        waves,
        b,
        caps,
        inds,
        kinds,
        ind_pos,
        vsrc_pos,
    })
}

impl MnaSystem {
    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    fn forcing(&self, t: f64, mats: &[DMatrix<f64>]) -> DVector<f64> {
        let mut r = DVector::zeros(mats.first().map_or(0, |m| m.nrows()));
        for (k, m) in mats.iter().enumerate() {
            if m.iter().all(|v| *v == 0.0) {
                continue;
            }
            let w = DVector::from_iterator(self.waves[k].len(), self.waves[k].iter().map(|w| w.eval(t)));
            r += m * w;
        }
        r
    }

    pub fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]) {
        let r = &self.a * DVector::from_column_slice(y) + self.forcing(t, &self.s);
        dy.copy_from_slice(r.as_slice());
    }

    /// Constraint residual `cy y + sum cs_k w^(k)(t)`.
    pub fn constraint_residual(&self, t: f64, y: &[f64]) -> DVector<f64> {
        &self.cy * DVector::from_column_slice(y) + self.forcing(t, &self.cs)
    }

    /// Least-squares projection of `guess` onto the consistent states at `t`.
    pub fn consistent_initial(&self, t: f64, guess: &[f64]) -> Result<Vec<f64>, CphError> {
        let g = DVector::from_column_slice(guess);
        if self.cy.nrows() == 0 {
            return Ok(guess.to_vec());
        }
        let r = self.constraint_residual(t, guess);
        let pinv = self
            .cy
            .clone()
            .pseudo_inverse(1e-12)
            .map_err(|e| CphError::Internal(e.to_string()))?;
        Ok((g - pinv * r).as_slice().to_vec())
    }

    /// CpH edge states from `y`: charges, fluxes, source currents and the
    /// voltages of resistors and current sources.
    pub fn edge_states(&self, y: &[f64]) -> Vec<f64> {
        let lam = DVector::from_column_slice(&y[..self.n_lambda]);
        let v = &self.b * lam;
        let mut x: Vec<f64> = v.as_slice().to_vec();
        let q = &self.caps.1 * DVector::from_iterator(self.caps.0.len(), self.caps.0.iter().map(|&e| v[e]));
        for (k, &e) in self.caps.0.iter().enumerate() {
            x[e] = q[k];
        }
        let il = DVector::from_iterator(
            self.inds.0.len(),
            self.inds.0.iter().map(|&e| y[self.ind_pos[e].unwrap_or(0)]),
        );
        let phi = &self.inds.1 * il;
        for (k, &e) in self.inds.0.iter().enumerate() {
            x[e] = phi[k];
        }
        for (e, kind) in self.kinds.iter().enumerate() {
            if *kind == ElementKind::VoltageSource {
                x[e] = self.vsrc_pos[e].map_or(0.0, |p| y[p]);
            }
        }
        x
    }
}

#[derive(Debug, Clone)]
pub struct MnaTrajectory {
    pub times: Vec<f64>,
    pub y: Vec<Vec<f64>>,
    /// Edge states in CpH convention.
    pub x: Vec<Vec<f64>>,
}

/// Integrates the MNA model from a consistent state obtained by projecting a
/// seeded random guess.
#[allow(clippy::too_many_arguments)]
pub fn mna_oracle(
    circuit: &Circuit,
    coupling: Option<&CouplingBlocks>,
    ground: usize,
    t0: f64,
    t1: f64,
    samples: &[f64],
    opts: &Options,
    seed: u64,
) -> Result<MnaTrajectory, CphError> {
    let sys = mna_system(circuit, coupling, ground)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let guess: Vec<f64> = (0..sys.dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let y0 = sys.consistent_initial(t0, &guess)?;
    let sol = ode::integrate(|t, y, dy| sys.rhs(t, y, dy), t0, t1, &y0, samples, opts, |_| {})?;
    let x = sol.samples.iter().map(|y| sys.edge_states(y)).collect();
    Ok(MnaTrajectory {
        times: samples.to_vec(),
        y: sol.samples,
        x,
    })
}

/// Trajectories smaller than this are treated as zero when scaling errors.
pub const ERROR_FLOOR: f64 = 1e-6;

/// `max |a - b| / max(max |b|, ERROR_FLOOR)` over all samples and components.
pub fn relative_error(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    let diff = a
        .iter()
        .zip(b)
        .flat_map(|(p, q)| p.iter().zip(q).map(|(x, y)| (x - y).abs()))
        .fold(0.0, f64::max);
    let scale = b.iter().flatten().map(|v| v.abs()).fold(ERROR_FLOOR, f64::max);
    diff / scale
}
