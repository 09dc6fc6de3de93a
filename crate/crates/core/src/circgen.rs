//! Random connected circuits satisfying the no-V-loop and no-I-cutset
//! conditions, for property testing.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cph::{CouplingBlocks, LabeledBlock};
use crate::error::CphError;
use crate::graph::{check_a1_a2, incidence_matrix, UnionFind};
use crate::netlist::{Circuit, Element, ElementKind, Param};
use crate::waveform::Waveform;

/// Source waveforms drawn at random.
pub const WAVEFORM_GALLERY: [&str; 7] = [
    "cos(t)",
    "sin(t)",
    "2*sin(3*t)",
    "0.5*cos(2*t)",
    "1",
    "sin(t)*cos(2*t)",
    "t*cos(t)",
];

/// Relative weights of `R, C, L, V, I`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KindWeights {
    pub r: f64,
    pub c: f64,
    pub l: f64,
    pub v: f64,
    pub i: f64,
}

impl Default for KindWeights {
    fn default() -> Self {
        KindWeights {
            r: 3.0,
            c: 3.0,
            l: 3.0,
            v: 1.0,
            i: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    /// Inclusive node-count range.
    pub nodes: (usize, usize),
    /// Inclusive edge-count range.
    pub edges: (usize, usize),
    pub weights: KindWeights,
    /// Element values are uniform in this open interval.
    pub values: (f64, f64),
    pub seed: u64,
    pub max_retries: usize,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            nodes: (3, 6),
            edges: (4, 12),
            weights: KindWeights::default(),
            values: (0.2, 1.0),
            seed: 0,
            max_retries: 100,
        }
    }
}

impl GenConfig {
    pub fn with_seed(self, seed: u64) -> Self {
        GenConfig { seed, ..self }
    }

    fn validate(&self) -> Result<(), CphError> {
        let (n0, n1) = self.nodes;
        let (e0, e1) = self.edges;
        let w = &self.weights;
        let ws = [w.r, w.c, w.l, w.v, w.i];
        if n0 < 2 || n0 > n1 || e0 > e1 || e1 < n0 - 1 {
            return Err(CphError::Config(format!(
                "invalid ranges: nodes {n0}..={n1}, edges {e0}..={e1}"
            )));
        }
        if ws.iter().any(|x| !x.is_finite() || *x < 0.0) || ws.iter().sum::<f64>() <= 0.0 {
            return Err(CphError::Config("kind weights must be nonnegative, not all zero".into()));
        }
        let (lo, hi) = self.values;
        if !(lo > 0.0 && hi > lo && hi.is_finite()) {
            return Err(CphError::Config(format!("invalid value range ({lo}, {hi})")));
        }
        Ok(())
    }
}

fn pick_kind(rng: &mut ChaCha8Rng, w: &KindWeights, allow_sources: bool) -> ElementKind {
    let mut table = vec![
        (ElementKind::Resistor, w.r),
        (ElementKind::Capacitor, w.c),
        (ElementKind::Inductor, w.l),
    ];
    if allow_sources {
        table.push((ElementKind::VoltageSource, w.v));
        table.push((ElementKind::CurrentSource, w.i));
    }
    let total: f64 = table.iter().map(|(_, x)| x).sum();
    if total <= 0.0 {
        return ElementKind::Resistor;
    }
    let mut u = rng.gen_range(0.0..total);
    for (k, x) in &table {
        if u < *x {
            return *k;
        }
        u -= x;
    }
    table.last().map_or(ElementKind::Resistor, |t| t.0)
}

/// Makes the kinds well-posed: a V edge closing a V-only cycle and an I edge
/// joining two components of the non-I subgraph are turned into R, C or L.
fn repair(
    rng: &mut ChaCha8Rng,
    n: usize,
    ends: &[(usize, usize)],
    kinds: &mut [ElementKind],
    w: &KindWeights,
) {
    let mut uf = UnionFind::new(n);
    for (e, &(a, b)) in ends.iter().enumerate() {
        if kinds[e] == ElementKind::VoltageSource && !uf.union(a, b) {
            kinds[e] = pick_kind(rng, w, false);
        }
    }
    let mut uf = UnionFind::new(n);
    for (e, &(a, b)) in ends.iter().enumerate() {
        if kinds[e] != ElementKind::CurrentSource {
            uf.union(a, b);
        }
    }
    let mut order: Vec<usize> = (0..ends.len())
        .filter(|&e| kinds[e] == ElementKind::CurrentSource)
        .collect();
    order.shuffle(rng);
    for e in order {
        let (a, b) = ends[e];
        if uf.union(a, b) {
            kinds[e] = pick_kind(rng, w, false);
        }
    }
}

fn attempt(rng: &mut ChaCha8Rng, cfg: &GenConfig) -> Result<Circuit, CphError> {
    let n = rng.gen_range(cfg.nodes.0..=cfg.nodes.1);
    let m = rng.gen_range(cfg.edges.0.max(n - 1)..=cfg.edges.1.max(n - 1));
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(rng);
    let mut ends = Vec::with_capacity(m);
    for k in 1..n {
        let parent = perm[rng.gen_range(0..k)];
        ends.push((parent, perm[k]));
    }
    while ends.len() < m {
        let a = rng.gen_range(0..n);
        let b = rng.gen_range(0..n - 1);
        ends.push((a, if b >= a { b + 1 } else { b }));
    }
    ends.shuffle(rng);
    for e in ends.iter_mut() {
        if rng.gen_bool(0.5) {
            *e = (e.1, e.0);
        }
    }
    let mut kinds: Vec<ElementKind> = (0..m).map(|_| pick_kind(rng, &cfg.weights, true)).collect();
    repair(rng, n, &ends, &mut kinds, &cfg.weights);

    let elements = ends
        .iter()
        .zip(&kinds)
        .enumerate()
        .map(|(k, (&(a, b), &kind))| {
            let param = if kind.is_source() {
                let text = WAVEFORM_GALLERY[rng.gen_range(0..WAVEFORM_GALLERY.len())];
                Param::Source(Waveform::parse(text).expect("gallery parses"))
            } else {
                Param::Value(rng.gen_range(cfg.values.0..cfg.values.1))
            };
            Element {
                label: format!("{}{}", kind.letter(), k + 1),
                kind,
                from: a + 1,
                to: b + 1,
                param,
            }
        })
        .collect();
    Ok(Circuit::new(elements)?)
}

/// A random well-posed circuit, deterministic in `cfg.seed`.
pub fn generate(cfg: &GenConfig) -> Result<Circuit, CphError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    for _ in 0..cfg.max_retries.max(1) {
        let Ok(c) = attempt(&mut rng, cfg) else {
            continue;
        };
        if check_a1_a2(&incidence_matrix(&c), &c.kinds()).holds() {
            return Ok(c);
        }
    }
    Err(CphError::Config(format!(
        "no well-posed circuit after {} attempts",
        cfg.max_retries
    )))
}

/// Random symmetric positive definite matrix with entries of order one.
pub fn random_spd(rng: &mut impl Rng, k: usize) -> DMatrix<f64> {
    let a = DMatrix::from_fn(k, k, |_, _| rng.gen_range(-1.0..1.0));
    let ata = a.transpose() * &a;
    let mut m = (&ata + ata.transpose()) * 0.5;
    for i in 0..k {
        m[(i, i)] += 0.1 + rng.gen_range(0.0..0.5);
    }
    m
}

/// Dense SPD blocks over every capacitor, inductor and resistor of `c`.
pub fn random_coupling(c: &Circuit, seed: u64) -> CouplingBlocks {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut block = |kind: ElementKind| {
        let rows: Vec<String> = c
            .elements()
            .iter()
            .filter(|e| e.kind == kind)
            .map(|e| e.label.clone())
            .collect();
        if rows.len() < 2 {
            return None;
        }
        let m = random_spd(&mut rng, rows.len());
        let matrix = (0..rows.len())
            .map(|i| (0..rows.len()).map(|j| m[(i, j)]).collect())
            .collect();
        Some(LabeledBlock { rows, matrix })
    };
    CouplingBlocks {
        capacitance: block(ElementKind::Capacitor),
        inductance: block(ElementKind::Inductor),
        conductance: block(ElementKind::Resistor),
    }
}
