//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use std::collections::{HashMap, VecDeque};

use cph_core::circgen::{generate, GenConfig};
use cph_core::cph::{build_dae, CouplingBlocks, CphDae};
use cph_core::ddreduce::{integrate, reduce_to_ode, select_dummies, ExplicitOde};
use cph_core::mna::{mna_oracle, relative_error};
use cph_core::netlist::Circuit;
use cph_core::ode::{linspace, Options};
use cph_core::sigma::analyze_structure;
use cph_core::waveform::Waveform;

pub fn random_circuit(seed: u64) -> Circuit {
    generate(&GenConfig::default().with_seed(seed)).expect("generator succeeds")
}

pub fn reduce(c: &Circuit, coupling: Option<&CouplingBlocks>) -> ExplicitOde {
    let d = build_dae(c, coupling).unwrap();
    let st = analyze_structure(&d).unwrap();
    let sel = select_dummies(&d, &st).unwrap();
    reduce_to_ode(&d, &st, &sel).unwrap()
}

/// Largest relative state error between the reduced CpH model and MNA,
/// both started from the same consistent point.
pub fn cph_vs_mna(
    c: &Circuit,
    coupling: Option<&CouplingBlocks>,
    ground: usize,
    t1: f64,
    samples: usize,
    seed: u64,
) -> f64 {
    let ode = reduce(c, coupling);
    let ts = linspace(0.0, t1, samples);
    let opts = Options::default();
    let mna = mna_oracle(c, coupling, ground, 0.0, t1, &ts, &opts, seed).unwrap();
    let s0 = ode.project(&mna.x[0]);
    let tr = integrate(&ode, 0.0, t1, &s0, &ts, &opts).unwrap();
    relative_error(&tr.x, &mna.x)
}

/// Zero-based `(from, to)` of every edge.
pub fn ends(c: &Circuit) -> Vec<(usize, usize)> {
    c.elements().iter().map(|e| (e.from - 1, e.to - 1)).collect()
}

fn connected(n: usize, edges: &[(usize, usize)]) -> bool {
    let mut adj = vec![Vec::new(); n];
    for &(a, b) in edges {
        adj[a].push(b);
        adj[b].push(a);
    }
    let mut seen = vec![false; n];
    let mut stack = vec![0];
    seen[0] = true;
    while let Some(u) = stack.pop() {
        for &w in &adj[u] {
            if !seen[w] {
                seen[w] = true;
                stack.push(w);
            }
        }
    }
    seen.into_iter().all(|s| s)
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::new();
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    rec(0, n, k, &mut cur, &mut out);
    out
}

/// Every spanning tree, as a sorted edge list, by subset enumeration.
pub fn spanning_trees(c: &Circuit) -> Vec<Vec<usize>> {
    let n = c.node_count();
    let e = ends(c);
    combinations(e.len(), n - 1)
        .into_iter()
        .filter(|s| connected(n, &s.iter().map(|&k| e[k]).collect::<Vec<_>>()))
        .collect()
}

/// Signed tree path from `from` to `to`: `(twig, +1)` when traversed start to end.
pub fn tree_path(c: &Circuit, tree: &[usize], from: usize, to: usize) -> Vec<(usize, i64)> {
    let e = ends(c);
    let mut adj: HashMap<usize, Vec<(usize, usize, i64)>> = HashMap::new();
    for &k in tree {
        let (a, b) = e[k];
        adj.entry(a).or_default().push((b, k, 1));
        adj.entry(b).or_default().push((a, k, -1));
    }
    let mut prev: HashMap<usize, (usize, usize, i64)> = HashMap::new();
    let mut queue = VecDeque::from([from]);
    let mut seen = vec![false; c.node_count()];
    seen[from] = true;
    while let Some(u) = queue.pop_front() {
        for &(w, k, s) in adj.get(&u).map(Vec::as_slice).unwrap_or(&[]) {
            if !seen[w] {
                seen[w] = true;
                prev.insert(w, (u, k, s));
                queue.push_back(w);
            }
        }
    }
    let mut path = Vec::new();
    let mut u = to;
    while u != from {
        let (p, k, s) = prev[&u];
        path.push((k, s));
        u = p;
    }
    path.reverse();
    path
}

/// `F[link][twig]` from tree paths: the link closes the path from its end back
/// to its start, so a twig traversed forward on the start-to-end path gets `-1`.
pub fn f_by_paths(c: &Circuit, tree: &[usize], cotree: &[usize]) -> Vec<Vec<i64>> {
    let e = ends(c);
    cotree
        .iter()
        .map(|&l| {
            let mut row = vec![0; tree.len()];
            for (k, s) in tree_path(c, tree, e[l].0, e[l].1) {
                let j = tree.iter().position(|&t| t == k).unwrap();
                row[j] = -s;
            }
            row
        })
        .collect()
}

/// All maximum-value transversals of `sigma` by depth-first search with a
/// row-maximum bound.
pub fn max_transversals(sigma: &[Vec<Option<i32>>]) -> (i64, Vec<Vec<usize>>) {
    let n = sigma.len();
    let row_max: Vec<i64> = sigma
        .iter()
        .map(|r| r.iter().flatten().map(|&v| i64::from(v)).max().unwrap_or(i64::MIN / 4))
        .collect();
    let mut suffix = vec![0i64; n + 1];
    for i in (0..n).rev() {
        suffix[i] = suffix[i + 1] + row_max[i];
    }
    struct Search<'a> {
        sigma: &'a [Vec<Option<i32>>],
        suffix: Vec<i64>,
        best: i64,
        found: Vec<Vec<usize>>,
        cur: Vec<usize>,
        used: Vec<bool>,
    }
    fn go(s: &mut Search, i: usize, value: i64) {
        let n = s.sigma.len();
        if i == n {
            if value > s.best {
                s.best = value;
                s.found.clear();
            }
            if value == s.best {
                s.found.push(s.cur.clone());
            }
            return;
        }
        if value + s.suffix[i] < s.best {
            return;
        }
        for j in 0..n {
            if let (false, Some(v)) = (s.used[j], s.sigma[i][j]) {
                s.used[j] = true;
                s.cur.push(j);
                go(s, i + 1, value + i64::from(v));
                s.cur.pop();
                s.used[j] = false;
            }
        }
    }
    let mut s = Search {
        sigma,
        suffix,
        best: i64::MIN,
        found: Vec::new(),
        cur: Vec::new(),
        used: vec![false; n],
    };
    go(&mut s, 0, 0);
    (s.best, s.found)
}

/// Smallest offsets with `d_j - c_i >= sigma_ij` and equality on `hvt`, as
/// longest paths over rows: `c_i >= c_k + sigma_{k,T(i)} - sigma_{i,T(i)}`.
pub fn offsets_by_longest_path(sigma: &[Vec<Option<i32>>], hvt: &[usize]) -> (Vec<i64>, Vec<i64>) {
    let n = sigma.len();
    let mut c = vec![0i64; n];
    for _ in 0..=n {
        let mut changed = false;
        for i in 0..n {
            let j = hvt[i];
            let own = i64::from(sigma[i][j].expect("finite on hvt"));
            for k in 0..n {
                if let Some(v) = sigma[k][j] {
                    let need = c[k] + i64::from(v) - own;
                    if need > c[i] {
                        c[i] = need;
                        changed = true;
                    }
                }
            }
        }
        if !changed {
            break;
        }
    }
    let mut d = vec![0i64; n];
    for i in 0..n {
        d[hvt[i]] = c[i] + i64::from(sigma[i][hvt[i]].unwrap());
    }
    (c, d)
}

/// Arithmetic over the subset of C++ the residual generator emits.
pub struct CodeModel {
    consts: HashMap<String, f64>,
    waves: HashMap<String, Waveform>,
    v: Vec<String>,
    i: Vec<String>,
    f: Vec<String>,
}

struct Env<'a> {
    model: &'a CodeModel,
    t: f64,
    x: &'a [f64],
    xdot: &'a [f64],
    v: Vec<f64>,
    i: Vec<f64>,
}

fn between<'a>(s: &'a str, open: &str, close: &str) -> &'a str {
    let a = s.find(open).unwrap() + open.len();
    let b = a + s[a..].find(close).unwrap();
    &s[a..b]
}

impl CodeModel {
    pub fn parse(src: &str) -> CodeModel {
        let mut m = CodeModel {
            consts: HashMap::new(),
            waves: HashMap::new(),
            v: Vec::new(),
            i: Vec::new(),
            f: Vec::new(),
        };
        for line in src.lines().map(str::trim) {
            if let Some(rest) = line.strip_prefix("const double ") {
                let (name, val) = rest.trim_end_matches(';').split_once(" = ").unwrap();
                m.consts.insert(name.to_string(), val.parse().unwrap());
            } else if let Some(rest) = line.strip_prefix("const auto ") {
                let name = rest.split_once(' ').unwrap().0;
                let body = between(rest, "{return ", ";}");
                m.waves.insert(name.to_string(), Waveform::parse(body).unwrap());
            } else if line.starts_with("v[") {
                let (vpart, ipart) = line.split_once("i[").unwrap();
                m.v.push(vpart.split_once(" = ").unwrap().1.trim().trim_end_matches(';').to_string());
                m.i.push(ipart.split_once(" = ").unwrap().1.trim().trim_end_matches(';').to_string());
            } else if line.starts_with("f[") {
                m.f.push(line.split_once(" = ").unwrap().1.trim().trim_end_matches(';').to_string());
            }
        }
        m
    }

    pub fn residual_count(&self) -> usize {
        self.f.len()
    }

    /// Evaluates `f` at `(t, x, x')`.
    pub fn residual(&self, t: f64, x: &[f64], xdot: &[f64]) -> Vec<f64> {
        let mut env = Env {
            model: self,
            t,
            x,
            xdot,
            v: Vec::new(),
            i: Vec::new(),
        };
        env.v = self.v.iter().map(|e| env.eval(e)).collect();
        env.i = self.i.iter().map(|e| env.eval(e)).collect();
        self.f.iter().map(|e| env.eval(e)).collect()
    }
}

impl Env<'_> {
    fn eval(&self, src: &str) -> f64 {
        let toks: Vec<char> = src.chars().filter(|c| !c.is_whitespace()).collect();
        let mut pos = 0;
        let v = self.sum(&toks, &mut pos);
        assert_eq!(pos, toks.len(), "trailing input in '{src}'");
        v
    }

    fn sum(&self, t: &[char], p: &mut usize) -> f64 {
        let mut acc = match t.get(*p) {
            Some('-') => {
                *p += 1;
                -self.product(t, p)
            }
            _ => self.product(t, p),
        };
        while let Some(&op) = t.get(*p) {
            if op != '+' && op != '-' {
                break;
            }
            *p += 1;
            let r = self.product(t, p);
            acc += if op == '+' { r } else { -r };
        }
        acc
    }

    fn product(&self, t: &[char], p: &mut usize) -> f64 {
        let mut acc = self.atom(t, p);
        while let Some(&op) = t.get(*p) {
            if op != '*' && op != '/' {
                break;
            }
            *p += 1;
            let r = self.atom(t, p);
            acc = if op == '*' { acc * r } else { acc / r };
        }
        acc
    }

    fn index(t: &[char], p: &mut usize) -> usize {
        assert_eq!(t[*p], '[');
        *p += 1;
        let start = *p;
        while t[*p].is_ascii_digit() {
            *p += 1;
        }
        let k = t[start..*p].iter().collect::<String>().parse().unwrap();
        assert_eq!(t[*p], ']');
        *p += 1;
        k
    }

    fn atom(&self, t: &[char], p: &mut usize) -> f64 {
        let start = *p;
        while *p < t.len() && (t[*p].is_ascii_alphanumeric() || t[*p] == '_' || t[*p] == '.') {
            *p += 1;
        }
        let word: String = t[start..*p].iter().collect();
        match word.as_str() {
            "x" => self.x[Self::index(t, p)],
            "v" => self.v[Self::index(t, p)],
            "i" => self.i[Self::index(t, p)],
            "Diff" => {
                // Diff(x[k],1)
                assert_eq!(t[*p..*p + 2], ['(', 'x']);
                *p += 2;
                let k = Self::index(t, p);
                assert_eq!(t[*p..*p + 3], [',', '1', ')']);
                *p += 3;
                self.xdot[k]
            }
            w if self.model.waves.contains_key(w) => {
                assert_eq!(t[*p..*p + 3], ['(', 't', ')']);
                *p += 3;
                self.model.waves[w].eval(self.t)
            }
            w if self.model.consts.contains_key(w) => self.model.consts[w],
            w => w.parse().unwrap_or_else(|_| panic!("unknown token '{w}'")),
        }
    }
}

/// Residual owner convention of the emitted code: tree rows are negated.
pub fn emitted_sign(dae: &CphDae, edge: usize) -> f64 {
    if dae.loop_cutset().twigs().contains(&edge) {
        -1.0
    } else {
        1.0
    }
}
