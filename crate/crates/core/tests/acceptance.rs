//! One PASS/FAIL line per acceptance criterion. Run with `--nocapture` to see
//! the lines when everything passes.

mod common;

use std::time::Instant;

use cph_core::batch::map_seeds;
use cph_core::circgen::{generate as gen_circuit, random_spd, GenConfig, KindWeights};
use cph_core::codegen::generate;
use cph_core::cph::{build_dae, CphDae};
use cph_core::ddreduce::{integrate, integrate_observed, power_balance};
use cph_core::graph::{incidence_matrix, optimal_tree};
use cph_core::loopcut::{block_view, compute_f, partition_edges, Group};
use cph_core::netlist::{parse_netlist, Circuit, P8BY5};
use cph_core::ode::{linspace, Options};
use cph_core::sigma::{analyze_structure, block_ranges, bordered, build_display_sigma, classify_index};
use cph_core::theorem::{bridge_inductors, closed_form_offsets};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{
    cph_vs_mna, emitted_sign, max_transversals, offsets_by_longest_path, random_circuit, reduce, CodeModel,
};

const SAMPLES: u64 = 500;

struct Ledger {
    failed: Vec<String>,
}

impl Ledger {
    fn record(&mut self, name: &str, ok: bool, detail: String, started: Instant) {
        let tag = if ok { "PASS" } else { "FAIL" };
        println!("{tag} {name}: {detail} [{:.2}s]", started.elapsed().as_secs_f64());
        if !ok {
            self.failed.push(name.to_string());
        }
    }
}

const LISTING: &str = "\
template <typename T>
void fcn(T t, const T *x, T *f, void *param) {
  // Function to specify circuit P8by5 for DAETS
  const double R1 = 0.8666;
  const auto V2 = [](T t) -> T {return cos(t);};
  const double C3 = 0.50689;
  const double L4 = 0.91901;
  const double R5 = 0.58256;
  const double C6 = 0.48617;
  const double L7 = 0.57219;
  const auto I8 = [](T t) -> T {return 2*sin(3*t);};
  // Port variables
  T v[8], i[8];
  v[0] = x[0];            i[0] = x[0]/R1;
  v[1] = V2(t);           i[1] = x[1];
  v[2] = x[2]/C3;         i[2] = Diff(x[2],1);
  v[3] = Diff(x[3],1);    i[3] = x[3]/L4;
  v[4] = x[4];            i[4] = x[4]/R5;
  v[5] = x[5]/C6;         i[5] = Diff(x[5],1);
  v[6] = Diff(x[6],1);    i[6] = x[6]/L7;
  v[7] = x[7];            i[7] = I8(t);
  // Dirac structure, CpH model, tree={0,1,2,3}, cotree={4,5,6,7}
  f[0] = -i[0]+i[4]-i[7];
  f[1] = -i[1]-i[4]+i[5];
  f[2] = -i[2]-i[5]+i[6];
  f[3] = -i[3]-i[6]+i[7];
  f[4] =  v[4]+v[0]-v[1];
  f[5] =  v[5]+v[1]-v[2];
  f[6] =  v[6]+v[2]-v[3];
  f[7] =  v[7]-v[0]+v[3];
}
";

fn goldens(l: &mut Ledger) {
    let t0 = Instant::now();
    let c = parse_netlist(P8BY5).unwrap();
    let a = incidence_matrix(&c);
    let td = optimal_tree(&a, &c.kinds()).unwrap();
    let f = compute_f(&a, &td).unwrap();
    let p = partition_edges(&td, &c.kinds(), &c.labels()).unwrap();
    let d = build_dae(&c, None).unwrap();
    let st = analyze_structure(&d).unwrap();
    let sigma = build_display_sigma(&d);
    let n = None;
    let z = Some(0);
    let o = Some(1);

    let a_ok = a.matrix().to_rows()
        == vec![
            vec![1, -1, 0, 0, 0],
            vec![1, 0, -1, 0, 0],
            vec![1, 0, 0, -1, 0],
            vec![1, 0, 0, 0, -1],
            vec![0, 1, -1, 0, 0],
            vec![0, 0, 1, -1, 0],
            vec![0, 0, 0, 1, -1],
            vec![0, -1, 0, 0, 1],
        ];
    let f_ok = f.matrix().to_rows() == vec![vec![1, -1, 0, 0], vec![0, 1, -1, 0], vec![0, 0, 1, -1], vec![-1, 0, 0, 1]]
        && f.link_labels() == ["R5", "C6", "L7", "I8"];
    let bf = block_view(&f, &p).unwrap().assembled().to_rows();
    let bf_ok = bf == vec![vec![1, -1, 0, 0], vec![-1, 0, 1, 0], vec![0, 1, 0, -1], vec![0, 0, -1, 1]];
    let parts: Vec<Vec<String>> = Group::ALL
        .iter()
        .map(|&g| p.edges(g).iter().map(|&e| p.role_label(e)).collect())
        .collect();
    let part_ok = parts == [["c3"], ["l4"], ["v2"], ["r1"], ["L7"], ["C6"], ["I8"], ["R5"]].map(|s| vec![s[0].to_string()]);
    let sigma_ok = sigma.col_labels == ["q_C6", "q_c3", "phi_l4", "phi_L7", "v_r1", "v_R5", "i_v2", "v_I8"]
        && sigma.entries
            == vec![
                vec![z, z, n, n, n, n, n, n],
                vec![o, o, n, z, n, n, n, n],
                vec![n, n, z, z, n, n, n, n],
                vec![n, z, o, o, n, n, n, n],
                vec![n, n, n, n, z, z, n, n],
                vec![n, n, n, n, z, z, n, n],
                vec![o, n, n, n, n, z, z, n],
                vec![n, n, o, n, z, n, n, z],
            ];
    let off_ok = st.offsets.c[..6] == [1, 0, 1, 0, 0, 0] && st.offsets.d[..6] == [1, 1, 1, 1, 0, 0];
    let ok = a_ok && f_ok && bf_ok && part_ok && sigma_ok && off_ok && st.dof == 2 && st.index == 2;
    l.record(
        "1 running-example goldens",
        ok,
        format!(
            "A {a_ok}, F {f_ok}, block F {bf_ok}, partition {part_ok}, sigma {sigma_ok}, offsets {off_ok}, DOF {}, index {}",
            st.dof, st.index
        ),
        t0,
    );
}

fn block_of(ranges: &[(usize, usize)], k: usize) -> usize {
    ranges.iter().position(|&(s, n)| k >= s && k < s + n).unwrap()
}

struct SampleResult {
    edges: usize,
    l1: Option<bool>,
    l3: bool,
    l4: bool,
    bridge: bool,
    theorem: bool,
    ratio: f64,
    index_agrees: bool,
    index: u8,
}

fn sample(seed: u64) -> SampleResult {
    let c = random_circuit(seed);
    let d = build_dae(&c, None).unwrap();
    let st = analyze_structure(&d).unwrap();
    let p = d.partition();
    let ranges = block_ranges(p);
    let l1 = (c.edge_count() <= 9).then(|| {
        let (value, all) = max_transversals(&st.sigma.entries);
        value == st.hvt.value
            && all
                .iter()
                .all(|t| t.iter().enumerate().all(|(i, &j)| block_of(&ranges, i) == block_of(&ranges, j)))
    });
    let product: f64 = st.report.block_dets.iter().product();
    let l3 = st.report.det.abs() > 0.0 && (st.report.det - product).abs() <= 1e-8 * st.report.det.abs();
    let (c_ref, d_ref) = offsets_by_longest_path(&st.sigma.entries, &st.hvt.cols);
    let expected = (p.size(Group::TreeC) + p.size(Group::LinkL)) as i64;
    let theorem = st.hvt.value == expected
        && st.offsets.c == c_ref
        && st.offsets.d == d_ref
        && st.offsets.is_valid(&st.sigma)
        && st.report.ratio > 1e-10;
    SampleResult {
        edges: c.edge_count(),
        l1,
        l3,
        l4: st.offsets == closed_form_offsets(p),
        bridge: !bridge_inductors(&d).is_empty(),
        theorem,
        ratio: st.report.ratio,
        index_agrees: classify_index(p) == st.index,
        index: st.index,
    }
}

fn random_circuit_suite(l: &mut Ledger) {
    let t0 = Instant::now();
    let seeds: Vec<u64> = (0..SAMPLES).collect();
    let rs = map_seeds(&seeds, sample);
    let max_m = rs.iter().map(|r| r.edges).max().unwrap();
    l.record(
        "2 sample size",
        rs.len() == SAMPLES as usize && max_m <= 12,
        format!("{} circuits, max m = {max_m}", rs.len()),
        t0,
    );

    let l1: Vec<bool> = rs.iter().filter_map(|r| r.l1).collect();
    let l1_ok = !l1.is_empty() && l1.iter().all(|&b| b);
    l.record(
        "2 L1 maximum transversals block-diagonal",
        l1_ok,
        format!("{}/{} circuits with m <= 9 enumerated", l1.iter().filter(|&&b| b).count(), l1.len()),
        t0,
    );

    let t1 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut good = 0;
    for _ in 0..1000 {
        let n1 = rng.gen_range(1..=4);
        let n2 = rng.gen_range(0..=4);
        let m = random_spd(&mut rng, n1 + n2);
        let n = DMatrix::from_fn(n2, n1, |_, _| rng.gen_range(-3.0..3.0));
        let pm = bordered(&m, &n);
        let scale = m.norm().powi(n1 as i32).max(1.0);
        if pm.determinant().abs() > 1e-12 * scale {
            good += 1;
        }
    }
    l.record("2 L2 bordered P nonsingular", good == 1000, format!("{good}/1000"), t1);

    let l3 = rs.iter().filter(|r| r.l3).count();
    l.record(
        "2 L3 det J = det J_C det J_L det J_G (1e-8)",
        l3 == rs.len(),
        format!("{l3}/{}", rs.len()),
        t0,
    );

    let l4 = rs.iter().filter(|r| r.l4).count();
    let l4_bridge = rs.iter().filter(|r| !r.l4 && r.bridge).count();
    l.record(
        "2 L4 canonical offsets equal closed form",
        l4 == rs.len(),
        format!(
            "{l4}/{}; {l4_bridge} of {} mismatches have a bridge tree inductor",
            rs.len(),
            rs.len() - l4
        ),
        t0,
    );

    let th = rs.iter().filter(|r| r.theorem).count();
    let min_ratio = rs.iter().map(|r| r.ratio).fold(f64::INFINITY, f64::min);
    l.record(
        "3 SA-amenable (HVT, canonical offsets, ratio > 1e-10)",
        th == rs.len(),
        format!("{th}/{}, smallest ratio {min_ratio:.3e}", rs.len()),
        t0,
    );

    let agree = rs.iter().filter(|r| r.index_agrees).count();
    let agree_bridge = rs.iter().filter(|r| !r.index_agrees && r.bridge).count();
    let mut hist = [0usize; 3];
    for r in &rs {
        hist[r.index as usize] += 1;
    }
    l.record(
        "4 index classifier agrees with max c + [d = 0]",
        agree == rs.len(),
        format!(
            "{agree}/{}; {agree_bridge} of {} disagreements have a bridge tree inductor; index counts {hist:?}",
            rs.len(),
            rs.len() - agree
        ),
        t0,
    );

    let t2 = Instant::now();
    let witnesses = [("C1 1 2 1\nL2 1 2 1", 0), ("C1 1 2 0.5\nR2 1 2 2", 1), (P8BY5, 2)];
    let got: Vec<(u8, u8)> = witnesses
        .iter()
        .map(|(text, _)| {
            let d = build_dae(&parse_netlist(text).unwrap(), None).unwrap();
            (analyze_structure(&d).unwrap().index, classify_index(d.partition()))
        })
        .collect();
    let ok = witnesses.iter().zip(&got).all(|((_, want), &(s, c))| s == *want && c == *want);
    l.record("4 witnesses for index 0, 1, 2", ok, format!("(structural, classifier) = {got:?}"), t2);
}

fn simulation(l: &mut Ledger) {
    let t0 = Instant::now();
    let ex = parse_netlist(P8BY5).unwrap();
    let mut worst = cph_vs_mna(&ex, None, 1, 10.0, 101, 11);
    let seeds: Vec<u64> = (0..50).collect();
    let errs = map_seeds(&seeds, |s| cph_vs_mna(&random_circuit(s), None, 1, 10.0, 101, s));
    let (arg, w) = errs
        .iter()
        .enumerate()
        .fold((0, 0.0f64), |acc, (k, &e)| if e > acc.1 { (k, e) } else { acc });
    worst = worst.max(w);
    l.record(
        "5 CpH vs MNA on [0, 10] at tol 1e-8",
        worst < 1e-6,
        format!("max relative error {worst:.3e} (random worst: seed {arg}, {w:.3e})"),
        t0,
    );
}

fn lossless(seed: u64) -> Circuit {
    let cfg = GenConfig {
        weights: KindWeights {
            r: 0.0,
            c: 1.0,
            l: 1.0,
            v: 0.0,
            i: 0.0,
        },
        ..GenConfig::default().with_seed(seed)
    };
    gen_circuit(&cfg).unwrap()
}

fn physics(l: &mut Ledger) {
    let t0 = Instant::now();
    let opts = Options {
        atol: 1e-10,
        rtol: 1e-10,
        ..Options::default()
    };
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for seed in 0..40 {
        let ode = reduce(&lossless(seed), None);
        if ode.dim() == 0 {
            continue;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s0: Vec<f64> = (0..ode.dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let tr = integrate(&ode, 0.0, 100.0, &s0, &linspace(0.0, 100.0, 401), &opts).unwrap();
        let h0 = tr.energy[0];
        let drift = tr.energy.iter().map(|h| (h - h0).abs()).fold(0.0, f64::max);
        worst = worst.max(drift / h0);
        count += 1;
    }
    l.record(
        "6 lossless H conserved on [0, 100] (1e-6)",
        count > 0 && worst <= 1e-6,
        format!("{count} circuits, worst relative drift {worst:.3e}"),
        t0,
    );

    let t1 = Instant::now();
    let mut worst: f64 = 0.0;
    let mut steps = 0;
    for seed in 0..60 {
        let ode = reduce(&random_circuit(seed), None);
        let s0 = vec![0.5; ode.dim()];
        integrate_observed(&ode, 0.0, 5.0, &s0, &[5.0], &Options::default(), |step| {
            let snap = ode.reconstruct(step.t, step.y).unwrap();
            let pb = power_balance(ode.dae(), &snap);
            worst = worst.max(pb.residual().abs() / pb.scale().max(1.0));
            steps += 1;
        })
        .unwrap();
    }
    l.record(
        "6 power balance at every accepted step (1e-10)",
        worst < 1e-10,
        format!("{steps} steps over 60 circuits, worst {worst:.3e}"),
        t1,
    );
}

fn round_trip_error(text: &str, dae: &CphDae, seed: u64) -> f64 {
    let model = CodeModel::parse(text);
    let m = dae.edge_count();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let t = rng.gen_range(0.0..10.0);
        let x: Vec<f64> = (0..m).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let xdot: Vec<f64> = (0..m).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let emitted = model.residual(t, &x, &xdot);
        let native = dae.residual(t, &x, &xdot).unwrap();
        for e in 0..m {
            let want = emitted_sign(dae, e) * native[e];
            worst = worst.max((emitted[e] - want).abs() / (1.0 + want.abs()));
        }
    }
    worst
}

fn codegen(l: &mut Ledger) {
    let t0 = Instant::now();
    let d = build_dae(&parse_netlist(P8BY5).unwrap(), None).unwrap();
    let text = generate(&d, "P8by5").unwrap();
    l.record("7 codegen listing for the running example", text == LISTING, "exact text match".into(), t0);

    let mut worst = round_trip_error(&text, &d, 1);
    for seed in 0..100 {
        let d = build_dae(&random_circuit(seed), None).unwrap();
        worst = worst.max(round_trip_error(&generate(&d, "r").unwrap(), &d, seed));
    }
    l.record(
        "7 codegen round trip (1e-12)",
        worst <= 1e-12,
        format!("101 circuits, worst {worst:.3e}"),
        t0,
    );
}

fn closed_forms(l: &mut Ledger) {
    let t0 = Instant::now();
    let (c, r) = (0.5, 2.0);
    let ode = reduce(&parse_netlist(&format!("C1 1 2 {c}\nR2 1 2 {r}")).unwrap(), None);
    let ts = linspace(0.0, 5.0, 51);
    let tr = integrate(&ode, 0.0, 5.0, &[1.0], &ts, &Options::default()).unwrap();
    let rc = ts
        .iter()
        .zip(&tr.x)
        .map(|(t, x)| (x[0] - (-t / (r * c)).exp()).abs())
        .fold(0.0, f64::max);

    let (c, ind): (f64, f64) = (0.5, 0.125);
    let w = 1.0 / (ind * c).sqrt();
    let ode = reduce(&parse_netlist(&format!("C1 1 2 {c}\nL2 1 2 {ind}")).unwrap(), None);
    let ts = linspace(0.0, 10.0, 201);
    let tr = integrate(&ode, 0.0, 10.0, &ode.project(&[1.0, 0.0]), &ts, &Options::default()).unwrap();
    let lc = ts
        .iter()
        .zip(&tr.x)
        .map(|(t, x)| (x[0] - (w * t).cos()).abs())
        .fold(0.0, f64::max);
    l.record(
        "8 RC decay and LC frequency",
        rc < 1e-7 && lc < 1e-6,
        format!("RC error {rc:.3e}, LC error {lc:.3e} at w = {w}"),
        t0,
    );
}

#[test]
fn acceptance_criteria() {
    let mut l = Ledger { failed: Vec::new() };
    goldens(&mut l);
    random_circuit_suite(&mut l);
    simulation(&mut l);
    physics(&mut l);
    codegen(&mut l);
    closed_forms(&mut l);
    assert!(l.failed.is_empty(), "failed criteria: {:?}", l.failed);
}
