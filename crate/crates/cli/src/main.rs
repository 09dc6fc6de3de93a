//! `cph`: command-line front end for compact port-Hamiltonian circuit analysis.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use cph_core::analysis::analyze;
use cph_core::batch::theorem_batch;
use cph_core::circgen::GenConfig;
use cph_core::codegen;
use cph_core::cph::{build_dae, CouplingBlocks};
use cph_core::ddreduce::{integrate, reduce_to_ode, select_dummies};
use cph_core::graph::{check_a1_a2, incidence_matrix, optimal_tree};
use cph_core::loopcut::{compute_f, partition_edges, Group};
use cph_core::mna::{mna_oracle, relative_error};
use cph_core::netlist::{parse_netlist, Circuit, P8BY5};
use cph_core::ode::{linspace, Options};
use cph_core::sigma::{analyze_structure, build_display_sigma, classify_index, SignatureMatrix};

#[derive(Parser)]
#[command(name = "cph", version, about = "Compact port-Hamiltonian circuit analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Input {
    /// Netlist file
    netlist: PathBuf,
    /// JSON file with coupled C, L or G blocks
    #[arg(long)]
    coupling: Option<PathBuf>,
    #[arg(long)]
    json: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Check that there is no V-only loop and no I-only cutset
    Check(Input),
    /// Optimal tree, edge partition and loop-cutset matrix
    Tree(Input),
    /// Signature matrix with offsets
    Sigma(Input),
    /// Degrees of freedom and index
    Index(Input),
    /// The whole pipeline
    Analyze(Input),
    /// Reduce to an ODE and integrate
    Simulate {
        #[command(flatten)]
        input: Input,
        #[arg(long, default_value_t = 0.0)]
        t0: f64,
        #[arg(long, default_value_t = 10.0)]
        t1: f64,
        #[arg(long, default_value_t = 101)]
        samples: usize,
        /// Absolute and relative tolerance
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
        /// Initial reduced state, comma separated (default all ones)
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        s0: Option<Vec<f64>>,
        /// Write CSV here instead of stdout
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Also run the MNA model from the same start and report the error
        #[arg(long)]
        mna: bool,
        /// Grounded node for MNA
        #[arg(long, default_value_t = 1)]
        ground: usize,
        /// Seed for the MNA initial guess
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Emit C++ residual source
    Codegen {
        netlist: PathBuf,
        #[arg(long, default_value = "circuit")]
        name: String,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Running-example goldens, optionally the theorem on random circuits
    Selftest {
        #[arg(long)]
        random: Option<u64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        json: bool,
    },
}

/// An analysis outcome that should exit with status 1.
#[derive(Debug)]
struct Failed;

impl std::fmt::Display for Failed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("analysis failed")
    }
}

impl std::error::Error for Failed {}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.is::<Failed>() => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn load(path: &Path) -> Result<Circuit> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(parse_netlist(&text)?)
}

fn load_coupling(path: Option<&PathBuf>) -> Result<Option<CouplingBlocks>> {
    path.map(|p| {
        let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
        Ok(CouplingBlocks::from_json(&text)?)
    })
    .transpose()
}

fn print_json(v: &impl serde::Serialize) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Check(input) => check(&input),
        Command::Tree(input) => tree(&input),
        Command::Sigma(input) => sigma(&input),
        Command::Index(input) => index(&input),
        Command::Analyze(input) => analyze_cmd(&input),
        Command::Simulate {
            input,
            t0,
            t1,
            samples,
            tol,
            s0,
            csv,
            mna,
            ground,
            seed,
        } => simulate(&input, t0, t1, samples, tol, s0, csv, mna, ground, seed),
        Command::Codegen { netlist, name, output } => {
            let dae = build_dae(&load(&netlist)?, None)?;
            let text = codegen::generate(&dae, &name)?;
            match output {
                Some(p) => std::fs::write(&p, text).with_context(|| format!("writing {}", p.display()))?,
                None => print!("{text}"),
            }
            Ok(())
        }
        Command::Selftest { random, seed, json } => selftest(random, seed, json),
    }
}

fn check(input: &Input) -> Result<()> {
    let c = load(&input.netlist)?;
    let report = check_a1_a2(&incidence_matrix(&c), &c.kinds());
    if input.json {
        print_json(&report)?;
    } else {
        println!("A1 (no V-only loop):    {}", if report.a1 { "ok" } else { "violated" });
        println!("A2 (no I-only cutset):  {}", if report.a2 { "ok" } else { "violated" });
        for w in &report.witnesses {
            println!("witness {:?}: {}", w.kind, w.edges.join(" "));
        }
    }
    if report.holds() {
        Ok(())
    } else {
        Err(Failed.into())
    }
}

fn tree(input: &Input) -> Result<()> {
    let c = load(&input.netlist)?;
    let a = incidence_matrix(&c);
    let td = optimal_tree(&a, &c.kinds())?;
    let f = compute_f(&a, &td)?;
    let p = partition_edges(&td, &c.kinds(), &c.labels())?;
    let labels = c.labels();
    let names = |es: &[usize]| es.iter().map(|&e| labels[e].clone()).collect::<Vec<_>>();
    if input.json {
        let partition: serde_json::Map<_, _> = Group::ALL
            .iter()
            .map(|&g| (g.symbol().to_string(), json!(names(p.edges(g)))))
            .collect();
        return print_json(&json!({
            "tree": names(&td.tree),
            "cotree": names(&td.cotree),
            "partition": partition,
            "f": { "rows": f.link_labels(), "cols": f.twig_labels(), "matrix": f.matrix().to_rows() },
        }));
    }
    println!("tree:   {}", names(&td.tree).join(" "));
    println!("cotree: {}", names(&td.cotree).join(" "));
    for g in Group::ALL {
        println!("  {:>2}: {}", g.symbol(), names(p.edges(g)).join(" "));
    }
    println!("F (links by twigs):");
    print!("{:>6}", "");
    for t in f.twig_labels() {
        print!("{t:>6}");
    }
    println!();
    for (row, name) in f.matrix().to_rows().iter().zip(f.link_labels()) {
        print!("{name:>6}");
        for v in row {
            print!("{v:>6}");
        }
        println!();
    }
    Ok(())
}

fn print_sigma(s: &SignatureMatrix, c: &[i64], d: &[i64]) {
    let w = s.col_labels.iter().chain(&s.row_labels).map(|l| l.len()).max().unwrap_or(1) + 1;
    print!("{:>w$}", "");
    for l in &s.col_labels {
        print!("{l:>w$}");
    }
    println!("{:>4}", "c");
    for (k, row) in s.entries.iter().enumerate() {
        print!("{:>w$}", s.row_labels[k]);
        for e in row {
            match e {
                Some(v) => print!("{v:>w$}"),
                None => print!("{:>w$}", "-"),
            }
        }
        println!("{:>4}", c[k]);
    }
    print!("{:>w$}", "d");
    for v in d {
        print!("{v:>w$}");
    }
    println!();
}

fn sigma(input: &Input) -> Result<()> {
    let coupling = load_coupling(input.coupling.as_ref())?;
    let dae = build_dae(&load(&input.netlist)?, coupling.as_ref())?;
    let st = analyze_structure(&dae)?;
    if input.json {
        return print_json(&st.to_json());
    }
    let s = build_display_sigma(&dae);
    print_sigma(&s, &st.offsets.c, &st.offsets.d);
    Ok(())
}

fn index(input: &Input) -> Result<()> {
    let coupling = load_coupling(input.coupling.as_ref())?;
    let dae = build_dae(&load(&input.netlist)?, coupling.as_ref())?;
    let st = analyze_structure(&dae)?;
    let classifier = classify_index(dae.partition());
    if input.json {
        return print_json(&json!({ "dof": st.dof, "index": st.index, "classifier_index": classifier }));
    }
    println!("DOF:   {}", st.dof);
    println!("index: {}", st.index);
    if classifier != st.index {
        println!("partition formula gives {classifier}");
    }
    Ok(())
}

fn analyze_cmd(input: &Input) -> Result<()> {
    let c = load(&input.netlist)?;
    let coupling = load_coupling(input.coupling.as_ref())?;
    let a = match analyze(&c, coupling.as_ref()) {
        Ok(a) => a,
        Err(cph_core::CphError::IllPosed(wp)) => {
            if input.json {
                print_json(&json!({ "well_posedness": wp }))?;
            } else {
                println!("circuit is not well-posed");
                for w in &wp.witnesses {
                    println!("witness {:?}: {}", w.kind, w.edges.join(" "));
                }
            }
            return Err(Failed.into());
        }
        Err(e) => return Err(e.into()),
    };
    let r = &a.report;
    if input.json {
        print_json(r)?;
    } else {
        println!("nodes {}, edges {}", r.nodes, r.edges);
        println!("tree:   {}", r.tree.join(" "));
        println!("cotree: {}", r.cotree.join(" "));
        for (k, n) in &r.partition_sizes {
            print!("{k}={n} ");
        }
        println!();
        let s = build_display_sigma(&a.dae);
        print_sigma(&s, &a.structure.offsets.c, &a.structure.offsets.d);
        let b = a.structure.report.block_dets;
        println!("det J_C = {:.6e}, det J_L = {:.6e}, det J_G = {:.6e}", b[0], b[1], b[2]);
        println!("DOF {}, index {} (partition formula {})", r.dof, r.index, r.classifier_index);
        println!("SA-amenable: {}", if r.sa_amenable { "yes" } else { "no" });
    }
    if r.sa_amenable {
        Ok(())
    } else {
        Err(Failed.into())
    }
}

#[allow(clippy::too_many_arguments)]
fn simulate(
    input: &Input,
    t0: f64,
    t1: f64,
    samples: usize,
    tol: f64,
    s0: Option<Vec<f64>>,
    csv_path: Option<PathBuf>,
    with_mna: bool,
    ground: usize,
    seed: u64,
) -> Result<()> {
    if t1.is_nan() || t1 <= t0 || samples < 2 || tol.is_nan() || tol <= 0.0 {
        bail!("need t1 > t0, samples >= 2 and tol > 0");
    }
    let c = load(&input.netlist)?;
    let coupling = load_coupling(input.coupling.as_ref())?;
    let dae = build_dae(&c, coupling.as_ref())?;
    let st = analyze_structure(&dae)?;
    let sel = select_dummies(&dae, &st)?;
    let ode = reduce_to_ode(&dae, &st, &sel)?;
    let opts = Options {
        atol: tol,
        rtol: tol,
        ..Options::default()
    };
    let ts = linspace(t0, t1, samples);
    let mna = with_mna
        .then(|| mna_oracle(&c, coupling.as_ref(), ground, t0, t1, &ts, &opts, seed))
        .transpose()?;
    let s0 = match (s0, &mna) {
        (Some(s), _) => s,
        (None, Some(m)) => ode.project(&m.x[0]),
        (None, None) => vec![1.0; ode.dim()],
    };
    let tr = integrate(&ode, t0, t1, &s0, &ts, &opts)?;

    let out: Box<dyn Write> = match &csv_path {
        Some(p) => Box::new(std::fs::File::create(p).with_context(|| format!("creating {}", p.display()))?),
        None => Box::new(std::io::stdout().lock()),
    };
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["t".to_string()];
    header.extend(tr.edge_labels.iter().map(|l| format!("x_{l}")));
    header.extend(tr.edge_labels.iter().map(|l| format!("v_{l}")));
    header.extend(tr.edge_labels.iter().map(|l| format!("i_{l}")));
    header.push("H".into());
    w.write_record(&header)?;
    for k in 0..tr.times.len() {
        let mut row = vec![tr.times[k]];
        row.extend(&tr.x[k]);
        row.extend(&tr.v[k]);
        row.extend(&tr.i[k]);
        row.push(tr.energy[k]);
        w.write_record(row.iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    if let Some(m) = mna {
        let err = relative_error(&tr.x, &m.x);
        eprintln!("relative error vs MNA: {err:.3e}");
    }
    Ok(())
}

struct Golden {
    name: &'static str,
    ok: bool,
}

fn goldens() -> Result<Vec<Golden>> {
    let c = parse_netlist(P8BY5)?;
    let a = incidence_matrix(&c);
    let td = optimal_tree(&a, &c.kinds())?;
    let f = compute_f(&a, &td)?;
    let p = partition_edges(&td, &c.kinds(), &c.labels())?;
    let dae = build_dae(&c, None)?;
    let st = analyze_structure(&dae)?;
    let parts: Vec<String> = Group::ALL
        .iter()
        .flat_map(|&g| p.edges(g).iter().map(|&e| p.role_label(e)))
        .collect();
    Ok(vec![
        Golden {
            name: "incidence matrix",
            ok: a.matrix().to_rows()
                == [
                    [1, -1, 0, 0, 0],
                    [1, 0, -1, 0, 0],
                    [1, 0, 0, -1, 0],
                    [1, 0, 0, 0, -1],
                    [0, 1, -1, 0, 0],
                    [0, 0, 1, -1, 0],
                    [0, 0, 0, 1, -1],
                    [0, -1, 0, 0, 1],
                ],
        },
        Golden {
            name: "tree",
            ok: td.tree == [0, 1, 2, 3],
        },
        Golden {
            name: "loop-cutset matrix",
            ok: f.matrix().to_rows() == [[1, -1, 0, 0], [0, 1, -1, 0], [0, 0, 1, -1], [-1, 0, 0, 1]],
        },
        Golden {
            name: "partition",
            ok: parts == ["c3", "l4", "v2", "r1", "L7", "C6", "I8", "R5"],
        },
        Golden {
            name: "offsets",
            ok: st.offsets.c[..6] == [1, 0, 1, 0, 0, 0] && st.offsets.d[..6] == [1, 1, 1, 1, 0, 0],
        },
        Golden {
            name: "DOF",
            ok: st.dof == 2,
        },
        Golden {
            name: "index",
            ok: st.index == 2 && classify_index(&p) == 2,
        },
        Golden {
            name: "SA-amenable",
            ok: st.report.nonsingular(),
        },
    ])
}

fn selftest(random: Option<u64>, seed: u64, as_json: bool) -> Result<()> {
    let gs = goldens()?;
    let mut ok = gs.iter().all(|g| g.ok);
    let mut summary = json!({
        "goldens": gs.iter().map(|g| json!({ "name": g.name, "pass": g.ok })).collect::<Vec<_>>(),
    });
    if !as_json {
        for g in &gs {
            println!("{} {}", if g.ok { "PASS" } else { "FAIL" }, g.name);
        }
    }
    if let Some(n) = random {
        let seeds: Vec<u64> = (seed..seed + n).collect();
        let res = theorem_batch(&GenConfig::default(), &seeds);
        let sa = res.iter().filter(|(_, t)| t.sa_passed()).count();
        let full = res.iter().filter(|(_, t)| t.passed()).count();
        let bridges = res.iter().filter(|(_, t)| !t.bridge_inductors.is_empty()).count();
        let failures: Vec<u64> = res.iter().filter(|(_, t)| !t.sa_passed()).map(|(s, _)| *s).collect();
        ok &= failures.is_empty();
        if as_json {
            summary["random"] = json!({
                "circuits": n,
                "seed": seed,
                "sa_amenable": sa,
                "closed_form": full,
                "with_bridge_inductors": bridges,
                "failed_seeds": failures,
            });
        } else {
            println!("{} SA-amenable: {sa}/{n}", if failures.is_empty() { "PASS" } else { "FAIL" });
            println!("closed-form offsets and index formula: {full}/{n} ({bridges} circuits have a bridge tree inductor)");
            if !failures.is_empty() {
                println!("failed seeds: {failures:?}");
            }
        }
    }
    if as_json {
        print_json(&summary)?;
    }
    if ok {
        Ok(())
    } else {
        Err(Failed.into())
    }
}
