use std::fs;
use std::path::Path;

use abpf_core::acceptance::{self, Size};
use abpf_core::config::RunConfig;
use abpf_core::diagnostics::{entropy_ledger, rows_to_csv};
use abpf_core::dual_solver::{self, DualRunConfig, MassSolverKind};
use abpf_core::fields::snapshot::{self, FORMAT_VERSION};
use abpf_core::fields::{l2_distance2, marginal_rho, polarization, total_mass, Field3, FieldF, GridSpec};
use abpf_core::initial::{random_trig, rough_admissible, smooth_random};
use abpf_core::mollify::{initial_entropy_budget, regularize_initial, MollifierSpec};
use abpf_core::primal_solver::{
    self, run_primal_observed, run_rho_drift, DriftConfig, PrimalRunConfig, TimeStep,
};
use abpf_core::stationary::{
    contraction_radius, coupled_mode_rate, gamma_chain, linearized_mode_rates, sobolev_norm,
    ConstantState, FixedPointConfig, FixedPointStatus,
};
use abpf_core::sweep::{run_sweep, SweepConfig};
use abpf_core::{Error, ModelParams, Result};

use crate::Common;

const GRID_KEYS: [&str; 1] = ["grid"];
const PHYS_KEYS: [&str; 2] = ["pe", "de"];
const INIT_KEYS: [&str; 6] = ["init", "seed", "rho_mean", "amplitude", "input", "f_const"];

fn keys(groups: &[&[&'static str]]) -> Vec<&'static str> {
    groups.concat()
}

fn load(common: &Common, allowed: &[&str]) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(p) => {
            let text = fs::read_to_string(p)
                .map_err(|e| Error::Io(format!("{}: {e}", p.display())))?;
            RunConfig::parse(&text, allowed)?
        }
        None => RunConfig::new(allowed),
    };
    for kv in &common.set {
        cfg.apply_override(kv)?;
    }
    Ok(cfg)
}

fn write(out: &Path, name: &str, contents: &str) -> Result<()> {
    fs::write(out.join(name), contents).map_err(|e| Error::Io(format!("{}: {e}", out.join(name).display())))
}

fn prepare_out(out: &Path) -> Result<()> {
    fs::create_dir_all(out).map_err(|e| Error::Io(format!("{}: {e}", out.display())))
}

fn write_resolved(out: &Path, cmd: &str, cfg: &RunConfig) -> Result<()> {
    let text = format!(
        "# abpf {} {cmd}\n# snapshot format version {FORMAT_VERSION}\n{}",
        env!("CARGO_PKG_VERSION"),
        cfg.echo()
    );
    write(out, "config.resolved", &text)
}

/// `grid = nx,ny,ntheta`, or a single count for a cubic grid.
fn grid(cfg: &mut RunConfig, default_n: usize) -> Result<GridSpec> {
    let dims: Vec<usize> = cfg.get_list("grid", &default_n.to_string())?;
    match dims[..] {
        [n] => GridSpec::cubic(n),
        [nx, ny, nt] => GridSpec::new(nx, ny, nt),
        _ => Err(Error::Config {
            key: "grid".into(),
            msg: format!("expected nx,ny,ntheta or a single count, got {} values", dims.len()),
        }),
    }
}

/// `on|off` switch; `true|false` are accepted as well.
fn switch(cfg: &mut RunConfig, key: &str, default: bool) -> Result<bool> {
    let v = cfg.get_str(key, if default { "on" } else { "off" })?;
    match v.as_str() {
        "on" | "true" => Ok(true),
        "off" | "false" => Ok(false),
        _ => Err(Error::Config {
            key: key.into(),
            msg: format!("expected on or off, got `{v}`"),
        }),
    }
}

fn params(cfg: &mut RunConfig) -> Result<ModelParams> {
    ModelParams::new(cfg.get("pe", 0.0)?, cfg.get("de", 1.0)?)
}

fn initial(cfg: &mut RunConfig, grid: GridSpec) -> Result<FieldF> {
    let kind = cfg.get_str("init", "smooth")?;
    match kind.as_str() {
        "smooth" => {
            let seed = cfg.get("seed", 1u64)?;
            let rho_mean = cfg.get("rho_mean", 0.5)?;
            let amp = cfg.get("amplitude", 0.6)?;
            Ok(smooth_random(grid, rho_mean, amp, seed))
        }
        "rough" => Ok(rough_admissible(grid, cfg.get("seed", 1u64)?)),
        "constant" => Ok(Field3::constant(grid, cfg.get("f_const", 0.05)?)),
        "file" => {
            let path: String = cfg.require("input")?;
            let f = snapshot::read(Path::new(&path))?;
            if f.grid != grid {
                return Err(Error::Config {
                    key: "input".into(),
                    msg: format!(
                        "snapshot grid {}x{}x{} differs from the configured grid",
                        f.grid.nx, f.grid.ny, f.grid.ntheta
                    ),
                });
            }
            Ok(f)
        }
        other => Err(Error::Config {
            key: "init".into(),
            msg: format!("expected smooth, rough, constant or file, got `{other}`"),
        }),
    }
}

fn write_snapshots(out: &Path, fields: &[&FieldF]) -> Result<()> {
    for (i, f) in fields.iter().enumerate() {
        snapshot::write(&out.join(format!("snap_{i:04}.abpf")), f)?;
    }
    Ok(())
}

fn times_csv(times: &[f64]) -> String {
    let mut s = String::from("index,t\n");
    for (i, t) in times.iter().enumerate() {
        s.push_str(&format!("{i},{t:.16e}\n"));
    }
    s
}

pub fn mollify(common: &Common) -> Result<u8> {
    let allowed = keys(&[&GRID_KEYS, &INIT_KEYS, &["epsilon", "gamma"]]);
    let mut cfg = load(common, &allowed)?;
    let g = grid(&mut cfg, 16)?;
    let f0 = initial(&mut cfg, g)?;
    let spec = MollifierSpec::new(cfg.get("epsilon", 0.1)?, cfg.get("gamma", MollifierSpec::DEFAULT_GAMMA)?)?;
    let r = regularize_initial(&f0, &spec)?;
    let budget = initial_entropy_budget(&r.f, &r.u, spec.epsilon)?;
    let e = abpf_core::entropy::entropy(&r.f)?;
    prepare_out(&common.out)?;
    snapshot::write(&common.out.join("f0_eps.abpf"), &r.f)?;
    write(
        &common.out,
        "budget.csv",
        &format!(
            "epsilon,gamma,entropy,eps_u_sq,budget\n{},{},{e:.16e},{:.16e},{budget:.16e}\n",
            spec.epsilon,
            spec.gamma,
            budget - e
        ),
    )?;
    write_resolved(&common.out, "mollify", &cfg)?;
    println!("budget = {budget:.12e}");
    Ok(0)
}

fn primal_config(cfg: &mut RunConfig, g: GridSpec, p: ModelParams) -> Result<PrimalRunConfig> {
    let t_final = cfg.get("t_final", 1.0)?;
    let mut pc = PrimalRunConfig::new(p, g, t_final, cfg.get("dt", 1e-3)?);
    let cfl: f64 = cfg.get("cfl", 0.0)?;
    if cfl > 0.0 {
        pc.time_step = TimeStep::Cfl(cfl);
    }
    pc.imex = switch(cfg, "imex", true)?;
    pc.snap_every = cfg.get("snap_every", t_final / 10.0)?;
    let clamp = cfg.get_str("clamp", "off")?;
    pc.clamp = if clamp == "off" {
        None
    } else {
        Some(clamp.parse().map_err(|_| Error::Config {
            key: "clamp".into(),
            msg: format!("expected off or a number, got `{clamp}`"),
        })?)
    };
    pc.blowup_threshold = cfg.get("blowup_threshold", 1e6)?;
    pc.validate()?;
    Ok(pc)
}

const PRIMAL_KEYS: [&str; 8] = [
    "t_final",
    "dt",
    "cfl",
    "imex",
    "snap_every",
    "clamp",
    "blowup_threshold",
    "write_snapshots",
];

pub fn run_primal(common: &Common) -> Result<u8> {
    let allowed = keys(&[&GRID_KEYS, &PHYS_KEYS, &INIT_KEYS, &PRIMAL_KEYS]);
    let mut cfg = load(common, &allowed)?;
    let g = grid(&mut cfg, 16)?;
    let p = params(&mut cfg)?;
    let f0 = initial(&mut cfg, g)?;
    let pc = primal_config(&mut cfg, g, p)?;
    let snaps = switch(&mut cfg, "write_snapshots", true)?;
    prepare_out(&common.out)?;
    write_resolved(&common.out, "run-primal", &cfg)?;
    let traj = primal_solver::run_primal(&f0, &pc)?;
    write(&common.out, "diagnostics.csv", &rows_to_csv(&traj.rows))?;
    let ledger = entropy_ledger(&traj.rows, 0.0, &p);
    write(&common.out, "ledger.csv", &ledger.to_csv())?;
    write(&common.out, "times.csv", &times_csv(&traj.times))?;
    if snaps {
        write_snapshots(&common.out, &traj.snapshots.iter().collect::<Vec<_>>())?;
    }
    println!(
        "{} steps of dt = {:e}; max rho = {:.6}, min f = {:.3e}; ledger {}{}",
        traj.steps,
        traj.dt,
        traj.max_rho,
        traj.min_f,
        if ledger.passed() { "passed" } else { "FAILED" },
        if traj.certified { "" } else { " (clamped, not certified)" }
    );
    Ok(0)
}

const DUAL_KEYS: [&str; 11] = [
    "epsilon",
    "modes_k",
    "t_final",
    "dt_init",
    "rtol",
    "atol",
    "snap_every",
    "mass_solver",
    "gamma",
    "ledger_step_tol",
    "write_snapshots",
];

fn dual_config(cfg: &mut RunConfig, g: GridSpec, p: ModelParams) -> Result<DualRunConfig> {
    let t_final = cfg.get("t_final", 1.0)?;
    let mut dc = DualRunConfig::new(p, cfg.get("epsilon", 0.1)?, cfg.get("modes_k", 3usize)?, g, t_final);
    dc.dt_init = cfg.get("dt_init", dc.dt_init)?;
    dc.rtol = cfg.get("rtol", dc.rtol)?;
    dc.atol = cfg.get("atol", dc.atol)?;
    dc.snap_every = cfg.get("snap_every", t_final / 10.0)?;
    dc.mass_solver = match cfg.get_str("mass_solver", "auto")?.as_str() {
        "auto" => MassSolverKind::Auto,
        "dense" => MassSolverKind::Dense,
        "iterative" => MassSolverKind::Iterative,
        other => {
            return Err(Error::Config {
                key: "mass_solver".into(),
                msg: format!("expected auto, dense or iterative, got `{other}`"),
            })
        }
    };
    dc.gamma = cfg.get("gamma", dc.gamma)?;
    dc.ledger_step_tol = cfg.get("ledger_step_tol", dc.ledger_step_tol)?;
    dc.validate()?;
    Ok(dc)
}

pub fn run_dual(common: &Common) -> Result<u8> {
    let allowed = keys(&[&GRID_KEYS, &PHYS_KEYS, &INIT_KEYS, &DUAL_KEYS]);
    let mut cfg = load(common, &allowed)?;
    let g = grid(&mut cfg, 16)?;
    let p = params(&mut cfg)?;
    let dc = dual_config(&mut cfg, g, p)?;
    let f0 = initial(&mut cfg, g)?;
    let snaps = switch(&mut cfg, "write_snapshots", true)?;
    prepare_out(&common.out)?;
    write_resolved(&common.out, "run-dual", &cfg)?;
    let traj = dual_solver::run_dual(&f0, &dc)?;
    write(&common.out, "diagnostics.csv", &rows_to_csv(&traj.rows))?;
    let ledger = entropy_ledger(&traj.rows, dc.epsilon, &p);
    write(&common.out, "ledger.csv", &ledger.to_csv())?;
    let times: Vec<f64> = traj.snapshots.iter().map(|s| s.t).collect();
    write(&common.out, "times.csv", &times_csv(&times))?;
    write(
        &common.out,
        "solver.csv",
        &format!(
            "accepted,rejected,ledger_rejections,linear_iterations,max_step_increase,projection_error\n{},{},{},{},{:.16e},{:.16e}\n",
            traj.accepted,
            traj.rejected,
            traj.ledger_rejections,
            traj.linear_iterations,
            traj.max_step_increase,
            traj.projection_error
        ),
    )?;
    if snaps {
        write_snapshots(&common.out, &traj.snapshots.iter().map(|s| &s.f).collect::<Vec<_>>())?;
    }
    println!(
        "{} accepted / {} rejected steps; ledger {}",
        traj.accepted,
        traj.rejected,
        if ledger.passed() { "passed" } else { "FAILED" }
    );
    Ok(0)
}

pub fn rho_drift(common: &Common) -> Result<u8> {
    let allowed = keys(&[&GRID_KEYS, &PHYS_KEYS, &INIT_KEYS, &["t_final", "dt", "imex"]]);
    let mut cfg = load(common, &allowed)?;
    let g = grid(&mut cfg, 16)?;
    let p = params(&mut cfg)?;
    let f0 = initial(&mut cfg, g)?;
    let t_final = cfg.get("t_final", 0.5)?;
    let dt = cfg.get("dt", 1e-3)?;
    let imex = switch(&mut cfg, "imex", true)?;
    prepare_out(&common.out)?;
    write_resolved(&common.out, "rho-drift", &cfg)?;
    let mut pc = PrimalRunConfig::new(p, g, t_final, dt);
    pc.imex = imex;
    pc.track_dissipation = false;
    pc.validate()?;
    let mut pol = vec![];
    let mut marg = vec![];
    let mut obs = |_: usize, _: f64, f: &FieldF| -> Result<()> {
        pol.push(polarization(f));
        marg.push(marginal_rho(f));
        Ok(())
    };
    run_primal_observed(&f0, &pc, &mut obs)?;
    let dcfg = DriftConfig {
        params: p,
        t_final,
        dt,
        imex,
    };
    let drift = run_rho_drift(&marg[0], Some(&pol), &dcfg)?;
    let mut s = String::from("t,l2_gap_to_marginal,mass_rho\n");
    let mut worst: f64 = 0.0;
    for (i, (t, r)) in drift.times.iter().zip(&drift.rho).enumerate() {
        let gap = l2_distance2(r, &marg[i]);
        worst = worst.max(gap);
        let mass = abpf_core::fields::integrate2(&g, &r.values);
        s.push_str(&format!("{t:.16e},{gap:.16e},{mass:.16e}\n"));
    }
    write(&common.out, "rho_drift.csv", &s)?;
    println!("max L2 gap between planar solution and primal marginal: {worst:.6e}");
    let _ = total_mass(&f0);
    Ok(0)
}

pub fn stationary_scan(common: &Common) -> Result<u8> {
    let allowed = keys(&[&GRID_KEYS, &PHYS_KEYS, &["f_inf", "kmax", "coupled", "t_final", "dt"]]);
    let mut cfg = load(common, &allowed)?;
    let p = params(&mut cfg)?;
    let c = ConstantState::new(cfg.get("f_inf", 1.0 / (8.0 * std::f64::consts::PI))?)?;
    let kmax: usize = cfg.get("kmax", 2usize)?;
    let coupled = switch(&mut cfg, "coupled", true)?;
    let g = grid(&mut cfg, 16)?;
    let t_final = cfg.get("t_final", 0.5)?;
    let dt = cfg.get("dt", 1e-2)?;
    if coupled && 2 * kmax + 2 > g.nx.min(g.ny).min(g.ntheta) {
        return Err(Error::Config {
            key: "kmax".into(),
            msg: format!("kmax = {kmax} is not resolved by the grid"),
        });
    }
    prepare_out(&common.out)?;
    write_resolved(&common.out, "stationary-scan", &cfg)?;
    let rates = linearized_mode_rates(&c, &p, kmax);
    let mut s = String::from("n1,n2,n3,re_lambda,im_lambda,stable,coupled_rate\n");
    let mut unstable = 0;
    for r in &rates {
        let stable = r.lambda.re <= 0.0;
        unstable += usize::from(!stable);
        let cr = if coupled {
            coupled_mode_rate(&c, &p, r.mode, g, t_final, dt)?
        } else {
            f64::NAN
        };
        s.push_str(&format!(
            "{},{},{},{:.16e},{:.16e},{},{:.16e}\n",
            r.mode.0,
            r.mode.1,
            r.mode.2,
            r.lambda.re,
            r.lambda.im,
            u8::from(stable),
            cr
        ));
    }
    write(&common.out, "rates.csv", &s)?;
    println!("{} modes, {unstable} with positive real part", rates.len());
    Ok(0)
}

pub fn fixed_point(common: &Common, strict: bool) -> Result<u8> {
    let allowed = keys(&[
        &GRID_KEYS,
        &PHYS_KEYS,
        &[
            "f_inf",
            "t_final",
            "dt",
            "amplitude",
            "seed",
            "kmax_init",
            "radius",
            "max_iter",
            "tol",
            "intervals",
            "scan_radius",
            "s_max",
            "bisections",
        ],
    ]);
    let mut cfg = load(common, &allowed)?;
    let p = params(&mut cfg)?;
    let c = ConstantState::new(cfg.get("f_inf", 1.0 / (8.0 * std::f64::consts::PI))?)?;
    let g = grid(&mut cfg, 16)?;
    let mut fc = FixedPointConfig::new(cfg.get("t_final", 1.0)?, cfg.get("dt", 1e-2)?);
    fc.radius = cfg.get("radius", f64::INFINITY)?;
    fc.max_iter = cfg.get("max_iter", fc.max_iter)?;
    fc.tol = cfg.get("tol", fc.tol)?;
    let amp: f64 = cfg.get("amplitude", 1e-3)?;
    let seed: u64 = cfg.get("seed", 17u64)?;
    let kinit: i64 = cfg.get("kmax_init", 1i64)?;
    let intervals: usize = cfg.get("intervals", 1usize)?;
    let scan = switch(&mut cfg, "scan_radius", false)?;
    let dir = random_trig(g, kinit, seed);
    let w0 = {
        let n = sobolev_norm(&dir, 2);
        dir.map(|v| v * amp / n)
    };
    prepare_out(&common.out)?;
    write_resolved(&common.out, "fixed-point", &cfg)?;
    let reports = if intervals > 1 {
        gamma_chain(&w0, &c, &p, &fc, intervals)?
    } else {
        vec![abpf_core::stationary::gamma_iterate(&w0, &w0, &c, &p, &fc)?]
    };
    let mut csv = String::new();
    let mut summary = String::new();
    for (j, r) in reports.iter().enumerate() {
        for (i, line) in r.to_csv().lines().enumerate() {
            if i == 0 {
                if j == 0 {
                    csv.push_str(&format!("interval,{line}\n"));
                }
            } else {
                csv.push_str(&format!("{j},{line}\n"));
            }
        }
        summary.push_str(&format!("interval {j}\n{}", r.summary()));
    }
    if scan {
        let s_max = cfg.get("s_max", 1.0)?;
        let bis = cfg.get("bisections", 8usize)?;
        let rad = contraction_radius(&dir, &c, &p, &fc, s_max, bis)?;
        summary.push_str(&format!("empirical contraction radius (H2 norm of w0): {rad:.6e}\n"));
    }
    write(&common.out, "fixed_point.csv", &csv)?;
    write(&common.out, "summary.txt", &summary)?;
    print!("{summary}");
    if strict {
        for r in &reports {
            r.strict()?;
        }
    }
    let failed = reports.iter().any(|r| r.status != FixedPointStatus::Converged);
    if failed && !strict {
        eprintln!("warning: iteration did not converge on every interval");
    }
    Ok(0)
}

pub fn verify(size: &str, only: &[usize]) -> Result<u8> {
    let size: Size = size.parse()?;
    let ids: Vec<usize> = if only.is_empty() {
        (1..=acceptance::COUNT).collect()
    } else {
        only.to_vec()
    };
    if let Some(bad) = ids.iter().find(|i| !(1..=acceptance::COUNT).contains(*i)) {
        return Err(Error::Config {
            key: "only".into(),
            msg: format!("criterion {bad} does not exist"),
        });
    }
    let mut failed = 0;
    for id in ids {
        let o = acceptance::run(id, size);
        failed += usize::from(!o.passed);
        println!("{o}");
    }
    Ok(if failed > 0 { 3 } else { 0 })
}

pub fn sweep(common: &Common) -> Result<u8> {
    let allowed = keys(&[
        &GRID_KEYS,
        &PHYS_KEYS,
        &INIT_KEYS,
        &["epsilons", "ks", "t_final", "rtol", "atol", "primal_dt"],
    ]);
    let mut cfg = load(common, &allowed)?;
    let g = grid(&mut cfg, 32)?;
    let p = params(&mut cfg)?;
    let f0 = initial(&mut cfg, g)?;
    let primal_dt: f64 = cfg.get("primal_dt", 1e-3)?;
    let sc = SweepConfig {
        params: p,
        grid: g,
        t_final: cfg.get("t_final", 0.5)?,
        epsilons: cfg.get_list("epsilons", "0.1,0.05,0.025")?,
        ks: cfg.get_list("ks", "3,5,7")?,
        rtol: cfg.get("rtol", 1e-8)?,
        atol: cfg.get("atol", 1e-10)?,
        primal_dt: if primal_dt > 0.0 { Some(primal_dt) } else { None },
    };
    prepare_out(&common.out)?;
    write_resolved(&common.out, "sweep", &cfg)?;
    let res = run_sweep(&f0, &sc)?;
    for r in &res.runs {
        let dir = common.out.join(format!("run_eps{}_k{}", r.epsilon, r.k));
        prepare_out(&dir)?;
        snapshot::write(&dir.join("final.abpf"), &r.terminal)?;
        write(
            &dir,
            "config.resolved",
            &format!(
                "{}epsilon = {}\nk = {}\n",
                cfg.echo()
                    .lines()
                    .filter(|l| !l.starts_with("epsilons") && !l.starts_with("ks"))
                    .map(|l| format!("{l}\n"))
                    .collect::<String>(),
                r.epsilon,
                r.k
            ),
        )?;
    }
    write(&common.out, "sweep_pairs.csv", &res.pairs_csv())?;
    write(&common.out, "sweep_runs.csv", &res.runs_csv())?;
    println!("{} runs, {} pairwise distances", res.runs.len(), res.pairs.len());
    Ok(0)
}
