use std::io::Write as _;

use gltorus::bifurcation::{assemble_branch, BranchOptions};
use gltorus::glf::{self, Record};
use gltorus::solvers::{minimize, random_init, Classification, SolveOptions, SolveReport};
use gltorus::spectral::{hessian_eigs, laplacian0_spectrum, HessianOptions};
use gltorus::stability::{certify_instability, index_lower_bound, near_kernel, ThresholdOptions};
use gltorus::{Configuration, Coupling, GlError, LatticeTorus, ReferenceConnection};
use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::output::{float, json_line, to_value, Csv, Outputs};

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Command {
    Minimize,
    Spectrum,
    Hessian,
    Bifurcate,
    Certify,
    Sweep,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Minimize => "minimize",
            Command::Spectrum => "spectrum",
            Command::Hessian => "hessian",
            Command::Bifurcate => "bifurcate",
            Command::Certify => "certify",
            Command::Sweep => "sweep",
        }
    }
}

/// Outcome of a command that ran to completion.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Ok,
    Nonconverged,
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Numerical(GlError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<GlError> for RunError {
    fn from(e: GlError) -> Self {
        match e {
            GlError::IterationLimit { .. }
            | GlError::SingularJacobian { .. }
            | GlError::NotContraction { .. }
            | GlError::VortexDetected
            | GlError::CertificationFailed => RunError::Numerical(e),
            GlError::Io(io) => RunError::Io(io),
            other => RunError::Usage(other.to_string()),
        }
    }
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Numerical(_) => 2,
            RunError::Usage(_) | RunError::Io(_) => 1,
        }
    }
}

pub fn run(cmd: Command, cfg: &RunConfig, out: &mut Outputs) -> Result<Status, RunError> {
    match cmd {
        Command::Minimize => cmd_minimize(cfg, out),
        Command::Spectrum => cmd_spectrum(cfg, out),
        Command::Hessian => cmd_hessian(cfg, out),
        Command::Bifurcate => cmd_bifurcate(cfg, out),
        Command::Certify => cmd_certify(cfg, out),
        Command::Sweep => cmd_sweep(cfg, out),
    }
}

fn setup(cfg: &RunConfig) -> Result<(LatticeTorus, ReferenceConnection), RunError> {
    let lat = LatticeTorus::new(cfg.n1, cfg.n2, cfg.len1, cfg.len2, cfg.degree)?;
    let rc = ReferenceConnection::new(&lat);
    Ok((lat, rc))
}

fn coupling(cfg: &RunConfig, tau: f64) -> Result<Coupling, RunError> {
    Ok(Coupling::new(tau, cfg.kappa.value())?)
}

fn solve_options(cfg: &RunConfig) -> SolveOptions {
    SolveOptions {
        grad_tol: cfg.grad_tol,
        max_iter: cfg.max_iter,
        newton_max_iter: cfg.newton_max_iter,
        irreducible_tol: cfg.irreducible_tol,
        vortex_tol: cfg.vortex_tol,
        hessian_check: cfg.hessian_check,
        seed: Some(cfg.seed),
    }
}

fn status_of(c: Classification) -> Status {
    if c == Classification::Unconverged {
        Status::Nonconverged
    } else {
        Status::Ok
    }
}

fn report_value(r: &SolveReport, cpl: &Coupling) -> Value {
    json!({
        "tau": cpl.tau,
        "kappa": cpl.kappa,
        "classification": r.classification.to_string(),
        "grad_norm": r.grad_norm,
        "iterations": r.iterations,
        "energy": to_value(&r.energy),
        "evidence": to_value(&r.evidence),
        "harmonic": [r.harmonic[0], r.harmonic[1]],
        "seed": r.seed,
    })
}

fn save_glf(out: &mut Outputs, name: &str, lat: &LatticeTorus, c: &Configuration, cpl: &Coupling) -> Result<(), RunError> {
    glf::save_configuration(&out.path(name), lat, c, cpl)?;
    out.record(name);
    Ok(())
}

fn minimize_from_seed(
    cfg: &RunConfig,
    lat: &LatticeTorus,
    rc: &ReferenceConnection,
    cpl: &Coupling,
) -> Result<SolveReport, RunError> {
    let init = random_init(lat, cfg.init_amplitude, cfg.seed);
    Ok(minimize(lat, rc, cpl, &init, &solve_options(cfg))?)
}

fn cmd_minimize(cfg: &RunConfig, out: &mut Outputs) -> Result<Status, RunError> {
    let (lat, rc) = setup(cfg)?;
    let cpl = coupling(cfg, cfg.tau)?;
    let r = minimize_from_seed(cfg, &lat, &rc, &cpl)?;
    let rec = report_value(&r, &cpl);
    out.write("report.json", &json_line(&rec))?;
    let mut hist = Csv::new(&["iteration", "energy"]);
    for (i, e) in r.energy_history.iter().enumerate() {
        hist.row(&[i.to_string(), float(*e)]);
    }
    out.write("energy_history.csv", &hist.into_string())?;
    save_glf(out, "solution.glf", &lat, &r.final_cfg, &cpl)?;
    print!("{}", json_line(&rec));
    Ok(status_of(r.classification))
}

fn cmd_spectrum(cfg: &RunConfig, out: &mut Outputs) -> Result<Status, RunError> {
    let (lat, rc) = setup(cfg)?;
    let spec = laplacian0_spectrum(&lat, &rc, cfg.spectrum_k)?;
    out.write("spectrum.csv", &spec.to_csv())?;
    let summary = json!({
        "eigenvalues": spec.eigenvalues,
        "multiplicities": spec.multiplicity_clusters.iter().map(|c| c.len()).collect::<Vec<_>>(),
        "cluster_tol": spec.cluster_tol,
    });
    print!("{}", json_line(&summary));
    Ok(Status::Ok)
}

fn cmd_hessian(cfg: &RunConfig, out: &mut Outputs) -> Result<Status, RunError> {
    let (lat, rc, state, cpl, status) = match &cfg.hessian_input {
        Some(path) => {
            let (lat, state, cpl) = glf::load_configuration(path)?;
            let rc = ReferenceConnection::new(&lat);
            (lat, rc, state, cpl, Status::Ok)
        }
        None => {
            let (lat, rc) = setup(cfg)?;
            let cpl = coupling(cfg, cfg.tau)?;
            let r = minimize_from_seed(cfg, &lat, &rc, &cpl)?;
            out.write("report.json", &json_line(&report_value(&r, &cpl)))?;
            let status = status_of(r.classification);
            (lat, rc, r.final_cfg, cpl, status)
        }
    };
    let rep = hessian_eigs(&lat, &rc, &state, &cpl, cfg.hessian_count, &HessianOptions::default())?;
    let mut csv = Csv::new(&["index", "eigenvalue"]);
    for (i, v) in rep.eigenvalues.iter().enumerate() {
        csv.row(&[(i + 1).to_string(), float(*v)]);
    }
    out.write("hessian.csv", &csv.into_string())?;
    let rec = to_value(&rep);
    out.write("hessian.json", &json_line(&rec))?;
    print!("{}", json_line(&rec));
    Ok(status)
}

fn cmd_bifurcate(cfg: &RunConfig, out: &mut Outputs) -> Result<Status, RunError> {
    let (lat, rc) = setup(cfg)?;
    let kappa = cfg.kappa.value();
    let opts = BranchOptions {
        refine: cfg.refine,
        nonlinear: cfg.nonlinear,
        solve: solve_options(cfg),
        threads: cfg.threads,
        ..BranchOptions::default()
    };
    let points = assemble_branch(&lat, &rc, kappa, cfg.level, &cfg.t_list, &opts)?;
    let mut csv = Csv::new(&["t", "tau", "epsilon", "residual", "classification", "harmonic_defect"]);
    let mut records = String::new();
    let mut status = Status::Ok;
    for (i, (t, p)) in cfg.t_list.iter().zip(&points).enumerate() {
        match p {
            Ok(p) => {
                let row = p.row();
                csv.row(&[
                    float(row.t),
                    float(row.tau),
                    float(row.epsilon),
                    float(row.residual),
                    row.classification.clone(),
                    float(row.harmonic_defect),
                ]);
                let cpl = Coupling::new(p.tau, kappa)?;
                let mut rec = json!({
                    "t": p.t,
                    "tau": p.tau,
                    "epsilon": p.epsilon,
                    "predictor_residual": p.residual_norm,
                    "discarded_fraction": p.discarded_fraction,
                    "overlap_prev": p.overlap_prev,
                });
                let state = match &p.refined {
                    Some(r) => {
                        rec["refined"] = report_value(r, &cpl);
                        status = if status == Status::Ok { status_of(r.classification) } else { status };
                        &r.final_cfg
                    }
                    None => &p.assembled,
                };
                records.push_str(&json_line(&rec));
                save_glf(out, &format!("branch_{}.glf", i + 1), &lat, state, &cpl)?;
            }
            Err(e) => {
                eprintln!("t = {t}: {e}");
                csv.row(&[float(*t), String::new(), String::new(), String::new(), "failed".into(), String::new()]);
                records.push_str(&json_line(&json!({ "t": t, "error": e.to_string() })));
                status = Status::Nonconverged;
            }
        }
    }
    let table = csv.into_string();
    out.write("branch.csv", &table)?;
    out.write("branch.json", &records)?;
    print!("{table}");
    Ok(status)
}

fn cmd_certify(cfg: &RunConfig, out: &mut Outputs) -> Result<Status, RunError> {
    let path = cfg
        .certify_input
        .as_ref()
        .ok_or_else(|| RunError::Usage("certify needs a snapshot: set certify.input or pass --input".into()))?;
    let (lat, state, cpl) = glf::load_configuration(path)?;
    let rc = ReferenceConnection::new(&lat);
    let topt = ThresholdOptions {
        c: cfg.threshold_c,
        roughness_cut: cfg.roughness_cut,
        count: cfg.kernel_count,
        ..ThresholdOptions::default()
    };
    let kernel = near_kernel(&lat, &rc, &state, &topt)?;
    out.write("kernel.json", &json_line(&to_value(&kernel)))?;
    let mut basis = Vec::new();
    for t in &kernel.basis {
        glf::write_record(&mut basis, &lat, &Record::OneForm(t.a.clone()))?;
        glf::write_record(&mut basis, &lat, &Record::Scalar(t.psi.clone()))?;
    }
    std::fs::File::create(out.path("kernel_basis.glf"))?.write_all(&basis)?;
    out.record("kernel_basis.glf");

    let index = index_lower_bound(&lat, &rc, &state, &cpl, &HessianOptions::default())?;
    out.write("index.json", &json_line(&to_value(&index)))?;
    let cert = certify_instability(&lat, &rc, &state, &cpl, &kernel)?;
    let rec = to_value(&cert);
    out.write("certificate.json", &json_line(&rec))?;
    print!("{}", json_line(&rec));
    Ok(if index.satisfied { Status::Ok } else { Status::Nonconverged })
}

/// The sweep grid in absolute `tau`.
pub fn sweep_taus(cfg: &RunConfig, lat: &LatticeTorus) -> Vec<f64> {
    let unit = match cfg.sweep_scale {
        crate::config::SweepScale::Bradlow => Coupling::tau_bradlow(lat),
        crate::config::SweepScale::Absolute => 1.0,
    };
    let m = cfg.sweep_points;
    (0..m)
        .map(|i| {
            let s = if m == 1 { 0.0 } else { i as f64 / (m - 1) as f64 };
            unit * (cfg.sweep_start + s * (cfg.sweep_stop - cfg.sweep_start))
        })
        .collect()
}

fn cmd_sweep(cfg: &RunConfig, out: &mut Outputs) -> Result<Status, RunError> {
    let (lat, rc) = setup(cfg)?;
    let tb = Coupling::tau_bradlow(&lat);
    let mut csv = Csv::new(&[
        "tau",
        "tau_over_bradlow",
        "energy",
        "grad_norm",
        "phi_sup",
        "dbar_norm",
        "residual_norm",
        "classification",
    ]);
    let mut status = Status::Ok;
    let opt = |x: Option<f64>| x.map(float).unwrap_or_default();
    for tau in sweep_taus(cfg, &lat) {
        let cpl = coupling(cfg, tau)?;
        let r = minimize_from_seed(cfg, &lat, &rc, &cpl)?;
        if r.classification == Classification::Unconverged {
            status = Status::Nonconverged;
        }
        csv.row(&[
            float(tau),
            float(tau / tb),
            float(r.energy.total),
            float(r.grad_norm),
            float(r.evidence.phi_sup),
            opt(r.evidence.dbar_norm),
            opt(r.evidence.residual_norm),
            r.classification.to_string(),
        ]);
    }
    let table = csv.into_string();
    out.write("sweep.csv", &table)?;
    print!("{table}");
    Ok(status)
}
