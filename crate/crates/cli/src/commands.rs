use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use nspkit_core::dilation::{check_dilation_conditions, complete, verify_dilation, DilationProblem};
use nspkit_core::projection::{check_conditions, construct_witness, CouplingVerdict, ProjectionProblem};
use nspkit_core::quadratic::{self, interpolate, QuadraticForm, SLemmaPair};
use nspkit_core::stability::{
    certificate_p_form, certificate_s_form, is_marginally_stable, verify_certificate, LtiSystem,
};
use nspkit_core::{Error, Matrix, SymMatrix, Tolerances};
use serde_json::{json, Value};

use crate::certificate::{self, tolerances_json, Certificate};
use crate::generate::{self, Kind};
use crate::matfile::{self, to_json};

pub const EXIT_FEASIBLE: i32 = 0;
pub const EXIT_INFEASIBLE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_BREAKDOWN: i32 = 3;

pub const PROFILE_VAR: &str = "NSPKIT_TOLERANCE_PROFILE";

#[derive(Debug, Parser)]
#[command(name = "nspkit", version, about = "Non-strict projection lemma: feasibility, synthesis and applications")]
pub struct Cli {
    #[command(flatten)]
    pub tol: TolArgs,
    /// Machine-readable output for `check`.
    #[arg(long, global = true)]
    pub json: bool,
    /// Write the certificate here instead of standard output.
    #[arg(long, global = true, value_name = "FILE")]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

/// Per-tolerance overrides on top of the profile named by `NSPKIT_TOLERANCE_PROFILE`.
#[derive(Debug, Args)]
pub struct TolArgs {
    #[arg(long, global = true, value_name = "TOL")]
    pub tol_rank: Option<f64>,
    #[arg(long, global = true, value_name = "TOL")]
    pub tol_psd: Option<f64>,
    #[arg(long, global = true, value_name = "TOL")]
    pub tol_sym: Option<f64>,
    #[arg(long, global = true, value_name = "TOL")]
    pub tol_residual: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormArg {
    P,
    S,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Variant {
    Matrix,
    Scalar,
    Finsler,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Report the solvability conditions of Q + U'XV + V'X'U >= 0.
    Check { q: PathBuf, u: PathBuf, v: PathBuf },
    /// Construct X with Q + U'XV + V'X'U >= 0.
    Solve { q: PathBuf, u: PathBuf, v: PathBuf },
    /// Weak-Lyapunov certificate for x+ = Ax.
    Stability {
        a: PathBuf,
        #[arg(long, value_enum, default_value = "p")]
        form: FormArg,
    },
    /// Complete [A B; C ?] to a contraction.
    Dilate { a: PathBuf, b: PathBuf, c: PathBuf },
    /// Find Δ with w = Δz under the quadratic constraint P.
    Interpolate {
        p: PathBuf,
        /// Length of z (size of the leading block of P).
        #[arg(long)]
        n: usize,
        z: PathBuf,
        w: PathBuf,
    },
    /// Search a multiplier α with M - αN > 0.
    Slemma {
        m: PathBuf,
        n: PathBuf,
        #[arg(long, value_enum, default_value = "matrix")]
        variant: Variant,
        /// Slater point for the scalar variant.
        #[arg(long, value_name = "FILE")]
        xbar: Option<PathBuf>,
        /// Size of the leading block of N for the matrix variant.
        #[arg(long)]
        n_block: Option<usize>,
    },
    /// Write a reproducible random instance.
    Gen {
        #[arg(long, value_enum)]
        kind: Kind,
        #[arg(long)]
        dim: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_name = "DIR")]
        out_dir: PathBuf,
    },
    /// Re-check a certificate from its recorded problem.
    Verify { certificate: PathBuf },
}

/// Exit code for a library error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::InfeasibleProblem { .. }
        | Error::NotMarginallyStable { .. }
        | Error::Infeasible { .. }
        | Error::ConditionsViolated { .. } => EXIT_INFEASIBLE,
        Error::DimensionMismatch { .. }
        | Error::NonFinite
        | Error::NotSymmetric { .. }
        | Error::HypothesisViolated(_)
        | Error::SlaterViolated { .. }
        | Error::IndefiniteInput { .. } => EXIT_USAGE,
        Error::NumericalBreakdown { .. } | Error::SingularX { .. } => EXIT_BREAKDOWN,
    }
}

/// A failure carrying its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Failure { code: EXIT_USAGE, message: message.into() }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure { code: exit_code(&e), message: e.to_string() }
    }
}

impl From<matfile::MatFileError> for Failure {
    fn from(e: matfile::MatFileError) -> Self {
        Failure::usage(e.to_string())
    }
}

type Outcome = Result<i32, Failure>;

/// Tolerances from the environment profile and the command-line overrides.
pub fn resolve_tolerances(profile: Option<&str>, args: &TolArgs) -> Result<Tolerances, Failure> {
    let mut tol = match profile {
        None | Some("default") => Tolerances::default(),
        Some("strict") => Tolerances::strict(),
        Some("loose") => Tolerances::loose(),
        Some(other) => {
            return Err(Failure::usage(format!(
                "{PROFILE_VAR}={other:?} is not one of default, strict, loose"
            )))
        }
    };
    let overrides = [
        (args.tol_rank, &mut tol.tol_rank),
        (args.tol_psd, &mut tol.tol_psd),
        (args.tol_sym, &mut tol.tol_sym),
        (args.tol_residual, &mut tol.tol_residual),
    ];
    for (given, slot) in overrides {
        if let Some(t) = given {
            *slot = t;
        }
    }
    tol.validate()?;
    Ok(tol)
}

/// Runs a parsed command line; returns the process exit code.
pub fn run(cli: &Cli) -> i32 {
    let profile = std::env::var(PROFILE_VAR).ok();
    let result = resolve_tolerances(profile.as_deref(), &cli.tol).and_then(|tol| dispatch(cli, &tol));
    match result {
        Ok(code) => code,
        Err(f) => {
            eprintln!("nspkit: {}", f.message);
            f.code
        }
    }
}

fn dispatch(cli: &Cli, tol: &Tolerances) -> Outcome {
    let out = cli.out.as_deref();
    match &cli.command {
        Command::Check { q, u, v } => cmd_check(q, u, v, tol, cli.json),
        Command::Solve { q, u, v } => cmd_solve(q, u, v, tol, out),
        Command::Stability { a, form } => cmd_stability(a, *form, tol, out),
        Command::Dilate { a, b, c } => cmd_dilate(a, b, c, tol, out),
        Command::Interpolate { p, n, z, w } => cmd_interpolate(p, *n, z, w, tol, out),
        Command::Slemma { m, n, variant, xbar, n_block } => {
            cmd_slemma(m, n, *variant, xbar.as_deref(), *n_block, tol, out)
        }
        Command::Gen { kind, dim, seed, out_dir } => {
            let manifest = generate::write_instance(*kind, *dim, *seed, out_dir).map_err(Failure::usage)?;
            println!("{}", serde_json::to_string_pretty(&manifest).expect("JSON values serialize"));
            Ok(EXIT_FEASIBLE)
        }
        Command::Verify { certificate } => cmd_verify(certificate),
    }
}

fn read_sym(path: &Path, tol: &Tolerances) -> Result<SymMatrix, Failure> {
    Ok(SymMatrix::new(matfile::read(path)?, tol)?)
}

fn emit(cert: &Certificate, out: Option<&Path>, code: i32) -> Outcome {
    let text = cert.render();
    match out {
        Some(path) => {
            std::fs::write(path, text).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
            println!("{}", cert.verdict);
        }
        None => print!("{text}"),
    }
    Ok(code)
}

fn projection_problem(q: &Path, u: &Path, v: &Path, tol: &Tolerances) -> Result<ProjectionProblem, Failure> {
    Ok(ProjectionProblem::new(read_sym(q, tol)?, matfile::read(u)?, matfile::read(v)?, *tol)?)
}

fn projection_echo(prob: &ProjectionProblem) -> Value {
    json!({
        "kind": "projection",
        "q": to_json(prob.q().as_matrix()),
        "u": to_json(prob.u()),
        "v": to_json(prob.v()),
    })
}

fn holds(ok: bool) -> &'static str {
    if ok {
        "holds"
    } else {
        "violated"
    }
}

pub fn cmd_check(q: &Path, u: &Path, v: &Path, tol: &Tolerances, as_json: bool) -> Outcome {
    let prob = projection_problem(q, u, v, tol)?;
    let report = check_conditions(&prob);
    let code = if report.feasible { EXIT_FEASIBLE } else { EXIT_INFEASIBLE };
    let coupling_residual = match &report.coupling {
        CouplingVerdict::Holds => None,
        CouplingVerdict::Violated { residual, .. } => Some(*residual),
    };
    if as_json {
        let doc = json!({
            "feasible": report.feasible,
            "kernel_condition_u": {
                "holds": report.kernel_cond_u.is_psd(),
                "min_eig": matfile::number(report.kernel_cond_u.min_eig),
                "annihilator": to_json(&report.u_perp),
                "projected": to_json(report.projected_u.as_matrix()),
            },
            "kernel_condition_v": {
                "holds": report.kernel_cond_v.is_psd(),
                "min_eig": matfile::number(report.kernel_cond_v.min_eig),
                "annihilator": to_json(&report.v_perp),
                "projected": to_json(report.projected_v.as_matrix()),
            },
            "coupling": {
                "holds": report.coupling.holds(),
                "residual": coupling_residual.map_or(Value::Null, matfile::number),
            },
            "helmersson": { "holds": report.helmersson_holds, "intersection_dim": report.helmersson_dim },
            "tolerances": tolerances_json(tol),
            "tool_version": certificate::TOOL_VERSION,
        });
        println!("{}", serde_json::to_string_pretty(&doc).expect("JSON values serialize"));
    } else {
        let ku = &report.kernel_cond_u;
        let kv = &report.kernel_cond_v;
        println!("kernel condition (U): {} (min eigenvalue {:e})", holds(ku.is_psd()), ku.min_eig);
        println!("kernel condition (V): {} (min eigenvalue {:e})", holds(kv.is_psd()), kv.min_eig);
        match coupling_residual {
            None => println!("coupling condition:   holds"),
            Some(r) => println!("coupling condition:   violated (residual {r:e})"),
        }
        println!(
            "Helmersson condition: {} (dim im U' ∩ im V' = {})",
            holds(report.helmersson_holds),
            report.helmersson_dim
        );
        println!("verdict: {}", if report.feasible { "feasible" } else { "infeasible" });
    }
    Ok(code)
}

pub fn cmd_solve(q: &Path, u: &Path, v: &Path, tol: &Tolerances, out: Option<&Path>) -> Outcome {
    let prob = projection_problem(q, u, v, tol)?;
    let report = check_conditions(&prob);
    let mut cert = Certificate::new(projection_echo(&prob), "feasible", *tol)
        .diag("kernel_condition_u_min_eig", report.kernel_cond_u.min_eig)
        .diag("kernel_condition_v_min_eig", report.kernel_cond_v.min_eig)
        .diag("helmersson_dim", report.helmersson_dim as f64);
    match construct_witness(&prob) {
        Ok(w) => {
            cert.witness = Some(w.x);
            cert = cert
                .diag("residual_min_eig", w.residual_min_eig)
                .diag("residual_scale", w.residual_scale);
            emit(&cert, out, EXIT_FEASIBLE)
        }
        Err(e @ Error::InfeasibleProblem { .. }) => {
            cert.verdict = "infeasible".into();
            cert.notes.push(e.to_string());
            eprintln!("nspkit: {e}");
            emit(&cert, out, EXIT_INFEASIBLE)
        }
        Err(e) => Err(e.into()),
    }
}

pub fn cmd_stability(a: &Path, form: FormArg, tol: &Tolerances, out: Option<&Path>) -> Outcome {
    let sys = LtiSystem::new(matfile::read(a)?)?;
    let form_name = match form {
        FormArg::P => "p",
        FormArg::S => "s",
    };
    let echo = json!({ "kind": "stability", "a": to_json(sys.a()), "form": form_name });
    let report = is_marginally_stable(&sys, tol);
    let mut cert = Certificate::new(echo, "marginally stable", *tol).diag("spectral_radius", report.spectral_radius);
    if !report.marginally_stable {
        cert.verdict = "not marginally stable".into();
        for o in &report.offending {
            let note = format!("{} at {}{:+}i (multiplicity {})", o.reason, o.re, o.im, o.multiplicity);
            eprintln!("nspkit: {note}");
            cert.notes.push(note);
        }
        return emit(&cert, out, EXIT_INFEASIBLE);
    }
    let built = match form {
        FormArg::P => certificate_p_form(&sys, tol),
        FormArg::S => certificate_s_form(&sys, tol),
    }?;
    let check = verify_certificate(&sys, &built, tol)?;
    cert = cert
        .diag("lmi_min_eig", check.lmi_min_eig)
        .diag("lyapunov_difference_min_eig", check.lyap_min_eig)
        .diag("lyapunov_min_eig", check.lyapunov_min_eig)
        .diag("sigma_ratio", check.sigma_ratio);
    cert.witness = Some(built.x);
    cert.lyapunov = Some(built.lyapunov.into_matrix());
    if !check.pass {
        return Err(Failure {
            code: EXIT_BREAKDOWN,
            message: "constructed certificate failed re-verification".into(),
        });
    }
    emit(&cert, out, EXIT_FEASIBLE)
}

pub fn cmd_dilate(a: &Path, b: &Path, c: &Path, tol: &Tolerances, out: Option<&Path>) -> Outcome {
    let prob = DilationProblem::new(matfile::read(a)?, matfile::read(b)?, matfile::read(c)?, *tol)?;
    let echo = json!({ "kind": "dilation", "a": to_json(prob.a()), "b": to_json(prob.b()), "c": to_json(prob.c()) });
    let cond = check_dilation_conditions(&prob);
    let mut cert = Certificate::new(echo, "completed", *tol)
        .diag("row_norm", cond.row_norm)
        .diag("col_norm", cond.col_norm);
    match complete(&prob) {
        Ok(d) => {
            let norm = verify_dilation(&prob, &d)?;
            cert.witness = Some(d);
            emit(&cert.diag("completed_norm", norm), out, EXIT_FEASIBLE)
        }
        Err(e @ Error::ConditionsViolated { .. }) => {
            cert.verdict = "infeasible".into();
            cert.notes.push(e.to_string());
            eprintln!("nspkit: {e}");
            emit(&cert, out, EXIT_INFEASIBLE)
        }
        Err(e) => Err(e.into()),
    }
}

pub fn cmd_interpolate(p: &Path, n: usize, z: &Path, w: &Path, tol: &Tolerances, out: Option<&Path>) -> Outcome {
    let form = QuadraticForm::new(read_sym(p, tol)?, n, *tol)?;
    let (zv, wv) = (matfile::read_vector(z)?, matfile::read_vector(w)?);
    let res = interpolate(&form, &zv, &wv)?;
    let echo = json!({
        "kind": "interpolation",
        "p": to_json(form.p().as_matrix()),
        "n": n,
        "z": to_json(&Matrix::from_column_slice(zv.len(), 1, &zv)),
        "w": to_json(&Matrix::from_column_slice(wv.len(), 1, &wv)),
    });
    let mut cert = Certificate::new(echo, "interpolated", *tol)
        .diag("fit_residual", res.fit_residual)
        .diag("graph_form_min_eig", res.form_min_eig)
        .diag("graph_form_scale", res.form_scale);
    cert.witness = Some(res.delta);
    emit(&cert, out, EXIT_FEASIBLE)
}

pub fn cmd_slemma(
    m: &Path,
    n: &Path,
    variant: Variant,
    xbar: Option<&Path>,
    n_block: Option<usize>,
    tol: &Tolerances,
    out: Option<&Path>,
) -> Outcome {
    let (mm, nn) = (read_sym(m, tol)?, read_sym(n, tol)?);
    let mut echo = json!({ "kind": "slemma", "m": to_json(mm.as_matrix()), "n": to_json(nn.as_matrix()) });
    let res = match variant {
        Variant::Finsler => {
            echo["variant"] = json!("finsler");
            quadratic::finsler(&mm, &nn, tol)?
        }
        Variant::Scalar => {
            echo["variant"] = json!("scalar");
            let path = xbar.ok_or_else(|| Failure::usage("the scalar variant needs --xbar"))?;
            let x = matfile::read_vector(path)?;
            echo["xbar"] = to_json(&Matrix::from_column_slice(x.len(), 1, &x));
            quadratic::scalar_s_lemma(&mm, &nn, &x, tol)?
        }
        Variant::Matrix => {
            echo["variant"] = json!("matrix");
            let k = n_block.ok_or_else(|| Failure::usage("the matrix variant needs --n-block"))?;
            echo["n_block"] = json!(k);
            quadratic::matrix_s_lemma(&SLemmaPair::new(mm, nn, k, *tol)?)?
        }
    };
    let mut cert = Certificate::new(echo, "feasible", *tol)
        .diag("alpha", res.alpha)
        .diag("min_eig", res.min_eig)
        .diag("bracket_lo", res.bracket.0)
        .diag("bracket_hi", res.bracket.1)
        .diag("capped", if res.capped { 1.0 } else { 0.0 });
    if res.feasible {
        cert.witness = Some(Matrix::from_element(1, 1, res.alpha));
        emit(&cert, out, EXIT_FEASIBLE)
    } else {
        cert.verdict = "infeasible".into();
        let err = res.require_feasible().expect_err("infeasible result");
        cert.notes.push(err.to_string());
        eprintln!("nspkit: {err}");
        emit(&cert, out, EXIT_INFEASIBLE)
    }
}

pub fn cmd_verify(path: &Path) -> Outcome {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
    let doc: Value = serde_json::from_str(&text).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
    let v = certificate::verify(&doc).map_err(Failure::usage)?;
    println!("{}: {}", if v.pass { "pass" } else { "fail" }, v.detail);
    Ok(if v.pass { EXIT_FEASIBLE } else { EXIT_INFEASIBLE })
}
