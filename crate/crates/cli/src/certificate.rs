//! Certificate documents and their independent re-verification.
//!
//! A certificate is a JSON object with the keys `problem` (an echo of the
//! inputs, tagged by `kind`), `verdict`, `witness` (a matrix or `null`),
//! `diagnostics` (named scalars, `null` when not finite), `tolerances` and
//! `tool_version`. Stability certificates also carry `lyapunov`, and any
//! certificate may carry `notes`, a list of human-readable findings.

use nspkit_core::dilation::{check_dilation_conditions, verify_dilation, DilationProblem};
use nspkit_core::linalg::{min_eig, spectral_norm};
use nspkit_core::projection::{check_conditions, verify_witness, ProjectionProblem};
use nspkit_core::quadratic::{self, QuadraticForm, SLemmaPair};
use nspkit_core::stability::{
    is_marginally_stable, verify_certificate, CertificateForm, LtiSystem, StabilityCertificate,
};
use nspkit_core::{Matrix, SymMatrix, Tolerances};
use serde_json::{json, Map, Value};

use crate::matfile::{self, number};

pub const TOOL_VERSION: &str = concat!("nspkit ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Clone)]
pub struct Certificate {
    pub problem: Value,
    pub verdict: String,
    pub witness: Option<Matrix>,
    pub diagnostics: Vec<(String, f64)>,
    pub tolerances: Tolerances,
    pub lyapunov: Option<Matrix>,
    pub notes: Vec<String>,
}

impl Certificate {
    pub fn new(problem: Value, verdict: impl Into<String>, tolerances: Tolerances) -> Self {
        Certificate {
            problem,
            verdict: verdict.into(),
            witness: None,
            diagnostics: Vec::new(),
            tolerances,
            lyapunov: None,
            notes: Vec::new(),
        }
    }

    pub fn diag(mut self, name: &str, value: f64) -> Self {
        self.diagnostics.push((name.to_string(), value));
        self
    }

    pub fn to_json(&self) -> Value {
        let diagnostics: Map<String, Value> =
            self.diagnostics.iter().map(|(k, v)| (k.clone(), number(*v))).collect();
        let mut doc = json!({
            "problem": self.problem,
            "verdict": self.verdict,
            "witness": self.witness.as_ref().map_or(Value::Null, matfile::to_json),
            "diagnostics": diagnostics,
            "tolerances": tolerances_json(&self.tolerances),
            "tool_version": TOOL_VERSION,
        });
        if let Some(p) = &self.lyapunov {
            doc["lyapunov"] = matfile::to_json(p);
        }
        if !self.notes.is_empty() {
            doc["notes"] = json!(self.notes);
        }
        doc
    }

    pub fn render(&self) -> String {
        serde_json::to_string_pretty(&self.to_json()).expect("JSON values serialize") + "\n"
    }
}

pub fn tolerances_json(t: &Tolerances) -> Value {
    json!({
        "tol_rank": t.tol_rank,
        "tol_psd": t.tol_psd,
        "tol_sym": t.tol_sym,
        "tol_residual": t.tol_residual,
    })
}

pub fn tolerances_from_json(v: &Value) -> Result<Tolerances, String> {
    let get = |k: &str| v.get(k).and_then(Value::as_f64).ok_or(format!("tolerances: missing \"{k}\""));
    let t = Tolerances {
        tol_rank: get("tol_rank")?,
        tol_psd: get("tol_psd")?,
        tol_sym: get("tol_sym")?,
        tol_residual: get("tol_residual")?,
    };
    t.validate().map_err(|e| e.to_string())?;
    Ok(t)
}

/// Result of re-checking a certificate from its recorded inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Verification {
    pub pass: bool,
    pub detail: String,
}

fn field<'a>(v: &'a Value, key: &str) -> Result<&'a Value, String> {
    v.get(key).ok_or_else(|| format!("certificate: missing \"{key}\""))
}

fn matrix(v: &Value, key: &str) -> Result<Matrix, String> {
    matfile::from_json(field(v, key)?).map_err(|e| format!("\"{key}\": {e}"))
}

fn sym(v: &Value, key: &str, tol: &Tolerances) -> Result<SymMatrix, String> {
    SymMatrix::new(matrix(v, key)?, tol).map_err(|e| format!("\"{key}\": {e}"))
}

fn vector(v: &Value, key: &str) -> Result<Vec<f64>, String> {
    Ok(matrix(v, key)?.iter().copied().collect())
}

fn usize_field(v: &Value, key: &str) -> Result<usize, String> {
    field(v, key)?.as_u64().map(|x| x as usize).ok_or(format!("\"{key}\" must be a non-negative integer"))
}

fn outcome(pass: bool, detail: String) -> Verification {
    Verification { pass, detail }
}

/// Recomputes every claim of a certificate document from its problem echo.
pub fn verify(doc: &Value) -> Result<Verification, String> {
    let tol = tolerances_from_json(field(doc, "tolerances")?)?;
    let problem = field(doc, "problem")?;
    let verdict = field(doc, "verdict")?.as_str().ok_or("\"verdict\" must be a string")?;
    let witness = match field(doc, "witness")? {
        Value::Null => None,
        w => Some(matfile::from_json(w).map_err(|e| format!("\"witness\": {e}"))?),
    };
    let kind = field(problem, "kind")?.as_str().ok_or("\"kind\" must be a string")?;
    match kind {
        "projection" => {
            let prob = ProjectionProblem::new(
                sym(problem, "q", &tol)?,
                matrix(problem, "u")?,
                matrix(problem, "v")?,
                tol,
            )
            .map_err(|e| e.to_string())?;
            match (verdict, witness) {
                ("feasible", Some(x)) => {
                    let min = verify_witness(&prob, &x).map_err(|e| e.to_string())?;
                    let bound = -tol.tol_residual * prob.residual_scale(&x);
                    Ok(outcome(min >= bound, format!("λ_min = {min:e}, bound {bound:e}")))
                }
                ("infeasible", None) => {
                    let feasible = check_conditions(&prob).feasible;
                    Ok(outcome(!feasible, "conditions rechecked".into()))
                }
                _ => Err(format!("inconsistent verdict {verdict:?} for the witness")),
            }
        }
        "stability" => {
            let sys = LtiSystem::new(matrix(problem, "a")?).map_err(|e| e.to_string())?;
            let form = match field(problem, "form")?.as_str() {
                Some("p") => CertificateForm::P,
                Some("s") => CertificateForm::S,
                _ => return Err("\"form\" must be \"p\" or \"s\"".into()),
            };
            match (verdict, witness) {
                ("marginally stable", Some(x)) => {
                    let lyapunov = sym(doc, "lyapunov", &tol)?;
                    let cert = StabilityCertificate {
                        form,
                        lyapunov,
                        x,
                        lmi_min_eig: f64::NAN,
                        lyap_min_eig: f64::NAN,
                    };
                    let check = verify_certificate(&sys, &cert, &tol).map_err(|e| e.to_string())?;
                    Ok(outcome(
                        check.pass,
                        format!(
                            "LMI λ_min = {:e}, Lyapunov difference λ_min = {:e}, σ ratio = {:e}",
                            check.lmi_min_eig, check.lyap_min_eig, check.sigma_ratio
                        ),
                    ))
                }
                ("not marginally stable", None) => {
                    let report = is_marginally_stable(&sys, &tol);
                    Ok(outcome(!report.marginally_stable, "spectrum rechecked".into()))
                }
                _ => Err(format!("inconsistent verdict {verdict:?} for the witness")),
            }
        }
        "dilation" => {
            let prob = DilationProblem::new(matrix(problem, "a")?, matrix(problem, "b")?, matrix(problem, "c")?, tol)
                .map_err(|e| e.to_string())?;
            match (verdict, witness) {
                ("completed", Some(d)) => {
                    let norm = verify_dilation(&prob, &d).map_err(|e| e.to_string())?;
                    Ok(outcome(norm <= 1.0 + tol.tol_residual, format!("norm = {norm}")))
                }
                ("infeasible", None) => Ok(outcome(!check_dilation_conditions(&prob).holds(), "conditions rechecked".into())),
                _ => Err(format!("inconsistent verdict {verdict:?} for the witness")),
            }
        }
        "interpolation" => {
            let n = usize_field(problem, "n")?;
            let form = QuadraticForm::new(sym(problem, "p", &tol)?, n, tol).map_err(|e| e.to_string())?;
            let (z, w) = (vector(problem, "z")?, vector(problem, "w")?);
            let delta = match (verdict, witness) {
                ("interpolated", Some(d)) => d,
                _ => return Err(format!("inconsistent verdict {verdict:?} for the witness")),
            };
            if delta.shape() != (form.m(), n) || z.len() != n || w.len() != form.m() {
                return Err("witness shape does not match the problem".into());
            }
            let zv = Matrix::from_column_slice(n, 1, &z);
            let wv = Matrix::from_column_slice(form.m(), 1, &w);
            let fit = (&wv - &delta * &zv).norm();
            let graph = min_eig(&form.graph_form(&delta));
            let scale = (spectral_norm(form.p().as_matrix()).max(1.0) * (1.0 + spectral_norm(&delta)).powi(2)).max(1.0);
            let pass = fit <= tol.tol_residual * (1.0 + wv.norm()) && graph >= -tol.tol_residual * scale;
            Ok(outcome(pass, format!("fit residual = {fit:e}, graph form λ_min = {graph:e}")))
        }
        "slemma" => {
            let m = sym(problem, "m", &tol)?;
            let nn = sym(problem, "n", &tol)?;
            let variant = field(problem, "variant")?.as_str().ok_or("\"variant\" must be a string")?;
            match (verdict, witness) {
                ("feasible", Some(a)) => {
                    if a.shape() != (1, 1) {
                        return Err("witness must be the 1x1 multiplier".into());
                    }
                    let alpha = a[(0, 0)];
                    let margin = quadratic::margin(&m, &nn, alpha);
                    let scale = (spectral_norm(m.as_matrix()) + alpha.abs() * spectral_norm(nn.as_matrix())).max(1.0);
                    let sign_ok = variant == "finsler" || alpha >= 0.0;
                    Ok(outcome(sign_ok && margin > tol.tol_psd * scale, format!("α = {alpha}, λ_min(M - αN) = {margin:e}")))
                }
                ("infeasible", None) => {
                    let res = match variant {
                        "finsler" => quadratic::finsler(&m, &nn, &tol),
                        "scalar" => quadratic::search_nonnegative(&m, &nn, &tol),
                        "matrix" => {
                            let k = usize_field(problem, "n_block")?;
                            SLemmaPair::new(m, nn, k, tol).and_then(|p| quadratic::matrix_s_lemma(&p))
                        }
                        other => return Err(format!("unknown variant {other:?}")),
                    }
                    .map_err(|e| e.to_string())?;
                    Ok(outcome(!res.feasible, format!("best λ_min = {:e}", res.min_eig)))
                }
                _ => Err(format!("inconsistent verdict {verdict:?} for the witness")),
            }
        }
        other => Err(format!("unknown problem kind {other:?}")),
    }
}
