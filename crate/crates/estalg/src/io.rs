//! External encodings: JSON model/scheme/report formats, the CSV record and
//! filter-output files, and the record sidecar.
//!
//! Complex matrices are encoded as a list of rows with each entry a
//! two-element `[re, im]` array of doubles. CSV floats carry 17 significant
//! digits so a write/read round trip is bit exact.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::classical::{ClassicalModel, Poly, Rat};
use crate::lie_engine::{ClosureOutcome, ClosureReport};
use crate::operators::Operator;
use crate::qfilter::{FilterOutput, TrajectoryRecord};
use crate::scalar::C;
use crate::superops::{MeasurementScheme, ModelSpec};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("JSON parse error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("field {field}: {message}")]
    Field { field: String, message: String },
    #[error("CSV line {line}: {message}")]
    Csv { line: usize, message: String },
    #[error(transparent)]
    Model(#[from] crate::superops::ModelError),
    #[error(transparent)]
    Operator(#[from] crate::operators::OperatorError),
    #[error(transparent)]
    Classical(#[from] crate::classical::ClassicalError),
}

fn field_err(field: &str, message: impl Into<String>) -> IoError {
    IoError::Field { field: field.to_string(), message: message.into() }
}

/// Matrix as rows of [re, im] pairs.
pub type MatrixJson = Vec<Vec<[f64; 2]>>;

pub fn matrix_to_json(op: &Operator<f64>) -> MatrixJson {
    let d = op.dim();
    (0..d)
        .map(|i| (0..d).map(|j| [op.entry(i, j).re, op.entry(i, j).im]).collect())
        .collect()
}

pub fn matrix_from_json(rows: &MatrixJson, field: &str) -> Result<Operator<f64>, IoError> {
    let d = rows.len();
    if d == 0 {
        return Err(field_err(field, "matrix must have at least one row"));
    }
    for (i, row) in rows.iter().enumerate() {
        if row.len() != d {
            return Err(field_err(
                field,
                format!("row {i} has {} entries, expected {d} (matrix must be square)", row.len()),
            ));
        }
    }
    let mat = ndarray::Array2::from_shape_fn((d, d), |(i, j)| C::new(rows[i][j][0], rows[i][j][1]));
    Operator::new(mat).map_err(|e| field_err(field, e.to_string()))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelSpecJson {
    pub dim: usize,
    #[serde(rename = "L")]
    pub l_ops: Vec<MatrixJson>,
    #[serde(rename = "H")]
    pub h: MatrixJson,
}

pub fn model_to_json(model: &ModelSpec<f64>) -> ModelSpecJson {
    ModelSpecJson {
        dim: model.dim(),
        l_ops: model.couplings().iter().map(matrix_to_json).collect(),
        h: matrix_to_json(model.hamiltonian()),
    }
}

pub fn model_from_json(json: &ModelSpecJson) -> Result<ModelSpec<f64>, IoError> {
    let h = matrix_from_json(&json.h, "H")?;
    if h.dim() != json.dim {
        return Err(field_err("H", format!("matrix is {}x{0} but dim = {}", h.dim(), json.dim)));
    }
    let mut l_ops = Vec::with_capacity(json.l_ops.len());
    for (k, rows) in json.l_ops.iter().enumerate() {
        let field = format!("L[{k}]");
        let l = matrix_from_json(rows, &field)?;
        if l.dim() != json.dim {
            return Err(field_err(&field, format!("matrix is {}x{0} but dim = {}", l.dim(), json.dim)));
        }
        l_ops.push(l);
    }
    Ok(ModelSpec::new(l_ops, h)?)
}

pub fn parse_model(text: &str) -> Result<ModelSpec<f64>, IoError> {
    let json: ModelSpecJson = serde_json::from_str(text)?;
    model_from_json(&json)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SchemeJson {
    /// 1-based channel indices.
    pub observed: Vec<usize>,
    pub theta: Vec<f64>,
}

pub fn scheme_to_json(scheme: &MeasurementScheme<f64>) -> SchemeJson {
    SchemeJson {
        observed: scheme.observed().iter().map(|&i| i + 1).collect(),
        theta: scheme.phases().to_vec(),
    }
}

pub fn scheme_from_json(json: &SchemeJson) -> Result<MeasurementScheme<f64>, IoError> {
    let mut observed = Vec::with_capacity(json.observed.len());
    for (slot, &i) in json.observed.iter().enumerate() {
        if i == 0 {
            return Err(field_err(
                &format!("observed[{slot}]"),
                "channel indices are 1-based; 0 is not a channel",
            ));
        }
        observed.push(i - 1);
    }
    Ok(MeasurementScheme::new(observed, json.theta.clone())?)
}

pub fn parse_scheme(text: &str) -> Result<MeasurementScheme<f64>, IoError> {
    let json: SchemeJson = serde_json::from_str(text)?;
    scheme_from_json(&json)
}

/// SHA-256 of the canonical model + scheme encoding, hex.
pub fn model_hash(model: &ModelSpec<f64>, scheme: &MeasurementScheme<f64>) -> String {
    let canon = serde_json::to_string(&(model_to_json(model), scheme_to_json(scheme)))
        .expect("model serializes");
    let mut hasher = Sha256::new();
    hasher.update(canon.as_bytes());
    hex_string(&hasher.finalize())
}

fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

// ---------------------------------------------------------------------------
// classical model JSON
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PolyTermJson {
    /// [numerator, denominator]
    pub coeff: [i64; 2],
    pub powers: Vec<u32>,
}

pub type PolyJson = Vec<PolyTermJson>;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassicalModelJson {
    pub n_vars: usize,
    pub v: Vec<PolyJson>,
    pub h: Vec<PolyJson>,
    /// [numerator, denominator]
    pub gamma0: [i64; 2],
}

fn poly_from_json(json: &PolyJson, n_vars: usize, field: &str) -> Result<Poly, IoError> {
    let mut p = Poly::zero(n_vars);
    for (t, term) in json.iter().enumerate() {
        if term.powers.len() != n_vars {
            return Err(field_err(
                &format!("{field}[{t}].powers"),
                format!("{} exponents, expected {n_vars}", term.powers.len()),
            ));
        }
        if term.coeff[1] == 0 {
            return Err(field_err(&format!("{field}[{t}].coeff"), "zero denominator"));
        }
        p.add_term(
            crate::classical::Monomial(term.powers.clone()),
            crate::classical::rat(term.coeff[0], term.coeff[1]),
        );
    }
    Ok(p)
}

fn poly_to_json(p: &Poly) -> PolyJson {
    p.terms()
        .map(|(m, c)| PolyTermJson {
            coeff: [
                i64::try_from(c.numer().clone()).unwrap_or(i64::MAX),
                i64::try_from(c.denom().clone()).unwrap_or(i64::MAX),
            ],
            powers: m.0.clone(),
        })
        .collect()
}

pub fn classical_model_to_json(model: &ClassicalModel) -> ClassicalModelJson {
    ClassicalModelJson {
        n_vars: model.n_vars(),
        v: model.drift().iter().map(poly_to_json).collect(),
        h: model.observation().iter().map(poly_to_json).collect(),
        gamma0: [
            i64::try_from(model.gamma0().numer().clone()).unwrap_or(i64::MAX),
            i64::try_from(model.gamma0().denom().clone()).unwrap_or(i64::MAX),
        ],
    }
}

pub fn classical_model_from_json(json: &ClassicalModelJson) -> Result<ClassicalModel, IoError> {
    let v = json
        .v
        .iter()
        .enumerate()
        .map(|(i, p)| poly_from_json(p, json.n_vars, &format!("v[{i}]")))
        .collect::<Result<Vec<_>, _>>()?;
    let h = json
        .h
        .iter()
        .enumerate()
        .map(|(j, p)| poly_from_json(p, json.n_vars, &format!("h[{j}]")))
        .collect::<Result<Vec<_>, _>>()?;
    if json.gamma0[1] == 0 {
        return Err(field_err("gamma0", "zero denominator"));
    }
    let gamma0: Rat = crate::classical::rat(json.gamma0[0], json.gamma0[1]);
    Ok(ClassicalModel::new(json.n_vars, v, h, gamma0)?)
}

pub fn parse_classical_model(text: &str) -> Result<ClassicalModel, IoError> {
    let json: ClassicalModelJson = serde_json::from_str(text)?;
    classical_model_from_json(&json)
}

// ---------------------------------------------------------------------------
// closure report JSON
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClosureReportJson {
    pub outcome: String,
    pub dimension: usize,
    pub growth_trace: Vec<usize>,
    pub tolerance: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub structure_constants: Option<Vec<Vec<Vec<f64>>>>,
}

pub fn closure_report_to_json(report: &ClosureReport<f64>) -> ClosureReportJson {
    let (outcome, structure_constants) = match &report.outcome {
        ClosureOutcome::Finite(basis) => ("finite".to_string(), Some(basis.structure_tensor())),
        ClosureOutcome::CapExceeded { .. } => ("cap_exceeded".to_string(), None),
    };
    ClosureReportJson {
        outcome,
        dimension: report.dimension(),
        growth_trace: report.growth_trace.clone(),
        tolerance: report.tolerance,
        structure_constants,
    }
}

// ---------------------------------------------------------------------------
// CSV encodings
// ---------------------------------------------------------------------------

/// 17 significant digits: enough to reproduce any f64 exactly.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RecordSidecar {
    pub seed: u64,
    pub dt: f64,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub model_hash: String,
}

/// Record CSV: header `t,dY_1..dY_m,dW_1..dW_m`, one row per increment.
pub fn record_to_csv(record: &TrajectoryRecord<f64>) -> String {
    let m = record.channels();
    let mut out = String::from("t");
    for a in 1..=m {
        out.push_str(&format!(",dY_{a}"));
    }
    for a in 1..=m {
        out.push_str(&format!(",dW_{a}"));
    }
    out.push('\n');
    for k in 0..record.steps() {
        out.push_str(&fmt_f64(record.t_grid[k]));
        for ch in &record.dy {
            out.push(',');
            out.push_str(&fmt_f64(ch[k]));
        }
        for ch in &record.dw {
            out.push(',');
            out.push_str(&fmt_f64(ch[k]));
        }
        out.push('\n');
    }
    out
}

pub fn record_from_csv(csv: &str, sidecar: &RecordSidecar) -> Result<TrajectoryRecord<f64>, IoError> {
    let mut lines = csv.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| IoError::Csv { line: 0, message: "empty file".to_string() })?;
    let cols: Vec<&str> = header.split(',').collect();
    if cols.is_empty() || cols[0] != "t" || (cols.len() - 1) % 2 != 0 {
        return Err(IoError::Csv {
            line: 1,
            message: "header must be t,dY_1..dY_m,dW_1..dW_m".to_string(),
        });
    }
    let m = (cols.len() - 1) / 2;
    let mut t_grid = Vec::new();
    let mut dy = vec![Vec::new(); m];
    let mut dw = vec![Vec::new(); m];
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != cols.len() {
            return Err(IoError::Csv {
                line: idx + 1,
                message: format!("{} fields, expected {}", fields.len(), cols.len()),
            });
        }
        let parse = |s: &str| -> Result<f64, IoError> {
            s.trim().parse::<f64>().map_err(|e| IoError::Csv {
                line: idx + 1,
                message: format!("bad float {s:?}: {e}"),
            })
        };
        t_grid.push(parse(fields[0])?);
        for a in 0..m {
            dy[a].push(parse(fields[1 + a])?);
            dw[a].push(parse(fields[1 + m + a])?);
        }
    }
    Ok(TrajectoryRecord {
        dt: sidecar.dt,
        horizon: sidecar.horizon,
        seed: sidecar.seed,
        t_grid,
        dy,
        dw,
    })
}

/// Filter output CSV: `t,sigma_I,Re_pi_1,Im_pi_1,...`.
pub fn filter_output_to_csv(out: &FilterOutput<f64>, labels: &[String]) -> String {
    let mut s = String::from("t,sigma_I");
    for label in labels {
        s.push_str(&format!(",Re_pi_{label},Im_pi_{label}"));
    }
    s.push('\n');
    for k in 0..out.times.len() {
        s.push_str(&fmt_f64(out.times[k]));
        s.push(',');
        s.push_str(&fmt_f64(out.sigma_norm[k]));
        for series in &out.expectations {
            s.push(',');
            s.push_str(&fmt_f64(series[k].re));
            s.push(',');
            s.push_str(&fmt_f64(series[k].im));
        }
        s.push('\n');
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qfilter::generate_record;
    use crate::superops::{MeasurementScheme, ModelSpec};

    fn decay() -> (ModelSpec<f64>, MeasurementScheme<f64>) {
        let model = ModelSpec::new(vec![Operator::sigma_minus()], Operator::zeros(2)).unwrap();
        let scheme = MeasurementScheme::complete(vec![0.0]);
        (model, scheme)
    }

    #[test]
    fn model_json_round_trip() {
        let (model, scheme) = decay();
        let text = serde_json::to_string(&model_to_json(&model)).unwrap();
        let back = parse_model(&text).unwrap();
        assert_eq!(back, model);

        let stext = serde_json::to_string(&scheme_to_json(&scheme)).unwrap();
        let sback = parse_scheme(&stext).unwrap();
        assert_eq!(sback, scheme);
    }

    #[test]
    fn model_json_diagnostics_name_the_field() {
        let bad = r#"{"dim": 2, "L": [[[[0.0, 0.0]]]], "H": [[[0.0,0.0],[0.0,0.0]],[[0.0,0.0],[0.0,0.0]]]}"#;
        let err = parse_model(bad).unwrap_err();
        assert!(err.to_string().contains("L[0]"), "got: {err}");

        let bad_scheme = r#"{"observed": [0], "theta": [0.0]}"#;
        let err = parse_scheme(bad_scheme).unwrap_err();
        assert!(err.to_string().contains("observed[0]"), "got: {err}");
    }

    #[test]
    fn non_selfadjoint_h_is_rejected_with_field() {
        let bad = r#"{"dim": 2, "L": [], "H": [[[0.0,0.0],[1.0,0.0]],[[0.0,0.0],[0.0,0.0]]]}"#;
        let err = parse_model(bad).unwrap_err();
        assert!(err.to_string().contains("self-adjoint"), "got: {err}");
    }

    #[test]
    fn record_csv_round_trip_is_bit_exact() {
        let (model, scheme) = decay();
        let rho0 = Operator::identity(2).scale_re(0.5);
        let rec = generate_record(&model, &scheme, &rho0, 0.05, 1e-3, 9).unwrap();
        let sidecar = RecordSidecar {
            seed: rec.seed,
            dt: rec.dt,
            horizon: rec.horizon,
            model_hash: model_hash(&model, &scheme),
        };
        let csv = record_to_csv(&rec);
        let back = record_from_csv(&csv, &sidecar).unwrap();
        assert_eq!(back.dy, rec.dy);
        assert_eq!(back.dw, rec.dw);
        assert_eq!(back.t_grid, rec.t_grid);
    }

    #[test]
    fn classical_model_json_round_trip() {
        let model = crate::classical::models::kalman_1d(
            crate::classical::rat(-1, 1),
            crate::classical::rat(1, 1),
        );
        let text = serde_json::to_string(&classical_model_to_json(&model)).unwrap();
        let back = parse_classical_model(&text).unwrap();
        assert_eq!(back, model);
    }

    #[test]
    fn classical_json_rejects_bad_terms() {
        let bad = r#"{"n_vars": 1, "v": [[{"coeff": [1, 0], "powers": [1]}]], "h": [], "gamma0": [1, 1]}"#;
        let err = parse_classical_model(bad).unwrap_err();
        assert!(err.to_string().contains("denominator"), "got: {err}");
        let bad_arity = r#"{"n_vars": 2, "v": [[{"coeff": [1, 1], "powers": [1]}], []], "h": [], "gamma0": [1, 1]}"#;
        let err = parse_classical_model(bad_arity).unwrap_err();
        assert!(err.to_string().contains("v[0]"), "got: {err}");
    }

    #[test]
    fn seventeen_digit_floats_round_trip() {
        for &x in &[std::f64::consts::PI, 1.0 / 3.0, 1e-300, -2.5e17, 0.1 + 0.2] {
            let s = fmt_f64(x);
            let back: f64 = s.parse().unwrap();
            assert_eq!(back.to_bits(), x.to_bits(), "{s}");
        }
    }
}
