//! Problem configuration files.
//!
//! A configuration is a TOML document with the sections `[domain]`,
//! `[operator]`, `[constraints]`, `[nonlinearity]` and the optional `[solver]`,
//! `[checks]`, `[truncation]` and `[output]`. Unknown keys anywhere are errors.
//! Coefficients, constraint data and custom forcing terms are numbers or
//! expression strings (see [`crate::expr`]); spatial axes and components are
//! numbered from 1.
//!
//! ```toml
//! [domain]
//! dim = 1
//! half_width = 1.0
//! n_per_axis = 63
//!
//! [operator]
//! components = 1
//! diffusion = [1.0]
//!
//! [constraints]
//! kind = "rectangle"
//! lower = [0.0]
//! upper = [1.0]
//!
//! [nonlinearity]
//! name = "logistic"
//! params = { mu = 2.0 }
//! ```

use std::sync::Arc;

use coincide_core::constraint::{Ball, ConstraintField, HalfSpace, TubeBase};
use coincide_core::linalg::Mat;
use coincide_core::nonlinearity::{check_admissible, ForcingFn};
use coincide_core::operator::MatrixField;
use coincide_core::truncation::{Envelope, Problem, TruncationSchedule};
use coincide_core::{ForcingTerm, GridDomain, OperatorCoefficients, SolverConfig};
use serde::{Deserialize, Serialize};

use crate::error::{IoError, IoResult};
use crate::expr::{self, Expr, Scope, Term};
use crate::registry::ForcingRegistry;

/// Matrix given row by row.
pub type MatrixSpec = Vec<Vec<Term>>;

#[derive(Clone, Debug, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub domain: DomainSection,
    pub operator: OperatorSection,
    pub constraints: ConstraintSection,
    pub nonlinearity: NonlinearitySection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub checks: ChecksSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truncation: Option<TruncationSection>,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Clone, Debug, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSection {
    pub dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub half_width: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_per_axis: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spacing: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorSection {
    pub components: usize,
    /// `A^{ii} = diag(d)` on every axis.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diffusion: Option<Vec<Term>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub a: Vec<SecondOrderEntry>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub drift: Vec<DriftEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reaction: Option<MatrixSpec>,
    #[serde(default)]
    pub upwind: bool,
}

#[derive(Clone, Debug, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SecondOrderEntry {
    pub i: usize,
    pub j: usize,
    pub matrix: MatrixSpec,
}

#[derive(Clone, Debug, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct DriftEntry {
    pub i: usize,
    pub matrix: MatrixSpec,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintKind {
    Rectangle,
    Tube,
    Ellipsoid,
    Polyhedron,
    Ball,
}

#[derive(Clone, Debug, PartialEq, Deserialize, Serialize)]
#[serde(untagged)]
pub enum TubeBaseSpec {
    Named(String),
    Rectangle { lower: Vec<f64>, upper: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct FaceSpec {
    pub normal: Vec<f64>,
    pub offset: Term,
}

/// Constraint family and its parameters. Which keys are allowed depends on
/// `kind`: `rectangle` takes `lower`, `upper`; `tube` takes `center`, `scale`,
/// `base`; `ellipsoid` takes `shape`, `det_floor`; `polyhedron` takes `faces`;
/// `ball` takes constant `center` and `radius`. Every kind accepts an
/// `envelope` override.
#[derive(Clone, Debug, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ConstraintSection {
    pub kind: ConstraintKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lower: Option<Vec<Term>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub upper: Option<Vec<Term>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub center: Option<Vec<Term>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale: Option<Term>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base: Option<TubeBaseSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shape: Option<MatrixSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub det_floor: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub faces: Option<Vec<FaceSpec>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub envelope: Option<Term>,
}

/// Either a registered forcing `name` with its `params`, or an `expression`
/// per component together with the declared growth data `s`, `q`, `beta`, `c`.
#[derive(Clone, Debug, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct NonlinearitySection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "toml::Table::is_empty")]
    pub params: toml::Table,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expression: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<Term>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
}

/// Overrides of [`SolverConfig`]; absent keys keep the library defaults.
#[derive(Clone, Debug, Default, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h_schedule: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h_factors: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iters: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol_fp: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol_res: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub damping: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adaptive_damping: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub homotopy_steps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l_retract: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub override_invariance: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub override_tangency: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub invariance_samples: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tangency_samples: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub divergence_factor: Option<f64>,
}

fn default_invariance_samples() -> usize {
    64
}
fn default_growth_samples() -> usize {
    10_000
}
fn default_tangency_samples() -> usize {
    1_000
}
fn default_generator_samples() -> usize {
    64
}

/// Parameters of the standalone checks (`check-invariance` and the audits
/// attached to every run).
#[derive(Clone, Debug, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ChecksSection {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_invariance_samples")]
    pub invariance_samples: usize,
    /// Steps for the resolvent check; the solver schedule when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<Vec<f64>>,
    #[serde(default = "default_growth_samples")]
    pub growth_samples: usize,
    #[serde(default = "default_tangency_samples")]
    pub tangency_samples: usize,
    #[serde(default = "default_generator_samples")]
    pub generator_samples: usize,
}

impl Default for ChecksSection {
    fn default() -> Self {
        Self {
            seed: 0,
            invariance_samples: default_invariance_samples(),
            h: None,
            growth_samples: default_growth_samples(),
            tangency_samples: default_tangency_samples(),
            generator_samples: default_generator_samples(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvelopeKind {
    SeparableExp,
    Gaussian,
}

#[derive(Clone, Debug, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct EnvelopeSpec {
    pub kind: EnvelopeKind,
    pub amplitude: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub width: Option<f64>,
}

fn default_tol_cauchy() -> f64 {
    1e-4
}

/// Expanding boxes for `solve-rn`; the spacing is `domain.spacing`.
#[derive(Clone, Debug, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct TruncationSection {
    /// Explicit radii; `R_n = n` for `n = 1..=levels` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radii: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub levels: Option<usize>,
    #[serde(default)]
    pub probes: Vec<f64>,
    #[serde(default = "default_tol_cauchy")]
    pub tol_cauchy: f64,
    pub envelope: EnvelopeSpec,
}

fn default_true() -> bool {
    true
}
fn default_report() -> String {
    "report.txt".into()
}

#[derive(Clone, Debug, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<String>,
    #[serde(default = "default_true")]
    pub dump_fields: bool,
    #[serde(default = "default_report")]
    pub report: String,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: None, dump_fields: true, report: default_report() }
    }
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rfind('\n').map_or(before.len(), |p| before.len() - p - 1) + 1;
    (line, column)
}

fn parse_error(text: &str, e: toml::de::Error) -> IoError {
    let (line, column) = e.span().map_or((0, 0), |s| line_col(text, s.start));
    IoError::Parse { line, column, message: e.message().to_string() }
}

/// Parses and validates a configuration document against the built-in
/// forcing terms.
pub fn parse_config(text: &str) -> IoResult<ProblemConfig> {
    parse_config_with(text, &ForcingRegistry::builtin())
}

/// Parses and validates a configuration document; named forcing terms are
/// resolved in `registry`.
pub fn parse_config_with(text: &str, registry: &ForcingRegistry) -> IoResult<ProblemConfig> {
    let table: toml::Table = toml::from_str(text).map_err(|e| parse_error(text, e))?;
    for section in ["domain", "operator", "constraints", "nonlinearity"] {
        if !table.contains_key(section) {
            return Err(IoError::Validation(format!("missing [{section}] section")));
        }
    }
    let cfg: ProblemConfig = toml::from_str(text).map_err(|e| parse_error(text, e))?;
    cfg.validate(registry)?;
    Ok(cfg)
}

/// Reads and parses a configuration file.
pub fn read_config(path: &std::path::Path, registry: &ForcingRegistry) -> IoResult<ProblemConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| IoError::io(path, e))?;
    parse_config_with(&text, registry)
}

fn invalid(msg: impl Into<String>) -> IoError {
    IoError::Validation(msg.into())
}

fn need<'a, T>(v: &'a Option<T>, what: &str) -> IoResult<&'a T> {
    v.as_ref().ok_or_else(|| invalid(format!("missing `{what}`")))
}

fn check_len<T>(v: &[T], m: usize, what: &str) -> IoResult<()> {
    if v.len() != m {
        return Err(invalid(format!("{what} has {} entries, expected {m}", v.len())));
    }
    Ok(())
}

pub(crate) fn number_matrix(rows: &[Vec<f64>], m: usize, what: &str) -> IoResult<Mat> {
    if rows.len() != m || rows.iter().any(|r| r.len() != m) {
        return Err(invalid(format!("{what} must be a {m}x{m} array")));
    }
    let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
    Ok(Mat::from_rows(&refs))
}

impl ProblemConfig {
    pub fn dim(&self) -> usize {
        self.domain.dim
    }

    pub fn components(&self) -> usize {
        self.operator.components
    }

    /// Checks every section and the references between them.
    pub fn validate(&self, registry: &ForcingRegistry) -> IoResult<()> {
        let d = self.dim();
        let m = self.components();
        if d == 0 {
            return Err(invalid("domain.dim must be at least 1"));
        }
        if m == 0 {
            return Err(invalid("operator.components must be at least 1"));
        }
        if let Some(h) = self.domain.half_width {
            if !(h > 0.0) {
                return Err(invalid("domain.half_width must be positive"));
            }
        }
        if self.domain.n_per_axis.is_some() && self.domain.spacing.is_some() {
            return Err(invalid("give either domain.n_per_axis or domain.spacing, not both"));
        }
        self.coefficients()?;
        self.constraint_field()?;
        let nl = &self.nonlinearity;
        match (&nl.name, &nl.expression) {
            (Some(_), Some(_)) | (None, None) => {
                return Err(invalid("nonlinearity needs exactly one of `name` or `expression`"));
            }
            (Some(_), None) => {
                if nl.s.is_some() || nl.q.is_some() || nl.beta.is_some() || nl.c.is_some() {
                    return Err(invalid("s, q, beta and c are declared by named forcing terms; use `expression` to set them"));
                }
            }
            (None, Some(e)) => {
                check_len(e, m, "nonlinearity.expression")?;
                let s = nl.s.unwrap_or(1.0);
                let q = nl.q.unwrap_or(1.0);
                check_admissible(s, q, d).map_err(|e| invalid(format!("nonlinearity: {e}")))?;
                if !nl.params.is_empty() {
                    return Err(invalid("`params` belongs to named forcing terms"));
                }
            }
        }
        if let Some(t) = &self.truncation {
            if t.radii.is_some() == t.levels.is_some() {
                return Err(invalid("truncation needs exactly one of `radii` or `levels`"));
            }
            self.envelope()?;
        }
        self.forcing(registry)?;
        Ok(())
    }

    /// Grid for single-domain runs.
    pub fn grid(&self) -> IoResult<GridDomain> {
        let d = &self.domain;
        let r = *need(&d.half_width, "domain.half_width")?;
        let g = match (d.n_per_axis, d.spacing) {
            (Some(n), None) => GridDomain::new(d.dim, r, n),
            (None, Some(h)) => GridDomain::with_spacing(d.dim, r, h),
            _ => return Err(invalid("domain needs one of n_per_axis or spacing")),
        };
        g.map_err(|e| invalid(format!("domain: {e}")))
    }

    fn matrix_field(&self, rows: &MatrixSpec, what: &str) -> IoResult<MatrixField> {
        let (m, d) = (self.components(), self.dim());
        Ok(match expr::constant_matrix(rows, m, d, what)? {
            Some(a) => MatrixField::Constant(a),
            None => MatrixField::Variable(expr::matrix(rows, m, d, what)?),
        })
    }

    fn axis(&self, i: usize, what: &str) -> IoResult<usize> {
        if i == 0 || i > self.dim() {
            return Err(invalid(format!("{what}: axis {i} outside 1..={}", self.dim())));
        }
        Ok(i - 1)
    }

    pub fn coefficients(&self) -> IoResult<OperatorCoefficients> {
        let (m, d) = (self.components(), self.dim());
        let op = &self.operator;
        if op.diffusion.is_none() && op.a.is_empty() {
            return Err(invalid("operator needs `diffusion` or `a` entries"));
        }
        let mut c = OperatorCoefficients::new(d, m).with_upwind(op.upwind);
        if let Some(diff) = &op.diffusion {
            check_len(diff, m, "operator.diffusion")?;
            let field = match expr::constants(diff, d, "operator.diffusion")? {
                Some(v) => MatrixField::Constant(Mat::diag(&v)),
                None => {
                    let f = expr::vector(diff, d, "operator.diffusion")?;
                    MatrixField::Variable(Arc::new(move |x: &[f64]| {
                        let mut v = vec![0.0; m];
                        f(x, &mut v);
                        Mat::diag(&v)
                    }))
                }
            };
            for i in 0..d {
                c = c.with_a(i, i, field.clone());
            }
        }
        for e in &op.a {
            let what = format!("operator.a[{},{}]", e.i, e.j);
            let (i, j) = (self.axis(e.i, &what)?, self.axis(e.j, &what)?);
            if op.diffusion.is_some() && i == j {
                return Err(invalid(format!("{what} conflicts with `diffusion`")));
            }
            c = c.with_a(i, j, self.matrix_field(&e.matrix, &what)?);
        }
        for e in &op.drift {
            let what = format!("operator.drift[{}]", e.i);
            let i = self.axis(e.i, &what)?;
            c = c.with_drift(i, self.matrix_field(&e.matrix, &what)?);
        }
        if let Some(r) = &op.reaction {
            c = c.with_reaction(self.matrix_field(r, "operator.reaction")?);
        }
        Ok(c)
    }

    pub fn constraint_field(&self) -> IoResult<ConstraintField> {
        let (m, d) = (self.components(), self.dim());
        let s = &self.constraints;
        let allowed: &[&str] = match s.kind {
            ConstraintKind::Rectangle => &["lower", "upper"],
            ConstraintKind::Tube => &["center", "scale", "base"],
            ConstraintKind::Ellipsoid => &["shape", "det_floor"],
            ConstraintKind::Polyhedron => &["faces"],
            ConstraintKind::Ball => &["center", "radius"],
        };
        let present = [
            ("lower", s.lower.is_some()),
            ("upper", s.upper.is_some()),
            ("center", s.center.is_some()),
            ("scale", s.scale.is_some()),
            ("base", s.base.is_some()),
            ("shape", s.shape.is_some()),
            ("det_floor", s.det_floor.is_some()),
            ("faces", s.faces.is_some()),
            ("radius", s.radius.is_some()),
        ];
        for (key, set) in present {
            if set && !allowed.contains(&key) {
                return Err(invalid(format!("constraints: `{key}` does not apply to kind {:?}", s.kind)));
            }
        }
        let core_err = |e: coincide_core::Error| invalid(format!("constraints: {e}"));
        let field = match s.kind {
            ConstraintKind::Rectangle => {
                let lo = need(&s.lower, "constraints.lower")?;
                let hi = need(&s.upper, "constraints.upper")?;
                check_len(lo, m, "constraints.lower")?;
                check_len(hi, m, "constraints.upper")?;
                match (expr::constants(lo, d, "constraints.lower")?, expr::constants(hi, d, "constraints.upper")?) {
                    (Some(a), Some(b)) => ConstraintField::constant_rectangle(&a, &b).map_err(core_err)?,
                    _ => ConstraintField::rectangle(m, expr::vector(lo, d, "constraints.lower")?, expr::vector(hi, d, "constraints.upper")?),
                }
            }
            ConstraintKind::Tube => {
                let center = need(&s.center, "constraints.center")?;
                check_len(center, m, "constraints.center")?;
                let scale = expr::scalar(need(&s.scale, "constraints.scale")?, d, "constraints.scale")?;
                let base = match need(&s.base, "constraints.base")? {
                    TubeBaseSpec::Named(n) if n == "ball" => TubeBase::UnitBall,
                    TubeBaseSpec::Named(n) => return Err(invalid(format!("constraints.base: unknown base `{n}` (use \"ball\" or a table)"))),
                    TubeBaseSpec::Rectangle { lower, upper } => TubeBase::Rectangle { lower: lower.clone(), upper: upper.clone() },
                };
                ConstraintField::tube(m, expr::vector(center, d, "constraints.center")?, scale, base).map_err(core_err)?
            }
            ConstraintKind::Ellipsoid => {
                let shape = expr::matrix(need(&s.shape, "constraints.shape")?, m, d, "constraints.shape")?;
                ConstraintField::ellipsoid(m, shape, s.det_floor.unwrap_or(1e-12)).map_err(core_err)?
            }
            ConstraintKind::Polyhedron => {
                let faces = need(&s.faces, "constraints.faces")?;
                let mut hs = Vec::with_capacity(faces.len());
                for (k, f) in faces.iter().enumerate() {
                    check_len(&f.normal, m, &format!("constraints.faces[{k}].normal"))?;
                    hs.push(HalfSpace::new(f.normal.clone(), expr::scalar(&f.offset, d, &format!("constraints.faces[{k}].offset"))?));
                }
                ConstraintField::polyhedron(m, hs).map_err(core_err)?
            }
            ConstraintKind::Ball => {
                let center = need(&s.center, "constraints.center")?;
                check_len(center, m, "constraints.center")?;
                let center = expr::constants(center, d, "constraints.center")?
                    .ok_or_else(|| invalid("constraints.center of a ball must be constant"))?;
                let radius = *need(&s.radius, "constraints.radius")?;
                if !(radius > 0.0) {
                    return Err(invalid("constraints.radius must be positive"));
                }
                ConstraintField::constant_convex(Arc::new(Ball { center, radius }))
            }
        };
        if field.components() != m {
            return Err(invalid(format!("constraints have {} components, operator has {m}", field.components())));
        }
        Ok(match &s.envelope {
            Some(e) => field.with_envelope(expr::scalar(e, d, "constraints.envelope")?),
            None => field,
        })
    }

    /// Builds the forcing term, looking named terms up in `registry`.
    pub fn forcing(&self, registry: &ForcingRegistry) -> IoResult<ForcingTerm> {
        let (m, d) = (self.components(), self.dim());
        let nl = &self.nonlinearity;
        let term = match (&nl.name, &nl.expression) {
            (Some(name), None) => registry.build(name, d, m, &nl.params)?,
            (None, Some(srcs)) => {
                let scope = Scope::forcing(d, m);
                let es = srcs
                    .iter()
                    .enumerate()
                    .map(|(k, s)| Expr::compile(s, &scope, &format!("nonlinearity.expression[{k}]")))
                    .collect::<IoResult<Vec<_>>>()?;
                let beta = expr::scalar(nl.beta.as_ref().unwrap_or(&Term::Num(0.0)), d, "nonlinearity.beta")?;
                let eval: ForcingFn = Arc::new(move |x, u, xi, out| {
                    let mut vals = Vec::with_capacity(d + m + m * d);
                    vals.extend_from_slice(&x[..d]);
                    vals.extend_from_slice(u);
                    vals.extend_from_slice(xi);
                    for (o, e) in out.iter_mut().zip(&es) {
                        *o = e.eval(&vals);
                    }
                });
                ForcingTerm::new("expression", d, m, nl.s.unwrap_or(1.0), nl.q.unwrap_or(1.0), beta, nl.c.unwrap_or(1.0), eval)
                    .map_err(|e| invalid(format!("nonlinearity: {e}")))?
            }
            _ => return Err(invalid("nonlinearity needs exactly one of `name` or `expression`")),
        };
        if term.components() != m || term.dim() != d {
            return Err(invalid(format!("forcing `{}` has {} components, operator has {m}", term.name(), term.components())));
        }
        Ok(term)
    }

    pub fn solver_config(&self) -> SolverConfig {
        let s = &self.solver;
        let mut c = SolverConfig::default();
        if let Some(v) = &s.h_schedule {
            c.h_schedule = Some(v.clone());
        }
        if let Some(v) = &s.h_factors {
            c.h_factors = v.clone();
        }
        macro_rules! copy {
            ($($f:ident),*) => { $( if let Some(v) = s.$f { c.$f = v; } )* };
        }
        copy!(
            max_iters,
            tol_fp,
            tol_res,
            damping,
            adaptive_damping,
            homotopy_steps,
            l_retract,
            override_invariance,
            override_tangency,
            invariance_samples,
            tangency_samples,
            seed,
            divergence_factor
        );
        c
    }

    pub fn envelope(&self) -> IoResult<Envelope> {
        let t = need(&self.truncation, "[truncation] section")?;
        let e = &t.envelope;
        if !(e.amplitude > 0.0) {
            return Err(invalid("truncation.envelope.amplitude must be positive"));
        }
        Ok(match e.kind {
            EnvelopeKind::SeparableExp => {
                let rate = *need(&e.rate, "truncation.envelope.rate")?;
                if !(rate > 0.0) || e.width.is_some() {
                    return Err(invalid("separable_exp envelope takes a positive `rate` only"));
                }
                Envelope::SeparableExp { amplitude: e.amplitude, rate }
            }
            EnvelopeKind::Gaussian => {
                let width = *need(&e.width, "truncation.envelope.width")?;
                if !(width > 0.0) || e.rate.is_some() {
                    return Err(invalid("gaussian envelope takes a positive `width` only"));
                }
                Envelope::Gaussian { amplitude: e.amplitude, width }
            }
        })
    }

    pub fn schedule(&self) -> IoResult<TruncationSchedule> {
        let t = need(&self.truncation, "[truncation] section")?;
        let spacing = *need(&self.domain.spacing, "domain.spacing (required by truncation)")?;
        let radii = match (&t.radii, t.levels) {
            (Some(r), None) => r.clone(),
            (None, Some(n)) => (1..=n).map(|k| k as f64).collect(),
            _ => return Err(invalid("truncation needs exactly one of `radii` or `levels`")),
        };
        Ok(TruncationSchedule { radii, spacing, probes: t.probes.clone(), tol_cauchy: t.tol_cauchy })
    }

    pub fn problem(&self, registry: &ForcingRegistry) -> IoResult<Problem> {
        Ok(Problem {
            coeffs: self.coefficients()?,
            constraint: self.constraint_field()?,
            forcing: self.forcing(registry)?,
            envelope: self.envelope()?,
        })
    }

    /// The configuration as JSON, for report headers.
    pub fn echo(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("configuration serializes")
    }
}
