//! Named forcing terms selectable from configuration files.
//!
//! The built-in entries are `zero`, `constant`, `logistic`, `lotka_volterra`,
//! `linear`, `relaxed` and `manufactured`. Applications add their own with
//! [`ForcingRegistry::register`]; a builder receives the `[nonlinearity.params]`
//! table verbatim.

use std::collections::BTreeMap;
use std::sync::Arc;

use coincide_core::ForcingTerm;
use serde::de::DeserializeOwned;
use serde::Deserialize;

use crate::config::number_matrix;
use crate::error::{IoError, IoResult};
use crate::expr::{self, Term};

/// What a builder gets to work with.
pub struct ForcingRequest<'a> {
    pub dim: usize,
    pub components: usize,
    pub params: &'a toml::Table,
}

pub type ForcingBuilder = Arc<dyn Fn(&ForcingRequest<'_>) -> IoResult<ForcingTerm> + Send + Sync>;

#[derive(Clone)]
pub struct ForcingRegistry {
    builders: BTreeMap<String, ForcingBuilder>,
}

impl Default for ForcingRegistry {
    fn default() -> Self {
        Self::builtin()
    }
}

/// Deserializes `params` into `P`, rejecting unknown keys.
pub fn params<P: DeserializeOwned>(name: &str, params: &toml::Table) -> IoResult<P> {
    toml::Value::Table(params.clone())
        .try_into()
        .map_err(|e: toml::de::Error| IoError::Validation(format!("nonlinearity `{name}` params: {}", e.message())))
}

fn core(name: &str) -> impl Fn(coincide_core::Error) -> IoError + '_ {
    move |e| IoError::Validation(format!("nonlinearity `{name}`: {e}"))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Empty {}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ConstantParams {
    value: Vec<f64>,
}

fn default_mu() -> f64 {
    1.0
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LogisticParams {
    #[serde(default = "default_mu")]
    mu: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LotkaVolterraParams {
    rates: Vec<f64>,
    interaction: Vec<Vec<f64>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LinearParams {
    matrix: Vec<Vec<f64>>,
    #[serde(default)]
    offset: Option<Vec<f64>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RelaxedParams {
    weight: Term,
    target: Vec<f64>,
    weight_sup: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ManufacturedParams {
    source: Vec<Term>,
    sup: f64,
}

fn expect_components(name: &str, got: usize, want: usize) -> IoResult<()> {
    if got != want {
        return Err(IoError::Validation(format!("nonlinearity `{name}` has {got} components, operator has {want}")));
    }
    Ok(())
}

impl ForcingRegistry {
    /// An empty registry.
    pub fn empty() -> Self {
        Self { builders: BTreeMap::new() }
    }

    /// The built-in forcing terms.
    pub fn builtin() -> Self {
        let mut r = Self::empty();
        r.register("zero", |q| {
            params::<Empty>("zero", q.params)?;
            Ok(ForcingTerm::zero(q.dim, q.components))
        });
        r.register("constant", |q| {
            let p: ConstantParams = params("constant", q.params)?;
            expect_components("constant", p.value.len(), q.components)?;
            ForcingTerm::constant(q.dim, &p.value).map_err(core("constant"))
        });
        r.register("logistic", |q| {
            let p: LogisticParams = params("logistic", q.params)?;
            ForcingTerm::logistic(q.dim, q.components, p.mu).map_err(core("logistic"))
        });
        r.register("lotka_volterra", |q| {
            let p: LotkaVolterraParams = params("lotka_volterra", q.params)?;
            expect_components("lotka_volterra", p.rates.len(), q.components)?;
            let a = number_matrix(&p.interaction, q.components, "lotka_volterra interaction")?;
            ForcingTerm::lotka_volterra(q.dim, &p.rates, a).map_err(core("lotka_volterra"))
        });
        r.register("linear", |q| {
            let p: LinearParams = params("linear", q.params)?;
            let l = number_matrix(&p.matrix, q.components, "linear matrix")?;
            let g = p.offset.unwrap_or_else(|| vec![0.0; q.components]);
            expect_components("linear", g.len(), q.components)?;
            ForcingTerm::linear(q.dim, l, &g).map_err(core("linear"))
        });
        r.register("relaxed", |q| {
            let p: RelaxedParams = params("relaxed", q.params)?;
            expect_components("relaxed", p.target.len(), q.components)?;
            let g = expr::scalar(&p.weight, q.dim, "relaxed weight")?;
            ForcingTerm::relaxed_source(q.dim, g, &p.target, p.weight_sup).map_err(core("relaxed"))
        });
        r.register("manufactured", |q| {
            let p: ManufacturedParams = params("manufactured", q.params)?;
            expect_components("manufactured", p.source.len(), q.components)?;
            let src = expr::vector(&p.source, q.dim, "manufactured source")?;
            ForcingTerm::manufactured(q.dim, q.components, src, p.sup).map_err(core("manufactured"))
        });
        r
    }

    /// Adds or replaces the builder for `name`.
    pub fn register(
        &mut self,
        name: impl Into<String>,
        builder: impl Fn(&ForcingRequest<'_>) -> IoResult<ForcingTerm> + Send + Sync + 'static,
    ) {
        self.builders.insert(name.into(), Arc::new(builder));
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.builders.keys().map(|s| s.as_str())
    }

    pub fn contains(&self, name: &str) -> bool {
        self.builders.contains_key(name)
    }

    pub fn build(&self, name: &str, dim: usize, components: usize, params: &toml::Table) -> IoResult<ForcingTerm> {
        let b = self.builders.get(name).ok_or_else(|| {
            let known: Vec<&str> = self.names().collect();
            IoError::Validation(format!("unknown nonlinearity `{name}` (known: {})", known.join(", ")))
        })?;
        b(&ForcingRequest { dim, components, params })
    }
}
