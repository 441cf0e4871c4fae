//! Scenario files: named objects in a fixed dimension plus a task list.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use supercurrents::builtins::{instantiate, BuiltinParams};
use supercurrents::calculus::ddsharp;
use supercurrents::currents::{tropical_ddsharp, Current, Patch, SmoothCurrent, SubmanifoldCurrent};
use supercurrents::exterior::{beta_power, parse_superform};
use supercurrents::lelong::Weight;
use supercurrents::{Error, FieldSpec, Result, ScalarField, Superform};

use crate::tasks::Task;

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub name: String,
    pub n: usize,
    #[serde(default)]
    pub fields: BTreeMap<String, FieldRef>,
    #[serde(default)]
    pub forms: BTreeMap<String, FormSpec>,
    #[serde(default)]
    pub currents: BTreeMap<String, CurrentSpec>,
    #[serde(default)]
    pub weights: BTreeMap<String, WeightSpec>,
    #[serde(default)]
    pub tasks: Vec<Task>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BuiltinRef {
    pub name: String,
    #[serde(default)]
    pub params: BuiltinParams,
}

/// A field given by name, as an inline spec, or as a builtin.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FieldRef {
    Name(String),
    Builtin { builtin: BuiltinRef },
    Spec(FieldSpec),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum FormSpec {
    /// One `coeff * dx[K] ^ dxi[L]` term per line; coefficients are field names or polynomials.
    Text(String),
    BetaPower {
        k: usize,
        #[serde(default)]
        coeff: Option<String>,
    },
    /// `(dd# f)^power`, power defaulting to 1.
    Ddsharp {
        field: FieldRef,
        #[serde(default)]
        power: Option<usize>,
    },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum CurrentSpec {
    Smooth { form: String },
    Submanifold { rho: Vec<String>, mesh: Patch },
    Plane { origin: Vec<f64>, span: Vec<Vec<f64>>, half_width: f64 },
    Sphere { center: Vec<f64>, radius: f64 },
    Catenoid { neck: f64, height: f64 },
    Tropical { f: FieldRef },
    Builtin(BuiltinRef),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum WeightSpec {
    /// `|x - center|^2`.
    Euclidean(Vec<f64>),
    Field(FieldRef),
}

/// Scenario objects built in dimension `n`.
#[derive(Clone, Debug)]
pub struct Objects {
    pub n: usize,
    pub fields: BTreeMap<String, ScalarField>,
    pub forms: BTreeMap<String, Superform<ScalarField>>,
    pub currents: BTreeMap<String, Current>,
    pub weights: BTreeMap<String, Weight>,
}

fn ctx(kind: &str, name: &str, e: Error) -> Error {
    Error::Invalid(format!("{kind} '{name}': {e}"))
}

fn missing(kind: &str, name: &str) -> Error {
    Error::Invalid(format!("unknown {kind} '{name}'"))
}

impl Objects {
    pub fn build(s: &Scenario) -> Result<Self> {
        let n = s.n;
        if n == 0 || n > 8 {
            return Err(Error::Dimension(format!("scenario dimension must be in 1..=8, got {n}")));
        }
        let mut o = Objects { n, fields: BTreeMap::new(), forms: BTreeMap::new(), currents: BTreeMap::new(), weights: BTreeMap::new() };
        for (name, f) in &s.fields {
            if let FieldRef::Name(other) = f {
                return Err(Error::Invalid(format!("field '{name}' aliases '{other}'; give a spec instead")));
            }
            let built = o.field(f).map_err(|e| ctx("field", name, e))?;
            o.fields.insert(name.clone(), built);
        }
        for (name, f) in &s.forms {
            let built = o.form_from_spec(f).map_err(|e| ctx("form", name, e))?;
            o.forms.insert(name.clone(), built);
        }
        for (name, c) in &s.currents {
            let built = o.current_from_spec(c).map_err(|e| ctx("current", name, e))?;
            if built.n() != n {
                return Err(Error::Dimension(format!("current '{name}' lives in dimension {}, scenario has n = {n}", built.n())));
            }
            o.currents.insert(name.clone(), built);
        }
        for (name, w) in &s.weights {
            let built = match w {
                WeightSpec::Euclidean(a) => {
                    if a.len() != n {
                        return Err(Error::Dimension(format!("weight '{name}' has a center of length {}", a.len())));
                    }
                    Weight::euclidean(a)
                }
                WeightSpec::Field(f) => o.field(f).and_then(Weight::new),
            }
            .map_err(|e| ctx("weight", name, e))?;
            o.weights.insert(name.clone(), built);
        }
        Ok(o)
    }

    /// Resolves a field reference; bare strings that are not declared names parse as polynomials.
    pub fn field(&self, f: &FieldRef) -> Result<ScalarField> {
        let out = match f {
            FieldRef::Name(s) => match self.fields.get(s) {
                Some(v) => v.clone(),
                None => ScalarField::parse_poly(self.n, s)?,
            },
            FieldRef::Builtin { builtin } => instantiate(&builtin.name, self.n, &builtin.params)?.into_field()?,
            FieldRef::Spec(spec) => spec.build(self.n)?,
        };
        if out.n() != self.n {
            return Err(Error::Dimension(format!("field has dimension {}, scenario has n = {}", out.n(), self.n)));
        }
        Ok(out)
    }

    fn coeff(&self, s: &str) -> Result<ScalarField> {
        self.field(&FieldRef::Name(s.to_string()))
    }

    fn form_from_spec(&self, f: &FormSpec) -> Result<Superform<ScalarField>> {
        let n = self.n;
        match f {
            FormSpec::Text(text) => parse_superform(n, text, |c| self.coeff(c)),
            FormSpec::BetaPower { k, coeff } => {
                if *k > n {
                    return Err(Error::Invalid(format!("beta power {k} exceeds n = {n}")));
                }
                let b = beta_power(n, *k);
                match coeff {
                    Some(c) => Ok(b.scale(&self.coeff(c)?)),
                    None => Ok(b),
                }
            }
            FormSpec::Ddsharp { field, power } => ddsharp(&Superform::scalar(n, self.field(field)?))?.pow(power.unwrap_or(1)),
        }
    }

    fn current_from_spec(&self, c: &CurrentSpec) -> Result<Current> {
        Ok(match c {
            CurrentSpec::Smooth { form } => Current::Smooth(SmoothCurrent::new(self.form(form)?.clone())),
            CurrentSpec::Submanifold { rho, mesh } => {
                let rho = rho.iter().map(|r| self.coeff(r)).collect::<Result<Vec<_>>>()?;
                Current::Submanifold(SubmanifoldCurrent::new(rho, mesh.clone())?)
            }
            CurrentSpec::Plane { origin, span, half_width } => {
                Current::Submanifold(SubmanifoldCurrent::plane(origin.clone(), span.clone(), *half_width)?)
            }
            CurrentSpec::Sphere { center, radius } => Current::Submanifold(SubmanifoldCurrent::sphere(center.clone(), *radius)?),
            CurrentSpec::Catenoid { neck, height } => Current::Submanifold(SubmanifoldCurrent::catenoid(*neck, *height)?),
            CurrentSpec::Tropical { f } => match self.field(f)? {
                ScalarField::MaxAffine(m) => Current::Tropical(tropical_ddsharp(&m)?),
                _ => return Err(Error::Invalid("tropical currents need a maxaffine field".into())),
            },
            CurrentSpec::Builtin(b) => instantiate(&b.name, self.n, &b.params)?.into_current()?,
        })
    }

    pub fn form(&self, name: &str) -> Result<&Superform<ScalarField>> {
        self.forms.get(name).ok_or_else(|| missing("form", name))
    }

    pub fn current(&self, name: &str) -> Result<&Current> {
        self.currents.get(name).ok_or_else(|| missing("current", name))
    }

    pub fn smooth(&self, name: &str) -> Result<&SmoothCurrent> {
        match self.current(name)? {
            Current::Smooth(t) => Ok(t),
            _ => Err(Error::Invalid(format!("current '{name}' must be smooth"))),
        }
    }

    pub fn submanifold(&self, name: &str) -> Result<&SubmanifoldCurrent> {
        match self.current(name)? {
            Current::Submanifold(t) => Ok(t),
            _ => Err(Error::Invalid(format!("current '{name}' must be a submanifold current"))),
        }
    }

    pub fn weight(&self, name: &str) -> Result<&Weight> {
        self.weights.get(name).ok_or_else(|| missing("weight", name))
    }

    pub fn point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n {
            return Err(Error::Dimension(format!("point {x:?} has length {}, scenario has n = {}", x.len(), self.n)));
        }
        Ok(())
    }
}
