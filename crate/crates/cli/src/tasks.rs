//! Task arguments and their dispatch to the library.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use supercurrents::calculus::{integrate, QuadratureSpec, Region};
use supercurrents::currents::{default_battery, minimality_residual, superhessian_product, MeasureEstimate};
use supercurrents::degree::{
    degree, growth_link_check, strip_experiment, verify_comparison_infinity, verify_comparison_local, weighted_degree,
    DegreeOptions,
};
use supercurrents::lelong::{
    concave_lower_bound, jensen_terms, lelong_at, lelong_number, m_lelong_number, t5_integrability_diagnostic, Declared,
    LelongOptions, LelongReport,
};
use supercurrents::positivity::{
    check_eq1, form_is_m_positive, form_is_positive_sampled, form_is_weakly_positive, is_m_convex, sample_points,
    PositivityVerdict, Sampler,
};
use supercurrents::{Error, Poly, Result};

use crate::scenario::{FieldRef, Objects};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Task {
    pub id: String,
    #[serde(flatten)]
    pub op: Op,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "op", content = "args", rename_all = "snake_case")]
pub enum Op {
    CheckEq1(CheckEq1Args),
    Positivity(PositivityArgs),
    MConvexity(MConvexityArgs),
    Integrate(IntegrateArgs),
    Mass(MassArgs),
    Pair(PairArgs),
    Superhessian(SuperhessianArgs),
    Minimality(MinimalityArgs),
    Jensen(JensenArgs),
    Lelong(LelongArgs),
    LelongAt(LelongAtArgs),
    MLelong(MLelongArgs),
    ConcaveLowerBound(ConcaveLowerBoundArgs),
    T5(T5Args),
    Degree(DegreeArgs),
    ComparisonLocal(ComparisonLocalArgs),
    ComparisonInfinity(ComparisonInfinityArgs),
    GrowthLink(GrowthLinkArgs),
    Strip(StripArgs),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum RegionSpec {
    Ball { center: Vec<f64>, radius: f64 },
    Box { lo: Vec<f64>, hi: Vec<f64> },
    /// `{phi < r}` for a declared weight.
    Sublevel { weight: String, r: f64 },
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpectValue {
    pub value: f64,
    pub tol: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Cone {
    Weak,
    Positive,
    MPositive,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckEq1Args {
    pub count: usize,
    pub degree: u32,
    pub terms: usize,
    #[serde(default)]
    pub k: Option<usize>,
    pub seed: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PositivityArgs {
    pub form: String,
    pub cone: Cone,
    pub point: Vec<f64>,
    #[serde(default)]
    pub m: Option<usize>,
    #[serde(default)]
    pub sampler: Option<Sampler>,
    #[serde(default)]
    pub expect: Option<bool>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MConvexityArgs {
    pub field: FieldRef,
    pub m: usize,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub count: usize,
    pub seed: u64,
    #[serde(default)]
    pub expect: Option<bool>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegrateArgs {
    pub form: String,
    pub region: RegionSpec,
    pub quad: QuadratureSpec,
    #[serde(default)]
    pub expect: Option<ExpectValue>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MassArgs {
    pub current: String,
    pub region: RegionSpec,
    pub quad: QuadratureSpec,
    #[serde(default)]
    pub trace: bool,
    #[serde(default)]
    pub expect: Option<ExpectValue>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairArgs {
    pub current: String,
    pub test: String,
    pub region: RegionSpec,
    pub quad: QuadratureSpec,
    #[serde(default)]
    pub expect: Option<ExpectValue>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuperhessianArgs {
    pub current: String,
    pub m: usize,
    pub fields: Vec<FieldRef>,
    pub test: String,
    pub region: RegionSpec,
    pub quad: QuadratureSpec,
    pub eps: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MinimalityArgs {
    pub current: String,
    pub resolution: usize,
    #[serde(default)]
    pub max_residual: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JensenArgs {
    pub current: String,
    pub weight: String,
    pub r1: f64,
    pub r2: f64,
    pub quad: QuadratureSpec,
    #[serde(default)]
    pub max_relative_residual: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LelongArgs {
    pub current: String,
    pub weight: String,
    pub radii: Vec<f64>,
    pub quad: QuadratureSpec,
    #[serde(default)]
    pub declared: Declared,
    #[serde(default)]
    pub sampler: Option<Sampler>,
    #[serde(default)]
    pub spot_points: Option<usize>,
    #[serde(default)]
    pub require_limit: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LelongAtArgs {
    pub current: String,
    pub center: Vec<f64>,
    pub radii: Vec<f64>,
    pub quad: QuadratureSpec,
    #[serde(default)]
    pub expect_monotone: Option<bool>,
    #[serde(default)]
    pub require_limit: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MLelongArgs {
    pub current: String,
    pub center: Vec<f64>,
    pub m: usize,
    pub radii: Vec<f64>,
    pub quad: QuadratureSpec,
    #[serde(default)]
    pub expect_limit_exists: Option<bool>,
    #[serde(default)]
    pub require_limit: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConcaveLowerBoundArgs {
    pub current: String,
    pub center: Vec<f64>,
    pub r0: f64,
    pub radii: Vec<f64>,
    pub quad: QuadratureSpec,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct T5Args {
    pub current: String,
    pub weight: String,
    pub radii: Vec<f64>,
    pub quad: QuadratureSpec,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DegreeArgs {
    pub current: String,
    #[serde(default)]
    pub weight: Option<FieldRef>,
    pub radii: Vec<f64>,
    pub quad: QuadratureSpec,
    pub seed: u64,
    #[serde(default)]
    pub rel_tol: Option<f64>,
    #[serde(default)]
    pub expect: Option<ExpectValue>,
    #[serde(default)]
    pub require_converged: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComparisonLocalArgs {
    pub current: String,
    pub phi: String,
    pub psi: String,
    #[serde(default)]
    pub l: Option<f64>,
    pub radii: Vec<f64>,
    pub quad: QuadratureSpec,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComparisonInfinityArgs {
    pub current: String,
    pub us: Vec<FieldRef>,
    pub vs: Vec<FieldRef>,
    #[serde(default)]
    pub l: Option<Vec<f64>>,
    pub r: f64,
    pub quad: QuadratureSpec,
    pub eps: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GrowthLinkArgs {
    pub current: String,
    #[serde(default)]
    pub declared: Declared,
    pub radii: Vec<f64>,
    pub quad: QuadratureSpec,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StripArgs {
    pub current: String,
    pub k: usize,
    pub delta: f64,
    pub radii: Vec<f64>,
    pub quad: QuadratureSpec,
    #[serde(default)]
    pub expect_bounded: Option<bool>,
}

/// Numeric side table written as CSV.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub header: [&'static str; 3],
    pub rows: Vec<[f64; 3]>,
}

impl Table {
    fn from_estimates(header: [&'static str; 3], r: &[f64], v: &[MeasureEstimate]) -> Self {
        Table { header, rows: r.iter().zip(v).map(|(r, e)| [*r, e.value, e.stderr]).collect() }
    }

    pub fn to_csv(&self) -> String {
        let mut s = self.header.join(",");
        s.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|v| Value::from(*v).to_string()).collect();
            s.push_str(&cells.join(","));
            s.push('\n');
        }
        s
    }
}

#[derive(Clone, Debug)]
pub struct Outcome {
    pub result: Value,
    pub passed: bool,
    /// Set when the computed sequence fails to settle; the result holds the diagnostics.
    pub diverged: Option<String>,
    pub table: Option<Table>,
}

impl Outcome {
    fn new<T: Serialize>(result: &T, passed: bool) -> Result<Self> {
        let result = serde_json::to_value(result).map_err(|e| Error::Invalid(format!("cannot serialize report: {e}")))?;
        Ok(Outcome { result, passed, diverged: None, table: None })
    }

    fn diverged_if(mut self, cond: bool, why: &str) -> Self {
        if cond {
            self.diverged = Some(why.to_string());
        }
        self
    }

    fn with_table(mut self, t: Table) -> Self {
        self.table = Some(t);
        self
    }
}

const NO_LIMIT: &str = "values blow up as r -> 0; the limit does not exist";

fn lelong_table(rep: &LelongReport) -> Table {
    Table::from_estimates(["r", "nu", "stderr"], &rep.r_grid, &rep.nu)
}

fn within(expect: Option<ExpectValue>, value: f64) -> bool {
    expect.is_none_or(|e| (value - e.value).abs() <= e.tol)
}

fn verdict_matches(expect: Option<bool>, v: &PositivityVerdict) -> bool {
    expect.is_none_or(|want| want != v.is_false())
}

fn require_sampler(s: Option<Sampler>, what: &str) -> Result<Sampler> {
    s.ok_or_else(|| Error::Invalid(format!("{what} needs an explicit sampler {{samples, seed}}")))
}

impl Op {
    pub fn name(&self) -> &'static str {
        match self {
            Op::CheckEq1(_) => "check_eq1",
            Op::Positivity(_) => "positivity",
            Op::MConvexity(_) => "m_convexity",
            Op::Integrate(_) => "integrate",
            Op::Mass(_) => "mass",
            Op::Pair(_) => "pair",
            Op::Superhessian(_) => "superhessian",
            Op::Minimality(_) => "minimality",
            Op::Jensen(_) => "jensen",
            Op::Lelong(_) => "lelong",
            Op::LelongAt(_) => "lelong_at",
            Op::MLelong(_) => "m_lelong",
            Op::ConcaveLowerBound(_) => "concave_lower_bound",
            Op::T5(_) => "t5",
            Op::Degree(_) => "degree",
            Op::ComparisonLocal(_) => "comparison_local",
            Op::ComparisonInfinity(_) => "comparison_infinity",
            Op::GrowthLink(_) => "growth_link",
            Op::Strip(_) => "strip",
        }
    }

    /// Quadrature parameters used by the task, if any.
    pub fn quadrature(&self) -> Option<&QuadratureSpec> {
        match self {
            Op::CheckEq1(_) | Op::Positivity(_) | Op::MConvexity(_) | Op::Minimality(_) => None,
            Op::Integrate(a) => Some(&a.quad),
            Op::Mass(a) => Some(&a.quad),
            Op::Pair(a) => Some(&a.quad),
            Op::Superhessian(a) => Some(&a.quad),
            Op::Jensen(a) => Some(&a.quad),
            Op::Lelong(a) => Some(&a.quad),
            Op::LelongAt(a) => Some(&a.quad),
            Op::MLelong(a) => Some(&a.quad),
            Op::ConcaveLowerBound(a) => Some(&a.quad),
            Op::T5(a) => Some(&a.quad),
            Op::Degree(a) => Some(&a.quad),
            Op::ComparisonLocal(a) => Some(&a.quad),
            Op::ComparisonInfinity(a) => Some(&a.quad),
            Op::GrowthLink(a) => Some(&a.quad),
            Op::Strip(a) => Some(&a.quad),
        }
    }

    /// Resolves every reference and checks point dimensions without running anything.
    pub fn validate(&self, o: &Objects) -> Result<()> {
        match self {
            Op::CheckEq1(a) => {
                if let Some(k) = a.k {
                    if k == 0 || k > o.n {
                        return Err(Error::Invalid(format!("k must lie in 1..={}", o.n)));
                    }
                }
                if a.degree > 3 {
                    return Err(Error::Invalid("check_eq1 supports degree <= 3".into()));
                }
            }
            Op::Positivity(a) => {
                o.form(&a.form)?;
                o.point(&a.point)?;
                match a.cone {
                    Cone::MPositive if a.m.is_none() => return Err(Error::Invalid("m_positive needs m".into())),
                    Cone::Weak | Cone::Positive => {
                        require_sampler(a.sampler, "a sampled cone test")?;
                    }
                    _ => {}
                }
            }
            Op::MConvexity(a) => {
                o.field(&a.field)?;
                o.point(&a.lo)?;
                o.point(&a.hi)?;
            }
            Op::Integrate(a) => {
                o.form(&a.form)?;
                self.region(&a.region, o)?;
            }
            Op::Mass(a) => {
                o.current(&a.current)?;
                self.region(&a.region, o)?;
            }
            Op::Pair(a) => {
                o.current(&a.current)?;
                o.form(&a.test)?;
                self.region(&a.region, o)?;
            }
            Op::Superhessian(a) => {
                o.smooth(&a.current)?;
                o.form(&a.test)?;
                for f in &a.fields {
                    o.field(f)?;
                }
                self.region(&a.region, o)?;
            }
            Op::Minimality(a) => {
                o.submanifold(&a.current)?;
            }
            Op::Jensen(a) => {
                o.smooth(&a.current)?;
                o.weight(&a.weight)?;
            }
            Op::Lelong(a) => {
                o.current(&a.current)?;
                o.weight(&a.weight)?;
                if a.declared != Declared::Undeclared {
                    require_sampler(a.sampler, "a declared hypothesis")?;
                }
            }
            Op::LelongAt(a) => {
                o.current(&a.current)?;
                o.point(&a.center)?;
            }
            Op::MLelong(a) => {
                o.current(&a.current)?;
                o.point(&a.center)?;
            }
            Op::ConcaveLowerBound(a) => {
                o.smooth(&a.current)?;
                o.point(&a.center)?;
            }
            Op::T5(a) => {
                o.smooth(&a.current)?;
                o.weight(&a.weight)?;
            }
            Op::Degree(a) => {
                o.current(&a.current)?;
                if let Some(w) = &a.weight {
                    o.field(w)?;
                }
            }
            Op::ComparisonLocal(a) => {
                o.current(&a.current)?;
                o.weight(&a.phi)?;
                o.weight(&a.psi)?;
            }
            Op::ComparisonInfinity(a) => {
                o.current(&a.current)?;
                for f in a.us.iter().chain(&a.vs) {
                    o.field(f)?;
                }
            }
            Op::GrowthLink(a) => {
                o.smooth(&a.current)?;
            }
            Op::Strip(a) => {
                o.current(&a.current)?;
            }
        }
        Ok(())
    }

    fn region(&self, r: &RegionSpec, o: &Objects) -> Result<Region> {
        match r {
            RegionSpec::Ball { center, radius } => {
                o.point(center)?;
                Region::ball(center.clone(), *radius)
            }
            RegionSpec::Box { lo, hi } => {
                o.point(lo)?;
                o.point(hi)?;
                Ok(Region::Box { lo: lo.clone(), hi: hi.clone() })
            }
            RegionSpec::Sublevel { weight, r } => Ok(o.weight(weight)?.sublevel(*r)),
        }
    }

    pub fn execute(&self, o: &Objects) -> Result<Outcome> {
        self.validate(o)?;
        match self {
            Op::CheckEq1(a) => {
                let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
                let ks: Vec<usize> = match a.k {
                    Some(k) => vec![k],
                    None => (1..=o.n).collect(),
                };
                let mut checks = Vec::new();
                for index in 0..a.count {
                    let u = Poly::random(o.n, a.degree, a.terms, &mut rng);
                    for &k in &ks {
                        checks.push(json!({ "index": index, "u": u.to_string(), "k": k, "exact_equal": check_eq1(&u, k)? }));
                    }
                }
                let all = checks.iter().all(|c| c["exact_equal"] == Value::Bool(true));
                Outcome::new(&json!({ "n": o.n, "checks": checks, "all_exact_equal": all }), all)
            }
            Op::Positivity(a) => {
                let form = o.form(&a.form)?;
                let v = match a.cone {
                    Cone::MPositive => form_is_m_positive(form, &a.point, a.m.expect("validated"))?,
                    Cone::Weak | Cone::Positive => {
                        let at = supercurrents::calculus::eval_form(form, &a.point)?;
                        let s = require_sampler(a.sampler, "a sampled cone test")?;
                        if a.cone == Cone::Weak {
                            form_is_weakly_positive(&at, s)?
                        } else {
                            form_is_positive_sampled(&at, s)?
                        }
                    }
                };
                let ok = verdict_matches(a.expect, &v);
                Outcome::new(&v, ok)
            }
            Op::MConvexity(a) => {
                let f = o.field(&a.field)?;
                let pts = sample_points(&a.lo, &a.hi, a.count, a.seed, None);
                let v = is_m_convex(&f, &pts, a.m)?;
                let ok = verdict_matches(a.expect, &v);
                Outcome::new(&v, ok)
            }
            Op::Integrate(a) => {
                let e = integrate(o.form(&a.form)?, &self.region(&a.region, o)?, &a.quad)?;
                Outcome::new(&e, within(a.expect, e.value))
            }
            Op::Mass(a) => {
                let t = o.current(&a.current)?;
                let region = self.region(&a.region, o)?;
                let e = if a.trace { t.trace_mass(&region, &a.quad)? } else { t.mass(&region, &a.quad)? };
                Outcome::new(&e, within(a.expect, e.value))
            }
            Op::Pair(a) => {
                let e = o.current(&a.current)?.pair(o.form(&a.test)?, &self.region(&a.region, o)?, &a.quad)?;
                Outcome::new(&e, within(a.expect, e.value))
            }
            Op::Superhessian(a) => {
                let us = a.fields.iter().map(|f| o.field(f)).collect::<Result<Vec<_>>>()?;
                let rep = superhessian_product(
                    o.smooth(&a.current)?,
                    a.m,
                    &us,
                    o.form(&a.test)?,
                    &self.region(&a.region, o)?,
                    &a.quad,
                    &a.eps,
                    None,
                )?;
                let diverged = !rep.cauchy_ok;
                Ok(Outcome::new(&rep, true)?.diverged_if(diverged, "mollified values are not Cauchy along the eps schedule"))
            }
            Op::Minimality(a) => {
                let m = o.submanifold(&a.current)?;
                let battery = default_battery(m);
                let r = minimality_residual(m, &battery, a.resolution)?;
                let ok = a.max_residual.is_none_or(|max| r <= max);
                Outcome::new(&json!({ "residual": r, "battery": battery, "resolution": a.resolution }), ok)
            }
            Op::Jensen(a) => {
                let j = jensen_terms(o.smooth(&a.current)?, o.weight(&a.weight)?, a.r1, a.r2, &a.quad)?;
                let ok = a.max_relative_residual.is_none_or(|m| j.relative_residual <= m);
                Outcome::new(&j, ok)
            }
            Op::Lelong(a) => {
                let mut opts = LelongOptions::declared(a.declared);
                if let Some(s) = a.sampler {
                    opts.sampler = s;
                }
                if let Some(k) = a.spot_points {
                    opts.spot_points = k;
                }
                let rep = lelong_number(o.current(&a.current)?, o.weight(&a.weight)?, &a.radii, &a.quad, &opts)?;
                let ok = a.declared == Declared::Undeclared || a.declared == Declared::Concave || rep.monotone_ok;
                let diverged = a.require_limit && rep.limit_exists == Some(false);
                Ok(Outcome::new(&rep, ok)?.with_table(lelong_table(&rep)).diverged_if(diverged, NO_LIMIT))
            }
            Op::LelongAt(a) => {
                let rep = lelong_at(o.current(&a.current)?, &a.center, &a.radii, &a.quad)?;
                let ok = a.expect_monotone.is_none_or(|m| m == rep.monotone_ok);
                let diverged = a.require_limit && rep.limit_exists == Some(false);
                Ok(Outcome::new(&rep, ok)?.with_table(lelong_table(&rep)).diverged_if(diverged, NO_LIMIT))
            }
            Op::MLelong(a) => {
                let rep = m_lelong_number(o.current(&a.current)?, &a.center, a.m, &a.radii, &a.quad, &LelongOptions::default())?;
                let ok = a.expect_limit_exists.is_none_or(|e| rep.limit_exists == Some(e));
                let diverged = a.require_limit && rep.limit_exists == Some(false);
                Ok(Outcome::new(&rep, ok)?.with_table(lelong_table(&rep)).diverged_if(diverged, NO_LIMIT))
            }
            Op::ConcaveLowerBound(a) => {
                let rep = concave_lower_bound(o.smooth(&a.current)?, &a.center, a.r0, &a.radii, &a.quad, &LelongOptions::default())?;
                let ok = rep.holds;
                let table = Table::from_estimates(["r", "nu", "stderr"], &rep.r_grid, &rep.nu);
                Ok(Outcome::new(&rep, ok)?.with_table(table))
            }
            Op::T5(a) => {
                let rep = t5_integrability_diagnostic(o.smooth(&a.current)?, o.weight(&a.weight)?, &a.radii, &a.quad)?;
                let table = Table::from_estimates(["r", "nu", "stderr"], &rep.r_grid, &rep.nu);
                Ok(Outcome::new(&rep, true)?.with_table(table))
            }
            Op::Degree(a) => {
                let opts = DegreeOptions { seed: a.seed, rel_tol: a.rel_tol.unwrap_or(DegreeOptions::default().rel_tol), ..Default::default() };
                let t = o.current(&a.current)?;
                let rep = match &a.weight {
                    Some(w) => weighted_degree(t, &o.field(w)?, &a.radii, &a.quad, &opts)?,
                    None => degree(t, &a.radii, &a.quad, &opts)?,
                };
                let ok = rep.nondecreasing && within(a.expect, rep.limit_estimate);
                let table = Table::from_estimates(["R", "partial", "stderr"], &rep.r_grid, &rep.partials);
                let diverged = a.require_converged && !rep.converged;
                Ok(Outcome::new(&rep, ok)?.with_table(table).diverged_if(diverged, "last two partial degrees disagree beyond rel_tol"))
            }
            Op::ComparisonLocal(a) => {
                let rep = verify_comparison_local(o.current(&a.current)?, o.weight(&a.phi)?, o.weight(&a.psi)?, a.l, &a.radii, &a.quad)?;
                let ok = rep.holds;
                Outcome::new(&rep, ok)
            }
            Op::ComparisonInfinity(a) => {
                let us = a.us.iter().map(|f| o.field(f)).collect::<Result<Vec<_>>>()?;
                let vs = a.vs.iter().map(|f| o.field(f)).collect::<Result<Vec<_>>>()?;
                let rep = verify_comparison_infinity(o.current(&a.current)?, &us, &vs, a.l.as_deref(), a.r, &a.quad, a.eps)?;
                let ok = rep.holds;
                Outcome::new(&rep, ok)
            }
            Op::GrowthLink(a) => {
                let rep = growth_link_check(o.smooth(&a.current)?, a.declared, &a.radii, &a.quad)?;
                let ok = rep.finite;
                Outcome::new(&rep, ok)
            }
            Op::Strip(a) => {
                let rep = strip_experiment(o.current(&a.current)?, a.k, a.delta, &a.radii, &a.quad)?;
                let ok = a.expect_bounded.is_none_or(|b| b == rep.bounded);
                let table = Table::from_estimates(["r", "nu", "stderr"], &rep.r_grid, &rep.nu);
                Ok(Outcome::new(&rep, ok)?.with_table(table))
            }
        }
    }
}
