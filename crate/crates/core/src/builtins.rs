//! Fixed corpus of named fields and currents.

use serde::{Deserialize, Serialize};

use crate::calculus::ddsharp;
use crate::currents::{tropical_ddsharp, Current, SmoothCurrent, SubmanifoldCurrent};
use crate::exterior::{beta_power, parse_superform};
use crate::field::{Func, MaxAffine, ScalarField};
use crate::{Error, Result, Superform};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BuiltinKind {
    Field,
    Current,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BuiltinInfo {
    pub name: &'static str,
    pub kind: BuiltinKind,
    pub min_n: usize,
    pub max_n: usize,
    pub params: &'static [&'static str],
    pub description: &'static str,
}

impl BuiltinInfo {
    pub fn supports(&self, n: usize) -> bool {
        (self.min_n..=self.max_n).contains(&n)
    }
}

/// Optional knobs; each builtin documents which ones it reads.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BuiltinParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale: Option<f64>,
}

#[derive(Clone, Debug)]
pub enum BuiltinObject {
    Field(ScalarField),
    Current(Current),
}

impl BuiltinObject {
    pub fn into_current(self) -> Result<Current> {
        match self {
            BuiltinObject::Current(c) => Ok(c),
            BuiltinObject::Field(_) => Err(Error::Invalid("builtin is a field, not a current".into())),
        }
    }

    pub fn into_field(self) -> Result<ScalarField> {
        match self {
            BuiltinObject::Field(f) => Ok(f),
            BuiltinObject::Current(_) => Err(Error::Invalid("builtin is a current, not a field".into())),
        }
    }
}

const CATALOG: &[BuiltinInfo] = &[
    BuiltinInfo {
        name: "phi_m",
        kind: BuiltinKind::Field,
        min_n: 1,
        max_n: 8,
        params: &["m"],
        description: "radial m-convex exhaustion: |x|^{2-n/m} (n < 2m), log|x| (n = 2m), -|x|^{2-n/m} (n > 2m); m defaults to 1",
    },
    BuiltinInfo {
        name: "norm",
        kind: BuiltinKind::Field,
        min_n: 1,
        max_n: 8,
        params: &["scale"],
        description: "scale * |x|, scale defaults to 1",
    },
    BuiltinInfo {
        name: "tropical_hinge",
        kind: BuiltinKind::Field,
        min_n: 1,
        max_n: 3,
        params: &[],
        description: "max(0, x1)",
    },
    BuiltinInfo {
        name: "tropical_abs",
        kind: BuiltinKind::Field,
        min_n: 1,
        max_n: 3,
        params: &[],
        description: "|x1| = max(x1, -x1)",
    },
    BuiltinInfo {
        name: "tropical_line",
        kind: BuiltinKind::Field,
        min_n: 2,
        max_n: 3,
        params: &[],
        description: "max(0, x1, x2)",
    },
    BuiltinInfo {
        name: "beta_power",
        kind: BuiltinKind::Current,
        min_n: 1,
        max_n: 8,
        params: &["k"],
        description: "constant closed current beta^k of bidimension n - k; k defaults to 1",
    },
    BuiltinInfo {
        name: "plane",
        kind: BuiltinKind::Current,
        min_n: 2,
        max_n: 8,
        params: &["k", "scale"],
        description: "coordinate k-plane span(e1..ek) through 0 with half-width scale; k defaults to 1, scale to 4",
    },
    BuiltinInfo {
        name: "sphere",
        kind: BuiltinKind::Current,
        min_n: 2,
        max_n: 3,
        params: &["scale"],
        description: "round sphere of radius scale (default 1) centered at 0",
    },
    BuiltinInfo {
        name: "catenoid",
        kind: BuiltinKind::Current,
        min_n: 3,
        max_n: 3,
        params: &["scale"],
        description: "catenoid patch with neck radius 1 and half-height scale (default 1)",
    },
    BuiltinInfo {
        name: "tropical_hinge_current",
        kind: BuiltinKind::Current,
        min_n: 1,
        max_n: 3,
        params: &[],
        description: "dd# max(0, x1), a weighted hyperplane",
    },
    BuiltinInfo {
        name: "tropical_line_current",
        kind: BuiltinKind::Current,
        min_n: 2,
        max_n: 3,
        params: &[],
        description: "dd# max(0, x1, x2), the tropical line",
    },
    BuiltinInfo {
        name: "tropical_shifted_line_current",
        kind: BuiltinKind::Current,
        min_n: 2,
        max_n: 2,
        params: &[],
        description: "dd# max(0, x1 - 1, x2 - 1/2), vertex off the origin; degree 2 + sqrt 2",
    },
    BuiltinInfo {
        name: "smoothed_hinge_current",
        kind: BuiltinKind::Current,
        min_n: 1,
        max_n: 3,
        params: &["scale"],
        description: "dd# of max(0, x1) mollified at eps = scale (default 1/4)",
    },
    BuiltinInfo {
        name: "m_lelong_counterexample",
        kind: BuiltinKind::Current,
        min_n: 3,
        max_n: 8,
        params: &["m"],
        description: "-phi_m (dd# phi_m)^{m-1} for n > 2m; scaled m-mass grows like r^{2-n/m}; m defaults to 1",
    },
    BuiltinInfo {
        name: "paper_strip_counterexample",
        kind: BuiltinKind::Current,
        min_n: 2,
        max_n: 2,
        params: &[],
        description: "2f dx1 dxi1 + 2 x1^2 f dx2 dxi2 with f a bump in x2 on |x2| < 1: convex, unbounded strip growth r^2",
    },
    BuiltinInfo {
        name: "paper_sin_singularity",
        kind: BuiltinKind::Current,
        min_n: 2,
        max_n: 2,
        params: &[],
        description: "(1 - sin(1/(x1+x2)^2)) dx1 dxi1 + (1 + sin(1/(x1+x2)^2)) dx2 dxi2: dT has infinite mass near x1 + x2 = 0",
    },
];

pub fn catalog() -> &'static [BuiltinInfo] {
    CATALOG
}

pub fn info(name: &str) -> Option<&'static BuiltinInfo> {
    CATALOG.iter().find(|b| b.name == name)
}

fn hinge(n: usize) -> Result<MaxAffine> {
    let mut e1 = vec![0.0; n];
    e1[0] = 1.0;
    MaxAffine::new(n, vec![(vec![0.0; n], 0.0), (e1, 0.0)])
}

fn tropical(n: usize, name: &str) -> Result<MaxAffine> {
    let unit = |i: usize, s: f64| {
        let mut v = vec![0.0; n];
        v[i] = s;
        v
    };
    match name {
        "hinge" => hinge(n),
        "abs" => MaxAffine::new(n, vec![(unit(0, 1.0), 0.0), (unit(0, -1.0), 0.0)]),
        "line" => MaxAffine::new(n, vec![(vec![0.0; n], 0.0), (unit(0, 1.0), 0.0), (unit(1, 1.0), 0.0)]),
        "shifted" => MaxAffine::new(n, vec![(vec![0.0; n], 0.0), (unit(0, 1.0), -1.0), (unit(1, 1.0), -0.5)]),
        _ => Err(Error::Invalid(format!("unknown tropical sample '{name}'"))),
    }
}

/// `e * bump(1 - x2^2)`: smooth, positive on `|x2| < 1`, equal to 1 at `x2 = 0`.
pub fn strip_profile(n: usize) -> Result<ScalarField> {
    Ok(ScalarField::parse_poly(n, "1 - x2^2")?.apply(Func::Bump(0)).scaled(std::f64::consts::E))
}

/// `sin(1/(x1+x2)^2)`.
pub fn sin_singularity(n: usize) -> Result<ScalarField> {
    Ok(ScalarField::parse_poly(n, "(x1 + x2)^2")?.apply(Func::Pow(-1.0)).apply(Func::Sin))
}

/// Instantiates a catalog entry in dimension `n`.
pub fn instantiate(name: &str, n: usize, params: &BuiltinParams) -> Result<BuiltinObject> {
    let entry = info(name).ok_or_else(|| Error::Invalid(format!("unknown builtin '{name}'")))?;
    if !entry.supports(n) {
        return Err(Error::Dimension(format!("builtin '{name}' needs {} <= n <= {}, got {n}", entry.min_n, entry.max_n)));
    }
    let m = params.m.unwrap_or(1);
    let smooth = |form: Superform<ScalarField>| BuiltinObject::Current(Current::Smooth(SmoothCurrent::new(form)));
    let trop = |f: MaxAffine| -> Result<BuiltinObject> { Ok(BuiltinObject::Current(Current::Tropical(tropical_ddsharp(&f)?))) };
    Ok(match name {
        "phi_m" => BuiltinObject::Field(ScalarField::phi_m(n, m)?),
        "norm" => BuiltinObject::Field(ScalarField::norm(n).scaled(params.scale.unwrap_or(1.0))),
        "tropical_hinge" => BuiltinObject::Field(ScalarField::MaxAffine(tropical(n, "hinge")?)),
        "tropical_abs" => BuiltinObject::Field(ScalarField::MaxAffine(tropical(n, "abs")?)),
        "tropical_line" => BuiltinObject::Field(ScalarField::MaxAffine(tropical(n, "line")?)),
        "beta_power" => {
            let k = params.k.unwrap_or(1);
            if k > n {
                return Err(Error::Invalid(format!("beta_power needs k <= n, got k = {k}")));
            }
            smooth(beta_power(n, k))
        }
        "plane" => {
            let k = params.k.unwrap_or(1);
            if k == 0 || k >= n {
                return Err(Error::Invalid(format!("plane needs 1 <= k < n, got k = {k}")));
            }
            let span = (0..k)
                .map(|i| {
                    let mut e = vec![0.0; n];
                    e[i] = 1.0;
                    e
                })
                .collect();
            let m = SubmanifoldCurrent::plane(vec![0.0; n], span, params.scale.unwrap_or(4.0))?;
            BuiltinObject::Current(Current::Submanifold(m))
        }
        "sphere" => BuiltinObject::Current(Current::Submanifold(SubmanifoldCurrent::sphere(vec![0.0; n], params.scale.unwrap_or(1.0))?)),
        "catenoid" => BuiltinObject::Current(Current::Submanifold(SubmanifoldCurrent::catenoid(1.0, params.scale.unwrap_or(1.0))?)),
        "tropical_hinge_current" => trop(tropical(n, "hinge")?)?,
        "tropical_line_current" => trop(tropical(n, "line")?)?,
        "tropical_shifted_line_current" => trop(tropical(n, "shifted")?)?,
        "smoothed_hinge_current" => {
            let f = ScalarField::MaxAffine(hinge(n)?).mollify(params.scale.unwrap_or(0.25))?;
            smooth(ddsharp(&Superform::scalar(n, f))?)
        }
        "m_lelong_counterexample" => {
            if n <= 2 * m {
                return Err(Error::Invalid(format!("m_lelong_counterexample needs n > 2m, got n = {n}, m = {m}")));
            }
            let phi = ScalarField::phi_m(n, m)?;
            let dd = ddsharp(&Superform::scalar(n, phi.clone()))?;
            smooth(dd.pow(m - 1)?.scale(&phi.scaled(-1.0)))
        }
        "paper_strip_counterexample" => {
            let f = strip_profile(n)?.scaled(2.0);
            let x1sq = ScalarField::parse_poly(n, "x1^2")?;
            let rows = vec![vec![f.clone(), ScalarField::zero(n)], vec![ScalarField::zero(n), ScalarField::product(n, vec![f, x1sq])]];
            smooth(Superform::from_coeff_matrix(&rows))
        }
        "paper_sin_singularity" => {
            let s = sin_singularity(n)?;
            let lo = ScalarField::sum(n, vec![ScalarField::constant(n, 1.0), s.scaled(-1.0)]);
            let hi = ScalarField::sum(n, vec![ScalarField::constant(n, 1.0), s]);
            let mut coeffs = [Some(lo), Some(hi)];
            let form = parse_superform(n, "lo * dx[1] ^ dxi[1]\nhi * dx[2] ^ dxi[2]", |c| {
                let slot = if c == "lo" { 0 } else { 1 };
                coeffs[slot].take().ok_or_else(|| Error::Parse(format!("coefficient '{c}' used twice")))
            })?;
            smooth(form)
        }
        _ => unreachable!("catalog and instantiate disagree on '{name}'"),
    })
}
