//! Problem files (TOML) and result files (JSON).

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{ParseError, Result, RoaError};
use crate::moments::DomainDescriptor;
use crate::poly::{MultiIndex, Poly, VarNames};
use crate::relax::{Degrees, Diagnostics, RelaxOptions, SpotCheck, SystemSpec};
use crate::sim::{SamplingPlan, SimOptions};
use crate::solver::SolveStatus;

/// A requested degree: one number for `deg_w = deg_v`, or an explicit pair.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DegreeEntry {
    Uniform(u32),
    Pair { deg_w: u32, deg_v: u32 },
}

impl DegreeEntry {
    pub fn degrees(self) -> Degrees {
        match self {
            DegreeEntry::Uniform(d) => Degrees::uniform(d),
            DegreeEntry::Pair { deg_w, deg_v } => Degrees::new(deg_w, deg_v),
        }
    }

    /// Parses `16` or `6:16` (`deg_w:deg_v`).
    pub fn parse(s: &str) -> Result<Self> {
        let num = |t: &str| {
            t.trim()
                .parse::<u32>()
                .map_err(|_| RoaError::from(ParseError::Problem(format!("bad degree `{s}`"))))
        };
        match s.split_once(':') {
            Some((w, v)) => Ok(DegreeEntry::Pair {
                deg_w: num(w)?,
                deg_v: num(v)?,
            }),
            None => Ok(DegreeEntry::Uniform(num(s)?)),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    pub name: String,
    pub n: usize,
    /// Right-hand sides in `t, x1..xn`.
    pub dynamics: Vec<String>,
    pub g_x: String,
    pub g_t: String,
    #[serde(alias = "T")]
    pub horizon: f64,
    pub domain: DomainDescriptor,
    pub degrees: Vec<DegreeEntry>,
    #[serde(default)]
    pub relax: RelaxOptions,
    #[serde(default)]
    pub sampling: SamplingPlan,
    #[serde(default)]
    pub sim: SimOptions,
}

impl ProblemFile {
    pub fn parse(src: &str) -> Result<Self> {
        let p: ProblemFile = toml::from_str(src).map_err(ParseError::from)?;
        if p.degrees.is_empty() {
            return Err(ParseError::Problem("the degree list is empty".into()).into());
        }
        p.spec()?;
        Ok(p)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("problem files serialize")
    }

    pub fn spec(&self) -> Result<SystemSpec> {
        if self.dynamics.len() != self.n {
            return Err(
                ParseError::Problem(format!("{} dynamics entries for n = {}", self.dynamics.len(), self.n)).into(),
            );
        }
        let f = self
            .dynamics
            .iter()
            .map(|s| Poly::parse(s, VarNames::time_state(self.n)))
            .collect::<Result<Vec<_>, _>>()?;
        let g_x = Poly::parse(&self.g_x, VarNames::state(self.n))?;
        let g_t = Poly::parse(&self.g_t, VarNames::state(self.n))?;
        SystemSpec::new(f, g_x, g_t, self.horizon, self.domain.clone()).map_err(|e| match e {
            RoaError::InvalidInput(m) | RoaError::DimensionMismatch(m) => ParseError::Problem(m).into(),
            other => other,
        })
    }
}

/// One coefficient: exponents (time first for `v`) and value.
pub type Term = (Vec<u32>, f64);

pub fn poly_to_terms(p: &Poly) -> Vec<Term> {
    p.terms().map(|(m, c)| (m.exps().to_vec(), c)).collect()
}

pub fn terms_to_poly(nvars: usize, terms: &[Term]) -> Result<Poly> {
    if let Some((e, _)) = terms.iter().find(|(e, _)| e.len() != nvars) {
        return Err(ParseError::Problem(format!("coefficient exponents {e:?} do not have {nvars} entries")).into());
    }
    Ok(Poly::from_terms(
        nvars,
        terms.iter().map(|(e, c)| (MultiIndex::new(e.clone()), *c)),
    ))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub deg_w: u32,
    pub deg_v: u32,
    pub k: u32,
    /// Solver status; absent when assembly failed before solving.
    pub status: Option<SolveStatus>,
    pub error: Option<String>,
    pub d_star: Option<f64>,
    pub p_star: Option<f64>,
    pub w: Option<Vec<Term>>,
    pub v: Option<Vec<Term>>,
    pub vol_inner: Option<f64>,
    pub relative_error: Option<f64>,
    /// Volume and error of `{min_{i <= this} w_i < 1}` over the records so far.
    pub running_min_vol_inner: Option<f64>,
    pub running_min_relative_error: Option<f64>,
    pub diagnostics: Option<Diagnostics>,
    pub wall_time_s: f64,
}

impl Record {
    pub fn degrees(&self) -> Degrees {
        Degrees {
            k: self.k,
            deg_w: self.deg_w,
            deg_v: self.deg_v,
        }
    }

    pub fn w_poly(&self, n: usize) -> Result<Option<Poly>> {
        self.w.as_ref().map(|t| terms_to_poly(n, t)).transpose()
    }

    pub fn v_poly(&self, n: usize) -> Result<Option<Poly>> {
        self.v.as_ref().map(|t| terms_to_poly(n + 1, t)).transpose()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultFile {
    pub tool_version: String,
    /// Seed of the Monte Carlo sampling plan, if one was used.
    pub seed: Option<u64>,
    pub problem: ProblemFile,
    /// Oracle estimate of the ROA volume used for the relative errors.
    pub vol_roa: Option<f64>,
    pub records: Vec<Record>,
}

impl ResultFile {
    pub fn new(problem: ProblemFile) -> Self {
        let seed = match problem.sampling {
            SamplingPlan::MonteCarlo { seed, .. } => Some(seed),
            SamplingPlan::Grid { .. } => None,
        };
        Self {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            problem,
            vol_roa: None,
            records: Vec::new(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("result files serialize")
    }

    pub fn parse(src: &str) -> Result<Self> {
        let r: ResultFile = serde_json::from_str(src).map_err(ParseError::from)?;
        let n = r.problem.n;
        for rec in &r.records {
            rec.w_poly(n)?;
            rec.v_poly(n)?;
        }
        Ok(r)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    /// Records ordered by `(deg_v, deg_w)`.
    pub fn sort_records(&mut self) {
        self.records.sort_by_key(|r| (r.deg_v, r.deg_w, r.k));
    }
}

/// Outcome of `validate` for one record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub deg_w: u32,
    pub deg_v: u32,
    pub samples: usize,
    pub violations: Vec<Vec<f64>>,
    pub uncertain: Vec<Vec<f64>>,
    pub spot_checks: Vec<SpotCheck>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty() && self.spot_checks.iter().all(SpotCheck::passed)
    }
}
