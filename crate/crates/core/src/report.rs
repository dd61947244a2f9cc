//! Run configurations, scheme reports and CSV tables shared by the command-line front end.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::af::{af_optimize, af_scalar_objective, optimal_phase, peaks, AfGains};
use crate::bc::{bc_sum_capacity, BcRegion};
use crate::bounds::{upper_bound, UpperBoundReport};
use crate::cf::cf_optimize_effort;
use crate::channel::{ChannelGeometry, ChannelInstance, NamedMatrix};
use crate::df::{df_max_rate_with_region, ActiveBound};
use crate::effort::Effort;
use crate::error::{RelayError, Result};
use crate::mac::{
    face_vertices, optimal_correlation, region_corner, subregion_boundary, subregion_params, sum_rate_at_rho, MacParams,
};
use crate::numerics::{linspace, CMatrix, C64};
use crate::rates::RateTriple;

pub const AF_MAX_ITER: usize = 100;
pub const AF_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Bound,
    Df,
    Af,
    Cf,
    Mac,
    Bc,
}

impl Scheme {
    pub const ALL: [Scheme; 6] = [Scheme::Bound, Scheme::Df, Scheme::Af, Scheme::Cf, Scheme::Mac, Scheme::Bc];

    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::Bound => "bound",
            Scheme::Df => "df",
            Scheme::Af => "af",
            Scheme::Cf => "cf",
            Scheme::Mac => "mac",
            Scheme::Bc => "bc",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scheme {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Scheme::ALL
            .into_iter()
            .find(|x| x.as_str() == s)
            .ok_or_else(|| format!("unknown scheme `{s}` (expected bound, df, af, cf, mac or bc)"))
    }
}

/// Parses a comma separated scheme list, dropping duplicates and keeping canonical order.
pub fn parse_scheme_list(s: &str) -> std::result::Result<Vec<Scheme>, String> {
    let mut out: Vec<Scheme> = s.split(',').map(|x| x.trim().parse()).collect::<std::result::Result<_, _>>()?;
    out.sort();
    out.dedup();
    if out.is_empty() {
        return Err("scheme list is empty".into());
    }
    Ok(out)
}

/// A channel matrix given either by reference tag or as rows of `[re, im]` pairs.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum MatrixSpec {
    Named(NamedMatrix),
    Entries(Vec<Vec<[f64; 2]>>),
}

impl<'de> Deserialize<'de> for MatrixSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error;
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Tag(String),
            Entries(Vec<Vec<[f64; 2]>>),
        }
        match Raw::deserialize(d)
            .map_err(|_| D::Error::custom("expected ortho, mid, parallel or rows of [re, im] pairs"))?
        {
            Raw::Tag(t) => t.parse().map(MatrixSpec::Named).map_err(D::Error::custom),
            Raw::Entries(e) => Ok(MatrixSpec::Entries(e)),
        }
    }
}

impl MatrixSpec {
    fn build(&self, field: &str) -> Result<CMatrix> {
        match self {
            MatrixSpec::Named(n) => Ok(n.matrix()),
            MatrixSpec::Entries(rows) => {
                let cols = rows.first().map_or(0, Vec::len);
                if rows.is_empty() || cols == 0 {
                    return Err(RelayError::parameter(field, "matrix is empty"));
                }
                if let Some(i) = rows.iter().position(|r| r.len() != cols) {
                    return Err(RelayError::parameter(
                        field,
                        format!("row {i} has {} entries, expected {cols}", rows[i].len()),
                    ));
                }
                let data: Vec<C64> = rows.iter().flatten().map(|&[re, im]| C64::new(re, im)).collect();
                Ok(CMatrix::from_row_major(rows.len(), cols, &data))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GridScale {
    #[default]
    Lin,
    Log,
    Db,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub min: f64,
    pub max: f64,
    pub count: usize,
    #[serde(default)]
    pub scale: GridScale,
}

impl GridSpec {
    /// Grid points as written (dB values stay in dB).
    pub fn points(&self, field: &str) -> Result<Vec<f64>> {
        if self.count < 2 {
            return Err(RelayError::parameter(field, format!("count must be at least 2, got {}", self.count)));
        }
        if !(self.min.is_finite() && self.max.is_finite() && self.min < self.max) {
            return Err(RelayError::parameter(field, format!("need min < max, got [{}, {}]", self.min, self.max)));
        }
        match self.scale {
            GridScale::Lin | GridScale::Db => Ok(linspace(self.min, self.max, self.count)),
            GridScale::Log => {
                if self.min <= 0.0 {
                    return Err(RelayError::parameter(field, "log grid needs min > 0"));
                }
                Ok(linspace(self.min.ln(), self.max.ln(), self.count).into_iter().map(f64::exp).collect())
            }
        }
    }

    fn to_linear(&self, x: f64) -> f64 {
        match self.scale {
            GridScale::Db => db_to_linear(x),
            _ => x,
        }
    }

    fn unit(&self) -> &'static str {
        match self.scale {
            GridScale::Db => "db",
            _ => "linear",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVariable {
    PR,
    Rho,
    Alpha,
    BGain,
}

impl SweepVariable {
    fn name(self) -> &'static str {
        match self {
            SweepVariable::PR => "p_r",
            SweepVariable::Rho => "rho",
            SweepVariable::Alpha => "alpha",
            SweepVariable::BGain => "b_gain",
        }
    }

    fn allowed(self) -> &'static [Scheme] {
        match self {
            SweepVariable::PR => &Scheme::ALL,
            SweepVariable::Rho | SweepVariable::Alpha => &[Scheme::Bound, Scheme::Mac],
            SweepVariable::BGain => &[Scheme::Bound, Scheme::Af],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub variable: SweepVariable,
    pub grid: GridSpec,
}

impl SweepSpec {
    /// Schemes used when neither the config nor the command line names any.
    pub fn variable_default_schemes(&self) -> Vec<Scheme> {
        match self.variable {
            SweepVariable::PR => vec![Scheme::Bound, Scheme::Df, Scheme::Af, Scheme::Cf],
            SweepVariable::Rho | SweepVariable::Alpha => vec![Scheme::Mac],
            SweepVariable::BGain => vec![Scheme::Af],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimalRhoSpec {
    /// Angle between the destination channel columns, degrees.
    pub phi_h_deg: GridSpec,
    /// Geometric relay SNR √(P_r1 P_r2)·‖h1‖‖h2‖ values, linear.
    pub snr: Vec<f64>,
}

impl Default for OptimalRhoSpec {
    fn default() -> Self {
        OptimalRhoSpec {
            phi_h_deg: GridSpec { min: 0.0, max: 90.0, count: 91, scale: GridScale::Lin },
            snr: vec![0.5, 1.0, 2.0, 5.0, 10.0],
        }
    }
}

/// Shape of a seeded random instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomSpec {
    pub source_antennas: usize,
    pub dest_antennas: usize,
}

/// Top-level run configuration. Powers are linear unless converted from dB at ingestion.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub g: Option<MatrixSpec>,
    pub h: Option<MatrixSpec>,
    pub random: Option<RandomSpec>,
    pub p_s: Option<f64>,
    /// Shorthand for equal relay powers.
    pub p_r: Option<f64>,
    pub p_r1: Option<f64>,
    pub p_r2: Option<f64>,
    pub effort: Option<Effort>,
    pub schemes: Option<Vec<Scheme>>,
    pub sweep: Option<SweepSpec>,
    pub optimal_rho: Option<OptimalRhoSpec>,
}

pub fn db_to_linear(x: f64) -> f64 {
    10f64.powf(x / 10.0)
}

impl Config {
    /// Reinterprets every configured power as dB.
    pub fn convert_db(&mut self) {
        for p in [&mut self.p_s, &mut self.p_r, &mut self.p_r1, &mut self.p_r2].into_iter().flatten() {
            *p = db_to_linear(*p);
        }
    }

    fn relay_powers(&self) -> Result<(f64, f64)> {
        match (self.p_r, self.p_r1, self.p_r2) {
            (Some(_), Some(_), _) | (Some(_), _, Some(_)) => {
                Err(RelayError::parameter("p_r", "give either p_r or p_r1/p_r2, not both"))
            }
            (Some(p), None, None) => Ok((p, p)),
            (None, Some(a), Some(b)) => Ok((a, b)),
            (None, None, _) => Err(RelayError::parameter("p_r1", "missing relay power")),
            (None, Some(_), None) => Err(RelayError::parameter("p_r2", "missing relay power")),
        }
    }

    /// Builds and validates the channel instance. `seed` drives the `random` section only.
    pub fn instance(&self, seed: u64) -> Result<ChannelInstance> {
        let p_s = self.p_s.ok_or_else(|| RelayError::parameter("p_s", "missing source power"))?;
        let (p_r1, p_r2) = self.relay_powers()?;
        match (&self.g, &self.h, &self.random) {
            (Some(g), Some(h), None) => Ok(ChannelInstance::new(g.build("g")?, h.build("h")?, p_s, p_r1, p_r2)?),
            (None, None, Some(r)) => {
                if r.source_antennas == 0 || r.dest_antennas == 0 {
                    return Err(RelayError::parameter("random", "antenna counts must be positive"));
                }
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let inst = ChannelInstance::random(&mut rng, r.source_antennas, r.dest_antennas, p_s, p_r1, p_r2);
                inst.validate().map_err(|e| e.into_iter().next().expect("nonempty"))?;
                Ok(inst)
            }
            (_, _, Some(_)) => Err(RelayError::parameter("random", "cannot be combined with g or h")),
            (None, _, None) => Err(RelayError::parameter("g", "missing source-relay channel")),
            (_, None, None) => Err(RelayError::parameter("h", "missing relay-destination channel")),
        }
    }

    pub fn effort_or(&self, flag: Option<Effort>) -> Effort {
        flag.or(self.effort).unwrap_or_default()
    }

    pub fn schemes_or(&self, flag: Option<&[Scheme]>) -> Result<Vec<Scheme>> {
        let mut s: Vec<Scheme> = match (flag, &self.schemes) {
            (Some(f), _) => f.to_vec(),
            (None, Some(c)) => c.clone(),
            (None, None) => Scheme::ALL.to_vec(),
        };
        s.sort();
        s.dedup();
        if s.is_empty() {
            return Err(RelayError::parameter("schemes", "scheme list is empty"));
        }
        Ok(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Provenance {
    pub tool: &'static str,
    pub version: &'static str,
    pub log_base: u32,
    pub rate_unit: &'static str,
    pub power_unit: &'static str,
    pub effort: Effort,
}

impl Provenance {
    pub fn new(effort: Effort) -> Self {
        Provenance {
            tool: "relaylab",
            version: env!("CARGO_PKG_VERSION"),
            log_base: 2,
            rate_unit: "bits per channel use",
            power_unit: "linear",
            effort,
        }
    }

    fn csv_comment(&self) -> String {
        format!(
            "# {} {}; log base {}; rates in {}; powers {}; effort {}\n",
            self.tool, self.version, self.log_base, self.rate_unit, self.power_unit, self.effort
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InstanceSummary {
    pub g: CMatrix,
    pub h: CMatrix,
    pub p_s: f64,
    pub p_r1: f64,
    pub p_r2: f64,
    pub geometry: Option<ChannelGeometry>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundEntry {
    #[serde(flatten)]
    pub report: UpperBoundReport,
    pub active: &'static str,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DfEntry {
    pub rate: f64,
    pub optimal_certificate: bool,
    pub active_bound: ActiveBound,
    pub witness_mac: Option<MacParams>,
    pub witness_triple: RateTriple,
    pub lp_solves: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AfEntry {
    pub rate: f64,
    pub gains: Option<AfGains>,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CfEntry {
    pub rate: f64,
    pub a: Option<f64>,
    pub b: Option<f64>,
    pub slacks: Option<[f64; 3]>,
    pub fallback_cells: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MacEntry {
    pub rate: f64,
    pub rho_opt: f64,
    pub saturated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BcEntry {
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct SchemeEntries {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub df: Option<DfEntry>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub af: Option<AfEntry>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cf: Option<CfEntry>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mac: Option<MacEntry>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bc: Option<BcEntry>,
}

impl SchemeEntries {
    /// (name, rate) for every computed scheme.
    pub fn rates(&self) -> Vec<(&'static str, f64)> {
        let mut v = Vec::new();
        if let Some(e) = &self.df {
            v.push(("df", e.rate));
        }
        if let Some(e) = &self.af {
            v.push(("af", e.rate));
        }
        if let Some(e) = &self.cf {
            v.push(("cf", e.rate));
        }
        if let Some(e) = &self.mac {
            v.push(("mac", e.rate));
        }
        if let Some(e) = &self.bc {
            v.push(("bc", e.rate));
        }
        v
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateReport {
    pub header: Provenance,
    pub instance: InstanceSummary,
    /// Always computed; the other schemes are checked against it.
    pub bound: BoundEntry,
    pub schemes: SchemeEntries,
}

fn relays_active(inst: &ChannelInstance) -> bool {
    inst.p_r1 * inst.h_norm_sq(0) > 0.0 && inst.p_r2 * inst.h_norm_sq(1) > 0.0
}

fn df_entry(inst: &ChannelInstance, region: Option<&BcRegion>, effort: Effort) -> Result<DfEntry> {
    if inst.p_s == 0.0 || !relays_active(inst) {
        // A silent hop caps the end-to-end rate at zero.
        if upper_bound(inst)?.overall <= 0.0 {
            return Ok(DfEntry {
                rate: 0.0,
                optimal_certificate: true,
                active_bound: ActiveBound::None,
                witness_mac: None,
                witness_triple: RateTriple::ZERO,
                lp_solves: 0,
            });
        }
    }
    let owned;
    let region = match region {
        Some(r) => r,
        None => {
            owned = BcRegion::build(inst, effort);
            &owned
        }
    };
    let r = df_max_rate_with_region(inst, region, effort)?;
    Ok(DfEntry {
        rate: r.rate,
        optimal_certificate: r.optimal_certificate,
        active_bound: r.active_bound,
        witness_mac: Some(r.witness_mac),
        witness_triple: r.witness_triple,
        lp_solves: r.lp_solves,
    })
}

fn af_entry(inst: &ChannelInstance) -> Result<AfEntry> {
    if inst.p_s == 0.0 || (inst.p_r1 == 0.0 && inst.p_r2 == 0.0) {
        return Ok(AfEntry { rate: 0.0, gains: None, iterations: 0, converged: true });
    }
    let o = af_optimize(inst, AF_MAX_ITER, AF_TOL)?;
    Ok(AfEntry { rate: o.state.rate, gains: Some(o.state.gains), iterations: o.history.len(), converged: o.converged })
}

fn cf_entry(inst: &ChannelInstance, effort: Effort) -> Result<CfEntry> {
    match cf_optimize_effort(inst, effort) {
        Ok(s) => Ok(CfEntry {
            rate: s.rate,
            a: Some(s.a),
            b: Some(s.b),
            slacks: Some(s.slacks),
            fallback_cells: s.fallback_cells,
        }),
        Err(RelayError::ZeroRelayPower(_)) => {
            Ok(CfEntry { rate: 0.0, a: None, b: None, slacks: None, fallback_cells: 0 })
        }
        Err(e) => Err(e),
    }
}

fn mac_entry(inst: &ChannelInstance) -> Result<MacEntry> {
    match optimal_correlation(inst) {
        Ok(c) => Ok(MacEntry { rate: c.max_sum_rate, rho_opt: c.rho_mag, saturated: c.saturated }),
        Err(RelayError::ZeroRelayPower(_)) | Err(RelayError::Channel(_)) => {
            Ok(MacEntry { rate: sum_rate_at_rho(inst, 1.0), rho_opt: 1.0, saturated: true })
        }
        Err(e) => Err(e),
    }
}

fn bc_entry(inst: &ChannelInstance) -> Result<BcEntry> {
    Ok(BcEntry { rate: bc_sum_capacity(inst)? })
}

/// Runs the requested schemes on one instance. The upper bound is always included.
pub fn build_report(inst: &ChannelInstance, schemes: &[Scheme], effort: Effort) -> Result<RateReport> {
    let ub = upper_bound(inst)?;
    let mut entries = SchemeEntries::default();
    for &s in schemes {
        match s {
            Scheme::Bound => {}
            Scheme::Df => entries.df = Some(df_entry(inst, None, effort)?),
            Scheme::Af => entries.af = Some(af_entry(inst)?),
            Scheme::Cf => entries.cf = Some(cf_entry(inst, effort)?),
            Scheme::Mac => entries.mac = Some(mac_entry(inst)?),
            Scheme::Bc => entries.bc = Some(bc_entry(inst)?),
        }
    }
    Ok(RateReport {
        header: Provenance::new(effort),
        instance: InstanceSummary {
            g: inst.g.clone(),
            h: inst.h.clone(),
            p_s: inst.p_s,
            p_r1: inst.p_r1,
            p_r2: inst.p_r2,
            geometry: inst.geometry().ok(),
        },
        bound: BoundEntry { active: ub.active(), report: ub },
        schemes: entries,
    })
}

/// One CSV cell.
#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Num(f64),
    Int(usize),
    Flag(bool),
    Text(String),
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Num(x) => f.write_str(&format_sig(*x)),
            Value::Int(i) => write!(f, "{i}"),
            Value::Flag(b) => f.write_str(if *b { "1" } else { "0" }),
            Value::Text(s) => f.write_str(s),
        }
    }
}

/// Formats with 9 significant digits, plain notation for exponents in [-5, 9).
pub fn format_sig(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..9).contains(&exp) {
        let decimals = (8 - exp).max(0) as usize;
        trim_zeros(format!("{x:.decimals$}"))
    } else {
        format!("{}e{exp}", trim_zeros(mantissa.to_string()))
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub provenance: Provenance,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Value>>,
}

impl Table {
    /// Comment line with the provenance, then the header row, then data rows.
    pub fn to_csv(&self) -> String {
        let mut out = self.provenance.csv_comment();
        out.push_str(&self.columns.join(","));
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(ToString::to_string).collect();
            let _ = writeln!(out, "{}", cells.join(","));
        }
        out
    }

    pub fn column(&self, name: &str) -> Option<Vec<&Value>> {
        let i = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| &r[i]).collect())
    }
}

fn check_schemes(variable: SweepVariable, schemes: &[Scheme]) -> Result<()> {
    if let Some(s) = schemes.iter().find(|s| !variable.allowed().contains(s)) {
        return Err(RelayError::parameter(
            "schemes",
            format!("scheme `{s}` is not available for a {} sweep", variable.name()),
        ));
    }
    Ok(())
}

/// Evaluates `schemes` along the swept variable. Rows follow grid order.
pub fn run_sweep(inst: &ChannelInstance, spec: &SweepSpec, schemes: &[Scheme], effort: Effort) -> Result<Table> {
    check_schemes(spec.variable, schemes)?;
    let xs = spec.grid.points("sweep.grid")?;
    let swept = format!("{}_{}", spec.variable.name(), spec.grid.unit());
    let mut columns = vec![swept];
    let rows = match spec.variable {
        SweepVariable::PR => sweep_relay_power(inst, &spec.grid, &xs, schemes, effort, &mut columns)?,
        SweepVariable::Rho => sweep_rho(inst, &spec.grid, &xs, schemes, &mut columns)?,
        SweepVariable::Alpha => sweep_alpha(inst, &spec.grid, &xs, schemes, &mut columns)?,
        SweepVariable::BGain => sweep_b_gain(inst, &spec.grid, &xs, schemes, &mut columns)?,
    };
    Ok(Table { provenance: Provenance::new(effort), columns, rows })
}

fn sweep_relay_power(
    inst: &ChannelInstance,
    grid: &GridSpec,
    xs: &[f64],
    schemes: &[Scheme],
    effort: Effort,
    columns: &mut Vec<String>,
) -> Result<Vec<Vec<Value>>> {
    for s in schemes {
        columns.push(format!("rate_{s}_bits"));
    }
    if schemes.contains(&Scheme::Df) {
        columns.push("df_certificate".into());
    }
    if xs.iter().any(|&x| grid.to_linear(x) < 0.0) {
        return Err(RelayError::parameter("sweep.grid", "relay powers must be nonnegative"));
    }
    // The broadcast region depends only on G and P_s, so it is shared by every grid point.
    let region = schemes.contains(&Scheme::Df).then(|| BcRegion::build(inst, effort));
    let bc = if schemes.contains(&Scheme::Bc) { Some(bc_sum_capacity(inst)?) } else { None };
    xs.par_iter()
        .map(|&x| {
            let p = grid.to_linear(x);
            let point = inst.with_relay_power(p, p);
            let mut row = vec![Value::Num(x)];
            let mut cert = None;
            for &s in schemes {
                let rate = match s {
                    Scheme::Bound => upper_bound(&point)?.overall,
                    Scheme::Df => {
                        let e = df_entry(&point, region.as_ref(), effort)?;
                        cert = Some(e.optimal_certificate);
                        e.rate
                    }
                    Scheme::Af => af_entry(&point)?.rate,
                    Scheme::Cf => cf_entry(&point, effort)?.rate,
                    Scheme::Mac => mac_entry(&point)?.rate,
                    Scheme::Bc => bc.expect("computed above"),
                };
                row.push(Value::Num(rate));
            }
            if let Some(c) = cert {
                row.push(Value::Flag(c));
            }
            Ok(row)
        })
        .collect()
}

fn sweep_rho(
    inst: &ChannelInstance,
    grid: &GridSpec,
    xs: &[f64],
    schemes: &[Scheme],
    columns: &mut Vec<String>,
) -> Result<Vec<Vec<Value>>> {
    let lin: Vec<f64> = xs.iter().map(|&x| grid.to_linear(x)).collect();
    if lin.iter().any(|r| !(0.0..=1.0).contains(r)) {
        return Err(RelayError::parameter("sweep.grid", "|rho| must lie in [0, 1]"));
    }
    let bound = upper_bound(inst)?.overall;
    for s in schemes {
        columns.push(match s {
            Scheme::Mac => "sum_rate_mac_bits".into(),
            _ => "rate_bound_bits".into(),
        });
    }
    Ok(xs
        .iter()
        .zip(&lin)
        .map(|(&x, &r)| {
            let mut row = vec![Value::Num(x)];
            for s in schemes {
                row.push(Value::Num(if *s == Scheme::Mac { sum_rate_at_rho(inst, r) } else { bound }));
            }
            row
        })
        .collect())
}

/// Walks the maximum sum-rate face: √α = √x with β chosen so that √(αβ) = |ρ|opt.
fn sweep_alpha(
    inst: &ChannelInstance,
    grid: &GridSpec,
    xs: &[f64],
    schemes: &[Scheme],
    columns: &mut Vec<String>,
) -> Result<Vec<Vec<Value>>> {
    let opt = optimal_correlation(inst)?;
    let lo = opt.rho_mag * opt.rho_mag;
    let lin: Vec<f64> = xs.iter().map(|&x| grid.to_linear(x)).collect();
    if lin.iter().any(|&a| a < lo - 1e-12 || a > 1.0) {
        return Err(RelayError::parameter("sweep.grid", format!("alpha must lie in [{lo}, 1] on the optimal face")));
    }
    let bound = upper_bound(inst)?.overall;
    for s in schemes {
        if *s == Scheme::Mac {
            columns.extend(
                [
                    "beta_linear",
                    "mac_r1_max_bits",
                    "mac_r2_max_bits",
                    "mac_private_sum_bits",
                    "mac_sum_bits",
                    "mac_rc_min_bits",
                ]
                .map(String::from),
            );
        } else {
            columns.push("rate_bound_bits".into());
        }
    }
    xs.iter()
        .zip(&lin)
        .map(|(&x, &a)| {
            let params = subregion_params(inst, opt.rho_mag, a.max(lo).sqrt());
            let c = region_corner(inst, &params)?;
            let mut row = vec![Value::Num(x)];
            for s in schemes {
                if *s == Scheme::Mac {
                    row.extend(
                        [
                            params.beta,
                            c.r1_max,
                            c.r2_max,
                            c.sum_private_max,
                            c.sum_total,
                            (c.sum_total - c.sum_private_max).max(0.0),
                        ]
                        .map(Value::Num),
                    );
                } else {
                    row.push(Value::Num(bound));
                }
            }
            Ok(row)
        })
        .collect()
}

/// AF rate against relay 2's amplitude, with the isotropic source covariance, relay 1 at full
/// power and the optimal phase.
fn sweep_b_gain(
    inst: &ChannelInstance,
    grid: &GridSpec,
    xs: &[f64],
    schemes: &[Scheme],
    columns: &mut Vec<String>,
) -> Result<Vec<Vec<Value>>> {
    let m = inst.source_antennas();
    let q_s = CMatrix::identity(m).scale(inst.p_s / m as f64);
    let q_e = &inst.g * &q_s * inst.g.adjoint();
    let (a_peak, b_peak) = peaks(inst, &q_e);
    let phi = optimal_phase(inst, &q_e);
    let bound = upper_bound(inst)?.overall;
    if xs.iter().any(|&x| grid.to_linear(x) < 0.0) {
        return Err(RelayError::parameter("sweep.grid", "gains must be nonnegative"));
    }
    for s in schemes {
        if *s == Scheme::Af {
            columns.extend(["rate_af_bits", "b_peak_linear", "within_peak"].map(String::from));
        } else {
            columns.push("rate_bound_bits".into());
        }
    }
    Ok(xs
        .iter()
        .map(|&x| {
            let b = grid.to_linear(x);
            let mut row = vec![Value::Num(x)];
            for s in schemes {
                if *s == Scheme::Af {
                    row.push(Value::Num(af_scalar_objective(inst, &q_e, a_peak, b, phi)));
                    row.push(Value::Num(b_peak));
                    row.push(Value::Flag(b <= b_peak));
                } else {
                    row.push(Value::Num(bound));
                }
            }
            row
        })
        .collect())
}

/// cos φ at which full correlation stops being optimal for unit-norm columns: SNR c² + c − SNR = 0.
pub fn saturation_angle_deg(snr: f64) -> f64 {
    if snr <= 0.0 {
        return 90.0;
    }
    let c = (-1.0 + (1.0 + 4.0 * snr * snr).sqrt()) / (2.0 * snr);
    c.clamp(-1.0, 1.0).acos().to_degrees()
}

/// Optimal correlation magnitude over (SNR, φ_h) for unit-norm destination columns.
pub fn optimal_rho_table(spec: &OptimalRhoSpec, effort: Effort) -> Result<Table> {
    let phis = spec.phi_h_deg.points("optimal_rho.phi_h_deg")?;
    if spec.snr.is_empty() {
        return Err(RelayError::parameter("optimal_rho.snr", "need at least one SNR value"));
    }
    if let Some(s) = spec.snr.iter().find(|s| !(s.is_finite() && **s > 0.0)) {
        return Err(RelayError::parameter("optimal_rho.snr", format!("SNR values must be positive, got {s}")));
    }
    let columns = ["snr_linear", "phi_h_deg", "rho_opt", "saturated", "phi_sat_deg"].map(String::from).to_vec();
    let mut rows = Vec::new();
    for &snr in &spec.snr {
        let sat = saturation_angle_deg(snr);
        for &phi in &phis {
            let cos = phi.to_radians().cos();
            let sin2 = phi.to_radians().sin().powi(2);
            let (rho, saturated) = if cos.abs() < 1e-12 {
                (0.0, false)
            } else if snr * sin2 <= cos.abs() {
                (1.0, true)
            } else {
                (cos.abs() / (snr * sin2), false)
            };
            rows.push(vec![Value::Num(snr), Value::Num(phi), Value::Num(rho), Value::Flag(saturated), Value::Num(sat)]);
        }
    }
    Ok(Table { provenance: Provenance::new(effort), columns, rows })
}

/// Boundary samples for external plotting: MAC face vertices without and with optimal
/// correlation, the maximum sum-rate face, and the broadcast support points.
pub fn regions_table(inst: &ChannelInstance, effort: Effort) -> Result<Table> {
    let columns = ["region", "index", "r1_bits", "r2_bits", "rc_bits", "sum_bits"].map(String::from).to_vec();
    let mut rows = Vec::new();
    let mut push = |name: &str, items: Vec<RateTriple>| {
        for (i, t) in items.into_iter().enumerate() {
            rows.push(vec![
                Value::Text(name.into()),
                Value::Int(i),
                Value::Num(t.r1),
                Value::Num(t.r2),
                Value::Num(t.rc),
                Value::Num(t.sum()),
            ]);
        }
    };
    push("mac_private", face_vertices(&region_corner(inst, &MacParams::PRIVATE_ONLY)?));
    if let Ok(opt) = optimal_correlation(inst) {
        let params = subregion_params(inst, opt.rho_mag, 1.0);
        push("mac_optimal", face_vertices(&region_corner(inst, &params)?));
        push(
            "subregion",
            subregion_boundary(inst, effort.subregion_samples())?.into_iter().map(|p| p.triple).collect(),
        );
    }
    if inst.p_s > 0.0 {
        let region = BcRegion::build(inst, effort);
        push("bc_support", region.points().iter().map(|p| p.rates).collect());
    }
    Ok(Table { provenance: Provenance::new(effort), columns, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::named_instance;
    use NamedMatrix::*;

    #[test]
    fn significant_digits() {
        assert_eq!(format_sig(0.0), "0");
        assert_eq!(format_sig(1.0), "1");
        assert_eq!(format_sig(5.169925001442312), "5.169925");
        assert_eq!(format_sig(std::f64::consts::PI), "3.14159265");
        assert_eq!(format_sig(9.9999999999), "10");
        assert_eq!(format_sig(123456789.4), "123456789");
        assert_eq!(format_sig(1234567891.0), "1.23456789e9");
        assert_eq!(format_sig(1e-4), "0.0001");
        assert_eq!(format_sig(-2.5e-7), "-2.5e-7");
        assert_eq!(format_sig(f64::NAN), "nan");
    }

    #[test]
    fn scheme_lists() {
        assert_eq!(parse_scheme_list("cf, df,df").unwrap(), vec![Scheme::Df, Scheme::Cf]);
        assert!(parse_scheme_list("df,xf").is_err());
    }

    #[test]
    fn grids() {
        let g = GridSpec { min: 1.0, max: 100.0, count: 3, scale: GridScale::Log };
        let p = g.points("x").unwrap();
        assert!((p[1] - 10.0).abs() < 1e-12);
        let bad = GridSpec { min: 1.0, max: 1.0, count: 3, scale: GridScale::Lin };
        assert!(bad.points("x").is_err());
        assert!(GridSpec { min: 0.0, max: 1.0, count: 1, scale: GridScale::Lin }.points("x").is_err());
    }

    #[test]
    fn config_instance() {
        let mut c = Config {
            g: Some(MatrixSpec::Named(Ortho)),
            h: Some(MatrixSpec::Entries(vec![vec![[1.0, 0.0], [0.0, 0.0]], vec![[0.0, 0.0], [0.0, 1.0]]])),
            p_s: Some(10.0),
            p_r: Some(7.0),
            ..Default::default()
        };
        c.convert_db();
        let inst = c.instance(0).unwrap();
        assert!((inst.p_s - 10.0).abs() < 1e-12 && (inst.p_r1 - db_to_linear(7.0)).abs() < 1e-12);
        c.p_r1 = Some(1.0);
        assert!(c.instance(0).unwrap_err().is_input_error());
        let r = Config {
            random: Some(RandomSpec { source_antennas: 3, dest_antennas: 2 }),
            p_s: Some(1.0),
            p_r: Some(1.0),
            ..Default::default()
        };
        assert_eq!(r.instance(4).unwrap(), r.instance(4).unwrap());
        assert_ne!(r.instance(4).unwrap(), r.instance(5).unwrap());
    }

    #[test]
    fn report_respects_bound() {
        let inst = named_instance(Ortho, Ortho, 10.0, 5.0, 5.0).unwrap();
        let r = build_report(&inst, &Scheme::ALL, Effort::Low).unwrap();
        assert_eq!(r.schemes.rates().len(), 5);
        for (name, rate) in r.schemes.rates() {
            assert!(rate <= r.bound.report.overall + 1e-9, "{name}");
        }
    }

    #[test]
    fn zero_power_report() {
        let inst = named_instance(Ortho, Ortho, 10.0, 0.0, 0.0).unwrap();
        let r = build_report(&inst, &Scheme::ALL, Effort::Low).unwrap();
        for (name, rate) in r.schemes.rates() {
            if name != "bc" {
                assert_eq!(rate, 0.0, "{name}");
            }
        }
        let inst = named_instance(Ortho, Ortho, 0.0, 5.0, 5.0).unwrap();
        let r = build_report(&inst, &[Scheme::Df, Scheme::Af, Scheme::Cf, Scheme::Bc], Effort::Low).unwrap();
        assert!(r.schemes.rates().iter().all(|&(_, x)| x == 0.0));
    }

    #[test]
    fn rho_sweep_peaks_at_optimum() {
        let inst =
            crate::channel::angled_instance((1.0, 1.0), 0.0, (1.0, 1.0), 35f64.to_radians(), 10.0, 5.0, 5.0).unwrap();
        let spec = SweepSpec {
            variable: SweepVariable::Rho,
            grid: GridSpec { min: 0.0, max: 1.0, count: 101, scale: GridScale::Lin },
        };
        let t = run_sweep(&inst, &spec, &[Scheme::Mac], Effort::Low).unwrap();
        let col = t.column("sum_rate_mac_bits").unwrap();
        let best = (0..col.len())
            .max_by(|&i, &j| match (col[i], col[j]) {
                (Value::Num(a), Value::Num(b)) => a.total_cmp(b),
                _ => unreachable!(),
            })
            .unwrap();
        assert_eq!(best, 50);
        assert!(run_sweep(&inst, &spec, &[Scheme::Df], Effort::Low).is_err());
    }

    #[test]
    fn saturation_locus() {
        let s = saturation_angle_deg(4.17).to_radians();
        assert!((s.cos() - 4.17 * s.sin().powi(2)).abs() < 1e-12);
        let t = optimal_rho_table(&OptimalRhoSpec::default(), Effort::Low).unwrap();
        assert_eq!(t.rows.len(), 91 * 5);
        assert_eq!(t.rows[0][2], Value::Num(1.0));
        assert_eq!(t.rows[90][2], Value::Num(0.0));
    }
}
