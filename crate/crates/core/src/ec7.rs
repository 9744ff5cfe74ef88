//! Eurocode 7 (EN 1997-1) partial-factor design of shallow footings:
//! preset factor sets per Design Approach, design soil parameters, the ULS
//! bearing check and a bisection search for the required width.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize, Serializer};

use crate::catalog::{Catalog, CatalogError};
use crate::engine::{EvaluationRequest, EvaluationTrace, InputValue};
use crate::units::{convert, Quantity, UnitRegistry};

pub const EC7_CARD_ID: &str = "BEARING_CAPACITY_EUROCODE7";

const JRC_A3: &str = include_str!("../scenarios/jrc_a3.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum DesignApproach {
    Da1C1,
    Da1C2,
    Da2,
    Da3,
}

impl DesignApproach {
    /// Reporting order.
    pub const ALL: [DesignApproach; 4] = [
        DesignApproach::Da1C1,
        DesignApproach::Da1C2,
        DesignApproach::Da2,
        DesignApproach::Da3,
    ];

    pub fn label(self) -> &'static str {
        match self {
            DesignApproach::Da1C1 => "DA1-C1",
            DesignApproach::Da1C2 => "DA1-C2",
            DesignApproach::Da2 => "DA2",
            DesignApproach::Da3 => "DA3",
        }
    }

    /// Partial factor sets combined, e.g. `A2+M2+R1`.
    pub fn combination(self) -> &'static str {
        match self {
            DesignApproach::Da1C1 => "A1+M1+R1",
            DesignApproach::Da1C2 => "A2+M2+R1",
            DesignApproach::Da2 => "A1+M1+R2",
            DesignApproach::Da3 => "A1+M2+R3",
        }
    }
}

impl fmt::Display for DesignApproach {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for DesignApproach {
    type Err = Ec7Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        DesignApproach::ALL
            .into_iter()
            .find(|da| da.label().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Ec7Error::UnknownDesignApproach(s.to_owned()))
    }
}

impl Serialize for DesignApproach {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.label())
    }
}

impl<'de> Deserialize<'de> for DesignApproach {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[allow(non_snake_case)]
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PartialFactorSet {
    pub design_approach: DesignApproach,
    pub gamma_G: f64,
    pub gamma_Q: f64,
    pub gamma_phi: f64,
    pub gamma_c: f64,
    pub gamma_cu: f64,
    pub gamma_gamma: f64,
    pub gamma_R: f64,
}

impl PartialFactorSet {
    /// EN 1997-1 Annex A sets for spread foundations: A1/A2 on actions,
    /// M1/M2 on materials, R1/R2/R3 on bearing resistance.
    #[allow(non_snake_case)]
    pub fn preset(da: DesignApproach) -> PartialFactorSet {
        let (gamma_G, gamma_Q) = match da {
            DesignApproach::Da1C2 => (1.0, 1.3),
            _ => (1.35, 1.5),
        };
        let m2 = matches!(da, DesignApproach::Da1C2 | DesignApproach::Da3);
        let (gamma_phi, gamma_c, gamma_cu) = if m2 { (1.25, 1.25, 1.4) } else { (1.0, 1.0, 1.0) };
        let gamma_R = if da == DesignApproach::Da2 { 1.4 } else { 1.0 };
        PartialFactorSet {
            design_approach: da,
            gamma_G,
            gamma_Q,
            gamma_phi,
            gamma_c,
            gamma_cu,
            gamma_gamma: 1.0,
            gamma_R,
        }
    }
}

pub fn get_ec7_preset_partials(label: &str) -> Result<PartialFactorSet, Ec7Error> {
    Ok(PartialFactorSet::preset(label.parse()?))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CharacteristicSoil {
    /// radians
    pub phi_prime_k: f64,
    /// kPa
    pub c_prime_k: f64,
    /// kPa, undrained analyses only
    pub c_u_k: Option<f64>,
    /// kN/m^3
    pub gamma_k: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DesignSoil {
    pub phi_prime_d: f64,
    pub c_prime_d: f64,
    pub c_u_d: Option<f64>,
    pub gamma_d: f64,
}

/// φ'_d = atan(tan φ'_k / γ_φ); the other strengths and the unit weight are
/// divided by their factors.
pub fn derive_design_parameters(soil: &CharacteristicSoil, pf: &PartialFactorSet) -> DesignSoil {
    DesignSoil {
        phi_prime_d: (soil.phi_prime_k.tan() / pf.gamma_phi).atan(),
        c_prime_d: soil.c_prime_k / pf.gamma_c,
        c_u_d: soil.c_u_k.map(|c| c / pf.gamma_cu),
        gamma_d: soil.gamma_k / pf.gamma_gamma,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Drainage {
    Drained,
    Undrained,
}

/// How the overburden pressure `q` at founding level is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SurchargeModel {
    /// From the soil unit weight, embedment and groundwater level.
    Overburden,
    /// No surcharge term.
    None,
    /// A fixed pressure in kPa.
    Explicit(f64),
}

/// A footing design problem in SI card units (m, kN, kPa, kN/m^3, radians).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FootingScenario {
    pub name: String,
    pub notes: Vec<String>,
    pub drainage: Drainage,
    /// Reference width, if the scenario fixes one.
    #[serde(rename = "B")]
    pub b: Option<f64>,
    #[serde(rename = "L")]
    pub l: f64,
    #[serde(rename = "D_f")]
    pub d_f: f64,
    pub e: f64,
    pub soil: CharacteristicSoil,
    /// Depth of the water table below ground; `None` when it is deep.
    pub groundwater_depth: Option<f64>,
    pub gamma_w: f64,
    pub surcharge: SurchargeModel,
    #[serde(rename = "G_k")]
    pub g_k: f64,
    #[serde(rename = "Q_k")]
    pub q_k: f64,
    pub gamma_sw: f64,
}

#[derive(Deserialize)]
#[serde(rename_all = "lowercase")]
enum RawSurcharge {
    Overburden,
    None,
    Explicit(String),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    #[serde(default)]
    name: String,
    #[serde(default)]
    notes: Vec<String>,
    #[serde(default = "default_drainage")]
    drainage: Drainage,
    #[serde(rename = "B", default)]
    b: Option<String>,
    #[serde(rename = "L")]
    l: String,
    #[serde(rename = "D_f")]
    d_f: String,
    #[serde(default)]
    e: Option<String>,
    phi_prime_k: String,
    #[serde(default)]
    c_prime_k: Option<String>,
    #[serde(default)]
    c_u_k: Option<String>,
    gamma_k: String,
    #[serde(default)]
    groundwater_depth: Option<String>,
    #[serde(default)]
    gamma_w: Option<String>,
    #[serde(default = "default_surcharge")]
    surcharge: RawSurcharge,
    #[serde(rename = "G_k")]
    g_k: String,
    #[serde(rename = "Q_k")]
    q_k: String,
    gamma_sw: String,
}

fn default_drainage() -> Drainage {
    Drainage::Drained
}

fn default_surcharge() -> RawSurcharge {
    RawSurcharge::Overburden
}

impl FootingScenario {
    /// Parses a scenario file; every physical field is a unit-tagged string.
    pub fn from_json(text: &str) -> Result<FootingScenario, Ec7Error> {
        let value: serde_json::Value = serde_json::from_str(text).map_err(|e| Ec7Error::Scenario {
            field: String::new(),
            message: e.to_string(),
        })?;
        let raw: RawScenario = serde_path_to_error::deserialize(value)
            .map_err(|e| Ec7Error::Scenario {
                field: e.path().to_string(),
                message: e.into_inner().to_string(),
            })?;
        let reg = UnitRegistry::bundled();
        let get = |field: &str, text: &str, unit: &str| -> Result<f64, Ec7Error> {
            let err = |message: String| Ec7Error::Scenario {
                field: field.to_owned(),
                message,
            };
            let q = reg.parse_quantity(text).map_err(|e| err(e.to_string()))?;
            let target = reg.resolve(unit).expect("bundled unit");
            convert(&q, target)
                .map(|q| q.magnitude)
                .map_err(|e| err(e.to_string()))
        };
        let opt = |field: &str, text: &Option<String>, unit: &str| -> Result<Option<f64>, Ec7Error> {
            text.as_deref().map(|t| get(field, t, unit)).transpose()
        };
        let scenario = FootingScenario {
            name: raw.name,
            notes: raw.notes,
            drainage: raw.drainage,
            b: opt("B", &raw.b, "m")?,
            l: get("L", &raw.l, "m")?,
            d_f: get("D_f", &raw.d_f, "m")?,
            e: opt("e", &raw.e, "m")?.unwrap_or(0.0),
            soil: CharacteristicSoil {
                phi_prime_k: get("phi_prime_k", &raw.phi_prime_k, "radians")?,
                c_prime_k: opt("c_prime_k", &raw.c_prime_k, "kPa")?.unwrap_or(0.0),
                c_u_k: opt("c_u_k", &raw.c_u_k, "kPa")?,
                gamma_k: get("gamma_k", &raw.gamma_k, "kN/m^3")?,
            },
            groundwater_depth: opt("groundwater_depth", &raw.groundwater_depth, "m")?,
            gamma_w: opt("gamma_w", &raw.gamma_w, "kN/m^3")?.unwrap_or(9.81),
            surcharge: match raw.surcharge {
                RawSurcharge::Overburden => SurchargeModel::Overburden,
                RawSurcharge::None => SurchargeModel::None,
                RawSurcharge::Explicit(t) => SurchargeModel::Explicit(get("surcharge", &t, "kPa")?),
            },
            g_k: get("G_k", &raw.g_k, "kN")?,
            q_k: get("Q_k", &raw.q_k, "kN")?,
            gamma_sw: get("gamma_sw", &raw.gamma_sw, "kN/m^3")?,
        };
        scenario.validate()?;
        Ok(scenario)
    }

    /// The bundled worked-example scenario.
    pub fn jrc_a3() -> FootingScenario {
        FootingScenario::from_json(JRC_A3).expect("bundled scenario is valid")
    }

    fn validate(&self) -> Result<(), Ec7Error> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Ec7Error::InvalidGeometry(format!("{name} must be positive, got {v}")))
            }
        };
        positive("L", self.l)?;
        positive("D_f", self.d_f)?;
        if let Some(b) = self.b {
            positive("B", b)?;
            check_eccentricity(b, self.e)?;
        }
        if self.e < 0.0 {
            return Err(Ec7Error::InvalidGeometry(format!("eccentricity must be non-negative, got {}", self.e)));
        }
        if self.drainage == Drainage::Undrained && self.soil.c_u_k.is_none() {
            return Err(Ec7Error::Scenario {
                field: "c_u_k".into(),
                message: "undrained scenarios need an undrained strength".into(),
            });
        }
        Ok(())
    }

    /// Overburden at founding level and the unit weight for the self-weight
    /// term, from the design unit weight and the water table. Below the water
    /// the buoyant weight applies; a water table within `b_eff` below the base
    /// is interpolated linearly.
    fn stresses(&self, gamma_d: f64, b_eff: f64) -> (f64, f64) {
        let buoyant = gamma_d - self.gamma_w;
        let dw = self.groundwater_depth.unwrap_or(f64::INFINITY);
        let gamma_eff = if dw >= self.d_f + b_eff {
            gamma_d
        } else if dw >= self.d_f {
            buoyant + (dw - self.d_f) / b_eff * (gamma_d - buoyant)
        } else {
            buoyant
        };
        let q = match self.surcharge {
            SurchargeModel::None => 0.0,
            SurchargeModel::Explicit(q) => q,
            SurchargeModel::Overburden if self.drainage == Drainage::Undrained => gamma_d * self.d_f,
            SurchargeModel::Overburden => {
                gamma_d * dw.min(self.d_f) + buoyant * (self.d_f - dw).max(0.0)
            }
        };
        (q, gamma_eff)
    }
}

fn check_eccentricity(b: f64, e: f64) -> Result<(), Ec7Error> {
    if 2.0 * e >= b {
        Err(Ec7Error::InvalidGeometry(format!(
            "effective width B - 2e is not positive (B = {b} m, e = {e} m)"
        )))
    } else {
        Ok(())
    }
}

/// V_d = γ_G·(G_k + γ_sw·B·D_f·L) + γ_Q·Q_k, in kN.
pub fn compute_design_action(scenario: &FootingScenario, pf: &PartialFactorSet, b: f64) -> f64 {
    let self_weight = scenario.gamma_sw * b * scenario.d_f * scenario.l;
    pf.gamma_G * (scenario.g_k + self_weight) + pf.gamma_Q * scenario.q_k
}

fn serialize_utilization<S: Serializer>(u: &f64, s: S) -> Result<S::Ok, S::Error> {
    if u.is_finite() {
        s.serialize_f64(*u)
    } else {
        s.serialize_none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DesignParameters {
    pub phi_prime_d: f64,
    pub phi_prime_d_deg: f64,
    pub c_prime_d: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c_u_d: Option<f64>,
    pub gamma_d: f64,
    /// Unit weight used in the self-weight term.
    pub gamma_eff: f64,
    pub q: f64,
    #[serde(rename = "B_eff")]
    pub b_eff: f64,
    #[serde(rename = "L")]
    pub l: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UlsCheckResult {
    pub design_approach: DesignApproach,
    #[serde(rename = "B")]
    pub b: f64,
    #[serde(rename = "V_d")]
    pub v_d: f64,
    #[serde(rename = "R_d")]
    pub r_d: f64,
    /// V_d / R_d; infinite (serialized as null) when R_d is zero.
    #[serde(serialize_with = "serialize_utilization")]
    pub utilization: f64,
    pub pass: bool,
    pub design_parameters: DesignParameters,
    pub partial_factors: PartialFactorSet,
    pub trace: EvaluationTrace,
}

#[derive(Debug, thiserror::Error)]
pub enum Ec7Error {
    #[error("unknown design approach `{0}` (expected DA1-C1, DA1-C2, DA2 or DA3)")]
    UnknownDesignApproach(String),
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),
    #[error("scenario field `{field}`: {message}")]
    Scenario { field: String, message: String },
    #[error("utilization does not cross 1 between B = {lo} m ({utilization_lo}) and B = {hi} m ({utilization_hi})")]
    NoBracket {
        lo: f64,
        hi: f64,
        utilization_lo: f64,
        utilization_hi: f64,
    },
    #[error(transparent)]
    Catalog(#[from] CatalogError),
}

impl Ec7Error {
    pub fn kind(&self) -> &'static str {
        match self {
            Ec7Error::UnknownDesignApproach(_) => "UnknownDesignApproach",
            Ec7Error::InvalidGeometry(_) => "InvalidGeometry",
            Ec7Error::Scenario { .. } => "InvalidScenario",
            Ec7Error::NoBracket { .. } => "NoBracket",
            Ec7Error::Catalog(e) => e.kind(),
        }
    }
}

fn quantity(catalog_card: &crate::card::MethodCard, key: &str, value: f64) -> InputValue {
    let unit = catalog_card.unit_of(key).expect("EC7 card declares key").clone();
    InputValue::Quantity(Quantity::new(value, unit))
}

/// ULS bearing check of `scenario` at width `b` under one Design Approach.
pub fn check_footing_uls_ec7(
    catalog: &Catalog,
    scenario: &FootingScenario,
    da: DesignApproach,
    b: f64,
) -> Result<UlsCheckResult, Ec7Error> {
    if !(b > 0.0 && b.is_finite()) {
        return Err(Ec7Error::InvalidGeometry(format!("B must be positive, got {b}")));
    }
    check_eccentricity(b, scenario.e)?;
    let pf = PartialFactorSet::preset(da);
    let soil = derive_design_parameters(&scenario.soil, &pf);
    let b_eff = b - 2.0 * scenario.e;
    let (q, gamma_eff) = scenario.stresses(soil.gamma_d, b_eff);

    let card = catalog.get_method(EC7_CARD_ID)?;
    let req = match scenario.drainage {
        Drainage::Drained => EvaluationRequest::new(EC7_CARD_ID, "drained")
            .input("phi_prime", quantity(card, "phi_prime", soil.phi_prime_d))
            .input("c_prime", quantity(card, "c_prime", soil.c_prime_d))
            .input("gamma", quantity(card, "gamma", gamma_eff)),
        Drainage::Undrained => EvaluationRequest::new(EC7_CARD_ID, "undrained").input(
            "c_u",
            quantity(card, "c_u", soil.c_u_d.expect("validated undrained scenario")),
        ),
    }
    .input("q", quantity(card, "q", q))
    .input("B", quantity(card, "B", b_eff))
    .input("L", quantity(card, "L", scenario.l));
    let trace = catalog.evaluate(&req)?;
    let q_ult = trace.output("q_ult").expect("EC7 card outputs q_ult");

    let r_d = q_ult * b_eff * scenario.l / pf.gamma_R;
    let v_d = compute_design_action(scenario, &pf, b);
    let utilization = if r_d > 0.0 { v_d / r_d } else { f64::INFINITY };
    Ok(UlsCheckResult {
        design_approach: da,
        b,
        v_d,
        r_d,
        utilization,
        pass: utilization <= 1.0 + 1e-12,
        design_parameters: DesignParameters {
            phi_prime_d: soil.phi_prime_d,
            phi_prime_d_deg: soil.phi_prime_d.to_degrees(),
            c_prime_d: soil.c_prime_d,
            c_u_d: soil.c_u_d,
            gamma_d: soil.gamma_d,
            gamma_eff,
            q,
            b_eff,
            l: scenario.l,
        },
        partial_factors: pf,
        trace,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DesignOptions {
    /// Stop once |utilization - 1| is below this.
    pub tolerance: f64,
    /// Stop once the width interval is narrower than this (m).
    pub min_interval: f64,
    pub bracket: (f64, f64),
    /// Halvings of the lower / doublings of the upper bound allowed. The
    /// upper bound is also capped at the footing length L.
    pub max_expansions: usize,
}

impl Default for DesignOptions {
    fn default() -> Self {
        DesignOptions {
            tolerance: 1e-3,
            min_interval: 1e-3,
            bracket: (0.1, 20.0),
            max_expansions: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DesignResult {
    pub design_approach: DesignApproach,
    #[serde(rename = "B_req")]
    pub b_req: f64,
    pub iterations: usize,
    pub converged: bool,
    pub check: UlsCheckResult,
}

/// Bisection on utilization(B) - 1 for the width at which V_d ≈ R_d.
pub fn design_footing_width_ec7(
    catalog: &Catalog,
    scenario: &FootingScenario,
    da: DesignApproach,
    opts: &DesignOptions,
) -> Result<DesignResult, Ec7Error> {
    let f = |b: f64| -> Result<(f64, UlsCheckResult), Ec7Error> {
        let check = check_footing_uls_ec7(catalog, scenario, da, b)?;
        Ok((check.utilization - 1.0, check))
    };
    let (mut lo, mut hi) = opts.bracket;
    let floor = 2.0 * scenario.e;
    // B is the shorter side, so the search never passes L
    let cap = scenario.l;
    lo = lo.max(floor + opts.min_interval);
    hi = hi.min(cap);
    let (mut f_lo, mut c_lo) = f(lo)?;
    let (mut f_hi, mut c_hi) = f(hi)?;
    let mut expansions = 0;
    while f_lo <= 0.0 && expansions < opts.max_expansions && lo / 2.0 > floor {
        hi = lo;
        (f_hi, c_hi) = (f_lo, c_lo);
        lo /= 2.0;
        (f_lo, c_lo) = f(lo)?;
        expansions += 1;
    }
    expansions = 0;
    while f_hi >= 0.0 && expansions < opts.max_expansions && hi < cap {
        lo = hi;
        (f_lo, c_lo) = (f_hi, c_hi);
        hi = (hi * 2.0).min(cap);
        (f_hi, c_hi) = f(hi)?;
        expansions += 1;
    }
    if !(f_lo > 0.0 && f_hi < 0.0) {
        return Err(Ec7Error::NoBracket {
            lo,
            hi,
            utilization_lo: f_lo + 1.0,
            utilization_hi: f_hi + 1.0,
        });
    }

    let mut iterations = 0;
    let mut best = if f_lo.abs() < f_hi.abs() { (lo, f_lo, c_lo) } else { (hi, f_hi, c_hi) };
    while best.1.abs() >= opts.tolerance && hi - lo >= opts.min_interval {
        iterations += 1;
        let mid = 0.5 * (lo + hi);
        let (f_mid, c_mid) = f(mid)?;
        if f_mid > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if f_mid.abs() < best.1.abs() {
            best = (mid, f_mid, c_mid);
        }
    }
    let (b_req, f_best, check) = best;
    Ok(DesignResult {
        design_approach: da,
        b_req,
        iterations,
        converged: f_best.abs() < opts.tolerance,
        check,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DesignComparison {
    pub results: Vec<DesignResult>,
    /// Whichever DA1 combination needs the larger width.
    pub da1_governing: DesignApproach,
    #[serde(rename = "B_req_DA1")]
    pub b_req_da1: f64,
}

/// Designs all four combinations in reporting order.
pub fn design_all_approaches(
    catalog: &Catalog,
    scenario: &FootingScenario,
    opts: &DesignOptions,
) -> Result<DesignComparison, Ec7Error> {
    let results = DesignApproach::ALL
        .into_iter()
        .map(|da| design_footing_width_ec7(catalog, scenario, da, opts))
        .collect::<Result<Vec<_>, _>>()?;
    let (c1, c2) = (results[0].b_req, results[1].b_req);
    let (da1_governing, b_req_da1) = if c2 >= c1 {
        (DesignApproach::Da1C2, c2)
    } else {
        (DesignApproach::Da1C1, c1)
    };
    Ok(DesignComparison {
        results,
        da1_governing,
        b_req_da1,
    })
}
