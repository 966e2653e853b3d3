//! Config files: a strict JSON scenario plus an optional settings block.
//!
//! Channel constants may be given linearly or in dB (`*_db` fields), never
//! both. Absent optional fields fall back to the evaluation defaults. Files
//! written by [`to_config_string`] parse back to the same values.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::planner::PlannerSettings;
use crate::scenario::{
    db_to_linear, random_users, validate_scenario, AreaBounds, ChannelParams, FailureEvent, Point, Scenario,
    UavConfig, UserSite, Violation,
};
use crate::utility::RiskConfig;

const DEFAULT_TX_POWER: f64 = 0.1;
const DEFAULT_NOISE_POWER: f64 = 1e-13;
const DEFAULT_REF_GAIN_DB: f64 = -20.0;
const DEFAULT_RICIAN_DB: f64 = 3.0;
const DEFAULT_USER_COUNT: usize = 9;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    scenario: ScenarioSpec,
    #[serde(default)]
    settings: SettingsSpec,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioSpec {
    uavs: Vec<UavSpec>,
    #[serde(default)]
    users: UsersSpec,
    #[serde(default)]
    channel: ChannelSpec,
    n_slots: usize,
    #[serde(default)]
    slot_bounds: AreaBounds,
    altitude_h: f64,
    d_max: f64,
    d_min: f64,
    #[serde(default)]
    failures: Vec<FailureEvent>,
    seed: u64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct UavSpec {
    id: u32,
    initial_position: Point,
    #[serde(alias = "Bu")]
    bandwidth_budget: f64,
    #[serde(default = "default_tx_power")]
    tx_power: f64,
}

fn default_tx_power() -> f64 {
    DEFAULT_TX_POWER
}

/// Either explicit sites or a count drawn uniformly from the scenario seed.
#[derive(Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum UsersSpec {
    Sites(Vec<UserSite>),
    Random {
        random: usize,
    },
}

impl Default for UsersSpec {
    fn default() -> Self {
        UsersSpec::Random {
            random: DEFAULT_USER_COUNT,
        }
    }
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ChannelSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    ref_gain_rho: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    ref_gain_db: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    rician_m: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    rician_m_db: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    noise_power: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct SettingsSpec {
    max_iterations: usize,
    tolerance: f64,
    mu: f64,
    history_in_objective: bool,
    rate_unit: f64,
    expected_fading: bool,
}

impl Default for SettingsSpec {
    fn default() -> Self {
        SettingsSpec::from(&PlannerSettings::default())
    }
}

impl From<&PlannerSettings> for SettingsSpec {
    fn from(s: &PlannerSettings) -> Self {
        Self {
            max_iterations: s.max_iterations,
            tolerance: s.tolerance,
            mu: s.risk.mu(),
            history_in_objective: s.history_in_objective,
            rate_unit: s.rate_unit,
            expected_fading: s.expected_fading,
        }
    }
}

/// Linear value from a linear/dB pair, or `default_db` when both are absent.
fn linear_or_db(
    linear: Option<f64>,
    db: Option<f64>,
    default_db: f64,
    field: &str,
    errs: &mut Vec<Violation>,
) -> f64 {
    match (linear, db) {
        (Some(v), None) => v,
        (None, Some(d)) => db_to_linear(d),
        (None, None) => db_to_linear(default_db),
        (Some(v), Some(_)) => {
            errs.push(Violation::new(
                format!("channel.{field}"),
                format!("give either {field} or {field}_db, not both"),
            ));
            v
        }
    }
}

fn build(file: ConfigFile) -> Result<(Scenario, PlannerSettings)> {
    let mut errs = Vec::new();
    let spec = file.scenario;
    let ch = spec.channel;
    let channel = ChannelParams {
        ref_gain_rho: linear_or_db(ch.ref_gain_rho, ch.ref_gain_db, DEFAULT_REF_GAIN_DB, "ref_gain_rho", &mut errs),
        rician_m: linear_or_db(ch.rician_m, ch.rician_m_db, DEFAULT_RICIAN_DB, "rician_m", &mut errs),
        noise_power: ch.noise_power.unwrap_or(DEFAULT_NOISE_POWER),
    };
    let (users, random) = match spec.users {
        UsersSpec::Sites(sites) => (sites, false),
        UsersSpec::Random { random } => (random_users(random, &spec.slot_bounds, spec.seed), true),
    };
    let scenario = Scenario {
        uavs: spec
            .uavs
            .into_iter()
            .map(|u| UavConfig {
                id: u.id,
                initial_position: u.initial_position,
                bandwidth_budget: u.bandwidth_budget,
                tx_power: u.tx_power,
            })
            .collect(),
        users,
        channel,
        n_slots: spec.n_slots,
        slot_bounds: spec.slot_bounds,
        altitude_h: spec.altitude_h,
        d_max: spec.d_max,
        d_min: spec.d_min,
        failures: spec.failures,
        seed: spec.seed,
        random_users: random,
    };

    let s = file.settings;
    if s.max_iterations < 1 {
        errs.push(Violation::new("settings.max_iterations", "must be at least 1"));
    }
    if !(s.tolerance > 0.0 && s.tolerance.is_finite()) {
        errs.push(Violation::new("settings.tolerance", "must be positive"));
    }
    if !(s.mu <= 0.0 && s.mu.is_finite()) {
        errs.push(Violation::new("settings.mu", "must be finite and <= 0"));
    }
    if !(s.rate_unit > 0.0 && s.rate_unit.is_finite()) {
        errs.push(Violation::new("settings.rate_unit", "must be positive"));
    }

    let scenario = match validate_scenario(scenario) {
        Ok(sc) => Some(sc),
        Err(v) => {
            errs.extend(v);
            None
        }
    };
    match scenario {
        Some(sc) if errs.is_empty() => {
            let settings = PlannerSettings {
                max_iterations: s.max_iterations,
                tolerance: s.tolerance,
                risk: RiskConfig::from_mu(s.mu),
                history_in_objective: s.history_in_objective,
                rate_unit: s.rate_unit,
                expected_fading: s.expected_fading,
                ..PlannerSettings::default()
            };
            Ok((sc, settings))
        }
        _ => Err(Error::Invalid(errs)),
    }
}

/// Parses and validates config text. Schema errors become [`Error::Parse`],
/// invariant violations [`Error::Invalid`] with every diagnostic.
pub fn parse_config_str(text: &str) -> Result<(Scenario, PlannerSettings)> {
    let file: ConfigFile = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    build(file)
}

pub fn parse_config(path: &Path) -> Result<(Scenario, PlannerSettings)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config_str(&text).map_err(|e| match e {
        Error::Parse(msg) => Error::Parse(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// Config text for `scenario` and `settings` with linear channel constants.
/// Seed-drawn users are written as a count.
pub fn to_config_string(scenario: &Scenario, settings: &PlannerSettings) -> String {
    let file = ConfigFile {
        scenario: ScenarioSpec {
            uavs: scenario
                .uavs
                .iter()
                .map(|u| UavSpec {
                    id: u.id,
                    initial_position: u.initial_position,
                    bandwidth_budget: u.bandwidth_budget,
                    tx_power: u.tx_power,
                })
                .collect(),
            users: if scenario.random_users {
                UsersSpec::Random {
                    random: scenario.n_users(),
                }
            } else {
                UsersSpec::Sites(scenario.users.clone())
            },
            channel: ChannelSpec {
                ref_gain_rho: Some(scenario.channel.ref_gain_rho),
                rician_m: Some(scenario.channel.rician_m),
                noise_power: Some(scenario.channel.noise_power),
                ..ChannelSpec::default()
            },
            n_slots: scenario.n_slots,
            slot_bounds: scenario.slot_bounds,
            altitude_h: scenario.altitude_h,
            d_max: scenario.d_max,
            d_min: scenario.d_min,
            failures: scenario.failures.clone(),
            seed: scenario.seed,
        },
        settings: SettingsSpec::from(settings),
    };
    let mut out = serde_json::to_string_pretty(&file).expect("config values serialize");
    out.push('\n');
    out
}
