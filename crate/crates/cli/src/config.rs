//! Flat dotted-key JSON configuration with defaults at the reference
//! operating points.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use sideband_core::params::{Calibration, EmitterParams, MaterialParams};
use sideband_core::spectroscopy::{DEFAULT_PLE_NU_M_MHZ, DEFAULT_PLE_P_RF_W, TARGET_LOW_POWER_FWHM_MHZ};

use crate::CliError;

/// ν_m for the Rabi sequence when `phonon.nu_m` is unset (MHz).
pub const DEFAULT_RABI_NU_M_MHZ: f64 = 940.0;
/// ν_m for the interference scans when `phonon.nu_m` is unset (MHz).
pub const DEFAULT_INTERFERENCE_NU_M_MHZ: f64 = 900.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhononSection {
    /// Overrides every experiment's ν_m when set.
    pub nu_m: Option<f64>,
    pub phi_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PleSection {
    /// Optical power (µW).
    pub p_o: f64,
    /// RF power (W).
    pub p_rf: f64,
    pub grid_points: usize,
    /// Grid half span in units of ν_m.
    pub grid_half_span: f64,
    pub transient_ns: Option<f64>,
    pub window_ns: Option<f64>,
    pub n_nodes: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RabiSection {
    pub pulse_ns: f64,
    pub rest_ns: f64,
    pub bin_ns: f64,
    pub repetitions: usize,
    pub nu_rabi: f64,
    /// RF power (W), converted with the calibration unless `beta` is set.
    pub p_rf: f64,
    pub beta: Option<f64>,
    pub nu_detuning: Option<f64>,
    pub collection_eta: f64,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InterferenceSection {
    pub beta: f64,
    pub nu_rabi_sideband: f64,
    pub nu_rabi_carrier: f64,
    pub phi_aom: f64,
    pub t_int_ns: f64,
    pub transient_ns: Option<f64>,
    pub phase_points: usize,
    pub aom_points: usize,
    /// Half span of the AOM scan (MHz); defaults to 2000/T_int.
    pub aom_half_span: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SawSection {
    /// Measured sideband Rabi frequency Ω/2π (MHz).
    pub nu_rabi_sideband: f64,
    /// Optical Rabi frequency Ω₀/2π (MHz).
    pub nu_rabi: f64,
    /// ν_m for the single-phonon coupling; `phonon.nu_m` or 900 MHz.
    pub nu_m: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleSection {
    pub alpha: f64,
    pub g: f64,
    pub nu_rabi: f64,
    /// Sideband flops covered by the correspondence check.
    pub flops: f64,
    pub n_max: Option<usize>,
    /// Fock cutoff for the |n⟩ flop measurements.
    pub fock_n_max: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub emitter: EmitterParams,
    pub material: MaterialParams,
    pub calibration: Calibration,
    pub phonon: PhononSection,
    pub ple: PleSection,
    pub rabi: RabiSection,
    pub interference: InterferenceSection,
    pub saw: SawSection,
    pub oracle: OracleSection,
    pub output: OutputSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            emitter: EmitterParams::default(),
            material: MaterialParams::default(),
            calibration: Calibration::default(),
            phonon: PhononSection { nu_m: None, phi_m: 0.0 },
            ple: PleSection {
                p_o: 0.4,
                p_rf: DEFAULT_PLE_P_RF_W,
                grid_points: 81,
                grid_half_span: 1.6,
                transient_ns: None,
                window_ns: None,
                n_nodes: None,
            },
            rabi: RabiSection {
                pulse_ns: 90.0,
                rest_ns: 100.0,
                bin_ns: 2.8,
                repetitions: 100,
                nu_rabi: 290.0,
                p_rf: 0.2,
                beta: None,
                nu_detuning: None,
                collection_eta: 1e-3,
                seed: None,
            },
            interference: InterferenceSection {
                beta: 0.455,
                nu_rabi_sideband: 5.0,
                nu_rabi_carrier: 1.1,
                phi_aom: 0.0,
                t_int_ns: 1000.0,
                transient_ns: None,
                phase_points: 24,
                aom_points: 41,
                aom_half_span: None,
            },
            saw: SawSection { nu_rabi_sideband: 66.0, nu_rabi: 290.0, nu_m: None },
            oracle: OracleSection { alpha: 3.0, g: 18.8, nu_rabi: 282.0, flops: 2.0, n_max: None, fock_n_max: 12 },
            output: OutputSection { dir: "sideband-out".into() },
        }
    }
}

fn flatten_into(prefix: &str, v: &Value, out: &mut BTreeMap<String, Value>) {
    match v {
        Value::Object(m) => {
            for (k, v) in m {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten_into(&key, v, out);
            }
        }
        other => {
            out.insert(prefix.to_string(), other.clone());
        }
    }
}

fn unflatten(flat: &BTreeMap<String, Value>) -> Value {
    let mut root = Map::new();
    for (key, v) in flat {
        let mut node = &mut root;
        let parts: Vec<&str> = key.split('.').collect();
        for p in &parts[..parts.len() - 1] {
            node = node
                .entry(p.to_string())
                .or_insert_with(|| Value::Object(Map::new()))
                .as_object_mut()
                .expect("config sections are objects");
        }
        node.insert(parts[parts.len() - 1].to_string(), v.clone());
    }
    Value::Object(root)
}

impl RunConfig {
    /// Resolved configuration as a sorted dotted-key map.
    pub fn to_flat(&self) -> BTreeMap<String, Value> {
        let mut out = BTreeMap::new();
        flatten_into("", &serde_json::to_value(self).expect("config serializes"), &mut out);
        out
    }

    /// Every accepted key.
    pub fn keys() -> Vec<String> {
        Self::default().to_flat().into_keys().collect()
    }

    /// Applies dotted-key values over `self`. Unknown keys and type
    /// mismatches are reported together.
    pub fn with_overrides(&self, overrides: &BTreeMap<String, Value>) -> Result<Self, CliError> {
        let mut flat = self.to_flat();
        let mut errors = Vec::new();
        for (k, v) in overrides {
            match flat.get_mut(k) {
                Some(slot) => *slot = v.clone(),
                None => errors.push(format!("unknown key \"{k}\"")),
            }
        }
        if !errors.is_empty() {
            return Err(CliError::Config(errors));
        }
        let defaults = Self::default().to_flat();
        for (k, v) in overrides {
            let mut probe = defaults.clone();
            probe.insert(k.clone(), v.clone());
            if let Err(e) = serde_json::from_value::<Self>(unflatten(&probe)) {
                errors.push(format!("{k}: {}", strip_position(&e.to_string())));
            }
        }
        if !errors.is_empty() {
            return Err(CliError::Config(errors));
        }
        serde_json::from_value(unflatten(&flat)).map_err(|e| CliError::Config(vec![e.to_string()]))
    }

    /// Parses a flat JSON object of dotted keys over the defaults and
    /// validates the result.
    pub fn from_json_str(text: &str) -> Result<Self, CliError> {
        let v: Value = serde_json::from_str(text)
            .map_err(|e| CliError::Parse { line: e.line(), column: e.column(), message: strip_position(&e.to_string()) })?;
        let Value::Object(m) = v else {
            return Err(CliError::Config(vec!["config must be a JSON object of dotted keys".into()]));
        };
        let mut overrides = BTreeMap::new();
        let mut errors = Vec::new();
        for (k, v) in m {
            if v.is_object() {
                errors.push(format!("\"{k}\": nested objects are not accepted, use dotted keys such as \"{k}.<field>\""));
            } else {
                overrides.insert(k, v);
            }
        }
        if !errors.is_empty() {
            return Err(CliError::Config(errors));
        }
        let cfg = Self::default().with_overrides(&overrides)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Self::from_json_str(&text).map_err(|e| match e {
            CliError::Parse { line, column, message } => {
                CliError::Parse { line, column, message: format!("{}: {message}", path.display()) }
            }
            other => other,
        })
    }

    pub fn ple_nu_m(&self) -> f64 {
        self.phonon.nu_m.unwrap_or(DEFAULT_PLE_NU_M_MHZ)
    }

    pub fn rabi_nu_m(&self) -> f64 {
        self.phonon.nu_m.unwrap_or(DEFAULT_RABI_NU_M_MHZ)
    }

    pub fn interference_nu_m(&self) -> f64 {
        self.phonon.nu_m.unwrap_or(DEFAULT_INTERFERENCE_NU_M_MHZ)
    }

    pub fn saw_nu_m(&self) -> f64 {
        self.saw.nu_m.or(self.phonon.nu_m).unwrap_or(DEFAULT_PLE_NU_M_MHZ)
    }

    /// Every violated invariant, one message per field.
    pub fn validate(&self) -> Result<(), CliError> {
        let mut errs = Vec::new();
        let mut check = |ok: bool, key: &str, value: f64, rule: &str| {
            if !ok {
                errs.push(format!("{key} = {value}: {rule}"));
            }
        };
        let e = &self.emitter;
        check(e.nu_gamma > 0.0, "emitter.nu_gamma", e.nu_gamma, "must be > 0");
        check(e.nu_phi >= 0.0, "emitter.nu_phi", e.nu_phi, "must be >= 0");
        check(e.sd_fwhm >= 0.0, "emitter.sd_fwhm", e.sd_fwhm, "must be >= 0");
        let m = &self.material;
        check(m.d_over_2pi > 0.0, "material.d_over_2pi", m.d_over_2pi, "must be > 0");
        check(m.saw_velocity > 0.0, "material.saw_velocity", m.saw_velocity, "must be > 0");
        check(m.mass > 0.0, "material.mass", m.mass, "must be > 0");
        let c = &self.calibration;
        check(c.eta_rf >= 0.0, "calibration.eta_rf", c.eta_rf, "must be >= 0");
        check(c.kappa_opt >= 0.0, "calibration.kappa_opt", c.kappa_opt, "must be >= 0");
        if let Some(v) = self.phonon.nu_m {
            check(v > 0.0, "phonon.nu_m", v, "must be > 0");
        }
        check(self.phonon.phi_m.is_finite(), "phonon.phi_m", self.phonon.phi_m, "must be finite");
        let p = &self.ple;
        check(p.p_o > 0.0, "ple.p_o", p.p_o, "must be > 0");
        check(p.p_rf >= 0.0, "ple.p_rf", p.p_rf, "must be >= 0");
        check(p.grid_points >= 8, "ple.grid_points", p.grid_points as f64, "must be >= 8");
        check(p.grid_half_span > 0.0, "ple.grid_half_span", p.grid_half_span, "must be > 0");
        for (k, v) in [("ple.transient_ns", p.transient_ns), ("ple.window_ns", p.window_ns)] {
            if let Some(v) = v {
                check(v >= 0.0, k, v, "must be >= 0");
            }
        }
        if let Some(n) = p.n_nodes {
            check(n >= 7 && n % 2 == 1, "ple.n_nodes", n as f64, "must be odd and >= 7");
        }
        let r = &self.rabi;
        check(r.pulse_ns > 0.0, "rabi.pulse_ns", r.pulse_ns, "must be > 0");
        check(r.bin_ns > 0.0 && r.bin_ns <= r.pulse_ns, "rabi.bin_ns", r.bin_ns, "must be in (0, rabi.pulse_ns]");
        if e.nu_gamma > 0.0 {
            check(r.rest_ns >= 5.0 / e.gamma(), "rabi.rest_ns", r.rest_ns, "must be >= 5/Gamma");
        }
        check(r.repetitions >= 1, "rabi.repetitions", r.repetitions as f64, "must be >= 1");
        check(r.nu_rabi >= 0.0, "rabi.nu_rabi", r.nu_rabi, "must be >= 0");
        check(r.p_rf >= 0.0, "rabi.p_rf", r.p_rf, "must be >= 0");
        if let Some(b) = r.beta {
            check(b >= 0.0, "rabi.beta", b, "must be >= 0");
        }
        check((0.0..=1.0).contains(&r.collection_eta), "rabi.collection_eta", r.collection_eta, "must be in [0, 1]");
        let i = &self.interference;
        check(i.beta >= 0.0, "interference.beta", i.beta, "must be >= 0");
        check(i.nu_rabi_sideband >= 0.0, "interference.nu_rabi_sideband", i.nu_rabi_sideband, "must be >= 0");
        check(i.nu_rabi_carrier >= 0.0, "interference.nu_rabi_carrier", i.nu_rabi_carrier, "must be >= 0");
        check(i.t_int_ns > 0.0, "interference.t_int_ns", i.t_int_ns, "must be > 0");
        if let Some(t) = i.transient_ns {
            check(t >= 0.0, "interference.transient_ns", t, "must be >= 0");
        }
        check(i.phase_points >= 4, "interference.phase_points", i.phase_points as f64, "must be >= 4");
        check(i.aom_points >= 3, "interference.aom_points", i.aom_points as f64, "must be >= 3");
        if let Some(s) = i.aom_half_span {
            check(s > 0.0, "interference.aom_half_span", s, "must be > 0");
        }
        let s = &self.saw;
        check(s.nu_rabi_sideband >= 0.0, "saw.nu_rabi_sideband", s.nu_rabi_sideband, "must be >= 0");
        check(s.nu_rabi > 0.0, "saw.nu_rabi", s.nu_rabi, "must be > 0");
        if let Some(v) = s.nu_m {
            check(v > 0.0, "saw.nu_m", v, "must be > 0");
        }
        let o = &self.oracle;
        check(o.alpha >= 0.0, "oracle.alpha", o.alpha, "must be >= 0");
        check(o.g >= 0.0, "oracle.g", o.g, "must be >= 0");
        check(o.nu_rabi >= 0.0, "oracle.nu_rabi", o.nu_rabi, "must be >= 0");
        check(o.flops > 0.0, "oracle.flops", o.flops, "must be > 0");
        check(o.fock_n_max >= 5, "oracle.fock_n_max", o.fock_n_max as f64, "must be >= 5 to hold |4⟩ and a margin");
        if self.output.dir.is_empty() {
            errs.push("output.dir: must not be empty".into());
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(CliError::Config(errs))
        }
    }

    /// Warnings for ν_m values that do not exceed the low-power linewidth.
    pub fn resolved_sideband_warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut seen = Vec::new();
        for (what, nu_m) in [("ple", self.ple_nu_m()), ("rabi", self.rabi_nu_m()), ("interference", self.interference_nu_m())] {
            if nu_m <= TARGET_LOW_POWER_FWHM_MHZ && !seen.contains(&nu_m) {
                seen.push(nu_m);
                out.push(format!(
                    "{what}: nu_m = {nu_m} MHz does not exceed the {TARGET_LOW_POWER_FWHM_MHZ} MHz linewidth; sidebands are not resolved"
                ));
            }
        }
        out
    }

    /// SHA-256 of the canonical (sorted, compact) resolved configuration,
    /// excluding the output directory.
    pub fn sha256(&self) -> String {
        let mut flat = self.to_flat();
        flat.remove("output.dir");
        let text = serde_json::to_string(&flat).expect("config serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }
}

fn strip_position(msg: &str) -> String {
    match msg.find(" at line ") {
        Some(i) => msg[..i].to_string(),
        None => msg.to_string(),
    }
}

/// Parses a command-line override value: JSON if it parses, else a string.
pub fn parse_override_value(s: &str) -> Value {
    serde_json::from_str(s).unwrap_or_else(|_| Value::String(s.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_gives_defaults() {
        assert_eq!(RunConfig::from_json_str("{}").unwrap(), RunConfig::default());
    }

    #[test]
    fn flat_round_trip() {
        let d = RunConfig::default();
        assert_eq!(serde_json::from_value::<RunConfig>(unflatten(&d.to_flat())).unwrap(), d);
        assert!(RunConfig::keys().contains(&"emitter.nu_gamma".to_string()));
    }

    #[test]
    fn negative_linewidth_names_the_field() {
        let e = RunConfig::from_json_str(r#"{"emitter.nu_gamma": -1}"#).unwrap_err();
        assert!(e.to_string().contains("emitter.nu_gamma"), "{e}");
    }

    #[test]
    fn all_violations_are_listed() {
        let e = RunConfig::from_json_str(r#"{"emitter.nu_gamma": -1, "rabi.bin_ns": 500, "ple.p_o": 0}"#).unwrap_err();
        match e {
            CliError::Config(v) => assert_eq!(v.len(), 3, "{v:?}"),
            other => panic!("{other}"),
        }
    }

    #[test]
    fn unknown_key_is_rejected() {
        let e = RunConfig::from_json_str(r#"{"emitter.nu_gama": 13}"#).unwrap_err();
        assert!(e.to_string().contains("emitter.nu_gama"));
    }

    #[test]
    fn type_mismatch_names_the_key() {
        let e = RunConfig::from_json_str(r#"{"rabi.repetitions": "many"}"#).unwrap_err();
        assert!(e.to_string().contains("rabi.repetitions"), "{e}");
    }

    #[test]
    fn parse_error_reports_position() {
        match RunConfig::from_json_str("{\n  \"ple.p_o\": 0.4,\n  oops\n}").unwrap_err() {
            CliError::Parse { line, column, .. } => {
                assert_eq!(line, 3);
                assert!(column > 0);
            }
            other => panic!("{other}"),
        }
    }

    #[test]
    fn shared_nu_m_selects_experiment_defaults() {
        let d = RunConfig::default();
        assert_eq!((d.ple_nu_m(), d.rabi_nu_m()), (900.0, 940.0));
        let c = RunConfig::from_json_str(r#"{"phonon.nu_m": 940}"#).unwrap();
        assert_eq!((c.ple_nu_m(), c.rabi_nu_m(), c.interference_nu_m()), (940.0, 940.0, 940.0));
    }

    #[test]
    fn unresolved_sidebands_warn() {
        assert!(RunConfig::default().resolved_sideband_warnings().is_empty());
        let c = RunConfig::from_json_str(r#"{"phonon.nu_m": 150}"#).unwrap();
        assert_eq!(c.resolved_sideband_warnings().len(), 1);
    }

    #[test]
    fn hash_tracks_the_resolved_config() {
        let a = RunConfig::default();
        let b = RunConfig::from_json_str(r#"{"ple.p_o": 0.4}"#).unwrap();
        let c = RunConfig::from_json_str(r#"{"ple.p_o": 0.5}"#).unwrap();
        assert_eq!(a.sha256(), b.sha256());
        assert_ne!(a.sha256(), c.sha256());
        let d = RunConfig::from_json_str(r#"{"output.dir": "elsewhere"}"#).unwrap();
        assert_eq!(a.sha256(), d.sha256());
    }

    #[test]
    fn override_values_parse_as_json_or_text() {
        assert_eq!(parse_override_value("0.5"), Value::from(0.5));
        assert_eq!(parse_override_value("null"), Value::Null);
        assert_eq!(parse_override_value("out/dir"), Value::String("out/dir".into()));
    }
}
