//! Keyed text serialisation of a trained model.
//!
//! Floats are written with Rust's shortest round-trip formatting, so a
//! load/save cycle reproduces the file byte for byte.

use std::fmt::Write as _;

use super::{LstmConfig, LstmModel, Params, Scaler, GATES};
use crate::error::{Error, Result};

const MAGIC: &str = "lclstm-model 1";

impl LstmModel {
    pub fn to_text(&self) -> String {
        let c = &self.config;
        let mut out = String::new();
        let _ = writeln!(out, "{MAGIC}");
        let _ = writeln!(out, "hidden_units {}", c.hidden_units);
        let _ = writeln!(out, "cell_activation {}", c.cell_activation.as_str());
        let _ = writeln!(out, "gate_activation {}", c.gate_activation.as_str());
        let _ = writeln!(out, "recurrent_activation {}", c.recurrent_activation.as_str());
        let _ = writeln!(out, "output_activation {}", c.output_activation.as_str());
        let _ = writeln!(out, "optimizer {}", c.optimizer.as_str());
        let _ = writeln!(out, "learning_rate {}", c.learning_rate);
        let _ = writeln!(out, "max_epochs {}", c.max_epochs);
        let _ = writeln!(out, "patience {}", c.patience);
        let _ = writeln!(out, "clip_norm {}", c.clip_norm);
        let _ = writeln!(out, "seed {}", c.seed);
        let _ = writeln!(out, "scaling {}", c.scaling.as_str());
        let _ = writeln!(out, "scaler_min {}", self.scaler.min);
        let _ = writeln!(out, "scaler_max {}", self.scaler.max);
        let p = &self.params;
        let mut tensor = |name: String, values: &[f64]| {
            out.push_str(&name);
            for v in values {
                let _ = write!(out, " {v}");
            }
            out.push('\n');
        };
        for (g, gate) in GATES.iter().enumerate() {
            tensor(format!("W_{gate}"), p.w(g));
            tensor(format!("U_{gate}"), p.u(g));
            tensor(format!("b_{gate}"), p.b(g));
        }
        tensor("V".into(), p.v());
        tensor("b_out".into(), &[p.b_out()]);
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |m: String| Error::ModelFormat(m);
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some(MAGIC) {
            return Err(bad(format!("missing header '{MAGIC}'")));
        }
        let mut fields = std::collections::HashMap::new();
        for line in lines {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let (key, rest) = line.split_once(' ').unwrap_or((line, ""));
            if fields.insert(key.to_string(), rest.trim().to_string()).is_some() {
                return Err(bad(format!("duplicate key '{key}'")));
            }
        }
        let get = |k: &str| fields.get(k).map(String::as_str).ok_or_else(|| bad(format!("missing key '{k}'")));
        fn num<T: std::str::FromStr>(k: &str, v: &str) -> Result<T> {
            v.parse().map_err(|_| Error::ModelFormat(format!("bad value for '{k}': '{v}'")))
        }
        let config = LstmConfig {
            hidden_units: num("hidden_units", get("hidden_units")?)?,
            cell_activation: get("cell_activation")?.parse()?,
            gate_activation: get("gate_activation")?.parse()?,
            recurrent_activation: get("recurrent_activation")?.parse()?,
            output_activation: get("output_activation")?.parse()?,
            optimizer: get("optimizer")?.parse()?,
            learning_rate: num("learning_rate", get("learning_rate")?)?,
            max_epochs: num("max_epochs", get("max_epochs")?)?,
            patience: num("patience", get("patience")?)?,
            clip_norm: num("clip_norm", get("clip_norm")?)?,
            seed: num("seed", get("seed")?)?,
            scaling: get("scaling")?.parse()?,
        };
        let scaler = Scaler { min: num("scaler_min", get("scaler_min")?)?, max: num("scaler_max", get("scaler_max")?)? };
        let h = config.hidden_units;
        let mut params = Params::zeros(h);
        let mut read = |name: String, range: std::ops::Range<usize>| -> Result<()> {
            let values: Vec<f64> =
                get(&name)?.split_whitespace().map(|v| num(&name, v)).collect::<Result<_>>()?;
            if values.len() != range.len() {
                return Err(bad(format!("tensor '{name}' has {} values, expected {}", values.len(), range.len())));
            }
            params.set(range, &values);
            Ok(())
        };
        let layout = Params::zeros(h);
        for (g, gate) in GATES.iter().enumerate() {
            read(format!("W_{gate}"), layout.w_range(g))?;
            read(format!("U_{gate}"), layout.u_range(g))?;
            read(format!("b_{gate}"), layout.b_range(g))?;
        }
        read("V".into(), layout.v_range())?;
        let bo = layout.b_out_index();
        read("b_out".into(), bo..bo + 1)?;
        LstmModel::with_params(config, params, scaler)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lstm::CellActivation;

    #[test]
    fn text_round_trip_is_exact() {
        let cfg = LstmConfig { hidden_units: 3, seed: 77, cell_activation: CellActivation::Tanh, ..Default::default() };
        let m = LstmModel::new(cfg, Scaler { min: -81.25, max: 33.1 }).unwrap();
        let text = m.to_text();
        let back = LstmModel::from_text(&text).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.to_text(), text);
    }

    #[test]
    fn malformed_files_are_rejected() {
        let m = LstmModel::new(LstmConfig { hidden_units: 2, ..Default::default() }, Scaler { min: 0.0, max: 1.0 }).unwrap();
        let text = m.to_text();
        assert!(LstmModel::from_text("garbage").is_err());
        assert!(LstmModel::from_text(&text.replace("hidden_units 2", "hidden_units 3")).is_err());
        assert!(LstmModel::from_text(&text.replace("b_out ", "b_out x")).is_err());
        let without_v: String = text.lines().filter(|l| !l.starts_with("V ")).map(|l| format!("{l}\n")).collect();
        assert!(LstmModel::from_text(&without_v).is_err());
    }
}
