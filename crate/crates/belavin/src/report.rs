//! Residual reports: one named check, its residual as a full-precision
//! decimal string, the tolerance it was held to, and enough configuration to
//! re-run it bit-for-bit.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::mp::Real;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ResidualReport {
    /// Stable identifier of the check, e.g. "ybe-vertex-n3".
    pub id: String,
    /// Residual as a decimal string at working precision.
    pub residual: String,
    /// Tolerance the residual was compared against (decimal string).
    pub tolerance: String,
    pub pass: bool,
    pub wall_ms: u128,
    /// Free-form reproduction details (seeds, draws, budgets).
    #[serde(default, skip_serializing_if = "serde_json::Map::is_empty")]
    pub meta: serde_json::Map<String, serde_json::Value>,
}

impl ResidualReport {
    pub fn from_real(id: &str, residual: &Real, tol_exp: i64, started: Instant) -> Self {
        let pass = residual.is_finite() && residual.abs().to_f64().log10() < tol_exp as f64;
        ResidualReport {
            id: id.to_string(),
            residual: residual.to_decimal(),
            tolerance: format!("1e{tol_exp}"),
            pass,
            wall_ms: started.elapsed().as_millis(),
            meta: serde_json::Map::new(),
        }
    }

    pub fn failure(id: &str, message: &str, started: Instant) -> Self {
        let mut meta = serde_json::Map::new();
        meta.insert("error".into(), serde_json::Value::String(message.to_string()));
        ResidualReport {
            id: id.to_string(),
            residual: "inf".into(),
            tolerance: "n/a".into(),
            pass: false,
            wall_ms: started.elapsed().as_millis(),
            meta,
        }
    }

    pub fn with_meta(mut self, key: &str, value: serde_json::Value) -> Self {
        self.meta.insert(key.to_string(), value);
        self
    }
}

/// A full verification run: configuration echo plus one report per check.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunReport {
    pub schema: u32,
    pub config: serde_json::Map<String, serde_json::Value>,
    pub checks: Vec<ResidualReport>,
    pub pass: bool,
}

impl RunReport {
    pub fn new(config: serde_json::Map<String, serde_json::Value>) -> Self {
        RunReport { schema: 1, config, checks: Vec::new(), pass: true }
    }

    pub fn push(&mut self, r: ResidualReport) {
        self.pass &= r.pass;
        self.checks.push(r);
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mp::{Ctx, Precision};

    #[test]
    fn report_pass_fail_logic() {
        let cx = Ctx::new(Precision::new(20));
        let started = Instant::now();
        let small = cx.pow10(-30);
        let r = ResidualReport::from_real("x", &small, -20, started);
        assert!(r.pass);
        let big = cx.pow10(-10);
        let r = ResidualReport::from_real("x", &big, -20, started);
        assert!(!r.pass);
        let mut run = RunReport::new(serde_json::Map::new());
        run.push(ResidualReport::from_real("ok", &small, -20, started));
        assert!(run.pass);
        run.push(ResidualReport::failure("bad", "boom", started));
        assert!(!run.pass);
        let js: RunReport = serde_json::from_str(&run.to_json()).unwrap();
        assert_eq!(js.schema, 1);
        assert_eq!(js.checks.len(), 2);
    }
}
