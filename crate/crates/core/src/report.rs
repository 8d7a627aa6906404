//! Output formatting: CSV series and provenance-stamped JSON documents.

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::governance::{GovernanceEvaluation, GovernanceTrace};
use crate::lab::SweepResult;
use crate::net::SimulationTrace;

pub const TRACE_HEADER: &str = "tick,created,delivered,dropped,in_flight,queue_total,mean_delay";
pub const SWEEP_HEADER: &str = "lambda,rho_mean,rho_std,seeds";
pub const GOVERNANCE_HEADER: &str = "tick,reason,examined,U_g,config_json";
pub const UTILITY_HEADER: &str = "tick,U_g";
pub const COUPLED_HEADER: &str = "tick,n,U";

/// `printf("%g")` formatting with 6 significant digits.
pub fn fmt_g(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..6).contains(&exp) {
        let mantissa = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mantissa}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (5 - exp) as usize;
        trim_zeros(&format!("{x:.decimals$}")).to_owned()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// SHA-256 of the canonical JSON form of `value` (object keys sorted).
pub fn content_hash<T: Serialize>(value: &T) -> String {
    let canonical = serde_json::to_value(value).expect("plain JSON").to_string();
    hex::encode(Sha256::digest(canonical.as_bytes()))
}

/// Where an artifact came from.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    pub scenario_hash: String,
    pub seeds: Vec<u64>,
}

impl Provenance {
    /// Comment line preceding the CSV header.
    pub fn csv_comment(&self) -> String {
        let seeds: Vec<String> = self.seeds.iter().map(u64::to_string).collect();
        format!("# {} {} scenario_hash={} seeds={}\n", self.tool, self.version, self.scenario_hash, seeds.join(";"))
    }
}

/// Pretty JSON of `body` with a `provenance` member added.
pub fn stamped_json<T: Serialize>(provenance: &Provenance, body: &T) -> String {
    let mut map = serde_json::Map::new();
    map.insert("provenance".into(), serde_json::to_value(provenance).expect("plain JSON"));
    match serde_json::to_value(body).expect("plain JSON") {
        serde_json::Value::Object(fields) => map.extend(fields),
        other => {
            map.insert("result".into(), other);
        }
    }
    let mut out = serde_json::to_string_pretty(&serde_json::Value::Object(map)).expect("plain JSON");
    out.push('\n');
    out
}

fn csv_document(provenance: &Provenance, header: &str, rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut writer = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    for row in rows {
        writer.write_record(&row).expect("in-memory write");
    }
    let body = String::from_utf8(writer.into_inner().expect("in-memory flush")).expect("utf-8 fields");
    format!("{}{header}\n{body}", provenance.csv_comment())
}

pub fn trace_csv(provenance: &Provenance, trace: &SimulationTrace) -> String {
    csv_document(
        provenance,
        TRACE_HEADER,
        trace.records.iter().map(|r| {
            vec![
                r.tick.to_string(),
                r.created.to_string(),
                r.delivered.to_string(),
                r.dropped.to_string(),
                r.in_flight.to_string(),
                r.queue_total.to_string(),
                fmt_g(r.mean_delay()),
            ]
        }),
    )
}

pub fn sweep_csv(provenance: &Provenance, sweep: &SweepResult) -> String {
    csv_document(
        provenance,
        SWEEP_HEADER,
        sweep.points.iter().map(|p| vec![fmt_g(p.value), fmt_g(p.mean), fmt_g(p.std), p.seeds.to_string()]),
    )
}

pub fn governance_csv(provenance: &Provenance, trace: &GovernanceTrace) -> String {
    csv_document(
        provenance,
        GOVERNANCE_HEADER,
        trace.entries.iter().map(|e| {
            vec![
                e.tick.to_string(),
                e.reason.as_str().to_owned(),
                e.examined.to_string(),
                fmt_g(e.global_utility),
                e.configuration.to_json(),
            ]
        }),
    )
}

pub fn utility_csv(provenance: &Provenance, series: &[f64]) -> String {
    csv_document(provenance, UTILITY_HEADER, series.iter().enumerate().map(|(t, u)| vec![t.to_string(), fmt_g(*u)]))
}

pub fn coupled_csv(provenance: &Provenance, n: &[u32], utility: &[f64]) -> String {
    csv_document(
        provenance,
        COUPLED_HEADER,
        n.iter().zip(utility).enumerate().map(|(t, (k, u))| vec![t.to_string(), k.to_string(), fmt_g(*u)]),
    )
}

/// One column per objective, then the global utility and the configuration.
pub fn pareto_csv(provenance: &Provenance, objectives: &[String], evaluations: &[GovernanceEvaluation]) -> String {
    let mut header: Vec<String> = objectives.to_vec();
    header.push("U_g".into());
    header.push("config_json".into());
    csv_document(
        provenance,
        &header.join(","),
        evaluations.iter().map(|e| {
            let mut row: Vec<String> = objectives.iter().map(|o| fmt_g(e.utility_of(o).unwrap_or(f64::NAN))).collect();
            row.push(fmt_g(e.global_utility));
            row.push(e.configuration.to_json());
            row
        }),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn g_format() {
        let cases = [
            (0.0, "0"),
            (1.0, "1"),
            (0.1, "0.1"),
            (1.0 / 3.0, "0.333333"),
            (2.0 / 3.0, "0.666667"),
            (123456.0, "123456"),
            (1234567.0, "1.23457e+06"),
            (0.0001, "0.0001"),
            (0.00001234, "1.234e-05"),
            (-2.5, "-2.5"),
            (999999.5, "1e+06"),
            (59.7724, "59.7724"),
            (f64::NAN, "nan"),
        ];
        for (x, want) in cases {
            assert_eq!(fmt_g(x), want, "{x}");
        }
    }

    #[test]
    fn csv_has_comment_then_fixed_header() {
        let prov = Provenance {
            tool: "netgov".into(),
            version: "0.1.0".into(),
            scenario_hash: "ab".into(),
            seeds: vec![1, 2],
        };
        let text = utility_csv(&prov, &[1.5, 2.0]);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines, vec!["# netgov 0.1.0 scenario_hash=ab seeds=1;2", "tick,U_g", "0,1.5", "1,2"]);
    }

    #[test]
    fn stamped_json_carries_provenance() {
        let prov = Provenance { tool: "t".into(), version: "v".into(), scenario_hash: "h".into(), seeds: vec![3] };
        let text = stamped_json(&prov, &serde_json::json!({"x": 1}));
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["provenance"]["seeds"][0], 3);
        assert_eq!(v["x"], 1);
    }
}
