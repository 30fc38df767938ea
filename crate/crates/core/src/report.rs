//! Run reports: a `key = value` header followed by a comma-separated history
//! table.
//!
//! ```text
//! # dipl0 run report
//! format = 1
//! lambda = 0.025
//! ...
//! [history]
//! t,eq3_loss,fidelity,...
//! 1,123.5,...
//! ```
//!
//! Floats are written in shortest round-trip form, so parsing a report gives
//! back exactly the values that were written. Timings are in nanoseconds and
//! only present when requested, since they are the one part of a report that
//! changes between otherwise identical runs.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;
use std::time::Duration;

use crate::admm::{HistoryRow, PhaseTimings, RunConfig, Seeds};
use crate::error::{Error, Result};
use crate::metrics::Psnr;
use crate::net::NetSpec;

pub const REPORT_FORMAT: u32 = 1;

const HISTORY_MARKER: &str = "[history]";
const HISTORY_COLUMNS: [&str; 11] = [
    "t",
    "eq3_loss",
    "fidelity",
    "l0_count",
    "net_eq3_loss",
    "dual_residual",
    "prox_target_objective",
    "prox_solution_objective",
    "regions",
    "psnr",
    "ssim",
];

/// Files involved in a run, as given on the command line.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReportPaths {
    pub input: Option<String>,
    pub reference: Option<String>,
    pub output: Option<String>,
    pub weights: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub config: RunConfig,
    pub paths: ReportPaths,
    pub timing: Option<PhaseTimings>,
    pub history: Vec<HistoryRow>,
}

fn join<T: ToString>(xs: &[T]) -> String {
    xs.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

impl RunReport {
    pub fn to_text(&self) -> String {
        let c = &self.config;
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("format", REPORT_FORMAT.to_string());
        kv("lambda", c.lambda.to_string());
        kv("beta", c.beta.to_string());
        kv("gamma", c.gamma.to_string());
        kv("outer_iterations", c.outer_iterations.to_string());
        kv("inner_iterations", c.inner_iterations.to_string());
        kv("alpha", c.alpha.to_string());
        kv("lambda_eff", c.lambda_eff().to_string());
        kv("ramp_steps", c.ramp_steps.to_string());
        kv("epsilon", c.epsilon.to_string());
        kv("seed.weights", c.seeds.weights.to_string());
        kv("seed.input", c.seeds.input.to_string());
        kv("seed.v0w0", c.seeds.v0w0.to_string());
        kv("net.input_channels", c.net.input_channels.to_string());
        kv("net.output_channels", c.net.output_channels.to_string());
        kv("net.channels", join(&c.net.channels));
        kv("net.skip_channels", join(&c.net.skip_channels));
        kv("net.kernel_size", c.net.kernel_size.to_string());
        kv("net.leaky_slope", c.net.leaky_slope.to_string());
        let p = &self.paths;
        for (k, v) in [
            ("path.input", &p.input),
            ("path.reference", &p.reference),
            ("path.output", &p.output),
            ("path.weights", &p.weights),
        ] {
            if let Some(v) = v {
                kv(k, v.clone());
            }
        }
        if let Some(t) = &self.timing {
            kv("timing.theta_ns", t.theta.as_nanos().to_string());
            kv("timing.prox_ns", t.prox.as_nanos().to_string());
            kv("timing.total_ns", t.total.as_nanos().to_string());
        }
        let mut out = String::from("# dipl0 run report\n");
        out.push_str(&s);
        out.push_str(HISTORY_MARKER);
        out.push('\n');
        out.push_str(&HISTORY_COLUMNS.join(","));
        out.push('\n');
        for r in &self.history {
            let psnr = match r.psnr {
                Some(Psnr::Finite(v)) => v.to_string(),
                Some(Psnr::Infinite) => "inf".into(),
                None => String::new(),
            };
            let ssim = r.ssim.map(|v| v.to_string()).unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{}",
                r.t,
                r.eq3_loss,
                r.fidelity,
                r.l0_count,
                r.net_eq3_loss,
                r.dual_residual,
                r.prox_target_objective,
                r.prox_solution_objective,
                r.regions,
                psnr,
                ssim
            );
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut header = BTreeMap::new();
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        let mut saw_marker = false;
        for (n, line) in lines.by_ref() {
            if line == HISTORY_MARKER {
                saw_marker = true;
                break;
            }
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            if line.chars().any(char::is_control) {
                return Err(err(n, "control character in header"));
            }
            let (k, v) = line
                .split_once(" = ")
                .ok_or_else(|| err(n, "expected `key = value`"))?;
            if header.insert(k.to_string(), (n, v.to_string())).is_some() {
                return Err(err(n, &format!("duplicate key {k}")));
            }
        }
        if !saw_marker {
            return Err(err(text.lines().count() + 1, "missing [history] section"));
        }
        let mut h = Header(header);
        let format: u32 = h.req("format")?;
        if format != REPORT_FORMAT {
            return Err(err(1, &format!("unsupported report format {format}")));
        }
        let config = RunConfig {
            lambda: h.real("lambda")?,
            beta: h.real("beta")?,
            gamma: h.real("gamma")?,
            outer_iterations: h.req("outer_iterations")?,
            inner_iterations: h.req("inner_iterations")?,
            alpha: h.real("alpha")?,
            ramp_steps: h.req("ramp_steps")?,
            epsilon: h.real("epsilon")?,
            seeds: Seeds {
                weights: h.req("seed.weights")?,
                input: h.req("seed.input")?,
                v0w0: h.req("seed.v0w0")?,
            },
            net: NetSpec {
                input_channels: h.req("net.input_channels")?,
                output_channels: h.req("net.output_channels")?,
                channels: h.list("net.channels")?,
                skip_channels: h.list("net.skip_channels")?,
                kernel_size: h.req("net.kernel_size")?,
                leaky_slope: h.real("net.leaky_slope")?,
            },
        };
        // Derived, so only its presence is checked.
        h.real("lambda_eff")?;
        let paths = ReportPaths {
            input: h.take("path.input").map(|(_, v)| v),
            reference: h.take("path.reference").map(|(_, v)| v),
            output: h.take("path.output").map(|(_, v)| v),
            weights: h.take("path.weights").map(|(_, v)| v),
        };
        let timing = if h.0.contains_key("timing.total_ns") {
            let ns = |h: &mut Header, k: &str| -> Result<Duration> {
                Ok(Duration::from_nanos(h.req(k)?))
            };
            Some(PhaseTimings {
                theta: ns(&mut h, "timing.theta_ns")?,
                prox: ns(&mut h, "timing.prox_ns")?,
                total: ns(&mut h, "timing.total_ns")?,
            })
        } else {
            None
        };
        if let Some((k, (n, _))) = h.0.into_iter().next() {
            return Err(err(n, &format!("unknown key {k}")));
        }

        let (n, cols) = lines
            .next()
            .ok_or_else(|| err(0, "missing history columns"))?;
        if cols != HISTORY_COLUMNS.join(",") {
            return Err(err(n, "unexpected history columns"));
        }
        let mut history = Vec::new();
        for (n, line) in lines {
            if line.is_empty() {
                continue;
            }
            history.push(parse_row(n, line)?);
        }
        Ok(Self {
            config,
            paths,
            timing,
            history,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }
}

fn err(line: usize, msg: &str) -> Error {
    Error::Report {
        line,
        msg: msg.to_string(),
    }
}

fn parse_field<T: FromStr>(line: usize, key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| err(line, &format!("bad value {v:?} for {key}")))
}

fn parse_real(line: usize, key: &str, v: &str) -> Result<f64> {
    let x: f64 = parse_field(line, key, v)?;
    if x.is_finite() {
        Ok(x)
    } else {
        Err(err(line, &format!("non-finite value for {key}")))
    }
}

struct Header(BTreeMap<String, (usize, String)>);

impl Header {
    fn take(&mut self, k: &str) -> Option<(usize, String)> {
        self.0.remove(k)
    }

    fn req<T: FromStr>(&mut self, k: &str) -> Result<T> {
        let (n, v) = self
            .take(k)
            .ok_or_else(|| err(0, &format!("missing key {k}")))?;
        parse_field(n, k, &v)
    }

    fn real(&mut self, k: &str) -> Result<f64> {
        let (n, v) = self
            .take(k)
            .ok_or_else(|| err(0, &format!("missing key {k}")))?;
        parse_real(n, k, &v)
    }

    fn list(&mut self, k: &str) -> Result<Vec<usize>> {
        let (n, v) = self
            .take(k)
            .ok_or_else(|| err(0, &format!("missing key {k}")))?;
        if v.is_empty() {
            return Ok(Vec::new());
        }
        v.split(',').map(|x| parse_field(n, k, x)).collect()
    }
}

fn parse_row(n: usize, line: &str) -> Result<HistoryRow> {
    let f: Vec<&str> = line.split(',').collect();
    if f.len() != HISTORY_COLUMNS.len() {
        return Err(err(
            n,
            &format!("expected {} fields, got {}", HISTORY_COLUMNS.len(), f.len()),
        ));
    }
    let psnr = match f[9] {
        "" => None,
        "inf" => Some(Psnr::Infinite),
        v => Some(Psnr::Finite(parse_real(n, "psnr", v)?)),
    };
    let ssim = match f[10] {
        "" => None,
        v => Some(parse_real(n, "ssim", v)?),
    };
    Ok(HistoryRow {
        t: parse_field(n, "t", f[0])?,
        eq3_loss: parse_real(n, "eq3_loss", f[1])?,
        fidelity: parse_real(n, "fidelity", f[2])?,
        l0_count: parse_field(n, "l0_count", f[3])?,
        net_eq3_loss: parse_real(n, "net_eq3_loss", f[4])?,
        dual_residual: parse_real(n, "dual_residual", f[5])?,
        prox_target_objective: parse_real(n, "prox_target_objective", f[6])?,
        prox_solution_objective: parse_real(n, "prox_solution_objective", f[7])?,
        regions: parse_field(n, "regions", f[8])?,
        psnr,
        ssim,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn row(t: usize, x: f64) -> HistoryRow {
        HistoryRow {
            t,
            eq3_loss: x,
            fidelity: x / 3.0,
            l0_count: t * 7,
            net_eq3_loss: x * 0.5,
            dual_residual: 0.1 + x,
            prox_target_objective: 1e-300,
            prox_solution_objective: -0.0,
            regions: 3,
            psnr: if t.is_multiple_of(2) {
                Some(Psnr::Finite(x))
            } else {
                Some(Psnr::Infinite)
            },
            ssim: Some(0.123456789012345),
        }
    }

    fn sample() -> RunReport {
        RunReport {
            config: RunConfig::smoothing(3),
            paths: ReportPaths {
                input: Some("in put.png".into()),
                output: Some("out.png".into()),
                ..Default::default()
            },
            timing: Some(PhaseTimings {
                theta: Duration::from_nanos(123_456_789),
                prox: Duration::from_nanos(5),
                total: Duration::from_secs(2),
            }),
            history: vec![row(1, 0.1), row(2, 1.0 / 3.0)],
        }
    }

    #[test]
    fn round_trip() {
        let r = sample();
        let text = r.to_text();
        assert_eq!(RunReport::parse(&text).unwrap(), r);
        let untimed = RunReport { timing: None, ..r };
        assert_eq!(RunReport::parse(&untimed.to_text()).unwrap(), untimed);
        assert!(!untimed.to_text().contains("timing"));
    }

    #[test]
    fn rejects_malformed_reports() {
        let text = sample().to_text();
        assert!(RunReport::parse("").is_err());
        assert!(RunReport::parse(&text.replace("[history]", "")).is_err());
        assert!(RunReport::parse(&text.replace("lambda = ", "lambda =")).is_err());
        assert!(RunReport::parse(&text.replace("beta = 2.25", "beta = x")).is_err());
        assert!(RunReport::parse(&text.replace("gamma = 0.9\n", "")).is_err());
        assert!(RunReport::parse(&format!("bogus = 1\n{text}")).is_err());
        assert!(RunReport::parse(&format!("{text}1,2\n")).is_err());
        assert!(RunReport::parse(&text.replace("alpha = 0.001", "alpha = NaN")).is_err());
        assert!(RunReport::parse(&text.replace("out.png", "out\u{7}.png")).is_err());
    }

    proptest! {
        #[test]
        fn floats_survive(x in proptest::num::f64::NORMAL | proptest::num::f64::SUBNORMAL, t in 0usize..10_000) {
            let r = RunReport { history: vec![row(t, x)], ..sample() };
            prop_assert_eq!(RunReport::parse(&r.to_text()).unwrap(), r);
        }
    }
}
