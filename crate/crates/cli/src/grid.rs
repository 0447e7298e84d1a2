use twr_ee::experiments::PlanKind;
use twr_ee::Error;

/// Parsed `--grid` value: an optional parameter name and the points.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub param: Option<String>,
    pub values: Vec<f64>,
}

impl GridSpec {
    /// Accepts `[name=]start:stop:step` (inclusive stop) or `[name=]value`.
    pub fn parse(spec: &str) -> Result<Self, Error> {
        let (param, range) = match spec.split_once('=') {
            Some((p, r)) => (Some(p.trim().to_ascii_lowercase()), r),
            None => (None, spec),
        };
        let num = |s: &str| {
            s.trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::Config(format!("grid {spec:?}: {s:?} is not a number")))
        };
        let parts: Vec<&str> = range.split(':').collect();
        let values = match parts.as_slice() {
            [v] => vec![num(v)?],
            [a, b, c] => {
                let (start, stop, step) = (num(a)?, num(b)?, num(c)?);
                if !(step > 0.0) || stop < start {
                    return Err(Error::Config(format!(
                        "grid {spec:?}: need step > 0 and stop >= start"
                    )));
                }
                let n = ((stop - start) / step + 1e-9).floor() as usize;
                if n > 100_000 {
                    return Err(Error::Config(format!("grid {spec:?} has too many points")));
                }
                // multiply rather than accumulate so points print cleanly
                (0..=n).map(|k| start + k as f64 * step).collect()
            }
            _ => return Err(Error::Config(format!("grid {spec:?}: expected start:stop:step"))),
        };
        Ok(Self { param, values })
    }

    /// Resolves the plan kind for a subcommand family. `sweep` and
    /// `feasibility` choose between transmit power and rate floor.
    pub fn kind(&self, feasibility: bool) -> Result<PlanKind, Error> {
        let param = self.param.as_deref().unwrap_or("pmax");
        match (param, feasibility) {
            ("pmax" | "p_max", false) => Ok(PlanKind::SweepPmax),
            ("pmax" | "p_max", true) => Ok(PlanKind::FeasibilityVsPmax),
            ("rt_min" | "rtmin", false) => Ok(PlanKind::SweepRtMin),
            ("rt_min" | "rtmin", true) => Ok(PlanKind::FeasibilityVsRtMin),
            _ => Err(Error::Config(format!("unknown grid parameter {param:?} (expected pmax or rt_min)"))),
        }
    }
}
