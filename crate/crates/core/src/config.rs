//! Network and solver configuration.
//!
//! Configuration files are TOML with flat keys named after the struct fields
//! (SI units). Solver settings live under the `solver` table, so both
//! `[solver]` sections and `solver.key = value` lines work. Two shorthand
//! keys are accepted: `sigma2` sets all four noise variances and `p_max`
//! sets all three transmit caps.

use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NetworkConfig {
    pub n1: usize,
    pub n2: usize,
    pub nr: usize,
    pub sigma2_1: f64,
    pub sigma2_2: f64,
    pub sigma2_r: f64,
    /// Extra decoding noise after the power splitter at TR1.
    pub sigma2_d: f64,
    pub p1_max: f64,
    pub p2_max: f64,
    pub pr_max: f64,
    /// Sum of all six transmit/receive circuit powers in the network.
    pub pc_total: f64,
    pub p1_ct: f64,
    pub p1_cr: f64,
    /// Minimum total rate; each direction must carry half of it.
    pub rt_min: f64,
    pub xi_1: f64,
    pub xi_2: f64,
    pub xi_r: f64,
    pub time_interval: f64,
    pub eh_efficiency: f64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            n1: 2,
            n2: 2,
            nr: 2,
            sigma2_1: 0.2,
            sigma2_2: 0.2,
            sigma2_r: 0.2,
            sigma2_d: 0.2,
            p1_max: 8.0,
            p2_max: 8.0,
            pr_max: 8.0,
            pc_total: 3.0,
            // six circuit terms share the 3 W budget equally
            p1_ct: 0.5,
            p1_cr: 0.5,
            rt_min: 1.0,
            xi_1: 1.0,
            xi_2: 1.0,
            xi_r: 1.0,
            time_interval: 1.0,
            eh_efficiency: 1.0,
        }
    }
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n1 == 0 || self.n2 == 0 || self.nr == 0 {
            return Err(Error::Config(format!(
                "antenna counts must be positive (n1={}, n2={}, nr={})",
                self.n1, self.n2, self.nr
            )));
        }
        let nonneg = [
            ("sigma2_1", self.sigma2_1),
            ("sigma2_2", self.sigma2_2),
            ("sigma2_r", self.sigma2_r),
            ("sigma2_d", self.sigma2_d),
            ("p1_max", self.p1_max),
            ("p2_max", self.p2_max),
            ("pr_max", self.pr_max),
            ("pc_total", self.pc_total),
            ("p1_ct", self.p1_ct),
            ("p1_cr", self.p1_cr),
            ("rt_min", self.rt_min),
        ];
        for (name, v) in nonneg {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!(
                    "{name} must be finite and >= 0, got {v}"
                )));
            }
        }
        if self.pc_total <= 0.0 {
            return Err(Error::Config("pc_total must be > 0".into()));
        }
        if self.pc_total + 1e-12 < self.p1_ct + self.p1_cr {
            return Err(Error::Config(format!(
                "pc_total ({}) must cover p1_ct + p1_cr ({})",
                self.pc_total,
                self.p1_ct + self.p1_cr
            )));
        }
        for (name, v) in [
            ("xi_1", self.xi_1),
            ("xi_2", self.xi_2),
            ("xi_r", self.xi_r),
            ("eh_efficiency", self.eh_efficiency),
        ] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::Config(format!("{name} must lie in (0, 1], got {v}")));
            }
        }
        if !(self.time_interval > 0.0 && self.time_interval.is_finite()) {
            return Err(Error::Config("time_interval must be > 0".into()));
        }
        Ok(())
    }

    /// Sets the four noise variances to the same value.
    pub fn set_noise(&mut self, sigma2: f64) {
        self.sigma2_1 = sigma2;
        self.sigma2_2 = sigma2;
        self.sigma2_r = sigma2;
        self.sigma2_d = sigma2;
    }

    /// Sets the three transmit caps to the same value.
    pub fn set_power_caps(&mut self, p_max: f64) {
        self.p1_max = p_max;
        self.p2_max = p_max;
        self.pr_max = p_max;
    }

    /// Power TR1 must cover from harvesting besides its transmit power.
    pub fn tr1_circuit_power(&self) -> f64 {
        self.p1_ct + self.p1_cr
    }

    fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn count(key: &str, value: &str) -> Result<usize> {
            value.parse::<usize>().map_err(|_| {
                Error::Config(format!(
                    "{key}: expected a non-negative integer, got {value:?}"
                ))
            })
        }
        fn real(key: &str, value: &str) -> Result<f64> {
            value
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("{key}: expected a number, got {value:?}")))
        }
        match key {
            "n1" => self.n1 = count(key, value)?,
            "n2" => self.n2 = count(key, value)?,
            "nr" => self.nr = count(key, value)?,
            "sigma2_1" => self.sigma2_1 = real(key, value)?,
            "sigma2_2" => self.sigma2_2 = real(key, value)?,
            "sigma2_r" => self.sigma2_r = real(key, value)?,
            "sigma2_d" => self.sigma2_d = real(key, value)?,
            "sigma2" => self.set_noise(real(key, value)?),
            "p1_max" => self.p1_max = real(key, value)?,
            "p2_max" => self.p2_max = real(key, value)?,
            "pr_max" => self.pr_max = real(key, value)?,
            "p_max" => self.set_power_caps(real(key, value)?),
            "pc_total" => self.pc_total = real(key, value)?,
            "p1_ct" => self.p1_ct = real(key, value)?,
            "p1_cr" => self.p1_cr = real(key, value)?,
            "rt_min" => self.rt_min = real(key, value)?,
            "xi_1" => self.xi_1 = real(key, value)?,
            "xi_2" => self.xi_2 = real(key, value)?,
            "xi_r" => self.xi_r = real(key, value)?,
            "time_interval" => self.time_interval = real(key, value)?,
            "eh_efficiency" => self.eh_efficiency = real(key, value)?,
            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolverOptions {
    /// Dinkelbach stops once F(mu) drops to this value.
    pub dinkelbach_tol: f64,
    /// Duality-gap target of the barrier inner solver.
    pub inner_tol: f64,
    pub barrier_mu0: f64,
    pub barrier_shrink: f64,
    pub max_outer_iters: usize,
    pub max_dinkelbach_iters: usize,
    /// Relative EE change below which the alternation stops.
    pub alt_tol: f64,
    pub rng_seed: u64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            dinkelbach_tol: 1e-6,
            inner_tol: 1e-7,
            barrier_mu0: 1.0,
            barrier_shrink: 0.2,
            max_outer_iters: 200,
            max_dinkelbach_iters: 50,
            alt_tol: 1e-6,
            rng_seed: 0,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("solver.dinkelbach_tol", self.dinkelbach_tol),
            ("solver.inner_tol", self.inner_tol),
            ("solver.barrier_mu0", self.barrier_mu0),
            ("solver.alt_tol", self.alt_tol),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be > 0, got {v}")));
            }
        }
        if !(self.barrier_shrink > 0.0 && self.barrier_shrink < 1.0) {
            return Err(Error::Config(format!(
                "solver.barrier_shrink must lie in (0, 1), got {}",
                self.barrier_shrink
            )));
        }
        if self.max_outer_iters == 0 || self.max_dinkelbach_iters == 0 {
            return Err(Error::Config("iteration caps must be >= 1".into()));
        }
        Ok(())
    }

    fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let bad =
            |what: &str| Error::Config(format!("solver.{key}: expected {what}, got {value:?}"));
        match key {
            "dinkelbach_tol" => self.dinkelbach_tol = value.parse().map_err(|_| bad("a number"))?,
            "inner_tol" => self.inner_tol = value.parse().map_err(|_| bad("a number"))?,
            "barrier_mu0" => self.barrier_mu0 = value.parse().map_err(|_| bad("a number"))?,
            "barrier_shrink" => self.barrier_shrink = value.parse().map_err(|_| bad("a number"))?,
            "max_outer_iters" => {
                self.max_outer_iters = value.parse().map_err(|_| bad("an integer"))?
            }
            "max_dinkelbach_iters" => {
                self.max_dinkelbach_iters = value.parse().map_err(|_| bad("an integer"))?
            }
            "alt_tol" => self.alt_tol = value.parse().map_err(|_| bad("a number"))?,
            "rng_seed" => self.rng_seed = value.parse().map_err(|_| bad("an integer"))?,
            _ => return Err(Error::Config(format!("unknown key \"solver.{key}\""))),
        }
        Ok(())
    }
}

/// Everything a run needs: network parameters plus solver settings.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Settings {
    pub network: NetworkConfig,
    pub solver: SolverOptions,
}

impl Settings {
    /// Applies one dotted `key=value` assignment.
    pub fn apply(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim();
        let value = value.trim();
        match key.split_once('.') {
            Some(("solver", rest)) => self.solver.set(rest, value),
            Some(("network", rest)) => self.network.set(rest, value),
            Some(_) => Err(Error::Config(format!("unknown key {key:?}"))),
            None => self.network.set(key, value),
        }
    }

    /// Applies an override of the form `key=value`.
    pub fn apply_assignment(&mut self, assignment: &str) -> Result<()> {
        let (key, value) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override {assignment:?} is not key=value")))?;
        self.apply(key, value)
    }

    /// Parses TOML text and applies every key on top of `self`.
    pub fn merge_toml(&mut self, text: &str) -> Result<()> {
        let table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))?;
        let mut flat = Vec::new();
        flatten("", &table, &mut flat)?;
        for (key, value) in flat {
            self.apply(&key, &value)?;
        }
        Ok(())
    }

    /// Loads a config file over the defaults. The literal path `defaults`
    /// returns the built-in defaults.
    pub fn load(path: &Path) -> Result<Self> {
        let mut settings = Self::default();
        if path.as_os_str() == "defaults" {
            return Ok(settings);
        }
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        settings.merge_toml(&text)?;
        Ok(settings)
    }

    pub fn validate(&self) -> Result<()> {
        self.network.validate()?;
        self.solver.validate()
    }
}

fn flatten(prefix: &str, table: &toml::Table, out: &mut Vec<(String, String)>) -> Result<()> {
    for (k, v) in table {
        let key = if prefix.is_empty() {
            k.clone()
        } else {
            format!("{prefix}.{k}")
        };
        match v {
            toml::Value::Table(t) => flatten(&key, t, out)?,
            toml::Value::Integer(i) => out.push((key, i.to_string())),
            toml::Value::Float(f) => out.push((key, f.to_string())),
            toml::Value::String(s) => out.push((key, s.clone())),
            other => {
                return Err(Error::Config(format!(
                    "{key}: unsupported value type {}",
                    other.type_str()
                )))
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_reference_setup() {
        let c = NetworkConfig::default();
        assert_eq!((c.n1, c.n2, c.nr), (2, 2, 2));
        assert_eq!(c.pc_total, 3.0);
        assert_eq!(c.rt_min, 1.0);
        assert_eq!(c.p1_max, 8.0);
        assert_eq!(c.sigma2_r, 0.2);
        assert_eq!(c.eh_efficiency, 1.0);
        c.validate().unwrap();
    }

    #[test]
    fn toml_sections_and_dotted_keys() {
        let mut s = Settings::default();
        s.merge_toml("nr = 4\np_max = 6.0\nsolver.dinkelbach_tol = 1e-8\n")
            .unwrap();
        s.merge_toml("[solver]\nmax_outer_iters = 7\n").unwrap();
        assert_eq!(s.network.nr, 4);
        assert_eq!(s.network.pr_max, 6.0);
        assert_eq!(s.solver.dinkelbach_tol, 1e-8);
        assert_eq!(s.solver.max_outer_iters, 7);
    }

    #[test]
    fn overrides_win_and_unknown_keys_fail() {
        let mut s = Settings::default();
        s.apply_assignment("solver.alt_tol=1e-3").unwrap();
        s.apply_assignment("sigma2=0.8").unwrap();
        assert_eq!(s.solver.alt_tol, 1e-3);
        assert_eq!(s.network.sigma2_d, 0.8);
        assert!(s.apply_assignment("bogus=1").is_err());
        assert!(s.apply_assignment("solver.bogus=1").is_err());
        assert!(s.apply_assignment("n1").is_err());
    }

    #[test]
    fn validation_rejects_bad_values() {
        let mut c = NetworkConfig::default();
        c.nr = 0;
        assert!(c.validate().is_err());
        let mut c = NetworkConfig::default();
        c.xi_r = 1.5;
        assert!(c.validate().is_err());
        let mut c = NetworkConfig::default();
        c.p1_ct = 2.0;
        c.p1_cr = 2.0;
        assert!(c.validate().is_err());
        let mut o = SolverOptions::default();
        o.barrier_shrink = 1.0;
        assert!(o.validate().is_err());
    }
}
