//! System configuration: the full description of a J-class/J-pool periodic
//! queueing instance, its JSON schema, and validation.

use serde::{Deserialize, Serialize};

use crate::Error;

/// Current config schema version.
pub const SCHEMA_VERSION: u32 = 1;

/// One overflow route for a customer class: destination pool and the
/// one-time cost of sending a customer there.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Route {
    /// Destination pool index (0-based).
    pub to: usize,
    /// One-time overflow cost B_{i,j}.
    pub cost: f64,
}

/// Full specification of a periodic multi-class parallel-server instance.
///
/// Arrival profiles are stored as per-epoch mean counts (the integral of the
/// rate function over each epoch), which is the only form the dynamics ever
/// need. The discharge CDF is stored at the `m + 1` epoch boundaries.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SystemConfig {
    /// Schema version; must equal [`SCHEMA_VERSION`].
    pub schema: u32,
    /// Human-readable instance name.
    pub name: String,
    /// Number of customer classes / server pools (J).
    pub classes: usize,
    /// Servers per pool (N_j), one entry per pool.
    pub servers: Vec<u32>,
    /// Decision epochs per day (m). Epoch 0 is midnight.
    pub epochs_per_day: usize,
    /// Per-class daily arrival rate Λ_j.
    pub daily_rate: Vec<f64>,
    /// Per-class, per-epoch mean arrival counts Λ_j^h, `classes` rows of
    /// `epochs_per_day` entries. Row sums must match `daily_rate`.
    pub arrivals: Vec<Vec<f64>>,
    /// Daily discharge probability μ_j per pool.
    pub discharge_prob: Vec<f64>,
    /// Within-day discharge CDF F_j per pool, evaluated at the `m + 1`
    /// epoch boundaries: F_j(0) = 0, nondecreasing, final value 1.
    pub discharge_cdf: Vec<Vec<f64>>,
    /// Ordered overflow routes per class: preferred pool first, then
    /// secondary pools in priority order. A class never routes to itself.
    pub routes: Vec<Vec<Route>>,
    /// Per-epoch holding cost C_j per waiting customer of class j.
    pub holding_cost: Vec<f64>,
}

impl SystemConfig {
    /// Number of classes/pools.
    pub fn j(&self) -> usize {
        self.classes
    }

    /// Epochs per day.
    pub fn m(&self) -> usize {
        self.epochs_per_day
    }

    /// Mean arrivals of class `i` between epoch `h` and the next epoch.
    pub fn epoch_arrivals(&self, i: usize, h: usize) -> f64 {
        self.arrivals[i][h]
    }

    /// Whether pool `j` is an overflow destination for class `i`.
    pub fn is_route(&self, i: usize, j: usize) -> bool {
        self.routes[i].iter().any(|r| r.to == j)
    }

    /// Overflow cost B_{i,j}, or `None` if `j` is not a route of class `i`.
    pub fn route_cost(&self, i: usize, j: usize) -> Option<f64> {
        self.routes[i].iter().find(|r| r.to == j).map(|r| r.cost)
    }

    /// Probability that a to-be-discharged customer of pool `j`, still
    /// present at epoch `h`, departs before epoch `h + 1`:
    /// p_j^h = (F_j(h+1) − F_j(h)) / (1 − F_j(h)).
    ///
    /// There are no departures out of the midnight epoch, so `h = 0` is an
    /// error. When no mass remains (F_j(h) = 1) the result is 0.
    pub fn discharge_epoch_prob(&self, j: usize, h: usize) -> Result<f64, Error> {
        if h == 0 {
            return Err(Error::Dynamics(
                "midnight has no departures (discharge probability undefined at h=0)".into(),
            ));
        }
        if h >= self.m() {
            return Err(Error::Dynamics(format!(
                "epoch {h} out of range for m={}",
                self.m()
            )));
        }
        let f = &self.discharge_cdf[j];
        let remaining = 1.0 - f[h];
        if remaining <= 0.0 {
            return Ok(0.0);
        }
        Ok(((f[h + 1] - f[h]) / remaining).clamp(0.0, 1.0))
    }

    /// Validates every config invariant, returning one message per
    /// violation. An empty list means the config is usable.
    pub fn validate(&self) -> Vec<String> {
        let mut v = Vec::new();
        let j = self.classes;
        if self.schema != SCHEMA_VERSION {
            v.push(format!(
                "schema: expected {SCHEMA_VERSION}, got {}",
                self.schema
            ));
        }
        if j == 0 {
            v.push("classes: must be at least 1".into());
            return v;
        }
        if self.epochs_per_day == 0 {
            v.push("epochs_per_day: must be at least 1".into());
            return v;
        }
        let m = self.epochs_per_day;
        for (name, len) in [
            ("servers", self.servers.len()),
            ("daily_rate", self.daily_rate.len()),
            ("arrivals", self.arrivals.len()),
            ("discharge_prob", self.discharge_prob.len()),
            ("discharge_cdf", self.discharge_cdf.len()),
            ("routes", self.routes.len()),
            ("holding_cost", self.holding_cost.len()),
        ] {
            if len != j {
                v.push(format!("{name}: expected {j} entries, got {len}"));
            }
        }
        if !v.is_empty() {
            return v;
        }
        for (p, &n) in self.servers.iter().enumerate() {
            if n < 1 {
                v.push(format!("servers[{p}]: must be >= 1"));
            }
        }
        for (i, row) in self.arrivals.iter().enumerate() {
            if row.len() != m {
                v.push(format!(
                    "arrivals[{i}]: expected {m} epochs, got {}",
                    row.len()
                ));
                continue;
            }
            for (h, &a) in row.iter().enumerate() {
                if !(a >= 0.0) {
                    v.push(format!("arrivals[{i}][{h}]: must be >= 0, got {a}"));
                }
            }
            let sum: f64 = row.iter().sum();
            if (sum - self.daily_rate[i]).abs() > 1e-12 * self.daily_rate[i].max(1.0) {
                v.push(format!(
                    "arrivals[{i}]: epoch means sum to {sum}, daily_rate is {}",
                    self.daily_rate[i]
                ));
            }
        }
        for (p, &mu) in self.discharge_prob.iter().enumerate() {
            if !(0.0..=1.0).contains(&mu) {
                v.push(format!("discharge_prob[{p}]: must be in [0,1], got {mu}"));
            }
        }
        for (p, f) in self.discharge_cdf.iter().enumerate() {
            if f.len() != m + 1 {
                v.push(format!(
                    "discharge_cdf[{p}]: expected {} boundary values, got {}",
                    m + 1,
                    f.len()
                ));
                continue;
            }
            if f[0] != 0.0 {
                v.push(format!("discharge_cdf[{p}][0]: must be 0, got {}", f[0]));
            }
            if (f[m] - 1.0).abs() > 1e-12 {
                v.push(format!(
                    "discharge_cdf[{p}][{m}]: final value must be 1, got {}",
                    f[m]
                ));
            }
            for h in 0..m {
                if f[h + 1] < f[h] - 1e-15 {
                    v.push(format!(
                        "discharge_cdf[{p}]: decreasing between epochs {h} and {}",
                        h + 1
                    ));
                }
                if !(0.0..=1.0 + 1e-12).contains(&f[h + 1]) {
                    v.push(format!(
                        "discharge_cdf[{p}][{}]: must be in [0,1], got {}",
                        h + 1,
                        f[h + 1]
                    ));
                }
            }
        }
        for (i, routes) in self.routes.iter().enumerate() {
            let mut seen = vec![false; j];
            for (r, route) in routes.iter().enumerate() {
                if route.to == i {
                    v.push(format!("routes[{i}][{r}]: class cannot overflow to its own pool"));
                } else if route.to >= j {
                    v.push(format!(
                        "routes[{i}][{r}]: pool {} out of range",
                        route.to
                    ));
                } else if seen[route.to] {
                    v.push(format!("routes[{i}][{r}]: duplicate route to pool {}", route.to));
                } else {
                    seen[route.to] = true;
                }
                if !(route.cost >= 0.0) {
                    v.push(format!(
                        "routes[{i}][{r}]: cost must be >= 0, got {}",
                        route.cost
                    ));
                }
            }
        }
        for (p, &c) in self.holding_cost.iter().enumerate() {
            if !(c >= 0.0) {
                v.push(format!("holding_cost[{p}]: must be >= 0, got {c}"));
            }
        }
        v
    }

    /// Parses and validates a config from JSON.
    pub fn from_json(text: &str) -> Result<Self, Error> {
        let cfg: SystemConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(vec![e.to_string()]))?;
        let violations = cfg.validate();
        if violations.is_empty() {
            Ok(cfg)
        } else {
            Err(Error::Config(violations))
        }
    }

    /// Serializes the config as pretty JSON.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;

    #[test]
    fn five_pool_preset_is_valid() {
        let cfg = presets::by_name("fivepool-balanced").unwrap().system;
        assert!(cfg.validate().is_empty());
    }

    #[test]
    fn decreasing_cdf_names_pool_and_epoch() {
        let mut cfg = presets::by_name("fivepool-balanced").unwrap().system;
        let m = cfg.m();
        cfg.discharge_cdf[2][m - 1] = cfg.discharge_cdf[2][m] + 0.5;
        let violations = cfg.validate();
        assert!(violations.iter().any(|v| v.contains("discharge_cdf[2]")), "{violations:?}");
    }

    #[test]
    fn route_to_self_is_rejected() {
        let mut cfg = presets::by_name("twopool-midnight").unwrap().system;
        cfg.routes[0].push(Route { to: 0, cost: 5.0 });
        let violations = cfg.validate();
        assert_eq!(violations.len(), 1);
        assert!(violations[0].contains("own pool"));
    }

    #[test]
    fn uniform_cdf_discharge_prob() {
        // F spreading mass uniformly over epochs 1..m gives p^h = 1/(m-h).
        let mut cfg = presets::by_name("twopool-midnight").unwrap().system;
        let m = 8;
        cfg.epochs_per_day = m;
        cfg.arrivals = vec![vec![6.25 / m as f64; m]; 2];
        let mut f = vec![0.0];
        for h in 1..=m {
            f.push(((h as f64 - 1.0) / (m as f64 - 1.0)).min(1.0));
        }
        cfg.discharge_cdf = vec![f; 2];
        assert!(cfg.validate().is_empty());
        let p = cfg.discharge_epoch_prob(0, 1).unwrap();
        assert!((p - 1.0 / 7.0).abs() < 1e-12);
        // Telescoping: survival through all departure epochs is zero.
        let mut survive = 1.0;
        for h in 1..m {
            survive *= 1.0 - cfg.discharge_epoch_prob(0, h).unwrap();
        }
        assert!(survive.abs() < 1e-12);
    }

    #[test]
    fn midnight_discharge_prob_is_error() {
        let cfg = presets::by_name("fivepool-balanced").unwrap().system;
        assert!(cfg.discharge_epoch_prob(0, 0).is_err());
    }

    #[test]
    fn exhausted_cdf_returns_zero() {
        let mut cfg = presets::by_name("fivepool-balanced").unwrap().system;
        let m = cfg.m();
        for h in 2..=m {
            cfg.discharge_cdf[0][h] = 1.0;
        }
        assert_eq!(cfg.discharge_epoch_prob(0, 3).unwrap(), 0.0);
    }

    #[test]
    fn json_round_trip() {
        let cfg = presets::by_name("tenpool").unwrap().system;
        let text = cfg.to_json();
        let back = SystemConfig::from_json(&text).unwrap();
        assert_eq!(back.servers, cfg.servers);
        assert_eq!(back.routes, cfg.routes);
    }
}
