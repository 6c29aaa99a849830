//! Analytic success probability against a Monte Carlo estimate.

use std::io::Write;
use std::path::Path;

use super::HarnessError;
use crate::channel::montecarlo::success_grid;
use crate::channel::{linear_to_db, success_probability, ChannelParams};

pub const VALIDATION_CSV_HEADER: &str = "zeta_db,r,S_analytic,S_montecarlo,abs_err";

/// Thresholds (linear) and distances (meters) of the audit grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelGrid {
    pub zetas: Vec<f64>,
    pub distances: Vec<f64>,
    pub samples: usize,
    pub seed: u64,
    pub field_radius: f64,
    pub tolerance: f64,
}

impl Default for ChannelGrid {
    fn default() -> Self {
        Self {
            zetas: vec![0.0, 1.0, 3.0, 10.0, 31.6],
            distances: vec![50.0, 100.0, 200.0, 400.0, 800.0],
            samples: 100_000,
            seed: 0,
            field_radius: crate::channel::montecarlo::DEFAULT_FIELD_RADIUS,
            tolerance: 0.01,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValidationRow {
    pub zeta_db: f64,
    pub r: f64,
    pub s_analytic: f64,
    pub s_montecarlo: f64,
    pub abs_err: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub rows: Vec<ValidationRow>,
    pub tolerance: f64,
}

impl ValidationReport {
    pub fn max_abs_err(&self) -> f64 {
        self.rows.iter().map(|r| r.abs_err).fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.rows.iter().all(|r| r.abs_err <= self.tolerance)
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{VALIDATION_CSV_HEADER}\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.zeta_db, r.r, r.s_analytic, r.s_montecarlo, r.abs_err
            ));
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), HarnessError> {
        let io = |source| HarnessError::Io {
            path: path.to_path_buf(),
            source,
        };
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|source| HarnessError::Io {
                path: dir.to_path_buf(),
                source,
            })?;
        }
        let mut f = std::fs::File::create(path).map_err(io)?;
        f.write_all(self.to_csv().as_bytes()).map_err(io)
    }
}

/// Compares `S(zeta, r)` with the empirical decoding rate on every grid
/// cell. `fault_scale` multiplies the analytic column; anything other than
/// 1 exists only to exercise the failure path.
pub fn validate_channel(
    params: &ChannelParams,
    grid: &ChannelGrid,
    fault_scale: f64,
) -> Result<ValidationReport, HarnessError> {
    let empirical = success_grid(
        params,
        &grid.zetas,
        &grid.distances,
        grid.samples,
        grid.seed,
        grid.field_radius,
    );
    let mut rows = Vec::with_capacity(grid.zetas.len() * grid.distances.len());
    for (i, &zeta) in grid.zetas.iter().enumerate() {
        for (j, &r) in grid.distances.iter().enumerate() {
            let s = success_probability(zeta, r, params)? * fault_scale;
            let m = empirical[i][j];
            rows.push(ValidationRow {
                zeta_db: linear_to_db(zeta),
                r,
                s_analytic: s,
                s_montecarlo: m,
                abs_err: (s - m).abs(),
            });
        }
    }
    Ok(ValidationReport {
        rows,
        tolerance: grid.tolerance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick() -> ChannelGrid {
        ChannelGrid {
            zetas: vec![0.0, 1.0, 10.0],
            distances: vec![50.0, 200.0],
            samples: 20_000,
            ..ChannelGrid::default()
        }
    }

    #[test]
    fn no_interferers_matches_noise_closed_form() {
        let params = ChannelParams::from_dbm(10.0, -90.0, 4.0, 0.0).unwrap();
        let report = validate_channel(&params, &quick(), 1.0).unwrap();
        for row in &report.rows {
            let zeta = 10f64.powf(row.zeta_db / 10.0);
            let closed = (-zeta * params.noise * row.r.powi(4) / params.tx_power).exp();
            assert!((row.s_analytic - closed).abs() <= 1e-9);
        }
        assert!(report.passed());
    }

    #[test]
    fn fault_injection_fails() {
        let params = ChannelParams::from_dbm(10.0, -110.0, 4.0, 50e-6).unwrap();
        assert!(validate_channel(&params, &quick(), 1.0).unwrap().passed());
        assert!(!validate_channel(&params, &quick(), 1.1).unwrap().passed());
    }

    #[test]
    fn csv_layout() {
        let params = ChannelParams::from_dbm(10.0, -110.0, 4.0, 50e-6).unwrap();
        let grid = ChannelGrid {
            samples: 100,
            ..quick()
        };
        let csv = validate_channel(&params, &grid, 1.0).unwrap().to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], VALIDATION_CSV_HEADER);
        assert_eq!(lines.len(), 1 + 6);
        assert!(lines[1].starts_with("-inf,50,1,1,0"));
    }
}
