//! Run settings shared by the config file and the command line.
//!
//! Every config key is also a flag of the same name (underscores become
//! dashes). Values given on the command line replace those from the file.

use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};

use crate::error::{DlimError, Result};

#[derive(Debug, Clone, Default, PartialEq, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Settings {
    /// Output directory (defaults to $DLIM_OUTPUT_ROOT/<command> or ./dlimim-output/<command>).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,

    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub chains: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub iterations: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub burn_in: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub thin: Option<usize>,
    /// Degrees of freedom of the modifier-index basis.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub df_mod: Option<usize>,
    /// Degrees of freedom of the exposure-time basis.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub df_time: Option<usize>,
    /// Spike-and-slab modifier selection.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub selection: Option<bool>,
    /// Visit the weights in random order each iteration.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub random_scan: Option<bool>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub adapt_target: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub adapt_window: Option<usize>,

    /// Dirichlet concentrations, one per modifier or a single shared value.
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q: Option<Vec<f64>>,
    /// Prior inclusion probabilities, one per modifier or a single shared value.
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nu: Option<Vec<f64>>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau2: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub xi2: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ig_shape: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ig_scale: Option<f64>,

    /// One minus the credible level.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    /// Quantiles (in (0, 1)) of the fitted index added to the summary grid.
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub percentiles: Option<Vec<f64>>,
    /// Number of equally spaced index values in the summary grid.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid_points: Option<usize>,
    /// Also write SVG charts of the summaries.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub svg: Option<bool>,

    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub response: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exposure: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub modifiers: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub covariates: Option<PathBuf>,
    /// One CSV holding every variable; columns are assigned with --role.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub combined: Option<PathBuf>,
    /// Column roles for --combined, e.g. `exposure:pm_w1..pm_w37` or `modifiers:age,income`.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub role: Option<Vec<String>>,
    /// gaussian or binomial.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub family: Option<String>,
    /// Min-max scale every modifier to [0, 1] before fitting.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scale_modifiers: Option<bool>,

    /// equal, different or sparse.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scenario: Option<String>,
    /// Number of simulated modifiers.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub num_modifiers: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub snr: Option<f64>,
    /// Simulated sample size.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    /// Simulated number of exposure times.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub times: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub replicates: Option<usize>,
    /// CSV of exposure series to resample instead of the AR(1) generator.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exposure_pool: Option<PathBuf>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pool_replace: Option<bool>,
    /// Write every simulated data set as CSV files.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub save_data: Option<bool>,
}

macro_rules! overlay_fields {
    ($dst:ident, $src:ident; $($field:ident),* $(,)?) => {
        $( if $src.$field.is_some() { $dst.$field = $src.$field.clone(); } )*
    };
}

impl Settings {
    /// Fields set in `flags` replace those in `self`.
    pub fn overlay(mut self, flags: &Settings) -> Settings {
        overlay_fields!(self, flags;
            output, seed, chains, iterations, burn_in, thin, df_mod, df_time, selection, random_scan,
            adapt_target, adapt_window, q, nu, tau2, xi2, ig_shape, ig_scale, alpha, percentiles,
            grid_points, svg, response, exposure, modifiers, covariates, combined, role, family,
            scale_modifiers, scenario, num_modifiers, snr, n, times, replicates, exposure_pool,
            pool_replace, save_data,
        );
        self
    }

    pub fn from_toml(text: &str, origin: &Path) -> Result<Settings> {
        let mut table: toml::Table = text
            .parse()
            .map_err(|e| DlimError::InvalidConfig(format!("{}: {e}", origin.display())))?;
        // A manifest carries a [run] record of the previous run; it is not configuration.
        table.remove("run");
        table
            .try_into()
            .map_err(|e| DlimError::InvalidConfig(format!("{}: {e}", origin.display())))
    }

    pub fn load(path: &Path) -> Result<Settings> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| DlimError::InvalidConfig(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml(&text, path)
    }
}

/// A list of one value is shared by all `len` entries.
pub fn broadcast(values: Option<&Vec<f64>>, len: usize, default: f64, name: &str) -> Result<Vec<f64>> {
    match values {
        None => Ok(vec![default; len]),
        Some(v) if v.len() == 1 => Ok(vec![v[0]; len]),
        Some(v) if v.len() == len => Ok(v.clone()),
        Some(v) => Err(DlimError::InvalidConfig(format!(
            "{name} has {} values but there are {len} modifiers",
            v.len()
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_win_over_file() {
        let file = Settings::from_toml("seed = 3\niterations = 100\nq = [1.0, 2.0]\n", Path::new("x")).unwrap();
        let flags = Settings {
            seed: Some(9),
            ..Default::default()
        };
        let merged = file.overlay(&flags);
        assert_eq!(merged.seed, Some(9));
        assert_eq!(merged.iterations, Some(100));
        assert_eq!(merged.q, Some(vec![1.0, 2.0]));
    }

    #[test]
    fn unknown_keys_and_run_table() {
        assert!(Settings::from_toml("seeds = 3\n", Path::new("x")).is_err());
        let s = Settings::from_toml("seed = 3\n[run]\nchain_seeds = [3]\n", Path::new("x")).unwrap();
        assert_eq!(s.seed, Some(3));
    }

    #[test]
    fn serialization_round_trip() {
        let s = Settings {
            seed: Some(1),
            alpha: Some(0.1),
            percentiles: Some(vec![0.1, 0.9]),
            selection: Some(true),
            output: Some(PathBuf::from("out")),
            ..Default::default()
        };
        let text = toml::to_string(&s).unwrap();
        assert_eq!(Settings::from_toml(&text, Path::new("x")).unwrap(), s);
    }

    #[test]
    fn broadcasting() {
        assert_eq!(broadcast(None, 3, 1.0, "q").unwrap(), vec![1.0; 3]);
        assert_eq!(broadcast(Some(&vec![2.0]), 2, 1.0, "q").unwrap(), vec![2.0; 2]);
        assert!(broadcast(Some(&vec![2.0, 1.0]), 3, 1.0, "q").is_err());
    }
}
