//! Run configuration: defaults, then an INI file, then command-line flags.

use std::path::{Path, PathBuf};

use ini::Ini;

use crate::CliError;

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub system: String,
    /// Grid overrides; commands supply their own defaults.
    pub mu_min: Option<f64>,
    pub mu_max: Option<f64>,
    pub points: Option<usize>,
    pub rtol: f64,
    pub atol: f64,
    pub shoot_tol: f64,
    /// Largest curve residual accepted before a command reports failure.
    pub residual_tol: f64,
    /// Directory that relative output paths are resolved against.
    pub out_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            system: "example-nf".into(),
            mu_min: None,
            mu_max: None,
            points: None,
            rtol: 1e-12,
            atol: 1e-15,
            shoot_tol: 1e-11,
            residual_tol: 1e-8,
            out_dir: None,
        }
    }
}

fn parse<T: std::str::FromStr>(section: &str, key: &str, v: &str) -> Result<T, CliError>
where
    T::Err: std::fmt::Display,
{
    v.trim().parse().map_err(|e| CliError::Usage(format!("config [{section}] {key} = {v}: {e}")))
}

impl RunConfig {
    /// Applies the keys present in an INI file:
    /// `[system] name`, `[grid] mu_min mu_max points`,
    /// `[tolerances] rtol atol shoot_tol residual_tol`, `[output] dir`.
    pub fn apply_ini(&mut self, ini: &Ini) -> Result<(), CliError> {
        for (section, props) in ini.iter() {
            let section = section.unwrap_or("");
            for (key, v) in props.iter() {
                match (section, key) {
                    ("system", "name") => self.system = v.trim().to_string(),
                    ("grid", "mu_min") => self.mu_min = Some(parse(section, key, v)?),
                    ("grid", "mu_max") => self.mu_max = Some(parse(section, key, v)?),
                    ("grid", "points") => self.points = Some(parse(section, key, v)?),
                    ("tolerances", "rtol") => self.rtol = parse(section, key, v)?,
                    ("tolerances", "atol") => self.atol = parse(section, key, v)?,
                    ("tolerances", "shoot_tol") => self.shoot_tol = parse(section, key, v)?,
                    ("tolerances", "residual_tol") => self.residual_tol = parse(section, key, v)?,
                    ("output", "dir") => self.out_dir = Some(PathBuf::from(v.trim())),
                    _ => return Err(CliError::Usage(format!("unknown config key [{section}] {key}"))),
                }
            }
        }
        Ok(())
    }

    pub fn load_file(&mut self, path: &Path) -> Result<(), CliError> {
        let ini = Ini::load_from_file(path).map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))?;
        self.apply_ini(&ini)
    }

    pub fn output_path(&self, p: &Path) -> PathBuf {
        match &self.out_dir {
            Some(dir) if p.is_relative() => dir.join(p),
            _ => p.to_path_buf(),
        }
    }
}
