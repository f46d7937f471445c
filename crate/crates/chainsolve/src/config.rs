//! Flat key=value configuration files with `[domain]`, `[potential]`,
//! `[kernel]` and `[solver]` sections. Unknown sections or keys are
//! errors; missing required keys are reported by name.

use crate::fields::PotentialSpec;
use crate::solver::{SolverConfig, SymmetryClass};
use std::collections::BTreeMap;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("missing required key '{key}' in section [{section}]")]
    Missing { section: String, key: String },
    #[error("unknown key '{key}' in section [{section}]")]
    Unknown { section: String, key: String },
    #[error("unknown section [{0}]")]
    UnknownSection(String),
    #[error("line {line}: expected 'key = value'")]
    Malformed { line: usize },
    #[error("key '{key}': cannot parse '{value}' as {ty}")]
    Parse { key: String, value: String, ty: &'static str },
    #[error("{0}")]
    Invalid(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone)]
pub struct DomainConfig {
    pub l_planar: f64,
    pub n_x: usize,
    pub ell: f64,
    pub n_z: usize,
    /// Half-periods for the ℓ-scan; required by `ellscan` only.
    pub ell_list: Option<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct KernelConfig {
    pub quad_tol: f64,
    pub n_images: usize,
}

impl Default for KernelConfig {
    fn default() -> Self {
        KernelConfig { quad_tol: 1e-10, n_images: 10_000 }
    }
}

#[derive(Debug, Clone)]
pub struct Config {
    pub domain: DomainConfig,
    pub potential: PotentialSpec,
    pub kernel: KernelConfig,
    pub solver: SolverConfig,
}

struct Section {
    name: String,
    entries: BTreeMap<String, String>,
}

fn parse_sections(text: &str) -> Result<Vec<Section>, ConfigError> {
    let mut sections: Vec<Section> = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
            sections.push(Section { name: name.trim().to_string(), entries: BTreeMap::new() });
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(ConfigError::Malformed { line: lineno + 1 });
        };
        let section = sections.last_mut().ok_or(ConfigError::Malformed { line: lineno + 1 })?;
        section.entries.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(sections)
}

struct SectionReader {
    name: String,
    entries: BTreeMap<String, String>,
}

impl SectionReader {
    fn take(&mut self, key: &str) -> Option<String> {
        self.entries.remove(key)
    }

    fn require(&mut self, key: &str) -> Result<String, ConfigError> {
        self.take(key).ok_or_else(|| ConfigError::Missing {
            section: self.name.clone(),
            key: key.to_string(),
        })
    }

    fn f64_req(&mut self, key: &str) -> Result<f64, ConfigError> {
        let v = self.require(key)?;
        v.parse().map_err(|_| ConfigError::Parse { key: key.into(), value: v, ty: "float" })
    }

    fn f64_opt(&mut self, key: &str, default: f64) -> Result<f64, ConfigError> {
        match self.take(key) {
            None => Ok(default),
            Some(v) => {
                v.parse().map_err(|_| ConfigError::Parse { key: key.into(), value: v, ty: "float" })
            }
        }
    }

    fn usize_req(&mut self, key: &str) -> Result<usize, ConfigError> {
        let v = self.require(key)?;
        v.parse().map_err(|_| ConfigError::Parse { key: key.into(), value: v, ty: "integer" })
    }

    fn usize_opt(&mut self, key: &str, default: usize) -> Result<usize, ConfigError> {
        match self.take(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| ConfigError::Parse { key: key.into(), value: v, ty: "integer" }),
        }
    }

    fn finish(self) -> Result<(), ConfigError> {
        if let Some(key) = self.entries.into_keys().next() {
            return Err(ConfigError::Unknown { section: self.name, key });
        }
        Ok(())
    }
}

impl Config {
    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        Self::from_str(&std::fs::read_to_string(path)?)
    }

    #[allow(clippy::should_implement_trait)]
    pub fn from_str(text: &str) -> Result<Self, ConfigError> {
        let mut domain: Option<SectionReader> = None;
        let mut potential: Option<SectionReader> = None;
        let mut kernel: Option<SectionReader> = None;
        let mut solver: Option<SectionReader> = None;
        for s in parse_sections(text)? {
            let reader = SectionReader { name: s.name.clone(), entries: s.entries };
            match s.name.as_str() {
                "domain" => domain = Some(reader),
                "potential" => potential = Some(reader),
                "kernel" => kernel = Some(reader),
                "solver" => solver = Some(reader),
                other => return Err(ConfigError::UnknownSection(other.to_string())),
            }
        }

        let mut d = domain.ok_or(ConfigError::Missing {
            section: "domain".into(),
            key: "l_planar".into(),
        })?;
        let ell_list = match d.take("ell_list") {
            None => None,
            Some(v) => {
                let mut out = Vec::new();
                for part in v.split(',') {
                    let t = part.trim();
                    out.push(t.parse().map_err(|_| ConfigError::Parse {
                        key: "ell_list".into(),
                        value: t.into(),
                        ty: "float list",
                    })?);
                }
                Some(out)
            }
        };
        let domain = DomainConfig {
            l_planar: d.f64_req("l_planar")?,
            n_x: d.usize_req("n_x")?,
            ell: d.f64_req("ell")?,
            n_z: d.usize_req("n_z")?,
            ell_list,
        };
        d.finish()?;

        let mut p = potential.ok_or(ConfigError::Missing {
            section: "potential".into(),
            key: "kind".into(),
        })?;
        let kind = p.require("kind")?;
        let potential = match kind.as_str() {
            "constant" => PotentialSpec::Constant { value: p.f64_req("value")? },
            "gaussian_bump" => PotentialSpec::GaussianBump {
                base: p.f64_req("base")?,
                amplitude: p.f64_req("amplitude")?,
                width: p.f64_req("width")?,
                width_z: p.take("width_z").map(|v| v.parse()).transpose().map_err(|_| {
                    ConfigError::Parse { key: "width_z".into(), value: String::new(), ty: "float" }
                })?,
            },
            other => {
                return Err(ConfigError::Invalid(format!("unknown potential kind '{other}'")))
            }
        };
        potential.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        p.finish()?;

        let kernel = match kernel {
            None => KernelConfig::default(),
            Some(mut k) => {
                let cfg = KernelConfig {
                    quad_tol: k.f64_opt("quad_tol", 1e-10)?,
                    n_images: k.usize_opt("n_images", 10_000)?,
                };
                k.finish()?;
                cfg
            }
        };

        let solver = match solver {
            None => SolverConfig::default(),
            Some(mut s) => {
                let class: SymmetryClass = match s.take("class") {
                    None => SymmetryClass::Radial,
                    Some(v) => v.parse().map_err(ConfigError::Invalid)?,
                };
                let cfg = SolverConfig {
                    class,
                    max_iters: s.usize_opt("max_iters", 4000)?,
                    tol_grad: s.f64_opt("tol_grad", 1e-6)?,
                    step0: s.f64_opt("step0", 1.0)?,
                    armijo_factor: s.f64_opt("armijo_factor", 0.5)?,
                    armijo_c: s.f64_opt("armijo_c", 1e-4)?,
                    seed: s.usize_opt("seed", 7)? as u64,
                    restarts: s.usize_opt("restarts", 2)?,
                    seed_width: s.f64_opt("seed_width", 1.0)?,
                    seed_width_z: s.f64_opt("seed_width_z", 1.0)?,
                    seed_amplitude: s.f64_opt("seed_amplitude", 1.0)?,
                };
                s.finish()?;
                cfg
            }
        };

        Ok(Config { domain, potential, kernel, solver })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const GOOD: &str = "
[domain]
l_planar = 12.0
n_x = 64
ell = 1.0
n_z = 32

[potential]
kind = constant
value = 1.0

[solver]
class = radial
seed = 11
";

    #[test]
    fn parses_reference_config() {
        let cfg = Config::from_str(GOOD).unwrap();
        assert_eq!(cfg.domain.n_x, 64);
        assert_eq!(cfg.solver.seed, 11);
        assert_eq!(cfg.kernel.n_images, 10_000);
        assert!(matches!(cfg.potential, PotentialSpec::Constant { value } if value == 1.0));
    }

    #[test]
    fn missing_ell_names_the_key() {
        let text = GOOD.replace("ell = 1.0\n", "");
        let err = Config::from_str(&text).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("ell"), "{msg}");
        assert!(matches!(err, ConfigError::Missing { .. }));
    }

    #[test]
    fn unknown_key_rejected() {
        let text = format!("{GOOD}\nwarp_factor = 9\n");
        let err = Config::from_str(&text).unwrap_err();
        assert!(matches!(err, ConfigError::Unknown { .. }), "{err}");
    }

    #[test]
    fn unknown_section_rejected() {
        let text = format!("{GOOD}\n[plotting]\nstyle = fancy\n");
        assert!(matches!(Config::from_str(&text), Err(ConfigError::UnknownSection(_))));
    }

    #[test]
    fn zero_potential_rejected() {
        let text = GOOD.replace("value = 1.0", "value = 0.0");
        assert!(matches!(Config::from_str(&text), Err(ConfigError::Invalid(_))));
    }

    #[test]
    fn ell_list_parses() {
        let text = GOOD.replace("n_z = 32", "n_z = 32\nell_list = 0.5, 1, 2, 4, 8");
        let cfg = Config::from_str(&text).unwrap();
        assert_eq!(cfg.domain.ell_list.unwrap(), vec![0.5, 1.0, 2.0, 4.0, 8.0]);
    }
}
