//! Flat key=value experiment configuration with `#` comments. Parsing
//! errors carry the offending line number.

use std::fmt;

use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(into = "String")]
pub enum Experiment {
    PhaseExpectation,
    PhaseRealization,
    EigSphereLinear,
    EigSphereNonlinear,
    EigStiefel,
    SvcCounterexample,
    SaddleProbe,
    RetractionOrder,
}

impl From<Experiment> for String {
    fn from(e: Experiment) -> String {
        e.name().to_string()
    }
}

impl Experiment {
    pub const ALL: [Experiment; 8] = [
        Experiment::PhaseExpectation,
        Experiment::PhaseRealization,
        Experiment::EigSphereLinear,
        Experiment::EigSphereNonlinear,
        Experiment::EigStiefel,
        Experiment::SvcCounterexample,
        Experiment::SaddleProbe,
        Experiment::RetractionOrder,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::PhaseExpectation => "phase-expectation",
            Experiment::PhaseRealization => "phase-realization",
            Experiment::EigSphereLinear => "eig-sphere-linear",
            Experiment::EigSphereNonlinear => "eig-sphere-nonlinear",
            Experiment::EigStiefel => "eig-stiefel",
            Experiment::SvcCounterexample => "svc-counterexample",
            Experiment::SaddleProbe => "saddle-probe",
            Experiment::RetractionOrder => "retraction-order",
        }
    }

    pub fn from_name(name: &str) -> Option<Experiment> {
        Experiment::ALL.iter().copied().find(|e| e.name() == name)
    }

    pub fn names_list() -> String {
        Experiment::ALL
            .iter()
            .map(|e| e.name())
            .collect::<Vec<_>>()
            .join(", ")
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Resolved experiment parameters. Every field maps 1:1 to a config-file
/// key, so the JSON echo in result.json can reconstruct the file.
#[derive(Debug, Clone, Serialize)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    /// Ambient dimension (signal length / operator size).
    pub n: usize,
    /// Measurement count for phase-realization.
    pub measurements: usize,
    /// Frame width for eig-stiefel.
    pub subspace: usize,
    /// Quartic coupling for eig-sphere-nonlinear.
    pub beta: f64,
    /// Construction depth for svc-counterexample.
    pub level: usize,
    /// Bump variant ("A" or "B") for svc-counterexample.
    pub variant: String,
    pub step_size: f64,
    pub trials: usize,
    pub seed: u64,
    pub max_iters: usize,
    pub record_every: usize,
    pub grad_tol: f64,
    /// Success tolerance used to label trials.
    pub tol: f64,
    pub out_dir: String,
}

impl ExperimentConfig {
    pub fn defaults(experiment: Experiment) -> ExperimentConfig {
        let base = ExperimentConfig {
            experiment,
            n: 64,
            measurements: 768,
            subspace: 5,
            beta: 1.0,
            level: 30,
            variant: "A".to_string(),
            step_size: 1.0 / 3.0,
            trials: 100,
            seed: 42,
            max_iters: 500,
            record_every: 10,
            grad_tol: 0.0,
            tol: 1e-6,
            out_dir: format!("saddle-lab-out/{}", experiment.name()),
        };
        match experiment {
            Experiment::PhaseExpectation => base,
            Experiment::PhaseRealization => ExperimentConfig {
                seed: 5,
                max_iters: 10_000,
                record_every: 200,
                grad_tol: 1e-10,
                ..base
            },
            Experiment::EigSphereLinear => ExperimentConfig {
                n: 128,
                step_size: 0.01,
                trials: 20,
                seed: 77,
                max_iters: 2_000_000,
                record_every: 100_000,
                grad_tol: 1e-5,
                tol: 1e-8,
                ..base
            },
            Experiment::EigSphereNonlinear => ExperimentConfig {
                n: 128,
                step_size: 0.01,
                trials: 5,
                seed: 123,
                max_iters: 2_000_000,
                record_every: 100_000,
                grad_tol: 5e-7,
                ..base
            },
            Experiment::EigStiefel => ExperimentConfig {
                n: 128,
                step_size: 0.01,
                trials: 5,
                seed: 888,
                max_iters: 2_000_000,
                record_every: 100_000,
                grad_tol: 1e-8,
                ..base
            },
            Experiment::SvcCounterexample => ExperimentConfig {
                step_size: 0.05,
                trials: 20_000,
                seed: 9,
                max_iters: 20_000,
                record_every: 20_000,
                grad_tol: 1e-12,
                ..base
            },
            Experiment::SaddleProbe => ExperimentConfig {
                n: 16,
                trials: 20,
                seed: 31,
                max_iters: 1,
                record_every: 1,
                ..base
            },
            Experiment::RetractionOrder => ExperimentConfig {
                n: 8,
                trials: 5,
                seed: 1100,
                max_iters: 1,
                record_every: 1,
                ..base
            },
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.trials == 0 {
            return Err("trials must be at least 1".to_string());
        }
        if self.n < 2 {
            return Err(format!("n = {} must be at least 2", self.n));
        }
        if !(self.step_size.is_finite() && self.step_size > 0.0) {
            return Err(format!("step_size = {} must be positive", self.step_size));
        }
        if self.max_iters == 0 || self.record_every == 0 {
            return Err("max_iters and record_every must be at least 1".to_string());
        }
        if self.variant != "A" && self.variant != "B" {
            return Err(format!("variant = {} must be A or B", self.variant));
        }
        if self.experiment == Experiment::SvcCounterexample && !(1..=48).contains(&self.level) {
            return Err(format!("level = {} outside 1..=48", self.level));
        }
        if self.experiment == Experiment::EigStiefel
            && (self.subspace == 0 || self.subspace >= self.n)
        {
            return Err(format!(
                "subspace = {} must lie strictly between 0 and n = {}",
                self.subspace, self.n
            ));
        }
        Ok(())
    }

    /// Serializes back to the key=value file format; parsing the output
    /// reproduces this config exactly.
    pub fn to_key_values(&self) -> String {
        format!(
            "experiment = {}\nn = {}\nmeasurements = {}\nsubspace = {}\nbeta = {}\n\
             level = {}\nvariant = {}\nstep_size = {}\ntrials = {}\nseed = {}\n\
             max_iters = {}\nrecord_every = {}\ngrad_tol = {}\ntol = {}\nout_dir = {}\n",
            self.experiment,
            self.n,
            self.measurements,
            self.subspace,
            self.beta,
            self.level,
            self.variant,
            self.step_size,
            self.trials,
            self.seed,
            self.max_iters,
            self.record_every,
            self.grad_tol,
            self.tol,
            self.out_dir
        )
    }
}

fn strip_comment(line: &str) -> &str {
    match line.find('#') {
        Some(pos) => &line[..pos],
        None => line,
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str, lineno: usize) -> Result<T, String> {
    value
        .parse()
        .map_err(|_| format!("line {lineno}: invalid value {value:?} for key {key:?}"))
}

/// Parses the flat key=value format. The `experiment` key selects the
/// defaults; every other key overrides one field.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, String> {
    let mut entries: Vec<(usize, String, String)> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = strip_comment(raw).trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| format!("line {lineno}: expected key = value, got {line:?}"))?;
        entries.push((lineno, key.trim().to_string(), value.trim().to_string()));
    }

    let (exp_line, exp_name) = entries
        .iter()
        .find(|(_, k, _)| k == "experiment")
        .map(|(l, _, v)| (*l, v.clone()))
        .ok_or_else(|| "missing required key \"experiment\"".to_string())?;
    let experiment = Experiment::from_name(&exp_name).ok_or_else(|| {
        format!(
            "line {exp_line}: unknown experiment {exp_name:?}; valid names: {}",
            Experiment::names_list()
        )
    })?;

    let mut config = ExperimentConfig::defaults(experiment);
    for (lineno, key, value) in &entries {
        let lineno = *lineno;
        match key.as_str() {
            "experiment" => {}
            "n" => config.n = parse_num("n", value, lineno)?,
            "measurements" => config.measurements = parse_num("measurements", value, lineno)?,
            "subspace" => config.subspace = parse_num("subspace", value, lineno)?,
            "beta" => config.beta = parse_num("beta", value, lineno)?,
            "level" => config.level = parse_num("level", value, lineno)?,
            "variant" => config.variant = value.clone(),
            "step_size" => config.step_size = parse_num("step_size", value, lineno)?,
            "trials" => config.trials = parse_num("trials", value, lineno)?,
            "seed" => config.seed = parse_num("seed", value, lineno)?,
            "max_iters" => config.max_iters = parse_num("max_iters", value, lineno)?,
            "record_every" => config.record_every = parse_num("record_every", value, lineno)?,
            "grad_tol" => config.grad_tol = parse_num("grad_tol", value, lineno)?,
            "tol" => config.tol = parse_num("tol", value, lineno)?,
            "out_dir" => config.out_dir = value.clone(),
            other => return Err(format!("line {lineno}: unknown key {other:?}")),
        }
    }
    config.validate()?;
    Ok(config)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_with_comments_and_defaults() {
        let cfg = parse_config(
            "# an experiment\nexperiment = phase-expectation # inline\n\ntrials = 7\n",
        )
        .unwrap();
        assert_eq!(cfg.experiment, Experiment::PhaseExpectation);
        assert_eq!(cfg.trials, 7);
        assert_eq!(cfg.n, 64);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let err = parse_config("experiment = phase-expectation\ntrials = many\n").unwrap_err();
        assert!(err.contains("line 2"), "{err}");
        let err = parse_config("experiment = phase-expectation\nbogus_key = 1\n").unwrap_err();
        assert!(err.contains("line 2") && err.contains("bogus_key"), "{err}");
        let err = parse_config("experiment = bogus\n").unwrap_err();
        assert!(err.contains("retraction-order"), "{err}");
        let err = parse_config("trials = 3\n").unwrap_err();
        assert!(err.contains("experiment"), "{err}");
    }

    #[test]
    fn zero_trials_rejected() {
        let err = parse_config("experiment = phase-expectation\ntrials = 0\n").unwrap_err();
        assert!(err.contains("trials"), "{err}");
    }

    #[test]
    fn key_value_round_trip() {
        for experiment in Experiment::ALL {
            let config = ExperimentConfig::defaults(experiment);
            let reparsed = parse_config(&config.to_key_values()).unwrap();
            assert_eq!(format!("{config:?}"), format!("{reparsed:?}"));
        }
    }
}
