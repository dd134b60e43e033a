//! Training configuration and its `key = value` text form.

use super::net::Precision;
use super::optim::AdamWConfig;
use super::phantom::PhantomConfig;
use crate::volume::{Dims, Spacing};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub epochs: usize,
    /// Crops drawn per epoch; validation runs at the end of each epoch.
    pub steps_per_epoch: usize,
    /// Stop early after this many steps; the cosine cycle still spans
    /// `epochs * steps_per_epoch`.
    pub max_steps: Option<usize>,
    pub crop: Dims,
    pub batch_size: usize,
    pub seed: u64,
    pub precision: Precision,
    pub phantom: PhantomConfig,
    /// Number of distinct training phantoms.
    pub train_volumes: usize,
    pub hidden_channels: Vec<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.00025,
            weight_decay: 0.00005,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            epochs: 5,
            steps_per_epoch: 100,
            max_steps: None,
            crop: Dims::new(32, 32, 16),
            batch_size: 1,
            seed: 7,
            precision: Precision::F32,
            phantom: PhantomConfig::default(),
            train_volumes: 4,
            hidden_channels: vec![32, 16],
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str, line: usize) -> Result<T> {
    value.parse().map_err(|_| Error::Parse {
        line,
        message: format!("invalid value {value:?} for {key}"),
    })
}

fn parse_list<T: std::str::FromStr>(key: &str, value: &str, line: usize) -> Result<Vec<T>> {
    value
        .split(|c: char| c == 'x' || c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| parse_num(key, s, line))
        .collect()
}

fn parse_dims(key: &str, value: &str, line: usize) -> Result<Dims> {
    match parse_list::<usize>(key, value, line)?.as_slice() {
        [n] => Ok(Dims::cube(*n)),
        [x, y, z] => Ok(Dims::new(*x, *y, *z)),
        _ => Err(Error::Parse {
            line,
            message: format!("{key} needs one or three sizes"),
        }),
    }
}

impl TrainConfig {
    pub fn total_steps(&self) -> usize {
        self.epochs * self.steps_per_epoch
    }

    /// Steps actually executed.
    pub fn steps_to_run(&self) -> usize {
        self.max_steps.map_or(self.total_steps(), |m| m.min(self.total_steps()))
    }

    /// Network channel plan `[1, hidden…, out_channels]`.
    pub fn plan(&self, out_channels: usize) -> Vec<usize> {
        let mut plan = vec![1];
        plan.extend(&self.hidden_channels);
        plan.push(out_channels);
        plan
    }

    pub fn optimizer(&self) -> AdamWConfig {
        AdamWConfig {
            learning_rate: self.learning_rate,
            weight_decay: self.weight_decay,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
            total_steps: self.total_steps(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("learning_rate", self.learning_rate),
            ("beta1", self.beta1),
            ("beta2", self.beta2),
            ("epsilon", self.epsilon),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidArgument(format!("{name} must be positive")));
            }
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return Err(Error::InvalidArgument("weight_decay must be non-negative".into()));
        }
        if self.beta1 >= 1.0 || self.beta2 >= 1.0 {
            return Err(Error::InvalidArgument("betas must be below 1".into()));
        }
        if self.epochs == 0 || self.steps_per_epoch == 0 || self.batch_size == 0 || self.train_volumes == 0 {
            return Err(Error::InvalidArgument(
                "epochs, steps_per_epoch, batch_size and train_volumes must be positive".into(),
            ));
        }
        if self.crop.is_empty() || !self.phantom.dims.contains(self.crop) {
            return Err(Error::InvalidArgument(format!(
                "crop {} does not fit the {} phantom",
                self.crop, self.phantom.dims
            )));
        }
        if self.hidden_channels.contains(&0) {
            return Err(Error::InvalidArgument("hidden channel counts must be positive".into()));
        }
        self.phantom.spacing.validate()
    }

    /// Parses `key = value` lines; `#` starts a comment. Unset keys keep
    /// their defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut c = Self::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| Error::Parse {
                line,
                message: "expected key = value".into(),
            })?;
            let (key, value) = (key.trim(), value.trim());
            match key {
                "learning_rate" | "lr" => c.learning_rate = parse_num(key, value, line)?,
                "weight_decay" => c.weight_decay = parse_num(key, value, line)?,
                "beta1" => c.beta1 = parse_num(key, value, line)?,
                "beta2" => c.beta2 = parse_num(key, value, line)?,
                "epsilon" => c.epsilon = parse_num(key, value, line)?,
                "epochs" => c.epochs = parse_num(key, value, line)?,
                "steps_per_epoch" => c.steps_per_epoch = parse_num(key, value, line)?,
                "max_steps" => c.max_steps = Some(parse_num(key, value, line)?),
                "crop" => c.crop = parse_dims(key, value, line)?,
                "batch_size" => c.batch_size = parse_num(key, value, line)?,
                "seed" => c.seed = parse_num(key, value, line)?,
                "precision" => {
                    c.precision = value.parse().map_err(|e: Error| Error::Parse {
                        line,
                        message: e.to_string(),
                    })?
                }
                "phantom_dims" => c.phantom.dims = parse_dims(key, value, line)?,
                "spacing" => {
                    let s: Vec<f64> = parse_list(key, value, line)?;
                    c.phantom.spacing = match s.as_slice() {
                        [v] => Spacing::isotropic(*v),
                        [x, y, z] => Spacing([*x, *y, *z]),
                        _ => {
                            return Err(Error::Parse {
                                line,
                                message: "spacing needs one or three values".into(),
                            })
                        }
                    }
                }
                "noise_sigma" => c.phantom.noise_sigma = parse_num(key, value, line)?,
                "train_volumes" => c.train_volumes = parse_num(key, value, line)?,
                "hidden_channels" => c.hidden_channels = parse_list(key, value, line)?,
                other => {
                    return Err(Error::Parse {
                        line,
                        message: format!("unknown key {other:?}"),
                    })
                }
            }
        }
        Ok(c)
    }

    /// The `key = value` form understood by [`TrainConfig::parse`].
    pub fn to_text(&self) -> String {
        let d = |d: Dims| format!("{}x{}x{}", d.x, d.y, d.z);
        let s = self.phantom.spacing.0;
        let mut out = format!(
            "learning_rate = {}\nweight_decay = {}\nbeta1 = {}\nbeta2 = {}\nepsilon = {}\n\
             epochs = {}\nsteps_per_epoch = {}\ncrop = {}\nbatch_size = {}\nseed = {}\nprecision = {}\n\
             phantom_dims = {}\nspacing = {},{},{}\nnoise_sigma = {}\ntrain_volumes = {}\nhidden_channels = {}\n",
            self.learning_rate,
            self.weight_decay,
            self.beta1,
            self.beta2,
            self.epsilon,
            self.epochs,
            self.steps_per_epoch,
            d(self.crop),
            self.batch_size,
            self.seed,
            match self.precision {
                Precision::F32 => "f32",
                Precision::F64 => "f64",
            },
            d(self.phantom.dims),
            s[0],
            s[1],
            s[2],
            self.phantom.noise_sigma,
            self.train_volumes,
            self.hidden_channels
                .iter()
                .map(|c| c.to_string())
                .collect::<Vec<_>>()
                .join(","),
        );
        if let Some(m) = self.max_steps {
            out.push_str(&format!("max_steps = {m}\n"));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_training_recipe() {
        let c = TrainConfig::default();
        assert_eq!(c.learning_rate, 0.00025);
        assert_eq!(c.weight_decay, 0.00005);
        assert_eq!(c.crop, Dims::new(32, 32, 16));
        assert!(c.total_steps() <= 500);
        c.validate().unwrap();
    }

    #[test]
    fn text_round_trip() {
        let mut c = TrainConfig::default();
        c.seed = 11;
        c.max_steps = Some(3);
        c.precision = Precision::F64;
        c.phantom.spacing = Spacing([1.0, 1.5, 2.0]);
        assert_eq!(TrainConfig::parse(&c.to_text()).unwrap(), c);
    }

    #[test]
    fn parse_errors_carry_lines() {
        let err = TrainConfig::parse("seed = 3\n\nlr = fast\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }));
        assert!(TrainConfig::parse("bogus = 1").is_err());
        assert!(TrainConfig::parse("seed 3").is_err());
        let c = TrainConfig::parse("# comment\ncrop = 16 # inline\n").unwrap();
        assert_eq!(c.crop, Dims::cube(16));
    }

    #[test]
    fn validation_rejects_bad_values() {
        let mut c = TrainConfig::default();
        c.crop = Dims::cube(64);
        assert!(c.validate().is_err());
        let mut c = TrainConfig::default();
        c.learning_rate = 0.0;
        assert!(c.validate().is_err());
    }
}
