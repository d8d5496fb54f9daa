use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::ArchitectureConfig;
use crate::error::{ensure_dim, Error, Result};
use crate::tensor::{DenseParams, FilterBank, ParamArrays};

/// Every trainable array of the network.
///
/// `volume_stream` is empty for the single-stream variant.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub speed_stream: Vec<FilterBank>,
    pub volume_stream: Vec<FilterBank>,
    pub fc_hidden: DenseParams,
    pub output: DenseParams,
}

fn stream_banks(cfg: &ArchitectureConfig, filters: [usize; 3]) -> Vec<FilterBank> {
    let shapes = cfg.stream_shapes(filters);
    (0..3)
        .map(|l| FilterBank::zeros(filters[l], cfg.filter_size[0], cfg.filter_size[1], shapes[l].2))
        .collect()
}

fn uniform(rng: &mut ChaCha8Rng, values: &mut [f64], bound: f64) {
    for v in values {
        *v = rng.random_range(-bound..bound);
    }
}

impl ModelParams {
    /// All-zero parameters with the shapes `cfg` implies.
    pub fn zeros(cfg: &ArchitectureConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(ModelParams {
            speed_stream: stream_banks(cfg, cfg.filters_per_layer),
            volume_stream: if cfg.has_volume_stream() {
                stream_banks(cfg, cfg.volume_filters())
            } else {
                Vec::new()
            },
            fc_hidden: DenseParams::zeros(cfg.fc_hidden, cfg.fused_len()),
            output: DenseParams::zeros(cfg.output_len(), cfg.fc_hidden),
        })
    }

    /// He-uniform for conv and hidden layers, Glorot-uniform for the linear
    /// output layer, zero biases; seeded from `cfg.seed`.
    pub fn init(cfg: &ArchitectureConfig) -> Result<Self> {
        let mut p = ModelParams::zeros(cfg)?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        for bank in p.speed_stream.iter_mut().chain(p.volume_stream.iter_mut()) {
            let bound = (6.0 / bank.kernel_len() as f64).sqrt();
            uniform(&mut rng, &mut bank.weights, bound);
        }
        let bound = (6.0 / p.fc_hidden.in_dim as f64).sqrt();
        uniform(&mut rng, &mut p.fc_hidden.weights, bound);
        let bound = (6.0 / (p.output.in_dim + p.output.out_dim) as f64).sqrt();
        uniform(&mut rng, &mut p.output.weights, bound);
        Ok(p)
    }

    /// Same shapes, all zeros.
    pub fn zeros_like(&self) -> Self {
        ModelParams {
            speed_stream: self.speed_stream.iter().map(FilterBank::zeros_like).collect(),
            volume_stream: self.volume_stream.iter().map(FilterBank::zeros_like).collect(),
            fc_hidden: self.fc_hidden.zeros_like(),
            output: self.output.zeros_like(),
        }
    }

    /// Checks that every array matches what `cfg` implies.
    pub fn check_against(&self, cfg: &ArchitectureConfig) -> Result<()> {
        let expected = ModelParams::zeros(cfg)?;
        ensure_dim("ModelParams", "speed stream layers", 3, self.speed_stream.len())?;
        ensure_dim(
            "ModelParams",
            "volume stream layers",
            expected.volume_stream.len(),
            self.volume_stream.len(),
        )?;
        for ((name, want, _), (_, got, values)) in expected.shaped_arrays().iter().zip(self.shaped_arrays()) {
            if *want != got || values.len() != want.iter().product::<usize>() {
                return Err(Error::Config(format!(
                    "parameter {name}: expected shape {want:?}, found {got:?} with {} values",
                    values.len()
                )));
            }
        }
        for bank in self.speed_stream.iter().chain(&self.volume_stream) {
            bank.validate()?;
        }
        self.fc_hidden.validate()?;
        self.output.validate()
    }

    /// `(name, shape, values)` for every array, in [`ParamArrays`] order.
    ///
    /// Conv weights are `[filters, rows, cols, channels]`, dense weights
    /// `[out, in]`, biases `[len]`.
    pub fn shaped_arrays(&self) -> Vec<(String, Vec<usize>, &[f64])> {
        let mut out = Vec::new();
        for (prefix, stream) in [("speed", &self.speed_stream), ("volume", &self.volume_stream)] {
            for (i, b) in stream.iter().enumerate() {
                out.push((
                    format!("{prefix}_conv{}.weights", i + 1),
                    vec![b.num_filters, b.filter_rows, b.filter_cols, b.in_channels],
                    &b.weights[..],
                ));
                out.push((format!("{prefix}_conv{}.biases", i + 1), vec![b.num_filters], &b.biases[..]));
            }
        }
        for (name, d) in [("fc_hidden", &self.fc_hidden), ("output", &self.output)] {
            out.push((format!("{name}.weights"), vec![d.out_dim, d.in_dim], &d.weights[..]));
            out.push((format!("{name}.biases"), vec![d.out_dim], &d.biases[..]));
        }
        out
    }
}

impl ParamArrays for ModelParams {
    fn arrays(&self) -> Vec<(String, &[f64])> {
        self.shaped_arrays().into_iter().map(|(n, _, a)| (n, a)).collect()
    }

    fn arrays_mut(&mut self) -> Vec<(String, &mut [f64])> {
        let mut out = Vec::new();
        for (prefix, stream) in [("speed", &mut self.speed_stream), ("volume", &mut self.volume_stream)] {
            for (i, b) in stream.iter_mut().enumerate() {
                out.push((format!("{prefix}_conv{}.weights", i + 1), &mut b.weights[..]));
                out.push((format!("{prefix}_conv{}.biases", i + 1), &mut b.biases[..]));
            }
        }
        for (name, d) in [("fc_hidden", &mut self.fc_hidden), ("output", &mut self.output)] {
            out.push((format!("{name}.weights"), &mut d.weights[..]));
            out.push((format!("{name}.biases"), &mut d.biases[..]));
        }
        out
    }
}
