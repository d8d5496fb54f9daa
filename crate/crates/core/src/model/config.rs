use serde::{Deserialize, Serialize};

use crate::data::CorridorShape;
use crate::error::{Error, Result};

/// Which network variant to build.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Topology {
    /// Speed and volume streams fused by concatenation; predicts both quantities.
    #[default]
    TwoStream,
    /// Speed stream only; predicts speeds and is trained on the speed term alone.
    SingleStream,
}

/// Declarative description of the network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ArchitectureConfig {
    pub shape: CorridorShape,
    pub topology: Topology,
    /// Filters in the three convolution layers of the speed stream.
    pub filters_per_layer: [usize; 3],
    /// Filters of the volume stream; defaults to `filters_per_layer`.
    pub volume_filters_per_layer: Option<[usize; 3]>,
    /// Kernel rows and columns; the channel depth always equals the layer input.
    pub filter_size: [usize; 2],
    pub fc_hidden: usize,
    pub dropout_conv: f64,
    pub dropout_fc: f64,
    pub seed: u64,
}

impl Default for ArchitectureConfig {
    fn default() -> Self {
        ArchitectureConfig {
            shape: CorridorShape::default(),
            topology: Topology::TwoStream,
            filters_per_layer: [32, 32, 32],
            volume_filters_per_layer: None,
            filter_size: [2, 2],
            fc_hidden: 256,
            dropout_conv: 0.5,
            dropout_fc: 0.25,
            seed: 0,
        }
    }
}

/// `(rows, cols, channels)` of a conv layer's input.
pub type MapShape = (usize, usize, usize);

impl ArchitectureConfig {
    pub fn for_shape(shape: CorridorShape) -> Self {
        ArchitectureConfig {
            shape,
            ..Default::default()
        }
    }

    pub fn volume_filters(&self) -> [usize; 3] {
        self.volume_filters_per_layer.unwrap_or(self.filters_per_layer)
    }

    pub fn has_volume_stream(&self) -> bool {
        self.topology == Topology::TwoStream
    }

    /// Feature-map shapes through one stream: the input followed by each conv output.
    pub fn stream_shapes(&self, filters: [usize; 3]) -> [MapShape; 4] {
        let [fr, fc] = self.filter_size;
        let mut shapes = [(self.shape.k, self.shape.n, self.shape.c); 4];
        for layer in 0..3 {
            let (r, c, _) = shapes[layer];
            shapes[layer + 1] = (
                (r + 1).saturating_sub(fr),
                (c + 1).saturating_sub(fc),
                filters[layer],
            );
        }
        shapes
    }

    fn flat_len(&self, filters: [usize; 3]) -> usize {
        let (r, c, ch) = self.stream_shapes(filters)[3];
        r * c * ch
    }

    pub fn speed_flat_len(&self) -> usize {
        self.flat_len(self.filters_per_layer)
    }

    pub fn volume_flat_len(&self) -> usize {
        if self.has_volume_stream() {
            self.flat_len(self.volume_filters())
        } else {
            0
        }
    }

    /// Width of the fused vector fed to the hidden dense layer.
    pub fn fused_len(&self) -> usize {
        self.speed_flat_len() + self.volume_flat_len()
    }

    pub fn output_len(&self) -> usize {
        match self.topology {
            Topology::TwoStream => 2 * self.shape.cells(),
            Topology::SingleStream => self.shape.cells(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.shape.validate()?;
        let [fr, fc] = self.filter_size;
        if fr == 0 || fc == 0 {
            return Err(Error::Config("filter size must be at least 1×1".into()));
        }
        if self.filters_per_layer.contains(&0) || self.volume_filters().contains(&0) {
            return Err(Error::Config("every conv layer needs at least one filter".into()));
        }
        if self.fc_hidden == 0 {
            return Err(Error::Config("fc_hidden must be positive".into()));
        }
        for (name, p) in [("dropout_conv", self.dropout_conv), ("dropout_fc", self.dropout_fc)] {
            if !(0.0..1.0).contains(&p) {
                return Err(Error::Config(format!("{name} must be in [0, 1), got {p}")));
            }
        }
        // Three valid convolutions shrink each axis by 3·(size − 1).
        let min_rows = 3 * (fr - 1) + 1;
        let min_cols = 3 * (fc - 1) + 1;
        if self.shape.k < min_rows || self.shape.n < min_cols {
            return Err(Error::Config(format!(
                "a {}×{} input cannot pass three {fr}×{fc} valid convolutions (needs at least {min_rows}×{min_cols})",
                self.shape.k, self.shape.n
            )));
        }
        Ok(())
    }

    /// Trainable parameter count, derived from the configuration alone.
    pub fn param_count(&self) -> usize {
        let stream = |filters: [usize; 3]| -> usize {
            let shapes = self.stream_shapes(filters);
            (0..3)
                .map(|l| filters[l] * (self.filter_size[0] * self.filter_size[1] * shapes[l].2 + 1))
                .sum()
        };
        let volume = if self.has_volume_stream() { stream(self.volume_filters()) } else { 0 };
        stream(self.filters_per_layer)
            + volume
            + self.fc_hidden * (self.fused_len() + 1)
            + self.output_len() * (self.fc_hidden + 1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_scale_shapes() {
        let cfg = ArchitectureConfig::default();
        cfg.validate().unwrap();
        let shapes = cfg.stream_shapes(cfg.filters_per_layer);
        assert_eq!(shapes[0], (10, 8, 4));
        assert_eq!(shapes[1], (9, 7, 32));
        assert_eq!(shapes[2], (8, 6, 32));
        assert_eq!(shapes[3], (7, 5, 32));
        assert_eq!(cfg.speed_flat_len(), 7 * 5 * 32);
        assert_eq!(cfg.output_len(), 80);
    }

    #[test]
    fn too_small_corridor_fails_fast() {
        let cfg = ArchitectureConfig::for_shape(CorridorShape::new(3, 8, 4).unwrap());
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        let cfg = ArchitectureConfig::for_shape(CorridorShape::new(10, 3, 4).unwrap());
        assert!(cfg.validate().is_err());
        let ok = ArchitectureConfig::for_shape(CorridorShape::new(4, 4, 1).unwrap());
        ok.validate().unwrap();
    }

    #[test]
    fn bad_dropout_is_rejected() {
        let cfg = ArchitectureConfig {
            dropout_fc: 1.0,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = serde_json::from_str::<ArchitectureConfig>(r#"{"fc_hiden": 3}"#);
        assert!(err.is_err());
        let ok: ArchitectureConfig = serde_json::from_str(r#"{"fc_hidden": 3}"#).unwrap();
        assert_eq!(ok.fc_hidden, 3);
    }
}
