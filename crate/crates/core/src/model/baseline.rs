use super::network::{LaneCnn, PredictionPair};
use crate::data::CorridorShape;
use crate::error::{ensure_dim, Result};
use crate::tensor::LaneTensor;

/// Anything that maps one input window to a next-step prediction.
///
/// Implementations always return both halves at length `k·c`; a model
/// without a volume head carries the last observed volumes forward.
pub trait Forecaster {
    fn shape(&self) -> CorridorShape;
    fn forecast(&self, x_u: &LaneTensor, x_q: &LaneTensor) -> Result<PredictionPair>;
}

/// Last observed column of `x`, in the output layout (detector-major, lane innermost).
pub fn persistence(x: &LaneTensor) -> Vec<f64> {
    x.column(x.cols() - 1)
}

/// Predicts that nothing changes over the next step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Persistence {
    pub shape: CorridorShape,
}

impl Forecaster for Persistence {
    fn shape(&self) -> CorridorShape {
        self.shape
    }

    fn forecast(&self, x_u: &LaneTensor, x_q: &LaneTensor) -> Result<PredictionPair> {
        let s = self.shape;
        ensure_dim("persistence", "speed input cells", s.k * s.n * s.c, x_u.len())?;
        ensure_dim("persistence", "volume input cells", s.k * s.n * s.c, x_q.len())?;
        Ok(PredictionPair {
            pred_u: persistence(x_u),
            pred_q: persistence(x_q),
        })
    }
}

impl Forecaster for LaneCnn {
    fn shape(&self) -> CorridorShape {
        self.config().shape
    }

    fn forecast(&self, x_u: &LaneTensor, x_q: &LaneTensor) -> Result<PredictionPair> {
        let mut pred = self.predict(x_u, x_q)?;
        if pred.pred_q.is_empty() {
            pred.pred_q = persistence(x_q);
        }
        Ok(pred)
    }
}
