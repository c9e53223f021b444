pub mod data;
pub mod forecast;
pub mod metrics;
pub mod model;
pub mod ndiff;
pub mod series;
pub mod stats;
pub mod synth;
pub mod trainer;

pub use forecast::{ForecastEnsemble, ForecastRequest};
pub use model::{Mode, ModelConfig, Normalization, WiaeModel};
pub use series::{InnovationsSequence, TimeSeries};
pub use trainer::{TrainConfig, TrainReport};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/innovations.md")]
    mod innovations {}
    #[doc = include_str!("../../../book/src/networks.md")]
    mod networks {}
    #[doc = include_str!("../../../book/src/training.md")]
    mod training {}
    #[doc = include_str!("../../../book/src/forecasting.md")]
    mod forecasting {}
    #[doc = include_str!("../../../book/src/metrics.md")]
    mod metrics {}
    #[doc = include_str!("../../../book/src/synthetic.md")]
    mod synthetic {}
    #[doc = include_str!("../../../book/src/data.md")]
    mod data {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
