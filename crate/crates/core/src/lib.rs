//! Cross-aggregation transformer for image restoration: rectangle-window
//! attention, the block/group/network graph, parameter storage and analytic
//! cost accounting.

pub mod attention;
pub mod complexity;
pub mod config;
mod error;
pub mod model;
pub mod params;
pub mod reference;
pub mod registry;
pub mod window;

pub use attention::{rwin_self_attention, rwin_self_attention_traced, AttentionParams, PositionBiasNet};
pub use complexity::{count_params, model_flops, report_render, CostReport};
pub use config::{ModelConfig, Task, WindowSchedule};
pub use error::{CatError, Result};
pub use model::{cat_forward, check_params, infer, init_params, load_for_config};
pub use params::{load_weights, save_weights, BoundParams, ParamStore};
pub use registry::windows;
pub use window::{AxialWindow, Orientation, RegularWindow, WindowGeometry, WindowStrategy};
