pub mod analysis;
pub mod decision;
pub mod labels;
pub mod metrics;
pub mod mllm;
pub mod phantoms;
pub mod taxonomy;
pub mod volume;
