#![allow(dead_code)]

pub mod metric_oracle;
pub mod slice_oracle;
