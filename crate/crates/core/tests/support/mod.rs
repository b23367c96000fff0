#![allow(dead_code)]
pub mod line_counter;
pub mod plan_oracle;
