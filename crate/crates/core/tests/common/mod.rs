// Copyright 2026 The mda Authors
// SPDX-License-Identifier: Apache-2.0

#![allow(dead_code)]

pub mod modelgen;
pub mod randomized;

pub const PROFILER_CLASS: &str = r#"class ConsumptionProfiler {
    with "GaussianMixture"
    with resolution "1week"
  dependency consumption: Consumption
  input "consumption | =energyConsumed"
  input "consumption | =HOURS(timestamp)"
  output probability: Double }
"#;

pub const CONSUMPTION: &str = "class Consumption { att energyConsumed: Double }\n";
