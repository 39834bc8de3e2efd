use std::fmt::Write as _;

use serde::Serialize;

use super::{run_cv, ExperimentConfig, ExperimentError, Variant};
use crate::datagen::{generate_dataset, GenConfig};
use crate::encoding::encode_dataset;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScaleRow {
    pub size: usize,
    pub variant: Variant,
    pub mean_mae: f64,
    pub std_mae: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScaleReport {
    pub rows: Vec<ScaleRow>,
}

impl ScaleReport {
    pub const CSV_HEADER: &'static str = "size,variant,mean_mae,std_mae";

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(out, "{},{},{},{}", r.size, r.variant, r.mean_mae, r.std_mae);
        }
        out
    }

    pub fn get(&self, size: usize, variant: Variant) -> Option<&ScaleRow> {
        self.rows.iter().find(|r| r.size == size && r.variant == variant)
    }
}

/// Cross-validates `template` on growing prefixes of one generated pool.
///
/// The pool holds `max(sizes)` instances drawn with `base`; every size uses
/// the first `size` of them, so smaller training sets are nested in larger
/// ones. Each variant overrides `template.variant`.
pub fn run_scalability(
    base: &GenConfig,
    sizes: &[usize],
    variants: &[Variant],
    template: &ExperimentConfig,
) -> Result<ScaleReport, ExperimentError> {
    let Some(&largest) = sizes.iter().max() else {
        return Err(ExperimentError::Invalid("no sizes given".into()));
    };
    let mut pool_config = base.clone();
    pool_config.n_instances = largest;
    pool_config.validate().map_err(ExperimentError::Invalid)?;
    let pool = generate_dataset(&pool_config)?;

    let mut rows = Vec::new();
    for &size in sizes {
        let data = pool.prefix(size);
        for &variant in variants {
            let mut config = template.clone();
            config.variant = variant;
            config.validate()?;
            let encoded = encode_dataset(&data, config.target, variant.flag_options(config.target), None)?;
            let report = run_cv(&encoded, &config)?;
            rows.push(ScaleRow { size, variant, mean_mae: report.mean_mae, std_mae: report.std_mae });
        }
    }
    Ok(ScaleReport { rows })
}
