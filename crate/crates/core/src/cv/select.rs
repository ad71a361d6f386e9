use crate::metrics::MetricsRow;

use super::ModelConfiguration;

/// Argmin of fold-averaged provincial rRMSE_p; ties go to the smaller id.
/// Benchmarks enter the pool only when `admit_benchmarks` is set.
pub fn select_best_configuration(
    rows: &[MetricsRow],
    admit_benchmarks: bool,
) -> Option<&MetricsRow> {
    rows.iter()
        .filter(|r| {
            admit_benchmarks
                || !ModelConfiguration::parse_id(&r.config_id).is_some_and(|c| c.is_benchmark())
        })
        .filter(|r| r.rrmsep.is_finite())
        .min_by(|a, b| {
            a.rrmsep
                .total_cmp(&b.rrmsep)
                .then_with(|| a.config_id.cmp(&b.config_id))
        })
}
