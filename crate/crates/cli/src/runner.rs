// SPDX-License-Identifier: MIT OR Apache-2.0

//! Experiment protocols. Each returns its records in emission order; the
//! caller writes them.

use kmm_core::{
    amkm, amkm_append, append_batch, fit, generate_shift, kmm_standard, load_dataset, mmd_squared, nmse,
    predict_importance, split_match_reference, standardize, time_run, BandwidthPolicy, Dataset, ExperimentResult,
    ImportanceModel, KernelConfig, MatchParams, Method, ReferencePool, SplitSpec, SyntheticShiftSpec, TruthMode,
};

use crate::config::{DataSource, RunConfig, SweepAxis};
use crate::error::RunError;

/// Rows used to estimate the median-heuristic bandwidth.
pub const BANDWIDTH_SAMPLE: usize = 1000;
/// Regularizer of the reference fit used as truth on real data.
pub const ORACLE_LAMBDA: f64 = 1e-3;

/// Matching and reference rows for one repeat, with analytic truth when
/// the data are synthetic.
struct Prepared {
    matching: Dataset,
    reference: Dataset,
    analytic: Option<Vec<f64>>,
}

/// Loads a CSV source once per protocol call.
struct Source<'a> {
    cfg: &'a RunConfig,
    table: Option<Dataset>,
}

impl<'a> Source<'a> {
    fn new(cfg: &'a RunConfig) -> Result<Self, RunError> {
        let table = match &cfg.data {
            DataSource::Csv(c) => {
                let raw = load_dataset(&c.path, c.header)?;
                Some(if cfg.standardize { standardize(&raw)? } else { raw })
            }
            DataSource::Synthetic(_) => None,
        };
        Ok(Self { cfg, table })
    }

    fn draw(&self, seed: u64) -> Result<Prepared, RunError> {
        match (&self.cfg.data, &self.table) {
            (DataSource::Synthetic(s), _) => {
                let spec = SyntheticShiftSpec {
                    d: s.d,
                    matching_mean: s.matching_mean.clone(),
                    matching_sigma: s.matching_sigma,
                    reference_mean: s.reference_mean.clone(),
                    reference_sigma: s.reference_sigma,
                    n_m: s.n_m,
                    n_r: s.n_r,
                    seed,
                };
                let sample = generate_shift(&spec)?;
                Ok(Prepared { matching: sample.matching, reference: sample.reference, analytic: Some(sample.true_weights) })
            }
            (DataSource::Csv(c), Some(table)) => {
                let spec = SplitSpec { n_matching: c.n_m, n_reference: c.n_r, seed };
                let (matching, reference) = split_match_reference(table, &spec)?;
                Ok(Prepared { matching, reference, analytic: None })
            }
            (DataSource::Csv(_), None) => unreachable!("csv table is loaded in Source::new"),
        }
    }
}

fn kernel_for(policy: BandwidthPolicy, matching: &Dataset, reference: &Dataset) -> Result<KernelConfig, RunError> {
    Ok(match policy {
        BandwidthPolicy::Fixed(s) => KernelConfig::fixed(s)?,
        BandwidthPolicy::Median => KernelConfig::median_pooled(matching, reference, BANDWIDTH_SAMPLE)?,
    })
}

fn truth_weights(
    mode: TruthMode,
    analytic: Option<&[f64]>,
    matching: &Dataset,
    reference: &Dataset,
    kernel: &KernelConfig,
) -> Result<Vec<f64>, RunError> {
    match (mode, analytic) {
        (TruthMode::Analytic, Some(w)) => Ok(w.to_vec()),
        (TruthMode::Analytic, None) => Err(RunError::Usage("analytic truth needs synthetic data".into())),
        (TruthMode::FullKmmOracle, _) => {
            let oracle = kmm_standard(matching, reference, kernel, ORACLE_LAMBDA)?;
            Ok(predict_importance(&oracle, matching)?)
        }
    }
}

/// Scores a fitted model and builds its record.
#[allow(clippy::too_many_arguments)]
fn record<M: ImportanceModel>(
    cfg: &RunConfig,
    method: Method,
    params: &MatchParams,
    model: &M,
    t: usize,
    matching: &Dataset,
    reference: &Dataset,
    truth: &[f64],
    wallclock_ms: f64,
) -> Result<ExperimentResult, RunError> {
    let weights = predict_importance(model, matching)?;
    Ok(ExperimentResult {
        method: method.id().to_string(),
        n_m: matching.n(),
        n_r: reference.n(),
        t,
        n: params.n,
        n_s: params.n_s,
        n_h: params.n_h,
        partitions: params.partitions,
        lambda: params.lambda,
        sigma: model.kernel().sigma(),
        seed: params.seed,
        nmse: nmse(&weights, truth)?,
        mmd2: mmd_squared(model.coefficients().as_slice(), matching, reference, model.kernel())?,
        wallclock_ms: if cfg.timing { wallclock_ms } else { 0.0 },
        truth_mode: cfg.truth.id().to_string(),
    })
}

fn single_fit(cfg: &RunConfig, source: &Source, seed: u64) -> Result<ExperimentResult, RunError> {
    let data = source.draw(seed)?;
    let params = MatchParams { seed, ..cfg.params };
    params.validate(cfg.method, data.reference.n())?;
    let kernel = kernel_for(cfg.kernel, &data.matching, &data.reference)?;
    let (model, ms) = time_run(|| fit(cfg.method, &data.matching, &data.reference, &params, &kernel));
    let model = model?;
    let truth = truth_weights(cfg.truth, data.analytic.as_deref(), &data.matching, &data.reference, &kernel)?;
    let t = if cfg.method == Method::Amkm { params.t } else { 1 };
    record(cfg, cfg.method, &params, &model, t, &data.matching, &data.reference, &truth, ms)
}

/// Mean of the metric columns, labeled `<method>-mean` and carrying the
/// base seed. Size columns come from the first record.
pub fn aggregate(records: &[ExperimentResult], base_seed: u64) -> ExperimentResult {
    let k = records.len() as f64;
    let mean = |f: fn(&ExperimentResult) -> f64| records.iter().map(f).sum::<f64>() / k;
    let first = &records[0];
    ExperimentResult {
        method: format!("{}-mean", first.method),
        seed: base_seed,
        nmse: mean(|r| r.nmse),
        mmd2: mean(|r| r.mmd2),
        wallclock_ms: mean(|r| r.wallclock_ms),
        sigma: mean(|r| r.sigma),
        ..first.clone()
    }
}

fn repeated(cfg: &RunConfig, source: &Source) -> Result<Vec<ExperimentResult>, RunError> {
    (0..cfg.repeats as u64).map(|r| single_fit(cfg, source, cfg.seed.wrapping_add(r))).collect()
}

/// `repeats` records, one per seed `seed + r`, then their aggregate.
pub fn run(cfg: &RunConfig) -> Result<Vec<ExperimentResult>, RunError> {
    cfg.check_params()?;
    let source = Source::new(cfg)?;
    let mut out = repeated(cfg, &source)?;
    out.push(aggregate(&out, cfg.seed));
    Ok(out)
}

/// One aggregate record per sweep value, in the configured order.
pub fn sweep(cfg: &RunConfig) -> Result<Vec<ExperimentResult>, RunError> {
    let spec = cfg.sweep.as_ref().ok_or_else(|| RunError::Usage("sweep needs sweep.axis and sweep.values".into()))?;
    if !spec.axis.applies_to(cfg.method) {
        return Err(RunError::Usage(format!("axis {} does not apply to method {}", spec.axis.id(), cfg.method.id())));
    }
    let source = Source::new(cfg)?;
    let mut out = Vec::with_capacity(spec.values.len());
    for &v in &spec.values {
        let mut point = cfg.clone();
        match spec.axis {
            SweepAxis::NM => point.data.set_n_m(v),
            SweepAxis::NR => point.data.set_n_r(v),
            SweepAxis::N => point.params.n = v,
            SweepAxis::NS => point.params.n_s = v,
            SweepAxis::NH => point.params.n_h = v,
            SweepAxis::Partitions => point.params.partitions = v,
        }
        point.check_params()?;
        let source = Source { cfg: &point, table: source.table.clone() };
        out.push(aggregate(&repeated(&point, &source)?, cfg.seed));
    }
    Ok(out)
}

/// Starts from `initial_reference` rows and appends `batches` batches of
/// `batch_size`. Adaptive matching extends its model per batch; the other
/// methods refit on the accumulated pool. One aggregate record per step.
pub fn scalable(cfg: &RunConfig) -> Result<Vec<ExperimentResult>, RunError> {
    let spec = cfg.scalable.ok_or_else(|| RunError::Usage("scalable needs scalable.initial_reference, batch_size and batches".into()))?;
    if spec.batches == 0 {
        return Ok(Vec::new());
    }
    let needed = spec.initial_reference + spec.batch_size * spec.batches;
    if needed > cfg.data.n_r() {
        return Err(RunError::Usage(format!(
            "reference pool exhausted: {} initial + {} x {} rows needs {needed}, the data source provides {}",
            spec.initial_reference,
            spec.batches,
            spec.batch_size,
            cfg.data.n_r()
        )));
    }
    cfg.check_params()?;
    let source = Source::new(cfg)?;
    let mut per_step: Vec<Vec<ExperimentResult>> = vec![Vec::new(); spec.batches];
    for r in 0..cfg.repeats as u64 {
        let seed = cfg.seed.wrapping_add(r);
        let data = source.draw(seed)?;
        let params = MatchParams { seed, ..cfg.params };
        let rows = |a: usize, b: usize| data.reference.select(&(a..b).collect::<Vec<_>>());
        let initial = rows(0, spec.initial_reference)?;
        // Bandwidth is fixed at the start so appended repetitions share it.
        let kernel = kernel_for(cfg.kernel, &data.matching, &initial)?;
        let mut pool = append_batch(&ReferencePool::new(), initial.clone())?;
        let mut model = match cfg.method {
            Method::Amkm => Some(amkm(&data.matching, &initial, &params, &kernel)?),
            _ => None,
        };
        for (step, records) in per_step.iter_mut().enumerate() {
            let start = spec.initial_reference + step * spec.batch_size;
            let batch = rows(start, start + spec.batch_size)?;
            pool = append_batch(&pool, batch.clone())?;
            let accumulated = pool.flatten().expect("pool holds the initial batch");
            let truth = truth_weights(cfg.truth, data.analytic.as_deref(), &data.matching, &accumulated, &kernel)?;
            let rec = match model.as_mut() {
                Some(m) => {
                    let (next, ms) = time_run(|| amkm_append(m, &data.matching, &batch, &params, &kernel));
                    *m = next?;
                    record(cfg, Method::Amkm, &params, &*m, m.repetitions(), &data.matching, &accumulated, &truth, ms)?
                }
                None => {
                    params.validate(cfg.method, accumulated.n())?;
                    let (fitted, ms) = time_run(|| fit(cfg.method, &data.matching, &accumulated, &params, &kernel));
                    record(cfg, cfg.method, &params, &fitted?, 1, &data.matching, &accumulated, &truth, ms)?
                }
            };
            records.push(rec);
        }
    }
    Ok(per_step.iter().map(|recs| aggregate(recs, cfg.seed)).collect())
}

/// One aggregate row per config. All configs must share the data source,
/// seed, and preprocessing so every method sees the same splits.
pub fn compare(configs: &[RunConfig]) -> Result<Vec<ExperimentResult>, RunError> {
    let expanded: Vec<RunConfig> = match configs {
        [] => return Err(RunError::Usage("compare needs at least one config".into())),
        [single] if !single.compare_methods.is_empty() => single
            .compare_methods
            .iter()
            .map(|&method| RunConfig { method, ..single.clone() })
            .collect(),
        many => many.to_vec(),
    };
    let first = &expanded[0];
    for c in &expanded[1..] {
        if c.data != first.data || c.seed != first.seed || c.standardize != first.standardize || c.repeats != first.repeats {
            return Err(RunError::Usage(format!(
                "compare needs one shared data source, seed, standardize flag and repeat count; config for {} differs from {}",
                c.method.id(),
                first.method.id()
            )));
        }
    }
    let source = Source::new(first)?;
    expanded
        .iter()
        .map(|c| {
            c.check_params()?;
            let source = Source { cfg: c, table: source.table.clone() };
            Ok(aggregate(&repeated(c, &source)?, c.seed))
        })
        .collect()
}
