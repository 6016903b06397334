use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use serde::Serialize;

use linkbn::baselines::{draw_samples, read_samples, write_samples, AviEstimator, SampleSet, SamplingEstimator};
use linkbn::catalog::{load_schema, Catalog, Schema};
use linkbn::inference::{Estimate, Estimator, LinkedEstimator};
use linkbn::linker::{build_linked_with_report, load_model, save_model, LinkedModel};
use linkbn::oracle::{exact_with, OracleOptions, Truth};
use linkbn::query::{parse_query, Query};
use linkbn::workload::{expand_workload, run_bench, write_report, BenchOptions, MethodCost, WorkloadSpec};
use linkbn::factor::ClampPolicy;

use crate::config::{Method, RunConfig, DEFAULT_METHODS};

#[derive(Clone, Debug, Serialize)]
pub struct RelationTime {
    pub relation: String,
    pub secs: f64,
}

/// What `build` reports next to the model file.
#[derive(Clone, Debug, Serialize)]
pub struct BuildSummary {
    pub model: String,
    pub k: usize,
    pub nodes: usize,
    pub model_bytes: u64,
    pub construction_secs: f64,
    pub relations: Vec<RelationTime>,
}

fn load_catalog(cfg: &RunConfig) -> Result<Catalog> {
    let path = cfg.schema_path()?;
    let mut schema = load_schema(path)?;
    cfg.apply_k_edges(&mut schema)?;
    let watch = Instant::now();
    let catalog = Catalog::from_schema(schema).with_context(|| format!("loading data for {}", path.display()))?;
    log::info!("loaded {} in {:.3}s", path.display(), watch.elapsed().as_secs_f64());
    Ok(catalog)
}

fn read_query(path: &Path, schema: &Schema, catalog_or_model: &dyn linkbn::catalog::DomainSource) -> Result<Query> {
    let text = if path.as_os_str() == "-" {
        std::io::read_to_string(std::io::stdin()).context("reading query from stdin")?
    } else {
        std::fs::read_to_string(path).with_context(|| format!("reading query {}", path.display()))?
    };
    Ok(parse_query(&text, schema, catalog_or_model)?)
}

fn build_model(catalog: &Catalog, k: usize) -> Result<(LinkedModel, BuildSummary)> {
    let (model, report) = build_linked_with_report(catalog, k)?;
    let bytes = model.to_json()?.len() as u64;
    let summary = BuildSummary {
        model: String::new(),
        k,
        nodes: model.node_count(),
        model_bytes: bytes,
        construction_secs: report.total.as_secs_f64(),
        relations: report
            .relations
            .iter()
            .map(|(r, d)| RelationTime {
                relation: r.clone(),
                secs: d.as_secs_f64(),
            })
            .collect(),
    };
    Ok((model, summary))
}

/// Learns the linked networks and writes the model plus a
/// `<model>.report.json` build report.
pub fn cmd_build(cfg: &RunConfig) -> Result<BuildSummary> {
    let out = cfg.out_path()?;
    let catalog = load_catalog(cfg)?;
    let (model, mut summary) = build_model(&catalog, cfg.k)?;
    summary.model_bytes = save_model(&model, out)?;
    summary.model = out.display().to_string();
    let report_path = out.with_extension("report.json");
    std::fs::write(&report_path, serde_json::to_string_pretty(&summary)?)
        .with_context(|| format!("writing {}", report_path.display()))?;
    Ok(summary)
}

fn samples_for(cfg: &RunConfig, catalog: &Catalog, method: Method) -> Result<SampleSet> {
    let mode = method.sample_mode().expect("sampling method");
    if let Some(dir) = &cfg.samples {
        let samples = read_samples(dir)?;
        if samples.mode != mode {
            bail!("samples in {} were drawn in {} mode", dir.display(), samples.mode.method());
        }
        return Ok(samples);
    }
    Ok(draw_samples(catalog, cfg.rate, cfg.seed.unwrap_or(0), mode)?)
}

/// Estimates one query with every requested method. Without `--methods`
/// the model given by `--model` is used.
pub fn cmd_estimate(cfg: &RunConfig, query_path: &Path) -> Result<Vec<Estimate>> {
    let clamp = ClampPolicy { enabled: cfg.clamp };
    let schema_path = cfg.schema_path()?;
    let mut schema = load_schema(schema_path)?;
    cfg.apply_k_edges(&mut schema)?;
    let model = cfg.model.as_deref().map(load_model).transpose()?;
    if let Some(m) = &model {
        m.check_schema(&schema)?;
    }
    let methods = if cfg.methods.is_empty() {
        match &model {
            Some(m) => vec![Method::Linked(m.k)],
            None => bail!("nothing to estimate with: pass --model or --methods"),
        }
    } else {
        cfg.methods.clone()
    };
    let needs_data = methods
        .iter()
        .any(|m| !matches!((m, &model), (Method::Linked(k), Some(model)) if model.k == *k));
    let catalog = if needs_data {
        Some(Catalog::from_schema(schema.clone())?)
    } else {
        None
    };
    let query = match (&catalog, &model) {
        (Some(c), _) => read_query(query_path, &schema, c)?,
        (None, Some(m)) => read_query(query_path, &schema, m)?,
        (None, None) => unreachable!("either data or a model is loaded"),
    };

    let mut out = Vec::new();
    for method in methods {
        let estimate = match method {
            Method::Linked(k) => match &model {
                Some(m) if m.k == k => LinkedEstimator { model: m, clamp }.estimate(&query)?,
                _ => {
                    let catalog = catalog.as_ref().expect("data loaded");
                    log::info!("building k={k} in memory");
                    let (m, _) = build_model(catalog, k)?;
                    LinkedEstimator { model: &m, clamp }.estimate(&query)?
                }
            },
            Method::Avi => {
                let mut avi = AviEstimator::new(catalog.as_ref().expect("data loaded"))?;
                avi.clamp = clamp;
                avi.estimate(&query)?
            }
            Method::Sampling | Method::Correlated => {
                let catalog = catalog.as_ref().expect("data loaded");
                let mut est = SamplingEstimator::new(catalog, samples_for(cfg, catalog, method)?);
                est.clamp = clamp;
                est.estimate(&query)?
            }
        };
        out.push(estimate);
    }
    Ok(out)
}

/// Exact selectivity by executing the join.
pub fn cmd_oracle(cfg: &RunConfig, query_path: &Path) -> Result<Truth> {
    let catalog = load_catalog(cfg)?;
    let query = read_query(query_path, &catalog.schema, &catalog)?;
    Ok(exact_with(
        &catalog,
        &query,
        OracleOptions {
            max_rows: cfg.max_rows,
        },
    )?)
}

fn load_workload(cfg: &RunConfig, path: &Path, schema: &Schema) -> Result<Vec<Query>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading workload {}", path.display()))?;
    let mut spec = WorkloadSpec::from_json(&text).with_context(|| format!("parsing workload {}", path.display()))?;
    if let Some(seed) = cfg.seed {
        spec.seed = seed;
    }
    if cfg.expand_cap.is_some() {
        spec.cap = cfg.expand_cap;
    }
    Ok(expand_workload(&spec, schema)?)
}

/// Expands a workload file into one JSON query per line.
pub fn cmd_workload_expand(cfg: &RunConfig, workload_path: &Path) -> Result<Vec<Query>> {
    let schema = load_schema(cfg.schema_path()?)?;
    let queries = load_workload(cfg, workload_path, &schema)?;
    if let Some(out) = &cfg.out {
        let mut text = String::new();
        for q in &queries {
            text.push_str(&q.to_json());
            text.push('\n');
        }
        std::fs::write(out, text).with_context(|| format!("writing {}", out.display()))?;
    }
    Ok(queries)
}

#[derive(Clone, Debug, Serialize)]
pub struct MethodLine {
    pub method: String,
    pub median: f64,
    pub p90: f64,
    pub max: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct BenchSummary {
    pub out: String,
    pub queries: usize,
    pub records: usize,
    pub skipped: usize,
    pub methods: Vec<MethodLine>,
}

fn dir_bytes(dir: &Path) -> Result<u64> {
    let mut total = 0;
    for entry in std::fs::read_dir(dir).with_context(|| format!("listing {}", dir.display()))? {
        total += entry?.metadata()?.len();
    }
    Ok(total)
}

/// Expands the workload, runs the oracle and every method, and writes the
/// report files into `--out`.
pub fn cmd_bench(cfg: &RunConfig, workload_path: &Path) -> Result<BenchSummary> {
    let out = cfg.out_path()?;
    let clamp = ClampPolicy { enabled: cfg.clamp };
    let catalog = load_catalog(cfg)?;
    let queries = load_workload(cfg, workload_path, &catalog.schema)?;
    let methods = if cfg.methods.is_empty() {
        DEFAULT_METHODS.to_vec()
    } else {
        cfg.methods.clone()
    };
    let given = cfg.model.as_deref().map(load_model).transpose()?;
    if let Some(m) = &given {
        m.check_schema(&catalog.schema)?;
    }

    let mut costs = BTreeMap::new();
    let mut models = Vec::new();
    let mut avi = None;
    let mut sample_sets = Vec::new();
    for &method in &methods {
        let watch = Instant::now();
        let cost = match method {
            Method::Linked(k) => {
                let model = match &given {
                    Some(m) if m.k == k => m.clone(),
                    _ => build_model(&catalog, k)?.0,
                };
                let bytes = model.to_json()?.len() as u64;
                models.push(model);
                MethodCost {
                    construction_secs: watch.elapsed().as_secs_f64(),
                    model_bytes: bytes,
                }
            }
            Method::Avi => {
                let mut est = AviEstimator::new(&catalog)?;
                est.clamp = clamp;
                avi = Some(est);
                // one f64 per value of every attribute
                let entries: usize = catalog
                    .relations()
                    .flat_map(|r| r.columns.iter().map(|c| c.cardinality()))
                    .sum();
                MethodCost {
                    construction_secs: watch.elapsed().as_secs_f64(),
                    model_bytes: 8 * entries as u64,
                }
            }
            Method::Sampling | Method::Correlated => {
                let samples = samples_for(cfg, &catalog, method)?;
                let secs = watch.elapsed().as_secs_f64();
                let dir = out.join("samples").join(method.to_string());
                write_samples(&catalog, &samples, &dir)?;
                sample_sets.push(samples);
                MethodCost {
                    construction_secs: secs,
                    model_bytes: dir_bytes(&dir)?,
                }
            }
        };
        costs.insert(method.to_string(), cost);
    }

    let mut estimators: Vec<Box<dyn Estimator + '_>> = Vec::new();
    let mut models = models.iter();
    let mut sample_sets = sample_sets.into_iter();
    for method in &methods {
        match method {
            Method::Linked(_) => estimators.push(Box::new(LinkedEstimator {
                model: models.next().expect("one model per linked method"),
                clamp,
            })),
            Method::Avi => estimators.push(Box::new(avi.take().expect("one avi estimator"))),
            Method::Sampling | Method::Correlated => {
                let mut est = SamplingEstimator::new(&catalog, sample_sets.next().expect("one sample per method"));
                est.clamp = clamp;
                estimators.push(Box::new(est));
            }
        }
    }
    let refs: Vec<&dyn Estimator> = estimators.iter().map(|e| e.as_ref()).collect();
    let result = run_bench(
        &catalog,
        &refs,
        &queries,
        BenchOptions {
            jobs: cfg.jobs,
            oracle: OracleOptions {
                max_rows: cfg.max_rows,
            },
        },
    );
    for (id, method, reason) in &result.skipped {
        log::warn!("skipped query {id} {method}: {reason}");
    }
    write_report(&result, &costs, out)?;

    let lines = methods
        .iter()
        .map(|m| {
            let stats = result.stats(&m.to_string());
            MethodLine {
                method: m.to_string(),
                median: stats.median,
                p90: stats.p90,
                max: stats.max,
            }
        })
        .collect();
    Ok(BenchSummary {
        out: out.display().to_string(),
        queries: result.queries,
        records: result.records.len(),
        skipped: result.skipped.len(),
        methods: lines,
    })
}
