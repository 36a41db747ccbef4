//! Subcommand implementations. Each writes into `out` and returns the paths
//! it wrote, in a fixed order.

use std::path::{Path, PathBuf};

use strad::checkpoint;
use strad::detector::{self, LossKind};
use strad::gradcheck::{self, GradcheckOptions, SuiteResult};
use strad::metrics::{self, Metric};
use strad::timeseries::{self, segments_from_labels};
use strad::LossWeights;

use crate::config::{short_hash, DatasetConfig, ExperimentConfig, ThresholdMode};
use crate::error::{CliError, Result};
use crate::pipeline::{self, Prepared, RunResult};
use crate::report::{self, median, Provenance, Table};

fn select<'a>(cfg: &'a ExperimentConfig, dataset: Option<&str>) -> Result<Vec<&'a DatasetConfig>> {
    cfg.require_datasets()?;
    Ok(match dataset {
        Some(_) => vec![cfg.dataset(dataset)?],
        None => cfg.datasets.iter().collect(),
    })
}

fn provenance(cfg: &ExperimentConfig) -> Provenance {
    Provenance::new(cfg.hash(), cfg.seed)
}

fn f(v: f64) -> String {
    v.to_string()
}

/// Writes `train.csv`, `test.csv` and `manifest.toml` per synthetic dataset.
///
/// The manifest is a standalone config for that dataset with its seed filled
/// in, so `synth --config manifest.toml` reproduces the CSVs byte for byte.
pub fn synth(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<PathBuf>> {
    cfg.require_datasets()?;
    let mut written = Vec::new();
    for ds in &cfg.datasets {
        let Some(src) = &ds.synth else {
            log::info!("dataset `{}` reads CSV files; nothing to generate", ds.name);
            continue;
        };
        let gen = src.generator(cfg.seed);
        let bench = strad::synth::make_benchmark(&gen, &src.anomaly, src.train_fraction)?;

        let mut resolved = ds.clone();
        if let Some(s) = resolved.synth.as_mut() {
            s.seed = Some(gen.seed);
        }
        let section = toml::to_string(&resolved).expect("dataset serializes");
        let prov = Provenance::new(short_hash(section.as_bytes()), gen.seed);
        let preamble = [prov.line()];

        let dir = out.join(&ds.name);
        let cols = timeseries::default_column_names(gen.channels.len());
        for (file, series) in [("train.csv", &bench.train), ("test.csv", &bench.test)] {
            let path = dir.join(file);
            let mut buf = Vec::new();
            timeseries::write_csv(&mut buf, series, &cols, "label", &preamble)?;
            report::write_file(&path, buf)?;
            written.push(path);
        }

        let manifest = ExperimentConfig {
            seed: gen.seed,
            output_dir: out.to_path_buf(),
            datasets: vec![resolved],
            ..cfg.clone()
        };
        let path = dir.join("manifest.toml");
        report::write_file(&path, format!("# {}\n{}", prov.line(), manifest.to_toml()))?;
        written.push(path);
    }
    Ok(written)
}

/// Trains one model per selected dataset; writes `checkpoint.bin`,
/// `checkpoint.toml` (provenance sidecar) and `history.csv`.
pub fn train(cfg: &ExperimentConfig, out: &Path, dataset: Option<&str>) -> Result<Vec<PathBuf>> {
    let prov = provenance(cfg);
    let mut written = Vec::new();
    for ds in select(cfg, dataset)? {
        let data = pipeline::prepare(cfg, ds)?;
        let outcome = pipeline::train_model(cfg, &data.train, cfg.train.loss, cfg.seed)?;
        let dir = out.join(&ds.name);

        let ckpt = dir.join("checkpoint.bin");
        let bytes = checkpoint::encode(&outcome.model);
        report::write_file(&ckpt, &bytes)?;
        written.push(ckpt);

        let sidecar = dir.join("checkpoint.toml");
        report::write_file(
            &sidecar,
            format!(
                "# {}\ncheckpoint_sha256 = \"{}\"\nloss = \"{}\"\nsteps = {}\n",
                prov.line(),
                short_hash(&bytes),
                cfg.train.loss.name(),
                outcome.steps
            ),
        )?;
        written.push(sidecar);

        let breakdown = cfg.train.loss.has_breakdown();
        let mut table = if breakdown {
            Table::new(["epoch", "total", "trend", "seasonality", "shape"])
        } else {
            Table::new(["epoch", "total"])
        };
        for rec in &outcome.history {
            let mut row = vec![rec.epoch.to_string(), f(rec.total)];
            if breakdown {
                let b = rec.breakdown.unwrap_or_default();
                row.extend([f(b.trend), f(b.seasonality), f(b.shape)]);
            }
            table.push(row);
        }
        let path = dir.join("history.csv");
        report::write_file(&path, &table.to_csv(&prov)?)?;
        written.push(path);
    }
    Ok(written)
}

/// Scores the test split with a trained checkpoint; writes `scores.csv`,
/// `predicted_segments.csv` and `detect.csv` (the chosen threshold).
///
/// In quantile mode the threshold comes from training-split scores and the
/// test labels are never read.
pub fn detect(
    cfg: &ExperimentConfig,
    out: &Path,
    dataset: Option<&str>,
    checkpoint_path: Option<&Path>,
) -> Result<Vec<PathBuf>> {
    let selected = select(cfg, dataset)?;
    if checkpoint_path.is_some() && selected.len() != 1 {
        return Err(CliError::Usage(
            "--checkpoint needs a single dataset; pass --dataset".into(),
        ));
    }
    let prov = provenance(cfg);
    let mut written = Vec::new();
    for ds in selected {
        let dir = out.join(&ds.name);
        let ckpt = checkpoint_path
            .map(Path::to_path_buf)
            .unwrap_or_else(|| dir.join("checkpoint.bin"));
        let bytes = std::fs::read(&ckpt).map_err(|e| CliError::io(&ckpt, e))?;
        let model = checkpoint::decode(&bytes)?;
        let data = pipeline::prepare(cfg, ds)?;
        let scores = pipeline::score_series(cfg, &model, &data.test)?;

        let (threshold, f1) = match cfg.threshold.mode {
            ThresholdMode::Quantile => (
                pipeline::label_free_threshold(cfg, &model, &data)?.expect("quantile threshold"),
                None,
            ),
            ThresholdMode::BestF1 => {
                let labels = data.test_labels()?;
                let c = detector::threshold_best_f1(&scores, labels, cfg.threshold.metric)?;
                (c.threshold, Some(c.f1))
            }
        };

        let path = dir.join("scores.csv");
        let mut buf = Vec::new();
        timeseries::write_scores(&mut buf, &scores, &[prov.line()])?;
        report::write_file(&path, buf)?;
        written.push(path);

        let mut segs = Table::new(["start", "end"]);
        for s in segments_from_labels(&detector::predict(&scores, threshold)) {
            segs.push(vec![s.start.to_string(), s.end.to_string()]);
        }
        let path = dir.join("predicted_segments.csv");
        report::write_file(&path, &segs.to_csv(&prov)?)?;
        written.push(path);

        let mut t = Table::new(["dataset", "mode", "metric", "threshold", "f1"]);
        let (mode, metric) = match cfg.threshold.mode {
            ThresholdMode::Quantile => (
                format!("quantile={}", cfg.threshold.quantile),
                String::new(),
            ),
            ThresholdMode::BestF1 => (
                "best_f1".to_string(),
                cfg.threshold.metric.name().to_string(),
            ),
        };
        t.push(vec![
            ds.name.clone(),
            mode,
            metric,
            f(threshold),
            f1.map(f).unwrap_or_default(),
        ]);
        let path = dir.join("detect.csv");
        report::write_file(&path, &t.to_csv(&prov)?)?;
        written.push(path);
    }
    Ok(written)
}

/// One scored sub-dataset for [`eval`].
#[derive(Debug, Clone)]
pub struct EvalInput {
    pub scores: PathBuf,
    pub labels: PathBuf,
}

fn eval_name(path: &Path) -> String {
    path.parent()
        .and_then(Path::file_name)
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

/// Evaluates score files against labeled CSVs and writes `report.csv` /
/// `report.txt` with per-sub-dataset rows and segment-weighted `entire` rows.
///
/// Without `threshold`, each metric uses its own best-F1 threshold.
pub fn eval(
    inputs: &[EvalInput],
    metrics_list: &[Metric],
    threshold: Option<f64>,
    label_column: &str,
    out: &Path,
) -> Result<Vec<PathBuf>> {
    if inputs.is_empty() {
        return Err(CliError::Usage(
            "eval needs at least one --scores/--labels pair".into(),
        ));
    }
    if metrics_list.is_empty() {
        return Err(CliError::Usage("no metrics selected".into()));
    }
    let mut names: Vec<String> = inputs.iter().map(|i| eval_name(&i.scores)).collect();
    let unique: std::collections::BTreeSet<&String> = names.iter().collect();
    if unique.len() != names.len() {
        names = inputs
            .iter()
            .map(|i| i.scores.display().to_string())
            .collect();
    }

    let mut provs = Vec::new();
    let mut rows = Vec::new();
    for (input, name) in inputs.iter().zip(&names) {
        provs.push(Provenance::read_from(&input.scores)?);
        let scores = read_with(&input.scores, timeseries::read_scores)?;
        let labels = read_with(&input.labels, |r| timeseries::read_labels(r, label_column))?;
        if scores.len() != labels.len() {
            return Err(CliError::Usage(format!(
                "{name}: {} scores but {} labels",
                scores.len(),
                labels.len()
            )));
        }
        let segments = segments_from_labels(&labels).len();
        let results = pipeline::evaluate(&scores, &labels, metrics_list, threshold)?;
        rows.push((name.clone(), RunResult { segments, results }));
    }
    let prov = merge_provenance(&provs);

    let mut table = Table::new([
        "dataset",
        "metric",
        "segments",
        "threshold",
        "tp",
        "fp",
        "fn",
        "precision",
        "recall",
        "f1",
    ]);
    for (name, run) in &rows {
        for r in &run.results {
            table.push(vec![
                name.clone(),
                r.metric.name().into(),
                run.segments.to_string(),
                f(r.threshold),
                r.counts.tp.to_string(),
                r.counts.fp.to_string(),
                r.counts.fn_.to_string(),
                f(r.counts.precision()),
                f(r.counts.recall()),
                f(r.f1),
            ]);
        }
    }
    let total: usize = rows.iter().map(|(_, r)| r.segments).sum();
    for &m in metrics_list {
        let entire = entire_f1(rows.iter().map(|(_, r)| r), m)?;
        let mut row = vec![String::new(); 10];
        row[0] = "entire".into();
        row[1] = m.name().into();
        row[2] = total.to_string();
        row[9] = f(entire);
        table.push(row);
    }
    report::write_table(out, "report", &table, &prov)?;
    Ok(vec![out.join("report.csv"), out.join("report.txt")])
}

fn read_with<T>(path: &Path, parse: impl FnOnce(std::fs::File) -> strad::Result<T>) -> Result<T> {
    if !path.is_file() {
        return Err(strad::Error::MissingFile(path.to_path_buf()).into());
    }
    let file = std::fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    Ok(parse(file)?)
}

fn merge_provenance(provs: &[Option<Provenance>]) -> Provenance {
    let known: Vec<&Provenance> = provs.iter().flatten().collect();
    if known.len() == provs.len() && known.windows(2).all(|w| w[0] == w[1]) {
        return known[0].clone();
    }
    let joined: Vec<String> = provs
        .iter()
        .map(|p| p.as_ref().map(Provenance::line).unwrap_or_default())
        .collect();
    let seeds: std::collections::BTreeSet<&str> = known.iter().map(|p| p.seed.as_str()).collect();
    let seed = match seeds.len() {
        1 => seeds.into_iter().next().unwrap_or_default().to_string(),
        _ => "mixed".to_string(),
    };
    Provenance::new(short_hash(joined.join("\n").as_bytes()), seed)
}

/// Segment-weighted F1 of `metric` over runs.
pub fn entire_f1<'a>(runs: impl Iterator<Item = &'a RunResult>, metric: Metric) -> Result<f64> {
    let pairs: Vec<(usize, f64)> = runs.map(|r| (r.segments, r.f1(metric))).collect();
    Ok(metrics::entire_f1(&pairs)?)
}

fn prepare_all(cfg: &ExperimentConfig) -> Result<Vec<Prepared>> {
    cfg.require_datasets()?;
    let data = cfg
        .datasets
        .iter()
        .map(|ds| pipeline::prepare(cfg, ds))
        .collect::<Result<Vec<_>>>()?;
    for d in &data {
        d.test_labels()?;
    }
    Ok(data)
}

/// Trains every (loss, dataset, seed) combination, evaluates, and writes:
///
/// - `comparison_runs.csv`: one row per job and metric
/// - `comparison.csv`: median F1 over seeds per (loss, dataset)
/// - `comparison_entire.csv`: entire-dataset F1 per (loss, seed), plus medians
/// - `improvement.csv`: Avg.Improved and A.I.R. of each loss against MSE,
///   computed from the median columns of `comparison.csv`
///
/// each with a `.txt` rendering.
pub fn compare(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<PathBuf>> {
    let losses = &cfg.compare.losses;
    if losses.len() < 2 {
        return Err(CliError::Usage("compare needs at least two losses".into()));
    }
    let Some(base) = losses.iter().position(|&l| l == LossKind::Mse) else {
        return Err(CliError::Usage(
            "compare needs `mse` among compare.losses".into(),
        ));
    };
    let data = prepare_all(cfg)?;
    let seeds = cfg.compare_seeds();
    if seeds.is_empty() {
        return Err(CliError::Usage("compare.seeds is empty".into()));
    }

    // Repeated loss entries share their runs.
    let mut kinds: Vec<LossKind> = Vec::new();
    for &l in losses {
        if !kinds.contains(&l) {
            kinds.push(l);
        }
    }
    let mut jobs = Vec::new();
    for (k, _) in kinds.iter().enumerate() {
        for (di, _) in data.iter().enumerate() {
            for &seed in &seeds {
                jobs.push((k, di, seed));
            }
        }
    }
    let results = pipeline::parallel_map(&jobs, cfg.compare.jobs, |&(k, di, seed)| {
        log::info!(
            "compare: {} on {} seed {seed}",
            kinds[k].name(),
            data[di].name
        );
        pipeline::run_job(cfg, &data[di], kinds[k], seed)
    })?;
    let run = |loss: LossKind, di: usize, si: usize| -> &RunResult {
        let k = kinds.iter().position(|&x| x == loss).expect("known loss");
        &results[(k * data.len() + di) * seeds.len() + si]
    };
    let metric_list = &cfg.eval.metrics;
    let prov = provenance(cfg);
    let mut written = Vec::new();

    let mut runs = Table::new(["loss", "dataset", "seed", "metric", "threshold", "f1"]);
    for &loss in &kinds {
        for (di, d) in data.iter().enumerate() {
            for (si, seed) in seeds.iter().enumerate() {
                for r in &run(loss, di, si).results {
                    runs.push(vec![
                        loss.name().into(),
                        d.name.clone(),
                        seed.to_string(),
                        r.metric.name().into(),
                        f(r.threshold),
                        f(r.f1),
                    ]);
                }
            }
        }
    }
    report::write_table(out, "comparison_runs", &runs, &prov)?;

    // median[loss index][dataset][metric]
    let medians: Vec<Vec<Vec<f64>>> = losses
        .iter()
        .map(|&loss| {
            (0..data.len())
                .map(|di| {
                    metric_list
                        .iter()
                        .map(|&m| {
                            let v: Vec<f64> =
                                (0..seeds.len()).map(|si| run(loss, di, si).f1(m)).collect();
                            median(&v)
                        })
                        .collect()
                })
                .collect()
        })
        .collect();

    let mut header = vec!["loss".to_string(), "dataset".into(), "segments".into()];
    header.extend(metric_list.iter().map(|m| format!("{}_f1", m.name())));
    let mut cmp = Table::new(header);
    for (li, &loss) in losses.iter().enumerate() {
        for (di, d) in data.iter().enumerate() {
            let mut row = vec![
                loss.name().into(),
                d.name.clone(),
                run(loss, di, 0).segments.to_string(),
            ];
            row.extend(medians[li][di].iter().map(|&v| f(v)));
            cmp.push(row);
        }
    }
    report::write_table(out, "comparison", &cmp, &prov)?;

    let mut header = vec!["loss".to_string(), "seed".into()];
    header.extend(
        metric_list
            .iter()
            .map(|m| format!("{}_entire_f1", m.name())),
    );
    let mut ent = Table::new(header);
    for &loss in losses {
        let mut per_metric: Vec<Vec<f64>> = vec![Vec::new(); metric_list.len()];
        for (si, seed) in seeds.iter().enumerate() {
            let mut row = vec![loss.name().to_string(), seed.to_string()];
            for (mi, &m) in metric_list.iter().enumerate() {
                let e = entire_f1((0..data.len()).map(|di| run(loss, di, si)), m)?;
                per_metric[mi].push(e);
                row.push(f(e));
            }
            ent.push(row);
        }
        let mut row = vec![loss.name().to_string(), "median".into()];
        row.extend(per_metric.iter().map(|v| f(median(v))));
        ent.push(row);
    }
    report::write_table(out, "comparison_entire", &ent, &prov)?;

    let mut imp = Table::new(["loss", "metric", "avg_improved", "air"]);
    for (li, &loss) in losses.iter().enumerate() {
        for (mi, &m) in metric_list.iter().enumerate() {
            let star: Vec<f64> = (0..data.len()).map(|di| medians[li][di][mi]).collect();
            let mse: Vec<f64> = (0..data.len()).map(|di| medians[base][di][mi]).collect();
            let avg = metrics::avg_improved(&star, &mse)?;
            let air = match metrics::air(&star, &mse) {
                Ok(v) => f(v),
                Err(strad::Error::Empty(msg)) => {
                    log::warn!("A.I.R. undefined for {} / {}: {msg}", loss.name(), m.name());
                    "NA".into()
                }
                Err(e) => return Err(e.into()),
            };
            imp.push(vec![loss.name().into(), m.name().into(), f(avg), air]);
        }
    }
    report::write_table(out, "improvement", &imp, &prov)?;

    for stem in [
        "comparison_runs",
        "comparison",
        "comparison_entire",
        "improvement",
    ] {
        written.push(out.join(format!("{stem}.csv")));
        written.push(out.join(format!("{stem}.txt")));
    }
    Ok(written)
}

/// Component subsets in table order: (name, trend, seasonality, shape).
pub const ABLATION_SUBSETS: [(&str, bool, bool, bool); 7] = [
    ("trend", true, false, false),
    ("seasonality", false, true, false),
    ("shape", false, false, true),
    ("trend+seasonality", true, true, false),
    ("trend+shape", true, false, true),
    ("seasonality+shape", false, true, true),
    ("trend+seasonality+shape", true, true, true),
];

/// The config an ablation row runs: StrAD training with the excluded lambdas
/// zeroed in `[loss]`. Everything else, including scoring, is derived as in
/// a plain `train` + `detect` run of that config.
pub fn ablation_config(
    cfg: &ExperimentConfig,
    trend: bool,
    seasonality: bool,
    shape: bool,
) -> ExperimentConfig {
    let mut c = cfg.clone();
    c.train.loss = LossKind::Strad;
    c.loss = LossWeights {
        lambda1: if trend { cfg.loss.lambda1 } else { 0.0 },
        lambda2: if seasonality { cfg.loss.lambda2 } else { 0.0 },
        lambda3: if shape { cfg.loss.lambda3 } else { 0.0 },
        ..cfg.loss
    };
    c
}

/// Runs the seven component subsets and writes `ablation.csv` (entire F1 per
/// metric) and `ablation_runs.csv` (per dataset), with `.txt` renderings.
pub fn ablate(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<PathBuf>> {
    let data = prepare_all(cfg)?;
    let configs: Vec<ExperimentConfig> = ABLATION_SUBSETS
        .iter()
        .map(|&(_, t, s, h)| ablation_config(cfg, t, s, h))
        .collect();
    let jobs: Vec<(usize, usize)> = (0..configs.len())
        .flat_map(|ci| (0..data.len()).map(move |di| (ci, di)))
        .collect();
    let results = pipeline::parallel_map(&jobs, cfg.compare.jobs, |&(ci, di)| {
        log::info!("ablate: {} on {}", ABLATION_SUBSETS[ci].0, data[di].name);
        pipeline::run_job(&configs[ci], &data[di], LossKind::Strad, cfg.seed)
    })?;
    let metric_list = &cfg.eval.metrics;
    let prov = provenance(cfg);

    let mut header: Vec<String> = ["subset", "lambda1", "lambda2", "lambda3"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend(
        metric_list
            .iter()
            .map(|m| format!("{}_entire_f1", m.name())),
    );
    let mut table = Table::new(header);
    let mut runs = Table::new(["subset", "dataset", "metric", "threshold", "f1"]);
    for (ci, c) in configs.iter().enumerate() {
        let rows = &results[ci * data.len()..(ci + 1) * data.len()];
        let mut row = vec![
            ABLATION_SUBSETS[ci].0.to_string(),
            f(c.loss.lambda1),
            f(c.loss.lambda2),
            f(c.loss.lambda3),
        ];
        for &m in metric_list {
            row.push(f(entire_f1(rows.iter(), m)?));
        }
        table.push(row);
        for (d, r) in data.iter().zip(rows) {
            for mr in &r.results {
                runs.push(vec![
                    ABLATION_SUBSETS[ci].0.to_string(),
                    d.name.clone(),
                    mr.metric.name().into(),
                    f(mr.threshold),
                    f(mr.f1),
                ]);
            }
        }
    }
    report::write_table(out, "ablation", &table, &prov)?;
    report::write_table(out, "ablation_runs", &runs, &prov)?;
    Ok([
        "ablation.csv",
        "ablation.txt",
        "ablation_runs.csv",
        "ablation_runs.txt",
    ]
    .iter()
    .map(|n| out.join(n))
    .collect())
}

/// Runs every finite-difference suite and renders the report. Fails with
/// exit code 3 naming the failing suites.
pub fn gradcheck(opts: &GradcheckOptions) -> Result<(String, Vec<SuiteResult>)> {
    let results = gradcheck::run(opts)?;
    let mut t = Table::new([
        "suite",
        "max_rel_error",
        "tolerance",
        "checked",
        "skipped",
        "status",
    ]);
    for r in &results {
        t.push(vec![
            r.name.clone(),
            format!("{:.3e}", r.max_rel_error),
            format!("{:.0e}", r.tolerance),
            r.checked.to_string(),
            r.skipped.to_string(),
            if r.passed() { "pass" } else { "FAIL" }.into(),
        ]);
    }
    let text = t.render();
    let failed: Vec<&str> = results
        .iter()
        .filter(|r| !r.passed())
        .map(|r| r.name.as_str())
        .collect();
    if !failed.is_empty() {
        return Err(CliError::Gradcheck(format!(
            "{}\n{text}",
            failed.join(", ")
        )));
    }
    Ok((text, results))
}
