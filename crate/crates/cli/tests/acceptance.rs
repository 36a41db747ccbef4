//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Tolerances are pinned below rather than read from the library.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode, Output};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use strad::loss::{self, TrendVariant};
use strad::metrics::{self, ConfusionCounts, Metric};
use strad::spectral::{dft_naive, fft_forward, fft_inverse};
use strad::timeseries::segments_from_labels;
use strad::Window;
use tempfile::TempDir;

const GRAD_LOSS_TOL: f64 = 1e-4;
const GRAD_MODEL_TOL: f64 = 1e-3;
const GRAD_BUDGET: Duration = Duration::from_secs(60);
const FFT_BIN_TOL: f64 = 1e-8;
const ROUND_TRIP_TOL: f64 = 1e-9;
const PARSEVAL_TOL: f64 = 1e-8;
const NEG_LOG_EPS: f64 = 16.1181;
const NEG_LOG_EPS_TOL: f64 = 1e-3;
const DESK_BUDGET: Duration = Duration::from_secs(600);

/// Two small sub-datasets so the entire-dataset weighting is exercised.
const SMALL: &str = r#"
seed = 5

[window]
length = 16
train_stride = 8

[model]
hidden = [16, 4, 16]

[train]
epochs = 4
batch_size = 8

[compare]
seeds = [0, 1, 2]

[[dataset]]
name = "a"
[dataset.synth]
length = 480
noise_sigma = 0.05
[[dataset.synth.channel]]
frequency = 0.0625
[[dataset.synth.anomaly]]
kind = "seasonal_pattern"
start = 300
length = 30
magnitude = 2.0
[[dataset.synth.anomaly]]
kind = "global_point"
start = 400
magnitude = 5.0

[[dataset]]
name = "b"
[dataset.synth]
length = 480
noise_sigma = 0.1
[[dataset.synth.channel]]
frequency = 0.03125
[[dataset.synth.channel]]
frequency = 0.0625
amplitude = 0.5
[[dataset.synth.anomaly]]
kind = "trend_pattern"
start = 280
length = 40
magnitude = 0.05
[[dataset.synth.anomaly]]
kind = "shapelet_pattern"
start = 380
length = 30
magnitude = 1.5
"#;

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        ("gradient soundness", gradient_soundness),
        ("spectral oracle", spectral_oracle),
        ("loss identities", loss_identities),
        ("metric oracle", metric_oracle),
        ("improvement statistics", improvement_statistics),
        ("directional desk experiment", desk_experiment),
        ("ablation fidelity", ablation_fidelity),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {}: PASS {name} ({secs:.1}s) {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {}: FAIL {name} ({secs:.1}s) {detail}", i + 1);
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criterion(s) failed");
        ExitCode::FAILURE
    }
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn strad(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_strad"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Result<String, String> {
    let out = strad(args);
    if !out.status.success() {
        return Err(format!(
            "strad {} exited {:?}: {}",
            args.first().unwrap_or(&""),
            out.status.code(),
            String::from_utf8_lossy(&out.stderr).trim()
        ));
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

/// Header and data rows of a CSV written by the tool.
fn table(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>), String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    let split = |l: &str| l.split(',').map(str::to_string).collect::<Vec<_>>();
    let header = split(lines.next().ok_or("empty csv")?);
    Ok((header, lines.map(split).collect()))
}

fn column(header: &[String], name: &str) -> Result<usize, String> {
    header
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| format!("missing column {name}"))
}

fn num(cell: &str) -> Result<f64, String> {
    cell.parse().map_err(|_| format!("not a number: {cell}"))
}

fn gradient_soundness() -> Check {
    let start = Instant::now();
    let stdout = ok(&["gradcheck", "--samples", "100"])?;
    let took = start.elapsed();
    ensure(took < GRAD_BUDGET, || format!("took {took:?}"))?;
    let mut worst_loss = 0.0f64;
    let mut worst_model = 0.0f64;
    let mut suites = 0;
    for line in stdout
        .lines()
        .skip_while(|l| !l.starts_with("suite"))
        .skip(1)
    {
        let cells: Vec<&str> = line.split_whitespace().collect();
        if cells.len() < 2 {
            continue;
        }
        let err = num(cells[1])?;
        let (worst, tol) = if cells[0].starts_with("model_") {
            (&mut worst_model, GRAD_MODEL_TOL)
        } else {
            (&mut worst_loss, GRAD_LOSS_TOL)
        };
        ensure(err < tol, || {
            format!("{} max rel error {err:e} >= {tol:e}", cells[0])
        })?;
        *worst = worst.max(err);
        suites += 1;
    }
    ensure(suites == strad::gradcheck::SUITES.len(), || {
        format!("report lists {suites} suites")
    })?;
    Ok(format!(
        "{suites} suites, worst loss {worst_loss:.1e} < {GRAD_LOSS_TOL:e}, worst model {worst_model:.1e} < {GRAD_MODEL_TOL:e}, {:.2}s < 60s",
        took.as_secs_f64()
    ))
}

fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn spectral_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut bin = 0.0f64;
    for n in 1..=64 {
        for _ in 0..200 {
            let x = random_vec(&mut rng, n);
            let (fast, slow) = (fft_forward(&x), dft_naive(&x));
            for k in 0..n {
                bin = bin
                    .max((fast.re[k] - slow.re[k]).abs())
                    .max((fast.im[k] - slow.im[k]).abs());
            }
        }
    }
    ensure(bin < FFT_BIN_TOL, || {
        format!("fft vs dft bin error {bin:e}")
    })?;
    let (mut trip, mut parseval) = (0.0f64, 0.0f64);
    for n in 1..=256 {
        for _ in 0..5 {
            let x = random_vec(&mut rng, n);
            let spec = fft_forward(&x);
            for (a, b) in x.iter().zip(fft_inverse(&spec)) {
                trip = trip.max((a - b).abs());
            }
            let time: f64 = x.iter().map(|v| v * v).sum();
            let freq = (0..n)
                .map(|k| spec.re[k].powi(2) + spec.im[k].powi(2))
                .sum::<f64>()
                / n as f64;
            parseval = parseval.max((time - freq).abs());
        }
    }
    ensure(trip < ROUND_TRIP_TOL, || {
        format!("round trip error {trip:e}")
    })?;
    ensure(parseval < PARSEVAL_TOL, || {
        format!("parseval gap {parseval:e}")
    })?;
    Ok(format!(
        "bin {bin:.1e} < {FFT_BIN_TOL:e} (n<=64), round trip {trip:.1e} < {ROUND_TRIP_TOL:e}, parseval {parseval:.1e} < {PARSEVAL_TOL:e} (n<=256)"
    ))
}

fn loss_identities() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    let mut negated = f64::NAN;
    for &(t, d) in &[(8, 1), (16, 3), (32, 2), (64, 1)] {
        let x = Window::new(random_vec(&mut rng, t * d), t, d, 0).map_err(|e| e.to_string())?;
        let sea = loss::seasonality_loss(&x, &x).map_err(|e| e.to_string())?;
        let shap = loss::shape_loss(&x, &x).map_err(|e| e.to_string())?;
        let mono =
            loss::trend_loss(&x, &x, 1e-7, TrendVariant::Monotone).map_err(|e| e.to_string())?;
        negated = loss::trend_loss(&x, &x, 1e-7, TrendVariant::Paper).map_err(|e| e.to_string())?;
        ensure(sea == 0.0 && shap == 0.0 && mono == 0.0, || {
            format!("t={t} d={d}: seasonality {sea}, shape {shap}, monotone trend {mono}")
        })?;
        ensure((negated - NEG_LOG_EPS).abs() < NEG_LOG_EPS_TOL, || {
            format!("negated trend {negated}")
        })?;
        ensure(negated == -(1e-7f64).ln(), || {
            format!("negated trend {negated} != -ln(1e-7)")
        })?;
    }
    Ok(format!(
        "seasonality = shape = monotone trend = 0, negated trend = {negated:.6} (|. - {NEG_LOG_EPS}| < {NEG_LOG_EPS_TOL:e})"
    ))
}

/// Index-by-index recount of point adjustment.
fn reference_pa(preds: &[u8], labels: &[u8]) -> ConfusionCounts {
    let n = labels.len();
    let mut c = ConfusionCounts::default();
    for i in 0..n {
        let hit = labels[i] == 1 && {
            let mut a = i;
            while a > 0 && labels[a - 1] == 1 {
                a -= 1;
            }
            let mut b = i;
            while b + 1 < n && labels[b + 1] == 1 {
                b += 1;
            }
            (a..=b).any(|j| preds[j] == 1)
        };
        match (preds[i] == 1 || hit, labels[i] == 1) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            _ => {}
        }
    }
    c
}

/// Runs of each mask compared as index sets.
fn reference_rpa(preds: &[u8], labels: &[u8]) -> ConfusionCounts {
    fn runs(mask: &[u8]) -> Vec<Vec<usize>> {
        let mut out: Vec<Vec<usize>> = Vec::new();
        for (i, &m) in mask.iter().enumerate() {
            if m == 1 {
                match out.last_mut() {
                    Some(r) if i > 0 && mask[i - 1] == 1 => r.push(i),
                    _ => out.push(vec![i]),
                }
            }
        }
        out
    }
    let truth = runs(labels);
    let tp = truth
        .iter()
        .filter(|s| s.iter().any(|&i| preds[i] == 1))
        .count();
    let fp = runs(preds)
        .iter()
        .filter(|r| r.iter().all(|&i| labels[i] == 0))
        .count();
    ConfusionCounts::new(tp, fp, truth.len() - tp)
}

fn metric_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(103);
    for case in 0..1000 {
        let n = rng.random_range(1..=40);
        let (pl, pp) = (rng.random_range(0.0..0.6), rng.random_range(0.0..0.6));
        let labels: Vec<u8> = (0..n).map(|_| u8::from(rng.random_bool(pl))).collect();
        let preds: Vec<u8> = (0..n).map(|_| u8::from(rng.random_bool(pp))).collect();
        let pa = metrics::pa_counts(&preds, &labels).map_err(|e| e.to_string())?;
        let rpa = metrics::rpa_counts(&preds, &segments_from_labels(&labels))
            .map_err(|e| e.to_string())?;
        ensure(pa == reference_pa(&preds, &labels), || {
            format!("pa differs on case {case}")
        })?;
        ensure(rpa == reference_rpa(&preds, &labels), || {
            format!("rpa differs on case {case}")
        })?;
    }
    let c = metrics::counts(&[0, 1, 0, 0, 1, 1, 0], &[0, 1, 1, 0, 0, 0, 0], Metric::Rpa)
        .map_err(|e| e.to_string())?;
    ensure(
        (c.tp, c.fp, c.fn_) == (1, 1, 0) && c.f1() == 2.0 / 3.0,
        || format!("worked rpa example gave {c:?}"),
    )?;
    let entire = metrics::entire_f1(&[(2, 0.5), (3, 1.0)]).map_err(|e| e.to_string())?;
    ensure(entire == 0.8, || format!("entire f1 example gave {entire}"))?;
    Ok("1000 random instances agree exactly, rpa example f1 = 2/3, entire example = 0.8".into())
}

/// Recomputes Avg.Improved and A.I.R. from `comparison.csv` and checks them
/// against `improvement.csv` for exact equality.
fn recheck_improvement(out: &Path) -> Result<usize, String> {
    let (ch, crows) = table(&out.join("comparison.csv"))?;
    let (ih, irows) = table(&out.join("improvement.csv"))?;
    let (loss_c, ds_c) = (column(&ch, "loss")?, column(&ch, "dataset")?);
    let (il, im, ia, ir) = (
        column(&ih, "loss")?,
        column(&ih, "metric")?,
        column(&ih, "avg_improved")?,
        column(&ih, "air")?,
    );
    let mut checked = 0;
    for row in &irows {
        let f1_col = column(&ch, &format!("{}_f1", row[im]))?;
        let mut per_dataset: BTreeMap<&str, (Option<f64>, Option<f64>)> = BTreeMap::new();
        for c in &crows {
            let v = num(&c[f1_col])?;
            let e = per_dataset.entry(c[ds_c].as_str()).or_default();
            if c[loss_c] == "mse" {
                e.1.get_or_insert(v);
            }
            if c[loss_c] == row[il] {
                e.0.get_or_insert(v);
            }
        }
        let pairs: Vec<(f64, f64)> = per_dataset
            .values()
            .map(|&(a, b)| a.zip(b).ok_or("dataset missing a loss row".to_string()))
            .collect::<Result<_, _>>()?;
        let q = pairs.len() as f64;
        let avg = pairs.iter().map(|(s, m)| s - m).sum::<f64>() / q;
        let kept: Vec<_> = pairs.iter().filter(|(_, m)| *m > 0.0).collect();
        let air = if kept.is_empty() {
            "NA".to_string()
        } else {
            (kept.iter().map(|(s, m)| (s - m) / m).sum::<f64>() / kept.len() as f64).to_string()
        };
        ensure(num(&row[ia])? == avg, || {
            format!("{} avg_improved {} != {avg}", row[il], row[ia])
        })?;
        ensure(row[ir] == air, || {
            format!("{} {} air {} != {air}", row[il], row[im], row[ir])
        })?;
        checked += 1;
    }
    Ok(checked)
}

fn improvement_statistics() -> Check {
    let tmp = TempDir::new().unwrap();
    let same = SMALL.replace(
        "seeds = [0, 1, 2]",
        "losses = [\"mse\", \"mse\"]\nseeds = [0, 1, 2]",
    );
    let cfg = write_config(tmp.path(), "same.toml", &same);
    let out = tmp.path().join("same");
    ok(&["compare", "--config", s(&cfg), "--out", s(&out)])?;
    let (ih, irows) = table(&out.join("improvement.csv"))?;
    let (ia, ir) = (column(&ih, "avg_improved")?, column(&ih, "air")?);
    ensure(!irows.is_empty(), || "no improvement rows".into())?;
    for row in &irows {
        ensure(num(&row[ia])? == 0.0 && num(&row[ir])? == 0.0, || {
            format!("mse vs mse gave avg_improved {} air {}", row[ia], row[ir])
        })?;
    }
    let zero_rows = irows.len();
    let checked = recheck_improvement(&out)?;

    let cfg = write_config(tmp.path(), "pair.toml", SMALL);
    let out = tmp.path().join("pair");
    ok(&["compare", "--config", s(&cfg), "--out", s(&out)])?;
    let rechecked = recheck_improvement(&out)?;
    Ok(format!(
        "mse vs mse: {zero_rows} rows with avg_improved = air = 0; {} emitted rows equal the recomputation exactly",
        checked + rechecked
    ))
}

fn desk_experiment() -> Check {
    let cfg = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/desk_benchmark.toml");
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("desk");
    let start = Instant::now();
    ok(&[
        "compare",
        "--config",
        s(&cfg),
        "--out",
        s(&out),
        "--jobs",
        "1",
    ])?;
    let took = start.elapsed();
    ensure(took < DESK_BUDGET, || format!("took {took:?}"))?;

    let (eh, erows) = table(&out.join("comparison_entire.csv"))?;
    let (el, es, ef) = (
        column(&eh, "loss")?,
        column(&eh, "seed")?,
        column(&eh, "rpa_entire_f1")?,
    );
    let entire = |loss: &str| -> Result<f64, String> {
        let row = erows
            .iter()
            .find(|r| r[el] == loss && r[es] == "median")
            .ok_or(format!("no median row for {loss}"))?;
        num(&row[ef])
    };
    let (e_mse, e_strad) = (entire("mse")?, entire("strad")?);

    let (ch, crows) = table(&out.join("comparison.csv"))?;
    let (cl, cd, cf) = (
        column(&ch, "loss")?,
        column(&ch, "dataset")?,
        column(&ch, "rpa_f1")?,
    );
    let per = |loss: &str, ds: &str| -> Result<f64, String> {
        let row = crows
            .iter()
            .find(|r| r[cl] == loss && r[cd] == ds)
            .ok_or(format!("no row for {loss}/{ds}"))?;
        num(&row[cf])
    };
    let mut detail = format!("entire rpa median mse {e_mse:.4} strad {e_strad:.4}");
    for ds in ["shapelet", "seasonal", "trend", "mixed"] {
        detail += &format!("; {ds} {:.4} vs {:.4}", per("mse", ds)?, per("strad", ds)?);
    }
    detail += &format!("; {:.0}s < 600s", took.as_secs_f64());
    ensure(e_strad >= e_mse, || format!("strad below mse: {detail}"))?;
    for ds in ["seasonal", "trend"] {
        ensure(per("strad", ds)? > per("mse", ds)?, || {
            format!("strad not strictly ahead on {ds}: {detail}")
        })?;
    }
    Ok(detail)
}

fn ablation_fidelity() -> Check {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", SMALL);
    let out = tmp.path().join("abl");
    ok(&[
        "ablate",
        "--config",
        s(&cfg),
        "--out",
        s(&out),
        "--jobs",
        "1",
    ])?;
    let (ah, arows) = table(&out.join("ablation.csv"))?;
    ensure(arows.len() == 7, || format!("{} subset rows", arows.len()))?;
    let full = arows
        .iter()
        .find(|r| r[0] == "trend+seasonality+shape")
        .ok_or("no full-subset row")?;

    let solo = tmp.path().join("solo");
    ok(&["synth", "--config", s(&cfg), "--out", s(&solo)])?;
    ok(&["train", "--config", s(&cfg), "--out", s(&solo)])?;
    ok(&["detect", "--config", s(&cfg), "--out", s(&solo)])?;
    let mut args = vec!["eval".to_string(), "--metric".into(), "both".into()];
    for ds in ["a", "b"] {
        args.extend([
            "--scores".into(),
            s(&solo.join(ds).join("scores.csv")).into(),
        ]);
        args.extend(["--labels".into(), s(&solo.join(ds).join("test.csv")).into()]);
    }
    args.extend(["--out".into(), s(&solo.join("eval")).into()]);
    ok(&args.iter().map(String::as_str).collect::<Vec<_>>())?;
    let (rh, rrows) = table(&solo.join("eval/report.csv"))?;
    let (rd, rm, rf) = (
        column(&rh, "dataset")?,
        column(&rh, "metric")?,
        column(&rh, "f1")?,
    );

    let mut detail = Vec::new();
    for m in ["rpa", "pa"] {
        let abl = &full[column(&ah, &format!("{m}_entire_f1"))?];
        let ind = &rrows
            .iter()
            .find(|r| r[rd] == "entire" && r[rm] == m)
            .ok_or(format!("no entire {m} row"))?[rf];
        ensure(abl == ind, || {
            format!("{m}: ablation {abl} vs independent {ind}")
        })?;
        detail.push(format!("{m} {abl}"));
    }
    Ok(format!(
        "7 rows; full subset equals independent run bit-for-bit ({})",
        detail.join(", ")
    ))
}

/// Every file under `dir`, keyed by relative path.
fn snapshot(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut files = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                files.insert(
                    p.strip_prefix(dir).unwrap().to_path_buf(),
                    fs::read(&p).unwrap(),
                );
            }
        }
    }
    files
}

fn determinism() -> Check {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", SMALL);
    let c = s(&cfg).to_string();
    let out = tmp.path().join("out");
    let o = s(&out).to_string();
    let scores = format!("{o}/a/scores.csv");
    let labels = format!("{o}/a/test.csv");
    let eval_out = format!("{o}/eval");
    let commands: Vec<Vec<&str>> = vec![
        vec!["synth", "--config", &c, "--out", &o],
        vec!["train", "--config", &c, "--out", &o],
        vec!["detect", "--config", &c, "--out", &o],
        vec![
            "eval", "--scores", &scores, "--labels", &labels, "--out", &eval_out,
        ],
        vec!["compare", "--config", &c, "--out", &o, "--jobs", "1"],
        vec!["ablate", "--config", &c, "--out", &o, "--jobs", "1"],
        vec!["gradcheck", "--samples", "10", "--model-samples", "3"],
    ];
    let mut files = 0;
    for cmd in &commands {
        let first_out = ok(cmd)?;
        let first = snapshot(&out);
        let second_out = ok(cmd)?;
        let second = snapshot(&out);
        ensure(first_out == second_out, || {
            format!("{} stdout differs", cmd[0])
        })?;
        ensure(first.keys().eq(second.keys()), || {
            format!("{} file set differs", cmd[0])
        })?;
        for (path, bytes) in &first {
            ensure(&second[path] == bytes, || {
                format!("{}: {} differs", cmd[0], path.display())
            })?;
        }
        files = first.len();
    }
    Ok(format!(
        "{} commands run twice into the same directory, {files} files and stdout byte-identical",
        commands.len()
    ))
}
