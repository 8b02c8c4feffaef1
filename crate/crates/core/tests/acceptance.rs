//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.
//!
//! Criterion 11 runs against real data only when `SCINT_BALANCED_DATASET`
//! and `SCINT_IMBALANCED_DATASET` point at dataset CSVs produced by
//! `scint preprocess`; otherwise it checks that the recipe is documented.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use common::*;
use scint_core::eval::cross_validate;
use scint_core::ingest::{self, ColumnMap};
use scint_core::learners::bagged::train_bagged;
use scint_core::learners::knn::train_knn;
use scint_core::learners::svm::{solve_dual, train_svm};
use scint_core::learners::tree::{train_tree, SplitCriterion};
use scint_core::learners::{BaggedParams, KnnParams, ModelParams, Samples, SvmParams};
use scint_core::metrics::ConfusionMatrix;
use scint_core::pipeline::{classify_s4, preprocess, PipelineConfig, SplitPlan};
use scint_core::synth::{self, SynthSpec};
use scint_core::tuner::{tune, Dimension, SearchSpace, TuneConfig};
use scint_core::Dataset;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

const TABLE3: [[u64; 3]; 3] = [[19225, 2076, 276], [3336, 17063, 2780], [398, 3820, 19903]];
const TABLE4: [[u64; 3]; 3] = [[377197, 7969, 400], [1627, 7460, 715], [64, 288, 1180]];

struct Printed {
    accuracy: f64,
    recall: [f64; 3],
    precision: [f64; 3],
}

const TABLE3_PRINTED: Printed = Printed {
    accuracy: 81.58,
    recall: [83.74, 74.32, 86.69],
    precision: [89.11, 73.61, 82.51],
};
const TABLE4_PRINTED: Printed = Printed {
    accuracy: 97.21,
    recall: [99.56, 47.47, 51.42],
    precision: [97.83, 76.11, 77.02],
};

fn within(limit: Duration, start: Instant) -> Result<(), String> {
    let t = start.elapsed();
    if t > limit {
        Err(format!(
            "took {:.1} s, limit {:.0} s",
            t.as_secs_f64(),
            limit.as_secs_f64()
        ))
    } else {
        Ok(())
    }
}

fn check_table(name: &str, counts: [[u64; 3]; 3], printed: &Printed) -> Result<f64, String> {
    let cm = ConfusionMatrix::from_counts(counts);
    let oracle = pair_rates(expand(counts));
    let acc = 100.0 * cm.accuracy().map_err(|e| e.to_string())?;
    let mut worst: f64 = (acc - printed.accuracy).abs();
    ensure!(
        (acc - oracle.accuracy).abs() < 1e-9,
        "{name}: accuracy {acc} vs pair count {}",
        oracle.accuracy
    );
    for c in 0..3 {
        let (p, r) = cm.precision_recall(class(c as u8 + 1));
        let (p, r) = (
            100.0 * p.ok_or("precision undefined")?,
            100.0 * r.ok_or("recall undefined")?,
        );
        ensure!(
            (p - oracle.precision[c]).abs() < 1e-9,
            "{name}: precision {} disagrees with pair count",
            c + 1
        );
        ensure!(
            (r - oracle.recall[c]).abs() < 1e-9,
            "{name}: recall {} disagrees with pair count",
            c + 1
        );
        worst = worst
            .max((p - printed.precision[c]).abs())
            .max((r - printed.recall[c]).abs());
    }
    ensure!(
        worst <= 0.02,
        "{name}: largest deviation from printed rates {worst:.4} points"
    );
    Ok(worst)
}

fn c1_metrics() -> Outcome {
    let start = Instant::now();
    let w3 = check_table("table 3", TABLE3, &TABLE3_PRINTED)?;
    let w4 = check_table("table 4", TABLE4, &TABLE4_PRINTED)?;
    within(Duration::from_secs(1), start)?;
    Ok(format!("max deviation {w3:.4} / {w4:.4} points"))
}

fn c2_class_bins() -> Outcome {
    let inputs = [0.05, 0.19, 0.20, 0.29, 0.30, 1.0];
    let got: Vec<u8> = inputs.iter().map(|&s| classify_s4(s).label()).collect();
    ensure!(got == [1, 1, 2, 2, 3, 3], "got {got:?}");
    Ok(format!("{inputs:?} -> {got:?}"))
}

fn scint() -> Command {
    Command::new(env!("CARGO_BIN_EXE_scint"))
}

fn run_ok(cmd: &mut Command) -> Result<(), String> {
    let out = cmd.output().map_err(|e| e.to_string())?;
    ensure!(
        out.status.success(),
        "{:?} failed: {}",
        cmd,
        String::from_utf8_lossy(&out.stderr)
    );
    Ok(())
}

fn c3_pipeline_counts() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let rows = 900usize;
    let (low, neg, floor, no_day, no_f107) = (13usize, 8usize, 21usize, 6usize, 9usize);
    let cfg = dir.path().join("run.toml");
    std::fs::write(
        &cfg,
        format!(
            "seed = 11\n[synth]\nrows = {rows}\nproportions = [0.5, 0.3, 0.2]\n\
             [synth.contamination]\nlow_elevation = {low}\nnegative_s4 = {neg}\nbelow_floor = {floor}\n\
             no_solar_day = {no_day}\nmissing_f107 = {no_f107}\n"
        ),
    )
    .map_err(|e| e.to_string())?;
    let (s_dir, p_dir) = (dir.path().join("synth"), dir.path().join("pre"));
    run_ok(scint().arg("--config").arg(&cfg).arg("synth").arg("-o").arg(&s_dir))?;
    run_ok(
        scint()
            .arg("--config")
            .arg(&cfg)
            .arg("preprocess")
            .arg("--records")
            .arg(s_dir.join("records.csv"))
            .arg("--solar")
            .arg(s_dir.join("solar.csv"))
            .arg("-o")
            .arg(&p_dir),
    )?;
    let text = std::fs::read_to_string(p_dir.join("provenance.json")).map_err(|e| e.to_string())?;
    let p: serde_json::Value = serde_json::from_str(&text).map_err(|e| e.to_string())?;
    let get = |k: &str| {
        p[k].as_u64()
            .map(|v| v as usize)
            .ok_or(format!("provenance.{k} missing"))
    };

    // analytic expectations
    let input = rows + low + neg + floor + no_day + no_f107;
    let per_class = [rows / 2, rows * 3 / 10, rows / 5];
    let expected = [
        ("input_records", input),
        ("dropped_low_elevation", low),
        ("dropped_negative_s4", neg),
        ("after_elevation_cutoff", input - low - neg),
        ("dropped_below_floor", floor),
        ("after_s4_floor", input - low - neg - floor),
        ("excluded_no_solar_day", no_day),
        ("excluded_missing_index", no_f107),
        ("after_index_join", rows),
        ("imbalanced_total", rows),
    ];
    for (k, want) in expected {
        ensure!(get(k)? == want, "{k} = {} expected {want}", get(k)?);
    }
    let classes: Vec<usize> = p["class_counts"]
        .as_array()
        .ok_or("class_counts missing")?
        .iter()
        .map(|v| v.as_u64().unwrap_or(0) as usize)
        .collect();
    ensure!(classes == per_class, "class counts {classes:?} expected {per_class:?}");
    let min = *per_class.iter().min().unwrap();
    let balanced = p["balanced"]["total"].as_u64().ok_or("balanced.total missing")? as usize;
    ensure!(balanced == 3 * min, "balanced total {balanced} expected {}", 3 * min);
    let b = Dataset::read_csv(std::io::BufReader::new(
        std::fs::File::open(p_dir.join("balanced.csv")).map_err(|e| e.to_string())?,
    ))
    .map_err(|e| e.to_string())?;
    ensure!(
        b.class_counts() == [min; 3],
        "balanced.csv classes {:?}",
        b.class_counts()
    );
    Ok(format!(
        "{input} -> {} -> {} -> {rows}; classes {classes:?}; balanced {balanced}",
        input - low - neg,
        input - low - neg - floor
    ))
}

fn c4_tree_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = SplitMix(0x7EE);
    let mut cases = 0;
    let mut tied = 0;
    for _ in 0..400 {
        let n = 2 + rng.below(7) as usize;
        let d = 1 + rng.below(2) as usize;
        let max_splits = 1 + rng.below(3) as usize;
        let span = 2 + rng.below(4) as i64;
        let x: Vec<Vec<i64>> = (0..n)
            .map(|_| (0..d).map(|_| rng.below(span as u64) as i64).collect())
            .collect();
        let y: Vec<u8> = (0..n).map(|_| 1 + rng.below(3) as u8).collect();

        let samples = Samples::new(
            x.iter().map(|r| r.iter().map(|&v| v as f64).collect()).collect(),
            y.iter().map(|&l| class(l)).collect(),
        )
        .map_err(|e| e.to_string())?;
        let tree = train_tree(&samples, max_splits, SplitCriterion::Gini);
        let keys: Vec<usize> = (0..n).map(|i| tree.leaf(samples.row(i)) as *const _ as usize).collect();
        let got = partition_impurity(&keys, &y);
        let reachable = greedy_impurities(&x, &y, max_splits);
        if reachable.len() > 1 {
            tied += 1;
        }
        ensure!(
            reachable.contains(&(got.num, got.den)),
            "x={x:?} y={y:?} splits={max_splits}: impurity {}/{} not among {reachable:?}",
            got.num,
            got.den
        );
        cases += 1;
    }
    within(Duration::from_secs(30), start)?;
    Ok(format!("{cases} datasets, {tied} with tie-dependent outcomes"))
}

fn c5_knn_oracle() -> Outcome {
    let mut rng = SplitMix(0xC0FFEE);
    let n = 200;
    // coarse grid values force distance ties
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..3).map(|_| rng.below(8) as f64 * 0.5).collect())
        .collect();
    let labels: Vec<u8> = (0..n).map(|_| 1 + rng.below(3) as u8).collect();
    let samples = Samples::new(rows.clone(), labels.iter().map(|&l| class(l)).collect()).map_err(|e| e.to_string())?;
    let mut agree = 0;
    for k in [1, 5, 10] {
        let model = train_knn(
            &samples,
            &KnnParams {
                k,
                standardize: false,
                ..KnnParams::default()
            },
        )
        .map_err(|e| e.to_string())?;
        for q in 0..100 {
            let query: Vec<f64> = if q % 4 == 0 {
                rows[rng.below(n as u64) as usize].clone()
            } else {
                (0..3).map(|_| rng.unit() * 4.0).collect()
            };
            let want = knn_brute(&rows, &labels, &query, k);
            let got = model.predict(&query).label();
            ensure!(got == want, "k={k} query {query:?}: {got} vs brute force {want}");
            agree += 1;
        }
    }
    Ok(format!("{agree} queries over 200 exemplars agree (k = 1, 5, 10)"))
}

fn blob_samples(n: usize, sep: f64, seed: u64) -> Samples {
    let mut rng = SplitMix(seed);
    let mut rows = Vec::new();
    let mut y = Vec::new();
    for i in 0..n {
        let c = (i % 3) as u8;
        let gauss = |rng: &mut SplitMix| {
            let (u, v) = (rng.unit().max(1e-12), rng.unit());
            (-2.0 * u.ln()).sqrt() * (std::f64::consts::TAU * v).cos()
        };
        rows.push(
            (0..4)
                .map(|j| if j == c as usize { sep } else { 0.0 } + gauss(&mut rng))
                .collect(),
        );
        y.push(class(c + 1));
    }
    Samples::new(rows, y).unwrap()
}

fn c6_degenerate_ensemble() -> Outcome {
    let data = blob_samples(1000, 1.0, 6);
    let params = BaggedParams {
        n_learners: 1,
        bootstrap: false,
        ..BaggedParams::default()
    };
    let bag = train_bagged(&data, &params, 99);
    let tree = train_tree(&data, data.len() - 1, SplitCriterion::Gini);
    for i in 0..data.len() {
        let x = data.row(i);
        ensure!(bag.predict(x) == tree.predict(x), "row {i} differs");
        ensure!(
            bag.mean_distribution(x) == tree.predict_distribution(x),
            "row {i} distribution differs"
        );
    }
    Ok(format!("1000 rows identical ({} splits)", tree.n_splits))
}

fn c7_svm_kkt() -> Outcome {
    let params = SvmParams::default();
    let data = blob_samples(150, 1.5, 7);
    let mut machines = 0;
    let mut worst: f64 = 0.0;
    for (a, b) in [(1u8, 2u8), (1, 3), (2, 3)] {
        let idx: Vec<usize> = (0..data.len())
            .filter(|&i| [a, b].contains(&data.label(i).label()))
            .collect();
        let x: Vec<&[f64]> = idx.iter().map(|&i| data.row(i)).collect();
        let y: Vec<f64> = idx
            .iter()
            .map(|&i| if data.label(i).label() == a { 1.0 } else { -1.0 })
            .collect();
        let sol = solve_dual(&x, &y, &params).map_err(|e| e.to_string())?;
        for (i, &al) in sol.alphas.iter().enumerate() {
            ensure!(
                (0.0..=params.box_constraint).contains(&al),
                "pair {a}/{b}: alpha[{i}] = {al}"
            );
        }
        let s: f64 = sol.alphas.iter().zip(&y).map(|(al, yi)| al * yi).sum();
        ensure!(s.abs() <= 1e-8, "pair {a}/{b}: sum alpha*y = {s:e}");
        worst = worst.max(s.abs());
        machines += 1;
    }
    let model = train_svm(&data, &params).map_err(|e| e.to_string())?;
    for m in &model.machines {
        ensure!(
            m.alphas.iter().all(|&al| al > 0.0 && al <= params.box_constraint),
            "stored alphas out of box"
        );
        let s: f64 = m.alphas.iter().zip(&m.labels).map(|(al, yi)| al * yi).sum();
        ensure!(s.abs() <= 1e-8, "stored machine: sum alpha*y = {s:e}");
    }

    let xor = Samples::new(
        vec![vec![0.0, 0.0], vec![1.0, 1.0], vec![0.0, 1.0], vec![1.0, 0.0]],
        vec![class(1), class(1), class(2), class(2)],
    )
    .map_err(|e| e.to_string())?;
    let m = train_svm(&xor, &params).map_err(|e| e.to_string())?;
    let correct = (0..4).filter(|&i| m.predict(xor.row(i)) == xor.label(i)).count();
    ensure!(correct == 4, "XOR training accuracy {correct}/4");
    Ok(format!("{machines} machines, max |sum alpha*y| {worst:.1e}; XOR 4/4"))
}

fn c8_tuner_oracle() -> Outcome {
    let start = Instant::now();
    let peak = |a: i64, b: i64| (-(((a - 14) as f64).powi(2) + ((b - 6) as f64).powi(2)) / 40.0).exp();
    let optimum = grid_max(1, 20, peak);
    let space = SearchSpace::new(vec![
        Dimension::new("a", 1, 20, false),
        Dimension::new("b", 1, 20, false),
    ])
    .map_err(|e| e.to_string())?;
    let cfg = TuneConfig {
        n_iterations: 50,
        seed: 2024,
        ..TuneConfig::default()
    };
    let r = tune(|p| Ok(peak(p[0], p[1])), &space, &cfg).map_err(|e| e.to_string())?;
    let best = r.best.objective;
    ensure!(
        best >= 0.95 * optimum,
        "best {best:.4} at {:?}, optimum {optimum:.4}",
        r.best.params
    );
    within(Duration::from_secs(60), start)?;
    Ok(format!(
        "best {best:.4} at {:?} after {} trials; grid optimum {optimum:.4}",
        r.best.params,
        r.history.len()
    ))
}

/// Synthesizes raw files, reads them back and preprocesses them.
fn desk_fixture(spec: &SynthSpec, balance: bool) -> Result<Dataset, String> {
    let s = synth::generate(spec).map_err(|e| e.to_string())?;
    let mut raw = Vec::new();
    ingest::write_normalized_csv(&s.records, &mut raw).map_err(|e| e.to_string())?;
    let parsed = ingest::parse_ismr(raw.as_slice(), &ColumnMap::default()).map_err(|e| e.to_string())?;
    let mut sol = Vec::new();
    ingest::write_solar_csv(&s.solar, &mut sol).map_err(|e| e.to_string())?;
    let solar = ingest::parse_solar(sol.as_slice()).map_err(|e| e.to_string())?;
    let cfg = PipelineConfig {
        balance,
        ..PipelineConfig::default()
    };
    let out = preprocess(parsed.records, &solar.records, &cfg, 5).map_err(|e| e.to_string())?;
    Ok(if balance {
        out.balanced.ok_or("no balanced set")?
    } else {
        out.imbalanced
    })
}

fn bagged_cv(data: &Dataset, seed: u64) -> Result<ConfusionMatrix, String> {
    let params = ModelParams::BaggedTrees(BaggedParams::default());
    let e = cross_validate(&Samples::from_dataset(data), &params, &SplitPlan::kfold(10, seed), seed)
        .map_err(|e| e.to_string())?;
    Ok(e.report.pooled)
}

fn c9_end_to_end() -> Outcome {
    let start = Instant::now();
    let spec = SynthSpec {
        n_rows: 3000,
        class_proportions: [1.0 / 3.0; 3],
        separation: 6.0,
        seed: 9,
        ..SynthSpec::default()
    };
    let data = desk_fixture(&spec, true)?;
    ensure!(
        data.class_counts() == [1000; 3],
        "balanced classes {:?}",
        data.class_counts()
    );
    let cm = bagged_cv(&data, 9)?;
    let acc = cm.accuracy().map_err(|e| e.to_string())?;
    ensure!(
        acc > 1.0 / 3.0,
        "10-fold accuracy {acc:.4} not above the balanced baseline"
    );
    ensure!(acc >= 0.90, "10-fold accuracy {acc:.4}");
    within(Duration::from_secs(120), start)?;
    Ok(format!(
        "10-fold bagged accuracy {:.2}% on {} rows",
        100.0 * acc,
        data.len()
    ))
}

fn c10_imbalance_bias() -> Outcome {
    let spec = SynthSpec {
        n_rows: 3789 + 157 + 23,
        class_proportions: SynthSpec::proportions_from_counts([3789, 157, 23]),
        separation: 1.5,
        seed: 10,
        ..SynthSpec::default()
    };
    let data = desk_fixture(&spec, false)?;
    ensure!(
        data.class_counts() == [3789, 157, 23],
        "classes {:?}",
        data.class_counts()
    );
    let cm = bagged_cv(&data, 10)?;
    let recall = |c: u8| cm.precision_recall(class(c)).1.unwrap_or(0.0);
    let (r1, r3) = (recall(1), recall(3));
    ensure!(r1 > r3, "majority recall {r1:.4} not above minority recall {r3:.4}");
    Ok(format!(
        "recall weak {:.2}%, moderate {:.2}%, severe {:.2}%",
        100.0 * r1,
        100.0 * recall(2),
        100.0 * r3
    ))
}

fn c11_paper_scale() -> Outcome {
    let balanced = std::env::var_os("SCINT_BALANCED_DATASET").map(PathBuf::from);
    let imbalanced = std::env::var_os("SCINT_IMBALANCED_DATASET").map(PathBuf::from);
    match (balanced, imbalanced) {
        (Some(b), Some(i)) => {
            let mut notes = Vec::new();
            for (path, target) in [(b, 81.58), (i, 97.21)] {
                let data = read(&path)?;
                let acc = 100.0 * bagged_cv(&data, 1)?.accuracy().map_err(|e| e.to_string())?;
                ensure!(
                    (acc - target).abs() <= 3.0,
                    "{}: accuracy {acc:.2}% vs {target}%",
                    path.display()
                );
                notes.push(format!("{acc:.2}% (target {target}%)"));
            }
            Ok(notes.join(", "))
        }
        _ => {
            let readme = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../README.md");
            let text = std::fs::read_to_string(&readme).map_err(|e| format!("{}: {e}", readme.display()))?;
            ensure!(
                text.contains("SCINT_BALANCED_DATASET") && text.contains("SCINT_IMBALANCED_DATASET"),
                "README lacks the full-data recipe"
            );
            Ok("full-data run not configured; recipe documented in README".into())
        }
    }
}

fn read(path: &Path) -> Result<Dataset, String> {
    let f = std::fs::File::open(path).map_err(|e| format!("{}: {e}", path.display()))?;
    Dataset::read_csv(std::io::BufReader::new(f)).map_err(|e| e.to_string())
}

fn main() {
    let criteria: [Criterion; 11] = [
        ("metrics match printed confusion tables", c1_metrics),
        ("S4 class-bin boundaries", c2_class_bins),
        ("provenance counts on a contaminated fixture", c3_pipeline_counts),
        ("tree impurity vs exhaustive greedy oracle", c4_tree_oracle),
        ("knn vs brute-force neighbour scan", c5_knn_oracle),
        (
            "single unbootstrapped bagged member equals a tree",
            c6_degenerate_ensemble,
        ),
        ("svm dual feasibility and XOR", c7_svm_kkt),
        ("tuner vs exhaustive grid search", c8_tuner_oracle),
        ("desk-scale end to end, 10-fold bagged", c9_end_to_end),
        ("imbalanced model favours the majority class", c10_imbalance_bias),
        ("full-data accuracy within 3 points", c11_paper_scale),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into()))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(note) => println!("PASS {:>2} {name}: {note} [{secs:.2} s]", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {why} [{secs:.2} s]", i + 1);
            }
        }
    }
    println!("{} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
