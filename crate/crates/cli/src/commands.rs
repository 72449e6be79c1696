//! Subcommand implementations. Each command reads and validates every
//! input first, computes, and only then writes its outputs (all
//! atomically), so a failing run leaves the filesystem untouched.

use std::fmt::Write as _;

use smartcal_core::metrics::{self, BinRow, MetricReport, ProbSet};
use smartcal_core::rng::Rng;
use smartcal_core::tempnet::{logit_gap, Indicator, DEFAULT_HIDDEN};
use smartcal_core::theory::{check_bounds, synthesize, Distortion, SynthConfig, BOUNDS_CSV_HEADER};
use smartcal_core::{
    apply, load_model, model_to_json, split, train_smart, train_ts, CalibratorKind,
    CalibratorModel, Error, LossKind, Result, SoftBinConfig, SplitSpec, TrainConfig,
};

use crate::output::{
    encode_bin_rows, encode_probs_csv, load, load_probs, save_logits_atomic, sig6, write_atomic,
};
use crate::{
    AblateArgs, ApplyArgs, BoundsArgs, CalibrateArgs, Cli, Command, DistortionFamily, EvaluateArgs,
    Method, SplitArgs, SynthArgs,
};

pub fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Synth(args) => cmd_synth(args),
        Command::Split(args) => cmd_split(args),
        Command::Calibrate(args) => cmd_calibrate(args),
        Command::Apply(args) => cmd_apply(args),
        Command::Evaluate(args) => cmd_evaluate(args),
        Command::Bounds(args) => cmd_bounds(args),
        Command::Ablate(args) => cmd_ablate(args),
    }
}

fn cmd_synth(args: SynthArgs) -> anyhow::Result<()> {
    let distortion = match args.distortion {
        DistortionFamily::Affine => Distortion::Affine {
            offset: args.offset,
            slope: args.slope,
        },
        DistortionFamily::Logistic => Distortion::Logistic {
            lo: args.lo,
            hi: args.hi,
            mid: args.mid,
            steep: args.steep,
        },
    };
    let cfg = SynthConfig {
        n: args.n,
        k: args.k,
        seed: args.seed,
        scale: args.scale,
        distortion,
    };
    let (clean, distorted) = synthesize(&cfg)?;
    save_logits_atomic(&clean, &args.out_clean)?;
    save_logits_atomic(&distorted, &args.out_distorted)?;
    println!(
        "synth: {} rows, {} classes -> {} (clean), {} (distorted)",
        args.n,
        args.k,
        args.out_clean.display(),
        args.out_distorted.display()
    );
    Ok(())
}

fn cmd_split(args: SplitArgs) -> anyhow::Result<()> {
    let set = load(&args.logits)?;
    let spec = SplitSpec {
        val: args.size,
        seed: args.seed,
        stratified: args.stratified,
    };
    let (val, test) = split(&set, &spec)?;
    save_logits_atomic(&val, &args.out_val)?;
    save_logits_atomic(&test, &args.out_test)?;
    println!(
        "split: {} rows -> {} val ({}), {} test ({})",
        set.n(),
        val.n(),
        args.out_val.display(),
        test.n(),
        args.out_test.display()
    );
    Ok(())
}

fn cmd_calibrate(args: CalibrateArgs) -> anyhow::Result<()> {
    if args.method == Method::Ts {
        if args.indicator.is_some() {
            return Err(Error::Config("--indicator only applies to --method smart".into()).into());
        }
        if args.hidden.is_some() {
            return Err(Error::Config("--hidden only applies to --method smart".into()).into());
        }
    }
    let cfg = TrainConfig {
        loss: args.loss,
        epochs: args.epochs,
        learning_rate: args.lr,
        optimizer: args.optimizer,
        seed: args.seed,
        softbin: SoftBinConfig::new(args.bins, args.alpha, args.q)?,
        indicator: args.indicator.unwrap_or(Indicator::Gap),
        hidden: args.hidden.unwrap_or(DEFAULT_HIDDEN),
    };
    let val = load(&args.val)?;
    let (model, log) = match args.method {
        Method::Smart => train_smart(&val, &cfg)?,
        Method::Ts => train_ts(&val, &cfg)?,
    };
    let log_path = args
        .log
        .unwrap_or_else(|| args.out.with_extension("train.csv"));
    write_atomic(&args.out, model_to_json(&model).as_bytes())?;
    write_atomic(&log_path, log.to_csv().as_bytes())?;

    let best = log
        .entries
        .iter()
        .map(|e| e.1)
        .fold(f64::INFINITY, f64::min);
    match &model.kind {
        CalibratorKind::Ts { temperature } => println!(
            "calibrate ts: T = {} ({} {})",
            sig6(*temperature),
            cfg.loss,
            sig6(best)
        ),
        CalibratorKind::Smart { net, .. } => println!(
            "calibrate smart: {} parameters ({} {})",
            net.param_count(),
            cfg.loss,
            sig6(best)
        ),
    }
    println!("model -> {}", args.out.display());
    println!("training log -> {}", log_path.display());
    Ok(())
}

fn cmd_apply(args: ApplyArgs) -> anyhow::Result<()> {
    let model = load_model(&args.model)?;
    let set = load(&args.logits)?;
    let probs = apply(&model, &set);
    write_atomic(&args.out, encode_probs_csv(&probs).as_bytes())?;
    println!("apply: {} rows -> {}", probs.n(), args.out.display());
    Ok(())
}

fn cmd_evaluate(args: EvaluateArgs) -> anyhow::Result<()> {
    match (&args.probs, &args.logits) {
        (Some(_), Some(_)) => {
            return Err(Error::Config("--probs and --logits are mutually exclusive".into()).into())
        }
        (None, None) => {
            return Err(Error::Config("one of --probs or --logits is required".into()).into())
        }
        _ => {}
    }
    if args.model.is_some() && args.logits.is_none() {
        return Err(Error::Config("--model requires --logits".into()).into());
    }
    if let Some(pct) = args.gap_split {
        if args.logits.is_none() {
            return Err(Error::Config("--gap-split requires --logits".into()).into());
        }
        if args.reliability.is_none() {
            return Err(Error::Config(
                "--gap-split requires --reliability to name its outputs".into(),
            )
            .into());
        }
        if !(pct > 0.0 && pct < 100.0) {
            return Err(Error::Config(format!(
                "--gap-split percentile must lie in (0, 100), got {pct}"
            ))
            .into());
        }
    }

    let (probs, gaps) = if let Some(path) = &args.probs {
        (load_probs(path)?, None)
    } else {
        let set = load(args.logits.as_ref().unwrap())?;
        let gaps: Vec<f64> = set.rows().map(|(row, _)| logit_gap(row)).collect();
        let probs = match &args.model {
            Some(m) => apply(&load_model(m)?, &set),
            None => metrics::softmax_rows(&set),
        };
        (probs, Some(gaps))
    };

    let report = metrics::report(&probs, args.bins)?;
    print_report(&report, probs.n(), probs.k());

    if let Some(path) = &args.report {
        let mut json = serde_json::to_string_pretty(&report)
            .map_err(|e| Error::Schema(format!("metric report serialization: {e}")))?;
        json.push('\n');
        write_atomic(path, json.as_bytes())?;
        println!("report -> {}", path.display());
    }
    if let Some(path) = &args.reliability {
        write_atomic(path, encode_bin_rows(&report.bins).as_bytes())?;
        println!("reliability -> {}", path.display());
        if let Some(pct) = args.gap_split {
            let gaps = gaps.expect("gap-split was validated to come with logits");
            let threshold = percentile(&gaps, pct);
            let (low, high): (Vec<usize>, Vec<usize>) =
                (0..probs.n()).partition(|&i| gaps[i] <= threshold);
            for (name, idx) in [("low", low), ("high", high)] {
                let out = path.with_extension(format!("{name}.csv"));
                let rows = subset_bins(&probs, &idx, args.bins)?;
                write_atomic(&out, encode_bin_rows(&rows).as_bytes())?;
                println!(
                    "reliability ({name} gap, {} rows) -> {}",
                    idx.len(),
                    out.display()
                );
            }
        }
    }
    Ok(())
}

fn cmd_bounds(args: BoundsArgs) -> anyhow::Result<()> {
    if args.trials == 0 {
        return Err(Error::Config("--trials must be positive".into()).into());
    }
    if args.k < 2 {
        return Err(Error::Config("--k must be at least 2".into()).into());
    }
    let mut rng = Rng::new(args.seed);
    let mut records = Vec::with_capacity(args.trials);
    for _ in 0..args.trials {
        let row: Vec<f64> = (0..args.k).map(|_| rng.normal() * args.scale).collect();
        records.push(check_bounds(&row, args.p)?);
    }
    let within = records.iter().filter(|r| r.within_bounds).count();

    let mut csv = String::from(BOUNDS_CSV_HEADER);
    csv.push('\n');
    for rec in &records {
        csv.push_str(&rec.to_csv_row());
        csv.push('\n');
    }
    write_atomic(&args.out, csv.as_bytes())?;
    println!(
        "bounds: {within}/{} rows inside the analytic range -> {}",
        args.trials,
        args.out.display()
    );
    Ok(())
}

fn cmd_ablate(args: AblateArgs) -> anyhow::Result<()> {
    let val = load(&args.val)?;
    let test = load(&args.test)?;
    let softbin = SoftBinConfig::new(args.bins, args.alpha, args.q)?;
    let base_cfg = TrainConfig {
        epochs: args.epochs,
        learning_rate: args.lr,
        seed: args.seed,
        softbin,
        ..TrainConfig::default()
    };

    let mut csv = String::from("method,indicator,loss,ece,adaece,cece,nll,brier,accuracy\n");
    let uncalibrated = metrics::report(&metrics::softmax_rows(&test), args.bins)?;
    push_metric_row(&mut csv, "none", "-", "-", &uncalibrated);

    for loss in LossKind::ALL {
        let cfg = TrainConfig {
            loss,
            ..base_cfg.clone()
        };
        let (model, _) = train_ts(&val, &cfg)?;
        let report = score(&model, &test, args.bins)?;
        push_metric_row(&mut csv, "ts", "-", loss.as_str(), &report);
    }
    for indicator in Indicator::ALL {
        for loss in LossKind::ALL {
            let cfg = TrainConfig {
                loss,
                indicator,
                ..base_cfg.clone()
            };
            let (model, _) = train_smart(&val, &cfg)?;
            let report = score(&model, &test, args.bins)?;
            push_metric_row(
                &mut csv,
                "smart",
                indicator.as_str(),
                loss.as_str(),
                &report,
            );
        }
    }
    write_atomic(&args.out, csv.as_bytes())?;
    let runs = 1 + LossKind::ALL.len() * (1 + Indicator::ALL.len());
    println!("ablate: {runs} configurations -> {}", args.out.display());
    Ok(())
}

fn score(
    model: &CalibratorModel,
    test: &smartcal_core::LogitSet,
    bins: usize,
) -> Result<MetricReport> {
    metrics::report(&apply(model, test), bins)
}

fn push_metric_row(csv: &mut String, method: &str, indicator: &str, loss: &str, r: &MetricReport) {
    let _ = writeln!(
        csv,
        "{method},{indicator},{loss},{},{},{},{},{},{}",
        r.ece, r.adaece, r.classwise_ece, r.nll, r.brier, r.accuracy
    );
}

fn print_report(report: &MetricReport, n: usize, k: usize) {
    println!(
        "evaluate: {n} rows, {k} classes, {} bins",
        report.bins.len()
    );
    println!("  accuracy      {}", sig6(report.accuracy));
    println!("  ece           {}", sig6(report.ece));
    println!("  adaece        {}", sig6(report.adaece));
    println!("  classwise-ece {}", sig6(report.classwise_ece));
    println!("  nll           {}", sig6(report.nll));
    println!("  brier         {}", sig6(report.brier));
}

/// Nearest-rank percentile of `values`.
fn percentile(values: &[f64], pct: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let rank = ((pct / 100.0) * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

/// Reliability rows of the selected subset; empty selection gives an
/// empty table rather than an error so a degenerate split still writes
/// both files.
fn subset_bins(probs: &ProbSet, idx: &[usize], bins: usize) -> Result<Vec<BinRow>> {
    if idx.is_empty() {
        return Ok(Vec::new());
    }
    let mut values = Vec::with_capacity(idx.len() * probs.k());
    let mut labels = Vec::with_capacity(idx.len());
    for &i in idx {
        values.extend_from_slice(probs.row(i));
        labels.push(probs.label(i));
    }
    let sub = ProbSet::new(values, labels, probs.k())?;
    Ok(metrics::ece(&sub, bins)?.1)
}
