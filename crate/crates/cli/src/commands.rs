//! Subcommand implementations. Each validates its arguments before
//! touching the filesystem.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use cbp_core::io::{read_grid, read_labels, write_grid, write_labels, LabelTable};
use cbp_core::postproc::{fewshot_eval, predict, train_logreg, FewShotConfig, TrainConfig};
use cbp_core::{LocalDescriptorGrid, Matrix, SeededRng};

use crate::args::{
    BenchArgs, Command, EvalArgs, FewshotArgs, GradcheckArgs, PoolArgs, SweepArgs, SynthArgs,
    TrainArgs,
};
use crate::bench::{bench, BenchConfig, BenchRow};
use crate::gradcheck::{gradcheck, GradCheckConfig, GRADCHECK_TOL};
use crate::model_file::ModelFile;
use crate::pooling::{pool, pooled_features, Method};
use crate::report::{sig9, write_csv};
use crate::sweep::{kernel_sweep, SweepConfig, SweepReport};
use crate::synth::{generate, SynthConfig};
use crate::CliError;

type CmdResult = Result<(), CliError>;

pub fn dispatch(cmd: &Command) -> CmdResult {
    match cmd {
        Command::Pool(a) => cmd_pool(a),
        Command::KernelSweep(a) => cmd_kernel_sweep(a),
        Command::Gradcheck(a) => cmd_gradcheck(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Synth(a) => cmd_synth(a),
        Command::Fewshot(a) => cmd_fewshot(a),
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
    }
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Invalid(msg.into())
}

/// Output dimension for `method`: required and positive for rm/ts,
/// forbidden for bilinear.
fn resolve_dim(method: Method, dim: Option<usize>) -> Result<usize, CliError> {
    match (method, dim) {
        (Method::Bilinear, Some(_)) => Err(invalid("--dim is not accepted for bilinear pooling")),
        (Method::Bilinear, None) => Ok(0),
        (_, None) => Err(invalid(format!("--dim is required for {method}"))),
        (_, Some(0)) => Err(invalid("--dim must be positive")),
        (_, Some(d)) => Ok(d),
    }
}

fn csv_sink(path: Option<&Path>) -> Result<Box<dyn Write>, CliError> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|source| {
            CliError::Io {
                path: p.to_path_buf(),
                source,
            }
        })?)),
        None => Box::new(io::stdout().lock()),
    })
}

fn emit_csv(
    path: Option<&Path>,
    comments: &[&str],
    header: &[&str],
    rows: &[Vec<String>],
) -> CmdResult {
    let sink = csv_sink(path)?;
    write_csv(sink, comments, header, rows).map_err(|source| CliError::Io {
        path: path
            .map(Path::to_path_buf)
            .unwrap_or_else(|| "<stdout>".into()),
        source,
    })
}

/// Pooled descriptor files store one row per sample with `h = w = 1`.
fn grid_to_features(grid: &LocalDescriptorGrid) -> Result<Matrix, CliError> {
    if grid.h() != 1 || grid.w() != 1 {
        return Err(invalid(format!(
            "expected a pooled descriptor file (h = w = 1), got h={} w={}",
            grid.h(),
            grid.w()
        )));
    }
    Ok(Matrix::new(grid.n(), grid.c(), grid.data().to_vec())?)
}

fn features_to_grid(features: Matrix) -> Result<LocalDescriptorGrid, CliError> {
    let (n, dim) = (features.rows(), features.cols());
    Ok(LocalDescriptorGrid::new(
        n,
        1,
        1,
        dim,
        features.into_data(),
    )?)
}

pub fn cmd_pool(a: &PoolArgs) -> CmdResult {
    let dim = resolve_dim(a.method, a.dim)?;
    let grid = read_grid(&a.input)?;
    let features = if a.no_normalize {
        pool(&grid, a.method, dim, a.seed)?.into_values()
    } else {
        pooled_features(&grid, a.method, dim, a.seed)?
    };
    write_grid(&a.output, &features_to_grid(features)?)?;
    Ok(())
}

pub fn cmd_kernel_sweep(a: &SweepArgs) -> CmdResult {
    if a.dim.is_empty() || a.dim.contains(&0) {
        return Err(invalid("--dim values must be positive"));
    }
    if a.c == 0 || a.h == 0 || a.w == 0 || a.pairs == 0 || a.trials == 0 {
        return Err(invalid(
            "--c, --h, --w, --pairs and --trials must be positive",
        ));
    }
    if a.method.contains(&Method::Bilinear) {
        return Err(invalid(
            "kernel-sweep compares rm and ts against the exact kernel",
        ));
    }
    let report = kernel_sweep(&SweepConfig {
        c: a.c,
        h: a.h,
        w: a.w,
        dims: a.dim.clone(),
        methods: a.method.clone(),
        pairs: a.pairs,
        trials: a.trials,
        seed: a.seed,
    })?;
    emit_sweep(a.output.as_deref(), &report)
}

pub fn emit_sweep(path: Option<&Path>, report: &SweepReport) -> CmdResult {
    emit_csv(
        path,
        &["relative error of compact kernel estimates vs the exact second-order kernel on random gaussian grids"],
        &SweepReport::HEADER,
        &report.csv_rows(),
    )
}

pub fn cmd_gradcheck(a: &GradcheckArgs) -> CmdResult {
    if !(a.eps > 0.0 && a.eps.is_finite()) {
        return Err(invalid(format!("--eps must be positive, got {}", a.eps)));
    }
    if a.c == 0 || a.dim == 0 || a.h == 0 || a.w == 0 {
        return Err(invalid("--c, --dim, --h and --w must be positive"));
    }
    let report = gradcheck(&GradCheckConfig {
        method: a.method,
        c: a.c,
        d: a.dim,
        h: a.h,
        w: a.w,
        seed: a.seed,
        eps: a.eps,
    })?;
    for (name, err) in &report.outputs {
        println!(
            "{} d{}: max_rel_err={}",
            report.method.name(),
            name,
            sig9(*err)
        );
    }
    let max = report.max_rel_err();
    println!("max_rel_err={} tol={}", sig9(max), sig9(GRADCHECK_TOL));
    if report.passed() {
        println!("PASS");
        Ok(())
    } else {
        Err(CliError::Threshold(format!(
            "gradient check failed: max relative error {} >= {}",
            sig9(max),
            sig9(GRADCHECK_TOL)
        )))
    }
}

pub fn cmd_bench(a: &BenchArgs) -> CmdResult {
    let cfg = BenchConfig {
        method: a.method,
        c: a.c,
        d: a.dim,
        h: a.h,
        w: a.w,
        reps: a.reps,
        seed: a.seed,
    };
    crate::bench::validate(&cfg).map_err(|e| invalid(e.to_string()))?;
    let row = bench(&cfg)?;
    emit_csv(
        a.output.as_deref(),
        &[],
        &BenchRow::HEADER,
        &[row.csv_row()],
    )
}

pub fn cmd_synth(a: &SynthArgs) -> CmdResult {
    if !(a.spread >= 0.0 && a.spread.is_finite()) {
        return Err(invalid(format!(
            "--spread must be finite and >= 0, got {}",
            a.spread
        )));
    }
    if a.classes < 2 {
        return Err(invalid("--classes must be at least 2"));
    }
    if a.per_class == 0 || a.c == 0 || a.h == 0 || a.w == 0 {
        return Err(invalid("--per-class, --c, --h and --w must be positive"));
    }
    let (grid, labels) = generate(&SynthConfig {
        classes: a.classes,
        per_class: a.per_class,
        c: a.c,
        h: a.h,
        w: a.w,
        spread: a.spread,
        seed: a.seed,
    })?;
    write_grid(&a.output, &grid)?;
    write_labels(&a.labels, &labels)?;
    Ok(())
}

pub fn cmd_fewshot(a: &FewshotArgs) -> CmdResult {
    let dim = resolve_dim(a.method, a.dim)?;
    if a.shots.is_empty() || a.shots.contains(&0) {
        return Err(invalid("--shots values must be positive"));
    }
    if a.trials == 0 {
        return Err(invalid("--trials must be positive"));
    }
    let grid = read_grid(&a.input)?;
    let labels = read_labels(&a.labels, Some(grid.n()), None)?;
    let root = SeededRng::new(a.seed);
    let features = pooled_features(&grid, a.method, dim, root.child(0).seed())?;
    let rows = fewshot_eval(
        &features,
        &labels,
        &a.shots,
        a.trials,
        &mut root.child(1),
        &FewShotConfig::default(),
    )?;
    let csv_rows: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.shots.to_string(),
                sig9(r.mean_accuracy),
                sig9(r.std_accuracy),
                r.accuracies.len().to_string(),
            ]
        })
        .collect();
    emit_csv(
        a.output.as_deref(),
        &[],
        &["shots", "mean_accuracy", "std_accuracy", "trials"],
        &csv_rows,
    )
}

fn class_count(labels: &LabelTable, classes: Option<usize>) -> Result<usize, CliError> {
    let k = classes.unwrap_or_else(|| labels.class_count());
    if k < 2 {
        return Err(invalid(format!("need at least 2 classes, got {k}")));
    }
    Ok(k)
}

pub fn cmd_train(a: &TrainArgs) -> CmdResult {
    if !(a.lambda >= 0.0 && a.lambda.is_finite()) {
        return Err(invalid(format!(
            "--lambda must be finite and >= 0, got {}",
            a.lambda
        )));
    }
    if matches!(a.classes, Some(k) if k < 2) {
        return Err(invalid("--classes must be at least 2"));
    }
    let features = grid_to_features(&read_grid(&a.input)?)?;
    let labels = read_labels(&a.labels, Some(features.rows()), a.classes)?;
    let k = class_count(&labels, a.classes)?;
    let model = train_logreg(&features, &labels, k, a.lambda, &TrainConfig::default())?;
    let accuracy = predict(&model, &features)?.accuracy(&labels);
    println!("train_accuracy={}", sig9(accuracy));
    ModelFile::from(&model).write(&a.output)
}

pub fn cmd_eval(a: &EvalArgs) -> CmdResult {
    let model = ModelFile::read(&a.model)?.into_model()?;
    let features = grid_to_features(&read_grid(&a.input)?)?;
    let labels = read_labels(&a.labels, Some(features.rows()), Some(model.k()))?;
    let pred = predict(&model, &features)?;
    println!("accuracy={}", sig9(pred.accuracy(&labels)));
    if let Some(path) = a.output.as_deref() {
        let rows: Vec<Vec<String>> = (0..features.rows())
            .map(|i| {
                let y = pred.classes[i];
                vec![
                    i.to_string(),
                    y.to_string(),
                    sig9(pred.probabilities.get(i, y)),
                ]
            })
            .collect();
        emit_csv(
            Some(path),
            &[],
            &["sample", "predicted", "probability"],
            &rows,
        )?;
    }
    Ok(())
}
