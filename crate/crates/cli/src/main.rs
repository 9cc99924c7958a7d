use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use dsb::analytic::{
    alignment, correction_classifier, correction_direction, evaluate, linear_discriminant, naive_classifier,
    oracle_classifier, LinearClassifier,
};
use dsb::data::{
    cifar10c_mapping, cifar_split_paths, coarse_grain_labels, fit_gaussian_clone, load_cifar_binary, load_clone,
    load_dataset, sample_clone, sample_rectangular, save_clone, save_dataset, CloneMode, Grouping, LabeledDataset,
    RectangularParams, RectangularSource,
};
use dsb::gflow::{
    integrate_gf_recording, taylor_coefficients, Activation, GfConfig, References, StatsSource, TruncationScheme,
};
use dsb::harness::{run_experiment, validate_clone, CloneTolerance, ExperimentConfig, ExperimentId};
use dsb::rng::derive_seed;
use dsb::stats::{estimate_class_stats, FourthOrderTensor};
use dsb::train::{
    train_perceptron_finite, train_perceptron_online, train_two_layer, PerceptronConfig, RunRecord,
    TwoLayerConfig,
};
use dsb::{Error, Result};

#[derive(Parser)]
#[command(name = "dsb", version, about = "Distributional simplicity bias experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate or import datasets.
    #[command(subcommand)]
    Data(DataCmd),
    /// Fit, sample and check Gaussian clones.
    #[command(subcommand)]
    Clone(CloneCmd),
    /// Closed-form classifiers.
    #[command(subcommand)]
    Analytic(AnalyticCmd),
    /// Truncated gradient flow.
    #[command(subcommand)]
    Gflow(GflowCmd),
    /// SGD training runs.
    #[command(subcommand)]
    Train(TrainCmd),
    /// Named experiments.
    #[command(subcommand)]
    Experiment(ExperimentCmd),
}

#[derive(Args, Clone)]
struct RectArgs {
    #[arg(long, default_value_t = RectangularParams::default().dim)]
    dim: usize,
    #[arg(long, default_value_t = RectangularParams::default().a)]
    a: f64,
    #[arg(long, default_value_t = RectangularParams::default().b)]
    b: f64,
    #[arg(long, default_value_t = RectangularParams::default().mu1)]
    mu1: f64,
    #[arg(long, default_value_t = RectangularParams::default().mu2)]
    mu2: f64,
}

impl RectArgs {
    fn params(&self) -> Result<RectangularParams> {
        let p = RectangularParams {
            dim: self.dim,
            a: self.a,
            b: self.b,
            mu1: self.mu1,
            mu2: self.mu2,
        };
        p.validate()?;
        Ok(p)
    }
}

#[derive(Subcommand)]
enum DataCmd {
    /// Sample the two-rectangle dataset (half of each class).
    SampleRect {
        #[command(flatten)]
        rect: RectArgs,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Convert CIFAR-10 binary batches into a dataset file.
    LoadCifar {
        /// Directory with the `*_batch*.bin` files.
        #[arg(long)]
        dir: PathBuf,
        #[arg(long, value_enum, default_value_t = Split::Train)]
        split: Split,
        /// Keep the three colour planes instead of converting to grey.
        #[arg(long)]
        color: bool,
        /// Keep the first N images of every class (0 keeps all).
        #[arg(long, default_value_t = 0)]
        per_class: usize,
        /// Map the ten labels onto the two superclasses.
        #[arg(long)]
        coarse: bool,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Split {
    Train,
    Test,
}

#[derive(Clone, Copy, ValueEnum)]
enum GroupingArg {
    Identity,
    Cifar10c,
}

#[derive(Subcommand)]
enum CloneCmd {
    /// Fit one Gaussian per class (or per group).
    Fit {
        #[arg(long)]
        data: PathBuf,
        /// `full` or `isotropic`.
        #[arg(long, default_value = "full")]
        mode: String,
        #[arg(long, value_enum, default_value_t = GroupingArg::Identity)]
        grouping: GroupingArg,
        /// Give the fitted components the coarse labels (ten components, two classes).
        #[arg(long)]
        coarse_labels: bool,
        /// Clamp samples to `LO HI`.
        #[arg(long, num_args = 2, value_names = ["LO", "HI"], allow_negative_numbers = true)]
        clip: Option<Vec<f64>>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Draw samples from a fitted clone.
    Sample {
        #[arg(long)]
        clone: PathBuf,
        #[arg(long)]
        n_per_component: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare class means and covariances of clone samples with a reference dataset.
    Validate {
        #[arg(long)]
        clone: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 100_000)]
        n_per_component: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Pass within this many standard deviations of sampling noise.
        #[arg(long, conflicts_with_all = ["mean_tol", "cov_tol"])]
        sigma: Option<f64>,
        #[arg(long, requires = "cov_tol")]
        mean_tol: Option<f64>,
        #[arg(long, requires = "mean_tol")]
        cov_tol: Option<f64>,
    },
}

#[derive(Subcommand)]
enum AnalyticCmd {
    /// Naive, discriminant and corrected classifiers of a dataset.
    Solve {
        /// Dataset file; a rectangle sample is drawn when absent.
        #[arg(long)]
        data: Option<PathBuf>,
        #[command(flatten)]
        rect: RectArgs,
        #[arg(long, default_value_t = 100_000)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = dsb::analytic::DEFAULT_C3)]
        c3: f64,
        #[arg(long, default_value = "within_cumulant")]
        tensor: String,
    },
}

#[derive(Subcommand)]
enum GflowCmd {
    /// Integrate the truncated flow on a frozen rectangle sample.
    Run {
        #[command(flatten)]
        rect: RectArgs,
        #[arg(long)]
        order: usize,
        /// `series` or `activation_polynomial`.
        #[arg(long, default_value = "series")]
        scheme: String,
        #[arg(long, default_value = "tanh")]
        activation: String,
        #[arg(long, default_value_t = 0.1)]
        eta: f64,
        #[arg(long, default_value_t = 20_000)]
        steps: usize,
        #[arg(long, default_value_t = 100_000)]
        sample_size: usize,
        #[arg(long, default_value_t = 20_000)]
        eval_size: usize,
        #[arg(long, default_value_t = 0.1)]
        init_scale: f64,
        #[arg(long, default_value_t = 20)]
        checkpoints_per_decade: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum TrainCmd {
    /// Perceptron on rectangles (online), a clone (online) or a fixed dataset.
    Perceptron {
        #[command(flatten)]
        rect: RectArgs,
        /// Train on a fixed dataset, one pass per epoch.
        #[arg(long, conflicts_with = "clone")]
        train: Option<PathBuf>,
        /// Train online on samples of a clone.
        #[arg(long)]
        clone: Option<PathBuf>,
        #[arg(long, default_value = "tanh")]
        activation: String,
        #[arg(long, default_value_t = 0.05)]
        eta: f64,
        #[arg(long, default_value_t = 100_000)]
        steps: usize,
        #[arg(long, default_value_t = 1.0)]
        init_scale: f64,
        #[arg(long, default_value_t = 20_000)]
        eval_size: usize,
        #[arg(long, default_value_t = 50)]
        checkpoints_per_decade: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Run CSV; the sidecar is written next to it with a `.json` extension.
        #[arg(long)]
        out: PathBuf,
    },
    /// Two-layer ReLU network.
    Mlp {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        eval: PathBuf,
        #[arg(long, default_value_t = 512)]
        hidden: usize,
        #[arg(long, default_value_t = 0.005)]
        lr: f64,
        #[arg(long, default_value_t = 5e-4)]
        weight_decay: f64,
        #[arg(long, default_value_t = 64)]
        batch_size: usize,
        #[arg(long, default_value_t = 2000)]
        steps: usize,
        #[arg(long, default_value_t = 20)]
        checkpoints_per_decade: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum ExperimentCmd {
    /// Run a named experiment and write its outputs.
    Run {
        id: String,
        /// TOML file; defaults are used for missing keys.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Overrides `data_seed`.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// List the experiment ids.
    List,
}

fn print(v: &Value) {
    println!("{}", serde_json::to_string_pretty(v).expect("json value"));
}

fn sidecar_of(csv: &Path) -> PathBuf {
    csv.with_extension("json")
}

fn write_run(record: &RunRecord, out: &Path) -> Result<()> {
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    record.write_csv(out)?;
    record.write_sidecar(&sidecar_of(out))
}

fn run_summary(record: &RunRecord, out: &Path) -> Value {
    json!({
        "out": out,
        "checkpoints": record.checkpoints.len(),
        "final_accuracy": record.final_accuracy(),
        "best_accuracy": record.best_accuracy(),
    })
}

fn data(cmd: DataCmd) -> Result<()> {
    match cmd {
        DataCmd::SampleRect { rect, n, seed, out } => {
            let p = rect.params()?;
            let d = sample_rectangular(&p, n, seed)?;
            save_dataset(&d, &out, json!({ "source": "rectangular", "params": p, "seed": seed }))?;
            print(&json!({ "out": out, "n": d.len(), "dim": d.dim(), "class_counts": d.class_counts() }));
        }
        DataCmd::LoadCifar {
            dir,
            split,
            color,
            per_class,
            coarse,
            out,
        } => {
            let train = matches!(split, Split::Train);
            let mut d = load_cifar_binary(&cifar_split_paths(&dir, train), !color)?;
            if per_class > 0 {
                d = d.take_per_class(per_class);
            }
            if coarse {
                d = coarse_grain_labels(&d, &cifar10c_mapping())?;
            }
            let split_name = if train { "train" } else { "test" };
            save_dataset(
                &d,
                &out,
                json!({ "source": "cifar10", "split": split_name, "grayscale": !color, "per_class": per_class, "coarse": coarse }),
            )?;
            print(&json!({ "out": out, "n": d.len(), "dim": d.dim(), "class_counts": d.class_counts() }));
        }
    }
    Ok(())
}

fn grouping_for(g: GroupingArg, data: &LabeledDataset) -> Grouping {
    match g {
        GroupingArg::Identity => Grouping::identity(data.num_classes()),
        GroupingArg::Cifar10c => cifar10c_mapping(),
    }
}

fn clone(cmd: CloneCmd) -> Result<()> {
    match cmd {
        CloneCmd::Fit {
            data,
            mode,
            grouping,
            coarse_labels,
            clip,
            out,
        } => {
            let d = load_dataset(&data)?;
            let mode = CloneMode::parse(&mode)?;
            let clip = clip.map(|v| (v[0], v[1]));
            let mut c = fit_gaussian_clone(&d, mode, &grouping_for(grouping, &d), clip)?;
            if coarse_labels {
                c = c.with_component_labels(cifar10c_mapping().as_slice(), 2)?;
            }
            save_clone(&c, &out, json!({ "fitted_on": data, "mode": mode.name() }))?;
            print(&json!({ "out": out, "components": c.components.len(), "classes": c.num_classes, "dim": c.dim }));
        }
        CloneCmd::Sample {
            clone,
            n_per_component,
            seed,
            out,
        } => {
            let c = load_clone(&clone)?;
            let d = sample_clone(&c, n_per_component, seed)?;
            save_dataset(&d, &out, json!({ "source": "clone", "clone": clone, "seed": seed }))?;
            print(&json!({ "out": out, "n": d.len(), "dim": d.dim(), "class_counts": d.class_counts() }));
        }
        CloneCmd::Validate {
            clone,
            data,
            n_per_component,
            seed,
            sigma,
            mean_tol,
            cov_tol,
        } => {
            let c = load_clone(&clone)?;
            let d = load_dataset(&data)?;
            let tol = match (sigma, mean_tol, cov_tol) {
                (Some(k), _, _) => CloneTolerance::Sigma(k),
                (None, Some(mean), Some(covariance)) => CloneTolerance::Relative { mean, covariance },
                _ => CloneTolerance::default_for(&c),
            };
            let report = validate_clone(&c, &d, n_per_component, seed, tol)?;
            print(&serde_json::to_value(&report)?);
        }
    }
    Ok(())
}

fn classifier_json(c: &LinearClassifier, data: &LabeledDataset, oracle: Option<&LinearClassifier>) -> Result<Value> {
    let ev = evaluate(c, data)?;
    let theta = oracle.map(|o| alignment(c.weight(), o.weight())).transpose()?;
    Ok(json!({
        "weight": c.weight().as_slice(),
        "bias": c.bias(),
        "accuracy": ev.accuracy,
        "theta_oracle": theta,
    }))
}

fn analytic(cmd: AnalyticCmd) -> Result<()> {
    let AnalyticCmd::Solve {
        data,
        rect,
        n,
        seed,
        c3,
        tensor,
    } = cmd;
    let mode = FourthOrderTensor::parse(&tensor)?;
    let (d, oracle) = match &data {
        Some(path) => (load_dataset(path)?, None),
        None => {
            let p = rect.params()?;
            (sample_rectangular(&p, n, seed)?, Some(oracle_classifier(&p)?))
        }
    };
    let stats = estimate_class_stats(&d, &Grouping::identity(d.num_classes()))?;
    let naive = naive_classifier(&stats)?;
    let lda = linear_discriminant(&stats)?;
    let corr = correction_classifier(&d, &stats, &lda, mode, c3)?;
    let dir = correction_direction(&d, &stats, &lda, mode)?;
    let mut out = serde_json::Map::new();
    out.insert("n".into(), json!(d.len()));
    out.insert("c3".into(), json!(c3));
    out.insert("tensor".into(), json!(mode.name()));
    for (name, c) in [("naive", &naive), ("lda", &lda), ("correction", &corr), ("correction_direction", &dir)] {
        out.insert(name.into(), classifier_json(c, &d, oracle.as_ref())?);
    }
    if let Some(o) = &oracle {
        out.insert("oracle".into(), classifier_json(o, &d, Some(o))?);
    }
    print(&Value::Object(out));
    Ok(())
}

fn gflow(cmd: GflowCmd) -> Result<()> {
    let GflowCmd::Run {
        rect,
        order,
        scheme,
        activation,
        eta,
        steps,
        sample_size,
        eval_size,
        init_scale,
        checkpoints_per_decade,
        seed,
        out,
    } = cmd;
    let p = rect.params()?;
    let scheme = TruncationScheme::parse(&scheme)?;
    let act = Activation::parse(&activation)?;
    let frozen = sample_rectangular(&p, sample_size, derive_seed(seed, 3))?;
    let eval = sample_rectangular(&p, eval_size, derive_seed(seed, 1))?;
    let src = StatsSource::from_sample(&frozen)?;
    let e = taylor_coefficients(&act, order.max(1))?;
    let stats = estimate_class_stats(&frozen, &Grouping::identity(2))?;
    let lda = linear_discriminant(&stats)?;
    let refs = References {
        naive: Some(naive_classifier(&stats)?.weight().clone()),
        correction: Some(correction_direction(&frozen, &stats, &lda, FourthOrderTensor::WithinCumulant)?.weight().clone()),
        lda: Some(lda.weight().clone()),
        oracle: Some(oracle_classifier(&p)?.weight().clone()),
    };
    let w0 = PerceptronConfig {
        dim: p.dim,
        seed,
        init_scale,
        ..Default::default()
    }
    .initial_weights();
    let gc = GfConfig {
        order,
        scheme,
        eta,
        steps,
        checkpoints_per_decade,
    };
    let t = integrate_gf_recording(&w0, &e, &src, &gc, &eval, &refs)?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    t.write_csv(&out)?;
    let last = t.last();
    print(&json!({
        "out": out,
        "diverged_at": t.divergence.map(|d| d.0),
        "final_step": last.step,
        "final_accuracy": last.accuracy,
        "theta_naive": last.theta_naive,
        "theta_lda": last.theta_lda,
        "theta_oracle": last.theta_oracle,
        "final_weight": t.final_weight.as_slice(),
    }));
    Ok(())
}

fn train(cmd: TrainCmd) -> Result<()> {
    match cmd {
        TrainCmd::Perceptron {
            rect,
            train,
            clone,
            activation,
            eta,
            steps,
            init_scale,
            eval_size,
            checkpoints_per_decade,
            seed,
            out,
        } => {
            let p = rect.params()?;
            let eval = sample_rectangular(&p, eval_size, derive_seed(seed, 1))?;
            let refs = dsb::harness::rect_references(&p)?;
            let config = PerceptronConfig {
                dim: p.dim,
                activation: Activation::parse(&activation)?,
                eta,
                steps,
                seed,
                init_scale,
                checkpoints_per_decade,
            };
            let record = match (train, clone) {
                (Some(path), _) => {
                    let d = load_dataset(&path)?;
                    let run = train_perceptron_finite(&config, &d, &eval, &refs, (&path.to_string_lossy(), "rect"))?;
                    run.record
                }
                (None, Some(path)) => {
                    let c = load_clone(&path)?;
                    let mut src = c.source(seed)?;
                    train_perceptron_online(&config, &mut src, &eval, &refs, (&path.to_string_lossy(), "rect"))?
                }
                (None, None) => {
                    let mut src = RectangularSource::new(p, seed)?;
                    train_perceptron_online(&config, &mut src, &eval, &refs, ("rect", "rect"))?
                }
            };
            write_run(&record, &out)?;
            let mut s = run_summary(&record, &out);
            for r in &refs {
                s[format!("final_theta_{}", r.name)] = json!(record.checkpoints.last().map(|c| {
                    let i = record.reference_names.iter().position(|n| n == &r.name).expect("reference");
                    c.angles[i]
                }));
            }
            print(&s);
        }
        TrainCmd::Mlp {
            data,
            eval,
            hidden,
            lr,
            weight_decay,
            batch_size,
            steps,
            checkpoints_per_decade,
            seed,
            out,
        } => {
            let (d, e) = (load_dataset(&data)?, load_dataset(&eval)?);
            let config = TwoLayerConfig {
                input_dim: d.dim(),
                hidden,
                classes: d.num_classes().max(e.num_classes()),
                lr,
                weight_decay,
                batch_size,
                steps,
                seed,
                checkpoints_per_decade,
                ..Default::default()
            };
            let (record, _) = train_two_layer(
                &config,
                &d,
                &e,
                (&data.to_string_lossy(), &eval.to_string_lossy()),
            )?;
            write_run(&record, &out)?;
            print(&run_summary(&record, &out));
        }
    }
    Ok(())
}

fn experiment(cmd: ExperimentCmd) -> Result<()> {
    match cmd {
        ExperimentCmd::Run { id, config, out, seed } => {
            let id = ExperimentId::parse(&id)?;
            let mut cfg = match &config {
                Some(path) => ExperimentConfig::load(path)?,
                None => ExperimentConfig::default(),
            };
            if let Some(prev) = cfg.experiment.filter(|&e| e != id) {
                return Err(Error::Config(format!(
                    "config names experiment {} but {} was requested",
                    prev.name(),
                    id.name()
                )));
            }
            cfg.experiment = Some(id);
            if let Some(s) = seed {
                cfg.data_seed = s;
            }
            let report = run_experiment(&cfg, &out)?;
            eprintln!("{}: {} files in {:.1} s", id.name(), report.files.len(), report.wall_clock_secs);
            print(report.findings());
        }
        ExperimentCmd::List => {
            for id in ExperimentId::ALL {
                println!("{}", id.name());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Data(c) => data(c),
        Command::Clone(c) => clone(c),
        Command::Analytic(c) => analytic(c),
        Command::Gflow(c) => gflow(c),
        Command::Train(c) => train(c),
        Command::Experiment(c) => experiment(c),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: kind={} message={:?}", e.kind(), e.to_string());
            ExitCode::FAILURE
        }
    }
}
