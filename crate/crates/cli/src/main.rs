use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use ris_recognizer::channel::{ChannelModel, PhaseConfig};
use ris_recognizer::eval::{self, SweepData, SweepGrid};
use ris_recognizer::linalg::CMatrix;
use ris_recognizer::protocol::{self, ProtocolConfig};
use ris_recognizer::recognizer::{random_phase_set, AnyModel, Checkpoint, ModelKind};
use ris_recognizer::scene::SceneConfig;
use ris_recognizer::trainer::{self, Dataset, LrSchedule, MnistFiles, MnistSet, Split, TrainConfig};
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Parser, Debug)]
#[command(name = "ris-recognizer", version, about = "Surface-assisted target recognition experiments")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Serialize)]
struct Global {
    /// Scene file with flat `key = value` entries; missing keys keep defaults.
    #[arg(long, global = true)]
    scene: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(long, global = true, default_value = "runs")]
    out: PathBuf,
    #[arg(long, global = true, default_value = "adaptive")]
    method: String,
    /// Sensing steps per episode.
    #[arg(long, global = true, default_value_t = 7)]
    k: usize,
    /// Fraction of the training pool to use.
    #[arg(long, global = true, default_value_t = 1.0)]
    rho: f64,
    /// Directory holding the four MNIST IDX files.
    #[arg(long, global = true, env = "RIS_MNIST_DIR", default_value = "data/mnist")]
    data: PathBuf,
    /// Digits to recognize, comma separated.
    #[arg(long, global = true, value_delimiter = ',', default_value = "0,1,2,3,4,5,6,7,8,9")]
    classes: Vec<u8>,
    /// Use only the first N matching training images.
    #[arg(long, global = true)]
    train_limit: Option<usize>,
    /// Use only the first N matching test images.
    #[arg(long, global = true)]
    test_limit: Option<usize>,
}

#[derive(Args, Debug, Clone, Serialize)]
struct Hyper {
    #[arg(long, default_value_t = 128)]
    batch_size: usize,
    #[arg(long, default_value_t = 200)]
    epochs: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    /// Cosine learning-rate decay instead of a constant rate.
    #[arg(long)]
    cosine: bool,
    #[arg(long, default_value_t = 0.1)]
    validation_fraction: f64,
    /// Train without estimation noise.
    #[arg(long)]
    no_noise: bool,
    #[arg(long, default_value_t = 256)]
    width: usize,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a model and write its checkpoint and per-epoch metrics.
    Train(Hyper),
    /// Evaluate a checkpoint on the test split.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Train and evaluate every point of a parameter grid.
    Sweep {
        #[command(flatten)]
        hyper: Hyper,
        #[arg(long, value_delimiter = ',')]
        methods: Option<Vec<String>>,
        #[arg(long, value_delimiter = ',')]
        ks: Option<Vec<usize>>,
        /// Surface sizes such as `10x10,20x20`.
        #[arg(long, value_delimiter = ',')]
        ris_sizes: Option<Vec<String>>,
        #[arg(long, value_delimiter = ',')]
        distances: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        pt_dbms: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',')]
        rhos: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        /// Skip grid points already present in the output CSV.
        #[arg(long)]
        resume: bool,
    },
    /// Spectral efficiency with and without sensing frames.
    SeTable {
        #[arg(long, default_value_t = 1)]
        mu: u32,
        #[arg(long, allow_hyphen_values = true)]
        pt_dbm: Option<f64>,
        #[arg(long, value_delimiter = ',', default_value = "10x10,20x20,30x30")]
        ris_sizes: Vec<String>,
        /// Take sensing phases from this model instead of random draws.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Step-to-step phase correlation matrix of a trained model.
    Correlate {
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Write every propagation matrix as CSV.
    DumpChannel,
}

#[derive(Serialize)]
struct InputHash {
    path: String,
    sha256: String,
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    version: &'a str,
    global: &'a Global,
    scene: &'a SceneConfig,
    settings: serde_json::Value,
    inputs: Vec<InputHash>,
    content_hash: String,
    outputs: Vec<String>,
}

/// Hash of a file in the style of a git blob: `sha256("blob <len>\0" ‖ bytes)`.
fn blob_hash(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(&bytes);
    Ok(hex(&h.finalize()))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

struct Run {
    global: Global,
    scene: SceneConfig,
}

impl Run {
    fn channel(&self) -> Result<ChannelModel> {
        Ok(ChannelModel::new(&self.scene)?)
    }

    fn method(&self) -> Result<ModelKind> {
        Ok(self.global.method.parse()?)
    }

    fn mnist(&self) -> MnistFiles {
        MnistFiles::in_dir(&self.global.data)
    }

    fn load_train(&self) -> Result<MnistSet> {
        self.mnist()
            .load_train()
            .with_context(|| format!("loading training images from {}", self.global.data.display()))
    }

    fn load_test(&self) -> Result<MnistSet> {
        self.mnist()
            .load_test()
            .with_context(|| format!("loading test images from {}", self.global.data.display()))
    }

    fn dataset(&self, set: &MnistSet, split: Split, limit: Option<usize>) -> Result<Dataset> {
        Ok(Dataset::from_mnist(set, &self.scene, &self.global.classes, limit, split)?)
    }

    fn train_config(&self, h: &Hyper) -> TrainConfig {
        TrainConfig {
            batch_size: h.batch_size,
            epochs: h.epochs,
            learning_rate: h.lr,
            schedule: if h.cosine { LrSchedule::Cosine } else { LrSchedule::Constant },
            k: self.global.k,
            rho: self.global.rho,
            validation_fraction: h.validation_fraction,
            seed: self.global.seed,
            noise: !h.no_noise,
            feature_dim: h.width,
            state_dim: h.width,
            head_hidden: h.width,
            ..TrainConfig::default()
        }
    }

    fn out(&self, name: &str) -> PathBuf {
        self.global.out.join(name)
    }

    fn mnist_inputs(&self, train: bool, test: bool) -> Vec<PathBuf> {
        let f = self.mnist();
        let mut v = Vec::new();
        if train {
            v.extend([f.train_images, f.train_labels]);
        }
        if test {
            v.extend([f.test_images, f.test_labels]);
        }
        v
    }

    fn write_manifest(
        &self,
        command: &str,
        settings: serde_json::Value,
        mut inputs: Vec<PathBuf>,
        outputs: &[PathBuf],
    ) -> Result<()> {
        if let Some(s) = &self.global.scene {
            inputs.insert(0, s.clone());
        }
        let hashes = inputs
            .iter()
            .map(|p| {
                Ok(InputHash {
                    path: p.display().to_string(),
                    sha256: blob_hash(p)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let mut h = Sha256::new();
        h.update(command.as_bytes());
        h.update(serde_json::to_vec(&self.global)?);
        h.update(self.scene.to_toml_string().as_bytes());
        h.update(serde_json::to_vec(&settings)?);
        for ih in &hashes {
            h.update(ih.sha256.as_bytes());
        }
        let manifest = Manifest {
            command,
            version: env!("CARGO_PKG_VERSION"),
            global: &self.global,
            scene: &self.scene,
            settings,
            inputs: hashes,
            content_hash: hex(&h.finalize()),
            outputs: outputs.iter().map(|p| p.display().to_string()).collect(),
        };
        let path = self.out(&format!("{command}.manifest.json"));
        fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n")?;
        println!("manifest: {}", path.display());
        Ok(())
    }
}

fn parse_size(s: &str) -> Result<(usize, usize)> {
    let (r, c) = s
        .split_once(['x', 'X'])
        .with_context(|| format!("surface size `{s}` should look like 10x10"))?;
    Ok((r.trim().parse()?, c.trim().parse()?))
}

fn load_model(path: &Path) -> Result<AnyModel> {
    let ck = Checkpoint::load(path).with_context(|| format!("loading checkpoint {}", path.display()))?;
    Ok(AnyModel::from_checkpoint(&ck)?)
}

fn train(run: &Run, hyper: &Hyper) -> Result<()> {
    let kind = run.method()?;
    let config = run.train_config(hyper);
    config.validate()?;
    let channel = run.channel()?;
    let pool = run.dataset(&run.load_train()?, Split::Train, run.global.train_limit)?;
    println!("training {kind} on {} samples, K = {}", pool.len(), config.k);
    let (model, history) = eval::fit_method(kind, &pool, &channel, &config, &mut |m| {
        println!(
            "epoch {:>4}  train_loss {:.5}  val_loss {:.5}  val_eta {:.4}  {:.1}s",
            m.epoch, m.train_loss, m.val_loss, m.val_eta, m.wall_seconds
        );
    })?;
    let metrics = run.out("metrics.csv");
    let ckpt = run.out("model.ckpt");
    trainer::write_metrics_csv(&metrics, &history)?;
    model.to_checkpoint().save(&ckpt)?;
    println!("checkpoint: {}", ckpt.display());
    run.write_manifest(
        "train",
        serde_json::to_value(hyper)?,
        run.mnist_inputs(true, false),
        &[metrics, ckpt],
    )
}

fn evaluate(run: &Run, checkpoint: &Path) -> Result<()> {
    let model = load_model(checkpoint)?;
    let channel = run.channel()?;
    let test = run.dataset(&run.load_test()?, Split::Test, run.global.test_limit)?;
    let report = eval::evaluate_any(&model, &channel, &test, run.global.k, run.global.seed)?;
    println!("{} on {} test samples: eta = {:.4}", model.kind(), test.len(), report.eta);
    let path = run.out("eval.json");
    let json = serde_json::json!({
        "eta": report.eta,
        "confusion": report.confusion,
        "config": report.config.iter().cloned().collect::<std::collections::BTreeMap<_, _>>(),
        "wall_seconds": report.wall_seconds,
    });
    fs::write(&path, serde_json::to_string_pretty(&json)? + "\n")?;
    let mut inputs = vec![checkpoint.to_path_buf()];
    inputs.extend(run.mnist_inputs(false, true));
    run.write_manifest("eval", serde_json::json!({}), inputs, &[path])
}

#[allow(clippy::too_many_arguments)]
fn sweep(
    run: &Run,
    hyper: &Hyper,
    methods: Option<Vec<String>>,
    ks: Option<Vec<usize>>,
    ris_sizes: Option<Vec<String>>,
    distances: Option<Vec<f64>>,
    pt_dbms: Option<Vec<f64>>,
    rhos: Option<Vec<f64>>,
    seeds: Option<Vec<u64>>,
    resume: bool,
) -> Result<()> {
    let g = &run.global;
    let s = &run.scene;
    let grid = SweepGrid {
        methods: methods
            .unwrap_or_else(|| vec![g.method.clone()])
            .iter()
            .map(|m| m.parse())
            .collect::<std::result::Result<_, _>>()?,
        ks: ks.unwrap_or_else(|| vec![g.k]),
        ris_sizes: match ris_sizes {
            Some(v) => v.iter().map(|x| parse_size(x)).collect::<Result<_>>()?,
            None => vec![(s.ris_rows, s.ris_cols)],
        },
        distances: distances.unwrap_or_else(|| vec![s.roi_distance()]),
        pt_dbms: pt_dbms.unwrap_or_else(|| vec![s.tx_power_dbm]),
        rhos: rhos.unwrap_or_else(|| vec![g.rho]),
        seeds: seeds.unwrap_or_else(|| vec![g.seed]),
    };
    let points = grid.points()?;
    let (train_set, test_set) = (run.load_train()?, run.load_test()?);
    let data = SweepData {
        train: &train_set,
        test: &test_set,
        classes: g.classes.clone(),
        train_limit: g.train_limit,
        test_limit: g.test_limit,
    };
    let csv = run.out("sweep.csv");
    let config = run.train_config(hyper);
    eval::sweep(&points, s, &data, &config, &csv, resume, &mut |row| {
        println!("{}", row.csv_row());
    })?;
    run.write_manifest(
        "sweep",
        serde_json::json!({ "hyper": hyper, "points": points.len(), "resume": resume }),
        run.mnist_inputs(true, true),
        &[csv],
    )
}

fn se_table(run: &Run, mu: u32, pt_dbm: Option<f64>, sizes: &[String], checkpoint: Option<&Path>) -> Result<()> {
    let model = checkpoint.map(load_model).transpose()?;
    let test = run.load_test()?;
    let mut rows = Vec::new();
    for size in sizes {
        let (r, c) = parse_size(size)?;
        let mut scene = run.scene.clone().with_ris_size(r, c);
        if let Some(p) = pt_dbm {
            scene.tx_power_dbm = p;
        }
        let channel = ChannelModel::new(&scene)?;
        let target = Dataset::from_mnist(&test, &scene, &run.global.classes, Some(1), Split::Test)?;
        let sigma = &target.samples.first().context("no test image of the selected classes")?.image;
        let omega_sen: Vec<PhaseConfig> = match &model {
            Some(AnyModel::Adaptive(p)) => p.run_episode(&channel, sigma, run.global.k, run.global.seed)?.omegas(),
            Some(AnyModel::Baseline(m)) => m.phase_configs(),
            None => random_phase_set(run.global.k, scene.n_ris(), run.global.seed),
        };
        let protocol = ProtocolConfig::new(mu, scene.n_tx, 1)?;
        let row = protocol::se_table_row(&channel, sigma, &omega_sen, &protocol)?;
        println!(
            "{}: se_com {:.4}  se_sen {:.4}  se_avg {:.4}  loss {:.4}%",
            row.ris_size,
            row.report.se_com,
            row.report.se_sen,
            row.report.se_avg,
            100.0 * row.report.se_loss_fraction
        );
        rows.push(row);
    }
    let path = run.out("se_table.csv");
    protocol::write_se_csv(BufWriter::new(fs::File::create(&path)?), &rows)?;
    let mut inputs = run.mnist_inputs(false, true);
    inputs.extend(checkpoint.map(Path::to_path_buf));
    run.write_manifest(
        "se-table",
        serde_json::json!({ "mu": mu, "pt_dbm": pt_dbm, "ris_sizes": sizes }),
        inputs,
        &[path],
    )
}

fn correlate(run: &Run, checkpoint: &Path) -> Result<()> {
    let model = load_model(checkpoint)?;
    let channel = run.channel()?;
    let test = run.dataset(&run.load_test()?, Split::Test, run.global.test_limit)?;
    let m = eval::model_correlation(&model, &channel, &test, run.global.k, run.global.seed)?;
    let plain = run.out("correlation.txt");
    let csv = run.out("correlation.csv");
    m.write_plain(BufWriter::new(fs::File::create(&plain)?))?;
    m.write_csv(BufWriter::new(fs::File::create(&csv)?))?;
    m.write_plain(std::io::stdout())?;
    let mut inputs = vec![checkpoint.to_path_buf()];
    inputs.extend(run.mnist_inputs(false, true));
    run.write_manifest("correlate", serde_json::json!({}), inputs, &[plain, csv])
}

fn dump_channel(run: &Run) -> Result<()> {
    let ch = run.channel()?;
    let dir = run.out("channel");
    fs::create_dir_all(&dir)?;
    let column = |v: &[_]| CMatrix::from_vec(v.len(), 1, v.to_vec());
    let entries: Vec<(&str, CMatrix)> = vec![
        ("ue_tx", column(&ch.ue_tx)?),
        ("ris_tx", ch.ris_tx.clone()),
        ("ue_ris", column(&ch.ue_ris)?),
        ("roi_tx", ch.roi_tx.clone()),
        ("ue_roi", column(&ch.ue_roi)?),
        ("ris_roi", ch.ris_roi.clone()),
        ("roi_ris", ch.roi_ris.clone()),
        ("tx_ris", ch.tx_ris.clone()),
        ("ris_rx", ch.ris_rx.clone()),
        ("tx_roi", ch.tx_roi.clone()),
        ("roi_rx", ch.roi_rx.clone()),
    ];
    let mut outputs = Vec::new();
    for (name, m) in entries {
        let path = dir.join(format!("{name}.csv"));
        m.write_csv(BufWriter::new(fs::File::create(&path)?))?;
        println!("{name}: {}x{}", m.rows(), m.cols());
        outputs.push(path);
    }
    let scene = dir.join("scene.toml");
    fs::write(&scene, run.scene.to_toml_string())?;
    outputs.push(scene);
    run.write_manifest("dump-channel", serde_json::json!({}), Vec::new(), &outputs)
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let scene = match &cli.global.scene {
        Some(p) => SceneConfig::from_file(p).with_context(|| format!("reading scene {}", p.display()))?,
        None => SceneConfig::default(),
    };
    if cli.global.classes.is_empty() || cli.global.classes.iter().any(|&c| c > 9) {
        bail!("--classes takes digits between 0 and 9");
    }
    fs::create_dir_all(&cli.global.out)
        .with_context(|| format!("creating output directory {}", cli.global.out.display()))?;
    let run = Run {
        global: cli.global,
        scene,
    };
    match cli.command {
        Command::Train(h) => train(&run, &h),
        Command::Eval { checkpoint } => evaluate(&run, &checkpoint),
        Command::Sweep {
            hyper,
            methods,
            ks,
            ris_sizes,
            distances,
            pt_dbms,
            rhos,
            seeds,
            resume,
        } => sweep(&run, &hyper, methods, ks, ris_sizes, distances, pt_dbms, rhos, seeds, resume),
        Command::SeTable {
            mu,
            pt_dbm,
            ris_sizes,
            checkpoint,
        } => se_table(&run, mu, pt_dbm, &ris_sizes, checkpoint.as_deref()),
        Command::Correlate { checkpoint } => correlate(&run, &checkpoint),
        Command::DumpChannel => dump_channel(&run),
    }
}
