use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::Context;
use clap::{Parser, Subcommand};

use salt::activation::SaltHead;
use salt::harness::checkpoint::Checkpoint;
use salt::harness::{
    generate_phantom, normalize_intensity, train, Model, PhantomConfig, Segmenter, TinyNet, TrainConfig,
};
use salt::io::{load_intensity, load_labels, save_intensity, save_labels};
use salt::metrics::{evaluate_pair, ScoreSet, DEFAULT_ITERATIONS};
use salt::tree::{fixtures, LabelTree, TreeMatrices};
use salt::volume::{Dims, Spacing, Volume};

#[derive(Parser)]
#[command(name = "salt", version, about = "Hierarchical segmentation over label trees")]
struct Cli {
    /// Label tree file (`id<TAB>parent<TAB>name`); the built-in thoracic tree when omitted.
    #[arg(long, global = true)]
    tree: Option<PathBuf>,
    /// Seed for everything random.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Inspect a label tree.
    Tree {
        #[command(subcommand)]
        action: TreeAction,
    },
    /// Train the toy model on synthetic phantoms.
    Train {
        /// `key = value` configuration file.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Extra `key=value` settings applied after the file.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        /// Stop after this many steps.
        #[arg(long)]
        steps: Option<usize>,
        /// Output directory for checkpoint and logs.
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a synthetic phantom image and its labels.
    Phantom {
        /// Intensity volume to write (HU).
        #[arg(long)]
        image: PathBuf,
        /// Leaf label volume to write.
        #[arg(long)]
        labels: PathBuf,
        #[arg(long, default_value = "48x48x48")]
        dims: String,
        #[arg(long, default_value_t = 1.5)]
        spacing: f64,
    },
    /// Segment an intensity volume.
    Infer {
        /// Checkpoint written by `train`.
        #[arg(long)]
        checkpoint: PathBuf,
        /// Intensity volume in HU.
        #[arg(long)]
        input: PathBuf,
        /// Leaf label volume to write.
        #[arg(long)]
        output: PathBuf,
        /// Also write one cumulative probability map per tree node here.
        #[arg(long, value_name = "DIR")]
        dump_node_probs: Option<PathBuf>,
    },
    /// Score predictions against ground truth.
    Eval {
        /// Ground-truth label volume.
        #[arg(long, requires = "pred", conflicts_with = "manifest")]
        gt: Option<PathBuf>,
        /// Predicted label volume.
        #[arg(long, requires = "gt")]
        pred: Option<PathBuf>,
        /// Lines of `gt pred [id]`; relative paths resolve against the manifest.
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Comma-separated node names or ids; every non-root node by default.
        #[arg(long)]
        classes: Option<String>,
        /// Bootstrap iterations for the confidence intervals.
        #[arg(long, default_value_t = DEFAULT_ITERATIONS)]
        bootstrap: usize,
        /// Per-volume scores as `volume,class,dice,nsd`.
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Aggregate scores with confidence intervals.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Time the forward pass and activation.
    Bench {
        #[arg(long, default_value = "48x48x48")]
        dims: String,
        #[arg(long, default_value_t = 5)]
        repetitions: usize,
        /// Benchmark this model instead of a freshly initialised one.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum TreeAction {
    /// Parse and check the tree.
    Validate,
    /// Print the indented hierarchy.
    Show,
    /// Print adjacency, reachability and sibling matrices.
    Matrices,
}

/// Failure classes that map to distinct exit codes.
enum Failure {
    Usage(String),
    Data(anyhow::Error),
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Data(e.into())
    }
}

type CliResult = Result<(), Failure>;

/// Writes to stdout; a closed pipe (`salt … | head`) is not an error.
fn emit(text: &str) -> CliResult {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    match out.write_all(text.as_bytes()).and_then(|()| out.flush()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Data(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> CliResult {
    let tree = load_tree(cli.tree.as_deref())?;
    match cli.command {
        Command::Tree { action } => tree_cmd(&tree, action),
        Command::Train {
            config,
            overrides,
            steps,
            out,
        } => train_cmd(&tree, config.as_deref(), &overrides, steps, cli.seed, &out),
        Command::Phantom {
            image,
            labels,
            dims,
            spacing,
        } => phantom_cmd(&tree, &image, &labels, &dims, spacing, cli.seed.unwrap_or(0)),
        Command::Infer {
            checkpoint,
            input,
            output,
            dump_node_probs,
        } => infer_cmd(&tree, &checkpoint, &input, &output, dump_node_probs.as_deref()),
        Command::Eval {
            gt,
            pred,
            manifest,
            classes,
            bootstrap,
            csv,
            json,
        } => {
            let pairs = match (gt, pred, manifest) {
                (Some(g), Some(p), None) => vec![(g, p, "0".to_string())],
                (None, None, Some(m)) => read_manifest(&m)?,
                _ => return Err(Failure::Usage("give either --gt and --pred, or --manifest".into())),
            };
            let opts = EvalOptions {
                classes,
                bootstrap,
                seed: cli.seed.unwrap_or(0),
                csv,
                json,
            };
            eval_cmd(&tree, &pairs, &opts)
        }
        Command::Bench {
            dims,
            repetitions,
            checkpoint,
        } => bench_cmd(&tree, &dims, repetitions, checkpoint.as_deref(), cli.seed.unwrap_or(0)),
    }
}

fn load_tree(path: Option<&Path>) -> anyhow::Result<LabelTree> {
    match path {
        None => Ok(fixtures::t1()),
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            LabelTree::parse(&text).with_context(|| format!("parsing {}", p.display()))
        }
    }
}

fn parse_dims(text: &str) -> Result<Dims, Failure> {
    let parts: Vec<usize> = text
        .split(['x', 'X', ','])
        .map(|p| p.trim().parse::<usize>())
        .collect::<Result<_, _>>()
        .map_err(|_| Failure::Usage(format!("bad dimensions {text:?}, expected XxYxZ")))?;
    match parts[..] {
        [x, y, z] if x > 0 && y > 0 && z > 0 => Ok(Dims::new(x, y, z)),
        _ => Err(Failure::Usage(format!("bad dimensions {text:?}, expected XxYxZ"))),
    }
}

fn tree_cmd(tree: &LabelTree, action: TreeAction) -> CliResult {
    match action {
        TreeAction::Validate => emit(&format!(
            "ok: {} nodes, {} leaves, height {}\n",
            tree.len(),
            tree.leaves().count(),
            tree.height()
        )),
        TreeAction::Show => emit(&tree.to_string()),
        TreeAction::Matrices => {
            let m = TreeMatrices::new(tree);
            emit(&format!(
                "# adjacency\n{}\n# reachability\n{}\n# sibling\n{}",
                m.adjacency, m.reachability, m.sibling
            ))
        }
    }
}

fn train_cmd(
    tree: &LabelTree,
    config: Option<&Path>,
    overrides: &[String],
    steps: Option<usize>,
    seed: Option<u64>,
    out: &Path,
) -> CliResult {
    let mut text = match config {
        Some(p) => fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?,
        None => String::new(),
    };
    for o in overrides {
        if !o.contains('=') {
            return Err(Failure::Usage(format!("--set expects KEY=VALUE, got {o:?}")));
        }
        text.push('\n');
        text.push_str(o);
    }
    let mut cfg = TrainConfig::parse(&text).context("parsing training configuration")?;
    if let Some(s) = steps {
        cfg.max_steps = Some(s);
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    fs::write(out.join("config.txt"), cfg.to_text())?;

    eprintln!(
        "training {} steps on {} phantoms",
        cfg.steps_to_run(),
        cfg.train_volumes
    );
    let started = Instant::now();
    let outcome = train(&cfg, tree)?;
    for v in &outcome.validation {
        eprintln!(
            "epoch {:>3} step {:>5}  mean leaf dice {:.4}",
            v.epoch, v.step, v.mean_leaf_dice
        );
    }
    eprintln!("finished in {:.1}s", started.elapsed().as_secs_f64());

    fs::write(out.join("train_log.csv"), outcome.losses_csv())?;
    let mut val = String::from("epoch,step,mean_leaf_dice\n");
    for v in &outcome.validation {
        val.push_str(&format!("{},{},{}\n", v.epoch, v.step, v.mean_leaf_dice));
    }
    fs::write(out.join("validation.csv"), val)?;
    Checkpoint::new(outcome.model, tree).save(out.join("model.ckpt"))?;
    emit(&format!("{}\n", out.join("model.ckpt").display()))
}

fn phantom_cmd(tree: &LabelTree, image: &Path, labels: &Path, dims: &str, spacing: f64, seed: u64) -> CliResult {
    let config = PhantomConfig {
        dims: parse_dims(dims)?,
        spacing: Spacing::isotropic(spacing),
        ..PhantomConfig::default()
    };
    let p = generate_phantom(&config, tree, seed)?;
    save_intensity(image, &p.intensity)?;
    save_labels(labels, &p.labels)?;
    Ok(())
}

fn infer_cmd(tree: &LabelTree, checkpoint: &Path, input: &Path, output: &Path, dump: Option<&Path>) -> CliResult {
    let ckpt = Checkpoint::load(checkpoint).with_context(|| format!("loading {}", checkpoint.display()))?;
    ckpt.check_tree(tree)?;
    let image = load_intensity(input).with_context(|| format!("loading {}", input.display()))?;
    let seg = Segmenter::new(ckpt.model, tree.clone())?;
    let (labels, probs) = seg.predict(&image)?;
    save_labels(output, &labels)?;
    if let Some(dir) = dump {
        fs::create_dir_all(dir)?;
        let lin = probs.to_linear();
        for node in 0..tree.len() {
            let map = lin.channel_volume(node, image.spacing());
            save_intensity(dir.join(format!("node_{node:03}_{}.saltvol", tree.name(node))), &map)?;
        }
    }
    Ok(())
}

fn read_manifest(path: &Path) -> Result<Vec<(PathBuf, PathBuf, String)>, Failure> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut pairs = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let (gt, pred) = match fields[..] {
            [g, p] | [g, p, _] => (base.join(g), base.join(p)),
            _ => {
                return Err(Failure::Data(anyhow::anyhow!(
                    "{}:{}: expected `gt pred [id]`",
                    path.display(),
                    idx + 1
                )))
            }
        };
        let id = fields.get(2).map(|s| s.to_string()).unwrap_or_else(|| {
            pred.file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| pairs.len().to_string())
        });
        pairs.push((gt, pred, id));
    }
    if pairs.is_empty() {
        return Err(Failure::Data(anyhow::anyhow!("{} lists no volumes", path.display())));
    }
    Ok(pairs)
}

struct EvalOptions {
    classes: Option<String>,
    bootstrap: usize,
    seed: u64,
    csv: Option<PathBuf>,
    json: Option<PathBuf>,
}

fn eval_cmd(tree: &LabelTree, pairs: &[(PathBuf, PathBuf, String)], opts: &EvalOptions) -> CliResult {
    let classes: Vec<usize> = match &opts.classes {
        None => (1..tree.len()).collect(),
        Some(list) => list
            .split(',')
            .map(|s| tree.resolve(s.trim()))
            .collect::<salt::Result<_>>()?,
    };
    if classes.is_empty() {
        return Err(Failure::Usage("no classes to evaluate".into()));
    }
    if opts.bootstrap == 0 {
        return Err(Failure::Usage("--bootstrap must be positive".into()));
    }
    let mut sets = Vec::with_capacity(pairs.len());
    for (gt_path, pred_path, id) in pairs {
        let gt = load_labels(gt_path).with_context(|| format!("loading {}", gt_path.display()))?;
        let pred = load_labels(pred_path).with_context(|| format!("loading {}", pred_path.display()))?;
        let set = evaluate_pair(&gt, &pred, tree, &classes, gt.spacing()).with_context(|| format!("scoring {id}"))?;
        sets.push(set.with_volume_id(id.clone()));
    }
    let scores = ScoreSet::concat(sets)?;
    let summary = scores.summary(opts.bootstrap, opts.seed)?;
    match &opts.csv {
        Some(p) => fs::write(p, scores.to_csv())?,
        None => emit(&scores.to_csv())?,
    }
    match &opts.json {
        Some(p) => fs::write(p, summary.to_json())?,
        None => emit(&(summary.to_json() + "\n"))?,
    }
    Ok(())
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

fn bench_cmd(tree: &LabelTree, dims: &str, repetitions: usize, checkpoint: Option<&Path>, seed: u64) -> CliResult {
    let dims = parse_dims(dims)?;
    if repetitions == 0 {
        return Err(Failure::Usage("--repetitions must be positive".into()));
    }
    let model = match checkpoint {
        Some(p) => {
            let ckpt = Checkpoint::load(p).with_context(|| format!("loading {}", p.display()))?;
            ckpt.check_tree(tree)?;
            ckpt.model
        }
        None => Model::F32(TinyNet::with_plan(&TrainConfig::default().plan(tree.len()), seed)),
    };
    let head = SaltHead::new(tree.clone());
    let image = normalize_intensity(&Volume::from_fn(dims, Spacing::default(), |x, y, z| {
        ((x * 31 + y * 17 + z * 7) % 2048) as f64 - 1024.0
    }));

    emit("rep,network_ms,activation_ms,decode_ms,total_ms\n")?;
    let mut totals = Vec::with_capacity(repetitions);
    for rep in 0..repetitions {
        let t0 = Instant::now();
        let logits = model.logits(&image)?;
        let t1 = Instant::now();
        let probs = head.forward(&logits)?;
        let t2 = Instant::now();
        let labels = salt::activation::predict_labels(&probs, tree)?;
        let t3 = Instant::now();
        std::hint::black_box(labels);
        let ms = |a: Instant, b: Instant| (b - a).as_secs_f64() * 1e3;
        let total = ms(t0, t3);
        emit(&format!(
            "{rep},{:.3},{:.3},{:.3},{:.3}\n",
            ms(t0, t1),
            ms(t1, t2),
            ms(t2, t3),
            total
        ))?;
        totals.push(total);
    }
    let med = median(&mut totals).max(f64::MIN_POSITIVE);
    eprintln!(
        "{dims}, {} nodes: median {med:.3} ms, {:.0} voxels/s, {:.3} ms/slice",
        tree.len(),
        dims.len() as f64 / (med / 1e3),
        med / dims.z as f64
    );
    Ok(())
}
