//! The `stochnet` commands. Each takes a parsed [`RunConfig`] and writes
//! its report to the given stream; failures map to exit codes
//! 2 (config), 3 (data or checkpoint), 4 (environment) or 1 (anything else).

use std::io::Write;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::config::{ConfigError, RunConfig};
use crate::data::{load_images, load_vectors, split, synth_blob_task, DataError, Example, ImageDataset, ImageExample, Pnm};
use crate::evaluate::{evaluate, Decision, Metric};
use crate::inference::{GibbsConfig, InferenceError};
use crate::learning::{train, TrainConfig, TrainError, TrainLog, TrainMode};
use crate::model::{checkpoint, Init, InputGrid, LayerSpec, Network, NetworkSpec, UnitKind};
use crate::oracle::{check_network, random_example, run_suite, SuiteConfig};
use crate::rng::RngStream;
use crate::segment::{clamps_from_scribble, decision_pgm, degradation_sweep, marginal_pgm, segment_image, Degradation};
use crate::service::{serve, AppState, ServiceSettings};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(#[from] ConfigError),
    #[error("data error: {0}")]
    Data(String),
    #[error("environment error: {0}")]
    Environment(String),
    #[error("{0}")]
    Failed(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Environment(_) => 4,
            CliError::Failed(_) => 1,
        }
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<checkpoint::CheckpointError> for CliError {
    fn from(e: checkpoint::CheckpointError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<InferenceError> for CliError {
    fn from(e: InferenceError) -> Self {
        CliError::Failed(e.to_string())
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Config(m) => CliError::Config(RunConfig::invalid("train", m)),
            other => CliError::Failed(other.to_string()),
        }
    }
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::Environment(format!("{}: {e}", path.display()))
}

/// Network described by `network.input` (`N` or `HxWxC`) and
/// `network.layers` (layer specs separated by `;`).
pub fn network_spec(cfg: &RunConfig) -> Result<NetworkSpec, CliError> {
    let input = cfg.raw("network.input").ok_or_else(|| ConfigError::Missing("network.input".into()))?;
    let layers = cfg
        .raw("network.layers")
        .ok_or_else(|| ConfigError::Missing("network.layers".into()))?
        .split(';')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<LayerSpec>().map_err(|e| RunConfig::invalid("network.layers", e)))
        .collect::<Result<Vec<_>, _>>()?;
    let spec = match input.parse::<usize>() {
        Ok(n) => NetworkSpec::new(n, layers),
        Err(_) => {
            let grid: InputGrid = input.parse().map_err(|e| RunConfig::invalid("network.input", e))?;
            NetworkSpec::with_input_grid(grid, layers)
        }
    };
    spec.validate().map_err(|e| RunConfig::invalid("network.layers", e))?;
    Ok(spec)
}

fn build_network(cfg: &RunConfig, default_seed: u64) -> Result<Network, CliError> {
    let spec = network_spec(cfg)?;
    let init = Init {
        scale: cfg.get_or("network.init_scale", Init::default().scale)?,
        seed: cfg.get_or("network.init_seed", default_seed)?,
    };
    Network::new(spec, init).map_err(|e| RunConfig::invalid("network", e).into())
}

pub fn train_config(cfg: &RunConfig, mode: TrainMode) -> Result<TrainConfig, CliError> {
    let d = TrainConfig::default();
    let tc = TrainConfig {
        mode,
        step_size: cfg.get_or("train.step_size", d.step_size)?,
        iterations: cfg.get_or("train.iterations", d.iterations)?,
        batch_size: cfg.get_or("train.batch_size", d.batch_size)?,
        seed: cfg.get_or("train.seed", d.seed)?,
        eval_period: cfg.get_or("train.eval_period", d.eval_period)?,
        momentum: cfg.get_or("train.momentum", d.momentum)?,
        weight_decay: cfg.get_or("train.weight_decay", d.weight_decay)?,
        decision_samples: cfg.get_or("train.decision_samples", d.decision_samples)?,
        bound_samples: cfg.get_or("train.bound_samples", d.bound_samples)?,
    };
    tc.validate()?;
    Ok(tc)
}

/// Training and test examples plus the task's natural metric.
pub struct Task {
    pub train: Vec<Example>,
    pub test: Vec<Example>,
    pub metric: Metric,
}

fn split_or_all<T: Clone>(cfg: &RunConfig, items: Vec<T>, default_count: Option<usize>) -> Result<(Vec<T>, Vec<T>), CliError> {
    match cfg.get::<usize>("data.train_count")?.or(default_count) {
        Some(n) => {
            let seed = cfg.get_or("data.split_seed", cfg.get_or("data.seed", 0u64)?)?;
            Ok(split(&items, n, seed)?)
        }
        None => Ok((items, Vec::new())),
    }
}

fn image_task(cfg: &RunConfig) -> Result<(ImageDataset, ImageDataset), CliError> {
    match cfg.raw("data.kind").unwrap_or("blobs") {
        "blobs" => {
            let data = synth_blob_task(
                cfg.get_or("data.count", 100usize)?,
                cfg.get_or("data.height", 16usize)?,
                cfg.get_or("data.width", 16usize)?,
                cfg.get_or("data.seed", 0u64)?,
            );
            if data.is_empty() {
                return Err(RunConfig::invalid("data.count", "must be positive").into());
            }
            let (tr, te) = split_or_all(cfg, data.examples.clone(), Some(20.min(data.len().saturating_sub(1)).max(1)))?;
            Ok((data.subset(tr), data.subset(te)))
        }
        "images" => {
            let train = load_images(&cfg.require_path("data.train")?)?;
            match cfg.path("data.test") {
                Some(p) => Ok((train, load_images(&p)?)),
                None => {
                    let (tr, te) = split_or_all(cfg, train.examples.clone(), None)?;
                    Ok((train.subset(tr), train.subset(te)))
                }
            }
        }
        other => Err(RunConfig::invalid("data.kind", format!("{other:?} is not an image task")).into()),
    }
}

pub fn load_task(cfg: &RunConfig, output: UnitKind) -> Result<Task, CliError> {
    let kind = cfg.raw("data.kind").unwrap_or("blobs");
    let metric_default = if kind == "vectors" { Metric::Accuracy } else { Metric::Iou };
    let metric = cfg.get_or("train.metric", metric_default)?;
    match kind {
        "vectors" => {
            let outputs = cfg.get_or("data.outputs", 1usize)?;
            let header = cfg.get_or("data.header", false)?;
            let train = load_vectors(&cfg.require_path("data.train")?, outputs, header)?;
            let (train, test) = match cfg.path("data.test") {
                Some(p) => (train.examples, load_vectors(&p, outputs, header)?.examples),
                None => split_or_all(cfg, train.examples, None)?,
            };
            for ex in train.iter().chain(&test) {
                if ex.y.iter().any(|&v| output.event_for_value(v).is_none()) {
                    return Err(CliError::Data(format!("target {:?} is not a legal {output} event", ex.y)));
                }
            }
            Ok(Task { train, test, metric })
        }
        "blobs" | "images" => {
            let (tr, te) = image_task(cfg)?;
            Ok(Task {
                train: tr.to_examples(output),
                test: te.to_examples(output),
                metric,
            })
        }
        other => Err(RunConfig::invalid("data.kind", format!("unknown kind {other:?} (vectors|images|blobs)")).into()),
    }
}

fn output_dir(cfg: &RunConfig, key: &str) -> Result<PathBuf, CliError> {
    let dir = cfg.require_path(key)?;
    std::fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    Ok(dir)
}

fn write_log(log: &TrainLog, path: &Path) -> Result<(), CliError> {
    let file = std::fs::File::create(path).map_err(io_err(path))?;
    log.write_csv(file).map_err(|e| CliError::Environment(format!("{}: {e}", path.display())))
}

fn report_row(out: &mut dyn Write, log: &TrainLog, metric: Metric) -> std::io::Result<()> {
    if let Some(r) = log.last() {
        write!(out, "{} iter {} train_{metric} {:.4}", r.mode, r.iter, r.train_metric)?;
        if let Some(t) = r.test_metric {
            write!(out, " test_{metric} {t:.4} gap {:.4}", r.train_metric - t)?;
        }
        writeln!(out, " lower_bound {:.4}", r.lower_bound_estimate)?;
    }
    Ok(())
}

/// `train`: fits the configured network and writes checkpoints and metric
/// logs to `output.dir`. Mode `paired` trains EBP and BN from one init.
pub fn cmd_train(cfg: &RunConfig, out: &mut dyn Write) -> Result<(), CliError> {
    let mode_raw = cfg.raw("train.mode").unwrap_or("ebp");
    let modes: Vec<TrainMode> = if mode_raw.eq_ignore_ascii_case("paired") {
        vec![TrainMode::Ebp, TrainMode::Bn]
    } else {
        vec![mode_raw.parse().map_err(|e| RunConfig::invalid("train.mode", e))?]
    };
    let seed = cfg.get_or("train.seed", 0u64)?;
    let init = build_network(cfg, seed)?;
    let task = load_task(cfg, init.kind(init.output_layer()))?;
    let dir = output_dir(cfg, "output.dir")?;
    let paired = modes.len() > 1;
    for mode in modes {
        let tc = train_config(cfg, mode)?;
        let mut net = init.clone();
        let log = train(&mut net, &task.train, &task.test, task.metric, &tc)?;
        let stem = if paired { mode.to_string().to_lowercase() } else { "model".into() };
        let ckpt = dir.join(format!("{stem}.ckpt"));
        checkpoint::save(&net, &ckpt).map_err(|e| CliError::Environment(e.to_string()))?;
        let metrics = dir.join(if paired { format!("metrics_{stem}.csv") } else { "metrics.csv".into() });
        write_log(&log, &metrics)?;
        report_row(out, &log, task.metric).map_err(io_err(&dir))?;
        writeln!(out, "wrote {} and {}", ckpt.display(), metrics.display()).map_err(io_err(&dir))?;
    }
    Ok(())
}

fn decision(cfg: &RunConfig, key: &str, samples_key: &str, default: &str) -> Result<Decision, CliError> {
    match cfg.raw(key).unwrap_or(default) {
        "deterministic" => Ok(Decision::Deterministic),
        "sampled" => Ok(Decision::Sampled {
            samples: cfg.get_or(samples_key, 1000usize)?.max(1),
        }),
        other => Err(RunConfig::invalid(key, format!("{other:?} (deterministic|sampled)")).into()),
    }
}

/// `eval`: train and test metric of a checkpoint and their gap.
pub fn cmd_eval(cfg: &RunConfig, out: &mut dyn Write) -> Result<(), CliError> {
    let net = checkpoint::load(cfg.require_path("eval.checkpoint")?)?;
    let dec = decision(cfg, "eval.decision", "eval.samples", "deterministic")?;
    let seed = cfg.get_or("eval.seed", 0u64)?;
    let task = load_task(cfg, net.kind(net.output_layer()))?;
    let m = task.metric;
    let train_m = evaluate(&net, &task.train, m, dec, seed)?;
    let w = |e| CliError::Environment(format!("stdout: {e}"));
    writeln!(out, "train_{m} {train_m:.6}").map_err(w)?;
    if !task.test.is_empty() {
        let test_m = evaluate(&net, &task.test, m, dec, seed ^ 1)?;
        writeln!(out, "test_{m} {test_m:.6}").map_err(w)?;
        writeln!(out, "gap {:.6}", train_m - test_m).map_err(w)?;
    }
    Ok(())
}

/// `oracle`: the enumeration suite, or checks on the configured network
/// when a `[network]` section is present.
pub fn cmd_oracle(cfg: &RunConfig, out: &mut dyn Write) -> Result<bool, CliError> {
    let d = SuiteConfig::default();
    let seed = cfg.get_or("oracle.seed", d.seed)?;
    let mc_samples = cfg.get_or("oracle.mc_samples", d.mc_samples)?;
    let results = if cfg.has("network.layers") {
        let net = build_network(cfg, seed)?;
        let ex = random_example(&net, &mut RngStream::new(seed));
        check_network(&net, &ex, mc_samples, seed).map_err(|e| match e {
            InferenceError::StateSpaceTooLarge { .. } => CliError::Config(RunConfig::invalid("network", e)),
            other => other.into(),
        })?
    } else {
        run_suite(&SuiteConfig {
            seed,
            nets: cfg.get_or("oracle.nets", d.nets)?,
            mc_samples,
            gibbs: GibbsConfig {
                burn_in: cfg.get_or("oracle.burn_in", d.gibbs.burn_in)?,
                sweeps: cfg.get_or("oracle.sweeps", d.gibbs.sweeps)?,
                thinning: 1,
            },
            jensen_nets: cfg.get_or("oracle.jensen_nets", d.jensen_nets)?,
            fd_step: d.fd_step,
        })?
    };
    for r in &results {
        writeln!(out, "{r}").map_err(|e| CliError::Environment(e.to_string()))?;
    }
    Ok(results.iter().all(|r| r.passed))
}

fn parse_levels(cfg: &RunConfig) -> Result<Vec<Vec<Degradation>>, CliError> {
    let mut sweeps = Vec::new();
    let noise: Vec<f64> = cfg.list("segment.noise")?;
    if noise.iter().any(|s| !s.is_finite() || *s < 0.0) {
        return Err(RunConfig::invalid("segment.noise", "sigmas must be non-negative").into());
    }
    if !noise.is_empty() {
        sweeps.push(noise.into_iter().map(Degradation::Noise).collect());
    }
    let blur: Vec<usize> = cfg.list("segment.blur")?;
    if !blur.is_empty() {
        sweeps.push(blur.into_iter().map(Degradation::Blur).collect());
    }
    Ok(sweeps)
}

fn segment_inputs(cfg: &RunConfig, net: &Network) -> Result<(ImageDataset, bool), CliError> {
    let grid = net.spec().input_grid.ok_or_else(|| CliError::Data("checkpoint has no input image grid".into()))?;
    let (data, masks) = if let Some(dir) = cfg.path("segment.images") {
        (load_images(&dir)?, true)
    } else if !cfg.has("segment.image") && cfg.has("data.kind") {
        // Held-out images of the training task.
        (image_task(cfg)?.1, true)
    } else {
        let path = cfg.require_path("segment.image")?;
        let img = Pnm::load(&path)?;
        let (mask, has_mask) = match cfg.path("segment.mask") {
            Some(m) => (Pnm::load(&m)?, true),
            None => (Pnm::gray(img.width, img.height, vec![0; img.width * img.height]), false),
        };
        if (mask.width, mask.height) != (img.width, img.height) {
            return Err(DataError::SizeMismatch {
                first: path,
                second: cfg.require_path("segment.mask")?,
            }
            .into());
        }
        let name = path.file_stem().unwrap_or_default().to_string_lossy().into_owned();
        let example = ImageExample::from_pnm(name, &img, &mask);
        (
            ImageDataset {
                height: img.height,
                width: img.width,
                examples: vec![example],
            },
            has_mask,
        )
    };
    if (data.height, data.width) != (grid.height, grid.width) {
        return Err(CliError::Data(format!(
            "images are {}x{}, model expects {}x{}",
            data.height, data.width, grid.height, grid.width
        )));
    }
    Ok((data, masks))
}

/// `segment`: marginal and decision images, optionally with a scribble
/// clamp and with noise/blur sweeps (one marginal image per level).
pub fn cmd_segment(cfg: &RunConfig, out: &mut dyn Write) -> Result<(), CliError> {
    let net = checkpoint::load(cfg.require_path("segment.checkpoint")?)?;
    let dec = decision(cfg, "segment.decision", "segment.samples", "sampled")?;
    let seed = cfg.get_or("segment.seed", 0u64)?;
    let d = GibbsConfig::default();
    let gibbs = GibbsConfig {
        burn_in: cfg.get_or("segment.burn_in", d.burn_in)?,
        sweeps: cfg.get_or("segment.sweeps", d.sweeps)?,
        thinning: cfg.get_or("segment.thinning", d.thinning)?.max(1),
    };
    let sweeps = parse_levels(cfg)?;
    let (data, has_masks) = segment_inputs(cfg, &net)?;
    let clamp = match cfg.path("segment.scribble") {
        Some(p) => {
            if data.len() != 1 {
                return Err(RunConfig::invalid("segment.scribble", "needs a single segment.image").into());
            }
            let s = Pnm::load(&p)?;
            if (s.width, s.height, s.channels) != (data.width, data.height, 1) {
                return Err(CliError::Data(format!("{}: scribble must be a {}x{} PGM", p.display(), data.width, data.height)));
            }
            Some(clamps_from_scribble(&s, net.spec().output().kind))
        }
        None => None,
    };
    let dir = output_dir(cfg, "segment.out")?;
    let w = |e: std::io::Error| CliError::Environment(e.to_string());
    for (i, ex) in data.examples.iter().enumerate() {
        let mut rng = RngStream::new(seed).split(i as u64);
        let rng = if data.len() == 1 { &mut RngStream::new(seed) } else { &mut rng };
        let field = segment_image(&net, &ex.image, clamp.as_ref(), dec, gibbs, rng)?;
        marginal_pgm(&field).save(&dir.join(format!("{}_marginal.pgm", ex.name)))?;
        decision_pgm(&field).save(&dir.join(format!("{}_decision.pgm", ex.name)))?;
    }
    writeln!(out, "segmented {} image(s) into {}", data.len(), dir.display()).map_err(w)?;
    if sweeps.is_empty() {
        return Ok(());
    }
    let mut csv = String::from("degradation,level,mean_iou\n");
    for levels in &sweeps {
        let result = degradation_sweep(&net, &data.examples, data.height, data.width, levels, dec, seed)?;
        for lvl in &result {
            for (ex, field) in data.examples.iter().zip(&lvl.fields) {
                marginal_pgm(field).save(&dir.join(format!("{}_{}.pgm", ex.name, lvl.level.tag())))?;
            }
            let (kind, value) = match lvl.level {
                Degradation::Noise(s) => ("noise", s.to_string()),
                Degradation::Blur(r) => ("blur", r.to_string()),
            };
            if has_masks {
                csv += &format!("{kind},{value},{:.6}\n", lvl.mean_iou);
                writeln!(out, "{kind} {value} mean_iou {:.4}", lvl.mean_iou).map_err(w)?;
            }
        }
    }
    if has_masks {
        let path = dir.join("sweep.csv");
        std::fs::write(&path, csv).map_err(io_err(&path))?;
    }
    Ok(())
}

/// Settings for `serve`, with the model and optional dataset.
pub fn service_state(cfg: &RunConfig) -> Result<std::sync::Arc<AppState>, CliError> {
    let model = cfg.path("serve.checkpoint").map(checkpoint::load).transpose()?;
    let dataset = if cfg.has("data.kind") { Some(image_task(cfg)?.0) } else { None };
    let d = ServiceSettings::default();
    let settings = ServiceSettings {
        gibbs: GibbsConfig {
            burn_in: cfg.get_or("serve.burn_in", d.gibbs.burn_in)?,
            sweeps: cfg.get_or("serve.sweeps", d.gibbs.sweeps)?,
            thinning: cfg.get_or("serve.thinning", d.gibbs.thinning)?.max(1),
        },
        preview_samples: cfg.get_or("serve.preview_samples", d.preview_samples)?.max(1),
        seed: cfg.get_or("serve.seed", d.seed)?,
    };
    Ok(AppState::new(model, dataset, settings))
}

/// `serve`: binds `serve.addr` and serves the session API until Ctrl-C.
pub fn cmd_serve(cfg: &RunConfig, out: &mut dyn Write) -> Result<(), CliError> {
    let addr = cfg.raw("serve.addr").unwrap_or("127.0.0.1:8080").to_string();
    let state = service_state(cfg)?;
    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| CliError::Environment(e.to_string()))?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind(&addr)
            .await
            .map_err(|e| CliError::Environment(format!("cannot bind {addr}: {e}")))?;
        let local = listener.local_addr().map_err(|e| CliError::Environment(e.to_string()))?;
        writeln!(out, "listening on http://{local}").map_err(|e| CliError::Environment(e.to_string()))?;
        out.flush().ok();
        serve(listener, state).await.map_err(|e| CliError::Environment(e.to_string()))
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Train,
    Eval,
    Oracle,
    Segment,
    Serve,
}

/// Loads the config, applies overrides and runs one command. Returns the
/// process exit code; errors are reported on `err`.
pub fn run(command: Command, config: &Path, sets: &[String], out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let result = (|| {
        let mut cfg = RunConfig::load(config).map_err(|e| match e {
            ConfigError::Io { .. } => CliError::Data(e.to_string()),
            other => CliError::Config(other),
        })?;
        for s in sets {
            cfg.set(s)?;
        }
        match command {
            Command::Train => cmd_train(&cfg, out),
            Command::Eval => cmd_eval(&cfg, out),
            Command::Oracle => match cmd_oracle(&cfg, out)? {
                true => Ok(()),
                false => Err(CliError::Failed("oracle checks failed".into())),
            },
            Command::Segment => cmd_segment(&cfg, out),
            Command::Serve => cmd_serve(&cfg, out),
        }
    })();
    match result {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "stochnet: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(text: &str) -> RunConfig {
        RunConfig::parse(text, Path::new(".")).unwrap()
    }

    #[test]
    fn spec_from_config() {
        let c = cfg("[network]\ninput = 2\nlayers = tanh 4 dense 0; sigmoid 1 dense 1\n");
        let s = network_spec(&c).unwrap();
        assert_eq!(s.layers.len(), 2);
        let c = cfg("[network]\ninput = 4x4x3\nlayers = sigmoid 16 grid 4x4 local depth=1 radius=1 image\n");
        assert!(network_spec(&c).unwrap().input_grid.is_some());
    }

    #[test]
    fn invalid_spec_is_config_error() {
        let c = cfg("[network]\ninput = 2\nlayers = sigmoid 1 dense 2\n");
        assert_eq!(network_spec(&c).unwrap_err().exit_code(), 2);
        let c = cfg("[network]\ninput = 2\nlayers = relusum:3 1 dense 0\n");
        assert_eq!(network_spec(&c).unwrap_err().exit_code(), 2);
    }

    #[test]
    fn train_config_defaults_and_errors() {
        let tc = train_config(&cfg("[train]\nstep_size = 0.3\n"), TrainMode::Bn).unwrap();
        assert_eq!(tc.step_size, 0.3);
        assert_eq!(tc.mode, TrainMode::Bn);
        let e = train_config(&cfg("[train]\nbatch_size = 0\n"), TrainMode::Ebp).unwrap_err();
        assert_eq!(e.exit_code(), 2);
    }

    #[test]
    fn blob_task_defaults_split() {
        let t = load_task(&cfg("[data]\nkind = blobs\ncount = 12\nheight = 4\nwidth = 4\n"), UnitKind::Sigmoid).unwrap();
        assert_eq!((t.train.len(), t.test.len()), (11, 1));
        assert_eq!(t.metric, Metric::Iou);
    }
}
