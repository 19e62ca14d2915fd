use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use conceptual_vae::analysis::{
    cluster_rows, hash_inputs, hstack, read_ppm, traverse, write_clusters_csv, write_metrics_csv, write_ppm,
    RunManifest,
};
use conceptual_vae::classifier::{evaluate_accuracy, Accuracy, RangeOracle};
use conceptual_vae::gaussian::Gaussian1d;
use conceptual_vae::profile::Profile;
use conceptual_vae::sprite::{
    generate_dataset, read_dataset, write_dataset, Dataset, DatasetConfig, Domain, Image, Split, SplitKind, Variant,
    Vocabulary,
};
use conceptual_vae::tensor::{read_checkpoint, write_checkpoint, Checkpoint};
use conceptual_vae::vae::{ArchConfig, ConceptualPriors, Model, Objective, TrainConfig, Trainer, VaeError};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::CliError;
use crate::{
    ClassifyArgs, Cli, ClustersArgs, Command, GenerateArgs, ObjectiveArg, ProfileArg, SplitArg, TrainArgs,
    TraverseArgs, VariantArg,
};

type Result<T> = std::result::Result<T, CliError>;

pub const MODEL_FILE: &str = "model.ckpt";
pub const STATE_FILE: &str = "state.ckpt";
pub const NONFINITE_FILE: &str = "nonfinite.ckpt";
pub const METRICS_FILE: &str = "metrics.csv";
pub const ACCURACY_FILE: &str = "accuracy.csv";
pub const CLUSTERS_FILE: &str = "clusters.csv";
pub const TRAVERSE_FILE: &str = "traverse.ppm";

pub fn run(cli: &Cli) -> Result<()> {
    let name = match &cli.command {
        Command::Generate(_) => "generate",
        Command::Train(_) => "train",
        Command::Classify(_) => "classify",
        Command::Clusters(_) => "clusters",
        Command::Traverse(_) => "traverse",
    };
    let out = cli.out.clone().unwrap_or_else(|| PathBuf::from(format!("cvae-{name}")));
    fs::create_dir_all(&out)?;
    let ctx = Ctx { cli, out, name };
    match &cli.command {
        Command::Generate(a) => generate(&ctx, a),
        Command::Train(a) => train(&ctx, a),
        Command::Classify(a) => classify(&ctx, a),
        Command::Clusters(a) => clusters(&ctx, a),
        Command::Traverse(a) => traverse_cmd(&ctx, a),
    }
}

struct Ctx<'a> {
    cli: &'a Cli,
    out: PathBuf,
    name: &'static str,
}

impl Ctx<'_> {
    fn profile(&self) -> Profile {
        match self.cli.profile {
            ProfileArg::Paper => Profile::Paper,
            ProfileArg::Desk => Profile::Desk,
        }
    }

    fn path(&self, file: &str) -> PathBuf {
        self.out.join(file)
    }

    fn manifest(&self, inputs: &[&Path], outputs: &[&str], config: String) -> Result<()> {
        RunManifest {
            command: self.name.to_string(),
            seed: self.cli.seed,
            deterministic: self.cli.deterministic,
            input_hash: hash_inputs(inputs)?,
            inputs: inputs.iter().map(|p| p.display().to_string()).collect(),
            outputs: outputs.iter().map(|s| s.to_string()).collect(),
            config,
        }
        .write(&self.out)?;
        Ok(())
    }
}

fn to_toml(v: &impl Serialize) -> String {
    toml::to_string(v).expect("configs serialise to TOML")
}

/// Overlays `user` onto `base` key by key, recursing into tables.
fn merge(base: &mut toml::Table, user: toml::Table) {
    for (k, v) in user {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(u)) => merge(b, u),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

fn overlay<T: Serialize + DeserializeOwned>(base: &T, user: Option<toml::Table>, what: &str) -> Result<T> {
    let mut table = toml::Table::try_from(base).expect("configs serialise to TOML tables");
    if let Some(u) = user {
        merge(&mut table, u);
    }
    table.try_into().map_err(|e: toml::de::Error| CliError::Config(format!("{what}: {e}")))
}

fn read_table(path: &Path) -> Result<toml::Table> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn take_table(table: &mut toml::Table, key: &str) -> Result<Option<toml::Table>> {
    match table.remove(key) {
        None => Ok(None),
        Some(toml::Value::Table(t)) => Ok(Some(t)),
        Some(_) => Err(CliError::Config(format!("`{key}` must be a table"))),
    }
}

fn split_kind(s: SplitArg) -> SplitKind {
    match s {
        SplitArg::Train => SplitKind::Train,
        SplitArg::Dev => SplitKind::Dev,
        SplitArg::Test => SplitKind::Test,
    }
}

fn load_dataset(dir: &Path) -> Result<Dataset> {
    read_dataset(dir).map_err(|e| CliError::Config(format!("{}: {e}", dir.display())))
}

fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let file = File::open(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    Ok(read_checkpoint(std::io::BufReader::new(file))?)
}

fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_checkpoint(&mut w, ckpt)?;
    w.into_inner().map_err(|e| e.into_error())?.sync_all()?;
    Ok(())
}

/// Loads a model and checks it against the dataset it will be applied to.
fn load_model(path: &Path, data: &DatasetConfig) -> Result<Model> {
    let model = Model::from_checkpoint(&load_checkpoint(path)?)?;
    check_compatible(&model, data)?;
    Ok(model)
}

fn check_compatible(model: &Model, data: &DatasetConfig) -> Result<()> {
    if model.arch().image_size != data.image_size {
        return Err(CliError::Incompatible(format!(
            "model expects {0}x{0} images, dataset has {1}x{1}",
            model.arch().image_size,
            data.image_size
        )));
    }
    if model.vocabulary() != &data.vocabulary() {
        return Err(CliError::Incompatible("model and dataset vocabularies differ".into()));
    }
    Ok(())
}

fn generate(ctx: &Ctx, a: &GenerateArgs) -> Result<()> {
    let variant = match a.variant {
        Some(VariantArg::Rainbow) => Variant::Rainbow,
        _ => Variant::Main,
    };
    let user = a.config.as_deref().map(read_table).transpose()?;
    let mut config = overlay(&ctx.profile().dataset(variant), user, "dataset config")?;
    config.seed = ctx.cli.seed;
    if let Some(v) = a.any {
        config.any_labels = v;
    }
    for (field, v) in [(&mut config.train, a.train), (&mut config.dev, a.dev), (&mut config.test, a.test)] {
        if let Some(v) = v {
            *field = v;
        }
    }
    if let Some(s) = a.image_size {
        config.image_size = s;
    }
    let dataset = generate_dataset(&config)?;
    write_dataset(&ctx.out, &dataset)?;
    for kind in SplitKind::ALL {
        let split = dataset.split(kind);
        println!("{:<5} {:>6} instances, {} clamped", kind.name(), split.len(), split.warnings.len());
    }
    let inputs: Vec<&Path> = a.config.as_deref().into_iter().collect();
    ctx.manifest(&inputs, &["train", "dev", "test"], to_toml(&config))
}

#[derive(Serialize)]
struct EffectiveTrain<'a> {
    arch: &'a ArchConfig,
    train: &'a TrainConfig,
}

fn train(ctx: &Ctx, a: &TrainArgs) -> Result<()> {
    let data = load_dataset(&a.data)?;
    let has_any = data.train.instances.iter().any(|i| !i.label.is_full());
    let objective = match a.variant {
        Some(ObjectiveArg::Vanilla) => Objective::Vanilla,
        Some(ObjectiveArg::Conceptual) => Objective::Conceptual,
        Some(ObjectiveArg::Any) => Objective::Any,
        None if has_any => Objective::Any,
        None => Objective::Conceptual,
    };
    if objective == Objective::Conceptual && has_any {
        return Err(CliError::Config("training labels contain ANY; use --variant any".into()));
    }
    let mut user = a.config.as_deref().map(read_table).transpose()?;
    let (user_arch, user_train) = match user.as_mut() {
        Some(t) => (take_table(t, "arch")?, take_table(t, "train")?),
        None => (None, None),
    };
    if let Some(key) = user.as_ref().and_then(|t| t.keys().next()) {
        return Err(CliError::Config(format!("unknown config section `{key}`")));
    }
    let profile = ctx.profile();
    let arch_base = ArchConfig { image_size: data.config.image_size, ..profile.arch() };
    let arch: ArchConfig = overlay(&arch_base, user_arch, "[arch]")?;
    if arch.image_size != data.config.image_size {
        return Err(CliError::Config(format!(
            "[arch] image_size {} does not match the dataset ({})",
            arch.image_size, data.config.image_size
        )));
    }
    let mut config: TrainConfig = overlay(&profile.train(objective), user_train, "[train]")?;
    config.objective = objective;
    config.seed = ctx.cli.seed;
    if let Some(e) = a.epochs {
        config.epochs = e;
    }

    let mut trainer = match &a.resume {
        Some(path) => {
            let t = Trainer::resume(&load_checkpoint(path)?, config.clone())?;
            check_compatible(t.model(), &data.config)?;
            if t.model().arch() != &arch {
                return Err(CliError::Incompatible("resume checkpoint has a different architecture".into()));
            }
            t
        }
        None => {
            let model = Model::new(objective.model_kind(), arch.clone(), data.config.vocabulary(), ctx.cli.seed)?;
            Trainer::new(model, config.clone())?
        }
    };
    let dev = (!data.dev.is_empty()).then_some(&data.dev);
    while !trainer.is_done() {
        let m = match trainer.run_epoch(&data.train, dev) {
            Ok(m) => m.clone(),
            Err(VaeError::NonFinite { epoch, batch, snapshot }) => {
                save_checkpoint(&ctx.path(NONFINITE_FILE), &snapshot)?;
                return Err(CliError::Numeric(format!(
                    "non-finite loss at epoch {epoch}, batch {batch}; state saved to {}",
                    ctx.path(NONFINITE_FILE).display()
                )));
            }
            Err(e) => return Err(e.into()),
        };
        let acc = m.accuracy.map_or(String::new(), |a| {
            format!("  acc {}", a.map(|v| format!("{v:.2}")).join(" "))
        });
        println!("epoch {:>4}  recon {:>10.3}  total {:>10.3}{acc}", m.epoch, m.recon, m.total);
        save_checkpoint(&ctx.path(STATE_FILE), &trainer.checkpoint())?;
    }
    let outcome = trainer.finish();
    save_checkpoint(&ctx.path(MODEL_FILE), &outcome.model.to_checkpoint())?;
    let mut w = BufWriter::new(File::create(ctx.path(METRICS_FILE))?);
    write_metrics_csv(&mut w, outcome.model.latent_dim(), &outcome.metrics)?;
    drop(w);
    println!("kept parameters from epoch {}", outcome.best_epoch);

    let mut inputs = vec![a.data.as_path()];
    inputs.extend(a.config.as_deref());
    inputs.extend(a.resume.as_deref());
    ctx.manifest(
        &inputs,
        &[MODEL_FILE, STATE_FILE, METRICS_FILE],
        to_toml(&EffectiveTrain { arch: &arch, train: &config }),
    )
}

/// Evenly spaced, well separated priors for the reference encoder when no
/// trained model is supplied.
fn spaced_priors(vocab: &Vocabulary) -> Result<ConceptualPriors> {
    let table = |d: Domain| {
        let k = vocab.len(d);
        (0..k)
            .map(|i| Gaussian1d::new(if k > 1 { -1.0 + 2.0 * i as f64 / (k - 1) as f64 } else { 0.0 }, -4.0))
            .collect()
    };
    Ok(ConceptualPriors::new(vocab.clone(), Domain::ALL.map(table))?)
}

fn classify(ctx: &Ctx, a: &ClassifyArgs) -> Result<()> {
    let data = load_dataset(&a.data)?;
    let kinds: Vec<SplitKind> = match a.split {
        Some(s) => vec![split_kind(s)],
        None => vec![SplitKind::Dev, SplitKind::Test],
    };
    let model = a.model.as_deref().map(|p| load_model(p, &data.config)).transpose()?;
    let mut results: Vec<(SplitKind, Accuracy)> = Vec::new();
    for kind in kinds {
        let split: &Split = data.split(kind);
        let acc = match (&model, a.oracle) {
            (_, true) => {
                let priors = match &model {
                    Some(m) => m.conceptual_priors()?,
                    None => spaced_priors(&data.config.vocabulary())?,
                };
                let slack = model.as_ref().map_or(2, |m| m.arch().slack);
                let oracle = RangeOracle { config: data.config.clone(), priors, slack };
                evaluate_accuracy(&oracle, split)?
            }
            (Some(m), false) => evaluate_accuracy(m, split)?,
            (None, false) => return Err(CliError::Config("--model is required unless --oracle is given".into())),
        };
        results.push((kind, acc));
    }
    println!("{:<6} {:>7} {:>7} {:>7} {:>9}", "split", "colour", "size", "shape", "position");
    let mut w = csv::Writer::from_path(ctx.path(ACCURACY_FILE)).map_err(|e| CliError::Config(e.to_string()))?;
    let csv_err = |e: csv::Error| CliError::Config(e.to_string());
    w.write_record(["split", "colour", "size", "shape", "position"]).map_err(csv_err)?;
    for (kind, acc) in &results {
        let [c, s, k, p] = acc.rounded();
        println!("{:<6} {c:>7.2} {s:>7.2} {k:>7.2} {p:>9.2}", kind.name());
        let mut row = vec![kind.name().to_string()];
        row.extend(acc.per_domain.iter().map(|v| v.to_string()));
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()?;
    let mut inputs = vec![a.data.as_path()];
    inputs.extend(a.model.as_deref());
    ctx.manifest(&inputs, &[ACCURACY_FILE], format!("oracle = {}\n", a.oracle))
}

fn clusters(ctx: &Ctx, a: &ClustersArgs) -> Result<()> {
    let data = load_dataset(&a.data)?;
    let model = load_model(&a.model, &data.config)?;
    let split = data.split(split_kind(a.split));
    let rows = cluster_rows(&model, &split.instances, &data.config.vocabulary())?;
    write_clusters_csv(BufWriter::new(File::create(ctx.path(CLUSTERS_FILE))?), &rows)?;
    println!("{} rows for {} instances", rows.len(), split.len());
    ctx.manifest(&[a.data.as_path(), a.model.as_path()], &[CLUSTERS_FILE], format!("split = \"{}\"\n", split.kind))
}

fn traverse_cmd(ctx: &Ctx, a: &TraverseArgs) -> Result<()> {
    let ckpt = load_checkpoint(&a.model)?;
    let model = Model::from_checkpoint(&ckpt)?;
    let size = model.arch().image_size;
    let (image, input): (Image, &Path) = match (&a.image, &a.data, a.index) {
        (Some(path), _, _) => {
            let file = File::open(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            let r = read_ppm(std::io::BufReader::new(file))?;
            if r.width() != size || r.height() != size {
                return Err(CliError::Config(format!(
                    "image is {}x{}, model expects {size}x{size}",
                    r.width(),
                    r.height()
                )));
            }
            (Image::new(size, r.pixels().to_vec()).expect("size checked"), path)
        }
        (None, Some(dir), Some(index)) => {
            let data = load_dataset(dir)?;
            check_compatible(&model, &data.config)?;
            let split = data.split(split_kind(a.split));
            let inst = split.instances.get(index).ok_or_else(|| {
                CliError::Config(format!("index {index} out of range for {} ({} instances)", split.kind, split.len()))
            })?;
            (inst.image.clone(), dir)
        }
        _ => return Err(CliError::Config("give --image, or --data with --index".into())),
    };
    let frames = traverse(&model, &image, a.dim, a.steps, a.range)?;
    write_ppm(BufWriter::new(File::create(ctx.path(TRAVERSE_FILE))?), &hstack(&frames)?)?;
    println!("{} frames along dimension {}", frames.len(), a.dim);
    ctx.manifest(
        &[a.model.as_path(), input],
        &[TRAVERSE_FILE],
        format!("dim = {}\nsteps = {}\nrange = {}\n", a.dim, a.steps, a.range.map_or("default".into(), |r| r.to_string())),
    )
}
