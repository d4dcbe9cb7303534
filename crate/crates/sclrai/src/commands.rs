//! One function per subcommand. Each reads only the effective config and the
//! files it names.

use std::cell::RefCell;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::{info, warn};
use sclrai_core::corpus::{
    build_entity_dictionary, corrupt_by_rate, corrupt_by_surface, distant_supervise, parse_bio,
    Dataset,
};
use sclrai_core::encoder::PrecomputedFeatures;
use sclrai_core::eval::experiment::{batch_size_sweep, robustness_experiment, ExperimentData};
use sclrai_core::eval::{
    predict_dataset, representation_records, score, triple_bio, DecodeOptions,
};
use sclrai_core::model::SpanModel;
use sclrai_core::synth::{standard_splits, SynthConfig};
use sclrai_core::training::{self, gradcheck, GradcheckConfig, TrainHooks};
use sclrai_core::Diagnostics;

use crate::config::{CorruptMode, ExperimentKind, RunConfig};
use crate::error::{CliError, Result};
use crate::formats::{self, Checkpoint, CorruptStats};

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, bytes).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn format_err(path: &Path) -> impl FnOnce(formats::FormatError) -> CliError + '_ {
    move |source| CliError::Format {
        path: path.to_path_buf(),
        source,
    }
}

/// `path` with `suffix` appended to its file name.
pub fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn output<'a>(cfg: &'a RunConfig, key: &str) -> Result<&'a Path> {
    cfg.path(key).ok_or_else(|| {
        CliError::Usage(format!(
            "missing output path `{key}` (flag --{} or config key)",
            key.replace('_', "-")
        ))
    })
}

fn input<'a>(cfg: &'a RunConfig, key: &str) -> Result<&'a Path> {
    let p = output(cfg, key)?;
    if !p.is_file() {
        return Err(CliError::Usage(format!(
            "{key} file {} does not exist",
            p.display()
        )));
    }
    Ok(p)
}

fn optional_input<'a>(cfg: &'a RunConfig, key: &str) -> Result<Option<&'a Path>> {
    match cfg.path(key) {
        Some(_) => input(cfg, key).map(Some),
        None => Ok(None),
    }
}

pub fn load_bio(path: &Path) -> Result<Dataset> {
    let text = read_text(path)?;
    let parsed = parse_bio(&text).map_err(|source| CliError::Input {
        path: path.to_path_buf(),
        source,
    })?;
    for w in &parsed.warnings {
        warn!("{}:{}: {}", path.display(), w.line, w.message);
    }
    Ok(parsed.dataset)
}

fn load_features(path: &Path) -> Result<PrecomputedFeatures> {
    formats::read_features(&read(path)?).map_err(format_err(path))
}

fn load_checkpoint(cfg: &RunConfig) -> Result<Checkpoint> {
    let path = input(cfg, "checkpoint")?;
    let features = optional_input(cfg, "features")?
        .map(load_features)
        .transpose()?;
    formats::read_checkpoint(&read(path)?, features).map_err(format_err(path))
}

fn shift_ids(dataset: &Dataset, offset: u64) -> Result<Dataset> {
    Ok(Dataset::new(
        dataset
            .sentences()
            .iter()
            .map(|s| s.with_id(s.id() + offset))
            .collect(),
        dataset.annotations().to_vec(),
        dataset.label_set().clone(),
        dataset.provenance(),
    )?)
}

pub fn corrupt(cfg: &RunConfig) -> Result<()> {
    let mode = cfg.corrupt_mode.ok_or_else(|| {
        CliError::Usage("corrupt needs corrupt_mode = dict, rate or surface (flag --mode)".into())
    })?;
    let out_path = output(cfg, "output")?;
    let (dataset, stats) = match mode {
        CorruptMode::Dict => {
            let raw_path = input(cfg, "raw")?;
            let dict_path = input(cfg, "dictionary")?;
            let raw =
                formats::parse_raw_text(&read_text(raw_path)?).map_err(format_err(raw_path))?;
            let dict =
                formats::parse_dictionary(&read_text(dict_path)?).map_err(format_err(dict_path))?;
            for c in dict.collisions() {
                warn!(
                    "dictionary collision: {:?} kept as {}, {} ignored",
                    c.surface.join(" "),
                    c.kept,
                    c.rejected
                );
            }
            let ds = distant_supervise(&raw, &dict)?;
            let stats = CorruptStats {
                sentences: ds.len(),
                matched: ds.num_spans(),
                kept: ds.num_spans(),
                ..CorruptStats::default()
            };
            (ds, stats)
        }
        CorruptMode::Rate | CorruptMode::Surface => {
            let p = cfg.drop_prob.ok_or_else(|| {
                CliError::Usage(format!(
                    "{} mode needs drop_prob (flag --drop-prob)",
                    mode.name()
                ))
            })?;
            let source = load_bio(input(cfg, "input")?)?;
            let ds = if mode == CorruptMode::Rate {
                corrupt_by_rate(&source, p, cfg.hyper.seed)?
            } else {
                corrupt_by_surface(&source, p, cfg.hyper.seed)?
            };
            let stats = CorruptStats {
                sentences: ds.len(),
                input_entities: source.num_spans(),
                kept: ds.num_spans(),
                dropped: source.num_spans() - ds.num_spans(),
                matched: 0,
            };
            (ds, stats)
        }
    };
    write(out_path, dataset.to_bio())?;
    write(&sidecar(out_path, ".stats"), stats.to_text(mode.name()))?;
    println!(
        "{} sentences, {} entities kept, {} dropped, {} matched",
        stats.sentences, stats.kept, stats.dropped, stats.matched
    );
    Ok(())
}

pub fn build_dict(cfg: &RunConfig) -> Result<()> {
    let dataset = load_bio(input(cfg, "input")?)?;
    let dict = build_entity_dictionary(&dataset)?;
    for c in dict.collisions() {
        warn!(
            "surface {:?} seen as {} and {}; keeping {}",
            c.surface.join(" "),
            c.kept,
            c.rejected,
            c.kept
        );
    }
    write(output(cfg, "output")?, formats::dictionary_text(&dict))?;
    println!("{} dictionary entries", dict.len());
    Ok(())
}

pub fn train(cfg: &RunConfig) -> Result<()> {
    let hyper = cfg.hyper;
    let ckpt_path = output(cfg, "checkpoint")?;
    let centroid_path = output(cfg, "centroids")?;
    let log_path = cfg
        .path("log")
        .map(Path::to_path_buf)
        .unwrap_or_else(|| sidecar(ckpt_path, ".log"));
    let train_set = load_bio(input(cfg, "train")?)?;
    let mut dev_set = match optional_input(cfg, "dev")? {
        Some(p) => load_bio(p)?,
        None => Dataset::empty(train_set.label_set().clone(), train_set.provenance()),
    };

    let model = match optional_input(cfg, "train_features")? {
        Some(p) => {
            let mut features = load_features(p)?;
            if !dev_set.is_empty() {
                let offset = train_set
                    .sentences()
                    .iter()
                    .map(|s| s.id() + 1)
                    .max()
                    .unwrap_or(0);
                let dev_path = input(cfg, "dev_features")?;
                for (id, seq) in load_features(dev_path)?.iter() {
                    features.insert(id + offset, seq.clone())?;
                }
                dev_set = shift_ids(&dev_set, offset)?;
            }
            SpanModel::init_precomputed(
                features,
                train_set.label_set().clone(),
                cfg.arch.rep_dim,
                hyper.seed,
            )?
        }
        None => training::init_model(&train_set, cfg.arch, hyper.seed)?,
    };

    let log_file = fs::File::create(&log_path).map_err(|source| CliError::Io {
        path: log_path.clone(),
        source,
    })?;
    let log_state = RefCell::new((log_file, None::<std::io::Error>));
    let mut on_epoch = |rec: &training::EpochRecord| {
        info!(
            "epoch {}: loss {:.6} (ce {:.6}, scl {:.6}), dev F1 {:.2}",
            rec.epoch, rec.loss_final, rec.loss_ce, rec.loss_scl, rec.dev.f1
        );
        let mut state = log_state.borrow_mut();
        let (file, err) = &mut *state;
        if err.is_none() {
            if let Err(e) = writeln!(file, "{}", rec.log_line()).and_then(|_| file.flush()) {
                *err = Some(e);
            }
        }
    };
    let start = Instant::now();
    let clock = move || start.elapsed().as_secs_f64();
    let hooks = TrainHooks {
        clock: cfg.log_wall_time.then_some(&clock as &dyn Fn() -> f64),
        on_epoch: Some(&mut on_epoch),
    };
    let out = training::train(model, &train_set, &dev_set, &hyper, hooks)?;
    if let (_, Some(source)) = log_state.into_inner() {
        return Err(CliError::Io {
            path: log_path,
            source,
        });
    }
    for w in &out.warnings {
        warn!("{w}");
    }

    let ckpt = Checkpoint {
        model: out.model,
        hyper,
    };
    write(ckpt_path, formats::write_checkpoint(&ckpt))?;
    write(centroid_path, formats::write_centroids(&out.centroids))?;
    match &out.dev_report {
        Some(r) => println!(
            "best epoch {}: dev precision {:.2}, recall {:.2}, F1 {:.2}",
            out.best_epoch,
            r.precision(),
            r.recall(),
            r.f1()
        ),
        None => println!("best epoch {}: no dev set", out.best_epoch),
    }
    Ok(())
}

pub fn eval(cfg: &RunConfig) -> Result<()> {
    let ckpt = load_checkpoint(cfg)?;
    let centroid_path = input(cfg, "centroids")?;
    let table =
        formats::read_centroids(&read(centroid_path)?).map_err(format_err(centroid_path))?;
    if table.labels() != &ckpt.model.labels || table.dim() != ckpt.model.rep_dim() {
        return Err(CliError::Usage(format!(
            "centroid table {} does not belong to the checkpoint",
            centroid_path.display()
        )));
    }
    let test_set = load_bio(input(cfg, "test")?)?;
    let mut diag = Diagnostics::default();
    let pred = predict_dataset(
        &ckpt.model,
        &test_set,
        DecodeOptions {
            table: Some(&table),
            alpha: cfg.hyper.alpha,
            max_span_len: cfg.hyper.max_span_len,
        },
        &mut diag,
    )?;
    let report = score(&pred, &test_set)?;
    print!("{report}");
    if let Some(p) = cfg.path("output") {
        write(p, triple_bio(&test_set, &pred)?)?;
    }
    if diag.empty_retrievals > 0 {
        warn!(
            "{} retrieval distributions had no entity centroid",
            diag.empty_retrievals
        );
    }
    Ok(())
}

pub fn experiment(cfg: &RunConfig) -> Result<()> {
    let kind = cfg.experiment.ok_or_else(|| {
        CliError::Usage("experiment needs experiment = robustness or batch_sweep".into())
    })?;
    let out_path = output(cfg, "output")?;
    let train_set = load_bio(input(cfg, "train")?)?;
    let dev_set = load_bio(input(cfg, "dev")?)?;
    let test_set = load_bio(input(cfg, "test")?)?;
    let data = ExperimentData {
        train: &train_set,
        dev: &dev_set,
        test: &test_set,
    };
    let (summary, runs) = match kind {
        ExperimentKind::Robustness => {
            let noisy = load_bio(input(cfg, "noisy")?)?;
            let table = robustness_experiment(
                data,
                &noisy,
                &cfg.variants,
                &cfg.seeds,
                &cfg.hyper,
                cfg.arch,
                &mut |r| {
                    info!(
                        "{} seed {}: clean {:.2}, noisy {:.2}",
                        r.variant, r.seed, r.f1_clean, r.f1_noisy
                    )
                },
            )?;
            (table.to_tsv(), table.runs_tsv())
        }
        ExperimentKind::BatchSweep => {
            let table = batch_size_sweep(
                data,
                &cfg.batch_sizes,
                &cfg.seeds,
                &cfg.hyper,
                cfg.arch,
                &mut |r| {
                    info!(
                        "batch size {} seed {}: F1 {:.2}",
                        r.batch_size, r.seed, r.f1
                    )
                },
            )?;
            let runs = std::iter::once("batch_size\tseed\tf1\n".to_string())
                .chain(
                    table
                        .rows
                        .iter()
                        .map(|r| format!("{}\t{}\t{:.2}\n", r.batch_size, r.seed, r.f1)),
                )
                .collect();
            (table.to_tsv(), runs)
        }
    };
    write(out_path, &summary)?;
    write(&sidecar(out_path, ".runs"), runs)?;
    print!("{summary}");
    Ok(())
}

/// Prints one line per parameter block; fails if any block does.
pub fn gradcheck_cmd(cfg: &RunConfig, corrupt_block: Option<String>) -> Result<()> {
    let gc = GradcheckConfig {
        seed: cfg.hyper.seed,
        lambda: cfg.hyper.lambda,
        tau: cfg.hyper.tau,
        dropout: cfg.hyper.dropout,
        frozen: cfg.frozen_encoder,
        corrupt_block,
        ..GradcheckConfig::default()
    };
    let report = gradcheck(&gc)?;
    for b in &report.blocks {
        println!(
            "{}\tmax_rel_error {:.3e}\tmax_abs_error {:.3e}\t{}",
            b.name,
            b.max_rel_error,
            b.max_abs_error,
            if b.passed { "pass" } else { "FAIL" }
        );
    }
    if report.passed() {
        println!("gradcheck passed (tolerance {:e})", gc.tolerance);
        Ok(())
    } else {
        Err(CliError::CheckFailed(format!(
            "gradient mismatch in blocks {}",
            report.failing().join(", ")
        )))
    }
}

pub fn dump_reprs(cfg: &RunConfig) -> Result<()> {
    let ckpt = load_checkpoint(cfg)?;
    let dataset = load_bio(input(cfg, "input")?)?;
    let records = representation_records(
        &ckpt.model,
        &dataset,
        cfg.hyper.neg_ratio,
        cfg.hyper.max_span_len,
        cfg.hyper.seed,
    )?;
    let bytes = formats::write_representations(&ckpt.model.labels, ckpt.model.rep_dim(), &records);
    write(output(cfg, "output")?, bytes)?;
    println!("{} representations", records.len());
    Ok(())
}

/// Writes `train.bio`, `dev.bio`, `test.bio` and `extra.bio` into the
/// output directory.
pub fn gen_synth(cfg: &RunConfig) -> Result<()> {
    let dir = output(cfg, "output")?;
    fs::create_dir_all(dir).map_err(|source| CliError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let [n_train, n_dev, n_test, n_extra] = cfg.synth_sizes;
    let splits = standard_splits(
        SynthConfig {
            seed: cfg.hyper.seed,
            ..SynthConfig::default()
        },
        n_train,
        n_dev,
        n_test,
        n_extra,
    )?;
    for (name, ds) in [
        ("train", &splits.train),
        ("dev", &splits.dev),
        ("test", &splits.test),
        ("extra", &splits.extra),
    ] {
        write(&dir.join(format!("{name}.bio")), ds.to_bio())?;
    }
    println!(
        "wrote {n_train}/{n_dev}/{n_test}/{n_extra} sentences to {}",
        dir.display()
    );
    Ok(())
}
