//! The `htr` command line tool.
//!
//! Every command prints its resolved configuration to standard error as one
//! JSON line `{"command":..,"config":{..}}` before doing any work. Results go
//! to standard output as JSON lines whose field order is fixed:
//!
//! | command | records |
//! |---|---|
//! | `gen-data` | `{root, samples}` |
//! | `train` | one `{epoch, train_loss, val_cer}` per epoch, as in `metrics.jsonl` |
//! | `eval` | one `{id, reference, hypothesis, cer}` per sample, then `{split, head, samples, mean_cer, corpus_cer}` |
//! | `transcribe` | `{image, head, text}` |
//! | `attention-dump` | `{steps, text, truncated}`; per-step records go to `trace.jsonl` |
//! | `gradcheck` | `{scope, seed, max_rel_error, threshold, worst_param, worst_index, analytic, numeric, checked, pass}` |
//!
//! Exit codes: 0 success, 1 failed check, 2 configuration, 3 data,
//! 4 numeric, 5 vocabulary mismatch.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};

use crate::checkpoint;
use crate::checks::{scoped_grad_check, Scope, CHECK_THRESHOLD, DEFAULT_CHECK_SEED};
use crate::datagen::{generate_corpus, read_pgm, write_pgm, Corpus, CorpusSpec, Jitter, Split};
use crate::error::{Error, Result};
use crate::metrics::{cer, levenshtein};
use crate::model::{greedy_transcribe, Head};
use crate::tensor::Tensor;
use crate::trainer::{decode_steps, train, transcribe, EpochMetrics, RunConfig, TrainState};
use crate::viz::{bilinear_resize, map_to_image, normalize_peak, overlay};

pub const METRICS_FILE: &str = "metrics.jsonl";
pub const TIMING_FILE: &str = "timing.jsonl";
pub const RUN_CONFIG_FILE: &str = "run.toml";
pub const TRACE_FILE: &str = "trace.jsonl";
pub const OVERLAY_FILE: &str = "overlay.pgm";

/// Attention decoding cap when no transcript bounds the output length.
pub const DEFAULT_MAX_STEPS: usize = 100;

/// Checkpoint written after `epoch` completed epochs.
pub fn checkpoint_name(epoch: usize) -> String {
    format!("epoch-{epoch:03}.ckpt")
}

pub fn heatmap_name(t: usize) -> String {
    format!("heatmap-{t:03}.pgm")
}

#[derive(Debug, Parser)]
#[command(
    name = "htr",
    version,
    about = "Multi-line handwriting recognition toolkit"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render a synthetic corpus.
    GenData(GenDataArgs),
    /// Train a model on a corpus.
    Train(TrainArgs),
    /// Report per-sample and mean CER on a corpus split.
    Eval(EvalArgs),
    /// Transcribe one PGM image.
    Transcribe(TranscribeArgs),
    /// Write per-step attention maps for one PGM image.
    AttentionDump(DumpArgs),
    /// Compare analytic and finite-difference gradients.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    #[arg(long)]
    pub out: PathBuf,
    /// TOML corpus spec; flags below override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub n_samples: Option<usize>,
    #[arg(long)]
    pub min_chars: Option<usize>,
    #[arg(long)]
    pub max_chars: Option<usize>,
    #[arg(long)]
    pub min_lines: Option<usize>,
    #[arg(long)]
    pub max_lines: Option<usize>,
    /// `digits`, `iam` or a literal character list.
    #[arg(long)]
    pub vocab: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub scale: Option<usize>,
    #[arg(long)]
    pub gap_px: Option<usize>,
    #[arg(long)]
    pub no_jitter: bool,
    /// Add the shorter line runs of multi-line training samples.
    #[arg(long)]
    pub augment_train: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// TOML run config with `[model]` and `[train]` tables.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides `train.seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides `train.max_epochs`.
    #[arg(long)]
    pub max_epochs: Option<usize>,
    /// Continue from a checkpoint; its model config must match.
    #[arg(long)]
    pub resume: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "test")]
    pub split: String,
    /// `ctc` or `attention`; defaults to the head the checkpoint trained last.
    #[arg(long)]
    pub head: Option<String>,
    /// Attention decoding cap; 0 picks twice the longest reference plus 5.
    #[arg(long, default_value_t = 0)]
    pub max_steps: usize,
}

#[derive(Debug, Args)]
pub struct TranscribeArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub image: PathBuf,
    #[arg(long)]
    pub head: Option<String>,
    #[arg(long, default_value_t = DEFAULT_MAX_STEPS)]
    pub max_steps: usize,
}

#[derive(Debug, Args)]
pub struct DumpArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub image: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_MAX_STEPS)]
    pub max_steps: usize,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    /// cell, encoder, ctc, attention or full.
    #[arg(long)]
    pub scope: String,
    #[arg(long, default_value_t = DEFAULT_CHECK_SEED)]
    pub seed: u64,
    /// Scale analytic gradients by 1.01 before comparing.
    #[arg(long)]
    pub perturb_grads: bool,
}

/// Runs `cli`, writing results to `out` and diagnostics to `err`; returns
/// the exit code.
pub fn run(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let result = match cli.command {
        Command::GenData(a) => gen_data(a, out, err),
        Command::Train(a) => train_cmd(a, out, err),
        Command::Eval(a) => eval(a, out, err),
        Command::Transcribe(a) => transcribe_cmd(a, out, err),
        Command::AttentionDump(a) => attention_dump(a, out, err),
        Command::Gradcheck(a) => gradcheck(a, out, err),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

fn emit(w: &mut dyn Write, v: &impl Serialize) -> Result<()> {
    let line = serde_json::to_string(v).expect("record serializes");
    writeln!(w, "{line}").map_err(|e| Error::io("<stdout>", e))
}

fn echo(err: &mut dyn Write, command: &str, config: Value) -> Result<()> {
    emit(err, &json!({ "command": command, "config": config }))
}

fn to_value(v: &impl Serialize) -> Value {
    serde_json::to_value(v).expect("config serializes")
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn gen_data(a: GenDataArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    let mut spec = match &a.config {
        Some(p) => toml::from_str::<CorpusSpec>(&read_text(p)?)
            .map_err(|e| Error::Config(e.to_string()))?,
        None => CorpusSpec::default(),
    };
    macro_rules! set {
        ($flag:expr => $field:expr) => {
            if let Some(v) = $flag {
                $field = v;
            }
        };
    }
    set!(a.n_samples => spec.n_samples);
    set!(a.min_chars => spec.chars_per_line[0]);
    set!(a.max_chars => spec.chars_per_line[1]);
    set!(a.min_lines => spec.lines[0]);
    set!(a.max_lines => spec.lines[1]);
    set!(a.vocab => spec.vocab);
    set!(a.seed => spec.seed);
    set!(a.scale => spec.scale);
    set!(a.gap_px => spec.gap_px);
    if a.no_jitter {
        spec.jitter = Jitter::OFF;
    }
    if a.augment_train {
        spec.augment_train = true;
    }
    spec.validate()?;
    echo(
        err,
        "gen-data",
        json!({ "out": a.out, "spec": to_value(&spec) }),
    )?;
    let records = generate_corpus(&spec, &a.out)?;
    emit(out, &json!({ "root": a.out, "samples": records.len() }))?;
    Ok(0)
}

/// The corpus vocabulary must be the checkpoint's, and every transcript
/// must be encodable with it.
fn check_vocab(corpus: &Corpus, state: &TrainState) -> Result<()> {
    let vocab = &state.model.vocab;
    if let Some(spec) = &corpus.spec {
        let named = crate::vocab::Vocab::named(&spec.vocab)?;
        if &named != vocab {
            return Err(Error::VocabMismatch(format!(
                "checkpoint vocabulary {:?} differs from corpus vocabulary {:?}",
                vocab.as_string(),
                named.as_string()
            )));
        }
    }
    let unknown = corpus.unknown_chars(vocab);
    if !unknown.is_empty() {
        return Err(Error::VocabMismatch(format!(
            "manifest characters {unknown:?} are not in the checkpoint vocabulary"
        )));
    }
    Ok(())
}

fn corpus_vocab(corpus: &Corpus) -> Result<crate::vocab::Vocab> {
    match &corpus.spec {
        Some(spec) => crate::vocab::Vocab::named(&spec.vocab),
        None => {
            let mut chars: Vec<char> = corpus
                .records
                .iter()
                .flat_map(|r| r.transcript.chars())
                .collect();
            chars.sort_unstable();
            chars.dedup();
            crate::vocab::Vocab::new(&chars.into_iter().collect::<String>())
        }
    }
}

fn train_cmd(a: TrainArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    let resumed = a.resume.as_deref().map(checkpoint::load).transpose()?;
    let mut config = match (&a.config, &resumed) {
        (Some(p), _) => RunConfig::from_toml(&read_text(p)?)?,
        (None, Some(st)) => st.config.clone(),
        (None, None) => RunConfig::default(),
    };
    if let Some(s) = a.seed {
        config.train.seed = s;
    }
    if let Some(n) = a.max_epochs {
        config.train.max_epochs = n;
    }
    config.validate()?;
    let corpus = Corpus::open(&a.data)?;
    let state = match resumed {
        Some(mut st) => {
            if st.config.model != config.model {
                return Err(Error::Config(
                    "model config differs from the resumed checkpoint".into(),
                ));
            }
            st.config = config.clone();
            st
        }
        None => TrainState::fresh(config.clone(), corpus_vocab(&corpus)?)?,
    };
    check_vocab(&corpus, &state)?;
    echo(
        err,
        "train",
        json!({
            "data": a.data,
            "out": a.out,
            "resume": a.resume,
            "start_epoch": state.epoch,
            "vocab": state.model.vocab.as_string(),
            "run": to_value(&config),
        }),
    )?;
    let train_set = corpus.load(Split::Train)?;
    let val_set = corpus.load(Split::Val)?;
    create_dir(&a.out)?;
    fs::write(a.out.join(RUN_CONFIG_FILE), config.to_toml())
        .map_err(|e| Error::io(a.out.join(RUN_CONFIG_FILE), e))?;
    let open = |name: &str| -> Result<BufWriter<File>> {
        let p = a.out.join(name);
        let f = if state.epoch == 0 {
            File::create(&p)
        } else {
            File::options().append(true).create(true).open(&p)
        };
        f.map(BufWriter::new).map_err(|e| Error::io(p, e))
    };
    let mut metrics_log = open(METRICS_FILE)?;
    let mut timing_log = open(TIMING_FILE)?;
    train(state, &train_set, &val_set, |st, m: &EpochMetrics| {
        checkpoint::save(&a.out.join(checkpoint_name(st.epoch)), st)?;
        emit(&mut metrics_log, m)?;
        emit(
            &mut timing_log,
            &json!({ "epoch": m.epoch, "wall_seconds": m.wall_seconds }),
        )?;
        metrics_log
            .flush()
            .map_err(|e| Error::io(a.out.join(METRICS_FILE), e))?;
        timing_log
            .flush()
            .map_err(|e| Error::io(a.out.join(TIMING_FILE), e))?;
        emit(out, m)
    })?;
    Ok(0)
}

fn resolve_head(flag: Option<&str>, state: &TrainState) -> Result<Head> {
    match flag {
        Some(s) => match Head::parse(s)? {
            Head::Joint => Err(Error::Config(
                "decode with --head ctc or --head attention".into(),
            )),
            h => Ok(h),
        },
        None => Ok(match state.config.train.head_at(state.epoch.max(1)) {
            Head::Ctc => Head::Ctc,
            _ => Head::Attention,
        }),
    }
}

fn eval(a: EvalArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    let split = Split::parse(&a.split)?;
    let state = checkpoint::load(&a.ckpt)?;
    let head = resolve_head(a.head.as_deref(), &state)?;
    let corpus = Corpus::open(&a.data)?;
    check_vocab(&corpus, &state)?;
    let data = corpus.load(split)?;
    if data.is_empty() {
        return Err(Error::Domain(format!(
            "split {} of {} is empty",
            split.name(),
            a.data.display()
        )));
    }
    let steps = decode_steps(a.max_steps, &data);
    echo(
        err,
        "eval",
        json!({ "ckpt": a.ckpt, "data": a.data, "split": split.name(), "head": head.name(), "max_steps": steps }),
    )?;
    if head == Head::Ctc && data.iter().any(|e| e.n_lines > 1) {
        writeln!(
            err,
            "warning: the CTC head assumes single-line input; multi-line samples are collapsed into one line"
        )
        .map_err(|e| Error::io("<stderr>", e))?;
    }
    let (mut sum, mut edits, mut chars) = (0.0, 0usize, 0usize);
    for ex in &data {
        let hyp = transcribe(&state.model, &ex.image, head, steps)?;
        let c = cer(&hyp, &ex.transcript)?;
        sum += c;
        edits += levenshtein(&hyp, &ex.transcript);
        chars += ex.transcript.chars().count();
        emit(
            out,
            &json!({ "id": ex.id, "reference": ex.transcript, "hypothesis": hyp, "cer": c }),
        )?;
    }
    emit(
        out,
        &json!({
            "split": split.name(),
            "head": head.name(),
            "samples": data.len(),
            "mean_cer": sum / data.len() as f64,
            "corpus_cer": edits as f64 / chars as f64,
        }),
    )?;
    Ok(0)
}

fn transcribe_cmd(a: TranscribeArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    let state = checkpoint::load(&a.ckpt)?;
    let head = resolve_head(a.head.as_deref(), &state)?;
    echo(
        err,
        "transcribe",
        json!({ "ckpt": a.ckpt, "image": a.image, "head": head.name(), "max_steps": a.max_steps }),
    )?;
    let image = read_pgm(&a.image)?;
    let text = transcribe(&state.model, &image, head, a.max_steps)?;
    emit(
        out,
        &json!({ "image": a.image, "head": head.name(), "text": text }),
    )?;
    Ok(0)
}

/// One line of `trace.jsonl`.
#[derive(Serialize)]
struct TraceRecord {
    t: usize,
    emitted_char: String,
    top5: Vec<(String, f64)>,
    /// `(row, col)` in feature-map cells.
    center_of_mass: (f64, f64),
    alpha: Vec<Vec<f64>>,
}

fn attention_dump(a: DumpArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    let state = checkpoint::load(&a.ckpt)?;
    echo(
        err,
        "attention-dump",
        json!({ "ckpt": a.ckpt, "image": a.image, "out": a.out, "max_steps": a.max_steps }),
    )?;
    let image = read_pgm(&a.image)?;
    let (h, w) = (image.shape()[0], image.shape()[1]);
    let (text, trace) = greedy_transcribe(&image, &state.model, a.max_steps)?;
    create_dir(&a.out)?;
    let trace_path = a.out.join(TRACE_FILE);
    let mut trace_file =
        BufWriter::new(File::create(&trace_path).map_err(|e| Error::io(&trace_path, e))?);
    let vocab = &state.model.vocab;
    let (mh, mw) = (trace.map_height, trace.map_width);
    let mut marks = Vec::new();
    for (t, step) in trace.steps.iter().enumerate() {
        let mut ranked: Vec<(usize, f64)> = step
            .probs
            .data()
            .iter()
            .map(|&p| p as f64)
            .enumerate()
            .collect();
        ranked.sort_by(|x, y| y.1.total_cmp(&x.1).then(x.0.cmp(&y.0)));
        let com = step.center_of_mass();
        emit(
            &mut trace_file,
            &TraceRecord {
                t,
                emitted_char: vocab.label_name(step.emitted),
                top5: ranked
                    .iter()
                    .take(5)
                    .map(|&(l, p)| (vocab.label_name(l), p))
                    .collect(),
                center_of_mass: com,
                alpha: step
                    .alpha
                    .data()
                    .chunks_exact(mw)
                    .map(|r| r.iter().map(|&v| v as f64).collect())
                    .collect(),
            },
        )?;
        let mut heat = bilinear_resize(&step.alpha, h, w)?;
        normalize_peak(&mut heat);
        write_pgm(&a.out.join(heatmap_name(t)), &heat.reshape(&[h, w, 1])?)?;
        if step.emitted < vocab.num_chars() {
            marks.push((
                vocab.chars()[step.emitted],
                map_to_image(com, (mh, mw), (h, w)),
            ));
        }
    }
    trace_file.flush().map_err(|e| Error::io(&trace_path, e))?;
    let composite: Tensor<f32> = overlay(&image, &marks, 2)?;
    write_pgm(&a.out.join(OVERLAY_FILE), &composite.reshape(&[h, w, 1])?)?;
    emit(
        out,
        &json!({ "steps": trace.steps.len(), "text": text, "truncated": trace.truncated }),
    )?;
    Ok(0)
}

fn gradcheck(a: GradcheckArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    let scope: Scope = a.scope.parse()?;
    echo(
        err,
        "gradcheck",
        json!({ "scope": scope.name(), "seed": a.seed, "perturb_grads": a.perturb_grads, "threshold": CHECK_THRESHOLD }),
    )?;
    let r = scoped_grad_check(scope, a.seed, a.perturb_grads)?;
    let pass = r.max_rel_error < CHECK_THRESHOLD;
    emit(
        out,
        &json!({
            "scope": scope.name(),
            "seed": a.seed,
            "max_rel_error": r.max_rel_error,
            "threshold": CHECK_THRESHOLD,
            "worst_param": r.worst_param,
            "worst_index": r.worst_index,
            "analytic": r.analytic,
            "numeric": r.numeric,
            "checked": r.checked,
            "pass": pass,
        }),
    )?;
    if pass {
        Ok(0)
    } else {
        writeln!(
            err,
            "gradient check failed: {}[{}] has relative error {:e} (analytic {:e}, numeric {:e})",
            r.worst_param, r.worst_index, r.max_rel_error, r.analytic, r.numeric
        )
        .map_err(|e| Error::io("<stderr>", e))?;
        Ok(1)
    }
}
