//! The `stylemux` command line: pipeline stages as library functions plus
//! argument parsing.

mod config;

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rayon::prelude::*;

pub use config::RunConfig;

use crate::classifier::{self, ClassifierReport, StyleClassifier};
use crate::corpus::{
    enumerate_directions, filter_pair, read_lines, read_parallel, read_shard, write_lines, write_shard, FactoredExample, FilterDecision,
    LangId, Registry, StyleId,
};
use crate::error::{Error, Result};
use crate::eval::{bleu, count_contractions, meteor_lite, EvalReport, SynonymTable};
use crate::model::Transformer;
use crate::rng;
use crate::synthlang::{self, score_style_transfer, SynthCorpus, TransferScore};
use crate::text::{learn_subwords, tokenize, SubwordVocabulary, TextPipeline, TruecaseModel, BOS, EOS};
use crate::trainer::{self, TrainOutcome};

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// `{split}/{style}.{lang}.txt` under a corpus directory.
pub fn cell_path(dir: &Path, split: &str, style: &str, lang: &str) -> PathBuf {
    dir.join(split).join(format!("{style}.{lang}.txt"))
}

pub fn load_registry(dir: &Path) -> Result<Registry> {
    Registry::from_text(&read_text(&dir.join("registry.tsv"))?)
}

fn thread_pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot start {workers} workers: {e}")))
}

pub fn gen_synth(cfg: &RunConfig, out: &Path) -> Result<SynthCorpus> {
    let corpus = synthlang::generate(&cfg.synth_spec()?, cfg.split_sizes()?)?;
    corpus.write(out)?;
    cfg.write_to(out)?;
    Ok(corpus)
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PrepSummary {
    pub train_pairs: usize,
    pub dev_pairs: usize,
    /// Discarded pairs per reason; a pair can count under several reasons.
    pub discarded: BTreeMap<String, usize>,
}

/// Tokenized sentences of every (style, lang) cell of one split.
fn read_split(dir: &Path, split: &str, reg: &Registry) -> Result<Vec<Vec<Vec<Vec<String>>>>> {
    let mut cells = Vec::new();
    for s in reg.styles() {
        let style = reg.style_name(s)?;
        let mut langs = Vec::new();
        let first = cell_path(dir, split, style, reg.lang_name(LangId(0))?);
        for l in reg.langs() {
            let path = cell_path(dir, split, style, reg.lang_name(l)?);
            // checks line alignment against the first language
            let lines: Vec<String> = read_parallel(&first, &path)?.into_iter().map(|(_, b)| b).collect();
            langs.push(lines.iter().map(|line| tokenize(line).tokens).collect());
        }
        cells.push(langs);
    }
    Ok(cells)
}

fn build_examples(
    cells: &[Vec<Vec<Vec<String>>>],
    pipeline: &TextPipeline,
    reg: &Registry,
    cfg: &RunConfig,
    summary: &mut PrepSummary,
) -> Result<Vec<FactoredExample>> {
    let filter = cfg.filter_config()?;
    let encoded: Vec<Vec<Vec<Vec<u32>>>> = cells
        .iter()
        .map(|langs| langs.iter().map(|sents| sents.iter().map(|t| pipeline.vocab.encode(&pipeline.truecaser.apply(t))).collect()).collect())
        .collect();
    let mut out = Vec::new();
    for task in enumerate_directions(reg.num_langs(), reg.num_styles()) {
        let (s, a, b) = (task.style.index(), task.src_lang.index(), task.tgt_lang.index());
        for i in 0..cells[s][a].len() {
            match filter_pair(&cells[s][a][i], &cells[s][b][i], &filter) {
                FilterDecision::Keep => {
                    let mut ex = FactoredExample::for_source(encoded[s][a][i].clone(), task.tgt_lang, task.style, reg)?;
                    ex.tgt_ids = std::iter::once(BOS).chain(encoded[s][b][i].iter().copied()).chain([EOS]).collect();
                    out.push(ex);
                }
                FilterDecision::Discard(reasons) => {
                    for r in reasons {
                        *summary.discarded.entry(r.to_string()).or_insert(0) += 1;
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Tokenize, truecase and segment a corpus directory laid out as
/// `registry.tsv` plus `train/` and `dev/` cells, then emit factored shards
/// pairing languages within each style only.
pub fn preprocess(cfg: &RunConfig, data: &Path, out: &Path) -> Result<PrepSummary> {
    let reg = load_registry(data)?;
    let train_cells = read_split(data, "train", &reg)?;
    let dev_cells = read_split(data, "dev", &reg)?;
    let all_train: Vec<Vec<String>> = train_cells.iter().flatten().flatten().cloned().collect();
    let truecaser = TruecaseModel::train(&all_train);
    let cased: Vec<Vec<String>> = all_train.iter().map(|s| truecaser.apply(s)).collect();
    let vocab = learn_subwords(&cased, cfg.get("prep.vocab_size")?)?;
    let pipeline = TextPipeline { truecaser, vocab };
    let mut summary = PrepSummary::default();
    let train = build_examples(&train_cells, &pipeline, &reg, cfg, &mut summary)?;
    let dev = build_examples(&dev_cells, &pipeline, &reg, cfg, &mut summary)?;
    summary.train_pairs = train.len();
    summary.dev_pairs = dev.len();
    create_dir(out)?;
    write_text(&out.join("vocab.txt"), &pipeline.vocab.to_text())?;
    write_text(&out.join("truecase.tsv"), &pipeline.truecaser.to_text())?;
    write_text(&out.join("registry.tsv"), &reg.to_text())?;
    write_shard(&out.join("train.shard"), &train)?;
    write_shard(&out.join("dev.shard"), &dev)?;
    let mut lines = vec![format!("train_pairs\t{}", summary.train_pairs), format!("dev_pairs\t{}", summary.dev_pairs)];
    lines.extend(summary.discarded.iter().map(|(k, v)| format!("discard_{k}\t{v}")));
    write_lines(&out.join("filter.tsv"), &lines)?;
    cfg.write_to(out)?;
    log::info!("preprocess: {} train and {} dev pairs", summary.train_pairs, summary.dev_pairs);
    Ok(summary)
}

pub fn load_pipeline(dir: &Path) -> Result<TextPipeline> {
    Ok(TextPipeline {
        truecaser: TruecaseModel::from_text(&read_text(&dir.join("truecase.tsv"))?)?,
        vocab: SubwordVocabulary::from_text(&read_text(&dir.join("vocab.txt"))?)?,
    })
}

/// Trains on a preprocessed directory; `out` becomes a self-contained model
/// directory (checkpoints, log, pipeline files, registry, run.cfg).
pub fn train_model(cfg: &RunConfig, prep: &Path, out: &Path) -> Result<TrainOutcome> {
    let reg = load_registry(prep)?;
    let pipeline = load_pipeline(prep)?;
    let mcfg = cfg.model_config(pipeline.vocab.len(), reg.num_langs(), reg.num_styles())?;
    let fits = |e: &FactoredExample| e.src_ids.len() <= mcfg.max_len && e.tgt_ids.len() <= mcfg.max_len + 1;
    let load = |name: &str| -> Result<Vec<FactoredExample>> {
        let all = read_shard(&prep.join(name))?;
        let n = all.len();
        let kept: Vec<_> = all.into_iter().filter(fits).collect();
        if kept.len() < n {
            log::warn!("{name}: dropped {} examples longer than max_len {}", n - kept.len(), mcfg.max_len);
        }
        Ok(kept)
    };
    let (train_set, dev_set) = (load("train.shard")?, load("dev.shard")?);
    let model = Transformer::new(mcfg, &mut rng::derived(cfg.get("seed")?, 100))?;
    create_dir(out)?;
    cfg.write_to(out)?;
    for f in ["vocab.txt", "truecase.tsv", "registry.tsv"] {
        fs::copy(prep.join(f), out.join(f)).map_err(|e| Error::io(prep.join(f), e))?;
    }
    trainer::train(model, &train_set, &dev_set, &cfg.train_config()?, Some(out))
}

/// A trained model with its preprocessing, ready to translate raw text.
pub struct Translator {
    pub model: Transformer,
    pub pipeline: TextPipeline,
    pub registry: Registry,
}

impl Translator {
    /// Opens a model directory written by [`train_model`]; uses its `best`
    /// checkpoint.
    pub fn open(dir: &Path) -> Result<Self> {
        Self::open_checkpoint(dir, &dir.join("best"))
    }

    pub fn open_checkpoint(dir: &Path, checkpoint: &Path) -> Result<Self> {
        let registry = load_registry(dir)?;
        let pipeline = load_pipeline(dir)?;
        let model = Transformer::load(checkpoint)?;
        if model.config().vocab_size != pipeline.vocab.len() {
            return Err(Error::Format(format!(
                "{}: model vocabulary {} does not match vocab.txt ({})",
                checkpoint.display(),
                model.config().vocab_size,
                pipeline.vocab.len()
            )));
        }
        Ok(Translator { model, pipeline, registry })
    }

    /// Translates one raw sentence into `lang` and `style`. `max_len` 0
    /// means twice the source length plus ten pieces.
    pub fn translate(&self, line: &str, lang: LangId, style: StyleId, beam: usize, max_len: usize) -> Result<String> {
        let mut src = self.pipeline.encode(line);
        if src.is_empty() {
            return Ok(String::new());
        }
        let cap = self.model.config().max_len;
        if src.len() > cap {
            log::warn!("source of {} pieces truncated to {cap}", src.len());
            src.truncate(cap);
        }
        let limit = if max_len == 0 { 2 * src.len() + 10 } else { max_len };
        let hyp = self.model.translate(&src, lang, style, beam, limit)?;
        Ok(self.pipeline.decode(hyp.output()))
    }

    pub fn translate_lines<S: AsRef<str> + Sync>(
        &self,
        lines: &[S],
        lang: LangId,
        style: StyleId,
        beam: usize,
        max_len: usize,
        workers: usize,
    ) -> Result<Vec<String>> {
        self.registry.lang_name(lang)?;
        self.registry.style_name(style)?;
        thread_pool(workers)?.install(|| lines.par_iter().map(|l| self.translate(l.as_ref(), lang, style, beam, max_len)).collect())
    }
}

fn tokenized(lines: &[String]) -> Vec<Vec<String>> {
    lines.iter().map(|l| tokenize(l).tokens).collect()
}

/// Trains one classifier per style on the `train/` cells of `lang` and
/// writes `clf.{style}` plus `accuracy.tsv` under `out`.
pub fn train_classifiers(cfg: &RunConfig, data: &Path, lang: &str, shuffle_labels: bool, out: &Path) -> Result<Vec<ClassifierReport>> {
    let reg = load_registry(data)?;
    reg.lang(lang)?;
    let cap: usize = cfg.get("clf.max_per_style")?;
    let mut corpus = Vec::new();
    for s in reg.styles() {
        let lines = read_lines(&cell_path(data, "train", reg.style_name(s)?, lang))?;
        let mut sents = tokenized(&lines);
        if cap > 0 {
            sents.truncate(cap);
        }
        corpus.push(sents);
    }
    let cnn = cfg.cnn_config()?;
    create_dir(out)?;
    cfg.write_to(out)?;
    let mut reports = Vec::new();
    let mut lines = Vec::new();
    for s in reg.styles() {
        let (clf, rep) = classifier::train_classifier(s.index(), &corpus, &cnn, shuffle_labels)?;
        let name = reg.style_name(s)?;
        clf.save(&out.join(format!("clf.{name}")))?;
        log::info!("classifier {name}: validation accuracy {:.4}", rep.val_accuracy);
        lines.push(format!("{name}\t{:.6}\t{}\t{}", rep.val_accuracy, rep.train_size, rep.val_size));
        reports.push(rep);
    }
    write_lines(&out.join("accuracy.tsv"), &lines)?;
    write_text(&out.join("registry.tsv"), &reg.to_text())?;
    Ok(reports)
}

/// Loads `clf.{style}` for every style of the directory's registry.
pub fn load_classifiers(dir: &Path) -> Result<(Registry, Vec<StyleClassifier>)> {
    let reg = load_registry(dir)?;
    let clfs = reg.styles().map(|s| StyleClassifier::load(&dir.join(format!("clf.{}", reg.style_name(s)?)))).collect::<Result<_>>()?;
    Ok((reg, clfs))
}

/// Percentage of `input` lines each style's classifier accepts; per-style
/// `{style}.tsv` reports go to `out`.
pub fn classify_file(cfg: &RunConfig, classifiers: &Path, input: &Path, out: &Path) -> Result<Vec<(String, f64)>> {
    let (reg, clfs) = load_classifiers(classifiers)?;
    let sents = tokenized(&read_lines(input)?);
    create_dir(out)?;
    cfg.write_to(out)?;
    let mut result = Vec::new();
    for (s, clf) in reg.styles().zip(&clfs) {
        let name = reg.style_name(s)?.to_string();
        let scores = clf.scores(&sents)?;
        classifier::write_report(&out.join(format!("{name}.tsv")), &scores)?;
        result.push((name, classifier::classify_corpus(clf, &sents)?));
    }
    write_lines(&out.join("summary.tsv"), &result.iter().map(|(n, p)| format!("{n}\t{p:.2}")).collect::<Vec<_>>())?;
    Ok(result)
}

/// Evaluation of every style direction on a synthetic grid.
#[derive(Clone, Debug)]
pub struct GridEvaluation {
    pub report: EvalReport,
    /// transfer[src][tgt], off-diagonal only.
    pub transfer: Vec<Vec<Option<TransferScore>>>,
    /// Clitics in each style's target-language test references.
    pub reference_contractions: Vec<usize>,
    /// Tokenized hypotheses per direction.
    pub hypotheses: Vec<Vec<Vec<Vec<String>>>>,
}

pub struct EvalRequest<'a> {
    pub synth: &'a Path,
    pub model: &'a Path,
    pub classifiers: Option<&'a Path>,
    pub out: &'a Path,
}

/// Translates the `src_lang` test cells of every style into every style of
/// `tgt_lang`. Scores are against source-style references; the census and
/// classifier rates go in the report, transfer rates in `transfer.tsv`.
pub fn evaluate(cfg: &RunConfig, req: &EvalRequest) -> Result<GridEvaluation> {
    let reg = load_registry(req.synth)?;
    let (src_name, tgt_name) = (cfg.raw("eval.src_lang")?.to_string(), cfg.raw("eval.tgt_lang")?.to_string());
    let tgt_lang = reg.lang(&tgt_name)?;
    reg.lang(&src_name)?;
    let translator = Translator::open(req.model)?;
    let synonyms = match fs::read_to_string(req.synth.join("synonyms.tsv")) {
        Ok(t) => Some(SynonymTable::from_text(&t)?),
        Err(_) => None,
    };
    let classifiers = req.classifiers.map(load_classifiers).transpose()?.map(|(_, c)| c);
    let (beam, max_len, workers): (usize, usize, usize) = (cfg.get("decode.beam")?, cfg.get("decode.max_len")?, cfg.get("workers")?);
    let styles: Vec<StyleId> = reg.styles().collect();
    let names: Vec<String> = styles.iter().map(|&s| reg.style_name(s).map(str::to_string)).collect::<Result<_>>()?;
    let mut sources = Vec::new();
    let mut refs = Vec::new();
    for name in &names {
        sources.push(read_lines(&cell_path(req.synth, "test", name, &src_name))?);
        refs.push(tokenized(&read_lines(&cell_path(req.synth, "test", name, &tgt_name))?));
    }
    create_dir(req.out)?;
    cfg.write_to(req.out)?;
    let n = styles.len();
    let mut report = EvalReport::new(names.clone());
    report.metadata.push(("direction".into(), format!("{src_name}->{tgt_name}")));
    report.metadata.push(("beam".into(), beam.to_string()));
    report.metadata.push(("synonyms".into(), if synonyms.is_some() { "synonyms.tsv" } else { "none" }.into()));
    let reference_contractions: Vec<usize> = refs.iter().map(|r| count_contractions(r)).collect();
    for (name, c) in names.iter().zip(&reference_contractions) {
        report.metadata.push((format!("reference_contractions.{name}"), c.to_string()));
    }
    let mut transfer = vec![vec![None; n]; n];
    let mut hypotheses = vec![Vec::new(); n];
    let mut transfer_lines = vec!["src\ttgt\tcontraction_sites\tcontractions_converted\tsynonym_sites\tsynonyms_converted".to_string()];
    for a in 0..n {
        for b in 0..n {
            let out = translator.translate_lines(&sources[a], tgt_lang, styles[b], beam, max_len, workers)?;
            write_lines(&req.out.join(format!("hyp.{}.{}.txt", names[a], names[b])), &out)?;
            let hyps = tokenized(&out);
            let cell = report.cell_mut(a, b);
            cell.bleu = Some(bleu(&hyps, &refs[a])?);
            cell.meteor = Some(meteor_lite(&hyps, &refs[a], synonyms.as_ref())?);
            cell.contractions = Some(count_contractions(&hyps));
            if let Some(clfs) = &classifiers {
                if !hyps.is_empty() {
                    cell.reference_pct = Some(classifier::classify_corpus(&clfs[b], &refs[a])?);
                    cell.system_pct = Some(classifier::classify_corpus(&clfs[b], &hyps)?);
                }
            }
            if a != b {
                let t = score_style_transfer(&hyps, &refs[a], &refs[b])?;
                transfer_lines.push(format!(
                    "{}\t{}\t{}\t{}\t{}\t{}",
                    names[a], names[b], t.contraction_sites, t.contractions_converted, t.synonym_sites, t.synonyms_converted
                ));
                transfer[a][b] = Some(t);
            }
            hypotheses[a].push(hyps);
        }
    }
    report.write_tsv(req.out)?;
    write_lines(&req.out.join("transfer.tsv"), &transfer_lines)?;
    write_text(&req.out.join("report.txt"), &report.render())?;
    Ok(GridEvaluation { report, transfer, reference_contractions, hypotheses })
}

/// Toy-scale settings for `demo`, applied before any config file or flag.
pub fn demo_config() -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.apply_text(
        "synth.num_concepts=60\nsynth.train=300\nsynth.dev=30\nsynth.test=40\nprep.vocab_size=600\n\
         model.model_dim=32\nmodel.token_embed_dim=32\nmodel.ffn_dim=64\nmodel.heads=2\n\
         train.lr=0.002\ntrain.checkpoint_interval=100\ntrain.max_updates=300\ntrain.batch_words=400\n\
         decode.beam=2\nclf.embed_dim=32\nclf.filters=32\nclf.epochs=2\n",
        "demo defaults",
    )
    .expect("demo keys are known");
    cfg
}

/// gen-synth, preprocess, train, classifier training and evaluation in
/// sub-directories of `out`.
pub fn demo(cfg: &RunConfig, out: &Path) -> Result<GridEvaluation> {
    let (synth, prep, model, clf, eval) = (out.join("synth"), out.join("prep"), out.join("model"), out.join("classifiers"), out.join("eval"));
    gen_synth(cfg, &synth)?;
    preprocess(cfg, &synth, &prep)?;
    train_model(cfg, &prep, &model)?;
    let tgt = cfg.raw("eval.tgt_lang")?.to_string();
    train_classifiers(cfg, &synth, &tgt, false, &clf)?;
    let result = evaluate(cfg, &EvalRequest { synth: &synth, model: &model, classifiers: Some(&clf), out: &eval })?;
    cfg.write_to(out)?;
    Ok(result)
}

#[derive(Parser, Debug)]
#[command(name = "stylemux", version, about = "Factored multilingual, multi-style translation")]
struct Cli {
    /// key=value config file
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Internal parallelism; 1 is bit-deterministic
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Override a single config key (repeatable)
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic language x style corpus with ground truth
    GenSynth {
        #[arg(long)]
        out: PathBuf,
    },
    /// Learn truecasing and subwords, filter, and write factored shards
    Preprocess {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model on a preprocessed directory
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Translate a file into a target language and style
    Translate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long)]
        tgt_lang: String,
        #[arg(long)]
        tgt_style: String,
        #[arg(long)]
        beam: Option<usize>,
        #[arg(long)]
        max_len: Option<usize>,
    },
    /// Score every style direction on a synthetic grid
    Evaluate {
        #[arg(long)]
        synth: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        classifiers: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        src_lang: Option<String>,
        #[arg(long)]
        tgt_lang: Option<String>,
        #[arg(long)]
        beam: Option<usize>,
        #[arg(long)]
        max_len: Option<usize>,
    },
    /// Train style classifiers (--train-from) or score a file (--input)
    Classify {
        #[arg(long, conflicts_with = "input", required_unless_present = "input")]
        train_from: Option<PathBuf>,
        #[arg(long)]
        lang: Option<String>,
        #[arg(long, requires = "train_from")]
        shuffle_labels: bool,
        #[arg(long, requires = "input")]
        classifiers: Option<PathBuf>,
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the whole pipeline at toy scale
    Demo {
        #[arg(long)]
        out: PathBuf,
    },
}

fn resolve(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = if matches!(cli.command, Command::Demo { .. }) { demo_config() } else { RunConfig::default() };
    if let Some(path) = &cli.config {
        cfg.apply_text(&read_text(path)?, &path.display().to_string())?;
    }
    for kv in &cli.set {
        let (k, v) = kv.split_once('=').ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got {kv:?}")))?;
        cfg.set(k, v)?;
    }
    if let Some(s) = cli.seed {
        cfg.set("seed", s.to_string())?;
    }
    if let Some(w) = cli.workers {
        cfg.set("workers", w.to_string())?;
    }
    match &cli.command {
        Command::Translate { beam, max_len, .. } | Command::Evaluate { beam, max_len, .. } => {
            if let Some(b) = beam {
                cfg.set("decode.beam", b.to_string())?;
            }
            if let Some(m) = max_len {
                cfg.set("decode.max_len", m.to_string())?;
            }
        }
        _ => {}
    }
    if let Command::Evaluate { src_lang, tgt_lang, .. } = &cli.command {
        if let Some(l) = src_lang {
            cfg.set("eval.src_lang", l.clone())?;
        }
        if let Some(l) = tgt_lang {
            cfg.set("eval.tgt_lang", l.clone())?;
        }
    }
    Ok(cfg)
}

fn execute(cli: Cli) -> Result<()> {
    let cfg = resolve(&cli)?;
    match cli.command {
        Command::GenSynth { out } => {
            let c = gen_synth(&cfg, &out)?;
            println!("wrote {} test sentences to {}", c.test.len(), out.display());
        }
        Command::Preprocess { data, out } => {
            let s = preprocess(&cfg, &data, &out)?;
            println!("train_pairs\t{}\ndev_pairs\t{}", s.train_pairs, s.dev_pairs);
            for (k, v) in &s.discarded {
                println!("discard_{k}\t{v}");
            }
        }
        Command::Train { data, out } => {
            let o = train_model(&cfg, &data, &out)?;
            let best = o.best_record();
            println!("best step {} val_ppl {:.4}{}", best.step, best.val_ppl, if o.stopped_early { " (early stop)" } else { "" });
        }
        Command::Translate { model, input, output, tgt_lang, tgt_style, .. } => {
            let t = Translator::open(&model)?;
            let (lang, style) = (t.registry.lang(&tgt_lang)?, t.registry.style(&tgt_style)?);
            let lines = read_lines(&input)?;
            let out = t.translate_lines(&lines, lang, style, cfg.get("decode.beam")?, cfg.get("decode.max_len")?, cfg.get("workers")?)?;
            write_lines(&output, &out)?;
            let mut resolved = output.clone().into_os_string();
            resolved.push(".run.cfg");
            write_text(Path::new(&resolved), &format!("{}tgt_lang={tgt_lang}\ntgt_style={tgt_style}\n", cfg.to_text()))?;
        }
        Command::Evaluate { synth, model, classifiers, out, .. } => {
            let r = evaluate(&cfg, &EvalRequest { synth: &synth, model: &model, classifiers: classifiers.as_deref(), out: &out })?;
            print!("{}", r.report.render());
        }
        Command::Classify { train_from: Some(data), lang, shuffle_labels, out, .. } => {
            let lang = lang.unwrap_or(cfg.raw("eval.tgt_lang")?.to_string());
            let reports = train_classifiers(&cfg, &data, &lang, shuffle_labels, &out)?;
            for (i, r) in reports.iter().enumerate() {
                println!("style {i}\tval_accuracy {:.4}", r.val_accuracy);
            }
        }
        Command::Classify { input: Some(input), classifiers, out, .. } => {
            let dir = classifiers.ok_or_else(|| Error::Config("--input needs --classifiers".into()))?;
            for (name, pct) in classify_file(&cfg, &dir, &input, &out)? {
                println!("{name}\t{pct:.2}");
            }
        }
        Command::Classify { .. } => return Err(Error::Config("classify needs --train-from or --input".into())),
        Command::Demo { out } => {
            let r = demo(&cfg, &out)?;
            print!("{}", r.report.render());
        }
    }
    Ok(())
}

/// Parses arguments, runs the command and returns the process exit code:
/// 0 success, 1 usage or config, 2 data or format, 3 numerical abort.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("stylemux: {e}");
            e.exit_code()
        }
    }
}
