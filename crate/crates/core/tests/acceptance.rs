//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
//! fails. `STYLEMUX_ACCEPTANCE_SKIP=5,6,7` skips the listed criteria (they
//! are reported as SKIP); by default every criterion runs, including the
//! long zero-shot training run.

mod common;

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use common::ops::cases;
use common::transformer::transformer_gradcheck;
use common::gradcheck;
use stylemux::classifier::{train_classifier, CnnConfig};
use stylemux::cli::{self, EvalRequest, GridEvaluation, RunConfig};
use stylemux::corpus::{filter_pair, Batch, DiscardReason, FactoredExample, FilterConfig, FilterDecision, LangId, StyleId};
use stylemux::eval::{self, relative_metric_decrease, relative_style_change, BleuStats, MeteorParams, SynonymTable};
use stylemux::model::{ModelConfig, Pass, Transformer};
use stylemux::rng;
use stylemux::synthlang::{self, SplitSizes, SynthSpec};
use stylemux::tensor::Tape;
use stylemux::text::{learn_subwords, tokenize, TextPipeline, TruecaseModel, BOS, EOS};
use stylemux::trainer::{Adam, PlateauEvent, PlateauSchedule};

type Outcome = Result<String, String>;

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn work_dir(name: &str) -> PathBuf {
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance").join(name);
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).expect("work dir");
    dir
}

fn toks(s: &str) -> Vec<String> {
    s.split_whitespace().map(str::to_string).collect()
}

// 1 ------------------------------------------------------------------------

fn gradient_fidelity() -> Outcome {
    let start = Instant::now();
    let (mut w32, mut w64) = (0.0f64, 0.0f64);
    let mut failed = Vec::new();
    for (name, inputs, build) in cases::<f32>() {
        let e = gradcheck(&inputs, 1e-3, 1e-1, build);
        if e >= 1e-2 {
            failed.push(format!("{name}/f32 {e:.2e}"));
        }
        w32 = w32.max(e);
    }
    for (name, inputs, build) in cases::<f64>() {
        let e = gradcheck(&inputs, 1e-5, 1e-3, build);
        if e >= 1e-5 {
            failed.push(format!("{name}/f64 {e:.2e}"));
        }
        w64 = w64.max(e);
    }
    let (t32, t64) = (transformer_gradcheck::<f32>(1e-3, 1e-1), transformer_gradcheck::<f64>(1e-5, 1e-3));
    if t32 >= 1e-2 {
        failed.push(format!("transformer/f32 {t32:.2e}"));
    }
    if t64 >= 1e-5 {
        failed.push(format!("transformer/f64 {t64:.2e}"));
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        failed.is_empty() && secs < 60.0,
        format!("ops max rel err f32 {w32:.2e} f64 {w64:.2e}; transformer f32 {t32:.2e} f64 {t64:.2e}; {secs:.1}s {failed:?}"),
    )
}

// 2 ------------------------------------------------------------------------

fn toy_pairs() -> Vec<FactoredExample> {
    use rand::Rng as _;
    let mut r = rng::seeded(42);
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    while out.len() < 64 {
        let len = r.gen_range(3..=7);
        let src: Vec<u32> = (0..len).map(|_| r.gen_range(4..24)).collect();
        if !seen.insert(src.clone()) {
            continue;
        }
        // reversed, each token shifted within the content range
        let tgt: Vec<u32> = src.iter().rev().map(|&t| 4 + (t - 4 + 7) % 20).collect();
        out.push(FactoredExample {
            factor_lang: vec![LangId(0); src.len()],
            factor_style: vec![StyleId(0); src.len()],
            src_ids: src,
            tgt_ids: std::iter::once(BOS).chain(tgt).chain([EOS]).collect(),
        });
    }
    out
}

fn overfit_model() -> (Transformer, Vec<FactoredExample>, usize, f64) {
    let cfg = ModelConfig {
        layers: 2,
        model_dim: 32,
        heads: 4,
        ffn_dim: 64,
        token_embed_dim: 32,
        factor_embed_dim: 4,
        dropout: 0.0,
        vocab_size: 24,
        max_len: 16,
        num_langs: 1,
        num_styles: 1,
    };
    let data = toy_pairs();
    let batch = Batch::from_examples(&data, (0..data.len()).collect()).expect("batch");
    let mut model: Transformer = Transformer::new(cfg, &mut rng::seeded(7)).expect("model");
    let mut adam = Adam::new(model.params(), 0.9, 0.999, 1e-8);
    let mut loss = f64::INFINITY;
    let mut updates = 0;
    while updates < 2000 && loss >= 0.1 {
        let mut tape = Tape::new();
        let (l, _) = model.forward_loss(&mut tape, &batch, &mut Pass { grad: true, dropout_rng: None }).expect("forward");
        loss = tape.value(l).item() as f64;
        if loss < 0.1 {
            break;
        }
        tape.backward(l).expect("backward");
        model.params_mut().zero_grads();
        model.params_mut().accumulate_grads(&tape);
        drop(tape);
        adam.update(model.params_mut(), 3e-3).expect("update");
        updates += 1;
    }
    (model, data, updates, loss)
}

fn overfit_smoke(model: &Transformer, data: &[FactoredExample], updates: usize, loss: f64, secs: f64) -> Outcome {
    let exact = data
        .iter()
        .filter(|e| {
            let hyp = model.greedy(&e.src_ids, LangId(0), StyleId(0), 16).expect("greedy");
            hyp.output() == &e.tgt_ids[1..e.tgt_ids.len() - 1]
        })
        .count();
    let frac = exact as f64 / data.len() as f64;
    check(
        loss < 0.1 && frac >= 0.95 && secs < 300.0,
        format!("loss {loss:.4} after {updates} updates; greedy exact {exact}/{} ({:.1}%); {secs:.1}s", data.len(), 100.0 * frac),
    )
}

// 3 ------------------------------------------------------------------------

/// Independent corpus BLEU-4 with explicit n-gram lists.
fn bleu_oracle(hyps: &[&str], refs: &[&str]) -> f64 {
    let mut m = [0usize; 4];
    let mut t = [0usize; 4];
    let (mut hl, mut rl) = (0, 0);
    for (h, r) in hyps.iter().zip(refs) {
        let (h, r) = (toks(&h.to_lowercase()), toks(&r.to_lowercase()));
        hl += h.len();
        rl += r.len();
        for n in 1..=4 {
            let grams = |s: &[String]| -> Vec<Vec<String>> { s.windows(n).map(|w| w.to_vec()).collect() };
            let mut pool = grams(&r);
            for g in grams(&h) {
                t[n - 1] += 1;
                if let Some(i) = pool.iter().position(|x| *x == g) {
                    pool.swap_remove(i);
                    m[n - 1] += 1;
                }
            }
        }
    }
    if m.iter().any(|&x| x == 0) {
        return 0.0;
    }
    let logp: f64 = (0..4).map(|i| (m[i] as f64 / t[i] as f64).ln()).sum::<f64>() / 4.0;
    let bp = (1.0 - rl as f64 / hl as f64).min(0.0).exp();
    bp * logp.exp()
}

fn metric_oracles() -> Outcome {
    let mut notes = Vec::new();
    let mut ok = true;
    let corpus = ["The cat sat on the mat .", "I 'll go , she 's here ."];
    let tc: Vec<Vec<String>> = corpus.iter().map(|s| toks(s)).collect();
    let self_bleu = eval::bleu(&tc, &tc).map_err(|e| e.to_string())?;
    ok &= self_bleu == 1.0;
    notes.push(format!("bleu(x,x)={self_bleu}"));

    let mut st = BleuStats::default();
    st.add_sentence(&toks("the the the cat"), &toks("the cat sat"));
    ok &= (st.precision(1) - 0.5).abs() < 1e-12 && st.score() == 0.0;
    notes.push(format!("p1('the the the cat')={}", st.precision(1)));

    let hyps = ["the cat sat on a mat today", "a dog ran in the big park", "he said it was fine ."];
    let refs = ["the cat sat on the mat", "the dog ran in the big green park", "he said it was fine ."];
    let oracle = bleu_oracle(&hyps, &refs);
    let got = eval::bleu(
        &hyps.iter().map(|s| toks(s)).collect::<Vec<_>>(),
        &refs.iter().map(|s| toks(s)).collect::<Vec<_>>(),
    )
    .map_err(|e| e.to_string())?;
    ok &= oracle > 0.0 && (got - oracle).abs() < 1e-4;
    notes.push(format!("hand bleu {got:.6} vs {oracle:.6}"));

    // (hyp, ref, synonym pairs, closed form)
    let p = MeteorParams::default();
    let closed = |m: f64, hl: f64, rl: f64, ch: f64| {
        let (pp, rr) = (m / hl, m / rl);
        let f = pp * rr / (p.alpha * pp + (1.0 - p.alpha) * rr);
        f * (1.0 - p.gamma * (ch / m).powf(p.beta))
    };
    let syn = SynonymTable::new([("big", 0usize), ("large", 0)]);
    let meteor_cases = [
        ("a b c d", "a b c d", closed(4.0, 4.0, 4.0, 1.0)),
        ("a b x d e", "a b c d", closed(3.0, 5.0, 4.0, 2.0)),
        ("dogs barked the large", "the big dog barked", closed(4.0, 4.0, 4.0, 2.0)),
    ];
    for (h, r, want) in meteor_cases {
        let got = eval::meteor_sentence(&toks(h), &toks(r), Some(&syn), p);
        ok &= (got - want).abs() < 1e-6;
        notes.push(format!("meteor '{h}' {got:.6}/{want:.6}"));
    }

    let rel = [
        (relative_style_change(8.1, 24.3), 200.0),
        (relative_style_change(4.4, 14.0), 218.0),
        (relative_metric_decrease(33.1, 26.2), 20.9),
        (relative_metric_decrease(30.5, 27.4), 10.2),
    ];
    for (got, want) in rel {
        let g = got.ok_or("undefined relative change")?;
        // style changes are printed as whole percents; the decreases were computed
        // from unrounded scores, so the printed inputs only pin them to 0.1 points
        ok &= if want >= 100.0 { g.round() == want } else { (g - want).abs() <= 0.1 };
        notes.push(format!("{g:.2}%"));
    }
    ok &= relative_style_change(0.0, 5.0).is_none();
    check(ok, notes.join("; "))
}

// 4 ------------------------------------------------------------------------

/// From-scratch simulation: the number of checkpoints since the last strict
/// best decides everything.
fn plateau_oracle(ppls: &[f64], pd: usize, ps: usize) -> Vec<(PlateauEvent, u32)> {
    let mut best = f64::INFINITY;
    let mut best_at = 0usize;
    let mut decays = 0u32;
    let mut out = Vec::new();
    for (i, &p) in ppls.iter().enumerate() {
        let i = i + 1;
        let ev = if p < best {
            best = p;
            best_at = i;
            PlateauEvent::Improved
        } else {
            let since = i - best_at;
            if since >= ps {
                PlateauEvent::Stop
            } else if since % pd == 0 {
                decays += 1;
                PlateauEvent::Decayed
            } else {
                PlateauEvent::NoChange
            }
        };
        out.push((ev, decays));
        if ev == PlateauEvent::Stop {
            break;
        }
    }
    out
}

fn schedule_semantics() -> Outcome {
    use rand::Rng as _;
    let mut scripts: Vec<Vec<f64>> = vec![
        std::iter::once(10.0).chain(std::iter::repeat(10.0).take(40)).collect(),
        (0..20).map(|i| 50.0 - i as f64).chain(std::iter::repeat(40.0).take(40)).collect(),
        std::iter::once(9.0).chain(std::iter::repeat(9.5).take(12)).chain([8.0]).chain(std::iter::repeat(8.5).take(40)).collect(),
    ];
    let mut r = rng::seeded(4);
    for _ in 0..20 {
        scripts.push((0..120).map(|i| 30.0 - 0.05 * i as f64 + r.gen_range(0.0..3.0)).collect());
    }
    let mut notes = Vec::new();
    for (k, s) in scripts.iter().enumerate() {
        let want = plateau_oracle(s, 8, 32);
        let mut sched = PlateauSchedule::new(1.0, 0.7, 8, 32);
        for (i, &(ev, decays)) in want.iter().enumerate() {
            let got = sched.observe(s[i]);
            let lr_ok = (sched.lr() - 0.7f64.powi(decays as i32)).abs() < 1e-12;
            if got != ev || sched.decays != decays || !lr_ok {
                return Err(format!("script {k} checkpoint {}: got {got:?}/{} want {ev:?}/{decays}", i + 1, sched.decays));
            }
        }
        if k == 0 {
            let first_decay = want.iter().position(|(e, _)| *e == PlateauEvent::Decayed).map(|i| i + 1);
            let stop = want.iter().position(|(e, _)| *e == PlateauEvent::Stop).map(|i| i + 1);
            notes.push(format!("flat script: first decay at checkpoint {first_decay:?} (lr 0.7), stop at {stop:?}"));
            if first_decay != Some(9) || stop != Some(33) {
                return Err(notes.join("; "));
            }
        }
    }
    notes.push(format!("{} scripts match the oracle", scripts.len()));
    Ok(notes.join("; "))
}

// 5, 6, 7 --------------------------------------------------------------------

const ZERO_SHOT_CFG: &str = "synth.train=20000\nsynth.dev=100\nsynth.test=300\nprep.vocab_size=4000\n\
train.lr=0.001\ntrain.checkpoint_interval=500\ntrain.max_updates=4000\ntrain.batch_words=2000\n\
model.model_dim=64\nmodel.layers=2\nmodel.heads=4\nmodel.ffn_dim=256\nmodel.dropout=0.1\n\
eval.src_lang=l1\neval.tgt_lang=l0\ndecode.beam=5\n";

struct ZeroShot {
    eval: GridEvaluation,
    train_secs: f64,
    classifier_acc: Vec<f64>,
    synth: PathBuf,
    cfg: RunConfig,
}

fn run_zero_shot() -> Result<ZeroShot, String> {
    let dir = work_dir("zero_shot");
    let mut cfg = RunConfig::default();
    cfg.apply_text(ZERO_SHOT_CFG, "acceptance").map_err(|e| e.to_string())?;
    let (synth, prep, model, clf, out) = (dir.join("synth"), dir.join("prep"), dir.join("model"), dir.join("classifiers"), dir.join("eval"));
    let e = |e: stylemux::Error| e.to_string();
    cli::gen_synth(&cfg, &synth).map_err(e)?;
    cli::preprocess(&cfg, &synth, &prep).map_err(e)?;
    let start = Instant::now();
    cli::train_model(&cfg, &prep, &model).map_err(e)?;
    let train_secs = start.elapsed().as_secs_f64();
    let reports = cli::train_classifiers(&cfg, &synth, "l0", false, &clf).map_err(e)?;
    let eval = cli::evaluate(&cfg, &EvalRequest { synth: &synth, model: &model, classifiers: Some(&clf), out: &out }).map_err(e)?;
    Ok(ZeroShot { eval, train_secs, classifier_acc: reports.iter().map(|r| r.val_accuracy).collect(), synth, cfg })
}

fn zero_shot_transfer(z: &ZeroShot) -> Outcome {
    let ev = &z.eval;
    let n = ev.report.styles.len();
    let planted = ev.reference_contractions[0];
    let mut notes = vec![format!("training {:.1} min", z.train_secs / 60.0), format!("planted clitics {planted}")];
    let mut ok = z.train_secs < 3600.0 && planted > 0;
    // (a) contraction census relative to the planted sites
    for a in 0..n {
        for b in 0..n {
            let c = ev.report.cells[a][b].contractions.unwrap_or(0) as f64 / planted.max(1) as f64;
            ok &= if b == 0 { c >= 0.5 } else { c <= 0.05 };
            notes.push(format!("s{a}->s{b} clitics {:.0}%", 100.0 * c));
        }
    }
    // (b) synonym swaps against cross-style references
    let (mut sites, mut hits) = (0, 0);
    for row in &ev.transfer {
        for t in row.iter().flatten() {
            sites += t.synonym_sites;
            hits += t.synonyms_converted;
        }
    }
    let acc = hits as f64 / sites.max(1) as f64;
    ok &= sites > 0 && acc >= 0.6;
    notes.push(format!("synonym swap accuracy {:.1}% of {sites}", 100.0 * acc));
    // (c) the most dissimilar style pair by reference token differences
    let synth = synthlang::generate(&z.cfg.synth_spec().map_err(|e| e.to_string())?, z.cfg.split_sizes().map_err(|e| e.to_string())?)
        .map_err(|e| e.to_string())?;
    let diff = |a: usize, b: usize| -> usize {
        synth.test.iter().map(|ex| synth.realize(ex, 0, a).iter().zip(synth.realize(ex, 0, b)).filter(|(x, y)| **x != *y).count()).sum()
    };
    let mut pairs: Vec<(usize, usize, usize)> = (0..n).flat_map(|a| ((a + 1)..n).map(move |b| (a, b))).map(|(a, b)| (diff(a, b), a, b)).collect();
    pairs.sort();
    let (_, a, b) = *pairs.last().ok_or("need two styles")?;
    for (x, y) in [(a, b), (b, a)] {
        let change = ev.report.relative_style_change(x, y);
        let c = ev.report.cells[x][y].clone();
        ok &= change.is_some_and(|v| v >= 100.0);
        notes.push(format!(
            "s{x}->s{y} classifier {:.1}% -> {:.1}% ({})",
            c.reference_pct.unwrap_or(f64::NAN),
            c.system_pct.unwrap_or(f64::NAN),
            change.map_or("n/a".into(), |v| format!("{v:+.0}%"))
        ));
    }
    let _ = &z.synth;
    check(ok, notes.join("; "))
}

fn classifier_sanity(z: Option<&ZeroShot>) -> Outcome {
    let dir;
    let synth_dir = match z {
        Some(z) => z.synth.clone(),
        None => {
            dir = work_dir("classifier");
            let mut cfg = RunConfig::default();
            cfg.apply_text("synth.train=5000\nsynth.dev=10\nsynth.test=10\n", "acceptance").map_err(|e| e.to_string())?;
            cli::gen_synth(&cfg, &dir).map_err(|e| e.to_string())?;
            dir
        }
    };
    let accs = match z {
        Some(z) => z.classifier_acc.clone(),
        None => {
            let out = synth_dir.join("classifiers");
            cli::train_classifiers(&RunConfig::default(), &synth_dir, "l0", false, &out)
                .map_err(|e| e.to_string())?
                .iter()
                .map(|r| r.val_accuracy)
                .collect()
        }
    };
    let corpus: Vec<Vec<Vec<String>>> = (0..accs.len())
        .map(|s| {
            let lines = fs::read_to_string(synth_dir.join(format!("train/s{s}.l0.txt"))).expect("train cell");
            lines.lines().take(5000).map(|l| tokenize(l).tokens).collect()
        })
        .collect();
    let (_, control) = train_classifier(0, &corpus, &CnnConfig::default(), true).map_err(|e| e.to_string())?;
    let ok = accs.iter().all(|&a| a >= 0.95) && (control.val_accuracy - 0.5).abs() <= 0.05;
    check(
        ok,
        format!(
            "validation accuracy {}; shuffled-label control {:.1}%",
            accs.iter().enumerate().map(|(i, a)| format!("s{i} {:.1}%", 100.0 * a)).collect::<Vec<_>>().join(", "),
            100.0 * control.val_accuracy
        ),
    )
}

fn metric_asymmetry(z: &ZeroShot) -> Outcome {
    let r = &z.eval.report;
    let n = r.styles.len();
    let mut ok = true;
    let mut notes = Vec::new();
    for a in 0..n {
        for b in 0..n {
            if a == b {
                continue;
            }
            let (bl, me) = (r.relative_bleu_decrease(a, b), r.relative_meteor_decrease(a, b));
            ok &= matches!((bl, me), (Some(x), Some(y)) if y < x);
            notes.push(format!("s{a}->s{b} decrease BLEU {:.1}% METEOR {:.1}%", bl.unwrap_or(f64::NAN), me.unwrap_or(f64::NAN)));
        }
    }
    check(ok, notes.join("; "))
}

// 8 ------------------------------------------------------------------------

fn run_cli(dir: &Path, args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_stylemux")).current_dir(dir).args(args).output().map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr)))
    }
}

fn determinism_and_round_trips(model: &Transformer, data: &[FactoredExample]) -> Outcome {
    let mut notes = Vec::new();
    // same-seed CLI runs
    let tiny = "synth.num_concepts=60\nsynth.train=100\nsynth.dev=10\nsynth.test=10\nprep.vocab_size=600\n\
                model.model_dim=16\nmodel.token_embed_dim=16\nmodel.ffn_dim=32\nmodel.heads=2\n\
                train.lr=0.003\ntrain.checkpoint_interval=20\ntrain.max_updates=40\ntrain.batch_words=300\n\
                clf.embed_dim=8\nclf.filters=8\nclf.epochs=1\n";
    let runs: Vec<PathBuf> = (0..2).map(|i| work_dir(&format!("determinism_{i}"))).collect();
    for d in &runs {
        fs::write(d.join("tiny.cfg"), tiny).map_err(|e| e.to_string())?;
        run_cli(d, &["--config", "tiny.cfg", "--workers", "1", "--seed", "5", "demo", "--out", "demo"])?;
    }
    let mut compared = 0;
    for rel in ["demo/synth/test/ground_truth.jsonl", "demo/prep/train.shard", "demo/model/best", "demo/model/train.log", "demo/eval/hyp.s1.s0.txt", "demo/eval/bleu.tsv", "demo/classifiers/clf.s0"] {
        if fs::read(runs[0].join(rel)).ok() != fs::read(runs[1].join(rel)).ok() {
            return Err(format!("{rel} differs between same-seed runs"));
        }
        compared += 1;
    }
    notes.push(format!("{compared} artifacts bit-identical across same-seed runs"));

    // checkpoint save/load
    let ck = work_dir("checkpoint").join("ckpt");
    model.save(&ck).map_err(|e| e.to_string())?;
    let back = Transformer::load(&ck).map_err(|e| e.to_string())?;
    for e in data.iter().take(8) {
        let (x, y) = (model.encode(&e.src_ids, LangId(0), StyleId(0)).unwrap(), back.encode(&e.src_ids, LangId(0), StyleId(0)).unwrap());
        let pre = vec![e.tgt_ids[..3].to_vec()];
        let (lx, ly) = (model.decode_step(&x, &pre).unwrap(), back.decode_step(&y, &pre).unwrap());
        let bits = |v: &[Vec<f32>]| v.iter().flatten().map(|f| f.to_bits()).collect::<Vec<_>>();
        if bits(&lx) != bits(&ly) || x.memory.data().iter().zip(y.memory.data()).any(|(a, b)| a.to_bits() != b.to_bits()) {
            return Err("reloaded checkpoint changes the forward pass".into());
        }
    }
    notes.push("checkpoint forward bit-identical".into());

    // text pipeline round trip on 10k synthetic sentences
    let spec = SynthSpec { seed: 11, ..SynthSpec::default() };
    let synth = synthlang::generate(&spec, SplitSizes { train: 500, dev: 0, test: 1200 }).map_err(|e| e.to_string())?;
    let train: Vec<Vec<String>> = synth
        .train
        .iter()
        .enumerate()
        .flat_map(|(s, exs)| exs.iter().flat_map(move |ex| (0..3).map(move |l| (ex, l, s))))
        .map(|(ex, l, s)| tokenize(&stylemux::text::detokenize(&synth.realize(ex, l, s))).tokens)
        .collect();
    let truecaser = TruecaseModel::train(&train);
    let cased: Vec<Vec<String>> = train.iter().map(|s| truecaser.apply(s)).collect();
    let pipeline = TextPipeline { vocab: learn_subwords(&cased, 1500).map_err(|e| e.to_string())?, truecaser };
    let mut checked = 0;
    'outer: for ex in &synth.test {
        for l in 0..3 {
            for s in 0..3 {
                let raw = stylemux::text::detokenize(&synth.realize(ex, l, s));
                let back = pipeline.decode(&pipeline.encode(&raw));
                if back != raw {
                    return Err(format!("pipeline round trip: {raw:?} -> {back:?}"));
                }
                checked += 1;
                if checked == 10_000 {
                    break 'outer;
                }
            }
        }
    }
    notes.push(format!("{checked} pipeline round trips"));

    // beam vs greedy on 100 decodes: the training sources plus novel ones
    use rand::Rng as _;
    let mut r = rng::seeded(99);
    let mut sources: Vec<Vec<u32>> = data.iter().map(|e| e.src_ids.clone()).collect();
    while sources.len() < 100 {
        let len = r.gen_range(3..=7);
        sources.push((0..len).map(|_| r.gen_range(4..24)).collect());
    }
    let (mut same, mut ge) = (0, 0);
    for s in &sources {
        let g = model.greedy(s, LangId(0), StyleId(0), 16).unwrap();
        let b1 = model.translate(s, LangId(0), StyleId(0), 1, 16).unwrap();
        let b5 = model.translate(s, LangId(0), StyleId(0), 5, 16).unwrap();
        same += usize::from(b1.tokens == g.tokens && b1.log_prob == g.log_prob);
        ge += usize::from(b5.score() >= b1.score());
    }
    notes.push(format!("beam1==greedy {same}/100, beam5>=beam1 {ge}/100"));
    check(same == 100 && ge == 100, notes.join("; "))
}

// 9 ------------------------------------------------------------------------

fn filtering_exactness() -> Outcome {
    use DiscardReason::*;
    let words = |n: usize, w: &str| vec![w; n].join(" ");
    let cases: Vec<(String, String, FilterDecision)> = vec![
        (String::new(), "hello .".into(), FilterDecision::Discard(vec![Empty, NoAlphabetic])),
        ("hello .".into(), "   ".into(), FilterDecision::Discard(vec![Empty, NoAlphabetic])),
        (words(101, "a"), words(60, "b"), FilterDecision::Discard(vec![TooLong])),
        (words(60, "a"), words(101, "b"), FilterDecision::Discard(vec![TooLong])),
        (words(100, "a"), words(100, "b"), FilterDecision::Keep),
        ("123 456 .".into(), "one two .".into(), FilterDecision::Discard(vec![NoAlphabetic])),
        ("one two".into(), "3 , 14".into(), FilterDecision::Discard(vec![NoAlphabetic])),
        (words(10, "a"), "b".into(), FilterDecision::Discard(vec![LengthRatio])),
        ("b".into(), words(10, "a"), FilterDecision::Discard(vec![LengthRatio])),
        (words(9, "a"), "b".into(), FilterDecision::Keep),
        ("b".into(), words(9, "a"), FilterDecision::Keep),
        ("I'll be there at 5 .".into(), "Je serai là à 5 heures .".into(), FilterDecision::Keep),
    ];
    let cfg = FilterConfig::default();
    let mut wrong = Vec::new();
    for (i, (s, t, want)) in cases.iter().enumerate() {
        let (s, t) = (tokenize(s).tokens, tokenize(t).tokens);
        let got = filter_pair(&s, &t, &cfg);
        if got != *want || filter_pair(&s, &t, &cfg) != got {
            wrong.push(format!("pair {}: got {got:?}, want {want:?}", i + 1));
        }
    }
    let kept = cases.len() - cases.iter().filter(|c| !c.2.is_keep()).count();
    check(wrong.is_empty(), if wrong.is_empty() { format!("12 pairs, {kept} kept, every rule exact") } else { wrong.join("; ") })
}

// -------------------------------------------------------------------------

fn main() {
    let skip: HashSet<u32> = std::env::var("STYLEMUX_ACCEPTANCE_SKIP")
        .unwrap_or_default()
        .split(',')
        .filter_map(|s| s.trim().parse().ok())
        .collect();
    let mut results: Vec<(u32, &str, Option<Outcome>, Duration)> = Vec::new();
    let mut record = |id: u32, name: &'static str, f: &mut dyn FnMut() -> Outcome| {
        let start = Instant::now();
        let outcome = if skip.contains(&id) { None } else { Some(f()) };
        let took = start.elapsed();
        let (tag, detail) = match &outcome {
            None => ("SKIP", String::new()),
            Some(Ok(d)) => ("PASS", d.clone()),
            Some(Err(d)) => ("FAIL", d.clone()),
        };
        println!("criterion {id} {name}: {tag} [{:.1}s] {detail}", took.as_secs_f64());
        results.push((id, name, outcome, took));
    };

    record(1, "gradient fidelity", &mut gradient_fidelity);
    let start = Instant::now();
    let (model, data, updates, loss) = overfit_model();
    let secs = start.elapsed().as_secs_f64();
    record(2, "overfit smoke", &mut || overfit_smoke(&model, &data, updates, loss, secs));
    record(3, "metric oracles", &mut metric_oracles);
    record(4, "schedule semantics", &mut schedule_semantics);
    let heavy = !(skip.contains(&5) && skip.contains(&6) && skip.contains(&7));
    let zero_shot = if heavy { Some(run_zero_shot()) } else { None };
    let zs = |f: &dyn Fn(&ZeroShot) -> Outcome| -> Outcome {
        match &zero_shot {
            Some(Ok(z)) => f(z),
            Some(Err(e)) => Err(format!("zero-shot pipeline failed: {e}")),
            None => Err("zero-shot pipeline did not run".into()),
        }
    };
    record(5, "zero-shot transfer", &mut || zs(&zero_shot_transfer));
    record(6, "classifier sanity", &mut || match &zero_shot {
        Some(Ok(z)) => classifier_sanity(Some(z)),
        _ => classifier_sanity(None),
    });
    record(7, "metric asymmetry", &mut || zs(&metric_asymmetry));
    record(8, "determinism and round trips", &mut || determinism_and_round_trips(&model, &data));
    record(9, "filtering exactness", &mut filtering_exactness);

    let failed: Vec<u32> = results.iter().filter(|r| matches!(r.2, Some(Err(_)))).map(|r| r.0).collect();
    let passed = results.iter().filter(|r| matches!(r.2, Some(Ok(_)))).count();
    println!("acceptance: {passed} passed, {} failed, {} skipped", failed.len(), results.len() - passed - failed.len());
    if !failed.is_empty() {
        std::process::exit(1);
    }
}
