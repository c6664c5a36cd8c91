//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero when any criterion fails.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use ctpt::cli::{pretrain_on_suite, RunConfig};
use ctpt::cmaes::{minimize, CmaesState};
use ctpt::data::synthetic::{GeneratedSuite, SuiteConfig};
use ctpt::data::TaskDataset;
use ctpt::frozen_model::{FrozenModel, ModelConfig};
use ctpt::numerics::{Matrix, RngStream};
use ctpt::pipeline::{
    cross_entropy, micro_f1_excluding, weighted_macro_f1, ConfusionMatrix, Pipeline, PipelineConfig, StageConfig, TaskBundle,
};
use ctpt::prompt_engine::{
    attention_offsets, attention_weights, cross_task_attend, gate_combine, project_gate, project_prompt, unpack_attention, AttentionParams,
    GateVector, PromptMatrix, SubspaceProjection,
};
use ctpt::verbalizer::{decode_label, decode_union};

const MAIN_TASKS: [&str; 3] = ["daily", "tv", "ec"];
const ALL_TASKS: [&str; 5] = ["daily", "tv", "ec", "daily_clone", "unrelated"];
const SEEDS: [u64; 5] = [1, 2, 3, 4, 5];

type Outcome = Result<String, String>;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

struct Shipped {
    run: RunConfig,
    suite_cfg: SuiteConfig,
    suite: GeneratedSuite,
}

impl Shipped {
    fn load() -> Self {
        let run = RunConfig::from_file(&configs().join("run.toml")).expect("run.toml");
        let suite_cfg = SuiteConfig::from_file(&configs().join("suite.toml")).expect("suite.toml");
        let suite = GeneratedSuite::generate(&suite_cfg).expect("suite generates");
        Self { run, suite_cfg, suite }
    }

    fn pipeline<'m>(&self, model: &'m FrozenModel, cfg: PipelineConfig) -> Pipeline<'m> {
        let union = cfg.emotional_knowledge.then(|| {
            self.suite_cfg
                .verbalizer_config()
                .union_for(&ALL_TASKS, model.vocab())
                .expect("union")
        });
        Pipeline::new(model, cfg, union).expect("pipeline")
    }

    fn bundle(&self, pipe: &Pipeline<'_>, id: &str, ds: TaskDataset, rng: &RngStream) -> TaskBundle {
        let verb = self
            .suite_cfg
            .verbalizer_config()
            .task_verbalizer(id, pipe.model().vocab())
            .expect("verbalizer");
        let metric = self.suite_cfg.task(id).expect("task").metric;
        pipe.bundle(ds, verb, metric, rng).expect("bundle")
    }

    fn trained(&self, pipe: &Pipeline<'_>, id: &str, rng: &RngStream) -> TaskBundle {
        let mut b = self.bundle(pipe, id, self.suite.task(id).expect("task").clone(), rng);
        pipe.train_tspt(&mut b, rng).expect("tspt");
        b
    }
}

// 1

fn sphere(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

fn rosenbrock(x: &[f64]) -> f64 {
    x.windows(2)
        .map(|w| 100.0 * (w[1] - w[0] * w[0]).powi(2) + (1.0 - w[0]).powi(2))
        .sum()
}

fn cmaes_correctness() -> Outcome {
    let t = Instant::now();
    let mut s = CmaesState::new(20, vec![3.0; 20], 1.0, None).map_err(|e| e.to_string())?;
    minimize(&mut s, &mut RngStream::new(11), 5_000, 1e-8, sphere).map_err(|e| e.to_string())?;
    let (sphere_best, sphere_evals) = (s.best_loss(), s.evaluations());
    let mut r = CmaesState::new(5, vec![0.0; 5], 0.5, None).map_err(|e| e.to_string())?;
    minimize(&mut r, &mut RngStream::new(12), 50_000, 1e-4, rosenbrock).map_err(|e| e.to_string())?;
    let (rosen_best, rosen_evals) = (r.best_loss(), r.evaluations());
    let secs = t.elapsed().as_secs_f64();
    check(
        sphere_best < 1e-8 && sphere_evals <= 5_000 && rosen_best < 1e-4 && rosen_evals <= 50_000 && secs < 60.0,
        format!(
            "sphere d=20 {sphere_best:.2e} in {sphere_evals} evals; rosenbrock d=5 {rosen_best:.2e} in {rosen_evals} evals; {secs:.2}s"
        ),
    )
}

// 2

fn walk_counts(pairs: &[(usize, usize)], c: usize) -> (f64, f64, f64) {
    let (mut tp, mut fp, mut fn_) = (0.0, 0.0, 0.0);
    for &(g, p) in pairs {
        match (g == c, p == c) {
            (true, true) => tp += 1.0,
            (false, true) => fp += 1.0,
            (true, false) => fn_ += 1.0,
            _ => {}
        }
    }
    (tp, fp, fn_)
}

fn harmonic_f1(tp: f64, fp: f64, fn_: f64) -> f64 {
    let p = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
    let r = if tp + fn_ > 0.0 { tp / (tp + fn_) } else { 0.0 };
    if p + r > 0.0 {
        2.0 * p * r / (p + r)
    } else {
        0.0
    }
}

fn metric_oracle() -> Outcome {
    let mut rng = RngStream::new(2);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let k = 2 + rng.below(6);
        let counts: Vec<Vec<u64>> = (0..k)
            .map(|_| (0..k).map(|_| if rng.bernoulli(0.3) { 0 } else { rng.below(12) as u64 }).collect())
            .collect();
        let neutral = if rng.bernoulli(0.2) { None } else { Some(rng.below(k)) };
        let mut pairs = Vec::new();
        for (g, row) in counts.iter().enumerate() {
            for (p, &n) in row.iter().enumerate() {
                pairs.extend(std::iter::repeat_n((g, p), n as usize));
            }
        }
        let (mut tp, mut fp, mut fn_) = (0.0, 0.0, 0.0);
        let mut weighted = 0.0;
        for c in 0..k {
            let (a, b, d) = walk_counts(&pairs, c);
            if Some(c) != neutral {
                tp += a;
                fp += b;
                fn_ += d;
            }
            weighted += (a + d) * harmonic_f1(a, b, d);
        }
        let weighted = if pairs.is_empty() { 0.0 } else { weighted / pairs.len() as f64 };
        let cm = ConfusionMatrix::from_counts(counts).map_err(|e| e.to_string())?;
        worst = worst
            .max((micro_f1_excluding(&cm, neutral) - harmonic_f1(tp, fp, fn_)).abs())
            .max((weighted_macro_f1(&cm) - weighted).abs());
    }
    check(worst <= 1e-12, format!("1000 random confusion matrices, max deviation {worst:.1e}"))
}

// 3

fn assembly_identities(shipped: &Shipped) -> Outcome {
    let e = |e: ctpt::Error| e.to_string();
    let mut rng = RngStream::new(3);
    let (n, d, dim) = (5, 8, 12);
    let mut failures = Vec::new();
    let mut expect = |ok: bool, what: &str| {
        if !ok {
            failures.push(what.to_string());
        }
    };

    let p0: Vec<f64> = (0..n * d).map(|_| rng.normal()).collect();
    let proj = SubspaceProjection::random(&mut rng, p0.clone(), dim).map_err(e)?;
    let pt = project_prompt(&proj, &vec![0.0; dim], n, d).map_err(e)?;
    expect(pt.values().data() == p0.as_slice(), "z = 0 gives p0");

    let offsets = attention_offsets(d, 2, 1, 1.0, 0.01, &mut rng).map_err(e)?;
    let aproj = SubspaceProjection::random(&mut rng, offsets.clone(), dim).map_err(e)?;
    let w = unpack_attention(&aproj, &vec![0.0; dim], d, 2).map_err(e)?;
    let flat: Vec<f64> = [&w.wq, &w.wk, &w.wv].iter().flat_map(|m| m.data().to_vec()).collect();
    expect(flat == offsets, "z' = 0 gives W0");

    let pc = PromptMatrix::new(Matrix::gaussian(&mut rng, n, d, 1.0).map_err(e)?).map_err(e)?;
    let ones = gate_combine(&GateVector::ones(n), &pt, &pc).map_err(e)?;
    expect(ones == pt, "gate ones gives p_t");
    let zeros = gate_combine(&GateVector::new(vec![0.0; n]).map_err(e)?, &pt, &pc).map_err(e)?;
    expect(zeros == pc, "gate zeros gives p_c");
    let half = gate_combine(&GateVector::new(vec![0.5; n]).map_err(e)?, &pt, &pc).map_err(e)?;
    let avg = pt.values().add(pc.values()).map_err(e)?.scale(0.5);
    expect(half.values().max_abs_diff(&avg).map_err(e)? <= 1e-15, "gate 0.5 gives the average");

    let gproj = SubspaceProjection::random(&mut rng, vec![0.0; n], n).map_err(e)?;
    let g = project_gate(&gproj, &vec![0.0; n]).map_err(e)?;
    expect(g.values().iter().all(|&v| v == 0.5), "z'' = 0 gives a 0.5 gate");

    let v: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
    let same = PromptMatrix::new(Matrix::from_rows(&vec![v.clone(); n]).map_err(e)?).map_err(e)?;
    let id = AttentionParams::new(Matrix::identity(d), Matrix::identity(d), Matrix::identity(d), 1).map_err(e)?;
    let out = cross_task_attend(&pt, &[&same], &id).map_err(e)?;
    let uniform = (0..n).all(|r| out.values().row(r).iter().zip(&v).all(|(a, b)| (a - b).abs() <= 1e-12));
    expect(uniform, "single source of identical rows returns that row");

    let params = unpack_attention(&aproj, &(0..dim).map(|_| rng.normal()).collect::<Vec<_>>(), d, 2).map_err(e)?;
    let rows_ok = attention_weights(&pt, &pc, &params)
        .map_err(e)?
        .iter()
        .all(|m| (0..m.rows()).all(|r| (m.row(r).iter().sum::<f64>() - 1.0).abs() <= 1e-12));
    expect(rows_ok, "attention rows sum to 1");

    let vocab = shipped.suite.world.vocab();
    let vcfg = shipped.suite_cfg.verbalizer_config();
    let verb = vcfg.task_verbalizer("daily", vocab).map_err(e)?;
    let single = vcfg.union_for(&["daily"], vocab).map_err(e)?;
    let mut degenerate = true;
    for _ in 0..200 {
        let logits: Vec<f64> = (0..vocab.len()).map(|_| 3.0 * rng.normal()).collect();
        let a = decode_label(&logits, &verb).map_err(e)?;
        let b = decode_union(&logits, &single, "daily").map_err(e)?;
        degenerate &= a.index == b.index && a.distribution.iter().zip(&b.distribution).all(|(x, y)| (x - y).abs() <= 1e-12);
    }
    expect(degenerate, "single-task union decodes like the task verbalizer");

    let uniform_loss = cross_entropy(&[0.25; 4], 2).map_err(e)?;
    expect((uniform_loss - 4f64.ln()).abs() <= 1e-15, "uniform 4-label loss is ln 4");

    let model = tiny_model(shipped);
    let cfg = PipelineConfig {
        tspt: StageConfig {
            budget: 0,
            ..StageConfig::default()
        },
        emotional_knowledge: false,
        ..PipelineConfig::default()
    };
    let pipe = shipped.pipeline(&model, cfg);
    let mut b = shipped.bundle(&pipe, "daily", shipped.suite.task("daily").unwrap().clone(), &rng);
    pipe.train_tspt(&mut b, &rng).map_err(e)?;
    let prompt = b.task_prompt(pipe.p0().n(), pipe.p0().d()).map_err(e)?;
    expect(
        b.is_untrained_zero() && &prompt == pipe.p0(),
        "zero budget returns p0 flagged untrained",
    );

    check(
        failures.is_empty(),
        if failures.is_empty() {
            "12 identities hold".into()
        } else {
            failures.join("; ")
        },
    )
}

fn tiny_model(shipped: &Shipped) -> FrozenModel {
    let cfg = ModelConfig {
        d_model: 16,
        layers: 1,
        heads: 2,
        ff_dim: 32,
        max_len: 96,
    };
    FrozenModel::initialize(shipped.suite.world.vocab().clone(), cfg, &mut RngStream::new(4))
        .unwrap()
        .freeze()
}

// 4

fn trimmed_test(ds: &TaskDataset, utterances: usize) -> TaskDataset {
    let mut out = ds.clone();
    out.test.clear();
    let mut left = utterances;
    for c in &ds.test {
        if left == 0 {
            break;
        }
        let mut c = c.clone();
        c.utterances.truncate(left);
        left -= c.utterances.len();
        out.test.push(c);
    }
    out
}

fn gate_identity(shipped: &Shipped, model: &FrozenModel) -> Outcome {
    let e = |e: ctpt::Error| e.to_string();
    let cfg = PipelineConfig {
        emotional_knowledge: false,
        force_gate_ones: true,
        tspt: StageConfig {
            budget: 60,
            ..shipped.run.pipeline.tspt.clone()
        },
        ctpt: StageConfig {
            budget: 40,
            ..shipped.run.pipeline.ctpt.clone()
        },
        ..shipped.run.pipeline.clone()
    };
    let pipe = shipped.pipeline(model, cfg);
    let rng = RngStream::new(4);
    let mut target = shipped.bundle(&pipe, "daily", trimmed_test(shipped.suite.task("daily").unwrap(), 200), &rng);
    pipe.train_tspt(&mut target, &rng).map_err(e)?;
    let sources = [shipped.trained(&pipe, "tv", &rng), shipped.trained(&pipe, "ec", &rng)];
    let refs: Vec<&TaskBundle> = sources.iter().collect();
    let (assembly, _) = pipe.train_ctpt(&target, &refs, &rng).map_err(e)?;
    let tspt = pipe.evaluate_tspt(&target).map_err(e)?;
    let ctpt = pipe.evaluate_ctpt(&assembly, &target, &refs).map_err(e)?;
    let utterances = tspt.predictions.len();
    check(
        utterances == 200 && tspt.predictions == ctpt.predictions,
        format!(
            "{utterances} test utterances, {} of {} predictions equal",
            tspt.predictions.iter().zip(&ctpt.predictions).filter(|(a, b)| a == b).count(),
            ctpt.predictions.len()
        ),
    )
}

// 5 and 6

struct SeedRun {
    daily: TaskBundle,
}

fn direction_of_effect(shipped: &Shipped, model: &FrozenModel, started: Instant) -> (Outcome, Vec<SeedRun>) {
    let before = model.checksum();
    let pipe = shipped.pipeline(model, shipped.run.pipeline.clone());
    let mut tspt = BTreeMap::<&str, Vec<f64>>::new();
    let mut ctpt = BTreeMap::<&str, Vec<f64>>::new();
    let mut kept = Vec::new();
    for seed in SEEDS {
        let rng = RngStream::new(seed);
        let mut bundles: Vec<TaskBundle> = MAIN_TASKS.iter().map(|id| shipped.trained(&pipe, id, &rng)).collect();
        for (i, id) in MAIN_TASKS.iter().enumerate() {
            let target = &bundles[i];
            let sources: Vec<&TaskBundle> = bundles.iter().filter(|b| b.id() != *id).collect();
            let (assembly, _) = pipe.train_ctpt(target, &sources, &rng).expect("ctpt");
            ctpt.entry(id)
                .or_default()
                .push(pipe.evaluate_ctpt(&assembly, target, &sources).expect("eval").report.score);
            tspt.entry(id)
                .or_default()
                .push(pipe.evaluate_tspt(target).expect("eval").report.score);
        }
        kept.push(SeedRun { daily: bundles.remove(0) });
    }
    let secs = started.elapsed().as_secs_f64();
    let all = |m: &BTreeMap<&str, Vec<f64>>| mean(&m.values().flatten().copied().collect::<Vec<_>>());
    let (t, c) = (all(&tspt), all(&ctpt));
    let per_task: Vec<String> = MAIN_TASKS
        .iter()
        .map(|id| format!("{id} {:.3}/{:.3}", mean(&tspt[id]), mean(&ctpt[id])))
        .collect();
    let unchanged = model.checksum() == before;
    (
        check(
            c - t >= 0.02 && secs < 600.0 && unchanged,
            format!(
                "TSPT {t:.4}, CTPT {c:.4}, margin {:+.4} (tspt/ctpt: {}); pretrain + 5 seeds in {secs:.0}s",
                c - t,
                per_task.join(", ")
            ),
        ),
        kept,
    )
}

fn zero_shot(shipped: &Shipped, model: &FrozenModel, runs: &[SeedRun]) -> Outcome {
    let pipe = shipped.pipeline(model, shipped.run.pipeline.clone());
    let (mut clone_tspt, mut related, mut unrelated) = (vec![], vec![], vec![]);
    let mut reads = 0;
    for (seed, run) in SEEDS.iter().zip(runs) {
        let rng = RngStream::new(*seed);
        let clone = shipped.trained(&pipe, "daily_clone", &rng);
        clone_tspt.push(pipe.evaluate_tspt(&clone).expect("eval").report.score);
        let other = shipped.trained(&pipe, "unrelated", &rng);
        let target = shipped.bundle(&pipe, "daily_clone", shipped.suite.task("daily_clone").unwrap().clone(), &rng);
        let (r, _, _) = pipe.zero_shot_transfer(&[&run.daily], &target, &rng).expect("transfer");
        let (u, _, _) = pipe.zero_shot_transfer(&[&other], &target, &rng).expect("transfer");
        related.push(r.report.score);
        unrelated.push(u.report.score);
        reads += target.z_reads();
    }
    let (t, r, u) = (mean(&clone_tspt), mean(&related), mean(&unrelated));
    check(
        (r - t).abs() <= 0.05 && u < r && reads == 0,
        format!(
            "clone TSPT {t:.4}, related transfer {r:.4} (gap {:.4}), unrelated transfer {u:.4}",
            (r - t).abs()
        ),
    )
}

// 7

fn parameter_budget(shipped: &Shipped) -> Outcome {
    let e = |e: ctpt::Error| e.to_string();
    let full = RunConfig::from_file(&configs().join("full_scale.toml")).map_err(e)?;
    let declared = full.pipeline.prompt.ctpt_learnables();
    let model = tiny_model(shipped);
    let cfg = PipelineConfig {
        tspt: StageConfig {
            budget: 0,
            ..StageConfig::default()
        },
        ctpt: StageConfig {
            budget: 0,
            ..StageConfig::default()
        },
        emotional_knowledge: false,
        ..full.pipeline.clone()
    };
    let pipe = shipped.pipeline(&model, cfg);
    let rng = RngStream::new(7);
    let mut target = shipped.bundle(&pipe, "daily", shipped.suite.task("daily").unwrap().clone(), &rng);
    pipe.train_tspt(&mut target, &rng).map_err(e)?;
    let mut source = shipped.bundle(&pipe, "tv", shipped.suite.task("tv").unwrap().clone(), &rng);
    pipe.train_tspt(&mut source, &rng).map_err(e)?;
    let (assembly, _) = pipe.train_ctpt(&target, &[&source], &rng).map_err(e)?;
    let built = assembly.learnables();
    check(
        (800..=1200).contains(&declared) && built == declared,
        format!(
            "{} prompt tokens: {declared} learnables declared, {built} in a built assembly",
            full.pipeline.prompt.tokens
        ),
    )
}

// 8

fn files_under(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.insert(path.strip_prefix(root).unwrap().to_path_buf(), fs::read(&path).unwrap());
            }
        }
    }
    out
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let config = dir.path().join("run.toml");
    let suite = configs().join("suite.toml");
    let text = format!(
        r#"seed = 11
checkpoint = "model.ckpt"
suite = {suite:?}
data_dir = "data"
verbalizers = "data/verbalizers.toml"
out = "runs"
tasks = ["data/daily.toml", "data/tv.toml", "data/ec.toml", "data/daily_clone.toml", "data/unrelated.toml"]
[pretrain]
steps = 20
batch_size = 8
[pipeline]
k_shot = 2
[pipeline.prompt]
tokens = 4
prompt_dim = 8
attention_dim = 8
[pipeline.tspt]
budget = 16
[pipeline.ctpt]
budget = 16
"#
    );
    fs::write(&config, text).map_err(|e| e.to_string())?;
    let commands: [&[&str]; 9] = [
        &["pretrain"],
        &["sample"],
        &["train", "--mode", "tspt"],
        &["train", "--mode", "ctpt"],
        &["eval", "--mode", "tspt"],
        &["eval", "--mode", "ctpt"],
        &["transfer", "--target", "daily_clone", "--sources", "daily,tv"],
        &["ablate", "--target", "daily", "--sources", "tv,ec,unrelated"],
        &["eval", "--mode", "tspt", "--tasks", "daily"],
    ];
    let mut outputs = Vec::new();
    let mut checksums = Vec::new();
    for run in ["a", "b"] {
        let out = dir.path().join(run);
        for cmd in commands {
            let status = Command::new(env!("CARGO_BIN_EXE_ctpt"))
                .arg("--config")
                .arg(&config)
                .arg("--out")
                .arg(&out)
                .args(cmd)
                .env("RUST_LOG", "warn")
                .output()
                .map_err(|e| e.to_string())?;
            if !status.status.success() {
                return Err(format!(
                    "run {run}: `{}` failed: {}",
                    cmd.join(" "),
                    String::from_utf8_lossy(&status.stderr).trim()
                ));
            }
            if cmd[0] == "pretrain" {
                checksums.push(
                    FrozenModel::load(&dir.path().join("model.ckpt"))
                        .map_err(|e| e.to_string())?
                        .checksum(),
                );
            }
        }
        checksums.push(
            FrozenModel::load(&dir.path().join("model.ckpt"))
                .map_err(|e| e.to_string())?
                .checksum(),
        );
        let mut files = files_under(&out);
        // the echoed config names its own output directory
        for (path, bytes) in files.iter_mut() {
            if path.ends_with("config.toml") {
                let text = String::from_utf8_lossy(bytes).replace(&out.display().to_string(), "<out>");
                *bytes = text.into_bytes();
            }
        }
        outputs.push(files);
        fs::remove_file(dir.path().join("model.ckpt")).map_err(|e| e.to_string())?;
        fs::remove_dir_all(dir.path().join("data")).map_err(|e| e.to_string())?;
    }
    let reports = outputs[0].keys().filter(|p| p.ends_with("reports.jsonl")).count();
    let differing: Vec<String> = outputs[0]
        .iter()
        .filter(|(k, v)| outputs[1].get(*k) != Some(*v))
        .map(|(k, _)| k.display().to_string())
        .collect();
    let same_files = outputs[0].len() == outputs[1].len() && differing.is_empty();
    let same_model = checksums.iter().all(|c| c == &checksums[0]);
    check(
        reports > 0 && same_files && same_model,
        format!(
            "{} output files compared, {} differ{}; model checksum {} across pretrain and training",
            outputs[0].len(),
            differing.len(),
            if differing.is_empty() {
                String::new()
            } else {
                format!(" ({})", differing.join(", "))
            },
            if same_model { "unchanged" } else { "changed" }
        ),
    )
}

// 9

fn ablation(shipped: &Shipped, model: &FrozenModel) -> Outcome {
    let e = |e: ctpt::Error| e.to_string();
    let cfg = PipelineConfig {
        tspt: StageConfig {
            budget: 40,
            ..shipped.run.pipeline.tspt.clone()
        },
        ctpt: StageConfig {
            budget: 20,
            ..shipped.run.pipeline.ctpt.clone()
        },
        ..shipped.run.pipeline.clone()
    };
    let pipe = shipped.pipeline(model, cfg);
    let rng = RngStream::new(9);
    let target = shipped.trained(&pipe, "daily", &rng);
    let sources: Vec<TaskBundle> = ["tv", "ec", "daily_clone", "unrelated"]
        .iter()
        .map(|id| shipped.trained(&pipe, id, &rng))
        .collect();
    let refs: Vec<&TaskBundle> = sources.iter().collect();
    let points = pipe.ablate_sources(&target, &refs, &rng).map_err(e)?;
    let sizes: Vec<usize> = points.iter().map(|p| p.size).collect();
    let counts: Vec<usize> = points.iter().map(|p| p.subsets.len()).collect();
    let means_ok = points
        .iter()
        .all(|p| p.scores.len() == p.subsets.len() && (p.mean - mean(&p.scores)).abs() <= 1e-12);
    let tspt = pipe.evaluate_tspt(&target).map_err(e)?.report.score;
    check(
        sizes == [0, 1, 2, 3, 4] && counts == [1, 4, 6, 4, 1] && means_ok && points[0].mean == tspt,
        format!(
            "sizes {sizes:?}, subsets per size {counts:?}, means {}",
            points.iter().map(|p| format!("{:.3}", p.mean)).collect::<Vec<_>>().join(" ")
        ),
    )
}

fn main() {
    let shipped = Shipped::load();
    let mut failed = 0;
    let mut report = |n: usize, name: &str, outcome: Outcome| match &outcome {
        Ok(detail) => println!("PASS criterion {n} ({name}): {detail}"),
        Err(detail) => {
            failed += 1;
            println!("FAIL criterion {n} ({name}): {detail}");
        }
    };
    report(1, "CMA-ES correctness", cmaes_correctness());
    report(2, "metric oracle", metric_oracle());
    report(3, "assembly identities", assembly_identities(&shipped));
    report(7, "parameter budget", parameter_budget(&shipped));
    report(8, "determinism", determinism());

    let started = Instant::now();
    let model = pretrain_on_suite(shipped.run.seed, &shipped.suite_cfg, &shipped.suite, &shipped.run.pretrain).expect("pretraining");
    let (outcome, runs) = direction_of_effect(&shipped, &model, started);
    report(5, "CTPT beats TSPT", outcome);
    report(6, "zero-shot transfer", zero_shot(&shipped, &model, &runs));
    report(4, "gate identity", gate_identity(&shipped, &model));
    report(9, "source ablation", ablation(&shipped, &model));

    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
    println!("all 9 criteria passed");
}
