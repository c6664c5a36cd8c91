use super::*;
use crate::data::synthetic::{GeneratedSuite, SuiteConfig};
use crate::frozen_model::ModelConfig;

const SUITE: &str = r#"
seed = 3
[[tasks]]
id = "a"
domain = "mirror"
neutral = "neutral"
metric = "micro_f1_excl_neutral"
train_conversations = 30
dev_conversations = 10
test_conversations = 12
labels = [
  { label = "neutral", emotion = "neutral", token = "neutral" },
  { label = "happy", emotion = "happiness", token = "happy" },
  { label = "sad", emotion = "sadness", token = "sad" },
]
[[tasks]]
id = "b"
domain = "mirror"
metric = "weighted_macro_f1"
train_conversations = 30
dev_conversations = 10
test_conversations = 12
labels = [
  { label = "calm", emotion = "neutral", token = "calm" },
  { label = "joy", emotion = "happiness", token = "joy" },
  { label = "gloomy", emotion = "sadness", token = "gloomy" },
]
[[tasks]]
id = "c"
domain = "stage"
metric = "weighted_macro_f1"
train_conversations = 30
dev_conversations = 10
test_conversations = 12
labels = [
  { label = "okay", emotion = "neutral", token = "okay" },
  { label = "glad", emotion = "happiness", token = "glad" },
  { label = "sorrow", emotion = "sadness", token = "sorrow" },
]
[[tasks]]
id = "d"
domain = "swamp"
metric = "weighted_macro_f1"
train_conversations = 30
dev_conversations = 10
test_conversations = 12
labels = [
  { label = "plain", emotion = "neutral", token = "calm" },
  { label = "cheer", emotion = "happiness", token = "joy" },
  { label = "blue", emotion = "sadness", token = "sad" },
]
[[tasks]]
id = "e"
domain = "default"
metric = "weighted_macro_f1"
train_conversations = 30
dev_conversations = 10
test_conversations = 12
labels = [
  { label = "n", emotion = "neutral", token = "okay" },
  { label = "h", emotion = "happiness", token = "glad" },
  { label = "s", emotion = "sadness", token = "gloomy" },
]
"#;

struct Fixture {
    suite_cfg: SuiteConfig,
    suite: GeneratedSuite,
    model: FrozenModel,
}

fn fixture() -> Fixture {
    let suite_cfg: SuiteConfig = toml::from_str(SUITE).unwrap();
    let suite = GeneratedSuite::generate(&suite_cfg).unwrap();
    let cfg = ModelConfig {
        d_model: 16,
        layers: 1,
        heads: 2,
        ff_dim: 32,
        max_len: 64,
    };
    let model = FrozenModel::initialize(suite.world.vocab().clone(), cfg, &mut RngStream::new(9))
        .unwrap()
        .freeze();
    Fixture { suite_cfg, suite, model }
}

fn small_config() -> PipelineConfig {
    PipelineConfig {
        k_shot: 2,
        prompt: PromptConfig {
            tokens: 4,
            prompt_dim: 6,
            attention_dim: 6,
            heads: 2,
            ..PromptConfig::default()
        },
        tspt: StageConfig {
            budget: 24,
            ..StageConfig::default()
        },
        ctpt: StageConfig {
            budget: 24,
            sigma0: 0.5,
            ..StageConfig::default()
        },
        workers: Some(1),
        ..PipelineConfig::default()
    }
}

impl Fixture {
    fn pipeline(&self, cfg: PipelineConfig) -> Pipeline<'_> {
        let ids: Vec<&str> = self.suite_cfg.tasks.iter().map(|t| t.id.as_str()).collect();
        let union = self.suite_cfg.verbalizer_config().union_for(&ids, self.model.vocab()).unwrap();
        Pipeline::new(&self.model, cfg, Some(union)).unwrap()
    }

    fn bundle(&self, pipe: &Pipeline<'_>, id: &str, rng: &RngStream) -> TaskBundle {
        let verb = self.suite_cfg.verbalizer_config().task_verbalizer(id, self.model.vocab()).unwrap();
        let metric = self.suite_cfg.task(id).unwrap().metric;
        pipe.bundle(self.suite.task(id).unwrap().clone(), verb, metric, rng).unwrap()
    }

    fn trained(&self, pipe: &Pipeline<'_>, ids: &[&str], rng: &RngStream) -> Vec<TaskBundle> {
        ids.iter()
            .map(|id| {
                let mut b = self.bundle(pipe, id, rng);
                pipe.train_tspt(&mut b, rng).unwrap();
                b
            })
            .collect()
    }
}

#[test]
fn zero_budget_keeps_the_initial_prompt() {
    let fx = fixture();
    let mut cfg = small_config();
    cfg.tspt.budget = 0;
    let pipe = fx.pipeline(cfg);
    let rng = RngStream::new(1);
    let mut b = fx.bundle(&pipe, "a", &rng);
    let out = pipe.train_tspt(&mut b, &rng).unwrap();
    assert!(!out.trained);
    assert!(b.is_untrained_zero());
    assert!(b.z().unwrap().iter().all(|&v| v == 0.0));
    assert_eq!(b.task_prompt(4, 16).unwrap(), *pipe.p0());
}

#[test]
fn tspt_trace_is_monotone() {
    let fx = fixture();
    let pipe = fx.pipeline(small_config());
    let rng = RngStream::new(2);
    let mut b = fx.bundle(&pipe, "a", &rng);
    let out = pipe.train_tspt(&mut b, &rng).unwrap();
    assert!(out.trained && out.trace.len() >= 2);
    for w in out.trace.windows(2) {
        assert!(w[1].best_train_loss <= w[0].best_train_loss);
        assert!(w[1].selected_dev_loss <= w[0].selected_dev_loss);
    }
    assert!(out.evaluations <= 24);
}

#[test]
fn forced_gate_reproduces_task_specific_predictions() {
    let fx = fixture();
    let mut cfg = small_config();
    cfg.force_gate_ones = true;
    cfg.emotional_knowledge = false;
    let pipe = fx.pipeline(cfg);
    let rng = RngStream::new(3);
    let bs = fx.trained(&pipe, &["a", "b", "c"], &rng);
    let (asm, _) = pipe.train_ctpt(&bs[0], &[&bs[1], &bs[2]], &rng).unwrap();
    assert!(asm.gate_values().unwrap().values().iter().all(|&g| g == 1.0));
    let t = pipe.evaluate_tspt(&bs[0]).unwrap();
    let c = pipe.evaluate_ctpt(&asm, &bs[0], &[&bs[1], &bs[2]]).unwrap();
    assert_eq!(t.predictions, c.predictions);
    assert_eq!(t.report.score, c.report.score);
}

#[test]
fn ctpt_argument_and_training_errors() {
    let fx = fixture();
    let pipe = fx.pipeline(small_config());
    let rng = RngStream::new(4);
    let bs = fx.trained(&pipe, &["a"], &rng);
    assert!(matches!(pipe.train_ctpt(&bs[0], &[], &rng), Err(Error::Argument(_))));
    let b = fx.bundle(&pipe, "b", &rng);
    let c = fx.bundle(&pipe, "c", &rng);
    match pipe.train_ctpt(&bs[0], &[&b, &c], &rng) {
        Err(Error::Training(msg)) => assert!(msg.contains("b, c"), "{msg}"),
        other => panic!("expected a training error, got {other:?}"),
    }
}

#[test]
fn learnable_count_is_attention_plus_gate() {
    let fx = fixture();
    let pipe = fx.pipeline(small_config());
    let rng = RngStream::new(5);
    let bs = fx.trained(&pipe, &["a", "b"], &rng);
    let (asm, _) = pipe.train_ctpt(&bs[0], &[&bs[1]], &rng).unwrap();
    assert_eq!(asm.learnables(), 6 + 4);
    let full = PromptConfig {
        tokens: 50,
        prompt_dim: 200,
        attention_dim: 950,
        ..PromptConfig::default()
    };
    assert_eq!(full.ctpt_learnables(), 1000);
}

#[test]
fn gate_offsets_set_the_starting_gates() {
    let fx = fixture();
    let mut cfg = small_config();
    cfg.prompt.gate_offset = 2.0;
    cfg.prompt.transfer_gate_offset = -1.0;
    cfg.ctpt.budget = 0;
    let pipe = fx.pipeline(cfg);
    let rng = RngStream::new(6);
    let bs = fx.trained(&pipe, &["a", "b"], &rng);
    let (asm, _) = pipe.train_ctpt(&bs[0], &[&bs[1]], &rng).unwrap();
    let logistic = |x: f64| 1.0 / (1.0 + (-x).exp());
    assert!(asm
        .gate_values()
        .unwrap()
        .values()
        .iter()
        .all(|&g| (g - logistic(2.0)).abs() < 1e-15));
    let target = fx.bundle(&pipe, "e", &rng);
    let (_, zs, _) = pipe.zero_shot_transfer(&[&bs[0]], &target, &rng).unwrap();
    assert!(zs
        .gate_values()
        .unwrap()
        .values()
        .iter()
        .all(|&g| (g - logistic(-1.0)).abs() < 1e-15));
}

#[test]
fn zero_shot_never_reads_the_target_vector() {
    let fx = fixture();
    let pipe = fx.pipeline(small_config());
    let rng = RngStream::new(6);
    let bs = fx.trained(&pipe, &["a", "b"], &rng);
    let target = fx.bundle(&pipe, "e", &rng);
    let (eval, asm, _) = pipe.zero_shot_transfer(&[&bs[0], &bs[1]], &target, &rng).unwrap();
    assert!(asm.zero_shot);
    assert_eq!(target.z_reads(), 0);
    assert_eq!(eval.report.method, "zero_shot");
    assert!(matches!(pipe.zero_shot_transfer(&[&bs[0]], &bs[0], &rng), Err(Error::Argument(_))));
}

#[test]
fn ablation_enumerates_every_subset() {
    let fx = fixture();
    let mut cfg = small_config();
    cfg.ctpt.budget = 8;
    let pipe = fx.pipeline(cfg);
    let rng = RngStream::new(7);
    let bs = fx.trained(&pipe, &["a", "b", "c", "d", "e"], &rng);
    let sources: Vec<&TaskBundle> = bs[1..].iter().collect();
    let points = pipe.ablate_sources(&bs[0], &sources, &rng).unwrap();
    let counts: Vec<usize> = points.iter().map(|p| p.subsets.len()).collect();
    assert_eq!(counts, vec![1, 4, 6, 4, 1]);
    assert_eq!(points[0].mean, pipe.evaluate_tspt(&bs[0]).unwrap().report.score);
    assert!(matches!(pipe.ablate_sources(&bs[0], &sources[..1], &rng), Err(Error::Argument(_))));
}

#[test]
fn runs_are_deterministic_and_leave_the_model_untouched() {
    let fx = fixture();
    let before = fx.model.checksum();
    let run = |workers| {
        let mut cfg = small_config();
        cfg.workers = Some(workers);
        let pipe = fx.pipeline(cfg);
        let rng = RngStream::new(8);
        let bs = fx.trained(&pipe, &["a", "b"], &rng);
        let (asm, trace) = pipe.train_ctpt(&bs[0], &[&bs[1]], &rng).unwrap();
        let t = pipe.evaluate_tspt(&bs[0]).unwrap();
        let c = pipe.evaluate_ctpt(&asm, &bs[0], &[&bs[1]]).unwrap();
        (t.report, c.report, c.predictions, trace)
    };
    let first = run(1);
    assert_eq!(first, run(1));
    assert_eq!(first, run(3));
    assert_eq!(fx.model.checksum(), before);
}

#[test]
fn sequential_schedule_splits_the_budget() {
    let fx = fixture();
    let mut cfg = small_config();
    cfg.schedule = CtptSchedule::Sequential;
    let pipe = fx.pipeline(cfg);
    let rng = RngStream::new(10);
    let bs = fx.trained(&pipe, &["a", "b"], &rng);
    let (_, trace) = pipe.train_ctpt(&bs[0], &[&bs[1]], &rng).unwrap();
    assert!(trace.iter().any(|t| t.stage.starts_with("ctpl:")));
    assert!(trace.iter().any(|t| t.stage.starts_with("ctpo:")));
    assert!(trace.last().unwrap().evaluations <= 24);
}

#[test]
fn artifacts_round_trip_and_reject_foreign_seeds() {
    let fx = fixture();
    let pipe = fx.pipeline(small_config());
    let rng = RngStream::new(11);
    let bs = fx.trained(&pipe, &["a", "b"], &rng);
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("a.prompt");
    save_task_prompt(&bs[0], pipe.tag(), &p).unwrap();
    let mut again = fx.bundle(&pipe, "a", &rng);
    pipe.load_task_prompt(&mut again, &p).unwrap();
    assert_eq!(again.prompt_state(), bs[0].prompt_state());

    let mut foreign = fx.bundle(&pipe, "a", &RngStream::new(12));
    assert!(matches!(pipe.load_task_prompt(&mut foreign, &p), Err(Error::Format(_))));
    let mut other = fx.bundle(&pipe, "b", &rng);
    assert!(matches!(pipe.load_task_prompt(&mut other, &p), Err(Error::Format(_))));

    let (asm, _) = pipe.train_ctpt(&bs[0], &[&bs[1]], &rng).unwrap();
    let q = dir.path().join("a.ctpt");
    save_assembly(&asm, pipe.tag(), &q).unwrap();
    assert_eq!(pipe.load_assembly(&q, &rng).unwrap(), asm);
}

#[test]
fn emotional_knowledge_needs_a_union() {
    let fx = fixture();
    let pipe = Pipeline::new(&fx.model, small_config(), None).unwrap();
    let rng = RngStream::new(13);
    let bs = fx.trained(&pipe, &["a", "b"], &rng);
    assert!(matches!(pipe.train_ctpt(&bs[0], &[&bs[1]], &rng), Err(Error::Config(_))));
}

#[test]
fn unfrozen_models_are_refused() {
    let fx = fixture();
    let open = FrozenModel::initialize(fx.model.vocab().clone(), *fx.model.config(), &mut RngStream::new(1)).unwrap();
    assert!(matches!(Pipeline::new(&open, small_config(), None), Err(Error::Config(_))));
}
