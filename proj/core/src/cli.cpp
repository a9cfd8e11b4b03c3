#include "ldpp/cli.hpp"

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include <iostream>
#include <memory>
#include <optional>

#include "ldpp/adapters.hpp"
#include "ldpp/analysis.hpp"
#include "ldpp/augment.hpp"
#include "ldpp/checkpoint.hpp"
#include "ldpp/config.hpp"
#include "ldpp/critic.hpp"
#include "ldpp/decompose.hpp"
#include "ldpp/error.hpp"
#include "ldpp/json_io.hpp"
#include "ldpp/manifest.hpp"
#include "ldpp/selfplay.hpp"
#include "ldpp/trainer.hpp"

namespace ldpp {

namespace {

namespace fs = std::filesystem;

// Fixed relative layout beneath a run directory.
struct RunPaths {
  fs::path root;

  fs::path corpus() const { return root / "corpus"; }
  fs::path tuples() const { return root / "tuples"; }
  fs::path checkpoints() const { return root / "checkpoints"; }
  fs::path logs() const { return root / "logs"; }
  fs::path eval() const { return root / "eval"; }
  fs::path analysis() const { return root / "analysis"; }
  fs::path manifests() const { return root / "manifests"; }

  void prepare() const {
    for (const auto& dir :
         {root, corpus(), tuples(), checkpoints(), logs(), eval(), analysis(), manifests()}) {
      fs::create_directories(dir);
    }
  }
};

// Collects inputs/outputs while a command runs, then writes the manifest.
class ManifestScope {
 public:
  ManifestScope(std::string command, std::string config_hash, long long seed) {
    manifest_.command = std::move(command);
    manifest_.config_hash = std::move(config_hash);
    manifest_.seed = seed;
    manifest_.started_at = now_iso8601();
  }

  void input(const fs::path& p) { manifest_.inputs.push_back(p.string()); }

  void output(const fs::path& p) { manifest_.outputs.push_back(p.string()); }

  void output_checkpoint(const fs::path& dir) {
    manifest_.outputs.push_back(dir.string());
    manifest_.output_hashes[dir.string()] = checkpoint_digest(dir);
  }

  void write(const fs::path& to) { write_run_manifest(manifest_, to); }

 private:
  RunManifest manifest_;
};

fs::path file_manifest_path(const fs::path& file) {
  return fs::path(file.string() + ".manifest.json");
}

struct CommonOpts {
  std::string config_path;
  std::optional<long long> seed;
};

void add_common(CLI::App* cmd, CommonOpts& o) {
  cmd->add_option("--config", o.config_path, "JSON config file (defaults when omitted)")
      ->check(CLI::ExistingFile);
  cmd->add_option("--seed", o.seed, "seed override");
}

TrainConfig effective_config(const CommonOpts& o) {
  TrainConfig cfg = o.config_path.empty() ? TrainConfig{} : load_config(o.config_path);
  if (o.seed.has_value()) cfg.seed = *o.seed;
  cfg.validate();
  return cfg;
}

SyntheticSpec spec_or_default(const std::string& path) {
  return path.empty() ? SyntheticSpec::default_spec() : load_synthetic_spec(path);
}

// Training from a checkpoint keeps the embedded config; only flag overrides
// that cannot change model shape are applied.
ModelBundle bundle_for_training(const std::string& from, const CommonOpts& common, int epochs) {
  if (!common.config_path.empty()) {
    throw ValidationError(
        "training from a checkpoint uses the config stored with it; drop --config and use "
        "--seed/--epochs overrides instead");
  }
  ModelBundle bundle = load_checkpoint(from);
  if (common.seed.has_value()) bundle.config.seed = *common.seed;
  if (epochs > 0) bundle.config.epochs_per_stage = epochs;
  bundle.config.validate();
  return bundle;
}

struct GenCorpusOpts {
  CommonOpts common;
  int n = 2000;
  std::string out;
  std::string spec_path;
};

int cmd_gen_corpus(const GenCorpusOpts& o) {
  const TrainConfig cfg = effective_config(o.common);
  const SyntheticSpec spec = spec_or_default(o.spec_path);
  const auto records = generate_synthetic(spec, o.n, cfg.seed);

  ManifestScope scope("gen-corpus", cfg.hash(), cfg.seed);
  if (!o.spec_path.empty()) scope.input(o.spec_path);
  save_corpus(records, o.out);
  scope.output(o.out);
  scope.write(file_manifest_path(o.out));
  spdlog::info("wrote {} dialogues to {}", records.size(), o.out);
  return 0;
}

struct AnnotateOpts {
  CommonOpts common;
  std::string corpus;
  std::string out_dir = "run";
  double noise = 0.1;
};

int cmd_annotate(const AnnotateOpts& o) {
  const TrainConfig cfg = effective_config(o.common);
  RunPaths run{o.out_dir};
  run.prepare();
  LockFile lock(run.root);

  const auto records = load_corpus(o.corpus);
  auto tuples = decompose(records);
  ScriptedCorpusCritic critic(records, o.noise);
  const auto annotated = annotate_rewards(tuples, critic, cfg.votes, cfg.seed);

  ManifestScope scope("annotate", cfg.hash(), cfg.seed);
  scope.input(o.corpus);
  const fs::path out = run.tuples() / "tuples.jsonl";
  save_tuples_jsonl(annotated, out);
  scope.output(out);
  scope.write(run.manifests() / "annotate.json");
  spdlog::info("annotated {} tuples from {} dialogues", annotated.size(), records.size());
  return 0;
}

struct TrainStage1Opts {
  CommonOpts common;
  std::string corpus;
  std::string tuples;
  std::string out_dir = "run";
  long max_steps = 0;
  int epochs = 0;
};

int cmd_train_stage1(const TrainStage1Opts& o) {
  TrainConfig cfg = effective_config(o.common);
  if (o.epochs > 0) cfg.epochs_per_stage = o.epochs;
  RunPaths run{o.out_dir};
  run.prepare();
  LockFile lock(run.root);

  const auto records = load_corpus(o.corpus);
  const auto tuples = o.tuples.empty() ? decompose(records) : load_tuples_jsonl(o.tuples);
  ModelBundle bundle = init_models(cfg, Tokenizer::build(records),
                                   static_cast<unsigned long>(cfg.seed));

  TrainOptions options;
  options.max_steps = o.max_steps;
  options.checkpoint_dir = run.checkpoints();
  options.log_dir = run.logs();
  train_stage1(bundle, records, tuples, options);

  ManifestScope scope("train-stage1", cfg.hash(), cfg.seed);
  scope.input(o.corpus);
  if (!o.tuples.empty()) scope.input(o.tuples);
  scope.output_checkpoint(run.checkpoints() / "stage1_final");
  scope.write(run.manifests() / "train-stage1.json");
  return 0;
}

struct LabelOpts {
  CommonOpts common;
  std::string from;
  std::string tuples;
  std::string out_dir = "run";
};

int cmd_label(const LabelOpts& o) {
  if (!o.common.config_path.empty()) {
    throw ValidationError("label uses the checkpoint's config; drop --config");
  }
  ModelBundle bundle = load_checkpoint(o.from);
  auto tuples = load_tuples_jsonl(o.tuples);
  RunPaths run{o.out_dir};
  run.prepare();
  LockFile lock(run.root);

  const auto labeled = pseudo_label(bundle, std::move(tuples));

  ManifestScope scope("label", bundle.config.hash(), bundle.config.seed);
  scope.input(o.from);
  scope.input(o.tuples);
  const fs::path out = run.tuples() / "labeled.jsonl";
  save_tuples_jsonl(labeled, out);
  scope.output(out);
  scope.write(run.manifests() / "label.json");
  spdlog::info("pseudo-labeled {} tuples", labeled.size());
  return 0;
}

struct TrainLaterOpts {
  CommonOpts common;
  std::string from;
  std::string tuples;
  std::string out_dir = "run";
  long max_steps = 0;
  int epochs = 0;
  bool skip_stage2 = false;  // stage 3 only
};

int cmd_train_stage2(const TrainLaterOpts& o) {
  ModelBundle bundle = bundle_for_training(o.from, o.common, o.epochs);
  const auto tuples = load_tuples_jsonl(o.tuples);
  RunPaths run{o.out_dir};
  run.prepare();
  LockFile lock(run.root);

  TrainOptions options;
  options.max_steps = o.max_steps;
  options.checkpoint_dir = run.checkpoints();
  options.log_dir = run.logs();
  train_stage2(bundle, tuples, options);

  ManifestScope scope("train-stage2", bundle.config.hash(), bundle.config.seed);
  scope.input(o.from);
  scope.input(o.tuples);
  scope.output_checkpoint(run.checkpoints() / "stage2_final");
  scope.write(run.manifests() / "train-stage2.json");
  return 0;
}

int cmd_train_stage3(const TrainLaterOpts& o) {
  ModelBundle bundle = bundle_for_training(o.from, o.common, o.epochs);
  const auto tuples = load_tuples_jsonl(o.tuples);
  RunPaths run{o.out_dir};
  run.prepare();
  LockFile lock(run.root);

  TrainOptions options;
  options.max_steps = o.max_steps;
  options.checkpoint_dir = run.checkpoints();
  options.log_dir = run.logs();
  options.allow_from_stage1 = o.skip_stage2;
  train_stage3(bundle, tuples, options);

  ManifestScope scope("train-stage3", bundle.config.hash(), bundle.config.seed);
  scope.input(o.from);
  scope.input(o.tuples);
  scope.output_checkpoint(run.checkpoints() / "stage3_final");
  scope.write(run.manifests() / "train-stage3.json");
  return 0;
}

struct EvaluateOpts {
  CommonOpts common;
  std::string from;
  std::string cases_path;
  std::string out_dir = "run";
  int n_cases = 200;
  std::string planner = "mixture";
  std::string spec_path;
  double noise = 0.1;
  bool exclude_aborted = false;
  bool external = false;
  std::string templates_dir;
};

int cmd_evaluate(const EvaluateOpts& o) {
  if (!o.common.config_path.empty()) {
    throw ValidationError("evaluate uses the checkpoint's config; drop --config");
  }
  ModelBundle bundle = load_checkpoint(o.from);
  const auto cases = load_corpus(o.cases_path);
  RunPaths run{o.out_dir};
  run.prepare();
  LockFile lock(run.root);

  EpisodeParams params;
  params.max_turns = bundle.config.max_turns;
  params.eta = bundle.config.eta;
  params.votes = bundle.config.votes;
  params.decode.max_new_tokens = bundle.config.max_new_tokens;
  params.planner = planner_mode_from_name(o.planner);
  params.seed = o.common.seed.value_or(bundle.config.seed);

  std::vector<EpisodeLog> logs;
  if (o.external) {
    const auto templates = PromptTemplateSet::load(o.templates_dir);
    if (!templates.critic.has_value() || !templates.user.has_value()) {
      throw ValidationError("external evaluation needs critic.txt and user.txt templates");
    }
    ChatClient client(ChatClientSettings::from_env());
    ExternalUserSimulator sim(client, *templates.user);
    const int n = o.n_cases <= 0 ? static_cast<int>(cases.size()) : o.n_cases;
    if (n > static_cast<int>(cases.size())) {
      throw ValidationError("requested " + std::to_string(n) + " cases but only " +
                            std::to_string(cases.size()) + " available");
    }
    for (int i = 0; i < n; ++i) {
      const auto& rec = cases[static_cast<std::size_t>(i)];
      auto meta = [&rec](const char* key) {
        auto it = rec.meta.find(key);
        return it == rec.meta.end() ? std::string() : it->second;
      };
      ExternalEpisodeCritic critic(client, *templates.critic, meta("scene"),
                                   meta("description"));
      logs.push_back(run_episode(bundle, sim, critic, rec, params));
    }
  } else {
    ScriptedUserSimulator sim(spec_or_default(o.spec_path));
    ScriptedEpisodeCritic critic(o.noise);
    logs = run_cases(bundle, sim, critic, cases, params, o.n_cases);
  }

  const Metrics metrics = compute_metrics(logs, params.eta, o.exclude_aborted);

  ManifestScope scope("evaluate", bundle.config.hash(), params.seed);
  scope.input(o.from);
  scope.input(o.cases_path);
  const fs::path episodes = run.eval() / "episodes.jsonl";
  const fs::path metrics_json = run.eval() / "metrics.json";
  const fs::path metrics_csv = run.eval() / "metrics.csv";
  write_episode_logs(episodes, logs);
  write_metrics(metrics_json, metrics);
  write_metrics_csv(metrics_csv, metrics);
  scope.output(episodes);
  scope.output(metrics_json);
  scope.output(metrics_csv);
  scope.write(run.manifests() / "evaluate.json");

  std::cout << metrics.to_json().dump(2) << std::endl;
  return 0;
}

struct AnalyzeOpts {
  CommonOpts common;
  std::string from;
  std::string tuples;
  std::string corpus;
  std::string out_dir = "run";
  int top_codes = 6;
  int top_n = 20;
};

int cmd_analyze(const AnalyzeOpts& o) {
  if (!o.common.config_path.empty()) {
    throw ValidationError("analyze uses the checkpoint's config; drop --config");
  }
  ModelBundle bundle = load_checkpoint(o.from);
  const auto tuples = load_tuples_jsonl(o.tuples);
  RunPaths run{o.out_dir};
  run.prepare();
  LockFile lock(run.root);

  const auto assignments = assign_codes(bundle.codebook, tuples);
  const int k = bundle.codebook.K();
  const auto usage = codebook_usage(assignments, k);

  std::vector<LatentPolicy> latents;
  std::vector<int> hard_codes;
  latents.reserve(assignments.size());
  hard_codes.reserve(assignments.size());
  for (const auto& a : assignments) {
    latents.push_back(a.latent);
    hard_codes.push_back(a.hard_code);
  }
  const auto points = project_2d(latents);

  std::optional<std::vector<int>> truth;
  if (!o.corpus.empty()) {
    truth = truth_labels_for_tuples(load_corpus(o.corpus), tuples);
    if (!truth.has_value()) {
      spdlog::info("corpus has no ground-truth labels; skipping clustering quality");
    }
  }

  ManifestScope scope("analyze", bundle.config.hash(), bundle.config.seed);
  scope.input(o.from);
  scope.input(o.tuples);
  if (!o.corpus.empty()) scope.input(o.corpus);

  const fs::path assignments_csv = run.analysis() / "assignments.csv";
  const fs::path usage_csv = run.analysis() / "usage.csv";
  const fs::path points_csv = run.analysis() / "points.csv";
  const fs::path reps_md = run.analysis() / "representatives.md";
  write_assignments_csv(assignments_csv, assignments);
  write_usage_csv(usage_csv, usage);
  write_points_csv(points_csv, points, hard_codes, truth);
  atomic_write_file(reps_md,
                    representatives_markdown(assignments, tuples, o.top_codes, o.top_n, k));
  scope.output(assignments_csv);
  scope.output(usage_csv);
  scope.output(points_csv);
  scope.output(reps_md);

  if (truth.has_value()) {
    std::vector<int> argmax_labels;
    argmax_labels.reserve(tuples.size());
    for (const auto& tuple : tuples) {
      argmax_labels.push_back(argmax_lowest(tuple.pseudo_label->probs));
    }
    const auto hard_quality = clustering_quality(hard_codes, *truth);
    const auto argmax_quality = clustering_quality(argmax_labels, *truth);
    nlohmann::json q;
    q["hard_code"] = {{"nmi", hard_quality.nmi}, {"purity", hard_quality.purity}};
    q["argmax_label"] = {{"nmi", argmax_quality.nmi}, {"purity", argmax_quality.purity}};
    const fs::path quality_json = run.analysis() / "quality.json";
    atomic_write_file(quality_json, q.dump(2) + "\n");
    scope.output(quality_json);
    std::cout << q.dump(2) << std::endl;
  }

  scope.write(run.manifests() / "analyze.json");
  return 0;
}

struct AugmentOpts {
  CommonOpts common;
  std::string corpus;
  std::string out;
  std::string spec_path;
  int per_dialogue = 7;
  int prefix_lo = 2;
  int prefix_hi = 8;
  bool merge = false;
  bool external = false;
  std::string templates_dir;
};

int cmd_augment(const AugmentOpts& o) {
  const TrainConfig cfg = effective_config(o.common);
  const auto records = load_corpus(o.corpus);

  std::unique_ptr<DialogueCompleter> completer;
  if (o.external) {
    const auto templates = PromptTemplateSet::load(o.templates_dir);
    if (!templates.completer.has_value()) {
      throw ValidationError("external augmentation needs a completer.txt template");
    }
    completer = std::make_unique<ExternalCompleter>(ChatClient(ChatClientSettings::from_env()),
                                                    *templates.completer);
  } else {
    completer = std::make_unique<ScriptedTemplateCompleter>(spec_or_default(o.spec_path));
  }

  auto augmented = augment_context_completion(records, *completer,
                                              PrefixRange{o.prefix_lo, o.prefix_hi},
                                              o.per_dialogue, cfg.seed);
  spdlog::info("augmented {} dialogues into {} new records", records.size(), augmented.size());

  std::vector<DialogueRecord> out_records;
  if (o.merge) {
    out_records = records;
    out_records.insert(out_records.end(), augmented.begin(), augmented.end());
  } else {
    out_records = std::move(augmented);
  }

  ManifestScope scope("augment", cfg.hash(), cfg.seed);
  scope.input(o.corpus);
  save_corpus(out_records, o.out);
  scope.output(o.out);
  scope.write(file_manifest_path(o.out));
  return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"latent dialogue policy discovery pipeline"};
  app.require_subcommand(1);

  auto gen = std::make_shared<GenCorpusOpts>();
  auto* gen_cmd = app.add_subcommand("gen-corpus", "Generate a synthetic dialogue corpus");
  add_common(gen_cmd, gen->common);
  gen_cmd->add_option("--n", gen->n, "number of dialogues")->capture_default_str();
  gen_cmd->add_option("--out", gen->out, "output corpus JSON file")->required();
  gen_cmd->add_option("--spec", gen->spec_path, "synthetic world spec JSON")
      ->check(CLI::ExistingFile);
  gen_cmd->callback([gen]() { cmd_gen_corpus(*gen); });

  auto ann = std::make_shared<AnnotateOpts>();
  auto* ann_cmd = app.add_subcommand("annotate", "Decompose a corpus and attach critic rewards");
  add_common(ann_cmd, ann->common);
  ann_cmd->add_option("--corpus", ann->corpus, "corpus JSON file")
      ->required()
      ->check(CLI::ExistingFile);
  ann_cmd->add_option("--out", ann->out_dir, "run directory")->capture_default_str();
  ann_cmd->add_option("--noise", ann->noise, "critic label-flip probability")
      ->capture_default_str();
  ann_cmd->callback([ann]() { cmd_annotate(*ann); });

  auto s1 = std::make_shared<TrainStage1Opts>();
  auto* s1_cmd = app.add_subcommand(
      "train-stage1", "Pretrain the generator, then train encoder/codebook/adapter");
  add_common(s1_cmd, s1->common);
  s1_cmd->add_option("--corpus", s1->corpus, "corpus JSON file")
      ->required()
      ->check(CLI::ExistingFile);
  s1_cmd->add_option("--tuples", s1->tuples, "tuple JSONL (default: decompose the corpus)")
      ->check(CLI::ExistingFile);
  s1_cmd->add_option("--out", s1->out_dir, "run directory")->capture_default_str();
  s1_cmd->add_option("--max-steps", s1->max_steps, "stop each phase after this many steps");
  s1_cmd->add_option("--epochs", s1->epochs, "override epochs for this stage");
  s1_cmd->callback([s1]() { cmd_train_stage1(*s1); });

  auto lab = std::make_shared<LabelOpts>();
  auto* lab_cmd = app.add_subcommand("label", "Write encoder pseudo-labels into a tuple file");
  add_common(lab_cmd, lab->common);
  lab_cmd->add_option("--from", lab->from, "stage-1 (or later) checkpoint directory")
      ->required()
      ->check(CLI::ExistingDirectory);
  lab_cmd->add_option("--tuples", lab->tuples, "tuple JSONL file")
      ->required()
      ->check(CLI::ExistingFile);
  lab_cmd->add_option("--out", lab->out_dir, "run directory")->capture_default_str();
  lab_cmd->callback([lab]() { cmd_label(*lab); });

  auto s2 = std::make_shared<TrainLaterOpts>();
  auto* s2_cmd = app.add_subcommand("train-stage2", "Planner distillation plus value heads");
  add_common(s2_cmd, s2->common);
  s2_cmd->add_option("--from", s2->from, "stage-1 checkpoint directory")
      ->required()
      ->check(CLI::ExistingDirectory);
  s2_cmd->add_option("--tuples", s2->tuples, "labeled+annotated tuple JSONL")
      ->required()
      ->check(CLI::ExistingFile);
  s2_cmd->add_option("--out", s2->out_dir, "run directory")->capture_default_str();
  s2_cmd->add_option("--max-steps", s2->max_steps, "stop after this many steps");
  s2_cmd->add_option("--epochs", s2->epochs, "override epochs for this stage");
  s2_cmd->callback([s2]() { cmd_train_stage2(*s2); });

  auto s3 = std::make_shared<TrainLaterOpts>();
  auto* s3_cmd = app.add_subcommand("train-stage3", "Advantage-weighted planner and adapter");
  add_common(s3_cmd, s3->common);
  s3_cmd->add_option("--from", s3->from, "stage-2 checkpoint directory")
      ->required()
      ->check(CLI::ExistingDirectory);
  s3_cmd->add_option("--tuples", s3->tuples, "labeled+annotated tuple JSONL")
      ->required()
      ->check(CLI::ExistingFile);
  s3_cmd->add_option("--out", s3->out_dir, "run directory")->capture_default_str();
  s3_cmd->add_option("--max-steps", s3->max_steps, "stop after this many steps");
  s3_cmd->add_option("--epochs", s3->epochs, "override epochs for this stage");
  s3_cmd->add_flag("--skip-stage2", s3->skip_stage2,
                   "accept a stage-1 checkpoint (documented ablation)");
  s3_cmd->callback([s3]() { cmd_train_stage3(*s3); });

  auto ev = std::make_shared<EvaluateOpts>();
  auto* ev_cmd = app.add_subcommand("evaluate", "Scripted self-play evaluation");
  add_common(ev_cmd, ev->common);
  ev_cmd->add_option("--from", ev->from, "checkpoint directory")
      ->required()
      ->check(CLI::ExistingDirectory);
  ev_cmd->add_option("--cases", ev->n_cases, "number of evaluation cases")
      ->capture_default_str();
  ev_cmd->add_option("--corpus", ev->cases_path, "corpus JSON with evaluation cases")
      ->required()
      ->check(CLI::ExistingFile);
  ev_cmd->add_option("--out", ev->out_dir, "run directory")->capture_default_str();
  ev_cmd->add_option("--planner", ev->planner, "mixture|argmax|random")
      ->capture_default_str();
  ev_cmd->add_option("--spec", ev->spec_path, "synthetic world spec JSON")
      ->check(CLI::ExistingFile);
  ev_cmd->add_option("--noise", ev->noise, "critic label-flip probability")
      ->capture_default_str();
  ev_cmd->add_flag("--exclude-aborted", ev->exclude_aborted,
                   "drop aborted episodes from metrics instead of counting failures");
  ev_cmd->add_flag("--external", ev->external, "use HTTP critic/user adapters");
  ev_cmd->add_option("--templates", ev->templates_dir, "prompt template directory")
      ->check(CLI::ExistingDirectory);
  ev_cmd->callback([ev]() { cmd_evaluate(*ev); });

  auto an = std::make_shared<AnalyzeOpts>();
  auto* an_cmd = app.add_subcommand("analyze", "Codebook usage, projections and cluster quality");
  add_common(an_cmd, an->common);
  an_cmd->add_option("--from", an->from, "checkpoint directory")
      ->required()
      ->check(CLI::ExistingDirectory);
  an_cmd->add_option("--tuples", an->tuples, "pseudo-labeled tuple JSONL")
      ->required()
      ->check(CLI::ExistingFile);
  an_cmd->add_option("--corpus", an->corpus, "corpus JSON with ground-truth labels")
      ->check(CLI::ExistingFile);
  an_cmd->add_option("--out", an->out_dir, "run directory")->capture_default_str();
  an_cmd->add_option("--top-codes", an->top_codes, "codes in the representatives report")
      ->capture_default_str();
  an_cmd->add_option("--top-n", an->top_n, "utterances per code")->capture_default_str();
  an_cmd->callback([an]() { cmd_analyze(*an); });

  auto aug = std::make_shared<AugmentOpts>();
  auto* aug_cmd = app.add_subcommand("augment", "Context completion over dialogue prefixes");
  add_common(aug_cmd, aug->common);
  aug_cmd->add_option("--corpus", aug->corpus, "source corpus JSON")
      ->required()
      ->check(CLI::ExistingFile);
  aug_cmd->add_option("--out", aug->out, "output corpus JSON file")->required();
  aug_cmd->add_option("--per-dialogue", aug->per_dialogue, "augmentations per source")
      ->capture_default_str();
  aug_cmd->add_option("--prefix-lo", aug->prefix_lo, "shortest prefix length")
      ->capture_default_str();
  aug_cmd->add_option("--prefix-hi", aug->prefix_hi, "longest prefix length")
      ->capture_default_str();
  aug_cmd->add_flag("--merge", aug->merge, "emit sources plus augmentations");
  aug_cmd->add_option("--spec", aug->spec_path, "synthetic world spec JSON")
      ->check(CLI::ExistingFile);
  aug_cmd->add_flag("--external", aug->external, "use the HTTP completer adapter");
  aug_cmd->add_option("--templates", aug->templates_dir, "prompt template directory")
      ->check(CLI::ExistingDirectory);
  aug_cmd->callback([aug]() { cmd_augment(*aug); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  } catch (const ValidationError& e) {
    spdlog::error("{}", e.what());
    return 1;
  } catch (const RuntimeFailure& e) {
    spdlog::error("{}", e.what());
    return 2;
  } catch (const std::exception& e) {
    spdlog::error("unexpected failure: {}", e.what());
    return 2;
  }
  return 0;
}

}  // namespace ldpp
