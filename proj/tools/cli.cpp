#include "cli.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <unordered_map>

#include "CLI11.hpp"
#include "manifest.hpp"
#include "scorefilter/analysis.hpp"
#include "scorefilter/baselines.hpp"
#include "scorefilter/error.hpp"
#include "scorefilter/feature_store.hpp"
#include "scorefilter/score_net.hpp"
#include "scorefilter/selector.hpp"
#include "scorefilter/stage1.hpp"
#include "scorefilter/synth.hpp"
#include "scorefilter/toy_model.hpp"

namespace scorefilter::cli {

namespace fs = std::filesystem;

namespace {

// Flags shared by gen-synth and analyze sweep.
struct SynthFlags {
  std::string config;
  std::size_t n = 0;
  std::size_t vocab_size = 0;
  std::size_t min_len = 0;
  std::size_t max_len = 0;
  std::size_t clusters = 0;
  std::size_t dim = 0;
  double noise = -1.0;
  std::optional<std::uint64_t> seed;

  void attach(CLI::App* app, const std::string& config_flag) {
    app->add_option(config_flag, config, "TOML synthetic-data spec")
        ->check(CLI::ExistingFile);
    app->add_option("--n", n, "Number of samples");
    app->add_option("--vocab-size", vocab_size, "Vocabulary size");
    app->add_option("--min-len", min_len, "Minimum sequence length");
    app->add_option("--max-len", max_len, "Maximum sequence length");
    app->add_option("--clusters", clusters, "Feature clusters per regime");
    app->add_option("--dim", dim, "Feature dimension");
    app->add_option("--noise", noise, "Feature noise standard deviation");
    app->add_option("--seed", seed, "Generator seed");
  }

  SynthSpec resolve() const {
    SynthSpec spec = config.empty() ? SynthSpec{} : load_synth_spec(config);
    if (n) spec.n = n;
    if (vocab_size) spec.vocab_size = vocab_size;
    if (min_len) spec.min_len = min_len;
    if (max_len) spec.max_len = max_len;
    if (clusters) spec.clusters_per_regime = clusters;
    if (dim) spec.feature_dim = dim;
    if (noise >= 0.0) spec.feature_noise = noise;
    if (seed) spec.seed = *seed;
    spec.validate();
    return spec;
  }
};

// Flags mapping onto TrainConfig. Explicit flags override --config.
struct TrainFlags {
  std::string config;
  std::optional<std::size_t> batch_size, epochs, grad_accum, vocab_size;
  std::optional<double> lr_model, lr_scorenet, l2;
  std::optional<std::uint64_t> seed;

  // Seed and vocabulary flags are added by callers whose names may clash.
  void attach(CLI::App* app) {
    app->add_option("--config", config, "TOML training config")->check(CLI::ExistingFile);
    app->add_option("--batch-size", batch_size, "Local batch size b (default 16)");
    app->add_option("--epochs", epochs, "Training epochs");
    app->add_option("--lr-model", lr_model, "Toy-model learning rate");
    app->add_option("--lr-scorenet", lr_scorenet, "Score-net learning rate");
    app->add_option("--l2-scorenet", l2, "L2 penalty on score-net weights");
    app->add_option("--grad-accum-steps", grad_accum, "Local batches per optimizer step");
  }

  TrainConfig resolve() const {
    TrainConfig cfg = config.empty() ? TrainConfig{} : load_train_config(config);
    if (batch_size) cfg.batch_size = *batch_size;
    if (epochs) cfg.epochs = *epochs;
    if (grad_accum) cfg.grad_accum_steps = *grad_accum;
    if (vocab_size) cfg.vocab_size = *vocab_size;
    if (lr_model) cfg.lr_model = *lr_model;
    if (lr_scorenet) cfg.lr_scorenet = *lr_scorenet;
    if (l2) cfg.l2_scorenet = *l2;
    if (seed) cfg.seed = *seed;
    cfg.validate();
    return cfg;
  }
};

Json to_json(const SynthSpec& spec) {
  Json regimes = Json::array();
  for (const auto& r : spec.regimes) {
    regimes.push_back({{"fraction", r.fraction},
                       {"temperature", r.temperature},
                       {"min_len", r.min_len},
                       {"max_len", r.max_len}});
  }
  return {{"n", spec.n},
          {"vocab_size", spec.vocab_size},
          {"min_len", spec.min_len},
          {"max_len", spec.max_len},
          {"regimes", regimes},
          {"clusters_per_regime", spec.clusters_per_regime},
          {"feature_dim", spec.feature_dim},
          {"feature_noise", spec.feature_noise},
          {"seed", spec.seed}};
}

Json to_json(const TrainConfig& cfg) {
  return {{"batch_size", cfg.batch_size},         {"epochs", cfg.epochs},
          {"lr_model", cfg.lr_model},             {"lr_scorenet", cfg.lr_scorenet},
          {"seed", cfg.seed},                     {"l2_scorenet", cfg.l2_scorenet},
          {"grad_accum_steps", cfg.grad_accum_steps}, {"vocab_size", cfg.vocab_size}};
}

Json to_json(const PlainTrainConfig& cfg) {
  return {{"epochs", cfg.epochs},
          {"batch_size", cfg.batch_size},
          {"lr", cfg.lr},
          {"seed", cfg.seed}};
}

fs::path prepare_out(const std::string& out) {
  fs::path dir(out);
  fs::create_directories(dir);
  return dir;
}

std::vector<InstructionMeta> meta_from_tokens(std::span<const TokenSample> samples) {
  std::vector<InstructionMeta> meta;
  meta.reserve(samples.size());
  for (const auto& s : samples) {
    meta.push_back({s.id, static_cast<std::int64_t>(s.tokens.size()), {}});
  }
  return meta;
}

void require_same_ids(std::span<const TokenSample> samples,
                      std::span<const InstructionMeta> meta) {
  if (samples.size() != meta.size()) {
    throw ValidationError("token file has " + std::to_string(samples.size()) +
                          " samples, metadata has " + std::to_string(meta.size()));
  }
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (samples[i].id != meta[i].id) {
      throw ValidationError("token sample " + std::to_string(i) + " has id \"" +
                            samples[i].id + "\" but metadata row has \"" + meta[i].id + "\"");
    }
  }
}

std::vector<std::size_t> indices_for_ids(const std::vector<SelectionRecord>& records,
                                         std::span<const InstructionMeta> meta) {
  std::unordered_map<std::string, std::size_t> position;
  for (std::size_t i = 0; i < meta.size(); ++i) position.emplace(meta[i].id, i);
  std::vector<std::size_t> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    auto it = position.find(r.id);
    if (it == position.end()) {
      throw ValidationError("selected id \"" + r.id + "\" is not in the dataset");
    }
    out.push_back(it->second);
  }
  return out;
}

fs::path default_sidecar(const fs::path& model) {
  fs::path sidecar = model;
  sidecar.replace_extension(".json");
  return sidecar;
}

// Plain training used by baselines when no model checkpoint is supplied.
struct WarmupFlags {
  std::string model;
  std::size_t epochs = 1;
  std::size_t batch_size = 16;
  double lr = 1.0;
  std::uint64_t seed = 0;
  std::size_t vocab_size = 0;

  void attach(CLI::App* app) {
    app->add_option("--model", model, "Toy-model checkpoint (.sffm, sidecar .json beside it)")
        ->check(CLI::ExistingFile);
    app->add_option("--warmup-epochs", epochs, "Warm-up epochs when no --model is given");
    app->add_option("--warmup-batch-size", batch_size, "Warm-up batch size");
    app->add_option("--warmup-lr", lr, "Warm-up learning rate");
    app->add_option("--seed", seed, "Warm-up seed");
    app->add_option("--vocab-size", vocab_size, "Vocabulary size (0 = infer)");
  }

  BigramModel model_for(std::span<const TokenSample> samples, std::uint64_t seed_offset,
                        RunManifest& manifest) const {
    if (!model.empty()) {
      manifest.add_input(model);
      manifest.add_input(default_sidecar(model));
      return load_model(model, default_sidecar(model));
    }
    const std::size_t vocab = vocab_size ? vocab_size : infer_vocab_size(samples);
    return train_plain(BigramModel(vocab), samples,
                       {epochs, batch_size, lr, seed + seed_offset})
        .model;
  }

  Json to_json() const {
    return {{"model", model},
            {"warmup_epochs", epochs},
            {"warmup_batch_size", batch_size},
            {"warmup_lr", lr},
            {"vocab_size", vocab_size}};
  }
};

void write_baseline(const ScoreVector& scores, std::span<const InstructionMeta> meta,
                    std::size_t m, const fs::path& dir, RunManifest& manifest) {
  save_scores(scores, meta, dir / "scores.jsonl");
  manifest.add_output(dir, "scores.jsonl");
  if (m > 0) {
    save_selection(rank_scores(scores, m), meta, dir / "selection.jsonl");
    manifest.add_output(dir, "selection.jsonl");
  }
}

}  // namespace

int run(int argc, const char* const* argv) {
  CLI::App app{"Learned-difficulty data selection with a diversity penalty", "scorefilter"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  std::function<void()> action;

  // gen-synth ---------------------------------------------------------------
  auto* gen = app.add_subcommand("gen-synth", "Generate a planted-difficulty dataset");
  SynthFlags gen_flags;
  std::string gen_out;
  std::size_t gen_heldout = 500;
  gen_flags.attach(gen, "--config");
  gen->add_option("--heldout", gen_heldout, "Held-out samples to write (0 = none)");
  gen->add_option("--out", gen_out, "Output directory")->required();
  gen->callback([&] {
    action = [&] {
      const auto spec = gen_flags.resolve();
      const auto dir = prepare_out(gen_out);
      RunManifest manifest{"gen-synth"};
      if (!gen_flags.config.empty()) manifest.add_input(gen_flags.config);
      const auto data = generate(spec);
      write_synth(data, dir);
      for (const char* name : {"features.sffm", "meta.jsonl", "tokens.jsonl", "truth.jsonl"}) {
        manifest.add_output(dir, name);
      }
      if (gen_heldout > 0) {
        const auto heldout = generate_heldout(spec, gen_heldout, 1);
        save_token_samples(heldout.samples, dir / "heldout.jsonl");
        manifest.add_output(dir, "heldout.jsonl");
      }
      manifest.config = to_json(spec);
      manifest.config["heldout"] = gen_heldout;
      manifest.config["entropy_rates"] = data.entropy_rates;
      manifest.seeds = {{"seed", spec.seed}};
      manifest.write(dir);
      std::cout << "wrote " << spec.n << " samples to " << dir.string() << '\n';
    };
  });

  // train -------------------------------------------------------------------
  auto* train = app.add_subcommand("train", "Co-train the toy model and the score net");
  TrainFlags train_flags;
  std::string train_features, train_tokens, train_meta, train_out;
  train_flags.attach(train);
  train->add_option("--seed", train_flags.seed, "Training seed");
  train->add_option("--vocab-size", train_flags.vocab_size, "Vocabulary size (0 = infer)");
  train->add_option("--features", train_features, "SFFM feature file")
      ->required()
      ->check(CLI::ExistingFile);
  train->add_option("--tokens", train_tokens, "Token JSON Lines file")
      ->required()
      ->check(CLI::ExistingFile);
  train->add_option("--meta", train_meta, "Metadata JSON Lines (checks id order)")
      ->check(CLI::ExistingFile);
  train->add_option("--out", train_out, "Output directory")->required();
  train->callback([&] {
    action = [&] {
      const auto cfg = train_flags.resolve();
      const auto features = load_features(train_features);
      const auto samples = load_token_samples(train_tokens);
      RunManifest manifest{"train"};
      if (!train_flags.config.empty()) manifest.add_input(train_flags.config);
      manifest.add_input(train_features);
      manifest.add_input(train_tokens);
      if (!train_meta.empty()) {
        const auto meta = load_metadata(train_meta);
        check_pairing(features, meta);
        require_same_ids(samples, meta);
        manifest.add_input(train_meta);
      }
      const auto result = train_stage1(samples, features, cfg);
      const auto dir = prepare_out(train_out);
      save_score_net(result.score_net, dir / "scorenet.json");
      save_model(result.model, dir / "model.sffm", dir / "model.json");
      result.log.write_csv(dir / "trainlog.csv");
      std::vector<Json> weights;
      for (std::size_t i = 0; i < samples.size(); ++i) {
        weights.push_back({{"id", samples[i].id}, {"w", result.log.final_raw_weights[i]}});
      }
      write_json_lines(dir / "weights.jsonl", weights);
      for (const char* name :
           {"scorenet.json", "model.sffm", "model.json", "trainlog.csv", "weights.jsonl"}) {
        manifest.add_output(dir, name);
      }
      manifest.config = to_json(cfg);
      manifest.seeds = {{"seed", cfg.seed}};
      manifest.write(dir);
      std::cout << "trained " << result.log.steps.size() << " steps on " << samples.size()
                << " samples\n";
    };
  });

  // score -------------------------------------------------------------------
  auto* score = app.add_subcommand("score", "Write per-sample difficulty d = -s(S)");
  std::string score_net_path, score_features, score_meta, score_out;
  score->add_option("--scorenet", score_net_path, "Score-net checkpoint")
      ->required()
      ->check(CLI::ExistingFile);
  score->add_option("--features", score_features, "SFFM feature file")
      ->required()
      ->check(CLI::ExistingFile);
  score->add_option("--meta", score_meta, "Metadata JSON Lines")
      ->required()
      ->check(CLI::ExistingFile);
  score->add_option("--out", score_out, "Output directory")->required();
  score->callback([&] {
    action = [&] {
      const auto params = load_score_net(score_net_path);
      const auto features = load_features(score_features);
      const auto meta = load_metadata(score_meta);
      check_pairing(features, meta);
      const auto table = compute_difficulty(params, features);
      const auto dir = prepare_out(score_out);
      RunManifest manifest{"score"};
      manifest.add_input(score_net_path);
      manifest.add_input(score_features);
      manifest.add_input(score_meta);
      save_difficulty(table, meta, dir / "difficulty.jsonl");
      manifest.add_output(dir, "difficulty.jsonl");
      manifest.write(dir);
    };
  });

  // select ------------------------------------------------------------------
  auto* sel = app.add_subcommand("select", "Greedy hardest-first selection with diversity");
  std::string sel_difficulty, sel_features, sel_meta, sel_out;
  std::size_t sel_m = 0;
  std::size_t sel_k = 10;
  double sel_gamma = 1.0;
  bool sel_no_div = false;
  bool sel_easiest = false;
  sel->add_option("--difficulty", sel_difficulty, "Difficulty JSON Lines {id, d}")
      ->required()
      ->check(CLI::ExistingFile);
  sel->add_option("--features", sel_features, "SFFM features for the neighbor index")
      ->required()
      ->check(CLI::ExistingFile);
  sel->add_option("--meta", sel_meta, "Metadata JSON Lines")
      ->required()
      ->check(CLI::ExistingFile);
  sel->add_option("--m", sel_m, "Number of samples to keep")->required();
  sel->add_option("--k", sel_k, "Neighbors penalized per pick")->capture_default_str();
  sel->add_option("--gamma", sel_gamma, "Diversity penalty strength")->capture_default_str();
  sel->add_flag("--no-diversity", sel_no_div, "Disable the neighbor penalty");
  sel->add_flag("--easiest", sel_easiest, "Select the easiest samples instead");
  sel->add_option("--out", sel_out, "Output directory")->required();
  sel->callback([&] {
    action = [&] {
      const auto features = load_features(sel_features);
      const auto meta = load_metadata(sel_meta);
      check_pairing(features, meta);
      auto table = DifficultyTable::from_scores(load_scores_by_id(sel_difficulty, meta, "d"));
      if (sel_easiest) table = table.negated();
      const bool diversity = !sel_no_div;
      const auto index = diversity ? build_knn(features, sel_k) : NeighborIndex{};
      const auto result = select(std::move(table), index, sel_m, sel_gamma, diversity);
      const auto dir = prepare_out(sel_out);
      RunManifest manifest{"select"};
      manifest.add_input(sel_difficulty);
      manifest.add_input(sel_features);
      manifest.add_input(sel_meta);
      save_selection(result, meta, dir / "selection.jsonl");
      manifest.add_output(dir, "selection.jsonl");
      manifest.config = {{"m", sel_m},
                         {"k", sel_k},
                         {"gamma", sel_gamma},
                         {"diversity", diversity},
                         {"easiest", sel_easiest}};
      manifest.write(dir);
    };
  });

  // baseline ----------------------------------------------------------------
  auto* base = app.add_subcommand("baseline", "Comparison pruning scores");
  base->require_subcommand(1);
  std::string base_out;
  std::size_t base_m = 0;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--out", base_out, "Output directory")->required();
    sub->add_option("--m", base_m, "Also rank and keep the top m (0 = scores only)");
  };

  std::string el2n_tokens;
  WarmupFlags el2n_warm;
  auto* el2n = base->add_subcommand("el2n", "Average cross-entropy per sample");
  el2n->add_option("--tokens", el2n_tokens, "Token JSON Lines")
      ->required()
      ->check(CLI::ExistingFile);
  el2n_warm.attach(el2n);
  add_common(el2n);
  el2n->callback([&] {
    action = [&] {
      const auto samples = load_token_samples(el2n_tokens);
      RunManifest manifest{"baseline el2n"};
      manifest.add_input(el2n_tokens);
      const auto model = el2n_warm.model_for(samples, 0, manifest);
      const auto dir = prepare_out(base_out);
      write_baseline(el2n_scores(model, samples), meta_from_tokens(samples), base_m, dir,
                     manifest);
      manifest.config = el2n_warm.to_json();
      manifest.config["m"] = base_m;
      manifest.seeds = {{"seed", el2n_warm.seed}};
      manifest.write(dir);
    };
  });

  std::string grand_tokens;
  WarmupFlags grand_warm;
  std::size_t grand_snapshots = 1;
  auto* grand = base->add_subcommand("grand", "Per-sample gradient norm");
  grand->add_option("--tokens", grand_tokens, "Token JSON Lines")
      ->required()
      ->check(CLI::ExistingFile);
  grand->add_option("--snapshots", grand_snapshots,
                    "Average over this many warm-up seeds (ignored with --model)");
  grand_warm.attach(grand);
  add_common(grand);
  grand->callback([&] {
    action = [&] {
      if (grand_snapshots < 1) throw ValidationError("--snapshots must be >= 1");
      const auto samples = load_token_samples(grand_tokens);
      RunManifest manifest{"baseline grand"};
      manifest.add_input(grand_tokens);
      std::vector<BigramModel> models;
      const std::size_t count = grand_warm.model.empty() ? grand_snapshots : 1;
      for (std::size_t s = 0; s < count; ++s) {
        models.push_back(grand_warm.model_for(samples, s, manifest));
      }
      const auto dir = prepare_out(base_out);
      write_baseline(grand_scores(models, samples), meta_from_tokens(samples), base_m, dir,
                     manifest);
      manifest.config = grand_warm.to_json();
      manifest.config["snapshots"] = count;
      manifest.config["m"] = base_m;
      manifest.seeds = {{"seed", grand_warm.seed}};
      manifest.write(dir);
    };
  });

  std::string proto_features, proto_meta;
  std::size_t proto_clusters = 0;
  std::size_t proto_iters = 100;
  std::uint64_t proto_seed = 0;
  auto* proto = base->add_subcommand("proto", "Distance to nearest k-means prototype");
  proto->add_option("--features", proto_features, "SFFM feature file")
      ->required()
      ->check(CLI::ExistingFile);
  proto->add_option("--meta", proto_meta, "Metadata JSON Lines")
      ->required()
      ->check(CLI::ExistingFile);
  proto->add_option("--clusters", proto_clusters, "k-means K (0 = round(sqrt(n)))");
  proto->add_option("--max-iters", proto_iters, "Lloyd iteration cap");
  proto->add_option("--seed", proto_seed, "Initialization seed");
  add_common(proto);
  proto->callback([&] {
    action = [&] {
      const auto features = load_features(proto_features);
      const auto meta = load_metadata(proto_meta);
      check_pairing(features, meta);
      const std::size_t k = proto_clusters ? proto_clusters : default_cluster_count(meta.size());
      RunManifest manifest{"baseline proto"};
      manifest.add_input(proto_features);
      manifest.add_input(proto_meta);
      const auto dir = prepare_out(base_out);
      write_baseline(prototypicality_scores(features, k, proto_seed, proto_iters), meta, base_m,
                     dir, manifest);
      manifest.config = {{"clusters", k}, {"max_iters", proto_iters}, {"m", base_m}};
      manifest.seeds = {{"seed", proto_seed}};
      manifest.write(dir);
    };
  });

  std::string random_meta;
  std::uint64_t random_seed = 0;
  auto* rnd = base->add_subcommand("random", "Uniform random subset");
  rnd->add_option("--meta", random_meta, "Metadata JSON Lines")
      ->required()
      ->check(CLI::ExistingFile);
  rnd->add_option("--seed", random_seed, "Sampling seed");
  add_common(rnd);
  rnd->callback([&] {
    action = [&] {
      if (base_m == 0) throw ValidationError("baseline random needs --m > 0");
      const auto meta = load_metadata(random_meta);
      SelectionResult result{{}, 0.0, false};
      for (auto i : random_select(meta.size(), base_m, random_seed)) {
        result.picks.push_back({i, 0.0, result.picks.size()});
      }
      RunManifest manifest{"baseline random"};
      manifest.add_input(random_meta);
      const auto dir = prepare_out(base_out);
      save_selection(result, meta, dir / "selection.jsonl");
      manifest.add_output(dir, "selection.jsonl");
      manifest.config = {{"m", base_m}};
      manifest.seeds = {{"seed", random_seed}};
      manifest.write(dir);
    };
  });

  std::string ext_scores, ext_meta;
  auto* ext = base->add_subcommand("external", "Ingest externally computed scores");
  ext->add_option("--scores-file", ext_scores, "JSON Lines {id, score}")
      ->required()
      ->check(CLI::ExistingFile);
  ext->add_option("--meta", ext_meta, "Metadata JSON Lines")
      ->required()
      ->check(CLI::ExistingFile);
  add_common(ext);
  ext->callback([&] {
    action = [&] {
      const auto meta = load_metadata(ext_meta);
      RunManifest manifest{"baseline external"};
      manifest.add_input(ext_scores);
      manifest.add_input(ext_meta);
      const auto dir = prepare_out(base_out);
      write_baseline(ingest_external_scores(ext_scores, meta), meta, base_m, dir, manifest);
      manifest.config = {{"m", base_m}};
      manifest.write(dir);
    };
  });

  // retrain -----------------------------------------------------------------
  auto* re = app.add_subcommand("retrain", "Train a fresh toy model on a selection");
  std::string re_tokens, re_selection, re_heldout, re_out;
  PipelineConfig pipeline_defaults;
  PlainTrainConfig re_cfg = pipeline_defaults.retrain;
  std::size_t re_vocab = 0;
  re->add_option("--tokens", re_tokens, "Token JSON Lines of the full pool")
      ->required()
      ->check(CLI::ExistingFile);
  re->add_option("--selection", re_selection, "Selection JSON Lines")
      ->required()
      ->check(CLI::ExistingFile);
  re->add_option("--heldout", re_heldout, "Held-out token JSON Lines")
      ->required()
      ->check(CLI::ExistingFile);
  re->add_option("--epochs", re_cfg.epochs, "Epochs")->capture_default_str();
  re->add_option("--batch-size", re_cfg.batch_size, "Batch size")->capture_default_str();
  re->add_option("--lr", re_cfg.lr, "Learning rate")->capture_default_str();
  re->add_option("--seed", re_cfg.seed, "Shuffle seed");
  re->add_option("--vocab-size", re_vocab, "Vocabulary size (0 = infer from pool)");
  re->add_option("--out", re_out, "Output directory")->required();
  re->callback([&] {
    action = [&] {
      const auto pool = load_token_samples(re_tokens);
      const auto heldout = load_token_samples(re_heldout);
      const auto picks = indices_for_ids(load_selection(re_selection), meta_from_tokens(pool));
      if (picks.empty()) throw ValidationError("selection is empty");
      std::vector<TokenSample> subset;
      for (auto i : picks) subset.push_back(pool[i]);
      const std::size_t vocab = re_vocab ? re_vocab : infer_vocab_size(pool);
      const auto trained = train_plain(BigramModel(vocab), subset, re_cfg);
      const double loss = trained.heldout_loss(heldout);
      const auto dir = prepare_out(re_out);
      RunManifest manifest{"retrain"};
      manifest.add_input(re_tokens);
      manifest.add_input(re_selection);
      manifest.add_input(re_heldout);
      save_model(trained.model, dir / "model.sffm", dir / "model.json");
      {
        std::ofstream out(dir / "retrain.json", std::ios::binary | std::ios::trunc);
        out << Json{{"selected", subset.size()}, {"heldout_loss", loss}}.dump(2) << '\n';
      }
      for (const char* name : {"model.sffm", "model.json", "retrain.json"}) {
        manifest.add_output(dir, name);
      }
      manifest.config = to_json(re_cfg);
      manifest.config["vocab_size"] = vocab;
      manifest.seeds = {{"seed", re_cfg.seed}};
      manifest.write(dir);
      std::cout << "held-out loss " << loss << '\n';
    };
  });

  // analyze -----------------------------------------------------------------
  auto* an = app.add_subcommand("analyze", "Correlation, coverage and sweep reports");
  an->require_subcommand(1);
  std::string an_out;

  std::string pear_difficulty, pear_meta;
  auto* pear = an->add_subcommand("pearson", "Pearson(difficulty, text length)");
  pear->add_option("--difficulty", pear_difficulty, "Difficulty JSON Lines")
      ->required()
      ->check(CLI::ExistingFile);
  pear->add_option("--meta", pear_meta, "Metadata JSON Lines")
      ->required()
      ->check(CLI::ExistingFile);
  pear->add_option("--out", an_out, "Output directory")->required();
  pear->callback([&] {
    action = [&] {
      const auto meta = load_metadata(pear_meta);
      const auto d = load_scores_by_id(pear_difficulty, meta, "d");
      std::vector<double> lengths;
      for (const auto& m : meta) lengths.push_back(static_cast<double>(m.text_len));
      Report report;
      report.metrics["pearson_difficulty_text_len"] = pearson(d, lengths);
      report.metrics["n"] = static_cast<double>(meta.size());
      const auto dir = prepare_out(an_out);
      RunManifest manifest{"analyze pearson"};
      manifest.add_input(pear_difficulty);
      manifest.add_input(pear_meta);
      report.write_csv(dir / "report.csv");
      report.write_json(dir / "report.json");
      manifest.add_output(dir, "report.csv");
      manifest.add_output(dir, "report.json");
      manifest.write(dir);
      std::cout << "pearson " << report.metrics["pearson_difficulty_text_len"] << '\n';
    };
  });

  std::string cov_selection, cov_meta;
  auto* cov = an->add_subcommand("coverage", "Cluster coverage of a selection");
  cov->add_option("--selection", cov_selection, "Selection JSON Lines")
      ->required()
      ->check(CLI::ExistingFile);
  cov->add_option("--meta", cov_meta, "Metadata JSON Lines with cluster tags")
      ->required()
      ->check(CLI::ExistingFile);
  cov->add_option("--out", an_out, "Output directory")->required();
  cov->callback([&] {
    action = [&] {
      const auto meta = load_metadata(cov_meta);
      SelectionResult result;
      std::size_t rank = 0;
      for (auto i : indices_for_ids(load_selection(cov_selection), meta)) {
        result.picks.push_back({i, 0.0, rank++});
      }
      const auto c = cluster_coverage(result, meta);
      Report report;
      report.metrics["clusters_covered"] = static_cast<double>(c.clusters_covered);
      report.metrics["max_concentration"] = c.max_concentration;
      report.metrics["selected"] = static_cast<double>(result.picks.size());
      const auto dir = prepare_out(an_out);
      RunManifest manifest{"analyze coverage"};
      manifest.add_input(cov_selection);
      manifest.add_input(cov_meta);
      report.write_csv(dir / "report.csv");
      report.write_json(dir / "report.json");
      manifest.add_output(dir, "report.csv");
      manifest.add_output(dir, "report.json");
      manifest.write(dir);
    };
  });

  SynthFlags sweep_synth;
  TrainFlags sweep_train;
  std::string sweep_variable = "m";
  std::vector<double> sweep_values;
  PipelineConfig sweep_cfg;
  std::size_t sweep_heldout = 500;
  auto* sw = an->add_subcommand("sweep", "Pipeline sweep over pruning size or batch size");
  sweep_synth.attach(sw, "--synth-config");
  sweep_train.attach(sw);
  sw->add_option("--variable", sweep_variable, "m | batch-size")
      ->check(CLI::IsMember({"m", "batch-size"}));
  sw->add_option("--values", sweep_values, "Comma-separated values")
      ->required()
      ->delimiter(',');
  sw->add_option("--m", sweep_cfg.m, "Pruning size for batch-size sweeps")
      ->capture_default_str();
  sw->add_option("--k", sweep_cfg.k, "Neighbors penalized per pick")->capture_default_str();
  sw->add_option("--gamma", sweep_cfg.gamma, "Diversity penalty")->capture_default_str();
  bool sweep_no_div = false;
  sw->add_flag("--no-diversity", sweep_no_div, "Disable the neighbor penalty");
  sw->add_option("--heldout", sweep_heldout, "Held-out sample count")->capture_default_str();
  sw->add_option("--retrain-epochs", sweep_cfg.retrain.epochs, "Retraining epochs")
      ->capture_default_str();
  sw->add_option("--retrain-lr", sweep_cfg.retrain.lr, "Retraining learning rate")
      ->capture_default_str();
  sw->add_option("--out", an_out, "Output directory")->required();
  sw->callback([&] {
    action = [&] {
      const auto spec = sweep_synth.resolve();
      sweep_cfg.train = sweep_train.resolve();
      sweep_cfg.train.seed = spec.seed;
      sweep_cfg.retrain.seed = spec.seed;
      sweep_cfg.diversity = !sweep_no_div;
      const auto pool = generate(spec);
      const auto heldout = generate_heldout(spec, sweep_heldout, 1);
      const auto variable =
          sweep_variable == "m" ? SweepVariable::kPruningSize : SweepVariable::kBatchSize;
      const auto report = sweep(sweep_cfg, pool, heldout.samples, variable, sweep_values);
      const auto dir = prepare_out(an_out);
      RunManifest manifest{"analyze sweep"};
      if (!sweep_synth.config.empty()) manifest.add_input(sweep_synth.config);
      if (!sweep_train.config.empty()) manifest.add_input(sweep_train.config);
      report.write_csv(dir / "report.csv");
      report.write_json(dir / "report.json");
      manifest.add_output(dir, "report.csv");
      manifest.add_output(dir, "report.json");
      manifest.config = {{"synth", to_json(spec)},
                         {"train", to_json(sweep_cfg.train)},
                         {"retrain", to_json(sweep_cfg.retrain)},
                         {"variable", sweep_variable},
                         {"values", sweep_values},
                         {"m", sweep_cfg.m},
                         {"k", sweep_cfg.k},
                         {"gamma", sweep_cfg.gamma},
                         {"diversity", sweep_cfg.diversity},
                         {"heldout", sweep_heldout}};
      manifest.seeds = {{"seed", spec.seed}};
      manifest.write(dir);
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "scorefilter: usage error: " << e.what() << '\n';
    return 2;
  }

  try {
    if (action) action();
  } catch (const Error& e) {
    std::cerr << "scorefilter: error: " << e.what() << '\n';
    return 1;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "scorefilter: error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

int run(const std::vector<std::string>& args) {
  std::vector<const char*> argv;
  argv.reserve(args.size() + 1);
  argv.push_back("scorefilter");
  for (const auto& a : args) argv.push_back(a.c_str());
  return run(static_cast<int>(argv.size()), argv.data());
}

}  // namespace scorefilter::cli
