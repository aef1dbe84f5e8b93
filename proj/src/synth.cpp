#include "scorefilter/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_map>

#define TOML_EXCEPTIONS 1
#include <toml.hpp>

#include "scorefilter/error.hpp"
#include "scorefilter/jsonl.hpp"
#include "scorefilter/random.hpp"

namespace scorefilter {

namespace {

constexpr double kMaxCenterCosine = 0.5;
constexpr std::size_t kCenterAttempts = 100000;
constexpr std::uint64_t kSampleStream = 0x9e3779b97f4a7c15ULL;

struct Structure {
  std::vector<BigramModel> chains;
  std::vector<TransitionTable> tables;
  std::vector<std::vector<double>> centers;  // one per global cluster
  std::vector<double> entropy_rates;
  std::vector<std::size_t> difficulty_rank;  // per regime
};

std::vector<double> random_unit(Rng& rng, std::size_t dim) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> v(dim);
  double norm = 0.0;
  do {
    norm = 0.0;
    for (double& x : v) {
      x = normal(rng);
      norm += x * x;
    }
  } while (norm == 0.0);
  norm = std::sqrt(norm);
  for (double& x : v) x /= norm;
  return v;
}

Structure build_structure(const SynthSpec& spec) {
  Rng rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Structure s;
  // One base language; each regime sees it through its own temperature.
  std::vector<double> base(spec.vocab_size * spec.vocab_size);
  for (double& x : base) x = normal(rng);
  for (const auto& regime : spec.regimes) {
    std::vector<double> logits(base.size());
    for (std::size_t k = 0; k < base.size(); ++k) logits[k] = base[k] / regime.temperature;
    s.chains.emplace_back(spec.vocab_size, std::move(logits));
    s.tables.emplace_back(s.chains.back());
    s.entropy_rates.push_back(chain_entropy_rate(s.chains.back()));
  }

  const std::size_t total_clusters = spec.regimes.size() * spec.clusters_per_regime;
  for (std::size_t c = 0; c < total_clusters; ++c) {
    std::size_t attempt = 0;
    for (;; ++attempt) {
      if (attempt == kCenterAttempts) {
        throw ValidationError("cannot place " + std::to_string(total_clusters) +
                              " cluster centers with pairwise cosine <= 0.5 in d=" +
                              std::to_string(spec.feature_dim));
      }
      auto candidate = random_unit(rng, spec.feature_dim);
      bool ok = true;
      for (const auto& other : s.centers) {
        double dot = 0.0;
        for (std::size_t j = 0; j < candidate.size(); ++j) dot += candidate[j] * other[j];
        if (dot > kMaxCenterCosine) {
          ok = false;
          break;
        }
      }
      if (ok) {
        s.centers.push_back(std::move(candidate));
        break;
      }
    }
  }

  std::vector<std::size_t> by_loss(spec.regimes.size());
  std::iota(by_loss.begin(), by_loss.end(), std::size_t{0});
  std::stable_sort(by_loss.begin(), by_loss.end(), [&](std::size_t a, std::size_t b) {
    return s.entropy_rates[a] < s.entropy_rates[b];
  });
  s.difficulty_rank.resize(spec.regimes.size());
  for (std::size_t pos = 0; pos < by_loss.size(); ++pos) s.difficulty_rank[by_loss[pos]] = pos;
  return s;
}

SynthData draw(const SynthSpec& spec, const Structure& s, std::size_t n, std::uint64_t stream,
               const std::string& id_prefix) {
  Rng rng(spec.seed ^ stream);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::uniform_int_distribution<std::uint32_t> first_token(
      0, static_cast<std::uint32_t>(spec.vocab_size - 1));
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  // Regime sizes by rounding cumulative fractions, then a seeded shuffle so
  // regime is independent of sample position.
  std::vector<std::size_t> regime_of;
  regime_of.reserve(n);
  double cumulative = 0.0;
  std::size_t assigned = 0;
  for (std::size_t r = 0; r < spec.regimes.size(); ++r) {
    cumulative += spec.regimes[r].fraction;
    const std::size_t upto = r + 1 == spec.regimes.size()
                                 ? n
                                 : std::min(n, static_cast<std::size_t>(
                                                   std::llround(cumulative * double(n))));
    for (; assigned < upto; ++assigned) regime_of.push_back(r);
  }
  std::shuffle(regime_of.begin(), regime_of.end(), rng);

  std::vector<std::size_t> seen_in_regime(spec.regimes.size(), 0);
  std::vector<TokenSample> samples;
  std::vector<InstructionMeta> meta;
  std::vector<SynthTruth> truth;
  std::vector<double> values;
  values.reserve(n * spec.feature_dim);

  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t r = regime_of[i];
    const auto& regime = spec.regimes[r];
    const std::size_t lo = regime.min_len ? regime.min_len : spec.min_len;
    const std::size_t hi = regime.max_len ? regime.max_len : spec.max_len;
    std::uniform_int_distribution<std::size_t> length(lo, hi);

    TokenSample sample{id_prefix + std::to_string(i), {}};
    const std::size_t len = length(rng);
    sample.tokens.push_back(first_token(rng));
    while (sample.tokens.size() < len) {
      const std::size_t u = sample.tokens.back();
      double x = unit(rng);
      std::uint32_t v = 0;
      for (; v + 1 < spec.vocab_size; ++v) {
        x -= s.tables[r].prob(u, v);
        if (x < 0.0) break;
      }
      sample.tokens.push_back(v);
    }

    const std::size_t cluster =
        r * spec.clusters_per_regime + seen_in_regime[r]++ % spec.clusters_per_regime;
    for (double c : s.centers[cluster]) values.push_back(c + spec.feature_noise * noise(rng));

    meta.push_back({sample.id, static_cast<std::int64_t>(sample.tokens.size()),
                    {"regime:" + std::to_string(r), "cluster:" + std::to_string(cluster)}});
    truth.push_back({r, cluster, s.difficulty_rank[r]});
    samples.push_back(std::move(sample));
  }

  return {std::move(samples), FeatureMatrix(n, spec.feature_dim, std::move(values)),
          std::move(meta),    std::move(truth),
          s.chains,           s.entropy_rates};
}

}  // namespace

void SynthSpec::validate() const {
  if (n < 1) throw ValidationError("synth: n must be >= 1");
  if (vocab_size < 2) throw ValidationError("synth: vocab_size must be >= 2");
  if (feature_dim < 1) throw ValidationError("synth: feature_dim must be >= 1");
  if (clusters_per_regime < 1) throw ValidationError("synth: clusters_per_regime must be >= 1");
  if (!(feature_noise >= 0.0)) throw ValidationError("synth: feature_noise must be >= 0");
  if (regimes.empty()) throw ValidationError("synth: at least one regime required");
  double total = 0.0;
  for (const auto& r : regimes) {
    if (!(r.fraction >= 0.0)) throw ValidationError("synth: regime fraction must be >= 0");
    if (!(r.temperature > 0.0)) throw ValidationError("synth: temperature must be > 0");
    const std::size_t lo = r.min_len ? r.min_len : min_len;
    const std::size_t hi = r.max_len ? r.max_len : max_len;
    if (lo < 2 || hi < lo) throw ValidationError("synth: need 2 <= min_len <= max_len");
    total += r.fraction;
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw ValidationError("synth: regime fractions sum to " + std::to_string(total) +
                          ", expected 1");
  }
}

double chain_entropy_rate(const BigramModel& chain) {
  const TransitionTable table(chain);
  const std::size_t v = chain.vocab_size();
  std::vector<double> pi(v, 1.0 / double(v));
  std::vector<double> next(v);
  for (int it = 0; it < 10000; ++it) {
    std::fill(next.begin(), next.end(), 0.0);
    for (std::size_t u = 0; u < v; ++u) {
      for (std::size_t w = 0; w < v; ++w) next[w] += pi[u] * table.prob(u, w);
    }
    double delta = 0.0;
    for (std::size_t u = 0; u < v; ++u) delta += std::abs(next[u] - pi[u]);
    pi.swap(next);
    if (delta < 1e-14) break;
  }
  double rate = 0.0;
  for (std::size_t u = 0; u < v; ++u) {
    double h = 0.0;
    for (std::size_t w = 0; w < v; ++w) {
      const double p = table.prob(u, w);
      if (p > 0.0) h -= p * std::log(p);
    }
    rate += pi[u] * h;
  }
  return rate;
}

SynthData generate(const SynthSpec& spec) {
  spec.validate();
  return draw(spec, build_structure(spec), spec.n, kSampleStream, "s");
}

SynthData generate_heldout(const SynthSpec& spec, std::size_t count, std::uint64_t stream) {
  spec.validate();
  if (count < 1) throw ValidationError("held-out set must be non-empty");
  return draw(spec, build_structure(spec), count, ~kSampleStream ^ (stream * 0x2545f4914f6cdd1dULL),
              "h");
}

void write_synth(const SynthData& data, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  save_features(data.features, dir / "features.sffm");
  save_metadata(data.meta, dir / "meta.jsonl");
  save_token_samples(data.samples, dir / "tokens.jsonl");
  std::vector<Json> lines;
  lines.reserve(data.truth.size());
  for (std::size_t i = 0; i < data.truth.size(); ++i) {
    lines.push_back({{"id", data.meta[i].id},
                     {"regime", data.truth[i].regime},
                     {"cluster", data.truth[i].cluster},
                     {"difficulty_rank", data.truth[i].difficulty_rank}});
  }
  write_json_lines(dir / "truth.jsonl", lines);
}

std::vector<SynthTruth> load_truth(const std::filesystem::path& path,
                                   std::span<const InstructionMeta> meta) {
  std::unordered_map<std::string, std::size_t> position;
  for (std::size_t i = 0; i < meta.size(); ++i) position.emplace(meta[i].id, i);
  std::vector<SynthTruth> out(meta.size());
  std::vector<bool> seen(meta.size(), false);
  for_each_json_line(path, [&](const Json& obj, std::size_t line) {
    const auto id = require_string(obj, "id", line);
    auto it = position.find(id);
    if (it == position.end()) throw ValidationError("truth file: unknown id \"" + id + "\"");
    if (seen[it->second]) throw ValidationError("truth file: duplicate id \"" + id + "\"");
    seen[it->second] = true;
    out[it->second] = {static_cast<std::size_t>(require_int(obj, "regime", line)),
                       static_cast<std::size_t>(require_int(obj, "cluster", line)),
                       static_cast<std::size_t>(require_int(obj, "difficulty_rank", line))};
  });
  for (std::size_t i = 0; i < meta.size(); ++i) {
    if (!seen[i]) throw ValidationError("truth file: missing id \"" + meta[i].id + "\"");
  }
  return out;
}

SynthSpec load_synth_spec(const std::filesystem::path& path, SynthSpec base) {
  toml::table tbl;
  try {
    tbl = toml::parse_file(path.string());
  } catch (const toml::parse_error& e) {
    throw ParseError(path.string() + ": " + std::string(e.description()));
  }
  auto read_size = [&](const toml::table& t, const char* key, std::size_t& dst) {
    if (!t.contains(key)) return;
    auto v = t[key].value<std::int64_t>();
    if (!v || *v < 0) {
      throw ParseError(path.string() + ": " + key + " must be a nonnegative integer");
    }
    dst = static_cast<std::size_t>(*v);
  };
  auto read_double = [&](const toml::table& t, const char* key, double& dst) {
    if (!t.contains(key)) return;
    auto v = t[key].value<double>();
    if (!v) throw ParseError(path.string() + ": " + key + " must be a number");
    dst = *v;
  };
  read_size(tbl, "n", base.n);
  read_size(tbl, "vocab_size", base.vocab_size);
  read_size(tbl, "min_len", base.min_len);
  read_size(tbl, "max_len", base.max_len);
  read_size(tbl, "clusters_per_regime", base.clusters_per_regime);
  read_size(tbl, "feature_dim", base.feature_dim);
  read_double(tbl, "feature_noise", base.feature_noise);
  if (tbl.contains("seed")) {
    auto v = tbl["seed"].value<std::int64_t>();
    if (!v) throw ParseError(path.string() + ": seed must be an integer");
    base.seed = static_cast<std::uint64_t>(*v);
  }
  if (auto* arr = tbl["regimes"].as_array()) {
    base.regimes.clear();
    for (const auto& node : *arr) {
      const auto* t = node.as_table();
      if (!t) throw ParseError(path.string() + ": regimes must be an array of tables");
      RegimeSpec r;
      read_double(*t, "fraction", r.fraction);
      read_double(*t, "temperature", r.temperature);
      read_size(*t, "min_len", r.min_len);
      read_size(*t, "max_len", r.max_len);
      base.regimes.push_back(r);
    }
  }
  base.validate();
  return base;
}

}  // namespace scorefilter
