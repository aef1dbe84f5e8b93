#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "scorefilter/analysis.hpp"
#include "scorefilter/baselines.hpp"
#include "scorefilter/error.hpp"
#include "scorefilter/feature_store.hpp"
#include "scorefilter/score_net.hpp"
#include "scorefilter/selector.hpp"
#include "scorefilter/stage1.hpp"
#include "scorefilter/synth.hpp"
#include "scorefilter/toy_model.hpp"

namespace py = pybind11;
namespace sf = scorefilter;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

sf::FeatureMatrix to_matrix(const Array& a) {
  if (a.ndim() != 2) throw sf::ValidationError("feature array must be 2-dimensional");
  const auto rows = static_cast<std::size_t>(a.shape(0));
  const auto cols = static_cast<std::size_t>(a.shape(1));
  return {rows, cols, std::vector<double>(a.data(), a.data() + rows * cols)};
}

Array to_array(const sf::FeatureMatrix& m) {
  Array out({m.rows(), m.cols()});
  std::copy(m.values().begin(), m.values().end(), out.mutable_data());
  return out;
}

Array to_array(std::span<const double> v) {
  return Array(static_cast<py::ssize_t>(v.size()), v.data());
}

Array square(std::span<const double> v, std::size_t n) {
  Array out({n, n});
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

sf::BigramModel model_from(const Array& logits) {
  if (logits.ndim() != 2 || logits.shape(0) != logits.shape(1)) {
    throw sf::ValidationError("logits must be a square matrix");
  }
  const auto v = static_cast<std::size_t>(logits.shape(0));
  return {v, std::vector<double>(logits.data(), logits.data() + v * v)};
}

py::list picks_to_list(const sf::SelectionResult& r) {
  py::list out;
  for (const auto& p : r.picks) {
    out.append(py::dict(py::arg("index") = p.index, py::arg("difficulty") = p.difficulty,
                        py::arg("rank") = p.rank));
  }
  return out;
}

}  // namespace

PYBIND11_MODULE(_scorefilter, m) {
  m.doc() = "Learned-difficulty data selection with a diversity penalty.";

  auto base = py::register_exception<sf::Error>(m, "Error");
  py::register_exception<sf::ValidationError>(m, "ValidationError", base.ptr());
  py::register_exception<sf::FormatError>(m, "FormatError", base.ptr());
  py::register_exception<sf::CorruptionError>(m, "CorruptionError", base.ptr());
  py::register_exception<sf::StorageError>(m, "StorageError", base.ptr());
  py::register_exception<sf::ParseError>(m, "ParseError", base.ptr());
  py::register_exception<sf::NumericError>(m, "NumericError", base.ptr());
  py::register_exception<sf::UndefinedError>(m, "UndefinedError", base.ptr());

  py::class_<sf::TokenSample>(m, "TokenSample")
      .def(py::init<std::string, std::vector<std::uint32_t>>(), py::arg("id"),
           py::arg("tokens"))
      .def_readwrite("id", &sf::TokenSample::id)
      .def_readwrite("tokens", &sf::TokenSample::tokens)
      .def("__repr__", [](const sf::TokenSample& s) {
        return "TokenSample(id='" + s.id + "', len=" + std::to_string(s.tokens.size()) + ")";
      });

  py::class_<sf::InstructionMeta>(m, "InstructionMeta")
      .def(py::init<std::string, std::int64_t, std::vector<std::string>>(), py::arg("id"),
           py::arg("text_len") = 0, py::arg("tags") = std::vector<std::string>{})
      .def_readwrite("id", &sf::InstructionMeta::id)
      .def_readwrite("text_len", &sf::InstructionMeta::text_len)
      .def_readwrite("tags", &sf::InstructionMeta::tags);

  // Feature store
  m.def("load_features",
        [](const std::filesystem::path& p) { return to_array(sf::load_features(p)); },
        py::arg("path"));
  m.def("save_features",
        [](const Array& a, const std::filesystem::path& p) { sf::save_features(to_matrix(a), p); },
        py::arg("features"), py::arg("path"));
  m.def("load_metadata", &sf::load_metadata, py::arg("path"));
  m.def("save_metadata",
        [](const std::vector<sf::InstructionMeta>& r, const std::filesystem::path& p) {
          sf::save_metadata(r, p);
        },
        py::arg("records"), py::arg("path"));
  m.def("load_token_samples", &sf::load_token_samples, py::arg("path"));

  // Batch weighting and score net
  m.def("normalize_batch",
        [](const std::vector<double>& w) { return to_array(sf::normalize_batch(w)); },
        py::arg("raw_weights"));
  m.def("weighted_loss",
        [](const std::vector<double>& w, const std::vector<double>& l) {
          return sf::weighted_loss(w, l);
        },
        py::arg("raw_weights"), py::arg("losses"));
  m.def("grad_wrt_raw_weights",
        [](const std::vector<double>& w, const std::vector<double>& l) {
          return to_array(sf::grad_wrt_raw_weights(w, l));
        },
        py::arg("raw_weights"), py::arg("losses"));

  py::class_<sf::ScoreNetParams>(m, "ScoreNetParams")
      .def(py::init<std::vector<double>, double>(), py::arg("weights"), py::arg("bias") = 0.0)
      .def_static("zeros", &sf::ScoreNetParams::zeros, py::arg("dim"))
      .def_readwrite("weights", &sf::ScoreNetParams::weights)
      .def_readwrite("bias", &sf::ScoreNetParams::bias)
      .def_property_readonly("dim", &sf::ScoreNetParams::dim);
  m.def("score_rows",
        [](const sf::ScoreNetParams& p, const Array& f) {
          return to_array(sf::score_rows(p, to_matrix(f)));
        },
        py::arg("params"), py::arg("features"));
  m.def("grad_wrt_params",
        [](const sf::ScoreNetParams& p, const Array& f, const std::vector<double>& losses,
           double l2) {
          auto g = sf::grad_wrt_params(p, to_matrix(f), losses, l2);
          return py::make_tuple(to_array(g.weights), g.bias);
        },
        py::arg("params"), py::arg("features"), py::arg("losses"), py::arg("l2") = 0.0);

  // Toy model
  m.def("sample_loss",
        [](const Array& logits, const sf::TokenSample& s) {
          return sf::sample_loss(model_from(logits), s);
        },
        py::arg("logits"), py::arg("sample"));
  m.def("sample_grad",
        [](const Array& logits, const sf::TokenSample& s) {
          auto g = sf::sample_grad(model_from(logits), s);
          return square(g.values, g.vocab_size);
        },
        py::arg("logits"), py::arg("sample"));

  // Stage-1 training
  py::class_<sf::TrainConfig>(m, "TrainConfig")
      .def(py::init<>())
      .def_readwrite("batch_size", &sf::TrainConfig::batch_size)
      .def_readwrite("epochs", &sf::TrainConfig::epochs)
      .def_readwrite("lr_model", &sf::TrainConfig::lr_model)
      .def_readwrite("lr_scorenet", &sf::TrainConfig::lr_scorenet)
      .def_readwrite("seed", &sf::TrainConfig::seed)
      .def_readwrite("l2_scorenet", &sf::TrainConfig::l2_scorenet)
      .def_readwrite("grad_accum_steps", &sf::TrainConfig::grad_accum_steps)
      .def_readwrite("vocab_size", &sf::TrainConfig::vocab_size);
  m.def("train_stage1",
        [](const std::vector<sf::TokenSample>& samples, const Array& features,
           const sf::TrainConfig& config) {
          auto r = sf::train_stage1(samples, to_matrix(features), config);
          py::list steps;
          for (const auto& s : r.log.steps) {
            steps.append(py::dict(py::arg("epoch") = s.epoch, py::arg("step") = s.step,
                                  py::arg("weighted_loss") = s.weighted_loss,
                                  py::arg("mean_loss") = s.mean_loss));
          }
          return py::dict(py::arg("score_net") = r.score_net,
                          py::arg("logits") = square(r.model.logits(), r.model.vocab_size()),
                          py::arg("log") = steps);
        },
        py::arg("samples"), py::arg("features"), py::arg("config") = sf::TrainConfig{});

  // Selection
  m.def("compute_difficulty",
        [](const sf::ScoreNetParams& p, const Array& f) {
          return to_array(sf::compute_difficulty(p, to_matrix(f)).difficulty);
        },
        py::arg("params"), py::arg("features"));
  m.def("cosine_sim",
        [](const std::vector<double>& a, const std::vector<double>& b) {
          return sf::cosine_sim(a, b);
        },
        py::arg("a"), py::arg("b"));
  m.def("build_knn",
        [](const Array& f, std::size_t k) {
          auto idx = sf::build_knn(to_matrix(f), k);
          std::vector<std::vector<std::pair<std::size_t, double>>> out;
          for (const auto& list : idx.lists) {
            auto& row = out.emplace_back();
            for (const auto& nb : list) row.emplace_back(nb.index, nb.similarity);
          }
          return out;
        },
        py::arg("features"), py::arg("k"));
  m.def("select",
        [](std::vector<double> difficulty, const Array& features, std::size_t m,
           std::size_t k, double gamma, bool diversity) {
          const bool penalize = diversity && gamma != 0.0;
          auto index = penalize ? sf::build_knn(to_matrix(features), k) : sf::NeighborIndex{};
          return picks_to_list(sf::select(sf::DifficultyTable::from_scores(std::move(difficulty)),
                                          index, m, gamma, penalize));
        },
        py::arg("difficulty"), py::arg("features"), py::arg("m"), py::arg("k") = 10,
        py::arg("gamma") = 1.0, py::arg("diversity") = true);

  // Baselines
  m.def("el2n_scores",
        [](const Array& logits, const std::vector<sf::TokenSample>& s) {
          return to_array(sf::el2n_scores(model_from(logits), s).scores);
        },
        py::arg("logits"), py::arg("samples"));
  m.def("grand_scores",
        [](const Array& logits, const std::vector<sf::TokenSample>& s) {
          return to_array(sf::grand_scores(model_from(logits), s).scores);
        },
        py::arg("logits"), py::arg("samples"));
  m.def("prototypicality_scores",
        [](const Array& f, std::size_t clusters, std::uint64_t seed, std::size_t max_iters) {
          auto feats = to_matrix(f);
          if (clusters == 0) clusters = sf::default_cluster_count(feats.rows());
          return to_array(sf::prototypicality_scores(feats, clusters, seed, max_iters).scores);
        },
        py::arg("features"), py::arg("clusters") = 0, py::arg("seed") = 0,
        py::arg("max_iters") = 100);
  m.def("random_select", &sf::random_select, py::arg("n"), py::arg("m"), py::arg("seed") = 0);

  // Synthetic data and analysis
  m.def("generate",
        [](std::size_t n, std::size_t vocab_size, std::size_t clusters_per_regime,
           std::size_t feature_dim, double feature_noise, std::uint64_t seed) {
          sf::SynthSpec spec;
          spec.n = n;
          spec.vocab_size = vocab_size;
          spec.clusters_per_regime = clusters_per_regime;
          spec.feature_dim = feature_dim;
          spec.feature_noise = feature_noise;
          spec.seed = seed;
          auto data = sf::generate(spec);
          std::vector<std::size_t> rank;
          std::vector<std::size_t> cluster;
          for (const auto& t : data.truth) {
            rank.push_back(t.difficulty_rank);
            cluster.push_back(t.cluster);
          }
          return py::dict(py::arg("samples") = data.samples,
                          py::arg("features") = to_array(data.features),
                          py::arg("meta") = data.meta, py::arg("difficulty_rank") = rank,
                          py::arg("cluster") = cluster);
        },
        py::arg("n") = 2000, py::arg("vocab_size") = 16, py::arg("clusters_per_regime") = 1,
        py::arg("feature_dim") = 8, py::arg("feature_noise") = 0.1, py::arg("seed") = 0);
  m.def("pearson",
        [](const std::vector<double>& x, const std::vector<double>& y) {
          return sf::pearson(x, y);
        },
        py::arg("x"), py::arg("y"));
  m.def("spearman",
        [](const std::vector<double>& x, const std::vector<double>& y) {
          return sf::spearman(x, y);
        },
        py::arg("x"), py::arg("y"));
}
