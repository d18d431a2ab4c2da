// Command-line front end: corpus preparation, episodic training, evaluation,
// gradient checking and representation analyses.

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "fskv/analysis.hpp"
#include "fskv/checkpoint.hpp"
#include "fskv/corpus.hpp"
#include "fskv/error.hpp"
#include "fskv/evaluation.hpp"
#include "fskv/fewshot.hpp"
#include "fskv/sampler.hpp"

using namespace fskv;
using nlohmann::json;

namespace {

constexpr int kCheckFailed = 1;
constexpr int kUsage = 2;

json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kIo, "cannot read '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kParse, "'" + path + "': " + e.what());
  }
}

void write_json(const std::string& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::kIo, "cannot write '" + path + "'");
  out << j.dump(2) << "\n";
  if (!out) throw Error(ErrorKind::kIo, "failed writing '" + path + "'");
}

void maybe_write(const std::string& path, const json& j) {
  if (!path.empty()) write_json(path, j);
}

struct ShapeFlags {
  int n = 4;
  int k = 1;
  int k_prime = 1;
  int episodes = 500;
  std::uint64_t seed = 0;

  void add(CLI::App* app, int default_episodes) {
    episodes = default_episodes;
    app->add_option("--n", n, "Entity classes per episode (2 per relation type)")
        ->capture_default_str();
    app->add_option("--k", k, "Support copies per relation type")->capture_default_str();
    app->add_option("--k-prime", k_prime, "Query copies per relation type")
        ->capture_default_str();
    app->add_option("--episodes", episodes, "Episodes to sample")->capture_default_str();
    app->add_option("--seed", seed, "Master seed")->capture_default_str();
  }
  EpisodeShape shape() const { return {n, k, k_prime}; }
};

void print_stats(const CorpusStats& s) {
  std::printf("documents        %zu\n", s.doc_count);
  std::printf("boxes            %zu\n", s.box_count);
  std::printf("entity types     %zu\n", s.entity_type_count);
  std::printf("relation types   %zu\n", s.relation_type_count);
}

json stats_json(const CorpusStats& s) {
  return {{"documents", s.doc_count},
          {"boxes", s.box_count},
          {"entity_types", s.entity_type_count},
          {"relation_types", s.relation_type_count}};
}

void print_report(const EvalReport& r) {
  std::printf("%d-way %d-shot, %d episodes, seed %llu\n", r.shape.n, r.shape.k, r.episodes,
              static_cast<unsigned long long>(r.seed));
  std::printf("span micro-F1    %.4f +- %.4f\n", r.mean_f1, r.stdev_f1);
  std::printf("token micro-F1   %.4f\n", r.mean_token_f1);
  std::printf("token accuracy   %.4f\n", r.mean_token_accuracy);
  std::printf("\n%-32s %6s %6s %6s %7s %7s %7s\n", "class", "tp", "fp", "fn", "prec", "recall",
              "f1");
  for (const auto& c : r.per_class) {
    std::printf("%-32s %6zu %6zu %6zu %7.4f %7.4f %7.4f\n", c.name.c_str(),
                c.score.true_positives, c.score.false_positives, c.score.false_negatives,
                c.score.precision, c.score.recall, c.score.f1);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Few-shot key-value extraction from visually-rich documents"};
  app.require_subcommand(1);
  int status = 0;

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a synthetic corpus");
  std::string synth_config, synth_out;
  std::optional<std::uint64_t> synth_seed;
  std::size_t synth_types = 10;
  int synth_docs = 300;
  synth->add_option("--config", synth_config, "Synthetic config JSON (defaults when absent)");
  synth->add_option("--out", synth_out, "Output corpus JSON")->required();
  synth->add_option("--seed", synth_seed, "Overrides the config seed");
  synth->add_option("--types", synth_types, "Relation types when no config is given")
      ->capture_default_str();
  synth->add_option("--docs", synth_docs, "Documents when no config is given")
      ->capture_default_str();
  synth->callback([&] {
    SyntheticConfig cfg = synth_config.empty()
                              ? default_synthetic_config(synth_types, synth_docs, 0)
                              : synthetic_config_from_json(read_json(synth_config));
    if (synth_seed) cfg.seed = *synth_seed;
    const Corpus c = generate_synthetic(cfg);
    save_corpus(c, synth_out);
    print_stats(corpus_stats(c));
  });

  // convert
  auto* convert = app.add_subcommand("convert", "Convert annotations to the canonical format");
  std::string convert_in, convert_format = "cord-like", convert_out;
  convert->add_option("--in", convert_in, "Input JSON")->required();
  convert->add_option("--format", convert_format, "canonical | cord-like")
      ->capture_default_str();
  convert->add_option("--out", convert_out, "Output corpus JSON")->required();
  convert->callback([&] {
    const Corpus c = load_corpus(convert_in, parse_corpus_format(convert_format));
    save_corpus(c, convert_out);
    print_stats(corpus_stats(c));
  });

  // stats
  auto* stats = app.add_subcommand("stats", "Corpus statistics");
  std::string stats_corpus, stats_out;
  stats->add_option("--corpus", stats_corpus, "Corpus JSON")->required();
  stats->add_option("--out", stats_out, "JSON output");
  stats->callback([&] {
    const auto s = corpus_stats(load_corpus(stats_corpus));
    print_stats(s);
    maybe_write(stats_out, stats_json(s));
  });

  // split
  auto* split = app.add_subcommand("split", "Split relation types into train and test");
  std::string split_corpus, split_mode = "inter", split_train, split_test;
  double split_fraction = 0.6;
  split->add_option("--corpus", split_corpus, "Corpus JSON")->required();
  split->add_option("--mode", split_mode, "inter | intra")->capture_default_str();
  split->add_option("--out-train", split_train, "Training corpus JSON")->required();
  split->add_option("--out-test", split_test, "Test corpus JSON")->required();
  split->add_option("--train-fraction", split_fraction, "Share of types used for training")
      ->capture_default_str();
  split->callback([&] {
    const auto [train, test] =
        split_inter_intra(load_corpus(split_corpus), parse_split_mode(split_mode), split_fraction);
    save_corpus(train, split_train);
    save_corpus(test, split_test);
    std::printf("train: %zu copies of", train.documents.size());
    for (const auto& t : train.schema.entity_types) std::printf(" %s", t.c_str());
    std::printf("\ntest:  %zu copies of", test.documents.size());
    for (const auto& t : test.schema.entity_types) std::printf(" %s", t.c_str());
    std::printf("\n");
  });

  // sample
  auto* sample = app.add_subcommand("sample", "Sample episodes and check their invariants");
  std::string sample_corpus, sample_out;
  ShapeFlags sample_shape;
  sample->add_option("--corpus", sample_corpus, "Corpus JSON")->required();
  sample_shape.add(sample, 10);
  sample->add_option("--out", sample_out, "Episodes JSON");
  sample->callback([&] {
    const auto extended = extend_corpus(load_corpus(sample_corpus));
    Rng rng(derive_seed(sample_shape.seed, Stream::kSampling));
    json episodes = json::array();
    std::size_t violations = 0;
    for (int e = 0; e < sample_shape.episodes; ++e) {
      const Episode ep = sample_episode(extended, sample_shape.shape(), rng);
      const auto v = episode_violations(ep);
      for (const auto& msg : v) std::fprintf(stderr, "episode %d: %s\n", e, msg.c_str());
      violations += v.size();
      std::printf("episode %d:", e);
      for (const auto& t : ep.relation_types()) std::printf(" %s", t.c_str());
      std::printf("\n");
      episodes.push_back(episode_to_json(ep));
    }
    std::printf("%d episodes, %zu violations\n", sample_shape.episodes, violations);
    maybe_write(sample_out, episodes);
    if (violations > 0) status = kCheckFailed;
  });

  // train
  auto* train_cmd = app.add_subcommand("train", "Episodic training");
  std::string train_corpus, train_config, train_checkpoint, train_out;
  std::optional<std::uint64_t> train_seed;
  std::optional<int> train_iterations;
  train_cmd->add_option("--corpus", train_corpus, "Training corpus JSON")->required();
  train_cmd->add_option("--config", train_config, "Training config JSON (defaults when absent)");
  train_cmd->add_option("--out-checkpoint", train_checkpoint, "Checkpoint path")->required();
  train_cmd->add_option("--seed", train_seed, "Overrides the config seed");
  train_cmd->add_option("--iterations", train_iterations, "Overrides the config iterations");
  train_cmd->add_option("--out", train_out, "Loss history JSON");
  train_cmd->callback([&] {
    TrainConfig cfg = train_config.empty() ? TrainConfig{} : train_config_from_json(read_json(train_config));
    if (train_seed) cfg.seed = *train_seed;
    if (train_iterations) cfg.iterations = *train_iterations;
    validate_train_config(cfg);
    const Corpus corpus = load_corpus(train_corpus);
    const auto result = train(corpus, cfg, [](int step, const LossBreakdown& l) {
      std::printf("step %6d  total %.5f  rec %.5f  kl1 %.4f  re %.5f  kl2 %.4f  cls %.5f\n", step,
                  l.total, l.l_rec, l.l_kl1, l.l_re, l.l_kl2, l.l_cls);
      std::fflush(stdout);
    });
    save_checkpoint(result.model, train_checkpoint, {{"train", train_config_to_json(cfg)}});
    if (!train_out.empty()) {
      json history = json::array();
      for (const auto& l : result.history) history.push_back(loss_to_json(l));
      write_json(train_out, {{"config", train_config_to_json(cfg)}, {"history", history}});
    }
  });

  // eval
  auto* eval = app.add_subcommand("eval", "Episode evaluation with span micro-F1");
  std::string eval_checkpoint, eval_corpus, eval_out, eval_decoder = "prototype";
  ShapeFlags eval_shape;
  eval->add_option("--checkpoint", eval_checkpoint, "Checkpoint path")->required();
  eval->add_option("--corpus", eval_corpus, "Test corpus JSON")->required();
  eval_shape.add(eval, 500);
  eval->add_option("--decoder", eval_decoder, "prototype | nnshot")->capture_default_str();
  eval->add_option("--out", eval_out, "Report JSON");
  eval->callback([&] {
    Decoder decoder;
    if (eval_decoder == "prototype") {
      decoder = Decoder::kPrototype;
    } else if (eval_decoder == "nnshot") {
      decoder = Decoder::kNearestNeighbor;
    } else {
      throw Error(ErrorKind::kConfig, "unknown decoder '" + eval_decoder + "'");
    }
    const Model model = load_model(eval_checkpoint);
    ModelPredictor predictor(model, decoder);
    const auto report = evaluate(predictor, load_corpus(eval_corpus), eval_shape.shape(),
                                 eval_shape.episodes, eval_shape.seed);
    print_report(report);
    maybe_write(eval_out, eval_report_to_json(report));
  });

  // gradcheck
  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference gradient check");
  std::string gc_config, gc_out;
  std::uint64_t gc_seed = 0;
  double gc_step = 1e-4, gc_tolerance = 1e-3;
  int gc_coordinates = 20;
  gradcheck->add_option("--config", gc_config, "Training config JSON (tiny model when absent)");
  gradcheck->add_option("--seed", gc_seed, "Seed for the model, episode and noise")
      ->capture_default_str();
  gradcheck->add_option("--step", gc_step, "Central-difference step")->capture_default_str();
  gradcheck->add_option("--tolerance", gc_tolerance, "Maximum relative error")
      ->capture_default_str();
  gradcheck->add_option("--coordinates", gc_coordinates, "Entries checked per array")
      ->capture_default_str();
  gradcheck->add_option("--out", gc_out, "Report JSON");
  gradcheck->callback([&] {
    TrainConfig cfg;
    if (gc_config.empty()) {
      cfg.model.encoder = {8, 1, 2, 97};
      cfg.model.variational.roi_latent = 4;
    } else {
      cfg = train_config_from_json(read_json(gc_config));
    }
    const Corpus corpus = generate_synthetic(default_synthetic_config(4, 24, gc_seed));
    Rng rng(derive_seed(gc_seed, Stream::kSampling));
    const Episode ep = sample_episode(extend_corpus(corpus), cfg.shape, rng);
    const Model model = init_model(cfg.model, gc_seed);
    const auto report =
        grad_check(model, ep, cfg, gc_step, gc_tolerance, gc_seed, gc_coordinates);
    json entries = json::array();
    for (const auto& e : report.entries) {
      std::printf("%-24s %4d coords  max rel err %.3e  %s\n", e.name.c_str(), e.coordinates,
                  e.max_relative_error, e.passed ? "ok" : "FAIL");
      entries.push_back({{"name", e.name},
                         {"coordinates", e.coordinates},
                         {"max_relative_error", e.max_relative_error},
                         {"passed", e.passed}});
    }
    std::printf("%s\n", report.passed() ? "gradient check passed" : "gradient check FAILED");
    maybe_write(gc_out, {{"step", gc_step},
                         {"tolerance", gc_tolerance},
                         {"passed", report.passed()},
                         {"entries", entries}});
    if (!report.passed()) status = kCheckFailed;
  });

  // analyze
  auto* analyze = app.add_subcommand("analyze", "Representation analyses");
  std::string an_checkpoint, an_corpus, an_kind, an_out;
  int an_samples = 100, an_repetitions = 200;
  std::uint64_t an_seed = 0;
  analyze->add_option("--checkpoint", an_checkpoint, "Checkpoint path")->required();
  analyze->add_option("--corpus", an_corpus, "Corpus JSON")->required();
  analyze->add_option("--kind", an_kind, "similarity | distance-curve")
      ->required()
      ->check(CLI::IsMember({"similarity", "distance-curve"}));
  analyze->add_option("--samples", an_samples, "Mentions per type (similarity)")
      ->capture_default_str();
  analyze->add_option("--repetitions", an_repetitions, "Draws per K (distance-curve)")
      ->capture_default_str();
  analyze->add_option("--seed", an_seed, "Seed")->capture_default_str();
  analyze->add_option("--out", an_out, "Report JSON");
  analyze->callback([&] {
    const Model model = load_model(an_checkpoint);
    const Corpus corpus = load_corpus(an_corpus);
    if (an_kind == "similarity") {
      const auto r = similarity_heatmap(model, corpus, an_samples, an_seed);
      std::printf("%-20s", "");
      for (std::size_t j = 0; j < r.types.size(); ++j) std::printf(" %8zu", j);
      std::printf("\n");
      for (std::size_t i = 0; i < r.types.size(); ++i) {
        std::printf("%2zu %-17.17s", i, r.types[i].c_str());
        for (std::size_t j = 0; j < r.types.size(); ++j) {
          std::printf(" %8.3f", r.similarity(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
        }
        std::printf("\n");
      }
      maybe_write(an_out, similarity_report_to_json(r));
    } else {
      const std::vector<int> shots{1, 2, 3, 4, 5};
      const auto r = prototype_distance_curve(model, corpus, shots, an_repetitions, an_seed);
      std::printf("%4s %12s %10s\n", "K", "distance", "relative");
      for (std::size_t i = 0; i < r.shots.size(); ++i) {
        std::printf("%4d %12.6f %10.4f\n", r.shots[i], r.raw[i], r.relative[i]);
      }
      maybe_write(an_out, distance_curve_to_json(r));
    }
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  } catch (const Error& e) {
    std::fprintf(stderr, "fskv: %s: %s\n", std::string(error_kind_name(e.kind())).c_str(),
                 e.what());
    return error_exit_code(e.kind());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "fskv: %s\n", e.what());
    return kCheckFailed;
  }
  return status;
}
