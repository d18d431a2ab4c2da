#include "fskv/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "fskv/error.hpp"

namespace fskv {

using nlohmann::json;

SpanScore score_counts(std::size_t tp, std::size_t fp, std::size_t fn) {
  SpanScore s{tp, fp, fn, 0, 0, 0};
  if (tp + fp + fn == 0) {
    s.precision = s.recall = s.f1 = 1.0;
    return s;
  }
  s.precision = tp + fp > 0 ? double(tp) / double(tp + fp) : 0.0;
  s.recall = tp + fn > 0 ? double(tp) / double(tp + fn) : 0.0;
  s.f1 = s.precision + s.recall > 0
             ? 2.0 * s.precision * s.recall / (s.precision + s.recall)
             : 0.0;
  return s;
}

SpanScore span_f1(std::span<const EntitySpan> predicted, std::span<const EntitySpan> gold) {
  const std::multiset<EntitySpan> g(gold.begin(), gold.end());
  std::multiset<EntitySpan> remaining = g;
  std::size_t tp = 0;
  for (const auto& p : predicted) {
    auto it = remaining.find(p);
    if (it != remaining.end()) {
      ++tp;
      remaining.erase(it);
    }
  }
  return score_counts(tp, predicted.size() - tp, gold.size() - tp);
}

std::vector<std::vector<EntitySpan>> ModelPredictor::predict(const Episode& episode) {
  const auto inf = infer_episode(model_, episode, decoder_);
  std::vector<std::vector<EntitySpan>> out;
  for (const auto& labels : inf.query_labels) {
    out.push_back(spans_from_classes(labels, inf.classes));
  }
  return out;
}

std::vector<std::vector<EntitySpan>> OraclePredictor::predict(const Episode& episode) {
  std::vector<std::vector<EntitySpan>> out;
  for (const auto& g : episode.groups) {
    for (const auto& q : g.query) out.push_back(q.document.all_spans());
  }
  return out;
}

namespace {

std::string class_name(const EntitySpan& s) {
  return s.entity_type + "/" + std::string(role_name(s.role));
}

// Per-token class names implied by spans; "O" elsewhere.
std::vector<std::string> token_names(std::size_t n, const std::vector<EntitySpan>& spans) {
  std::vector<std::string> out(n, "O");
  for (const auto& s : spans) {
    for (std::size_t i = s.start; i < s.end && i < n; ++i) out[i] = class_name(s);
  }
  return out;
}

}  // namespace

EvalReport evaluate(EpisodePredictor& predictor, const Corpus& corpus,
                    const EpisodeShape& shape, int episodes, std::uint64_t seed) {
  if (episodes < 1) throw Error(ErrorKind::kConfig, "evaluation needs at least one episode");
  const auto extended = extend_corpus(corpus);
  Rng sampling(derive_seed(seed, Stream::kSampling));
  EvalReport report;
  report.shape = shape;
  report.episodes = episodes;
  report.seed = seed;
  std::map<std::string, std::array<std::size_t, 3>> per_class;
  double accuracy_sum = 0, token_f1_sum = 0;
  for (int e = 0; e < episodes; ++e) {
    const Episode ep = sample_episode(extended, shape, sampling);
    const auto predicted = predictor.predict(ep);
    std::size_t tp = 0, fp = 0, fn = 0, correct = 0, tokens = 0, q = 0;
    std::size_t token_tp = 0, token_fp = 0, token_fn = 0;
    for (const auto& g : ep.groups) {
      for (const auto& copy : g.query) {
        if (q >= predicted.size()) {
          throw Error(ErrorKind::kEpisode, "predictor returned too few query predictions");
        }
        const auto& pred = predicted[q++];
        const auto gold = copy.document.all_spans();
        const auto s = span_f1(pred, gold);
        tp += s.true_positives;
        fp += s.false_positives;
        fn += s.false_negatives;
        const auto n = copy.document.tokens.size();
        const auto pt = token_names(n, pred);
        const auto gt = token_names(n, gold);
        for (std::size_t i = 0; i < n; ++i) {
          const bool same = pt[i] == gt[i];
          correct += same ? 1 : 0;
          token_tp += same && gt[i] != "O" ? 1 : 0;
          token_fp += !same && pt[i] != "O" ? 1 : 0;
          token_fn += !same && gt[i] != "O" ? 1 : 0;
        }
        tokens += n;

        std::multiset<EntitySpan> remaining(gold.begin(), gold.end());
        for (const auto& p : pred) {
          auto it = remaining.find(p);
          if (it != remaining.end()) {
            ++per_class[class_name(p)][0];
            remaining.erase(it);
          } else {
            ++per_class[class_name(p)][1];
          }
        }
        for (const auto& miss : remaining) ++per_class[class_name(miss)][2];
      }
    }
    report.episode_f1.push_back(score_counts(tp, fp, fn).f1);
    accuracy_sum += tokens > 0 ? double(correct) / double(tokens) : 1.0;
    token_f1_sum += score_counts(token_tp, token_fp, token_fn).f1;
  }
  double sum = 0;
  for (double f : report.episode_f1) sum += f;
  report.mean_f1 = sum / episodes;
  if (episodes > 1) {
    double ss = 0;
    for (double f : report.episode_f1) ss += (f - report.mean_f1) * (f - report.mean_f1);
    report.stdev_f1 = std::sqrt(ss / (episodes - 1));
  }
  report.mean_token_accuracy = accuracy_sum / episodes;
  report.mean_token_f1 = token_f1_sum / episodes;
  for (const auto& [name, c] : per_class) {
    report.per_class.push_back({name, score_counts(c[0], c[1], c[2])});
  }
  return report;
}

json eval_report_to_json(const EvalReport& r) {
  json classes = json::array();
  for (const auto& c : r.per_class) {
    classes.push_back({{"class", c.name},
                       {"tp", c.score.true_positives},
                       {"fp", c.score.false_positives},
                       {"fn", c.score.false_negatives},
                       {"precision", c.score.precision},
                       {"recall", c.score.recall},
                       {"f1", c.score.f1}});
  }
  return {{"n", r.shape.n},
          {"k", r.shape.k},
          {"k_prime", r.shape.k_prime},
          {"episodes", r.episodes},
          {"seed", r.seed},
          {"mean_f1", r.mean_f1},
          {"stdev_f1", r.stdev_f1},
          {"mean_token_accuracy", r.mean_token_accuracy},
          {"mean_token_f1", r.mean_token_f1},
          {"episode_f1", r.episode_f1},
          {"per_class", std::move(classes)}};
}

}  // namespace fskv
