#include "fskv/analysis.hpp"

#include <algorithm>
#include <map>

#include "fskv/error.hpp"

namespace fskv {

using nlohmann::json;

Matrix similarity_matrix(const Matrix& means) {
  Matrix s = means * means.transpose();
  // Exact symmetry regardless of summation order.
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    for (Eigen::Index j = i + 1; j < s.cols(); ++j) s(j, i) = s(i, j);
  }
  return s;
}

SimilarityReport similarity_heatmap(const Model& model, const Corpus& corpus,
                                    int samples_per_type, std::uint64_t seed) {
  if (samples_per_type < 1) throw Error(ErrorKind::kConfig, "samples per type must be >= 1");
  struct Mention {
    std::size_t doc;
    EntitySpan span;
  };
  std::map<std::string, std::vector<Mention>> mentions;
  for (std::size_t d = 0; d < corpus.documents.size(); ++d) {
    for (const auto& rel : corpus.documents[d].relations) {
      for (const auto* spans : {&rel.key_spans, &rel.value_spans}) {
        for (const auto& s : *spans) mentions[rel.relation_type].push_back({d, s});
      }
    }
  }
  SimilarityReport out;
  out.types = corpus.schema.entity_types;
  if (out.types.empty()) {
    for (const auto& [t, _] : mentions) out.types.push_back(t);
  }
  Rng rng(derive_seed(seed, Stream::kAnalysis));
  std::map<std::size_t, Matrix> features;
  auto doc_features = [&](std::size_t d) -> const Matrix& {
    auto it = features.find(d);
    if (it == features.end()) {
      const auto input = prepare_inputs(corpus.documents[d], model.config.encoder.vocab);
      it = features.emplace(d, encode(model.params, model.config.encoder, input)).first;
    }
    return it->second;
  };
  Matrix means(static_cast<Eigen::Index>(out.types.size()), model.config.encoder.dim);
  for (std::size_t t = 0; t < out.types.size(); ++t) {
    auto& list = mentions[out.types[t]];
    if (list.empty()) {
      throw Error(ErrorKind::kValidation,
                  "relation type '" + out.types[t] + "' has no mentions in the corpus");
    }
    rng.shuffle(list.begin(), list.end());
    const std::size_t take = std::min(list.size(), static_cast<std::size_t>(samples_per_type));
    RowVector sum = RowVector::Zero(model.config.encoder.dim);
    for (std::size_t i = 0; i < take; ++i) {
      const auto& f = doc_features(list[i].doc);
      const auto& s = list[i].span;
      sum += f.middleRows(static_cast<Eigen::Index>(s.start),
                          static_cast<Eigen::Index>(s.end - s.start))
                 .colwise()
                 .mean();
    }
    means.row(static_cast<Eigen::Index>(t)) = sum / static_cast<double>(take);
    out.samples.push_back(static_cast<int>(take));
  }
  out.similarity = similarity_matrix(means);
  return out;
}

DistanceCurveReport prototype_distance_curve(const std::vector<std::vector<Matrix>>& copies,
                                             std::span<const int> shots, int repetitions,
                                             std::uint64_t seed) {
  if (repetitions < 1) throw Error(ErrorKind::kConfig, "repetitions must be >= 1");
  const auto five = std::find(shots.begin(), shots.end(), 5);
  if (five == shots.end()) {
    throw Error(ErrorKind::kConfig, "the shot list must include K = 5 for normalisation");
  }
  if (copies.empty()) throw Error(ErrorKind::kSampling, "no classes to analyse");
  DistanceCurveReport out;
  out.shots.assign(shots.begin(), shots.end());
  out.repetitions = repetitions;
  out.raw.assign(shots.size(), 0.0);
  Rng rng(derive_seed(seed, Stream::kAnalysis));
  for (std::size_t c = 0; c < copies.size(); ++c) {
    const auto& cls = copies[c];
    Eigen::Index dim = cls.empty() ? 0 : cls.front().cols();
    RowVector total = RowVector::Zero(dim);
    double count = 0;
    std::vector<RowVector> sums;
    std::vector<double> counts;
    for (const auto& m : cls) {
      sums.push_back(m.colwise().sum());
      counts.push_back(static_cast<double>(m.rows()));
      total += sums.back();
      count += counts.back();
    }
    if (count == 0) throw Error(ErrorKind::kSampling, "class without tokens");
    const RowVector centroid = total / count;
    std::vector<std::size_t> order(cls.size());
    for (std::size_t s = 0; s < shots.size(); ++s) {
      const int k = shots[s];
      if (k < 1 || static_cast<std::size_t>(k) > cls.size()) {
        throw Error(ErrorKind::kSampling, "K = " + std::to_string(k) + " exceeds the " +
                                              std::to_string(cls.size()) +
                                              " instances of class " + std::to_string(c));
      }
      double acc = 0;
      for (int r = 0; r < repetitions; ++r) {
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        // Partial Fisher-Yates: the first k entries are a uniform k-subset.
        for (int i = 0; i < k; ++i) {
          const auto j = static_cast<std::size_t>(i) +
                         rng.below(order.size() - static_cast<std::size_t>(i));
          std::swap(order[static_cast<std::size_t>(i)], order[j]);
        }
        RowVector sum = RowVector::Zero(dim);
        double n = 0;
        for (int i = 0; i < k; ++i) {
          sum += sums[order[static_cast<std::size_t>(i)]];
          n += counts[order[static_cast<std::size_t>(i)]];
        }
        acc += (sum / n - centroid).norm();
      }
      out.raw[s] += acc / repetitions;
    }
  }
  for (auto& v : out.raw) v /= static_cast<double>(copies.size());
  const double ref = out.raw[static_cast<std::size_t>(five - shots.begin())];
  for (double v : out.raw) out.relative.push_back(ref > 0 ? v / ref : v);
  return out;
}

DistanceCurveReport prototype_distance_curve(const Model& model, const Corpus& corpus,
                                             std::span<const int> shots, int repetitions,
                                             std::uint64_t seed) {
  std::map<std::pair<std::string, int>, std::vector<Matrix>> classes;
  for (const auto& copy : extend_corpus(corpus)) {
    const Matrix f = copy_features(model, copy);
    const auto* rel = copy.document.find_relation(copy.relation_type);
    for (Role role : {Role::kKey, Role::kValue}) {
      const auto& spans = role == Role::kKey ? rel->key_spans : rel->value_spans;
      std::vector<Eigen::Index> rows;
      for (const auto& s : spans) {
        for (std::size_t i = s.start; i < s.end; ++i) rows.push_back(static_cast<Eigen::Index>(i));
      }
      if (rows.empty()) continue;
      Matrix m(static_cast<Eigen::Index>(rows.size()), f.cols());
      for (std::size_t i = 0; i < rows.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = f.row(rows[i]);
      classes[{copy.relation_type, static_cast<int>(role)}].push_back(std::move(m));
    }
  }
  std::vector<std::vector<Matrix>> copies;
  for (auto& [key, list] : classes) copies.push_back(std::move(list));
  return prototype_distance_curve(copies, shots, repetitions, seed);
}

json similarity_report_to_json(const SimilarityReport& r) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < r.similarity.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < r.similarity.cols(); ++j) row.push_back(r.similarity(i, j));
    rows.push_back(std::move(row));
  }
  return {{"kind", "similarity"}, {"types", r.types}, {"samples", r.samples},
          {"similarity", std::move(rows)}};
}

json distance_curve_to_json(const DistanceCurveReport& r) {
  return {{"kind", "distance-curve"}, {"shots", r.shots}, {"raw", r.raw},
          {"relative", r.relative}, {"repetitions", r.repetitions}};
}

}  // namespace fskv
