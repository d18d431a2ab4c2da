#include <doctest.h>

#include <cmath>
#include <set>
#include <vector>

#include "fskv/encoder.hpp"
#include "fskv/error.hpp"
#include "support.hpp"

using namespace fskv;
using namespace fskv::testing;

namespace {

using Rows = std::vector<std::vector<double>>;

double at(const ParameterSet& ps, const std::string& name, Eigen::Index r, Eigen::Index c) {
  return ps.at(name).value(r, c);
}

// out[i][j] = b[j] + sum_k x[i][k] w[k][j]
Rows dense(const ParameterSet& ps, const std::string& name, const Rows& x) {
  const auto& w = ps.at(name + ".w").value;
  Rows out(x.size(), std::vector<double>(static_cast<std::size_t>(w.cols())));
  for (std::size_t i = 0; i < x.size(); ++i) {
    for (Eigen::Index j = 0; j < w.cols(); ++j) {
      double s = at(ps, name + ".b", 0, j);
      for (Eigen::Index k = 0; k < w.rows(); ++k) s += x[i][static_cast<std::size_t>(k)] * w(k, j);
      out[i][static_cast<std::size_t>(j)] = s;
    }
  }
  return out;
}

Rows norm(const ParameterSet& ps, const std::string& name, const Rows& x) {
  Rows out = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double n = static_cast<double>(x[i].size());
    double mean = 0, var = 0;
    for (double v : x[i]) mean += v;
    mean /= n;
    for (double v : x[i]) var += (v - mean) * (v - mean);
    var /= n;
    for (std::size_t j = 0; j < x[i].size(); ++j) {
      const auto c = static_cast<Eigen::Index>(j);
      out[i][j] = (x[i][j] - mean) / std::sqrt(var + 1e-5) * at(ps, name + ".g", 0, c) +
                  at(ps, name + ".b", 0, c);
    }
  }
  return out;
}

// Independent loop-based forward pass of the encoder.
Rows oracle_encode(const ParameterSet& ps, const EncoderConfig& c,
                   const std::vector<Token>& tokens, const BoundingBox* window) {
  const std::size_t d = static_cast<std::size_t>(c.dim);
  Rows text, layout, feats;
  for (const auto& t : tokens) {
    std::uint64_t h = 14695981039346656037ULL;
    for (char ch : t.text) {
      char folded = (ch >= '0' && ch <= '9') ? '0' : ch;
      if (folded >= 'A' && folded <= 'Z') folded = static_cast<char>(folded - 'A' + 'a');
      h = (h ^ static_cast<unsigned char>(folded)) * 1099511628211ULL;
    }
    const auto id = static_cast<Eigen::Index>(h % static_cast<std::uint64_t>(c.vocab));
    std::vector<double> e(d);
    for (std::size_t j = 0; j < d; ++j) e[j] = at(ps, "enc.tok_emb", id, static_cast<Eigen::Index>(j));
    text.push_back(e);
    const double x1 = t.box.x1 / 1000.0, y1 = t.box.y1 / 1000.0;
    const double x2 = t.box.x2 / 1000.0, y2 = t.box.y2 / 1000.0;
    const double w = x2 - x1, hh = y2 - y1;
    layout.push_back({x1, y1, x2, y2, w, hh});
    int digits = 0;
    for (char ch : t.text) digits += (ch >= '0' && ch <= '9') ? 1 : 0;
    feats.push_back({w, hh, w * hh, (w + 1e-6) / (w + hh + 2e-6), (x1 + x2) / 2, (y1 + y2) / 2,
                     std::log(1.0 + static_cast<double>(t.text.size())),
                     static_cast<double>(digits) / static_cast<double>(t.text.size())});
  }
  if (window) {
    std::vector<double> e(d);
    for (std::size_t j = 0; j < d; ++j) e[j] = at(ps, "enc.unk_emb", 0, static_cast<Eigen::Index>(j));
    text.push_back(e);
    const double x1 = window->x1 / 1000.0, y1 = window->y1 / 1000.0;
    const double x2 = window->x2 / 1000.0, y2 = window->y2 / 1000.0;
    const double w = x2 - x1, hh = y2 - y1;
    layout.push_back({x1, y1, x2, y2, w, hh});
    feats.push_back({w, hh, w * hh, (w + 1e-6) / (w + hh + 2e-6), (x1 + x2) / 2, (y1 + y2) / 2, 0, 0});
  }
  const Rows lp = dense(ps, "enc.layout", layout);
  const Rows fp = dense(ps, "enc.boxfeat", feats);
  const std::size_t n = text.size();
  Rows h(n, std::vector<double>(d));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      const double freq = std::pow(10000.0, static_cast<double>(j - j % 2) / static_cast<double>(d));
      const double pos = j % 2 == 0 ? std::sin(static_cast<double>(i) / freq)
                                    : std::cos(static_cast<double>(i) / freq);
      h[i][j] = text[i][j] + lp[i][j] + fp[i][j] + pos;
    }
  }
  const std::size_t hd = d / static_cast<std::size_t>(c.heads);
  for (int l = 0; l < c.layers; ++l) {
    const std::string p = "enc.L" + std::to_string(l) + ".";
    const Rows a = norm(ps, p + "ln1", h);
    const Rows q = dense(ps, p + "attn.q", a), k = dense(ps, p + "attn.k", a),
               v = dense(ps, p + "attn.v", a);
    Rows mixed(n, std::vector<double>(d, 0.0));
    for (int head = 0; head < c.heads; ++head) {
      const std::size_t off = static_cast<std::size_t>(head) * hd;
      for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> s(n);
        double mx = -1e300;
        for (std::size_t j = 0; j < n; ++j) {
          double dot = 0;
          for (std::size_t m = 0; m < hd; ++m) dot += q[i][off + m] * k[j][off + m];
          s[j] = dot / std::sqrt(static_cast<double>(hd));
          mx = std::max(mx, s[j]);
        }
        double z = 0;
        for (auto& x : s) z += (x = std::exp(x - mx));
        for (std::size_t j = 0; j < n; ++j) {
          for (std::size_t m = 0; m < hd; ++m) mixed[i][off + m] += s[j] / z * v[j][off + m];
        }
      }
    }
    const Rows o = dense(ps, p + "attn.o", mixed);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < d; ++j) h[i][j] += o[i][j];
    }
    Rows f = dense(ps, p + "ffn.1", norm(ps, p + "ln2", h));
    for (auto& row : f) {
      for (auto& x : row) {
        x = 0.5 * x * (1 + std::tanh(std::sqrt(2 / M_PI) * (x + 0.044715 * x * x * x)));
      }
    }
    const Rows f2 = dense(ps, p + "ffn.2", f);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < d; ++j) h[i][j] += f2[i][j];
    }
  }
  return norm(ps, "enc.ln_f", h);
}

std::vector<Token> sample_tokens() {
  return {tok("Invoice", 100, 80, 180, 95), tok("No", 185, 80, 205, 95),
          tok("IN-40213", 220, 80, 300, 95), tok("Total", 100, 600, 160, 615),
          tok("$12.50", 170, 600, 240, 615)};
}

double max_abs_diff(const Matrix& m, const Rows& r) {
  double worst = 0;
  for (std::size_t i = 0; i < r.size(); ++i) {
    for (std::size_t j = 0; j < r[i].size(); ++j) {
      worst = std::max(worst, std::abs(m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) - r[i][j]));
    }
  }
  return worst;
}

}  // namespace

TEST_CASE("init is deterministic with the stated distributions") {
  const EncoderConfig c;
  const auto a = init_encoder_params(c, 7);
  CHECK(a == init_encoder_params(c, 7));
  CHECK_FALSE(a == init_encoder_params(c, 8));
  CHECK(c.head_dim() == 16);
  CHECK(a.at("enc.L0.ln1.g").value.isOnes());
  CHECK(a.at("enc.L1.ln2.b").value.isZero());
  const auto& w = a.at("enc.L0.ffn.2.w").value;
  CHECK(w.cwiseAbs().maxCoeff() <= 1.0 / std::sqrt(256.0));
  CHECK(std::abs(w.mean()) < 0.01);
  CHECK_THROWS_AS(validate_encoder_config({64, 2, 5, 100}), Error);
}

TEST_CASE("forward pass matches the scalar oracle") {
  const EncoderConfig c{16, 2, 4, 97};
  const auto ps = init_encoder_params(c, 3);
  const auto tokens = sample_tokens();
  const Matrix out = encode(ps, c, prepare_inputs(tokens, c.vocab));
  REQUIRE(out.rows() == 5);
  REQUIRE(out.cols() == 16);
  CHECK(max_abs_diff(out, oracle_encode(ps, c, tokens, nullptr)) <= 1e-10);

  const BoundingBox window{90, 70, 320, 100};
  const Matrix roi = encode_with_roi(ps, c, prepare_inputs(tokens, c.vocab), window);
  REQUIRE(roi.rows() == 6);
  CHECK(max_abs_diff(roi, oracle_encode(ps, c, tokens, &window)) <= 1e-10);
}

TEST_CASE("encoder output shape, position sensitivity and ROI sensitivity") {
  const EncoderConfig c;
  const auto ps = init_encoder_params(c, 1);
  auto tokens = sample_tokens();
  const auto in = prepare_inputs(tokens, c.vocab);
  const Matrix base = encode(ps, c, in);
  CHECK(base.rows() == 5);
  CHECK(base.cols() == 64);
  CHECK(base.allFinite());

  std::swap(tokens[0], tokens[3]);
  const Matrix swapped = encode(ps, c, prepare_inputs(tokens, c.vocab));
  // Rows follow the tokens; with 1D positions the moved token's features change.
  CHECK((swapped.row(3) - base.row(0)).norm() > 1e-6);

  const Matrix r1 = encode_with_roi(ps, c, in, {90, 70, 320, 100});
  const Matrix r2 = encode_with_roi(ps, c, in, {90, 590, 250, 620});
  CHECK(r1.rows() == 6);
  CHECK((r1 - r2).cwiseAbs().maxCoeff() > 1e-9);
  CHECK(encode_with_roi(ps, c, in, {90, 70, 320, 100}) == r1);
  CHECK_THROWS_AS(encode_with_roi(ps, c, in, {300, 70, 100, 100}), Error);
}

TEST_CASE("encoder input errors") {
  const EncoderConfig c{8, 1, 2, 31};
  const auto ps = init_encoder_params(c, 1);
  auto in = prepare_inputs(sample_tokens(), c.vocab);
  in.vocab_ids.pop_back();
  CHECK_THROWS_AS(encode(ps, c, in), Error);
  in = prepare_inputs(sample_tokens(), c.vocab);
  in.geometry(1, 2) = std::nan("");
  try {
    encode(ps, c, in);
    FAIL("expected an input error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kInput);
  }
}

TEST_CASE("outputs are finite for random inputs") {
  const EncoderConfig c{16, 2, 2, 101};
  const auto ps = init_encoder_params(c, 5);
  Rng rng(6);
  for (int trial = 0; trial < 50; ++trial) {
    const auto doc = random_document(rng, {"A"}, "r");
    CHECK(encode(ps, c, prepare_inputs(doc, c.vocab)).allFinite());
  }
}

TEST_CASE("vocabulary ids") {
  CHECK(token_vocab_id("Total", 8192) == token_vocab_id("total", 8192));
  CHECK(token_vocab_id("Total", 8192) == token_vocab_id("Total", 8192));
  CHECK(token_vocab_id("12.50", 8192) == token_vocab_id("98.01", 8192));
  CHECK(token_vocab_id("12.50", 8192) != token_vocab_id("125.0", 8192));
  // FNV-1a reference value for the empty string and for "a".
  CHECK(text_hash("") == 0xcbf29ce484222325ULL);
  CHECK(text_hash("a") == 0xaf63dc4c8601ec8cULL);
}

TEST_CASE("collision rate follows the birthday bound") {
  constexpr int vocab = 8192;
  constexpr int words = 10000;
  std::set<std::size_t> buckets;
  for (int i = 0; i < words; ++i) {
    // Distinct digit-free words: base-26 spellings of i.
    std::string w = "w";
    for (int v = i; v > 0 || w.size() == 1; v /= 26) w.push_back(static_cast<char>('a' + v % 26));
    buckets.insert(token_vocab_id(w, vocab));
  }
  const double observed = 1.0 - static_cast<double>(buckets.size()) / words;
  const double expected =
      1.0 - vocab * (1.0 - std::pow(1.0 - 1.0 / vocab, words)) / words;
  CHECK(observed >= expected / 2);
  CHECK(observed <= expected * 2);
}
