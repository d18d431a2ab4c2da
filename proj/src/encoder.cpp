#include "fskv/encoder.hpp"

#include <cctype>
#include <cmath>

#include "fskv/error.hpp"

namespace fskv {

using nlohmann::json;

void validate_encoder_config(const EncoderConfig& c) {
  if (c.dim <= 0 || c.layers < 0 || c.heads <= 0 || c.vocab <= 0) {
    throw Error(ErrorKind::kConfig, "encoder dims must be positive");
  }
  if (c.dim % c.heads != 0) {
    throw Error(ErrorKind::kConfig, "encoder dim " + std::to_string(c.dim) +
                                        " is not divisible by " + std::to_string(c.heads) +
                                        " heads");
  }
}

json encoder_config_to_json(const EncoderConfig& c) {
  return {{"dim", c.dim}, {"layers", c.layers}, {"heads", c.heads}, {"vocab", c.vocab}};
}

EncoderConfig encoder_config_from_json(const json& j) {
  EncoderConfig c;
  c.dim = j.value("dim", c.dim);
  c.layers = j.value("layers", c.layers);
  c.heads = j.value("heads", c.heads);
  c.vocab = j.value("vocab", c.vocab);
  validate_encoder_config(c);
  return c;
}

void fill_uniform(Matrix& m, double scale, Rng& rng) {
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-scale, scale);
}

void add_linear_params(ParameterSet& ps, const std::string& name, int in, int out, Rng& rng) {
  fill_uniform(ps.add(name + ".w", in, out).value, 1.0 / std::sqrt(in), rng);
  ps.add(name + ".b", 1, out);
}

namespace {

void add_norm(ParameterSet& ps, const std::string& name, int dim) {
  ps.add(name + ".g", 1, dim).value.setOnes();
  ps.add(name + ".b", 1, dim);
}

std::string layer_prefix(int l) { return "enc.L" + std::to_string(l) + "."; }

}  // namespace

void add_encoder_params(ParameterSet& ps, const EncoderConfig& c, Rng& rng) {
  validate_encoder_config(c);
  fill_uniform(ps.add("enc.tok_emb", c.vocab, c.dim).value, 1.0, rng);
  fill_uniform(ps.add("enc.unk_emb", 1, c.dim).value, 1.0, rng);
  add_linear_params(ps, "enc.layout", kLayoutInputs, c.dim, rng);
  add_linear_params(ps, "enc.boxfeat", kBoxFeatures, c.dim, rng);
  for (int l = 0; l < c.layers; ++l) {
    const auto p = layer_prefix(l);
    add_norm(ps, p + "ln1", c.dim);
    add_linear_params(ps, p + "attn.q", c.dim, c.dim, rng);
    add_linear_params(ps, p + "attn.k", c.dim, c.dim, rng);
    add_linear_params(ps, p + "attn.v", c.dim, c.dim, rng);
    add_linear_params(ps, p + "attn.o", c.dim, c.dim, rng);
    add_norm(ps, p + "ln2", c.dim);
    add_linear_params(ps, p + "ffn.1", c.dim, 4 * c.dim, rng);
    add_linear_params(ps, p + "ffn.2", 4 * c.dim, c.dim, rng);
  }
  add_norm(ps, "enc.ln_f", c.dim);
}

ParameterSet init_encoder_params(const EncoderConfig& config, std::uint64_t seed) {
  ParameterSet ps;
  Rng rng(derive_seed(seed, Stream::kInit));
  add_encoder_params(ps, config, rng);
  return ps;
}

std::uint64_t text_hash(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    if (std::isdigit(ch)) ch = '0';
    h ^= static_cast<std::uint64_t>(std::tolower(ch));
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::size_t token_vocab_id(std::string_view text, int vocab) {
  return static_cast<std::size_t>(text_hash(text) % static_cast<std::uint64_t>(vocab));
}

std::array<double, kBoxFeatures> box_features(const BoundingBox& box, std::string_view text) {
  constexpr double eps = 1e-6;
  const double w = box.width() / double(kPageScale);
  const double h = box.height() / double(kPageScale);
  std::size_t digits = 0;
  for (unsigned char ch : text) digits += std::isdigit(ch) ? 1 : 0;
  return {w,
          h,
          w * h,
          (w + eps) / (w + h + 2 * eps),
          0.5 * (box.x1 + box.x2) / kPageScale,
          0.5 * (box.y1 + box.y2) / kPageScale,
          std::log1p(static_cast<double>(text.size())),
          text.empty() ? 0.0 : static_cast<double>(digits) / static_cast<double>(text.size())};
}

EncoderInput prepare_inputs(const std::vector<Token>& tokens, int vocab) {
  EncoderInput in;
  in.geometry.resize(static_cast<Eigen::Index>(tokens.size()), kGeometryInputs);
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const auto& t = tokens[i];
    const auto r = static_cast<Eigen::Index>(i);
    in.vocab_ids.push_back(token_vocab_id(t.text, vocab));
    const double s = kPageScale;
    in.geometry(r, 0) = t.box.x1 / s;
    in.geometry(r, 1) = t.box.y1 / s;
    in.geometry(r, 2) = t.box.x2 / s;
    in.geometry(r, 3) = t.box.y2 / s;
    in.geometry(r, 4) = t.box.width() / s;
    in.geometry(r, 5) = t.box.height() / s;
    const auto f = box_features(t.box, t.text);
    for (int k = 0; k < kBoxFeatures; ++k) in.geometry(r, kLayoutInputs + k) = f[k];
  }
  return in;
}

EncoderInput prepare_inputs(const Document& doc, int vocab) {
  return prepare_inputs(doc.tokens, vocab);
}

Matrix position_table(std::size_t n, int dim) {
  Matrix pe(static_cast<Eigen::Index>(n), dim);
  for (Eigen::Index pos = 0; pos < pe.rows(); ++pos) {
    for (int i = 0; i < dim; i += 2) {
      const double angle = static_cast<double>(pos) / std::pow(10000.0, double(i) / dim);
      pe(pos, i) = std::sin(angle);
      if (i + 1 < dim) pe(pos, i + 1) = std::cos(angle);
    }
  }
  return pe;
}

Var encode(Bindings& b, const EncoderConfig& c, const EncoderInput& input,
           std::optional<Var> window) {
  Tape& t = b.tape();
  const auto n = static_cast<Eigen::Index>(input.size());
  if (input.geometry.rows() != n || input.geometry.cols() != kGeometryInputs) {
    throw Error(ErrorKind::kInput, "encoder input has " + std::to_string(n) +
                                       " tokens but geometry of " +
                                       std::to_string(input.geometry.rows()) + " rows");
  }
  if (!input.geometry.allFinite()) {
    throw Error(ErrorKind::kInput, "non-finite encoder geometry input");
  }
  for (auto id : input.vocab_ids) {
    if (id >= static_cast<std::size_t>(c.vocab)) {
      throw Error(ErrorKind::kInput, "vocabulary id out of range");
    }
  }

  Var text = op::gather_rows(t, b("enc.tok_emb"), input.vocab_ids);
  Var geom = t.constant(input.geometry);
  std::size_t rows = input.size();
  if (window) {
    const Matrix& w = t.value(*window);
    if (w.rows() != 1 || w.cols() != 4 || !w.allFinite() || w(0, 0) > w(0, 2) ||
        w(0, 1) > w(0, 3)) {
      throw Error(ErrorKind::kValidation, "invalid ROI window");
    }
    const std::array<Var, 2> tp{text, b("enc.unk_emb")};
    text = op::concat_rows(t, tp);
    const std::array<Var, 2> gp{geom, op::window_inputs(t, *window)};
    geom = op::concat_rows(t, gp);
    ++rows;
  }

  Var layout = op::linear(t, op::slice_cols(t, geom, 0, kLayoutInputs), b("enc.layout.w"),
                          b("enc.layout.b"));
  Var boxf = op::linear(t, op::slice_cols(t, geom, kLayoutInputs, kBoxFeatures),
                        b("enc.boxfeat.w"), b("enc.boxfeat.b"));
  Var h = op::add(t, op::add(t, text, layout), boxf);
  h = op::add(t, h, t.constant(position_table(rows, c.dim)));

  const int hd = c.head_dim();
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(hd));
  for (int l = 0; l < c.layers; ++l) {
    const auto p = layer_prefix(l);
    Var a = op::layer_norm(t, h, b(p + "ln1.g"), b(p + "ln1.b"));
    Var q = op::linear(t, a, b(p + "attn.q.w"), b(p + "attn.q.b"));
    Var k = op::linear(t, a, b(p + "attn.k.w"), b(p + "attn.k.b"));
    Var v = op::linear(t, a, b(p + "attn.v.w"), b(p + "attn.v.b"));
    std::vector<Var> heads;
    for (int hh = 0; hh < c.heads; ++hh) {
      Var qh = op::slice_cols(t, q, hh * hd, hd);
      Var kh = op::slice_cols(t, k, hh * hd, hd);
      Var vh = op::slice_cols(t, v, hh * hd, hd);
      Var att = op::softmax_rows(t, op::scale(t, op::matmul_nt(t, qh, kh), inv_sqrt));
      heads.push_back(op::matmul(t, att, vh));
    }
    Var mixed = heads.size() == 1 ? heads[0] : op::concat_cols(t, heads);
    h = op::add(t, h, op::linear(t, mixed, b(p + "attn.o.w"), b(p + "attn.o.b")));
    Var f = op::layer_norm(t, h, b(p + "ln2.g"), b(p + "ln2.b"));
    f = op::gelu(t, op::linear(t, f, b(p + "ffn.1.w"), b(p + "ffn.1.b")));
    h = op::add(t, h, op::linear(t, f, b(p + "ffn.2.w"), b(p + "ffn.2.b")));
  }
  return op::layer_norm(t, h, b("enc.ln_f.g"), b("enc.ln_f.b"));
}

Matrix encode(const ParameterSet& params, const EncoderConfig& config,
              const EncoderInput& input) {
  Tape t(false);
  Bindings b(t, params);
  return t.value(encode(b, config, input));
}

Matrix encode_with_roi(const ParameterSet& params, const EncoderConfig& config,
                       const EncoderInput& input, const BoundingBox& window) {
  if (!window.valid()) throw Error(ErrorKind::kValidation, "invalid ROI window");
  Tape t(false);
  Bindings b(t, params);
  Matrix w(1, 4);
  w << window.x1 / double(kPageScale), window.y1 / double(kPageScale),
      window.x2 / double(kPageScale), window.y2 / double(kPageScale);
  return t.value(encode(b, config, input, t.constant(w)));
}

}  // namespace fskv
