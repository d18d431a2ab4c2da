#pragma once

// Small multimodal self-attention encoder over document tokens.
//
// Per-token input = hashed text embedding + layout projection of the box
// + projection of eight box features + sinusoidal 1D position. The token
// sequence then passes through pre-norm attention blocks and a final
// layer norm. An optional extra token carries a region-of-interest window.

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "fskv/doc_model.hpp"
#include "fskv/rng.hpp"
#include "fskv/tape.hpp"

namespace fskv {

inline constexpr int kLayoutInputs = 6;
inline constexpr int kBoxFeatures = 8;
inline constexpr int kGeometryInputs = kLayoutInputs + kBoxFeatures;

struct EncoderConfig {
  int dim = 64;
  int layers = 2;
  int heads = 4;
  int vocab = 8192;

  int head_dim() const { return dim / heads; }
  friend bool operator==(const EncoderConfig&, const EncoderConfig&) = default;
};

// Throws Error(kConfig) on inconsistent dimensions.
void validate_encoder_config(const EncoderConfig& config);
nlohmann::json encoder_config_to_json(const EncoderConfig& config);
EncoderConfig encoder_config_from_json(const nlohmann::json& j);

// Adds the "enc." arrays to `params`, drawing initial values from `rng`.
void add_encoder_params(ParameterSet& params, const EncoderConfig& config, Rng& rng);
ParameterSet init_encoder_params(const EncoderConfig& config, std::uint64_t seed);

// Uniform(-scale, scale) fill.
void fill_uniform(Matrix& m, double scale, Rng& rng);
// `name`.w (in x out, Uniform(+-1/sqrt(in))) and `name`.b (1 x out, zeros).
void add_linear_params(ParameterSet& params, const std::string& name, int in, int out,
                       Rng& rng);

// FNV-1a 64-bit over the bytes of `text`, ASCII-lowercased and with every
// digit folded to 0 so numbers of one shape share a bucket.
std::uint64_t text_hash(std::string_view text);
std::size_t token_vocab_id(std::string_view text, int vocab);

// (width, height, area, aspect, center-x, center-y, log(1+chars), digit fraction);
// geometric entries use the 0-1 page scale and aspect = (w+e)/(w+h+2e), e=1e-6.
std::array<double, kBoxFeatures> box_features(const BoundingBox& box, std::string_view text);

struct EncoderInput {
  std::vector<std::size_t> vocab_ids;
  // n x 14: layout (x1, y1, x2, y2, w, h) / 1000, then box features.
  Matrix geometry;

  std::size_t size() const { return vocab_ids.size(); }
};

EncoderInput prepare_inputs(const std::vector<Token>& tokens, int vocab);
EncoderInput prepare_inputs(const Document& doc, int vocab);

// Sinusoidal position table, rows 0..n-1.
Matrix position_table(std::size_t n, int dim);

// n x d features on `bindings`' tape. With `window` (a 1 x 4 unit-square box on
// the tape) one token is appended and the result has n + 1 rows.
Var encode(Bindings& bindings, const EncoderConfig& config, const EncoderInput& input,
           std::optional<Var> window = {});

// Gradient-free conveniences.
Matrix encode(const ParameterSet& params, const EncoderConfig& config,
              const EncoderInput& input);
Matrix encode_with_roi(const ParameterSet& params, const EncoderConfig& config,
                       const EncoderInput& input, const BoundingBox& window);

}  // namespace fskv
