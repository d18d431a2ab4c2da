#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <limits>

#include "fskv/checkpoint.hpp"
#include "fskv/error.hpp"

using namespace fskv;

namespace {

ErrorKind kind_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an fskv::Error");
  return ErrorKind::kIo;
}

Model small_model(std::uint64_t seed) {
  ModelConfig mc;
  mc.encoder = {8, 1, 2, 97};
  mc.variational.roi_latent = 4;
  return init_model(mc, seed);
}

}  // namespace

TEST_CASE("checkpoint round trip is bit exact") {
  Model m = small_model(1);
  // Values that lose information under any text encoding.
  m.params[0].value(0, 0) = std::nextafter(1.0, 2.0);
  m.params[0].value(0, 1) = -0.0;
  m.params[0].value(0, 2) = std::numeric_limits<double>::denorm_min();
  const auto bytes = serialize_checkpoint(make_checkpoint(m, {{"step", 7}}));
  CHECK(bytes.compare(0, 8, "FSKVCKPT") == 0);
  const auto back = deserialize_checkpoint(bytes);
  CHECK(back.version == kCheckpointVersion);
  CHECK(back.metadata["step"] == 7);
  CHECK(back.metadata["seed"] == 1);
  const Model restored = model_from_checkpoint(back);
  CHECK(restored.config == m.config);
  for (std::size_t i = 0; i < m.params.size(); ++i) {
    const auto& a = m.params[i].value;
    const auto& b = restored.params[i].value;
    REQUIRE(a.size() == b.size());
    CHECK(std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<std::size_t>(a.size())) == 0);
  }
  CHECK(std::signbit(restored.params[0].value(0, 1)));
  CHECK(serialize_checkpoint(make_checkpoint(restored, {{"step", 7}})) == bytes);
}

TEST_CASE("files round trip") {
  const auto path = (std::filesystem::temp_directory_path() / "fskv_test_model.ckpt").string();
  const Model m = small_model(2);
  save_checkpoint(m, path);
  CHECK(load_model(path).params == m.params);
  std::filesystem::remove(path);
  CHECK(kind_of([&] { load_checkpoint(path); }) == ErrorKind::kIo);
}

TEST_CASE("corrupt and foreign checkpoints are rejected") {
  const auto bytes = serialize_checkpoint(make_checkpoint(small_model(3)));
  for (std::size_t cut : {std::size_t{0}, std::size_t{5}, std::size_t{12}, std::size_t{30},
                          bytes.size() / 2, bytes.size() - 1}) {
    CHECK(kind_of([&] { deserialize_checkpoint(bytes.substr(0, cut)); }) ==
          ErrorKind::kCheckpointCorrupt);
  }
  CHECK(kind_of([&] { deserialize_checkpoint(bytes + "x"); }) == ErrorKind::kCheckpointCorrupt);

  auto magic = bytes;
  magic[0] = 'G';
  CHECK(kind_of([&] { deserialize_checkpoint(magic); }) == ErrorKind::kCheckpointCorrupt);

  auto version = bytes;
  version[8] = 2;
  CHECK(kind_of([&] { deserialize_checkpoint(version); }) == ErrorKind::kCheckpointVersion);

  // A well-formed container whose arrays do not fit the declared model.
  auto c = deserialize_checkpoint(bytes);
  c.arrays = ParameterSet{};
  c.arrays.add("enc.tok_emb", 2, 2);
  CHECK(kind_of([&] { model_from_checkpoint(c); }) == ErrorKind::kCheckpointCorrupt);
  auto wrong_config = deserialize_checkpoint(bytes);
  wrong_config.metadata["model"]["encoder"]["dim"] = 16;
  CHECK(kind_of([&] { model_from_checkpoint(wrong_config); }) == ErrorKind::kCheckpointCorrupt);
}
