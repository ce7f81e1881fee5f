// Copyright 2026 The dccrn Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <doctest.h>

#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include "dccrn/checkpoint.hpp"
#include "dccrn/gradcheck.hpp"

using namespace dccrn;

namespace {

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("dccrn_test_" + name);
}

std::vector<char> slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

void spit(const std::filesystem::path& p, const std::vector<char>& bytes) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

template <typename T>
void scramble(Model<T>& m, std::uint64_t seed) {
  for (auto& e : m.params().entries())
    e.var.mutable_value() = random_tensor<T>(e.var.shape(), ++seed);
  for (auto& [name, buf] : m.params().buffers()) {
    buf.running_mean = random_tensor<T>(buf.running_mean.shape(), ++seed);
    buf.running_var = random_tensor<T>(buf.running_var.shape(), ++seed, 0.5, 2.0);
  }
}

template <typename T>
bool bit_equal(const Tensor<T>& a, const Tensor<T>& b) {
  return a.shape() == b.shape() && std::memcmp(a.ptr(), b.ptr(), a.size() * sizeof(T)) == 0;
}

}  // namespace

TEST_CASE("container round trip") {
  Checkpoint ck;
  ck.header["a"] = "1";
  ck.header["text"] = "x = y";
  ck.blobs.push_back(Blob::from_tensor("f", random_tensor<float>({3, 4}, 1)));
  ck.blobs.push_back(Blob::from_tensor("d", random_tensor<double>({2, 1, 5}, 2)));
  ck.blobs.push_back(Blob::from_tensor("scalar", Tensor<double>({1}, 0.25)));
  const auto path = temp_path("roundtrip.ckpt");
  write_checkpoint(path, ck);
  auto back = read_checkpoint(path);
  CHECK(back.header == ck.header);
  REQUIRE(back.blobs.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(back.blobs[i].name == ck.blobs[i].name);
    CHECK(back.blobs[i].dtype == ck.blobs[i].dtype);
    CHECK(back.blobs[i].shape == ck.blobs[i].shape);
    CHECK(back.blobs[i].bytes == ck.blobs[i].bytes);
  }
  CHECK(back.find("missing") == nullptr);
  CHECK_THROWS_AS(back.at("missing"), DataError);

  // f32 blobs widen exactly.
  auto wide = back.find("f")->to_tensor<double>();
  auto orig = random_tensor<float>({3, 4}, 1);
  for (std::size_t i = 0; i < orig.size(); ++i) CHECK(wide[i] == static_cast<double>(orig[i]));
  std::filesystem::remove(path);
}

TEST_CASE("exact double text") {
  for (double v : {0.0, -0.0, 1.0 / 3.0, 1e-300, -123456.789, 5e-324,
                   std::numeric_limits<double>::max()}) {
    const double back = parse_double(exact_double(v));
    CHECK(std::memcmp(&back, &v, sizeof v) == 0);
  }
  CHECK_THROWS_AS(parse_double(""), DataError);
  CHECK_THROWS_AS(parse_double("1.5x"), DataError);
}

TEST_CASE("corrupt files are rejected") {
  Checkpoint ck;
  ck.header["k"] = "v";
  ck.blobs.push_back(Blob::from_tensor("w", random_tensor<float>({8}, 3)));
  const auto path = temp_path("corrupt.ckpt");
  write_checkpoint(path, ck);
  const auto good = slurp(path);

  auto bad = good;
  bad[0] = 'X';
  spit(path, bad);
  CHECK_THROWS_AS(read_checkpoint(path), DataError);

  bad = good;
  bad[8] = 7;  // version
  spit(path, bad);
  CHECK_THROWS_AS(read_checkpoint(path), DataError);

  for (std::size_t cut : {std::size_t{4}, std::size_t{14}, good.size() - 1}) {
    spit(path, std::vector<char>(good.begin(), good.begin() + static_cast<std::ptrdiff_t>(cut)));
    CHECK_THROWS_AS(read_checkpoint(path), DataError);
  }
  CHECK_THROWS_AS(read_checkpoint(temp_path("does_not_exist.ckpt")), DataError);

  Checkpoint nl;
  nl.header["k"] = "two\nlines";
  CHECK_THROWS_AS(write_checkpoint(path, nl), DataError);

  Blob wrong = Blob::from_tensor("w", random_tensor<float>({8}, 3));
  wrong.shape = {9};
  CHECK_THROWS_AS(wrong.to_tensor<float>(), DataError);
  std::filesystem::remove(path);
}

TEST_CASE("model export and import are bit-exact") {
  Model<float> m(ModelConfig::toy());
  scramble(m, 10);
  Checkpoint ck;
  export_model(m, ck);
  const auto path = temp_path("model.ckpt");
  write_checkpoint(path, ck);
  auto m2 = import_model<float>(read_checkpoint(path));
  CHECK(m2->config() == m.config());
  for (const auto& e : m.params().entries())
    CHECK_MESSAGE(bit_equal(e.var.value(), m2->params().get(e.name).value()), e.name);
  for (const auto& [name, buf] : m.params().buffers()) {
    CHECK(bit_equal(buf.running_mean, m2->params().buffers().at(name).running_mean));
    CHECK(bit_equal(buf.running_var, m2->params().buffers().at(name).running_var));
  }

  // Identical weights give identical output.
  dsp::ComplexSpectrogram<float> s;
  s.re = random_tensor<float>({6, 257}, 20);
  s.im = random_tensor<float>({6, 257}, 21);
  ad::NoGradGuard ng;
  auto a = m.forward(as_batch(s), false).enhanced;
  auto b = m2->forward(as_batch(s), false).enhanced;
  CHECK(bit_equal(a.re.value(), b.re.value()));
  CHECK(bit_equal(a.im.value(), b.im.value()));
  std::filesystem::remove(path);
}

TEST_CASE("model import errors name the problem") {
  Model<double> m(ModelConfig::tiny());
  Checkpoint ck;
  export_model(m, ck);

  auto missing = ck;
  missing.blobs.erase(missing.blobs.begin());
  try {
    import_model<double>(missing);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find(ck.blobs.front().name) != std::string::npos);
  }

  auto reshaped = ck;
  reshaped.blobs.back().shape.push_back(1);
  CHECK_THROWS_AS(import_model<double>(reshaped), DataError);

  auto cfg = ck;
  cfg.header["model.rnn_units"] = "5";
  Model<double> other(ModelConfig::tiny());
  CHECK_THROWS_AS(load_model_state(cfg, other), DataError);

  auto junk = ck;
  junk.header["model.bands"] = "many";
  CHECK_THROWS_AS(import_model<double>(junk), DataError);
}
