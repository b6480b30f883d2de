#include "support.hpp"
#include "tdca/io.hpp"

#include <gtest/gtest.h>

#include <bit>
#include <fstream>

using namespace tdca;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

TdcaNetwork sample_tdca(const Granularity& g, std::size_t credits) {
  TdcaConfig cfg;
  cfg.granularity = g;
  cfg.credit_scale = 0.3;
  cfg.rule = ExpansionRule::LocalError;
  TdcaNetwork t = make_tdca(21, credits, cfg);
  Vector beta = Vector::Random(static_cast<Eigen::Index>(t.net.parameter_count()));
  beta[0] = -0.0;
  beta[1] = 1e-310;  // subnormal survives
  t.set_parameters(beta);
  return t;
}

void expect_message(const std::function<void()>& f, const std::string& needle) {
  try {
    f();
    FAIL() << "expected an error mentioning '" << needle << "'";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find(needle), std::string::npos) << e.what();
  }
}

}  // namespace

TEST(MlpCheckpoint, RoundTripBitIdentical) {
  const auto dir = testkit::scratch_dir("mlp_rt");
  const Mlp m = init_mlp({{784, 100, Activation::Tanh}, {100, 10, Activation::Softmax}}, 3);
  save_mlp(dir / "m.ckpt", m);
  const Mlp back = load_mlp(dir / "m.ckpt");
  EXPECT_EQ(back.layers(), m.layers());
  EXPECT_EQ(back.flatten().values, m.flatten().values);
}

TEST(MlpCheckpoint, ByteLayout) {
  const auto dir = testkit::scratch_dir("mlp_bytes");
  Mlp m(std::vector<LayerSpec>{{1, 1, Activation::Identity}});
  m.weights(0)(0, 0) = 1.5;
  m.biases(0)[0] = -2.0;
  save_mlp(dir / "m.ckpt", m);
  const std::string text = "TDCA-MLP v1\n1:1:identity\n";
  const std::string bytes = slurp(dir / "m.ckpt");
  ASSERT_EQ(bytes.size(), text.size() + 16);
  EXPECT_EQ(bytes.substr(0, text.size()), text);
  std::uint64_t bits = 0;
  for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[text.size() + b])) << (8 * b);
  EXPECT_EQ(std::bit_cast<double>(bits), 1.5);
}

TEST(CreditCheckpoint, RoundTripEveryGranularity) {
  const auto dir = testkit::scratch_dir("tdca_rt");
  GroupSpec line;
  GroupSpec grid;
  grid.structure = NeighborStructure::grid(10, 10);
  grid.credits = 36;
  grid.sigma = 1.25;
  grid.include_outputs = true;
  const std::pair<Granularity, std::size_t> cases[] = {
      {Granularity::per_neuron(), 110}, {Granularity::per_parameter(), 7}, {Granularity::per_group(line), 20},
      {Granularity::per_group(grid), 46}};
  for (const auto& [g, credits] : cases) {
    const TdcaNetwork t = sample_tdca(g, credits);
    save_tdca(dir / "t.ckpt", t);
    const TdcaNetwork back = load_tdca(dir / "t.ckpt");
    EXPECT_EQ(back.parameters(), t.parameters());
    EXPECT_EQ(std::bit_cast<std::uint64_t>(back.parameters()[0]), std::bit_cast<std::uint64_t>(-0.0));
    EXPECT_EQ(back.credit_scale, 0.3);
    EXPECT_EQ(back.rule, ExpansionRule::LocalError);
    EXPECT_EQ(granularity_to_text(back.granularity), granularity_to_text(g));
    EXPECT_EQ(back.net.layers(), t.net.layers());
  }
}

TEST(CreditCheckpoint, MlpFileIsHeaderMismatch) {
  const auto dir = testkit::scratch_dir("tdca_hdr");
  save_mlp(dir / "m.ckpt", init_mlp({{2, 2, Activation::Softmax}}, 1));
  expect_message([&] { load_tdca(dir / "m.ckpt"); }, "header mismatch: expected 'TDCA-CREDITNET v1', found 'TDCA-MLP v1'");
  save_tdca(dir / "t.ckpt", sample_tdca(Granularity::per_neuron(), 110));
  EXPECT_THROW(load_mlp(dir / "t.ckpt"), FormatError);
}

TEST(CreditCheckpoint, TruncatedNamesExpectedBytes) {
  const auto dir = testkit::scratch_dir("tdca_trunc");
  const TdcaNetwork t = sample_tdca(Granularity::per_neuron(), 110);
  save_tdca(dir / "t.ckpt", t);
  fs::resize_file(dir / "t.ckpt", fs::file_size(dir / "t.ckpt") - 3);
  const std::size_t n = t.net.parameter_count();
  expect_message([&] { load_tdca(dir / "t.ckpt"); },
                 "truncated parameter block: expected " + std::to_string(8 * n) + " bytes");
}

TEST(CreditCheckpoint, MissingFileAndEmptyFile) {
  const auto dir = testkit::scratch_dir("tdca_missing");
  EXPECT_THROW(load_tdca(dir / "nope.ckpt"), Error);
  std::ofstream(dir / "empty.ckpt").close();
  expect_message([&] { load_tdca(dir / "empty.ckpt"); }, "header mismatch");
}

TEST(CreditCheckpoint, CompatibilityCheck) {
  const std::vector<LayerSpec> net{{784, 100, Activation::Tanh}, {100, 10, Activation::Softmax}};
  const TdcaNetwork t = sample_tdca(Granularity::per_neuron(), 110);
  EXPECT_NO_THROW(require_compatible(t, 21, net));
  EXPECT_THROW(require_compatible(t, 20, net), DimensionError);
  const std::vector<LayerSpec> wide{{784, 400, Activation::Tanh}, {400, 10, Activation::Softmax}};
  expect_message([&] { require_compatible(t, 21, wide); }, "needs 410");
}

TEST(GranularityText, RejectsGarbage) {
  EXPECT_THROW(granularity_from_text("cluster"), FormatError);
  EXPECT_THROW(granularity_from_text("group kind=ring n=3 credits=1 sigma=auto"), FormatError);
  EXPECT_THROW(granularity_from_text("group kind=line credits=1 sigma=auto"), FormatError);
  EXPECT_THROW(granularity_from_text(""), FormatError);
}
