#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "bcdnet/error.hpp"
#include "bcdnet/io.hpp"
#include "bcdnet/simulate.hpp"
#include "oracles.hpp"

#include <bit>
#include <cstring>
#include <filesystem>

using namespace bcdnet;

namespace {

RecoveryModel random_model(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> small(1, 3);
  std::uniform_real_distribution<double> u(0.0, 2.0);
  RecoveryModel m;
  m.kind = small(rng) == 1 ? ProblemKind::mri : ProblemKind::denoising;
  m.lambda = u(rng) * 100.0;
  const std::size_t ph = small(rng), pw = small(rng);
  const std::size_t k = std::min<std::size_t>(ph * pw, small(rng));
  const int n_layers = small(rng);
  for (int l = 0; l < n_layers; ++l) {
    LayerMapping layer{ph, pw, oracle::random_matrix(Eigen::Index(ph * pw), Eigen::Index(k), rng),
                       Eigen::VectorXd(Eigen::Index(k))};
    for (Eigen::Index j = 0; j < layer.filters.cols(); ++j) layer.filters.col(j) /= layer.filters.col(j).norm() * (1.0 + u(rng));
    for (auto& a : layer.thresholds) a = u(rng);
    m.layers.push_back(std::move(layer));
  }
  return m;
}

std::size_t format_offset(const std::function<void()>& f) {
  try {
    f();
  } catch (const FormatError& e) {
    return e.offset();
  }
  FAIL("expected a format error");
  return 0;
}

std::filesystem::path temp_dir() {
  auto p = std::filesystem::temp_directory_path() / "bcdnet_io_test";
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace

TEST_CASE("model round trip") {
  std::mt19937_64 rng(91);
  for (int i = 0; i < 50; ++i) {
    const RecoveryModel m = random_model(rng);
    const Bytes b = serialize_model(m);
    const RecoveryModel back = deserialize_model(b);
    CHECK(serialize_model(back) == b);
    REQUIRE(back.layers.size() == m.layers.size());
    for (std::size_t l = 0; l < m.layers.size(); ++l) {
      CHECK(back.layers[l].filters == m.layers[l].filters);
      CHECK(back.layers[l].thresholds == m.layers[l].thresholds);
    }
    CHECK(back.kind == m.kind);
    CHECK(back.lambda == m.lambda);
  }
}

TEST_CASE("model golden bytes") {
  RecoveryModel m;
  m.kind = ProblemKind::mri;
  m.lambda = 2.0;
  m.layers.push_back({1, 1, Eigen::MatrixXcd::Constant(1, 1, cplx(0.5, -0.25)), Eigen::VectorXd::Constant(1, 0.75)});
  const Bytes b = serialize_model(m);
  REQUIRE(b.size() == 57);
  const std::vector<std::uint8_t> header = {
      'B', 'C', 'D', 'N', 1, 0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0, 1,
      0, 0, 0, 0, 0, 0, 0, 0x40};  // lambda = 2.0
  CHECK(std::equal(header.begin(), header.end(), b.begin()));
  auto f64_at = [&](std::size_t at) {
    std::uint64_t bits = 0;
    for (int i = 7; i >= 0; --i) bits = (bits << 8) | b[at + std::size_t(i)];
    return std::bit_cast<double>(bits);
  };
  CHECK(f64_at(33) == 0.75);
  CHECK(f64_at(41) == 0.5);
  CHECK(f64_at(49) == -0.25);
}

TEST_CASE("model format errors") {
  RecoveryModel m;
  m.lambda = 1.0;
  m.layers.push_back({2, 2, init_dct_filters(2, 2, 3), Eigen::VectorXd::Zero(3)});
  const Bytes good = serialize_model(m);

  Bytes bad = good;
  bad[0] = 'X';
  CHECK(format_offset([&] { deserialize_model(bad); }) == 0);
  bad = good;
  bad[4] = 2;
  CHECK(format_offset([&] { deserialize_model(bad); }) == 4);
  bad = good;
  bad[24] = 7;
  CHECK(format_offset([&] { deserialize_model(bad); }) == 24);
  bad.assign(good.begin(), good.end() - 1);
  CHECK_THROWS_AS(deserialize_model(bad), FormatError);
  bad = good;
  bad.push_back(0);
  CHECK_THROWS_AS(deserialize_model(bad), FormatError);
  CHECK_THROWS_AS(deserialize_model(Bytes{}), FormatError);

  // a filter of norm 1.5 is rejected at its first byte
  RecoveryModel big = m;
  Bytes raw = serialize_model(big);
  const std::size_t filter0 = 33 + 3 * 8;
  double re = 0.0;
  std::memcpy(&re, &raw[filter0], 8);
  re *= 3.0;
  std::memcpy(&raw[filter0], &re, 8);
  CHECK(format_offset([&] { deserialize_model(raw); }) == filter0);
}

TEST_CASE("filter norm slack on load") {
  RecoveryModel m;
  m.lambda = 1.0;
  Eigen::MatrixXcd d = init_dct_filters(2, 2, 1);
  d *= 1.0 + 1e-10;
  m.layers.push_back({2, 2, d, Eigen::VectorXd::Zero(1)});
  // validate() would reject it on save; write the bytes by hand
  Bytes raw = serialize_model(RecoveryModel{{{2, 2, init_dct_filters(2, 2, 1), Eigen::VectorXd::Zero(1)}}, 1.0, ProblemKind::denoising});
  for (Eigen::Index i = 0; i < 4; ++i) {
    const double v = d(i, 0).real();
    std::memcpy(&raw[41 + std::size_t(i) * 16], &v, 8);
  }
  const RecoveryModel back = deserialize_model(raw);
  CHECK(back.layers[0].filters.col(0).norm() <= 1.0 + 1e-12);
}

TEST_CASE("image and mask files") {
  std::mt19937_64 rng(92);
  const auto dir = temp_dir();
  const Image c = oracle::random_image(5, 7, rng);
  write_image(dir / "c.cimg", c);
  const Image c2 = read_image(dir / "c.cimg");
  for (std::size_t i = 0; i < c.size(); ++i) CHECK(c2[i] == c[i]);
  CHECK(encode_image(c).size() == 17 + 35 * 16);

  const Image r = oracle::random_image(3, 3, rng, true);
  CHECK(encode_image(r).size() == 17 + 9 * 8);
  CHECK(decode_image(encode_image(r)).is_real());

  const SamplingMask m = gen_mask(8, 6, 0.5, 0.2, 1);
  write_mask(dir / "m.cmsk", m);
  const SamplingMask m2 = read_mask(dir / "m.cmsk");
  CHECK(m2.sampled == m.sampled);
  CHECK(m2.height == 8);
  const Bytes mb = encode_mask(m);
  CHECK(mb.size() == 16 + 48);
  CHECK(std::equal(mb.begin(), mb.begin() + 4, "CMSK"));

  Bytes bad = encode_image(c);
  bad[16] = 9;
  CHECK(format_offset([&] { decode_image(bad); }) == 16);
  Bytes nan = encode_image(r);
  const double q = std::numeric_limits<double>::quiet_NaN();
  std::memcpy(&nan[17 + 8], &q, 8);
  CHECK(format_offset([&] { decode_image(nan); }) == 25);
  Bytes mbad = mb;
  mbad[20] = 2;
  CHECK(format_offset([&] { decode_mask(mbad); }) == 20);

  CHECK_THROWS_AS(read_image(dir / "missing.cimg"), IoError);
  CHECK_THROWS_AS(write_image(dir / "no" / "such" / "dir.cimg", c), IoError);
}

TEST_CASE("metrics csv") {
  std::vector<TraceRow> one{{1, 27.123456789012345, 0.5}};
  const std::string text = format_metrics_csv(one);
  CHECK(std::count(text.begin(), text.end(), '\n') == 2);
  CHECK(text.rfind("layer,psnr_db,layer_cost\n", 0) == 0);

  std::vector<TraceRow> rows{{1, 20.5, 1e-3}, {2, 21.0 / 3.0, 12345.678901234}, {3, kPerfectPsnr, 0.0}};
  const auto back = parse_metrics_csv(format_metrics_csv(rows));
  REQUIRE(back.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(back[i].layer == rows[i].layer);
    if (std::isfinite(rows[i].psnr_db)) CHECK(std::abs(back[i].psnr_db - rows[i].psnr_db) <= 1e-10);
    else CHECK(back[i].psnr_db == kPerfectPsnr);
    CHECK(std::abs(back[i].layer_cost - rows[i].layer_cost) <= 1e-10);
  }
  CHECK_THROWS_AS(format_metrics_csv({}), InvalidArgument);
  CHECK_THROWS_AS(write_metrics_csv(temp_dir() / "none" / "x.csv", one), IoError);

  std::vector<SweepRecord> sweeps{{1, 1, 10.0, 0.5}, {1, 2, 9.0, 0.1}};
  const std::string tcsv = format_training_csv(sweeps);
  CHECK(tcsv.rfind("layer,sweep,objective,rel_change\n1,1,10,0.5\n", 0) == 0);
}

TEST_CASE("config parsing") {
  const RunConfig cfg = parse_config(
      "# denoising run\n"
      "problem = denoise\n"
      "sigma = 25.5   # natural scale\n"
      "layers = 3\n"
      "filters_k = 16\n"
      "patch_h = 4\npatch_w = 4\n"
      "n_patches = 4000\n"
      "seed = 12\n"
      "model = out/model.bcdn\n");
  CHECK(cfg.problem == ProblemKind::denoising);
  CHECK(cfg.training.n_layers == 3);
  CHECK(cfg.training.n_filters == 16);
  CHECK(cfg.training.seed == 12);
  CHECK(cfg.training.lambda == doctest::Approx(100.0));
  CHECK(cfg.model_path == "out/model.bcdn");

  const RunConfig mri = parse_config("problem = mri\nrate = 0.25\n");
  CHECK(mri.training.lambda == 1e6);
  CHECK(mri.training.max_block_sweeps == 180);
  CHECK(mri.rate == 0.25);
  CHECK(parse_config("lambda = 3\n").training.lambda == 3.0);

  CHECK_THROWS_AS(parse_config("bogus = 1\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("layers = 2\nlayers = 3\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("layers = -2\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("layers = 0\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("filters_k = 100\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("rate = 0\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("problem = ct\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("layers 3\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("rho0 = nan\n"), ConfigError);
  try {
    parse_config("\n\nwhat = 1\n");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }
  CHECK_THROWS_AS(load_config(temp_dir() / "missing.cfg"), IoError);
}
