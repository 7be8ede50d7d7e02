#include "bcdnet/io.hpp"

#include "bcdnet/error.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <map>
#include <set>
#include <sstream>

namespace bcdnet {

namespace {

constexpr std::uint32_t kVersion = 1;

class ByteWriter {
 public:
  void magic(const char (&tag)[5]) { out_.insert(out_.end(), tag, tag + 4); }
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f64(double v) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
  }
  Bytes take() { return std::move(out_); }

 private:
  Bytes out_;
};

class ByteReader {
 public:
  ByteReader(std::span<const std::uint8_t> bytes, const char* format)
      : bytes_(bytes), format_(format) {}

  void magic(const char (&tag)[5]) {
    need(4, "magic");
    if (std::memcmp(bytes_.data(), tag, 4) != 0) {
      throw FormatError(std::string(format_) + ": bad magic, expected \"" + tag + "\"", 0);
    }
    pos_ = 4;
  }
  void version() {
    const std::size_t at = pos_;
    const std::uint32_t v = u32("version");
    if (v != kVersion) {
      throw FormatError(std::string(format_) + ": unsupported version " + std::to_string(v), at);
    }
  }
  std::uint8_t u8(const char* what) {
    need(1, what);
    return bytes_[pos_++];
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  double f64(const char* what) {
    need(8, what);
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 8;
    return std::bit_cast<double>(bits);
  }
  double finite_f64(const char* what) {
    const std::size_t at = pos_;
    const double v = f64(what);
    if (!std::isfinite(v)) fail(std::string("non-finite ") + what, at);
    return v;
  }
  void finish() const {
    if (pos_ != bytes_.size()) {
      fail(std::to_string(bytes_.size() - pos_) + " trailing bytes", pos_);
    }
  }
  std::size_t pos() const { return pos_; }
  [[noreturn]] void fail(const std::string& msg, std::size_t at) const {
    throw FormatError(std::string(format_) + ": " + msg, at);
  }

 private:
  void need(std::size_t n, const char* what) const {
    if (bytes_.size() - pos_ < n) fail(std::string("truncated while reading ") + what, pos_);
  }

  std::span<const std::uint8_t> bytes_;
  const char* format_;
  std::size_t pos_ = 0;
};

std::uint32_t checked_u32(std::size_t v, const char* what) {
  if (v > 0xffffffffu) throw InvalidArgument(std::string(what) + " does not fit in 32 bits");
  return static_cast<std::uint32_t>(v);
}

}  // namespace

Bytes read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string() + " for reading");
  Bytes bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("error while reading " + path.string());
  return bytes;
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("error while writing " + path.string());
}

Bytes encode_image(const Image& img) {
  if (img.empty()) throw ShapeError("cannot encode an empty image");
  ByteWriter w;
  w.magic("CIMG");
  w.u32(kVersion);
  w.u32(checked_u32(img.height(), "height"));
  w.u32(checked_u32(img.width(), "width"));
  const bool real = img.is_real();
  w.u8(real ? 0 : 1);
  for (const cplx& p : img.pixels()) {
    w.f64(p.real());
    if (!real) w.f64(p.imag());
  }
  return w.take();
}

Image decode_image(std::span<const std::uint8_t> bytes, Domain domain) {
  ByteReader r(bytes, "CIMG");
  r.magic("CIMG");
  r.version();
  const std::size_t dims_at = r.pos();
  const std::uint32_t h = r.u32("height");
  const std::uint32_t w = r.u32("width");
  if (h == 0 || w == 0) r.fail("zero image dimension", dims_at);
  const std::size_t dtype_at = r.pos();
  const std::uint8_t dtype = r.u8("dtype");
  if (dtype > 1) r.fail("unknown dtype " + std::to_string(dtype), dtype_at);
  const std::size_t n = static_cast<std::size_t>(h) * w;
  const std::size_t per = dtype == 0 ? 8 : 16;
  if ((bytes.size() - r.pos()) / per < n) r.fail("truncated pixel payload", r.pos());
  std::vector<cplx> pixels(n);
  for (auto& p : pixels) {
    const double re = r.finite_f64("pixel value");
    const double im = dtype == 1 ? r.finite_f64("pixel value") : 0.0;
    p = {re, im};
  }
  r.finish();
  return Image(h, w, std::move(pixels), domain);
}

void write_image(const std::filesystem::path& path, const Image& img) {
  write_file(path, encode_image(img));
}

Image read_image(const std::filesystem::path& path, Domain domain) {
  return decode_image(read_file(path), domain);
}

Bytes encode_mask(const SamplingMask& mask) {
  if (mask.sampled.size() != mask.height * mask.width || mask.sampled.empty()) {
    throw ShapeError("mask storage does not match its dimensions");
  }
  ByteWriter w;
  w.magic("CMSK");
  w.u32(kVersion);
  w.u32(checked_u32(mask.height, "height"));
  w.u32(checked_u32(mask.width, "width"));
  for (std::uint8_t b : mask.sampled) w.u8(b != 0 ? 1 : 0);
  return w.take();
}

SamplingMask decode_mask(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes, "CMSK");
  r.magic("CMSK");
  r.version();
  const std::size_t dims_at = r.pos();
  const std::uint32_t h = r.u32("height");
  const std::uint32_t w = r.u32("width");
  if (h == 0 || w == 0) r.fail("zero mask dimension", dims_at);
  SamplingMask mask{h, w, {}};
  const std::size_t n = static_cast<std::size_t>(h) * w;
  if (bytes.size() - r.pos() < n) r.fail("truncated mask payload", r.pos());
  mask.sampled.resize(n);
  for (auto& b : mask.sampled) {
    const std::size_t at = r.pos();
    b = r.u8("mask entry");
    if (b > 1) r.fail("mask entries must be 0 or 1", at);
  }
  r.finish();
  return mask;
}

void write_mask(const std::filesystem::path& path, const SamplingMask& mask) {
  write_file(path, encode_mask(mask));
}

SamplingMask read_mask(const std::filesystem::path& path) { return decode_mask(read_file(path)); }

Bytes serialize_model(const RecoveryModel& model) {
  model.validate();
  std::size_t k = 0, rh = 0, rw = 0;
  if (!model.layers.empty()) {
    k = model.layers.front().n_filters();
    rh = model.layers.front().patch_h;
    rw = model.layers.front().patch_w;
  }
  for (const auto& layer : model.layers) {
    if (layer.n_filters() != k || layer.patch_h != rh || layer.patch_w != rw) {
      throw InvalidArgument("all layers of a model must share K and the patch size");
    }
  }
  ByteWriter w;
  w.magic("BCDN");
  w.u32(kVersion);
  w.u32(checked_u32(model.layers.size(), "layer count"));
  w.u32(checked_u32(k, "filter count"));
  w.u32(checked_u32(rh, "patch height"));
  w.u32(checked_u32(rw, "patch width"));
  w.u8(static_cast<std::uint8_t>(model.kind));
  w.f64(model.lambda);
  for (const auto& layer : model.layers) {
    for (Eigen::Index i = 0; i < layer.thresholds.size(); ++i) w.f64(layer.thresholds[i]);
    for (Eigen::Index j = 0; j < layer.filters.cols(); ++j) {
      for (Eigen::Index i = 0; i < layer.filters.rows(); ++i) {
        w.f64(layer.filters(i, j).real());
        w.f64(layer.filters(i, j).imag());
      }
    }
  }
  return w.take();
}

RecoveryModel deserialize_model(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes, "BCDN");
  r.magic("BCDN");
  r.version();
  const std::uint32_t n_layers = r.u32("layer count");
  const std::size_t dims_at = r.pos();
  const std::uint32_t k = r.u32("filter count");
  const std::uint32_t rh = r.u32("patch height");
  const std::uint32_t rw = r.u32("patch width");
  if (n_layers > 0 && (k == 0 || rh == 0 || rw == 0)) r.fail("zero model dimension", dims_at);
  const std::size_t kind_at = r.pos();
  const std::uint8_t kind = r.u8("problem kind");
  if (kind > 1) r.fail("unknown problem kind " + std::to_string(kind), kind_at);
  const std::size_t lambda_at = r.pos();
  const double lambda = r.finite_f64("lambda");
  if (lambda < 0.0) r.fail("negative lambda", lambda_at);

  const std::size_t plen = static_cast<std::size_t>(rh) * rw;
  const std::size_t per_layer = static_cast<std::size_t>(k) * (8 + 16 * plen);
  if (per_layer != 0 && (bytes.size() - r.pos()) / per_layer < n_layers) {
    r.fail("truncated layer payload", r.pos());
  }

  RecoveryModel model;
  model.kind = static_cast<ProblemKind>(kind);
  model.lambda = lambda;
  for (std::uint32_t l = 0; l < n_layers; ++l) {
    LayerMapping layer;
    layer.patch_h = rh;
    layer.patch_w = rw;
    layer.thresholds.resize(k);
    layer.filters.resize(static_cast<Eigen::Index>(plen), k);
    for (std::uint32_t j = 0; j < k; ++j) {
      const std::size_t at = r.pos();
      const double a = r.finite_f64("threshold");
      if (a < 0.0) r.fail("negative threshold", at);
      layer.thresholds[j] = a;
    }
    for (std::uint32_t j = 0; j < k; ++j) {
      const std::size_t at = r.pos();
      for (std::size_t i = 0; i < plen; ++i) {
        const double re = r.finite_f64("filter coefficient");
        const double im = r.finite_f64("filter coefficient");
        layer.filters(static_cast<Eigen::Index>(i), j) = {re, im};
      }
      const double nrm = layer.filters.col(j).norm();
      if (nrm > 1.0 + kFilterNormSlack) {
        r.fail("filter norm " + std::to_string(nrm) + " exceeds 1", at);
      }
      // Rounding slack from training; anything at or below 1 + 1e-12 is
      // kept bit-for-bit.
      if (nrm > 1.0 + 1e-12) layer.filters.col(j) /= nrm;
    }
    model.layers.push_back(std::move(layer));
  }
  r.finish();
  return model;
}

void write_model(const std::filesystem::path& path, const RecoveryModel& model) {
  write_file(path, serialize_model(model));
}

RecoveryModel read_model(const std::filesystem::path& path) {
  return deserialize_model(read_file(path));
}

namespace {

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<std::string> split(std::string_view line, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t at = line.find(sep, start);
    out.emplace_back(line.substr(start, at - start));
    if (at == std::string_view::npos) break;
    start = at + 1;
  }
  return out;
}

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

double parse_double_field(std::string_view s) {
  s = trim(s);
  if (s == "nan") return std::nan("");
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw InvalidArgument("not a number: '" + std::string(s) + "'");
  }
  return v;
}

std::size_t parse_count_field(std::string_view s) {
  s = trim(s);
  std::size_t v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw InvalidArgument("not a nonnegative integer: '" + std::string(s) + "'");
  }
  return v;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  write_file(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

}  // namespace

std::string format_metrics_csv(std::span<const TraceRow> rows) {
  if (rows.empty()) throw InvalidArgument("metrics trace is empty");
  std::string out = "layer,psnr_db,layer_cost\n";
  for (const auto& row : rows) {
    out += std::to_string(row.layer) + "," + fmt_double(row.psnr_db) + "," +
           fmt_double(row.layer_cost) + "\n";
  }
  return out;
}

std::vector<TraceRow> parse_metrics_csv(std::string_view text) {
  std::vector<TraceRow> rows;
  std::istringstream in{std::string(text)};
  std::string line;
  if (!std::getline(in, line) || trim(line) != "layer,psnr_db,layer_cost") {
    throw InvalidArgument("metrics CSV header mismatch");
  }
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    const auto fields = split(line, ',');
    if (fields.size() != 3) throw InvalidArgument("metrics CSV row needs 3 fields");
    rows.push_back({parse_count_field(fields[0]), parse_double_field(fields[1]),
                    parse_double_field(fields[2])});
  }
  return rows;
}

void write_metrics_csv(const std::filesystem::path& path, std::span<const TraceRow> rows) {
  write_text(path, format_metrics_csv(rows));
}

std::string format_training_csv(std::span<const SweepRecord> rows) {
  std::string out = "layer,sweep,objective,rel_change\n";
  for (const auto& row : rows) {
    out += std::to_string(row.layer) + "," + std::to_string(row.sweep) + "," +
           fmt_double(row.objective) + "," + fmt_double(row.rel_change) + "\n";
  }
  return out;
}

void write_training_csv(const std::filesystem::path& path, std::span<const SweepRecord> rows) {
  write_text(path, format_training_csv(rows));
}

double RunConfig::resolved_lambda() const {
  if (lambda) return *lambda;
  if (problem == ProblemKind::mri) return 1e6;
  return 10.0 / (sigma * peak / 255.0);
}

RunConfig parse_config(std::string_view text) {
  RunConfig cfg;
  std::map<std::string, std::pair<std::string, std::size_t>> entries;
  std::istringstream in{std::string(text)};
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string_view line = raw;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) {
      line = line.substr(0, hash);
    }
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
    }
    const std::string key(trim(line.substr(0, eq)));
    const std::string value(trim(line.substr(eq + 1)));
    if (key.empty() || value.empty()) {
      throw ConfigError("line " + std::to_string(line_no) + ": empty key or value");
    }
    if (!entries.emplace(key, std::make_pair(value, line_no)).second) {
      throw ConfigError("line " + std::to_string(line_no) + ": repeated key '" + key + "'");
    }
  }

  static const std::set<std::string> known = {
      "problem",  "lambda",     "sigma",      "peak",       "layers",     "filters_k",
      "patch_h",  "patch_w",    "n_patches",  "admm_iters", "v_iters",    "alpha_iters",
      "rel_tol",  "max_sweeps", "rho0",       "rate",       "center_fraction",
      "seed",     "train_dir",  "model",      "metrics"};
  for (const auto& [key, entry] : entries) {
    if (!known.contains(key)) {
      throw ConfigError("line " + std::to_string(entry.second) + ": unknown key '" + key + "'");
    }
  }

  auto where = [&](const std::string& key) {
    return "line " + std::to_string(entries.at(key).second) + ": " + key;
  };
  auto num = [&](const std::string& key, auto& target) {
    const auto it = entries.find(key);
    if (it == entries.end()) return false;
    try {
      if constexpr (std::is_same_v<std::decay_t<decltype(target)>, double>) {
        target = parse_double_field(it->second.first);
        if (!std::isfinite(target)) throw InvalidArgument("not finite");
      } else {
        target = static_cast<std::decay_t<decltype(target)>>(parse_count_field(it->second.first));
      }
    } catch (const InvalidArgument& e) {
      throw ConfigError(where(key) + ": " + e.what());
    }
    return true;
  };

  if (const auto it = entries.find("problem"); it != entries.end()) {
    const std::string& v = it->second.first;
    if (v == "denoise" || v == "denoising") {
      cfg.problem = ProblemKind::denoising;
    } else if (v == "mri") {
      cfg.problem = ProblemKind::mri;
    } else {
      throw ConfigError(where("problem") + ": expected 'denoise' or 'mri'");
    }
  }
  cfg.training = TrainingConfig::defaults_for(cfg.problem);
  TrainingConfig& t = cfg.training;
  double lambda = 0.0;
  if (num("lambda", lambda)) {
    if (!(lambda > 0.0)) throw ConfigError(where("lambda") + " must be positive");
    cfg.lambda = lambda;
  }
  num("sigma", cfg.sigma);
  num("peak", cfg.peak);
  num("layers", t.n_layers);
  num("filters_k", t.n_filters);
  num("patch_h", t.patch_h);
  num("patch_w", t.patch_w);
  num("n_patches", t.n_patches);
  num("admm_iters", t.admm_iters);
  num("v_iters", t.v_subgrad_iters);
  num("alpha_iters", t.alpha_subgrad_iters);
  num("rel_tol", t.rel_diff_tol);
  num("max_sweeps", t.max_block_sweeps);
  num("rho0", t.rho0);
  num("rate", cfg.rate);
  num("center_fraction", cfg.center_fraction);
  num("seed", t.seed);
  if (const auto it = entries.find("train_dir"); it != entries.end()) cfg.train_dir = it->second.first;
  if (const auto it = entries.find("model"); it != entries.end()) cfg.model_path = it->second.first;
  if (const auto it = entries.find("metrics"); it != entries.end()) {
    cfg.metrics_path = it->second.first;
  }

  if (!(cfg.sigma > 0.0) && cfg.problem == ProblemKind::denoising && !cfg.lambda) {
    throw ConfigError("sigma must be positive to derive lambda for denoising");
  }
  if (!(cfg.peak > 0.0)) throw ConfigError("peak must be positive");
  if (!(cfg.rate > 0.0 && cfg.rate <= 1.0)) throw ConfigError("rate must lie in (0, 1]");
  if (!(cfg.center_fraction >= 0.0 && cfg.center_fraction < 1.0)) {
    throw ConfigError("center_fraction must lie in [0, 1)");
  }
  if (t.n_layers == 0) throw ConfigError("layers must be at least 1");
  t.lambda = cfg.resolved_lambda();
  t.validate();
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  const Bytes bytes = read_file(path);
  return parse_config(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

}  // namespace bcdnet
