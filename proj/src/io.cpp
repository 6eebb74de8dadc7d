#include "cbgopt/io.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include <fmt/format.h>

#include "cbgopt/errors.hpp"

namespace cbgopt::io {

namespace {

static_assert(std::endian::native == std::endian::little, "model files are little endian");

constexpr char kMagic[8] = {'C', 'B', 'G', 'M', 'O', 'D', 'E', 'L'};

class Writer {
 public:
  explicit Writer(const std::string& path) : out_(path, std::ios::binary | std::ios::trunc) {
    if (!out_) throw InvalidArgument(fmt::format("cannot open {} for writing", path));
    path_ = path;
  }
  template <class T>
  void pod(T v) {
    out_.write(reinterpret_cast<const char*>(&v), sizeof(T));
  }
  void doubles(const double* p, std::size_t n) {
    out_.write(reinterpret_cast<const char*>(p), static_cast<std::streamsize>(n * sizeof(double)));
  }
  void str(const std::string& s) {
    pod<std::uint64_t>(s.size());
    out_.write(s.data(), static_cast<std::streamsize>(s.size()));
  }
  void header(ModelKind kind, const std::string& metadata) {
    out_.write(kMagic, sizeof kMagic);
    pod(kFormatVersion);
    pod(static_cast<std::uint32_t>(kind));
    str(metadata);
  }
  void finish() {
    out_.flush();
    if (!out_) throw InvalidArgument(fmt::format("write to {} failed", path_));
  }

 private:
  std::ofstream out_;
  std::string path_;
};

class Reader {
 public:
  explicit Reader(const std::string& path) : in_(path, std::ios::binary), path_(path) {
    if (!in_) throw InvalidArgument(fmt::format("cannot open model file {}", path));
  }
  template <class T>
  T pod() {
    T v{};
    in_.read(reinterpret_cast<char*>(&v), sizeof(T));
    check();
    return v;
  }
  void doubles(double* p, std::size_t n) {
    in_.read(reinterpret_cast<char*>(p), static_cast<std::streamsize>(n * sizeof(double)));
    check();
  }
  std::string str() {
    const auto n = pod<std::uint64_t>();
    if (n > (1u << 24)) throw InvalidArgument(fmt::format("{}: corrupt string length", path_));
    std::string s(n, '\0');
    in_.read(s.data(), static_cast<std::streamsize>(n));
    check();
    return s;
  }
  // Validates magic and version; returns the kind.
  ModelKind header(std::string* metadata) {
    char magic[8];
    in_.read(magic, sizeof magic);
    check();
    if (std::memcmp(magic, kMagic, sizeof kMagic) != 0) {
      throw InvalidArgument(fmt::format("{} is not a model file", path_));
    }
    const auto version = pod<std::uint32_t>();
    if (version != kFormatVersion) {
      throw InvalidArgument(
          fmt::format("{}: format version {} not supported (expected {})", path_, version,
                      kFormatVersion));
    }
    const auto kind = static_cast<ModelKind>(pod<std::uint32_t>());
    std::string meta = str();
    if (metadata) *metadata = std::move(meta);
    return kind;
  }
  void expect(ModelKind got, ModelKind want) const {
    if (got != want) {
      throw InvalidArgument(fmt::format("{} holds model kind {}, expected {}", path_,
                                        static_cast<std::uint32_t>(got),
                                        static_cast<std::uint32_t>(want)));
    }
  }

 private:
  void check() {
    if (!in_) throw InvalidArgument(fmt::format("{}: truncated model file", path_));
  }
  std::ifstream in_;
  std::string path_;
};

void write_gp(Writer& w, const gp::GPModel& m) {
  const auto& t = m.training();
  const auto& p = m.params();
  w.pod<std::uint64_t>(t.dim());
  w.pod<std::uint64_t>(t.count());
  // Row-major so the file does not depend on Eigen's storage order.
  for (Eigen::Index i = 0; i < t.points.rows(); ++i) {
    for (Eigen::Index d = 0; d < t.points.cols(); ++d) w.pod(t.points(i, d));
  }
  w.doubles(t.values.data(), t.count());
  w.pod(p.mu0);
  w.pod(p.sigma0_sq);
  w.doubles(p.length_scales.data(), t.dim());
  w.pod(p.noise_sq);
}

gp::GPModel read_gp(Reader& r) {
  const auto dim = r.pod<std::uint64_t>();
  const auto count = r.pod<std::uint64_t>();
  if (dim == 0 || dim > 4096 || count == 0 || count > (1u << 22)) {
    throw InvalidArgument("corrupt model dimensions");
  }
  gp::TrainingSet t;
  t.points.resize(static_cast<Eigen::Index>(count), static_cast<Eigen::Index>(dim));
  for (Eigen::Index i = 0; i < t.points.rows(); ++i) {
    for (Eigen::Index d = 0; d < t.points.cols(); ++d) t.points(i, d) = r.pod<double>();
  }
  t.values.resize(static_cast<Eigen::Index>(count));
  r.doubles(t.values.data(), count);
  gp::KernelParams p;
  p.mu0 = r.pod<double>();
  p.sigma0_sq = r.pod<double>();
  p.length_scales.resize(static_cast<Eigen::Index>(dim));
  r.doubles(p.length_scales.data(), dim);
  p.noise_sq = r.pod<double>();
  return gp::GPModel(std::move(t), std::move(p));
}

void write_warp(Writer& w, const warp::WarpSpec& s) {
  w.pod(s.lower_bound());
  w.pod(s.upper_bound());
  w.pod(s.lower_cutoff());
  w.pod(s.upper_cutoff());
  w.pod(s.position());
}

warp::WarpSpec read_warp(Reader& r) {
  const double lb = r.pod<double>(), ub = r.pod<double>();
  const double lc = r.pod<double>(), uc = r.pod<double>();
  const double pos = r.pod<double>();
  return {lb, ub, lc, uc, pos};
}

void write_warped(Writer& w, const warp::WarpedGPModel& m) {
  write_warp(w, m.warp);
  write_gp(w, m.gp);
}

warp::WarpedGPModel read_warped(Reader& r) {
  auto spec = read_warp(r);
  return {spec, read_gp(r)};
}

}  // namespace

void save_gp(const std::string& path, const gp::GPModel& model, const std::string& metadata) {
  Writer w(path);
  w.header(ModelKind::GP, metadata);
  write_gp(w, model);
  w.finish();
}

void save_warped_gp(const std::string& path, const warp::WarpedGPModel& model,
                    const std::string& metadata) {
  Writer w(path);
  w.header(ModelKind::WarpedGP, metadata);
  write_warped(w, model);
  w.finish();
}

void save_bundle(const std::string& path, const robust::SurrogateBundle& bundle,
                 const std::string& metadata) {
  Writer w(path);
  w.header(ModelKind::Bundle, metadata);
  const auto& d = bundle.domain;
  w.pod<std::uint64_t>(d.dim());
  w.doubles(d.lower.data(), d.dim());
  w.doubles(d.upper.data(), d.dim());
  w.pod<std::uint64_t>(d.names.size());
  for (const auto& n : d.names) w.str(n);
  write_gp(w, bundle.lambda_model);
  write_warped(w, bundle.fp_model);
  write_warped(w, bundle.eta_model);
  w.finish();
}

gp::GPModel load_gp(const std::string& path, std::string* metadata) {
  Reader r(path);
  r.expect(r.header(metadata), ModelKind::GP);
  return read_gp(r);
}

warp::WarpedGPModel load_warped_gp(const std::string& path, std::string* metadata) {
  Reader r(path);
  r.expect(r.header(metadata), ModelKind::WarpedGP);
  return read_warped(r);
}

robust::SurrogateBundle load_bundle(const std::string& path, std::string* metadata) {
  Reader r(path);
  r.expect(r.header(metadata), ModelKind::Bundle);
  BoxDomain d;
  const auto dim = r.pod<std::uint64_t>();
  if (dim == 0 || dim > 4096) throw InvalidArgument("corrupt bundle domain");
  d.lower.resize(dim);
  d.upper.resize(dim);
  r.doubles(d.lower.data(), dim);
  r.doubles(d.upper.data(), dim);
  const auto names = r.pod<std::uint64_t>();
  if (names > dim) throw InvalidArgument("corrupt bundle domain names");
  for (std::uint64_t i = 0; i < names; ++i) d.names.push_back(r.str());
  auto lambda = read_gp(r);
  auto fp = read_warped(r);
  auto eta = read_warped(r);
  return {std::move(lambda), std::move(fp), std::move(eta), std::move(d)};
}

ModelKind peek_kind(const std::string& path) {
  Reader r(path);
  return r.header(nullptr);
}

}  // namespace cbgopt::io
