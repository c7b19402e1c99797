#pragma once

// Datasets: MNIST IDX files (raw or gzipped) and synthetic equicorrelated
// Gaussian rows for oracle tests.

#include <Eigen/Dense>
#include <zlib.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <numeric>
#include <string>
#include <vector>

#include "critprop/errors.hpp"
#include "critprop/random.hpp"

namespace critprop {

/// Rows of `inputs` are data points; pixel data lies in [0, 1].
struct Dataset {
  Eigen::MatrixXd inputs;
  std::vector<int> labels;
  std::string name;

  Eigen::Index size() const { return inputs.rows(); }
  Eigen::Index dim() const { return inputs.cols(); }
};

inline constexpr std::uint32_t kIdxImageMagic = 2051;
inline constexpr std::uint32_t kIdxLabelMagic = 2049;

namespace detail {

inline std::vector<unsigned char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline bool is_gzip(const std::vector<unsigned char>& bytes) {
  return bytes.size() >= 2 && bytes[0] == 0x1f && bytes[1] == 0x8b;
}

inline std::vector<unsigned char> gunzip(const std::vector<unsigned char>& packed,
                                         const std::string& what) {
  z_stream zs{};
  if (inflateInit2(&zs, 16 + MAX_WBITS) != Z_OK) throw FormatError("zlib init failed for " + what);
  zs.next_in = const_cast<Bytef*>(packed.data());
  zs.avail_in = static_cast<uInt>(packed.size());
  std::vector<unsigned char> out;
  std::array<unsigned char, 1 << 16> chunk{};
  int rc;
  do {
    zs.next_out = chunk.data();
    zs.avail_out = static_cast<uInt>(chunk.size());
    rc = inflate(&zs, Z_NO_FLUSH);
    if (rc != Z_OK && rc != Z_STREAM_END) {
      inflateEnd(&zs);
      throw FormatError("corrupt gzip stream in " + what);
    }
    out.insert(out.end(), chunk.data(), chunk.data() + (chunk.size() - zs.avail_out));
  } while (rc != Z_STREAM_END && (zs.avail_in > 0 || zs.avail_out == 0));
  inflateEnd(&zs);
  if (rc != Z_STREAM_END) throw FormatError("truncated gzip stream in " + what);
  return out;
}

inline std::vector<unsigned char> read_maybe_gzip(const std::filesystem::path& path) {
  auto bytes = read_file(path);
  return is_gzip(bytes) ? gunzip(bytes, path.string()) : bytes;
}

inline std::uint32_t be32(const std::vector<unsigned char>& b, std::size_t at) {
  return (std::uint32_t{b[at]} << 24) | (std::uint32_t{b[at + 1]} << 16) |
         (std::uint32_t{b[at + 2]} << 8) | std::uint32_t{b[at + 3]};
}

inline void put_be32(std::vector<unsigned char>& b, std::uint32_t v) {
  b.push_back(static_cast<unsigned char>(v >> 24));
  b.push_back(static_cast<unsigned char>(v >> 16));
  b.push_back(static_cast<unsigned char>(v >> 8));
  b.push_back(static_cast<unsigned char>(v));
}

// Parses an IDX header: magic, then `rank` big-endian dimension sizes.
inline std::vector<std::uint32_t> idx_header(const std::vector<unsigned char>& b,
                                             std::uint32_t magic, std::size_t rank,
                                             const std::string& what) {
  if (b.size() < 4) throw FormatError(what + ": file shorter than the IDX magic");
  const std::uint32_t found = be32(b, 0);
  if (found != magic) {
    throw FormatError(what + ": bad IDX magic " + std::to_string(found) + " (expected " +
                      std::to_string(magic) + ")");
  }
  if (b.size() < 4 + 4 * rank) throw FormatError(what + ": truncated IDX header");
  std::vector<std::uint32_t> dims(rank);
  std::size_t payload = 1;
  for (std::size_t k = 0; k < rank; ++k) {
    dims[k] = be32(b, 4 + 4 * k);
    payload *= dims[k];
  }
  const std::size_t have = b.size() - 4 - 4 * rank;
  if (have < payload) {
    throw FormatError(what + ": truncated payload, expected " + std::to_string(payload) +
                      " bytes, found " + std::to_string(have));
  }
  return dims;
}

inline void write_bytes(const std::filesystem::path& path, const std::vector<unsigned char>& b,
                        bool gzip) {
  if (gzip) {
    gzFile f = gzopen(path.string().c_str(), "wb9");
    if (!f) throw FormatError("cannot write " + path.string());
    const int n = gzwrite(f, b.data(), static_cast<unsigned>(b.size()));
    gzclose(f);
    if (n != static_cast<int>(b.size())) throw FormatError("short write to " + path.string());
    return;
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
  if (!out) throw FormatError("short write to " + path.string());
}

}  // namespace detail

/// Reads an IDX image/label pair, gzipped or raw. Pixels are divided by 255.
inline Dataset load_mnist(const std::filesystem::path& images_path,
                          const std::filesystem::path& labels_path) {
  const auto img = detail::read_maybe_gzip(images_path);
  const auto lab = detail::read_maybe_gzip(labels_path);
  const auto idims = detail::idx_header(img, kIdxImageMagic, 3, images_path.string());
  const auto ldims = detail::idx_header(lab, kIdxLabelMagic, 1, labels_path.string());
  if (idims[0] != ldims[0]) {
    throw FormatError("image count " + std::to_string(idims[0]) + " does not match label count " +
                      std::to_string(ldims[0]));
  }
  const Eigen::Index m = idims[0];
  const Eigen::Index d = static_cast<Eigen::Index>(idims[1]) * idims[2];
  Dataset ds;
  ds.name = images_path.filename().string();
  ds.inputs.resize(m, d);
  const unsigned char* px = img.data() + 16;
  for (Eigen::Index i = 0; i < m; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) ds.inputs(i, j) = px[i * d + j] / 255.0;
  }
  ds.labels.resize(static_cast<std::size_t>(m));
  for (Eigen::Index i = 0; i < m; ++i) {
    const int y = lab[8 + i];
    if (y > 9) throw FormatError("label " + std::to_string(y) + " at index " + std::to_string(i) + " is outside 0..9");
    ds.labels[i] = y;
  }
  return ds;
}

/// Loads `<split>-images-idx3-ubyte[.gz]` and the matching labels from `dir`.
inline Dataset load_mnist_split(const std::filesystem::path& dir, const std::string& split) {
  auto pick = [&](const std::string& stem) {
    const auto raw = dir / stem;
    if (std::filesystem::exists(raw)) return raw;
    const auto gz = dir / (stem + ".gz");
    if (std::filesystem::exists(gz)) return gz;
    throw FormatError("no " + stem + "[.gz] in " + dir.string());
  };
  Dataset ds = load_mnist(pick(split + "-images-idx3-ubyte"), pick(split + "-labels-idx1-ubyte"));
  ds.name = "mnist-" + split;
  return ds;
}

/// Writes `ds` as an IDX pair. Values are stored as round(255 x), so data
/// read by load_mnist round-trips exactly. Rows of a square dimension are
/// written as rows x cols images, otherwise as 1 x D.
inline void write_idx(const Dataset& ds, const std::filesystem::path& images_path,
                      const std::filesystem::path& labels_path, bool gzip = false) {
  if (static_cast<std::size_t>(ds.size()) != ds.labels.size()) {
    throw ShapeError("write_idx: row count and label count differ");
  }
  const auto d = static_cast<std::uint32_t>(ds.dim());
  auto side = static_cast<std::uint32_t>(std::lround(std::sqrt(static_cast<double>(d))));
  const bool square = side * side == d;
  std::vector<unsigned char> img;
  img.reserve(16 + static_cast<std::size_t>(ds.size()) * d);
  detail::put_be32(img, kIdxImageMagic);
  detail::put_be32(img, static_cast<std::uint32_t>(ds.size()));
  detail::put_be32(img, square ? side : 1);
  detail::put_be32(img, square ? side : d);
  for (Eigen::Index i = 0; i < ds.size(); ++i) {
    for (Eigen::Index j = 0; j < ds.dim(); ++j) {
      const double v = std::clamp(ds.inputs(i, j), 0.0, 1.0);
      img.push_back(static_cast<unsigned char>(std::lround(v * 255.0)));
    }
  }
  std::vector<unsigned char> lab;
  detail::put_be32(lab, kIdxLabelMagic);
  detail::put_be32(lab, static_cast<std::uint32_t>(ds.labels.size()));
  for (int y : ds.labels) {
    if (y < 0 || y > 255) throw InvalidArgument("write_idx: label does not fit a byte");
    lab.push_back(static_cast<unsigned char>(y));
  }
  detail::write_bytes(images_path, img, gzip);
  detail::write_bytes(labels_path, lab, gzip);
}

/// Rows [begin, begin + count).
inline Dataset slice(const Dataset& ds, Eigen::Index begin, Eigen::Index count) {
  if (begin < 0 || count < 0 || begin + count > ds.size()) {
    throw InvalidArgument("slice [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                          ") is outside a dataset of " + std::to_string(ds.size()));
  }
  Dataset out;
  out.name = ds.name;
  out.inputs = ds.inputs.middleRows(begin, count);
  out.labels.assign(ds.labels.begin() + begin, ds.labels.begin() + begin + count);
  return out;
}

inline Dataset select_rows(const Dataset& ds, const std::vector<Eigen::Index>& rows) {
  Dataset out;
  out.name = ds.name;
  out.inputs.resize(static_cast<Eigen::Index>(rows.size()), ds.dim());
  out.labels.reserve(rows.size());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    out.inputs.row(static_cast<Eigen::Index>(k)) = ds.inputs.row(rows[k]);
    out.labels.push_back(ds.labels[static_cast<std::size_t>(rows[k])]);
  }
  return out;
}

inline constexpr std::uint64_t kSubsampleStream = 0x5b;

/// Uniform random subset of n rows without replacement. Selected rows keep
/// their original relative order.
inline Dataset subsample(const Dataset& ds, Eigen::Index n, std::uint64_t seed) {
  if (n < 1 || n > ds.size()) {
    throw InvalidArgument("subsample size " + std::to_string(n) + " outside [1, " +
                          std::to_string(ds.size()) + "]");
  }
  std::vector<Eigen::Index> order(static_cast<std::size_t>(ds.size()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  Rng rng(seed, kSubsampleStream);
  rng.shuffle(std::span<Eigen::Index>(order));
  order.resize(static_cast<std::size_t>(n));
  std::sort(order.begin(), order.end());
  Dataset out = select_rows(ds, order);
  out.name = ds.name + "-sub" + std::to_string(n);
  return out;
}

/// Fraction of rows per class label 0..9.
inline std::array<double, 10> label_proportions(const Dataset& ds) {
  std::array<double, 10> p{};
  for (int y : ds.labels) {
    if (y >= 0 && y < 10) p[static_cast<std::size_t>(y)] += 1.0;
  }
  if (!ds.labels.empty()) {
    for (double& v : p) v /= static_cast<double>(ds.labels.size());
  }
  return p;
}

/// M zero-mean Gaussian rows of dimension D whose population correlation
/// between any two rows is rho. rho >= 0 adds a shared component,
/// x_a = sqrt(rho) g + sqrt(1 - rho) e_a. rho < 0 removes part of the row
/// mean, x_a = (e_a - k e_bar) / sqrt(1 + t) with t = rho / (1 - rho) and
/// k = 1 - sqrt(1 + M t), which needs rho >= -1/(M - 1).
/// Labels are assigned round-robin over 0..9.
inline Dataset synthetic_gaussian(Eigen::Index m, Eigen::Index d, double rho, std::uint64_t seed) {
  if (m < 1 || d < 1) throw InvalidArgument("synthetic_gaussian: M and D must be >= 1");
  if (!(std::fabs(rho) < 1.0)) throw InvalidArgument("synthetic_gaussian: |rho| must be < 1");
  if (m > 1 && rho < -1.0 / static_cast<double>(m - 1)) {
    throw InvalidArgument("synthetic_gaussian: rho below -1/(M-1) is not a valid correlation");
  }
  Rng rng(seed);
  Eigen::MatrixXd e(m, d);
  for (Eigen::Index i = 0; i < m; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) e(i, j) = rng.normal();
  }
  Dataset ds;
  ds.name = "synthetic-gaussian";
  if (rho >= 0.0) {
    Eigen::RowVectorXd g(d);
    for (Eigen::Index j = 0; j < d; ++j) g[j] = rng.normal();
    ds.inputs = std::sqrt(1.0 - rho) * e;
    ds.inputs.rowwise() += std::sqrt(rho) * g;
  } else {
    const double t = rho / (1.0 - rho);
    const double k = 1.0 - std::sqrt(1.0 + static_cast<double>(m) * t);
    const Eigen::RowVectorXd mean = e.colwise().mean();
    ds.inputs = (e.rowwise() - k * mean) / std::sqrt(1.0 + t);
  }
  ds.labels.resize(static_cast<std::size_t>(m));
  for (Eigen::Index i = 0; i < m; ++i) ds.labels[i] = static_cast<int>(i % 10);
  return ds;
}

}  // namespace critprop
