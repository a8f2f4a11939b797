// SPDX-License-Identifier: Apache-2.0
#include "rvar/container.hpp"

#include <cstring>
#include <fstream>

#include "rvar/errors.hpp"

namespace rvar {

namespace {

constexpr char kMagic[4] = {'R', 'V', 'A', 'R'};

template <typename T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T take(std::istream& is) {
  T v;
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw data_error("container: truncated file");
  return v;
}

}  // namespace

std::uint64_t Container::Block::count() const {
  std::uint64_t n = 1;
  for (auto d : dims) n *= d;
  return n;
}

void Container::add_scalar(const std::string& name, double value) {
  Block b;
  b.name = name;
  b.dims = {1};
  b.f64 = {value};
  blocks_.push_back(std::move(b));
}

void Container::add_vector(const std::string& name, const Eigen::VectorXd& v) {
  Block b;
  b.name = name;
  b.dims = {static_cast<std::uint64_t>(v.size())};
  b.f64.assign(v.data(), v.data() + v.size());
  blocks_.push_back(std::move(b));
}

void Container::add_matrix(const std::string& name, const Eigen::MatrixXd& m) {
  Block b;
  b.name = name;
  b.dims = {static_cast<std::uint64_t>(m.rows()),
            static_cast<std::uint64_t>(m.cols())};
  b.f64.resize(static_cast<std::size_t>(m.size()));
  Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                           Eigen::RowMajor>>(b.f64.data(), m.rows(), m.cols()) =
      m;
  blocks_.push_back(std::move(b));
}

void Container::add_tensor3(const std::string& name,
                            const Eigen::MatrixXd& rows_flat, std::uint64_t h,
                            std::uint64_t w) {
  if (static_cast<std::uint64_t>(rows_flat.cols()) != h * w)
    throw data_error("container: tensor3 row width != h*w");
  Block b;
  b.name = name;
  b.dims = {static_cast<std::uint64_t>(rows_flat.rows()), h, w};
  b.f64.resize(static_cast<std::size_t>(rows_flat.size()));
  Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                           Eigen::RowMajor>>(b.f64.data(), rows_flat.rows(),
                                             rows_flat.cols()) = rows_flat;
  blocks_.push_back(std::move(b));
}

void Container::add_i64(const std::string& name,
                        const std::vector<std::int64_t>& v) {
  Block b;
  b.name = name;
  b.dtype = DType::i64;
  b.dims = {static_cast<std::uint64_t>(v.size())};
  b.i64 = v;
  blocks_.push_back(std::move(b));
}

bool Container::has(const std::string& name) const {
  for (const auto& b : blocks_)
    if (b.name == name) return true;
  return false;
}

const Container::Block& Container::find(const std::string& name) const {
  for (const auto& b : blocks_)
    if (b.name == name) return b;
  throw data_error("container: missing block '" + name + "'");
}

double Container::get_scalar(const std::string& name) const {
  const Block& b = find(name);
  if (b.dtype != DType::f64 || b.count() != 1)
    throw data_error("container: block '" + name + "' is not a scalar");
  return b.f64[0];
}

Eigen::VectorXd Container::get_vector(const std::string& name) const {
  const Block& b = find(name);
  if (b.dtype != DType::f64 || b.dims.size() != 1)
    throw data_error("container: block '" + name + "' is not a f64 vector");
  return Eigen::Map<const Eigen::VectorXd>(b.f64.data(),
                                           static_cast<long>(b.f64.size()));
}

Eigen::MatrixXd Container::get_matrix(const std::string& name) const {
  const Block& b = find(name);
  if (b.dtype != DType::f64 || b.dims.size() != 2)
    throw data_error("container: block '" + name + "' is not a f64 matrix");
  return Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                        Eigen::RowMajor>>(
      b.f64.data(), static_cast<long>(b.dims[0]), static_cast<long>(b.dims[1]));
}

Eigen::MatrixXd Container::get_tensor3(const std::string& name,
                                       std::uint64_t* h,
                                       std::uint64_t* w) const {
  const Block& b = find(name);
  if (b.dtype != DType::f64 || b.dims.size() != 3)
    throw data_error("container: block '" + name + "' is not rank 3");
  if (h) *h = b.dims[1];
  if (w) *w = b.dims[2];
  return Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                        Eigen::RowMajor>>(
      b.f64.data(), static_cast<long>(b.dims[0]),
      static_cast<long>(b.dims[1] * b.dims[2]));
}

std::vector<std::int64_t> Container::get_i64(const std::string& name) const {
  const Block& b = find(name);
  if (b.dtype != DType::i64)
    throw data_error("container: block '" + name + "' is not i64");
  return b.i64;
}

void Container::write(const std::string& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw data_error("container: cannot open '" + path + "' for write");
  os.write(kMagic, 4);
  put<std::uint32_t>(os, kVersion);
  for (const auto& b : blocks_) {
    put<std::uint32_t>(os, static_cast<std::uint32_t>(b.name.size()));
    os.write(b.name.data(), static_cast<std::streamsize>(b.name.size()));
    put<std::uint32_t>(os, static_cast<std::uint32_t>(b.dtype));
    put<std::uint64_t>(os, b.dims.size());
    for (auto d : b.dims) put<std::uint64_t>(os, d);
    if (b.dtype == DType::f64) {
      os.write(reinterpret_cast<const char*>(b.f64.data()),
               static_cast<std::streamsize>(b.f64.size() * sizeof(double)));
    } else {
      os.write(
          reinterpret_cast<const char*>(b.i64.data()),
          static_cast<std::streamsize>(b.i64.size() * sizeof(std::int64_t)));
    }
  }
  if (!os) throw data_error("container: write failed for '" + path + "'");
}

Container Container::read(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw data_error("container: cannot open '" + path + "'");
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0)
    throw data_error("container: bad magic in '" + path + "'");
  auto version = take<std::uint32_t>(is);
  if (version != kVersion)
    throw data_error("container: unsupported version " +
                     std::to_string(version));
  Container c;
  while (is.peek() != EOF) {
    Block b;
    auto name_len = take<std::uint32_t>(is);
    b.name.resize(name_len);
    is.read(b.name.data(), name_len);
    auto dtype = take<std::uint32_t>(is);
    if (dtype > 1) throw data_error("container: unknown dtype");
    b.dtype = static_cast<DType>(dtype);
    auto rank = take<std::uint64_t>(is);
    b.dims.resize(rank);
    for (auto& d : b.dims) d = take<std::uint64_t>(is);
    std::uint64_t n = b.count();
    if (b.dtype == DType::f64) {
      b.f64.resize(n);
      is.read(reinterpret_cast<char*>(b.f64.data()),
              static_cast<std::streamsize>(n * sizeof(double)));
    } else {
      b.i64.resize(n);
      is.read(reinterpret_cast<char*>(b.i64.data()),
              static_cast<std::streamsize>(n * sizeof(std::int64_t)));
    }
    if (!is) throw data_error("container: truncated block '" + b.name + "'");
    c.blocks_.push_back(std::move(b));
  }
  return c;
}

std::uint64_t hash_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw data_error("hash_file: cannot open '" + path + "'");
  std::uint64_t h = 1469598103934665603ull;
  char buf[65536];
  while (is.read(buf, sizeof(buf)) || is.gcount() > 0) {
    for (std::streamsize i = 0; i < is.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 1099511628211ull;
    }
    if (!is) break;
  }
  return h;
}

}  // namespace rvar
