// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

namespace rvar {

// Named-block binary container used for every on-disk artifact.
//
// Layout (all integers little endian):
//   magic "RVAR", format version u32, then a sequence of blocks:
//     name length u32, name bytes,
//     dtype u32 (0 = f64, 1 = i64),
//     rank u64, dims u64[rank],
//     payload, row major.
//
// The dtype tag is needed because index-like blocks (day_index, sensor
// locations) are integral while everything else is f64.
class Container {
 public:
  enum class DType : std::uint32_t { f64 = 0, i64 = 1 };

  struct Block {
    std::string name;
    DType dtype = DType::f64;
    std::vector<std::uint64_t> dims;
    std::vector<double> f64;
    std::vector<std::int64_t> i64;

    std::uint64_t count() const;
  };

  static constexpr std::uint32_t kVersion = 1;

  void add_scalar(const std::string& name, double value);
  void add_vector(const std::string& name, const Eigen::VectorXd& v);
  // Serialized row major as a rank-2 block.
  void add_matrix(const std::string& name, const Eigen::MatrixXd& m);
  // Matrix of flattened snapshots (one row per step), stored rank 3.
  void add_tensor3(const std::string& name, const Eigen::MatrixXd& rows_flat,
                   std::uint64_t h, std::uint64_t w);
  void add_i64(const std::string& name, const std::vector<std::int64_t>& v);

  bool has(const std::string& name) const;
  double get_scalar(const std::string& name) const;
  Eigen::VectorXd get_vector(const std::string& name) const;
  Eigen::MatrixXd get_matrix(const std::string& name) const;
  // Rank-3 block returned as [dim0 x (dim1*dim2)] with dims reported back.
  Eigen::MatrixXd get_tensor3(const std::string& name, std::uint64_t* h,
                              std::uint64_t* w) const;
  std::vector<std::int64_t> get_i64(const std::string& name) const;

  const std::vector<Block>& blocks() const { return blocks_; }

  void write(const std::string& path) const;
  static Container read(const std::string& path);

 private:
  const Block& find(const std::string& name) const;
  std::vector<Block> blocks_;
};

// FNV-1a content hash of a file, for stage manifests.
std::uint64_t hash_file(const std::string& path);

}  // namespace rvar
