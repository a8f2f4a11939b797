// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <random>

#include "rvar/container.hpp"
#include "rvar/errors.hpp"
#include "rvar/field.hpp"

using namespace rvar;

namespace {

std::string temp_path(const char* stem) {
  return std::string("./") + stem + ".rvar.tmp";
}

}  // namespace

TEST_CASE("container round trip preserves blocks bit-exactly") {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> d(0.0, 3.0);
  Eigen::MatrixXd m(5, 9);
  for (long i = 0; i < m.size(); ++i) m(i) = d(rng);
  Eigen::VectorXd v(11);
  for (long i = 0; i < v.size(); ++i) v(i) = d(rng);
  std::vector<std::int64_t> idx = {-3, 0, 7, 123456789012345};

  Container c;
  c.add_matrix("modes", m);
  c.add_vector("sigma", v);
  c.add_i64("day_index", idx);
  c.add_scalar("alpha", 0.125);
  const std::string path = temp_path("roundtrip");
  c.write(path);

  Container r = Container::read(path);
  CHECK(r.get_matrix("modes") == m);
  CHECK(r.get_vector("sigma") == v);
  CHECK(r.get_i64("day_index") == idx);
  CHECK(r.get_scalar("alpha") == 0.125);
  CHECK(r.has("modes"));
  CHECK(!r.has("absent"));
  std::remove(path.c_str());
}

TEST_CASE("container rejects corrupt and missing input") {
  CHECK_THROWS_AS(Container::read("./no_such_file.rvar"), data_error);

  const std::string path = temp_path("corrupt");
  {
    std::FILE* f = std::fopen(path.c_str(), "wb");
    std::fputs("not a container at all", f);
    std::fclose(f);
  }
  CHECK_THROWS_AS(Container::read(path), data_error);
  std::remove(path.c_str());
}

TEST_CASE("container type and shape guards") {
  Container c;
  c.add_i64("ints", {1, 2});
  c.add_vector("vec", Eigen::VectorXd::Ones(3));
  CHECK_THROWS_AS(c.get_vector("ints"), data_error);
  CHECK_THROWS_AS(c.get_matrix("vec"), data_error);
  CHECK_THROWS_AS(c.get_scalar("vec"), data_error);
  CHECK_THROWS_AS(c.get_i64("vec"), data_error);
  CHECK_THROWS_AS(c.get_vector("missing"), data_error);
}

TEST_CASE("field series save/load round trip and validation") {
  FieldSeries s;
  s.grid_h = 3;
  s.grid_w = 4;
  s.data = Eigen::MatrixXd::Random(6, 12);
  s.day_index = {10, 11, 12, 13, 14, 15};
  const std::string path = temp_path("field");
  s.save(path);
  FieldSeries r = FieldSeries::load(path);
  CHECK(r.data == s.data);
  CHECK(r.day_index == s.day_index);
  CHECK(r.grid_h == 3);
  CHECK(r.grid_w == 4);
  std::remove(path.c_str());

  FieldSeries bad = s;
  bad.day_index[3] = 99;  // breaks unit stride
  CHECK_THROWS_AS(bad.validate(), data_error);

  FieldSeries nonfinite = s;
  nonfinite.data(2, 5) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(nonfinite.validate(), data_error);
}

TEST_CASE("field slice keeps day alignment") {
  FieldSeries s;
  s.grid_h = 2;
  s.grid_w = 2;
  s.data = Eigen::MatrixXd::Random(10, 4);
  s.day_index = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  FieldSeries mid = s.slice(3, 4);
  CHECK(mid.steps() == 4);
  CHECK(mid.day_index.front() == 3);
  CHECK(mid.data.row(0) == s.data.row(3));
  CHECK_THROWS_AS(s.slice(8, 5), data_error);
}
