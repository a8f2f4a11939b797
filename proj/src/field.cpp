// SPDX-License-Identifier: Apache-2.0
#include "rvar/field.hpp"

#include "rvar/container.hpp"
#include "rvar/errors.hpp"

namespace rvar {

void FieldSeries::validate() const {
  if (grid_h <= 0 || grid_w <= 0) throw data_error("field: empty grid");
  if (data.cols() != static_cast<long>(grid_h) * grid_w)
    throw data_error("field: data width != grid_h * grid_w");
  if (data.rows() == 0) throw data_error("field: no snapshots");
  if (day_index.size() != static_cast<std::size_t>(data.rows()))
    throw data_error("field: day_index length != snapshot count");
  for (std::size_t i = 1; i < day_index.size(); ++i)
    if (day_index[i] != day_index[i - 1] + 1)
      throw data_error("field: day_index must increase with unit stride");
  if (!data.allFinite()) throw data_error("field: non-finite values");
}

FieldSeries FieldSeries::slice(int begin, int len) const {
  if (begin < 0 || len <= 0 || begin + len > steps())
    throw data_error("field: slice out of range");
  FieldSeries out;
  out.data = data.middleRows(begin, len);
  out.day_index.assign(day_index.begin() + begin,
                       day_index.begin() + begin + len);
  out.grid_h = grid_h;
  out.grid_w = grid_w;
  return out;
}

void FieldSeries::save(const std::string& path) const {
  validate();
  Container c;
  c.add_tensor3("field", data, static_cast<std::uint64_t>(grid_h),
                static_cast<std::uint64_t>(grid_w));
  c.add_i64("day_index", day_index);
  c.write(path);
}

FieldSeries FieldSeries::load(const std::string& path) {
  Container c = Container::read(path);
  FieldSeries s;
  std::uint64_t h = 0, w = 0;
  s.data = c.get_tensor3("field", &h, &w);
  s.grid_h = static_cast<int>(h);
  s.grid_w = static_cast<int>(w);
  s.day_index = c.get_i64("day_index");
  s.validate();
  return s;
}

}  // namespace rvar
