#pragma once

#include <initializer_list>
#include <string>
#include <vector>

#include <cdantzig/cdantzig.hpp>

namespace testing_helpers {

inline cdantzig::EnvDataset make_env(const std::string& label, std::initializer_list<std::initializer_list<double>> x,
                                     std::initializer_list<double> y) {
  cdantzig::EnvDataset e;
  e.env_label = label;
  const auto n = static_cast<Eigen::Index>(y.size());
  const auto p = x.size() == 0 ? 0 : static_cast<Eigen::Index>(x.begin()->size());
  e.X.resize(n, p);
  e.Y.resize(n);
  Eigen::Index i = 0;
  for (const auto& row : x) {
    Eigen::Index j = 0;
    for (double v : row) e.X(i, j++) = v;
    ++i;
  }
  i = 0;
  for (double v : y) e.Y(i++) = v;
  return e;
}

inline cdantzig::Matrix mat(std::initializer_list<std::initializer_list<double>> rows) {
  cdantzig::Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.begin()->size()));
  Eigen::Index i = 0;
  for (const auto& r : rows) {
    Eigen::Index j = 0;
    for (double v : r) m(i, j++) = v;
    ++i;
  }
  return m;
}

inline cdantzig::Vector vec(std::initializer_list<double> v) {
  cdantzig::Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

/// Two-environment gram holding just (Z, G).
inline cdantzig::GramShift gram_of(const cdantzig::Vector& z, const cdantzig::Matrix& g) {
  cdantzig::GramShift out;
  out.p = static_cast<int>(z.size());
  out.labels = {"1", "2"};
  out.sample_sizes = {1, 1};
  out.per_env = {{z, g}};
  return out;
}

}  // namespace testing_helpers
