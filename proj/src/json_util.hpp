// dpvae/src/json_util.hpp

// Copyright 2026 The dpvae Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <stdexcept>
#include <utility>

#include <Eigen/Core>
#include <json.hpp>

namespace dpvae::detail {

inline nlohmann::json vector_to_json(const Eigen::VectorXd& v) {
  nlohmann::json arr = nlohmann::json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v(i));
  return arr;
}

inline nlohmann::json matrix_to_json(const Eigen::MatrixXd& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline Eigen::VectorXd vector_from_json(const nlohmann::json& arr) {
  Eigen::VectorXd v(arr.size());
  for (std::size_t i = 0; i < arr.size(); ++i) v(i) = arr[i].get<double>();
  return v;
}

inline Eigen::MatrixXd matrix_from_json(const nlohmann::json& rows,
                                        int expect_cols) {
  const Eigen::Index R = static_cast<Eigen::Index>(rows.size());
  Eigen::MatrixXd m(R, expect_cols);
  for (Eigen::Index i = 0; i < R; ++i) {
    const auto& row = rows[i];
    if (static_cast<int>(row.size()) != expect_cols) {
      throw std::invalid_argument("checkpoint: ragged matrix row");
    }
    for (int j = 0; j < expect_cols; ++j) m(i, j) = row[j].get<double>();
  }
  return m;
}

}  // namespace dpvae::detail
