// dpvae/dataset.hpp

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

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace dpvae {

// Feature rows with optional integer labels. Image features are normalized
// to [-1, 1] at load time; class_ids holds the sorted distinct labels.
struct Dataset {
  Eigen::MatrixXd features;
  std::vector<std::int64_t> labels;
  std::vector<std::int64_t> class_ids;

  bool has_labels() const { return !labels.empty(); }
  std::int64_t rows() const { return features.rows(); }
};

// Header of an IDX file: the magic word (type in the third byte, rank in
// the fourth) followed by one big-endian u32 size per dimension.
struct IdxHeader {
  std::uint32_t magic = 0;
  std::vector<std::uint32_t> dims;
};

// Parses magic plus dimension sizes, leaving the stream at the payload.
// Rejects magics whose reserved bytes are nonzero or whose element type is
// not u8, naming the offending value.
IdxHeader read_idx_header(std::istream& in);

// Serializes a header back to bytes; encode(read(x)) reproduces x.
std::vector<std::uint8_t> encode_idx_header(const IdxHeader& header);

// Loads an IDX u8 image tensor (magic 0x00000803, dims N x rows x cols)
// and its label vector (magic 0x00000801). Pixels map through
// 2 * (p / 255) - 1, images flatten row-major to one feature row each.
Dataset load_idx(const std::string& images_path,
                 const std::string& labels_path);

// Loads a rectangular numeric CSV with a header row. When label_column
// names a header entry that column is parsed as integer labels and the
// remaining columns, in header order, become features.
Dataset load_csv(const std::string& path, const std::string& label_column = "");

// One milestone: from `epoch` on (until the next milestone) exactly the
// classes listed are active. Classes are kept sorted.
struct ScheduleEntry {
  int epoch = 0;
  std::vector<std::int64_t> active_classes;
};

// Epoch-indexed growth of the visible label set.
struct IncrementalSchedule {
  std::vector<ScheduleEntry> entries;

  // Throws std::invalid_argument unless epochs are strictly increasing and
  // every milestone's class set contains the previous one.
  void validate() const;

  // The class set governing `epoch`: the last milestone at or before it,
  // or the first milestone when the epoch precedes all of them.
  const std::vector<std::int64_t>& active_at(int epoch) const;
};

// Rows of `data` whose label is active at `epoch`. Requires labels.
Dataset apply_schedule(const Dataset& data, const IncrementalSchedule& schedule,
                       int epoch);

}  // namespace dpvae
