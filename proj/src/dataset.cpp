// dpvae/dataset.cpp

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

#include "dpvae/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <istream>
#include <set>
#include <sstream>
#include <stdexcept>

namespace dpvae {

namespace {

std::string hex_u32(std::uint32_t v) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "0x%08x", v);
  return buf;
}

std::uint32_t read_u32_be(std::istream& in, const char* what) {
  unsigned char buf[4];
  in.read(reinterpret_cast<char*>(buf), 4);
  if (in.gcount() != 4) {
    throw std::invalid_argument(std::string("idx: truncated ") + what);
  }
  return (static_cast<std::uint32_t>(buf[0]) << 24) |
         (static_cast<std::uint32_t>(buf[1]) << 16) |
         (static_cast<std::uint32_t>(buf[2]) << 8) |
         static_cast<std::uint32_t>(buf[3]);
}

void push_u32_be(std::vector<std::uint8_t>* out, std::uint32_t v) {
  out->push_back(static_cast<std::uint8_t>((v >> 24) & 0xff));
  out->push_back(static_cast<std::uint8_t>((v >> 16) & 0xff));
  out->push_back(static_cast<std::uint8_t>((v >> 8) & 0xff));
  out->push_back(static_cast<std::uint8_t>(v & 0xff));
}

std::vector<std::uint8_t> read_payload(std::istream& in, std::size_t n,
                                       const std::string& path) {
  std::vector<std::uint8_t> bytes(n);
  in.read(reinterpret_cast<char*>(bytes.data()),
          static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in.gcount()) != n) {
    throw std::invalid_argument("idx: truncated payload in " + path);
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw std::invalid_argument("idx: trailing bytes in " + path);
  }
  return bytes;
}

std::vector<std::int64_t> distinct_sorted(const std::vector<std::int64_t>& v) {
  std::set<std::int64_t> s(v.begin(), v.end());
  return {s.begin(), s.end()};
}

}  // namespace

IdxHeader read_idx_header(std::istream& in) {
  IdxHeader header;
  header.magic = read_u32_be(in, "magic");
  if ((header.magic & 0xffff0000u) != 0) {
    throw std::invalid_argument("idx: bad magic " + hex_u32(header.magic) +
                                " (reserved bytes set)");
  }
  const std::uint32_t type = (header.magic >> 8) & 0xff;
  if (type != 0x08) {
    throw std::invalid_argument("idx: bad magic " + hex_u32(header.magic) +
                                " (element type is not u8)");
  }
  const std::uint32_t rank = header.magic & 0xff;
  if (rank == 0) {
    throw std::invalid_argument("idx: bad magic " + hex_u32(header.magic) +
                                " (zero dimensions)");
  }
  for (std::uint32_t d = 0; d < rank; ++d) {
    header.dims.push_back(read_u32_be(in, "dimension size"));
  }
  return header;
}

std::vector<std::uint8_t> encode_idx_header(const IdxHeader& header) {
  std::vector<std::uint8_t> out;
  push_u32_be(&out, header.magic);
  for (std::uint32_t d : header.dims) push_u32_be(&out, d);
  return out;
}

Dataset load_idx(const std::string& images_path,
                 const std::string& labels_path) {
  std::ifstream images(images_path, std::ios::binary);
  if (!images) {
    throw std::runtime_error("idx: cannot open " + images_path);
  }
  IdxHeader ih = read_idx_header(images);
  if (ih.magic != 0x00000803u) {
    throw std::invalid_argument("idx: bad magic " + hex_u32(ih.magic) +
                                " in " + images_path +
                                ", expected 0x00000803");
  }
  const std::size_t n = ih.dims[0];
  const std::size_t rows = ih.dims[1];
  const std::size_t cols = ih.dims[2];
  if (rows == 0 || cols == 0) {
    throw std::invalid_argument("idx: zero-sized image dimensions in " +
                                images_path);
  }
  const std::vector<std::uint8_t> pixels =
      read_payload(images, n * rows * cols, images_path);

  std::ifstream labels(labels_path, std::ios::binary);
  if (!labels) {
    throw std::runtime_error("idx: cannot open " + labels_path);
  }
  IdxHeader lh = read_idx_header(labels);
  if (lh.magic != 0x00000801u) {
    throw std::invalid_argument("idx: bad magic " + hex_u32(lh.magic) +
                                " in " + labels_path +
                                ", expected 0x00000801");
  }
  if (lh.dims[0] != n) {
    throw std::invalid_argument(
        "idx: " + images_path + " holds " + std::to_string(n) +
        " images but " + labels_path + " holds " +
        std::to_string(lh.dims[0]) + " labels");
  }
  const std::vector<std::uint8_t> raw_labels =
      read_payload(labels, n, labels_path);

  Dataset data;
  const std::size_t dim = rows * cols;
  data.features.resize(static_cast<Eigen::Index>(n),
                       static_cast<Eigen::Index>(dim));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t d = 0; d < dim; ++d) {
      data.features(static_cast<Eigen::Index>(i),
                    static_cast<Eigen::Index>(d)) =
          2.0 * (pixels[i * dim + d] / 255.0) - 1.0;
    }
  }
  data.labels.assign(raw_labels.begin(), raw_labels.end());
  data.class_ids = distinct_sorted(data.labels);
  return data;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) {
    // Trim surrounding spaces; cells are plain numbers or names.
    const auto first = field.find_first_not_of(" \t");
    const auto last = field.find_last_not_of(" \t");
    fields.push_back(first == std::string::npos
                         ? std::string()
                         : field.substr(first, last - first + 1));
  }
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

double parse_double(const std::string& cell, std::size_t row) {
  double value = 0.0;
  const char* begin = cell.data();
  const char* end = begin + cell.size();
  const auto res = std::from_chars(begin, end, value);
  if (res.ec != std::errc() || res.ptr != end || cell.empty()) {
    throw std::invalid_argument("csv: row " + std::to_string(row) +
                                ": cell \"" + cell + "\" is not numeric");
  }
  return value;
}

std::int64_t parse_label(const std::string& cell, std::size_t row) {
  std::int64_t value = 0;
  const char* begin = cell.data();
  const char* end = begin + cell.size();
  const auto res = std::from_chars(begin, end, value);
  if (res.ec != std::errc() || res.ptr != end || cell.empty()) {
    throw std::invalid_argument("csv: row " + std::to_string(row) +
                                ": label \"" + cell + "\" is not an integer");
  }
  return value;
}

}  // namespace

Dataset load_csv(const std::string& path, const std::string& label_column) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("csv: cannot open " + path);
  }
  std::string line;
  if (!std::getline(in, line)) {
    throw std::invalid_argument("csv: " + path + " is empty");
  }
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const std::vector<std::string> header = split_csv_line(line);
  const std::size_t width = header.size();

  std::ptrdiff_t label_idx = -1;
  if (!label_column.empty()) {
    const auto it = std::find(header.begin(), header.end(), label_column);
    if (it == header.end()) {
      throw std::invalid_argument("csv: no column named \"" + label_column +
                                  "\" in " + path);
    }
    label_idx = it - header.begin();
  }

  std::vector<std::vector<double>> rows;
  std::vector<std::int64_t> labels;
  // Rows are numbered like the file, header included, so errors point at
  // the line an editor shows.
  std::size_t row_number = 1;
  while (std::getline(in, line)) {
    ++row_number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    const std::vector<std::string> cells = split_csv_line(line);
    if (cells.size() != width) {
      throw std::invalid_argument(
          "csv: row " + std::to_string(row_number) + " has " +
          std::to_string(cells.size()) + " fields, expected " +
          std::to_string(width));
    }
    std::vector<double> feat;
    feat.reserve(width);
    for (std::size_t c = 0; c < width; ++c) {
      if (static_cast<std::ptrdiff_t>(c) == label_idx) {
        labels.push_back(parse_label(cells[c], row_number));
      } else {
        feat.push_back(parse_double(cells[c], row_number));
      }
    }
    rows.push_back(std::move(feat));
  }

  Dataset data;
  const std::size_t feat_width = label_idx >= 0 ? width - 1 : width;
  data.features.resize(static_cast<Eigen::Index>(rows.size()),
                       static_cast<Eigen::Index>(feat_width));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t c = 0; c < feat_width; ++c) {
      data.features(static_cast<Eigen::Index>(i),
                    static_cast<Eigen::Index>(c)) = rows[i][c];
    }
  }
  data.labels = std::move(labels);
  data.class_ids = distinct_sorted(data.labels);
  return data;
}

void IncrementalSchedule::validate() const {
  if (entries.empty()) {
    throw std::invalid_argument("schedule: no milestones");
  }
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (entries[i].active_classes.empty()) {
      throw std::invalid_argument("schedule: milestone " + std::to_string(i) +
                                  " has no classes");
    }
    if (!std::is_sorted(entries[i].active_classes.begin(),
                        entries[i].active_classes.end())) {
      throw std::invalid_argument("schedule: milestone " + std::to_string(i) +
                                  " classes must be sorted");
    }
    if (i == 0) continue;
    if (entries[i].epoch <= entries[i - 1].epoch) {
      throw std::invalid_argument(
          "schedule: milestone epochs must strictly increase");
    }
    if (!std::includes(entries[i].active_classes.begin(),
                       entries[i].active_classes.end(),
                       entries[i - 1].active_classes.begin(),
                       entries[i - 1].active_classes.end())) {
      throw std::invalid_argument(
          "schedule: class sets may only grow across milestones");
    }
  }
}

const std::vector<std::int64_t>& IncrementalSchedule::active_at(
    int epoch) const {
  if (entries.empty()) {
    throw std::invalid_argument("schedule: no milestones");
  }
  const ScheduleEntry* active = &entries.front();
  for (const ScheduleEntry& e : entries) {
    if (e.epoch <= epoch) active = &e;
  }
  return active->active_classes;
}

Dataset apply_schedule(const Dataset& data, const IncrementalSchedule& schedule,
                       int epoch) {
  if (!data.has_labels()) {
    throw std::invalid_argument("schedule: dataset has no labels");
  }
  schedule.validate();
  const std::vector<std::int64_t>& active = schedule.active_at(epoch);

  std::vector<Eigen::Index> keep;
  for (Eigen::Index i = 0; i < data.features.rows(); ++i) {
    if (std::binary_search(active.begin(), active.end(), data.labels[i])) {
      keep.push_back(i);
    }
  }
  Dataset out;
  out.features.resize(static_cast<Eigen::Index>(keep.size()),
                      data.features.cols());
  out.labels.reserve(keep.size());
  for (std::size_t i = 0; i < keep.size(); ++i) {
    out.features.row(static_cast<Eigen::Index>(i)) = data.features.row(keep[i]);
    out.labels.push_back(data.labels[keep[i]]);
  }
  out.class_ids = distinct_sorted(out.labels);
  return out;
}

}  // namespace dpvae
