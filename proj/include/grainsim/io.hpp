#pragma once

#include <string>
#include <vector>

#include "grainsim/types.hpp"

namespace grainsim {

// Trajectory file: text, full double precision so replays are exact.
//
//   GSIMTRAJ 1
//   task <id>
//   horizon <rows>
//   dims <d_a>
//   min <d_a numbers>
//   max <d_a numbers>
//   boundaries <k numbers>   (optional; cumulative sub-task end rows)
//   end
//   <one row of d_a numbers per control step>

void save_trajectory(const Trajectory& t, const std::string& path);
Trajectory load_trajectory(const std::string& path);

/// Write a file atomically (stage to <path>.tmp then rename).
void atomic_write_text(const std::string& path, const std::string& content);

/// Minimal CSV writer: header once, then append rows.
class CsvWriter {
 public:
  CsvWriter(const std::string& path, const std::vector<std::string>& columns);
  void row(const std::vector<double>& values);
  void row_raw(const std::string& line);
  void close();
  const std::string& path() const { return path_; }

 private:
  std::string path_;
  std::string buf_;
  size_t cols_;
};

std::string format_double(double v);  // shortest round-trip-exact form

}  // namespace grainsim
