#include "grainsim/io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "grainsim/errors.hpp"

namespace grainsim {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void atomic_write_text(const std::string& path, const std::string& content) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw ValidationError("cannot open '" + tmp + "' for writing");
    f << content;
    if (!f) throw ValidationError("write failed for '" + tmp + "'");
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw ValidationError("cannot rename '" + tmp + "' to '" + path + "'");
}

void save_trajectory(const Trajectory& t, const std::string& path) {
  std::ostringstream os;
  os << "GSIMTRAJ 1\n";
  os << "task " << (t.task_id.empty() ? "unnamed" : t.task_id) << "\n";
  os << "horizon " << t.rows() << "\n";
  os << "dims " << t.dims << "\n";
  os << "min";
  for (double v : t.lo) os << " " << format_double(v);
  os << "\nmax";
  for (double v : t.hi) os << " " << format_double(v);
  os << "\n";
  if (!t.boundaries.empty()) {
    os << "boundaries";
    for (int b : t.boundaries) os << " " << b;
    os << "\n";
  }
  os << "end\n";
  for (int r = 0; r < t.rows(); ++r) {
    const double* a = t.row(r);
    for (int d = 0; d < t.dims; ++d) os << (d ? " " : "") << format_double(a[d]);
    os << "\n";
  }
  atomic_write_text(path, os.str());
}

Trajectory load_trajectory(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open trajectory '" + path + "'");
  std::string magic, version;
  in >> magic >> version;
  if (magic != "GSIMTRAJ")
    throw ValidationError("'" + path + "' is not a trajectory file");
  Trajectory t;
  int rows = 0;
  std::string key;
  while (in >> key && key != "end") {
    if (key == "task") {
      in >> t.task_id;
    } else if (key == "horizon") {
      in >> rows;
    } else if (key == "dims") {
      in >> t.dims;
      t.lo.assign(t.dims, 0);
      t.hi.assign(t.dims, 0);
    } else if (key == "min") {
      for (double& v : t.lo) in >> v;
    } else if (key == "max") {
      for (double& v : t.hi) in >> v;
    } else if (key == "boundaries") {
      // bounded by rows; read to end of line
      std::string rest;
      std::getline(in, rest);
      std::istringstream bs(rest);
      int b;
      while (bs >> b) t.boundaries.push_back(b);
    } else {
      std::string skip;
      std::getline(in, skip);
    }
  }
  if (t.dims == 0 || rows < 0)
    throw ValidationError("trajectory '" + path + "': bad header");
  t.actions.resize(size_t(rows) * t.dims);
  for (double& v : t.actions)
    if (!(in >> v))
      throw ValidationError("trajectory '" + path + "': truncated action rows");
  return t;
}

CsvWriter::CsvWriter(const std::string& path, const std::vector<std::string>& columns)
    : path_(path), cols_(columns.size()) {
  for (size_t i = 0; i < columns.size(); ++i)
    buf_ += (i ? "," : "") + columns[i];
  buf_ += "\n";
}

void CsvWriter::row(const std::vector<double>& values) {
  if (values.size() != cols_)
    throw ValidationError("csv '" + path_ + "': column count mismatch");
  for (size_t i = 0; i < values.size(); ++i)
    buf_ += (i ? "," : "") + format_double(values[i]);
  buf_ += "\n";
}

void CsvWriter::row_raw(const std::string& line) { buf_ += line + "\n"; }

void CsvWriter::close() {
  if (!path_.empty()) {
    atomic_write_text(path_, buf_);
    path_.clear();
  }
}

}  // namespace grainsim
