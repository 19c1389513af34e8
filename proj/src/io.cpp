#include "decompose/io.hpp"

#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <vector>

#include <json.hpp>

namespace decompose {

namespace {

using nlohmann::json;

[[noreturn]] void parse_fail(const std::string& path, long line, long col,
                             const std::string& what) {
  throw std::runtime_error(path + ":" + std::to_string(line) + ":" +
                           std::to_string(col) + ": " + what);
}

// Parse one CSV line of doubles; `line` is 1-based for diagnostics.
void parse_row(const std::string& path, const std::string& text, long line,
               std::vector<double>& out) {
  out.clear();
  const char* p = text.c_str();
  long col = 1;
  while (true) {
    char* end = nullptr;
    errno = 0;
    const double v = std::strtod(p, &end);
    if (end == p || errno == ERANGE) {
      parse_fail(path, line, col, "expected a number");
    }
    out.push_back(v);
    col += static_cast<long>(end - p);
    p = end;
    while (*p == ' ' || *p == '\t') { ++p; ++col; }
    if (*p == '\0' || *p == '\r') break;
    if (*p != ',') parse_fail(path, line, col, "expected ','");
    ++p;
    ++col;
  }
}

std::ofstream open_out(const std::string& path, bool binary = false) {
  std::ofstream out(path, binary ? std::ios::binary : std::ios::out);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  return out;
}

std::ifstream open_in(const std::string& path, bool binary = false) {
  std::ifstream in(path, binary ? std::ios::binary : std::ios::in);
  if (!in) throw std::runtime_error("cannot open for reading: " + path);
  return in;
}

bool has_suffix(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() &&
         s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace

void write_matrix_csv(const std::string& path, const Matrix& m) {
  auto out = open_out(path);
  out << m.rows() << "," << m.cols() << "\n";
  char buf[32];
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) {
      std::snprintf(buf, sizeof(buf), "%.17g", m(i, j));
      out << (j ? "," : "") << buf;
    }
    out << "\n";
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

Matrix read_matrix_csv(const std::string& path) {
  auto in = open_in(path);
  std::string line;
  if (!std::getline(in, line)) parse_fail(path, 1, 1, "missing header");
  long rows = 0, cols = 0;
  if (std::sscanf(line.c_str(), "%ld,%ld", &rows, &cols) != 2 || rows < 1 ||
      cols < 1) {
    parse_fail(path, 1, 1, "header must be 'rows,cols'");
  }
  Matrix m(rows, cols);
  std::vector<double> row;
  for (long i = 0; i < rows; ++i) {
    if (!std::getline(in, line)) {
      parse_fail(path, i + 2, 1, "unexpected end of file");
    }
    parse_row(path, line, i + 2, row);
    if (row.size() != static_cast<size_t>(cols)) {
      parse_fail(path, i + 2, 1,
                 "expected " + std::to_string(cols) + " values, got " +
                     std::to_string(row.size()));
    }
    for (long j = 0; j < cols; ++j) m(i, j) = row[static_cast<size_t>(j)];
  }
  return m;
}

void write_matrix_binary(const std::string& path, const Matrix& m) {
  {
    auto out = open_out(path, true);
    out.write(reinterpret_cast<const char*>(m.data()),
              static_cast<std::streamsize>(sizeof(double)) * m.size());
    if (!out) throw std::runtime_error("write failed: " + path);
  }
  json sidecar{{"rows", m.rows()},
               {"cols", m.cols()},
               {"dtype", "f64"},
               {"order", "row-major"}};
  auto out = open_out(path + ".json");
  out << sidecar.dump(2) << "\n";
}

Matrix read_matrix_binary(const std::string& path) {
  json sidecar;
  {
    auto in = open_in(path + ".json");
    in >> sidecar;
  }
  if (sidecar.value("dtype", "") != "f64" ||
      sidecar.value("order", "") != "row-major") {
    throw std::runtime_error(path + ".json: unsupported dtype/order");
  }
  const Index rows = sidecar.at("rows").get<Index>();
  const Index cols = sidecar.at("cols").get<Index>();
  if (rows < 1 || cols < 1) {
    throw std::runtime_error(path + ".json: invalid dimensions");
  }
  Matrix m(rows, cols);
  auto in = open_in(path, true);
  in.read(reinterpret_cast<char*>(m.data()),
          static_cast<std::streamsize>(sizeof(double)) * m.size());
  if (in.gcount() !=
      static_cast<std::streamsize>(sizeof(double)) * m.size()) {
    throw std::runtime_error(path + ": truncated binary matrix");
  }
  return m;
}

void write_matrix_auto(const std::string& path, const Matrix& m) {
  if (has_suffix(path, ".bin")) {
    write_matrix_binary(path, m);
  } else {
    write_matrix_csv(path, m);
  }
}

Matrix read_matrix_auto(const std::string& path) {
  if (has_suffix(path, ".bin")) return read_matrix_binary(path);
  return read_matrix_csv(path);
}

void write_vector_csv(const std::string& path, const Vector& v) {
  write_matrix_csv(path, Matrix(v));
}

Vector read_vector_csv(const std::string& path) {
  const Matrix m = read_matrix_csv(path);
  if (m.cols() != 1) {
    throw std::runtime_error(path + ": expected a single-column vector");
  }
  return Vector(m.col(0));
}

}  // namespace decompose
