#pragma once

#include <string>

#include "decompose/types.hpp"

namespace decompose {

// Matrix file formats:
//   CSV    — first line "rows,cols", then one comma-separated row per line,
//            values printed with %.17g (bit round-trip safe).
//   binary — raw little-endian f64, row-major, with a JSON sidecar
//            "<path>.json" carrying {rows, cols, dtype, order}.
void write_matrix_csv(const std::string& path, const Matrix& m);
Matrix read_matrix_csv(const std::string& path);

void write_matrix_binary(const std::string& path, const Matrix& m);
Matrix read_matrix_binary(const std::string& path);

// Dispatch on extension: ".bin" binary, anything else CSV.
void write_matrix_auto(const std::string& path, const Matrix& m);
Matrix read_matrix_auto(const std::string& path);

void write_vector_csv(const std::string& path, const Vector& v);
Vector read_vector_csv(const std::string& path);

}  // namespace decompose
