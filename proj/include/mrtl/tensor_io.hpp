#pragma once

// "MRTN" binary tensor files:
//   bytes 0..3   magic "MRTN"
//   u32 LE       mode count N
//   N x u32 LE   mode sizes
//   f64 LE       payload, row-major
//
// Matrices are stored as order-2 tensors. CSV matrices are plain
// comma-separated rows; lines starting with '#' are skipped.

#include <filesystem>
#include <string>
#include <vector>

#include "mrtl/tensor.hpp"

namespace mrtl {

std::vector<unsigned char> encode_tensor(const DenseTensor& t);
DenseTensor decode_tensor(const std::vector<unsigned char>& bytes);

void write_tensor(const std::filesystem::path& path, const DenseTensor& t);
DenseTensor read_tensor(const std::filesystem::path& path);

void write_matrix(const std::filesystem::path& path, const Matrix& m);
Matrix read_matrix(const std::filesystem::path& path);

DenseTensor as_tensor(const Matrix& m);
Matrix as_matrix(const DenseTensor& t);

Matrix read_csv_matrix(const std::filesystem::path& path);
void write_csv_matrix(const std::filesystem::path& path, const Matrix& m);

// Shortest round-trip decimal representation.
std::string format_double(double v);

}  // namespace mrtl
