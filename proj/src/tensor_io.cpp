#include "mrtl/tensor_io.hpp"

#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

#include "mrtl/error.hpp"

namespace mrtl {
namespace {

constexpr char kMagic[4] = {'M', 'R', 'T', 'N'};

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

void put_f64(std::vector<unsigned char>& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<unsigned char>(bits >> (8 * i)));
}

std::uint32_t get_u32(const std::vector<unsigned char>& in, std::size_t& pos) {
  if (pos + 4 > in.size()) throw IoError("MRTN: truncated header");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in[pos + i]) << (8 * i);
  pos += 4;
  return v;
}

double get_f64(const std::vector<unsigned char>& in, std::size_t& pos) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(in[pos + i]) << (8 * i);
  pos += 8;
  return std::bit_cast<double>(bits);
}

}  // namespace

std::vector<unsigned char> encode_tensor(const DenseTensor& t) {
  std::vector<unsigned char> out;
  out.reserve(8 + 4 * t.order() + 8 * t.size());
  out.insert(out.end(), kMagic, kMagic + 4);
  put_u32(out, static_cast<std::uint32_t>(t.order()));
  for (std::size_t d : t.shape()) put_u32(out, static_cast<std::uint32_t>(d));
  for (double v : t.data()) put_f64(out, v);
  return out;
}

DenseTensor decode_tensor(const std::vector<unsigned char>& bytes) {
  if (bytes.size() < 8 || std::memcmp(bytes.data(), kMagic, 4) != 0) throw IoError("MRTN: bad magic");
  std::size_t pos = 4;
  const std::uint32_t order = get_u32(bytes, pos);
  Shape shape(order);
  for (auto& d : shape) d = get_u32(bytes, pos);
  const std::size_t n = shape_size(shape);
  if (bytes.size() - pos != 8 * n) throw IoError("MRTN: payload length does not match header");
  std::vector<double> data(n);
  for (auto& v : data) {
    v = get_f64(bytes, pos);
    if (!std::isfinite(v)) throw IoError("MRTN: non-finite payload entry");
  }
  return DenseTensor(std::move(shape), std::move(data));
}

void write_tensor(const std::filesystem::path& path, const DenseTensor& t) {
  const auto bytes = encode_tensor(t);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open " + path.string() + " for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError("write failed: " + path.string());
}

DenseTensor read_tensor(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  try {
    return decode_tensor(bytes);
  } catch (const IoError& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

DenseTensor as_tensor(const Matrix& m) { return DenseTensor({m.rows(), m.cols()}, m.values()); }

Matrix as_matrix(const DenseTensor& t) {
  if (t.order() != 2) throw ShapeError("as_matrix: tensor is not order 2");
  return Matrix(t.dim(0), t.dim(1), t.values());
}

void write_matrix(const std::filesystem::path& path, const Matrix& m) { write_tensor(path, as_tensor(m)); }
Matrix read_matrix(const std::filesystem::path& path) { return as_matrix(read_tensor(path)); }

Matrix read_csv_matrix(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open " + path.string());
  std::vector<double> data;
  std::size_t rows = 0, cols = 0;
  std::string line;
  while (std::getline(f, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::size_t n = 0;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      double v = 0.0;
      const char* b = cell.data();
      while (b < cell.data() + cell.size() && *b == ' ') ++b;
      auto [p, ec] = std::from_chars(b, cell.data() + cell.size(), v);
      if (ec != std::errc() || !std::isfinite(v)) {
        throw IoError(path.string() + ": bad number '" + cell + "' on data row " + std::to_string(rows + 1));
      }
      data.push_back(v);
      ++n;
    }
    if (rows == 0) cols = n;
    if (n != cols) throw IoError(path.string() + ": ragged row " + std::to_string(rows + 1));
    ++rows;
  }
  return Matrix(rows, cols, std::move(data));
}

std::string format_double(double v) {
  char buf[32];
  auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, p);
}

void write_csv_matrix(const std::filesystem::path& path, const Matrix& m) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot open " + path.string() + " for writing");
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (std::size_t c = 0; c < m.cols(); ++c) {
      if (c) f << ',';
      f << format_double(m(r, c));
    }
    f << '\n';
  }
}

}  // namespace mrtl
