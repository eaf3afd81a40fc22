// Plain-text tensor interchange: first line "TNS1 N", second line the N
// extents, then prod(I_n) values in storage order (first index fastest).
// Values are written with 17 significant digits so a write/read round trip
// is bit-exact. Parse failures carry the byte offset of the offending token.
#pragma once

#include "sntd/tensor.hpp"

#include <cctype>
#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

namespace sntd {

class TnsParseError : public std::runtime_error {
 public:
  TnsParseError(std::size_t byte_offset, const std::string& what)
      : std::runtime_error("parse error at byte " +
                           std::to_string(byte_offset) + ": " + what),
        byte_offset_(byte_offset) {}
  std::size_t byte_offset() const { return byte_offset_; }

 private:
  std::size_t byte_offset_;
};

namespace detail {

// whitespace-delimited tokenizer that remembers where each token starts
class TokenReader {
 public:
  explicit TokenReader(const std::string& text) : text_(text) {}

  bool next(std::string& tok, std::size_t& at) {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_])))
      ++pos_;
    if (pos_ >= text_.size()) return false;
    at = pos_;
    std::size_t end = pos_;
    while (end < text_.size() && !std::isspace(static_cast<unsigned char>(text_[end])))
      ++end;
    tok = text_.substr(pos_, end - pos_);
    pos_ = end;
    return true;
  }
  std::size_t position() const { return pos_; }

 private:
  const std::string& text_;
  std::size_t pos_ = 0;
};

inline long long parse_int_token(const std::string& tok, std::size_t at,
                                 const char* what) {
  errno = 0;
  char* end = nullptr;
  long long v = std::strtoll(tok.c_str(), &end, 10);
  if (errno != 0 || end == tok.c_str() || *end != '\0')
    throw TnsParseError(at, std::string("expected integer ") + what +
                                ", got '" + tok + "'");
  return v;
}

inline double parse_double_token(const std::string& tok, std::size_t at) {
  errno = 0;
  char* end = nullptr;
  double v = std::strtod(tok.c_str(), &end);
  if (end == tok.c_str() || *end != '\0')
    throw TnsParseError(at, "expected numeric value, got '" + tok + "'");
  // ERANGE with a huge result is overflow; underflow to subnormal is fine
  if (errno == ERANGE && (v == HUGE_VAL || v == -HUGE_VAL))
    throw TnsParseError(at, "value out of range: '" + tok + "'");
  return v;
}

}  // namespace detail

inline DenseTensor read_tns(std::istream& in) {
  std::ostringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();
  detail::TokenReader rd(text);

  std::string tok;
  std::size_t at = 0;
  if (!rd.next(tok, at)) throw TnsParseError(0, "empty input, expected TNS1");
  if (tok != "TNS1")
    throw TnsParseError(at, "expected magic 'TNS1', got '" + tok + "'");

  if (!rd.next(tok, at)) throw TnsParseError(rd.position(), "missing order");
  long long order = detail::parse_int_token(tok, at, "order");
  if (order < 1 || order > kMaxOrder)
    throw TnsParseError(at, "order " + std::to_string(order) +
                                " out of range [1, " +
                                std::to_string(kMaxOrder) + "]");

  std::vector<index_t> dims;
  for (long long n = 0; n < order; ++n) {
    if (!rd.next(tok, at))
      throw TnsParseError(rd.position(), "missing extent " + std::to_string(n + 1));
    long long d = detail::parse_int_token(tok, at, "extent");
    if (d < 1) throw TnsParseError(at, "extent must be >= 1");
    dims.push_back(static_cast<index_t>(d));
  }

  DenseTensor t{Shape(dims)};
  for (index_t i = 0; i < t.size(); ++i) {
    if (!rd.next(tok, at))
      throw TnsParseError(rd.position(),
                          "expected " + std::to_string(t.size()) +
                              " values, got " + std::to_string(i));
    t[i] = detail::parse_double_token(tok, at);
  }
  if (rd.next(tok, at))
    throw TnsParseError(at, "trailing data after " +
                                std::to_string(t.size()) + " values");
  return t;
}

inline DenseTensor read_tns(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path + "' for reading");
  return read_tns(in);
}

inline void write_tns(std::ostream& out, const DenseTensor& t) {
  out << "TNS1 " << t.order() << "\n";
  for (int n = 0; n < t.order(); ++n) out << (n ? " " : "") << t.dim(n);
  out << "\n";
  char num[64];
  for (index_t i = 0; i < t.size(); ++i) {
    std::snprintf(num, sizeof num, "%.17g", t[i]);
    out << num << "\n";
  }
}

inline void write_tns(const std::string& path, const DenseTensor& t) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  write_tns(out, t);
  if (!out) throw std::runtime_error("failed writing '" + path + "'");
}

// Matrices reuse the tensor container: an I x R matrix is stored as an
// order-2 tensor, column-major either way.
inline void write_tns(const std::string& path, const Matrix& m) {
  DenseTensor t{Shape({m.rows(), m.cols()})};
  Eigen::Map<Matrix>(t.data(), m.rows(), m.cols()) = m;
  write_tns(path, t);
}

inline Matrix read_tns_matrix(const std::string& path) {
  DenseTensor t = read_tns(path);
  if (t.order() != 2)
    throw std::runtime_error("'" + path + "': expected an order-2 tensor");
  Matrix m(t.dim(0), t.dim(1));
  Eigen::Map<Matrix>(m.data(), m.rows(), m.cols()) =
      Eigen::Map<const Matrix>(t.data(), t.dim(0), t.dim(1));
  return m;
}

}  // namespace sntd
