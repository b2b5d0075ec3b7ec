#include "tbsfm/text_io.hpp"

#include <charconv>
#include <cstdio>

namespace tbsfm {

ParseError::ParseError(const std::filesystem::path& file, int line, const std::string& what)
    : std::runtime_error(file.string() + ":" + std::to_string(line) + ": " + what) {}

namespace io {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

TokenFile::TokenFile(const std::filesystem::path& path) : path_(path), stream_(path) {
  if (!stream_) {
    throw ParseError(path, 0, "cannot open file");
  }
}

bool TokenFile::next_line() {
  std::string line;
  while (std::getline(stream_, line)) {
    ++line_;
    if (const size_t hash = line.find('#'); hash != std::string::npos) {
      line.resize(hash);
    }
    tokens_.clear();
    std::istringstream iss(line);
    std::string tok;
    while (iss >> tok) {
      tokens_.push_back(tok);
    }
    if (!tokens_.empty()) {
      return true;
    }
  }
  return false;
}

int TokenFile::int_at(size_t i) const {
  expect_min_size(i + 1);
  const std::string& s = tokens_[i];
  int value = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc{} || ptr != s.data() + s.size()) {
    fail("expected integer, got '" + s + "'");
  }
  return value;
}

double TokenFile::double_at(size_t i) const {
  expect_min_size(i + 1);
  const std::string& s = tokens_[i];
  char* end = nullptr;
  const double value = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size()) {
    fail("expected number, got '" + s + "'");
  }
  return value;
}

const std::string& TokenFile::str_at(size_t i) const {
  expect_min_size(i + 1);
  return tokens_[i];
}

void TokenFile::fail(const std::string& what) const {
  throw ParseError(path_, line_, what);
}

void TokenFile::expect_size(size_t n) const {
  if (tokens_.size() != n) {
    fail("expected " + std::to_string(n) + " tokens, got " + std::to_string(tokens_.size()));
  }
}

void TokenFile::expect_min_size(size_t n) const {
  if (tokens_.size() < n) {
    fail("expected at least " + std::to_string(n) + " tokens, got " +
         std::to_string(tokens_.size()));
  }
}

LineWriter::LineWriter(const std::filesystem::path& path) : path_(path), stream_(path) {
  if (!stream_) {
    throw std::runtime_error("cannot open " + path.string() + " for writing");
  }
}

LineWriter::~LineWriter() {
  if (line_open_) {
    stream_ << '\n';
  }
}

void LineWriter::separator() {
  if (line_open_) {
    stream_ << ' ';
  }
  line_open_ = true;
}

LineWriter& LineWriter::operator<<(const std::string& s) {
  separator();
  stream_ << s;
  return *this;
}

LineWriter& LineWriter::operator<<(const char* s) {
  separator();
  stream_ << s;
  return *this;
}

LineWriter& LineWriter::operator<<(int v) {
  separator();
  stream_ << v;
  return *this;
}

LineWriter& LineWriter::operator<<(size_t v) {
  separator();
  stream_ << v;
  return *this;
}

LineWriter& LineWriter::operator<<(double v) {
  separator();
  stream_ << format_double(v);
  return *this;
}

void LineWriter::end_line() {
  stream_ << '\n';
  line_open_ = false;
}

void write_quat(LineWriter& out, const QuatRotation& q) {
  out << q.w << q.x << q.y << q.z;
}

void write_vec3(LineWriter& out, const Vec3& v) {
  out << v.x() << v.y() << v.z();
}

QuatRotation read_quat(const TokenFile& in, size_t offset) {
  return {in.double_at(offset), in.double_at(offset + 1), in.double_at(offset + 2),
          in.double_at(offset + 3)};
}

Vec3 read_vec3(const TokenFile& in, size_t offset) {
  return {in.double_at(offset), in.double_at(offset + 1), in.double_at(offset + 2)};
}

}  // namespace io
}  // namespace tbsfm
