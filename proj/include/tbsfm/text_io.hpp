#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "tbsfm/scene.hpp"

namespace tbsfm::io {

// Whitespace-separated token reader for the '#'-commented dump formats.
class TokenFile {
 public:
  explicit TokenFile(const std::filesystem::path& path);

  // Reads the next non-empty line into tokens; false at end of file.
  bool next_line();
  const std::vector<std::string>& tokens() const { return tokens_; }
  const std::string& tag() const { return tokens_.front(); }
  size_t size() const { return tokens_.size(); }

  int int_at(size_t i) const;
  double double_at(size_t i) const;
  const std::string& str_at(size_t i) const;

  [[noreturn]] void fail(const std::string& what) const;
  void expect_size(size_t n) const;
  void expect_min_size(size_t n) const;

 private:
  std::filesystem::path path_;
  std::ifstream stream_;
  std::vector<std::string> tokens_;
  int line_ = 0;
};

class LineWriter {
 public:
  explicit LineWriter(const std::filesystem::path& path);
  ~LineWriter();

  LineWriter& operator<<(const std::string& s);
  LineWriter& operator<<(const char* s);
  LineWriter& operator<<(int v);
  LineWriter& operator<<(size_t v);
  LineWriter& operator<<(double v);
  void end_line();

 private:
  std::filesystem::path path_;
  std::ofstream stream_;
  bool line_open_ = false;
  void separator();
};

void write_quat(LineWriter& out, const QuatRotation& q);
void write_vec3(LineWriter& out, const Vec3& v);
QuatRotation read_quat(const TokenFile& in, size_t offset);
Vec3 read_vec3(const TokenFile& in, size_t offset);

}  // namespace tbsfm::io
