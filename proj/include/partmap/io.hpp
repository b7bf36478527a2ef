#pragma once

// Text-file plumbing shared by every on-disk format: full-precision number
// printing, comment-aware tokenizing, content hashing for artifact headers.

#include <Eigen/Dense>

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace partmap {

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace io {

// 17 significant digits round-trips IEEE doubles exactly.
inline std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline std::uint64_t fnv1a64(const void* data, std::size_t n, std::uint64_t h = 0xcbf29ce484222325ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::uint64_t fnv1a64(const std::string& s, std::uint64_t h = 0xcbf29ce484222325ull) {
  return fnv1a64(s.data(), s.size(), h);
}

inline std::string hash_hex(std::uint64_t h) {
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline std::uint64_t file_hash(const std::string& path) { return fnv1a64(read_file(path)); }

// Reads whitespace-separated tokens, skipping blank lines and '#' comments.
class TokenReader {
public:
  explicit TokenReader(std::istream& in) : in_(in) {}

  bool next(std::string& tok) {
    for (;;) {
      if (pos_ >= line_.size()) {
        if (!std::getline(in_, line_)) return false;
        ++lineno_;
        pos_ = 0;
        continue;
      }
      while (pos_ < line_.size() && std::isspace(static_cast<unsigned char>(line_[pos_]))) ++pos_;
      if (pos_ >= line_.size()) continue;
      if (line_[pos_] == '#') {
        pos_ = line_.size();
        continue;
      }
      std::size_t start = pos_;
      while (pos_ < line_.size() && !std::isspace(static_cast<unsigned char>(line_[pos_]))) ++pos_;
      tok = line_.substr(start, pos_ - start);
      return true;
    }
  }

  std::string expect(const char* what) {
    std::string tok;
    if (!next(tok)) throw IoError(std::string("unexpected end of file, expected ") + what);
    return tok;
  }

  double expect_double(const char* what) {
    std::string tok = expect(what);
    std::size_t used = 0;
    double v;
    try {
      v = std::stod(tok, &used);
    } catch (const std::exception&) {
      throw IoError(std::string("expected number for ") + what + ", got '" + tok + "'");
    }
    if (used != tok.size()) throw IoError(std::string("trailing junk in number for ") + what + ": '" + tok + "'");
    return v;
  }

  long expect_int(const char* what) {
    std::string tok = expect(what);
    std::size_t used = 0;
    long v;
    try {
      v = std::stol(tok, &used);
    } catch (const std::exception&) {
      throw IoError(std::string("expected integer for ") + what + ", got '" + tok + "'");
    }
    if (used != tok.size()) throw IoError(std::string("trailing junk in integer for ") + what + ": '" + tok + "'");
    return v;
  }

  int lineno() const { return lineno_; }

private:
  std::istream& in_;
  std::string line_;
  std::size_t pos_ = 0;
  int lineno_ = 0;
};

// Standard artifact header: every file the tools write starts with these
// comment lines so a result can be traced back to its inputs.
struct ArtifactHeader {
  std::string tool = "partmap";
  std::string version;
  std::uint64_t seed = 0;
  bool has_seed = false;
  std::map<std::string, std::string> input_hashes; // label -> hex hash

  void write(std::ostream& out, const std::string& kind) const {
    out << "# " << kind << "\n";
    out << "# tool: " << tool << " " << version << "\n";
    if (has_seed) out << "# seed: " << seed << "\n";
    for (const auto& [label, hex] : input_hashes) out << "# input " << label << ": " << hex << "\n";
  }
};

inline void write_matrix(std::ostream& out, const Eigen::MatrixXd& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (j) out << ' ';
      out << fmt(m(i, j));
    }
    out << '\n';
  }
}

inline Eigen::MatrixXd read_matrix(TokenReader& tr, Eigen::Index rows, Eigen::Index cols, const char* what) {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = tr.expect_double(what);
  return m;
}

} // namespace io
} // namespace partmap
