#include "ctcforge/emissions_io.hpp"

#include <array>
#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

namespace ctcforge {
namespace {

std::uint32_t read_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) |
         (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) |
         (static_cast<std::uint32_t>(p[3]) << 24);
}

void append_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

EmissionMatrix::Matrix parse_binary(const std::string& bytes,
                                    const std::string& name) {
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  if (bytes.size() < 16)
    throw FormatError(name + ": truncated emission header");
  if (std::memcmp(p, kEmissionMagic, 4) != 0)
    throw FormatError(name + ": bad magic");
  const std::uint32_t version = read_u32(p + 4);
  if (version != kEmissionVersion)
    throw FormatError(name + ": unsupported version " + std::to_string(version));
  const std::uint64_t frames = read_u32(p + 8);
  const std::uint64_t vocab = read_u32(p + 12);
  if (bytes.size() != 16 + 4 * frames * vocab)
    throw FormatError(name + ": payload size does not match header (" +
                      std::to_string(frames) + "x" + std::to_string(vocab) + ")");
  EmissionMatrix::Matrix m(static_cast<Eigen::Index>(frames),
                           static_cast<Eigen::Index>(vocab));
  const unsigned char* data = p + 16;
  for (std::uint64_t i = 0; i < frames * vocab; ++i) {
    m.data()[i] = std::bit_cast<float>(read_u32(data + 4 * i));
  }
  return m;
}

EmissionMatrix::Matrix parse_tsv(const std::string& text,
                                 const std::string& name) {
  std::vector<float> values;
  long cols = -1;
  long rows = 0;
  std::istringstream in(text);
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    long count = 0;
    const char* cur = line.data();
    const char* end = line.data() + line.size();
    while (true) {
      float v = 0.0f;
      // from_chars rejects a leading '+'
      if (cur < end && *cur == '+') ++cur;
      auto [ptr, ec] = std::from_chars(cur, end, v);
      if (ec != std::errc())
        throw FormatError(name + ": malformed value at line " +
                          std::to_string(line_no) + ", column " +
                          std::to_string(count));
      values.push_back(v);
      ++count;
      cur = ptr;
      if (cur == end) break;
      if (*cur != '\t')
        throw FormatError(name + ": expected tab at line " +
                          std::to_string(line_no));
      ++cur;
    }
    if (cols < 0) cols = count;
    if (count != cols)
      throw FormatError(name + ": line " + std::to_string(line_no) + " has " +
                        std::to_string(count) + " columns, expected " +
                        std::to_string(cols));
    ++rows;
  }
  if (cols < 0) cols = 0;
  EmissionMatrix::Matrix m(rows, cols);
  std::copy(values.begin(), values.end(), m.data());
  return m;
}

std::string read_all(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open emission file " + path.string());
  return std::string(std::istreambuf_iterator<char>(in), {});
}

EmissionMatrix::Matrix read_matrix(const std::filesystem::path& path) {
  const std::string bytes = read_all(path);
  if (bytes.size() >= 4 && std::memcmp(bytes.data(), kEmissionMagic, 4) == 0)
    return parse_binary(bytes, path.string());
  return parse_tsv(bytes, path.string());
}

EmissionMatrix checked(EmissionMatrix::Matrix m, const std::filesystem::path& path,
                       const LoadOptions& options) {
  EmissionMatrix e(std::move(m));
  try {
    validate(e, options.strict_validation);
  } catch (const ValidationError& err) {
    throw ValidationError(path.string() + ": " + err.what());
  }
  return e;
}

}  // namespace

EmissionMatrix load_emissions(const std::filesystem::path& path,
                              const LoadOptions& options) {
  return checked(read_matrix(path), path, options);
}

EmissionMatrix load_emissions(const std::filesystem::path& path,
                              const TokenDictionary& tokens,
                              const LoadOptions& options) {
  EmissionMatrix::Matrix m = read_matrix(path);
  if (m.rows() == 0) m.resize(0, tokens.size());
  if (m.cols() != tokens.size())
    throw FormatError(path.string() + ": " + std::to_string(m.cols()) +
                      " columns but token dictionary has " +
                      std::to_string(tokens.size()) + " tokens");
  return checked(std::move(m), path, options);
}

void write_emissions(const std::filesystem::path& path,
                     const EmissionMatrix& emissions, EmissionFormat format) {
  std::string out;
  const auto& m = emissions.log_probs();
  if (format == EmissionFormat::kBinary) {
    out.reserve(16 + 4 * static_cast<std::size_t>(m.size()));
    out.append(kEmissionMagic, 4);
    append_u32(out, kEmissionVersion);
    append_u32(out, static_cast<std::uint32_t>(m.rows()));
    append_u32(out, static_cast<std::uint32_t>(m.cols()));
    for (Eigen::Index i = 0; i < m.size(); ++i)
      append_u32(out, std::bit_cast<std::uint32_t>(m.data()[i]));
  } else {
    std::array<char, 64> buf{};
    for (Eigen::Index t = 0; t < m.rows(); ++t) {
      for (Eigen::Index v = 0; v < m.cols(); ++v) {
        if (v > 0) out.push_back('\t');
        auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), m(t, v));
        out.append(buf.data(), ptr);
      }
      out.push_back('\n');
    }
  }
  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file) throw FormatError("cannot write emission file " + path.string());
  file.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!file) throw FormatError("write failed for " + path.string());
}

}  // namespace ctcforge
