#include "scorefilter/feature_store.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <unordered_set>

#include "scorefilter/error.hpp"
#include "scorefilter/jsonl.hpp"

namespace scorefilter {

namespace {

static_assert(std::endian::native == std::endian::little ||
                  std::endian::native == std::endian::big,
              "mixed-endian platforms are not supported");

template <typename T>
void put_le(std::vector<unsigned char>& buf, T value) {
  static_assert(std::is_unsigned_v<T>);
  for (std::size_t b = 0; b < sizeof(T); ++b) {
    buf.push_back(static_cast<unsigned char>(value >> (8 * b)));
  }
}

template <typename T>
T get_le(const unsigned char* p) {
  T value = 0;
  for (std::size_t b = 0; b < sizeof(T); ++b) {
    value |= static_cast<T>(p[b]) << (8 * b);
  }
  return value;
}

}  // namespace

FeatureMatrix::FeatureMatrix(std::size_t rows, std::size_t cols,
                             std::vector<double> values)
    : rows_(rows), cols_(cols), values_(std::move(values)) {
  if (rows_ < 1 || cols_ < 1) {
    throw ValidationError("feature matrix needs n >= 1 and d >= 1, got n=" +
                          std::to_string(rows_) + " d=" + std::to_string(cols_));
  }
  if (values_.size() != rows_ * cols_) {
    throw ValidationError("feature matrix has " + std::to_string(values_.size()) +
                          " values, expected n*d=" + std::to_string(rows_ * cols_));
  }
  for (std::size_t k = 0; k < values_.size(); ++k) {
    if (!std::isfinite(values_[k])) {
      throw ValidationError("non-finite feature at row " + std::to_string(k / cols_) +
                            " col " + std::to_string(k % cols_));
    }
  }
}

FeatureMatrix FeatureMatrix::gather(std::span<const std::size_t> indices) const {
  std::vector<double> out;
  out.reserve(indices.size() * cols_);
  for (auto i : indices) {
    if (i >= rows_) throw ValidationError("row index out of range: " + std::to_string(i));
    auto r = row(i);
    out.insert(out.end(), r.begin(), r.end());
  }
  return FeatureMatrix(indices.size(), cols_, std::move(out));
}

void save_features(const FeatureMatrix& matrix, const std::filesystem::path& path) {
  std::vector<unsigned char> buf;
  buf.reserve(kSffmHeaderBytes + matrix.values().size() * 4);
  buf.insert(buf.end(), std::begin(kSffmMagic), std::end(kSffmMagic));
  put_le<std::uint32_t>(buf, kSffmVersion);
  put_le<std::uint64_t>(buf, matrix.rows());
  put_le<std::uint64_t>(buf, matrix.cols());
  for (double v : matrix.values()) {
    put_le<std::uint32_t>(buf, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw StorageError("cannot open for writing: " + path.string());
  out.write(reinterpret_cast<const char*>(buf.data()),
            static_cast<std::streamsize>(buf.size()));
  if (!out) throw StorageError("write failed: " + path.string());
}

FeatureMatrix load_features(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw StorageError("cannot open " + path.string());
  std::vector<unsigned char> buf((std::istreambuf_iterator<char>(in)),
                                 std::istreambuf_iterator<char>());
  if (in.bad()) throw StorageError("read failed: " + path.string());

  if (buf.size() < 8 || std::memcmp(buf.data(), kSffmMagic, 4) != 0) {
    throw FormatError(path.string() + ": not an SFFM file (bad magic)");
  }
  const auto version = get_le<std::uint32_t>(buf.data() + 4);
  if (version != kSffmVersion) {
    throw FormatError(path.string() + ": unsupported SFFM version " +
                      std::to_string(version));
  }
  if (buf.size() < kSffmHeaderBytes) {
    throw CorruptionError(path.string() + ": truncated header");
  }
  const auto n = get_le<std::uint64_t>(buf.data() + 8);
  const auto d = get_le<std::uint64_t>(buf.data() + 16);
  const std::uint64_t payload = buf.size() - kSffmHeaderBytes;
  // Guard the multiplication before comparing against the payload size.
  if (d != 0 && n > payload / 4 / d + 1) {
    throw CorruptionError(path.string() + ": declared shape exceeds file size");
  }
  if (n * d * 4 != payload) {
    throw CorruptionError(path.string() + ": payload is " + std::to_string(payload) +
                          " bytes, header declares n*d*4 = " +
                          std::to_string(n * d * 4));
  }
  std::vector<double> values(n * d);
  const unsigned char* p = buf.data() + kSffmHeaderBytes;
  for (std::size_t k = 0; k < values.size(); ++k, p += 4) {
    values[k] = std::bit_cast<float>(get_le<std::uint32_t>(p));
  }
  return FeatureMatrix(n, d, std::move(values));
}

std::vector<InstructionMeta> load_metadata(const std::filesystem::path& path) {
  std::vector<InstructionMeta> out;
  std::unordered_set<std::string> seen;
  for_each_json_line(path, [&](const Json& obj, std::size_t line) {
    InstructionMeta m;
    m.id = require_string(obj, "id", line);
    m.text_len = require_int(obj, "text_len", line);
    if (m.text_len < 0) {
      throw ValidationError("line " + std::to_string(line) + ": negative text_len");
    }
    if (auto it = obj.find("tags"); it != obj.end()) {
      if (!it->is_array()) {
        throw ParseError("line " + std::to_string(line) + ": \"tags\" must be an array");
      }
      for (const auto& t : *it) {
        if (!t.is_string()) {
          throw ParseError("line " + std::to_string(line) + ": tags must be strings");
        }
        m.tags.push_back(t.get<std::string>());
      }
    }
    if (!seen.insert(m.id).second) {
      throw ValidationError("duplicate id \"" + m.id + "\" at line " +
                            std::to_string(line));
    }
    out.push_back(std::move(m));
  });
  return out;
}

void save_metadata(std::span<const InstructionMeta> records,
                   const std::filesystem::path& path) {
  std::vector<Json> lines;
  lines.reserve(records.size());
  for (const auto& m : records) {
    Json obj = {{"id", m.id}, {"text_len", m.text_len}};
    if (!m.tags.empty()) obj["tags"] = m.tags;
    lines.push_back(std::move(obj));
  }
  write_json_lines(path, lines);
}

void check_pairing(const FeatureMatrix& matrix,
                   std::span<const InstructionMeta> meta) {
  if (meta.size() != matrix.rows()) {
    throw ValidationError("metadata has " + std::to_string(meta.size()) +
                          " records but feature matrix has " +
                          std::to_string(matrix.rows()) + " rows");
  }
}

std::optional<std::string> tag_value(const InstructionMeta& meta,
                                     std::string_view key) {
  for (const auto& t : meta.tags) {
    if (t.size() > key.size() && t.compare(0, key.size(), key) == 0 &&
        t[key.size()] == ':') {
      return t.substr(key.size() + 1);
    }
  }
  return std::nullopt;
}

}  // namespace scorefilter
