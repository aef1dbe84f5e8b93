#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace scorefilter {

/// Dense row-major n x d matrix of per-sample feature embeddings.
///
/// Values are held as double in memory; on disk they are binary32. Every
/// constructor validates n >= 1, d >= 1 and that all entries are finite.
class FeatureMatrix {
 public:
  FeatureMatrix(std::size_t rows, std::size_t cols, std::vector<double> values);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }

  std::span<const double> row(std::size_t i) const {
    return {values_.data() + i * cols_, cols_};
  }
  std::span<const double> values() const { return values_; }
  double at(std::size_t i, std::size_t j) const { return values_[i * cols_ + j]; }

  /// Rows `indices[0], indices[1], ...` copied into a new matrix.
  FeatureMatrix gather(std::span<const std::size_t> indices) const;

  bool operator==(const FeatureMatrix&) const = default;

 private:
  std::size_t rows_;
  std::size_t cols_;
  std::vector<double> values_;
};

struct InstructionMeta {
  std::string id;
  std::int64_t text_len = 0;
  std::vector<std::string> tags;

  bool operator==(const InstructionMeta&) const = default;
};

// SFFM layout: "SFFM" | u32 version | u64 n | u64 d | n*d f32, all little-endian.
inline constexpr char kSffmMagic[4] = {'S', 'F', 'F', 'M'};
inline constexpr std::uint32_t kSffmVersion = 1;
inline constexpr std::size_t kSffmHeaderBytes = 24;

void save_features(const FeatureMatrix& matrix, const std::filesystem::path& path);
FeatureMatrix load_features(const std::filesystem::path& path);

std::vector<InstructionMeta> load_metadata(const std::filesystem::path& path);
void save_metadata(std::span<const InstructionMeta> records,
                   const std::filesystem::path& path);

/// Throws ValidationError unless the metadata pairs row-for-row with `matrix`.
void check_pairing(const FeatureMatrix& matrix,
                   std::span<const InstructionMeta> meta);

/// Value of a "key:value" tag, if present.
std::optional<std::string> tag_value(const InstructionMeta& meta,
                                     std::string_view key);

}  // namespace scorefilter
