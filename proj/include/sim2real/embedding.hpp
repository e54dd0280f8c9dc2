#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sim2real/backend_client.hpp"
#include "sim2real/dataset.hpp"
#include "sim2real/digest.hpp"

namespace sim2real {

// n x d float32 embeddings, row-major, one row per image id.
class EmbeddingMatrix {
 public:
  EmbeddingMatrix() = default;
  // Throws ValidationError on size mismatch, d = 0 or non-finite values.
  EmbeddingMatrix(std::vector<std::string> ids, std::size_t dims, std::vector<float> data);

  std::size_t rows() const { return ids_.size(); }
  std::size_t dims() const { return dims_; }
  bool empty() const { return ids_.empty(); }
  const std::vector<std::string>& ids() const { return ids_; }
  const std::vector<float>& data() const { return data_; }
  std::span<const float> row(std::size_t i) const {
    return {data_.data() + i * dims_, dims_};
  }

  // Bitwise equality of ids, shape and payload.
  bool operator==(const EmbeddingMatrix& other) const;

 private:
  std::vector<std::string> ids_;
  std::size_t dims_ = 0;
  std::vector<float> data_;
};

// On-disk layout, little-endian throughout:
//   "SEMB" | u32 version = 1 | u64 n | u64 d |
//   n x (u32 byte length, UTF-8 id) | n*d float32 row-major
inline constexpr char kEmbeddingMagic[4] = {'S', 'E', 'M', 'B'};
inline constexpr std::uint32_t kEmbeddingVersion = 1;
inline constexpr std::size_t kEmbeddingHeaderBytes = 24;

std::size_t embedding_file_size(const EmbeddingMatrix& m);

Bytes serialize_embeddings(const EmbeddingMatrix& m);  // FormatError when n = 0
EmbeddingMatrix deserialize_embeddings(std::span<const std::uint8_t> bytes,
                                       std::string_view source = "<memory>");

void write_embeddings(const EmbeddingMatrix& m, const std::filesystem::path& path);
EmbeddingMatrix read_embeddings(const std::filesystem::path& path);

// Scales every row to unit L2 norm. Throws DegenerateRowError on a zero row.
EmbeddingMatrix normalize_rows(const EmbeddingMatrix& m);

struct EmbedOptions {
  std::size_t batch_size = 32;
  std::size_t concurrency = 1;  // batches in flight
  RetryPolicy retry;
  HttpTimeouts timeouts;
};

// Requests embeddings for `images` (paths resolved against the manifest) in
// batches. Rows come back in the order of `images` whatever the batch size.
EmbeddingMatrix embed_remote(const std::string& endpoint, const DatasetManifest& manifest,
                             std::span<const ImageRecord> images,
                             const EmbedOptions& options = {});

}  // namespace sim2real
