#include "sim2real/embedding.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <cstring>
#include <exception>
#include <mutex>
#include <thread>
#include <unordered_map>

#include "sim2real/errors.hpp"
#include "sim2real/image_io.hpp"
#include "sim2real/io.hpp"

namespace sim2real {

EmbeddingMatrix::EmbeddingMatrix(std::vector<std::string> ids, std::size_t dims,
                                 std::vector<float> data)
    : ids_(std::move(ids)), dims_(dims), data_(std::move(data)) {
  if (dims_ == 0 && !ids_.empty()) throw ValidationError("embedding dims must be > 0");
  if (data_.size() != ids_.size() * dims_) {
    throw ValidationError("embedding payload has " + std::to_string(data_.size()) +
                          " values, expected " + std::to_string(ids_.size()) + " x " +
                          std::to_string(dims_));
  }
  for (std::size_t i = 0; i < data_.size(); ++i) {
    if (!std::isfinite(data_[i])) {
      throw ValidationError("embedding row " + std::to_string(i / dims_) +
                            " contains a non-finite value");
    }
  }
}

bool EmbeddingMatrix::operator==(const EmbeddingMatrix& other) const {
  return ids_ == other.ids_ && dims_ == other.dims_ && data_.size() == other.data_.size() &&
         (data_.empty() ||
          std::memcmp(data_.data(), other.data_.data(), data_.size() * sizeof(float)) == 0);
}

namespace {

static_assert(sizeof(float) == 4 && std::numeric_limits<float>::is_iec559);

template <typename T>
void put_le(Bytes& out, T value) {
  using U = std::make_unsigned_t<T>;
  const auto u = static_cast<U>(value);
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    out.push_back(static_cast<std::uint8_t>((u >> (8 * i)) & 0xff));
  }
}

template <typename T>
T get_le(const std::uint8_t* p) {
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(p[i]) << (8 * i);
  return v;
}

}  // namespace

std::size_t embedding_file_size(const EmbeddingMatrix& m) {
  std::size_t size = kEmbeddingHeaderBytes;
  for (const auto& id : m.ids()) size += 4 + id.size();
  return size + m.data().size() * sizeof(float);
}

Bytes serialize_embeddings(const EmbeddingMatrix& m) {
  if (m.rows() == 0) throw FormatError("cannot write an empty embedding matrix (n = 0)");
  Bytes out;
  out.reserve(embedding_file_size(m));
  out.insert(out.end(), kEmbeddingMagic, kEmbeddingMagic + 4);
  put_le<std::uint32_t>(out, kEmbeddingVersion);
  put_le<std::uint64_t>(out, m.rows());
  put_le<std::uint64_t>(out, m.dims());
  for (const auto& id : m.ids()) {
    if (id.size() > std::numeric_limits<std::uint32_t>::max()) {
      throw FormatError("embedding id longer than 4 GiB");
    }
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(id.size()));
    out.insert(out.end(), id.begin(), id.end());
  }
  for (float f : m.data()) put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(f));
  return out;
}

EmbeddingMatrix deserialize_embeddings(std::span<const std::uint8_t> bytes,
                                       std::string_view source) {
  const std::string where(source);
  if (bytes.size() < kEmbeddingHeaderBytes) {
    throw FormatError(where + ": truncated header, expected " +
                      std::to_string(kEmbeddingHeaderBytes) + " bytes, got " +
                      std::to_string(bytes.size()));
  }
  if (std::memcmp(bytes.data(), kEmbeddingMagic, 4) != 0) {
    throw FormatError(where + ": bad magic (not an SEMB embedding file)");
  }
  const auto version = get_le<std::uint32_t>(bytes.data() + 4);
  if (version != kEmbeddingVersion) {
    throw FormatError(where + ": unsupported version " + std::to_string(version));
  }
  const auto n = get_le<std::uint64_t>(bytes.data() + 8);
  const auto d = get_le<std::uint64_t>(bytes.data() + 16);
  if (n == 0 || d == 0) throw FormatError(where + ": n and d must both be > 0");

  std::size_t offset = kEmbeddingHeaderBytes;
  std::vector<std::string> ids;
  ids.reserve(static_cast<std::size_t>(std::min<std::uint64_t>(n, 1u << 20)));
  for (std::uint64_t i = 0; i < n; ++i) {
    if (bytes.size() - offset < 4) {
      throw FormatError(where + ": truncated id block at id " + std::to_string(i));
    }
    const auto len = get_le<std::uint32_t>(bytes.data() + offset);
    offset += 4;
    if (bytes.size() - offset < len) {
      throw FormatError(where + ": truncated id block at id " + std::to_string(i));
    }
    ids.emplace_back(reinterpret_cast<const char*>(bytes.data() + offset), len);
    offset += len;
  }
  const std::uint64_t payload_values = n * d;
  if (d != 0 && payload_values / d != n) throw FormatError(where + ": n x d overflows");
  const std::uint64_t expected = offset + payload_values * sizeof(float);
  if (bytes.size() != expected) {
    throw FormatError(where + ": expected " + std::to_string(expected) + " bytes, got " +
                      std::to_string(bytes.size()));
  }
  std::vector<float> data(static_cast<std::size_t>(payload_values));
  for (std::size_t i = 0; i < data.size(); ++i) {
    data[i] = std::bit_cast<float>(get_le<std::uint32_t>(bytes.data() + offset + 4 * i));
  }
  try {
    return EmbeddingMatrix(std::move(ids), static_cast<std::size_t>(d), std::move(data));
  } catch (const ValidationError& e) {
    throw FormatError(where + ": " + e.what());
  }
}

void write_embeddings(const EmbeddingMatrix& m, const std::filesystem::path& path) {
  write_file_atomic(path, serialize_embeddings(m));
}

EmbeddingMatrix read_embeddings(const std::filesystem::path& path) {
  return deserialize_embeddings(read_file(path), path.string());
}

EmbeddingMatrix normalize_rows(const EmbeddingMatrix& m) {
  std::vector<float> out(m.data().size());
  for (std::size_t i = 0; i < m.rows(); ++i) {
    const auto row = m.row(i);
    double sq = 0.0;
    for (float v : row) sq += static_cast<double>(v) * v;
    if (!(sq > 0.0)) throw DegenerateRowError("row " + std::to_string(i) + " ('" +
                                              m.ids()[i] + "') has zero norm");
    const double inv = 1.0 / std::sqrt(sq);
    for (std::size_t j = 0; j < row.size(); ++j) {
      out[i * m.dims() + j] = static_cast<float>(row[j] * inv);
    }
  }
  return EmbeddingMatrix(m.ids(), m.dims(), std::move(out));
}

EmbeddingMatrix embed_remote(const std::string& endpoint, const DatasetManifest& manifest,
                             std::span<const ImageRecord> images,
                             const EmbedOptions& options) {
  if (images.empty()) throw EmptyInput("embed_remote: no images to embed");
  if (options.batch_size == 0) throw ConfigError("batch_size must be >= 1");
  const BackendClient client(endpoint, options.retry, options.timeouts);

  const std::size_t n_batches = (images.size() + options.batch_size - 1) / options.batch_size;
  std::vector<EmbedReply> replies(n_batches);
  std::vector<std::exception_ptr> errors(n_batches);
  std::atomic<std::size_t> next{0};

  auto worker = [&] {
    for (std::size_t b = next++; b < n_batches; b = next++) {
      try {
        const std::size_t lo = b * options.batch_size;
        const std::size_t hi = std::min(images.size(), lo + options.batch_size);
        std::vector<std::pair<std::string, Bytes>> batch;
        for (std::size_t i = lo; i < hi; ++i) {
          batch.emplace_back(images[i].id, ensure_png(read_file(manifest.resolve(images[i]))));
        }
        replies[b] = client.embed(batch);
      } catch (...) {
        errors[b] = std::current_exception();
      }
    }
  };
  const std::size_t n_threads = std::clamp<std::size_t>(options.concurrency, 1, n_batches);
  std::vector<std::thread> threads;
  for (std::size_t t = 1; t < n_threads; ++t) threads.emplace_back(worker);
  worker();
  for (auto& t : threads) t.join();
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  const std::size_t dims = replies.front().dims;
  std::vector<std::string> ids;
  std::vector<float> data;
  ids.reserve(images.size());
  data.reserve(images.size() * dims);
  for (std::size_t b = 0; b < n_batches; ++b) {
    const EmbedReply& reply = replies[b];
    if (reply.dims != dims) {
      throw ProtocolError("embedder returned d=" + std::to_string(dims) + " then d=" +
                          std::to_string(reply.dims) + " (batch " + std::to_string(b) + ")");
    }
    std::unordered_map<std::string_view, const std::vector<double>*> by_id;
    for (const auto& [id, values] : reply.rows) by_id.emplace(id, &values);
    const std::size_t lo = b * options.batch_size;
    const std::size_t hi = std::min(images.size(), lo + options.batch_size);
    if (reply.rows.size() != hi - lo) {
      throw ProtocolError("embedder returned " + std::to_string(reply.rows.size()) +
                          " rows for a batch of " + std::to_string(hi - lo));
    }
    for (std::size_t i = lo; i < hi; ++i) {
      auto it = by_id.find(images[i].id);
      if (it == by_id.end()) {
        throw ProtocolError("embedder reply lacks a row for '" + images[i].id + "'");
      }
      if (it->second->size() != dims) {
        throw ProtocolError("row '" + images[i].id + "' has " +
                            std::to_string(it->second->size()) + " values, dims=" +
                            std::to_string(dims));
      }
      ids.push_back(images[i].id);
      for (double v : *it->second) data.push_back(static_cast<float>(v));
    }
  }
  try {
    return EmbeddingMatrix(std::move(ids), dims, std::move(data));
  } catch (const ValidationError& e) {
    throw ProtocolError(std::string("embedder reply: ") + e.what());
  }
}

}  // namespace sim2real
