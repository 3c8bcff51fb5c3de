#ifndef TFORGE_EMBEDDING_HPP
#define TFORGE_EMBEDDING_HPP

#include <Eigen/Core>

#include <atomic>
#include <chrono>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tforge/text.hpp"

namespace tforge::embedding {

enum class EmbedderId { HashedBow, External };

std::string_view to_string(EmbedderId id);
EmbedderId embedder_from_string(std::string_view name);

struct EmbeddingBatch {
  std::vector<Eigen::VectorXd> vectors;
  /// Non-fatal notes, e.g. that a fallback provider answered.
  std::vector<std::string> notes;
};

/// Sentence embedder. Implementations are deterministic per input and safe to call
/// concurrently.
class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  virtual std::string_view id() const = 0;
  virtual EmbeddingBatch embed_batch(std::span<const std::string> texts) const = 0;

  Eigen::VectorXd embed(std::string_view text) const;
};

/// Signed hashed bag of words: lowercase, tokenize, and add +-1 at
/// `fnv1a64(token; seed) mod dim`. The sign is bit 32 of the hash.
class HashedBowEmbedder final : public EmbeddingProvider {
 public:
  explicit HashedBowEmbedder(int dim = 256, std::uint64_t seed = 0,
                             const text::Tokenizer& tokenizer = text::default_tokenizer());

  std::string_view id() const override { return "hashed-bow"; }
  EmbeddingBatch embed_batch(std::span<const std::string> texts) const override;

  Eigen::VectorXd embed_one(std::string_view text) const;
  int dim() const noexcept { return dim_; }

 private:
  int dim_;
  std::uint64_t basis_;
  const text::Tokenizer* tokenizer_;
};

/// 64-bit FNV-1a over `bytes`, starting from `basis`.
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t basis);
std::uint64_t splitmix64(std::uint64_t x);

struct HttpProviderOptions {
  std::string url;
  std::chrono::milliseconds timeout{5000};
};

/// Remote provider: POST {"texts": [...]} to `url`, expects {"vectors": [[...], ...]}.
/// Throws Provider on transport errors, non-2xx status or a malformed reply.
class HttpEmbeddingProvider final : public EmbeddingProvider {
 public:
  explicit HttpEmbeddingProvider(HttpProviderOptions options);

  std::string_view id() const override { return "external"; }
  EmbeddingBatch embed_batch(std::span<const std::string> texts) const override;

 private:
  HttpProviderOptions options_;
  std::string scheme_host_port_;
  std::string path_;
};

/// Tries `primary`; on any Error answers from `fallback` and adds a note.
class FallbackEmbeddingProvider final : public EmbeddingProvider {
 public:
  FallbackEmbeddingProvider(std::unique_ptr<EmbeddingProvider> primary,
                            std::unique_ptr<EmbeddingProvider> fallback);

  std::string_view id() const override { return primary_->id(); }
  EmbeddingBatch embed_batch(std::span<const std::string> texts) const override;

  std::uint64_t fallback_count() const noexcept { return fallbacks_.load(); }

 private:
  std::unique_ptr<EmbeddingProvider> primary_;
  std::unique_ptr<EmbeddingProvider> fallback_;
  mutable std::atomic<std::uint64_t> fallbacks_{0};
};

}  // namespace tforge::embedding

#endif  // TFORGE_EMBEDDING_HPP
