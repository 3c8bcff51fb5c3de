#include "tforge/embedding.hpp"

#include <httplib.h>
#include <json.hpp>

#include "tforge/error.hpp"

namespace tforge::embedding {

std::string_view to_string(EmbedderId id) {
  return id == EmbedderId::HashedBow ? "hashed-bow" : "external";
}

EmbedderId embedder_from_string(std::string_view name) {
  if (name == "hashed-bow") return EmbedderId::HashedBow;
  if (name == "external") return EmbedderId::External;
  throw Error(ErrorKind::Config, "unknown embedder '" + std::string(name) + "'");
}

Eigen::VectorXd EmbeddingProvider::embed(std::string_view text) const {
  const std::string owned(text);
  auto batch = embed_batch(std::span<const std::string>(&owned, 1));
  return std::move(batch.vectors.at(0));
}

std::uint64_t splitmix64(std::uint64_t x) {
  std::uint64_t z = x + 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t basis) {
  std::uint64_t h = basis;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

HashedBowEmbedder::HashedBowEmbedder(int dim, std::uint64_t seed,
                                     const text::Tokenizer& tokenizer)
    : dim_(dim), basis_(0xcbf29ce484222325ULL ^ splitmix64(seed)), tokenizer_(&tokenizer) {
  if (dim <= 0) throw Error(ErrorKind::Config, "embedding dimension must be positive");
}

Eigen::VectorXd HashedBowEmbedder::embed_one(std::string_view text) const {
  Eigen::VectorXd v = Eigen::VectorXd::Zero(dim_);
  const std::string lowered = text::ascii_lower(text);
  for (std::string_view tok : tokenizer_->tokenize(lowered)) {
    const std::uint64_t h = fnv1a64(tok, basis_);
    const auto slot = static_cast<Eigen::Index>(h % std::uint64_t(dim_));
    v[slot] += ((h >> 32) & 1U) ? -1.0 : 1.0;
  }
  return v;
}

EmbeddingBatch HashedBowEmbedder::embed_batch(std::span<const std::string> texts) const {
  EmbeddingBatch out;
  out.vectors.reserve(texts.size());
  for (const auto& t : texts) out.vectors.push_back(embed_one(t));
  return out;
}

HttpEmbeddingProvider::HttpEmbeddingProvider(HttpProviderOptions options)
    : options_(std::move(options)) {
  const std::string& url = options_.url;
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos || url.compare(0, scheme_end, "http") != 0) {
    throw Error(ErrorKind::Config, "embedding URL must start with http://: '" + url + "'");
  }
  const auto path_start = url.find('/', scheme_end + 3);
  scheme_host_port_ = url.substr(0, path_start);
  path_ = path_start == std::string::npos ? "/" : url.substr(path_start);
}

EmbeddingBatch HttpEmbeddingProvider::embed_batch(std::span<const std::string> texts) const {
  httplib::Client client(scheme_host_port_);
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(options_.timeout);
  const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(options_.timeout - secs);
  client.set_connection_timeout(secs.count(), usecs.count());
  client.set_read_timeout(secs.count(), usecs.count());
  client.set_write_timeout(secs.count(), usecs.count());

  nlohmann::json request;
  request["texts"] = std::vector<std::string>(texts.begin(), texts.end());
  const auto res = client.Post(path_, request.dump(), "application/json");
  if (!res) {
    throw Error(ErrorKind::Provider,
                "embedding request failed: " + httplib::to_string(res.error()));
  }
  if (res->status < 200 || res->status >= 300) {
    throw Error(ErrorKind::Provider, "embedding provider returned HTTP " +
                                         std::to_string(res->status));
  }
  const auto reply = nlohmann::json::parse(res->body, nullptr, false);
  if (reply.is_discarded() || !reply.is_object() || !reply.contains("vectors") ||
      !reply["vectors"].is_array() || reply["vectors"].size() != texts.size()) {
    throw Error(ErrorKind::Provider, "embedding reply must be {\"vectors\": [...]} with one "
                                     "vector per text");
  }
  EmbeddingBatch out;
  std::optional<Eigen::Index> dim;
  for (const auto& row : reply["vectors"]) {
    if (!row.is_array() || row.empty()) {
      throw Error(ErrorKind::Provider, "embedding vector must be a non-empty list");
    }
    Eigen::VectorXd v(static_cast<Eigen::Index>(row.size()));
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (!row[i].is_number()) throw Error(ErrorKind::Provider, "embedding value not numeric");
      v[Eigen::Index(i)] = row[i].get<double>();
    }
    if (dim && *dim != v.size()) {
      throw Error(ErrorKind::Provider, "embedding vectors differ in dimension");
    }
    dim = v.size();
    out.vectors.push_back(std::move(v));
  }
  return out;
}

FallbackEmbeddingProvider::FallbackEmbeddingProvider(std::unique_ptr<EmbeddingProvider> primary,
                                                     std::unique_ptr<EmbeddingProvider> fallback)
    : primary_(std::move(primary)), fallback_(std::move(fallback)) {}

EmbeddingBatch FallbackEmbeddingProvider::embed_batch(std::span<const std::string> texts) const {
  try {
    return primary_->embed_batch(texts);
  } catch (const Error& e) {
    ++fallbacks_;
    EmbeddingBatch out = fallback_->embed_batch(texts);
    out.notes.push_back("embedding-fallback: " + std::string(e.what()));
    return out;
  }
}

}  // namespace tforge::embedding
