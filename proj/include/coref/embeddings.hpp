#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace coref {

inline constexpr std::size_t kDefaultEmbeddingDim = 50;

/// Word -> dense vector map. Immutable after loading; lookups never fail:
/// a miss retries the lowercased word and then falls back to zeros.
class EmbeddingTable {
public:
    explicit EmbeddingTable(std::size_t dim = kDefaultEmbeddingDim);

    std::size_t dim() const { return dim_; }
    std::size_t size() const { return words_.size(); }
    const std::vector<std::string>& words() const { return words_; }

    /// Adds or replaces a row. Returns true if the word was already present.
    bool insert(const std::string& word, std::span<const float> vector);

    bool contains(std::string_view word) const;
    std::span<const float> row(std::size_t index) const { return {data_.data() + index * dim_, dim_}; }

    /// Absent word (e.g. no previous token at a sentence start) -> zeros.
    std::span<const float> lookup(std::optional<std::string_view> word) const;

private:
    std::size_t dim_;
    std::vector<std::string> words_;
    std::vector<float> data_;
    std::unordered_map<std::string, std::size_t> index_;
    std::vector<float> zeros_;
};

/// word2vec text format: optional "<count> <dim>" header, then
/// "<word> <v1> ... <v_dim>" rows. Duplicate words: last row wins and a
/// warning is appended to `warnings` if given.
EmbeddingTable load_embeddings(const std::filesystem::path& path, std::size_t expected_dim,
                               std::vector<std::string>* warnings = nullptr);
EmbeddingTable parse_embeddings(std::string_view text, std::size_t expected_dim,
                                std::vector<std::string>* warnings = nullptr,
                                std::string_view source = "<memory>");

/// Writes with a header line; values use the shortest round-trip decimal form.
void write_embeddings(const EmbeddingTable& table, const std::filesystem::path& path);
std::string format_embeddings(const EmbeddingTable& table);

}  // namespace coref
