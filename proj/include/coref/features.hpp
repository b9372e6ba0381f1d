#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "coref/corpus.hpp"
#include "coref/embeddings.hpp"

namespace coref {

inline constexpr std::uint32_t kFeatureSchemaVersion = 1;
inline constexpr std::size_t kWordSlots = 5;  // first, head, last, previous, next
inline constexpr std::size_t kDistanceDim = 6;
inline constexpr std::size_t kPairFlagDim = 3;
inline constexpr std::size_t kSimilarityDim = 4;
inline constexpr std::size_t kMaxScaledDistance = 50;

struct Section {
    std::size_t offset = 0;
    std::size_t length = 0;
    std::size_t end() const { return offset + length; }
};

/// Layout of the pair feature vector:
///   [ant_words | ana_words | distance | pair_flags | similarity]
/// With 50-d embeddings this is 250 + 250 + 6 + 3 + 4 = 513 values. A
/// mention's tower input is its own word section followed by distance.
struct FeatureSchema {
    std::uint32_t version = kFeatureSchemaVersion;
    std::size_t word_dim = kDefaultEmbeddingDim;
    Section ant_words;
    Section ana_words;
    Section distance;
    Section pair_flags;
    Section similarity;
    std::size_t total_dim = 0;

    static FeatureSchema standard(std::size_t word_dim = kDefaultEmbeddingDim);

    std::size_t tower_dim() const { return ant_words.length + distance.length; }
    /// Indices of the pair vector that feed the antecedent (or anaphor) tower.
    std::vector<std::size_t> tower_indices(bool antecedent) const;
};

struct WordSlots {
    std::optional<std::string_view> first;
    std::optional<std::string_view> head;
    std::optional<std::string_view> last;
    std::optional<std::string_view> previous;  // absent at sentence start
    std::optional<std::string_view> next;      // absent at sentence end

    std::array<std::optional<std::string_view>, kWordSlots> as_array() const {
        return {first, head, last, previous, next};
    }
};

WordSlots word_slots(const Mention& m, const Document& doc);

/// One-hot for d = 0..4 (all zero for d >= 5), then min(d, 50) / 50.
std::array<float, kDistanceDim> distance_block(std::size_t sentence_distance);

/// (case-insensitive exact span match, relaxed head match, same speaker)
std::array<float, kPairFlagDim> pair_flags(const Mention& a, const Mention& b, const Document& doc);

/// Cosine similarity in [-1, 1]; 0 when either vector is all zeros.
double cosine_similarity(std::span<const float> a, std::span<const float> b);

/// Cosine similarities of (head, first, last, span-average) embeddings.
std::array<float, kSimilarityDim> similarity_features(const Mention& a, const Mention& b, const Document& doc,
                                                      const EmbeddingTable& table);

struct FeatureVector {
    std::string pair_id;
    bool label = false;
    std::vector<float> values;
};

struct FeaturizeOptions {
    bool similarity = true;  // false writes zeros into the similarity section
};

FeatureVector featurize_pair(const MentionPair& pair, const Document& doc, const EmbeddingTable& table,
                             const FeatureSchema& schema, const FeaturizeOptions& options = {});

/// [own word slots | distance block]; carries nothing about the partner
/// mention except the distance.
std::vector<float> featurize_tower(const Mention& m, std::size_t sentence_distance, const Document& doc,
                                   const EmbeddingTable& table, const FeatureSchema& schema);

/// Rows of one feature shard, values row-major (rows x dim), already
/// rounded through half precision when read from disk.
struct FeatureShard {
    std::uint32_t schema_version = kFeatureSchemaVersion;
    std::size_t dim = 0;
    std::vector<std::string> pair_ids;
    std::vector<std::uint8_t> labels;
    std::vector<float> values;

    std::size_t rows() const { return labels.size(); }
    std::span<const float> row(std::size_t i) const { return {values.data() + i * dim, dim}; }
    void append(const FeatureVector& fv);
};

struct FeatureShardHeader {
    std::uint32_t schema_version = 0;
    std::size_t dim = 0;
    std::uint64_t rows = 0;
};

/// Resolves each pair against `docs` by doc_id and mention_id and builds its
/// feature row.
FeatureShard featurize_pairs(const std::vector<MentionPair>& pairs, const std::vector<Document>& docs,
                             const EmbeddingTable& table, const FeatureSchema& schema,
                             const FeaturizeOptions& options = {});

/// Binary layout, little-endian:
///   "CRFS" | u32 schema_version | u32 dim | u64 rows
///   rows x ( u32 id_len | id bytes | u8 label | dim x binary16 )
void write_feature_shard(const FeatureShard& shard, const std::filesystem::path& path);
FeatureShard read_feature_shard(const std::filesystem::path& path);
/// Reads the header only. Any schema version is returned as found.
FeatureShardHeader read_feature_shard_header(const std::filesystem::path& path);

/// Sets a section to zero in every row (used for feature ablations).
void zero_section(FeatureShard& shard, const Section& section);

}  // namespace coref
