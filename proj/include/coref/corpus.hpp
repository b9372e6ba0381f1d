#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace coref {

enum class MentionKind { named, pronominal, nominal };

std::string_view to_string(MentionKind kind);
MentionKind parse_mention_kind(std::string_view text);

struct Token {
    std::string_view text;
    std::size_t sentence_index = 0;
    std::size_t token_index = 0;
};

/// An annotated mention. start/end are an inclusive token span within one
/// sentence; head is the token index of the syntactic head.
struct Mention {
    std::string mention_id;
    std::size_t sentence_index = 0;
    std::size_t start = 0;
    std::size_t end = 0;
    std::size_t head = 0;
    MentionKind kind = MentionKind::nominal;
    std::optional<std::string> entity_id;

    std::size_t width() const { return end - start + 1; }
};

struct Document {
    std::string doc_id;
    std::vector<std::vector<std::string>> sentences;
    std::vector<std::string> speakers;  // one per sentence
    std::vector<Mention> mentions;

    Token token(std::size_t sentence, std::size_t index) const {
        return {sentences.at(sentence).at(index), sentence, index};
    }
    const std::string& head_text(const Mention& m) const { return sentences[m.sentence_index][m.head]; }
    const std::string& speaker_of(const Mention& m) const { return speakers[m.sentence_index]; }

    /// Throws ValidationError naming doc_id (and mention_id) on the first
    /// violated invariant.
    void validate() const;

    /// Indices into `mentions` sorted by (sentence, start, end), ties by
    /// file position.
    std::vector<std::size_t> document_order() const;
};

/// A candidate (antecedent, anaphor) pair. Indices refer to doc.mentions.
struct MentionPair {
    std::string doc_id;
    std::string antecedent_id;
    std::string anaphor_id;
    std::size_t antecedent = 0;
    std::size_t anaphor = 0;
    bool label = false;
    std::size_t sentence_distance = 0;

    std::string pair_id() const { return doc_id + "/" + antecedent_id + "/" + anaphor_id; }
};

enum class HeadMatchMode { exact, relaxed };

std::string_view to_string(HeadMatchMode mode);
HeadMatchMode parse_head_match_mode(std::string_view text);

struct PairFilterConfig {
    bool require_nominal_anaphor = true;
    bool require_nominal_antecedent = false;
    bool exclude_head_match = true;
    HeadMatchMode head_match_mode = HeadMatchMode::relaxed;

    static PairFilterConfig disabled() { return {false, false, false, HeadMatchMode::relaxed}; }
};

/// Reads one JSON document record per line. Blank lines are skipped.
std::vector<Document> load_corpus(const std::filesystem::path& path);
std::vector<Document> parse_corpus(std::string_view text, std::string_view source = "<memory>");
void write_corpus(const std::vector<Document>& docs, const std::filesystem::path& path);
std::string format_document(const Document& doc);

/// exact: case-insensitive equality of head words.
/// relaxed: either head word occurs (case-insensitive) in the other span.
bool head_match(const Mention& a, const Mention& b, const Document& doc, HeadMatchMode mode);

std::vector<MentionPair> enumerate_pairs(const Document& doc, const PairFilterConfig& filter);

/// Keeps every positive and each negative with probability negative_rate.
std::vector<MentionPair> downsample(const std::vector<MentionPair>& pairs, double negative_rate,
                                    std::uint64_t seed);

/// Expected positive share after downsampling `negatives` at `negative_rate`.
double expected_positive_rate(double positives, double negatives, double negative_rate);

std::filesystem::path shard_path(const std::filesystem::path& out_dir, std::string_view stem,
                                 std::size_t index, std::size_t count);

/// Round-robin split into k pair shards named <stem>.<i>-of-<k>.pairs.
std::vector<std::filesystem::path> shard_pairs(const std::vector<MentionPair>& pairs, std::size_t k,
                                               const std::filesystem::path& out_dir,
                                               std::string_view stem = "pairs");

void write_pair_file(const std::vector<MentionPair>& pairs, const std::filesystem::path& path);
std::vector<MentionPair> read_pair_file(const std::filesystem::path& path);

std::string ascii_lower(std::string_view text);

}  // namespace coref
