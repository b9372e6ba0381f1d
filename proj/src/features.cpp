#include "coref/features.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include "coref/binary_io.hpp"
#include "coref/error.hpp"
#include "coref/half.hpp"

namespace coref {

namespace {

constexpr char kShardMagic[4] = {'C', 'R', 'F', 'S'};

}  // namespace

FeatureSchema FeatureSchema::standard(std::size_t word_dim) {
    FeatureSchema s;
    s.word_dim = word_dim;
    const std::size_t words = kWordSlots * word_dim;
    s.ant_words = {0, words};
    s.ana_words = {s.ant_words.end(), words};
    s.distance = {s.ana_words.end(), kDistanceDim};
    s.pair_flags = {s.distance.end(), kPairFlagDim};
    s.similarity = {s.pair_flags.end(), kSimilarityDim};
    s.total_dim = s.similarity.end();
    return s;
}

std::vector<std::size_t> FeatureSchema::tower_indices(bool antecedent) const {
    const Section& words = antecedent ? ant_words : ana_words;
    std::vector<std::size_t> indices;
    indices.reserve(tower_dim());
    for (std::size_t i = words.offset; i < words.end(); ++i) indices.push_back(i);
    for (std::size_t i = distance.offset; i < distance.end(); ++i) indices.push_back(i);
    return indices;
}

WordSlots word_slots(const Mention& m, const Document& doc) {
    const auto& sentence = doc.sentences[m.sentence_index];
    WordSlots slots;
    slots.first = sentence[m.start];
    slots.head = sentence[m.head];
    slots.last = sentence[m.end];
    if (m.start > 0) slots.previous = sentence[m.start - 1];
    if (m.end + 1 < sentence.size()) slots.next = sentence[m.end + 1];
    return slots;
}

std::array<float, kDistanceDim> distance_block(std::size_t sentence_distance) {
    std::array<float, kDistanceDim> block{};
    if (sentence_distance < 5) block[sentence_distance] = 1.0f;
    block[5] = static_cast<float>(std::min(sentence_distance, kMaxScaledDistance)) /
               static_cast<float>(kMaxScaledDistance);
    return block;
}

std::array<float, kPairFlagDim> pair_flags(const Mention& a, const Mention& b, const Document& doc) {
    bool exact = a.width() == b.width();
    if (exact) {
        const auto& sa = doc.sentences[a.sentence_index];
        const auto& sb = doc.sentences[b.sentence_index];
        for (std::size_t i = 0; i < a.width() && exact; ++i) {
            exact = ascii_lower(sa[a.start + i]) == ascii_lower(sb[b.start + i]);
        }
    }
    const bool relaxed = head_match(a, b, doc, HeadMatchMode::relaxed);
    const bool same_speaker = doc.speaker_of(a) == doc.speaker_of(b);
    return {exact ? 1.0f : 0.0f, relaxed ? 1.0f : 0.0f, same_speaker ? 1.0f : 0.0f};
}

double cosine_similarity(std::span<const float> a, std::span<const float> b) {
    double dot = 0.0;
    double na = 0.0;
    double nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += static_cast<double>(a[i]) * b[i];
        na += static_cast<double>(a[i]) * a[i];
        nb += static_cast<double>(b[i]) * b[i];
    }
    if (na == 0.0 || nb == 0.0) return 0.0;
    return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

namespace {

std::vector<float> span_average(const Mention& m, const Document& doc, const EmbeddingTable& table) {
    std::vector<double> sum(table.dim(), 0.0);
    const auto& sentence = doc.sentences[m.sentence_index];
    for (std::size_t t = m.start; t <= m.end; ++t) {
        const auto v = table.lookup(sentence[t]);
        for (std::size_t d = 0; d < sum.size(); ++d) sum[d] += v[d];
    }
    std::vector<float> avg(sum.size());
    const double n = static_cast<double>(m.width());
    for (std::size_t d = 0; d < sum.size(); ++d) avg[d] = static_cast<float>(sum[d] / n);
    return avg;
}

void check_dims(const EmbeddingTable& table, const FeatureSchema& schema) {
    if (table.dim() != schema.word_dim) {
        throw ConfigError("embedding dimension " + std::to_string(table.dim()) + " does not match schema word dimension " +
                          std::to_string(schema.word_dim));
    }
    if (schema.total_dim != FeatureSchema::standard(schema.word_dim).total_dim) {
        throw ConfigError("unsupported feature schema layout");
    }
}

void write_words(const Mention& m, const Document& doc, const EmbeddingTable& table, float* out) {
    for (const auto& word : word_slots(m, doc).as_array()) {
        const auto v = table.lookup(word);
        std::copy(v.begin(), v.end(), out);
        out += v.size();
    }
}

}  // namespace

std::array<float, kSimilarityDim> similarity_features(const Mention& a, const Mention& b, const Document& doc,
                                                      const EmbeddingTable& table) {
    const WordSlots sa = word_slots(a, doc);
    const WordSlots sb = word_slots(b, doc);
    return {
        static_cast<float>(cosine_similarity(table.lookup(sa.head), table.lookup(sb.head))),
        static_cast<float>(cosine_similarity(table.lookup(sa.first), table.lookup(sb.first))),
        static_cast<float>(cosine_similarity(table.lookup(sa.last), table.lookup(sb.last))),
        static_cast<float>(cosine_similarity(span_average(a, doc, table), span_average(b, doc, table))),
    };
}

FeatureVector featurize_pair(const MentionPair& pair, const Document& doc, const EmbeddingTable& table,
                             const FeatureSchema& schema, const FeaturizeOptions& options) {
    check_dims(table, schema);
    const Mention& ant = doc.mentions.at(pair.antecedent);
    const Mention& ana = doc.mentions.at(pair.anaphor);

    FeatureVector fv;
    fv.pair_id = pair.pair_id();
    fv.label = pair.label;
    fv.values.assign(schema.total_dim, 0.0f);
    write_words(ant, doc, table, fv.values.data() + schema.ant_words.offset);
    write_words(ana, doc, table, fv.values.data() + schema.ana_words.offset);
    const auto dist = distance_block(pair.sentence_distance);
    std::copy(dist.begin(), dist.end(), fv.values.begin() + static_cast<std::ptrdiff_t>(schema.distance.offset));
    const auto flags = pair_flags(ant, ana, doc);
    std::copy(flags.begin(), flags.end(), fv.values.begin() + static_cast<std::ptrdiff_t>(schema.pair_flags.offset));
    if (options.similarity) {
        const auto sim = similarity_features(ant, ana, doc, table);
        std::copy(sim.begin(), sim.end(), fv.values.begin() + static_cast<std::ptrdiff_t>(schema.similarity.offset));
    }
    return fv;
}

std::vector<float> featurize_tower(const Mention& m, std::size_t sentence_distance, const Document& doc,
                                   const EmbeddingTable& table, const FeatureSchema& schema) {
    check_dims(table, schema);
    std::vector<float> out(schema.tower_dim(), 0.0f);
    write_words(m, doc, table, out.data());
    const auto dist = distance_block(sentence_distance);
    std::copy(dist.begin(), dist.end(), out.begin() + static_cast<std::ptrdiff_t>(schema.ant_words.length));
    return out;
}

void FeatureShard::append(const FeatureVector& fv) {
    if (dim == 0) dim = fv.values.size();
    if (fv.values.size() != dim) throw ConfigError("feature row has wrong dimension");
    pair_ids.push_back(fv.pair_id);
    labels.push_back(fv.label ? 1 : 0);
    values.insert(values.end(), fv.values.begin(), fv.values.end());
}

FeatureShard featurize_pairs(const std::vector<MentionPair>& pairs, const std::vector<Document>& docs,
                             const EmbeddingTable& table, const FeatureSchema& schema,
                             const FeaturizeOptions& options) {
    std::unordered_map<std::string, const Document*> by_id;
    for (const Document& d : docs) by_id.emplace(d.doc_id, &d);

    FeatureShard shard;
    shard.schema_version = schema.version;
    shard.dim = schema.total_dim;
    for (const MentionPair& p : pairs) {
        auto it = by_id.find(p.doc_id);
        if (it == by_id.end()) throw ValidationError("pair refers to unknown document '" + p.doc_id + "'");
        const Document& doc = *it->second;
        if (p.antecedent >= doc.mentions.size() || p.anaphor >= doc.mentions.size() ||
            doc.mentions[p.antecedent].mention_id != p.antecedent_id ||
            doc.mentions[p.anaphor].mention_id != p.anaphor_id) {
            throw ValidationError("pair '" + p.pair_id() + "' does not match the mentions of document '" + p.doc_id +
                                  "'");
        }
        shard.append(featurize_pair(p, doc, table, schema, options));
    }
    return shard;
}

void write_feature_shard(const FeatureShard& shard, const std::filesystem::path& path) {
    std::ostringstream out(std::ios::binary);
    out.write(kShardMagic, 4);
    binio::put_uint<std::uint32_t>(out, shard.schema_version);
    binio::put_uint<std::uint32_t>(out, static_cast<std::uint32_t>(shard.dim));
    binio::put_uint<std::uint64_t>(out, shard.rows());
    for (std::size_t r = 0; r < shard.rows(); ++r) {
        binio::put_uint<std::uint32_t>(out, static_cast<std::uint32_t>(shard.pair_ids[r].size()));
        binio::put_bytes(out, shard.pair_ids[r]);
        binio::put_uint<std::uint8_t>(out, shard.labels[r]);
        for (float v : shard.row(r)) {
            if (!std::isfinite(v)) throw ValidationError("non-finite feature value in row '" + shard.pair_ids[r] + "'");
            binio::put_uint<std::uint16_t>(out, float_to_half(v));
        }
    }
    std::ofstream file(path, std::ios::binary | std::ios::trunc);
    if (!file) throw IoError("cannot write feature shard '" + path.string() + "'");
    const std::string bytes = out.str();
    file.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!file) throw IoError("write failed for '" + path.string() + "'");
}

namespace {

FeatureShardHeader read_header(binio::Reader& in, bool any_version) {
    const std::string magic = in.bytes(4);
    if (magic != std::string_view(kShardMagic, 4)) throw FormatError(in.source() + ": not a feature shard");
    FeatureShardHeader h;
    h.schema_version = in.uint<std::uint32_t>();
    if (!any_version && h.schema_version != kFeatureSchemaVersion) {
        throw FormatError(in.source() + ": unsupported schema version " + std::to_string(h.schema_version));
    }
    h.dim = in.uint<std::uint32_t>();
    h.rows = in.uint<std::uint64_t>();
    return h;
}

}  // namespace

FeatureShardHeader read_feature_shard_header(const std::filesystem::path& path) {
    std::ifstream file(path, std::ios::binary);
    if (!file) throw IoError("cannot open feature shard '" + path.string() + "'");
    binio::Reader in(file, path.string());
    return read_header(in, true);
}

FeatureShard read_feature_shard(const std::filesystem::path& path) {
    std::ifstream file(path, std::ios::binary);
    if (!file) throw IoError("cannot open feature shard '" + path.string() + "'");
    binio::Reader in(file, path.string());
    const FeatureShardHeader h = read_header(in, false);

    FeatureShard shard;
    shard.schema_version = h.schema_version;
    shard.dim = h.dim;
    shard.values.reserve(h.rows * h.dim);
    for (std::uint64_t r = 0; r < h.rows; ++r) {
        const auto id_len = in.uint<std::uint32_t>();
        shard.pair_ids.push_back(in.bytes(id_len));
        const auto label = in.uint<std::uint8_t>();
        if (label > 1) throw FormatError(path.string() + ": bad label byte in row " + std::to_string(r));
        shard.labels.push_back(label);
        for (std::size_t d = 0; d < h.dim; ++d) {
            shard.values.push_back(half_to_float(in.uint<std::uint16_t>()));
        }
    }
    if (!in.at_end()) throw FormatError(path.string() + ": trailing bytes after last row");
    return shard;
}

void zero_section(FeatureShard& shard, const Section& section) {
    for (std::size_t r = 0; r < shard.rows(); ++r) {
        std::fill_n(shard.values.begin() + static_cast<std::ptrdiff_t>(r * shard.dim + section.offset), section.length,
                    0.0f);
    }
}

}  // namespace coref
