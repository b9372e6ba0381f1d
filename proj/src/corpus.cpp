#include "coref/corpus.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <numeric>
#include <sstream>
#include <tuple>

#include <json.hpp>

#include "coref/error.hpp"
#include "coref/rng.hpp"

namespace coref {

using ordered_json = nlohmann::ordered_json;

std::string_view to_string(MentionKind kind) {
    switch (kind) {
        case MentionKind::named: return "named";
        case MentionKind::pronominal: return "pronominal";
        case MentionKind::nominal: return "nominal";
    }
    return "nominal";
}

MentionKind parse_mention_kind(std::string_view text) {
    if (text == "named") return MentionKind::named;
    if (text == "pronominal") return MentionKind::pronominal;
    if (text == "nominal") return MentionKind::nominal;
    throw ArgumentError("unknown mention kind '" + std::string(text) + "'");
}

std::string_view to_string(HeadMatchMode mode) { return mode == HeadMatchMode::exact ? "exact" : "relaxed"; }

HeadMatchMode parse_head_match_mode(std::string_view text) {
    if (text == "exact") return HeadMatchMode::exact;
    if (text == "relaxed") return HeadMatchMode::relaxed;
    throw ArgumentError("unknown head match mode '" + std::string(text) + "'");
}

std::string ascii_lower(std::string_view text) {
    std::string out(text);
    for (char& c : out) {
        if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
    }
    return out;
}

namespace {

bool has_separator(std::string_view s) {
    return s.find_first_of("\t\n\r") != std::string_view::npos;
}

}  // namespace

void Document::validate() const {
    auto fail = [&](const std::string& what) {
        throw ValidationError("document '" + doc_id + "': " + what);
    };
    if (doc_id.empty() || has_separator(doc_id)) fail("doc_id must be non-empty without tabs or newlines");
    if (speakers.size() != sentences.size()) {
        fail("speakers has " + std::to_string(speakers.size()) + " entries but there are " +
             std::to_string(sentences.size()) + " sentences");
    }
    for (std::size_t s = 0; s < sentences.size(); ++s) {
        for (std::size_t t = 0; t < sentences[s].size(); ++t) {
            if (sentences[s][t].empty()) {
                fail("empty token at sentence " + std::to_string(s) + " index " + std::to_string(t));
            }
        }
    }
    std::vector<std::string_view> ids;
    for (const Mention& m : mentions) {
        auto mfail = [&](const std::string& what) { fail("mention '" + m.mention_id + "': " + what); };
        if (m.mention_id.empty() || has_separator(m.mention_id)) mfail("invalid mention_id");
        if (m.sentence_index >= sentences.size()) mfail("sentence index out of bounds");
        const std::size_t len = sentences[m.sentence_index].size();
        if (m.start > m.end) mfail("start after end");
        if (m.end >= len) {
            mfail("span end " + std::to_string(m.end) + " beyond sentence length " + std::to_string(len));
        }
        if (m.head < m.start || m.head > m.end) mfail("head outside span");
        ids.push_back(m.mention_id);
    }
    std::sort(ids.begin(), ids.end());
    if (auto dup = std::adjacent_find(ids.begin(), ids.end()); dup != ids.end()) {
        fail("duplicate mention_id '" + std::string(*dup) + "'");
    }
}

std::vector<std::size_t> Document::document_order() const {
    std::vector<std::size_t> order(mentions.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) {
        const Mention& a = mentions[i];
        const Mention& b = mentions[j];
        return std::tie(a.sentence_index, a.start, a.end) < std::tie(b.sentence_index, b.start, b.end);
    });
    return order;
}

namespace {

Document document_from_json(const ordered_json& j) {
    Document doc;
    doc.doc_id = j.at("doc_id").get<std::string>();
    doc.sentences = j.at("sentences").get<std::vector<std::vector<std::string>>>();
    doc.speakers = j.at("speakers").get<std::vector<std::string>>();
    const auto& mentions = j.at("mentions");
    if (!mentions.is_array()) throw ArgumentError("mentions must be an array");
    std::size_t index = 0;
    for (const auto& jm : mentions) {
        Mention m;
        m.mention_id = jm.contains("id") ? jm.at("id").get<std::string>() : "m" + std::to_string(index);
        m.sentence_index = jm.at("sentence").get<std::size_t>();
        m.start = jm.at("start").get<std::size_t>();
        m.end = jm.at("end").get<std::size_t>();
        m.head = jm.at("head").get<std::size_t>();
        m.kind = parse_mention_kind(jm.at("kind").get<std::string>());
        if (jm.contains("entity") && !jm.at("entity").is_null()) {
            m.entity_id = jm.at("entity").get<std::string>();
        }
        doc.mentions.push_back(std::move(m));
        ++index;
    }
    return doc;
}

ordered_json document_to_json(const Document& doc) {
    ordered_json j;
    j["doc_id"] = doc.doc_id;
    j["sentences"] = doc.sentences;
    j["speakers"] = doc.speakers;
    ordered_json mentions = ordered_json::array();
    for (const Mention& m : doc.mentions) {
        ordered_json jm;
        jm["id"] = m.mention_id;
        jm["sentence"] = m.sentence_index;
        jm["start"] = m.start;
        jm["end"] = m.end;
        jm["head"] = m.head;
        jm["kind"] = to_string(m.kind);
        jm["entity"] = m.entity_id ? ordered_json(*m.entity_id) : ordered_json(nullptr);
        mentions.push_back(std::move(jm));
    }
    j["mentions"] = std::move(mentions);
    return j;
}

}  // namespace

std::vector<Document> parse_corpus(std::string_view text, std::string_view source) {
    std::vector<Document> docs;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos < text.size()) {
        std::size_t eol = text.find('\n', pos);
        if (eol == std::string_view::npos) eol = text.size();
        std::string_view line = text.substr(pos, eol - pos);
        pos = eol + 1;
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;

        Document doc;
        try {
            doc = document_from_json(ordered_json::parse(line));
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(std::string(source) + ": malformed document record: " + e.what(), line_no);
        } catch (const ArgumentError& e) {
            throw ParseError(std::string(source) + ": " + e.what(), line_no);
        }
        doc.validate();
        docs.push_back(std::move(doc));
    }
    return docs;
}

std::vector<Document> load_corpus(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open corpus file '" + path.string() + "'");
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return parse_corpus(buffer.str(), path.string());
}

std::string format_document(const Document& doc) { return document_to_json(doc).dump(); }

void write_corpus(const std::vector<Document>& docs, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write corpus file '" + path.string() + "'");
    for (const Document& doc : docs) {
        out << format_document(doc) << '\n';
    }
    if (!out) throw IoError("write failed for '" + path.string() + "'");
}

bool head_match(const Mention& a, const Mention& b, const Document& doc, HeadMatchMode mode) {
    const std::string head_a = ascii_lower(doc.head_text(a));
    const std::string head_b = ascii_lower(doc.head_text(b));
    if (mode == HeadMatchMode::exact) return head_a == head_b;

    auto occurs_in = [&](const std::string& word, const Mention& m) {
        const auto& sentence = doc.sentences[m.sentence_index];
        for (std::size_t t = m.start; t <= m.end; ++t) {
            if (ascii_lower(sentence[t]) == word) return true;
        }
        return false;
    };
    return occurs_in(head_a, b) || occurs_in(head_b, a);
}

std::vector<MentionPair> enumerate_pairs(const Document& doc, const PairFilterConfig& filter) {
    const std::vector<std::size_t> order = doc.document_order();
    std::vector<MentionPair> pairs;
    for (std::size_t j = 1; j < order.size(); ++j) {
        const Mention& anaphor = doc.mentions[order[j]];
        if (filter.require_nominal_anaphor && anaphor.kind != MentionKind::nominal) continue;
        for (std::size_t i = 0; i < j; ++i) {
            const Mention& antecedent = doc.mentions[order[i]];
            if (filter.require_nominal_antecedent && antecedent.kind != MentionKind::nominal) continue;
            if (filter.exclude_head_match && head_match(antecedent, anaphor, doc, filter.head_match_mode)) continue;

            MentionPair p;
            p.doc_id = doc.doc_id;
            p.antecedent_id = antecedent.mention_id;
            p.anaphor_id = anaphor.mention_id;
            p.antecedent = order[i];
            p.anaphor = order[j];
            p.label = antecedent.entity_id && anaphor.entity_id && *antecedent.entity_id == *anaphor.entity_id;
            p.sentence_distance = anaphor.sentence_index - antecedent.sentence_index;
            pairs.push_back(std::move(p));
        }
    }
    return pairs;
}

std::vector<MentionPair> downsample(const std::vector<MentionPair>& pairs, double negative_rate,
                                    std::uint64_t seed) {
    if (!(negative_rate > 0.0 && negative_rate <= 1.0)) {
        throw ArgumentError("negative rate must lie in (0, 1], got " + std::to_string(negative_rate));
    }
    Rng rng(seed);
    std::vector<MentionPair> kept;
    for (const MentionPair& p : pairs) {
        if (p.label || rng.bernoulli(negative_rate)) kept.push_back(p);
    }
    return kept;
}

double expected_positive_rate(double positives, double negatives, double negative_rate) {
    return positives / (positives + negative_rate * negatives);
}

std::filesystem::path shard_path(const std::filesystem::path& out_dir, std::string_view stem,
                                 std::size_t index, std::size_t count) {
    return out_dir / (std::string(stem) + "." + std::to_string(index) + "-of-" + std::to_string(count) + ".pairs");
}

void write_pair_file(const std::vector<MentionPair>& pairs, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write pair shard '" + path.string() + "'");
    out << "#doc_id\tantecedent_id\tanaphor_id\tantecedent_index\tanaphor_index\tlabel\tsentence_distance\n";
    for (const MentionPair& p : pairs) {
        out << p.doc_id << '\t' << p.antecedent_id << '\t' << p.anaphor_id << '\t' << p.antecedent << '\t'
            << p.anaphor << '\t' << (p.label ? 1 : 0) << '\t' << p.sentence_distance << '\n';
    }
    if (!out) throw IoError("write failed for '" + path.string() + "'");
}

namespace {

std::size_t parse_index(std::string_view field, std::size_t line_no, const std::string& source) {
    std::size_t value = 0;
    auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
    if (ec != std::errc() || ptr != field.data() + field.size()) {
        throw ParseError(source + ": bad integer field '" + std::string(field) + "'", line_no);
    }
    return value;
}

}  // namespace

std::vector<MentionPair> read_pair_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open pair shard '" + path.string() + "'");
    std::vector<MentionPair> pairs;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        std::vector<std::string_view> fields;
        std::string_view rest(line);
        while (true) {
            const std::size_t tab = rest.find('\t');
            fields.push_back(rest.substr(0, tab));
            if (tab == std::string_view::npos) break;
            rest.remove_prefix(tab + 1);
        }
        if (fields.size() != 7) {
            throw ParseError(path.string() + ": expected 7 tab-separated fields, got " + std::to_string(fields.size()),
                             line_no);
        }
        MentionPair p;
        p.doc_id = fields[0];
        p.antecedent_id = fields[1];
        p.anaphor_id = fields[2];
        p.antecedent = parse_index(fields[3], line_no, path.string());
        p.anaphor = parse_index(fields[4], line_no, path.string());
        const std::size_t label = parse_index(fields[5], line_no, path.string());
        if (label > 1) throw ParseError(path.string() + ": label must be 0 or 1", line_no);
        p.label = label == 1;
        p.sentence_distance = parse_index(fields[6], line_no, path.string());
        pairs.push_back(std::move(p));
    }
    return pairs;
}

std::vector<std::filesystem::path> shard_pairs(const std::vector<MentionPair>& pairs, std::size_t k,
                                               const std::filesystem::path& out_dir, std::string_view stem) {
    if (k == 0) throw ArgumentError("shard count must be at least 1");
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create shard directory '" + out_dir.string() + "': " + ec.message());

    std::vector<std::vector<MentionPair>> buckets(k);
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        buckets[i % k].push_back(pairs[i]);
    }
    std::vector<std::filesystem::path> paths;
    for (std::size_t s = 0; s < k; ++s) {
        paths.push_back(shard_path(out_dir, stem, s, k));
        write_pair_file(buckets[s], paths.back());
    }
    return paths;
}

}  // namespace coref
