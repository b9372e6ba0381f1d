#include "coref/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "coref/error.hpp"
#include "coref/rng.hpp"

namespace coref {

namespace {

constexpr std::uint64_t kDocStream = 1;
constexpr std::uint64_t kEmbeddingStream = 2;

const std::vector<std::string> kDeterminers = {"the", "a", "this", "that", "my", "his", "her", "their"};
const std::vector<std::string> kPronouns = {"he", "she", "it", "they", "him", "them"};

std::string synonym_word(std::size_t concept_id, std::size_t k) {
    return "n" + std::to_string(concept_id) + "s" + std::to_string(k);
}
std::string name_word(std::size_t concept_id, std::size_t k) {
    return "N" + std::to_string(concept_id) + "x" + std::to_string(k);
}
std::string adjective_word(std::size_t i) { return "adj" + std::to_string(i); }
std::string filler_word(std::size_t i) { return "w" + std::to_string(i); }

struct PlannedMention {
    std::size_t sentence = 0;
    MentionKind kind = MentionKind::nominal;
    std::vector<std::string> tokens;
    std::size_t head_offset = 0;
    std::optional<std::string> entity;
};

std::vector<std::string> nominal_span(const SynthSpec& spec, Rng& rng, const std::string& head,
                                      std::size_t& head_offset) {
    std::vector<std::string> tokens;
    tokens.push_back(kDeterminers[rng.below(kDeterminers.size())]);
    if (rng.bernoulli(spec.adjective_rate)) tokens.push_back(adjective_word(rng.below(spec.adjectives)));
    head_offset = tokens.size();
    tokens.push_back(head);
    return tokens;
}

Document generate_document(const SynthSpec& spec, Rng& rng, std::size_t doc_index) {
    const std::size_t S = spec.sentences_per_document;
    std::vector<PlannedMention> planned;

    // Chains first: distinct concepts, distinct synonyms per mention.
    std::vector<std::size_t> chain_concepts;
    while (chain_concepts.size() < spec.chains_per_document) {
        const std::size_t c = rng.below(spec.concepts);
        if (std::find(chain_concepts.begin(), chain_concepts.end(), c) == chain_concepts.end()) {
            chain_concepts.push_back(c);
        }
    }
    for (std::size_t e = 0; e < chain_concepts.size(); ++e) {
        const std::size_t concept_id = chain_concepts[e];
        const std::size_t length =
            spec.min_chain_length + rng.below(spec.max_chain_length - spec.min_chain_length + 1);
        std::vector<std::size_t> synonyms(spec.synonyms_per_concept);
        std::iota(synonyms.begin(), synonyms.end(), std::size_t{0});
        rng.shuffle(std::span<std::size_t>(synonyms));

        const std::size_t span_needed = (length - 1) * spec.max_chain_gap;
        std::size_t sentence = span_needed >= S ? 0 : rng.below(S - span_needed);
        std::size_t next_synonym = 0;
        for (std::size_t i = 0; i < length; ++i) {
            PlannedMention m;
            m.entity = "e" + std::to_string(e);
            if (i > 0) sentence = std::min(S - 1, sentence + rng.below(spec.max_chain_gap + 1));
            m.sentence = sentence;
            if (i == 0 && rng.bernoulli(spec.named_chain_start)) {
                m.kind = MentionKind::named;
                m.tokens = {name_word(concept_id, rng.below(spec.names_per_concept))};
                m.head_offset = 0;
            } else {
                m.kind = MentionKind::nominal;
                m.tokens = nominal_span(spec, rng, synonym_word(concept_id, synonyms[next_synonym++]), m.head_offset);
            }
            planned.push_back(std::move(m));
        }
    }

    // Singletons: no entity id, so every pair they take part in is negative.
    while (planned.size() < spec.mentions_per_document) {
        PlannedMention m;
        m.sentence = rng.below(S);
        const double u = rng.uniform();
        std::size_t concept_id = rng.below(spec.concepts);
        if (!chain_concepts.empty() && rng.bernoulli(spec.confuser_rate)) {
            concept_id = chain_concepts[rng.below(chain_concepts.size())];
        }
        if (u < spec.pronominal_singleton) {
            m.kind = MentionKind::pronominal;
            m.tokens = {kPronouns[rng.below(kPronouns.size())]};
            m.head_offset = 0;
        } else if (u < spec.pronominal_singleton + spec.named_singleton) {
            m.kind = MentionKind::named;
            m.tokens = {name_word(concept_id, rng.below(spec.names_per_concept))};
            m.head_offset = 0;
        } else {
            m.kind = MentionKind::nominal;
            m.tokens = nominal_span(spec, rng, synonym_word(concept_id, rng.below(spec.synonyms_per_concept)),
                                    m.head_offset);
        }
        planned.push_back(std::move(m));
    }

    // Lay out sentences: fillers interleaved with the sentence's mentions in
    // random order, terminated by a period.
    Document doc;
    doc.doc_id = "synth" + std::to_string(doc_index);
    doc.sentences.resize(S);
    for (std::size_t s = 0; s < S; ++s) {
        doc.speakers.push_back("speaker" + std::to_string(rng.below(spec.speakers)));
    }
    std::vector<std::vector<std::size_t>> by_sentence(S);
    for (std::size_t i = 0; i < planned.size(); ++i) by_sentence[planned[i].sentence].push_back(i);

    std::vector<std::pair<std::size_t, Mention>> placed;  // (plan index, mention)
    for (std::size_t s = 0; s < S; ++s) {
        auto& members = by_sentence[s];
        rng.shuffle(std::span<std::size_t>(members));
        auto& tokens = doc.sentences[s];
        auto add_fillers = [&](std::size_t max_count) {
            const std::size_t n = rng.below(max_count + 1);
            for (std::size_t k = 0; k < n; ++k) tokens.push_back(filler_word(rng.below(spec.fillers)));
        };
        add_fillers(2);
        for (std::size_t idx : members) {
            const PlannedMention& pm = planned[idx];
            Mention m;
            m.sentence_index = s;
            m.start = tokens.size();
            m.end = m.start + pm.tokens.size() - 1;
            m.head = m.start + pm.head_offset;
            m.kind = pm.kind;
            m.entity_id = pm.entity;
            tokens.insert(tokens.end(), pm.tokens.begin(), pm.tokens.end());
            placed.emplace_back(idx, std::move(m));
            tokens.push_back(filler_word(rng.below(spec.fillers)));
            add_fillers(2);
        }
        tokens.push_back(".");
    }

    std::sort(placed.begin(), placed.end(), [](const auto& a, const auto& b) {
        return std::tie(a.second.sentence_index, a.second.start) < std::tie(b.second.sentence_index, b.second.start);
    });
    for (std::size_t i = 0; i < placed.size(); ++i) {
        placed[i].second.mention_id = "m" + std::to_string(i);
        doc.mentions.push_back(std::move(placed[i].second));
    }
    return doc;
}

std::vector<float> unit_vector(std::vector<double> v) {
    double norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    std::vector<float> out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = static_cast<float>(v[i] / norm);
    return out;
}

std::vector<double> gaussian(Rng& rng, std::size_t dim, double scale) {
    std::vector<double> v(dim);
    for (double& x : v) x = rng.normal() * scale;
    return v;
}

std::vector<float> near(const std::vector<double>& centroid, Rng& rng, double noise) {
    const double scale = noise / std::sqrt(static_cast<double>(centroid.size()));
    std::vector<double> v(centroid.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = centroid[i] + rng.normal() * scale;
    return unit_vector(std::move(v));
}

}  // namespace

void SynthSpec::validate() const {
    if (sentences_per_document == 0 || concepts == 0 || synonyms_per_concept == 0 || names_per_concept == 0 ||
        adjectives == 0 || fillers == 0 || speakers == 0 || dim == 0) {
        throw ArgumentError("synthetic corpus sizes must be positive");
    }
    if (min_chain_length < 2 || max_chain_length < min_chain_length) {
        throw ArgumentError("chain lengths must satisfy 2 <= min <= max");
    }
    if (max_chain_length > synonyms_per_concept) {
        throw ArgumentError("need at least max_chain_length synonyms per concept_id");
    }
    if (chains_per_document > concepts) throw ArgumentError("more chains per document than concepts");
    if (chains_per_document * max_chain_length > mentions_per_document) {
        throw ArgumentError("chains do not fit in mentions_per_document");
    }
}

std::vector<Document> synth_corpus(const SynthSpec& spec, std::uint64_t seed) {
    spec.validate();
    Rng rng(mix_seed(seed, kDocStream));
    std::vector<Document> docs;
    docs.reserve(spec.documents);
    for (std::size_t d = 0; d < spec.documents; ++d) {
        docs.push_back(generate_document(spec, rng, d));
    }
    return docs;
}

EmbeddingTable synth_embeddings(const SynthSpec& spec, std::uint64_t seed) {
    spec.validate();
    Rng rng(mix_seed(seed, kEmbeddingStream));
    const double unit = 1.0 / std::sqrt(static_cast<double>(spec.dim));
    EmbeddingTable table(spec.dim);
    for (std::size_t c = 0; c < spec.concepts; ++c) {
        const std::vector<double> centroid = gaussian(rng, spec.dim, unit);
        for (std::size_t k = 0; k < spec.synonyms_per_concept; ++k) {
            table.insert(synonym_word(c, k), near(centroid, rng, spec.synonym_noise));
        }
        for (std::size_t k = 0; k < spec.names_per_concept; ++k) {
            table.insert(name_word(c, k), near(centroid, rng, spec.name_noise));
        }
    }
    auto add_random = [&](const std::string& word) { table.insert(word, unit_vector(gaussian(rng, spec.dim, unit))); };
    for (const auto& w : kDeterminers) add_random(w);
    for (const auto& w : kPronouns) add_random(w);
    for (std::size_t i = 0; i < spec.adjectives; ++i) add_random(adjective_word(i));
    for (std::size_t i = 0; i < spec.fillers; ++i) add_random(filler_word(i));
    return table;
}

}  // namespace coref
