#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "coref/corpus.hpp"
#include "coref/embeddings.hpp"

namespace coref {

/// Parameters of the synthetic corpus generator.
///
/// Every entity belongs to a concept. A concept owns a group of synonym nouns
/// whose embeddings sit near a shared random centroid, and a pool of names
/// embedded near the same centroid with more noise. Coreferent mentions of
/// one entity use distinct synonyms, so they never head-match and the only
/// reliable signal is embedding similarity of their words.
struct SynthSpec {
    std::size_t documents = 200;
    std::size_t sentences_per_document = 16;
    std::size_t mentions_per_document = 100;
    std::size_t chains_per_document = 2;  // entities with more than one mention
    std::size_t min_chain_length = 2;
    std::size_t max_chain_length = 3;
    std::size_t max_chain_gap = 3;        // sentences between consecutive chain mentions

    std::size_t concepts = 1000;
    std::size_t synonyms_per_concept = 4;
    std::size_t names_per_concept = 2;
    std::size_t adjectives = 60;
    std::size_t fillers = 120;
    std::size_t speakers = 3;
    std::size_t dim = kDefaultEmbeddingDim;

    double synonym_noise = 0.8;   // cos between synonyms ~ 1/(1+noise^2)
    double name_noise = 1.0;
    double named_chain_start = 0.3;    // P(first mention of a chain is named)
    double named_singleton = 0.15;
    double pronominal_singleton = 0.15;
    double adjective_rate = 0.3;
    double confuser_rate = 0.05;  // P(singleton shares a chain entity's concept)

    /// Throws ArgumentError when a size is zero or chains cannot fit.
    void validate() const;
};

std::vector<Document> synth_corpus(const SynthSpec& spec, std::uint64_t seed);

/// Embedding table covering the generator's vocabulary (punctuation is left
/// out and resolves to zeros).
EmbeddingTable synth_embeddings(const SynthSpec& spec, std::uint64_t seed);

}  // namespace coref
