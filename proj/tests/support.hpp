// Fixtures and brute-force oracles shared by the unit and acceptance tests.
// The oracles deliberately avoid the library's own helpers.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <sys/wait.h>
#include <unistd.h>

#include "coref/corpus.hpp"
#include "coref/eval.hpp"

namespace support {

namespace fs = std::filesystem;

inline fs::path scratch_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("corefpair-test-" + name + "-" + std::to_string(::getpid()));
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

inline std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream out;
    out << in.rdbuf();
    return out.str();
}

inline std::vector<std::string> split_words(const std::string& text) {
    std::istringstream in(text);
    std::vector<std::string> words;
    for (std::string w; in >> w;) words.push_back(w);
    return words;
}

inline coref::Mention mention(std::string id, std::size_t sentence, std::size_t start, std::size_t end,
                              std::size_t head, coref::MentionKind kind,
                              std::optional<std::string> entity = std::nullopt) {
    coref::Mention m;
    m.mention_id = std::move(id);
    m.sentence_index = sentence;
    m.start = start;
    m.end = end;
    m.head = head;
    m.kind = kind;
    m.entity_id = std::move(entity);
    return m;
}

/// Sentences given as space-separated text; one speaker per sentence.
inline coref::Document document(std::string id, const std::vector<std::string>& sentences,
                                std::vector<std::string> speakers, std::vector<coref::Mention> mentions) {
    coref::Document d;
    d.doc_id = std::move(id);
    for (const auto& s : sentences) d.sentences.push_back(split_words(s));
    d.speakers = std::move(speakers);
    d.mentions = std::move(mentions);
    return d;
}

// ------------------------------------------------------------------ oracles

/// Fraction of (positive, negative) pairs ranked correctly, ties 1/2.
inline double brute_auc(const std::vector<coref::Prediction>& preds) {
    double wins = 0.0;
    double pairs = 0.0;
    for (const auto& p : preds) {
        if (!p.label) continue;
        for (const auto& n : preds) {
            if (n.label) continue;
            pairs += 1.0;
            if (p.probability > n.probability) wins += 1.0;
            else if (p.probability == n.probability) wins += 0.5;
        }
    }
    return wins / pairs;
}

inline double direct_f1(const std::vector<coref::Prediction>& preds, double threshold) {
    double tp = 0, fp = 0, fn = 0;
    for (const auto& p : preds) {
        const bool yes = p.probability >= threshold;
        if (yes && p.label) tp += 1;
        if (yes && !p.label) fp += 1;
        if (!yes && p.label) fn += 1;
    }
    return tp == 0 ? 0.0 : 2 * tp / (2 * tp + fp + fn);
}

/// Exhaustive search over {0, 1, midpoints of consecutive distinct scores}.
inline std::pair<double, double> brute_tune(const std::vector<coref::Prediction>& preds) {
    std::set<double> scores;
    for (const auto& p : preds) scores.insert(p.probability);
    std::vector<double> candidates = {0.0, 1.0};
    for (auto it = scores.begin(); std::next(it) != scores.end(); ++it) {
        candidates.push_back((*it + *std::next(it)) / 2.0);
    }
    std::sort(candidates.begin(), candidates.end());
    double best_t = 0.0, best_f1 = -1.0;
    for (double t : candidates) {
        const double f1 = direct_f1(preds, t);
        if (f1 > best_f1) {
            best_f1 = f1;
            best_t = t;
        }
    }
    return {best_t, best_f1};
}

/// Spearman rank correlation of values against their position (ties share
/// the mean rank). Zero when the values are constant.
inline double spearman_vs_index(const std::vector<double>& values) {
    const std::size_t n = values.size();
    auto ranks = [](const std::vector<double>& v) {
        std::vector<double> r(v.size());
        for (std::size_t i = 0; i < v.size(); ++i) {
            double below = 0, equal = 0;
            for (double x : v) {
                if (x < v[i]) below += 1;
                else if (x == v[i]) equal += 1;
            }
            r[i] = below + (equal + 1) / 2;
        }
        return r;
    };
    std::vector<double> index(n);
    for (std::size_t i = 0; i < n; ++i) index[i] = static_cast<double>(i);
    const auto a = ranks(index);
    const auto b = ranks(values);
    const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
    const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
    double sab = 0, saa = 0, sbb = 0;
    for (std::size_t i = 0; i < n; ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    return sbb == 0 ? 0.0 : sab / std::sqrt(saa * sbb);
}

inline std::vector<coref::Prediction> random_predictions(std::mt19937_64& gen, std::size_t n, bool coarse) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::uniform_int_distribution<int> level(0, 9);
    std::vector<coref::Prediction> preds(n);
    for (std::size_t i = 0; i < n; ++i) {
        preds[i].pair_id = "p" + std::to_string(i);
        preds[i].probability = coarse ? level(gen) / 9.0 : u(gen);
        preds[i].label = u(gen) < 0.4;
    }
    return preds;
}

inline bool has_both_classes(const std::vector<coref::Prediction>& preds) {
    bool pos = false, neg = false;
    for (const auto& p : preds) (p.label ? pos : neg) = true;
    return pos && neg;
}

/// Runs the command-line tool; returns its exit status.
inline int run_tool(const std::string& binary, const std::string& args, const fs::path& log = {}) {
    std::string cmd = "\"" + binary + "\" " + args;
    cmd += log.empty() ? " > /dev/null 2>&1" : " > \"" + log.string() + "\" 2>&1";
    const int status = std::system(cmd.c_str());
    if (status == -1) return -1;
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace support
