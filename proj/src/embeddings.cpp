#include "coref/embeddings.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "coref/corpus.hpp"
#include "coref/error.hpp"

namespace coref {

EmbeddingTable::EmbeddingTable(std::size_t dim) : dim_(dim), zeros_(dim, 0.0f) {
    if (dim == 0) throw ConfigError("embedding dimension must be positive");
}

bool EmbeddingTable::insert(const std::string& word, std::span<const float> vector) {
    if (vector.size() != dim_) {
        throw ConfigError("embedding for '" + word + "' has " + std::to_string(vector.size()) +
                          " components, table dimension is " + std::to_string(dim_));
    }
    for (float v : vector) {
        if (!std::isfinite(v)) throw ValidationError("embedding for '" + word + "' has a non-finite component");
    }
    if (auto it = index_.find(word); it != index_.end()) {
        std::copy(vector.begin(), vector.end(), data_.begin() + static_cast<std::ptrdiff_t>(it->second * dim_));
        return true;
    }
    index_.emplace(word, words_.size());
    words_.push_back(word);
    data_.insert(data_.end(), vector.begin(), vector.end());
    return false;
}

bool EmbeddingTable::contains(std::string_view word) const { return index_.count(std::string(word)) > 0; }

std::span<const float> EmbeddingTable::lookup(std::optional<std::string_view> word) const {
    if (!word) return zeros_;
    if (auto it = index_.find(std::string(*word)); it != index_.end()) return row(it->second);
    if (auto it = index_.find(ascii_lower(*word)); it != index_.end()) return row(it->second);
    return zeros_;
}

namespace {

std::vector<std::string_view> split_spaces(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
        std::size_t j = i;
        while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') ++j;
        if (j > i) out.push_back(line.substr(i, j - i));
        i = j;
    }
    return out;
}

bool parse_size(std::string_view s, std::size_t& value) {
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
    return ec == std::errc() && ptr == s.data() + s.size();
}

}  // namespace

EmbeddingTable parse_embeddings(std::string_view text, std::size_t expected_dim, std::vector<std::string>* warnings,
                                std::string_view source) {
    EmbeddingTable table(expected_dim);
    const std::string src(source);
    std::vector<float> values(expected_dim);
    std::size_t line_no = 0;
    std::size_t pos = 0;
    bool first_content = true;
    while (pos < text.size()) {
        std::size_t eol = text.find('\n', pos);
        if (eol == std::string_view::npos) eol = text.size();
        const std::string_view line = text.substr(pos, eol - pos);
        pos = eol + 1;
        ++line_no;
        const auto fields = split_spaces(line);
        if (fields.empty()) continue;

        if (first_content) {
            first_content = false;
            std::size_t count = 0;
            std::size_t dim = 0;
            if (fields.size() == 2 && parse_size(fields[0], count) && parse_size(fields[1], dim)) {
                if (dim != expected_dim) {
                    throw ParseError(src + ": header declares dimension " + std::to_string(dim) + ", expected " +
                                         std::to_string(expected_dim),
                                     line_no);
                }
                continue;
            }
        }

        if (fields.size() != expected_dim + 1) {
            throw ParseError(src + ": row for '" + std::string(fields[0]) + "' has " +
                                 std::to_string(fields.size() - 1) + " components, expected " +
                                 std::to_string(expected_dim),
                             line_no);
        }
        for (std::size_t d = 0; d < expected_dim; ++d) {
            const std::string_view f = fields[d + 1];
            float v = 0.0f;
            auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
            if (ec != std::errc() || ptr != f.data() + f.size()) {
                throw ParseError(src + ": bad number '" + std::string(f) + "'", line_no);
            }
            if (!std::isfinite(v)) throw ParseError(src + ": non-finite value '" + std::string(f) + "'", line_no);
            values[d] = v;
        }
        const std::string word(fields[0]);
        if (table.insert(word, values) && warnings) {
            warnings->push_back(src + ":" + std::to_string(line_no) + ": duplicate word '" + word +
                                "', keeping the last occurrence");
        }
    }
    return table;
}

EmbeddingTable load_embeddings(const std::filesystem::path& path, std::size_t expected_dim,
                               std::vector<std::string>* warnings) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open embedding file '" + path.string() + "'");
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return parse_embeddings(buffer.str(), expected_dim, warnings, path.string());
}

std::string format_embeddings(const EmbeddingTable& table) {
    std::string out = std::to_string(table.size()) + " " + std::to_string(table.dim()) + "\n";
    char buf[32];
    for (std::size_t i = 0; i < table.size(); ++i) {
        out += table.words()[i];
        for (float v : table.row(i)) {
            auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
            out += ' ';
            out.append(buf, ptr);
        }
        out += '\n';
    }
    return out;
}

void write_embeddings(const EmbeddingTable& table, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write embedding file '" + path.string() + "'");
    out << format_embeddings(table);
    if (!out) throw IoError("write failed for '" + path.string() + "'");
}

}  // namespace coref
