#include "coref/checkpoint.hpp"

#include <fstream>
#include <sstream>

#include "coref/binary_io.hpp"
#include "coref/error.hpp"

namespace coref {

namespace {

constexpr char kMagic[4] = {'C', 'R', 'C', 'K'};
constexpr std::uint32_t kMaxDim = 1u << 24;

void put_indices(std::ostream& out, const std::vector<std::size_t>& v) {
    binio::put_uint<std::uint32_t>(out, static_cast<std::uint32_t>(v.size()));
    for (std::size_t x : v) binio::put_uint<std::uint32_t>(out, static_cast<std::uint32_t>(x));
}

std::vector<std::size_t> get_indices(binio::Reader& in) {
    const auto n = in.uint<std::uint32_t>();
    if (n > kMaxDim) throw FormatError(in.source() + ": implausible dimension list length");
    std::vector<std::size_t> v(n);
    for (auto& x : v) x = in.uint<std::uint32_t>();
    return v;
}

}  // namespace

std::string serialize_checkpoint(const ModelParams<float>& params) {
    std::ostringstream out(std::ios::binary);
    out.write(kMagic, 4);
    binio::put_uint<std::uint32_t>(out, kCheckpointVersion);
    binio::put_uint<std::uint8_t>(out, static_cast<std::uint8_t>(params.arch.kind));
    binio::put_uint<std::uint32_t>(out, static_cast<std::uint32_t>(params.arch.input_dim));
    put_indices(out, params.arch.hidden);
    put_indices(out, params.arch.ant_tower);
    put_indices(out, params.arch.ana_tower);
    for (const auto* layer : params.layers()) {
        for (Eigen::Index r = 0; r < layer->weights.rows(); ++r) {
            for (Eigen::Index c = 0; c < layer->weights.cols(); ++c) binio::put_f32(out, layer->weights(r, c));
        }
        for (Eigen::Index r = 0; r < layer->bias.size(); ++r) binio::put_f32(out, layer->bias(r));
    }
    return out.str();
}

ModelParams<float> deserialize_checkpoint(const std::string& bytes, const std::string& source) {
    std::istringstream stream(bytes, std::ios::binary);
    binio::Reader in(stream, source);
    if (in.bytes(4) != std::string_view(kMagic, 4)) throw FormatError(source + ": not a checkpoint file");
    const auto version = in.uint<std::uint32_t>();
    if (version != kCheckpointVersion) {
        throw FormatError(source + ": unsupported checkpoint version " + std::to_string(version));
    }
    const auto kind = in.uint<std::uint8_t>();
    if (kind > static_cast<std::uint8_t>(ModelKind::m4)) throw FormatError(source + ": unknown model kind tag");

    Architecture arch;
    arch.kind = static_cast<ModelKind>(kind);
    arch.input_dim = in.uint<std::uint32_t>();
    arch.hidden = get_indices(in);
    arch.ant_tower = get_indices(in);
    arch.ana_tower = get_indices(in);
    try {
        arch.validate();
    } catch (const ConfigError& e) {
        throw FormatError(source + ": invalid architecture: " + e.what());
    }

    ModelParams<float> params = ModelParams<float>::zeros_like(arch);
    for (auto* layer : params.layers()) {
        for (Eigen::Index r = 0; r < layer->weights.rows(); ++r) {
            for (Eigen::Index c = 0; c < layer->weights.cols(); ++c) layer->weights(r, c) = in.f32();
        }
        for (Eigen::Index r = 0; r < layer->bias.size(); ++r) layer->bias(r) = in.f32();
    }
    if (!in.at_end()) throw FormatError(source + ": trailing bytes after parameters");
    return params;
}

void save_checkpoint(const ModelParams<float>& params, const std::filesystem::path& path) {
    const std::string bytes = serialize_checkpoint(params);
    std::error_code ec;
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write checkpoint '" + path.string() + "'");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed for '" + path.string() + "'");
}

ModelParams<float> load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint '" + path.string() + "'");
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return deserialize_checkpoint(buffer.str(), path.string());
}

}  // namespace coref
