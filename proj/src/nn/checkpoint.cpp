#include "xfer/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <nlohmann/json.hpp>

namespace xfer {
namespace {

using nlohmann::json;

constexpr char kMagic[8] = {'X', 'F', 'E', 'R', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

template <class T>
void put(std::ostream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <class T>
T get(std::istream& in, const std::filesystem::path& path) {
    T v{};
    if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) throw CheckpointError("truncated checkpoint " + path.string());
    return v;
}

json spec_to_json(const ModelSpec& s) {
    return {{"kind", to_string(s.kind)}, {"hidden", s.hidden}, {"input_shape", s.input_shape}, {"classes", s.classes}};
}

ModelSpec spec_from_json(const json& j) {
    ModelSpec s;
    s.kind = model_kind_from_string(j.at("kind").get<std::string>());
    s.hidden = j.at("hidden").get<std::vector<std::size_t>>();
    s.input_shape = j.at("input_shape").get<ag::Shape>();
    s.classes = j.at("classes").get<std::size_t>();
    return s;
}

}  // namespace

void save_checkpoint(const Model& model, const std::filesystem::path& path) {
    json header;
    header["spec"] = spec_to_json(model.spec());
    header["seed"] = model.seed();
    header["metadata"] = model.metadata();
    header["tensors"] = json::array();
    std::uint64_t offset = 0;
    for (const auto& p : model.parameters()) {
        header["tensors"].push_back({{"name", p.name}, {"shape", p.value.shape()}, {"offset", offset}});
        offset += p.value.numel() * sizeof(double);
    }
    const std::string text = header.dump();

    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot write " + path.string());
    out.write(kMagic, sizeof kMagic);
    put(out, kVersion);
    put(out, static_cast<std::uint64_t>(text.size()));
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& p : model.parameters())
        out.write(reinterpret_cast<const char*>(p.value.values().data()),
                  static_cast<std::streamsize>(p.value.numel() * sizeof(double)));
    if (!out) throw CheckpointError("write failed for " + path.string());
}

Model load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError("cannot open " + path.string());
    char magic[8];
    if (!in.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof magic) != 0)
        throw CheckpointError("not a checkpoint: " + path.string());
    if (const auto version = get<std::uint32_t>(in, path); version != kVersion)
        throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
    const auto header_len = get<std::uint64_t>(in, path);
    std::string text(header_len, '\0');
    if (!in.read(text.data(), static_cast<std::streamsize>(header_len)))
        throw CheckpointError("truncated checkpoint header in " + path.string());
    const std::vector<char> payload{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};

    try {
        const json header = json::parse(text);
        const ModelSpec spec = spec_from_json(header.at("spec"));
        std::vector<NamedTensor> params;
        for (const auto& t : header.at("tensors")) {
            const auto shape = t.at("shape").get<ag::Shape>();
            const auto offset = t.at("offset").get<std::uint64_t>();
            const std::size_t bytes = ag::numel(shape) * sizeof(double);
            if (offset + bytes > payload.size()) throw CheckpointError("tensor data out of bounds in " + path.string());
            std::vector<double> values(ag::numel(shape));
            std::memcpy(values.data(), payload.data() + offset, bytes);
            params.push_back({t.at("name").get<std::string>(), ag::Tensor(shape, std::move(values))});
        }
        Model m = Model::from_parameters(spec, header.at("seed").get<std::uint64_t>(), std::move(params));
        m.metadata() = header.at("metadata").get<std::map<std::string, std::string>>();
        return m;
    } catch (const json::exception& e) {
        throw CheckpointError("malformed checkpoint header in " + path.string() + ": " + e.what());
    } catch (const std::invalid_argument& e) {
        throw CheckpointError(std::string("checkpoint does not match its spec: ") + e.what());
    }
}

}  // namespace xfer
