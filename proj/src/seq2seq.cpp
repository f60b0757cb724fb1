#include "semidqg/seq2seq.hpp"

#include <cstring>
#include <fstream>
#include <map>
#include <mutex>

#include "semidqg/errors.hpp"
#include "semidqg/hashing.hpp"
#include "semidqg/tiny_gru.hpp"

namespace semidqg::seq2seq {

namespace {

constexpr const char* kCkptMagic = "SEMIDQG-CKPT v1";

std::mutex g_factory_mutex;

std::map<std::string, BackendFactory>& factory_registry() {
    static std::map<std::string, BackendFactory> reg;
    return reg;
}

void ensure_builtins_locked() {
    auto& reg = factory_registry();
    if (reg.count("tiny-gru") == 0)
        reg["tiny-gru"] = [](const nlohmann::json& spec) {
            return TinyGru::from_spec(spec);
        };
}

}  // namespace

DecodeConfig DecodeConfig::validated() const {
    DecodeConfig out = *this;
    if (out.beam_size < 1 || out.num_return < 1 || out.max_len < 1)
        throw argument_error("decode config fields must be >= 1");
    if (out.strategy == DecodeStrategy::GREEDY) {
        out.num_return = 1;
    } else if (out.num_return > out.beam_size) {
        throw argument_error("num_return exceeds beam_size");
    }
    return out;
}

void register_backend(const std::string& id, BackendFactory factory) {
    std::lock_guard<std::mutex> lock(g_factory_mutex);
    factory_registry()[id] = std::move(factory);
}

std::unique_ptr<Seq2SeqBackend> create_backend(const std::string& id,
                                               const nlohmann::json& spec) {
    std::lock_guard<std::mutex> lock(g_factory_mutex);
    ensure_builtins_locked();
    auto it = factory_registry().find(id);
    if (it == factory_registry().end())
        throw config_error("unknown seq2seq backend: " + id);
    return it->second(spec);
}

std::string stage_tag_name(StageTag t) {
    switch (t) {
        case StageTag::STAGE1: return "STAGE1";
        case StageTag::STAGE2: return "STAGE2";
        case StageTag::STAGE3: return "STAGE3";
        case StageTag::BASELINE: return "BASELINE";
    }
    return "?";
}

StageTag parse_stage_tag(const std::string& s) {
    if (s == "STAGE1") return StageTag::STAGE1;
    if (s == "STAGE2") return StageTag::STAGE2;
    if (s == "STAGE3") return StageTag::STAGE3;
    if (s == "BASELINE") return StageTag::BASELINE;
    throw parse_error("unknown stage tag: " + s);
}

void save_checkpoint(const Seq2SeqBackend& model, const CheckpointMeta& meta,
                     const std::string& path) {
    std::vector<double> params = model.parameters();
    std::span<const unsigned char> blob(
        reinterpret_cast<const unsigned char*>(params.data()),
        params.size() * sizeof(double));

    nlohmann::json header;
    header["stage_tag"] = stage_tag_name(meta.stage_tag);
    header["config_hash"] = meta.config_hash;
    header["seed"] = meta.seed;
    header["metrics_at_save"] = meta.metrics_at_save;
    header["backend_id"] = model.backend_id();
    header["backend_spec"] = model.spec_json();
    header["param_count"] = params.size();
    header["blob_checksum"] = hex64(fnv1a64(blob));

    std::ofstream out(path, std::ios::binary);
    if (!out) throw argument_error("cannot write checkpoint: " + path);
    out << kCkptMagic << "\n" << header.dump() << "\n";
    out.write(reinterpret_cast<const char*>(blob.data()),
              static_cast<std::streamsize>(blob.size()));
    if (!out) throw argument_error("short write on checkpoint: " + path);
}

namespace {

CheckpointHeader parse_header_stream(std::ifstream& in,
                                     const std::string& path) {
    std::string magic;
    if (!std::getline(in, magic) || magic != kCkptMagic)
        throw integrity_error(path + ": not a checkpoint file");
    std::string header_line;
    if (!std::getline(in, header_line))
        throw integrity_error(path + ": missing checkpoint header");

    nlohmann::json j;
    try {
        j = nlohmann::json::parse(header_line);
    } catch (const nlohmann::json::parse_error& e) {
        throw integrity_error(path + ": bad checkpoint header: " + e.what());
    }

    CheckpointHeader h;
    h.meta.stage_tag = parse_stage_tag(j.at("stage_tag").get<std::string>());
    h.meta.config_hash = j.at("config_hash").get<std::string>();
    h.meta.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("metrics_at_save"))
        h.meta.metrics_at_save =
            j.at("metrics_at_save").get<std::map<std::string, double>>();
    h.backend_id = j.at("backend_id").get<std::string>();
    h.backend_spec = j.at("backend_spec");
    h.param_count = j.at("param_count").get<std::size_t>();
    h.blob_checksum = std::stoull(j.at("blob_checksum").get<std::string>(),
                                  nullptr, 16);
    return h;
}

}  // namespace

CheckpointHeader read_checkpoint_header(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw argument_error("cannot open checkpoint: " + path);
    return parse_header_stream(in, path);
}

std::unique_ptr<Seq2SeqBackend> load_checkpoint(
    const std::string& path,
    const std::optional<std::string>& expected_config_hash) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw argument_error("cannot open checkpoint: " + path);
    CheckpointHeader h = parse_header_stream(in, path);

    if (expected_config_hash && h.meta.config_hash != *expected_config_hash)
        throw integrity_error(path + ": config_hash mismatch (checkpoint " +
                              h.meta.config_hash + ", expected " +
                              *expected_config_hash + ")");

    std::vector<double> params(h.param_count);
    in.read(reinterpret_cast<char*>(params.data()),
            static_cast<std::streamsize>(params.size() * sizeof(double)));
    if (static_cast<std::size_t>(in.gcount()) !=
        params.size() * sizeof(double))
        throw integrity_error(path + ": truncated parameter blob");

    std::span<const unsigned char> blob(
        reinterpret_cast<const unsigned char*>(params.data()),
        params.size() * sizeof(double));
    if (fnv1a64(blob) != h.blob_checksum)
        throw integrity_error(path + ": parameter blob checksum mismatch");

    auto model = create_backend(h.backend_id, h.backend_spec);
    model->set_parameters(params);
    return model;
}

}  // namespace semidqg::seq2seq
