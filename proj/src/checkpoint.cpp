#include "pairdiff/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "json.hpp"
#include "pairdiff/embedding.hpp"
#include "pairdiff/errors.hpp"

namespace pairdiff {

using nlohmann::json;

namespace {

constexpr char kMagic[4] = {'P', 'D', 'C', 'K'};

json config_to_json(const DenoiserConfig& c) {
    return json{{"base_channels", c.base_channels}, {"cond_channels", c.cond_channels},
                {"depth", c.depth},                 {"modality_count", c.modality_count},
                {"image_size", c.image_size},       {"temb_dim", c.temb_dim},
                {"controller_hidden", c.controller_hidden}, {"norm_groups", c.norm_groups}};
}

DenoiserConfig config_from_json(const json& j) {
    DenoiserConfig c;
    c.base_channels = j.at("base_channels");
    c.cond_channels = j.at("cond_channels");
    c.depth = j.at("depth");
    c.modality_count = j.at("modality_count");
    c.image_size = j.at("image_size");
    c.temb_dim = j.at("temb_dim");
    c.controller_hidden = j.at("controller_hidden");
    c.norm_groups = j.at("norm_groups");
    return c;
}

}  // namespace

void save_checkpoint(const std::string& path, CoupledModelSet& models,
                     const NoiseSchedule& schedule) {
    NamedParams params = models.named_params();

    json header;
    header["version"] = kCheckpointVersion;
    header["config"] = config_to_json(models.cfg);
    header["schedule"] = json{{"T", schedule.T}, {"betas", schedule.betas}};

    json arrays = json::array();
    for (auto& [name, p] : params)
        arrays.push_back(json{{"name", name}, {"shape", p->value.shape()}});
    header["arrays"] = arrays;

    // the two learnable filter scalars per (network, condition), evaluated at
    // the mid-schedule reference timestep
    json filters;
    const Tensor ref_emb = embed_timestep(schedule.T / 2, models.cfg.temb_dim);
    for (size_t k = 0; k < models.nets.size(); ++k)
        for (size_t c = 0; c < models.nets[k].controllers.size(); ++c) {
            FilterParams fp = models.nets[k].controllers[c].emit(ref_emb);
            filters["net" + std::to_string(k) + ".ctrl" + std::to_string(c)] =
                json{{"cutoff", fp.cutoff}, {"floor", fp.floor}};
        }
    header["filter_scalars"] = filters;

    const std::string hs = header.dump();
    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataError("save_checkpoint: cannot open " + path);
    f.write(kMagic, 4);
    const uint32_t version = kCheckpointVersion;
    f.write(reinterpret_cast<const char*>(&version), 4);
    const uint64_t hlen = hs.size();
    f.write(reinterpret_cast<const char*>(&hlen), 8);
    f.write(hs.data(), static_cast<long>(hs.size()));
    for (auto& [name, p] : params)
        f.write(reinterpret_cast<const char*>(p->value.data()),
                static_cast<long>(p->value.size() * sizeof(double)));
    if (!f) throw DataError("save_checkpoint: write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("load_checkpoint: cannot open " + path);
    char magic[4];
    f.read(magic, 4);
    if (!f || std::memcmp(magic, kMagic, 4) != 0)
        throw DataError("load_checkpoint: bad magic in " + path);
    uint32_t version = 0;
    f.read(reinterpret_cast<char*>(&version), 4);
    if (version != kCheckpointVersion)
        throw DataError("load_checkpoint: unsupported version " + std::to_string(version));
    uint64_t hlen = 0;
    f.read(reinterpret_cast<char*>(&hlen), 8);
    std::string hs(hlen, '\0');
    f.read(hs.data(), static_cast<long>(hlen));
    const json header = json::parse(hs);

    Checkpoint ck;
    ck.config = config_from_json(header.at("config"));
    ck.schedule.T = header.at("schedule").at("T");
    ck.schedule.betas = header.at("schedule").at("betas").get<std::vector<double>>();
    ck.schedule.alphas.resize(ck.schedule.betas.size());
    ck.schedule.alpha_bars.resize(ck.schedule.betas.size());
    double prod = 1.0;
    for (size_t i = 0; i < ck.schedule.betas.size(); ++i) {
        ck.schedule.alphas[i] = 1.0 - ck.schedule.betas[i];
        prod *= ck.schedule.alphas[i];
        ck.schedule.alpha_bars[i] = prod;
    }

    Rng init_rng(0);
    ck.models = CoupledModelSet::create(ck.config, init_rng);
    NamedParams params = ck.models.named_params();

    const json& arrays = header.at("arrays");
    if (arrays.size() != params.size())
        throw DataError("load_checkpoint: array count mismatch");
    for (size_t i = 0; i < params.size(); ++i) {
        const std::string name = arrays[i].at("name");
        const std::vector<int> shape = arrays[i].at("shape").get<std::vector<int>>();
        if (name != params[i].first)
            throw DataError("load_checkpoint: array order mismatch at " + name);
        if (shape != params[i].second->value.shape())
            throw DataError("load_checkpoint: shape mismatch for " + name);
        f.read(reinterpret_cast<char*>(params[i].second->value.data()),
               static_cast<long>(params[i].second->value.size() * sizeof(double)));
    }
    if (!f) throw DataError("load_checkpoint: truncated payload in " + path);
    return ck;
}

}  // namespace pairdiff
