#include "pairdiff/dataset.hpp"

#include <filesystem>
#include <fstream>
#include <map>

#include "json.hpp"
#include "pairdiff/errors.hpp"

namespace pairdiff {

namespace fs = std::filesystem;
using nlohmann::json;

void write_dataset(const std::string& dir, const std::vector<PairedSample>& samples,
                   const SplitIndices& split) {
    if (samples.empty()) throw DataError("write_dataset: no samples");
    fs::create_directories(dir);

    for (const PairedSample& s : samples) {
        s.validate();
        if (s.id.empty()) throw DataError("write_dataset: sample without id");
        const fs::path bin = fs::path(dir) / (s.id + ".bin");
        std::ofstream bf(bin, std::ios::binary);
        if (!bf) throw DataError("write_dataset: cannot open " + bin.string());
        for (const Tensor& m : s.modalities) {
            std::vector<float> plane(m.size());
            for (size_t i = 0; i < m.size(); ++i) plane[i] = static_cast<float>(m[i]);
            bf.write(reinterpret_cast<const char*>(plane.data()),
                     static_cast<long>(plane.size() * sizeof(float)));
        }

        json side;
        side["id"] = s.id;
        side["shape"] = s.modalities[0].shape();
        side["modalities"] = s.modality_names;
        side["source_tag"] = to_string(s.source_tag);
        side["transform_log"] = s.transform_log;
        std::ofstream jf(fs::path(dir) / (s.id + ".json"));
        jf << side.dump(2) << "\n";
    }

    json manifest;
    auto ids_of = [&](const std::vector<size_t>& idx) {
        std::vector<std::string> ids;
        ids.reserve(idx.size());
        for (size_t i : idx) ids.push_back(samples.at(i).id);
        return ids;
    };
    manifest["train"] = ids_of(split.train);
    manifest["val"] = ids_of(split.val);
    manifest["test"] = ids_of(split.test);
    std::ofstream mf(fs::path(dir) / "manifest.json");
    mf << manifest.dump(2) << "\n";
}

Dataset load_dataset(const std::string& dir) {
    const fs::path mpath = fs::path(dir) / "manifest.json";
    std::ifstream mf(mpath);
    if (!mf) throw DataError("load_dataset: missing manifest " + mpath.string());
    json manifest = json::parse(mf);

    Dataset ds;
    std::map<std::string, size_t> index_of;
    auto load_ids = [&](const std::vector<std::string>& ids, std::vector<size_t>& out) {
        for (const std::string& id : ids) {
            auto found = index_of.find(id);
            if (found != index_of.end()) {
                out.push_back(found->second);
                continue;
            }
            std::ifstream jf(fs::path(dir) / (id + ".json"));
            if (!jf) throw DataError("load_dataset: missing sidecar for " + id);
            json side = json::parse(jf);

            PairedSample s;
            s.id = side.at("id");
            s.modality_names = side.at("modalities").get<std::vector<std::string>>();
            s.source_tag = source_tag_from_string(side.at("source_tag"));
            s.transform_log = side.at("transform_log").get<std::vector<std::string>>();
            const std::vector<int> shape = side.at("shape").get<std::vector<int>>();
            const size_t plane = static_cast<size_t>(shape.at(0)) * static_cast<size_t>(shape.at(1));

            std::ifstream bf(fs::path(dir) / (id + ".bin"), std::ios::binary);
            if (!bf) throw DataError("load_dataset: missing data for " + id);
            for (size_t m = 0; m < s.modality_names.size(); ++m) {
                std::vector<float> buf(plane);
                bf.read(reinterpret_cast<char*>(buf.data()),
                        static_cast<long>(plane * sizeof(float)));
                if (!bf) throw DataError("load_dataset: truncated data for " + id);
                Tensor img(shape);
                for (size_t i = 0; i < plane; ++i) img[i] = buf[i];
                s.modalities.push_back(std::move(img));
            }
            s.validate();
            index_of[id] = ds.samples.size();
            out.push_back(ds.samples.size());
            ds.samples.push_back(std::move(s));
        }
    };
    load_ids(manifest.at("train").get<std::vector<std::string>>(), ds.split.train);
    load_ids(manifest.at("val").get<std::vector<std::string>>(), ds.split.val);
    load_ids(manifest.at("test").get<std::vector<std::string>>(), ds.split.test);
    return ds;
}

std::vector<PairedSample> gather(const Dataset& ds, const std::vector<size_t>& indices) {
    std::vector<PairedSample> out;
    out.reserve(indices.size());
    for (size_t i : indices) out.push_back(ds.samples.at(i));
    return out;
}

}  // namespace pairdiff
