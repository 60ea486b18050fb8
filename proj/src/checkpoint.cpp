#include <zlib.h>

#include <cstring>
#include <fstream>

#include <json.hpp>

#include "ssgan/trainer.hpp"

namespace ssgan::trainer {

namespace {

constexpr char kMagic[8] = {'S', 'S', 'G', 'A', 'N', 'C', 'K', '1'};
constexpr int kFormatVersion = 1;

struct NamedArray {
    std::string name;
    Shape shape;
    std::span<double> values;  // live storage inside the state
};

// Fixed enumeration order shared by save and load: model tensors first, then
// the Adam moments.
std::vector<NamedArray> enumerate_arrays(TrainerState& s) {
    std::vector<NamedArray> out;
    auto add_params = [&out](const char* prefix, nn::ParamSet& p) {
        for (auto& e : p.entries())
            out.push_back({std::string(prefix) + "/" + e.name, e.tensor.shape(),
                           e.tensor.mutable_data()});
    };
    add_params("student", s.student);
    add_params("teacher", s.teacher);
    add_params("generator", s.generator);
    auto add_adam = [&out](const char* prefix, AdamState& a) {
        for (std::size_t i = 0; i < a.m.size(); ++i)
            out.push_back({std::string(prefix) + "/m/" + std::to_string(i), {a.m[i].size()},
                           a.m[i]});
        for (std::size_t i = 0; i < a.v.size(); ++i)
            out.push_back({std::string(prefix) + "/v/" + std::to_string(i), {a.v[i].size()},
                           a.v[i]});
    };
    add_adam("adam_student", s.adam_student);
    add_adam("adam_generator", s.adam_generator);
    return out;
}

std::uint32_t blob_crc(const std::vector<unsigned char>& blob) {
    uLong crc = crc32(0L, Z_NULL, 0);
    crc = crc32(crc, blob.data(), static_cast<uInt>(blob.size()));
    return static_cast<std::uint32_t>(crc);
}

}  // namespace

void checkpoint_save(const std::string& path, TrainerState& state,
                     const std::string& config_json, std::uint64_t seed) {
    auto arrays = enumerate_arrays(state);

    nlohmann::json manifest;
    manifest["format_version"] = kFormatVersion;
    manifest["epoch"] = state.epochs_done;
    manifest["seed"] = seed;
    manifest["config"] = config_json;
    manifest["adam_student_t"] = state.adam_student.t;
    manifest["adam_generator_t"] = state.adam_generator.t;

    std::vector<unsigned char> blob;
    nlohmann::json tensors = nlohmann::json::array();
    for (auto& a : arrays) {
        nlohmann::json t;
        t["name"] = a.name;
        t["shape"] = a.shape;
        tensors.push_back(t);
        for (double& v : a.values) {
            const float f = static_cast<float>(v);
            v = static_cast<double>(f);  // snap live state to stored precision
            unsigned char bytes[4];
            std::memcpy(bytes, &f, 4);
            blob.insert(blob.end(), bytes, bytes + 4);
        }
    }
    manifest["tensors"] = tensors;
    manifest["crc32"] = blob_crc(blob);

    const std::string mtext = manifest.dump();
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("checkpoint_save: cannot write " + path);
    out.write(kMagic, 8);
    const std::uint32_t mlen = static_cast<std::uint32_t>(mtext.size());
    out.write(reinterpret_cast<const char*>(&mlen), 4);
    out.write(mtext.data(), static_cast<std::streamsize>(mtext.size()));
    out.write(reinterpret_cast<const char*>(blob.data()),
              static_cast<std::streamsize>(blob.size()));
    if (!out) throw CheckpointError("checkpoint_save: write failed for " + path);
}

namespace {

struct RawCheckpoint {
    nlohmann::json manifest;
    std::vector<unsigned char> blob;
};

RawCheckpoint read_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary | std::ios::ate);
    if (!in) throw CheckpointError("checkpoint: cannot open " + path);
    const std::size_t bytes = static_cast<std::size_t>(in.tellg());
    if (bytes < 12) throw CheckpointError("checkpoint: " + path + " is too short");
    in.seekg(0);
    char magic[8];
    in.read(magic, 8);
    if (std::memcmp(magic, kMagic, 8) != 0)
        throw CheckpointError("checkpoint: " + path + " has no checkpoint signature");
    std::uint32_t mlen = 0;
    in.read(reinterpret_cast<char*>(&mlen), 4);
    if (12 + static_cast<std::size_t>(mlen) > bytes)
        throw CheckpointError("checkpoint: truncated manifest in " + path);
    std::string mtext(mlen, '\0');
    in.read(mtext.data(), mlen);

    RawCheckpoint raw;
    try {
        raw.manifest = nlohmann::json::parse(mtext);
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError("checkpoint: bad manifest in " + path + ": " + e.what());
    }
    const int version = raw.manifest.value("format_version", -1);
    if (version != kFormatVersion)
        throw CheckpointError("checkpoint: format version mismatch: file has " +
                              std::to_string(version) + ", expected " +
                              std::to_string(kFormatVersion));
    raw.blob.resize(bytes - 12 - mlen);
    in.read(reinterpret_cast<char*>(raw.blob.data()),
            static_cast<std::streamsize>(raw.blob.size()));
    if (!in) throw CheckpointError("checkpoint: short read in " + path);
    const std::uint32_t want = raw.manifest.value("crc32", std::uint32_t{0});
    if (blob_crc(raw.blob) != want)
        throw CheckpointError("checkpoint: checksum failure in " + path);
    return raw;
}

}  // namespace

void checkpoint_load(const std::string& path, TrainerState& state) {
    RawCheckpoint raw = read_checkpoint(path);
    auto arrays = enumerate_arrays(state);

    const auto& tensors = raw.manifest.at("tensors");
    if (tensors.size() != arrays.size())
        throw CheckpointError("checkpoint: " + std::to_string(tensors.size()) +
                              " arrays in file, state expects " +
                              std::to_string(arrays.size()));
    std::size_t total = 0;
    for (std::size_t i = 0; i < arrays.size(); ++i) {
        const auto& t = tensors[i];
        if (t.at("name").get<std::string>() != arrays[i].name ||
            t.at("shape").get<Shape>() != arrays[i].shape)
            throw CheckpointError("checkpoint: array " + std::to_string(i) + " is " +
                                  t.at("name").get<std::string>() + ", state expects " +
                                  arrays[i].name);
        total += arrays[i].values.size();
    }
    if (raw.blob.size() != total * 4)
        throw CheckpointError("checkpoint: blob has " + std::to_string(raw.blob.size()) +
                              " bytes, expected " + std::to_string(total * 4));

    // everything validated; now fill the live state
    std::size_t off = 0;
    for (auto& a : arrays) {
        for (double& v : a.values) {
            float f;
            std::memcpy(&f, raw.blob.data() + off, 4);
            off += 4;
            v = static_cast<double>(f);
        }
    }
    state.epochs_done = raw.manifest.at("epoch").get<int>();
    state.adam_student.t = raw.manifest.at("adam_student_t").get<std::int64_t>();
    state.adam_generator.t = raw.manifest.at("adam_generator_t").get<std::int64_t>();
}

std::string checkpoint_config_json(const std::string& path) {
    RawCheckpoint raw = read_checkpoint(path);
    return raw.manifest.value("config", std::string{});
}

}  // namespace ssgan::trainer
