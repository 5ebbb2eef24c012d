#pragma once

#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "eegmtl/io_detail.hpp"
#include "eegmtl/model.hpp"

namespace eegmtl {

// Checkpoint layout (little-endian): "EEGW", u16 version=1, u32 config-json
// length, config JSON (UTF-8), u32 tensor count; per tensor: u16 name length,
// name bytes, u8 rank, rank x u32 extents, then f32 data. Values are stored
// as f32 regardless of the in-memory scalar type.

inline constexpr std::uint16_t kWeightsVersion = 1;

struct WeightFile {
    ModelConfig config;
    std::vector<std::pair<std::string, Tensor<float>>> tensors;
};

template <class S>
void save_weights(const std::string& path, const ModelConfig& cfg,
                  const std::vector<Parameter<S>*>& params) {
    std::vector<std::uint8_t> buf;
    buf.push_back('E');
    buf.push_back('E');
    buf.push_back('G');
    buf.push_back('W');
    detail::put_u16(buf, kWeightsVersion);
    const std::string cfg_json = nlohmann::json(cfg).dump();
    detail::put_u32(buf, static_cast<std::uint32_t>(cfg_json.size()));
    buf.insert(buf.end(), cfg_json.begin(), cfg_json.end());
    detail::put_u32(buf, static_cast<std::uint32_t>(params.size()));
    for (const Parameter<S>* p : params) {
        detail::put_u16(buf, static_cast<std::uint16_t>(p->name.size()));
        buf.insert(buf.end(), p->name.begin(), p->name.end());
        detail::put_u8(buf, static_cast<std::uint8_t>(p->value.rank()));
        for (int d : p->value.dims()) detail::put_u32(buf, static_cast<std::uint32_t>(d));
        for (std::size_t i = 0; i < p->value.size(); ++i) {
            detail::put_f32(buf, static_cast<float>(p->value[i]));
        }
    }
    detail::write_file(path, buf);
}

inline WeightFile load_weights(const std::string& path) {
    const std::vector<std::uint8_t> file = detail::read_file(path);
    detail::ByteReader r(file.data(), file.size(), path);
    char magic[4];
    r.read_bytes(magic, 4);
    if (std::string_view(magic, 4) != "EEGW") {
        throw IoError(IoError::Kind::bad_magic, path + ": not a weight container");
    }
    const std::uint16_t version = r.u16();
    if (version != kWeightsVersion) {
        throw IoError(IoError::Kind::bad_version,
                      path + ": unsupported weights version " + std::to_string(version));
    }
    WeightFile out;
    const std::uint32_t cfg_len = r.u32();
    std::string cfg_json(cfg_len, '\0');
    r.read_bytes(cfg_json.data(), cfg_len);
    try {
        out.config = nlohmann::json::parse(cfg_json).get<ModelConfig>();
    } catch (const nlohmann::json::exception& e) {
        throw IoError(IoError::Kind::truncated, path + ": bad config block: " + e.what());
    }

    const std::uint32_t count = r.u32();
    out.tensors.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::uint16_t name_len = r.u16();
        std::string name(name_len, '\0');
        r.read_bytes(name.data(), name_len);
        const int rank = r.u8();
        Dims dims(static_cast<std::size_t>(rank));
        for (int d = 0; d < rank; ++d) dims[static_cast<std::size_t>(d)] = static_cast<int>(r.u32());
        Tensor<float> t(dims);
        for (std::size_t k = 0; k < t.size(); ++k) t[k] = r.f32();
        out.tensors.emplace_back(std::move(name), std::move(t));
    }
    if (r.remaining() != 0) {
        throw IoError(IoError::Kind::count_mismatch, path + ": trailing bytes after last tensor");
    }
    return out;
}

/// Standard prefix allowlist for loading only the shared representation.
inline std::vector<std::string> encoder_prefixes() {
    return {"stem.", "depthwise.", "embed.", "encoder."};
}

/// Copies file tensors into matching parameters. With an empty allowlist the
/// match must be exact both ways (every parameter found, every tensor used);
/// with prefixes only parameters under one of the prefixes are loaded and the
/// rest keep their current values. Mismatches are collected and reported
/// together, naming each offender.
template <class S>
void apply_weights(std::vector<Parameter<S>*>& params, const WeightFile& file,
                   const std::vector<std::string>& prefixes = {}) {
    std::unordered_map<std::string_view, const Tensor<float>*> by_name;
    for (const auto& [name, t] : file.tensors) by_name.emplace(name, &t);

    auto wanted = [&](const std::string& name) {
        if (prefixes.empty()) return true;
        for (const std::string& p : prefixes) {
            if (name.size() >= p.size() && name.compare(0, p.size(), p) == 0) return true;
        }
        return false;
    };

    std::string missing, wrong_shape;
    std::vector<std::pair<Parameter<S>*, const Tensor<float>*>> plan;
    std::size_t used = 0;
    for (Parameter<S>* p : params) {
        if (!wanted(p->name)) continue;
        auto it = by_name.find(p->name);
        if (it == by_name.end()) {
            missing += (missing.empty() ? "" : ", ") + p->name;
            continue;
        }
        ++used;
        if (it->second->dims() != p->value.dims()) {
            wrong_shape += (wrong_shape.empty() ? "" : ", ") + p->name + " expects " +
                           dims_str(p->value.dims()) + ", file has " + dims_str(it->second->dims());
            continue;
        }
        plan.emplace_back(p, it->second);
    }
    if (!missing.empty()) {
        throw IoError(IoError::Kind::name_mismatch, "parameters missing from file: " + missing);
    }
    if (!wrong_shape.empty()) {
        throw IoError(IoError::Kind::shape_mismatch, "parameter shapes differ: " + wrong_shape);
    }
    if (prefixes.empty() && used != file.tensors.size()) {
        std::string extra;
        std::unordered_map<std::string_view, bool> have;
        for (const Parameter<S>* p : params) have.emplace(p->name, true);
        for (const auto& [name, t] : file.tensors) {
            if (have.find(name) == have.end()) extra += (extra.empty() ? "" : ", ") + name;
        }
        throw IoError(IoError::Kind::name_mismatch, "file tensors with no matching parameter: " + extra);
    }

    for (auto& [p, t] : plan) {
        for (std::size_t i = 0; i < t->size(); ++i) p->value[i] = static_cast<S>((*t)[i]);
    }
}

} // namespace eegmtl
