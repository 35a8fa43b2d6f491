#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"

#include "tinv/grid.hpp"

namespace tinv {

namespace detail {

inline std::uint32_t crc32(const unsigned char* data, size_t len) {
    static const auto table = [] {
        std::array<std::uint32_t, 256> t{};
        for (std::uint32_t i = 0; i < 256; ++i) {
            std::uint32_t c = i;
            for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
            t[i] = c;
        }
        return t;
    }();
    std::uint32_t c = 0xFFFFFFFFu;
    for (size_t i = 0; i < len; ++i) c = table[(c ^ data[i]) & 0xFF] ^ (c >> 8);
    return c ^ 0xFFFFFFFFu;
}

inline bool little_endian_host() {
    const std::uint16_t x = 1;
    return *reinterpret_cast<const unsigned char*>(&x) == 1;
}

} // namespace detail

struct NamedArray {
    std::string name;
    std::vector<int> shape;  // time axis outermost, last axis fastest
    std::vector<float> data;

    size_t count() const {
        size_t n = 1;
        for (int s : shape) n *= static_cast<size_t>(s);
        return n;
    }
};

struct Archive {
    GridSpec spec;
    std::vector<NamedArray> arrays;

    const NamedArray* find(const std::string& name) const {
        for (const auto& a : arrays)
            if (a.name == name) return &a;
        return nullptr;
    }
};

// Directory layout: manifest.json + one little-endian f32 raw file per array,
// each carrying a CRC32 verified on load.
inline void save_archive(const std::filesystem::path& dir, const Archive& ar) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create archive directory: " + dir.string());
    nlohmann::ordered_json manifest;
    manifest["schema_version"] = 1;
    manifest["grid"] = {{"ndim", ar.spec.ndim},
                        {"shape", std::vector<int>(ar.spec.shape.begin(),
                                                   ar.spec.shape.begin() + ar.spec.ndim)},
                        {"nt", ar.spec.nt}};
    manifest["arrays"] = nlohmann::ordered_json::array();
    for (const auto& a : ar.arrays) {
        if (a.data.size() != a.count())
            throw ShapeMismatch("array size does not match declared shape: " + a.name);
        std::vector<float> buf = a.data;
        if (!detail::little_endian_host())
            for (float& v : buf) {
                auto* b = reinterpret_cast<unsigned char*>(&v);
                std::swap(b[0], b[3]);
                std::swap(b[1], b[2]);
            }
        const auto* bytes = reinterpret_cast<const unsigned char*>(buf.data());
        const size_t nbytes = buf.size() * sizeof(float);
        const std::string file = a.name + ".raw";
        std::ofstream out(dir / file, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open for writing: " + (dir / file).string());
        out.write(reinterpret_cast<const char*>(bytes), static_cast<std::streamsize>(nbytes));
        if (!out) throw IoError("short write: " + (dir / file).string());
        manifest["arrays"].push_back({{"name", a.name},
                                      {"shape", a.shape},
                                      {"dtype", "f32"},
                                      {"byte_order", "little"},
                                      {"file", file},
                                      {"crc32", detail::crc32(bytes, nbytes)}});
    }
    std::ofstream mf(dir / "manifest.json", std::ios::trunc);
    if (!mf) throw IoError("cannot write manifest: " + (dir / "manifest.json").string());
    mf << manifest.dump(2) << "\n";
}

inline Archive load_archive(const std::filesystem::path& dir) {
    std::ifstream mf(dir / "manifest.json");
    if (!mf) throw IoError("cannot read manifest: " + (dir / "manifest.json").string());
    nlohmann::json manifest;
    try {
        mf >> manifest;
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("malformed manifest: ") + e.what());
    }
    if (!manifest.contains("schema_version") || manifest["schema_version"] != 1)
        throw UnsupportedSchema("archive schema version must be 1");
    Archive ar;
    const auto& grid = manifest.at("grid");
    ar.spec.ndim = grid.at("ndim").get<int>();
    const auto shape = grid.at("shape").get<std::vector<int>>();
    for (size_t a = 0; a < shape.size() && a < 3; ++a) ar.spec.shape[a] = shape[a];
    ar.spec.nt = grid.at("nt").get<int>();
    for (const auto& e : manifest.at("arrays")) {
        if (e.at("dtype") != "f32")
            throw UnsupportedSchema("archive v1 supports dtype f32 only");
        if (e.at("byte_order") != "little")
            throw UnsupportedSchema("archive v1 supports little-endian only");
        NamedArray a;
        a.name = e.at("name").get<std::string>();
        a.shape = e.at("shape").get<std::vector<int>>();
        const std::filesystem::path file = dir / e.at("file").get<std::string>();
        std::ifstream in(file, std::ios::binary);
        if (!in) throw IoError("cannot open array file: " + file.string());
        std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                         std::istreambuf_iterator<char>());
        if (bytes.size() != a.count() * sizeof(float))
            throw ShapeMismatch("array file size does not match manifest shape: " + a.name);
        const std::uint32_t want = e.at("crc32").get<std::uint32_t>();
        if (detail::crc32(bytes.data(), bytes.size()) != want)
            throw ChecksumMismatch("checksum failed for array: " + a.name);
        a.data.resize(a.count());
        std::memcpy(a.data.data(), bytes.data(), bytes.size());
        if (!detail::little_endian_host())
            for (float& v : a.data) {
                auto* b = reinterpret_cast<unsigned char*>(&v);
                std::swap(b[0], b[3]);
                std::swap(b[1], b[2]);
            }
        ar.arrays.push_back(std::move(a));
    }
    return ar;
}

// convenience converters between double fields and f32 archive arrays
inline NamedArray make_array(const std::string& name, std::vector<int> shape,
                             const std::vector<double>& data) {
    NamedArray a;
    a.name = name;
    a.shape = std::move(shape);
    a.data.assign(data.begin(), data.end());
    if (a.data.size() != a.count())
        throw ShapeMismatch("array size does not match declared shape: " + name);
    return a;
}

inline NamedArray make_array(const std::string& name, std::vector<int> shape,
                             const std::vector<unsigned char>& data) {
    NamedArray a;
    a.name = name;
    a.shape = std::move(shape);
    a.data.assign(data.begin(), data.end());
    if (a.data.size() != a.count())
        throw ShapeMismatch("array size does not match declared shape: " + name);
    return a;
}

inline std::vector<double> to_double(const NamedArray& a) {
    return std::vector<double>(a.data.begin(), a.data.end());
}

inline std::vector<unsigned char> to_mask(const NamedArray& a) {
    std::vector<unsigned char> out(a.data.size());
    for (size_t i = 0; i < a.data.size(); ++i) out[i] = a.data[i] >= 0.5f ? 1 : 0;
    return out;
}

} // namespace tinv
