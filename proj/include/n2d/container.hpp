#ifndef N2D_CONTAINER_HPP
#define N2D_CONTAINER_HPP

#include "common.hpp"

#include "json.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>

/**
 * @file container.hpp
 *
 * @brief Versioned binary container for checkpoints, embeddings and models.
 *
 * Layout (all integers little-endian):
 *
 *     "N2DC" | u32 version | u64 meta_len | meta (JSON, UTF-8)
 *     u32 tensor_count
 *     repeated: u32 name_len | name | u64 rows | u64 cols | rows*cols f64, row-major
 *
 * Doubles are stored bit-exact so a save/load round trip is lossless.
 */

namespace n2d {

struct Container {
    static constexpr std::uint32_t version = 1;

    nlohmann::json meta = nlohmann::json::object();
    std::map<std::string, Matrix> tensors;

    const Matrix& tensor(const std::string& name) const {
        auto it = tensors.find(name);
        if (it == tensors.end()) {
            throw FormatError("container has no tensor '" + name + "'");
        }
        return it->second;
    }
};

namespace detail {

static_assert(std::endian::native == std::endian::little, "container I/O assumes a little-endian host");

template <typename T>
void put(std::ostream& out, T value) {
    out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T get(std::istream& in, const std::string& path) {
    T value{};
    in.read(reinterpret_cast<char*>(&value), sizeof(T));
    if (!in) {
        throw FormatError("'" + path + "' is truncated");
    }
    return value;
}

} // namespace detail

inline void save_container(const std::string& path, const Container& c) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot write '" + path + "'");
    }
    out.write("N2DC", 4);
    detail::put<std::uint32_t>(out, Container::version);
    const std::string meta = c.meta.dump();
    detail::put<std::uint64_t>(out, meta.size());
    out.write(meta.data(), static_cast<std::streamsize>(meta.size()));
    detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(c.tensors.size()));
    for (const auto& [name, m] : c.tensors) {
        detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        detail::put<std::uint64_t>(out, static_cast<std::uint64_t>(m.rows()));
        detail::put<std::uint64_t>(out, static_cast<std::uint64_t>(m.cols()));
        out.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
    }
    if (!out) {
        throw IoError("failed writing '" + path + "'");
    }
}

inline Container load_container(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open '" + path + "'");
    }
    char magic[4] = {};
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "N2DC", 4) != 0) {
        throw FormatError("'" + path + "' is not an N2DC container");
    }
    const auto version = detail::get<std::uint32_t>(in, path);
    if (version != Container::version) {
        throw FormatError("'" + path + "' has unsupported container version " + std::to_string(version));
    }
    Container c;
    const auto meta_len = detail::get<std::uint64_t>(in, path);
    std::string meta(meta_len, '\0');
    in.read(meta.data(), static_cast<std::streamsize>(meta_len));
    if (!in) {
        throw FormatError("'" + path + "' is truncated in its metadata");
    }
    try {
        c.meta = nlohmann::json::parse(meta);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("'" + path + "' metadata is not valid JSON: " + e.what());
    }
    const auto count = detail::get<std::uint32_t>(in, path);
    for (std::uint32_t t = 0; t < count; ++t) {
        const auto name_len = detail::get<std::uint32_t>(in, path);
        std::string name(name_len, '\0');
        in.read(name.data(), name_len);
        const auto rows = detail::get<std::uint64_t>(in, path);
        const auto cols = detail::get<std::uint64_t>(in, path);
        Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
        in.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(rows * cols * sizeof(double)));
        if (!in) {
            throw FormatError("'" + path + "' is truncated in tensor '" + name + "'");
        }
        c.tensors.emplace(std::move(name), std::move(m));
    }
    return c;
}

} // namespace n2d

#endif
