// Copyright 2026 The doccomp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "doccomp/errors.hpp"
#include "doccomp/params.hpp"
#include "doccomp/tensor.hpp"

namespace doccomp {

// Tensor record layout: "DTC1", u32 rank, rank x u32 extents, then
// volume x float32, everything little-endian.

namespace detail {

inline void put_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

inline std::uint32_t get_u32(std::istream& is) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4)) throw IoError("serialize", "truncated tensor record");
    return std::uint32_t(b[0]) | std::uint32_t(b[1]) << 8 | std::uint32_t(b[2]) << 16 | std::uint32_t(b[3]) << 24;
}

}  // namespace detail

template <typename T>
void write_tensor(std::ostream& os, const Tensor<T>& t) {
    os.write("DTC1", 4);
    detail::put_u32(os, static_cast<std::uint32_t>(t.rank()));
    for (auto e : t.shape()) detail::put_u32(os, static_cast<std::uint32_t>(e));
    for (auto v : t.data()) detail::put_u32(os, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
}

template <typename T>
Tensor<T> read_tensor(std::istream& is) {
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, "DTC1", 4) != 0) {
        throw IoError("serialize", "missing DTC1 magic");
    }
    const std::uint32_t rank = detail::get_u32(is);
    if (rank > 8) throw IoError("serialize", "implausible tensor rank " + std::to_string(rank));
    Shape shape(rank);
    for (auto& e : shape) e = detail::get_u32(is);
    std::vector<T> data(volume(shape));
    for (auto& v : data) v = static_cast<T>(std::bit_cast<float>(detail::get_u32(is)));
    return Tensor<T>::from(std::move(shape), std::move(data));
}

template <typename T>
void save_tensor(const std::filesystem::path& path, const Tensor<T>& t) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("serialize", "cannot write " + path.string());
    write_tensor(os, t);
}

template <typename T>
Tensor<T> load_tensor(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("serialize", "cannot read " + path.string());
    return read_tensor<T>(is);
}

inline std::string manifest_shape(const Shape& s) {
    std::string out;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += 'x';
        out += std::to_string(s[i]);
    }
    return out.empty() ? "scalar" : out;
}

/// Writes `<stem>.dtc` (concatenated tensor records in store order) and
/// `<stem>.manifest` (one `name = AxBxC` line per parameter).
template <typename T>
void save_parameters(const std::filesystem::path& stem, const ParameterStore<T>& store) {
    std::ofstream bin(stem.string() + ".dtc", std::ios::binary);
    std::ofstream man(stem.string() + ".manifest");
    if (!bin || !man) throw IoError("serialize", "cannot write parameters to " + stem.string());
    man << "# doccomp parameter manifest\n";
    for (const auto& p : store) {
        write_tensor(bin, p.tensor);
        man << p.name << " = " << manifest_shape(p.tensor.shape()) << "\n";
    }
}

/// Loads values into an already-constructed store. Names, order and shapes
/// must match the manifest exactly.
template <typename T>
void load_parameters(const std::filesystem::path& stem, ParameterStore<T>& store) {
    std::ifstream bin(stem.string() + ".dtc", std::ios::binary);
    std::ifstream man(stem.string() + ".manifest");
    if (!bin || !man) throw IoError("serialize", "cannot read parameters from " + stem.string());
    std::vector<std::pair<std::string, std::string>> entries;
    std::string line;
    while (std::getline(man, line)) {
        if (line.empty() || line[0] == '#') continue;
        auto eq = line.find('=');
        if (eq == std::string::npos) throw IoError("serialize", "bad manifest line: " + line);
        auto trim = [](std::string s) {
            s.erase(0, s.find_first_not_of(" \t"));
            s.erase(s.find_last_not_of(" \t\r") + 1);
            return s;
        };
        entries.emplace_back(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    if (entries.size() != store.size()) {
        throw ConsistencyError("serialize", "manifest lists " + std::to_string(entries.size()) +
                                                " parameters, model has " + std::to_string(store.size()));
    }
    std::size_t i = 0;
    for (auto& p : store) {
        const auto& [name, shape] = entries[i++];
        if (name != p.name || shape != manifest_shape(p.tensor.shape())) {
            throw ConsistencyError("serialize", "manifest entry '" + name + " = " + shape + "' does not match '" +
                                                    p.name + " = " + manifest_shape(p.tensor.shape()) + "'");
        }
        auto t = read_tensor<T>(bin);
        if (t.shape() != p.tensor.shape()) throw ConsistencyError("serialize", "record shape mismatch for " + name);
        std::copy(t.data().begin(), t.data().end(), p.tensor.mutable_data().begin());
    }
}

}  // namespace doccomp
