#pragma once

// Binary network checkpoints: self-describing, exact round-trip of raw
// parameter bytes, tagged with a config hash for provenance checks.

#include <cstdio>
#include <fstream>
#include <string>

#include "mfdlab/autodiff.hpp"

namespace mfdlab {

namespace detail {

inline void put_u64(std::ostream& os, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    os.write(reinterpret_cast<const char*>(b), 8);
}

inline std::uint64_t get_u64(std::istream& is) {
    unsigned char b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

template <typename T>
void put_tensor(std::ostream& os, const Tensor<T>& t) {
    put_u64(os, t.rank());
    for (std::size_t d = 0; d < t.rank(); ++d) put_u64(os, t.extent(d));
    os.write(reinterpret_cast<const char*>(t.data()),
             static_cast<std::streamsize>(t.size() * sizeof(T)));
}

template <typename T>
Tensor<T> get_tensor(std::istream& is) {
    const std::size_t rank = get_u64(is);
    std::vector<std::size_t> shape(rank);
    for (auto& d : shape) d = get_u64(is);
    if (rank == 0) return Tensor<T>{};
    Tensor<T> t(shape);
    is.read(reinterpret_cast<char*>(t.data()),
            static_cast<std::streamsize>(t.size() * sizeof(T)));
    return t;
}

}  // namespace detail

template <typename T>
void save_network(const std::string& path, const Network<T>& net,
                  const std::string& config_hash) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataError("save_network: cannot open " + path);
    f.write("MFDLNET1", 8);
    detail::put_u64(f, sizeof(T));
    detail::put_u64(f, static_cast<std::uint64_t>(net.head));
    detail::put_u64(f, net.input_size);
    detail::put_u64(f, net.output_size);
    detail::put_u64(f, config_hash.size());
    f.write(config_hash.data(), static_cast<std::streamsize>(config_hash.size()));
    detail::put_u64(f, net.layers.size());
    for (const auto& L : net.layers) {
        detail::put_u64(f, static_cast<std::uint64_t>(L.kind));
        const std::uint64_t fields[9] = {L.in_features, L.out_features, L.in_channels,
                                         L.out_channels, L.stride, L.in_h,
                                         L.in_w, L.out_h, L.out_w};
        for (std::uint64_t v : fields) detail::put_u64(f, v);
    }
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        detail::put_tensor(f, net.weights[i]);
        detail::put_tensor(f, net.biases[i]);
    }
    if (!f) throw DataError("save_network: write failed for " + path);
}

template <typename T>
Network<T> load_network(const std::string& path, std::string* config_hash = nullptr) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("load_network: cannot open " + path);
    char magic[8];
    f.read(magic, 8);
    if (std::string(magic, 8) != "MFDLNET1") throw DataError("load_network: bad magic");
    if (detail::get_u64(f) != sizeof(T)) throw DataError("load_network: scalar width mismatch");
    Network<T> net;
    net.head = static_cast<Head>(detail::get_u64(f));
    net.input_size = detail::get_u64(f);
    net.output_size = detail::get_u64(f);
    std::string hash(detail::get_u64(f), '\0');
    f.read(hash.data(), static_cast<std::streamsize>(hash.size()));
    if (config_hash) *config_hash = hash;
    const std::size_t n_layers = detail::get_u64(f);
    for (std::size_t i = 0; i < n_layers; ++i) {
        LayerSpec L;
        L.kind = static_cast<LayerKind>(detail::get_u64(f));
        std::uint64_t fields[9];
        for (auto& v : fields) v = detail::get_u64(f);
        L.in_features = fields[0];
        L.out_features = fields[1];
        L.in_channels = fields[2];
        L.out_channels = fields[3];
        L.stride = fields[4];
        L.in_h = fields[5];
        L.in_w = fields[6];
        L.out_h = fields[7];
        L.out_w = fields[8];
        net.layers.push_back(L);
    }
    for (std::size_t i = 0; i < n_layers; ++i) {
        net.weights.push_back(detail::get_tensor<T>(f));
        net.biases.push_back(detail::get_tensor<T>(f));
    }
    if (!f) throw DataError("load_network: truncated file " + path);
    return net;
}

}  // namespace mfdlab
