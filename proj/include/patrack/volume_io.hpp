// Grid file I/O: MetaImage (.mha single-file, .mhd + raw) and a raw+JSON
// fallback pair. Payloads are local-endian, bit-exact round trips.

#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <type_traits>
#include <vector>

#include <json.hpp>

#include "patrack/volume.hpp"

namespace patrack {

namespace detail {

template <typename T>
const char* met_element_type() {
    if constexpr (std::is_same_v<T, std::int16_t>) return "MET_SHORT";
    else if constexpr (std::is_same_v<T, std::uint8_t>) return "MET_UCHAR";
    else if constexpr (std::is_same_v<T, std::uint16_t>) return "MET_USHORT";
    else static_assert(!sizeof(T), "unsupported element type");
}

template <typename T>
const char* json_element_type() {
    if constexpr (std::is_same_v<T, std::int16_t>) return "int16";
    else if constexpr (std::is_same_v<T, std::uint8_t>) return "uint8";
    else if constexpr (std::is_same_v<T, std::uint16_t>) return "uint16";
    else static_assert(!sizeof(T), "unsupported element type");
}

inline std::string lowercase_ext(const std::string& path) {
    auto ext = std::filesystem::path(path).extension().string();
    for (auto& c : ext) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return ext;
}

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

struct MetaHeader {
    GridGeometry geom;
    std::string element_type;
    std::string data_file;      // "LOCAL" or a relative filename
    std::streampos payload_at;  // start of payload when LOCAL
};

inline MetaHeader parse_meta_header(std::istream& in, const std::string& path) {
    MetaHeader h;
    h.geom.spacing = {1.0, 1.0, 1.0};
    std::string line;
    bool have_dims = false;
    while (std::getline(in, line)) {
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw std::runtime_error(path + ": malformed MetaImage header line: " + line);
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key == "ObjectType") {
            if (value != "Image") throw std::runtime_error(path + ": unsupported ObjectType " + value);
        } else if (key == "NDims") {
            if (value != "3") throw std::runtime_error(path + ": only NDims = 3 supported");
        } else if (key == "DimSize") {
            std::istringstream ss(value);
            ss >> h.geom.dims[0] >> h.geom.dims[1] >> h.geom.dims[2];
            if (!ss) throw std::runtime_error(path + ": bad DimSize");
            have_dims = true;
        } else if (key == "ElementSpacing") {
            std::istringstream ss(value);
            ss >> h.geom.spacing.x >> h.geom.spacing.y >> h.geom.spacing.z;
            if (!ss) throw std::runtime_error(path + ": bad ElementSpacing");
        } else if (key == "Offset" || key == "Position" || key == "Origin") {
            std::istringstream ss(value);
            ss >> h.geom.origin.x >> h.geom.origin.y >> h.geom.origin.z;
            if (!ss) throw std::runtime_error(path + ": bad Offset");
        } else if (key == "ElementType") {
            h.element_type = value;
        } else if (key == "BinaryDataByteOrderMSB" || key == "ElementByteOrderMSB") {
            if (value == "True") throw std::runtime_error(path + ": big-endian payloads not supported");
        } else if (key == "CompressedData") {
            if (value == "True") throw std::runtime_error(path + ": compressed MetaImage not supported");
        } else if (key == "ElementDataFile") {
            h.data_file = value;
            break;  // payload (or nothing) follows
        }
        // other keys (TransformMatrix, AnatomicalOrientation, ...) are ignored
    }
    if (h.data_file.empty()) throw std::runtime_error(path + ": missing ElementDataFile");
    if (!have_dims) throw std::runtime_error(path + ": missing DimSize");
    h.payload_at = in.tellg();
    return h;
}

template <typename T>
void read_payload(std::istream& in, const std::string& path, Grid<T>& g) {
    const std::size_t expected = g.geom.voxel_count() * sizeof(T);
    g.values.resize(g.geom.voxel_count());
    in.read(reinterpret_cast<char*>(g.values.data()), static_cast<std::streamsize>(expected));
    if (static_cast<std::size_t>(in.gcount()) != expected)
        throw std::runtime_error(path + ": payload smaller than DimSize promises");
    char extra;
    if (in.read(&extra, 1))
        throw std::runtime_error(path + ": payload larger than DimSize promises");
}

}  // namespace detail

/// Load a grid from .mha/.mhd (MetaImage) or .json (raw+JSON pair).
template <typename T>
Grid<T> load_grid(const std::string& path) {
    namespace fs = std::filesystem;
    if (!fs::exists(path)) throw std::runtime_error(path + ": file does not exist");
    const std::string ext = detail::lowercase_ext(path);
    Grid<T> g;
    if (ext == ".mha" || ext == ".mhd") {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw std::runtime_error(path + ": cannot open");
        auto h = detail::parse_meta_header(in, path);
        if (h.element_type != detail::met_element_type<T>())
            throw std::runtime_error(path + ": ElementType " + h.element_type + " does not match expected " +
                                     detail::met_element_type<T>());
        h.geom.validate();
        g.geom = h.geom;
        if (h.data_file == "LOCAL") {
            detail::read_payload(in, path, g);
        } else {
            const auto raw_path = fs::path(path).parent_path() / h.data_file;
            std::ifstream raw(raw_path, std::ios::binary);
            if (!raw) throw std::runtime_error(raw_path.string() + ": cannot open payload");
            detail::read_payload(raw, raw_path.string(), g);
        }
    } else if (ext == ".json") {
        std::ifstream in(path);
        if (!in) throw std::runtime_error(path + ": cannot open");
        nlohmann::json j = nlohmann::json::parse(in);
        g.geom.dims = {j.at("dims")[0].get<int>(), j.at("dims")[1].get<int>(), j.at("dims")[2].get<int>()};
        g.geom.spacing = {j.at("spacing")[0].get<double>(), j.at("spacing")[1].get<double>(),
                          j.at("spacing")[2].get<double>()};
        g.geom.origin = {j.at("origin")[0].get<double>(), j.at("origin")[1].get<double>(),
                         j.at("origin")[2].get<double>()};
        if (j.at("element_type").get<std::string>() != detail::json_element_type<T>())
            throw std::runtime_error(path + ": element_type mismatch");
        g.geom.validate();
        const auto raw_path = fs::path(path).parent_path() / j.at("data_file").get<std::string>();
        std::ifstream raw(raw_path, std::ios::binary);
        if (!raw) throw std::runtime_error(raw_path.string() + ": cannot open payload");
        detail::read_payload(raw, raw_path.string(), g);
    } else {
        throw std::runtime_error(path + ": unsupported extension (use .mha, .mhd or .json)");
    }
    return g;
}

/// Save a grid. Format follows the extension: .mha (header + LOCAL payload),
/// .mhd (header + sibling .raw), .json (JSON geometry + sibling .raw).
template <typename T>
void save_grid(const Grid<T>& g, const std::string& path) {
    namespace fs = std::filesystem;
    g.geom.validate();
    if (g.values.size() != g.geom.voxel_count())
        throw std::invalid_argument(path + ": value count does not match dims");
    const std::string ext = detail::lowercase_ext(path);
    auto write_header = [&](std::ostream& out, const std::string& data_file) {
        out << "ObjectType = Image\n"
            << "NDims = 3\n"
            << "BinaryData = True\n"
            << "BinaryDataByteOrderMSB = False\n"
            << "CompressedData = False\n"
            << "DimSize = " << g.geom.dims[0] << ' ' << g.geom.dims[1] << ' ' << g.geom.dims[2] << '\n'
            << "ElementSpacing = " << g.geom.spacing.x << ' ' << g.geom.spacing.y << ' ' << g.geom.spacing.z << '\n'
            << "Offset = " << g.geom.origin.x << ' ' << g.geom.origin.y << ' ' << g.geom.origin.z << '\n'
            << "ElementType = " << detail::met_element_type<T>() << '\n'
            << "ElementDataFile = " << data_file << '\n';
    };
    auto write_raw = [&](const fs::path& p) {
        std::ofstream raw(p, std::ios::binary | std::ios::trunc);
        if (!raw) throw std::runtime_error(p.string() + ": cannot open for writing");
        raw.write(reinterpret_cast<const char*>(g.values.data()),
                  static_cast<std::streamsize>(g.values.size() * sizeof(T)));
        if (!raw) throw std::runtime_error(p.string() + ": write failed");
    };
    if (ext == ".mha") {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error(path + ": cannot open for writing");
        std::ostringstream header;
        header.precision(17);
        write_header(header, "LOCAL");
        out << header.str();
        out.write(reinterpret_cast<const char*>(g.values.data()),
                  static_cast<std::streamsize>(g.values.size() * sizeof(T)));
        if (!out) throw std::runtime_error(path + ": write failed");
    } else if (ext == ".mhd") {
        const auto raw_name = fs::path(path).stem().string() + ".raw";
        std::ofstream out(path, std::ios::trunc);
        if (!out) throw std::runtime_error(path + ": cannot open for writing");
        out.precision(17);
        write_header(out, raw_name);
        write_raw(fs::path(path).parent_path() / raw_name);
    } else if (ext == ".json") {
        const auto raw_name = fs::path(path).stem().string() + ".raw";
        nlohmann::json j{{"dims", g.geom.dims},
                         {"spacing", {g.geom.spacing.x, g.geom.spacing.y, g.geom.spacing.z}},
                         {"origin", {g.geom.origin.x, g.geom.origin.y, g.geom.origin.z}},
                         {"element_type", detail::json_element_type<T>()},
                         {"data_file", raw_name}};
        std::ofstream out(path, std::ios::trunc);
        if (!out) throw std::runtime_error(path + ": cannot open for writing");
        out << j.dump(2) << '\n';
        write_raw(fs::path(path).parent_path() / raw_name);
    } else {
        throw std::runtime_error(path + ": unsupported extension (use .mha, .mhd or .json)");
    }
}

inline Volume load_volume(const std::string& path) { return load_grid<std::int16_t>(path); }
inline void save_volume(const Volume& v, const std::string& path) { save_grid(v, path); }
inline Mask load_mask(const std::string& path) { return load_grid<std::uint8_t>(path); }
inline void save_mask(const Mask& m, const std::string& path) { save_grid(m, path); }
inline LabelMask load_labels(const std::string& path) { return load_grid<std::uint16_t>(path); }
inline void save_labels(const LabelMask& m, const std::string& path) { save_grid(m, path); }

/// Peek at a grid file's element type ("MET_SHORT", "MET_UCHAR", "MET_USHORT",
/// or the raw+JSON equivalents normalized to the same names).
inline std::string probe_element_type(const std::string& path) {
    namespace fs = std::filesystem;
    if (!fs::exists(path)) throw std::runtime_error(path + ": file does not exist");
    const std::string ext = detail::lowercase_ext(path);
    if (ext == ".mha" || ext == ".mhd") {
        std::ifstream in(path, std::ios::binary);
        return detail::parse_meta_header(in, path).element_type;
    }
    if (ext == ".json") {
        std::ifstream in(path);
        nlohmann::json j = nlohmann::json::parse(in);
        const auto t = j.at("element_type").get<std::string>();
        if (t == "int16") return "MET_SHORT";
        if (t == "uint8") return "MET_UCHAR";
        if (t == "uint16") return "MET_USHORT";
        throw std::runtime_error(path + ": unknown element_type " + t);
    }
    throw std::runtime_error(path + ": unsupported extension");
}

}  // namespace patrack
