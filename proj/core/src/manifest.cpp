#include "casc/manifest.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "casc/image_io.hpp"
#include "casc/io_util.hpp"

namespace casc {

namespace fs = std::filesystem;

DatasetManifest DatasetManifest::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open manifest: " + path);

    DatasetManifest manifest;
    manifest.base_dir = fs::path(path).parent_path().string();

    std::string line;
    bool header_seen = false;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        std::vector<std::string> fields;
        std::stringstream ss(line);
        std::string field;
        while (std::getline(ss, field, ',')) fields.push_back(field);
        if (!header_seen) {
            if (fields.size() != 4 || fields[0] != "slide_id")
                throw std::runtime_error(path + ": expected header slide_id,image_path,mask_path,class_name");
            header_seen = true;
            continue;
        }
        if (fields.size() != 4)
            throw std::runtime_error(path + ":" + std::to_string(line_no) +
                                     ": expected 4 fields");
        manifest.rows.push_back({fields[0], fields[1], fields[2], fields[3]});
    }
    return manifest;
}

std::string DatasetManifest::image_path(std::size_t row) const {
    return (fs::path(base_dir) / rows[row].image_path).string();
}

std::string DatasetManifest::mask_path(std::size_t row) const {
    return (fs::path(base_dir) / rows[row].mask_path).string();
}

void DatasetManifest::validate(const std::vector<std::string>& class_names) const {
    std::string errors;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const ManifestRow& row = rows[i];
        std::string problem;
        if (row.slide_id.empty()) problem = "empty slide_id";
        else if (std::find(class_names.begin(), class_names.end(), row.class_name) ==
                 class_names.end())
            problem = "unknown class " + row.class_name;
        else if (!fs::exists(image_path(i))) problem = "missing image " + row.image_path;
        else if (!fs::exists(mask_path(i))) problem = "missing mask " + row.mask_path;
        else {
            Index iw, ih, mw, mh;
            if (!read_png_size(image_path(i), iw, ih)) problem = "unreadable image";
            else if (!read_png_size(mask_path(i), mw, mh)) problem = "unreadable mask";
            else if (iw != mw || ih != mh) problem = "mask size differs from image size";
        }
        if (!problem.empty())
            errors += "  row " + std::to_string(i + 1) + " (" + row.image_path + "): " +
                      problem + "\n";
    }
    if (!errors.empty()) throw std::runtime_error("manifest validation failed:\n" + errors);
}

std::vector<std::string> DatasetManifest::slide_ids() const {
    std::vector<std::string> ids;
    for (const auto& row : rows)
        if (std::find(ids.begin(), ids.end(), row.slide_id) == ids.end())
            ids.push_back(row.slide_id);
    return ids;
}

Index DatasetManifest::class_index(std::size_t row,
                                   const std::vector<std::string>& class_names) const {
    const auto it = std::find(class_names.begin(), class_names.end(), rows[row].class_name);
    if (it == class_names.end())
        throw std::invalid_argument("unknown class: " + rows[row].class_name);
    return static_cast<Index>(it - class_names.begin());
}

void write_manifest(const std::string& path, const std::vector<ManifestRow>& rows,
                    const std::string& header) {
    std::string out = header;
    out += "slide_id,image_path,mask_path,class_name\n";
    for (const auto& row : rows)
        out += row.slide_id + "," + row.image_path + "," + row.mask_path + "," +
               row.class_name + "\n";
    atomic_write_file(path, out);
}

} // namespace casc
