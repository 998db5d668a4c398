#pragma once
// Dataset manifest: one row per patch with its slide, image, mask and class.

#include <string>
#include <vector>

#include "casc/grid.hpp"

namespace casc {

inline const std::vector<std::string> kDefaultClassNames = {"Pod", "Mes", "Endo", "Pecs"};

struct ManifestRow {
    std::string slide_id;
    std::string image_path; // relative to the manifest's directory
    std::string mask_path;
    std::string class_name;
};

struct DatasetManifest {
    std::string base_dir;
    std::vector<ManifestRow> rows;

    static DatasetManifest load(const std::string& path);

    // Checks that paths exist, class names are known, slide ids are
    // non-empty, and each mask size matches its image size. Throws listing
    // every offending row.
    void validate(const std::vector<std::string>& class_names) const;

    std::string image_path(std::size_t row) const;
    std::string mask_path(std::size_t row) const;

    // Unique slide ids in first-appearance order.
    std::vector<std::string> slide_ids() const;

    Index class_index(std::size_t row, const std::vector<std::string>& class_names) const;
};

void write_manifest(const std::string& path, const std::vector<ManifestRow>& rows,
                    const std::string& header);

} // namespace casc
