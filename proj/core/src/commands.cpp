#include "casc/commands.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <sstream>
#include <stdexcept>

#include "casc/image_io.hpp"
#include "casc/io_util.hpp"
#include "casc/manifest.hpp"
#include "casc/metrics.hpp"
#include "casc/noise.hpp"
#include "casc/rng.hpp"
#include "casc/synth.hpp"
#include "casc/trainer.hpp"

namespace casc::cmd {

namespace fs = std::filesystem;

namespace {

std::vector<std::string> parse_class_names(const Config& config) {
    const std::string joined = config.get_string("class_names", "Pod,Mes,Endo,Pecs");
    std::vector<std::string> names;
    std::stringstream ss(joined);
    std::string name;
    while (std::getline(ss, name, ',')) names.push_back(name);
    if (names.empty()) throw std::runtime_error("config: class_names is empty");
    return names;
}

std::string opt_cell(const std::optional<double>& v) {
    return v ? format_double(*v) : std::string();
}

struct SummaryAccumulator {
    std::map<std::string, std::vector<double>> dice, f1, fp, fn;

    void add(const std::string& cls, double d, double f, std::optional<double> fpv,
             std::optional<double> fnv) {
        dice[cls].push_back(d);
        f1[cls].push_back(f);
        if (fpv) fp[cls].push_back(*fpv);
        if (fnv) fn[cls].push_back(*fnv);
    }

    static std::pair<double, double> mean_std(const std::vector<double>& xs) {
        if (xs.empty()) return {0.0, 0.0};
        double mean = 0;
        for (double x : xs) mean += x;
        mean /= static_cast<double>(xs.size());
        double var = 0;
        for (double x : xs) var += (x - mean) * (x - mean);
        var /= static_cast<double>(xs.size());
        return {mean, std::sqrt(var)};
    }

    // mean and std rows per class, then an overall mean row across classes.
    std::string rows(const std::vector<std::string>& class_names) const {
        std::string out;
        double overall = 0;
        Index present = 0;
        for (const auto& cls : class_names) {
            const auto it = dice.find(cls);
            if (it == dice.end()) continue;
            const auto [dm, ds] = mean_std(it->second);
            const auto [fm, fsd] = mean_std(f1.at(cls));
            std::string fp_mean, fp_std, fn_mean, fn_std;
            if (fp.count(cls) && !fp.at(cls).empty()) {
                const auto [m, s] = mean_std(fp.at(cls));
                fp_mean = format_double(m);
                fp_std = format_double(s);
            }
            if (fn.count(cls) && !fn.at(cls).empty()) {
                const auto [m, s] = mean_std(fn.at(cls));
                fn_mean = format_double(m);
                fn_std = format_double(s);
            }
            out += "mean," + cls + "," + format_double(dm) + "," + format_double(fm) + "," +
                   fp_mean + "," + fn_mean + "\n";
            out += "std," + cls + "," + format_double(ds) + "," + format_double(fsd) + "," +
                   fp_std + "," + fn_std + "\n";
            overall += dm;
            ++present;
        }
        if (present > 0)
            out += "mean,all," + format_double(overall / static_cast<double>(present)) +
                   ",,,\n";
        return out;
    }
};

struct LoadedRow {
    Sample sample;
    Split split;
    std::size_t manifest_index;
};

std::vector<LoadedRow> load_samples(const DatasetManifest& manifest,
                                    const std::vector<std::string>& class_names,
                                    const SplitPlan& plan) {
    std::vector<LoadedRow> rows;
    rows.reserve(manifest.rows.size());
    for (std::size_t i = 0; i < manifest.rows.size(); ++i) {
        LoadedRow row;
        row.manifest_index = i;
        row.split = plan.of(manifest.rows[i].slide_id);
        row.sample.image_id = fs::path(manifest.rows[i].image_path).stem().string();
        row.sample.slide_id = manifest.rows[i].slide_id;
        row.sample.class_index = manifest.class_index(i, class_names);
        row.sample.image = read_rgb_png(manifest.image_path(i));
        row.sample.label = read_mask_png(manifest.mask_path(i));
        rows.push_back(std::move(row));
    }
    return rows;
}

void ensure_empty_or_force(const std::string& out_dir, bool force) {
    if (!fs::exists(out_dir)) return;
    if (fs::is_directory(out_dir) && fs::directory_iterator(out_dir) == fs::directory_iterator())
        return;
    if (!force)
        throw std::runtime_error("output directory exists and is not empty (use --force): " +
                                 out_dir);
}

} // namespace

void synth(const Config& config, bool force) {
    SynthParams params;
    params.patch_width = config.get_index("patch_size", 64);
    params.patch_height = params.patch_width;
    params.train_patches = config.get_index("train_patches", 60);
    params.val_patches = config.get_index("val_patches", 10);
    params.test_patches = config.get_index("test_patches", 30);
    params.slides = config.get_index("slides", 21);
    params.cells_min = config.get_index("cells_min", 5);
    params.cells_max = config.get_index("cells_max", 8);
    params.distractors_min = config.get_index("distractors_min", 4);
    params.distractors_max = config.get_index("distractors_max", 6);
    params.radius_min = config.get_double("radius_min", 3.5);
    params.radius_max = config.get_double("radius_max", 6.5);
    params.seed = config.get_u64("seed", 0);
    const std::vector<std::string> class_names = parse_class_names(config);
    const std::string out_dir = config.get_string("out", "dataset");

    ensure_empty_or_force(out_dir, force);
    if (params.total_patches() == 0) {
        write_manifest((fs::path(out_dir) / "manifest.csv").string(), {},
                       config.echo_header("synth"));
        return;
    }

    const SynthDataset dataset = synth_dataset(params);
    std::vector<ManifestRow> rows;
    for (const SynthPatch& patch : dataset.patches) {
        const std::string image_rel = "images/" + patch.patch_id + ".png";
        const std::string mask_rel = "masks_clean/" + patch.patch_id + ".png";
        write_rgb_png((fs::path(out_dir) / image_rel).string(), patch.image);
        write_mask_png((fs::path(out_dir) / mask_rel).string(), patch.clean_mask);
        rows.push_back({patch.slide_id, image_rel, mask_rel,
                        class_names[static_cast<std::size_t>(patch.class_index) %
                                    class_names.size()]});
    }
    write_manifest((fs::path(out_dir) / "manifest.csv").string(), rows,
                   config.echo_header("synth"));
}

void inject(const Config& config) {
    const std::string manifest_path = config.get_string("manifest", "dataset/manifest.csv");
    const std::string out_dir = config.get_string("out", "dataset_noisy");
    const std::vector<std::string> class_names = parse_class_names(config);
    const std::uint64_t seed = config.get_u64("seed", 0);

    NoiseRecipe recipe;
    recipe.rho_fp = config.get_double("rho_fp", 0.5);
    recipe.missing_ratio = config.get_double("missing_ratio", 0.3);
    recipe.intensity_threshold = config.get_double("intensity_threshold", 60.0);
    recipe.seed = seed;

    DatasetManifest manifest = DatasetManifest::load(manifest_path);
    manifest.validate(class_names);

    // size bounds default to the 512x512 values scaled to the first patch
    Index default_amin = 30, default_amax = 1500;
    if (!manifest.rows.empty()) {
        Index w, h;
        if (read_png_size(manifest.image_path(0), w, h)) {
            const NoiseRecipe scaled = NoiseRecipe::scaled_for(w, h);
            default_amin = scaled.area_min;
            default_amax = scaled.area_max;
        }
    }
    recipe.area_min = config.get_index("area_min", default_amin);
    recipe.area_max = config.get_index("area_max", default_amax);
    recipe.validate();

    const std::string header = config.echo_header("inject");
    std::string report_csv = header;
    report_csv += "image_id,contour_index,action,area,centroid_x,centroid_y\n";

    SummaryAccumulator label_acc;
    std::vector<ManifestRow> noisy_rows;
    for (std::size_t i = 0; i < manifest.rows.size(); ++i) {
        const ManifestRow& row = manifest.rows[i];
        const std::string image_id = fs::path(row.image_path).stem().string();
        const ImageRgb8 image = read_rgb_png(manifest.image_path(i));
        const BinaryMask clean = read_mask_png(manifest.mask_path(i));

        // FN removal first, then FP injection relative to what remains
        // annotated (candidate proximity follows the surviving annotation).
        const RemoveResult removed =
            remove_fn(clean, recipe.missing_ratio, rng::derive_seed(seed, "noise", i));
        const InjectResult injected = inject_fp(image, removed.noisy, recipe);

        for (const auto& r : injected.report)
            report_csv += image_id + "," + std::to_string(r.contour_index) + ",add," +
                          std::to_string(r.area) + "," + format_double(r.centroid_x) + "," +
                          format_double(r.centroid_y) + "\n";
        for (const auto& r : removed.report)
            report_csv += image_id + "," + std::to_string(r.contour_index) + ",remove," +
                          std::to_string(r.area) + "," + format_double(r.centroid_x) + "," +
                          format_double(r.centroid_y) + "\n";

        const auto [dice, f1] = label_accuracy(injected.noisy, clean);
        label_acc.add(row.class_name, dice, f1, std::nullopt, std::nullopt);

        const std::string mask_rel = "masks_noisy/" + image_id + ".png";
        write_mask_png((fs::path(out_dir) / mask_rel).string(), injected.noisy);

        // keep image paths valid relative to the new manifest location
        const fs::path image_abs = fs::absolute(manifest.image_path(i));
        const fs::path out_abs = fs::absolute(out_dir);
        noisy_rows.push_back({row.slide_id,
                              fs::relative(image_abs, out_abs).string(), mask_rel,
                              row.class_name});
    }

    write_manifest((fs::path(out_dir) / "manifest.csv").string(), noisy_rows, header);
    atomic_write_file((fs::path(out_dir) / "noise_report.csv").string(), report_csv);

    std::string acc_csv = header;
    acc_csv += "image_id,class,dice,f1,fp_iou,fn_iou\n";
    acc_csv += label_acc.rows(class_names);
    atomic_write_file((fs::path(out_dir) / "label_accuracy.csv").string(), acc_csv);
}

namespace {

ExperimentConfig experiment_from(const Config& config) {
    ExperimentConfig exp;
    const std::string mode = config.get_string("mode", "casc");
    if (mode == "supervised")
        exp.mode = TrainMode::kSupervised;
    else if (mode == "casc")
        exp.mode = TrainMode::kCasc;
    else
        throw std::runtime_error("config: mode must be supervised or casc, got " + mode);
    exp.k = config.get_index("k", 0);
    exp.tau = config.get_double("tau", kDefaultTau);
    exp.lambda_con = config.get_double("lambda_con", 1.0);
    exp.margin = config.get_double("margin", 1.0);
    const std::string contrastive = config.get_string("contrastive", "separative");
    if (contrastive == "separative")
        exp.contrastive = ContrastiveMode::kSeparative;
    else if (contrastive == "literal")
        exp.contrastive = ContrastiveMode::kLiteral;
    else
        throw std::runtime_error("config: contrastive must be separative or literal");
    exp.lr = config.get_double("lr", 1e-4);
    exp.momentum = config.get_double("momentum", 0.9);
    exp.epochs = config.get_index("epochs", 100);
    exp.batch_size = config.get_index("batch_size", 1);
    exp.ch = config.get_index("ch", 16);
    exp.seed = config.get_u64("seed", 0);
    return exp;
}

} // namespace

void train(const Config& config) {
    const std::string manifest_path = config.get_string("manifest", "dataset_noisy/manifest.csv");
    const std::string out_dir = config.get_string("out", "run");
    const std::vector<std::string> class_names = parse_class_names(config);
    ExperimentConfig exp = experiment_from(config);
    exp.class_count = static_cast<Index>(class_names.size());

    DatasetManifest manifest = DatasetManifest::load(manifest_path);
    manifest.validate(class_names);
    const SplitPlan plan =
        split_slides(manifest.slide_ids(), rng::derive_seed(exp.seed, "split"));

    std::vector<Sample> train_set, val_set;
    for (auto& row : load_samples(manifest, class_names, plan)) {
        if (row.split == Split::kTrain) train_set.push_back(std::move(row.sample));
        else if (row.split == Split::kVal) val_set.push_back(std::move(row.sample));
    }

    const TrainResult result = train(exp, train_set, val_set);

    // split audit: which slides fed gradients vs. selection vs. nothing
    std::string split_audit;
    for (const Split split : {Split::kTrain, Split::kVal, Split::kTest}) {
        split_audit += "# split_" + split_name(split) + "=";
        bool first = true;
        for (const auto& [slide, assigned] : plan.assignment) {
            if (assigned != split) continue;
            if (!first) split_audit += ";";
            split_audit += slide;
            first = false;
        }
        split_audit += "\n";
    }

    const std::string header = config.echo_header("train") + split_audit;
    std::string history = header;
    history += "epoch,train_loss,dice_term,bce_term,contrastive_term,val_mean_dice\n";
    for (const EpochStats& s : result.history)
        history += std::to_string(s.epoch) + "," + format_double(s.train_loss) + "," +
                   format_double(s.dice_term) + "," + format_double(s.bce_term) + "," +
                   format_double(s.contrastive_term) + "," + format_double(s.val_mean_dice) +
                   "\n";
    history += "# best_epoch=" + std::to_string(result.best_epoch) + "\n";
    history += "# best_val_mean_dice=" + format_double(result.best_val_dice) + "\n";
    atomic_write_file((fs::path(out_dir) / "history.csv").string(), history);
    save_checkpoint(result.best_model, (fs::path(out_dir) / "checkpoint.casc").string());
}

void eval(const Config& config, const std::string& compare_path) {
    const std::string clean_path = config.get_string("manifest_clean", "dataset/manifest.csv");
    const std::string noisy_path = config.get_string("manifest_noisy", "");
    const std::string checkpoint_path = config.get_string("checkpoint", "run/checkpoint.casc");
    const std::string out_dir = config.get_string("out", "run");
    const std::vector<std::string> class_names = parse_class_names(config);
    const std::uint64_t seed = config.get_u64("seed", 0);

    DatasetManifest clean_manifest = DatasetManifest::load(clean_path);
    clean_manifest.validate(class_names);
    const SplitPlan plan =
        split_slides(clean_manifest.slide_ids(), rng::derive_seed(seed, "split"));

    const ModelState model = load_checkpoint(checkpoint_path);
    const auto class_count = static_cast<Index>(class_names.size());

    // test split against clean ground truth
    std::vector<Sample> test_set;
    for (auto& row : load_samples(clean_manifest, class_names, plan))
        if (row.split == Split::kTest) test_set.push_back(std::move(row.sample));
    if (test_set.empty()) throw std::runtime_error("eval: empty test split");

    const std::vector<EvalRow> rows = evaluate_split(model, test_set, class_count);
    const std::string header = config.echo_header("eval");
    std::string metrics_csv = header;
    metrics_csv += "image_id,class,dice,f1,fp_iou,fn_iou\n";
    SummaryAccumulator summary;
    for (const EvalRow& row : rows) {
        const std::string& cls = class_names[static_cast<std::size_t>(row.class_index)];
        metrics_csv += row.image_id + "," + cls + "," + format_double(row.dice) + "," +
                       format_double(row.f1) + ",,\n";
        summary.add(cls, row.dice, row.f1, std::nullopt, std::nullopt);
    }
    metrics_csv += summary.rows(class_names);
    atomic_write_file((fs::path(out_dir) / "metrics.csv").string(), metrics_csv);

    // training-split region report against the known noise regions
    if (!noisy_path.empty()) {
        DatasetManifest noisy_manifest = DatasetManifest::load(noisy_path);
        noisy_manifest.validate(class_names);
        if (noisy_manifest.rows.size() != clean_manifest.rows.size())
            throw std::runtime_error("eval: clean and noisy manifests differ in row count");

        std::vector<Sample> noisy_train;
        std::vector<BinaryMask> clean_masks;
        for (std::size_t i = 0; i < noisy_manifest.rows.size(); ++i) {
            if (plan.of(noisy_manifest.rows[i].slide_id) != Split::kTrain) continue;
            Sample sample;
            sample.image_id = fs::path(noisy_manifest.rows[i].image_path).stem().string();
            sample.slide_id = noisy_manifest.rows[i].slide_id;
            sample.class_index = noisy_manifest.class_index(i, class_names);
            sample.image = read_rgb_png(noisy_manifest.image_path(i));
            sample.label = read_mask_png(noisy_manifest.mask_path(i));
            clean_masks.push_back(read_mask_png(clean_manifest.mask_path(i)));
            noisy_train.push_back(std::move(sample));
        }
        const std::vector<RegionRow> region_rows =
            training_region_rows(model, noisy_train, clean_masks, class_count);
        std::string region_csv = header;
        region_csv += "image_id,class,dice,f1,fp_iou,fn_iou\n";
        SummaryAccumulator region_summary;
        for (const RegionRow& row : region_rows) {
            const std::string& cls = class_names[static_cast<std::size_t>(row.class_index)];
            region_csv += row.image_id + "," + cls + "," + format_double(row.report.tp_dice) +
                          "," + format_double(row.report.tp_f1) + "," +
                          opt_cell(row.report.fp_iou) + "," + opt_cell(row.report.fn_iou) + "\n";
            region_summary.add(cls, row.report.tp_dice, row.report.tp_f1, row.report.fp_iou,
                               row.report.fn_iou);
        }
        region_csv += region_summary.rows(class_names);
        atomic_write_file((fs::path(out_dir) / "train_regions.csv").string(), region_csv);
    }

    if (!compare_path.empty()) {
        // pair per-image dice rows by (image_id, class)
        const auto parse_rows = [](const std::string& text) {
            std::map<std::string, double> out;
            std::stringstream ss(text);
            std::string line;
            bool header_seen = false;
            while (std::getline(ss, line)) {
                if (line.empty() || line[0] == '#') continue;
                if (!header_seen) {
                    header_seen = true;
                    continue;
                }
                std::vector<std::string> fields;
                std::stringstream ls(line);
                std::string field;
                while (std::getline(ls, field, ',')) fields.push_back(field);
                if (fields.size() < 3 || fields[0] == "mean" || fields[0] == "std") continue;
                out[fields[0] + "," + fields[1]] = std::stod(fields[2]);
            }
            return out;
        };
        const auto ours = parse_rows(metrics_csv);
        const auto theirs = parse_rows(read_file(compare_path));
        if (ours.size() != theirs.size())
            throw std::runtime_error("eval --compare: row sets are incompatible");
        std::vector<double> a, b;
        for (const auto& [key, dice] : ours) {
            const auto it = theirs.find(key);
            if (it == theirs.end())
                throw std::runtime_error("eval --compare: missing row " + key);
            a.push_back(dice);
            b.push_back(it->second);
        }
        const WilcoxonResult wilcoxon = wilcoxon_signed_rank(a, b);
        std::string cmp = header;
        cmp += "statistic,n,p_value,p_bucket\n";
        if (wilcoxon.no_signal)
            cmp += ",,,no-signal\n";
        else
            cmp += format_double(wilcoxon.statistic) + "," + std::to_string(wilcoxon.n) + "," +
                   format_double(wilcoxon.p_value) + "," + wilcoxon.p_bucket + "\n";
        atomic_write_file((fs::path(out_dir) / "compare.csv").string(), cmp);
    }
}

} // namespace casc::cmd
