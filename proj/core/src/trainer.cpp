#include "casc/trainer.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <stdexcept>
#include <thread>

#include "casc/consensus.hpp"
#include "casc/grid_ops.hpp"
#include "casc/rng.hpp"

namespace casc {

void ExperimentConfig::validate() const {
    require(k >= 0, "config: k must be >= 0");
    require(k % 2 == 0, "config: k must be even");
    require(tau > 0.0 && tau < 1.0, "config: tau must be in (0,1)");
    require(lambda_con >= 0.0, "config: lambda_con must be >= 0");
    require(margin > 0.0, "config: margin must be > 0");
    require(lr >= 0.0, "config: lr must be >= 0");
    require(momentum >= 0.0 && momentum < 1.0, "config: momentum must be in [0,1)");
    require(epochs >= 1, "config: epochs must be >= 1");
    require(batch_size == 1, "config: batch_size 1 is the only supported setting");
    require(ch >= 2, "config: ch must be >= 2");
    require(class_count >= 1, "config: class_count must be >= 1");
}

std::string split_name(Split split) {
    switch (split) {
        case Split::kTrain: return "train";
        case Split::kVal: return "val";
        default: return "test";
    }
}

Split SplitPlan::of(const std::string& slide_id) const {
    const auto it = assignment.find(slide_id);
    if (it == assignment.end())
        throw std::invalid_argument("split plan: unknown slide " + slide_id);
    return it->second;
}

Index SplitPlan::count(Split split) const {
    Index n = 0;
    for (const auto& [slide, s] : assignment)
        if (s == split) ++n;
    return n;
}

SplitPlan split_slides(const std::vector<std::string>& slide_ids, std::uint64_t seed) {
    require(slide_ids.size() >= 3, "split_slides: need at least 3 slides");
    std::vector<std::string> shuffled = slide_ids;
    rng::Xoshiro256StarStar gen(seed);
    rng::shuffle(shuffled, gen);

    // largest-remainder apportionment of 6:1:3
    const double total = static_cast<double>(shuffled.size());
    const double ratios[3] = {0.6, 0.1, 0.3};
    Index counts[3];
    double remainders[3];
    Index allocated = 0;
    for (int s = 0; s < 3; ++s) {
        const double quota = ratios[s] * total;
        counts[s] = static_cast<Index>(std::floor(quota));
        remainders[s] = quota - std::floor(quota);
        allocated += counts[s];
    }
    Index leftover = static_cast<Index>(shuffled.size()) - allocated;
    while (leftover-- > 0) {
        int best = 0;
        for (int s = 1; s < 3; ++s)
            if (remainders[s] > remainders[best]) best = s;
        ++counts[best];
        remainders[best] = -1.0;
    }
    // every split gets at least one slide
    for (int s = 0; s < 3; ++s) {
        if (counts[s] > 0) continue;
        int largest = 0;
        for (int t = 1; t < 3; ++t)
            if (counts[t] > counts[largest]) largest = t;
        --counts[largest];
        ++counts[s];
    }

    SplitPlan plan;
    std::size_t pos = 0;
    const Split order[3] = {Split::kTrain, Split::kVal, Split::kTest};
    for (int s = 0; s < 3; ++s)
        for (Index i = 0; i < counts[s]; ++i) plan.assignment[shuffled[pos++]] = order[s];
    return plan;
}

FeatureMap build_model_input(const ImageRgb8& image, Index class_index, Index class_count) {
    require(class_index >= 0 && class_index < class_count,
            "build_model_input: class index out of range");
    FeatureMap input(3 + class_count, image.width, image.height);
    for (Index y = 0; y < image.height; ++y)
        for (Index x = 0; x < image.width; ++x)
            for (int ch = 0; ch < 3; ++ch)
                input.at(ch, x, y) = static_cast<double>(image.at(x, y, ch)) / 255.0;
    for (Index i = 0, n = input.plane(); i < n; ++i)
        input.at_flat(3 + class_index, i) = 1.0;
    return input;
}

BinaryMask predict_mask(const ModelState& model, const ImageRgb8& image, Index class_index,
                        Index class_count) {
    const FeatureMap input = build_model_input(image, class_index, class_count);
    const ForwardOutputs out = forward(model, input);
    BinaryMask pred(image.width, image.height);
    for (Index i = 0, n = out.c.size(); i < n; ++i) pred[i] = out.c[i] >= 0.5 ? 1 : 0;
    return pred;
}

double mean_class_dice(const ModelState& model, const std::vector<Sample>& samples,
                       Index class_count) {
    std::vector<double> class_sum(static_cast<std::size_t>(class_count), 0.0);
    std::vector<Index> class_n(static_cast<std::size_t>(class_count), 0);
    const std::vector<EvalRow> rows = evaluate_split(model, samples, class_count);
    for (const auto& row : rows) {
        class_sum[static_cast<std::size_t>(row.class_index)] += row.dice;
        class_n[static_cast<std::size_t>(row.class_index)] += 1;
    }
    double mean = 0.0;
    Index present = 0;
    for (Index c = 0; c < class_count; ++c) {
        if (class_n[static_cast<std::size_t>(c)] == 0) continue;
        mean += class_sum[static_cast<std::size_t>(c)] /
                static_cast<double>(class_n[static_cast<std::size_t>(c)]);
        ++present;
    }
    return present > 0 ? mean / static_cast<double>(present) : 0.0;
}

TrainResult train(const ExperimentConfig& config, const std::vector<Sample>& train_set,
                  const std::vector<Sample>& val_set) {
    config.validate();
    require(!train_set.empty(), "train: empty training set");

    ModelState model =
        init_model(rng::derive_seed(config.seed, "init"), config.ch, config.class_count);
    const TotalLossConfig loss_cfg{config.lambda_con, config.margin, config.contrastive};

    TrainResult result;
    result.best_val_dice = -1.0;

    std::vector<std::size_t> order(train_set.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (Index epoch = 0; epoch < config.epochs; ++epoch) {
        rng::Xoshiro256StarStar shuffle_gen(
            rng::derive_seed(config.seed, "shuffle", static_cast<std::uint64_t>(epoch)));
        rng::shuffle(order, shuffle_gen);

        EpochStats stats;
        stats.epoch = epoch;
        for (const std::size_t si : order) {
            const Sample& sample = train_set[si];
            const Index k =
                config.k > 0 ? config.k : default_k(sample.image.width, sample.image.height);
            const FeatureMap input =
                build_model_input(sample.image, sample.class_index, config.class_count);

            ForwardCache cache;
            const ForwardOutputs out = forward(model, input, cache);

            ConsensusArtifacts artifacts; // defaults to no_consensus
            if (config.mode == TrainMode::kCasc)
                artifacts = build_consensus_artifacts(out.f_d, out.c, sample.label, k);

            const LossBreakdown loss = total_loss(out.c, sample.label, artifacts, loss_cfg);
            if (!std::isfinite(loss.total))
                throw std::runtime_error("diverged at epoch " + std::to_string(epoch));
            stats.train_loss += loss.total;
            stats.dice_term += loss.dice_term;
            stats.bce_term += loss.bce_term;
            stats.contrastive_term += loss.contrastive;

            const TotalLossGrads grads =
                total_loss_backward(out.c, sample.label, artifacts, loss_cfg, loss);
            const Logits grad_p = softmax_foreground_backward(out.c, grads.grad_c);
            FeatureMap grad_f_d(out.f_d.channels(), out.f_d.width(), out.f_d.height());
            if (!artifacts.no_consensus)
                distillation_backward(out.f_d, artifacts, grads.grad_f_cell, grads.grad_f_noise,
                                      grad_f_d);
            backward(model, cache, grad_p, grad_f_d);
            sgd_step(model, config.lr, config.momentum);
        }
        const double inv = 1.0 / static_cast<double>(train_set.size());
        stats.train_loss *= inv;
        stats.dice_term *= inv;
        stats.bce_term *= inv;
        stats.contrastive_term *= inv;

        stats.val_mean_dice =
            val_set.empty() ? 0.0 : mean_class_dice(model, val_set, config.class_count);
        result.history.push_back(stats);

        if (stats.val_mean_dice > result.best_val_dice) {
            result.best_val_dice = stats.val_mean_dice;
            result.best_epoch = epoch;
            result.best_model = model;
        }
    }
    result.final_model = std::move(model);
    return result;
}

unsigned worker_count() {
    if (const char* env = std::getenv("CASC_THREADS")) {
        const long v = std::strtol(env, nullptr, 10);
        if (v >= 1) return static_cast<unsigned>(v);
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw > 0 ? hw : 1;
}

namespace {

// Deterministic per-image parallel map: results land by index.
template <typename Fn>
void parallel_for(std::size_t count, Fn&& fn) {
    const unsigned workers = std::min<unsigned>(worker_count(),
                                                static_cast<unsigned>(std::max<std::size_t>(count, 1)));
    if (workers <= 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> cursor{0};
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (unsigned t = 0; t < workers; ++t)
        pool.emplace_back([&] {
            for (;;) {
                const std::size_t i = cursor.fetch_add(1);
                if (i >= count) return;
                fn(i);
            }
        });
    for (auto& th : pool) th.join();
}

} // namespace

std::vector<EvalRow> evaluate_split(const ModelState& model, const std::vector<Sample>& samples,
                                    Index class_count) {
    std::vector<EvalRow> rows(samples.size());
    parallel_for(samples.size(), [&](std::size_t i) {
        const Sample& sample = samples[i];
        const BinaryMask pred =
            predict_mask(model, sample.image, sample.class_index, class_count);
        rows[i] = {sample.image_id, sample.class_index, dice_score(pred, sample.label),
                   instance_f1(pred, sample.label)};
    });
    return rows;
}

std::vector<RegionRow> training_region_rows(const ModelState& model,
                                            const std::vector<Sample>& noisy_samples,
                                            const std::vector<BinaryMask>& clean_masks,
                                            Index class_count) {
    require(noisy_samples.size() == clean_masks.size(),
            "training_region_rows: sample/mask count mismatch");
    std::vector<RegionRow> rows(noisy_samples.size());
    parallel_for(noisy_samples.size(), [&](std::size_t i) {
        const Sample& sample = noisy_samples[i];
        const BinaryMask pred =
            predict_mask(model, sample.image, sample.class_index, class_count);
        rows[i] = {sample.image_id, sample.class_index,
                   training_region_report(pred, sample.label, clean_masks[i])};
    });
    return rows;
}

} // namespace casc
