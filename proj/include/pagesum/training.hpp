#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"
#include "pagesum/checkpoint.hpp"
#include "pagesum/corpus.hpp"
#include "pagesum/model.hpp"
#include "pagesum/optim.hpp"
#include "pagesum/paging.hpp"

namespace pagesum {

struct TrainConfig {
    std::size_t epochs = 10;
    std::size_t batch_size = 1;  // documents per optimizer step
    double base_lr = 2e-3;
    std::size_t warmup = 10000;
    double label_smoothing = 0.1;
    double clip_norm = 1.0;
    std::uint64_t seed = 0;
    std::string checkpoint_dir = "checkpoints";
    DecodingMode mode = DecodingMode::paged;

    void check() const {
        if (batch_size < 1) throw input_error("train: batch_size must be >= 1");
        if (base_lr <= 0.0) throw input_error("train: base_lr must be positive");
        if (warmup < 1) throw input_error("train: warmup must be >= 1");
        if (label_smoothing < 0.0 || label_smoothing >= 1.0)
            throw input_error("train: label_smoothing must be in [0,1)");
        if (clip_norm <= 0.0) throw input_error("train: clip_norm must be positive");
        if (checkpoint_dir.empty()) throw input_error("train: checkpoint_dir must be set");
    }

    static TrainConfig from_json(const nlohmann::json& j) { return from_json(j, TrainConfig{}); }

    // Partial override: fields absent from j keep the values in `base`.
    static TrainConfig from_json(const nlohmann::json& j, const TrainConfig& base) {
        TrainConfig c = base;
        try {
            if (j.contains("epochs")) c.epochs = j.at("epochs").get<std::size_t>();
            if (j.contains("batch_size")) c.batch_size = j.at("batch_size").get<std::size_t>();
            if (j.contains("base_lr")) c.base_lr = j.at("base_lr").get<double>();
            if (j.contains("warmup")) c.warmup = j.at("warmup").get<std::size_t>();
            if (j.contains("label_smoothing")) c.label_smoothing = j.at("label_smoothing").get<double>();
            if (j.contains("clip_norm")) c.clip_norm = j.at("clip_norm").get<double>();
            if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
            if (j.contains("checkpoint_dir")) c.checkpoint_dir = j.at("checkpoint_dir").get<std::string>();
            if (j.contains("mode")) c.mode = mode_from_string(j.at("mode").get<std::string>());
        } catch (const nlohmann::json::exception& e) {
            throw format_error(std::string("train config: ") + e.what());
        }
        c.check();
        return c;
    }
};

struct StepRecord {
    std::uint64_t step;
    double loss;
    double lr;
    double grad_norm;
};

struct EpochRecord {
    std::size_t epoch;
    double valid_loss;
    std::string checkpoint;
};

struct TrainReport {
    std::vector<StepRecord> steps;
    std::vector<EpochRecord> epochs;
    std::string best_checkpoint;
    double best_valid_loss = 0.0;
    bool has_best = false;
};

namespace detail {

// Decoder input and labels for one document: prefix = BOS + summary,
// labels = summary + EOS, both capped to the position budget.
inline void teacher_forcing_pair(const SentenceDoc& sd, std::size_t max_positions, std::vector<int>& prefix,
                                 std::vector<int>& labels) {
    std::vector<int> y = sd.flat_summary();
    if (y.size() > max_positions - 1) y.resize(max_positions - 1);
    prefix.assign(1, BOS_ID);
    prefix.insert(prefix.end(), y.begin(), y.end());
    labels = y;
    labels.push_back(EOS_ID);
}

}  // namespace detail

// Teacher-forced mean per-token loss over a corpus; deterministic, no
// dropout, no graph construction.
template <typename T>
double evaluate_loss(const std::vector<SentenceDoc>& docs, const Model<T>& model, const PagingConfig& pc,
                     double label_smoothing, DecodingMode mode) {
    if (docs.empty()) throw input_error("evaluate_loss: empty corpus");
    NoGradGuard ng;
    double total = 0.0;
    std::size_t tokens = 0;
    for (const auto& sd : docs) {
        std::vector<int> prefix, labels;
        detail::teacher_forcing_pair(sd, model.cfg.max_positions, prefix, labels);
        const PagedDocument pd = split(sd, pc);
        const auto r = model.forward(pd, prefix, mode);
        const auto loss = cross_entropy_smoothed(r.logits, labels, label_smoothing);
        total += static_cast<double>(loss.item()) * static_cast<double>(labels.size());
        tokens += labels.size();
    }
    return total / static_cast<double>(tokens);
}

// One optimizer step per batch of documents (loss averaged over the batch),
// clipped gradients, warmup schedule, one checkpoint per epoch, best model
// selected by validation loss. `progress` receives one CSV-ish line per step
// and per epoch.
template <typename T>
TrainReport train(const std::vector<SentenceDoc>& train_docs, const std::vector<SentenceDoc>& valid_docs,
                  Model<T>& model, const PagingConfig& pc, const TrainConfig& tc, std::ostream* progress = nullptr) {
    tc.check();
    pc.check();
    check_compat(model.cfg, pc);
    if (train_docs.empty()) throw input_error("train: empty training corpus");
    if (valid_docs.empty()) throw input_error("train: empty validation corpus");

    for (auto& [name, p] : model.params) p.node()->requires_grad = true;
    Rng rng(tc.seed);
    Adam<T> opt;
    TrainReport report;
    std::uint64_t step = 0;
    char line[256];

    std::filesystem::create_directories(tc.checkpoint_dir);

    std::vector<std::size_t> order(train_docs.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (std::size_t epoch = 1; epoch <= tc.epochs; ++epoch) {
        rng.shuffle(order);
        for (std::size_t at = 0; at < order.size(); at += tc.batch_size) {
            const std::size_t batch_end = std::min(at + tc.batch_size, order.size());
            ++step;
            zero_grads(model.params);
            Tensor<T> batch_loss;
            std::string batch_ids;
            try {
                for (std::size_t b = at; b < batch_end; ++b) {
                    const SentenceDoc& sd = train_docs[order[b]];
                    if (!batch_ids.empty()) batch_ids += ",";
                    batch_ids += sd.id;
                    std::vector<int> prefix, labels;
                    detail::teacher_forcing_pair(sd, model.cfg.max_positions, prefix, labels);
                    const PagedDocument pd = split(sd, pc);
                    Rng* drng = model.cfg.dropout > 0.0 ? &rng : nullptr;
                    const auto r = model.forward(pd, prefix, tc.mode, drng);
                    const auto loss = cross_entropy_smoothed(r.logits, labels, tc.label_smoothing);
                    batch_loss = b == at ? loss : add(batch_loss, loss);
                }
                if (batch_end - at > 1) batch_loss = scale(batch_loss, 1.0 / static_cast<double>(batch_end - at));
                backward(batch_loss);
            } catch (const numeric_error& e) {
                throw numeric_error("train step " + std::to_string(step) + " (docs " + batch_ids +
                                    "): " + e.what());
            }
            const double gnorm = clip_gradients(model.params, tc.clip_norm);
            const double lr = lr_at(step, tc.warmup, tc.base_lr);
            opt.step(model.params, lr);
            report.steps.push_back({step, static_cast<double>(batch_loss.item()), lr, gnorm});
            if (progress) {
                std::snprintf(line, sizeof(line), "step,%llu,loss,%.6f,lr,%.10g,grad_norm,%.6f",
                              static_cast<unsigned long long>(step), static_cast<double>(batch_loss.item()), lr,
                              gnorm);
                *progress << line << '\n';
            }
        }

        const double vloss = evaluate_loss(valid_docs, model, pc, tc.label_smoothing, tc.mode);
        char name[64];
        std::snprintf(name, sizeof(name), "epoch_%03zu.pgsm", epoch);
        const std::string path = (std::filesystem::path(tc.checkpoint_dir) / name).string();
        save_checkpoint(path, model, &opt);
        report.epochs.push_back({epoch, vloss, path});
        if (progress) {
            std::snprintf(line, sizeof(line), "epoch,%zu,valid_loss,%.6f,checkpoint,%s", epoch, vloss, path.c_str());
            *progress << line << '\n';
        }
        if (!report.has_best || vloss < report.best_valid_loss) {
            report.has_best = true;
            report.best_valid_loss = vloss;
            report.best_checkpoint = path;
        }
    }

    if (report.has_best) {
        const std::string best_path = (std::filesystem::path(tc.checkpoint_dir) / "best.pgsm").string();
        std::filesystem::copy_file(report.best_checkpoint, best_path,
                                   std::filesystem::copy_options::overwrite_existing);
        if (progress) {
            std::snprintf(line, sizeof(line), "best,%s,valid_loss,%.6f", report.best_checkpoint.c_str(),
                          report.best_valid_loss);
            *progress << line << '\n';
        }
        report.best_checkpoint = best_path;
    }
    return report;
}

}  // namespace pagesum
