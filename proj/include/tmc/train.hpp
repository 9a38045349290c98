#pragma once

// Adam optimization, learning-rate-on-plateau, early stopping, checkpoints,
// the training/evaluation drivers, and the seed-replicated ablation runner.

#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "tmc/config.hpp"
#include "tmc/dataset.hpp"
#include "tmc/metrics.hpp"
#include "tmc/segnet.hpp"
#include "tmc/stats.hpp"
#include "tmc/text.hpp"

namespace tmc {

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

struct AdamState {
    std::vector<std::vector<double>> m, v;
    int64_t t = 0;

    void init(const ParamStore& store) {
        m.assign(store.size(), {});
        v.assign(store.size(), {});
        for (size_t i = 0; i < store.size(); ++i) {
            m[i].assign(static_cast<size_t>(store.param(i).numel()), 0.0);
            v[i].assign(static_cast<size_t>(store.param(i).numel()), 0.0);
        }
        t = 0;
    }
};

inline constexpr double kAdamBeta1 = 0.9;
inline constexpr double kAdamBeta2 = 0.999;
inline constexpr double kAdamEps = 1e-8;

// One bias-corrected Adam step over every parameter. Parameters the current
// graph did not reach contribute zero gradient; frozen parameters are skipped
// entirely.
inline void adam_step(ParamStore& store, AdamState& state, double lr, bool freeze_text = false) {
    if (state.m.size() != store.size())
        throw std::logic_error("adam_step: state not initialized for this parameter store");
    ++state.t;
    double bc1 = 1.0 - std::pow(kAdamBeta1, static_cast<double>(state.t));
    double bc2 = 1.0 - std::pow(kAdamBeta2, static_cast<double>(state.t));
    for (size_t p = 0; p < store.size(); ++p) {
        if (freeze_text && store.name(p).rfind("text.", 0) == 0) continue;
        Tensor& param = store.param(p);
        const std::vector<double>* g = param.has_grad() ? &param.grad() : nullptr;
        auto& vals = param.mutable_values();
        for (size_t i = 0; i < vals.size(); ++i) {
            double gi = g ? (*g)[i] : 0.0;
            if (std::isnan(gi))
                throw std::runtime_error("NaN gradient in parameter " + store.name(p));
            double& mi = state.m[p][i];
            double& vi = state.v[p][i];
            mi = kAdamBeta1 * mi + (1.0 - kAdamBeta1) * gi;
            vi = kAdamBeta2 * vi + (1.0 - kAdamBeta2) * gi * gi;
            double mhat = mi / bc1;
            double vhat = vi / bc2;
            vals[i] -= lr * mhat / (std::sqrt(vhat) + kAdamEps);
        }
    }
}

// ---------------------------------------------------------------------------
// schedules
// ---------------------------------------------------------------------------

// Reduce lr by `factor` after `patience` consecutive epochs without a strict
// improvement (> best + threshold); the stall counter resets on reduction.
struct PlateauState {
    double best = -std::numeric_limits<double>::infinity();
    int stalled = 0;
};

inline double lr_on_plateau_step(PlateauState& st, double val, double lr, int patience,
                                 double factor, double threshold) {
    if (val > st.best + threshold) {
        st.best = val;
        st.stalled = 0;
        return lr;
    }
    if (++st.stalled >= patience) {
        st.stalled = 0;
        return lr * factor;
    }
    return lr;
}

// The lr trajectory is a pure function of the validation history.
inline std::vector<double> lr_schedule_from_history(const std::vector<double>& val_history,
                                                    double lr0, int patience, double factor,
                                                    double threshold) {
    PlateauState st;
    std::vector<double> lrs;
    double lr = lr0;
    for (double v : val_history) {
        lrs.push_back(lr);  // lr in effect while producing this epoch's value
        lr = lr_on_plateau_step(st, v, lr, patience, factor, threshold);
    }
    return lrs;
}

struct EarlyStopState {
    double best = -std::numeric_limits<double>::infinity();
    int stalled = 0;
};

inline bool early_stop_step(EarlyStopState& st, double val, int patience, double threshold) {
    if (val > st.best + threshold) {
        st.best = val;
        st.stalled = 0;
        return false;
    }
    return ++st.stalled >= patience;
}

// ---------------------------------------------------------------------------
// checkpoints: text manifest (format version, config, trainer state, tensor
// directory with name/shape/offset/checksum) followed by a flat little-endian
// float64 blob.
// ---------------------------------------------------------------------------

inline constexpr const char* kCkptMagic = "TMCCKPT";
inline constexpr int kCkptVersion = 1;

inline uint64_t fnv1a64(const void* data, size_t bytes) {
    const auto* p = static_cast<const unsigned char*>(data);
    uint64_t h = 1469598103934665603ull;
    for (size_t i = 0; i < bytes; ++i) {
        h ^= p[i];
        h *= 1099511628211ull;
    }
    return h;
}

struct TrainerState {
    AdamState adam;
    std::string shuffle_rng, augment_rng;  // serialized mt19937_64 states
    int epoch = 0;
    double best_val_dice = -1.0;
};

namespace detail {

struct TensorRecord {
    std::string name;
    Shape shape;
    const std::vector<double>* data;
};

inline void write_ckpt(const std::string& path, const RunConfig& cfg,
                       const std::vector<TensorRecord>& tensors, const TrainerState& st) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("I/O error: cannot write checkpoint " + path);
    os << kCkptMagic << " v" << kCkptVersion << "\n";
    os << "config-begin\n" << config_to_string(cfg) << "config-end\n";
    char num[40];
    std::snprintf(num, sizeof num, "%.17g", st.best_val_dice);
    os << "epoch " << st.epoch << "\nbest_val_dice " << num << "\nadam_t " << st.adam.t << "\n";
    os << "rng_shuffle " << st.shuffle_rng << "\n";
    os << "rng_augment " << st.augment_rng << "\n";
    os << "tensors " << tensors.size() << "\n";
    uint64_t offset = 0;
    for (const auto& t : tensors) {
        os << t.name << " |";
        for (int d : t.shape) os << ' ' << d;
        uint64_t checksum = fnv1a64(t.data->data(), t.data->size() * sizeof(double));
        os << " | " << offset << " " << std::hex << checksum << std::dec << "\n";
        offset += t.data->size() * sizeof(double);
    }
    os << "blob\n";
    for (const auto& t : tensors)
        os.write(reinterpret_cast<const char*>(t.data->data()),
                 static_cast<std::streamsize>(t.data->size() * sizeof(double)));
    if (!os) throw std::runtime_error("I/O error: short checkpoint write " + path);
}

}  // namespace detail

inline void save_checkpoint(const std::string& path, const TmcNetwork& net, const RunConfig& cfg,
                            const TrainerState& st) {
    std::vector<detail::TensorRecord> recs;
    const ParamStore& store = net.params();
    for (size_t i = 0; i < store.size(); ++i)
        recs.push_back({store.name(i), store.param(i).shape(), &store.param(i).values()});
    for (size_t i = 0; i < store.size(); ++i)
        recs.push_back({"adam.m." + store.name(i), store.param(i).shape(), &st.adam.m[i]});
    for (size_t i = 0; i < store.size(); ++i)
        recs.push_back({"adam.v." + store.name(i), store.param(i).shape(), &st.adam.v[i]});
    detail::write_ckpt(path, cfg, recs, st);
}

struct LoadedCheckpoint {
    RunConfig cfg;
    std::unique_ptr<TmcNetwork> net;
    TrainerState state;
};

inline LoadedCheckpoint load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("I/O error: cannot read checkpoint " + path);
    std::string line;
    std::getline(is, line);
    {
        std::istringstream hs(line);
        std::string magic, ver;
        hs >> magic >> ver;
        if (magic != kCkptMagic)
            throw std::runtime_error("checkpoint error: bad magic in " + path);
        if (ver != "v" + std::to_string(kCkptVersion))
            throw std::runtime_error("checkpoint error: unknown format version '" + ver + "'");
    }
    std::getline(is, line);
    if (line != "config-begin") throw std::runtime_error("checkpoint error: missing config block");
    LoadedCheckpoint out;
    while (std::getline(is, line) && line != "config-end") {
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error("checkpoint error: malformed config line '" + line + "'");
        apply_config_entry(out.cfg, line.substr(0, eq), line.substr(eq + 1));
    }

    auto expect_kv = [&](const char* key) {
        std::getline(is, line);
        std::istringstream ls(line);
        std::string k;
        ls >> k;
        if (k != key)
            throw std::runtime_error(std::string("checkpoint error: expected '") + key + "', got '" +
                                     line + "'");
        std::string rest;
        std::getline(ls, rest);
        return detail::trim(rest);
    };
    out.state.epoch = std::stoi(expect_kv("epoch"));
    out.state.best_val_dice = std::stod(expect_kv("best_val_dice"));
    int64_t adam_t = std::stoll(expect_kv("adam_t"));
    out.state.shuffle_rng = expect_kv("rng_shuffle");
    out.state.augment_rng = expect_kv("rng_augment");
    size_t n_tensors = static_cast<size_t>(std::stoull(expect_kv("tensors")));

    struct Rec {
        std::string name;
        Shape shape;
        uint64_t offset;
        uint64_t checksum;
    };
    std::vector<Rec> recs;
    recs.reserve(n_tensors);
    for (size_t i = 0; i < n_tensors; ++i) {
        std::getline(is, line);
        std::istringstream ls(line);
        Rec r;
        std::string tok;
        ls >> r.name >> tok;
        if (tok != "|") throw std::runtime_error("checkpoint error: malformed tensor line " + line);
        while (ls >> tok && tok != "|") r.shape.push_back(std::stoi(tok));
        ls >> r.offset >> std::hex >> r.checksum >> std::dec;
        recs.push_back(std::move(r));
    }
    std::getline(is, line);
    if (line != "blob") throw std::runtime_error("checkpoint error: missing blob marker");
    std::streampos blob_start = is.tellg();

    Vocabulary vocab = Vocabulary::prompt_grammar();
    out.net = std::make_unique<TmcNetwork>(make_model_config(out.cfg, vocab.size()),
                                           out.cfg.seed);
    out.state.adam.init(out.net->params());
    out.state.adam.t = adam_t;

    auto read_into = [&](const Rec& r, std::vector<double>& dst) {
        is.seekg(blob_start + static_cast<std::streamoff>(r.offset));
        is.read(reinterpret_cast<char*>(dst.data()),
                static_cast<std::streamsize>(dst.size() * sizeof(double)));
        if (!is) throw std::runtime_error("checkpoint error: truncated blob at " + r.name);
        if (fnv1a64(dst.data(), dst.size() * sizeof(double)) != r.checksum)
            throw std::runtime_error("checkpoint error: checksum mismatch for " + r.name);
    };

    ParamStore& store = out.net->params();
    size_t found = 0;
    for (const auto& r : recs) {
        std::vector<double>* dst = nullptr;
        std::string base = r.name;
        if (base.rfind("adam.m.", 0) == 0) {
            base = base.substr(7);
            if (!store.has(base))
                throw std::runtime_error("checkpoint error: unknown tensor " + r.name);
            for (size_t i = 0; i < store.size(); ++i)
                if (store.name(i) == base) dst = &out.state.adam.m[i];
        } else if (base.rfind("adam.v.", 0) == 0) {
            base = base.substr(7);
            if (!store.has(base))
                throw std::runtime_error("checkpoint error: unknown tensor " + r.name);
            for (size_t i = 0; i < store.size(); ++i)
                if (store.name(i) == base) dst = &out.state.adam.v[i];
        } else {
            if (!store.has(base))
                throw std::runtime_error("checkpoint error: unknown tensor " + r.name);
            if (store.at(base).shape() != r.shape)
                throw std::runtime_error("checkpoint error: shape mismatch for " + r.name);
            dst = &store.at(base).mutable_values();
            ++found;
        }
        read_into(r, *dst);
    }
    if (found != store.size())
        throw std::runtime_error("checkpoint error: checkpoint holds " + std::to_string(found) +
                                 " of " + std::to_string(store.size()) + " parameters");
    return out;
}

// ---------------------------------------------------------------------------
// training driver
// ---------------------------------------------------------------------------

struct EpochLog {
    int epoch = 0;
    double seg = 0, align = 0, total = 0;
    double val_dice = 0;
    double lr = 0;
};

inline std::string epoch_log_line(const EpochLog& e) {
    char buf[200];
    std::snprintf(buf, sizeof buf, "%d\t%.10g\t%.10g\t%.10g\t%.10g\t%.10g", e.epoch, e.seg,
                  e.align, e.total, e.val_dice, e.lr);
    return buf;
}

struct TrainResult {
    std::vector<EpochLog> log;
    int best_epoch = 0;
    double best_val_dice = -1.0;
    int steps = 0;
};

inline Tensor image_tensor(const Sample& s) {
    return Tensor::from({1, s.h, s.w}, s.image);
}
inline Tensor mask_tensor(const Sample& s) {
    std::vector<double> m(s.mask.size());
    for (size_t i = 0; i < m.size(); ++i) m[i] = s.mask[i] ? 1.0 : 0.0;
    return Tensor::from({1, s.h, s.w}, m);
}

inline double validation_dice(const TmcNetwork& net, const Vocabulary& vocab,
                              const std::vector<const Case*>& val_cases) {
    NoGradGuard ng;
    std::vector<SliceScore> scores;
    std::vector<std::string> ids;
    for (const Case* c : val_cases) {
        ids.push_back(c->case_id);
        for (const auto& s : c->slices) {
            SegOutput out = net.forward(image_tensor(s), tokenize(s.prompt, vocab));
            BinaryMask pred = threshold_mask(out.prob);
            BinaryMask gt{s.h, s.w, s.mask};
            scores.push_back({s.case_id, s.slice_id, dice(pred, gt)});
        }
    }
    return aggregate(scores, ids).mean;
}

// Trains per the configured protocol and writes the best-epoch checkpoint to
// `ckpt_path` (empty: no file). The epoch log goes to `log_out` as TSV.
inline TrainResult train_model(const RunConfig& cfg, const std::vector<Case>& cases,
                               const std::map<std::string, Split>& splits,
                               std::ostream* log_out = nullptr,
                               const std::string& ckpt_path = "", int max_steps = 0) {
    cfg.validate();
    Vocabulary vocab = Vocabulary::prompt_grammar();
    TmcNetwork net(make_model_config(cfg, vocab.size()), cfg.seed);

    std::vector<const Sample*> train_samples;
    std::vector<const Case*> val_cases;
    for (const auto& c : cases) {
        auto it = splits.find(c.case_id);
        if (it == splits.end())
            throw std::runtime_error("data error: case " + c.case_id + " missing from splits");
        if (it->second == Split::kTrain)
            for (const auto& s : c.slices) train_samples.push_back(&s);
        else if (it->second == Split::kVal)
            val_cases.push_back(&c);
    }
    if (train_samples.empty()) throw std::runtime_error("data error: empty train split");

    AdamState adam;
    adam.init(net.params());
    std::mt19937_64 shuffle_rng(derive_seed(cfg.seed, 0x5u));
    std::mt19937_64 augment_rng(derive_seed(cfg.seed, 0x6u));

    double lr = cfg.lr;
    PlateauState plateau;
    EarlyStopState stopper;
    TrainResult result;
    if (log_out) *log_out << "epoch\tseg\talign\ttotal\tval_dice\tlr\n";

    // best-epoch snapshot
    std::vector<std::vector<double>> best_params;
    AdamState best_adam;
    TrainerState best_state;
    auto snapshot = [&](int epoch, double val) {
        best_params.clear();
        for (size_t i = 0; i < net.params().size(); ++i)
            best_params.push_back(net.params().param(i).values());
        best_adam = adam;
        std::ostringstream s1, s2;
        s1 << shuffle_rng;
        s2 << augment_rng;
        best_state.shuffle_rng = s1.str();
        best_state.augment_rng = s2.str();
        best_state.epoch = epoch;
        best_state.best_val_dice = val;
    };

    int steps = 0;
    bool stop = false;
    for (int epoch = 1; epoch <= cfg.max_epochs && !stop; ++epoch) {
        std::vector<size_t> order(train_samples.size());
        for (size_t i = 0; i < order.size(); ++i) order[i] = i;
        std::shuffle(order.begin(), order.end(), shuffle_rng);

        double seg_sum = 0, align_sum = 0, total_sum = 0;
        size_t seen = 0;
        for (size_t b = 0; b < order.size() && !(max_steps > 0 && steps >= max_steps);
             b += static_cast<size_t>(cfg.batch_size)) {
            size_t e = std::min(order.size(), b + static_cast<size_t>(cfg.batch_size));
            Tensor seg_acc, align_acc;
            int nb = 0;
            for (size_t k = b; k < e; ++k) {
                Sample aug = augment(*train_samples[order[k]], augment_rng);
                SegOutput out = net.forward(image_tensor(aug), tokenize(aug.prompt, vocab));
                Tensor seg_i = bce_loss(out.prob, mask_tensor(aug));
                seg_acc = nb == 0 ? seg_i : add(seg_acc, seg_i);
                if (cfg.align_on) {
                    Tensor al = ma_loss_total(out.align_losses);
                    align_acc = nb == 0 ? al : add(align_acc, al);
                }
                ++nb;
            }
            Tensor seg = scale(seg_acc, 1.0 / nb);
            Tensor align = cfg.align_on ? scale(align_acc, 1.0 / nb) : Tensor::scalar(0.0);
            LossBundle bundle = total_loss(seg, align, cfg.lambda);
            bundle.total.backward();
            adam_step(net.params(), adam, lr, cfg.freeze_text);
            ++steps;
            seg_sum += bundle.seg.item() * nb;
            align_sum += bundle.align.item() * nb;
            total_sum += bundle.total.item() * nb;
            seen += static_cast<size_t>(nb);
        }
        result.steps = steps;
        if (seen == 0) break;

        double val = val_cases.empty() ? 0.0 : validation_dice(net, vocab, val_cases);
        EpochLog el{epoch, seg_sum / seen, align_sum / seen, total_sum / seen, val, lr};
        result.log.push_back(el);
        if (log_out) *log_out << epoch_log_line(el) << "\n";

        if (val > result.best_val_dice + cfg.improvement_threshold || result.best_epoch == 0) {
            result.best_val_dice = val;
            result.best_epoch = epoch;
            snapshot(epoch, val);
        }
        lr = lr_on_plateau_step(plateau, val, lr, cfg.plateau_patience, cfg.plateau_factor,
                                cfg.improvement_threshold);
        stop = early_stop_step(stopper, val, cfg.early_stop_patience, cfg.improvement_threshold) ||
               (max_steps > 0 && steps >= max_steps);
    }

    // restore the best-epoch parameters
    if (!best_params.empty()) {
        for (size_t i = 0; i < net.params().size(); ++i)
            net.params().param(i).mutable_values() = best_params[i];
        best_state.adam = best_adam;
    }
    if (!ckpt_path.empty()) {
        if (best_params.empty()) {
            std::ostringstream s1, s2;
            s1 << shuffle_rng;
            s2 << augment_rng;
            best_state.shuffle_rng = s1.str();
            best_state.augment_rng = s2.str();
            best_state.adam = adam;
        }
        save_checkpoint(ckpt_path, net, cfg, best_state);
    }
    return result;
}

// ---------------------------------------------------------------------------
// evaluation driver
// ---------------------------------------------------------------------------

struct EvalOptions {
    bool dump_masks = false;
    bool dump_probs = false;
    bool dump_attn = false;
    std::string dump_dir;
};

struct EvalResult {
    std::vector<std::string> case_ids;            // cases of the split, dataset order
    std::vector<std::string> ambiguous_case_ids;  // subset with subset-naming prompts
    std::vector<SliceScore> slice_dice, slice_miou;
    AggregateResult case_dice, case_miou;
    AggregateResult ambiguous_dice;
};

inline EvalResult evaluate_model(const TmcNetwork& net, const std::vector<Case>& cases,
                                 const std::map<std::string, Split>& splits, Split which,
                                 const EvalOptions& opts = {}) {
    NoGradGuard ng;
    Vocabulary vocab = Vocabulary::prompt_grammar();
    EvalResult r;
    namespace fs = std::filesystem;
    if ((opts.dump_masks || opts.dump_probs || opts.dump_attn) && !opts.dump_dir.empty())
        fs::create_directories(opts.dump_dir);
    for (const auto& c : cases) {
        auto it = splits.find(c.case_id);
        if (it == splits.end() || it->second != which) continue;
        r.case_ids.push_back(c.case_id);
        if (is_ambiguous_case(c)) r.ambiguous_case_ids.push_back(c.case_id);
        for (const auto& s : c.slices) {
            SegOutput out = net.forward(image_tensor(s), tokenize(s.prompt, vocab));
            BinaryMask pred = threshold_mask(out.prob);
            BinaryMask gt{s.h, s.w, s.mask};
            r.slice_dice.push_back({s.case_id, s.slice_id, dice(pred, gt)});
            r.slice_miou.push_back({s.case_id, s.slice_id, miou(pred, gt)});
            if (!opts.dump_dir.empty()) {
                std::string base = s.case_id + "_s" + std::to_string(s.slice_id);
                if (opts.dump_masks) {
                    std::vector<uint8_t> gray(pred.data.size());
                    for (size_t i = 0; i < gray.size(); ++i) gray[i] = pred.data[i] ? 255 : 0;
                    write_pgm((fs::path(opts.dump_dir) / (base + "_pred.pgm")).string(), pred.h,
                              pred.w, gray);
                }
                if (opts.dump_probs) {
                    std::ofstream os(fs::path(opts.dump_dir) / (base + "_prob.txt"));
                    dump_tensor(os, out.prob);
                }
                if (opts.dump_attn) {
                    for (const auto& [stage, cache] : out.stages)
                        if (cache.has_attn) {
                            std::ofstream os(fs::path(opts.dump_dir) /
                                             (base + "_attn_s" + std::to_string(stage) + ".txt"));
                            dump_tensor(os, cache.attn_vl);
                        }
                }
            }
        }
    }
    r.case_dice = aggregate(r.slice_dice, r.case_ids);
    r.case_miou = aggregate(r.slice_miou, r.case_ids);
    r.ambiguous_dice = aggregate(
        [&] {
            std::vector<SliceScore> amb;
            for (const auto& s : r.slice_dice)
                for (const auto& id : r.ambiguous_case_ids)
                    if (s.case_id == id) amb.push_back(s);
            return amb;
        }(),
        r.ambiguous_case_ids);
    return r;
}

// Per-seed rows plus mean/std rows across seeds, in the line format.
struct SeedEval {
    uint64_t seed = 0;
    EvalResult result;
};

inline void write_metrics_report(std::ostream& os, const std::string& split,
                                 const std::vector<SeedEval>& evals, bool per_slice = true) {
    for (const auto& se : evals) {
        int seed = static_cast<int>(se.seed);
        if (per_slice)
            for (const auto& s : se.result.slice_dice)
                write_metric_row(os, {split, seed, s.case_id, s.slice_id, "dice", s.value});
        if (per_slice)
            for (const auto& s : se.result.slice_miou)
                write_metric_row(os, {split, seed, s.case_id, s.slice_id, "miou", s.value});
        for (const auto& c : se.result.case_dice.per_case)
            write_metric_row(os, {split, seed, c.case_id, -1, "case_dice", c.value});
        for (const auto& c : se.result.case_miou.per_case)
            write_metric_row(os, {split, seed, c.case_id, -1, "case_miou", c.value});
        write_metric_row(os, {split, seed, "__aggregate__", -1, "dice", se.result.case_dice.mean});
        write_metric_row(os, {split, seed, "__aggregate__", -1, "miou", se.result.case_miou.mean});
        if (!se.result.ambiguous_case_ids.empty())
            write_metric_row(os, {split, seed, "__aggregate_ambiguous__", -1, "dice",
                                  se.result.ambiguous_dice.mean});
    }
    std::vector<double> dices, mious;
    for (const auto& se : evals) {
        dices.push_back(se.result.case_dice.mean);
        mious.push_back(se.result.case_miou.mean);
    }
    if (evals.size() > 1) {
        write_metric_row(os, {split, -1, "__mean__", -1, "dice", mean_of(dices)});
        write_metric_row(os, {split, -1, "__std__", -1, "dice", sample_std(dices)});
        write_metric_row(os, {split, -1, "__mean__", -1, "miou", mean_of(mious)});
        write_metric_row(os, {split, -1, "__std__", -1, "miou", sample_std(mious)});
    }
}

// ---------------------------------------------------------------------------
// ablation runner: {MCM on/off} x {align on/off} x seeds
// ---------------------------------------------------------------------------

struct AblationCell {
    bool mcm = false, align = false;
    std::vector<double> dice_per_seed, miou_per_seed;
    std::map<std::string, std::vector<double>> case_dice;  // case -> per-seed values
    bool failed = false;
    std::string error;

    std::string label() const {
        return std::string(mcm ? "mcm=on" : "mcm=off") + "," + (align ? "align=on" : "align=off");
    }
};

struct AblationReport {
    std::vector<AblationCell> cells;  // (off,off), (on,off), (off,on), (on,on)
    std::vector<uint64_t> seeds;
};

inline AblationReport run_ablation(const RunConfig& base, const std::vector<Case>& cases,
                                   const std::map<std::string, Split>& splits,
                                   std::ostream* progress = nullptr) {
    AblationReport rep;
    rep.seeds = parse_seed_list(base.seeds);
    const bool grid[4][2] = {{false, false}, {true, false}, {false, true}, {true, true}};
    for (const auto& cell_flags : grid) {
        AblationCell cell;
        cell.mcm = cell_flags[0];
        cell.align = cell_flags[1];
        for (uint64_t seed : rep.seeds) {
            RunConfig cfg = base;
            cfg.mcm_on = cell.mcm;
            cfg.align_on = cell.align;
            cfg.seed = seed;
            try {
                if (progress)
                    *progress << "[ablate] " << cell.label() << " seed=" << seed << "..."
                              << std::flush;
                std::ostringstream devnull;
                std::string tmp_ckpt =
                    (std::filesystem::path(base.out_dir) /
                     ("ablate_" + cell.label() + "_" + std::to_string(seed) + ".ckpt"))
                        .string();
                std::filesystem::create_directories(base.out_dir);
                TrainResult tr = train_model(cfg, cases, splits, &devnull, tmp_ckpt);
                LoadedCheckpoint lc = load_checkpoint(tmp_ckpt);
                EvalResult er = evaluate_model(*lc.net, cases, splits, Split::kTest);
                cell.dice_per_seed.push_back(er.case_dice.mean);
                cell.miou_per_seed.push_back(er.case_miou.mean);
                for (const auto& cs : er.case_dice.per_case)
                    cell.case_dice[cs.case_id].push_back(cs.value);
                if (progress)
                    *progress << " dice=" << er.case_dice.mean << " (epochs=" << tr.log.size()
                              << ")\n";
            } catch (const std::exception& ex) {
                cell.failed = true;
                cell.error = ex.what();
                if (progress) *progress << " FAILED: " << ex.what() << "\n";
            }
        }
        rep.cells.push_back(std::move(cell));
    }
    return rep;
}

// Table-2-shaped report with mean +- std per cell and a paired t-test of each
// cell against the (off,off) baseline on seed-averaged per-case Dice.
inline void write_ablation_report(std::ostream& os, const AblationReport& rep) {
    os << "# ablation grid: cells x " << rep.seeds.size() << " seeds\n";
    os << "mcm\talign\tdice_mean\tdice_std\tmiou_mean\tmiou_std\truns\tstatus\n";
    const AblationCell* baseline = nullptr;
    for (const auto& c : rep.cells)
        if (!c.mcm && !c.align) baseline = &c;
    for (const auto& c : rep.cells) {
        char buf[160];
        if (c.failed && c.dice_per_seed.empty()) {
            std::snprintf(buf, sizeof buf, "%s\t%s\t-\t-\t-\t-\t0\tFAILED(%s)",
                          c.mcm ? "on" : "off", c.align ? "on" : "off", c.error.c_str());
        } else {
            std::snprintf(buf, sizeof buf, "%s\t%s\t%.6f\t%.6f\t%.6f\t%.6f\t%zu\t%s",
                          c.mcm ? "on" : "off", c.align ? "on" : "off",
                          mean_of(c.dice_per_seed), sample_std(c.dice_per_seed),
                          mean_of(c.miou_per_seed), sample_std(c.miou_per_seed),
                          c.dice_per_seed.size(), c.failed ? "PARTIAL" : "ok");
        }
        os << buf << "\n";
    }
    if (baseline && !baseline->case_dice.empty()) {
        for (const auto& c : rep.cells) {
            if (&c == baseline || c.case_dice.empty()) continue;
            std::vector<double> a, b;
            for (const auto& [case_id, vals] : c.case_dice) {
                auto it = baseline->case_dice.find(case_id);
                if (it == baseline->case_dice.end()) continue;
                a.push_back(mean_of(vals));
                b.push_back(mean_of(it->second));
            }
            try {
                TTestResult t = paired_t_test(a, b);
                char buf[160];
                std::snprintf(buf, sizeof buf,
                              "# t-test %s vs baseline: t=%.4f p=%.4f dof=%d\n", c.label().c_str(),
                              t.t, t.p, t.dof);
                os << buf;
            } catch (const std::exception& ex) {
                os << "# t-test " << c.label() << " vs baseline: " << ex.what() << "\n";
            }
        }
    }
}

}  // namespace tmc
