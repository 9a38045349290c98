#pragma once

// Segmentation objective, joint loss bundle, Dice/mIoU, and the slice ->
// case -> aggregate reduction used by the evaluation protocol.

#include <cstdio>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "tmc/tensor.hpp"

namespace tmc {

// ---------------------------------------------------------------------------
// losses (graph ops)
// ---------------------------------------------------------------------------

// Pixel-wise binary cross-entropy; probabilities are clamped to
// [kProbEps, 1-kProbEps] before the logs.
inline Tensor bce_loss(const Tensor& prob, const Tensor& mask) {
    if (prob.shape() != mask.shape())
        throw std::invalid_argument("shape error: bce_loss prob " + shape_str(prob.shape()) +
                                    " vs mask " + shape_str(mask.shape()));
    for (double v : mask.values())
        if (v != 0.0 && v != 1.0)
            throw std::invalid_argument("bce_loss: mask must be binary, found " +
                                        std::to_string(v));
    Tensor p = clamp(prob, kProbEps, 1.0 - kProbEps);
    Tensor one_minus_p = add_scalar(scale(p, -1.0), 1.0);
    Tensor one_minus_y = add_scalar(scale(mask, -1.0), 1.0);
    Tensor ll = add(mul(mask, log(p)), mul(one_minus_y, log(one_minus_p)));
    return scale(mean_all(ll), -1.0);
}

struct LossBundle {
    Tensor seg;
    Tensor align;
    double lambda = 0.0;
    Tensor total;  // seg + lambda * align, one fused expression
};

inline LossBundle total_loss(const Tensor& seg, const Tensor& align, double lambda) {
    if (lambda < 0.0)
        throw std::invalid_argument("config error: negative lambda " + std::to_string(lambda));
    LossBundle b;
    b.seg = seg;
    b.align = align;
    b.lambda = lambda;
    b.total = add(seg, scale(align, lambda));
    return b;
}

// ---------------------------------------------------------------------------
// binary-mask metrics
// ---------------------------------------------------------------------------

struct BinaryMask {
    int h = 0, w = 0;
    std::vector<uint8_t> data;  // row-major, values 0/1

    size_t size() const { return data.size(); }
};

inline BinaryMask threshold_mask(const Tensor& prob, double thresh = 0.5) {
    if (prob.shape().size() != 3 || prob.dim(0) != 1)
        throw std::invalid_argument("shape error: threshold_mask expects [1xHxW], got " +
                                    shape_str(prob.shape()));
    BinaryMask m;
    m.h = prob.dim(1);
    m.w = prob.dim(2);
    m.data.resize(prob.values().size());
    for (size_t i = 0; i < m.data.size(); ++i) m.data[i] = prob.values()[i] > thresh ? 1 : 0;
    return m;
}

namespace detail {
inline void check_same_mask(const char* op, const BinaryMask& a, const BinaryMask& b) {
    if (a.h != b.h || a.w != b.w)
        throw std::invalid_argument(std::string("shape error: ") + op + " on " +
                                    std::to_string(a.h) + "x" + std::to_string(a.w) + " vs " +
                                    std::to_string(b.h) + "x" + std::to_string(b.w));
}
}  // namespace detail

// 2|P n G| / (|P| + |G|); both masks empty counts as a perfect 1.0.
inline double dice(const BinaryMask& pred, const BinaryMask& gt) {
    detail::check_same_mask("dice", pred, gt);
    int64_t inter = 0, sp = 0, sg = 0;
    for (size_t i = 0; i < pred.data.size(); ++i) {
        sp += pred.data[i] != 0;
        sg += gt.data[i] != 0;
        inter += (pred.data[i] != 0) && (gt.data[i] != 0);
    }
    if (sp + sg == 0) return 1.0;
    return 2.0 * static_cast<double>(inter) / static_cast<double>(sp + sg);
}

// Mean of foreground and background IoU; an empty class (empty union) scores 1.
inline double miou(const BinaryMask& pred, const BinaryMask& gt) {
    detail::check_same_mask("miou", pred, gt);
    int64_t inter_fg = 0, union_fg = 0, inter_bg = 0, union_bg = 0;
    for (size_t i = 0; i < pred.data.size(); ++i) {
        bool p = pred.data[i] != 0, g = gt.data[i] != 0;
        inter_fg += p && g;
        union_fg += p || g;
        inter_bg += !p && !g;
        union_bg += !p || !g;
    }
    double fg = union_fg == 0 ? 1.0 : static_cast<double>(inter_fg) / union_fg;
    double bg = union_bg == 0 ? 1.0 : static_cast<double>(inter_bg) / union_bg;
    return 0.5 * (fg + bg);
}

// ---------------------------------------------------------------------------
// slice -> case -> aggregate reduction
// ---------------------------------------------------------------------------

struct SliceScore {
    std::string case_id;
    int slice_id = 0;
    double value = 0.0;
};

struct CaseScore {
    std::string case_id;
    double value = 0.0;
    int slices = 0;
};

struct AggregateResult {
    std::vector<CaseScore> per_case;  // in the order of the known-case list
    double mean = 0.0;                // mean over cases (case-weighted)
};

inline AggregateResult aggregate(const std::vector<SliceScore>& slices,
                                 const std::vector<std::string>& known_cases) {
    std::map<std::string, std::pair<double, int>> acc;
    for (const auto& c : known_cases) acc.emplace(c, std::make_pair(0.0, 0));
    for (const auto& s : slices) {
        auto it = acc.find(s.case_id);
        if (it == acc.end())
            throw std::invalid_argument("data error: unknown case id '" + s.case_id + "'");
        it->second.first += s.value;
        it->second.second += 1;
    }
    AggregateResult r;
    double sum = 0.0;
    for (const auto& c : known_cases) {
        const auto& [total, count] = acc.at(c);
        if (count == 0) continue;
        CaseScore cs{c, total / count, count};
        sum += cs.value;
        r.per_case.push_back(std::move(cs));
    }
    if (!r.per_case.empty()) r.mean = sum / static_cast<double>(r.per_case.size());
    return r;
}

// ---------------------------------------------------------------------------
// line-delimited metric records
// ---------------------------------------------------------------------------

struct MetricRow {
    std::string split;
    int seed = 0;
    std::string case_id;  // "__aggregate__" etc. for summary rows
    int slice_id = -1;    // -1: no slice field emitted
    std::string metric;
    double value = 0.0;
};

inline void write_metric_row(std::ostream& os, const MetricRow& r) {
    char num[40];
    std::snprintf(num, sizeof num, "%.10g", r.value);
    os << "{\"split\":\"" << r.split << "\",\"seed\":" << r.seed << ",\"case_id\":\"" << r.case_id
       << "\"";
    if (r.slice_id >= 0) os << ",\"slice_id\":" << r.slice_id;
    os << ",\"metric\":\"" << r.metric << "\",\"value\":" << num << "}\n";
}

}  // namespace tmc
