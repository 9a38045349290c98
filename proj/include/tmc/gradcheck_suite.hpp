#pragma once

// The op-level finite-difference suite: every differentiable op is registered
// here with a randomized scalar-valued harness, plus the end-to-end check of
// the tiny full model.

#include <functional>
#include <iomanip>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "tmc/config.hpp"
#include "tmc/fusion.hpp"
#include "tmc/gradcheck.hpp"
#include "tmc/metrics.hpp"
#include "tmc/nn.hpp"
#include "tmc/segnet.hpp"
#include "tmc/spatial.hpp"
#include "tmc/tensor.hpp"
#include "tmc/text.hpp"

namespace tmc {

inline Tensor rand_tensor(std::mt19937_64& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    std::vector<double> data(static_cast<size_t>(shape_numel(shape)));
    for (auto& v : data) v = u(rng);
    return Tensor::from(std::move(shape), std::move(data));
}

// Inputs pushed away from zero so relu's kink cannot sit under the stencil.
inline Tensor rand_tensor_away_from_zero(std::mt19937_64& rng, Shape shape, double margin = 0.2) {
    Tensor t = rand_tensor(rng, std::move(shape));
    auto& v = t.mutable_values();
    for (auto& x : v) x += x >= 0.0 ? margin : -margin;
    return t;
}

struct OpCheckCase {
    std::string name;
    std::function<GradCheckReport(uint64_t seed)> run;
};

inline const std::vector<OpCheckCase>& registered_op_checks() {
    static const std::vector<OpCheckCase> cases = [] {
        std::vector<OpCheckCase> v;
        auto scalarize = [](const Tensor& out, const Tensor& w) { return sum_all(mul(out, w)); };

        v.push_back({"add", [=](uint64_t s) {
                         std::mt19937_64 rng(s);
                         Tensor a = rand_tensor(rng, {3, 4}), b = rand_tensor(rng, {3, 4});
                         Tensor w = rand_tensor(rng, {3, 4});
                         return grad_check([=] { return scalarize(add(a, b), w); }, {a, b});
                     }});
        v.push_back({"add_scalar_broadcast", [=](uint64_t s) {
                         std::mt19937_64 rng(s);
                         Tensor a = rand_tensor(rng, {3, 4}), b = rand_tensor(rng, {1, 1});
                         Tensor w = rand_tensor(rng, {3, 4});
                         return grad_check([=] { return scalarize(add(a, b), w); }, {a, b});
                     }});
        v.push_back({"sub", [=](uint64_t s) {
                         std::mt19937_64 rng(s);
                         Tensor a = rand_tensor(rng, {2, 5}), b = rand_tensor(rng, {2, 5});
                         Tensor w = rand_tensor(rng, {2, 5});
                         return grad_check([=] { return scalarize(sub(a, b), w); }, {a, b});
                     }});
        v.push_back({"mul", [=](uint64_t s) {
                         std::mt19937_64 rng(s);
                         Tensor a = rand_tensor(rng, {3, 3}), b = rand_tensor(rng, {3, 3});
                         Tensor w = rand_tensor(rng, {3, 3});
                         return grad_check([=] { return scalarize(mul(a, b), w); }, {a, b});
                     }});
        v.push_back({"mul_scalar_broadcast", [=](uint64_t s) {
                         std::mt19937_64 rng(s);
                         Tensor a = rand_tensor(rng, {1, 1}), b = rand_tensor(rng, {4, 2});
                         Tensor w = rand_tensor(rng, {4, 2});
                         return grad_check([=] { return scalarize(mul(a, b), w); }, {a, b});
                     }});
        v.push_back({"scale", [=](uint64_t s) {
                         std::mt19937_64 rng(s);
                         Tensor a = rand_tensor(rng, {3, 4});
                         Tensor w = rand_tensor(rng, {3, 4});
                         return grad_check([=] { return scalarize(scale(a, -1.7), w); }, {a});
                     }});
        v.push_back({"add_scalar", [=](uint64_t s) {
                         std::mt19937_64 rng(s);
                         Tensor a = rand_tensor(rng, {3, 4});
                         Tensor w = rand_tensor(rng, {3, 4});
                         return grad_check([=] { return scalarize(add_scalar(a, 0.37), w); }, {a});
                     }});
        v.push_back({"sigmoid", [=](uint64_t s) {
                         std::mt19937_64 rng(s);
                         Tensor a = rand_tensor(rng, {3, 4}, -3.0, 3.0);
                         Tensor w = rand_tensor(rng, {3, 4});
                         return grad_check([=] { return scalarize(sigmoid(a), w); }, {a});
                     }});
        v.push_back({"relu", [=](uint64_t s) {
                         std::mt19937_64 rng(s);
                         Tensor a = rand_tensor_away_from_zero(rng, {3, 4});
                         Tensor w = rand_tensor(rng, {3, 4});
                         return grad_check([=] { return scalarize(relu(a), w); }, {a});
                     }});
        v.push_back({"log", [=](uint64_t s) {
                         std::mt19937_64 rng(s);
                         Tensor a = rand_tensor(rng, {3, 4}, 0.5, 2.0);
                         Tensor w = rand_tensor(rng, {3, 4});
                         return grad_check([=] { return scalarize(log(a), w); }, {a});
                     }});
        v.push_back({"exp", [=](uint64_t s) {
                         std::mt19937_64 rng(s);
                         Tensor a = rand_tensor(rng, {3, 4}, -2.0, 2.0);
                         Tensor w = rand_tensor(rng, {3, 4});
                         return grad_check([=] { return scalarize(exp(a), w); }, {a});
                     }});
        v.push_back({"clamp", [=](uint64_t s) {
                         std::mt19937_64 rng(s);
                         Tensor a = rand_tensor(rng, {4, 4}, -2.0, 2.0);
                         Tensor w = rand_tensor(rng, {4, 4});
                         return grad_check([=] { return scalarize(clamp(a, -0.8, 0.8), w); }, {a});
                     }});
        v.push_back({"matmul", [=](uint64_t s) {
                         std::mt19937_64 rng(s);
                         Tensor a = rand_tensor(rng, {3, 4}), b = rand_tensor(rng, {4, 2});
                         Tensor w = rand_tensor(rng, {3, 2});
                         return grad_check([=] { return scalarize(matmul(a, b), w); }, {a, b});
                     }});
        v.push_back({"transpose2d", [=](uint64_t s) {
                         std::mt19937_64 rng(s);
                         Tensor a = rand_tensor(rng, {3, 5});
                         Tensor w = rand_tensor(rng, {5, 3});
                         return grad_check([=] { return scalarize(transpose2d(a), w); }, {a});
                     }});
        v.push_back({"add_rowvec", [=](uint64_t s) {
                         std::mt19937_64 rng(s);
                         Tensor a = rand_tensor(rng, {4, 3}), b = rand_tensor(rng, {1, 3});
                         Tensor w = rand_tensor(rng, {4, 3});
                         return grad_check([=] { return scalarize(add_rowvec(a, b), w); }, {a, b});
                     }});
        v.push_back({"layer_norm_rows", [=](uint64_t s) {
                         std::mt19937_64 rng(s);
                         Tensor x = rand_tensor(rng, {4, 6});
                         Tensor g = rand_tensor(rng, {1, 6}, 0.5, 1.5);
                         Tensor b = rand_tensor(rng, {1, 6});
                         Tensor w = rand_tensor(rng, {4, 6});
                         return grad_check([=] { return scalarize(layer_norm_rows(x, g, b), w); },
                                           {x, g, b});
                     }});
        v.push_back({"softmax_rows", [=](uint64_t s) {
                         std::mt19937_64 rng(s);
                         Tensor a = rand_tensor(rng, {3, 5}, -2.0, 2.0);
                         Tensor w = rand_tensor(rng, {3, 5});
                         return grad_check([=] { return scalarize(softmax_rows(a), w); }, {a});
                     }});
        v.push_back({"softmax_rows_masked", [=](uint64_t s) {
                         std::mt19937_64 rng(s);
                         Tensor a = rand_tensor(rng, {3, 6}, -2.0, 2.0);
                         Tensor w = rand_tensor(rng, {3, 6});
                         KeyMask m{1, 1, 0, 1, 0, 1};
                         return grad_check([=] { return scalarize(softmax_rows_masked(a, m), w); },
                                           {a});
                     }});
        v.push_back({"conv2d", [=](uint64_t s) {
                         std::mt19937_64 rng(s);
                         Tensor x = rand_tensor(rng, {2, 8, 8});
                         Tensor k = rand_tensor(rng, {3, 2, 3, 3});
                         Tensor b = rand_tensor(rng, {3});
                         Tensor w = rand_tensor(rng, {3, 8, 8});
                         return grad_check([=] { return scalarize(conv2d(x, k, b, 1, 1), w); },
                                           {x, k, b});
                     }});
        v.push_back({"conv2d_strided", [=](uint64_t s) {
                         std::mt19937_64 rng(s);
                         Tensor x = rand_tensor(rng, {2, 6, 6});
                         Tensor k = rand_tensor(rng, {4, 2, 4, 4});
                         Tensor b = rand_tensor(rng, {4});
                         Tensor w = rand_tensor(rng, {4, 3, 3});
                         return grad_check([=] { return scalarize(conv2d(x, k, b, 2, 1), w); },
                                           {x, k, b});
                     }});
        v.push_back({"upsample2x", [=](uint64_t s) {
                         std::mt19937_64 rng(s);
                         Tensor x = rand_tensor(rng, {2, 3, 3});
                         Tensor w = rand_tensor(rng, {2, 6, 6});
                         return grad_check([=] { return scalarize(upsample2x(x), w); }, {x});
                     }});
        v.push_back({"concat_channels", [=](uint64_t s) {
                         std::mt19937_64 rng(s);
                         Tensor a = rand_tensor(rng, {1, 3, 3}), b = rand_tensor(rng, {2, 3, 3});
                         Tensor c = rand_tensor(rng, {1, 3, 3});
                         Tensor w = rand_tensor(rng, {4, 3, 3});
                         return grad_check(
                             [=] { return scalarize(concat_channels({a, b, c}), w); }, {a, b, c});
                     }});
        v.push_back({"concat_cols", [=](uint64_t s) {
                         std::mt19937_64 rng(s);
                         Tensor a = rand_tensor(rng, {3, 2}), b = rand_tensor(rng, {3, 4});
                         Tensor w = rand_tensor(rng, {3, 6});
                         return grad_check([=] { return scalarize(concat_cols({a, b}), w); },
                                           {a, b});
                     }});
        v.push_back({"chw_to_tokens", [=](uint64_t s) {
                         std::mt19937_64 rng(s);
                         Tensor x = rand_tensor(rng, {3, 2, 4});
                         Tensor w = rand_tensor(rng, {8, 3});
                         return grad_check([=] { return scalarize(chw_to_tokens(x), w); }, {x});
                     }});
        v.push_back({"tokens_to_chw", [=](uint64_t s) {
                         std::mt19937_64 rng(s);
                         Tensor x = rand_tensor(rng, {8, 3});
                         Tensor w = rand_tensor(rng, {3, 2, 4});
                         return grad_check([=] { return scalarize(tokens_to_chw(x, 2, 4), w); },
                                           {x});
                     }});
        v.push_back({"merge_tokens_2x2", [=](uint64_t s) {
                         std::mt19937_64 rng(s);
                         Tensor x = rand_tensor(rng, {16, 3});
                         Tensor w = rand_tensor(rng, {4, 12});
                         return grad_check([=] { return scalarize(merge_tokens_2x2(x, 4, 4), w); },
                                           {x});
                     }});
        v.push_back({"extract_patches", [=](uint64_t s) {
                         std::mt19937_64 rng(s);
                         Tensor x = rand_tensor(rng, {2, 4, 4});
                         Tensor w = rand_tensor(rng, {4, 8});
                         return grad_check([=] { return scalarize(extract_patches(x, 2), w); },
                                           {x});
                     }});
        v.push_back({"global_avg_pool", [=](uint64_t s) {
                         std::mt19937_64 rng(s);
                         Tensor x = rand_tensor(rng, {5, 3});
                         Tensor w = rand_tensor(rng, {1, 3});
                         return grad_check([=] { return scalarize(global_avg_pool(x), w); }, {x});
                     }});
        v.push_back({"slice_rows", [=](uint64_t s) {
                         std::mt19937_64 rng(s);
                         Tensor x = rand_tensor(rng, {5, 3});
                         Tensor w = rand_tensor(rng, {2, 3});
                         return grad_check([=] { return scalarize(slice_rows(x, 1, 3), w); }, {x});
                     }});
        v.push_back({"slice_cols", [=](uint64_t s) {
                         std::mt19937_64 rng(s);
                         Tensor x = rand_tensor(rng, {4, 6});
                         Tensor w = rand_tensor(rng, {4, 2});
                         return grad_check([=] { return scalarize(slice_cols(x, 2, 4), w); }, {x});
                     }});
        v.push_back({"sum_all", [=](uint64_t s) {
                         std::mt19937_64 rng(s);
                         Tensor x = rand_tensor(rng, {3, 4});
                         return grad_check([=] { return sum_all(x); }, {x});
                     }});
        v.push_back({"mean_all", [=](uint64_t s) {
                         std::mt19937_64 rng(s);
                         Tensor x = rand_tensor(rng, {3, 4});
                         return grad_check([=] { return mean_all(x); }, {x});
                     }});
        v.push_back({"embed_rows", [=](uint64_t s) {
                         std::mt19937_64 rng(s);
                         Tensor table = rand_tensor(rng, {7, 4});
                         std::vector<int> ids{1, 4, 4, 0, 6};
                         Tensor w = rand_tensor(rng, {5, 4});
                         return grad_check([=] { return scalarize(embed_rows(table, ids), w); },
                                           {table});
                     }});
        v.push_back({"cosine_sim", [=](uint64_t s) {
                         std::mt19937_64 rng(s);
                         Tensor a = rand_tensor_away_from_zero(rng, {1, 6});
                         Tensor b = rand_tensor_away_from_zero(rng, {1, 6});
                         return grad_check([=] { return cosine_sim(a, b); }, {a, b});
                     }});
        v.push_back({"mhca", [=](uint64_t s) {
                         std::mt19937_64 rng(s);
                         ParamStore store;
                         ParamInit init{store, rng};
                         MhcaParams p(init, "m", 4, 2);
                         Tensor q = rand_tensor(rng, {3, 4});
                         Tensor k = rand_tensor(rng, {2, 4});
                         Tensor val = rand_tensor(rng, {2, 4});
                         Tensor w = rand_tensor(rng, {3, 4});
                         std::vector<Tensor> inputs{q,     k,     val,   p.q.w, p.q.b, p.k.w,
                                                    p.k.b, p.v.w, p.v.b, p.o.w, p.o.b};
                         return grad_check(
                             [=] { return sum_all(mul(mhca(q, k, val, p), w)); }, inputs);
                     }});
        v.push_back({"bce_loss", [=](uint64_t s) {
                         std::mt19937_64 rng(s);
                         Tensor logits = rand_tensor(rng, {1, 4, 4}, -2.0, 2.0);
                         std::vector<double> y(16);
                         for (auto& t : y) t = rng() % 2 ? 1.0 : 0.0;
                         Tensor mask = Tensor::from({1, 4, 4}, y);
                         return grad_check([=] { return bce_loss(sigmoid(logits), mask); },
                                           {logits});
                     }});
        v.push_back({"ma_loss_stage", [=](uint64_t s) {
                         std::mt19937_64 rng(s);
                         ParamStore store;
                         ParamInit init{store, rng};
                         AlignmentHead head(init, "a", 6, 4, 5);
                         Tensor vtok = rand_tensor(rng, {5, 6});
                         Tensor cls = rand_tensor(rng, {1, 4});
                         std::vector<Tensor> inputs{vtok,       cls,        head.p_v.w, head.p_v.b,
                                                    head.p_l.w, head.p_l.b, head.log_tau};
                         return grad_check([=] { return ma_loss_stage(vtok, cls, head); }, inputs);
                     }});
        v.push_back({"ma_loss_attract", [=](uint64_t s) {
                         std::mt19937_64 rng(s);
                         ParamStore store;
                         ParamInit init{store, rng};
                         AlignmentHead head(init, "a", 4, 4, 4);
                         Tensor vtok = rand_tensor(rng, {3, 4});
                         Tensor cls = rand_tensor(rng, {1, 4});
                         return grad_check(
                             [=] {
                                 return ma_loss_stage(vtok, cls, head, AlignMode::kAttract);
                             },
                             {vtok, cls, head.p_v.w, head.log_tau});
                     }});
        v.push_back({"mcm_stage", [=](uint64_t s) {
                         std::mt19937_64 rng(s);
                         ParamStore store;
                         ParamInit init{store, rng};
                         McmStage stage(init, "m", 6, 4, 2);
                         Tensor vtok = rand_tensor(rng, {4, 6});
                         Tensor l = rand_tensor(rng, {3, 4});
                         KeyMask mask{1, 1, 0};
                         Tensor wv = rand_tensor(rng, {4, 4});
                         Tensor wl = rand_tensor(rng, {3, 4});
                         std::vector<Tensor> inputs{vtok, l, stage.v_proj.w, stage.ffn_v.fc1.w,
                                                    stage.ln_t.gamma};
                         return grad_check(
                             [=] {
                                 FusedPair fp = stage.run(vtok, l, mask);
                                 return add(sum_all(mul(fp.f_v, wv)), sum_all(mul(fp.f_l, wl)));
                             },
                             inputs);
                     }});
        v.push_back({"conv_softmax_bce", [=](uint64_t s) {
                         std::mt19937_64 rng(s);
                         Tensor x = rand_tensor(rng, {2, 4, 4});
                         Tensor k = rand_tensor(rng, {3, 2, 3, 3});
                         Tensor b = rand_tensor(rng, {3});
                         std::vector<double> y(16 * 3);
                         for (auto& t : y) t = rng() % 2 ? 1.0 : 0.0;
                         Tensor target = Tensor::from({16, 3}, y);
                         return grad_check(
                             [=] {
                                 Tensor probs = softmax_rows(chw_to_tokens(conv2d(x, k, b, 1, 1)));
                                 Tensor p = clamp(probs, kProbEps, 1.0 - kProbEps);
                                 Tensor omp = add_scalar(scale(p, -1.0), 1.0);
                                 Tensor omy = add_scalar(scale(target, -1.0), 1.0);
                                 Tensor ll = add(mul(target, log(p)), mul(omy, log(omp)));
                                 return scale(mean_all(ll), -1.0);
                             },
                             {x, k, b});
                     }});
        return v;
    }();
    return cases;
}

// Tiny end-to-end model (16x16 image, C_1 = 4, d = 8, 3 stages): total-loss
// gradient of every parameter against central differences on a sampled
// coordinate set.
inline GradCheckReport end_to_end_grad_check(uint64_t seed, int coords_per_tensor = 2) {
    RunConfig rc;
    rc.image_size = 16;
    rc.base_channels = 4;
    rc.common_dim = 8;
    rc.text_dim = 8;
    rc.align_dim = 8;
    rc.num_stages = 3;
    rc.fusion_stages = "2,3";
    rc.text_heads = 2;
    rc.mcm_heads = 2;
    rc.enc_heads = 2;
    rc.seed = seed;
    Vocabulary vocab = Vocabulary::prompt_grammar();
    TmcNetwork net(make_model_config(rc, vocab.size()), seed);

    std::mt19937_64 rng(derive_seed(seed, 0xE2E));
    Tensor image = rand_tensor(rng, {1, 16, 16}, 0.0, 1.0);
    std::vector<double> my(256);
    for (auto& m : my) m = rng() % 2 ? 1.0 : 0.0;
    Tensor mask = Tensor::from({1, 16, 16}, my);
    TokenSeq tokens = tokenize("one target region, upper left", vocab);

    std::vector<Tensor> inputs;
    for (size_t i = 0; i < net.params().size(); ++i) inputs.push_back(net.params().param(i));

    auto f = [&net, image, mask, tokens, &rc]() {
        SegOutput out = net.forward(image, tokens);
        Tensor seg = bce_loss(out.prob, mask);
        Tensor align = ma_loss_total(out.align_losses);
        return total_loss(seg, align, rc.lambda).total;
    };
    return grad_check(f, inputs, 1e-5, coords_per_tensor, derive_seed(seed, 0xC0));
}

// Runs every registered op over `seeds` seeds plus the end-to-end check.
// Returns the number of failures; prints one line per op.
inline int run_gradcheck_suite(std::ostream& os, int seeds = 10, double op_tol = 1e-4,
                               double e2e_tol = 1e-3, int e2e_seeds = 10) {
    int failures = 0;
    for (const auto& c : registered_op_checks()) {
        double worst = 0.0;
        std::string err;
        for (int s = 0; s < seeds; ++s) {
            try {
                GradCheckReport r = c.run(static_cast<uint64_t>(s) + 1);
                worst = std::max(worst, r.max_rel_err);
            } catch (const std::exception& ex) {
                err = ex.what();
                break;
            }
        }
        bool ok = err.empty() && worst < op_tol;
        failures += ok ? 0 : 1;
        os << (ok ? "PASS" : "FAIL") << " op " << c.name << " max_rel_err=" << std::scientific
           << std::setprecision(3) << worst;
        if (!err.empty()) os << " error=" << err;
        os << std::defaultfloat << "\n";
    }
    {
        double worst = 0.0;
        std::string err;
        for (int s = 0; s < e2e_seeds; ++s) {
            try {
                GradCheckReport r = end_to_end_grad_check(static_cast<uint64_t>(s) + 1);
                worst = std::max(worst, r.max_rel_err);
            } catch (const std::exception& ex) {
                err = ex.what();
                break;
            }
        }
        bool ok = err.empty() && worst < e2e_tol;
        failures += ok ? 0 : 1;
        os << (ok ? "PASS" : "FAIL") << " end-to-end tiny model max_rel_err=" << std::scientific
           << std::setprecision(3) << worst;
        if (!err.empty()) os << " error=" << err;
        os << std::defaultfloat << "\n";
    }
    return failures;
}

}  // namespace tmc
