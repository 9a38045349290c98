#pragma once

// Prompt tokenizer and the trained-from-scratch text encoder stand-in:
// embedding table + self-attention blocks, per-stage linear projections with
// CLS summaries, and one refinement block per downstream fusion stage.

#include <array>
#include <cctype>
#include <fstream>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "tmc/nn.hpp"
#include "tmc/tensor.hpp"

namespace tmc {

inline constexpr int kTextLen = 10;  // fixed token length, CLS included
inline constexpr int kPadId = 0;
inline constexpr int kClsId = 1;
inline constexpr int kUnkId = 2;

class Vocabulary {
  public:
    Vocabulary() {
        add("[PAD]");
        add("[CLS]");
        add("[UNK]");
    }

    // Closed vocabulary of the synthetic prompt grammar.
    static Vocabulary prompt_grammar() {
        Vocabulary v;
        for (const char* w : {"one", "two", "three", "target", "region", "regions", "upper",
                              "lower", "left", "right", "and"})
            v.add(w);
        return v;
    }

    int add(const std::string& token) {
        auto it = to_id_.find(token);
        if (it != to_id_.end()) return it->second;
        int id = static_cast<int>(tokens_.size());
        to_id_[token] = id;
        tokens_.push_back(token);
        return id;
    }
    int id(const std::string& token) const {
        auto it = to_id_.find(token);
        return it == to_id_.end() ? kUnkId : it->second;
    }
    const std::string& token(int id) const { return tokens_.at(static_cast<size_t>(id)); }
    int size() const { return static_cast<int>(tokens_.size()); }

    // One "token<TAB>id" line per entry.
    void save(std::ostream& os) const {
        for (size_t i = 0; i < tokens_.size(); ++i) os << tokens_[i] << '\t' << i << '\n';
    }
    void save_file(const std::string& path) const {
        std::ofstream os(path);
        if (!os) throw std::runtime_error("I/O error: cannot write vocabulary " + path);
        save(os);
    }
    static Vocabulary load(std::istream& is) {
        Vocabulary v;
        std::string line;
        while (std::getline(is, line)) {
            if (line.empty()) continue;
            auto tab = line.find('\t');
            if (tab == std::string::npos)
                throw std::runtime_error("vocabulary error: malformed line '" + line + "'");
            std::string tok = line.substr(0, tab);
            int id = std::stoi(line.substr(tab + 1));
            if (id < v.size()) {
                if (v.token(id) != tok)
                    throw std::runtime_error("vocabulary error: reserved id " +
                                             std::to_string(id) + " rebound to '" + tok + "'");
                continue;
            }
            if (id != v.size())
                throw std::runtime_error("vocabulary error: ids not dense at '" + line + "'");
            v.add(tok);
        }
        return v;
    }
    static Vocabulary load_file(const std::string& path) {
        std::ifstream is(path);
        if (!is) throw std::runtime_error("I/O error: cannot read vocabulary " + path);
        return load(is);
    }

  private:
    std::unordered_map<std::string, int> to_id_;
    std::vector<std::string> tokens_;
};

struct TokenSeq {
    std::array<int, kTextLen> ids{};
    std::array<uint8_t, kTextLen> mask{};

    std::vector<int> id_vector() const { return {ids.begin(), ids.end()}; }
    KeyMask key_mask() const { return {mask.begin(), mask.end()}; }
};

// Lowercase, split on anything non-alphanumeric, prepend CLS, truncate to the
// fixed length, pad with PAD.
inline TokenSeq tokenize(const std::string& prompt, const Vocabulary& vocab) {
    std::vector<std::string> words;
    std::string cur;
    for (char ch : prompt) {
        if (std::isalnum(static_cast<unsigned char>(ch))) {
            cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
        } else if (!cur.empty()) {
            words.push_back(cur);
            cur.clear();
        }
    }
    if (!cur.empty()) words.push_back(cur);
    if (words.empty()) throw std::invalid_argument("input error: empty prompt");

    TokenSeq seq;
    seq.ids[0] = kClsId;
    int n = 1;
    for (const auto& w : words) {
        if (n >= kTextLen) break;
        seq.ids[n++] = vocab.id(w);
    }
    for (int t = 0; t < kTextLen; ++t) seq.mask[t] = seq.ids[t] != kPadId ? 1 : 0;
    return seq;
}

struct TextEncoderConfig {
    int vocab_size = 0;
    int d_l = 32;  // token feature dim
    int d = 16;    // common cross-attention dim
    int heads = 4;
    int blocks = 2;
    std::vector<int> stages;  // selected fusion stages, ascending
};

struct TextFeatures {
    Tensor tokens;                // L: [T x d_l]
    std::map<int, Tensor> l_i;    // per-stage projections [T x d]
    std::map<int, Tensor> cls_i;  // row 0 of each L_i, [1 x d]
    KeyMask mask;
};

class TextEncoder {
  public:
    TextEncoder() = default;
    TextEncoder(ParamInit& init, const TextEncoderConfig& cfg) : cfg_(cfg) {
        embed_ = init.weight("text.embed", {cfg.vocab_size, cfg.d_l}, cfg.d_l);
        pos_ = init.zeros("text.pos", {kTextLen, cfg.d_l});
        for (int b = 0; b < cfg.blocks; ++b)
            blocks_.emplace_back(init, "text.block" + std::to_string(b), cfg.d_l, cfg.heads);
        for (size_t s = 0; s < cfg.stages.size(); ++s) {
            int stage = cfg.stages[s];
            proj_.emplace(stage, Linear(init, "text.proj" + std::to_string(stage), cfg.d_l, cfg.d));
            if (s > 0)
                refine_.emplace(stage, TransformerBlock(init, "text.refine" + std::to_string(stage),
                                                        cfg.d, cfg.heads));
        }
    }

    const TextEncoderConfig& config() const { return cfg_; }

    void validate(const TokenSeq& seq) const {
        if (seq.ids[0] != kClsId)
            throw std::invalid_argument("input error: token sequence must start with CLS");
        bool pad_seen = false;
        for (int t = 0; t < kTextLen; ++t) {
            if (seq.ids[t] == kPadId)
                pad_seen = true;
            else if (pad_seen)
                throw std::invalid_argument("input error: PAD must be a suffix");
            if ((seq.mask[t] != 0) != (seq.ids[t] != kPadId))
                throw std::invalid_argument("input error: attention mask disagrees with PAD ids");
        }
    }

    TextFeatures encode(const TokenSeq& seq) const {
        validate(seq);
        TextFeatures out;
        out.mask = seq.key_mask();
        Tensor x = add(embed_rows(embed_, seq.id_vector()), pos_);
        for (const auto& block : blocks_) x = block(x, out.mask);
        out.tokens = x;
        for (const auto& [stage, proj] : proj_) {
            Tensor li = proj(x);
            out.l_i.emplace(stage, li);
            out.cls_i.emplace(stage, slice_rows(li, 0, 1));
        }
        return out;
    }

    Tensor project_stage(const TextFeatures& f, int stage, Tensor* cls = nullptr) const {
        auto it = f.l_i.find(stage);
        if (it == f.l_i.end())
            throw std::invalid_argument("stage-selection error: stage " + std::to_string(stage) +
                                        " is not a selected fusion stage");
        if (cls) *cls = f.cls_i.at(stage);
        return it->second;
    }

    // The refinement block realizing "F_L^i is passed to the next stage" of
    // the language path; defined for every selected stage after the first.
    Tensor refine_text(int stage, const Tensor& f_l_prev, const KeyMask& mask) const {
        auto it = refine_.find(stage);
        if (it == refine_.end())
            throw std::invalid_argument("stage-selection error: no refinement block for stage " +
                                        std::to_string(stage));
        return it->second(f_l_prev, mask);
    }
    bool has_refine(int stage) const { return refine_.count(stage) != 0; }

  private:
    TextEncoderConfig cfg_;
    Tensor embed_;
    Tensor pos_;
    std::vector<TransformerBlock> blocks_;
    std::map<int, Linear> proj_;
    std::map<int, TransformerBlock> refine_;
};

}  // namespace tmc
