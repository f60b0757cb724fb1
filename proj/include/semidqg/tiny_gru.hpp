#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "semidqg/seq2seq.hpp"

namespace semidqg::seq2seq {

// Word-level vocabulary with reserved <unk>/<bos>/<eos> slots. Tokens are
// lowercased and whitespace-split, matching the corpus input format.
class Vocab {
public:
    static constexpr std::size_t unk_id = 0;
    static constexpr std::size_t bos_id = 1;
    static constexpr std::size_t eos_id = 2;

    Vocab();

    // Tokens ordered by frequency (ties by first occurrence). max_size
    // caps the total size including specials; 0 means unlimited.
    static Vocab build(const std::vector<std::string>& texts,
                       std::size_t max_size = 0);

    std::size_t size() const { return tokens_.size(); }
    std::size_t id(const std::string& token) const;
    const std::string& token(std::size_t id) const { return tokens_.at(id); }

    std::vector<std::size_t> encode(const std::string& text) const;
    std::string decode(const std::vector<std::size_t>& ids) const;

    nlohmann::json to_json() const;
    static Vocab from_json(const nlohmann::json& j);

private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, std::size_t> index_;
};

// Reference seq2seq backend: single-layer GRU encoder, single-layer GRU
// decoder with dot-product attention, tied input/output embeddings.
// Trained with Adam on a linear learning-rate schedule. Everything is
// computed in double precision with hand-written backward passes, so
// training trajectories are bit-reproducible for a fixed seed.
class TinyGru final : public Seq2SeqBackend {
public:
    struct Options {
        std::size_t embed_dim = 24;
        std::size_t hidden_dim = 32;
        std::size_t max_input_len = 256;
        std::size_t max_target_len = 32;
        double init_scale = 0.08;
        double adam_beta1 = 0.9;
        double adam_beta2 = 0.999;
        double adam_eps = 1e-8;
        std::uint64_t seed = 1;
    };

    TinyGru(Vocab vocab, Options opt);

    static std::unique_ptr<TinyGru> from_spec(const nlohmann::json& spec);

    // Seq2SeqBackend interface
    std::string backend_id() const override { return "tiny-gru"; }
    std::size_t vocab_size() const override { return vocab_.size(); }
    std::size_t parameter_count() const override { return params_.size(); }
    std::uint64_t rng_seed() const override { return opt_.seed; }

    void begin_training(double lr, std::size_t total_steps) override;
    double train_step(const std::vector<TrainPair>& batch) override;
    double reinforce_step(const std::string& input, const std::string& target,
                          double reward) override;
    std::vector<ScoredQuery> generate(const std::string& input,
                                      const DecodeConfig& cfg) const override;
    double score_sequence(const std::string& input,
                          const std::string& target) const override;

    std::vector<double> parameters() const override { return params_; }
    void set_parameters(std::span<const double> params) override;
    nlohmann::json spec_json() const override;
    std::unique_ptr<Seq2SeqBackend> clone() const override;

    // Implementation scratch types, public so file-local helpers can use
    // them.
    struct CellCache;
    struct StepCache;
    struct Workspace;

    // Test hooks.
    const Vocab& vocab() const { return vocab_; }
    // Mean token-level NLL and its gradient, without an optimizer update.
    std::pair<double, std::vector<double>> loss_and_grad(
        const std::vector<TrainPair>& batch) const;
    // Log-probability distribution over the vocabulary for the token
    // following the given target prefix.
    std::vector<double> next_token_logprobs(
        const std::string& input,
        const std::vector<std::string>& prefix_words) const;

private:
    struct Layout {
        // Offsets into the flat parameter vector.
        std::size_t embed = 0;
        std::size_t enc_wi = 0, enc_wh = 0, enc_bi = 0, enc_bh = 0;
        std::size_t dec_wi = 0, dec_wh = 0, dec_bi = 0, dec_bh = 0;
        std::size_t proj_w = 0, proj_b = 0;
        std::size_t out_bias = 0;
        std::size_t total = 0;
    };

    void init_params();
    Layout make_layout() const;

    std::span<const double> pspan(std::size_t off, std::size_t len) const {
        return {params_.data() + off, len};
    }

    std::vector<std::size_t> encode_input(const std::string& text) const;
    std::vector<std::size_t> encode_target(const std::string& text,
                                           bool warn_truncate) const;

    // Runs the encoder; states laid out T x hidden.
    void run_encoder(const std::vector<std::size_t>& input_ids,
                     std::vector<double>& states) const;

    // One decoder step; fills the log-probability vector over the vocab
    // and advances the hidden state. Caches are optional (training only).
    void decoder_step(const std::vector<double>& enc_states,
                      std::size_t n_enc, std::size_t y_prev,
                      const std::vector<double>& s_prev,
                      std::vector<double>& s_next,
                      std::vector<double>& logprobs,
                      StepCache* cache) const;

    // Sum NLL of target_ids and gradient of that sum; returns token count.
    std::size_t forward_backward(const std::vector<std::size_t>& input_ids,
                                 const std::vector<std::size_t>& target_ids,
                                 double& nll_sum,
                                 std::span<double> grad) const;

    void adam_update(std::span<const double> grad);

    Vocab vocab_;
    Options opt_;
    Layout layout_;
    std::vector<double> params_;

    // Optimizer state
    double lr_ = 0.0;
    std::size_t schedule_total_ = 0;
    std::size_t adam_step_ = 0;
    std::vector<double> adam_m_, adam_v_;

    // Reusable per-pair gradient buffers for batched training.
    mutable std::vector<std::vector<double>> grad_pool_;
};

}  // namespace semidqg::seq2seq
