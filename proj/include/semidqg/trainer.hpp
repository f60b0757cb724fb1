#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "semidqg/corpus.hpp"
#include "semidqg/seq2seq.hpp"

namespace semidqg::trainer {

struct TrainConfig {
    int epochs = 20;
    int batch_size = 64;
    double lr = 3e-5;
    std::uint64_t seed = 1;
    int eval_every = 200;  // optimizer steps between dev evaluations
    int patience = 10;     // dev evaluations without improvement before stop

    void validate() const;
};

struct EvalPoint {
    std::size_t step = 0;
    double dev_uni_f1 = 0.0;  // percentage
};

struct FitResult {
    std::vector<double> best_params;
    double best_dev_uni_f1 = 0.0;   // percentage
    std::size_t best_step = 0;
    double final_dev_uni_f1 = 0.0;  // percentage
    std::vector<double> step_losses;
    std::vector<EvalPoint> evals;
};

// Greedy-decodes every instance and returns the mean Unigram F1 against
// gold queries, as a percentage. Decoding is parallel per instance.
double dev_unigram_f1(const seq2seq::Seq2SeqBackend& model,
                      const corpus::Dataset& dev, corpus::Role role,
                      const corpus::InputFormat& fmt, int max_len);

// Core supervised loop shared by every training recipe: shuffled
// mini-batches of (input, target) pairs, cross-entropy steps, periodic dev
// evaluation, and best-checkpoint selection on dev Unigram F1. The model
// is left holding the best parameters seen (including the pre-training
// state, which is evaluated as step 0).
FitResult fit(seq2seq::Seq2SeqBackend& model,
              const std::vector<seq2seq::TrainPair>& pairs,
              const corpus::Dataset& dev, corpus::Role dev_role,
              const corpus::InputFormat& fmt, const TrainConfig& cfg,
              int decode_max_len);

// Builds (input, target) pairs for a labeled dataset and role.
std::vector<seq2seq::TrainPair> supervised_pairs(const corpus::Dataset& ds,
                                                 corpus::Role role,
                                                 const corpus::InputFormat& fmt);

// Writes the per-step losses and eval history as a JSON training log.
void write_train_log(const FitResult& result, const std::string& path);

}  // namespace semidqg::trainer
