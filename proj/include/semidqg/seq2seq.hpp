#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

namespace semidqg::seq2seq {

enum class DecodeStrategy { GREEDY, BEAM };

struct DecodeConfig {
    DecodeStrategy strategy = DecodeStrategy::GREEDY;
    int beam_size = 5;
    int num_return = 1;
    int max_len = 16;

    // Throws argument_error on invalid combinations; GREEDY forces
    // num_return to 1.
    DecodeConfig validated() const;
};

struct ScoredQuery {
    std::string text;
    double norm_logprob = 0.0;  // per-token mean log-probability, <= 0
};

using TrainPair = std::pair<std::string, std::string>;  // (input, target)

// A trainable sequence-to-sequence model. One handle is single-writer:
// training calls must be serialized; generation and scoring are const and
// safe to call concurrently.
class Seq2SeqBackend {
public:
    virtual ~Seq2SeqBackend() = default;

    virtual std::string backend_id() const = 0;
    virtual std::size_t vocab_size() const = 0;
    virtual std::size_t parameter_count() const = 0;
    virtual std::uint64_t rng_seed() const = 0;

    // Resets optimizer state and installs a linear learning-rate schedule
    // over total_steps (0 keeps the rate constant).
    virtual void begin_training(double lr, std::size_t total_steps) = 0;

    // One optimizer update on the batch; returns the mean token-level
    // negative log-likelihood of the targets.
    virtual double train_step(const std::vector<TrainPair>& batch) = 0;

    // One policy-gradient update: loss = -reward * sum of target token
    // log-probabilities. Returns that loss.
    virtual double reinforce_step(const std::string& input,
                                  const std::string& target,
                                  double reward) = 0;

    // Decodes num_return distinct queries sorted by norm_logprob
    // descending. May return fewer if the search exhausts.
    virtual std::vector<ScoredQuery> generate(const std::string& input,
                                              const DecodeConfig& cfg) const = 0;

    // Length-normalized log-probability of target given input.
    virtual double score_sequence(const std::string& input,
                                  const std::string& target) const = 0;

    virtual std::vector<double> parameters() const = 0;
    virtual void set_parameters(std::span<const double> params) = 0;

    // Architecture description sufficient to reconstruct the backend
    // through the factory (excludes parameter values).
    virtual nlohmann::json spec_json() const = 0;

    virtual std::unique_ptr<Seq2SeqBackend> clone() const = 0;
};

using BackendFactory =
    std::function<std::unique_ptr<Seq2SeqBackend>(const nlohmann::json& spec)>;

void register_backend(const std::string& id, BackendFactory factory);
std::unique_ptr<Seq2SeqBackend> create_backend(const std::string& id,
                                               const nlohmann::json& spec);

// ---------------------------------------------------------------------
// Checkpoints: a single file with a plain-text JSON header followed by the
// raw little-endian parameter blob, checksummed.

enum class StageTag { STAGE1, STAGE2, STAGE3, BASELINE };

std::string stage_tag_name(StageTag t);
StageTag parse_stage_tag(const std::string& s);

struct CheckpointMeta {
    StageTag stage_tag = StageTag::STAGE1;
    std::string config_hash;
    std::uint64_t seed = 0;
    std::map<std::string, double> metrics_at_save;
};

struct CheckpointHeader {
    CheckpointMeta meta;
    std::string backend_id;
    nlohmann::json backend_spec;
    std::size_t param_count = 0;
    std::uint64_t blob_checksum = 0;
};

void save_checkpoint(const Seq2SeqBackend& model, const CheckpointMeta& meta,
                     const std::string& path);

// Parses only the header; does not touch the parameter blob.
CheckpointHeader read_checkpoint_header(const std::string& path);

// Reconstructs the model. Verifies the blob checksum and, when given,
// that the stored config_hash matches the expected one.
std::unique_ptr<Seq2SeqBackend> load_checkpoint(
    const std::string& path,
    const std::optional<std::string>& expected_config_hash = std::nullopt);

}  // namespace semidqg::seq2seq
