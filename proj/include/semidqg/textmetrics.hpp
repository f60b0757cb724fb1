#pragma once

#include <functional>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

namespace semidqg::metrics {

enum class TokenScheme {
    WHITESPACE_LOWER,  // lowercase, then split on whitespace
    CHAR,              // one token per Unicode code point (CJK)
};

struct TokenizerConfig {
    TokenScheme scheme = TokenScheme::WHITESPACE_LOWER;
};

std::vector<std::string> tokenize(const std::string& text,
                                  const TokenizerConfig& tok = {});

// Unigram F1 over token multisets with clipped counts.
// Both strings empty -> 1.0; exactly one empty -> 0.0.
double unigram_f1(const std::string& pred, const std::string& ref,
                  const TokenizerConfig& tok = {});

struct BleuConfig {
    int max_n = 2;  // 1 or 2
    // Add-one smoothing of n-gram precisions for n >= 2.
    bool smooth = false;
    TokenizerConfig tok;
};

// Corpus-level BLEU in [0, 100]: geometric mean of clipped n-gram
// precisions times the brevity penalty. An order with zero matches and a
// nonzero denominator yields 0 unless smoothing is on; an order with no
// n-grams at all counts as vacuously perfect.
double bleu(const std::vector<std::string>& preds,
            const std::vector<std::string>& refs, const BleuConfig& cfg = {});

enum class RougeVariant { R1, R2, RL };

struct PrecisionRecallF1 {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

// R1/R2: clipped n-gram overlap. RL: longest common subsequence.
PrecisionRecallF1 rouge(const std::string& pred, const std::string& ref,
                        RougeVariant variant, const TokenizerConfig& tok = {});

// ---------------------------------------------------------------------
// F_sim: the text similarity function used by pseudo-query selection.

enum class FsimKind { UNIGRAM_F1, EMBEDDING_PLUGIN };

struct FsimConfig {
    FsimKind kind = FsimKind::UNIGRAM_F1;
    std::optional<std::string> plugin_id;
};

// Maps a string to a fixed-dimension unit-norm vector.
using EmbeddingProvider = std::function<std::vector<double>(const std::string&)>;

void register_embedding_provider(const std::string& id, EmbeddingProvider fn);
bool has_embedding_provider(const std::string& id);

// UNIGRAM_F1 -> unigram_f1; EMBEDDING_PLUGIN -> cosine similarity of the
// provider's embeddings clamped to [0, 1].
double similarity(const std::string& pred, const std::string& ref,
                  const FsimConfig& cfg = {}, const TokenizerConfig& tok = {});

}  // namespace semidqg::metrics
