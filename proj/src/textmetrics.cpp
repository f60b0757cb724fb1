#include "semidqg/textmetrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <unordered_map>

#include "semidqg/errors.hpp"

namespace semidqg::metrics {

namespace {

bool is_space_cp(char32_t cp) {
    return cp == U' ' || cp == U'\t' || cp == U'\n' || cp == U'\r' ||
           cp == U'\f' || cp == U'\v' || cp == U'　';
}

// Decodes the next UTF-8 code point starting at i; malformed bytes are
// passed through as single-byte tokens.
std::size_t utf8_next(const std::string& s, std::size_t i, char32_t& cp) {
    unsigned char c = static_cast<unsigned char>(s[i]);
    std::size_t len = 1;
    if (c < 0x80) {
        cp = c;
    } else if ((c >> 5) == 0x6) {
        len = 2;
        cp = c & 0x1f;
    } else if ((c >> 4) == 0xe) {
        len = 3;
        cp = c & 0x0f;
    } else if ((c >> 3) == 0x1e) {
        len = 4;
        cp = c & 0x07;
    } else {
        cp = c;
        return 1;
    }
    if (i + len > s.size()) {
        cp = c;
        return 1;
    }
    for (std::size_t k = 1; k < len; ++k) {
        unsigned char cc = static_cast<unsigned char>(s[i + k]);
        if ((cc >> 6) != 0x2) {
            cp = c;
            return 1;
        }
        cp = (cp << 6) | (cc & 0x3f);
    }
    return len;
}

using Counts = std::unordered_map<std::string, int>;

Counts ngram_counts(const std::vector<std::string>& toks, int n) {
    Counts out;
    if (static_cast<int>(toks.size()) < n) return out;
    for (std::size_t i = 0; i + n <= toks.size(); ++i) {
        std::string key = toks[i];
        for (int k = 1; k < n; ++k) {
            key.push_back('\x1f');
            key += toks[i + k];
        }
        ++out[key];
    }
    return out;
}

long clipped_overlap(const Counts& pred, const Counts& ref) {
    long total = 0;
    for (const auto& [k, c] : pred) {
        auto it = ref.find(k);
        if (it != ref.end()) total += std::min(c, it->second);
    }
    return total;
}

PrecisionRecallF1 prf_from_counts(long overlap, long pred_total,
                                  long ref_total) {
    if (pred_total == 0 && ref_total == 0) return {1.0, 1.0, 1.0};
    if (pred_total == 0 || ref_total == 0) return {0.0, 0.0, 0.0};
    PrecisionRecallF1 r;
    r.precision = static_cast<double>(overlap) / pred_total;
    r.recall = static_cast<double>(overlap) / ref_total;
    r.f1 = (r.precision + r.recall) > 0.0
               ? 2.0 * r.precision * r.recall / (r.precision + r.recall)
               : 0.0;
    return r;
}

std::size_t lcs_length(const std::vector<std::string>& a,
                       const std::vector<std::string>& b) {
    if (a.empty() || b.empty()) return 0;
    std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
    for (std::size_t i = 1; i <= a.size(); ++i) {
        for (std::size_t j = 1; j <= b.size(); ++j) {
            if (a[i - 1] == b[j - 1])
                cur[j] = prev[j - 1] + 1;
            else
                cur[j] = std::max(prev[j], cur[j - 1]);
        }
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

std::mutex g_provider_mutex;
std::map<std::string, EmbeddingProvider>& provider_registry() {
    static std::map<std::string, EmbeddingProvider> reg;
    return reg;
}

}  // namespace

std::vector<std::string> tokenize(const std::string& text,
                                  const TokenizerConfig& tok) {
    std::vector<std::string> out;
    if (tok.scheme == TokenScheme::WHITESPACE_LOWER) {
        std::string cur;
        for (char ch : text) {
            unsigned char c = static_cast<unsigned char>(ch);
            if (std::isspace(c)) {
                if (!cur.empty()) {
                    out.push_back(std::move(cur));
                    cur.clear();
                }
            } else {
                cur.push_back(static_cast<char>(std::tolower(c)));
            }
        }
        if (!cur.empty()) out.push_back(std::move(cur));
    } else {
        std::size_t i = 0;
        while (i < text.size()) {
            char32_t cp = 0;
            std::size_t len = utf8_next(text, i, cp);
            if (!is_space_cp(cp)) out.push_back(text.substr(i, len));
            i += len;
        }
    }
    return out;
}

double unigram_f1(const std::string& pred, const std::string& ref,
                  const TokenizerConfig& tok) {
    auto pt = tokenize(pred, tok);
    auto rt = tokenize(ref, tok);
    Counts pc = ngram_counts(pt, 1), rc = ngram_counts(rt, 1);
    long overlap = clipped_overlap(pc, rc);
    return prf_from_counts(overlap, static_cast<long>(pt.size()),
                           static_cast<long>(rt.size()))
        .f1;
}

double bleu(const std::vector<std::string>& preds,
            const std::vector<std::string>& refs, const BleuConfig& cfg) {
    if (preds.size() != refs.size())
        throw argument_error("bleu: preds and refs differ in length");
    if (preds.empty()) throw argument_error("bleu: empty input lists");
    if (cfg.max_n < 1 || cfg.max_n > 2)
        throw argument_error("bleu: max_n must be 1 or 2");

    std::vector<std::vector<std::string>> ptoks(preds.size()),
        rtoks(refs.size());
    long pred_len = 0, ref_len = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        ptoks[i] = tokenize(preds[i], cfg.tok);
        rtoks[i] = tokenize(refs[i], cfg.tok);
        pred_len += static_cast<long>(ptoks[i].size());
        ref_len += static_cast<long>(rtoks[i].size());
    }
    if (pred_len == 0) return ref_len == 0 ? 100.0 : 0.0;

    double log_prec_sum = 0.0;
    for (int n = 1; n <= cfg.max_n; ++n) {
        long matches = 0, total = 0;
        for (std::size_t i = 0; i < preds.size(); ++i) {
            Counts pc = ngram_counts(ptoks[i], n);
            Counts rc = ngram_counts(rtoks[i], n);
            matches += clipped_overlap(pc, rc);
            long cnt = static_cast<long>(ptoks[i].size()) - n + 1;
            total += std::max<long>(cnt, 0);
        }
        double p;
        if (total == 0) {
            p = 1.0;  // no n-grams at this order: vacuously perfect
        } else if (cfg.smooth && n >= 2) {
            p = static_cast<double>(matches + 1) / (total + 1);
        } else {
            if (matches == 0) return 0.0;
            p = static_cast<double>(matches) / total;
        }
        log_prec_sum += std::log(p);
    }

    double bp = std::exp(std::min(
        0.0, 1.0 - static_cast<double>(ref_len) / static_cast<double>(pred_len)));
    return 100.0 * bp * std::exp(log_prec_sum / cfg.max_n);
}

PrecisionRecallF1 rouge(const std::string& pred, const std::string& ref,
                        RougeVariant variant, const TokenizerConfig& tok) {
    auto pt = tokenize(pred, tok);
    auto rt = tokenize(ref, tok);
    if (variant == RougeVariant::RL) {
        long lcs = static_cast<long>(lcs_length(pt, rt));
        return prf_from_counts(lcs, static_cast<long>(pt.size()),
                               static_cast<long>(rt.size()));
    }
    int n = variant == RougeVariant::R1 ? 1 : 2;
    Counts pc = ngram_counts(pt, n), rc = ngram_counts(rt, n);
    long pred_total = std::max<long>(static_cast<long>(pt.size()) - n + 1, 0);
    long ref_total = std::max<long>(static_cast<long>(rt.size()) - n + 1, 0);
    return prf_from_counts(clipped_overlap(pc, rc), pred_total, ref_total);
}

void register_embedding_provider(const std::string& id, EmbeddingProvider fn) {
    std::lock_guard<std::mutex> lock(g_provider_mutex);
    provider_registry()[id] = std::move(fn);
}

bool has_embedding_provider(const std::string& id) {
    std::lock_guard<std::mutex> lock(g_provider_mutex);
    return provider_registry().count(id) > 0;
}

double similarity(const std::string& pred, const std::string& ref,
                  const FsimConfig& cfg, const TokenizerConfig& tok) {
    if (cfg.kind == FsimKind::UNIGRAM_F1) return unigram_f1(pred, ref, tok);

    if (!cfg.plugin_id)
        throw config_error("similarity: EMBEDDING_PLUGIN requires plugin_id");
    EmbeddingProvider provider;
    {
        std::lock_guard<std::mutex> lock(g_provider_mutex);
        auto it = provider_registry().find(*cfg.plugin_id);
        if (it == provider_registry().end())
            throw config_error("similarity: no embedding provider registered "
                               "under id '" +
                               *cfg.plugin_id + "'");
        provider = it->second;
    }
    std::vector<double> a = provider(pred);
    std::vector<double> b = provider(ref);
    if (a.size() != b.size() || a.empty())
        throw config_error("similarity: provider returned inconsistent "
                           "embedding dimensions");
    double dot = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) dot += a[i] * b[i];
    return std::clamp(dot, 0.0, 1.0);
}

}  // namespace semidqg::metrics
