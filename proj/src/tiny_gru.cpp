#include "semidqg/tiny_gru.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <map>
#include <numeric>

#include "semidqg/errors.hpp"
#include "semidqg/kernels.hpp"
#include "semidqg/logging.hpp"
#include "semidqg/textmetrics.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace semidqg::seq2seq {

namespace {

constexpr const char* kUnk = "<unk>";
constexpr const char* kBos = "<bos>";
constexpr const char* kEos = "<eos>";

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

struct SplitMix64 {
    std::uint64_t state;
    std::uint64_t next() {
        std::uint64_t z = (state += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }
    // Uniform in [0,1) from the top 53 bits; avoids the library
    // distribution so initialization is identical across toolchains.
    double uniform01() {
        return static_cast<double>(next() >> 11) * 0x1.0p-53;
    }
};

}  // namespace

// ---------------------------------------------------------------------
// Vocab

Vocab::Vocab() {
    tokens_ = {kUnk, kBos, kEos};
    for (std::size_t i = 0; i < tokens_.size(); ++i) index_[tokens_[i]] = i;
}

Vocab Vocab::build(const std::vector<std::string>& texts,
                   std::size_t max_size) {
    struct Entry {
        std::size_t count = 0;
        std::size_t first_seen = 0;
    };
    std::unordered_map<std::string, Entry> freq;
    std::size_t position = 0;
    metrics::TokenizerConfig tok;
    for (const auto& text : texts) {
        for (auto& t : metrics::tokenize(text, tok)) {
            auto [it, inserted] = freq.try_emplace(t);
            if (inserted) it->second.first_seen = position;
            ++it->second.count;
            ++position;
        }
    }

    std::vector<std::pair<std::string, Entry>> ordered(freq.begin(),
                                                       freq.end());
    std::sort(ordered.begin(), ordered.end(), [](const auto& a, const auto& b) {
        if (a.second.count != b.second.count)
            return a.second.count > b.second.count;
        return a.second.first_seen < b.second.first_seen;
    });

    Vocab v;
    for (auto& [token, entry] : ordered) {
        if (max_size > 0 && v.tokens_.size() >= max_size) break;
        if (v.index_.count(token)) continue;  // specials appearing in text
        v.index_[token] = v.tokens_.size();
        v.tokens_.push_back(token);
    }
    return v;
}

std::size_t Vocab::id(const std::string& token) const {
    auto it = index_.find(token);
    return it == index_.end() ? unk_id : it->second;
}

std::vector<std::size_t> Vocab::encode(const std::string& text) const {
    std::vector<std::size_t> out;
    for (auto& t : metrics::tokenize(text, {})) out.push_back(id(t));
    return out;
}

std::string Vocab::decode(const std::vector<std::size_t>& ids) const {
    std::string out;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (i > 0) out.push_back(' ');
        out += token(ids[i]);
    }
    return out;
}

nlohmann::json Vocab::to_json() const { return nlohmann::json(tokens_); }

Vocab Vocab::from_json(const nlohmann::json& j) {
    auto tokens = j.get<std::vector<std::string>>();
    if (tokens.size() < 3 || tokens[0] != kUnk || tokens[1] != kBos ||
        tokens[2] != kEos)
        throw integrity_error("vocab json lacks reserved specials");
    Vocab v;
    v.tokens_ = std::move(tokens);
    v.index_.clear();
    for (std::size_t i = 0; i < v.tokens_.size(); ++i)
        v.index_[v.tokens_[i]] = i;
    return v;
}

// ---------------------------------------------------------------------
// TinyGru: layout and construction

struct TinyGru::CellCache {
    std::vector<double> r, z, n, q;
};

struct TinyGru::StepCache {
    std::size_t y_prev = 0;
    CellCache cell;
    std::vector<double> s;      // hidden state after the cell
    std::vector<double> alpha;  // attention weights over encoder states
    std::vector<double> c;      // context vector
    std::vector<double> v;      // [s; c]
    std::vector<double> u;      // projection into embedding space
    std::vector<double> p;      // output distribution
};

struct TinyGru::Workspace {
    std::vector<double> gi, gh, g3i, g3h, tmp_in, tmp_h;
};

TinyGru::Layout TinyGru::make_layout() const {
    const std::size_t V = vocab_.size();
    const std::size_t d = opt_.embed_dim;
    const std::size_t h = opt_.hidden_dim;
    Layout L;
    std::size_t off = 0;
    auto take = [&off](std::size_t len) {
        std::size_t at = off;
        off += len;
        return at;
    };
    L.embed = take(V * d);
    L.enc_wi = take(3 * h * d);
    L.enc_wh = take(3 * h * h);
    L.enc_bi = take(3 * h);
    L.enc_bh = take(3 * h);
    L.dec_wi = take(3 * h * d);
    L.dec_wh = take(3 * h * h);
    L.dec_bi = take(3 * h);
    L.dec_bh = take(3 * h);
    L.proj_w = take(d * 2 * h);
    L.proj_b = take(d);
    L.out_bias = take(V);
    L.total = off;
    return L;
}

TinyGru::TinyGru(Vocab vocab, Options opt)
    : vocab_(std::move(vocab)), opt_(opt) {
    if (opt_.embed_dim == 0 || opt_.hidden_dim == 0)
        throw config_error("tiny-gru: dimensions must be positive");
    layout_ = make_layout();
    params_.assign(layout_.total, 0.0);
    init_params();
}

void TinyGru::init_params() {
    SplitMix64 rng{opt_.seed * 0x9e3779b97f4a7c15ull + 0x632be59bd9b4e019ull};
    const double s = opt_.init_scale;
    auto fill = [&](std::size_t off, std::size_t len) {
        for (std::size_t i = 0; i < len; ++i)
            params_[off + i] = (2.0 * rng.uniform01() - 1.0) * s;
    };
    const std::size_t V = vocab_.size();
    const std::size_t d = opt_.embed_dim;
    const std::size_t h = opt_.hidden_dim;
    // Weight matrices and embeddings are uniform in [-s, s]; biases zero.
    fill(layout_.embed, V * d);
    fill(layout_.enc_wi, 3 * h * d);
    fill(layout_.enc_wh, 3 * h * h);
    fill(layout_.dec_wi, 3 * h * d);
    fill(layout_.dec_wh, 3 * h * h);
    fill(layout_.proj_w, d * 2 * h);
}

std::unique_ptr<TinyGru> TinyGru::from_spec(const nlohmann::json& spec) {
    Options opt;
    opt.embed_dim = spec.value("embed_dim", opt.embed_dim);
    opt.hidden_dim = spec.value("hidden_dim", opt.hidden_dim);
    opt.max_input_len = spec.value("max_input_len", opt.max_input_len);
    opt.max_target_len = spec.value("max_target_len", opt.max_target_len);
    opt.init_scale = spec.value("init_scale", opt.init_scale);
    opt.adam_beta1 = spec.value("adam_beta1", opt.adam_beta1);
    opt.adam_beta2 = spec.value("adam_beta2", opt.adam_beta2);
    opt.adam_eps = spec.value("adam_eps", opt.adam_eps);
    opt.seed = spec.value("seed", opt.seed);
    if (!spec.contains("vocab"))
        throw config_error("tiny-gru spec missing vocab");
    return std::make_unique<TinyGru>(Vocab::from_json(spec.at("vocab")), opt);
}

nlohmann::json TinyGru::spec_json() const {
    nlohmann::json j;
    j["embed_dim"] = opt_.embed_dim;
    j["hidden_dim"] = opt_.hidden_dim;
    j["max_input_len"] = opt_.max_input_len;
    j["max_target_len"] = opt_.max_target_len;
    j["init_scale"] = opt_.init_scale;
    j["adam_beta1"] = opt_.adam_beta1;
    j["adam_beta2"] = opt_.adam_beta2;
    j["adam_eps"] = opt_.adam_eps;
    j["seed"] = opt_.seed;
    j["vocab"] = vocab_.to_json();
    return j;
}

std::unique_ptr<Seq2SeqBackend> TinyGru::clone() const {
    return std::make_unique<TinyGru>(*this);
}

void TinyGru::set_parameters(std::span<const double> params) {
    if (params.size() != params_.size())
        throw integrity_error("parameter count mismatch: got " +
                              std::to_string(params.size()) + ", expected " +
                              std::to_string(params_.size()));
    std::copy(params.begin(), params.end(), params_.begin());
}

// ---------------------------------------------------------------------
// Encoding helpers

std::vector<std::size_t> TinyGru::encode_input(const std::string& text) const {
    std::vector<std::size_t> ids = vocab_.encode(text);
    if (ids.size() > opt_.max_input_len)
        ids.erase(ids.begin(),
                  ids.end() - static_cast<std::ptrdiff_t>(opt_.max_input_len));
    ids.push_back(Vocab::eos_id);  // guarantees at least one encoder state
    return ids;
}

std::vector<std::size_t> TinyGru::encode_target(const std::string& text,
                                                bool warn_truncate) const {
    std::vector<std::size_t> ids = vocab_.encode(text);
    if (ids.size() > opt_.max_target_len) {
        if (warn_truncate)
            log::warn("target exceeds max length " +
                      std::to_string(opt_.max_target_len) + ", truncating: " +
                      text.substr(0, 40));
        ids.resize(opt_.max_target_len);
    }
    ids.push_back(Vocab::eos_id);
    return ids;
}

// ---------------------------------------------------------------------
// Forward passes

namespace {

// Gate rows in the 3h x * matrices are ordered [reset; update; candidate].
void gru_cell_forward(std::span<const double> wi, std::span<const double> wh,
                      std::span<const double> bi, std::span<const double> bh,
                      std::size_t in_dim, std::size_t h,
                      const double* x, const double* h_prev,
                      TinyGru::CellCache* cache, double* h_out,
                      TinyGru::Workspace& ws) {
    ws.gi.resize(3 * h);
    ws.gh.resize(3 * h);
    kernels::matvec(wi, 3 * h, in_dim, {x, in_dim}, ws.gi);
    kernels::matvec(wh, 3 * h, h, {h_prev, h}, ws.gh);
    for (std::size_t i = 0; i < 3 * h; ++i) {
        ws.gi[i] += bi[i];
        ws.gh[i] += bh[i];
    }
    if (cache) {
        cache->r.resize(h);
        cache->z.resize(h);
        cache->n.resize(h);
        cache->q.resize(h);
    }
    for (std::size_t k = 0; k < h; ++k) {
        double r = sigmoid(ws.gi[k] + ws.gh[k]);
        double z = sigmoid(ws.gi[h + k] + ws.gh[h + k]);
        double q = ws.gh[2 * h + k];
        double n = std::tanh(ws.gi[2 * h + k] + r * q);
        h_out[k] = (1.0 - z) * n + z * h_prev[k];
        if (cache) {
            cache->r[k] = r;
            cache->z[k] = z;
            cache->n[k] = n;
            cache->q[k] = q;
        }
    }
}

void gru_cell_backward(std::span<const double> wi, std::span<const double> wh,
                       std::size_t in_dim, std::size_t h,
                       const double* x, const double* h_prev,
                       const TinyGru::CellCache& cc, const double* dh_next,
                       double* dx_add, double* dh_prev_add,
                       std::span<double> dwi, std::span<double> dwh,
                       std::span<double> dbi, std::span<double> dbh,
                       TinyGru::Workspace& ws) {
    ws.g3i.assign(3 * h, 0.0);
    ws.g3h.assign(3 * h, 0.0);
    for (std::size_t k = 0; k < h; ++k) {
        const double dh = dh_next[k];
        const double r = cc.r[k], z = cc.z[k], n = cc.n[k], q = cc.q[k];
        const double dz = dh * (h_prev[k] - n);
        const double dn = dh * (1.0 - z);
        dh_prev_add[k] += dh * z;
        const double dn_raw = dn * (1.0 - n * n);
        const double dr = dn_raw * q;
        const double dq = dn_raw * r;
        const double dr_raw = dr * r * (1.0 - r);
        const double dz_raw = dz * z * (1.0 - z);
        ws.g3i[k] = dr_raw;
        ws.g3i[h + k] = dz_raw;
        ws.g3i[2 * h + k] = dn_raw;
        ws.g3h[k] = dr_raw;
        ws.g3h[h + k] = dz_raw;
        ws.g3h[2 * h + k] = dq;
    }
    ws.tmp_in.assign(in_dim, 0.0);
    kernels::matvec_t(wi, 3 * h, in_dim, ws.g3i, ws.tmp_in);
    for (std::size_t j = 0; j < in_dim; ++j) dx_add[j] += ws.tmp_in[j];
    ws.tmp_h.assign(h, 0.0);
    kernels::matvec_t(wh, 3 * h, h, ws.g3h, ws.tmp_h);
    for (std::size_t k = 0; k < h; ++k) dh_prev_add[k] += ws.tmp_h[k];
    kernels::serial::add_outer(dwi, 3 * h, in_dim, ws.g3i, {x, in_dim});
    kernels::serial::add_outer(dwh, 3 * h, h, ws.g3h, {h_prev, h});
    for (std::size_t i = 0; i < 3 * h; ++i) {
        dbi[i] += ws.g3i[i];
        dbh[i] += ws.g3h[i];
    }
}

}  // namespace

void TinyGru::run_encoder(const std::vector<std::size_t>& input_ids,
                          std::vector<double>& states) const {
    const std::size_t d = opt_.embed_dim;
    const std::size_t h = opt_.hidden_dim;
    const std::size_t T = input_ids.size();
    states.assign(T * h, 0.0);
    std::vector<double> h_prev(h, 0.0);
    Workspace ws;
    auto wi = pspan(layout_.enc_wi, 3 * h * d);
    auto wh = pspan(layout_.enc_wh, 3 * h * h);
    auto bi = pspan(layout_.enc_bi, 3 * h);
    auto bh = pspan(layout_.enc_bh, 3 * h);
    for (std::size_t t = 0; t < T; ++t) {
        const double* x = params_.data() + layout_.embed + input_ids[t] * d;
        gru_cell_forward(wi, wh, bi, bh, d, h, x, h_prev.data(), nullptr,
                         states.data() + t * h, ws);
        std::copy(states.begin() + static_cast<std::ptrdiff_t>(t * h),
                  states.begin() + static_cast<std::ptrdiff_t>((t + 1) * h),
                  h_prev.begin());
    }
}

void TinyGru::decoder_step(const std::vector<double>& enc_states,
                           std::size_t n_enc, std::size_t y_prev,
                           const std::vector<double>& s_prev,
                           std::vector<double>& s_next,
                           std::vector<double>& logprobs,
                           StepCache* cache) const {
    const std::size_t V = vocab_.size();
    const std::size_t d = opt_.embed_dim;
    const std::size_t h = opt_.hidden_dim;

    s_next.assign(h, 0.0);
    Workspace ws;
    const double* x = params_.data() + layout_.embed + y_prev * d;
    CellCache local_cell;
    CellCache* cell = cache ? &cache->cell : &local_cell;
    gru_cell_forward(pspan(layout_.dec_wi, 3 * h * d),
                     pspan(layout_.dec_wh, 3 * h * h),
                     pspan(layout_.dec_bi, 3 * h), pspan(layout_.dec_bh, 3 * h),
                     d, h, x, s_prev.data(), cell, s_next.data(), ws);

    // Dot-product attention over encoder states.
    std::vector<double> alpha(n_enc);
    for (std::size_t t = 0; t < n_enc; ++t) {
        double a = 0.0;
        const double* et = enc_states.data() + t * h;
        for (std::size_t k = 0; k < h; ++k) a += et[k] * s_next[k];
        alpha[t] = a;
    }
    kernels::softmax_inplace(alpha);
    std::vector<double> c(h, 0.0);
    for (std::size_t t = 0; t < n_enc; ++t) {
        const double* et = enc_states.data() + t * h;
        const double at = alpha[t];
        for (std::size_t k = 0; k < h; ++k) c[k] += at * et[k];
    }

    std::vector<double> v(2 * h);
    std::copy(s_next.begin(), s_next.end(), v.begin());
    std::copy(c.begin(), c.end(), v.begin() + static_cast<std::ptrdiff_t>(h));

    std::vector<double> u(d, 0.0);
    kernels::matvec(pspan(layout_.proj_w, d * 2 * h), d, 2 * h, v, u);
    for (std::size_t j = 0; j < d; ++j) u[j] += params_[layout_.proj_b + j];

    logprobs.assign(V, 0.0);
    kernels::matvec(pspan(layout_.embed, V * d), V, d, u, logprobs);
    for (std::size_t w = 0; w < V; ++w)
        logprobs[w] += params_[layout_.out_bias + w];

    if (cache) {
        cache->y_prev = y_prev;
        cache->s = s_next;
        cache->alpha = std::move(alpha);
        cache->c = std::move(c);
        cache->v = std::move(v);
        cache->u = std::move(u);
        cache->p = logprobs;  // still logits; exponentiated below
        kernels::softmax_inplace(cache->p);
    }
    double log_z = 0.0;
    {
        double mx = logprobs[0];
        for (double a : logprobs) mx = std::max(mx, a);
        double sum = 0.0;
        for (double a : logprobs) sum += std::exp(a - mx);
        log_z = mx + std::log(sum);
    }
    for (double& a : logprobs) a -= log_z;
}

// ---------------------------------------------------------------------
// Training

std::size_t TinyGru::forward_backward(
    const std::vector<std::size_t>& input_ids,
    const std::vector<std::size_t>& target_ids, double& nll_sum,
    std::span<double> grad) const {
    const std::size_t V = vocab_.size();
    const std::size_t d = opt_.embed_dim;
    const std::size_t h = opt_.hidden_dim;
    const std::size_t T = input_ids.size();
    const std::size_t m = target_ids.size();
    assert(grad.size() == params_.size());

    // --- encoder forward with caches
    std::vector<CellCache> enc_cells(T);
    std::vector<double> H(T * h, 0.0);
    {
        Workspace ws;
        std::vector<double> h_prev(h, 0.0);
        for (std::size_t t = 0; t < T; ++t) {
            const double* x =
                params_.data() + layout_.embed + input_ids[t] * d;
            gru_cell_forward(pspan(layout_.enc_wi, 3 * h * d),
                             pspan(layout_.enc_wh, 3 * h * h),
                             pspan(layout_.enc_bi, 3 * h),
                             pspan(layout_.enc_bh, 3 * h), d, h, x,
                             h_prev.data(), &enc_cells[t], H.data() + t * h,
                             ws);
            std::copy(H.begin() + static_cast<std::ptrdiff_t>(t * h),
                      H.begin() + static_cast<std::ptrdiff_t>((t + 1) * h),
                      h_prev.begin());
        }
    }

    // --- decoder forward with caches
    std::vector<StepCache> steps(m);
    std::vector<double> s_prev(H.end() - static_cast<std::ptrdiff_t>(h),
                               H.end());
    nll_sum = 0.0;
    {
        std::vector<double> logprobs, s_next;
        for (std::size_t j = 0; j < m; ++j) {
            std::size_t y_prev = j == 0 ? Vocab::bos_id : target_ids[j - 1];
            decoder_step(H, T, y_prev, s_prev, s_next, logprobs, &steps[j]);
            nll_sum -= logprobs[target_ids[j]];
            s_prev = s_next;
        }
    }

    // --- backward
    Workspace ws;
    std::vector<double> dH(T * h, 0.0);
    std::vector<double> ds_carry(h, 0.0);
    std::vector<double> dlogits(V), du(d), dv(2 * h), ds(h), dc(h);
    std::vector<double> dh_prev(h);

    auto grad_at = [&grad](std::size_t off, std::size_t len) {
        return std::span<double>(grad.data() + off, len);
    };

    for (std::size_t j = m; j-- > 0;) {
        const StepCache& sc = steps[j];
        // output layer: logits = E u + b_v
        std::copy(sc.p.begin(), sc.p.end(), dlogits.begin());
        dlogits[target_ids[j]] -= 1.0;
        for (std::size_t w = 0; w < V; ++w)
            grad[layout_.out_bias + w] += dlogits[w];
        kernels::serial::add_outer(grad_at(layout_.embed, V * d), V, d,
                                   dlogits, sc.u);
        std::fill(du.begin(), du.end(), 0.0);
        kernels::matvec_t(pspan(layout_.embed, V * d), V, d, dlogits, du);
        // projection: u = Wp v + bp
        for (std::size_t k = 0; k < d; ++k) grad[layout_.proj_b + k] += du[k];
        kernels::serial::add_outer(grad_at(layout_.proj_w, d * 2 * h), d,
                                   2 * h, du, sc.v);
        std::fill(dv.begin(), dv.end(), 0.0);
        kernels::matvec_t(pspan(layout_.proj_w, d * 2 * h), d, 2 * h, du, dv);
        for (std::size_t k = 0; k < h; ++k) {
            ds[k] = dv[k] + ds_carry[k];
            dc[k] = dv[h + k];
        }
        // attention: alpha = softmax(H s), c = sum alpha_t H_t
        double sum_ad = 0.0;
        std::vector<double> dalpha(T);
        for (std::size_t t = 0; t < T; ++t) {
            const double* et = H.data() + t * h;
            double a = 0.0;
            for (std::size_t k = 0; k < h; ++k) a += et[k] * dc[k];
            dalpha[t] = a;
            sum_ad += sc.alpha[t] * a;
        }
        for (std::size_t t = 0; t < T; ++t) {
            const double da = sc.alpha[t] * (dalpha[t] - sum_ad);
            const double* et = H.data() + t * h;
            double* dHt = dH.data() + t * h;
            for (std::size_t k = 0; k < h; ++k) {
                ds[k] += da * et[k];
                dHt[k] += sc.alpha[t] * dc[k] + da * sc.s[k];
            }
        }
        // decoder cell
        const double* h_prev_vec =
            j == 0 ? H.data() + (T - 1) * h : steps[j - 1].s.data();
        const double* x =
            params_.data() + layout_.embed + sc.y_prev * d;
        std::fill(dh_prev.begin(), dh_prev.end(), 0.0);
        gru_cell_backward(pspan(layout_.dec_wi, 3 * h * d),
                          pspan(layout_.dec_wh, 3 * h * h), d, h, x,
                          h_prev_vec, sc.cell, ds.data(),
                          grad.data() + layout_.embed + sc.y_prev * d,
                          dh_prev.data(), grad_at(layout_.dec_wi, 3 * h * d),
                          grad_at(layout_.dec_wh, 3 * h * h),
                          grad_at(layout_.dec_bi, 3 * h),
                          grad_at(layout_.dec_bh, 3 * h), ws);
        if (j == 0) {
            for (std::size_t k = 0; k < h; ++k) dH[(T - 1) * h + k] += dh_prev[k];
        } else {
            ds_carry = dh_prev;
        }
    }

    // encoder backward
    std::vector<double> dh(h, 0.0);
    std::vector<double> zeros(h, 0.0);
    for (std::size_t t = T; t-- > 0;) {
        for (std::size_t k = 0; k < h; ++k) dh[k] += dH[t * h + k];
        const double* h_prev_vec = t == 0 ? zeros.data() : H.data() + (t - 1) * h;
        const double* x = params_.data() + layout_.embed + input_ids[t] * d;
        std::fill(dh_prev.begin(), dh_prev.end(), 0.0);
        gru_cell_backward(pspan(layout_.enc_wi, 3 * h * d),
                          pspan(layout_.enc_wh, 3 * h * h), d, h, x,
                          h_prev_vec, enc_cells[t], dh.data(),
                          grad.data() + layout_.embed + input_ids[t] * d,
                          dh_prev.data(), grad_at(layout_.enc_wi, 3 * h * d),
                          grad_at(layout_.enc_wh, 3 * h * h),
                          grad_at(layout_.enc_bi, 3 * h),
                          grad_at(layout_.enc_bh, 3 * h), ws);
        dh = dh_prev;
    }

    return m;
}

std::pair<double, std::vector<double>> TinyGru::loss_and_grad(
    const std::vector<TrainPair>& batch) const {
    if (batch.empty()) throw argument_error("train_step: empty batch");

    const std::size_t B = batch.size();
    std::vector<std::vector<std::size_t>> inputs(B), targets(B);
    for (std::size_t i = 0; i < B; ++i) {
        if (metrics::tokenize(batch[i].second, {}).empty())
            throw argument_error("train_step: empty target in batch");
        inputs[i] = encode_input(batch[i].first);
        targets[i] = encode_target(batch[i].second, /*warn_truncate=*/true);
    }

    if (grad_pool_.size() < B) grad_pool_.resize(B);
    std::vector<double> nlls(B, 0.0);
    std::vector<std::size_t> counts(B, 0);

    // Per-pair gradients are independent; summing them in pair order keeps
    // the result identical for any thread count.
#pragma omp parallel for schedule(static) num_threads(kernels::threads())
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(B); ++i) {
        auto& g = grad_pool_[static_cast<std::size_t>(i)];
        g.assign(params_.size(), 0.0);
        counts[i] = forward_backward(inputs[i], targets[i], nlls[i], g);
    }

    std::size_t total_tokens = 0;
    double total_nll = 0.0;
    for (std::size_t i = 0; i < B; ++i) {
        total_tokens += counts[i];
        total_nll += nlls[i];
    }

    std::vector<double> grad(params_.size(), 0.0);
    kernels::reduce_sum(std::span<const std::vector<double>>(grad_pool_.data(),
                                                             B),
                        grad);
    const double scale = 1.0 / static_cast<double>(total_tokens);
    for (double& g : grad) g *= scale;
    return {total_nll * scale, std::move(grad)};
}

void TinyGru::begin_training(double lr, std::size_t total_steps) {
    lr_ = lr;
    schedule_total_ = total_steps;
    adam_step_ = 0;
    adam_m_.assign(params_.size(), 0.0);
    adam_v_.assign(params_.size(), 0.0);
}

void TinyGru::adam_update(std::span<const double> grad) {
    if (adam_m_.size() != params_.size())
        throw config_error("call begin_training before training steps");
    ++adam_step_;
    double lr_t = lr_;
    if (schedule_total_ > 0) {
        double frac = 1.0 - static_cast<double>(adam_step_ - 1) /
                                static_cast<double>(schedule_total_);
        lr_t = lr_ * std::max(0.0, frac);
    }
    const double b1 = opt_.adam_beta1, b2 = opt_.adam_beta2;
    const double eps = opt_.adam_eps;
    const double bc1 = 1.0 - std::pow(b1, static_cast<double>(adam_step_));
    const double bc2 = 1.0 - std::pow(b2, static_cast<double>(adam_step_));
    double* m = adam_m_.data();
    double* v = adam_v_.data();
    double* p = params_.data();
    const double* g = grad.data();
#pragma omp parallel for schedule(static) num_threads(kernels::threads())
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(params_.size());
         ++i) {
        m[i] = b1 * m[i] + (1.0 - b1) * g[i];
        v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
        const double mhat = m[i] / bc1;
        const double vhat = v[i] / bc2;
        p[i] -= lr_t * mhat / (std::sqrt(vhat) + eps);
    }
}

double TinyGru::train_step(const std::vector<TrainPair>& batch) {
    auto [loss, grad] = loss_and_grad(batch);
    adam_update(grad);
    return loss;
}

double TinyGru::reinforce_step(const std::string& input,
                               const std::string& target, double reward) {
    // An empty candidate is legal here: it scores as a bare <eos>.
    std::vector<std::size_t> input_ids = encode_input(input);
    std::vector<std::size_t> target_ids =
        encode_target(target, /*warn_truncate=*/false);
    std::vector<double> grad(params_.size(), 0.0);
    double nll_sum = 0.0;
    forward_backward(input_ids, target_ids, nll_sum, grad);
    // L = -reward * log p(target) = reward * nll_sum
    for (double& g : grad) g *= reward;
    adam_update(grad);
    return reward * nll_sum;
}

// ---------------------------------------------------------------------
// Decoding

double TinyGru::score_sequence(const std::string& input,
                               const std::string& target) const {
    std::vector<std::size_t> input_ids = encode_input(input);
    std::vector<std::size_t> target_ids =
        encode_target(target, /*warn_truncate=*/false);
    std::vector<double> H;
    run_encoder(input_ids, H);
    const std::size_t h = opt_.hidden_dim;
    std::vector<double> s_prev(H.end() - static_cast<std::ptrdiff_t>(h),
                               H.end());
    std::vector<double> s_next, logprobs;
    double sum = 0.0;
    for (std::size_t j = 0; j < target_ids.size(); ++j) {
        std::size_t y_prev = j == 0 ? Vocab::bos_id : target_ids[j - 1];
        decoder_step(H, input_ids.size(), y_prev, s_prev, s_next, logprobs,
                     nullptr);
        sum += logprobs[target_ids[j]];
        s_prev = s_next;
    }
    return sum / static_cast<double>(target_ids.size());
}

std::vector<double> TinyGru::next_token_logprobs(
    const std::string& input, const std::vector<std::string>& prefix_words) const {
    std::vector<std::size_t> input_ids = encode_input(input);
    std::vector<double> H;
    run_encoder(input_ids, H);
    const std::size_t h = opt_.hidden_dim;
    std::vector<double> s_prev(H.end() - static_cast<std::ptrdiff_t>(h),
                               H.end());
    std::vector<double> s_next, logprobs;
    std::size_t y_prev = Vocab::bos_id;
    for (const auto& w : prefix_words) {
        decoder_step(H, input_ids.size(), y_prev, s_prev, s_next, logprobs,
                     nullptr);
        s_prev = s_next;
        y_prev = vocab_.id(w);
    }
    decoder_step(H, input_ids.size(), y_prev, s_prev, s_next, logprobs,
                 nullptr);
    return logprobs;
}

std::vector<ScoredQuery> TinyGru::generate(const std::string& input,
                                           const DecodeConfig& cfg) const {
    const DecodeConfig dc = cfg.validated();
    std::vector<std::size_t> input_ids = encode_input(input);
    std::vector<double> H;
    run_encoder(input_ids, H);
    const std::size_t n_enc = input_ids.size();
    const std::size_t h = opt_.hidden_dim;
    const std::size_t V = vocab_.size();
    std::vector<double> s0(H.end() - static_cast<std::ptrdiff_t>(h), H.end());

    if (dc.strategy == DecodeStrategy::GREEDY) {
        std::vector<std::size_t> toks;
        std::vector<double> s_prev = s0, s_next, logprobs;
        double sum = 0.0;
        std::size_t count = 0;
        for (int step = 1; step <= dc.max_len + 1; ++step) {
            std::size_t y_prev = toks.empty() ? Vocab::bos_id : toks.back();
            decoder_step(H, n_enc, y_prev, s_prev, s_next, logprobs, nullptr);
            std::size_t best = Vocab::eos_id;
            if (step <= dc.max_len) {
                double best_lp = -1e300;
                for (std::size_t w = 0; w < V; ++w) {
                    if (w == Vocab::bos_id) continue;
                    if (logprobs[w] > best_lp) {
                        best_lp = logprobs[w];
                        best = w;
                    }
                }
            }
            sum += logprobs[best];
            count = static_cast<std::size_t>(step);
            if (best == Vocab::eos_id) break;
            toks.push_back(best);
            s_prev = s_next;
        }
        return {{vocab_.decode(toks), sum / static_cast<double>(count)}};
    }

    // Beam search. Hypotheses are pruned on cumulative log-probability;
    // finished hypotheses are ranked by the length-normalized score.
    struct Hyp {
        std::vector<std::size_t> toks;
        double logp = 0.0;
        std::vector<double> s;
    };
    struct Fin {
        std::string text;
        double norm = 0.0;
        int step = 0;
    };
    std::vector<Hyp> live;
    live.push_back({{}, 0.0, s0});
    std::vector<Fin> finished;

    std::vector<std::vector<double>> next_states;
    std::vector<std::vector<double>> lps;
    for (int step = 1; step <= dc.max_len + 1 && !live.empty(); ++step) {
        next_states.assign(live.size(), {});
        lps.assign(live.size(), {});
        for (std::size_t i = 0; i < live.size(); ++i) {
            std::size_t y_prev =
                live[i].toks.empty() ? Vocab::bos_id : live[i].toks.back();
            decoder_step(H, n_enc, y_prev, live[i].s, next_states[i], lps[i],
                         nullptr);
        }
        struct Cand {
            std::size_t hyp;
            std::size_t tok;
            double logp;
        };
        std::vector<Cand> cands;
        for (std::size_t i = 0; i < live.size(); ++i) {
            double eos_lp = live[i].logp + lps[i][Vocab::eos_id];
            finished.push_back({vocab_.decode(live[i].toks),
                                eos_lp / step, step});
            if (step > dc.max_len) continue;  // only <eos> is allowed now
            for (std::size_t w = 0; w < V; ++w) {
                if (w == Vocab::bos_id || w == Vocab::eos_id) continue;
                cands.push_back({i, w, live[i].logp + lps[i][w]});
            }
        }
        std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
            if (a.logp != b.logp) return a.logp > b.logp;
            if (a.hyp != b.hyp) return a.hyp < b.hyp;
            return a.tok < b.tok;
        });
        std::vector<Hyp> next_live;
        for (const Cand& c : cands) {
            if (static_cast<int>(next_live.size()) >= dc.beam_size) break;
            Hyp nh;
            nh.toks = live[c.hyp].toks;
            nh.toks.push_back(c.tok);
            nh.logp = c.logp;
            nh.s = next_states[c.hyp];
            next_live.push_back(std::move(nh));
        }
        live = std::move(next_live);
    }

    // Deduplicate by surface string; ties in score favor the hypothesis
    // that finished earlier.
    std::sort(finished.begin(), finished.end(), [](const Fin& a, const Fin& b) {
        if (a.norm != b.norm) return a.norm > b.norm;
        if (a.step != b.step) return a.step < b.step;
        return a.text < b.text;
    });
    std::vector<ScoredQuery> out;
    std::vector<std::string> seen;
    for (const Fin& f : finished) {
        if (std::find(seen.begin(), seen.end(), f.text) != seen.end())
            continue;
        seen.push_back(f.text);
        out.push_back({f.text, f.norm});
        if (static_cast<int>(out.size()) >= dc.num_return) break;
    }
    return out;
}

}  // namespace semidqg::seq2seq
