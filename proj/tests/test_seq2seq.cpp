#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <random>

#include "semidqg/errors.hpp"
#include "semidqg/tiny_gru.hpp"

using namespace semidqg;
using namespace semidqg::seq2seq;

namespace {

TinyGru make_toy_model(std::uint64_t seed = 3,
                       std::vector<std::string> extra = {}) {
    std::vector<std::string> texts = {
        "user: hi there <sep> system: hello friend",
        "user: tell me about ireland <sep> response: it is an island",
        "ireland weather bowling javelin throw",
    };
    for (auto& t : extra) texts.push_back(t);
    Vocab v = Vocab::build(texts);
    TinyGru::Options opt;
    opt.embed_dim = 10;
    opt.hidden_dim = 12;
    opt.seed = seed;
    return TinyGru(std::move(v), opt);
}

}  // namespace

TEST_CASE("vocab round trip and unk handling") {
    Vocab v = Vocab::build({"a b c a", "b a"});
    CHECK(v.id("a") != Vocab::unk_id);
    CHECK(v.id("zzz") == Vocab::unk_id);
    CHECK(v.token(Vocab::eos_id) == "<eos>");
    auto ids = v.encode("a b zzz");
    CHECK(v.decode(ids) == "a b <unk>");

    Vocab back = Vocab::from_json(v.to_json());
    CHECK(back.size() == v.size());
    CHECK(back.id("c") == v.id("c"));
}

TEST_CASE("uniform model gives ln(vocab) loss and scores") {
    // Four-token vocabulary: specials plus one word. All-zero parameters
    // make every output distribution uniform.
    Vocab v = Vocab::build({"w"});
    REQUIRE(v.size() == 4);
    TinyGru::Options opt;
    opt.embed_dim = 6;
    opt.hidden_dim = 7;
    TinyGru model(std::move(v), opt);
    std::vector<double> zeros(model.parameter_count(), 0.0);
    model.set_parameters(zeros);

    model.begin_training(0.0, 0);
    // one-token target -> tokens are {w, <eos>}, each -log(1/4)
    double loss = model.train_step({{"w", "w"}});
    CHECK(loss == doctest::Approx(std::log(4.0)).epsilon(1e-12));

    // target of length 3 under the uniform model scores ln(1/4)
    double sc = model.score_sequence("w", "w w w");
    CHECK(sc == doctest::Approx(-std::log(4.0)).epsilon(1e-12));
}

TEST_CASE("gradients match central finite differences") {
    TinyGru model = make_toy_model(11);
    std::vector<TrainPair> batch = {
        {"user: tell me about ireland", "ireland"},
        {"user: hi there <sep> system: hello friend", "hello ireland"},
    };
    auto [loss, grad] = model.loss_and_grad(batch);
    CHECK(loss > 0.0);

    std::vector<double> params = model.parameters();
    std::mt19937_64 rng(7);
    const double eps = 1e-5;
    // Central differences cannot resolve gradients below the rounding
    // noise of the loss (~1e-10 here), so components that small are held
    // to an absolute tolerance instead of a relative one.
    const double measurable = 1e-6;
    int checked = 0;
    double worst = 0.0;
    int guard = 0;
    while (checked < 25 && ++guard < 10000) {
        std::size_t i = rng() % params.size();
        if (std::abs(grad[i]) < measurable) continue;
        std::vector<double> p = params;
        p[i] = params[i] + eps;
        model.set_parameters(p);
        double lp = model.loss_and_grad(batch).first;
        p[i] = params[i] - eps;
        model.set_parameters(p);
        double lm = model.loss_and_grad(batch).first;
        double fd = (lp - lm) / (2 * eps);
        double rel = std::abs(fd - grad[i]) /
                     std::max(std::abs(fd), std::abs(grad[i]));
        worst = std::max(worst, rel);
        CHECK(rel < 1e-4);
        ++checked;
    }
    CHECK(checked == 25);
    model.set_parameters(params);
    MESSAGE("worst relative error: ", worst);

    // Directional derivative along a dense random direction exercises
    // every parameter at once.
    std::vector<double> dir(params.size());
    std::mt19937_64 r3(99);
    double norm = 0.0;
    for (auto& d : dir) {
        d = static_cast<double>(r3() >> 11) * 0x1.0p-53 - 0.5;
        norm += d * d;
    }
    norm = std::sqrt(norm);
    for (auto& d : dir) d /= norm;
    double analytic = 0.0;
    for (std::size_t i = 0; i < dir.size(); ++i) analytic += grad[i] * dir[i];
    std::vector<double> p = params;
    for (std::size_t i = 0; i < p.size(); ++i) p[i] = params[i] + eps * dir[i];
    model.set_parameters(p);
    double lp = model.loss_and_grad(batch).first;
    for (std::size_t i = 0; i < p.size(); ++i) p[i] = params[i] - eps * dir[i];
    model.set_parameters(p);
    double lm = model.loss_and_grad(batch).first;
    double fd = (lp - lm) / (2 * eps);
    CHECK(std::abs(fd - analytic) / std::max(std::abs(analytic), 1e-12) <
          1e-4);
    model.set_parameters(params);
}

TEST_CASE("per-token distributions are normalized") {
    TinyGru model = make_toy_model(5);
    auto lp = model.next_token_logprobs("user: hi there", {"ireland"});
    double sum = 0.0;
    for (double l : lp) sum += std::exp(l);
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("repeated training on one pair drives loss toward zero") {
    TinyGru model = make_toy_model(17);
    model.begin_training(0.01, 0);
    std::vector<TrainPair> batch = {{"user: tell me about ireland", "ireland"}};
    double first = 0.0, last = 0.0;
    for (int step = 0; step < 200; ++step) {
        last = model.train_step(batch);
        if (step == 0) first = last;
    }
    CHECK(last < first);
    CHECK(last < 0.05);
}

TEST_CASE("greedy decode returns one query; beam returns distinct sorted") {
    TinyGru model = make_toy_model(23);
    DecodeConfig greedy;
    greedy.strategy = DecodeStrategy::GREEDY;
    greedy.max_len = 5;
    auto gq = model.generate("user: hi there", greedy);
    REQUIRE(gq.size() == 1);
    CHECK(gq[0].norm_logprob <= 0.0);

    DecodeConfig beam;
    beam.strategy = DecodeStrategy::BEAM;
    beam.beam_size = 5;
    beam.num_return = 3;
    beam.max_len = 4;
    auto bq = model.generate("user: hi there", beam);
    REQUIRE(bq.size() == 3);
    for (std::size_t i = 0; i < bq.size(); ++i) {
        CHECK(bq[i].norm_logprob <= 0.0);
        for (std::size_t j = i + 1; j < bq.size(); ++j) {
            CHECK(bq[i].text != bq[j].text);
            CHECK(bq[i].norm_logprob >= bq[j].norm_logprob);
        }
    }

    // determinism
    auto bq2 = model.generate("user: hi there", beam);
    REQUIRE(bq2.size() == bq.size());
    for (std::size_t i = 0; i < bq.size(); ++i) {
        CHECK(bq2[i].text == bq[i].text);
        CHECK(bq2[i].norm_logprob == bq[i].norm_logprob);
    }
}

TEST_CASE("score_sequence matches generate's reported score") {
    TinyGru model = make_toy_model(29);
    DecodeConfig beam;
    beam.strategy = DecodeStrategy::BEAM;
    beam.beam_size = 4;
    beam.num_return = 4;
    beam.max_len = 4;
    for (const auto& q : model.generate("user: tell me about ireland", beam)) {
        double sc = model.score_sequence("user: tell me about ireland", q.text);
        CHECK(sc == doctest::Approx(q.norm_logprob).epsilon(1e-9));
    }
}

TEST_CASE("decode config validation") {
    DecodeConfig bad;
    bad.strategy = DecodeStrategy::BEAM;
    bad.beam_size = 2;
    bad.num_return = 5;
    CHECK_THROWS_AS(bad.validated(), argument_error);

    DecodeConfig greedy;
    greedy.strategy = DecodeStrategy::GREEDY;
    greedy.num_return = 7;
    CHECK(greedy.validated().num_return == 1);
}

TEST_CASE("checkpoint round trip preserves behavior; corrupt blob detected") {
    namespace fs = std::filesystem;
    TinyGru model = make_toy_model(31);
    model.begin_training(0.01, 0);
    for (int i = 0; i < 20; ++i)
        model.train_step({{"user: tell me about ireland", "ireland"}});

    CheckpointMeta meta;
    meta.stage_tag = StageTag::STAGE1;
    meta.config_hash = "cafebabe";
    meta.seed = 31;
    meta.metrics_at_save["dev_uni_f1"] = 55.5;

    fs::path dir = fs::temp_directory_path() / "semidqg_ckpt_test";
    fs::create_directories(dir);
    std::string path = (dir / "model.ckpt").string();
    save_checkpoint(model, meta, path);

    // header readable without loading the blob
    CheckpointHeader h = read_checkpoint_header(path);
    CHECK(h.meta.stage_tag == StageTag::STAGE1);
    CHECK(h.meta.config_hash == "cafebabe");
    CHECK(h.meta.metrics_at_save.at("dev_uni_f1") == 55.5);
    CHECK(h.param_count == model.parameter_count());

    auto loaded = load_checkpoint(path, std::string("cafebabe"));
    DecodeConfig greedy;
    auto a = model.generate("user: tell me about ireland", greedy);
    auto b = loaded->generate("user: tell me about ireland", greedy);
    REQUIRE(a.size() == b.size());
    CHECK(a[0].text == b[0].text);
    CHECK(a[0].norm_logprob == b[0].norm_logprob);

    CHECK_THROWS_AS(load_checkpoint(path, std::string("deadbeef")),
                    integrity_error);

    // flip one byte in the blob
    {
        std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
        f.seekp(-1, std::ios::end);
        char c;
        f.seekg(-1, std::ios::end);
        f.get(c);
        f.seekp(-1, std::ios::end);
        c = static_cast<char>(c ^ 0x01);
        f.put(c);
    }
    CHECK_THROWS_AS(load_checkpoint(path), integrity_error);
}

TEST_CASE("identical seeds give identical training trajectories") {
    auto run = [](std::uint64_t seed) {
        TinyGru model = make_toy_model(seed);
        model.begin_training(0.005, 50);
        std::vector<TrainPair> batch = {
            {"user: tell me about ireland", "ireland"},
            {"user: hi there", "hello"},
        };
        for (int i = 0; i < 50; ++i) model.train_step(batch);
        return model.parameters();
    };
    auto p1 = run(42);
    auto p2 = run(42);
    CHECK(p1 == p2);
    auto p3 = run(43);
    CHECK(p1 != p3);
}
