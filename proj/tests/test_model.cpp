#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "fakegaze/errors.hpp"
#include "fakegaze/model.hpp"
#include "fakegaze/utils.hpp"

using namespace fakegaze;

namespace {

TensorT<float> random_frame(const ModelSpec& spec, std::uint64_t seed) {
    TensorT<float> t({3, static_cast<std::size_t>(spec.input_h),
                      static_cast<std::size_t>(spec.input_w)});
    Rng rng(seed);
    for (std::size_t i = 0; i < t.numel(); ++i) {
        t.data()[i] = static_cast<float>(rng.uniform(0.0, 1.0));
    }
    return t;
}

double sigmoid_ref(double z) { return 1.0 / (1.0 + std::exp(-z)); }

}  // namespace

TEST_CASE("layer counts match the documented architectures") {
    CHECK(count_layers(make_spec(Family::resnet, Preset::full)) == std::pair<int, int>(48, 2));
    CHECK(count_layers(make_spec(Family::xception, Preset::full)) == std::pair<int, int>(36, 2));
    CHECK(count_layers(make_spec(Family::resnet, Preset::mini)) == std::pair<int, int>(8, 2));
    CHECK(count_layers(make_spec(Family::xception, Preset::mini)) == std::pair<int, int>(8, 2));
}

TEST_CASE("count_layers matches the built network's conv tensor count") {
    for (Family f : {Family::resnet, Family::xception}) {
        for (Preset p : {Preset::mini, Preset::full}) {
            const ModelSpec spec = make_spec(f, p);
            Model m(spec, 1);
            CHECK(m.conv_count() == count_layers(spec).first);
            // Count main-path conv layers in the table by name: a regular conv
            // owns a "/w", a separable conv a "/dw" + "/pw" pair; projection
            // shortcuts are named "proj" and are excluded by convention.
            int convs = 0;
            int dense = 0;
            for (const auto& nt : m.table()) {
                const std::string& n = nt.name;
                const bool proj = n.find("proj") != std::string::npos;
                if (!proj && (n.size() > 2 && n.rfind("/w") == n.size() - 2)) {
                    if (n.rfind("head/", 0) == 0) {
                        ++dense;
                    } else {
                        ++convs;
                    }
                }
                if (!proj && n.size() > 3 && n.rfind("/dw") == n.size() - 3) ++convs;
            }
            CHECK(convs == count_layers(spec).first);
            CHECK(dense == count_layers(spec).second);
        }
    }
}

TEST_CASE("every block of every preset is a valid residual unit") {
    for (Family f : {Family::resnet, Family::xception}) {
        for (Preset p : {Preset::mini, Preset::full}) {
            const ModelSpec spec = make_spec(f, p);
            const GraphDef g = make_graph(spec);
            CHECK(validate_graph(spec) == static_cast<int>(g.blocks.size()));
            for (const auto& b : g.blocks) {
                // Residually connected: identity shortcut when shapes allow,
                // a projection otherwise — never no shortcut at all.
                CHECK((b.identity_shortcut_valid() || b.has_proj));
            }
        }
    }
}

TEST_CASE("fingerprints are stable and distinct across the four presets") {
    // Frozen values: a change here means the serialized weight format broke
    // compatibility and every stored .fgwt file is invalidated.
    CHECK(make_spec(Family::resnet, Preset::mini).fingerprint() == 0x7647b29480c5b209ull);
    CHECK(make_spec(Family::resnet, Preset::full).fingerprint() == 0x5d2c977ab59c9077ull);
    CHECK(make_spec(Family::xception, Preset::mini).fingerprint() == 0xb85cc01fbfbd1304ull);
    CHECK(make_spec(Family::xception, Preset::full).fingerprint() == 0xe0b66d830d7a10b2ull);

    std::set<std::uint64_t> fps;
    for (Family f : {Family::resnet, Family::xception}) {
        for (Preset p : {Preset::mini, Preset::full}) {
            fps.insert(make_spec(f, p).fingerprint());
        }
    }
    CHECK(fps.size() == 4);
}

TEST_CASE("fingerprint is the FNV-1a hash of the canonical string") {
    const ModelSpec spec = make_spec(Family::resnet, Preset::mini);
    CHECK(spec.fingerprint() == fnv1a64(spec.canonical()));
    CHECK(spec.canonical().find("family=resnet") != std::string::npos);
    CHECK(spec.canonical().find("preset=mini") != std::string::npos);
}

TEST_CASE("initialization is deterministic in the seed") {
    const ModelSpec spec = make_spec(Family::xception, Preset::mini);
    Model a(spec, 42);
    Model b(spec, 42);
    Model c(spec, 43);
    REQUIRE(a.table().size() == b.table().size());
    bool all_equal = true;
    bool any_diff_from_c = false;
    for (std::size_t i = 0; i < a.table().size(); ++i) {
        const auto& ta = a.table()[i].tensor;
        const auto& tb = b.table()[i].tensor;
        const auto& tc = c.table()[i].tensor;
        REQUIRE(ta.shape() == tb.shape());
        for (std::size_t j = 0; j < ta.numel(); ++j) {
            if (ta.data()[j] != tb.data()[j]) all_equal = false;
            if (ta.data()[j] != tc.data()[j]) any_diff_from_c = true;
        }
    }
    CHECK(all_equal);
    CHECK(any_diff_from_c);
}

TEST_CASE("He-uniform bounds, zero biases, unit batch-norm at init") {
    const ModelSpec spec = make_spec(Family::resnet, Preset::mini);
    Model m(spec, 7);

    // First conv: 3x3 over 3 channels -> fan_in 27.
    const auto& w = m.tensor("b0/conv0/w");
    const double limit = std::sqrt(6.0 / 27.0);
    bool in_bounds = true;
    bool spread = false;
    for (std::size_t i = 0; i < w.numel(); ++i) {
        if (std::abs(w.data()[i]) > limit) in_bounds = false;
        if (std::abs(w.data()[i]) > 0.5 * limit) spread = true;
    }
    CHECK(in_bounds);
    CHECK(spread);

    for (const auto& nt : m.table()) {
        const std::string& n = nt.name;
        auto all_are = [&](float v) {
            return std::all_of(nt.tensor.data(), nt.tensor.data() + nt.tensor.numel(),
                               [&](float x) { return x == v; });
        };
        if (n.size() > 2 && n.rfind("/b") == n.size() - 2) CHECK(all_are(0.0f));
        if (n.find("/scale") != std::string::npos) CHECK(all_are(1.0f));
        if (n.find("/shift") != std::string::npos) CHECK(all_are(0.0f));
        if (n.find("/rmean") != std::string::npos) CHECK(all_are(0.0f));
        if (n.find("/rvar") != std::string::npos) CHECK(all_are(1.0f));
    }
}

TEST_CASE("trainable tensors exclude running statistics") {
    const ModelSpec spec = make_spec(Family::resnet, Preset::mini);
    Model m(spec, 0);
    const auto names = m.trainable_names();
    CHECK(names.size() == 37);
    for (const auto& n : names) {
        CHECK(n.find("rmean") == std::string::npos);
        CHECK(n.find("rvar") == std::string::npos);
    }
    CHECK(m.trainable_tensors().size() == names.size());
}

TEST_CASE("forward produces one logit per batch row") {
    for (Family f : {Family::resnet, Family::xception}) {
        const ModelSpec spec = make_spec(f, Preset::mini);
        Model m(spec, 3);
        Tape tape;
        Tensor x({2, 3, static_cast<std::size_t>(spec.input_h),
                  static_cast<std::size_t>(spec.input_w)});
        Rng rng(5);
        for (std::size_t i = 0; i < x.numel(); ++i) {
            x.data()[i] = static_cast<float>(rng.uniform(0.0, 1.0));
        }
        Var logits = m.forward(tape, tape.leaf(x, false), RunMode::inference);
        CHECK(tape.value(logits).shape() == Shape{2, 1});
        CHECK(tape.value(logits).all_finite());
    }
}

TEST_CASE("batched forward is channel-strict but spatially agnostic") {
    Model m(make_spec(Family::resnet, Preset::mini), 0);
    // Wrong channel count fails inside the first convolution.
    Tape t1;
    Tensor wrong({1, 4, 32, 32});
    CHECK_THROWS_AS(m.forward(t1, t1.leaf(wrong, false), RunMode::inference), ContractError);
    // Other spatial sizes are fine: global average pooling erases H and W,
    // which is what lets gradient checks run the full graph on small inputs.
    Tape t2;
    Tensor small({1, 3, 16, 16});
    Var out = m.forward(t2, t2.leaf(small, false), RunMode::inference);
    CHECK(t2.value(out).shape() == Shape{1, 1});
}

TEST_CASE("inference forward is a pure function of weights and input") {
    const ModelSpec spec = make_spec(Family::xception, Preset::mini);
    Model m(spec, 11);
    const TensorT<float> frame = random_frame(spec, 21);
    const float a = m.forward_frame(frame);
    const float b = m.forward_frame(frame);
    CHECK(a == b);
}

TEST_CASE("training mode moves batch-norm running statistics, inference does not") {
    const ModelSpec spec = make_spec(Family::resnet, Preset::mini);
    Model m(spec, 1);
    const Tensor before = m.tensor("b0/bn0/rmean").clone();

    Tape t1;
    Tensor x({2, 3, 32, 32});
    Rng rng(9);
    for (std::size_t i = 0; i < x.numel(); ++i) {
        x.data()[i] = static_cast<float>(rng.uniform(0.0, 1.0));
    }
    m.forward(t1, t1.leaf(x, false), RunMode::inference);
    const Tensor& after_inference = m.tensor("b0/bn0/rmean");
    for (std::size_t i = 0; i < before.numel(); ++i) {
        CHECK(after_inference.data()[i] == before.data()[i]);
    }

    Tape t2;
    m.forward(t2, t2.leaf(x, false), RunMode::training);
    const Tensor& after_training = m.tensor("b0/bn0/rmean");
    bool moved = false;
    for (std::size_t i = 0; i < before.numel(); ++i) {
        if (after_training.data()[i] != before.data()[i]) moved = true;
    }
    CHECK(moved);
}

TEST_CASE("gradient flows to every trainable parameter of the mini presets") {
    for (Family f : {Family::resnet, Family::xception}) {
        const ModelSpec spec = make_spec(f, Preset::mini);
        for (std::uint64_t seed = 0; seed < 5; ++seed) {
            Model m(spec, seed);
            std::vector<Tensor> params = m.trainable_tensors();
            Tape tape;
            std::vector<Var> bound;
            bound.reserve(params.size());
            for (auto& p : params) bound.push_back(tape.leaf(p, true));

            Tensor x({2, 3, 32, 32});
            Rng rng(mix64(seed, 77));
            for (std::size_t i = 0; i < x.numel(); ++i) {
                x.data()[i] = static_cast<float>(rng.uniform(0.0, 1.0));
            }
            std::vector<int> labels = {0, 1};
            Var logits = m.forward(tape, tape.leaf(x, false), RunMode::training, &bound);
            Var probs = tape.sigmoid(tape.reshape(logits, {2}));
            Var loss = tape.focal_loss(probs, labels, FocalParams{});
            tape.backward(loss);

            const auto names = m.trainable_names();
            for (std::size_t t = 0; t < bound.size(); ++t) {
                const Tensor g = tape.grad(bound[t]);
                bool nonzero = false;
                for (std::size_t i = 0; i < g.numel(); ++i) {
                    if (g.data()[i] != 0.0f) nonzero = true;
                }
                INFO("family ", family_name(f), " seed ", seed, " tensor ", names[t]);
                CHECK(nonzero);
            }
        }
    }
}

TEST_CASE("capture observer sees every conv ordinal once, in order") {
    const ModelSpec spec = make_spec(Family::resnet, Preset::mini);
    Model m(spec, 2);
    Tape tape;
    Tensor x({1, 3, 32, 32});
    Rng rng(13);
    for (std::size_t i = 0; i < x.numel(); ++i) {
        x.data()[i] = static_cast<float>(rng.uniform(0.0, 1.0));
    }
    std::vector<int> seen;
    std::vector<std::size_t> channels;
    CaptureFn<float> capture = [&](int ordinal, const TensorT<float>& value) {
        seen.push_back(ordinal);
        REQUIRE(value.shape().size() == 4);
        channels.push_back(value.shape()[1]);
    };
    m.forward(tape, tape.leaf(x, false), RunMode::inference, nullptr, capture);
    REQUIRE(seen.size() == 8);
    for (int i = 0; i < 8; ++i) CHECK(seen[static_cast<std::size_t>(i)] == i + 1);
    CHECK(channels.front() == 8);   // stem width
    CHECK(channels.back() == 32);   // final stage width
}

TEST_CASE("mean_logit_probability fuses logits before the sigmoid") {
    // Mean of {-2, 2} is 0 -> probability exactly 0.5; averaging the
    // sigmoids instead would give (sigmoid(-2)+sigmoid(2))/2 = 0.5 too, so
    // pin an asymmetric case as well.
    CHECK(mean_logit_probability({-2.0, 2.0}) == doctest::Approx(0.5).epsilon(1e-12));
    const double asym = mean_logit_probability({0.0, 4.0});
    CHECK(asym == doctest::Approx(sigmoid_ref(2.0)).epsilon(1e-12));
    CHECK(asym != doctest::Approx(0.5 * (sigmoid_ref(0.0) + sigmoid_ref(4.0))).epsilon(1e-6));
    CHECK(mean_logit_probability({1.25}) == doctest::Approx(sigmoid_ref(1.25)).epsilon(1e-12));
    CHECK_THROWS_AS(mean_logit_probability({}), ContractError);
}

TEST_CASE("predict_video is deterministic and lies in (0,1)") {
    const ModelSpec spec = make_spec(Family::resnet, Preset::mini);
    Model m(spec, 4);
    std::vector<TensorT<float>> frames;
    for (int i = 0; i < 8; ++i) frames.push_back(random_frame(spec, 100 + i));
    const double p1 = predict_video(m, frames, 5);
    const double p2 = predict_video(m, frames, 5);
    CHECK(p1 == p2);
    CHECK(p1 > 0.0);
    CHECK(p1 < 1.0);
}

TEST_CASE("predict_video is invariant to duplicating every frame") {
    // With 8 source frames the evenly spaced picks from the doubled clip land on
    // copies of the original picks, so the probability must match bit-exactly.
    const ModelSpec spec = make_spec(Family::resnet, Preset::mini);
    Model m(spec, 6);
    std::vector<TensorT<float>> frames;
    for (int i = 0; i < 8; ++i) frames.push_back(random_frame(spec, 200 + i));
    std::vector<TensorT<float>> doubled;
    for (const auto& f : frames) {
        doubled.push_back(f);
        doubled.push_back(f);
    }
    CHECK(predict_video(m, frames, 5) == predict_video(m, doubled, 5));
}

TEST_CASE("predict_video validates its inputs") {
    const ModelSpec spec = make_spec(Family::resnet, Preset::mini);
    Model m(spec, 0);
    std::vector<TensorT<float>> empty;
    CHECK_THROWS_AS(predict_video(m, empty, 5), ContractError);
    std::vector<TensorT<float>> frames = {random_frame(spec, 1)};
    CHECK_THROWS_AS(predict_video(m, frames, 0), ContractError);
}

TEST_CASE("ensemble_predict is a normalized convex combination") {
    EnsembleConfig even;
    CHECK(ensemble_predict(0.2, 0.8, even) == doctest::Approx(0.5).epsilon(1e-12));

    EnsembleConfig uneven{0.3, 0.7};
    CHECK(ensemble_predict(0.9, 0.1, uneven) ==
          doctest::Approx(0.3 * 0.9 + 0.7 * 0.1).epsilon(1e-12));

    // Scaling both weights must not change the result.
    EnsembleConfig scaled{3.0, 7.0};
    CHECK(ensemble_predict(0.9, 0.1, scaled) ==
          doctest::Approx(ensemble_predict(0.9, 0.1, uneven)).epsilon(1e-12));

    // Output bounded by the two inputs for random weights and probabilities.
    Rng rng(31);
    for (int i = 0; i < 200; ++i) {
        const double p1 = rng.uniform(0.0, 1.0);
        const double p2 = rng.uniform(0.0, 1.0);
        EnsembleConfig cfg{rng.uniform(0.0, 5.0), rng.uniform(0.0, 5.0)};
        if (cfg.resnet_weight == 0.0 && cfg.xception_weight == 0.0) continue;
        const double p = ensemble_predict(p1, p2, cfg);
        CHECK(p >= std::min(p1, p2) - 1e-12);
        CHECK(p <= std::max(p1, p2) + 1e-12);
    }
}

TEST_CASE("ensemble_predict rejects invalid inputs") {
    EnsembleConfig zero{0.0, 0.0};
    CHECK_THROWS_AS(ensemble_predict(0.5, 0.5, zero), ConfigError);
    EnsembleConfig neg{-1.0, 2.0};
    CHECK_THROWS_AS(ensemble_predict(0.5, 0.5, neg), ConfigError);
    EnsembleConfig ok;
    CHECK_THROWS_AS(ensemble_predict(-0.1, 0.5, ok), ContractError);
    CHECK_THROWS_AS(ensemble_predict(0.5, 1.1, ok), ContractError);
}

TEST_CASE("snapshot round-trips bit-exactly through restore") {
    const ModelSpec spec = make_spec(Family::xception, Preset::mini);
    Model a(spec, 50);
    const ModelWeights w = a.snapshot();
    CHECK(w.fingerprint == spec.fingerprint());
    CHECK(w.tensors.size() == a.table().size());

    Model b(spec, 51);  // different init, then overwritten
    b.restore(w);
    const TensorT<float> frame = random_frame(spec, 60);
    CHECK(a.forward_frame(frame) == b.forward_frame(frame));
}

TEST_CASE("restore rejects weights from a different architecture") {
    Model resnet(make_spec(Family::resnet, Preset::mini), 0);
    Model xception(make_spec(Family::xception, Preset::mini), 0);
    CHECK_THROWS_AS(xception.restore(resnet.snapshot()), WeightsError);
}

TEST_CASE("restore rejects a tampered tensor table") {
    const ModelSpec spec = make_spec(Family::resnet, Preset::mini);
    Model m(spec, 0);
    ModelWeights w = m.snapshot();
    w.tensors.pop_back();
    CHECK_THROWS_AS(m.restore(w), WeightsError);

    ModelWeights w2 = m.snapshot();
    w2.tensors[0].second = Tensor({2, 2});
    CHECK_THROWS_AS(m.restore(w2), WeightsError);

    ModelWeights w3 = m.snapshot();
    std::swap(w3.tensors[0].first, w3.tensors[1].first);
    CHECK_THROWS_AS(m.restore(w3), WeightsError);
}

TEST_CASE("parse helpers round-trip and reject unknown names") {
    CHECK(parse_family("resnet") == Family::resnet);
    CHECK(parse_family("xception") == Family::xception);
    CHECK(parse_preset("mini") == Preset::mini);
    CHECK(parse_preset("full") == Preset::full);
    CHECK_THROWS_AS(parse_family("vgg"), ConfigError);
    CHECK_THROWS_AS(parse_preset("tiny"), ConfigError);
    CHECK(std::string(family_name(Family::resnet)) == "resnet");
    CHECK(std::string(preset_name(Preset::full)) == "full");
}
