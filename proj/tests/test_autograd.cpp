#include <doctest.h>

#include <cmath>
#include <cstring>
#include <vector>

#include <fakegaze/autograd.hpp>
#include <fakegaze/nn_ops.hpp>
#include <fakegaze/utils.hpp>

#include "oracles.hpp"

using namespace fakegaze;

namespace {

// Uniform values bounded away from zero so relu kinks cannot sit under a
// finite-difference probe.
TensorD offset_random(Shape shape, Rng& rng) {
    TensorD t(std::move(shape));
    for (std::size_t i = 0; i < t.numel(); ++i) {
        const double mag = rng.uniform(0.2, 1.0);
        t.data()[i] = rng.index(2) ? mag : -mag;
    }
    return t;
}

GradCheckReport check(const ForwardFn<double>& fwd, std::vector<TensorD>& params) {
    return grad_check<double>(fwd, params, 1e-5, 1e-7);
}

}  // namespace

TEST_CASE("tape basics: leaves, values, fan-out accumulation") {
    Tape tape;
    Tensor xt({2}, {1.0f, 2.0f});
    Var x = tape.leaf(xt, true);
    CHECK(tape.needs_grad(x));
    CHECK(tape.value(x).data()[1] == 2.0f);

    // y = x + x: the gradient must accumulate both paths.
    Var y = tape.add(x, x);
    Var loss = tape.mean_all(y);
    CHECK_THROWS_AS(tape.grad(x), ContractError);  // before backward
    tape.backward(loss);
    const Tensor g = tape.grad(x);
    CHECK(g.data()[0] == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(g.data()[1] == doctest::Approx(1.0).epsilon(1e-6));

    CHECK_THROWS_AS(tape.backward(loss), ContractError);  // second sweep
}

TEST_CASE("backward rejects non-scalar losses and foreign variables") {
    Tape tape;
    Tensor xt({2}, {1.0f, 2.0f});
    Var x = tape.leaf(xt, true);
    CHECK_THROWS_AS(tape.backward(x), ContractError);

    Tape other;
    CHECK_THROWS_AS(other.value(x), ContractError);
    CHECK_THROWS_AS(tape.grad(Var{99}), ContractError);
}

TEST_CASE("constants record no backward nodes") {
    Tape tape;
    Rng rng(4);
    Tensor x({1, 2, 4, 4});
    oracle::fill_uniform(x, rng, -1.0, 1.0);
    Tensor w({3, 2, 3, 3});
    oracle::fill_uniform(w, rng, -1.0, 1.0);
    Var xv = tape.constant(x);
    Var wv = tape.constant(w);
    Var y = tape.conv2d(xv, wv, std::nullopt, 1, 1, 1, 1);
    Var z = tape.relu(y);
    Var m = tape.mean_all(z);
    (void)m;
    CHECK(tape.node_count() == 0);
}

TEST_CASE("tape ops agree with the pure layer functions") {
    Rng rng(31);
    Tensor x({2, 3, 5, 5});
    oracle::fill_uniform(x, rng, -1.0, 1.0);
    Tensor w({4, 3, 3, 3});
    oracle::fill_uniform(w, rng, -1.0, 1.0);
    Tensor b({4});
    oracle::fill_uniform(b, rng, -0.5, 0.5);

    Conv2dParams p;
    p.weights = w;
    p.bias = b;
    p.stride_y = p.stride_x = 2;
    p.pad_y = p.pad_x = 1;
    const Tensor pure = conv2d(x, p);

    Tape tape;
    Var yv = tape.conv2d(tape.constant(x), tape.constant(w), tape.constant(b), 2, 2, 1, 1);
    const Tensor taped = tape.value(yv);
    REQUIRE(taped.shape() == pure.shape());
    CHECK(std::memcmp(taped.data(), pure.data(), taped.numel() * sizeof(float)) == 0);
}

TEST_CASE("batch_norm_train on the tape updates running stats like the pure op") {
    Rng rng(32);
    Tensor x({3, 2, 3, 3});
    oracle::fill_uniform(x, rng, -2.0, 2.0);
    Tensor scale({2}), shift({2});
    oracle::fill_uniform(scale, rng, 0.5, 1.5);
    oracle::fill_uniform(shift, rng, -0.5, 0.5);

    BatchNormParams p;
    p.scale = scale.clone();
    p.shift = shift.clone();
    p.running_mean = Tensor({2});
    p.running_var = Tensor::full({2}, 1.0f);
    const Tensor pure = batch_norm(x, p);

    Tape tape;
    Tensor rm({2});
    Tensor rv = Tensor::full({2}, 1.0f);
    Var yv = tape.batch_norm_train(tape.constant(x), tape.constant(scale), tape.constant(shift),
                                   rm, rv, 1e-5f, 0.1f);
    const Tensor taped = tape.value(yv);
    CHECK(std::memcmp(taped.data(), pure.data(), taped.numel() * sizeof(float)) == 0);
    CHECK(std::memcmp(rm.data(), p.running_mean.data(), 2 * sizeof(float)) == 0);
    CHECK(std::memcmp(rv.data(), p.running_var.data(), 2 * sizeof(float)) == 0);
}

TEST_CASE("grad: matmul") {
    Rng rng(1);
    std::vector<TensorD> params{offset_random({3, 4}, rng), offset_random({4, 2}, rng)};
    auto report = check(
        [](TapeD& t, const std::vector<VarD>& v) { return t.mean_all(t.matmul(v[0], v[1])); },
        params);
    CHECK(report.passed);
    CHECK(report.max_relative_error < 1e-7);
}

TEST_CASE("grad: add and reshape") {
    Rng rng(2);
    std::vector<TensorD> params{offset_random({2, 6}, rng), offset_random({2, 6}, rng)};
    auto report = check(
        [](TapeD& t, const std::vector<VarD>& v) {
            return t.mean_all(t.reshape(t.add(v[0], v[1]), {3, 4}));
        },
        params);
    CHECK(report.passed);
}

TEST_CASE("grad: relu away from the kink") {
    Rng rng(3);
    std::vector<TensorD> params{offset_random({4, 5}, rng)};
    auto report = check(
        [](TapeD& t, const std::vector<VarD>& v) { return t.mean_all(t.relu(v[0])); }, params);
    CHECK(report.passed);
}

TEST_CASE("grad: sigmoid") {
    Rng rng(4);
    std::vector<TensorD> params{offset_random({3, 3}, rng)};
    auto report = check(
        [](TapeD& t, const std::vector<VarD>& v) { return t.mean_all(t.sigmoid(v[0])); }, params);
    CHECK(report.passed);
}

TEST_CASE("grad: conv2d with bias, stride and padding") {
    Rng rng(5);
    std::vector<TensorD> params{offset_random({2, 3, 6, 5}, rng), offset_random({4, 3, 3, 3}, rng),
                                offset_random({4}, rng)};
    auto report = check(
        [](TapeD& t, const std::vector<VarD>& v) {
            return t.mean_all(t.conv2d(v[0], v[1], v[2], 2, 1, 1, 1));
        },
        params);
    CHECK(report.passed);
    CHECK(report.per_parameter_errors.size() == 3);
}

TEST_CASE("grad: conv2d 1x1 kernel no padding") {
    Rng rng(6);
    std::vector<TensorD> params{offset_random({1, 4, 3, 3}, rng), offset_random({2, 4, 1, 1}, rng)};
    auto report = check(
        [](TapeD& t, const std::vector<VarD>& v) {
            return t.mean_all(t.conv2d(v[0], v[1], std::nullopt, 1, 1, 0, 0));
        },
        params);
    CHECK(report.passed);
}

TEST_CASE("grad: depthwise_conv2d") {
    Rng rng(7);
    std::vector<TensorD> params{offset_random({2, 3, 5, 5}, rng), offset_random({3, 3, 3}, rng)};
    auto report = check(
        [](TapeD& t, const std::vector<VarD>& v) {
            return t.mean_all(t.depthwise_conv2d(v[0], v[1], 2, 2, 1, 1));
        },
        params);
    CHECK(report.passed);
}

TEST_CASE("grad: separable_conv2d") {
    Rng rng(8);
    std::vector<TensorD> params{offset_random({2, 3, 5, 5}, rng), offset_random({3, 3, 3}, rng),
                                offset_random({4, 3, 1, 1}, rng), offset_random({4}, rng)};
    auto report = check(
        [](TapeD& t, const std::vector<VarD>& v) {
            return t.mean_all(t.separable_conv2d(v[0], v[1], v[2], v[3], 1, 1, 1, 1));
        },
        params);
    CHECK(report.passed);
}

TEST_CASE("grad: batch_norm_train") {
    Rng rng(9);
    std::vector<TensorD> params{offset_random({3, 2, 4, 4}, rng), offset_random({2}, rng),
                                offset_random({2}, rng)};
    auto report = check(
        [](TapeD& t, const std::vector<VarD>& v) {
            // Fresh running buffers per evaluation; the output must not
            // depend on them in training mode.
            TensorD rm({2});
            TensorD rv = TensorD::full({2}, 1.0);
            return t.mean_all(
                t.relu(t.batch_norm_train(v[0], v[1], v[2], rm, rv, 1e-5, 0.1)));
        },
        params);
    CHECK(report.passed);
}

TEST_CASE("grad: batch_norm_infer") {
    Rng rng(10);
    TensorD rm({3}), rv({3});
    oracle::fill_uniform(rm, rng, -0.5, 0.5);
    oracle::fill_uniform(rv, rng, 0.5, 2.0);
    std::vector<TensorD> params{offset_random({2, 3, 3, 3}, rng), offset_random({3}, rng),
                                offset_random({3}, rng)};
    auto report = check(
        [rm, rv](TapeD& t, const std::vector<VarD>& v) {
            return t.mean_all(t.batch_norm_infer(v[0], v[1], v[2], rm, rv, 1e-5));
        },
        params);
    CHECK(report.passed);
}

TEST_CASE("grad: global_avg_pool and dense") {
    Rng rng(11);
    std::vector<TensorD> params{offset_random({2, 3, 4, 4}, rng), offset_random({5, 3}, rng),
                                offset_random({5}, rng)};
    auto report = check(
        [](TapeD& t, const std::vector<VarD>& v) {
            return t.mean_all(t.dense(t.global_avg_pool(v[0]), v[1], v[2]));
        },
        params);
    CHECK(report.passed);
}

TEST_CASE("grad: focal loss through sigmoid, gamma 0 and 2") {
    Rng rng(12);
    const std::vector<int> labels{1, 0, 1, 0, 1, 1};
    for (double gamma : {0.0, 2.0}) {
        for (double alpha : {1.0, 0.25}) {
            FocalParams fp;
            fp.gamma = gamma;
            fp.alpha = alpha;
            std::vector<TensorD> params{offset_random({6}, rng)};
            auto report = check(
                [labels, fp](TapeD& t, const std::vector<VarD>& v) {
                    return t.focal_loss(t.sigmoid(v[0]), labels, fp);
                },
                params);
            CAPTURE(gamma);
            CAPTURE(alpha);
            CHECK(report.passed);
        }
    }
}

TEST_CASE("grad: full layer chain conv-bn-relu-gap-dense-sigmoid-focal") {
    Rng rng(13);
    const std::vector<int> labels{1, 0};
    FocalParams fp;
    fp.gamma = 2.0;
    std::vector<TensorD> params{
        offset_random({2, 2, 6, 6}, rng),  // input (gradients flow end to end)
        offset_random({3, 2, 3, 3}, rng),  // conv weights
        offset_random({3}, rng),           // bn scale
        offset_random({3}, rng),           // bn shift
        offset_random({1, 3}, rng),        // dense weights
        offset_random({1}, rng),           // dense bias
    };
    auto report = grad_check<double>(
        [labels, fp](TapeD& t, const std::vector<VarD>& v) {
            TensorD rm({3});
            TensorD rv = TensorD::full({3}, 1.0);
            VarD h = t.conv2d(v[0], v[1], std::nullopt, 2, 2, 1, 1);
            h = t.batch_norm_train(h, v[2], v[3], rm, rv, 1e-5, 0.1);
            h = t.relu(h);
            h = t.dense(t.global_avg_pool(h), v[4], v[5]);
            VarD probs = t.sigmoid(t.reshape(h, {2}));
            return t.focal_loss(probs, labels, fp);
        },
        params, 1e-5, 1e-6);  // deep composition: slightly looser than single ops
    CHECK(report.passed);
    CHECK(report.max_relative_error < 1e-6);
}

TEST_CASE("grad_check rejects a non-deterministic forward") {
    Rng rng(14);
    std::vector<TensorD> params{offset_random({2}, rng)};
    int calls = 0;
    ForwardFn<double> fwd = [&calls](TapeD& t, const std::vector<VarD>& v) {
        TensorD noise = TensorD::full({2}, 0.001 * ++calls);
        return t.mean_all(t.add(v[0], t.constant(noise)));
    };
    CHECK_THROWS_AS(grad_check<double>(fwd, params, 1e-5, 1e-7), ContractError);
}

TEST_CASE("grad_check restores parameters after probing") {
    Rng rng(15);
    std::vector<TensorD> params{offset_random({3, 3}, rng)};
    const TensorD before = params[0].clone();
    (void)check(
        [](TapeD& t, const std::vector<VarD>& v) { return t.mean_all(t.sigmoid(v[0])); }, params);
    CHECK(std::memcmp(params[0].data(), before.data(), 9 * sizeof(double)) == 0);
}
