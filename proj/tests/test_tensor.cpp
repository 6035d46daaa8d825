#include <doctest.h>

#include <cstring>
#include <vector>

#include <fakegaze/tensor.hpp>
#include <fakegaze/utils.hpp>

#include "oracles.hpp"

using namespace fakegaze;

TEST_CASE("shape helpers") {
    CHECK(shape_numel({}) == 1);  // rank-0 convention: one scalar element
    CHECK(shape_numel({4}) == 4);
    CHECK(shape_numel({2, 3, 4}) == 24);
    CHECK_THROWS_AS(shape_numel({2, 0, 4}), ContractError);
    CHECK(shape_to_string({2, 3}) == "[2x3]");
}

TEST_CASE("construction and element access") {
    Tensor t({2, 3});
    CHECK(t.defined());
    CHECK(t.rank() == 2);
    CHECK(t.numel() == 6);
    for (std::size_t i = 0; i < 6; ++i) CHECK(t.data()[i] == 0.0f);

    t.at({1, 2}) = 5.0f;
    CHECK(t.data()[5] == 5.0f);
    CHECK(t.at({1, 2}) == 5.0f);

    Tensor undef;
    CHECK_FALSE(undef.defined());
    CHECK(undef.numel() == 0);

    CHECK_THROWS_AS(Tensor({2, 2}, {1.0f, 2.0f, 3.0f}), ContractError);
    CHECK_THROWS_AS(t.at({2, 0}), ContractError);   // out of bounds
    CHECK_THROWS_AS(t.at({0, 0, 0}), ContractError);  // rank mismatch
    CHECK_THROWS_AS(t.dim(2), ContractError);
}

TEST_CASE("full and scalar factories") {
    Tensor f = Tensor::full({2, 2}, 3.5f);
    for (std::size_t i = 0; i < 4; ++i) CHECK(f.data()[i] == 3.5f);
    Tensor s = Tensor::scalar(-1.0f);
    CHECK(s.shape() == Shape{1});
    CHECK(s.data()[0] == -1.0f);
}

TEST_CASE("reshape shares storage, clone copies") {
    Tensor t({2, 3}, {0, 1, 2, 3, 4, 5});
    Tensor r = t.reshape({3, 2});
    r.at({0, 1}) = 42.0f;
    CHECK(t.at({0, 1}) == 42.0f);
    CHECK_THROWS_AS(t.reshape({4, 2}), ContractError);

    Tensor c = t.clone();
    c.at({0, 0}) = -7.0f;
    CHECK(t.at({0, 0}) == 0.0f);
    CHECK(c.same_shape(t));
}

TEST_CASE("cast converts element type") {
    TensorD d({3}, {1.25, -2.5, 0.5});
    Tensor f = d.cast<float>();
    CHECK(f.shape() == Shape{3});
    CHECK(f.data()[0] == 1.25f);
    CHECK(f.data()[1] == -2.5f);
}

TEST_CASE("all_finite") {
    Tensor t({2}, {1.0f, 2.0f});
    CHECK(t.all_finite());
    t.data()[1] = std::numeric_limits<float>::infinity();
    CHECK_FALSE(t.all_finite());
    t.data()[1] = std::numeric_limits<float>::quiet_NaN();
    CHECK_FALSE(t.all_finite());
}

TEST_CASE_TEMPLATE("gemm matches the triple-loop reference", T, float, double) {
    Rng rng(101);
    for (int trial = 0; trial < 20; ++trial) {
        const auto m = 1 + rng.index(7), k = 1 + rng.index(9), n = 1 + rng.index(8);
        std::vector<T> a(m * k), b(k * n), c(m * n, T(0));
        for (auto& v : a) v = static_cast<T>(rng.uniform(-1.0, 1.0));
        for (auto& v : b) v = static_cast<T>(rng.uniform(-1.0, 1.0));
        gemm<T>(m, k, n, a.data(), b.data(), c.data());
        const auto ref = oracle::matmul(m, k, n, a.data(), b.data());
        const double tol = sizeof(T) == 4 ? 1e-5 : 1e-12;
        for (std::size_t i = 0; i < c.size(); ++i) {
            CHECK(std::fabs(static_cast<double>(c[i]) - ref[i]) < tol);
        }
    }
}

TEST_CASE("gemm accumulate adds onto existing output") {
    std::vector<double> a{1, 2, 3, 4};       // 2x2
    std::vector<double> b{5, 6, 7, 8};       // 2x2
    std::vector<double> c{100, 0, 0, -100};  // preloaded
    gemm<double>(2, 2, 2, a.data(), b.data(), c.data(), true);
    CHECK(c[0] == doctest::Approx(100 + 19).epsilon(1e-12));
    CHECK(c[1] == doctest::Approx(22).epsilon(1e-12));
    CHECK(c[2] == doctest::Approx(43).epsilon(1e-12));
    CHECK(c[3] == doctest::Approx(-100 + 50).epsilon(1e-12));
}

TEST_CASE("gemm_tn_acc computes A^T B and accumulates") {
    // A stored (k x m) = (2 x 3), B (k x n) = (2 x 2).
    std::vector<double> a{1, 2, 3, 4, 5, 6};
    std::vector<double> b{7, 8, 9, 10};
    std::vector<double> c(6, 1.0);
    gemm_tn_acc<double>(3, 2, 2, a.data(), b.data(), c.data());
    // A^T = [[1,4],[2,5],[3,6]]; A^T B = [[43,48],[59,66],[75,84]].
    const std::vector<double> want{44, 49, 60, 67, 76, 85};
    for (int i = 0; i < 6; ++i) CHECK(c[i] == doctest::Approx(want[i]).epsilon(1e-12));
}

TEST_CASE("transpose") {
    std::vector<float> in{1, 2, 3, 4, 5, 6};  // 2x3
    std::vector<float> out(6);
    transpose<float>(2, 3, in.data(), out.data());
    const std::vector<float> want{1, 4, 2, 5, 3, 6};
    CHECK(out == want);
}

TEST_CASE("gemm is bitwise deterministic across runs") {
    Rng rng(55);
    std::vector<float> a(8 * 16), b(16 * 12);
    for (auto& v : a) v = static_cast<float>(rng.uniform(-2.0, 2.0));
    for (auto& v : b) v = static_cast<float>(rng.uniform(-2.0, 2.0));
    std::vector<float> c1(8 * 12, 0.0f), c2(8 * 12, 0.0f);
    gemm<float>(8, 16, 12, a.data(), b.data(), c1.data());
    gemm<float>(8, 16, 12, a.data(), b.data(), c2.data());
    CHECK(std::memcmp(c1.data(), c2.data(), c1.size() * sizeof(float)) == 0);
}
