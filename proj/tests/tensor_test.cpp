#include <doctest.h>

#include <cmath>

#include "coattn/tensor.hpp"
#include "support.hpp"

using namespace coattn;
using namespace coattn::testing;

TEST_CASE("matmul identity and hand-computed products") {
    Tensor id = Tensor::from(2, 2, {1, 0, 0, 1});
    Tensor v = Tensor::from(2, 1, {3, 4});
    Tensor r = matmul(id, v);
    CHECK(r.at(0, 0) == 3.0);
    CHECK(r.at(1, 0) == 4.0);

    Tensor a = Tensor::from(1, 2, {1, 2});
    Tensor b = Tensor::from(2, 1, {3, 4});
    CHECK(matmul(a, b).item() == 11.0);
}

TEST_CASE("matmul rejects mismatched inner dimensions, naming both shapes") {
    Tensor a = Tensor::zeros(4, 3);
    Tensor b = Tensor::zeros(5, 2);
    CHECK_THROWS_WITH_AS(matmul(a, b), doctest::Contains("4x3"), ShapeError);
    try {
        matmul(a, b);
    } catch (const ShapeError& e) {
        CHECK(std::string(e.what()).find("5x2") != std::string::npos);
    }
}

TEST_CASE("matmul gradient of sum(output) matches finite differences") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Rng rng(seed);
        Tensor a = random_param(4, 3, rng);
        Tensor b = random_param(3, 5, rng);

        Tape tape;
        {
            Tape::Scope scope(tape);
            tape.backward(sum(matmul(a, b)));
        }
        auto f = [&] { return sum(matmul(a, b)).item(); };
        CHECK(max_rel_error(a.grad(), finite_difference_grad(a, f)) < 1e-6);
        CHECK(max_rel_error(b.grad(), finite_difference_grad(b, f)) < 1e-6);
    }
}

TEST_CASE("softmax_columns basics") {
    SUBCASE("symmetric column") {
        Tensor x = Tensor::from(2, 1, {0, 0});
        Tensor y = softmax_columns(x);
        CHECK(y.at(0, 0) == doctest::Approx(0.5));
        CHECK(y.at(1, 0) == doctest::Approx(0.5));
    }
    SUBCASE("large values are stabilized") {
        Tensor x = Tensor::from(2, 1, {1000.0, 1000.1});
        Tensor y = softmax_columns(x);
        CHECK(all_finite(y));
        CHECK(y.at(0, 0) + y.at(1, 0) == doctest::Approx(1.0).epsilon(1e-12));
    }
    SUBCASE("1,2,3 column against direct exp evaluation") {
        Tensor x = Tensor::from(3, 1, {1, 2, 3});
        Tensor y = softmax_columns(x);
        CHECK(y.at(0, 0) == doctest::Approx(0.09003).epsilon(1e-4));
        CHECK(y.at(1, 0) == doctest::Approx(0.24473).epsilon(1e-4));
        CHECK(y.at(2, 0) == doctest::Approx(0.66524).epsilon(1e-4));
    }
}

TEST_CASE("softmax columns sum to 1 within 1e-9, including masked columns") {
    Rng rng(7);
    for (int trial = 0; trial < 200; ++trial) {
        std::size_t r = 1 + rng.below(8), c = 1 + rng.below(8);
        Tensor x = random_tensor(r, c, rng, -50.0, 50.0);
        // Randomly mask entries the way attention masking does.
        for (double& v : x.values())
            if (rng.uniform01() < 0.3) v = -1e30;
        Tensor y = softmax_columns(x);
        REQUIRE(all_finite(y));
        for (std::size_t j = 0; j < c; ++j) {
            double total = 0.0;
            for (std::size_t i = 0; i < r; ++i) {
                CHECK(y.at(i, j) >= 0.0);
                CHECK(y.at(i, j) <= 1.0);
                total += y.at(i, j);
            }
            CHECK(std::fabs(total - 1.0) < 1e-9);
        }
    }
}

TEST_CASE("masked logits produce exactly zero probability") {
    Tensor x = Tensor::from(4, 1, {0.3, -1e30, 1.1, -1e30});
    Tensor y = softmax_columns(x);
    CHECK(y.at(1, 0) == 0.0);
    CHECK(y.at(3, 0) == 0.0);
    CHECK(y.at(0, 0) + y.at(2, 0) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("backward on sum is all ones; on sum of squares matches quadratic") {
    Tensor w = Tensor::from(1, 2, {2, -1});
    w.set_requires_grad(true);

    Tape t1;
    {
        Tape::Scope scope(t1);
        t1.backward(sum(w));
    }
    CHECK(w.grad()[0] == 1.0);
    CHECK(w.grad()[1] == 1.0);

    w.zero_grad();
    Tape t2;
    {
        Tape::Scope scope(t2);
        t2.backward(sum(mul(w, w)));
    }
    CHECK(w.grad()[0] == doctest::Approx(4.0));
    CHECK(w.grad()[1] == doctest::Approx(-2.0));
}

TEST_CASE("backward requires a scalar loss") {
    Rng rng(1);
    Tensor w = random_param(2, 2, rng);
    Tape tape;
    Tensor y;
    {
        Tape::Scope scope(tape);
        y = mul(w, w);
    }
    CHECK_THROWS_AS(tape.backward(y), ContractError);
}

TEST_CASE("tape is single-use: second backward is rejected") {
    Rng rng(3);
    Tensor w = random_param(2, 3, rng);
    Tape tape;
    Tensor loss;
    {
        Tape::Scope scope(tape);
        loss = sum(mul(w, w));
    }
    tape.backward(loss);
    CHECK_THROWS_AS(tape.backward(loss), ContractError);
}

TEST_CASE("gradients accumulate across tapes, as batch aggregation requires") {
    Tensor w = Tensor::from(1, 1, {3.0});
    w.set_requires_grad(true);
    for (int i = 0; i < 2; ++i) {
        Tape tape;
        Tensor loss;
        {
            Tape::Scope scope(tape);
            loss = mul(w, w);
        }
        tape.backward(loss);
    }
    CHECK(w.grad()[0] == doctest::Approx(12.0)); // 2 * (2w)
}

TEST_CASE("elementwise and structural ops match finite differences") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Rng rng(seed + 100);
        Tensor a = random_param(3, 4, rng);
        Tensor b = random_param(3, 4, rng);
        Tensor c = random_param(3, 1, rng);
        Tensor s = random_param(1, 1, rng);

        auto run = [&]() -> Tensor {
            Tensor t1 = mul(tanh(a), sigmoid(b));
            Tensor t2 = add_col(t1, c);
            Tensor t3 = concat_rows({t2, sub(a, b)});
            Tensor t4 = slice_cols(t3, 1, 4);
            Tensor t5 = mul_scalar(t4, s);
            Tensor t6 = concat_cols({t5, concat_rows({broadcast_col(c, 2), broadcast_col(c, 2)})});
            Tensor t7 = softmax_columns(t6);
            return add(sum(exp(scale(t5, 0.1))), pick(t7, 2, 1));
        };

        Tape tape;
        {
            Tape::Scope scope(tape);
            tape.backward(run());
        }
        auto f = [&] { return run().item(); };
        for (Tensor* p : {&a, &b, &c, &s}) {
            CHECK(max_rel_error(p->grad(), finite_difference_grad(*p, f)) < 1e-4);
        }
    }
}

TEST_CASE("transpose, maxout, log_prob_at gradients vs finite differences") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Rng rng(seed + 500);
        Tensor x = random_param(8, 3, rng);

        auto run = [&]() -> Tensor {
            Tensor m = maxout_pool(x, 4);       // 2 x 3
            Tensor t = transpose(m);            // 3 x 2
            Tensor col = slice_cols(t, 0, 1);   // 3 x 1
            Tensor p = softmax_columns(col);
            return add(log_prob_at(p, 1), sum(m));
        };

        Tape tape;
        {
            Tape::Scope scope(tape);
            tape.backward(run());
        }
        auto f = [&] { return run().item(); };
        CHECK(max_rel_error(x.grad(), finite_difference_grad(x, f)) < 1e-4);
    }
}

TEST_CASE("embedding_lookup scatters gradients and honors the frozen prefix") {
    Rng rng(11);
    Tensor table = random_param(3, 5, rng, "embed");
    std::vector<int> ids = {0, 2, 2, 4, 1};

    Tape tape;
    Tensor loss;
    {
        Tape::Scope scope(tape);
        loss = sum(embedding_lookup(table, ids, 2));
    }
    tape.backward(loss);
    // Columns 0 and 1 are frozen; column 2 looked up twice.
    for (std::size_t r = 0; r < 3; ++r) {
        CHECK(table.grad()[r * 5 + 0] == 0.0);
        CHECK(table.grad()[r * 5 + 1] == 0.0);
        CHECK(table.grad()[r * 5 + 2] == doctest::Approx(2.0));
        CHECK(table.grad()[r * 5 + 4] == doctest::Approx(1.0));
    }
    CHECK_THROWS_AS(embedding_lookup(table, {7}, 2), DataError);
}

TEST_CASE("no operation produces NaN/Inf from finite inputs (fuzz)") {
    Rng rng(2024);
    for (int trial = 0; trial < 10000; ++trial) {
        std::size_t r = 1 + rng.below(6), c = 1 + rng.below(6);
        double mag = (trial % 7 == 0) ? 1000.0 : 10.0;
        Tensor a = random_tensor(r, c, rng, -mag, mag);
        Tensor b = random_tensor(r, c, rng, -mag, mag);
        switch (trial % 6) {
        case 0: CHECK(all_finite(softmax_columns(a))); break;
        case 1: CHECK(all_finite(sigmoid(a))); break;
        case 2: CHECK(all_finite(tanh(a))); break;
        case 3: CHECK(all_finite(mul(a, b))); break;
        case 4: CHECK(all_finite(matmul(a, transpose(b)))); break;
        case 5: {
            Tensor p = softmax_columns(slice_cols(a, 0, 1));
            CHECK(all_finite(log_prob_at(p, rng.below(r))));
            break;
        }
        }
    }
}

TEST_CASE("ops do not record when no tape is active") {
    Rng rng(5);
    Tensor a = random_param(2, 2, rng);
    Tensor y = mul(a, a); // no tape
    CHECK_FALSE(y.requires_grad());

    Tape tape;
    {
        Tape::Scope scope(tape);
        Tape::NoGrad off;
        Tensor z = mul(a, a);
        CHECK_FALSE(z.requires_grad());
    }
    CHECK(tape.size() == 0);
}
