#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>

#include <logatlas/tinymodel.hpp>

#include "support/grad_check.hpp"

using namespace logatlas;

namespace {

TinyConfig small_config() {
    TinyConfig cfg;
    cfg.vocab_size = 32;
    cfg.d_model = 16;
    cfg.n_heads = 2;
    cfg.n_layers = 2;
    cfg.max_seq = 16;
    cfg.n_experts = 4;
    cfg.expert_hidden = 8;
    cfg.lora_rank = 4;
    cfg.lora_alpha = 8.0;
    return cfg;
}

std::vector<int> random_tokens(Rng& rng, int n, int vocab) {
    std::vector<int> out;
    for (int i = 0; i < n; ++i)
        out.push_back(static_cast<int>(uniform_below(rng, vocab)));
    return out;
}

}  // namespace

TEST_CASE("config validation") {
    TinyConfig cfg = small_config();
    CHECK_NOTHROW(cfg.validate());
    cfg.d_model = 15;  // not divisible by heads
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = small_config();
    cfg.lora_rank = 64;  // > d_model
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = small_config();
    CHECK(TinyConfig{}.lora_scale() == 2.0);  // r=16, alpha=32
}

TEST_CASE("forward shape and input validation") {
    TinyModel model(small_config(), 1);
    const Mat logits = model.forward({5});
    CHECK(logits.rows == 1);
    CHECK(logits.cols == 32);

    CHECK_THROWS_AS(model.forward({}), std::invalid_argument);
    CHECK_THROWS_AS(model.forward({32}), std::invalid_argument);  // out of range
    CHECK_THROWS_AS(model.forward(std::vector<int>(17, 1)),
                    std::invalid_argument);  // beyond max_seq
}

TEST_CASE("causality: future tokens cannot move earlier logits") {
    TinyModel model(small_config(), 2);
    const std::vector<int> a = {3, 7, 9, 1, 4, 2};
    std::vector<int> b = a;
    std::swap(b[3], b[5]);
    b[4] = 31;
    const Mat la = model.forward(a);
    const Mat lb = model.forward(b);
    for (int j = 0; j < la.cols; ++j) {
        CHECK(la.at(0, j) == lb.at(0, j));
        CHECK(la.at(1, j) == lb.at(1, j));
        CHECK(la.at(2, j) == lb.at(2, j));
    }
}

TEST_CASE("LoRA init identity: adapters contribute nothing at start") {
    TinyModel model(small_config(), 3);
    TinyModel stripped(small_config(), 3);  // same seed, same base weights
    for (auto& layer : stripped.layers())
        for (LoRALinear* ll : {&layer.wq, &layer.wk, &layer.wv, &layer.wo})
            ll->a.value.zero();  // disable the adapter path entirely

    Rng rng(9);
    const auto tokens = random_tokens(rng, 10, 32);
    const Mat with_adapters = model.forward(tokens);
    const Mat base_only = stripped.forward(tokens);
    for (std::size_t i = 0; i < with_adapters.d.size(); ++i)
        CHECK(std::abs(with_adapters.d[i] - base_only.d[i]) < 1e-12);
}

TEST_CASE("lora_forward dropout is train-only and inverted") {
    TinyModel model(small_config(), 4);
    const auto& lora = model.layers()[0].wq;
    Rng rng(5);
    Mat x(6, 16);
    for (double& v : x.d) v = normal(rng, 0.0, 1.0);

    const Mat eval1 = model.lora_op_forward(x, lora, false, nullptr);
    const Mat eval2 = model.lora_op_forward(x, lora, false, nullptr);
    CHECK(eval1 == eval2);  // no stochastic path in eval mode

    Rng drop_rng(6);
    const Mat train1 = model.lora_op_forward(x, lora, true, &drop_rng);
    // Dropout masks change across calls under the same rng stream.
    const Mat train2 = model.lora_op_forward(x, lora, true, &drop_rng);
    CHECK(train1.d != train2.d);
}

TEST_CASE("soft-MoE mixture properties") {
    SUBCASE("identical experts collapse to a single expert output") {
        TinyConfig cfg = small_config();
        TinyModel model(cfg, 7);
        auto& moe = model.layers()[0].moe;
        for (std::size_t e = 1; e < moe.experts.size(); ++e) {
            moe.experts[e].u.value = moe.experts[0].u.value;
            moe.experts[e].b1.value = moe.experts[0].b1.value;
            moe.experts[e].v.value = moe.experts[0].v.value;
            moe.experts[e].b2.value = moe.experts[0].b2.value;
        }
        Rng rng(8);
        Mat x(5, cfg.d_model);
        for (double& v : x.d) v = normal(rng, 0.0, 1.0);
        const Mat mixed = soft_moe_forward(x, moe, cfg.lambda_aux, nullptr, nullptr);

        // Single-expert reference.
        using namespace matops;
        Mat s = matmul(x, moe.experts[0].u.value);
        add_row_inplace(s, moe.experts[0].b1.value);
        for (double& v : s.d) v = nn::gelu(v);
        Mat ref = matmul(s, moe.experts[0].v.value);
        add_row_inplace(ref, moe.experts[0].b2.value);
        for (std::size_t i = 0; i < mixed.d.size(); ++i)
            CHECK(mixed.d[i] == doctest::Approx(ref.d[i]).epsilon(1e-12));
    }

    SUBCASE("gate rows are a probability simplex") {
        TinyConfig cfg = small_config();
        TinyModel model(cfg, 9);
        Rng rng(10);
        Mat x(7, cfg.d_model);
        for (double& v : x.d) v = normal(rng, 0.0, 1.0);
        SoftMoECache cache;
        soft_moe_forward(x, model.layers()[0].moe, cfg.lambda_aux, nullptr, &cache);
        for (int t = 0; t < cache.gate_probs.rows; ++t) {
            double sum = 0.0;
            for (int e = 0; e < cache.gate_probs.cols; ++e) {
                sum += cache.gate_probs.at(t, e);
                CHECK(cache.gate_probs.at(t, e) >= 0.0);
            }
            CHECK(std::abs(sum - 1.0) < 1e-9);
        }
    }
}

TEST_CASE("aux loss bounds and extremes") {
    const double lambda = 0.01;
    const int E = 4;
    SUBCASE("uniform gate attains the minimum, exactly lambda") {
        Mat gate(6, E);
        for (double& v : gate.d) v = 1.0 / E;
        CHECK(soft_moe_aux_loss(gate, lambda) == doctest::Approx(lambda).epsilon(1e-15));
    }
    SUBCASE("routing collapse attains the maximum, exactly lambda * E") {
        Mat gate(6, E);
        for (int t = 0; t < 6; ++t) gate.at(t, 2) = 1.0;
        CHECK(soft_moe_aux_loss(gate, lambda) ==
              doctest::Approx(lambda * E).epsilon(1e-15));
    }
    SUBCASE("random simplex gates stay within [lambda, lambda*E]") {
        Rng rng(11);
        for (int trial = 0; trial < 200; ++trial) {
            Mat gate(5, E);
            for (int t = 0; t < 5; ++t) {
                double sum = 0.0;
                for (int e = 0; e < E; ++e) {
                    gate.at(t, e) = -std::log(uniform01(rng) + 1e-12);
                    sum += gate.at(t, e);
                }
                for (int e = 0; e < E; ++e) gate.at(t, e) /= sum;
            }
            const double aux = soft_moe_aux_loss(gate, lambda);
            CHECK(aux >= lambda - 1e-12);
            CHECK(aux <= lambda * E + 1e-12);
        }
    }
}

TEST_CASE("count_trainable") {
    TinyConfig cfg;  // defaults: d=64, r=16
    TinyModel model(cfg, 12);
    const auto count = count_trainable(model);

    // Closed form: one adapter pair is r*(d_in + d_out).
    const auto& l0 = model.layers()[0];
    CHECK(static_cast<int>(l0.wq.a.value.size() + l0.wq.b.value.size()) ==
          cfg.lora_rank * (cfg.d_model + cfg.d_model));
    CHECK(static_cast<int>(l0.wq.a.value.size() + l0.wq.b.value.size()) == 2048);

    std::int64_t expected = 0;
    expected += 4LL * cfg.lora_rank * (cfg.d_model + cfg.d_model);  // adapters
    expected += static_cast<std::int64_t>(cfg.d_model) * cfg.n_experts;  // gate
    expected += static_cast<std::int64_t>(cfg.n_experts) *
                (cfg.d_model * cfg.expert_hidden + cfg.expert_hidden +
                 cfg.expert_hidden * cfg.d_model + cfg.d_model);
    expected *= cfg.n_layers;
    CHECK(count.trainable == expected);
    CHECK(count.total > count.trainable);
    CHECK(count.fraction() ==
          doctest::Approx(static_cast<double>(count.trainable) /
                          static_cast<double>(count.total)));

    SUBCASE("all-frozen model counts zero trainable") {
        for (Tensor* t : model.tensors()) t->trainable = false;
        CHECK(count_trainable(model).trainable == 0);
    }
}

TEST_CASE("full-model gradients match central finite differences") {
    TinyModel model(small_config(), 13);
    Rng rng(14);
    randomize_adapters(model, rng);
    std::vector<std::vector<int>> batch = {random_tokens(rng, 6, 32),
                                           random_tokens(rng, 5, 32)};
    const auto result = testing::grad_check_lm(model, batch, 1e-5);
    MESSAGE("checked ", result.params_checked, " params, max rel err ",
            result.max_rel_err, " at ", result.worst_tensor);
    CHECK(result.params_checked > 3000);
    CHECK(result.max_rel_err < 1e-4);
}

TEST_CASE("every expert receives gradient on generic input") {
    TinyModel model(small_config(), 15);
    Rng rng(16);
    randomize_adapters(model, rng);
    model.zero_grads();
    lm_loss_and_grads(model, {random_tokens(rng, 8, 32)});
    for (const auto& layer : model.layers())
        for (const auto& ex : layer.moe.experts) {
            double norm = 0.0;
            for (double g : ex.u.grad.d) norm += g * g;
            CHECK(norm > 0.0);
        }
}

TEST_CASE("deterministic init and training step") {
    TinyModel a(small_config(), 17);
    TinyModel b(small_config(), 17);
    Rng ra(18), rb(18);
    const auto tokens = random_tokens(ra, 8, 32);
    Rng rb2(18);
    const auto tokens_b = random_tokens(rb, 8, 32);
    CHECK(tokens == tokens_b);

    Rng da(19), db(19);
    lm_loss_and_grads(a, {tokens}, true, &da);
    lm_loss_and_grads(b, {tokens}, true, &db);
    auto ta = a.trainable_tensors();
    auto tb = b.trainable_tensors();
    REQUIRE(ta.size() == tb.size());
    for (std::size_t i = 0; i < ta.size(); ++i) {
        CHECK(ta[i]->value.d == tb[i]->value.d);
        CHECK(ta[i]->grad.d == tb[i]->grad.d);
    }
}

TEST_CASE("checkpoint container round trips bit-exactly") {
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "logatlas_ckpt_test";
    fs::create_directories(dir);
    const fs::path file = dir / "model.tensors";

    TinyModel model(small_config(), 20);
    save_tensors(model, file);

    TinyModel other(small_config(), 21);  // different init
    bool differs = false;
    {
        auto ta = model.tensors();
        auto tb = other.tensors();
        for (std::size_t i = 0; i < ta.size(); ++i)
            differs = differs || ta[i]->value.d != tb[i]->value.d;
    }
    CHECK(differs);

    load_tensors(other, file);
    auto ta = model.tensors();
    auto tb = other.tensors();
    for (std::size_t i = 0; i < ta.size(); ++i) {
        CHECK(ta[i]->name == tb[i]->name);
        CHECK(ta[i]->value.d == tb[i]->value.d);
    }
    fs::remove_all(dir);
}
