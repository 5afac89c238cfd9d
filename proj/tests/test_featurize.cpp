#include <catch2/catch_amalgamated.hpp>

#include <cstring>
#include <vector>

#include "flupre/featurize.hpp"
#include "flupre/nn/gradcheck.hpp"
#include "flupre/nn/param.hpp"
#include "flupre/rng.hpp"

using namespace flupre;

TEST_CASE("duration label caps at the class count") {
    REQUIRE(duration_label(1) == 1);
    REQUIRE(duration_label(57) == 57);
    REQUIRE(duration_label(100) == 100);
    REQUIRE(duration_label(101) == 100);
    REQUIRE(duration_label(250) == 100);
    REQUIRE_THROWS_AS(duration_label(0), DomainError);
    REQUIRE_THROWS_AS(duration_label(-3), DomainError);
}

TEST_CASE("mask plan selection statistics match the configured rates") {
    const std::size_t n = 200;
    std::vector<int> phones(n), durations(n);
    Rng setup(99);
    for (std::size_t i = 0; i < n; ++i) {
        phones[i] = static_cast<int>(setup.below(40));
        durations[i] = setup.uniform_int(1, 30);
    }

    std::size_t total = 0, selected = 0, replaced = 0;
    for (std::uint64_t t = 0; t < 2000; ++t) {
        Rng rng(mix_seed(5, t));
        MaskPlan plan = sample_mask_plan(phones, durations, rng);
        validate_mask_plan(plan, n);
        total += n;
        selected += plan.selected.size();
        replaced += plan.replaced.size();
    }
    const double sel_rate = static_cast<double>(selected) / static_cast<double>(total);
    const double rep_rate = static_cast<double>(replaced) / static_cast<double>(selected);
    REQUIRE(sel_rate == Catch::Approx(0.15).margin(0.005));
    REQUIRE(rep_rate == Catch::Approx(0.90).margin(0.01));
}

TEST_CASE("mask plan edge rates") {
    std::vector<int> phones = {3, 1, 4, 1, 5};
    std::vector<int> durations = {2, 7, 1, 8, 2};

    SECTION("rate zero still selects one position when forced") {
        for (std::uint64_t s = 0; s < 50; ++s) {
            Rng rng(s);
            MaskPlan plan = sample_mask_plan(phones, durations, rng, 0.0, 0.9, true);
            REQUIRE(plan.selected.size() == 1);
            REQUIRE(plan.selected[0] < phones.size());
        }
    }
    SECTION("rate zero without forcing selects nothing") {
        Rng rng(1);
        MaskPlan plan = sample_mask_plan(phones, durations, rng, 0.0, 0.9, false);
        REQUIRE(plan.empty());
    }
    SECTION("rate one selects every position") {
        Rng rng(1);
        MaskPlan plan = sample_mask_plan(phones, durations, rng, 1.0, 0.9, false);
        REQUIRE(plan.selected.size() == phones.size());
    }
    SECTION("invalid rates are rejected") {
        Rng rng(1);
        REQUIRE_THROWS_AS(sample_mask_plan(phones, durations, rng, -0.1), ConfigError);
        REQUIRE_THROWS_AS(sample_mask_plan(phones, durations, rng, 0.15, 1.5), ConfigError);
    }
}

TEST_CASE("mask plan targets are the ground truth, kept positions included") {
    std::vector<int> phones, durations;
    Rng setup(12);
    for (int i = 0; i < 80; ++i) {
        phones.push_back(static_cast<int>(setup.below(20)));
        durations.push_back(setup.uniform_int(1, 180));
    }
    Rng rng(7);
    // Low replace_prob so plenty of selected positions stay unmasked.
    MaskPlan plan = sample_mask_plan(phones, durations, rng, 0.4, 0.5);
    REQUIRE(plan.selected.size() > plan.replaced.size());
    for (std::size_t k = 0; k < plan.selected.size(); ++k) {
        const std::size_t p = plan.selected[k];
        REQUIRE(plan.phone_targets[k] == phones[p]);
        REQUIRE(plan.duration_targets[k] == duration_label(durations[p]));
    }
}

TEST_CASE("mask plan validation rejects inconsistent plans") {
    MaskPlan ok;
    ok.selected = {1, 3};
    ok.replaced = {3};
    ok.phone_targets = {5, 6};
    ok.duration_targets = {2, 100};
    REQUIRE_NOTHROW(validate_mask_plan(ok, 4));

    MaskPlan bad = ok;
    bad.selected = {3, 1};
    REQUIRE_THROWS_AS(validate_mask_plan(bad, 4), SchemaError);

    bad = ok;
    bad.selected = {1, 4};
    REQUIRE_THROWS_AS(validate_mask_plan(bad, 4), IndexError);

    bad = ok;
    bad.replaced = {2};
    REQUIRE_THROWS_AS(validate_mask_plan(bad, 4), SchemaError);

    bad = ok;
    bad.phone_targets = {5};
    REQUIRE_THROWS_AS(validate_mask_plan(bad, 4), SchemaError);

    bad = ok;
    bad.duration_targets = {2, 101};
    REQUIRE_THROWS_AS(validate_mask_plan(bad, 4), SchemaError);
}

TEST_CASE("apply_mask rewrites replaced positions and nothing else") {
    Utterance u;
    u.id = "m";
    u.feature_dim = 3;
    Rng setup(21);
    for (int i = 0; i < 12; ++i) {
        u.phones.push_back(static_cast<int>(setup.below(10)));
        u.durations.push_back(setup.uniform_int(1, 40));
        for (int d = 0; d < 3; ++d)
            u.features.push_back(static_cast<float>(setup.normal()));
    }

    MaskPlan plan;
    plan.selected = {2, 5, 9};
    plan.replaced = {5, 9};
    for (std::size_t p : plan.selected) {
        plan.phone_targets.push_back(u.phones[p]);
        plan.duration_targets.push_back(duration_label(u.durations[p]));
    }

    const int mask_id = 10;
    MaskedUtterance m = apply_mask(u, plan, mask_id);
    REQUIRE(m.length() == u.length());
    for (std::size_t i = 0; i < u.length(); ++i) {
        const bool hit = (i == 5 || i == 9);
        if (hit) {
            REQUIRE(m.phones[i] == mask_id);
            REQUIRE(m.durations[i] == 0);
            for (std::size_t d = 0; d < 3; ++d)
                REQUIRE(m.features[i * 3 + d] == 0.0f);
        } else {
            REQUIRE(m.phones[i] == u.phones[i]);
            REQUIRE(m.durations[i] == u.durations[i]);
            REQUIRE(std::memcmp(m.feature_row(i), u.feature_row(i), 3 * sizeof(float)) == 0);
        }
    }

    SECTION("plan is validated against the utterance") {
        plan.selected.push_back(12);
        plan.phone_targets.push_back(0);
        plan.duration_targets.push_back(1);
        REQUIRE_THROWS_AS(apply_mask(u, plan, mask_id), IndexError);
    }
}

namespace {

// Independent reference: with W = I and a zero embedding table the projection
// is the identity, so each input row must be the raw feature row plus the
// scaled duration in the last column.
template <typename T>
Tensor<T> identity(std::size_t n) {
    Tensor<T> m({n, n});
    for (std::size_t i = 0; i < n; ++i) m(i, i) = T(1);
    return m;
}

} // namespace

TEST_CASE("preprocess reduces to the identity under identity parameters") {
    using T = double;
    const std::size_t e = 3;
    Utterance u;
    u.id = "p";
    u.feature_dim = e;
    u.phones = {1, 0, 2};
    u.durations = {4, 20, 7};
    u.features = {0.5f, -1.0f, 2.0f, 0.0f, 3.0f, -0.25f, 1.5f, 0.125f, -2.0f};

    Tensor<T> embedding({5, e});  // vocab 3 + mask + cls, all zero
    Tensor<T> proj_w = identity<T>(e);
    Tensor<T> proj_b({e});
    PreprocParams<T> pp{embedding, proj_w, proj_b, T(0.01)};
    REQUIRE(pp.mask_phone_id() == 3);
    REQUIRE(pp.cls_phone_id() == 4);

    ModelInputSequence<T> seq = preprocess(SequenceView::of(u), pp);
    REQUIRE(seq.rows.rows() == 3);
    REQUIRE(seq.rows.cols() == e + 1);
    REQUIRE(seq.mask_token_row_indices.empty());
    for (std::size_t i = 0; i < 3; ++i) {
        for (std::size_t j = 0; j < e; ++j)
            REQUIRE(seq.rows(i, j) == Catch::Approx(static_cast<double>(u.features[i * e + j]))
                                          .epsilon(0.0)
                                          .margin(1e-15));
        REQUIRE(seq.rows(i, e) == Catch::Approx(0.01 * u.durations[i]).margin(1e-15));
    }
}

TEST_CASE("preprocess adds the embedding of the shown phone") {
    using T = double;
    const std::size_t e = 2;
    Tensor<T> embedding({6, e});
    Rng setup(4);
    for (std::size_t i = 0; i < embedding.numel(); ++i)
        embedding[i] = setup.normal();
    Tensor<T> proj_w({3, e});  // features all zero, so projection is inert
    Tensor<T> proj_b({e});
    proj_b[0] = 0.25;
    proj_b[1] = -0.5;
    PreprocParams<T> pp{embedding, proj_w, proj_b, T(0.01)};

    MaskedUtterance m;
    m.feature_dim = 3;
    m.phones = {2, pp.mask_phone_id(), 1};
    m.durations = {3, 0, 9};
    m.features.assign(9, 0.0f);

    ModelInputSequence<T> seq = preprocess(SequenceView::of(m), pp);
    REQUIRE(seq.mask_token_row_indices == std::vector<std::size_t>{1});
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < e; ++j)
            REQUIRE(seq.rows(i, j) ==
                    Catch::Approx(proj_b[j] + embedding(static_cast<std::size_t>(m.phones[i]), j))
                        .margin(1e-15));
    REQUIRE(seq.rows(1, e) == 0.0);

    SECTION("unknown phone id is rejected") {
        m.phones[0] = 6;
        REQUIRE_THROWS_AS(preprocess(SequenceView::of(m), pp), SchemaError);
    }
}

TEST_CASE("preprocess backward matches finite differences") {
    using T = double;
    const std::size_t e = 4, d = 3, n = 5;
    nn::ParameterStore<T> ps;
    ps.add("embedding", {7, e});
    ps.add("proj_w", {d, e});
    ps.add("proj_b", {e});
    Rng init(31);
    for (std::size_t t = 0; t < ps.size(); ++t)
        for (std::size_t i = 0; i < ps.entry(t).value.numel(); ++i)
            ps.entry(t).value[i] = init.normal(0.0, 0.5);

    Utterance u;
    u.feature_dim = d;
    Rng data(8);
    for (std::size_t i = 0; i < n; ++i) {
        u.phones.push_back(static_cast<int>(data.below(5)));
        u.durations.push_back(data.uniform_int(1, 12));
        for (std::size_t k = 0; k < d; ++k)
            u.features.push_back(static_cast<float>(data.normal()));
    }

    // Fixed random linear functional of the output keeps the loss smooth.
    Tensor<T> probe({n, e + 1});
    for (std::size_t i = 0; i < probe.numel(); ++i) probe[i] = data.normal();

    auto loss_fn = [&]() {
        PreprocParams<T> pp{ps.value("embedding"), ps.value("proj_w"), ps.value("proj_b"),
                            T(0.01)};
        ModelInputSequence<T> seq = preprocess(SequenceView::of(u), pp);
        T acc = 0;
        for (std::size_t i = 0; i < seq.rows.numel(); ++i) acc += seq.rows[i] * probe[i];
        return acc;
    };

    ps.zero_grads();
    PreprocParams<T> pp{ps.value("embedding"), ps.value("proj_w"), ps.value("proj_b"), T(0.01)};
    preprocess_backward(SequenceView::of(u), pp, probe, ps.grad("embedding"),
                        ps.grad("proj_w"), ps.grad("proj_b"));
    nn::GradCheckReport rep = nn::grad_check(ps, loss_fn, 1e-6);
    INFO(rep.worst_param << "[" << rep.worst_coord << "] analytic=" << rep.worst_analytic
                         << " numeric=" << rep.worst_numeric);
    REQUIRE(rep.max_rel_err < 1e-6);
}
