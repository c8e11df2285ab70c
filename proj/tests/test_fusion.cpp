#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "resp/error.hpp"
#include "resp/fusion.hpp"
#include "test_support.hpp"

using namespace resp;
using resp::testing::random_tensor;

namespace {

Embedding random_embedding(std::size_t n, Rng& rng) { return Embedding{resp::testing::random_signal(n, rng)}; }

void randomize(Parameter& p, Rng& rng) {
    for (auto& v : p.value.data()) v = 2.0 * rng.uniform() - 1.0;
}

GateHeads random_heads(std::size_t e, std::size_t s, Rng& rng) {
    GateHeads h{make_head(e, 3, "a"), make_head(s * e, 3, "c"), make_head(e, 3, "f")};
    for (Head* head : {&h.add, &h.concat, &h.full}) {
        randomize(head->weight, rng);
        randomize(head->bias, rng);
    }
    return h;
}

std::vector<double> direct_affine(std::span<const double> z, const Head& h) {
    std::vector<double> out(h.bias.value.numel());
    for (std::size_t j = 0; j < out.size(); ++j) {
        double acc = 0.0;
        for (std::size_t i = 0; i < z.size(); ++i) acc += z[i] * h.weight.value.at(i, j);
        out[j] = acc + h.bias.value[j];
    }
    return out;
}

LogitVars constant_bundle(Tape& tape, std::vector<std::vector<double>> rows) {
    auto c = [&](const std::vector<double>& r) { return tape.constant(Tensor({1, r.size()}, r)); };
    return {c(rows[0]), c(rows[1]), c(rows[2]), c(rows[3])};
}

}  // namespace

TEST_CASE("window fusion layout") {
    Rng rng(1);
    const auto e = random_embedding(512, rng);
    const std::vector<Embedding> same(4, e);
    const auto f = fuse_windows(same);
    for (std::size_t i = 0; i < 512; ++i) CHECK(f.add[i] == ((e.values[i] + e.values[i]) + e.values[i]) + e.values[i]);
    for (std::size_t i = 0; i < 512; ++i) CHECK(f.add[i] == doctest::Approx(4.0 * e.values[i]));

    const std::vector<Embedding> one{e};
    const auto g = fuse_windows(one);
    CHECK(g.add == e.values);
    CHECK(g.concat == e.values);

    const std::vector<Embedding> three{random_embedding(512, rng), random_embedding(512, rng),
                                       random_embedding(512, rng)};
    const auto h = fuse_windows(three);
    REQUIRE(h.concat.size() == 3 * 512);
    for (std::size_t w = 0; w < 3; ++w)
        for (std::size_t i = 0; i < 512; ++i) CHECK(h.concat[512 * w + i] == three[w].values[i]);

    CHECK_THROWS_AS(fuse_windows(std::vector<Embedding>{}), DimensionError);
    CHECK_THROWS_AS(fuse_windows(std::vector<Embedding>{Embedding{{1, 2}}, Embedding{{1}}}), DimensionError);

    // the tape versions agree bit for bit
    Tape tape;
    std::vector<Var> vars;
    for (const auto& x : three) vars.push_back(tape.constant(Tensor::row(x.values)));
    const auto add = tape.value(fuse_add(tape, vars));
    const auto cat = tape.value(fuse_concat(tape, vars));
    CHECK(add.values() == h.add);
    CHECK(cat.values() == h.concat);
}

TEST_CASE("classifier heads") {
    GateHeads zero{make_head(4, 3, "a"), make_head(8, 3, "c"), make_head(4, 3, "f")};
    const std::vector<double> z4(4, 0.0), z8(8, 0.0);
    const auto b = heads_forward(z4, z8, z4, zero);
    for (const auto* v : {&b.l_add, &b.l_concat, &b.l_full, &b.l_avg})
        for (double x : *v) CHECK(x == 0.0);

    Tape tape;
    const auto avg = constant_bundle(tape, {{3, 0, 0}, {0, 3, 0}, {0, 0, 3}, {0, 0, 0}});
    Var mean = tape.scale(tape.add(tape.add(avg.add, avg.concat), avg.full), 1.0 / 3.0);
    CHECK(tape.value(mean).values() == std::vector<double>{1, 1, 1});

    Rng rng(2);
    for (int trial = 0; trial < 20; ++trial) {
        const auto heads = random_heads(6, 3, rng);
        const auto za = resp::testing::random_signal(6, rng);
        const auto zc = resp::testing::random_signal(18, rng);
        const auto zf = resp::testing::random_signal(6, rng);
        const auto got = heads_forward(za, zc, zf, heads);
        CHECK(got.l_add == direct_affine(za, heads.add));
        CHECK(got.l_concat == direct_affine(zc, heads.concat));
        CHECK(got.l_full == direct_affine(zf, heads.full));
        for (std::size_t j = 0; j < 3; ++j)
            CHECK(got.l_avg[j] == ((got.l_add[j] + got.l_concat[j]) + got.l_full[j]) * (1.0 / 3.0));
    }

    const auto heads = random_heads(6, 3, rng);
    CHECK_THROWS_AS(heads_forward(std::vector<double>(6), std::vector<double>(12), std::vector<double>(6), heads),
                    DimensionError);
}

TEST_CASE("gate inference picks argmax(g)") {
    GateParams gate;
    gate.g.value = Tensor({4}, {0.1, 2.0, -1.0, 0.0});
    Tape tape;
    const auto bundle = constant_bundle(tape, {{1, 2, 3}, {4, 5, 6}, {7, 8, 9}, {4, 5, 6}});
    const auto out = gumbel_gate(tape, bundle, gate, false, nullptr);
    CHECK(out.chosen == 1);
    CHECK(tape.value(out.logits) == tape.value(bundle.concat));

    // shifting every gate logit by a constant keeps the choice
    for (double c : {-100.0, -1.5, 0.25, 1e6}) {
        GateParams shifted = gate;
        for (auto& v : shifted.g.value.data()) v += c;
        CHECK(gumbel_gate(tape, bundle, shifted, false, nullptr).chosen == 1);
    }

    // ties go to the lowest index, and inference never touches the rng
    GateParams zero;
    Rng rng(5);
    const Rng before = rng;
    CHECK(gumbel_gate(tape, bundle, zero, false, &rng).chosen == 0);
    CHECK(rng.next_u64() == Rng(before).next_u64());
}

TEST_CASE("gate training output is one of the candidates") {
    Rng rng(3);
    GateParams gate;
    randomize(gate.g, rng);
    for (int trial = 0; trial < 200; ++trial) {
        Tape tape;
        std::vector<std::vector<double>> rows(4);
        for (auto& r : rows) r = resp::testing::random_signal(3, rng);
        const auto bundle = constant_bundle(tape, rows);
        const auto out = gumbel_gate(tape, bundle, gate, true, &rng);
        REQUIRE(out.chosen < 4);
        CHECK(tape.value(out.logits).values() == rows[out.chosen]);
    }
}

TEST_CASE("gate selection frequency matches a Monte Carlo oracle") {
    GateParams gate;
    gate.g.value = Tensor({4}, {5.0, 0.0, 0.0, 0.0});
    Rng rng(4);
    const int draws = 10000;
    int hits = 0;
    for (int i = 0; i < draws; ++i) {
        Tape tape;
        const auto bundle = constant_bundle(tape, {{1}, {2}, {3}, {4}});
        hits += gumbel_gate(tape, bundle, gate, true, &rng).chosen == 0;
    }

    // oracle: argmax of g + Gumbel noise drawn from an unrelated generator
    std::mt19937 gen(2024);
    std::extreme_value_distribution<double> gumbel(0.0, 1.0);
    int oracle = 0;
    const int oracle_draws = 200000;
    for (int i = 0; i < oracle_draws; ++i) {
        const double a = 5.0 + gumbel(gen);
        const double b = std::max({gumbel(gen), gumbel(gen), gumbel(gen)});
        oracle += a > b;
    }
    const double rate = hits / double(draws);
    const double expected = oracle / double(oracle_draws);
    CHECK(std::abs(rate - expected) <= 0.02);
    // closed form: softmax(g)[0]
    CHECK(std::abs(rate - std::exp(5.0) / (std::exp(5.0) + 3.0)) <= 0.02);
}

TEST_CASE("gate logits receive a gradient through the straight-through estimator") {
    Rng rng(6);
    GateParams gate;
    randomize(gate.g, rng);
    const auto heads = random_heads(4, 2, rng);
    Tensor za = random_tensor({1, 4}, rng), zc = random_tensor({1, 8}, rng), zf = random_tensor({1, 4}, rng);

    Tensor total({4});
    for (int sample = 0; sample < 8; ++sample) {
        const std::size_t target = static_cast<std::size_t>(sample % 3);
        Rng stream = Rng::stream(1, "gate", sample);
        Tape tape;
        const auto bundle = heads_forward(tape, tape.constant(za), tape.constant(zc), tape.constant(zf), heads);
        const auto out = gumbel_gate(tape, bundle, gate, true, &stream);
        const std::array<Tensor, 4> cand{tape.value(bundle.add), tape.value(bundle.concat), tape.value(bundle.full),
                                         tape.value(bundle.avg)};
        const Tensor logits = tape.value(out.logits);
        const auto grads = tape.backward(tape.smoothed_cross_entropy(out.logits, target, 0.1));
        REQUIRE(grads.contains(gate.g));
        for (std::size_t i = 0; i < 4; ++i) total[i] += grads.of(gate.g)[i];

        // oracle: dL/dw_i = <dL/dl_final, l_i> held fixed, pushed through softmax(g + noise)
        // by finite differences on g
        std::vector<double> dl(3);
        double mx = -1e300, z = 0.0;
        for (double v : logits.data()) mx = std::max(mx, v);
        for (std::size_t j = 0; j < 3; ++j) z += dl[j] = std::exp(logits[j] - mx);
        for (std::size_t j = 0; j < 3; ++j) dl[j] = dl[j] / z - ((j == target ? 0.9 : 0.0) + 0.1 / 3.0);
        std::array<double, 4> dw{};
        for (std::size_t i = 0; i < 4; ++i)
            for (std::size_t j = 0; j < 3; ++j) dw[i] += dl[j] * cand[i][j];
        Rng replay = Rng::stream(1, "gate", sample);
        std::array<double, 4> noise{};
        for (auto& v : noise) v = replay.gumbel();
        auto phi = [&](const Tensor& g) {
            std::array<double, 4> e{};
            double m = -1e300, zz = 0.0, acc = 0.0;
            for (std::size_t i = 0; i < 4; ++i) m = std::max(m, g[i] + noise[i]);
            for (std::size_t i = 0; i < 4; ++i) zz += e[i] = std::exp(g[i] + noise[i] - m);
            for (std::size_t i = 0; i < 4; ++i) acc += e[i] / zz * dw[i];
            return acc;
        };
        for (std::size_t i = 0; i < 4; ++i) {
            Tensor up = gate.g.value, down = gate.g.value;
            up[i] += 1e-5;
            down[i] -= 1e-5;
            const double numeric = (phi(up) - phi(down)) / 2e-5;
            CHECK(resp::testing::relative_error(grads.of(gate.g)[i], numeric) < 1e-4);
        }
    }
    double norm = 0.0;
    for (double v : total.data()) norm += v * v;
    CHECK(norm > 0.0);
}

TEST_CASE("fusion variants") {
    CHECK(parse_variant("gate") == FusionVariant::Gate);
    CHECK(parse_variant("lf_avg_gate") == FusionVariant::Gate);
    for (auto v : all_variants()) CHECK(parse_variant(variant_name(v)) == v);
    CHECK_THROWS_AS(parse_variant("mixture"), ConfigError);

    Rng rng(7);
    const std::size_t e = 4, s = 3;
    std::vector<Tensor> window_values;
    for (std::size_t i = 0; i < s; ++i) window_values.push_back(random_tensor({1, e}, rng));
    const Tensor full_value = random_tensor({1, e}, rng);
    // a tape per model: parameters are keyed by address, which a later object may reuse
    std::vector<Var> windows;
    Var full;
    auto fresh = [&](Tape& tape) {
        windows.clear();
        for (const auto& w : window_values) windows.push_back(tape.constant(w));
        full = tape.constant(full_value);
    };

    for (auto v : all_variants()) {
        Fusion f(v, e, s, 3, 11);
        Tape tape;
        fresh(tape);
        const auto out = f.forward(tape, windows, full, false, nullptr);
        CHECK(tape.value(out.logits).numel() == 3);
        CHECK(out.gate_choice.has_value() == (v == FusionVariant::Gate));
        std::vector<Var> fewer(windows.begin(), windows.end() - 1);
        CHECK_THROWS_AS(f.forward(tape, fewer, full, false, nullptr), DimensionError);
    }

    Fusion cac(FusionVariant::ConcatAddConcat, 512, 3, 3, 1);
    std::size_t width = 0;
    cac.for_each_parameter([&](const Parameter& p) {
        if (p.name.ends_with(".weight")) width = p.value.rows();
    });
    CHECK(width == 512 + 3 * 512);

    // lf_avg of identical logit pairs returns those logits
    Fusion avg(FusionVariant::LfAvg, e, s, 3, 2);
    Tape tape;
    fresh(tape);
    std::vector<Parameter*> ps;
    avg.for_each_parameter([&](Parameter& p) { ps.push_back(&p); });
    // zero the fused head, copy nothing: both heads output their bias
    for (auto* p : ps) p->value = Tensor(p->value.shape());
    ps[1]->value = Tensor({3}, {0.5, -1.0, 2.0});
    ps[3]->value = Tensor({3}, {0.5, -1.0, 2.0});
    CHECK(tape.value(avg.forward(tape, windows, full, false, nullptr).logits).values() ==
          std::vector<double>{0.5, -1.0, 2.0});

    // lf_coef blends with α = sigmoid(a) strictly inside (0, 1)
    Fusion coef(FusionVariant::LfCoef, e, s, 3, 2);
    Parameter* alpha = nullptr;
    coef.for_each_parameter([&](Parameter& p) {
        if (p.name == "lf_coef.alpha") alpha = &p;
    });
    REQUIRE(alpha);
    for (double a : {-30.0, -2.0, 0.0, 3.0, 30.0}) {
        alpha->value[0] = a;
        Tape t;
        const double s_a = t.value(t.sigmoid(t.param(*alpha))).item();
        CHECK(s_a > 0.0);
        CHECK(s_a < 1.0);
    }

    Fusion gated(FusionVariant::Gate, e, s, 3, 5);
    for (double v : gated.gate().g.value.data()) CHECK(v == 0.0);
    CHECK(gated.parameter_count() == (e * 3 + 3) + (s * e * 3 + 3) + (e * 3 + 3) + 4);
}
