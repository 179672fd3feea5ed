#include <cmath>
#include <random>

#include "doctest.h"
#include "hyphgt/gnn.hpp"
#include "hyphgt/gradcheck.hpp"
#include "test_support.hpp"

namespace ad = hyphgt::ad;
namespace gn = hyphgt::gnn;
namespace gr = hyphgt::graph;
using ad::Tensor;
using hyphgt::testing::as_params;
using hyphgt::testing::random_tensor;

namespace {

gn::RelationParams random_params(std::mt19937_64& rng, std::size_t n, std::size_t dim) {
    return {random_tensor(rng, {n, dim}, -0.7, 0.7), random_tensor(rng, {n, dim}, -0.7, 0.7),
            random_tensor(rng, {n, dim}, -0.7, 0.7), random_tensor(rng, {1, dim}, -0.7, 0.7)};
}

double w(const Tensor& m, std::size_t i, std::size_t j) { return m.at(i, j); }

// Scalar evaluation of the attention weights and the embedding of node v
// for head k, written directly from the formulas.
struct Oracle {
    std::vector<double> weights;
    std::vector<double> embed;
};

Oracle scalar_oracle(const Tensor& xs, const Tensor& xt, const std::vector<std::uint32_t>& nbrs, std::uint32_t v,
                     const gn::RelationParams& p, std::size_t heads, std::size_t k, double slope) {
    const std::size_t n = xs.cols(), dh = p.a.cols() / heads;
    Oracle o;
    std::vector<double> scores;
    for (auto u : nbrs) {
        double s = 0;
        for (std::size_t a = 0; a < dh; ++a) {
            const std::size_t col = k * dh + a;
            double pre = 0;
            for (std::size_t b = 0; b < n; ++b) pre += w(p.w_left, b, col) * xs.at(v, b) + w(p.w_right, b, col) * xt.at(u, b);
            const double act = pre > 0 ? pre : slope * pre;
            s += p.a.at(0, col) * act;
        }
        scores.push_back(s);
    }
    double mx = -INFINITY;
    for (double s : scores) mx = std::max(mx, s);
    double z = 0;
    for (double s : scores) z += std::exp(s - mx);
    for (double s : scores) o.weights.push_back(std::exp(s - mx) / z);
    for (std::size_t a = 0; a < dh; ++a) {
        const std::size_t col = k * dh + a;
        double acc = 0;
        for (std::size_t e = 0; e < nbrs.size(); ++e) {
            double msg = 0;
            for (std::size_t b = 0; b < n; ++b) msg += w(p.w_agg, b, col) * xt.at(nbrs[e], b);
            acc += o.weights[e] * msg;
        }
        o.embed.push_back(acc > 0 ? acc : std::expm1(acc));
    }
    return o;
}

gr::DirectedRelation star(std::size_t leaves) {
    gr::DirectedRelation r;
    r.name = "star";
    r.source = 0;
    r.target = 1;
    for (std::uint32_t u = 0; u < leaves; ++u) {
        r.src.push_back(0);
        r.dst.push_back(u);
    }
    return r;
}

}  // namespace

TEST_CASE("attention weights") {
    std::mt19937_64 rng(1);
    auto p = random_params(rng, 3, 4);
    Tensor xs = random_tensor(rng, {1, 3});
    SUBCASE("single neighbour") {
        Tensor xt = random_tensor(rng, {1, 3});
        auto out = gn::relation_forward(xs, xt, star(1), p, 2, 0.2);
        CHECK(out.weights.at(0, 0) == 1.0);
        CHECK(out.weights.at(0, 1) == 1.0);
        for (std::size_t a = 0; a < 4; ++a) {
            double msg = 0;
            for (std::size_t b = 0; b < 3; ++b) msg += p.w_agg.at(b, a) * xt.at(0, b);
            CHECK(out.embed.at(0, a) == doctest::Approx(msg > 0 ? msg : std::expm1(msg)).epsilon(1e-14));
        }
    }
    SUBCASE("identical neighbours split evenly") {
        Tensor xt = Tensor::matrix({{0.3, -0.2, 0.9}, {0.3, -0.2, 0.9}});
        auto out = gn::relation_forward(xs, xt, star(2), p, 2, 0.2);
        for (double v : out.weights.data()) CHECK(v == doctest::Approx(0.5).epsilon(1e-15));
    }
    SUBCASE("zero neighbour features give a zero embedding") {
        auto out = gn::relation_forward(xs, Tensor::zeros({3, 3}), star(3), p, 2, 0.2);
        for (double v : out.embed.data()) CHECK(v == 0.0);
    }
}

TEST_CASE("vectorised relation matches the scalar oracle") {
    std::mt19937_64 rng(2);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t heads = 1 + trial % 4, dh = 1 + trial % 3, n = 2 + trial % 5;
        auto p = random_params(rng, n, heads * dh);
        Tensor xs = random_tensor(rng, {5, n});
        Tensor xt = random_tensor(rng, {7, n});
        gr::DirectedRelation r;
        r.source = 0;
        r.target = 1;
        std::vector<std::vector<std::uint32_t>> nbrs(5);
        std::uniform_int_distribution<std::uint32_t> pick(0, 6);
        for (std::uint32_t v = 0; v < 4; ++v) {  // node 4 stays isolated
            for (int e = 0; e < 3; ++e) {
                auto u = pick(rng);
                r.src.push_back(v);
                r.dst.push_back(u);
                nbrs[v].push_back(u);
            }
        }
        auto out = gn::relation_forward(xs, xt, r, p, heads, 0.2);
        for (std::uint32_t v = 0; v < 4; ++v) {
            for (std::size_t k = 0; k < heads; ++k) {
                auto o = scalar_oracle(xs, xt, nbrs[v], v, p, heads, k, 0.2);
                double sum = 0;
                for (std::size_t e = 0; e < 3; ++e) {
                    const double got = out.weights.at(v * 3 + e, k);
                    CHECK(std::abs(got - o.weights[e]) <= 1e-12);
                    sum += got;
                }
                CHECK(std::abs(sum - 1.0) <= 1e-12);
                for (std::size_t a = 0; a < dh; ++a)
                    CHECK(std::abs(out.embed.at(v, k * dh + a) - o.embed[a]) <= 1e-12);
            }
        }
        for (std::size_t a = 0; a < heads * dh; ++a) CHECK(out.embed.at(4, a) == 0.0);
    }
}

TEST_CASE("neighbour order does not matter") {
    std::mt19937_64 rng(3);
    auto p = random_params(rng, 3, 4);
    Tensor xs = random_tensor(rng, {1, 3});
    Tensor xt = random_tensor(rng, {4, 3});
    auto r = star(4);
    auto a = gn::relation_forward(xs, xt, r, p, 2, 0.2);
    std::reverse(r.dst.begin(), r.dst.end());
    auto b = gn::relation_forward(xs, xt, r, p, 2, 0.2);
    CHECK(hyphgt::testing::max_abs_diff(a.embed.data(), b.embed.data()) <= 1e-12);
}

namespace {

struct Setup {
    gr::HeteroGraph g;
    std::vector<gr::DirectedRelation> rels;
    std::vector<std::size_t> counts;
    std::vector<Tensor> inputs;
};

Setup toy_setup(std::mt19937_64& rng, std::size_t n) {
    Setup s;
    s.g = gr::toy_graph();
    s.g.node_types.push_back({"D", 2, 1, {0.0, 0.0}});  // no relation touches D
    s.rels = gr::relations_with_inverses(s.g);
    for (const auto& t : s.g.node_types) {
        s.counts.push_back(t.count);
        s.inputs.push_back(random_tensor(rng, {t.count, n}));
    }
    return s;
}

}  // namespace

TEST_CASE("heterogeneous forward") {
    std::mt19937_64 rng(4);
    auto s = toy_setup(rng, 5);
    ad::ParameterStore store;
    gn::GnnConfig cfg;
    cfg.heads = 8;
    cfg.dim = 64;
    gn::HeteroGnn net(s.rels, s.counts, 5, cfg, store, rng);
    auto out = net.forward(s.inputs);
    CHECK(out[0].shape() == ad::Shape{6, 64});
    for (double v : out[3].data()) CHECK(v == 0.0);

    SUBCASE("mean over relations equals the hand average") {
        // A nodes are covered by AB and AC
        auto ab = gn::relation_forward(s.inputs[0], s.inputs[1], s.rels[0], net.params(0, 0), 8, 0.2).embed;
        auto ac = gn::relation_forward(s.inputs[0], s.inputs[2], s.rels[1], net.params(0, 1), 8, 0.2).embed;
        for (std::size_t i = 0; i < ab.numel(); ++i)
            CHECK(out[0].data()[i] == doctest::Approx(0.5 * (ab.data()[i] + ac.data()[i])).epsilon(1e-14));
    }
    SUBCASE("features outside the one-hop neighbourhood have no effect") {
        // A0 neighbours: B0, B1 (AB) and C0 (AC); perturb B3 and C1
        auto perturbed = s.inputs;
        perturbed[1] = perturbed[1] + Tensor::from_data({4, 1}, {0, 0, 0, 7.0});
        perturbed[2] = perturbed[2] + Tensor::from_data({2, 1}, {0, -3.0});
        perturbed[0] = perturbed[0] + Tensor::from_data({6, 1}, {0, 0, 0, 0, 0, 5.0});
        auto out2 = net.forward(perturbed);
        for (std::size_t j = 0; j < 64; ++j) CHECK(out2[0].at(0, j) == out[0].at(0, j));
    }
}

TEST_CASE("one relation and one head reduce to the relation embedding") {
    std::mt19937_64 rng(6);
    gr::HeteroGraph g;
    g.node_types = {{"S", 3, 1, {0, 0, 0}}, {"T", 2, 1, {0, 0}}};
    g.relations = {{"ST", "S", "T", {0, 1, 1}, {0, 0, 1}}};
    std::vector<gr::DirectedRelation> rels{gr::relations_with_inverses(g)[0]};
    ad::ParameterStore store;
    gn::GnnConfig cfg;
    cfg.heads = 1;
    cfg.dim = 3;
    gn::HeteroGnn net(rels, {3, 2}, 4, cfg, store, rng);
    std::vector<Tensor> in{random_tensor(rng, {3, 4}), random_tensor(rng, {2, 4})};
    auto out = net.forward(in);
    auto direct = gn::relation_forward(in[0], in[1], rels[0], net.params(0, 0), 1, 0.2).embed;
    CHECK(hyphgt::testing::max_abs_diff(out[0].data(), direct.data()) == 0.0);
    for (double v : out[0].data().subspan(6, 3)) CHECK(v == 0.0);  // node 2 has no edges
}

TEST_CASE("gnn gradients match central differences") {
    std::mt19937_64 rng(7);
    auto s = toy_setup(rng, 4);
    ad::ParameterStore store;
    gn::GnnConfig cfg;
    cfg.heads = 2;
    cfg.dim = 4;
    cfg.layers = 2;
    gn::HeteroGnn net(s.rels, s.counts, 4, cfg, store, rng);
    std::vector<Tensor> leaves;
    for (auto& x : s.inputs) {
        x.set_requires_grad(true);
        leaves.push_back(x);
    }
    auto loss = [&] {
        auto out = net.forward(s.inputs);
        return ad::sum(ad::square(out[0])) + ad::sum(out[1]) + ad::sum(out[2] * 0.3);
    };
    auto params = store.trainable();
    for (std::size_t i = 0; i < 3; ++i) params.push_back({"input" + std::to_string(i), leaves[i]});
    CHECK(ad::finite_diff_check(loss, params, 1e-5).max_rel_error <= 1e-4);
}
