#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "doctest.h"
#include "hyphgt/errors.hpp"
#include "hyphgt/gradcheck.hpp"
#include "hyphgt/lorentz.hpp"
#include "hyphgt/transformer.hpp"
#include "test_support.hpp"

namespace ad = hyphgt::ad;
namespace lz = hyphgt::lorentz;
namespace tf = hyphgt::transformer;
namespace gr = hyphgt::graph;
namespace nn = hyphgt::nn;
using ad::Tensor;
using hyphgt::testing::as_params;
using hyphgt::testing::random_tensor;

namespace {

Tensor cst(double c) { return Tensor::scalar(c); }

tf::HeadParams random_head(std::mt19937_64& rng, std::size_t n, std::size_t dh) {
    tf::HeadParams p;
    p.wq = random_tensor(rng, {n + 1, dh}, -0.5, 0.5);
    p.bq = random_tensor(rng, {1, dh}, -0.2, 0.2);
    p.wk = random_tensor(rng, {n + 1, dh}, -0.5, 0.5);
    p.bk = random_tensor(rng, {1, dh}, -0.2, 0.2);
    p.wv = random_tensor(rng, {n + 1, dh}, -0.5, 0.5);
    p.bv = random_tensor(rng, {1, dh}, -0.2, 0.2);
    p.wo = random_tensor(rng, {dh + 1, dh}, -0.5, 0.5);
    p.bo = random_tensor(rng, {1, dh}, -0.2, 0.2);
    p.beta = random_tensor(rng, {1, dh}, 0.5, 1.5);
    return p;
}

// Explicit O(N^2) kernel attention: row_i = sum_j w_ij v_j / sum_j w_ij, w_ij = <q_i, k_j>.
std::vector<double> quadratic_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                                        std::vector<double>* row_weights = nullptr) {
    const std::size_t nq = q.rows(), nk = k.rows(), d = q.cols(), dv = v.cols();
    std::vector<double> out(nq * dv, 0.0);
    for (std::size_t i = 0; i < nq; ++i) {
        std::vector<double> w(nk);
        for (std::size_t j = 0; j < nk; ++j) {
            double s = 0;
            for (std::size_t a = 0; a < d; ++a) s += q.at(i, a) * k.at(j, a);
            w[j] = s;
        }
        const double total = std::accumulate(w.begin(), w.end(), 0.0);
        for (std::size_t j = 0; j < nk; ++j) {
            for (std::size_t a = 0; a < dv; ++a) out[i * dv + a] += w[j] * v.at(j, a);
            if (row_weights) row_weights->push_back(w[j] / total);
        }
        for (std::size_t a = 0; a < dv; ++a) out[i * dv + a] /= total;
    }
    return out;
}

double max_rel(std::span<const double> a, std::span<const double> b) {
    double m = 0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]) / std::max(1.0, std::abs(b[i])));
    return m;
}

}  // namespace

TEST_CASE("kernel feature map") {
    Tensor beta = Tensor::matrix({{1, 0}});
    Tensor neg = Tensor::matrix({{3, -1, -2}});
    Tensor f = tf::kernel_feature(neg, 1e-6, beta);
    CHECK(f.at(0, 0) == 1e-6);
    CHECK(f.at(0, 1) == 1e-6);
    Tensor pos = tf::kernel_feature(Tensor::matrix({{3, 1, 2}}), 1e-300, beta);
    CHECK(pos.at(0, 0) == doctest::Approx(1.0));
    CHECK(pos.at(0, 1) == doctest::Approx(2.0));
    std::mt19937_64 rng(1);
    Tensor any = tf::kernel_feature(random_tensor(rng, {50, 5}, -3, 3), 1e-6, Tensor::matrix({{2, 2, 2, 2}}));
    for (double v : any.data()) CHECK(v >= 1e-6 / 4.0);
}

TEST_CASE("linear attention special cases") {
    std::mt19937_64 rng(2);
    Tensor q = random_tensor(rng, {5, 3}, 0.1, 1.0);
    SUBCASE("a single key returns its value row") {
        Tensor k = random_tensor(rng, {1, 3}, 0.1, 1.0);
        Tensor v = random_tensor(rng, {1, 3}, 0.1, 1.0);
        Tensor h = tf::linear_attention(q, k, v);
        for (std::size_t i = 0; i < 5; ++i)
            for (std::size_t a = 0; a < 3; ++a) CHECK(h.at(i, a) == doctest::Approx(v.at(0, a)).epsilon(1e-14));
    }
    SUBCASE("identical keys give the value mean for every query") {
        Tensor k = Tensor::matrix({{0.3, 0.5, 0.2}, {0.3, 0.5, 0.2}, {0.3, 0.5, 0.2}});
        Tensor v = random_tensor(rng, {3, 3}, 0.1, 1.0);
        Tensor h = tf::linear_attention(q, k, v);
        for (std::size_t a = 0; a < 3; ++a) {
            const double mean = (v.at(0, a) + v.at(1, a) + v.at(2, a)) / 3.0;
            for (std::size_t i = 0; i < 5; ++i) CHECK(h.at(i, a) == doctest::Approx(mean).epsilon(1e-13));
        }
    }
}

TEST_CASE("linear attention equals the quadratic form") {
    std::mt19937_64 rng(3);
    std::uniform_int_distribution<std::size_t> nd(1, 64), hd(1, 16), fd(1, 8);
    for (int trial = 0; trial < 40; ++trial) {
        const std::size_t nq = nd(rng), nk = nd(rng), dh = hd(rng), n = fd(rng);
        const double c_in = -1.0, c_rel = -0.2 - 2.0 * std::uniform_real_distribution<double>(0, 1)(rng);
        Tensor xq = lz::time_reconstruct(random_tensor(rng, {nq, n}, -1, 1), cst(c_in));
        Tensor xk = lz::time_reconstruct(random_tensor(rng, {nk, n}, -1, 1), cst(c_in));
        auto p = random_head(rng, n, dh);
        Tensor h = tf::relation_attention(xq, xk, p, cst(c_in), cst(c_rel), 1e-6);
        CHECK(lz::manifold_residual(h, c_rel) <= 1e-8);

        Tensor qs = tf::kernel_feature(lz::ht(xq, p.wq, p.bq, cst(c_in), cst(c_rel)), 1e-6, p.beta);
        Tensor ks = tf::kernel_feature(lz::ht(xk, p.wk, p.bk, cst(c_in), cst(c_rel)), 1e-6, p.beta);
        Tensor vs = tf::kernel_feature(lz::ht(xk, p.wv, p.bv, cst(c_in), cst(c_rel)), 1e-6, p.beta);
        std::vector<double> weights;
        auto oracle = quadratic_attention(qs, ks, vs, &weights);
        Tensor spatial = ad::slice(h, 1, 1, h.cols());
        CHECK(max_rel(spatial.data(), oracle) <= 1e-8);
        for (double w : weights) CHECK(w > 0);
        for (std::size_t i = 0; i < nq; ++i) {
            double s = 0;
            for (std::size_t j = 0; j < nk; ++j) s += weights[i * nk + j];
            CHECK(std::abs(s - 1.0) <= 1e-12);
        }
    }
}

TEST_CASE("permuting keys and values leaves outputs unchanged") {
    std::mt19937_64 rng(4);
    Tensor xq = lz::time_reconstruct(random_tensor(rng, {6, 4}, -1, 1), cst(-1));
    Tensor xk = lz::time_reconstruct(random_tensor(rng, {9, 4}, -1, 1), cst(-1));
    auto p = random_head(rng, 4, 5);
    std::vector<std::uint32_t> perm(9);
    std::iota(perm.begin(), perm.end(), 0u);
    std::shuffle(perm.begin(), perm.end(), rng);
    Tensor a = tf::relation_attention(xq, xk, p, cst(-1), cst(-0.7), 1e-6);
    Tensor b = tf::relation_attention(xq, ad::gather_rows(xk, perm), p, cst(-1), cst(-0.7), 1e-6);
    CHECK(hyphgt::testing::max_abs_diff(a.data(), b.data()) <= 1e-12);
}

TEST_CASE("with zero output bias the relation curvature cancels as alpha vanishes") {
    // HT into the relation manifold scales by sqrt(c_in/c_rel), the kernel
    // attention is homogeneous in that scale up to the alpha offset, and the
    // output HT undoes it unless its bias is nonzero.
    std::mt19937_64 rng(41);
    const std::size_t n = 5, dh = 4;
    auto p = random_head(rng, n, dh);
    p.bo = Tensor::zeros({1, dh});
    Tensor xq = lz::time_reconstruct(random_tensor(rng, {7, n}, -1.0, 1.0), cst(-1.0));
    Tensor xk = lz::time_reconstruct(random_tensor(rng, {9, n}, -1.0, 1.0), cst(-1.0));
    auto out = [&](double c_rel, double alpha) {
        return tf::project_to_output(tf::relation_attention(xq, xk, p, cst(-1.0), cst(c_rel), alpha), p, cst(c_rel),
                                     cst(-1.0));
    };
    auto spread = [&](double alpha) {
        return hyphgt::testing::max_abs_diff(out(-0.3, alpha).data(), out(-3.0, alpha).data());
    };
    CHECK(spread(1e-12) < 1e-9);
    CHECK(spread(0.5) > 1e-6);
    CHECK(spread(1e-6) < spread(1e-3));
    p.bo = random_tensor(rng, {1, dh}, -0.2, 0.2);
    CHECK(spread(1e-12) > 1e-3);
}

TEST_CASE("relation mean over covering relations") {
    Tensor r0 = Tensor::matrix({{1, 2}, {3, 4}});
    Tensor r1 = Tensor::matrix({{3, 2}, {1, 0}});
    Tensor r2 = Tensor::matrix({{5, 5}});
    auto m = tf::mean_over_relations({r0, r1, r2}, {0, 0, 1}, 3);
    CHECK(m[0].at(0, 0) == 2);
    CHECK(m[0].at(1, 1) == 2);
    CHECK(m[1].at(0, 0) == 5);
    CHECK_FALSE(m[2].defined());
    auto same = tf::mean_over_relations({r0, r0}, {0, 0}, 1);
    CHECK(same[0].data()[3] == 4);
}

namespace {

struct Fixture {
    std::vector<gr::DirectedRelation> rels;
    std::vector<Tensor> inputs;
    ad::ParameterStore store;
    std::mt19937_64 rng{9};
};

Fixture make_fixture(std::size_t dim = 8, std::size_t input_dim = 5) {
    Fixture f;
    auto g = gr::toy_graph();
    f.rels = gr::relations_with_inverses(g);
    for (const auto& t : g.node_types) f.inputs.push_back(random_tensor(f.rng, {t.count, input_dim}, -0.8, 0.8));
    (void)dim;
    return f;
}

}  // namespace

TEST_CASE("embedding and normalisation") {
    auto f = make_fixture();
    tf::TransformerConfig cfg;
    cfg.dim = 8;
    tf::HypTransformer t(f.rels, 3, 5, cfg, f.store, f.rng);

    Tensor zero = t.embed(Tensor::zeros({2, 5}));
    CHECK(zero.at(0, 0) == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(zero.at(1, 3) == 0.0);
    Tensor axis = t.embed(Tensor::matrix({{0.4, 0, 0, 0, 0}}));
    CHECK(axis.at(0, 0) == doctest::Approx(std::cosh(0.4)).epsilon(1e-14));
    CHECK(axis.at(0, 1) == doctest::Approx(std::sinh(0.4)).epsilon(1e-14));

    Tensor x = f.inputs[0];
    Tensor back = lz::log_map_origin(t.embed(x), cst(-1));
    CHECK(hyphgt::testing::max_abs_diff(back.data(), x.data()) <= 1e-6);

    nn::ForwardContext eval;
    Tensor pts = t.embed(x);
    Tensor same = t.normalize_regularize(pts, 0, 0, eval);
    CHECK(hyphgt::testing::max_abs_diff(same.data(), pts.data()) <= 1e-13);

    nn::ForwardContext train;
    train.training = true;
    train.update_running_stats = false;
    Tensor cols = Tensor::matrix({{0.5, 1.0, 0, 0, 0}, {0.5, -1.0, 0, 0, 0}, {0.5, 0.0, 0, 0, 0}});
    Tensor normed = t.normalize_regularize(lz::time_reconstruct(cols, cst(-1)), 0, 0, train, false);
    CHECK(lz::manifold_residual(normed, -1) <= 1e-8);
    // first spatial column is constant and lands on the shift (0)
    for (std::size_t i = 0; i < 3; ++i) CHECK(std::abs(normed.at(i, 1)) <= 1e-12);
    // second column has mean 0 and biased variance 2/3
    CHECK(normed.at(0, 2) == doctest::Approx(1.0 / std::sqrt(2.0 / 3.0)).epsilon(1e-12));
    CHECK(normed.at(2, 2) == doctest::Approx(0.0));
}

TEST_CASE("full transformer forward") {
    auto f = make_fixture();
    tf::TransformerConfig cfg;
    cfg.dim = 8;
    cfg.heads = 2;
    tf::HypTransformer t(f.rels, 3, 5, cfg, f.store, f.rng);
    nn::ForwardContext ctx;
    auto out = t.forward(f.inputs, ctx);
    REQUIRE(out.size() == 3);
    CHECK(out[0].shape() == ad::Shape{6, 8});
    CHECK(out[1].shape() == ad::Shape{4, 8});
    CHECK(out[2].shape() == ad::Shape{2, 8});
    CHECK(t.curvature_names() == std::vector<std::string>{"AB", "AC", "AB_inv", "AC_inv", "c_out"});
    for (double c : t.curvature_values()) CHECK(c == doctest::Approx(-1.0));

    SUBCASE("training mode stays on the manifold and is seed-deterministic") {
        std::mt19937_64 r1(5), r2(5);
        nn::ForwardContext a, b;
        a.training = b.training = true;
        a.update_running_stats = b.update_running_stats = false;
        a.rng = &r1;
        b.rng = &r2;
        auto oa = t.forward(f.inputs, a);
        auto ob = t.forward(f.inputs, b);
        for (std::size_t i = 0; i < 3; ++i)
            CHECK(std::equal(oa[i].data().begin(), oa[i].data().end(), ob[i].data().begin()));
    }
}

TEST_CASE("two layers and an uncovered type") {
    Fixture f;
    gr::HeteroGraph g = gr::toy_graph();
    g.node_types.push_back({"D", 3, 2, std::vector<double>(6, 0.1)});
    f.rels = gr::relations_with_inverses(g);
    for (const auto& t : g.node_types) f.inputs.push_back(random_tensor(f.rng, {t.count, 4}, -0.5, 0.5));
    tf::TransformerConfig cfg;
    cfg.dim = 6;
    cfg.heads = 3;
    cfg.layers = 2;
    tf::HypTransformer t(f.rels, 4, 4, cfg, f.store, f.rng);
    nn::ForwardContext ctx;
    auto out = t.forward(f.inputs, ctx);
    CHECK(out[3].shape() == ad::Shape{3, 6});
    CHECK(f.store.contains("transformer.l1.fallback.w"));
    CHECK(t.curvature_names().front() == "l0.AB");
}

TEST_CASE("transformer gradients match central differences") {
    auto f = make_fixture();
    tf::TransformerConfig cfg;
    cfg.dim = 4;
    cfg.heads = 2;
    cfg.dropout = 0.0;
    tf::HypTransformer t(f.rels, 3, 5, cfg, f.store, f.rng);
    auto loss = [&] {
        nn::ForwardContext ctx;
        ctx.training = true;
        ctx.update_running_stats = false;
        auto out = t.forward(f.inputs, ctx);
        Tensor s = ad::sum(ad::square(out[0])) + ad::sum(out[1]) * 0.5 + ad::sum(ad::square(out[2])) * 0.2;
        return s;
    };
    auto params = f.store.trainable();
    auto report = ad::finite_diff_check(loss, params, 1e-5);
    CHECK(report.max_rel_error <= 1e-4);
}
