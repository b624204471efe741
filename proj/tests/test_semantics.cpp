#include "doctest.h"
#include "support.hpp"
#include "zsxm/semantics.hpp"

using namespace zsxm;
using zsxm::test::TempDir;

namespace {

Errc code_of(auto&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("expected zsxm::Error");
    return Errc::io_error;
}

}  // namespace

TEST_CASE("word vectors load by class name with space to underscore matching") {
    TempDir dir;
    zsxm::test::write(dir / "w.txt",
                      "Storage_tanks 1 2 3\n"
                      "airplane 0 0 4\n"
                      "unrelated 9 9 9\n"
                      "\n");
    const auto t = load_word_vectors(dir / "w.txt", {"Storage tanks", "airplane"});
    CHECK(t.dim() == 3);
    CHECK(t.size() == 2);
    CHECK(t.at("Storage tanks") == std::vector<double>{1, 2, 3});
    CHECK_FALSE(t.contains("unrelated"));

    const auto n = load_word_vectors(dir / "w.txt", {"airplane"}, 3, true);
    CHECK(n.at("airplane") == std::vector<double>{0, 0, 1});
    const Matrix rows = t.rows({"airplane", "Storage tanks"});
    CHECK(rows(0, 2) == 4.0);
    CHECK(rows(1, 0) == 1.0);
}

TEST_CASE("word vector errors") {
    TempDir dir;
    zsxm::test::write(dir / "w.txt", "a 1 2\nb 3 4\n");
    CHECK(code_of([&] { load_word_vectors(dir / "w.txt", {"a", "c"}); }) == Errc::missing_class);
    CHECK(code_of([&] { load_word_vectors(dir / "w.txt", {"a"}, 300); }) == Errc::dimension_mismatch);
    CHECK(code_of([&] { load_word_vectors(dir / "absent.txt", {"a"}); }) == Errc::missing_file);
    zsxm::test::write(dir / "dup.txt", "a 1 2\na 3 4\n");
    CHECK(code_of([&] { load_word_vectors(dir / "dup.txt", {"a"}); }) == Errc::duplicate_class);
    zsxm::test::write(dir / "ragged.txt", "a 1 2\nb 3\n");
    CHECK(code_of([&] { load_word_vectors(dir / "ragged.txt", {"a"}); }) == Errc::dimension_mismatch);
    zsxm::test::write(dir / "bad.txt", "a 1 x\n");
    CHECK(code_of([&] { load_word_vectors(dir / "bad.txt", {"a"}); }) == Errc::parse_error);
    CHECK(code_of([] { SemanticTable(2, {{"a", {1.0}}}); }) == Errc::dimension_mismatch);
    CHECK(code_of([] { SemanticTable(1, {{"a", {std::nan("")}}}); }) == Errc::non_finite);
    CHECK(code_of([] { SemanticTable(1, {{"a", {1.0}}}).at("b"); }) == Errc::missing_class);
}

TEST_CASE("word vectors round trip exactly") {
    TempDir dir;
    Rng rng(2);
    std::map<std::string, std::vector<double>> v;
    for (const char* name : {"a b", "c", "d"}) {
        auto& row = v[name];
        for (int i = 0; i < 6; ++i) row.push_back(rng.normal() / 3.0);
    }
    const SemanticTable table(6, v);
    save_word_vectors(dir / "w.txt", table);
    CHECK(load_word_vectors(dir / "w.txt", {"a b", "c", "d"}) == table);
}

TEST_CASE("projection init is Glorot bounded and deterministic") {
    const auto p = SemanticProjection::init(300, 128, 0, 9);
    REQUIRE(p.layers().size() == 1);
    const double limit = std::sqrt(6.0 / 428.0);
    CHECK(p.layers()[0].weight.cwiseAbs().maxCoeff() <= limit);
    CHECK(p.layers()[0].weight.cwiseAbs().maxCoeff() > 0.9 * limit);
    CHECK(p.layers()[0].bias.isZero());
    CHECK(p.layers()[0].weight == SemanticProjection::init(300, 128, 0, 9).layers()[0].weight);
    CHECK(p.layers()[0].weight != SemanticProjection::init(300, 128, 0, 10).layers()[0].weight);
    CHECK(SemanticProjection::init(300, 128, 64, 9).layers().size() == 2);
}

TEST_CASE("projection forward matches a scalar loop and project maps every class") {
    Rng rng(4);
    auto p = SemanticProjection::init(5, 3, 4, 1);
    for (auto& l : p.layers()) l.bias = zsxm::test::random_vector(l.bias.size(), rng);
    const Matrix x = zsxm::test::random_matrix(6, 5, rng);
    const Matrix y = p.forward(x);
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
        std::vector<double> h(4);
        for (int o = 0; o < 4; ++o) {
            double s = p.layers()[0].bias[o];
            for (int i = 0; i < 5; ++i) s += p.layers()[0].weight(o, i) * x(r, i);
            h[static_cast<std::size_t>(o)] = zsxm::test::leaky(s, 0.01);
        }
        for (int o = 0; o < 3; ++o) {
            double s = p.layers()[1].bias[o];
            for (int i = 0; i < 4; ++i) s += p.layers()[1].weight(o, i) * h[static_cast<std::size_t>(i)];
            CHECK(y(r, o) == doctest::Approx(s).epsilon(1e-13));
        }
    }
    const SemanticTable table(5, {{"a", {1, 0, 0, 0, 0}}, {"b", {0, 1, 2, 3, 4}}});
    const auto projected = project(table, p);
    CHECK(projected.dim() == 3);
    const Matrix pb = p.forward(table.rows({"b"}));
    CHECK(projected.at("b") == std::vector<double>(pb.data(), pb.data() + 3));
    CHECK(code_of([&] { project(SemanticTable(4, {{"a", {1, 0, 0, 0}}}), p); }) == Errc::dimension_mismatch);
    CHECK(code_of([&] { p.forward(Matrix::Zero(1, 2)); }) == Errc::dimension_mismatch);
}

TEST_CASE("projection gradients match finite differences") {
    for (std::size_t hidden : {0u, 4u}) {
        Rng rng(8 + hidden);
        auto p = SemanticProjection::init(5, 3, hidden, 3);
        for (auto& l : p.layers()) l.bias = zsxm::test::random_vector(l.bias.size(), rng, 0.3);
        const Matrix x = zsxm::test::random_matrix(4, 5, rng);
        const Matrix upstream = zsxm::test::random_matrix(4, 3, rng);
        auto f = [&] { return (p.forward(x).array() * upstream.array()).sum(); };
        SemanticProjection::Cache cache;
        p.forward(x, &cache);
        const auto grads = p.backward(cache, upstream);
        for (std::size_t l = 0; l < p.layers().size(); ++l) {
            auto& L = p.layers()[l];
            const auto gw = zsxm::test::numeric_gradient(L.weight.data(), L.weight.size(), f);
            const auto gb = zsxm::test::numeric_gradient(L.bias.data(), L.bias.size(), f);
            CHECK(zsxm::test::relative_error(grads[l].weight.data(), gw.data(), L.weight.size()) < 1e-7);
            CHECK(zsxm::test::relative_error(grads[l].bias.data(), gb.data(), L.bias.size()) < 1e-7);
        }
    }
}

TEST_CASE("projection constructor checks shapes") {
    CHECK(code_of([] { SemanticProjection(std::vector<AffineLayer>{}); }) == Errc::invalid_argument);
    AffineLayer a{Matrix::Zero(3, 2), Vector::Zero(3)};
    AffineLayer b{Matrix::Zero(2, 4), Vector::Zero(2)};
    CHECK(code_of([&] { SemanticProjection({a, b}); }) == Errc::dimension_mismatch);
    AffineLayer c{Matrix::Zero(3, 2), Vector::Zero(2)};
    CHECK(code_of([&] { SemanticProjection({c}); }) == Errc::dimension_mismatch);
}

TEST_CASE("identity and zero projections") {
    const SemanticTable table(3, {{"a", {1, 2, 3}}, {"b", {-1, 0, 0.5}}});
    AffineLayer id{Matrix::Identity(3, 3), Vector::Zero(3)};
    CHECK(project(table, SemanticProjection({id})) == table);
    AffineLayer zero{Matrix::Zero(2, 3), Vector(2)};
    zero.bias << 0.25, -4.0;
    const auto z = project(table, SemanticProjection({zero}));
    CHECK(z.at("a") == std::vector<double>{0.25, -4.0});
    CHECK(z.at("b") == std::vector<double>{0.25, -4.0});
}

TEST_CASE("bias-free single-layer projection is linear") {
    Rng rng(12);
    const auto p = SemanticProjection::init(6, 4, 0, 5);
    for (int trial = 0; trial < 20; ++trial) {
        const Matrix w1 = zsxm::test::random_matrix(1, 6, rng), w2 = zsxm::test::random_matrix(1, 6, rng);
        const double a = rng.normal(), b = rng.normal();
        const Matrix lhs = p.forward(a * w1 + b * w2);
        const Matrix rhs = a * p.forward(w1) + b * p.forward(w2);
        CHECK((lhs - rhs).cwiseAbs().maxCoeff() <= 1e-10);
    }
}

TEST_CASE("reloading word vectors is bit-stable") {
    TempDir dir;
    zsxm::test::write(dir / "w.txt", "a 0.1 -2.5e-3 7\nb 1e-300 3.14159 -0\n");
    const auto first = load_word_vectors(dir / "w.txt", {"a", "b"});
    CHECK(load_word_vectors(dir / "w.txt", {"a", "b"}) == first);
    save_word_vectors(dir / "x.txt", first);
    CHECK(load_word_vectors(dir / "x.txt", {"a", "b"}) == first);
}
