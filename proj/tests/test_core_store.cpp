#include <cstring>

#include "doctest.h"
#include "support.hpp"
#include "zsxm/feature_store.hpp"

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

std::vector<Instance> two_class_instances() {
    return {{"s0", Modality::Sketch, "cat", {1.0, 2.0}},
            {"i0", Modality::Image, "cat", {3.0, 4.0}},
            {"s1", Modality::Sketch, "dog", {5.0, 6.0}},
            {"i1", Modality::Image, "dog", {7.0, 8.0}}};
}

void write_f32(const std::filesystem::path& p, const std::vector<float>& v) {
    std::string bytes(v.size() * sizeof(float), '\0');
    std::memcpy(bytes.data(), v.data(), bytes.size());
    zsxm::test::write(p, bytes);
}

}  // namespace

TEST_CASE("modality tags parse in any case and reject others") {
    CHECK(parse_modality("sketch") == Modality::Sketch);
    CHECK(parse_modality("IMAGE") == Modality::Image);
    CHECK(to_string(Modality::Image) == "image");
    CHECK(code_of([] { parse_modality("photo"); }) == Errc::unknown_modality);
}

TEST_CASE("fnv1a matches published test vectors") {
    CHECK(fnv1a("", 0) == 0xcbf29ce484222325ULL);
    CHECK(fnv1a("a", 1) == 0xaf63dc4c8601ec8cULL);
    CHECK(fnv1a("foobar", 6) == 0x85944171f73967e8ULL);
    CHECK(hex64(0xabcULL) == "0000000000000abc");
}

TEST_CASE("rng is reproducible and draws stay in range") {
    Rng a(7), b(7), c(8);
    bool differs = false;
    for (int i = 0; i < 100; ++i) {
        const auto x = a.next();
        CHECK(x == b.next());
        differs |= x != c.next();
    }
    CHECK(differs);
    Rng r(1);
    double sum = 0.0, sq = 0.0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) {
        const double u = r.uniform();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
        CHECK(r.index(5) < 5);
        const double z = r.normal();
        sum += z;
        sq += z * z;
    }
    CHECK(std::abs(sum / n) < 0.05);
    CHECK(std::abs(sq / n - 1.0) < 0.05);
    CHECK(derive_seed(42, 1) != derive_seed(42, 2));
    CHECK(derive_seed(42, 1) == derive_seed(42, 1));
}

TEST_CASE("store validates its instances") {
    CHECK_NOTHROW(FeatureStore(two_class_instances(), {"cat", "dog"}, 2));
    CHECK(code_of([] { FeatureStore({}, {"cat"}, 2); }) == Errc::empty_store);

    auto bad_dim = two_class_instances();
    bad_dim[2].features.push_back(1.0);
    CHECK(code_of([&] { FeatureStore(bad_dim, {"cat", "dog"}, 2); }) == Errc::dimension_mismatch);

    auto nan = two_class_instances();
    nan[1].features[0] = std::nan("");
    CHECK(code_of([&] { FeatureStore(nan, {"cat", "dog"}, 2); }) == Errc::non_finite);

    CHECK(code_of([] { FeatureStore(two_class_instances(), {"cat"}, 2); }) == Errc::unknown_class);
    CHECK(code_of([] { FeatureStore(two_class_instances(), {"cat", "dog", "cat"}, 2); }) == Errc::duplicate_class);

    auto dup = two_class_instances();
    dup[3].id = "s0";
    CHECK(code_of([&] { FeatureStore(dup, {"cat", "dog"}, 2); }) == Errc::invalid_argument);
}

TEST_CASE("require_complete flags a class missing a modality") {
    auto inst = two_class_instances();
    inst.pop_back();
    const FeatureStore store(inst, {"cat", "dog"}, 2);
    CHECK(code_of([&] { store.require_complete(); }) == Errc::missing_class);
    CHECK_NOTHROW(FeatureStore(two_class_instances(), {"cat", "dog"}, 2).require_complete());
}

TEST_CASE("access log counts reads through at() only") {
    FeatureStore store(two_class_instances(), {"cat", "dog"}, 2);
    auto log = std::make_shared<AccessLog>(store.size());
    store.attach_access_log(log);
    store.at(1);
    store.at(1);
    store.at(3);
    (void)store.instances()[0];
    CHECK(log->count(0) == 0);
    CHECK(log->count(1) == 2);
    CHECK(log->count(3) == 1);
    log->reset();
    CHECK(log->count(1) == 0);
    CHECK(code_of([&] { store.at(4); }) == Errc::invalid_argument);
}

TEST_CASE("split partitions classes and instances") {
    const FeatureStore store(two_class_instances(), {"cat", "dog"}, 2);
    const auto split = make_split(store, {"dog"});
    CHECK(split.seen_classes == std::vector<std::string>{"cat"});
    CHECK(split.unseen_classes == std::vector<std::string>{"dog"});
    CHECK(split.train_instances == std::vector<std::size_t>{0, 1});
    CHECK(split.test_instances == std::vector<std::size_t>{2, 3});
    CHECK(split.is_seen("cat"));
    CHECK_FALSE(split.is_seen("dog"));
    CHECK(split.seen_index("cat") == 0u);
    CHECK_FALSE(split.seen_index("dog"));

    CHECK(code_of([&] { make_split(store, {}); }) == Errc::invalid_split);
    CHECK(code_of([&] { make_split(store, {"cat", "dog"}); }) == Errc::invalid_split);
    CHECK(code_of([&] { make_split(store, {"bird"}); }) == Errc::unknown_class);
}

TEST_CASE("split is a disjoint cover for random class subsets") {
    Rng rng(3);
    std::vector<Instance> inst;
    std::vector<std::string> classes;
    for (int c = 0; c < 9; ++c) {
        classes.push_back("c" + std::to_string(c));
        for (int k = 0; k < 4; ++k)
            inst.push_back({"x" + std::to_string(c) + "_" + std::to_string(k), k % 2 ? Modality::Image : Modality::Sketch,
                            classes.back(), {rng.normal()}});
    }
    const FeatureStore store(inst, classes, 1);
    for (int trial = 0; trial < 50; ++trial) {
        std::set<std::string> unseen;
        for (const auto& c : classes)
            if (rng.uniform() < 0.4) unseen.insert(c);
        if (unseen.empty() || unseen.size() == classes.size()) continue;
        const auto split = make_split(store, unseen);
        CHECK(split.train_instances.size() + split.test_instances.size() == store.size());
        for (auto i : split.train_instances) CHECK_FALSE(unseen.contains(store.instances()[i].label));
        for (auto i : split.test_instances) CHECK(unseen.contains(store.instances()[i].label));
        CHECK(split.seen_classes.size() + split.unseen_classes.size() == classes.size());
    }
}

TEST_CASE("csv payload rows are addressed by offset") {
    TempDir dir;
    zsxm::test::write(dir / "feat.csv", "1,2,3\n4,5,6\n7,8,9\n");
    zsxm::test::write(dir / "store.csv",
                      "id,modality,label,features_path,offset,count\n"
                      "a,sketch,cat,feat.csv,2,3\n"
                      "b,Image,cat,feat.csv,0,3\n");
    const auto store = load_store(dir / "store.csv");
    REQUIRE(store.size() == 2);
    CHECK(store.dim() == 3);
    CHECK(store.instances()[0].features == std::vector<double>{7, 8, 9});
    CHECK(store.instances()[1].modality == Modality::Image);
    CHECK(store.instances()[1].features == std::vector<double>{1, 2, 3});
    CHECK(store.classes() == std::vector<std::string>{"cat"});
    CHECK(store.featurizer_hash().empty());
}

TEST_CASE("binary payload offsets count float32 elements") {
    TempDir dir;
    write_f32(dir / "feat.f32", {0.5f, 1.5f, 2.5f, 3.5f, 4.5f});
    zsxm::test::write(dir / "store.csv",
                      "id,modality,label,features_path,offset,count\n"
                      "a,sketch,cat,feat.f32,1,2\n"
                      "b,image,dog,feat.f32,3,2\n");
    const auto store = load_store(dir / "store.csv");
    CHECK(store.instances()[0].features == std::vector<double>{1.5, 2.5});
    CHECK(store.instances()[1].features == std::vector<double>{3.5, 4.5});
    CHECK(store.classes() == std::vector<std::string>{"cat", "dog"});

    zsxm::test::write(dir / "over.csv",
                      "id,modality,label,features_path,offset,count\n"
                      "a,sketch,cat,feat.f32,4,2\n");
    CHECK(code_of([&] { load_store(dir / "over.csv"); }) == Errc::parse_error);
}

TEST_CASE("sidecar fixes class order and featurizer hash") {
    TempDir dir;
    zsxm::test::write(dir / "feat.csv", "1\n2\n");
    zsxm::test::write(dir / "store.csv",
                      "id,modality,label,features_path,offset,count\n"
                      "a,sketch,cat,feat.csv,0,1\n"
                      "b,image,dog,feat.csv,1,1\n");
    zsxm::test::write(dir / "store.json", R"({"dim":1,"classes":["dog","cat","emu"],"featurizer":"abc"})");
    const auto store = load_store(dir / "store.csv");
    CHECK(store.classes() == std::vector<std::string>{"dog", "cat", "emu"});
    CHECK(store.class_index("cat") == 1u);
    CHECK(store.featurizer_hash() == "abc");

    zsxm::test::write(dir / "store.json", R"({"dim":2})");
    CHECK(code_of([&] { load_store(dir / "store.csv"); }) == Errc::dimension_mismatch);
    zsxm::test::write(dir / "store.json", R"({"classes":["dog"]})");
    CHECK(code_of([&] { load_store(dir / "store.csv"); }) == Errc::unknown_class);
    zsxm::test::write(dir / "store.json", "{not json");
    CHECK(code_of([&] { load_store(dir / "store.csv"); }) == Errc::parse_error);
}

TEST_CASE("manifest errors carry distinct codes") {
    TempDir dir;
    zsxm::test::write(dir / "feat.csv", "1,2\nnan,2\n1,x\n");
    const std::string header = "id,modality,label,features_path,offset,count\n";
    auto load = [&](const std::string& body) {
        zsxm::test::write(dir / "m.csv", body);
        return code_of([&] { load_store(dir / "m.csv"); });
    };
    CHECK(code_of([&] { load_store(dir / "absent.csv"); }) == Errc::missing_file);
    CHECK(load("id,label\n") == Errc::parse_error);
    CHECK(load(header) == Errc::empty_store);
    CHECK(load(header + "a,sketch,cat,feat.csv,0\n") == Errc::parse_error);
    CHECK(load(header + "a,photo,cat,feat.csv,0,2\n") == Errc::unknown_modality);
    CHECK(load(header + "a,sketch,cat,missing.csv,0,2\n") == Errc::missing_file);
    CHECK(load(header + "a,sketch,cat,feat.csv,1,2\n") == Errc::non_finite);
    CHECK(load(header + "a,sketch,cat,feat.csv,2,2\n") == Errc::parse_error);
    CHECK(load(header + "a,sketch,cat,feat.csv,9,2\n") == Errc::parse_error);
    CHECK(load(header + "a,sketch,cat,feat.csv,0,3\n") == Errc::dimension_mismatch);
    CHECK(load(header + "a,sketch,cat,feat.csv,0,2\nb,image,cat,feat.csv,0,1\n") == Errc::dimension_mismatch);
    CHECK(load(header + "a,sketch,cat,feat.bmp,0,2\n") == Errc::parse_error);
}

TEST_CASE("save then load reproduces the store bit for bit") {
    TempDir dir;
    Rng rng(11);
    std::vector<Instance> inst;
    for (int i = 0; i < 6; ++i) {
        Instance x{"id" + std::to_string(i), i % 2 ? Modality::Image : Modality::Sketch, i < 3 ? "b" : "a", {}};
        for (int j = 0; j < 5; ++j) x.features.push_back(rng.normal() * std::pow(10.0, j - 2));
        inst.push_back(x);
    }
    const FeatureStore store(inst, {"b", "a", "unused"}, 5, "hash1");
    save_store(store, dir / "out.csv");
    CHECK(std::filesystem::exists(dir / "out.features.csv"));
    CHECK(std::filesystem::exists(dir / "out.json"));
    const auto back = load_store(dir / "out.csv");
    CHECK(back.classes() == store.classes());
    CHECK(back.featurizer_hash() == "hash1");
    REQUIRE(back.size() == store.size());
    for (std::size_t i = 0; i < store.size(); ++i) {
        CHECK(back.instances()[i].id == store.instances()[i].id);
        CHECK(back.instances()[i].modality == store.instances()[i].modality);
        CHECK(back.instances()[i].label == store.instances()[i].label);
        CHECK(back.instances()[i].features == store.instances()[i].features);
    }
}

TEST_CASE("one-row manifest with a four-value feature") {
    TempDir dir;
    zsxm::test::write(dir / "f.csv", "0,1,2,3\n");
    zsxm::test::write(dir / "m.csv", "id,modality,label,features_path,offset,count\nx,sketch,a,f.csv,0,4\n");
    const auto store = load_store(dir / "m.csv");
    CHECK(store.size() == 1);
    CHECK(store.dim() == 4);
    CHECK(store.instances()[0].features == std::vector<double>{0, 1, 2, 3});
}

TEST_CASE("three-class toy split keeps the unseen class out of training") {
    std::vector<Instance> inst;
    for (const char* c : {"a", "b", "c"})
        for (const Modality m : {Modality::Sketch, Modality::Image})
            inst.push_back({std::string(c) + std::string(to_string(m)), m, c, {0.0}});
    const FeatureStore store(inst, {"a", "b", "c"}, 1);
    const auto split = make_split(store, {"c"});
    for (auto i : split.train_instances) CHECK(store.instances()[i].label != "c");
    for (auto i : split.test_instances) CHECK(store.instances()[i].label == "c");
    CHECK(make_split(store, {"c"}).train_instances == split.train_instances);
}
