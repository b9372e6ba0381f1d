#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "coref/error.hpp"
#include "coref/features.hpp"
#include "coref/half.hpp"
#include "coref/synth.hpp"
#include "coref/training.hpp"
#include "support.hpp"

using namespace coref;
using support::document;
using support::mention;

namespace {

std::vector<float> unit(std::size_t dim, std::size_t axis) {
    std::vector<float> v(dim, 0.0f);
    v[axis] = 1.0f;
    return v;
}

// "He pulled the tooth out today" with the mention "the tooth".
Document tooth_doc() {
    return document("tooth", {"He pulled the tooth out today", "A molar was cracked"}, {"dentist", "dentist"},
                    {mention("m0", 0, 2, 3, 3, MentionKind::nominal, "t"),
                     mention("m1", 1, 0, 1, 1, MentionKind::nominal, "t")});
}

EmbeddingTable small_table(std::size_t dim, std::uint64_t seed, const std::vector<std::string>& words) {
    std::mt19937_64 gen(seed);
    std::normal_distribution<float> normal(0.0f, 1.0f);
    EmbeddingTable table(dim);
    for (const auto& w : words) {
        std::vector<float> v(dim);
        for (auto& x : v) x = normal(gen);
        table.insert(w, v);
    }
    return table;
}

}  // namespace

TEST_SUITE("features") {

TEST_CASE("schema layout is contiguous and sums to 513") {
    const auto s = FeatureSchema::standard();
    CHECK(s.ant_words.offset == 0);
    CHECK(s.ant_words.length == 250);
    CHECK(s.ana_words.offset == 250);
    CHECK(s.distance.offset == 500);
    CHECK(s.distance.length == 6);
    CHECK(s.pair_flags.offset == 506);
    CHECK(s.pair_flags.length == 3);
    CHECK(s.similarity.offset == 509);
    CHECK(s.similarity.length == 4);
    CHECK(s.total_dim == 513);
    CHECK(s.tower_dim() == 256);
    const auto ant = s.tower_indices(true);
    const auto ana = s.tower_indices(false);
    REQUIRE(ant.size() == 256);
    CHECK(ant[0] == 0);
    CHECK(ant[249] == 249);
    CHECK(ant[250] == 500);
    CHECK(ana[0] == 250);
    CHECK(ana[255] == 505);
}

TEST_CASE("word slots at sentence boundaries and inside a sentence") {
    const Document whole = document("w", {"the big dog"}, {"s"}, {mention("m", 0, 0, 2, 2, MentionKind::nominal)});
    const auto a = word_slots(whole.mentions[0], whole);
    CHECK(*a.first == "the");
    CHECK(*a.head == "dog");
    CHECK(*a.last == "dog");
    CHECK_FALSE(a.previous.has_value());
    CHECK_FALSE(a.next.has_value());

    const Document single = document("s", {"a dog barked"}, {"s"}, {mention("m", 0, 1, 1, 1, MentionKind::nominal)});
    const auto b = word_slots(single.mentions[0], single);
    CHECK(*b.first == "dog");
    CHECK(*b.head == "dog");
    CHECK(*b.last == "dog");

    const Document tooth = tooth_doc();
    const auto c = word_slots(tooth.mentions[0], tooth);
    CHECK(*c.first == "the");
    CHECK(*c.head == "tooth");
    CHECK(*c.last == "tooth");
    CHECK(*c.previous == "pulled");
    CHECK(*c.next == "out");
}

TEST_CASE("distance block") {
    using A = std::array<float, 6>;
    CHECK(distance_block(0) == A{1, 0, 0, 0, 0, 0.0f});
    CHECK(distance_block(3) == A{0, 0, 0, 1, 0, 3.0f / 50.0f});
    const auto seven = distance_block(7);
    for (int i = 0; i < 5; ++i) CHECK(seven[i] == 0.0f);
    CHECK(seven[5] == doctest::Approx(0.14));
    CHECK(distance_block(100) == A{0, 0, 0, 0, 0, 1.0f});
    CHECK(distance_block(50)[5] == 1.0f);
}

TEST_CASE("pair flags") {
    const Document same = document("d", {"the dog and the dog"}, {"s"},
                                   {mention("a", 0, 0, 1, 1, MentionKind::nominal),
                                    mention("b", 0, 3, 4, 4, MentionKind::nominal)});
    CHECK(pair_flags(same.mentions[0], same.mentions[1], same) == std::array<float, 3>{1, 1, 1});

    const Document molar = document("d", {"a molar", "the tooth"}, {"x", "y"},
                                    {mention("a", 0, 0, 1, 1, MentionKind::nominal),
                                     mention("b", 1, 0, 1, 1, MentionKind::nominal)});
    const auto mf = pair_flags(molar.mentions[0], molar.mentions[1], molar);
    CHECK(mf[0] == 0.0f);
    CHECK(mf[1] == 0.0f);
    CHECK(mf[2] == 0.0f);

    const Document pres = document("d", {"the President", "President Obama"}, {"x", "x"},
                                   {mention("a", 0, 0, 1, 1, MentionKind::nominal),
                                    mention("b", 1, 0, 1, 1, MentionKind::named)});
    const auto pf = pair_flags(pres.mentions[0], pres.mentions[1], pres);
    CHECK(pf[0] == 0.0f);
    CHECK(pf[1] == 1.0f);
    CHECK(pf[2] == 1.0f);

    const Document cased = document("d", {"The Dog", "the dog"}, {"x", "y"},
                                    {mention("a", 0, 0, 1, 1, MentionKind::nominal),
                                     mention("b", 1, 0, 1, 1, MentionKind::nominal)});
    CHECK(pair_flags(cased.mentions[0], cased.mentions[1], cased)[0] == 1.0f);
}

TEST_CASE("cosine similarity") {
    const std::vector<float> a = {1, 0, 0};
    const std::vector<float> b = {0.5f, static_cast<float>(std::sqrt(3.0) / 2), 0};
    CHECK(cosine_similarity(a, b) == doctest::Approx(0.5).epsilon(1e-6));
    CHECK(cosine_similarity(a, a) == doctest::Approx(1.0));
    const std::vector<float> z = {0, 0, 0};
    CHECK(cosine_similarity(a, z) == 0.0);
    CHECK(cosine_similarity(z, z) == 0.0);
    const std::vector<float> neg = {-2, 0, 0};
    CHECK(cosine_similarity(a, neg) == doctest::Approx(-1.0));
}

TEST_CASE("similarity features: identity, OOV heads, 60 degree synonyms") {
    const auto table = small_table(8, 1, {"the", "big", "dog", "cat"});
    const Document d = document("d", {"the big dog", "the big dog", "the cat", "a wug", "the blick"},
                                {"s", "s", "s", "s", "s"},
                                {mention("a", 0, 0, 2, 2, MentionKind::nominal),
                                 mention("b", 1, 0, 2, 2, MentionKind::nominal),
                                 mention("c", 2, 0, 1, 1, MentionKind::nominal),
                                 mention("d", 3, 0, 1, 1, MentionKind::nominal),
                                 mention("e", 4, 0, 1, 1, MentionKind::nominal)});
    const auto same = similarity_features(d.mentions[0], d.mentions[1], d, table);
    for (float v : same) CHECK(v == doctest::Approx(1.0).epsilon(1e-6));

    const auto oov = similarity_features(d.mentions[3], d.mentions[4], d, table);
    CHECK(oov[0] == 0.0f);

    EmbeddingTable angled(3);
    angled.insert("dog", std::vector<float>{1, 0, 0});
    angled.insert("hound", std::vector<float>{0.5f, static_cast<float>(std::sqrt(3.0) / 2), 0});
    const Document syn = document("s", {"dog", "hound"}, {"x", "x"},
                                  {mention("a", 0, 0, 0, 0, MentionKind::nominal),
                                   mention("b", 1, 0, 0, 0, MentionKind::nominal)});
    const auto sim = similarity_features(syn.mentions[0], syn.mentions[1], syn, angled);
    CHECK(sim[0] == doctest::Approx(0.5).epsilon(1e-6));
    CHECK(sim[3] == doctest::Approx(0.5).epsilon(1e-6));
}

TEST_CASE("similarity features are symmetric and bounded") {
    SynthSpec spec;
    spec.documents = 3;
    spec.dim = 10;
    const auto docs = synth_corpus(spec, 2);
    const auto table = synth_embeddings(spec, 2);
    for (const auto& d : docs) {
        for (std::size_t i = 0; i + 1 < d.mentions.size(); i += 3) {
            const auto ab = similarity_features(d.mentions[i], d.mentions[i + 1], d, table);
            const auto ba = similarity_features(d.mentions[i + 1], d.mentions[i], d, table);
            CHECK(ab == ba);
            for (float v : ab) {
                CHECK(v >= -1.0f);
                CHECK(v <= 1.0f);
            }
        }
    }
}

TEST_CASE("featurize_pair layout") {
    const Document d = tooth_doc();
    const auto table = small_table(50, 3, {"He", "pulled", "the", "tooth", "out", "today", "A", "molar", "was"});
    const auto schema = FeatureSchema::standard();
    MentionPair p;
    p.doc_id = d.doc_id;
    p.antecedent_id = "m0";
    p.anaphor_id = "m1";
    p.antecedent = 0;
    p.anaphor = 1;
    p.label = true;
    p.sentence_distance = 1;
    const auto fv = featurize_pair(p, d, table, schema);
    REQUIRE(fv.values.size() == 513);
    CHECK(fv.pair_id == "tooth/m0/m1");
    CHECK(fv.label);
    // first slot of the antecedent is "the"
    const auto the = table.lookup("the");
    for (std::size_t i = 0; i < 50; ++i) CHECK(fv.values[i] == the[i]);
    // anaphor "A molar" has no previous word: slot 3 is zeros
    for (std::size_t i = 250 + 150; i < 250 + 200; ++i) CHECK(fv.values[i] == 0.0f);
    CHECK(fv.values[500 + 1] == 1.0f);
    CHECK(fv.values[505] == doctest::Approx(1.0 / 50));
    for (std::size_t i = 509; i < 513; ++i) {
        CHECK(std::isfinite(fv.values[i]));
        CHECK(std::abs(fv.values[i]) <= 1.0f);
    }

    FeaturizeOptions off;
    off.similarity = false;
    const auto ablated = featurize_pair(p, d, table, schema, off);
    for (std::size_t i = 509; i < 513; ++i) CHECK(ablated.values[i] == 0.0f);
    for (std::size_t i = 0; i < 509; ++i) CHECK(ablated.values[i] == fv.values[i]);

    CHECK_THROWS_AS(featurize_pair(p, d, EmbeddingTable(20), schema), ConfigError);
}

TEST_CASE("identical single-token mentions at distance 0") {
    const auto table = small_table(50, 4, {"dog"});
    const Document d = document("d", {"dog dog"}, {"s"},
                                {mention("a", 0, 0, 0, 0, MentionKind::nominal),
                                 mention("b", 0, 1, 1, 1, MentionKind::nominal)});
    MentionPair p;
    p.doc_id = "d";
    p.antecedent_id = "a";
    p.anaphor_id = "b";
    p.anaphor = 1;
    const auto fv = featurize_pair(p, d, table, FeatureSchema::standard());
    // first/head/last agree; previous/next differ by position
    for (std::size_t i = 0; i < 150; ++i) CHECK(fv.values[i] == fv.values[250 + i]);
    CHECK(fv.values[506] == 1.0f);
    CHECK(fv.values[507] == 1.0f);
    for (std::size_t i = 509; i < 513; ++i) CHECK(fv.values[i] == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("tower vectors carry only own words and distance") {
    const auto table = small_table(50, 5, {"the", "tooth", "A", "molar", "He", "pulled", "out", "was"});
    const Document d = tooth_doc();
    const auto schema = FeatureSchema::standard();
    const auto t1 = featurize_tower(d.mentions[0], 2, d, table, schema);
    const auto t2 = featurize_tower(d.mentions[0], 2, d, table, schema);
    CHECK(t1.size() == 256);
    CHECK(t1 == t2);
    const auto t3 = featurize_tower(d.mentions[0], 4, d, table, schema);
    for (std::size_t i = 0; i < 250; ++i) CHECK(t1[i] == t3[i]);
    CHECK(t1[252] == 1.0f);
    CHECK(t3[254] == 1.0f);
    CHECK(t1[255] != t3[255]);

    const auto empty = featurize_tower(d.mentions[1], 1, d, EmbeddingTable(50), schema);
    for (std::size_t i = 0; i < 250; ++i) CHECK(empty[i] == 0.0f);
    CHECK(empty[251] == 1.0f);
}

TEST_CASE("pair vector restricted to tower sections equals featurize_tower") {
    SynthSpec spec;
    spec.documents = 2;
    const auto docs = synth_corpus(spec, 8);
    const auto table = synth_embeddings(spec, 8);
    const auto schema = FeatureSchema::standard();
    for (const auto& d : docs) {
        const auto pairs = enumerate_pairs(d, PairFilterConfig::disabled());
        for (std::size_t k = 0; k < pairs.size(); k += 97) {
            const auto& p = pairs[k];
            const auto fv = featurize_pair(p, d, table, schema);
            for (bool ant : {true, false}) {
                const auto tower =
                    featurize_tower(d.mentions[ant ? p.antecedent : p.anaphor], p.sentence_distance, d, table, schema);
                const auto idx = schema.tower_indices(ant);
                for (std::size_t i = 0; i < idx.size(); ++i) CHECK(fv.values[idx[i]] == tower[i]);
            }
        }
    }
}

TEST_CASE("half precision conversion") {
    CHECK(float_to_half(0.0f) == 0x0000);
    CHECK(float_to_half(-0.0f) == 0x8000);
    CHECK(float_to_half(1.0f) == 0x3C00);
    CHECK(float_to_half(-2.0f) == 0xC000);
    CHECK(float_to_half(0.1f) == 0x2E66);
    CHECK(float_to_half(65504.0f) == 0x7BFF);
    CHECK(float_to_half(65520.0f) == 0x7C00);
    CHECK(float_to_half(std::ldexp(1.0f, -24)) == 0x0001);
    CHECK(float_to_half(std::ldexp(1.0f, -26)) == 0x0000);
    CHECK(float_to_half(std::numeric_limits<float>::infinity()) == 0x7C00);
    const auto nan = float_to_half(std::numeric_limits<float>::quiet_NaN());
    CHECK((nan & 0x7C00) == 0x7C00);
    CHECK((nan & 0x03FF) != 0);
    // ties to even
    CHECK(float_to_half(1.0f + std::ldexp(1.0f, -11)) == 0x3C00);
    CHECK(float_to_half(1.0f + 3 * std::ldexp(1.0f, -11)) == 0x3C02);
    CHECK(half_to_float(0x3555) == doctest::Approx(0.333251953125));
    for (std::uint32_t bits = 0; bits < 0x7C00; ++bits) {
        REQUIRE(float_to_half(half_to_float(static_cast<std::uint16_t>(bits))) == bits);
    }
}

TEST_CASE("half round trip error stays within 2^-10") {
    std::mt19937_64 gen(17);
    std::uniform_real_distribution<float> u(-1.0f, 1.0f);
    for (int i = 0; i < 100000; ++i) {
        const float v = u(gen);
        const float r = round_to_half(v);
        CHECK(std::abs(r - v) <= std::ldexp(1.0f, -10));
        if (std::abs(v) >= std::ldexp(1.0f, -14)) CHECK(std::abs(r - v) <= std::ldexp(std::abs(v), -10));
    }
}

TEST_CASE("feature shards round trip through half precision and are deterministic") {
    SynthSpec spec;
    spec.documents = 3;
    const auto docs = synth_corpus(spec, 3);
    const auto table = synth_embeddings(spec, 3);
    std::vector<MentionPair> pairs;
    for (const auto& d : docs) {
        auto p = enumerate_pairs(d, PairFilterConfig{});
        pairs.insert(pairs.end(), p.begin(), p.begin() + std::min<std::size_t>(p.size(), 40));
    }
    const auto schema = FeatureSchema::standard();
    const auto shard = featurize_pairs(pairs, docs, table, schema);
    CHECK(shard.rows() == pairs.size());

    const auto dir = support::scratch_dir("features-shard");
    write_feature_shard(shard, dir / "a.feat");
    write_feature_shard(featurize_pairs(pairs, docs, table, schema), dir / "b.feat");
    CHECK(support::slurp(dir / "a.feat") == support::slurp(dir / "b.feat"));

    const auto back = read_feature_shard(dir / "a.feat");
    CHECK(back.dim == 513);
    CHECK(back.pair_ids == shard.pair_ids);
    CHECK(back.labels == shard.labels);
    REQUIRE(back.values.size() == shard.values.size());
    for (std::size_t i = 0; i < back.values.size(); ++i) CHECK(back.values[i] == round_to_half(shard.values[i]));

    const auto header = read_feature_shard_header(dir / "a.feat");
    CHECK(header.rows == shard.rows());
    CHECK(header.schema_version == kFeatureSchemaVersion);

    // rewriting what was read reproduces the file
    write_feature_shard(back, dir / "c.feat");
    CHECK(support::slurp(dir / "a.feat") == support::slurp(dir / "c.feat"));
}

TEST_CASE("corrupt feature shards are rejected") {
    const auto dir = support::scratch_dir("features-corrupt");
    FeatureShard shard;
    shard.append({"d/a/b", true, std::vector<float>(513, 0.25f)});
    write_feature_shard(shard, dir / "ok.feat");
    std::string bytes = support::slurp(dir / "ok.feat");

    std::ofstream(dir / "truncated.feat", std::ios::binary) << bytes.substr(0, bytes.size() - 3);
    CHECK_THROWS_AS(read_feature_shard(dir / "truncated.feat"), FormatError);

    std::string wrong_version = bytes;
    wrong_version[4] = 9;
    std::ofstream(dir / "version.feat", std::ios::binary) << wrong_version;
    CHECK_THROWS_AS(read_feature_shard(dir / "version.feat"), FormatError);
    CHECK(read_feature_shard_header(dir / "version.feat").schema_version == 9);
    CHECK_THROWS_AS(check_shards({dir / "version.feat"}), ConfigError);

    std::string magic = bytes;
    magic[0] = 'X';
    std::ofstream(dir / "magic.feat", std::ios::binary) << magic;
    CHECK_THROWS_AS(read_feature_shard(dir / "magic.feat"), FormatError);

    std::ofstream(dir / "trailing.feat", std::ios::binary) << bytes << "x";
    CHECK_THROWS_AS(read_feature_shard(dir / "trailing.feat"), FormatError);

    CHECK_THROWS_AS(read_feature_shard(dir / "missing.feat"), IoError);
}

TEST_CASE("featurize_pairs validates references") {
    const Document d = tooth_doc();
    const auto table = small_table(50, 6, {"the"});
    MentionPair p;
    p.doc_id = "other";
    p.antecedent_id = "m0";
    p.anaphor_id = "m1";
    p.anaphor = 1;
    CHECK_THROWS_AS(featurize_pairs({p}, {d}, table, FeatureSchema::standard()), ValidationError);
    p.doc_id = "tooth";
    p.anaphor_id = "zz";
    CHECK_THROWS_AS(featurize_pairs({p}, {d}, table, FeatureSchema::standard()), ValidationError);
}

TEST_CASE("zero_section clears one section only") {
    FeatureShard shard;
    shard.append({"a", true, std::vector<float>(513, 0.5f)});
    shard.append({"b", false, std::vector<float>(513, -0.5f)});
    zero_section(shard, FeatureSchema::standard().similarity);
    for (std::size_t r = 0; r < 2; ++r) {
        for (std::size_t i = 0; i < 513; ++i) CHECK((shard.row(r)[i] == 0.0f) == (i >= 509));
    }
}

// A linear model over [m1 | m2] cannot represent m1'm2; with the similarity
// section the quantity is an explicit input.
TEST_CASE("logistic regression learns a dot-product label only with the similarity section") {
    const std::size_t dim = 50;
    std::mt19937_64 gen(23);
    std::normal_distribution<float> normal(0.0f, 1.0f);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    EmbeddingTable table(dim);
    std::vector<Document> docs;
    std::vector<MentionPair> pairs;
    auto random_vec = [&] {
        std::vector<float> v(dim);
        for (auto& x : v) x = normal(gen);
        return v;
    };
    for (int i = 0; i < 1200; ++i) {
        const auto a = random_vec();
        auto b = random_vec();
        if (u(gen) < 0.5) {
            for (std::size_t k = 0; k < dim; ++k) b[k] = a[k] + 0.6f * b[k];
        }
        const std::string wa = "a" + std::to_string(i);
        const std::string wb = "b" + std::to_string(i);
        table.insert(wa, a);
        table.insert(wb, b);
        Document d = document("d" + std::to_string(i), {wa, wb}, {"s", "s"},
                              {mention("x", 0, 0, 0, 0, MentionKind::nominal),
                               mention("y", 1, 0, 0, 0, MentionKind::nominal)});
        MentionPair p;
        p.doc_id = d.doc_id;
        p.antecedent_id = "x";
        p.anaphor_id = "y";
        p.anaphor = 1;
        p.sentence_distance = 1;
        p.label = cosine_similarity(a, b) > 0.5;
        pairs.push_back(p);
        docs.push_back(std::move(d));
    }
    const auto schema = FeatureSchema::standard(dim);
    const auto dir = support::scratch_dir("features-dot");
    double f1[2];
    for (int with = 0; with < 2; ++with) {
        FeaturizeOptions opts;
        opts.similarity = with == 1;
        FeatureShard train_rows, test_rows;
        const auto all = featurize_pairs(pairs, docs, table, schema, opts);
        for (std::size_t r = 0; r < all.rows(); ++r) {
            FeatureVector fv{all.pair_ids[r], all.labels[r] != 0, {all.row(r).begin(), all.row(r).end()}};
            (r < 800 ? train_rows : test_rows).append(fv);
        }
        write_feature_shard(train_rows, dir / "train.feat");
        write_feature_shard(test_rows, dir / "test.feat");
        TrainConfig c;
        c.kind = ModelKind::lr;
        c.epochs = 20;
        c.learning_rate = 0.05;
        c.shard_paths = {dir / "train.feat"};
        c.evaluate_each_epoch = false;
        const auto result = train(c);
        const auto train_preds = predict_shards(result.params, {dir / "train.feat"});
        const auto test_preds = predict_shards(result.params, {dir / "test.feat"});
        f1[with] = prf1(confusion(test_preds, tune_threshold(train_preds).threshold)).f1;
    }
    CHECK(f1[1] >= 0.95);
    CHECK(f1[1] - f1[0] >= 0.2);
}

}  // TEST_SUITE
