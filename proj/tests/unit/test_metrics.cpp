#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <set>

#include "doctest.h"
#include "qac/error.hpp"
#include "qac/metrics.hpp"
#include "qac/text.hpp"

using namespace qac;

namespace {

using Texts = std::vector<std::string>;

double harmonic(std::size_t n)
{
    double h = 0;
    for (std::size_t k = 1; k <= n; ++k) {
        h += 1.0 / static_cast<double>(k);
    }
    return h;
}

double ref_dcg(const Texts& list, const std::vector<std::string>& nuggets, double alpha)
{
    std::map<std::string, int> seen;
    double dcg = 0;
    for (std::size_t k = 0; k < list.size(); ++k) {
        const auto toks = metric_tokens(list[k]);
        double gain = 0;
        for (const auto& n : nuggets) {
            if (std::find(toks.begin(), toks.end(), n) != toks.end()) {
                gain += std::pow(1 - alpha, seen[n]++);
            }
        }
        dcg += gain / std::log2(static_cast<double>(k) + 2.0);
    }
    return dcg;
}

// Ideal by exhaustive search over every ordering of the list.
double ref_alpha_ndcg(Texts list, const std::string& target, double alpha)
{
    std::set<std::string> uniq;
    for (const auto& t : metric_tokens(target)) {
        if (!text::is_stopword(t)) {
            uniq.insert(t);
        }
    }
    const std::vector<std::string> nuggets(uniq.begin(), uniq.end());
    const double dcg = ref_dcg(list, nuggets, alpha);
    std::vector<std::size_t> idx(list.size());
    std::iota(idx.begin(), idx.end(), 0);
    double ideal = 0;
    do {
        Texts perm;
        for (auto i : idx) {
            perm.push_back(list[i]);
        }
        ideal = std::max(ideal, ref_dcg(perm, nuggets, alpha));
    } while (std::next_permutation(idx.begin(), idx.end()));
    return ideal > 0 ? dcg / ideal : 0.0;
}

}  // namespace

TEST_CASE("quadrant names")
{
    for (auto q : {Quadrant::SS, Quadrant::SU, Quadrant::US, Quadrant::UU}) {
        CHECK(parse_quadrant(to_string(q)) == q);
    }
    CHECK(parse_quadrant("su") == Quadrant::SU);
    CHECK_THROWS_AS(parse_quadrant("XX"), Error);
}

TEST_CASE("mrr")
{
    const Texts list = {"a b c", "paris tourism", "x y z", "Paris  History"};
    CHECK(mrr(list, "a b c") == 1.0);
    CHECK(mrr(list, "paris history") == 0.25);
    CHECK(mrr(list, "missing") == 0.0);
    CHECK(mrr(list, "paris history", 3) == 0.0);
    const Texts none;
    CHECK(mrr(none, "x") == 0.0);
}

TEST_CASE("tes: step-by-step simulation")
{
    const std::string target = "abcdefghijklmnop";
    REQUIRE(target.size() == 16);
    std::vector<std::string> asked;
    auto system = [&](std::string_view prefix) {
        asked.emplace_back(prefix);
        return prefix.size() >= 3 ? Texts{"zzz", target} : Texts{"zzz"};
    };
    CHECK(tes(system, target) == doctest::Approx(0.8125));
    CHECK(asked == std::vector<std::string>{"a", "ab", "abc"});

    auto never = [](std::string_view) { return Texts{"nothing"}; };
    CHECK(tes(never, target) == 0.0);
    auto instant = [&](std::string_view) { return Texts{target}; };
    CHECK(tes(instant, target) == doctest::Approx(1.0 - 1.0 / 16));
    auto deep = [&](std::string_view) {
        Texts l(10, "x");
        l.push_back(target);
        return l;
    };
    CHECK(tes(deep, target) == 0.0);
}

TEST_CASE("tes: superset systems save at least as much")
{
    std::mt19937_64 g(3);
    const Texts pool = {"paris tourism", "paris history", "python", "pandas", "party ideas", "pasta"};
    for (int trial = 0; trial < 40; ++trial) {
        std::map<std::string, Texts> small_lists;
        auto small = [&](std::string_view p) {
            auto& l = small_lists[std::string(p)];
            if (l.empty()) {
                for (const auto& q : pool) {
                    if (g() % 3 == 0) {
                        l.push_back(q);
                    }
                }
                l.resize(std::min<std::size_t>(l.size(), 4));
            }
            return l;
        };
        auto big = [&](std::string_view p) {
            Texts l = small(p);
            for (const auto& q : pool) {
                if (l.size() < 10 && std::find(l.begin(), l.end(), q) == l.end() && g() % 2 == 0) {
                    l.push_back(q);
                }
            }
            return l;
        };
        for (const auto& target : pool) {
            small_lists.clear();
            const double a = tes(small, target);
            CHECK(tes(big, target) >= a);
        }
    }
}

TEST_CASE("alpha-ndcg worked example")
{
    const Texts list = {"apple", "apple", "banana"};
    const double dcg = 1 + 0.5 / std::log2(3.0) + 1 / std::log2(4.0);
    const double idcg = 1 + 1 / std::log2(3.0) + 0.5 / std::log2(4.0);
    CHECK(dcg == doctest::Approx(1.8155).epsilon(1e-4));
    CHECK(idcg == doctest::Approx(1.8809).epsilon(1e-4));
    CHECK(alpha_ndcg(list, "apple banana") == doctest::Approx(dcg / idcg).epsilon(1e-12));
    CHECK(alpha_ndcg(list, "apple banana") == doctest::Approx(0.9652).epsilon(1e-4));
    CHECK(alpha_ndcg(Texts{"zzz", "yyy"}, "apple banana") == 0.0);
    CHECK(alpha_ndcg(Texts{"apple banana"}, "apple banana") == 1.0);
}

TEST_CASE("alpha-ndcg equals the permutation-ideal oracle")
{
    std::mt19937_64 g(21);
    const std::vector<std::string> words = {"red", "green", "blue", "cyan", "the", "of"};
    for (int trial = 0; trial < 300; ++trial) {
        auto phrase = [&] {
            std::string s;
            const std::size_t n = 1 + g() % 3;
            for (std::size_t i = 0; i < n; ++i) {
                s += (i ? " " : "") + words[g() % words.size()];
            }
            return s;
        };
        Texts list;
        const std::size_t n = 1 + g() % 6;
        for (std::size_t i = 0; i < n; ++i) {
            list.push_back(phrase());
        }
        const auto target = phrase();
        const double got = alpha_ndcg(list, target);
        CHECK(got == doctest::Approx(ref_alpha_ndcg(list, target, 0.5)).epsilon(1e-12));
        CHECK(got >= 0.0);
        CHECK(got <= 1.0 + 1e-12);
    }
}

TEST_CASE("sentence bleu")
{
    CHECK(sentence_bleu("speed typing practice", "speed typing practice") == doctest::Approx(1.0));
    CHECK(sentence_bleu("nothing shared", "speed typing practice") == 0.0);
    CHECK(sentence_bleu("", "speed typing") == 0.0);
    // p1 = 1, p2..p4 smoothed to 1, brevity penalty exp(1 - 3/2).
    CHECK(sentence_bleu("speed typing", "speed typing practice") == doctest::Approx(std::exp(-0.5)).epsilon(1e-12));
    // p1 = 2/3, p2 = (1+1)/(2+1), p3 = (0+1)/(1+1), p4 = (0+1)/(0+1), no brevity penalty.
    const double expect = std::exp((std::log(2.0 / 3) + std::log(2.0 / 3) + std::log(0.5) + std::log(1.0)) / 4);
    CHECK(sentence_bleu("speed typing tips", "speed typing practice") == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("bleu_rr")
{
    Texts list = {"speed typing practice"};
    for (int i = 0; i < 9; ++i) {
        list.push_back("zzz");
    }
    CHECK(bleu_rr(list, "speed typing practice") == doctest::Approx(1.0 / harmonic(10)).epsilon(1e-12));
    CHECK(bleu_rr(list, "speed typing practice") == doctest::Approx(0.3414).epsilon(1e-4));
    CHECK(bleu_rr(Texts{}, "x y z") == 0.0);
    const Texts all(10, "speed typing practice");
    CHECK(bleu_rr(all, "speed typing practice") == doctest::Approx(1.0));
    const Texts second = {"zzz", "speed typing practice"};
    CHECK(bleu_rr(second, "speed typing practice", 10, BleuRrNorm::max) == doctest::Approx(0.5));
}

TEST_CASE("partial ndcg")
{
    const Texts one = {"speed typing"};
    CHECK(partial_ndcg(one, "speed typing practice", PartialKind::precision) == doctest::Approx(1.0));
    CHECK(partial_ndcg(one, "speed typing practice", PartialKind::recall) == doctest::Approx(2.0 / 3));
    const Texts miss = {"zzz"};
    CHECK(partial_ndcg(miss, "speed typing practice", PartialKind::precision) == 0.0);
    CHECK(partial_ndcg(miss, "speed typing practice", PartialKind::recall) == 0.0);
    const Texts same = {"speed typing practice"};
    CHECK(partial_ndcg(same, "speed typing practice", PartialKind::precision) == 1.0);
    CHECK(partial_ndcg(same, "speed typing practice", PartialKind::recall) == 1.0);

    // Equal lengths make both kinds coincide.
    std::mt19937_64 g(5);
    const std::vector<std::string> words = {"a1", "b2", "c3", "d4", "e5"};
    for (int trial = 0; trial < 50; ++trial) {
        Texts list;
        for (int i = 0; i < 5; ++i) {
            std::vector<std::string> w = words;
            std::shuffle(w.begin(), w.end(), g);
            list.push_back(w[0] + " " + w[1] + " " + w[2]);
        }
        CHECK(partial_ndcg(list, "a1 b2 c3", PartialKind::precision) ==
              doctest::Approx(partial_ndcg(list, "a1 b2 c3", PartialKind::recall)));
    }

    // Hand evaluation against the all-perfect ideal.
    const Texts two = {"zzz", "speed typing"};
    const double expect = (1.0 / std::log2(3.0)) / (1.0 + 1.0 / std::log2(3.0));
    CHECK(partial_ndcg(two, "speed typing", PartialKind::precision) == doctest::Approx(expect));
}

TEST_CASE("sbmrr")
{
    EmbeddingTable v(2);
    v.insert("target", {1, 0});
    v.insert("same", {2, 0});
    v.insert("ortho", {0, 1});
    const double y = std::sqrt(1 - 0.9 * 0.9);
    v.insert("edge", {0.9F, static_cast<float>(y)});
    CHECK(*sbmrr(Texts{"same"}, "target", v) == 1.0);
    CHECK(*sbmrr(Texts{"ortho", "ortho"}, "target", v) == 0.0);
    const auto edge = sbmrr(Texts{"ortho", "edge"}, "target", v, 0.9 - 1e-6);
    CHECK(*edge == 0.5);
    CHECK_FALSE(sbmrr(Texts{"unknown"}, "target", v).has_value());
    CHECK_FALSE(sbmrr(Texts{"same"}, "nope", v).has_value());
}

TEST_CASE("evaluate_run aggregation")
{
    std::vector<EvalExample> ex = {
        {"paris tourism", "D1", "par", Quadrant::SS},
        {"python", "D1", "py", Quadrant::SS},
        {"paris history", "D2", "paris h", Quadrant::UU},
    };
    auto perfect = [](const EvalExample& e, std::string_view) { return Texts{e.target}; };
    const auto r = evaluate_run(ex, perfect);
    REQUIRE(r.reports.size() == 2);
    CHECK(r.reports[0].quadrant == Quadrant::SS);
    CHECK(r.reports[0].n_examples == 2);
    CHECK(r.reports[0].mrr == 1.0);
    CHECK(r.reports[0].ppn == 1.0);
    CHECK(r.reports[0].prn == 1.0);
    CHECK(r.reports[0].tes > 0.0);
    CHECK(r.reports[1].quadrant == Quadrant::UU);
    CHECK_FALSE(r.warnings.empty());

    auto half = [](const EvalExample& e, std::string_view) {
        return e.target == "python" ? Texts{"python"} : Texts{"nope"};
    };
    EvalOptions opts;
    opts.compute_tes = false;
    const auto h = evaluate_run(ex, half, opts);
    CHECK(h.reports[0].mrr == 0.5);
    CHECK(h.reports[1].mrr == 0.0);
    CHECK(h.reports[0].tes == 0.0);

    const auto header = report_tsv_header();
    CHECK(header.find("MRR") != std::string::npos);
    const auto row = report_tsv_row(r.reports[0]);
    CHECK(std::count(row.begin(), row.end(), '\t') == std::count(header.begin(), header.end(), '\t'));
}
