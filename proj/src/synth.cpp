#include "qac/synth.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <string>

#include "qac/rng.hpp"

namespace qac {

namespace {

struct Topic {
    const char* slug;
    std::vector<std::string> nouns;
    std::vector<std::string> modifiers;
    std::vector<std::string> verbs;
};

const std::vector<Topic>& topics()
{
    static const std::vector<Topic> kTopics = {
        {"gardening",
         {"tomato plants", "raised beds", "compost", "seedlings", "mulch", "herb garden", "soil ph", "pruning shears"},
         {"organic", "indoor", "winter", "beginner", "small space", "drought tolerant"},
         {"grow", "water", "prune", "fertilize"}},
        {"cooking",
         {"sourdough bread", "pasta sauce", "cast iron skillet", "chicken curry", "knife skills", "rice cooker",
          "pie crust", "stock pot"},
         {"easy", "quick", "vegetarian", "gluten free", "weeknight", "spicy"},
         {"bake", "season", "braise", "store"}},
        {"running",
         {"marathon training", "running shoes", "interval workouts", "shin splints", "trail running", "pace chart",
          "recovery runs", "heart rate zones"},
         {"beginner", "advanced", "cushioned", "long distance", "winter", "minimalist"},
         {"train", "stretch", "taper", "hydrate"}},
        {"photography",
         {"shutter speed", "portrait lighting", "prime lens", "raw editing", "tripod", "night sky photos",
          "aperture settings", "camera sensor"},
         {"manual", "low light", "budget", "mirrorless", "outdoor", "studio"},
         {"shoot", "edit", "frame", "expose"}},
        {"personal finance",
         {"emergency fund", "index funds", "credit score", "retirement account", "monthly budget", "student loans",
          "tax deductions", "savings rate"},
         {"low cost", "automatic", "long term", "first time", "self employed", "early"},
         {"save", "invest", "refinance", "track"}},
        {"home repair",
         {"leaky faucet", "drywall patch", "circuit breaker", "water heater", "grout lines", "door hinge",
          "ceiling fan", "window caulk"},
         {"cheap", "diy", "quick", "permanent", "old house", "bathroom"},
         {"fix", "replace", "install", "seal"}},
        {"astronomy",
         {"meteor shower", "lunar eclipse", "telescope eyepiece", "andromeda galaxy", "star charts", "planet transit",
          "light pollution", "orion nebula"},
         {"amateur", "backyard", "tonight", "naked eye", "deep sky", "northern"},
         {"observe", "track", "photograph", "locate"}},
        {"programming",
         {"binary search", "hash table", "unit tests", "memory leak", "linked list", "regular expressions",
          "sorting algorithm", "recursion depth"},
         {"python", "efficient", "beginner", "parallel", "generic", "iterative"},
         {"debug", "implement", "optimize", "refactor"}},
        {"coffee",
         {"espresso shot", "pour over", "burr grinder", "cold brew", "milk frothing", "coffee beans", "french press",
          "water temperature"},
         {"single origin", "dark roast", "light roast", "decaf", "manual", "home"},
         {"brew", "grind", "dial", "store"}},
        {"cycling",
         {"road bike", "chain lube", "tire pressure", "bike fit", "gear ratios", "saddle height", "disc brakes",
          "climbing technique"},
         {"commuter", "gravel", "carbon", "tubeless", "indoor", "endurance"},
         {"adjust", "clean", "ride", "tune"}},
        {"language learning",
         {"spanish verbs", "flash cards", "listening practice", "grammar drills", "pronunciation", "vocabulary lists",
          "language exchange", "reading practice"},
         {"daily", "fast", "beginner", "immersive", "free", "conversational"},
         {"learn", "memorize", "practice", "review"}},
        {"dog training",
         {"leash pulling", "crate training", "puppy biting", "recall command", "separation anxiety", "clicker training",
          "house training", "dog treats"},
         {"positive", "gentle", "rescue", "older", "small breed", "reactive"},
         {"teach", "reward", "stop", "socialize"}},
        {"sleep",
         {"sleep schedule", "melatonin", "insomnia", "power naps", "sleep apnea", "bedtime routine", "blue light",
          "deep sleep"},
         {"natural", "better", "shift work", "restless", "teen", "consistent"},
         {"improve", "reset", "track", "fall"}},
        {"chess",
         {"opening theory", "endgame tactics", "sicilian defense", "rook endings", "pawn structure", "chess clock",
          "blunder check", "queen sacrifice"},
         {"beginner", "aggressive", "classical", "blitz", "positional", "tricky"},
         {"study", "calculate", "defend", "attack"}},
        {"travel",
         {"carry on bag", "travel insurance", "jet lag", "packing list", "rail pass", "hostel booking",
          "passport renewal", "currency exchange"},
         {"budget", "solo", "family", "last minute", "international", "long haul"},
         {"book", "pack", "plan", "avoid"}},
        {"woodworking",
         {"dovetail joints", "wood glue", "table saw", "hand plane", "wood finish", "router bits", "cutting board",
          "sanding grit"},
         {"hardwood", "beginner", "precise", "hand tool", "outdoor", "rustic"},
         {"cut", "join", "sand", "finish"}},
        {"aquariums",
         {"water cycle", "betta fish", "aquarium filter", "planted tank", "algae bloom", "water hardness",
          "fish food", "tank heater"},
         {"freshwater", "nano", "saltwater", "low tech", "community", "tropical"},
         {"cycle", "clean", "stock", "test"}},
        {"music theory",
         {"chord progressions", "circle of fifths", "minor scales", "sight reading", "time signatures",
          "ear training", "key signatures", "guitar chords"},
         {"basic", "jazz", "modal", "advanced", "piano", "quick"},
         {"read", "transpose", "voice", "hear"}},
        {"skin care",
         {"sunscreen", "retinol serum", "dry skin", "acne scars", "moisturizer", "vitamin c", "exfoliation",
          "skin barrier"},
         {"sensitive", "oily", "daily", "gentle", "fragrance free", "night"},
         {"apply", "layer", "treat", "protect"}},
        {"electric cars",
         {"charging station", "battery range", "home charger", "regenerative braking", "tax credit", "battery health",
          "road trip charging", "charging cable"},
         {"fast", "level two", "cold weather", "used", "affordable", "long range"},
         {"charge", "extend", "install", "compare"}},
    };
    return kTopics;
}

const std::vector<std::string>& sentence_templates()
{
    static const std::vector<std::string> kTemplates = {
        "Many readers ask how to {verb} {noun} without spending a fortune.",
        "A {mod} approach to {noun} starts with a few simple habits.",
        "The guide explains why {noun} matters and how {noun2} fits in.",
        "Experts recommend that you {verb} {noun} at least once a week.",
        "If you are new to {topic}, focus on {noun} before {noun2}.",
        "Common mistakes with {noun} include rushing and skipping preparation.",
        "This section compares {mod} {noun} with {mod2} {noun2}.",
        "You can {verb} {noun} with tools you already own.",
        "Most problems with {noun2} come from ignoring {noun}.",
        "For {mod} setups, {noun} is usually the first upgrade.",
        "Our checklist covers {noun}, {noun2} and a few {mod} tips.",
        "Readers who {verb} {noun2} regularly report better results.",
        "The next step is to {verb} {noun} and note what changes.",
        "Is {mod} {noun} worth it? The answer depends on your goals.",
    };
    return kTemplates;
}

std::string fill(std::string tmpl, const std::map<std::string, std::string>& slots)
{
    for (const auto& [key, value] : slots) {
        const std::string marker = "{" + key + "}";
        for (std::size_t pos = tmpl.find(marker); pos != std::string::npos; pos = tmpl.find(marker, pos + value.size())) {
            tmpl.replace(pos, marker.size(), value);
        }
    }
    return tmpl;
}

std::string title_case(std::string s)
{
    bool start = true;
    for (char& c : s) {
        if (start && c >= 'a' && c <= 'z') {
            c = static_cast<char>(c - 'a' + 'A');
        }
        start = c == ' ';
    }
    return s;
}

std::string slugify(const std::string& s)
{
    std::string out;
    for (char c : s) {
        out += c == ' ' ? '-' : c;
    }
    return out;
}

/// Every query a topic can produce, in a fixed order.
std::vector<std::string> topic_queries(const Topic& t)
{
    std::vector<std::string> out;
    for (const auto& n : t.nouns) {
        out.push_back(n);
        for (const auto& m : t.modifiers) {
            out.push_back(m + " " + n);
        }
        for (const auto& v : t.verbs) {
            out.push_back("how to " + v + " " + n);
        }
        out.push_back(n + " tips");
        out.push_back("best " + n);
        out.push_back(n + " for beginners");
    }
    return out;
}

}  // namespace

SyntheticCorpus generate_synthetic(const SynthOptions& o)
{
    Rng rng(o.seed);
    SyntheticCorpus out;
    const auto& all_topics = topics();
    std::vector<std::vector<std::string>> pools;
    for (const auto& t : all_topics) {
        pools.push_back(topic_queries(t));
    }

    for (std::size_t d = 0; d < o.documents; ++d) {
        const std::size_t ti = d % all_topics.size();
        const Topic& t = all_topics[ti];
        DocumentRecord doc;
        char id[16];
        std::snprintf(id, sizeof id, "D%04zu", d);
        doc.doc_id = id;

        // Each document leans on a few focus nouns of its topic.
        std::vector<std::string> focus = t.nouns;
        rng.shuffle(focus);
        focus.resize(3);
        const std::string& mod = rng.pick(t.modifiers);
        doc.title = title_case(mod + " " + focus[0] + " guide");
        doc.url = "https://example.org/" + slugify(t.slug) + "/" + slugify(focus[0]) + "-" + std::to_string(d);

        const auto n_sent = static_cast<std::size_t>(rng.range(static_cast<std::int64_t>(o.sentences_min),
                                                                static_cast<std::int64_t>(o.sentences_max)));
        std::string body;
        for (std::size_t s = 0; s < n_sent; ++s) {
            const bool on_focus = rng.uniform() < 0.7;
            const std::string& noun = on_focus ? focus[rng.below(focus.size())] : rng.pick(t.nouns);
            const std::map<std::string, std::string> slots = {
                {"noun", noun},
                {"noun2", rng.pick(t.nouns)},
                {"mod", rng.pick(t.modifiers)},
                {"mod2", rng.pick(t.modifiers)},
                {"verb", rng.pick(t.verbs)},
                {"topic", t.slug},
            };
            std::string sentence = fill(rng.pick(sentence_templates()), slots);
            sentence[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(sentence[0])));
            body += (s == 0 ? "" : " ") + sentence;
        }
        doc.body = std::move(body);

        // Queries: focus-weighted draws from the topic pool, a few from a
        // neighbouring topic, and Zipf-like clicks.
        const auto n_q = static_cast<std::size_t>(
            rng.range(static_cast<std::int64_t>(o.min_queries), static_cast<std::int64_t>(o.max_queries)));
        std::set<std::string> chosen;
        const auto& pool = pools[ti];
        std::vector<std::string> focus_pool;
        for (const auto& q : pool) {
            for (const auto& f : focus) {
                if (q.find(f) != std::string::npos) {
                    focus_pool.push_back(q);
                    break;
                }
            }
        }
        const auto& neighbour = pools[(ti + 1) % pools.size()];
        for (std::size_t attempts = 0; chosen.size() < n_q && attempts < n_q * 20; ++attempts) {
            const double u = rng.uniform();
            const auto& src = u < 0.65 ? focus_pool : (u < 0.93 ? pool : neighbour);
            chosen.insert(rng.pick(src));
        }
        std::vector<std::string> ordered(chosen.begin(), chosen.end());
        rng.shuffle(ordered);
        for (std::size_t r = 0; r < ordered.size(); ++r) {
            const double base = 200.0 / std::pow(static_cast<double>(r + 1), 1.1);
            const double clicks = std::max(1.0, std::round(base * (0.5 + rng.uniform())));
            out.pairs.push_back({{ordered[r], clicks}, doc.doc_id, Origin::clicked});
        }
        out.docs.push_back(std::move(doc));
    }
    return out;
}

}  // namespace qac
