#include "ssgan/config.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#ifndef SSGAN_GIT_DESCRIBE
#define SSGAN_GIT_DESCRIBE "unknown"
#endif

namespace ssgan::config {

using nlohmann::json;

namespace {

json defaults() {
    return json{
        {"seed", 1},
        {"threads", 0},
        {"eval_every", 10},
        {"checkpoint_every", 50},
        {"dataset",
         {{"name", "two_moons"},
          {"dir", ""},
          {"n", 1000},
          {"test_n", 1000},
          {"noise", 0.1},
          {"n_labeled", 6},
          {"split_seed", 1},
          {"stratified", true}}},
        {"augment",
         {{"max_translate_px", 2},
          {"horizontal_flip", false},
          {"pad_mode", "reflect"},
          {"vector_jitter_sigma", 0.05}}},
        {"model", {{"discriminator", "mlp-2d"}, {"generator", "mlp-2d-gen"}}},
        {"batch", {{"labeled", 128}, {"unlabeled", 128}}},
        {"consistency",
         {{"kind", "composite"},
          {"divergence", "mse"},
          {"placement", "prediction"},
          {"feature_weight", 1.0},
          {"on_labeled", false},
          {"renormalize", true}}},
        {"schedule",
         {{"total_epochs", 600},
          {"lr_const_epochs", 400},
          {"rampup_epochs", 200},
          {"base_lr", 3e-4},
          {"lambda_cons", 10.0},
          {"alpha", 0.1},
          {"ema_k", 0.99}}},
        {"adam", {{"beta1", 0.5}, {"beta2", 0.999}, {"eps", 1e-8}}},
    };
}

void collect_keys(const json& node, const std::string& prefix, std::vector<std::string>& out) {
    for (auto it = node.begin(); it != node.end(); ++it) {
        const std::string path = prefix.empty() ? it.key() : prefix + "." + it.key();
        if (it->is_object())
            collect_keys(*it, path, out);
        else
            out.push_back(path);
    }
}

std::size_t levenshtein(const std::string& a, const std::string& b) {
    std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
    for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
    for (std::size_t i = 1; i <= a.size(); ++i) {
        cur[0] = i;
        for (std::size_t j = 1; j <= b.size(); ++j) {
            const std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
            cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
        }
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

std::string leaf_of(const std::string& path) {
    const auto pos = path.rfind('.');
    return pos == std::string::npos ? path : path.substr(pos + 1);
}

bool types_compatible(const json& def, const json& val) {
    if (def.is_number() && val.is_number()) return true;
    if (def.is_boolean() && val.is_boolean()) return true;
    if (def.is_string() && val.is_string()) return true;
    return def.type() == val.type();
}

void merge_into(json& base, const json& user, const std::string& prefix) {
    for (auto it = user.begin(); it != user.end(); ++it) {
        const std::string path = prefix.empty() ? it.key() : prefix + "." + it.key();
        if (!base.contains(it.key()))
            throw ConfigError("unknown config key \"" + path + "\" (did you mean \"" +
                              suggest_key(path) + "\"?)");
        json& slot = base[it.key()];
        if (slot.is_object()) {
            if (!it->is_object())
                throw ConfigError("config key \"" + path + "\" expects an object");
            merge_into(slot, *it, path);
        } else {
            if (!types_compatible(slot, *it))
                throw ConfigError("config key \"" + path + "\" has the wrong type");
            slot = *it;
        }
    }
}

// resolves a dotted path, also accepting a unique leaf-name shorthand
std::string canonical_path(const std::string& key) {
    auto keys = known_keys();
    if (std::find(keys.begin(), keys.end(), key) != keys.end()) return key;
    std::vector<std::string> leaf_matches;
    for (const auto& k : keys)
        if (leaf_of(k) == key) leaf_matches.push_back(k);
    if (leaf_matches.size() == 1) return leaf_matches[0];
    throw ConfigError("unknown config key \"" + key + "\" (did you mean \"" +
                      suggest_key(key) + "\"?)");
}

json parse_override_value(const json& slot, const std::string& text) {
    json v;
    try {
        v = json::parse(text);
    } catch (const json::exception&) {
        v = text;  // bare words are strings
    }
    if (!types_compatible(slot, v)) {
        if (slot.is_string() && !v.is_string()) return text;
        throw ConfigError("override value \"" + text + "\" has the wrong type");
    }
    return v;
}

template <typename T, std::size_t N>
T enum_from(const std::string& s, const char* what, const std::array<std::pair<const char*, T>, N>& table) {
    for (const auto& [name, value] : table)
        if (s == name) return value;
    std::string options;
    for (const auto& [name, value] : table) {
        if (!options.empty()) options += ", ";
        options += name;
    }
    throw ConfigError(std::string("unknown ") + what + " \"" + s + "\" (one of: " + options +
                      ")");
}

constexpr std::array<std::pair<const char*, losses::ConsistencyKind>, 4> kKinds{
    {{"none", losses::ConsistencyKind::none},
     {"mt", losses::ConsistencyKind::mt},
     {"ict", losses::ConsistencyKind::ict},
     {"composite", losses::ConsistencyKind::composite}}};

constexpr std::array<std::pair<const char*, losses::Divergence>, 2> kDivs{
    {{"mse", losses::Divergence::mse}, {"kl", losses::Divergence::kl}}};

constexpr std::array<std::pair<const char*, losses::PlacementKind>, 3> kPlacements{
    {{"prediction", losses::PlacementKind::prediction},
     {"feature", losses::PlacementKind::feature},
     {"both", losses::PlacementKind::both}}};

constexpr std::array<std::pair<const char*, data::AugmentationSpec::Pad>, 2> kPads{
    {{"reflect", data::AugmentationSpec::Pad::reflect},
     {"zero", data::AugmentationSpec::Pad::zero}}};

template <typename T, std::size_t N>
const char* enum_name(T v, const std::array<std::pair<const char*, T>, N>& table) {
    for (const auto& [name, value] : table)
        if (v == value) return name;
    return "?";
}

trainer::TrainConfig config_from(const json& j) {
    trainer::TrainConfig cfg;
    cfg.seed = j.at("seed").get<std::uint64_t>();
    cfg.threads = j.at("threads").get<int>();
    cfg.eval_every = j.at("eval_every").get<int>();
    cfg.checkpoint_every = j.at("checkpoint_every").get<int>();

    const json& d = j.at("dataset");
    cfg.dataset.name = d.at("name").get<std::string>();
    cfg.dataset.dir = d.at("dir").get<std::string>();
    cfg.dataset.n = d.at("n").get<std::size_t>();
    cfg.dataset.test_n = d.at("test_n").get<std::size_t>();
    cfg.dataset.noise = d.at("noise").get<double>();
    cfg.dataset.n_labeled = d.at("n_labeled").get<std::size_t>();
    cfg.dataset.split_seed = d.at("split_seed").get<std::uint64_t>();
    cfg.dataset.stratified = d.at("stratified").get<bool>();

    const json& a = j.at("augment");
    cfg.aug.max_translate_px = a.at("max_translate_px").get<int>();
    cfg.aug.horizontal_flip = a.at("horizontal_flip").get<bool>();
    cfg.aug.pad_mode = enum_from(a.at("pad_mode").get<std::string>(), "pad_mode", kPads);
    cfg.aug.vector_jitter_sigma = a.at("vector_jitter_sigma").get<double>();

    cfg.disc_preset = j.at("model").at("discriminator").get<std::string>();
    cfg.gen_preset = j.at("model").at("generator").get<std::string>();
    cfg.batch_labeled = j.at("batch").at("labeled").get<std::size_t>();
    cfg.batch_unlabeled = j.at("batch").at("unlabeled").get<std::size_t>();

    const json& c = j.at("consistency");
    cfg.kind = enum_from(c.at("kind").get<std::string>(), "consistency kind", kKinds);
    cfg.divergence = enum_from(c.at("divergence").get<std::string>(), "divergence", kDivs);
    cfg.placement.kind =
        enum_from(c.at("placement").get<std::string>(), "placement", kPlacements);
    cfg.placement.feature_weight = c.at("feature_weight").get<double>();
    cfg.consistency_on_labeled = c.at("on_labeled").get<bool>();
    cfg.renormalize = c.at("renormalize").get<bool>();

    const json& s = j.at("schedule");
    cfg.sched.total_epochs = s.at("total_epochs").get<int>();
    cfg.sched.lr_const_epochs = s.at("lr_const_epochs").get<int>();
    cfg.sched.rampup_epochs = s.at("rampup_epochs").get<int>();
    cfg.sched.base_lr = s.at("base_lr").get<double>();
    cfg.sched.lambda_cons_max = s.at("lambda_cons").get<double>();
    cfg.sched.alpha = s.at("alpha").get<double>();
    cfg.sched.ema_k = s.at("ema_k").get<double>();

    const json& ad = j.at("adam");
    cfg.adam.beta1 = ad.at("beta1").get<double>();
    cfg.adam.beta2 = ad.at("beta2").get<double>();
    cfg.adam.eps = ad.at("eps").get<double>();

    cfg.validate();
    return cfg;
}

json json_from(const trainer::TrainConfig& cfg) {
    json j = defaults();
    j["seed"] = cfg.seed;
    j["threads"] = cfg.threads;
    j["eval_every"] = cfg.eval_every;
    j["checkpoint_every"] = cfg.checkpoint_every;
    j["dataset"]["name"] = cfg.dataset.name;
    j["dataset"]["dir"] = cfg.dataset.dir;
    j["dataset"]["n"] = cfg.dataset.n;
    j["dataset"]["test_n"] = cfg.dataset.test_n;
    j["dataset"]["noise"] = cfg.dataset.noise;
    j["dataset"]["n_labeled"] = cfg.dataset.n_labeled;
    j["dataset"]["split_seed"] = cfg.dataset.split_seed;
    j["dataset"]["stratified"] = cfg.dataset.stratified;
    j["augment"]["max_translate_px"] = cfg.aug.max_translate_px;
    j["augment"]["horizontal_flip"] = cfg.aug.horizontal_flip;
    j["augment"]["pad_mode"] = enum_name(cfg.aug.pad_mode, kPads);
    j["augment"]["vector_jitter_sigma"] = cfg.aug.vector_jitter_sigma;
    j["model"]["discriminator"] = cfg.disc_preset;
    j["model"]["generator"] = cfg.gen_preset;
    j["batch"]["labeled"] = cfg.batch_labeled;
    j["batch"]["unlabeled"] = cfg.batch_unlabeled;
    j["consistency"]["kind"] = enum_name(cfg.kind, kKinds);
    j["consistency"]["divergence"] = enum_name(cfg.divergence, kDivs);
    j["consistency"]["placement"] = enum_name(cfg.placement.kind, kPlacements);
    j["consistency"]["feature_weight"] = cfg.placement.feature_weight;
    j["consistency"]["on_labeled"] = cfg.consistency_on_labeled;
    j["consistency"]["renormalize"] = cfg.renormalize;
    j["schedule"]["total_epochs"] = cfg.sched.total_epochs;
    j["schedule"]["lr_const_epochs"] = cfg.sched.lr_const_epochs;
    j["schedule"]["rampup_epochs"] = cfg.sched.rampup_epochs;
    j["schedule"]["base_lr"] = cfg.sched.base_lr;
    j["schedule"]["lambda_cons"] = cfg.sched.lambda_cons_max;
    j["schedule"]["alpha"] = cfg.sched.alpha;
    j["schedule"]["ema_k"] = cfg.sched.ema_k;
    j["adam"]["beta1"] = cfg.adam.beta1;
    j["adam"]["beta2"] = cfg.adam.beta2;
    j["adam"]["eps"] = cfg.adam.eps;
    return j;
}

}  // namespace

std::string default_config_json() { return defaults().dump(2); }

std::vector<std::string> known_keys() {
    std::vector<std::string> keys;
    collect_keys(defaults(), "", keys);
    std::sort(keys.begin(), keys.end());
    return keys;
}

std::string suggest_key(const std::string& wrong) {
    const std::string wrong_leaf = leaf_of(wrong);
    std::string best;
    std::size_t best_dist = static_cast<std::size_t>(-1);
    for (const auto& k : known_keys()) {
        const std::size_t d =
            std::min(levenshtein(wrong, k), levenshtein(wrong_leaf, leaf_of(k)));
        if (d < best_dist) {
            best_dist = d;
            best = k;
        }
    }
    return best;
}

trainer::TrainConfig from_json(const std::string& text) {
    return resolve(text, {});
}

std::string to_json(const trainer::TrainConfig& cfg) { return json_from(cfg).dump(2); }

trainer::TrainConfig resolve(const std::string& json_text,
                             const std::vector<std::string>& overrides,
                             std::string* resolved_json) {
    json base = defaults();
    if (!json_text.empty()) {
        json user;
        try {
            user = json::parse(json_text);
        } catch (const json::exception& e) {
            throw ConfigError(std::string("config is not valid JSON: ") + e.what());
        }
        if (!user.is_object()) throw ConfigError("config root must be a JSON object");
        merge_into(base, user, "");
    }
    for (const auto& ov : overrides) {
        const auto eq = ov.find('=');
        if (eq == std::string::npos)
            throw ConfigError("override \"" + ov + "\" is not of the form key=value");
        const std::string path = canonical_path(ov.substr(0, eq));
        json* slot = &base;
        std::size_t start = 0;
        while (true) {
            const auto dot = path.find('.', start);
            const std::string part = path.substr(start, dot - start);
            slot = &(*slot)[part];
            if (dot == std::string::npos) break;
            start = dot + 1;
        }
        *slot = parse_override_value(*slot, ov.substr(eq + 1));
    }
    if (resolved_json) *resolved_json = base.dump(2);
    return config_from(base);
}

std::string git_describe() { return SSGAN_GIT_DESCRIBE; }

std::string now_iso8601() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

void write_manifest(const std::string& run_dir, const std::string& resolved_config_json,
                    const std::string& started, const std::string& finished,
                    const std::vector<std::string>& artifacts) {
    json m;
    m["config"] = json::parse(resolved_config_json);
    m["git_describe"] = git_describe();
    m["started"] = started;
    m["finished"] = finished;
    m["artifacts"] = artifacts;
    std::filesystem::create_directories(run_dir);
    std::ofstream out(run_dir + "/manifest.json", std::ios::trunc);
    if (!out) throw DataError("cannot write manifest in " + run_dir);
    out << m.dump(2) << "\n";
}

}  // namespace ssgan::config
