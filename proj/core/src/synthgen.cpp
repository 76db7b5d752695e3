#include "dgcl/synthgen.hpp"

#include <cmath>
#include <numbers>
#include <set>
#include <type_traits>

#include <Eigen/Dense>
#include <fmt/format.h>
#include <fmt/ranges.h>

#include "dgcl/error.hpp"
#include "dgcl/rng.hpp"

namespace dgcl {

namespace {

using json = nlohmann::json;

// Stream tags keep every random component independent of the others.
enum Stream : std::uint64_t { kAnchors = 1, kStyleBasis = 2, kDomainOperator = 3, kLayout = 4, kRecord = 5 };

Eigen::MatrixXd gaussian_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
    Eigen::MatrixXd a(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j)
        for (Eigen::Index i = 0; i < rows; ++i) a(i, j) = rng.normal();
    return a;
}

// Orthonormal columns spanning a Gaussian matrix's column space.
Eigen::MatrixXd orthonormal(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(gaussian_matrix(rows, cols, rng));
    return qr.householderQ() * Eigen::MatrixXd::Identity(rows, cols);
}

struct DomainOperator {
    Eigen::MatrixXd rotation;
    Eigen::VectorXd shift;
};

}  // namespace

std::vector<double> SynthConfig::alpha_profile() const {
    if (!alpha.empty()) return alpha;
    std::vector<double> a(L);
    for (std::uint32_t l = 1; l <= L; ++l) {
        double s = std::sin(std::numbers::pi * l / L);
        a[l - 1] = alpha_peak * s * s;
    }
    if (L > 0) a[L - 1] = alpha_final;
    return a;
}

json SynthConfig::to_json() const {
    return {{"classes", classes},
            {"domains", domains},
            {"unseen_domain", unseen_domain},
            {"tasks", tasks},
            {"m", m},
            {"L", L},
            {"train_per_class", train_per_class},
            {"test_per_class_domain", test_per_class_domain},
            {"domain_shift", domain_shift},
            {"semantic_separation", semantic_separation},
            {"anchor_scale", anchor_scale},
            {"noise", noise},
            {"code_scale", code_scale},
            {"style_noise", style_noise},
            {"offset", offset},
            {"alpha_peak", alpha_peak},
            {"alpha_final", alpha_final},
            {"alpha", alpha},
            {"max_rejection_attempts", max_rejection_attempts},
            {"seed", seed}};
}

SynthConfig SynthConfig::from_json(const json& j) {
    SynthConfig c;
    std::vector<std::string> bad;
    if (!j.is_object()) throw Error(ErrorKind::config, "synthetic config must be a JSON object", {"<root>"});
    auto take = [&](const char* key, auto& field) {
        if (!j.contains(key)) return;
        using T = std::decay_t<decltype(field)>;
        if constexpr (std::is_integral_v<T> && std::is_unsigned_v<T> && !std::is_same_v<T, bool>) {
            if (!j.at(key).is_number_unsigned()) {
                bad.push_back(std::string(key) + ": must be a nonnegative integer");
                return;
            }
        }
        try {
            field = j.at(key).get<T>();
        } catch (const json::exception&) {
            bad.push_back(std::string(key) + ": wrong type");
        }
    };
    static const std::set<std::string> known = {
        "classes",     "domains",     "unseen_domain", "tasks",  "m",          "L",           "train_per_class",
        "test_per_class_domain", "domain_shift", "semantic_separation", "anchor_scale", "noise", "code_scale",
        "style_noise", "offset",      "alpha_peak",    "alpha_final", "alpha",  "max_rejection_attempts", "seed"};
    for (const auto& [k, v] : j.items())
        if (!known.count(k)) bad.push_back(k + ": unknown key");
    take("classes", c.classes);
    take("domains", c.domains);
    take("unseen_domain", c.unseen_domain);
    take("tasks", c.tasks);
    take("m", c.m);
    take("L", c.L);
    take("train_per_class", c.train_per_class);
    take("test_per_class_domain", c.test_per_class_domain);
    take("domain_shift", c.domain_shift);
    take("semantic_separation", c.semantic_separation);
    take("anchor_scale", c.anchor_scale);
    take("noise", c.noise);
    take("code_scale", c.code_scale);
    take("style_noise", c.style_noise);
    take("offset", c.offset);
    take("alpha_peak", c.alpha_peak);
    take("alpha_final", c.alpha_final);
    take("alpha", c.alpha);
    take("max_rejection_attempts", c.max_rejection_attempts);
    take("seed", c.seed);
    for (auto& v : c.violations()) bad.push_back(std::move(v));
    if (!bad.empty()) {
        std::string msg = "invalid synthetic config";
        throw Error(ErrorKind::config, msg, bad);
    }
    return c;
}

std::vector<std::string> SynthConfig::violations() const {
    std::vector<std::string> v;
    if (classes == 0) v.push_back("classes: must be positive");
    if (domains == 0) v.push_back("domains: must be positive");
    if (tasks == 0) v.push_back("tasks: must be positive");
    if (tasks > classes) v.push_back("tasks: cannot exceed classes");
    if (tasks < domains) v.push_back("tasks: every domain needs a task, so tasks >= domains");
    if (m == 0) v.push_back("m: must be positive");
    if (L == 0) v.push_back("L: must be positive");
    if (train_per_class < 2) v.push_back("train_per_class: must be at least 2");
    if (!(domain_shift >= 0.0)) v.push_back("domain_shift: must be >= 0");
    if (!(semantic_separation > 0.0)) v.push_back("semantic_separation: must be > 0");
    if (!(anchor_scale > 0.0)) v.push_back("anchor_scale: must be > 0");
    if (!(noise >= 0.0)) v.push_back("noise: must be >= 0");
    if (!(code_scale >= 0.0)) v.push_back("code_scale: must be >= 0");
    if (!(style_noise >= 0.0)) v.push_back("style_noise: must be >= 0");
    if (!std::isfinite(offset)) v.push_back("offset: must be finite");
    if (!(alpha_peak >= 0.0 && alpha_peak <= 1.0)) v.push_back("alpha_peak: must lie in [0, 1]");
    if (!(alpha_final >= 0.0 && alpha_final <= 1.0)) v.push_back("alpha_final: must lie in [0, 1]");
    if (!alpha.empty()) {
        if (alpha.size() != L) v.push_back("alpha: must have L entries");
        for (double a : alpha)
            if (!(a >= 0.0 && a <= 1.0)) {
                v.push_back("alpha: entries must lie in [0, 1]");
                break;
            }
    }
    if (m > 0 && domains + (unseen_domain ? 1u : 0u) > m) v.push_back("domains: style basis needs domains <= m");
    if (max_rejection_attempts == 0) v.push_back("max_rejection_attempts: must be positive");
    return v;
}

FeatureBank generate(const SynthConfig& cfg) {
    if (auto v = cfg.violations(); !v.empty()) throw Error(ErrorKind::config, "invalid synthetic config", v);
    const auto m = static_cast<Eigen::Index>(cfg.m);
    const std::uint32_t C = cfg.classes, D = cfg.domains, T = cfg.tasks, L = cfg.L;
    const std::uint32_t D_all = D + (cfg.unseen_domain ? 1 : 0);
    const auto alpha = cfg.alpha_profile();

    // Class anchors with rejection for minimum separation.
    std::vector<Eigen::VectorXd> anchors;
    {
        Rng rng = Rng::stream(cfg.seed, {kAnchors});
        std::uint32_t attempts = 0;
        while (anchors.size() < C) {
            if (++attempts > cfg.max_rejection_attempts)
                fail(ErrorKind::separation_infeasible,
                     fmt::format("could not place {} anchors {} apart within {} attempts", C, cfg.semantic_separation,
                                 cfg.max_rejection_attempts));
            Eigen::VectorXd z(m);
            for (Eigen::Index i = 0; i < m; ++i) z[i] = cfg.anchor_scale * rng.normal();
            bool ok = true;
            for (const auto& y : anchors) ok = ok && (z - y).norm() >= cfg.semantic_separation;
            if (ok) anchors.push_back(std::move(z));
        }
    }

    // Style basis: one orthonormal direction per seen domain.
    Eigen::MatrixXd style;
    {
        Rng rng = Rng::stream(cfg.seed, {kStyleBasis});
        style = orthonormal(m, D, rng);
    }

    std::vector<DomainOperator> ops(D_all);
    for (std::uint32_t d = 0; d < D_all; ++d) {
        Rng rng = Rng::stream(cfg.seed, {kDomainOperator, d});
        ops[d].rotation = orthonormal(m, m, rng);
        Eigen::VectorXd dir;
        if (d < D) {
            dir = style.col(d);
        } else {
            // Held-out style: a random mixture of the seen styles.
            Eigen::VectorXd w(D);
            for (std::uint32_t k = 0; k < D; ++k) w[k] = rng.normal();
            dir = style * w.normalized();
        }
        ops[d].shift = cfg.domain_shift * dir;
    }

    // Task layout: class partition and training domains.
    FeatureBank bank;
    bank.m = cfg.m;
    bank.L = cfg.L;
    bank.pooling = "synthetic";
    bank.producer = {{"generator", "synthgen"}, {"config", cfg.to_json()}};
    for (std::uint32_t c = 0; c < C; ++c) bank.class_names.push_back(fmt::format("class_{:02}", c));
    for (std::uint32_t d = 0; d < D; ++d) bank.domain_names.push_back(fmt::format("domain_{}", d));
    if (cfg.unseen_domain) {
        bank.domain_names.push_back("unseen");
        bank.unseen_domains.push_back(D);
    }
    {
        Rng rng = Rng::stream(cfg.seed, {kLayout});
        auto perm = rng.permutation(C);
        std::size_t pos = 0;
        for (std::uint32_t t = 0; t < T; ++t) {
            std::size_t n = C / T + (t < C % T ? 1 : 0);
            TaskSpec spec;
            for (std::size_t k = 0; k < n; ++k) spec.classes.push_back(static_cast<ClassId>(perm[pos++]));
            bank.tasks.push_back(std::move(spec));
        }
        std::vector<DomainId> doms;
        for (auto d : rng.permutation(D)) doms.push_back(static_cast<DomainId>(d));
        while (doms.size() < T) doms.push_back(static_cast<DomainId>(rng.below(D)));
        rng.shuffle(doms);
        for (std::uint32_t t = 0; t < T; ++t) bank.tasks[t].train_domain = doms[t];
    }

    Eigen::VectorXd spectrum(m);
    for (Eigen::Index k = 0; k < m; ++k) spectrum[k] = cfg.code_scale * std::exp(-static_cast<double>(k) / 8.0);

    auto make_record = [&](ClassId c, DomainId d, Split split, std::uint32_t index) {
        Rng rng = Rng::stream(cfg.seed, {kRecord, c, d, static_cast<std::uint64_t>(split), index});
        Eigen::VectorXd u(m);
        for (Eigen::Index k = 0; k < m; ++k) u[k] = rng.normal() * spectrum[k];
        Eigen::VectorXd styled = ops[d].rotation * u + ops[d].shift;
        FeatureRecord rec;
        rec.class_id = c;
        rec.domain_id = d;
        rec.split = split;
        rec.layers = Tensor(L, cfg.m);
        Eigen::VectorXd jitter(D);
        for (std::uint32_t l = 0; l < L; ++l) {
            for (std::uint32_t k = 0; k < D; ++k) jitter[k] = rng.normal();
            Eigen::VectorXd nuisance = style * jitter * cfg.style_noise;
            double* row = rec.layers.row_ptr(l);
            for (Eigen::Index i = 0; i < m; ++i)
                row[i] = (1.0 - alpha[l]) * anchors[c][i] + alpha[l] * styled[i] + cfg.noise * rng.normal() +
                         cfg.offset + nuisance[i];
        }
        return rec;
    };

    for (std::uint32_t t = 0; t < T; ++t)
        for (ClassId c : bank.tasks[t].classes)
            for (std::uint32_t i = 0; i < cfg.train_per_class; ++i)
                bank.records.push_back(make_record(c, bank.tasks[t].train_domain, Split::train, i));
    for (ClassId c = 0; c < C; ++c)
        for (DomainId d = 0; d < D_all; ++d)
            for (std::uint32_t i = 0; i < cfg.test_per_class_domain; ++i)
                bank.records.push_back(make_record(c, d, Split::test, i));

    validate(bank);
    return bank;
}

BankSummary describe(const FeatureBank& bank) {
    BankSummary s;
    s.m = bank.m;
    s.L = bank.L;
    s.records = bank.records.size();
    s.num_classes = bank.class_names.size();
    s.num_domains = bank.domain_names.size();
    s.num_tasks = bank.tasks.size();
    s.seen_domains = bank.seen_domains();
    s.unseen_domains = bank.unseen_domains;
    s.per_domain_train.assign(s.num_domains, 0);
    s.per_domain_test.assign(s.num_domains, 0);
    s.per_class_train.assign(s.num_classes, 0);
    s.per_class_test.assign(s.num_classes, 0);
    for (const auto& r : bank.records) {
        bool train = r.split == Split::train;
        (train ? s.train_records : s.test_records)++;
        (train ? s.per_domain_train : s.per_domain_test)[r.domain_id]++;
        (train ? s.per_class_train : s.per_class_test)[r.class_id]++;
    }
    for (const auto& t : bank.tasks) {
        BankSummary::TaskRow row{t.classes, t.train_domain, 0, 0};
        for (ClassId c : t.classes) {
            row.train += s.per_class_train[c];
            row.test += s.per_class_test[c];
        }
        s.tasks.push_back(std::move(row));
    }
    if (s.test_records == 0) s.flags.push_back("empty_test_split");
    if (s.train_records == 0) s.flags.push_back("empty_train_split");
    for (std::size_t t = 0; t < s.tasks.size(); ++t)
        if (s.tasks[t].test == 0) s.flags.push_back(fmt::format("task_{}_has_no_test_records", t));
    return s;
}

json BankSummary::to_json() const {
    json tasks_j = json::array();
    for (const auto& t : tasks)
        tasks_j.push_back({{"classes", t.classes}, {"train_domain", t.train_domain}, {"train", t.train}, {"test", t.test}});
    std::vector<std::size_t> cpt;
    for (const auto& t : tasks) cpt.push_back(t.classes.size());
    return {{"statistics",
             {{"m", m},
              {"L", L},
              {"records", records},
              {"train_records", train_records},
              {"test_records", test_records},
              {"classes", num_classes},
              {"domains", num_domains},
              {"tasks", num_tasks},
              {"classes_per_task", cpt},
              {"seen_domains", seen_domains},
              {"unseen_domains", unseen_domains}}},
            {"tasks", tasks_j},
            {"per_domain", {{"train", per_domain_train}, {"test", per_domain_test}}},
            {"per_class", {{"train", per_class_train}, {"test", per_class_test}}},
            {"flags", flags}};
}

std::string BankSummary::to_text() const {
    std::string out;
    out += fmt::format("m={} L={} records={} (train {}, test {})\n", m, L, records, train_records, test_records);
    out += fmt::format("classes={} domains={} (seen {}, unseen {}) tasks={}\n", num_classes, num_domains,
                       seen_domains.size(), unseen_domains.size(), num_tasks);
    out += fmt::format("{:<6} {:<8} {:>7} {:>7}  classes\n", "task", "domain", "train", "test");
    for (std::size_t t = 0; t < tasks.size(); ++t)
        out += fmt::format("{:<6} {:<8} {:>7} {:>7}  {}\n", t, tasks[t].train_domain, tasks[t].train, tasks[t].test,
                           fmt::join(tasks[t].classes, ","));
    out += fmt::format("{:<8} {:>7} {:>7}\n", "domain", "train", "test");
    for (std::size_t d = 0; d < per_domain_train.size(); ++d)
        out += fmt::format("{:<8} {:>7} {:>7}\n", d, per_domain_train[d], per_domain_test[d]);
    for (const auto& f : flags) out += "flag: " + f + "\n";
    return out;
}

}  // namespace dgcl
