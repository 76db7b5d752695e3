#include "dgcl/pipeline.hpp"

#include <algorithm>
#include <set>
#include <type_traits>

#include "dgcl/error.hpp"
#include "dgcl/rng.hpp"

namespace dgcl {

namespace {

using json = nlohmann::json;

// Per-(seed, task, phase) streams give paired runs common random numbers.
enum Phase : std::uint64_t {
    kPhase1Shuffle = 1,
    kPrototypes = 2,
    kDotSampling = 3,
    kAlignOrder = 4,
    kAlignClasses = 5,
    kDotInit = 6,
    kAlignDomains = 7,
};

Rng phase_rng(const EpisodeState& s, Phase phase) { return Rng::stream(s.config.seed, {s.next_task, phase}); }

struct Pair {
    DomainId domain;
    ClassId cls;
};

std::vector<Pair> all_pairs(const EpisodeState& s) {
    std::vector<Pair> pairs;
    for (const auto& [d, p] : s.P)
        for (const auto& [c, g] : s.H) pairs.push_back({d, c});
    return pairs;
}

std::map<ClassId, GaussianSampler> make_samplers(const SemanticMemory& H) {
    std::map<ClassId, GaussianSampler> out;
    for (const auto& [c, g] : H) out.emplace(c, GaussianSampler(g));
    return out;
}

Tensor stack_final_layers(const RecordView& records, std::uint32_t m) {
    Tensor x(records.size(), m);
    for (std::size_t i = 0; i < records.size(); ++i) {
        const Tensor& R = records[i]->layers;
        std::copy(R.row_ptr(R.rows() - 1), R.row_ptr(R.rows() - 1) + m, x.row_ptr(i));
    }
    return x;
}

}  // namespace

json EpisodeConfig::to_json() const {
    return {{"e_dot", e_dot},
            {"e_oa", e_oa},
            {"k_prototypes", k_prototypes},
            {"lambda", lambda},
            {"tau", tau},
            {"heads", heads},
            {"m_proj", m_proj},
            {"covariance", to_string(covariance)},
            {"prototype_selection", to_string(prototype_selection)},
            {"no_dot", no_dot},
            {"align_schedule", to_string(align_schedule)},
            {"scale", to_string(scale)},
            {"normalize_projections", normalize_projections},
            {"positive_reduction", to_string(positive_reduction)},
            {"activation", to_string(activation)},
            {"readout_init", to_string(readout_init)},
            {"phase1_epochs", phase1_epochs},
            {"phase1_batch", phase1_batch},
            {"learning_rate", learning_rate},
            {"pool_per_class", pool_per_class},
            {"samples_per_pair", samples_per_pair},
            {"seed", seed}};
}

EpisodeConfig EpisodeConfig::from_json(const json& j) {
    EpisodeConfig c;
    std::vector<std::string> bad;
    if (!j.is_object()) throw Error(ErrorKind::config, "episode config must be a JSON object", {"<root>"});
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
    auto take_enum = [&](const char* key, auto& field, auto parse) {
        if (!j.contains(key)) return;
        try {
            field = parse(j.at(key).get<std::string>());
        } catch (const json::exception&) {
            bad.push_back(std::string(key) + ": wrong type");
        } catch (const Error& e) {
            bad.push_back(std::string(key) + ": " + e.what());
        }
    };
    static const std::set<std::string> known = {
        "e_dot",      "e_oa",        "k_prototypes", "lambda",    "tau",        "heads",
        "m_proj",     "covariance",  "prototype_selection", "no_dot", "align_schedule", "scale",
        "normalize_projections",     "positive_reduction", "activation", "readout_init", "phase1_epochs",
        "phase1_batch", "learning_rate", "pool_per_class", "samples_per_pair", "seed"};
    for (const auto& [k, v] : j.items())
        if (!known.count(k)) bad.push_back(k + ": unknown key");
    take("e_dot", c.e_dot);
    take("e_oa", c.e_oa);
    take("k_prototypes", c.k_prototypes);
    take("lambda", c.lambda);
    take("tau", c.tau);
    take("heads", c.heads);
    take("m_proj", c.m_proj);
    take_enum("covariance", c.covariance, parse_covariance_mode);
    take_enum("prototype_selection", c.prototype_selection, parse_prototype_selection);
    take("no_dot", c.no_dot);
    take_enum("align_schedule", c.align_schedule, parse_align_schedule);
    take_enum("scale", c.scale, parse_attention_scale);
    take("normalize_projections", c.normalize_projections);
    take_enum("positive_reduction", c.positive_reduction, parse_positive_reduction);
    take_enum("activation", c.activation, parse_activation);
    take_enum("readout_init", c.readout_init, parse_readout_init);
    take("phase1_epochs", c.phase1_epochs);
    take("phase1_batch", c.phase1_batch);
    take("learning_rate", c.learning_rate);
    take("pool_per_class", c.pool_per_class);
    take("samples_per_pair", c.samples_per_pair);
    take("seed", c.seed);
    for (auto& v : c.violations()) bad.push_back(std::move(v));
    if (!bad.empty()) throw Error(ErrorKind::config, "invalid episode config", bad);
    return c;
}

std::vector<std::string> EpisodeConfig::violations() const {
    std::vector<std::string> v;
    if (e_dot == 0) v.push_back("e_dot: must be positive");
    if (k_prototypes == 0) v.push_back("k_prototypes: must be positive");
    if (!(lambda > 0.0 && lambda < 1.0)) v.push_back("lambda: must lie in (0, 1)");
    if (!(tau > 0.0)) v.push_back("tau: must be positive");
    if (heads == 0) v.push_back("heads: must be positive");
    if (phase1_batch == 0) v.push_back("phase1_batch: must be positive");
    if (!(learning_rate > 0.0)) v.push_back("learning_rate: must be positive");
    if (pool_per_class == 0) v.push_back("pool_per_class: must be positive");
    if (samples_per_pair == 0) v.push_back("samples_per_pair: must be positive");
    return v;
}

std::size_t EpisodeState::retained_floats() const {
    std::size_t n = 0;
    for (const auto& [c, g] : H) n += g.stored_floats();
    for (const auto& [d, p] : P)
        for (const auto& R : p.prototypes) n += R.size();
    return n;
}

EpisodeState make_episode(const FeatureBank& bank, const EpisodeConfig& config) {
    auto bad = config.violations();
    if (config.heads > 0 && bank.m % config.heads != 0)
        bad.push_back("heads: must divide m=" + std::to_string(bank.m));
    if (!bad.empty()) throw Error(ErrorKind::config, "invalid episode config", bad);
    EpisodeState s;
    s.config = config;
    s.m = bank.m;
    s.L = bank.L;
    return s;
}

void learn_task(EpisodeState& s, const FeatureBank& bank, std::size_t t) {
    if (t != s.next_task)
        fail(ErrorKind::task_order, "expected task " + std::to_string(s.next_task) + ", got " + std::to_string(t));
    if (t >= bank.tasks.size()) fail(ErrorKind::task_order, "task " + std::to_string(t) + " is not in the bank");
    const TaskSpec& task = bank.tasks[t];
    const auto& cfg = s.config;

    RecordView train = select(bank, RecordFilter{.task = t, .split = Split::train});
    for (const FeatureRecord* r : train)
        if (r->domain_id != task.train_domain)
            fail(ErrorKind::invariant, "task " + std::to_string(t) + " has a train record outside its domain");
    for (ClassId c : task.classes)
        if (select(bank, RecordFilter{.class_id = c, .split = Split::train}).empty())
            fail(ErrorKind::missing_records, "class " + std::to_string(c) + " has no training records");

    const std::size_t first_row = s.head.size();
    s.head.append(task.classes, s.m);

    // Cross-entropy over this task's rows only.
    Tensor x = stack_final_layers(train, s.m);
    std::vector<std::size_t> labels;
    for (const FeatureRecord* r : train) {
        auto it = std::find(task.classes.begin(), task.classes.end(), r->class_id);
        labels.push_back(static_cast<std::size_t>(it - task.classes.begin()));
    }
    const std::size_t k = task.classes.size();
    Tensor w = slice_rows(s.head.weight, first_row, first_row + k);
    Tensor b = slice_cols(s.head.bias, first_row, first_row + k);
    if (cfg.phase1_epochs > 0) {
        Rng rng = phase_rng(s, kPhase1Shuffle);
        const std::size_t n = x.rows(), bs = cfg.phase1_batch, nb = (n + bs - 1) / bs;
        OptimizerState opt(AdamOptions{.lr = cfg.learning_rate, .total_steps = cfg.phase1_epochs * nb});
        for (std::size_t e = 0; e < cfg.phase1_epochs; ++e) {
            auto perm = rng.permutation(n);
            for (std::size_t i = 0; i < nb; ++i) {
                const std::size_t lo = i * bs, hi = std::min(n, lo + bs);
                Tensor xb(hi - lo, s.m);
                std::vector<std::size_t> yb;
                for (std::size_t j = lo; j < hi; ++j) {
                    std::copy(x.row_ptr(perm[j]), x.row_ptr(perm[j]) + s.m, xb.row_ptr(j - lo));
                    yb.push_back(labels[perm[j]]);
                }
                Graph g;
                NodeId wn = g.leaf(w, true), bn = g.leaf(b, true);
                NodeId loss = cross_entropy(g, g.add_row(g.matmul(g.leaf(std::move(xb)), g.transpose(wn)), bn), yb);
                auto grads = g.backward(loss);
                adam_step({&w, &b}, {&grads.at(wn), &grads.at(bn)}, opt);
            }
        }
    }
    for (std::size_t i = 0; i < k; ++i) {
        std::copy(w.row_ptr(i), w.row_ptr(i) + s.m, s.head.weight.row_ptr(first_row + i));
        s.head.bias[first_row + i] = b[i];
    }

    for (ClassId c : task.classes) {
        RecordView rc = select(bank, RecordFilter{.class_id = c, .split = Split::train});
        s.H[c] = fit_class_gaussian(c, stack_final_layers(rc, s.m), cfg.covariance);
        s.class_domain[c] = task.train_domain;
    }

    // Revisited domains re-select from retained prototypes plus new candidates.
    std::vector<const Tensor*> candidates;
    DomainPrototypeSet previous;
    if (auto it = s.P.find(task.train_domain); it != s.P.end()) {
        previous = std::move(it->second);
        for (const auto& R : previous.prototypes) candidates.push_back(&R);
    }
    for (const FeatureRecord* r : train) candidates.push_back(&r->layers);
    Rng rng = phase_rng(s, kPrototypes);
    s.P[task.train_domain] = select_prototypes(task.train_domain, candidates, cfg.k_prototypes, cfg.prototype_selection, rng);

    s.next_task = t + 1;
}

DotTrainResult train_dot(const EpisodeState& s) {
    if (s.H.size() < 2) fail(ErrorKind::contract, "train_dot needs at least two classes in H");
    if (s.P.empty()) fail(ErrorKind::contract, "train_dot needs at least one domain in P");
    const auto& cfg = s.config;

    DotTrainResult out;
    {
        Rng init = phase_rng(s, kDotInit);
        out.params = init_dot(DotConfig{.m = s.m,
                                        .m_proj = cfg.m_proj,
                                        .heads = cfg.heads,
                                        .activation = cfg.activation,
                                        .scale = cfg.scale,
                                        .readout_init = cfg.readout_init},
                              init);
    }
    DotParameters& p = out.params;
    auto samplers = make_samplers(s.H);
    auto pairs = all_pairs(s);

    LossBatch batch;
    batch.lambda = cfg.lambda;
    batch.options = {cfg.tau, cfg.normalize_projections, cfg.positive_reduction};
    for (const auto& [c, g] : s.H)
        for (std::size_t k = 0; k < cfg.pool_per_class; ++k) {
            batch.pool_classes.push_back(c);
            batch.pool_domains.push_back(s.class_domain.at(c));
        }
    batch.anchor_classes.resize(1);
    batch.anchor_domains.resize(1);

    Rng rng = phase_rng(s, kDotSampling);
    OptimizerState opt(AdamOptions{.lr = cfg.learning_rate, .total_steps = cfg.e_dot * pairs.size()});
    auto params = p.tensors();
    std::vector<Tensor*> param_list(params.begin(), params.end());
    for (std::size_t e = 0; e < cfg.e_dot; ++e) {
        double total = 0.0;
        for (std::size_t idx : rng.permutation(pairs.size())) {
            const Pair& pr = pairs[idx];
            Tensor r = samplers.at(pr.cls).sample(1, rng);
            const Tensor& R = sample_domain(s.P.at(pr.domain), rng);
            std::vector<Tensor> pool_parts;
            for (const auto& [c, sampler] : samplers) pool_parts.push_back(sampler.sample(cfg.pool_per_class, rng));
            batch.anchor_classes[0] = pr.cls;
            batch.anchor_domains[0] = pr.domain;

            Graph g;
            DotNodes nodes = add_parameters(g, p, true);
            NodeId rhat = dot_forward(g, nodes, p, g.leaf(std::move(r)), g.leaf(R));
            NodeId pool = g.leaf(concat_rows(pool_parts));
            NodeId loss = loss_dot(g, rhat, pool, nodes.p_cls(), nodes.p_dom(), batch);
            total += g.scalar(loss);
            auto grads = g.backward(loss);
            std::vector<const Tensor*> grad_list;
            for (NodeId id : nodes.ids) grad_list.push_back(&grads.at(id));
            adam_step(param_list, grad_list, opt);
        }
        out.loss_trace.push_back(total / static_cast<double>(pairs.size()));
    }
    return out;
}

void align_head(EpisodeState& s, const DotParameters* params) {
    const auto& cfg = s.config;
    if (cfg.e_oa == 0 || s.H.empty()) return;
    auto samplers = make_samplers(s.H);
    auto pairs = all_pairs(s);
    if (pairs.empty()) return;
    Rng order = phase_rng(s, kAlignOrder);
    Rng class_rng = phase_rng(s, kAlignClasses);
    Rng domain_rng = phase_rng(s, kAlignDomains);
    OptimizerState opt(AdamOptions{.lr = cfg.learning_rate, .total_steps = cfg.e_oa * pairs.size()});
    const std::size_t n = cfg.samples_per_pair;
    for (std::size_t e = 0; e < cfg.e_oa; ++e) {
        for (std::size_t idx : order.permutation(pairs.size())) {
            const Pair& pr = pairs[idx];
            Tensor r = samplers.at(pr.cls).sample(n, class_rng);
            std::vector<std::size_t> labels(n, s.head.row_of(pr.cls));
            Graph g;
            NodeId wn = g.leaf(s.head.weight, true), bn = g.leaf(s.head.bias, true);
            std::optional<NodeId> pseudo;
            if (params) {
                std::vector<const Tensor*> Rs;
                for (std::size_t i = 0; i < n; ++i) Rs.push_back(&sample_domain(s.P.at(pr.domain), domain_rng));
                pseudo = g.leaf(dot_forward_batch(*params, r, Rs));
            }
            NodeId loss = loss_oa(g, wn, bn, g.leaf(std::move(r)), labels, pseudo, labels);
            auto grads = g.backward(loss);
            adam_step({&s.head.weight, &s.head.bias}, {&grads.at(wn), &grads.at(bn)}, opt);
        }
    }
}

std::vector<ClassId> predict(const OutputHead& head, const RecordView& records) {
    if (records.empty() || head.size() == 0) return {};
    const std::uint32_t m = static_cast<std::uint32_t>(head.weight.cols());
    Tensor z = head.logits(stack_final_layers(records, m));
    std::vector<ClassId> out(records.size());
    for (std::size_t i = 0; i < z.rows(); ++i) {
        const double* row = z.row_ptr(i);
        out[i] = head.classes[static_cast<std::size_t>(std::max_element(row, row + z.cols()) - row)];
    }
    return out;
}

AccuracyTensor empty_accuracy_tensor(const FeatureBank& bank) {
    std::vector<DomainId> train, domains = bank.seen_domains();
    for (const auto& t : bank.tasks) train.push_back(t.train_domain);
    std::optional<DomainId> unseen;
    if (!bank.unseen_domains.empty()) {
        unseen = bank.unseen_domains.front();
        domains.push_back(*unseen);
    }
    return AccuracyTensor(train, domains, unseen);
}

void evaluate(const EpisodeState& s, const FeatureBank& bank, std::size_t checkpoint, AccuracyTensor& out) {
    RecordView test = select(bank, RecordFilter{.split = Split::test});
    auto pred = predict(s.head, test);
    // (class, domain) -> (correct, total)
    std::map<std::pair<ClassId, DomainId>, std::pair<std::size_t, std::size_t>> tally;
    for (std::size_t i = 0; i < test.size(); ++i) {
        auto& cell = tally[{test[i]->class_id, test[i]->domain_id}];
        cell.first += pred[i] == test[i]->class_id ? 1 : 0;
        cell.second += 1;
    }
    for (std::size_t t = 0; t < s.next_task; ++t) {
        for (DomainId d : out.domains()) {
            double acc = 0.0;
            std::size_t classes = 0;
            for (ClassId c : bank.tasks[t].classes) {
                auto it = tally.find({c, d});
                if (it == tally.end()) continue;
                acc += static_cast<double>(it->second.first) / static_cast<double>(it->second.second);
                ++classes;
            }
            if (classes == 0)
                fail(ErrorKind::missing_records,
                     "no test records for task " + std::to_string(t) + " on domain " + std::to_string(d));
            out.set(t, d, checkpoint, acc / static_cast<double>(classes));
        }
    }
}

EpisodeResult run_episode(const FeatureBank& bank, const EpisodeConfig& config) {
    validate(bank);
    EpisodeResult res{make_episode(bank, config), empty_accuracy_tensor(bank), {}};
    EpisodeState& s = res.state;
    const std::size_t T = bank.tasks.size();
    for (std::size_t t = 0; t < T; ++t) {
        learn_task(s, bank, t);
        const bool align = config.align_schedule == AlignSchedule::per_task || t + 1 == T;
        if (align) {
            if (!config.no_dot && s.H.size() >= 2) {
                DotTrainResult dot = train_dot(s);
                res.dot_traces.push_back(dot.loss_trace);
                align_head(s, &dot.params);
            } else {
                align_head(s, nullptr);
            }
        }
        evaluate(s, bank, t, res.accuracy);
    }
    return res;
}

std::string_view to_string(AlignSchedule s) { return s == AlignSchedule::per_task ? "per_task" : "final_only"; }

AlignSchedule parse_align_schedule(std::string_view s) {
    if (s == "per_task") return AlignSchedule::per_task;
    if (s == "final_only") return AlignSchedule::final_only;
    throw Error(ErrorKind::config, "unknown align schedule '" + std::string(s) + "'", {"align_schedule"});
}

}  // namespace dgcl
