#include "dgcl/featurebank.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <set>

#include "dgcl/error.hpp"

namespace dgcl {

namespace {

using json = nlohmann::json;

class Writer {
public:
    void bytes(const void* p, std::size_t n) {
        auto b = static_cast<const std::uint8_t*>(p);
        out.insert(out.end(), b, b + n);
    }
    template <class U>
    void le(U v) {
        for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    std::vector<std::uint8_t> out;
};

class Reader {
public:
    explicit Reader(const std::vector<std::uint8_t>& b) : buf(b) {}
    void need(std::size_t n, const char* what) const {
        if (buf.size() - pos < n) fail(ErrorKind::truncated, std::string("truncated bank while reading ") + what);
    }
    template <class U>
    U le(const char* what) {
        need(sizeof(U), what);
        U v = 0;
        for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(static_cast<U>(buf[pos + i]) << (8 * i));
        pos += sizeof(U);
        return v;
    }
    const std::vector<std::uint8_t>& buf;
    std::size_t pos = 0;
};

void invariant(bool ok, const std::string& message) {
    if (!ok) fail(ErrorKind::invariant, message);
}

}  // namespace

std::string_view to_string(Split s) { return s == Split::train ? "train" : "test"; }

std::vector<DomainId> FeatureBank::seen_domains() const {
    std::set<DomainId> s;
    for (const auto& t : tasks) s.insert(t.train_domain);
    return {s.begin(), s.end()};
}

bool FeatureBank::is_unseen(DomainId d) const {
    return std::find(unseen_domains.begin(), unseen_domains.end(), d) != unseen_domains.end();
}

std::optional<std::size_t> FeatureBank::task_of(ClassId c) const {
    for (std::size_t t = 0; t < tasks.size(); ++t)
        if (std::find(tasks[t].classes.begin(), tasks[t].classes.end(), c) != tasks[t].classes.end()) return t;
    return std::nullopt;
}

void validate(const FeatureBank& bank) {
    invariant(bank.m > 0 && bank.L > 0, "bank m and L must be positive");
    const auto nc = bank.class_names.size();
    const auto nd = bank.domain_names.size();

    std::set<ClassId> claimed;
    for (std::size_t t = 0; t < bank.tasks.size(); ++t) {
        const auto& task = bank.tasks[t];
        invariant(!task.classes.empty(), "task " + std::to_string(t) + " has no classes");
        invariant(task.train_domain < nd, "task " + std::to_string(t) + " trains on unknown domain");
        invariant(!bank.is_unseen(task.train_domain),
                  "task " + std::to_string(t) + " trains on a domain flagged unseen");
        for (ClassId c : task.classes) {
            invariant(c < nc, "task " + std::to_string(t) + " names unknown class " + std::to_string(c));
            invariant(claimed.insert(c).second, "class " + std::to_string(c) + " appears in two tasks");
        }
    }
    for (DomainId d : bank.unseen_domains) invariant(d < nd, "unseen domain id out of range");
    {
        std::set<DomainId> u(bank.unseen_domains.begin(), bank.unseen_domains.end());
        invariant(u.size() == bank.unseen_domains.size(), "duplicate unseen domain id");
    }
    auto seen = bank.seen_domains();
    for (DomainId d = 0; d < nd; ++d)
        invariant(std::binary_search(seen.begin(), seen.end(), d) || bank.is_unseen(d),
                  "domain " + std::to_string(d) + " is neither a training domain nor flagged unseen");

    for (std::size_t i = 0; i < bank.records.size(); ++i) {
        const auto& r = bank.records[i];
        const std::string where = "record " + std::to_string(i);
        invariant(r.layers.rows() == bank.L && r.layers.cols() == bank.m, where + " has wrong layer shape");
        invariant(r.layers.all_finite(), where + " has non-finite entries");
        invariant(r.class_id < nc, where + " has unknown class");
        invariant(r.domain_id < nd, where + " has unknown domain");
        if (r.split == Split::train) {
            auto t = bank.task_of(r.class_id);
            invariant(t.has_value(), where + " is a train record of a class outside every task");
            invariant(r.domain_id == bank.tasks[*t].train_domain,
                      where + " is a train record outside its task's training domain");
        }
    }
}

std::size_t record_payload_bytes(std::uint32_t m, std::uint32_t L) {
    return 4 + 4 + 1 + static_cast<std::size_t>(m) * L * 4;
}

nlohmann::json bank_metadata(const FeatureBank& bank) {
    json tasks = json::array();
    for (const auto& t : bank.tasks) tasks.push_back({{"classes", t.classes}, {"train_domain", t.train_domain}});
    return json{{"class_names", bank.class_names},
                {"domain_names", bank.domain_names},
                {"tasks", tasks},
                {"unseen_domains", bank.unseen_domains},
                {"pooling", bank.pooling},
                {"producer", bank.producer}};
}

std::vector<std::uint8_t> encode_bank(const FeatureBank& bank) {
    validate(bank);
    Writer w;
    w.bytes(kBankMagic, 4);
    w.le<std::uint16_t>(kBankVersion);
    w.le<std::uint32_t>(bank.m);
    w.le<std::uint32_t>(bank.L);
    w.le<std::uint64_t>(bank.records.size());
    std::string meta = bank_metadata(bank).dump();
    w.le<std::uint32_t>(static_cast<std::uint32_t>(meta.size()));
    w.bytes(meta.data(), meta.size());
    w.out.reserve(w.out.size() + bank.records.size() * record_payload_bytes(bank.m, bank.L));
    for (const auto& r : bank.records) {
        w.le<std::uint32_t>(r.class_id);
        w.le<std::uint32_t>(r.domain_id);
        w.le<std::uint8_t>(static_cast<std::uint8_t>(r.split));
        for (double v : r.layers.values()) w.le<std::uint32_t>(std::bit_cast<std::uint32_t>(static_cast<float>(v)));
    }
    return std::move(w.out);
}

FeatureBank decode_bank(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < 4 || std::memcmp(bytes.data(), kBankMagic, 4) != 0)
        fail(ErrorKind::bad_magic, "not a DGFB feature bank (bad magic)");
    Reader r(bytes);
    r.pos = 4;
    auto version = r.le<std::uint16_t>("version");
    if (version != kBankVersion)
        fail(ErrorKind::version_mismatch, "unsupported DGFB version " + std::to_string(version));
    FeatureBank bank;
    bank.m = r.le<std::uint32_t>("header");
    bank.L = r.le<std::uint32_t>("header");
    auto count = r.le<std::uint64_t>("header");
    auto meta_len = r.le<std::uint32_t>("metadata length");
    r.need(meta_len, "metadata");
    json meta;
    try {
        meta = json::parse(bytes.begin() + static_cast<std::ptrdiff_t>(r.pos),
                           bytes.begin() + static_cast<std::ptrdiff_t>(r.pos + meta_len));
        r.pos += meta_len;
        bank.class_names = meta.at("class_names").get<std::vector<std::string>>();
        bank.domain_names = meta.at("domain_names").get<std::vector<std::string>>();
        for (const auto& t : meta.at("tasks"))
            bank.tasks.push_back({t.at("classes").get<std::vector<ClassId>>(), t.at("train_domain").get<DomainId>()});
        bank.unseen_domains = meta.at("unseen_domains").get<std::vector<DomainId>>();
        bank.pooling = meta.at("pooling").get<std::string>();
        bank.producer = meta.value("producer", json::object());
    } catch (const json::exception& e) {
        fail(ErrorKind::invariant, std::string("malformed bank metadata: ") + e.what());
    }

    if (bank.m == 0 || bank.L == 0) fail(ErrorKind::invariant, "bank header has zero m or L");
    const std::size_t per = record_payload_bytes(bank.m, bank.L);
    if (count > (bytes.size() - r.pos) / per) fail(ErrorKind::truncated, "truncated bank while reading records");
    bank.records.reserve(count);
    const std::size_t n = static_cast<std::size_t>(bank.m) * bank.L;
    for (std::uint64_t i = 0; i < count; ++i) {
        r.need(per, "records");
        FeatureRecord rec;
        rec.class_id = r.le<std::uint32_t>("record");
        rec.domain_id = r.le<std::uint32_t>("record");
        auto split = r.le<std::uint8_t>("record");
        if (split > 1) fail(ErrorKind::invariant, "record " + std::to_string(i) + " has invalid split");
        rec.split = static_cast<Split>(split);
        std::vector<double> data(n);
        for (std::size_t k = 0; k < n; ++k) data[k] = std::bit_cast<float>(r.le<std::uint32_t>("record"));
        rec.layers = Tensor(bank.L, bank.m, std::move(data));
        bank.records.push_back(std::move(rec));
    }
    if (r.pos != bytes.size()) fail(ErrorKind::invariant, "trailing bytes after the last record");
    validate(bank);
    return bank;
}

void write_bank(const FeatureBank& bank, const std::filesystem::path& path) {
    auto bytes = encode_bank(bank);
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) fail(ErrorKind::io, "cannot open " + path.string() + " for writing");
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) fail(ErrorKind::io, "write failed for " + path.string());
}

FeatureBank read_bank(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) fail(ErrorKind::io, "cannot open " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return decode_bank(bytes);
}

RecordView select(const FeatureBank& bank, const RecordFilter& filter) {
    const std::vector<ClassId>* task_classes = nullptr;
    if (filter.task) {
        if (*filter.task >= bank.tasks.size()) return {};
        task_classes = &bank.tasks[*filter.task].classes;
    }
    RecordView out;
    for (const auto& r : bank.records) {
        if (filter.split && r.split != *filter.split) continue;
        if (filter.class_id && r.class_id != *filter.class_id) continue;
        if (filter.domain && r.domain_id != *filter.domain) continue;
        if (task_classes &&
            std::find(task_classes->begin(), task_classes->end(), r.class_id) == task_classes->end())
            continue;
        out.push_back(&r);
    }
    return out;
}

}  // namespace dgcl
