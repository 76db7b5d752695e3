#include <cstring>
#include <filesystem>

#include <gtest/gtest.h>

#include "dgcl/featurebank.hpp"
#include "dgcl/rng.hpp"
#include "expect_error.hpp"

using namespace dgcl;

namespace {

FeatureBank tiny_bank(std::size_t per_cell = 3) {
    FeatureBank b;
    b.m = 4;
    b.L = 2;
    b.class_names = {"a", "b", "c", "d"};
    b.domain_names = {"d0", "d1", "d2"};
    b.tasks = {{{0, 1}, 0}, {{2, 3}, 1}};
    b.unseen_domains = {2};
    b.pooling = "mean";
    b.producer = {{"generator", "test"}};
    Rng rng(9);
    auto record = [&](ClassId c, DomainId d, Split s) {
        Tensor x(b.L, b.m);
        for (std::size_t i = 0; i < x.size(); ++i) x[i] = rng.normal();
        b.records.push_back({c, d, s, x});
    };
    for (std::size_t t = 0; t < b.tasks.size(); ++t)
        for (ClassId c : b.tasks[t].classes)
            for (std::size_t k = 0; k < per_cell; ++k) record(c, b.tasks[t].train_domain, Split::train);
    for (ClassId c = 0; c < 4; ++c)
        for (DomainId d = 0; d < 3; ++d)
            for (std::size_t k = 0; k < per_cell; ++k) record(c, d, Split::test);
    return b;
}

}  // namespace

TEST(FeatureBank, RoundTripQuantizesToFloat32Only) {
    FeatureBank b = tiny_bank();
    FeatureBank r = decode_bank(encode_bank(b));
    EXPECT_EQ(r.m, b.m);
    EXPECT_EQ(r.L, b.L);
    EXPECT_EQ(r.class_names, b.class_names);
    EXPECT_EQ(r.domain_names, b.domain_names);
    EXPECT_EQ(r.unseen_domains, b.unseen_domains);
    EXPECT_EQ(r.pooling, b.pooling);
    EXPECT_EQ(r.producer, b.producer);
    ASSERT_EQ(r.tasks.size(), b.tasks.size());
    for (std::size_t t = 0; t < b.tasks.size(); ++t) {
        EXPECT_EQ(r.tasks[t].classes, b.tasks[t].classes);
        EXPECT_EQ(r.tasks[t].train_domain, b.tasks[t].train_domain);
    }
    ASSERT_EQ(r.records.size(), b.records.size());
    for (std::size_t i = 0; i < b.records.size(); ++i) {
        const auto &x = b.records[i], &y = r.records[i];
        EXPECT_EQ(x.class_id, y.class_id);
        EXPECT_EQ(x.domain_id, y.domain_id);
        EXPECT_EQ(x.split, y.split);
        for (std::size_t k = 0; k < x.layers.size(); ++k)
            EXPECT_EQ(y.layers[k], static_cast<double>(static_cast<float>(x.layers[k])));
    }
    EXPECT_EQ(encode_bank(r), encode_bank(b));
}

TEST(FeatureBank, EmptyBankIsHeaderPlusMetadata) {
    FeatureBank b = tiny_bank();
    b.records.clear();
    auto bytes = encode_bank(b);
    const std::string meta = bank_metadata(b).dump();
    EXPECT_EQ(bytes.size(), 4 + kBankFixedHeaderBytes + 4 + meta.size());
    EXPECT_EQ(std::memcmp(bytes.data(), "DGFB", 4), 0);
    FeatureBank r = decode_bank(bytes);
    EXPECT_TRUE(r.records.empty());
    EXPECT_EQ(r.class_names, b.class_names);
}

TEST(FeatureBank, HeaderLayoutIsLittleEndian) {
    FeatureBank b = tiny_bank(1);
    auto bytes = encode_bank(b);
    auto u16 = [&](std::size_t o) { return bytes[o] | bytes[o + 1] << 8; };
    auto u32 = [&](std::size_t o) { return std::uint32_t(u16(o)) | std::uint32_t(u16(o + 2)) << 16; };
    EXPECT_EQ(u16(4), 1);
    EXPECT_EQ(u32(6), 4u);
    EXPECT_EQ(u32(10), 2u);
    EXPECT_EQ(u32(14) | std::uint64_t(u32(18)) << 32, b.records.size());
}

TEST(FeatureBank, RecordPayloadArithmetic) {
    EXPECT_EQ(record_payload_bytes(768, 12), 4u + 4u + 1u + 768u * 12u * 4u);
}

TEST(FeatureBank, DistinctDecodeErrors) {
    auto bytes = encode_bank(tiny_bank());

    auto bad = bytes;
    bad[0] = 'X';
    EXPECT_DGCL_ERROR(decode_bank(bad), ErrorKind::bad_magic);

    bad = bytes;
    bad[4] = 2;
    EXPECT_DGCL_ERROR(decode_bank(bad), ErrorKind::version_mismatch);

    bad.assign(bytes.begin(), bytes.end() - 5);
    EXPECT_DGCL_ERROR(decode_bank(bad), ErrorKind::truncated);

    bad.assign(bytes.begin(), bytes.begin() + 10);
    EXPECT_DGCL_ERROR(decode_bank(bad), ErrorKind::truncated);

    bad = bytes;
    bad.push_back(0);
    EXPECT_DGCL_ERROR(decode_bank(bad), ErrorKind::invariant);
}

TEST(FeatureBank, InvariantViolations) {
    {
        FeatureBank b = tiny_bank();
        b.tasks[1].classes.push_back(0);
        EXPECT_DGCL_ERROR(validate(b), ErrorKind::invariant);
        EXPECT_DGCL_ERROR(encode_bank(b), ErrorKind::invariant);
    }
    {
        FeatureBank b = tiny_bank();
        b.records.front().domain_id = 1;  // train record of task 0 outside d_0
        EXPECT_DGCL_ERROR(validate(b), ErrorKind::invariant);
    }
    {
        FeatureBank b = tiny_bank();
        b.unseen_domains.clear();  // domain 2 neither trained on nor held out
        EXPECT_DGCL_ERROR(validate(b), ErrorKind::invariant);
    }
    {
        FeatureBank b = tiny_bank();
        b.records.back().layers[0] = std::nan("");
        EXPECT_DGCL_ERROR(validate(b), ErrorKind::invariant);
    }
    {
        FeatureBank b = tiny_bank();
        b.records.back().layers = Tensor(3, 4);
        EXPECT_DGCL_ERROR(validate(b), ErrorKind::invariant);
    }
}

TEST(FeatureBank, FileRoundTripAndIoError) {
    auto path = std::filesystem::temp_directory_path() / "dgcl_fb_test.dgfb";
    FeatureBank b = tiny_bank();
    write_bank(b, path);
    EXPECT_EQ(encode_bank(read_bank(path)), encode_bank(b));
    std::filesystem::remove(path);
    EXPECT_DGCL_ERROR(read_bank(path), ErrorKind::io);
}

TEST(FeatureBank, SelectMatchesLinearScan) {
    FeatureBank b = tiny_bank();
    EXPECT_EQ(select(b).size(), b.records.size());
    for (std::size_t t = 0; t < b.tasks.size(); ++t)
        for (const auto* r : select(b, {.task = t, .split = Split::train})) {
            EXPECT_EQ(r->domain_id, b.tasks[t].train_domain);
            EXPECT_EQ(b.task_of(r->class_id), t);
        }
    for (ClassId c = 0; c < 4; ++c) {
        std::size_t scan = 0;
        for (const auto& r : b.records) scan += r.class_id == c;
        EXPECT_EQ(select(b, {.class_id = c}).size(), scan);
    }
    EXPECT_EQ(b.seen_domains(), (std::vector<DomainId>{0, 1}));
    EXPECT_TRUE(b.is_unseen(2));
}
