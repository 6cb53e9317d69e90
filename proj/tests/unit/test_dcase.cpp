#include <gtest/gtest.h>

#include "asdcap/dcase.hpp"

using namespace asdcap;

TEST(DcaseFilename, ParsesNormalAndAnomaly)
{
    const auto n = parse_dcase_filename("normal_id_02_00000001.wav");
    ASSERT_TRUE(n);
    EXPECT_EQ(n->label, Label::Normal);
    EXPECT_EQ(n->machine_id, "id_02");
    EXPECT_EQ(n->index, "00000001");

    const auto a = parse_dcase_filename("anomaly_id_06_00000123.wav");
    ASSERT_TRUE(a);
    EXPECT_EQ(a->label, Label::Anomalous);
    EXPECT_EQ(a->machine_id, "id_06");
    EXPECT_TRUE(parse_dcase_filename("normal_id_00_00000000.WAV"));
}

TEST(DcaseFilename, RejectsOtherNames)
{
    for (const char* bad : {"normal_id_02.wav", "abnormal_id_02_00000001.wav", "normal_02_00000001.wav",
                            "normal_id_02_00000001.flac", "section_00_source_test_normal_0000.wav", ""}) {
        EXPECT_FALSE(parse_dcase_filename(bad)) << bad;
    }
}

TEST(DcaseRecord, DerivesMetadataFromTheLayout)
{
    const auto r = dcase_record_for("valve/test/anomaly_id_04_00000010.wav");
    ASSERT_TRUE(r);
    EXPECT_EQ(r->sample_id, "valve/test/anomaly_id_04_00000010");
    EXPECT_EQ(r->machine_type, "valve");
    EXPECT_EQ(r->machine_id, "id_04");
    EXPECT_EQ(r->label, Label::Anomalous);
    EXPECT_EQ(r->split, Split::Test);
    EXPECT_EQ(r->source_path, "valve/test/anomaly_id_04_00000010.wav");

    const auto t = dcase_record_for("fan/train/normal_id_00_00000000.wav");
    ASSERT_TRUE(t);
    EXPECT_EQ(t->split, Split::Train);
    EXPECT_EQ(t->label, Label::Normal);
}

TEST(DcaseRecord, RejectsOtherLayouts)
{
    EXPECT_FALSE(dcase_record_for("fan/normal_id_00_00000000.wav"));
    EXPECT_FALSE(dcase_record_for("fan/eval/normal_id_00_00000000.wav"));
    EXPECT_FALSE(dcase_record_for("root/fan/train/normal_id_00_00000000.wav"));
    EXPECT_FALSE(dcase_record_for("fan/train/readme.wav"));
}
