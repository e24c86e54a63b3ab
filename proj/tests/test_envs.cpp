#include "dce/envs.hpp"

#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "dce/io.hpp"

namespace {

using dce::BehaviorPolicy;
using dce::BehaviorTier;
using dce::OfflineDataset;
using dce::PointMass2D;
using dce::PointReach1D;
using dce::real;
using dce::Rng;
using dce::RVec;

std::filesystem::path temp_file(const std::string& name) {
    return std::filesystem::temp_directory_path() / name;
}

TEST(PointReach1DTest, DynamicsAndReward) {
    PointReach1D env;
    dce::StepResult r = env.step({real(0.5)}, {real(0.1)});
    EXPECT_DOUBLE_EQ(static_cast<double>(r.next_state[0]), 0.6);
    EXPECT_DOUBLE_EQ(r.reward, -0.6);
    r = env.step({real(0.95)}, {real(0.2)});
    EXPECT_DOUBLE_EQ(static_cast<double>(r.next_state[0]), 1.0);
    r = env.step({real(0.0)}, {real(0.9)});
    EXPECT_DOUBLE_EQ(static_cast<double>(r.next_state[0]), 0.2);
}

TEST(PointReach1DTest, ExpertActionClamped) {
    PointReach1D env;
    EXPECT_DOUBLE_EQ(static_cast<double>(env.expert_action({real(0.5)})[0]), -0.2);
    EXPECT_DOUBLE_EQ(static_cast<double>(env.expert_action({real(0.1)})[0]), -0.1);
    EXPECT_DOUBLE_EQ(static_cast<double>(env.expert_action({real(-0.7)})[0]), 0.2);
}

TEST(PointReach1DTest, ExpertReturnFromAnyStart) {
    PointReach1D env;
    BehaviorPolicy expert{BehaviorPolicy::Kind::expert, 0.0};
    Rng rng(7);
    auto act = [&](const RVec& s, Rng& r) { return dce::behavior_action(expert, env, s, r); };
    double worst = 0.0;
    for (int e = 0; e < 1000; ++e) {
        double ret = dce::episode_return(env, act, rng);
        worst = std::min(worst, ret);
        EXPECT_LE(ret, 0.0);
    }
    EXPECT_GE(worst, -3.0);
}

TEST(PointMass2DTest, DynamicsMatchHandComputation) {
    PointMass2D env;
    RVec s{real(0.0), real(0.0), real(0.1), real(-0.2)};
    dce::StepResult r = env.step(s, {real(1.0), real(0.5)});
    // v' = 0.95*v + 0.05*a, p' = p + 0.05*v'
    EXPECT_NEAR(static_cast<double>(r.next_state[2]), 0.145, 1e-12);
    EXPECT_NEAR(static_cast<double>(r.next_state[3]), -0.165, 1e-12);
    EXPECT_NEAR(static_cast<double>(r.next_state[0]), 0.00725, 1e-12);
    EXPECT_NEAR(static_cast<double>(r.next_state[1]), -0.00825, 1e-12);
    EXPECT_NEAR(r.reward, -std::hypot(0.00725 - 0.5, -0.00825 - 0.5), 1e-12);
}

TEST(PointMass2DTest, RewardWithinDocumentedRange) {
    PointMass2D env;
    Rng rng(3);
    BehaviorPolicy random{BehaviorPolicy::Kind::random, 0.0};
    for (int e = 0; e < 20; ++e) {
        RVec s = env.reset(rng);
        for (std::size_t t = 0; t < env.horizon(); ++t) {
            dce::StepResult r = env.step(s, dce::behavior_action(random, env, s, rng));
            EXPECT_LE(r.reward, 0.0);
            EXPECT_GE(r.reward, -env.r_max());
            s = r.next_state;
        }
    }
}

TEST(PointMass2DTest, ExpertApproachesGoal) {
    PointMass2D env;
    RVec s{real(-1.0), real(-1.0), real(0.0), real(0.0)};
    double final_dist = 0.0;
    for (std::size_t t = 0; t < env.horizon(); ++t) {
        dce::StepResult r = env.step(s, env.expert_action(s));
        s = r.next_state;
        final_dist = -r.reward;
    }
    EXPECT_LT(final_dist, 0.1);
}

TEST(BehaviorPolicyTest, MediumWithZeroSigmaEqualsExpert) {
    PointReach1D env;
    Rng rng_a(5), rng_b(5);
    BehaviorPolicy medium{BehaviorPolicy::Kind::medium, 0.0};
    BehaviorPolicy expert{BehaviorPolicy::Kind::expert, 0.0};
    for (int i = 0; i < 50; ++i) {
        RVec s = env.reset(rng_a);
        env.reset(rng_b);
        RVec am = dce::behavior_action(medium, env, s, rng_a);
        RVec ae = dce::behavior_action(expert, env, s, rng_b);
        EXPECT_DOUBLE_EQ(static_cast<double>(am[0]), static_cast<double>(ae[0]));
    }
}

TEST(BehaviorPolicyTest, ActionsRespectBounds) {
    PointMass2D env;
    Rng rng(9);
    for (auto kind : {BehaviorPolicy::Kind::random, BehaviorPolicy::Kind::medium,
                      BehaviorPolicy::Kind::expert}) {
        BehaviorPolicy pi{kind, 0.5};
        for (int i = 0; i < 200; ++i) {
            RVec s = env.reset(rng);
            RVec a = dce::behavior_action(pi, env, s, rng);
            for (std::size_t d = 0; d < a.size(); ++d) {
                EXPECT_GE(static_cast<double>(a[d]), -1.0);
                EXPECT_LE(static_cast<double>(a[d]), 1.0);
            }
        }
    }
}

TEST(GenerateDatasetTest, ExactCountAndDims) {
    PointReach1D env;
    OfflineDataset d = dce::generate_dataset(env, BehaviorTier::medium, 1000, 1);
    EXPECT_EQ(d.size(), 1000u);
    EXPECT_EQ(d.state_dim, 1u);
    EXPECT_EQ(d.action_dim, 1u);
    EXPECT_EQ(d.behavior_tag, BehaviorTier::medium);
}

TEST(GenerateDatasetTest, DoneMarksHorizonEnds) {
    PointReach1D env;
    OfflineDataset d = dce::generate_dataset(env, BehaviorTier::random, 150, 2);
    for (std::size_t i = 0; i < d.size(); ++i) {
        bool at_horizon = (i % env.horizon()) == env.horizon() - 1;
        EXPECT_EQ(d.items[i].done, at_horizon) << "index " << i;
    }
}

TEST(GenerateDatasetTest, EpisodesChainUntilHorizon) {
    PointReach1D env;
    OfflineDataset d = dce::generate_dataset(env, BehaviorTier::expert, 120, 3);
    for (std::size_t i = 0; i + 1 < d.size(); ++i) {
        if (d.items[i].done) continue;
        EXPECT_EQ(d.items[i].next_state, d.items[i + 1].state);
    }
}

TEST(GenerateDatasetTest, DeterministicGivenSeed) {
    PointMass2D env;
    OfflineDataset a = dce::generate_dataset(env, BehaviorTier::mixed, 500, 11);
    OfflineDataset b = dce::generate_dataset(env, BehaviorTier::mixed, 500, 11);
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_EQ(a.items[i].state, b.items[i].state);
        EXPECT_EQ(a.items[i].action, b.items[i].action);
        EXPECT_EQ(a.items[i].reward, b.items[i].reward);
    }
}

TEST(GenerateDatasetTest, TierQualityOrdering) {
    PointReach1D env;
    auto mean_reward = [&](BehaviorTier tier) {
        OfflineDataset d = dce::generate_dataset(env, tier, 5000, 21);
        return dce::dataset_stats(d).reward_mean;
    };
    double random_r = mean_reward(BehaviorTier::random);
    double medium_r = mean_reward(BehaviorTier::medium);
    double expert_r = mean_reward(BehaviorTier::expert);
    EXPECT_GT(expert_r, medium_r);
    EXPECT_GT(medium_r, random_r);
}

TEST(GenerateDatasetTest, RejectsBadArguments) {
    PointReach1D env;
    EXPECT_THROW(dce::generate_dataset(env, BehaviorTier::medium, 0, 1), dce::ConfigError);
    EXPECT_THROW(dce::generate_dataset(env, BehaviorTier::custom, 10, 1), dce::ConfigError);
}

TEST(TierNamesTest, RoundTripAndErrors) {
    for (auto t : {BehaviorTier::random, BehaviorTier::medium, BehaviorTier::expert,
                   BehaviorTier::mixed, BehaviorTier::custom})
        EXPECT_EQ(dce::tier_from_name(dce::tier_name(t)), t);
    EXPECT_THROW(dce::tier_from_name("novice"), dce::ConfigError);
}

TEST(MakeEnvTest, KnownNamesAndErrors) {
    EXPECT_EQ(dce::make_env("point1d")->state_dim(), 1u);
    EXPECT_EQ(dce::make_env("point2d")->state_dim(), 4u);
    EXPECT_THROW(dce::make_env("cartpole"), dce::ConfigError);
}

TEST(ReferenceReturnsTest, ExpertBeatsRandomOnBothEnvs) {
    for (const char* name : {"point1d", "point2d"}) {
        auto env = dce::make_env(name);
        dce::ReferenceReturns refs = dce::reference_returns(*env, 200, 99);
        EXPECT_GT(refs.expert_ref, refs.random_ref) << name;
    }
}

TEST(ReferenceReturnsTest, CacheReproducesFirstComputation) {
    PointReach1D env;
    auto dir = std::filesystem::temp_directory_path() / "dce_ref_cache_test";
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    dce::ReferenceReturns first = dce::reference_returns(env, 50, 5, dir.string());
    dce::ReferenceReturns cached = dce::reference_returns(env, 50, 5, dir.string());
    EXPECT_EQ(first.random_ref, cached.random_ref);
    EXPECT_EQ(first.expert_ref, cached.expert_ref);
    std::filesystem::remove_all(dir);
}

TEST(DatasetIoTest, RoundTripIsByteExact) {
    PointMass2D env;
    OfflineDataset d = dce::generate_dataset(env, BehaviorTier::mixed, 300, 17);
    auto path_a = temp_file("dce_ds_a.bin");
    auto path_b = temp_file("dce_ds_b.bin");
    dce::save_dataset(d, path_a.string());
    OfflineDataset loaded = dce::load_dataset(path_a.string());
    EXPECT_EQ(loaded.state_dim, d.state_dim);
    EXPECT_EQ(loaded.action_dim, d.action_dim);
    EXPECT_EQ(loaded.behavior_tag, d.behavior_tag);
    ASSERT_EQ(loaded.size(), d.size());
    dce::save_dataset(loaded, path_b.string());
    std::ifstream fa(path_a, std::ios::binary), fb(path_b, std::ios::binary);
    std::string bytes_a((std::istreambuf_iterator<char>(fa)), std::istreambuf_iterator<char>());
    std::string bytes_b((std::istreambuf_iterator<char>(fb)), std::istreambuf_iterator<char>());
    EXPECT_EQ(bytes_a, bytes_b);
    std::filesystem::remove(path_a);
    std::filesystem::remove(path_b);
}

TEST(DatasetIoTest, FieldValuesSurviveRoundTrip) {
    OfflineDataset d;
    d.state_dim = 2;
    d.action_dim = 1;
    d.behavior_tag = BehaviorTier::expert;
    dce::Transition t;
    t.state = {0.25, -0.5};
    t.action = {0.125};
    t.reward = -0.75;
    t.next_state = {0.5, 1.0};
    t.done = true;
    d.items.push_back(t);
    auto path = temp_file("dce_ds_fields.bin");
    dce::save_dataset(d, path.string());
    OfflineDataset loaded = dce::load_dataset(path.string());
    EXPECT_EQ(loaded.items[0].state, t.state);
    EXPECT_EQ(loaded.items[0].action, t.action);
    EXPECT_EQ(loaded.items[0].reward, t.reward);
    EXPECT_EQ(loaded.items[0].next_state, t.next_state);
    EXPECT_TRUE(loaded.items[0].done);
    std::filesystem::remove(path);
}

TEST(DatasetIoTest, DistinctErrorsForDistinctCorruptions) {
    PointReach1D env;
    OfflineDataset d = dce::generate_dataset(env, BehaviorTier::random, 10, 1);
    auto path = temp_file("dce_ds_corrupt.bin");
    dce::save_dataset(d, path.string());

    auto corrupt = [&](std::size_t offset, char value) {
        std::fstream f(path, std::ios::binary | std::ios::in | std::ios::out);
        f.seekp(static_cast<std::streamoff>(offset));
        f.put(value);
    };
    auto message_of = [&]() -> std::string {
        try {
            dce::load_dataset(path.string());
        } catch (const dce::IoError& e) {
            return e.what();
        }
        return "";
    };

    corrupt(0, 'X');
    EXPECT_NE(message_of().find("bad magic"), std::string::npos);
    dce::save_dataset(d, path.string());
    corrupt(4, 9);
    EXPECT_NE(message_of().find("version"), std::string::npos);

    dce::save_dataset(d, path.string());
    std::filesystem::resize_file(path, std::filesystem::file_size(path) - 3);
    EXPECT_NE(message_of().find("truncated"), std::string::npos);

    EXPECT_THROW(dce::load_dataset("/nonexistent/nowhere.bin"), dce::IoError);
    std::filesystem::remove(path);
}

TEST(DatasetIoTest, EmptyDatasetLoads) {
    OfflineDataset d;
    d.state_dim = 1;
    d.action_dim = 1;
    auto path = temp_file("dce_ds_empty.bin");
    dce::save_dataset(d, path.string());
    OfflineDataset loaded = dce::load_dataset(path.string());
    EXPECT_EQ(loaded.size(), 0u);
    std::filesystem::remove(path);
}

TEST(TensorIoTest, RoundTripExact) {
    std::vector<dce::Tensor> tensors;
    tensors.push_back({{2, 3}, {1.0, -2.5, 3.25, 0.0, 1e-300, -1e300}});
    tensors.push_back({{1}, {0.3333333333333333}});
    tensors.push_back({{4}, {1, 2, 3, 4}});
    auto path = temp_file("dce_ckpt_roundtrip.bin");
    dce::save_tensors(tensors, path.string());
    std::vector<dce::Tensor> loaded = dce::load_tensors(path.string());
    ASSERT_EQ(loaded.size(), tensors.size());
    for (std::size_t i = 0; i < tensors.size(); ++i) {
        EXPECT_EQ(loaded[i].dims, tensors[i].dims);
        EXPECT_EQ(loaded[i].values, tensors[i].values);
    }
    std::filesystem::remove(path);
}

TEST(TensorIoTest, ErrorsAreDistinct) {
    auto path = temp_file("dce_ckpt_corrupt.bin");
    dce::save_tensors({{{2}, {1.0, 2.0}}}, path.string());

    {
        std::fstream f(path, std::ios::binary | std::ios::in | std::ios::out);
        f.put('Z');
    }
    EXPECT_THROW(
        {
            try {
                dce::load_tensors(path.string());
            } catch (const dce::IoError& e) {
                EXPECT_NE(std::string(e.what()).find("bad magic"), std::string::npos);
                throw;
            }
        },
        dce::IoError);

    dce::save_tensors({{{2}, {1.0, 2.0}}}, path.string());
    std::filesystem::resize_file(path, std::filesystem::file_size(path) - 4);
    EXPECT_THROW(
        {
            try {
                dce::load_tensors(path.string());
            } catch (const dce::IoError& e) {
                EXPECT_NE(std::string(e.what()).find("truncated"), std::string::npos);
                throw;
            }
        },
        dce::IoError);
    std::filesystem::remove(path);
}

TEST(TensorIoTest, RejectsInconsistentTensor) {
    dce::Tensor bad{{2, 2}, {1.0}};
    auto path = temp_file("dce_ckpt_bad.bin");
    EXPECT_THROW(dce::save_tensors({bad}, path.string()), dce::IoError);
}

}  // namespace
