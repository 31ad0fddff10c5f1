#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "jedi/mask_ae.hpp"
#include "model_fixture.hpp"
#include "support.hpp"

using namespace jedi;

namespace {

// Central finite differences over every parameter of a model.
double fd_loss(SparseAEModel model, double* param, double eps, const Eigen::MatrixXd& x,
               const Eigen::MatrixXd& t, double direction) {
    *param += direction * eps;
    return sae_loss(model, x, t);
}

double relative_error(double a, double b) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-3});
}

double grid_iou(const std::vector<std::uint8_t>& a, const std::vector<std::uint8_t>& b) {
    long inter = 0, uni = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        inter += a[i] && b[i];
        uni += a[i] || b[i];
    }
    return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

} // namespace

TEST_CASE("training mask generation is deterministic and well formed") {
    const MaskTrainingSet a = generate_training_masks(50, 32, 9);
    const MaskTrainingSet b = generate_training_masks(50, 32, 9);
    CHECK(a.targets == b.targets);
    CHECK(a.inputs == b.inputs);
    CHECK(generate_training_masks(50, 32, 10).targets != a.targets);

    const std::size_t cells = 32 * 32;
    for (const auto& target : a.targets) {
        std::size_t pop = 0;
        for (auto v : target) pop += v;
        REQUIRE(pop >= static_cast<std::size_t>(std::ceil(0.01 * cells)));
        REQUIRE(pop <= static_cast<std::size_t>(0.25 * cells));
    }
    CHECK_THROWS_AS(generate_training_masks(0, 32, 1), DataError);
}

TEST_CASE("corruption drops about 30% of target cells") {
    const MaskTrainingSet set = generate_training_masks(1000, 32, 77);
    long long target_cells = 0, dropped = 0;
    for (std::size_t n = 0; n < set.targets.size(); ++n)
        for (std::size_t i = 0; i < set.targets[n].size(); ++i) {
            if (!set.targets[n][i]) continue;
            ++target_cells;
            if (!set.inputs[n][i]) ++dropped;
        }
    const double rate = static_cast<double>(dropped) / static_cast<double>(target_cells);
    CHECK(rate > 0.25);
    CHECK(rate < 0.35);
}

TEST_CASE("zero training epochs return the initialization") {
    const MaskTrainingSet data = generate_training_masks(20, 8, 3);
    const TrainResult result = train_sae(data, 0, 0.5, 42, 10);
    const SparseAEModel init = init_sae(8, 10, 42);
    CHECK(result.model.w1 == init.w1);
    CHECK(result.model.w2 == init.w2);
    CHECK(result.model.b1 == init.b1);
    CHECK(result.model.b2 == init.b2);
    CHECK(result.final_loss == result.initial_loss);
}

TEST_CASE("analytic gradients match central finite differences") {
    // Toy 5x5-grid model so the full parameter sweep stays cheap.
    const MaskTrainingSet data = generate_training_masks(12, 5, 21);
    Eigen::MatrixXd x, t;
    training_matrices(data, x, t);
    SparseAEModel model = init_sae(5, 7, 33);

    const double eps = 1e-5;
    const SaeGradients g = sae_gradients(model, x, t);

    double max_rel = 0.0;
    auto sweep = [&](Eigen::MatrixXd& params, const Eigen::MatrixXd& grads) {
        for (Eigen::Index r = 0; r < params.rows(); ++r)
            for (Eigen::Index c = 0; c < params.cols(); ++c) {
                const double saved = params(r, c);
                params(r, c) = saved + eps;
                const double up = sae_loss(model, x, t);
                params(r, c) = saved - eps;
                const double down = sae_loss(model, x, t);
                params(r, c) = saved;
                const double numeric = (up - down) / (2.0 * eps);
                max_rel = std::max(max_rel, relative_error(grads(r, c), numeric));
            }
    };
    auto sweep_vec = [&](Eigen::VectorXd& params, const Eigen::VectorXd& grads) {
        for (Eigen::Index i = 0; i < params.size(); ++i) {
            const double saved = params(i);
            params(i) = saved + eps;
            const double up = sae_loss(model, x, t);
            params(i) = saved - eps;
            const double down = sae_loss(model, x, t);
            params(i) = saved;
            const double numeric = (up - down) / (2.0 * eps);
            max_rel = std::max(max_rel, relative_error(grads(i), numeric));
        }
    };

    sweep(model.w1, g.w1);
    sweep(model.w2, g.w2);
    sweep_vec(model.b1, g.b1);
    sweep_vec(model.b2, g.b2);
    CAPTURE(max_rel);
    CHECK(max_rel < 1e-4);
}

TEST_CASE("KL penalty is nonnegative and vanishes exactly at rho") {
    CHECK(detail::kl_bernoulli(0.15, 0.15) == 0.0);
    for (double r : {0.01, 0.1, 0.2, 0.5, 0.9})
        CHECK(detail::kl_bernoulli(0.15, r) >= 0.0);
}

TEST_CASE("beta = 0 reduces the loss to the plain reconstruction error") {
    const MaskTrainingSet data = generate_training_masks(15, 6, 5);
    Eigen::MatrixXd x, t;
    training_matrices(data, x, t);
    SparseAEModel model = init_sae(6, 9, 11, 0.15, 0.0);

    const Eigen::MatrixXd y = sae_forward(model, x);
    const double mse = (y - t).squaredNorm() / static_cast<double>(x.rows());
    CHECK(sae_loss(model, x, t) == mse);
}

TEST_CASE("accepted training losses are monotone non-increasing") {
    const MaskTrainingSet data = generate_training_masks(60, 16, 13);
    const TrainResult result = train_sae(data, 80, 0.5, 17, 40);
    REQUIRE(result.loss_history.size() >= 2);
    for (std::size_t i = 1; i < result.loss_history.size(); ++i)
        REQUIRE(result.loss_history[i] <= result.loss_history[i - 1]);
    CHECK(result.final_loss <= result.initial_loss);
    CHECK(result.final_loss < result.initial_loss); // it must actually learn something
}

TEST_CASE("training reports divergence with the epoch") {
    const MaskTrainingSet data = generate_training_masks(10, 6, 1);
    Eigen::MatrixXd x, t;
    training_matrices(data, x, t);
    SparseAEModel poisoned = init_sae(6, 5, 2);
    poisoned.w1(0, 0) = std::numeric_limits<double>::quiet_NaN();
    TrainOptions options;
    options.epochs = 3;
    CHECK_THROWS_AS(train_sae_from(poisoned, x, t, options), TrainingError);
    CHECK_THROWS_WITH(train_sae_from(poisoned, x, t, options),
                      Catch::Matchers::ContainsSubstring("epoch 0"));
}

TEST_CASE("refine_grid rejects a poisoned model and is deterministic") {
    const SparseAEModel& model = fixture::shared_model();
    const MaskTrainingSet held = generate_training_masks(1, 64, 4242);
    const auto once = refine_grid(model, held.inputs[0]);
    const auto twice = refine_grid(model, held.inputs[0]);
    CHECK(once == twice);

    SparseAEModel poisoned = model;
    poisoned.w2(3, 3) = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(refine_grid(poisoned, held.inputs[0]), DataError);
}

TEST_CASE("a trained model does not hallucinate a patch from empty input") {
    const SparseAEModel& model = fixture::shared_model();
    const std::vector<std::uint8_t> zeros(64 * 64, 0);
    const auto out = refine_grid(model, zeros);
    std::size_t pop = 0;
    for (auto v : out) pop += v;
    CHECK(pop < 41u); // under 1% of the 4096-cell grid
}

TEST_CASE("refinement beats the corrupted input on held-out masks") {
    const SparseAEModel& model = fixture::shared_model();
    const MaskTrainingSet held = generate_training_masks(200, 64, 987654);

    int improved = 0;
    double iou_corrupted_total = 0.0, iou_refined_total = 0.0;
    for (std::size_t n = 0; n < held.targets.size(); ++n) {
        const auto refined = refine_grid(model, held.inputs[n]);
        const double iou_corrupted = grid_iou(held.inputs[n], held.targets[n]);
        const double iou_refined = grid_iou(refined, held.targets[n]);
        iou_corrupted_total += iou_corrupted;
        iou_refined_total += iou_refined;
        if (iou_refined > iou_corrupted) ++improved;
    }
    CAPTURE(improved, iou_corrupted_total / 200.0, iou_refined_total / 200.0);
    CHECK(improved >= 160); // at least 80% of the held-out samples
}

TEST_CASE("refine_mask projects through the kernel geometry") {
    const SparseAEModel& model = fixture::shared_model();

    KernelMap kernels;
    kernels.rows = 55;
    kernels.cols = 55;
    kernels.geometry = WindowGeometry(8, 4);
    kernels.source_width = 224;
    kernels.source_height = 224;
    kernels.cells.assign(55 * 55, 0);
    // A 13x13 cell block, the signature of a ~50px patch at this geometry.
    for (int r = 20; r < 33; ++r)
        for (int c = 10; c < 23; ++c) kernels.set(r, c, true);

    const BinaryMask mask = refine_mask(model, kernels);
    CHECK(mask.width == 224);
    CHECK(mask.height == 224);
    CHECK(mask.popcount() > 0u);

    // The refined mask should stay in the same neighborhood as the block.
    std::size_t outside = 0;
    for (int y = 0; y < 224; ++y)
        for (int x = 0; x < 224; ++x)
            if (mask.test(x, y) && (x < 20 || x > 120 || y < 60 || y > 160)) ++outside;
    CHECK(outside < mask.popcount() / 4);
}

TEST_CASE("model JSON round trip preserves every weight") {
    const MaskTrainingSet data = generate_training_masks(10, 6, 3);
    const TrainResult result = train_sae(data, 5, 0.5, 7, 9);
    const nlohmann::json j = model_to_json(result.model);
    CHECK(j.at("format") == "jedi-sae/1");
    const SparseAEModel back = model_from_json(j);
    CHECK(back.w1 == result.model.w1);
    CHECK(back.b1 == result.model.b1);
    CHECK(back.w2 == result.model.w2);
    CHECK(back.b2 == result.model.b2);
    CHECK(back.rho == result.model.rho);
    CHECK(back.beta == result.model.beta);

    CHECK_THROWS_AS(model_from_json(nlohmann::json{{"format", "other"}}), FormatError);
}
