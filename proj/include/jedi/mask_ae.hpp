#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "jedi/error.hpp"
#include "jedi/kernels.hpp"
#include "jedi/rng.hpp"

namespace jedi {

/// One-hidden-layer sparse autoencoder. Completes noisy or partial kernel
/// grids into full patch-shaped masks. Logistic sigmoid on both layers; the
/// KL sparsity penalty pushes mean hidden activations toward rho.
struct SparseAEModel {
    int input_grid = 64; // G; the model consumes G x G binary grids
    int hidden = 100;
    double rho = 0.15;
    double beta = 4.0;
    Eigen::MatrixXd w1; // hidden x G^2
    Eigen::VectorXd b1; // hidden
    Eigen::MatrixXd w2; // G^2 x hidden
    Eigen::VectorXd b2; // G^2

    int input_dim() const { return input_grid * input_grid; }

    bool finite() const {
        return w1.allFinite() && b1.allFinite() && w2.allFinite() && b2.allFinite();
    }
};

/// Paired corrupted-input / clean-target mask grids for training.
struct MaskTrainingSet {
    int grid = 64;
    std::vector<std::vector<std::uint8_t>> targets; // G*G cells each, values 0/1
    std::vector<std::vector<std::uint8_t>> inputs;  // same shape, corrupted
    std::uint64_t seed = 0;
};

namespace detail {

inline double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

inline double kl_bernoulli(double rho, double rho_hat) {
    return rho * std::log(rho / rho_hat) + (1.0 - rho) * std::log((1.0 - rho) / (1.0 - rho_hat));
}

constexpr double kRhoHatClamp = 1e-6;

// Nearest-neighbor index map from dst cells to src cells.
inline int nn_index(int dst_index, int src_dim, int dst_dim) {
    const int idx = ((2 * dst_index + 1) * src_dim) / (2 * dst_dim);
    return std::min(idx, src_dim - 1);
}

} // namespace detail

/// Synthesizes patch-placement masks: each target is a filled rectangle or
/// ellipse covering 1% to 25% of the grid, at a uniform random position.
/// The paired input drops each target cell with probability 0.3 and adds
/// Bernoulli(0.02) spurious cells elsewhere.
inline MaskTrainingSet generate_training_masks(int count, int grid, std::uint64_t seed) {
    if (count < 1) throw DataError("training mask count must be >= 1");
    if (grid < 4) throw DataError("grid too small for training masks");

    MaskTrainingSet set;
    set.grid = grid;
    set.seed = seed;
    Rng rng(derive_seed(seed, 0xae));

    const std::size_t cells = static_cast<std::size_t>(grid) * grid;
    const auto area_min = static_cast<std::size_t>(std::ceil(0.01 * static_cast<double>(cells)));
    const auto area_max = static_cast<std::size_t>(std::floor(0.25 * static_cast<double>(cells)));

    for (int n = 0; n < count; ++n) {
        std::vector<std::uint8_t> target(cells, 0);
        for (;;) {
            std::fill(target.begin(), target.end(), 0);
            const bool is_rect = rng.chance(0.5);
            const double fraction = rng.uniform(0.02, 0.23);
            const double aspect = rng.uniform(0.5, 2.0);
            double area = fraction * static_cast<double>(cells);
            if (!is_rect) area /= 0.785398163397448; // pre-divide ellipse fill ratio
            int w = std::max(1, static_cast<int>(std::lround(std::sqrt(area * aspect))));
            int h = std::max(1, static_cast<int>(std::lround(std::sqrt(area / aspect))));
            w = std::min(w, grid);
            h = std::min(h, grid);
            const int x0 = static_cast<int>(rng.below(static_cast<std::uint32_t>(grid - w + 1)));
            const int y0 = static_cast<int>(rng.below(static_cast<std::uint32_t>(grid - h + 1)));

            std::size_t pop = 0;
            if (is_rect) {
                for (int y = y0; y < y0 + h; ++y)
                    for (int x = x0; x < x0 + w; ++x) {
                        target[static_cast<std::size_t>(y) * grid + x] = 1;
                        ++pop;
                    }
            } else {
                const double cx = x0 + w / 2.0, cy = y0 + h / 2.0;
                const double rx = w / 2.0, ry = h / 2.0;
                for (int y = y0; y < y0 + h; ++y)
                    for (int x = x0; x < x0 + w; ++x) {
                        const double dx = (x + 0.5 - cx) / rx;
                        const double dy = (y + 0.5 - cy) / ry;
                        if (dx * dx + dy * dy <= 1.0) {
                            target[static_cast<std::size_t>(y) * grid + x] = 1;
                            ++pop;
                        }
                    }
            }
            if (pop >= area_min && pop <= area_max) break; // rasterization stayed in range
        }

        std::vector<std::uint8_t> corrupted(cells, 0);
        for (std::size_t i = 0; i < cells; ++i) {
            if (target[i])
                corrupted[i] = rng.chance(0.3) ? 0 : 1; // dropout
            else
                corrupted[i] = rng.chance(0.02) ? 1 : 0; // spurious kernel
        }
        set.targets.push_back(std::move(target));
        set.inputs.push_back(std::move(corrupted));
    }
    return set;
}

/// Glorot-uniform initialization, seeded; biases start at zero.
inline SparseAEModel init_sae(int grid, int hidden, std::uint64_t seed, double rho = 0.15,
                              double beta = 4.0) {
    SparseAEModel model;
    model.input_grid = grid;
    model.hidden = hidden;
    model.rho = rho;
    model.beta = beta;
    const int d = model.input_dim();

    Rng rng(derive_seed(seed, 0x1417));
    const double bound = std::sqrt(6.0 / static_cast<double>(d + hidden));
    model.w1.resize(hidden, d);
    for (int r = 0; r < hidden; ++r)
        for (int c = 0; c < d; ++c) model.w1(r, c) = rng.uniform(-bound, bound);
    model.w2.resize(d, hidden);
    for (int r = 0; r < d; ++r)
        for (int c = 0; c < hidden; ++c) model.w2(r, c) = rng.uniform(-bound, bound);
    model.b1 = Eigen::VectorXd::Zero(hidden);
    model.b2 = Eigen::VectorXd::Zero(d);
    return model;
}

/// Rows of X/T are samples (N x G^2), values in [0, 1].
inline void training_matrices(const MaskTrainingSet& data, Eigen::MatrixXd& x,
                              Eigen::MatrixXd& t) {
    if (data.inputs.empty() || data.inputs.size() != data.targets.size())
        throw DataError("empty or mismatched training set");
    const auto n = static_cast<Eigen::Index>(data.inputs.size());
    const auto d = static_cast<Eigen::Index>(data.grid) * data.grid;
    x.resize(n, d);
    t.resize(n, d);
    for (Eigen::Index i = 0; i < n; ++i) {
        if (data.inputs[static_cast<std::size_t>(i)].size() != static_cast<std::size_t>(d) ||
            data.targets[static_cast<std::size_t>(i)].size() != static_cast<std::size_t>(d))
            throw DataError("training grid size mismatch");
        for (Eigen::Index j = 0; j < d; ++j) {
            x(i, j) = data.inputs[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
            t(i, j) = data.targets[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
        }
    }
}

inline Eigen::MatrixXd sae_hidden(const SparseAEModel& model, const Eigen::MatrixXd& x) {
    Eigen::MatrixXd h = x * model.w1.transpose();
    h.rowwise() += model.b1.transpose();
    return h.unaryExpr([](double v) { return detail::sigmoid(v); });
}

inline Eigen::MatrixXd sae_decode(const SparseAEModel& model, const Eigen::MatrixXd& h) {
    Eigen::MatrixXd y = h * model.w2.transpose();
    y.rowwise() += model.b2.transpose();
    return y.unaryExpr([](double v) { return detail::sigmoid(v); });
}

inline Eigen::MatrixXd sae_forward(const SparseAEModel& model, const Eigen::MatrixXd& x) {
    return sae_decode(model, sae_hidden(model, x));
}

/// Mean (over samples) squared reconstruction error plus the KL sparsity
/// penalty summed over hidden units.
inline double sae_loss(const SparseAEModel& model, const Eigen::MatrixXd& x,
                       const Eigen::MatrixXd& t) {
    const Eigen::MatrixXd h = sae_hidden(model, x);
    const Eigen::MatrixXd y = sae_decode(model, h);
    const double n = static_cast<double>(x.rows());
    const double mse = (y - t).squaredNorm() / n;

    double kl = 0.0;
    if (model.beta != 0.0) {
        const Eigen::VectorXd rho_hat = h.colwise().mean();
        for (Eigen::Index j = 0; j < rho_hat.size(); ++j) {
            const double r = std::clamp(rho_hat(j), detail::kRhoHatClamp,
                                        1.0 - detail::kRhoHatClamp);
            kl += detail::kl_bernoulli(model.rho, r);
        }
    }
    return mse + model.beta * kl;
}

struct SaeGradients {
    Eigen::MatrixXd w1, w2;
    Eigen::VectorXd b1, b2;
};

inline SaeGradients sae_gradients(const SparseAEModel& model, const Eigen::MatrixXd& x,
                                  const Eigen::MatrixXd& t) {
    const double n = static_cast<double>(x.rows());
    const Eigen::MatrixXd h = sae_hidden(model, x);
    const Eigen::MatrixXd y = sae_decode(model, h);

    // dL/dz2 through the output sigmoid.
    const Eigen::MatrixXd dy =
        (2.0 / n) * (y - t).cwiseProduct(y).cwiseProduct((1.0 - y.array()).matrix());

    SaeGradients g;
    g.w2 = dy.transpose() * h;
    g.b2 = dy.colwise().sum().transpose();

    Eigen::MatrixXd dh = dy * model.w2;
    if (model.beta != 0.0) {
        const Eigen::VectorXd rho_hat = h.colwise().mean();
        Eigen::VectorXd kl_grad(rho_hat.size());
        for (Eigen::Index j = 0; j < rho_hat.size(); ++j) {
            const double r = std::clamp(rho_hat(j), detail::kRhoHatClamp,
                                        1.0 - detail::kRhoHatClamp);
            kl_grad(j) = model.beta * (-model.rho / r + (1.0 - model.rho) / (1.0 - r));
        }
        dh.rowwise() += (kl_grad / n).transpose();
    }

    const Eigen::MatrixXd dz1 = dh.cwiseProduct(h).cwiseProduct((1.0 - h.array()).matrix());
    g.w1 = dz1.transpose() * x;
    g.b1 = dz1.colwise().sum().transpose();
    return g;
}

struct TrainOptions {
    int epochs = 500;
    double learning_rate = 0.5;
};

struct TrainResult {
    SparseAEModel model;
    double initial_loss = 0.0;
    double final_loss = 0.0;
    int accepted_steps = 0;
    int rejected_steps = 0;
    std::vector<double> loss_history; // accepted losses, non-increasing
};

/// Safeguarded full-batch gradient descent: a step that raises the loss is
/// rolled back and the learning rate halved, so accepted losses are
/// monotone non-increasing and the final loss never exceeds the initial
/// one. Throws TrainingError (with the epoch) if the loss turns non-finite.
inline TrainResult train_sae_from(SparseAEModel model, const Eigen::MatrixXd& x,
                                  const Eigen::MatrixXd& t, const TrainOptions& options) {
    TrainResult result;
    double lr = options.learning_rate;
    if (!(lr > 0.0)) throw DataError("learning rate must be positive");

    double loss = sae_loss(model, x, t);
    if (!std::isfinite(loss)) throw TrainingError("non-finite loss at epoch 0");
    result.initial_loss = loss;
    result.loss_history.push_back(loss);

    for (int epoch = 1; epoch <= options.epochs; ++epoch) {
        const SaeGradients g = sae_gradients(model, x, t);
        model.w1 -= lr * g.w1;
        model.b1 -= lr * g.b1;
        model.w2 -= lr * g.w2;
        model.b2 -= lr * g.b2;

        const double next = sae_loss(model, x, t);
        if (!std::isfinite(next))
            throw TrainingError("training diverged (non-finite loss) at epoch " +
                                std::to_string(epoch));
        if (next > loss) {
            model.w1 += lr * g.w1;
            model.b1 += lr * g.b1;
            model.w2 += lr * g.w2;
            model.b2 += lr * g.b2;
            lr *= 0.5;
            ++result.rejected_steps;
            if (lr < 1e-12) break;
        } else {
            loss = next;
            ++result.accepted_steps;
            result.loss_history.push_back(loss);
        }
    }
    result.final_loss = loss;
    result.model = std::move(model);
    return result;
}

inline TrainResult train_sae(const MaskTrainingSet& data, int epochs, double learning_rate,
                             std::uint64_t seed, int hidden = 100, double rho = 0.15,
                             double beta = 4.0) {
    Eigen::MatrixXd x, t;
    training_matrices(data, x, t);
    TrainOptions options;
    options.epochs = epochs;
    options.learning_rate = learning_rate;
    return train_sae_from(init_sae(data.grid, hidden, seed, rho, beta), x, t, options);
}

/// Runs one grid through the model and binarizes at 0.5.
inline std::vector<std::uint8_t> refine_grid(const SparseAEModel& model,
                                             const std::vector<std::uint8_t>& grid_cells) {
    if (!model.finite()) throw DataError("model contains non-finite weights");
    if (grid_cells.size() != static_cast<std::size_t>(model.input_dim()))
        throw GeometryError("grid size does not match model input");
    Eigen::MatrixXd x(1, model.input_dim());
    for (int i = 0; i < model.input_dim(); ++i) x(0, i) = grid_cells[static_cast<std::size_t>(i)];
    const Eigen::MatrixXd y = sae_forward(model, x);
    std::vector<std::uint8_t> out(grid_cells.size());
    for (int i = 0; i < model.input_dim(); ++i) out[static_cast<std::size_t>(i)] = y(0, i) > 0.5;
    return out;
}

/// Completes a kernel map into a patch mask: the kernel grid is resampled
/// (nearest neighbor) to the model's G x G input, passed through the
/// autoencoder, binarized at 0.5, resampled back, and projected to image
/// resolution through the kernel-map geometry.
inline BinaryMask refine_mask(const SparseAEModel& model, const KernelMap& kernels) {
    if (!model.finite()) throw DataError("model contains non-finite weights");
    const int g = model.input_grid;

    std::vector<std::uint8_t> resampled(static_cast<std::size_t>(g) * g, 0);
    for (int r = 0; r < g; ++r) {
        const int src_r = detail::nn_index(r, kernels.rows, g);
        for (int c = 0; c < g; ++c)
            resampled[static_cast<std::size_t>(r) * g + c] =
                kernels.test(src_r, detail::nn_index(c, kernels.cols, g)) ? 1 : 0;
    }

    const std::vector<std::uint8_t> refined = refine_grid(model, resampled);

    KernelMap out = kernels;
    for (int r = 0; r < out.rows; ++r) {
        const int src_r = detail::nn_index(r, g, out.rows);
        for (int c = 0; c < out.cols; ++c)
            out.set(r, c, refined[static_cast<std::size_t>(src_r) * g +
                                  detail::nn_index(c, g, out.cols)] != 0);
    }
    return kernels_to_mask(out);
}

// ---- serialization ----

inline nlohmann::json model_to_json(const SparseAEModel& model) {
    auto dump = [](const auto& m) {
        std::vector<double> flat;
        flat.reserve(static_cast<std::size_t>(m.size()));
        for (Eigen::Index r = 0; r < m.rows(); ++r)
            for (Eigen::Index c = 0; c < m.cols(); ++c) flat.push_back(m(r, c));
        return flat;
    };
    return nlohmann::json{{"format", "jedi-sae/1"},
                          {"input_grid", model.input_grid},
                          {"hidden", model.hidden},
                          {"rho", model.rho},
                          {"beta", model.beta},
                          {"w1", dump(model.w1)},
                          {"b1", dump(model.b1)},
                          {"w2", dump(model.w2)},
                          {"b2", dump(model.b2)}};
}

inline SparseAEModel model_from_json(const nlohmann::json& j) {
    try {
        if (j.at("format").get<std::string>() != "jedi-sae/1")
            throw FormatError("unknown model format tag");
        SparseAEModel model;
        model.input_grid = j.at("input_grid").get<int>();
        model.hidden = j.at("hidden").get<int>();
        model.rho = j.at("rho").get<double>();
        model.beta = j.at("beta").get<double>();
        const int d = model.input_dim();

        auto load = [](const nlohmann::json& arr, Eigen::Index rows, Eigen::Index cols,
                       Eigen::MatrixXd& m) {
            const auto flat = arr.get<std::vector<double>>();
            if (flat.size() != static_cast<std::size_t>(rows * cols))
                throw FormatError("weight array size mismatch");
            m.resize(rows, cols);
            std::size_t i = 0;
            for (Eigen::Index r = 0; r < rows; ++r)
                for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = flat[i++];
        };
        Eigen::MatrixXd b1, b2;
        load(j.at("w1"), model.hidden, d, model.w1);
        load(j.at("b1"), model.hidden, 1, b1);
        load(j.at("w2"), d, model.hidden, model.w2);
        load(j.at("b2"), d, 1, b2);
        model.b1 = b1.col(0);
        model.b2 = b2.col(0);
        return model;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("bad model JSON: ") + e.what());
    }
}

} // namespace jedi
