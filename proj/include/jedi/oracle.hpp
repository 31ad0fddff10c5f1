#pragma once

#include <csignal>
#include <cstdio>
#include <cstring>
#include <string>
#include <vector>

#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <json.hpp>

#include "jedi/entropy.hpp"
#include "jedi/error.hpp"
#include "jedi/image.hpp"
#include "jedi/image_io.hpp"
#include "jedi/kernels.hpp"

namespace jedi {

/// Any label-producing backend standing in for the victim model.
class ModelOracle {
public:
    virtual ~ModelOracle() = default;
    virtual std::string label(const Image& image) = 0;
    virtual std::string name() const = 0;
};

inline std::string base64_encode(const std::vector<std::uint8_t>& bytes) {
    static const char* alphabet =
        "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
    std::string out;
    out.reserve((bytes.size() + 2) / 3 * 4);
    std::size_t i = 0;
    for (; i + 3 <= bytes.size(); i += 3) {
        const std::uint32_t v = (bytes[i] << 16) | (bytes[i + 1] << 8) | bytes[i + 2];
        out.push_back(alphabet[(v >> 18) & 63]);
        out.push_back(alphabet[(v >> 12) & 63]);
        out.push_back(alphabet[(v >> 6) & 63]);
        out.push_back(alphabet[v & 63]);
    }
    const std::size_t rest = bytes.size() - i;
    if (rest == 1) {
        const std::uint32_t v = bytes[i] << 16;
        out.push_back(alphabet[(v >> 18) & 63]);
        out.push_back(alphabet[(v >> 12) & 63]);
        out += "==";
    } else if (rest == 2) {
        const std::uint32_t v = (bytes[i] << 16) | (bytes[i + 1] << 8);
        out.push_back(alphabet[(v >> 18) & 63]);
        out.push_back(alphabet[(v >> 12) & 63]);
        out.push_back(alphabet[(v >> 6) & 63]);
        out.push_back('=');
    }
    return out;
}

/// Built-in stub classifier for synthetic scenes. It answers with the
/// dominant shape kind ("rect"/"ellipse"), unless some 50x50 region's
/// entropy exceeds the trip value, in which case it answers "hijacked" --
/// a deliberately patch-sensitive behavior so attacks have something to
/// exploit at desk scale.
class ToyShapeOracle : public ModelOracle {
public:
    explicit ToyShapeOracle(double trip = 6.5) : trip_(trip) {}

    std::string name() const override { return "builtin-toy"; }

    double trip() const { return trip_; }

    std::string label(const Image& image) override {
        const Image gray = to_grayscale(image);
        if (max_region_entropy(gray) > trip_) return "hijacked";
        return classify_shape(gray);
    }

    /// Highest entropy over 50x50 regions scanned at a 5-pixel step
    /// (degrading gracefully for smaller inputs).
    double max_region_entropy(const Image& gray) const {
        const int region = std::min({50, gray.width, gray.height});
        std::array<std::uint32_t, 256> counts;
        const double n = static_cast<double>(region) * region;
        double best = 0.0;
        auto positions = [](int dim, int reg) {
            std::vector<int> xs;
            for (int x = 0; x + reg <= dim; x += 5) xs.push_back(x);
            if (xs.empty() || xs.back() != dim - reg) xs.push_back(dim - reg);
            return xs;
        };
        for (int y : positions(gray.height, region)) {
            for (int x : positions(gray.width, region)) {
                counts.fill(0);
                for (int yy = y; yy < y + region; ++yy) {
                    const std::uint8_t* row = &gray.data[gray.index(x, yy)];
                    for (int xx = 0; xx < region; ++xx) ++counts[row[xx]];
                }
                double acc = 0.0;
                for (std::uint32_t c : counts) {
                    if (!c) continue;
                    const double p = c / n;
                    acc += p * std::log2(p);
                }
                best = std::max(best, -acc + 0.0);
            }
        }
        return best;
    }

private:
    double trip_;

    // Shapes pop out as residuals against a heavily blurred copy; the
    // largest residual component is rated by how much of its bounding box
    // it fills (a rectangle nearly fills it, an ellipse covers ~pi/4).
    std::string classify_shape(const Image& gray) const {
        const int w = gray.width, h = gray.height;
        std::vector<double> integral(static_cast<std::size_t>(w + 1) * (h + 1), 0.0);
        for (int y = 0; y < h; ++y) {
            double row_sum = 0.0;
            for (int x = 0; x < w; ++x) {
                row_sum += gray.at(x, y);
                integral[static_cast<std::size_t>(y + 1) * (w + 1) + (x + 1)] =
                    integral[static_cast<std::size_t>(y) * (w + 1) + (x + 1)] + row_sum;
            }
        }
        auto box_mean = [&](int x, int y, int half) {
            const int x0 = std::max(0, x - half), x1 = std::min(w, x + half + 1);
            const int y0 = std::max(0, y - half), y1 = std::min(h, y + half + 1);
            const double sum = integral[static_cast<std::size_t>(y1) * (w + 1) + x1] -
                               integral[static_cast<std::size_t>(y0) * (w + 1) + x1] -
                               integral[static_cast<std::size_t>(y1) * (w + 1) + x0] +
                               integral[static_cast<std::size_t>(y0) * (w + 1) + x0];
            return sum / (static_cast<double>(x1 - x0) * (y1 - y0));
        };

        std::vector<std::uint8_t> fg(static_cast<std::size_t>(w) * h, 0);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                if (std::abs(gray.at(x, y) - box_mean(x, y, 50)) > 18.0)
                    fg[static_cast<std::size_t>(y) * w + x] = 1;

        std::vector<std::size_t> sizes;
        const std::vector<int> labels = detail::label_components(fg, h, w, sizes);
        int best_label = 0;
        std::size_t best_size = 0;
        for (std::size_t l = 1; l < sizes.size(); ++l)
            if (sizes[l] > best_size) {
                best_size = sizes[l];
                best_label = static_cast<int>(l);
            }
        if (best_size < std::max<std::size_t>(40, fg.size() / 1000)) return "flat";

        int min_x = w, max_x = -1, min_y = h, max_y = -1;
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                if (labels[static_cast<std::size_t>(y) * w + x] == best_label) {
                    min_x = std::min(min_x, x);
                    max_x = std::max(max_x, x);
                    min_y = std::min(min_y, y);
                    max_y = std::max(max_y, y);
                }
        const double bbox_area =
            static_cast<double>(max_x - min_x + 1) * static_cast<double>(max_y - min_y + 1);
        const double fill = static_cast<double>(best_size) / bbox_area;
        return fill >= 0.87 ? "rect" : "ellipse";
    }
};

/// External model over a child process's standard streams. One JSON object
/// per line: request {"id": int, "png_base64": str}, response
/// {"id": int, "label": str}.
class SubprocessOracle : public ModelOracle {
public:
    explicit SubprocessOracle(std::string command) : command_(std::move(command)) {
        std::signal(SIGPIPE, SIG_IGN); // a dead child must surface as an error, not a signal

        int to_child[2], from_child[2];
        if (pipe(to_child) != 0 || pipe(from_child) != 0)
            throw OracleError("cannot create oracle pipes");

        pid_ = fork();
        if (pid_ < 0) throw OracleError("cannot fork oracle subprocess");
        if (pid_ == 0) {
            dup2(to_child[0], STDIN_FILENO);
            dup2(from_child[1], STDOUT_FILENO);
            close(to_child[0]);
            close(to_child[1]);
            close(from_child[0]);
            close(from_child[1]);
            execl("/bin/sh", "sh", "-c", command_.c_str(), static_cast<char*>(nullptr));
            _exit(127);
        }
        close(to_child[0]);
        close(from_child[1]);
        to_child_ = fdopen(to_child[1], "w");
        from_child_ = fdopen(from_child[0], "r");
        if (!to_child_ || !from_child_) throw OracleError("cannot open oracle streams");
    }

    SubprocessOracle(const SubprocessOracle&) = delete;
    SubprocessOracle& operator=(const SubprocessOracle&) = delete;

    ~SubprocessOracle() override {
        if (to_child_) fclose(to_child_);
        if (from_child_) fclose(from_child_);
        if (pid_ > 0) {
            int status = 0;
            for (int i = 0; i < 20; ++i) {
                if (waitpid(pid_, &status, WNOHANG) != 0) return;
                usleep(100 * 1000);
            }
            kill(pid_, SIGKILL);
            waitpid(pid_, &status, 0);
        }
    }

    std::string name() const override { return "subprocess: " + command_; }

    std::string label(const Image& image) override {
        const long id = next_id_++;
        const nlohmann::json request{{"id", id},
                                     {"png_base64", base64_encode(encode_png(image))}};
        const std::string line = request.dump();
        if (fputs(line.c_str(), to_child_) == EOF || fputc('\n', to_child_) == EOF ||
            fflush(to_child_) != 0)
            throw OracleError("oracle subprocess is not accepting requests");

        std::string response;
        for (;;) {
            const int c = fgetc(from_child_);
            if (c == EOF) throw OracleError("oracle subprocess closed its output");
            if (c == '\n') break;
            response.push_back(static_cast<char>(c));
        }
        try {
            const nlohmann::json j = nlohmann::json::parse(response);
            if (j.at("id").get<long>() != id)
                throw OracleError("oracle response id mismatch");
            return j.at("label").get<std::string>();
        } catch (const nlohmann::json::exception& e) {
            throw OracleError(std::string("malformed oracle response: ") + e.what());
        }
    }

private:
    std::string command_;
    pid_t pid_ = -1;
    std::FILE* to_child_ = nullptr;
    std::FILE* from_child_ = nullptr;
    long next_id_ = 0;
};

} // namespace jedi
