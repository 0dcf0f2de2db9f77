#include "evidex/dynamics_plot.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <functional>

#include "evidex/errors.hpp"

namespace evidex {

std::vector<double> moving_average(std::span<const double> values, int window) {
    std::vector<double> out(values.size());
    const std::size_t w = static_cast<std::size_t>(std::max(window, 1));
    double sum = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) {
        sum += values[i];
        if (i >= w) sum -= values[i - w];
        out[i] = sum / static_cast<double>(std::min(i + 1, w));
    }
    return out;
}

namespace {

constexpr double kPanelW = 420, kPanelH = 280, kMargin = 50;

struct Series {
    std::string label;
    std::string color;
    std::vector<double> y;
};

std::string panel(double x0, const std::string& title, std::span<const double> steps,
                  std::span<const Series> series, double y_lo, double y_hi, bool legend_low) {
    std::string s = fmt::format("<g transform=\"translate({},0)\">\n", x0);
    const double left = kMargin, top = 30, w = kPanelW - kMargin - 10, h = kPanelH - top - 40;
    s += fmt::format("<text x=\"{}\" y=\"18\" font-size=\"13\" text-anchor=\"middle\">{}</text>\n", left + w / 2, title);
    s += fmt::format("<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#444\"/>\n", left, top, w, h);
    const double x_lo = steps.front(), x_hi = std::max(steps.back(), x_lo + 1);
    auto px = [&](double x) { return left + (x - x_lo) / (x_hi - x_lo) * w; };
    auto py = [&](double y) { return top + h - (y - y_lo) / (y_hi - y_lo) * h; };
    for (int k = 0; k <= 4; ++k) {
        const double y = y_lo + (y_hi - y_lo) * k / 4.0;
        s += fmt::format("<text x=\"{}\" y=\"{:.1f}\" font-size=\"10\" text-anchor=\"end\">{:.2g}</text>\n", left - 4, py(y) + 3, y);
        const double x = x_lo + (x_hi - x_lo) * k / 4.0;
        s += fmt::format("<text x=\"{:.1f}\" y=\"{}\" font-size=\"10\" text-anchor=\"middle\">{:.0f}</text>\n", px(x), top + h + 14, x);
    }
    s += fmt::format("<text x=\"{}\" y=\"{}\" font-size=\"11\" text-anchor=\"middle\">step</text>\n", left + w / 2, top + h + 30);
    const double legend_top = legend_low ? top + h - 10 - 14 * static_cast<double>(series.size()) : top + 6;
    s += fmt::format("<rect x=\"{}\" y=\"{}\" width=\"130\" height=\"{}\" fill=\"white\" fill-opacity=\"0.85\"/>\n",
                     left + w - 136, legend_top - 2, 14 * static_cast<double>(series.size()) + 6);
    for (std::size_t k = 0; k < series.size(); ++k) {
        const auto& ser = series[k];
        std::string pts;
        for (std::size_t i = 0; i < steps.size(); ++i) {
            pts += fmt::format("{:.2f},{:.2f} ", px(steps[i]), py(ser.y[i]));
        }
        s += fmt::format("<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\" points=\"{}\"/>\n", ser.color, pts);
        const double ly = legend_top + 12 + 14 * static_cast<double>(k);
        s += fmt::format("<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"{}\" stroke-width=\"2\"/>\n",
                         left + w - 130, ly - 4, left + w - 114, ly - 4, ser.color);
        s += fmt::format("<text x=\"{}\" y=\"{}\" font-size=\"10\">{}</text>\n", left + w - 110, ly, ser.label);
    }
    return s + "</g>\n";
}

}  // namespace

std::string render_dynamics_svg(std::span<const DynamicsRecord> records, int smoothing_window) {
    if (records.empty()) {
        throw Error("no dynamics records to plot");
    }
    std::vector<double> steps;
    for (const auto& r : records) steps.push_back(static_cast<double>(r.step));
    auto column = [&](double DynamicsRecord::*field) {
        std::vector<double> v;
        for (const auto& r : records) v.push_back(r.*field);
        return moving_average(v, smoothing_window);
    };

    const std::vector<Series> rewards = {
        {"answer reward o_r", "#1f77b4", column(&DynamicsRecord::mean_ans_r)},
        {"answer reward o_e", "#ff7f0e", column(&DynamicsRecord::mean_ans_e)},
        {"answer reward o_f", "#2ca02c", column(&DynamicsRecord::mean_ans_f)},
    };
    const std::vector<Series> lengths = {
        {"rationale length", "#1f77b4", column(&DynamicsRecord::mean_len_r)},
        {"evidence length", "#ff7f0e", column(&DynamicsRecord::mean_len_e)},
        {"answer length", "#2ca02c", column(&DynamicsRecord::mean_len_answer)},
    };
    double len_hi = 1.0;
    for (const auto& ser : lengths) {
        for (double y : ser.y) len_hi = std::max(len_hi, y);
    }
    len_hi = 4.0 * std::ceil(len_hi * 1.1 / 4.0);

    std::string svg = fmt::format(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" font-family=\"sans-serif\">\n"
        "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n",
        2 * kPanelW, kPanelH);
    svg += panel(0, "Answer reward", steps, rewards, 0.0, 1.0, true);
    svg += panel(kPanelW, "Response length (words)", steps, lengths, 0.0, len_hi, false);
    return svg + "</svg>\n";
}

}  // namespace evidex
