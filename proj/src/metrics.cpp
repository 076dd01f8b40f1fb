#include "uniadet/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "uniadet/error.hpp"

namespace uniadet {

std::size_t ScoredSet::positives() const {
    return static_cast<std::size_t>(std::count_if(labels.begin(), labels.end(), [](std::uint8_t v) { return v != 0; }));
}

namespace {

void check_set(const ScoredSet& set) {
    if (set.scores.size() != set.labels.size()) throw ShapeError("scores and labels differ in length");
    for (double s : set.scores)
        if (std::isnan(s)) throw DomainError("NaN score");
}

// Tie groups of a score-sorted index: (positives, negatives) per unique score,
// in the order of `order`.
template <typename Fn>
void for_each_tie_group(const ScoredSet& set, const std::vector<std::size_t>& order, Fn&& fn) {
    std::size_t i = 0;
    while (i < order.size()) {
        const double s = set.scores[order[i]];
        double pos = 0.0, neg = 0.0;
        for (; i < order.size() && set.scores[order[i]] == s; ++i) (set.labels[order[i]] ? pos : neg) += 1.0;
        fn(pos, neg);
    }
}

std::vector<std::size_t> sorted_order(const ScoredSet& set, bool descending) {
    std::vector<std::size_t> order(set.scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    if (descending)
        std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return set.scores[a] > set.scores[b]; });
    else
        std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return set.scores[a] < set.scores[b]; });
    return order;
}

std::pair<double, double> class_counts(const ScoredSet& set) {
    const double p = static_cast<double>(set.positives());
    return {p, static_cast<double>(set.labels.size()) - p};
}

// Histogram over [0, 1]; groups returned from the highest bin down.
std::vector<std::pair<double, double>> histogram_desc(const ScoredSet& set, std::size_t bins) {
    if (bins == 0) throw UsageError("bins must be positive");
    std::vector<std::pair<double, double>> h(bins, {0.0, 0.0});
    for (std::size_t i = 0; i < set.scores.size(); ++i) {
        const double s = std::clamp(set.scores[i], 0.0, 1.0);
        const auto b = std::min(bins - 1, static_cast<std::size_t>(s * static_cast<double>(bins)));
        (set.labels[i] ? h[b].first : h[b].second) += 1.0;
    }
    std::reverse(h.begin(), h.end());
    return h;
}

double auroc_from_groups_desc(const std::vector<std::pair<double, double>>& groups, double p, double n) {
    // walking down from the top: each positive beats every negative below it
    double neg_above = 0.0, u = 0.0;
    for (const auto& [pos, neg] : groups) {
        u += pos * ((n - neg_above - neg) + 0.5 * neg);
        neg_above += neg;
    }
    return u / (p * n);
}

double ap_from_groups_desc(const std::vector<std::pair<double, double>>& groups, double p) {
    double tp = 0.0, fp = 0.0, prev_recall = 0.0, ap = 0.0;
    for (const auto& [pos, neg] : groups) {
        tp += pos;
        fp += neg;
        if (tp + fp == 0.0) continue;
        const double recall = tp / p;
        ap += (recall - prev_recall) * (tp / (tp + fp));
        prev_recall = recall;
    }
    return ap;
}

// Binned AP: the order inside a bin is unknown, so each positive of the bin
// is placed at its expected rank among the bin's negatives.
double ap_from_bins_desc(const std::vector<std::pair<double, double>>& bins, double p) {
    double tp = 0.0, fp = 0.0, ap = 0.0;
    for (const auto& [pos, neg] : bins) {
        const auto count = static_cast<std::size_t>(pos);
        for (std::size_t j = 1; j <= count; ++j) {
            const double t = tp + static_cast<double>(j);
            const double f = fp + neg * static_cast<double>(j) / (pos + 1.0);
            ap += t / (t + f);
        }
        tp += pos;
        fp += neg;
    }
    return ap / p;
}

}  // namespace

double auroc(const ScoredSet& set) {
    check_set(set);
    const auto [p, n] = class_counts(set);
    if (p == 0.0 || n == 0.0) throw UndefinedMetricError("AUROC needs both positive and negative samples");
    const auto order = sorted_order(set, false);
    double neg_below = 0.0, u = 0.0;
    for_each_tie_group(set, order, [&](double pos, double neg) {
        u += pos * (neg_below + 0.5 * neg);
        neg_below += neg;
    });
    return u / (p * n);
}

double aupr(const ScoredSet& set) {
    check_set(set);
    const auto [p, n] = class_counts(set);
    (void)n;
    if (p == 0.0) throw UndefinedMetricError("AUPR needs at least one positive sample");
    std::vector<std::pair<double, double>> groups;
    for_each_tie_group(set, sorted_order(set, true), [&](double pos, double neg) { groups.emplace_back(pos, neg); });
    return ap_from_groups_desc(groups, p);
}

double f1_max(const ScoredSet& set) {
    check_set(set);
    const auto [p, n] = class_counts(set);
    (void)n;
    if (p == 0.0) throw UndefinedMetricError("F1max needs at least one positive sample");
    double tp = 0.0, fp = 0.0, best = 0.0;
    for_each_tie_group(set, sorted_order(set, true), [&](double pos, double neg) {
        tp += pos;
        fp += neg;
        best = std::max(best, 2.0 * tp / (2.0 * tp + fp + (p - tp)));
    });
    return best;
}

double auroc_binned(const ScoredSet& set, std::size_t bins) {
    check_set(set);
    const auto [p, n] = class_counts(set);
    if (p == 0.0 || n == 0.0) throw UndefinedMetricError("AUROC needs both positive and negative samples");
    return auroc_from_groups_desc(histogram_desc(set, bins), p, n);
}

double aupr_binned(const ScoredSet& set, std::size_t bins) {
    check_set(set);
    const auto [p, n] = class_counts(set);
    (void)n;
    if (p == 0.0) throw UndefinedMetricError("AUPR needs at least one positive sample");
    return ap_from_bins_desc(histogram_desc(set, bins), p);
}

std::vector<std::uint32_t> label_regions(const Mask& mask, std::uint32_t* count) {
    std::vector<std::uint32_t> labels(mask.data.size(), 0);
    std::uint32_t next = 0;
    std::vector<std::size_t> stack;
    for (std::size_t start = 0; start < mask.data.size(); ++start) {
        if (!mask.data[start] || labels[start]) continue;
        labels[start] = ++next;
        stack.push_back(start);
        while (!stack.empty()) {
            const std::size_t p = stack.back();
            stack.pop_back();
            const auto r = static_cast<long long>(p / mask.width);
            const auto c = static_cast<long long>(p % mask.width);
            for (long long dr = -1; dr <= 1; ++dr)
                for (long long dc = -1; dc <= 1; ++dc) {
                    const long long rr = r + dr, cc = c + dc;
                    if (rr < 0 || cc < 0 || rr >= static_cast<long long>(mask.height) ||
                        cc >= static_cast<long long>(mask.width))
                        continue;
                    const auto q = static_cast<std::size_t>(rr) * mask.width + static_cast<std::size_t>(cc);
                    if (mask.data[q] && !labels[q]) {
                        labels[q] = next;
                        stack.push_back(q);
                    }
                }
        }
    }
    if (count) *count = next;
    return labels;
}

double trapezoid_area(std::span<const double> xs, std::span<const double> ys, double x_max) {
    if (xs.size() != ys.size()) throw ShapeError("trapezoid_area: length mismatch");
    double area = 0.0;
    for (std::size_t i = 1; i < xs.size(); ++i) {
        const double x0 = xs[i - 1], x1 = xs[i];
        if (x0 >= x_max) break;
        if (x1 <= x_max) {
            area += (x1 - x0) * (ys[i - 1] + ys[i]) * 0.5;
        } else {
            const double y_at = ys[i - 1] + (ys[i] - ys[i - 1]) * (x_max - x0) / (x1 - x0);
            area += (x_max - x0) * (ys[i - 1] + y_at) * 0.5;
            break;
        }
    }
    return area;
}

double aupro(std::span<const Grid> maps, std::span<const Mask> masks, double fpr_limit) {
    if (maps.size() != masks.size()) throw ShapeError("aupro: map and mask counts differ");
    if (!(fpr_limit > 0.0 && fpr_limit <= 1.0)) throw DomainError("aupro: fpr_limit must lie in (0, 1]");

    struct Pixel {
        double score;
        std::uint32_t region;  // 0 = normal
    };
    std::vector<Pixel> pixels;
    std::vector<double> region_size{0.0};
    double normals = 0.0;
    for (std::size_t i = 0; i < maps.size(); ++i) {
        const Grid& map = maps[i];
        const Mask mask = masks[i].empty() ? Mask(map.rows, map.cols) : masks[i];
        if (mask.height != map.rows || mask.width != map.cols) throw ShapeError("aupro: map/mask size mismatch");
        std::uint32_t count = 0;
        const auto labels = label_regions(mask, &count);
        const auto offset = static_cast<std::uint32_t>(region_size.size() - 1);
        region_size.resize(region_size.size() + count, 0.0);
        for (std::size_t k = 0; k < labels.size(); ++k) {
            const std::uint32_t r = labels[k] ? labels[k] + offset : 0;
            if (r)
                region_size[r] += 1.0;
            else
                normals += 1.0;
            pixels.push_back({map.values[k], r});
        }
    }
    const double regions = static_cast<double>(region_size.size() - 1);
    if (regions == 0.0) throw UndefinedMetricError("aupro: no anomalous regions");
    if (normals == 0.0) throw UndefinedMetricError("aupro: no normal pixels");

    std::sort(pixels.begin(), pixels.end(), [](const Pixel& a, const Pixel& b) { return a.score > b.score; });
    std::vector<double> fpr{0.0}, pro{0.0};
    double fp = 0.0, overlap_sum = 0.0;
    std::size_t i = 0;
    while (i < pixels.size()) {
        const double s = pixels[i].score;
        for (; i < pixels.size() && pixels[i].score == s; ++i) {
            if (pixels[i].region)
                overlap_sum += 1.0 / region_size[pixels[i].region];
            else
                fp += 1.0;
        }
        fpr.push_back(fp / normals);
        pro.push_back(overlap_sum / regions);
    }
    return trapezoid_area(fpr, pro, fpr_limit) / fpr_limit;
}

std::vector<double> evaluate_class(const ClassEvaluation& ev, double fpr_limit) {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    std::vector<double> out(metric_names().size(), nan);
    auto guarded = [&](std::size_t slot, auto&& fn) {
        try {
            out[slot] = fn();
        } catch (const UndefinedMetricError&) {
            out[slot] = nan;
        }
    };
    guarded(0, [&] { return auroc(ev.image); });
    guarded(1, [&] { return aupr(ev.image); });
    guarded(2, [&] { return f1_max(ev.image); });

    if (!ev.maps.empty()) {
        ScoredSet pixels;
        for (std::size_t i = 0; i < ev.maps.size(); ++i) {
            const Grid& map = ev.maps[i];
            const Mask& mask = ev.masks[i];
            if (!mask.empty() && (mask.height != map.rows || mask.width != map.cols))
                throw ShapeError("evaluate_class: map/mask size mismatch for class " + ev.class_name);
            for (std::size_t k = 0; k < map.size(); ++k) pixels.add(map.values[k], !mask.empty() && mask.data[k]);
        }
        guarded(3, [&] { return auroc(pixels); });
        guarded(4, [&] { return aupr(pixels); });
        guarded(5, [&] { return f1_max(pixels); });
        guarded(6, [&] { return aupro(ev.maps, ev.masks, fpr_limit); });
    }
    return out;
}

}  // namespace uniadet
