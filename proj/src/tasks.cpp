#include "seqmeta/tasks.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <numeric>

#include <png.h>

#include "seqmeta/errors.hpp"

namespace seqmeta {

namespace {

std::uint64_t splitmix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

Error sampling_error(const std::string& message) { return Error(ErrorKind::sampling, message); }

struct Point {
    double x;
    double y;
};

// Quadratic bezier strokes, each given by three control points in [0,1]^2.
using Stroke = std::array<Point, 3>;

double segment_distance(Point p, Point a, Point b) {
    const double dx = b.x - a.x;
    const double dy = b.y - a.y;
    const double len2 = dx * dx + dy * dy;
    double t = len2 > 0 ? ((p.x - a.x) * dx + (p.y - a.y) * dy) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    const double ex = a.x + t * dx - p.x;
    const double ey = a.y + t * dy - p.y;
    return std::sqrt(ex * ex + ey * ey);
}

constexpr int kBezierSegments = 8;

std::array<Point, kBezierSegments + 1> flatten_stroke(const Stroke& s) {
    std::array<Point, kBezierSegments + 1> pts{};
    for (int i = 0; i <= kBezierSegments; ++i) {
        const double t = static_cast<double>(i) / kBezierSegments;
        const double u = 1.0 - t;
        pts[static_cast<std::size_t>(i)] = {u * u * s[0].x + 2 * u * t * s[1].x + t * t * s[2].x,
                                            u * u * s[0].y + 2 * u * t * s[1].y + t * t * s[2].y};
    }
    return pts;
}

// Area-weighted resampling of a gray image to side x side.
std::vector<double> resample(const std::vector<double>& src, std::size_t w, std::size_t h, std::size_t side) {
    std::vector<double> out(side * side, 0.0);
    const double sx = static_cast<double>(w) / static_cast<double>(side);
    const double sy = static_cast<double>(h) / static_cast<double>(side);
    for (std::size_t oy = 0; oy < side; ++oy) {
        const double y0 = static_cast<double>(oy) * sy;
        const double y1 = y0 + sy;
        for (std::size_t ox = 0; ox < side; ++ox) {
            const double x0 = static_cast<double>(ox) * sx;
            const double x1 = x0 + sx;
            double acc = 0.0;
            double area = 0.0;
            for (auto iy = static_cast<std::size_t>(y0); iy < h && static_cast<double>(iy) < y1; ++iy) {
                const double cy = std::min(y1, static_cast<double>(iy + 1)) - std::max(y0, static_cast<double>(iy));
                for (auto ix = static_cast<std::size_t>(x0); ix < w && static_cast<double>(ix) < x1; ++ix) {
                    const double cx =
                        std::min(x1, static_cast<double>(ix + 1)) - std::max(x0, static_cast<double>(ix));
                    acc += cx * cy * src[iy * w + ix];
                    area += cx * cy;
                }
            }
            out[oy * side + ox] = area > 0 ? acc / area : 0.0;
        }
    }
    return out;
}

std::vector<double> read_png_gray(const std::filesystem::path& path, std::size_t& width, std::size_t& height) {
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&image, path.c_str()))
        throw Error(ErrorKind::io, "cannot read image " + path.string() + ": " + image.message);
    image.format = PNG_FORMAT_GRAY;
    std::vector<png_byte> buffer(PNG_IMAGE_SIZE(image));
    if (!png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr)) {
        const std::string msg = image.message;
        png_image_free(&image);
        throw Error(ErrorKind::io, "cannot decode image " + path.string() + ": " + msg);
    }
    width = image.width;
    height = image.height;
    std::vector<double> pixels(buffer.size());
    std::transform(buffer.begin(), buffer.end(), pixels.begin(), [](png_byte b) { return b / 255.0; });
    return pixels;
}

bool is_png(const std::filesystem::path& p) {
    std::string ext = p.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    return ext == ".png";
}

std::vector<std::filesystem::path> sorted_entries(const std::filesystem::path& dir, bool directories) {
    std::vector<std::filesystem::path> out;
    for (const auto& entry : std::filesystem::directory_iterator(dir))
        if (directories ? entry.is_directory() : entry.is_regular_file()) out.push_back(entry.path());
    std::sort(out.begin(), out.end());
    return out;
}

Task build_classification_task(const TaskDistribution& dist, std::span<const std::size_t> classes, std::size_t id,
                               Rng& rng) {
    const ClassPool& pool = *dist.pool;
    const std::size_t features = pool.feature_size();
    const std::size_t ways = classes.size();
    Task task;
    task.id = id;
    task.ways = ways;
    task.loss = LossKind::cross_entropy;
    task.classes.assign(classes.begin(), classes.end());
    task.train.inputs.resize(static_cast<Eigen::Index>(ways * dist.train_per_class),
                             static_cast<Eigen::Index>(features));
    task.test.inputs.resize(static_cast<Eigen::Index>(ways * dist.test_per_class), static_cast<Eigen::Index>(features));
    for (std::size_t label = 0; label < ways; ++label) {
        const std::size_t cls = classes[label];
        std::vector<std::size_t> order(pool.samples_per_class(cls));
        std::iota(order.begin(), order.end(), 0);
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t j = 0; j < dist.train_per_class + dist.test_per_class; ++j) {
            const bool is_train = j < dist.train_per_class;
            Batch& batch = is_train ? task.train : task.test;
            const std::size_t row =
                is_train ? label * dist.train_per_class + j : label * dist.test_per_class + (j - dist.train_per_class);
            pool.sample(cls, order[j], std::span<double>(batch.inputs.row(static_cast<Eigen::Index>(row)).data(),
                                                         features));
            batch.labels.push_back(static_cast<int>(label));
            (is_train ? task.train_ids : task.test_ids).push_back({cls, order[j]});
        }
    }
    return task;
}

Task build_sine_task(const TaskDistribution& dist, std::size_t id, Rng& rng) {
    const SineRange& r = dist.sine;
    std::uniform_real_distribution<double> amp(r.amplitude_min, r.amplitude_max);
    std::uniform_real_distribution<double> phase(r.phase_min, r.phase_max);
    std::uniform_real_distribution<double> xs(r.x_min, r.x_max);
    Task task;
    task.id = id;
    task.ways = 0;
    task.loss = LossKind::squared_error;
    task.amplitude = amp(rng);
    task.phase = phase(rng);
    const auto fill = [&](Batch& b, std::size_t count, std::vector<SampleId>& ids, std::size_t first_index) {
        b.inputs.resize(static_cast<Eigen::Index>(count), 1);
        b.targets.resize(static_cast<Eigen::Index>(count), 1);
        for (std::size_t i = 0; i < count; ++i) {
            const double x = xs(rng);
            b.inputs(static_cast<Eigen::Index>(i), 0) = x;
            b.targets(static_cast<Eigen::Index>(i), 0) = task.amplitude * std::sin(x - task.phase);
            ids.push_back({0, first_index + i});
        }
    };
    fill(task.train, dist.train_per_class, task.train_ids, 0);
    fill(task.test, dist.test_per_class, task.test_ids, dist.train_per_class);
    return task;
}

void validate_classification(const TaskDistribution& dist) {
    if (!dist.pool) throw invalid_argument("classification distribution has no class pool");
    if (dist.ways == 0) throw invalid_argument("ways must be positive");
    if (dist.class_begin >= dist.class_end || dist.class_end > dist.pool->class_count())
        throw invalid_argument("class range [" + std::to_string(dist.class_begin) + ", " +
                               std::to_string(dist.class_end) + ") invalid for a pool of " +
                               std::to_string(dist.pool->class_count()) + " classes");
    if (dist.train_per_class == 0 || dist.test_per_class == 0)
        throw invalid_argument("train_per_class and test_per_class must be positive");
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b, std::uint64_t c) {
    return splitmix(splitmix(splitmix(splitmix(base) ^ a) ^ b) ^ c);
}

std::string to_string(TaskKind kind) {
    switch (kind) {
        case TaskKind::image_classes: return "image_classes";
        case TaskKind::synthetic_glyphs: return "synthetic_glyphs";
        case TaskKind::sine_regression: return "sine_regression";
    }
    return "?";
}

ImageClassPool::ImageClassPool(std::size_t side, std::vector<std::string> names, std::vector<Matrix> images)
    : side_(side), names_(std::move(names)), images_(std::move(images)) {
    if (names_.size() != images_.size()) throw ShapeError("class names", images_.size(), names_.size());
}

std::size_t ImageClassPool::samples_per_class(std::size_t cls) const {
    return static_cast<std::size_t>(images_.at(cls).rows());
}

void ImageClassPool::sample(std::size_t cls, std::size_t index, std::span<double> out) const {
    const Matrix& m = images_.at(cls);
    if (out.size() != feature_size()) throw ShapeError("sample buffer", feature_size(), out.size());
    const auto row = m.row(static_cast<Eigen::Index>(index));
    std::copy(row.data(), row.data() + row.size(), out.begin());
}

GlyphPool::GlyphPool(GlyphConfig config) : config_(config) {
    if (config_.class_count == 0) throw invalid_argument("glyph pool needs at least one class");
    if (config_.image_side < 4) throw invalid_argument("glyph image side must be >= 4");
    if (config_.samples_per_class == 0) throw invalid_argument("glyph samples_per_class must be positive");
    if (config_.strokes == 0) throw invalid_argument("glyph strokes must be positive");
    if (!(config_.jitter >= 0.0) || config_.jitter > 0.5) throw invalid_argument("glyph jitter must lie in [0, 0.5]");
}

void GlyphPool::sample(std::size_t cls, std::size_t index, std::span<double> out) const {
    if (cls >= config_.class_count) throw invalid_argument("glyph class index out of range");
    if (out.size() != feature_size()) throw ShapeError("sample buffer", feature_size(), out.size());

    Rng class_rng(derive_seed(config_.seed, 0x676c797068ULL, cls));
    std::uniform_real_distribution<double> place(0.15, 0.85);
    std::vector<Stroke> strokes(config_.strokes);
    for (auto& s : strokes)
        for (auto& p : s) p = {place(class_rng), place(class_rng)};

    Rng sample_rng(derive_seed(config_.seed, 0x6a6974ULL, cls, index + 1));
    const double j = config_.jitter;
    std::uniform_real_distribution<double> point_jitter(-j, j);
    std::uniform_real_distribution<double> angle(-2.5 * j, 2.5 * j);
    std::uniform_real_distribution<double> scale(1.0 - 2.0 * j, 1.0 + 2.0 * j);
    std::uniform_real_distribution<double> shift(-1.5 * j, 1.5 * j);
    const double theta = angle(sample_rng);
    const double sc = scale(sample_rng);
    const double tx = shift(sample_rng);
    const double ty = shift(sample_rng);
    const double ct = std::cos(theta);
    const double st = std::sin(theta);

    std::vector<std::array<Point, kBezierSegments + 1>> paths;
    paths.reserve(strokes.size());
    for (auto s : strokes) {
        for (auto& p : s) {
            const double x = p.x - 0.5 + point_jitter(sample_rng);
            const double y = p.y - 0.5 + point_jitter(sample_rng);
            p = {0.5 + sc * (ct * x - st * y) + tx, 0.5 + sc * (st * x + ct * y) + ty};
        }
        paths.push_back(flatten_stroke(s));
    }

    const std::size_t side = config_.image_side;
    const double width = 1.2 / static_cast<double>(side);
    for (std::size_t py = 0; py < side; ++py)
        for (std::size_t px = 0; px < side; ++px) {
            const Point c{(static_cast<double>(px) + 0.5) / static_cast<double>(side),
                          (static_cast<double>(py) + 0.5) / static_cast<double>(side)};
            double d = 1e9;
            for (const auto& path : paths)
                for (int k = 0; k < kBezierSegments; ++k)
                    d = std::min(d, segment_distance(c, path[static_cast<std::size_t>(k)],
                                                     path[static_cast<std::size_t>(k + 1)]));
            out[py * side + px] = std::clamp(1.5 - d / width, 0.0, 1.0);
        }
}

std::size_t TaskDistribution::input_size() const {
    if (kind == TaskKind::sine_regression) return 1;
    return pool ? pool->feature_size() : 0;
}

std::size_t TaskDistribution::output_size() const { return kind == TaskKind::sine_regression ? 1 : ways; }

Task sample_task(const TaskDistribution& dist, Rng& rng) {
    TaskSequence seq = sample_sequence(dist, 1, rng);
    return std::move(seq.tasks.front());
}

TaskSequence sample_sequence(const TaskDistribution& dist, std::size_t n, Rng& rng) {
    if (n == 0) throw invalid_argument("sequence length must be positive");
    TaskSequence seq;
    seq.tasks.reserve(n);
    if (dist.kind == TaskKind::sine_regression) {
        for (std::size_t i = 0; i < n; ++i) seq.tasks.push_back(build_sine_task(dist, i, rng));
        return seq;
    }
    validate_classification(dist);
    const std::size_t required = n * dist.ways;
    if (dist.available_classes() < required)
        throw sampling_error("sequence of " + std::to_string(n) + " " + std::to_string(dist.ways) +
                             "-way tasks requires " + std::to_string(required) + " classes, available " +
                             std::to_string(dist.available_classes()));
    // Partial Fisher-Yates: the first n*ways entries are a uniform draw without replacement.
    std::vector<std::size_t> classes(dist.available_classes());
    std::iota(classes.begin(), classes.end(), dist.class_begin);
    for (std::size_t i = 0; i < required; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, classes.size() - 1);
        std::swap(classes[i], classes[pick(rng)]);
    }
    for (std::size_t t = 0; t < n; ++t) {
        const std::span<const std::size_t> subset(classes.data() + t * dist.ways, dist.ways);
        for (std::size_t cls : subset)
            if (dist.pool->samples_per_class(cls) < dist.train_per_class + dist.test_per_class)
                throw sampling_error("class " + dist.pool->class_name(cls) + " has " +
                                     std::to_string(dist.pool->samples_per_class(cls)) + " samples, need " +
                                     std::to_string(dist.train_per_class + dist.test_per_class));
        seq.tasks.push_back(build_classification_task(dist, subset, t, rng));
    }
    return seq;
}

std::shared_ptr<ImageClassPool> load_image_classes(const std::filesystem::path& root, std::size_t image_side) {
    if (image_side == 0) throw invalid_argument("image side must be positive");
    if (!std::filesystem::is_directory(root)) throw Error(ErrorKind::io, "not a directory: " + root.string());
    std::vector<std::string> names;
    std::vector<Matrix> images;
    for (const auto& group : sorted_entries(root, true)) {
        for (const auto& cls : sorted_entries(group, true)) {
            std::vector<std::filesystem::path> files;
            for (const auto& f : sorted_entries(cls, false))
                if (is_png(f)) files.push_back(f);
            if (files.empty()) throw Error(ErrorKind::io, "empty class directory: " + cls.string());
            Matrix m(static_cast<Eigen::Index>(files.size()), static_cast<Eigen::Index>(image_side * image_side));
            for (std::size_t i = 0; i < files.size(); ++i) {
                std::size_t w = 0;
                std::size_t h = 0;
                const auto pixels = read_png_gray(files[i], w, h);
                const auto scaled = resample(pixels, w, h, image_side);
                std::copy(scaled.begin(), scaled.end(), m.row(static_cast<Eigen::Index>(i)).data());
            }
            names.push_back(std::filesystem::relative(cls, root).generic_string());
            images.push_back(std::move(m));
        }
    }
    return std::make_shared<ImageClassPool>(image_side, std::move(names), std::move(images));
}

TaskDistribution make_pool_distribution(TaskKind kind, std::shared_ptr<const ClassPool> pool, std::size_t class_begin,
                                        std::size_t class_end, std::size_t ways, std::size_t train_per_class,
                                        std::size_t test_per_class) {
    TaskDistribution dist;
    dist.kind = kind;
    dist.pool = std::move(pool);
    dist.class_begin = class_begin;
    dist.class_end = class_end == 0 && dist.pool ? dist.pool->class_count() : class_end;
    dist.ways = ways;
    dist.train_per_class = train_per_class;
    dist.test_per_class = test_per_class;
    validate_classification(dist);
    if (dist.available_classes() < ways)
        throw sampling_error("pool range holds " + std::to_string(dist.available_classes()) + " classes, fewer than " +
                             std::to_string(ways) + " ways");
    const std::size_t needed = train_per_class + test_per_class;
    for (std::size_t cls = dist.class_begin; cls < dist.class_end; ++cls)
        if (dist.pool->samples_per_class(cls) < needed)
            throw sampling_error("class " + dist.pool->class_name(cls) + " has " +
                                 std::to_string(dist.pool->samples_per_class(cls)) + " samples, fewer than the " +
                                 std::to_string(needed) + " a task needs");
    return dist;
}

TaskDistribution make_synthetic_distribution(const SyntheticConfig& config) {
    if (config.kind == TaskKind::sine_regression) {
        const SineRange& r = config.sine;
        if (!(r.amplitude_min <= r.amplitude_max) || !(r.phase_min <= r.phase_max) || !(r.x_min < r.x_max))
            throw invalid_argument("sine_regression ranges must satisfy min <= max");
        if (config.train_per_class == 0 || config.test_per_class == 0)
            throw invalid_argument("sine_regression needs positive train/test point counts");
        TaskDistribution dist;
        dist.kind = TaskKind::sine_regression;
        dist.ways = 0;
        dist.train_per_class = config.train_per_class;
        dist.test_per_class = config.test_per_class;
        dist.sine = r;
        return dist;
    }
    if (config.kind != TaskKind::synthetic_glyphs)
        throw invalid_argument("make_synthetic_distribution supports synthetic_glyphs and sine_regression");
    if (config.glyphs.samples_per_class < config.train_per_class + config.test_per_class)
        throw invalid_argument("glyph samples_per_class smaller than train_per_class + test_per_class");
    auto pool = std::make_shared<GlyphPool>(config.glyphs);
    return make_pool_distribution(TaskKind::synthetic_glyphs, std::move(pool), config.class_begin, config.class_end,
                                  config.ways, config.train_per_class, config.test_per_class);
}

}  // namespace seqmeta
