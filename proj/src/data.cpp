#include "tapnet/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "tapnet/errors.hpp"
#include "tapnet/rng.hpp"

namespace fs = std::filesystem;

namespace tapnet {

const std::vector<std::size_t>& DatasetSplit::sample_shape() const {
    if (classes.empty() || classes.front().samples.empty())
        throw DataError("dataset split has no samples");
    return classes.front().samples.front().shape();
}

DatasetSplit generate_synthetic(const SyntheticTaskSpec& spec) {
    if (spec.n_classes_pool < 2) throw ConfigError("synthetic task needs at least 2 classes");
    if (spec.input_dim < 1) throw ConfigError("synthetic task needs input_dim >= 1");
    if (!(spec.cluster_separation > 0.0))
        throw ConfigError("synthetic task needs cluster_separation > 0");
    if (spec.cluster_std < 0.0) throw ConfigError("synthetic task needs cluster_std >= 0");
    if (spec.samples_per_class < 1) throw ConfigError("synthetic task needs samples per class");

    Rng rng(spec.seed);
    DatasetSplit split;
    split.provenance = "synthetic";
    split.classes.reserve(spec.n_classes_pool);
    for (std::size_t c = 0; c < spec.n_classes_pool; ++c) {
        // Mean uniform on the sphere: normalized Gaussian direction.
        std::vector<double> mean(spec.input_dim);
        double norm2 = 0.0;
        do {
            norm2 = 0.0;
            for (double& m : mean) {
                m = rng.normal();
                norm2 += m * m;
            }
        } while (norm2 == 0.0);
        const double scale = spec.cluster_separation / std::sqrt(norm2);
        for (double& m : mean) m *= scale;

        ClassRecord record;
        record.id = "class" + std::to_string(c);
        record.samples.reserve(spec.samples_per_class);
        for (std::size_t s = 0; s < spec.samples_per_class; ++s) {
            Tensor sample({spec.input_dim});
            for (std::size_t i = 0; i < spec.input_dim; ++i)
                sample[i] = mean[i] + spec.cluster_std * rng.normal();
            record.samples.push_back(std::move(sample));
        }
        split.classes.push_back(std::move(record));
    }
    return split;
}

DatasetBundle split_classes(const DatasetSplit& all, const SplitSizes& sizes) {
    if (sizes.train + sizes.val + sizes.test > all.class_count())
        throw ConfigError("split sizes exceed the class pool (" +
                          std::to_string(sizes.train + sizes.val + sizes.test) + " > " +
                          std::to_string(all.class_count()) + ")");
    DatasetBundle out;
    out.train.provenance = out.val.provenance = out.test.provenance = all.provenance;
    std::size_t i = 0;
    for (; i < sizes.train; ++i) out.train.classes.push_back(all.classes[i]);
    for (; i < sizes.train + sizes.val; ++i) out.val.classes.push_back(all.classes[i]);
    for (; i < sizes.train + sizes.val + sizes.test; ++i) out.test.classes.push_back(all.classes[i]);
    return out;
}

namespace {

// Minimal PGM reader (P2 ASCII and P5 binary, maxval <= 255).
Tensor read_pgm(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open image file: " + path.string());

    auto next_token = [&in, &path]() -> std::string {
        std::string tok;
        while (in) {
            int ch = in.get();
            if (ch == '#') { // comment to end of line
                while (in && in.get() != '\n') {}
                continue;
            }
            if (ch == EOF) break;
            if (std::isspace(ch)) {
                if (!tok.empty()) return tok;
                continue;
            }
            tok.push_back(static_cast<char>(ch));
        }
        if (tok.empty()) throw DataError("truncated image file: " + path.string());
        return tok;
    };

    const std::string magic = next_token();
    if (magic != "P2" && magic != "P5")
        throw DataError("unsupported image format (expected PGM P2/P5): " + path.string());
    const std::size_t width = std::stoull(next_token());
    const std::size_t height = std::stoull(next_token());
    const std::size_t maxval = std::stoull(next_token());
    if (width == 0 || height == 0 || maxval == 0 || maxval > 255)
        throw DataError("unsupported PGM header in " + path.string());

    Tensor img({1, height, width});
    if (magic == "P5") {
        std::vector<unsigned char> raw(width * height);
        in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
        if (static_cast<std::size_t>(in.gcount()) != raw.size())
            throw DataError("truncated image file: " + path.string());
        for (std::size_t i = 0; i < raw.size(); ++i)
            img[i] = static_cast<double>(raw[i]) / static_cast<double>(maxval);
    } else {
        for (std::size_t i = 0; i < width * height; ++i)
            img[i] = std::stod(next_token()) / static_cast<double>(maxval);
    }
    return img;
}

} // namespace

DatasetSplit load_image_folder(const std::string& root_path) {
    const fs::path root(root_path);
    if (!fs::is_directory(root)) throw DataError("dataset path is not a directory: " + root_path);

    std::vector<fs::path> class_dirs;
    for (const auto& entry : fs::directory_iterator(root))
        if (entry.is_directory()) class_dirs.push_back(entry.path());
    std::sort(class_dirs.begin(), class_dirs.end());
    if (class_dirs.size() < 2)
        throw DataError("image folder needs at least 2 class directories: " + root_path);

    DatasetSplit split;
    split.provenance = "image-folder";
    std::vector<std::size_t> shape;
    std::string offenders;
    for (const auto& dir : class_dirs) {
        std::vector<fs::path> files;
        for (const auto& entry : fs::directory_iterator(dir))
            if (entry.is_regular_file()) files.push_back(entry.path());
        std::sort(files.begin(), files.end());
        if (files.empty()) throw DataError("class directory is empty: " + dir.string());

        ClassRecord record;
        record.id = dir.filename().string();
        for (const auto& f : files) {
            Tensor img = read_pgm(f);
            if (shape.empty()) shape = img.shape();
            else if (img.shape() != shape) offenders += (offenders.empty() ? "" : ", ") + f.string();
            record.samples.push_back(std::move(img));
        }
        split.classes.push_back(std::move(record));
    }
    if (!offenders.empty())
        throw ShapeError("images with inconsistent dimensions: " + offenders);
    return split;
}

Tensor rotate90(const Tensor& sample) {
    const auto r = sample.rank();
    if (r != 2 && r != 3) throw ShapeError("rotate90 expects [H,W] or [C,H,W] samples");
    const std::size_t c = r == 3 ? sample.dim(0) : 1;
    const std::size_t h = sample.dim(r - 2);
    const std::size_t w = sample.dim(r - 1);
    if (h != w) throw ShapeError("rotate90 requires square samples, got " +
                                 Tensor::shape_string(sample.shape()));
    Tensor out(sample.shape());
    // counter-clockwise: out[y][x] = in[x][w-1-y]
    for (std::size_t ci = 0; ci < c; ++ci)
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t x = 0; x < w; ++x)
                out[(ci * h + y) * w + x] = sample[(ci * h + x) * w + (w - 1 - y)];
    return out;
}

DatasetSplit augment_rotations(const DatasetSplit& split) {
    static const char* suffix[4] = {"_rot000", "_rot090", "_rot180", "_rot270"};
    DatasetSplit out;
    out.provenance = split.provenance;
    out.classes.reserve(split.classes.size() * 4);
    for (const ClassRecord& record : split.classes) {
        std::vector<ClassRecord> rotated(4);
        for (int q = 0; q < 4; ++q) rotated[q].id = record.id + suffix[q];
        for (const Tensor& s : record.samples) {
            Tensor current = s;
            rotated[0].samples.push_back(current);
            for (int q = 1; q < 4; ++q) {
                current = rotate90(current);
                rotated[q].samples.push_back(current);
            }
        }
        for (auto& r : rotated) out.classes.push_back(std::move(r));
    }
    return out;
}

} // namespace tapnet
