#include "medttt/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

namespace medttt {

namespace fs = std::filesystem;

std::vector<ManifestRow> DatasetManifest::split(const std::string& name) const {
  std::vector<ManifestRow> out;
  for (const auto& r : rows)
    if (r.split == name) out.push_back(r);
  return out;
}

DatasetManifest load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path);
  DatasetManifest m;
  m.dir = fs::path(path).parent_path().string();
  std::string line;
  if (!std::getline(in, line)) throw ParseError(path + ": empty manifest");
  if (line != "id,image,mask,split")
    throw ParseError(path + ": bad header '" + line + "'");
  std::set<std::string> ids;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ss(line);
    ManifestRow r;
    if (!std::getline(ss, r.id, ',') || !std::getline(ss, r.image_path, ',') ||
        !std::getline(ss, r.mask_path, ',') || !std::getline(ss, r.split))
      throw ParseError(path + ": malformed row at line " +
                       std::to_string(lineno));
    if (!ids.insert(r.id).second)
      throw DataError(path + ": duplicate id '" + r.id + "'");
    m.rows.push_back(std::move(r));
  }
  return m;
}

void save_manifest(const DatasetManifest& m, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write manifest " + path);
  out << "id,image,mask,split\n";
  for (const auto& r : m.rows)
    out << r.id << "," << r.image_path << "," << r.mask_path << "," << r.split
        << "\n";
}

std::vector<std::string> assign_splits(std::size_t n, double train_ratio,
                                       double val_ratio) {
  double test_ratio = 1.0 - train_ratio - val_ratio;
  if (train_ratio < 0 || val_ratio < 0 || test_ratio < -1e-12)
    throw ConfigError("split ratios must be non-negative and sum to <= 1");
  test_ratio = std::max(0.0, test_ratio);
  double exact[3] = {train_ratio * double(n), val_ratio * double(n),
                     test_ratio * double(n)};
  std::size_t counts[3];
  double rem[3];
  std::size_t assigned = 0;
  for (int i = 0; i < 3; ++i) {
    counts[i] = std::size_t(std::floor(exact[i]));
    rem[i] = exact[i] - double(counts[i]);
    assigned += counts[i];
  }
  // Largest remainder; ties broken train > val > test.
  while (assigned < n) {
    int best = 0;
    for (int i = 1; i < 3; ++i)
      if (rem[i] > rem[best]) best = i;
    ++counts[best];
    rem[best] = -1.0;
    ++assigned;
  }
  std::vector<std::string> out;
  out.reserve(n);
  const char* names[3] = {"train", "val", "test"};
  for (int i = 0; i < 3; ++i)
    out.insert(out.end(), counts[i], names[i]);
  return out;
}

namespace {

struct Ellipse {
  double cy, cx, ry, rx, angle;
};

bool inside(const Ellipse& e, double y, double x) {
  double dy = y - e.cy, dx = x - e.cx;
  double ca = std::cos(e.angle), sa = std::sin(e.angle);
  double u = ca * dx + sa * dy;
  double v = -sa * dx + ca * dy;
  return (u * u) / (e.rx * e.rx) + (v * v) / (e.ry * e.ry) <= 1.0;
}

}  // namespace

DatasetManifest synth_dataset(std::size_t n, std::size_t size,
                              std::uint64_t seed, const std::string& out_dir,
                              double train_ratio, double val_ratio) {
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (!fs::is_directory(out_dir))
    throw IoError("cannot create output directory " + out_dir);

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 0.1);
  std::uniform_int_distribution<int> n_lesions(1, 3);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  auto splits = assign_splits(n, train_ratio, val_ratio);

  DatasetManifest m;
  m.dir = out_dir;
  for (std::size_t i = 0; i < n; ++i) {
    // Rejection loop keeps the foreground fraction in [0.02, 0.5].
    std::vector<double> mask;
    std::vector<Ellipse> ellipses;
    for (;;) {
      ellipses.clear();
      int k = n_lesions(rng);
      for (int e = 0; e < k; ++e) {
        Ellipse el;
        el.cy = unit(rng) * double(size);
        el.cx = unit(rng) * double(size);
        el.ry = (0.05 + 0.15 * unit(rng)) * double(size);
        el.rx = (0.05 + 0.15 * unit(rng)) * double(size);
        el.angle = unit(rng) * std::numbers::pi;
        ellipses.push_back(el);
      }
      mask.assign(size * size, 0.0);
      std::size_t fg = 0;
      for (std::size_t y = 0; y < size; ++y)
        for (std::size_t x = 0; x < size; ++x)
          for (const auto& el : ellipses)
            if (inside(el, double(y), double(x))) {
              mask[y * size + x] = 1.0;
              ++fg;
              break;
            }
      double frac = double(fg) / double(size * size);
      if (frac >= 0.02 && frac <= 0.5) break;
    }

    // Noisy background around 0.3, lesions around 0.7, optional
    // high-frequency stripe texture inside the lesion.
    double lesion_base = 0.7 + 0.1 * (2.0 * unit(rng) - 1.0);
    bool striped = unit(rng) < 0.7;
    double stripe_freq = 2.0 + 4.0 * unit(rng);
    std::vector<double> img(size * size);
    for (std::size_t y = 0; y < size; ++y)
      for (std::size_t x = 0; x < size; ++x) {
        double v;
        if (mask[y * size + x] > 0.5) {
          v = lesion_base;
          if (striped)
            v += 0.08 * std::sin(stripe_freq * double(x)) *
                 std::cos(stripe_freq * double(y));
        } else {
          v = 0.3;
        }
        v += noise(rng);
        img[y * size + x] = std::min(1.0, std::max(0.0, v));
      }

    char id[32];
    std::snprintf(id, sizeof(id), "synth%04zu", i);
    std::string img_name = std::string(id) + "_img.pgm";
    std::string mask_name = std::string(id) + "_mask.pgm";

    Image im;
    im.channels = 1;
    im.h = size;
    im.w = size;
    im.data = img;
    save_pnm(im, (fs::path(out_dir) / img_name).string());
    im.data = mask;
    save_pnm(im, (fs::path(out_dir) / mask_name).string());

    m.rows.push_back({id, img_name, mask_name, splits[i]});
  }
  save_manifest(m, (fs::path(out_dir) / "manifest.csv").string());
  return m;
}

SegmentationSample load_sample(const DatasetManifest& m,
                               const ManifestRow& row) {
  auto resolve = [&](const std::string& p) {
    fs::path fp(p);
    return fp.is_absolute() ? fp.string() : (fs::path(m.dir) / fp).string();
  };
  Image img = load_pnm(resolve(row.image_path));
  Image msk = load_pnm(resolve(row.mask_path));
  if (msk.channels != 1)
    throw DataError(row.id + ": mask must be grayscale");
  if (msk.h != img.h || msk.w != img.w)
    throw DataError(row.id + ": image/mask extent mismatch");
  SegmentationSample s;
  s.id = row.id;
  s.image = Tensor({img.channels, img.h, img.w}, img.data);
  std::vector<double> mv(msk.data.size());
  for (std::size_t i = 0; i < mv.size(); ++i)
    mv[i] = msk.data[i] >= 0.5 ? 1.0 : 0.0;
  s.mask = Tensor({msk.h, msk.w}, std::move(mv));
  return s;
}

BatchStream::BatchStream(const DatasetManifest& manifest,
                         const std::string& split, std::size_t batch_size,
                         std::uint64_t seed, Augment augment)
    : manifest_(&manifest),
      rows_(manifest.split(split)),
      batch_size_(batch_size),
      seed_(seed),
      augment_(augment) {
  if (rows_.empty()) throw DataError("empty split '" + split + "'");
  if (batch_size_ == 0) throw ConfigError("batch_size must be positive");
  start_epoch(0);
}

void BatchStream::start_epoch(std::size_t epoch) {
  epoch_ = epoch;
  cursor_ = 0;
  order_.resize(rows_.size());
  for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = i;
  std::mt19937_64 rng(seed_ + 0x1000 * (epoch + 1));
  std::shuffle(order_.begin(), order_.end(), rng);
}

namespace {

// Mirror the trailing two axes of a C x H x W (or H x W) tensor.
Tensor flip_tensor(const Tensor& t, bool horiz, bool vert) {
  if (!horiz && !vert) return t;
  Shape s = t.shape();
  std::size_t c = s.size() == 3 ? s[0] : 1;
  std::size_t h = s[s.size() - 2], w = s[s.size() - 1];
  std::vector<double> out(t.size());
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        std::size_t sy = vert ? h - 1 - y : y;
        std::size_t sx = horiz ? w - 1 - x : x;
        out[(ch * h + y) * w + x] = t.at((ch * h + sy) * w + sx);
      }
  return Tensor(s, std::move(out));
}

}  // namespace

std::vector<SegmentationSample> BatchStream::next() {
  std::vector<SegmentationSample> batch;
  std::mt19937_64 rng(seed_ ^ (0x9E3779B97F4A7C15ULL * (epoch_ + 1) +
                               cursor_));
  while (batch.size() < batch_size_ && cursor_ < order_.size()) {
    SegmentationSample s = load_sample(*manifest_, rows_[order_[cursor_]]);
    ++cursor_;
    if (augment_ == Augment::kFlips) {
      bool hz = rng() & 1, vt = rng() & 1;
      s.image = flip_tensor(s.image, hz, vt);
      s.mask = flip_tensor(s.mask, hz, vt);
    }
    batch.push_back(std::move(s));
  }
  return batch;
}

}  // namespace medttt
