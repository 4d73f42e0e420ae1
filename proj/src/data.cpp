#include "fedsim/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>

namespace fedsim {

namespace {

constexpr std::uint32_t kDatasetMagic = 0x46534431;  // "FSD1"

// Fixed template amplitudes; class identity is carried by the bump position
// on a ring and by the stripe frequency.
constexpr double kBumpAmplitude = 0.7;
constexpr double kStripeAmplitude = 0.25;
constexpr double kBaseLevel = 0.1;

Vector class_template(int c, int classes, int grid) {
  const double g = static_cast<double>(grid);
  const double angle = 2.0 * std::numbers::pi * static_cast<double>(c) / static_cast<double>(classes);
  const double cx = 0.5 * g + (g / 3.0) * std::cos(angle);
  const double cy = 0.5 * g + (g / 3.0) * std::sin(angle);
  const double sigma = g / 8.0;
  const double freq = static_cast<double>(c + 1);

  Vector t(grid * grid);
  for (int r = 0; r < grid; ++r) {
    for (int col = 0; col < grid; ++col) {
      const double dr = static_cast<double>(r) - cy;
      const double dc = static_cast<double>(col) - cx;
      const double bump = kBumpAmplitude * std::exp(-(dr * dr + dc * dc) / (2.0 * sigma * sigma));
      const double stripe = kStripeAmplitude * 0.5 *
                            (1.0 + std::sin(2.0 * std::numbers::pi * freq * static_cast<double>(r) / g));
      t[r * grid + col] = kBaseLevel + bump + stripe;
    }
  }
  return t;
}

LabeledDataset generate_impl(int classes, int per_class, int grid, double brightness,
                             double noise_sigma, Rng& rng) {
  if (classes < 2) throw ConfigError("generate_dataset: need C >= 2");
  if (per_class < 1) throw ConfigError("generate_dataset: need per_class >= 1");
  LabeledDataset d;
  d.classes = classes;
  d.grid = grid;
  const int n = classes * per_class;
  d.images.resize(n, grid * grid);
  d.labels.resize(static_cast<std::size_t>(n));

  std::vector<Vector> templates;
  templates.reserve(static_cast<std::size_t>(classes));
  for (int c = 0; c < classes; ++c) templates.push_back(class_template(c, classes, grid));

  int row = 0;
  for (int c = 0; c < classes; ++c) {
    for (int k = 0; k < per_class; ++k) {
      for (int p = 0; p < grid * grid; ++p) {
        double v = templates[static_cast<std::size_t>(c)][p] + brightness;
        if (noise_sigma > 0.0) v += noise_sigma * rng.normal();
        d.images(row, p) = std::clamp(v, 0.0, 1.0);
      }
      d.labels[static_cast<std::size_t>(row)] = c;
      ++row;
    }
  }
  return d;
}

}  // namespace

LabeledDataset generate_dataset(int classes, int per_class, int grid, double noise_sigma,
                                Rng& rng) {
  return generate_impl(classes, per_class, grid, 0.0, noise_sigma, rng);
}

SyntheticDataset generate_synthetic(int classes, int per_class, int grid,
                                    const SyntheticShift& shift, Rng& rng) {
  SyntheticDataset s;
  s.shift = shift;
  s.data = generate_impl(classes, per_class, grid, shift.brightness, shift.noise_sigma, rng);
  return s;
}

Partition partition_dataset(const std::vector<int>& labels, int classes, int n_clients,
                            PartitionMode mode, double beta, Rng& rng) {
  const int n = static_cast<int>(labels.size());
  if (n_clients < 1) throw ConfigError("partition: need at least one client");
  if (n_clients > n) throw ConfigError("partition: more clients than samples");

  Partition part;
  part.assignment.assign(static_cast<std::size_t>(n_clients), {});

  if (mode == PartitionMode::Iid) {
    std::vector<int> perm = rng.permutation(n);
    const int base = n / n_clients;
    const int extra = n % n_clients;
    int pos = 0;
    for (int c = 0; c < n_clients; ++c) {
      const int take = base + (c < extra ? 1 : 0);
      auto& list = part.assignment[static_cast<std::size_t>(c)];
      list.assign(perm.begin() + pos, perm.begin() + pos + take);
      pos += take;
    }
  } else {
    if (beta <= 0.0) throw ConfigError("partition: Dirichlet beta must be positive");
    std::vector<std::vector<int>> by_class(static_cast<std::size_t>(classes));
    for (int i = 0; i < n; ++i) by_class[static_cast<std::size_t>(labels[static_cast<std::size_t>(i)])].push_back(i);
    for (int c = 0; c < classes; ++c) {
      std::vector<double> p = rng.dirichlet(beta, n_clients);
      for (int idx : by_class[static_cast<std::size_t>(c)]) {
        part.assignment[static_cast<std::size_t>(rng.categorical(p))].push_back(idx);
      }
    }
    // Repair empty clients: move one sample from the currently largest one.
    for (std::size_t c = 0; c < part.assignment.size(); ++c) {
      while (part.assignment[c].empty()) {
        std::size_t largest = 0;
        for (std::size_t o = 1; o < part.assignment.size(); ++o) {
          if (part.assignment[o].size() > part.assignment[largest].size()) largest = o;
        }
        if (part.assignment[largest].size() <= 1) throw ConfigError("partition: cannot repair empty client");
        part.assignment[c].push_back(part.assignment[largest].back());
        part.assignment[largest].pop_back();
      }
    }
  }
  return part;
}

Vector embed_trigger(const Vector& image, int grid, const PoisonSpec& spec) {
  Vector out = image;
  switch (spec.trigger) {
    case TriggerKind::BadNet: {
      const int k = spec.params.patch;
      if (k < 1 || k > grid) throw ConfigError("embed_trigger: patch exceeds image bounds");
      for (int r = grid - k; r < grid; ++r)
        for (int c = grid - k; c < grid; ++c) out[r * grid + c] = 1.0;
      break;
    }
    case TriggerKind::Blend: {
      const double a = spec.params.blend_alpha;
      Rng pattern_rng(spec.params.blend_seed);
      for (int p = 0; p < grid * grid; ++p) {
        const double pat = pattern_rng.uniform();
        out[p] = std::clamp((1.0 - a) * out[p] + a * pat, 0.0, 1.0);
      }
      break;
    }
    case TriggerKind::Sig: {
      const double amp = spec.params.sig_amplitude;
      const double freq = spec.params.sig_freq;
      for (int r = 0; r < grid; ++r) {
        for (int c = 0; c < grid; ++c) {
          const double wave =
              amp * std::sin(2.0 * std::numbers::pi * freq * static_cast<double>(c) /
                             static_cast<double>(grid));
          out[r * grid + c] = std::clamp(out[r * grid + c] + wave, 0.0, 1.0);
        }
      }
      break;
    }
  }
  return out;
}

std::pair<LabeledDataset, std::vector<int>> poison_dataset(const LabeledDataset& dataset,
                                                           const PoisonSpec& spec, Rng& rng) {
  if (spec.target_class < 0 || spec.target_class >= dataset.classes) {
    throw ConfigError("poison_dataset: target class out of range");
  }
  if (spec.ratio < 0.0 || spec.ratio > 1.0) throw ConfigError("poison_dataset: ratio outside [0,1]");

  LabeledDataset out = dataset;
  std::vector<int> poisoned;

  std::vector<std::vector<int>> by_class(static_cast<std::size_t>(dataset.classes));
  for (int i = 0; i < dataset.size(); ++i) {
    by_class[static_cast<std::size_t>(dataset.labels[static_cast<std::size_t>(i)])].push_back(i);
  }
  for (int c = 0; c < dataset.classes; ++c) {
    if (c == spec.target_class) continue;
    const auto& pool = by_class[static_cast<std::size_t>(c)];
    const int count = static_cast<int>(std::floor(spec.ratio * static_cast<double>(pool.size())));
    if (count == 0) continue;
    std::vector<int> chosen = rng.sample_without_replacement(static_cast<int>(pool.size()), count);
    for (int pick : chosen) {
      const int idx = pool[static_cast<std::size_t>(pick)];
      Vector img = out.images.row(idx).transpose();
      out.images.row(idx) = embed_trigger(img, dataset.grid, spec).transpose();
      out.labels[static_cast<std::size_t>(idx)] = spec.target_class;
      poisoned.push_back(idx);
    }
  }
  std::sort(poisoned.begin(), poisoned.end());
  return {std::move(out), std::move(poisoned)};
}

LabeledDataset make_asr_testset(const LabeledDataset& clean_test, const PoisonSpec& spec) {
  LabeledDataset out;
  out.classes = clean_test.classes;
  out.grid = clean_test.grid;
  int keep = 0;
  for (int label : clean_test.labels) {
    if (label != spec.target_class) ++keep;
  }
  out.images.resize(keep, clean_test.images.cols());
  out.labels.reserve(static_cast<std::size_t>(keep));
  int row = 0;
  for (int i = 0; i < clean_test.size(); ++i) {
    if (clean_test.labels[static_cast<std::size_t>(i)] == spec.target_class) continue;
    Vector img = clean_test.images.row(i).transpose();
    out.images.row(row) = embed_trigger(img, clean_test.grid, spec).transpose();
    out.labels.push_back(clean_test.labels[static_cast<std::size_t>(i)]);
    ++row;
  }
  return out;
}

void dump_dataset(const std::filesystem::path& path, const LabeledDataset& dataset,
                  const std::string& sidecar_json) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("dump_dataset: cannot open " + path.string());
  auto put_u32 = [&](std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); };
  put_u32(kDatasetMagic);
  put_u32(static_cast<std::uint32_t>(dataset.grid));
  put_u32(static_cast<std::uint32_t>(dataset.classes));
  const std::uint64_t n = static_cast<std::uint64_t>(dataset.size());
  out.write(reinterpret_cast<const char*>(&n), 8);
  out.write(reinterpret_cast<const char*>(dataset.images.data()),
            static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(dataset.images.size())));
  for (int label : dataset.labels) {
    const std::int32_t l32 = label;
    out.write(reinterpret_cast<const char*>(&l32), 4);
  }
  if (!out) throw std::runtime_error("dump_dataset: write failed for " + path.string());

  std::ofstream side(path.string() + ".json");
  side << sidecar_json << "\n";
}

LabeledDataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_dataset: cannot open " + path.string());
  auto get_u32 = [&]() {
    std::uint32_t v = 0;
    in.read(reinterpret_cast<char*>(&v), 4);
    return v;
  };
  if (get_u32() != kDatasetMagic) throw std::runtime_error("load_dataset: bad magic in " + path.string());
  LabeledDataset d;
  d.grid = static_cast<int>(get_u32());
  d.classes = static_cast<int>(get_u32());
  std::uint64_t n = 0;
  in.read(reinterpret_cast<char*>(&n), 8);
  d.images.resize(static_cast<Eigen::Index>(n), d.grid * d.grid);
  in.read(reinterpret_cast<char*>(d.images.data()),
          static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(d.images.size())));
  d.labels.resize(n);
  for (auto& label : d.labels) {
    std::int32_t l32 = 0;
    in.read(reinterpret_cast<char*>(&l32), 4);
    label = l32;
  }
  if (!in) throw std::runtime_error("load_dataset: truncated file " + path.string());
  return d;
}

}  // namespace fedsim
