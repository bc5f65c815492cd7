#include "privshield/data.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>

#include "privshield/image.hpp"
#include "privshield/rng.hpp"

namespace privshield {

namespace fs = std::filesystem;

void Dataset::validate() const {
  std::vector<long> per_identity(n_identities, 0);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const Sample& s = samples[i];
    check(static_cast<int>(s.attributes.size()) == k,
          "sample " + std::to_string(i) + ": attribute arity " +
              std::to_string(s.attributes.size()) + " != k=" + std::to_string(k));
    check(s.identity >= 0 && s.identity < n_identities,
          "sample " + std::to_string(i) + ": identity out of range");
    ++per_identity[s.identity];
    check(s.image.rank() == 3 && s.image.dim(0) == channels &&
              s.image.dim(1) == image_size && s.image.dim(2) == image_size,
          "sample " + std::to_string(i) + ": image shape " + s.image.shape_str());
    for (std::size_t j = 0; j < s.image.size(); ++j)
      check(s.image[j] >= real(0) && s.image[j] <= real(1),
            "sample " + std::to_string(i) + ": pixel outside [0,1]");
  }
  for (int id = 0; id < n_identities; ++id)
    check(per_identity[id] > 0,
          "identity labels not contiguous: id " + std::to_string(id) + " unused");
}

namespace {

// Cue band geometry shared by the renderer and the oracle.
struct CueBand {
  int band_h, cell_w;
};

CueBand cue_band(int image_size, int k) {
  CueBand b;
  b.band_h = std::max(2, image_size / 8);
  b.cell_w = image_size / k;
  return b;
}

struct IdentityStyle {
  real bg[3];
  real bg_slope[3];
  real head[3];
  real cx, cy, rx, ry;
  real stripe_freq, stripe_phase, stripe_amp;
  int stripe_channel;
};

IdentityStyle identity_style(const SynthConfig& cfg, int id) {
  Rng rng(derive_seed(cfg.seed, "identity", static_cast<std::uint64_t>(id)));
  IdentityStyle st;
  for (int c = 0; c < 3; ++c) {
    st.bg[c] = rng.uniform(0.10, 0.35);
    st.bg_slope[c] = rng.uniform(-0.15, 0.15);
    st.head[c] = rng.uniform(0.35, 0.80);
  }
  const real s = cfg.image_size;
  const int band_h = cue_band(cfg.image_size, cfg.k_attributes).band_h;
  const real usable = s - band_h;  // keep the head clear of the cue band
  st.cx = rng.uniform(0.38, 0.62) * s;
  st.cy = rng.uniform(0.32, 0.55) * usable;
  st.rx = rng.uniform(0.16, 0.30) * s;
  st.ry = rng.uniform(0.16, 0.30) * usable;
  st.stripe_freq = rng.uniform(2.0, 5.0);
  st.stripe_phase = rng.uniform(0.0, 6.28318530717958647692);
  st.stripe_amp = rng.uniform(0.06, 0.14);
  st.stripe_channel = static_cast<int>(rng.uniform_int(3));
  return st;
}

Sample render_sample(const SynthConfig& cfg, int id, int sample_idx) {
  const IdentityStyle st = identity_style(cfg, id);
  Rng rng(derive_seed(cfg.seed, "sample",
                      static_cast<std::uint64_t>(id) * 1000003ULL +
                          static_cast<std::uint64_t>(sample_idx)));

  Sample s;
  s.identity = id;
  s.attributes.resize(cfg.k_attributes);
  for (int j = 0; j < cfg.k_attributes; ++j)
    s.attributes[j] = rng.uniform() < 0.5 ? 0 : 1;

  const int S = cfg.image_size, C = cfg.channels;
  const real jx = std::floor(rng.uniform(-1.5, 1.5));
  const real jy = std::floor(rng.uniform(-1.5, 1.5));
  const real illum = rng.uniform(0.95, 1.05);
  const CueBand band = cue_band(S, cfg.k_attributes);

  s.image = Tensor({C, S, S});
  for (int y = 0; y < S; ++y) {
    for (int x = 0; x < S; ++x) {
      const real dx = (x - (st.cx + jx)) / st.rx;
      const real dy = (y - (st.cy + jy)) / st.ry;
      const bool in_head = dx * dx + dy * dy <= 1.0;
      const real stripe =
          std::sin(st.stripe_freq * 6.28318530717958647692 * y / S +
                   st.stripe_phase);
      for (int c = 0; c < C; ++c) {
        real v = st.bg[c % 3] + st.bg_slope[c % 3] * (real(x) / S);
        if (in_head) {
          v = st.head[c % 3];
          if (c % 3 == st.stripe_channel) v += st.stripe_amp * stripe;
        }
        s.image.at({c, y, x}) = v;
      }
    }
  }

  // Attribute cue cells along the bottom band.
  const int y0 = S - band.band_h;
  for (int j = 0; j < cfg.k_attributes; ++j) {
    const int x0 = j * band.cell_w;
    const int x1 = (j + 1 == cfg.k_attributes) ? S : x0 + band.cell_w;
    const int hot = j % C;
    for (int y = y0; y < S; ++y)
      for (int x = x0; x < x1; ++x)
        for (int c = 0; c < C; ++c) {
          real v;
          if (s.attributes[j])
            v = (c == hot) ? real(0.90) : real(0.15);
          else
            v = real(0.10);
          s.image.at({c, y, x}) = v;
        }
  }

  // Illumination, noise, clamp.
  for (std::size_t i = 0; i < s.image.size(); ++i) {
    real v = s.image[i] * illum + rng.normal(0.0, 0.02);
    s.image[i] = std::min(std::max(v, real(0)), real(1));
  }
  return s;
}

}  // namespace

Dataset generate_synthetic(const SynthConfig& cfg) {
  check(cfg.n_identities > 0 && cfg.samples_per_identity > 0,
        "synthetic config: counts must be positive");
  check(cfg.k_attributes >= 1, "synthetic config: k_attributes must be >= 1");
  check(cfg.channels == 1 || cfg.channels == 3,
        "synthetic config: channels must be 1 or 3");
  check(cfg.image_size >= 16,
        "synthetic config: image_size must be >= 16 to place attribute cues");
  check(cfg.k_attributes <= cfg.image_size / 2,
        "synthetic config: k_attributes > image_size/2 leaves cue cells under "
        "2px wide");

  Dataset ds;
  ds.k = cfg.k_attributes;
  ds.channels = cfg.channels;
  ds.image_size = cfg.image_size;
  ds.n_identities = cfg.n_identities;
  ds.samples.reserve(static_cast<std::size_t>(cfg.n_identities) *
                     cfg.samples_per_identity);
  for (int id = 0; id < cfg.n_identities; ++id)
    for (int i = 0; i < cfg.samples_per_identity; ++i)
      ds.samples.push_back(render_sample(cfg, id, i));
  return ds;
}

std::vector<std::uint8_t> attribute_oracle(const Tensor& image, int k) {
  check(image.rank() == 3, "attribute_oracle: image must be [C,H,W]");
  const int C = image.dim(0), S = image.dim(1);
  check(image.dim(2) == S, "attribute_oracle: image must be square");
  const CueBand band = cue_band(S, k);
  std::vector<std::uint8_t> bits(k);
  const int y0 = S - band.band_h;
  for (int j = 0; j < k; ++j) {
    const int x0 = j * band.cell_w;
    const int x1 = (j + 1 == k) ? S : x0 + band.cell_w;
    const int hot = j % C;
    real sum = 0;
    int count = 0;
    for (int y = y0; y < S; ++y)
      for (int x = x0; x < x1; ++x) {
        sum += image.at({hot, y, x});
        ++count;
      }
    bits[j] = (sum / count) > real(0.5) ? 1 : 0;
  }
  return bits;
}

namespace {

std::vector<std::string> split_csv_row(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  fields.push_back(cur);
  return fields;
}

}  // namespace

Dataset load_manifest(const std::string& manifest_path) {
  std::ifstream in(manifest_path);
  check(in.good(), "cannot open manifest: " + manifest_path);
  const fs::path base = fs::path(manifest_path).parent_path();

  std::string line;
  check(static_cast<bool>(std::getline(in, line)), "manifest is empty: " + manifest_path);
  const auto header = split_csv_row(line);
  check(header.size() >= 3 && header[0] == "path" && header[1] == "identity",
        "manifest header must be path,identity,attr_0,...: " + manifest_path);
  const int k = static_cast<int>(header.size()) - 2;
  for (int j = 0; j < k; ++j)
    check(header[2 + j] == "attr_" + std::to_string(j),
          "manifest header: expected attr_" + std::to_string(j) + ", got " +
              header[2 + j]);

  Dataset ds;
  ds.k = k;
  long row_no = 1;
  while (std::getline(in, line)) {
    ++row_no;
    if (line.empty()) continue;
    const auto fields = split_csv_row(line);
    const std::string where = "manifest row " + std::to_string(row_no);
    check(static_cast<int>(fields.size()) == k + 2,
          where + ": expected " + std::to_string(k + 2) + " columns, got " +
              std::to_string(fields.size()));
    Sample s;
    try {
      s.identity = std::stoi(fields[1]);
    } catch (const std::exception&) {
      throw Error(where + ": malformed identity '" + fields[1] + "'");
    }
    check(s.identity >= 0, where + ": identity must be non-negative");
    s.attributes.resize(k);
    for (int j = 0; j < k; ++j) {
      const std::string& f = fields[2 + j];
      check(f == "0" || f == "1",
            where + ": attribute attr_" + std::to_string(j) +
                " must be 0 or 1, got '" + f + "'");
      s.attributes[j] = (f == "1");
    }
    const fs::path img_path = base / fields[0];
    check(fs::exists(img_path), where + ": missing image file " + img_path.string());
    s.image = read_png(img_path.string());
    if (ds.samples.empty()) {
      ds.channels = s.image.dim(0);
      ds.image_size = s.image.dim(1);
      check(s.image.dim(1) == s.image.dim(2),
            where + ": images must be square");
    } else {
      check(s.image.dim(0) == ds.channels && s.image.dim(1) == ds.image_size &&
                s.image.dim(2) == ds.image_size,
            where + ": image shape " + s.image.shape_str() +
                " differs from first image");
    }
    ds.samples.push_back(std::move(s));
  }
  check(!ds.samples.empty(), "manifest has no data rows: " + manifest_path);

  std::set<int> ids;
  int max_id = 0;
  for (const Sample& s : ds.samples) {
    ids.insert(s.identity);
    max_id = std::max(max_id, s.identity);
  }
  check(static_cast<int>(ids.size()) == max_id + 1,
        "identity labels must be contiguous from 0; found " +
            std::to_string(ids.size()) + " distinct ids with max " +
            std::to_string(max_id));
  ds.n_identities = max_id + 1;
  return ds;
}

void save_dataset(const Dataset& ds, const std::string& directory) {
  fs::create_directories(directory);
  std::ofstream out(fs::path(directory) / "manifest.csv");
  check(out.good(), "cannot create manifest in " + directory);
  out << "path,identity";
  for (int j = 0; j < ds.k; ++j) out << ",attr_" << j;
  out << "\n";
  char name[32];
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    const Sample& s = ds.samples[i];
    std::snprintf(name, sizeof name, "img_%06zu.png", i);
    write_png((fs::path(directory) / name).string(), s.image);
    out << name << ',' << s.identity;
    for (int j = 0; j < ds.k; ++j) out << ',' << int(s.attributes[j]);
    out << "\n";
  }
}

const char* split_role_name(SplitRole role) {
  switch (role) {
    case SplitRole::Private: return "private";
    case SplitRole::Adversary: return "adversary";
    case SplitRole::Test: return "test";
  }
  return "?";
}

DatasetSplit::DatasetSplit(SplitRole role, std::shared_ptr<const Dataset> source,
                           std::vector<std::size_t> indices)
    : role_(role), source_(std::move(source)), indices_(std::move(indices)) {
  check(source_ != nullptr, "split: null dataset");
  for (std::size_t i : indices_)
    check(i < source_->samples.size(), "split: index out of range");
}

namespace {

// Largest-remainder rounding keeps each part within one sample of f_i * n.
std::array<std::size_t, 3> split_sizes(std::size_t n, double f1, double f2,
                                       double ft) {
  const double targets[3] = {f1 * n, f2 * n, ft * n};
  std::array<std::size_t, 3> sizes;
  double fracs[3];
  std::size_t assigned = 0;
  for (int i = 0; i < 3; ++i) {
    sizes[i] = static_cast<std::size_t>(std::floor(targets[i]));
    fracs[i] = targets[i] - std::floor(targets[i]);
    assigned += sizes[i];
  }
  std::size_t want = static_cast<std::size_t>(std::llround(targets[0] + targets[1] + targets[2]));
  want = std::min(want, n);
  while (assigned < want) {
    int best = 0;
    for (int i = 1; i < 3; ++i)
      if (fracs[i] > fracs[best]) best = i;
    ++sizes[best];
    fracs[best] = -1;
    ++assigned;
  }
  return sizes;
}

}  // namespace

SplitSet split_dataset(std::shared_ptr<const Dataset> dataset, double f1,
                       double f2, double ft, std::uint64_t seed,
                       bool identity_disjoint) {
  check(dataset != nullptr, "split_dataset: null dataset");
  const std::size_t n = dataset->samples.size();
  check(f1 > 0 && f2 > 0 && ft > 0, "split fractions must be positive");
  check(f1 + f2 + ft <= 1.0 + 1e-9,
        "split fractions sum to " + std::to_string(f1 + f2 + ft) + " > 1");

  const auto sizes = split_sizes(n, f1, f2, ft);
  std::vector<std::vector<std::size_t>> parts(3);

  if (!identity_disjoint) {
    Rng rng(derive_seed(seed, "split"));
    const auto perm = rng.permutation(n);
    std::size_t off = 0;
    for (int p = 0; p < 3; ++p) {
      parts[p].assign(perm.begin() + off, perm.begin() + off + sizes[p]);
      off += sizes[p];
    }
  } else {
    // Assign whole identities until each split's quota is reached.
    std::vector<std::vector<std::size_t>> by_identity(dataset->n_identities);
    for (std::size_t i = 0; i < n; ++i)
      by_identity[dataset->samples[i].identity].push_back(i);
    Rng rng(derive_seed(seed, "split-id"));
    const auto id_perm = rng.permutation(by_identity.size());
    std::size_t part = 0;
    for (std::size_t pi : id_perm) {
      while (part < 2 && parts[part].size() >= sizes[part]) ++part;
      if (part == 2 && parts[2].size() >= sizes[2]) break;
      auto& dst = parts[part];
      dst.insert(dst.end(), by_identity[pi].begin(), by_identity[pi].end());
    }
  }

  for (int p = 0; p < 3; ++p) {
    check(!parts[p].empty(), std::string("split '") +
                                 split_role_name(static_cast<SplitRole>(p)) +
                                 "' is empty");
    std::sort(parts[p].begin(), parts[p].end());
  }

  SplitSet s;
  s.x1 = DatasetSplit(SplitRole::Private, dataset, std::move(parts[0]));
  s.x2 = DatasetSplit(SplitRole::Adversary, dataset, std::move(parts[1]));
  s.test = DatasetSplit(SplitRole::Test, dataset, std::move(parts[2]));
  s.identity_disjoint = identity_disjoint;
  return s;
}

void merge_extra_data(SplitSet& splits, const Dataset& extra, bool also_x1) {
  const Dataset& base = splits.x1.dataset();
  check(extra.k == base.k && extra.channels == base.channels &&
            extra.image_size == base.image_size,
        "extra dataset is incompatible with the base dataset");
  auto merged = std::make_shared<Dataset>(base);
  const std::size_t n0 = merged->samples.size();
  // Extra identities are appended after the base label space.
  for (Sample s : extra.samples) {
    s.identity += base.n_identities;
    merged->samples.push_back(std::move(s));
  }
  merged->n_identities = base.n_identities + extra.n_identities;

  std::vector<std::size_t> extra_idx(extra.samples.size());
  std::iota(extra_idx.begin(), extra_idx.end(), n0);

  auto extend = [&](const DatasetSplit& old, bool add) {
    std::vector<std::size_t> idx = old.indices();
    if (add) idx.insert(idx.end(), extra_idx.begin(), extra_idx.end());
    return DatasetSplit(old.role(), merged, std::move(idx));
  };
  splits.x2 = extend(splits.x2, true);
  splits.x1 = extend(splits.x1, also_x1);
  splits.test = extend(splits.test, false);
}

Batch make_batch(const DatasetSplit& split,
                 const std::vector<std::size_t>& positions) {
  check(!positions.empty(), "make_batch: empty position list");
  const Dataset& ds = split.dataset();
  const int b = static_cast<int>(positions.size());
  Batch batch;
  batch.images = Tensor({b, ds.channels, ds.image_size, ds.image_size});
  batch.attributes = Tensor({b, ds.k});
  batch.identities.resize(b);
  const std::size_t img_sz = static_cast<std::size_t>(ds.channels) *
                             ds.image_size * ds.image_size;
  for (int i = 0; i < b; ++i) {
    const Sample& s = split.sample(positions[i]);
    std::copy(s.image.data(), s.image.data() + img_sz,
              batch.images.data() + i * img_sz);
    for (int j = 0; j < ds.k; ++j)
      batch.attributes.at({i, j}) = s.attributes[j];
    batch.identities[i] = s.identity;
  }
  return batch;
}

Batch full_batch(const DatasetSplit& split) {
  std::vector<std::size_t> pos(split.size());
  std::iota(pos.begin(), pos.end(), 0);
  return make_batch(split, pos);
}

BatchIterator::BatchIterator(const DatasetSplit& split, int batch_size,
                             std::uint64_t shuffle_seed)
    : split_(&split), batch_size_(batch_size), seed_(shuffle_seed) {
  check(batch_size >= 1, "batch_size must be >= 1");
  check(split.size() > 0, "cannot iterate an empty split");
}

int BatchIterator::batches_per_epoch() const {
  return static_cast<int>((split_->size() + batch_size_ - 1) / batch_size_);
}

void BatchIterator::reshuffle() {
  ++epoch_;
  Rng rng(derive_seed(seed_, "epoch", static_cast<std::uint64_t>(epoch_)));
  order_ = rng.permutation(split_->size());
  cursor_ = 0;
}

Batch BatchIterator::next() {
  if (epoch_ < 0 || cursor_ >= order_.size()) reshuffle();
  const std::size_t end =
      std::min(cursor_ + static_cast<std::size_t>(batch_size_), order_.size());
  std::vector<std::size_t> positions(order_.begin() + cursor_,
                                     order_.begin() + end);
  cursor_ = end;
  return make_batch(*split_, positions);
}

}  // namespace privshield
