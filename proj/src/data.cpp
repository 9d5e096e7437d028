#include "wta/data.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "wta/rng.hpp"

namespace wta {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

template <typename T>
bool parse_int(std::string_view field, T& out) {
  field = trim(field);
  if (!field.empty() && field.front() == '+') field.remove_prefix(1);
  const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), out);
  return ec == std::errc() && ptr == field.data() + field.size();
}

}  // namespace

std::vector<EventRecord> parse_events(const std::string& text) {
  std::vector<EventRecord> events;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view view = line;
    if (const auto hash = view.find('#'); hash != std::string_view::npos) view = view.substr(0, hash);
    view = trim(view);
    if (view.empty()) continue;

    std::array<std::string_view, 4> fields;
    std::size_t count = 0;
    while (true) {
      const auto comma = view.find(',');
      if (count == fields.size()) { count = fields.size() + 1; break; }
      fields[count++] = view.substr(0, comma);
      if (comma == std::string_view::npos) break;
      view.remove_prefix(comma + 1);
    }
    const std::string where = "line " + std::to_string(line_no);
    if (count != 4) throw DataError(where + ": expected 4 comma-separated fields");
    EventRecord ev;
    if (!parse_int(fields[0], ev.timestamp_us) || !parse_int(fields[1], ev.x) ||
        !parse_int(fields[2], ev.y) || !parse_int(fields[3], ev.polarity)) {
      throw DataError(where + ": malformed integer field");
    }
    if (ev.polarity != -1 && ev.polarity != 1) {
      throw DataError(where + ": polarity must be -1 or +1");
    }
    if (ev.x < 0 || ev.y < 0) throw DataError(where + ": negative pixel coordinate");
    events.push_back(ev);
  }
  std::stable_sort(events.begin(), events.end(), [](const EventRecord& a, const EventRecord& b) {
    return a.timestamp_us < b.timestamp_us;
  });
  return events;
}

std::vector<EventRecord> load_events(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open event file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  try {
    return parse_events(buf.str());
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

void write_events(const fs::path& path, const std::vector<EventRecord>& events) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write event file " + path.string());
  out << "# timestamp_us,x,y,polarity\n";
  for (const auto& e : events) {
    out << e.timestamp_us << ',' << e.x << ',' << e.y << ',' << e.polarity << '\n';
  }
}

FrameStack::FrameStack(int steps_, int width_, int height_)
    : steps(steps_), width(width_), height(height_),
      values(static_cast<std::size_t>(steps_) * width_ * height_, 0) {}

FrameStack accumulate_events(const std::vector<EventRecord>& events, std::int64_t period_us,
                             int steps, int width, int height) {
  if (period_us <= 0) throw DataError("sampling period must be positive");
  if (steps < 0 || width < 1 || height < 1) throw DataError("invalid frame geometry");
  FrameStack sums(steps, width, height);
  for (const auto& e : events) {
    if (e.timestamp_us < 0) continue;
    const std::int64_t window = e.timestamp_us / period_us;
    if (window >= steps) continue;
    if (e.x >= width || e.y >= height) {
      throw DataError("event at (" + std::to_string(e.x) + "," + std::to_string(e.y) +
                      ") outside " + std::to_string(width) + "x" + std::to_string(height));
    }
    sums.at(static_cast<int>(window), e.x, e.y) += e.polarity;
  }
  return sums;
}

FrameStack sign_frames(const FrameStack& sums) {
  FrameStack out = sums;
  for (int& v : out.values) v = (v > 0) - (v < 0);
  return out;
}

FrameStack bin_events(const std::vector<EventRecord>& events, std::int64_t period_us, int steps,
                      int width, int height) {
  return sign_frames(accumulate_events(events, period_us, steps, width, height));
}

FrameStack spatial_pool(const FrameStack& frames, int factor) {
  if (factor < 1) throw DataError("pooling factor must be >= 1");
  if (frames.width % factor != 0 || frames.height % factor != 0) {
    throw DataError("frame dimensions not divisible by pooling factor");
  }
  FrameStack out(frames.steps, frames.width / factor, frames.height / factor);
  for (int t = 0; t < frames.steps; ++t) {
    for (int y = 0; y < frames.height; ++y) {
      for (int x = 0; x < frames.width; ++x) {
        out.at(t, x / factor, y / factor) += frames.at(t, x, y);
      }
    }
  }
  return out;
}

std::vector<EventRecord> center_crop(const std::vector<EventRecord>& events, int in_w, int in_h,
                                     int out_w, int out_h) {
  if (out_w > in_w || out_h > in_h || out_w < 1 || out_h < 1) {
    throw DataError("center crop larger than the sensor");
  }
  const int x0 = (in_w - out_w) / 2;
  const int y0 = (in_h - out_h) / 2;
  std::vector<EventRecord> out;
  for (const auto& e : events) {
    const int x = e.x - x0;
    const int y = e.y - y0;
    if (x < 0 || y < 0 || x >= out_w || y >= out_h) continue;
    out.push_back({e.timestamp_us, x, y, e.polarity});
  }
  return out;
}

void EncodedSequence::validate() const {
  if (symbols.size() != static_cast<std::size_t>(steps) * sizes.size()) {
    throw DataError("encoded sequence size mismatch");
  }
  for (int t = 0; t < steps; ++t) {
    for (int n = 0; n < circuits(); ++n) {
      if (!at(t, n).valid_for(sizes[static_cast<std::size_t>(n)])) {
        throw DataError("encoded symbol out of range");
      }
    }
  }
}

Encoding parse_encoding(const std::string& name) {
  if (name == "wta") return Encoding::Wta;
  if (name == "unsigned") return Encoding::Unsigned;
  if (name == "per_sign") return Encoding::PerSign;
  throw std::invalid_argument("unknown encoding '" + name + "'");
}

std::string to_string(Encoding encoding) {
  switch (encoding) {
    case Encoding::Wta: return "wta";
    case Encoding::Unsigned: return "unsigned";
    case Encoding::PerSign: return "per_sign";
  }
  return "wta";
}

std::vector<int> encoded_sizes(Encoding encoding, int pixels) {
  switch (encoding) {
    case Encoding::Wta: return std::vector<int>(static_cast<std::size_t>(pixels), 2);
    case Encoding::Unsigned: return std::vector<int>(static_cast<std::size_t>(pixels), 1);
    case Encoding::PerSign: return std::vector<int>(static_cast<std::size_t>(2 * pixels), 1);
  }
  return {};
}

namespace {

EncodedSequence blank_sequence(const FrameStack& frames, Encoding encoding, int label) {
  EncodedSequence seq;
  seq.steps = frames.steps;
  seq.sizes = encoded_sizes(encoding, frames.pixels());
  seq.symbols.assign(static_cast<std::size_t>(frames.steps) * seq.sizes.size(), SpikeSymbol::silence());
  seq.label = label;
  return seq;
}

void check_signed(int v) {
  if (v < -1 || v > 1) throw DataError("encoders expect signed frames in {-1, 0, +1}");
}

}  // namespace

EncodedSequence encode_wta(const FrameStack& frames, int label) {
  EncodedSequence seq = blank_sequence(frames, Encoding::Wta, label);
  for (int t = 0; t < frames.steps; ++t) {
    for (int p = 0; p < frames.pixels(); ++p) {
      const int v = frames.pixel(t, p);
      check_signed(v);
      if (v < 0) seq.at(t, p) = SpikeSymbol::unit(1);
      if (v > 0) seq.at(t, p) = SpikeSymbol::unit(2);
    }
  }
  return seq;
}

EncodedSequence encode_unsigned(const FrameStack& frames, int label) {
  EncodedSequence seq = blank_sequence(frames, Encoding::Unsigned, label);
  for (int t = 0; t < frames.steps; ++t) {
    for (int p = 0; p < frames.pixels(); ++p) {
      const int v = frames.pixel(t, p);
      check_signed(v);
      if (v != 0) seq.at(t, p) = SpikeSymbol::unit(1);
    }
  }
  return seq;
}

EncodedSequence encode_per_sign(const FrameStack& frames, int label) {
  EncodedSequence seq = blank_sequence(frames, Encoding::PerSign, label);
  for (int t = 0; t < frames.steps; ++t) {
    for (int p = 0; p < frames.pixels(); ++p) {
      const int v = frames.pixel(t, p);
      check_signed(v);
      if (v < 0) seq.at(t, 2 * p) = SpikeSymbol::unit(1);
      if (v > 0) seq.at(t, 2 * p + 1) = SpikeSymbol::unit(1);
    }
  }
  return seq;
}

EncodedSequence encode(const FrameStack& frames, Encoding encoding, int label) {
  switch (encoding) {
    case Encoding::Wta: return encode_wta(frames, label);
    case Encoding::Unsigned: return encode_unsigned(frames, label);
    case Encoding::PerSign: return encode_per_sign(frames, label);
  }
  return encode_wta(frames, label);
}

FrameStack decode_wta(const EncodedSequence& seq, int width, int height) {
  if (seq.circuits() != width * height) throw DataError("decode_wta: geometry mismatch");
  FrameStack frames(seq.steps, width, height);
  for (int t = 0; t < seq.steps; ++t) {
    for (int p = 0; p < seq.circuits(); ++p) {
      const int c = seq.at(t, p).index();
      frames.pixel(t, p) = c == 1 ? -1 : (c == 2 ? 1 : 0);
    }
  }
  return frames;
}

namespace {

void put_u32(std::ostream& out, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) throw DataError("truncated encoded sequence");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

void write_encoded(const fs::path& path, const EncodedSequence& seq) {
  seq.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out.write("WSEQ", 4);
  put_u32(out, static_cast<std::uint32_t>(seq.steps));
  put_u32(out, static_cast<std::uint32_t>(seq.sizes.size()));
  for (int c : seq.sizes) out.put(static_cast<char>(c));
  put_u32(out, static_cast<std::uint32_t>(seq.label));
  for (SpikeSymbol s : seq.symbols) out.put(static_cast<char>(s.index()));
}

EncodedSequence read_encoded(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  char magic[4];
  if (!in.read(magic, 4) || std::string(magic, 4) != "WSEQ") {
    throw DataError(path.string() + ": not an encoded sequence");
  }
  EncodedSequence seq;
  seq.steps = static_cast<int>(get_u32(in));
  const std::uint32_t n = get_u32(in);
  seq.sizes.resize(n);
  for (auto& c : seq.sizes) {
    const int v = in.get();
    if (v == EOF) throw DataError("truncated encoded sequence");
    c = v;
  }
  seq.label = static_cast<int>(static_cast<std::int32_t>(get_u32(in)));
  seq.symbols.resize(static_cast<std::size_t>(seq.steps) * n);
  for (auto& s : seq.symbols) {
    const int v = in.get();
    if (v == EOF) throw DataError("truncated encoded sequence");
    s = v == 0 ? SpikeSymbol::silence() : SpikeSymbol::unit(v);
  }
  seq.validate();
  return seq;
}

int DatasetManifest::steps() const {
  return static_cast<int>(std::llround(crop_ms * 1000.0 / static_cast<double>(period_us)));
}

void DatasetManifest::validate() const {
  if (period_us <= 0) throw DataError("manifest: period_us must be positive");
  if (crop_ms <= 0.0) throw DataError("manifest: crop_ms must be positive");
  if (steps() < 1) throw DataError("manifest: crop shorter than one sampling period");
  if (width < 1 || height < 1) throw DataError("manifest: invalid geometry");
  if (num_classes < 1) throw DataError("manifest: num_classes must be >= 1");
  if (pool < 1) throw DataError("manifest: pool must be >= 1");
  const int w = crop_width.value_or(width);
  const int h = crop_height.value_or(height);
  if (w > width || h > height) throw DataError("manifest: crop exceeds sensor size");
  if (w % pool != 0 || h % pool != 0) throw DataError("manifest: crop not divisible by pool");
  for (const auto& e : examples) {
    if (e.label < 0 || e.label >= num_classes) {
      throw DataError("manifest: label " + std::to_string(e.label) + " outside class count");
    }
  }
}

DatasetManifest load_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest " + path.string());
  DatasetManifest m;
  try {
    const json j = json::parse(in);
    m.split = j.value("split", "train");
    m.period_us = j.at("period_us").get<std::int64_t>();
    m.crop_ms = j.at("crop_ms").get<double>();
    m.width = j.at("width").get<int>();
    m.height = j.at("height").get<int>();
    m.num_classes = j.at("num_classes").get<int>();
    m.pool = j.value("pool", 1);
    if (j.contains("crop_width") && !j["crop_width"].is_null()) m.crop_width = j["crop_width"].get<int>();
    if (j.contains("crop_height") && !j["crop_height"].is_null()) m.crop_height = j["crop_height"].get<int>();
    for (const auto& e : j.at("examples")) {
      m.examples.push_back({e.at("file").get<std::string>(), e.at("label").get<int>()});
    }
  } catch (const json::exception& e) {
    throw DataError("manifest " + path.string() + ": " + e.what());
  }
  m.base_dir = path.parent_path();
  m.validate();
  return m;
}

void save_manifest(const fs::path& path, const DatasetManifest& m) {
  json j;
  j["split"] = m.split;
  j["period_us"] = m.period_us;
  j["crop_ms"] = m.crop_ms;
  j["width"] = m.width;
  j["height"] = m.height;
  j["num_classes"] = m.num_classes;
  j["pool"] = m.pool;
  if (m.crop_width) j["crop_width"] = *m.crop_width;
  if (m.crop_height) j["crop_height"] = *m.crop_height;
  json list = json::array();
  for (const auto& e : m.examples) list.push_back({{"file", e.file}, {"label", e.label}});
  j["examples"] = std::move(list);
  std::ofstream out(path);
  if (!out) throw DataError("cannot write manifest " + path.string());
  out << j.dump(1) << '\n';
}

FrameStack preprocess(const std::vector<EventRecord>& events, const DatasetManifest& m) {
  const int w = m.crop_width.value_or(m.width);
  const int h = m.crop_height.value_or(m.height);
  const std::vector<EventRecord> cropped =
      (w != m.width || h != m.height) ? center_crop(events, m.width, m.height, w, h) : events;
  FrameStack sums = accumulate_events(cropped, m.period_us, m.steps(), w, h);
  if (m.pool > 1) sums = spatial_pool(sums, m.pool);
  return sign_frames(sums);
}

std::vector<EncodedSequence> load_dataset(const DatasetManifest& m, Encoding encoding) {
  if (m.examples.empty()) throw DataError("manifest lists no examples");
  const auto n = static_cast<long>(m.examples.size());
  std::vector<EncodedSequence> out(m.examples.size());
  std::vector<std::string> errors(m.examples.size());
#pragma omp parallel for schedule(dynamic)
  for (long k = 0; k < n; ++k) {
    const auto& entry = m.examples[static_cast<std::size_t>(k)];
    try {
      fs::path file = entry.file;
      if (file.is_relative()) file = m.base_dir / file;
      out[static_cast<std::size_t>(k)] = encode(preprocess(load_events(file), m), encoding, entry.label);
    } catch (const std::exception& e) {
      errors[static_cast<std::size_t>(k)] = e.what();
    }
  }
  for (const auto& err : errors) {
    if (!err.empty()) throw DataError(err);
  }
  return out;
}

namespace {

// Marks each (pixel, step) active with probability event_rate, then shifts
// every active entry by one step with probability jitter_prob.
std::vector<std::vector<bool>> draw_mask(const SynthOptions& o, RngStream& rng) {
  std::vector<std::vector<bool>> mask(static_cast<std::size_t>(o.pixels),
                                      std::vector<bool>(static_cast<std::size_t>(o.steps), false));
  for (int p = 0; p < o.pixels; ++p) {
    for (int t = 0; t < o.steps; ++t) {
      if (rng.uniform() >= o.event_rate) continue;
      int tt = t;
      if (rng.uniform() < o.jitter_prob) tt += rng.uniform() < 0.5 ? -1 : 1;
      tt = std::clamp(tt, 0, o.steps - 1);
      mask[static_cast<std::size_t>(p)][static_cast<std::size_t>(tt)] = true;
    }
  }
  return mask;
}

bool mask_separates(const std::vector<std::vector<bool>>& mask,
                    const std::vector<std::vector<int>>& polarity) {
  // Some active pixel must carry different polarity in every pair of classes.
  for (std::size_t a = 0; a < polarity.size(); ++a) {
    for (std::size_t b = a + 1; b < polarity.size(); ++b) {
      bool found = false;
      for (std::size_t p = 0; p < mask.size() && !found; ++p) {
        if (polarity[a][p] == polarity[b][p]) continue;
        found = std::find(mask[p].begin(), mask[p].end(), true) != mask[p].end();
      }
      if (!found) return false;
    }
  }
  return true;
}

void generate_split(const SynthDataset& data, int per_class, RngStream rng, SynthSplit& split) {
  const SynthOptions& o = data.options;
  for (int g = 0; g < per_class; ++g) {
    std::vector<std::vector<bool>> mask;
    do {
      mask = draw_mask(o, rng);
    } while (!mask_separates(mask, data.class_polarity));
    for (int c = 0; c < o.num_classes; ++c) {
      std::vector<EventRecord> events;
      for (int t = 0; t < o.steps; ++t) {
        for (int p = 0; p < o.pixels; ++p) {
          if (!mask[static_cast<std::size_t>(p)][static_cast<std::size_t>(t)]) continue;
          const std::int64_t ts = t * o.period_us + o.period_us / 2;
          events.push_back({ts, p, 0, data.class_polarity[static_cast<std::size_t>(c)][static_cast<std::size_t>(p)]});
        }
      }
      split.events.push_back(std::move(events));
      split.labels.push_back(c);
    }
  }
}

}  // namespace

SynthDataset synth_polarity_task(const SynthOptions& o) {
  if (o.num_classes < 2) throw std::invalid_argument("synth task needs at least 2 classes");
  if (o.pixels < 1 || o.steps < 1) throw std::invalid_argument("synth task geometry must be positive");
  if (!(o.event_rate > 0.0 && o.event_rate <= 1.0)) throw std::invalid_argument("event_rate must lie in (0, 1]");
  SynthDataset data;
  data.options = o;
  RngStream rng(o.seed, 0);

  // Class 0 random; class 1 its negation; further classes random and distinct.
  for (int c = 0; c < o.num_classes; ++c) {
    std::vector<int> pattern(static_cast<std::size_t>(o.pixels));
    do {
      for (int p = 0; p < o.pixels; ++p) {
        pattern[static_cast<std::size_t>(p)] =
            c == 1 ? -data.class_polarity[0][static_cast<std::size_t>(p)] : (rng.uniform() < 0.5 ? -1 : 1);
      }
    } while (std::find(data.class_polarity.begin(), data.class_polarity.end(), pattern) !=
             data.class_polarity.end());
    data.class_polarity.push_back(std::move(pattern));
  }
  generate_split(data, o.train_per_class, RngStream(o.seed, 1), data.train);
  generate_split(data, o.test_per_class, RngStream(o.seed, 2), data.test);
  return data;
}

DatasetManifest synth_manifest(const SynthOptions& o, const std::string& split) {
  DatasetManifest m;
  m.split = split;
  m.period_us = o.period_us;
  m.crop_ms = static_cast<double>(o.steps) * static_cast<double>(o.period_us) / 1000.0;
  m.width = o.pixels;
  m.height = 1;
  m.num_classes = o.num_classes;
  return m;
}

std::pair<fs::path, fs::path> write_synth_dataset(const SynthDataset& data, const fs::path& dir) {
  fs::create_directories(dir / "train");
  fs::create_directories(dir / "test");
  auto write_split = [&](const SynthSplit& split, const std::string& name) {
    DatasetManifest m = synth_manifest(data.options, name);
    for (std::size_t n = 0; n < split.events.size(); ++n) {
      char file[64];
      std::snprintf(file, sizeof(file), "%s/%06zu.csv", name.c_str(), n);
      write_events(dir / file, split.events[n]);
      m.examples.push_back({file, split.labels[n]});
    }
    const fs::path path = dir / (name + "_manifest.json");
    save_manifest(path, m);
    return path;
  };
  return {write_split(data.train, "train"), write_split(data.test, "test")};
}

}  // namespace wta
