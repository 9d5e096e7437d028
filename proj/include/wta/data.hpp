#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "wta/mathcore.hpp"

namespace wta {

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One camera event. Timestamps are integer microseconds.
struct EventRecord {
  std::int64_t timestamp_us = 0;
  int x = 0;
  int y = 0;
  int polarity = 1;  // -1 or +1

  friend bool operator==(const EventRecord&, const EventRecord&) = default;
};

/// Parses the text event format: one `timestamp_us,x,y,polarity` per line,
/// `#` starts a comment, blank lines are skipped. Result is sorted by
/// timestamp (stable). Throws DataError naming the offending line.
std::vector<EventRecord> load_events(const std::filesystem::path& path);
std::vector<EventRecord> parse_events(const std::string& text);
void write_events(const std::filesystem::path& path, const std::vector<EventRecord>& events);

/// T x height x width grid of integers, row-major per frame.
struct FrameStack {
  int steps = 0;
  int width = 0;
  int height = 0;
  std::vector<int> values;

  FrameStack() = default;
  FrameStack(int steps, int width, int height);

  int pixels() const { return width * height; }
  int& at(int t, int x, int y) { return values[index(t, x, y)]; }
  int at(int t, int x, int y) const { return values[index(t, x, y)]; }
  int& pixel(int t, int p) { return values[static_cast<std::size_t>(t) * pixels() + p]; }
  int pixel(int t, int p) const { return values[static_cast<std::size_t>(t) * pixels() + p]; }

  friend bool operator==(const FrameStack&, const FrameStack&) = default;

 private:
  std::size_t index(int t, int x, int y) const {
    return (static_cast<std::size_t>(t) * height + y) * width + x;
  }
};

/// Sum of polarities per pixel per window [k p, (k+1) p), k = 0..T-1.
/// Events outside the T windows are cropped; negative timestamps dropped.
FrameStack accumulate_events(const std::vector<EventRecord>& events, std::int64_t period_us,
                             int steps, int width, int height);

/// Elementwise sign, with sign(0) = 0.
FrameStack sign_frames(const FrameStack& sums);

/// sign(accumulate_events(...)): values in {-1, 0, +1}.
FrameStack bin_events(const std::vector<EventRecord>& events, std::int64_t period_us, int steps,
                      int width, int height);

/// Sums factor x factor blocks. Applied to pre-sign sums it implements
/// pooling-before-sign; dimensions must be divisible by `factor`.
FrameStack spatial_pool(const FrameStack& frames, int factor = 2);

/// Keeps the centered out_w x out_h window, shifting coordinates.
std::vector<EventRecord> center_crop(const std::vector<EventRecord>& events, int in_w, int in_h,
                                     int out_w, int out_h);

/// T x N matrix of spike symbols with one C per input circuit.
struct EncodedSequence {
  int steps = 0;
  std::vector<int> sizes;             // C per circuit
  std::vector<SpikeSymbol> symbols;   // row-major [t * N + n]
  int label = 0;

  int circuits() const { return static_cast<int>(sizes.size()); }
  SpikeSymbol at(int t, int n) const { return symbols[static_cast<std::size_t>(t) * sizes.size() + n]; }
  SpikeSymbol& at(int t, int n) { return symbols[static_cast<std::size_t>(t) * sizes.size() + n]; }
  void validate() const;

  friend bool operator==(const EncodedSequence&, const EncodedSequence&) = default;
};

enum class Encoding { Wta, Unsigned, PerSign };

Encoding parse_encoding(const std::string& name);
std::string to_string(Encoding encoding);

/// One C=2 circuit per pixel: -1 -> unit 1, +1 -> unit 2, 0 -> silence.
EncodedSequence encode_wta(const FrameStack& frames, int label = 0);
/// One C=1 circuit per pixel spiking on any event.
EncodedSequence encode_unsigned(const FrameStack& frames, int label = 0);
/// Two C=1 circuits per pixel (circuit 2p on -1, circuit 2p+1 on +1).
EncodedSequence encode_per_sign(const FrameStack& frames, int label = 0);
EncodedSequence encode(const FrameStack& frames, Encoding encoding, int label = 0);
/// Inverse of encode_wta.
FrameStack decode_wta(const EncodedSequence& seq, int width, int height);

/// Number of input circuits and their C for an encoding of `pixels` pixels.
std::vector<int> encoded_sizes(Encoding encoding, int pixels);

/// Flat binary cache layout (little endian):
///   "WSEQ" | u32 T | u32 N | N x u8 C | i32 label | T*N x u8 symbol
/// with symbol 0 = silence and c = unit index.
void write_encoded(const std::filesystem::path& path, const EncodedSequence& seq);
EncodedSequence read_encoded(const std::filesystem::path& path);

struct ManifestEntry {
  std::string file;
  int label = 0;
};

/// Dataset listing, stored as JSON. Example paths are relative to the
/// manifest's directory unless absolute.
struct DatasetManifest {
  std::string split = "train";
  std::int64_t period_us = 1000;
  double crop_ms = 0.0;
  int width = 0;
  int height = 0;
  int num_classes = 2;
  int pool = 1;                    // spatial pooling factor
  std::optional<int> crop_width;   // center crop applied before pooling
  std::optional<int> crop_height;
  std::vector<ManifestEntry> examples;
  std::filesystem::path base_dir;  // set by load_manifest

  int steps() const;
  void validate() const;
};

DatasetManifest load_manifest(const std::filesystem::path& path);
void save_manifest(const std::filesystem::path& path, const DatasetManifest& manifest);

/// Center crop, binning to pre-sign sums, pooling, sign.
FrameStack preprocess(const std::vector<EventRecord>& events, const DatasetManifest& manifest);

/// Loads, preprocesses and encodes every manifest entry (parallel per
/// example; order preserved).
std::vector<EncodedSequence> load_dataset(const DatasetManifest& manifest, Encoding encoding);

struct SynthOptions {
  int pixels = 16;
  int steps = 50;
  int num_classes = 2;
  int train_per_class = 500;
  int test_per_class = 100;
  double event_rate = 0.15;   // probability a pixel is active at a step
  double jitter_prob = 0.2;   // probability an event is shifted by +-1 step
  std::int64_t period_us = 1000;
  std::uint64_t seed = 1;
};

/// In-memory synthetic dataset: event lists plus labels.
struct SynthSplit {
  std::vector<std::vector<EventRecord>> events;
  std::vector<int> labels;
};

struct SynthDataset {
  SynthOptions options;
  std::vector<std::vector<int>> class_polarity;  // per class, per pixel (+-1)
  SynthSplit train;
  SynthSplit test;
};

/// Polarity task: examples are generated in groups of `num_classes`, one per
/// class, sharing one jittered timing mask. Classes differ only by their
/// per-pixel polarity pattern, so the unsigned encodings inside a group are
/// identical. Deterministic in the seed.
SynthDataset synth_polarity_task(const SynthOptions& options);

/// Writes events files plus train/test manifests under `dir`; returns the
/// two manifest paths.
std::pair<std::filesystem::path, std::filesystem::path> write_synth_dataset(
    const SynthDataset& data, const std::filesystem::path& dir);

/// Manifest describing the synthetic geometry (width = pixels, height = 1).
DatasetManifest synth_manifest(const SynthOptions& options, const std::string& split);

}  // namespace wta
