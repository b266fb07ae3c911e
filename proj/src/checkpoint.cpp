// SPDX-License-Identifier: Apache-2.0
#include "lpf/checkpoint.hpp"

#include <array>
#include <cstring>
#include <map>

#include "binary_io.hpp"
#include "lpf/errors.hpp"

namespace lpf {

namespace {

using detail::ByteReader;
using detail::ByteWriter;

constexpr char kMagic[4] = {'L', 'P', 'F', 'C'};
constexpr std::array<const char*, 4> kSectionTags = {"CONF", "PARM", "OPTM", "RNGS"};

void put_section(ByteWriter& out, const char* tag, const ByteWriter& payload) {
  out.raw(tag, 4);
  out.u64(payload.bytes().size());
  out.raw(payload.bytes());
}

void put_doubles(ByteWriter& w, std::span<const double> values) {
  w.u64(values.size());
  for (double v : values) w.f64(v);
}

std::vector<double> get_doubles(ByteReader& r) {
  const std::uint64_t n = r.u64();
  if (n > r.remaining() / 8) throw TruncatedError("checkpoint: tensor length exceeds section");
  std::vector<double> out(n);
  for (double& v : out) v = r.f64();
  return out;
}

template <class Fn>
void for_each_dropout(LpfModel& model, Fn&& fn) {
  for (LayerStack* s : model.stacks()) {
    for (std::size_t i = 0; i < s->size(); ++i) {
      if (auto* d = std::get_if<Dropout>(&(*s)[i])) fn(s->name() + "." + std::to_string(i), *d);
    }
  }
}

ByteWriter encode_config(const Checkpoint& c) {
  ByteWriter w;
  const ModelConfig& m = c.model_config;
  w.u64(m.input_dim);
  w.u64(m.fen_dim);
  w.u64(m.hidden_dim);
  w.u64(m.num_classes);
  w.f64(m.dropout_rate);
  w.u8(m.cpn_enabled);
  w.u8(m.qcn_enabled);
  w.u8(m.ws_enabled);
  const TrainConfig& t = c.train_config;
  w.f64(t.learning_rate);
  w.f64(t.weight_decay);
  w.u64(t.batch_size);
  w.u64(t.epochs);
  w.u64(t.seed);
  w.f64(t.loss_weights.alpha);
  w.f64(t.loss_weights.beta);
  w.u8(t.deterministic);
  w.f64(t.train_fraction);
  w.u64(c.epoch);
  return w;
}

void decode_config(ByteReader& r, Checkpoint& c) {
  ModelConfig& m = c.model_config;
  m.input_dim = r.u64();
  m.fen_dim = r.u64();
  m.hidden_dim = r.u64();
  m.num_classes = r.u64();
  m.dropout_rate = r.f64();
  m.cpn_enabled = r.u8() != 0;
  m.qcn_enabled = r.u8() != 0;
  m.ws_enabled = r.u8() != 0;
  TrainConfig& t = c.train_config;
  t.learning_rate = r.f64();
  t.weight_decay = r.f64();
  t.batch_size = r.u64();
  t.epochs = r.u64();
  t.seed = r.u64();
  t.loss_weights.alpha = r.f64();
  t.loss_weights.beta = r.f64();
  t.deterministic = r.u8() != 0;
  t.train_fraction = r.f64();
  c.epoch = r.u64();
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
  LpfModel model = ckpt.model;

  ByteWriter params;
  const auto all = model.all_params();
  params.u64(all.size());
  for (const Param& p : all) {
    params.str(p.name);
    put_doubles(params, p.value);
  }

  ByteWriter optim;
  const AdamState& a = ckpt.optimizer;
  optim.u64(a.step);
  optim.f64(a.beta1);
  optim.f64(a.beta2);
  optim.f64(a.epsilon);
  optim.u64(a.names.size());
  for (std::size_t i = 0; i < a.names.size(); ++i) {
    optim.str(a.names[i]);
    put_doubles(optim, a.first_moment[i]);
    put_doubles(optim, a.second_moment[i]);
  }

  ByteWriter rngs;
  std::vector<std::pair<std::string, std::string>> states;
  for_each_dropout(model, [&](const std::string& name, Dropout& d) {
    states.emplace_back(name, d.rng().serialize());
  });
  rngs.u64(states.size());
  for (const auto& [name, state] : states) {
    rngs.str(name);
    rngs.str(state);
  }

  ByteWriter out;
  out.raw(kMagic, 4);
  out.u32(kCheckpointVersion);
  out.u32(static_cast<std::uint32_t>(kSectionTags.size()));
  put_section(out, kSectionTags[0], encode_config(ckpt));
  put_section(out, kSectionTags[1], params);
  put_section(out, kSectionTags[2], optim);
  put_section(out, kSectionTags[3], rngs);
  out.u64(detail::fnv1a64(out.bytes()));
  return std::move(out.bytes());
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  ByteReader header(bytes, "checkpoint");
  const auto magic = header.raw(4);
  if (std::memcmp(magic.data(), kMagic, 4) != 0) {
    throw FormatError("checkpoint: bad magic (not an LPFC file)");
  }
  const std::uint32_t version = header.u32();
  if (version != kCheckpointVersion) {
    throw VersionError("checkpoint: unsupported version " + std::to_string(version) +
                       " (expected " + std::to_string(kCheckpointVersion) + ")");
  }
  const std::uint32_t count = header.u32();

  // Structural walk first so truncation is reported as such, then checksum.
  std::map<std::string, std::span<const std::uint8_t>> sections;
  for (std::uint32_t s = 0; s < count; ++s) {
    const auto tag = header.raw(4);
    const std::uint64_t len = header.u64();
    if (len > header.remaining()) {
      throw TruncatedError("checkpoint: section '" + std::string(tag.begin(), tag.end()) +
                           "' extends past end of file");
    }
    sections[std::string(tag.begin(), tag.end())] = header.raw(len);
  }
  const std::size_t body_len = header.position();
  if (header.remaining() < 8) throw TruncatedError("checkpoint: missing trailing checksum");
  const std::uint64_t stored = header.u64();
  if (header.remaining() != 0) throw FormatError("checkpoint: trailing bytes after checksum");
  if (stored != detail::fnv1a64(bytes.first(body_len))) {
    throw ChecksumError("checkpoint: checksum mismatch (file corrupted)");
  }

  for (const char* tag : kSectionTags) {
    if (!sections.contains(tag)) {
      throw FormatError(std::string("checkpoint: missing section ") + tag);
    }
  }

  Checkpoint c;
  {
    ByteReader r(sections["CONF"], "checkpoint CONF");
    decode_config(r, c);
  }
  try {
    c.model_config.validate();
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("checkpoint: invalid model config: ") + e.what());
  }
  c.model = LpfModel(c.model_config, 0);

  {
    ByteReader r(sections["PARM"], "checkpoint PARM");
    auto params = c.model.all_params();
    const std::uint64_t n = r.u64();
    if (n != params.size()) {
      throw FormatError("checkpoint: " + std::to_string(n) + " parameter tensors, model has " +
                        std::to_string(params.size()));
    }
    for (Param& p : params) {
      const std::string name = r.str();
      const auto values = get_doubles(r);
      if (name != p.name || values.size() != p.value.size()) {
        throw FormatError("checkpoint: parameter '" + name + "' does not match model slot '" +
                          p.name + "'");
      }
      std::copy(values.begin(), values.end(), p.value.begin());
    }
  }

  {
    ByteReader r(sections["OPTM"], "checkpoint OPTM");
    AdamState& a = c.optimizer;
    a.step = r.u64();
    a.beta1 = r.f64();
    a.beta2 = r.f64();
    a.epsilon = r.f64();
    const std::uint64_t n = r.u64();
    for (std::uint64_t i = 0; i < n; ++i) {
      a.names.push_back(r.str());
      a.first_moment.push_back(get_doubles(r));
      a.second_moment.push_back(get_doubles(r));
    }
  }

  {
    ByteReader r(sections["RNGS"], "checkpoint RNGS");
    std::map<std::string, std::string> states;
    const std::uint64_t n = r.u64();
    for (std::uint64_t i = 0; i < n; ++i) {
      std::string name = r.str();
      states[name] = r.str();
    }
    for_each_dropout(c.model, [&](const std::string& name, Dropout& d) {
      const auto it = states.find(name);
      if (it == states.end()) throw FormatError("checkpoint: no generator state for " + name);
      d.set_rng(Rng::deserialize(it->second));
    });
  }
  return c;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  detail::write_file_bytes(path, encode_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(detail::read_file_bytes(path));
}

}  // namespace lpf
