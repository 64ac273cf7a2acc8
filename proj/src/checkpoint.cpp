#include "pmcr/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

#include "pmcr/image_io.hpp"

namespace pmcr {

namespace {

struct TensorEntry {
  std::string name;
  Shape4 shape;
  size_t offset = 0;
};

std::string shape_str(const Shape4& s) {
  return std::to_string(s.n) + "," + std::to_string(s.c) + "," + std::to_string(s.h) + "," +
         std::to_string(s.w);
}

Shape4 parse_shape(const std::string& s, const std::string& path) {
  Shape4 out;
  int vals[4];
  if (std::sscanf(s.c_str(), "%d,%d,%d,%d", &vals[0], &vals[1], &vals[2], &vals[3]) != 4)
    throw IoError("corrupt checkpoint (bad shape '" + s + "'): " + path);
  out.n = vals[0];
  out.c = vals[1];
  out.h = vals[2];
  out.w = vals[3];
  return out;
}

struct ParsedCheckpoint {
  ModelConfig config;
  int epoch = 0;
  bool has_optimizer = false;
  int opt_step = 0;
  std::vector<TensorEntry> tensors;
  std::vector<float> payload;
};

ParsedCheckpoint parse(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open checkpoint " + path);

  std::string magic;
  if (!std::getline(f, magic) || magic != kCheckpointMagic)
    throw IoError("not a PMCR checkpoint: " + path);

  ParsedCheckpoint pc;
  size_t tensor_count = 0, payload_bytes = 0;
  std::string line;
  bool saw_end = false;
  while (std::getline(f, line)) {
    if (line == "END") {
      saw_end = true;
      break;
    }
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "tensor") {
      TensorEntry e;
      std::string shape;
      if (!(ls >> e.name >> shape >> e.offset))
        throw IoError("corrupt checkpoint (bad tensor line): " + path);
      e.shape = parse_shape(shape, path);
      pc.tensors.push_back(std::move(e));
      continue;
    }
    const size_t eq = key.find('=');
    if (eq == std::string::npos) throw IoError("corrupt checkpoint header line '" + line + "': " + path);
    const std::string k = key.substr(0, eq), v = key.substr(eq + 1);
    if (k == "hidden_width") pc.config.hidden_width = std::stoi(v);
    else if (k == "groups") pc.config.groups = std::stoi(v);
    else if (k == "ablate_pmr") pc.config.ablate_pmr = v == "1";
    else if (k == "ablate_pcr") pc.config.ablate_pcr = v == "1";
    else if (k == "ablate_csm") pc.config.ablate_csm = v == "1";
    else if (k == "conv_bias") pc.config.conv_bias = v == "1";
    else if (k == "epoch") pc.epoch = std::stoi(v);
    else if (k == "optimizer") pc.has_optimizer = v == "1";
    else if (k == "opt_step") pc.opt_step = std::stoi(v);
    else if (k == "tensor_count") tensor_count = size_t(std::stoul(v));
    else if (k == "payload_bytes") payload_bytes = size_t(std::stoul(v));
    // unknown keys are ignored for forward compatibility
  }
  if (!saw_end) throw IoError("truncated checkpoint (missing header END): " + path);
  if (tensor_count != pc.tensors.size())
    throw IoError("corrupt checkpoint (tensor_count mismatch): " + path);

  pc.payload.resize(payload_bytes / sizeof(float));
  f.read(reinterpret_cast<char*>(pc.payload.data()), std::streamsize(payload_bytes));
  if (size_t(f.gcount()) != payload_bytes)
    throw IoError("truncated checkpoint (payload short): " + path);

  // offsets must tile the payload exactly
  size_t expect = 0;
  for (const auto& e : pc.tensors) {
    if (e.offset != expect)
      throw IoError("corrupt checkpoint (offset of " + e.name + " is " +
                    std::to_string(e.offset) + ", expected " + std::to_string(expect) +
                    "): " + path);
    expect += e.shape.numel() * sizeof(float);
  }
  if (expect != payload_bytes)
    throw IoError("corrupt checkpoint (payload size mismatch): " + path);
  return pc;
}

// Gathers (name, tensor*) of a model in registry order.
std::vector<std::pair<std::string, Tensor*>> model_entries(PmcrNet& model) {
  std::vector<std::pair<std::string, Tensor*>> out;
  model.for_each_parameter([&](const std::string& name, Tensor& t) { out.emplace_back(name, &t); });
  return out;
}

void apply_entries(const ParsedCheckpoint& pc, PmcrNet& model, AdamW* optimizer,
                   const std::string& path) {
  auto entries = model_entries(model);
  const size_t want = entries.size() * (pc.has_optimizer && optimizer != nullptr ? 3 : 1);
  const size_t have_params = entries.size();
  if (pc.tensors.size() < have_params)
    throw IoError("corrupt checkpoint (expected at least " + std::to_string(have_params) +
                  " tensors, found " + std::to_string(pc.tensors.size()) + "): " + path);

  // validate everything before touching the model
  for (size_t i = 0; i < have_params; i++) {
    const TensorEntry& e = pc.tensors[i];
    if (e.name != entries[i].first)
      throw std::invalid_argument("checkpoint tensor '" + e.name + "' at position " +
                                  std::to_string(i) + " does not match model parameter '" +
                                  entries[i].first + "'");
    if (!(e.shape == entries[i].second->shape()))
      throw std::invalid_argument("checkpoint tensor '" + e.name + "' has shape " +
                                  e.shape.str() + " but the model expects " +
                                  entries[i].second->shape().str());
  }
  if (pc.has_optimizer && optimizer != nullptr) {
    if (pc.tensors.size() != want)
      throw IoError("corrupt checkpoint (optimizer moments missing): " + path);
    for (size_t i = 0; i < have_params; i++) {
      const TensorEntry& em = pc.tensors[have_params + i];
      const TensorEntry& ev = pc.tensors[2 * have_params + i];
      if (em.name != "opt.m." + entries[i].first || ev.name != "opt.v." + entries[i].first)
        throw IoError("corrupt checkpoint (unexpected moment tensor '" + em.name + "'): " + path);
      if (em.shape.numel() != entries[i].second->numel() ||
          ev.shape.numel() != entries[i].second->numel())
        throw std::invalid_argument("checkpoint moment for '" + entries[i].first +
                                    "' does not match the parameter size");
    }
    if (optimizer->num_slots() != have_params)
      throw std::invalid_argument("optimizer state has " +
                                  std::to_string(optimizer->num_slots()) +
                                  " slots, model has " + std::to_string(have_params));
  }

  for (size_t i = 0; i < have_params; i++) {
    const TensorEntry& e = pc.tensors[i];
    std::memcpy(entries[i].second->mutable_data(), pc.payload.data() + e.offset / sizeof(float),
                e.shape.numel() * sizeof(float));
  }
  if (pc.has_optimizer && optimizer != nullptr) {
    for (size_t i = 0; i < have_params; i++) {
      const TensorEntry& em = pc.tensors[have_params + i];
      const TensorEntry& ev = pc.tensors[2 * have_params + i];
      std::memcpy(optimizer->moment_m(i).data(), pc.payload.data() + em.offset / sizeof(float),
                  em.shape.numel() * sizeof(float));
      std::memcpy(optimizer->moment_v(i).data(), pc.payload.data() + ev.offset / sizeof(float),
                  ev.shape.numel() * sizeof(float));
    }
    optimizer->set_step_count(pc.opt_step);
  }
}

}  // namespace

void save_checkpoint(PmcrNet& model, const AdamW* optimizer, int epoch,
                     const std::string& path) {
  auto entries = model_entries(model);
  const ModelConfig& cfg = model.config();

  std::ostringstream header;
  header << kCheckpointMagic << "\n";
  header << "hidden_width=" << cfg.hidden_width << "\n";
  header << "groups=" << cfg.groups << "\n";
  header << "ablate_pmr=" << (cfg.ablate_pmr ? 1 : 0) << "\n";
  header << "ablate_pcr=" << (cfg.ablate_pcr ? 1 : 0) << "\n";
  header << "ablate_csm=" << (cfg.ablate_csm ? 1 : 0) << "\n";
  header << "conv_bias=" << (cfg.conv_bias ? 1 : 0) << "\n";
  header << "epoch=" << epoch << "\n";
  header << "optimizer=" << (optimizer != nullptr ? 1 : 0) << "\n";
  if (optimizer != nullptr) header << "opt_step=" << optimizer->step_count() << "\n";

  struct Blob {
    std::string name;
    Shape4 shape;
    const float* data;
    size_t numel;
  };
  std::vector<Blob> blobs;
  for (auto& [name, t] : entries)
    blobs.push_back(Blob{name, t->shape(), t->data(), t->numel()});
  if (optimizer != nullptr) {
    if (optimizer->num_slots() != entries.size())
      throw std::invalid_argument("save_checkpoint: optimizer slots do not match model");
    AdamW* opt = const_cast<AdamW*>(optimizer);
    for (size_t i = 0; i < entries.size(); i++)
      blobs.push_back(Blob{"opt.m." + entries[i].first, Shape4{1, 1, 1, int(opt->moment_m(i).size())},
                           opt->moment_m(i).data(), opt->moment_m(i).size()});
    for (size_t i = 0; i < entries.size(); i++)
      blobs.push_back(Blob{"opt.v." + entries[i].first, Shape4{1, 1, 1, int(opt->moment_v(i).size())},
                           opt->moment_v(i).data(), opt->moment_v(i).size()});
  }

  header << "tensor_count=" << blobs.size() << "\n";
  size_t offset = 0;
  for (const auto& b : blobs) {
    header << "tensor " << b.name << " " << shape_str(b.shape) << " " << offset << "\n";
    offset += b.numel * sizeof(float);
  }
  header << "payload_bytes=" << offset << "\n";
  header << "END\n";

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open " + path + " for writing");
  const std::string hs = header.str();
  f.write(hs.data(), std::streamsize(hs.size()));
  for (const auto& b : blobs)
    f.write(reinterpret_cast<const char*>(b.data), std::streamsize(b.numel * sizeof(float)));
  if (!f) throw IoError("cannot write checkpoint " + path);
}

int load_checkpoint_into(const std::string& path, PmcrNet& model, AdamW* optimizer) {
  ParsedCheckpoint pc = parse(path);
  apply_entries(pc, model, optimizer, path);
  return pc.epoch;
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  ParsedCheckpoint pc = parse(path);
  LoadedCheckpoint lc;
  lc.config = pc.config;
  lc.epoch = pc.epoch;
  lc.has_optimizer = pc.has_optimizer;
  lc.model = PmcrNet(pc.config, /*seed=*/0);
  std::vector<Shape4> shapes;
  for (const auto& [name, shape] : lc.model.named_parameters()) shapes.push_back(shape);
  lc.optimizer = AdamW(shapes);
  apply_entries(pc, lc.model, pc.has_optimizer ? &lc.optimizer : nullptr, path);
  return lc;
}

}  // namespace pmcr
