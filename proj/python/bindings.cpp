#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <memory>
#include <string>
#include <vector>

#include "demo/bench.hpp"
#include "demo/collective.hpp"
#include "demo/compaction.hpp"
#include "demo/config.hpp"
#include "demo/dct.hpp"
#include "demo/harness.hpp"

namespace py = pybind11;
using namespace demo;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

TensorF64 to_tensor(const Array& a) {
  Shape shape(a.shape(), a.shape() + a.ndim());
  if (shape.empty()) shape = {1};
  return TensorF64(shape, std::vector<double>(a.data(), a.data() + a.size()));
}

Array to_array(const TensorF64& t) {
  Array out(std::vector<py::ssize_t>(t.shape().begin(), t.shape().end()));
  std::copy(t.values().begin(), t.values().end(), out.mutable_data());
  return out;
}

template <class T>
py::array_t<T> vector_array(const std::vector<T>& v) {
  py::array_t<T> out(static_cast<py::ssize_t>(v.size()));
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

MergeRule merge_rule(const std::string& name) {
  if (name == "contributor") return MergeRule::kContributorAverage;
  if (name == "world") return MergeRule::kWorldAverage;
  throw UsageError("merge rule must be 'contributor' or 'world', got '" + name + "'");
}

const BasisCache& cache() {
  static const BasisCache instance;
  return instance;
}

py::dict traffic_dict(const TrafficEstimate& t) {
  py::dict d;
  d["payload_bytes"] = t.payload_bytes;
  d["frame_bytes"] = t.frame_bytes;
  d["bytes_sent"] = t.bytes_sent;
  d["bytes_received"] = t.bytes_received;
  return d;
}

py::object optional_value(const std::optional<double>& v) {
  return v ? py::object(py::float_(*v)) : py::none();
}

py::dict run(const std::string& config_text, const std::vector<std::string>& overrides) {
  auto cfg = parse_config(config_text);
  for (const auto& o : overrides) apply_override(cfg, o);
  cfg.validate();
  RunMetrics m;
  {
    py::gil_scoped_release release;
    m = run_experiment(cfg);
  }
  py::dict columns;
  std::vector<std::uint64_t> step, payload, sent;
  std::vector<double> train_loss, grad_norm, sync_norm;
  py::list full_loss, heldout_loss, heldout_acc;
  for (const auto& r : m.rows) {
    step.push_back(r.step);
    train_loss.push_back(r.train_loss);
    grad_norm.push_back(r.grad_norm);
    sync_norm.push_back(r.sync_norm);
    payload.push_back(r.payload_bytes);
    sent.push_back(r.bytes_sent);
    full_loss.append(optional_value(r.full_loss));
    heldout_loss.append(optional_value(r.heldout_loss));
    heldout_acc.append(optional_value(r.heldout_acc));
  }
  columns["step"] = vector_array(step);
  columns["train_loss"] = vector_array(train_loss);
  columns["grad_norm"] = vector_array(grad_norm);
  columns["sync_norm"] = vector_array(sync_norm);
  columns["payload_bytes"] = vector_array(payload);
  columns["bytes_sent"] = vector_array(sent);
  columns["full_loss"] = full_loss;
  columns["heldout_loss"] = heldout_loss;
  columns["heldout_acc"] = heldout_acc;

  py::dict out;
  out["metrics"] = columns;
  out["final_loss"] = m.final_loss();
  out["dense_bytes"] = m.dense_bytes;
  out["analytic_payload_bytes"] = m.analytic_payload_bytes;
  out["params_consistent"] = m.params_consistent;
  out["gather_digests"] = vector_array(m.gather_digests);
  py::list params;
  for (const auto& p : m.final_params) params.append(to_array(p));
  out["final_params"] = params;
  out["config"] = to_config_text(cfg);
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Decoupled momentum optimization: DCT compaction, sync payloads and the training harness";

  auto error = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ConfigError>(m, "ConfigError", error.ptr());
  py::register_exception<UsageError>(m, "UsageError", error.ptr());
  py::register_exception<MalformedPayload>(m, "MalformedPayload", error.ptr());
  py::register_exception<TransportError>(m, "TransportError", error.ptr());
  py::register_exception<ShapeMismatch>(m, "ShapeMismatch", error.ptr());
  py::register_exception<NonDivisible>(m, "NonDivisible", error.ptr());
  py::register_exception<InvalidK>(m, "InvalidK", error.ptr());
  py::register_exception<GeometryMismatch>(m, "GeometryMismatch", error.ptr());
  py::register_exception<KMismatch>(m, "KMismatch", error.ptr());

  m.def(
      "build_basis",
      [](std::size_t n) {
        const auto b = build_basis(n);
        Array fwd({n, n}), inv({n, n});
        std::copy(b.forward.begin(), b.forward.end(), fwd.mutable_data());
        std::copy(b.inverse.begin(), b.inverse.end(), inv.mutable_data());
        return py::make_tuple(fwd, inv);
      },
      py::arg("n"), "Orthonormal DCT-II matrix of size n and its inverse.");

  m.def(
      "dct_forward", [](const Array& a) { return to_array(dct_forward_chunk(to_tensor(a), cache())); },
      py::arg("chunk"), "Separable orthonormal DCT of one chunk.");
  m.def(
      "dct_inverse", [](const Array& a) { return to_array(dct_inverse_chunk(to_tensor(a), cache())); },
      py::arg("coeffs"), "Inverse of dct_forward.");

  m.def(
      "clamp_chunk_shape",
      [](const Shape& shape, std::size_t s) { return clamp_chunk_shape(shape, s).chunk_shape(); },
      py::arg("shape"), py::arg("s"), "Per dimension, the largest divisor of the edge that is <= s.");

  py::class_<CompressedComponents>(m, "Components")
      .def_readonly("tensor_id", &CompressedComponents::tensor_id)
      .def_readonly("k", &CompressedComponents::k)
      .def_property_readonly("tensor_shape",
                             [](const CompressedComponents& c) { return c.geometry.tensor_shape(); })
      .def_property_readonly("chunk_shape",
                             [](const CompressedComponents& c) { return c.geometry.chunk_shape(); })
      .def_property_readonly("shape", &CompressedComponents::shape)
      .def_property_readonly("freq", [](const CompressedComponents& c) { return vector_array(c.freq); })
      .def_property_readonly("ampl", [](const CompressedComponents& c) { return vector_array(c.ampl); })
      .def("__eq__", [](const CompressedComponents& a, const CompressedComponents& b) { return a == b; });

  m.def(
      "extract_fast_components",
      [](const Array& momentum, std::size_t s, std::size_t k, std::uint32_t tensor_id) {
        const auto t = to_tensor(momentum);
        const auto g = clamp_chunk_shape(t.shape(), s);
        auto ex = extract_fast_components(t, g, effective_topk(k, g), cache(), tensor_id);
        return py::make_tuple(to_array(ex.fast), ex.components);
      },
      py::arg("momentum"), py::arg("s"), py::arg("k"), py::arg("tensor_id") = 0,
      "Top-k DCT components per chunk; returns (q, components).");

  m.def(
      "merge_and_reconstruct",
      [](const std::vector<CompressedComponents>& all, const std::string& rule) {
        if (all.empty()) throw UsageError("merge needs at least one worker's components");
        return to_array(merge_and_reconstruct<double>(all, all.front().geometry, cache(), merge_rule(rule)));
      },
      py::arg("components"), py::arg("rule") = "contributor",
      "Averages duplicate bins across workers and reconstructs the dense tensor.");

  m.def(
      "serialize",
      [](std::uint16_t rank, std::uint32_t step, const std::vector<CompressedComponents>& cs) {
        SyncPayload p{rank, step, {}};
        for (const auto& c : cs) p.entries.push_back(to_entry(c));
        const auto bytes = serialize(p);
        return py::bytes(reinterpret_cast<const char*>(bytes.data()), bytes.size());
      },
      py::arg("rank"), py::arg("step"), py::arg("components"), "Wire frame for one worker's payload.");

  m.def(
      "deserialize",
      [](const py::bytes& frame) {
        const std::string s = frame;
        const auto p = deserialize(std::span(reinterpret_cast<const std::uint8_t*>(s.data()), s.size()));
        py::dict d;
        d["rank"] = p.rank;
        d["step"] = p.step;
        py::list entries;
        for (const auto& e : p.entries) {
          py::dict ed;
          ed["tensor_id"] = e.tensor_id;
          ed["k"] = e.k;
          ed["chunk_count"] = e.chunk_count;
          ed["index_width"] = e.index_width;
          ed["freq"] = vector_array(e.freq);
          ed["ampl"] = vector_array(e.ampl);
          entries.append(ed);
        }
        d["entries"] = entries;
        return d;
      },
      py::arg("frame"), "Parses a wire frame; raises MalformedPayload on bad input.");

  m.def(
      "bytes_per_step",
      [](const std::vector<Shape>& shapes, std::size_t s, std::size_t k, int world_size) {
        std::vector<ChunkGeometry> gs;
        for (const auto& sh : shapes) gs.push_back(clamp_chunk_shape(sh, s));
        auto d = traffic_dict(bytes_per_step(gs, k, world_size));
        d["dense_bytes"] = dense_gradient_bytes(gs);
        return d;
      },
      py::arg("shapes"), py::arg("s"), py::arg("k"), py::arg("world_size"),
      "Analytic per-worker traffic of one step.");

  m.def(
      "bench_compaction",
      [](const std::string& signal, double rho, std::size_t length, std::size_t chunk, std::size_t k,
         std::size_t trials, std::uint64_t seed) {
        const auto r = bench_compaction({signal, rho, length, chunk, k, trials, seed});
        py::dict d;
        d["dct_fraction"] = r.dct_fraction;
        d["identity_fraction"] = r.identity_fraction;
        d["dct_sem"] = r.dct_sem;
        d["identity_sem"] = r.identity_sem;
        d["chunk"] = r.chunk;
        d["k"] = r.k;
        return d;
      },
      py::arg("signal") = "ar1", py::arg("rho") = 0.95, py::arg("length") = 64, py::arg("chunk") = 64,
      py::arg("k") = 8, py::arg("trials") = 1000, py::arg("seed") = 0,
      "Mean top-k energy fraction in the DCT and identity bases.");

  m.def("run_experiment", &run, py::arg("config") = std::string(),
        py::arg("overrides") = std::vector<std::string>{},
        "Trains from config text plus `section.key=value` overrides.");
}
